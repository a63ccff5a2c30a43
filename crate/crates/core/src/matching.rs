//! Max-min (bottleneck) bipartite matching between clients and channels.
//!
//! Every channel must carry exactly one client and every client uses at most
//! one channel, so with `U >= N` a feasible assignment is an injective map
//! from channels to clients. The objective is the smallest edge weight among
//! the matched pairs.
//!
//! Unmatched clients do not enter the objective. Counting them as zero would
//! make every assignment worth zero whenever `U > N`, which is also why the
//! pruning procedure below only ever looks at matched edges.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Weight of a client/channel pair that has never been tried. It compares
/// above every finite weight.
pub const UNEXPLORED: f64 = f64::INFINITY;

/// Largest number of assignments [`brute_force_optimal`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Dense `clients x channels` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    clients: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RewardMatrix {
    pub fn new(clients: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || clients < channels {
            return Err(invalid(format!(
                "reward matrix needs clients >= channels >= 1, got {clients}x{channels}"
            )));
        }
        if data.len() != clients * channels {
            return Err(invalid(format!(
                "expected {} weights, got {}",
                clients * channels,
                data.len()
            )));
        }
        if data.iter().any(|w| w.is_nan()) {
            return Err(invalid("reward matrix contains NaN"));
        }
        Ok(Self {
            clients,
            channels,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != channels) {
            return Err(invalid("ragged reward matrix"));
        }
        Self::new(rows.len(), channels, rows.concat())
    }

    pub fn filled(clients: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(clients, channels, vec![value; clients * channels])
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, client: usize, channel: usize) -> f64 {
        self.data[client * self.channels + channel]
    }

    pub fn set(&mut self, client: usize, channel: usize, value: f64) {
        assert!(!value.is_nan());
        self.data[client * self.channels + channel] = value;
    }

    pub fn row(&self, client: usize) -> &[f64] {
        &self.data[client * self.channels..(client + 1) * self.channels]
    }
}

/// Channel-to-client map. Entry `j` is the client transmitting on channel `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    clients: usize,
    channel_to_client: Vec<usize>,
}

impl Assignment {
    /// Builds an assignment and checks C1-C3: every channel carries exactly
    /// one existing client and no client holds two channels.
    pub fn new(clients: usize, channel_to_client: Vec<usize>) -> Result<Self> {
        let a = Self {
            clients,
            channel_to_client,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.clients];
        for (j, &i) in self.channel_to_client.iter().enumerate() {
            if i >= self.clients {
                return Err(invalid(format!(
                    "channel {j} assigned to client {i}, only {} clients",
                    self.clients
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!("client {i} holds more than one channel")));
            }
        }
        Ok(())
    }

    pub fn clients(&self) -> usize {
        self.clients
    }

    pub fn channels(&self) -> usize {
        self.channel_to_client.len()
    }

    pub fn client_on(&self, channel: usize) -> usize {
        self.channel_to_client[channel]
    }

    pub fn channel_of(&self, client: usize) -> Option<usize> {
        self.channel_to_client.iter().position(|&i| i == client)
    }

    pub fn is_matched(&self, client: usize) -> bool {
        self.channel_to_client.contains(&client)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.channel_to_client
    }

    /// `(client, channel)` pairs in channel order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.channel_to_client
            .iter()
            .enumerate()
            .map(|(j, &i)| (i, j))
    }

    /// Binary `clients x channels` selection matrix.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.channels()]; self.clients];
        for (i, j) in self.pairs() {
            m[i][j] = 1;
        }
        m
    }
}

/// Smallest weight among matched pairs.
pub fn min_matched_edge(matrix: &RewardMatrix, assignment: &Assignment) -> Result<f64> {
    if assignment.channels() == 0 {
        return Err(Error::EmptyAssignment);
    }
    check_shape(matrix, assignment)?;
    Ok(assignment
        .pairs()
        .map(|(i, j)| matrix.get(i, j))
        .fold(f64::INFINITY, f64::min))
}

fn check_shape(matrix: &RewardMatrix, assignment: &Assignment) -> Result<()> {
    if matrix.clients() != assignment.clients() || matrix.channels() != assignment.channels() {
        return Err(invalid(format!(
            "assignment is {}x{} but matrix is {}x{}",
            assignment.clients(),
            assignment.channels(),
            matrix.clients(),
            matrix.channels()
        )));
    }
    Ok(())
}

/// Number of feasible assignments, `U! / (U - N)!`.
pub fn assignment_count(clients: usize, channels: usize) -> u128 {
    ((clients - channels + 1)..=clients)
        .map(|k| k as u128)
        .try_fold(1u128, |acc, k| acc.checked_mul(k))
        .unwrap_or(u128::MAX)
}

/// Calls `f` on every feasible assignment, in lexicographic order of the
/// channel-to-client vector.
pub fn for_each_assignment(clients: usize, channels: usize, mut f: impl FnMut(&[usize])) {
    fn rec(target: usize, cur: &mut Vec<usize>, used: &mut [bool], f: &mut dyn FnMut(&[usize])) {
        if cur.len() == target {
            f(cur);
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(target, cur, used, f);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut cur = Vec::with_capacity(channels);
    let mut used = vec![false; clients];
    rec(channels, &mut cur, &mut used, &mut f);
}

/// Exhaustive search. Ties go to the lexicographically first assignment.
pub fn brute_force_optimal(matrix: &RewardMatrix) -> Result<(Assignment, f64)> {
    let (u, n) = (matrix.clients(), matrix.channels());
    let count = assignment_count(u, n);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_assignment(u, n, |a| {
        let v = a
            .iter()
            .enumerate()
            .map(|(j, &i)| matrix.get(i, j))
            .fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((a.to_vec(), v));
        }
    });
    let (a, v) = best.expect("at least one assignment exists");
    Ok((Assignment::new(u, a)?, v))
}

/// Kuhn augmenting-path search from `channel` over edges still marked alive
/// (`alive` is row-major `clients x channels`).
fn augment(
    channel: usize,
    alive: &[bool],
    clients: usize,
    client_to_channel: &mut [Option<usize>],
    channel_to_client: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    let channels = channel_to_client.len();
    for i in 0..clients {
        if visited[i] || !alive[i * channels + channel] {
            continue;
        }
        visited[i] = true;
        let free = match client_to_channel[i] {
            None => true,
            Some(other) => augment(
                other,
                alive,
                clients,
                client_to_channel,
                channel_to_client,
                visited,
            ),
        };
        if free {
            client_to_channel[i] = Some(channel);
            channel_to_client[channel] = Some(i);
            return true;
        }
    }
    false
}

/// Hopcroft-Karp maximum matching with channels on the left side.
///
/// Returns the matching as `channel -> Option<client>`.
pub fn maximum_matching(
    clients: usize,
    channels: usize,
    alive: impl Fn(usize, usize) -> bool,
) -> Vec<Option<usize>> {
    const INF: usize = usize::MAX;
    let adj: Vec<Vec<usize>> = (0..channels)
        .map(|j| (0..clients).filter(|&i| alive(i, j)).collect())
        .collect();
    let mut ch_match: Vec<Option<usize>> = vec![None; channels];
    let mut cl_match: Vec<Option<usize>> = vec![None; clients];
    let mut dist = vec![INF; channels];

    loop {
        // BFS layering from free channels
        let mut queue = std::collections::VecDeque::new();
        for j in 0..channels {
            if ch_match[j].is_none() {
                dist[j] = 0;
                queue.push_back(j);
            } else {
                dist[j] = INF;
            }
        }
        let mut found = false;
        while let Some(j) = queue.pop_front() {
            for &i in &adj[j] {
                match cl_match[i] {
                    None => found = true,
                    Some(k) if dist[k] == INF => {
                        dist[k] = dist[j] + 1;
                        queue.push_back(k);
                    }
                    _ => {}
                }
            }
        }
        if !found {
            break;
        }

        fn dfs(
            j: usize,
            adj: &[Vec<usize>],
            dist: &mut [usize],
            ch_match: &mut [Option<usize>],
            cl_match: &mut [Option<usize>],
        ) -> bool {
            for idx in 0..adj[j].len() {
                let i = adj[j][idx];
                let ok = match cl_match[i] {
                    None => true,
                    Some(k) => dist[k] == dist[j] + 1 && dfs(k, adj, dist, ch_match, cl_match),
                };
                if ok {
                    ch_match[j] = Some(i);
                    cl_match[i] = Some(j);
                    return true;
                }
            }
            dist[j] = usize::MAX;
            false
        }

        let mut progressed = false;
        for j in 0..channels {
            if ch_match[j].is_none() && dfs(j, &adj, &mut dist, &mut ch_match, &mut cl_match) {
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    ch_match
}

/// Optimal max-min matching by edge pruning.
///
/// Edges are deleted in increasing weight order. Deleting an edge that is
/// not part of the current perfect matching leaves it perfect; deleting a
/// matched edge frees one channel, which is re-matched by a single augmenting
/// path search. The first deletion that cannot be repaired ends the search
/// and the matching from just before it is returned.
pub fn optimal_matching(matrix: &RewardMatrix) -> Assignment {
    let (u, n) = (matrix.clients(), matrix.channels());
    let mut order: Vec<(usize, usize)> = (0..u).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    order.sort_by(|&(a, b), &(c, d)| matrix.get(a, b).total_cmp(&matrix.get(c, d)));

    let mut alive = vec![true; u * n];
    let initial = maximum_matching(u, n, |_, _| true);
    let mut ch_match: Vec<Option<usize>> = initial;
    let mut cl_match: Vec<Option<usize>> = vec![None; u];
    for (j, m) in ch_match.iter().enumerate() {
        cl_match[m.expect("complete bipartite graph has a perfect matching")] = Some(j);
    }

    let mut visited = vec![false; u];
    for (i, j) in order {
        alive[i * n + j] = false;
        if ch_match[j] != Some(i) {
            continue;
        }
        ch_match[j] = None;
        cl_match[i] = None;
        visited.fill(false);
        if !augment(j, &alive, u, &mut cl_match, &mut ch_match, &mut visited) {
            ch_match[j] = Some(i);
            break;
        }
    }
    let a: Vec<usize> = ch_match.into_iter().map(Option::unwrap).collect();
    Assignment {
        clients: u,
        channel_to_client: a,
    }
}

/// Optimal max-min matching by binary search over the distinct weights,
/// checking each threshold with Hopcroft-Karp.
pub fn optimal_matching_threshold(matrix: &RewardMatrix) -> Assignment {
    let (u, n) = (matrix.clients(), matrix.channels());
    let mut weights: Vec<f64> = (0..u)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| matrix.get(i, j))
        .collect();
    weights.sort_by(f64::total_cmp);
    weights.dedup();

    let perfect = |theta: f64| -> Option<Vec<usize>> {
        let m = maximum_matching(u, n, |i, j| matrix.get(i, j) >= theta);
        m.into_iter().collect()
    };
    // weights[lo] is always feasible (it is the global minimum)
    let (mut lo, mut hi) = (0usize, weights.len() - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if perfect(weights[mid]).is_some() {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Assignment {
        clients: u,
        channel_to_client: perfect(weights[lo]).expect("threshold is feasible"),
    }
}

/// Greedy matching in a fixed client order: each client takes its best
/// remaining channel until the channels run out. Ties between channels are
/// broken uniformly at random.
pub fn greedy_with_order<R: Rng + ?Sized>(
    matrix: &RewardMatrix,
    order: &[usize],
    rng: &mut R,
) -> Result<Assignment> {
    let (u, n) = (matrix.clients(), matrix.channels());
    if order.len() != u {
        return Err(invalid(format!("order has {} entries, expected {u}", order.len())));
    }
    let mut seen = vec![false; u];
    for &i in order {
        if i >= u || std::mem::replace(&mut seen[i], true) {
            return Err(invalid("order is not a permutation of the clients"));
        }
    }

    let mut free = vec![true; n];
    let mut out = vec![usize::MAX; n];
    let mut ties = Vec::with_capacity(n);
    for &i in order.iter().take(n) {
        let row = matrix.row(i);
        let best = (0..n)
            .filter(|&j| free[j])
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        ties.clear();
        ties.extend((0..n).filter(|&j| free[j] && row[j] == best));
        let j = *ties.choose(rng).expect("a free channel remains");
        free[j] = false;
        out[j] = i;
    }
    Ok(Assignment {
        clients: u,
        channel_to_client: out,
    })
}

/// One GMBA round: greedy matching in a uniformly random order, kept only if
/// it beats the previous assignment under the current weights.
pub fn gmba_step<R: Rng + ?Sized>(
    matrix: &RewardMatrix,
    previous: Option<&Assignment>,
    rng: &mut R,
) -> Assignment {
    let mut order: Vec<usize> = (0..matrix.clients()).collect();
    order.shuffle(rng);
    let candidate = greedy_with_order(matrix, &order, rng).expect("order is a permutation");
    match previous {
        Some(prev) if prev.clients() == matrix.clients() && prev.channels() == matrix.channels() => {
            let old = min_matched_edge(matrix, prev).expect("shape checked");
            let new = min_matched_edge(matrix, &candidate).expect("shape checked");
            if new > old {
                candidate
            } else {
                prev.clone()
            }
        }
        _ => candidate,
    }
}

/// Uniformly random feasible assignment: a random ordered `N`-subset of the
/// clients, the `j`-th of which goes on channel `j`.
pub fn random_assignment<R: Rng + ?Sized>(clients: usize, channels: usize, rng: &mut R) -> Assignment {
    assert!(channels >= 1 && clients >= channels);
    let mut pool: Vec<usize> = (0..clients).collect();
    let (chosen, _) = pool.partial_shuffle(rng, channels);
    Assignment {
        clients,
        channel_to_client: chosen.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> RewardMatrix {
        RewardMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(RewardMatrix::new(1, 2, vec![0.0; 2]).is_err());
        assert!(RewardMatrix::new(2, 0, vec![]).is_err());
        assert!(RewardMatrix::new(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(Assignment::new(3, vec![0, 0]).is_err());
        assert!(Assignment::new(3, vec![0, 3]).is_err());
        assert!(Assignment::new(3, vec![2, 0]).is_ok());
    }

    #[test]
    fn min_matched_edge_examples() {
        let w = m(&[&[0.9, 0.5], &[0.8, 0.2]]);
        let a = Assignment::new(2, vec![1, 0]).unwrap();
        assert_eq!(min_matched_edge(&w, &a).unwrap(), 0.5);
        let one = m(&[&[0.7]]);
        assert_eq!(min_matched_edge(&one, &Assignment::new(1, vec![0]).unwrap()).unwrap(), 0.7);
        let empty = Assignment::new(2, vec![]).unwrap();
        assert!(matches!(min_matched_edge(&w, &empty), Err(Error::EmptyAssignment)));
    }

    #[test]
    fn single_channel_takes_that_edge() {
        let w = m(&[&[0.3], &[0.95], &[0.4]]);
        assert_eq!(min_matched_edge(&w, &Assignment::new(3, vec![1]).unwrap()).unwrap(), 0.95);
        assert_eq!(optimal_matching(&w).as_slice(), &[1]);
    }

    #[test]
    fn brute_force_examples() {
        let (a, v) = brute_force_optimal(&m(&[&[0.9, 0.5], &[0.8, 0.2]])).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(a.as_slice(), &[1, 0]);

        let (a, v) = brute_force_optimal(&m(&[&[0.9, 0.1], &[0.8, 0.7], &[0.6, 0.5]])).unwrap();
        assert_eq!(v, 0.7);
        assert_eq!(a.as_slice(), &[0, 1]);

        let (_, v) = brute_force_optimal(&RewardMatrix::filled(4, 3, 0.42).unwrap()).unwrap();
        assert_eq!(v, 0.42);
    }

    #[test]
    fn brute_force_refuses_huge_instances() {
        let big = RewardMatrix::filled(20, 10, 0.5).unwrap();
        assert!(matches!(brute_force_optimal(&big), Err(Error::TooLarge { .. })));
        assert_eq!(assignment_count(7, 4), 840);
    }

    #[test]
    fn om_examples() {
        let w = m(&[&[0.9, 0.5], &[0.8, 0.2]]);
        for a in [optimal_matching(&w), optimal_matching_threshold(&w)] {
            assert_eq!(a.as_slice(), &[1, 0]);
            assert_eq!(min_matched_edge(&w, &a).unwrap(), 0.5);
        }
        // strictly dominant permutation
        let w = m(&[&[0.1, 0.9, 0.1], &[0.9, 0.1, 0.1], &[0.1, 0.1, 0.9]]);
        assert_eq!(optimal_matching(&w).as_slice(), &[1, 0, 2]);
        assert_eq!(optimal_matching_threshold(&w).as_slice(), &[1, 0, 2]);
    }

    #[test]
    fn om_never_prunes_unexplored_first() {
        let w = m(&[&[UNEXPLORED, 0.2], &[0.1, 0.3], &[0.05, UNEXPLORED]]);
        let a = optimal_matching(&w);
        assert_eq!(min_matched_edge(&w, &a).unwrap(), UNEXPLORED);
        assert_eq!(a.as_slice(), &[0, 2]);
    }

    #[test]
    fn greedy_examples() {
        let w = m(&[&[0.9, 0.5], &[0.8, 0.2]]);
        let a = greedy_with_order(&w, &[0, 1], &mut rng()).unwrap();
        assert_eq!(a.as_slice(), &[0, 1]);
        assert_eq!(min_matched_edge(&w, &a).unwrap(), 0.2);
        let a = greedy_with_order(&w, &[1, 0], &mut rng()).unwrap();
        assert_eq!(a.as_slice(), &[1, 0]);
        assert_eq!(min_matched_edge(&w, &a).unwrap(), 0.5);
        let one = m(&[&[0.3]]);
        assert_eq!(greedy_with_order(&one, &[0], &mut rng()).unwrap().as_slice(), &[0]);
        assert!(greedy_with_order(&w, &[0, 0], &mut rng()).is_err());
    }

    #[test]
    fn greedy_prefers_unexplored() {
        let w = m(&[&[0.9, UNEXPLORED], &[0.8, 0.2]]);
        let a = greedy_with_order(&w, &[0, 1], &mut rng()).unwrap();
        assert_eq!(a.channel_of(0), Some(1));
    }

    #[test]
    fn gmba_keeps_better_previous() {
        let w = m(&[&[0.9, 0.5], &[0.8, 0.2]]);
        let prev = Assignment::new(2, vec![1, 0]).unwrap();
        let mut r = rng();
        for _ in 0..20 {
            assert_eq!(gmba_step(&w, Some(&prev), &mut r), prev);
        }
        let first = gmba_step(&w, None, &mut r);
        first.validate().unwrap();
    }

    #[test]
    fn random_assignment_is_valid() {
        let mut r = rng();
        for _ in 0..100 {
            let a = random_assignment(7, 4, &mut r);
            a.validate().unwrap();
            assert_eq!(a.channels(), 4);
        }
    }

    #[test]
    fn enumeration_counts() {
        let mut k = 0;
        for_each_assignment(5, 3, |_| k += 1);
        assert_eq!(k, 60);
    }
}
