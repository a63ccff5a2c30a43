//! Radio and compute environment.
//!
//! Delays are built from three pieces per matched client: downlink broadcast
//! of the global model, local training, and uplink of the trained model.
//! Channel gains combine a distance-based path loss with unit-mean
//! exponential (Rayleigh power) fading drawn fresh per pair and round.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matching::Assignment;

/// Delay reported for a link whose rate is zero. It exceeds any deadline.
pub const INFINITE_DELAY: f64 = f64::INFINITY;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Path loss in dB: `128.1 + 37.6 log10(d / 1 km)`.
pub fn path_loss_db(distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(invalid(format!("distance must be positive, got {distance_m}")));
    }
    Ok(128.1 + 37.6 * (distance_m / 1000.0).log10())
}

/// Linear power gain matching [`path_loss_db`].
pub fn path_gain(distance_m: f64) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(distance_m)? / 10.0))
}

/// Shannon rate `B log2(1 + P h / (I + noise))` in bits/s.
pub fn link_rate(
    tx_power_dbm: f64,
    gain: f64,
    interference_w: f64,
    noise_w: f64,
    bandwidth_hz: f64,
) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(invalid(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    if !(interference_w >= 0.0) || !(noise_w >= 0.0) || !(gain >= 0.0) {
        return Err(invalid("gain, interference and noise must be non-negative"));
    }
    let denom = interference_w + noise_w;
    if denom <= 0.0 {
        return Err(invalid("interference plus noise is zero"));
    }
    let sinr = dbm_to_watts(tx_power_dbm) * gain / denom;
    Ok(bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2)
}

/// Seconds to push `model_bits` through a link of `rate_bps`.
/// A zero rate gives [`INFINITE_DELAY`].
pub fn transmission_delay(model_bits: u64, rate_bps: f64) -> f64 {
    debug_assert!(model_bits > 0);
    if rate_bps <= 0.0 {
        INFINITE_DELAY
    } else {
        model_bits as f64 / rate_bps
    }
}

/// Local training latency `tau * |D| * cycles_per_sample / f`.
pub fn compute_delay(
    local_steps: u32,
    dataset_size: usize,
    cycles_per_sample: f64,
    cpu_hz: f64,
) -> Result<f64> {
    if !(cpu_hz > 0.0) {
        return Err(invalid(format!("cpu frequency must be positive, got {cpu_hz}")));
    }
    if local_steps == 0 || dataset_size == 0 || !(cycles_per_sample > 0.0) {
        return Err(invalid("steps, dataset size and cycles per sample must be positive"));
    }
    Ok(local_steps as f64 * dataset_size as f64 * cycles_per_sample / cpu_hz)
}

/// Per-client/channel interference statistics for one link direction.
///
/// The interference power in a round is the square of a zero-mean Gaussian
/// draw whose variance is the stored value, so its mean equals the variance.
pub type InterferenceTable = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub uplink_bandwidth_hz: f64,
    pub downlink_bandwidth_hz: f64,
    pub client_tx_power_dbm: f64,
    pub bs_tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub interference_up: InterferenceTable,
    pub interference_down: InterferenceTable,
}

impl ChannelParams {
    pub fn validate(&self, clients: usize, channels: usize) -> Result<()> {
        if !(self.uplink_bandwidth_hz > 0.0) || !(self.downlink_bandwidth_hz > 0.0) {
            return Err(invalid("bandwidths must be positive"));
        }
        for table in [&self.interference_up, &self.interference_down] {
            if table.len() != clients || table.iter().any(|r| r.len() != channels) {
                return Err(invalid(format!(
                    "interference table must be {clients}x{channels}"
                )));
            }
            if table.iter().flatten().any(|v| !(*v >= 0.0)) {
                return Err(invalid("interference variances must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub side_m: f64,
    pub bs_position: [f64; 2],
    pub client_positions: Vec<[f64; 2]>,
}

impl Topology {
    /// Base station in the centre, clients uniform over the square. Clients
    /// closer than one metre to the base station are redrawn.
    pub fn random<R: Rng + ?Sized>(clients: usize, side_m: f64, rng: &mut R) -> Result<Self> {
        if !(side_m > 2.0) {
            return Err(invalid("service area side must exceed 2 m"));
        }
        let bs = [side_m / 2.0, side_m / 2.0];
        let client_positions = (0..clients)
            .map(|_| loop {
                let p = [rng.random_range(0.0..side_m), rng.random_range(0.0..side_m)];
                if dist(p, bs) >= 1.0 {
                    break p;
                }
            })
            .collect();
        Ok(Self {
            side_m,
            bs_position: bs,
            client_positions,
        })
    }

    pub fn distance(&self, client: usize) -> f64 {
        dist(self.client_positions[client], self.bs_position)
    }

    pub fn validate(&self) -> Result<()> {
        let inside = |p: [f64; 2]| (0.0..=self.side_m).contains(&p[0]) && (0.0..=self.side_m).contains(&p[1]);
        if !inside(self.bs_position) || !self.client_positions.iter().all(|&p| inside(p)) {
            return Err(invalid("positions must lie inside the service square"));
        }
        if (0..self.client_positions.len()).any(|i| !(self.distance(i) > 0.0)) {
            return Err(invalid("client placed on the base station"));
        }
        Ok(())
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientComputeProfile {
    pub cycles_per_sample: f64,
    pub dataset_size: usize,
    pub cpu_freq_range: (f64, f64),
}

impl ClientComputeProfile {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.cpu_freq_range;
        if !(self.cycles_per_sample > 0.0) || self.dataset_size == 0 || !(lo > 0.0) || !(lo <= hi) {
            return Err(invalid(format!("bad compute profile {self:?}")));
        }
        Ok(())
    }
}

/// One round's draw of channel gains, interference and CPU speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundEnvironment {
    /// `gain[i][j]`, linear power gain of client `i` on channel `j`.
    pub gain: Vec<Vec<f64>>,
    pub interference_up: Vec<Vec<f64>>,
    pub interference_down: Vec<Vec<f64>>,
    pub cpu_hz: Vec<f64>,
}

pub fn sample_round<R: Rng + ?Sized>(
    params: &ChannelParams,
    topology: &Topology,
    profiles: &[ClientComputeProfile],
    rng: &mut R,
) -> RoundEnvironment {
    let clients = topology.client_positions.len();
    let channels = params.interference_up.first().map_or(0, Vec::len);
    let base: Vec<f64> = (0..clients)
        .map(|i| path_gain(topology.distance(i)).expect("validated topology"))
        .collect();

    let mut gain = vec![vec![0.0; channels]; clients];
    let mut up = vec![vec![0.0; channels]; clients];
    let mut down = vec![vec![0.0; channels]; clients];
    for i in 0..clients {
        for j in 0..channels {
            let fade: f64 = Exp1.sample(rng);
            gain[i][j] = base[i] * fade;
            up[i][j] = squared_gaussian(params.interference_up[i][j], rng);
            down[i][j] = squared_gaussian(params.interference_down[i][j], rng);
        }
    }
    let cpu_hz = profiles
        .iter()
        .map(|p| {
            let (lo, hi) = p.cpu_freq_range;
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        })
        .collect();
    RoundEnvironment {
        gain,
        interference_up: up,
        interference_down: down,
        cpu_hz,
    }
}

fn squared_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> f64 {
    // always draw so the stream position does not depend on the variance
    let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    z * z * variance
}

/// Delays and outcomes of one round under a given assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundDelays {
    /// Total delay per client; `None` for clients without a channel.
    pub client_delay: Vec<Option<f64>>,
    /// `true` iff the client was matched and finished within the deadline.
    pub indicators: Vec<bool>,
    /// Round duration: the slowest matched client, capped at the deadline.
    pub round_delay: f64,
}

/// Per-link rates and the resulting round delay.
///
/// `train_delays[i]` is the local training time of client `i` this round.
pub fn round_delays(
    params: &ChannelParams,
    env: &RoundEnvironment,
    assignment: &Assignment,
    model_bits_up: u64,
    model_bits_down: u64,
    train_delays: &[f64],
    d_max: f64,
) -> Result<RoundDelays> {
    let noise = params.noise_w();
    let mut delays = Vec::with_capacity(assignment.channels());
    for (i, j) in assignment.pairs() {
        let up = link_rate(
            params.client_tx_power_dbm,
            env.gain[i][j],
            env.interference_up[i][j],
            noise,
            params.uplink_bandwidth_hz,
        )?;
        let down = link_rate(
            params.bs_tx_power_dbm,
            env.gain[i][j],
            env.interference_down[i][j],
            noise,
            params.downlink_bandwidth_hz,
        )?;
        let d = transmission_delay(model_bits_down, down)
            + transmission_delay(model_bits_up, up)
            + train_delays[i];
        delays.push((i, d));
    }
    Ok(assemble_round(assignment.clients(), &delays, d_max))
}

/// Builds a [`RoundDelays`] from `(client, delay)` pairs of the matched clients.
pub fn assemble_round(clients: usize, matched: &[(usize, f64)], d_max: f64) -> RoundDelays {
    let mut client_delay = vec![None; clients];
    let mut indicators = vec![false; clients];
    let mut round_delay: f64 = 0.0;
    for &(i, d) in matched {
        client_delay[i] = Some(d);
        indicators[i] = d <= d_max;
        round_delay = round_delay.max(d.min(d_max));
    }
    RoundDelays {
        client_delay,
        indicators,
        round_delay,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_loss_examples() {
        assert_relative_eq!(path_loss_db(1000.0).unwrap(), 128.1, epsilon = 1e-12);
        assert_relative_eq!(path_loss_db(100.0).unwrap(), 90.5, epsilon = 1e-12);
        assert_relative_eq!(path_loss_db(1.0).unwrap(), 15.3, epsilon = 1e-12);
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-5.0).is_err());
    }

    #[test]
    fn link_rate_examples() {
        // 0 dBm = 1 mW, so gain 1e-3 with unit noise gives SINR = 1e-6 / 1e-6
        let noise = 1e-6;
        let p0 = dbm_to_watts(0.0);
        let gain = noise / p0;
        assert_relative_eq!(link_rate(0.0, gain, 0.0, noise, 15e3).unwrap(), 15000.0, max_relative = 1e-12);
        assert_relative_eq!(link_rate(0.0, 3.0 * gain, 0.0, noise, 15e3).unwrap(), 30000.0, max_relative = 1e-12);
        assert_eq!(link_rate(23.0, 0.0, 1e-9, noise, 15e3).unwrap(), 0.0);
        assert!(link_rate(23.0, 1.0, 0.0, 0.0, 15e3).is_err());
        assert!(link_rate(23.0, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn link_rate_is_monotone() {
        let mut last = -1.0;
        for k in 0..50 {
            let r = link_rate(23.0, 1e-14 * (k as f64 + 1.0), 1e-13, 2e-14, 15e3).unwrap();
            assert!(r > last);
            last = r;
        }
        let mut last = f64::INFINITY;
        for k in 0..50 {
            let r = link_rate(23.0, 1e-13, 1e-14 * k as f64, 2e-14, 15e3).unwrap();
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn transmission_delay_examples() {
        assert_eq!(transmission_delay(15000, 15000.0), 1.0);
        assert_eq!(transmission_delay(30000, 15000.0), 2.0);
        assert_eq!(transmission_delay(15000, 0.0), INFINITE_DELAY);
    }

    #[test]
    fn compute_delay_examples() {
        assert_eq!(compute_delay(5, 100, 10.0, 5000.0).unwrap(), 1.0);
        assert_eq!(compute_delay(1, 1, 1.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(compute_delay(5, 600, 40.0, 60000.0).unwrap(), 2.0, epsilon = 1e-12);
        assert!(compute_delay(5, 600, 40.0, 0.0).is_err());
    }

    fn fixture(var: f64) -> (ChannelParams, Topology, Vec<ClientComputeProfile>) {
        let params = ChannelParams {
            uplink_bandwidth_hz: 15e3,
            downlink_bandwidth_hz: 15e3,
            client_tx_power_dbm: 23.0,
            bs_tx_power_dbm: 23.0,
            noise_power_dbm: -107.0,
            interference_up: vec![vec![var; 2]; 3],
            interference_down: vec![vec![var; 2]; 3],
        };
        let topo = Topology::random(3, 2000.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let profiles = vec![
            ClientComputeProfile {
                cycles_per_sample: 10.0,
                dataset_size: 100,
                cpu_freq_range: (1e4, 2e4),
            };
            3
        ];
        (params, topo, profiles)
    }

    #[test]
    fn zero_variance_means_no_interference() {
        let (params, topo, profiles) = fixture(0.0);
        let env = sample_round(&params, &topo, &profiles, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(env.interference_up.iter().flatten().all(|&v| v == 0.0));
        assert!(env.interference_down.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let (params, topo, profiles) = fixture(1e-13);
        let a = sample_round(&params, &topo, &profiles, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_round(&params, &topo, &profiles, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        topo.validate().unwrap();
        params.validate(3, 2).unwrap();
    }

    #[test]
    fn cpu_frequency_mean() {
        let profile = ClientComputeProfile {
            cycles_per_sample: 1.0,
            dataset_size: 1,
            cpu_freq_range: (20e3, 130e3),
        };
        let (params, _, _) = fixture(0.0);
        let topo = Topology {
            side_m: 10.0,
            bs_position: [5.0, 5.0],
            client_positions: vec![[1.0, 1.0]],
        };
        let params = ChannelParams {
            interference_up: vec![vec![0.0]],
            interference_down: vec![vec![0.0]],
            ..params
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_round(&params, &topo, std::slice::from_ref(&profile), &mut rng).cpu_hz[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 75e3).abs() / 75e3 < 0.01, "mean {mean}");
    }

    #[test]
    fn round_delay_rules() {
        let r = assemble_round(4, &[(0, 1.0), (2, 1.5)], 2.0);
        assert_eq!(r.round_delay, 1.5);
        assert_eq!(r.indicators, vec![true, false, true, false]);
        assert_eq!(r.client_delay[1], None);

        let r = assemble_round(3, &[(0, 1.0), (1, INFINITE_DELAY)], 2.0);
        assert_eq!(r.round_delay, 2.0);
        assert_eq!(r.indicators, vec![true, false, false]);

        let d = 0.3 + 0.5 + 1.0;
        let r = assemble_round(1, &[(0, d)], 2.0);
        assert_relative_eq!(r.client_delay[0].unwrap(), 1.8, epsilon = 1e-12);
        assert!(r.indicators[0]);
    }

    #[test]
    fn round_delays_through_links() {
        let (params, topo, profiles) = fixture(1e-14);
        let env = sample_round(&params, &topo, &profiles, &mut ChaCha8Rng::seed_from_u64(3));
        let a = Assignment::new(3, vec![2, 0]).unwrap();
        let r = round_delays(&params, &env, &a, 2000, 2000, &[0.1, 0.2, 0.3], 5.0).unwrap();
        assert!(r.round_delay <= 5.0);
        assert!(!r.indicators[1]);
        assert!(r.client_delay[0].unwrap() > 0.1);
        assert!(r.client_delay[2].unwrap() > 0.3);
    }
}
