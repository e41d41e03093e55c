//! Deterministic random-number streams for reproducible parallel simulation.
//!
//! Every stochastic draw in the simulator comes from a stream addressed by
//! `(repetition, cycle, channel)`. Streams are independent ChaCha8 keystreams
//! over a key derived from the master seed, so the result of a simulation is
//! a pure function of `(config, seed)` — independent of thread count,
//! scheduling, and evaluation order.
//!
//! Stream addressing packs the coordinates into the 64-bit ChaCha stream id:
//!
//! ```text
//! stream_id = repetition << 16 | cycle << 4 | channel
//! ```
//!
//! which is collision-free for `cycle < 4096`, `channel < 16`, and
//! `repetition < 2^48`. The simulator enforces these bounds at config
//! validation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Streams support at most this many cycles per repetition.
pub const MAX_CYCLES: usize = 1 << 12;

/// Streams support at most this many repetitions.
pub const MAX_REPETITIONS: usize = 1 << 48;

/// Independent noise channels of one simulated trial.
///
/// Giving each physical noise mechanism its own stream keeps draws for one
/// mechanism unaffected by whether another mechanism is enabled or how many
/// values it consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum NoiseChannel {
    /// Dipole-trap loading fluctuation (drawn once per repetition).
    Loading = 0,
    /// Per-cycle binomial trap loss.
    Loss = 1,
    /// Thermal-state spin sampling.
    Thermal = 2,
    /// Optical-pumping excess noise on the prepared state.
    AtomicTechnical = 3,
    /// Polarimeter imbalance drawn once per trial.
    Imbalance = 4,
    /// Photon shot noise of the probe pulses.
    Shot = 5,
    /// Detector electronic noise (one draw per meta-pulse).
    Electronic = 6,
    /// Dispersive atom-number probe.
    Dispersive = 7,
    /// Absorption-imaging oracle.
    Imaging = 8,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factory handing out the per-`(repetition, cycle, channel)` streams for
/// one master seed.
#[derive(Debug, Clone)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    /// Expands a 64-bit master seed into the 256-bit stream key.
    pub fn new(master_seed: u64) -> Self {
        let mut state = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }

    /// Returns the stream for one coordinate triple.
    ///
    /// Panics if `cycle >= MAX_CYCLES` or `repetition >= MAX_REPETITIONS`;
    /// both are checked earlier by config validation.
    pub fn stream(&self, repetition: usize, cycle: usize, channel: NoiseChannel) -> ChaCha8Rng {
        assert!(cycle < MAX_CYCLES, "cycle index {cycle} out of stream range");
        assert!(
            repetition < MAX_REPETITIONS,
            "repetition index {repetition} out of stream range"
        );
        let id = ((repetition as u64) << 16) | ((cycle as u64) << 4) | channel as u64;
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id);
        rng
    }
}

/// Zero-mean Gaussian draw with the given standard deviation.
///
/// `std_dev <= 0` returns exactly 0, so a disabled noise term consumes no
/// randomness and contributes no value.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    if std_dev <= 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    z * std_dev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_coordinates_same_stream() {
        let factory = StreamFactory::new(42);
        let mut a = factory.stream(3, 7, NoiseChannel::Shot);
        let mut b = factory.stream(3, 7, NoiseChannel::Shot);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_coordinates_distinct_streams() {
        let factory = StreamFactory::new(42);
        let mut base = factory.stream(3, 7, NoiseChannel::Shot);
        let neighbors = [
            factory.stream(4, 7, NoiseChannel::Shot),
            factory.stream(3, 8, NoiseChannel::Shot),
            factory.stream(3, 7, NoiseChannel::Electronic),
        ];
        let head: Vec<u64> = (0..8).map(|_| base.next_u64()).collect();
        for mut other in neighbors {
            let other_head: Vec<u64> = (0..8).map(|_| other.next_u64()).collect();
            assert_ne!(head, other_head);
        }
    }

    #[test]
    fn seeds_change_every_stream() {
        let mut a = StreamFactory::new(1).stream(0, 0, NoiseChannel::Thermal);
        let mut b = StreamFactory::new(2).stream(0, 0, NoiseChannel::Thermal);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn gaussian_zero_std_is_silent() {
        let mut rng = StreamFactory::new(0).stream(0, 0, NoiseChannel::Shot);
        let before = rng.clone().next_u64();
        assert_eq!(gaussian(&mut rng, 0.0), 0.0);
        // no randomness consumed
        assert_eq!(rng.next_u64(), before);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = StreamFactory::new(9).stream(0, 0, NoiseChannel::Shot);
        let n = 200_000;
        let samples: Vec<f64> = (0..n).map(|_| gaussian(&mut rng, 3.0)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 9.0).abs() < 0.15, "var {var}");
    }
}
