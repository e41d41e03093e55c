//! Seeded Monte Carlo simulation of the full measurement sequence.
//!
//! One *repetition* loads the trap once and then runs `cycles_per_load`
//! measurement cycles. Each cycle is a *trial*:
//!
//! 1. binomial trap loss thins the atom number (cycles after the first),
//! 2. optical pumping prepares a thermal spin state — represented by its
//!    outcome, a draw of the collective F_z from the completely mixed
//!    state, plus a correlated pumping-noise offset,
//! 3. a train of probe pulses measures F_z; pulse signals are summed into
//!    meta-pulses, each picking up one electronic-noise sample,
//! 4. a dispersive probe of the spin-polarized ensemble estimates the atom
//!    number from the macroscopic rotation,
//! 5. an absorption-imaging oracle reports a noisy absolute atom count.
//!
//! Noise mechanisms and where they enter:
//!
//! | mechanism         | draw                      | scope                |
//! |-------------------|---------------------------|----------------------|
//! | projection        | F_z from thermal state    | once per trial       |
//! | atomic technical  | N(0, beta N_A^2 V_1)      | once per trial       |
//! | light technical   | imbalance e ~ N(0, 4 alpha), signal e N_L/2 | once per trial |
//! | light shot        | N(0, N_L/4)               | per pulse            |
//! | electronic        | N(0, V_E)                 | per meta-pulse       |
//!
//! The trial-correlated imbalance is what makes the light technical term
//! scale as alpha N_L^2 for a meta-pulse of N_L photons regardless of how
//! the train is partitioned; independent per-pulse noise would not.
//!
//! Repetitions own private RNG streams (see [`crate::rng`]) and may run
//! concurrently; results are a pure function of `(config, seed)`.

use crate::estimator::VariancePoint;
use crate::model::{self, ModelError, NoiseParams, SpinF};
use crate::rng::{self, NoiseChannel, StreamFactory};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Initial atom number distribution: `mean * (1 + N(0, relative_rms))`,
/// floored at zero and rounded to a count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomLoading {
    pub mean: f64,
    pub relative_rms: f64,
}

/// Full description of one simulated campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Ground-truth noise constants generating the data.
    pub truth: NoiseParams,
    pub loading: AtomLoading,
    /// Fraction of atoms lost per cycle, in [0, 1).
    pub loss_per_cycle: f64,
    pub cycles_per_load: usize,
    pub repetitions: usize,
    pub pulses_per_train: usize,
    pub photons_per_pulse: f64,
    /// Contiguous pulse counts summed into meta-pulses; the sizes must fit
    /// into the train (sum <= pulses_per_train), trailing pulses are unused.
    pub meta_pulse_sizes: Vec<usize>,
    /// Relative RMS error of the absorption-imaging oracle.
    pub imaging_rms: f64,
    pub seed: u64,
    /// Atom numbers up to this threshold sample the thermal state by exact
    /// per-atom enumeration; above it a Gaussian of matched variance is
    /// used (relative variance error < 1e-4 beyond 1e4 atoms).
    pub exact_sampling_threshold: u64,
}

impl SimConfig {
    /// Campaign defaults mirroring the reference Rb-87 run: 500
    /// repetitions of 20 cycles with 15% loss from 8e5 atoms, 2.5e7-photon
    /// pulses aggregated into meta-pulses from 5e7 up to 1e9 photons.
    ///
    /// The meta-pulse ladder spans a decade and a half of photon number so
    /// that a single campaign identifies all four noise coefficients, and
    /// is repeated four times within the train: the extra passes average
    /// down light noise in the variance table. The gain saturates there —
    /// meta-pulses of one trial share the same F_z draw, so atomic
    /// sampling noise is set by the trial count alone.
    pub fn rb87_campaign(seed: u64) -> Self {
        let ladder = [2usize, 3, 5, 10, 20, 40];
        let meta_pulse_sizes: Vec<usize> = (0..4).flat_map(|_| ladder).collect();
        Self {
            truth: NoiseParams::rb87(),
            loading: AtomLoading {
                mean: 8e5,
                relative_rms: 0.02,
            },
            loss_per_cycle: 0.15,
            cycles_per_load: 20,
            repetitions: 500,
            pulses_per_train: meta_pulse_sizes.iter().sum(),
            photons_per_pulse: 2.5e7,
            meta_pulse_sizes,
            imaging_rms: 0.02,
            seed,
            exact_sampling_threshold: 10_000,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.repetitions < 2 {
            return fail(format!("repetitions must be >= 2, got {}", self.repetitions));
        }
        if self.repetitions >= rng::MAX_REPETITIONS {
            return fail(format!("repetitions must be < {}", rng::MAX_REPETITIONS));
        }
        if self.cycles_per_load == 0 || self.cycles_per_load >= rng::MAX_CYCLES {
            return fail(format!(
                "cycles_per_load must be in 1..{}, got {}",
                rng::MAX_CYCLES,
                self.cycles_per_load
            ));
        }
        if !(0.0..1.0).contains(&self.loss_per_cycle) {
            return fail(format!(
                "loss_per_cycle must be in [0, 1), got {}",
                self.loss_per_cycle
            ));
        }
        if !(self.photons_per_pulse > 0.0) || !self.photons_per_pulse.is_finite() {
            return fail(format!(
                "photons_per_pulse must be > 0, got {}",
                self.photons_per_pulse
            ));
        }
        if self.pulses_per_train == 0 {
            return fail("pulses_per_train must be >= 1".into());
        }
        if self.meta_pulse_sizes.is_empty() {
            return fail("meta_pulse_sizes must not be empty".into());
        }
        if self.meta_pulse_sizes.iter().any(|&s| s == 0) {
            return fail("meta_pulse_sizes must all be >= 1".into());
        }
        let used: usize = self.meta_pulse_sizes.iter().sum();
        if used > self.pulses_per_train {
            return fail(format!(
                "meta_pulse_sizes sum to {used} but the train has only {} pulses",
                self.pulses_per_train
            ));
        }
        if !self.loading.mean.is_finite() || self.loading.mean < 0.0 {
            return fail(format!(
                "loading mean must be >= 0, got {}",
                self.loading.mean
            ));
        }
        if !self.loading.relative_rms.is_finite() || self.loading.relative_rms < 0.0 {
            return fail(format!(
                "loading relative_rms must be >= 0, got {}",
                self.loading.relative_rms
            ));
        }
        if !self.imaging_rms.is_finite() || self.imaging_rms < 0.0 {
            return fail(format!("imaging_rms must be >= 0, got {}", self.imaging_rms));
        }
        Ok(())
    }

    /// Photon budget of the dispersive atom-number probe: one full train.
    pub fn dispersive_photons(&self) -> f64 {
        self.pulses_per_train as f64 * self.photons_per_pulse
    }
}

/// Raw signal of a single probe pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSignal {
    pub n_photons: f64,
    pub s_y: f64,
}

/// Summed signal of a contiguous group of pulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaPulseSignal {
    pub n_photons: f64,
    pub s_y: f64,
}

/// Dispersive probe outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersiveReading {
    /// Estimated rotation angle 2 S_y / N_L.
    pub phi: f64,
    /// Atom-number estimate phi / G.
    pub n_atoms: f64,
}

/// Everything recorded about one trial (one cycle of one repetition).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub repetition: usize,
    pub cycle: usize,
    pub n_atoms_true: u64,
    pub n_atoms_imaging: f64,
    /// Effective collective F_z probed by the train: thermal draw plus
    /// pumping-noise offset. Constant across the pulses of the trial.
    pub fz_true: f64,
    pub meta_pulses: Vec<MetaPulseSignal>,
    pub dispersive_phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub version: String,
}

/// A full simulated campaign: `repetitions * cycles_per_load` trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SimConfig,
    pub records: Vec<TrialRecord>,
    pub provenance: Provenance,
}

/// Per-mechanism switches for diagnostic runs.
///
/// Scope is the QND probe path only: the dispersive probe and the imaging
/// oracle always carry their physical noise. Disabling a mechanism skips
/// its draw entirely; other channels are unaffected because every channel
/// owns a private stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseToggles {
    pub projection: bool,
    pub atomic_technical: bool,
    pub light_technical: bool,
    pub shot: bool,
    pub electronic: bool,
}

impl NoiseToggles {
    pub fn all() -> Self {
        Self {
            projection: true,
            atomic_technical: true,
            light_technical: true,
            shot: true,
            electronic: true,
        }
    }

    pub fn none() -> Self {
        Self {
            projection: false,
            atomic_technical: false,
            light_technical: false,
            shot: false,
            electronic: false,
        }
    }
}

/// Collective F_z of `n_atoms` spins in the completely mixed state.
///
/// Up to `exact_threshold` atoms the draw is the sum of independent
/// uniform choices over the 2F+1 magnetic sublevels — the exact
/// distribution. Above the threshold it is a Gaussian of the matched
/// variance n_atoms * F(F+1)/3; the value is left continuous, not rounded
/// to the lattice of achievable sums.
pub fn sample_thermal_fz<R: Rng + ?Sized>(
    n_atoms: u64,
    f: SpinF,
    exact_threshold: u64,
    rng: &mut R,
) -> f64 {
    if n_atoms == 0 {
        return 0.0;
    }
    if n_atoms <= exact_threshold {
        let levels = f.multiplicity();
        let offset = f.value();
        let mut sum = 0.0;
        for _ in 0..n_atoms {
            sum += rng.random_range(0..levels) as f64 - offset;
        }
        sum
    } else {
        rng::gaussian(rng, model::thermal_variance(n_atoms as f64, f).sqrt())
    }
}

/// Adds the pumping excess noise: one zero-mean Gaussian of variance
/// beta * N_A^2 * V_1 per state preparation, fully correlated across all
/// pulses of the trial.
pub fn apply_atomic_technical_noise<R: Rng + ?Sized>(
    fz: f64,
    n_atoms: u64,
    params: &NoiseParams,
    rng: &mut R,
) -> f64 {
    let na = n_atoms as f64;
    fz + rng::gaussian(rng, (params.beta() * na * na * params.v1()).sqrt())
}

/// Polarimeter signal of one probe pulse:
/// `G (N_L/2) F_z + N(0, N_L/4) + epsilon N_L/2`.
///
/// Electronic noise is *not* added here; it enters once per meta-pulse in
/// [`aggregate_meta_pulses`].
pub fn simulate_pulse<R: Rng + ?Sized>(
    fz_effective: f64,
    n_photons: f64,
    epsilon_imbalance: f64,
    params: &NoiseParams,
    rng: &mut R,
) -> PulseSignal {
    pulse_inner(fz_effective, n_photons, epsilon_imbalance, params, rng, true)
}

fn pulse_inner<R: Rng + ?Sized>(
    fz_effective: f64,
    n_photons: f64,
    epsilon_imbalance: f64,
    params: &NoiseParams,
    rng: &mut R,
    shot: bool,
) -> PulseSignal {
    let mean = params.g() * (n_photons / 2.0) * fz_effective;
    let imbalance = epsilon_imbalance * n_photons / 2.0;
    let shot_noise = if shot {
        rng::gaussian(rng, (n_photons / 4.0).sqrt())
    } else {
        0.0
    };
    PulseSignal {
        n_photons,
        s_y: mean + shot_noise + imbalance,
    }
}

/// Sums contiguous, non-overlapping pulse groups and adds one electronic
/// noise sample N(0, V_E) per meta-pulse.
pub fn aggregate_meta_pulses<R: Rng + ?Sized>(
    pulses: &[PulseSignal],
    sizes: &[usize],
    params: &NoiseParams,
    rng: &mut R,
) -> Result<Vec<MetaPulseSignal>, SimError> {
    aggregate_inner(pulses, sizes, params, rng, true)
}

fn aggregate_inner<R: Rng + ?Sized>(
    pulses: &[PulseSignal],
    sizes: &[usize],
    params: &NoiseParams,
    rng: &mut R,
    electronic: bool,
) -> Result<Vec<MetaPulseSignal>, SimError> {
    let needed: usize = sizes.iter().sum();
    if needed > pulses.len() {
        return Err(SimError::InvalidArgument(format!(
            "meta-pulse sizes need {needed} pulses but only {} are available",
            pulses.len()
        )));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut cursor = 0;
    for &size in sizes {
        if size == 0 {
            return Err(SimError::InvalidArgument(
                "meta-pulse size must be >= 1".into(),
            ));
        }
        let group = &pulses[cursor..cursor + size];
        cursor += size;
        let noise = if electronic {
            rng::gaussian(rng, params.v_e().sqrt())
        } else {
            0.0
        };
        out.push(MetaPulseSignal {
            n_photons: group.iter().map(|p| p.n_photons).sum(),
            s_y: group.iter().map(|p| p.s_y).sum::<f64>() + noise,
        });
    }
    Ok(out)
}

/// Dispersive atom-number probe of a fully z-polarized ensemble
/// (<F_z> = N_A): measures the macroscopic rotation phi = G N_A.
pub fn simulate_dispersive_na<R: Rng + ?Sized>(
    n_atoms: u64,
    n_photons: f64,
    params: &NoiseParams,
    rng: &mut R,
) -> Result<DispersiveReading, SimError> {
    if !(n_photons > 0.0) {
        return Err(SimError::InvalidArgument(format!(
            "dispersive probe needs n_photons > 0, got {n_photons}"
        )));
    }
    let mean = params.g() * n_atoms as f64 * n_photons / 2.0;
    let s_y = mean
        + rng::gaussian(rng, (n_photons / 4.0).sqrt())
        + rng::gaussian(rng, params.v_e().sqrt());
    let phi = 2.0 * s_y / n_photons;
    Ok(DispersiveReading {
        phi,
        n_atoms: phi / params.g(),
    })
}

/// Absorption-imaging oracle: multiplicative Gaussian error of the given
/// relative RMS, floored at zero.
pub fn simulate_absorption_imaging<R: Rng + ?Sized>(
    n_atoms: u64,
    imaging_rms: f64,
    rng: &mut R,
) -> f64 {
    let reading = n_atoms as f64 * (1.0 + rng::gaussian(rng, imaging_rms));
    reading.max(0.0)
}

fn binomial_thinning<R: Rng + ?Sized>(n: u64, survival: f64, rng: &mut R) -> u64 {
    if n == 0 || survival >= 1.0 {
        return n;
    }
    if survival <= 0.0 {
        return 0;
    }
    Binomial::new(n, survival)
        .expect("survival probability validated in (0, 1)")
        .sample(rng)
}

fn simulate_trial(
    config: &SimConfig,
    streams: &StreamFactory,
    toggles: NoiseToggles,
    repetition: usize,
    cycle: usize,
    n_atoms: u64,
) -> TrialRecord {
    let truth = &config.truth;

    let fz_thermal = if toggles.projection {
        let mut rng = streams.stream(repetition, cycle, NoiseChannel::Thermal);
        sample_thermal_fz(n_atoms, truth.f(), config.exact_sampling_threshold, &mut rng)
    } else {
        0.0
    };
    let fz_effective = if toggles.atomic_technical {
        let mut rng = streams.stream(repetition, cycle, NoiseChannel::AtomicTechnical);
        apply_atomic_technical_noise(fz_thermal, n_atoms, truth, &mut rng)
    } else {
        fz_thermal
    };

    let epsilon = if toggles.light_technical {
        let mut rng = streams.stream(repetition, cycle, NoiseChannel::Imbalance);
        rng::gaussian(&mut rng, (4.0 * truth.alpha()).sqrt())
    } else {
        0.0
    };

    let mut shot_rng = streams.stream(repetition, cycle, NoiseChannel::Shot);
    let pulses: Vec<PulseSignal> = (0..config.pulses_per_train)
        .map(|_| {
            pulse_inner(
                fz_effective,
                config.photons_per_pulse,
                epsilon,
                truth,
                &mut shot_rng,
                toggles.shot,
            )
        })
        .collect();

    let mut electronic_rng = streams.stream(repetition, cycle, NoiseChannel::Electronic);
    let meta_pulses = aggregate_inner(
        &pulses,
        &config.meta_pulse_sizes,
        truth,
        &mut electronic_rng,
        toggles.electronic,
    )
    .expect("meta-pulse sizes validated against train length");

    let mut dispersive_rng = streams.stream(repetition, cycle, NoiseChannel::Dispersive);
    let dispersive = simulate_dispersive_na(
        n_atoms,
        config.dispersive_photons(),
        truth,
        &mut dispersive_rng,
    )
    .expect("dispersive photon budget validated > 0");

    let mut imaging_rng = streams.stream(repetition, cycle, NoiseChannel::Imaging);
    let n_atoms_imaging = simulate_absorption_imaging(n_atoms, config.imaging_rms, &mut imaging_rng);

    TrialRecord {
        repetition,
        cycle,
        n_atoms_true: n_atoms,
        n_atoms_imaging,
        fz_true: fz_effective,
        meta_pulses,
        dispersive_phi: dispersive.phi,
    }
}

fn simulate_repetition(
    config: &SimConfig,
    streams: &StreamFactory,
    toggles: NoiseToggles,
    repetition: usize,
) -> Vec<TrialRecord> {
    let mut loading_rng = streams.stream(repetition, 0, NoiseChannel::Loading);
    let drawn = config.loading.mean
        * (1.0 + rng::gaussian(&mut loading_rng, config.loading.relative_rms));
    let mut n_atoms = drawn.max(0.0).round() as u64;

    let survival = 1.0 - config.loss_per_cycle;
    (0..config.cycles_per_load)
        .map(|cycle| {
            if cycle > 0 {
                let mut loss_rng = streams.stream(repetition, cycle, NoiseChannel::Loss);
                n_atoms = binomial_thinning(n_atoms, survival, &mut loss_rng);
            }
            simulate_trial(config, streams, toggles, repetition, cycle, n_atoms)
        })
        .collect()
}

fn assemble(config: &SimConfig, per_rep: Vec<Vec<TrialRecord>>) -> Dataset {
    Dataset {
        config: config.clone(),
        records: per_rep.into_iter().flatten().collect(),
        provenance: Provenance {
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    }
}

/// Runs the full campaign with every noise mechanism enabled.
///
/// With the `parallel` feature, repetitions run on the current rayon
/// thread pool; the result is identical to the sequential path.
pub fn run_sequence(config: &SimConfig) -> Result<Dataset, SimError> {
    run_sequence_with_toggles(config, NoiseToggles::all())
}

/// Diagnostic entry point with per-mechanism switches.
pub fn run_sequence_with_toggles(
    config: &SimConfig,
    toggles: NoiseToggles,
) -> Result<Dataset, SimError> {
    config.validate()?;
    let streams = StreamFactory::new(config.seed);

    #[cfg(feature = "parallel")]
    let per_rep: Vec<Vec<TrialRecord>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| simulate_repetition(config, &streams, toggles, rep))
        .collect();

    #[cfg(not(feature = "parallel"))]
    let per_rep: Vec<Vec<TrialRecord>> = (0..config.repetitions)
        .map(|rep| simulate_repetition(config, &streams, toggles, rep))
        .collect();

    Ok(assemble(config, per_rep))
}

/// Single-threaded variant of [`run_sequence`], available regardless of
/// features. Produces bit-identical output.
pub fn run_sequence_sequential(config: &SimConfig) -> Result<Dataset, SimError> {
    run_sequence_sequential_with_toggles(config, NoiseToggles::all())
}

/// Single-threaded variant of [`run_sequence_with_toggles`].
pub fn run_sequence_sequential_with_toggles(
    config: &SimConfig,
    toggles: NoiseToggles,
) -> Result<Dataset, SimError> {
    config.validate()?;
    let streams = StreamFactory::new(config.seed);
    let per_rep: Vec<Vec<TrialRecord>> = (0..config.repetitions)
        .map(|rep| simulate_repetition(config, &streams, toggles, rep))
        .collect();
    Ok(assemble(config, per_rep))
}

/// How meta-pulse signals are grouped into atom-number bins.
#[derive(Debug, Clone, PartialEq)]
pub enum NaBinning {
    /// One bin per cycle index. Atom number decays deterministically in
    /// expectation, so the cycle index is a natural, leak-free bin key.
    PerCycle,
    /// Bin by imaged atom number into the half-open intervals defined by
    /// the sorted edge list; readings outside the edges are discarded.
    ByAtomEdges(Vec<f64>),
}

/// Variance table plus bookkeeping of what was discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulation {
    pub points: Vec<VariancePoint>,
    /// Bins dropped for holding fewer than two samples.
    pub dropped_bins: usize,
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Groups meta-pulse signals by (atom-number bin, meta-pulse index) and
/// emits the sample variance of S_y per group.
///
/// Bins with fewer than two samples are dropped and counted in
/// [`Tabulation::dropped_bins`].
pub fn tabulate_variances(dataset: &Dataset, binning: &NaBinning) -> Tabulation {
    // (bin, meta index) -> (s_y values, imaging readings)
    let mut groups: std::collections::BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> =
        std::collections::BTreeMap::new();

    for record in &dataset.records {
        let bin = match binning {
            NaBinning::PerCycle => Some(record.cycle),
            NaBinning::ByAtomEdges(edges) => edges
                .windows(2)
                .position(|w| w[0] <= record.n_atoms_imaging && record.n_atoms_imaging < w[1]),
        };
        let Some(bin) = bin else { continue };
        for (meta_index, meta) in record.meta_pulses.iter().enumerate() {
            let entry = groups.entry((bin, meta_index)).or_default();
            entry.0.push(meta.s_y);
            entry.1.push(record.n_atoms_imaging);
        }
    }

    let mut points = Vec::new();
    let mut dropped = 0;
    for ((bin, meta_index), (s_y, imaged)) in groups {
        if s_y.len() < 2 {
            dropped += 1;
            continue;
        }
        let n_photons = meta_photons(dataset, bin, meta_index);
        points.push(VariancePoint {
            n_atoms: imaged.iter().sum::<f64>() / imaged.len() as f64,
            n_photons,
            variance: sample_variance(&s_y),
            m_samples: s_y.len() as u64,
        });
    }
    Tabulation {
        points,
        dropped_bins: dropped,
    }
}

fn meta_photons(dataset: &Dataset, _bin: usize, meta_index: usize) -> f64 {
    dataset.config.meta_pulse_sizes[meta_index] as f64 * dataset.config.photons_per_pulse
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamFactory;

    fn small_config(seed: u64) -> SimConfig {
        SimConfig {
            repetitions: 20,
            cycles_per_load: 5,
            ..SimConfig::rb87_campaign(seed)
        }
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut c = SimConfig::rb87_campaign(1);
        c.loss_per_cycle = 1.2;
        assert!(matches!(c.validate(), Err(SimError::InvalidConfig(_))));

        let mut c = SimConfig::rb87_campaign(1);
        c.repetitions = 1;
        assert!(c.validate().is_err());

        let mut c = SimConfig::rb87_campaign(1);
        c.meta_pulse_sizes = vec![c.pulses_per_train, 1];
        assert!(c.validate().is_err());

        assert!(SimConfig::rb87_campaign(1).validate().is_ok());
    }

    #[test]
    fn thermal_sampler_zero_atoms() {
        let mut rng = StreamFactory::new(0).stream(0, 0, NoiseChannel::Thermal);
        for _ in 0..10 {
            assert_eq!(sample_thermal_fz(0, SpinF::spin_one(), 100, &mut rng), 0.0);
        }
    }

    #[test]
    fn thermal_sampler_single_atom_moments() {
        // exact per-spin distribution: uniform over {-1, 0, +1}, var 2/3
        let mut rng = StreamFactory::new(7).stream(0, 0, NoiseChannel::Thermal);
        let n = 300_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_thermal_fz(1, SpinF::spin_one(), 100, &mut rng))
            .collect();
        for d in &draws {
            assert!(*d == -1.0 || *d == 0.0 || *d == 1.0);
        }
        let var = sample_variance(&draws);
        // var of the sample variance from exact moments: mu4 = 2/3,
        // sigma^4 = 4/9 -> var(s^2) ~ (mu4 - sigma^4 (n-3)/(n-1)) / n
        let sigma_s2 = ((2.0 / 3.0 - 4.0 / 9.0) / n as f64).sqrt();
        assert!(
            (var - 2.0 / 3.0).abs() < 3.0 * sigma_s2,
            "var {var}, bound {}",
            3.0 * sigma_s2
        );
    }

    #[test]
    fn thermal_sampler_gaussian_branch_variance() {
        let mut rng = StreamFactory::new(11).stream(0, 0, NoiseChannel::Thermal);
        let n = 500usize;
        let n_atoms = 760_000u64;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_thermal_fz(n_atoms, SpinF::spin_one(), 10_000, &mut rng))
            .collect();
        let std = sample_variance(&draws).sqrt();
        // expected 711.8 spins; chi^2 spread of a 500-sample std is ~3.2%
        let expected = model::thermal_variance(n_atoms as f64, SpinF::spin_one()).sqrt();
        assert!(
            (std / expected - 1.0).abs() < 3.0 * (0.5 / (n as f64 - 1.0)).sqrt() * 2.0,
            "std {std} vs {expected}"
        );
    }

    #[test]
    fn atomic_technical_noise_strength() {
        let params = NoiseParams::rb87();
        let mut rng = StreamFactory::new(3).stream(0, 0, NoiseChannel::AtomicTechnical);
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| apply_atomic_technical_noise(0.0, 760_000, &params, &mut rng))
            .collect();
        let std = sample_variance(&draws).sqrt();
        // closed form: sqrt(beta N_A^2 V_1) = 345.5 spins
        assert!((std - 345.5).abs() < 8.0, "std {std}");

        // beta = 0 is the identity
        let quiet = NoiseParams::new(6.65e-8, 0.0, 0.0, 0.0, SpinF::spin_one()).unwrap();
        assert_eq!(
            apply_atomic_technical_noise(12.5, 1000, &quiet, &mut rng),
            12.5
        );

        // at 1e3 atoms the pumping noise (0.455 spins) is buried under the
        // projection noise (25.8 spins)
        let small = (params.beta() * 1e3 * 1e3 * params.v1()).sqrt();
        assert!((small - 0.4546).abs() < 1e-3);
        assert!(small < model::projection_noise_spins(1e3, params.f()) / 50.0);
    }

    #[test]
    fn pulse_mean_map_is_exact_when_noiseless() {
        let params = NoiseParams::new(6.65e-8, 0.0, 0.0, 0.0, SpinF::spin_one()).unwrap();
        let mut rng = StreamFactory::new(0).stream(0, 0, NoiseChannel::Shot);
        let pulse = pulse_inner(1e5, 2.5e7, 0.0, &params, &mut rng, false);
        assert_eq!(pulse.s_y, 8.3125e4);
    }

    #[test]
    fn pulse_shot_noise_variance() {
        let params = NoiseParams::new(6.65e-8, 0.0, 0.0, 0.0, SpinF::spin_one()).unwrap();
        let mut rng = StreamFactory::new(5).stream(0, 0, NoiseChannel::Shot);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| simulate_pulse(0.0, 2.5e7, 0.0, &params, &mut rng).s_y)
            .collect();
        let var = sample_variance(&draws);
        let expected = 2.5e7 / 4.0;
        assert!(
            (var / expected - 1.0).abs() < 4.0 * (2.0 / (n as f64 - 1.0)).sqrt(),
            "var {var} vs {expected}"
        );
    }

    #[test]
    fn aggregation_is_linear_and_sized() {
        let params = NoiseParams::new(6.65e-8, 0.0, 0.0, 0.0, SpinF::spin_one()).unwrap();
        let mut rng = StreamFactory::new(0).stream(0, 0, NoiseChannel::Electronic);
        let pulses: Vec<PulseSignal> = (0..40)
            .map(|_| PulseSignal {
                n_photons: 2.5e7,
                s_y: 10.0,
            })
            .collect();

        let metas = aggregate_meta_pulses(&pulses, &[40], &params, &mut rng).unwrap();
        assert_eq!(metas.len(), 1);
        assert_eq!(metas[0].n_photons, 1e9);
        assert_eq!(metas[0].s_y, 400.0);

        let identity = aggregate_meta_pulses(&pulses, &[1; 40], &params, &mut rng).unwrap();
        assert_eq!(identity.len(), 40);
        assert!(identity.iter().all(|m| m.s_y == 10.0 && m.n_photons == 2.5e7));

        assert!(matches!(
            aggregate_meta_pulses(&pulses, &[41], &params, &mut rng),
            Err(SimError::InvalidArgument(_))
        ));
    }

    #[test]
    fn electronic_noise_enters_once_per_meta_pulse() {
        let params = NoiseParams::rb87();
        let mut rng = StreamFactory::new(17).stream(0, 0, NoiseChannel::Electronic);
        let pulses = vec![
            PulseSignal {
                n_photons: 2.5e7,
                s_y: 0.0,
            };
            40
        ];
        let n = 20_000;
        // regardless of partition, per-meta-pulse electronic variance is V_E
        for sizes in [vec![40usize], vec![10, 10, 10, 10]] {
            let mut draws = Vec::with_capacity(n);
            for _ in 0..n / sizes.len() {
                for meta in aggregate_meta_pulses(&pulses, &sizes, &params, &mut rng).unwrap() {
                    draws.push(meta.s_y);
                }
            }
            let var = sample_variance(&draws);
            assert!(
                (var / params.v_e() - 1.0).abs() < 4.0 * (2.0 / (draws.len() as f64 - 1.0)).sqrt(),
                "sizes {sizes:?}: var {var}"
            );
        }
    }

    #[test]
    fn dispersive_reading_inverts_the_rotation() {
        let params = NoiseParams::new(6.65e-8, 0.0, 0.0, 0.0, SpinF::spin_one()).unwrap();
        let mut rng = StreamFactory::new(0).stream(0, 0, NoiseChannel::Dispersive);
        // shot noise is always physical: at N_L photons the phi spread is
        // 1/sqrt(N_L), so 1e16 photons pin the mean to ~1e-8
        let reading = simulate_dispersive_na(100_000, 1e16, &params, &mut rng).unwrap();
        assert!((reading.phi - 6.65e-3).abs() < 5e-8, "{}", reading.phi);
        assert!((reading.n_atoms - 1e5).abs() < 1.0);
        assert!(simulate_dispersive_na(10, 0.0, &params, &mut rng).is_err());

        // at the largest measured atom number the rotation is ~5.05e-2 rad
        let big = simulate_dispersive_na(760_000, 1e16, &params, &mut rng).unwrap();
        assert!((big.phi - 5.054e-2).abs() < 1e-5, "{}", big.phi);
    }

    #[test]
    fn dispersive_atom_estimate_spread_matches_readout_noise() {
        // shot-only closed form: sigma_na = 1 / (G sqrt(N_L)) = 475.5 atoms
        let params = NoiseParams::new(6.65e-8, 0.0, 0.0, 0.0, SpinF::spin_one()).unwrap();
        let mut rng = StreamFactory::new(13).stream(0, 0, NoiseChannel::Dispersive);
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                simulate_dispersive_na(100_000, 1e9, &params, &mut rng)
                    .unwrap()
                    .n_atoms
            })
            .collect();
        let std = sample_variance(&draws).sqrt();
        assert!((std - 475.5).abs() < 12.0, "std {std}");
    }

    #[test]
    fn imaging_is_identity_at_zero_rms() {
        let mut rng = StreamFactory::new(0).stream(0, 0, NoiseChannel::Imaging);
        assert_eq!(simulate_absorption_imaging(12345, 0.0, &mut rng), 12345.0);
    }

    #[test]
    fn imaging_relative_spread() {
        let mut rng = StreamFactory::new(23).stream(0, 0, NoiseChannel::Imaging);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| simulate_absorption_imaging(100_000, 0.02, &mut rng))
            .collect();
        let rel_std = sample_variance(&draws).sqrt() / 1e5;
        assert!((rel_std - 0.02).abs() < 0.001, "rel std {rel_std}");
    }

    #[test]
    fn binomial_thinning_preserves_expectation() {
        let mut rng = StreamFactory::new(29).stream(0, 0, NoiseChannel::Loss);
        let n0 = 100_000u64;
        let m = 2_000;
        let mean = (0..m)
            .map(|_| binomial_thinning(n0, 0.85, &mut rng) as f64)
            .sum::<f64>()
            / m as f64;
        let expected = 0.85 * n0 as f64;
        // binomial std per draw is sqrt(n p q) ~ 113; 3 sigma of the mean
        let bound = 3.0 * (n0 as f64 * 0.85 * 0.15).sqrt() / (m as f64).sqrt();
        assert!((mean - expected).abs() < bound, "mean {mean} vs {expected}");
    }

    #[test]
    fn sequence_counts_and_decay() {
        let config = SimConfig {
            repetitions: 200,
            ..SimConfig::rb87_campaign(41)
        };
        let dataset = run_sequence(&config).unwrap();
        assert_eq!(dataset.records.len(), 200 * 20);

        // mean atom number in the last cycle ~ 8e5 * 0.85^19 = 3.65e4
        let last: Vec<f64> = dataset
            .records
            .iter()
            .filter(|r| r.cycle == 19)
            .map(|r| r.n_atoms_true as f64)
            .collect();
        let mean = last.iter().sum::<f64>() / last.len() as f64;
        assert!(
            (mean / 3.648e4 - 1.0).abs() < 0.02,
            "final-cycle mean {mean}"
        );

        // atom number is nonincreasing within each repetition
        for rep in 0..5 {
            let counts: Vec<u64> = dataset
                .records
                .iter()
                .filter(|r| r.repetition == rep)
                .map(|r| r.n_atoms_true)
                .collect();
            assert!(counts.windows(2).all(|w| w[1] <= w[0]));
        }

        // meta-pulse photon totals match size * photons_per_pulse
        let record = &dataset.records[0];
        for (meta, &size) in record.meta_pulses.iter().zip(&config.meta_pulse_sizes) {
            assert_eq!(meta.n_photons, size as f64 * 2.5e7);
        }
    }

    #[test]
    fn sequence_is_deterministic() {
        let config = small_config(99);
        let a = run_sequence(&config).unwrap();
        let b = run_sequence(&config).unwrap();
        assert_eq!(a, b);
        let c = run_sequence_sequential(&config).unwrap();
        assert_eq!(a, c);

        let other_seed = run_sequence(&SimConfig { seed: 100, ..config }).unwrap();
        assert_ne!(a, other_seed);
    }

    #[test]
    fn tabulation_groups_by_cycle_and_meta() {
        let config = small_config(5);
        let dataset = run_sequence(&config).unwrap();
        let tab = tabulate_variances(&dataset, &NaBinning::PerCycle);
        assert_eq!(tab.points.len(), 5 * config.meta_pulse_sizes.len());
        assert_eq!(tab.dropped_bins, 0);
        for p in &tab.points {
            assert_eq!(p.m_samples, 20);
            assert!(p.variance > 0.0);
            assert!(p.n_atoms > 0.0);
        }
    }

    #[test]
    fn tabulation_constant_signals_have_zero_variance() {
        let mut config = small_config(5);
        config.truth = NoiseParams::new(6.65e-8, 0.0, 0.0, 0.0, SpinF::spin_one()).unwrap();
        config.loading.relative_rms = 0.0;
        config.loss_per_cycle = 0.0;
        config.imaging_rms = 0.0;
        let dataset = run_sequence_with_toggles(&config, NoiseToggles::none()).unwrap();
        let tab = tabulate_variances(&dataset, &NaBinning::PerCycle);
        for p in &tab.points {
            assert_eq!(p.variance, 0.0);
        }
    }

    #[test]
    fn tabulation_by_edges_drops_out_of_range() {
        let config = small_config(5);
        let dataset = run_sequence(&config).unwrap();
        // single bin catching everything
        let all = tabulate_variances(&dataset, &NaBinning::ByAtomEdges(vec![0.0, 1e9]));
        assert_eq!(all.points.len(), config.meta_pulse_sizes.len());
        // empty range drops everything silently
        let none = tabulate_variances(&dataset, &NaBinning::ByAtomEdges(vec![1e9, 2e9]));
        assert!(none.points.is_empty());
    }
}
