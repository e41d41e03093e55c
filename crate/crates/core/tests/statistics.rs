//! Statistical invariants of the simulator, checked against closed forms.
//!
//! Tolerances come from sampling theory: the sample variance of m Gaussian
//! draws has relative spread sqrt(2/(m-1)), and tests allow 4 of those.

use projnoise::estimator;
use projnoise::model::{self, NoiseParams, OperatingPoint, SpinF};
use projnoise::sim::{
    run_sequence, run_sequence_with_toggles, sample_thermal_fz, tabulate_variances, AtomLoading,
    NaBinning, NoiseToggles, SimConfig,
};

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// One cycle, fixed atom number, single full-train meta-pulse.
fn isolation_config(seed: u64) -> SimConfig {
    SimConfig {
        repetitions: 500,
        cycles_per_load: 1,
        loading: AtomLoading {
            mean: 7.6e5,
            relative_rms: 0.0,
        },
        loss_per_cycle: 0.0,
        pulses_per_train: 40,
        meta_pulse_sizes: vec![40],
        imaging_rms: 0.0,
        ..SimConfig::rb87_campaign(seed)
    }
}

fn isolated_variance(seed: u64, toggles: NoiseToggles) -> f64 {
    let config = isolation_config(seed);
    let dataset = run_sequence_with_toggles(&config, toggles).unwrap();
    let values: Vec<f64> = dataset
        .records
        .iter()
        .map(|r| r.meta_pulses[0].s_y)
        .collect();
    assert_eq!(values.len(), 500);
    sample_variance(&values)
}

#[test]
fn single_source_isolation_matches_closed_forms() {
    let params = NoiseParams::rb87();
    let nl: f64 = 1e9;
    let na: f64 = 7.6e5;
    let per_atom = params.g() * params.g() * params.v1() * nl * nl / 4.0;
    let tolerance = 4.0 * (2.0f64 / 499.0).sqrt();

    let cases: [(&str, NoiseToggles, f64); 5] = [
        (
            "shot",
            NoiseToggles {
                shot: true,
                ..NoiseToggles::none()
            },
            nl / 4.0,
        ),
        (
            "electronic",
            NoiseToggles {
                electronic: true,
                ..NoiseToggles::none()
            },
            params.v_e(),
        ),
        (
            "light technical",
            NoiseToggles {
                light_technical: true,
                ..NoiseToggles::none()
            },
            params.alpha() * nl * nl,
        ),
        (
            "atomic technical",
            NoiseToggles {
                atomic_technical: true,
                ..NoiseToggles::none()
            },
            params.beta() * per_atom * na * na,
        ),
        (
            "projection",
            NoiseToggles {
                projection: true,
                ..NoiseToggles::none()
            },
            per_atom * na,
        ),
    ];

    for (i, (name, toggles, expected)) in cases.iter().enumerate() {
        let measured = isolated_variance(100 + i as u64, *toggles);
        let rel = (measured / expected - 1.0).abs();
        assert!(
            rel < tolerance,
            "{name}: measured {measured:.4e}, expected {expected:.4e}, rel {rel:.3} > {tolerance:.3}"
        );
    }
}

/// Exact thermal-state oracle: configuration counts of every collective
/// F_z value for n spin-1 atoms, by full enumeration of the 3^n
/// configurations. Entry k holds the count for sum = k - n.
fn enumerate_spin_one_sums(n_atoms: usize) -> Vec<u64> {
    let mut counts = vec![1u64];
    for _ in 0..n_atoms {
        let mut next = vec![0u64; counts.len() + 2];
        for (i, &c) in counts.iter().enumerate() {
            next[i] += c;
            next[i + 1] += c;
            next[i + 2] += c;
        }
        counts = next;
    }
    counts
}

#[test]
fn thermal_enumeration_variance_is_exact() {
    // integer moments keep the arithmetic exact: variance is a single
    // division of two exactly representable integers
    for n in 1..=4usize {
        let counts = enumerate_spin_one_sums(n);
        let total: u64 = counts.iter().sum();
        assert_eq!(total, 3u64.pow(n as u32));
        let mut sum = 0i64;
        let mut sum_sq = 0u64;
        for (i, &c) in counts.iter().enumerate() {
            let s = i as i64 - n as i64;
            sum += s * c as i64;
            sum_sq += (s * s) as u64 * c;
        }
        assert_eq!(sum, 0, "n = {n}");
        let var = sum_sq as f64 / total as f64;
        assert_eq!(var, 2.0 * n as f64 / 3.0, "n = {n}");
        assert_eq!(
            var,
            model::thermal_variance(n as f64, SpinF::spin_one()),
            "n = {n}"
        );
    }
}

#[test]
fn thermal_sampler_matches_enumerated_distribution() {
    use projnoise::rng::{NoiseChannel, StreamFactory};
    // chi-square goodness of fit at 0.1% significance; critical values for
    // 2, 4, 6, 8 degrees of freedom
    let critical = [13.816, 18.467, 22.458, 26.124];
    let draws_per_case = 100_000usize;
    let factory = StreamFactory::new(2024);

    for n in 1..=4usize {
        let counts = enumerate_spin_one_sums(n);
        let total: u64 = counts.iter().sum();
        let mut rng = factory.stream(n, 0, NoiseChannel::Thermal);
        let mut observed = vec![0u64; counts.len()];
        for _ in 0..draws_per_case {
            let s = sample_thermal_fz(n as u64, SpinF::spin_one(), 100, &mut rng);
            let index = (s as i64 + n as i64) as usize;
            observed[index] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&observed)
            .map(|(&c, &obs)| {
                let expected = c as f64 / total as f64 * draws_per_case as f64;
                let d = obs as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(
            chi2 < critical[n - 1],
            "n = {n}: chi2 {chi2:.2} exceeds {}",
            critical[n - 1]
        );
    }
}

#[test]
fn atomic_noise_is_correlated_across_meta_pulses_and_shot_is_not() {
    // two meta-pulses of the same trial share F_z, so their covariance is
    // the full atomic variance in signal units; shot and electronic do not
    // contribute
    let config = SimConfig {
        repetitions: 20_000,
        cycles_per_load: 1,
        loading: AtomLoading {
            mean: 7.6e5,
            relative_rms: 0.0,
        },
        loss_per_cycle: 0.0,
        pulses_per_train: 80,
        meta_pulse_sizes: vec![40, 40],
        imaging_rms: 0.0,
        ..SimConfig::rb87_campaign(404)
    };
    let toggles = NoiseToggles {
        light_technical: false,
        ..NoiseToggles::all()
    };
    let dataset = run_sequence_with_toggles(&config, toggles).unwrap();

    let a: Vec<f64> = dataset.records.iter().map(|r| r.meta_pulses[0].s_y).collect();
    let b: Vec<f64> = dataset.records.iter().map(|r| r.meta_pulses[1].s_y).collect();
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let cov = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - mean_a) * (y - mean_b))
        .sum::<f64>()
        / (n - 1.0);

    let params = NoiseParams::rb87();
    let na: f64 = 7.6e5;
    let nl: f64 = 1e9;
    let var_fz = model::thermal_variance(na, params.f()) * (1.0 + params.beta() * na);
    let expected = params.g() * params.g() * (nl / 2.0) * (nl / 2.0) * var_fz;

    assert!(
        cov > 0.95 * expected,
        "cov {cov:.4e} below 0.95 * {expected:.4e}"
    );
    assert!(
        cov < 1.06 * expected,
        "cov {cov:.4e} above expected {expected:.4e}: uncorrelated noise is leaking"
    );
}

#[test]
fn reported_g_uncertainty_matches_ensemble_spread() {
    // over independent campaigns the spread of fitted G must match the
    // covariance-derived uncertainty within a factor 1.5; the campaigns use
    // a single meta-pulse ladder per train, where the weighted-least-squares
    // independence assumption holds
    let datasets = 200;
    let mut g_values = Vec::with_capacity(datasets);
    let mut sigma_values = Vec::with_capacity(datasets);
    for seed in 0..datasets {
        // the full 20-cycle atom-number decay keeps the linear and
        // quadratic atomic terms separable at this repetition count
        let config = SimConfig {
            repetitions: 150,
            cycles_per_load: 20,
            pulses_per_train: 80,
            meta_pulse_sizes: vec![2, 3, 5, 10, 20, 40],
            ..SimConfig::rb87_campaign(5000 + seed as u64)
        };
        let dataset = run_sequence(&config).unwrap();
        let table = tabulate_variances(&dataset, &NaBinning::PerCycle);
        let fit = estimator::fit_noise_surface(&table.points, SpinF::spin_one()).unwrap();
        g_values.push(fit.g());
        sigma_values.push(fit.g_uncertainty());
    }
    let spread = sample_variance(&g_values).sqrt();
    let reported = sigma_values.iter().sum::<f64>() / datasets as f64;
    let ratio = spread / reported;
    assert!(
        (1.0 / 1.5..1.5).contains(&ratio),
        "spread {spread:.3e} vs reported {reported:.3e}, ratio {ratio:.3}"
    );
    // and the estimates should straddle the truth; a downward-biased
    // weighting scheme would show up here at the several-percent level
    let mean_g = g_values.iter().sum::<f64>() / datasets as f64;
    assert!(
        (mean_g / 6.65e-8 - 1.0).abs() < 0.03,
        "ensemble mean G {mean_g:.4e} biased"
    );
}

#[test]
fn tabulated_variance_tracks_model_at_reference_scale() {
    // full campaign, largest bin: variance close to the model total at
    // (mean imaged N_A of cycle 0, 1e9), chi-square spread of a 500-sample
    // variance allows ~13% at 3 sigma
    let config = SimConfig::rb87_campaign(77);
    let dataset = run_sequence(&config).unwrap();
    let table = tabulate_variances(&dataset, &NaBinning::PerCycle);
    let point = table
        .points
        .iter()
        .filter(|p| p.n_photons == 1e9)
        .max_by(|a, b| a.n_atoms.total_cmp(&b.n_atoms))
        .unwrap();
    let expected = model::variance_model(
        &NoiseParams::rb87(),
        &OperatingPoint::new(point.n_atoms, 1e9).unwrap(),
    );
    let rel = (point.variance / expected - 1.0).abs();
    assert!(
        rel < 3.0 * (2.0f64 / 499.0).sqrt(),
        "variance {:.4e} vs model {expected:.4e}",
        point.variance
    );
}
