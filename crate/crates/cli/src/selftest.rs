//! Fast verification checks: a reduced version of the acceptance suite
//! that finishes in well under a minute.
//!
//! Statistical checks are sized so that their tolerances sit at four or
//! more standard deviations of the sampling spread; they stay green under
//! seed variation, not just at one lucky seed.

use crate::dataset;
use projnoise::estimator::{self, VariancePoint};
use projnoise::model::{self, NoiseParams, OperatingPoint, SpinF};
use projnoise::rng::{NoiseChannel, StreamFactory};
use projnoise::sim::{
    run_sequence, run_sequence_sequential, run_sequence_with_toggles, sample_thermal_fz,
    tabulate_variances, AtomLoading, NaBinning, NoiseToggles, SimConfig,
};

type CheckResult = Result<(), String>;

fn fail(message: impl Into<String>) -> CheckResult {
    Err(message.into())
}

fn check_budget_margins(_seed: u64) -> CheckResult {
    let budget = model::noise_budget(
        &NoiseParams::rb87(),
        &OperatingPoint::new(7.6e5, 1e9).unwrap(),
    );
    let expected = [
        (model::NoiseTerm::LightShot, 3.5, 0.2),
        (model::NoiseTerm::AtomicTechnical, 6.3, 0.2),
        (model::NoiseTerm::LightTechnical, 11.2, 0.3),
        (model::NoiseTerm::Electronic, 30.0, 1.0),
    ];
    for (term, want, tol) in expected {
        let got = budget
            .db_below_projection(term)
            .ok_or_else(|| format!("{} margin undefined", term.label()))?;
        if (got - want).abs() > tol {
            return fail(format!(
                "{} margin {got:.2} dB, expected {want} +/- {tol}",
                term.label()
            ));
        }
    }
    Ok(())
}

fn check_sensitivity_figures(_seed: u64) -> CheckResult {
    let params = NoiseParams::rb87();
    let readout = model::readout_noise_spins(&params, 1e9).map_err(|e| e.to_string())?;
    if !(490.0..=540.0).contains(&readout) {
        return fail(format!("readout noise {readout:.1} spins outside [490, 540]"));
    }
    let projection = model::projection_noise_spins(7.6e5, params.f());
    if (projection - 712.0).abs() > 1.0 {
        return fail(format!("projection noise {projection:.2} spins, expected 712 +/- 1"));
    }
    let margin = 10.0 * (projection * projection / (readout * readout)).log10();
    if (margin - 2.8).abs() > 0.1 {
        return fail(format!("readout margin {margin:.3} dB, expected 2.8 +/- 0.1"));
    }
    Ok(())
}

fn check_crossovers(_seed: u64) -> CheckResult {
    let crossovers = model::crossover_points(&NoiseParams::rb87());
    let atoms = crossovers
        .atoms
        .finite()
        .ok_or("atom crossover unexpectedly unbounded")?;
    let photons = crossovers
        .photons
        .finite()
        .ok_or("photon crossover unexpectedly unbounded")?;
    if (atoms / 3.2e6 - 1.0).abs() > 0.02 {
        return fail(format!("atom crossover {atoms:.3e}, expected 3.2e6 +/- 2%"));
    }
    if (photons / 5.8e9 - 1.0).abs() > 0.02 {
        return fail(format!("photon crossover {photons:.3e}, expected 5.8e9 +/- 2%"));
    }
    Ok(())
}

fn check_noiseless_fit_recovery(_seed: u64) -> CheckResult {
    let truth = NoiseParams::rb87();
    let mut points = Vec::new();
    for na in [0.0, 4e4, 2e5, 7.6e5] {
        for nl in [1e8, 3e8, 1e9] {
            let v = model::variance_model(&truth, &OperatingPoint::new(na, nl).unwrap());
            points.push(VariancePoint::new(na, nl, v, 100).map_err(|e| e.to_string())?);
        }
    }
    let fit = estimator::fit_noise_surface(&points, truth.f()).map_err(|e| e.to_string())?;
    let g_err = (fit.g() / truth.g() - 1.0).abs();
    let beta_err = (fit.beta() / truth.beta() - 1.0).abs();
    if g_err > 1e-8 || beta_err > 1e-8 {
        return fail(format!(
            "noiseless recovery drift: g {g_err:.2e}, beta {beta_err:.2e}"
        ));
    }
    Ok(())
}

fn check_thermal_oracle(seed: u64) -> CheckResult {
    // exact enumeration for 4 spin-1 atoms: counts over sums -4..4
    let counts: [u64; 9] = [1, 4, 10, 16, 19, 16, 10, 4, 1];
    let total: u64 = counts.iter().sum();
    if total != 81 {
        return fail("enumeration total mismatch");
    }
    let sum_sq: u64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let s = i as i64 - 4;
            (s * s) as u64 * c
        })
        .sum();
    let exact_var = sum_sq as f64 / total as f64;
    if exact_var != 8.0 / 3.0 {
        return fail(format!("enumerated variance {exact_var} != 8/3"));
    }
    // fourth moment for the variance-of-variance bound
    let mu4: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let s = (i as i64 - 4) as f64;
            s.powi(4) * c as f64
        })
        .sum::<f64>()
        / total as f64;

    let n = 100_000usize;
    let mut rng = StreamFactory::new(seed).stream(0, 0, NoiseChannel::Thermal);
    let draws: Vec<f64> = (0..n)
        .map(|_| sample_thermal_fz(4, SpinF::spin_one(), 100, &mut rng))
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let sigma = ((mu4 - exact_var * exact_var * (n as f64 - 3.0) / (n as f64 - 1.0)) / n as f64)
        .sqrt();
    if (var - exact_var).abs() > 4.0 * sigma {
        return fail(format!(
            "sampler variance {var:.4} vs exact {exact_var:.4}, bound {:.4}",
            4.0 * sigma
        ));
    }
    Ok(())
}

fn isolation_variance(seed: u64, toggles: NoiseToggles, repetitions: usize) -> f64 {
    let config = SimConfig {
        repetitions,
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
    };
    let dataset = run_sequence_with_toggles(&config, toggles).expect("valid config");
    let values: Vec<f64> = dataset
        .records
        .iter()
        .map(|r| r.meta_pulses[0].s_y)
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
}

fn check_noise_isolation(seed: u64) -> CheckResult {
    let params = NoiseParams::rb87();
    let m = 400usize;
    let tolerance = 4.0 * (2.0 / (m as f64 - 1.0)).sqrt();
    let cases = [
        (
            "shot",
            NoiseToggles {
                shot: true,
                ..NoiseToggles::none()
            },
            2.5e8,
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
            "projection",
            NoiseToggles {
                projection: true,
                ..NoiseToggles::none()
            },
            model::noise_budget(&params, &OperatingPoint::new(7.6e5, 1e9).unwrap())
                .atomic_projection,
        ),
    ];
    for (i, (name, toggles, expected)) in cases.iter().enumerate() {
        let measured = isolation_variance(seed.wrapping_add(i as u64), *toggles, m);
        let rel = (measured / expected - 1.0).abs();
        if rel > tolerance {
            return fail(format!(
                "{name}: variance {measured:.4e} vs {expected:.4e}, rel {rel:.3} > {tolerance:.3}"
            ));
        }
    }
    Ok(())
}

fn check_determinism(seed: u64) -> CheckResult {
    let config = SimConfig {
        repetitions: 8,
        cycles_per_load: 3,
        pulses_per_train: 16,
        meta_pulse_sizes: vec![4, 12],
        ..SimConfig::rb87_campaign(seed)
    };
    let a = run_sequence(&config).map_err(|e| e.to_string())?;
    let b = run_sequence(&config).map_err(|e| e.to_string())?;
    let c = run_sequence_sequential(&config).map_err(|e| e.to_string())?;
    let bytes_a = dataset::serialize(&a);
    if bytes_a != dataset::serialize(&b) {
        return fail("repeated runs differ");
    }
    if bytes_a != dataset::serialize(&c) {
        return fail("parallel and sequential runs differ");
    }
    let parsed = dataset::parse(&bytes_a).map_err(|e| e.to_string())?;
    if parsed != a {
        return fail("serialization round trip is not the identity");
    }
    Ok(())
}

fn check_mc_fit_round_trip(seed: u64) -> CheckResult {
    // reduced campaign: half the repetitions, double meta ladder; the
    // fitted G spread is ~7%, tolerances sit at 4 sigma
    let ladder = [2usize, 3, 5, 10, 20, 40];
    let sizes: Vec<usize> = (0..2).flat_map(|_| ladder).collect();
    let config = SimConfig {
        repetitions: 250,
        pulses_per_train: sizes.iter().sum(),
        meta_pulse_sizes: sizes,
        ..SimConfig::rb87_campaign(seed)
    };
    let truth = config.truth;
    let dataset = run_sequence(&config).map_err(|e| e.to_string())?;
    let table = tabulate_variances(&dataset, &NaBinning::PerCycle);
    let fit = estimator::fit_noise_surface(&table.points, truth.f()).map_err(|e| e.to_string())?;

    let g_err = (fit.g() / truth.g() - 1.0).abs();
    if g_err > 0.30 {
        return fail(format!("fitted G off by {:.1}%", g_err * 100.0));
    }
    let chi2 = fit.chi_square_per_dof();
    if !(0.5..=1.6).contains(&chi2) {
        return fail(format!("chi2/dof {chi2:.3} outside [0.5, 1.6]"));
    }

    let pairs: Vec<(f64, f64)> = dataset
        .records
        .iter()
        .map(|r| (r.dispersive_phi, r.n_atoms_imaging))
        .collect();
    let (g_disp, sigma_disp) = estimator::calibrate_g_dispersive(&pairs).map_err(|e| e.to_string())?;
    if (g_disp / truth.g() - 1.0).abs() > 0.01 {
        return fail(format!("dispersive G {g_disp:.4e} off truth"));
    }
    let report = estimator::consistency_check((fit.g(), fit.g_uncertainty()), (g_disp, sigma_disp));
    if report.sigma_distance > 5.0 {
        return fail(format!(
            "consistency distance {:.2} sigma",
            report.sigma_distance
        ));
    }
    Ok(())
}

/// Runs every check, printing one status line each. Returns the number of
/// failures.
pub fn run(seed: u64) -> usize {
    let checks: [(&str, fn(u64) -> CheckResult); 8] = [
        ("budget-margins", check_budget_margins),
        ("sensitivity-figures", check_sensitivity_figures),
        ("crossovers", check_crossovers),
        ("noiseless-fit-recovery", check_noiseless_fit_recovery),
        ("thermal-oracle", check_thermal_oracle),
        ("noise-isolation", check_noise_isolation),
        ("determinism", check_determinism),
        ("mc-fit-round-trip", check_mc_fit_round_trip),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        match check(seed) {
            Ok(()) => println!("ok   {name}"),
            Err(message) => {
                failures += 1;
                println!("FAIL {name}: {message}");
            }
        }
    }
    println!(
        "selftest: {} checks, {failures} failure{}",
        checks.len(),
        if failures == 1 { "" } else { "s" }
    );
    failures
}
