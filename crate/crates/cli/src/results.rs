//! Fit results file: JSON with a schema version field.

use projnoise::estimator::{ConsistencyReport, FitResult};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub n_points: usize,
    pub dropped_bins: usize,
    /// Raw coefficients (v_e, alpha, a, b) of the shot-subtracted basis
    /// {1, N_L^2, N_L^2 N_A, N_L^2 N_A^2}; a = G^2 V_1 / 4, b = beta a.
    pub coefficients: [f64; 4],
    pub covariance: Vec<Vec<f64>>,
    pub g: f64,
    pub g_sigma: f64,
    pub beta: f64,
    pub beta_sigma: f64,
    pub v_e: f64,
    pub v_e_sigma: f64,
    pub alpha: f64,
    pub alpha_sigma: f64,
    pub f: f64,
    pub v1: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub chi_square_per_dof: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Present only when the shot term was fitted diagnostically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersive: Option<DispersiveBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersiveBlock {
    pub g: f64,
    pub sigma: f64,
    pub consistency: ConsistencyBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyBlock {
    pub sigma_distance: f64,
    pub passes_sigma: bool,
    pub relative_discrepancy: f64,
    pub passes_relative: bool,
}

impl From<&ConsistencyReport> for ConsistencyBlock {
    fn from(report: &ConsistencyReport) -> Self {
        Self {
            sigma_distance: report.sigma_distance,
            passes_sigma: report.passes_sigma,
            relative_discrepancy: report.relative_discrepancy,
            passes_relative: report.passes_relative,
        }
    }
}

pub fn fit_report(
    fit: &FitResult,
    n_points: usize,
    dropped_bins: usize,
    dispersive: Option<DispersiveBlock>,
) -> FitReport {
    FitReport {
        schema_version: SCHEMA_VERSION,
        n_points,
        dropped_bins,
        coefficients: fit.coefficients,
        covariance: fit
            .covariance
            .iter()
            .map(|row| row.to_vec())
            .collect(),
        g: fit.g(),
        g_sigma: fit.g_uncertainty(),
        beta: fit.beta(),
        beta_sigma: fit.beta_uncertainty(),
        v_e: fit.coefficients[0],
        v_e_sigma: fit.v_e_uncertainty(),
        alpha: fit.coefficients[1],
        alpha_sigma: fit.alpha_uncertainty(),
        f: fit.params.f().value(),
        v1: fit.params.v1(),
        chi_square: fit.chi_square,
        dof: fit.dof,
        chi_square_per_dof: fit.chi_square_per_dof(),
        converged: fit.converged,
        iterations: fit.iterations,
        shot_coefficient: fit.shot_coefficient,
        dispersive,
    }
}

/// Flat `key,value` rendering for the csv output flag.
pub fn to_csv(report: &FitReport) -> String {
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push(',');
        out.push_str(&v);
        out.push('\n');
    };
    push("schema_version", report.schema_version.to_string());
    push("n_points", report.n_points.to_string());
    push("dropped_bins", report.dropped_bins.to_string());
    push("g", report.g.to_string());
    push("g_sigma", report.g_sigma.to_string());
    push("beta", report.beta.to_string());
    push("beta_sigma", report.beta_sigma.to_string());
    push("v_e", report.v_e.to_string());
    push("v_e_sigma", report.v_e_sigma.to_string());
    push("alpha", report.alpha.to_string());
    push("alpha_sigma", report.alpha_sigma.to_string());
    push("f", report.f.to_string());
    push("v1", report.v1.to_string());
    push("chi_square", report.chi_square.to_string());
    push("dof", report.dof.to_string());
    push("chi_square_per_dof", report.chi_square_per_dof.to_string());
    push("converged", report.converged.to_string());
    push("iterations", report.iterations.to_string());
    if let Some(shot) = report.shot_coefficient {
        push("shot_coefficient", shot.to_string());
    }
    for (i, row) in report.covariance.iter().enumerate() {
        for (j, value) in row.iter().enumerate() {
            push(&format!("covariance_{i}_{j}"), value.to_string());
        }
    }
    if let Some(d) = &report.dispersive {
        push("dispersive_g", d.g.to_string());
        push("dispersive_sigma", d.sigma.to_string());
        push("consistency_sigma_distance", d.consistency.sigma_distance.to_string());
        push("consistency_passes_sigma", d.consistency.passes_sigma.to_string());
        push(
            "consistency_relative_discrepancy",
            d.consistency.relative_discrepancy.to_string(),
        );
        push(
            "consistency_passes_relative",
            d.consistency.passes_relative.to_string(),
        );
    }
    out
}
