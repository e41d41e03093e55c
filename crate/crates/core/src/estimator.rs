//! Recovery of the noise constants from measured variance tables.
//!
//! After subtracting the shot term N_L/4, which is fixed by the counting
//! convention, the variance model is linear in four coefficients:
//!
//! ```text
//! var(S_y) - N_L/4 = V_E * 1 + alpha * N_L^2 + A * N_L^2 N_A + B * N_L^2 N_A^2
//! ```
//!
//! with A = G^2 V_1 / 4 and B = beta * A. The fit is weighted least
//! squares with variance-of-variance weights: a sample variance over m
//! Gaussian samples has variance 2 sigma^4 / (m-1), so the weight of a
//! table row is w = (m-1) / (2 v_tot^2) with v_tot the *model-predicted*
//! total variance. Since the prediction needs the coefficients, the fit is
//! iterated (IRLS), seeded by weights from the measured variances.
//! Weighting by the noisy measured variances directly would pull the fit
//! toward downward-fluctuating rows and bias the coefficients low.
//!
//! The weighted system is solved by Householder QR on the column-scaled
//! design; the unscaled normal matrix is never formed or inverted.

use crate::model::{ModelError, NoiseParams, SpinF};
use thiserror::Error;

/// An aggregated variance observation: one row of the fit input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariancePoint {
    /// Mean imaged atom number of the bin.
    pub n_atoms: f64,
    /// Photon total of the meta-pulse.
    pub n_photons: f64,
    /// Sample variance of the meta-pulse S_y across the bin.
    pub variance: f64,
    /// Number of samples entering the variance.
    pub m_samples: u64,
}

impl VariancePoint {
    pub fn new(n_atoms: f64, n_photons: f64, variance: f64, m_samples: u64) -> Result<Self, FitError> {
        if m_samples < 2 {
            return Err(FitError::InvalidInput(format!(
                "variance point needs m_samples >= 2, got {m_samples}"
            )));
        }
        if !(variance >= 0.0) {
            return Err(FitError::InvalidInput(format!(
                "variance must be >= 0, got {variance}"
            )));
        }
        if !(n_atoms >= 0.0) || !(n_photons >= 0.0) {
            return Err(FitError::InvalidInput(
                "counts must be >= 0".into(),
            ));
        }
        Ok(Self {
            n_atoms,
            n_photons,
            variance,
            m_samples,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("ill-posed design: condition estimate {condition:.3e} exceeds {limit:.1e}")]
    IllPosedDesign { condition: f64, limit: f64 },
    #[error("atomic term unidentifiable: {0}")]
    AtomicTermUnidentifiable(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl FitError {
    /// Stable machine-readable error name (part of the CLI contract).
    pub fn name(&self) -> &'static str {
        match self {
            FitError::IllPosedDesign { .. } => "ill-posed-design",
            FitError::AtomicTermUnidentifiable(_) => "atomic-term-unidentifiable",
            FitError::InvalidInput(_) => "invalid-input",
            FitError::Model(_) => "invalid-input",
        }
    }
}

/// Condition-number ceiling beyond which the design is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

const BASIS_COLUMNS: usize = 4;

/// Shot-subtracted response and unit-norm-scaled basis for the linear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    /// y_i = variance_i - N_L_i / 4.
    pub response: Vec<f64>,
    /// Rows of the scaled basis {1, N_L^2, N_L^2 N_A, N_L^2 N_A^2}.
    pub basis: Vec<[f64; BASIS_COLUMNS]>,
    /// Euclidean column norms divided out of the basis; scale factor 1 is
    /// kept for all-zero columns. Back-transform: c_j = c_scaled_j / scale_j.
    pub scales: [f64; BASIS_COLUMNS],
    /// 2-norm condition estimate of the scaled basis.
    pub condition: f64,
}

impl Design {
    pub fn require_full_rank(&self) -> Result<(), FitError> {
        if self.basis.len() < BASIS_COLUMNS || !(self.condition <= CONDITION_LIMIT) {
            return Err(FitError::IllPosedDesign {
                condition: self.condition,
                limit: CONDITION_LIMIT,
            });
        }
        Ok(())
    }
}

fn raw_basis_row(p: &VariancePoint) -> [f64; BASIS_COLUMNS] {
    let nl2 = p.n_photons * p.n_photons;
    [1.0, nl2, nl2 * p.n_atoms, nl2 * p.n_atoms * p.n_atoms]
}

/// Builds the shot-subtracted linear system from a variance table.
///
/// Construction itself never fails; fitness for solving is reported by the
/// embedded condition estimate and checked by [`Design::require_full_rank`].
pub fn build_design(points: &[VariancePoint]) -> Design {
    let mut basis: Vec<[f64; BASIS_COLUMNS]> = points.iter().map(raw_basis_row).collect();
    let response: Vec<f64> = points
        .iter()
        .map(|p| p.variance - p.n_photons / 4.0)
        .collect();

    let mut scales = [1.0; BASIS_COLUMNS];
    for j in 0..BASIS_COLUMNS {
        let norm = basis.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
        if norm > 0.0 {
            scales[j] = norm;
            for row in &mut basis {
                row[j] /= norm;
            }
        }
    }

    let condition = condition_estimate(&basis);
    Design {
        response,
        basis,
        scales,
        condition,
    }
}

/// 2-norm condition of the scaled basis via the eigenvalues of the KxK
/// Gram matrix (Jacobi sweeps).
fn condition_estimate<const K: usize>(basis: &[[f64; K]]) -> f64 {
    if basis.is_empty() {
        return f64::INFINITY;
    }
    let mut gram = [[0.0; K]; K];
    for row in basis {
        for i in 0..K {
            for j in 0..K {
                gram[i][j] += row[i] * row[j];
            }
        }
    }
    let eigen = jacobi_eigenvalues(gram);
    let max = eigen.iter().cloned().fold(f64::MIN, f64::max);
    let min = eigen.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        (max / min).sqrt()
    }
}

/// Eigenvalues of a symmetric KxK matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues<const K: usize>(mut a: [[f64; K]; K]) -> [f64; K] {
    for _sweep in 0..50 {
        let mut off = 0.0;
        for i in 0..K {
            for j in (i + 1)..K {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..K {
            for q in (p + 1)..K {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..K {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..K {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut diag = [0.0; K];
    for (i, d) in diag.iter_mut().enumerate() {
        *d = a[i][i];
    }
    diag
}

/// Householder QR least squares for a tall k-column system.
///
/// Returns the solution and the inverse of the triangular factor, from
/// which the solution covariance is (R^-1)(R^-1)^T.
struct LeastSquares<const K: usize> {
    solution: [f64; K],
    r_inverse: [[f64; K]; K],
}

fn householder_solve<const K: usize>(
    rows: &[[f64; K]],
    rhs: &[f64],
) -> Option<LeastSquares<K>> {
    let n = rows.len();
    if n < K {
        return None;
    }
    // column-major working copy
    let mut cols: Vec<Vec<f64>> = (0..K).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = rhs.to_vec();

    let mut r = [[0.0; K]; K];
    for j in 0..K {
        let norm = cols[j][j..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None; // rank deficient
        }
        let alpha = if cols[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[j][j..].to_vec();
        v[0] -= alpha;
        let vtv = v.iter().map(|x| x * x).sum::<f64>();
        if vtv > 0.0 {
            for (l, col) in cols.iter_mut().enumerate().skip(j) {
                let dot: f64 = v.iter().zip(&col[j..]).map(|(a, b)| a * b).sum();
                let factor = 2.0 * dot / vtv;
                for (vi, c) in v.iter().zip(col[j..].iter_mut()) {
                    *c -= factor * vi;
                }
                // enforce the exact triangular zero pattern
                if l == j {
                    col[j] = alpha;
                    for c in col[j + 1..].iter_mut() {
                        *c = 0.0;
                    }
                }
            }
            let dot: f64 = v.iter().zip(&b[j..]).map(|(a, b)| a * b).sum();
            let factor = 2.0 * dot / vtv;
            for (vi, bi) in v.iter().zip(b[j..].iter_mut()) {
                *bi -= factor * vi;
            }
        }
        for l in j..K {
            r[j][l] = cols[l][j];
        }
    }

    // back substitution R x = Q^T b
    let mut x = [0.0; K];
    for i in (0..K).rev() {
        if r[i][i] == 0.0 {
            return None;
        }
        let mut acc = b[i];
        for l in (i + 1)..K {
            acc -= r[i][l] * x[l];
        }
        x[i] = acc / r[i][i];
    }

    // triangular inverse
    let mut r_inv = [[0.0; K]; K];
    for i in (0..K).rev() {
        r_inv[i][i] = 1.0 / r[i][i];
        for l in (i + 1)..K {
            let mut acc = 0.0;
            for m in (i + 1)..=l {
                acc += r[i][m] * r_inv[m][l];
            }
            r_inv[i][l] = -acc / r[i][i];
        }
    }

    Some(LeastSquares {
        solution: x,
        r_inverse: r_inv,
    })
}

/// Knobs of the iterative fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Reweighting rounds before giving up on convergence.
    pub max_iterations: usize,
    /// Relative coefficient change below which the iteration stops.
    pub convergence_tol: f64,
    /// Diagnostic mode: fit the shot term as a fifth coefficient of
    /// basis column N_L instead of subtracting the known N_L/4. The shot
    /// coefficient should come back as 1/4 when the counting convention
    /// holds; a drift flags a gain miscalibration.
    pub fit_shot_term: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            convergence_tol: 1e-6,
            fit_shot_term: false,
        }
    }
}

/// Outcome of the noise-surface fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Physical parameters implied by the coefficients. V_E, alpha, and
    /// beta are clamped at zero here if a noisy estimate crosses the
    /// physical boundary; `coefficients` keeps the raw values.
    pub params: NoiseParams,
    /// Raw back-transformed coefficients (V_E, alpha, A, B) with
    /// A = G^2 V_1 / 4 and B = beta A.
    pub coefficients: [f64; 4],
    /// Covariance of the coefficients from the final weighted system.
    pub covariance: [[f64; 4]; 4],
    /// Per-point residuals, measured minus fitted variance.
    pub residuals: Vec<f64>,
    /// Weighted sum of squared residuals at the final weights.
    pub chi_square: f64,
    /// Points minus fitted coefficients.
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Fitted shot coefficient (expected 1/4); present only in the
    /// diagnostic mode of [`FitOptions::fit_shot_term`].
    pub shot_coefficient: Option<f64>,
}

impl FitResult {
    pub fn chi_square_per_dof(&self) -> f64 {
        self.chi_square / self.dof as f64
    }

    pub fn g(&self) -> f64 {
        self.params.g()
    }

    /// First-order propagation through G = sqrt(4 A / V_1):
    /// sigma_G = sigma_A / sqrt(A V_1).
    pub fn g_uncertainty(&self) -> f64 {
        let a = self.coefficients[2];
        let v1 = self.params.v1();
        self.covariance[2][2].sqrt() / (a * v1).sqrt()
    }

    pub fn beta(&self) -> f64 {
        self.coefficients[3] / self.coefficients[2]
    }

    /// First-order propagation through beta = B / A including the A-B
    /// covariance.
    pub fn beta_uncertainty(&self) -> f64 {
        let a = self.coefficients[2];
        let b = self.coefficients[3];
        let var_a = self.covariance[2][2];
        let var_b = self.covariance[3][3];
        let cov_ab = self.covariance[2][3];
        let var = var_b / (a * a) + b * b * var_a / (a * a * a * a)
            - 2.0 * b * cov_ab / (a * a * a);
        var.max(0.0).sqrt()
    }

    pub fn v_e_uncertainty(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn alpha_uncertainty(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

fn variance_of_variance_weight(m_samples: u64, total_variance: f64, floor: f64) -> f64 {
    let v = total_variance.max(floor);
    (m_samples as f64 - 1.0) / (2.0 * v * v)
}

/// Fits the four-coefficient noise surface to a variance table.
pub fn fit_noise_surface(points: &[VariancePoint], f: SpinF) -> Result<FitResult, FitError> {
    fit_noise_surface_with(points, f, &FitOptions::default())
}

pub fn fit_noise_surface_with(
    points: &[VariancePoint],
    f: SpinF,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    if points.is_empty() {
        return Err(FitError::IllPosedDesign {
            condition: f64::INFINITY,
            limit: CONDITION_LIMIT,
        });
    }
    for p in points {
        if p.m_samples < 2 || !(p.variance >= 0.0) {
            return Err(FitError::InvalidInput(
                "variance points need m_samples >= 2 and variance >= 0".into(),
            ));
        }
    }
    if points.iter().all(|p| p.n_atoms == 0.0 || p.n_photons == 0.0) {
        return Err(FitError::AtomicTermUnidentifiable(
            "no rows with both atoms and photons; atomic basis columns vanish".into(),
        ));
    }

    if options.fit_shot_term {
        // diagnostic basis {1, N_L, N_L^2, N_L^2 N_A, N_L^2 N_A^2} with the
        // full variance as response
        let rows: Vec<[f64; 5]> = points
            .iter()
            .map(|p| {
                let nl2 = p.n_photons * p.n_photons;
                [
                    1.0,
                    p.n_photons,
                    nl2,
                    nl2 * p.n_atoms,
                    nl2 * p.n_atoms * p.n_atoms,
                ]
            })
            .collect();
        let response: Vec<f64> = points.iter().map(|p| p.variance).collect();
        let irls = run_irls::<5>(rows, response, points, 0.0, options)?;
        let c = irls.coefficients;
        let main = [c[0], c[2], c[3], c[4]];
        let index = [0usize, 2, 3, 4];
        let mut covariance = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                covariance[i][j] = irls.covariance[index[i]][index[j]];
            }
        }
        finish_fit(points, f, main, covariance, Some(c[1]), irls, 5)
    } else {
        // the canonical 4-column design: shot subtracted as known
        let design = build_design(points);
        design.require_full_rank()?;
        let rows: Vec<[f64; 4]> = points.iter().map(|p| raw_basis_row(p)).collect();
        let response = design.response.clone();
        let irls = run_irls::<4>(rows, response, points, 0.25, options)?;
        let coefficients = irls.coefficients;
        let covariance = irls.covariance;
        finish_fit(points, f, coefficients, covariance, None, irls, 4)
    }
}

struct IrlsOutcome<const K: usize> {
    coefficients: [f64; K],
    covariance: [[f64; K]; K],
    weights: Vec<f64>,
    converged: bool,
    iterations: usize,
    /// N_L coefficient of the offset added to predictions (the known shot
    /// term for the 4-column basis, zero in diagnostic mode).
    shot_offset: f64,
}

impl<const K: usize> IrlsOutcome<K> {
    fn predicted_total(&self, raw_row: &[f64; K], n_photons: f64) -> f64 {
        self.shot_offset * n_photons
            + self
                .coefficients
                .iter()
                .zip(raw_row)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }
}

/// Iteratively reweighted least squares on the given raw basis.
///
/// `shot_offset` is the per-photon variance added to every model
/// prediction outside the fitted coefficients (1/4 when the shot term was
/// subtracted from the response, 0 when it is being fitted).
fn run_irls<const K: usize>(
    raw_rows: Vec<[f64; K]>,
    response: Vec<f64>,
    points: &[VariancePoint],
    shot_offset: f64,
    options: &FitOptions,
) -> Result<IrlsOutcome<K>, FitError> {
    // unit-norm column scaling; zero columns keep scale 1
    let mut basis = raw_rows.clone();
    let mut scales = [1.0; K];
    for j in 0..K {
        let norm = basis.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
        if norm > 0.0 {
            scales[j] = norm;
            for row in &mut basis {
                row[j] /= norm;
            }
        }
    }
    let condition = condition_estimate(&basis);
    if basis.len() < K || !(condition <= CONDITION_LIMIT) {
        return Err(FitError::IllPosedDesign {
            condition,
            limit: CONDITION_LIMIT,
        });
    }

    // weight floor guards rows with zero measured/predicted variance
    let scale = points
        .iter()
        .map(|p| p.variance.abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let floor = 1e-12 * scale;

    let mut weights: Vec<f64> = points
        .iter()
        .map(|p| variance_of_variance_weight(p.m_samples, p.variance, floor))
        .collect();

    let mut outcome = IrlsOutcome {
        coefficients: [0.0; K],
        covariance: [[0.0; K]; K],
        weights: weights.clone(),
        converged: false,
        iterations: 0,
        shot_offset,
    };
    let mut solved: Option<LeastSquares<K>> = None;

    for iteration in 1..=options.max_iterations {
        outcome.iterations = iteration;
        let rows: Vec<[f64; K]> = basis
            .iter()
            .zip(&weights)
            .map(|(row, w)| {
                let sw = w.sqrt();
                let mut out = [0.0; K];
                for (o, x) in out.iter_mut().zip(row) {
                    *o = x * sw;
                }
                out
            })
            .collect();
        let rhs: Vec<f64> = response
            .iter()
            .zip(&weights)
            .map(|(y, w)| y * w.sqrt())
            .collect();

        let ls = householder_solve::<K>(&rows, &rhs).ok_or(FitError::IllPosedDesign {
            condition,
            limit: CONDITION_LIMIT,
        })?;

        let mut new_coefficients = [0.0; K];
        for j in 0..K {
            new_coefficients[j] = ls.solution[j] / scales[j];
        }

        let max_change = outcome
            .coefficients
            .iter()
            .zip(&new_coefficients)
            .map(|(old, new)| {
                let denom = new.abs().max(floor);
                (new - old).abs() / denom
            })
            .fold(0.0, f64::max);
        outcome.coefficients = new_coefficients;
        solved = Some(ls);

        if iteration > 1 && max_change < options.convergence_tol {
            outcome.converged = true;
            break;
        }

        // reweight from the model-predicted total variance
        for ((w, p), raw_row) in weights.iter_mut().zip(points).zip(&raw_rows) {
            let predicted = outcome.predicted_total(raw_row, p.n_photons);
            *w = variance_of_variance_weight(p.m_samples, predicted, floor);
        }
    }

    // covariance = (X^T W X)^-1 = Rinv Rinv^T, unscaled per column
    let ls = solved.expect("at least one IRLS iteration ran");
    for i in 0..K {
        for j in 0..K {
            let mut acc = 0.0;
            for k in 0..K {
                acc += ls.r_inverse[i][k] * ls.r_inverse[j][k];
            }
            outcome.covariance[i][j] = acc / (scales[i] * scales[j]);
        }
    }
    outcome.weights = weights;
    Ok(outcome)
}

fn finish_fit<const K: usize>(
    points: &[VariancePoint],
    f: SpinF,
    coefficients: [f64; 4],
    covariance: [[f64; 4]; 4],
    shot_coefficient: Option<f64>,
    irls: IrlsOutcome<K>,
    fitted_columns: usize,
) -> Result<FitResult, FitError> {
    let a = coefficients[2];
    if !(a > 0.0) {
        return Err(FitError::AtomicTermUnidentifiable(format!(
            "projection coefficient A = {a:.3e} is not positive"
        )));
    }

    let shot = shot_coefficient.unwrap_or(0.25);
    let predicted = |p: &VariancePoint| {
        let row = raw_basis_row(p);
        shot * p.n_photons
            + coefficients
                .iter()
                .zip(&row)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    };
    let residuals: Vec<f64> = points.iter().map(|p| p.variance - predicted(p)).collect();
    let chi_square: f64 = residuals
        .iter()
        .zip(&irls.weights)
        .map(|(r, w)| w * r * r)
        .sum();

    let v1 = f.v1();
    let g = (4.0 * a / v1).sqrt();
    let params = NoiseParams::new(
        g,
        coefficients[0].max(0.0),
        coefficients[1].max(0.0),
        (coefficients[3] / a).max(0.0),
        f,
    )?;

    Ok(FitResult {
        params,
        coefficients,
        covariance,
        residuals,
        chi_square,
        dof: points.len() - fitted_columns,
        converged: irls.converged,
        iterations: irls.iterations,
        shot_coefficient,
    })
}

/// Through-origin slope of rotation angle vs atom number: the dispersive
/// calibration of G. Returns `(g, sigma_g)` with the uncertainty from the
/// residual scatter.
pub fn calibrate_g_dispersive(pairs: &[(f64, f64)]) -> Result<(f64, f64), FitError> {
    if pairs.len() < 2 {
        return Err(FitError::InvalidInput(format!(
            "dispersive calibration needs >= 2 (phi, n_atoms) pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|&(_, n)| !(n > 0.0)) {
        return Err(FitError::InvalidInput(
            "dispersive calibration needs n_atoms > 0 in every pair".into(),
        ));
    }
    let sum_nn: f64 = pairs.iter().map(|&(_, n)| n * n).sum();
    let sum_pn: f64 = pairs.iter().map(|&(phi, n)| phi * n).sum();
    let g = sum_pn / sum_nn;
    let residual_ss: f64 = pairs
        .iter()
        .map(|&(phi, n)| {
            let r = phi - g * n;
            r * r
        })
        .sum();
    let sigma = (residual_ss / (pairs.len() as f64 - 1.0) / sum_nn).sqrt();
    Ok((g, sigma))
}

/// Agreement report between two independent estimates of G.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    /// |g1 - g2| / sqrt(sigma1^2 + sigma2^2).
    pub sigma_distance: f64,
    pub passes_sigma: bool,
    /// |g1 - g2| relative to the second (dispersive) estimate.
    pub relative_discrepancy: f64,
    pub passes_relative: bool,
}

impl ConsistencyReport {
    pub fn passes(&self) -> bool {
        self.passes_sigma && self.passes_relative
    }
}

/// Compares the noise-scaling estimate of G against the dispersive one:
/// agreement within 3 combined sigma and within 10% relative.
pub fn consistency_check(fit: (f64, f64), dispersive: (f64, f64)) -> ConsistencyReport {
    let (g1, s1) = fit;
    let (g2, s2) = dispersive;
    let combined = (s1 * s1 + s2 * s2).sqrt();
    let sigma_distance = if combined > 0.0 {
        (g1 - g2).abs() / combined
    } else if g1 == g2 {
        0.0
    } else {
        f64::INFINITY
    };
    let relative_discrepancy = if g2 != 0.0 {
        (g1 - g2).abs() / g2.abs()
    } else {
        f64::INFINITY
    };
    ConsistencyReport {
        sigma_distance,
        passes_sigma: sigma_distance < 3.0,
        relative_discrepancy,
        passes_relative: relative_discrepancy < 0.10,
    }
}
