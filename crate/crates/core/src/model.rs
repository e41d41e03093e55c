//! Closed-form noise model of the Faraday-rotation polarimeter signal.
//!
//! A linearly polarized probe pulse of N_L photons acquires, to first order
//! in the dispersive atom-light interaction, the input-output rotation
//!
//! ```text
//! S_y_out = S_y_in + G * S_x_in * F_z      with  <S_x> = N_L / 2,
//! ```
//!
//! so the mean signal is G (N_L/2) F_z and F_z can be estimated as
//! 2 S_y_out / (G N_L). Propagating the input variances and adding detector
//! noise gives the measurable signal variance as five separable terms:
//!
//! ```text
//! var(S_y) = V_E                            electronic
//!          + N_L / 4                        light shot
//!          + alpha * N_L^2                  light technical
//!          + G^2 V_1 (N_L^2/4) N_A          atomic projection
//!          + beta * G^2 V_1 (N_L^2/4) N_A^2 atomic technical
//! ```
//!
//! where V_1 = F(F+1)/3 is the per-atom spin variance of the thermal
//! (completely mixed) reference state. Every term scales differently with
//! atom and photon number, which is what makes the calibration work: the
//! N_L and N_L^2 N_A terms are the quantum noise of light and atoms and fix
//! the detection gain and the coupling constant absolutely.
//!
//! Everything in this module is a pure function of its inputs.

use thiserror::Error;

/// Errors from parameter construction and the few operations with
/// restricted domains.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Spin quantum number F: a positive integer or half-integer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinF(f64);

impl SpinF {
    pub fn new(f: f64) -> Result<Self, ModelError> {
        if !f.is_finite() || f < 0.5 {
            return Err(ModelError::InvalidParam(format!(
                "spin quantum number must be >= 1/2, got {f}"
            )));
        }
        let doubled = 2.0 * f;
        if (doubled - doubled.round()).abs() > 1e-9 {
            return Err(ModelError::InvalidParam(format!(
                "spin quantum number must be integer or half-integer, got {f}"
            )));
        }
        Ok(Self(f))
    }

    /// F = 1, the ground-state manifold probed by the reference setup.
    pub fn spin_one() -> Self {
        Self(1.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Number of magnetic sublevels, 2F + 1.
    pub fn multiplicity(self) -> u64 {
        (2.0 * self.0 + 1.0).round() as u64
    }

    /// Per-atom variance F(F+1)/3 of any spin component in the completely
    /// mixed state. Equals 2/3 for F = 1.
    pub fn v1(self) -> f64 {
        self.0 * (self.0 + 1.0) / 3.0
    }
}

/// The calibrated constants of the five-term variance model.
///
/// `v1` is always derived from `f`, never fitted independently: the model
/// only ever sees the product G^2 V_1, so letting both float would make the
/// fit unidentifiable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    g: f64,
    v_e: f64,
    alpha: f64,
    beta: f64,
    f: SpinF,
}

impl NoiseParams {
    pub fn new(g: f64, v_e: f64, alpha: f64, beta: f64, f: SpinF) -> Result<Self, ModelError> {
        if !g.is_finite() || g <= 0.0 {
            return Err(ModelError::InvalidParam(format!(
                "coupling constant G must be > 0, got {g}"
            )));
        }
        for (name, value) in [("V_E", v_e), ("alpha", alpha), ("beta", beta)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidParam(format!(
                    "{name} must be >= 0, got {value}"
                )));
            }
        }
        Ok(Self {
            g,
            v_e,
            alpha,
            beta,
            f,
        })
    }

    /// Constants measured for a dipole-trapped Rb-87 ensemble in F = 1,
    /// probed 800 MHz to the red of the F=1 -> F'=0 line.
    pub fn rb87() -> Self {
        Self {
            g: 6.65e-8,
            v_e: 4.9e5,
            alpha: 4.3e-11,
            beta: 3.1e-7,
            f: SpinF::spin_one(),
        }
    }

    /// Coupling constant: S_y rotation per unit F_z per unit S_x.
    pub fn g(&self) -> f64 {
        self.g
    }

    /// Electronic noise variance of the detector chain, in counts^2.
    pub fn v_e(&self) -> f64 {
        self.v_e
    }

    /// Light technical-noise coefficient (multiplies N_L^2).
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Atomic technical-noise coefficient (multiplies N_A^2 V_1).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn f(&self) -> SpinF {
        self.f
    }

    /// Derived per-atom thermal variance F(F+1)/3.
    pub fn v1(&self) -> f64 {
        self.f.v1()
    }
}

/// An (atom number, photon number) pair at which the model is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub n_atoms: f64,
    pub n_photons: f64,
}

impl OperatingPoint {
    pub fn new(n_atoms: f64, n_photons: f64) -> Result<Self, ModelError> {
        for (name, value) in [("n_atoms", n_atoms), ("n_photons", n_photons)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidArgument(format!(
                    "{name} must be a finite count >= 0, got {value}"
                )));
            }
        }
        Ok(Self { n_atoms, n_photons })
    }
}

/// The five variance terms, in the order of [`NoiseTerm`].
fn terms(params: &NoiseParams, point: &OperatingPoint) -> [f64; 5] {
    let nl = point.n_photons;
    let na = point.n_atoms;
    let per_atom = params.g * params.g * params.v1() * nl * nl / 4.0;
    [
        params.v_e,
        nl / 4.0,
        params.alpha * nl * nl,
        per_atom * na,
        params.beta * per_atom * na * na,
    ]
}

/// Total signal variance var(S_y) in counts^2 at one operating point.
pub fn variance_model(params: &NoiseParams, point: &OperatingPoint) -> f64 {
    terms(params, point).iter().sum()
}

/// One of the five variance contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseTerm {
    Electronic,
    LightShot,
    LightTechnical,
    AtomicProjection,
    AtomicTechnical,
}

impl NoiseTerm {
    pub const ALL: [NoiseTerm; 5] = [
        NoiseTerm::Electronic,
        NoiseTerm::LightShot,
        NoiseTerm::LightTechnical,
        NoiseTerm::AtomicProjection,
        NoiseTerm::AtomicTechnical,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NoiseTerm::Electronic => "electronic",
            NoiseTerm::LightShot => "light shot",
            NoiseTerm::LightTechnical => "light technical",
            NoiseTerm::AtomicProjection => "atomic projection",
            NoiseTerm::AtomicTechnical => "atomic technical",
        }
    }
}

/// Term-by-term decomposition of the signal variance at one operating
/// point, with decibel margins relative to the projection term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBudget {
    pub electronic: f64,
    pub light_shot: f64,
    pub light_technical: f64,
    pub atomic_projection: f64,
    pub atomic_technical: f64,
    /// Sum of the five terms; identical to [`variance_model`] by
    /// construction.
    pub total: f64,
}

impl NoiseBudget {
    /// Assembles a budget from raw term values (order of
    /// [`NoiseTerm::ALL`]).
    pub fn from_terms(t: [f64; 5]) -> Self {
        Self {
            electronic: t[0],
            light_shot: t[1],
            light_technical: t[2],
            atomic_projection: t[3],
            atomic_technical: t[4],
            total: t.iter().sum(),
        }
    }

    pub fn term(&self, which: NoiseTerm) -> f64 {
        match which {
            NoiseTerm::Electronic => self.electronic,
            NoiseTerm::LightShot => self.light_shot,
            NoiseTerm::LightTechnical => self.light_technical,
            NoiseTerm::AtomicProjection => self.atomic_projection,
            NoiseTerm::AtomicTechnical => self.atomic_technical,
        }
    }

    /// Decibel margin 10 log10(projection / term).
    ///
    /// `None` when the ratio is undefined, i.e. the term or the projection
    /// contribution is zero.
    pub fn db_below_projection(&self, which: NoiseTerm) -> Option<f64> {
        let term = self.term(which);
        if term > 0.0 && self.atomic_projection > 0.0 {
            Some(10.0 * (self.atomic_projection / term).log10())
        } else {
            None
        }
    }

    /// Margins for the four non-projection terms.
    pub fn db_margins(&self) -> [(NoiseTerm, Option<f64>); 4] {
        [
            NoiseTerm::Electronic,
            NoiseTerm::LightShot,
            NoiseTerm::LightTechnical,
            NoiseTerm::AtomicTechnical,
        ]
        .map(|t| (t, self.db_below_projection(t)))
    }
}

/// Evaluates all five variance terms at one operating point.
pub fn noise_budget(params: &NoiseParams, point: &OperatingPoint) -> NoiseBudget {
    NoiseBudget::from_terms(terms(params, point))
}

/// Thermal-state variance of the collective F_z: n_atoms * F(F+1)/3, in
/// spins^2.
pub fn thermal_variance(n_atoms: f64, f: SpinF) -> f64 {
    n_atoms * f.v1()
}

/// RMS projection noise sqrt(n_atoms * F(F+1)/3), in spins.
pub fn projection_noise_spins(n_atoms: f64, f: SpinF) -> f64 {
    thermal_variance(n_atoms, f).sqrt()
}

/// Inverts the mean rotation: F_z ~ 2 S_y / (G N_L).
pub fn estimate_fz(s_y_out: f64, n_photons: f64, g: f64) -> Result<f64, ModelError> {
    if !(n_photons > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "n_photons must be > 0, got {n_photons}"
        )));
    }
    if !(g > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "coupling constant must be > 0, got {g}"
        )));
    }
    Ok(2.0 * s_y_out / (g * n_photons))
}

/// RMS spin readout noise of an atom-free probe of `n_photons` photons:
/// the light-side variance terms referred back through the F_z estimator,
/// sqrt((V_E + N_L/4 + alpha N_L^2) / (G^2 N_L^2 / 4)).
pub fn readout_noise_spins(params: &NoiseParams, n_photons: f64) -> Result<f64, ModelError> {
    if !(n_photons > 0.0) {
        return Err(ModelError::InvalidArgument(format!(
            "n_photons must be > 0, got {n_photons}"
        )));
    }
    let light_side =
        params.v_e + n_photons / 4.0 + params.alpha * n_photons * n_photons;
    let gain_sq = params.g * params.g * n_photons * n_photons / 4.0;
    Ok((light_side / gain_sq).sqrt())
}

/// A crossover count, or "no crossover" when the technical coefficient
/// vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrossoverBound {
    Finite(f64),
    Unbounded,
}

impl CrossoverBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            CrossoverBound::Finite(v) => Some(v),
            CrossoverBound::Unbounded => None,
        }
    }
}

/// Counts up to which each technical-noise term stays below its quantum
/// counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossoverPoints {
    /// Atom number 1/beta where atomic technical noise meets projection
    /// noise.
    pub atoms: CrossoverBound,
    /// Photon number 1/(4 alpha) where light technical noise meets shot
    /// noise.
    pub photons: CrossoverBound,
}

/// Atom- and photon-number crossovers of technical vs quantum noise.
pub fn crossover_points(params: &NoiseParams) -> CrossoverPoints {
    let atoms = if params.beta > 0.0 {
        CrossoverBound::Finite(1.0 / params.beta)
    } else {
        CrossoverBound::Unbounded
    };
    let photons = if params.alpha > 0.0 {
        CrossoverBound::Finite(1.0 / (4.0 * params.alpha))
    } else {
        CrossoverBound::Unbounded
    };
    CrossoverPoints { atoms, photons }
}
