//! Noise-budget report: the five variance terms at an operating point,
//! decibel margins, readout noise, and technical-noise crossovers.

use projnoise::model::{
    self, CrossoverBound, NoiseBudget, NoiseParams, NoiseTerm, OperatingPoint,
};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    pub n_atoms: f64,
    pub n_photons: f64,
    pub electronic: f64,
    pub light_shot: f64,
    pub light_technical: f64,
    pub atomic_projection: f64,
    pub atomic_technical: f64,
    pub total: f64,
    /// dB below the projection term; absent where undefined.
    pub db_electronic: Option<f64>,
    pub db_light_shot: Option<f64>,
    pub db_light_technical: Option<f64>,
    pub db_atomic_technical: Option<f64>,
    /// Light-side readout noise referred to spins; absent at zero photons.
    pub readout_noise_spins: Option<f64>,
    pub projection_noise_spins: f64,
    /// 10 log10(projection variance / readout variance), in spin units.
    pub readout_margin_db: Option<f64>,
    /// None encodes an unbounded crossover (vanishing coefficient).
    pub crossover_atoms: Option<f64>,
    pub crossover_photons: Option<f64>,
}

pub fn compute(params: &NoiseParams, point: &OperatingPoint) -> BudgetReport {
    let budget: NoiseBudget = model::noise_budget(params, point);
    let crossovers = model::crossover_points(params);
    let readout = model::readout_noise_spins(params, point.n_photons).ok();
    let projection_spins = model::projection_noise_spins(point.n_atoms, params.f());
    let readout_margin_db = readout.and_then(|r| {
        let proj_var = projection_spins * projection_spins;
        let readout_var = r * r;
        (proj_var > 0.0 && readout_var > 0.0)
            .then(|| 10.0 * (proj_var / readout_var).log10())
    });
    let finite = |b: CrossoverBound| b.finite();
    BudgetReport {
        n_atoms: point.n_atoms,
        n_photons: point.n_photons,
        electronic: budget.electronic,
        light_shot: budget.light_shot,
        light_technical: budget.light_technical,
        atomic_projection: budget.atomic_projection,
        atomic_technical: budget.atomic_technical,
        total: budget.total,
        db_electronic: budget.db_below_projection(NoiseTerm::Electronic),
        db_light_shot: budget.db_below_projection(NoiseTerm::LightShot),
        db_light_technical: budget.db_below_projection(NoiseTerm::LightTechnical),
        db_atomic_technical: budget.db_below_projection(NoiseTerm::AtomicTechnical),
        readout_noise_spins: readout,
        projection_noise_spins: projection_spins,
        readout_margin_db,
        crossover_atoms: finite(crossovers.atoms),
        crossover_photons: finite(crossovers.photons),
    }
}

fn db_cell(db: Option<f64>) -> String {
    match db {
        Some(v) => format!("{v:8.2}"),
        None => "      --".to_string(),
    }
}

pub fn render_text(report: &BudgetReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "noise budget at N_A = {:.4e} atoms, N_L = {:.4e} photons\n",
        report.n_atoms, report.n_photons
    ));
    out.push_str("  term                 variance (counts^2)  dB below projection\n");
    let rows = [
        ("electronic", report.electronic, report.db_electronic),
        ("light shot", report.light_shot, report.db_light_shot),
        (
            "light technical",
            report.light_technical,
            report.db_light_technical,
        ),
        ("atomic projection", report.atomic_projection, None),
        (
            "atomic technical",
            report.atomic_technical,
            report.db_atomic_technical,
        ),
    ];
    for (label, variance, db) in rows {
        out.push_str(&format!(
            "  {label:<20} {variance:>12.4e}        {}\n",
            db_cell(db)
        ));
    }
    out.push_str(&format!("  {:<20} {:>12.4e}\n", "total", report.total));
    match report.readout_noise_spins {
        Some(spins) => out.push_str(&format!("readout noise: {spins:.1} spins rms\n")),
        None => out.push_str("readout noise: undefined at zero photons\n"),
    }
    out.push_str(&format!(
        "projection noise: {:.1} spins rms\n",
        report.projection_noise_spins
    ));
    if let Some(db) = report.readout_margin_db {
        out.push_str(&format!("readout margin below projection: {db:.2} dB\n"));
    }
    let fmt_crossover = |c: Option<f64>| match c {
        Some(v) => format!("{v:.4e}"),
        None => "unbounded".to_string(),
    };
    out.push_str(&format!(
        "technical-noise crossovers: N_A {} atoms, N_L {} photons\n",
        fmt_crossover(report.crossover_atoms),
        fmt_crossover(report.crossover_photons)
    ));
    out
}

pub fn render_csv(report: &BudgetReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::new();
    out.push_str(&format!("# n_atoms = {}\n", report.n_atoms));
    out.push_str(&format!("# n_photons = {}\n", report.n_photons));
    out.push_str(&format!(
        "# readout_noise_spins = {}\n",
        opt(report.readout_noise_spins)
    ));
    out.push_str(&format!(
        "# projection_noise_spins = {}\n",
        report.projection_noise_spins
    ));
    out.push_str(&format!(
        "# readout_margin_db = {}\n",
        opt(report.readout_margin_db)
    ));
    out.push_str(&format!(
        "# crossover_atoms = {}\n",
        report
            .crossover_atoms
            .map(|v| v.to_string())
            .unwrap_or_else(|| "unbounded".into())
    ));
    out.push_str(&format!(
        "# crossover_photons = {}\n",
        report
            .crossover_photons
            .map(|v| v.to_string())
            .unwrap_or_else(|| "unbounded".into())
    ));
    out.push_str("term,variance,db_below_projection\n");
    out.push_str(&format!("electronic,{},{}\n", report.electronic, opt(report.db_electronic)));
    out.push_str(&format!("light_shot,{},{}\n", report.light_shot, opt(report.db_light_shot)));
    out.push_str(&format!(
        "light_technical,{},{}\n",
        report.light_technical,
        opt(report.db_light_technical)
    ));
    out.push_str(&format!("atomic_projection,{},\n", report.atomic_projection));
    out.push_str(&format!(
        "atomic_technical,{},{}\n",
        report.atomic_technical,
        opt(report.db_atomic_technical)
    ));
    out.push_str(&format!("total,{},\n", report.total));
    out
}
