//! Flat key-value run configuration.
//!
//! The config format is plain text with `[section]` headers and one
//! `key = value` assignment per line; `#` starts a comment. There are no
//! nested structures, so experiment logs diff cleanly. Unknown keys are
//! rejected with their line number.
//!
//! Recognized keys:
//!
//! ```text
//! [run]     out, format (json|csv)
//! [sim]     seed, repetitions, cycles_per_load, initial_atoms_mean,
//!           loading_rms, loss_per_cycle, pulses_per_train,
//!           photons_per_pulse, meta_pulse_sizes (space-separated),
//!           imaging_rms, exact_sampling_threshold
//! [params]  g, v_e, alpha, beta, f
//! [point]   n_atoms, n_photons
//! [fit]     dataset, binning (per-cycle | edges:a,b,...),
//!           max_iterations, convergence_tol, fit_shot_term, use_dispersive
//! [report]  dataset, fit
//! ```
//!
//! Every key has a built-in default (the reference Rb-87 campaign), so a
//! config file only states what it changes. File paths have no defaults:
//! modes that read or write files require them explicitly.

use projnoise::estimator::FitOptions;
use projnoise::model::{NoiseParams, OperatingPoint, SpinF};
use projnoise::sim::{AtomLoading, NaBinning, SimConfig};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: Option<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        line,
        message: message.into(),
    })
}

/// Output format for structured results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Fully resolved run configuration: defaults overlaid with file values.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub params: NoiseParams,
    pub point: OperatingPoint,
    pub binning: NaBinning,
    pub fit_options: FitOptions,
    pub use_dispersive: bool,
    pub fit_dataset: Option<PathBuf>,
    pub report_dataset: Option<PathBuf>,
    pub report_fit: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::rb87_campaign(7),
            params: NoiseParams::rb87(),
            point: OperatingPoint::new(7.6e5, 1e9).expect("reference point is valid"),
            binning: NaBinning::PerCycle,
            fit_options: FitOptions::default(),
            use_dispersive: true,
            fit_dataset: None,
            report_dataset: None,
            report_fit: None,
            out: None,
            format: OutputFormat::Json,
        }
    }
}

/// One parsed `key = value` with its source line for error anchoring.
type Entries = BTreeMap<(String, String), (String, usize)>;

fn parse_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Entries::new();
    let mut section = String::new();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(Some(line_no), "unterminated section header");
            };
            section = name.trim().to_string();
            if section.is_empty() {
                return err(Some(line_no), "empty section name");
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(Some(line_no), format!("expected `key = value`, got `{line}`"));
        };
        if section.is_empty() {
            return err(Some(line_no), "assignment before any [section] header");
        }
        let key = key.trim().to_string();
        if key.is_empty() {
            return err(Some(line_no), "empty key");
        }
        let previous = entries.insert(
            (section.clone(), key.clone()),
            (value.trim().to_string(), line_no),
        );
        if let Some((_, first)) = previous {
            return err(
                Some(line_no),
                format!("duplicate key `{section}.{key}` (first set on line {first})"),
            );
        }
    }
    Ok(entries)
}

struct Reader {
    entries: Entries,
    consumed: Vec<(String, String)>,
}

impl Reader {
    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let id = (section.to_string(), key.to_string());
        self.consumed.push(id.clone());
        self.entries.remove(&id)
    }

    fn parse<T: std::str::FromStr>(
        &mut self,
        section: &str,
        key: &str,
        target: &mut T,
    ) -> Result<(), ConfigError> {
        if let Some((value, line)) = self.take(section, key) {
            match value.parse::<T>() {
                Ok(v) => *target = v,
                Err(_) => {
                    return err(
                        Some(line),
                        format!("cannot parse `{value}` for {section}.{key}"),
                    )
                }
            }
        }
        Ok(())
    }
}

/// Parses config text over the built-in defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut reader = Reader {
        entries: parse_entries(text)?,
        consumed: Vec::new(),
    };
    let defaults = RunConfig::default();
    let default_sim = defaults.sim.clone();

    // [sim]
    let mut seed = default_sim.seed;
    let mut repetitions = default_sim.repetitions;
    let mut cycles = default_sim.cycles_per_load;
    let mut initial_atoms_mean = default_sim.loading.mean;
    let mut loading_rms = default_sim.loading.relative_rms;
    let mut loss = default_sim.loss_per_cycle;
    let mut pulses = default_sim.pulses_per_train;
    let mut photons = default_sim.photons_per_pulse;
    let mut imaging_rms = default_sim.imaging_rms;
    let mut threshold = default_sim.exact_sampling_threshold;
    reader.parse("sim", "seed", &mut seed)?;
    reader.parse("sim", "repetitions", &mut repetitions)?;
    reader.parse("sim", "cycles_per_load", &mut cycles)?;
    reader.parse("sim", "initial_atoms_mean", &mut initial_atoms_mean)?;
    reader.parse("sim", "loading_rms", &mut loading_rms)?;
    reader.parse("sim", "loss_per_cycle", &mut loss)?;
    reader.parse("sim", "pulses_per_train", &mut pulses)?;
    reader.parse("sim", "photons_per_pulse", &mut photons)?;
    reader.parse("sim", "imaging_rms", &mut imaging_rms)?;
    reader.parse("sim", "exact_sampling_threshold", &mut threshold)?;

    let mut meta_pulse_sizes = default_sim.meta_pulse_sizes.clone();
    if let Some((value, line)) = reader.take("sim", "meta_pulse_sizes") {
        meta_pulse_sizes = value
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| ConfigError {
                    line: Some(line),
                    message: format!("cannot parse meta-pulse size `{tok}`"),
                })
            })
            .collect::<Result<_, _>>()?;
    }

    // [params]
    let mut g = defaults.params.g();
    let mut v_e = defaults.params.v_e();
    let mut alpha = defaults.params.alpha();
    let mut beta = defaults.params.beta();
    let mut f_value = defaults.params.f().value();
    let params_line = reader
        .entries
        .iter()
        .find(|((s, _), _)| s == "params")
        .map(|(_, (_, line))| *line);
    reader.parse("params", "g", &mut g)?;
    reader.parse("params", "v_e", &mut v_e)?;
    reader.parse("params", "alpha", &mut alpha)?;
    reader.parse("params", "beta", &mut beta)?;
    reader.parse("params", "f", &mut f_value)?;
    let f = SpinF::new(f_value).map_err(|e| ConfigError {
        line: params_line,
        message: e.to_string(),
    })?;
    let params = NoiseParams::new(g, v_e, alpha, beta, f).map_err(|e| ConfigError {
        line: params_line,
        message: e.to_string(),
    })?;

    // [point]
    let mut n_atoms = defaults.point.n_atoms;
    let mut n_photons = defaults.point.n_photons;
    reader.parse("point", "n_atoms", &mut n_atoms)?;
    reader.parse("point", "n_photons", &mut n_photons)?;
    let point = OperatingPoint::new(n_atoms, n_photons).map_err(|e| ConfigError {
        line: None,
        message: e.to_string(),
    })?;

    // [fit]
    let mut fit_options = defaults.fit_options;
    let mut use_dispersive = defaults.use_dispersive;
    reader.parse("fit", "max_iterations", &mut fit_options.max_iterations)?;
    reader.parse("fit", "convergence_tol", &mut fit_options.convergence_tol)?;
    reader.parse("fit", "fit_shot_term", &mut fit_options.fit_shot_term)?;
    reader.parse("fit", "use_dispersive", &mut use_dispersive)?;
    let fit_dataset = reader.take("fit", "dataset").map(|(v, _)| PathBuf::from(v));
    let mut binning = defaults.binning.clone();
    if let Some((value, line)) = reader.take("fit", "binning") {
        binning = parse_binning(&value, line)?;
    }

    // [report]
    let report_dataset = reader
        .take("report", "dataset")
        .map(|(v, _)| PathBuf::from(v));
    let report_fit = reader.take("report", "fit").map(|(v, _)| PathBuf::from(v));

    // [run]
    let out = reader.take("run", "out").map(|(v, _)| PathBuf::from(v));
    let mut format = defaults.format;
    if let Some((value, line)) = reader.take("run", "format") {
        format = match value.as_str() {
            "json" => OutputFormat::Json,
            "csv" => OutputFormat::Csv,
            other => return err(Some(line), format!("unknown format `{other}`")),
        };
    }

    // anything left over is a key this version does not know
    if let Some(((section, key), (_, line))) = reader.entries.iter().next() {
        return err(Some(*line), format!("unknown key `{section}.{key}`"));
    }

    let sim = SimConfig {
        truth: params,
        loading: AtomLoading {
            mean: initial_atoms_mean,
            relative_rms: loading_rms,
        },
        loss_per_cycle: loss,
        cycles_per_load: cycles,
        repetitions,
        pulses_per_train: pulses,
        photons_per_pulse: photons,
        meta_pulse_sizes,
        imaging_rms,
        seed,
        exact_sampling_threshold: threshold,
    };

    Ok(RunConfig {
        sim,
        params,
        point,
        binning,
        fit_options,
        use_dispersive,
        fit_dataset,
        report_dataset,
        report_fit,
        out,
        format,
    })
}

fn parse_binning(value: &str, line: usize) -> Result<NaBinning, ConfigError> {
    if value == "per-cycle" {
        return Ok(NaBinning::PerCycle);
    }
    if let Some(rest) = value.strip_prefix("edges:") {
        let edges: Vec<f64> = rest
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| ConfigError {
                    line: Some(line),
                    message: format!("cannot parse bin edge `{tok}`"),
                })
            })
            .collect::<Result<_, _>>()?;
        if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return err(Some(line), "bin edges must be at least two, strictly increasing");
        }
        return Ok(NaBinning::ByAtomEdges(edges));
    }
    err(
        Some(line),
        format!("unknown binning `{value}` (expected `per-cycle` or `edges:a,b,...`)"),
    )
}

/// Canonical flat serialization of the simulation config, used for the
/// dataset provenance header and its hash. One `section.key = value` per
/// line, fixed order, shortest round-trip decimals.
pub fn canonical_sim_lines(sim: &SimConfig) -> Vec<String> {
    let sizes = sim
        .meta_pulse_sizes
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    vec![
        format!("sim.seed = {}", sim.seed),
        format!("sim.repetitions = {}", sim.repetitions),
        format!("sim.cycles_per_load = {}", sim.cycles_per_load),
        format!("sim.initial_atoms_mean = {}", sim.loading.mean),
        format!("sim.loading_rms = {}", sim.loading.relative_rms),
        format!("sim.loss_per_cycle = {}", sim.loss_per_cycle),
        format!("sim.pulses_per_train = {}", sim.pulses_per_train),
        format!("sim.photons_per_pulse = {}", sim.photons_per_pulse),
        format!("sim.meta_pulse_sizes = {sizes}"),
        format!("sim.imaging_rms = {}", sim.imaging_rms),
        format!(
            "sim.exact_sampling_threshold = {}",
            sim.exact_sampling_threshold
        ),
        format!("params.g = {}", sim.truth.g()),
        format!("params.v_e = {}", sim.truth.v_e()),
        format!("params.alpha = {}", sim.truth.alpha()),
        format!("params.beta = {}", sim.truth.beta()),
        format!("params.f = {}", sim.truth.f().value()),
    ]
}

/// Rebuilds a [`SimConfig`] from its canonical lines.
pub fn sim_from_canonical_lines(lines: &[(String, String)]) -> Result<SimConfig, ConfigError> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for (key, value) in lines {
        map.insert(key.as_str(), value.as_str());
    }
    fn get<'a>(
        map: &BTreeMap<&str, &'a str>,
        key: &str,
    ) -> Result<&'a str, ConfigError> {
        map.get(key).copied().ok_or_else(|| ConfigError {
            line: None,
            message: format!("dataset header is missing `{key}`"),
        })
    }
    fn parse<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, ConfigError> {
        value.parse::<T>().map_err(|_| ConfigError {
            line: None,
            message: format!("cannot parse `{value}` for {key}"),
        })
    }

    let f = SpinF::new(parse(get(&map, "params.f")?, "params.f")?).map_err(|e| ConfigError {
        line: None,
        message: e.to_string(),
    })?;
    let truth = NoiseParams::new(
        parse(get(&map, "params.g")?, "params.g")?,
        parse(get(&map, "params.v_e")?, "params.v_e")?,
        parse(get(&map, "params.alpha")?, "params.alpha")?,
        parse(get(&map, "params.beta")?, "params.beta")?,
        f,
    )
    .map_err(|e| ConfigError {
        line: None,
        message: e.to_string(),
    })?;

    let sizes = get(&map, "sim.meta_pulse_sizes")?
        .split_whitespace()
        .map(|tok| parse::<usize>(tok, "sim.meta_pulse_sizes"))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SimConfig {
        truth,
        loading: AtomLoading {
            mean: parse(get(&map, "sim.initial_atoms_mean")?, "sim.initial_atoms_mean")?,
            relative_rms: parse(get(&map, "sim.loading_rms")?, "sim.loading_rms")?,
        },
        loss_per_cycle: parse(get(&map, "sim.loss_per_cycle")?, "sim.loss_per_cycle")?,
        cycles_per_load: parse(get(&map, "sim.cycles_per_load")?, "sim.cycles_per_load")?,
        repetitions: parse(get(&map, "sim.repetitions")?, "sim.repetitions")?,
        pulses_per_train: parse(get(&map, "sim.pulses_per_train")?, "sim.pulses_per_train")?,
        photons_per_pulse: parse(get(&map, "sim.photons_per_pulse")?, "sim.photons_per_pulse")?,
        meta_pulse_sizes: sizes,
        imaging_rms: parse(get(&map, "sim.imaging_rms")?, "sim.imaging_rms")?,
        seed: parse(get(&map, "sim.seed")?, "sim.seed")?,
        exact_sampling_threshold: parse(
            get(&map, "sim.exact_sampling_threshold")?,
            "sim.exact_sampling_threshold",
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config.sim, SimConfig::rb87_campaign(7));
        assert_eq!(config.format, OutputFormat::Json);
        assert!(config.fit_dataset.is_none());
    }

    #[test]
    fn overrides_apply() {
        let text = "\
# smoke run
[sim]
seed = 42
repetitions = 2
meta_pulse_sizes = 4 4

[params]
g = 1e-8

[run]
format = csv
out = x.csv
";
        let config = parse_config(text).unwrap();
        assert_eq!(config.sim.seed, 42);
        assert_eq!(config.sim.repetitions, 2);
        assert_eq!(config.sim.meta_pulse_sizes, vec![4, 4]);
        assert_eq!(config.sim.truth.g(), 1e-8);
        assert_eq!(config.params.g(), 1e-8);
        assert_eq!(config.format, OutputFormat::Csv);
        assert_eq!(config.out.as_deref(), Some(std::path::Path::new("x.csv")));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_value = parse_config("[sim]\nrepetitions = many\n").unwrap_err();
        assert_eq!(bad_value.line, Some(2));

        let bad_key = parse_config("[sim]\nrepetition = 5\n").unwrap_err();
        assert_eq!(bad_key.line, Some(2));
        assert!(bad_key.message.contains("unknown key"));

        let no_section = parse_config("seed = 1\n").unwrap_err();
        assert_eq!(no_section.line, Some(1));

        let dup = parse_config("[sim]\nseed = 1\nseed = 2\n").unwrap_err();
        assert_eq!(dup.line, Some(3));
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(parse_config("[params]\ng = 0\n").is_err());
        assert!(parse_config("[params]\nf = 0.3\n").is_err());
        assert!(parse_config("[point]\nn_atoms = -1\n").is_err());
    }

    #[test]
    fn binning_forms() {
        let per_cycle = parse_config("[fit]\nbinning = per-cycle\n").unwrap();
        assert_eq!(per_cycle.binning, NaBinning::PerCycle);
        let edges = parse_config("[fit]\nbinning = edges:1e4,1e5,1e6\n").unwrap();
        assert_eq!(
            edges.binning,
            NaBinning::ByAtomEdges(vec![1e4, 1e5, 1e6])
        );
        assert!(parse_config("[fit]\nbinning = edges:5,4\n").is_err());
        assert!(parse_config("[fit]\nbinning = nonsense\n").is_err());
    }

    #[test]
    fn canonical_lines_round_trip() {
        let sim = SimConfig::rb87_campaign(99);
        let lines = canonical_sim_lines(&sim);
        let pairs: Vec<(String, String)> = lines
            .iter()
            .map(|l| {
                let (k, v) = l.split_once(" = ").unwrap();
                (k.to_string(), v.to_string())
            })
            .collect();
        let rebuilt = sim_from_canonical_lines(&pairs).unwrap();
        assert_eq!(rebuilt, sim);
    }
}
