//! Dataset file format: CSV with a `#`-prefixed provenance header.
//!
//! ```text
//! # projnoise dataset v1
//! # version = 0.1.0
//! # seed = 7
//! # config_hash = fnv1a:xxxxxxxxxxxxxxxx
//! # cfg sim.seed = 7
//! # cfg <section>.<key> = <value>        (canonical config echo)
//! repetition,cycle,n_atoms_true,n_atoms_imaging,fz_true,dispersive_phi,meta_index,n_photons,s_y
//! 0,0,801234,798551.2,-310.5,0.053,0,50000000,12345.6
//! ```
//!
//! One row per meta-pulse; trial-level fields repeat on every row of the
//! trial. Floats are written with Rust's shortest round-trip decimal
//! formatting, which is locale-independent and parses back bit-exact, so
//! `parse(serialize(dataset))` is the identity and equal datasets have
//! equal bytes. `config_hash` is the 64-bit FNV-1a digest of the canonical
//! config lines and is verified on load.

use crate::config::{canonical_sim_lines, sim_from_canonical_lines, ConfigError};
use projnoise::sim::{Dataset, MetaPulseSignal, Provenance, TrialRecord};
use std::fmt::Write as _;

pub const FORMAT_TAG: &str = "# projnoise dataset v1";
pub const HEADER_ROW: &str =
    "repetition,cycle,n_atoms_true,n_atoms_imaging,fz_true,dispersive_phi,meta_index,n_photons,s_y";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("dataset header: {0}")]
    Header(String),
}

fn malformed<T>(line: usize, message: impl Into<String>) -> Result<T, DatasetError> {
    Err(DatasetError::Malformed {
        line,
        message: message.into(),
    })
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn config_hash(lines: &[String]) -> u64 {
    fnv1a(lines.join("\n").as_bytes())
}

/// Serializes a dataset to its canonical byte representation.
pub fn serialize(dataset: &Dataset) -> String {
    let cfg_lines = canonical_sim_lines(&dataset.config);
    let mut out = String::new();
    out.push_str(FORMAT_TAG);
    out.push('\n');
    let _ = writeln!(out, "# version = {}", dataset.provenance.version);
    let _ = writeln!(out, "# seed = {}", dataset.provenance.seed);
    let _ = writeln!(out, "# config_hash = fnv1a:{:016x}", config_hash(&cfg_lines));
    for line in &cfg_lines {
        let _ = writeln!(out, "# cfg {line}");
    }
    out.push_str(HEADER_ROW);
    out.push('\n');
    for record in &dataset.records {
        for (meta_index, meta) in record.meta_pulses.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                record.repetition,
                record.cycle,
                record.n_atoms_true,
                record.n_atoms_imaging,
                record.fz_true,
                record.dispersive_phi,
                meta_index,
                meta.n_photons,
                meta.s_y,
            );
        }
    }
    out
}

/// Parses the canonical representation back into a dataset.
pub fn parse(text: &str) -> Result<Dataset, DatasetError> {
    let mut lines = text.lines().enumerate();

    let Some((_, first)) = lines.next() else {
        return Err(DatasetError::Header("empty file".into()));
    };
    if first != FORMAT_TAG {
        return Err(DatasetError::Header(format!(
            "expected `{FORMAT_TAG}`, got `{first}`"
        )));
    }

    let mut version = None;
    let mut seed = None;
    let mut hash = None;
    let mut cfg_pairs: Vec<(String, String)> = Vec::new();
    let mut cfg_lines: Vec<String> = Vec::new();
    let mut header_seen = false;
    let mut records: Vec<TrialRecord> = Vec::new();

    for (index, raw) in lines {
        let line_no = index + 1;
        if let Some(comment) = raw.strip_prefix("# ") {
            if header_seen {
                return malformed(line_no, "comment after the column header");
            }
            if let Some(rest) = comment.strip_prefix("cfg ") {
                let Some((key, value)) = rest.split_once(" = ") else {
                    return malformed(line_no, "malformed cfg line");
                };
                cfg_pairs.push((key.to_string(), value.to_string()));
                cfg_lines.push(rest.to_string());
            } else if let Some(v) = comment.strip_prefix("version = ") {
                version = Some(v.to_string());
            } else if let Some(v) = comment.strip_prefix("seed = ") {
                seed = v.parse::<u64>().ok();
                if seed.is_none() {
                    return malformed(line_no, "cannot parse seed");
                }
            } else if let Some(v) = comment.strip_prefix("config_hash = fnv1a:") {
                hash = u64::from_str_radix(v, 16).ok();
                if hash.is_none() {
                    return malformed(line_no, "cannot parse config hash");
                }
            } else {
                return malformed(line_no, format!("unknown header line `{raw}`"));
            }
            continue;
        }
        if !header_seen {
            if raw != HEADER_ROW {
                return malformed(line_no, format!("expected column header `{HEADER_ROW}`"));
            }
            header_seen = true;
            continue;
        }

        // data row
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 9 {
            return malformed(line_no, format!("expected 9 fields, got {}", fields.len()));
        }
        fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, DatasetError> {
            s.parse::<T>().map_err(|_| DatasetError::Malformed {
                line,
                message: format!("cannot parse {what} `{s}`"),
            })
        }
        let repetition: usize = num(fields[0], line_no, "repetition")?;
        let cycle: usize = num(fields[1], line_no, "cycle")?;
        let n_atoms_true: u64 = num(fields[2], line_no, "n_atoms_true")?;
        let n_atoms_imaging: f64 = num(fields[3], line_no, "n_atoms_imaging")?;
        let fz_true: f64 = num(fields[4], line_no, "fz_true")?;
        let dispersive_phi: f64 = num(fields[5], line_no, "dispersive_phi")?;
        let meta_index: usize = num(fields[6], line_no, "meta_index")?;
        let n_photons: f64 = num(fields[7], line_no, "n_photons")?;
        let s_y: f64 = num(fields[8], line_no, "s_y")?;

        let start_new = match records.last() {
            Some(last) => last.repetition != repetition || last.cycle != cycle,
            None => true,
        };
        if start_new {
            if meta_index != 0 {
                return malformed(line_no, "first meta-pulse of a trial must have index 0");
            }
            records.push(TrialRecord {
                repetition,
                cycle,
                n_atoms_true,
                n_atoms_imaging,
                fz_true,
                meta_pulses: Vec::new(),
                dispersive_phi,
            });
        }
        let record = records.last_mut().expect("just pushed");
        if meta_index != record.meta_pulses.len() {
            return malformed(line_no, "meta_index out of sequence");
        }
        if record.n_atoms_true != n_atoms_true
            || record.n_atoms_imaging != n_atoms_imaging
            || record.fz_true != fz_true
            || record.dispersive_phi != dispersive_phi
        {
            return malformed(line_no, "trial-level fields differ within one trial");
        }
        record.meta_pulses.push(MetaPulseSignal { n_photons, s_y });
    }

    if !header_seen {
        return Err(DatasetError::Header("missing column header".into()));
    }
    let seed = seed.ok_or_else(|| DatasetError::Header("missing seed".into()))?;
    let version = version.ok_or_else(|| DatasetError::Header("missing version".into()))?;
    let declared_hash = hash.ok_or_else(|| DatasetError::Header("missing config hash".into()))?;
    let actual_hash = config_hash(&cfg_lines);
    if declared_hash != actual_hash {
        return Err(DatasetError::Header(format!(
            "config hash mismatch: header fnv1a:{declared_hash:016x}, computed fnv1a:{actual_hash:016x}"
        )));
    }
    let config = sim_from_canonical_lines(&cfg_pairs).map_err(|e: ConfigError| {
        DatasetError::Header(e.to_string())
    })?;

    Ok(Dataset {
        config,
        records,
        provenance: Provenance { seed, version },
    })
}
