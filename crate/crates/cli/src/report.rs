//! Plot-ready variance tables: measured points against the fitted surface,
//! scanned over atom number at the largest photon bin and over photon
//! number at the largest atom bin.

use projnoise::estimator::VariancePoint;
use std::fmt::Write as _;

pub const ATOM_SCAN_HEADER: &str =
    "n_atoms,var_measured,var_model,var_projection_only,var_light_only";
pub const PHOTON_SCAN_HEADER: &str =
    "n_photons,var_measured,var_model,var_projection_only,var_light_only";

fn model_total(c: &[f64; 4], na: f64, nl: f64) -> f64 {
    let nl2 = nl * nl;
    nl / 4.0 + c[0] + c[1] * nl2 + c[2] * nl2 * na + c[3] * nl2 * na * na
}

fn projection_only(c: &[f64; 4], na: f64, nl: f64) -> f64 {
    c[2] * nl * nl * na
}

fn light_only(c: &[f64; 4], nl: f64) -> f64 {
    nl / 4.0 + c[1] * nl * nl
}

fn scan_rows(
    header: &str,
    points: impl Iterator<Item = (f64, VariancePoint)>,
    coefficients: &[f64; 4],
) -> String {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for (axis, point) in points {
        let _ = writeln!(
            out,
            "{axis},{},{},{},{}",
            point.variance,
            model_total(coefficients, point.n_atoms, point.n_photons),
            projection_only(coefficients, point.n_atoms, point.n_photons),
            light_only(coefficients, point.n_photons),
        );
    }
    out
}

/// Variance vs atom number at the largest photon bin.
pub fn atom_scan(points: &[VariancePoint], coefficients: &[f64; 4]) -> String {
    let max_photons = points.iter().map(|p| p.n_photons).fold(0.0, f64::max);
    let mut selected: Vec<VariancePoint> = points
        .iter()
        .filter(|p| p.n_photons == max_photons)
        .copied()
        .collect();
    selected.sort_by(|a, b| a.n_atoms.total_cmp(&b.n_atoms));
    scan_rows(
        ATOM_SCAN_HEADER,
        selected.into_iter().map(|p| (p.n_atoms, p)),
        coefficients,
    )
}

/// Variance vs photon number at the largest atom bin.
pub fn photon_scan(points: &[VariancePoint], coefficients: &[f64; 4]) -> String {
    let max_atoms = points.iter().map(|p| p.n_atoms).fold(0.0, f64::max);
    let mut selected: Vec<VariancePoint> = points
        .iter()
        .filter(|p| p.n_atoms == max_atoms)
        .copied()
        .collect();
    selected.sort_by(|a, b| a.n_photons.total_cmp(&b.n_photons));
    scan_rows(
        PHOTON_SCAN_HEADER,
        selected.into_iter().map(|p| (p.n_photons, p)),
        coefficients,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(na: f64, nl: f64, var: f64) -> VariancePoint {
        VariancePoint::new(na, nl, var, 10).unwrap()
    }

    #[test]
    fn atom_scan_selects_largest_photon_bin_sorted() {
        let c = [1.0, 0.0, 0.0, 0.0];
        let points = vec![
            point(3e5, 1e9, 30.0),
            point(1e5, 1e9, 10.0),
            point(2e5, 5e8, 99.0),
        ];
        let table = atom_scan(&points, &c);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], ATOM_SCAN_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("100000,10,"));
        assert!(lines[2].starts_with("300000,30,"));
    }

    #[test]
    fn zero_atom_rows_follow_the_light_curve() {
        // with no atoms the model column equals the light-only column plus
        // electronic noise
        let c = [4.9e5, 4.3e-11, 737.0e-18, 0.0];
        let points = vec![point(0.0, 1e9, 2.9e8)];
        let table = photon_scan(&points, &c);
        let row = table.lines().nth(1).unwrap();
        let cells: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        let (model, projection, light) = (cells[2], cells[3], cells[4]);
        assert_eq!(projection, 0.0);
        assert!((model - (light + 4.9e5)).abs() < 1e-3);
    }
}
