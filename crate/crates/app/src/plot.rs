//! Plain-text plot data from a run directory.
//!
//! For every diagnostics column `q` other than `t`, `plot/q.dat` holds
//! `t value` lines. A 1D final snapshot becomes `plot/final_phi.dat` with
//! `x value` lines; a 2D one becomes a gnuplot grid dump with one
//! `x y value` line per grid point and a blank line after each block of
//! constant `x`. No rendering is performed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{AppError, AppResult};
use crate::output::{load_snapshot, read_diagnostics, write_atomic, DiagnosticsRow, DIAGNOSTICS_FILE, FINAL_SNAPSHOT};

pub const PLOT_DIR: &str = "plot";

type Column = (&'static str, fn(&DiagnosticsRow) -> f64);

const COLUMNS: [Column; 8] = [
    ("mass", |r| r.mass),
    ("energy", |r| r.energy),
    ("entropy", |r| r.entropy),
    ("dissipation_cum", |r| r.dissipation_cum),
    ("excess_L2", |r| r.excess_l2),
    ("hess_sq_cum", |r| r.hess_sq_cum),
    ("dt", |r| r.dt),
    ("accepted", |r| if r.accepted { 1.0 } else { 0.0 }),
];

/// Writes the plot files and returns their paths.
pub fn emit_plot_data(run_dir: &Path) -> AppResult<Vec<PathBuf>> {
    let csv_path = run_dir.join(DIAGNOSTICS_FILE);
    if !csv_path.is_file() {
        return Err(AppError::MissingArtifact(run_dir.to_path_buf()));
    }
    let rows = read_diagnostics(&csv_path)?;
    let out = run_dir.join(PLOT_DIR);
    let mut written = Vec::new();
    for (name, get) in COLUMNS {
        let mut text = format!("# t {name}\n");
        for r in &rows {
            writeln!(text, "{:.17e} {:.17e}", r.t, get(r)).expect("string write");
        }
        let path = out.join(format!("{name}.dat"));
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }

    let snap = run_dir.join(FINAL_SNAPSHOT);
    if snap.is_file() {
        let (phi, t) = load_snapshot(&snap)?;
        let g = phi.grid().clone();
        let text = match g.dim() {
            1 => {
                let mut s = format!("# t = {t:.17e}\n# x phi\n");
                for (i, v) in phi.values().iter().enumerate() {
                    writeln!(s, "{:.17e} {:.17e}", g.coords(i)[0], v).expect("string write");
                }
                Some(s)
            }
            2 => {
                let (nx, ny) = (g.points()[0], g.points()[1]);
                let mut s = format!("# t = {t:.17e}\n# x y phi\n");
                for i in 0..nx {
                    for j in 0..ny {
                        let k = i * ny + j;
                        let c = g.coords(k);
                        writeln!(s, "{:.17e} {:.17e} {:.17e}", c[0], c[1], phi.values()[k]).expect("string write");
                    }
                    s.push('\n');
                }
                Some(s)
            }
            _ => None,
        };
        if let Some(text) = text {
            let path = out.join("final_phi.dat");
            write_atomic(&path, text.as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_is_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let err = emit_plot_data(dir.path()).unwrap_err();
        assert_eq!(err.class(), "MissingArtifact");
    }
}
