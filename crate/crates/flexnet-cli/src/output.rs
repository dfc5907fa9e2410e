//! Output plumbing: atomic file writes and the CSV emitters.
//!
//! Every CSV starts with the versioned header comment `# flexnet-csv v1`.
//! Files are written to a temporary sibling and renamed into place, so a
//! failed run never leaves a partial result file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use crate::experiment::{SweepReport, VerificationReport};

pub const CSV_HEADER: &str = "# flexnet-csv v1";

/// Writes `content` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .context("creating temporary file")?;
    tmp.write_all(content.as_bytes())
        .context("writing temporary file")?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Emits `content` to the file when given, to stdout otherwise.
pub fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => atomic_write(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Emits a JSON sidecar next to the main output file (`<out>.json`), or to
/// stderr when the main output goes to stdout.
pub fn emit_sidecar(out: Option<&Path>, sidecar: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar)?;
    match out {
        Some(path) => {
            let mut name = path.as_os_str().to_owned();
            name.push(".json");
            atomic_write(Path::new(&name), &(text + "\n"))
        }
        None => {
            eprintln!("{text}");
            Ok(())
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn opt_flag(x: Option<bool>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn verification_csv(report: &VerificationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    let _ = writeln!(
        s,
        "i,estimate,half_width,slack,prop1,thm1,thm1_theta,thm2,thm3,pass_prop1,pass_thm1,pass_thm1_theta,pass_thm2,pass_thm3"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{},{:e},{},{:e},{:e},{},{},{},{},{}",
            r.i,
            r.estimate,
            r.half_width,
            r.slack,
            opt(r.prop1),
            r.thm1,
            opt(r.thm1_theta),
            r.thm2,
            r.thm3,
            opt_flag(r.pass_prop1),
            r.pass_thm1,
            opt_flag(r.pass_thm1_theta),
            r.pass_thm2,
            r.pass_thm3,
        );
    }
    s
}

pub fn sweep_csv(report: &SweepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    let _ = writeln!(
        s,
        "n,alpha_num,alpha_den,beta_num,beta_den,lambda,rho0,valid_from,i,estimate,half_width,slack,thm1,thm2,thm3,pass"
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e},{:e},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.n,
            r.alpha.num,
            r.alpha.den,
            r.beta.num,
            r.beta.den,
            r.lambda,
            r.rho0,
            r.valid_from,
            r.i,
            r.estimate,
            r.half_width,
            r.slack,
            r.thm1,
            r.thm2,
            r.thm3,
            r.pass,
        );
    }
    s
}

/// CSV for the bounds table of one model: one row per level.
pub fn bounds_csv(
    rows: &[(u32, Option<f64>, f64, Option<f64>, f64, f64)],
    valid_from: u32,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    let _ = writeln!(s, "i,prop1,thm1,thm1_theta,thm2,thm3,valid_from");
    for (i, prop1, thm1, theta, thm2, thm3) in rows {
        let _ = writeln!(
            s,
            "{},{},{:e},{},{:e},{:e},{}",
            i,
            opt(*prop1),
            thm1,
            opt(*theta),
            thm2,
            thm3,
            valid_from,
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        atomic_write(&path, "# flexnet-csv v1\n1,2\n").unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "# flexnet-csv v1\n1,2\n"
        );
    }
}
