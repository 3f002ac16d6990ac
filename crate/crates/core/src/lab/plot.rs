use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{sha256_hex, RunManifest};
use crate::error::{Error, Result};

/// Header and rows of a CSV artifact, cells kept as written.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let header = reader
            .headers()
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Ok(Table { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name}")))
    }
}

/// Long-format `series,x,y` rows.
#[derive(Default)]
struct Long(String);

impl Long {
    fn new() -> Self {
        Long(String::from("series,x,y\n"))
    }

    fn push_table(&mut self, series: &str, table: &Table, x: &str, y: &str) -> Result<()> {
        let (xi, yi) = (table.column(x)?, table.column(y)?);
        for row in &table.rows {
            if !row[yi].is_empty() {
                let _ = writeln!(self.0, "{series},{},{}", row[xi], row[yi]);
            }
        }
        Ok(())
    }
}

/// Checks every artifact digest of the manifest at `manifest_path`, then
/// writes plot-ready CSVs into a `plot` directory beside it. Returns the
/// written paths.
pub fn plotdata(manifest_path: &Path) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    for a in &manifest.artifacts {
        let path = root.join(&a.path);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != a.sha256 {
            return Err(Error::InvalidArgument(format!("digest mismatch for {}", a.path)));
        }
    }
    let table = |rel: &str| Table::read(&root.join(rel));
    let under = |prefix: &str| -> Vec<&str> {
        manifest.artifacts.iter().map(|a| a.path.as_str()).filter(|p| p.starts_with(prefix)).collect()
    };
    let stem = |rel: &str| Path::new(rel).file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();

    let mut files: Vec<(String, String)> = Vec::new();
    match manifest.experiment.as_str() {
        "scalar_sweep" => {
            let mut long = Long::new();
            for rel in under("trajectories/") {
                let t = table(rel)?;
                long.push_table(&format!("{}_distance", stem(rel)), &t, "iter", "distance")?;
                long.push_table(&format!("{}_envelope", stem(rel)), &t, "iter", "envelope")?;
            }
            files.push(("sweep.csv".into(), long.0));
        }
        "scalar_boundary" => {
            let t = table("boundary.csv")?;
            let cols = ["L", "lambda", "predicted", "empirical"].map(|c| t.column(c));
            let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
            let mut csv = String::from("L,lambda,predicted,empirical\n");
            for row in &t.rows {
                let cells: Vec<&str> = cols.iter().map(|&i| row[i].as_str()).collect();
                let _ = writeln!(csv, "{}", cells.join(","));
            }
            files.push(("boundary.csv".into(), csv));
        }
        "matrix_single_vs_double" => {
            for rel in under("loss/") {
                let t = table(rel)?;
                let mut long = Long::new();
                long.push_table("single", &t, "iter", "loss_single")?;
                long.push_table("double", &t, "iter", "loss_double")?;
                files.push((format!("loss_{}.csv", stem(rel)), long.0));
            }
        }
        "matrix_rate_check" => {
            for rel in under("unstable/") {
                let mut long = Long::new();
                long.push_table("loss", &table(rel)?, "iter", "loss")?;
                files.push((format!("unstable_{}.csv", stem(rel)), long.0));
            }
        }
        "fit1d" => {
            let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
            for rel in under("runs/").into_iter().filter(|p| p.ends_with("/fit.csv")) {
                let tag = rel.split('/').nth(1).unwrap_or_default().to_string();
                groups.entry(tag).or_default().push(rel);
            }
            for (tag, runs) in groups {
                let mut long = Long::new();
                for (k, rel) in runs.iter().enumerate() {
                    let t = table(rel)?;
                    if k == 0 {
                        long.push_table("target", &t, "x", "target")?;
                    }
                    let seed = rel.split('/').nth(2).unwrap_or_default().trim_start_matches("seed");
                    long.push_table(&format!("estimate_seed{seed}"), &t, "x", "estimate")?;
                }
                files.push((format!("fit_{tag}.csv"), long.0));
            }
        }
        "convexity_audit" => {
            let mut long = Long::new();
            long.push_table("max_violation", &table("convexity.csv")?, "net", "max_violation")?;
            files.push(("convexity.csv".into(), long.0));
        }
        "opt_cond_audit" => {
            let t = table("residuals.csv")?;
            let (si, ii, ri) = (t.column("seed")?, t.column("index")?, t.column("residual")?);
            let mut long = Long::new();
            for row in &t.rows {
                let _ = writeln!(long.0, "seed{},{},{}", row[si], row[ii], row[ri]);
            }
            files.push(("residuals.csv".into(), long.0));
        }
        other => return Err(Error::Parse(format!("unknown experiment kind {other}"))),
    }

    let dir = root.join("plot");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
