//! JSON-configured experiment runs that write CSV artifacts and a manifest
//! of their digests.

mod config;
pub mod experiments;
mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    validate, Basis, BoundaryCase, ConvexityAudit, Experiment, ExperimentConfig, Fit1d, MatrixRateCheck,
    MatrixSingleVsDouble, OptCondAudit, ScalarBoundary, ScalarSweep, TargetSpec,
};
pub use plot::plotdata;

use crate::convex::{PairRecord, PiecewiseAffine1D, TrainConfig};
use crate::dynamics::Outcome;
use crate::error::{Error, Result};
use crate::numerics::{child_seed, EigenBasis, SeededRng};
use experiments::*;

/// Overrides `output_dir` from the config when set.
pub const OUTPUT_DIR_ENV: &str = "RESLAB_OUTPUT_DIR";

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub started_at: String,
    pub finished_at: String,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// `env_value` (the value of `RESLAB_OUTPUT_DIR`) if set and nonempty,
/// else the config's `output_dir`.
pub fn resolve_output_dir(config: &ExperimentConfig, env_value: Option<std::ffi::OsString>) -> PathBuf {
    env_value
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| config.output_dir.clone())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Files of one run, held in memory until the run succeeds.
#[derive(Default)]
struct Artifacts(Vec<(String, String)>);

impl Artifacts {
    fn add(&mut self, path: impl Into<String>, content: String) {
        self.0.push((path.into(), content));
    }
}

/// Runs the experiment, writes its artifacts under `output_dir` and then
/// the manifest.
pub fn run(config: &ExperimentConfig, output_dir: &Path) -> Result<RunManifest> {
    let bad = validate(config);
    if !bad.is_empty() {
        return Err(Error::Validation(bad));
    }
    let started_at = now();
    let artifacts = execute(config).map_err(|e| e.context(format!("running {}", config.experiment.kind())))?;
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut entries = Vec::with_capacity(artifacts.0.len());
    for (rel, content) in &artifacts.0 {
        let path = output_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        entries.push(ArtifactEntry { path: rel.clone(), sha256: sha256_hex(content.as_bytes()), bytes: content.len() as u64 });
    }
    let manifest = RunManifest {
        experiment: config.experiment.kind().to_string(),
        seed: config.seed,
        config: config.clone(),
        started_at,
        finished_at: now(),
        artifacts: entries,
    };
    let path = output_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Converged => "converged",
        Outcome::Diverged => "diverged",
        Outcome::Undecided => "undecided",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

fn seeded<T: Send>(base: u64, seeds: &[u64], f: impl Fn(u64, u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    seeds
        .par_iter()
        .map(|&s| f(s, child_seed(base, s)).map_err(|e| e.context(format!("seed {s}"))))
        .collect()
}

fn execute(config: &ExperimentConfig) -> Result<Artifacts> {
    let mut out = Artifacts::default();
    match &config.experiment {
        Experiment::ScalarSweep(p) => {
            let grid: Vec<(usize, f64)> = p.depths.iter().flat_map(|&d| p.lambdas.iter().map(move |&l| (d, l))).collect();
            let cases = grid
                .par_iter()
                .map(|&(d, l)| {
                    scalar_sweep_case(d, l, p.sigma, p.step_factor, p.max_iters)
                        .map_err(|e| e.context(format!("L={d}, lambda={l}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut summary = String::from("L,lambda,step,rate,outcome,final_error,final_distance,iterations,envelope_violations\n");
            for c in &cases {
                let _ = writeln!(
                    summary,
                    "{},{},{:.16e},{},{},{:.16e},{:.16e},{},{}",
                    c.depth,
                    c.lambda,
                    c.step,
                    opt(c.rate),
                    outcome_name(c.trajectory.outcome()),
                    c.trajectory.final_error(),
                    c.distances.last().copied().unwrap_or(f64::NAN),
                    c.trajectory.iterations_run,
                    c.envelope_violations
                );
                let mut t = String::from("iter,distance,envelope\n");
                for (k, d) in c.distances.iter().enumerate() {
                    let _ = writeln!(t, "{k},{d:.16e},{}", opt(c.envelope(k)));
                }
                out.add(format!("trajectories/L{}_lambda{}.csv", c.depth, c.lambda), t);
            }
            out.0.insert(0, ("sweep.csv".into(), summary));
        }
        Experiment::ScalarBoundary(p) => {
            let rows = p
                .cases
                .par_iter()
                .map(|c| {
                    boundary_row(c.depth, c.lambda, c.sigma, c.equilibrium.as_deref(), p.rel_tol)
                        .map_err(|e| e.context(format!("L={}, lambda={}", c.depth, c.lambda)))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut csv = String::from("L,lambda,sigma,equilibrium,predicted,empirical,relative_gap\n");
            for r in &rows {
                let eq: Vec<String> = r.equilibrium.iter().map(|w| format!("{w}")).collect();
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{:.16e},{:.16e},{:.16e}",
                    r.depth,
                    r.lambda,
                    r.sigma,
                    eq.join(" "),
                    r.predicted,
                    r.empirical,
                    r.relative_gap()
                );
            }
            out.add("boundary.csv", csv);
        }
        Experiment::MatrixSingleVsDouble(p) => {
            let basis = match p.basis {
                Basis::Gaussian => EigenBasis::Gaussian,
                Basis::Orthogonal => EigenBasis::Orthogonal,
            };
            let runs = seeded(config.seed, &p.seeds, |s, child| {
                single_vs_double(p.width, p.depth, p.eigen_range, basis, p.iterations, p.step, s, &mut SeededRng::new(child))
            })?;
            let mut summary = String::from("seed,step,final_single,final_double,single_outcome,double_outcome,double_wins\n");
            for r in &runs {
                let _ = writeln!(
                    summary,
                    "{},{:.16e},{:.16e},{:.16e},{},{},{}",
                    r.seed,
                    r.step,
                    r.single.final_error(),
                    r.double.final_error(),
                    outcome_name(r.single.outcome()),
                    outcome_name(r.double.outcome()),
                    r.double_wins()
                );
            }
            out.add("summary.csv", summary);
            for r in &runs {
                out.add(format!("loss/seed{}.csv", r.seed), crate::linear::paired_loss_csv(&r.single, &r.double));
            }
        }
        Experiment::MatrixRateCheck(p) => {
            let runs = seeded(config.seed, &p.seeds, |s, child| {
                rate_check(
                    p.width,
                    p.depth,
                    p.eigen_range,
                    p.iterations,
                    p.trajectory_iters,
                    p.threshold_factor,
                    p.perturbation,
                    s,
                    &mut SeededRng::new(child),
                )
            })?;
            let mut summary = String::from(
                "seed,safe_step,safe_outcome,root_error,trajectory_gap,threshold,unstable_step,unstable_outcome,unstable_max_loss\n",
            );
            for r in &runs {
                let _ = writeln!(
                    summary,
                    "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                    r.seed,
                    r.safe_step,
                    outcome_name(r.safe_outcome),
                    r.root_error,
                    r.trajectory_gap,
                    r.threshold,
                    r.unstable_step,
                    outcome_name(r.unstable.outcome()),
                    r.unstable_max_loss()
                );
            }
            out.add("summary.csv", summary);
            for r in &runs {
                out.add(format!("unstable/seed{}.csv", r.seed), r.unstable.to_csv("loss"));
            }
        }
        Experiment::Fit1d(p) => {
            let target = match &p.target {
                Some(t) => PiecewiseAffine1D::new(t.breakpoints.clone(), t.slopes.clone(), t.intercept)?,
                None => PiecewiseAffine1D::reference(),
            };
            let jobs: Vec<([f64; 2], u64)> =
                p.bias_ranges.iter().flat_map(|&r| p.seeds.iter().map(move |&s| (r, s))).collect();
            let runs = jobs
                .par_iter()
                .map(|&(range, s)| {
                    let cfg = TrainConfig {
                        step: p.step,
                        max_epochs: p.max_epochs,
                        bias_init_range: range,
                        weight_init_range: p.weight_init_range,
                        seed: child_seed(config.seed, s),
                        projection: p.projection,
                        ..TrainConfig::default()
                    };
                    fit_1d(&target, p.grid_size, p.depth, &cfg)
                        .map(|r| (s, r))
                        .map_err(|e| e.context(format!("bias [{}, {}] seed {s}", range[0], range[1])))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut summary =
                String::from("bias_low,bias_high,seed,final_loss,epochs,lipschitz,mean_abs_grad_w,mean_abs_grad_b\n");
            for (s, r) in &runs {
                let _ = writeln!(
                    summary,
                    "{},{},{s},{:.16e},{},{:.16e},{:.16e},{:.16e}",
                    r.bias_range[0],
                    r.bias_range[1],
                    r.outcome.final_loss(),
                    r.outcome.epochs_run,
                    r.lipschitz,
                    r.mean_abs_grad_w,
                    r.mean_abs_grad_b
                );
            }
            out.add("summary.csv", summary);
            for (s, r) in &runs {
                let dir = format!("runs/{}/seed{s}", bias_tag(r.bias_range));
                out.add(format!("{dir}/loss.csv"), r.outcome.loss_csv());
                out.add(format!("{dir}/fit.csv"), fit_curve_csv(&target, p.grid_size, &r.outcome.model)?);
                let record = PairRecord::from(&r.outcome.model);
                out.add(format!("{dir}/model.json"), serde_json::to_string_pretty(&record)? + "\n");
            }
        }
        Experiment::ConvexityAudit(p) => {
            let indices: Vec<u64> = (0..p.nets as u64).collect();
            let rows = seeded(config.seed, &indices, |_, child| {
                convexity_row(p.max_input_dim, p.max_depth, p.max_width, p.pairs_per_net, &mut SeededRng::new(child))
            })?;
            let mut csv = String::from("net,input_dim,depth,max_violation\n");
            for (i, r) in rows.iter().enumerate() {
                let _ = writeln!(csv, "{i},{},{},{:.16e}", r.input_dim, r.depth, r.max_violation);
            }
            out.add("convexity.csv", csv);
            let bowl = bowl_net();
            let mut csv = String::from("x1,x2,value,expected\n");
            for (x, expected) in BOWL_PROBES {
                let _ = writeln!(csv, "{},{},{:.16e},{expected:.16e}", x[0], x[1], bowl.value(&x)?);
            }
            out.add("bowl.csv", csv);
        }
        Experiment::OptCondAudit(p) => {
            let runs = seeded(config.seed, &p.seeds, |s, child| {
                opt_cond_run(p.grid_size, p.depth, p.step, p.max_epochs, p.stop_grad_norm, p.noise, child).map(|r| (s, r))
            })?;
            let mut summary = String::from("seed,epochs,final_loss,stationarity,grad_norm,residual_max,bound\n");
            let mut residuals = String::from("seed,index,residual\n");
            for (s, r) in &runs {
                let _ = writeln!(
                    summary,
                    "{s},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    r.outcome.epochs_run,
                    r.outcome.final_loss(),
                    r.outcome.grad_norm,
                    r.grad_norm,
                    r.residuals.max(),
                    1e-6 * r.scale
                );
                for (i, v) in r.residuals.layers.iter().chain([&r.residuals.head]).enumerate() {
                    let _ = writeln!(residuals, "{s},{},{v:.16e}", i + 1);
                }
            }
            out.add("summary.csv", summary);
            out.add("residuals.csv", residuals);
        }
    }
    Ok(out)
}

fn bias_tag(range: [f64; 2]) -> String {
    format!("bias{}-{}", range[0], range[1])
}
