//! Reconstruction benchmarks over state families, plans and noise settings.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use orens::dynamics::Envelope;
use orens::estimator::BayesConfig;
use orens::fockspace::make_state_with_tolerance;
use orens::fockspace::CatPhase;
use orens::optimizer::OptimizerConfig;
use orens::pipeline::{run_experiment, Experiment, BENCHMARK_LEAKAGE_TOL};
use orens::{Complex64, DensityMatrix, MeasurementPlan, NoiseModel, StateSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::optimize_plan;
use crate::config::LoadedConfig;
use crate::io::{load_noise, read_text, write_json, write_with};
use crate::manifest::RunManifest;
use crate::{BenchmarkArgs, EngineName, PlanKind};

pub const RESULTS_SCHEMA_LINE: &str = "# orens-benchmark v1";
pub const SUMMARY_SCHEMA: &str = "orens.benchmark_summary/1";
pub const MAX_BENCHMARK_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateFamily {
    /// Fock states and two-level superpositions, `D²` states.
    FockSuperpositions,
    /// `|α⟩ + phase·|−α⟩` for each listed phase (all four when empty).
    Cats {
        alpha: f64,
        #[serde(default)]
        phases: Vec<String>,
    },
}

impl StateFamily {
    pub fn specs(&self, dim: usize) -> Result<Vec<StateSpec>> {
        Ok(match self {
            StateFamily::FockSuperpositions => StateSpec::fock_family(dim),
            StateFamily::Cats { alpha, phases } => {
                let beta = Complex64::new(*alpha, 0.0);
                if phases.is_empty() {
                    StateSpec::cat_family(beta)
                } else {
                    phases
                        .iter()
                        .map(|p| Ok(StateSpec::cat(beta, p.parse::<CatPhase>()?)))
                        .collect::<orens::Result<_>>()?
                }
            }
        })
    }
}

/// Plan labels accepted in a benchmark spec.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchPlan {
    /// Fock projector with `n = D−1`.
    Orens,
    Wigner,
    CorrectedWigner,
    Husimi,
}

impl BenchPlan {
    pub fn name(self) -> &'static str {
        match self {
            BenchPlan::Orens => "orens",
            BenchPlan::Wigner => "wigner",
            BenchPlan::CorrectedWigner => "corrected_wigner",
            BenchPlan::Husimi => "husimi",
        }
    }

    fn kind(self, dim: usize) -> PlanKind {
        match self {
            BenchPlan::Orens => PlanKind::FockFixed(dim - 1),
            BenchPlan::Wigner => PlanKind::Parity,
            BenchPlan::CorrectedWigner => PlanKind::CorrectedParity,
            BenchPlan::Husimi => PlanKind::Husimi,
        }
    }
}

fn default_repetitions() -> usize {
    1
}
fn default_restarts() -> usize {
    8
}
fn default_noise() -> String {
    "ideal".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub dims: Vec<usize>,
    pub family: StateFamily,
    pub plans: Vec<BenchPlan>,
    /// `ideal`, `device`, or a noise JSON path.
    #[serde(default = "default_noise")]
    pub noise: String,
    pub shots: u64,
    /// Replaces the model's `T_φ` (µs) point by point.
    #[serde(default)]
    pub t_phi_us: Option<Vec<f64>>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Optimizer restarts per plan.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub max_alpha: Option<f64>,
    #[serde(default)]
    pub engine: Option<EngineName>,
    #[serde(default)]
    pub envelope: Option<Envelope>,
    #[serde(default)]
    pub bayes: Option<BayesConfig>,
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.plans.is_empty() {
            bail!("benchmark spec needs at least one dim and one plan");
        }
        if let Some(&d) = self
            .dims
            .iter()
            .find(|&&d| !(2..=MAX_BENCHMARK_DIM).contains(&d))
        {
            bail!("benchmark dim {d} outside 2..={MAX_BENCHMARK_DIM}");
        }
        if self.shots == 0 {
            bail!("benchmark shots must be at least 1");
        }
        if self.repetitions == 0 || self.restarts == 0 {
            bail!("repetitions and restarts must be at least 1");
        }
        if let Some(ts) = &self.t_phi_us {
            if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0)) {
                bail!("t_phi_us must list positive values");
            }
        }
        if let Some(b) = &self.bayes {
            b.validate()?;
        }
        Ok(())
    }
}

/// One row per (case, estimator). Failed cases carry the error and no
/// fidelity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub dim: usize,
    pub t_phi_us: Option<f64>,
    pub state: String,
    pub plan_kind: String,
    pub estimator: String,
    pub fidelity: Option<f64>,
    pub seed: u64,
    pub repetition: usize,
    pub measurement_count: usize,
    pub acceptance_rate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryGroup {
    pub dim: usize,
    pub t_phi_us: Option<f64>,
    pub plan_kind: String,
    pub estimator: String,
    pub count: usize,
    pub failed: usize,
    pub mean: Option<f64>,
    /// Population standard deviation of the row fidelities.
    pub std: Option<f64>,
    pub measurement_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub schema: String,
    pub rows: usize,
    pub failed_rows: usize,
    pub groups: Vec<SummaryGroup>,
}

impl BenchmarkSummary {
    pub fn from_rows(rows: &[BenchmarkRow]) -> Self {
        let mut groups: Vec<(SummaryGroup, Vec<f64>)> = Vec::new();
        for r in rows {
            let same = |g: &SummaryGroup| {
                g.dim == r.dim
                    && g.t_phi_us == r.t_phi_us
                    && g.plan_kind == r.plan_kind
                    && g.estimator == r.estimator
            };
            let idx = match groups.iter().position(|(g, _)| same(g)) {
                Some(i) => i,
                None => {
                    groups.push((
                        SummaryGroup {
                            dim: r.dim,
                            t_phi_us: r.t_phi_us,
                            plan_kind: r.plan_kind.clone(),
                            estimator: r.estimator.clone(),
                            count: 0,
                            failed: 0,
                            mean: None,
                            std: None,
                            measurement_count: r.measurement_count,
                        },
                        Vec::new(),
                    ));
                    groups.len() - 1
                }
            };
            match r.fidelity {
                Some(f) => groups[idx].1.push(f),
                None => groups[idx].0.failed += 1,
            }
        }
        let groups: Vec<SummaryGroup> = groups
            .into_iter()
            .map(|(mut g, fs)| {
                g.count = fs.len();
                if !fs.is_empty() {
                    let n = fs.len() as f64;
                    let mean = fs.iter().sum::<f64>() / n;
                    g.mean = Some(mean);
                    g.std = Some((fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n).sqrt());
                }
                g
            })
            .collect();
        Self {
            schema: SUMMARY_SCHEMA.to_string(),
            rows: rows.len(),
            failed_rows: rows.iter().filter(|r| r.fidelity.is_none()).count(),
            groups,
        }
    }
}

/// Pool size: the request (or all cores), capped by `ORENS_THREADS`.
pub fn pool_size(requested: Option<usize>) -> Result<usize> {
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.unwrap_or(avail).max(1);
    if let Ok(v) = std::env::var("ORENS_THREADS") {
        let cap: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .with_context(|| format!("ORENS_THREADS must be a positive integer, got '{v}'"))?;
        n = n.min(cap);
    }
    Ok(n)
}

struct Job<'a> {
    dim: usize,
    t_phi: Option<f64>,
    label: &'a str,
    rho: &'a std::result::Result<DensityMatrix, String>,
    plan_name: &'static str,
    plan: &'a MeasurementPlan,
    repetition: usize,
    model: NoiseModel,
}

/// Row seed from the master seed and the job index.
pub fn job_seed(master: u64, index: usize) -> u64 {
    master.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

fn run_job(job: &Job, exp: &Experiment, bayes: &BayesConfig, seed: u64) -> Vec<BenchmarkRow> {
    let row = |estimator: &str, fidelity: Option<f64>, acc: Option<f64>, error: Option<String>| {
        BenchmarkRow {
            dim: job.dim,
            t_phi_us: job.t_phi,
            state: job.label.to_string(),
            plan_kind: job.plan_name.to_string(),
            estimator: estimator.to_string(),
            fidelity,
            seed,
            repetition: job.repetition,
            measurement_count: job.plan.measurement_count(),
            acceptance_rate: acc,
            error,
        }
    };
    let exp = Experiment {
        model: job.model.clone(),
        ..exp.clone()
    };
    let res = job.rho.as_ref().map_err(Clone::clone).and_then(|rho| {
        run_experiment(rho, job.plan, &exp, bayes, seed).map_err(|e| e.to_string())
    });
    match res {
        Ok(res) => {
            let f = res.fidelities.clone().expect("scored by run_experiment");
            let acc = Some(res.acceptance_rate);
            vec![
                row("mle", Some(f.mle), acc, None),
                row("bme", Some(f.bme), acc, None),
            ]
        }
        Err(e) => ["mle", "bme"]
            .iter()
            .map(|est| row(est, None, None, Some(e.clone())))
            .collect(),
    }
}

fn opt_str(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn write_rows(w: &mut dyn std::io::Write, rows: &[BenchmarkRow]) -> Result<()> {
    writeln!(w, "{RESULTS_SCHEMA_LINE}")?;
    let mut c = csv::Writer::from_writer(w);
    c.write_record([
        "dim",
        "t_phi_us",
        "state",
        "plan_kind",
        "estimator",
        "fidelity",
        "seed",
        "repetition",
        "measurement_count",
        "acceptance_rate",
        "error",
    ])?;
    for r in rows {
        c.write_record(&[
            r.dim.to_string(),
            opt_str(r.t_phi_us),
            r.state.clone(),
            r.plan_kind.clone(),
            r.estimator.clone(),
            opt_str(r.fidelity),
            r.seed.to_string(),
            r.repetition.to_string(),
            r.measurement_count.to_string(),
            opt_str(r.acceptance_rate),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

/// Runs the whole spec; failures of individual cases end up in the rows.
pub fn run_spec(spec: &BenchmarkSpec, threads: usize) -> Result<Vec<BenchmarkRow>> {
    spec.validate()?;
    let base_model = load_noise(&spec.noise)?;
    let envelope = spec.envelope.unwrap_or(Envelope::Gaussian);
    let exp = Experiment {
        model: base_model.clone(),
        shots: spec.shots,
        engine: spec.engine.unwrap_or(EngineName::Analytic).engine(envelope),
        correct: base_model != NoiseModel::ideal(),
    };
    let bayes = spec.bayes.clone().unwrap_or_default();
    let t_phis: Vec<Option<f64>> = match &spec.t_phi_us {
        Some(ts) => ts.iter().map(|&t| Some(t)).collect(),
        None => vec![None],
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    pool.install(|| {
        let mut rows = Vec::new();
        for &dim in &spec.dims {
            // States that cannot be truncated to `dim` become failed rows.
            let states: Vec<(String, std::result::Result<DensityMatrix, String>)> = spec
                .family
                .specs(dim)?
                .iter()
                .map(|s| {
                    (
                        s.to_string(),
                        make_state_with_tolerance(s, dim, BENCHMARK_LEAKAGE_TOL)
                            .map_err(|e| e.to_string()),
                    )
                })
                .collect();
            let plans: Vec<(&'static str, MeasurementPlan)> = spec
                .plans
                .par_iter()
                .map(|p| {
                    let kind = p.kind(dim);
                    let mut c = OptimizerConfig::new(dim, kind.family());
                    c.restarts = spec.restarts;
                    c.seed = spec.seed;
                    if let Some(m) = spec.max_iters {
                        c.max_iters = m;
                    }
                    if let Some(m) = spec.max_alpha {
                        c.max_alpha = m;
                    }
                    let out = optimize_plan(kind, &c)
                        .with_context(|| format!("optimizing {} plan at D={dim}", p.name()))?;
                    log::info!("D={dim} {} plan: CN {:.4}", p.name(), out.cn);
                    Ok((p.name(), out.plan))
                })
                .collect::<Result<_>>()?;

            let mut jobs = Vec::new();
            for &t_phi in &t_phis {
                let model = t_phi.map_or(base_model.clone(), |t| base_model.clone().with_t_phi(t));
                model.validate()?;
                for (plan_name, plan) in &plans {
                    for repetition in 0..spec.repetitions {
                        for (label, rho) in &states {
                            jobs.push(Job {
                                dim,
                                t_phi,
                                label,
                                rho,
                                plan_name,
                                plan,
                                repetition,
                                model: model.clone(),
                            });
                        }
                    }
                }
            }
            let offset = rows.len();
            let chunk: Vec<Vec<BenchmarkRow>> = jobs
                .par_iter()
                .enumerate()
                .map(|(i, job)| run_job(job, &exp, &bayes, job_seed(spec.seed, offset + i)))
                .collect();
            rows.extend(chunk.into_iter().flatten());
        }
        Ok(rows)
    })
}

pub fn run(a: &BenchmarkArgs, cfg: &LoadedConfig) -> Result<()> {
    let t0 = Instant::now();
    let spec: BenchmarkSpec = toml::from_str(&read_text(&a.spec)?)
        .with_context(|| format!("parsing {}", a.spec.display()))?;
    let threads = pool_size(a.threads.or(cfg.config.threads))?;
    let rows = run_spec(&spec, threads)?;
    let summary = BenchmarkSummary::from_rows(&rows);

    let results_path: PathBuf = a.out_dir.join("results.csv");
    let summary_path: PathBuf = a.out_dir.join("summary.json");
    write_with(&results_path, |w| write_rows(w, &rows))?;
    write_json(&summary_path, &summary)?;

    println!("plan              D  T_phi    estimator  mean      std       n");
    for g in &summary.groups {
        println!(
            "{:<17} {:<2} {:<8} {:<10} {:<9} {:<9} {}{}",
            g.plan_kind,
            g.dim,
            g.t_phi_us.map_or("-".into(), |t| t.to_string()),
            g.estimator,
            g.mean.map_or("-".into(), |m| format!("{m:.5}")),
            g.std.map_or("-".into(), |s| format!("{s:.5}")),
            g.count,
            if g.failed > 0 {
                format!(" ({} failed)", g.failed)
            } else {
                String::new()
            }
        );
    }

    let mut m = RunManifest::new("benchmark", cfg.path.as_deref(), Some(spec.seed));
    m.input(&a.spec);
    m.output(&results_path);
    m.output(&summary_path);
    m.parameters = json!({ "spec": spec, "threads": threads });
    m.finish(&results_path, t0.elapsed())?;
    Ok(())
}
