use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use orens::dynamics::Envelope;
use orens::estimator::{reconstruct_values, BayesConfig, ReconstructionResult};
use orens::fockspace::{quasiprob_grid, write_grid_csv};
use orens::measurement::Mapping;
use orens::optimizer::{
    optimize_displacements, sweep_excitation_number, KindFamily, OptimizerConfig,
};
use orens::pipeline::{estimator_input, mapped_probabilities, sample_mapped};
use orens::{MeasurementPlan, OutcomeRecord, PhaseSpaceGrid};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::LoadedConfig;
use crate::io::{
    load_noise, load_plan, load_record, load_state, read_structured, write_json, write_with,
};
use crate::manifest::RunManifest;
use crate::{EngineName, GridArgs, OptimizeArgs, PlanKind, ReconstructArgs, SimulateArgs};

pub const OPTIMIZED_PLAN_SCHEMA: &str = "orens.optimized_plan/1";
pub const TRACE_SCHEMA_LINE: &str = "# orens-trace v1";
pub const GRID_SCHEMA_LINE: &str = "# orens-grid v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub n: usize,
    pub cn: f64,
}

/// Optimizer output as written by `orens optimize`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPlanFile {
    pub schema: String,
    pub plan: MeasurementPlan,
    pub cn: f64,
    pub n_chosen: Option<usize>,
    pub restart_index: usize,
    pub initial_cn: f64,
    pub iterations: usize,
    /// Best CN for every `n` when the excitation number was swept.
    pub sweep: Vec<SweepEntry>,
    pub config: OptimizerConfig,
    #[serde(skip)]
    pub trace: Vec<(usize, f64)>,
}

pub fn optimizer_config(
    dim: usize,
    kind: PlanKind,
    a: &OptimizeArgs,
    cfg: &LoadedConfig,
) -> OptimizerConfig {
    let d = &cfg.config.optimize;
    let mut c = OptimizerConfig::new(dim, kind.family());
    if let Some(r) = a.restarts.or(d.restarts) {
        c.restarts = r;
    }
    if let Some(m) = a.max_alpha.or(d.max_alpha) {
        c.max_alpha = m;
    }
    if let Some(m) = a.max_iters.or(d.max_iters) {
        c.max_iters = m;
    }
    if let Some(s) = a.seed.or(cfg.config.seed) {
        c.seed = s;
    }
    c
}

pub fn optimize_plan(kind: PlanKind, config: &OptimizerConfig) -> Result<OptimizedPlanFile> {
    let (best, sweep) = if config.family == KindFamily::Fock {
        let s = sweep_excitation_number(config)?;
        let entries = s
            .results
            .iter()
            .map(|(n, p)| SweepEntry { n: *n, cn: p.cn })
            .collect();
        (s.best().clone(), entries)
    } else {
        config.validate()?;
        (
            optimize_displacements(config, config.kinds()[0])?,
            Vec::new(),
        )
    };
    let plan = match kind.relabel() {
        Some(k) => best.plan.with_kind(k)?,
        None => best.plan,
    };
    Ok(OptimizedPlanFile {
        schema: OPTIMIZED_PLAN_SCHEMA.to_string(),
        plan,
        cn: best.cn,
        n_chosen: best.n_chosen,
        restart_index: best.restart_index,
        initial_cn: best.initial_cn,
        iterations: best.iterations,
        sweep,
        config: config.clone(),
        trace: best.trace,
    })
}

fn default_trace_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".trace.csv");
    PathBuf::from(s)
}

pub fn optimize(a: &OptimizeArgs, cfg: &LoadedConfig) -> Result<()> {
    let t0 = Instant::now();
    let config = optimizer_config(a.dim, a.kind, a, cfg);
    let result = optimize_plan(a.kind, &config)?;
    write_json(&a.out, &result)?;
    let trace = a
        .trace
        .clone()
        .unwrap_or_else(|| default_trace_path(&a.out));
    write_with(&trace, |w| {
        writeln!(w, "{TRACE_SCHEMA_LINE}")?;
        writeln!(w, "iteration,cn")?;
        for (i, cn) in &result.trace {
            writeln!(w, "{i},{cn}")?;
        }
        Ok(())
    })?;

    println!(
        "{} settings, kind {}, CN {:.4} (restart {}, start {:.4})",
        result.plan.len(),
        result.plan.kind(),
        result.cn,
        result.restart_index,
        result.initial_cn
    );
    for e in &result.sweep {
        println!("  n = {}: CN {:.4}", e.n, e.cn);
    }

    let mut m = RunManifest::new("optimize", cfg.path.as_deref(), Some(config.seed));
    m.output(&a.out);
    m.output(&trace);
    m.parameters = json!({ "kind": a.kind, "optimizer": config });
    m.finish(&a.out, t0.elapsed())?;
    Ok(())
}

/// Exact mapped probabilities in record form (`shots = 0`).
fn exact_record(
    plan: &MeasurementPlan,
    probs: &orens::noise::NoisyProbabilities,
) -> Result<OutcomeRecord> {
    let mut rec = OutcomeRecord::from_probabilities(plan, &probs.normal, Mapping::Normal)?;
    if let Some(rev) = &probs.reversed {
        rec.push_exact(plan, rev, Mapping::Reversed)?;
    }
    Ok(rec)
}

fn is_file(arg: &str) -> bool {
    Path::new(arg).is_file()
}

pub fn simulate(a: &SimulateArgs, cfg: &LoadedConfig) -> Result<()> {
    let t0 = Instant::now();
    let d = &cfg.config.simulate;
    let noise = a
        .noise
        .clone()
        .or_else(|| d.noise.clone())
        .unwrap_or_else(|| "ideal".into());
    let shots = a.shots.or(d.shots).unwrap_or(1000);
    let engine_name = a.engine.or(d.engine).unwrap_or(EngineName::Analytic);
    let envelope = a.envelope.or(d.envelope).unwrap_or(Envelope::Gaussian);
    let seed = a.seed.or(cfg.config.seed).unwrap_or(0);

    let plan = load_plan(&a.plan)?;
    let model = load_noise(&noise)?;
    let rho = load_state(&a.state, Some(plan.dim()), a.leakage_tol)?;
    let probs = mapped_probabilities(&rho, &plan, &model, engine_name.engine(envelope))?;
    let record = if shots == 0 {
        exact_record(&plan, &probs)?
    } else {
        sample_mapped(&plan, &probs, shots, seed)?
    };
    write_with(&a.out, |w| Ok(record.write_csv(w)?))?;
    println!("{} rows written to {}", record.rows.len(), a.out.display());

    let mut m = RunManifest::new("simulate", cfg.path.as_deref(), Some(seed));
    m.input(&a.plan);
    for arg in [&a.state, &noise] {
        if is_file(arg) {
            m.input(arg);
        }
    }
    m.output(&a.out);
    m.parameters = json!({
        "state": a.state,
        "noise": noise,
        "noise_model": model,
        "shots": shots,
        "engine": engine_name,
        "envelope": envelope,
        "leakage_tol": a.leakage_tol,
    });
    m.finish(&a.out, t0.elapsed())?;
    Ok(())
}

fn fidelity_table(result: &ReconstructionResult) -> String {
    let Some(f) = &result.fidelities else {
        return String::new();
    };
    let ls = f.ls.map_or("unphysical".to_string(), |v| format!("{v:.6}"));
    format!(
        "estimator  fidelity\nLS         {ls}\nMLE        {:.6}\nBME        {:.6}\n",
        f.mle, f.bme
    )
}

pub fn reconstruct(a: &ReconstructArgs, cfg: &LoadedConfig) -> Result<()> {
    let t0 = Instant::now();
    let plan = load_plan(&a.plan)?;
    let record = load_record(&a.data)?;
    let mut bayes: BayesConfig = match &a.bayes_config {
        Some(p) => read_structured(p)?,
        None => cfg.config.bayes.clone().unwrap_or_default(),
    };
    match (a.seed, &a.bayes_config, cfg.config.seed) {
        (Some(s), _, _) | (None, None, Some(s)) => bayes.seed = s,
        _ => {}
    }
    let model = a.noise.as_deref().map(load_noise).transpose()?;
    let target = a
        .target
        .as_deref()
        .map(|t| load_state(t, Some(plan.dim()), a.leakage_tol))
        .transpose()?;

    let x = estimator_input(&plan, &record, model.as_ref())?;
    let mut result = reconstruct_values(&plan, &x, &bayes)?;
    if let Some(rho) = &target {
        result.score(rho)?;
    }
    write_json(&a.out, &result)?;

    print!("{}", fidelity_table(&result));
    println!(
        "acceptance {:.3}, beta {:.4}",
        result.acceptance_rate, result.final_beta
    );
    for w in &result.warnings {
        log::warn!("{w}");
    }

    let mut m = RunManifest::new("reconstruct", cfg.path.as_deref(), Some(bayes.seed));
    m.input(&a.plan);
    m.input(&a.data);
    if let Some(p) = &a.bayes_config {
        m.input(p);
    }
    for arg in [&a.target, &a.noise].into_iter().flatten() {
        if is_file(arg) {
            m.input(arg);
        }
    }
    m.output(&a.out);
    m.parameters = json!({
        "target": a.target,
        "noise": a.noise,
        "bayes": bayes,
        "leakage_tol": a.leakage_tol,
    });
    m.finish(&a.out, t0.elapsed())?;
    Ok(())
}

pub fn grid(a: &GridArgs, cfg: &LoadedConfig) -> Result<()> {
    let t0 = Instant::now();
    let rho = load_state(&a.rho, a.dim, a.leakage_tol)?;
    let grid = PhaseSpaceGrid::square(a.range, a.points);
    grid.validate()?;
    let values = quasiprob_grid(&rho, a.kind, &grid)?;
    write_with(&a.out, |w| {
        writeln!(w, "{GRID_SCHEMA_LINE}")?;
        Ok(write_grid_csv(w, &grid, &values)?)
    })?;

    let mut m = RunManifest::new("grid", cfg.path.as_deref(), None);
    if is_file(&a.rho) {
        m.input(&a.rho);
    }
    m.output(&a.out);
    m.parameters = json!({
        "rho": a.rho,
        "dim": rho.dim(),
        "kind": a.kind,
        "range": a.range,
        "points": a.points,
    });
    m.finish(&a.out, t0.elapsed())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrected_parity_is_relabelled() {
        let mut c = OptimizerConfig::new(2, KindFamily::Parity);
        c.restarts = 2;
        c.max_iters = 200;
        let out = optimize_plan(PlanKind::CorrectedParity, &c).unwrap();
        assert_eq!(out.plan.kind(), orens::ObservableKind::CorrectedParity);
        assert_eq!(out.plan.measurement_count(), 2 * 3);
        assert!(out.sweep.is_empty());
    }

    #[test]
    fn fock_sweep_lists_every_n() {
        let mut c = OptimizerConfig::new(3, KindFamily::Fock);
        c.restarts = 2;
        c.max_iters = 200;
        let out = optimize_plan(PlanKind::Fock, &c).unwrap();
        assert_eq!(
            out.sweep.iter().map(|e| e.n).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(out.n_chosen, Some(2));
    }
}
