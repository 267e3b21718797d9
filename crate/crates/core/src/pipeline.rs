//! End-to-end simulated experiments: noisy mapping, shot sampling,
//! correction of the known affine distortions, and reconstruction.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::consts::working_dim;
use crate::dynamics::{excitation_mapping_populations, parity_mapping_populations, Envelope};
use crate::error::{OrensError, Result};
use crate::estimator::{reconstruct_values, BayesConfig, ReconstructionResult};
use crate::fockspace::{make_state_with_tolerance, DensityMatrix, StateSpec};
use crate::measurement::{push_sampled, Mapping, MeasurementPlan, ObservableKind, OutcomeRecord};
use crate::noise::{correct_observables, displaced_populations, noisy_probabilities, NoiseModel, NoisyProbabilities};

/// How mapped qubit probabilities are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "engine")]
pub enum Engine {
    /// Closed-form channels from [`crate::noise`].
    Analytic,
    /// Master-equation simulation of every setting.
    Lindblad { envelope: Envelope },
}

/// Tail mass below which displaced Fock levels are dropped before a
/// master-equation run.
const TAIL_TOL: f64 = 1e-12;

fn trimmed(mut pops: Vec<f64>) -> Vec<f64> {
    let mut tail = 0.0;
    while pops.len() > 1 {
        let last = pops[pops.len() - 1].max(0.0);
        if tail + last >= TAIL_TOL {
            break;
        }
        tail += last;
        pops.pop();
    }
    pops
}

/// Mapped excited-state probabilities per setting under `engine`.
pub fn mapped_probabilities(
    rho: &DensityMatrix,
    plan: &MeasurementPlan,
    model: &NoiseModel,
    engine: Engine,
) -> Result<NoisyProbabilities> {
    let Engine::Lindblad { envelope } = engine else {
        return noisy_probabilities(rho, plan, model);
    };
    if rho.dim() != plan.dim() {
        return Err(OrensError::DimensionMismatch {
            expected: plan.dim(),
            got: rho.dim(),
        });
    }
    let kind = plan.kind();
    let mut normal = DVector::zeros(plan.len());
    let mut reversed = DVector::zeros(plan.len());
    for (k, &alpha) in plan.alphas().iter().enumerate() {
        let pops = trimmed(displaced_populations(rho, alpha, working_dim(plan.dim(), alpha.norm())));
        match kind {
            ObservableKind::Fock(n) => normal[k] = excitation_mapping_populations(&pops, n, model, envelope)?,
            ObservableKind::Parity => normal[k] = parity_mapping_populations(&pops, model, false)?,
            ObservableKind::CorrectedParity => {
                normal[k] = parity_mapping_populations(&pops, model, false)?;
                reversed[k] = parity_mapping_populations(&pops, model, true)?;
            }
        }
    }
    Ok(NoisyProbabilities {
        normal,
        reversed: (kind == ObservableKind::CorrectedParity).then_some(reversed),
        measurement_count: plan.measurement_count(),
    })
}

/// Seed of the reversed-mapping draws, decorrelated from the normal ones.
fn reversed_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03
}

/// Binomial shot record for the mapped probabilities; corrected parity
/// gets both mappings.
pub fn sample_mapped(plan: &MeasurementPlan, probs: &NoisyProbabilities, shots: u64, seed: u64) -> Result<OutcomeRecord> {
    let mut rec = OutcomeRecord::default();
    push_sampled(&mut rec, plan, &probs.normal, shots, seed, Mapping::Normal)?;
    if let Some(rev) = &probs.reversed {
        push_sampled(&mut rec, plan, rev, shots, reversed_seed(seed), Mapping::Reversed)?;
    }
    Ok(rec)
}

/// Observable values for the estimators. With a model, readout, thermal
/// population and the state-independent dephasing scale are undone;
/// without one, frequencies are read as ideal.
pub fn estimator_input(plan: &MeasurementPlan, record: &OutcomeRecord, model: Option<&NoiseModel>) -> Result<DVector<f64>> {
    let Some(model) = model else {
        return record.observable_values(plan);
    };
    let normal = record.frequencies(plan, Mapping::Normal)?;
    let reversed = if plan.kind() == ObservableKind::CorrectedParity {
        Some(record.frequencies(plan, Mapping::Reversed)?)
    } else {
        None
    };
    correct_observables(plan, &normal, reversed.as_ref(), model)
}

/// Settings of one simulated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub model: NoiseModel,
    pub shots: u64,
    pub engine: Engine,
    /// Undo the known affine distortions before reconstruction.
    pub correct: bool,
}

impl Experiment {
    pub fn ideal(shots: u64) -> Self {
        Self {
            model: NoiseModel::ideal(),
            shots,
            engine: Engine::Analytic,
            correct: false,
        }
    }

    pub fn with_model(model: NoiseModel, shots: u64) -> Self {
        Self {
            model,
            shots,
            engine: Engine::Analytic,
            correct: true,
        }
    }
}

/// Mapping, sampling and reconstruction of one state.
pub fn run_experiment(
    rho: &DensityMatrix,
    plan: &MeasurementPlan,
    experiment: &Experiment,
    bayes: &BayesConfig,
    seed: u64,
) -> Result<ReconstructionResult> {
    let probs = mapped_probabilities(rho, plan, &experiment.model, experiment.engine)?;
    let record = sample_mapped(plan, &probs, experiment.shots, seed)?;
    let x = estimator_input(plan, &record, experiment.correct.then_some(&experiment.model))?;
    let cfg = BayesConfig {
        seed,
        ..bayes.clone()
    };
    let mut result = reconstruct_values(plan, &x, &cfg)?;
    result.score(rho)?;
    Ok(result)
}

/// Truncation leakage accepted for benchmark states; α = 1 cats leak about
/// 1e−3 at D = 6 and are renormalized.
pub const BENCHMARK_LEAKAGE_TOL: f64 = 1e-2;

/// Labelled, truncated benchmark states.
pub fn benchmark_states(specs: &[StateSpec], dim: usize) -> Result<Vec<(String, DensityMatrix)>> {
    specs
        .iter()
        .map(|s| Ok((s.to_string(), make_state_with_tolerance(s, dim, BENCHMARK_LEAKAGE_TOL)?)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub label: String,
    pub seed: u64,
    pub f_ls: Option<f64>,
    pub f_mle: f64,
    pub f_bme: f64,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub cases: usize,
    pub mean_f_mle: f64,
    pub mean_f_bme: f64,
    pub std_f_bme: f64,
    pub mean_acceptance: f64,
}

impl EnsembleSummary {
    pub fn from_cases(cases: &[CaseResult]) -> Self {
        let n = cases.len().max(1) as f64;
        let mean = |f: &dyn Fn(&CaseResult) -> f64| cases.iter().map(f).sum::<f64>() / n;
        let mean_f_bme = mean(&|c| c.f_bme);
        Self {
            cases: cases.len(),
            mean_f_mle: mean(&|c| c.f_mle),
            mean_f_bme,
            std_f_bme: mean(&|c| (c.f_bme - mean_f_bme).powi(2)).sqrt(),
            mean_acceptance: mean(&|c| c.acceptance_rate),
        }
    }
}

/// Runs every labelled state through the same plan. Case `i` uses seed
/// `seed·10⁴ + i`.
pub fn run_ensemble(
    states: &[(String, DensityMatrix)],
    plan: &MeasurementPlan,
    experiment: &Experiment,
    bayes: &BayesConfig,
    seed: u64,
) -> Result<Vec<CaseResult>> {
    states
        .iter()
        .enumerate()
        .map(|(i, (label, rho))| {
            let case_seed = seed.wrapping_mul(10_000).wrapping_add(i as u64);
            let res = run_experiment(rho, plan, experiment, bayes, case_seed)?;
            let f = res.fidelities.expect("scored by run_experiment");
            Ok(CaseResult {
                label: label.clone(),
                seed: case_seed,
                f_ls: f.ls,
                f_mle: f.mle,
                f_bme: f.bme,
                acceptance_rate: res.acceptance_rate,
            })
        })
        .collect()
}
