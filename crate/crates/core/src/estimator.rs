//! Density-matrix estimators: linear inversion, physical projection and the
//! Bayesian mean, plus Uhlmann fidelity.
//!
//! All estimators work on observable values `x` (expectations of the plan's
//! observable, e.g. probabilities for Fock projectors and `⟨P⟩` for parity).
//! [`OutcomeRecord`]s are converted with
//! [`OutcomeRecord::observable_values`].

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OrensError, Result};
use crate::fockspace::{DensityMatrix, MatrixJson};
use crate::linalg::{from_eigh, ginibre, hermitian_eigenvalues, hermitian_eigh, hermitize, psd_sqrt, trace};
use crate::measurement::{
    affine_transform, condition_number, params_from_rho, param_len, rho_from_params, AffineMap, MeasurementPlan,
    OutcomeRecord,
};
use crate::ComplexMatrix;

fn check_values(plan: &MeasurementPlan, x: &DVector<f64>) -> Result<()> {
    if !plan.is_complete() {
        return Err(OrensError::InvalidPlan(format!(
            "plan has {} settings, inversion needs D²−1 = {}",
            plan.len(),
            param_len(plan.dim())
        )));
    }
    if x.len() != plan.len() {
        return Err(OrensError::DimensionMismatch {
            expected: plan.len(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OrensError::DataMismatch("observable values must be finite".into()));
    }
    Ok(())
}

fn singular(plan: &MeasurementPlan) -> OrensError {
    OrensError::SingularSystem {
        plan: format!("{} ({})", plan.label, &plan.hash()[..12]),
    }
}

/// `ρ_LS = rho_from_params(𝓜⁻¹(x − V))`: Hermitian with unit trace, not
/// necessarily positive.
pub fn linear_inversion_values(plan: &MeasurementPlan, x: &DVector<f64>) -> Result<ComplexMatrix> {
    check_values(plan, x)?;
    let map = affine_transform(plan);
    if !condition_number(&map.m)?.is_finite() {
        return Err(singular(plan));
    }
    let y = map.m.clone().lu().solve(&(x - &map.v)).ok_or_else(|| singular(plan))?;
    rho_from_params(&y, plan.dim())
}

pub fn linear_inversion(plan: &MeasurementPlan, record: &OutcomeRecord) -> Result<ComplexMatrix> {
    linear_inversion_values(plan, &record.observable_values(plan)?)
}

/// Euclidean projection onto the probability simplex.
pub fn simplex_projection(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &mu) in sorted.iter().enumerate() {
        acc += mu;
        let t = (acc - 1.0) / (j + 1) as f64;
        if mu - t > 0.0 {
            theta = t;
        }
    }
    values.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Closest density matrix in Frobenius norm: eigenvalues projected onto the
/// simplex, eigenvectors kept.
pub fn mle_project(rho_ls: &ComplexMatrix) -> Result<DensityMatrix> {
    if !rho_ls.is_square() {
        return Err(OrensError::NotSquare {
            rows: rho_ls.nrows(),
            cols: rho_ls.ncols(),
        });
    }
    let (values, vectors) = hermitian_eigh(&hermitize(rho_ls));
    let projected = DVector::from_vec(simplex_projection(values.as_slice()));
    DensityMatrix::from_approx(from_eigh(&projected, &vectors))
}

/// `(Tr √(√ρ_a ρ_b √ρ_a))²`, clipped to `[0, 1]`.
pub fn uhlmann_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(OrensError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let sa = psd_sqrt(a.matrix(), 0.0);
    let inner = hermitize(&(&sa * b.matrix() * &sa));
    let root_trace: f64 = hermitian_eigenvalues(&inner).iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((root_trace * root_trace).clamp(0.0, 1.0))
}

/// Pseudo-likelihood MCMC settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BayesConfig {
    /// Prior concentration; the Ginibre factor `A` has `round(α·D)` columns,
    /// so `α = 1` is the Hilbert–Schmidt (uniform) prior.
    pub prior_concentration: f64,
    /// Standard deviation of the pseudo-likelihood; `None` means
    /// `1/(1000·(D²−1))`.
    pub sigma: Option<f64>,
    pub samples: usize,
    pub thinning: usize,
    /// Steps discarded before sampling; `None` means `samples·thinning/2`.
    pub burn_in: Option<usize>,
    /// Initial weight of the fresh prior draw in each proposal.
    pub beta: f64,
    /// Adapt β during burn-in towards 20–40 % acceptance.
    pub auto_tune: bool,
    pub seed: u64,
    /// Keep the thinned posterior samples in the result.
    pub keep_samples: bool,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            prior_concentration: 1.0,
            sigma: None,
            samples: 1 << 10,
            thinning: 1 << 7,
            burn_in: None,
            beta: 0.05,
            auto_tune: true,
            seed: 0,
            keep_samples: false,
        }
    }
}

/// Acceptance band outside which a warning is attached.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.1, 0.6);
const TUNE_WINDOW: usize = 200;

impl BayesConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OrensError::InvalidParameter(m.to_string()));
        if !(self.prior_concentration > 0.0 && self.prior_concentration.is_finite()) {
            return bad("prior concentration must be positive");
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return bad("sigma must be positive");
            }
        }
        if self.samples == 0 || self.thinning == 0 {
            return bad("samples and thinning must be at least 1");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn sigma_for(&self, dim: usize) -> f64 {
        self.sigma.unwrap_or(1.0 / (1000.0 * param_len(dim) as f64))
    }

    pub fn burn_in_steps(&self) -> usize {
        self.burn_in.unwrap_or(self.samples * self.thinning / 2)
    }

    fn columns(&self, dim: usize) -> usize {
        ((self.prior_concentration * dim as f64).round() as usize).max(1)
    }
}

/// Posterior mean and chain diagnostics.
#[derive(Clone, Debug)]
pub struct BayesOutput {
    pub rho: DensityMatrix,
    pub acceptance_rate: f64,
    pub beta: f64,
    /// Standard deviation of `F(ρ_r, ρ_BME)` over the samples.
    pub fidelity_spread: f64,
    pub warnings: Vec<String>,
    pub samples: Vec<ComplexMatrix>,
}

struct Likelihood<'a> {
    map: &'a AffineMap,
    x: &'a DVector<f64>,
    inv_two_var: f64,
}

impl Likelihood<'_> {
    fn log(&self, rho: &ComplexMatrix) -> f64 {
        let r = self.map.apply(&params_from_rho(rho)) - self.x;
        -r.norm_squared() * self.inv_two_var
    }
}

fn gram_state(a: &ComplexMatrix) -> ComplexMatrix {
    let g = a * a.adjoint();
    let tr = trace(&g).re;
    g.unscale(tr)
}

/// Posterior mean under the pseudo-likelihood
/// `exp(−‖𝓜·y(ρ) + V − x‖²/(2σ²))` with `ρ = AA†/Tr(AA†)` and a Ginibre
/// prior on `A`. Proposals `A′ = √(1−β²)A + βG` leave the prior invariant,
/// so acceptance depends on the likelihood ratio only. The chain starts at
/// `A ∝ √ρ_start`.
pub fn bayesian_mean_values(
    plan: &MeasurementPlan,
    x: &DVector<f64>,
    start: &DensityMatrix,
    config: &BayesConfig,
) -> Result<BayesOutput> {
    config.validate()?;
    check_values(plan, x)?;
    let dim = plan.dim();
    let map = affine_transform(plan);
    let sigma = config.sigma_for(dim);
    let like = Likelihood {
        map: &map,
        x,
        inv_two_var: 0.5 / (sigma * sigma),
    };
    let cols = config.columns(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let root = psd_sqrt(start.matrix(), 0.0);
    let mut a = ComplexMatrix::zeros(dim, cols);
    for j in 0..cols.min(dim) {
        a.set_column(j, &root.column(j));
    }
    if cols < dim {
        // a low-rank factor cannot hold √ρ_start; nudge it off the
        // truncated start so every direction is reachable
        a += ginibre(&mut rng, dim, cols) * Complex64::from(1e-3);
    }
    let scale = (2.0 * (dim * cols) as f64).sqrt() / a.norm().max(f64::MIN_POSITIVE);
    a *= Complex64::from(scale);
    let mut rho = gram_state(&a);
    let mut log_l = like.log(&rho);

    let mut beta = config.beta;
    let burn = config.burn_in_steps();
    let total = burn + config.samples * config.thinning;
    let (mut window_acc, mut window_n) = (0usize, 0usize);
    let mut accepted = 0usize;
    let mut mean = ComplexMatrix::zeros(dim, dim);
    let mut kept = Vec::with_capacity(config.samples);
    for step in 0..total {
        let keep = (1.0 - beta * beta).sqrt();
        let proposal = &a * Complex64::from(keep) + ginibre(&mut rng, dim, cols) * Complex64::from(beta);
        let p_rho = gram_state(&proposal);
        let p_log = like.log(&p_rho);
        let u: f64 = rng.gen();
        let ok = u.ln() < p_log - log_l;
        if ok {
            a = proposal;
            rho = p_rho;
            log_l = p_log;
        }
        if step < burn {
            if config.auto_tune {
                window_acc += ok as usize;
                window_n += 1;
                if window_n == TUNE_WINDOW {
                    let rate = window_acc as f64 / window_n as f64;
                    if rate < 0.2 {
                        beta *= 0.5;
                    } else if rate > 0.4 {
                        beta = (2.0 * beta).min(1.0);
                    }
                    window_acc = 0;
                    window_n = 0;
                }
            }
            continue;
        }
        accepted += ok as usize;
        if (step - burn + 1) % config.thinning == 0 {
            mean += &rho;
            kept.push(rho.clone());
        }
    }
    let sampled = total - burn;
    let acceptance_rate = if sampled > 0 { accepted as f64 / sampled as f64 } else { 0.0 };
    let rho_bme = DensityMatrix::from_approx(mean.unscale(kept.len() as f64))?;

    let fids = kept
        .iter()
        .map(|r| uhlmann_fidelity(&DensityMatrix::from_approx(r.clone())?, &rho_bme))
        .collect::<Result<Vec<_>>>()?;
    let mf = fids.iter().sum::<f64>() / fids.len() as f64;
    let fidelity_spread = (fids.iter().map(|f| (f - mf).powi(2)).sum::<f64>() / fids.len() as f64).sqrt();

    let mut warnings = Vec::new();
    if !(ACCEPTANCE_BAND.0..=ACCEPTANCE_BAND.1).contains(&acceptance_rate) {
        let msg = format!(
            "MCMC acceptance rate {acceptance_rate:.3} outside [{}, {}] (beta {beta:.3e})",
            ACCEPTANCE_BAND.0, ACCEPTANCE_BAND.1
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(BayesOutput {
        rho: rho_bme,
        acceptance_rate,
        beta,
        fidelity_spread,
        warnings,
        samples: if config.keep_samples { kept } else { Vec::new() },
    })
}

pub const RESULT_SCHEMA: &str = "orens.reconstruction/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMeta {
    pub schema: String,
    pub plan_hash: String,
    pub plan_label: String,
    pub dim: usize,
    pub seed: u64,
    pub sigma: f64,
    pub config: BayesConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelities {
    pub ls: Option<f64>,
    pub mle: f64,
    pub bme: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub rho_ls: MatrixJson,
    pub rho_mle: DensityMatrix,
    pub rho_bme: DensityMatrix,
    pub acceptance_rate: f64,
    pub final_beta: f64,
    pub fidelity_spread: f64,
    pub warnings: Vec<String>,
    pub fidelities: Option<Fidelities>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<MatrixJson>,
    pub meta: ReconstructionMeta,
}

impl ReconstructionResult {
    pub fn rho_ls(&self) -> Result<ComplexMatrix> {
        self.rho_ls.to_matrix()
    }

    /// Fills in fidelities against a known target. `ρ_LS` is scored only
    /// when it happens to be physical.
    pub fn score(&mut self, target: &DensityMatrix) -> Result<Fidelities> {
        let ls = DensityMatrix::new(self.rho_ls()?)
            .ok()
            .map(|ls| uhlmann_fidelity(&ls, target))
            .transpose()?;
        let f = Fidelities {
            ls,
            mle: uhlmann_fidelity(&self.rho_mle, target)?,
            bme: uhlmann_fidelity(&self.rho_bme, target)?,
        };
        self.fidelities = Some(f.clone());
        Ok(f)
    }
}

/// Linear inversion, physical projection and Bayesian mean from observable
/// values.
pub fn reconstruct_values(plan: &MeasurementPlan, x: &DVector<f64>, config: &BayesConfig) -> Result<ReconstructionResult> {
    let rho_ls = linear_inversion_values(plan, x)?;
    let rho_mle = mle_project(&rho_ls)?;
    let bayes = bayesian_mean_values(plan, x, &rho_mle, config)?;
    Ok(ReconstructionResult {
        rho_ls: MatrixJson::from_matrix(&rho_ls),
        rho_mle,
        rho_bme: bayes.rho,
        acceptance_rate: bayes.acceptance_rate,
        final_beta: bayes.beta,
        fidelity_spread: bayes.fidelity_spread,
        warnings: bayes.warnings,
        fidelities: None,
        samples: bayes.samples.iter().map(MatrixJson::from_matrix).collect(),
        meta: ReconstructionMeta {
            schema: RESULT_SCHEMA.to_string(),
            plan_hash: plan.hash(),
            plan_label: plan.label.clone(),
            dim: plan.dim(),
            seed: config.seed,
            sigma: config.sigma_for(plan.dim()),
            config: config.clone(),
        },
    })
}

pub fn reconstruct(plan: &MeasurementPlan, record: &OutcomeRecord, config: &BayesConfig) -> Result<ReconstructionResult> {
    reconstruct_values(plan, &record.observable_values(plan)?, config)
}

/// Bayesian mean from an outcome record, started at the MLE.
pub fn bayesian_mean(plan: &MeasurementPlan, record: &OutcomeRecord, config: &BayesConfig) -> Result<ReconstructionResult> {
    reconstruct(plan, record, config)
}

/// Frobenius distance helper for tests and benchmarks.
pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).norm()
}
