//! Closed-form error channels for excitation-number and parity mappings.
//!
//! Frequencies are angular (rad/µs), times are µs. A dephasing or
//! relaxation time of `f64::INFINITY` switches that channel off.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::consts::working_dim;
use crate::error::{OrensError, Result};
use crate::fockspace::{displaced_fock_amplitudes, DensityMatrix};
use crate::measurement::{clip_checked, expectations, MeasurementPlan, ObservableKind};

/// Dispersive shift of 1.423 MHz as an angular frequency.
pub const DEVICE_CHI: f64 = 2.0 * PI * 1.423;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Dispersive shift χ (rad/µs).
    pub chi: f64,
    /// Second-order dispersive shift χ′ (rad/µs); level `n` shifts by
    /// `χn + χ′n(n−1)`.
    pub chi2: f64,
    /// Selective π-pulse duration (µs); the drive is `Ω = π/tπ`.
    pub t_pi: f64,
    /// π/2-pulse duration (µs); zero means instantaneous.
    pub t_pi2: f64,
    /// Ramsey wait (µs).
    pub t_wait: f64,
    pub t_phi: f64,
    pub t1: f64,
    /// Initial qubit excited-state population λ.
    pub lambda_thermal: f64,
    pub p_e_given_g: f64,
    pub p_g_given_e: f64,
}

impl NoiseModel {
    /// No decoherence, no thermal population, perfect readout,
    /// instantaneous π/2 pulses and `t_w = π/χ`.
    pub fn ideal() -> Self {
        Self {
            chi: DEVICE_CHI,
            chi2: 0.0,
            t_pi: 1.0,
            t_pi2: 0.0,
            t_wait: PI / DEVICE_CHI,
            t_phi: f64::INFINITY,
            t1: f64::INFINITY,
            lambda_thermal: 0.0,
            p_e_given_g: 0.0,
            p_g_given_e: 0.0,
        }
    }

    /// Parameters of the reference device.
    pub fn device() -> Self {
        Self {
            chi: DEVICE_CHI,
            chi2: 0.0,
            t_pi: 1.0,
            t_pi2: 0.064,
            t_wait: 0.284,
            t_phi: 15.3,
            t1: 85.0,
            lambda_thermal: 0.03,
            p_e_given_g: 0.052,
            p_g_given_e: 0.018,
        }
    }

    pub fn with_t_phi(mut self, t_phi: f64) -> Self {
        self.t_phi = t_phi;
        self
    }

    /// Drops thermal population and readout error.
    pub fn without_spam(mut self) -> Self {
        self.lambda_thermal = 0.0;
        self.p_e_given_g = 0.0;
        self.p_g_given_e = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OrensError::InvalidParameter(m));
        let times = [("t_pi", self.t_pi), ("t_wait", self.t_wait), ("t_phi", self.t_phi), ("t1", self.t1)];
        for (name, t) in times {
            if !(t > 0.0) {
                return bad(format!("{name} must be positive, got {t}"));
            }
        }
        if !(self.t_pi2 >= 0.0 && self.t_pi2.is_finite()) {
            return bad(format!("t_pi2 must be finite and non-negative, got {}", self.t_pi2));
        }
        if !(self.chi.is_finite() && self.chi2.is_finite()) {
            return bad("dispersive shifts must be finite".into());
        }
        if !(0.0..=0.5).contains(&self.lambda_thermal) {
            return bad(format!("lambda_thermal must lie in [0, 0.5], got {}", self.lambda_thermal));
        }
        for (name, p) in [("p_e_given_g", self.p_e_given_g), ("p_g_given_e", self.p_g_given_e)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }

    /// Selective drive `Ω = π/tπ`.
    pub fn omega(&self) -> f64 {
        PI / self.t_pi
    }

    /// π/2 drive `π/(2 t_pi2)`; infinite for instantaneous pulses.
    pub fn omega_pi2(&self) -> f64 {
        if self.t_pi2 == 0.0 {
            f64::INFINITY
        } else {
            PI / (2.0 * self.t_pi2)
        }
    }

    /// Qubit frequency shift for `n` excitations.
    pub fn shift(&self, n: usize) -> f64 {
        let nf = n as f64;
        self.chi * nf + self.chi2 * nf * (nf - 1.0)
    }

    /// 2×2 column-stochastic readout matrix `[[p(g|g), p(g|e)], [p(e|g), p(e|e)]]`.
    pub fn readout_confusion(&self) -> [[f64; 2]; 2] {
        [
            [1.0 - self.p_e_given_g, self.p_g_given_e],
            [self.p_e_given_g, 1.0 - self.p_g_given_e],
        ]
    }

    pub fn readout_fidelity(&self) -> f64 {
        1.0 - 0.5 * (self.p_e_given_g + self.p_g_given_e)
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::device()
    }
}

pub const NOISE_SCHEMA: &str = "orens.noise/1";

/// Serialized form with ordinary-frequency and µs units in the key names.
/// Absent or null times mean the channel is off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModelFile {
    #[serde(default = "noise_schema")]
    pub schema: String,
    pub chi_mhz: Option<f64>,
    pub chi2_khz: Option<f64>,
    pub t_pi_us: Option<f64>,
    pub t_pi2_us: Option<f64>,
    /// Null or absent: `π/χ`.
    pub t_wait_us: Option<f64>,
    pub t_phi_us: Option<f64>,
    pub t1_us: Option<f64>,
    pub lambda_thermal: Option<f64>,
    pub p_e_given_g: Option<f64>,
    pub p_g_given_e: Option<f64>,
}

fn noise_schema() -> String {
    NOISE_SCHEMA.to_string()
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&NoiseModel> for NoiseModelFile {
    fn from(m: &NoiseModel) -> Self {
        Self {
            schema: noise_schema(),
            chi_mhz: Some(m.chi / (2.0 * PI)),
            chi2_khz: Some(m.chi2 / (2.0 * PI) * 1e3),
            t_pi_us: Some(m.t_pi),
            t_pi2_us: Some(m.t_pi2),
            t_wait_us: Some(m.t_wait),
            t_phi_us: finite_or_none(m.t_phi),
            t1_us: finite_or_none(m.t1),
            lambda_thermal: Some(m.lambda_thermal),
            p_e_given_g: Some(m.p_e_given_g),
            p_g_given_e: Some(m.p_g_given_e),
        }
    }
}

impl NoiseModelFile {
    /// Resolves to a model; unspecified drive and timing fields fall back
    /// to the reference device, unspecified error channels are off.
    pub fn resolve(&self) -> Result<NoiseModel> {
        let dev = NoiseModel::device();
        let chi = self.chi_mhz.map_or(dev.chi, |f| 2.0 * PI * f);
        let m = NoiseModel {
            chi,
            chi2: self.chi2_khz.map_or(0.0, |f| 2.0 * PI * f * 1e-3),
            t_pi: self.t_pi_us.unwrap_or(dev.t_pi),
            t_pi2: self.t_pi2_us.unwrap_or(0.0),
            t_wait: self.t_wait_us.unwrap_or(PI / chi),
            t_phi: self.t_phi_us.unwrap_or(f64::INFINITY),
            t1: self.t1_us.unwrap_or(f64::INFINITY),
            lambda_thermal: self.lambda_thermal.unwrap_or(0.0),
            p_e_given_g: self.p_e_given_g.unwrap_or(0.0),
            p_g_given_e: self.p_g_given_e.unwrap_or(0.0),
        };
        m.validate()?;
        Ok(m)
    }
}

impl Serialize for NoiseModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NoiseModelFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for NoiseModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        NoiseModelFile::deserialize(d)?.resolve().map_err(serde::de::Error::custom)
    }
}

/// Excited-state probability after driving `|g⟩` for time `t`:
/// `Ω²/(Ω²+Δ²) · sin²(√(Ω²+Δ²) t/2)`.
pub fn rabi_excited_prob(delta: f64, omega: f64, t: f64) -> f64 {
    let g2 = omega * omega + delta * delta;
    if g2 == 0.0 {
        return 0.0;
    }
    omega * omega / g2 * (0.5 * g2.sqrt() * t).sin().powi(2)
}

/// Response of a selective π pulse at drive detuning `delta`, summed over
/// the Fock populations.
pub fn ens_response(rho_diag: &[f64], delta: f64, model: &NoiseModel) -> Result<f64> {
    let total: f64 = rho_diag.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(OrensError::InvalidParameter(format!("populations sum to {total} > 1")));
    }
    let omega = model.omega();
    Ok(rho_diag
        .iter()
        .enumerate()
        .map(|(n, p)| p * rabi_excited_prob(delta - model.shift(n), omega, model.t_pi))
        .sum())
}

/// Resonant π-pulse weight under pure dephasing, as a function of
/// `γ = 1/(2 Tφ Ω)`.
pub fn dephasing_weight(gamma: f64) -> f64 {
    let e = (-gamma * PI).exp();
    if gamma < 1.0 - 1e-9 {
        let s = (1.0 - gamma * gamma).sqrt();
        0.5 * (1.0 - e * ((s * PI).cos() + gamma / s * (s * PI).sin()))
    } else if gamma > 1.0 + 1e-9 {
        let s = (gamma * gamma - 1.0).sqrt();
        let a = (gamma + s) / (2.0 * s) * (s * PI).exp();
        let b = (-gamma + s) / (2.0 * s) * (-s * PI).exp();
        0.5 * (1.0 - e * (a + b))
    } else {
        // critical damping limit of both branches
        0.5 * (1.0 - e * (1.0 + PI))
    }
}

pub fn dephasing_gamma(model: &NoiseModel) -> f64 {
    1.0 / (2.0 * model.t_phi * model.omega())
}

/// Excitation-number mapping under dephasing: `ρ_nn · w(γ)`.
pub fn pn_dephased(rho_nn: f64, model: &NoiseModel) -> f64 {
    rho_nn * dephasing_weight(dephasing_gamma(model))
}

/// Small-dephasing approximation `ρ_nn (1 + e^{−tπ/(2Tφ)})/2`.
pub fn pn_dephased_approx(rho_nn: f64, model: &NoiseModel) -> f64 {
    rho_nn * 0.5 * (1.0 + (-model.t_pi / (2.0 * model.t_phi)).exp())
}

/// Parity under dephasing during the wait: `P · e^{−t_w/Tφ}`.
pub fn parity_dephased(p_ideal: f64, model: &NoiseModel) -> f64 {
    p_ideal * parity_dephasing_factor(model)
}

pub fn parity_dephasing_factor(model: &NoiseModel) -> f64 {
    (-model.t_wait / model.t_phi).exp()
}

/// Ramsey parity coefficients for `ξ = χn/Ω`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityCoefficients {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub xi: f64,
}

pub fn parity_coefficients(xi: f64) -> ParityCoefficients {
    let q = 1.0 + xi * xi;
    let arg = 0.5 * PI * q.sqrt();
    let (s, c) = arg.sin_cos();
    ParityCoefficients {
        f1: (s * s + 2.0 * xi * xi * c * (1.0 - c)) / (q * q),
        f2: 2.0 * xi / q.powf(1.5) * s * (1.0 - c),
        f3: (xi * xi + c).powi(2) / (q * q),
        xi,
    }
}

/// `ξ` for Fock level `n`; zero for instantaneous π/2 pulses.
pub fn parity_xi(n: usize, model: &NoiseModel) -> f64 {
    if model.t_pi2 == 0.0 {
        0.0
    } else {
        model.shift(n) / model.omega_pi2()
    }
}

/// Ramsey parity `−⟨σ_z⟩` of Fock `|n⟩` with the dispersive shift active
/// during the π/2 pulses. `reversed` flips the phase of the second pulse.
pub fn parity_fock(n: usize, model: &NoiseModel, reversed: bool) -> f64 {
    let f = parity_coefficients(parity_xi(n, model));
    let phase = model.shift(n) * model.t_wait;
    let signal = f.f1 * phase.cos() - f.f2 * phase.sin();
    if reversed {
        -signal - f.f3
    } else {
        signal - f.f3
    }
}

/// `(P′ − P′_rev)/2`: the offset-free part of the parity of `|n⟩`.
pub fn parity_fock_corrected(n: usize, model: &NoiseModel) -> f64 {
    0.5 * (parity_fock(n, model, false) - parity_fock(n, model, true))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Excitation,
    Parity,
}

/// Thermal qubit population: `v(1−2λ)+λ` for excitation probabilities,
/// `v(1−2λ)` for parity values.
pub fn thermal_distort(value: f64, channel: Channel, lambda: f64) -> f64 {
    match channel {
        Channel::Excitation => value * (1.0 - 2.0 * lambda) + lambda,
        Channel::Parity => value * (1.0 - 2.0 * lambda),
    }
}

pub fn thermal_correct(value: f64, channel: Channel, lambda: f64) -> Result<f64> {
    let scale = 1.0 - 2.0 * lambda;
    if scale.abs() < 1e-12 {
        return Err(OrensError::NonInvertible(format!("thermal population λ = {lambda}")));
    }
    Ok(match channel {
        Channel::Excitation => (value - lambda) / scale,
        Channel::Parity => value / scale,
    })
}

/// `p_e (1 − p(g|e)) + (1 − p_e) p(e|g)`.
pub fn readout_distort(p_e: f64, p_e_given_g: f64, p_g_given_e: f64) -> f64 {
    p_e * (1.0 - p_g_given_e) + (1.0 - p_e) * p_e_given_g
}

pub fn readout_correct(p: f64, p_e_given_g: f64, p_g_given_e: f64) -> Result<f64> {
    let scale = 1.0 - p_e_given_g - p_g_given_e;
    if scale.abs() < 1e-12 {
        return Err(OrensError::NonInvertible("readout confusion matrix is singular".into()));
    }
    Ok((p - p_e_given_g) / scale)
}

/// Populations of `D(α)† ρ D(α)` over `levels` Fock states.
pub fn displaced_populations(rho: &DensityMatrix, alpha: Complex64, levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|m| {
            let d = displaced_fock_amplitudes(alpha, m, rho.dim());
            (d.adjoint() * rho.matrix() * &d)[(0, 0)].re
        })
        .collect()
}

/// Measured excited-state probabilities per setting. Corrected parity
/// carries the reversed mapping as well, doubling the measurement count.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyProbabilities {
    pub normal: DVector<f64>,
    pub reversed: Option<DVector<f64>>,
    pub measurement_count: usize,
}

fn finish_excitation(p: f64, model: &NoiseModel) -> Result<f64> {
    let p = thermal_distort(p, Channel::Excitation, model.lambda_thermal);
    clip_checked(readout_distort(p, model.p_e_given_g, model.p_g_given_e), 0.0, 1.0)
}

fn finish_parity(parity: f64, model: &NoiseModel) -> Result<f64> {
    let parity = thermal_distort(parity * parity_dephasing_factor(model), Channel::Parity, model.lambda_thermal);
    finish_excitation_raw(0.5 * (1.0 + parity), model)
}

fn finish_excitation_raw(p_e: f64, model: &NoiseModel) -> Result<f64> {
    clip_checked(readout_distort(p_e, model.p_e_given_g, model.p_g_given_e), 0.0, 1.0)
}

/// Simulated measurement probabilities under the closed-form channels:
/// ideal observable, coherent parity error per displaced Fock population,
/// dephasing, thermal population, then readout.
pub fn noisy_probabilities(rho: &DensityMatrix, plan: &MeasurementPlan, model: &NoiseModel) -> Result<NoisyProbabilities> {
    model.validate()?;
    if rho.dim() != plan.dim() {
        return Err(OrensError::DimensionMismatch {
            expected: plan.dim(),
            got: rho.dim(),
        });
    }
    let kind = plan.kind();
    let n_set = plan.len();
    match kind {
        ObservableKind::Fock(_) => {
            let w = dephasing_weight(dephasing_gamma(model));
            let ideal = expectations(rho, plan)?;
            let normal = ideal
                .iter()
                .map(|&q| finish_excitation(clip_checked(q, 0.0, 1.0)? * w, model))
                .collect::<Result<Vec<_>>>()?;
            Ok(NoisyProbabilities {
                normal: DVector::from_vec(normal),
                reversed: None,
                measurement_count: n_set,
            })
        }
        ObservableKind::Parity | ObservableKind::CorrectedParity => {
            let both = kind == ObservableKind::CorrectedParity;
            let mut normal = DVector::zeros(n_set);
            let mut reversed = DVector::zeros(n_set);
            for (k, &alpha) in plan.alphas().iter().enumerate() {
                let levels = working_dim(plan.dim(), alpha.norm());
                let pops = displaced_populations(rho, alpha, levels);
                let mut pn = 0.0;
                let mut pr = 0.0;
                for (m, p) in pops.iter().enumerate() {
                    pn += p * parity_fock(m, model, false);
                    if both {
                        pr += p * parity_fock(m, model, true);
                    }
                }
                normal[k] = finish_parity(clip_checked(pn, -1.0, 1.0)?, model)?;
                if both {
                    reversed[k] = finish_parity(clip_checked(pr, -1.0, 1.0)?, model)?;
                }
            }
            Ok(NoisyProbabilities {
                normal,
                reversed: both.then_some(reversed),
                measurement_count: plan.measurement_count(),
            })
        }
    }
}

/// Undoes the known affine channels (readout, thermal population and the
/// state-independent dephasing scale) and returns observable estimates
/// `x_k ≈ Tr(ρE_k)`. Coherent parity errors are state dependent and stay.
pub fn correct_observables(
    plan: &MeasurementPlan,
    normal: &DVector<f64>,
    reversed: Option<&DVector<f64>>,
    model: &NoiseModel,
) -> Result<DVector<f64>> {
    model.validate()?;
    let ro = |p: f64| readout_correct(p, model.p_e_given_g, model.p_g_given_e);
    let lam = model.lambda_thermal;
    let mut out = DVector::zeros(normal.len());
    match plan.kind() {
        ObservableKind::Fock(_) => {
            let w = dephasing_weight(dephasing_gamma(model));
            for (k, &p) in normal.iter().enumerate() {
                out[k] = thermal_correct(ro(p)?, Channel::Excitation, lam)? / w;
            }
        }
        kind => {
            let scale = parity_dephasing_factor(model);
            if scale < 1e-12 {
                return Err(OrensError::NonInvertible("parity contrast fully dephased".into()));
            }
            for (k, &p) in normal.iter().enumerate() {
                let mut parity = 2.0 * ro(p)? - 1.0;
                if kind == ObservableKind::CorrectedParity {
                    if let Some(rev) = reversed {
                        parity = 0.5 * (parity - (2.0 * ro(rev[k])? - 1.0));
                    }
                }
                out[k] = thermal_correct(parity, Channel::Parity, lam)? / scale;
            }
        }
    }
    Ok(out)
}
