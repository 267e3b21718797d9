//! Qubit ⊗ cavity master-equation simulator for the selective π pulse and
//! the Ramsey parity sequence.
//!
//! The Hamiltonian and both jump operators act on the qubit only, with a
//! qubit frequency that depends on the cavity photon number. The joint
//! density matrix therefore evolves as independent 2×2 blocks
//! `ρ_nm = ⟨n|ρ|m⟩`, and the block for `(n, m)` sees `H_n` on the left and
//! `H_m` on the right. Mappings that only read the qubit population need the
//! diagonal blocks alone.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OrensError, Result};
use crate::fockspace::DensityMatrix;
use crate::linalg::{hermitian_eigenvalues, hermiticity_error, trace, ZERO};
use crate::noise::{readout_distort, NoiseModel};
use crate::ComplexMatrix;

type M2 = Matrix2<Complex64>;

/// Extra Fock levels carried by the simulator beyond the state dimension.
pub const SIM_PAD: usize = 4;

/// Largest allowed change of the state when the step is halved.
pub const HALVING_TOL: f64 = 1e-6;

/// Qubit ⊗ cavity density matrix, index `q·D_sim + n`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    d_sim: usize,
    rho: ComplexMatrix,
}

impl JointState {
    /// `ρ_q ⊗ ρ_cav`, with the cavity zero-padded to `d_sim` levels.
    pub fn product(qubit: &M2, cavity: &DensityMatrix, d_sim: usize) -> Result<Self> {
        let d = cavity.dim();
        if d_sim < d {
            return Err(OrensError::DimensionMismatch { expected: d, got: d_sim });
        }
        let mut rho = ComplexMatrix::zeros(2 * d_sim, 2 * d_sim);
        for q in 0..2 {
            for p in 0..2 {
                for n in 0..d {
                    for m in 0..d {
                        rho[(q * d_sim + n, p * d_sim + m)] = qubit[(q, p)] * cavity.matrix()[(n, m)];
                    }
                }
            }
        }
        Ok(Self { d_sim, rho })
    }

    /// Qubit thermal with excited population `lambda`.
    pub fn thermal(cavity: &DensityMatrix, d_sim: usize, lambda: f64) -> Result<Self> {
        Self::product(&thermal_qubit(lambda), cavity, d_sim)
    }

    pub fn from_matrix(rho: ComplexMatrix) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() % 2 != 0 || rho.nrows() == 0 {
            return Err(OrensError::InvalidState(format!(
                "joint state must be square with even size, got {}x{}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        Ok(Self {
            d_sim: rho.nrows() / 2,
            rho,
        })
    }

    pub fn d_sim(&self) -> usize {
        self.d_sim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        trace(&self.rho).re
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// `Tr((|e⟩⟨e| ⊗ 𝟙) ρ)`.
    pub fn excited_prob(&self) -> f64 {
        (0..self.d_sim).map(|n| self.rho[(self.d_sim + n, self.d_sim + n)].re).sum()
    }

    pub fn qubit_state(&self) -> M2 {
        let d = self.d_sim;
        M2::from_fn(|q, p| (0..d).map(|n| self.rho[(q * d + n, p * d + n)]).sum())
    }

    pub fn cavity_state(&self) -> ComplexMatrix {
        let d = self.d_sim;
        ComplexMatrix::from_fn(d, d, |n, m| self.rho[(n, m)] + self.rho[(d + n, d + m)])
    }

    /// Checks Hermiticity, unit trace and positivity within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = hermiticity_error(&self.rho);
        let tr = self.trace();
        let min_eig = hermitian_eigenvalues(&self.rho).min();
        if herm > tol || (tr - 1.0).abs() > tol || min_eig < -tol {
            return Err(OrensError::InvalidState(format!(
                "joint state off: hermiticity {herm:.2e}, trace {tr}, min eigenvalue {min_eig:.2e}"
            )));
        }
        Ok(())
    }

    fn block(&self, n: usize, m: usize) -> M2 {
        let d = self.d_sim;
        M2::from_fn(|q, p| self.rho[(q * d + n, p * d + m)])
    }

    fn set_block(&mut self, n: usize, m: usize, b: &M2) {
        let d = self.d_sim;
        for q in 0..2 {
            for p in 0..2 {
                self.rho[(q * d + n, p * d + m)] = b[(q, p)];
            }
        }
    }
}

fn thermal_qubit(lambda: f64) -> M2 {
    M2::new(Complex64::from(1.0 - lambda), ZERO, ZERO, Complex64::from(lambda))
}

/// Time profile of the qubit drive over one segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Drive {
    Off,
    /// Constant Rabi frequency (rad/µs).
    Square { omega: f64 },
    /// Gaussian with `σ = duration/4`, centred and cut at `±2σ`, scaled so
    /// that `∫Ω dt = area`.
    Gaussian { area: f64 },
}

/// Pulse envelope of the selective π pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Square,
    Gaussian,
}

impl std::str::FromStr for Envelope {
    type Err = OrensError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Self::Square),
            "gaussian" => Ok(Self::Gaussian),
            _ => Err(OrensError::Parse(format!("unknown envelope {s:?} (square | gaussian)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    /// µs.
    pub duration: f64,
    pub drive: Drive,
    /// Drive detuning Δ (rad/µs) entering as `Δ|e⟩⟨e|`.
    pub detuning: f64,
    /// Drive axis `cos φ σ_y + sin φ σ_x`; `π` reverses a π/2 pulse.
    pub phase: f64,
    /// Include `−χn|e⟩⟨e|`.
    pub dispersive: bool,
    /// Include `−χ′n(n−1)|e⟩⟨e|`.
    pub second_order: bool,
}

impl PulseSegment {
    /// Selective π pulse of length `tπ` at detuning `delta`.
    pub fn selective_pi(model: &NoiseModel, delta: f64, envelope: Envelope) -> Self {
        let drive = match envelope {
            Envelope::Square => Drive::Square { omega: model.omega() },
            Envelope::Gaussian => Drive::Gaussian { area: PI },
        };
        Self {
            duration: model.t_pi,
            drive,
            detuning: delta,
            phase: 0.0,
            dispersive: true,
            second_order: true,
        }
    }

    /// Square π/2 pulse of length `t_pi2`, dispersive coupling on.
    pub fn half_pi(model: &NoiseModel, reversed: bool) -> Self {
        Self {
            duration: model.t_pi2,
            drive: Drive::Square { omega: model.omega_pi2() },
            detuning: 0.0,
            phase: if reversed { PI } else { 0.0 },
            dispersive: true,
            second_order: true,
        }
    }

    pub fn wait(duration: f64) -> Self {
        Self {
            duration,
            drive: Drive::Off,
            detuning: 0.0,
            phase: 0.0,
            dispersive: true,
            second_order: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(OrensError::InvalidParameter(format!(
                "segment duration must be positive, got {}",
                self.duration
            )));
        }
        let ok = match self.drive {
            Drive::Off => true,
            Drive::Square { omega } => omega.is_finite(),
            Drive::Gaussian { area } => area.is_finite(),
        };
        if !ok || !self.detuning.is_finite() || !self.phase.is_finite() {
            return Err(OrensError::InvalidParameter("segment parameters must be finite".into()));
        }
        Ok(())
    }

    /// Rabi frequency at time `t` into the segment.
    pub fn omega_at(&self, t: f64) -> f64 {
        match self.drive {
            Drive::Off => 0.0,
            Drive::Square { omega } => omega,
            Drive::Gaussian { area } => {
                let sigma = self.duration / 4.0;
                let norm = (2.0 * PI).sqrt() * sigma * libm::erf(std::f64::consts::SQRT_2);
                let x = (t - 0.5 * self.duration) / sigma;
                area / norm * (-0.5 * x * x).exp()
            }
        }
    }

    fn peak_omega(&self) -> f64 {
        self.omega_at(0.5 * self.duration).abs()
    }

    /// Qubit detuning for cavity level `n`.
    fn level_detuning(&self, n: usize, model: &NoiseModel) -> f64 {
        let nf = n as f64;
        let mut d = self.detuning;
        if self.dispersive {
            d -= model.chi * nf;
        }
        if self.second_order {
            d -= model.chi2 * nf * (nf - 1.0);
        }
        d
    }

    fn drive_at(&self, t: f64) -> M2 {
        // (Ω/2)(cos φ σ_y + sin φ σ_x)
        let h = 0.5 * self.omega_at(t);
        let (s, c) = self.phase.sin_cos();
        let off = Complex64::new(h * s, -h * c);
        M2::new(ZERO, off, off.conj(), ZERO)
    }
}

/// Default RK4 step: `min(tπ/2000, 1/(50 Ω_peak), 1/(50 max|Δ_n|), Tφ/200, T1/200)`.
pub fn default_dt(segment: &PulseSegment, model: &NoiseModel, d_sim: usize) -> f64 {
    let max_det = (0..d_sim)
        .map(|n| segment.level_detuning(n, model).abs())
        .fold(0.0, f64::max);
    let mut dt = model.t_pi / 2000.0;
    for rate in [segment.peak_omega(), max_det] {
        if rate > 0.0 {
            dt = dt.min(1.0 / (50.0 * rate));
        }
    }
    dt.min(model.t_phi / 200.0).min(model.t1 / 200.0)
}

/// Qubit-only dissipator data: the jump operators and `Σ J†J`.
struct Dissipator {
    jumps: Vec<M2>,
    jj: M2,
}

impl Dissipator {
    fn new(model: &NoiseModel) -> Self {
        let mut jumps = Vec::new();
        if model.t_phi.is_finite() {
            jumps.push(M2::new(ZERO, ZERO, ZERO, Complex64::from((2.0 / model.t_phi).sqrt())));
        }
        if model.t1.is_finite() {
            jumps.push(M2::new(ZERO, Complex64::from((1.0 / model.t1).sqrt()), ZERO, ZERO));
        }
        let jj = jumps.iter().map(|j| j.adjoint() * j).sum();
        Self { jumps, jj }
    }

    fn apply(&self, b: &M2) -> M2 {
        let mut out = -(self.jj * b + b * self.jj) * Complex64::from(0.5);
        for j in &self.jumps {
            out += j * b * j.adjoint();
        }
        out
    }
}

/// Evolves the blocks listed in `pairs` through one segment with `steps`
/// RK4 steps.
fn rk4_blocks(
    pairs: &[(usize, usize)],
    blocks: &[M2],
    segment: &PulseSegment,
    model: &NoiseModel,
    diss: &Dissipator,
    steps: usize,
) -> Vec<M2> {
    let dt = segment.duration / steps as f64;
    let levels = pairs.iter().map(|&(n, m)| n.max(m)).max().map_or(0, |l| l + 1);
    let det: Vec<f64> = (0..levels).map(|n| segment.level_detuning(n, model)).collect();
    let minus_i = Complex64::new(0.0, -1.0);
    let rhs = |drive: &M2, state: &[M2], out: &mut Vec<M2>| {
        out.clear();
        for (&(n, m), b) in pairs.iter().zip(state) {
            let mut h_n = *drive;
            h_n[(1, 1)] += det[n];
            let mut h_m = *drive;
            h_m[(1, 1)] += det[m];
            out.push((h_n * b - b * h_m) * minus_i + diss.apply(b));
        }
    };
    let mut y = blocks.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut tmp = vec![M2::zeros(); y.len()];
    let half = Complex64::from(0.5 * dt);
    let full = Complex64::from(dt);
    let sixth = Complex64::from(dt / 6.0);
    let two = Complex64::from(2.0);
    for s in 0..steps {
        let t = s as f64 * dt;
        let d0 = segment.drive_at(t);
        let dh = segment.drive_at(t + 0.5 * dt);
        let d1 = segment.drive_at(t + dt);
        rhs(&d0, &y, &mut k1);
        for i in 0..y.len() {
            tmp[i] = y[i] + k1[i] * half;
        }
        rhs(&dh, &tmp, &mut k2);
        for i in 0..y.len() {
            tmp[i] = y[i] + k2[i] * half;
        }
        rhs(&dh, &tmp, &mut k3);
        for i in 0..y.len() {
            tmp[i] = y[i] + k3[i] * full;
        }
        rhs(&d1, &tmp, &mut k4);
        for i in 0..y.len() {
            y[i] += (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * sixth;
        }
    }
    y
}

/// Runs the segment at step `dt` and again at `dt/2`; returns the finer
/// result, or an accuracy error if the two differ by more than
/// [`HALVING_TOL`] in any entry.
fn evolve_blocks(
    pairs: &[(usize, usize)],
    blocks: &[M2],
    segment: &PulseSegment,
    model: &NoiseModel,
    dt: f64,
) -> Result<Vec<M2>> {
    segment.validate()?;
    if !(dt > 0.0) || dt > segment.duration * (1.0 + 1e-12) {
        return Err(OrensError::InvalidParameter(format!(
            "step {dt} must be positive and at most the segment duration {}",
            segment.duration
        )));
    }
    let diss = Dissipator::new(model);
    let steps = (segment.duration / dt).ceil().max(1.0) as usize;
    let coarse = rk4_blocks(pairs, blocks, segment, model, &diss, steps);
    let fine = rk4_blocks(pairs, blocks, segment, model, &diss, 2 * steps);
    let diff = coarse
        .iter()
        .zip(&fine)
        .flat_map(|(a, b)| (a - b).iter().map(|z| z.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    if diff > HALVING_TOL {
        return Err(OrensError::Accuracy { diff });
    }
    Ok(fine)
}

/// Integrates `ρ̇ = −i[H, ρ] + Σ_j (J ρ J† − ½{J†J, ρ})` over one segment
/// with fixed-step RK4 and a step-halving check.
pub fn lindblad_evolve(state: &JointState, segment: &PulseSegment, model: &NoiseModel, dt: f64) -> Result<JointState> {
    model.validate()?;
    let d = state.d_sim;
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|n| (0..d).map(move |m| (n, m))).collect();
    let blocks: Vec<M2> = pairs.iter().map(|&(n, m)| state.block(n, m)).collect();
    let out = evolve_blocks(&pairs, &blocks, segment, model, dt)?;
    let mut next = state.clone();
    for (&(n, m), b) in pairs.iter().zip(&out) {
        next.set_block(n, m, b);
    }
    Ok(next)
}

/// Diagonal blocks `p_n ρ_q`, one per simulated level.
fn diagonal_blocks(pops: &[f64], d_sim: usize, lambda: f64) -> (Vec<(usize, usize)>, Vec<M2>) {
    let q = thermal_qubit(lambda);
    let pairs = (0..d_sim).map(|n| (n, n)).collect();
    let blocks = (0..d_sim)
        .map(|n| q * Complex64::from(pops.get(n).copied().unwrap_or(0.0)))
        .collect();
    (pairs, blocks)
}

fn excited(blocks: &[M2]) -> f64 {
    blocks.iter().map(|b| b[(1, 1)].re).sum()
}

fn run_segment(pairs: &[(usize, usize)], blocks: &[M2], seg: &PulseSegment, model: &NoiseModel, d_sim: usize) -> Result<Vec<M2>> {
    evolve_blocks(pairs, blocks, seg, model, default_dt(seg, model, d_sim))
}

fn check_populations(pops: &[f64]) -> Result<()> {
    let total: f64 = pops.iter().sum();
    if pops.is_empty() || pops.iter().any(|p| !(p.is_finite() && *p >= -1e-12)) || total > 1.0 + 1e-9 {
        return Err(OrensError::InvalidParameter(format!(
            "Fock populations must be non-negative and sum to at most 1 (sum {total})"
        )));
    }
    Ok(())
}

/// Excited-state probability after a selective π pulse at detuning `delta`
/// for a cavity with Fock populations `pops`, starting from the thermal
/// qubit and followed by readout error. Only the populations matter: the
/// coherences sit in off-diagonal blocks that never reach `p_e`.
pub fn selective_pulse_populations(pops: &[f64], delta: f64, model: &NoiseModel, envelope: Envelope) -> Result<f64> {
    model.validate()?;
    check_populations(pops)?;
    let d_sim = pops.len() + SIM_PAD;
    let (pairs, blocks) = diagonal_blocks(pops, d_sim, model.lambda_thermal);
    let seg = PulseSegment::selective_pi(model, delta, envelope);
    let out = run_segment(&pairs, &blocks, &seg, model, d_sim)?;
    Ok(readout_distort(excited(&out), model.p_e_given_g, model.p_g_given_e))
}

pub fn simulate_selective_pulse(rho_cav: &DensityMatrix, delta: f64, model: &NoiseModel, envelope: Envelope) -> Result<f64> {
    selective_pulse_populations(&rho_cav.populations(), delta, model, envelope)
}

/// Excitation-number mapping: selective π pulse resonant with `n_target`.
pub fn simulate_excitation_mapping(
    rho_cav: &DensityMatrix,
    n_target: usize,
    model: &NoiseModel,
    envelope: Envelope,
) -> Result<f64> {
    excitation_mapping_populations(&rho_cav.populations(), n_target, model, envelope)
}

pub fn excitation_mapping_populations(pops: &[f64], n_target: usize, model: &NoiseModel, envelope: Envelope) -> Result<f64> {
    let d_sim = pops.len() + SIM_PAD;
    if n_target >= d_sim {
        return Err(OrensError::IndexOutOfRange { index: n_target, dim: d_sim });
    }
    selective_pulse_populations(pops, model.shift(n_target), model, envelope)
}

/// Ramsey parity mapping `π/2 – wait – ±π/2` with the dispersive coupling
/// on throughout. Instantaneous pulses are used when `t_pi2 = 0`.
pub fn simulate_parity_mapping(rho_cav: &DensityMatrix, model: &NoiseModel, reversed: bool) -> Result<f64> {
    parity_mapping_populations(&rho_cav.populations(), model, reversed)
}

pub fn parity_mapping_populations(pops: &[f64], model: &NoiseModel, reversed: bool) -> Result<f64> {
    model.validate()?;
    check_populations(pops)?;
    let d_sim = pops.len() + SIM_PAD;
    let (pairs, mut blocks) = diagonal_blocks(pops, d_sim, model.lambda_thermal);
    let half_pi = |blocks: Vec<M2>, rev: bool| -> Result<Vec<M2>> {
        if model.t_pi2 == 0.0 {
            let u = ry_half_pi(rev);
            Ok(blocks.iter().map(|b| u * b * u.adjoint()).collect())
        } else {
            run_segment(&pairs, &blocks, &PulseSegment::half_pi(model, rev), model, d_sim)
        }
    };
    blocks = half_pi(blocks, false)?;
    blocks = run_segment(&pairs, &blocks, &PulseSegment::wait(model.t_wait), model, d_sim)?;
    blocks = half_pi(blocks, reversed)?;
    Ok(readout_distort(excited(&blocks), model.p_e_given_g, model.p_g_given_e))
}

/// `exp(∓i π/4 σ_y)`.
fn ry_half_pi(reversed: bool) -> M2 {
    let c = Complex64::from(std::f64::consts::FRAC_1_SQRT_2);
    let s = if reversed { -c } else { c };
    M2::new(c, -s, s, c)
}

/// Parity observable `2p_e − 1` from the simulated Ramsey sequence.
pub fn simulated_parity(rho_cav: &DensityMatrix, model: &NoiseModel, reversed: bool) -> Result<f64> {
    Ok(2.0 * simulate_parity_mapping(rho_cav, model, reversed)? - 1.0)
}

/// Corrected parity `(P − P_rev)/2` from the simulated sequences.
pub fn simulated_corrected_parity(rho_cav: &DensityMatrix, model: &NoiseModel) -> Result<f64> {
    Ok(0.5 * (simulated_parity(rho_cav, model, false)? - simulated_parity(rho_cav, model, true)?))
}

/// One row of a parameter sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sweep_var: f64,
    pub p_e: f64,
    pub observable_kind: String,
}

pub fn write_sweep_csv<W: Write>(writer: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Vacuum response of both mappings over a list of `Tφ` values:
/// excitation `p_e` for `n = 0` and the simulated corrected parity.
pub fn dephasing_sweep(model: &NoiseModel, t_phis: &[f64], envelope: Envelope) -> Result<Vec<SweepPoint>> {
    let vacuum = crate::fockspace::make_state(&crate::fockspace::StateSpec::Fock { k: 0 }, 1)?;
    let mut out = Vec::with_capacity(2 * t_phis.len());
    for &t in t_phis {
        let m = model.with_t_phi(t);
        out.push(SweepPoint {
            sweep_var: t,
            p_e: simulate_excitation_mapping(&vacuum, 0, &m, envelope)?,
            observable_kind: "fock:0".into(),
        });
        out.push(SweepPoint {
            sweep_var: t,
            p_e: 0.5 * (1.0 + simulated_corrected_parity(&vacuum, &m)?),
            observable_kind: "corrected_parity".into(),
        });
    }
    Ok(out)
}
