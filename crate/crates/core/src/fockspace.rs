//! Truncated Fock-space operators, benchmark states and phase-space
//! quasi-probabilities.
//!
//! Displacements follow the unitary convention `D(α) = exp(α c† − α* c)`.
//! Matrix elements come from the closed-form associated-Laguerre expression,
//! so every element is exact regardless of how many levels are kept.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::consts::{DEFAULT_LEAKAGE_TOL, MAX_DIM, STATE_TOL};
use crate::error::{OrensError, Result};
use crate::linalg::{self, ONE, ZERO};
use crate::ComplexMatrix;

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(OrensError::InvalidDimension(dim));
    }
    Ok(())
}

const LN_FACT_TABLE: usize = 4096;

/// `ln(n!)`, tabulated.
pub fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..LN_FACT_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    if n < LN_FACT_TABLE {
        table[n]
    } else {
        let x = n as f64 + 1.0;
        // Stirling series for ln Γ(x)
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
    }
}

/// Generalized Laguerre polynomial `L_k^{(a)}(x)` by upward recurrence.
pub fn laguerre(k: usize, a: usize, x: f64) -> f64 {
    let a = a as f64;
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + a - x) * cur - (jf + a) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `⟨m|D(α)|n⟩` of the untruncated displacement operator.
pub fn displacement_element(m: usize, n: usize, alpha: Complex64) -> Complex64 {
    let r = alpha.norm();
    if r == 0.0 {
        return if m == n { ONE } else { ZERO };
    }
    let x = r * r;
    let (k, a, unit) = if m >= n {
        (n, m - n, alpha / r)
    } else {
        (m, n - m, -alpha.conj() / r)
    };
    let log_mag = 0.5 * (ln_factorial(k) - ln_factorial(k + a)) + a as f64 * r.ln() - 0.5 * x;
    let value = log_mag.exp() * laguerre(k, a, x);
    unit.powu(a as u32) * value
}

/// First `rows` amplitudes of `D(α)|n⟩` in the Fock basis.
pub fn displaced_fock_amplitudes(alpha: Complex64, n: usize, rows: usize) -> DVector<Complex64> {
    DVector::from_fn(rows, |i, _| displacement_element(i, n, alpha))
}

/// Lowering operator `c` truncated to `dim` levels.
pub fn annihilation_op(dim: usize) -> Result<ComplexMatrix> {
    check_dim(dim)?;
    let mut c = ComplexMatrix::zeros(dim, dim);
    for n in 1..dim {
        c[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    Ok(c)
}

pub fn creation_op(dim: usize) -> Result<ComplexMatrix> {
    Ok(annihilation_op(dim)?.adjoint())
}

/// `c†c = diag(0, 1, …, dim−1)`.
pub fn number_op(dim: usize) -> Result<ComplexMatrix> {
    check_dim(dim)?;
    Ok(ComplexMatrix::from_diagonal(&DVector::from_fn(dim, |n, _| {
        Complex64::new(n as f64, 0.0)
    })))
}

/// Top-left `dim × dim` block of the displacement operator.
pub fn displacement_op(alpha: Complex64, dim: usize) -> Result<ComplexMatrix> {
    check_dim(dim)?;
    Ok(DMatrix::from_fn(dim, dim, |m, n| displacement_element(m, n, alpha)))
}

/// Rank-one projector `|n⟩⟨n|`.
pub fn fock_projector(n: usize, dim: usize) -> Result<ComplexMatrix> {
    check_dim(dim)?;
    if n >= dim {
        return Err(OrensError::IndexOutOfRange { index: n, dim });
    }
    let mut e = ComplexMatrix::zeros(dim, dim);
    e[(n, n)] = ONE;
    Ok(e)
}

/// Photon-number parity `exp(iπ n̂)`.
pub fn parity_op(dim: usize) -> Result<ComplexMatrix> {
    check_dim(dim)?;
    Ok(ComplexMatrix::from_diagonal(&DVector::from_fn(dim, |n, _| {
        Complex64::new(parity_sign(n), 0.0)
    })))
}

#[inline]
pub fn parity_sign(n: usize) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Truncated cavity state: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates the three state invariants at [`STATE_TOL`].
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, STATE_TOL)
    }

    pub fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(OrensError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        check_dim(matrix.nrows())?;
        let herm = linalg::hermiticity_error(&matrix);
        if herm > tol {
            return Err(OrensError::InvalidState(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = linalg::trace(&matrix);
        if (tr - ONE).norm() > tol {
            return Err(OrensError::InvalidState(format!(
                "trace {:.12} differs from 1",
                tr.re
            )));
        }
        let min_eig = linalg::hermitian_eigenvalues(&matrix)[0];
        if min_eig < -tol {
            return Err(OrensError::InvalidState(format!(
                "negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Projects an approximately physical matrix onto exact Hermiticity and
    /// unit trace, then validates.
    pub fn from_approx(matrix: ComplexMatrix) -> Result<Self> {
        let h = linalg::hermitize(&matrix);
        let tr = linalg::trace(&h).re;
        Self::new(h.unscale(tr))
    }

    /// `|ψ⟩⟨ψ|` for a normalized vector.
    pub fn from_pure(psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(OrensError::InvalidState("zero state vector".into()));
        }
        let psi = psi.unscale(norm);
        Self::new(linalg::hermitize(&(&psi * psi.adjoint())))
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Self::new(ComplexMatrix::identity(dim, dim).unscale(dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        linalg::trace(&(&self.matrix * &self.matrix)).re
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_matrix(&self.matrix)
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = MatrixJson::deserialize(d)?;
        let m = json.to_matrix().map_err(serde::de::Error::custom)?;
        DensityMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

pub const MATRIX_SCHEMA: &str = "orens.matrix/1";

/// Row-major JSON form `{"dim": D, "re": [[…]], "im": [[…]]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    #[serde(default = "matrix_schema")]
    pub schema: String,
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

fn matrix_schema() -> String {
    MATRIX_SCHEMA.to_string()
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let dim = m.nrows();
        let re = (0..dim).map(|i| (0..dim).map(|j| m[(i, j)].re).collect()).collect();
        let im = (0..dim).map(|i| (0..dim).map(|j| m[(i, j)].im).collect()).collect();
        Self {
            schema: matrix_schema(),
            dim,
            re,
            im,
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let dim = self.dim;
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == dim && rows.iter().all(|r| r.len() == dim);
        if !rows_ok(&self.re) || !rows_ok(&self.im) {
            return Err(OrensError::Parse(format!(
                "matrix JSON does not have {dim}x{dim} re/im blocks"
            )));
        }
        Ok(DMatrix::from_fn(dim, dim, |i, j| {
            Complex64::new(self.re[i][j], self.im[i][j])
        }))
    }
}

/// Relative phase of the `|−β⟩` branch of a cat state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CatPhase {
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl CatPhase {
    pub const ALL: [CatPhase; 4] = [CatPhase::Plus, CatPhase::Minus, CatPhase::PlusI, CatPhase::MinusI];

    pub fn value(self) -> Complex64 {
        match self {
            CatPhase::Plus => Complex64::new(1.0, 0.0),
            CatPhase::Minus => Complex64::new(-1.0, 0.0),
            CatPhase::PlusI => Complex64::new(0.0, 1.0),
            CatPhase::MinusI => Complex64::new(0.0, -1.0),
        }
    }

    fn token(self) -> &'static str {
        match self {
            CatPhase::Plus => "+1",
            CatPhase::Minus => "-1",
            CatPhase::PlusI => "+i",
            CatPhase::MinusI => "-i",
        }
    }
}

impl FromStr for CatPhase {
    type Err = OrensError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+1" | "1" | "+" | "even" => Ok(CatPhase::Plus),
            "-1" | "-" | "odd" => Ok(CatPhase::Minus),
            "+i" | "i" => Ok(CatPhase::PlusI),
            "-i" => Ok(CatPhase::MinusI),
            other => Err(OrensError::Parse(format!("unknown cat phase '{other}'"))),
        }
    }
}

/// Descriptor of a pure benchmark state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateSpec {
    Fock { k: usize },
    /// `(|j⟩ + e^{iφ}|k⟩)/√2`
    Superposition { j: usize, k: usize, phi: f64 },
    Coherent { beta_re: f64, beta_im: f64 },
    /// `(|β⟩ + phase·|−β⟩)/𝒩`
    Cat { beta_re: f64, beta_im: f64, phase: CatPhase },
}

impl StateSpec {
    pub fn coherent(beta: Complex64) -> Self {
        StateSpec::Coherent {
            beta_re: beta.re,
            beta_im: beta.im,
        }
    }

    pub fn cat(beta: Complex64, phase: CatPhase) -> Self {
        StateSpec::Cat {
            beta_re: beta.re,
            beta_im: beta.im,
            phase,
        }
    }

    /// The `D²` Fock states and two-level superpositions with φ ∈ {0, π/2}.
    pub fn fock_family(dim: usize) -> Vec<StateSpec> {
        let mut out: Vec<StateSpec> = (0..dim).map(|k| StateSpec::Fock { k }).collect();
        for j in 0..dim {
            for k in j + 1..dim {
                for phi in [0.0, PI / 2.0] {
                    out.push(StateSpec::Superposition { j, k, phi });
                }
            }
        }
        out
    }

    /// The four cats `|β⟩ ± |−β⟩`, `|β⟩ ± i|−β⟩`.
    pub fn cat_family(beta: Complex64) -> Vec<StateSpec> {
        CatPhase::ALL.iter().map(|&p| StateSpec::cat(beta, p)).collect()
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            StateSpec::Fock { k } => write!(f, "fock:{k}"),
            StateSpec::Superposition { j, k, phi } => write!(f, "sup:{j}:{k}:{}", fmt_num(phi)),
            StateSpec::Coherent { beta_re, beta_im } => {
                write!(f, "coh:{}:{}", fmt_num(beta_re), fmt_num(beta_im))
            }
            StateSpec::Cat {
                beta_re,
                beta_im,
                phase,
            } => {
                if beta_im == 0.0 {
                    write!(f, "cat:{}:{}", fmt_num(beta_re), phase.token())
                } else {
                    write!(f, "cat:{}:{}:{}", fmt_num(beta_re), fmt_num(beta_im), phase.token())
                }
            }
        }
    }
}

/// Parses an angle such as `1.57`, `pi`, `pi/2`, `-pi/4` or `0.5pi`.
pub fn parse_angle(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase();
    let err = || OrensError::Parse(format!("invalid angle '{s}'"));
    if let Some(pos) = t.find("pi") {
        let (coef, rest) = (&t[..pos], &t[pos + 2..]);
        let c = match coef.trim_end_matches('*') {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| err())?,
        };
        let d = match rest {
            "" => 1.0,
            r => r
                .strip_prefix('/')
                .ok_or_else(err)?
                .parse::<f64>()
                .map_err(|_| err())?,
        };
        Ok(c * PI / d)
    } else {
        t.parse::<f64>().map_err(|_| err())
    }
}

impl FromStr for StateSpec {
    type Err = OrensError;

    /// Colon-separated descriptors: `fock:k`, `sup:j:k:phi`,
    /// `coh:re[:im]`, `cat:re[:im]:phase`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || OrensError::Parse(format!("invalid state descriptor '{s}'"));
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
        let idx = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["fock", k] => Ok(StateSpec::Fock { k: idx(k)? }),
            ["sup", j, k] => Ok(StateSpec::Superposition {
                j: idx(j)?,
                k: idx(k)?,
                phi: 0.0,
            }),
            ["sup", j, k, phi] => Ok(StateSpec::Superposition {
                j: idx(j)?,
                k: idx(k)?,
                phi: parse_angle(phi)?,
            }),
            ["coh", re] => Ok(StateSpec::Coherent {
                beta_re: num(re)?,
                beta_im: 0.0,
            }),
            ["coh", re, im] => Ok(StateSpec::Coherent {
                beta_re: num(re)?,
                beta_im: num(im)?,
            }),
            ["cat", re, phase] => Ok(StateSpec::Cat {
                beta_re: num(re)?,
                beta_im: 0.0,
                phase: phase.parse()?,
            }),
            ["cat", re, im, phase] => Ok(StateSpec::Cat {
                beta_re: num(re)?,
                beta_im: num(im)?,
                phase: phase.parse()?,
            }),
            _ => Err(bad()),
        }
    }
}

fn coherent_amplitude(beta: Complex64, n: usize) -> Complex64 {
    let r = beta.norm();
    if r == 0.0 {
        return if n == 0 { ONE } else { ZERO };
    }
    let log_mag = -0.5 * r * r + n as f64 * r.ln() - 0.5 * ln_factorial(n);
    (beta / r).powu(n as u32) * log_mag.exp()
}

/// Builds the pure target state, rejecting truncation leakage above
/// [`DEFAULT_LEAKAGE_TOL`].
pub fn make_state(spec: &StateSpec, dim: usize) -> Result<DensityMatrix> {
    make_state_with_tolerance(spec, dim, DEFAULT_LEAKAGE_TOL)
}

/// Like [`make_state`] with an explicit leakage bound. The truncated vector
/// is renormalized.
pub fn make_state_with_tolerance(spec: &StateSpec, dim: usize, leakage_tol: f64) -> Result<DensityMatrix> {
    let (psi, leakage) = state_vector(spec, dim)?;
    if leakage > leakage_tol {
        return Err(OrensError::Truncation {
            leakage,
            tolerance: leakage_tol,
            dim,
        });
    }
    DensityMatrix::from_pure(&psi)
}

/// Truncated state vector (not renormalized) and its leakage
/// `1 − ‖ψ_trunc‖²` relative to the untruncated state.
pub fn state_vector(spec: &StateSpec, dim: usize) -> Result<(DVector<Complex64>, f64)> {
    check_dim(dim)?;
    let check = |i: usize| {
        if i >= dim {
            Err(OrensError::IndexOutOfRange { index: i, dim })
        } else {
            Ok(())
        }
    };
    match *spec {
        StateSpec::Fock { k } => {
            check(k)?;
            let mut v = DVector::zeros(dim);
            v[k] = ONE;
            Ok((v, 0.0))
        }
        StateSpec::Superposition { j, k, phi } => {
            check(j)?;
            check(k)?;
            if j == k {
                return Err(OrensError::InvalidState(format!(
                    "superposition needs distinct levels, got {j} twice"
                )));
            }
            let mut v = DVector::zeros(dim);
            v[j] = Complex64::new(FRAC_1_SQRT_2, 0.0);
            v[k] = Complex64::from_polar(FRAC_1_SQRT_2, phi);
            Ok((v, 0.0))
        }
        StateSpec::Coherent { beta_re, beta_im } => {
            let beta = Complex64::new(beta_re, beta_im);
            let v = DVector::from_fn(dim, |n, _| coherent_amplitude(beta, n));
            let leakage = (1.0 - v.norm_squared()).max(0.0);
            Ok((v, leakage))
        }
        StateSpec::Cat {
            beta_re,
            beta_im,
            phase,
        } => {
            let beta = Complex64::new(beta_re, beta_im);
            let p = phase.value();
            let norm_sq = 2.0 + 2.0 * p.re * (-2.0 * beta.norm_sqr()).exp();
            if norm_sq < 1e-12 {
                return Err(OrensError::InvalidState(format!("cat state '{spec}' has zero norm")));
            }
            let v = DVector::from_fn(dim, |n, _| {
                coherent_amplitude(beta, n) * (ONE + p * parity_sign(n))
            })
            .unscale(norm_sq.sqrt());
            let leakage = (1.0 - v.norm_squared()).max(0.0);
            Ok((v, leakage))
        }
    }
}

/// Rectangular grid of displacement amplitudes, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub points_per_axis: usize,
}

impl PhaseSpaceGrid {
    pub fn square(half_width: f64, points_per_axis: usize) -> Self {
        Self {
            re_min: -half_width,
            re_max: half_width,
            im_min: -half_width,
            im_max: half_width,
            points_per_axis,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(OrensError::InvalidGrid("bounds must be finite".into()));
        }
        if self.re_min >= self.re_max || self.im_min >= self.im_max {
            return Err(OrensError::InvalidGrid("bounds must be strictly ordered".into()));
        }
        if self.points_per_axis < 2 {
            return Err(OrensError::InvalidGrid("need at least 2 points per axis".into()));
        }
        Ok(())
    }

    fn axis(min: f64, max: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn re_axis(&self) -> Vec<f64> {
        Self::axis(self.re_min, self.re_max, self.points_per_axis)
    }

    pub fn im_axis(&self) -> Vec<f64> {
        Self::axis(self.im_min, self.im_max, self.points_per_axis)
    }

    /// Area element of one grid cell.
    pub fn cell_area(&self) -> f64 {
        let n = (self.points_per_axis - 1) as f64;
        (self.re_max - self.re_min) / n * (self.im_max - self.im_min) / n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuasiKind {
    Wigner,
    /// Generalized Q function for excitation number `n`.
    Qn(usize),
}

impl FromStr for QuasiKind {
    type Err = OrensError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "wigner" {
            return Ok(QuasiKind::Wigner);
        }
        if t == "husimi" {
            return Ok(QuasiKind::Qn(0));
        }
        if let Some(n) = t.strip_prefix("qn:") {
            return n
                .parse()
                .map(QuasiKind::Qn)
                .map_err(|_| OrensError::Parse(format!("invalid quasi-probability kind '{s}'")));
        }
        Err(OrensError::Parse(format!("invalid quasi-probability kind '{s}'")))
    }
}

/// `(2/π)·Tr(D(α)†ρD(α)P)` using `D(α) P D(α)† = D(2α) P`.
pub fn wigner_at(rho: &DensityMatrix, alpha: Complex64) -> f64 {
    let dim = rho.dim();
    let m = rho.matrix();
    let two_alpha = alpha * 2.0;
    let mut acc = ZERO;
    for i in 0..dim {
        for j in 0..dim {
            // Tr(ρ E) = Σ ρ_ij E_ji with E_ji = ⟨j|D(2α)|i⟩ (−1)^i
            acc += m[(i, j)] * displacement_element(j, i, two_alpha) * parity_sign(i);
        }
    }
    2.0 / PI * acc.re
}

/// `Tr(|n⟩⟨n| D(α)†ρD(α))`.
pub fn qn_at(rho: &DensityMatrix, n: usize, alpha: Complex64) -> f64 {
    let d = displaced_fock_amplitudes(alpha, n, rho.dim());
    (d.adjoint() * rho.matrix() * &d)[(0, 0)].re
}

/// Quasi-probability sampled on a grid; entry `(i, j)` is at
/// `re_axis[i] + i·im_axis[j]`.
pub fn quasiprob_grid(rho: &DensityMatrix, kind: QuasiKind, grid: &PhaseSpaceGrid) -> Result<DMatrix<f64>> {
    grid.validate()?;
    if let QuasiKind::Qn(n) = kind {
        if n >= rho.dim() {
            return Err(OrensError::IndexOutOfRange { index: n, dim: rho.dim() });
        }
    }
    let re = grid.re_axis();
    let im = grid.im_axis();
    Ok(DMatrix::from_fn(re.len(), im.len(), |i, j| {
        let alpha = Complex64::new(re[i], im[j]);
        match kind {
            QuasiKind::Wigner => wigner_at(rho, alpha),
            QuasiKind::Qn(n) => qn_at(rho, n, alpha),
        }
    }))
}

/// CSV rows `re,im,value` for a sampled grid.
pub fn write_grid_csv<W: std::io::Write>(out: W, grid: &PhaseSpaceGrid, values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["re", "im", "value"])?;
    for (i, re) in grid.re_axis().iter().enumerate() {
        for (j, im) in grid.im_axis().iter().enumerate() {
            w.write_record(&[re.to_string(), im.to_string(), values[(i, j)].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// exp(A) by scaling and squaring with a Taylor core.
    fn expm(a: &ComplexMatrix) -> ComplexMatrix {
        let norm = linalg::frobenius(a);
        let squarings = (norm.log2().ceil().max(0.0) as u32) + 4;
        let scaled = a.unscale(2f64.powi(squarings as i32));
        let n = a.nrows();
        let mut term = ComplexMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &scaled / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    fn generator_displacement(alpha: Complex64, dim: usize) -> ComplexMatrix {
        let c = annihilation_op(dim).unwrap();
        let gen = c.adjoint() * alpha - &c * alpha.conj();
        expm(&gen)
    }

    #[test]
    fn annihilation_elements() {
        let c2 = annihilation_op(2).unwrap();
        assert_eq!(c2[(0, 1)], ONE);
        assert_eq!(c2[(1, 0)], ZERO);
        let c3 = annihilation_op(3).unwrap();
        assert_abs_diff_eq!(c3[(1, 2)].re, 2f64.sqrt(), epsilon = 1e-15);
        let n = c3.adjoint() * &c3;
        assert!(linalg::frobenius(&(n - number_op(3).unwrap())) < 1e-15);
        assert!(matches!(annihilation_op(0), Err(OrensError::InvalidDimension(0))));
    }

    #[test]
    fn zero_displacement_is_identity() {
        let d = displacement_op(ZERO, 7).unwrap();
        assert!(linalg::frobenius(&(d - ComplexMatrix::identity(7, 7))) < 1e-15);
    }

    #[test]
    fn vacuum_overlap_matches_generator_oracle() {
        let oracle = generator_displacement(ONE, 64);
        assert_abs_diff_eq!(oracle[(0, 0)].re, 0.606_530_66, epsilon = 1e-8);
        let d = displacement_element(0, 0, ONE);
        assert_abs_diff_eq!(d.re, (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.re, oracle[(0, 0)].re, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_matches_generator_and_is_unitary_on_block() {
        for &(re, im) in &[(0.3, -0.2), (1.0, 1.0), (-1.5, 0.7), (0.0, 2.0)] {
            let alpha = Complex64::new(re, im);
            for dim in [2usize, 5, 8] {
                let work = crate::consts::working_dim(dim, alpha.norm()).min(64);
                let oracle = generator_displacement(alpha, 64);
                let closed = displacement_op(alpha, work).unwrap();
                for m in 0..dim {
                    for n in 0..dim {
                        assert_abs_diff_eq!(closed[(m, n)].re, oracle[(m, n)].re, epsilon = 1e-9);
                        assert_abs_diff_eq!(closed[(m, n)].im, oracle[(m, n)].im, epsilon = 1e-9);
                    }
                }
                let cols = closed.columns(0, dim).into_owned();
                let gram = cols.adjoint() * cols;
                let dev = linalg::frobenius(&(gram - ComplexMatrix::identity(dim, dim)));
                assert!(dev <= crate::consts::UNITARY_TOL, "dev {dev} at alpha {alpha}, D={dim}");
            }
        }
    }

    #[test]
    fn projector_properties() {
        let e = fock_projector(0, 2).unwrap();
        assert_eq!(e[(0, 0)], ONE);
        assert_eq!(e[(1, 1)], ZERO);
        let e = fock_projector(3, 6).unwrap();
        assert_eq!(&e * &e, e);
        assert_eq!(linalg::trace(&e), ONE);
        assert!(matches!(
            fock_projector(6, 6),
            Err(OrensError::IndexOutOfRange { index: 6, dim: 6 })
        ));
    }

    #[test]
    fn parity_values() {
        let p = parity_op(3).unwrap();
        let diag: Vec<f64> = p.diagonal().iter().map(|z| z.re).collect();
        assert_eq!(diag, vec![1.0, -1.0, 1.0]);
        for n in 0..6 {
            let rho = make_state(&StateSpec::Fock { k: n }, 6).unwrap();
            let val = linalg::trace(&(rho.matrix() * parity_op(6).unwrap())).re;
            assert_eq!(val, parity_sign(n));
        }
        let cat = make_state(&StateSpec::cat(Complex64::new(0.8, 0.0), CatPhase::Plus), 16).unwrap();
        let val = linalg::trace(&(cat.matrix() * parity_op(16).unwrap())).re;
        assert_abs_diff_eq!(val, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn benchmark_states() {
        let vac = make_state(&StateSpec::Fock { k: 0 }, 6).unwrap();
        assert_eq!(vac.matrix()[(0, 0)], ONE);
        assert_abs_diff_eq!(vac.purity(), 1.0, epsilon = 1e-15);

        let sup = make_state(&"sup:0:1:pi/2".parse().unwrap(), 2).unwrap();
        assert_abs_diff_eq!(sup.matrix()[(0, 1)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sup.matrix()[(0, 1)].im, -0.5, epsilon = 1e-15);

        let odd = make_state_with_tolerance(&"cat:1:-1".parse().unwrap(), 8, 1e-3).unwrap();
        for (n, p) in odd.populations().iter().enumerate() {
            if n % 2 == 0 {
                assert_abs_diff_eq!(*p, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn truncation_leakage_is_reported() {
        let err = make_state(&"cat:1:+1".parse().unwrap(), 6).unwrap_err();
        assert!(matches!(err, OrensError::Truncation { dim: 6, .. }));
        assert!(make_state(&"cat:1:+1".parse().unwrap(), 16).is_ok());
        assert!(make_state(&"fock:6".parse().unwrap(), 6).is_err());
    }

    #[test]
    fn descriptor_roundtrip() {
        for s in ["fock:3", "sup:0:2:1.5", "coh:0.5:-0.25", "cat:1:+i", "cat:1:0.5:-1"] {
            let spec: StateSpec = s.parse().unwrap();
            let again: StateSpec = spec.to_string().parse().unwrap();
            assert_eq!(spec, again);
        }
        assert_abs_diff_eq!(parse_angle("pi/2").unwrap(), PI / 2.0);
        assert_abs_diff_eq!(parse_angle("-pi").unwrap(), -PI);
        assert!("cat:1".parse::<StateSpec>().is_err());
        assert!("sup:0:1:x".parse::<StateSpec>().is_err());
    }

    #[test]
    fn vacuum_quasiprobabilities() {
        let vac = make_state(&StateSpec::Fock { k: 0 }, 4).unwrap();
        assert_abs_diff_eq!(wigner_at(&vac, ZERO), 2.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wigner_at(&vac, ZERO), 0.636_619_77, epsilon = 1e-8);
        for &(re, im) in &[(0.5, 0.0), (1.0, -1.0), (0.0, 2.0)] {
            let a = Complex64::new(re, im);
            // |⟨α|0⟩|² = e^{−|α|²}
            assert_abs_diff_eq!(qn_at(&vac, 0, a), (-a.norm_sqr()).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn qn_of_coherent_is_poisson() {
        let beta = Complex64::new(0.7, -0.3);
        let rho = make_state(&StateSpec::coherent(beta), 24).unwrap();
        for n in 0..4 {
            for &(re, im) in &[(0.0, 0.0), (0.5, 0.5), (-0.4, 0.1)] {
                let alpha = Complex64::new(re, im);
                let mu = (beta - alpha).norm_sqr();
                let expected = (-mu).exp() * mu.powi(n as i32) / (ln_factorial(n).exp());
                assert_abs_diff_eq!(qn_at(&rho, n, alpha), expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn grid_validation() {
        let vac = make_state(&StateSpec::Fock { k: 0 }, 2).unwrap();
        let bad = PhaseSpaceGrid {
            re_min: 1.0,
            re_max: -1.0,
            im_min: -1.0,
            im_max: 1.0,
            points_per_axis: 5,
        };
        assert!(matches!(quasiprob_grid(&vac, QuasiKind::Wigner, &bad), Err(OrensError::InvalidGrid(_))));
        let bad = PhaseSpaceGrid::square(1.0, 1);
        assert!(quasiprob_grid(&vac, QuasiKind::Wigner, &bad).is_err());
        assert!(quasiprob_grid(&vac, QuasiKind::Qn(2), &PhaseSpaceGrid::square(1.0, 3)).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let rho = make_state(&"sup:0:1:pi/2".parse().unwrap(), 3).unwrap();
        let text = serde_json::to_string(&rho).unwrap();
        assert!(text.contains("\"dim\":3"));
        let back: DensityMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rho);
    }
}
