//! Displaced observables, measurement matrices and the real
//! parameterization of density matrices used for inversion.
//!
//! Conventions: `vec(ρ)` stacks columns, so `ρ_ij` sits at index `i + j·D`.
//! Row `k` of the measurement matrix holds `E_k` transposed, making Born's
//! rule `⟨E_k⟩ = Σ M[k, i + jD] · ρ_ij` a plain matrix-vector product.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::consts::{DUPLICATE_ALPHA_TOL, MAX_DIM, PROB_CLIP_TOL, SINGULAR_REL_TOL};
use crate::error::{OrensError, Result};
use crate::fockspace::{displaced_fock_amplitudes, displacement_element, parity_sign, DensityMatrix};
use crate::ComplexMatrix;

/// What is mapped onto the qubit after each displacement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// Projector `|n⟩⟨n|` (selective π pulse).
    Fock(usize),
    /// Photon-number parity (Ramsey sequence).
    Parity,
    /// Parity measured with both final-pulse phases and differenced.
    CorrectedParity,
}

impl ObservableKind {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            ObservableKind::Fock(n) if n >= dim => Err(OrensError::IndexOutOfRange { index: n, dim }),
            _ => Ok(()),
        }
    }

    pub fn is_parity(&self) -> bool {
        !matches!(self, ObservableKind::Fock(_))
    }

    /// Physical measurements per displacement setting.
    pub fn mappings_per_setting(&self) -> usize {
        match self {
            ObservableKind::CorrectedParity => 2,
            _ => 1,
        }
    }

    /// Observable expectation from the qubit excited-state probability.
    pub fn value_from_probability(&self, p: f64) -> f64 {
        if self.is_parity() {
            2.0 * p - 1.0
        } else {
            p
        }
    }

    pub fn probability_from_value(&self, x: f64) -> f64 {
        if self.is_parity() {
            0.5 * (1.0 + x)
        } else {
            x
        }
    }
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableKind::Fock(n) => write!(f, "fock:{n}"),
            ObservableKind::Parity => write!(f, "parity"),
            ObservableKind::CorrectedParity => write!(f, "corrected_parity"),
        }
    }
}

impl FromStr for ObservableKind {
    type Err = OrensError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "parity" => Ok(ObservableKind::Parity),
            "corrected_parity" | "corrected-parity" => Ok(ObservableKind::CorrectedParity),
            _ => t
                .strip_prefix("fock:")
                .and_then(|n| n.parse().ok())
                .map(ObservableKind::Fock)
                .ok_or_else(|| OrensError::Parse(format!("unknown observable kind '{s}'"))),
        }
    }
}

pub const PLAN_SCHEMA: &str = "orens.plan/1";

/// Ordered displacement settings sharing one observable.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementPlan {
    dim: usize,
    kind: ObservableKind,
    alphas: Vec<Complex64>,
    pub label: String,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    #[serde(default = "plan_schema")]
    schema: String,
    dim: usize,
    kind: ObservableKind,
    alphas: Vec<[f64; 2]>,
    #[serde(default)]
    label: String,
}

fn plan_schema() -> String {
    PLAN_SCHEMA.to_string()
}

impl MeasurementPlan {
    /// Validates the kind, finiteness and pairwise separation of the
    /// displacements. The number of settings is not constrained here; see
    /// [`MeasurementPlan::is_complete`].
    pub fn new(dim: usize, kind: ObservableKind, alphas: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(OrensError::InvalidDimension(dim));
        }
        kind.validate(dim)?;
        if alphas.is_empty() {
            return Err(OrensError::InvalidPlan("plan has no displacements".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(OrensError::InvalidPlan(format!("non-finite displacement {a}")));
        }
        for (i, a) in alphas.iter().enumerate() {
            for (j, b) in alphas.iter().enumerate().skip(i + 1) {
                if (a - b).norm() < DUPLICATE_ALPHA_TOL {
                    return Err(OrensError::InvalidPlan(format!(
                        "displacements {i} and {j} coincide ({a})"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            kind,
            alphas,
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ObservableKind {
        self.kind
    }

    pub fn alphas(&self) -> &[Complex64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// `D² − 1` settings, the minimum for reconstruction.
    pub fn is_complete(&self) -> bool {
        self.alphas.len() == param_len(self.dim)
    }

    pub fn max_abs_alpha(&self) -> f64 {
        self.alphas.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn check_max_alpha(&self, max_alpha: f64) -> Result<()> {
        let m = self.max_abs_alpha();
        if m > max_alpha + 1e-12 {
            return Err(OrensError::InvalidPlan(format!(
                "|alpha| = {m:.6} exceeds the limit {max_alpha}"
            )));
        }
        Ok(())
    }

    /// Same displacements with a different observable.
    pub fn with_kind(&self, kind: ObservableKind) -> Result<Self> {
        Self::new(self.dim, kind, self.alphas.clone(), self.label.clone())
    }

    /// Total number of physical measurement configurations.
    pub fn measurement_count(&self) -> usize {
        self.alphas.len() * self.kind.mappings_per_setting()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialization cannot fail")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("plan serialization cannot fail");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

impl Serialize for MeasurementPlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PlanJson {
            schema: plan_schema(),
            dim: self.dim,
            kind: self.kind,
            alphas: self.alphas.iter().map(|a| [a.re, a.im]).collect(),
            label: self.label.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasurementPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = PlanJson::deserialize(d)?;
        let alphas = j.alphas.iter().map(|a| Complex64::new(a[0], a[1])).collect();
        MeasurementPlan::new(j.dim, j.kind, alphas, j.label).map_err(serde::de::Error::custom)
    }
}

/// `D² − 1`.
pub fn param_len(dim: usize) -> usize {
    dim * dim - 1
}

/// Displaced observable `E = D(α) O D(α)†` cropped to `dim` levels.
///
/// The Fock projector uses the exact outer product of the displaced Fock
/// column. Parity uses `D(α) P D(α)† = D(2α) P`, so its cropped block is
/// exact as well and needs no enlarged intermediate space.
pub fn observable_matrix(kind: ObservableKind, alpha: Complex64, dim: usize) -> Result<ComplexMatrix> {
    if dim == 0 || dim > MAX_DIM {
        return Err(OrensError::InvalidDimension(dim));
    }
    kind.validate(dim)?;
    Ok(match kind {
        ObservableKind::Fock(n) => {
            let d = displaced_fock_amplitudes(alpha, n, dim);
            &d * d.adjoint()
        }
        ObservableKind::Parity | ObservableKind::CorrectedParity => {
            let two = alpha * 2.0;
            DMatrix::from_fn(dim, dim, |i, j| displacement_element(i, j, two) * parity_sign(j))
        }
    })
}

/// Displaced parity assembled as `Σ_m (−1)^m D(α)|m⟩⟨m|D(α)†` over
/// `work` Fock levels, then cropped to `dim`.
pub fn displaced_parity_by_sum(alpha: Complex64, dim: usize, work: usize) -> ComplexMatrix {
    let mut e = ComplexMatrix::zeros(dim, dim);
    for m in 0..work {
        let d = displaced_fock_amplitudes(alpha, m, dim);
        e += (&d * d.adjoint()) * Complex64::new(parity_sign(m), 0.0);
    }
    e
}

/// Column-major vectorization.
pub fn vec_col(m: &ComplexMatrix) -> DVector<Complex64> {
    DVector::from_iterator(m.len(), m.iter().copied())
}

pub fn unvec_col(v: &DVector<Complex64>, dim: usize) -> ComplexMatrix {
    DMatrix::from_iterator(dim, dim, v.iter().copied())
}

/// Measurement matrix of shape `len × D²` with `⟨E_k⟩ = (M vec(ρ))_k`.
pub fn build_measurement_matrix(plan: &MeasurementPlan) -> ComplexMatrix {
    let dim = plan.dim();
    let mut m = ComplexMatrix::zeros(plan.len(), dim * dim);
    for (k, &alpha) in plan.alphas().iter().enumerate() {
        let e = observable_matrix(plan.kind(), alpha, dim).expect("plan was validated");
        for j in 0..dim {
            for i in 0..dim {
                m[(k, i + j * dim)] = e[(j, i)];
            }
        }
    }
    m
}

/// Ideal observable expectations `Tr(ρ E_k)`.
pub fn expectations(rho: &DensityMatrix, plan: &MeasurementPlan) -> Result<DVector<f64>> {
    check_dims(rho, plan)?;
    let mut out = DVector::zeros(plan.len());
    for (k, &alpha) in plan.alphas().iter().enumerate() {
        out[k] = expectation(rho.matrix(), &observable_matrix(plan.kind(), alpha, plan.dim())?);
    }
    Ok(out)
}

fn expectation(rho: &ComplexMatrix, e: &ComplexMatrix) -> f64 {
    rho.iter().zip(e.transpose().iter()).map(|(a, b)| a * b).sum::<Complex64>().re
}

fn check_dims(rho: &DensityMatrix, plan: &MeasurementPlan) -> Result<()> {
    if rho.dim() != plan.dim() {
        return Err(OrensError::DimensionMismatch {
            expected: plan.dim(),
            got: rho.dim(),
        });
    }
    Ok(())
}

/// Clips values within [`PROB_CLIP_TOL`] of `[lo, hi]` and rejects the rest.
pub fn clip_checked(v: f64, lo: f64, hi: f64) -> Result<f64> {
    if v < lo - PROB_CLIP_TOL || v > hi + PROB_CLIP_TOL || v.is_nan() {
        return Err(OrensError::Consistency(format!("value {v} outside [{lo}, {hi}]")));
    }
    Ok(v.clamp(lo, hi))
}

/// Ideal qubit excited-state probabilities: `Tr(ρE_k)` for Fock
/// projectors, `(1 + ⟨P⟩)/2` for both parity kinds.
pub fn born_probabilities(rho: &DensityMatrix, plan: &MeasurementPlan) -> Result<DVector<f64>> {
    let x = expectations(rho, plan)?;
    let kind = plan.kind();
    let mut out = DVector::zeros(x.len());
    for (k, v) in x.iter().enumerate() {
        out[k] = clip_checked(kind.probability_from_value(*v), 0.0, 1.0)?;
    }
    Ok(out)
}

/// Real parameters `(Re ρ_ij, Im ρ_ij for i<j, ρ_ii for i<D−1)`; off-diagonal
/// pairs run row by row.
pub fn params_from_rho(rho: &ComplexMatrix) -> DVector<f64> {
    let dim = rho.nrows();
    let off = dim * (dim - 1) / 2;
    let mut y = DVector::zeros(param_len(dim));
    let mut p = 0;
    for i in 0..dim {
        for j in i + 1..dim {
            y[p] = rho[(i, j)].re;
            y[off + p] = rho[(i, j)].im;
            p += 1;
        }
    }
    for i in 0..dim - 1 {
        y[2 * off + i] = rho[(i, i)].re;
    }
    y
}

/// Inverse of [`params_from_rho`]; the last diagonal entry closes the trace.
pub fn rho_from_params(y: &DVector<f64>, dim: usize) -> Result<ComplexMatrix> {
    if y.len() != param_len(dim) {
        return Err(OrensError::DimensionMismatch {
            expected: param_len(dim),
            got: y.len(),
        });
    }
    let off = dim * (dim - 1) / 2;
    let mut rho = ComplexMatrix::zeros(dim, dim);
    let mut p = 0;
    for i in 0..dim {
        for j in i + 1..dim {
            let z = Complex64::new(y[p], y[off + p]);
            rho[(i, j)] = z;
            rho[(j, i)] = z.conj();
            p += 1;
        }
    }
    let mut acc = 0.0;
    for i in 0..dim - 1 {
        rho[(i, i)] = Complex64::new(y[2 * off + i], 0.0);
        acc += y[2 * off + i];
    }
    rho[(dim - 1, dim - 1)] = Complex64::new(1.0 - acc, 0.0);
    Ok(rho)
}

/// Effective real map `⟨E⟩ = 𝓜 y + V` in the trace-closed parameterization.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub m: DMatrix<f64>,
    pub v: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.m * y + &self.v
    }
}

/// Writes the effective row of one observable into `row` and returns the
/// offset `E_{D−1,D−1}`.
pub fn effective_row_into(e: &ComplexMatrix, row: &mut [f64]) -> f64 {
    let dim = e.nrows();
    let off = dim * (dim - 1) / 2;
    let last = e[(dim - 1, dim - 1)].re;
    let mut p = 0;
    for i in 0..dim {
        for j in i + 1..dim {
            row[p] = 2.0 * e[(i, j)].re;
            row[off + p] = 2.0 * e[(i, j)].im;
            p += 1;
        }
    }
    for i in 0..dim - 1 {
        row[2 * off + i] = e[(i, i)].re - last;
    }
    last
}

/// Effective matrix and offset for a list of displacements, without plan
/// validation. Used by the optimizer's inner loop.
pub fn affine_from_alphas(kind: ObservableKind, alphas: &[Complex64], dim: usize) -> Result<AffineMap> {
    let mut m = DMatrix::zeros(alphas.len(), param_len(dim));
    let mut v = DVector::zeros(alphas.len());
    let mut row = vec![0.0; param_len(dim)];
    for (k, &alpha) in alphas.iter().enumerate() {
        let e = observable_matrix(kind, alpha, dim)?;
        v[k] = effective_row_into(&e, &mut row);
        m.row_mut(k).copy_from_slice(&row);
    }
    Ok(AffineMap { m, v })
}

pub fn affine_transform(plan: &MeasurementPlan) -> AffineMap {
    affine_from_alphas(plan.kind(), plan.alphas(), plan.dim()).expect("plan was validated")
}

/// `σ_max / σ_min`, or `+∞` when `σ_min < 1e−14 σ_max`.
pub fn condition_number(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(OrensError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(condition_number_unchecked(m))
}

pub(crate) fn condition_number_unchecked(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !max.is_finite() || !min.is_finite() || max == 0.0 || min < SINGULAR_REL_TOL * max {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn plan_condition_number(plan: &MeasurementPlan) -> Result<f64> {
    condition_number(&affine_transform(plan).m)
}

/// Which final-pulse phase produced a parity record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    Normal,
    Reversed,
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mapping::Normal => "normal",
            Mapping::Reversed => "reversed",
        })
    }
}

impl FromStr for Mapping {
    type Err = OrensError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "normal" | "" => Ok(Mapping::Normal),
            "reversed" => Ok(Mapping::Reversed),
            other => Err(OrensError::Parse(format!("unknown mapping '{other}'"))),
        }
    }
}

/// One measured setting. `shots == 0` marks an exact probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub setting_index: usize,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub shots: u64,
    pub successes: u64,
    pub frequency: f64,
    pub mapping: Mapping,
}

pub const OUTCOME_SCHEMA_LINE: &str = "# orens-outcomes v1";

/// Per-setting counts or frequencies of qubit excited-state outcomes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub rows: Vec<OutcomeRow>,
}

impl OutcomeRecord {
    /// Exact probabilities with no shot noise.
    pub fn from_probabilities(plan: &MeasurementPlan, probs: &DVector<f64>, mapping: Mapping) -> Result<Self> {
        let mut rec = OutcomeRecord::default();
        rec.push_exact(plan, probs, mapping)?;
        Ok(rec)
    }

    pub fn push_exact(&mut self, plan: &MeasurementPlan, probs: &DVector<f64>, mapping: Mapping) -> Result<()> {
        if probs.len() != plan.len() {
            return Err(OrensError::DataMismatch(format!(
                "{} probabilities for {} settings",
                probs.len(),
                plan.len()
            )));
        }
        for (k, (&alpha, &p)) in plan.alphas().iter().zip(probs.iter()).enumerate() {
            self.rows.push(OutcomeRow {
                setting_index: k,
                alpha_re: alpha.re,
                alpha_im: alpha.im,
                shots: 0,
                successes: 0,
                frequency: clip_checked(p, 0.0, 1.0)?,
                mapping,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if r.successes > r.shots && r.shots > 0 {
                return Err(OrensError::DataMismatch(format!(
                    "setting {}: {} successes out of {} shots",
                    r.setting_index, r.successes, r.shots
                )));
            }
            if !(0.0..=1.0).contains(&r.frequency) {
                return Err(OrensError::DataMismatch(format!(
                    "setting {}: frequency {} outside [0, 1]",
                    r.setting_index, r.frequency
                )));
            }
        }
        Ok(())
    }

    /// Frequencies of one mapping, ordered by setting index and checked
    /// against the plan's displacements.
    pub fn frequencies(&self, plan: &MeasurementPlan, mapping: Mapping) -> Result<DVector<f64>> {
        self.validate()?;
        let mut out = vec![None; plan.len()];
        for r in self.rows.iter().filter(|r| r.mapping == mapping) {
            let k = r.setting_index;
            if k >= plan.len() {
                return Err(OrensError::DataMismatch(format!(
                    "setting index {k} but the plan has {} settings",
                    plan.len()
                )));
            }
            let alpha = Complex64::new(r.alpha_re, r.alpha_im);
            if (alpha - plan.alphas()[k]).norm() > 1e-9 {
                return Err(OrensError::DataMismatch(format!(
                    "setting {k}: data alpha {alpha} differs from plan alpha {}",
                    plan.alphas()[k]
                )));
            }
            if out[k].replace(r.frequency).is_some() {
                return Err(OrensError::DataMismatch(format!("setting {k} ({mapping}) appears twice")));
            }
        }
        let missing: Vec<usize> = out.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(k, _)| k).collect();
        if !missing.is_empty() {
            return Err(OrensError::DataMismatch(format!(
                "{} settings missing for mapping {mapping} (first: {})",
                missing.len(),
                missing[0]
            )));
        }
        Ok(DVector::from_iterator(plan.len(), out.into_iter().map(|v| v.unwrap())))
    }

    pub fn has_mapping(&self, mapping: Mapping) -> bool {
        self.rows.iter().any(|r| r.mapping == mapping)
    }

    /// Observable values `x_k` estimating `Tr(ρE_k)`. For corrected parity
    /// with both mappings present this is `p_normal − p_reversed`.
    pub fn observable_values(&self, plan: &MeasurementPlan) -> Result<DVector<f64>> {
        let kind = plan.kind();
        let p = self.frequencies(plan, Mapping::Normal)?;
        if kind == ObservableKind::CorrectedParity && self.has_mapping(Mapping::Reversed) {
            let q = self.frequencies(plan, Mapping::Reversed)?;
            return Ok(p - q);
        }
        Ok(p.map(|v| kind.value_from_probability(v)))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{OUTCOME_SCHEMA_LINE}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["setting_index", "alpha_re", "alpha_im", "shots", "successes", "frequency", "mapping"])?;
        for r in &self.rows {
            w.write_record(&[
                r.setting_index.to_string(),
                r.alpha_re.to_string(),
                r.alpha_im.to_string(),
                r.shots.to_string(),
                r.successes.to_string(),
                r.frequency.to_string(),
                r.mapping.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`OutcomeRecord::write_csv`]. Comment lines
    /// starting with `#` are skipped; `frequency` and `mapping` columns are
    /// optional.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let need = |name: &str| col(name).ok_or_else(|| OrensError::Parse(format!("outcome CSV lacks column '{name}'")));
        let (ci, cr, cim, cs, cn) = (
            need("setting_index")?,
            need("alpha_re")?,
            need("alpha_im")?,
            need("shots")?,
            need("successes")?,
        );
        let (cf, cm) = (col("frequency"), col("mapping"));
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let parse_err = |what: &str| OrensError::Parse(format!("outcome row {}: bad {what}", line + 1));
            let shots: u64 = field(cs).parse().map_err(|_| parse_err("shots"))?;
            let successes: u64 = field(cn).parse().map_err(|_| parse_err("successes"))?;
            let frequency = match cf.map(field).filter(|s| !s.is_empty()) {
                Some(s) => s.parse().map_err(|_| parse_err("frequency"))?,
                None if shots > 0 => successes as f64 / shots as f64,
                None => return Err(parse_err("frequency (required when shots = 0)")),
            };
            rows.push(OutcomeRow {
                setting_index: field(ci).parse().map_err(|_| parse_err("setting_index"))?,
                alpha_re: field(cr).parse().map_err(|_| parse_err("alpha_re"))?,
                alpha_im: field(cim).parse().map_err(|_| parse_err("alpha_im"))?,
                shots,
                successes,
                frequency,
                mapping: cm.map(field).unwrap_or("normal").parse()?,
            });
        }
        let out = OutcomeRecord { rows };
        out.validate()?;
        Ok(out)
    }
}

/// Independent binomial draws, one per setting.
pub fn sample_outcomes(probs: &DVector<f64>, shots: u64, seed: u64) -> Result<Vec<(u64, f64)>> {
    if shots == 0 {
        return Err(OrensError::InvalidParameter("shots must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    probs
        .iter()
        .map(|&p| {
            let p = clip_checked(p, 0.0, 1.0)?;
            let bin = Binomial::new(shots, p).map_err(|e| OrensError::InvalidParameter(e.to_string()))?;
            let k = bin.sample(&mut rng);
            Ok((k, k as f64 / shots as f64))
        })
        .collect()
}

/// Samples a full record for `plan`, one mapping.
pub fn sample_record(plan: &MeasurementPlan, probs: &DVector<f64>, shots: u64, seed: u64, mapping: Mapping) -> Result<OutcomeRecord> {
    let mut rec = OutcomeRecord::default();
    push_sampled(&mut rec, plan, probs, shots, seed, mapping)?;
    Ok(rec)
}

pub fn push_sampled(
    rec: &mut OutcomeRecord,
    plan: &MeasurementPlan,
    probs: &DVector<f64>,
    shots: u64,
    seed: u64,
    mapping: Mapping,
) -> Result<()> {
    if probs.len() != plan.len() {
        return Err(OrensError::DataMismatch(format!(
            "{} probabilities for {} settings",
            probs.len(),
            plan.len()
        )));
    }
    let draws = sample_outcomes(probs, shots, seed)?;
    for (k, (&alpha, (succ, freq))) in plan.alphas().iter().zip(draws).enumerate() {
        rec.rows.push(OutcomeRow {
            setting_index: k,
            alpha_re: alpha.re,
            alpha_im: alpha.im,
            shots,
            successes: succ,
            frequency: freq,
            mapping,
        });
    }
    Ok(())
}
