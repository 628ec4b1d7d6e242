//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra` dense matrices over [`C64`]. Density matrices are
//! vectorized by stacking columns, so that for any operators `A`, `B`
//!
//! ```text
//! vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)
//! ```
//!
//! and the superoperator of `ρ ↦ J ρ J†` is `conj(J) ⊗ J`.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Absolute and relative tolerance used by every numerical comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-10,
        }
    }
}

impl Tolerance {
    pub fn new(atol: f64, rtol: f64) -> Result<Self> {
        if !(atol >= 0.0 && rtol >= 0.0) || !atol.is_finite() || !rtol.is_finite() {
            return Err(Error::InvalidInput(format!(
                "tolerances must be finite and non-negative (atol={atol}, rtol={rtol})"
            )));
        }
        Ok(Self { atol, rtol })
    }

    /// Threshold `max(atol, rtol * scale)`.
    pub fn threshold(&self, scale: f64) -> f64 {
        self.atol.max(self.rtol * scale)
    }

    /// Frobenius-norm closeness of two equally shaped matrices.
    pub fn matrices_close(&self, a: &CMatrix, b: &CMatrix) -> bool {
        if a.shape() != b.shape() {
            return false;
        }
        let scale = a.norm().max(b.norm());
        (a - b).norm() <= self.threshold(scale)
    }

    pub fn scalars_close(&self, a: f64, b: f64) -> bool {
        (a - b).abs() <= self.threshold(a.abs().max(b.abs()))
    }
}

/// A normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState(CVector);

impl PureState {
    /// Normalizes `amplitudes`; fails for zero or non-finite input.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput("state of dimension 0".into()));
        }
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidInput("state vector must be finite and nonzero".into()));
        }
        Ok(Self(amplitudes / C64::from(norm)))
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    /// Computational basis state `|k⟩`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidInput(format!(
                "basis index {k} out of range for dimension {dim}"
            )));
        }
        let mut v = CVector::zeros(dim);
        v[k] = ONE;
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    /// `|ψ⟩⟨ψ|`
    pub fn density(&self) -> CMatrix {
        &self.0 * self.0.adjoint()
    }

    /// `⟨ψ|O|ψ⟩`
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        self.0.dotc(&(op * &self.0))
    }

    /// `|⟨self|other⟩|`
    pub fn overlap(&self, other: &PureState) -> f64 {
        self.0.dotc(&other.0).norm()
    }
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        crate::format::vector_to_json(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<crate::format::JsonComplex>::deserialize(d)?;
        let v = crate::format::json_to_vector(&entries);
        // keep stored states bit-exact; rescaling a unit vector moves the last ulp
        if !v.is_empty() && (v.norm() - 1.0).abs() <= 8.0 * f64::EPSILON {
            return Ok(Self(v));
        }
        PureState::new(v).map_err(serde::de::Error::custom)
    }
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// `|a⟩⟨b|` for basis indices.
pub fn dyad(dim: usize, a: usize, b: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(a, b)] = ONE;
    m
}

/// `|u⟩⟨v|`
pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && (m - m.adjoint()).norm() <= tol
}

/// Frobenius inner product `Tr(A† B)`.
pub fn frobenius_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Stack the columns of `m` into a vector.
pub fn vectorize(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`] for a `dim × dim` matrix.
pub fn unvectorize(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

fn to_faer(m: &CMatrix) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition `m = U diag(s) V†`, `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(m: &CMatrix) -> Result<Svd> {
    if m.is_empty() {
        return Ok(Svd {
            u: CMatrix::zeros(m.nrows(), 0),
            s: Vec::new(),
            v: CMatrix::zeros(m.ncols(), 0),
        });
    }
    let f = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let sv = f.S().column_vector();
    let s: Vec<f64> = (0..sv.nrows()).map(|i| sv[i].re).collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let (u, v) = (from_faer(f.U()), from_faer(f.V()));
    Ok(Svd {
        u: CMatrix::from_fn(u.nrows(), order.len(), |i, j| u[(i, order[j])]),
        s: order.iter().map(|&i| s[i]).collect(),
        v: CMatrix::from_fn(v.nrows(), order.len(), |i, j| v[(i, order[j])]),
    })
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    svd(m)
        .map(|d| d.s)
        .unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())])
}

/// Number of singular values above `max(atol, rtol * σ_max)`.
pub fn numerical_rank(m: &CMatrix, tol: &Tolerance) -> usize {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let cut = tol.threshold(smax);
    sv.iter().filter(|&&s| s > cut).count()
}

/// Leading left singular vector, with the phase convention of [`fix_phase`].
pub fn leading_left_singular_vector(m: &CMatrix) -> CVector {
    let mut v = match svd(m) {
        Ok(d) if d.u.ncols() > 0 => d.u.column(0).into_owned(),
        _ => CVector::from_element(m.nrows(), C64::from(f64::NAN)),
    };
    fix_phase(v.as_mut_slice());
    v
}

/// Minimum-norm least-squares solution of `a x = b`, discarding singular
/// values below `rcond · σ_max`.
pub fn least_squares(a: &CMatrix, b: &CVector, rcond: f64) -> Result<CVector> {
    let d = svd(a)?;
    let cut = rcond * d.s.first().copied().unwrap_or(0.0);
    let mut x = CVector::zeros(a.ncols());
    for (k, &s) in d.s.iter().enumerate() {
        if s > cut {
            let coeff = d.u.column(k).dotc(b) / s;
            x += d.v.column(k) * coeff;
        }
    }
    Ok(x)
}

/// Rotate a vector's global phase so its first significant entry is real positive.
///
/// "Significant" means magnitude above `1e-8` times the largest magnitude, so
/// rounding noise in structurally zero entries does not pick the phase.
pub fn fix_phase(entries: &mut [C64]) {
    let max = entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    if let Some(z) = entries.iter().find(|z| z.norm() > 1e-8 * max).copied() {
        let phase = z.conj() / z.norm();
        for e in entries.iter_mut() {
            *e *= phase;
        }
    }
}

/// Row-major variant of [`fix_phase`] for matrices.
pub fn fix_matrix_phase(m: &mut CMatrix) {
    let max = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let first = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|ij| m[ij])
        .find(|z| z.norm() > 1e-8 * max);
    if let Some(z) = first {
        let phase = z.conj() / z.norm();
        *m *= phase;
    }
}

/// Returns `λ = ⟨B,A⟩/⟨B,B⟩` when `A ≈ λB`.
pub fn proportionality_coefficient(a: &CMatrix, b: &CMatrix, tol: &Tolerance) -> Result<Option<C64>> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let bb = b.norm_squared();
    if bb == 0.0 {
        return Err(Error::InvalidInput("degenerate reference operator".into()));
    }
    let lambda = frobenius_inner(b, a) / bb;
    let residual = (a - b * lambda).norm();
    if residual <= tol.threshold(a.norm()) {
        Ok(Some(lambda))
    } else {
        Ok(None)
    }
}

/// Matrix of `ρ ↦ Σ_k J_k ρ J_k†` acting on column-stacked `ρ`.
pub fn superoperator_matrix(kraus: &[CMatrix]) -> Result<CMatrix> {
    let first = kraus
        .first()
        .ok_or_else(|| Error::InvalidInput("empty operator list".into()))?;
    let n = first.nrows();
    let mut out = CMatrix::zeros(n * n, n * n);
    for k in kraus {
        if k.nrows() != n || k.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator of shape {:?} in list of {n}×{n} operators",
                k.shape()
            )));
        }
        out += k.map(|z| z.conj()).kronecker(k);
    }
    Ok(out)
}

/// `Σ_k J_k ρ J_k†` evaluated directly.
pub fn apply_kraus(kraus: &[CMatrix], rho: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
    for k in kraus {
        out += k * rho * k.adjoint();
    }
    out
}

/// If `m ≈ z·𝟙` returns `z = Tr(m)/d`.
pub fn identity_shift(m: &CMatrix, tol: &Tolerance) -> Option<C64> {
    if !m.is_square() || m.nrows() == 0 {
        return None;
    }
    let d = m.nrows();
    let z = m.trace() / d as f64;
    let residual = (m - identity(d) * z).norm();
    (residual <= tol.threshold(m.norm())).then_some(z)
}

/// `e^M` by scaling and squaring with a Padé approximant.
pub fn matrix_exponential(m: &CMatrix) -> CMatrix {
    assert!(m.is_square(), "matrix exponential of non-square matrix");
    if m.iter().all(|z| *z == ZERO) {
        return identity(m.nrows());
    }
    m.clone().exp()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let h = (m + m.adjoint()) * C64::from(0.5);
    match to_faer(&h).self_adjoint_eigen(Side::Lower) {
        Ok(eig) => {
            let s = eig.S().column_vector();
            let values: Vec<f64> = (0..n).map(|i| s[i].re).collect();
            let vectors = from_faer(eig.U());
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            (
                order.iter().map(|&i| values[i]).collect(),
                CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]),
            )
        }
        Err(_) => (vec![f64::NAN; n], CMatrix::from_element(n, n, C64::from(f64::NAN))),
    }
}

/// Trace distance `½‖a − b‖₁` between Hermitian matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let (values, _) = hermitian_eigen(&(a - b));
    0.5 * values.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-random pure state drawn from `rng`.
pub fn random_pure_state_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<PureState> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    loop {
        let v = CVector::from_fn(dim, |_, _| complex_gaussian(rng));
        if v.norm() > 1e-300 {
            return PureState::new(v);
        }
    }
}

/// Haar-random pure state, deterministic in `seed`.
pub fn random_pure_state(dim: usize, seed: u64) -> Result<PureState> {
    random_pure_state_with(dim, &mut rng_from_seed(seed))
}

/// Complex Ginibre matrix with unit-variance entries.
pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// `rows × cols` isometry (`V†V = 𝟙`) with Haar-distributed columns; needs `rows ≥ cols`.
pub fn random_isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let qr = random_matrix(rows, cols, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    // make the decomposition unique so the distribution is Haar
    for j in 0..cols {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            let mut col = q.column_mut(j);
            col *= phase;
        }
    }
    q
}

pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    random_isometry(dim, dim, rng)
}

/// Wrap an angle to `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = phi.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}
