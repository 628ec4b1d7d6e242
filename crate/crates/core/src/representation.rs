//! A Hamiltonian plus an ordered list of jump operators, and the objects
//! derived from it: Liouvillian, effective Hamiltonian, drift, rates and
//! jump destinations.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{self, JsonMatrix};
use crate::linalg::{self, CMatrix, PureState, Tolerance, C64, I};

/// Hermiticity tolerance for Hamiltonians.
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    label: String,
    dim: usize,
    hamiltonian: CMatrix,
    jumps: Vec<CMatrix>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ZeroDimension,
    NoJumps,
    HamiltonianShape { rows: usize, cols: usize },
    HamiltonianNotHermitian,
    JumpShape { index: usize, rows: usize, cols: usize },
    ZeroJump { index: usize },
    NonFinite { what: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroDimension => write!(f, "dimension must be at least 1"),
            Violation::NoJumps => write!(f, "representation has no jump operators"),
            Violation::HamiltonianShape { rows, cols } => {
                write!(f, "dimension mismatch: Hamiltonian is {rows}×{cols}")
            }
            Violation::HamiltonianNotHermitian => write!(f, "Hamiltonian not Hermitian"),
            Violation::JumpShape { index, rows, cols } => write!(
                f,
                "dimension mismatch: jump operator at index {} is {rows}×{cols}",
                index + 1
            ),
            Violation::ZeroJump { index } => write!(f, "zero jump operator at index {}", index + 1),
            Violation::NonFinite { what } => write!(f, "non-finite entries in {what}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

/// Vectorized generator acting on column-stacked density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianMatrix {
    pub matrix: CMatrix,
}

impl LiouvillianMatrix {
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = rho.nrows();
        linalg::unvectorize(&(&self.matrix * linalg::vectorize(rho)), d)
    }

    /// `e^{Lt} ρ₀`
    pub fn evolve(&self, rho0: &CMatrix, t: f64) -> CMatrix {
        let prop = linalg::matrix_exponential(&(&self.matrix * C64::from(t)));
        let d = rho0.nrows();
        linalg::unvectorize(&(prop * linalg::vectorize(rho0)), d)
    }
}

impl Representation {
    /// Builds a representation without validating it; see [`Representation::validate`].
    pub fn new(label: impl Into<String>, hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Self {
        let dim = hamiltonian.nrows();
        Self {
            label: label.into(),
            dim,
            hamiltonian,
            jumps,
        }
    }

    /// As [`Representation::new`] but fails unless the result validates.
    pub fn try_new(label: impl Into<String>, hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Result<Self> {
        let rep = Self::new(label, hamiltonian, jumps);
        rep.ensure_valid()?;
        Ok(rep)
    }

    /// Representation with `H = 0`.
    pub fn without_hamiltonian(label: impl Into<String>, jumps: Vec<CMatrix>) -> Result<Self> {
        let dim = jumps
            .first()
            .map(|j| j.nrows())
            .ok_or_else(|| Error::InvalidRepresentation("no jump operators".into()))?;
        Self::try_new(label, CMatrix::zeros(dim, dim), jumps)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    pub fn num_jumps(&self) -> usize {
        self.jumps.len()
    }

    pub fn jump(&self, k: usize) -> Result<&CMatrix> {
        self.jumps.get(k).ok_or(Error::IndexOutOfRange {
            index: k + 1,
            len: self.jumps.len(),
        })
    }

    /// Same jumps, Hamiltonian shifted by `r·𝟙`.
    pub fn shifted(&self, r: f64) -> Self {
        let mut out = self.clone();
        out.hamiltonian += linalg::identity(self.dim) * C64::from(r);
        out
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let d = self.dim;
        if d == 0 {
            violations.push(Violation::ZeroDimension);
        }
        let h = &self.hamiltonian;
        if h.nrows() != d || h.ncols() != d {
            violations.push(Violation::HamiltonianShape {
                rows: h.nrows(),
                cols: h.ncols(),
            });
        } else if !linalg::is_finite(h) {
            violations.push(Violation::NonFinite {
                what: "Hamiltonian".into(),
            });
        } else if !linalg::is_hermitian(h, HERMITIAN_TOL) {
            violations.push(Violation::HamiltonianNotHermitian);
        }
        if self.jumps.is_empty() {
            violations.push(Violation::NoJumps);
        }
        for (index, j) in self.jumps.iter().enumerate() {
            if j.nrows() != d || j.ncols() != d {
                violations.push(Violation::JumpShape {
                    index,
                    rows: j.nrows(),
                    cols: j.ncols(),
                });
            } else if !linalg::is_finite(j) {
                violations.push(Violation::NonFinite {
                    what: format!("jump operator {}", index + 1),
                });
            } else if j.norm() == 0.0 {
                violations.push(Violation::ZeroJump { index });
            }
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidRepresentation(report.messages().join("; ")))
        }
    }

    /// `L = −i(𝟙⊗H − Hᵀ⊗𝟙) + Σ_k [conj(J_k)⊗J_k − ½𝟙⊗J_k†J_k − ½(J_k†J_k)ᵀ⊗𝟙]`
    pub fn liouvillian_matrix(&self) -> Result<LiouvillianMatrix> {
        self.ensure_valid()?;
        let d = self.dim;
        let id = linalg::identity(d);
        let h = &self.hamiltonian;
        let mut l = (id.kronecker(h) - h.transpose().kronecker(&id)) * (-I);
        let half = C64::from(0.5);
        for j in &self.jumps {
            let jdj = j.adjoint() * j;
            l += j.map(|z| z.conj()).kronecker(j);
            l -= id.kronecker(&jdj) * half;
            l -= jdj.transpose().kronecker(&id) * half;
        }
        Ok(LiouvillianMatrix { matrix: l })
    }

    /// Right-hand side of the master equation evaluated directly on `ρ`.
    pub fn apply_liouvillian(&self, rho: &CMatrix) -> CMatrix {
        let h = &self.hamiltonian;
        let mut out = (h * rho - rho * h) * (-I);
        for j in &self.jumps {
            let jdj = j.adjoint() * j;
            out += j * rho * j.adjoint() - (&jdj * rho + rho * &jdj) * C64::from(0.5);
        }
        out
    }

    /// `Σ_k J_k†J_k`
    pub fn total_decay_operator(&self) -> CMatrix {
        let mut g = CMatrix::zeros(self.dim, self.dim);
        for j in &self.jumps {
            g += j.adjoint() * j;
        }
        g
    }

    /// `H_eff = H − (i/2) Σ_k J_k†J_k`
    pub fn effective_hamiltonian(&self) -> CMatrix {
        &self.hamiltonian - self.total_decay_operator() * (I * 0.5)
    }

    /// `r_k(ψ) = ‖J_k|ψ⟩‖²`, `k` 0-based.
    pub fn jump_rate(&self, k: usize, psi: &PureState) -> Result<f64> {
        Ok((self.jump(k)? * psi.amplitudes()).norm_squared())
    }

    pub fn jump_rates(&self, psi: &PureState) -> Vec<f64> {
        self.jumps
            .iter()
            .map(|j| (j * psi.amplitudes()).norm_squared())
            .collect()
    }

    /// `J_kψJ_k†/Tr[J_kψJ_k†]`, or the zero matrix when the rate is at most `atol`.
    pub fn jump_destination(&self, k: usize, psi: &PureState, tol: &Tolerance) -> Result<CMatrix> {
        let v = self.jump(k)? * psi.amplitudes();
        let rate = v.norm_squared();
        if rate <= tol.atol {
            return Ok(CMatrix::zeros(self.dim, self.dim));
        }
        Ok(linalg::outer(&v, &v) / C64::from(rate))
    }

    /// Deterministic part of the jump dynamics at the pure state `psi`.
    pub fn drift(&self, psi: &CMatrix) -> CMatrix {
        let heff = self.effective_hamiltonian();
        let b = (&heff * psi) * (-I) + (psi * heff.adjoint()) * I;
        let tr = b.trace();
        &b - psi * tr
    }

    pub fn to_document(&self) -> RepresentationDocument {
        RepresentationDocument {
            label: self.label.clone(),
            dim: self.dim,
            hamiltonian: Some(format::matrix_to_json(&self.hamiltonian)),
            jumps: self.jumps.iter().map(format::matrix_to_json).collect(),
        }
    }

    pub fn from_document(doc: &RepresentationDocument) -> Result<Self> {
        let d = doc.dim;
        if d == 0 {
            return Err(Error::Parse("field dim: must be at least 1".into()));
        }
        let hamiltonian = match &doc.hamiltonian {
            Some(rows) => format::json_to_matrix(rows, "hamiltonian")?,
            None => CMatrix::zeros(d, d),
        };
        check_shape(&hamiltonian, d, "hamiltonian")?;
        let jumps = doc
            .jumps
            .iter()
            .enumerate()
            .map(|(k, rows)| {
                let field = format!("jumps[{k}]");
                let m = format::json_to_matrix(rows, &field)?;
                check_shape(&m, d, &field)?;
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            label: doc.label.clone(),
            dim: d,
            hamiltonian,
            jumps,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RepresentationDocument = format::from_json_str(text)?;
        Self::from_document(&doc)
    }
}

fn check_shape(m: &CMatrix, d: usize, field: &str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Parse(format!(
            "{field}: expected {d}×{d} matrix, found {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// On-disk form of a [`Representation`].
///
/// `hamiltonian` must be present; `null` stands for the zero matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationDocument {
    #[serde(default)]
    pub label: String,
    pub dim: usize,
    #[serde(deserialize_with = "Option::deserialize")]
    pub hamiltonian: Option<JsonMatrix>,
    pub jumps: Vec<JsonMatrix>,
}
