//! Block isometries: the gauge freedom that leaves the trajectory ensemble
//! unchanged. A minimal representation `{J'_k}` and a block isometry `V`
//! give `J_j = Σ_k V_jk J'_k`; rows of one target SJED only draw on the
//! columns of a single source SJED.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equivalence::check_theorem1;
use crate::error::{Error, Result};
use crate::format;
use crate::linalg::{self, random_isometry, vectorize, CMatrix, Tolerance, C64};
use crate::representation::Representation;
use crate::sjed::{self, SjedKind, SjedPartition};

/// Bound on `‖V†V − 𝟙‖_F` for a matrix to count as an isometry.
pub const ISOMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockIsometry {
    matrix: CMatrix,
    /// Column sets `S'_β`, one per source SJED.
    source_blocks: Vec<Vec<usize>>,
    /// Row sets `S_α`, ordered by smallest member.
    target_blocks: Vec<Vec<usize>>,
    /// `block_map[α] = β`: rows `S_α` draw only on columns `S'_β`.
    block_map: Vec<usize>,
}

fn isometry_defect(m: &CMatrix) -> f64 {
    (m.adjoint() * m - linalg::identity(m.ncols())).norm()
}

impl BlockIsometry {
    /// Infer the target blocks of `matrix` from its nonzero pattern with
    /// respect to the given column blocks.
    pub fn from_matrix(matrix: CMatrix, source_blocks: Vec<Vec<usize>>, tol: &Tolerance) -> Result<Self> {
        let (rows, cols) = matrix.shape();
        let mut owner = vec![usize::MAX; cols];
        for (beta, b) in source_blocks.iter().enumerate() {
            for &k in b {
                if k >= cols || owner[k] != usize::MAX {
                    return Err(Error::Gauge(format!(
                        "source blocks do not partition the {cols} columns"
                    )));
                }
                owner[k] = beta;
            }
        }
        if owner.contains(&usize::MAX) {
            return Err(Error::Gauge(format!(
                "source blocks do not partition the {cols} columns"
            )));
        }
        let defect = isometry_defect(&matrix);
        if defect > ISOMETRY_TOL.max(tol.atol) {
            return Err(Error::Gauge(format!(
                "matrix is not an isometry (‖V†V − 𝟙‖ = {defect:.3e})"
            )));
        }
        let cut = tol.atol.max(1e-12);
        let mut row_block = Vec::with_capacity(rows);
        for j in 0..rows {
            let mut hit: Option<usize> = None;
            for k in 0..cols {
                if matrix[(j, k)].norm() > cut {
                    match hit {
                        Some(beta) if beta != owner[k] => {
                            return Err(Error::Gauge(format!(
                                "block-structure violation: row {} mixes SJEDs {} and {}",
                                j + 1,
                                beta + 1,
                                owner[k] + 1
                            )))
                        }
                        _ => hit = Some(owner[k]),
                    }
                }
            }
            match hit {
                Some(beta) => row_block.push(beta),
                None => return Err(Error::Gauge(format!("row {} of the isometry vanishes", j + 1))),
            }
        }
        let mut target_blocks: Vec<Vec<usize>> = Vec::new();
        let mut block_map = Vec::new();
        for (j, &beta) in row_block.iter().enumerate() {
            match block_map.iter().position(|&b| b == beta) {
                Some(alpha) => target_blocks[alpha].push(j),
                None => {
                    block_map.push(beta);
                    target_blocks.push(vec![j]);
                }
            }
        }
        Ok(Self {
            matrix,
            source_blocks,
            target_blocks,
            block_map,
        })
    }

    pub fn identity(source_blocks: Vec<Vec<usize>>) -> Self {
        let n = source_blocks.iter().map(Vec::len).sum();
        let mut target_blocks = source_blocks.clone();
        let mut order: Vec<usize> = (0..source_blocks.len()).collect();
        order.sort_by_key(|&b| source_blocks[b].iter().min().copied());
        target_blocks.sort_by_key(|b| b.iter().min().copied());
        Self {
            matrix: linalg::identity(n),
            source_blocks,
            target_blocks,
            block_map: order,
        }
    }

    /// Random block isometry over `source_blocks`: each source block of size
    /// `m` feeds a target block of `m..=m + max_extra` rows, target blocks are
    /// interleaved at random.
    pub fn random<R: Rng + ?Sized>(source_blocks: Vec<Vec<usize>>, max_extra: usize, rng: &mut R) -> Self {
        let cols: usize = source_blocks.iter().map(Vec::len).sum();
        let sizes: Vec<usize> = source_blocks
            .iter()
            .map(|b| b.len() + rng.random_range(0..=max_extra))
            .collect();
        let rows: usize = sizes.iter().sum();
        let mut labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(beta, &n)| std::iter::repeat_n(beta, n))
            .collect();
        labels.shuffle(rng);
        let mut matrix = CMatrix::zeros(rows, cols);
        for (beta, src) in source_blocks.iter().enumerate() {
            let tgt: Vec<usize> = (0..rows).filter(|&j| labels[j] == beta).collect();
            let v = random_isometry(tgt.len(), src.len(), rng);
            for (a, &j) in tgt.iter().enumerate() {
                for (b, &k) in src.iter().enumerate() {
                    matrix[(j, k)] = v[(a, b)];
                }
            }
        }
        Self::from_matrix(matrix, source_blocks, &Tolerance::default()).expect("random block isometry is well formed")
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn source_blocks(&self) -> &[Vec<usize>] {
        &self.source_blocks
    }

    pub fn target_blocks(&self) -> &[Vec<usize>] {
        &self.target_blocks
    }

    pub fn block_map(&self) -> &[usize] {
        &self.block_map
    }

    /// `V^(α)`: rows `S_α`, columns `S'_{block_map[α]}`.
    pub fn sub_isometry(&self, alpha: usize) -> CMatrix {
        let rows = &self.target_blocks[alpha];
        let cols = &self.source_blocks[self.block_map[alpha]];
        CMatrix::from_fn(rows.len(), cols.len(), |a, b| self.matrix[(rows[a], cols[b])])
    }

    pub fn to_document(&self) -> BlockIsometryDocument {
        BlockIsometryDocument {
            matrix: format::matrix_to_json(&self.matrix),
            source_blocks: self.source_blocks.clone(),
            target_blocks: self.target_blocks.clone(),
            block_map: self.block_map.clone(),
        }
    }

    /// Rebuild from a document; target blocks and the block map are
    /// re-derived from the matrix and must agree with the document if given.
    pub fn from_document(doc: &BlockIsometryDocument, tol: &Tolerance) -> Result<Self> {
        let m = format::json_to_matrix(&doc.matrix, "matrix")?;
        let iso = Self::from_matrix(m, doc.source_blocks.clone(), tol)?;
        if !doc.target_blocks.is_empty() && doc.target_blocks != iso.target_blocks {
            return Err(Error::Gauge("target_blocks disagree with the matrix".into()));
        }
        if !doc.block_map.is_empty() && doc.block_map != iso.block_map {
            return Err(Error::Gauge("block_map disagrees with the matrix".into()));
        }
        Ok(iso)
    }
}

/// JSON form of a [`BlockIsometry`]; indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockIsometryDocument {
    pub matrix: format::JsonMatrix,
    #[serde(with = "format::one_based_nested")]
    pub source_blocks: Vec<Vec<usize>>,
    #[serde(default, with = "format::one_based_nested")]
    pub target_blocks: Vec<Vec<usize>>,
    #[serde(default, with = "format::one_based")]
    pub block_map: Vec<usize>,
}

/// Each block of `part` uses as few operators as its composite action allows.
fn ensure_minimal(part: &SjedPartition, tol: &Tolerance) -> Result<()> {
    for (beta, b) in part.blocks.iter().enumerate() {
        let minimal = match &b.kind {
            SjedKind::Reset { gamma_op, .. } => linalg::numerical_rank(gamma_op, tol) == b.indices.len(),
            SjedKind::NonReset { .. } => b.indices.len() == 1,
        };
        if !minimal {
            return Err(Error::Gauge(format!(
                "SJED {} is not minimally represented; minimize the representation first",
                beta + 1
            )));
        }
    }
    Ok(())
}

/// `H + r𝟙` and `J_j = Σ_k V_jk J'_k`.
pub fn apply_gauge(rep_min: &Representation, iso: &BlockIsometry, r: f64, tol: &Tolerance) -> Result<Representation> {
    rep_min.ensure_valid()?;
    let part = sjed::partition(rep_min, tol)?;
    ensure_minimal(&part, tol)?;
    if iso.matrix.ncols() != rep_min.num_jumps() {
        return Err(Error::DimensionMismatch(format!(
            "isometry has {} columns, representation has {} jumps",
            iso.matrix.ncols(),
            rep_min.num_jumps()
        )));
    }
    let defect = isometry_defect(&iso.matrix);
    if defect > ISOMETRY_TOL.max(tol.atol) {
        return Err(Error::Gauge(format!(
            "matrix is not an isometry (‖V†V − 𝟙‖ = {defect:.3e})"
        )));
    }
    let mut expected = part.block_indices();
    let mut given = iso.source_blocks.clone();
    expected.sort();
    given.iter_mut().for_each(|b| b.sort());
    given.sort();
    if expected != given {
        return Err(Error::Gauge(
            "block-structure violation: isometry column blocks differ from the SJED partition".into(),
        ));
    }
    let d = rep_min.dim();
    let jumps: Vec<CMatrix> = (0..iso.matrix.nrows())
        .map(|j| {
            let mut acc = CMatrix::zeros(d, d);
            for (k, jk) in rep_min.jumps().iter().enumerate() {
                let v = iso.matrix[(j, k)];
                if v != C64::from(0.0) {
                    acc += jk * v;
                }
            }
            acc
        })
        .collect();
    let out = Representation::new(
        format!("{}-gauge", rep_min.label()),
        rep_min.hamiltonian() + linalg::identity(d) * C64::from(r),
        jumps,
    );
    out.ensure_valid()?;
    let verdict = check_theorem1(rep_min, &out, tol)?;
    if !verdict.holds {
        return Err(Error::Gauge(format!(
            "gauge output is not trajectory-equivalent: {}",
            verdict.diagnostics.join("; ")
        )));
    }
    Ok(out)
}

/// Recover `V` with `rep = apply_gauge(rep_min, V, r)` by per-block least
/// squares on the vectorized jump operators.
pub fn extract_isometry(rep_min: &Representation, rep: &Representation, tol: &Tolerance) -> Result<BlockIsometry> {
    let verdict = check_theorem1(rep_min, rep, tol)?;
    let Some(perm_c) = verdict.perm_c.filter(|_| verdict.holds) else {
        return Err(Error::NotEquivalent(verdict.diagnostics.join("; ")));
    };
    let part_min = sjed::partition(rep_min, tol)?;
    ensure_minimal(&part_min, tol)?;
    let part = sjed::partition(rep, tol)?;
    let mut matrix = CMatrix::zeros(rep.num_jumps(), rep_min.num_jumps());
    let mut worst = 0.0f64;
    for (alpha, block) in part.blocks.iter().enumerate() {
        let src = &part_min.blocks[perm_c[alpha]].indices;
        let dd = rep.dim() * rep.dim();
        let mut basis = CMatrix::zeros(dd, src.len());
        for (b, &k) in src.iter().enumerate() {
            basis.set_column(b, &vectorize(&rep_min.jumps()[k]));
        }
        for &j in &block.indices {
            let target = vectorize(&rep.jumps()[j]);
            let x = linalg::least_squares(&basis, &target, 1e-12)?;
            let scale = target.norm().max(1.0);
            worst = worst.max((&basis * &x - &target).norm() / scale);
            for (b, &k) in src.iter().enumerate() {
                matrix[(j, k)] = x[b];
            }
        }
    }
    if worst > tol.threshold(1.0).max(1e-10) {
        return Err(Error::Numerical(format!(
            "least-squares residual {worst:.3e} too large"
        )));
    }
    BlockIsometry::from_matrix(matrix, part_min.block_indices(), tol)
}
