//! Sets of jumps with equal destinations (SJEDs).
//!
//! Two jump operators have equal destinations wherever both act nontrivially
//! exactly when they are both rank one with parallel images, or when they are
//! proportional. Each equivalence class is either a *reset* set (rank-one
//! operators `√γ_k|χ⟩⟨ξ_k|` sharing the image `χ`) or a *non-reset* set
//! (multiples of one operator of rank at least two).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format;
use crate::linalg::{
    self, fix_matrix_phase, frobenius_inner, hermitian_eigen, leading_left_singular_vector, numerical_rank, outer,
    proportionality_coefficient, superoperator_matrix, CMatrix, CVector, PureState, Tolerance, C64,
};
use crate::representation::Representation;

#[derive(Debug, Clone, PartialEq)]
pub enum SjedKind {
    /// Every member is `√γ_k|χ⟩⟨ξ_k|`; `gamma_op = Σ_k J_k†J_k`.
    Reset { chi: PureState, gamma_op: CMatrix },
    /// Every member is `λ_k·j_canonical`, `‖j_canonical‖_F = 1`,
    /// `lambda = √(Σ|λ_k|²)`; `coefficients` lists the `λ_k` in member order.
    NonReset {
        lambda: f64,
        j_canonical: CMatrix,
        coefficients: Vec<C64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SjedBlock {
    /// 0-based jump indices, ascending.
    pub indices: Vec<usize>,
    pub kind: SjedKind,
}

impl SjedBlock {
    pub fn is_reset(&self) -> bool {
        matches!(self.kind, SjedKind::Reset { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SjedPartition {
    pub blocks: Vec<SjedBlock>,
    num_jumps: usize,
}

impl SjedPartition {
    /// Number of blocks.
    pub fn d_c(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_jumps(&self) -> usize {
        self.num_jumps
    }

    /// Block containing jump `k` (both 0-based).
    pub fn block_of(&self, k: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.indices.contains(&k))
    }

    /// Map from jump index to block index.
    pub fn channel_map(&self) -> Vec<usize> {
        let mut map = vec![usize::MAX; self.num_jumps];
        for (a, b) in self.blocks.iter().enumerate() {
            for &k in &b.indices {
                map[k] = a;
            }
        }
        map
    }

    pub fn block_indices(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.indices.clone()).collect()
    }

    pub fn report(&self, tol: &Tolerance) -> PartitionReport {
        PartitionReport {
            d: self.num_jumps,
            d_c: self.d_c(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockReport {
                    indices: b.indices.clone(),
                    details: match &b.kind {
                        SjedKind::Reset { chi, gamma_op } => {
                            let (mut values, _) = hermitian_eigen(gamma_op);
                            values.reverse();
                            BlockDetails::Reset {
                                chi: chi.amplitudes().clone(),
                                gamma: gamma_op.clone(),
                                gamma_eigenvalues: values,
                                gamma_rank: numerical_rank(gamma_op, tol),
                            }
                        }
                        SjedKind::NonReset {
                            lambda,
                            j_canonical,
                            coefficients,
                        } => BlockDetails::NonReset {
                            lambda: *lambda,
                            j: j_canonical.clone(),
                            coefficients: coefficients.iter().map(|&z| format::complex_to_json(z)).collect(),
                        },
                    },
                })
                .collect(),
        }
    }
}

/// JSON form of a partition; indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub d: usize,
    pub d_c: usize,
    pub blocks: Vec<BlockReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    #[serde(with = "format::one_based")]
    pub indices: Vec<usize>,
    #[serde(flatten)]
    pub details: BlockDetails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockDetails {
    Reset {
        #[serde(with = "format::vector")]
        chi: CVector,
        #[serde(with = "format::matrix")]
        gamma: CMatrix,
        gamma_eigenvalues: Vec<f64>,
        gamma_rank: usize,
    },
    NonReset {
        lambda: f64,
        #[serde(with = "format::matrix")]
        j: CMatrix,
        coefficients: Vec<format::JsonComplex>,
    },
}

/// Per-operator data needed for pairwise JED tests.
struct OperatorProfile {
    rank: usize,
    image: Option<CVector>,
}

fn profile(op: &CMatrix, tol: &Tolerance) -> OperatorProfile {
    let rank = numerical_rank(op, tol);
    let image = (rank == 1).then(|| leading_left_singular_vector(op));
    OperatorProfile { rank, image }
}

fn images_parallel(a: &CVector, b: &CVector, tol: &Tolerance) -> bool {
    1.0 - a.dotc(b).norm() <= tol.rtol
}

fn jed_profiles(a: &CMatrix, pa: &OperatorProfile, b: &CMatrix, pb: &OperatorProfile, tol: &Tolerance) -> Result<bool> {
    if let (Some(ia), Some(ib)) = (&pa.image, &pb.image) {
        return Ok(images_parallel(ia, ib, tol));
    }
    if pa.rank != pb.rank {
        return Ok(false);
    }
    Ok(proportionality_coefficient(a, b, tol)?.is_some())
}

/// Whether `a` and `b` have equal destinations wherever both act nontrivially.
pub fn are_jed(a: &CMatrix, b: &CMatrix, tol: &Tolerance) -> Result<bool> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(Error::InvalidInput("zero jump operator".into()));
    }
    jed_profiles(a, &profile(a, tol), b, &profile(b, tol), tol)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Partition the jumps of `rep` into SJEDs, ordered by smallest member.
pub fn partition(rep: &Representation, tol: &Tolerance) -> Result<SjedPartition> {
    rep.ensure_valid()?;
    let jumps = rep.jumps();
    let n = jumps.len();
    let profiles: Vec<_> = jumps.iter().map(|j| profile(j, tol)).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if find(&mut parent, i) == find(&mut parent, j) {
                continue;
            }
            if jed_profiles(&jumps[i], &profiles[i], &jumps[j], &profiles[j], tol)? {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_to_group = vec![usize::MAX; n];
    for k in 0..n {
        let r = find(&mut parent, k);
        if root_to_group[r] == usize::MAX {
            root_to_group[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_to_group[r]].push(k);
    }
    let blocks = groups
        .into_iter()
        .map(|indices| classify(jumps, &profiles, indices))
        .collect::<Result<Vec<_>>>()?;
    Ok(SjedPartition { blocks, num_jumps: n })
}

fn classify(jumps: &[CMatrix], profiles: &[OperatorProfile], indices: Vec<usize>) -> Result<SjedBlock> {
    let first = indices[0];
    let kind = match &profiles[first].image {
        Some(image) => {
            let mut gamma_op = CMatrix::zeros(jumps[first].nrows(), jumps[first].ncols());
            for &k in &indices {
                gamma_op += jumps[k].adjoint() * &jumps[k];
            }
            SjedKind::Reset {
                chi: PureState::new(image.clone())?,
                gamma_op,
            }
        }
        None => {
            let mut j = &jumps[first] / C64::from(jumps[first].norm());
            fix_matrix_phase(&mut j);
            let coefficients: Vec<C64> = indices.iter().map(|&k| frobenius_inner(&j, &jumps[k])).collect();
            let lambda = coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            SjedKind::NonReset {
                lambda,
                j_canonical: j,
                coefficients,
            }
        }
    };
    Ok(SjedBlock { indices, kind })
}

/// Superoperator matrix of the block's summed action.
pub fn composite_action(rep: &Representation, block: &SjedBlock) -> Result<CMatrix> {
    let ops = block
        .indices
        .iter()
        .map(|&k| rep.jump(k).cloned())
        .collect::<Result<Vec<_>>>()?;
    superoperator_matrix(&ops)
}

fn lexicographic(a: &CVector, b: &CVector) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Smallest operator set with the same composite action as `block`.
///
/// Reset sets yield `√γ'_k|χ⟩⟨ξ'_k|` over the eigenpairs of `gamma_op` above
/// the rank threshold, by descending eigenvalue; non-reset sets yield
/// `λ·j_canonical`.
pub fn minimal_block_representation(block: &SjedBlock, tol: &Tolerance) -> Vec<CMatrix> {
    match &block.kind {
        SjedKind::Reset { chi, gamma_op } => {
            let (values, vectors) = hermitian_eigen(gamma_op);
            let vmax = values.iter().copied().fold(0.0, f64::max);
            let cut = tol.threshold(vmax);
            let mut pairs: Vec<(f64, CVector)> = values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > cut)
                .map(|(i, &v)| {
                    let mut xi = vectors.column(i).into_owned();
                    linalg::fix_phase(xi.as_mut_slice());
                    (v, xi)
                })
                .collect();
            pairs.sort_by(|a, b| {
                if tol.scalars_close(a.0, b.0) {
                    lexicographic(&a.1, &b.1)
                } else {
                    b.0.total_cmp(&a.0)
                }
            });
            pairs
                .into_iter()
                .map(|(v, xi)| outer(chi.amplitudes(), &xi) * C64::from(v.sqrt()))
                .collect()
        }
        SjedKind::NonReset {
            lambda, j_canonical, ..
        } => vec![j_canonical * C64::from(*lambda)],
    }
}

/// Replace each SJED by its minimal representation, keeping `H`.
pub fn minimize_representation(rep: &Representation, tol: &Tolerance) -> Result<Representation> {
    let part = partition(rep, tol)?;
    let jumps: Vec<CMatrix> = part
        .blocks
        .iter()
        .flat_map(|b| minimal_block_representation(b, tol))
        .collect();
    let out = Representation::new(format!("{}-minimal", rep.label()), rep.hamiltonian().clone(), jumps);
    let verdict = crate::equivalence::check_theorem1(rep, &out, tol)?;
    if !verdict.holds {
        return Err(Error::Numerical(format!(
            "minimized representation is not trajectory-equivalent: {}",
            verdict.diagnostics.join("; ")
        )));
    }
    Ok(out)
}

/// Settings for [`find_witness_state`].
#[derive(Debug, Clone, Copy)]
pub struct WitnessSearch {
    /// Minimum rate and minimum destination trace distance.
    pub threshold: f64,
    pub max_attempts: usize,
}

impl Default for WitnessSearch {
    fn default() -> Self {
        Self {
            threshold: 1e-6,
            max_attempts: 1000,
        }
    }
}

/// Count of conditions a candidate violates for one representation: jumps
/// with rate at most `threshold`, and pairs from distinct SJEDs whose
/// destinations are closer than `threshold` in trace distance.
fn degeneracy_count(rep: &Representation, part: &SjedPartition, psi: &PureState, threshold: f64) -> usize {
    let images: Vec<CVector> = rep.jumps().iter().map(|j| j * psi.amplitudes()).collect();
    let rates: Vec<f64> = images.iter().map(|v| v.norm_squared()).collect();
    let map = part.channel_map();
    let mut count = rates.iter().filter(|&&r| r <= threshold).count();
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            if map[i] == map[j] || rates[i] <= threshold || rates[j] <= threshold {
                continue;
            }
            let overlap = images[i].dotc(&images[j]).norm_sqr() / (rates[i] * rates[j]);
            let distance = (1.0 - overlap.min(1.0)).sqrt();
            if distance <= threshold {
                count += 1;
            }
        }
    }
    count
}

/// True when `psi` has every rate above the threshold and distinct
/// destinations across SJEDs, for both representations.
pub fn is_witness(
    rep_a: &Representation,
    rep_b: &Representation,
    psi: &PureState,
    search: &WitnessSearch,
    tol: &Tolerance,
) -> Result<bool> {
    let pa = partition(rep_a, tol)?;
    let pb = partition(rep_b, tol)?;
    Ok(degeneracy_count(rep_a, &pa, psi, search.threshold) == 0
        && degeneracy_count(rep_b, &pb, psi, search.threshold) == 0)
}

/// Find a state at which all jumps of both representations fire and all
/// SJEDs of each representation have distinct destinations.
pub fn find_witness_state(
    rep_a: &Representation,
    rep_b: &Representation,
    seed: u64,
    tol: &Tolerance,
) -> Result<PureState> {
    find_witness_state_from(rep_a, rep_b, None, seed, &WitnessSearch::default(), tol)
}

/// As [`find_witness_state`], starting from `start` when given. Degenerate
/// candidates are perturbed as `ψ + aφ` with random `φ` and shrinking `a`
/// until the number of violated conditions drops.
pub fn find_witness_state_from(
    rep_a: &Representation,
    rep_b: &Representation,
    start: Option<PureState>,
    seed: u64,
    search: &WitnessSearch,
    tol: &Tolerance,
) -> Result<PureState> {
    if rep_a.dim() != rep_b.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", rep_a.dim(), rep_b.dim())));
    }
    let pa = partition(rep_a, tol)?;
    let pb = partition(rep_b, tol)?;
    let dim = rep_a.dim();
    let count = |psi: &PureState| {
        degeneracy_count(rep_a, &pa, psi, search.threshold) + degeneracy_count(rep_b, &pb, psi, search.threshold)
    };
    let mut rng = linalg::rng_from_seed(seed);
    let mut psi = match start {
        Some(s) if s.dim() == dim => s,
        Some(s) => {
            return Err(Error::DimensionMismatch(format!(
                "start state of dimension {}",
                s.dim()
            )));
        }
        None => linalg::random_pure_state_with(dim, &mut rng)?,
    };
    let mut current = count(&psi);
    let mut attempts = 0;
    while current > 0 {
        let phi = linalg::random_pure_state_with(dim, &mut rng)?;
        let mut a = 0.5;
        while a > 1e-9 {
            attempts += 1;
            if attempts > search.max_attempts {
                return Err(Error::NoWitness(search.max_attempts));
            }
            let candidate = PureState::new(psi.amplitudes() + phi.amplitudes() * C64::from(a))?;
            let c = count(&candidate);
            if c < current {
                psi = candidate;
                current = c;
                break;
            }
            a *= 0.5;
        }
    }
    Ok(psi)
}
