//! Decision procedures for when two representations share a master
//! equation, an unlabelled trajectory ensemble, a labelled one (up to a
//! relabelling of jumps and phases) or a partially-labelled one (up to a
//! relabelling of SJEDs).
//!
//! Throughout, `rep_a` plays the untilded role and `rep_b` the tilded one:
//! a block permutation `perm_c` satisfies `Ã_α = A_{perm_c[α]}` and a jump
//! permutation `perm` satisfies `J̃_k = e^{iφ_k} J_{perm[k]}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format;
use crate::linalg::{self, identity_shift, proportionality_coefficient, CMatrix, Tolerance};
use crate::representation::Representation;
use crate::sjed::{self, SjedPartition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Verdict {
    pub holds: bool,
    pub shift_r: Option<f64>,
    #[serde(with = "format::one_based_opt")]
    pub perm_c: Option<Vec<usize>>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMatching {
    #[serde(with = "format::one_based")]
    pub perm: Vec<usize>,
    /// Radians in `(−π, π]`.
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Verdict {
    pub holds: bool,
    pub shift_r: Option<f64>,
    pub matchings: Vec<JumpMatching>,
    /// More than one valid jump permutation exists.
    pub multiple: bool,
    /// Enumeration stopped at the cap.
    pub truncated: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Verdict {
    pub holds: bool,
    pub shift_r: Option<f64>,
    #[serde(with = "format::one_based_opt")]
    pub perm_c: Option<Vec<usize>>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub label_a: String,
    pub label_b: String,
    pub same_qme: bool,
    pub theorem1: Theorem1Verdict,
    pub theorem2: Theorem2Verdict,
    pub theorem3: Theorem3Verdict,
    pub diagnostics: Vec<String>,
}

/// How many jump permutations [`check_theorem2`] enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchingOptions {
    pub enumerate_all: bool,
    pub cap: usize,
}

impl Default for MatchingOptions {
    fn default() -> Self {
        Self {
            enumerate_all: false,
            cap: 10_000,
        }
    }
}

pub fn same_liouvillian(rep_a: &Representation, rep_b: &Representation, tol: &Tolerance) -> Result<bool> {
    if rep_a.dim() != rep_b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dimension {} vs {}",
            rep_a.dim(),
            rep_b.dim()
        )));
    }
    let la = rep_a.liouvillian_matrix()?;
    let lb = rep_b.liouvillian_matrix()?;
    Ok(tol.matrices_close(&la.matrix, &lb.matrix))
}

/// Real `r` with `H_b = H_a + r𝟙`, if any.
pub fn hamiltonian_shift(rep_a: &Representation, rep_b: &Representation, tol: &Tolerance) -> Option<f64> {
    if rep_a.dim() != rep_b.dim() {
        return None;
    }
    let diff = rep_b.hamiltonian() - rep_a.hamiltonian();
    let z = identity_shift(&diff, tol)?;
    (z.im.abs() <= tol.atol).then_some(z.re)
}

fn composite_actions(rep: &Representation, part: &SjedPartition) -> Result<Vec<CMatrix>> {
    part.blocks.iter().map(|b| sjed::composite_action(rep, b)).collect()
}

/// Match each block of `b` to the block of `a` with the same composite
/// action. Returns the matching or the reasons it does not exist.
fn match_blocks(
    actions_a: &[CMatrix],
    actions_b: &[CMatrix],
    tol: &Tolerance,
) -> std::result::Result<Vec<usize>, Vec<String>> {
    let mut perm = Vec::with_capacity(actions_b.len());
    let mut used = vec![false; actions_a.len()];
    let mut problems = Vec::new();
    for (alpha, ab) in actions_b.iter().enumerate() {
        let hits: Vec<usize> = actions_a
            .iter()
            .enumerate()
            .filter(|(_, aa)| tol.matrices_close(aa, ab))
            .map(|(beta, _)| beta)
            .collect();
        match hits.as_slice() {
            [] => problems.push(format!(
                "SJED {} of B has no SJED of A with the same composite action",
                alpha + 1
            )),
            [beta] if used[*beta] => problems.push(format!(
                "SJED {} of A matched twice (second time by SJED {} of B)",
                beta + 1,
                alpha + 1
            )),
            [beta] => {
                used[*beta] = true;
                perm.push(*beta);
            }
            _ => problems.push(format!(
                "SJED {} of B matches several SJEDs of A; partition not maximal",
                alpha + 1
            )),
        }
    }
    if problems.is_empty() {
        Ok(perm)
    } else {
        Err(problems)
    }
}

fn shift_diagnostic(rep_a: &Representation, rep_b: &Representation, tol: &Tolerance) -> Option<String> {
    match hamiltonian_shift(rep_a, rep_b, tol) {
        Some(_) => None,
        None => Some("Hamiltonians differ by more than a real multiple of the identity".into()),
    }
}

/// Equality of the unravelled generators: `H_b = H_a + r𝟙` and the SJED
/// composite actions agree up to a relabelling of SJEDs.
pub fn check_theorem1(rep_a: &Representation, rep_b: &Representation, tol: &Tolerance) -> Result<Theorem1Verdict> {
    rep_a.ensure_valid()?;
    rep_b.ensure_valid()?;
    let fail = |diagnostics: Vec<String>, shift_r| Theorem1Verdict {
        holds: false,
        shift_r,
        perm_c: None,
        diagnostics,
    };
    if rep_a.dim() != rep_b.dim() {
        return Ok(fail(
            vec![format!("dimension mismatch ({} vs {})", rep_a.dim(), rep_b.dim())],
            None,
        ));
    }
    if !same_liouvillian(rep_a, rep_b, tol)? {
        return Ok(fail(vec!["different QME".into()], None));
    }
    let shift_r = hamiltonian_shift(rep_a, rep_b, tol);
    let mut diagnostics: Vec<String> = shift_diagnostic(rep_a, rep_b, tol).into_iter().collect();
    let pa = sjed::partition(rep_a, tol)?;
    let pb = sjed::partition(rep_b, tol)?;
    if pa.d_c() != pb.d_c() {
        diagnostics.push(format!("SJED counts differ ({} vs {})", pa.d_c(), pb.d_c()));
        return Ok(fail(diagnostics, shift_r));
    }
    let perm = match match_blocks(&composite_actions(rep_a, &pa)?, &composite_actions(rep_b, &pb)?, tol) {
        Ok(p) => Some(p),
        Err(problems) => {
            diagnostics.extend(problems);
            None
        }
    };
    Ok(Theorem1Verdict {
        holds: diagnostics.is_empty(),
        shift_r,
        perm_c: perm,
        diagnostics,
    })
}

/// Equivalence of partially-labelled dynamics under a given SJED
/// relabelling, or under any relabelling when `perm_c` is `None`.
pub fn check_theorem3(
    rep_a: &Representation,
    rep_b: &Representation,
    tol: &Tolerance,
    perm_c: Option<&[usize]>,
) -> Result<Theorem3Verdict> {
    rep_a.ensure_valid()?;
    rep_b.ensure_valid()?;
    let Some(perm) = perm_c else {
        let v = check_theorem1(rep_a, rep_b, tol)?;
        return Ok(Theorem3Verdict {
            holds: v.holds,
            shift_r: v.shift_r,
            perm_c: v.perm_c,
            diagnostics: v.diagnostics,
        });
    };
    if rep_a.dim() != rep_b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dimension {} vs {}",
            rep_a.dim(),
            rep_b.dim()
        )));
    }
    let pa = sjed::partition(rep_a, tol)?;
    let pb = sjed::partition(rep_b, tol)?;
    if perm.len() != pb.d_c() {
        return Err(Error::InvalidInput(format!(
            "SJED permutation has length {}, representation B has {} SJEDs",
            perm.len(),
            pb.d_c()
        )));
    }
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidInput("SJED permutation is not a permutation".into()));
        }
    }
    let shift_r = hamiltonian_shift(rep_a, rep_b, tol);
    let mut diagnostics: Vec<String> = shift_diagnostic(rep_a, rep_b, tol).into_iter().collect();
    if pa.d_c() != pb.d_c() {
        diagnostics.push(format!("SJED counts differ ({} vs {})", pa.d_c(), pb.d_c()));
    } else {
        let aa = composite_actions(rep_a, &pa)?;
        let ab = composite_actions(rep_b, &pb)?;
        for (alpha, &beta) in perm.iter().enumerate() {
            if !tol.matrices_close(&ab[alpha], &aa[beta]) {
                diagnostics.push(format!(
                    "composite action of SJED {} of B differs from SJED {} of A",
                    alpha + 1,
                    beta + 1
                ));
            }
        }
    }
    Ok(Theorem3Verdict {
        holds: diagnostics.is_empty(),
        shift_r,
        perm_c: Some(perm.to_vec()),
        diagnostics,
    })
}

/// Bipartite graph of admissible `J̃_k = e^{iφ}J_j` pairs.
struct PhaseGraph {
    /// `edges[k]` lists `(j, φ)` for jump `k` of B.
    edges: Vec<Vec<(usize, f64)>>,
}

impl PhaseGraph {
    fn build(rep_a: &Representation, rep_b: &Representation, tol: &Tolerance) -> Result<Self> {
        let mut edges = Vec::with_capacity(rep_b.num_jumps());
        for jb in rep_b.jumps() {
            let mut row = Vec::new();
            for (j, ja) in rep_a.jumps().iter().enumerate() {
                if let Some(lambda) = proportionality_coefficient(jb, ja, tol)? {
                    if (lambda.norm() - 1.0).abs() <= tol.threshold(1.0) {
                        row.push((j, linalg::wrap_phase(lambda.arg())));
                    }
                }
            }
            edges.push(row);
        }
        Ok(Self { edges })
    }

    /// Kuhn's augmenting paths on the rows in `free_rows` avoiding `used`
    /// columns; true if every such row can be matched.
    fn has_perfect_matching(&self, free_rows: &[usize], used: &[bool]) -> bool {
        let ncols = used.len();
        let mut owner: Vec<Option<usize>> = vec![None; ncols];
        fn augment(g: &PhaseGraph, row: usize, used: &[bool], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
            for &(col, _) in &g.edges[row] {
                if used[col] || seen[col] {
                    continue;
                }
                seen[col] = true;
                if owner[col].is_none_or(|r| augment(g, r, used, seen, owner)) {
                    owner[col] = Some(row);
                    return true;
                }
            }
            false
        }
        free_rows.iter().all(|&row| {
            let mut seen = vec![false; ncols];
            augment(self, row, used, &mut seen, &mut owner)
        })
    }

    /// Enumerate perfect matchings, at most `cap`. Every branch explored is
    /// pruned by a feasibility check, so each leaf is a solution.
    fn enumerate(&self, cap: usize) -> (Vec<JumpMatching>, bool) {
        let n = self.edges.len();
        let mut out = Vec::new();
        let mut used = vec![false; n];
        let mut perm = vec![0; n];
        let mut phases = vec![0.0; n];
        let mut truncated = false;
        let all_rows: Vec<usize> = (0..n).collect();
        if !self.has_perfect_matching(&all_rows, &used) {
            return (out, false);
        }
        self.recurse(0, &mut used, &mut perm, &mut phases, &mut out, cap, &mut truncated);
        (out, truncated)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        row: usize,
        used: &mut [bool],
        perm: &mut [usize],
        phases: &mut [f64],
        out: &mut Vec<JumpMatching>,
        cap: usize,
        truncated: &mut bool,
    ) {
        let n = self.edges.len();
        if row == n {
            if out.len() < cap {
                out.push(JumpMatching {
                    perm: perm.to_vec(),
                    phases: phases.to_vec(),
                });
            } else {
                *truncated = true;
            }
            return;
        }
        let rest: Vec<usize> = (row + 1..n).collect();
        for &(col, phi) in &self.edges[row] {
            if *truncated || used[col] {
                continue;
            }
            used[col] = true;
            if self.has_perfect_matching(&rest, used) {
                perm[row] = col;
                phases[row] = phi;
                self.recurse(row + 1, used, perm, phases, out, cap, truncated);
            }
            used[col] = false;
        }
    }
}

/// Equivalence of labelled dynamics: `H_b = H_a + r𝟙` and
/// `J̃_k = e^{iφ_k} J_{perm[k]}` for some jump permutation.
pub fn check_theorem2(
    rep_a: &Representation,
    rep_b: &Representation,
    tol: &Tolerance,
    opts: &MatchingOptions,
) -> Result<Theorem2Verdict> {
    rep_a.ensure_valid()?;
    rep_b.ensure_valid()?;
    let mut verdict = Theorem2Verdict {
        holds: false,
        shift_r: None,
        matchings: Vec::new(),
        multiple: false,
        truncated: false,
        diagnostics: Vec::new(),
    };
    if rep_a.dim() != rep_b.dim() {
        verdict
            .diagnostics
            .push(format!("dimension mismatch ({} vs {})", rep_a.dim(), rep_b.dim()));
        return Ok(verdict);
    }
    verdict.shift_r = hamiltonian_shift(rep_a, rep_b, tol);
    verdict.diagnostics.extend(shift_diagnostic(rep_a, rep_b, tol));
    if rep_a.num_jumps() != rep_b.num_jumps() {
        verdict.diagnostics.push(format!(
            "jump counts differ ({} vs {})",
            rep_a.num_jumps(),
            rep_b.num_jumps()
        ));
        return Ok(verdict);
    }
    let graph = PhaseGraph::build(rep_a, rep_b, tol)?;
    // one extra matching is enough to flag non-uniqueness
    let cap = if opts.enumerate_all { opts.cap.max(1) } else { 2 };
    let (mut matchings, truncated) = graph.enumerate(cap);
    if matchings.is_empty() {
        verdict
            .diagnostics
            .push("no permutation relates the jump operators up to phases".into());
        return Ok(verdict);
    }
    verdict.multiple = matchings.len() > 1 || truncated;
    verdict.truncated = opts.enumerate_all && truncated;
    if !opts.enumerate_all {
        matchings.truncate(1);
    }
    verdict.matchings = matchings;
    verdict.holds = verdict.diagnostics.is_empty();
    Ok(verdict)
}

/// All three checks plus master-equation equality.
pub fn compare(
    rep_a: &Representation,
    rep_b: &Representation,
    tol: &Tolerance,
    perm_c: Option<&[usize]>,
    opts: &MatchingOptions,
) -> Result<EquivalenceReport> {
    let same_qme = rep_a.dim() == rep_b.dim() && same_liouvillian(rep_a, rep_b, tol)?;
    let theorem1 = check_theorem1(rep_a, rep_b, tol)?;
    let theorem2 = check_theorem2(rep_a, rep_b, tol, opts)?;
    let theorem3 = check_theorem3(rep_a, rep_b, tol, perm_c)?;
    let mut diagnostics = Vec::new();
    if !same_qme {
        diagnostics.push("representations generate different master equations".into());
    }
    for (name, holds, diags) in [
        ("theorem1", theorem1.holds, &theorem1.diagnostics),
        ("theorem2", theorem2.holds, &theorem2.diagnostics),
        ("theorem3", theorem3.holds, &theorem3.diagnostics),
    ] {
        if !holds {
            diagnostics.extend(diags.iter().map(|d| format!("{name}: {d}")));
        }
    }
    Ok(EquivalenceReport {
        label_a: rep_a.label().to_string(),
        label_b: rep_b.label().to_string(),
        same_qme,
        theorem1,
        theorem2,
        theorem3,
        diagnostics,
    })
}
