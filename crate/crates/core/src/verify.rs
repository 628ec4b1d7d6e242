//! Cross-checks of the algebraic verdicts: pointwise comparison of jump
//! rates and destinations, ensemble means against the master equation, and
//! statistical comparison of two simulated ensembles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equivalence::check_theorem1;
use crate::error::{Error, Result};
use crate::format;
use crate::linalg::{self, random_pure_state_with, rng_from_seed, CMatrix, PureState, Tolerance};
use crate::representation::Representation;
use crate::sjed::{self, SjedPartition};
use crate::stats::{self, chi_square_homogeneity, ks_two_sample};
use crate::trajectory::{coarse_grain, Ensemble, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMatching {
    /// One SJED permutation for every state.
    Fixed,
    /// Each block paired with its nearest counterpart at every state.
    PerState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFieldReport {
    pub n_states: usize,
    pub matching: BlockMatching,
    #[serde(with = "format::one_based_opt")]
    pub perm_c: Option<Vec<usize>>,
    /// `max |Σ_k r̃_k(ψ) − Σ_k r_k(ψ)|`
    pub max_total_rate_dev: f64,
    /// `max |Tr Ã_α(ψ) − Tr A_β(ψ)|` over matched blocks.
    pub max_block_rate_dev: f64,
    /// Largest trace distance between matched normalized destinations.
    pub max_destination_dev: f64,
    /// `max ‖Ã_α(ψ) − A_β(ψ)‖₁` over matched blocks.
    pub max_block_action_dev: f64,
    pub worst_state: PureState,
}

fn trace_norm(m: &CMatrix) -> f64 {
    // the block outputs are Hermitian
    let h = (m + m.adjoint()) * linalg::C64::from(0.5);
    linalg::hermitian_eigen(&h).0.iter().map(|v| v.abs()).sum()
}

fn block_outputs(rep: &Representation, part: &SjedPartition, psi: &PureState) -> Vec<CMatrix> {
    let rho = psi.density();
    part.blocks
        .iter()
        .map(|b| {
            let ops: Vec<CMatrix> = b.indices.iter().map(|&k| rep.jumps()[k].clone()).collect();
            linalg::apply_kraus(&ops, &rho)
        })
        .collect()
}

#[derive(Default, Clone, Copy)]
struct PairDev {
    rate: f64,
    destination: f64,
    action: f64,
}

fn pair_dev(a: &CMatrix, b: &CMatrix, tol: &Tolerance) -> PairDev {
    let ra = a.trace().re;
    let rb = b.trace().re;
    let destination = if ra > tol.atol && rb > tol.atol {
        linalg::trace_distance(&(a / linalg::C64::from(ra)), &(b / linalg::C64::from(rb)))
    } else {
        0.0
    };
    PairDev {
        rate: (ra - rb).abs(),
        destination,
        action: trace_norm(&(a - b)),
    }
}

fn validate_perm(perm: &[usize], d_a: usize, d_b: usize) -> Result<()> {
    if d_a != d_b || perm.len() != d_b {
        return Err(Error::InvalidInput(format!(
            "SJED permutation of length {} does not match SJED counts {d_a} and {d_b}",
            perm.len()
        )));
    }
    let mut seen = vec![false; d_a];
    for &p in perm {
        if p >= d_a || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidInput("SJED permutation is not a permutation".into()));
        }
    }
    Ok(())
}

/// Compare rates and SJED outputs of two representations on `n_states`
/// Haar-random states. Without `perm_c` the permutation found by the
/// Theorem-1 check is used; if none exists, blocks are paired per state
/// with their nearest counterpart in both directions.
pub fn rate_field_scan(
    rep_a: &Representation,
    rep_b: &Representation,
    perm_c: Option<&[usize]>,
    n_states: usize,
    seed: u64,
    tol: &Tolerance,
) -> Result<RateFieldReport> {
    if rep_a.dim() != rep_b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dimension {} vs {}",
            rep_a.dim(),
            rep_b.dim()
        )));
    }
    if n_states == 0 {
        return Err(Error::InvalidInput("n_states must be positive".into()));
    }
    let pa = sjed::partition(rep_a, tol)?;
    let pb = sjed::partition(rep_b, tol)?;
    let perm = match perm_c {
        Some(p) => {
            validate_perm(p, pa.d_c(), pb.d_c())?;
            Some(p.to_vec())
        }
        None => {
            let v = check_theorem1(rep_a, rep_b, tol)?;
            v.perm_c.filter(|_| v.holds)
        }
    };
    let mut rng = rng_from_seed(seed);
    let mut report = RateFieldReport {
        n_states,
        matching: if perm.is_some() {
            BlockMatching::Fixed
        } else {
            BlockMatching::PerState
        },
        perm_c: perm.clone(),
        max_total_rate_dev: 0.0,
        max_block_rate_dev: 0.0,
        max_destination_dev: 0.0,
        max_block_action_dev: 0.0,
        worst_state: PureState::basis(rep_a.dim(), 0)?,
    };
    let mut worst_score = -1.0;
    for _ in 0..n_states {
        let psi = random_pure_state_with(rep_a.dim(), &mut rng)?;
        let total_a: f64 = rep_a.jump_rates(&psi).iter().sum();
        let total_b: f64 = rep_b.jump_rates(&psi).iter().sum();
        let oa = block_outputs(rep_a, &pa, &psi);
        let ob = block_outputs(rep_b, &pb, &psi);
        let pairs: Vec<PairDev> = match &perm {
            Some(p) => ob.iter().zip(p).map(|(b, &beta)| pair_dev(&oa[beta], b, tol)).collect(),
            None => {
                let nearest = |x: &CMatrix, ys: &[CMatrix]| {
                    ys.iter()
                        .map(|y| pair_dev(y, x, tol))
                        .min_by(|u, v| u.action.total_cmp(&v.action))
                        .unwrap_or(PairDev {
                            rate: x.trace().re,
                            destination: 0.0,
                            action: trace_norm(x),
                        })
                };
                ob.iter()
                    .map(|b| nearest(b, &oa))
                    .chain(oa.iter().map(|a| nearest(a, &ob)))
                    .collect()
            }
        };
        let total_dev = (total_a - total_b).abs();
        report.max_total_rate_dev = report.max_total_rate_dev.max(total_dev);
        let mut score = total_dev;
        for d in &pairs {
            report.max_block_rate_dev = report.max_block_rate_dev.max(d.rate);
            report.max_destination_dev = report.max_destination_dev.max(d.destination);
            report.max_block_action_dev = report.max_block_action_dev.max(d.action);
            score = score.max(d.action);
        }
        if score > worst_score {
            worst_score = score;
            report.worst_state = psi;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStateReport {
    pub n_trajectories: usize,
    pub times: Vec<f64>,
    /// `max_ij |ρ̂(t)_ij − (e^{Lt}ρ0)_ij|` per time.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    /// `4/√N`
    pub bound: f64,
    pub passes: bool,
}

/// Sample mean of `|ψ_t⟩⟨ψ_t|` over the ensemble.
pub fn mean_density(sim: &Simulator, ensemble: &Ensemble, t: f64) -> Result<CMatrix> {
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let states = ensemble
        .trajectories
        .par_iter()
        .map(|traj| sim.state_at(traj, t).map(|s| s.density()))
        .collect::<Result<Vec<_>>>()?;
    let d = sim.representation().dim();
    let sum = states.iter().fold(CMatrix::zeros(d, d), |acc, r| acc + r);
    Ok(sum / linalg::C64::from(ensemble.len() as f64))
}

/// Mean state of an ensemble generated by `generator` against `e^{Lt}ρ0`
/// with the Liouvillian of `reference`.
pub fn mean_state_check_against(
    ensemble: &Ensemble,
    generator: &Representation,
    reference: &Representation,
    times: &[f64],
) -> Result<MeanStateReport> {
    let first = ensemble
        .trajectories
        .first()
        .ok_or_else(|| Error::InvalidInput("empty ensemble".into()))?;
    if ensemble
        .trajectories
        .iter()
        .any(|t| t.initial_state != first.initial_state)
    {
        return Err(Error::InvalidInput("ensemble has more than one initial state".into()));
    }
    let sim = Simulator::new(generator)?;
    let liouvillian = reference.liouvillian_matrix()?;
    let rho0 = first.initial_state.density();
    let deviations = times
        .iter()
        .map(|&t| {
            let mc = mean_density(&sim, ensemble, t)?;
            let exact = liouvillian.evolve(&rho0, t);
            Ok((mc - exact).iter().map(|z| z.norm()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let bound = 4.0 / (ensemble.len() as f64).sqrt();
    Ok(MeanStateReport {
        n_trajectories: ensemble.len(),
        times: times.to_vec(),
        deviations,
        max_deviation,
        bound,
        passes: max_deviation < bound,
    })
}

pub fn mean_state_check(ensemble: &Ensemble, rep: &Representation, times: &[f64]) -> Result<MeanStateReport> {
    mean_state_check_against(ensemble, rep, rep, times)
}

/// Equivalence level checked by [`compare_ensembles`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Unlabelled trajectories.
    T1,
    /// Labelled trajectories, up to a jump permutation.
    T2,
    /// Partially-labelled trajectories, up to an SJED permutation.
    T3,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t1" => Ok(Self::T1),
            "t2" => Ok(Self::T2),
            "t3" => Ok(Self::T3),
            _ => Err(Error::InvalidInput(format!(
                "unknown level {s:?} (expected t1, t2 or t3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub name: String,
    #[serde(with = "format::matrix")]
    pub matrix: CMatrix,
}

impl Observable {
    pub fn new(name: impl Into<String>, matrix: CMatrix) -> Self {
        Self {
            name: name.into(),
            matrix,
        }
    }

    /// `|k⟩⟨k|`
    pub fn projector(dim: usize, k: usize) -> Self {
        Self::new(format!("P{k}"), linalg::dyad(dim, k, k))
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub level: Level,
    pub observables: Vec<Observable>,
    pub times: Vec<f64>,
    /// SJED permutation for `t3`, jump permutation for `t2`; identity if absent.
    pub perm: Option<Vec<usize>>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub observable: String,
    pub time: f64,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountEntry {
    pub label: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleComparison {
    pub level: Level,
    pub n_a: usize,
    pub n_b: usize,
    pub ks_tests: Vec<KsEntry>,
    pub count_tests: Vec<CountEntry>,
    pub alpha: f64,
    /// `alpha` divided by the number of tests.
    pub per_test_alpha: f64,
    pub comparable: bool,
    pub verdict: bool,
    pub diagnostics: Vec<String>,
}

/// One simulated ensemble together with the representation that produced it.
#[derive(Clone, Copy)]
pub struct EnsembleInput<'a> {
    pub rep: &'a Representation,
    pub ensemble: &'a Ensemble,
}

/// Expectation values are compared on this grid so that rounding noise does
/// not split atoms of the distribution (e.g. states reset to an eigenstate).
pub const OBSERVABLE_RESOLUTION: f64 = 1e-9;

fn quantize(x: f64) -> f64 {
    (x / OBSERVABLE_RESOLUTION).round() * OBSERVABLE_RESOLUTION
}

fn expectation_samples(sim: &Simulator, ens: &Ensemble, obs: &[Observable], t: f64) -> Result<Vec<Vec<f64>>> {
    let per_traj = ens
        .trajectories
        .par_iter()
        .map(|traj| {
            let psi = sim.state_at(traj, t)?;
            Ok(obs
                .iter()
                .map(|o| quantize(psi.expectation(&o.matrix).re))
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..obs.len())
        .map(|i| per_traj.iter().map(|v| v[i]).collect())
        .collect())
}

fn column(counts: &[Vec<usize>], i: usize) -> Vec<usize> {
    counts.iter().map(|c| c[i]).collect()
}

/// Pair of count tables `(A, B)` and the columns to compare.
fn per_column_tests(
    label: &str,
    counts_a: &[Vec<usize>],
    counts_b: &[Vec<usize>],
    perm: &[usize],
) -> Result<Vec<CountEntry>> {
    perm.iter()
        .enumerate()
        .map(|(i, &j)| {
            let r = chi_square_homogeneity(&column(counts_a, j), &column(counts_b, i))?;
            Ok(CountEntry {
                label: format!("{label} {} of B vs {} of A", i + 1, j + 1),
                statistic: r.statistic,
                p_value: r.p_value,
            })
        })
        .collect()
}

fn resolve_perm(
    perm: &Option<Vec<usize>>,
    n_a: usize,
    n_b: usize,
    what: &str,
) -> std::result::Result<Vec<usize>, String> {
    if n_a != n_b {
        return Err(format!(
            "{what} counts differ ({n_a} vs {n_b}); records are incomparable"
        ));
    }
    let p = perm.clone().unwrap_or_else(|| (0..n_b).collect());
    if p.len() != n_b {
        return Err(format!("{what} permutation has length {}, expected {n_b}", p.len()));
    }
    let mut seen = vec![false; n_a];
    for &x in &p {
        if x >= n_a || std::mem::replace(&mut seen[x], true) {
            return Err(format!("{what} permutation is not a permutation"));
        }
    }
    Ok(p)
}

/// Statistical comparison of two ensembles at the requested level.
/// Every level tests `Tr(Oψ_t)` by two-sample KS per observable and time,
/// and total jump counts by chi-square; `t2` adds per-channel counts and
/// `t3` per-SJED counts. The verdict uses a Bonferroni correction.
pub fn compare_ensembles(
    a: EnsembleInput<'_>,
    b: EnsembleInput<'_>,
    opts: &CompareOptions,
    tol: &Tolerance,
) -> Result<EnsembleComparison> {
    if a.ensemble.t_max != b.ensemble.t_max {
        return Err(Error::InvalidInput(format!(
            "mismatched horizons ({} vs {})",
            a.ensemble.t_max, b.ensemble.t_max
        )));
    }
    if a.ensemble.is_empty() || b.ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    if a.rep.dim() != b.rep.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dimension {} vs {}",
            a.rep.dim(),
            b.rep.dim()
        )));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {}",
            opts.alpha
        )));
    }
    if let Some(&t) = opts.times.iter().find(|&&t| !(0.0..=a.ensemble.t_max).contains(&t)) {
        return Err(Error::InvalidInput(format!(
            "time {t} outside [0, {}]",
            a.ensemble.t_max
        )));
    }
    let sim_a = Simulator::new(a.rep)?;
    let sim_b = Simulator::new(b.rep)?;
    let mut ks_tests = Vec::new();
    for &t in &opts.times {
        let sa = expectation_samples(&sim_a, a.ensemble, &opts.observables, t)?;
        let sb = expectation_samples(&sim_b, b.ensemble, &opts.observables, t)?;
        for (o, (xa, xb)) in opts.observables.iter().zip(sa.iter().zip(&sb)) {
            let r = ks_two_sample(xa, xb)?;
            ks_tests.push(KsEntry {
                observable: o.name.clone(),
                time: t,
                statistic: r.statistic,
                p_value: r.p_value,
            });
        }
    }
    let totals = |e: &Ensemble| -> Vec<usize> { e.trajectories.iter().map(|t| t.events.len()).collect() };
    let total = chi_square_homogeneity(&totals(a.ensemble), &totals(b.ensemble))?;
    let mut count_tests = vec![CountEntry {
        label: "total jumps".into(),
        statistic: total.statistic,
        p_value: total.p_value,
    }];
    let mut diagnostics = Vec::new();
    let mut comparable = true;
    match opts.level {
        Level::T1 => {}
        Level::T2 => match resolve_perm(&opts.perm, a.rep.num_jumps(), b.rep.num_jumps(), "jump") {
            Ok(p) => {
                let ca: Vec<_> = a.ensemble.trajectories.iter().map(|t| t.total_counts()).collect();
                let cb: Vec<_> = b.ensemble.trajectories.iter().map(|t| t.total_counts()).collect();
                count_tests.extend(per_column_tests("channel", &ca, &cb, &p)?);
            }
            Err(msg) => {
                comparable = false;
                diagnostics.push(msg);
            }
        },
        Level::T3 => {
            let pa = sjed::partition(a.rep, tol)?;
            let pb = sjed::partition(b.rep, tol)?;
            match resolve_perm(&opts.perm, pa.d_c(), pb.d_c(), "SJED") {
                Ok(p) => {
                    let coarse = |e: &Ensemble, part: &SjedPartition| -> Result<Vec<Vec<usize>>> {
                        e.trajectories
                            .iter()
                            .map(|t| Ok(coarse_grain(t, part)?.total_counts()))
                            .collect()
                    };
                    let ca = coarse(a.ensemble, &pa)?;
                    let cb = coarse(b.ensemble, &pb)?;
                    count_tests.extend(per_column_tests("SJED", &ca, &cb, &p)?);
                }
                Err(msg) => {
                    comparable = false;
                    diagnostics.push(msg);
                }
            }
        }
    }
    let m = ks_tests.len() + count_tests.len();
    let per_test_alpha = opts.alpha / m as f64;
    for k in &ks_tests {
        if k.p_value <= per_test_alpha {
            diagnostics.push(format!(
                "KS test on {} at t={} rejects (p={:.3e}, Bonferroni-adjusted {:.3e})",
                k.observable,
                k.time,
                k.p_value,
                stats::bonferroni(k.p_value, m)
            ));
        }
    }
    for c in &count_tests {
        if c.p_value <= per_test_alpha {
            diagnostics.push(format!(
                "chi-square test on {} rejects (p={:.3e}, Bonferroni-adjusted {:.3e})",
                c.label,
                c.p_value,
                stats::bonferroni(c.p_value, m)
            ));
        }
    }
    let all_pass =
        ks_tests.iter().all(|k| k.p_value > per_test_alpha) && count_tests.iter().all(|c| c.p_value > per_test_alpha);
    Ok(EnsembleComparison {
        level: opts.level,
        n_a: a.ensemble.len(),
        n_b: b.ensemble.len(),
        ks_tests,
        count_tests,
        alpha: opts.alpha,
        per_test_alpha,
        comparable,
        verdict: comparable && all_pass,
        diagnostics,
    })
}
