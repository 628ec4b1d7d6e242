//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI};
use std::time::Instant;

use rand::Rng;
use uqd::equivalence::{check_theorem1, check_theorem2, check_theorem3, same_liouvillian, MatchingOptions};
use uqd::gauge::{apply_gauge, extract_isometry, BlockIsometry};
use uqd::linalg::{random_pure_state_with, rng_from_seed, wrap_phase, CMatrix, PureState, Tolerance, C64};
use uqd::models::*;
use uqd::sjed::{partition, SjedPartition};
use uqd::stats::ks_one_sample;
use uqd::trajectory::simulate_ensemble;
use uqd::verify::{compare_ensembles, mean_state_check, CompareOptions, EnsembleInput, Level, Observable};
use uqd::Representation;

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn tol() -> Tolerance {
    Tolerance::default()
}

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn layout(part: &SjedPartition) -> Vec<(Vec<usize>, bool)> {
    part.blocks.iter().map(|b| (b.indices.clone(), b.is_reset())).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let a = partition(&qutrit_a(&QutritParams::default()), &tol()).map_err(err)?;
    let m = partition(&qutrit_a_minimal(&QutritParams::default()), &tol()).map_err(err)?;
    let b = partition(&qutrit_b(&QutritBParams::default()), &tol()).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        layout(&a) == vec![(vec![0, 1, 2], true), (vec![3, 4], false)],
        format!("five-jump qutrit partition {:?}", layout(&a)),
    )?;
    ensure(
        layout(&m) == vec![(vec![0, 1], true), (vec![2], false)],
        format!("minimal qutrit partition {:?}", layout(&m)),
    )?;
    ensure(
        b.d_c() == 2 && b.blocks.iter().all(|x| x.is_reset()),
        format!("two-reset qutrit partition {:?}", layout(&b)),
    )?;
    ensure(elapsed < 1.0, format!("took {elapsed:.3} s"))?;
    Ok(format!("partitions exact, {:.1} ms", elapsed * 1e3))
}

fn criterion_2() -> Outcome {
    let p = QutritParams {
        theta: FRAC_PI_6,
        gamma: 1.0,
        vartheta: FRAC_PI_3,
        phi: 0.0,
        lambda: 2.0,
    };
    let a = qutrit_a(&p);
    let m = qutrit_a_minimal(&p);
    let mut rng = rng_from_seed(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let psi = random_pure_state_with(3, &mut rng).map_err(err)?;
        let r = a.jump_rates(&psi);
        let rm = m.jump_rates(&psi);
        let (r4, r5, rp3) = (r[3], r[4], rm[2]);
        let scale = r4.abs().max(1e-300);
        worst = worst
            .max(((r5 / 3.0) - r4).abs() / scale)
            .max(((rp3 / 4.0) - r4).abs() / scale);
    }
    ensure(worst <= 1e-10, format!("relative deviation {worst:.2e}"))?;
    Ok(format!(
        "r4 = r5/3 = r'3/4 on 1000 states, max relative deviation {worst:.1e}"
    ))
}

fn criterion_3() -> Outcome {
    let p = QutritParams::default();
    let a = qutrit_a(&p);
    let m = qutrit_a_minimal(&p);
    let v = check_theorem1(&a, &m, &tol()).map_err(err)?;
    ensure(v.holds, format!("full vs minimal: {:?}", v.diagnostics))?;
    ensure(v.perm_c == Some(vec![0, 1]), "full vs minimal: non-trivial permutation")?;
    ensure(v.shift_r.is_some_and(|r| r.abs() <= 1e-10), "full vs minimal: r != 0")?;
    ensure(
        same_liouvillian(&a, &m, &tol()).map_err(err)?,
        "full vs minimal: Liouvillians differ",
    )?;
    let angles = [(0.3, 0.0), (FRAC_PI_3, 0.7), (1.1, -2.0), (2.0, PI), (-0.8, 1.3)];
    let mut worst_l = 0.0f64;
    let mut count = 0;
    for &(t1, f1) in &angles {
        for &(t2, f2) in &angles {
            let x = qutrit_a(&p.with_angles(t1, f1));
            let y = qutrit_a(&p.with_angles(t2, f2));
            let lx = x.liouvillian_matrix().map_err(err)?.matrix;
            let ly = y.liouvillian_matrix().map_err(err)?.matrix;
            worst_l = worst_l.max((lx - ly).norm());
            let v = check_theorem1(&x, &y, &tol()).map_err(err)?;
            ensure(
                v.holds && v.perm_c == Some(vec![0, 1]),
                format!("angles ({t1},{f1}) vs ({t2},{f2}): {:?}", v.diagnostics),
            )?;
            count += 1;
        }
    }
    let lm = (a.liouvillian_matrix().map_err(err)?.matrix - m.liouvillian_matrix().map_err(err)?.matrix).norm();
    worst_l = worst_l.max(lm);
    ensure(worst_l <= 1e-10, format!("Liouvillian difference {worst_l:.2e}"))?;
    Ok(format!(
        "{count} angle pairs plus full vs minimal hold; max ‖ΔL‖ = {worst_l:.1e}"
    ))
}

fn criterion_4() -> Outcome {
    let p = QutritParams::default();
    let mut worst = 0.0f64;
    for &(phi, phi_t) in &[(0.0, 0.0), (0.4, -1.1), (2.5, 1.9)] {
        let a = qutrit_a(&p.with_angles(p.vartheta, phi));
        // J̃_4, J̃_5 coefficients for ϑ̃ = ϑ + n·90°
        let cases: [(f64, [usize; 2], [f64; 2]); 4] = [
            (0.0, [3, 4], [0.0, phi_t - phi]),
            (FRAC_PI_2, [4, 3], [PI - phi, phi_t]),
            (PI, [3, 4], [PI, PI + phi_t - phi]),
            (3.0 * FRAC_PI_2, [4, 3], [-phi, PI + phi_t]),
        ];
        for (shift, perm45, phases45) in cases {
            let b = qutrit_a(&p.with_angles(p.vartheta + shift, phi_t));
            let v = check_theorem2(&a, &b, &tol(), &MatchingOptions::default()).map_err(err)?;
            ensure(v.holds, format!("shift {shift}: {:?}", v.diagnostics))?;
            let mm = &v.matchings[0];
            ensure(
                mm.perm == vec![0, 1, 2, perm45[0], perm45[1]],
                format!("shift {shift}: permutation {:?}", mm.perm),
            )?;
            let expected = [0.0, 0.0, 0.0, phases45[0], phases45[1]];
            for (got, want) in mm.phases.iter().zip(expected) {
                let d = wrap_phase(got - want).abs();
                worst = worst.max(d);
            }
        }
        let off = qutrit_a(&p.with_angles(p.vartheta + PI / 6.0, phi_t));
        let v = check_theorem2(&a, &off, &tol(), &MatchingOptions::default()).map_err(err)?;
        ensure(!v.holds, "ϑ̃ = ϑ + 30° unexpectedly holds")?;
    }
    ensure(worst <= 1e-10, format!("phase error {worst:.2e}"))?;
    Ok(format!(
        "four special cases hold with expected π, +30° fails; max phase error {worst:.1e}"
    ))
}

fn criterion_5() -> Outcome {
    let p = QutritParams {
        theta: 0.0,
        ..QutritParams::default()
    };
    let a = qutrit_a(&p);
    let v = check_theorem2(
        &a,
        &a,
        &tol(),
        &MatchingOptions {
            enumerate_all: true,
            cap: 10_000,
        },
    )
    .map_err(err)?;
    ensure(v.holds && v.multiple, "multiplicity not reported")?;
    ensure(v.matchings.len() >= 2, format!("{} permutations", v.matchings.len()))?;
    ensure(
        v.matchings.iter().any(|m| m.perm == vec![2, 1, 0, 3, 4]),
        "swap of jumps 1 and 3 not found",
    )?;
    Ok(format!(
        "{} valid permutations, including the 1↔3 swap",
        v.matchings.len()
    ))
}

fn criterion_6() -> Outcome {
    for (theta, perm) in [(0.0, vec![0, 1]), (FRAC_PI_2, vec![1, 0])] {
        let p = QutritBParams {
            theta,
            ..QutritBParams::default()
        };
        let (a, b) = (qutrit_b(&p), qutrit_b_tilde(&p));
        let v1 = check_theorem1(&a, &b, &tol()).map_err(err)?;
        ensure(
            v1.holds && v1.perm_c.as_ref() == Some(&perm),
            format!("θ={theta}: {:?}", v1),
        )?;
        let v3 = check_theorem3(&a, &b, &tol(), Some(&perm)).map_err(err)?;
        ensure(v3.holds, format!("θ={theta}: theorem 3 fails"))?;
    }
    let p = QutritBParams {
        theta: FRAC_PI_4,
        ..QutritBParams::default()
    };
    let (a, b) = (qutrit_b(&p), qutrit_b_tilde(&p));
    ensure(
        same_liouvillian(&a, &b, &tol()).map_err(err)?,
        "θ=45°: Liouvillians differ",
    )?;
    ensure(
        !check_theorem1(&a, &b, &tol()).map_err(err)?.holds,
        "θ=45°: theorem 1 holds",
    )?;
    Ok("θ=0° identity, θ=90° swap, θ=45° same QME but inequivalent".into())
}

fn random_pair_model<R: Rng>(rng: &mut R) -> RandomModel {
    let dim = rng.random_range(2..=4);
    let n_reset = rng.random_range(1..=2);
    let n_nonreset = rng.random_range(1..=2);
    random_minimal_model(dim, n_reset, n_nonreset, rng)
}

fn criterion_7() -> Outcome {
    let p = QutritParams::default();
    let iso = extract_isometry(&qutrit_a_minimal(&p), &qutrit_a(&p), &tol()).map_err(err)?;
    let reference = qutrit_a_isometry(&p);
    let mut residual = 0.0f64;
    for k in 0..3 {
        let got = iso.matrix().column(k);
        let want = reference.column(k);
        let overlap = got.dotc(&want);
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            C64::from(1.0)
        };
        residual = residual.max((got * phase - want).norm());
    }
    ensure(residual <= 1e-10, format!("isometry residual {residual:.2e}"))?;

    let mut rng = rng_from_seed(7);
    for i in 0..50 {
        let model = random_pair_model(&mut rng);
        let v = BlockIsometry::random(model.blocks.clone(), 2, &mut rng);
        let r = rng.random_range(-1.0..1.0);
        let out = apply_gauge(&model.rep, &v, r, &tol()).map_err(|e| format!("gauge {i}: {e}"))?;
        ensure(
            check_theorem1(&model.rep, &out, &tol()).map_err(err)?.holds,
            format!("gauge {i}: theorem 1 fails"),
        )?;
    }
    for i in 0..50 {
        let model = random_pair_model(&mut rng);
        let a = model.blocks[0][0];
        let b = *model.blocks.last().unwrap().last().unwrap();
        let mixed = mix_jumps(&model.rep, a, b, &mut rng);
        ensure(
            same_liouvillian(&model.rep, &mixed, &tol()).map_err(err)?,
            format!("mixing {i}: Liouvillians differ"),
        )?;
        ensure(
            !check_theorem1(&model.rep, &mixed, &tol()).map_err(err)?.holds,
            format!("mixing {i}: theorem 1 holds"),
        )?;
    }
    Ok(format!(
        "isometry recovered (residual {residual:.1e}); 50 gauges equivalent; 50 cross-SJED mixings same QME, not equivalent"
    ))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let n = 10_000;
    // (a) exponential waiting time of a single decay
    let gamma = 1.3;
    let decay = qubit_decay(gamma);
    let ens = simulate_ensemble(&decay, &PureState::basis(2, 1).map_err(err)?, 40.0, n, 81).map_err(err)?;
    let times: Vec<f64> = ens
        .trajectories
        .iter()
        .filter_map(|t| t.events.first().map(|e| e.time))
        .collect();
    ensure(
        ens.trajectories.iter().all(|t| t.events.len() <= 1),
        "a single-decay trajectory jumped twice",
    )?;
    // P(no jump before 40) = e^{−52}, so every trajectory jumps
    ensure(
        times.len() == n,
        format!("only {} of {n} trajectories jumped", times.len()),
    )?;
    let ks = ks_one_sample(&times, |x| 1.0 - (-gamma * x).exp()).map_err(err)?;
    ensure(ks.p_value > 0.01, format!("(a) KS p = {:.4}", ks.p_value))?;

    // (b) mean state against the master equation
    let p = QutritParams::default();
    let a = qutrit_a(&p);
    let psi1 = PureState::basis(3, 1).map_err(err)?;
    let ens_a = simulate_ensemble(&a, &psi1, 2.0, n, 82).map_err(err)?;
    let mean = mean_state_check(&ens_a, &a, &[0.5, 1.0, 2.0]).map_err(err)?;
    ensure(
        mean.passes,
        format!("(b) deviation {:.4} ≥ {:.4}", mean.max_deviation, mean.bound),
    )?;
    let elapsed_b = start.elapsed().as_secs_f64();

    // (c) ensemble comparisons
    let b = qutrit_a(&p.with_angles(1.1, 0.8));
    let ens_b = simulate_ensemble(&b, &psi1, 2.0, n, 83).map_err(err)?;
    let opts = CompareOptions {
        level: Level::T1,
        observables: vec![Observable::projector(3, 0), Observable::projector(3, 1)],
        times: vec![0.5, 1.0, 2.0],
        perm: None,
        alpha: 0.01,
    };
    let c1 = compare_ensembles(
        EnsembleInput {
            rep: &a,
            ensemble: &ens_a,
        },
        EnsembleInput {
            rep: &b,
            ensemble: &ens_b,
        },
        &opts,
        &tol(),
    )
    .map_err(err)?;
    ensure(c1.verdict, format!("(c) t1: {:?}", c1.diagnostics))?;

    let bp = QutritBParams::default();
    let (qb, qbt) = (qutrit_b(&bp), qutrit_b_tilde(&bp));
    let psi = PureState::from_slice(&[C64::from(1.0), C64::from(1.0), C64::from(1.0)]).map_err(err)?;
    let eb = simulate_ensemble(&qb, &psi, 2.0, n, 84).map_err(err)?;
    let ebt = simulate_ensemble(&qbt, &psi, 2.0, n, 85).map_err(err)?;
    let opts3 = CompareOptions {
        level: Level::T3,
        observables: vec![Observable::projector(3, 0), Observable::projector(3, 2)],
        times: vec![0.5, 1.0, 2.0],
        perm: Some(vec![1, 0]),
        alpha: 0.01,
    };
    let c3 = compare_ensembles(
        EnsembleInput {
            rep: &qb,
            ensemble: &eb,
        },
        EnsembleInput {
            rep: &qbt,
            ensemble: &ebt,
        },
        &opts3,
        &tol(),
    )
    .map_err(err)?;
    ensure(c3.verdict, format!("(c) t3 with swap: {:?}", c3.diagnostics))?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed_b < 60.0, format!("(b) took {elapsed_b:.1} s"))?;
    Ok(format!(
        "KS p = {:.3}; mean-state deviation {:.4} < {:.4}; t1 and t3 comparisons pass; {:.1} s",
        ks.p_value, mean.max_deviation, mean.bound, elapsed
    ))
}

/// Random pair of representations of one of several kinds, so that every
/// verdict combination is exercised.
fn random_pair<R: Rng>(kind: usize, rng: &mut R) -> (Representation, Representation) {
    let model = random_pair_model(rng);
    let rep = model.rep.clone();
    match kind {
        // block gauge
        0 => {
            let v = BlockIsometry::random(model.blocks.clone(), 1, rng);
            let out = apply_gauge(&rep, &v, rng.random_range(-1.0..1.0), &tol()).expect("gauge");
            (rep, out)
        }
        // jump permutation with phases
        1 => {
            let mut jumps: Vec<CMatrix> = rep.jumps().to_vec();
            for j in jumps.iter_mut() {
                *j *= C64::from_polar(1.0, rng.random_range(-PI..PI));
            }
            let n = jumps.len();
            for i in (1..n).rev() {
                jumps.swap(i, rng.random_range(0..=i));
            }
            let h =
                rep.hamiltonian() + CMatrix::identity(rep.dim(), rep.dim()) * C64::from(rng.random_range(-1.0..1.0));
            (rep, Representation::new("permuted", h, jumps))
        }
        // cross-SJED mixing
        2 => {
            let a = model.blocks[0][0];
            let b = *model.blocks.last().unwrap().last().unwrap();
            let mixed = mix_jumps(&rep, a, b, rng);
            (rep, mixed)
        }
        // identity shift of one jump
        3 => {
            let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let shifted = shift_jump(&rep, 0, c);
            (rep, shifted)
        }
        // unrelated representation of the same dimension
        4 => {
            let other = random_minimal_model(rep.dim(), 1, 1, rng).rep;
            (rep, other)
        }
        // independent minimization
        _ => {
            let min = uqd::sjed::minimize_representation(&rep, &tol()).expect("minimize");
            (rep, min)
        }
    }
}

fn criterion_9() -> Outcome {
    let mut rng = rng_from_seed(9);
    let mut tally = [0usize; 3];
    for i in 0..200 {
        let (a, b) = random_pair(i % 6, &mut rng);
        let qme = a.dim() == b.dim() && same_liouvillian(&a, &b, &tol()).map_err(err)?;
        let t1 = check_theorem1(&a, &b, &tol()).map_err(err)?.holds;
        let t2 = check_theorem2(&a, &b, &tol(), &MatchingOptions::default())
            .map_err(err)?
            .holds;
        let t3 = check_theorem3(&a, &b, &tol(), None).map_err(err)?.holds;
        ensure(!t2 || t1, format!("pair {i}: theorem 2 without theorem 1"))?;
        ensure(!t1 || qme, format!("pair {i}: theorem 1 without same QME"))?;
        ensure(t3 == t1, format!("pair {i}: theorem 3 and theorem 1 disagree"))?;
        tally[0] += t2 as usize;
        tally[1] += t1 as usize;
        tally[2] += qme as usize;
    }
    Ok(format!(
        "200 pairs, no violation (theorem 2: {}, theorem 1: {}, same QME: {})",
        tally[0], tally[1], tally[2]
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("SJED structure of the qutrit examples", criterion_1),
        ("proportional jump rates", criterion_2),
        ("Theorem 1 verdicts for the qutrit example", criterion_3),
        ("Theorem 2 special cases", criterion_4),
        ("Theorem 2 non-uniqueness", criterion_5),
        ("two-reset example permutations", criterion_6),
        ("gauge round trips", criterion_7),
        ("trajectory statistics", criterion_8),
        ("implication chain on random pairs", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
