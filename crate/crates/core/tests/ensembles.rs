//! Statistical behaviour of simulated ensembles: calibration, sensitivity
//! and rate-field consistency.

use rand::Rng;
use uqd::equivalence::check_theorem1;
use uqd::gauge::{apply_gauge, BlockIsometry};
use uqd::linalg::{rng_from_seed, CMatrix};
use uqd::models::{mix_jumps, qutrit_a, qutrit_b, qutrit_b_tilde, random_minimal_model, QutritBParams, QutritParams};
use uqd::trajectory::simulate_ensemble;
use uqd::verify::{
    compare_ensembles, mean_state_check, mean_state_check_against, rate_field_scan, CompareOptions, EnsembleInput,
    Level, Observable,
};
use uqd::{PureState, Representation, Tolerance};

fn tol() -> Tolerance {
    Tolerance::default()
}

fn max_entry_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn self_comparison_false_positive_rate() {
    let rep = qutrit_a(&QutritParams::default());
    let psi = PureState::basis(3, 1).unwrap();
    let opts = CompareOptions {
        level: Level::T1,
        observables: vec![Observable::projector(3, 0), Observable::projector(3, 1)],
        times: vec![0.5, 1.0, 1.5],
        perm: None,
        alpha: 0.01,
    };
    let passes = (0..100u64)
        .filter(|&run| {
            let ea = simulate_ensemble(&rep, &psi, 1.5, 300, 1000 + 2 * run).unwrap();
            let eb = simulate_ensemble(&rep, &psi, 1.5, 300, 1001 + 2 * run).unwrap();
            compare_ensembles(
                EnsembleInput {
                    rep: &rep,
                    ensemble: &ea,
                },
                EnsembleInput {
                    rep: &rep,
                    ensemble: &eb,
                },
                &opts,
                &tol(),
            )
            .unwrap()
            .verdict
        })
        .count();
    assert!(passes >= 95, "{passes} of 100 self-comparisons passed");
}

#[test]
fn mean_state_tracks_a_perturbed_decay_rate() {
    let p = QutritParams::default();
    let rep = qutrit_a(&p);
    let psi = PureState::basis(3, 1).unwrap();
    let ens = simulate_ensemble(&rep, &psi, 2.0, 10_000, 17).unwrap();
    let times = [0.5, 1.0, 2.0];
    assert!(mean_state_check(&ens, &rep, &times).unwrap().passes);

    let l = rep.liouvillian_matrix().unwrap();
    for factor in [1.1, 1.5] {
        let wrong = qutrit_a(&QutritParams {
            gamma: p.gamma * factor,
            ..p
        });
        let report = mean_state_check_against(&ens, &rep, &wrong, &times).unwrap();
        let lw = wrong.liouvillian_matrix().unwrap();
        // the measured deviation is the exact shift between the two flows plus sampling noise
        for (&t, &dev) in times.iter().zip(&report.deviations) {
            let shift = max_entry_diff(&l.evolve(&psi.density(), t), &lw.evolve(&psi.density(), t));
            assert!(
                (dev - shift).abs() < report.bound,
                "t={t}: {dev} vs exact shift {shift}"
            );
        }
        if factor == 1.5 {
            assert!(!report.passes);
            assert!(report.max_deviation > 2.0 * report.bound, "{report:?}");
        }
    }
}

#[test]
fn two_reset_pair_needs_the_swap_at_level_t3() {
    let p = QutritBParams::default();
    let (a, b) = (qutrit_b(&p), qutrit_b_tilde(&p));
    let psi = PureState::new(uqd::linalg::CVector::from_element(3, 1.0.into())).unwrap();
    let ea = simulate_ensemble(&a, &psi, 2.0, 3000, 5).unwrap();
    let eb = simulate_ensemble(&b, &psi, 2.0, 3000, 6).unwrap();
    let run = |perm: Vec<usize>| {
        let opts = CompareOptions {
            level: Level::T3,
            observables: vec![Observable::projector(3, 0), Observable::projector(3, 2)],
            times: vec![0.5, 1.0, 2.0],
            perm: Some(perm),
            alpha: 0.01,
        };
        compare_ensembles(
            EnsembleInput { rep: &a, ensemble: &ea },
            EnsembleInput { rep: &b, ensemble: &eb },
            &opts,
            &tol(),
        )
        .unwrap()
    };
    let swap = run(vec![1, 0]);
    assert!(swap.verdict, "{swap:?}");
    let ident = run(vec![0, 1]);
    assert!(!ident.verdict);
    assert!(ident
        .count_tests
        .iter()
        .any(|c| c.label.starts_with("SJED") && c.p_value < 1e-6));
}

fn random_pair(seed: u64) -> (Representation, Vec<Vec<usize>>, rand_chacha::ChaCha8Rng) {
    let mut rng = rng_from_seed(seed);
    let dim = rng.random_range(2..=4);
    let n_reset = rng.random_range(1..=2);
    let n_nonreset = rng.random_range(1..=2);
    let m = random_minimal_model(dim, n_reset, n_nonreset, &mut rng);
    (m.rep, m.blocks, rng)
}

#[test]
fn rate_field_vanishes_on_gauge_pairs() {
    for seed in 0..50 {
        let (rep, blocks, mut rng) = random_pair(seed);
        let v = BlockIsometry::random(blocks, 2, &mut rng);
        let out = apply_gauge(&rep, &v, 0.3, &tol()).unwrap();
        let r = rate_field_scan(&rep, &out, None, 200, seed, &tol()).unwrap();
        assert!(r.max_total_rate_dev <= 1e-10, "seed {seed}: {r:?}");
        assert!(r.max_block_rate_dev <= 1e-10, "seed {seed}: {r:?}");
        assert!(r.max_block_action_dev <= 1e-10, "seed {seed}: {r:?}");
        assert!(r.max_destination_dev <= 1e-10, "seed {seed}: {r:?}");
    }
}

#[test]
fn rate_field_flags_mixing_across_sjeds() {
    let mut flagged = 0;
    for seed in 100..120 {
        let (rep, blocks, mut rng) = random_pair(seed);
        let mixed = mix_jumps(&rep, blocks[0][0], blocks[1][0], &mut rng);
        if check_theorem1(&rep, &mixed, &tol()).unwrap().holds {
            continue;
        }
        let r = rate_field_scan(&rep, &mixed, None, 1000, seed, &tol()).unwrap();
        assert!(r.max_block_action_dev > 1e-3, "seed {seed}: {r:?}");
        flagged += 1;
    }
    assert!(flagged >= 15, "only {flagged} inequivalent mixtures");
}
