//! Randomized invariants over generated models. Each case draws a seed and
//! builds its model from a ChaCha stream, so failures shrink to a seed.

use proptest::prelude::*;
use rand::Rng;
use uqd::equivalence::{check_theorem1, check_theorem2, check_theorem3, same_liouvillian, MatchingOptions};
use uqd::gauge::{apply_gauge, extract_isometry, BlockIsometry};
use uqd::linalg::{rng_from_seed, wrap_phase, CMatrix, C64};
use uqd::models::{mix_jumps, random_minimal_model, shift_jump, RandomModel};
use uqd::sjed::{minimize_representation, partition};
use uqd::stats::{chi_square_homogeneity, ks_two_sample};
use uqd::trajectory::{coarse_grain, from_json_line, simulate, to_json_line};
use uqd::{PureState, Representation, Tolerance};

fn tol() -> Tolerance {
    Tolerance::new(1e-9, 1e-9).unwrap()
}

fn model(seed: u64) -> (RandomModel, rand_chacha::ChaCha8Rng) {
    let mut rng = rng_from_seed(seed);
    let dim = rng.random_range(2..=4);
    let n_reset = rng.random_range(0..=2);
    let n_nonreset = rng.random_range(if n_reset == 0 { 1 } else { 0 }..=2);
    (random_minimal_model(dim, n_reset, n_nonreset, &mut rng), rng)
}

/// `J̃_k = e^{iφ_k} J_{perm[k]}` with a random permutation and phases.
fn permute_with_phases<R: Rng>(rep: &Representation, rng: &mut R) -> (Representation, Vec<usize>) {
    let n = rep.num_jumps();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let jumps = perm
        .iter()
        .map(|&k| &rep.jumps()[k] * C64::from_polar(1.0, rng.random_range(-3.0..3.0)))
        .collect();
    (Representation::new("permuted", rep.hamiltonian().clone(), jumps), perm)
}

fn max_dev(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn gauge_transforms_preserve_the_unravelling(seed in any::<u64>(), r in -2.0f64..2.0) {
        let (m, mut rng) = model(seed);
        let v = BlockIsometry::random(m.blocks.clone(), 2, &mut rng);
        let out = apply_gauge(&m.rep, &v, r, &tol()).unwrap();
        prop_assert!(same_liouvillian(&m.rep, &out, &tol()).unwrap());
        let t1 = check_theorem1(&m.rep, &out, &tol()).unwrap();
        prop_assert!(t1.holds, "{:?}", t1.diagnostics);
        prop_assert!((t1.shift_r.unwrap() - r).abs() < 1e-9);
        prop_assert!(check_theorem3(&m.rep, &out, &tol(), None).unwrap().holds);

        // extraction recovers an isometry that rebuilds the same operators
        let back = extract_isometry(&m.rep, &out, &tol()).unwrap();
        let rebuilt = apply_gauge(&m.rep, &back, r, &tol()).unwrap();
        prop_assert!(max_dev(rebuilt.jumps(), out.jumps()) < 1e-8);
    }

    #[test]
    fn theorem1_is_symmetric(seed in any::<u64>(), cross in any::<bool>()) {
        let (m, mut rng) = model(seed);
        let b = if cross && m.rep.num_jumps() >= 2 && m.blocks.len() >= 2 {
            // mixing across SJEDs keeps the master equation but not the unravelling
            mix_jumps(&m.rep, m.blocks[0][0], m.blocks[1][0], &mut rng)
        } else {
            let v = BlockIsometry::random(m.blocks.clone(), 1, &mut rng);
            apply_gauge(&m.rep, &v, 0.5, &tol()).unwrap()
        };
        let ab = check_theorem1(&m.rep, &b, &tol()).unwrap();
        let ba = check_theorem1(&b, &m.rep, &tol()).unwrap();
        prop_assert_eq!(ab.holds, ba.holds);
        if ab.holds {
            prop_assert!((ab.shift_r.unwrap() + ba.shift_r.unwrap()).abs() < 1e-9);
            let p = ab.perm_c.unwrap();
            let q = ba.perm_c.unwrap();
            for (i, &j) in p.iter().enumerate() {
                prop_assert_eq!(q[j], i);
            }
        }
    }

    #[test]
    fn permutations_with_phases_satisfy_theorem2(seed in any::<u64>()) {
        let (m, mut rng) = model(seed);
        let (b, _) = permute_with_phases(&m.rep, &mut rng);
        let t2 = check_theorem2(&m.rep, &b, &tol(), &MatchingOptions::default()).unwrap();
        prop_assert!(t2.holds, "{:?}", t2.diagnostics);
        let found = &t2.matchings[0];
        for (k, j) in b.jumps().iter().enumerate() {
            prop_assert!(found.phases[k] > -std::f64::consts::PI && found.phases[k] <= std::f64::consts::PI);
            let rebuilt = &m.rep.jumps()[found.perm[k]] * C64::from_polar(1.0, found.phases[k]);
            prop_assert!((rebuilt - j).norm() < 1e-8);
        }
    }

    #[test]
    fn verdicts_form_an_implication_chain(seed in any::<u64>(), kind in 0usize..4) {
        let (m, mut rng) = model(seed);
        let n = m.rep.num_jumps();
        let b = match kind {
            0 => permute_with_phases(&m.rep, &mut rng).0,
            1 if n >= 2 => mix_jumps(&m.rep, 0, n - 1, &mut rng),
            2 => shift_jump(&m.rep, 0, C64::new(0.3, -0.2)),
            _ => model(seed.wrapping_add(1)).0.rep,
        };
        if b.dim() == m.rep.dim() {
            let qme = same_liouvillian(&m.rep, &b, &tol()).unwrap();
            let t1 = check_theorem1(&m.rep, &b, &tol()).unwrap().holds;
            let t2 = check_theorem2(&m.rep, &b, &tol(), &MatchingOptions::default()).unwrap().holds;
            let t3 = check_theorem3(&m.rep, &b, &tol(), None).unwrap().holds;
            prop_assert!(!t2 || t1);
            prop_assert!(!t1 || qme);
            prop_assert_eq!(t1, t3);
        }
    }

    #[test]
    fn minimization_is_idempotent_and_preserves_the_unravelling(seed in any::<u64>()) {
        let (m, mut rng) = model(seed);
        let v = BlockIsometry::random(m.blocks.clone(), 2, &mut rng);
        let big = apply_gauge(&m.rep, &v, 0.0, &tol()).unwrap();
        let once = minimize_representation(&big, &tol()).unwrap();
        let twice = minimize_representation(&once, &tol()).unwrap();
        prop_assert_eq!(once.num_jumps(), m.rep.num_jumps());
        prop_assert_eq!(twice.num_jumps(), once.num_jumps());
        prop_assert!(check_theorem1(&big, &once, &tol()).unwrap().holds);
        let t2 = check_theorem2(&once, &twice, &tol(), &MatchingOptions::default()).unwrap();
        prop_assert!(t2.holds, "{:?}", t2.diagnostics);
    }

    #[test]
    fn trajectories_are_seed_deterministic_and_coarse_grain_consistently(seed in any::<u64>(), traj_seed in any::<u64>()) {
        let (m, mut rng) = model(seed);
        let psi = uqd::linalg::random_pure_state_with(m.rep.dim(), &mut rng).unwrap();
        let a = simulate(&m.rep, &psi, 1.5, traj_seed).unwrap();
        let b = simulate(&m.rep, &psi, 1.5, traj_seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.events.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert_eq!(from_json_line(&to_json_line(&a)).unwrap(), a.clone());

        let part = partition(&m.rep, &tol()).unwrap();
        let coarse = coarse_grain(&a, &part).unwrap();
        let fine = a.total_counts();
        let blocks = coarse.total_counts();
        for (alpha, block) in part.block_indices().iter().enumerate() {
            prop_assert_eq!(blocks[alpha], block.iter().map(|&k| fine[k]).sum::<usize>());
        }
    }

    #[test]
    fn wrapped_phases_lie_in_half_open_interval(phi in -1e3f64..1e3) {
        let w = wrap_phase(phi);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        prop_assert!((C64::from_polar(1.0, w) - C64::from_polar(1.0, phi)).norm() < 1e-9);
    }

    #[test]
    fn pure_states_round_trip_through_json(seed in any::<u64>(), dim in 1usize..5) {
        let mut rng = rng_from_seed(seed);
        let psi = uqd::linalg::random_pure_state_with(dim, &mut rng).unwrap();
        let text = serde_json::to_string(&psi).unwrap();
        let back: PureState = serde_json::from_str(&text).unwrap();
        prop_assert!((back.amplitudes() - psi.amplitudes()).norm() < 1e-15);
    }

    #[test]
    fn test_statistics_are_symmetric_and_p_values_bounded(
        a in proptest::collection::vec(0usize..6, 1..200),
        b in proptest::collection::vec(0usize..6, 1..200),
    ) {
        let ab = chi_square_homogeneity(&a, &b).unwrap();
        let ba = chi_square_homogeneity(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        prop_assert!((ab.statistic - ba.statistic).abs() <= 1e-9 * ab.statistic.max(1.0));
        let fa: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let fb: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        let ks = ks_two_sample(&fa, &fb).unwrap();
        prop_assert!((0.0..=1.0).contains(&ks.statistic) && (0.0..=1.0).contains(&ks.p_value));
        prop_assert_eq!(ks.statistic, ks_two_sample(&fb, &fa).unwrap().statistic);
    }
}
