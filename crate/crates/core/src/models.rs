//! Reference qutrit models and random model generators.
//!
//! `qutrit_a` has three reset jumps into `|0⟩` and two dephasing jumps
//! proportional to `J = (|2⟩⟨2| − |0⟩⟨0|)/√2`; `qutrit_a_minimal` is the same
//! master equation with each jump set reduced to a minimal one. `qutrit_b`
//! and `qutrit_b_tilde` have two reset sets each, whose reset states are
//! related by a rotation angle `theta`.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{
    self, dyad, outer, random_matrix, random_pure_state_with, random_unitary, CMatrix, CVector, C64, I,
};
use crate::representation::Representation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QutritParams {
    pub theta: f64,
    pub gamma: f64,
    pub vartheta: f64,
    pub phi: f64,
    pub lambda: f64,
}

impl Default for QutritParams {
    fn default() -> Self {
        Self {
            theta: std::f64::consts::FRAC_PI_6,
            gamma: 1.0,
            vartheta: std::f64::consts::FRAC_PI_3,
            phi: 0.0,
            lambda: 2.0,
        }
    }
}

impl QutritParams {
    pub fn with_angles(self, vartheta: f64, phi: f64) -> Self {
        Self { vartheta, phi, ..self }
    }
}

/// `(|2⟩⟨2| − |0⟩⟨0|)/√2`
pub fn dephasing_operator() -> CMatrix {
    (dyad(3, 2, 2) - dyad(3, 0, 0)) * C64::from(FRAC_1_SQRT_2)
}

fn ket(entries: [f64; 3]) -> CVector {
    CVector::from_iterator(3, entries.iter().map(|&x| C64::from(x)))
}

pub fn qutrit_a(p: &QutritParams) -> Representation {
    let sg = C64::from(p.gamma.sqrt());
    let zero = ket([1.0, 0.0, 0.0]);
    let j = dephasing_operator();
    let jumps = vec![
        dyad(3, 0, 1) * sg,
        dyad(3, 0, 2) * sg,
        outer(&zero, &ket([0.0, p.theta.cos(), p.theta.sin()])) * sg,
        &j * C64::from(p.lambda * p.vartheta.cos()),
        &j * (C64::from_polar(1.0, p.phi) * (p.lambda * p.vartheta.sin())),
    ];
    Representation::new("qutrit-a", CMatrix::zeros(3, 3), jumps)
}

pub fn qutrit_a_minimal(p: &QutritParams) -> Representation {
    let zero = ket([1.0, 0.0, 0.0]);
    let (s, c) = p.theta.sin_cos();
    let jumps = vec![
        outer(&zero, &ket([0.0, -s, c])) * C64::from(p.gamma.sqrt()),
        outer(&zero, &ket([0.0, c, s])) * C64::from((2.0 * p.gamma).sqrt()),
        dephasing_operator() * C64::from(p.lambda),
    ];
    Representation::new("qutrit-a-minimal", CMatrix::zeros(3, 3), jumps)
}

/// The 5×3 isometry taking `qutrit_a_minimal` jumps to `qutrit_a` jumps.
pub fn qutrit_a_isometry(p: &QutritParams) -> CMatrix {
    let (s, c) = p.theta.sin_cos();
    let r = FRAC_1_SQRT_2;
    let mut v = CMatrix::zeros(5, 3);
    v[(0, 0)] = C64::from(-s);
    v[(0, 1)] = C64::from(r * c);
    v[(1, 0)] = C64::from(c);
    v[(1, 1)] = C64::from(r * s);
    v[(2, 1)] = C64::from(r);
    v[(3, 2)] = C64::from(p.vartheta.cos());
    v[(4, 2)] = C64::from_polar(p.vartheta.sin(), p.phi);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QutritBParams {
    pub theta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma1_tilde: f64,
}

impl Default for QutritBParams {
    fn default() -> Self {
        Self {
            theta: std::f64::consts::FRAC_PI_2,
            gamma1: 0.4,
            gamma2: 0.6,
            gamma3: 0.8,
            gamma1_tilde: 0.3,
        }
    }
}

impl QutritBParams {
    pub fn gamma2_tilde(&self) -> f64 {
        self.gamma1 + self.gamma2 - self.gamma1_tilde
    }
}

/// Two reset sets with reset states `cosθ|0⟩ + sinθ|2⟩` and `−sinθ|0⟩ + cosθ|2⟩`.
pub fn qutrit_b(p: &QutritBParams) -> Representation {
    let (s, c) = p.theta.sin_cos();
    let chi1 = ket([c, 0.0, s]);
    let chi2 = ket([-s, 0.0, c]);
    let one = ket([0.0, 1.0, 0.0]);
    let two = ket([0.0, 0.0, 1.0]);
    let sq = |x: f64| C64::from(x.sqrt());
    let jumps = vec![
        outer(&chi1, &one) * sq(p.gamma1),
        outer(&chi1, &one) * sq(p.gamma2),
        outer(&chi1, &two) * sq(p.gamma3),
        outer(&chi2, &one) * sq(p.gamma1 + p.gamma2),
        outer(&chi2, &two) * sq(p.gamma3),
    ];
    Representation::new("qutrit-b", CMatrix::zeros(3, 3), jumps)
}

/// Companion of [`qutrit_b`] with reset states `|0⟩` and `|2⟩`.
pub fn qutrit_b_tilde(p: &QutritBParams) -> Representation {
    let sq = |x: f64| C64::from(x.sqrt());
    let jumps = vec![
        dyad(3, 0, 1) * sq(p.gamma1_tilde),
        dyad(3, 0, 1) * sq(p.gamma2_tilde()),
        dyad(3, 0, 2) * sq(p.gamma3),
        dyad(3, 2, 1) * sq(p.gamma1 + p.gamma2),
        dyad(3, 2, 2) * sq(p.gamma3),
    ];
    Representation::new("qutrit-b-tilde", CMatrix::zeros(3, 3), jumps)
}

/// Single decay `√γ|0⟩⟨1|` on a qubit.
pub fn qubit_decay(gamma: f64) -> Representation {
    Representation::new(
        "qubit-decay",
        CMatrix::zeros(2, 2),
        vec![dyad(2, 0, 1) * C64::from(gamma.sqrt())],
    )
}

/// A random representation whose jump sets are minimally represented, with
/// the block structure it was built from (0-based jump indices).
#[derive(Debug, Clone)]
pub struct RandomModel {
    pub rep: Representation,
    pub blocks: Vec<Vec<usize>>,
}

pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let a = random_matrix(dim, dim, rng);
    (&a + a.adjoint()) * C64::from(0.5)
}

/// Random model with `n_reset` reset sets and `n_nonreset` dephasing-like
/// sets; requires `dim ≥ 2`.
pub fn random_minimal_model<R: Rng + ?Sized>(
    dim: usize,
    n_reset: usize,
    n_nonreset: usize,
    rng: &mut R,
) -> RandomModel {
    assert!(dim >= 2, "random models need dim >= 2");
    let mut jumps = Vec::new();
    let mut blocks = Vec::new();
    for _ in 0..n_reset {
        let chi = random_pure_state_with(dim, rng).expect("dim >= 1").into_inner();
        let rank = rng.random_range(1..=dim.min(3));
        let u = random_unitary(dim, rng);
        let mut block = Vec::new();
        for k in 0..rank {
            // well separated eigenvalues of Γ
            let gamma = 0.3 + 0.5 * k as f64 + 0.2 * rng.random::<f64>();
            let xi = u.column(k).into_owned();
            block.push(jumps.len());
            jumps.push(outer(&chi, &xi) * C64::from(gamma.sqrt()));
        }
        blocks.push(block);
    }
    for _ in 0..n_nonreset {
        let mut j = random_matrix(dim, dim, rng);
        let scale = (0.5 + rng.random::<f64>()) / j.norm();
        j *= C64::from(scale);
        blocks.push(vec![jumps.len()]);
        jumps.push(j);
    }
    let h = random_hermitian(dim, rng);
    RandomModel {
        rep: Representation::new("random-minimal", h, jumps),
        blocks,
    }
}

/// Replace jumps `a`, `b` by a random unitary mixture of the two. The
/// master equation is unchanged.
pub fn mix_jumps<R: Rng + ?Sized>(rep: &Representation, a: usize, b: usize, rng: &mut R) -> Representation {
    let u = random_unitary(2, rng);
    let ja = rep.jumps()[a].clone();
    let jb = rep.jumps()[b].clone();
    let mut jumps = rep.jumps().to_vec();
    jumps[a] = &ja * u[(0, 0)] + &jb * u[(0, 1)];
    jumps[b] = &ja * u[(1, 0)] + &jb * u[(1, 1)];
    Representation::new(format!("{}-mixed", rep.label()), rep.hamiltonian().clone(), jumps)
}

/// Shift jump `k` by `c·𝟙` and compensate in the Hamiltonian, which leaves
/// the master equation unchanged.
pub fn shift_jump(rep: &Representation, k: usize, c: C64) -> Representation {
    let d = rep.dim();
    let j = rep.jumps()[k].clone();
    let h = rep.hamiltonian() - (&j * c.conj() - j.adjoint() * c) * (I * 0.5);
    let mut jumps = rep.jumps().to_vec();
    jumps[k] = &j + linalg::identity(d) * c;
    Representation::new(format!("{}-shifted", rep.label()), h, jumps)
}
