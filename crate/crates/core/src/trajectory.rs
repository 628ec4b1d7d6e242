//! Quantum-jump trajectories of the counting unravelling.
//!
//! Between jumps the unnormalized state follows `e^{−iH_eff t}`; a jump
//! happens when its squared norm falls to a uniform variate `u`, and the
//! channel is drawn with probability proportional to `‖J_k φ‖²`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format;
use crate::linalg::{self, matrix_exponential, rng_from_seed, CMatrix, CVector, PureState, Tolerance, C64, I};
use crate::representation::Representation;
use crate::sjed::SjedPartition;

/// Rates below this are never selected as the jump channel.
pub const MIN_CHANNEL_RATE: f64 = 1e-14;
/// Halvings of the propagation step used to locate a jump time.
const BISECTION_LEVELS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    /// 0-based jump index; 1-based in documents.
    #[serde(with = "one_based_index")]
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledTrajectory {
    pub initial_state: PureState,
    pub events: Vec<JumpEvent>,
    pub post_jump_states: Vec<PureState>,
    pub t_final: f64,
    pub seed: u64,
    pub num_channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEvent {
    pub time: f64,
    /// 0-based SJED index; 1-based in documents.
    #[serde(with = "one_based_index")]
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartiallyLabelledTrajectory {
    pub initial_state: PureState,
    pub events: Vec<BlockEvent>,
    pub post_jump_states: Vec<PureState>,
    pub t_final: f64,
    pub seed: u64,
    pub num_blocks: usize,
}

mod one_based_index {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(i: &usize, s: S) -> Result<S::Ok, S::Error> {
        (i + 1).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        usize::deserialize(d)?
            .checked_sub(1)
            .ok_or_else(|| serde::de::Error::custom("indices are 1-based"))
    }
}

fn count_until<I: Iterator<Item = (f64, usize)>>(events: I, n: usize, t: f64) -> Vec<usize> {
    let mut counts = vec![0; n];
    for (time, c) in events {
        if time <= t {
            counts[c] += 1;
        }
    }
    counts
}

impl LabelledTrajectory {
    /// `q_{k,t}`: number of jumps in each channel up to and including `t`.
    pub fn counts_at(&self, t: f64) -> Vec<usize> {
        count_until(self.events.iter().map(|e| (e.time, e.channel)), self.num_channels, t)
    }

    pub fn total_counts(&self) -> Vec<usize> {
        self.counts_at(f64::INFINITY)
    }
}

impl PartiallyLabelledTrajectory {
    /// `Q_{α,t}`: number of jumps in each SJED up to and including `t`.
    pub fn counts_at(&self, t: f64) -> Vec<usize> {
        count_until(self.events.iter().map(|e| (e.time, e.block)), self.num_blocks, t)
    }

    pub fn total_counts(&self) -> Vec<usize> {
        self.counts_at(f64::INFINITY)
    }
}

/// Per-trajectory seed derived from a master seed (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `H_eff` must not increase the norm: `(H_eff − H_eff†)/2i` is negative
/// semidefinite.
fn check_effective_hamiltonian(heff: &CMatrix, tol: &Tolerance) -> Result<()> {
    let decay = (heff - heff.adjoint()) * (-I * 0.5);
    let (values, _) = linalg::hermitian_eigen(&decay);
    let top = values.last().copied().unwrap_or(0.0);
    let scale = linalg::operator_norm(heff);
    if !top.is_finite() || top > tol.threshold(scale) {
        return Err(Error::InvalidEffectiveHamiltonian(format!(
            "invalid effective Hamiltonian: anti-Hermitian part has eigenvalue {top:.3e} > 0"
        )));
    }
    Ok(())
}

/// Reusable propagators for one representation.
#[derive(Debug, Clone)]
pub struct Simulator {
    rep: Representation,
    heff: CMatrix,
    dt: f64,
    /// `steps[k] = e^{−iH_eff dt/2^k}`.
    steps: Vec<CMatrix>,
}

impl Simulator {
    pub fn new(rep: &Representation) -> Result<Self> {
        if rep.dim() == 0 || rep.num_jumps() == 0 {
            rep.ensure_valid()?;
        }
        // checked before full validation so norm growth gets its own error
        let heff = rep.effective_hamiltonian();
        check_effective_hamiltonian(&heff, &Tolerance::default())?;
        rep.ensure_valid()?;
        let norm = linalg::operator_norm(&heff);
        let dt = if norm > 0.0 { 0.01 / norm } else { 1.0 };
        let steps = (0..=BISECTION_LEVELS)
            .map(|k| matrix_exponential(&(&heff * (-I * (dt / 2f64.powi(k as i32))))))
            .collect();
        Ok(Self {
            rep: rep.clone(),
            heff,
            dt,
            steps,
        })
    }

    pub fn representation(&self) -> &Representation {
        &self.rep
    }

    pub fn step(&self) -> f64 {
        self.dt
    }

    /// Unnormalized no-jump evolution of `psi` over `t`.
    pub fn propagate(&self, psi: &CVector, t: f64) -> CVector {
        matrix_exponential(&(&self.heff * (-I * t))) * psi
    }

    /// One labelled trajectory on `[0, t_max]`.
    pub fn run(&self, psi0: &PureState, t_max: f64, seed: u64) -> Result<LabelledTrajectory> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "t_max must be positive and finite, got {t_max}"
            )));
        }
        if psi0.dim() != self.rep.dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial state has dimension {}, representation {}",
                psi0.dim(),
                self.rep.dim()
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut events = Vec::new();
        let mut states = Vec::new();
        let mut t = 0.0;
        let mut phi = psi0.amplitudes().clone();
        'jumps: loop {
            let u = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            // march in whole steps until the norm drops to u
            loop {
                let next = &self.steps[0] * &phi;
                if next.norm_squared() > u {
                    phi = next;
                    t += self.dt;
                    if t >= t_max {
                        break 'jumps;
                    }
                    continue;
                }
                let (t_jump, phi_jump) = self.bisect(t, phi, u);
                if t_jump > t_max {
                    break 'jumps;
                }
                let psi = &phi_jump / C64::from(phi_jump.norm());
                let channel = self.select_channel(&psi, &mut rng)?;
                let post = PureState::new(&self.rep.jumps()[channel] * &psi)?;
                events.push(JumpEvent { time: t_jump, channel });
                phi = post.amplitudes().clone();
                states.push(post);
                t = t_jump;
                continue 'jumps;
            }
        }
        Ok(LabelledTrajectory {
            initial_state: psi0.clone(),
            events,
            post_jump_states: states,
            t_final: t_max,
            seed,
            num_channels: self.rep.num_jumps(),
        })
    }

    /// Locate the time in `[t, t + dt]` where `‖φ‖²` reaches `u`, given
    /// `‖φ(t)‖² > u ≥ ‖φ(t + dt)‖²`.
    fn bisect(&self, mut t: f64, mut phi: CVector, u: f64) -> (f64, CVector) {
        for k in 1..=BISECTION_LEVELS {
            let trial = &self.steps[k] * &phi;
            if trial.norm_squared() > u {
                phi = trial;
                t += self.dt / 2f64.powi(k as i32);
            }
        }
        (t, phi)
    }

    fn select_channel<R: Rng + ?Sized>(&self, psi: &CVector, rng: &mut R) -> Result<usize> {
        let rates: Vec<f64> = self
            .rep
            .jumps()
            .iter()
            .map(|j| {
                let r = (j * psi).norm_squared();
                if r < MIN_CHANNEL_RATE {
                    0.0
                } else {
                    r
                }
            })
            .collect();
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return Err(Error::Numerical("norm decayed but every jump rate vanishes".into()));
        }
        let x = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (k, &r) in rates.iter().enumerate() {
            if r > 0.0 {
                acc += r;
                last = k;
                if x < acc {
                    return Ok(k);
                }
            }
        }
        Ok(last)
    }

    /// State at time `t` given the recorded jumps of `traj`; at an event
    /// time this is the post-jump state.
    pub fn state_at(&self, traj: &LabelledTrajectory, t: f64) -> Result<PureState> {
        if !(0.0..=traj.t_final).contains(&t) {
            return Err(Error::InvalidInput(format!("time {t} outside [0, {}]", traj.t_final)));
        }
        let last = traj.events.iter().rposition(|e| e.time <= t);
        let (t0, psi) = match last {
            Some(i) => (traj.events[i].time, &traj.post_jump_states[i]),
            None => (0.0, &traj.initial_state),
        };
        if t == t0 {
            return Ok(psi.clone());
        }
        PureState::new(self.propagate(psi.amplitudes(), t - t0))
    }

    /// Largest distance between a recorded post-jump state and the state
    /// obtained by replaying the drift and applying the recorded jump.
    pub fn replay_error(&self, traj: &LabelledTrajectory) -> Result<f64> {
        let mut worst = 0.0f64;
        let mut t0 = 0.0;
        let mut psi = traj.initial_state.amplitudes().clone();
        for (e, recorded) in traj.events.iter().zip(&traj.post_jump_states) {
            let pre = self.propagate(&psi, e.time - t0);
            let post = PureState::new(&self.rep.jumps()[e.channel] * pre)?;
            worst = worst.max((post.amplitudes() - recorded.amplitudes()).norm());
            psi = recorded.amplitudes().clone();
            t0 = e.time;
        }
        Ok(worst)
    }
}

pub fn simulate(rep: &Representation, psi0: &PureState, t_max: f64, seed: u64) -> Result<LabelledTrajectory> {
    Simulator::new(rep)?.run(psi0, t_max, seed)
}

/// Independent trajectories sharing an initial state and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub master_seed: u64,
    pub t_max: f64,
    pub trajectories: Vec<LabelledTrajectory>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// `n` trajectories in parallel; trajectory `i` uses
/// `derive_seed(master_seed, i)`, so the result does not depend on the
/// number of worker threads.
pub fn simulate_ensemble(
    rep: &Representation,
    psi0: &PureState,
    t_max: f64,
    n: usize,
    master_seed: u64,
) -> Result<Ensemble> {
    let sim = Simulator::new(rep)?;
    let trajectories = (0..n as u64)
        .into_par_iter()
        .map(|i| sim.run(psi0, t_max, derive_seed(master_seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        master_seed,
        t_max,
        trajectories,
    })
}

/// Replace each jump channel by its SJED index.
pub fn coarse_grain(traj: &LabelledTrajectory, part: &SjedPartition) -> Result<PartiallyLabelledTrajectory> {
    let map = part.channel_map();
    let events = traj
        .events
        .iter()
        .map(|e| match map.get(e.channel) {
            Some(&b) if b != usize::MAX => Ok(BlockEvent { time: e.time, block: b }),
            _ => Err(Error::InvalidInput(format!(
                "channel {} not covered by the partition",
                e.channel + 1
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PartiallyLabelledTrajectory {
        initial_state: traj.initial_state.clone(),
        events,
        post_jump_states: traj.post_jump_states.clone(),
        t_final: traj.t_final,
        seed: traj.seed,
        num_blocks: part.d_c(),
    })
}

/// `‖φ‖²` along a no-jump segment, for diagnostics.
pub fn no_jump_probability(sim: &Simulator, psi: &PureState, t: f64) -> f64 {
    sim.propagate(psi.amplitudes(), t).norm_squared()
}

/// JSON-lines record of a trajectory.
pub fn to_json_line(traj: &LabelledTrajectory) -> String {
    serde_json::to_string(traj).expect("trajectory serializes")
}

pub fn from_json_line(line: &str) -> Result<LabelledTrajectory> {
    format::from_json_str(line)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::*;
    use crate::sjed::partition;
    use approx::assert_relative_eq;

    fn one(dim: usize) -> PureState {
        PureState::basis(dim, 1).unwrap()
    }

    #[test]
    fn single_decay_jumps_once() {
        let rep = qubit_decay(1.0);
        for seed in 0..20 {
            let traj = simulate(&rep, &one(2), 50.0, seed).unwrap();
            assert!(traj.events.len() <= 1);
            if let Some(s) = traj.post_jump_states.first() {
                assert_relative_eq!(s.overlap(&PureState::basis(2, 0).unwrap()), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jump_time_matches_inverse_cdf() {
        // with a constant rate the jump occurs at −ln(u)/γ for the first draw
        let gamma = 0.7;
        let rep = qubit_decay(gamma);
        let traj = simulate(&rep, &one(2), 1e3, 11).unwrap();
        let u: f64 = rng_from_seed(11).random();
        assert_relative_eq!(traj.events[0].time, -u.ln() / gamma, max_relative = 1e-9);
    }

    #[test]
    fn dark_state_never_jumps() {
        let rep = qubit_decay(1.0);
        let traj = simulate(&rep, &PureState::basis(2, 0).unwrap(), 5.0, 3).unwrap();
        assert!(traj.events.is_empty());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let rep = qutrit_a(&QutritParams::default());
        let a = simulate(&rep, &one(3), 3.0, 42).unwrap();
        let b = simulate(&rep, &one(3), 3.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(!a.events.is_empty());
    }

    #[test]
    fn events_are_ordered_and_replayable() {
        let rep = qutrit_a(&QutritParams::default());
        let sim = Simulator::new(&rep).unwrap();
        for seed in 0..20 {
            let traj = sim.run(&one(3), 4.0, seed).unwrap();
            assert!(traj.events.windows(2).all(|w| w[0].time < w[1].time));
            assert!(traj.events.iter().all(|e| e.time <= 4.0));
            assert!(sim.replay_error(&traj).unwrap() < 1e-8);
        }
    }

    #[test]
    fn state_at_examples() {
        let rep = qubit_decay(1.0);
        let sim = Simulator::new(&rep).unwrap();
        let traj = sim.run(&one(2), 50.0, 5).unwrap();
        assert_eq!(sim.state_at(&traj, 0.0).unwrap(), one(2));
        let t_jump = traj.events[0].time;
        let before = sim.state_at(&traj, t_jump * 0.5).unwrap();
        assert_relative_eq!(before.overlap(&one(2)), 1.0, epsilon = 1e-14);
        assert_eq!(sim.state_at(&traj, t_jump).unwrap(), traj.post_jump_states[0]);
        assert!(sim.state_at(&traj, 51.0).is_err());
    }

    #[test]
    fn coarse_grain_examples() {
        let rep = qutrit_a(&QutritParams::default());
        let part = partition(&rep, &Tolerance::default()).unwrap();
        let psi = one(3);
        let traj = LabelledTrajectory {
            initial_state: psi.clone(),
            events: [0, 3, 2]
                .iter()
                .enumerate()
                .map(|(i, &c)| JumpEvent {
                    time: i as f64,
                    channel: c,
                })
                .collect(),
            post_jump_states: vec![psi.clone(); 3],
            t_final: 3.0,
            seed: 0,
            num_channels: 5,
        };
        let blocks: Vec<usize> = coarse_grain(&traj, &part)
            .unwrap()
            .events
            .iter()
            .map(|e| e.block)
            .collect();
        assert_eq!(blocks, vec![0, 1, 0]);
        let empty = LabelledTrajectory {
            events: vec![],
            post_jump_states: vec![],
            ..traj.clone()
        };
        assert!(coarse_grain(&empty, &part).unwrap().events.is_empty());
        let bad = LabelledTrajectory {
            events: vec![JumpEvent { time: 0.0, channel: 7 }],
            ..empty
        };
        assert!(coarse_grain(&bad, &part).is_err());
    }

    #[test]
    fn non_hermitian_growth_rejected() {
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 0)] = C64::new(0.0, 5.0);
        let rep = Representation::new("bad", h, vec![linalg::dyad(2, 0, 1)]);
        let err = Simulator::new(&rep).unwrap_err();
        assert!(err.to_string().contains("invalid effective Hamiltonian"));
    }

    #[test]
    fn ensemble_is_thread_independent() {
        let rep = qutrit_a(&QutritParams::default());
        let a = simulate_ensemble(&rep, &one(3), 1.0, 64, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_ensemble(&rep, &one(3), 1.0, 64, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn counts_and_json_round_trip() {
        let rep = qutrit_a(&QutritParams::default());
        let traj = simulate(&rep, &one(3), 3.0, 1).unwrap();
        assert_eq!(traj.total_counts().iter().sum::<usize>(), traj.events.len());
        let line = to_json_line(&traj);
        let back = from_json_line(&line).unwrap();
        assert_eq!(back.events, traj.events);
        let part = partition(&rep, &Tolerance::default()).unwrap();
        let coarse = coarse_grain(&traj, &part).unwrap();
        let q = traj.total_counts();
        assert_eq!(coarse.total_counts(), vec![q[0] + q[1] + q[2], q[3] + q[4]]);
    }
}
