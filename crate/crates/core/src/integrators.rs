//! States, trajectories, and the two fixed-step solvers.
//!
//! Both solvers exist in a plain form (for data generation and model
//! evaluation) and a taped form (for training, where every arithmetic step
//! is recorded for reverse-mode differentiation). The plain and taped forms
//! compute the same floating-point expressions in the same order.
//!
//! Backward time evolution is the same stepper called with a negative step;
//! there is no separate adjoint pass anywhere in the crate. Training
//! differentiates through the recorded solver arithmetic directly.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// A point of a trajectory: state vector plus its time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub values: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// An ordered sequence of states with strictly increasing times, uniform
/// dimension, and finite values throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<State>,
}

impl Trajectory {
    pub fn new(states: Vec<State>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidData("trajectory needs at least one state".into()));
        }
        let dim = states[0].dim();
        if dim == 0 {
            return Err(Error::InvalidData("trajectory states must be non-empty".into()));
        }
        for (i, s) in states.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::InvalidData(format!(
                    "state {} has dimension {}, expected {}",
                    i,
                    s.dim(),
                    dim
                )));
            }
            if !s.time.is_finite() {
                return Err(Error::NonFinite(format!("time of state {} is {}", i, s.time)));
            }
            if let Some(j) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "component {} of state {} is {}",
                    j, i, s.values[j]
                )));
            }
            if i > 0 && s.time <= states[i - 1].time {
                return Err(Error::InvalidData(format!(
                    "times must be strictly increasing, state {} has t={} after t={}",
                    i,
                    s.time,
                    states[i - 1].time
                )));
            }
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &State {
        &self.states[i]
    }

    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    /// Number of states (at least 1 by construction).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// Number of transitions (one fewer than states).
    pub fn transitions(&self) -> usize {
        self.states.len() - 1
    }

    /// Step size of transition `i`.
    pub fn dt(&self, i: usize) -> f64 {
        self.states[i + 1].time - self.states[i].time
    }

    /// All per-transition step sizes.
    pub fn dts(&self) -> Vec<f64> {
        (0..self.transitions()).map(|i| self.dt(i)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }
}

/// Which fixed-step solver advances the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Rk4,
    Leapfrog,
}

/// Solver choice plus nominal step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolveMethod,
    pub step: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "solver step must be finite and positive, got {}",
                self.step
            )));
        }
        Ok(())
    }
}

/// A first-order vector field dx/dt = f(x, t).
///
/// Fields that are separable-Hamiltonian (state = [q; p] with
/// H(q, p) = K(p) + V(q)) may additionally expose the two gradient halves,
/// which is what the leapfrog solver integrates. Fields without that
/// structure return `None` and are restricted to RK4.
pub trait VectorField {
    fn dim(&self) -> usize;

    /// Whether f ignores its time argument.
    fn is_autonomous(&self) -> bool {
        true
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64>;

    /// dK/dp at `p` for separable fields; `None` otherwise.
    fn kinetic_grad(&self, _p: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// dV/dq at `q` for separable fields; `None` otherwise.
    fn potential_grad(&self, _q: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// One classical fourth-order Runge-Kutta step. Negative `dt` steps
/// backward in time.
pub fn rk4_step(field: &dyn VectorField, state: &State, dt: f64) -> State {
    let n = state.dim();
    let (x, t) = (&state.values, state.time);
    let half = dt / 2.0;

    let k1 = field.eval(x, t);
    let mut stage = vec![0.0; n];
    for i in 0..n {
        stage[i] = x[i] + half * k1[i];
    }
    let k2 = field.eval(&stage, t + half);
    for i in 0..n {
        stage[i] = x[i] + half * k2[i];
    }
    let k3 = field.eval(&stage, t + half);
    for i in 0..n {
        stage[i] = x[i] + dt * k3[i];
    }
    let k4 = field.eval(&stage, t + dt);

    // Combination shape mirrors the taped version bit for bit:
    // x + dt * (((k1 + 2 k2) + (2 k3 + k4)) / 6).
    let mut out = vec![0.0; n];
    for i in 0..n {
        let s = (k1[i] + 2.0 * k2[i]) + (2.0 * k3[i] + k4[i]);
        out[i] = x[i] + dt * (s / 6.0);
    }
    State::new(out, t + dt)
}

/// Taped RK4 step over a recorded field evaluation.
///
/// `field` receives the tape, the current state node, and the stage time;
/// it must append the field evaluation to the tape and return its node.
pub fn rk4_step_taped(
    tape: &mut Tape,
    field: &mut dyn FnMut(&mut Tape, Var, f64) -> Result<Var>,
    x: Var,
    t: f64,
    dt: f64,
) -> Result<Var> {
    let half = dt / 2.0;
    let k1 = field(tape, x, t)?;
    let s1 = tape.scale(k1, half);
    let a2 = tape.add(x, s1);
    let k2 = field(tape, a2, t + half)?;
    let s2 = tape.scale(k2, half);
    let a3 = tape.add(x, s2);
    let k3 = field(tape, a3, t + half)?;
    let s3 = tape.scale(k3, dt);
    let a4 = tape.add(x, s3);
    let k4 = field(tape, a4, t + dt)?;

    let k2x2 = tape.scale(k2, 2.0);
    let k3x2 = tape.scale(k3, 2.0);
    let left = tape.add(k1, k2x2);
    let right = tape.add(k3x2, k4);
    let ksum = tape.add(left, right);
    let kavg = tape.div_const(ksum, 6.0);
    let delta = tape.scale(kavg, dt);
    Ok(tape.add(x, delta))
}

/// One kick-drift-kick leapfrog step for a separable Hamiltonian
/// H(q, p) = K(p) + V(q):
///
///   p_half = p - (dt/2) dV/dq(q)
///   q_next = q + dt dK/dp(p_half)
///   p_next = p_half - (dt/2) dV/dq(q_next)
///
/// The state is [q; p] with equal halves. Negative `dt` steps backward and
/// exactly inverts the forward step up to floating-point rounding.
pub fn leapfrog_step(
    kinetic_grad: &dyn Fn(&[f64]) -> Vec<f64>,
    potential_grad: &dyn Fn(&[f64]) -> Vec<f64>,
    state: &State,
    dt: f64,
) -> State {
    let n = state.dim() / 2;
    assert_eq!(state.dim(), 2 * n, "leapfrog state must split into equal q and p halves");
    let (q, p) = state.values.split_at(n);
    let half = dt / 2.0;

    let dv = potential_grad(q);
    let mut p_half = vec![0.0; n];
    for i in 0..n {
        p_half[i] = p[i] - half * dv[i];
    }
    let dk = kinetic_grad(&p_half);
    let mut q_next = vec![0.0; n];
    for i in 0..n {
        q_next[i] = q[i] + dt * dk[i];
    }
    let dv2 = potential_grad(&q_next);
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = q_next[i];
        out[n + i] = p_half[i] - half * dv2[i];
    }
    State::new(out, state.time + dt)
}

/// Taped kick-drift-kick step on separate q and p nodes.
pub fn leapfrog_step_taped(
    tape: &mut Tape,
    kinetic_grad: &mut dyn FnMut(&mut Tape, Var) -> Result<Var>,
    potential_grad: &mut dyn FnMut(&mut Tape, Var) -> Result<Var>,
    q: Var,
    p: Var,
    dt: f64,
) -> Result<(Var, Var)> {
    let half = dt / 2.0;
    let dv = potential_grad(tape, q)?;
    let kick = tape.scale(dv, -half);
    let p_half = tape.add(p, kick);
    let dk = kinetic_grad(tape, p_half)?;
    let drift = tape.scale(dk, dt);
    let q_next = tape.add(q, drift);
    let dv2 = potential_grad(tape, q_next)?;
    let kick2 = tape.scale(dv2, -half);
    let p_next = tape.add(p_half, kick2);
    Ok((q_next, p_next))
}

/// Checks once that `method` can integrate `field`; called at the start of
/// a rollout so stepping itself stays probe-free.
pub(crate) fn validate_method(field: &dyn VectorField, dim: usize, method: SolveMethod) -> Result<()> {
    if method == SolveMethod::Leapfrog {
        if dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "leapfrog needs an even state dimension, got {dim}"
            )));
        }
        let probe = vec![0.0; dim / 2];
        if field.kinetic_grad(&probe).is_none() || field.potential_grad(&probe).is_none() {
            return Err(Error::InvalidConfig(
                "leapfrog requires a separable-Hamiltonian field".into(),
            ));
        }
    }
    Ok(())
}

pub(crate) fn advance(field: &dyn VectorField, state: &State, dt: f64, method: SolveMethod) -> State {
    match method {
        SolveMethod::Rk4 => rk4_step(field, state, dt),
        SolveMethod::Leapfrog => leapfrog_step(
            &|p| field.kinetic_grad(p).expect("separable field"),
            &|q| field.potential_grad(q).expect("separable field"),
            state,
            dt,
        ),
    }
}

/// Integrates `steps` uniform steps of `config.step`, stopping with a
/// divergence error that names the first bad step if any state component
/// becomes non-finite.
pub fn rollout(
    field: &dyn VectorField,
    initial: &State,
    steps: usize,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    rollout_steps(field, initial, &vec![config.step; steps], config.method)
}

/// Integrates one step per entry of `dts` (entries may vary in size).
pub fn rollout_steps(
    field: &dyn VectorField,
    initial: &State,
    dts: &[f64],
    method: SolveMethod,
) -> Result<Trajectory> {
    if initial.dim() != field.dim() {
        return Err(Error::ShapeMismatch(format!(
            "field has dimension {}, initial state {}",
            field.dim(),
            initial.dim()
        )));
    }
    validate_method(field, initial.dim(), method)?;
    let mut states = Vec::with_capacity(dts.len() + 1);
    states.push(initial.clone());
    for (i, &dt) in dts.iter().enumerate() {
        let next = advance(field, states.last().unwrap(), dt, method);
        if next.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: i,
                detail: format!("state became non-finite at t={}", next.time),
            });
        }
        states.push(next);
    }
    Trajectory::new(states)
}

/// Bound applied by [`rollout_clamped`] and by metrics that must produce
/// finite numbers from diverging predictions.
pub const CLAMP_BOUND: f64 = 1e6;

/// Evaluation rollout that never fails: any component that leaves
/// [-1e6, 1e6] or becomes non-finite is clamped to the boundary (NaN maps
/// to +1e6) and integration continues. Returns the trajectory and the step
/// index of the first clamp, if any.
pub fn rollout_clamped(
    field: &dyn VectorField,
    initial: &State,
    dts: &[f64],
    method: SolveMethod,
) -> Result<(Trajectory, Option<usize>)> {
    if initial.dim() != field.dim() {
        return Err(Error::ShapeMismatch(format!(
            "field has dimension {}, initial state {}",
            field.dim(),
            initial.dim()
        )));
    }
    validate_method(field, initial.dim(), method)?;
    let mut states = Vec::with_capacity(dts.len() + 1);
    let mut first_clamp = None;
    states.push(initial.clone());
    for (i, &dt) in dts.iter().enumerate() {
        let mut next = advance(field, states.last().unwrap(), dt, method);
        if clamp_values(&mut next.values) && first_clamp.is_none() {
            first_clamp = Some(i);
        }
        states.push(next);
    }
    Ok((Trajectory::new(states)?, first_clamp))
}

/// Replaces non-finite components (NaN maps to the positive bound) and
/// clamps magnitudes to `CLAMP_BOUND`. Returns whether anything changed.
pub(crate) fn clamp_values(values: &mut [f64]) -> bool {
    let mut clamped = false;
    for v in values {
        if v.is_nan() {
            *v = CLAMP_BOUND;
            clamped = true;
        } else if *v > CLAMP_BOUND {
            *v = CLAMP_BOUND;
            clamped = true;
        } else if *v < -CLAMP_BOUND {
            *v = -CLAMP_BOUND;
            clamped = true;
        }
    }
    clamped
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// dq/dt = p, dp/dt = -q.
    struct Sho;

    impl VectorField for Sho {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64], _t: f64) -> Vec<f64> {
            vec![x[1], -x[0]]
        }
        fn kinetic_grad(&self, p: &[f64]) -> Option<Vec<f64>> {
            Some(p.to_vec())
        }
        fn potential_grad(&self, q: &[f64]) -> Option<Vec<f64>> {
            Some(q.to_vec())
        }
    }

    struct ZeroField(usize);

    impl VectorField for ZeroField {
        fn dim(&self) -> usize {
            self.0
        }
        fn eval(&self, x: &[f64], _t: f64) -> Vec<f64> {
            vec![0.0; x.len()]
        }
    }

    struct UnitField;

    impl VectorField for UnitField {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _x: &[f64], _t: f64) -> Vec<f64> {
            vec![1.0]
        }
    }

    /// dx/dt = x^2: blows up quickly from large initial values.
    struct SquareField;

    impl VectorField for SquareField {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &[f64], _t: f64) -> Vec<f64> {
            vec![x[0] * x[0]]
        }
    }

    #[test]
    fn rk4_single_step_tracks_harmonic_closed_form() {
        let dt = 0.1;
        let s = rk4_step(&Sho, &State::new(vec![1.0, 0.0], 0.0), dt);
        let (q, p) = (dt.cos(), -dt.sin());
        assert!((s.values[0] - q).abs() < 1e-7, "q error {}", (s.values[0] - q).abs());
        assert!((s.values[1] - p).abs() < 1e-7, "p error {}", (s.values[1] - p).abs());
    }

    #[test]
    fn rk4_two_hundred_steps_stay_close_to_closed_form() {
        let cfg = SolverConfig {
            method: SolveMethod::Rk4,
            step: 0.1,
        };
        let traj = rollout(&Sho, &State::new(vec![1.0, 0.0], 0.0), 200, &cfg).unwrap();
        for (i, s) in traj.states().iter().enumerate() {
            let t = 0.1 * i as f64;
            assert!(
                (s.values[0] - t.cos()).abs() < 1e-4 && (s.values[1] + t.sin()).abs() < 1e-4,
                "step {i} drifted: {:?}",
                s.values
            );
        }
    }

    #[test]
    fn zero_field_keeps_state_constant() {
        let cfg = SolverConfig {
            method: SolveMethod::Rk4,
            step: 0.05,
        };
        let init = State::new(vec![0.3, -0.7, 2.0], 0.0);
        let traj = rollout(&ZeroField(3), &init, 17, &cfg).unwrap();
        for s in traj.states() {
            assert_eq!(s.values, init.values);
        }
    }

    #[test]
    fn unit_field_advances_by_exactly_dt() {
        let x0 = 0.37;
        let dt = 0.1;
        let s = rk4_step(&UnitField, &State::new(vec![x0], 0.0), dt);
        assert_eq!(s.values[0], x0 + dt);
        assert_eq!(s.time, dt);
    }

    #[test]
    fn taped_rk4_matches_plain_rk4_bitwise() {
        let mut tape = Tape::new();
        let x0 = [0.8, -0.45];
        let xv = tape.leaf_vector(&x0);
        let mut field = |tape: &mut Tape, x: Var, _t: f64| -> Result<Var> {
            let p = tape.slice(x, 1, 1);
            let q = tape.slice(x, 0, 1);
            let nq = tape.scale(q, -1.0);
            Ok(tape.concat(p, nq))
        };
        let out = rk4_step_taped(&mut tape, &mut field, xv, 0.0, 0.1).unwrap();
        let plain = rk4_step(&Sho, &State::new(x0.to_vec(), 0.0), 0.1);
        assert_eq!(tape.value(out), plain.values.as_slice());
    }

    #[test]
    fn leapfrog_hand_computed_step() {
        // H = (q^2 + p^2) / 2 from (1, 0) with dt = 0.1:
        // p_half = -0.05, q' = 0.995, p' = -0.05 - 0.05 * 0.995 = -0.09975.
        let s = leapfrog_step(
            &|p| p.to_vec(),
            &|q| q.to_vec(),
            &State::new(vec![1.0, 0.0], 0.0),
            0.1,
        );
        assert!((s.values[0] - 0.995).abs() < 1e-15);
        assert!((s.values[1] + 0.09975).abs() < 1e-15);
    }

    #[test]
    fn leapfrog_free_drift_moves_q_only() {
        let s = leapfrog_step(
            &|p| p.to_vec(),
            &|q| vec![0.0; q.len()],
            &State::new(vec![2.0, -1.0, 0.5, 0.25], 0.0),
            0.2,
        );
        assert_eq!(s.values[0], 2.0 + 0.2 * 0.5);
        assert_eq!(s.values[1], -1.0 + 0.2 * 0.25);
        assert_eq!(&s.values[2..], &[0.5, 0.25]);
    }

    #[test]
    fn leapfrog_taped_matches_plain_bitwise() {
        let state = State::new(vec![0.9, -0.2, 0.1, 0.7], 0.0);
        let plain = leapfrog_step(
            &|p| vec![p[0] + 0.3 * p[1], p[1]],
            &|q| vec![q[0] * q[0], -q[1]],
            &state,
            0.13,
        );

        let mut tape = Tape::new();
        let q = tape.leaf_vector(&state.values[..2]);
        let p = tape.leaf_vector(&state.values[2..]);
        let mut kg = |tape: &mut Tape, p: Var| -> Result<Var> {
            let p0 = tape.slice(p, 0, 1);
            let p1 = tape.slice(p, 1, 1);
            let s = tape.scale(p1, 0.3);
            let first = tape.add(p0, s);
            Ok(tape.concat(first, p1))
        };
        let mut pg = |tape: &mut Tape, q: Var| -> Result<Var> {
            let q0 = tape.slice(q, 0, 1);
            let q1 = tape.slice(q, 1, 1);
            let sq = tape.mul(q0, q0);
            let nq1 = tape.scale(q1, -1.0);
            Ok(tape.concat(sq, nq1))
        };
        let (qn, pn) = leapfrog_step_taped(&mut tape, &mut kg, &mut pg, q, p, 0.13).unwrap();
        assert_eq!(tape.value(qn), &plain.values[..2]);
        assert_eq!(tape.value(pn), &plain.values[2..]);
    }

    #[test]
    fn rollout_with_zero_steps_returns_initial_state_only() {
        let cfg = SolverConfig {
            method: SolveMethod::Rk4,
            step: 0.1,
        };
        let init = State::new(vec![1.0, 2.0], 0.5);
        let traj = rollout(&Sho, &init, 0, &cfg).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.initial(), &init);
    }

    #[test]
    fn rollout_reports_divergence_step() {
        let cfg = SolverConfig {
            method: SolveMethod::Rk4,
            step: 1.0,
        };
        let err = rollout(&SquareField, &State::new(vec![1e160], 0.0), 10, &cfg).unwrap_err();
        match err {
            Error::Diverged { step, .. } => assert_eq!(step, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rollout_clamped_continues_past_blow_up() {
        let (traj, first) = rollout_clamped(
            &SquareField,
            &State::new(vec![1e160], 0.0),
            &[1.0; 5],
            SolveMethod::Rk4,
        )
        .unwrap();
        assert_eq!(first, Some(0));
        assert_eq!(traj.len(), 6);
        for s in traj.states().iter().skip(1) {
            assert!(s.values[0].abs() <= CLAMP_BOUND);
        }
    }

    #[test]
    fn leapfrog_rejects_fields_without_separable_structure() {
        let cfg = SolverConfig {
            method: SolveMethod::Leapfrog,
            step: 0.1,
        };
        let err = rollout(&UnitField, &State::new(vec![0.0], 0.0), 3, &cfg).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn trajectory_validation_rejects_bad_sequences() {
        assert!(Trajectory::new(vec![]).is_err());
        assert!(Trajectory::new(vec![
            State::new(vec![1.0], 0.0),
            State::new(vec![1.0, 2.0], 0.1),
        ])
        .is_err());
        assert!(Trajectory::new(vec![
            State::new(vec![1.0], 0.0),
            State::new(vec![1.0], 0.0),
        ])
        .is_err());
        assert!(Trajectory::new(vec![State::new(vec![f64::NAN], 0.0)]).is_err());
    }

    #[test]
    fn leapfrog_energy_stays_bounded_for_sho() {
        // H = (q^2 + p^2) / 2, dt = 0.1, 200 steps: |H - H0| < 1e-3 at every
        // step. The oscillation amplitude is proportional to the orbit
        // energy (about 2.2e-3 * H at this step size), so a moderate orbit
        // keeps that bound with real margin while still covering 3+ periods.
        let mut s = State::new(vec![0.6, 0.4], 0.0);
        let h0 = 0.5 * (s.values[0] * s.values[0] + s.values[1] * s.values[1]);
        let mut max_dev: f64 = 0.0;
        for _ in 0..200 {
            s = leapfrog_step(&|p| p.to_vec(), &|q| q.to_vec(), &s, 0.1);
            let h = 0.5 * (s.values[0] * s.values[0] + s.values[1] * s.values[1]);
            max_dev = max_dev.max((h - h0).abs());
        }
        assert!(max_dev < 1e-3, "energy deviation reached {max_dev}");
        // Oscillation, not secular drift: the deviation must not grow with
        // the horizon.
        for _ in 0..800 {
            s = leapfrog_step(&|p| p.to_vec(), &|q| q.to_vec(), &s, 0.1);
            let h = 0.5 * (s.values[0] * s.values[0] + s.values[1] * s.values[1]);
            assert!((h - h0).abs() < 1.5 * max_dev, "late drift exceeded the early bound");
        }
    }

    /// Conservative Duffing-type field used for the equivariance property.
    struct Conservative {
        alpha: f64,
        beta: f64,
    }

    impl VectorField for Conservative {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64], _t: f64) -> Vec<f64> {
            let (q, p) = (x[0], x[1]);
            vec![p, -self.alpha * q - self.beta * q * q * q]
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// For fields with f(R x) = -R f(x) under R(q, p) = (q, -p), one RK4
        /// step satisfies R(step(x, dt)) = step(R x, -dt) exactly.
        #[test]
        fn rk4_equivariance_under_momentum_flip(
            alpha in -2.0..2.0f64,
            beta in -2.0..2.0f64,
            q in -1.5..1.5f64,
            p in -1.5..1.5f64,
            dt in 0.01..0.3f64,
        ) {
            let field = Conservative { alpha, beta };
            let fwd = rk4_step(&field, &State::new(vec![q, p], 0.0), dt);
            let bwd = rk4_step(&field, &State::new(vec![q, -p], 0.0), -dt);
            prop_assert!((fwd.values[0] - bwd.values[0]).abs() < 1e-14);
            prop_assert!((fwd.values[1] + bwd.values[1]).abs() < 1e-14);
        }

        /// Leapfrog followed by the same step with -dt recovers the inputs.
        #[test]
        fn leapfrog_negative_step_inverts_forward_step(
            a in -1.0..1.0f64,
            b in -1.0..1.0f64,
            c in -1.0..1.0f64,
            q in -2.0..2.0f64,
            p in -2.0..2.0f64,
            dt in 1e-3..0.2f64,
        ) {
            let kg = move |pv: &[f64]| vec![pv[0] + a * pv[0] * pv[0] * pv[0]];
            let pg = move |qv: &[f64]| vec![b * qv[0] + c * qv[0] * qv[0] * qv[0]];
            let start = State::new(vec![q, p], 0.0);
            let fwd = leapfrog_step(&kg, &pg, &start, dt);
            let back = leapfrog_step(&kg, &pg, &fwd, -dt);
            prop_assert!((back.values[0] - q).abs() < 1e-12);
            prop_assert!((back.values[1] - p).abs() < 1e-12);
        }
    }
}
