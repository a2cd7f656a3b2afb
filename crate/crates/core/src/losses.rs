//! Training objectives: reversing operators, the data-fit rollout loss,
//! the time-reversal-symmetry regularizer, lambda schedules, and their
//! combination.
//!
//! All losses are built as tape graphs over a staged model so one
//! backward pass yields parameter gradients. Per segment, each loss is a
//! sum over transitions; averaging across segments is the trainer's job.
//!
//! The symmetry loss needs no observed data beyond the segment's initial
//! state: it rolls the model forward, rolls the reversed initial state
//! backward through the same solver with negated steps, and penalizes the
//! mismatch between the reversed forward chain and the backward chain.
//! For time-dependent fields the backward chain runs at reflected times
//! -t + a, where `a` is the reversing operator's time offset.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::integrators::{SolveMethod, State, Trajectory};
use crate::models::StagedModel;

/// Linear involution on phase space, plus the time offset used when
/// reversing non-autonomous dynamics (t maps to -t + a).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReversingKind {
    /// (q, p) -> (q, -p); state splits into equal halves.
    MomentumFlip,
    /// x -> -x.
    FullNegation,
    /// Componentwise multiplication by an explicit +-1 mask.
    Custom { signs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversingOperator {
    #[serde(flatten)]
    pub kind: ReversingKind,
    /// Offset `a` in the reflected time -t + a. Only non-autonomous
    /// losses read it.
    #[serde(default)]
    pub time_offset: f64,
}

impl ReversingOperator {
    pub fn momentum_flip() -> Self {
        ReversingOperator {
            kind: ReversingKind::MomentumFlip,
            time_offset: 0.0,
        }
    }

    pub fn full_negation() -> Self {
        ReversingOperator {
            kind: ReversingKind::FullNegation,
            time_offset: 0.0,
        }
    }

    pub fn custom(signs: Vec<f64>) -> Self {
        ReversingOperator {
            kind: ReversingKind::Custom { signs },
            time_offset: 0.0,
        }
    }

    pub fn with_time_offset(mut self, a: f64) -> Self {
        self.time_offset = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.time_offset.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "time offset must be finite, got {}",
                self.time_offset
            )));
        }
        if let ReversingKind::Custom { signs } = &self.kind {
            if signs.is_empty() {
                return Err(Error::InvalidConfig("sign mask must be non-empty".into()));
            }
            if signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
                return Err(Error::InvalidConfig(
                    "sign mask entries must be +1 or -1 so the operator is an involution".into(),
                ));
            }
        }
        Ok(())
    }

    /// The +-1 diagonal for a `dim`-dimensional state.
    pub fn sign_mask(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.kind {
            ReversingKind::MomentumFlip => {
                if dim == 0 || dim % 2 != 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "momentum flip needs an even state dimension, got {dim}"
                    )));
                }
                let half = dim / 2;
                Ok((0..dim).map(|i| if i < half { 1.0 } else { -1.0 }).collect())
            }
            ReversingKind::FullNegation => Ok(vec![-1.0; dim]),
            ReversingKind::Custom { signs } => {
                if signs.len() != dim {
                    return Err(Error::ShapeMismatch(format!(
                        "sign mask has {} entries for a {dim}-dimensional state",
                        signs.len()
                    )));
                }
                Ok(signs.clone())
            }
        }
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        let mask = self.sign_mask(values.len())?;
        Ok(values.iter().zip(&mask).map(|(v, s)| v * s).collect())
    }

    /// Applies the mask and reflects time: (x, t) -> (R x, -t + a).
    pub fn apply_state(&self, state: &State) -> Result<State> {
        Ok(State::new(self.apply(&state.values)?, self.reflect_time(state.time)))
    }

    pub fn reflect_time(&self, t: f64) -> f64 {
        -t + self.time_offset
    }

    /// The mask as tape operations: sign flips are exact in IEEE
    /// arithmetic, so taped and plain applications agree bitwise.
    pub fn apply_taped(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let dim = tape.len_of(x);
        match &self.kind {
            ReversingKind::MomentumFlip => {
                if dim == 0 || dim % 2 != 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "momentum flip needs an even state dimension, got {dim}"
                    )));
                }
                let half = dim / 2;
                let q = tape.slice(x, 0, half);
                let p = tape.slice(x, half, half);
                let flipped = tape.scale(p, -1.0);
                Ok(tape.concat(q, flipped))
            }
            ReversingKind::FullNegation => Ok(tape.scale(x, -1.0)),
            ReversingKind::Custom { signs } => {
                if signs.len() != dim {
                    return Err(Error::ShapeMismatch(format!(
                        "sign mask has {} entries for a {dim}-dimensional state",
                        signs.len()
                    )));
                }
                let mask = tape.leaf_vector(signs);
                Ok(tape.mul(x, mask))
            }
        }
    }
}

/// Weight of the symmetry loss, possibly growing linearly in min-max
/// normalized time for partially reversible systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaSchedule {
    Constant { value: f64 },
    LinearInNormalizedTime { coefficient: f64 },
}

impl LambdaSchedule {
    pub fn validate(&self) -> Result<()> {
        let v = match self {
            LambdaSchedule::Constant { value } => *value,
            LambdaSchedule::LinearInNormalizedTime { coefficient } => *coefficient,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {v}"
            )));
        }
        Ok(())
    }

    /// True when the schedule contributes nothing anywhere, so the
    /// symmetry chain can be skipped entirely.
    pub fn is_zero(&self) -> bool {
        matches!(
            self,
            LambdaSchedule::Constant { value: 0.0 }
                | LambdaSchedule::LinearInNormalizedTime { coefficient: 0.0 }
        )
    }
}

/// Evaluates the schedule at time `t`, normalizing by the global span
/// [t_min, t_max] fixed before training. Times outside the span clamp to
/// the boundary value, keeping the weight non-negative everywhere.
pub fn lambda_value(schedule: &LambdaSchedule, t: f64, t_min: f64, t_max: f64) -> Result<f64> {
    match schedule {
        LambdaSchedule::Constant { value } => Ok(*value),
        LambdaSchedule::LinearInNormalizedTime { coefficient } => {
            if !(t_min.is_finite() && t_max.is_finite()) || t_max <= t_min {
                return Err(Error::InvalidConfig(format!(
                    "normalization span must satisfy t_min < t_max, got [{t_min}, {t_max}]"
                )));
            }
            let normalized = ((t - t_min) / (t_max - t_min)).clamp(0.0, 1.0);
            Ok(coefficient * normalized)
        }
    }
}

fn check_segment(staged: &StagedModel, segment: &Trajectory) -> Result<()> {
    if segment.dim() != staged.state_dim() {
        return Err(Error::ShapeMismatch(format!(
            "segment dimension {} does not match model dimension {}",
            segment.dim(),
            staged.state_dim()
        )));
    }
    if segment.transitions() == 0 {
        return Err(Error::InvalidData("segment has no transitions".into()));
    }
    Ok(())
}

/// ||a - b||^2 as tape nodes.
fn squared_distance(tape: &mut Tape, a: Var, b: Var) -> Var {
    let diff = tape.sub(a, b);
    tape.dot(diff, diff)
}

/// Rolls `step` along the grid, collecting every state node including the
/// initial one.
fn taped_chain(
    tape: &mut Tape,
    step: &mut dyn FnMut(&mut Tape, Var, f64, f64) -> Result<Var>,
    x0: Var,
    times: &[f64],
    dts: &[f64],
) -> Result<Vec<Var>> {
    let mut states = Vec::with_capacity(dts.len() + 1);
    states.push(x0);
    let mut x = x0;
    for (i, &dt) in dts.iter().enumerate() {
        x = step(tape, x, times[i], dt)?;
        states.push(x);
    }
    Ok(states)
}

/// Per-transition squared discrepancies between the reversed forward
/// chain and the backward chain: term_i = ||R(x_{i+1}) - x_R(i+1)||^2.
/// The backward chain starts at R(x_0) and steps with -dt from reflected
/// times -t + a.
fn trs_terms(
    tape: &mut Tape,
    step: &mut dyn FnMut(&mut Tape, Var, f64, f64) -> Result<Var>,
    forward: &[Var],
    times: &[f64],
    dts: &[f64],
    reversing: &ReversingOperator,
) -> Result<Vec<Var>> {
    let mut terms = Vec::with_capacity(dts.len());
    let mut backward = reversing.apply_taped(tape, forward[0])?;
    for i in 0..dts.len() {
        backward = step(tape, backward, reversing.reflect_time(times[i]), -dts[i])?;
        let reflected = reversing.apply_taped(tape, forward[i + 1])?;
        terms.push(squared_distance(tape, reflected, backward));
    }
    Ok(terms)
}

fn sum_terms(tape: &mut Tape, terms: &[Var]) -> Var {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t);
    }
    acc
}

fn staged_step<'a>(
    staged: &'a StagedModel,
    method: SolveMethod,
) -> impl FnMut(&mut Tape, Var, f64, f64) -> Result<Var> + 'a {
    move |tape, x, t, dt| staged.step(tape, x, t, dt, method)
}

/// Data-fit loss over one segment: the model rolls out from the observed
/// initial state along the observed grid, and each predicted state is
/// penalized against its observation. Sum over transitions, no mean.
pub fn ode_loss(
    tape: &mut Tape,
    staged: &StagedModel,
    segment: &Trajectory,
    method: SolveMethod,
) -> Result<Var> {
    check_segment(staged, segment)?;
    let times = segment.times();
    let dts = segment.dts();
    let x0 = tape.leaf_vector(&segment.state(0).values);
    let chain = taped_chain(tape, &mut staged_step(staged, method), x0, &times, &dts)?;
    let mut terms = Vec::with_capacity(dts.len());
    for i in 0..dts.len() {
        let observed = tape.leaf_vector(&segment.state(i + 1).values);
        terms.push(squared_distance(tape, chain[i + 1], observed));
    }
    Ok(sum_terms(tape, &terms))
}

fn trs_loss_impl(
    tape: &mut Tape,
    staged: &StagedModel,
    segment: &Trajectory,
    reversing: &ReversingOperator,
    method: SolveMethod,
) -> Result<Var> {
    check_segment(staged, segment)?;
    reversing.validate()?;
    let times = segment.times();
    let dts = segment.dts();
    let x0 = tape.leaf_vector(&segment.state(0).values);
    let mut step = staged_step(staged, method);
    let chain = taped_chain(tape, &mut step, x0, &times, &dts)?;
    let terms = trs_terms(tape, &mut step, &chain, &times, &dts, reversing)?;
    Ok(sum_terms(tape, &terms))
}

/// Symmetry loss for autonomous models. Teacher-free: only the segment's
/// initial state and time grid are read.
pub fn trs_loss(
    tape: &mut Tape,
    staged: &StagedModel,
    segment: &Trajectory,
    reversing: &ReversingOperator,
    method: SolveMethod,
) -> Result<Var> {
    if staged.time_augmented() {
        return Err(Error::InvalidConfig(
            "time-augmented models must use the non-autonomous symmetry loss".into(),
        ));
    }
    trs_loss_impl(tape, staged, segment, reversing, method)
}

/// Symmetry loss for time-augmented models: the backward chain runs at
/// reflected times -t + a, with `a` from the reversing operator.
pub fn trs_loss_nonautonomous(
    tape: &mut Tape,
    staged: &StagedModel,
    segment: &Trajectory,
    reversing: &ReversingOperator,
    method: SolveMethod,
) -> Result<Var> {
    if !staged.time_augmented() {
        return Err(Error::InvalidConfig(
            "model is autonomous; use the plain symmetry loss".into(),
        ));
    }
    trs_loss_impl(tape, staged, segment, reversing, method)
}

/// The pieces of one segment's combined objective. `trs` is the
/// unweighted symmetry sum (absent when the schedule is identically
/// zero); `total` carries the per-transition lambda weighting.
pub struct CombinedLossVars {
    pub ode: Var,
    pub trs: Option<Var>,
    pub total: Var,
}

/// Builds data-fit + weighted symmetry loss over one segment, sharing a
/// single forward chain between both parts. Each symmetry summand is
/// weighted by lambda at its transition's start time; a schedule that is
/// identically zero skips the backward chain entirely, reducing to plain
/// data-fit training.
pub fn combined_loss(
    tape: &mut Tape,
    staged: &StagedModel,
    segment: &Trajectory,
    reversing: &ReversingOperator,
    schedule: &LambdaSchedule,
    time_span: (f64, f64),
    method: SolveMethod,
) -> Result<CombinedLossVars> {
    check_segment(staged, segment)?;
    schedule.validate()?;
    let times = segment.times();
    let dts = segment.dts();
    let x0 = tape.leaf_vector(&segment.state(0).values);
    let mut step = staged_step(staged, method);
    let chain = taped_chain(tape, &mut step, x0, &times, &dts)?;

    let mut ode_terms = Vec::with_capacity(dts.len());
    for i in 0..dts.len() {
        let observed = tape.leaf_vector(&segment.state(i + 1).values);
        ode_terms.push(squared_distance(tape, chain[i + 1], observed));
    }
    let ode = sum_terms(tape, &ode_terms);

    if schedule.is_zero() {
        return Ok(CombinedLossVars {
            ode,
            trs: None,
            total: ode,
        });
    }

    reversing.validate()?;
    let terms = trs_terms(tape, &mut step, &chain, &times, &dts, reversing)?;
    let trs = sum_terms(tape, &terms);
    let weighted: Vec<Var> = terms
        .iter()
        .enumerate()
        .map(|(i, &term)| {
            lambda_value(schedule, times[i], time_span.0, time_span.1).map(|l| tape.scale(term, l))
        })
        .collect::<Result<_>>()?;
    let weighted_sum = sum_terms(tape, &weighted);
    let total = tape.add(ode, weighted_sum);
    Ok(CombinedLossVars {
        ode,
        trs: Some(trs),
        total,
    })
}
