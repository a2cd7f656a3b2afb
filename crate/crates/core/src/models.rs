//! Learnable vector fields: plain ODE networks (ODEN) and separable
//! Hamiltonian ODE networks (HODEN), with optional time augmentation for
//! non-autonomous dynamics.
//!
//! Every model evaluates through two mirrored paths. The plain `f64` path
//! backs rollouts and metrics; the taped path backs training. Both run
//! the same arithmetic in the same order, so a staged training step
//! reproduces the plain step bit for bit. Numeric failures in plain
//! evaluation surface as non-finite field values, which rollouts then
//! report as divergence at a specific step instead of panicking.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    mlp_forward, mlp_forward_value, mlp_input_gradient, mlp_input_gradient_value, Gradients,
    MlpSpec, ModelParams, StagedMlp, Tape, Var,
};
use crate::error::{Error, Result};
use crate::integrators::{leapfrog_step_taped, rk4_step_taped, SolveMethod, VectorField};

/// Plain ODE network: one MLP mapping the state (plus time, when
/// augmented) to its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct OdenModel {
    pub spec: MlpSpec,
    pub params: ModelParams,
    pub time_augmented: bool,
}

impl OdenModel {
    pub fn new(
        state_dim: usize,
        hidden: Vec<usize>,
        time_augmented: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input_dim = state_dim + usize::from(time_augmented);
        let spec = MlpSpec::new(input_dim, hidden, state_dim);
        spec.validate()?;
        let params = ModelParams::init(&spec, rng);
        Ok(OdenModel {
            spec,
            params,
            time_augmented,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let expected_input = self.state_dim() + usize::from(self.time_augmented);
        if self.spec.input_dim != expected_input {
            return Err(Error::InvalidConfig(format!(
                "network maps {} inputs to {} outputs; a{} field on {} dims needs {} inputs",
                self.spec.input_dim,
                self.spec.output_dim,
                if self.time_augmented { " time-augmented" } else { "n autonomous" },
                self.state_dim(),
                expected_input
            )));
        }
        if !self.params.matches(&self.spec) {
            return Err(Error::InvalidConfig("parameter layout does not match network spec".into()));
        }
        Ok(())
    }
}

/// Separable Hamiltonian ODE network: H(q, p) = K(p) + V(q) with scalar
/// kinetic and potential nets. The induced field is
/// (dq/dt, dp/dt) = (dK/dp, -dV/dq).
#[derive(Debug, Clone, PartialEq)]
pub struct HodenModel {
    pub kinetic_spec: MlpSpec,
    pub potential_spec: MlpSpec,
    pub kinetic_params: ModelParams,
    pub potential_params: ModelParams,
    pub time_augmented: bool,
}

impl HodenModel {
    /// Initializes both nets from `rng`: kinetic first, then potential.
    pub fn new(
        state_dim: usize,
        hidden: Vec<usize>,
        time_augmented: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if state_dim == 0 || state_dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "separable Hamiltonian models need an even state dimension, got {state_dim}"
            )));
        }
        let half = state_dim / 2;
        let input_dim = half + usize::from(time_augmented);
        let kinetic_spec = MlpSpec::new(input_dim, hidden.clone(), 1);
        kinetic_spec.validate()?;
        let potential_spec = kinetic_spec.clone();
        let kinetic_params = ModelParams::init(&kinetic_spec, rng);
        let potential_params = ModelParams::init(&potential_spec, rng);
        Ok(HodenModel {
            kinetic_spec,
            potential_spec,
            kinetic_params,
            potential_params,
            time_augmented,
        })
    }

    /// Dimension of q (equal to that of p).
    pub fn half_dim(&self) -> usize {
        self.kinetic_spec.input_dim - usize::from(self.time_augmented)
    }

    pub fn state_dim(&self) -> usize {
        2 * self.half_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.kinetic_spec.validate()?;
        self.potential_spec.validate()?;
        if self.kinetic_spec.output_dim != 1 || self.potential_spec.output_dim != 1 {
            return Err(Error::InvalidConfig("kinetic and potential nets must be scalar-valued".into()));
        }
        if self.kinetic_spec.input_dim != self.potential_spec.input_dim {
            return Err(Error::InvalidConfig(format!(
                "kinetic input dim {} differs from potential input dim {}",
                self.kinetic_spec.input_dim, self.potential_spec.input_dim
            )));
        }
        if self.half_dim() == 0 {
            return Err(Error::InvalidConfig("state dimension must be positive".into()));
        }
        if !self.kinetic_params.matches(&self.kinetic_spec)
            || !self.potential_params.matches(&self.potential_spec)
        {
            return Err(Error::InvalidConfig("parameter layout does not match network spec".into()));
        }
        Ok(())
    }

    fn kinetic_input(&self, p: &[f64], t: f64) -> Vec<f64> {
        let mut input = p.to_vec();
        if self.time_augmented {
            input.push(t);
        }
        input
    }

    fn potential_input(&self, q: &[f64], t: f64) -> Vec<f64> {
        let mut input = q.to_vec();
        if self.time_augmented {
            input.push(t);
        }
        input
    }

    /// Model energy K(p) + V(q), with time appended to both nets' inputs
    /// when the model is time-augmented.
    pub fn energy(&self, q: &[f64], p: &[f64], t: f64) -> Result<f64> {
        let k = mlp_forward_value(&self.kinetic_spec, &self.kinetic_params, &self.kinetic_input(p, t))?;
        let v = mlp_forward_value(
            &self.potential_spec,
            &self.potential_params,
            &self.potential_input(q, t),
        )?;
        Ok(k[0] + v[0])
    }

    /// Energy with the ground level shifted so the origin reads zero:
    /// H(q, p) - H(0, 0) at the same time.
    pub fn energy_calibrated(&self, q: &[f64], p: &[f64], t: f64) -> Result<f64> {
        let zero = vec![0.0; self.half_dim()];
        Ok(self.energy(q, p, t)? - self.energy(&zero, &zero, t)?)
    }
}

/// A trainable model together with everything needed to roll it out.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Oden(OdenModel),
    Hoden(HodenModel),
}

/// Checkpoint-facing description of a model: architecture without the
/// parameter values, which travel separately as a flat blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDescriptor {
    Oden {
        spec: MlpSpec,
        time_augmented: bool,
    },
    Hoden {
        kinetic: MlpSpec,
        potential: MlpSpec,
        time_augmented: bool,
    },
}

impl ModelDescriptor {
    pub fn param_count(&self) -> usize {
        match self {
            ModelDescriptor::Oden { spec, .. } => spec.num_params(),
            ModelDescriptor::Hoden { kinetic, potential, .. } => {
                kinetic.num_params() + potential.num_params()
            }
        }
    }
}

impl Model {
    pub fn new_oden(
        state_dim: usize,
        hidden: Vec<usize>,
        time_augmented: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Model::Oden(OdenModel::new(state_dim, hidden, time_augmented, rng)?))
    }

    pub fn new_hoden(
        state_dim: usize,
        hidden: Vec<usize>,
        time_augmented: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Model::Hoden(HodenModel::new(state_dim, hidden, time_augmented, rng)?))
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Model::Oden(m) => m.state_dim(),
            Model::Hoden(m) => m.state_dim(),
        }
    }

    pub fn time_augmented(&self) -> bool {
        match self {
            Model::Oden(m) => m.time_augmented,
            Model::Hoden(m) => m.time_augmented,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Oden(m) => m.validate(),
            Model::Hoden(m) => m.validate(),
        }
    }

    /// Leapfrog needs the separable Hamiltonian structure and an
    /// autonomous field.
    pub fn supports_leapfrog(&self) -> bool {
        matches!(self, Model::Hoden(m) if !m.time_augmented)
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Oden(m) => m.params.as_slice().len(),
            Model::Hoden(m) => {
                m.kinetic_params.as_slice().len() + m.potential_params.as_slice().len()
            }
        }
    }

    /// All parameters as one flat vector: ODEN nets directly, HODEN as
    /// kinetic followed by potential. The optimizer and checkpoints both
    /// use this layout.
    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            Model::Oden(m) => m.params.as_slice().to_vec(),
            Model::Hoden(m) => {
                let mut flat = m.kinetic_params.as_slice().to_vec();
                flat.extend_from_slice(m.potential_params.as_slice());
                flat
            }
        }
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        match self {
            Model::Oden(m) => m.params.as_mut_slice().copy_from_slice(flat),
            Model::Hoden(m) => {
                let k = m.kinetic_params.as_slice().len();
                m.kinetic_params.as_mut_slice().copy_from_slice(&flat[..k]);
                m.potential_params.as_mut_slice().copy_from_slice(&flat[k..]);
            }
        }
        Ok(())
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        match self {
            Model::Oden(m) => ModelDescriptor::Oden {
                spec: m.spec.clone(),
                time_augmented: m.time_augmented,
            },
            Model::Hoden(m) => ModelDescriptor::Hoden {
                kinetic: m.kinetic_spec.clone(),
                potential: m.potential_spec.clone(),
                time_augmented: m.time_augmented,
            },
        }
    }

    pub fn from_descriptor(descriptor: ModelDescriptor, flat: Vec<f64>) -> Result<Model> {
        if flat.len() != descriptor.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "descriptor expects {} parameters, got {}",
                descriptor.param_count(),
                flat.len()
            )));
        }
        let model = match descriptor {
            ModelDescriptor::Oden { spec, time_augmented } => {
                let params = ModelParams::from_flat(&spec, flat)?;
                Model::Oden(OdenModel {
                    spec,
                    params,
                    time_augmented,
                })
            }
            ModelDescriptor::Hoden {
                kinetic,
                potential,
                time_augmented,
            } => {
                let split = kinetic.num_params();
                let mut flat = flat;
                let potential_flat = flat.split_off(split);
                Model::Hoden(HodenModel {
                    kinetic_params: ModelParams::from_flat(&kinetic, flat)?,
                    potential_params: ModelParams::from_flat(&potential, potential_flat)?,
                    kinetic_spec: kinetic,
                    potential_spec: potential,
                    time_augmented,
                })
            }
        };
        model.validate()?;
        Ok(model)
    }

    /// The model as a plain vector field for rollouts and metrics.
    pub fn field(&self) -> ModelField<'_> {
        ModelField { model: self }
    }
}

/// `VectorField` view of a model. Numeric failures (overflowing nets)
/// yield non-finite outputs so the surrounding rollout reports divergence
/// with a step index.
#[derive(Debug, Clone, Copy)]
pub struct ModelField<'a> {
    model: &'a Model,
}

fn poison(dim: usize) -> Vec<f64> {
    vec![f64::INFINITY; dim]
}

impl VectorField for ModelField<'_> {
    fn dim(&self) -> usize {
        self.model.state_dim()
    }

    fn is_autonomous(&self) -> bool {
        !self.model.time_augmented()
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        match self.model {
            Model::Oden(m) => {
                let mut input = x.to_vec();
                if m.time_augmented {
                    input.push(t);
                }
                mlp_forward_value(&m.spec, &m.params, &input).unwrap_or_else(|_| poison(x.len()))
            }
            Model::Hoden(m) => {
                let half = m.half_dim();
                let (q, p) = x.split_at(half);
                let dk = mlp_input_gradient_value(
                    &m.kinetic_spec,
                    &m.kinetic_params,
                    &m.kinetic_input(p, t),
                );
                let dv = mlp_input_gradient_value(
                    &m.potential_spec,
                    &m.potential_params,
                    &m.potential_input(q, t),
                );
                match (dk, dv) {
                    (Ok(dk), Ok(dv)) => {
                        let mut out = Vec::with_capacity(2 * half);
                        out.extend_from_slice(&dk[..half]);
                        out.extend(dv[..half].iter().map(|g| -g));
                        out
                    }
                    _ => poison(x.len()),
                }
            }
        }
    }

    fn kinetic_grad(&self, p: &[f64]) -> Option<Vec<f64>> {
        match self.model {
            Model::Hoden(m) if !m.time_augmented => Some(
                mlp_input_gradient_value(&m.kinetic_spec, &m.kinetic_params, p)
                    .unwrap_or_else(|_| poison(p.len())),
            ),
            _ => None,
        }
    }

    fn potential_grad(&self, q: &[f64]) -> Option<Vec<f64>> {
        match self.model {
            Model::Hoden(m) if !m.time_augmented => Some(
                mlp_input_gradient_value(&m.potential_spec, &m.potential_params, q)
                    .unwrap_or_else(|_| poison(q.len())),
            ),
            _ => None,
        }
    }
}

/// A model's parameters staged on a tape as differentiable leaves, ready
/// to build rollout graphs.
pub enum StagedModel {
    Oden {
        net: StagedMlp,
        time_augmented: bool,
        state_dim: usize,
    },
    Hoden {
        kinetic: StagedMlp,
        potential: StagedMlp,
        time_augmented: bool,
        half: usize,
    },
}

impl StagedModel {
    pub fn stage(tape: &mut Tape, model: &Model) -> StagedModel {
        match model {
            Model::Oden(m) => StagedModel::Oden {
                net: StagedMlp::stage(tape, &m.params),
                time_augmented: m.time_augmented,
                state_dim: m.state_dim(),
            },
            Model::Hoden(m) => StagedModel::Hoden {
                kinetic: StagedMlp::stage(tape, &m.kinetic_params),
                potential: StagedMlp::stage(tape, &m.potential_params),
                time_augmented: m.time_augmented,
                half: m.half_dim(),
            },
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            StagedModel::Oden { state_dim, .. } => *state_dim,
            StagedModel::Hoden { half, .. } => 2 * half,
        }
    }

    pub fn time_augmented(&self) -> bool {
        match self {
            StagedModel::Oden { time_augmented, .. }
            | StagedModel::Hoden { time_augmented, .. } => *time_augmented,
        }
    }

    /// f(x, t) as tape nodes; mirrors `ModelField::eval` exactly.
    pub fn field(&self, tape: &mut Tape, x: Var, t: f64) -> Result<Var> {
        match self {
            StagedModel::Oden {
                net, time_augmented, ..
            } => {
                let input = if *time_augmented {
                    let tv = tape.scalar(t);
                    tape.concat(x, tv)
                } else {
                    x
                };
                mlp_forward(tape, net, input)
            }
            StagedModel::Hoden {
                kinetic,
                potential,
                time_augmented,
                half,
            } => {
                let q = tape.slice(x, 0, *half);
                let p = tape.slice(x, *half, *half);
                let (kin_in, pot_in) = if *time_augmented {
                    let tv = tape.scalar(t);
                    let tv2 = tape.scalar(t);
                    (tape.concat(p, tv), tape.concat(q, tv2))
                } else {
                    (p, q)
                };
                let dk = mlp_input_gradient(tape, kinetic, kin_in)?;
                let dv = mlp_input_gradient(tape, potential, pot_in)?;
                let (dq, dv_q) = if *time_augmented {
                    (tape.slice(dk, 0, *half), tape.slice(dv, 0, *half))
                } else {
                    (dk, dv)
                };
                let dp = tape.scale(dv_q, -1.0);
                Ok(tape.concat(dq, dp))
            }
        }
    }

    /// One taped solver step from state node `x` at time `t`. Bitwise
    /// equal to the plain-path step on the same numbers.
    pub fn step(
        &self,
        tape: &mut Tape,
        x: Var,
        t: f64,
        dt: f64,
        method: SolveMethod,
    ) -> Result<Var> {
        match method {
            SolveMethod::Rk4 => {
                rk4_step_taped(tape, &mut |tape, x, t| self.field(tape, x, t), x, t, dt)
            }
            SolveMethod::Leapfrog => match self {
                StagedModel::Hoden {
                    kinetic,
                    potential,
                    time_augmented: false,
                    half,
                } => {
                    let q = tape.slice(x, 0, *half);
                    let p = tape.slice(x, *half, *half);
                    let (q_next, p_next) = leapfrog_step_taped(
                        tape,
                        &mut |tape, v| mlp_input_gradient(tape, kinetic, v),
                        &mut |tape, v| mlp_input_gradient(tape, potential, v),
                        q,
                        p,
                        dt,
                    )?;
                    Ok(tape.concat(q_next, p_next))
                }
                StagedModel::Hoden {
                    time_augmented: true,
                    ..
                } => Err(Error::InvalidConfig(
                    "leapfrog needs an autonomous Hamiltonian; this model is time-augmented".into(),
                )),
                StagedModel::Oden { .. } => Err(Error::InvalidConfig(
                    "leapfrog needs a separable Hamiltonian model".into(),
                )),
            },
        }
    }

    /// Adds this model's parameter gradients into `acc`, which uses the
    /// same layout as `Model::flat_params`.
    pub fn accumulate_grads(&self, grads: &Gradients<'_>, acc: &mut [f64]) {
        match self {
            StagedModel::Oden { net, .. } => net.accumulate_grads(grads, acc),
            StagedModel::Hoden { kinetic, potential, .. } => {
                let k = kinetic.param_count();
                kinetic.accumulate_grads(grads, &mut acc[..k]);
                potential.accumulate_grads(grads, &mut acc[k..]);
            }
        }
    }
}
