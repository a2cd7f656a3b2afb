//! Benchmark dynamical systems, initial-state samplers, and dataset
//! generation.
//!
//! Ground-truth trajectories are always integrated with RK4 at the dataset
//! step size; solver choice in experiment configs only affects how models
//! are rolled out. Generation is deterministic: every trajectory derives
//! its own RNG streams (one for the initial state, one for noise) from the
//! dataset seed and the trajectory index, so datasets are reproducible
//! bit for bit and the clean data does not depend on the noise level.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{rollout, SolveMethod, SolverConfig, State, Trajectory, VectorField};

/// Parameters of the forced, damped Duffing oscillator
///   dq/dt = p
///   dp/dt = -alpha q - beta q^3 - gamma p + delta cos(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl DuffingParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("duffing {name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Conservative systems (no damping, no forcing) are separable
    /// Hamiltonians and time-reversal symmetric under the momentum flip.
    pub fn is_conservative(&self) -> bool {
        self.gamma == 0.0 && self.delta == 0.0
    }
}

/// The Duffing oscillator as a vector field on (q, p).
#[derive(Debug, Clone)]
pub struct DuffingField {
    pub params: DuffingParams,
}

impl VectorField for DuffingField {
    fn dim(&self) -> usize {
        2
    }

    fn is_autonomous(&self) -> bool {
        self.params.delta == 0.0
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let (q, p) = (x[0], x[1]);
        let DuffingParams {
            alpha,
            beta,
            gamma,
            delta,
        } = self.params;
        let mut dp = -alpha * q - beta * q * q * q;
        if gamma != 0.0 {
            dp -= gamma * p;
        }
        if delta != 0.0 {
            dp += delta * t.cos();
        }
        vec![p, dp]
    }

    fn kinetic_grad(&self, p: &[f64]) -> Option<Vec<f64>> {
        if self.params.is_conservative() {
            Some(p.to_vec())
        } else {
            None
        }
    }

    fn potential_grad(&self, q: &[f64]) -> Option<Vec<f64>> {
        if self.params.is_conservative() {
            let q = q[0];
            Some(vec![self.params.alpha * q + self.params.beta * q * q * q])
        } else {
            None
        }
    }
}

/// Three-dimensional volume-preserving flow with a time-reversal symmetry
/// under full state negation:
///   dx/dt = 1 + yz
///   dy/dt = -xz
///   dz/dt = y^2 + 2yz.
#[derive(Debug, Clone, Default)]
pub struct ReversibleAttractorField;

impl VectorField for ReversibleAttractorField {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, x: &[f64], _t: f64) -> Vec<f64> {
        let (x0, y, z) = (x[0], x[1], x[2]);
        vec![1.0 + y * z, -x0 * z, y * y + 2.0 * y * z]
    }
}

/// Two linearly coupled, identically damped oscillators. State order is
/// [q1, q2, p1, p2] (position half then momentum half).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledOscillatorParams {
    pub stiffness: f64,
    pub coupling: f64,
    pub damping: f64,
}

impl CoupledOscillatorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stiffness", self.stiffness),
            ("coupling", self.coupling),
            ("damping", self.damping),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "coupled oscillator {name} must be finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CoupledOscillatorField {
    pub params: CoupledOscillatorParams,
}

impl VectorField for CoupledOscillatorField {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, x: &[f64], _t: f64) -> Vec<f64> {
        let (q1, q2, p1, p2) = (x[0], x[1], x[2], x[3]);
        let CoupledOscillatorParams {
            stiffness: k,
            coupling: c,
            damping: g,
        } = self.params;
        vec![
            p1,
            p2,
            -k * q1 - c * (q1 - q2) - g * p1,
            -k * q2 - c * (q2 - q1) - g * p2,
        ]
    }

    fn kinetic_grad(&self, p: &[f64]) -> Option<Vec<f64>> {
        if self.params.damping == 0.0 {
            Some(p.to_vec())
        } else {
            None
        }
    }

    fn potential_grad(&self, q: &[f64]) -> Option<Vec<f64>> {
        if self.params.damping == 0.0 {
            let CoupledOscillatorParams {
                stiffness: k,
                coupling: c,
                ..
            } = self.params;
            Some(vec![
                k * q[0] + c * (q[0] - q[1]),
                k * q[1] + c * (q[1] - q[0]),
            ])
        } else {
            None
        }
    }
}

/// Which ground-truth system generates the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    Duffing(DuffingParams),
    ReversibleAttractor,
    CoupledOscillators(CoupledOscillatorParams),
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Duffing(_) => 2,
            SystemSpec::ReversibleAttractor => 3,
            SystemSpec::CoupledOscillators(_) => 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::Duffing(p) => p.validate(),
            SystemSpec::ReversibleAttractor => Ok(()),
            SystemSpec::CoupledOscillators(p) => p.validate(),
        }
    }

    pub fn build_field(&self) -> Box<dyn VectorField> {
        match self {
            SystemSpec::Duffing(p) => Box::new(DuffingField { params: *p }),
            SystemSpec::ReversibleAttractor => Box::new(ReversibleAttractorField),
            SystemSpec::CoupledOscillators(p) => Box::new(CoupledOscillatorField { params: *p }),
        }
    }
}

/// How initial states are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSampler {
    /// Area-uniform over the annulus r_min <= |(q, p)| <= r_max.
    Annulus { r_min: f64, r_max: f64 },
    /// Fixed (x, y), z uniform in [z_min, z_max]. For 3-d systems.
    FixedXyUniformZ {
        x: f64,
        y: f64,
        z_min: f64,
        z_max: f64,
    },
}

impl InitialSampler {
    pub fn dim(&self) -> usize {
        match self {
            InitialSampler::Annulus { .. } => 2,
            InitialSampler::FixedXyUniformZ { .. } => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialSampler::Annulus { r_min, r_max } => {
                if !(r_min.is_finite() && r_max.is_finite()) || r_min < 0.0 || r_max <= r_min {
                    return Err(Error::InvalidConfig(format!(
                        "annulus needs 0 <= r_min < r_max, got [{r_min}, {r_max}]"
                    )));
                }
                Ok(())
            }
            InitialSampler::FixedXyUniformZ { z_min, z_max, x, y } => {
                if !(x.is_finite() && y.is_finite() && z_min.is_finite() && z_max.is_finite())
                    || z_max < z_min
                {
                    return Err(Error::InvalidConfig(format!(
                        "z range must be finite with z_min <= z_max, got [{z_min}, {z_max}]"
                    )));
                }
                Ok(())
            }
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        match *self {
            InitialSampler::Annulus { r_min, r_max } => {
                let (q, p) = sample_annulus(rng, r_min, r_max).expect("validated sampler");
                vec![q, p]
            }
            InitialSampler::FixedXyUniformZ { x, y, z_min, z_max } => {
                let z = if z_max > z_min {
                    rng.gen_range(z_min..z_max)
                } else {
                    z_min
                };
                vec![x, y, z]
            }
        }
    }
}

/// Draws a point uniformly by area from the annulus
/// r_min <= sqrt(q^2 + p^2) <= r_max: the radius is sqrt-transformed so
/// density is proportional to r, the angle is uniform.
pub fn sample_annulus(rng: &mut impl Rng, r_min: f64, r_max: f64) -> Result<(f64, f64)> {
    if !(r_min.is_finite() && r_max.is_finite()) || r_min < 0.0 || r_max <= r_min {
        return Err(Error::InvalidConfig(format!(
            "annulus needs 0 <= r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
    let theta = 2.0 * std::f64::consts::PI * v;
    Ok((r * theta.cos(), r * theta.sin()))
}

/// Full description of one generated split (train or test).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub system: SystemSpec,
    /// Number of trajectories.
    pub count: usize,
    /// Transitions per trajectory (a trajectory has `length + 1` states).
    pub length: usize,
    pub dt: f64,
    pub sampler: InitialSampler,
    /// Standard deviation of i.i.d. Gaussian noise added to every state
    /// component of the noisy copies. Zero means the noisy copies equal
    /// the clean ones exactly.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.sampler.validate()?;
        if self.sampler.dim() != self.system.dim() {
            return Err(Error::InvalidConfig(format!(
                "sampler dimension {} does not match system dimension {}",
                self.sampler.dim(),
                self.system.dim()
            )));
        }
        if self.count == 0 {
            return Err(Error::InvalidConfig("dataset needs at least one trajectory".into()));
        }
        if self.length == 0 {
            return Err(Error::InvalidConfig("trajectories need at least one transition".into()));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "dt must be finite and positive, got {}",
                self.dt
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Clean ground truth plus the noisy copies models train on.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub clean: Vec<Trajectory>,
    pub noisy: Vec<Trajectory>,
}

/// splitmix64; stable seed derivation for per-trajectory streams.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

const STREAM_INITIAL: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn stream_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed.wrapping_add(stream)).wrapping_add(index))
}

/// Generates `count` ground-truth trajectories with RK4 and their noisy
/// copies. Deterministic in the spec; per-trajectory RNG streams make the
/// result independent of generation order.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let field = spec.system.build_field();
    let solver = SolverConfig {
        method: SolveMethod::Rk4,
        step: spec.dt,
    };
    let mut clean = Vec::with_capacity(spec.count);
    let mut noisy = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut init_rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, STREAM_INITIAL, i as u64));
        let initial = State::new(spec.sampler.sample(&mut init_rng), 0.0);
        let traj = rollout(field.as_ref(), &initial, spec.length, &solver)?;
        if spec.noise_sigma > 0.0 {
            let mut noise_rng =
                ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, STREAM_NOISE, i as u64));
            let states = traj
                .states()
                .iter()
                .map(|s| {
                    let values = s
                        .values
                        .iter()
                        .map(|&v| v + spec.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    State::new(values, s.time)
                })
                .collect();
            noisy.push(Trajectory::new(states)?);
        } else {
            noisy.push(traj.clone());
        }
        clean.push(traj);
    }
    Ok(Dataset { clean, noisy })
}

/// Cuts each trajectory into consecutive segments of at most `max_len`
/// transitions. Adjacent segments share their junction state, so dropping
/// each segment's first state after the first segment reconstructs the
/// original trajectory. Segment order follows trajectory order.
pub fn split_trajectories(trajectories: &[Trajectory], max_len: usize) -> Result<Vec<Trajectory>> {
    if max_len == 0 {
        return Err(Error::InvalidConfig("segment length must be at least 1".into()));
    }
    let mut segments = Vec::new();
    for traj in trajectories {
        let states = traj.states();
        let mut start = 0;
        while start < states.len() - 1 {
            let end = (start + max_len).min(states.len() - 1);
            segments.push(Trajectory::new(states[start..=end].to_vec())?);
            start = end;
        }
    }
    Ok(segments)
}
