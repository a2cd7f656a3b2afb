//! Evaluation quantities: trajectory and energy MSE, the forward/backward
//! symmetry error, finite-time Lyapunov exponents, and the Hamiltonian
//! symmetry gap of learned kinetic energies.
//!
//! Aggregates report a mean and population standard deviation across
//! trajectories, alongside the per-trajectory breakdown. Chains that
//! blow up are clamped to the shared rollout bound so every metric stays
//! finite; callers see how many chains clamped.

use serde::{Deserialize, Serialize};

use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::integrators::{
    advance, clamp_values, validate_method, SolveMethod, SolverConfig, State, Trajectory,
    VectorField,
};
use crate::losses::ReversingOperator;
use crate::models::HodenModel;

/// Closed-form energy of a ground-truth system, evaluated along
/// trajectories. Damping and drive terms are excluded: the energy of the
/// underlying conservative skeleton is what the series tracks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyFunction {
    /// E = sum of squared components (the q^2 + p^2 convention).
    QuadraticSum,
    /// H = p^2/2 + alpha q^2/2 + beta q^4/4 for one-dof oscillators.
    DuffingHamiltonian { alpha: f64, beta: f64 },
    /// H = (p1^2+p2^2)/2 + k(q1^2+q2^2)/2 + c(q1-q2)^2/2 on
    /// [q1, q2, p1, p2].
    CoupledHamiltonian { stiffness: f64, coupling: f64 },
}

impl EnergyFunction {
    pub fn eval(&self, values: &[f64]) -> f64 {
        match *self {
            EnergyFunction::QuadraticSum => values.iter().map(|v| v * v).sum(),
            EnergyFunction::DuffingHamiltonian { alpha, beta } => {
                let (q, p) = (values[0], values[1]);
                p * p / 2.0 + alpha * q * q / 2.0 + beta * q * q * q * q / 4.0
            }
            EnergyFunction::CoupledHamiltonian { stiffness, coupling } => {
                let (q1, q2, p1, p2) = (values[0], values[1], values[2], values[3]);
                (p1 * p1 + p2 * p2) / 2.0
                    + stiffness * (q1 * q1 + q2 * q2) / 2.0
                    + coupling * (q1 - q2) * (q1 - q2) / 2.0
            }
        }
    }

    /// The conventional energy for each benchmark system: quadratic sum
    /// for linear oscillators, the quartic Hamiltonian for beta != 0, the
    /// coupled form for oscillator pairs. The three-dimensional flow has
    /// no conserved energy.
    pub fn for_system(system: &SystemSpec) -> Option<EnergyFunction> {
        match system {
            SystemSpec::Duffing(p) if p.beta == 0.0 => Some(EnergyFunction::QuadraticSum),
            SystemSpec::Duffing(p) => Some(EnergyFunction::DuffingHamiltonian {
                alpha: p.alpha,
                beta: p.beta,
            }),
            SystemSpec::ReversibleAttractor => None,
            SystemSpec::CoupledOscillators(p) => Some(EnergyFunction::CoupledHamiltonian {
                stiffness: p.stiffness,
                coupling: p.coupling,
            }),
        }
    }
}

/// Mean, population standard deviation, and the per-trajectory values
/// they summarize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub per_trajectory: Vec<f64>,
}

impl MetricSummary {
    fn from_values(per_trajectory: Vec<f64>) -> Self {
        let n = per_trajectory.len() as f64;
        let mean = per_trajectory.iter().sum::<f64>() / n;
        let var = per_trajectory.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MetricSummary {
            mean,
            std: var.sqrt(),
            per_trajectory,
        }
    }
}

fn check_aligned(predicted: &[Trajectory], truth: &[Trajectory]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidData(format!(
            "{} predicted trajectories vs {} ground truths",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::InvalidData("no trajectories to compare".into()));
    }
    for (i, (p, t)) in predicted.iter().zip(truth).enumerate() {
        if p.len() != t.len() {
            return Err(Error::InvalidData(format!(
                "trajectory {i}: {} states predicted vs {} observed",
                p.len(),
                t.len()
            )));
        }
        if p.dim() != t.dim() {
            return Err(Error::ShapeMismatch(format!(
                "trajectory {i}: dimension {} vs {}",
                p.dim(),
                t.dim()
            )));
        }
        for k in 0..p.len() {
            if (p.state(k).time - t.state(k).time).abs() > 1e-9 {
                return Err(Error::InvalidData(format!(
                    "trajectory {i}: grids differ at index {k} ({} vs {})",
                    p.state(k).time,
                    t.state(k).time
                )));
            }
        }
    }
    Ok(())
}

/// Mean squared error between trajectory sets: per trajectory, squared
/// error averaged over all states and components; mean and std across
/// trajectories.
pub fn trajectory_mse(predicted: &[Trajectory], truth: &[Trajectory]) -> Result<MetricSummary> {
    check_aligned(predicted, truth)?;
    let per = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for k in 0..p.len() {
                for (a, b) in p.state(k).values.iter().zip(&t.state(k).values) {
                    sum += (a - b) * (a - b);
                    count += 1;
                }
            }
            sum / count as f64
        })
        .collect();
    Ok(MetricSummary::from_values(per))
}

/// Mean squared error between energy time series computed from both
/// trajectory sets, aggregated as in `trajectory_mse`.
pub fn energy_mse(
    predicted: &[Trajectory],
    truth: &[Trajectory],
    energy: &EnergyFunction,
) -> Result<MetricSummary> {
    check_aligned(predicted, truth)?;
    let per = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let mut sum = 0.0;
            for k in 0..p.len() {
                let d = energy.eval(&p.state(k).values) - energy.eval(&t.state(k).values);
                sum += d * d;
            }
            sum / p.len() as f64
        })
        .collect();
    Ok(MetricSummary::from_values(per))
}

/// Evaluation results for one trained model on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub trajectory_mse: MetricSummary,
    pub energy_mse: Option<MetricSummary>,
    /// How many test rollouts hit the divergence clamp.
    pub diverged_rollouts: usize,
}

/// Steps a chain of `steps` states from `initial` with a signed step,
/// clamping blow-ups to the shared rollout bound. Returns the states
/// after the initial one and whether anything clamped.
fn clamped_chain(
    field: &dyn VectorField,
    initial: &State,
    steps: usize,
    dt: f64,
    method: SolveMethod,
) -> Result<(Vec<State>, bool)> {
    validate_method(field, initial.dim(), method)?;
    let mut states = Vec::with_capacity(steps);
    let mut current = initial.clone();
    let mut clamped = false;
    for _ in 0..steps {
        let mut next = advance(field, &current, dt, method);
        clamped |= clamp_values(&mut next.values);
        states.push(next.clone());
        current = next;
    }
    Ok((states, clamped))
}

/// Forward/backward symmetry error of a field: relative Euclidean
/// mismatch between the reversed forward chain and the backward chain
/// over all steps and samples.
#[derive(Debug, Clone, Serialize)]
pub struct ForwardBackwardError {
    pub relative: f64,
    pub absolute: f64,
    /// Euclidean norm of the reversed forward chain (the denominator).
    pub denominator: f64,
    /// Set when the denominator vanished and `relative` fell back to the
    /// absolute error.
    pub used_absolute_fallback: bool,
    /// Chains (forward or backward) that hit the divergence clamp.
    pub clamped_chains: usize,
}

pub fn forward_backward_relative_error(
    field: &dyn VectorField,
    initials: &[State],
    steps: usize,
    reversing: &ReversingOperator,
    config: &SolverConfig,
) -> Result<ForwardBackwardError> {
    if initials.is_empty() {
        return Err(Error::InvalidData("no initial states".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("need at least one step".into()));
    }
    config.validate()?;
    reversing.validate()?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut clamped_chains = 0;
    for initial in initials {
        let (forward, fwd_clamped) =
            clamped_chain(field, initial, steps, config.step, config.method)?;
        let reversed_initial = State::new(
            reversing.apply(&initial.values)?,
            reversing.reflect_time(initial.time),
        );
        let (backward, bwd_clamped) =
            clamped_chain(field, &reversed_initial, steps, -config.step, config.method)?;
        clamped_chains += usize::from(fwd_clamped) + usize::from(bwd_clamped);
        for (f, b) in forward.iter().zip(&backward) {
            let reflected = reversing.apply(&f.values)?;
            for (a, b) in reflected.iter().zip(&b.values) {
                num += (a - b) * (a - b);
                den += a * a;
            }
        }
    }
    let absolute = num.sqrt();
    let denominator = den.sqrt();
    let used_absolute_fallback = denominator == 0.0;
    Ok(ForwardBackwardError {
        relative: if used_absolute_fallback {
            absolute
        } else {
            absolute / denominator
        },
        absolute,
        denominator,
        used_absolute_fallback,
        clamped_chains,
    })
}

/// Finite-time Lyapunov series sigma(t_i) for i >= 1.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LyapunovSeries {
    /// The exponent at the end of the horizon.
    pub fn final_sigma(&self) -> f64 {
        *self.sigma.last().unwrap()
    }
}

/// Evolves a base state and a copy perturbed by `perturbation * direction`
/// with the same solver, and reports
/// sigma(t_i) = log(|dx(t_i)| / |dx(t_0)|) / (t_i - t_0).
/// No renormalization: this is the single-shot finite-time definition.
/// Blow-ups of either chain are reported as divergence errors.
pub fn lyapunov_exponent(
    field: &dyn VectorField,
    initial: &State,
    steps: usize,
    config: &SolverConfig,
    perturbation: f64,
    direction: &[f64],
) -> Result<LyapunovSeries> {
    if !(perturbation.is_finite() && perturbation > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "perturbation size must be positive, got {perturbation}"
        )));
    }
    if direction.len() != initial.dim() {
        return Err(Error::ShapeMismatch(format!(
            "direction has {} components for a {}-dimensional state",
            direction.len(),
            initial.dim()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig("need at least one step".into()));
    }
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidConfig("direction must be a nonzero finite vector".into()));
    }
    let perturbed_values: Vec<f64> = initial
        .values
        .iter()
        .zip(direction)
        .map(|(x, d)| x + perturbation * d / norm)
        .collect();
    let base = crate::integrators::rollout(field, initial, steps, config)?;
    let perturbed = crate::integrators::rollout(
        field,
        &State::new(perturbed_values, initial.time),
        steps,
        config,
    )?;
    let d0: f64 = base
        .state(0)
        .values
        .iter()
        .zip(&perturbed.state(0).values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let mut times = Vec::with_capacity(steps);
    let mut sigma = Vec::with_capacity(steps);
    for i in 1..=steps {
        let di: f64 = base
            .state(i)
            .values
            .iter()
            .zip(&perturbed.state(i).values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let t = base.state(i).time;
        times.push(t);
        sigma.push((di / d0).ln() / (t - initial.time));
    }
    Ok(LyapunovSeries { times, sigma })
}

/// Asymmetry of a learned Hamiltonian under the momentum flip:
/// H(q, p) - H(q, -p) over a grid of momenta at fixed q.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetryGap {
    pub gaps: Vec<f64>,
    pub max_abs: f64,
}

pub fn hamiltonian_symmetry_gap(
    model: &HodenModel,
    q: &[f64],
    p_grid: &[Vec<f64>],
    t: f64,
) -> Result<SymmetryGap> {
    if p_grid.is_empty() {
        return Err(Error::InvalidData("empty momentum grid".into()));
    }
    let mut gaps = Vec::with_capacity(p_grid.len());
    let mut max_abs = 0.0_f64;
    for p in p_grid {
        let flipped: Vec<f64> = p.iter().map(|v| -v).collect();
        let gap = model.energy(q, p, t)? - model.energy(q, &flipped, t)?;
        max_abs = max_abs.max(gap.abs());
        gaps.push(gap);
    }
    Ok(SymmetryGap { gaps, max_abs })
}
