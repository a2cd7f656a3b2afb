//! Persistence: trajectory CSV files, binary model checkpoints, and
//! ingestion of measured coupled-oscillator recordings.
//!
//! Floats are written with 17 significant digits so files round-trip
//! float64 exactly; checkpoints are byte-deterministic for identical
//! models and metadata.

use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::StandInSpec;
use crate::dynamics::{split_trajectories, CoupledOscillatorField};
use crate::error::{Error, Result};
use crate::integrators::{rollout, SolveMethod, SolverConfig, State, Trajectory};
use crate::models::Model;

/// Writes trajectories as CSV: `traj_id,step,t,c0,c1,...`, one row per
/// state, floats with 17 significant digits.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    if trajectories.is_empty() {
        return Err(Error::InvalidData("no trajectories to write".into()));
    }
    let dim = trajectories[0].dim();
    if trajectories.iter().any(|t| t.dim() != dim) {
        return Err(Error::ShapeMismatch("trajectories have mixed dimensions".into()));
    }
    let mut text = String::from("traj_id,step");
    text.push_str(",t");
    for c in 0..dim {
        text.push_str(&format!(",c{c}"));
    }
    text.push('\n');
    for (id, traj) in trajectories.iter().enumerate() {
        for (step, state) in traj.states().iter().enumerate() {
            text.push_str(&format!("{id},{step},{:.16e}", state.time));
            for v in &state.values {
                text.push_str(&format!(",{v:.16e}"));
            }
            text.push('\n');
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a trajectory CSV written by `write_trajectories`. Each
/// trajectory's rows must be contiguous with steps counting from zero.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidData(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 4 || columns[0] != "traj_id" || columns[1] != "step" || columns[2] != "t" {
        return Err(Error::InvalidData(format!(
            "{}: expected header traj_id,step,t,c0,..., got {header:?}",
            path.display()
        )));
    }
    let dim = columns.len() - 3;
    for (c, name) in columns[3..].iter().enumerate() {
        if *name != format!("c{c}") {
            return Err(Error::InvalidData(format!(
                "{}: component column {c} is named {name:?}",
                path.display()
            )));
        }
    }

    let mut trajectories = Vec::new();
    let mut seen_ids: Vec<u64> = Vec::new();
    let mut current: Vec<State> = Vec::new();
    let finish = |states: &mut Vec<State>, trajectories: &mut Vec<Trajectory>| -> Result<()> {
        if !states.is_empty() {
            trajectories.push(Trajectory::new(std::mem::take(states))?);
        }
        Ok(())
    };
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::InvalidData(format!(
                "{} line {}: {} fields, expected {}",
                path.display(),
                lineno + 2,
                fields.len(),
                columns.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                Error::InvalidData(format!(
                    "{} line {}: bad {what} value {s:?}",
                    path.display(),
                    lineno + 2
                ))
            })
        };
        let id: u64 = fields[0].parse().map_err(|_| {
            Error::InvalidData(format!(
                "{} line {}: bad traj_id {:?}",
                path.display(),
                lineno + 2,
                fields[0]
            ))
        })?;
        let step: usize = fields[1].parse().map_err(|_| {
            Error::InvalidData(format!(
                "{} line {}: bad step {:?}",
                path.display(),
                lineno + 2,
                fields[1]
            ))
        })?;
        let time = parse(fields[2], "time")?;
        let mut values = Vec::with_capacity(dim);
        for f in &fields[3..] {
            values.push(parse(f, "component")?);
        }

        let starting_new = seen_ids.last() != Some(&id);
        if starting_new {
            if seen_ids.contains(&id) {
                return Err(Error::InvalidData(format!(
                    "{} line {}: trajectory {id} has non-contiguous rows",
                    path.display(),
                    lineno + 2
                )));
            }
            finish(&mut current, &mut trajectories)?;
            seen_ids.push(id);
        }
        if step != current.len() {
            return Err(Error::InvalidData(format!(
                "{} line {}: trajectory {id} step {step} out of order (expected {})",
                path.display(),
                lineno + 2,
                current.len()
            )));
        }
        current.push(State::new(values, time));
    }
    finish(&mut current, &mut trajectories)?;
    if trajectories.is_empty() {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }
    Ok(trajectories)
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"TRSC";
const CHECKPOINT_VERSION: u32 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub experiment: String,
    pub job: String,
    pub seed: u64,
    pub epochs_trained: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    meta: CheckpointMeta,
    descriptor: crate::models::ModelDescriptor,
}

/// Writes magic, a little-endian u32 JSON header length, the JSON header
/// (metadata plus model layout), then the flat parameters as little-endian
/// f64. Identical model and metadata give identical bytes.
pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        meta: meta.clone(),
        descriptor: model.descriptor(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes())?;
    file.write_all(&header_json)?;
    for v in model.flat_params() {
        file.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::InvalidData(format!(
            "{}: not a checkpoint (bad magic {magic:?})",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_json)?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidData(format!(
            "{}: checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            path.display(),
            header.version
        )));
    }
    let expected = header.descriptor.param_count();
    let mut blob = Vec::new();
    file.read_to_end(&mut blob)?;
    if blob.len() != expected * 8 {
        return Err(Error::InvalidData(format!(
            "{}: parameter blob holds {} bytes, layout needs {}",
            path.display(),
            blob.len(),
            expected * 8
        )));
    }
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let model = Model::from_descriptor(header.descriptor, params)?;
    Ok((model, header.meta))
}

/// Column order of the measured-data schema. Internally states are
/// ordered positions-then-momenta: [q1, q2, p1, p2].
const REAL_DATA_HEADER: &str = "t,q1,p1,q2,p2";

/// Per-component min-max normalization constants, fitted on the training
/// portion and applied to both splits. Components map onto [-1, 1]: the
/// symmetric target keeps sign-mask reversing operators meaningful, since
/// a roughly zero-centered oscillation stays roughly odd after scaling
/// (mapping onto [0, 1] would send flipped momenta outside the data range
/// entirely).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Normalization {
    fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows[0].len();
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            for (c, v) in row.iter().enumerate() {
                mins[c] = mins[c].min(*v);
                maxs[c] = maxs[c].max(*v);
            }
        }
        for c in 0..dim {
            if maxs[c] <= mins[c] {
                return Err(Error::InvalidData(format!(
                    "component {c} is constant over the training portion; cannot normalize"
                )));
            }
        }
        Ok(Normalization { mins, maxs })
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(v, (lo, hi))| lo + (v + 1.0) * (hi - lo) / 2.0)
            .collect()
    }
}

/// A measured trajectory split chronologically, normalized, and segmented
/// for training.
#[derive(Debug, Clone)]
pub struct RealDataIngest {
    pub train_segments: Vec<Trajectory>,
    pub test: Trajectory,
    pub normalization: Normalization,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// Reads a `t,q1,p1,q2,p2` CSV, splits the first `split_fraction` of rows
/// for training, fits min-max normalization (onto [-1, 1]) on that
/// portion, applies it to both, and segments the training part to
/// `segment_max_len` transitions.
pub fn ingest_real_data(
    path: &Path,
    split_fraction: f64,
    segment_max_len: usize,
) -> Result<RealDataIngest> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidData(format!("{}: empty file", path.display())))?;
    if header != REAL_DATA_HEADER {
        return Err(Error::InvalidData(format!(
            "{}: expected header {REAL_DATA_HEADER:?}, got {header:?}",
            path.display()
        )));
    }
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::InvalidData(format!(
                "{} line {}: {} fields, expected 5",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let mut parsed = [0.0; 5];
        for (k, f) in fields.iter().enumerate() {
            parsed[k] = f.parse::<f64>().map_err(|_| {
                Error::InvalidData(format!(
                    "{} line {}: bad value {f:?}",
                    path.display(),
                    lineno + 2
                ))
            })?;
            if !parsed[k].is_finite() {
                return Err(Error::InvalidData(format!(
                    "{} line {}: non-finite value {f}",
                    path.display(),
                    lineno + 2
                )));
            }
        }
        if let Some(last) = times.last() {
            if parsed[0] <= *last {
                return Err(Error::InvalidData(format!(
                    "{} line {}: time {} does not increase past {}",
                    path.display(),
                    lineno + 2,
                    parsed[0],
                    last
                )));
            }
        }
        times.push(parsed[0]);
        // File order t,q1,p1,q2,p2; states are [q1, q2, p1, p2].
        rows.push(vec![parsed[1], parsed[3], parsed[2], parsed[4]]);
    }
    let n = rows.len();
    if n < 4 {
        return Err(Error::InvalidData(format!(
            "{}: {n} data rows; need at least 4 to split into usable train and test parts",
            path.display()
        )));
    }
    if !(split_fraction.is_finite() && split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must lie strictly between 0 and 1, got {split_fraction}"
        )));
    }
    let train_rows = ((n as f64 * split_fraction).round() as usize).clamp(2, n - 2);
    let normalization = Normalization::fit(&rows[..train_rows])?;

    let build = |range: std::ops::Range<usize>| -> Result<Trajectory> {
        let states = range
            .map(|i| State::new(normalization.normalize(&rows[i]), times[i]))
            .collect();
        Trajectory::new(states)
    };
    let train = build(0..train_rows)?;
    let test = build(train_rows..n)?;
    let train_segments = split_trajectories(std::slice::from_ref(&train), segment_max_len)?;
    Ok(RealDataIngest {
        train_segments,
        test,
        normalization,
        train_rows,
        test_rows: n - train_rows,
    })
}

/// Synthesizes a measured-style CSV from the stand-in spec: one damped
/// coupled-oscillator trajectory with observation noise on every row.
pub fn write_stand_in_csv(path: &Path, spec: &StandInSpec) -> Result<()> {
    spec.validate()?;
    let field = CoupledOscillatorField { params: spec.params };
    let config = SolverConfig {
        method: SolveMethod::Rk4,
        step: spec.dt,
    };
    let clean = rollout(&field, &State::new(spec.initial.clone(), 0.0), spec.rows - 1, &config)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut text = String::from(REAL_DATA_HEADER);
    text.push('\n');
    for state in clean.states() {
        let noisy: Vec<f64> = state
            .values
            .iter()
            .map(|&v| v + spec.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal))
            .collect();
        // States are [q1, q2, p1, p2]; file order is t,q1,p1,q2,p2.
        text.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            state.time, noisy[0], noisy[2], noisy[1], noisy[3]
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}
