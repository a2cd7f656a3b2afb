//! Multilayer perceptrons with tanh hidden layers and a linear output.
//!
//! Parameters live in one flat buffer (weights then bias per layer) so the
//! optimizer can treat a whole model as a single vector. Two evaluation
//! paths are provided: a taped path for training and a plain path for
//! rollouts where no gradients are needed. They must agree exactly up to
//! floating-point evaluation order, which tests pin down.

use rand::Rng;

use crate::autodiff::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};

/// Hidden-layer activation. Only tanh is supported: it is smooth, odd, and
/// its derivative is available from the activation value itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Architecture of an MLP: layer sizes only, no parameter values.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Tanh
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            activation: Activation::Tanh,
        }
    }

    /// All node counts from input to output, e.g. [2, 200, 2].
    pub fn node_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims
    }

    /// Total parameter count: per layer, out*in weights plus out biases.
    pub fn num_params(&self) -> usize {
        let dims = self.node_dims();
        dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidConfig(
                "mlp input and output dims must be at least 1".into(),
            ));
        }
        if self.hidden.is_empty() {
            return Err(Error::InvalidConfig(
                "mlp needs at least one hidden layer".into(),
            ));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("mlp hidden widths must be at least 1".into()));
        }
        Ok(())
    }
}

/// Flat parameter vector for an [`MlpSpec`], laid out `[W1, b1, W2, b2, ..]`
/// with each weight matrix row-major `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl ModelParams {
    /// All weights and biases zero.
    pub fn zeros(spec: &MlpSpec) -> Self {
        let dims = spec.node_dims();
        let len = spec.num_params();
        Self {
            dims,
            data: vec![0.0; len],
        }
    }

    /// Uniform init in +-sqrt(6 / (fan_in + fan_out)) per weight matrix;
    /// biases start at zero.
    pub fn init(spec: &MlpSpec, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(spec);
        let dims = params.dims.clone();
        for layer in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w_off, w_len) = params.weight_range(layer);
            for w in &mut params.data[w_off..w_off + w_len] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        params
    }

    /// Wraps an existing flat vector, validating its length.
    pub fn from_flat(spec: &MlpSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                spec.num_params(),
                data.len()
            )));
        }
        Ok(Self {
            dims: spec.node_dims(),
            data,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    fn weight_range(&self, layer: usize) -> (usize, usize) {
        let mut off = 0;
        for l in 0..layer {
            off += self.dims[l + 1] * self.dims[l] + self.dims[l + 1];
        }
        (off, self.dims[layer + 1] * self.dims[layer])
    }

    fn bias_range(&self, layer: usize) -> (usize, usize) {
        let (w_off, w_len) = self.weight_range(layer);
        (w_off + w_len, self.dims[layer + 1])
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let (off, len) = self.weight_range(layer);
        &self.data[off..off + len]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (off, len) = self.bias_range(layer);
        &self.data[off..off + len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Matches this parameter vector against a spec.
    pub fn matches(&self, spec: &MlpSpec) -> bool {
        self.dims == spec.node_dims()
    }
}

/// Parameter leaves staged onto a tape, ready for graph building.
pub struct StagedMlp {
    dims: Vec<usize>,
    weights: Vec<Var>,
    biases: Vec<Var>,
}

impl StagedMlp {
    /// Copies every layer's parameters onto the tape as leaves.
    pub fn stage(tape: &mut Tape, params: &ModelParams) -> Self {
        let layers = params.layer_count();
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (rows, cols) = (params.dims[l + 1], params.dims[l]);
            weights.push(tape.leaf_matrix(rows, cols, params.weight(l)));
            biases.push(tape.leaf_vector(params.bias(l)));
        }
        Self {
            dims: params.dims.clone(),
            weights,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        (0..self.weights.len())
            .map(|l| self.dims[l + 1] * self.dims[l] + self.dims[l + 1])
            .sum()
    }

    /// Reads accumulated parameter gradients back out in flat layout order.
    pub fn read_grads(&self, grads: &Gradients<'_>) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            out.extend_from_slice(grads.wrt(self.weights[l]));
            out.extend_from_slice(grads.wrt(self.biases[l]));
        }
        out
    }

    /// Adds accumulated parameter gradients into `acc` (flat layout order).
    pub fn accumulate_grads(&self, grads: &Gradients<'_>, acc: &mut [f64]) {
        let mut off = 0;
        for l in 0..self.weights.len() {
            for &g in grads.wrt(self.weights[l]) {
                acc[off] += g;
                off += 1;
            }
            for &g in grads.wrt(self.biases[l]) {
                acc[off] += g;
                off += 1;
            }
        }
        debug_assert_eq!(off, acc.len());
    }
}

/// Taped forward pass: tanh after every hidden layer, linear output.
pub fn mlp_forward(tape: &mut Tape, staged: &StagedMlp, input: Var) -> Result<Var> {
    if tape.len_of(input) != staged.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "mlp expects input of length {}, got {}",
            staged.input_dim(),
            tape.len_of(input)
        )));
    }
    let layers = staged.weights.len();
    let mut a = input;
    for l in 0..layers {
        let z = tape.matvec(staged.weights[l], a);
        let zb = tape.add(z, staged.biases[l]);
        a = if l + 1 < layers { tape.tanh(zb) } else { zb };
    }
    Ok(a)
}

/// Taped forward pass that also returns each hidden activation.
fn mlp_forward_with_activations(
    tape: &mut Tape,
    staged: &StagedMlp,
    input: Var,
) -> Result<(Var, Vec<Var>)> {
    if tape.len_of(input) != staged.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "mlp expects input of length {}, got {}",
            staged.input_dim(),
            tape.len_of(input)
        )));
    }
    let layers = staged.weights.len();
    let mut activations = Vec::with_capacity(layers - 1);
    let mut a = input;
    for l in 0..layers {
        let z = tape.matvec(staged.weights[l], a);
        let zb = tape.add(z, staged.biases[l]);
        if l + 1 < layers {
            a = tape.tanh(zb);
            activations.push(a);
        } else {
            a = zb;
        }
    }
    Ok((a, activations))
}

/// Builds the gradient of a scalar-output MLP with respect to its input as
/// tape operations, so that a later backward pass yields second-order
/// parameter gradients of that input gradient.
///
/// The construction is the transpose chain of the forward pass: starting
/// from the output weight row, alternate elementwise multiplication by
/// tanh' (recovered as 1 - a^2 from stored activations) and multiplication
/// by transposed weights.
pub fn mlp_input_gradient(tape: &mut Tape, staged: &StagedMlp, input: Var) -> Result<Var> {
    if staged.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "input gradient needs a scalar-output mlp, got output dim {}",
            staged.output_dim()
        )));
    }
    let (_, activations) = mlp_forward_with_activations(tape, staged, input)?;
    let layers = staged.weights.len();
    let one = tape.scalar(1.0);
    let mut u = tape.matvec_t(staged.weights[layers - 1], one);
    for l in (0..layers - 1).rev() {
        let a = activations[l];
        let a2 = tape.mul(a, a);
        let neg = tape.scale(a2, -1.0);
        let dtanh = tape.add_const(neg, 1.0);
        let uz = tape.mul(u, dtanh);
        u = tape.matvec_t(staged.weights[l], uz);
    }
    Ok(u)
}

/// Plain forward pass without a tape. Validates parameter/input shapes and
/// that every pre-activation stays finite.
pub fn mlp_forward_value(spec: &MlpSpec, params: &ModelParams, input: &[f64]) -> Result<Vec<f64>> {
    if !params.matches(spec) {
        return Err(Error::ShapeMismatch("parameters do not match mlp spec".into()));
    }
    if input.len() != spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "mlp expects input of length {}, got {}",
            spec.input_dim,
            input.len()
        )));
    }
    let layers = params.layer_count();
    let mut a = input.to_vec();
    for l in 0..layers {
        let (rows, cols) = (params.dims[l + 1], params.dims[l]);
        let w = params.weight(l);
        let b = params.bias(l);
        let mut z = vec![0.0; rows];
        for i in 0..rows {
            let row = &w[i * cols..(i + 1) * cols];
            let mut acc = b[i];
            for j in 0..cols {
                acc += row[j] * a[j];
            }
            z[i] = acc;
        }
        if let Some(bad) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "activation {} of layer {} is {}",
                bad, l, z[bad]
            )));
        }
        if l + 1 < layers {
            for v in &mut z {
                *v = v.tanh();
            }
        }
        a = z;
    }
    Ok(a)
}

/// Plain input gradient of a scalar-output MLP without a tape.
pub fn mlp_input_gradient_value(
    spec: &MlpSpec,
    params: &ModelParams,
    input: &[f64],
) -> Result<Vec<f64>> {
    if spec.output_dim != 1 {
        return Err(Error::ShapeMismatch(format!(
            "input gradient needs a scalar-output mlp, got output dim {}",
            spec.output_dim
        )));
    }
    if !params.matches(spec) {
        return Err(Error::ShapeMismatch("parameters do not match mlp spec".into()));
    }
    if input.len() != spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "mlp expects input of length {}, got {}",
            spec.input_dim,
            input.len()
        )));
    }
    let layers = params.layer_count();
    let mut a = input.to_vec();
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(layers - 1);
    for l in 0..layers {
        let (rows, cols) = (params.dims[l + 1], params.dims[l]);
        let w = params.weight(l);
        let b = params.bias(l);
        let mut z = vec![0.0; rows];
        for i in 0..rows {
            let row = &w[i * cols..(i + 1) * cols];
            let mut acc = b[i];
            for j in 0..cols {
                acc += row[j] * a[j];
            }
            z[i] = acc;
        }
        if let Some(bad) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "activation {} of layer {} is {}",
                bad, l, z[bad]
            )));
        }
        if l + 1 < layers {
            for v in &mut z {
                *v = v.tanh();
            }
            activations.push(z.clone());
        }
        a = z;
    }
    // Transpose chain, mirroring the taped construction.
    let mut u = vec![0.0; params.dims[layers - 1]];
    let w_last = params.weight(layers - 1);
    u.copy_from_slice(w_last);
    for l in (0..layers - 1).rev() {
        let act = &activations[l];
        for (ui, &ai) in u.iter_mut().zip(act.iter()) {
            *ui *= 1.0 - ai * ai;
        }
        let (rows, cols) = (params.dims[l + 1], params.dims[l]);
        let w = params.weight(l);
        let mut next = vec![0.0; cols];
        for i in 0..rows {
            let row = &w[i * cols..(i + 1) * cols];
            let ui = u[i];
            for j in 0..cols {
                next[j] += row[j] * ui;
            }
        }
        u = next;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::adam::AdamState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-8)
    }

    /// Independent forward oracle: nested loops, no shared code with the
    /// implementation above.
    fn oracle_forward(spec: &MlpSpec, params: &ModelParams, input: &[f64]) -> Vec<f64> {
        let dims = spec.node_dims();
        let mut a = input.to_vec();
        for l in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let w = params.weight(l);
            let b = params.bias(l);
            let mut out = vec![0.0; n_out];
            for (i, o) in out.iter_mut().enumerate() {
                let mut s = b[i];
                for (j, &aj) in a.iter().take(n_in).enumerate() {
                    s += w[i * n_in + j] * aj;
                }
                *o = if l + 1 < dims.len() - 1 { s.tanh() } else { s };
            }
            a = out;
        }
        a
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = MlpSpec::new(3, vec![8, 8], 2);
        let params = ModelParams::zeros(&spec);
        let out = mlp_forward_value(&spec, &params, &[0.4, -1.0, 2.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn taped_and_plain_forward_match_oracle() {
        let spec = MlpSpec::new(2, vec![7, 5], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = ModelParams::init(&spec, &mut rng);
        let input = [0.35, -0.8];

        let expected = oracle_forward(&spec, &params, &input);
        let plain = mlp_forward_value(&spec, &params, &input).unwrap();
        let mut tape = Tape::new();
        let staged = StagedMlp::stage(&mut tape, &params);
        let iv = tape.leaf_vector(&input);
        let out = mlp_forward(&mut tape, &staged, iv).unwrap();
        let taped = tape.value(out).to_vec();

        for i in 0..expected.len() {
            assert!(
                (plain[i] - expected[i]).abs() < 1e-12,
                "plain[{i}] = {}, oracle = {}",
                plain[i],
                expected[i]
            );
            assert!(
                (taped[i] - expected[i]).abs() < 1e-12,
                "taped[{i}] = {}, oracle = {}",
                taped[i],
                expected[i]
            );
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let spec = MlpSpec::new(2, vec![4], 1);
        let params = ModelParams::zeros(&spec);
        assert!(mlp_forward_value(&spec, &params, &[1.0, 2.0, 3.0]).is_err());
        let mut tape = Tape::new();
        let staged = StagedMlp::stage(&mut tape, &params);
        let iv = tape.leaf_vector(&[1.0]);
        assert!(mlp_forward(&mut tape, &staged, iv).is_err());
    }

    #[test]
    fn forward_reports_non_finite_activations() {
        let spec = MlpSpec::new(1, vec![2], 1);
        let mut params = ModelParams::zeros(&spec);
        params.as_mut_slice()[0] = 1e308;
        params.as_mut_slice()[1] = 1e308;
        let err = mlp_forward_value(&spec, &params, &[1e10]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        // Scalar loss: squared distance of the net output to a target.
        let spec = MlpSpec::new(2, vec![6, 4], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(&spec, &mut rng);
        let input = [0.9, -0.4];
        let target = [0.2, -0.1];

        let loss_of = |p: &ModelParams| -> f64 {
            let out = mlp_forward_value(&spec, p, &input).unwrap();
            out.iter()
                .zip(target.iter())
                .map(|(y, t)| (y - t) * (y - t))
                .sum()
        };

        let mut tape = Tape::new();
        let staged = StagedMlp::stage(&mut tape, &params);
        let iv = tape.leaf_vector(&input);
        let out = mlp_forward(&mut tape, &staged, iv).unwrap();
        let tv = tape.leaf_vector(&target);
        let d = tape.sub(out, tv);
        let loss = tape.dot(d, d);
        let grads = tape.backward(loss).unwrap();
        let analytic = staged.read_grads(&grads);

        let h = 1e-5;
        for i in 0..analytic.len() {
            let mut lo = params.clone();
            let mut hi = params.clone();
            lo.as_mut_slice()[i] -= h;
            hi.as_mut_slice()[i] += h;
            let numeric = (loss_of(&hi) - loss_of(&lo)) / (2.0 * h);
            assert!(
                rel_err(analytic[i], numeric) < 1e-4,
                "param {i}: analytic {}, numeric {}",
                analytic[i],
                numeric
            );
        }
    }

    #[test]
    fn input_gradient_taped_and_plain_agree_with_finite_differences() {
        let spec = MlpSpec::new(3, vec![9, 6], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = ModelParams::init(&spec, &mut rng);
        let input = [0.3, -0.9, 1.4];

        let mut tape = Tape::new();
        let staged = StagedMlp::stage(&mut tape, &params);
        let iv = tape.leaf_vector(&input);
        let gv = mlp_input_gradient(&mut tape, &staged, iv).unwrap();
        let taped = tape.value(gv).to_vec();
        let plain = mlp_input_gradient_value(&spec, &params, &input).unwrap();

        let h = 1e-5;
        for i in 0..input.len() {
            let mut lo = input;
            let mut hi = input;
            lo[i] -= h;
            hi[i] += h;
            let f_lo = mlp_forward_value(&spec, &params, &lo).unwrap()[0];
            let f_hi = mlp_forward_value(&spec, &params, &hi).unwrap()[0];
            let numeric = (f_hi - f_lo) / (2.0 * h);
            assert!(
                rel_err(taped[i], numeric) < 1e-4,
                "input {i}: taped {}, numeric {}",
                taped[i],
                numeric
            );
            assert!(
                (taped[i] - plain[i]).abs() < 1e-14,
                "taped and plain input gradients disagree at {i}"
            );
        }
    }

    #[test]
    fn input_gradient_rejects_vector_output() {
        let spec = MlpSpec::new(2, vec![4], 2);
        let params = ModelParams::zeros(&spec);
        let mut tape = Tape::new();
        let staged = StagedMlp::stage(&mut tape, &params);
        let iv = tape.leaf_vector(&[0.0, 0.0]);
        assert!(mlp_input_gradient(&mut tape, &staged, iv).is_err());
        assert!(mlp_input_gradient_value(&spec, &params, &[0.0, 0.0]).is_err());
    }

    /// Fit a small net to V(q) = q^2 on [1, 3], then check that the input
    /// gradient at q = 2 approximates dV/dq = 4 and matches central finite
    /// differences of the fitted net tightly.
    #[test]
    fn input_gradient_of_fitted_quadratic_is_near_four() {
        let spec = MlpSpec::new(1, vec![16], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ModelParams::init(&spec, &mut rng);
        let samples: Vec<f64> = (0..41).map(|i| 1.0 + 2.0 * i as f64 / 40.0).collect();

        let mut adam = AdamState::new(spec.num_params(), 1e-2);
        let mut tape = Tape::new();
        for _ in 0..4000 {
            tape.clear();
            let staged = StagedMlp::stage(&mut tape, &params);
            let mut loss = tape.scalar(0.0);
            for &q in &samples {
                let iv = tape.leaf_vector(&[q]);
                let out = mlp_forward(&mut tape, &staged, iv).unwrap();
                let tv = tape.leaf_vector(&[q * q]);
                let d = tape.sub(out, tv);
                let sq = tape.dot(d, d);
                loss = tape.add(loss, sq);
            }
            let grads = tape.backward(loss).unwrap();
            let flat = staged.read_grads(&grads);
            adam.step(params.as_mut_slice(), &flat).unwrap();
        }

        let g = mlp_input_gradient_value(&spec, &params, &[2.0]).unwrap()[0];
        assert!((g - 4.0).abs() < 0.2, "fitted slope at q=2 is {g}, expected near 4");

        let h = 1e-5;
        let f = |q: f64| mlp_forward_value(&spec, &params, &[q]).unwrap()[0];
        let numeric = (f(2.0 + h) - f(2.0 - h)) / (2.0 * h);
        assert!(
            rel_err(g, numeric) < 1e-4,
            "slope {g} vs finite difference {numeric}"
        );
    }

    /// Second-order check: parameter gradients of the constructed input
    /// gradient agree with finite differences of the first-order input
    /// gradient.
    #[test]
    fn parameter_gradients_of_input_gradient_match_finite_differences() {
        let spec = MlpSpec::new(2, vec![6, 5], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let params = ModelParams::init(&spec, &mut rng);
        let input = [0.7, -0.3];

        // Scalarize the input gradient with a fixed probe vector.
        let probe = [0.6, -1.1];
        let probed = |p: &ModelParams| -> f64 {
            let g = mlp_input_gradient_value(&spec, p, &input).unwrap();
            g.iter().zip(probe.iter()).map(|(a, b)| a * b).sum()
        };

        let mut tape = Tape::new();
        let staged = StagedMlp::stage(&mut tape, &params);
        let iv = tape.leaf_vector(&input);
        let gv = mlp_input_gradient(&mut tape, &staged, iv).unwrap();
        let pv = tape.leaf_vector(&probe);
        let s = tape.dot(gv, pv);
        let grads = tape.backward(s).unwrap();
        let analytic = staged.read_grads(&grads);

        let h = 1e-5;
        for i in 0..analytic.len() {
            let mut lo = params.clone();
            let mut hi = params.clone();
            lo.as_mut_slice()[i] -= h;
            hi.as_mut_slice()[i] += h;
            let numeric = (probed(&hi) - probed(&lo)) / (2.0 * h);
            let denom = numeric.abs().max(1e-6);
            assert!(
                (analytic[i] - numeric).abs() / denom < 1e-3,
                "param {i}: analytic {}, numeric {}",
                analytic[i],
                numeric
            );
        }
    }

    #[test]
    fn glorot_init_respects_bounds_and_is_deterministic() {
        let spec = MlpSpec::new(4, vec![10], 3);
        let mut rng_a = ChaCha8Rng::seed_from_u64(99);
        let mut rng_b = ChaCha8Rng::seed_from_u64(99);
        let a = ModelParams::init(&spec, &mut rng_a);
        let b = ModelParams::init(&spec, &mut rng_b);
        assert_eq!(a.as_slice(), b.as_slice());

        let lim0 = (6.0_f64 / 14.0).sqrt();
        let lim1 = (6.0_f64 / 13.0).sqrt();
        assert!(a.weight(0).iter().all(|w| w.abs() < lim0));
        assert!(a.weight(1).iter().all(|w| w.abs() < lim1));
        assert!(a.bias(0).iter().all(|&b| b == 0.0));
        // Spread: not all weights equal.
        let w = a.weight(0);
        assert!(w.iter().any(|&x| (x - w[0]).abs() > 1e-6));
    }
}
