//! The mixture density network: a ReLU MLP whose last hidden layer feeds
//! three heads producing the means, standard deviations and mixing weights
//! of a Gaussian mixture.
//!
//! Gradients are derived by hand and checked against finite differences in
//! the test suite; there is no autodiff layer.

mod adamw;
mod train;
mod weights;

pub use adamw::{adamw_step, OptimizerState};
pub use train::{init_network, train, TrainConfig, TrainReport, TrainingSet};
pub use weights::{load_weights, save_weights, WEIGHT_SCHEMA_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{self, MixtureParams};

/// Machine epsilon of `f64`, added to the sigma activation.
pub const SIGMA_EPS: f64 = f64::EPSILON;

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// ELU shifted by `1 + eps`: linear above zero, `0.5 (e^x - 1) + 1 + eps`
/// below. Always greater than one half.
pub fn sigma_activation(x: f64) -> f64 {
    if x >= 0.0 {
        x + 1.0 + SIGMA_EPS
    } else {
        0.5 * x.exp_m1() + 1.0 + SIGMA_EPS
    }
}

/// Derivative of [`sigma_activation`]; the right derivative at zero.
pub fn sigma_activation_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.5 * x.exp()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn kaiming_uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.inputs..(out + 1) * self.inputs]
    }

    #[inline]
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }

    /// Accumulates `d_out x^T` into this layer's storage, treating it as a
    /// gradient buffer.
    #[inline]
    fn accumulate_outer(&mut self, d_out: &[f64], x: &[f64]) {
        for ((row, b), &d) in self
            .weights
            .chunks_exact_mut(self.inputs)
            .zip(self.bias.iter_mut())
            .zip(d_out)
        {
            if d == 0.0 {
                continue;
            }
            *b += d;
            for (w, xi) in row.iter_mut().zip(x) {
                *w += d * xi;
            }
        }
    }

    /// `d_in += W^T d_out`.
    #[inline]
    fn backprop_into(&self, d_out: &[f64], d_in: &mut [f64]) {
        for (row, &d) in self.weights.chunks_exact(self.inputs).zip(d_out) {
            if d == 0.0 {
                continue;
            }
            for (di, w) in d_in.iter_mut().zip(row) {
                *di += d * w;
            }
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

/// Affine maps between physical quantities and network units.
///
/// Features are mapped from `[min, max]` onto `[-1, 1]`; a degenerate range
/// maps to zero. Targets are modelled as `(y - target_offset) / target_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub target_offset: f64,
    pub target_scale: f64,
}

impl Normalization {
    pub fn identity(input_dim: usize) -> Self {
        Self {
            min: vec![-1.0; input_dim],
            max: vec![1.0; input_dim],
            target_offset: 0.0,
            target_scale: 1.0,
        }
    }

    pub fn normalize_into(&self, raw: &[f64], out: &mut [f64]) {
        for (((o, &x), &lo), &hi) in out.iter_mut().zip(raw).zip(&self.min).zip(&self.max) {
            let span = hi - lo;
            *o = if span > 0.0 {
                2.0 * (x - lo) / span - 1.0
            } else {
                0.0
            };
        }
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; raw.len()];
        self.normalize_into(raw, &mut out);
        out
    }

    pub fn target_to_model(&self, y: f64) -> f64 {
        (y - self.target_offset) / self.target_scale
    }

    /// Largest excursion of `raw` outside the fitted range, as a fraction
    /// of that range. Zero when inside.
    pub fn extrapolation(&self, raw: &[f64]) -> f64 {
        raw.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                let span = (hi - lo).max(f64::MIN_POSITIVE);
                ((lo - x).max(x - hi).max(0.0)) / span
            })
            .fold(0.0, f64::max)
    }

    fn validate(&self, input_dim: usize) -> Result<()> {
        if self.min.len() != input_dim || self.max.len() != input_dim {
            return Err(Error::validation(format!(
                "normalization covers {}/{} features, network has {input_dim}",
                self.min.len(),
                self.max.len()
            )));
        }
        let finite = self.min.iter().chain(&self.max).all(|v| v.is_finite())
            && self.target_offset.is_finite();
        if !finite {
            return Err(Error::validation("normalization constants must be finite"));
        }
        if self.min.iter().zip(&self.max).any(|(lo, hi)| lo > hi) {
            return Err(Error::validation("normalization min exceeds max"));
        }
        if !(self.target_scale > 0.0 && self.target_scale.is_finite()) {
            return Err(Error::validation("target_scale must be positive"));
        }
        Ok(())
    }
}

/// Layer sizes of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    #[serde(rename = "K")]
    pub k: usize,
}

impl NetworkShape {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>, k: usize) -> Self {
        Self {
            input_dim,
            hidden_sizes,
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::validation("input_dim must be positive"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::validation(
                "hidden_sizes must list at least one positive layer width",
            ));
        }
        if self.k == 0 {
            return Err(Error::validation("mixture size K must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdnNetwork {
    shape: NetworkShape,
    pub(crate) hidden: Vec<Dense>,
    pub(crate) mu: Dense,
    pub(crate) sigma: Dense,
    pub(crate) alpha: Dense,
    normalization: Normalization,
}

/// Gradient of the loss with respect to every weight and bias, laid out
/// like the network itself.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub hidden: Vec<Dense>,
    pub mu: Dense,
    pub sigma: Dense,
    pub alpha: Dense,
}

impl NetworkGrads {
    pub fn zeros_like(net: &MdnNetwork) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs, d.outputs);
        Self {
            hidden: net.hidden.iter().map(z).collect(),
            mu: z(&net.mu),
            sigma: z(&net.sigma),
            alpha: z(&net.alpha),
        }
    }

    pub fn clear(&mut self) {
        for d in self.layers_mut() {
            d.weights.iter_mut().for_each(|w| *w = 0.0);
            d.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for d in self.layers_mut() {
            d.weights.iter_mut().for_each(|w| *w *= factor);
            d.bias.iter_mut().for_each(|b| *b *= factor);
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain([&self.mu, &self.sigma, &self.alpha])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain([&mut self.mu, &mut self.sigma, &mut self.alpha])
    }

    /// Flattened in the canonical parameter order (see [`MdnNetwork::flat_params`]).
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(self.layers())
    }
}

fn flatten_layers<'a>(layers: impl Iterator<Item = &'a Dense>) -> Vec<f64> {
    layers
        .flat_map(|d| d.weights.iter().chain(&d.bias).copied())
        .collect()
}

/// Per-evaluation buffers, reused across calls to avoid allocation in the
/// training loop.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    input: Vec<f64>,
    /// post-activation output of each hidden layer
    acts: Vec<Vec<f64>>,
    mu: Vec<f64>,
    sigma_pre: Vec<f64>,
    sigma: Vec<f64>,
    logits: Vec<f64>,
    alpha: Vec<f64>,
    d_acts: Vec<Vec<f64>>,
    pub(crate) d_mu: Vec<f64>,
    pub(crate) d_sigma_pre: Vec<f64>,
    pub(crate) d_logits: Vec<f64>,
    log_terms: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(net: &MdnNetwork) -> Self {
        let k = net.shape.k;
        Self {
            input: vec![0.0; net.shape.input_dim],
            acts: net.shape.hidden_sizes.iter().map(|&h| vec![0.0; h]).collect(),
            mu: vec![0.0; k],
            sigma_pre: vec![0.0; k],
            sigma: vec![0.0; k],
            logits: vec![0.0; k],
            alpha: vec![0.0; k],
            d_acts: net.shape.hidden_sizes.iter().map(|&h| vec![0.0; h]).collect(),
            d_mu: vec![0.0; k],
            d_sigma_pre: vec![0.0; k],
            d_logits: vec![0.0; k],
            log_terms: vec![0.0; k],
        }
    }
}

impl MdnNetwork {
    /// Kaiming-uniform weights, zero biases, drawn from `rng`.
    pub fn new<R: Rng>(shape: NetworkShape, normalization: Normalization, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        normalization.validate(shape.input_dim)?;
        let mut hidden = Vec::with_capacity(shape.hidden_sizes.len());
        let mut fan_in = shape.input_dim;
        for &h in &shape.hidden_sizes {
            hidden.push(Dense::kaiming_uniform(fan_in, h, rng));
            fan_in = h;
        }
        let mu = Dense::kaiming_uniform(fan_in, shape.k, rng);
        let sigma = Dense::kaiming_uniform(fan_in, shape.k, rng);
        let alpha = Dense::kaiming_uniform(fan_in, shape.k, rng);
        Ok(Self {
            shape,
            hidden,
            mu,
            sigma,
            alpha,
            normalization,
        })
    }

    /// Network with every weight and bias zero.
    pub fn zeros(shape: NetworkShape, normalization: Normalization) -> Result<Self> {
        shape.validate()?;
        normalization.validate(shape.input_dim)?;
        let mut hidden = Vec::new();
        let mut fan_in = shape.input_dim;
        for &h in &shape.hidden_sizes {
            hidden.push(Dense::zeros(fan_in, h));
            fan_in = h;
        }
        let k = shape.k;
        Ok(Self {
            hidden,
            mu: Dense::zeros(fan_in, k),
            sigma: Dense::zeros(fan_in, k),
            alpha: Dense::zeros(fan_in, k),
            shape,
            normalization,
        })
    }

    /// Assembles a network from explicit layers, checking that the
    /// dimensions chain and every parameter is finite.
    pub fn from_parts(
        shape: NetworkShape,
        hidden: Vec<Dense>,
        heads: [Dense; 3],
        normalization: Normalization,
    ) -> Result<Self> {
        shape.validate()?;
        normalization.validate(shape.input_dim)?;
        if hidden.len() != shape.hidden_sizes.len() {
            return Err(Error::validation(format!(
                "{} hidden layers given, shape declares {}",
                hidden.len(),
                shape.hidden_sizes.len()
            )));
        }
        let mut fan_in = shape.input_dim;
        for (i, (layer, &h)) in hidden.iter().zip(&shape.hidden_sizes).enumerate() {
            check_dense(layer, fan_in, h, &format!("layers[{i}]"))?;
            fan_in = h;
        }
        let [mu, sigma, alpha] = heads;
        for (name, head) in [("mu", &mu), ("sigma", &sigma), ("alpha", &alpha)] {
            check_dense(head, fan_in, shape.k, &format!("heads.{name}"))?;
        }
        Ok(Self {
            shape,
            hidden,
            mu,
            sigma,
            alpha,
            normalization,
        })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn input_dim(&self) -> usize {
        self.shape.input_dim
    }

    pub fn k(&self) -> usize {
        self.shape.k
    }

    pub fn hidden_layers(&self) -> &[Dense] {
        &self.hidden
    }

    pub fn heads(&self) -> [&Dense; 3] {
        [&self.mu, &self.sigma, &self.alpha]
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn set_normalization(&mut self, normalization: Normalization) -> Result<()> {
        normalization.validate(self.shape.input_dim)?;
        self.normalization = normalization;
        Ok(())
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain([&self.mu, &self.sigma, &self.alpha])
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain([&mut self.mu, &mut self.sigma, &mut self.alpha])
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    /// Every parameter in canonical order: each hidden layer then the mu,
    /// sigma and alpha heads; within a layer the row-major weights followed
    /// by the bias.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(self.layers())
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::validation(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut it = params.iter();
        for d in self.layers_mut() {
            for w in d.weights.iter_mut().chain(d.bias.iter_mut()) {
                *w = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers().all(Dense::all_finite)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.shape.input_dim {
            return Err(Error::validation(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.shape.input_dim
            )));
        }
        Ok(())
    }

    /// Evaluates the network on already-normalized features, returning the
    /// mixture in model units.
    pub fn forward(&self, input: &[f64]) -> Result<MixtureParams> {
        self.check_input(input)?;
        let mut s = Scratch::new(self);
        s.input.copy_from_slice(input);
        self.forward_scratch(&mut s);
        MixtureParams::new(s.mu, s.sigma, s.alpha)
    }

    /// Normalizes physical features, evaluates, and maps the mixture back
    /// to physical target units.
    pub fn predict(&self, raw: &[f64]) -> Result<MixtureParams> {
        self.check_input(raw)?;
        let x = self.normalization.normalize(raw);
        let n = &self.normalization;
        self.forward(&x)?.affine(n.target_offset, n.target_scale)
    }

    /// Forward pass on `s.input`, filling every intermediate buffer.
    pub(crate) fn forward_scratch(&self, s: &mut Scratch) {
        for (i, layer) in self.hidden.iter().enumerate() {
            let (prev, rest) = s.acts.split_at_mut(i);
            let x: &[f64] = if i == 0 { &s.input } else { &prev[i - 1] };
            let out = &mut rest[0];
            layer.apply(x, out);
            out.iter_mut().for_each(|v| *v = relu(*v));
        }
        let last = s.acts.last().expect("at least one hidden layer");
        self.mu.apply(last, &mut s.mu);
        self.sigma.apply(last, &mut s.sigma_pre);
        for (o, &p) in s.sigma.iter_mut().zip(&s.sigma_pre) {
            *o = sigma_activation(p);
        }
        self.alpha.apply(last, &mut s.logits);
        s.alpha.copy_from_slice(&s.logits);
        softmax_in_place(&mut s.alpha);
    }

    /// GNLL of `target` (model units) under the mixture currently held in
    /// `s`, accumulating its gradient with respect to the head
    /// pre-activations into `s.d_mu`, `s.d_sigma_pre` and `s.d_logits`,
    /// each scaled by `weight`.
    pub(crate) fn head_gradient(&self, s: &mut Scratch, target: f64, weight: f64) -> f64 {
        // log alpha_k from the logits directly, so an underflowed weight
        // never produces -inf
        let lmax = s.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = lmax + s.logits.iter().map(|l| (l - lmax).exp()).sum::<f64>().ln();
        for k in 0..self.shape.k {
            let z = (target - s.mu[k]) / s.sigma[k];
            s.log_terms[k] =
                (s.logits[k] - lse) - 0.5 * z * z - s.sigma[k].ln() - mixture::LN_SQRT_2PI;
        }
        let log_p = mixture::log_sum_exp(&s.log_terms);
        for k in 0..self.shape.k {
            let gamma = (s.log_terms[k] - log_p).exp();
            let sig = s.sigma[k];
            let r = (target - s.mu[k]) / sig;
            s.d_mu[k] += weight * (-gamma * r / sig);
            let d_sigma = gamma * (1.0 - r * r) / sig;
            s.d_sigma_pre[k] += weight * d_sigma * sigma_activation_grad(s.sigma_pre[k]);
            // softmax Jacobian composed with dL/dalpha_k = -gamma_k/alpha_k
            s.d_logits[k] += weight * (s.alpha[k] - gamma);
        }
        -log_p
    }

    /// Backpropagates the head gradients held in `s` through the hidden
    /// stack, accumulating parameter gradients into `grads`.
    pub(crate) fn backprop_scratch(&self, s: &mut Scratch, grads: &mut NetworkGrads) {
        let n = self.hidden.len();
        let last = &s.acts[n - 1];
        grads.mu.accumulate_outer(&s.d_mu, last);
        grads.sigma.accumulate_outer(&s.d_sigma_pre, last);
        grads.alpha.accumulate_outer(&s.d_logits, last);

        let d_last = &mut s.d_acts[n - 1];
        d_last.iter_mut().for_each(|v| *v = 0.0);
        self.mu.backprop_into(&s.d_mu, d_last);
        self.sigma.backprop_into(&s.d_sigma_pre, d_last);
        self.alpha.backprop_into(&s.d_logits, d_last);

        for i in (0..n).rev() {
            // through the ReLU: zero where the unit was inactive
            for (d, &a) in s.d_acts[i].iter_mut().zip(&s.acts[i]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let x: &[f64] = if i == 0 { &s.input } else { &s.acts[i - 1] };
            grads.hidden[i].accumulate_outer(&s.d_acts[i], x);
            if i > 0 {
                let (lower, upper) = s.d_acts.split_at_mut(i);
                let d_prev = &mut lower[i - 1];
                d_prev.iter_mut().for_each(|v| *v = 0.0);
                self.hidden[i].backprop_into(&upper[0], d_prev);
            }
        }
    }

    /// Loss and full parameter gradient of `gnll_point(forward(input), target)`,
    /// with `input` normalized and `target` in model units.
    ///
    /// The head gradients come from [`mixture::gnll_gradients`] composed
    /// with the sigma-activation and softmax Jacobians.
    pub fn backward(&self, input: &[f64], target: f64) -> Result<(f64, NetworkGrads)> {
        self.check_input(input)?;
        let mut s = Scratch::new(self);
        s.input.copy_from_slice(input);
        self.forward_scratch(&mut s);
        let params = MixtureParams::new(s.mu.clone(), s.sigma.clone(), s.alpha.clone())?;
        let g = mixture::gnll_gradients(&params, target);
        let k = self.shape.k;
        for j in 0..k {
            s.d_mu[j] = g.d_means[j];
            s.d_sigma_pre[j] = g.d_sigmas[j] * sigma_activation_grad(s.sigma_pre[j]);
            s.d_logits[j] = (0..k)
                .map(|i| {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    g.d_alphas[i] * s.alpha[i] * (delta - s.alpha[j])
                })
                .sum();
        }
        let mut grads = NetworkGrads::zeros_like(self);
        self.backprop_scratch(&mut s, &mut grads);
        Ok((g.loss, grads))
    }

    /// Same gradient as [`MdnNetwork::backward`] through the fused
    /// log-domain head path used by the training loop.
    #[cfg(test)]
    pub(crate) fn backward_fused(&self, input: &[f64], target: f64) -> (f64, NetworkGrads) {
        let mut s = Scratch::new(self);
        s.input.copy_from_slice(input);
        self.forward_scratch(&mut s);
        let loss = self.head_gradient(&mut s, target, 1.0);
        let mut grads = NetworkGrads::zeros_like(self);
        self.backprop_scratch(&mut s, &mut grads);
        (loss, grads)
    }
}

fn check_dense(d: &Dense, inputs: usize, outputs: usize, what: &str) -> Result<()> {
    if d.inputs != inputs || d.outputs != outputs {
        return Err(Error::validation(format!(
            "{what}: expected {outputs}x{inputs}, found {}x{}",
            d.outputs, d.inputs
        )));
    }
    if d.weights.len() != inputs * outputs || d.bias.len() != outputs {
        return Err(Error::validation(format!(
            "{what}: storage does not match declared {outputs}x{inputs}"
        )));
    }
    if !d.all_finite() {
        return Err(Error::validation(format!("{what}: non-finite parameter")));
    }
    Ok(())
}

impl Scratch {
    pub(crate) fn set_input(&mut self, input: &[f64]) {
        self.input.copy_from_slice(input);
    }

    pub(crate) fn clear_head_grads(&mut self) {
        self.d_mu.iter_mut().for_each(|v| *v = 0.0);
        self.d_sigma_pre.iter_mut().for_each(|v| *v = 0.0);
        self.d_logits.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_branches() {
        assert_eq!(relu(3.5), 3.5);
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(0.0), 0.0);
    }

    #[test]
    fn sigma_activation_branches() {
        assert_eq!(sigma_activation(0.0), 1.0 + f64::EPSILON);
        assert_eq!(sigma_activation(2.0), 3.0 + f64::EPSILON);
        assert!((sigma_activation(-30.0) - (0.5 + f64::EPSILON)).abs() < 1e-12);
        assert!(sigma_activation(-1e3) > 0.5);
        // continuous at zero
        assert!((sigma_activation(-1e-12) - sigma_activation(0.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.7; 4]), vec![0.25; 4]);
        let two = softmax(&[0.0, 3f64.ln()]);
        assert!((two[0] - 0.25).abs() < 1e-12 && (two[1] - 0.75).abs() < 1e-12);
        let big = softmax(&[1000.0, 1000.0, 999.0]);
        assert!(big.iter().all(|v| v.is_finite()));
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_network_output_is_forced_by_activations() {
        let shape = NetworkShape::new(2, vec![4, 3], 3);
        let net = MdnNetwork::zeros(shape, Normalization::identity(2)).unwrap();
        let p = net.forward(&[0.3, -0.8]).unwrap();
        assert_eq!(p.means(), &[0.0; 3]);
        assert_eq!(p.sigmas(), &[1.0 + f64::EPSILON; 3]);
        for a in p.alphas() {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_sized_network_matches_manual_arithmetic() {
        // 1 -> 1 -> K=1; h = relu(2x - 0.5); mu = 3h + 1; sigma = elu1(-h); alpha = 1
        let shape = NetworkShape::new(1, vec![1], 1);
        let dense = |w: f64, b: f64| Dense {
            inputs: 1,
            outputs: 1,
            weights: vec![w],
            bias: vec![b],
        };
        let net = MdnNetwork::from_parts(
            shape,
            vec![dense(2.0, -0.5)],
            [dense(3.0, 1.0), dense(-1.0, 0.0), dense(5.0, 2.0)],
            Normalization::identity(1),
        )
        .unwrap();
        let p = net.forward(&[0.75]).unwrap();
        let h: f64 = 2.0 * 0.75 - 0.5;
        assert_eq!(p.means()[0], 3.0 * h + 1.0);
        assert!((p.sigmas()[0] - (0.5 * ((-h).exp() - 1.0) + 1.0 + f64::EPSILON)).abs() < 1e-15);
        assert_eq!(p.alphas()[0], 1.0);
        // negative pre-activation is clipped by the ReLU
        let p = net.forward(&[0.1]).unwrap();
        assert_eq!(p.means()[0], 1.0);
    }

    #[test]
    fn forward_is_deterministic_and_checks_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = NetworkShape::new(3, vec![8, 8], 3);
        let net = MdnNetwork::new(shape, Normalization::identity(3), &mut rng).unwrap();
        let a = net.forward(&[0.1, -0.2, 1.0]).unwrap();
        let b = net.forward(&[0.1, -0.2, 1.0]).unwrap();
        assert_eq!(a, b);
        assert!(net.forward(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn stationary_mu_bias_has_zero_gradient() {
        // K=1 and the mu head outputs exactly the target
        let shape = NetworkShape::new(1, vec![2], 1);
        let mut net = MdnNetwork::zeros(shape, Normalization::identity(1)).unwrap();
        net.mu.bias[0] = 0.25;
        let (_, g) = net.backward(&[0.4], 0.25).unwrap();
        assert_eq!(g.mu.bias[0], 0.0);
    }

    #[test]
    fn gradients_finite_far_from_all_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = NetworkShape::new(2, vec![6], 2);
        let net = MdnNetwork::new(shape, Normalization::identity(2), &mut rng).unwrap();
        let p = net.forward(&[0.5, 0.5]).unwrap();
        let (lo, _) = p.support_bracket(10.0);
        let (loss, g) = net.backward(&[0.5, 0.5], lo - 50.0).unwrap();
        assert!(loss.is_finite());
        assert!(g.flatten().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn fused_and_composed_gradients_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let shape = NetworkShape::new(3, vec![7, 5], 3);
            let net = MdnNetwork::new(shape, Normalization::identity(3), &mut rng).unwrap();
            let x = [0.3 - trial as f64 * 0.1, 0.6, -0.4];
            let target = -1.0 + 0.4 * trial as f64;
            let (la, ga) = net.backward(&x, target).unwrap();
            let (lb, gb) = net.backward_fused(&x, target);
            assert!((la - lb).abs() < 1e-12 * la.abs().max(1.0));
            for (a, b) in ga.flatten().iter().zip(gb.flatten()) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = NetworkShape::new(3, vec![5, 4], 2);
        let net = MdnNetwork::new(shape, Normalization::identity(3), &mut rng).unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.param_count());
        let mut other = MdnNetwork::zeros(net.shape().clone(), Normalization::identity(3)).unwrap();
        other.set_flat_params(&flat).unwrap();
        assert_eq!(other, net);
    }
}
