//! Hand-rolled dense networks: a 3-weight-layer ReLU MLP with exact
//! reverse-mode gradients, Adam, and an independent-Bernoulli multi-binary
//! head. Everything is f64 and flat-buffer based so gradients can be checked
//! against finite differences parameter by parameter.

use crate::error::{PpnError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Parameters of one MLP, stored as a single flat buffer in the fixed order
/// w1, b1, w2, b2, w3, b3 (weight matrices row-major, shape out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// [input, hidden1, hidden2, output]
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

/// Default hidden width.
pub const HIDDEN_DIM: usize = 128;

fn sizes(dims: &[usize; 4]) -> [usize; 6] {
    let [d0, d1, d2, d3] = *dims;
    [d1 * d0, d1, d2 * d1, d2, d3 * d2, d3]
}

impl MlpParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self::zeros_with_hidden(input, HIDDEN_DIM, output)
    }

    pub fn zeros_with_hidden(input: usize, hidden: usize, output: usize) -> Self {
        let dims = [input, hidden, hidden, output];
        let n: usize = sizes(&dims).iter().sum();
        MlpParams {
            dims,
            data: vec![0.0; n],
        }
    }

    /// Uniform Xavier-style init; biases zero.
    pub fn random(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::random_with_hidden(input, HIDDEN_DIM, output, rng)
    }

    pub fn random_with_hidden(
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut p = Self::zeros_with_hidden(input, hidden, output);
        let dims = p.dims;
        for layer in 0..3 {
            let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (off, len) = p.tensor_range(layer * 2);
            for x in &mut p.data[off..off + len] {
                *x = rng.gen_range(-scale..scale);
            }
        }
        p
    }

    pub fn n_params(&self) -> usize {
        self.data.len()
    }

    /// (offset, len) of tensor `t` in {0: w1, 1: b1, 2: w2, 3: b2, 4: w3, 5: b3}.
    pub fn tensor_range(&self, t: usize) -> (usize, usize) {
        let s = sizes(&self.dims);
        let off: usize = s[..t].iter().sum();
        (off, s[t])
    }

    pub fn tensor(&self, t: usize) -> &[f64] {
        let (off, len) = self.tensor_range(t);
        &self.data[off..off + len]
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[3]
    }

    pub fn finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    pub x: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

/// y[n x out] = x[n x in] . W^T + b, where W is out x in row-major.
fn linear_batch(x: &[f64], n: usize, w: &[f64], b: &[f64], in_dim: usize, out_dim: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * out_dim];
    for i in 0..n {
        let xi = &x[i * in_dim..(i + 1) * in_dim];
        let yi = &mut y[i * out_dim..(i + 1) * out_dim];
        for o in 0..out_dim {
            let wo = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = b[o];
            for k in 0..in_dim {
                acc += wo[k] * xi[k];
            }
            yi[o] = acc;
        }
    }
    y
}

fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Forward pass over a batch of `n` inputs (flattened row-major).
pub fn forward_batch(params: &MlpParams, x: &[f64], n: usize) -> Result<(Vec<f64>, ForwardCache)> {
    let [d0, d1, d2, d3] = params.dims;
    if x.len() != n * d0 {
        return Err(PpnError::Dimension(format!(
            "input length {} vs batch {} x dim {}",
            x.len(),
            n,
            d0
        )));
    }
    let mut h1 = linear_batch(x, n, params.tensor(0), params.tensor(1), d0, d1);
    relu_inplace(&mut h1);
    let mut h2 = linear_batch(&h1, n, params.tensor(2), params.tensor(3), d1, d2);
    relu_inplace(&mut h2);
    let logits = linear_batch(&h2, n, params.tensor(4), params.tensor(5), d2, d3);
    Ok((
        logits,
        ForwardCache {
            batch: n,
            x: x.to_vec(),
            h1,
            h2,
        },
    ))
}

/// Single-input convenience wrapper.
pub fn forward(params: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    forward_batch(params, x, 1)
}

/// Exact reverse-mode gradients. `upstream` is dLoss/dlogits (n x out,
/// already including any 1/n factor); returns a gradient buffer with the
/// same layout as `params.data`.
pub fn backward_batch(params: &MlpParams, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
    let [d0, d1, d2, d3] = params.dims;
    let n = cache.batch;
    if upstream.len() != n * d3 || cache.x.len() != n * d0 {
        return Err(PpnError::Dimension("backward: cache/upstream shape mismatch".into()));
    }
    let mut grads = vec![0.0; params.data.len()];
    let (w1o, _) = params.tensor_range(0);
    let (b1o, _) = params.tensor_range(1);
    let (w2o, _) = params.tensor_range(2);
    let (b2o, _) = params.tensor_range(3);
    let (w3o, _) = params.tensor_range(4);
    let (b3o, _) = params.tensor_range(5);
    let w2 = params.tensor(2).to_vec();
    let w3 = params.tensor(4).to_vec();

    let mut dh2 = vec![0.0; n * d2];
    for i in 0..n {
        let g = &upstream[i * d3..(i + 1) * d3];
        let h2 = &cache.h2[i * d2..(i + 1) * d2];
        for o in 0..d3 {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            let row = &mut grads[w3o + o * d2..w3o + (o + 1) * d2];
            for k in 0..d2 {
                row[k] += go * h2[k];
            }
            grads[b3o + o] += go;
            let wrow = &w3[o * d2..(o + 1) * d2];
            let di = &mut dh2[i * d2..(i + 1) * d2];
            for k in 0..d2 {
                di[k] += go * wrow[k];
            }
        }
    }
    // ReLU mask of layer 2.
    for (g, h) in dh2.iter_mut().zip(cache.h2.iter()) {
        if *h <= 0.0 {
            *g = 0.0;
        }
    }

    let mut dh1 = vec![0.0; n * d1];
    for i in 0..n {
        let g = &dh2[i * d2..(i + 1) * d2];
        let h1 = &cache.h1[i * d1..(i + 1) * d1];
        for o in 0..d2 {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            let row = &mut grads[w2o + o * d1..w2o + (o + 1) * d1];
            for k in 0..d1 {
                row[k] += go * h1[k];
            }
            grads[b2o + o] += go;
            let wrow = &w2[o * d1..(o + 1) * d1];
            let di = &mut dh1[i * d1..(i + 1) * d1];
            for k in 0..d1 {
                di[k] += go * wrow[k];
            }
        }
    }
    for (g, h) in dh1.iter_mut().zip(cache.h1.iter()) {
        if *h <= 0.0 {
            *g = 0.0;
        }
    }

    for i in 0..n {
        let g = &dh1[i * d1..(i + 1) * d1];
        let x = &cache.x[i * d0..(i + 1) * d0];
        for o in 0..d1 {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            let row = &mut grads[w1o + o * d0..w1o + (o + 1) * d0];
            for k in 0..d0 {
                row[k] += go * x[k];
            }
            grads[b1o + o] += go;
        }
    }
    Ok(grads)
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// log(1 + e^z) computed without overflow.
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        0.0
    } else {
        z.exp().ln_1p()
    }
}

/// Independent-Bernoulli distribution over a multi-binary action vector.
#[derive(Debug, Clone)]
pub struct BernoulliPolicy {
    pub logits: Vec<f64>,
}

impl BernoulliPolicy {
    pub fn new(logits: Vec<f64>) -> Self {
        BernoulliPolicy { logits }
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logits.iter().map(|z| sigmoid(*z)).collect()
    }

    /// Sample a bit per dimension; returns the bits and their joint log-prob.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<u8>, f64) {
        let mut bits = Vec::with_capacity(self.logits.len());
        for &z in &self.logits {
            let p = sigmoid(z);
            bits.push((rng.gen::<f64>() < p) as u8);
        }
        let lp = self.log_prob(&bits);
        (bits, lp)
    }

    /// Joint log-probability of an action vector:
    /// sum_d a_d log p_d + (1 - a_d) log(1 - p_d).
    pub fn log_prob(&self, bits: &[u8]) -> f64 {
        debug_assert_eq!(bits.len(), self.logits.len());
        let mut lp = 0.0;
        for (&z, &a) in self.logits.iter().zip(bits) {
            // log p = -softplus(-z), log(1-p) = -softplus(z)
            lp -= if a == 1 { softplus(-z) } else { softplus(z) };
        }
        lp
    }

    /// Threshold at p >= 0.5 (ties emit 1).
    pub fn greedy(&self) -> Vec<u8> {
        self.logits.iter().map(|z| (*z >= 0.0) as u8).collect()
    }
}

/// Adam optimizer state for one parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam step; errors out on non-finite gradients.
    pub fn step(&mut self, params: &mut MlpParams, grads: &[f64], lr: f64) -> Result<()> {
        if grads.len() != params.data.len() {
            return Err(PpnError::Dimension("adam: gradient shape mismatch".into()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(PpnError::NonFinite(format!(
                "gradient at adam step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..grads.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params.data[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Loss functions (value + analytic gradient wrt logits/outputs), shared by
// the trainers and by the finite-difference oracle.
// ---------------------------------------------------------------------------

/// Mean (over batch) of summed per-dimension binary cross-entropy.
pub fn bce_loss(logits: &[f64], targets: &[f64], n: usize) -> f64 {
    let d = logits.len() / n;
    let mut loss = 0.0;
    for i in 0..n {
        for j in 0..d {
            let z = logits[i * d + j];
            let t = targets[i * d + j];
            // -t log p - (1-t) log(1-p)
            loss += t * softplus(-z) + (1.0 - t) * softplus(z);
        }
    }
    loss / n as f64
}

/// dLoss/dlogits for `bce_loss`.
pub fn bce_grad(logits: &[f64], targets: &[f64], n: usize) -> Vec<f64> {
    logits
        .iter()
        .zip(targets)
        .map(|(&z, &t)| (sigmoid(z) - t) / n as f64)
        .collect()
}

/// Negative clipped PPO surrogate: -mean_i min(rho A, clip(rho) A).
pub fn ppo_clip_loss(
    logits: &[f64],
    actions: &[u8],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip_eps: f64,
    n: usize,
) -> f64 {
    let d = logits.len() / n;
    let mut total = 0.0;
    for i in 0..n {
        let pol = BernoulliPolicy::new(logits[i * d..(i + 1) * d].to_vec());
        let lp = pol.log_prob(&actions[i * d..(i + 1) * d]);
        let rho = (lp - old_log_probs[i]).exp();
        let a = advantages[i];
        let unclipped = rho * a;
        let clipped = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a;
        total += unclipped.min(clipped);
    }
    -total / n as f64
}

/// dLoss/dlogits for `ppo_clip_loss`.
pub fn ppo_clip_grad(
    logits: &[f64],
    actions: &[u8],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip_eps: f64,
    n: usize,
) -> Vec<f64> {
    let d = logits.len() / n;
    let mut grad = vec![0.0; logits.len()];
    for i in 0..n {
        let zi = &logits[i * d..(i + 1) * d];
        let ai = &actions[i * d..(i + 1) * d];
        let pol = BernoulliPolicy::new(zi.to_vec());
        let lp = pol.log_prob(ai);
        let rho = (lp - old_log_probs[i]).exp();
        let a = advantages[i];
        let unclipped = rho * a;
        let clipped = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a;
        // Gradient flows only through the unclipped branch when selected.
        if unclipped <= clipped {
            // d/dz_j [rho a] = rho a (a_j - p_j); loss is negated and averaged.
            let coeff = -rho * a / n as f64;
            for j in 0..d {
                grad[i * d + j] = coeff * (ai[j] as f64 - sigmoid(zi[j]));
            }
        }
    }
    grad
}

/// Hand-built weights whose thresholded output reproduces the first `v_dim`
/// entries of the input. Used as the inert "copy" PPN and as a forward-pass
/// oracle.
pub fn identity_copy_params(v_dim: usize, input: usize, hidden: usize) -> MlpParams {
    assert!(hidden >= v_dim && input >= v_dim);
    let mut p = MlpParams::zeros_with_hidden(input, hidden, v_dim);
    let (w1o, _) = p.tensor_range(0);
    let (w2o, _) = p.tensor_range(2);
    let (w3o, _) = p.tensor_range(4);
    let (b3o, _) = p.tensor_range(5);
    let [d0, d1, d2, _] = p.dims;
    for d in 0..v_dim {
        p.data[w1o + d * d0 + d] = 1.0; // h1_d = relu(v_d) = v_d
        p.data[w2o + d * d1 + d] = 1.0; // h2_d = v_d
        p.data[w3o + d * d2 + d] = 10.0; // logit = 10 v_d - 5
        p.data[b3o + d] = -5.0;
    }
    p
}

/// coef * mean (v - target)^2 over scalar value outputs.
pub fn value_mse_loss(values: &[f64], targets: &[f64], coef: f64) -> f64 {
    let n = values.len();
    let sum: f64 = values
        .iter()
        .zip(targets)
        .map(|(v, t)| (v - t) * (v - t))
        .sum();
    coef * sum / n as f64
}

/// dLoss/dvalues for `value_mse_loss`.
pub fn value_mse_grad(values: &[f64], targets: &[f64], coef: f64) -> Vec<f64> {
    let n = values.len() as f64;
    values
        .iter()
        .zip(targets)
        .map(|(v, t)| 2.0 * coef * (v - t) / n)
        .collect()
}

/// Negative mean Bernoulli entropy, scaled: `-coef * (1/n) Σ_rows Σ_bits H`,
/// where per-bit `H(z) = p·softplus(-z) + (1-p)·softplus(z)` with `p = σ(z)`.
/// Added to the policy loss it counteracts logit saturation and keeps
/// exploration alive; `coef = 0` disables it.
pub fn entropy_loss(logits: &[f64], coef: f64, n: usize) -> f64 {
    if coef == 0.0 {
        return 0.0;
    }
    let sum: f64 = logits
        .iter()
        .map(|&z| {
            let p = sigmoid(z);
            p * softplus(-z) + (1.0 - p) * softplus(z)
        })
        .sum();
    -coef * sum / n as f64
}

/// dLoss/dlogits for `entropy_loss`: per bit, `dH/dz = -z·p·(1-p)`.
pub fn entropy_grad(logits: &[f64], coef: f64, n: usize) -> Vec<f64> {
    if coef == 0.0 {
        return vec![0.0; logits.len()];
    }
    logits
        .iter()
        .map(|&z| {
            let p = sigmoid(z);
            coef * z * p * (1.0 - p) / n as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn zero_weights_give_half_probs() {
        let p = MlpParams::zeros_with_hidden(10, 8, 4);
        let x = vec![0.3; 10];
        let (logits, _) = forward(&p, &x).unwrap();
        assert!(logits.iter().all(|z| *z == 0.0));
        let pol = BernoulliPolicy::new(logits);
        assert!(pol.probs().iter().all(|p| (*p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn shape_mismatch_is_error() {
        let p = MlpParams::zeros_with_hidden(10, 8, 4);
        assert!(forward(&p, &[0.0; 9]).is_err());
    }

    #[test]
    fn constructive_identity_reproduces_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v_dim = 12;
        let input = 40;
        let p = identity_copy_params(v_dim, input, 16);
        for _ in 0..50 {
            let mut x = vec![0.0; input];
            for j in 0..input {
                x[j] = if rng.gen::<f64>() < 0.3 { 1.0 } else { 0.0 };
            }
            let (logits, _) = forward(&p, &x).unwrap();
            let bits = BernoulliPolicy::new(logits).greedy();
            for d in 0..v_dim {
                assert_eq!(bits[d] as f64, x[d]);
            }
        }
    }

    /// Straight-line nested-loop reimplementation used as the forward oracle.
    fn forward_oracle(p: &MlpParams, x: &[f64]) -> Vec<f64> {
        let [d0, d1, d2, d3] = p.dims;
        let get = |t: usize| {
            let (off, len) = p.tensor_range(t);
            &p.data[off..off + len]
        };
        let (w1, b1, w2, b2, w3, b3) = (get(0), get(1), get(2), get(3), get(4), get(5));
        let mut h1 = vec![0.0; d1];
        for o in 0..d1 {
            let mut s = b1[o];
            for k in 0..d0 {
                s += w1[o * d0 + k] * x[k];
            }
            h1[o] = s.max(0.0);
        }
        let mut h2 = vec![0.0; d2];
        for o in 0..d2 {
            let mut s = b2[o];
            for k in 0..d1 {
                s += w2[o * d1 + k] * h1[k];
            }
            h2[o] = s.max(0.0);
        }
        let mut out = vec![0.0; d3];
        for o in 0..d3 {
            let mut s = b3[o];
            for k in 0..d2 {
                s += w3[o * d2 + k] * h2[k];
            }
            out[o] = s;
        }
        out
    }

    #[test]
    fn forward_matches_independent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = MlpParams::random_with_hidden(17, 9, 5, &mut rng);
            let x: Vec<f64> = (0..17).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (logits, _) = forward(&p, &x).unwrap();
            let oracle = forward_oracle(&p, &x);
            for (a, b) in logits.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sample_saturates_and_is_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pol = BernoulliPolicy::new(vec![-50.0; 8]);
        let (bits, lp) = pol.sample(&mut rng);
        assert!(bits.iter().all(|b| *b == 0));
        assert!(lp <= 0.0 && lp.is_finite());

        let pol = BernoulliPolicy::new(vec![0.0; 4]);
        let mut ones = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let (bits, lp) = pol.sample(&mut rng);
            ones += bits.iter().map(|b| *b as usize).sum::<usize>();
            assert!(lp <= 0.0);
        }
        let rate = ones as f64 / (4 * n) as f64;
        assert!((rate - 0.5).abs() < 0.02, "rate {}", rate);
    }

    #[test]
    fn log_prob_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let logits: Vec<f64> = (0..10).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pol = BernoulliPolicy::new(logits.clone());
        let (bits, lp) = pol.sample(&mut rng);
        let product: f64 = logits
            .iter()
            .zip(&bits)
            .map(|(&z, &a)| {
                let p = sigmoid(z);
                if a == 1 {
                    p
                } else {
                    1.0 - p
                }
            })
            .product();
        assert!((lp.exp() - product).abs() < 1e-12);
    }

    #[test]
    fn greedy_tie_and_signs() {
        let pol = BernoulliPolicy::new(vec![0.0, 3.0, -3.0]);
        assert_eq!(pol.greedy(), vec![1, 1, 0]);
    }

    #[test]
    fn greedy_matches_sample_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let pol = BernoulliPolicy::new(logits);
        let greedy = pol.greedy();
        let n = 10_000;
        let mut counts = vec![0usize; 6];
        for _ in 0..n {
            let (bits, _) = pol.sample(&mut rng);
            for (c, b) in counts.iter_mut().zip(&bits) {
                *c += *b as usize;
            }
        }
        for (d, c) in counts.iter().enumerate() {
            let mode = (*c * 2 > n) as u8;
            assert_eq!(mode, greedy[d], "dim {}", d);
        }
    }

    fn numeric_grad(
        p: &MlpParams,
        loss: impl Fn(&MlpParams) -> f64,
        h: f64,
    ) -> Vec<f64> {
        let mut g = vec![0.0; p.n_params()];
        let mut q = p.clone();
        for i in 0..p.n_params() {
            let orig = q.data[i];
            q.data[i] = orig + h;
            let up = loss(&q);
            q.data[i] = orig - h;
            let down = loss(&q);
            q.data[i] = orig;
            g[i] = (up - down) / (2.0 * h);
        }
        g
    }

    fn assert_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        let dot: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum();
        let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
        let rel = dot.sqrt() / (na + nb).max(1e-12);
        assert!(rel < tol, "relative gradient error {}", rel);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let p = MlpParams::random_with_hidden(9, 7, 4, &mut rng);
            let n = 3;
            let x: Vec<f64> = (0..n * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t: Vec<f64> = (0..n * 4).map(|_| (rng.gen::<f64>() < 0.5) as u8 as f64).collect();
            let (logits, cache) = forward_batch(&p, &x, n).unwrap();
            let analytic = backward_batch(&p, &cache, &bce_grad(&logits, &t, n)).unwrap();
            let numeric = numeric_grad(
                &p,
                |q| {
                    let (l, _) = forward_batch(q, &x, n).unwrap();
                    bce_loss(&l, &t, n)
                },
                1e-5,
            );
            assert_close(&analytic, &numeric, 1e-4);
        }
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..5 {
            let p = MlpParams::random_with_hidden(9, 7, 4, &mut rng);
            let n = 3;
            let x: Vec<f64> = (0..n * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let coef = 0.05;
            let (logits, cache) = forward_batch(&p, &x, n).unwrap();
            let analytic =
                backward_batch(&p, &cache, &entropy_grad(&logits, coef, n)).unwrap();
            let numeric = numeric_grad(
                &p,
                |q| {
                    let (l, _) = forward_batch(q, &x, n).unwrap();
                    entropy_loss(&l, coef, n)
                },
                1e-5,
            );
            assert_close(&analytic, &numeric, 1e-4);
        }
    }

    #[test]
    fn entropy_is_maximal_at_zero_logit() {
        // H peaks at p = 0.5, so the loss (negative entropy) has zero
        // gradient at z = 0 and pushes larger logits back toward it.
        assert!(entropy_grad(&[0.0], 0.1, 1)[0].abs() < 1e-15);
        assert!(entropy_grad(&[3.0], 0.1, 1)[0] > 0.0);
        assert!(entropy_grad(&[-3.0], 0.1, 1)[0] < 0.0);
        assert!(entropy_loss(&[0.0], 0.1, 1) < entropy_loss(&[3.0], 0.1, 1));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let p = MlpParams::random_with_hidden(6, 5, 3, &mut rng);
        let x = vec![0.5; 6];
        let (_, cache) = forward(&p, &x).unwrap();
        let g = backward_batch(&p, &cache, &[0.0; 3]).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn bce_stationary_at_target() {
        // p == target makes the logit gradient vanish.
        let logits = vec![0.0; 4];
        let targets = vec![0.5; 4];
        let g = bce_grad(&logits, &targets, 1);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn adam_zero_grads_leave_params() {
        let mut p = MlpParams::zeros_with_hidden(4, 3, 2);
        p.data[0] = 1.5;
        let before = p.data.clone();
        let n = p.n_params();
        let mut adam = AdamState::new(n);
        adam.step(&mut p, &vec![0.0; n], 1e-3).unwrap();
        assert_eq!(p.data, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut p = MlpParams::zeros_with_hidden(2, 2, 1);
        let n = p.n_params();
        let mut grads = vec![0.0; n];
        grads[0] = 0.7;
        grads[1] = -1.3;
        let mut adam = AdamState::new(n);
        adam.step(&mut p, &grads, 1e-3).unwrap();
        assert!((p.data[0] + 1e-3).abs() < 1e-9);
        assert!((p.data[1] - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn adam_non_finite_grad_errors() {
        let mut p = MlpParams::zeros_with_hidden(2, 2, 1);
        let n = p.n_params();
        let mut grads = vec![0.0; n];
        grads[0] = f64::NAN;
        let mut adam = AdamState::new(n);
        assert!(matches!(
            adam.step(&mut p, &grads, 1e-3),
            Err(PpnError::NonFinite(_))
        ));
    }

    #[test]
    fn adam_converges_bce_on_toy_dataset() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut p = MlpParams::random_with_hidden(3, 16, 2, &mut rng);
        let x = vec![
            0.0, 0.0, 1.0, //
            0.0, 1.0, 0.0, //
            1.0, 0.0, 0.0, //
            1.0, 1.0, 1.0,
        ];
        let t = vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        let mut adam = AdamState::new(p.n_params());
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            let (logits, cache) = forward_batch(&p, &x, 4).unwrap();
            last = bce_loss(&logits, &t, 4);
            if last < 1e-3 {
                break;
            }
            let g = backward_batch(&p, &cache, &bce_grad(&logits, &t, 4)).unwrap();
            adam.step(&mut p, &g, 1e-2).unwrap();
        }
        assert!(last < 1e-3, "final loss {}", last);
    }
}
