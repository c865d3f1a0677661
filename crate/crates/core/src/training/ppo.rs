//! Clipped-surrogate policy optimization for one PPN: minibatch epochs over
//! a fixed-length trajectory with per-minibatch advantage normalization and
//! a squared-error value head.

use crate::error::{PpnError, Result};
use crate::nn::{
    backward_batch, forward_batch, ppo_clip_grad, ppo_clip_loss, value_mse_grad, value_mse_loss,
};
use crate::ppn::Ppn;
use crate::training::gae::gae;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub iterations: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub value_coef: f64,
    /// Entropy-bonus coefficient; 0 disables the term.
    #[serde(default)]
    pub entropy_coef: f64,
    pub lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            iterations: 200,
            horizon: 1024,
            epochs: 5,
            minibatch: 32,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.0,
            lr: 1e-4,
        }
    }
}

/// Fixed-length transition stream for one PPN (several episodes, possibly
/// cut mid-episode at the end).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub input_dim: usize,
    pub action_dim: usize,
    pub inputs: Vec<f64>,
    pub actions: Vec<u8>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// V(s_next) when the stream ends mid-episode, 0 otherwise.
    pub bootstrap: f64,
    pub n: usize,
}

impl Trajectory {
    pub fn new(input_dim: usize, action_dim: usize) -> Self {
        Trajectory {
            input_dim,
            action_dim,
            inputs: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            bootstrap: 0.0,
            n: 0,
        }
    }

    pub fn truncate(&mut self, horizon: usize) {
        if self.n <= horizon {
            return;
        }
        // The first dropped value bootstraps the cut episode.
        self.bootstrap = if self.dones[horizon - 1] {
            0.0
        } else {
            self.values[horizon]
        };
        self.inputs.truncate(horizon * self.input_dim);
        self.actions.truncate(horizon * self.action_dim);
        self.log_probs.truncate(horizon);
        self.values.truncate(horizon);
        self.rewards.truncate(horizon);
        self.dones.truncate(horizon);
        self.n = horizon;
    }
}

/// Diagnostics of one `ppo_update` call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// max |rho - 1| over the first minibatch, before any step.
    pub ratio_dev: f64,
    /// |surrogate - mean normalized advantage| on the first minibatch.
    pub surrogate_dev: f64,
    pub clip_fraction: f64,
}

fn normalize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    xs.iter().map(|x| (x - mean) / std).collect()
}

/// Run `cfg.epochs` passes of clipped-surrogate minibatch updates on one
/// PPN's trajectory. Advantages are normalized per minibatch; the learning
/// rate is supplied by the caller (annealing is the harness's job).
pub fn ppo_update(
    ppn: &mut Ppn,
    traj: &Trajectory,
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    if traj.n == 0 {
        return Err(PpnError::Dimension("empty trajectory".into()));
    }
    let (advantages, returns) = gae(
        &traj.rewards,
        &traj.values,
        &traj.dones,
        traj.bootstrap,
        cfg.gamma,
        cfg.lambda,
    );

    let d_in = traj.input_dim;
    let d_act = traj.action_dim;
    let mut order: Vec<usize> = (0..traj.n).collect();
    let mut stats = UpdateStats {
        policy_loss: 0.0,
        value_loss: 0.0,
        ratio_dev: 0.0,
        surrogate_dev: 0.0,
        clip_fraction: 0.0,
    };
    let mut batches = 0usize;
    let mut clipped = 0usize;
    let mut seen = 0usize;
    let mut first = true;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let m = chunk.len();
            let mut xs = Vec::with_capacity(m * d_in);
            let mut acts = Vec::with_capacity(m * d_act);
            let mut old_lp = Vec::with_capacity(m);
            let mut adv = Vec::with_capacity(m);
            let mut ret = Vec::with_capacity(m);
            for &i in chunk {
                xs.extend_from_slice(&traj.inputs[i * d_in..(i + 1) * d_in]);
                acts.extend_from_slice(&traj.actions[i * d_act..(i + 1) * d_act]);
                old_lp.push(traj.log_probs[i]);
                adv.push(advantages[i]);
                ret.push(returns[i]);
            }
            let adv = normalize(&adv);

            let (logits, cache) = forward_batch(&ppn.policy, &xs, m)?;
            let p_loss = ppo_clip_loss(&logits, &acts, &old_lp, &adv, cfg.clip, m);
            if first {
                // Before any parameter change the new and old policies agree,
                // so every ratio must be 1 and the surrogate must equal the
                // mean normalized advantage.
                let mut max_dev = 0.0f64;
                for (k, &i) in chunk.iter().enumerate() {
                    let pol = crate::nn::BernoulliPolicy::new(
                        logits[k * d_act..(k + 1) * d_act].to_vec(),
                    );
                    let rho = (pol.log_prob(&traj.actions[i * d_act..(i + 1) * d_act])
                        - old_lp[k])
                        .exp();
                    max_dev = max_dev.max((rho - 1.0).abs());
                }
                stats.ratio_dev = max_dev;
                let mean_adv = adv.iter().sum::<f64>() / m as f64;
                stats.surrogate_dev = ((-p_loss) - mean_adv).abs();
                first = false;
            }
            for (k, &i) in chunk.iter().enumerate() {
                let pol =
                    crate::nn::BernoulliPolicy::new(logits[k * d_act..(k + 1) * d_act].to_vec());
                let rho = (pol.log_prob(&traj.actions[i * d_act..(i + 1) * d_act]) - old_lp[k])
                    .exp();
                if (rho - 1.0).abs() > cfg.clip {
                    clipped += 1;
                }
                seen += 1;
            }
            let mut pg = ppo_clip_grad(&logits, &acts, &old_lp, &adv, cfg.clip, m);
            if cfg.entropy_coef != 0.0 {
                for (g, e) in pg
                    .iter_mut()
                    .zip(crate::nn::entropy_grad(&logits, cfg.entropy_coef, m))
                {
                    *g += e;
                }
            }
            let grads = backward_batch(&ppn.policy, &cache, &pg)?;
            ppn.policy_adam.step(&mut ppn.policy, &grads, lr)?;

            let (values, vcache) = forward_batch(&ppn.value, &xs, m)?;
            let v_loss = value_mse_loss(&values, &ret, cfg.value_coef);
            let vg = value_mse_grad(&values, &ret, cfg.value_coef);
            let vgrads = backward_batch(&ppn.value, &vcache, &vg)?;
            ppn.value_adam.step(&mut ppn.value, &vgrads, lr)?;

            stats.policy_loss += p_loss;
            stats.value_loss += v_loss;
            batches += 1;
        }
    }
    stats.policy_loss /= batches.max(1) as f64;
    stats.value_loss /= batches.max(1) as f64;
    stats.clip_fraction = clipped as f64 / seen.max(1) as f64;
    Ok(stats)
}
