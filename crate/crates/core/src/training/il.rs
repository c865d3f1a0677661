//! Imitation pretraining: teach each PPN to reproduce its input vector.
//! Targets come from logged pipeline turns with an inert copy PPN attached,
//! so the features are exactly what the PPN will see during reinforcement
//! learning.

use crate::error::{PpnError, Result};
use crate::nn::{bce_grad, bce_loss, backward_batch, forward_batch, AdamState, MlpParams};
use crate::ppn::Ppn;
use crate::session::{dialogue_rng, identity_ppn_set, run_session, Env};
use crate::vocab::PpnPosition;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlConfig {
    pub turns: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Fraction of turns held out for validation.
    pub holdout: f64,
}

impl Default for IlConfig {
    fn default() -> Self {
        IlConfig {
            turns: 10_000,
            epochs: 20,
            batch: 32,
            lr: 1e-3,
            holdout: 0.2,
        }
    }
}

/// Flat supervised dataset for one position.
#[derive(Debug, Clone)]
pub struct IlDataset {
    pub input_dim: usize,
    pub target_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub n: usize,
}

const DATA_MAGIC: &[u8; 4] = b"ILDS";
const DATA_VERSION: u32 = 1;

impl IlDataset {
    /// Binary persistence; the manifest hash is embedded so a dataset is never
    /// trained against a different world.
    pub fn save(&self, path: &std::path::Path, manifest_hash: &str) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(DATA_MAGIC);
        buf.extend_from_slice(&DATA_VERSION.to_le_bytes());
        let hash = manifest_hash.as_bytes();
        buf.extend_from_slice(&(hash.len() as u32).to_le_bytes());
        buf.extend_from_slice(hash);
        buf.extend_from_slice(&(self.input_dim as u64).to_le_bytes());
        buf.extend_from_slice(&(self.target_dim as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        crate::ppn::write_f64s(&mut buf, &self.inputs);
        crate::ppn::write_f64s(&mut buf, &self.targets);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, manifest_hash: &str) -> Result<IlDataset> {
        let bytes = std::fs::read(path)?;
        let mut r = crate::ppn::Reader { bytes: &bytes, pos: 0 };
        let file = path.display().to_string();
        if r.take(4)? != &DATA_MAGIC[..] {
            return Err(PpnError::WeightFormat(format!("{}: bad magic", file)));
        }
        let version = r.u32()?;
        if version != DATA_VERSION {
            return Err(PpnError::WeightFormat(format!(
                "{}: unsupported version {}",
                file, version
            )));
        }
        let hash_len = r.u32()? as usize;
        let hash = String::from_utf8(r.take(hash_len)?.to_vec())
            .map_err(|_| PpnError::WeightFormat(format!("{}: non-utf8 hash", file)))?;
        if hash != manifest_hash {
            return Err(PpnError::ManifestMismatch {
                file,
                current: manifest_hash.to_string(),
            });
        }
        let input_dim = r.u64()? as usize;
        let target_dim = r.u64()? as usize;
        let n = r.u64()? as usize;
        let inputs = r.f64s()?;
        let targets = r.f64s()?;
        if inputs.len() != n * input_dim || targets.len() != n * target_dim {
            return Err(PpnError::WeightFormat(format!(
                "{}: row count does not match stored dimensions",
                file
            )));
        }
        Ok(IlDataset {
            input_dim,
            target_dim,
            inputs,
            targets,
            n,
        })
    }
}

/// Run inert-PPN dialogues until `turns` turns are logged; every turn yields
/// one (input, copy-target) pair per position.
pub fn collect_il_data(
    env: &Env,
    seed: u64,
    turns: usize,
) -> Result<BTreeMap<PpnPosition, IlDataset>> {
    let mut init_rng = dialogue_rng(seed, u64::MAX);
    let ppns = identity_ppn_set(&env.manifest, &mut init_rng);
    let mut sets: BTreeMap<PpnPosition, IlDataset> = PpnPosition::ALL
        .iter()
        .map(|&pos| {
            let input_dim = env.manifest.input_dim(pos);
            let target_dim = env.manifest.vocab_for(pos).len();
            (
                pos,
                IlDataset {
                    input_dim,
                    target_dim,
                    inputs: Vec::with_capacity(turns * input_dim),
                    targets: Vec::with_capacity(turns * target_dim),
                    n: 0,
                },
            )
        })
        .collect();
    let mut collected = 0usize;
    let mut stream = 0u64;
    while collected < turns {
        let mut rng = dialogue_rng(seed, stream);
        stream += 1;
        let goal = env.sample_goal(&mut rng)?;
        let result = run_session(env, &ppns, goal, false, &mut rng)?;
        for trace in &result.turns {
            if collected >= turns {
                break;
            }
            for (&pos, set) in sets.iter_mut() {
                let d = trace.decisions.get(&pos).ok_or_else(|| {
                    PpnError::Dependency(format!("no decision logged at {}", pos))
                })?;
                set.inputs.extend_from_slice(&d.input);
                set.targets
                    .extend(d.input[..set.target_dim].iter().copied());
                set.n += 1;
            }
            collected += 1;
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IlReport {
    pub position: String,
    pub train_loss: Vec<f64>,
    pub val_bit_accuracy: Vec<f64>,
    pub val_exact_match: Vec<f64>,
    pub best_epoch: usize,
    pub best_bit_accuracy: f64,
    pub best_exact_match: f64,
}

fn evaluate(params: &MlpParams, data: &IlDataset, idx: &[usize]) -> Result<(f64, f64)> {
    let mut bit_ok = 0usize;
    let mut bits_total = 0usize;
    let mut exact = 0usize;
    for chunk in idx.chunks(256) {
        let mut xs = Vec::with_capacity(chunk.len() * data.input_dim);
        for &i in chunk {
            xs.extend_from_slice(&data.inputs[i * data.input_dim..(i + 1) * data.input_dim]);
        }
        let (logits, _) = forward_batch(params, &xs, chunk.len())?;
        for (k, &i) in chunk.iter().enumerate() {
            let t = &data.targets[i * data.target_dim..(i + 1) * data.target_dim];
            let z = &logits[k * data.target_dim..(k + 1) * data.target_dim];
            let mut all = true;
            for (zj, tj) in z.iter().zip(t) {
                let b = (*zj >= 0.0) as u8 as f64;
                if b == *tj {
                    bit_ok += 1;
                } else {
                    all = false;
                }
                bits_total += 1;
            }
            exact += all as usize;
        }
    }
    Ok((
        bit_ok as f64 / bits_total.max(1) as f64,
        exact as f64 / idx.len().max(1) as f64,
    ))
}

/// Binary cross-entropy training of one PPN's policy net on the copy task;
/// the weights from the best-validation-accuracy epoch are kept.
pub fn train_il(
    ppn: &mut Ppn,
    data: &IlDataset,
    cfg: &IlConfig,
    rng: &mut ChaCha8Rng,
) -> Result<IlReport> {
    if data.input_dim != ppn.policy.input_dim() || data.target_dim != ppn.policy.output_dim() {
        return Err(PpnError::Dimension("imitation dataset shape mismatch".into()));
    }
    let n_val = ((data.n as f64) * cfg.holdout).round() as usize;
    let n_train = data.n - n_val;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..data.n).collect();

    let mut adam = AdamState::new(ppn.policy.n_params());
    let mut report = IlReport {
        position: ppn.position.to_string(),
        train_loss: Vec::new(),
        val_bit_accuracy: Vec::new(),
        val_exact_match: Vec::new(),
        best_epoch: 0,
        best_bit_accuracy: 0.0,
        best_exact_match: 0.0,
    };
    let mut best_params = ppn.policy.clone();
    let mut order = train_idx;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let mut xs = Vec::with_capacity(chunk.len() * data.input_dim);
            let mut ts = Vec::with_capacity(chunk.len() * data.target_dim);
            for &i in chunk {
                xs.extend_from_slice(&data.inputs[i * data.input_dim..(i + 1) * data.input_dim]);
                ts.extend_from_slice(&data.targets[i * data.target_dim..(i + 1) * data.target_dim]);
            }
            let (logits, cache) = forward_batch(&ppn.policy, &xs, chunk.len())?;
            loss_sum += bce_loss(&logits, &ts, chunk.len());
            batches += 1;
            let grads = backward_batch(
                &ppn.policy,
                &cache,
                &bce_grad(&logits, &ts, chunk.len()),
            )?;
            adam.step(&mut ppn.policy, &grads, cfg.lr)?;
        }
        let (bit_acc, exact) = evaluate(&ppn.policy, data, &val_idx)?;
        report.train_loss.push(loss_sum / batches.max(1) as f64);
        report.val_bit_accuracy.push(bit_acc);
        report.val_exact_match.push(exact);
        if bit_acc > report.best_bit_accuracy {
            report.best_bit_accuracy = bit_acc;
            report.best_exact_match = exact;
            report.best_epoch = epoch;
            best_params = ppn.policy.clone();
        }
    }
    ppn.policy = best_params;
    ppn.policy_adam = AdamState::new(ppn.policy.n_params());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{PpnSet, SessionConfig};
    use crate::world::WorldConfig;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn collection_yields_exact_turn_count_and_copy_targets() {
        let env = Env::build(7, WorldConfig::default(), SessionConfig::default()).unwrap();
        let sets = collect_il_data(&env, 3, 120).unwrap();
        assert_eq!(sets.len(), 3);
        for (pos, set) in &sets {
            assert_eq!(set.n, 120, "{}", pos);
            assert_eq!(set.inputs.len(), set.n * set.input_dim);
            assert_eq!(set.targets.len(), set.n * set.target_dim);
            // The copy target is the leading slice of the input.
            for i in 0..set.n {
                let x = &set.inputs[i * set.input_dim..i * set.input_dim + set.target_dim];
                let t = &set.targets[i * set.target_dim..(i + 1) * set.target_dim];
                assert_eq!(x, t);
            }
        }
    }

    #[test]
    fn small_imitation_run_learns_the_copy() {
        let env = Env::build(7, WorldConfig::default(), SessionConfig::default()).unwrap();
        let sets = collect_il_data(&env, 4, 600).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ppns = PpnSet::new_all(&env.manifest, &mut rng);
        let cfg = IlConfig {
            turns: 600,
            epochs: 6,
            ..IlConfig::default()
        };
        let pos = PpnPosition::Policy;
        let report = train_il(
            ppns.get_mut(pos).unwrap(),
            &sets[&pos],
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!(
            report.best_bit_accuracy > 0.97,
            "accuracy {}",
            report.best_bit_accuracy
        );
        assert_eq!(report.train_loss.len(), 6);
    }
}
