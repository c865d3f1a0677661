//! One post-processing network: a policy MLP and a value MLP attached to a
//! pipeline position, together with binary weight persistence. Weight files
//! embed the run manifest hash and refuse to load against a different
//! dimension table.

use crate::error::{PpnError, Result};
use crate::nn::{forward, AdamState, BernoulliPolicy, MlpParams};
use crate::vocab::{Manifest, PpnPosition};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PPNW";
const VERSION: u32 = 1;

/// Output of one PPN decision, kept for trajectory collection.
#[derive(Debug, Clone)]
pub struct PpnDecision {
    pub input: Vec<f64>,
    pub bits: Vec<u8>,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Ppn {
    pub position: PpnPosition,
    pub policy: MlpParams,
    pub value: MlpParams,
    pub policy_adam: AdamState,
    pub value_adam: AdamState,
}

impl Ppn {
    pub fn new(manifest: &Manifest, position: PpnPosition, rng: &mut ChaCha8Rng) -> Self {
        let input = manifest.input_dim(position);
        let output = manifest.vocab_for(position).len();
        let policy = MlpParams::random(input, output, rng);
        let value = MlpParams::random(input, 1, rng);
        let policy_adam = AdamState::new(policy.n_params());
        let value_adam = AdamState::new(value.n_params());
        Ppn {
            position,
            policy,
            value,
            policy_adam,
            value_adam,
        }
    }

    /// Concatenate the module's vector with the shared state.
    pub fn input(&self, v: &[f64], s_all: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(v.len() + s_all.len());
        x.extend_from_slice(v);
        x.extend_from_slice(s_all);
        x
    }

    /// Stochastic decision (training rollouts).
    pub fn decide_sample(&self, v: &[f64], s_all: &[f64], rng: &mut ChaCha8Rng) -> Result<PpnDecision> {
        let x = self.input(v, s_all);
        let (logits, _) = forward(&self.policy, &x)?;
        let (bits, log_prob) = BernoulliPolicy::new(logits).sample(rng);
        let (val, _) = forward(&self.value, &x)?;
        Ok(PpnDecision {
            input: x,
            bits,
            log_prob,
            value: val[0],
        })
    }

    /// Deterministic decision (evaluation): threshold each probability at 0.5.
    pub fn decide_greedy(&self, v: &[f64], s_all: &[f64]) -> Result<Vec<u8>> {
        let x = self.input(v, s_all);
        let (logits, _) = forward(&self.policy, &x)?;
        Ok(BernoulliPolicy::new(logits).greedy())
    }

    /// State value estimate alone (GAE bootstrap at horizon cuts).
    pub fn state_value(&self, v: &[f64], s_all: &[f64]) -> Result<f64> {
        let x = self.input(v, s_all);
        let (val, _) = forward(&self.value, &x)?;
        Ok(val[0])
    }

    pub fn save(&self, path: &Path, manifest_hash: &str) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(self.position.module_index() as u8);
        let hash = manifest_hash.as_bytes();
        buf.extend_from_slice(&(hash.len() as u32).to_le_bytes());
        buf.extend_from_slice(hash);
        write_net(&mut buf, &self.policy, &self.policy_adam);
        write_net(&mut buf, &self.value, &self.value_adam);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path, manifest: &Manifest, position: PpnPosition) -> Result<Ppn> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        let file = path.display().to_string();
        if r.take(4)? != &MAGIC[..] {
            return Err(PpnError::WeightFormat(format!("{}: bad magic", file)));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(PpnError::WeightFormat(format!(
                "{}: unsupported version {}",
                file, version
            )));
        }
        let pos_idx = r.u8()?;
        if pos_idx as usize != position.module_index() {
            return Err(PpnError::WeightFormat(format!(
                "{}: saved for position index {}, expected {}",
                file,
                pos_idx,
                position.module_index()
            )));
        }
        let hash_len = r.u32()? as usize;
        let hash = String::from_utf8(r.take(hash_len)?.to_vec())
            .map_err(|_| PpnError::WeightFormat(format!("{}: non-utf8 hash", file)))?;
        if hash != manifest.hash {
            return Err(PpnError::ManifestMismatch {
                file,
                current: manifest.hash.clone(),
            });
        }
        let (policy, policy_adam) = read_net(&mut r, &file)?;
        let (value, value_adam) = read_net(&mut r, &file)?;
        let expected_in = manifest.input_dim(position);
        let expected_out = manifest.vocab_for(position).len();
        if policy.input_dim() != expected_in
            || policy.output_dim() != expected_out
            || value.input_dim() != expected_in
            || value.output_dim() != 1
        {
            return Err(PpnError::WeightFormat(format!(
                "{}: stored dimensions do not match the manifest",
                file
            )));
        }
        if !policy.finite() || !value.finite() {
            return Err(PpnError::NonFinite(format!("loaded weights in {}", file)));
        }
        Ok(Ppn {
            position,
            policy,
            value,
            policy_adam,
            value_adam,
        })
    }
}

fn write_net(buf: &mut Vec<u8>, params: &MlpParams, adam: &AdamState) {
    for d in params.dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    write_f64s(buf, &params.data);
    buf.extend_from_slice(&adam.step.to_le_bytes());
    write_f64s(buf, &adam.m);
    write_f64s(buf, &adam.v);
}

pub(crate) fn write_f64s(buf: &mut Vec<u8>, xs: &[f64]) {
    buf.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    pub(crate) bytes: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(PpnError::WeightFormat("truncated weight file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn read_net(r: &mut Reader<'_>, file: &str) -> Result<(MlpParams, AdamState)> {
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.u64()? as usize;
    }
    let data = r.f64s()?;
    let mut params = MlpParams::zeros_with_hidden(dims[0], dims[1], dims[3]);
    params.dims = dims;
    if data.len() != params.data.len() {
        return Err(PpnError::WeightFormat(format!(
            "{}: parameter count {} does not match dims {:?}",
            file,
            data.len(),
            dims
        )));
    }
    params.data = data;
    let step = r.u64()?;
    let m = r.f64s()?;
    let v = r.f64s()?;
    if m.len() != params.data.len() || v.len() != params.data.len() {
        return Err(PpnError::WeightFormat(format!(
            "{}: optimizer state size mismatch",
            file
        )));
    }
    let mut adam = AdamState::new(params.data.len());
    adam.step = step;
    adam.m = m;
    adam.v = v;
    Ok((params, adam))
}
