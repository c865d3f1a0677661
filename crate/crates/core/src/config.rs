//! Run configuration shared by the CLI and the benchmark suites, with a
//! stable fingerprint so artifacts from different configurations are never
//! mixed.

use crate::error::Result;
use crate::pipeline::NoiseConfig;
use crate::session::{Env, SessionConfig};
use crate::training::{IlConfig, PpoConfig, Strategy};
use crate::vocab::PpnPosition;
use crate::world::WorldConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub world_seed: u64,
    pub world: WorldConfig,
    pub session: SessionConfig,
    pub ppo: PpoConfig,
    pub il: IlConfig,
    pub strategy: Strategy,
    pub positions: Vec<PpnPosition>,
    pub seeds: Vec<u64>,
    pub eval_dialogues: usize,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            world_seed: 7,
            world: WorldConfig::default(),
            session: SessionConfig::default(),
            ppo: PpoConfig::default(),
            il: IlConfig::default(),
            strategy: Strategy::Random,
            positions: PpnPosition::ALL.to_vec(),
            seeds: vec![101, 102, 103, 104, 105],
            eval_dialogues: 1000,
            workers: 8,
        }
    }
}

impl RunConfig {
    /// The benchmark setting: a noisy policy (p_drop 0.3) behind a mildly
    /// noisy NLU (p_drop 0.1).
    pub fn noisy_policy_benchmark() -> Self {
        let mut cfg = RunConfig::default();
        cfg.session.policy_noise = NoiseConfig {
            p_drop: 0.3,
            p_confuse: 0.0,
        };
        cfg.session.nlu_noise = NoiseConfig {
            p_drop: 0.1,
            p_confuse: 0.0,
        };
        // Longer goals so the turn cap actually binds when acts get dropped.
        cfg.world.min_domains = 2;
        cfg.world.max_requests = 3;
        cfg.world.slot_inclusion_prob = 0.7;
        cfg.world.book_prob = 0.9;
        cfg
    }

    /// Stable digest over the canonical JSON form. Worker count and eval
    /// dialogue count are excluded: neither changes the trained artifacts
    /// (evaluation is worker-invariant by construction, and the dialogue
    /// count only sets how many eval streams are scored), so they must not
    /// split artifact directories.
    pub fn fingerprint(&self) -> String {
        let mut canon = self.clone();
        canon.workers = 0;
        canon.eval_dialogues = 0;
        let json = serde_json::to_string(&canon).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    pub fn build_env(&self) -> Result<Env> {
        Env::build(self.world_seed, self.world.clone(), self.session)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<RunConfig> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = RunConfig::default();
        c.world_seed = 8;
        assert_ne!(c.fingerprint(), a.fingerprint());
    }

    #[test]
    fn json_roundtrip() {
        let a = RunConfig::noisy_policy_benchmark();
        let b = RunConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(b.session.policy_noise.p_drop, 0.3);
    }
}
