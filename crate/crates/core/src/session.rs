//! Drives one dialogue: user simulator -> NLU (+PPN) -> DST (+PPN) ->
//! Policy (+PPN) -> NLG -> back to the simulator, with the shared state
//! tracker enforcing the freshness rules for s_All.

use crate::acts::{DialogueAct, Intent};
use crate::adapters::{in_adapter, out_adapter, AdapterConfig, StateTracker};
use crate::error::Result;
use crate::pipeline::{
    dst_update, nlg_realize, nlu_process, policy_decide, refresh_db_counts, NoiseConfig, Payload,
};
use crate::ppn::{Ppn, PpnDecision};
use crate::sim::{SessionOutcome, UserSimulator};
use crate::state::DialogueStateRecord;
use crate::templates::render_user_turn;
use crate::vocab::{Manifest, MultiBinaryVector, PpnPosition};
use crate::world::{build_world, generate_goal, Database, Ontology, UserGoal, WorldConfig};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Turn cap after which a dialogue counts as failed.
pub const MAX_TURNS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub nlu_noise: NoiseConfig,
    pub policy_noise: NoiseConfig,
    pub adapter: AdapterConfig,
    pub max_turns: usize,
    /// When false, every PPN sees only its own module's state slice
    /// (zero-padded to full length).
    pub use_s_all: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            nlu_noise: NoiseConfig::default(),
            policy_noise: NoiseConfig::default(),
            adapter: AdapterConfig::default(),
            max_turns: MAX_TURNS,
            use_s_all: true,
        }
    }
}

/// Immutable world shared by every session of a run.
#[derive(Debug, Clone)]
pub struct Env {
    pub ontology: Ontology,
    pub database: Database,
    pub manifest: Manifest,
    pub world_config: WorldConfig,
    pub session: SessionConfig,
}

impl Env {
    pub fn build(world_seed: u64, world_config: WorldConfig, session: SessionConfig) -> Result<Env> {
        let (ontology, database) = build_world(world_seed, &world_config)?;
        let manifest = Manifest::build(&ontology);
        Ok(Env {
            ontology,
            database,
            manifest,
            world_config,
            session,
        })
    }

    pub fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Result<UserGoal> {
        generate_goal(rng, &self.ontology, &self.database, &self.world_config)
    }
}

/// The PPNs attached to a run, keyed by position. Positions without an entry
/// pass module output through untouched.
#[derive(Debug, Clone, Default)]
pub struct PpnSet {
    pub ppns: BTreeMap<PpnPosition, Ppn>,
}

impl PpnSet {
    pub fn new_all(manifest: &Manifest, rng: &mut ChaCha8Rng) -> Self {
        let mut set = PpnSet::default();
        for pos in PpnPosition::ALL {
            set.ppns.insert(pos, Ppn::new(manifest, pos, rng));
        }
        set
    }

    pub fn get(&self, pos: PpnPosition) -> Option<&Ppn> {
        self.ppns.get(&pos)
    }

    pub fn get_mut(&mut self, pos: PpnPosition) -> Option<&mut Ppn> {
        self.ppns.get_mut(&pos)
    }

    pub fn positions(&self) -> Vec<PpnPosition> {
        self.ppns.keys().copied().collect()
    }

    pub fn save_all(&self, dir: &Path, manifest_hash: &str) -> Result<()> {
        for (pos, ppn) in &self.ppns {
            ppn.save(&dir.join(format!("ppn-{}.bin", pos)), manifest_hash)?;
        }
        Ok(())
    }

    pub fn load_all(dir: &Path, manifest: &Manifest, positions: &[PpnPosition]) -> Result<PpnSet> {
        let mut set = PpnSet::default();
        for &pos in positions {
            let ppn = Ppn::load(&dir.join(format!("ppn-{}.bin", pos)), manifest, pos)?;
            set.ppns.insert(pos, ppn);
        }
        Ok(set)
    }
}

/// Everything one system turn produced, for trajectories and transcripts.
#[derive(Debug, Clone)]
pub struct TurnTrace {
    pub turn: usize,
    pub user_utterance: String,
    pub user_das_true: Vec<DialogueAct>,
    /// NLU output after noise, before any PPN.
    pub nlu_das_pre: Vec<DialogueAct>,
    pub nlu_das: Vec<DialogueAct>,
    /// Policy output after noise, before any PPN.
    pub system_das_pre: Vec<DialogueAct>,
    pub system_das: Vec<DialogueAct>,
    pub system_utterance: String,
    pub belief_size: usize,
    /// PPN decisions taken this turn (sampling mode records log-probs and
    /// value estimates for the trainers).
    pub decisions: BTreeMap<PpnPosition, PpnDecision>,
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub goal: UserGoal,
    pub outcome: SessionOutcome,
    pub turns: Vec<TurnTrace>,
    /// Value bootstraps per position for a horizon cut inside the episode.
    pub final_inputs: BTreeMap<PpnPosition, Vec<f64>>,
}

/// Interactive session state; `system_turn` consumes one user utterance.
pub struct Session<'a> {
    env: &'a Env,
    ppns: &'a PpnSet,
    sample: bool,
    pub record: DialogueStateRecord,
    tracker: StateTracker,
    turn: usize,
}

impl<'a> Session<'a> {
    pub fn new(env: &'a Env, ppns: &'a PpnSet, sample: bool) -> Self {
        Session {
            env,
            ppns,
            sample,
            record: DialogueStateRecord::new(&env.ontology),
            tracker: StateTracker::new(&env.manifest),
            turn: 0,
        }
    }

    fn apply_ppn(
        &self,
        pos: PpnPosition,
        payload: &Payload,
        utterance: Option<&str>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<(Payload, PpnDecision)>> {
        let Some(ppn) = self.ppns.get(pos) else {
            return Ok(None);
        };
        let manifest = &self.env.manifest;
        let vocab = manifest.vocab_for(pos);
        let v = in_adapter(payload, vocab)?;
        let concat = self.tracker.concat(pos, self.turn)?;
        let s_all = if self.env.session.use_s_all {
            concat.data.clone()
        } else {
            StateTracker::mask_to_own(&concat, pos)
        };
        let decision = if self.sample {
            ppn.decide_sample(&v.to_f64(), &s_all, rng)?
        } else {
            let bits = ppn.decide_greedy(&v.to_f64(), &s_all)?;
            let mut input = v.to_f64();
            input.extend_from_slice(&s_all);
            PpnDecision {
                input,
                bits,
                log_prob: 0.0,
                value: 0.0,
            }
        };
        let v_prime = MultiBinaryVector::from_bits(decision.bits.clone());
        let out = out_adapter(
            &v_prime,
            payload,
            utterance,
            &self.record,
            vocab,
            &self.env.ontology,
            &self.env.database,
            &self.env.session.adapter,
        )?;
        Ok(Some((out, decision)))
    }

    /// Run NLU -> DST -> Policy -> NLG for one user utterance.
    pub fn system_turn(&mut self, utterance: &str, rng: &mut ChaCha8Rng) -> Result<TurnTrace> {
        let env = self.env;
        let manifest = &env.manifest;
        let t = self.turn;
        let user_das_true = crate::templates::parse_user_utterance(utterance, &env.ontology);

        let nlu_out = nlu_process(utterance, &env.session.nlu_noise, rng, &env.ontology, manifest);
        let nlu_das_pre = nlu_out.payload.das().to_vec();
        self.tracker.record(0, t, nlu_out.state_vec.clone())?;
        let mut decisions = BTreeMap::new();
        let nlu_payload = match self.apply_ppn(PpnPosition::Nlu, &nlu_out.payload, Some(utterance), rng)? {
            Some((p, d)) => {
                decisions.insert(PpnPosition::Nlu, d);
                p
            }
            None => nlu_out.payload,
        };
        let nlu_das = nlu_payload.das().to_vec();

        let dst_out = dst_update(
            &mut self.record,
            &nlu_das,
            &env.ontology,
            &env.database,
            manifest,
            env.world_config.entities_per_domain,
        );
        self.tracker.record(1, t, dst_out.state_vec.clone())?;
        if let Some((p, d)) = self.apply_ppn(PpnPosition::Dst, &dst_out.payload, Some(utterance), rng)? {
            decisions.insert(PpnPosition::Dst, d);
            if let Payload::Belief(b) = p {
                if b != self.record.belief {
                    self.record.belief = b;
                    refresh_db_counts(&mut self.record, &env.ontology, &env.database);
                }
            }
        }

        let pol_out = policy_decide(
            &self.record,
            &env.session.policy_noise,
            rng,
            &env.ontology,
            &env.database,
            manifest,
        );
        let system_das_pre = pol_out.payload.das().to_vec();
        self.tracker.record(2, t, pol_out.state_vec.clone())?;
        let pol_payload = match self.apply_ppn(PpnPosition::Policy, &pol_out.payload, Some(utterance), rng)? {
            Some((p, d)) => {
                decisions.insert(PpnPosition::Policy, d);
                p
            }
            None => pol_out.payload,
        };
        let system_das = pol_payload.das().to_vec();

        let nlg_out = nlg_realize(&system_das);
        self.tracker.record(3, t, nlg_out.state_vec)?;
        let system_utterance = match nlg_out.payload {
            Payload::Utterance(u) => u,
            _ => unreachable!(),
        };

        self.record.observe_system(&system_das);
        self.turn += 1;
        Ok(TurnTrace {
            turn: t,
            user_utterance: utterance.to_string(),
            user_das_true,
            nlu_das_pre,
            nlu_das,
            system_das_pre,
            system_das,
            system_utterance,
            belief_size: self.record.belief.len(),
            decisions,
        })
    }

    /// Current PPN inputs against a hypothetical next turn, used to bootstrap
    /// values when the rollout horizon cuts an episode.
    fn bootstrap_inputs(&self) -> BTreeMap<PpnPosition, Vec<f64>> {
        let mut out = BTreeMap::new();
        for pos in self.ppns.positions() {
            let vocab_len = self.env.manifest.vocab_for(pos).len();
            let concat = self.tracker.latest_concat();
            let s_all = if self.env.session.use_s_all {
                concat.data
            } else {
                StateTracker::mask_to_own(&concat, pos)
            };
            let mut input = vec![0.0; vocab_len];
            input.extend_from_slice(&s_all);
            out.insert(pos, input);
        }
        out
    }
}

/// Run one full simulated dialogue.
pub fn run_session(
    env: &Env,
    ppns: &PpnSet,
    goal: UserGoal,
    sample: bool,
    rng: &mut ChaCha8Rng,
) -> Result<SessionResult> {
    let mut sim = UserSimulator::new(goal.clone());
    let mut session = Session::new(env, ppns, sample);
    let mut turns = Vec::new();
    let mut last_system: Vec<DialogueAct> = Vec::new();
    for _ in 0..env.session.max_turns {
        let user_das = sim.respond(&last_system);
        let utterance = render_user_turn(&user_das);
        let trace = session.system_turn(&utterance, rng)?;
        last_system = trace.system_das.clone();
        let done = user_das.iter().any(|a| a.intent == Intent::Bye);
        turns.push(trace);
        if done {
            break;
        }
    }
    let final_inputs = session.bootstrap_inputs();
    Ok(SessionResult {
        goal,
        outcome: sim.outcome(),
        turns,
        final_inputs,
    })
}

/// A full PPN set whose greedy policies copy their input vector through
/// unchanged; the pipeline behaves as if no PPNs were attached while still
/// producing adapter inputs for data collection.
pub fn identity_ppn_set(manifest: &Manifest, rng: &mut ChaCha8Rng) -> PpnSet {
    let mut set = PpnSet::default();
    for pos in PpnPosition::ALL {
        let mut ppn = Ppn::new(manifest, pos, rng);
        let v_dim = manifest.vocab_for(pos).len();
        let input = manifest.input_dim(pos);
        ppn.policy = crate::nn::identity_copy_params(v_dim, input, crate::nn::HIDDEN_DIM);
        set.ppns.insert(pos, ppn);
    }
    set
}

/// Deterministic per-dialogue RNG stream: every dialogue is reproducible from
/// (run seed, stream id) regardless of worker scheduling.
pub fn dialogue_rng(run_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(stream);
    rng
}
