//! The reinforcement-learning loop: rollout collection, per-turn rewards,
//! PPN selection strategies, PPO updates with learning-rate annealing, and a
//! deterministic per-iteration log.

use crate::error::{PpnError, Result};
use crate::eval::score_session;
use crate::ppn::Ppn;
use crate::session::{dialogue_rng, run_session, Env, PpnSet};
use crate::training::il::{collect_il_data, train_il, IlConfig, IlReport};
use crate::training::ppo::{ppo_update, PpoConfig, Trajectory, UpdateStats};
use crate::vocab::PpnPosition;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Which PPNs receive gradient updates each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    All,
    Random,
    Rotation,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::All => "all",
            Strategy::Random => "random",
            Strategy::Rotation => "rotation",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = PpnError;
    fn from_str(s: &str) -> Result<Strategy> {
        match s {
            "all" => Ok(Strategy::All),
            "random" => Ok(Strategy::Random),
            "rotation" => Ok(Strategy::Rotation),
            other => Err(PpnError::Config(format!("unknown strategy '{}'", other))),
        }
    }
}

/// Pick the subset to update this iteration. `attached` is in module order.
pub fn select_ppns(
    strategy: Strategy,
    iteration: usize,
    attached: &[PpnPosition],
    rng: &mut ChaCha8Rng,
) -> Vec<PpnPosition> {
    match strategy {
        Strategy::All => attached.to_vec(),
        Strategy::Random => loop {
            let picked: Vec<PpnPosition> = attached
                .iter()
                .copied()
                .filter(|_| rng.gen::<f64>() < 0.5)
                .collect();
            if !picked.is_empty() {
                return picked;
            }
        },
        Strategy::Rotation => vec![attached[iteration % attached.len()]],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub strategy: Strategy,
    pub seed: u64,
    pub positions: Vec<PpnPosition>,
    /// Imitation pretraining before the RL loop; None starts from random
    /// weights.
    pub il: Option<IlConfig>,
}

impl TrainConfig {
    pub fn benchmark(strategy: Strategy, seed: u64, positions: Vec<PpnPosition>) -> Self {
        TrainConfig {
            ppo: PpoConfig::default(),
            strategy,
            seed,
            positions,
            il: Some(IlConfig::default()),
        }
    }
}

/// One collected rollout: a fixed-horizon trajectory per attached PPN plus
/// episode statistics.
#[derive(Debug)]
pub struct Rollout {
    pub per_pos: BTreeMap<PpnPosition, Trajectory>,
    pub episodes: usize,
    pub turns: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub reward_violations: usize,
}

/// Success reward granted at the final turn of a successful episode.
pub const SUCCESS_REWARD: f64 = 40.0;

/// Sample whole episodes with the current policies until at least `horizon`
/// transitions per PPN exist, then truncate to exactly `horizon`.
pub fn collect_rollout(
    env: &Env,
    ppns: &PpnSet,
    cfg: &PpoConfig,
    seed: u64,
    iteration: usize,
) -> Result<Rollout> {
    let positions = ppns.positions();
    let mut per_pos: BTreeMap<PpnPosition, Trajectory> = positions
        .iter()
        .map(|&pos| {
            (
                pos,
                Trajectory::new(
                    env.manifest.input_dim(pos),
                    env.manifest.vocab_for(pos).len(),
                ),
            )
        })
        .collect();
    let mut episodes = 0usize;
    let mut turns = 0usize;
    let mut successes = 0usize;
    let mut return_sum = 0.0;
    let mut violations = 0usize;
    let mut stream = 0u64;
    while turns < cfg.horizon {
        let mut rng = dialogue_rng(seed, (iteration as u64) << 24 | stream);
        stream += 1;
        let goal = env.sample_goal(&mut rng)?;
        let result = run_session(env, ppns, goal, true, &mut rng)?;
        let score = score_session(&result, env);
        let t_len = result.turns.len();
        let mut rewards = vec![-1.0; t_len];
        if score.success {
            *rewards.last_mut().expect("non-empty episode") += SUCCESS_REWARD;
        }
        let total: f64 = rewards.iter().sum();
        let expected = -(t_len as f64) + SUCCESS_REWARD * score.success as u8 as f64;
        if (total - expected).abs() > 1e-9 {
            violations += 1;
        }
        for (k, trace) in result.turns.iter().enumerate() {
            for &pos in &positions {
                let d = trace.decisions.get(&pos).ok_or_else(|| {
                    PpnError::Dependency(format!("missing decision at {}", pos))
                })?;
                let traj = per_pos.get_mut(&pos).unwrap();
                traj.inputs.extend_from_slice(&d.input);
                traj.actions.extend_from_slice(&d.bits);
                traj.log_probs.push(d.log_prob);
                traj.values.push(d.value);
                traj.rewards.push(rewards[k]);
                traj.dones.push(k + 1 == t_len);
                traj.n += 1;
            }
        }
        episodes += 1;
        turns += t_len;
        successes += score.success as usize;
        return_sum += total;
    }
    for traj in per_pos.values_mut() {
        traj.truncate(cfg.horizon);
    }
    Ok(Rollout {
        per_pos,
        episodes,
        turns,
        success_rate: successes as f64 / episodes.max(1) as f64,
        mean_return: return_sum / episodes.max(1) as f64,
        reward_violations: violations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterLog {
    pub iteration: usize,
    pub episodes: usize,
    pub turns: usize,
    pub success: f64,
    pub mean_return: f64,
    pub lr: f64,
    pub selected: Vec<PpnPosition>,
    pub stats: BTreeMap<PpnPosition, UpdateStats>,
}

impl IterLog {
    pub const CSV_HEADER: &'static str = "iteration,episodes,turns,success,mean_return,lr,selected,\
nlu_policy_loss,nlu_value_loss,nlu_ratio_dev,nlu_clip_frac,\
dst_policy_loss,dst_value_loss,dst_ratio_dev,dst_clip_frac,\
policy_policy_loss,policy_value_loss,policy_ratio_dev,policy_clip_frac";

    pub fn csv_row(&self) -> String {
        let selected: Vec<&str> = self.selected.iter().map(|p| p.as_str()).collect();
        let mut row = format!(
            "{},{},{},{:.6},{:.6},{:.8},{}",
            self.iteration,
            self.episodes,
            self.turns,
            self.success,
            self.mean_return,
            self.lr,
            selected.join("+")
        );
        for pos in PpnPosition::ALL {
            match self.stats.get(&pos) {
                Some(s) => row.push_str(&format!(
                    ",{:.6},{:.6},{:.3e},{:.6}",
                    s.policy_loss, s.value_loss, s.ratio_dev, s.clip_fraction
                )),
                None => row.push_str(",,,,"),
            }
        }
        row
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub il_reports: Vec<IlReport>,
    pub logs: Vec<IterLog>,
    pub best_iteration: usize,
    pub best_success: f64,
    pub reward_violations: usize,
    pub max_ratio_dev: f64,
    pub max_surrogate_dev: f64,
}

impl TrainReport {
    pub fn first_success(&self) -> f64 {
        self.logs.first().map(|l| l.success).unwrap_or(0.0)
    }

    pub fn final_success(&self) -> f64 {
        self.logs.last().map(|l| l.success).unwrap_or(0.0)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(IterLog::CSV_HEADER);
        out.push('\n');
        for log in &self.logs {
            out.push_str(&log.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Full training run. Returns the best checkpoint (by rollout success), the
/// final weights, and the per-iteration report.
pub fn run_training(
    env: &Env,
    cfg: &TrainConfig,
    progress: Option<&mut dyn FnMut(&IterLog)>,
) -> Result<(PpnSet, PpnSet, TrainReport)> {
    let mut init_rng = dialogue_rng(cfg.seed, u64::MAX - 1);
    let mut ppns = PpnSet::default();
    for &pos in &cfg.positions {
        ppns.ppns.insert(pos, Ppn::new(&env.manifest, pos, &mut init_rng));
    }

    let mut il_reports = Vec::new();
    if let Some(il_cfg) = &cfg.il {
        let data = collect_il_data(env, cfg.seed, il_cfg.turns)?;
        for &pos in &cfg.positions {
            let report = train_il(
                ppns.get_mut(pos).unwrap(),
                &data[&pos],
                il_cfg,
                &mut init_rng,
            )?;
            il_reports.push(report);
        }
    }
    run_training_from(env, cfg, ppns, il_reports, progress)
}

/// The RL loop alone, starting from the given (typically imitation-pretrained)
/// weights.
pub fn run_training_from(
    env: &Env,
    cfg: &TrainConfig,
    mut ppns: PpnSet,
    il_reports: Vec<IlReport>,
    mut progress: Option<&mut dyn FnMut(&IterLog)>,
) -> Result<(PpnSet, PpnSet, TrainReport)> {
    let mut select_rng = dialogue_rng(cfg.seed, u64::MAX - 2);
    let mut update_rng = dialogue_rng(cfg.seed, u64::MAX - 3);
    let mut logs = Vec::with_capacity(cfg.ppo.iterations);
    let mut best = ppns.clone();
    let mut best_iteration = 0usize;
    let mut best_success = -1.0f64;
    let mut violations = 0usize;
    let mut max_ratio_dev = 0.0f64;
    let mut max_surrogate_dev = 0.0f64;

    for iteration in 0..cfg.ppo.iterations {
        let rollout = collect_rollout(env, &ppns, &cfg.ppo, cfg.seed, iteration)?;
        violations += rollout.reward_violations;
        // Snapshot before updating: the rollout measured the current weights.
        if rollout.success_rate > best_success {
            best_success = rollout.success_rate;
            best_iteration = iteration;
            best = ppns.clone();
        }
        let lr = cfg.ppo.lr * (1.0 - iteration as f64 / cfg.ppo.iterations as f64);
        let selected = select_ppns(cfg.strategy, iteration, &cfg.positions, &mut select_rng);
        let mut stats = BTreeMap::new();
        for &pos in &selected {
            let s = ppo_update(
                ppns.get_mut(pos).unwrap(),
                &rollout.per_pos[&pos],
                &cfg.ppo,
                lr,
                &mut update_rng,
            )?;
            max_ratio_dev = max_ratio_dev.max(s.ratio_dev);
            max_surrogate_dev = max_surrogate_dev.max(s.surrogate_dev);
            stats.insert(pos, s);
        }
        let log = IterLog {
            iteration,
            episodes: rollout.episodes,
            turns: rollout.turns,
            success: rollout.success_rate,
            mean_return: rollout.mean_return,
            lr,
            selected,
            stats,
        };
        if let Some(cb) = progress.as_deref_mut() {
            cb(&log);
        }
        logs.push(log);
    }

    let report = TrainReport {
        config: cfg.clone(),
        il_reports,
        logs,
        best_iteration,
        best_success,
        reward_violations: violations,
        max_ratio_dev,
        max_surrogate_dev,
    };
    Ok((best, ppns, report))
}
