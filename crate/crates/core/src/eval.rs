//! Corpus-free evaluation: score simulated dialogues on turn count, inform
//! precision/recall/F1 over requestable slots, per-domain entity match, and
//! overall task success.

use crate::acts::Intent;
use crate::error::Result;
use crate::session::{dialogue_rng, run_session, Env, PpnSet, SessionResult};
use crate::world::goal_satisfied;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub turns: usize,
    pub inform_precision: f64,
    pub inform_recall: f64,
    pub inform_f1: f64,
    pub match_rate: f64,
    pub success: bool,
}

/// Score one finished session against its goal.
pub fn score_session(result: &SessionResult, env: &Env) -> SessionScore {
    let outcome = &result.outcome;
    let goal = &result.goal;

    let requested = outcome.requested.len();
    let answered = outcome
        .requested
        .iter()
        .filter(|key| outcome.answered.contains_key(*key))
        .count();
    let recall = if requested == 0 {
        1.0
    } else {
        answered as f64 / requested as f64
    };

    // Precision over every system inform of a requestable slot.
    let mut informs = 0usize;
    let mut relevant = 0usize;
    for trace in &result.turns {
        for act in &trace.system_das {
            if act.intent != Intent::Inform {
                continue;
            }
            let requestable = env
                .ontology
                .domain(&act.domain)
                .map(|spec| spec.requestable.iter().any(|s| *s == act.slot))
                .unwrap_or(false);
            if !requestable {
                continue;
            }
            informs += 1;
            if outcome
                .requested
                .iter()
                .any(|(d, s)| *d == act.domain && *s == act.slot)
            {
                relevant += 1;
            }
        }
    }
    let precision = if informs == 0 {
        1.0
    } else {
        relevant as f64 / informs as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };

    // Per-domain match against the database.
    let mut constrained = 0usize;
    let mut matched = 0usize;
    for dg in &goal.domains {
        let fallback = outcome.fallback.contains(&dg.domain);
        if dg.active_constraints(fallback).is_empty() {
            continue;
        }
        constrained += 1;
        let ok = outcome
            .offered
            .get(&dg.domain)
            .and_then(|name| {
                env.database
                    .of_domain(&dg.domain)
                    .find(|e| e.name() == name)
            })
            .map(|e| goal_satisfied(e, goal, &dg.domain, fallback))
            .unwrap_or(false);
        matched += ok as usize;
    }
    let match_rate = if constrained == 0 {
        1.0
    } else {
        matched as f64 / constrained as f64
    };

    let success =
        match_rate >= 1.0 && recall >= 1.0 && outcome.turns <= env.session.max_turns;
    SessionScore {
        turns: outcome.turns,
        inform_precision: precision,
        inform_recall: recall,
        inform_f1: f1,
        match_rate,
        success,
    }
}

/// Averages over an evaluation batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub dialogues: usize,
    pub turn: f64,
    pub inform_precision: f64,
    pub inform_recall: f64,
    pub inform_f1: f64,
    pub match_rate: f64,
    pub task_success: f64,
}

impl Metrics {
    pub fn from_scores(scores: &[SessionScore]) -> Metrics {
        let n = scores.len().max(1) as f64;
        Metrics {
            dialogues: scores.len(),
            turn: scores.iter().map(|s| s.turns as f64).sum::<f64>() / n,
            inform_precision: scores.iter().map(|s| s.inform_precision).sum::<f64>() / n,
            inform_recall: scores.iter().map(|s| s.inform_recall).sum::<f64>() / n,
            inform_f1: scores.iter().map(|s| s.inform_f1).sum::<f64>() / n,
            match_rate: scores.iter().map(|s| s.match_rate).sum::<f64>() / n,
            task_success: scores.iter().map(|s| s.success as u8 as f64).sum::<f64>() / n,
        }
    }

    /// Mean of per-seed metrics.
    pub fn mean(all: &[Metrics]) -> Metrics {
        let n = all.len().max(1) as f64;
        Metrics {
            dialogues: all.iter().map(|m| m.dialogues).sum(),
            turn: all.iter().map(|m| m.turn).sum::<f64>() / n,
            inform_precision: all.iter().map(|m| m.inform_precision).sum::<f64>() / n,
            inform_recall: all.iter().map(|m| m.inform_recall).sum::<f64>() / n,
            inform_f1: all.iter().map(|m| m.inform_f1).sum::<f64>() / n,
            match_rate: all.iter().map(|m| m.match_rate).sum::<f64>() / n,
            task_success: all.iter().map(|m| m.task_success).sum::<f64>() / n,
        }
    }

    pub fn table_row(&self, label: &str) -> String {
        format!(
            "{:<24} {:>6.2} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            label,
            self.turn,
            self.inform_precision,
            self.inform_recall,
            self.inform_f1,
            self.match_rate,
            self.task_success
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<24} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "setting", "turn", "prec", "recall", "f1", "match", "success"
        )
    }

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            label,
            self.dialogues,
            self.turn,
            self.inform_precision,
            self.inform_recall,
            self.inform_f1,
            self.match_rate,
            self.task_success
        )
    }

    pub const CSV_HEADER: &'static str =
        "setting,dialogues,turn,inform_precision,inform_recall,inform_f1,match_rate,task_success";
}

/// Evaluate over `n` dialogues with greedy (thresholded) PPN decisions.
/// Dialogue `i` uses RNG stream `stream_base + i`, so results do not depend
/// on worker count.
pub fn run_eval(
    env: &Env,
    ppns: &PpnSet,
    n: usize,
    seed: u64,
    stream_base: u64,
    workers: usize,
) -> Result<Metrics> {
    let scores = parallel_scores(env, ppns, n, seed, stream_base, workers, false)?;
    Ok(Metrics::from_scores(&scores))
}

pub fn parallel_scores(
    env: &Env,
    ppns: &PpnSet,
    n: usize,
    seed: u64,
    stream_base: u64,
    workers: usize,
    sample: bool,
) -> Result<Vec<SessionScore>> {
    let workers = workers.max(1).min(n.max(1));
    let mut scores: Vec<Option<SessionScore>> = vec![None; n];
    let chunks: Vec<(usize, &mut [Option<SessionScore>])> = {
        let mut out = Vec::new();
        let mut rest = scores.as_mut_slice();
        let mut start = 0;
        let per = n.div_ceil(workers);
        while !rest.is_empty() {
            let take = per.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            out.push((start, head));
            start += take;
            rest = tail;
        }
        out
    };
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for (start, chunk) in chunks {
            handles.push(scope.spawn(move || -> Result<()> {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let i = start + k;
                    let mut rng = dialogue_rng(seed, stream_base + i as u64);
                    let goal = env.sample_goal(&mut rng)?;
                    let result = run_session(env, ppns, goal, sample, &mut rng)?;
                    *slot = Some(score_session(&result, env));
                }
                Ok(())
            }));
        }
        for h in handles {
            h.join().expect("eval worker panicked")?;
        }
        Ok(())
    })?;
    Ok(scores.into_iter().map(|s| s.unwrap()).collect())
}
