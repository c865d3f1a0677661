//! The release gate: every shipping criterion checked in one ordered run.
//! Prints one PASS/FAIL line per criterion and fails at the end if any
//! criterion failed, so a single log shows the whole picture.
//!
//! The run trains real models (5 seeds x 200 iterations for the benchmark,
//! plus the ablation matrix), so it takes a couple of hours on one core.

use ppn_core::adapters::{in_adapter, out_adapter, AdapterConfig};
use ppn_core::config::RunConfig;
use ppn_core::eval::{run_eval, Metrics};
use ppn_core::nn::{
    backward_batch, bce_grad, bce_loss, forward_batch, ppo_clip_grad, ppo_clip_loss,
    value_mse_grad, value_mse_loss, BernoulliPolicy, MlpParams,
};
use ppn_core::pipeline::Payload;
use ppn_core::session::{dialogue_rng, run_session, Env, PpnSet};
use ppn_core::state::DialogueStateRecord;
use ppn_core::training::{gae, run_training, Strategy, TrainConfig, TrainReport};
use ppn_core::vocab::PpnPosition;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;

const EVAL_DIALOGUES: usize = 1000;
const EVAL_STREAM_BASE: u64 = 1 << 40;

struct Gate {
    results: Vec<(String, bool, String)>,
}

/// Write through the raw stdout fd so the per-criterion lines survive
/// libtest's output capture and show up in a plain `cargo test` log.
fn gate_print(line: &str) {
    use std::io::Write;
    use std::os::unix::io::FromRawFd;
    let mut f = unsafe { std::fs::File::from_raw_fd(1) };
    let _ = writeln!(f, "{}", line);
    std::mem::forget(f); // fd 1 is not ours to close
}

impl Gate {
    fn new() -> Self {
        Gate { results: Vec::new() }
    }

    fn record(&mut self, name: &str, pass: bool, detail: String) {
        gate_print(&format!(
            "criterion {:<28} {}  ({})",
            name,
            if pass { "PASS" } else { "FAIL" },
            detail
        ));
        self.results.push((name.to_string(), pass, detail));
    }

    fn finish(self) {
        let failed: Vec<&(String, bool, String)> =
            self.results.iter().filter(|(_, p, _)| !p).collect();
        gate_print(&format!(
            "--- acceptance summary: {}/{} passed",
            self.results.len() - failed.len(),
            self.results.len()
        ));
        assert!(
            failed.is_empty(),
            "failed criteria: {}",
            failed
                .iter()
                .map(|(n, _, d)| format!("{} ({})", n, d))
                .collect::<Vec<_>>()
                .join("; ")
        );
    }
}

// ---------------------------------------------------------------- criterion 1

fn criterion_1_adapter_roundtrip(gate: &mut Gate, noisy: &Env, clean: &Env) {
    let start = Instant::now();
    let mut outputs = 0usize;
    let mut mismatches = 0usize;
    let key = |a: &ppn_core::acts::DialogueAct| {
        (a.intent.to_string(), a.domain.clone(), a.slot.clone(), a.value.clone())
    };
    for (env, seed) in [(noisy, 24000u64), (clean, 25000u64)] {
        for i in 0..60u64 {
            let mut rng = dialogue_rng(seed, i);
            let goal = env.sample_goal(&mut rng).unwrap();
            let result = run_session(env, &PpnSet::default(), goal, false, &mut rng).unwrap();
            for t in &result.turns {
                for (pos, das) in [
                    (PpnPosition::Nlu, &t.nlu_das),
                    (PpnPosition::Policy, &t.system_das),
                ] {
                    let vocab = env.manifest.vocab_for(pos);
                    let payload = Payload::Das(das.clone());
                    let v = in_adapter(&payload, vocab).unwrap();
                    let record = DialogueStateRecord::new(&env.ontology);
                    let out = out_adapter(
                        &v,
                        &payload,
                        None,
                        &record,
                        vocab,
                        &env.ontology,
                        &env.database,
                        &AdapterConfig::default(),
                    )
                    .unwrap();
                    outputs += 1;
                    let a: std::collections::BTreeSet<_> = out.das().iter().map(key).collect();
                    let b: std::collections::BTreeSet<_> = das.iter().map(key).collect();
                    if a != b {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    // Belief payloads round-trip through the DST vocabulary.
    let env = noisy;
    let vocab = env.manifest.vocab_for(PpnPosition::Dst);
    let mut rng = dialogue_rng(26000, 0);
    for _ in 0..400 {
        let mut belief: BTreeMap<(String, String), String> = BTreeMap::new();
        for spec in &env.ontology.domains {
            for (slot, values) in spec.informable.iter().chain(spec.bookable.iter()) {
                if rng.gen::<f64>() < 0.3 {
                    let value = values.choose(&mut rng).cloned().unwrap_or_default();
                    belief.insert((spec.name.clone(), slot.clone()), value);
                }
            }
        }
        let payload = Payload::Belief(belief.clone());
        let v = in_adapter(&payload, vocab).unwrap();
        let record = DialogueStateRecord::new(&env.ontology);
        let out = out_adapter(
            &v,
            &payload,
            None,
            &record,
            vocab,
            &env.ontology,
            &env.database,
            &AdapterConfig::default(),
        )
        .unwrap();
        outputs += 1;
        match out {
            Payload::Belief(b) if b == belief => {}
            _ => mismatches += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    gate.record(
        "1-adapter-roundtrip",
        outputs >= 1000 && mismatches == 0 && secs < 10.0,
        format!("{} outputs, {} mismatches, {:.1}s", outputs, mismatches, secs),
    );
}

// ---------------------------------------------------------------- criterion 2

fn numeric_grad(p: &MlpParams, loss: impl Fn(&MlpParams) -> f64, h: f64) -> Vec<f64> {
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

/// Smallest |pre-activation| across both hidden layers. Central differences
/// are only valid where the network is differentiable, so test points with a
/// pre-activation within the FD window of a ReLU kink are resampled.
fn min_abs_preact(p: &MlpParams, x: &[f64], rows: usize) -> f64 {
    let [d0, d1, d2, _] = p.dims;
    let mut min = f64::INFINITY;
    let mut h1 = vec![0.0; rows * d1];
    for i in 0..rows {
        for o in 0..d1 {
            let mut acc = p.tensor(1)[o];
            for k in 0..d0 {
                acc += p.tensor(0)[o * d0 + k] * x[i * d0 + k];
            }
            min = min.min(acc.abs());
            h1[i * d1 + o] = acc.max(0.0);
        }
    }
    for i in 0..rows {
        for o in 0..d2 {
            let mut acc = p.tensor(3)[o];
            for k in 0..d1 {
                acc += p.tensor(2)[o * d1 + k] * h1[i * d1 + k];
            }
            min = min.min(acc.abs());
        }
    }
    min
}

/// Random (params, inputs) pair kept away from ReLU kinks.
fn smooth_point(
    d_in: usize,
    d_hid: usize,
    d_out: usize,
    rows: usize,
    rng: &mut ChaCha8Rng,
) -> (MlpParams, Vec<f64>) {
    loop {
        let p = MlpParams::random_with_hidden(d_in, d_hid, d_out, rng);
        let x: Vec<f64> = (0..rows * d_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if min_abs_preact(&p, &x, rows) > 1e-3 {
            return (p, x);
        }
    }
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

fn criterion_2_gradient_oracle(gate: &mut Gate) {
    let start = Instant::now();
    let h = 1e-5;
    let (d_in, d_hid, d_out, rows) = (9, 7, 4, 3);
    let mut rng = dialogue_rng(27000, 0);
    let mut worst = [0.0f64; 3];
    for point in 0..100 {
        let _ = point;
        // BCE through a random network.
        let (p, x) = smooth_point(d_in, d_hid, d_out, rows, &mut rng);
        let t: Vec<f64> = (0..rows * d_out)
            .map(|_| (rng.gen::<f64>() < 0.5) as u8 as f64)
            .collect();
        let (logits, cache) = forward_batch(&p, &x, rows).unwrap();
        let analytic = backward_batch(&p, &cache, &bce_grad(&logits, &t, rows)).unwrap();
        let numeric = numeric_grad(
            &p,
            |q| {
                let (l, _) = forward_batch(q, &x, rows).unwrap();
                bce_loss(&l, &t, rows)
            },
            h,
        );
        worst[0] = worst[0].max(rel_err(&analytic, &numeric));

        // PPO clipped surrogate: old log-probs from the same policy, so the
        // point sits strictly inside the clip interval (no kink).
        let (p, x) = smooth_point(d_in, d_hid, d_out, rows, &mut rng);
        let acts: Vec<u8> = (0..rows * d_out).map(|_| rng.gen::<bool>() as u8).collect();
        let adv: Vec<f64> = (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (logits, cache) = forward_batch(&p, &x, rows).unwrap();
        let old_lp: Vec<f64> = (0..rows)
            .map(|r| {
                BernoulliPolicy::new(logits[r * d_out..(r + 1) * d_out].to_vec())
                    .log_prob(&acts[r * d_out..(r + 1) * d_out])
            })
            .collect();
        let analytic = backward_batch(
            &p,
            &cache,
            &ppo_clip_grad(&logits, &acts, &old_lp, &adv, 0.2, rows),
        )
        .unwrap();
        let numeric = numeric_grad(
            &p,
            |q| {
                let (l, _) = forward_batch(q, &x, rows).unwrap();
                ppo_clip_loss(&l, &acts, &old_lp, &adv, 0.2, rows)
            },
            h,
        );
        worst[1] = worst[1].max(rel_err(&analytic, &numeric));

        // Value MSE through a scalar-output network.
        let (p, x) = smooth_point(d_in, d_hid, 1, rows, &mut rng);
        let targets: Vec<f64> = (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (values, cache) = forward_batch(&p, &x, rows).unwrap();
        let analytic = backward_batch(&p, &cache, &value_mse_grad(&values, &targets, 0.5)).unwrap();
        let numeric = numeric_grad(
            &p,
            |q| {
                let (v, _) = forward_batch(q, &x, rows).unwrap();
                value_mse_loss(&v, &targets, 0.5)
            },
            h,
        );
        worst[2] = worst[2].max(rel_err(&analytic, &numeric));
    }
    let secs = start.elapsed().as_secs_f64();
    gate.record(
        "2-gradient-oracle",
        worst.iter().all(|w| *w < 1e-4) && secs < 60.0,
        format!(
            "max rel err bce {:.2e} ppo {:.2e} mse {:.2e}, {:.1}s",
            worst[0], worst[1], worst[2], secs
        ),
    );
}

// ---------------------------------------------------------------- criterion 3

fn gae_double_sum(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if dones[t] {
                0.0
            } else if t + 1 == n {
                bootstrap
            } else {
                values[t + 1]
            };
            rewards[t] + gamma * next - values[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut a = 0.0;
            let mut w = 1.0;
            for l in t..n {
                a += w * delta[l];
                if dones[l] {
                    break;
                }
                w *= gamma * lambda;
            }
            a
        })
        .collect()
}

fn criterion_3_gae_oracle(gate: &mut Gate) {
    let mut rng = dialogue_rng(28000, 0);
    let params = [0.0, 0.5, 0.95, 1.0];
    let mut max_diff = 0.0f64;
    for &gamma in &params {
        for &lambda in &params {
            for _ in 0..200 {
                let n = rng.gen_range(1..=64);
                let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let dones: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < 0.2).collect();
                let bootstrap = rng.gen_range(-2.0..2.0);
                let (adv, _) = gae(&rewards, &values, &dones, bootstrap, gamma, lambda);
                let oracle = gae_double_sum(&rewards, &values, &dones, bootstrap, gamma, lambda);
                for t in 0..n {
                    max_diff = max_diff.max((adv[t] - oracle[t]).abs());
                }
            }
        }
    }
    gate.record(
        "3-gae-oracle",
        max_diff < 1e-10,
        format!("max abs diff {:.2e} over 3200 trajectories", max_diff),
    );
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5_imitation_copy(gate: &mut Gate, env: &Env) {
    let start = Instant::now();
    let il_cfg = ppn_core::training::IlConfig::default();
    assert_eq!(
        (il_cfg.turns, il_cfg.epochs, il_cfg.batch, il_cfg.holdout),
        (10_000, 20, 32, 0.2)
    );
    assert_eq!(il_cfg.lr, 1e-3);
    let data = ppn_core::training::collect_il_data(env, 29000, il_cfg.turns).unwrap();
    let mut rng = dialogue_rng(29000, u64::MAX - 1);
    let mut ppns = PpnSet::new_all(&env.manifest, &mut rng);
    let mut pass = true;
    let mut details = Vec::new();
    for pos in PpnPosition::ALL {
        let report =
            ppn_core::training::train_il(ppns.get_mut(pos).unwrap(), &data[&pos], &il_cfg, &mut rng)
                .unwrap();
        pass &= report.best_bit_accuracy >= 0.995 && report.best_exact_match >= 0.95;
        details.push(format!(
            "{} bit {:.4} exact {:.4}",
            pos, report.best_bit_accuracy, report.best_exact_match
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    gate.record(
        "5-imitation-copy",
        pass,
        format!("{}, {:.0}s", details.join(", "), secs),
    );
}

// ------------------------------------------------- criteria 6/7/8/9/10 runs

struct BenchmarkRun {
    report: TrainReport,
    best: PpnSet,
}

fn train_cell(
    env: &Env,
    strategy: Strategy,
    seed: u64,
    positions: Vec<PpnPosition>,
) -> (BenchmarkRun, f64) {
    let cfg = TrainConfig::benchmark(strategy, seed, positions);
    let t = Instant::now();
    let (best, _final_ppns, report) = run_training(env, &cfg, None).unwrap();
    (BenchmarkRun { report, best }, t.elapsed().as_secs_f64())
}

fn eval_best(env: &Env, run: &BenchmarkRun, seed: u64) -> Metrics {
    run_eval(env, &run.best, EVAL_DIALOGUES, seed, EVAL_STREAM_BASE, 1).unwrap()
}

#[test]
fn acceptance_criteria() {
    let mut gate = Gate::new();
    let bench_cfg = RunConfig::noisy_policy_benchmark();
    let noisy = bench_cfg.build_env().unwrap();
    let clean = RunConfig::default().build_env().unwrap();
    let seeds = bench_cfg.seeds.clone();
    assert_eq!(seeds.len(), 5);

    criterion_1_adapter_roundtrip(&mut gate, &noisy, &clean);
    criterion_2_gradient_oracle(&mut gate);
    criterion_3_gae_oracle(&mut gate);
    // Criterion 4 is checked over the criterion-6 training runs below.
    criterion_5_imitation_copy(&mut gate, &noisy);

    // Criterion 6: PPN_All, RANDOM, 200 iterations, 5 seeds.
    let c6_start = Instant::now();
    let mut random_runs = Vec::new();
    let mut baseline_scores = Vec::new();
    let mut ppn_scores = Vec::new();
    for &seed in &seeds {
        let base = run_eval(
            &noisy,
            &PpnSet::default(),
            EVAL_DIALOGUES,
            seed,
            EVAL_STREAM_BASE,
            1,
        )
        .unwrap();
        let (run, _) = train_cell(&noisy, Strategy::Random, seed, PpnPosition::ALL.to_vec());
        let m = eval_best(&noisy, &run, seed);
        baseline_scores.push(base.task_success);
        ppn_scores.push(m.task_success);
        random_runs.push(run);
    }
    let c6_secs = c6_start.elapsed().as_secs_f64();
    let base_mean = baseline_scores.iter().sum::<f64>() / 5.0;
    let ppn_mean = ppn_scores.iter().sum::<f64>() / 5.0;
    gate.record(
        "6-central-claim",
        ppn_mean - base_mean >= 0.15 && c6_secs < 45.0 * 60.0,
        format!(
            "baseline {:.3} ppn_all {:.3} delta {:+.3} (need +0.150), {:.0}s",
            base_mean,
            ppn_mean,
            ppn_mean - base_mean,
            c6_secs
        ),
    );

    // Criterion 7: reward identity held for every episode of those runs.
    let violations: usize = random_runs.iter().map(|r| r.report.reward_violations).sum();
    gate.record(
        "7-reward-bookkeeping",
        violations == 0,
        format!("{} violations across 5 runs", violations),
    );

    // Criterion 4: ratio identity at the first minibatch of every update.
    let max_ratio = random_runs
        .iter()
        .map(|r| r.report.max_ratio_dev)
        .fold(0.0f64, f64::max);
    let max_surr = random_runs
        .iter()
        .map(|r| r.report.max_surrogate_dev)
        .fold(0.0f64, f64::max);
    gate.record(
        "4-ppo-ratio-identity",
        max_ratio < 1e-8 && max_surr < 1e-8,
        format!("max |rho-1| {:.2e}, max surrogate dev {:.2e}", max_ratio, max_surr),
    );

    // Criterion 8: ALL and ROTATION complete with comparable logs; RANDOM
    // improves its own rollout success by >= 10 points (5-seed mean).
    let (all_run, _) = train_cell(&noisy, Strategy::All, seeds[0], PpnPosition::ALL.to_vec());
    let (rot_run, _) = train_cell(&noisy, Strategy::Rotation, seeds[0], PpnPosition::ALL.to_vec());
    let logs_ok = all_run.report.logs.len() == 200
        && rot_run.report.logs.len() == 200
        && random_runs.iter().all(|r| r.report.logs.len() == 200);
    let gain = random_runs
        .iter()
        .map(|r| r.report.final_success() - r.report.first_success())
        .sum::<f64>()
        / 5.0;
    gate.record(
        "8-strategy-harness",
        logs_ok && gain >= 0.10,
        format!(
            "random gain {:+.3} (need +0.100); final rollout success: random(seed {}) {:.3} all {:.3} rotation {:.3}",
            gain,
            seeds[0],
            random_runs[0].report.final_success(),
            all_run.report.final_success(),
            rot_run.report.final_success()
        ),
    );

    // Criterion 9: 9-row ablation matrix. The PPN_All + s_All row reuses the
    // criterion-6 runs; every other trained cell gets its own 5-seed runs.
    let mut no_s_all_cfg = bench_cfg.clone();
    no_s_all_cfg.session.use_s_all = false;
    let noisy_no_s = no_s_all_cfg.build_env().unwrap();
    let cells: [(&str, Vec<PpnPosition>); 4] = [
        ("ppn_nlu", vec![PpnPosition::Nlu]),
        ("ppn_dst", vec![PpnPosition::Dst]),
        ("ppn_policy", vec![PpnPosition::Policy]),
        ("ppn_all", PpnPosition::ALL.to_vec()),
    ];
    let mut matrix: Vec<(String, f64)> = vec![("baseline".into(), base_mean)];
    let mut all_without = f64::NAN;
    for (label, positions) in &cells {
        for with_s in [true, false] {
            let row_label = format!("{}{}", label, if with_s { "+s_all" } else { "-s_all" });
            let mean = if *label == "ppn_all" && with_s {
                ppn_mean
            } else {
                let env = if with_s { &noisy } else { &noisy_no_s };
                let mut sum = 0.0;
                for &seed in &seeds {
                    let (run, _) = train_cell(env, Strategy::Random, seed, positions.clone());
                    sum += eval_best(env, &run, seed).task_success;
                }
                sum / 5.0
            };
            if *label == "ppn_all" && !with_s {
                all_without = mean;
            }
            matrix.push((row_label, mean));
        }
    }
    let complete = matrix.len() == 9 && matrix.iter().all(|(_, v)| v.is_finite());
    let rows = matrix
        .iter()
        .map(|(l, v)| format!("{} {:.3}", l, v))
        .collect::<Vec<_>>()
        .join(", ");
    gate.record(
        "9-ablation-matrix",
        complete && ppn_mean >= all_without - 0.03,
        format!("{} rows [{}]", matrix.len(), rows),
    );

    // Criterion 10: zero-noise sanity bound and byte-identical retraining.
    let clean_metrics = run_eval(
        &clean,
        &PpnSet::default(),
        EVAL_DIALOGUES,
        seeds[0],
        EVAL_STREAM_BASE,
        1,
    )
    .unwrap();
    let mut identical = true;
    for (i, &seed) in seeds.iter().enumerate() {
        let (rerun, _) = train_cell(&noisy, Strategy::Random, seed, PpnPosition::ALL.to_vec());
        if rerun.report.csv() != random_runs[i].report.csv() {
            identical = false;
        }
    }
    gate.record(
        "10-sanity-determinism",
        clean_metrics.task_success >= 0.95 && identical,
        format!(
            "zero-noise success {:.3} (need 0.950), rerun logs byte-identical: {}",
            clean_metrics.task_success, identical
        ),
    );

    gate.finish();
}
