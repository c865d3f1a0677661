//! `ppn` — command-line workflow for the post-processing-network dialogue
//! pipeline: world/data generation, imitation and reinforcement training,
//! evaluation, the ablation matrix, and an interactive chat REPL.
//!
//! Exit codes: 0 success, 1 acceptance-threshold failure, 2 configuration
//! error, 3 missing-dependency error.

use clap::{Parser, Subcommand};
use ppn_core::acts::DialogueAct;
use ppn_core::config::RunConfig;
use ppn_core::error::PpnError;
use ppn_core::eval::{run_eval, Metrics};
use ppn_core::session::{dialogue_rng, Env, PpnSet, Session};
use ppn_core::training::{
    collect_il_data, run_training, run_training_from, train_il, IlDataset, IlReport, IterLog,
    Strategy, TrainConfig,
};
use ppn_core::vocab::PpnPosition;
use ppn_core::world::UserGoal;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// RNG stream bases; evaluation and chat must never reuse training streams
/// (training uses `iteration << 24 | episode`).
const EVAL_STREAM_BASE: u64 = 1 << 40;
const CHAT_STREAM_BASE: u64 = 1 << 41;

#[derive(Parser)]
#[command(name = "ppn", version, about = "Pipeline dialogue system with RL-trained post-processing networks")]
struct Cli {
    /// JSON run-configuration file; command-line flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root directory (default: $PPN_OUTPUT_ROOT, then ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Evaluation worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Start from the noisy-policy benchmark configuration instead of the
    /// noise-free default.
    #[arg(long, global = true)]
    benchmark: bool,
    /// World generation seed.
    #[arg(long, global = true)]
    world_seed: Option<u64>,
    /// PPN selection strategy: all | random | rotation.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// RL iterations.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Comma-separated PPN positions to attach (nlu,dst,policy).
    #[arg(long, global = true)]
    positions: Option<String>,
    /// Feed each PPN only its own module's state instead of the full
    /// concatenation.
    #[arg(long, global = true)]
    no_s_all: bool,
    /// NLU dialogue-act drop probability.
    #[arg(long, global = true)]
    nlu_drop: Option<f64>,
    /// Policy dialogue-act drop probability.
    #[arg(long, global = true)]
    policy_drop: Option<f64>,
    /// Comma-separated training seeds.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Evaluation dialogues per seed.
    #[arg(long, global = true)]
    dialogues: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the world files (ontology, database, manifest) and the per-PPN
    /// imitation datasets.
    GenData,
    /// Train PPNs: `il` pretrains on the copy task, `rl` runs PPO from the IL
    /// checkpoint.
    Train {
        /// Training phase.
        #[arg(value_parser = ["il", "rl"])]
        phase: String,
        /// Train only this seed instead of every configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate checkpoints (or the bare pipeline) over the configured seeds.
    Eval {
        /// Evaluate the frozen no-PPN pipeline only.
        #[arg(long)]
        baseline_only: bool,
        /// Which RL checkpoint to load.
        #[arg(long, default_value = "best", value_parser = ["best", "final"])]
        checkpoint: String,
        /// Exit with code 1 if the cross-seed mean task success is below this.
        #[arg(long)]
        min_success: Option<f64>,
    },
    /// Train and evaluate the full placement-ablation matrix (baseline +
    /// NLU/DST/Policy/All, each with and without the shared state).
    Ablate,
    /// Talk to the system from the terminal.
    Chat {
        /// Print per-stage dialogue acts and PPN add/delete diffs.
        #[arg(long)]
        trace: bool,
        /// Run without PPNs.
        #[arg(long)]
        baseline: bool,
        /// RNG seed for this conversation.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &PpnError) -> u8 {
    match e {
        PpnError::Dependency(_)
        | PpnError::Io(_)
        | PpnError::ManifestMismatch { .. }
        | PpnError::WeightFormat(_) => 3,
        _ => 2,
    }
}

fn run(cli: &Cli) -> ppn_core::error::Result<ExitCode> {
    let cfg = resolve_config(cli)?;
    let run_dir = resolve_run_dir(cli, &cfg)?;
    match &cli.cmd {
        Cmd::GenData => cmd_gen_data(&cfg, &run_dir),
        Cmd::Train { phase, seed } => cmd_train(&cfg, &run_dir, phase, *seed),
        Cmd::Eval {
            baseline_only,
            checkpoint,
            min_success,
        } => cmd_eval(&cfg, &run_dir, *baseline_only, checkpoint, *min_success),
        Cmd::Ablate => cmd_ablate(&cfg, &run_dir),
        Cmd::Chat {
            trace,
            baseline,
            seed,
        } => cmd_chat(&cfg, &run_dir, *trace, *baseline, *seed),
    }
}

/// File config (if any) layered under command-line overrides.
fn resolve_config(cli: &Cli) -> ppn_core::error::Result<RunConfig> {
    let mut cfg = if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_json(&text)?
    } else if cli.benchmark {
        RunConfig::noisy_policy_benchmark()
    } else {
        RunConfig::default()
    };
    if cli.benchmark && cli.config.is_some() {
        return Err(PpnError::Config(
            "--benchmark and --config are mutually exclusive".into(),
        ));
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(PpnError::Config("--workers must be at least 1".into()));
        }
        cfg.workers = w;
    }
    if let Some(s) = cli.world_seed {
        cfg.world_seed = s;
    }
    if let Some(s) = cli.strategy {
        cfg.strategy = s;
    }
    if let Some(n) = cli.iterations {
        if n == 0 {
            return Err(PpnError::Config("--iterations must be at least 1".into()));
        }
        cfg.ppo.iterations = n;
    }
    if let Some(p) = &cli.positions {
        cfg.positions = parse_positions(p)?;
    }
    if cli.no_s_all {
        cfg.session.use_s_all = false;
    }
    if let Some(p) = cli.nlu_drop {
        check_prob(p, "--nlu-drop")?;
        cfg.session.nlu_noise.p_drop = p;
    }
    if let Some(p) = cli.policy_drop {
        check_prob(p, "--policy-drop")?;
        cfg.session.policy_noise.p_drop = p;
    }
    if let Some(s) = &cli.seeds {
        cfg.seeds = parse_list(s, "--seeds")?;
        if cfg.seeds.is_empty() {
            return Err(PpnError::Config("--seeds must name at least one seed".into()));
        }
    }
    if let Some(n) = cli.dialogues {
        if n == 0 {
            return Err(PpnError::Config("--dialogues must be at least 1".into()));
        }
        cfg.eval_dialogues = n;
    }
    Ok(cfg)
}

fn check_prob(p: f64, flag: &str) -> ppn_core::error::Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(PpnError::Config(format!("{} must be in [0, 1]", flag)));
    }
    Ok(())
}

fn parse_positions(s: &str) -> ppn_core::error::Result<Vec<PpnPosition>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let pos = match part.trim() {
            "nlu" => PpnPosition::Nlu,
            "dst" => PpnPosition::Dst,
            "policy" => PpnPosition::Policy,
            other => {
                return Err(PpnError::Config(format!(
                    "unknown position '{}' (expected nlu, dst, policy)",
                    other
                )))
            }
        };
        if !out.contains(&pos) {
            out.push(pos);
        }
    }
    if out.is_empty() {
        return Err(PpnError::Config("--positions names no position".into()));
    }
    out.sort_by_key(|p| p.module_index());
    Ok(out)
}

fn parse_list(s: &str, flag: &str) -> ppn_core::error::Result<Vec<u64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| PpnError::Config(format!("{}: '{}' is not an integer", flag, p)))
        })
        .collect()
}

/// Artifacts live under `<root>/run-<fingerprint-prefix>/`; a stored config is
/// checked against the active one so artifacts from different configurations
/// never mix.
fn resolve_run_dir(cli: &Cli, cfg: &RunConfig) -> ppn_core::error::Result<PathBuf> {
    let root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("PPN_OUTPUT_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let fp = cfg.fingerprint();
    let dir = root.join(format!("run-{}", &fp[..12]));
    let config_path = dir.join("config.json");
    if config_path.exists() {
        let stored = RunConfig::from_json(&std::fs::read_to_string(&config_path)?)?;
        if stored.fingerprint() != fp {
            return Err(PpnError::Config(format!(
                "{} holds a different configuration (fingerprint {} vs {})",
                config_path.display(),
                &stored.fingerprint()[..12],
                &fp[..12]
            )));
        }
    }
    Ok(dir)
}

fn write_config(cfg: &RunConfig, run_dir: &Path) -> ppn_core::error::Result<()> {
    std::fs::create_dir_all(run_dir)?;
    std::fs::write(run_dir.join("config.json"), cfg.to_json())?;
    Ok(())
}

fn il_data_path(run_dir: &Path, pos: PpnPosition) -> PathBuf {
    run_dir.join("data").join(format!("il-{}.bin", pos))
}

fn il_ckpt_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join("il").join(format!("seed-{}", seed))
}

fn rl_ckpt_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join("rl").join(format!("seed-{}", seed))
}

fn train_seeds(cfg: &RunConfig, only: Option<u64>) -> Vec<u64> {
    match only {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    }
}

// --- gen-data ---------------------------------------------------------------

fn cmd_gen_data(cfg: &RunConfig, run_dir: &Path) -> ppn_core::error::Result<ExitCode> {
    let env = cfg.build_env()?;
    write_config(cfg, run_dir)?;
    let data_dir = run_dir.join("data");
    std::fs::create_dir_all(&data_dir)?;
    std::fs::write(
        data_dir.join("ontology.json"),
        serde_json::to_string_pretty(&env.ontology)?,
    )?;
    std::fs::write(
        data_dir.join("database.json"),
        serde_json::to_string_pretty(&env.database)?,
    )?;
    std::fs::write(
        data_dir.join("manifest.json"),
        serde_json::to_string_pretty(&env.manifest)?,
    )?;
    println!("world written to {}", data_dir.display());
    for pos in PpnPosition::ALL {
        let v = env.manifest.vocab_for(pos);
        println!(
            "  {:<6} vocabulary {:>3} entries, PPN input dim {}",
            pos,
            v.len(),
            env.manifest.input_dim(pos)
        );
    }
    // One imitation dataset per position, collected with the first configured
    // seed; training seeds only affect network init and RL rollouts.
    let data_seed = cfg.seeds[0];
    let sets = collect_il_data(&env, data_seed, cfg.il.turns)?;
    for (pos, set) in &sets {
        let path = il_data_path(run_dir, *pos);
        set.save(&path, &env.manifest.hash)?;
        println!(
            "  imitation dataset {}: {} turns ({} x {})",
            path.display(),
            set.n,
            set.input_dim,
            set.target_dim
        );
    }
    println!("config fingerprint {}", &cfg.fingerprint()[..12]);
    Ok(ExitCode::SUCCESS)
}

// --- train ------------------------------------------------------------------

fn cmd_train(
    cfg: &RunConfig,
    run_dir: &Path,
    phase: &str,
    only_seed: Option<u64>,
) -> ppn_core::error::Result<ExitCode> {
    let env = cfg.build_env()?;
    write_config(cfg, run_dir)?;
    for seed in train_seeds(cfg, only_seed) {
        match phase {
            "il" => train_il_seed(cfg, &env, run_dir, seed)?,
            "rl" => train_rl_seed(cfg, &env, run_dir, seed)?,
            _ => unreachable!("clap restricts the phase"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn train_il_seed(
    cfg: &RunConfig,
    env: &Env,
    run_dir: &Path,
    seed: u64,
) -> ppn_core::error::Result<()> {
    // Same RNG schedule as the self-contained trainer: one init stream drives
    // network init and minibatch shuffling in position order.
    let mut rng = dialogue_rng(seed, u64::MAX - 1);
    let mut ppns = PpnSet::default();
    for &pos in &cfg.positions {
        ppns.ppns
            .insert(pos, ppn_core::ppn::Ppn::new(&env.manifest, pos, &mut rng));
    }
    let mut reports: Vec<IlReport> = Vec::new();
    for &pos in &cfg.positions {
        let path = il_data_path(run_dir, pos);
        if !path.exists() {
            return Err(PpnError::Dependency(format!(
                "imitation dataset {} not found; run `ppn gen-data` first",
                path.display()
            )));
        }
        let data = IlDataset::load(&path, &env.manifest.hash)?;
        let report = train_il(ppns.get_mut(pos).unwrap(), &data, &cfg.il, &mut rng)?;
        println!(
            "seed {} il {:<6} bit accuracy {:.4}  exact match {:.4}  (best epoch {})",
            seed, report.position, report.best_bit_accuracy, report.best_exact_match,
            report.best_epoch
        );
        reports.push(report);
    }
    let dir = il_ckpt_dir(run_dir, seed);
    ppns.save_all(&dir, &env.manifest.hash)?;
    std::fs::write(
        dir.join("il-report.json"),
        serde_json::to_string_pretty(&reports)?,
    )?;
    println!("seed {} il checkpoints -> {}", seed, dir.display());
    Ok(())
}

fn train_rl_seed(
    cfg: &RunConfig,
    env: &Env,
    run_dir: &Path,
    seed: u64,
) -> ppn_core::error::Result<()> {
    let il_dir = il_ckpt_dir(run_dir, seed);
    if !il_dir.exists() {
        return Err(PpnError::Dependency(format!(
            "imitation checkpoint {} not found; run `ppn train il` first",
            il_dir.display()
        )));
    }
    let ppns = PpnSet::load_all(&il_dir, &env.manifest, &cfg.positions)?;
    let tc = TrainConfig {
        ppo: cfg.ppo,
        strategy: cfg.strategy,
        seed,
        positions: cfg.positions.clone(),
        il: None,
    };
    let iters = tc.ppo.iterations;
    let mut progress = |log: &IterLog| {
        if log.iteration % 10 == 0 || log.iteration + 1 == iters {
            println!(
                "seed {} iter {:>4}  success {:.3}  return {:>7.2}  episodes {:>4}",
                seed, log.iteration, log.success, log.mean_return, log.episodes
            );
        }
    };
    let (best, fin, report) = run_training_from(env, &tc, ppns, Vec::new(), Some(&mut progress))?;
    let dir = rl_ckpt_dir(run_dir, seed);
    best.save_all(&dir.join("best"), &env.manifest.hash)?;
    fin.save_all(&dir.join("final"), &env.manifest.hash)?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("train-log.csv"), report.csv())?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!(
        "seed {} rl done: best iteration {} (rollout success {:.3}) -> {}",
        seed,
        report.best_iteration,
        report.best_success,
        dir.display()
    );
    if report.reward_violations > 0 {
        return Err(PpnError::Config(format!(
            "reward bookkeeping violated on {} episodes",
            report.reward_violations
        )));
    }
    Ok(())
}

// --- eval -------------------------------------------------------------------

fn cmd_eval(
    cfg: &RunConfig,
    run_dir: &Path,
    baseline_only: bool,
    checkpoint: &str,
    min_success: Option<f64>,
) -> ppn_core::error::Result<ExitCode> {
    if cfg.eval_dialogues == 0 {
        return Err(PpnError::Config("eval_dialogues must be at least 1".into()));
    }
    let env = cfg.build_env()?;
    let mut rows: Vec<(String, Metrics)> = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in &cfg.seeds {
        let ppns = if baseline_only {
            PpnSet::default()
        } else {
            let dir = rl_ckpt_dir(run_dir, seed).join(checkpoint);
            if !dir.exists() {
                return Err(PpnError::Dependency(format!(
                    "checkpoint {} not found; run `ppn train rl` first",
                    dir.display()
                )));
            }
            PpnSet::load_all(&dir, &env.manifest, &cfg.positions)?
        };
        let m = run_eval(
            &env,
            &ppns,
            cfg.eval_dialogues,
            seed,
            EVAL_STREAM_BASE,
            cfg.workers,
        )?;
        rows.push((format!("seed-{}", seed), m));
        per_seed.push(m);
    }
    let mean = Metrics::mean(&per_seed);
    rows.push(("mean".into(), mean));

    println!("{}", Metrics::table_header());
    let mut csv = String::from(Metrics::CSV_HEADER);
    csv.push('\n');
    for (label, m) in &rows {
        println!("{}", m.table_row(label));
        csv.push_str(&m.csv_row(label));
        csv.push('\n');
    }
    let eval_dir = run_dir.join("eval");
    std::fs::create_dir_all(&eval_dir)?;
    let name = if baseline_only {
        "baseline.csv".to_string()
    } else {
        format!("{}.csv", checkpoint)
    };
    std::fs::write(eval_dir.join(&name), csv)?;
    println!("report -> {}", eval_dir.join(&name).display());

    if let Some(threshold) = min_success {
        if mean.task_success < threshold {
            eprintln!(
                "task success {:.3} below required {:.3}",
                mean.task_success, threshold
            );
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

// --- ablate -----------------------------------------------------------------

fn ablation_rows() -> Vec<(String, Vec<PpnPosition>, bool)> {
    let placements: [(&str, Vec<PpnPosition>); 4] = [
        ("ppn_nlu", vec![PpnPosition::Nlu]),
        ("ppn_dst", vec![PpnPosition::Dst]),
        ("ppn_policy", vec![PpnPosition::Policy]),
        ("ppn_all", PpnPosition::ALL.to_vec()),
    ];
    let mut rows = Vec::new();
    for (name, positions) in placements {
        for s_all in [true, false] {
            let label = if s_all {
                format!("{}+s_all", name)
            } else {
                name.to_string()
            };
            rows.push((label, positions.clone(), s_all));
        }
    }
    rows
}

fn cmd_ablate(cfg: &RunConfig, run_dir: &Path) -> ppn_core::error::Result<ExitCode> {
    let env = cfg.build_env()?;
    write_config(cfg, run_dir)?;
    let mut rows: Vec<(String, Option<Metrics>)> = Vec::new();

    let mut base_seeds = Vec::new();
    for &seed in &cfg.seeds {
        base_seeds.push(run_eval(
            &env,
            &PpnSet::default(),
            cfg.eval_dialogues,
            seed,
            EVAL_STREAM_BASE,
            cfg.workers,
        )?);
    }
    rows.push(("baseline".into(), Some(Metrics::mean(&base_seeds))));
    println!("{}", Metrics::table_header());
    println!("{}", base_seeds.last().unwrap().table_row("baseline*"));

    for (label, positions, s_all) in ablation_rows() {
        let mut cell_cfg = cfg.clone();
        cell_cfg.positions = positions;
        cell_cfg.session.use_s_all = s_all;
        let cell_env = cell_cfg.build_env()?;
        let mut seed_metrics = Vec::new();
        let mut failed = false;
        for &seed in &cfg.seeds {
            let tc = TrainConfig {
                ppo: cell_cfg.ppo,
                strategy: cell_cfg.strategy,
                seed,
                positions: cell_cfg.positions.clone(),
                il: Some(cell_cfg.il),
            };
            match run_training(&cell_env, &tc, None) {
                Ok((best, _, _)) => {
                    let dir = run_dir.join("ablation").join(&label).join(format!("seed-{}", seed));
                    best.save_all(&dir, &cell_env.manifest.hash)?;
                    seed_metrics.push(run_eval(
                        &cell_env,
                        &best,
                        cfg.eval_dialogues,
                        seed,
                        EVAL_STREAM_BASE,
                        cfg.workers,
                    )?);
                }
                Err(e) => {
                    eprintln!("cell {} seed {} failed: {}", label, seed, e);
                    failed = true;
                    break;
                }
            }
        }
        let metrics = if failed {
            None
        } else {
            Some(Metrics::mean(&seed_metrics))
        };
        if let Some(m) = &metrics {
            println!("{}", m.table_row(&label));
        } else {
            println!("{:<24} (absent)", label);
        }
        rows.push((label, metrics));
    }

    let mut csv = String::from(Metrics::CSV_HEADER);
    csv.push('\n');
    for (label, m) in &rows {
        match m {
            Some(m) => csv.push_str(&m.csv_row(label)),
            None => csv.push_str(&format!("{},absent,,,,,,", label)),
        }
        csv.push('\n');
    }
    let path = run_dir.join("ablation").join("matrix.csv");
    std::fs::create_dir_all(path.parent().unwrap())?;
    std::fs::write(&path, csv)?;
    println!("matrix -> {}", path.display());
    Ok(ExitCode::SUCCESS)
}

// --- chat -------------------------------------------------------------------

fn print_goal(goal: &UserGoal) {
    println!("--- goal card ---");
    for dg in &goal.domains {
        println!("  [{}]", dg.domain);
        for (slot, value) in &dg.info {
            println!("    constraint  {} = {}", slot, value);
        }
        for (slot, value) in &dg.fail_info {
            println!("    fallback    {} = {}", slot, value);
        }
        for slot in &dg.requests {
            println!("    request     {}", slot);
        }
        for (slot, value) in &dg.book {
            println!("    booking     {} = {}", slot, value);
        }
    }
    println!("-----------------");
}

fn fmt_das(das: &[DialogueAct]) -> String {
    if das.is_empty() {
        return "(none)".into();
    }
    das.iter()
        .map(|a| {
            if a.value.is_empty() {
                format!("{}({}-{})", a.intent, a.domain, a.slot)
            } else {
                format!("{}({}-{}={})", a.intent, a.domain, a.slot, a.value)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// +added / -removed acts between a module's raw output and the PPN result.
fn fmt_diff(before: &[DialogueAct], after: &[DialogueAct]) -> String {
    let mut parts = Vec::new();
    for a in after {
        if !before.contains(a) {
            parts.push(format!("+{}", fmt_das(std::slice::from_ref(a))));
        }
    }
    for a in before {
        if !after.contains(a) {
            parts.push(format!("-{}", fmt_das(std::slice::from_ref(a))));
        }
    }
    if parts.is_empty() {
        "unchanged".into()
    } else {
        parts.join(" ")
    }
}

fn cmd_chat(
    cfg: &RunConfig,
    run_dir: &Path,
    trace: bool,
    baseline: bool,
    seed: u64,
) -> ppn_core::error::Result<ExitCode> {
    let env = cfg.build_env()?;
    let ppns = if baseline {
        PpnSet::default()
    } else {
        let dir = rl_ckpt_dir(run_dir, cfg.seeds[0]).join("best");
        if !dir.exists() {
            return Err(PpnError::Dependency(format!(
                "checkpoint {} not found; run `ppn train rl` first or pass --baseline",
                dir.display()
            )));
        }
        PpnSet::load_all(&dir, &env.manifest, &cfg.positions)?
    };
    let mut rng = dialogue_rng(seed, CHAT_STREAM_BASE);
    let mut session = Session::new(&env, &ppns, true);
    println!(
        "chat ready ({}); /goal samples a goal card, /quit exits",
        if baseline { "no PPNs" } else { "PPNs attached" }
    );
    let stdin = std::io::stdin();
    let mut line = String::new();
    loop {
        print!("you> ");
        std::io::stdout().flush()?;
        line.clear();
        if stdin.lock().read_line(&mut line)? == 0 {
            println!();
            break; // EOF ends the session gracefully.
        }
        let input = line.trim();
        if input.is_empty() {
            continue;
        }
        if input == "/quit" {
            break;
        }
        if input == "/goal" {
            let goal = env.sample_goal(&mut rng)?;
            print_goal(&goal);
            continue;
        }
        let t = session.system_turn(input, &mut rng)?;
        if trace {
            println!("  parsed user acts : {}", fmt_das(&t.user_das_true));
            println!("  nlu output       : {}", fmt_das(&t.nlu_das_pre));
            if !baseline {
                println!("  nlu ppn diff     : {}", fmt_diff(&t.nlu_das_pre, &t.nlu_das));
            }
            println!("  belief slots     : {}", t.belief_size);
            println!("  policy output    : {}", fmt_das(&t.system_das_pre));
            if !baseline {
                println!(
                    "  policy ppn diff  : {}",
                    fmt_diff(&t.system_das_pre, &t.system_das)
                );
            }
        }
        println!("sys> {}", t.system_utterance);
    }
    Ok(ExitCode::SUCCESS)
}
