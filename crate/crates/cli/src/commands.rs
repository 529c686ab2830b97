use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use rulecritic::config::Config;
use rulecritic::critic::{load_checkpoint, save_checkpoint, Critic, StateValue};
use rulecritic::eval::{
    emit_grid, midpoint_threshold, onset_distance, robustness_heatmap, value_heatmap, EgoTemplate, EvalGrid,
    GridFormat, Overlay,
};
use rulecritic::planner::{write_debug_csv, PlannerParams};
use rulecritic::rules::{rulebook_evaluate, RobustnessTrace, RuleId, RuleSeries, World};
use rulecritic::scenario::{
    generate_synthetic_scenario, insert_no_overtaking_sign, parse_tracks_csv, read_archive, with_sign_at,
    write_archive, BrakingEvent, Direction, IngestOptions, Road, Scenario, SignKind, SynthSpec,
};
use rulecritic::seed::{self, tags};
use rulecritic::train::{train_phase, write_metrics_csv, EnvContext, Episode, RoundMetrics, Termination, TrainSetup};

use crate::manifest::Manifest;
use crate::{
    output_path, write_error, CliError, Command, DirectionArg, EvaluateArgs, Global, HeatmapArgs, IngestArgs,
    Quantity, ReplayArgs, SynthArgs, TrainArgs,
};

pub(crate) fn run(global: &Global, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(global, a),
        Command::Synth(a) => synth(global, a),
        Command::Train(a) => train(global, a),
        Command::Evaluate(a) => evaluate(global, a),
        Command::Heatmap(a) => heatmap(global, a),
        Command::Replay(a) => replay(global, a),
        Command::Version => {
            println!("rulecritic {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Usage(format!("no such input file: {}", path.display())),
        _ => CliError::Data(format!("{}: {e}", path.display())),
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_input(path)?).map_err(|_| CliError::Data(format!("{}: not UTF-8 text", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    read_archive(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_critic(path: &Path) -> Result<Critic, CliError> {
    read_input(path)?;
    load_checkpoint(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// The config in effect and its canonical text (the hashed form).
fn load_config(global: &Global) -> Result<(Config, String), CliError> {
    let cfg = match &global.config {
        Some(p) => Config::parse(&read_text(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => Config::default(),
    };
    let text = cfg.to_toml();
    Ok((cfg, text))
}

/// Resolves an output path and creates its parent directory.
fn prepare_output(path: &Path) -> Result<PathBuf, CliError> {
    let path = output_path(path);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| write_error(dir, e))?;
    }
    Ok(path)
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| write_error(path, e))
}

fn parse_rule(text: &str) -> Result<RuleId, CliError> {
    RuleId::parse(text).ok_or_else(|| CliError::Usage(format!("unknown rule `{text}` (expected G1, I6 or I2)")))
}

fn ingest(global: &Global, a: &IngestArgs) -> Result<(), CliError> {
    let (_, cfg_text) = load_config(global)?;
    let mut opts = IngestOptions::default();
    opts.direction = a.direction.map(|d| match d {
        DirectionArg::Forward => Direction::Forward,
        DirectionArg::Backward => Direction::Backward,
    });
    if let Some(w) = &a.start_window {
        opts.start_window = (w[0], w[1]);
    }
    if let Some(v) = a.start_speed {
        opts.start_speed = v;
    }
    let meta = read_input(&a.meta)?;
    let tracks = read_input(&a.tracks)?;
    let sc = parse_tracks_csv(meta.as_slice(), tracks.as_slice(), &opts)?;
    let out = prepare_output(&a.out)?;
    write_output(&out, write_archive(&sc).as_bytes())?;
    let mut m = Manifest::new("ingest", global.seed, &cfg_text);
    m.inputs = vec![a.meta.clone(), a.tracks.clone()];
    m.outputs = vec![out.clone()];
    m.write(&out)?;
    eprintln!("{} vehicles, {} steps -> {}", sc.tracks.len(), sc.num_steps, out.display());
    Ok(())
}

fn synth(global: &Global, a: &SynthArgs) -> Result<(), CliError> {
    let (_, cfg_text) = load_config(global)?;
    let spec = SynthSpec {
        lanes: a.lanes,
        vehicles: a.vehicles,
        road_length: a.length,
        duration: a.duration,
        lane_changes: a.lane_changes,
        braking: a.braking.then(BrakingEvent::default),
        ..SynthSpec::default()
    };
    let usage = |e: rulecritic::scenario::ScenarioError| CliError::Usage(e.to_string());
    let mut sc = generate_synthetic_scenario(&spec, global.seed).map_err(usage)?;
    if a.sign {
        sc = insert_no_overtaking_sign(&sc, global.seed).map_err(usage)?;
    } else if let Some(s) = a.sign_at {
        sc = with_sign_at(&sc, s);
        sc.validate().map_err(usage)?;
    }
    let out = prepare_output(&a.out)?;
    write_output(&out, write_archive(&sc).as_bytes())?;
    let mut m = Manifest::new("synth", global.seed, &cfg_text);
    m.derived_seeds = vec![(tags::SYNTH.into(), seed::derive(global.seed, tags::SYNTH))];
    if a.sign {
        m.derived_seeds.push((tags::SIGN.into(), seed::derive(global.seed, tags::SIGN)));
    }
    m.outputs = vec![out.clone()];
    m.write(&out)?;
    Ok(())
}

fn write_metrics(path: &Path, rows: &[RoundMetrics]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_metrics_csv(rows, &mut buf)?;
    write_output(path, &buf)
}

fn train(global: &Global, a: &TrainArgs) -> Result<(), CliError> {
    let (mut cfg, _) = load_config(global)?;
    if let Some(p) = &a.phase {
        cfg.training.phase = parse_rule(p)?;
    }
    if let Some(n) = a.steps {
        cfg.training.total_steps = n;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg_text = cfg.to_toml();
    let scenarios = a.scenarios.iter().map(|p| load_scenario(p)).collect::<Result<Vec<_>, _>>()?;
    let ckpt = prepare_output(&a.checkpoint)?;
    let metrics_path = prepare_output(&a.metrics)?;
    let hyper = json!({ "seed": global.seed, "config": cfg });
    let setup = TrainSetup {
        scenarios: &scenarios,
        env: &cfg.environment,
        planner: &cfg.planner,
        rules: &cfg.rules,
        model: &cfg.model,
        learning: &cfg.learning,
        training: &cfg.training,
        seed: global.seed,
    };
    let mut rows: Vec<RoundMetrics> = Vec::new();
    let outcome = train_phase(&setup, |row, critic| {
        rows.push(row.clone());
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "round {}: explained_variance {} episode_reward_mean {} loss {:.5}",
            row.update_round,
            fmt(row.explained_variance),
            fmt(row.episode_reward_mean),
            row.mean_loss
        );
        // Written every round so a later failure leaves the last good state.
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf)?;
        std::fs::write(&metrics_path, buf).map_err(|e| rulecritic::train::TrainError::Csv(e.to_string()))?;
        save_checkpoint(&ckpt, critic, &hyper)?;
        Ok(())
    })?;
    save_checkpoint(&ckpt, &outcome.critic, &hyper)?;
    write_metrics(&metrics_path, &outcome.metrics)?;
    for line in &outcome.log {
        eprintln!("{line}");
    }
    eprintln!(
        "{} episodes, {} rounds, skipped scenarios {:?}, {} steps without rule reward",
        outcome.episodes,
        outcome.metrics.len(),
        outcome.skipped,
        outcome.invalid_rule_steps
    );
    let mut m = Manifest::new("train", global.seed, &cfg_text);
    m.derived_seeds = [tags::MODEL_INIT, tags::EPISODES, tags::SHUFFLE]
        .iter()
        .map(|t| (t.to_string(), seed::derive(global.seed, t)))
        .collect();
    m.inputs = a.scenarios.clone();
    m.outputs = vec![ckpt.clone(), rulecritic::critic::sidecar_path(&ckpt), metrics_path];
    m.write(&ckpt)?;
    Ok(())
}

/// Planner settings for a run with or without a critic: without one the
/// value term is switched off, which is the baseline planner.
fn planner_for(cfg: &Config, critic: Option<&Critic>) -> PlannerParams {
    let mut p = cfg.planner.clone();
    if critic.is_none() {
        p.weights.value = 0.0;
    }
    p
}

fn context<'a>(cfg: &'a Config, planner: &'a PlannerParams, sc: &'a Scenario, road: &'a Road) -> EnvContext<'a> {
    EnvContext {
        scenario: sc,
        road,
        env: &cfg.environment,
        planner,
        rules: &cfg.rules,
        phase: cfg.training.phase,
        rule_weight: cfg.training.rule_weight,
        progression_weight: cfg.training.progression_weight,
    }
}

fn episode_seed(master: u64, scenario: usize) -> u64 {
    seed::derive(seed::derive(master, tags::REPLAY), &format!("scenario{scenario}"))
}

struct Driven {
    episode: Episode,
    termination: Termination,
}

fn drive(ctx: &EnvContext<'_>, critic: Option<&Critic>, rng: &mut seed::SeedRng, record: bool) -> Result<Driven, CliError> {
    let mut episode = Episode::reset(ctx, rng)?;
    episode.record_candidates = record;
    let termination = episode.drive(ctx, critic.map(|c| c as &dyn StateValue))?;
    Ok(Driven { episode, termination })
}

/// Keeps only the steps from the episode start on.
fn executed(series: &RuleSeries, start: usize) -> RuleSeries {
    let skip = start.saturating_sub(series.start_step);
    RuleSeries { rule: series.rule, start_step: start, values: series.values[skip.min(series.values.len())..].to_vec() }
}

fn rule_summary(series: &[RuleSeries]) -> Value {
    let mut out = serde_json::Map::new();
    for s in series {
        out.insert(s.rule.to_string(), json!({ "min": s.min(), "violations": s.violations() }));
    }
    Value::Object(out)
}

fn evaluate(global: &Global, a: &EvaluateArgs) -> Result<(), CliError> {
    let (cfg, cfg_text) = load_config(global)?;
    if a.episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let critic = a.checkpoint.as_deref().map(load_critic).transpose()?;
    let planner = planner_for(&cfg, critic.as_ref());
    let mut reports = Vec::new();
    let mut all: Vec<RuleSeries> = Vec::new();
    let mut rewards = Vec::new();
    for (i, path) in a.scenario.iter().enumerate() {
        let sc = load_scenario(path)?;
        let road = sc.road()?;
        let ctx = context(&cfg, &planner, &sc, &road);
        let mut rng = seed::rng(episode_seed(global.seed, i));
        let mut episodes = Vec::new();
        for _ in 0..a.episodes {
            let d = drive(&ctx, critic.as_ref(), &mut rng, false)?;
            let world = World::with_road(&sc, road.clone(), &d.episode.track, &cfg.rules)?;
            let report = rulebook_evaluate(&world)?;
            let start = d.episode.start_step();
            let series: Vec<RuleSeries> = report.trace.series.iter().map(|s| executed(s, start)).collect();
            let reward: f64 = d.episode.rewards.iter().sum();
            rewards.push(reward);
            episodes.push(json!({
                "start_step": start,
                "steps": d.episode.rewards.len(),
                "termination": d.termination.as_str(),
                "episode_reward": reward,
                "rules": rule_summary(&series),
            }));
            all.extend(series);
        }
        reports.push(json!({ "scenario": path.display().to_string(), "episodes": episodes }));
    }
    let mut totals = serde_json::Map::new();
    for rule in [RuleId::G1, RuleId::I6, RuleId::I2] {
        let of_rule: Vec<&RuleSeries> = all.iter().filter(|s| s.rule == rule).collect();
        let min = of_rule.iter().filter_map(|s| s.min()).reduce(f64::min);
        let violations: usize = of_rule.iter().map(|s| s.violations()).sum();
        totals.insert(rule.to_string(), json!({ "min": min, "violations": violations }));
    }
    let report = json!({
        "critic": a.checkpoint.as_ref().map(|p| p.display().to_string()),
        "phase": cfg.training.phase,
        "scenarios": reports,
        "rules": totals,
        "episode_reward_mean": rewards.iter().sum::<f64>() / rewards.len() as f64,
    });
    let text = serde_json::to_string_pretty(&report).expect("json values serialise") + "\n";
    match &a.out {
        Some(p) => {
            let out = prepare_output(p)?;
            write_output(&out, text.as_bytes())?;
            let mut m = Manifest::new("evaluate", global.seed, &cfg_text);
            m.derived_seeds = vec![(tags::REPLAY.into(), seed::derive(global.seed, tags::REPLAY))];
            m.inputs = a.scenario.clone();
            m.inputs.extend(a.checkpoint.clone());
            m.outputs = vec![out.clone()];
            m.write(&out)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn first_sign(sc: &Scenario) -> Option<f64> {
    sc.ego_signs().iter().find(|s| s.kind == SignKind::NoOvertakingStart).map(|s| s.s)
}

fn heatmap(global: &Global, a: &HeatmapArgs) -> Result<(), CliError> {
    let (mut cfg, _) = load_config(global)?;
    if a.csv.is_none() && a.svg.is_none() {
        return Err(CliError::Usage("give --csv and/or --svg".into()));
    }
    let e = &mut cfg.eval;
    e.ego_speed = a.speed.unwrap_or(e.ego_speed);
    e.step = a.step.unwrap_or(e.step);
    e.cell_length = a.cell_length.unwrap_or(e.cell_length);
    e.cell_width = a.cell_width.unwrap_or(e.cell_width);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg_text = cfg.to_toml();
    let rule = parse_rule(&a.rule)?;
    let sc = load_scenario(&a.scenario)?;
    let road = sc.road()?;
    let template = EgoTemplate { speed: cfg.eval.ego_speed, length: cfg.environment.ego_length, width: cfg.environment.ego_width };
    let step = cfg.eval.step;
    let spec = cfg.eval.grid();
    let grid = match a.quantity {
        Quantity::Value => {
            let path = a.checkpoint.as_deref().ok_or_else(|| CliError::Usage("--quantity value needs --checkpoint".into()))?;
            let critic = load_critic(path)?;
            value_heatmap(&critic, &sc, step, &template, spec).map_err(usage_if_invalid)?
        }
        Quantity::Robustness => {
            robustness_heatmap(rule, &sc, step, &template, &cfg.rules, spec).map_err(usage_if_invalid)?
        }
    };
    let signs: Vec<f64> = sc.ego_signs().iter().map(|s| s.s).collect();
    let overlay = Overlay::of_road(&road, &signs);
    let mut outputs = Vec::new();
    for (path, fmt) in [(&a.csv, GridFormat::Csv), (&a.svg, GridFormat::Svg)] {
        if let Some(p) = path {
            let out = prepare_output(p)?;
            emit_grid(&grid, &out, fmt, &overlay)?;
            outputs.push(out);
        }
    }
    println!("{}", serde_json::to_string_pretty(&onset_summary(&grid, &road, &sc, a.quantity, &cfg)).expect("json"));
    let mut m = Manifest::new("heatmap", global.seed, &cfg_text);
    m.inputs = vec![a.scenario.clone()];
    m.inputs.extend(a.checkpoint.clone());
    m.outputs = outputs.clone();
    m.write(&outputs[0])?;
    Ok(())
}

fn usage_if_invalid(e: rulecritic::eval::EvalError) -> CliError {
    match e {
        rulecritic::eval::EvalError::Invalid(m) => CliError::Usage(m),
        e => e.into(),
    }
}

fn onset_summary(grid: &EvalGrid, road: &Road, sc: &Scenario, q: Quantity, cfg: &Config) -> Value {
    let Some(sign) = first_sign(sc) else {
        return json!({ "quantity": grid.quantity, "range": grid.range(), "sign": null });
    };
    let rows: Vec<usize> = (0..grid.rows).collect();
    let threshold = cfg.eval.threshold.or(match q {
        Quantity::Robustness => Some(0.0),
        Quantity::Value => midpoint_threshold(grid, &rows, sign, cfg.eval.upstream),
    });
    let lanes: Vec<Value> = road
        .lanes
        .iter()
        .map(|l| {
            let onset = match (threshold, grid.row_of(l.d_center)) {
                (Some(t), Some(r)) => onset_distance(grid, r, sign, t),
                _ => None,
            };
            json!({ "lane": l.index, "onset": onset })
        })
        .collect();
    json!({ "quantity": grid.quantity, "range": grid.range(), "sign": sign, "threshold": threshold, "lanes": lanes })
}

fn replay(global: &Global, a: &ReplayArgs) -> Result<(), CliError> {
    let (cfg, cfg_text) = load_config(global)?;
    let critic = a.checkpoint.as_deref().map(load_critic).transpose()?;
    let sc = load_scenario(&a.scenario)?;
    let road = sc.road()?;
    let planner = planner_for(&cfg, critic.as_ref());
    let ctx = context(&cfg, &planner, &sc, &road);
    let mut rng = seed::rng(episode_seed(global.seed, 0));
    let d = drive(&ctx, critic.as_ref(), &mut rng, a.plan_dump.is_some())?;

    let traj = prepare_output(&a.trajectory)?;
    let mut buf = Vec::new();
    d.episode.write_trajectory_csv(&ctx, &mut buf)?;
    write_output(&traj, &buf)?;

    let world = World::with_road(&sc, road.clone(), &d.episode.track, &cfg.rules)?;
    let report = rulebook_evaluate(&world)?;
    let start = d.episode.start_step();
    let trace = RobustnessTrace {
        timestep: report.trace.timestep,
        series: report.trace.series.iter().map(|s| executed(s, start)).collect(),
    };
    let trace_path = prepare_output(&a.trace)?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write_output(&trace_path, &buf)?;

    let mut outputs = vec![traj.clone(), trace_path];
    if let Some(dir) = &a.plan_dump {
        let dir = output_path(dir);
        std::fs::create_dir_all(&dir).map_err(|e| write_error(&dir, e))?;
        for (step, cands) in &d.episode.candidate_log {
            let p = dir.join(format!("plan-{step:05}.csv"));
            let mut buf = Vec::new();
            write_debug_csv(cands, &mut buf)?;
            write_output(&p, &buf)?;
            outputs.push(p);
        }
    }
    eprintln!(
        "{} steps from step {start}, ended by {}, reward {:.3}",
        d.episode.rewards.len(),
        d.termination.as_str(),
        d.episode.rewards.iter().sum::<f64>()
    );
    let mut m = Manifest::new("replay", global.seed, &cfg_text);
    m.derived_seeds = vec![("replay.scenario0".into(), episode_seed(global.seed, 0))];
    m.inputs = vec![a.scenario.clone()];
    m.inputs.extend(a.checkpoint.clone());
    m.outputs = outputs;
    m.write(&traj)?;
    Ok(())
}
