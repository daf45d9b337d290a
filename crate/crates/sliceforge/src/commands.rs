//! Command implementations behind the CLI: scenario authoring, training,
//! evaluation runs and comparison reports. Exit codes are stable: 0
//! success, 1 validation error, 2 runtime error.

use serde::Serialize;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::agents::{
    pretrain, Agent, AgentCheckpoint, DqnAgent, DqnConfig, PpoAgent, PpoConfig, SurrogateEnv,
    UpdateStats,
};
use crate::baselines::PfState;
use crate::control_loop::{
    run, write_kpi_log, ChannelTraceRow, LogHeader, Policy, World, EPISODE_LEN_EPOCHS,
};
use crate::domain::{
    default_scenario_with_seed, rng_substream, validate_scenario, ScenarioConfig, SLICE_KINDS,
};
use crate::error::Error;
use crate::eval::{emit_report, PolicyMetrics};

#[derive(Debug)]
pub enum CommandError {
    Validation(String),
    Runtime(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Validation(_) => 1,
            CommandError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Validation(m) | CommandError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        match &e {
            Error::InvalidArgument(_)
            | Error::InvalidScenario(_)
            | Error::Checkpoint(_)
            | Error::ShapeMismatch(_) => CommandError::Validation(e.to_string()),
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CommandError::Validation(e.to_string())
            }
            _ => CommandError::Runtime(e.to_string()),
        }
    }
}

pub struct TrainOpts {
    pub agent: String,
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub pretrain_steps: u64,
    pub epochs: u64,
    pub out: PathBuf,
    pub packet_latencies: bool,
    pub channel_trace: bool,
}

pub struct RunOpts {
    pub policy: String,
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: u64,
    pub out: PathBuf,
    pub packet_latencies: bool,
    pub channel_trace: bool,
}

pub struct ReportOpts {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
}

/// Full description of a run, written next to its outputs so it can be
/// reproduced bit-exactly.
#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'a str,
    policy: &'a str,
    seed: u64,
    epochs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pretrain_steps: Option<u64>,
    episode_len_epochs: u64,
    packet_latencies: bool,
    scenario: &'a ScenarioConfig,
}

pub fn cmd_config_default(seed: u64, out: &mut dyn std::io::Write) -> Result<(), CommandError> {
    let cfg = default_scenario_with_seed(seed);
    let text = serde_json::to_string_pretty(&cfg)
        .map_err(|e| CommandError::Runtime(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CommandError::Runtime(e.to_string()))
}

fn load_scenario(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig, CommandError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CommandError::from(Error::io(p, e)))?;
            ScenarioConfig::from_json_str(&text)
                .map_err(|e| CommandError::Validation(format!("{}: {e}", p.display())))?
        }
        None => default_scenario_with_seed(seed.unwrap_or(0)),
    };
    if let (Some(s), Some(_)) = (seed, path) {
        cfg.seed = s;
    }
    let report = validate_scenario(&cfg);
    if !report.is_ok() {
        return Err(CommandError::Validation(format!("scenario invalid:\n{report}")));
    }
    Ok(cfg)
}

/// RL policies act on slice-level state, so every rotation group must hold
/// exactly one UE per slice.
fn check_rl_grouping(cfg: &ScenarioConfig) -> Result<(), CommandError> {
    let gc = cfg.group_count();
    let ok = cfg.group_size == 3
        && SLICE_KINDS
            .iter()
            .all(|k| cfg.ues.iter().filter(|u| u.slice == *k).count() as u32 == gc);
    if ok {
        Ok(())
    } else {
        Err(CommandError::Validation(
            "RL policies need group_size 3 and equal per-slice UE counts".into(),
        ))
    }
}

fn ensure_out_dir(out: &Path) -> Result<(), CommandError> {
    std::fs::create_dir_all(out).map_err(|e| CommandError::from(Error::io(out, e)))
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), CommandError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CommandError::from(Error::json(path, e)))?;
    std::fs::write(path, text + "\n").map_err(|e| CommandError::from(Error::io(path, e)))
}

fn write_curve_csv(path: &Path, rows: &[UpdateStats]) -> Result<(), CommandError> {
    let mut csv = String::from("step,mean_reward,actor_loss,critic_loss,epsilon\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.mean_reward, r.actor_loss, r.critic_loss, r.epsilon
        ));
    }
    std::fs::write(path, csv).map_err(|e| CommandError::from(Error::io(path, e)))
}

fn write_channel_trace(path: &Path, rows: &[ChannelTraceRow]) -> Result<(), CommandError> {
    let mut csv = String::from("epoch,ue_id,distance_m,pathloss_db,snr_db,per_prb_rate_bps\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.ue_id, r.distance_m, r.pathloss_db, r.snr_db, r.per_prb_rate_bps
        ));
    }
    std::fs::write(path, csv).map_err(|e| CommandError::from(Error::io(path, e)))
}

/// Two-phase training: surrogate pre-training, then online epochs in the
/// full simulator. Writes checkpoint, KPI log, training curve and the
/// resolved config snapshot.
pub fn cmd_train(opts: &TrainOpts) -> Result<(), CommandError> {
    let cfg = load_scenario(opts.scenario.as_deref(), opts.seed)?;
    check_rl_grouping(&cfg)?;
    ensure_out_dir(&opts.out)?;

    let mut agent = match opts.agent.as_str() {
        "ppo" => Agent::Ppo(PpoAgent::new(PpoConfig::default(), cfg.seed)),
        "dqn" => Agent::Dqn(DqnAgent::new(DqnConfig::default(), cfg.total_prbs, cfg.seed)),
        other => {
            return Err(CommandError::Validation(format!(
                "unknown agent '{other}' (expected ppo or dqn)"
            )))
        }
    };
    let mut rng = rng_substream(cfg.seed, "exploration", 0);

    let mut curve: Vec<UpdateStats> = Vec::new();
    if opts.pretrain_steps > 0 {
        log::info!("pre-training for {} surrogate steps", opts.pretrain_steps);
        let mut env = SurrogateEnv::new(&cfg, EPISODE_LEN_EPOCHS);
        curve.extend(pretrain(&mut agent, &mut env, opts.pretrain_steps, &mut rng)?);
    }

    log::info!("online training for {} epochs", opts.epochs);
    let mut world = World::new(&cfg)?;
    world.log_latencies = opts.packet_latencies;
    let mut policy = Policy::Rl { agent, train: true };
    let outcome = run(&mut policy, &mut world, opts.epochs, &mut rng, opts.channel_trace)?;
    curve.extend(outcome.update_stats.iter().copied());

    let agent = match policy {
        Policy::Rl { agent, .. } => agent,
        _ => unreachable!(),
    };
    let header = LogHeader { v: 1, log: "kpi".into(), policy: agent.kind().into(), seed: cfg.seed };
    write_kpi_log(&header, &outcome.reports, &opts.out.join("kpi.ndjson"))?;
    write_json_pretty(&opts.out.join("checkpoint.json"), &agent.to_checkpoint())?;
    write_curve_csv(&opts.out.join("curve.csv"), &curve)?;
    if opts.channel_trace {
        write_channel_trace(&opts.out.join("channel_trace.csv"), &outcome.channel_trace)?;
    }
    write_json_pretty(
        &opts.out.join("config.json"),
        &ResolvedConfig {
            command: "train",
            policy: agent.kind(),
            seed: cfg.seed,
            epochs: opts.epochs,
            pretrain_steps: Some(opts.pretrain_steps),
            episode_len_epochs: EPISODE_LEN_EPOCHS,
            packet_latencies: opts.packet_latencies,
            scenario: &cfg,
        },
    )?;
    Ok(())
}

fn load_agent_checkpoint(path: &Path, expect_kind: &str) -> Result<Agent, CommandError> {
    let text = std::fs::read_to_string(path).map_err(|e| CommandError::from(Error::io(path, e)))?;
    let ckpt: AgentCheckpoint = serde_json::from_str(&text)
        .map_err(|e| CommandError::Validation(format!("{}: {e}", path.display())))?;
    if ckpt.agent != expect_kind {
        return Err(CommandError::Validation(format!(
            "checkpoint holds a {} agent, --policy asked for {expect_kind}",
            ckpt.agent
        )));
    }
    Ok(Agent::from_checkpoint(ckpt)?)
}

fn parse_policy(spec: &str) -> Result<(String, Option<PathBuf>), CommandError> {
    match spec {
        "equal" | "prop" | "prealloc" | "pf" => Ok((spec.to_string(), None)),
        other => match other.split_once(':') {
            Some((kind @ ("ppo" | "dqn"), path)) if !path.is_empty() => {
                Ok((kind.to_string(), Some(PathBuf::from(path))))
            }
            _ => Err(CommandError::Validation(format!(
                "unknown policy '{other}' (expected equal|prop|prealloc|pf|ppo:CKPT|dqn:CKPT)"
            ))),
        },
    }
}

/// Evaluation run: no learning, deterministic agent actions, KPI log out.
pub fn cmd_run(opts: &RunOpts) -> Result<(), CommandError> {
    let cfg = load_scenario(opts.scenario.as_deref(), opts.seed)?;
    let (kind, ckpt_path) = parse_policy(&opts.policy)?;
    let mut policy = match kind.as_str() {
        "equal" => Policy::Equal,
        "prop" => Policy::Proportional,
        "prealloc" => Policy::Preallocated,
        "pf" => Policy::Pf(PfState::default()),
        rl => {
            check_rl_grouping(&cfg)?;
            let agent = load_agent_checkpoint(ckpt_path.as_deref().unwrap(), rl)?;
            Policy::Rl { agent, train: false }
        }
    };
    ensure_out_dir(&opts.out)?;
    let mut world = World::new(&cfg)?;
    world.log_latencies = opts.packet_latencies;
    let mut rng = rng_substream(cfg.seed, "exploration", 0);
    let outcome = run(&mut policy, &mut world, opts.epochs, &mut rng, opts.channel_trace)?;

    let header =
        LogHeader { v: 1, log: "kpi".into(), policy: policy.name().into(), seed: cfg.seed };
    write_kpi_log(&header, &outcome.reports, &opts.out.join("kpi.ndjson"))?;
    if opts.channel_trace {
        write_channel_trace(&opts.out.join("channel_trace.csv"), &outcome.channel_trace)?;
    }
    write_json_pretty(
        &opts.out.join("config.json"),
        &ResolvedConfig {
            command: "run",
            policy: policy.name(),
            seed: cfg.seed,
            epochs: opts.epochs,
            pretrain_steps: None,
            episode_len_epochs: EPISODE_LEN_EPOCHS,
            packet_latencies: opts.packet_latencies,
            scenario: &cfg,
        },
    )?;
    Ok(())
}

/// Build the CDF comparison from one KPI log per policy.
pub fn cmd_report(opts: &ReportOpts) -> Result<(), CommandError> {
    if opts.inputs.is_empty() {
        return Err(CommandError::Validation("report needs at least one input log".into()));
    }
    let mut policies: Vec<PolicyMetrics> = Vec::new();
    let mut seen_names: Vec<String> = Vec::new();
    let mut malformed_total = 0usize;
    for (idx, path) in opts.inputs.iter().enumerate() {
        let (header, reports, malformed) = crate::control_loop::read_kpi_log(path)?;
        for m in &malformed {
            log::warn!("{}:{}: malformed log line: {}", path.display(), m.line_number, m.message);
            eprintln!("warning: {}:{}: malformed log line", path.display(), m.line_number);
        }
        malformed_total += malformed.len();
        let mut name = header.policy.clone();
        if seen_names.contains(&name) {
            name = format!("{name}#{}", idx + 1);
            log::warn!("duplicate policy name '{}'; using '{name}'", header.policy);
            eprintln!("warning: duplicate policy name '{}'; using '{name}'", header.policy);
        }
        seen_names.push(name.clone());
        policies.push(PolicyMetrics::from_reports(&name, &reports));
    }
    emit_report(&policies, &opts.out)?;
    if malformed_total > 0 {
        return Err(CommandError::Validation(format!(
            "{malformed_total} malformed log line(s) skipped"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_spec_parsing() {
        assert!(parse_policy("equal").is_ok());
        assert!(parse_policy("pf").is_ok());
        let (kind, path) = parse_policy("ppo:out/checkpoint.json").unwrap();
        assert_eq!(kind, "ppo");
        assert_eq!(path.unwrap(), PathBuf::from("out/checkpoint.json"));
        assert!(parse_policy("bogus").is_err());
        assert!(parse_policy("ppo:").is_err());
    }

    #[test]
    fn config_default_emits_valid_scenario() {
        let mut buf = Vec::new();
        cmd_config_default(3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cfg = ScenarioConfig::from_json_str(&text).unwrap();
        assert!(validate_scenario(&cfg).is_ok());
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn scenario_seed_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        let cfg = default_scenario_with_seed(1);
        std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
        let loaded = load_scenario(Some(&path), Some(9)).unwrap();
        assert_eq!(loaded.seed, 9);
        // Roster data from the file is kept as-is.
        assert_eq!(loaded.ues, cfg.ues);
    }

    #[test]
    fn missing_checkpoint_is_a_validation_error() {
        let err = cmd_run(&RunOpts {
            policy: "ppo:/nonexistent/checkpoint.json".into(),
            scenario: None,
            seed: Some(0),
            epochs: 1,
            out: tempfile::tempdir().unwrap().path().join("out"),
            packet_latencies: true,
            channel_trace: false,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
