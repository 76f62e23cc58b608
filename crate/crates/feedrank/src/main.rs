use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use feedrank::config::{ConfigError, RunConfig};
use feedrank::pipeline::{self, baselines, evaluate_model, prepare, train_all, RunReport};
use feedrank_core::coldstart::cold_start_for_profile;
use feedrank_core::domain::{Dataset, UserId};
use feedrank_core::eval::EvalReport;
use feedrank_core::features::FeatureSet;
use feedrank_core::io::{
    parse_profile, read_dataset, read_survey, read_weights, write_dataset, write_survey, write_weights,
};
use feedrank_core::mf::{score_dh, score_e, score_hybrid, top_k, MfMode};
use feedrank_core::neumf::{checkpoint, AnyModel, GmfModel, MlpModel, ModelKind};
use feedrank_core::survey::{build_weight_table, WeightTable};
use feedrank_core::synth::{generate, generate_survey};
use feedrank_service::engine::EvalSummary;
use feedrank_service::{Engine, ServiceError};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "feedrank",
    version,
    about = "Hybrid demographic and engagement post recommender"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and survey.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive the demographic weight table from the survey.
    Weights {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the U1, P1, U2 and P2 feature matrices.
    Features {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Top-k feed for an existing user from the factorization scores.
    Recommend {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        user: u32,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// dh, e or hybrid.
        #[arg(long, default_value = "hybrid")]
        mode: MfMode,
    },
    /// Feed for a new user described only by demographics.
    Coldstart {
        #[arg(long)]
        data: PathBuf,
        /// JSON object such as {"age":"21-26","gender":"f",...}, or age=21-26,gender=f,...
        #[arg(long)]
        profile: String,
        /// Neighbours to blend; defaults to the configured value.
        #[arg(long)]
        k: Option<usize>,
        /// Divide by the total neighbour similarity.
        #[arg(long)]
        normalize: bool,
        /// Feed length.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Train a neural model on the leave-one-out training split.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// gmf, mlp or neumf (neumf pretrains and fuses the other two).
        #[arg(long, default_value = "neumf")]
        model: ModelKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-out HR@K and NDCG@K for checkpoints and the baselines.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "checkpoint", visible_alias = "models", num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, visible_alias = "report")]
        out: Option<PathBuf>,
    },
    /// Generate, train, evaluate and write the report.
    Pipeline {
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        data: PathBuf,
        /// Append-only event log; defaults to <data>/log.jsonl.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with = "port")]
        addr: Option<SocketAddr>,
        /// Listen on 127.0.0.1 at this port.
        #[arg(long)]
        port: Option<u16>,
        /// Directory of static web assets served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Pipeline report whose NeuMF HR/NDCG are exposed through the metrics endpoint.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] feedrank_core::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn code(&self) -> u8 {
        use feedrank_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Core(E::Io(_)) | CliError::Service(ServiceError::Io(_)) => 4,
            CliError::Core(E::Diverged { .. } | E::NonFinite(_)) => 6,
            CliError::Core(_) => 5,
            CliError::Service(_) => 7,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_json(v: &impl serde::Serialize) {
    emit(&(serde_json::to_string_pretty(v).expect("serializable") + "\n"));
}

/// Dataset plus weights, read from `weights.jsonl` or derived from `survey.jsonl`.
fn load_inputs(dir: &Path) -> CliResult<(Dataset, WeightTable)> {
    let ds = read_dataset(dir)?;
    let weights = dir.join("weights.jsonl");
    let table = if weights.exists() {
        read_weights(&weights, &ds.vocab)?
    } else {
        build_weight_table(&ds.vocab, &read_survey(&dir.join("survey.jsonl"), &ds.vocab)?)?
    };
    Ok((ds, table))
}

fn load_model(path: &Path) -> CliResult<AnyModel> {
    Ok(checkpoint::load(BufReader::new(
        File::open(path).map_err(feedrank_core::Error::from)?,
    ))?)
}

fn parse_profile_arg(s: &str) -> CliResult<BTreeMap<String, String>> {
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).map_err(|e| CliError::Usage(format!("profile: {e}")));
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            pair.split_once('=')
                .map(|(a, l)| (a.trim().to_string(), l.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("expected attribute=label, got `{pair}`")))
        })
        .collect()
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Generate { out } => {
            let ds = generate(&cfg.generator)?.dataset;
            write_dataset(&ds, &out)?;
            write_survey(&generate_survey(&cfg.generator)?, &ds.vocab, &out.join("survey.jsonl"))?;
            eprintln!(
                "wrote {} users, {} posts, {} events to {}",
                ds.users.len(),
                ds.posts.len(),
                ds.events.len(),
                out.display()
            );
        }
        Command::Weights { data, out } => {
            let ds = read_dataset(&data)?;
            let table = build_weight_table(&ds.vocab, &read_survey(&data.join("survey.jsonl"), &ds.vocab)?)?;
            let out = out.unwrap_or_else(|| data.join("weights.jsonl"));
            write_weights(&table, &ds.vocab, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Features { data, out } => {
            let (ds, table) = load_inputs(&data)?;
            let fs = FeatureSet::build(&ds.users, &ds.posts, &ds.events, &table, &cfg.engagement, &ds.vocab)?;
            std::fs::create_dir_all(&out).map_err(feedrank_core::Error::from)?;
            for (name, m) in [("u1", &fs.u1), ("p1", &fs.p1), ("u2", &fs.u2), ("p2", &fs.p2)] {
                let f = File::create(out.join(format!("{name}.bin"))).map_err(feedrank_core::Error::from)?;
                m.write_to(BufWriter::new(f))?;
            }
            eprintln!(
                "wrote {}x{} and {}x{} feature matrices to {}",
                fs.n_users(),
                fs.width(),
                fs.n_posts(),
                fs.width(),
                out.display()
            );
        }
        Command::Recommend { data, user, k, mode } => {
            let (ds, table) = load_inputs(&data)?;
            if user as usize >= ds.users.len() {
                return Err(CliError::Usage(format!("user {user} does not exist")));
            }
            let fs = FeatureSet::build(&ds.users, &ds.posts, &ds.events, &table, &cfg.engagement, &ds.vocab)?;
            let dh = score_dh(&fs.u1, &fs.p1)?;
            let e = score_e(&fs.u2, &fs.p2)?;
            let scores = match mode {
                MfMode::Dh => dh,
                MfMode::E => e,
                MfMode::Hybrid => score_hybrid(&dh, &e)?,
            };
            let own: Vec<bool> = ds.posts.iter().map(|p| p.author.0 == user).collect();
            let feed = top_k(scores.row(user as usize), user as usize, k, &own)?;
            print_json(&json!({
                "user_id": user,
                "cold": ds.is_cold(UserId(user)),
                "short": feed.short,
                "items": feed.items.iter().map(|(p, s)| json!({ "post_id": p, "score": s })).collect::<Vec<_>>(),
            }));
        }
        Command::Coldstart {
            data,
            profile,
            k,
            normalize,
            top,
        } => {
            let mut cs_cfg = cfg.cold_start.clone();
            cs_cfg.k = k.unwrap_or(cs_cfg.k);
            cs_cfg.normalize |= normalize;
            let (ds, table) = load_inputs(&data)?;
            let profile = parse_profile(&parse_profile_arg(&profile)?, &ds.vocab)?;
            let fs = FeatureSet::build(&ds.users, &ds.posts, &ds.events, &table, &cfg.engagement, &ds.vocab)?;
            let dhe = score_hybrid(&score_dh(&fs.u1, &fs.p1)?, &score_e(&fs.u2, &fs.p2)?)?;
            let weights = cs_cfg.resolve_weights(&table);
            let warm = ds
                .users
                .iter()
                .filter(|u| !ds.is_cold(u.id))
                .map(|u| (u.id, &u.profile));
            let cs = cold_start_for_profile(&profile, warm, &dhe, &weights, &cs_cfg)?;
            let feed = top_k(&cs.scores, usize::MAX, top, &vec![false; ds.posts.len()])?;
            print_json(&json!({
                "neighbours": cs.selection.neighbours.iter().map(|(u, s)| json!({ "user_id": u.0, "similarity": s })).collect::<Vec<_>>(),
                "items": feed.items.iter().map(|(p, s)| json!({ "post_id": p, "score": s })).collect::<Vec<_>>(),
            }));
        }
        Command::Train { data, model, out } => {
            let (ds, table) = load_inputs(&data)?;
            let (split, fs) = prepare(&ds, &table, &cfg)?;
            let observed = split.train.observed()?;
            let log = |name: &str, e: usize, l: f64| eprintln!("{name} epoch {e:>3} loss {l:.5}");
            let trained = match model {
                ModelKind::Gmf => {
                    let mut m = GmfModel::new(fs.width(), &cfg.latent)?;
                    feedrank_core::neumf::train_with(&mut m, &fs, &observed, &cfg.training, |e, l| log("gmf", e, l))?;
                    AnyModel::Gmf(m)
                }
                ModelKind::Mlp => {
                    let mut m = MlpModel::new(fs.width(), &cfg.latent)?;
                    feedrank_core::neumf::train_with(&mut m, &fs, &observed, &cfg.training, |e, l| log("mlp", e, l))?;
                    AnyModel::Mlp(m)
                }
                ModelKind::Neumf => {
                    AnyModel::Neumf(train_all(&fs, &split.train, &cfg.latent, &cfg.training, log)?.neumf)
                }
            };
            let f = File::create(&out).map_err(feedrank_core::Error::from)?;
            checkpoint::save_any(&trained, BufWriter::new(f))?;
            eprintln!("wrote {}", out.display());
        }
        Command::Evaluate { data, checkpoints, out } => {
            let (ds, table) = load_inputs(&data)?;
            let (split, fs) = prepare(&ds, &table, &cfg)?;
            let mut models = baselines(&split, &fs, &cfg.evaluation)?;
            for path in &checkpoints {
                let model = load_model(path)?;
                models.push(evaluate_model(
                    model.kind().name(),
                    &model,
                    &split,
                    &fs,
                    &cfg.evaluation,
                )?);
            }
            let report = EvalReport { models };
            emit(&report.table());
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&report).expect("serializable");
                std::fs::write(&out, json).map_err(feedrank_core::Error::from)?;
            }
        }
        Command::Pipeline { out, quiet } => {
            let progress = |name: &str, e: usize, l: f64| {
                if !quiet {
                    eprintln!("{name} epoch {e:>3} loss {l:.5}");
                }
            };
            let result = pipeline::run_pipeline(&cfg, progress)?;
            pipeline::write_outputs(&result, &out)?;
            emit(&result.report.text());
            eprintln!("wrote report, checkpoints and data to {}", out.display());
        }
        Command::Serve {
            data,
            log,
            checkpoint,
            addr,
            port,
            static_dir,
            report,
        } => {
            let (ds, table) = load_inputs(&data)?;
            let model = checkpoint.as_deref().map(load_model).transpose()?;
            let log = log.unwrap_or_else(|| data.join("log.jsonl"));
            let engine = Arc::new(Engine::open(ds, &log, table, model, cfg.engine_config())?);
            if let Some(path) = report {
                let text = std::fs::read_to_string(&path).map_err(feedrank_core::Error::from)?;
                let report: RunReport =
                    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let neumf = report.evaluation.get("neumf");
                engine.set_last_eval(neumf.map(|m| EvalSummary { hr: m.hr, ndcg: m.ndcg }));
            }
            let addr = match (addr, port) {
                (Some(a), _) => a,
                (None, Some(p)) => SocketAddr::from(([127, 0, 0, 1], p)),
                (None, None) => cfg
                    .serve
                    .addr
                    .parse()
                    .map_err(|e| CliError::Usage(format!("serve.addr: {e}")))?,
            };
            let static_dir = static_dir.or(cfg.serve.static_dir.clone());
            let rt = tokio::runtime::Runtime::new().map_err(ServiceError::from)?;
            rt.block_on(feedrank_service::http::serve(engine, addr, static_dir))
                .map_err(ServiceError::from)?;
        }
    }
    Ok(())
}
