use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use rmb_core::bench::{evaluate, BenchReport, PolicyAgent, ReportEntry};
use rmb_core::collect::{collect_dataset, CommandSource, KeyboardSource, ScriptedSource};
use rmb_core::datastore::{validate, Dataset};
use rmb_core::env::{make_env, make_env_with_spec};
use rmb_core::gateway::{default_data_root, serve, ServerConfig};
use rmb_core::policies::{train, PolicyConfig, PolicyKind, PolicyModel};

#[derive(Parser)]
#[command(name = "rmb", version, about = "Collect demonstrations, train imitation policies and benchmark them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Scripted,
    Keyboard,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Bc,
    Act,
    Diffusion,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Bc => PolicyKind::Bc,
            PolicyArg::Act => PolicyKind::ActLite,
            PolicyArg::Diffusion => PolicyKind::DiffusionLite,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Record demonstrations into a new dataset directory.
    Collect {
        #[arg(long)]
        env: String,
        #[arg(long, value_enum, default_value = "scripted")]
        source: SourceArg,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to `$RMB_DATA_DIR/<env>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a policy on the successful episodes of a dataset.
    Train {
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        chunk: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a model over consecutive seeds and write a report.
    Rollout {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 60)]
        episodes: usize,
        #[arg(long, default_value_t = rmb_core::bench::EVAL_BASE_SEED)]
        seed: u64,
        /// JSON report path; a markdown table is written next to it.
        #[arg(long)]
        report: PathBuf,
        /// Exit with status 1 when the success rate is below this value.
        #[arg(long)]
        min_success: Option<f64>,
    },
    /// Inspect or check a dataset.
    Dataset {
        #[command(subcommand)]
        action: DatasetCommand,
    },
    /// Run the websocket teleoperation service.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        env: String,
        /// Defaults to `$RMB_DATA_DIR`.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Print the manifest summary.
    Info { path: PathBuf },
    /// Check every episode file; exits 1 on any failure.
    Validate { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Collect { env, source, episodes, seed, out } => {
            let out = out.unwrap_or_else(|| default_data_root().join(&env));
            let environment = make_env(&env)?;
            let (mut src, name): (Box<dyn CommandSource>, &str) = match source {
                SourceArg::Scripted => (Box::new(ScriptedSource::new()), "scripted"),
                SourceArg::Keyboard => (Box::new(KeyboardSource::new()), "keyboard"),
            };
            let config = json!({
                "command": "collect",
                "env": env,
                "source": name,
                "episodes": episodes,
                "seed": seed,
                "out": out.display().to_string(),
                "version": env!("CARGO_PKG_VERSION"),
            });
            let ds = collect_dataset(environment, src.as_mut(), episodes, seed, &out, config)?;
            let ok = ds.successful().count();
            println!("wrote {} episodes ({ok} successful) to {}", ds.len(), out.display());
        }
        Command::Train { policy, dataset, out, epochs, chunk, seed } => {
            let defaults = PolicyConfig::default();
            let config = PolicyConfig {
                epochs: epochs.unwrap_or(defaults.epochs),
                chunk: chunk.unwrap_or(defaults.chunk),
                seed: seed.unwrap_or(defaults.seed),
                ..defaults
            };
            let mut ds = Dataset::open(&dataset).with_context(|| format!("opening dataset {}", dataset.display()))?;
            let kind = PolicyKind::from(policy);
            let mut model = train(kind, &config, &mut ds)?;
            if let serde_json::Value::Object(m) = &mut model.training {
                m.insert("command".into(), json!("train"));
                m.insert("out".into(), json!(out.display().to_string()));
                m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
            }
            model.save(&out)?;
            let loss = model.training["epoch_loss"].as_array().and_then(|l| l.last().cloned()).unwrap_or_default();
            println!("trained {kind} on {} ({} episodes), final loss {loss}; saved {}", dataset.display(), model.training["episodes"], out.display());
        }
        Command::Rollout { model, episodes, seed, report, min_success } => {
            let m = PolicyModel::load(&model).with_context(|| format!("loading model {}", model.display()))?;
            let task = m.env_spec.env_id.clone();
            let mut env = make_env_with_spec(m.env_spec.clone())?;
            let mut agent = PolicyAgent::new(m);
            let (summary, results) = evaluate(&mut env, &mut agent, episodes, seed)?;
            let bench = BenchReport {
                entries: vec![ReportEntry {
                    policy: agent.model.kind.name().to_string(),
                    task,
                    report: summary.clone(),
                    base_seed: seed,
                    trace_hashes: results.iter().map(|r| r.trace_hash).collect(),
                }],
                config: json!({
                    "command": "rollout",
                    "model": model.display().to_string(),
                    "episodes": episodes,
                    "seed": seed,
                    "min_success": min_success,
                    "outcomes": results,
                    "version": env!("CARGO_PKG_VERSION"),
                }),
            };
            write_report(&bench, &report)?;
            print!("{}", bench.to_markdown());
            if let Some(min) = min_success {
                if summary.mean < min {
                    eprintln!("success rate {:.3} below --min-success {min}", summary.mean);
                    return Ok(ExitCode::from(1));
                }
            }
        }
        Command::Dataset { action: DatasetCommand::Info { path } } => {
            let ds = Dataset::open(&path)?;
            let steps: usize = ds.episodes.iter().map(|e| e.length).sum();
            let info = json!({
                "env_id": ds.env_spec.env_id,
                "episodes": ds.len(),
                "successful": ds.successful().count(),
                "steps": steps,
                "action_dim": ds.env_spec.action_dim,
                "channels": ds.env_spec.observation_channels.iter().map(|c| &c.name).collect::<Vec<_>>(),
                "config": ds.config,
            });
            println!("{}", serde_json::to_string_pretty(&info)?);
        }
        Command::Dataset { action: DatasetCommand::Validate { path } } => {
            let files = episode_files(&path)?;
            let mut bad = 0;
            for f in &files {
                let r = validate(f);
                if r.is_ok() {
                    println!("ok   {} ({} steps)", f.display(), r.length);
                } else {
                    bad += 1;
                    println!("FAIL {}", f.display());
                    for failure in &r.failures {
                        println!("     {failure}");
                    }
                }
            }
            println!("{} files, {bad} failed", files.len());
            if bad > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Serve { port, env, data_dir } => {
            let data_root = data_dir.unwrap_or_else(default_data_root);
            let handle = serve(ServerConfig::new(port, &env, data_root.clone()))?;
            eprintln!("serving {env} on ws://{} (recordings under {})", handle.addr, data_root.join("web").display());
            handle.wait();
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_report(report: &BenchReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, report.to_json())?;
    std::fs::write(path.with_extension("md"), report.to_markdown())?;
    Ok(())
}

/// A single `.rmbe` file, or every episode file of a dataset directory.
fn episode_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let dir = if path.join("episodes").is_dir() { path.join("episodes") } else { path.to_path_buf() };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rmbe"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no episode files under {}", path.display());
    }
    Ok(files)
}
