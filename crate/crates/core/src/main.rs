use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rlfuzz::campaign::{pretrain, run_campaign, save_pretrained, AgentKind, Report, SeedBank};
use rlfuzz::config::{RunConfig, Target};
use rlfuzz::corpus::read_seed_file;
use rlfuzz::corpus::builtin::xss_seeds;
use rlfuzz::environment::{crawl, fixture_db, EmbeddedSite, HttpSource};

/// Reinforcement-learning mutation fuzzer for SQL injection and XSS.
///
/// Settings come from built-in defaults, then the --config file, then
/// --set overrides and the dedicated flags. Log verbosity follows RUST_LOG.
#[derive(Parser)]
#[command(name = "rlfuzz", version)]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set campaign.max_mutations=4. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// RNG seed for the campaign and pretraining.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the encoder on a payload corpus and write a checkpoint.
    Pretrain {
        /// SQL injection payloads, one per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Markup payloads, one per line. Defaults to the built-in set.
        #[arg(long)]
        xss: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// List the injection points reachable from a target.
    Crawl {
        /// `embedded`, `embedded:app` or an http(s) URL. Defaults to the config's target.
        #[arg(long)]
        target: Option<String>,
    },
    /// Run a fuzzing campaign. Exits 0 when something was found, 1 when not.
    Fuzz(FuzzArgs),
    /// Summarize a report file.
    Report {
        path: PathBuf,
    },
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long)]
    target: Option<String>,
    /// Pretrained checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Where to write the report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where to write the per-candidate event log.
    #[arg(long)]
    events: Option<PathBuf>,
    /// ppo, dqn, random or generator.
    #[arg(long)]
    agent: Option<AgentKind>,
    /// Candidates to generate before stopping.
    #[arg(long)]
    budget: Option<usize>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Pick seeds round-robin instead of by Thompson sampling.
    #[arg(long)]
    no_bandit: bool,
    /// Start from untrained weights.
    #[arg(long)]
    no_pretrain: bool,
    /// Reward 1 for an attack and 0 otherwise.
    #[arg(long)]
    no_shaping: bool,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn load(cli: &Cli, extra: Vec<String>) -> Result<RunConfig, ExitCode> {
    let mut overrides = cli.overrides.clone();
    overrides.extend(extra);
    if let Some(s) = cli.seed {
        overrides.push(format!("campaign.seed={s}"));
        overrides.push(format!("campaign.pretraining.seed={s}"));
    }
    RunConfig::load(cli.config.as_deref(), &overrides).map_err(fail)
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn cmd_pretrain(cli: &Cli, corpus: &Path, xss: Option<&Path>, out: &Path) -> Result<ExitCode, ExitCode> {
    let cfg = load(cli, Vec::new())?;
    let sqli = read_seed_file(corpus).map_err(|e| fail(format!("{}: {e}", corpus.display())))?;
    let xss = match xss {
        Some(p) => read_seed_file(p).map_err(|e| fail(format!("{}: {e}", p.display())))?,
        None => xss_seeds(),
    };
    let bank = SeedBank::build(&sqli, &xss, fixture_db().schema(), cfg.campaign.ngram_threshold).map_err(fail)?;
    let p = pretrain(&bank, &cfg.campaign).map_err(fail)?;
    for (i, l) in p.report.iter().flat_map(|r| &r.epoch_losses).enumerate() {
        println!("epoch {} loss {l:.6}", i + 1);
    }
    save_pretrained(out, &p).map_err(fail)?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_crawl(cli: &Cli, target: Option<&str>) -> Result<ExitCode, ExitCode> {
    let extra = target.map(|t| vec![format!("target={}", quoted(t))]).unwrap_or_default();
    let cfg = load(cli, extra)?;
    let points = match cfg.target().map_err(fail)? {
        Target::Embedded(apps) => {
            let mut site = EmbeddedSite::new();
            let ids = if apps.is_empty() { site.app_ids() } else { apps };
            let mut all = Vec::new();
            for id in ids {
                all.extend(crawl(&mut site, &format!("embedded://{id}/"), &cfg.crawl).map_err(fail)?);
            }
            all
        }
        Target::Http(url) => {
            let mut source = HttpSource::new(cfg.http.clone()).map_err(fail)?;
            crawl(&mut source, &url, &cfg.crawl).map_err(fail)?
        }
    };
    for p in &points {
        let url = p.target.as_ref().map(|t| format!("{} {}", t.method.to_uppercase(), t.url)).unwrap_or_default();
        println!("{}\t{}\t{url}", p.id(), serde_json::to_value(p.context).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_fuzz(cli: &Cli, a: &FuzzArgs) -> Result<ExitCode, ExitCode> {
    let mut extra = Vec::new();
    if let Some(t) = &a.target {
        extra.push(format!("target={}", quoted(t)));
    }
    if let Some(p) = &a.checkpoint {
        extra.push(format!("checkpoint={}", quoted(&p.to_string_lossy())));
    }
    if let Some(p) = &a.report {
        extra.push(format!("report={}", quoted(&p.to_string_lossy())));
    }
    if let Some(p) = &a.events {
        extra.push(format!("events={}", quoted(&p.to_string_lossy())));
    }
    if let Some(k) = a.agent {
        extra.push(format!("campaign.agent={}", quoted(&serde_json::to_value(k).expect("agent kind").as_str().unwrap_or("ppo").to_string())));
    }
    if let Some(b) = a.budget {
        extra.push(format!("campaign.max_candidates={b}"));
    }
    if let Some(t) = a.timeout {
        extra.push(format!("campaign.timeout_secs={t:?}"));
    }
    for (flag, key) in [(a.no_bandit, "bandit"), (a.no_pretrain, "pretrain"), (a.no_shaping, "shaped_rewards")] {
        if flag {
            extra.push(format!("campaign.{key}=false"));
        }
    }
    let cfg = load(cli, extra)?;
    let (bank, points, env, checkpoint) = cfg.prepare().map_err(fail)?;
    let events = match &cfg.events {
        Some(p) => Some(Box::new(BufWriter::new(File::create(p).map_err(|e| fail(format!("{}: {e}", p.display())))?)) as Box<dyn std::io::Write>),
        None => None,
    };
    let out = run_campaign(&cfg.campaign, bank, points, env, checkpoint, events).map_err(fail)?;
    match &cfg.report {
        Some(p) => std::fs::write(p, out.report.render()).map_err(|e| fail(format!("{}: {e}", p.display())))?,
        None => print!("{}", out.report.render()),
    }
    eprint!("{}", out.report.summary());
    Ok(if out.metrics.vulnerabilities_found > 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_report(path: &Path) -> Result<ExitCode, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
    let report = Report::parse(&text).map_err(fail)?;
    print!("{}", report.summary());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Pretrain { corpus, xss, out } => cmd_pretrain(&cli, corpus, xss.as_deref(), out),
        Command::Crawl { target } => cmd_crawl(&cli, target.as_deref()),
        Command::Fuzz(a) => cmd_fuzz(&cli, a),
        Command::Report { path } => cmd_report(path),
    };
    result.unwrap_or_else(|code| code)
}
