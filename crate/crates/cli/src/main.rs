use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use semnav::agent::{AgentParams, Variant};
use semnav::config::RunConfig;
use semnav::env::NavWorld;
use semnav::episodes::{self, Episode, Selection};
use semnav::infer::{self, EvalPolicy, GoalMode, SupportSet};
use semnav::pipeline::{self, SceneManifest};
use semnav::semspace::Codebook;
use semnav::train::{self, ProgressRow, TrajectoryRow};
use semnav::world::SceneAssets;
use semnav::{io, par, seed};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nsemnav-core ",
    env!("CARGO_PKG_VERSION"),
    "\ntarget: ",
    env!("SEMNAV_BUILD_TARGET"),
    "\nprofile: ",
    env!("SEMNAV_BUILD_PROFILE")
);

/// Zero-shot instance navigation in a procedural gridworld.
#[derive(Debug, Parser)]
#[command(name = "semnav", version, long_version = LONG_VERSION)]
struct Cli {
    /// Run configuration (TOML); built-in defaults when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Use the small single-room preset instead of the defaults
    #[arg(long, global = true, conflicts_with = "config")]
    easy: bool,

    /// Overrides the configuration's seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 gives the reference single-thread schedule
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Default directory for outputs without an explicit --out
    #[arg(long, global = true, env = "SEMNAV_OUT_DIR", default_value = "runs")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scenes plus a manifest
    SceneGen {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate navigation episodes over a scene manifest
    Episodes(EpisodesArgs),
    /// Build a retrieval support set from episode goal views
    Support {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one agent variant with PPO
    Train(TrainArgs),
    /// Evaluate a checkpoint (or `oracle` / `random`) on episodes
    Eval(EvalArgs),
    /// Goal-distribution and gap-closure diagnostics
    Diagnose {
        #[command(subcommand)]
        what: Diagnose,
    },
}

#[derive(Debug, Args)]
struct EpisodesArgs {
    /// scene manifest file or its directory
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, value_enum, default_value_t = SelectArg::Entropy)]
    select: SelectArg,
    /// yaw headings per candidate circle (Ω)
    #[arg(long)]
    views: Option<u32>,
    /// pitch levels (P)
    #[arg(long)]
    pitch: Option<usize>,
    /// seed stream and id prefix of the generated episodes
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value = "psl")]
    variant: Variant,
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    /// overrides ppo.total_steps
    #[arg(long)]
    steps: Option<usize>,
    /// write a checkpoint every N update rounds (0 writes only the final one)
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    #[arg(long)]
    log_trajectories: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// checkpoint file, or `oracle` / `random` for scripted baselines
    #[arg(long)]
    ckpt: String,
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long, default_value = "image")]
    goal_mode: GoalMode,
    #[arg(long)]
    support_set: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Diagnose {
    /// Category histogram of selected goal views
    GoalDist {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean cosine of text and expanded goals to the image goal
    GapClosure {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        support_set: PathBuf,
        /// also dump every goal embedding to this JSONL file
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SelectArg {
    Entropy,
    Random,
}

impl From<SelectArg> for Selection {
    fn from(s: SelectArg) -> Self {
        match s {
            SelectArg::Entropy => Selection::Entropy,
            SelectArg::Random => Selection::Random,
        }
    }
}

/// A request the user has to fix; exits with status 1.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let threads = cli.threads;
    match par::with_threads(threads, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(exit_status(&e))
        }
    }
}

/// Joins the cause chain, skipping causes the previous message already shows.
fn render_error(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if text.ends_with(&msg) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&msg);
    }
    text
}

fn exit_status(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(semnav::Error::Config(_)) = cause.downcast_ref::<semnav::Error>() {
            return 1;
        }
    }
    2
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None if cli.easy => RunConfig::easy(),
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out_or = |out: &Option<PathBuf>, name: &str| out.clone().unwrap_or_else(|| cli.out_dir.join(name));
    match &cli.command {
        Command::SceneGen { count, out } => scene_gen(&cfg, *count, &out_or(out, "scenes")),
        Command::Episodes(args) => episodes_cmd(cfg, args, &out_or(&args.out, "episodes.json")),
        Command::Support { episodes, lambda, out } => {
            support_cmd(&cfg, episodes, *lambda, &out_or(out, "support.json"))
        }
        Command::Train(args) => train_cmd(cfg, args, &out_or(&args.out, "train")),
        Command::Eval(args) => eval_cmd(&cfg, args, &out_or(&args.out, "eval")),
        Command::Diagnose { what } => match what {
            Diagnose::GoalDist {
                episodes,
                threshold,
                out,
            } => goal_dist_cmd(&cfg, episodes, *threshold, &out_or(out, "goal_dist.csv")),
            Diagnose::GapClosure {
                episodes,
                support_set,
                dump,
            } => gap_closure_cmd(&cfg, episodes, support_set, dump.as_deref()),
        },
    }
}

fn scene_gen(cfg: &RunConfig, count: usize, out: &Path) -> Result<()> {
    let scenes = pipeline::generate_scenes(cfg, count)?;
    SceneManifest::write(out, cfg.seed, &scenes)?;
    println!("wrote {count} scenes to {}", out.display());
    Ok(())
}

fn load_world(cfg: &RunConfig, scenes: &Path) -> Result<(Codebook, Vec<SceneAssets>)> {
    let codebook = Codebook::build(&cfg.semspace)?;
    let (_, scenes) =
        SceneManifest::read(scenes).with_context(|| format!("loading scenes from {}", scenes.display()))?;
    let assets = pipeline::scene_assets(scenes, &codebook)?;
    Ok((codebook, assets))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        io::create_dir(dir)?;
    }
    Ok(())
}

fn episodes_cmd(mut cfg: RunConfig, args: &EpisodesArgs, out: &Path) -> Result<()> {
    cfg.episodes.selection = args.select.into();
    if let Some(v) = args.views {
        cfg.world.headings = v;
    }
    if let Some(p) = args.pitch {
        cfg.episodes.pitch_levels = p;
    }
    cfg.validate()?;
    let (codebook, scenes) = load_world(&cfg, &args.scenes)?;
    let eps = episodes::generate_episodes(
        &scenes,
        &codebook,
        &cfg.episodes,
        &cfg.world,
        args.count,
        seed::derive(cfg.seed, &format!("episodes/{}", args.split)),
        &args.split,
    )?;
    ensure_parent(out)?;
    episodes::save_episodes(out, &eps)?;
    let csv = sibling(out, "_goal_dist.csv");
    if !eps.is_empty() {
        let dist = episodes::goal_distribution_report(&eps, codebook.categories(), cfg.episodes.ambiguous_threshold)?;
        io::write_text(&csv, &dist.to_csv())?;
    }
    let mean = eps.iter().map(Episode::mean_goal_entropy).sum::<f64>() / eps.len().max(1) as f64;
    println!(
        "wrote {} episodes to {} (mean goal-view entropy {mean:.6})",
        eps.len(),
        out.display()
    );
    Ok(())
}

fn support_cmd(cfg: &RunConfig, episodes: &Path, lambda: Option<f64>, out: &Path) -> Result<()> {
    let eps = episodes::load_episodes(episodes)?;
    let lambda = lambda.unwrap_or(cfg.eval.support_lambda);
    let set = infer::build_support_set(&eps, lambda)?;
    ensure_parent(out)?;
    set.save(out)?;
    println!(
        "support set: {} vectors at lambda {lambda} -> {}",
        set.len(),
        out.display()
    );
    Ok(())
}

fn train_cmd(cfg: RunConfig, args: &TrainArgs, out: &Path) -> Result<()> {
    let mut cfg = pipeline::seeded(&cfg, args.variant, cfg.seed);
    if let Some(s) = args.steps {
        cfg.ppo.total_steps = s;
    }
    cfg.validate()?;
    let (codebook, scenes) = load_world(&cfg, &args.scenes)?;
    let eps = episodes::load_episodes(&args.episodes)?;
    let nav = NavWorld::new(&scenes, &codebook, &cfg.world, &cfg.reward);
    nav.check_episodes(&eps)?;
    io::create_dir(out)?;
    io::write_text(&out.join("config.toml"), &cfg.to_toml()?)?;

    let progress_path = out.join("progress.csv");
    let traj_path = out.join("trajectories.jsonl");
    let mut progress = format!("{}\n", train::PROGRESS_HEADER);
    io::write_text(&progress_path, &progress)?;
    if args.log_trajectories {
        io::write_text(&traj_path, "")?;
    }
    let mut last: Option<ProgressRow> = None;
    let every = args.checkpoint_every;
    let mut observer = |row: &ProgressRow, params: &AgentParams, traj: &[TrajectoryRow]| -> semnav::Result<()> {
        progress.push_str(&row.csv_line());
        progress.push('\n');
        io::write_text(&progress_path, &progress)?;
        if !traj.is_empty() {
            io::append_jsonl(&traj_path, traj)?;
        }
        if every > 0 && (row.round + 1).is_multiple_of(every) {
            params.save(&out.join(format!("ckpt_{:06}.json", row.round + 1)))?;
        }
        last = Some(row.clone());
        Ok(())
    };
    let mut params = AgentParams::new(&cfg.agent)?;
    let result = train::train(&mut params, &nav, &eps, &cfg.ppo, args.log_trajectories, &mut observer);
    if let Err(e) = result {
        if matches!(e, semnav::Error::NonFinite(_)) {
            let dump = out.join("nonfinite_dump.json");
            params.save(&dump)?;
            eprintln!("last good parameters written to {}", dump.display());
        }
        return Err(e.into());
    }
    let final_path = out.join("final.json");
    params.save(&final_path)?;
    match last {
        Some(r) => println!(
            "{}: {} steps, last-round SR {:.3}, mean return {:.3}, checkpoint {}",
            args.variant,
            r.step,
            r.success_rate,
            r.mean_return,
            final_path.display()
        ),
        None => println!(
            "{}: no update rounds run, checkpoint {}",
            args.variant,
            final_path.display()
        ),
    }
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, args: &EvalArgs, out: &Path) -> Result<()> {
    if args.goal_mode == GoalMode::TextExpanded && args.support_set.is_none() {
        return Err(usage(
            "--goal-mode text-expanded needs --support-set (build one with `semnav support`)",
        ));
    }
    let (codebook, scenes) = load_world(cfg, &args.scenes)?;
    let eps = episodes::load_episodes(&args.episodes)?;
    let set = args.support_set.as_deref().map(SupportSet::load).transpose()?;
    let params = match args.ckpt.as_str() {
        "oracle" | "random" => None,
        path => Some(AgentParams::load(Path::new(path))?),
    };
    let policy = match (&params, args.ckpt.as_str()) {
        (Some(p), _) => EvalPolicy::Agent(p),
        (None, "oracle") => EvalPolicy::Oracle,
        _ => EvalPolicy::RandomWalk,
    };
    let mut cfg = cfg.clone();
    if let Some(p) = &params {
        if p.config().embed_dim != cfg.semspace.dim {
            bail!(usage(format!(
                "checkpoint embed_dim {} does not match semspace.dim {}",
                p.config().embed_dim,
                cfg.semspace.dim
            )));
        }
        cfg.agent = p.config().clone();
    }
    let nav = NavWorld::new(&scenes, &codebook, &cfg.world, &cfg.reward);
    nav.check_episodes(&eps)?;
    let report = infer::evaluate(policy, &nav, &eps, args.goal_mode, set.as_ref(), &cfg.eval)?;
    io::create_dir(out)?;
    let csv = out.join(format!("eval_{}.csv", args.goal_mode));
    io::write_text(&csv, &report.to_csv())?;
    println!("{} -> {}", report.summary(), csv.display());
    Ok(())
}

fn goal_dist_cmd(cfg: &RunConfig, episodes: &Path, threshold: Option<f64>, out: &Path) -> Result<()> {
    let eps = episodes::load_episodes(episodes)?;
    let codebook = Codebook::build(&cfg.semspace)?;
    let threshold = threshold.unwrap_or(cfg.episodes.ambiguous_threshold);
    let dist = episodes::goal_distribution_report(&eps, codebook.categories(), threshold)?;
    ensure_parent(out)?;
    io::write_text(out, &dist.to_csv())?;
    print!("{}", dist.bar_chart(40));
    println!("ambiguous fraction {:.4}", dist.ambiguous_fraction());
    Ok(())
}

fn gap_closure_cmd(cfg: &RunConfig, episodes: &Path, support: &Path, dump: Option<&Path>) -> Result<()> {
    let eps = episodes::load_episodes(episodes)?;
    let codebook = Codebook::build(&cfg.semspace)?;
    let set = SupportSet::load(support)?;
    let gc = infer::gap_closure(&eps, &codebook, &set)?;
    if let Some(path) = dump {
        ensure_parent(path)?;
        io::write_jsonl(path, &infer::embedding_dump(&eps, &codebook, Some(&set))?)?;
    }
    println!(
        "episodes {} text {:.6} expanded {:.6} improvement {:+.6}",
        gc.episodes,
        gc.text_cosine,
        gc.expanded_cosine,
        gc.improvement()
    );
    Ok(())
}
