//! `goalreach` command-line driver: train, refine, eval, export.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use goalreach::artifact::{PolicyArtifact, RefineProvenance};
use goalreach::config::{RunConfig, Stream};
use goalreach::evaluation::export::{self, CsvHeader};
use goalreach::evaluation::{self, EpisodeRecord, Policy, SliceSelect};
use goalreach::learner::{train, UpdateRule};
use goalreach::stabilizer::refine_from;
use goalreach::stabilizer::CriticState;
use goalreach::Error;

#[derive(Parser, Debug)]
#[command(name = "goalreach", version, about = "Goal-reaching RL with a Lyapunov-like stabilizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the benchmark policy.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        rule: Option<UpdateRule>,
    },
    /// Refine a stabilizer critic on top of a benchmark artifact.
    Refine {
        /// Benchmark artifact produced by `train`.
        benchmark: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long = "nu-bar")]
        nu_bar: Option<f64>,
    },
    /// Matched-goal evaluation of one or more artifacts.
    Eval {
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        goals: Option<usize>,
        #[arg(long, value_enum, default_value_t = Mode::Static)]
        mode: Mode,
        #[arg(long = "export-heatmaps")]
        export_heatmaps: bool,
        #[arg(long = "export-trajectories")]
        export_trajectories: bool,
    },
    /// Print a human-readable summary of an artifact.
    Export { artifact: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Static,
    Moving,
}

/// Exit codes: 1 config, 2 artifact, 3 runtime.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: Error,
}

impl Failure {
    fn config(error: Error) -> Self {
        Self { code: 1, error }
    }

    fn artifact(error: Error) -> Self {
        Self { code: 2, error }
    }

    fn runtime(error: Error) -> Self {
        Self { code: 3, error }
    }
}

type Outcome<T> = Result<T, Failure>;

fn load_config(common: &Common, fallback: Option<&RunConfig>) -> Outcome<RunConfig> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => RunConfig::load(path).map_err(Failure::config)?,
        (None, Some(cfg)) => RunConfig { out: RunConfig::default().out, ..cfg.clone() },
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn load_artifact(path: &Path) -> Outcome<PolicyArtifact> {
    PolicyArtifact::load(path).map_err(|e| match e {
        Error::Io(io) => Failure::artifact(Error::Artifact(format!("{}: {io}", path.display()))),
        other => Failure::artifact(other),
    })
}

fn create(dir: &Path, name: &str) -> Outcome<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Failure::runtime(Error::Io(e)))
}

fn prepare_out(cfg: &RunConfig) -> Outcome<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| Failure::runtime(Error::Io(e)))?;
    let text = cfg.to_toml().map_err(Failure::config)?;
    fs::write(cfg.out.join("config.toml"), text).map_err(|e| Failure::runtime(Error::Io(e)))
}

fn header(cfg: &RunConfig) -> CsvHeader {
    CsvHeader::new(cfg.seed, cfg.hash())
}

fn cmd_train(common: &Common, episodes: Option<usize>, rule: Option<UpdateRule>) -> Outcome<()> {
    let mut cfg = load_config(common, None)?;
    if let Some(n) = episodes {
        cfg.benchmark.episodes = n;
    }
    if let Some(r) = rule {
        cfg.benchmark.rule = r;
    }
    cfg.validate().map_err(Failure::config)?;
    prepare_out(&cfg)?;
    let env = cfg.env();
    let (q, log) = train(&env, &cfg.train(), &mut cfg.rng(Stream::Train));
    let artifact = PolicyArtifact::benchmark(&cfg, q);
    let path = cfg.out.join("benchmark.json");
    artifact.save(&path).map_err(Failure::runtime)?;
    export::write_train_log(create(&cfg.out, "train_log.csv")?, &header(&cfg), &log).map_err(Failure::runtime)?;
    let goals = log.iter().filter(|r| r.outcome == goalreach::kinematics::Outcome::Goal).count();
    println!("trained {} episodes ({} reached the goal)", log.len(), goals);
    println!("artifact {} sha256={}", path.display(), artifact.digest().map_err(Failure::runtime)?);
    Ok(())
}

fn cmd_refine(path: &Path, common: &Common, episodes: Option<usize>, nu_bar: Option<f64>) -> Outcome<()> {
    let bench = load_artifact(path)?;
    let mut cfg = load_config(common, Some(&bench.config))?;
    if let Some(n) = episodes {
        cfg.stabilizer.episodes = n;
    }
    if let Some(nu) = nu_bar {
        cfg.stabilizer.nu_bar = nu;
    }
    cfg.validate().map_err(Failure::config)?;
    let env = cfg.env();
    bench.check_space(&env).map_err(Failure::artifact)?;
    prepare_out(&cfg)?;
    let params = cfg.stabilizer();
    let empty = bench.q_table.nonzero_count() == 0;
    if empty {
        eprintln!("warning: benchmark table is empty; fallback reproduces an untrained policy");
    }
    let critic = CriticState::pessimistic(&env.binning, env.n_actions(), &params);
    let (critic, ledger) =
        refine_from(critic, &env, &bench.q_table, &params, &mut cfg.rng(Stream::Refine)).map_err(Failure::runtime)?;
    export::write_refine_log(create(&cfg.out, "refine_log.csv")?, &header(&cfg), &ledger).map_err(Failure::runtime)?;
    let accepted: u64 = ledger.iter().map(|r| r.audit.accepted).sum();
    let fallbacks: u64 = ledger.iter().map(|r| r.audit.fallbacks).sum();
    let provenance = RefineProvenance {
        episodes: params.episodes,
        nu_bar: params.nu_bar,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        empty_benchmark: empty,
    };
    // the table keeps its training provenance; the embedded config becomes the one refinement ran under
    let artifact = PolicyArtifact { config: RunConfig { out: Default::default(), ..cfg.clone() }, ..bench }
        .with_critic(&critic, params, ledger, provenance);
    let out = cfg.out.join("stabilizer.json");
    artifact.save(&out).map_err(Failure::runtime)?;
    println!("refined {} episodes: {accepted} accepted updates, {fallbacks} fallback steps (nu_bar={})", params.episodes, params.nu_bar);
    println!("artifact {} sha256={}", out.display(), artifact.digest().map_err(Failure::runtime)?);
    Ok(())
}

struct Loaded {
    label: String,
    artifact: PolicyArtifact,
    critic: Option<(CriticState, goalreach::stabilizer::StabilizerParams)>,
}

impl Loaded {
    fn provenance(&self) -> String {
        let p = &self.artifact.provenance;
        let mut line = format!(
            "{}: rule={} episodes={} seed={} config_hash={}",
            self.label, p.rule, p.episodes, p.seed, p.config_hash
        );
        if let Some(c) = &self.artifact.critic {
            let r = &c.provenance;
            line += &format!(" refine_episodes={} nu_bar={} refine_seed={} refine_config_hash={}", r.episodes, r.nu_bar, r.seed, r.config_hash);
        }
        line
    }

    fn policy(&self) -> Policy<'_> {
        match &self.critic {
            None => Policy::Benchmark(&self.artifact.q_table),
            Some((critic, params)) => Policy::Stabilized { benchmark: &self.artifact.q_table, critic, params },
        }
    }
}

fn label_policies(artifacts: Vec<PolicyArtifact>) -> Outcome<Vec<Loaded>> {
    let mut loaded = Vec::with_capacity(artifacts.len());
    for (i, artifact) in artifacts.into_iter().enumerate() {
        let critic = artifact.critic_state().map_err(Failure::artifact)?;
        let base = if critic.is_some() { "Stabilizer" } else { "Benchmark RL" };
        let mut label = base.to_string();
        if loaded.iter().any(|l: &Loaded| l.label == label) {
            label = format!("{base} #{}", i + 1);
        }
        loaded.push(Loaded { label, artifact, critic });
    }
    Ok(loaded)
}

fn cmd_eval(paths: &[PathBuf], common: &Common, goals: Option<usize>, mode: Mode, heatmaps: bool, trajectories: bool) -> Outcome<()> {
    let artifacts = paths.iter().map(|p| load_artifact(p)).collect::<Outcome<Vec<_>>>()?;
    let mut cfg = load_config(common, Some(&artifacts[0].config))?;
    if let Some(n) = goals {
        match mode {
            Mode::Static => cfg.eval.goals = n,
            Mode::Moving => cfg.eval.moving_goals = n,
        }
    }
    cfg.validate().map_err(Failure::config)?;
    let env = cfg.env();
    for a in &artifacts {
        a.check_space(&env).map_err(Failure::artifact)?;
    }
    let loaded = label_policies(artifacts)?;
    prepare_out(&cfg)?;
    let hdr = header(&cfg);

    let runs: Vec<Vec<EpisodeRecord>> = match mode {
        Mode::Static => {
            let ws = env.limits.workspace;
            let goal_list =
                evaluation::sample_goals(cfg.eval.goals, &ws, &env.start, env.start_min_dist, &mut cfg.rng(Stream::Goals));
            let policies: Vec<_> = loaded.iter().map(Loaded::policy).collect();
            evaluation::run_matched(&goal_list, &policies, &env).map_err(Failure::runtime)?
        }
        Mode::Moving => loaded
            .iter()
            .map(|l| {
                let mut rng = cfg.rng(Stream::MovingGoal);
                evaluation::run_moving_goal_sequence(&l.policy(), cfg.eval.moving_goals, &env, &mut rng)
            })
            .collect::<Result<_, _>>()
            .map_err(Failure::runtime)?,
    };

    let labelled: Vec<(&str, &[EpisodeRecord])> = loaded.iter().zip(&runs).map(|(l, r)| (l.label.as_str(), r.as_slice())).collect();
    export::write_episodes(create(&cfg.out, "episodes.csv")?, &hdr, &labelled).map_err(Failure::runtime)?;
    if trajectories {
        export::write_trajectories(create(&cfg.out, "trajectories.csv")?, &hdr, &labelled).map_err(Failure::runtime)?;
    }

    let mut stats = Vec::new();
    for (label, records) in &labelled {
        if records.is_empty() {
            continue;
        }
        stats.push((*label, evaluation::aggregate(records).map_err(Failure::runtime)?));
    }
    let columns: Vec<_> = stats.iter().map(|(l, s)| (*l, s)).collect();
    let mut stats_hdr = hdr.clone();
    stats_hdr.notes = loaded.iter().map(Loaded::provenance).collect();
    export::write_stats(create(&cfg.out, "stats.csv")?, &stats_hdr, &columns).map_err(Failure::runtime)?;

    for (label, s) in &stats {
        let ratio = s.fallback_ratio_mean.map_or_else(String::new, |r| format!(", fallbacks/steps {r:.3}"));
        println!(
            "{label}: success {:.1}%, timeout {:.1}%, out of bounds {:.1}%{ratio}",
            s.success_pct, s.timeout_pct, s.oob_pct
        );
    }
    if mode == Mode::Static && runs.len() == 2 {
        let t = evaluation::paired_success_test(&runs[0], &runs[1]).map_err(Failure::runtime)?;
        println!(
            "paired: {} vs {}: diff {:+.1} pp (one-sided 95% lower bound {:+.1} pp), z = {:.2}",
            labelled[1].0, labelled[0].0, t.diff_pp, t.diff_lower_pp, t.z
        );
    }

    if heatmaps {
        let dir = cfg.out.join("heatmaps");
        fs::create_dir_all(&dir).map_err(|e| Failure::runtime(Error::Io(e)))?;
        let all: Vec<EpisodeRecord> = runs.iter().flatten().cloned().collect();
        let visits = evaluation::visitation_heatmap(&all, &env.binning, SliceSelect::Auto);
        export::write_heatmap(create(&dir, "visitation.csv")?, &hdr, &visits, true).map_err(Failure::runtime)?;
        for l in &loaded {
            if let Some((critic, _)) = &l.critic {
                let (bench, stab) = evaluation::cost_to_go_maps(&l.artifact.q_table, critic, &env.binning, visits.i_v, visits.i_omega);
                export::write_heatmap(create(&dir, "benchmark_cost.csv")?, &hdr, &bench, false).map_err(Failure::runtime)?;
                export::write_heatmap(create(&dir, "stabilizer_cost.csv")?, &hdr, &stab, false).map_err(Failure::runtime)?;
                break;
            }
        }
    }
    println!("wrote {}", cfg.out.display());
    Ok(())
}

fn cmd_export(path: &Path) -> Outcome<()> {
    let artifact = load_artifact(path)?;
    print!("{}", artifact.dump().map_err(Failure::artifact)?);
    Ok(())
}

fn run(cli: Cli) -> Outcome<()> {
    match &cli.command {
        Command::Train { common, episodes, rule } => cmd_train(common, *episodes, *rule),
        Command::Refine { benchmark, common, episodes, nu_bar } => cmd_refine(benchmark, common, *episodes, *nu_bar),
        Command::Eval { artifacts, common, goals, mode, export_heatmaps, export_trajectories } => {
            cmd_eval(artifacts, common, *goals, *mode, *export_heatmaps, *export_trajectories)
        }
        Command::Export { artifact } => cmd_export(artifact),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
