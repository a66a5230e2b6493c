//! `sensikit` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O, 2 invalid input, 3 run budget exceeded,
//! 4 design/evaluation/store mismatch, 5 model failure, 6 empty selection.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sensikit::design::{
    generate_morris_design, generate_saltelli_design, Design, MorrisConfig, SaltelliConfig,
    DEFAULT_LEVELS, DEFAULT_RUN_BUDGET, DEFAULT_SKIP,
};
use sensikit::effects::{
    aggregate_ee_measures, compute_elementary_effects, read_ee_report, screen_factors,
    write_ee_report, EffectScale, ScreeningRule,
};
use sensikit::evaluation::{EvaluationSet, RunStatus};
use sensikit::factors::FactorSet;
use sensikit::indices::{write_flat_csv, DEFAULT_BOOTSTRAP_REPS};
use sensikit::pipeline::{analyze_indices, staged_analysis, PipelineConfig, PipelineReport};
use sensikit::report::{ReportBuilder, ReportOptions, DEFAULT_BIN_WIDTH, DEFAULT_INTERACTION_GAP};
use sensikit::runner::external::read_input;
use sensikit::runner::metrics::MetricSpec;
use sensikit::runner::models::{ModelOutput, ModelRef, BUILTIN_CATALOG};
use sensikit::runner::{evaluate_design, RunOptions, DEFAULT_BATCH_SIZE};
use sensikit::{Error, Result};

#[derive(Parser)]
#[command(name = "sensikit", version, about = "Two-stage global sensitivity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a study design.
    #[command(subcommand)]
    Design(DesignCmd),
    /// Evaluate a design against a model.
    Run(RunArgs),
    /// Compute elementary-effect measures or Sobol indices.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Select factors from an elementary-effects report.
    Screen(ScreenArgs),
    /// Run the staged screening and variance analysis end to end.
    Pipeline(PipelineArgs),
    /// Build a report bundle from analysis outputs.
    Report(ReportArgs),
    /// Inspect or run built-in models.
    #[command(subcommand)]
    Models(ModelsCmd),
}

#[derive(Args)]
struct FactorsArg {
    /// Factor configuration file.
    #[arg(long, conflicts_with = "uniform")]
    factors: Option<PathBuf>,
    /// Use K factors x1..xK on [0, 1] instead of a configuration file.
    #[arg(long, value_name = "K")]
    uniform: Option<usize>,
}

impl FactorsArg {
    fn load(&self) -> Result<FactorSet> {
        match (&self.factors, self.uniform) {
            (Some(p), _) => FactorSet::from_path(p),
            (None, Some(k)) => FactorSet::uniform(k, 0.0, 1.0),
            (None, None) => Err(Error::Config("either --factors or --uniform is required".into())),
        }
    }
}

#[derive(Subcommand)]
enum DesignCmd {
    /// Randomized one-at-a-time trajectories.
    Morris {
        #[command(flatten)]
        factors: FactorsArg,
        #[arg(short = 'r', long, default_value_t = 10)]
        trajectories: usize,
        #[arg(short = 'p', long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RUN_BUDGET)]
        max_runs: u64,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Saltelli design on a Sobol sequence.
    Sobol {
        #[command(flatten)]
        factors: FactorsArg,
        #[arg(short = 'n', long)]
        n: usize,
        /// Include the blocks needed for second-order indices (default).
        #[arg(long, conflicts_with = "first_and_total_only")]
        second_order: bool,
        /// Omit second-order blocks: N(k+2) rows instead of N(2k+2).
        #[arg(long)]
        first_and_total_only: bool,
        #[arg(long, default_value_t = DEFAULT_SKIP)]
        skip: u64,
        #[arg(long, default_value_t = DEFAULT_RUN_BUDGET)]
        max_runs: u64,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunnerArgs {
    /// Model reference, e.g. builtin:ishigami or exec:./model.sh.
    #[arg(long)]
    model: String,
    /// Metric reduction for time-series models: name=kind:series:cutoff.
    #[arg(long = "metric")]
    metrics: Vec<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// Per-batch time limit for external models.
    #[arg(long)]
    timeout_secs: Option<f64>,
}

impl RunnerArgs {
    fn model(&self) -> Result<ModelRef> {
        self.model.parse()
    }

    fn metric_specs(&self) -> Result<Vec<MetricSpec>> {
        self.metrics.iter().map(|m| m.parse()).collect()
    }

    fn options(&self, seed: u64, store: Option<PathBuf>) -> Result<RunOptions> {
        let timeout = match self.timeout_secs {
            Some(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(Error::Config("--timeout-secs must be positive".into()))
            }
            Some(t) => Some(Duration::from_secs_f64(t)),
            None => None,
        };
        Ok(RunOptions {
            jobs: self.jobs,
            batch_size: self.batch_size,
            timeout,
            store,
            seed,
            ..RunOptions::default()
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    design: PathBuf,
    #[command(flatten)]
    runner: RunnerArgs,
    /// Result store directory; reruns resume from it.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Base seed passed to external models.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra constant model input, name=value.
    #[arg(long = "fixed", value_parser = parse_key_value)]
    fixed: Vec<(String, f64)>,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Unit,
    Physical,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Elementary-effect measures from a Morris design.
    Ee {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        evaluations: PathBuf,
        /// Report effects per unit range or per physical unit.
        #[arg(long, value_enum, default_value = "unit")]
        scale: Scale,
        /// Fail when an effect cannot be computed because a run failed.
        #[arg(long)]
        strict: bool,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Sobol indices with bootstrap intervals from a Saltelli design.
    Vbsa {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        evaluations: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_REPS)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write one flat table per metric into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RuleArgs {
    /// Select factors whose se exceeds this value in any metric.
    #[arg(long)]
    threshold: Option<f64>,
    /// Threshold override for a factor group or a metric, name=value.
    #[arg(long = "group-threshold", value_parser = parse_key_value)]
    group_thresholds: Vec<(String, f64)>,
    /// Keep at most this many factors, highest se first.
    #[arg(long)]
    top: Option<usize>,
}

impl RuleArgs {
    fn rule(&self) -> ScreeningRule {
        ScreeningRule {
            se_threshold: self.threshold,
            group_thresholds: self.group_thresholds.iter().cloned().collect(),
            top_m: self.top,
        }
    }
}

#[derive(Args)]
struct ScreenArgs {
    /// Elementary-effects report from `analyze ee`.
    #[arg(long)]
    ee: PathBuf,
    /// Factor configuration supplying group tags.
    #[arg(long)]
    factors: Option<PathBuf>,
    #[command(flatten)]
    rule: RuleArgs,
    /// Write the selected factors as a configuration file.
    #[arg(long)]
    write_factors: Option<PathBuf>,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    factors: FactorsArg,
    #[command(flatten)]
    runner: RunnerArgs,
    #[arg(short = 'r', long, default_value_t = 10)]
    trajectories: usize,
    #[arg(short = 'p', long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    /// Seed of the screening design.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    rule: RuleArgs,
    /// Factor always carried into the variance stages.
    #[arg(long = "control")]
    controls: Vec<String>,
    #[arg(short = 'n', long)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SKIP)]
    skip: u64,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_REPS)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    bootstrap_seed: u64,
    #[arg(long, value_enum, default_value = "unit")]
    scale: Scale,
    #[arg(long, default_value_t = DEFAULT_RUN_BUDGET)]
    max_runs: u64,
    /// Parent directory for the per-stage result stores.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report from `pipeline`.
    #[arg(long)]
    pipeline: Option<PathBuf>,
    /// Indices document from `analyze vbsa`.
    #[arg(long)]
    indices: Vec<PathBuf>,
    /// Elementary-effects report from `analyze ee`; needs --design.
    #[arg(long)]
    ee: Option<PathBuf>,
    /// Design the elementary-effects report was computed from.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Evaluations to histogram.
    #[arg(long)]
    evaluations: Vec<PathBuf>,
    /// Gap S_Ti - S_i above which a factor is flagged interactive.
    #[arg(long, default_value_t = DEFAULT_INTERACTION_GAP)]
    interaction_gap: f64,
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    bin_width: f64,
    /// Output directory.
    #[arg(short = 'o', long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum ModelsCmd {
    /// List built-in models.
    List,
    /// Evaluate a built-in model on a batch input file, writing the batch
    /// output protocol. Lets built-ins be driven as external executables.
    Batch {
        #[arg(long)]
        model: String,
        input: PathBuf,
        output: PathBuf,
    },
}

fn parse_key_value(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("`{s}` is not name=value"))?;
    let v = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn effect_scale(s: Scale) -> EffectScale {
    match s {
        Scale::Unit => EffectScale::Unit,
        Scale::Physical => EffectScale::Physical,
    }
}

/// Write to a file, or to stdout for `-`.
fn emit(path: &Path, text: &str) -> Result<()> {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes())?;
        out.flush()?;
    } else {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn write_design(design: &Design, output: &Path) -> Result<()> {
    if output == Path::new("-") {
        return emit(output, &design.to_csv());
    }
    design.write(output)?;
    log::info!("wrote {} rows to {}", design.rows(), output.display());
    Ok(())
}

fn cmd_design(cmd: DesignCmd) -> Result<()> {
    match cmd {
        DesignCmd::Morris { factors, trajectories, levels, seed, max_runs, output } => {
            let cfg = MorrisConfig {
                run_budget: max_runs,
                ..MorrisConfig::new(trajectories, levels, seed)
            };
            let design: Design = generate_morris_design(&factors.load()?, cfg)?.into();
            write_design(&design, &output)
        }
        DesignCmd::Sobol { factors, n, first_and_total_only, skip, max_runs, output, .. } => {
            let mut cfg = SaltelliConfig::new(n).with_skip(skip);
            cfg.run_budget = max_runs;
            if first_and_total_only {
                cfg = cfg.first_and_total_only();
            }
            let design: Design = generate_saltelli_design(&factors.load()?, cfg)?.into();
            write_design(&design, &output)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    require(&args.design, "design")?;
    let design = Design::read(&args.design)?;
    let mut opts = args.runner.options(args.seed, args.store.clone())?;
    opts.fixed = args.fixed;
    let evals = evaluate_design(&design, &args.runner.model()?, &args.runner.metric_specs()?, &opts)?;
    emit(&args.output, &evals.to_csv_string())?;
    let failed = evals.count(RunStatus::Failed);
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see the diagnostic column", evals.len());
        return Ok(5);
    }
    Ok(0)
}

fn load_pair(design: &Path, evaluations: &Path) -> Result<(Design, EvaluationSet)> {
    require(design, "design")?;
    require(evaluations, "evaluations")?;
    let d = Design::read(design)?;
    let e = EvaluationSet::read_path(evaluations)?;
    e.check_alignment(&d)?;
    Ok((d, e))
}

fn cmd_analyze(cmd: AnalyzeCmd) -> Result<()> {
    match cmd {
        AnalyzeCmd::Ee { design, evaluations, scale, strict, output } => {
            let (d, e) = load_pair(&design, &evaluations)?;
            let mut measures = Vec::new();
            for metric in e.metric_names() {
                let mut effects = compute_elementary_effects(&d, &e, &metric, effect_scale(scale))?;
                if strict {
                    effects = effects.strict()?;
                }
                let m = aggregate_ee_measures(&effects)?;
                for w in &m.warnings {
                    log::warn!("{metric}: {w}");
                }
                measures.push(m);
            }
            let mut buf = Vec::new();
            write_ee_report(&measures, &mut buf)?;
            emit(&output, &String::from_utf8_lossy(&buf))
        }
        AnalyzeCmd::Vbsa { design, evaluations, bootstrap, seed, csv, output } => {
            let (d, e) = load_pair(&design, &evaluations)?;
            let doc = analyze_indices(&d, &e, bootstrap, seed)?;
            if let Some(dir) = csv {
                std::fs::create_dir_all(&dir)?;
                for m in &doc.metrics {
                    let f = std::fs::File::create(dir.join(format!("{}.csv", m.metric)))?;
                    write_flat_csv(m, std::io::BufWriter::new(f))?;
                }
            }
            emit(&output, &doc.to_json()?)
        }
    }
}

fn cmd_screen(args: ScreenArgs) -> Result<()> {
    require(&args.ee, "elementary-effects report")?;
    let measures = read_ee_report(&args.ee)?;
    let factors = args.factors.as_ref().map(FactorSet::from_path).transpose()?;
    let result = screen_factors(&measures, factors.as_ref(), &args.rule.rule())?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    if let Some(path) = &args.write_factors {
        let fs = factors
            .as_ref()
            .ok_or_else(|| Error::Config("--write-factors needs --factors".into()))?;
        if !result.selected.is_empty() {
            std::fs::write(path, fs.subset(&result.names())?.to_config_string())?;
        }
    }
    emit(&args.output, &(serde_json::to_string_pretty(&result)? + "\n"))?;
    if result.selected.is_empty() {
        return Err(Error::EmptySelection("no factor passed the screening rule".into()));
    }
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let factors = args.factors.load()?;
    let mut morris = MorrisConfig::new(args.trajectories, args.levels, args.seed);
    morris.run_budget = args.max_runs;
    let mut cfg = PipelineConfig::new(morris, args.rule.rule(), args.n);
    cfg.scale = effect_scale(args.scale);
    cfg.controls = args.controls;
    cfg.skip = args.skip;
    cfg.bootstrap_reps = args.bootstrap;
    cfg.bootstrap_seed = args.bootstrap_seed;
    cfg.metrics = args.runner.metric_specs()?;
    cfg.run = args.runner.options(args.seed, None)?;
    cfg.store_root = args.store;
    let report = staged_analysis(&factors, &args.runner.model()?, &cfg)?;
    for note in &report.notes {
        log::warn!("{note}");
    }
    emit(&args.output, &report.to_json()?)
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut b = ReportBuilder::new(ReportOptions {
        interaction_gap: args.interaction_gap,
        bin_width: args.bin_width,
    });
    if let Some(p) = &args.pipeline {
        require(p, "pipeline report")?;
        b.pipeline(&PipelineReport::read_path(p)?);
    }
    for (i, p) in args.indices.iter().enumerate() {
        require(p, "indices document")?;
        let prefix = if args.indices.len() > 1 { format!("indices{}_", i + 1) } else { String::new() };
        b.indices(&prefix, &sensikit::indices::IndicesDocument::read_path(p)?);
    }
    if let Some(p) = &args.ee {
        require(p, "elementary-effects report")?;
        let d = args
            .design
            .as_ref()
            .ok_or_else(|| Error::Config("--ee needs --design to cite its design hash".into()))?;
        require(d, "design")?;
        b.effects("", &Design::read(d)?.content_hash(), &read_ee_report(p)?);
    }
    for (i, p) in args.evaluations.iter().enumerate() {
        require(p, "evaluations")?;
        let prefix = if args.evaluations.len() > 1 { format!("eval{}_", i + 1) } else { String::new() };
        b.histograms(&prefix, &EvaluationSet::read_path(p)?)?;
    }
    let bundle = b.finish()?;
    bundle.write_dir(&args.output)?;
    log::info!("wrote {} files to {}", bundle.files.len(), args.output.display());
    Ok(())
}

fn cmd_models(cmd: ModelsCmd) -> Result<()> {
    match cmd {
        ModelsCmd::List => {
            let mut out = String::new();
            for (name, about) in BUILTIN_CATALOG {
                out.push_str(&format!("{name:<32} {about}\n"));
            }
            emit(Path::new("-"), &out)
        }
        ModelsCmd::Batch { model, input, output } => {
            let ModelRef::Builtin(model) = model.parse::<ModelRef>()? else {
                return Err(Error::Config("models batch only runs builtin models".into()));
            };
            let (names, rows) = read_input(&std::fs::read_to_string(&input)?)?;
            model.check_dimension(&names)?;
            let mut out = String::new();
            for (i, (id, x)) in rows.iter().enumerate() {
                match model.evaluate(&names, x)? {
                    ModelOutput::Scalars(s) => {
                        if i == 0 {
                            let cols: Vec<&str> = s.keys().map(String::as_str).collect();
                            out.push_str(&format!("run_id,{}\n", cols.join(",")));
                        }
                        let vals: Vec<String> = s.values().map(|v| format!("{v:?}")).collect();
                        out.push_str(&format!("{id},{}\n", vals.join(",")));
                    }
                    ModelOutput::Series(series) => {
                        if i == 0 {
                            let cols: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
                            out.push_str(&format!("run_id,time,{}\n", cols.join(",")));
                        }
                        for (j, t) in series[0].times.iter().enumerate() {
                            let vals: Vec<String> = series.iter().map(|s| format!("{:?}", s.values[j])).collect();
                            out.push_str(&format!("{id},{t:?},{}\n", vals.join(",")));
                        }
                    }
                }
            }
            std::fs::write(&output, out)?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Design(c) => cmd_design(c).map(|_| 0),
        Command::Run(a) => cmd_run(a),
        Command::Analyze(c) => cmd_analyze(c).map(|_| 0),
        Command::Screen(a) => cmd_screen(a).map(|_| 0),
        Command::Pipeline(a) => cmd_pipeline(a).map(|_| 0),
        Command::Report(a) => cmd_report(a).map(|_| 0),
        Command::Models(c) => cmd_models(c).map(|_| 0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
