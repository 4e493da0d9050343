use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};
use stplan::baselines::PlannerVariant;
use stplan::experiment::{load_scenario_dir, metrics_csv, run_experiment, ExperimentPlan, Overrides};
use stplan::plot::{birdseye_svg, st_diagram_svg};
use stplan::simloop::{NoiseSpec, SimLog};
use stplan::{corpus, PlannerConfig};

#[derive(Parser)]
#[command(name = "stplan", version, about = "Spatio-temporal speed planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios under one or more planner variants.
    Run(RunArgs),
    /// Run once per value of a single config parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Config key to sweep (dotted for nested fields).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<String>,
    },
    /// Render SVG plots from a run log.
    Plot {
        #[arg(long)]
        log: PathBuf,
        /// Cycle index for the s-t diagram; omitted renders the bird's-eye trace.
        #[arg(long)]
        cycle: Option<usize>,
        /// Scenario file supplying the route for the bird's-eye trace.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled synthetic scenarios.
    GenCorpus {
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlotMode {
    None,
    Failures,
    All,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file or directory (searched recursively for *.json).
    #[arg(long)]
    scenarios: PathBuf,
    /// Planner variants, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "ir-influ")]
    variant: Vec<PlannerVariant>,
    /// Prediction modes per agent, comma-separated.
    #[arg(long = "pred-k", value_delimiter = ',', default_value = "1")]
    pred_k: Vec<usize>,
    #[arg(long, value_enum)]
    rp: Option<Switch>,
    #[arg(long, value_enum)]
    ird: Option<Switch>,
    /// Config override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
    /// Base config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Std-dev of lateral prediction noise (m).
    #[arg(long, default_value_t = 0.0)]
    noise_lat: f64,
    /// Std-dev of prediction timing noise (s).
    #[arg(long, default_value_t = 0.0)]
    noise_time: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    plots: PlotMode,
}

fn parse_set(items: &[String]) -> Result<Overrides> {
    items
        .iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').with_context(|| format!("override `{kv}` is not key=value"))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn base_config(path: &Option<PathBuf>) -> Result<PlannerConfig> {
    match path {
        Some(p) => Ok(PlannerConfig::load(p)?),
        None => Ok(PlannerConfig::default()),
    }
}

fn execute(args: &RunArgs, override_sets: Vec<Overrides>) -> Result<()> {
    let scenarios = load_scenario_dir(&args.scenarios)?;
    if scenarios.is_empty() {
        bail!("no scenarios found in {}", args.scenarios.display());
    }
    if args.pred_k.contains(&0) {
        bail!("--pred-k must be at least 1");
    }
    let mut plan = ExperimentPlan::new(scenarios.clone(), args.variant.clone());
    plan.pred_ks = args.pred_k.clone();
    plan.override_sets = override_sets;
    plan.rp = args.rp.map(Switch::on);
    plan.ird = args.ird.map(Switch::on);
    plan.seed = args.seed;
    plan.noise = NoiseSpec {
        lateral: args.noise_lat,
        timing: args.noise_time,
    };
    plan.base_config = base_config(&args.config)?;
    let records = run_experiment(&plan)?;

    let logs_dir = args.out.join("logs");
    fs::create_dir_all(&logs_dir).with_context(|| format!("creating {}", logs_dir.display()))?;
    fs::write(args.out.join("metrics.csv"), metrics_csv(&records))?;
    let per_cell = plan.override_sets.len();
    let mut failures = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let stem = r.stem(i % per_cell);
        match &r.outcome {
            Ok(log) => {
                let mut f = std::io::BufWriter::new(fs::File::create(logs_dir.join(format!("{stem}.jsonl")))?);
                log.write_jsonl(&mut f)?;
                let failed = log.failed_cycles() > 0;
                if args.plots == PlotMode::All || (args.plots == PlotMode::Failures && failed) {
                    let route = scenarios.iter().find(|(n, _)| *n == r.scenario).map(|(_, s)| &s.route);
                    write_plots(&args.out.join("plots"), &stem, log, route, &plan.base_config, failed)?;
                }
            }
            Err(msg) => failures.push(format!("{stem}: {msg}")),
        }
    }
    println!("{} runs, metrics in {}", records.len(), args.out.join("metrics.csv").display());
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("run failed: {f}");
        }
        bail!("{} of {} runs failed", failures.len(), records.len());
    }
    Ok(())
}

fn write_plots(
    dir: &Path,
    stem: &str,
    log: &SimLog,
    route: Option<&stplan::frenet::Route>,
    cfg: &PlannerConfig,
    only_failed: bool,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}__birdseye.svg")), birdseye_svg(log, route))?;
    let cycle = if only_failed {
        log.steps.iter().position(|s| s.status == stplan::simloop::PlanStatus::Failed).unwrap_or(0)
    } else {
        log.steps.iter().position(|s| !s.overlaps.is_empty()).unwrap_or(0)
    };
    if !log.steps.is_empty() {
        fs::write(dir.join(format!("{stem}__st{cycle}.svg")), st_diagram_svg(log, cycle, cfg.safety_gap)?)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let o = parse_set(&args.set)?;
            execute(&args, vec![o])
        }
        Command::Sweep { run, param, values } => {
            let base = parse_set(&run.set)?;
            let sets = values
                .iter()
                .map(|v| {
                    let mut o = base.clone();
                    o.push((param.clone(), v.clone()));
                    o
                })
                .collect();
            execute(&run, sets)
        }
        Command::Plot {
            log,
            cycle,
            scenario,
            config,
            out,
        } => {
            let file = fs::File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let sim = SimLog::read_jsonl(std::io::BufReader::new(file)).map_err(anyhow::Error::msg)?;
            let svg = match cycle {
                Some(c) => st_diagram_svg(&sim, c, base_config(&config)?.safety_gap)?,
                None => {
                    let sc = scenario.map(stplan::scenario::Scenario::load).transpose()?;
                    birdseye_svg(&sim, sc.as_ref().map(|s| &s.route))
                }
            };
            fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
        Command::GenCorpus { out } => {
            for (rel, value) in corpus::bundled() {
                let path = out.join(rel);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, corpus::render(&value))?;
            }
            println!("wrote {} scenarios to {}", corpus::bundled().len(), out.display());
            Ok(())
        }
    }
}
