use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use delayguard::cosim::{cosimulate, AttackConfig, CosimConfig};
use delayguard::harness::{self, Case, CaseStudyParams, SweepSpec, DEFAULT_FDI_BIAS};
use delayguard::milp::build_milp;
use delayguard::model::{DelaySequence, Millis, TaskId, TaskSet};
use delayguard::overlap::{solve_delays, OverlapConventions, OverlapProblem};
use delayguard::sim::{SimConfig, DEFAULT_HORIZON};
use delayguard::{control, io, plants, rta, scenarios, Error};

mod table;

use table::{Format, Table};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 3,
            CliError::Core(_) | CliError::Usage(_) => 2,
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Response-time analysis, delay optimization and attack simulation for
/// fixed-priority control task sets.
#[derive(Debug, Parser)]
#[command(name = "delayguard", version)]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Worst-case response times, optionally under a victim delay sequence.
    Rta(RtaArgs),
    /// Largest uniform release delay that keeps the set schedulable.
    PeakDelay(PeakArgs),
    /// Control cost against delay and the maximum admissible delay.
    MaxDelay(MaxDelayArgs),
    /// Per-job delays minimizing the attack-window overlap.
    Optimize(OptimizeArgs),
    /// Closed-loop co-simulation of one attack case.
    Simulate(SimulateArgs),
    /// Schedulability of random task sets across utilization ranges.
    Sweep(SweepArgs),
    /// All four attack cases on the automotive task set.
    CaseStudy(CaseStudyArgs),
}

#[derive(Debug, Args)]
struct RtaArgs {
    /// Task-set JSON file.
    taskset: PathBuf,
    #[arg(long)]
    victim: Option<TaskId>,
    /// Uniform delay for every victim job.
    #[arg(long, requires = "victim", conflicts_with = "delays")]
    delay: Option<Millis>,
    /// Delay-sequence JSON file.
    #[arg(long)]
    delays: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PeakArgs {
    taskset: PathBuf,
    /// Only this task; all tasks otherwise.
    #[arg(long)]
    victim: Option<TaskId>,
}

#[derive(Debug, Args)]
struct MaxDelayArgs {
    taskset: PathBuf,
    /// Plant JSON file; each plant names the task it runs on.
    plants: PathBuf,
    #[arg(long)]
    victim: Option<TaskId>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConventionsArg {
    /// Worst-case-finish window anchor and classic untrusted bounds.
    CaseStudy,
    /// Earliest-finish anchor and delayed-victim untrusted bounds.
    Conservative,
}

impl From<ConventionsArg> for OverlapConventions {
    fn from(c: ConventionsArg) -> Self {
        match c {
            ConventionsArg::CaseStudy => OverlapConventions::case_study(),
            ConventionsArg::Conservative => OverlapConventions::default(),
        }
    }
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    taskset: PathBuf,
    #[arg(long)]
    victim: TaskId,
    #[arg(long, required_unless_present = "auto", conflicts_with = "auto")]
    max_delay: Option<Millis>,
    /// Derive the maximum delay from the victim's plant.
    #[arg(long, requires = "plants")]
    auto: bool,
    #[arg(long)]
    plants: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ConventionsArg::CaseStudy)]
    conventions: ConventionsArg,
    /// Where to write the delay sequence (default: out-dir/delays_<victim>.json).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the MILP instance in CPLEX LP format.
    #[arg(long)]
    dump_milp: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    taskset: PathBuf,
    plants: PathBuf,
    /// Delay-sequence file; required by case iv unless --conventions derives it.
    #[arg(long)]
    delays: Option<PathBuf>,
    /// Attack case: i (no attack), ii (PFP), iii (random delay), iv (optimized delay).
    #[arg(long, default_value = "iv", value_parser = parse_case)]
    case: Case,
    #[arg(long, default_value_t = 4)]
    attacker: TaskId,
    #[arg(long, default_value_t = 3)]
    victim: TaskId,
    #[arg(long, default_value_t = 100)]
    attack_start: Millis,
    /// Additive sensor bias, one value per victim input.
    #[arg(long, value_delimiter = ',', default_values_t = [DEFAULT_FDI_BIAS])]
    bias: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: Millis,
    /// Optimize missing delay sequences under these conventions.
    #[arg(long, value_enum, default_value_t = ConventionsArg::CaseStudy)]
    conventions: ConventionsArg,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 5)]
    tasks: usize,
    #[arg(long, default_value_t = 100)]
    sets_per_range: usize,
}

#[derive(Debug, Args)]
struct CaseStudyArgs {
    /// Task-set file (default: the built-in automotive set).
    #[arg(long)]
    taskset: Option<PathBuf>,
    /// Plant file (default: the built-in automotive plants).
    #[arg(long)]
    plants: Option<PathBuf>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Write per-case sample CSVs for the first seed.
    #[arg(long)]
    samples: bool,
}

fn parse_case(s: &str) -> Result<Case, String> {
    Case::parse(s).ok_or_else(|| format!("unknown case {s:?}; expected i, ii, iii or iv"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Rta(a) => cmd_rta(cli, a),
        Command::PeakDelay(a) => cmd_peak(cli, a),
        Command::MaxDelay(a) => cmd_max_delay(cli, a),
        Command::Optimize(a) => cmd_optimize(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Sweep(a) => cmd_sweep(cli, a),
        Command::CaseStudy(a) => cmd_case_study(cli, a),
    }
}

fn out_path(cli: &Cli, name: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(&cli.out_dir)?;
    Ok(cli.out_dir.join(name))
}

fn write(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn opt(v: Option<Millis>) -> Value {
    v.map_or(Value::Null, Value::from)
}

fn cmd_rta(cli: &Cli, a: &RtaArgs) -> CliResult {
    let ts = io::read_taskset(&a.taskset)?;
    let seq = match (&a.delays, a.victim, a.delay) {
        (Some(path), victim, _) => {
            let seqs = io::read_sequences(path, &ts)?;
            let pick = match victim {
                Some(v) => seqs.into_iter().find(|s| s.victim == v),
                None => seqs.into_iter().next(),
            };
            Some(pick.ok_or_else(|| CliError::Usage("no delay sequence for the requested victim".into()))?)
        }
        (None, Some(v), d) => Some(DelaySequence::uniform(&ts, v, d.unwrap_or(0))?),
        (None, None, _) => None,
    };
    let results = rta::analyze_all(&ts, seq.as_ref())?;
    let mut table = Table::new(["task", "job", "delay", "effective_deadline", "wcrt", "status"]);
    for r in &results {
        for j in &r.per_job_wcrt {
            let status = match j.wcrt {
                rta::Wcrt::Bounded { .. } => "ok",
                rta::Wcrt::Infeasible { .. } => "infeasible",
                rta::Wcrt::IterationCap { .. } => "iteration_cap",
            };
            table.row([
                json!(r.task_id),
                json!(j.job),
                json!(j.delay),
                json!(j.effective_deadline),
                opt(j.wcrt.value()),
                json!(status),
            ]);
        }
    }
    table.print(cli.format);
    let bad: Vec<String> = results.iter().filter(|r| !r.feasible).map(|r| r.task_id.to_string()).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!("tasks {} miss their deadlines", bad.join(", "))))
    }
}

fn cmd_peak(cli: &Cli, a: &PeakArgs) -> CliResult {
    let ts = io::read_taskset(&a.taskset)?;
    let tasks = match a.victim {
        Some(v) => vec![ts.task(v)?],
        None => ts.by_priority(),
    };
    let mut table = Table::new(["task", "period", "wcet", "peak_delay"]);
    let mut missing = Vec::new();
    for t in tasks {
        let peak = rta::peak_delay(t, &ts);
        if peak.is_none() {
            missing.push(t.id);
        }
        table.row([json!(t.id), json!(t.period), json!(t.wcet), opt(peak)]);
    }
    table.print(cli.format);
    match (a.victim, missing.first()) {
        (Some(v), Some(_)) => Err(CliError::Infeasible(format!("no delay keeps the set schedulable for task {v}"))),
        _ => Ok(()),
    }
}

fn bound_plants(ts: &TaskSet, path: &Path, victim: Option<TaskId>) -> CliResult<Vec<control::PlantModel>> {
    let plants: Vec<_> = io::read_plants(path)?
        .into_iter()
        .filter(|p| p.task.is_some() && victim.is_none_or(|v| p.task == Some(v)))
        .collect();
    for p in &plants {
        ts.task(p.task.expect("filtered"))?;
    }
    if plants.is_empty() {
        return Err(CliError::Usage("no plant is bound to the requested task".into()));
    }
    Ok(plants)
}

fn cmd_max_delay(cli: &Cli, a: &MaxDelayArgs) -> CliResult {
    let ts = io::read_taskset(&a.taskset)?;
    let mut table = Table::new(["task", "delay", "wcrt", "latency", "cost", "threshold", "admissible"]);
    let mut summary = Table::new(["task", "plant", "peak_delay", "max_delay"]);
    let mut none = Vec::new();
    for plant in bound_plants(&ts, &a.plants, a.victim)? {
        let task = ts.task(plant.task.expect("bound"))?;
        let report = control::max_admissible_delay(&plant, task, &ts)?;
        for r in &report.rows {
            table.row([
                json!(task.id),
                json!(r.delay),
                json!(r.response),
                json!(r.latency),
                json!(r.cost),
                json!(report.threshold),
                json!(r.admissible),
            ]);
        }
        if report.max_delay.is_none() {
            none.push(task.id.to_string());
        }
        summary.row([json!(task.id), json!(plant.name), opt(report.peak_delay), opt(report.max_delay)]);
    }
    table.print(cli.format);
    if cli.format == Format::Table {
        println!();
    }
    summary.print(cli.format);
    if none.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!("no admissible delay for tasks {}", none.join(", "))))
    }
}

fn cmd_optimize(cli: &Cli, a: &OptimizeArgs) -> CliResult {
    let ts = io::read_taskset(&a.taskset)?;
    let victim = ts.task(a.victim)?;
    let max_delay = match (a.max_delay, &a.plants) {
        (Some(d), _) => d,
        (None, Some(path)) => {
            let plant = bound_plants(&ts, path, Some(a.victim))?.remove(0);
            control::max_admissible_delay(&plant, victim, &ts)?
                .max_delay
                .ok_or_else(|| CliError::Infeasible(format!("no admissible delay for task {}", a.victim)))?
        }
        (None, None) => return Err(CliError::Usage("give --max-delay or --auto with --plants".into())),
    };
    let peak = rta::peak_delay(victim, &ts)
        .ok_or_else(|| CliError::Infeasible(format!("task {} tolerates no release delay", a.victim)))?;
    if max_delay > peak {
        return Err(CliError::Infeasible(format!(
            "max delay {max_delay} exceeds the peak delay {peak} of task {}",
            a.victim
        )));
    }
    let problem = OverlapProblem::new(&ts, a.victim, max_delay, a.conventions.into())
        .map_err(|e| CliError::Infeasible(e.to_string()))?;
    let solution = solve_delays(&problem);
    let seq = DelaySequence::new(&ts, a.victim, solution.delays.clone())?;

    let output = match &a.output {
        Some(p) => p.clone(),
        None => out_path(cli, &format!("delays_{}.json", a.victim))?,
    };
    write(&output, &io::sequences_to_string(std::slice::from_ref(&seq)))?;
    if let Some(path) = &a.dump_milp {
        write(path, &build_milp(&problem).to_lp_format())?;
    }

    let mut table = Table::new(["victim", "max_delay", "delays", "baseline_overlap", "optimized_overlap"]);
    let delays = solution.delays.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
    table.row([
        json!(a.victim),
        json!(max_delay),
        if cli.format == Format::Records { json!(solution.delays) } else { json!(delays) },
        json!(solution.baseline),
        json!(solution.objective),
    ]);
    table.print(cli.format);
    Ok(())
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> CliResult {
    let ts = io::read_taskset(&a.taskset)?;
    let plants = io::read_plants(&a.plants)?;
    let mut sim = SimConfig::new(a.case.mode(), a.horizon, cli.seed);
    if let Some(path) = &a.delays {
        for seq in io::read_sequences(path, &ts)? {
            sim = sim.with_sequence(seq);
        }
    }
    if a.case == Case::Iv {
        // Fill in sequences for bound loops the file did not cover.
        let missing: Vec<_> = plants
            .iter()
            .filter(|p| p.task.is_some_and(|t| !sim.delay_store.contains_key(&t)))
            .cloned()
            .collect();
        let setup = harness::prepare_case_study(&ts, &missing, a.conventions.into()).map_err(infeasible_config)?;
        for (id, _, sol) in &setup.sequences {
            sim = sim.with_sequence(DelaySequence::new(&ts, *id, sol.delays.clone())?);
        }
    }
    let config = CosimConfig {
        sim,
        attack: a.case.attacked().then(|| AttackConfig {
            attacker: a.attacker,
            victim: a.victim,
            start: a.attack_start,
            bias: a.bias.clone(),
        }),
    };
    let report = cosimulate(&ts, &plants, &config)?;
    write(&out_path(cli, "trace.txt")?, &report.trace.to_lines())?;
    write(&out_path(cli, "samples.csv")?, &io::samples_csv(&report))?;

    let mut table = Table::new([
        "task",
        "plant",
        "cost",
        "alarms",
        "first_alarm",
        "switched_at",
        "measured_overlap",
    ]);
    for l in &report.loops {
        table.row([
            json!(l.task),
            json!(l.plant),
            json!(l.cost),
            json!(l.alarms),
            opt(l.first_alarm),
            opt(l.switched_at),
            opt(report.measured_overlap.get(&l.task).copied()),
        ]);
    }
    table.print(cli.format);
    if cli.format == Format::Table {
        println!(
            "\nfdi_attempts={} fdi_hits={} deadline_misses={}",
            report.fdi_attempts, report.fdi_hits, report.deadline_misses
        );
    } else if cli.format == Format::Records {
        println!(
            "{}",
            json!({
                "mode": report.mode,
                "seed": report.seed,
                "fdi_attempts": report.fdi_attempts,
                "fdi_hits": report.fdi_hits,
                "deadline_misses": report.deadline_misses,
            })
        );
    }
    Ok(())
}

fn infeasible_config(e: Error) -> CliError {
    match e {
        Error::Config(msg) => CliError::Infeasible(msg),
        other => other.into(),
    }
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> CliResult {
    let mut spec = SweepSpec::new(a.tasks, cli.seed);
    spec.sets_per_range = a.sets_per_range;
    let rows = harness::schedulability_sweep(&spec)?;
    let mut table = Table::new(["n_tasks", "range", "u_low", "u_high", "group", "schedulable", "sets", "percent"]);
    for r in rows {
        table.row([
            json!(r.n_tasks),
            json!(r.range),
            json!(r.u_low),
            json!(r.u_high),
            json!(r.group),
            json!(r.schedulable),
            json!(r.sets),
            json!(r.percent),
        ]);
    }
    if cli.format == Format::Table {
        println!(
            "# groups by priority rank: HP {:?}, MP {:?}, LP {:?}",
            harness::VictimGroup::Hp.ranks(a.tasks),
            harness::VictimGroup::Mp.ranks(a.tasks),
            harness::VictimGroup::Lp.ranks(a.tasks)
        );
    }
    table.print(cli.format);
    Ok(())
}

fn cmd_case_study(cli: &Cli, a: &CaseStudyArgs) -> CliResult {
    let ts = match &a.taskset {
        Some(p) => io::read_taskset(p)?,
        None => scenarios::table2(),
    };
    let plant_models = match &a.plants {
        Some(p) => io::read_plants(p)?,
        None => plants::table2_plants(),
    };
    let params = CaseStudyParams::default();
    let setup = harness::prepare_case_study(&ts, &plant_models, params.conventions).map_err(infeasible_config)?;
    let mut table = Table::new([
        "seed",
        "case",
        "fdi_attempts",
        "fdi_hits",
        "cost",
        "threshold",
        "first_alarm",
        "switched_at",
        "overlap_per_hyperperiod",
        "deadline_misses",
    ]);
    for seed in cli.seed..cli.seed + a.seeds.max(1) {
        for (s, report) in harness::case_study(&setup, &params, seed)? {
            if a.samples && seed == cli.seed {
                let case = serde_json::to_value(s.case).expect("case serializes");
                let name = format!("case_{}.csv", case.as_str().unwrap_or("x"));
                write(&out_path(cli, &name)?, &io::samples_csv(&report))?;
            }
            table.row([
                json!(seed),
                json!(s.case),
                json!(s.fdi_attempts),
                json!(s.fdi_hits),
                json!(s.cost),
                json!(s.threshold),
                opt(s.first_alarm),
                opt(s.switched_at),
                json!(s.overlap_per_hyperperiod),
                json!(s.deadline_misses),
            ]);
        }
    }
    table.print(cli.format);
    Ok(())
}
