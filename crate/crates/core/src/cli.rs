//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 variable-cap exceeded,
//! 3 a verdict came out "violated" under `--assert-respected`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{self, CorrelationReport};
use crate::bounds::{self, BoundsError, Expression, DEFAULT_VARIABLE_CAP};
use crate::domain::{SettingId, StationId, TimeIndex, TrialLog};
use crate::engine::{self, RunConfig, TermRotation, DEFAULT_SEED};
use crate::experiment::Experiment;
use crate::feasibility::{self, FeasibilityError, FeasibilityProblem, FeasibilityVerdict};
use crate::labeling::{self, LabelingScheme};
use crate::scenarios::{self, Overrides, Report, ScenarioError};

/// Environment variable naming the default output directory for `run`.
pub const OUT_DIR_ENV: &str = "TERTIUM_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CAPACITY: i32 = 2;
pub const EXIT_VIOLATED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "tertium",
    version,
    about = "Bounds, joint-distribution feasibility and event-by-event simulation for Boole/Bell-type inequalities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a built-in scenario (or an experiment file) and report correlations and verdicts
    Run(RunArgs),
    /// Tight min/max of an expression over all ±1 assignments, plus cycle detection
    Bounds(BoundsArgs),
    /// Decide whether target term correlations admit one joint distribution
    Feasible(FeasibleArgs),
    /// Print the logical variable key of one outcome descriptor
    Label(LabelArgs),
    /// Re-analyze a saved trial log
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rotation {
    RoundRobin,
    UniformRandom,
}

impl From<Rotation> for TermRotation {
    fn from(r: Rotation) -> Self {
        match r {
            Rotation::RoundRobin => TermRotation::RoundRobin,
            Rotation::UniformRandom => TermRotation::UniformRandom,
        }
    }
}

fn parse_scheme(s: &str) -> Result<LabelingScheme, String> {
    s.parse().map_err(|e: labeling::LabelError| e.to_string())
}

/// Comma-separated list of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets(pub Vec<f64>);

fn parse_targets(s: &str) -> Result<Targets, String> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad target {x:?}"))
        })
        .collect::<Result<_, _>>()
        .map(Targets)
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario name (see --list)
    #[arg(required_unless_present_any = ["list", "experiment"])]
    pub scenario: Option<String>,
    /// List built-in scenarios and exit
    #[arg(long)]
    pub list: bool,
    /// Run an experiment definition file instead of a built-in scenario
    #[arg(long, value_name = "FILE", conflicts_with = "scenario")]
    pub experiment: Option<PathBuf>,
    /// Number of trials (time indices)
    #[arg(long, value_name = "N")]
    pub n: Option<u64>,
    /// Run seed [default: scenario default, 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// How term groups are assigned to time indices
    #[arg(long, value_enum)]
    pub rotation: Option<Rotation>,
    /// Only compute bounds and verdicts for this labeling scheme
    #[arg(long, value_parser = parse_scheme)]
    pub labeling: Option<LabelingScheme>,
    /// Worker threads for trial generation (output does not depend on it)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write report.json, trial_log.json, log.jsonl, log.csv and summary.csv here
    /// [default: $TERTIUM_OUT_DIR if set]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Exit with code 3 if any verdict is "violated"
    #[arg(long)]
    pub assert_respected: bool,
}

#[derive(Debug, Args)]
pub struct ExprArgs {
    /// Preset (lg, lg-two-station, lg-pairs) or text such as "a@Lille*b@Lyon + a@Lille*c@Lyon:1"
    #[arg(long, value_name = "EXPR")]
    pub expr: Option<String>,
    /// JSON file holding an expression object
    #[arg(long, value_name = "FILE", conflicts_with = "expr")]
    pub expr_file: Option<PathBuf>,
}

impl ExprArgs {
    fn load(&self) -> Result<Expression, CliError> {
        match (&self.expr, &self.expr_file) {
            (Some(e), _) => Ok(Expression::preset_or_parse(e)?),
            (None, Some(path)) => Ok(serde_json::from_str(&read(path)?)?),
            (None, None) => Err(CliError::Usage(
                "an expression is required (--expr or --expr-file)".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub expr: ExprArgs,
    /// Labeling scheme; "all" reports every scheme
    #[arg(long, default_value = "setting-only")]
    pub labeling: String,
    /// Maximum distinct variables to enumerate
    #[arg(long, default_value_t = DEFAULT_VARIABLE_CAP)]
    pub cap: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FeasibleArgs {
    #[command(flatten)]
    pub expr: ExprArgs,
    #[arg(long, value_parser = parse_scheme, default_value = "setting-only")]
    pub labeling: LabelingScheme,
    /// Comma-separated target expectation per term, e.g. -1,-1,-1
    #[arg(long, value_parser = parse_targets, allow_hyphen_values = true, required_unless_present = "problem")]
    pub targets: Option<Targets>,
    /// JSON feasibility problem (expression, labeling, targets); overrides the other flags
    #[arg(long, value_name = "FILE")]
    pub problem: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub setting: String,
    #[arg(long)]
    pub station: String,
    #[arg(long, default_value_t = 0)]
    pub time: u64,
    /// Running index of the factor within its expression
    #[arg(long, default_value_t = 0)]
    pub slot: usize,
    #[arg(long, value_parser = parse_scheme)]
    pub labeling: LabelingScheme,
    /// Check ids against this built-in scenario
    #[arg(long, conflicts_with = "experiment")]
    pub scenario: Option<String>,
    /// Check ids against this experiment definition
    #[arg(long, value_name = "FILE")]
    pub experiment: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trial log JSON written by `run --out` (trial_log.json)
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,
    /// Scenario whose expression the log belongs to
    #[arg(
        long,
        required_unless_present = "experiment",
        conflicts_with = "experiment"
    )]
    pub scenario: Option<String>,
    /// Experiment definition whose expression the log belongs to
    #[arg(long, value_name = "FILE")]
    pub experiment: Option<PathBuf>,
    #[arg(long, value_parser = parse_scheme)]
    pub labeling: Option<LabelingScheme>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Exit with code 3 if any verdict is "violated"
    #[arg(long)]
    pub assert_respected: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Capacity(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Capacity(_) => EXIT_CAPACITY,
            _ => EXIT_USAGE,
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Capacity { .. } => CliError::Capacity(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<FeasibilityError> for CliError {
    fn from(e: FeasibilityError) -> Self {
        match e {
            FeasibilityError::Capacity { .. }
            | FeasibilityError::Bounds(BoundsError::Capacity { .. }) => {
                CliError::Capacity(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Bounds(b) => b.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<crate::experiment::ExperimentError> for CliError {
    fn from(e: crate::experiment::ExperimentError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Output of one invocation: what goes to stdout and the exit code.
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

/// Parses `args` (including the program name) and executes the command.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            print!("{}", out.stdout);
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Run(a) => cmd_run(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Feasible(a) => cmd_feasible(a),
        Command::Label(a) => cmd_label(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn cmd_run(a: RunArgs) -> Result<Outcome, CliError> {
    if a.list {
        let list = scenarios::list_scenarios();
        let stdout = match a.format {
            Format::Json => json(&list),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for s in &list {
                    w.serialize(s).map_err(|e| CliError::Io(e.to_string()))?;
                }
                String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
            }
            Format::Text => list.iter().fold(String::new(), |mut s, x| {
                let _ = writeln!(s, "{:<24} {}", x.name, x.setup);
                s
            }),
        };
        return Ok(Outcome {
            stdout,
            code: EXIT_OK,
        });
    }
    if a.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }

    let run = match (&a.scenario, &a.experiment) {
        (Some(name), _) => scenarios::run_scenario(
            name,
            &Overrides {
                trials: a.n,
                seed: a.seed,
                rotation: a.rotation.map(Into::into),
                threads: a.threads,
                labeling: a.labeling,
            },
        )?,
        (None, Some(path)) => {
            let experiment = Experiment::from_json(&read(path)?)?;
            let mut config = RunConfig::new(a.n.unwrap_or(10_000), a.seed.unwrap_or(DEFAULT_SEED));
            config.rotation = a.rotation.map(Into::into).unwrap_or_default();
            config.threads = a.threads;
            let schemes = match a.labeling.or(experiment.def().labeling) {
                Some(s) => vec![s],
                None => LabelingScheme::ALL.to_vec(),
            };
            let name = experiment
                .def()
                .name
                .clone()
                .unwrap_or_else(|| "experiment".into());
            scenarios::run_experiment(&name, &experiment, &config, &schemes)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "a scenario name or --experiment is required".into(),
            ))
        }
    };

    let out_dir = a
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
    if let Some(dir) = out_dir {
        write_outputs(&dir, &run.report, &run.log)?;
    }
    let code = if a.assert_respected && run.report.any_violated() {
        EXIT_VIOLATED
    } else {
        EXIT_OK
    };
    Ok(Outcome {
        stdout: render_report(&run.report, a.format)?,
        code,
    })
}

fn write_outputs(dir: &Path, report: &Report, log: &TrialLog) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    write(&dir.join("report.json"), json(report).as_bytes())?;
    write(&dir.join("trial_log.json"), json(log).as_bytes())?;
    let mut jsonl = Vec::new();
    engine::write_jsonl(log, &mut jsonl).map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir.join("log.jsonl"), &jsonl)?;
    let mut csv_bytes = Vec::new();
    engine::write_csv(log, &mut csv_bytes).map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir.join("log.csv"), &csv_bytes)?;
    let mut summary = Vec::new();
    report
        .correlations
        .write_summary_csv(&mut summary)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write(&dir.join("summary.csv"), &summary)?;
    Ok(())
}

fn summary_csv(c: &CorrelationReport) -> Result<String, CliError> {
    let mut buf = Vec::new();
    c.write_summary_csv(&mut buf)
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("utf8"))
}

fn render_correlations(s: &mut String, c: &CorrelationReport) {
    for t in &c.per_term {
        let _ = writeln!(
            s,
            "term {} estimate {:.6} count {} std_error {:.6}",
            t.term, t.estimate, t.count, t.std_error
        );
    }
    let _ = writeln!(
        s,
        "gamma_mean {:.6} std_error {:.6}",
        c.gamma_mean, c.gamma_std_error
    );
    for m in &c.singles {
        let _ = writeln!(
            s,
            "single {}@{} mean {:.6} count {}",
            m.setting, m.station, m.mean, m.count
        );
    }
    for v in &c.verdicts {
        let status = match v.verdict.status {
            analysis::VerdictStatus::Respected => "respected",
            analysis::VerdictStatus::Violated => "violated",
        };
        let _ = writeln!(
            s,
            "verdict {} bound [{}, {}] {} margin {:.6}",
            v.scheme, v.bound_min, v.bound_max, status, v.verdict.margin
        );
    }
}

fn render_report(r: &Report, format: Format) -> Result<String, CliError> {
    Ok(match format {
        Format::Json => json(r),
        Format::Csv => summary_csv(&r.correlations)?,
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "scenario {}", r.scenario);
            let _ = writeln!(s, "model {}", r.model);
            let _ = writeln!(s, "expression {}", r.expression);
            let _ = writeln!(
                s,
                "trials {} seed {} rotation {}",
                r.config.trials, r.config.seed, r.config.rotation
            );
            render_correlations(&mut s, &r.correlations);
            for c in &r.cyclicity {
                let _ = writeln!(
                    s,
                    "cycle {} {} {:?}",
                    c.scheme, c.has_cycle, c.cycle_witness
                );
            }
            s
        }
    })
}

#[derive(serde::Serialize)]
struct BoundsOutput {
    expression: String,
    bound: bounds::BoundResult,
    cyclicity: bounds::CyclicityReport,
}

fn cmd_bounds(a: BoundsArgs) -> Result<Outcome, CliError> {
    let expr = a.expr.load()?;
    let schemes = if a.labeling == "all" {
        LabelingScheme::ALL.to_vec()
    } else {
        vec![parse_scheme(&a.labeling).map_err(CliError::Usage)?]
    };
    let mut rows = Vec::new();
    for scheme in schemes {
        rows.push(BoundsOutput {
            expression: expr.to_string(),
            bound: bounds::enumerate_bounds_capped(&expr, scheme, a.cap)?,
            cyclicity: bounds::detect_cyclicity(&expr, scheme),
        });
    }
    let stdout = match a.format {
        Format::Json if rows.len() == 1 => json(&rows[0]),
        Format::Json => json(&rows),
        Format::Csv => {
            let mut s = String::from(
                "labeling,min,max,trivial_min,trivial_max,nontrivial,variable_count,has_cycle\n",
            );
            for r in &rows {
                let b = &r.bound;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    b.scheme,
                    b.min,
                    b.max,
                    b.trivial_min,
                    b.trivial_max,
                    b.nontrivial,
                    b.variable_count,
                    r.cyclicity.has_cycle
                );
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            for r in &rows {
                let b = &r.bound;
                let _ = writeln!(s, "expression {}", r.expression);
                let _ = writeln!(s, "labeling {}", b.scheme);
                let _ = writeln!(s, "variables {}", b.variable_count);
                let _ = writeln!(s, "min {}", b.min);
                let _ = writeln!(s, "max {}", b.max);
                let _ = writeln!(s, "trivial [{}, {}]", b.trivial_min, b.trivial_max);
                let _ = writeln!(s, "nontrivial {}", b.nontrivial);
                let _ = writeln!(
                    s,
                    "cycle {} {:?}",
                    r.cyclicity.has_cycle, r.cyclicity.cycle_witness
                );
            }
            s
        }
    };
    Ok(Outcome {
        stdout,
        code: EXIT_OK,
    })
}

fn cmd_feasible(a: FeasibleArgs) -> Result<Outcome, CliError> {
    let problem = match &a.problem {
        Some(path) => serde_json::from_str::<FeasibilityProblem>(&read(path)?)?,
        None => FeasibilityProblem {
            expression: a.expr.load()?,
            labeling: a.labeling,
            targets: a.targets.clone().map(|t| t.0).unwrap_or_default(),
        },
    };
    let verdict = feasibility::check_feasibility(&problem)?;
    Ok(Outcome {
        stdout: render_feasibility(&verdict, a.format),
        code: EXIT_OK,
    })
}

fn render_feasibility(v: &FeasibilityVerdict, format: Format) -> String {
    let word = if v.feasible { "feasible" } else { "infeasible" };
    match format {
        Format::Json => json(v),
        Format::Csv => {
            let cert = v
                .certificate
                .as_ref()
                .map(|c| c.min.to_string())
                .unwrap_or_default();
            format!(
                "verdict,labeling,variable_count,target_sum,certificate_min\n{word},{},{},{},{cert}\n",
                v.labeling, v.variable_count, v.target_sum
            )
        }
        Format::Text => {
            let mut s = format!("{word}\n");
            if let Some(c) = &v.certificate {
                let _ = writeln!(
                    s,
                    "certificate: target sum {} outside bound [{}, {}] under {}",
                    v.target_sum, c.min, c.max, c.scheme
                );
            }
            if let Some(w) = &v.witness {
                for atom in w {
                    let vals: Vec<String> = atom
                        .assignment
                        .iter()
                        .map(|(k, x)| format!("{k}={x}"))
                        .collect();
                    let _ = writeln!(s, "p={} {}", atom.exact, vals.join(" "));
                }
            }
            s
        }
    }
}

fn cmd_label(a: LabelArgs) -> Result<Outcome, CliError> {
    let setting = SettingId::new(a.setting.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let station = StationId::new(a.station.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    let labeler = match (&a.scenario, &a.experiment) {
        (Some(name), _) => Some(Experiment::new(scenarios::get(name)?.experiment)?.labeler()),
        (None, Some(path)) => Some(Experiment::from_json(&read(path)?)?.labeler()),
        (None, None) => None,
    };
    let id = match labeler {
        Some(l) => l
            .label(&setting, &station, TimeIndex(a.time), a.slot, a.labeling)
            .map_err(|e| CliError::Input(e.to_string()))?,
        None => labeling::label(&setting, &station, TimeIndex(a.time), a.slot, a.labeling),
    };
    Ok(Outcome {
        stdout: format!("{id}\n"),
        code: EXIT_OK,
    })
}

fn cmd_report(a: ReportArgs) -> Result<Outcome, CliError> {
    let log: TrialLog = serde_json::from_str(&read(&a.log)?)?;
    let experiment = match (&a.scenario, &a.experiment) {
        (Some(name), _) => Experiment::new(scenarios::get(name)?.experiment)?,
        (None, Some(path)) => Experiment::from_json(&read(path)?)?,
        (None, None) => {
            return Err(CliError::Usage(
                "--scenario or --experiment is required".into(),
            ))
        }
    };
    let expr = experiment.expression();
    let mut report = analysis::mean_correlations(&log, expr)?;
    let schemes = match a.labeling {
        Some(s) => vec![s],
        None => LabelingScheme::ALL.to_vec(),
    };
    for scheme in schemes {
        report.judge(&bounds::enumerate_bounds(expr, scheme)?);
    }
    let violated = report
        .verdicts
        .iter()
        .any(|v| v.verdict.status == analysis::VerdictStatus::Violated);
    let stdout = match a.format {
        Format::Json => json(&report),
        Format::Csv => summary_csv(&report)?,
        Format::Text => {
            let mut s = String::new();
            render_correlations(&mut s, &report);
            s
        }
    };
    Ok(Outcome {
        stdout,
        code: if a.assert_respected && violated {
            EXIT_VIOLATED
        } else {
            EXIT_OK
        },
    })
}
