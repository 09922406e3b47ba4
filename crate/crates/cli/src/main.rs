use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use csm_core::dynamics::{transitivity_check, CheckConfig, TransitivityStatus};
use csm_core::entropy::{
    entropy_lap, entropy_transfer, markov_detect, perron_root, EntropyError, EntropyEstimate,
};
use csm_core::hofbauer::build_diagram;
use csm_core::lab::{
    map_hash, theorem1_experiment, theorem2_experiment, theorem3_experiment, ExperimentTable, Family, LabConfig,
    LabError,
};
use csm_core::mapfile::parse_map;
use csm_core::parry::{constant_slope_model, CsConfig, ParryError};
use csm_core::rational::{format_rational, from_f64, parse_rational};
use csm_core::{MapError, PLMap, Rational};
use serde::{Deserialize, Serialize};
use serde_json::json;

const CONFIG_ENV: &str = "CSM_CONFIG";

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Code {
    Input = 2,
    Budget = 3,
    Refused = 4,
}

struct Failure {
    code: Code,
    error: anyhow::Error,
}

type Outcome<T> = Result<T, Failure>;

trait Classify<T> {
    fn code(self, code: Code) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn code(self, code: Code) -> Outcome<T> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn fail<T>(code: Code, error: anyhow::Error) -> Outcome<T> {
    Err(Failure { code, error })
}

fn lab_code(e: &LabError) -> Code {
    match e {
        LabError::Entropy(EntropyError::LapBudget { .. })
        | LabError::Map(MapError::LapBudget { .. })
        | LabError::Parry(ParryError::NonConvergence { .. }) => Code::Budget,
        _ => Code::Input,
    }
}

/// Settings read from a JSON file; every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    tol: Option<f64>,
    max_iter: Option<usize>,
    breakpoint_cap: Option<usize>,
    lap_depth: Option<usize>,
    lap_budget: Option<usize>,
    markov_steps: Option<usize>,
    transfer_grid: Option<usize>,
    threads: Option<usize>,
    log_level: Option<String>,
}

/// Fully resolved settings, echoed into every output.
#[derive(Debug, Clone, Serialize)]
struct Config {
    tol: f64,
    max_iter: usize,
    breakpoint_cap: usize,
    lap_depth: usize,
    lap_budget: usize,
    markov_steps: usize,
    transfer_grid: usize,
    threads: Option<usize>,
    log_level: String,
    source: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        let cs = CsConfig::default();
        let lab = LabConfig::default();
        Self {
            tol: cs.tol,
            max_iter: cs.max_iter,
            breakpoint_cap: cs.breakpoint_cap,
            lap_depth: 16,
            lap_budget: 1 << 22,
            markov_steps: lab.markov_steps,
            transfer_grid: lab.transfer_grid,
            threads: None,
            log_level: "warn".into(),
            source: None,
        }
    }
}

impl Config {
    fn load(cli: &Cli) -> Outcome<Self> {
        let mut cfg = Config::default();
        let path = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        if let Some(path) = path {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading config {}", path.display()))
                .code(Code::Input)?;
            let file: FileConfig = serde_json::from_str(&text)
                .with_context(|| format!("config {}", path.display()))
                .code(Code::Input)?;
            cfg.tol = file.tol.unwrap_or(cfg.tol);
            cfg.max_iter = file.max_iter.unwrap_or(cfg.max_iter);
            cfg.breakpoint_cap = file.breakpoint_cap.unwrap_or(cfg.breakpoint_cap);
            cfg.lap_depth = file.lap_depth.unwrap_or(cfg.lap_depth);
            cfg.lap_budget = file.lap_budget.unwrap_or(cfg.lap_budget);
            cfg.markov_steps = file.markov_steps.unwrap_or(cfg.markov_steps);
            cfg.transfer_grid = file.transfer_grid.unwrap_or(cfg.transfer_grid);
            cfg.threads = file.threads.or(cfg.threads);
            cfg.log_level = file.log_level.unwrap_or(cfg.log_level);
            cfg.source = Some(path.display().to_string());
        }
        if let Some(t) = cli.tol {
            cfg.tol = t;
        }
        if let Some(n) = cli.threads {
            cfg.threads = Some(n);
        }
        if let Some(l) = &cli.log_level {
            cfg.log_level = l.clone();
        }
        if !(cfg.tol > 0.0 && cfg.tol < 1.0) {
            return fail(Code::Input, anyhow!("tol must lie in (0, 1), got {}", cfg.tol));
        }
        Ok(cfg)
    }

    fn cs(&self) -> CsConfig {
        CsConfig { tol: self.tol, max_iter: self.max_iter, breakpoint_cap: self.breakpoint_cap, initial: None }
    }

    fn lab(&self) -> LabConfig {
        LabConfig {
            cs: self.cs(),
            check: CheckConfig::default(),
            markov_steps: self.markov_steps,
            transfer_grid: self.transfer_grid,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "csm", version, about = "Constant slope models of piecewise linear interval maps")]
struct Cli {
    /// JSON config file (default: $CSM_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Solver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    log_level: Option<String>,
    /// Output file (default: stdout).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Lap,
    Transfer,
    Markov,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GraphFormat {
    Dot,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    Example1,
    Example2,
    ModalityPreserving,
    Theorem2,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Topological entropy with a lap-count bracket.
    Entropy {
        map: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        method: Method,
        /// Lap-count depth.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Constant slope model and conjugacy.
    Csmodel {
        map: PathBuf,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Breakpoint cap for the iterated distribution function.
        #[arg(long)]
        cap: Option<usize>,
        /// Solve even when the map is not transitive; the output is flagged.
        #[arg(long)]
        force: bool,
    },
    /// Markov diagram as DOT or JSON.
    Diagram {
        map: PathBuf,
        #[arg(long, default_value_t = 40)]
        word_cap: usize,
        #[arg(long, default_value_t = 10_000)]
        vertex_cap: usize,
        #[arg(long, value_enum, default_value = "dot")]
        format: GraphFormat,
    },
    /// Preimage counts of a point against the entropy growth rate (CSV).
    Preimages {
        map: PathBuf,
        /// Point as p/q.
        #[arg(long)]
        point: String,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 1 << 24)]
        budget: usize,
    },
    /// Family experiments (CSV).
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        /// Comma-separated p/q parameters.
        #[arg(long, value_delimiter = ',', default_value = "1/4,1/8,1/16")]
        t_values: Vec<String>,
        /// Comma-separated epsilons for the equicontinuity table.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
        eps: Vec<f64>,
    },
    /// Transitivity verdict, critical data and fixed points.
    Check { map: PathBuf },
}

fn read_map(path: &Path) -> Outcome<PLMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).code(Code::Input)?;
    parse_map(&text).with_context(|| format!("{}", path.display())).code(Code::Input)
}

fn parse_point(text: &str) -> Outcome<Rational> {
    parse_rational(text).with_context(|| format!("`{text}` is not a p/q rational")).code(Code::Input)
}

fn emit(out: Option<&Path>, text: &str) -> Outcome<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).code(Code::Input),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Outcome<()> {
    emit(out, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

fn stamp_table(table: &mut ExperimentTable, cfg: &Config) {
    table.meta("cli_config", serde_json::to_string(cfg).expect("serializable"));
}

fn cmd_entropy(f: &PLMap, path: &Path, method: Method, depth: usize, cfg: &Config, out: Option<&Path>) -> Outcome<()> {
    let bracket = entropy_lap(f, depth, cfg.lap_budget);
    let mut report = json!({
        "map": path.display().to_string(),
        "map_sha256": map_hash(f),
        "config": cfg,
    });
    let bracket_json = match &bracket {
        Ok(b) => json!(b),
        Err(EntropyError::LapBudget { prefix }) => json!({ "error": "lap budget exceeded", "lap_counts": prefix }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    report["lap_bracket"] = bracket_json;
    let markov = || markov_detect(f, cfg.markov_steps);
    let perron_tol = from_f64(cfg.tol.min(1e-9));
    let transfer = || entropy_transfer(f, cfg.transfer_grid, 20_000, cfg.tol.min(1e-9));
    let estimate: Result<EntropyEstimate, Failure> = match method {
        Method::Lap => bracket.clone().code(Code::Budget),
        Method::Transfer => transfer().code(Code::Input),
        Method::Markov => match markov() {
            Some(md) => perron_root(&md.matrix, &perron_tol).code(Code::Input),
            None => fail(Code::Refused, anyhow!("no finite Markov partition within {} steps", cfg.markov_steps)),
        },
        Method::Auto => match markov() {
            Some(md) => perron_root(&md.matrix, &perron_tol).code(Code::Input),
            None => transfer().code(Code::Input),
        },
    };
    match estimate {
        Ok(e) => {
            report["value"] = json!(e.value);
            report["estimate"] = json!(e);
            emit_json(out, &report)?;
            if matches!(method, Method::Lap) || e.converged {
                Ok(())
            } else {
                fail(Code::Budget, anyhow!("{:?} iteration did not converge", e.method))
            }
        }
        Err(failure) => {
            report["error"] = json!(format!("{:#}", failure.error));
            emit_json(out, &report)?;
            Err(failure)
        }
    }
}

fn cmd_csmodel(f: &PLMap, path: &Path, force: bool, cfg: &Config, out: Option<&Path>) -> Outcome<()> {
    let verdict = transitivity_check(f, &CheckConfig::default()).code(Code::Input)?;
    if verdict.status == TransitivityStatus::NotTransitive && !force {
        return fail(
            Code::Refused,
            anyhow!("map is NotTransitive ({}); use --force to solve anyway", serde_json::to_string(&verdict.evidence).unwrap()),
        );
    }
    let mut cs = constant_slope_model(f, &cfg.cs()).map_err(|e| {
        let code = if matches!(e, ParryError::NonConvergence { .. }) { Code::Budget } else { Code::Input };
        Failure { code, error: e.into() }
    })?;
    cs.transitivity_verified = verdict.is_transitive();
    let report = json!({
        "map": path.display().to_string(),
        "map_sha256": map_hash(f),
        "transitivity": verdict,
        "forced": force && verdict.status == TransitivityStatus::NotTransitive,
        "config": cfg,
        "csmodel": cs,
    });
    emit_json(out, &report)
}

fn cmd_check(f: &PLMap, path: &Path, out: Option<&Path>) -> Outcome<()> {
    let verdict = transitivity_check(f, &CheckConfig::default()).code(Code::Input)?;
    let crit = f.critical_data().code(Code::Input)?;
    let fixed = match f.fixed_points() {
        Ok(points) => json!(points.iter().map(format_rational).collect::<Vec<_>>()),
        Err(e) => json!({ "degenerate": e.to_string() }),
    };
    let report = json!({
        "map": path.display().to_string(),
        "map_sha256": map_hash(f),
        "transitivity": verdict,
        "critical_points": crit.points.iter().map(format_rational).collect::<Vec<_>>(),
        "modality": crit.modality,
        "fixed_points": fixed,
    });
    emit_json(out, &report)
}

fn run(cli: Cli) -> Outcome<()> {
    let cfg = Config::load(&cli)?;
    env_logger::Builder::new().parse_filters(&cfg.log_level).try_init().ok();
    if let Some(n) = cfg.threads {
        std::env::set_var("RAYON_NUM_THREADS", n.to_string());
    }
    log::info!("config {}", serde_json::to_string(&cfg).unwrap());
    let out = cli.out.as_deref();
    match cli.command {
        Command::Entropy { map, method, depth } => {
            let f = read_map(&map)?;
            cmd_entropy(&f, &map, method, depth.unwrap_or(cfg.lap_depth), &cfg, out)
        }
        Command::Csmodel { map, max_iter, cap, force } => {
            let f = read_map(&map)?;
            let mut cfg = cfg;
            cfg.max_iter = max_iter.unwrap_or(cfg.max_iter);
            cfg.breakpoint_cap = cap.unwrap_or(cfg.breakpoint_cap);
            cmd_csmodel(&f, &map, force, &cfg, out)
        }
        Command::Diagram { map, word_cap, vertex_cap, format } => {
            let f = read_map(&map)?;
            let d = build_diagram(&f, word_cap, vertex_cap).code(Code::Input)?;
            if !d.is_exact() {
                log::warn!("diagram truncated: {:?}", d.truncation);
            }
            match format {
                GraphFormat::Dot => emit(out, &d.to_dot()),
                GraphFormat::Json => {
                    let mut v = d.to_json();
                    v["truncated"] = json!(!d.is_exact());
                    v["arrow_count"] = json!(d.arrow_count());
                    v["map_sha256"] = json!(map_hash(&f));
                    emit_json(out, &v)
                }
            }
        }
        Command::Preimages { map, point, n, budget } => {
            let f = read_map(&map)?;
            let x = parse_point(&point)?;
            let mut table = theorem1_experiment(&f, &x, n, budget, &cfg.lab()).map_err(|e| Failure {
                code: lab_code(&e),
                error: e.into(),
            })?;
            stamp_table(&mut table, &cfg);
            emit(out, &table.to_csv())?;
            if table.meta_value("complete") == Some("true") {
                Ok(())
            } else {
                fail(Code::Budget, anyhow!("preimage budget {budget} exhausted; table is partial"))
            }
        }
        Command::Experiment { name, t_values, eps } => {
            let ts = t_values.iter().map(|t| parse_point(t)).collect::<Outcome<Vec<_>>>()?;
            let lab = cfg.lab();
            let result = match name {
                Experiment::Example1 => theorem3_experiment(&Family::Example1, &ts, &lab),
                Experiment::Example2 => theorem3_experiment(&Family::Example2, &ts, &lab),
                Experiment::ModalityPreserving => theorem3_experiment(&Family::ModalityPreserving, &ts, &lab),
                Experiment::Theorem2 => theorem2_experiment(&Family::Example1, &ts, &eps, &lab),
            };
            let mut table = result.map_err(|e| Failure { code: lab_code(&e), error: e.into() })?;
            stamp_table(&mut table, &cfg);
            emit(out, &table.to_csv())
        }
        Command::Check { map } => {
            let f = read_map(&map)?;
            cmd_check(&f, &map, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code as u8)
        }
    }
}
