//! Command-line front end.
//!
//! Every command produces a JSON record and, for sweeps and fields, a table.
//! With `--output` the artifact is written to a file and a run record
//! (`<output>.run.json`) echoes the version, seed and full argument list;
//! `spinlab replay <run.json>` re-executes it.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use spinlab::compare::{compare, CompareConfig, Tolerances};
use spinlab::error::{Error, Result};
use spinlab::hj::{
    hopf_lax, psi1_path, psi1_scalar, solve_hj_bipartite, solve_hj_scalar, HJField, HJGrid, HopfLaxOptions, StepPath,
};
use spinlab::mc::free_energy::{enriched_free_energy, exact_log_partition, quenched_free_energy};
use spinlab::mc::{derivative_identity_check, incremental_optimize, max_energy, max_energy_sweep, MaxMethod};
use spinlab::model::{sample_disorder, DisorderSample, ModelSpec};
use spinlab::parisi::{optimize_parisi, solve_parisi_pde, DiscreteMeasure, GridConfig, ParisiOptions};
use spinlab::uninverted::{
    alg_threshold, evaluate_uninverted, martingale_from_measure, optimize_uninverted, AlgOptions, MarkovMartingale,
    MartingaleFile, MartingaleGrid, UninvertedOptions,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_STRICT: u8 = 3;

#[derive(Parser, Debug, Serialize)]
#[command(name = "spinlab", version, about = "Mean-field spin-glass free energies: enumeration, Parisi, martingales, HJ")]
struct Cli {
    /// artifact format; defaults to CSV for tables and JSON otherwise
    #[arg(long, global = true, value_enum)]
    out: Option<Format>,
    /// write the artifact here instead of stdout
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// exit with status 3 when a declared tolerance is violated
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Model files
    #[command(subcommand)]
    Model(ModelCmd),
    /// Finite-N enumeration and the incremental algorithm
    #[command(subcommand)]
    Mc(McCmd),
    /// Parisi PDE and variational problem
    #[command(subcommand)]
    Parisi(ParisiCmd),
    /// Martingale (un-inverted) representation and the algorithmic threshold
    #[command(subcommand)]
    Uninvert(UninvertCmd),
    /// Hamilton-Jacobi schemes and the Hopf-Lax formula
    #[command(subcommand)]
    Hj(HjCmd),
    /// Cross-check all pipelines at one β
    Compare(CompareArgs),
    /// Re-run the command recorded in a run-metadata file
    Replay { metadata: PathBuf },
}

#[derive(Args, Debug, Serialize, Clone)]
struct ModelArg {
    /// TOML model file, or one of the built-in names `sk`, `bipartite`
    #[arg(long, default_value = "sk")]
    model: String,
}

impl ModelArg {
    fn load(&self) -> Result<ModelSpec> {
        match self.model.as_str() {
            "sk" => Ok(ModelSpec::sk()),
            "bipartite" => ModelSpec::bipartite(0.5, 0.5),
            path => ModelSpec::load(Path::new(path)),
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
enum ModelCmd {
    /// Parse and validate a model, echoing its canonical form
    Validate(ModelArg),
}

#[derive(Subcommand, Debug, Serialize)]
enum McCmd {
    /// Exact free energy and ground state of one disorder sample
    Enumerate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Disorder-averaged thermal free energy
    Quenched {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean max H_N/N over sizes with a 1/N extrapolation
    Max {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_delimiter = ',', default_value = "16,20,24")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = MethodArg::BranchAndBound)]
        method: MethodArg,
    },
    /// Disorder-averaged enriched free energy F_N(t, h)
    Enriched {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: f64,
        /// one field per species
        #[arg(long, value_delimiter = ',', default_value = "0")]
        h: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite differences of F_N against Gibbs overlap expressions
    Derivcheck {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        t: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.1")]
        h: Vec<f64>,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
        #[arg(long, default_value_t = 1e-4)]
        allowance: f64,
    },
    /// Incremental message-passing optimization at large N
    Iams {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// martingale JSON; computed from the algorithmic threshold if omitted
        #[arg(long)]
        martingale: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
enum MethodArg {
    Exhaustive,
    BranchAndBound,
}

#[derive(Args, Debug, Serialize)]
struct MeasureArg {
    /// JSON file `{"atoms": [...], "weights": [...]}`
    #[arg(long, conflicts_with_all = ["atoms", "weights"])]
    measure: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    atoms: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
}

impl MeasureArg {
    fn load(&self) -> Result<DiscreteMeasure> {
        match &self.measure {
            Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
            None if self.atoms.is_empty() => DiscreteMeasure::dirac(0.0),
            None => {
                let weights = if self.weights.is_empty() {
                    vec![1.0 / self.atoms.len() as f64; self.atoms.len()]
                } else {
                    self.weights.clone()
                };
                DiscreteMeasure::new(self.atoms.clone(), weights)
            }
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
enum ParisiCmd {
    /// Parisi functional of a given measure
    Solve {
        #[arg(long)]
        beta: f64,
        #[command(flatten)]
        measure: MeasureArg,
        #[arg(long, default_value_t = 0.01)]
        dx: f64,
        #[arg(long, default_value_t = 40)]
        nodes: usize,
    },
    /// Minimize over K-atomic measures
    Opt {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug, Serialize)]
enum UninvertCmd {
    /// Evaluate the functional on a martingale file or on the candidate
    /// built from a measure
    Eval {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        martingale: Option<PathBuf>,
        #[command(flatten)]
        measure: MeasureArg,
        #[arg(long, default_value_t = 40)]
        steps: usize,
    },
    /// Maximize the functional over the built-in martingale family
    Opt {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// also write the optimal martingale as JSON
        #[arg(long)]
        save_martingale: Option<PathBuf>,
    },
    /// Algorithmic threshold sup √2 E[α₁B₁] subject to E α_t² = t
    Alg {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 2)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long)]
        save_martingale: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Serialize, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 4.0)]
    h_max: f64,
    #[arg(long, default_value_t = 0.01)]
    dh: f64,
    #[arg(long, default_value_t = 0.025)]
    record_every: f64,
    /// emit every `stride`-th grid point per axis
    #[arg(long, default_value_t = 10)]
    stride: usize,
}

impl GridArgs {
    fn grid(&self) -> HJGrid {
        HJGrid {
            h_max: self.h_max,
            dh: self.dh,
            record_every: self.record_every,
            ..Default::default()
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
enum HjCmd {
    /// ∂_t f = ξ(∂_h f) from ψ₁
    Scalar {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 0.5)]
        t_max: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// ∂_t f = ∂_{h₁}f ∂_{h₂}f from λ₁ψ₁(h₁) + λ₂ψ₁(h₂)
    Bipartite {
        #[arg(long, default_value_t = 0.5)]
        lambda1: f64,
        #[arg(long, default_value_t = 0.2)]
        t_max: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Hopf-Lax value at (t, q)
    Hopflax {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        t: f64,
        /// path JSON `{"mesh": [...], "values": [...]}`; q = 0 if omitted
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        mesh: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// ψ₁ of a path, or of the constant path h
    Psi1 {
        #[arg(long, conflicts_with = "h")]
        path: Option<PathBuf>,
        #[arg(long)]
        h: Option<f64>,
    },
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    beta: f64,
    #[arg(long, value_delimiter = ',', default_value = "8,12,16,20")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    parisi_atoms: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol_analytic: f64,
    #[arg(long, default_value_t = 2e-2)]
    tol_enumeration: f64,
    #[arg(long, default_value_t = 1e-2)]
    tol_scheme: f64,
}

/// Result of one command before formatting.
struct Outcome {
    record: Value,
    table: Option<Table>,
    /// false when a declared tolerance is violated
    within_tolerance: bool,
    seed: Option<u64>,
}

impl Outcome {
    fn record<T: Serialize>(value: &T, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            record: serde_json::to_value(value)?,
            table: None,
            within_tolerance: true,
            seed,
        })
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RunRecord {
    program: String,
    version: String,
    argv: Vec<String>,
    seed: Option<u64>,
    parameters: Value,
    output: Option<PathBuf>,
    within_tolerance: bool,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match execute(cli, argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SPINLAB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidParameter(format!("SPINLAB_THREADS = `{v}` is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => 1,
        _ => EXIT_CONFIG,
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<ExitCode> {
    if let Command::Replay { metadata } = &cli.command {
        let record: RunRecord = serde_json::from_str(&std::fs::read_to_string(metadata)?)?;
        let replayed = Cli::try_parse_from(&record.argv).map_err(|e| Error::Parse(e.to_string()))?;
        if matches!(replayed.command, Command::Replay { .. }) {
            return Err(Error::InvalidParameter("a run record cannot replay another replay".into()));
        }
        return execute(replayed, record.argv);
    }
    let outcome = run(&cli.command)?;
    let format = cli.out.unwrap_or(if outcome.table.is_some() { Format::Csv } else { Format::Json });
    let text = render(&outcome, format)?;
    match &cli.output {
        Some(path) => {
            std::fs::write(path, &text)?;
            let record = RunRecord {
                program: "spinlab".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                argv,
                seed: outcome.seed,
                parameters: serde_json::to_value(&cli.command)?,
                output: Some(path.clone()),
                within_tolerance: outcome.within_tolerance,
            };
            let mut meta = path.clone().into_os_string();
            meta.push(".run.json");
            std::fs::write(meta, serde_json::to_string_pretty(&record)?)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
        }
    }
    if cli.strict && !outcome.within_tolerance {
        eprintln!("strict: a declared tolerance was violated");
        return Ok(ExitCode::from(EXIT_STRICT));
    }
    Ok(ExitCode::SUCCESS)
}

fn render(outcome: &Outcome, format: Format) -> Result<String> {
    match (format, &outcome.table) {
        (Format::Json, Some(t)) => {
            let rows: Vec<Value> = t
                .rows
                .iter()
                .map(|r| Value::Object(t.headers.iter().cloned().zip(r.iter().map(|v| json!(v))).collect()))
                .collect();
            // the record carries the summary (fit, diagnostics); rows hold the table
            let mut record = outcome.record.clone();
            if let Value::Object(m) = &mut record {
                m.insert("rows".into(), Value::Array(rows));
            }
            Ok(serde_json::to_string_pretty(&record)? + "\n")
        }
        (Format::Json, None) => Ok(serde_json::to_string_pretty(&outcome.record)? + "\n"),
        (Format::Csv, Some(t)) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&t.headers)?;
            for r in &t.rows {
                w.write_record(r.iter().map(|v| v.to_string()))?;
            }
            finish_csv(w)
        }
        (Format::Csv, None) => {
            // one row; nested values are embedded as JSON text
            let mut w = csv::Writer::from_writer(Vec::new());
            let obj = match &outcome.record {
                Value::Object(m) => m.clone(),
                other => [("value".to_string(), other.clone())].into_iter().collect(),
            };
            w.write_record(obj.keys())?;
            w.write_record(obj.values().map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }))?;
            finish_csv(w)
        }
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn save_martingale(path: &Option<PathBuf>, m: &MarkovMartingale) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_string(&m.to_file())?)?;
    }
    Ok(())
}

fn field_table(field: &HJField, stride: usize) -> Table {
    let stride = stride.max(1);
    let h = field.h_grid();
    let idx: Vec<usize> = (0..field.points).step_by(stride).collect();
    let mut rows = Vec::new();
    for (t, slice) in field.times.iter().zip(&field.values) {
        if field.dimension == 1 {
            rows.extend(idx.iter().map(|&i| vec![*t, h[i], slice[i]]));
        } else {
            for &i in &idx {
                rows.extend(idx.iter().map(|&j| vec![*t, h[i], h[j], slice[i * field.points + j]]));
            }
        }
    }
    let headers = if field.dimension == 1 { vec!["t", "h", "f"] } else { vec!["t", "h1", "h2", "f"] };
    Table {
        headers: headers.into_iter().map(String::from).collect(),
        rows,
    }
}

fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::Model(ModelCmd::Validate(m)) => {
            let model = m.load()?;
            Outcome::record(
                &json!({
                    "name": model.name,
                    "species": model.species(),
                    "lambda": model.lambda(),
                    "max_degree": model.mixture().max_degree(),
                    "toml": model.to_toml_string(),
                }),
                None,
            )
        }
        Command::Mc(cmd) => run_mc(cmd),
        Command::Parisi(cmd) => run_parisi(cmd),
        Command::Uninvert(cmd) => run_uninvert(cmd),
        Command::Hj(cmd) => run_hj(cmd),
        Command::Compare(a) => {
            let cfg = CompareConfig {
                beta: a.beta,
                sizes: a.sizes.clone(),
                samples: a.samples,
                seed: a.seed,
                parisi_atoms: a.parisi_atoms,
                tolerances: Tolerances {
                    analytic: a.tol_analytic,
                    enumeration: a.tol_enumeration,
                    scheme: a.tol_scheme,
                    ..Default::default()
                },
            };
            let report = compare(&a.model.load()?, &cfg)?;
            let mut out = Outcome::record(&report, Some(a.seed))?;
            out.within_tolerance = report.pass;
            Ok(out)
        }
        Command::Replay { .. } => unreachable!("handled by execute"),
    }
}

fn run_mc(cmd: &McCmd) -> Result<Outcome> {
    match cmd {
        McCmd::Enumerate { model, n, beta, seed } => {
            let sample = sample_disorder(&model.load()?, *n, *seed)?;
            let (sigma, energy) = max_energy(&sample, MaxMethod::Exhaustive)?;
            Outcome::record(
                &json!({
                    "n": n,
                    "beta": beta,
                    "free_energy": exact_log_partition(&sample, *beta)?,
                    "max_energy_per_spin": energy / *n as f64,
                    "maximizer": sigma.as_slice(),
                }),
                Some(*seed),
            )
        }
        McCmd::Quenched { model, n, beta, samples, seed } => {
            Outcome::record(&quenched_free_energy(&model.load()?, *n, *beta, *samples, *seed)?, Some(*seed))
        }
        McCmd::Max { model, sizes, samples, seed, method } => {
            let method = match method {
                MethodArg::Exhaustive => MaxMethod::Exhaustive,
                MethodArg::BranchAndBound => MaxMethod::BranchAndBound,
            };
            let sweep = max_energy_sweep(&model.load()?, sizes, *samples, *seed, method)?;
            let mut out = Outcome::record(&sweep, Some(*seed))?;
            out.table = Some(Table {
                headers: vec!["n".into(), "mean".into(), "std_error".into()],
                rows: sweep.points.iter().map(|p| vec![p.n as f64, p.mean, p.std_error]).collect(),
            });
            Ok(out)
        }
        McCmd::Enriched { model, n, t, h, samples, seed } => {
            Outcome::record(&enriched_free_energy(&model.load()?, *n, *t, h, *samples, *seed)?, Some(*seed))
        }
        McCmd::Derivcheck { model, n, t, h, samples, seed, sigmas, allowance } => {
            let report = derivative_identity_check(&model.load()?, *n, *t, h, *samples, *seed)?;
            let mut out = Outcome::record(&report, Some(*seed))?;
            out.within_tolerance = report.passes(*sigmas, *allowance);
            Ok(out)
        }
        McCmd::Iams { n, steps, seed, martingale } => {
            let (martingale, alg) = match martingale {
                Some(p) => (MarkovMartingale::from_file(load_json::<MartingaleFile>(p)?)?, None),
                None => {
                    let a = alg_threshold(&ModelSpec::sk(), &MartingaleGrid::default(), *seed, &AlgOptions::default())?;
                    (a.martingale, Some(a.value))
                }
            };
            let sample = DisorderSample::draw(&ModelSpec::sk(), *n, *seed, 0)?;
            let result = incremental_optimize(&sample, &martingale, *steps)?;
            Outcome::record(
                &json!({
                    "n": n,
                    "steps": steps,
                    "energy": result.energy,
                    "iterate_energy": result.iterate_energy,
                    "alg_threshold": alg,
                    "checkpoints": result.checkpoints,
                }),
                Some(*seed),
            )
        }
    }
}

fn run_parisi(cmd: &ParisiCmd) -> Result<Outcome> {
    match cmd {
        ParisiCmd::Solve { beta, measure, dx, nodes } => {
            let mu = measure.load()?;
            let grid = GridConfig {
                dx: *dx,
                nodes: *nodes,
                ..Default::default()
            };
            let sol = solve_parisi_pde(&mu, *beta, &grid)?;
            Outcome::record(
                &json!({
                    "beta": beta,
                    "measure": mu,
                    "functional": sol.functional(),
                    "phi_at_origin": sol.value_at_origin(),
                    "max_abs_slope": sol.max_abs_slope(),
                    "tail_defect": sol.tail_defect,
                }),
                None,
            )
        }
        ParisiCmd::Opt { beta, k, restarts, seed } => {
            let opts = ParisiOptions {
                restarts: *restarts,
                ..Default::default()
            };
            Outcome::record(&optimize_parisi(*beta, *k, *seed, &opts)?, Some(*seed))
        }
    }
}

fn run_uninvert(cmd: &UninvertCmd) -> Result<Outcome> {
    match cmd {
        UninvertCmd::Eval { beta, martingale, measure, steps } => {
            let alpha = match martingale {
                Some(p) => MarkovMartingale::from_file(load_json::<MartingaleFile>(p)?)?,
                None => martingale_from_measure(&measure.load()?, *beta, &MartingaleGrid::with_steps(*steps))?,
            };
            let value = evaluate_uninverted(&alpha, *beta)?;
            Outcome::record(
                &json!({
                    "value": value,
                    "consistency_defect": alpha.consistency_defect(),
                    "monotonicity_defect": alpha.monotonicity_defect(),
                }),
                None,
            )
        }
        UninvertCmd::Opt { beta, steps, restarts, seed, save_martingale: save } => {
            let opts = UninvertedOptions {
                restarts: *restarts,
                ..Default::default()
            };
            let best = optimize_uninverted(*beta, &MartingaleGrid::with_steps(*steps), *seed, &opts)?;
            save_martingale(save, &best.martingale)?;
            Outcome::record(
                &json!({
                    "beta": beta,
                    "value": best.value,
                    "params": best.params,
                    "evaluations": best.evaluations,
                    "converged": best.converged,
                }),
                Some(*seed),
            )
        }
        UninvertCmd::Alg { model, steps, restarts, seed, tolerance, save_martingale: save } => {
            let opts = AlgOptions {
                restarts: *restarts,
                tolerance: *tolerance,
                ..Default::default()
            };
            let alg = alg_threshold(&model.load()?, &MartingaleGrid::with_steps(*steps), *seed, &opts)?;
            save_martingale(save, &alg.martingale)?;
            let mut out = Outcome::record(
                &json!({
                    "value": alg.value,
                    "residual": alg.residual,
                    "flagged": alg.flagged,
                    "params": alg.params,
                    "evaluations": alg.evaluations,
                }),
                Some(*seed),
            )?;
            out.within_tolerance = !alg.flagged;
            Ok(out)
        }
    }
}

fn run_hj(cmd: &HjCmd) -> Result<Outcome> {
    match cmd {
        HjCmd::Scalar { model, t_max, grid } => {
            let field = solve_hj_scalar(&model.load()?, *t_max, &grid.grid())?;
            field_outcome(&field, grid.stride)
        }
        HjCmd::Bipartite { lambda1, t_max, grid } => {
            let field = solve_hj_bipartite(*lambda1, 1.0 - lambda1, *t_max, &grid.grid())?;
            field_outcome(&field, grid.stride)
        }
        HjCmd::Hopflax { model, t, path, mesh, restarts, seed } => {
            let q = match path {
                Some(p) => load_json::<StepPath>(p)?,
                None => StepPath::constant(0.0)?,
            };
            let opts = HopfLaxOptions {
                mesh: *mesh,
                restarts: *restarts,
                seed: *seed,
                ..Default::default()
            };
            let r = hopf_lax(&model.load()?, *t, &q, &opts)?;
            let mut out = Outcome::record(&r, Some(*seed))?;
            out.within_tolerance = r.converged;
            Ok(out)
        }
        HjCmd::Psi1 { path, h } => {
            let (q, value) = match (path, h) {
                (Some(p), _) => {
                    let q = load_json::<StepPath>(p)?;
                    let v = psi1_path(&q)?;
                    (q, v)
                }
                (None, h) => {
                    let h = h.unwrap_or(0.0);
                    if !(h >= 0.0) {
                        return Err(Error::InvalidParameter(format!("h = {h} must be nonnegative")));
                    }
                    (StepPath::constant(h)?, psi1_scalar(h))
                }
            };
            Outcome::record(&json!({ "path": q, "psi1": value }), None)
        }
    }
}

fn field_outcome(field: &HJField, stride: usize) -> Result<Outcome> {
    for w in &field.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Outcome {
        record: json!({
            "dimension": field.dimension,
            "times": field.times,
            "steps": field.steps,
            "max_speed": field.max_speed,
            "warnings": field.warnings,
        }),
        table: Some(field_table(field, stride)),
        within_tolerance: field.warnings.is_empty(),
        seed: None,
    })
}
