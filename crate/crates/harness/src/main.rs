use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hessmc::{
    output_dir, run_resolved, suite::DESK_PATHS, sweep, validate, verify_suite, Axis, EstimatorId, ExperimentConfig,
    HarnessError, Mutation, OutputFormat, RunRecord, Status, SuiteOptions,
};
use hessmc_core::estimators::HessianMethod;
use hessmc_core::geometry::builtin_models;
use hessmc_core::pathsim::Scheme;

#[derive(Parser)]
#[command(name = "hessmc", version, about = "Monte Carlo estimators for heat semigroups and their Hessians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its JSON record.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run an experiment per axis value and write a CSV table.
    Sweep {
        config: PathBuf,
        /// dt, n_paths or t
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the acceptance battery.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiplies every path count.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Deliberately break the implementation, e.g. flip-curvature.
        #[arg(long)]
        mutate: Option<Mutation>,
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    ListModels,
    ListEstimators,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    drift: Option<String>,
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    function: Option<String>,
    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<EstimatorId>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    v1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    v2: Option<Vec<f64>>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    t_list: Option<Vec<f64>>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    n_paths: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    #[arg(long)]
    noise_substeps: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_method)]
    method: Option<HessianMethod>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
}

fn parse_estimator(s: &str) -> Result<EstimatorId, String> {
    EstimatorId::from_id(s).ok_or_else(|| format!("unknown estimator `{s}`; see list-estimators"))
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "frame-bundle" => Ok(Scheme::FrameBundle),
        "gradient-sde" => Ok(Scheme::GradientSde),
        _ => Err(format!("unknown scheme `{s}`; expected frame-bundle or gradient-sde")),
    }
}

fn parse_method(s: &str) -> Result<HessianMethod, String> {
    match s {
        "elementary" => Ok(HessianMethod::Elementary),
        "feynman-kac" => Ok(HessianMethod::FeynmanKac),
        _ => Err(format!("unknown method `{s}`; expected elementary or feynman-kac")),
    }
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s {
        "json" => Ok(OutputFormat::Json),
        "csv" => Ok(OutputFormat::Csv),
        _ => Err(format!("unknown format `{s}`; expected json or csv")),
    }
}

impl Overrides {
    fn apply(self, c: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { c.$field = v; })*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { c.$field = Some(v); })*};
        }
        set!(model, drift, potential, function, estimator, dt, n_paths, seed, scheme, noise_substeps, threads, format);
        set_opt!(x0, v1, v2, t, t_list, eps, alphas, method, output);
    }
}

fn load(path: &Path, overrides: Overrides) -> Result<ExperimentConfig, HarnessError> {
    let mut config = ExperimentConfig::load(path)?;
    overrides.apply(&mut config);
    Ok(config)
}

fn default_output(config_path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    output_dir().join(format!("{stem}{suffix}.{ext}"))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn record_csv(record: &RunRecord) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "mean", "stderr", "oracle", "abs_err", "pass"])?;
    if let Some(r) = &record.result {
        for (i, label) in r.labels.iter().enumerate() {
            let check = record.checks.iter().find(|c| &c.label == label);
            w.write_record([
                label.clone(),
                r.mean[i].to_string(),
                r.stderr[i].to_string(),
                check.map(|c| c.oracle.to_string()).unwrap_or_default(),
                check.map(|c| c.abs_err.to_string()).unwrap_or_default(),
                check.map(|c| c.pass.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    for c in record.checks.iter().filter(|c| record.result.as_ref().map_or(true, |r| !r.labels.contains(&c.label))) {
        w.write_record([
            c.label.clone(),
            c.estimate.to_string(),
            c.stderr.to_string(),
            c.oracle.to_string(),
            c.abs_err.to_string(),
            c.pass.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

fn cmd_run(path: &Path, overrides: Overrides) -> Result<ExitCode, HarnessError> {
    let config = load(path, overrides)?;
    let resolved = validate(&config)?;
    let record = run_resolved(&resolved)?;
    let (bytes, ext) = match config.format {
        OutputFormat::Json => (record.to_json().into_bytes(), "json"),
        OutputFormat::Csv => (record_csv(&record)?, "csv"),
    };
    let out = config.output.clone().unwrap_or_else(|| default_output(path, "", ext));
    write(&out, &bytes)?;
    if let Some((mean, se)) = record.primary() {
        println!("{} {}: {mean:.6} ± {se:.6}", config.estimator, config.model);
    }
    for c in &record.checks {
        println!(
            "  {} {}: {:.6} vs {:.6} (|err| {:.2e}, tol {:.2e})",
            if c.pass { "pass" } else { "FAIL" },
            c.label,
            c.estimate,
            c.oracle,
            c.abs_err,
            c.tolerance
        );
    }
    if record.status == Status::Degraded {
        println!("  degraded: {} failed paths", record.failed_paths);
    }
    println!("record written to {}", out.display());
    Ok(if record.pass == Some(false) { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_sweep(path: &Path, axis: Axis, values: &[f64], overrides: Overrides) -> Result<ExitCode, HarnessError> {
    let config = load(path, overrides)?;
    let table = sweep(&config, axis, values)?;
    let out = config
        .output
        .clone()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap_or_else(|| default_output(path, "-sweep", "csv"));
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes)?;
    write(&out, &bytes)?;
    let summary = out.with_extension("json");
    write(&summary, serde_json::to_string_pretty(&table).expect("plain data").as_bytes())?;
    print!("{}", String::from_utf8_lossy(&bytes));
    for fit in &table.fits {
        println!(
            "{} {} = {:.4}{} (expected {})",
            if fit.pass { "pass" } else { "FAIL" },
            fit.name,
            fit.value,
            fit.stderr.map(|s| format!(" ± {s:.1e}")).unwrap_or_default(),
            fit.expected
        );
    }
    for (v, e) in &table.errors {
        println!("cell {v} failed: {e}");
    }
    println!("table written to {} and {}", out.display(), summary.display());
    Ok(if table.pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_verify(options: SuiteOptions) -> ExitCode {
    println!("acceptance battery: seed {}, {} paths per estimate", options.seed, (DESK_PATHS as f64 * options.path_scale).round());
    let report = verify_suite(&options, |c| {
        println!("{}", c.line());
        for d in &c.details {
            println!("      {d}");
        }
    });
    let passed = report.criteria.iter().filter(|c| c.pass).count();
    println!("{passed}/{} criteria passed", report.criteria.len());
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run { config, overrides } => cmd_run(&config, overrides),
        Command::Sweep {
            config,
            axis,
            values,
            overrides,
        } => cmd_sweep(&config, axis, &values, overrides),
        Command::Verify {
            seed,
            scale,
            mutate,
            only,
            threads,
        } => Ok(cmd_verify(SuiteOptions {
            seed,
            path_scale: scale,
            mutation: mutate,
            only,
            threads,
        })),
        Command::ListModels => {
            for entry in builtin_models() {
                let drifts: Vec<&str> = entry.drifts.iter().map(|d| d.id()).collect();
                println!("{:<16} drifts: {}", entry.model.id(), drifts.join(", "));
            }
            println!("potentials: zero, const:c=<value>, cos:eps=<value>");
            println!("functions: coord:<k>, square:<k>, sin:<k>, const:<value>");
            Ok(ExitCode::SUCCESS)
        }
        Command::ListEstimators => {
            for e in EstimatorId::ALL {
                println!("{:<20} {}", e.id(), e.description());
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
