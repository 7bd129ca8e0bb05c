use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use antiviral::analysis::{
    early_treatment_time, maximal_early_treatment_time, EarlyTreatmentSearch,
};
use antiviral::dynamics::{integrate, EfficacySchedule, IntegrationOptions, ModelKind, PatientParameters};
use antiviral::estimation::{fit_patient, profile_ci, FitConfig, FreeParam, ProfileSettings};
use antiviral::metrics::{metrics_report_with, MetricsOptions, DEFAULT_DETECTION_LIMIT, DEFAULT_HORIZON};
use antiviral::workbench::{
    effective_set_grid, export_results, load_viral_csv, registry_patient, run_scenario, table2, threshold_curve,
    write_results, write_rows, ExportFormat, ScenarioConfig, MAX_TRAJECTORY_POINTS, REGISTRY_C, REGISTRY_U0,
    REGISTRY_V0,
};
use antiviral::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "antiviral", version, about = "Within-host viral dynamics under antiviral treatment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Full,
    Reduced,
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct RunArgs {
    /// Registry patient id (A to I).
    #[arg(long)]
    patient: String,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: f64,
    #[arg(long, default_value_t = DEFAULT_DETECTION_LIMIT)]
    detection_limit: f64,
    #[arg(long, value_enum, default_value = "full")]
    model: Model,
}

impl RunArgs {
    fn params(&self) -> Result<PatientParameters> {
        registry_patient(&self.patient)
    }

    fn integration(&self) -> IntegrationOptions {
        let model_kind = match self.model {
            Model::Full => ModelKind::Full,
            Model::Reduced => ModelKind::Reduced,
        };
        IntegrationOptions { model_kind, ..Default::default() }
    }

    fn metrics_options(&self) -> MetricsOptions {
        MetricsOptions { detection_limit: self.detection_limit, horizon: self.horizon, integration: self.integration() }
    }
}

#[derive(Args)]
struct TreatmentArgs {
    /// Treatment start in days; omit for an untreated run.
    #[arg(long)]
    t_tr: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    eta_beta: f64,
    #[arg(long, default_value_t = 0.0)]
    eta_p: f64,
}

impl TreatmentArgs {
    fn schedule(&self) -> Result<EfficacySchedule> {
        let s = EfficacySchedule { t_tr: self.t_tr, eta_beta: self.eta_beta, eta_p: self.eta_p };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one patient and write the trajectory.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        treatment: TreatmentArgs,
        /// Number of evenly spaced output points.
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Treatment metrics against the untreated run.
    Metrics {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        treatment: TreatmentArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Critical efficacy along the untreated run, or the effective set at one start time.
    Thresholds {
        #[command(flatten)]
        run: RunArgs,
        /// Spacing of treatment times for the critical-efficacy curve.
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        /// Print the effective-set grid at this start time instead.
        #[arg(long)]
        t_tr: Option<f64>,
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a scenario file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit β, δ and p to a viral-load CSV.
    Fit {
        /// CSV with columns t_dpi,viral_load.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated free parameters.
        #[arg(long, default_value = "beta,delta,p", value_delimiter = ',')]
        free: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_generations: Option<usize>,
        /// Also compute profile intervals at this confidence level.
        #[arg(long)]
        ci: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Untreated characteristics of the registry patients.
    Table2 {
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: f64,
        #[arg(long, default_value_t = DEFAULT_DETECTION_LIMIT)]
        detection_limit: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Latest treatment start that still delays the viral peak.
    #[command(name = "t-e")]
    TE {
        #[command(flatten)]
        run: RunArgs,
        /// Efficacy to evaluate; omit to maximize over an efficacy grid.
        #[arg(long)]
        eta_p: Option<f64>,
        #[arg(long, default_value_t = 20)]
        n_eta: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn emit_json(value: &serde_json::Value, output: &OutputArgs) -> Result<()> {
    let mut w = sink(&output.out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { run, treatment, points, output } => {
            if !(2..=MAX_TRAJECTORY_POINTS).contains(&points) {
                return Err(Error::Config(format!("points must lie in [2, {MAX_TRAJECTORY_POINTS}]")));
            }
            let traj = integrate(&run.params()?, &treatment.schedule()?, run.horizon, &run.integration())?;
            let format = output.format.map_or(ExportFormat::Csv, Into::into);
            let mut w = sink(&output.out)?;
            write_rows(&traj.resample(points), format, &mut w)?;
            w.flush()?;
        }
        Command::Metrics { run, treatment, output } => {
            let report = metrics_report_with(&run.params()?, &treatment.schedule()?, &run.metrics_options())?;
            match output.format.map_or(ExportFormat::Json, Into::into) {
                ExportFormat::Json => emit_json(&serde_json::to_value(report)?, &output)?,
                ExportFormat::Csv => {
                    let mut w = sink(&output.out)?;
                    write_rows(&[report], ExportFormat::Csv, &mut w)?;
                    w.flush()?;
                }
            }
        }
        Command::Thresholds { run, step, t_tr, grid, output } => {
            let params = run.params()?;
            let format = output.format.map_or(ExportFormat::Csv, Into::into);
            let mut w = sink(&output.out)?;
            match t_tr {
                Some(t) => write_rows(&effective_set_grid(&params, t, grid, &run.metrics_options())?, format, &mut w)?,
                None => {
                    if !(step > 0.0) {
                        return Err(Error::Config("step must be > 0".into()));
                    }
                    let n = (run.horizon / step).floor() as usize;
                    let times: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
                    write_rows(&threshold_curve(&params, &times, &run.metrics_options())?, format, &mut w)?;
                }
            }
            w.flush()?;
        }
        Command::Sweep { config, seed, output } => {
            let mut config = ScenarioConfig::load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let result = run_scenario(&config)?;
            let format = output.format.map_or(ExportFormat::Csv, Into::into);
            match &output.out {
                Some(path) => export_results(&result, format, path)?,
                None => write_results(&result, format, std::io::stdout().lock())?,
            }
        }
        Command::Fit { data, free, seed, max_generations, ci, output } => {
            let data = load_viral_csv(&data)?;
            let base = PatientParameters { beta: 1e-7, delta: 1.0, p: 1.0, c: REGISTRY_C, u0: REGISTRY_U0, i0: 0.0, v0: REGISTRY_V0 };
            let mut config = FitConfig::standard(base);
            let wanted: Vec<FreeParam> = free.iter().map(|s| s.trim().parse()).collect::<Result<_>>()?;
            config.free.retain(|b| wanted.contains(&b.param));
            config.de.seed = seed;
            if let Some(g) = max_generations {
                config.de.max_generations = g;
            }
            let fit = fit_patient(&data, &config)?;
            let intervals = match ci {
                Some(level) => config
                    .free
                    .iter()
                    .map(|b| profile_ci(&data, &fit, &config, b.param, level, &ProfileSettings::default()))
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let value = serde_json::json!({
                "params": fit.params,
                "rmsle": fit.rmsle,
                "generations_used": fit.generations_used,
                "converged": fit.converged,
                "evaluations": fit.evaluations,
                "seed": seed,
                "intervals": intervals,
            });
            emit_json(&value, &output)?;
        }
        Command::Table2 { horizon, detection_limit, output } => {
            let options = MetricsOptions { horizon, detection_limit, ..Default::default() };
            let rows = table2(&options)?;
            let mut w = sink(&output.out)?;
            write_rows(&rows, output.format.map_or(ExportFormat::Csv, Into::into), &mut w)?;
            w.flush()?;
        }
        Command::TE { run, eta_p, n_eta, output } => {
            let params = run.params()?;
            let search = EarlyTreatmentSearch { horizon: run.horizon, integration: run.integration(), ..Default::default() };
            let value = match eta_p {
                Some(eta) => serde_json::json!({ "eta_p": eta, "t_e": early_treatment_time(&params, eta, &search)? }),
                None => serde_json::to_value(maximal_early_treatment_time(&params, n_eta, &search)?)?,
            };
            emit_json(&value, &output)?;
        }
    }
    Ok(())
}

fn report(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
