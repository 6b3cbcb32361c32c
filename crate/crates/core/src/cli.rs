//! Command-line front end: `estimate`, `calibrate`, `compare`, `report`.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 solver
//! non-convergence.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{compare_methods, BaselineConfig, CompareContext};
use crate::calibration::{ingest_records, AlphaStats, CalibrationReport};
use crate::devices::{DeviceDb, RegionTable};
use crate::error::Error;
use crate::pipeline::{
    estimate, scaling_report, AlphaFixture, AlphaMode, ComputeSource, DeviceOverrides, EstimateContext,
    EstimateReport, EstimateRequest, IntensitySource, ModelEstimate,
};
use crate::throughput::SolverConfig;

pub const DEVICES_DB_ENV: &str = "CARBONEVAL_DEVICES_DB";

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "carboneval", version, about = "Estimate the carbon footprint of a training run before it starts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate GPU-time, energy and emissions for one run (or every run in --records)
    Estimate(EstimateArgs),
    /// Back-solve throughput exponents from historical runs and summarise them per device family
    Calibrate(CalibrateArgs),
    /// Compare the static regression baselines with the dynamic-throughput estimate
    Compare(CompareArgs),
    /// Join estimates with quality metrics into a carbon-vs-performance scatter CSV
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlphaModeArg {
    Midpoint,
    Interval,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Lower bound on log10(alpha)
    #[arg(long, default_value_t = -12.0, allow_negative_numbers = true)]
    alpha_min: f64,
    /// Upper bound on log10(alpha)
    #[arg(long, default_value_t = 200.0, allow_negative_numbers = true)]
    alpha_max: f64,
    /// Iteration cap for the GPU-time and alpha solvers
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, Error> {
        if !(self.alpha_min < self.alpha_max) {
            return Err(Error::Domain(format!(
                "--alpha-min {} must be below --alpha-max {}",
                self.alpha_min, self.alpha_max
            )));
        }
        Ok(SolverConfig {
            log10_alpha_min: self.alpha_min,
            log10_alpha_max: self.alpha_max,
            max_iterations: self.max_iterations,
            ..SolverConfig::default()
        })
    }
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Total training compute in FLOP
    #[arg(long, conflicts_with_all = ["params", "data_size", "records"])]
    flops: Option<f64>,
    /// Parameter count (with --data-size)
    #[arg(long, requires = "data_size")]
    params: Option<f64>,
    /// Training tokens or datapoints (with --params)
    #[arg(long, requires = "params")]
    data_size: Option<f64>,
    /// FLOP per parameter per token
    #[arg(long, default_value_t = 6.0)]
    factor: f64,
    /// Device name, e.g. "NVIDIA A100 SXM4 80 GB"
    #[arg(long, required_unless_present = "records")]
    device: Option<String>,
    /// Region code looked up in --regions
    #[arg(long, conflicts_with = "intensity")]
    region: Option<String>,
    /// Grid carbon intensity in g CO2eq/kWh
    #[arg(long)]
    intensity: Option<f64>,
    /// Region table CSV (region_code,g_per_kwh); defaults to the bundled sample
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pue: f64,
    #[arg(long, value_enum)]
    alpha_mode: Option<AlphaModeArg>,
    /// Explicit log10(alpha)
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Output of `calibrate`; its family statistics replace the reference ranges
    #[arg(long)]
    alpha_stats: Option<PathBuf>,
    /// Device database JSON layered over the built-in families
    #[arg(long)]
    devices_db: Option<PathBuf>,
    /// Override the family TDP (W)
    #[arg(long)]
    tdp: Option<f64>,
    /// Override the family embodied rate (g CO2eq per GPU-hour)
    #[arg(long)]
    beta: Option<f64>,
    /// Estimate every run in a records CSV; emits a JSON list for `report`
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    records: PathBuf,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    devices_db: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Records the baselines are fitted on
    #[arg(long)]
    train: PathBuf,
    /// Records with actual emissions to evaluate
    #[arg(long)]
    eval: PathBuf,
    #[arg(long)]
    devices_db: Option<PathBuf>,
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    alpha_stats: Option<PathBuf>,
    /// JSON list of {model, log10_alpha} used by the dynamic method
    #[arg(long)]
    alpha_fixtures: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    degree: u32,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 2)]
    min_leaf: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 10.0)]
    c: f64,
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Records carrying metric_name/metric_value
    #[arg(long)]
    records: PathBuf,
    /// JSON list written by `estimate --records ... --format json`
    #[arg(long)]
    estimates: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Convergence { .. } => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(rendered.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(rendered.as_bytes());
                    EXIT_INPUT
                }
            };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => run_estimate(a, out, err),
        Command::Calibrate(a) => run_calibrate(a, out, err),
        Command::Compare(a) => run_compare(a, out, err),
        Command::Report(a) => run_report(a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), Error> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn load_devices(flag: Option<&Path>) -> Result<DeviceDb, Error> {
    let from_env = std::env::var_os(DEVICES_DB_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    match flag.map(Path::to_path_buf).or(from_env) {
        Some(path) => DeviceDb::load_over_builtin(path),
        None => Ok(DeviceDb::builtin()),
    }
}

fn load_regions(flag: Option<&Path>) -> Result<RegionTable, Error> {
    match flag {
        Some(p) => RegionTable::load(p),
        None => Ok(RegionTable::sample()),
    }
}

fn load_stats(flag: Option<&Path>) -> Result<Option<BTreeMap<String, AlphaStats>>, Error> {
    flag.map(|p| CalibrationReport::load(p).map(|r| r.stats_by_family()))
        .transpose()
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serialises");
    s.push('\n');
    s
}

fn resolve_mode(a: &EstimateArgs) -> Result<AlphaMode, Error> {
    match (a.alpha_mode, a.alpha) {
        (None | Some(AlphaModeArg::Explicit), Some(l)) => Ok(AlphaMode::Explicit(l)),
        (Some(AlphaModeArg::Explicit), None) => Err(Error::Domain("--alpha-mode explicit needs --alpha".into())),
        (Some(_), Some(_)) => Err(Error::Domain("--alpha only applies to --alpha-mode explicit".into())),
        (None | Some(AlphaModeArg::Midpoint), None) => Ok(AlphaMode::Midpoint),
        (Some(AlphaModeArg::Interval), None) => Ok(AlphaMode::Interval),
    }
}

fn tonnes(kg: f64) -> String {
    format!("{:.2}", kg / 1000.0)
}

fn render_table(r: &EstimateReport) -> String {
    let mut s = String::new();
    let res = &r.resolved;
    let interval_t = |iv: Option<[f64; 2]>| iv.map(|[lo, hi]| format!("  [{}, {}]", tonnes(lo), tonnes(hi))).unwrap_or_default();
    let _ = writeln!(s, "family              {}", res.family);
    let _ = writeln!(s, "log10(alpha)        {}", res.log10_alpha);
    let _ = writeln!(s, "TDP (W)             {}", res.tdp_w);
    let _ = writeln!(
        s,
        "beta (g/GPUh)       {}",
        res.beta_g_per_gpuh.map_or_else(|| "-".to_string(), |b| b.to_string())
    );
    let _ = writeln!(s, "intensity (g/kWh)   {}", res.intensity_g_per_kwh);
    let _ = writeln!(s, "PUE                 {}", res.pue);
    let _ = writeln!(
        s,
        "GPU-hours           {:.2}{}",
        r.gpu_hours,
        r.gpu_hours_interval.map(|[lo, hi]| format!("  [{lo:.2}, {hi:.2}]")).unwrap_or_default()
    );
    let _ = writeln!(
        s,
        "energy (kWh)        {:.2}{}",
        r.energy_kwh,
        r.energy_kwh_interval.map(|[lo, hi]| format!("  [{lo:.2}, {hi:.2}]")).unwrap_or_default()
    );
    let _ = writeln!(s, "operational (tCO2e) {}{}", tonnes(r.operational_kg), interval_t(r.operational_interval_kg));
    let _ = writeln!(s, "embodied (tCO2e)    {}{}", tonnes(r.embodied_kg), interval_t(r.embodied_interval_kg));
    let _ = writeln!(s, "total (tCO2e)       {}{}", tonnes(r.total_kg), interval_t(r.total_interval_kg));
    s
}

fn render_csv(r: &EstimateReport) -> String {
    let res = &r.resolved;
    let pair = |iv: Option<[f64; 2]>| iv.map(|[lo, hi]| format!("{},{}", tonnes(lo), tonnes(hi))).unwrap_or_else(|| ",".into());
    format!(
        "family,log10_alpha,gpu_hours,energy_kwh,operational_tco2,embodied_tco2,total_tco2,\
         operational_lo_tco2,operational_hi_tco2,embodied_lo_tco2,embodied_hi_tco2,total_lo_tco2,total_hi_tco2\n\
         {},{},{:.2},{:.2},{},{},{},{},{},{}\n",
        res.family,
        res.log10_alpha,
        r.gpu_hours,
        r.energy_kwh,
        tonnes(r.operational_kg),
        tonnes(r.embodied_kg),
        tonnes(r.total_kg),
        pair(r.operational_interval_kg),
        pair(r.embodied_interval_kg),
        pair(r.total_interval_kg),
    )
}

fn run_estimate(a: EstimateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    let devices = load_devices(a.devices_db.as_deref())?;
    let regions = load_regions(a.regions.as_deref())?;
    let stats = load_stats(a.alpha_stats.as_deref())?;
    let ctx = EstimateContext {
        devices: &devices,
        regions: &regions,
        alpha_stats: stats.as_ref(),
        solver: a.solver.config()?,
    };
    let mode = resolve_mode(&a)?;
    let overrides = DeviceOverrides { tdp_w: a.tdp, beta_g_per_gpuh: a.beta };

    if let Some(path) = &a.records {
        let ingested = ingest_records(path)?;
        for r in &ingested.rejections {
            let _ = writeln!(err, "warning: line {} ({}): {}", r.line, r.model, r.reason);
        }
        let mut estimates = Vec::new();
        for rec in &ingested.records {
            let mut req = EstimateRequest::from_record(rec, mode)?;
            req.pue = a.pue;
            req.overrides = overrides.clone();
            match estimate(&req, &ctx) {
                Ok(report) => estimates.push(ModelEstimate { model: rec.model.clone(), report }),
                Err(e @ Error::Convergence { .. }) => return Err(e),
                Err(e) => {
                    let _ = writeln!(err, "warning: {}: {e}", rec.model);
                }
            }
        }
        return write_out(out, &to_json(&estimates));
    }

    let compute = match (a.flops, a.params, a.data_size) {
        (Some(f), _, _) => ComputeSource::TotalFlops(f),
        (None, Some(params), Some(data_size)) => ComputeSource::ParamsData { params, data_size, factor: a.factor },
        _ => return Err(Error::Domain("give --flops, or --params with --data-size".into())),
    };
    let intensity = match (&a.region, a.intensity) {
        (Some(code), _) => IntensitySource::Region(code.clone()),
        (None, Some(g)) => IntensitySource::Direct(g),
        (None, None) => return Err(Error::Domain("give --region or --intensity".into())),
    };
    let req = EstimateRequest {
        compute,
        device_raw: a.device.clone().unwrap_or_default(),
        intensity,
        pue: a.pue,
        alpha_mode: mode,
        overrides,
    };
    let report = estimate(&req, &ctx)?;
    let text = match a.format {
        Format::Json => to_json(&report),
        Format::Csv => render_csv(&report),
        Format::Table => render_table(&report),
    };
    write_out(out, &text)
}

fn run_calibrate(a: CalibrateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    let devices = load_devices(a.devices_db.as_deref())?;
    let ingested = ingest_records(&a.records)?;
    let report = CalibrationReport::build(&ingested, &devices, &a.solver.config()?);
    for r in &report.rejections {
        let _ = writeln!(err, "warning: line {} ({}): {}", r.line, r.model, r.reason);
    }
    for f in &report.failures {
        let _ = writeln!(err, "warning: {}: {}", f.model, f.reason);
    }
    let json = to_json(&report);
    match &a.out {
        Some(path) => fs::write(path, json).map_err(|e| Error::io(path, e)),
        None => write_out(out, &json),
    }
}

fn run_compare(a: CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    let devices = load_devices(a.devices_db.as_deref())?;
    let regions = load_regions(a.regions.as_deref())?;
    let stats = load_stats(a.alpha_stats.as_deref())?;
    let fixtures: Option<BTreeMap<String, f64>> = match &a.alpha_fixtures {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let list: Vec<AlphaFixture> = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Some(list.into_iter().map(|f| (f.model, f.log10_alpha)).collect())
        }
        None => None,
    };
    let train = ingest_records(&a.train)?;
    let eval = ingest_records(&a.eval)?;
    for r in train.rejections.iter().chain(&eval.rejections) {
        let _ = writeln!(err, "warning: line {} ({}): {}", r.line, r.model, r.reason);
    }
    let ctx = CompareContext {
        devices: &devices,
        regions: &regions,
        alpha_stats: stats.as_ref(),
        alpha_fixtures: fixtures.as_ref(),
        solver: a.solver.config()?,
        baselines: BaselineConfig {
            degree: a.degree,
            max_depth: a.max_depth,
            min_leaf: a.min_leaf,
            epsilon: a.epsilon,
            c: a.c,
            iterations: a.iterations,
            seed: a.seed,
        },
    };
    let table = compare_methods(&train.records, &eval.records, &ctx);
    for w in &table.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let text = match a.format {
        Format::Json => to_json(&table),
        Format::Csv | Format::Table => table.to_csv(),
    };
    write_out(out, &text)
}

fn run_report(a: ReportArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Error> {
    let ingested = ingest_records(&a.records)?;
    let text = fs::read_to_string(&a.estimates).map_err(|e| Error::io(&a.estimates, e))?;
    let estimates: Vec<ModelEstimate> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: a.estimates.display().to_string(),
        message: e.to_string(),
    })?;
    let (points, warnings) = scaling_report(&ingested.records, &estimates);
    for w in &warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["model", "total_tco2", "metric_name", "metric_value"])
        .and_then(|_| {
            points.iter().try_for_each(|p| {
                wtr.write_record([
                    p.model.clone(),
                    p.total_tco2.to_string(),
                    p.metric_name.clone(),
                    p.metric_value.to_string(),
                ])
            })
        })
        .map_err(|e| Error::Domain(e.to_string()))?;
    let bytes = wtr.into_inner().map_err(|e| Error::Domain(e.to_string()))?;
    out.write_all(&bytes).map_err(|e| Error::io("<stdout>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (u8, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = dispatch(std::iter::once("carboneval").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, out, err) = run(&["frobnicate"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(out.is_empty());
        assert!(err.contains("Usage"), "{err}");
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run(&["estimate", "--flops", "1e21", "--device", "A100", "--intensity", "1", "--bogus"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("--bogus"));
    }

    #[test]
    fn help_goes_to_stdout() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("estimate"));
    }

    #[test]
    fn alpha_flags_must_agree() {
        let base = ["estimate", "--flops", "1e21", "--device", "A100", "--intensity", "100"];
        let (code, _, err) = run(&[&base[..], &["--alpha-mode", "interval", "--alpha", "30"]].concat());
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("--alpha"));
        let (code, _, _) = run(&[&base[..], &["--alpha-mode", "explicit"]].concat());
        assert_eq!(code, EXIT_INPUT);
        let (code, out, _) = run(&[&base[..], &["--alpha", "-2.5", "--format", "csv"]].concat());
        assert_eq!(code, EXIT_OK);
        assert!(out.lines().nth(1).unwrap().starts_with("A100,-2.5,"));
    }

    #[test]
    fn params_and_data_size_path() {
        let (code, out, _) = run(&[
            "estimate", "--params", "70e9", "--data-size", "15e12", "--device", "H100", "--intensity", "424",
            "--alpha", "104.78", "--format", "json",
        ]);
        assert_eq!(code, EXIT_OK);
        let rep: EstimateReport = serde_json::from_str(&out).unwrap();
        assert!((rep.operational_kg / 1.96617e6 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn missing_intensity_is_input_error() {
        let (code, _, err) = run(&["estimate", "--flops", "1e21", "--device", "A100"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("--intensity"));
    }

    #[test]
    fn region_lookup_from_sample() {
        let (code, out, _) = run(&["estimate", "--flops", "1e21", "--device", "A100", "--region", "SE", "--format", "json"]);
        assert_eq!(code, EXIT_OK);
        let rep: EstimateReport = serde_json::from_str(&out).unwrap();
        assert_eq!(rep.resolved.intensity_g_per_kwh, 30.0);
        let (code, _, err) = run(&["estimate", "--flops", "1e21", "--device", "A100", "--region", "ZZ"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("--intensity"));
    }

    #[test]
    fn iteration_cap_maps_to_solver_exit() {
        let (code, _, err) = run(&[
            "estimate", "--flops", "3.12e23", "--device", "A100", "--intensity", "581", "--alpha", "22.4",
            "--max-iterations", "1",
        ]);
        assert_eq!(code, EXIT_SOLVER, "{err}");
        assert!(err.contains("did not converge"));
    }

    #[test]
    fn interval_table_is_ordered() {
        let (code, out, _) = run(&[
            "estimate", "--flops", "6.3e24", "--device", "H100", "--intensity", "424", "--alpha-mode", "interval",
        ]);
        assert_eq!(code, EXIT_OK);
        let line = out.lines().find(|l| l.starts_with("operational")).unwrap();
        assert!(line.contains('['), "{line}");
    }
}
