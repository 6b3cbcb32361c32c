//! Static-throughput regression baselines and the method comparison harness.
//!
//! Each baseline regresses `log10` of the achieved throughput (TFLOP per
//! GPU-second, averaged over the whole run) on four log-scale features, then
//! predicts GPU-time for a new run as `compute / throughput`.

pub mod polynomial;
pub mod svr;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibration::{derive_compute, derive_gpu_time, AlphaStats, TrainingRecord, DEFAULT_COMPUTE_FACTOR};
use crate::devices::{DeviceDb, RegionTable};
use crate::emissions::{operational_carbon, relative_error};
use crate::error::{Error, Result};
use crate::pipeline::{estimate, AlphaMode, EstimateContext, EstimateRequest};
use crate::throughput::SolverConfig;
use crate::units::{CarbonIntensity, GpuTime};

pub use polynomial::PolynomialModel;
pub use svr::SvrModel;
pub use tree::TreeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub log10_params: f64,
    pub log10_total_flops: f64,
    pub log10_peak_tflops: f64,
    pub log10_device_count: f64,
}

impl FeatureVector {
    /// Features of a record on its resolved device. Missing device counts
    /// count as one device.
    pub fn from_record(rec: &TrainingRecord, db: &DeviceDb) -> Result<Self> {
        let params = rec
            .params
            .filter(|p| *p > 0.0)
            .ok_or_else(|| Error::domain(format!("{}: no parameter count", rec.model)))?;
        let flops = derive_compute(rec, DEFAULT_COMPUTE_FACTOR)?.flop();
        if flops <= 0.0 {
            return Err(Error::domain(format!("{}: zero compute", rec.model)));
        }
        let family = db.resolve(&rec.device_raw)?;
        Ok(Self {
            log10_params: params.log10(),
            log10_total_flops: flops.log10(),
            log10_peak_tflops: family.peak_tflops.log10(),
            log10_device_count: (rec.device_count.unwrap_or(1).max(1) as f64).log10(),
        })
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.log10_params, self.log10_total_flops, self.log10_peak_tflops, self.log10_device_count]
    }
}

/// `log10` of the mean TFLOP per GPU-second a record actually achieved.
pub fn achieved_log10_throughput(rec: &TrainingRecord) -> Result<f64> {
    let load = derive_compute(rec, DEFAULT_COMPUTE_FACTOR)?;
    let time = derive_gpu_time(rec)?;
    if load.tflop() <= 0.0 || time.seconds() <= 0.0 {
        return Err(Error::domain(format!("{}: zero compute or GPU-time", rec.model)));
    }
    Ok((load.tflop() / time.seconds()).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Polynomial,
    Tree,
    Svr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Polynomial => "polynomial",
            ModelKind::Tree => "tree",
            ModelKind::Svr => "svr",
        }
    }
}

/// A fitted regression whose target is `log10` TFLOP per GPU-second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StaticThroughputModel {
    Polynomial(PolynomialModel),
    Tree(TreeModel),
    Svr(SvrModel),
}

impl StaticThroughputModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            StaticThroughputModel::Polynomial(_) => ModelKind::Polynomial,
            StaticThroughputModel::Tree(_) => ModelKind::Tree,
            StaticThroughputModel::Svr(_) => ModelKind::Svr,
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let v = x.to_vec();
        match self {
            StaticThroughputModel::Polynomial(m) => m.predict(&v),
            StaticThroughputModel::Tree(m) => m.predict(&v),
            StaticThroughputModel::Svr(m) => m.predict(&v),
        }
    }
}

fn split(data: &[(FeatureVector, f64)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    data.iter().map(|(x, y)| (x.to_vec(), *y)).unzip()
}

pub fn fit_polynomial(data: &[(FeatureVector, f64)], degree: u32) -> Result<StaticThroughputModel> {
    let (rows, ys) = split(data);
    polynomial::fit(&rows, &ys, degree).map(StaticThroughputModel::Polynomial)
}

pub fn fit_tree(data: &[(FeatureVector, f64)], max_depth: usize, min_leaf: usize) -> Result<StaticThroughputModel> {
    let (rows, ys) = split(data);
    tree::fit(&rows, &ys, max_depth, min_leaf).map(StaticThroughputModel::Tree)
}

pub fn fit_svr(
    data: &[(FeatureVector, f64)],
    epsilon: f64,
    c: f64,
    iterations: usize,
    seed: u64,
) -> Result<StaticThroughputModel> {
    let (rows, ys) = split(data);
    svr::fit(&rows, &ys, epsilon, c, iterations, seed).map(StaticThroughputModel::Svr)
}

/// Baseline hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub degree: u32,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub epsilon: f64,
    pub c: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            max_depth: 4,
            min_leaf: 2,
            epsilon: 0.05,
            c: 10.0,
            iterations: 5000,
            seed: 0,
        }
    }
}

pub const DYNAMIC_METHOD: &str = "dynamic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub predicted_tco2: Vec<Option<f64>>,
    pub delta_pct: Vec<Option<f64>>,
}

/// Predicted emissions per method (rows) and evaluation model (columns).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub models: Vec<String>,
    pub actual_tco2: Vec<f64>,
    pub rows: Vec<MethodRow>,
    pub warnings: Vec<String>,
}

fn fmt_opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map(f).unwrap_or_default()
}

impl ComparisonTable {
    /// One `_tco2` and one `_delta_pct` row per method, tonnes to two
    /// decimals and Δ to one.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for m in &self.models {
            s.push(',');
            s.push_str(m);
        }
        s.push_str("\nactual_tco2");
        for a in &self.actual_tco2 {
            let _ = write!(s, ",{a:.2}");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{}_tco2", row.method);
            for v in &row.predicted_tco2 {
                let _ = write!(s, ",{}", fmt_opt(*v, |x| format!("{x:.2}")));
            }
            let _ = write!(s, "\n{}_delta_pct", row.method);
            for v in &row.delta_pct {
                let _ = write!(s, ",{}", fmt_opt(*v, |x| format!("{x:+.1}")));
            }
            s.push('\n');
        }
        s
    }
}

/// Everything [`compare_methods`] resolves records against.
#[derive(Debug, Clone)]
pub struct CompareContext<'a> {
    pub devices: &'a DeviceDb,
    pub regions: &'a RegionTable,
    pub alpha_stats: Option<&'a BTreeMap<String, AlphaStats>>,
    /// Per-model exponents for the dynamic method; others use the family midpoint.
    pub alpha_fixtures: Option<&'a BTreeMap<String, f64>>,
    pub solver: SolverConfig,
    pub baselines: BaselineConfig,
}

fn record_intensity(rec: &TrainingRecord, regions: &RegionTable) -> Result<CarbonIntensity> {
    match (rec.intensity_g_per_kwh, &rec.region) {
        (Some(g), _) => CarbonIntensity::from_g_per_kwh(g),
        (None, Some(r)) => regions.intensity(r),
        (None, None) => Err(Error::domain(format!("{}: no grid intensity or region", rec.model))),
    }
}

fn static_prediction(
    model: &StaticThroughputModel,
    rec: &TrainingRecord,
    ctx: &CompareContext<'_>,
) -> Result<f64> {
    let x = FeatureVector::from_record(rec, ctx.devices)?;
    let throughput = 10f64.powf(model.predict(&x));
    let load = derive_compute(rec, DEFAULT_COMPUTE_FACTOR)?;
    let time = GpuTime::from_seconds(load.tflop() / throughput)?;
    let family = ctx.devices.resolve(&rec.device_raw)?;
    let (_, emission) = operational_carbon(family.tdp(), time, record_intensity(rec, ctx.regions)?, 1.0)?;
    Ok(emission.tonnes())
}

fn dynamic_prediction(rec: &TrainingRecord, ctx: &CompareContext<'_>) -> Result<f64> {
    let mode = match ctx.alpha_fixtures.and_then(|f| f.get(&rec.model)) {
        Some(&l) => AlphaMode::Explicit(l),
        None => AlphaMode::Midpoint,
    };
    let req = EstimateRequest::from_record(rec, mode)?;
    let ectx = EstimateContext {
        devices: ctx.devices,
        regions: ctx.regions,
        alpha_stats: ctx.alpha_stats,
        solver: ctx.solver,
    };
    Ok(estimate(&req, &ectx)?.operational_kg / 1000.0)
}

/// Fits the three baselines on `train` and predicts operational emissions
/// for each `eval` record alongside the dynamic-throughput pipeline.
///
/// Evaluation records without actual emissions are left out with a warning;
/// a baseline that cannot be fitted is dropped with a warning.
pub fn compare_methods(train: &[TrainingRecord], eval: &[TrainingRecord], ctx: &CompareContext<'_>) -> ComparisonTable {
    let mut table = ComparisonTable::default();

    let mut data = Vec::new();
    for rec in train {
        match FeatureVector::from_record(rec, ctx.devices).and_then(|x| Ok((x, achieved_log10_throughput(rec)?))) {
            Ok(pair) => data.push(pair),
            Err(e) => table.warnings.push(format!("train {}: {e}", rec.model)),
        }
    }

    let eval: Vec<&TrainingRecord> = eval
        .iter()
        .filter(|r| {
            let keep = r.actual_tco2.is_some_and(|a| a != 0.0);
            if !keep {
                table.warnings.push(format!("eval {}: no actual emissions, omitted", r.model));
            }
            keep
        })
        .collect();
    table.models = eval.iter().map(|r| r.model.clone()).collect();
    table.actual_tco2 = eval.iter().map(|r| r.actual_tco2.unwrap_or_default()).collect();

    let b = ctx.baselines;
    let fits: [(ModelKind, Result<StaticThroughputModel>); 3] = [
        (ModelKind::Polynomial, fit_polynomial(&data, b.degree)),
        (ModelKind::Svr, fit_svr(&data, b.epsilon, b.c, b.iterations, b.seed)),
        (ModelKind::Tree, fit_tree(&data, b.max_depth, b.min_leaf)),
    ];

    let push_row = |table: &mut ComparisonTable, method: &str, predict: &dyn Fn(&TrainingRecord) -> Result<f64>| {
        let mut row = MethodRow {
            method: method.to_string(),
            predicted_tco2: Vec::new(),
            delta_pct: Vec::new(),
        };
        for rec in &eval {
            match predict(rec) {
                Ok(p) => {
                    row.predicted_tco2.push(Some(p));
                    row.delta_pct.push(relative_error(p, rec.actual_tco2.unwrap_or_default()).ok());
                }
                Err(e) => {
                    table.warnings.push(format!("{method} {}: {e}", rec.model));
                    row.predicted_tco2.push(None);
                    row.delta_pct.push(None);
                }
            }
        }
        table.rows.push(row);
    };

    for (kind, fitted) in fits {
        match fitted {
            Ok(model) => push_row(&mut table, kind.name(), &|rec| static_prediction(&model, rec, ctx)),
            Err(e) => table.warnings.push(format!("{}: fit failed: {e}", kind.name())),
        }
    }
    push_row(&mut table, DYNAMIC_METHOD, &|rec| dynamic_prediction(rec, ctx));
    table
}
