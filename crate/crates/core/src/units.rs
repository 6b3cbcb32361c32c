//! Unit-carrying newtypes.
//!
//! Constructors reject values that break the type's invariant, so the
//! numerical routines only ever see finite, correctly signed quantities.

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: f64 = 3600.0;
/// FLOP in one TFLOP.
pub const FLOP_PER_TFLOP: f64 = 1e12;
/// TFLOP in one ZettaFLOP.
pub const TFLOP_PER_ZETTAFLOP: f64 = 1e9;

fn non_negative(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::domain(format!("{what} must be finite and non-negative, got {v}")))
    }
}

/// The throughput curve parameter, held as `log10(α)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ThroughputParam {
    log10_alpha: f64,
}

impl ThroughputParam {
    pub fn from_log10(log10_alpha: f64) -> Result<Self> {
        if !log10_alpha.is_finite() {
            return Err(Error::domain(format!("log10(alpha) must be finite, got {log10_alpha}")));
        }
        Ok(Self { log10_alpha })
    }

    pub fn log10_alpha(self) -> f64 {
        self.log10_alpha
    }

    /// `ln(α)`; α itself is never formed because it overflows for large exponents.
    pub fn ln_alpha(self) -> f64 {
        self.log10_alpha * std::f64::consts::LN_10
    }
}

/// Total training compute in TFLOP.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ComputeLoad {
    tflop: f64,
}

impl ComputeLoad {
    pub fn from_tflop(tflop: f64) -> Result<Self> {
        Ok(Self { tflop: non_negative("compute", tflop)? })
    }

    pub fn from_flop(flop: f64) -> Result<Self> {
        Self::from_tflop(non_negative("compute", flop)? / FLOP_PER_TFLOP)
    }

    pub fn from_zettaflop(zflop: f64) -> Result<Self> {
        Self::from_tflop(non_negative("compute", zflop)? * TFLOP_PER_ZETTAFLOP)
    }

    pub fn tflop(self) -> f64 {
        self.tflop
    }

    pub fn flop(self) -> f64 {
        self.tflop * FLOP_PER_TFLOP
    }
}

/// Aggregate device-time (devices x duration), stored in GPU-seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GpuTime {
    gpu_seconds: f64,
}

impl GpuTime {
    pub const ZERO: GpuTime = GpuTime { gpu_seconds: 0.0 };

    pub fn from_seconds(gpu_seconds: f64) -> Result<Self> {
        Ok(Self { gpu_seconds: non_negative("GPU-time", gpu_seconds)? })
    }

    pub fn from_hours(gpu_hours: f64) -> Result<Self> {
        Self::from_seconds(non_negative("GPU-time", gpu_hours)? * SECONDS_PER_HOUR)
    }

    pub fn seconds(self) -> f64 {
        self.gpu_seconds
    }

    pub fn hours(self) -> f64 {
        self.gpu_seconds / SECONDS_PER_HOUR
    }
}

/// Device power draw in watts (TDP in practice).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PowerDraw {
    watts: f64,
}

impl PowerDraw {
    pub fn from_watts(watts: f64) -> Result<Self> {
        if watts.is_finite() && watts > 0.0 {
            Ok(Self { watts })
        } else {
            Err(Error::domain(format!("power draw must be positive, got {watts} W")))
        }
    }

    pub fn watts(self) -> f64 {
        self.watts
    }
}

/// Grid carbon intensity in g CO2eq per kWh.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CarbonIntensity {
    g_per_kwh: f64,
}

impl CarbonIntensity {
    pub fn from_g_per_kwh(g_per_kwh: f64) -> Result<Self> {
        Ok(Self { g_per_kwh: non_negative("carbon intensity", g_per_kwh)? })
    }

    pub fn g_per_kwh(self) -> f64 {
        self.g_per_kwh
    }
}

/// Manufacturing emissions attributed per GPU-hour of use, in g CO2eq.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EmbodiedRate {
    g_per_gpuh: f64,
}

impl EmbodiedRate {
    pub fn from_g_per_gpuh(g_per_gpuh: f64) -> Result<Self> {
        Ok(Self { g_per_gpuh: non_negative("embodied rate", g_per_gpuh)? })
    }

    pub fn g_per_gpuh(self) -> f64 {
        self.g_per_gpuh
    }
}

/// Mass of CO2eq in kilograms.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Emission {
    kg_co2eq: f64,
}

impl Emission {
    pub const ZERO: Emission = Emission { kg_co2eq: 0.0 };

    pub fn from_kg(kg: f64) -> Result<Self> {
        Ok(Self { kg_co2eq: non_negative("emission", kg)? })
    }

    pub fn kg(self) -> f64 {
        self.kg_co2eq
    }

    pub fn tonnes(self) -> f64 {
        self.kg_co2eq / 1000.0
    }
}

impl std::ops::Add for Emission {
    type Output = Emission;

    fn add(self, rhs: Emission) -> Emission {
        Emission { kg_co2eq: self.kg_co2eq + rhs.kg_co2eq }
    }
}
