//! Device-family database and grid carbon intensity lookup.
//!
//! The built-in families carry nameplate TDP, peak throughput, the reference
//! range of `log10(α)` observed per device generation, and embodied-carbon
//! data where available. Raw hardware strings such as
//! `"NVIDIA A100 SXM4 80 GB"` are folded onto a family by token matching.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emissions::DEFAULT_LIFETIME_H;
use crate::error::{Error, Result};
use crate::units::{CarbonIntensity, EmbodiedRate, PowerDraw};

const BUILTIN_DEVICES: &str = include_str!("../data/devices.json");
const BUILTIN_PROCESS_CPA: &str = include_str!("../data/process_cpa.csv");
const SAMPLE_REGIONS: &str = include_str!("../data/regions.csv");

fn default_lifetime() -> f64 {
    DEFAULT_LIFETIME_H
}

/// One device generation. Field names match the JSON database schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFamily {
    pub key: String,
    pub tdp_w: f64,
    pub peak_tflops: f64,
    pub alpha_log10_lo: f64,
    pub alpha_log10_hi: f64,
    #[serde(default)]
    pub beta_g_per_gpuh: Option<f64>,
    #[serde(default)]
    pub die_mm2: Option<f64>,
    #[serde(default)]
    pub process_nm: Option<u32>,
    #[serde(default = "default_lifetime")]
    pub lifetime_h: f64,
}

impl DeviceFamily {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Error::Parse {
            path: format!("family {:?}", self.key),
            message: format!("{field}: {why}"),
        };
        if self.key.trim().is_empty() {
            return Err(bad("key", "must not be empty".into()));
        }
        if !(self.tdp_w > 0.0 && self.tdp_w.is_finite()) {
            return Err(bad("tdp_w", format!("must be positive, got {}", self.tdp_w)));
        }
        if !(self.peak_tflops > 0.0 && self.peak_tflops.is_finite()) {
            return Err(bad("peak_tflops", format!("must be positive, got {}", self.peak_tflops)));
        }
        if !(self.alpha_log10_lo.is_finite() && self.alpha_log10_hi.is_finite())
            || self.alpha_log10_lo > self.alpha_log10_hi
        {
            return Err(bad(
                "alpha_log10_lo",
                format!(
                    "range [{}, {}] must be finite and ordered",
                    self.alpha_log10_lo, self.alpha_log10_hi
                ),
            ));
        }
        if let Some(b) = self.beta_g_per_gpuh {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(bad("beta_g_per_gpuh", format!("must be non-negative, got {b}")));
            }
        }
        if let Some(d) = self.die_mm2 {
            if !(d > 0.0 && d.is_finite()) {
                return Err(bad("die_mm2", format!("must be positive, got {d}")));
            }
        }
        if !(self.lifetime_h > 0.0 && self.lifetime_h.is_finite()) {
            return Err(bad("lifetime_h", format!("must be positive, got {}", self.lifetime_h)));
        }
        Ok(())
    }

    pub fn tdp(&self) -> PowerDraw {
        PowerDraw::from_watts(self.tdp_w).expect("validated on load")
    }

    pub fn beta(&self) -> Option<EmbodiedRate> {
        self.beta_g_per_gpuh
            .map(|b| EmbodiedRate::from_g_per_gpuh(b).expect("validated on load"))
    }

    pub fn alpha_midpoint(&self) -> f64 {
        0.5 * (self.alpha_log10_lo + self.alpha_log10_hi)
    }
}

/// Uppercased alphanumerics of `s`, each paired with whether it starts a
/// token (follows a non-alphanumeric character, or is first).
fn folded(s: &str) -> Vec<(char, bool)> {
    let mut out = Vec::with_capacity(s.len());
    let mut boundary = true;
    for c in s.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_uppercase().map(|u| (u, boundary)));
            boundary = false;
        } else {
            boundary = true;
        }
    }
    out
}

/// Match `raw` against `keys`: case- and whitespace-insensitive, the key must
/// begin at a token boundary of `raw`, and the longest key wins (ties go to
/// the lexicographically smallest key).
fn match_family<'a>(raw: &str, keys: impl Iterator<Item = &'a str>) -> Result<&'a str> {
    let hay = folded(raw);
    let mut best: Option<(&str, usize)> = None;
    for key in keys {
        let needle: Vec<char> = folded(key).into_iter().map(|(c, _)| c).collect();
        if needle.is_empty() || needle.len() > hay.len() {
            continue;
        }
        let hit = (0..=hay.len() - needle.len()).any(|start| {
            hay[start].1 && hay[start..start + needle.len()].iter().map(|&(c, _)| c).eq(needle.iter().copied())
        });
        if !hit {
            continue;
        }
        let better = match best {
            None => true,
            Some((k, len)) => needle.len() > len || (needle.len() == len && key < k),
        };
        if better {
            best = Some((key, needle.len()));
        }
    }
    best.map(|(k, _)| k).ok_or_else(|| Error::UnknownDevice(raw.to_string()))
}

/// Normalise a raw hardware name onto one of the built-in family keys.
pub fn normalize_device_name(raw: &str) -> Result<String> {
    DeviceDb::builtin().normalize(raw)
}

/// A set of device families keyed by family name. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDb {
    families: BTreeMap<String, DeviceFamily>,
}

impl DeviceDb {
    /// Builds a database, rejecting duplicate keys and invalid entries.
    pub fn from_families(families: impl IntoIterator<Item = DeviceFamily>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for fam in families {
            fam.validate()?;
            let key = fam.key.clone();
            if map.insert(key.clone(), fam).is_some() {
                return Err(Error::DuplicateKey(key));
            }
        }
        Ok(Self { families: map })
    }

    /// The eight reference device generations.
    pub fn builtin() -> Self {
        Self::from_json_str(BUILTIN_DEVICES, "<builtin>").expect("bundled device data is valid")
    }

    pub fn from_json_str(json: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(json);
        let families: Vec<DeviceFamily> =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
                path: origin.to_string(),
                message: format!("field {}: {}", e.path(), e.inner()),
            })?;
        Self::from_families(families).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path: origin.to_string(), message },
            other => other,
        })
    }

    /// Reads exactly the families stored at `path`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    /// The built-in families with the entries at `path` layered on top.
    pub fn load_over_builtin(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::builtin().with_overrides(&Self::load(path)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> String {
        let list: Vec<&DeviceFamily> = self.families.values().collect();
        let mut s = serde_json::to_string_pretty(&list).expect("plain data serialises");
        s.push('\n');
        s
    }

    /// Entries of `other` replace entries with the same key.
    pub fn with_overrides(&self, other: &DeviceDb) -> Self {
        let mut families = self.families.clone();
        for (k, v) in &other.families {
            families.insert(k.clone(), v.clone());
        }
        Self { families }
    }

    pub fn get(&self, key: &str) -> Option<&DeviceFamily> {
        self.families.get(key)
    }

    pub fn families(&self) -> impl Iterator<Item = &DeviceFamily> {
        self.families.values()
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    /// Family key for a raw hardware string, matched against this database's keys.
    pub fn normalize(&self, raw: &str) -> Result<String> {
        if raw.trim().is_empty() {
            return Err(Error::UnknownDevice(raw.to_string()));
        }
        match_family(raw, self.families.keys().map(String::as_str)).map(str::to_string)
    }

    pub fn resolve(&self, raw: &str) -> Result<&DeviceFamily> {
        let key = self.normalize(raw)?;
        Ok(&self.families[&key])
    }
}

/// Carbon per die area (g/mm²) for a process node, derived from the
/// reference embodied rates under a one-year lifetime.
pub fn process_cpa(process_nm: u32) -> Option<f64> {
    let mut rdr = csv::Reader::from_reader(BUILTIN_PROCESS_CPA.as_bytes());
    rdr.deserialize::<(u32, f64)>()
        .map(|row| row.expect("bundled CPA data is valid"))
        .find(|&(nm, _)| nm == process_nm)
        .map(|(_, cpa)| cpa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionIntensity {
    pub region_code: String,
    pub g_per_kwh: f64,
}

/// Grid carbon intensity per region code.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionTable {
    regions: BTreeMap<String, CarbonIntensity>,
}

impl RegionTable {
    pub fn from_rows(rows: impl IntoIterator<Item = RegionIntensity>) -> Result<Self> {
        let mut regions = BTreeMap::new();
        for row in rows {
            let intensity = CarbonIntensity::from_g_per_kwh(row.g_per_kwh)?;
            if regions.insert(row.region_code.clone(), intensity).is_some() {
                return Err(Error::DuplicateKey(row.region_code));
            }
        }
        Ok(Self { regions })
    }

    /// Parses a `region_code,g_per_kwh` CSV.
    pub fn from_csv_reader(reader: impl std::io::Read, origin: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        if header != vec!["region_code", "g_per_kwh"] {
            return Err(Error::Parse {
                path: origin.to_string(),
                message: format!("expected header `region_code,g_per_kwh`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<RegionIntensity>().enumerate() {
            rows.push(rec.map_err(|e| Error::Parse {
                path: origin.to_string(),
                message: format!("line {}: {e}", i + 2),
            })?);
        }
        Self::from_rows(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    /// The sample table shipped with the crate. Values are illustrative.
    pub fn sample() -> Self {
        Self::from_csv_reader(SAMPLE_REGIONS.as_bytes(), "<sample regions>")
            .expect("bundled region data is valid")
    }

    pub fn intensity(&self, code: &str) -> Result<CarbonIntensity> {
        self.regions
            .get(code)
            .copied()
            .ok_or_else(|| Error::UnknownRegion(code.to_string()))
    }
}

pub fn region_intensity(code: &str, table: &RegionTable) -> Result<CarbonIntensity> {
    table.intensity(code)
}
