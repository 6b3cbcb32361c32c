//! Operational and embodied carbon equations.

use crate::error::{Error, Result};
use crate::units::{CarbonIntensity, EmbodiedRate, Emission, GpuTime, PowerDraw};

/// Hours in the default one-year hardware lifetime.
pub const DEFAULT_LIFETIME_H: f64 = 8760.0;

/// Energy and emission of a training run powered at `power` for `time`.
///
/// `energy_kwh = W/1000 · GPUh · pue` and `kg = energy_kwh · (g/kWh) / 1000`.
pub fn operational_carbon(
    power: PowerDraw,
    time: GpuTime,
    intensity: CarbonIntensity,
    pue: f64,
) -> Result<(f64, Emission)> {
    if !(pue >= 1.0 && pue.is_finite()) {
        return Err(Error::domain(format!("PUE must be at least 1.0, got {pue}")));
    }
    let energy_kwh = power.watts() / 1000.0 * time.hours() * pue;
    let kg = energy_kwh * intensity.g_per_kwh() / 1000.0;
    Ok((energy_kwh, Emission::from_kg(kg)?))
}

/// Embodied emission as GPU-time times a per-GPU-hour rate.
pub fn embodied_from_rate(time: GpuTime, rate: EmbodiedRate) -> Emission {
    Emission::from_kg(rate.g_per_gpuh() * time.hours() / 1000.0)
        .expect("product of non-negative finite values")
}

/// One piece of hardware's share in a run: time used, lifetime, and the
/// carbon of manufacturing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareUsage {
    pub task_time_h: f64,
    pub lifetime_h: f64,
    pub product_carbon_kg: f64,
}

/// Sum of each component's product carbon, scaled by the fraction of its
/// lifetime spent on the task.
pub fn embodied_lifecycle(usages: &[HardwareUsage]) -> Result<Emission> {
    let mut kg = 0.0;
    for (i, u) in usages.iter().enumerate() {
        if !(u.lifetime_h > 0.0) {
            return Err(Error::domain(format!(
                "hardware entry {i}: lifetime must be positive, got {} h",
                u.lifetime_h
            )));
        }
        if !(u.task_time_h >= 0.0) || !(u.product_carbon_kg >= 0.0) {
            return Err(Error::domain(format!(
                "hardware entry {i}: task time and product carbon must be non-negative"
            )));
        }
        kg += u.task_time_h / u.lifetime_h * u.product_carbon_kg;
    }
    Emission::from_kg(kg)
}

/// Embodied rate from die area and a process node's carbon per area,
/// amortised over `lifetime_h`.
pub fn embodied_rate_from_die(die_mm2: f64, cpa_g_per_mm2: f64, lifetime_h: f64) -> Result<EmbodiedRate> {
    for (name, v) in [("die area", die_mm2), ("carbon per area", cpa_g_per_mm2), ("lifetime", lifetime_h)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    EmbodiedRate::from_g_per_gpuh(die_mm2 * cpa_g_per_mm2 / lifetime_h)
}

/// Signed relative error in percent.
pub fn relative_error(predicted: f64, actual: f64) -> Result<f64> {
    if actual == 0.0 || !actual.is_finite() {
        return Err(Error::domain("relative error against a zero actual value"));
    }
    Ok(100.0 * (predicted - actual) / actual)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn operational_examples() {
        let (_, glm) = operational_carbon(
            PowerDraw::from_watts(400.0).unwrap(),
            GpuTime::from_hours(1.19157e6).unwrap(),
            CarbonIntensity::from_g_per_kwh(581.0).unwrap(),
            1.0,
        )
        .unwrap();
        assert!(close(glm.tonnes(), 276.92, 5e-3), "{}", glm.tonnes());

        let (e, c) = operational_carbon(
            PowerDraw::from_watts(1000.0).unwrap(),
            GpuTime::from_hours(1000.0).unwrap(),
            CarbonIntensity::from_g_per_kwh(1000.0).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!((e, c.kg()), (1000.0, 1000.0));

        let (e, c) = operational_carbon(
            PowerDraw::from_watts(300.0).unwrap(),
            GpuTime::ZERO,
            CarbonIntensity::from_g_per_kwh(50.0).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!((e, c.kg()), (0.0, 0.0));
    }

    #[test]
    fn operational_rejects_pue_below_one() {
        let r = operational_carbon(
            PowerDraw::from_watts(300.0).unwrap(),
            GpuTime::from_hours(1.0).unwrap(),
            CarbonIntensity::from_g_per_kwh(50.0).unwrap(),
            0.9,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn embodied_rate_examples() {
        let llama = embodied_from_rate(
            GpuTime::from_hours(6.6246e6).unwrap(),
            EmbodiedRate::from_g_per_gpuh(1.7).unwrap(),
        );
        assert!(close(llama.kg(), 11261.75, 5e-3), "{}", llama.kg());

        let vit = embodied_from_rate(
            GpuTime::from_hours(13791.0).unwrap(),
            EmbodiedRate::from_g_per_gpuh(0.8).unwrap(),
        );
        assert!(close(vit.kg(), 11.05, 5e-3), "{}", vit.kg());
        assert!((vit.kg() - 11.0328).abs() < 1e-9);

        let none = embodied_from_rate(GpuTime::ZERO, EmbodiedRate::from_g_per_gpuh(1.5).unwrap());
        assert_eq!(none.kg(), 0.0);
    }

    #[test]
    fn lifecycle_examples() {
        let full = HardwareUsage { task_time_h: 8760.0, lifetime_h: 8760.0, product_carbon_kg: 13.14 };
        assert_eq!(embodied_lifecycle(&[full]).unwrap().kg(), 13.14);
        assert_eq!(embodied_lifecycle(&[]).unwrap().kg(), 0.0);

        let entry = HardwareUsage { task_time_h: 1551.5, lifetime_h: 8760.0, product_carbon_kg: 13.14 };
        let fleet = embodied_lifecycle(&vec![entry; 768]).unwrap();
        assert!(close(fleet.kg(), 1787.0, 5e-3), "{}", fleet.kg());
        let by_rate = embodied_from_rate(
            GpuTime::from_hours(1.19157e6).unwrap(),
            EmbodiedRate::from_g_per_gpuh(1.5).unwrap(),
        );
        assert!(close(fleet.kg(), by_rate.kg(), 5e-3));
    }

    #[test]
    fn lifecycle_rejects_zero_lifetime() {
        let bad = HardwareUsage { task_time_h: 1.0, lifetime_h: 0.0, product_carbon_kg: 1.0 };
        assert!(embodied_lifecycle(&[bad]).is_err());
    }

    #[test]
    fn die_rate_examples() {
        let a100 = embodied_rate_from_die(826.0, 15.91, DEFAULT_LIFETIME_H).unwrap();
        assert!(close(a100.g_per_gpuh(), 1.5, 1e-2));
        let h100 = embodied_rate_from_die(814.0, 18.29, DEFAULT_LIFETIME_H).unwrap();
        assert!(close(h100.g_per_gpuh(), 1.7, 1e-2));
        let two_years = embodied_rate_from_die(826.0, 15.91, 2.0 * DEFAULT_LIFETIME_H).unwrap();
        assert!(close(two_years.g_per_gpuh(), a100.g_per_gpuh() / 2.0, 1e-15));
        assert!(embodied_rate_from_die(0.0, 15.91, 8760.0).is_err());
        assert!(embodied_rate_from_die(826.0, -1.0, 8760.0).is_err());
    }

    #[test]
    fn relative_error_examples() {
        assert!((relative_error(276.92, 257.0).unwrap() - 7.750_972_762_645_9).abs() < 1e-9);
        assert_eq!(relative_error(3.5, 3.5).unwrap(), 0.0);
        assert!((relative_error(21.96, 24.7).unwrap() - -11.093_117_408_906_9).abs() < 1e-9);
        assert!(relative_error(1.0, 0.0).is_err());
    }
}
