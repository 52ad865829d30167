use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HwCostError;

const DEFAULT_PROFILE: &str = include_str!("../../profiles/default.toml");

/// Newest profile layout this crate understands.
pub const PROFILE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaCosts {
    pub cell: f64,
    pub adc: f64,
    pub adc_reference_bits: u32,
    pub adc_scale_per_bit: f64,
    pub wgu_per_entry: f64,
    pub ic_per_tile: f64,
    pub accumulation_per_tile: f64,
    pub buffer_per_tile: f64,
    pub global: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCosts {
    pub cell_read: f64,
    pub adc_conversion: f64,
    pub write_per_cell: f64,
    pub wgu_mac: f64,
    pub onchip_buffer_bit: f64,
    pub offchip_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyCosts {
    pub read_cycle: f64,
    pub write_row: f64,
    pub wgu_mac: f64,
    pub onchip_buffer_bit: f64,
    pub offchip_buffer_bit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficWidths {
    pub activation: u32,
    pub error: u32,
    pub gradient: u32,
}

/// Per-component constants: µm², pJ, ns and bit widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCosts {
    pub version: u32,
    pub name: String,
    pub area: AreaCosts,
    pub energy: EnergyCosts,
    pub latency: LatencyCosts,
    pub traffic: TrafficWidths,
}

impl Default for UnitCosts {
    fn default() -> Self {
        UnitCosts::parse(DEFAULT_PROFILE).expect("bundled profile is valid")
    }
}

impl UnitCosts {
    /// The profile text shipped with the crate.
    pub fn default_profile_text() -> &'static str {
        DEFAULT_PROFILE
    }

    pub fn parse(text: &str) -> Result<Self, HwCostError> {
        let uc: UnitCosts = toml::from_str(text).map_err(|e| HwCostError::Profile(e.to_string()))?;
        uc.validate()?;
        Ok(uc)
    }

    pub fn load(path: &Path) -> Result<Self, HwCostError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HwCostError::Profile(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| HwCostError::Profile(format!("{}: {e}", path.display())))
    }

    /// `"default"` or a path to a profile file.
    pub fn resolve(name_or_path: &str) -> Result<Self, HwCostError> {
        if name_or_path == "default" {
            Ok(Self::default())
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn validate(&self) -> Result<(), HwCostError> {
        if self.version == 0 || self.version > PROFILE_VERSION {
            return Err(HwCostError::Profile(format!(
                "unsupported profile version {} (this build reads up to {PROFILE_VERSION})",
                self.version
            )));
        }
        let a = &self.area;
        let e = &self.energy;
        let l = &self.latency;
        let fields = [
            ("area.cell", a.cell),
            ("area.adc", a.adc),
            ("area.adc_scale_per_bit", a.adc_scale_per_bit),
            ("area.wgu_per_entry", a.wgu_per_entry),
            ("area.ic_per_tile", a.ic_per_tile),
            ("area.accumulation_per_tile", a.accumulation_per_tile),
            ("area.buffer_per_tile", a.buffer_per_tile),
            ("area.global", a.global),
            ("energy.cell_read", e.cell_read),
            ("energy.adc_conversion", e.adc_conversion),
            ("energy.write_per_cell", e.write_per_cell),
            ("energy.wgu_mac", e.wgu_mac),
            ("energy.onchip_buffer_bit", e.onchip_buffer_bit),
            ("energy.offchip_factor", e.offchip_factor),
            ("latency.read_cycle", l.read_cycle),
            ("latency.write_row", l.write_row),
            ("latency.wgu_mac", l.wgu_mac),
            ("latency.onchip_buffer_bit", l.onchip_buffer_bit),
            ("latency.offchip_buffer_bit", l.offchip_buffer_bit),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(HwCostError::Profile(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        if e.offchip_factor < 1.0 {
            return Err(HwCostError::Profile(format!(
                "energy.offchip_factor must be at least 1, got {}",
                e.offchip_factor
            )));
        }
        Ok(())
    }

    /// `2^(bits - reference)` scaled by the per-bit factor.
    pub fn adc_scale(&self, bits: u32) -> f64 {
        self.area.adc_scale_per_bit.powi(bits as i32 - self.area.adc_reference_bits as i32)
    }

    pub fn adc_area(&self, bits: u32) -> f64 {
        self.area.adc * self.adc_scale(bits)
    }

    pub fn adc_energy(&self, bits: u32) -> f64 {
        self.energy.adc_conversion * self.adc_scale(bits)
    }

    pub fn offchip_energy_bit(&self) -> f64 {
        self.energy.onchip_buffer_bit * self.energy.offchip_factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_profile_parses() {
        let uc = UnitCosts::default();
        assert_eq!(uc.name, "default");
        assert_eq!(uc.energy.offchip_factor, 100.0);
        assert!((uc.offchip_energy_bit() / uc.energy.onchip_buffer_bit - 100.0).abs() < 1e-9);
    }

    #[test]
    fn adc_cost_doubles_per_bit() {
        let uc = UnitCosts::default();
        let b = uc.area.adc_reference_bits;
        assert_eq!(uc.adc_area(b), uc.area.adc);
        assert_eq!(uc.adc_area(b + 1), 2.0 * uc.area.adc);
        assert_eq!(uc.adc_energy(b - 2), uc.energy.adc_conversion / 4.0);
    }

    #[test]
    fn bad_profiles_are_rejected() {
        let text = UnitCosts::default_profile_text();
        let neg = text.replace("cell = 0.05", "cell = -0.05");
        assert!(matches!(UnitCosts::parse(&neg), Err(HwCostError::Profile(m)) if m.contains("area.cell")));
        let unknown = text.replace("[traffic]", "[traffic]\nweights = 4");
        assert!(UnitCosts::parse(&unknown).is_err());
        let future = text.replace("version = 1", "version = 9");
        assert!(UnitCosts::parse(&future).is_err());
    }
}
