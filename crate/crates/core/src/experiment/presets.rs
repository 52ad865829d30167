use super::{ExperimentConfig, ExperimentError};

const PRESETS: &[(&str, &str)] = &[
    ("default", include_str!("../../presets/default.toml")),
    ("table1", include_str!("../../presets/table1.toml")),
    ("fig2", include_str!("../../presets/fig2.toml")),
    ("fig3", include_str!("../../presets/fig3.toml")),
    ("fig3-subarray", include_str!("../../presets/fig3-subarray.toml")),
    ("fig6", include_str!("../../presets/fig6.toml")),
    ("fig7", include_str!("../../presets/fig7.toml")),
    ("fig9", include_str!("../../presets/fig9.toml")),
    ("precision", include_str!("../../presets/precision.toml")),
    ("precision-error", include_str!("../../presets/precision-error.toml")),
    ("variation", include_str!("../../presets/variation.toml")),
    ("variation-d2d", include_str!("../../presets/variation-d2d.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let text = preset_text(name).ok_or_else(|| {
        ExperimentError::Config(format!("unknown preset {name:?}; available: {}", preset_names().join(", ")))
    })?;
    ExperimentConfig::from_toml(text).map_err(|e| ExperimentError::Config(format!("preset {name}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_expands() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name, name);
            assert!(!cfg.grid().unwrap().is_empty());
        }
        assert!(preset("fig99").is_err());
    }
}
