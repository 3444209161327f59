use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::forecast::ForecastOptions;
use crate::visual::{OverlayOptions, SamplingMode};

pub const FORECAST_LENGTHS: [usize; 3] = [2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "L")]
    Language,
    #[serde(rename = "L+V")]
    LanguageVision,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Language => "L",
            Modality::LanguageVision => "L+V",
        })
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L" => Ok(Modality::Language),
            "L+V" | "LV" => Ok(Modality::LanguageVision),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastComponents {
    pub speaker_turns: bool,
    pub detailed_utterances: bool,
}

impl Default for ForecastComponents {
    fn default() -> Self {
        ForecastComponents {
            speaker_turns: true,
            detailed_utterances: true,
        }
    }
}

mod overlay_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::visual::OverlayOptions;

    pub fn serialize<S: Serializer>(o: &OverlayOptions, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&o.tag())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OverlayOptions, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One evaluated configuration, i.e. one report row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub forecast_enabled: bool,
    pub forecast_components: ForecastComponents,
    pub forecast_k: usize,
    #[serde(with = "overlay_tag")]
    pub overlay: OverlayOptions,
    pub sampling: SamplingMode,
    pub modality: Modality,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            forecast_enabled: true,
            forecast_components: ForecastComponents::default(),
            forecast_k: 4,
            overlay: OverlayOptions::default(),
            sampling: SamplingMode::default(),
            modality: Modality::LanguageVision,
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !FORECAST_LENGTHS.contains(&self.forecast_k) {
            return Err(EvalError::Ablation(format!(
                "forecast_k must be one of {FORECAST_LENGTHS:?}, got {}",
                self.forecast_k
            )));
        }
        let c = self.forecast_components;
        if self.forecast_enabled && !(c.speaker_turns || c.detailed_utterances) {
            return Err(EvalError::Ablation("forecasting enabled with no components".into()));
        }
        Ok(())
    }

    pub fn forecast_options(&self) -> ForecastOptions {
        ForecastOptions {
            speaker_turns: self.forecast_components.speaker_turns,
            detailed_utterances: self.forecast_components.detailed_utterances,
            ..ForecastOptions::default()
        }
    }

    pub fn uses_images(&self) -> bool {
        self.modality == Modality::LanguageVision
    }

    /// Short identifier used for per-row image directories.
    pub fn render_key(&self) -> String {
        format!("{}_{}", self.overlay.tag(), self.sampling).replace([':', '+', '.'], "-")
    }
}

/// Values to sweep; an absent axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationAxes {
    pub forecast_enabled: Option<Vec<bool>>,
    pub forecast_components: Option<Vec<ForecastComponents>>,
    pub forecast_k: Option<Vec<usize>>,
    pub overlay: Option<Vec<String>>,
    pub sampling: Option<Vec<SamplingMode>>,
    pub modality: Option<Vec<Modality>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationGrid {
    pub base: AblationConfig,
    pub axes: AblationAxes,
}

fn axis<T: Clone>(values: &Option<Vec<T>>, base: T) -> Vec<T> {
    values.clone().unwrap_or_else(|| vec![base])
}

impl AblationGrid {
    pub fn single(base: AblationConfig) -> Self {
        AblationGrid {
            base,
            axes: AblationAxes::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        toml::from_str(text).map_err(|e| EvalError::Ablation(e.to_string()))
    }

    /// Cartesian product of the axes, forecast settings outermost and
    /// modality innermost. An axis given as an empty list yields no rows.
    pub fn expand(&self) -> Result<Vec<AblationConfig>, EvalError> {
        let b = self.base;
        let overlays = match &self.axes.overlay {
            Some(tags) => tags
                .iter()
                .map(|t| t.parse::<OverlayOptions>().map_err(EvalError::Ablation))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![b.overlay],
        };
        let mut out = Vec::new();
        for forecast_enabled in axis(&self.axes.forecast_enabled, b.forecast_enabled) {
            for forecast_components in axis(&self.axes.forecast_components, b.forecast_components) {
                for forecast_k in axis(&self.axes.forecast_k, b.forecast_k) {
                    for overlay in &overlays {
                        for sampling in axis(&self.axes.sampling, b.sampling) {
                            for modality in axis(&self.axes.modality, b.modality) {
                                let cfg = AblationConfig {
                                    forecast_enabled,
                                    forecast_components,
                                    forecast_k,
                                    overlay: *overlay,
                                    sampling,
                                    modality,
                                };
                                cfg.validate()?;
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_grid_expands_in_order() {
        let grid = AblationGrid::from_toml(
            r#"
            [base]
            sampling = "fps:1.0"
            [axes]
            forecast_k = [2, 4, 8]
            overlay = ["text", "text+rect", "text+rect+point"]
            "#,
        )
        .unwrap();
        let rows = grid.expand().unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0].forecast_k, 2);
        assert_eq!(rows[0].overlay.tag(), "text");
        assert_eq!(rows[5].forecast_k, 4);
        assert_eq!(rows[5].overlay.tag(), "text+rect+point");
    }

    #[test]
    fn empty_axis_means_no_rows() {
        let grid = AblationGrid::from_toml("[axes]\nforecast_k = []\n").unwrap();
        assert!(grid.expand().unwrap().is_empty());
        assert_eq!(AblationGrid::default().expand().unwrap().len(), 1);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(AblationGrid::from_toml("[axes]\nforecast_k = [3]\n").unwrap().expand().is_err());
        assert!(AblationGrid::from_toml("[axes]\noverlay = [\"glow\"]\n").unwrap().expand().is_err());
        assert!(AblationGrid::from_toml("[base]\nbogus = 1\n").is_err());
        assert!(AblationGrid::from_toml("[base]\nmodality = \"V\"\n").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = AblationConfig { modality: Modality::Language, sampling: SamplingMode::Grid6, ..Default::default() };
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"overlay\":\"text+rect+point\""));
        assert!(json.contains("\"modality\":\"L\""));
        assert_eq!(serde_json::from_str::<AblationConfig>(&json).unwrap(), cfg);
    }
}
