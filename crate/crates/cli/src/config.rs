use std::path::{Path, PathBuf};

use lobgap_core::multifractal::QGrid;
use lobgap_core::powerlaw::FitConfig;
use lobgap_core::scaling::ScalingConfig;
use lobgap_core::synth::GeneratorSpec;
use lobgap_core::TickSize;
use serde::{Deserialize, Serialize};

use crate::PipelineError;

/// One source of instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Input {
    /// Order-flow CSV file, or a directory of `<instrument>_<day>.csv` files.
    OrderFlow { path: PathBuf },
    /// Gap file written by `replay`; the instrument is the file's parent directory name.
    Gaps { path: PathBuf },
    /// Plain series, one value per line; the instrument is the file stem.
    Series { path: PathBuf },
    Synth {
        #[serde(flatten)]
        spec: GeneratorSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Analyses {
    pub powerlaw: bool,
    pub bootstrap: bool,
    pub dfa: bool,
    pub dma: bool,
    pub mfdfa: bool,
    pub surrogates: bool,
    pub regressions: bool,
    /// Pool gaps across instruments and fit one tail per side.
    pub ensemble: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses {
            powerlaw: true,
            bootstrap: true,
            dfa: true,
            dma: true,
            mfdfa: true,
            surrogates: true,
            regressions: true,
            ensemble: true,
        }
    }
}

impl Analyses {
    pub fn none() -> Self {
        Analyses {
            powerlaw: false,
            bootstrap: false,
            dfa: false,
            dma: false,
            mfdfa: false,
            surrogates: false,
            regressions: false,
            ensemble: false,
        }
    }
}

/// Everything a run depends on. The serialised form, minus the output
/// directory and worker count, is embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub inputs: Vec<Input>,
    pub tick_size: TickSize,
    pub analyses: Analyses,
    pub powerlaw: FitConfig,
    pub scaling: ScalingConfig,
    pub q_grid: QGrid,
    pub n_shuffles: usize,
    pub n_bootstrap: usize,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            tick_size: TickSize::default(),
            analyses: Analyses::default(),
            powerlaw: FitConfig::default(),
            scaling: ScalingConfig::default(),
            q_grid: QGrid::default(),
            n_shuffles: 100,
            n_bootstrap: 100,
            seed: 1,
            output_dir: None,
            workers: None,
        }
    }
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.scaling.dfa_order > 3 {
            return bad("dfa order must be 0..=3");
        }
        if self.scaling.min_scale < 3 || !(self.scaling.max_scale_fraction > 0.0 && self.scaling.max_scale_fraction <= 0.25) {
            return bad("scale grid must start at 3 or more and end at most at N/4");
        }
        if self.analyses.surrogates && self.n_shuffles == 0 {
            return bad("n_shuffles must be positive");
        }
        if self.analyses.bootstrap && self.n_bootstrap == 0 {
            return bad("n_bootstrap must be positive");
        }
        for input in &self.inputs {
            if let Input::Synth { spec } = input {
                spec.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// JSON embedded in reports.
    pub fn embedded(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lobgap_core::synth::GeneratorKind;

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig {
            inputs: vec![
                Input::OrderFlow { path: "data".into() },
                Input::Synth { spec: GeneratorSpec { kind: GeneratorKind::Fgn { hurst: 0.75 }, length: 1024, seed: 3 } },
            ],
            n_shuffles: 7,
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_file() {
        let text = r#"
            seed = 9
            [analyses]
            powerlaw = false
            [[inputs]]
            source = "synth"
            kind = "fgn"
            hurst = 0.75
            length = 4096
            seed = 2
        "#;
        let cfg: PipelineConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(!cfg.analyses.powerlaw && cfg.analyses.dfa);
        assert_eq!(cfg.n_shuffles, 100);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn output_dir_is_not_embedded() {
        let cfg = PipelineConfig { output_dir: Some("/tmp/x".into()), workers: Some(4), ..Default::default() };
        let v = cfg.embedded();
        assert!(v.get("output_dir").is_none());
        assert!(v.get("workers").is_none());
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut cfg = PipelineConfig::default();
        cfg.scaling.dfa_order = 4;
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            inputs: vec![Input::Synth { spec: GeneratorSpec { kind: GeneratorKind::Fgn { hurst: 1.5 }, length: 8, seed: 0 } }],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
