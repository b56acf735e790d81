//! Optional TOML config file. Every key is optional; command-line flags win
//! over the file, and the file wins over built-in defaults.

use std::f64::consts::TAU;
use std::path::Path;

use finnger_core::edgecount::{EdgeConfig, HsvRange};
use finnger_core::optimizer::AdamConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "camelCase")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub decoupled_decay: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub width_scale: Option<f64>,
    pub val_fraction: Option<f64>,
    pub augment: Option<bool>,
    pub hsv_lower: Option<[u8; 3]>,
    pub hsv_upper: Option<[u8; 3]>,
    pub blur_kernel: Option<usize>,
    pub blur_sigma: Option<f64>,
    pub circle_ratio: Option<f64>,
    /// Fraction of a full turn.
    pub wrist_max_angle: Option<f64>,
    pub min_segment_px: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        FileConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<FileConfig, String> {
        let config: FileConfig = toml::from_str(text).map_err(|e| e.message().to_owned())?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(format!("{name} must be positive, got {x}")),
            _ => Ok(()),
        };
        positive("lr", self.lr)?;
        positive("blurSigma", self.blur_sigma)?;
        positive("circleRatio", self.circle_ratio)?;
        positive("wristMaxAngle", self.wrist_max_angle)?;
        if let Some(wd) = self.weight_decay.filter(|w| !(*w >= 0.0)) {
            return Err(format!("weightDecay must be non-negative, got {wd}"));
        }
        if let Some(f) = self.val_fraction.filter(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(format!("valFraction must be in (0, 1), got {f}"));
        }
        if self.batch_size == Some(0) {
            return Err("batchSize must be positive".into());
        }
        Ok(())
    }
}

/// Defaults used when neither a flag nor the file sets a value.
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_WIDTH_SCALE: f64 = 1.0;
pub const DEFAULT_VAL_FRACTION: f64 = 0.15;
pub const SEED_ENV: &str = "FINNGER_SEED";

/// Flag, then config file, then `FINNGER_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> Result<u64, String> {
    if let Some(s) = flag.or(file.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

pub fn adam_config(file: &FileConfig, lr: Option<f64>, weight_decay: Option<f64>, decoupled: bool) -> AdamConfig {
    let d = AdamConfig::default();
    AdamConfig {
        lr: lr.or(file.lr).unwrap_or(d.lr),
        weight_decay: weight_decay.or(file.weight_decay).unwrap_or(d.weight_decay),
        decoupled: decoupled || file.decoupled_decay.unwrap_or(d.decoupled),
        ..d
    }
}

/// Edge-pipeline overrides shared by `count` and `eval --method edge`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeOverrides {
    pub hsv_lower: Option<[u8; 3]>,
    pub hsv_upper: Option<[u8; 3]>,
    pub circle_ratio: Option<f64>,
    pub wrist_max_angle: Option<f64>,
}

pub fn edge_config(file: &FileConfig, flags: &EdgeOverrides) -> EdgeConfig {
    let d = EdgeConfig::default();
    EdgeConfig {
        range: HsvRange {
            lo: flags.hsv_lower.or(file.hsv_lower).unwrap_or(d.range.lo),
            hi: flags.hsv_upper.or(file.hsv_upper).unwrap_or(d.range.hi),
        },
        blur_kernel: file.blur_kernel.unwrap_or(d.blur_kernel),
        blur_sigma: file.blur_sigma.unwrap_or(d.blur_sigma),
        radius_ratio: flags.circle_ratio.or(file.circle_ratio).unwrap_or(d.radius_ratio),
        wrist_max_angle: flags.wrist_max_angle.or(file.wrist_max_angle).map_or(d.wrist_max_angle, |t| t * TAU),
        band: d.band,
        min_segment_px: file.min_segment_px.unwrap_or(d.min_segment_px),
    }
}

/// Parses `h,s,v`.
pub fn parse_triple(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    };
    let p = |v: &str| v.parse::<u8>().map_err(|_| format!("{v:?} is not in 0..=255"));
    Ok([p(a)?, p(b)?, p(c)?])
}
