//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::attribution::{BlurConfig, EarlyStop, LotsConfig, MaskConfig};

use super::{read_bytes, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classify,
    Verify,
    FeatureSweep,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Verify => "verify",
            Task::FeatureSweep => "feature_sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Task::Classify, Task::Verify, Task::FeatureSweep]
            .into_iter()
            .find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fame,
    GradCam,
    GradCamEw,
    CorrRise,
    Fggb,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Fame, Method::GradCam, Method::GradCamEw, Method::CorrRise, Method::Fggb];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fame => "fame",
            Method::GradCam => "grad_cam",
            Method::GradCamEw => "grad_cam_ew",
            Method::CorrRise => "corr_rise",
            Method::Fggb => "fggb",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn supports(self, task: Task) -> bool {
        match task {
            Task::Classify => matches!(self, Method::Fame | Method::GradCam | Method::GradCamEw),
            Task::Verify => true,
            Task::FeatureSweep => self == Method::Fame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    /// Rendered from the global seed (stage `dataset/eval`).
    Generated,
    /// A dataset archive directory.
    Archive(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    pub method: Method,
    pub model: Option<PathBuf>,
    pub dataset: DatasetSource,
    /// Images of a generated classification dataset.
    pub n_images: usize,
    /// Identities and renders per identity of a generated verification dataset.
    pub n_ids: usize,
    pub n_per_id: usize,
    pub seed: u64,
    pub lots: LotsConfig,
    pub blur: Option<BlurConfig>,
    pub masks: MaskConfig,
    /// `None` picks the clean EER threshold divided by the embedding dimension.
    pub fggb_theta: Option<f64>,
    pub eval_iou: bool,
    pub eval_road: bool,
    pub eval_curves: bool,
    pub road_noise: f64,
    pub write_maps: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            task: Task::Classify,
            method: Method::Fame,
            model: None,
            dataset: DatasetSource::Generated,
            n_images: 100,
            n_ids: 20,
            n_per_id: 6,
            seed: 1,
            lots: LotsConfig::default(),
            blur: Some(BlurConfig::default()),
            masks: MaskConfig::default(),
            fggb_theta: None,
            eval_iou: true,
            eval_road: true,
            eval_curves: true,
            road_noise: crate::evaluation::DEFAULT_ROAD_NOISE,
            write_maps: true,
            output_dir: PathBuf::from("runs/run"),
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> IoError {
    IoError::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, IoError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| bad(key, format!("`{v}`: {e}")))
}

/// Decimal or `a/b`.
fn parse_real(key: &str, v: &str) -> Result<f64, IoError> {
    let x = match v.split_once('/') {
        Some((a, b)) => parse_num::<f64>(key, a.trim())? / parse_num::<f64>(key, b.trim())?,
        None => parse_num::<f64>(key, v)?,
    };
    if !x.is_finite() {
        return Err(bad(key, format!("`{v}` is not finite")));
    }
    Ok(x)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, IoError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(bad(key, format!("`{v}` is not a boolean"))),
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 25] = [
        "name",
        "task",
        "method",
        "model",
        "dataset",
        "n_images",
        "n_ids",
        "n_per_id",
        "seed",
        "eta",
        "iterations",
        "early_stop",
        "blur",
        "blur_kernel",
        "blur_sigma",
        "n_masks",
        "patches_per_mask",
        "patch_size",
        "fggb_theta",
        "eval_iou",
        "eval_road",
        "eval_curves",
        "road_noise",
        "write_maps",
        "output_dir",
    ];

    /// Parses a config file body; later lines override earlier ones.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| IoError::Syntax {
                line: n + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, IoError> {
        let bytes = read_bytes(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| IoError::Syntax {
            line: 0,
            msg: format!("{} is not UTF-8", path.display()),
        })?;
        Self::parse(text)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), IoError> {
        match key {
            "name" => {
                if v.is_empty() || v.contains(['/', '\\']) {
                    return Err(bad(key, "run name must be non-empty without path separators"));
                }
                self.name = v.to_string();
            }
            "task" => self.task = Task::parse(v).ok_or_else(|| bad(key, format!("unknown task `{v}`")))?,
            "method" => self.method = Method::parse(v).ok_or_else(|| bad(key, format!("unknown method `{v}`")))?,
            "model" => self.model = (!v.is_empty() && v != "none").then(|| PathBuf::from(v)),
            "dataset" => {
                self.dataset = if v == "generated" {
                    DatasetSource::Generated
                } else {
                    DatasetSource::Archive(PathBuf::from(v))
                }
            }
            "n_images" => self.n_images = parse_num(key, v)?,
            "n_ids" => self.n_ids = parse_num(key, v)?,
            "n_per_id" => self.n_per_id = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "eta" => self.lots.eta = parse_real(key, v)?,
            "iterations" => self.lots.max_iters = parse_num(key, v)?,
            "early_stop" => {
                self.lots.early_stop = if v == "off" {
                    None
                } else {
                    let (tol, window) = v
                        .split_once(':')
                        .ok_or_else(|| bad(key, "expected `off` or `<tol>:<window>`"))?;
                    Some(EarlyStop {
                        tol: parse_real(key, tol.trim())?,
                        window: parse_num(key, window.trim())?,
                    })
                }
            }
            "blur" => {
                let on = parse_bool(key, v)?;
                self.blur = match (on, self.blur) {
                    (true, None) => Some(BlurConfig::default()),
                    (true, b) => b,
                    (false, _) => None,
                };
            }
            "blur_kernel" => self.blur.get_or_insert_with(BlurConfig::default).kernel_size = parse_num(key, v)?,
            "blur_sigma" => self.blur.get_or_insert_with(BlurConfig::default).sigma = parse_real(key, v)?,
            "n_masks" => self.masks.n_masks = parse_num(key, v)?,
            "patches_per_mask" => self.masks.patches_per_mask = parse_num(key, v)?,
            "patch_size" => self.masks.patch_size = parse_num(key, v)?,
            "fggb_theta" => self.fggb_theta = if v == "auto" { None } else { Some(parse_real(key, v)?) },
            "eval_iou" => self.eval_iou = parse_bool(key, v)?,
            "eval_road" => self.eval_road = parse_bool(key, v)?,
            "eval_curves" => self.eval_curves = parse_bool(key, v)?,
            "road_noise" => self.road_noise = parse_real(key, v)?,
            "write_maps" => self.write_maps = parse_bool(key, v)?,
            "output_dir" => {
                if v.is_empty() {
                    return Err(bad(key, "must not be empty"));
                }
                self.output_dir = PathBuf::from(v)
            }
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks everything that can be checked without touching the file system.
    pub fn validate(&self) -> Result<(), IoError> {
        if !self.method.supports(self.task) {
            return Err(bad(
                "method",
                format!("`{}` is not available for task `{}`", self.method.name(), self.task.name()),
            ));
        }
        self.lots.validate().map_err(|e| bad("eta/iterations/early_stop", e.to_string()))?;
        if let Some(b) = &self.blur {
            b.validate().map_err(|e| bad("blur_kernel/blur_sigma", e.to_string()))?;
        }
        if self.n_images == 0 {
            return Err(bad("n_images", "must be >= 1"));
        }
        if self.n_ids < 2 || self.n_per_id < 2 {
            return Err(bad("n_ids/n_per_id", "need >= 2 identities with >= 2 renders each"));
        }
        if self.masks.n_masks < 2 || self.masks.patches_per_mask == 0 || self.masks.patch_size == 0 {
            return Err(bad("n_masks/patches_per_mask/patch_size", "need >= 2 masks and non-zero patches"));
        }
        if !(self.road_noise >= 0.0) {
            return Err(bad("road_noise", "must be >= 0"));
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("name", self.name.clone());
        kv("task", self.task.name().into());
        kv("method", self.method.name().into());
        kv(
            "model",
            self.model.as_ref().map_or("none".into(), |p| p.display().to_string()),
        );
        kv(
            "dataset",
            match &self.dataset {
                DatasetSource::Generated => "generated".into(),
                DatasetSource::Archive(p) => p.display().to_string(),
            },
        );
        kv("n_images", self.n_images.to_string());
        kv("n_ids", self.n_ids.to_string());
        kv("n_per_id", self.n_per_id.to_string());
        kv("seed", self.seed.to_string());
        kv("eta", self.lots.eta.to_string());
        kv("iterations", self.lots.max_iters.to_string());
        kv(
            "early_stop",
            self.lots
                .early_stop
                .map_or("off".into(), |e| format!("{}:{}", e.tol, e.window)),
        );
        kv("blur", on_off(self.blur.is_some()).into());
        if let Some(b) = &self.blur {
            kv("blur_kernel", b.kernel_size.to_string());
            kv("blur_sigma", b.sigma.to_string());
        }
        kv("n_masks", self.masks.n_masks.to_string());
        kv("patches_per_mask", self.masks.patches_per_mask.to_string());
        kv("patch_size", self.masks.patch_size.to_string());
        kv("fggb_theta", self.fggb_theta.map_or("auto".into(), |t| t.to_string()));
        kv("eval_iou", on_off(self.eval_iou).into());
        kv("eval_road", on_off(self.eval_road).into());
        kv("eval_curves", on_off(self.eval_curves).into());
        kv("road_noise", self.road_noise.to_string());
        kv("write_maps", on_off(self.write_maps).into());
        kv("output_dir", self.output_dir.display().to_string());
        s
    }
}
