//! Experiment runner: attribution maps, metric tables and runtime logs for one
//! configuration, plus the parameter sweep presets.
//!
//! Run directory layout:
//!
//! ```text
//! config.txt            canonical config echo
//! metrics.csv           method,protocol,P,value (aggregates)
//! items.csv             item,method,protocol,P,value (per image / pair)
//! runtime.csv           stage,item,seconds
//! attributions/<item>_<part>.{pgm,csv}
//! overlays/<item>_<part>.ppm
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::attribution::{
    corr_rise, fame, fame_feature_sweep, fame_pair, fggb_lite, grad_cam, grad_cam_ew, receptive_mass_fraction,
    AttributionMap, BlurConfig, FggbConfig, PairSide,
};
use crate::evaluation::{
    deletion_insertion_curve, iou, road_delete, ClassificationSet, CurveMode, CurveTask, VerificationProtocol,
    DEFAULT_P_GRID,
};
use crate::netcore::{embedding, forward, load_model, Head, Image, LossSpec, ModelGraph};
use crate::seeds::stage_seed;
use crate::training::{
    eer_threshold, embed_all, gen_identities, gen_shapes, pair_scores, IdentityDataset, ShapesDataset,
};

use super::config::{DatasetSource, ExperimentConfig, Method, Task};
use super::dataset::{read_archive, Archive};
use super::maps::{overlay, write_attribution};
use super::{write_bytes, IoError};

pub const OUTPUT_ROOT_ENV: &str = "FAME_OUTPUT_ROOT";

const IOU_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.7];
const ROAD_P: [f64; 3] = [10.0, 30.0, 50.0];

pub fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Relative output directories are placed under `$FAME_OUTPUT_ROOT` when set.
pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    match output_root() {
        Some(root) if dir.is_relative() => root.join(dir),
        _ => dir.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub protocol: String,
    /// Grid parameter: a percentage, an IoU threshold, a feature location, or empty.
    pub p: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub stage: String,
    pub item: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub config_echo: String,
    pub items: Vec<(String, MetricRow)>,
    pub aggregate: Vec<MetricRow>,
    pub runtime: Vec<RuntimeRow>,
}

impl RunReport {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("method,protocol,P,value\n");
        for r in &self.aggregate {
            let _ = writeln!(s, "{},{},{},{}", r.method, r.protocol, r.p, r.value);
        }
        s
    }

    pub fn items_csv(&self) -> String {
        let mut s = String::from("item,method,protocol,P,value\n");
        for (item, r) in &self.items {
            let _ = writeln!(s, "{item},{},{},{},{}", r.method, r.protocol, r.p, r.value);
        }
        s
    }

    pub fn runtime_csv(&self) -> String {
        let mut s = String::from("stage,item,seconds\n");
        for r in &self.runtime {
            let _ = writeln!(s, "{},{},{}", r.stage, r.item, r.seconds);
        }
        s
    }

    /// Aggregate value of `(protocol, P)`.
    pub fn value(&self, protocol: &str, p: &str) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|r| r.protocol == protocol && r.p == p)
            .map(|r| r.value)
    }
}

fn ctx<T, E>(r: Result<T, E>, stage: &str, item: &str) -> Result<T, IoError>
where
    E: std::error::Error + Send + Sync + 'static,
{
    r.map_err(|e| IoError::stage(stage, item, e))
}

fn config_err(key: &str, msg: impl Into<String>) -> IoError {
    IoError::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a ModelGraph,
    out: &'a Path,
}

impl Context<'_> {
    fn method(&self) -> String {
        self.cfg.method.name().to_string()
    }

    fn row(&self, protocol: &str, p: impl ToString, value: f64) -> MetricRow {
        MetricRow {
            method: self.method(),
            protocol: protocol.into(),
            p: p.to_string(),
            value,
        }
    }

    fn emit(&self, item: &str, part: &str, map: &AttributionMap, image: &Image) -> Result<(), IoError> {
        if !self.cfg.write_maps {
            return Ok(());
        }
        let name = format!("{item}_{part}");
        write_attribution(map, &self.out.join("attributions").join(&name))?;
        overlay(map, image, &self.out.join("overlays").join(format!("{name}.ppm")))
    }

    fn blur(&self) -> Option<&BlurConfig> {
        self.cfg.blur.as_ref()
    }
}

struct ItemResult {
    id: String,
    rows: Vec<MetricRow>,
    runtime: Vec<RuntimeRow>,
    /// Map used by the deletion/insertion curves.
    curve_map: Option<AttributionMap>,
}

fn timed<T>(stage: &str, item: &str, runtime: &mut Vec<RuntimeRow>, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    runtime.push(RuntimeRow {
        stage: stage.into(),
        item: item.into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    out
}

fn classification_data(cfg: &ExperimentConfig) -> Result<ShapesDataset, IoError> {
    match &cfg.dataset {
        DatasetSource::Generated => Ok(gen_shapes(cfg.n_images, stage_seed(cfg.seed, "dataset/eval"))),
        DatasetSource::Archive(path) => match ctx(read_archive(path), "load_dataset", &path.display().to_string())? {
            Archive::Shapes(ds) => Ok(ds),
            Archive::Identities(_) => Err(config_err("dataset", "task needs a shapes archive, got identities")),
        },
    }
}

fn verification_data(cfg: &ExperimentConfig) -> Result<IdentityDataset, IoError> {
    match &cfg.dataset {
        DatasetSource::Generated => Ok(gen_identities(
            cfg.n_ids,
            cfg.n_per_id,
            stage_seed(cfg.seed, "dataset/eval"),
        )),
        DatasetSource::Archive(path) => match ctx(read_archive(path), "load_dataset", &path.display().to_string())? {
            Archive::Identities(ds) => Ok(ds),
            Archive::Shapes(_) => Err(config_err("dataset", "task needs an identities archive, got shapes")),
        },
    }
}

fn run_classify(c: &Context<'_>) -> Result<(Vec<ItemResult>, Vec<MetricRow>), IoError> {
    let cfg = c.cfg;
    let ds = classification_data(cfg)?;
    let items = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let id = format!("img{i:05}");
            let (image, label) = (&ds.images[i], ds.labels[i]);
            let spec = LossSpec::ClassLogit { class: label };
            let mut runtime = Vec::new();
            let map = timed("attribute", &id, &mut runtime, || -> Result<_, IoError> {
                Ok(match cfg.method {
                    Method::Fame => ctx(fame(c.model, image, &spec, &cfg.lots, c.blur()), "fame", &id)?.map,
                    Method::GradCam => ctx(grad_cam(c.model, image, &spec), "grad_cam", &id)?,
                    Method::GradCamEw => ctx(grad_cam_ew(c.model, image, &spec), "grad_cam_ew", &id)?,
                    m => return Err(config_err("method", format!("`{}` cannot run on classify", m.name()))),
                })
            })?;
            c.emit(&id, "map", &map, image)?;
            let mut rows = Vec::new();
            if cfg.eval_iou {
                for thr in IOU_THRESHOLDS {
                    rows.push(c.row("iou", thr, ctx(iou(&map, &ds.masks[i], thr), "iou", &id)?));
                }
            }
            if cfg.eval_road {
                for p in ROAD_P {
                    let seed = stage_seed(cfg.seed, &format!("road/{i}/{p}"));
                    let s = ctx(
                        road_delete(c.model, image, &map, p, label, cfg.road_noise, seed),
                        "road",
                        &id,
                    )?;
                    rows.push(c.row("road_prob", p, s.prob_drop));
                    rows.push(c.row("road_logit", p, s.logit_drop));
                }
            }
            Ok(ItemResult {
                id,
                rows,
                runtime,
                curve_map: Some(map),
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let mut extra = Vec::new();
    if cfg.eval_curves {
        let set = ctx(
            ClassificationSet::new(ds.images.clone(), ds.labels.clone()),
            "curves",
            "dataset",
        )?;
        let maps: Vec<AttributionMap> = items.iter().filter_map(|r| r.curve_map.clone()).collect();
        for mode in [CurveMode::Delete, CurveMode::Insert] {
            let curve = ctx(
                deletion_insertion_curve(c.model, CurveTask::Classification(&set), &maps, mode, &DEFAULT_P_GRID),
                "curves",
                mode.name(),
            )?;
            let protocol = format!("ic_{}", mode.name());
            for (p, v) in curve.p_grid.iter().zip(&curve.values) {
                extra.push(c.row(&protocol, p, *v));
            }
            extra.push(c.row(&format!("{protocol}_auc"), "", curve.auc));
        }
    }
    Ok((items, extra))
}

fn run_verify(c: &Context<'_>) -> Result<(Vec<ItemResult>, Vec<MetricRow>), IoError> {
    let cfg = c.cfg;
    let ds = verification_data(cfg)?;
    let pairs = ds.pairs();
    if !pairs.iter().any(|p| p.genuine) || !pairs.iter().any(|p| !p.genuine) {
        return Err(config_err("dataset", "verification needs genuine and impostor pairs"));
    }
    let emb = ctx(embed_all(c.model, &ds.images), "embed", "dataset")?;
    let genuine = ctx(pair_scores(&emb, &ds.genuine_pairs), "scores", "genuine")?;
    let impostor = ctx(pair_scores(&emb, &ds.impostor_pairs), "scores", "impostor")?;
    let eer = ctx(eer_threshold(&genuine, &impostor), "eer", "dataset")?;
    let theta = cfg
        .fggb_theta
        .unwrap_or(eer.threshold / c.model.embedding_dim() as f64);
    let mut extra = vec![
        c.row("eer", "", eer.eer),
        c.row("eer_threshold", "", eer.threshold),
    ];
    let items = pairs
        .par_iter()
        .enumerate()
        .map(|(j, pair)| {
            let id = format!("pair{j:05}");
            let (gallery, probe) = (&ds.images[pair.a], &ds.images[pair.b]);
            let mut runtime = Vec::new();
            let maps: Vec<(&str, AttributionMap, &Image)> =
                timed("attribute", &id, &mut runtime, || -> Result<_, IoError> {
                    Ok(match cfg.method {
                        Method::Fame => {
                            let m = ctx(
                                fame_pair(c.model, gallery, probe, PairSide::Probe, &cfg.lots, c.blur()),
                                "fame",
                                &id,
                            )?;
                            vec![("plus", m.plus, probe), ("minus", m.minus, probe)]
                        }
                        Method::GradCam | Method::GradCamEw => {
                            let g = ctx(forward(c.model, gallery), "embed", &id)?;
                            let spec = LossSpec::SimilarityPlus {
                                gallery_embedding: ctx(embedding(&g, c.model), "embed", &id)?.clone(),
                            };
                            let m = if cfg.method == Method::GradCam {
                                ctx(grad_cam(c.model, probe, &spec), "grad_cam", &id)?
                            } else {
                                ctx(grad_cam_ew(c.model, probe, &spec), "grad_cam_ew", &id)?
                            };
                            vec![("plus", m, probe)]
                        }
                        Method::CorrRise => {
                            let seed = stage_seed(cfg.seed, &format!("corr_rise/{j}"));
                            let m = ctx(corr_rise(c.model, gallery, probe, &cfg.masks, seed), "corr_rise", &id)?;
                            vec![
                                ("plus", m.probe.plus, probe),
                                ("minus", m.probe.minus, probe),
                                ("gallery_plus", m.gallery.plus, gallery),
                                ("gallery_minus", m.gallery.minus, gallery),
                            ]
                        }
                        Method::Fggb => {
                            let m = ctx(
                                fggb_lite(c.model, gallery, probe, &FggbConfig { theta }, c.blur()),
                                "fggb",
                                &id,
                            )?;
                            vec![("plus", m.plus, probe), ("minus", m.minus, probe)]
                        }
                    })
                })?;
            for (part, map, image) in &maps {
                c.emit(&id, part, map, image)?;
            }
            let curve_map = maps.into_iter().find(|(part, ..)| *part == "plus").map(|(_, m, _)| m);
            Ok(ItemResult {
                id,
                rows: Vec::new(),
                runtime,
                curve_map,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let protocol_pairs = pairs
        .iter()
        .map(|p| (ds.images[p.a].clone(), ds.images[p.b].clone(), p.genuine))
        .collect();
    let protocol = ctx(VerificationProtocol::new(protocol_pairs, eer.threshold), "curves", "protocol")?;
    extra.push(c.row(
        "clean_accuracy",
        "",
        ctx(protocol.clean_accuracy(c.model), "curves", "clean")?,
    ));
    if cfg.eval_curves {
        let mut maps = Vec::with_capacity(items.len());
        for r in &items {
            maps.push(
                r.curve_map
                    .clone()
                    .ok_or_else(|| IoError::stage("curves", &r.id, crate::evaluation::EvalError::MissingMap(r.id.clone())))?,
            );
        }
        for mode in [CurveMode::Delete, CurveMode::Insert] {
            let curve = ctx(
                deletion_insertion_curve(c.model, CurveTask::Verification(&protocol), &maps, mode, &DEFAULT_P_GRID),
                "curves",
                mode.name(),
            )?;
            let name = format!("fr_{}", mode.name());
            for (p, v) in curve.p_grid.iter().zip(&curve.values) {
                extra.push(c.row(&name, p, *v));
            }
            extra.push(c.row(&format!("{name}_auc"), "", curve.auc));
        }
    }
    Ok((items, extra))
}

fn run_feature_sweep(c: &Context<'_>) -> Result<(Vec<ItemResult>, Vec<MetricRow>), IoError> {
    let cfg = c.cfg;
    let ds = classification_data(cfg)?;
    let [_, h_a, w_a] = c.model.feature_shape();
    let [_, h, w] = c.model.input_shape();
    let items = (0..ds.len())
        .map(|i| {
            let id = format!("img{i:05}");
            let image = &ds.images[i];
            let mut runtime = Vec::new();
            let results = timed("attribute", &id, &mut runtime, || {
                ctx(fame_feature_sweep(c.model, image, &cfg.lots, c.blur()), "fame_feature_sweep", &id)
            })?;
            let mut rows = Vec::new();
            let mut zero = 0usize;
            for (k, r) in results.iter().enumerate() {
                c.emit(&id, &format!("k{k:03}"), &r.map, image)?;
                if r.all_zero {
                    zero += 1;
                    continue;
                }
                let frac = ctx(
                    receptive_mass_fraction(&r.map, (k / w_a, k % w_a), (h_a, w_a), (h, w)),
                    "receptive_mass",
                    &format!("{id}/k{k}"),
                )?;
                rows.push(c.row("receptive_mass", k, frac));
            }
            rows.push(c.row("zero_maps", "", zero as f64));
            Ok(ItemResult {
                id,
                rows,
                runtime,
                curve_map: None,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    Ok((items, Vec::new()))
}

/// Means of per-item rows grouped by `(protocol, P)` in first-seen order.
fn aggregate(items: &[ItemResult]) -> Vec<MetricRow> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut sums: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    for r in items.iter().flat_map(|i| &i.rows) {
        let key = (r.method.clone(), r.protocol.clone(), r.p.clone());
        let e = sums.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0.0, 0)
        });
        e.0 += r.value;
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let (s, n) = sums[&key];
            MetricRow {
                method: key.0,
                protocol: key.1,
                p: key.2,
                value: s / n as f64,
            }
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, IoError> {
    cfg.validate()?;
    let model_path = cfg
        .model
        .as_ref()
        .ok_or_else(|| config_err("model", "a model file is required (see `fame train`)"))?;
    if !model_path.exists() {
        return Err(config_err("model", format!("{} does not exist", model_path.display())));
    }
    if let DatasetSource::Archive(p) = &cfg.dataset {
        if !p.is_dir() {
            return Err(config_err("dataset", format!("{} is not a directory", p.display())));
        }
    }
    let model = ctx(load_model(model_path), "load_model", &model_path.display().to_string())?;
    match (cfg.task, model.head()) {
        (Task::Classify | Task::FeatureSweep, Head::Classification { .. }) | (Task::Verify, Head::Embedding { .. }) => {}
        (task, head) => {
            return Err(config_err(
                "model",
                format!("task `{}` does not fit a model with head {head:?}", task.name()),
            ))
        }
    }
    let out = resolve_output_dir(&cfg.output_dir);
    let echo = cfg.to_text();
    write_bytes(&out.join("config.txt"), echo.as_bytes())?;
    let c = Context {
        cfg,
        model: &model,
        out: &out,
    };
    let (items, extra) = match cfg.task {
        Task::Classify => run_classify(&c)?,
        Task::Verify => run_verify(&c)?,
        Task::FeatureSweep => run_feature_sweep(&c)?,
    };
    let mut agg = aggregate(&items);
    agg.extend(extra);
    let report = RunReport {
        out_dir: out.clone(),
        config_echo: echo,
        items: items
            .iter()
            .flat_map(|i| i.rows.iter().map(|r| (i.id.clone(), r.clone())))
            .collect(),
        aggregate: agg,
        runtime: items.into_iter().flat_map(|i| i.runtime).collect(),
    };
    write_bytes(&out.join("metrics.csv"), report.metrics_csv().as_bytes())?;
    write_bytes(&out.join("items.csv"), report.items_csv().as_bytes())?;
    write_bytes(&out.join("runtime.csv"), report.runtime_csv().as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPreset {
    /// LOTS iteration counts 1 … 500.
    Iterations,
    /// Step sizes 1/255 … 16/255 at 100 iterations.
    Eta,
    /// Six (kernel size, σ) pairs from (5, 0.8) to (81, 13).
    Blur,
}

impl SweepPreset {
    pub const ITERATIONS: [usize; 9] = [1, 25, 50, 75, 100, 200, 300, 400, 500];
    pub const ETA_STEPS: [u32; 5] = [1, 2, 4, 8, 16];
    pub const BLUR: [(usize, f64); 6] = [(5, 0.8), (11, 1.8), (15, 2.5), (25, 4.0), (49, 7.7), (81, 13.0)];

    pub fn name(self) -> &'static str {
        match self {
            SweepPreset::Iterations => "iterations",
            SweepPreset::Eta => "eta",
            SweepPreset::Blur => "blur",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [SweepPreset::Iterations, SweepPreset::Eta, SweepPreset::Blur]
            .into_iter()
            .find(|p| p.name() == s)
    }

    /// One labelled config per sweep point, each in its own sub-directory of the base output.
    pub fn variants(self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let make = |label: String, edit: &dyn Fn(&mut ExperimentConfig)| {
            let mut cfg = base.clone();
            edit(&mut cfg);
            cfg.name = format!("{}-{label}", base.name);
            cfg.output_dir = base.output_dir.join(&label);
            (label, cfg)
        };
        match self {
            SweepPreset::Iterations => Self::ITERATIONS
                .iter()
                .map(|&n| make(format!("iters{n}"), &|c| c.lots.max_iters = n))
                .collect(),
            SweepPreset::Eta => Self::ETA_STEPS
                .iter()
                .map(|&k| {
                    make(format!("eta{k}"), &|c| {
                        c.lots.eta = k as f64 / 255.0;
                        c.lots.max_iters = 100;
                    })
                })
                .collect(),
            SweepPreset::Blur => Self::BLUR
                .iter()
                .map(|&(b, s)| make(format!("b{b}_s{s}"), &|c| c.blur = Some(BlurConfig { kernel_size: b, sigma: s })))
                .collect(),
        }
    }
}

/// Runs every variant of a preset and writes `sweep.csv` (variant,method,protocol,P,value)
/// next to the variant directories.
pub fn run_sweep(base: &ExperimentConfig, preset: SweepPreset) -> Result<Vec<RunReport>, IoError> {
    base.validate()?;
    let mut reports = Vec::new();
    let mut csv = String::from("variant,method,protocol,P,value\n");
    for (label, cfg) in preset.variants(base) {
        let report = run_experiment(&cfg)?;
        for r in &report.aggregate {
            let _ = writeln!(csv, "{label},{},{},{},{}", r.method, r.protocol, r.p, r.value);
        }
        reports.push(report);
    }
    write_bytes(&resolve_output_dir(&base.output_dir).join("sweep.csv"), csv.as_bytes())?;
    Ok(reports)
}
