//! Acceptance suite. Runs every criterion in sequence (the runtime criterion
//! needs an otherwise idle process) and prints one PASS/FAIL line for each.

mod common;

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use fame_core::attribution::{
    corr_rise_with_masks, fame, fame_feature_sweep, fame_pair, gaussian_blur, lots_iterate, max_normalize,
    BlurConfig, FameResult, LotsConfig, PairSide,
};
use fame_core::evaluation::{
    apply_removal, deletion_insertion_curve, iou, noisy_linear_impute, random_baseline_map, runtime_probe,
    sign_test, trapezoid_auc, CurveMode, CurveTask, GroundTruthMask, VerificationProtocol, DEFAULT_P_GRID,
};
use fame_core::io::{run_experiment, run_sweep, ExperimentConfig, SweepPreset, Task};
use fame_core::netcore::{
    cosine, embedding, forward, identity_embedder, loss_and_input_gradient, save_model, shapes_classifier,
    Head, Image, LossSpec, ModelBuilder, ModelGraph, Precision, Tensor,
};
use fame_core::seeds::{item_rng, stage_seed};
use fame_core::training::{
    classifier_accuracy, eer_threshold, embed_all, gen_identities, gen_shapes, pair_scores, softmax_probs,
    train_classifier, train_embedder, IdentityDataset, ShapesDataset, TrainConfig,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1;

fn seed(stage: &str) -> u64 {
    stage_seed(SEED, &format!("acceptance/{stage}"))
}

fn rng(stage: &str) -> ChaCha8Rng {
    item_rng(seed(stage), 0)
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Fixtures {
    classifier: ModelGraph,
    test_shapes: ShapesDataset,
    embedder: ModelGraph,
    held_out: IdentityDataset,
}

fn fixtures() -> &'static Fixtures {
    static F: OnceLock<Fixtures> = OnceLock::new();
    F.get_or_init(|| {
        let t = Instant::now();
        let train = gen_shapes(4000, seed("shapes/train"));
        let cfg = TrainConfig {
            seed: seed("train/classifier"),
            ..TrainConfig::classifier_default()
        };
        let (classifier, hist) = train_classifier(&shapes_classifier(seed("init/classifier")), &train, &cfg).unwrap();
        let test_shapes = gen_shapes(100, seed("shapes/test"));
        let test_acc = classifier_accuracy(&classifier, &test_shapes.images, &test_shapes.labels).unwrap();
        let ids = gen_identities(40, 8, seed("identities/train"));
        let cfg = TrainConfig {
            seed: seed("train/embedder"),
            ..TrainConfig::embedder_default()
        };
        let (embedder, ehist) = train_embedder(&identity_embedder(seed("init/embedder"), 32), &ids, &cfg).unwrap();
        println!(
            "fixtures: classifier train {:.3} test {:.3}, embedder train {:.3} ({:.1} s)",
            hist.final_accuracy,
            test_acc,
            ehist.final_accuracy,
            t.elapsed().as_secs_f64()
        );
        Fixtures {
            classifier,
            test_shapes,
            embedder,
            held_out: gen_identities(20, 6, seed("identities/test")),
        }
    })
}

/// Default LOTS setting (η = 1/255, 500 iterations) with the default blur.
fn shape_maps() -> &'static Vec<FameResult> {
    static M: OnceLock<Vec<FameResult>> = OnceLock::new();
    M.get_or_init(|| {
        let f = fixtures();
        let blur = BlurConfig::default();
        use rayon::prelude::*;
        (0..f.test_shapes.len())
            .into_par_iter()
            .map(|i| {
                let spec = LossSpec::ClassLogit {
                    class: f.test_shapes.labels[i],
                };
                fame(&f.classifier, &f.test_shapes.images[i], &spec, &LotsConfig::default(), Some(&blur)).unwrap()
            })
            .collect()
    })
}

struct Verification {
    protocol: VerificationProtocol,
    fame_maps: Vec<fame_core::attribution::AttributionPair>,
}

fn verification() -> &'static Verification {
    static V: OnceLock<Verification> = OnceLock::new();
    V.get_or_init(|| {
        let f = fixtures();
        let ds = &f.held_out;
        let emb = embed_all(&f.embedder, &ds.images).unwrap();
        let g = pair_scores(&emb, &ds.genuine_pairs).unwrap();
        let i = pair_scores(&emb, &ds.impostor_pairs).unwrap();
        let eer = eer_threshold(&g, &i).unwrap();
        let pairs = ds
            .pairs()
            .iter()
            .map(|p| (ds.images[p.a].clone(), ds.images[p.b].clone(), p.genuine))
            .collect();
        let protocol = VerificationProtocol::new(pairs, eer.threshold).unwrap();
        let blur = BlurConfig::default();
        use rayon::prelude::*;
        let fame_maps = protocol
            .pairs
            .par_iter()
            .map(|(gal, pro, _)| {
                fame_pair(&f.embedder, gal, pro, PairSide::Probe, &LotsConfig::default(), Some(&blur)).unwrap()
            })
            .collect();
        Verification { protocol, fame_maps }
    })
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = rng("gradient-oracle");
    let (mut accepted, mut rejected, mut worst) = (0, 0, 0.0f64);
    let mut kinds = std::collections::BTreeSet::new();
    while accepted < 60 {
        ensure(rejected < 20_000, || format!("only {accepted} kink-free instances found"))?;
        let Some(inst) = common::random_instance(&mut rng) else {
            rejected += 1;
            continue;
        };
        let x0 = inst.image.tensor();
        if !common::kink_free(&inst.model, x0, &inst.spec) {
            rejected += 1;
            continue;
        }
        let (_, grad) = loss_and_input_gradient(&inst.model, x0, &inst.spec).unwrap();
        let fd = common::fd_gradient(&inst.model, x0, &inst.spec, 1e-5);
        let err = common::max_relative_error(grad.values(), &fd);
        ensure(err < 1e-3, || format!("instance {accepted} ({}): relative error {err:e}", inst.spec.name()))?;
        worst = worst.max(err);
        kinds.insert(inst.spec.name());
        accepted += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    ensure(kinds.len() == 4, || format!("only losses {kinds:?} covered"))?;
    Ok(format!(
        "{accepted} models, {rejected} rejected near kinks, max rel err {worst:.2e}, {secs:.1} s"
    ))
}

fn criterion_2() -> Outcome {
    let cfg = LotsConfig::default();
    ensure(cfg.eta == 1.0 / 255.0 && cfg.max_iters == 500, || format!("defaults {cfg:?}"))?;
    let maps = shape_maps();
    ensure(maps.len() >= 100, || format!("{} images", maps.len()))?;
    let mut decreased = 0;
    for (i, r) in maps.iter().enumerate() {
        let losses = &r.lots.losses;
        if losses.last().unwrap() < &losses[0] {
            decreased += 1;
        }
        ensure(r.lots.adversarial.values().iter().all(|v| (0.0..=1.0).contains(v)), || {
            format!("image {i}: adversarial pixel outside [0, 1]")
        })?;
        ensure(losses.len() == 501 || r.lots.zero_gradient(), || {
            format!("image {i}: {} losses recorded", losses.len())
        })?;
    }
    let frac = decreased as f64 / maps.len() as f64;
    ensure(frac >= 0.95, || format!("loss decreased on {decreased}/{}", maps.len()))?;
    Ok(format!("loss decreased on {decreased}/{} images, pixels in [0, 1]", maps.len()))
}

fn check_map(values: &[f64], all_zero: bool) -> bool {
    let in_range = values.iter().all(|v| (0.0..=1.0).contains(v));
    let max = values.iter().cloned().fold(0.0, f64::max);
    in_range && if all_zero { max == 0.0 } else { max == 1.0 }
}

fn criterion_3() -> Outcome {
    let mut n = 0;
    for (i, r) in shape_maps().iter().enumerate() {
        ensure(check_map(r.map.values(), r.all_zero), || format!("shape map {i} violates the contract"))?;
        n += 1;
    }
    for (j, pair) in verification().fame_maps.iter().enumerate() {
        for m in [&pair.plus, &pair.minus] {
            ensure(check_map(m.values(), m.is_all_zero()), || format!("pair map {j} violates the contract"))?;
            n += 1;
        }
    }
    let mut rng = rng("blur");
    for _ in 0..20 {
        let (h, w) = (rng.random_range(1..40usize), rng.random_range(1..40usize));
        let t = Tensor::new(vec![h, w], (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap();
        let sigma = rng.random_range(0.1..20.0);
        ensure(gaussian_blur(&t, &BlurConfig::new(1, sigma).unwrap()).unwrap() == t, || {
            "b = 1 changed the map".into()
        })?;
        let c = rng.random::<f64>();
        let constant = Tensor::filled(&[h, w], c);
        for (b, s) in SweepPreset::BLUR {
            let out = gaussian_blur(&constant, &BlurConfig::new(b, s).unwrap()).unwrap();
            let dev = out.values().iter().map(|v| (v - c).abs()).fold(0.0, f64::max);
            ensure(dev < 1e-12, || format!("constant {c} moved by {dev:e} under b={b}"))?;
        }
        let normalized = max_normalize(&constant).unwrap();
        ensure(normalized.map.values().iter().all(|&v| v == 1.0 || c == 0.0), || {
            "constant normalization".into()
        })?;
    }
    Ok(format!("{n} emitted maps in contract; blur identity and constant fixed points hold"))
}

fn criterion_4(dir: &Path) -> Outcome {
    let mut rng = rng("receptive-field");
    let mut checked = 0;
    for padding in [0usize, 1] {
        for trial in 0..3u64 {
            let model = ModelBuilder::new([1, 8, 8], seed("receptive-field") + trial)
                .conv2d(2, 3, 1, padding)
                .mark_feature()
                .global_avgpool()
                .linear(2)
                .build(Head::Classification { classes: 2 }, Precision::F64)
                .unwrap();
            let image = Image::new(1, 8, 8, (0..64).map(|_| rng.random_range(0.1..0.9)).collect()).unwrap();
            let lots = LotsConfig {
                max_iters: 50,
                ..Default::default()
            };
            let sweep = fame_feature_sweep(&model, &image, &lots, None).unwrap();
            let [_, ha, wa] = model.feature_shape();
            ensure(sweep.len() == ha * wa, || format!("{} maps for {ha}×{wa} locations", sweep.len()))?;
            for (k, r) in sweep.iter().enumerate() {
                let (row, col) = ((k / wa) as isize, (k % wa) as isize);
                let (r0, c0) = (row - padding as isize, col - padding as isize);
                for y in 0..8isize {
                    for x in 0..8isize {
                        let inside = (r0..r0 + 3).contains(&y) && (c0..c0 + 3).contains(&x);
                        let v = r.map.get(y as usize, x as usize);
                        ensure(inside || v == 0.0, || {
                            format!("padding {padding}, k={k}: pixel ({y}, {x}) outside the 3×3 cell has {v}")
                        })?;
                    }
                }
                ensure(!r.all_zero, || format!("padding {padding}, k={k}: empty map"))?;
                checked += 1;
            }
        }
    }
    let f = fixtures();
    let model_path = dir.join("classifier.fame");
    save_model(&f.classifier, &model_path).unwrap();
    let mut cfg = ExperimentConfig {
        task: Task::FeatureSweep,
        model: Some(model_path),
        n_images: 1,
        write_maps: false,
        output_dir: dir.join("feature-sweep"),
        ..Default::default()
    };
    cfg.set("seed", &seed("feature-sweep").to_string()).unwrap();
    let report = run_experiment(&cfg).unwrap();
    let fractions: Vec<f64> = report
        .aggregate
        .iter()
        .filter(|r| r.protocol == "receptive_mass")
        .map(|r| r.value)
        .collect();
    let [_, ha, wa] = f.classifier.feature_shape();
    let zero = report.value("zero_maps", "").unwrap_or(f64::NAN) as usize;
    ensure(fractions.len() + zero == ha * wa, || {
        format!("{} fractions + {zero} empty maps for {} locations", fractions.len(), ha * wa)
    })?;
    ensure(fractions.iter().all(|v| (0.0..=1.0).contains(v)), || "fraction outside [0, 1]".into())?;
    ensure(report.out_dir.join("metrics.csv").is_file(), || "metrics.csv missing".into())?;
    let mean = fractions.iter().sum::<f64>() / fractions.len().max(1) as f64;
    let (lo, hi) = fractions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(format!(
        "single conv: {checked} maps inside their 3×3 cells; trained model: {} fractions, mean {mean:.3} (range {lo:.3}–{hi:.3})",
        fractions.len()
    ))
}

fn criterion_5() -> Outcome {
    let f = fixtures();
    let maps = shape_maps();
    let mut diffs = Vec::with_capacity(maps.len());
    let (mut sum_fame, mut sum_random) = (0.0, 0.0);
    for (i, r) in maps.iter().enumerate() {
        let image = &f.test_shapes.images[i];
        let label = f.test_shapes.labels[i];
        let prob = |x: &Image| softmax_probs(forward(&f.classifier, x).unwrap().output())[label];
        let base = prob(image);
        let random = random_baseline_map(32, 32, seed(&format!("random-map/{i}"))).unwrap();
        let drop_fame = base - prob(&apply_removal(image, &r.map, 50.0, CurveMode::Delete).unwrap());
        let drop_random = base - prob(&apply_removal(image, &random, 50.0, CurveMode::Delete).unwrap());
        sum_fame += drop_fame;
        sum_random += drop_random;
        diffs.push(drop_fame - drop_random);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let st = sign_test(&diffs);
    let detail = format!(
        "mean drop FAME {:.3} vs random {:.3}; paired diff {mean:.3}, sign test {}+/{}- p={:.2e}",
        sum_fame / n,
        sum_random / n,
        st.positives,
        st.negatives,
        st.p_value
    );
    ensure(diffs.len() >= 100 && mean > 0.0 && st.p_value < 0.05, || detail.clone())?;
    Ok(detail)
}

fn criterion_6() -> Outcome {
    let f = fixtures();
    let v = verification();
    let clean = v.protocol.clean_accuracy(&f.embedder).unwrap();
    let task = CurveTask::Verification(&v.protocol);
    let plus: Vec<_> = v.fame_maps.iter().map(|m| m.plus.clone()).collect();
    let random: Vec<_> = (0..plus.len())
        .map(|j| random_baseline_map(32, 32, seed(&format!("random-pair-map/{j}"))).unwrap())
        .collect();
    let curve = |maps: &[_], mode| deletion_insertion_curve(&f.embedder, task, maps, mode, &DEFAULT_P_GRID).unwrap();
    let del = curve(&plus, CurveMode::Delete);
    let ins = curve(&plus, CurveMode::Insert);
    let ins_random = curve(&random, CurveMode::Insert);
    let del_random = curve(&random, CurveMode::Delete);
    ensure(del.values[0] == clean, || format!("delete@0 {} vs clean {clean}", del.values[0]))?;
    ensure(*ins.values.last().unwrap() == clean, || {
        format!("insert@100 {} vs clean {clean}", ins.values.last().unwrap())
    })?;
    // (50·(1 + 0.5)/2 + 50·(0.5 + 0.25)/2) / 100 and (30·1.3/2 + 70·1.1/2) / 100.
    let a = trapezoid_auc(&[0.0, 50.0, 100.0], &[1.0, 0.5, 0.25]).unwrap();
    let b = trapezoid_auc(&[0.0, 30.0, 100.0], &[0.9, 0.4, 0.7]).unwrap();
    ensure((a - 0.5625).abs() < 1e-12 && (b - 0.58).abs() < 1e-12, || format!("fixture AUCs {a}, {b}"))?;
    let detail = format!(
        "{} pairs, clean acc {clean:.3}; insert AUC FAME {:.4} vs random {:.4} (delete {:.4} vs {:.4})",
        plus.len(),
        ins.auc,
        ins_random.auc,
        del.auc,
        del_random.auc
    );
    ensure(ins.auc >= ins_random.auc, || detail.clone())?;
    Ok(detail)
}

fn criterion_7() -> Outcome {
    let mut rng = rng("metric-oracles");
    // IoU on random 8×8 instances, values on a coarse grid so ties with the threshold occur.
    for n in 0..500 {
        let values: Vec<f64> = (0..64)
            .map(|_| if rng.random_bool(0.5) { rng.random_range(0..=10) as f64 / 10.0 } else { rng.random() })
            .collect();
        let map = max_normalize(&Tensor::new(vec![8, 8], values).unwrap()).unwrap().map;
        let bits: Vec<bool> = (0..64).map(|_| rng.random_bool(0.3)).collect();
        let truth = GroundTruthMask::new(8, 8, bits.clone()).unwrap();
        let thr = [0.3, 0.5, 0.7, rng.random_range(0.01..0.99)][n % 4];
        let (mut inter, mut union) = (0, 0);
        for y in 0..8 {
            for x in 0..8 {
                let a = map.get(y, x) >= thr;
                let b = bits[y * 8 + x];
                inter += (a && b) as usize;
                union += (a || b) as usize;
            }
        }
        let expect = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
        let got = iou(&map, &truth, thr).unwrap();
        ensure(got == expect, || format!("IoU instance {n}: {got} vs {expect}"))?;
    }
    // Imputation against a dense solve.
    let mut worst_impute = 0.0f64;
    for n in 0..200 {
        let (h, w) = (rng.random_range(2..=6usize), rng.random_range(2..=6usize));
        let c = if rng.random_bool(0.3) { 3 } else { 1 };
        let image = Image::new(c, h, w, (0..c * h * w).map(|_| rng.random()).collect()).unwrap();
        let k = rng.random_range(1..=20.min(h * w - 1));
        let mut removed = vec![false; h * w];
        let mut order: Vec<usize> = (0..h * w).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        for &i in &order[..k] {
            removed[i] = true;
        }
        let got = noisy_linear_impute(&image, &removed, 0.0, 0).unwrap();
        let expect = common::dense_impute(&image, &removed);
        let err = got.values().iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-10, || format!("imputation instance {n}: error {err:e}"))?;
        worst_impute = worst_impute.max(err);
    }
    // EER against an exhaustive sweep.
    for n in 0..300 {
        let ng = rng.random_range(1..=50usize);
        let ni = rng.random_range(1..=50usize);
        let quantized = rng.random_bool(0.5);
        let mut draw = |shift: f64| -> f64 {
            let v: f64 = rng.random::<f64>() + shift;
            if quantized {
                (v * 8.0).round() / 8.0
            } else {
                v
            }
        };
        let genuine: Vec<f64> = (0..ng).map(|_| draw(0.3)).collect();
        let impostor: Vec<f64> = (0..ni).map(|_| draw(0.0)).collect();
        let got = eer_threshold(&genuine, &impostor).unwrap();
        let (far, frr) = common::eer_oracle(&genuine, &impostor);
        ensure((got.far - got.frr).abs() == (far - frr).abs() && got.far == far && got.frr == frr, || {
            format!("EER instance {n}: ({}, {}) vs ({far}, {frr})", got.far, got.frr)
        })?;
        ensure(got.eer == (far + frr) / 2.0, || format!("EER instance {n}: eer {}", got.eer))?;
    }
    // CorrRISE with every single-pixel mask against hand Pearson.
    let mut worst_pearson = 0.0f64;
    for n in 0..20u64 {
        let model = ModelBuilder::new([1, 5, 5], seed("corr-rise-model") + n)
            .conv2d(3, 3, 1, 1)
            .relu()
            .mark_feature()
            .flatten()
            .linear(4)
            .build(Head::Embedding { dim: 4 }, Precision::F64)
            .unwrap();
        let image = Image::new(1, 5, 5, (0..25).map(|_| rng.random_range(0.1..1.0)).collect()).unwrap();
        let frozen = Tensor::new(vec![4], (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let masks: Vec<Vec<bool>> = (0..25).map(|j| (0..25).map(|i| i != j).collect()).collect();
        let got = corr_rise_with_masks(&model, &image, &frozen, &masks).unwrap();
        let scores: Vec<f64> = (0..25)
            .map(|j| {
                let mut v = image.values().to_vec();
                v[j] = 0.0;
                let x = Image::new(1, 5, 5, v).unwrap();
                cosine(&frozen, embedding(&forward(&model, &x).unwrap(), &model).unwrap()).unwrap()
            })
            .collect();
        let r: Vec<f64> = (0..25)
            .map(|i| {
                let m: Vec<f64> = (0..25).map(|j| if j == i { 0.0 } else { 1.0 }).collect();
                common::pearson(&m, &scores)
            })
            .collect();
        let plus = common::normalize(&r.iter().map(|v| v.max(0.0)).collect::<Vec<_>>());
        let minus = common::normalize(&r.iter().map(|v| (-v).max(0.0)).collect::<Vec<_>>());
        for (a, b) in got.plus.values().iter().zip(&plus).chain(got.minus.values().iter().zip(&minus)) {
            let e = (a - b).abs();
            ensure(e < 1e-12, || format!("CorrRISE instance {n}: error {e:e}"))?;
            worst_pearson = worst_pearson.max(e);
        }
    }
    Ok(format!(
        "IoU 500/500 exact, impute max err {worst_impute:.1e}, EER 300/300 exact, CorrRISE max err {worst_pearson:.1e}"
    ))
}

fn criterion_8() -> Outcome {
    let f = fixtures();
    let image = &f.test_shapes.images[0];
    let spec = LossSpec::ClassLogit {
        class: f.test_shapes.labels[0],
    };
    let time = |iters: usize| {
        let cfg = LotsConfig {
            max_iters: iters,
            ..Default::default()
        };
        runtime_probe(|| lots_iterate(&f.classifier, image, &spec, &cfg).unwrap(), 7).unwrap()
    };
    // Warm-up so both measurements see the same cache state.
    time(50);
    let short = time(50);
    let long = time(500);
    let ratio = long.median / short.median;
    let detail = format!(
        "median {:.4} s at 500 / {:.4} s at 50 = ratio {ratio:.2}",
        long.median, short.median
    );
    ensure((5.0..=20.0).contains(&ratio), || detail.clone())?;
    Ok(detail)
}

fn criterion_9(dir: &Path) -> Outcome {
    let f = fixtures();
    let model_path = dir.join("classifier-sweep.fame");
    save_model(&f.classifier, &model_path).unwrap();
    let base = |name: &str| {
        let mut cfg = ExperimentConfig {
            name: name.into(),
            task: Task::Classify,
            model: Some(model_path.clone()),
            n_images: 2,
            write_maps: false,
            output_dir: dir.join(name),
            ..Default::default()
        };
        cfg.seed = seed("sweep");
        cfg
    };
    let mut summary = Vec::new();
    for (preset, expected) in [(SweepPreset::Blur, 6), (SweepPreset::Iterations, 9)] {
        let a = run_sweep(&base(&format!("{}-a", preset.name())), preset).unwrap();
        let b = run_sweep(&base(&format!("{}-b", preset.name())), preset).unwrap();
        ensure(a.len() == expected && b.len() == expected, || {
            format!("{} preset ran {} runs", preset.name(), a.len())
        })?;
        for (ra, rb) in a.iter().zip(&b) {
            for file in ["metrics.csv", "items.csv"] {
                let x = std::fs::read(ra.out_dir.join(file)).unwrap();
                let y = std::fs::read(rb.out_dir.join(file)).unwrap();
                ensure(x == y, || format!("{} differs between {:?} and {:?}", file, ra.out_dir, rb.out_dir))?;
            }
        }
        let labels: Vec<String> = a
            .iter()
            .map(|r| r.out_dir.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        summary.push(format!("{} [{}]", preset.name(), labels.join(" ")));
    }
    let blur = SweepPreset::Blur.variants(&base("check"));
    let pairs: Vec<(usize, f64)> = blur
        .iter()
        .map(|(_, c)| c.blur.map(|b| (b.kernel_size, b.sigma)).unwrap())
        .collect();
    ensure(pairs == SweepPreset::BLUR, || format!("blur variants {pairs:?}"))?;
    Ok(format!("deterministic reruns of {}", summary.join(", ")))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient oracle", Box::new(criterion_1)),
        ("LOTS contract", Box::new(criterion_2)),
        ("map contract", Box::new(criterion_3)),
        ("receptive field", Box::new(|| criterion_4(dir.path()))),
        ("deletion sanity", Box::new(criterion_5)),
        ("verification curves", Box::new(criterion_6)),
        ("metric oracles", Box::new(criterion_7)),
        ("runtime linearity", Box::new(criterion_8)),
        ("sweep reproduction", Box::new(|| criterion_9(dir.path()))),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(d) => format!("criterion {} ({name}): PASS: {d} [{secs:.1} s]", n + 1),
            Err(d) => {
                failed += 1;
                format!("criterion {} ({name}): FAIL: {d} [{secs:.1} s]", n + 1)
            }
        };
        println!("{line}");
        let _ = std::io::stdout().flush();
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
