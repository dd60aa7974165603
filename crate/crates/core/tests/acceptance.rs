//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tilecnn::dataset::{make_color_pair, make_mixture, make_texture_pair, split, LabeledTileSet, SynthKind, SynthSpec};
use tilecnn::image_io::{FloatImage, Image};
use tilecnn::mapping::{class_fraction, heat_color, overlay, predict_tiles, render_heatmap, threshold, BinaryMask, PredictionMap};
use tilecnn::nn::{evaluate, init_model, train, ArchSpec, Model, TrainConfig};
use tilecnn::persistence::{model_from_bytes, model_to_bytes, FORMAT_VERSION};
use tilecnn::tiling::{reassemble, subdivide};
use tilecnn::Error;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn names() -> Vec<String> {
    vec!["a".into(), "b".into()]
}

// 1. Every layer within 1e-3 relative error over 5 seeds, under 30 s.
fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    for (name, check) in common::LAYER_CHECKS {
        let err = (0..5).map(check).fold(0.0, f64::max);
        worst.push((name, err));
    }
    let elapsed = start.elapsed();
    let ok = worst.iter().all(|(_, e)| *e < common::REL_TOL) && within(elapsed, 30.0);
    let summary: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(ok, format!("max rel err: {}; {:.2}s", summary.join(", "), elapsed.as_secs_f64()))
}

// 2. 200 random (H, W, tile) triples: count and bit-exact round trip, under 5 s.
fn tiling_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = 0;
    for _ in 0..200 {
        let h = rng.random_range(1..=120);
        let w = rng.random_range(1..=120);
        let th = rng.random_range(1..=h);
        let tw = rng.random_range(1..=w);
        let c = if rng.random::<bool>() { 3 } else { 1 };
        let data = (0..h * w * c).map(|_| rng.random::<f32>()).collect();
        let img = FloatImage::new(h, w, c, data).unwrap();
        let grid = subdivide(&img, th, tw).unwrap();
        let crop = img.crop(0, 0, (h / th) * th, (w / tw) * tw).unwrap();
        if grid.len() != (h / th) * (w / tw) || reassemble(&grid) != crop {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && within(elapsed, 5.0),
        format!("{failures} failures over 200 triples; {:.2}s", elapsed.as_secs_f64()),
    )
}

const COLOR_SEED: u64 = 2024;

fn color_spec(height: usize, width: usize, fraction: f64, seed: u64) -> SynthSpec {
    SynthSpec { kind: SynthKind::Color, height, width, mix_fraction: fraction, noise_sigma: 0.05, seed }
}

/// Trains the color model on 50 tiles per class at 20x20.
fn train_color_model() -> (Model, LabeledTileSet) {
    let (a, b) = make_color_pair(&color_spec(100, 200, 0.0, COLOR_SEED)).unwrap();
    let grids = [subdivide(&a, 20, 20).unwrap(), subdivide(&b, 20, 20).unwrap()];
    let ds = LabeledTileSet::from_grids(&grids, names()).unwrap();
    assert_eq!(ds.class_counts(), vec![50, 50]);
    let cfg = TrainConfig { seed: COLOR_SEED, ..TrainConfig::default() };
    let model = init_model(ArchSpec::default_for(20, 20, 3, 2), COLOR_SEED).unwrap();
    let empty = LabeledTileSet::new(20, 20, 3, names()).unwrap();
    let (model, _) = train(model, &ds, &empty, &cfg).unwrap();
    (model, ds)
}

fn mixture_scores(model: &Model, fraction: f64, seed: u64) -> (f64, f64, Vec<u8>) {
    // Fresh source images, distinct from the training pair.
    let spec = color_spec(200, 200, fraction, seed);
    let (a, b) = make_color_pair(&spec).unwrap();
    let mix = make_mixture(&spec, &a, &b, 20).unwrap();
    let map = predict_tiles(model, &subdivide(&mix.image, 20, 20).unwrap()).unwrap();
    let predicted = class_fraction(&threshold(&map, 1, 0.5).unwrap()).unwrap();
    let mut csv = Vec::new();
    map.write_scores_csv(&mut csv).unwrap();
    (predicted, mix.realized_fraction, csv)
}

// 3. Predicted class fractions track realized mixture fractions.
fn color_mixture(model: &Model, elapsed_training: Duration) -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut ok = true;
    let mut previous = f64::NEG_INFINITY;
    for (i, fraction) in [0.25, 0.50, 0.75].into_iter().enumerate() {
        let (predicted, truth, _) = mixture_scores(model, fraction, 700 + i as u64);
        ok &= (predicted - truth).abs() <= 0.05 && predicted > previous;
        previous = predicted;
        rows.push(format!("{fraction:.2}: pred {predicted:.3} vs true {truth:.3}"));
    }
    let elapsed = elapsed_training + start.elapsed();
    ok &= within(elapsed, 120.0);
    outcome(ok, format!("{}; {:.2}s", rows.join(", "), elapsed.as_secs_f64()))
}

// 4. Porous vs fibrous textures at 10x10 grayscale tiles.
fn texture_analog() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec { kind: SynthKind::Texture, height: 200, width: 100, mix_fraction: 0.0, noise_sigma: 0.05, seed: 31 };
    let (porous, fibrous) = make_texture_pair(&spec).unwrap();
    let grids = [subdivide(&porous, 10, 10).unwrap(), subdivide(&fibrous, 10, 10).unwrap()];
    let ds = LabeledTileSet::from_grids(&grids, vec!["porous".into(), "fibrous".into()]).unwrap();
    // 200 tiles per class: half train, half held out.
    let (train_set, val) = split(&ds, 0.5, 31).unwrap();
    let cfg = TrainConfig { epochs: 30, seed: 31, ..TrainConfig::default() };
    let model = init_model(ArchSpec::default_for(10, 10, 1, 2), 31).unwrap();
    let (_, report) = train(model, &train_set, &val, &cfg).unwrap();
    let acc = report.validation_accuracy.unwrap();
    let elapsed = start.elapsed();
    outcome(
        acc >= 0.90 && within(elapsed, 180.0) && train_set.class_counts() == vec![100, 100],
        format!("validation accuracy {acc:.3} on {} tiles; {:.2}s", val.len(), elapsed.as_secs_f64()),
    )
}

// 5. Same seed, same bytes.
fn determinism(first: &Model) -> Outcome {
    let (second, _) = train_color_model();
    let same_model = model_to_bytes(first) == model_to_bytes(&second);
    let same_csv = mixture_scores(first, 0.5, 701).2 == mixture_scores(&second, 0.5, 701).2;
    outcome(same_model && same_csv, format!("model bytes identical: {same_model}, scores CSV identical: {same_csv}"))
}

// 6. Round trip reproduces probabilities; corruption yields distinct errors.
fn persistence_round_trip(model: &Model, tiles: &LabeledTileSet) -> Outcome {
    let bytes = model_to_bytes(model);
    let loaded = model_from_bytes(&bytes).unwrap();
    let refs: Vec<&FloatImage> = tiles.items().iter().map(|(t, _)| t).collect();
    let exact = model.predict(refs.iter().copied()).unwrap() == loaded.predict(refs.iter().copied()).unwrap();

    let mut bad_magic = bytes.clone();
    bad_magic[1] = b'Z';
    let mut bad_crc = bytes.clone();
    let n = bad_crc.len();
    bad_crc[n - 30] ^= 1;
    let mut bad_version = bytes.clone();
    bad_version[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let magic = matches!(model_from_bytes(&bad_magic), Err(Error::BadMagic));
    let crc = matches!(model_from_bytes(&bad_crc), Err(Error::CrcMismatch { .. }));
    let version = matches!(model_from_bytes(&bad_version), Err(Error::UnsupportedVersion(_)));
    outcome(
        exact && magic && crc && version,
        format!("probabilities exact: {exact}; magic/crc/version errors: {magic}/{crc}/{version}"),
    )
}

// 7. Pixel-exact palette and blend.
fn rendering_exactness() -> Outcome {
    let endpoints = heat_color(0.0) == [0, 0, 128] && heat_color(1.0) == [255, 255, 0];
    let map = PredictionMap::new(1, 2, 3, 3, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let heat = render_heatmap(&map, 1).unwrap();
    let heat_ok = heat.pixel(2, 2) == [0, 0, 128] && heat.pixel(0, 3) == [255, 255, 0];

    let src = Image::filled(7, 7, &[100, 100, 100]).unwrap();
    let mask = BinaryMask::new(2, 2, 1, vec![true, false, false, true]).unwrap();
    let out = overlay(&src, &mask, 3, 3, [255, 0, 0], 0.5).unwrap();
    let mut blend = true;
    let mut untouched = true;
    for y in 0..7 {
        for x in 0..7 {
            let masked = y < 6 && x < 6 && mask.get(y / 3, x / 3);
            if masked {
                blend &= out.pixel(y, x) == [178, 50, 50];
            } else {
                untouched &= out.pixel(y, x) == src.pixel(y, x);
            }
        }
    }
    outcome(
        endpoints && heat_ok && blend && untouched,
        format!("palette {endpoints}, heatmap {heat_ok}, blend {blend}, outside untouched {untouched}"),
    )
}

// 8. Masks at tau = 0.1..0.9 form a descending chain.
fn threshold_monotonicity(model: &Model) -> Outcome {
    let spec = color_spec(200, 200, 0.5, 808);
    let (a, b) = make_color_pair(&spec).unwrap();
    let mix = make_mixture(&spec, &a, &b, 20).unwrap();
    let map = predict_tiles(model, &subdivide(&mix.image, 20, 20).unwrap()).unwrap();
    // A fresh model spreads probabilities across the range too.
    let fresh = init_model(ArchSpec::default_for(20, 20, 3, 2), 1).unwrap();
    let fresh_map = predict_tiles(&fresh, &subdivide(&mix.image, 20, 20).unwrap()).unwrap();
    let mut chain = true;
    for m in [&map, &fresh_map] {
        let masks: Vec<_> = (1..=9).map(|i| threshold(m, 1, f64::from(i) / 10.0).unwrap()).collect();
        chain &= masks.windows(2).all(|w| w[1].is_subset_of(&w[0]));
    }
    outcome(chain, format!("descending chain over 9 thresholds on 2 maps: {chain}"))
}

// 9. Solid colors: 100% train accuracy within 5 epochs, under 20 s.
fn trivial_separation() -> Outcome {
    let start = Instant::now();
    let spec = SynthSpec { kind: SynthKind::Color, height: 80, width: 100, mix_fraction: 0.0, noise_sigma: 0.0, seed: 9 };
    let (a, b) = make_color_pair(&spec).unwrap();
    let grids = [subdivide(&a, 20, 20).unwrap(), subdivide(&b, 20, 20).unwrap()];
    let ds = LabeledTileSet::from_grids(&grids, names()).unwrap();
    let cfg = TrainConfig { epochs: 5, seed: 9, ..TrainConfig::default() };
    let model = init_model(ArchSpec::default_for(20, 20, 3, 2), 9).unwrap();
    let empty = LabeledTileSet::new(20, 20, 3, names()).unwrap();
    let (model, report) = train(model, &ds, &empty, &cfg).unwrap();
    let acc = evaluate(&model, &ds).unwrap();
    let elapsed = start.elapsed();
    outcome(
        ds.len() == 40 && acc == 1.0 && within(elapsed, 20.0),
        format!(
            "train accuracy {acc:.3} after {} epochs (last epoch loss {:.4}); {:.2}s",
            report.epochs.len(),
            report.epochs.last().unwrap().loss,
            elapsed.as_secs_f64()
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "gradient correctness", gradient_correctness()));
    results.push((2, "tiling exactness", tiling_exactness()));

    let start = Instant::now();
    let (color_model, color_tiles) = train_color_model();
    let training_time = start.elapsed();
    results.push((3, "color mixture analog", color_mixture(&color_model, training_time)));
    results.push((4, "texture analog", texture_analog()));
    results.push((5, "determinism", determinism(&color_model)));
    results.push((6, "persistence round trip", persistence_round_trip(&color_model, &color_tiles)));
    results.push((7, "rendering exactness", rendering_exactness()));
    results.push((8, "threshold monotonicity", threshold_monotonicity(&color_model)));
    results.push((9, "trivial separation", trivial_separation()));

    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {n}: {name}: {}", o.detail);
        failed += usize::from(!o.passed);
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
