use std::path::{Path, PathBuf};
use std::time::Instant;

use tilecnn::dataset::{
    load_class_tiles, make_color_pair, make_mixture, make_texture_pair, split, LabeledTileSet, SynthKind,
    SynthSpec, TruthMask,
};
use tilecnn::image_io::{load_image, save_image, to_float, FloatImage, Image};
use tilecnn::mapping::{
    class_fraction, match_channels, overlay, predict_tiles, render_heatmap, threshold, ChannelAdjust, PredictionMap,
};
use tilecnn::nn::{evaluate, init_model, train, train_with, ArchSpec, Model, TrainConfig, TrainReport};
use tilecnn::persistence::{load_model, save_model};
use tilecnn::tiling::{export_tiles, subdivide};

use crate::{
    ClassArgs, Command, EvalArgs, Failure, Hyper, PredictArgs, SubdivideArgs, Sweep, SynthArgs, SynthBase,
    SynthCommandKind, TrainArgs,
};

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Subdivide(a) => cmd_subdivide(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn cmd_subdivide(a: SubdivideArgs) -> Result<(), Failure> {
    let img = to_float(&load_image(&a.input)?);
    let grid = subdivide(&img, a.tile, a.tile_w.unwrap_or(a.tile))?;
    let written = export_tiles(&grid, &a.out)?;
    println!("{} x {} = {} tiles written", grid.rows(), grid.cols(), written);
    Ok(())
}

fn write_png(img: &FloatImage, path: &Path) -> Result<(), Failure> {
    save_image(&img.to_u8(), path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let kind = match (a.kind, a.base) {
        (SynthCommandKind::Color, _) | (SynthCommandKind::Mixture, SynthBase::Color) => SynthKind::Color,
        (SynthCommandKind::Texture, _) | (SynthCommandKind::Mixture, SynthBase::Texture) => SynthKind::Texture,
    };
    let spec = SynthSpec {
        kind,
        height: a.height,
        width: a.width,
        mix_fraction: a.fraction,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    spec.validate()?;
    let (first, second, names) = match kind {
        SynthKind::Color => {
            let (x, y) = make_color_pair(&spec)?;
            (x, y, ["color_a.png", "color_b.png"])
        }
        SynthKind::Texture => {
            let (x, y) = make_texture_pair(&spec)?;
            (x, y, ["porous.png", "fibrous.png"])
        }
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    write_png(&first, &a.out.join(names[0]))?;
    write_png(&second, &a.out.join(names[1]))?;

    if a.kind == SynthCommandKind::Mixture {
        let mix = make_mixture(&spec, &first, &second, a.tile)?;
        write_png(&mix.image, &a.out.join("mixture.png"))?;
        let truth = a.out.join("truth.csv");
        mix.truth.save_csv(&truth)?;
        println!("wrote {}", truth.display());
        let hits = mix.truth.labels.iter().filter(|&&l| l == 1).count();
        println!(
            "realized fraction {:.4} ({hits} of {} tiles from {})",
            mix.realized_fraction,
            mix.truth.labels.len(),
            names[1]
        );
    }
    Ok(())
}

fn class_names(data: &ClassArgs) -> Result<Vec<String>, Failure> {
    if data.names.is_empty() {
        return Ok(data
            .classes
            .iter()
            .map(|p| p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()))
            .collect());
    }
    if data.names.len() != data.classes.len() {
        return Err(Failure::Usage(format!(
            "{} names given for {} classes",
            data.names.len(),
            data.classes.len()
        )));
    }
    Ok(data.names.clone())
}

/// Reads every class, optionally overriding the tile size.
fn load_tiles(data: &ClassArgs, tile: Option<usize>) -> Result<LabeledTileSet, Failure> {
    if data.classes.len() < 2 {
        return Err(Failure::Usage(format!("need ≥2 classes, got {}", data.classes.len())));
    }
    let names = class_names(data)?;
    let tile = tile.or(data.tile).map(|t| (t, t));
    let mut set: Option<LabeledTileSet> = None;
    for (label, path) in data.classes.iter().enumerate() {
        let tiles = load_class_tiles(path, tile)?;
        if tiles.is_empty() {
            return Err(Failure::Runtime(format!("class {label} ({}) has no tiles", path.display())));
        }
        for t in tiles {
            let set = match &mut set {
                Some(s) => s,
                None => set.insert(LabeledTileSet::new(t.height(), t.width(), t.channels(), names.clone())?),
            };
            set.push(t, label).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(set.expect("at least two non-empty classes"))
}

fn train_config(h: &Hyper) -> TrainConfig {
    TrainConfig {
        epochs: h.epochs,
        batch_size: h.batch_size,
        learning_rate: h.lr,
        momentum: h.momentum,
        seed: h.seed,
        shuffle_each_epoch: !h.no_shuffle,
    }
}

fn prepare(ds: LabeledTileSet, h: &Hyper) -> Result<(LabeledTileSet, LabeledTileSet, Model), Failure> {
    let ds = if h.grayscale { ds.to_grayscale() } else { ds };
    let (train_set, val) = split(&ds, h.train_fraction, h.seed)?;
    let arch = ArchSpec::with_depth(ds.tile_h(), ds.tile_w(), ds.channels(), ds.num_classes(), h.depth);
    let model = init_model(arch, h.seed)?;
    Ok((train_set, val, model))
}

/// `model.pcnn` -> `model.report.json`.
fn report_path(model_path: &Path) -> PathBuf {
    model_path.with_extension("report.json")
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let ds = load_tiles(&a.data, None)?;
    let (train_set, val, model) = prepare(ds, &a.hyper)?;
    let counts = train_set.class_counts();
    println!(
        "training on {} tiles of {}x{}x{} ({} held out), classes {:?} with {:?} tiles",
        train_set.len(),
        train_set.tile_h(),
        train_set.tile_w(),
        train_set.channels(),
        val.len(),
        train_set.class_names(),
        counts
    );
    let cfg = train_config(&a.hyper);
    let epochs = cfg.epochs;
    let (model, report) = train_with(model, &train_set, &val, &cfg, |s| {
        println!("epoch {:>3}/{epochs}  loss {:.4}  train accuracy {:.3}", s.epoch, s.loss, s.accuracy);
    })?;

    save_model(&model, &a.out)?;
    println!("wrote {}", a.out.display());
    let report_file = report_path(&a.out);
    write_report(&report, &report_file)?;
    println!("wrote {}", report_file.display());
    match report.validation_accuracy {
        Some(acc) => println!("validation accuracy {acc:.4} on {} tiles", val.len()),
        None => println!("validation accuracy n/a (no held-out tiles)"),
    }
    Ok(())
}

fn write_report(report: &TrainReport, path: &Path) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

struct Prediction {
    source: Image,
    map: PredictionMap,
}

/// Loads the model and image, adapts channels, and predicts every tile.
fn predict_image(model_path: &Path, input: &Path) -> Result<(Model, Prediction), Failure> {
    let model = load_model(model_path)?;
    let source = load_image(input)?;
    let arch = model.arch().clone();
    let (img, adjust) = match_channels(&to_float(&source), arch.input_c)?;
    match adjust {
        ChannelAdjust::Unchanged => {}
        ChannelAdjust::ToGrayscale => println!("note: RGB input converted to grayscale for a 1-channel model"),
        ChannelAdjust::ToRgb => println!("note: grayscale input replicated to RGB for a 3-channel model"),
    }
    let grid = subdivide(&img, arch.input_h, arch.input_w)?;
    let map = predict_tiles(&model, &grid)?;
    Ok((model, Prediction { source, map }))
}

fn check_class(class: usize, k: usize, flag: &str) -> Result<(), Failure> {
    if class >= k {
        return Err(Failure::Usage(format!("--{flag} {class} out of range for {k} classes")));
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<(), Failure> {
    let (model, p) = predict_image(&a.model, &a.input)?;
    let k = model.num_classes();
    check_class(a.display_class, k, "display-class")?;
    check_class(a.target_class, k, "target-class")?;
    let map = &p.map;
    println!("{} x {} tiles of {}x{}", map.rows, map.cols, map.tile_h, map.tile_w);
    for class in 0..k {
        let f = class_fraction(&threshold(map, class, a.tau)?)?;
        println!("class {class}: fraction {f:.4} at tau {}", a.tau);
    }

    let mut requested = 0;
    let mut failures = Vec::new();
    let mut attempt = |path: &Option<PathBuf>, write: &dyn Fn(&Path) -> Result<(), Failure>| {
        if let Some(path) = path {
            requested += 1;
            match write(path) {
                Ok(()) => println!("wrote {}", path.display()),
                Err(Failure::Usage(m) | Failure::Runtime(m)) => failures.push(format!("{}: {m}", path.display())),
            }
        }
    };
    attempt(&a.scores, &|path| Ok(map.save_scores_csv(path)?));
    attempt(&a.map, &|path| Ok(save_image(&render_heatmap(map, a.display_class)?, path)?));
    attempt(&a.overlay, &|path| {
        let mask = threshold(map, a.target_class, a.tau)?;
        let out = overlay(&p.source, &mask, map.tile_h, map.tile_w, a.color, a.alpha)?;
        Ok(save_image(&out, path)?)
    });
    if failures.is_empty() {
        return Ok(());
    }
    for f in &failures {
        eprintln!("failed: {f}");
    }
    Err(Failure::Runtime(format!("{} of {requested} outputs not written", failures.len())))
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    if let Some(sweep) = &a.sweep {
        return eval_sweep(&a, sweep);
    }
    match (&a.model, &a.input, &a.truth) {
        (Some(model), Some(input), Some(truth)) => eval_truth(model, input, truth, a.tau, a.target_class),
        (_, Some(_), None) | (_, None, Some(_)) => Err(Failure::Usage("--input and --truth go together".into())),
        (Some(model), None, None) if !a.data.classes.is_empty() => eval_tiles(model, &a.data),
        (None, _, _) => Err(Failure::Usage("--model is required unless --sweep is given".into())),
        _ => Err(Failure::Usage("eval needs --class paths, --input with --truth, or --sweep".into())),
    }
}

/// Matches the tile channels to the model's input.
fn adapt_channels(ds: LabeledTileSet, channels: usize) -> Result<LabeledTileSet, Failure> {
    match (ds.channels(), channels) {
        (a, b) if a == b => Ok(ds),
        (3, 1) => Ok(ds.to_grayscale()),
        (1, 3) => {
            let mut out = LabeledTileSet::new(ds.tile_h(), ds.tile_w(), 3, ds.class_names().to_vec())?;
            for (tile, label) in ds.items() {
                out.push(tile.to_rgb(), *label)?;
            }
            Ok(out)
        }
        (a, b) => Err(Failure::Runtime(format!("{a}-channel tiles for a {b}-channel model"))),
    }
}

fn eval_tiles(model_path: &Path, data: &ClassArgs) -> Result<(), Failure> {
    let model = load_model(model_path)?;
    let ds = adapt_channels(load_tiles(data, None)?, model.arch().input_c)?;
    let acc = evaluate(&model, &ds)?;
    println!("accuracy {acc:.4} on {} tiles", ds.len());
    Ok(())
}

fn eval_truth(model: &Path, input: &Path, truth: &Path, tau: f64, target: usize) -> Result<(), Failure> {
    let (model, p) = predict_image(model, input)?;
    check_class(target, model.num_classes(), "target-class")?;
    let truth = TruthMask::load_csv(truth)?;
    let map = &p.map;
    if (truth.rows, truth.cols) != (map.rows, map.cols) {
        return Err(Failure::Runtime(format!(
            "truth mask is {}x{} tiles, prediction map is {}x{}",
            truth.rows, truth.cols, map.rows, map.cols
        )));
    }
    let mask = threshold(map, target, tau)?;
    let wrong = mask.bits().iter().zip(&truth.labels).filter(|(&bit, &label)| bit != (label == target)).count();
    let f_pred = class_fraction(&mask)?;
    let f_true = truth.fraction(target);
    println!("tile error {:.4} ({wrong} of {} tiles)", wrong as f64 / truth.labels.len() as f64, truth.labels.len());
    println!("predicted fraction {f_pred:.4}");
    println!("true fraction {f_true:.4}");
    println!("fraction error {:.4}", (f_pred - f_true).abs());
    Ok(())
}

struct SweepRow {
    setting: String,
    outcome: Result<(usize, usize, f64, f64), String>,
}

fn eval_sweep(a: &EvalArgs, sweep: &Sweep) -> Result<(), Failure> {
    let settings: Vec<(String, Option<usize>, usize)> = match sweep {
        Sweep::Tile(tiles) => {
            if let Some(dir) = a.data.classes.iter().find(|p| p.is_dir()) {
                return Err(Failure::Usage(format!(
                    "a tile sweep needs source images, {} is a directory",
                    dir.display()
                )));
            }
            tiles.iter().map(|&t| (format!("tile={t}"), Some(t), a.hyper.depth)).collect()
        }
        Sweep::Blocks(depths) => depths.iter().map(|&d| (format!("blocks={d}"), None, d)).collect(),
    };
    let cfg = train_config(&a.hyper);
    let mut rows = Vec::new();
    for (setting, tile, depth) in settings {
        let hyper = Hyper { depth, ..a.hyper.clone() };
        let started = Instant::now();
        let outcome = load_tiles(&a.data, tile).and_then(|ds| {
            let (train_set, val, model) = prepare(ds, &hyper)?;
            let (model, report) = train(model, &train_set, &val, &cfg)?;
            let acc = match report.validation_accuracy {
                Some(acc) => acc,
                None => evaluate(&model, &train_set)?,
            };
            Ok((train_set.len(), val.len(), acc, started.elapsed().as_secs_f64()))
        });
        let outcome = match outcome {
            Err(Failure::Usage(m)) => return Err(Failure::Usage(m)),
            Err(Failure::Runtime(m)) => Err(m),
            Ok(v) => Ok(v),
        };
        rows.push(SweepRow { setting, outcome });
    }

    println!("{:<12} {:>7} {:>7} {:>9} {:>9}", "setting", "train", "val", "val_acc", "seconds");
    let mut failed = 0;
    for row in &rows {
        match &row.outcome {
            Ok((n_train, n_val, acc, secs)) => {
                println!("{:<12} {n_train:>7} {n_val:>7} {acc:>9.4} {secs:>9.2}", row.setting)
            }
            Err(m) => {
                failed += 1;
                println!("{:<12} error: {m}", row.setting);
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {} settings failed", rows.len())));
    }
    Ok(())
}
