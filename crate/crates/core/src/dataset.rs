//! Labeled tile corpora and the synthetic fixtures used in place of real
//! photographs: a two-color pair, a porous/fibrous grayscale texture pair, and
//! tile-aligned mixtures of either pair with exact per-tile ground truth.

use std::f32::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image_io::{load_image, to_float, FloatImage};
use crate::tiling::{grid_dims, subdivide, TileGrid};

// Independent ChaCha streams so one seed drives every generator without the
// outputs sharing random draws.
const STREAM_COLOR: u64 = 1;
const STREAM_TEXTURE: u64 = 2;
const STREAM_MIXTURE: u64 = 3;
const STREAM_SPLIT: u64 = 4;

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tiles paired with class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTileSet {
    tile_h: usize,
    tile_w: usize,
    channels: usize,
    items: Vec<(FloatImage, usize)>,
    class_names: Vec<String>,
}

impl LabeledTileSet {
    pub fn new(
        tile_h: usize,
        tile_w: usize,
        channels: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::TooFewClasses(class_names.len()));
        }
        Ok(Self { tile_h, tile_w, channels, items: Vec::new(), class_names })
    }

    /// One class per grid, labelled in the order given.
    pub fn from_grids(grids: &[TileGrid], class_names: Vec<String>) -> Result<Self> {
        if grids.len() != class_names.len() {
            return Err(Error::InvalidParameter(format!(
                "{} grids for {} class names",
                grids.len(),
                class_names.len()
            )));
        }
        let first = grids.first().ok_or(Error::TooFewClasses(0))?;
        let mut set = Self::new(first.tile_h(), first.tile_w(), first.channels(), class_names)?;
        for (label, grid) in grids.iter().enumerate() {
            if grid.is_empty() {
                return Err(Error::EmptyClass(label));
            }
            for tile in grid.tiles() {
                set.push(tile.clone(), label)?;
            }
        }
        Ok(set)
    }

    pub fn push(&mut self, tile: FloatImage, label: usize) -> Result<()> {
        if label >= self.class_names.len() {
            return Err(Error::LabelOutOfRange { label, classes: self.class_names.len() });
        }
        if (tile.height(), tile.width(), tile.channels()) != (self.tile_h, self.tile_w, self.channels)
        {
            return Err(Error::DimensionMismatch(format!(
                "tile {}x{}x{} in a {}x{}x{} set",
                tile.height(),
                tile.width(),
                tile.channels(),
                self.tile_h,
                self.tile_w,
                self.channels
            )));
        }
        self.items.push((tile, label));
        Ok(())
    }

    pub fn tile_h(&self) -> usize {
        self.tile_h
    }

    pub fn tile_w(&self) -> usize {
        self.tile_w
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn items(&self) -> &[(FloatImage, usize)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, l)| *l).collect()
    }

    /// Items per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for (_, label) in &self.items {
            counts[*label] += 1;
        }
        counts
    }

    /// Copy with every tile converted to a single luminance channel.
    pub fn to_grayscale(&self) -> LabeledTileSet {
        LabeledTileSet {
            channels: 1,
            items: self
                .items
                .iter()
                .map(|(t, l)| (crate::image_io::to_grayscale(t), *l))
                .collect(),
            ..self.empty_like()
        }
    }

    fn empty_like(&self) -> LabeledTileSet {
        LabeledTileSet {
            tile_h: self.tile_h,
            tile_w: self.tile_w,
            channels: self.channels,
            items: Vec::new(),
            class_names: self.class_names.clone(),
        }
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Reads one class per directory. Items follow directory order, then file
/// names in lexicographic order.
pub fn build_dataset<P: AsRef<Path>>(class_dirs: &[P], class_names: &[String]) -> Result<LabeledTileSet> {
    if class_dirs.len() != class_names.len() {
        return Err(Error::InvalidParameter(format!(
            "{} directories for {} class names",
            class_dirs.len(),
            class_names.len()
        )));
    }
    if class_dirs.len() < 2 {
        return Err(Error::TooFewClasses(class_dirs.len()));
    }
    let mut set: Option<LabeledTileSet> = None;
    for (label, dir) in class_dirs.iter().enumerate() {
        let files = png_files(dir.as_ref())?;
        if files.is_empty() {
            return Err(Error::EmptyClass(label));
        }
        for file in files {
            let tile = to_float(&load_image(&file)?);
            let set = match &mut set {
                Some(s) => s,
                None => set.insert(LabeledTileSet::new(
                    tile.height(),
                    tile.width(),
                    tile.channels(),
                    class_names.to_vec(),
                )?),
            };
            set.push(tile, label).map_err(|e| match e {
                Error::DimensionMismatch(m) => {
                    Error::DimensionMismatch(format!("{}: {m}", file.display()))
                }
                other => other,
            })?;
        }
    }
    // Non-empty: at least two directories, each with a tile.
    Ok(set.expect("dataset populated"))
}

/// Tiles for one class: every PNG in a directory (already cut to size), or a
/// single source image subdivided at `tile` (height, width).
pub fn load_class_tiles(path: impl AsRef<Path>, tile: Option<(usize, usize)>) -> Result<Vec<FloatImage>> {
    let path = path.as_ref();
    if path.is_dir() {
        return png_files(path)?.iter().map(|f| Ok(to_float(&load_image(f)?))).collect();
    }
    let img = to_float(&load_image(path)?);
    let (th, tw) = tile.ok_or_else(|| {
        Error::InvalidParameter(format!("{} is an image; a tile size is needed to subdivide it", path.display()))
    })?;
    Ok(subdivide(&img, th, tw)?.into_tiles())
}

/// Stratified split: class `k` with `n_k` items sends
/// `floor(n_k * train_fraction)` items (at least one, at most `n_k - 1`) to
/// the training side. Each class is permuted by a seeded generator first.
pub fn split(
    ds: &LabeledTileSet,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledTileSet, LabeledTileSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, (_, label)) in ds.items.iter().enumerate() {
        by_class[*label].push(i);
    }
    if let Some((class, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < 2) {
        return Err(Error::ClassTooSmall { class, count: members.len() });
    }

    let mut rng = seeded(seed, STREAM_SPLIT);
    let mut train = ds.empty_like();
    let mut val = ds.empty_like();
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        // Nudge so that e.g. 0.29 * 100 is not floored to 28.
        let n_train = ((n as f64 * train_fraction + 1e-9).floor() as usize).clamp(1, n - 1);
        for (j, &i) in members.iter().enumerate() {
            let item = ds.items[i].clone();
            if j < n_train {
                train.items.push(item);
            } else {
                val.items.push(item);
            }
        }
    }
    Ok((train, val))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Color,
    Texture,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Color => "color",
            SynthKind::Texture => "texture",
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub height: usize,
    pub width: usize,
    pub mix_fraction: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidParameter(format!(
                "synthetic image size {}x{}",
                self.height, self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.mix_fraction) {
            return Err(Error::InvalidParameter(format!(
                "mix fraction {} outside [0, 1]",
                self.mix_fraction
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise sigma {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// Base color of the first class of the color pair.
pub const COLOR_A: [f32; 3] = [0.9, 0.9, 0.85];
/// Base color of the second class of the color pair.
pub const COLOR_B: [f32; 3] = [0.95, 0.8, 0.2];

fn add_noise(data: &mut [f32], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0f64, sigma).expect("finite sigma");
    for v in data {
        *v = (f64::from(*v) + normal.sample(rng)).clamp(0.0, 1.0) as f32;
    }
}

fn constant_with_noise(spec: &SynthSpec, color: &[f32], rng: &mut ChaCha8Rng) -> FloatImage {
    let mut data: Vec<f32> =
        color.iter().copied().cycle().take(spec.height * spec.width * color.len()).collect();
    add_noise(&mut data, spec.noise_sigma, rng);
    FloatImage::from_parts_unchecked(spec.height, spec.width, color.len(), data)
}

/// Two flat RGB images, `COLOR_A` and `COLOR_B`, with clamped Gaussian noise.
pub fn make_color_pair(spec: &SynthSpec) -> Result<(FloatImage, FloatImage)> {
    spec.validate()?;
    let mut rng = seeded(spec.seed, STREAM_COLOR);
    let a = constant_with_noise(spec, &COLOR_A, &mut rng);
    let b = constant_with_noise(spec, &COLOR_B, &mut rng);
    Ok((a, b))
}

const PORE_LATTICE: usize = 8;
const PORE_THRESHOLD: f32 = 0.38;
const PORE_LEVEL: f32 = 0.2;
const POROUS_GROUND: f32 = 0.8;
const FIBER_PERIOD: f32 = 8.0;
const FIBER_LEVEL: f32 = 0.85;
const FIBROUS_GROUND: f32 = 0.15;

fn smoothstep(edge0: f32, edge1: f32, x: f32) -> f32 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Value noise: uniform samples on a coarse lattice, smoothly interpolated.
fn value_noise(height: usize, width: usize, lattice: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let gh = height / lattice + 2;
    let gw = width / lattice + 2;
    let grid: Vec<f32> = (0..gh * gw).map(|_| rng.random::<f32>()).collect();
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let fy = y as f32 / lattice as f32;
        let (y0, ty) = (fy as usize, smoothstep(0.0, 1.0, fy.fract()));
        for x in 0..width {
            let fx = x as f32 / lattice as f32;
            let (x0, tx) = (fx as usize, smoothstep(0.0, 1.0, fx.fract()));
            let g = |r: usize, c: usize| grid[r * gw + c];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Grayscale texture pair. The porous image is thresholded value noise (dark
/// pores on a light ground); the fibrous image is bright stripes of period 8
/// px at a random orientation on a dark ground.
pub fn make_texture_pair(spec: &SynthSpec) -> Result<(FloatImage, FloatImage)> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = seeded(spec.seed, STREAM_TEXTURE);

    let noise = value_noise(h, w, PORE_LATTICE, &mut rng);
    let mut porous: Vec<f32> = noise
        .iter()
        .map(|&v| if v < PORE_THRESHOLD { PORE_LEVEL } else { POROUS_GROUND })
        .collect();

    let angle = rng.random::<f32>() * PI;
    let phase = rng.random::<f32>() * FIBER_PERIOD;
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut fibrous = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let d = x as f32 * dx + y as f32 * dy + phase;
            let wave = (2.0 * PI * d / FIBER_PERIOD).cos();
            fibrous.push(FIBROUS_GROUND + (FIBER_LEVEL - FIBROUS_GROUND) * smoothstep(0.1, 0.5, wave));
        }
    }

    add_noise(&mut porous, spec.noise_sigma, &mut rng);
    add_noise(&mut fibrous, spec.noise_sigma, &mut rng);
    Ok((
        FloatImage::from_parts_unchecked(h, w, 1, porous),
        FloatImage::from_parts_unchecked(h, w, 1, fibrous),
    ))
}

/// Per-tile ground-truth labels in raster order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthMask {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<usize>,
}

impl TruthMask {
    pub fn label(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.cols + col]
    }

    /// Fraction of cells carrying `class`.
    pub fn fraction(&self, class: usize) -> f64 {
        let hits = self.labels.iter().filter(|&&l| l == class).count();
        hits as f64 / self.labels.len() as f64
    }

    /// `row,col,label` CSV with header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,label")?;
        for (i, label) in self.labels.iter().enumerate() {
            writeln!(out, "{},{},{}", i / self.cols, i % self.cols, label)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<TruthMask> {
        let bad = |line: usize, msg: &str| Error::InvalidParameter(format!("truth CSV line {line}: {msg}"));
        let mut cells = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<truth csv>", e))?;
            let line = line.trim();
            if line.is_empty() || (n == 0 && line.starts_with("row")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(n + 1, "expected row,col,label"));
            }
            let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(n + 1, "not an integer"));
            cells.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
        }
        if cells.is_empty() {
            return Err(Error::InvalidParameter("truth CSV has no cells".into()));
        }
        let rows = cells.iter().map(|c| c.0).max().unwrap() + 1;
        let cols = cells.iter().map(|c| c.1).max().unwrap() + 1;
        if cells.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "truth CSV has {} cells for a {rows}x{cols} grid",
                cells.len()
            )));
        }
        let mut labels = vec![usize::MAX; rows * cols];
        for (r, c, l) in cells {
            labels[r * cols + c] = l;
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::InvalidParameter("truth CSV repeats a cell".into()));
        }
        Ok(TruthMask { rows, cols, labels })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<TruthMask> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub image: FloatImage,
    pub truth: TruthMask,
    /// Fraction of cells drawn from the second image.
    pub realized_fraction: f64,
}

/// Tile-aligned mixture: each grid cell independently takes its block from
/// `img_b` with probability `spec.mix_fraction`, otherwise from `img_a`. The
/// output covers the whole-tile region only; truth label 1 marks `img_b`.
pub fn make_mixture(
    spec: &SynthSpec,
    img_a: &FloatImage,
    img_b: &FloatImage,
    tile: usize,
) -> Result<Mixture> {
    spec.validate()?;
    let dims_a = (img_a.height(), img_a.width(), img_a.channels());
    let dims_b = (img_b.height(), img_b.width(), img_b.channels());
    if dims_a != dims_b {
        return Err(Error::DimensionMismatch(format!(
            "mixture sources {dims_a:?} and {dims_b:?} differ"
        )));
    }
    let (rows, cols) = grid_dims(img_a.height(), img_a.width(), tile, tile)?;
    let mut rng = seeded(spec.seed, STREAM_MIXTURE);
    let labels: Vec<usize> =
        (0..rows * cols).map(|_| usize::from(rng.random::<f64>() < spec.mix_fraction)).collect();

    let (height, width, ch) = (rows * tile, cols * tile, img_a.channels());
    let mut data = Vec::with_capacity(height * width * ch);
    for y in 0..height {
        for x in 0..width {
            let src = if labels[(y / tile) * cols + x / tile] == 1 { img_b } else { img_a };
            data.extend_from_slice(src.pixel(y, x));
        }
    }
    let truth = TruthMask { rows, cols, labels };
    let realized_fraction = truth.fraction(1);
    Ok(Mixture {
        image: FloatImage::from_parts_unchecked(height, width, ch, data),
        truth,
        realized_fraction,
    })
}
