//! Per-tile prediction over a whole image and the three renderings built from
//! it: the score table, the spatial heatmap, and the thresholded overlay.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image_io::{to_grayscale, FloatImage, Image};
use crate::nn::{argmax, Model};
use crate::tiling::TileGrid;

/// Class-probability vectors laid out on the tile grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMap {
    pub rows: usize,
    pub cols: usize,
    pub tile_h: usize,
    pub tile_w: usize,
    pub num_classes: usize,
    probs: Vec<f32>,
}

impl PredictionMap {
    /// Builds a map from a flat `rows*cols x num_classes` probability table.
    pub fn new(
        rows: usize,
        cols: usize,
        tile_h: usize,
        tile_w: usize,
        num_classes: usize,
        probs: Vec<f32>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || num_classes == 0 || probs.len() != rows * cols * num_classes {
            return Err(Error::GeometryMismatch(format!(
                "{} probabilities for a {rows}x{cols} grid of {num_classes} classes",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("probability outside [0, 1]".into()));
        }
        Ok(Self { rows, cols, tile_h, tile_w, num_classes, probs })
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        self.tile_probs(row * self.cols + col)
    }

    /// Probability vector of the `i`-th tile in raster order.
    pub fn tile_probs(&self, i: usize) -> &[f32] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The score vector: one probability row per tile in raster order.
    pub fn vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.probs.chunks_exact(self.num_classes)
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.num_classes {
            return Err(Error::ClassOutOfRange { class, classes: self.num_classes });
        }
        Ok(())
    }

    /// Scores table: `row,col,p_0,...,p_{K-1},argmax`, six decimals.
    pub fn write_scores_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("row,col");
        for k in 0..self.num_classes {
            header.push_str(&format!(",p_{k}"));
        }
        writeln!(out, "{header},argmax")?;
        for (i, p) in self.vectors().enumerate() {
            write!(out, "{},{}", i / self.cols, i % self.cols)?;
            for v in p {
                write!(out, ",{v:.6}")?;
            }
            writeln!(out, ",{}", argmax(p))?;
        }
        Ok(())
    }

    pub fn save_scores_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_scores_csv(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs the model over every tile. Row `i` of the returned map is tile `i`
/// of the grid's raster order.
pub fn predict_tiles(model: &Model, grid: &TileGrid) -> Result<PredictionMap> {
    let a = model.arch();
    if (grid.tile_h(), grid.tile_w(), grid.channels()) != (a.input_h, a.input_w, a.input_c) {
        return Err(Error::DimensionMismatch(format!(
            "tiles {}x{}x{}, model expects {}x{}x{}",
            grid.tile_h(),
            grid.tile_w(),
            grid.channels(),
            a.input_h,
            a.input_w,
            a.input_c
        )));
    }
    let probs = model.predict(grid.tiles())?;
    // Guard the [0, 1] invariant against float round-off in softmax.
    let probs = probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
    PredictionMap::new(grid.rows(), grid.cols(), grid.tile_h(), grid.tile_w(), a.num_classes, probs)
}

/// How an input image was adapted to a model's channel count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelAdjust {
    Unchanged,
    /// RGB reduced to luminance for a grayscale model.
    ToGrayscale,
    /// Gray replicated into three channels for an RGB model.
    ToRgb,
}

/// Converts `img` to `channels` (1 or 3) for prediction.
pub fn match_channels(img: &FloatImage, channels: usize) -> Result<(FloatImage, ChannelAdjust)> {
    match (img.channels(), channels) {
        (a, b) if a == b => Ok((img.clone(), ChannelAdjust::Unchanged)),
        (3, 1) => Ok((to_grayscale(img), ChannelAdjust::ToGrayscale)),
        (1, 3) => Ok((img.to_rgb(), ChannelAdjust::ToRgb)),
        (a, b) => Err(Error::DimensionMismatch(format!("{a}-channel image for a {b}-channel model"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub rows: usize,
    pub cols: usize,
    pub target_class: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize, target_class: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::GeometryMismatch(format!(
                "{} bits for a {rows}x{cols} mask",
                bits.len()
            )));
        }
        Ok(Self { rows, cols, target_class, bits })
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Marks cells whose `target_class` probability is at least `tau`.
pub fn threshold(map: &PredictionMap, target_class: usize, tau: f64) -> Result<BinaryMask> {
    map.check_class(target_class)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("threshold {tau} outside [0, 1]")));
    }
    let bits = map.vectors().map(|p| f64::from(p[target_class]) >= tau).collect();
    BinaryMask::new(map.rows, map.cols, target_class, bits)
}

/// Share of set cells.
pub fn class_fraction(mask: &BinaryMask) -> Result<f64> {
    if mask.bits.is_empty() {
        return Err(Error::InvalidParameter("empty mask".into()));
    }
    Ok(mask.count() as f64 / mask.bits.len() as f64)
}

pub const HEAT_LOW: [u8; 3] = [0, 0, 128];
pub const HEAT_HIGH: [u8; 3] = [255, 255, 0];

/// Linear blend between the two palette endpoints, rounding half away from
/// zero.
pub fn heat_color(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let mut out = [0u8; 3];
    for (o, (&lo, &hi)) in out.iter_mut().zip(HEAT_LOW.iter().zip(&HEAT_HIGH)) {
        let (lo, hi) = (f64::from(lo), f64::from(hi));
        *o = (lo + (hi - lo) * v).round() as u8;
    }
    out
}

/// One `tile_h x tile_w` block per cell, colored by the `display_class`
/// probability from dark blue (0) to yellow (1).
pub fn render_heatmap(map: &PredictionMap, display_class: usize) -> Result<Image> {
    map.check_class(display_class)?;
    let (height, width) = (map.rows * map.tile_h, map.cols * map.tile_w);
    let mut data = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            let p = map.cell(y / map.tile_h, x / map.tile_w)[display_class];
            data.extend_from_slice(&heat_color(f64::from(p)));
        }
    }
    Image::new(height, width, 3, data)
}

/// Alpha-blends `color` over every pixel of each masked tile. Gray sources are
/// promoted to RGB; pixels outside masked tiles are copied unchanged.
pub fn overlay(
    src: &Image,
    mask: &BinaryMask,
    tile_h: usize,
    tile_w: usize,
    color: [u8; 3],
    alpha: f64,
) -> Result<Image> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1]")));
    }
    if mask.rows * tile_h > src.height() || mask.cols * tile_w > src.width() {
        return Err(Error::GeometryMismatch(format!(
            "{}x{} mask of {tile_h}x{tile_w} tiles exceeds {}x{} image",
            mask.rows,
            mask.cols,
            src.height(),
            src.width()
        )));
    }
    let mut out = src.to_rgb();
    for r in 0..mask.rows {
        for c in 0..mask.cols {
            if !mask.get(r, c) {
                continue;
            }
            for y in r * tile_h..(r + 1) * tile_h {
                for x in c * tile_w..(c + 1) * tile_w {
                    for (v, &m) in out.pixel_mut(y, x).iter_mut().zip(&color) {
                        let blended = alpha * f64::from(m) + (1.0 - alpha) * f64::from(*v);
                        *v = blended.round() as u8;
                    }
                }
            }
        }
    }
    Ok(out)
}
