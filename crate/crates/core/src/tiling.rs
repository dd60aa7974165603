//! Raster-scan subdivision of an image into a grid of equal, non-overlapping
//! tiles. Remainder rows and columns that do not fill a whole tile are dropped.
//!
//! Tiles are flattened row-major: index `i` is grid cell
//! `(i / cols, i % cols)`. Prediction maps are reshaped with the same rule.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image_io::{save_image, FloatImage};

/// Number of whole tiles that fit along each axis.
pub fn grid_dims(
    source_h: usize,
    source_w: usize,
    tile_h: usize,
    tile_w: usize,
) -> Result<(usize, usize)> {
    if tile_h == 0 || tile_w == 0 {
        return Err(Error::InvalidTileSize(tile_h, tile_w));
    }
    if tile_h > source_h || tile_w > source_w {
        return Err(Error::TileTooLarge { tile_h, tile_w, height: source_h, width: source_w });
    }
    Ok((source_h / tile_h, source_w / tile_w))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileGrid {
    tile_h: usize,
    tile_w: usize,
    rows: usize,
    cols: usize,
    channels: usize,
    tiles: Vec<FloatImage>,
}

impl TileGrid {
    pub fn tile_h(&self) -> usize {
        self.tile_h
    }

    pub fn tile_w(&self) -> usize {
        self.tile_w
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn tiles(&self) -> &[FloatImage] {
        &self.tiles
    }

    pub fn into_tiles(self) -> Vec<FloatImage> {
        self.tiles
    }

    pub fn tile(&self, row: usize, col: usize) -> &FloatImage {
        &self.tiles[row * self.cols + col]
    }

    /// Grid cell of a flattened tile index.
    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }
}

pub fn subdivide(img: &FloatImage, tile_h: usize, tile_w: usize) -> Result<TileGrid> {
    let (rows, cols) = grid_dims(img.height(), img.width(), tile_h, tile_w)?;
    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            tiles.push(img.crop(r * tile_h, c * tile_w, tile_h, tile_w)?);
        }
    }
    Ok(TileGrid { tile_h, tile_w, rows, cols, channels: img.channels(), tiles })
}

/// Stitches tiles back together into a `(rows*tile_h) x (cols*tile_w)` image.
pub fn reassemble(grid: &TileGrid) -> FloatImage {
    let (th, tw, ch) = (grid.tile_h, grid.tile_w, grid.channels);
    let width = grid.cols * tw;
    let height = grid.rows * th;
    let mut data = vec![0.0f32; height * width * ch];
    for (i, tile) in grid.tiles.iter().enumerate() {
        let (r, c) = grid.position(i);
        for y in 0..th {
            let dst = ((r * th + y) * width + c * tw) * ch;
            let src = y * tw * ch;
            data[dst..dst + tw * ch].copy_from_slice(&tile.data()[src..src + tw * ch]);
        }
    }
    FloatImage::from_parts_unchecked(height, width, ch, data)
}

/// File name of the tile at a grid cell.
pub fn tile_file_name(row: usize, col: usize) -> String {
    format!("r{row}_c{col}.png")
}

/// Writes every tile as `dir/r{row}_c{col}.png`, creating `dir` if needed.
/// A failure part-way through reports how many files were written.
pub fn export_tiles(grid: &TileGrid, dir: impl AsRef<Path>) -> Result<usize> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let total = grid.len();
    for (i, tile) in grid.tiles.iter().enumerate() {
        let (r, c) = grid.position(i);
        if let Err(e) = save_image(&tile.to_u8(), dir.join(tile_file_name(r, c))) {
            return Err(Error::PartialExport { written: i, total, source: Box::new(e) });
        }
    }
    Ok(total)
}
