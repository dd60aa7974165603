//! Browser front end. The page drives three operations: synthesize a
//! tile-aligned mixture, train a model on separately generated source images
//! of the same two classes, and render the prediction as a heatmap or an
//! overlay at a chosen threshold. Images are handed to JavaScript as RGBA
//! bytes for `ImageData`.

use tilecnn::dataset::{make_color_pair, make_mixture, make_texture_pair, LabeledTileSet, Mixture, SynthKind, SynthSpec};
use tilecnn::image_io::{FloatImage, Image};
use tilecnn::mapping::{class_fraction, overlay, predict_tiles, render_heatmap, threshold, PredictionMap};
use tilecnn::nn::{init_model, train, ArchSpec, Model, TrainConfig};
use tilecnn::tiling::subdivide;
use wasm_bindgen::prelude::*;

const MIXTURE_SIZE: usize = 200;
const OVERLAY_COLOR: [u8; 3] = [255, 0, 0];
// Training data: 4 source pairs, each 5x5 tiles, so 100 tiles per class.
const TRAIN_PAIRS: u64 = 4;
const TRAIN_PAIR_TILES: usize = 5;
// Keeps training seeds clear of the small seeds the page uses for mixtures.
const TRAIN_SEED_OFFSET: u64 = 1_000_000;

fn err(e: tilecnn::Error) -> String {
    e.to_string()
}

fn parse_kind(kind: &str) -> Result<SynthKind, String> {
    match kind {
        "color" => Ok(SynthKind::Color),
        "texture" => Ok(SynthKind::Texture),
        other => Err(format!("unknown fixture kind {other:?}")),
    }
}

/// Tile size per fixture: 20 for the color pair, 10 for the textures.
fn tile_for(kind: SynthKind) -> usize {
    match kind {
        SynthKind::Color => 20,
        SynthKind::Texture => 10,
    }
}

fn pair(spec: &SynthSpec) -> tilecnn::Result<(FloatImage, FloatImage)> {
    match spec.kind {
        SynthKind::Color => make_color_pair(spec),
        SynthKind::Texture => make_texture_pair(spec),
    }
}

#[wasm_bindgen]
pub struct Demo {
    kind: SynthKind,
    noise: f64,
    mixture: Mixture,
    source: Image,
    model: Option<Model>,
    map: Option<PredictionMap>,
}

#[wasm_bindgen]
impl Demo {
    /// Starts with a half-and-half color mixture and no model.
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, String> {
        let (kind, noise) = (SynthKind::Color, 0.05);
        let mixture = Self::mix(kind, 0.5, noise, 1)?;
        let source = mixture.image.to_u8();
        Ok(Demo { kind, noise, mixture, source, model: None, map: None })
    }

    fn mix(kind: SynthKind, fraction: f64, noise: f64, seed: u64) -> Result<Mixture, String> {
        let spec = SynthSpec { kind, height: MIXTURE_SIZE, width: MIXTURE_SIZE, mix_fraction: fraction, noise_sigma: noise, seed };
        let (a, b) = pair(&spec).map_err(err)?;
        make_mixture(&spec, &a, &b, tile_for(kind)).map_err(err)
    }

    /// Replaces the mixture. Returns the realized share of second-class tiles.
    /// Changing the fixture kind discards the trained model.
    pub fn generate(&mut self, kind: &str, fraction: f64, noise: f64, seed: u32) -> Result<f64, String> {
        let kind = parse_kind(kind)?;
        self.mixture = Self::mix(kind, fraction, noise, u64::from(seed))?;
        self.source = self.mixture.image.to_u8();
        if kind != self.kind {
            self.model = None;
        }
        self.kind = kind;
        self.noise = noise;
        self.predict()?;
        Ok(self.mixture.realized_fraction)
    }

    /// Trains on fresh source pairs of the current kind (seeds disjoint from
    /// any mixture) and predicts the current mixture. Several small pairs are
    /// used because each texture seed fixes a single fiber orientation.
    /// Returns the final epoch's training accuracy.
    pub fn train(&mut self, epochs: u32, seed: u32) -> Result<f64, String> {
        let tile = tile_for(self.kind);
        let channels = match self.kind {
            SynthKind::Color => 3,
            SynthKind::Texture => 1,
        };
        let names = vec!["first".to_string(), "second".to_string()];
        let mut ds = LabeledTileSet::new(tile, tile, channels, names.clone()).map_err(err)?;
        for k in 0..TRAIN_PAIRS {
            let spec = SynthSpec {
                kind: self.kind,
                height: TRAIN_PAIR_TILES * tile,
                width: TRAIN_PAIR_TILES * tile,
                mix_fraction: 0.0,
                noise_sigma: self.noise,
                seed: TRAIN_SEED_OFFSET + TRAIN_PAIRS * u64::from(seed) + k,
            };
            let (a, b) = pair(&spec).map_err(err)?;
            for (img, label) in [(a, 0), (b, 1)] {
                for t in subdivide(&img, tile, tile).map_err(err)?.into_tiles() {
                    ds.push(t, label).map_err(err)?;
                }
            }
        }
        let empty = LabeledTileSet::new(tile, tile, channels, names).map_err(err)?;
        let model = init_model(ArchSpec::default_for(tile, tile, channels, 2), u64::from(seed)).map_err(err)?;
        let cfg = TrainConfig { epochs: epochs.max(1) as usize, seed: u64::from(seed), ..TrainConfig::default() };
        let (model, report) = train(model, &ds, &empty, &cfg).map_err(err)?;
        self.model = Some(model);
        self.predict()?;
        Ok(report.epochs.last().map_or(0.0, |e| e.accuracy))
    }

    fn predict(&mut self) -> Result<(), String> {
        self.map = match &self.model {
            Some(model) => {
                let tile = tile_for(self.kind);
                let grid = subdivide(&self.mixture.image, tile, tile).map_err(err)?;
                Some(predict_tiles(model, &grid).map_err(err)?)
            }
            None => None,
        };
        Ok(())
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }

    pub fn width(&self) -> usize {
        self.source.width()
    }

    pub fn height(&self) -> usize {
        self.source.height()
    }

    /// Share of mixture tiles drawn from the second class.
    pub fn true_fraction(&self) -> f64 {
        self.mixture.realized_fraction
    }

    /// Share of tiles whose second-class probability is at least `tau`.
    pub fn predicted_fraction(&self, tau: f64) -> Result<f64, String> {
        let map = self.map.as_ref().ok_or("no model trained yet")?;
        class_fraction(&threshold(map, 1, tau).map_err(err)?).map_err(err)
    }

    /// The mixture itself.
    pub fn source_rgba(&self) -> Vec<u8> {
        self.source.to_rgba()
    }

    /// Second-class probability per tile, dark blue (0) to yellow (1).
    pub fn heatmap_rgba(&self) -> Result<Vec<u8>, String> {
        let map = self.map.as_ref().ok_or("no model trained yet")?;
        Ok(render_heatmap(map, 1).map_err(err)?.to_rgba())
    }

    /// The mixture with tiles at or above `tau` tinted red.
    pub fn overlay_rgba(&self, tau: f64, alpha: f64) -> Result<Vec<u8>, String> {
        let map = self.map.as_ref().ok_or("no model trained yet")?;
        let mask = threshold(map, 1, tau).map_err(err)?;
        let out = overlay(&self.source, &mask, map.tile_h, map.tile_w, OVERLAY_COLOR, alpha).map_err(err)?;
        Ok(out.to_rgba())
    }
}
