use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::SplitMix64;
use crate::sdf::{coverage, disc, pixel_center, quad_bezier, Point};

pub const STROKE_PARAMS: usize = 8;
pub const BLOB_PARAMS: usize = 4;
pub const DEFAULT_STROKES: usize = 6;
pub const DEFAULT_BLOBS: usize = 3;

/// Boxes for one stroke: three control points, thickness, intensity.
const STROKE_BOX: [(f64, f64); STROKE_PARAMS] = [
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.01, 0.1),
    (0.0, 1.0),
];
/// Boxes for one blob: centre, radius, intensity.
const BLOB_BOX: [(f64, f64); BLOB_PARAMS] = [(0.0, 1.0), (0.0, 1.0), (0.02, 0.3), (0.0, 1.0)];

/// A drawing made of quadratic strokes and discs. Parameters are stored
/// flat: `8·Ns` stroke values followed by `4·Nb` blob values, each clamped
/// to its box. Coordinates and lengths are fractions of the image side.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawingGenome {
    strokes: usize,
    blobs: usize,
    params: Vec<f64>,
}

impl DrawingGenome {
    /// Build from flat parameters; values outside their boxes are rejected.
    pub fn new(strokes: usize, blobs: usize, params: Vec<f64>) -> Result<Self> {
        let g = Self { strokes, blobs, params };
        if g.params.len() != STROKE_PARAMS * strokes + BLOB_PARAMS * blobs {
            return Err(Error::Shape(format!(
                "{} parameters for {strokes} strokes and {blobs} blobs",
                g.params.len()
            )));
        }
        for (i, &v) in g.params.iter().enumerate() {
            let (lo, hi) = g.bounds(i);
            if !(lo..=hi).contains(&v) {
                return Err(Error::invalid(format!("parameter {i} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(g)
    }

    /// Uniform draw inside every box.
    pub fn random(strokes: usize, blobs: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed).split("genome");
        let mut g = Self {
            strokes,
            blobs,
            params: vec![0.0; STROKE_PARAMS * strokes + BLOB_PARAMS * blobs],
        };
        for i in 0..g.params.len() {
            let (lo, hi) = g.bounds(i);
            g.params[i] = rng.uniform(lo, hi);
        }
        g
    }

    pub fn strokes(&self) -> usize {
        self.strokes
    }

    pub fn blobs(&self) -> usize {
        self.blobs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Box of flat parameter `i`.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        let split = STROKE_PARAMS * self.strokes;
        if i < split {
            STROKE_BOX[i % STROKE_PARAMS]
        } else {
            BLOB_BOX[(i - split) % BLOB_PARAMS]
        }
    }

    /// Each parameter independently, with probability `rate`, gets Gaussian
    /// noise of standard deviation `sigma` times its box width, then is
    /// clamped back into the box.
    pub fn mutate(&self, sigma: f64, rate: f64, rng: &mut SplitMix64) -> Self {
        let mut child = self.clone();
        for i in 0..child.params.len() {
            if rng.bernoulli(rate) {
                let (lo, hi) = child.bounds(i);
                let v = child.params[i] + sigma * (hi - lo) * rng.normal();
                child.params[i] = v.clamp(lo, hi);
            }
        }
        child
    }

    /// Every intensity set to `value`, clamped to [0, 1].
    pub fn with_intensity(&self, value: f64) -> Self {
        let mut g = self.clone();
        let split = STROKE_PARAMS * self.strokes;
        for s in 0..self.strokes {
            g.params[s * STROKE_PARAMS + 7] = value.clamp(0.0, 1.0);
        }
        for b in 0..self.blobs {
            g.params[split + b * BLOB_PARAMS + 3] = value.clamp(0.0, 1.0);
        }
        g
    }

    /// White primitives on black, `[1, S, S]`. Each primitive contributes
    /// `intensity · coverage(signed distance)`; overlaps take the maximum.
    pub fn rasterize(&self, size: usize) -> Tensor<f32> {
        let s = size as f64;
        let mut img = vec![0.0f64; size * size];
        let mut paint = |bbox: [f64; 4], intensity: f64, sdf: &dyn Fn(Point) -> f64| {
            if intensity <= 0.0 {
                return;
            }
            // Pixels whose centres lie more than half a pixel outside the
            // shape have zero coverage, so only the padded box is visited.
            let x0 = (bbox[0] - 1.0).floor().max(0.0) as usize;
            let y0 = (bbox[1] - 1.0).floor().max(0.0) as usize;
            let x1 = ((bbox[2] + 1.0).ceil().max(0.0) as usize).min(size);
            let y1 = ((bbox[3] + 1.0).ceil().max(0.0) as usize).min(size);
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = intensity * coverage(sdf(pixel_center(x, y)));
                    let px = &mut img[y * size + x];
                    if v > *px {
                        *px = v;
                    }
                }
            }
        };
        for st in self.params[..STROKE_PARAMS * self.strokes].chunks_exact(STROKE_PARAMS) {
            let pts = [
                Point::new(st[0] * s, st[1] * s),
                Point::new(st[2] * s, st[3] * s),
                Point::new(st[4] * s, st[5] * s),
            ];
            let half = st[6] * s / 2.0;
            // The curve stays inside the hull of its control points.
            let bbox = [
                pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - half,
                pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - half,
                pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + half,
                pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + half,
            ];
            paint(bbox, st[7], &|p| quad_bezier(p, pts[0], pts[1], pts[2]) - half);
        }
        for b in self.params[STROKE_PARAMS * self.strokes..].chunks_exact(BLOB_PARAMS) {
            let c = Point::new(b[0] * s, b[1] * s);
            let r = b[2] * s;
            paint([c.x - r, c.y - r, c.x + r, c.y + r], b[3], &|p| disc(p, c, r));
        }
        Tensor::new(vec![1, size, size], img.into_iter().map(|v| v as f32).collect())
            .expect("raster dims match")
    }

    /// Plain-text `key=value` lines: counts, then one line per primitive.
    pub fn to_text(&self) -> String {
        let mut out = format!("strokes={}\nblobs={}\n", self.strokes, self.blobs);
        let split = STROKE_PARAMS * self.strokes;
        let line = |out: &mut String, key: String, vals: &[f64]| {
            let vals: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{key}={}", vals.join(",")).expect("writing to a String");
        };
        for (i, st) in self.params[..split].chunks_exact(STROKE_PARAMS).enumerate() {
            line(&mut out, format!("stroke{i}"), st);
        }
        for (i, b) in self.params[split..].chunks_exact(BLOB_PARAMS).enumerate() {
            line(&mut out, format!("blob{i}"), b);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format { format: "genome", offset: 0, detail };
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line without `=`: {line}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let count = |key: &str| -> Result<usize> {
            fields
                .get(key)
                .ok_or_else(|| bad(format!("missing `{key}`")))?
                .parse()
                .map_err(|_| bad(format!("`{key}` is not a count")))
        };
        let (strokes, blobs) = (count("strokes")?, count("blobs")?);
        let mut params = Vec::new();
        let keys = (0..strokes).map(|i| format!("stroke{i}")).chain((0..blobs).map(|i| format!("blob{i}")));
        for key in keys {
            let raw = fields.get(&key).ok_or_else(|| bad(format!("missing `{key}`")))?;
            for v in raw.split(',') {
                params.push(v.trim().parse().map_err(|_| bad(format!("`{key}` holds a non-number")))?);
            }
        }
        Self::new(strokes, blobs, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
