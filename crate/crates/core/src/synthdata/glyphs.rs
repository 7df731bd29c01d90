use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::SplitMix64;
use crate::sdf::{self, Point};

/// The eight procedurally drawn glyph shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GlyphClass {
    Circle,
    Ring,
    Square,
    Triangle,
    Cross,
    Bar,
    DotGrid,
    Chevron,
}

impl GlyphClass {
    pub const ALL: [GlyphClass; 8] = [
        GlyphClass::Circle,
        GlyphClass::Ring,
        GlyphClass::Square,
        GlyphClass::Triangle,
        GlyphClass::Cross,
        GlyphClass::Bar,
        GlyphClass::DotGrid,
        GlyphClass::Chevron,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GlyphClass::Circle => "circle",
            GlyphClass::Ring => "ring",
            GlyphClass::Square => "square",
            GlyphClass::Triangle => "triangle",
            GlyphClass::Cross => "cross",
            GlyphClass::Bar => "bar",
            GlyphClass::DotGrid => "dot-grid",
            GlyphClass::Chevron => "chevron",
        }
    }

    fn rotates(self) -> bool {
        matches!(
            self,
            GlyphClass::Triangle | GlyphClass::Cross | GlyphClass::Bar | GlyphClass::Chevron
        )
    }
}

impl fmt::Display for GlyphClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GlyphClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GlyphClass::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Parse a comma-separated class list such as `circle,square`.
pub fn parse_classes(list: &str) -> Result<Vec<GlyphClass>> {
    list.split(',').map(str::parse).collect()
}

/// Grayscale glyph images `[1, S, S]` with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    pub images: Vec<Tensor<f32>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub seed: u64,
}

impl LabeledImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    /// Images whose label is `class`.
    pub fn of_class(&self, class: usize) -> impl Iterator<Item = &Tensor<f32>> {
        self.images
            .iter()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == class)
            .map(|(img, _)| img)
    }
}

/// Random per-sample drawing parameters.
struct Pose {
    center: Point,
    scale: f64,
    angle: f64,
    stroke: f64,
    noise: f64,
}

fn draw(class: GlyphClass, size: usize, pose: &Pose, rng: &mut SplitMix64) -> Tensor<f32> {
    let s = size as f64;
    let c = pose.center;
    let k = pose.scale;
    let half_stroke = pose.stroke / 2.0;
    let rot = |p: Point| p.rotate_about(c, pose.angle);
    let at = |dx: f64, dy: f64| rot(Point::new(c.x + dx * s * k, c.y + dy * s * k));

    let distance: Box<dyn Fn(Point) -> f64> = match class {
        GlyphClass::Circle => Box::new(move |p| sdf::disc(p, c, 0.24 * s * k)),
        GlyphClass::Ring => Box::new(move |p| sdf::ring(p, c, 0.26 * s * k, half_stroke)),
        GlyphClass::Square => Box::new(move |p| sdf::square(p, c, 0.21 * s * k)),
        GlyphClass::Triangle => {
            let r = 0.3;
            let v = [0.0f64, 1.0, 2.0].map(|i| {
                let a = -std::f64::consts::FRAC_PI_2 + i * std::f64::consts::TAU / 3.0;
                at(r * a.cos(), r * a.sin())
            });
            Box::new(move |p| sdf::triangle(p, v))
        }
        GlyphClass::Cross => {
            let (a, b) = (at(-0.28, 0.0), at(0.28, 0.0));
            let (d, e) = (at(0.0, -0.28), at(0.0, 0.28));
            Box::new(move |p| sdf::segment(p, a, b).min(sdf::segment(p, d, e)) - half_stroke)
        }
        GlyphClass::Bar => {
            let (a, b) = (at(-0.32, 0.0), at(0.32, 0.0));
            Box::new(move |p| sdf::segment(p, a, b) - 1.5 * half_stroke)
        }
        GlyphClass::DotGrid => {
            let dots: Vec<Point> = (-1..=1)
                .flat_map(|i| (-1..=1).map(move |j| (i, j)))
                .map(|(i, j)| at(0.22 * f64::from(i), 0.22 * f64::from(j)))
                .collect();
            let r = 0.06 * s * k;
            Box::new(move |p| {
                dots.iter()
                    .map(|&d| sdf::disc(p, d, r))
                    .fold(f64::INFINITY, f64::min)
            })
        }
        GlyphClass::Chevron => {
            let (a, apex, b) = (at(-0.28, 0.18), at(0.0, -0.18), at(0.28, 0.18));
            Box::new(move |p| sdf::segment(p, a, apex).min(sdf::segment(p, apex, b)) - half_stroke)
        }
    };

    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let v = sdf::coverage(distance(sdf::pixel_center(x, y)));
            let noisy = v + pose.noise * rng.normal();
            data.push(noisy.clamp(0.0, 1.0) as f32);
        }
    }
    Tensor::new(vec![1, size, size], data).expect("glyph dims")
}

fn sample_pose(class: GlyphClass, size: usize, rng: &mut SplitMix64) -> Pose {
    let s = size as f64;
    let jitter = 0.15 * s;
    Pose {
        center: Point::new(
            s / 2.0 + rng.uniform(-jitter, jitter),
            s / 2.0 + rng.uniform(-jitter, jitter),
        ),
        scale: rng.uniform(0.75, 1.25),
        angle: if class.rotates() {
            rng.uniform(0.0, std::f64::consts::TAU)
        } else {
            0.0
        },
        stroke: rng.uniform(0.06, 0.1) * s,
        noise: rng.uniform(0.0, 0.05),
    }
}

/// Render one glyph deterministically from `seed`.
pub fn render_glyph(class: GlyphClass, size: usize, seed: u64) -> Tensor<f32> {
    let mut rng = SplitMix64::new(seed);
    let pose = sample_pose(class, size, &mut rng);
    draw(class, size, &pose, &mut rng)
}

/// `n_per_class` samples of each class, grouped by class in the given order.
pub fn gen_glyphs(
    classes: &[GlyphClass],
    n_per_class: usize,
    size: usize,
    seed: u64,
) -> Result<LabeledImageSet> {
    if size < 16 {
        return Err(Error::invalid(format!("glyph size must be >= 16, got {size}")));
    }
    if n_per_class == 0 || classes.is_empty() {
        return Err(Error::invalid("need at least one class and one sample per class"));
    }
    let base = SplitMix64::new(seed);
    let jobs: Vec<(usize, GlyphClass, u64)> = classes
        .iter()
        .enumerate()
        .flat_map(|(label, &class)| {
            (0..n_per_class).map(move |i| (label, class, (label * n_per_class + i) as u64))
        })
        .collect();
    let images = jobs
        .par_iter()
        .map(|&(_, class, index)| render_glyph(class, size, base.split_index(index).next_u64()))
        .collect();
    Ok(LabeledImageSet {
        images,
        labels: jobs.iter().map(|j| j.0).collect(),
        class_names: classes.iter().map(|c| c.name().to_string()).collect(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = gen_glyphs(&[GlyphClass::Circle], 1, 32, 5).unwrap();
        let b = gen_glyphs(&[GlyphClass::Circle], 1, 32, 5).unwrap();
        assert_eq!(a, b);
        let c = gen_glyphs(&[GlyphClass::Circle], 1, 32, 6).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn label_counts() {
        let set = gen_glyphs(&[GlyphClass::Circle, GlyphClass::Square], 100, 16, 1).unwrap();
        assert_eq!(set.labels.iter().filter(|&&l| l == 0).count(), 100);
        assert_eq!(set.labels.iter().filter(|&&l| l == 1).count(), 100);
    }

    #[test]
    fn pixels_within_unit_interval() {
        let set = gen_glyphs(&GlyphClass::ALL, 3, 20, 2).unwrap();
        for img in &set.images {
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(img.data().iter().any(|&v| v > 0.5), "glyph should draw something");
        }
    }

    #[test]
    fn bad_arguments_rejected() {
        assert!(matches!("hexagon".parse::<GlyphClass>(), Err(Error::UnknownClass(_))));
        assert!(parse_classes("circle,blob").is_err());
        assert!(gen_glyphs(&[GlyphClass::Circle], 1, 8, 0).is_err());
        assert!(gen_glyphs(&[GlyphClass::Circle], 0, 16, 0).is_err());
    }
}
