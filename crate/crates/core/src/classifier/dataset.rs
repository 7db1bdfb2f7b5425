//! Procedurally generated toy images.
//!
//! Ten low-contrast pattern families (stripes in four orientations, disk,
//! ring, square, plus-sign, checkerboard, frame) drawn at random positions,
//! scales and phases over a noisy background. Sample `i` has label `i % K`;
//! every fifth round of `K` samples is held out for validation.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub shape: [usize; 3],
    pub classes: usize,
    pub samples: Vec<Sample>,
}

pub const MAX_CLASSES: usize = 10;

impl Dataset {
    pub fn new(shape: [usize; 3], classes: usize, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.image.shape() != shape {
                return Err(Error::dim("dataset", format!("sample {i} has shape {:?}", s.image.shape())));
            }
            if s.label >= classes {
                return Err(Error::Index {
                    index: s.label,
                    len: classes,
                });
            }
            if s.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Contract(format!("sample {i} has pixels outside [0, 1]")));
            }
        }
        Ok(Self {
            shape,
            classes,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(index, sample)` pairs of one split, in dataset order.
    pub fn split(&self, split: Split) -> impl Iterator<Item = (usize, &Sample)> {
        self.samples.iter().enumerate().filter(move |(_, s)| s.split == split)
    }
}

/// Deterministic, class-balanced synthetic dataset of `h × w × c` images.
pub fn generate_synthetic(seed: u64, count: usize, w: usize, h: usize, c: usize, classes: usize) -> Result<Dataset> {
    if !(2..=MAX_CLASSES).contains(&classes) {
        return Err(Error::Config(format!("class count must be in 2..={MAX_CLASSES}, got {classes}")));
    }
    if w < 8 || h < 8 {
        return Err(Error::Config(format!("images must be at least 8x8, got {w}x{h}")));
    }
    if c == 0 {
        return Err(Error::Config("need at least one channel".into()));
    }
    let samples = (0..count)
        .map(|i| {
            let mut rng = seed::stream(seed, seed::purpose::DATASET, i as u64);
            let label = i % classes;
            let split = if (i / classes) % 5 == 4 { Split::Val } else { Split::Train };
            Sample {
                image: render(&mut rng, label, h, w, c),
                label,
                split,
            }
        })
        .collect();
    Dataset::new([h, w, c], classes, samples)
}

fn render(rng: &mut Rng, label: usize, h: usize, w: usize, c: usize) -> Tensor {
    let pattern = Pattern::sample(rng, label);
    let background = rng.random_range(0.3..0.5);
    let amplitude = rng.random_range(0.12..0.2);
    let tint: Vec<f64> = (0..c).map(|_| if c == 1 { 1.0 } else { rng.random_range(0.5..=1.0) }).collect();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let u = (x as f64 + 0.5) / w as f64;
            let v = (y as f64 + 0.5) / h as f64;
            let p = pattern.intensity(u, v);
            for t in &tint {
                let noise = rng.random_range(-0.08..0.08);
                data.push((background + amplitude * t * p + noise).clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(&[h, w, c], data).expect("shape matches")
}

enum Pattern {
    Stripes { dir: (f64, f64), freq: f64, phase: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
    Ring { cx: f64, cy: f64, r: f64, width: f64 },
    Square { cx: f64, cy: f64, half: f64 },
    Plus { cx: f64, cy: f64, width: f64 },
    Checker { cell: f64, ox: f64, oy: f64 },
    Frame { inset: f64, width: f64 },
}

impl Pattern {
    fn sample(rng: &mut Rng, label: usize) -> Self {
        let centre = |rng: &mut Rng| (rng.random_range(0.35..0.65), rng.random_range(0.35..0.65));
        match label {
            0..=3 => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let dir = [(1.0, 0.0), (0.0, 1.0), (s, s), (s, -s)][label];
                Pattern::Stripes {
                    dir,
                    freq: rng.random_range(2.5..3.5),
                    phase: rng.random_range(0.0..2.0 * PI),
                }
            }
            4 => {
                let (cx, cy) = centre(rng);
                Pattern::Disk { cx, cy, r: rng.random_range(0.18..0.28) }
            }
            5 => {
                let (cx, cy) = centre(rng);
                Pattern::Ring {
                    cx,
                    cy,
                    r: rng.random_range(0.25..0.32),
                    width: rng.random_range(0.07..0.1),
                }
            }
            6 => {
                let (cx, cy) = centre(rng);
                Pattern::Square { cx, cy, half: rng.random_range(0.15..0.25) }
            }
            7 => {
                let (cx, cy) = centre(rng);
                Pattern::Plus { cx, cy, width: rng.random_range(0.06..0.1) }
            }
            8 => Pattern::Checker {
                cell: rng.random_range(0.2..0.3),
                ox: rng.random_range(0.0..1.0),
                oy: rng.random_range(0.0..1.0),
            },
            _ => Pattern::Frame {
                inset: rng.random_range(0.08..0.16),
                width: rng.random_range(0.07..0.1),
            },
        }
    }

    fn intensity(&self, u: f64, v: f64) -> f64 {
        let on = |b: bool| if b { 1.0 } else { 0.0 };
        match *self {
            Pattern::Stripes { dir, freq, phase } => 0.5 + 0.5 * (2.0 * PI * freq * (dir.0 * u + dir.1 * v) + phase).sin(),
            Pattern::Disk { cx, cy, r } => on((u - cx).hypot(v - cy) <= r),
            Pattern::Ring { cx, cy, r, width } => on(((u - cx).hypot(v - cy) - r).abs() <= width / 2.0),
            Pattern::Square { cx, cy, half } => on((u - cx).abs() <= half && (v - cy).abs() <= half),
            Pattern::Plus { cx, cy, width } => on((u - cx).abs() <= width || (v - cy).abs() <= width),
            Pattern::Checker { cell, ox, oy } => {
                let a = ((u / cell + ox).floor() as i64 + (v / cell + oy).floor() as i64).rem_euclid(2);
                on(a == 0)
            }
            Pattern::Frame { inset, width } => {
                let d = u.min(v).min(1.0 - u).min(1.0 - v);
                on(d >= inset && d <= inset + width)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(1, 10, 8, 8, 1, 2).unwrap();
        let b = generate_synthetic(1, 10, 8, 8, 1, 2).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(2, 10, 8, 8, 1, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn balanced_classes() {
        let d = generate_synthetic(3, 100, 16, 16, 1, 10).unwrap();
        let mut counts = [0usize; 10];
        for s in &d.samples {
            counts[s.label] += 1;
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(counts, [10; 10]);
        let val: Vec<_> = d.split(Split::Val).map(|(_, s)| s.label).collect();
        assert_eq!(val.len(), 20);
    }

    #[test]
    fn parameter_validation() {
        assert!(generate_synthetic(1, 10, 8, 8, 1, 11).is_err());
        assert!(generate_synthetic(1, 10, 7, 8, 1, 2).is_err());
        assert!(generate_synthetic(1, 10, 8, 8, 3, 10).is_ok());
    }
}
