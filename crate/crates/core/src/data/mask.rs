//! Procedural irregular masks (1 = visible, 0 = missing).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Error, Result};
use crate::tensor::Tensor;

/// Accepted distance outside the target range.
pub const RATIO_TOLERANCE: f64 = 0.02;
pub const MAX_ATTEMPTS: usize = 20;

/// Missing-area ratio groups used for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bucket {
    Small,
    Medium,
    Large,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Small, Bucket::Medium, Bucket::Large];

    pub fn range(self) -> (f64, f64) {
        match self {
            Bucket::Small => (0.0001, 0.20),
            Bucket::Medium => (0.20, 0.40),
            Bucket::Large => (0.40, 0.60),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Small => "small",
            Bucket::Medium => "medium",
            Bucket::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Result<Bucket> {
        Bucket::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| config_err!("unknown mask bucket {s:?} (small, medium, large)"))
    }

    /// Bucket whose range holds `ratio`, if any.
    pub fn of_ratio(ratio: f64) -> Option<Bucket> {
        Bucket::ALL.into_iter().find(|b| {
            let (lo, hi) = b.range();
            ratio >= lo - RATIO_TOLERANCE && ratio <= hi + RATIO_TOLERANCE
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Random-walk brush strokes.
    Strokes,
    Rectangles,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    /// Vertices per stroke.
    pub max_vertices: usize,
    /// Brush radius as a fraction of the shorter side.
    pub radius: (f64, f64),
    /// Missing fraction to aim for.
    pub target: (f64, f64),
    pub seed: u64,
}

impl MaskSpec {
    pub fn strokes(target: (f64, f64), seed: u64) -> MaskSpec {
        MaskSpec {
            kind: MaskKind::Strokes,
            max_vertices: 10,
            radius: (0.02, 0.06),
            target,
            seed,
        }
    }

    pub fn bucket(bucket: Bucket, seed: u64) -> MaskSpec {
        MaskSpec::strokes(bucket.range(), seed)
    }
}

/// Image, mask and the bucket its missing ratio falls in.
#[derive(Debug, Clone)]
pub struct MaskedImage {
    pub image: Tensor,
    pub mask: Tensor,
    pub bucket: Option<Bucket>,
}

impl MaskedImage {
    pub fn new(image: Tensor, mask: Tensor) -> MaskedImage {
        let bucket = Bucket::of_ratio(missing_fraction(&mask));
        MaskedImage {
            image,
            mask,
            bucket,
        }
    }
}

pub fn missing_fraction(mask: &Tensor) -> f64 {
    let d = mask.data();
    d.iter().filter(|&&v| v == 0.0).count() as f64 / d.len() as f64
}

struct Canvas {
    h: usize,
    w: usize,
    missing: Vec<bool>,
    count: usize,
}

impl Canvas {
    fn fraction(&self) -> f64 {
        self.count as f64 / self.missing.len() as f64
    }

    fn stamp(&mut self, cy: f64, cx: f64, r: f64) {
        let y0 = (cy - r).floor().max(0.0) as usize;
        let x0 = (cx - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize).min(self.h - 1);
        let x1 = ((cx + r).ceil() as usize).min(self.w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                let i = y * self.w + x;
                if dy * dy + dx * dx <= r * r && !self.missing[i] {
                    self.missing[i] = true;
                    self.count += 1;
                }
            }
        }
    }
}

fn paint_strokes(c: &mut Canvas, spec: &MaskSpec, goal: f64, rng: &mut ChaCha8Rng) {
    let side = c.h.min(c.w) as f64;
    let (h, w) = (c.h as f64, c.w as f64);
    while c.fraction() < goal {
        let mut y = rng.random_range(0.0..h);
        let mut x = rng.random_range(0.0..w);
        let r = (rng.random_range(spec.radius.0..=spec.radius.1) * side).max(1.0);
        let mut angle = rng.random_range(0.0..std::f64::consts::TAU);
        for _ in 0..rng.random_range(2..=spec.max_vertices.max(2)) {
            angle += rng.random_range(-1.2..1.2);
            let len = rng.random_range(0.05..0.25) * side;
            let steps = (len / 0.5).ceil() as usize;
            for _ in 0..steps {
                y = (y + 0.5 * angle.sin()).clamp(0.0, h - 1.0);
                x = (x + 0.5 * angle.cos()).clamp(0.0, w - 1.0);
                c.stamp(y, x, r);
                if c.fraction() >= goal {
                    return;
                }
            }
        }
    }
}

fn paint_rectangles(c: &mut Canvas, goal: f64, rng: &mut ChaCha8Rng) {
    while c.fraction() < goal {
        let rh = rng.random_range(1..=(c.h / 4).max(1));
        let rw = rng.random_range(1..=(c.w / 4).max(1));
        let y0 = rng.random_range(0..=c.h - rh);
        let x0 = rng.random_range(0..=c.w - rw);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                let i = y * c.w + x;
                if !c.missing[i] {
                    c.missing[i] = true;
                    c.count += 1;
                    if c.fraction() >= goal {
                        return;
                    }
                }
            }
        }
    }
}

/// Binary `[1,H,W]` mask whose missing fraction lands in the target range
/// (± [`RATIO_TOLERANCE`]). Deterministic per seed.
pub fn generate_mask(spec: &MaskSpec, h: usize, w: usize) -> Result<Tensor> {
    if h < 16 || w < 16 {
        return Err(config_err!("mask extent {h}x{w} is below 16"));
    }
    let (lo, hi) = spec.target;
    if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
        return Err(config_err!("invalid target ratio range {:?}", spec.target));
    }
    if spec.radius.0 <= 0.0 || spec.radius.1 < spec.radius.0 {
        return Err(config_err!("invalid brush radius range {:?}", spec.radius));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last = 0.0;
    for _ in 0..MAX_ATTEMPTS {
        let goal = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        let mut c = Canvas {
            h,
            w,
            missing: vec![false; h * w],
            count: 0,
        };
        match spec.kind {
            MaskKind::Strokes => paint_strokes(&mut c, spec, goal, &mut rng),
            MaskKind::Rectangles => paint_rectangles(&mut c, goal, &mut rng),
        }
        last = c.fraction();
        if last >= lo - RATIO_TOLERANCE && last <= hi + RATIO_TOLERANCE {
            let data = c
                .missing
                .iter()
                .map(|&m| if m { 0.0 } else { 1.0 })
                .collect();
            return Tensor::from_vec(&[1, h, w], data);
        }
    }
    Err(Error::Generation(format!(
        "missing ratio {last:.4} outside {:?} after {MAX_ATTEMPTS} attempts",
        spec.target
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_target_is_all_visible() {
        let m = generate_mask(&MaskSpec::strokes((0.0, 0.0), 1), 32, 32).unwrap();
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn medium_bucket_seed_7() {
        let m = generate_mask(&MaskSpec::bucket(Bucket::Medium, 7), 64, 64).unwrap();
        let f = missing_fraction(&m);
        assert!((0.18..=0.42).contains(&f), "{f}");
        let again = generate_mask(&MaskSpec::bucket(Bucket::Medium, 7), 64, 64).unwrap();
        assert_eq!(m.data(), again.data());
    }

    #[test]
    fn rectangles_and_buckets() {
        for b in Bucket::ALL {
            let mut spec = MaskSpec::bucket(b, 3);
            spec.kind = MaskKind::Rectangles;
            let m = generate_mask(&spec, 32, 48).unwrap();
            assert_eq!(m.shape(), &[1, 32, 48]);
            assert!(Bucket::of_ratio(missing_fraction(&m)).is_some());
        }
    }

    #[test]
    fn bad_specs() {
        assert!(matches!(
            generate_mask(&MaskSpec::strokes((0.5, 0.2), 1), 32, 32),
            Err(Error::Config(_))
        ));
        assert!(generate_mask(&MaskSpec::strokes((0.1, 0.2), 1), 8, 8).is_err());
    }
}
