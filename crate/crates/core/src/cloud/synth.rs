use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ClassLabel, LabeledCloud, Point3, PointCloud};
use crate::error::{Error, Result};

struct Leaf {
    attach_z: f64,
    azimuth: f64,
    length: f64,
    width: f64,
    rise: f64,
    droop: f64,
}

impl Leaf {
    /// Blade half-width profile along the normalized length `t ∈ [0, 1]`.
    fn half_width(&self, t: f64) -> f64 {
        0.5 * self.width * (PI * (0.12 + 0.88 * t)).sin().max(0.0)
    }

    fn point(&self, t: f64, across: f64, stem_radius: f64) -> Point3 {
        let (s, c) = self.azimuth.sin_cos();
        let along = [c, s];
        let side = [-s, c];
        let reach = stem_radius + self.length * t;
        let height = self.attach_z + self.length * (self.rise * t - self.droop * t * t);
        let w = across * self.half_width(t);
        [
            reach * along[0] + w * side[0],
            reach * along[1] + w * side[1],
            height,
        ]
    }
}

/// Coordinate noise used by the command-line generator and the examples.
pub const DEFAULT_NOISE: f64 = 0.003;

/// Maize-like plant: a soil disk, a vertical stem and 4–8 elongated blades.
///
/// Class proportions are drawn around leaf 0.50, soil 0.30, stem 0.20 with a
/// few points of spread per plant. `noise` is the standard deviation of
/// Gaussian noise added to every coordinate. Output order is shuffled.
pub fn synth_maize(n_points: usize, seed: u64, noise: f64) -> Result<LabeledCloud> {
    if n_points < 100 {
        return Err(Error::domain(format!(
            "synthetic plants need at least 100 points, got {n_points}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::domain("noise must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let height: f64 = rng.random_range(0.8..1.3);
    let stem_radius: f64 = rng.random_range(0.012..0.022);
    let soil_radius: f64 = rng.random_range(0.35..0.5);
    let n_leaves = rng.random_range(4..=8usize);
    let phase = rng.random_range(0.0..TAU);
    let leaves: Vec<Leaf> = (0..n_leaves)
        .map(|i| {
            let frac = (i as f64 + 0.5) / n_leaves as f64;
            let rise = rng.random_range(0.5..1.0);
            let attach_z = height * (0.18 + 0.7 * frac) + rng.random_range(-0.03..0.03);
            let length = rng.random_range(0.35..0.6) * (1.1 - 0.4 * frac);
            // Tips stay above the soil.
            let max_drop = (attach_z - 0.1 * height) / length;
            Leaf {
                attach_z,
                // Alternating two-ranked phyllotaxis with some scatter.
                azimuth: phase + PI * i as f64 + rng.random_range(-0.5..0.5),
                length,
                width: rng.random_range(0.05..0.09),
                rise,
                droop: rise + rng.random_range(0.1..0.5f64).min(max_drop),
            }
        })
        .collect();

    let f_soil = 0.30 + rng.random_range(-0.03..0.03);
    let f_stem = 0.20 + rng.random_range(-0.03..0.03);
    let n_soil = (n_points as f64 * f_soil).round() as usize;
    let n_stem = (n_points as f64 * f_stem).round() as usize;
    let n_leaf = n_points - n_soil - n_stem;

    let mut points: Vec<(Point3, ClassLabel)> = Vec::with_capacity(n_points);

    let bump_a: f64 = rng.random_range(0.005..0.015);
    let bump_f: f64 = rng.random_range(4.0..9.0);
    for _ in 0..n_soil {
        let r = rng
            .random_range((2.0 * stem_radius).powi(2)..soil_radius * soil_radius)
            .sqrt();
        let th = rng.random_range(0.0..TAU);
        let (x, y) = (r * th.cos(), r * th.sin());
        let z = bump_a * ((bump_f * x).sin() + (bump_f * y).cos());
        points.push(([x, y, z], ClassLabel::Soil));
    }

    for _ in 0..n_stem {
        let z = rng.random_range(0.0..height);
        let r = stem_radius * (1.0 - 0.3 * z / height);
        let th = rng.random_range(0.0..TAU);
        points.push(([r * th.cos(), r * th.sin(), z], ClassLabel::Stem));
    }

    // Leaf points are shared out by blade area, then sampled uniformly per
    // area via rejection on the width profile.
    let areas: Vec<f64> = leaves.iter().map(|l| l.length * l.width).collect();
    let total: f64 = areas.iter().sum();
    let mut budget: Vec<usize> = areas
        .iter()
        .map(|a| (n_leaf as f64 * a / total).floor() as usize)
        .collect();
    let mut assigned: usize = budget.iter().sum();
    let mut k = 0;
    while assigned < n_leaf {
        budget[k % leaves.len()] += 1;
        assigned += 1;
        k += 1;
    }
    for (leaf, &count) in leaves.iter().zip(&budget) {
        let wmax = 0.5 * leaf.width;
        let mut made = 0;
        while made < count {
            let t: f64 = rng.random_range(0.0..1.0);
            if rng.random_range(0.0..wmax) > leaf.half_width(t) {
                continue;
            }
            let across = rng.random_range(-1.0..1.0);
            points.push((leaf.point(t, across, stem_radius), ClassLabel::Leaf));
            made += 1;
        }
    }

    if noise > 0.0 {
        let n = Normal::new(0.0, noise).expect("validated noise");
        for (p, _) in &mut points {
            for v in p.iter_mut() {
                *v += n.sample(&mut rng);
            }
        }
    }
    points.shuffle(&mut rng);
    let (pts, labels): (Vec<Point3>, Vec<ClassLabel>) = points.into_iter().unzip();
    LabeledCloud::new(PointCloud::new(pts)?, labels)
}
