use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LabeledCloud, PointCloud};
use crate::error::{Error, Result};

/// Random similarity transform plus jitter.
///
/// Lengths are absolute; [`AugmentParams::for_cloud`] derives the default
/// magnitudes from the cloud's bounding-box diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    /// Standard deviation of per-coordinate Gaussian noise.
    pub jitter_sigma: f64,
    /// Rotation angle about the z axis is drawn from `[lo, hi)`.
    pub rotation: (f64, f64),
    /// Per-axis translation drawn from `[-t, t]`.
    pub translation_range: f64,
    /// Uniform scale factor interval; both bounds must be positive.
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl AugmentParams {
    /// Defaults: jitter 0.005·diameter, full turn about z, translation
    /// 0.05·diameter, scale in [0.9, 1.1].
    pub fn for_cloud(cloud: &PointCloud, seed: u64) -> Self {
        let d = cloud.diameter();
        Self {
            jitter_sigma: 0.005 * d,
            rotation: (0.0, TAU),
            translation_range: 0.05 * d,
            scale_range: (0.9, 1.1),
            seed,
        }
    }

    /// Parameters that leave every point in place.
    pub fn identity(seed: u64) -> Self {
        Self {
            jitter_sigma: 0.0,
            rotation: (0.0, 0.0),
            translation_range: 0.0,
            scale_range: (1.0, 1.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (slo, shi) = self.scale_range;
        if !(slo > 0.0 && shi > 0.0 && slo <= shi) {
            return Err(Error::domain(format!(
                "scale range ({slo}, {shi}) must be positive and ordered"
            )));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::domain("jitter sigma must be finite and non-negative"));
        }
        if !(self.translation_range >= 0.0 && self.translation_range.is_finite()) {
            return Err(Error::domain("translation range must be finite and non-negative"));
        }
        if !(self.rotation.0 <= self.rotation.1) {
            return Err(Error::domain("rotation range must be ordered"));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Rotation about z, uniform scale, translation, then per-point jitter.
/// Rotation and scaling pivot on the centroid. Labels are untouched.
pub fn augment(cloud: &LabeledCloud, params: &AugmentParams) -> Result<LabeledCloud> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let angle = draw(&mut rng, params.rotation.0, params.rotation.1);
    let scale = draw(&mut rng, params.scale_range.0, params.scale_range.1);
    let t = params.translation_range;
    let shift = [
        draw(&mut rng, -t, t),
        draw(&mut rng, -t, t),
        draw(&mut rng, -t, t),
    ];
    let (s, c) = angle.sin_cos();
    let center = cloud.cloud.centroid();
    let jitter = (params.jitter_sigma > 0.0)
        .then(|| Normal::new(0.0, params.jitter_sigma).expect("validated sigma"));

    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            let r = [c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]];
            let mut q = [0.0; 3];
            for a in 0..3 {
                q[a] = center[a] + scale * r[a] + shift[a];
            }
            if let Some(n) = &jitter {
                for v in &mut q {
                    *v += n.sample(&mut rng);
                }
            }
            q
        })
        .collect();
    cloud.with_points(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{ClassLabel, PointCloud};

    fn sample() -> LabeledCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = (0..40)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.0..2.0),
                ]
            })
            .collect();
        LabeledCloud::new(PointCloud::new(pts).unwrap(), vec![ClassLabel::Stem; 40]).unwrap()
    }

    fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    fn pairwise_ratio_check(a: &LabeledCloud, b: &LabeledCloud, ratio: f64, tol: f64) {
        for i in 0..a.len() {
            for j in 0..i {
                let da = dist(&a.points()[i], &a.points()[j]);
                let db = dist(&b.points()[i], &b.points()[j]);
                assert!((db - ratio * da).abs() <= tol, "{da} vs {db}");
            }
        }
    }

    #[test]
    fn full_turn_is_identity() {
        let c = sample();
        let mut p = AugmentParams::identity(1);
        p.rotation = (TAU, TAU);
        let out = augment(&c, &p).unwrap();
        for (a, b) in c.points().iter().zip(out.points()) {
            assert!(dist(a, b) < 1e-9);
        }
        assert_eq!(out.labels(), c.labels());
    }

    #[test]
    fn scale_two_doubles_distances() {
        let c = sample();
        let mut p = AugmentParams::identity(1);
        p.scale_range = (2.0, 2.0);
        pairwise_ratio_check(&c, &augment(&c, &p).unwrap(), 2.0, 1e-12);
    }

    #[test]
    fn rigid_motion_preserves_distances() {
        let c = sample();
        for seed in 0..5 {
            let mut p = AugmentParams::for_cloud(&c.cloud, seed);
            p.jitter_sigma = 0.0;
            p.scale_range = (1.0, 1.0);
            pairwise_ratio_check(&c, &augment(&c, &p).unwrap(), 1.0, 1e-9);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let c = sample();
        let p = AugmentParams::for_cloud(&c.cloud, 11);
        assert_eq!(augment(&c, &p).unwrap(), augment(&c, &p).unwrap());
        let mut bad = p.clone();
        bad.scale_range = (0.0, 1.0);
        assert!(augment(&c, &bad).is_err());
        let mut bad = p;
        bad.jitter_sigma = -1.0;
        assert!(augment(&c, &bad).is_err());
    }
}
