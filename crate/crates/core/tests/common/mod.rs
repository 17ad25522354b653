#![allow(dead_code)]

use num_complex::Complex64;
use vcmd::forgegen::{apply_copy_move, synth_texture, Forgery, ForgerySpec, TextureKind};
use vcmd::patchmatch::Offset;
use vcmd::zernike::FeatureField;
use vcmd::{Dims, Video};

/// Spatially and temporally smooth noise, the substrate of most tests.
pub fn blur_video(dims: Dims, sigma: f64, seed: u64) -> Video {
    synth_texture(
        dims,
        TextureKind::GaussianBlurNoise {
            sigma,
            temporal_sigma: 1.5,
        },
        seed,
    )
    .unwrap()
}

/// 320x240, 60 frames, with a radius-30 disc copied over 25 frames by
/// (60, 40, 0).
pub fn rigid_clone_video(seed: u64) -> (Forgery, ForgerySpec) {
    let video = blur_video(Dims::new(60, 240, 320), 2.0, seed);
    let spec = ForgerySpec::translation([90.0, 120.0], 30.0, (10, 25), [60, 40, 0]);
    (apply_copy_move(&video, &spec).unwrap(), spec)
}

/// Same clone geometry in a 240x160, 40-frame video, for the slower
/// robustness scenarios.
pub fn small_clone(seed: u64, adjust: impl FnOnce(&mut ForgerySpec)) -> Forgery {
    let video = blur_video(Dims::new(40, 160, 240), 2.0, seed);
    let mut spec = ForgerySpec::translation([60.0, 70.0], 30.0, (5, 25), [40, 90, 0]);
    adjust(&mut spec);
    apply_copy_move(&video, &spec).unwrap()
}

pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Brute-force nearest neighbor of every valid site among valid sites at
/// Euclidean offset at least `min_offset`: `(offset, distance)` per site,
/// `None` for invalid sites.
pub fn exhaustive_nnf(f: &FeatureField, min_offset: f64) -> Vec<Option<(Offset, f64)>> {
    let d = f.dims();
    let valid: Vec<usize> = (0..d.len()).filter(|&i| f.is_valid(i)).collect();
    (0..d.len())
        .map(|s| {
            if !f.is_valid(s) {
                return None;
            }
            let (t, r, c) = d.coords(s);
            let mut best: Option<(Offset, f64)> = None;
            for &x in &valid {
                let (tx, rx, cx) = d.coords(x);
                let o = Offset::new(
                    rx as i32 - r as i32,
                    cx as i32 - c as i32,
                    tx as i32 - t as i32,
                );
                if ((o.norm_sq()) as f64) < min_offset * min_offset {
                    continue;
                }
                let dist = sq_dist(f.feature(s), f.feature(x));
                if best.is_none_or(|(_, b)| dist < b) {
                    best = Some((o, dist));
                }
            }
            best
        })
        .collect()
}

/// Patch radius the moment oracle works at.
pub const ORACLE_RADIUS: usize = 8;

/// Radial polynomial from its closed form, evaluated with integer
/// binomial-style coefficients.
pub fn radial_oracle(n: i64, m: i64, rho: f64) -> f64 {
    let fact = |k: i64| -> f64 { (1..=k).map(|v| v as f64).product() };
    let mut sum = 0.0;
    for s in 0..=(n - m) / 2 {
        let c = fact(n - s) / (fact(s) * fact((n + m) / 2 - s) * fact((n - m) / 2 - s));
        sum += (-1f64).powi(s as i32) * c * rho.powi((n - 2 * s) as i32);
    }
    sum
}

/// Moments of a (2R+1)² patch, R = [`ORACLE_RADIUS`]: projections on the
/// conjugate basis over the disc of pixel centers, with the patch mean
/// removed for every moment but (0,0).
pub fn moments_oracle(patch: &[f64]) -> Vec<Complex64> {
    let w = 2 * ORACLE_RADIUS + 1;
    let mut taps = Vec::new();
    for y in 0..w {
        for x in 0..w {
            let (dy, dx) = (
                y as f64 - ORACLE_RADIUS as f64,
                x as f64 - ORACLE_RADIUS as f64,
            );
            if dy * dy + dx * dx <= (ORACLE_RADIUS * ORACLE_RADIUS) as f64 {
                taps.push((
                    dy / ORACLE_RADIUS as f64,
                    dx / ORACLE_RADIUS as f64,
                    patch[y * w + x],
                ));
            }
        }
    }
    let n_taps = taps.len() as f64;
    let mean = taps.iter().map(|t| t.2).sum::<f64>() / n_taps;
    vcmd::zernike::default_moments_2d()
        .iter()
        .map(|idx| {
            let (n, m) = (idx.n as i64, idx.m as i64);
            let mut acc = Complex64::new(0.0, 0.0);
            for &(y, x, v) in &taps {
                let rho = (x * x + y * y).sqrt();
                let basis = Complex64::from_polar(radial_oracle(n, m, rho), m as f64 * y.atan2(x));
                let value = if n == 0 { v } else { v - mean };
                acc += basis.conj() * value;
            }
            acc * ((n + 1) as f64 / n_taps)
        })
        .collect()
}
