//! Dense Zernike-moment features.
//!
//! Every interior pixel gets the moments of the disc-shaped patch centered on
//! it. The 2D feature keeps the moment magnitudes, which are invariant to
//! in-plane rotation. The 3D feature stacks `2T+1` consecutive frames and
//! applies an even/odd recombination to the complex moments before taking
//! magnitudes, so that a clone played backwards in time produces the same
//! vectors as the original.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{Dims, Video};

/// Zernike order `(n, m)` with `0 <= m <= n` and `n - m` even.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MomentIndex {
    pub n: u32,
    pub m: u32,
}

impl MomentIndex {
    pub fn new(n: u32, m: u32) -> Result<Self> {
        if m > n || !(n - m).is_multiple_of(2) {
            return Err(Error::InvalidMoment { n, m });
        }
        Ok(MomentIndex { n, m })
    }

    /// All valid indices with `n <= max_order`, by radial order then `m`.
    pub fn up_to_order(max_order: u32) -> Vec<MomentIndex> {
        (0..=max_order)
            .flat_map(|n| (n % 2..=n).step_by(2).map(move |m| MomentIndex { n, m }))
            .collect()
    }
}

/// Default 2D moment set: the twelve indices with `n <= 5`.
pub fn default_moments_2d() -> Vec<MomentIndex> {
    MomentIndex::up_to_order(5)
}

/// Default per-frame moment set of the 3D feature: the six indices with `n <= 3`.
pub fn default_moments_3d() -> Vec<MomentIndex> {
    MomentIndex::up_to_order(3)
}

/// Zernike radial polynomial `R_{n,m}(rho)`.
pub fn radial_polynomial(n: u32, m: u32, rho: f64) -> Result<f64> {
    let idx = MomentIndex::new(n, m)?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("radius {rho} outside [0, 1]")));
    }
    Ok(radial(idx, rho))
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn radial(idx: MomentIndex, rho: f64) -> f64 {
    let MomentIndex { n, m } = idx;
    let half_diff = (n - m) / 2;
    let half_sum = (n + m) / 2;
    (0..=half_diff)
        .map(|s| {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            let coef = factorial(n - s)
                / (factorial(s) * factorial(half_sum - s) * factorial(half_diff - s));
            sign * coef * rho.powi((n - 2 * s) as i32)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    TwoD,
    #[serde(rename = "three_d_fi")]
    ThreeDFlipInvariant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub patch_radius: usize,
    pub mode: FeatureMode,
    pub moment_set_2d: Vec<MomentIndex>,
    pub moment_set_3d: Vec<MomentIndex>,
    /// Half-width `T` of the temporal window; the 3D feature spans `2T+1` frames.
    pub temporal_half_extent: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            patch_radius: 8,
            mode: FeatureMode::TwoD,
            moment_set_2d: default_moments_2d(),
            moment_set_3d: default_moments_3d(),
            temporal_half_extent: 1,
        }
    }
}

impl FeatureConfig {
    pub fn with_mode(mode: FeatureMode) -> Self {
        FeatureConfig {
            mode,
            ..Default::default()
        }
    }

    /// Per-frame moments needed by the current mode.
    pub fn moments(&self) -> &[MomentIndex] {
        match self.mode {
            FeatureMode::TwoD => &self.moment_set_2d,
            FeatureMode::ThreeDFlipInvariant => &self.moment_set_3d,
        }
    }

    pub fn feature_len(&self) -> usize {
        match self.mode {
            FeatureMode::TwoD => self.moment_set_2d.len(),
            FeatureMode::ThreeDFlipInvariant => {
                self.moment_set_3d.len() * (2 * self.temporal_half_extent + 1)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_radius == 0 {
            return Err(Error::Config("patch_radius must be positive".into()));
        }
        if self.moments().is_empty() {
            return Err(Error::Config("empty moment set".into()));
        }
        for idx in self.moment_set_2d.iter().chain(&self.moment_set_3d) {
            MomentIndex::new(idx.n, idx.m)?;
        }
        Ok(())
    }
}

/// Discretized moment kernels over a disc of pixel centers.
///
/// For moment `(n, m)` the weight of tap `p` is
/// `(n+1)/N * R_{n,m}(rho_p) * exp(-j m theta_p)`, `N` being the number of taps,
/// so that a unit disc has moment `(0,0) = 1`. Kernels other than `(0,0)` are
/// shifted to zero sum: the discrete disc is not exactly orthogonal to
/// constants, and without the shift a flat patch leaks into every moment.
#[derive(Clone, Debug)]
pub struct MomentKernels {
    radius: usize,
    indices: Vec<MomentIndex>,
    /// (dr, dc) of every tap, row-major.
    taps: Vec<(i32, i32)>,
    /// Per moment, real then imaginary weights; imaginary is empty when `m = 0`.
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl MomentKernels {
    pub fn new(radius: usize, indices: &[MomentIndex]) -> Self {
        let r = radius as i32;
        let r2 = (radius * radius) as i32;
        let taps: Vec<(i32, i32)> = (-r..=r)
            .flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| dr * dr + dc * dc <= r2)
            .collect();
        let count = taps.len() as f64;
        let mut re = Vec::with_capacity(indices.len());
        let mut im = Vec::with_capacity(indices.len());
        for &idx in indices {
            let scale = (idx.n + 1) as f64 / count;
            let mut wr = Vec::with_capacity(taps.len());
            let mut wi = Vec::with_capacity(taps.len());
            for &(dr, dc) in &taps {
                let (y, x) = (dr as f64 / radius as f64, dc as f64 / radius as f64);
                let rho = (x * x + y * y).sqrt().min(1.0);
                let theta = y.atan2(x);
                let rad = radial(idx, rho) * scale;
                let phase = -(idx.m as f64) * theta;
                wr.push(rad * phase.cos());
                wi.push(rad * phase.sin());
            }
            if idx.n > 0 {
                let (mr, mi) = (
                    wr.iter().sum::<f64>() / count,
                    wi.iter().sum::<f64>() / count,
                );
                wr.iter_mut().for_each(|w| *w -= mr);
                wi.iter_mut().for_each(|w| *w -= mi);
            }
            if idx.m == 0 {
                wi.clear();
            }
            re.push(wr);
            im.push(wi);
        }
        MomentKernels {
            radius,
            indices: indices.to_vec(),
            taps,
            re,
            im,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn indices(&self) -> &[MomentIndex] {
        &self.indices
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    /// Whether the disc centered at `(r, c)` lies inside a `rows × cols` frame.
    #[inline]
    pub fn fits(&self, rows: usize, cols: usize, r: usize, c: usize) -> bool {
        r >= self.radius && c >= self.radius && r + self.radius < rows && c + self.radius < cols
    }

    /// Moments of the patch centered at `(r, c)` of a row-major frame.
    pub fn moments_at(
        &self,
        frame: &[f64],
        rows: usize,
        cols: usize,
        r: usize,
        c: usize,
    ) -> Option<Vec<Complex64>> {
        if !self.fits(rows, cols, r, c) {
            return None;
        }
        let k = self.indices.len();
        let mut acc_re = vec![0.0; k];
        let mut acc_im = vec![0.0; k];
        for (tap, &(dr, dc)) in self.taps.iter().enumerate() {
            let x = frame[(r as i64 + dr as i64) as usize * cols + (c as i64 + dc as i64) as usize];
            for j in 0..k {
                acc_re[j] += self.re[j][tap] * x;
                if !self.im[j].is_empty() {
                    acc_im[j] += self.im[j][tap] * x;
                }
            }
        }
        Some(
            acc_re
                .into_iter()
                .zip(acc_im)
                .map(|(a, b)| Complex64::new(a, b))
                .collect(),
        )
    }

    /// Moments of every site of a frame, `K` values per site; sites whose
    /// disc leaves the frame hold zeros.
    ///
    /// Accumulates taps in the same order as [`Self::moments_at`], so both
    /// produce bit-identical values.
    pub fn frame_moments(&self, frame: &[f64], rows: usize, cols: usize) -> Vec<Complex64> {
        let k = self.indices.len();
        let rad = self.radius;
        let mut out = vec![Complex64::new(0.0, 0.0); rows * cols * k];
        if rows <= 2 * rad || cols <= 2 * rad {
            return out;
        }
        let width = cols - 2 * rad;
        out.par_chunks_mut(cols * k)
            .enumerate()
            .filter(|(r, _)| *r >= rad && r + rad < rows)
            .for_each(|(r, row_out)| {
                let mut acc_re = vec![0.0f64; k * width];
                let mut acc_im = vec![0.0f64; k * width];
                for (tap, &(dr, dc)) in self.taps.iter().enumerate() {
                    let start =
                        (r as i64 + dr as i64) as usize * cols + (rad as i64 + dc as i64) as usize;
                    let input = &frame[start..start + width];
                    for j in 0..k {
                        let w = self.re[j][tap];
                        let acc = &mut acc_re[j * width..(j + 1) * width];
                        for (a, &x) in acc.iter_mut().zip(input) {
                            *a += w * x;
                        }
                        if !self.im[j].is_empty() {
                            let w = self.im[j][tap];
                            let acc = &mut acc_im[j * width..(j + 1) * width];
                            for (a, &x) in acc.iter_mut().zip(input) {
                                *a += w * x;
                            }
                        }
                    }
                }
                for i in 0..width {
                    let site = &mut row_out[(rad + i) * k..(rad + i + 1) * k];
                    for (j, m) in site.iter_mut().enumerate() {
                        *m = Complex64::new(acc_re[j * width + i], acc_im[j * width + i]);
                    }
                }
            });
        out
    }
}

/// Moments at site `(t, r, c)` for the moment set of `cfg.mode`; `None` when
/// the patch leaves the frame.
pub fn compute_moments(
    video: &Video,
    t: usize,
    r: usize,
    c: usize,
    cfg: &FeatureConfig,
) -> Option<Vec<Complex64>> {
    let d = video.dims();
    if t >= d.frames {
        return None;
    }
    MomentKernels::new(cfg.patch_radius, cfg.moments()).moments_at(
        video.frame(t),
        d.rows,
        d.cols,
        r,
        c,
    )
}

/// Elementwise magnitudes.
pub fn feature_2d(moments: &[Complex64]) -> Vec<f64> {
    moments.iter().map(|m| m.norm()).collect()
}

/// Even/odd recombination over frames `t-T..=t+T` followed by magnitudes.
///
/// `stack[i]` holds the moments of frame `t - T + i`. Output entries are
/// ordered by `tau` ascending, moments inner.
pub fn feature_3d_flip_invariant(stack: &[Vec<Complex64>]) -> Vec<f64> {
    let refs: Vec<&[Complex64]> = stack.iter().map(Vec::as_slice).collect();
    let k = refs.first().map_or(0, |s| s.len());
    let mut out = vec![0.0; k * stack.len()];
    even_odd(&refs, |i, v| out[i] = v);
    out
}

#[inline]
fn even_odd(stack: &[&[Complex64]], mut emit: impl FnMut(usize, f64)) {
    assert!(stack.len() % 2 == 1, "temporal window must have odd length");
    let half = stack.len() / 2;
    let k = stack[half].len();
    for (slot, tau) in (-(half as i64)..=half as i64).enumerate() {
        let fwd = stack[(half as i64 + tau) as usize];
        let bwd = stack[(half as i64 - tau) as usize];
        for j in 0..k {
            let v = match tau.cmp(&0) {
                std::cmp::Ordering::Greater => {
                    (fwd[j] + bwd[j]).norm() * std::f64::consts::FRAC_1_SQRT_2
                }
                std::cmp::Ordering::Equal => fwd[j].norm(),
                std::cmp::Ordering::Less => {
                    (fwd[j] - bwd[j]).norm() * std::f64::consts::FRAC_1_SQRT_2
                }
            };
            emit(slot * k + j, v);
        }
    }
}

/// Dense features of one resolution level.
///
/// Sites form a `dims` grid; site `(t, k, l)` sits at full-resolution pixel
/// `(t, k * stride, l * stride)`.
#[derive(Clone, Debug)]
pub struct FeatureField {
    level: usize,
    stride: usize,
    dims: Dims,
    full_dims: Dims,
    len: usize,
    data: Vec<f32>,
    valid: Vec<bool>,
}

impl FeatureField {
    /// Level-0 field from site-major feature vectors of length `feature_len`.
    pub fn new(dims: Dims, feature_len: usize, data: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        if feature_len == 0 || data.len() != dims.len() * feature_len || valid.len() != dims.len() {
            return Err(Error::Config(format!(
                "{} values and {} flags do not describe {} sites of length {}",
                data.len(),
                valid.len(),
                dims,
                feature_len
            )));
        }
        Ok(Self::from_parts(0, 1, dims, dims, feature_len, data, valid))
    }

    pub(crate) fn from_parts(
        level: usize,
        stride: usize,
        dims: Dims,
        full_dims: Dims,
        len: usize,
        data: Vec<f32>,
        valid: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(data.len(), dims.len() * len);
        debug_assert_eq!(valid.len(), dims.len());
        FeatureField {
            level,
            stride,
            dims,
            full_dims,
            len,
            data,
            valid,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Dimensions of the level-0 grid.
    pub fn full_dims(&self) -> Dims {
        self.full_dims
    }

    pub fn feature_len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn feature(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.len..(idx + 1) * self.len]
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        self.valid[idx]
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Full-resolution coordinates of a site.
    #[inline]
    pub fn full_coords(&self, idx: usize) -> (usize, usize, usize) {
        let (t, k, l) = self.dims.coords(idx);
        (t, k * self.stride, l * self.stride)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Level-0 features of every site.
pub fn extract_field(video: &Video, cfg: &FeatureConfig) -> Result<FeatureField> {
    cfg.validate()?;
    let d = video.dims();
    let diameter = 2 * cfg.patch_radius + 1;
    if d.rows < diameter || d.cols < diameter {
        return Err(Error::TooSmall {
            dims: d,
            reason: format!("frames must be at least {diameter}x{diameter} for the patch"),
        });
    }
    let kernels = MomentKernels::new(cfg.patch_radius, cfg.moments());
    let f = cfg.feature_len();
    let n = d.frame_len();
    let mut data = vec![0.0f32; d.len() * f];
    let mut valid = vec![false; d.len()];
    let interior = |i: usize| kernels.fits(d.rows, d.cols, i / d.cols, i % d.cols);

    match cfg.mode {
        FeatureMode::TwoD => {
            for t in 0..d.frames {
                let moments = kernels.frame_moments(video.frame(t), d.rows, d.cols);
                let k = kernels.indices().len();
                let out = &mut data[t * n * f..(t + 1) * n * f];
                out.par_chunks_mut(f)
                    .zip(moments.par_chunks(k))
                    .for_each(|(o, m)| {
                        for (dst, src) in o.iter_mut().zip(m) {
                            *dst = src.norm() as f32;
                        }
                    });
                for i in 0..n {
                    valid[t * n + i] = interior(i);
                }
            }
        }
        FeatureMode::ThreeDFlipInvariant => {
            let half = cfg.temporal_half_extent;
            let span = 2 * half + 1;
            if d.frames < span {
                return Err(Error::TooSmall {
                    dims: d,
                    reason: format!("3D features need at least {span} frames"),
                });
            }
            let k = kernels.indices().len();
            let mut window: std::collections::VecDeque<Vec<Complex64>> =
                std::collections::VecDeque::with_capacity(span);
            for t in 0..d.frames {
                window.push_back(kernels.frame_moments(video.frame(t), d.rows, d.cols));
                if window.len() > span {
                    window.pop_front();
                }
                if window.len() < span {
                    continue;
                }
                let center = t - half;
                let frames: Vec<&Vec<Complex64>> = window.iter().collect();
                let out = &mut data[center * n * f..(center + 1) * n * f];
                out.par_chunks_mut(f).enumerate().for_each(|(i, o)| {
                    let stack: Vec<&[Complex64]> =
                        frames.iter().map(|m| &m[i * k..(i + 1) * k]).collect();
                    even_odd(&stack, |j, v| o[j] = v as f32);
                });
                for i in 0..n {
                    valid[center * n + i] = interior(i);
                }
            }
        }
    }
    Ok(FeatureField::from_parts(0, 1, d, d, f, data, valid))
}

const FEATURE_MAGIC: &[u8; 4] = b"VCFF";

/// Writes a feature dump: a 24-byte header (magic, level, T, H, W, F as
/// little-endian u32) followed by little-endian f32 features, site-major.
/// Invalid sites are written as NaN.
pub fn write_feature_dump(field: &FeatureField, path: &Path) -> Result<()> {
    let d = field.dims();
    let mut out = Vec::with_capacity(24 + field.data.len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    for v in [field.level, d.frames, d.rows, d.cols, field.len] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for i in 0..d.len() {
        for &v in field.feature(i) {
            let v = if field.valid[i] { v } else { f32::NAN };
            out.write_all(&v.to_le_bytes()).unwrap();
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Contents of a feature dump.
#[derive(Clone, Debug)]
pub struct FeatureDump {
    pub level: usize,
    pub dims: Dims,
    pub feature_len: usize,
    /// Site-major features; NaN marks invalid sites.
    pub data: Vec<f32>,
}

pub fn read_feature_dump(path: &Path) -> Result<FeatureDump> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Dump {
        path: path.into(),
        message: m.into(),
    };
    if bytes.len() < 24 || &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("missing feature-dump header"));
    }
    let word =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (level, dims, feature_len) = (word(0), Dims::new(word(1), word(2), word(3)), word(4));
    let body = &bytes[24..];
    if body.len() != dims.len() * feature_len * 4 {
        return Err(bad("payload size does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(FeatureDump {
        level,
        dims,
        feature_len,
        data,
    })
}
