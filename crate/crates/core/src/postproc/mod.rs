//! From an offset field to a detection map.
//!
//! Sites whose offsets are well explained by a local affine model form the
//! preliminary map; small connected regions are dropped; then every region
//! must mostly point into the map itself, which removes isolated chance
//! matches while keeping pairs and cycles of clones.

mod dlf;
mod labeling;

pub use dlf::{dlf_error, dlf_error_values};
pub use labeling::{BoundingBox, Region, RegionLabeling};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchmatch::OffsetField;
use crate::video::MaskVolume;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlfConfig {
    /// Half-width of the spatial fitting window, in sites.
    pub window_half: usize,
    /// Largest mean squared residual (pixels²) still counted as coherent.
    pub error_threshold: f64,
    /// Regions with fewer sites are removed (level-0 units).
    pub min_region_size: usize,
    /// A video is declared forged when the map holds more sites (level-0 units).
    pub detection_threshold: usize,
    /// Fraction of a region's sites that must match into the map.
    pub keep_fraction: f64,
    /// Grow the final map by the fitting window and the patch support, see
    /// [`restore_support`].
    pub restore_support: bool,
    /// Disc radius (pixels) grown back around the map. Matches reach to
    /// within a few pixels of a clone's rim, since a patch straddling it
    /// still finds its copy while most of its support lies inside, so this
    /// is smaller than the patch radius.
    pub support_radius: usize,
    /// Temporal half-extent (frames) of the matched patches.
    pub support_frames: usize,
}

impl Default for DlfConfig {
    fn default() -> Self {
        DlfConfig {
            window_half: 5,
            error_threshold: 1.5,
            min_region_size: 1000,
            detection_threshold: 20000,
            keep_fraction: 0.5,
            restore_support: true,
            support_radius: 5,
            support_frames: 0,
        }
    }
}

impl DlfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_half == 0 {
            return Err(Error::Config("window_half must be positive".into()));
        }
        if !(self.error_threshold > 0.0) {
            return Err(Error::Config("error_threshold must be positive".into()));
        }
        if self.min_region_size == 0 || self.detection_threshold == 0 {
            return Err(Error::Config(
                "min_region_size and detection_threshold must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.keep_fraction) {
            return Err(Error::Config("keep_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Parameters for a grid subsampled by `stride` in rows and columns:
    /// site counts shrink by `stride²` and the fitting window by `stride`
    /// (at least 3×3), so both keep their full-resolution extent.
    pub fn scaled_for_stride(&self, stride: usize) -> DlfConfig {
        let s2 = (stride * stride).max(1);
        DlfConfig {
            window_half: (self.window_half / stride.max(1)).max(1),
            min_region_size: (self.min_region_size / s2).max(1),
            detection_threshold: (self.detection_threshold / s2).max(1),
            ..self.clone()
        }
    }
}

/// Coherent sites: matched, with fitting error at most the threshold, in
/// 6-connected regions of at least `min_region_size` sites.
pub fn preliminary_map(error: &[f64], field: &OffsetField, cfg: &DlfConfig) -> Result<MaskVolume> {
    let d = field.dims();
    if error.len() != d.len() {
        return Err(Error::Config(format!(
            "{} error values for {} sites",
            error.len(),
            d.len()
        )));
    }
    let bits = error
        .iter()
        .enumerate()
        .map(|(i, &e)| field.is_matched(i) && e <= cfg.error_threshold)
        .collect();
    let mut map = MaskVolume::from_bits(d, bits)?;
    remove_small_regions(&mut map, cfg.min_region_size);
    Ok(map)
}

/// Clears 6-connected regions smaller than `min_size`.
pub fn remove_small_regions(map: &mut MaskVolume, min_size: usize) {
    let lab = RegionLabeling::new(map);
    let small: Vec<bool> = lab.regions().iter().map(|r| r.size < min_size).collect();
    for (bit, &l) in map.bits_mut().iter_mut().zip(lab.labels()) {
        if l != 0 && small[l as usize - 1] {
            *bit = false;
        }
    }
}

/// Nearest grid index of a full-resolution coordinate, ties rounding down.
#[inline]
pub(crate) fn nearest_site(coord: i64, stride: usize, len: usize) -> Option<usize> {
    if coord < 0 {
        return None;
    }
    let s = stride as i64;
    let k = ((coord + (s - 1) / 2) / s) as usize;
    (k < len).then_some(k)
}

/// Keeps the regions of `map` whose matches mostly land inside `map`,
/// iterating until no region is removed.
pub fn consistency_filter(
    map: &MaskVolume,
    field: &OffsetField,
    cfg: &DlfConfig,
) -> Result<MaskVolume> {
    let d = field.dims();
    if map.dims() != d {
        return Err(Error::DimMismatch {
            left: map.dims(),
            right: d,
        });
    }
    let stride = field.stride();
    let mut map = map.clone();
    loop {
        let lab = RegionLabeling::new(&map);
        let mut hits = vec![0usize; lab.len()];
        for i in 0..d.len() {
            let l = lab.label(i);
            if l == 0 {
                continue;
            }
            let inside = field.target(i).and_then(|(t, r, c)| {
                let t = usize::try_from(t).ok().filter(|&t| t < d.frames)?;
                let r = nearest_site(r, stride, d.rows)?;
                let c = nearest_site(c, stride, d.cols)?;
                Some(map.get(t, r, c))
            });
            if inside == Some(true) {
                hits[l as usize - 1] += 1;
            }
        }
        let drop: Vec<bool> = lab
            .regions()
            .iter()
            .zip(&hits)
            .map(|(reg, &h)| (h as f64) < cfg.keep_fraction * reg.size as f64)
            .collect();
        if !drop.iter().any(|&x| x) {
            return Ok(map);
        }
        for (bit, &l) in map.bits_mut().iter_mut().zip(lab.labels()) {
            if l != 0 && drop[l as usize - 1] {
                *bit = false;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub detected: bool,
    pub pixel_count: usize,
}

/// Forged iff the map holds strictly more than `detection_threshold` sites.
pub fn decide(map: &MaskVolume, cfg: &DlfConfig) -> Decision {
    let pixel_count = map.count();
    Decision {
        detected: pixel_count > cfg.detection_threshold,
        pixel_count,
    }
}

/// Binary dilation of a line by `h` on each side.
fn dilate_line(line: &[bool], h: usize, out: &mut [bool]) {
    let n = line.len();
    let mut prefix = vec![0u32; n + 1];
    for (i, &b) in line.iter().enumerate() {
        prefix[i + 1] = prefix[i] + b as u32;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(h);
        let hi = (i + h + 1).min(n);
        *o = prefix[hi] > prefix[lo];
    }
}

/// Recovers the extent of coherent regions eroded by the analysis.
///
/// A site passes the fitting test only when its whole window is coherent,
/// and a site is matched only when most of its patch is duplicated. The map
/// is therefore grown by the square fitting window (`window_half` sites),
/// then by a disc of `support_radius` pixels and by `support_frames` frames,
/// expressed in sites of a grid with the given `stride`.
pub fn restore_support(map: &MaskVolume, cfg: &DlfConfig, stride: usize) -> MaskVolume {
    let d = map.dims();
    let w = cfg.window_half;
    let radius = cfg.support_radius / stride.max(1);
    let mut out = MaskVolume::empty(d);
    let mut line = vec![false; d.rows.max(d.cols)];
    let mut tmp = vec![false; d.frame_len()];
    let mut square = vec![false; d.frame_len()];
    for t in map.active_frames() {
        let src = map.frame(t);
        for r in 0..d.rows {
            dilate_line(
                &src[r * d.cols..(r + 1) * d.cols],
                w,
                &mut tmp[r * d.cols..(r + 1) * d.cols],
            );
        }
        for c in 0..d.cols {
            let col: Vec<bool> = (0..d.rows).map(|r| tmp[r * d.cols + c]).collect();
            dilate_line(&col, w, &mut line[..d.rows]);
            for r in 0..d.rows {
                square[r * d.cols + c] = line[r];
            }
        }
        // Disc: each row offset dy contributes a horizontal dilation by the
        // half-chord at dy.
        let ri = radius as i64;
        let lo_t = t.saturating_sub(cfg.support_frames);
        let hi_t = (t + cfg.support_frames).min(d.frames - 1);
        for dy in -ri..=ri {
            let half = ((ri * ri - dy * dy) as f64).sqrt().floor() as usize;
            for r in 0..d.rows {
                let sr = r as i64 - dy;
                if sr < 0 || sr >= d.rows as i64 {
                    continue;
                }
                let sr = sr as usize;
                let row = &square[sr * d.cols..(sr + 1) * d.cols];
                if !row.iter().any(|&b| b) {
                    continue;
                }
                dilate_line(row, half, &mut line[..d.cols]);
                for tt in lo_t..=hi_t {
                    for (c, &on) in line[..d.cols].iter().enumerate() {
                        if on {
                            out.set(tt, r, c, true);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Fitting, thresholding, size filtering, the consistency check and, if
/// enabled, support restoration.
pub fn postprocess(field: &OffsetField, cfg: &DlfConfig) -> Result<MaskVolume> {
    cfg.validate()?;
    let err = dlf_error(field, cfg.window_half);
    let map = preliminary_map(&err, field, cfg)?;
    let map = consistency_filter(&map, field, cfg)?;
    Ok(if cfg.restore_support {
        restore_support(&map, cfg, field.stride())
    } else {
        map
    })
}
