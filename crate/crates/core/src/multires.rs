//! Single-level and three-level detection pipelines.
//!
//! The fast pipeline searches matches for a sparse subset of source sites
//! (one every `S` pixels, then one every `S²`) against the full-resolution
//! target, refines the coarse field, and returns to full resolution only in
//! the frames where the coarse map found something.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchmatch::{self, MatchConfig, OffsetField, SearchSpace};
use crate::postproc::{self, Decision, DlfConfig};
use crate::video::{Dims, MaskVolume, Video};
use crate::zernike::{extract_field, FeatureConfig, FeatureField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PyramidConfig {
    /// Spatial subsampling step between consecutive levels.
    pub stride: usize,
    /// PatchMatch rounds on the warm-started level-1 field.
    pub level1_iterations: usize,
    /// Propagation-only rounds at full resolution.
    pub refine_iterations: usize,
    /// Frames added on each side of every span flagged at level 1.
    pub voi_margin: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            stride: 4,
            level1_iterations: 16,
            refine_iterations: 2,
            voi_margin: 5,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride < 2 {
            return Err(Error::Config("pyramid stride must be at least 2".into()));
        }
        if self.level1_iterations == 0 || self.refine_iterations == 0 {
            return Err(Error::Config(
                "pyramid iteration counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the detectors need besides the video.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub features: FeatureConfig,
    pub matching: MatchConfig,
    pub dlf: DlfConfig,
    pub pyramid: PyramidConfig,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.matching.validate()?;
        self.dlf.validate()?;
        self.pyramid.validate()
    }
}

/// Frames selected for full-resolution refinement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VolumeOfInterest {
    frames: Vec<bool>,
}

impl VolumeOfInterest {
    /// Frames holding any site of `mask`, dilated by `margin` on both sides.
    pub fn from_mask(mask: &MaskVolume, margin: usize) -> Self {
        let n = mask.dims().frames;
        let mut frames = vec![false; n];
        for t in mask.active_frames() {
            let lo = t.saturating_sub(margin);
            let hi = (t + margin).min(n - 1);
            frames[lo..=hi].iter_mut().for_each(|f| *f = true);
        }
        VolumeOfInterest { frames }
    }

    pub fn flags(&self) -> &[bool] {
        &self.frames
    }

    pub fn contains(&self, t: usize) -> bool {
        self.frames.get(t).copied().unwrap_or(false)
    }

    pub fn frame_indices(&self) -> Vec<usize> {
        (0..self.frames.len()).filter(|&t| self.frames[t]).collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.frames.iter().any(|&f| f)
    }
}

fn grid_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Keeps every `s`-th site along rows and columns, all frames. Feature
/// vectors are copied, so level-`k` site `(t, i, j)` carries the level-0
/// feature at `(t, i * stride, j * stride)`.
pub fn downsample(field: &FeatureField, s: usize) -> Result<FeatureField> {
    if s == 0 {
        return Err(Error::Config("downsampling step must be positive".into()));
    }
    let d = field.dims();
    let nd = Dims::new(d.frames, grid_len(d.rows, s), grid_len(d.cols, s));
    let len = field.feature_len();
    let mut data = Vec::with_capacity(nd.len() * len);
    let mut valid = Vec::with_capacity(nd.len());
    for t in 0..nd.frames {
        for k in 0..nd.rows {
            for l in 0..nd.cols {
                let i = d.index(t, k * s, l * s);
                data.extend_from_slice(field.feature(i));
                valid.push(field.is_valid(i));
            }
        }
    }
    Ok(FeatureField::from_parts(
        field.level() + 1,
        field.stride() * s,
        nd,
        field.full_dims(),
        len,
        data,
        valid,
    ))
}

/// Nearest coarse index of a fine index, ties rounding down, clamped to the
/// coarse grid.
#[inline]
fn coarse_index(i: usize, s: usize, len: usize) -> usize {
    ((i + (s - 1) / 2) / s).min(len - 1)
}

/// Finer field (grid `fine_dims`, stride `field.stride() / s`) where every
/// site inherits the offset of its nearest coarse site. Offsets point into
/// the full-resolution target at every level, so they copy unchanged;
/// distances are left unknown.
pub fn upsample_field(field: &OffsetField, s: usize, fine_dims: Dims) -> Result<OffsetField> {
    let d = field.dims();
    if s == 0 || !field.stride().is_multiple_of(s) {
        return Err(Error::Config(format!(
            "cannot refine stride {} by {s}",
            field.stride()
        )));
    }
    if fine_dims.frames != d.frames
        || grid_len(fine_dims.rows, s) != d.rows
        || grid_len(fine_dims.cols, s) != d.cols
    {
        return Err(Error::DimMismatch {
            left: fine_dims,
            right: d,
        });
    }
    let mut offsets = Vec::with_capacity(fine_dims.len());
    for t in 0..fine_dims.frames {
        for r in 0..fine_dims.rows {
            let k = coarse_index(r, s, d.rows);
            for c in 0..fine_dims.cols {
                let l = coarse_index(c, s, d.cols);
                offsets.push(field.offset(d.index(t, k, l)));
            }
        }
    }
    OffsetField::from_offsets(
        field.level().saturating_sub(1),
        field.stride() / s,
        fine_dims,
        field.full_dims(),
        offsets,
    )
}

/// Nearest-site upsampling of a coarse mask onto `fine_dims`.
pub fn upsample_mask(mask: &MaskVolume, s: usize, fine_dims: Dims) -> Result<MaskVolume> {
    let d = mask.dims();
    if s == 0
        || fine_dims.frames != d.frames
        || grid_len(fine_dims.rows, s) != d.rows
        || grid_len(fine_dims.cols, s) != d.cols
    {
        return Err(Error::DimMismatch {
            left: fine_dims,
            right: d,
        });
    }
    let mut out = MaskVolume::empty(fine_dims);
    for t in mask.active_frames() {
        for r in 0..fine_dims.rows {
            let k = coarse_index(r, s, d.rows);
            for c in 0..fine_dims.cols {
                if mask.get(t, k, coarse_index(c, s, d.cols)) {
                    out.set(t, r, c, true);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Outcome of a detector run.
#[derive(Clone, Debug)]
pub struct Detection {
    /// Full-resolution detection map.
    pub map: MaskVolume,
    pub decision: Decision,
    /// Final full-resolution offset field; sites never searched are
    /// unmatched.
    pub field: OffsetField,
    /// Level-1 map (fast pipeline only).
    pub coarse_map: Option<MaskVolume>,
    /// Frames refined at full resolution (fast pipeline only).
    pub voi: Option<VolumeOfInterest>,
    pub timings: Vec<StageTiming>,
}

impl Detection {
    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.seconds).sum()
    }
}

struct Clock {
    timings: Vec<StageTiming>,
    last: Instant,
}

impl Clock {
    fn start() -> Self {
        Clock {
            timings: Vec::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

/// Matching seed for a pyramid level, so levels draw independent streams.
fn level_config(cfg: &MatchConfig, level: u64) -> MatchConfig {
    MatchConfig {
        seed: cfg.seed ^ level.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        ..cfg.clone()
    }
}

/// Full-resolution search of every site against every other, followed by
/// post-processing.
pub fn detect_basic(video: &Video, cfg: &DetectorConfig) -> Result<Detection> {
    cfg.validate()?;
    let mut clock = Clock::start();
    let f0 = extract_field(video, &cfg.features)?;
    clock.lap("features");
    basic_stages(&f0, cfg, clock)
}

/// [`detect_basic`] on precomputed level-0 features.
pub fn detect_basic_with(f0: &FeatureField, cfg: &DetectorConfig) -> Result<Detection> {
    cfg.validate()?;
    basic_stages(f0, cfg, Clock::start())
}

fn basic_stages(f0: &FeatureField, cfg: &DetectorConfig, mut clock: Clock) -> Result<Detection> {
    let space = SearchSpace::new(f0, f0, cfg.matching.min_offset)?;
    let field = patchmatch::run(&space, &level_config(&cfg.matching, 0), None)?;
    clock.lap("search");
    let map = postproc::postprocess(&field, &cfg.dlf)?;
    let decision = postproc::decide(&map, &cfg.dlf);
    clock.lap("postprocess");
    Ok(Detection {
        map,
        decision,
        field,
        coarse_map: None,
        voi: None,
        timings: clock.timings,
    })
}

/// Three-level pipeline: coarse search on sites subsampled by `S²`, warm
/// refinement and a first detection map on sites subsampled by `S`, then
/// propagation-only refinement at full resolution restricted to the frames
/// flagged by that map.
pub fn detect_multires(video: &Video, cfg: &DetectorConfig) -> Result<Detection> {
    cfg.validate()?;
    let mut clock = Clock::start();
    let f0 = extract_field(video, &cfg.features)?;
    clock.lap("features");
    multires_stages(&f0, cfg, clock)
}

/// [`detect_multires`] on precomputed level-0 features.
pub fn detect_multires_with(f0: &FeatureField, cfg: &DetectorConfig) -> Result<Detection> {
    cfg.validate()?;
    multires_stages(f0, cfg, Clock::start())
}

fn multires_stages(f0: &FeatureField, cfg: &DetectorConfig, mut clock: Clock) -> Result<Detection> {
    let s = cfg.pyramid.stride;
    let f1 = downsample(f0, s)?;
    let f2 = downsample(&f1, s)?;
    if f2.valid_count() == 0 {
        return Err(Error::TooSmall {
            dims: f0.dims(),
            reason: format!("no valid coarse sites at stride {}", s * s),
        });
    }

    let space2 = SearchSpace::new(&f2, f0, cfg.matching.min_offset)?;
    let nn2 = patchmatch::run(&space2, &level_config(&cfg.matching, 2), None)?;
    clock.lap("level2_search");

    let space1 = SearchSpace::new(&f1, f0, cfg.matching.min_offset)?;
    let warm1 = upsample_field(&nn2, s, f1.dims())?;
    let cfg1 = MatchConfig {
        iterations: cfg.pyramid.level1_iterations,
        ..level_config(&cfg.matching, 1)
    };
    let nn1 = patchmatch::run(&space1, &cfg1, Some(warm1))?;
    clock.lap("level1_search");
    let dlf1 = cfg.dlf.scaled_for_stride(s);
    let m1 = postproc::postprocess(&nn1, &dlf1)?;
    clock.lap("level1_postprocess");

    let full = f0.dims();
    if m1.count() == 0 {
        return Ok(Detection {
            map: MaskVolume::empty(full),
            decision: Decision {
                detected: false,
                pixel_count: 0,
            },
            field: OffsetField::unmatched_like(f0),
            coarse_map: Some(m1),
            voi: Some(VolumeOfInterest::from_mask(&MaskVolume::empty(full), 0)),
            timings: clock.timings,
        });
    }

    let voi = VolumeOfInterest::from_mask(&m1, cfg.pyramid.voi_margin);
    let warm0 = upsample_field(&nn1, s, full)?;
    let space0 =
        SearchSpace::new(f0, f0, cfg.matching.min_offset)?.with_active_frames(voi.flags())?;
    let cfg0 = MatchConfig {
        iterations: cfg.pyramid.refine_iterations,
        random_search: false,
        ..level_config(&cfg.matching, 0)
    };
    let field = patchmatch::run(&space0, &cfg0, Some(warm0))?;
    clock.lap("level0_search");
    let map = postproc::postprocess(&field, &cfg.dlf)?;
    let decision = postproc::decide(&map, &cfg.dlf);
    clock.lap("level0_postprocess");
    Ok(Detection {
        map,
        decision,
        field,
        coarse_map: Some(m1),
        voi: Some(voi),
        timings: clock.timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchmatch::Offset;
    use crate::zernike::FeatureMode;

    fn ramp_field(d: Dims) -> FeatureField {
        let mut data = Vec::new();
        for i in 0..d.len() {
            let (t, r, c) = d.coords(i);
            data.extend_from_slice(&[t as f32, r as f32, c as f32]);
        }
        FeatureField::from_parts(0, 1, d, d, 3, data, vec![true; d.len()])
    }

    #[test]
    fn downsample_keeps_every_sth_site() {
        let f = ramp_field(Dims::new(3, 64, 64));
        let f1 = downsample(&f, 4).unwrap();
        assert_eq!(f1.dims(), Dims::new(3, 16, 16));
        assert_eq!(f1.stride(), 4);
        assert_eq!(f1.feature(f1.dims().index(2, 5, 7)), &[2.0, 20.0, 28.0]);
        let f2 = downsample(&f1, 4).unwrap();
        assert_eq!(f2.dims(), Dims::new(3, 4, 4));
        assert_eq!(f2.stride(), 16);
        assert_eq!(f2.level(), 2);
        assert_eq!(f2.feature(f2.dims().index(1, 3, 2)), &[1.0, 48.0, 32.0]);
        assert_eq!(f2.full_coords(f2.dims().index(1, 3, 2)), (1, 48, 32));
    }

    #[test]
    fn upsample_uses_nearest_coarse_site() {
        let d = Dims::new(2, 4, 5);
        let full = Dims::new(2, 16, 20);
        let offs = (0..d.len()).map(|i| Offset::new(i as i32, 0, 0)).collect();
        let coarse = OffsetField::from_offsets(1, 4, d, full, offs).unwrap();
        let fine = upsample_field(&coarse, 4, full).unwrap();
        assert_eq!(fine.stride(), 1);
        assert_eq!(fine.level(), 0);
        for (k, l) in [(0, 0), (1, 2), (3, 4)] {
            let want = coarse.offset(d.index(1, k, l));
            assert_eq!(fine.offset(full.index(1, 4 * k + 1, 4 * l + 2)), want);
        }
        // 4k + 3 rounds up to the next coarse site.
        assert_eq!(
            fine.offset(full.index(0, 3, 0)),
            coarse.offset(d.index(0, 1, 0))
        );
        // Beyond the last coarse site the index clamps.
        assert_eq!(
            fine.offset(full.index(0, 15, 19)),
            coarse.offset(d.index(0, 3, 4))
        );
    }

    #[test]
    fn constant_field_upsamples_to_constant() {
        let d = Dims::new(1, 3, 3);
        let full = Dims::new(1, 10, 12);
        let coarse =
            OffsetField::from_offsets(1, 4, d, full, vec![Offset::new(5, -7, 0); 9]).unwrap();
        let fine = upsample_field(&coarse, 4, full).unwrap();
        assert!(fine.offsets().iter().all(|&o| o == Offset::new(5, -7, 0)));
    }

    #[test]
    fn voi_dilates_and_keeps_flagged_frames() {
        let d = Dims::new(20, 4, 4);
        let mut m = MaskVolume::empty(d);
        m.set(3, 1, 1, true);
        m.set(17, 0, 0, true);
        let voi = VolumeOfInterest::from_mask(&m, 2);
        assert_eq!(voi.frame_indices(), vec![1, 2, 3, 4, 5, 15, 16, 17, 18, 19]);
        for t in m.active_frames() {
            assert!(voi.contains(t));
        }
        assert!(VolumeOfInterest::from_mask(&MaskVolume::empty(d), 5).is_empty());
    }

    #[test]
    fn mask_upsampling_marks_nearest_sites() {
        let d = Dims::new(1, 2, 2);
        let mut m = MaskVolume::empty(d);
        m.set(0, 1, 0, true);
        let up = upsample_mask(&m, 4, Dims::new(1, 8, 8)).unwrap();
        assert!(up.get(0, 3, 0) && up.get(0, 7, 2) && !up.get(0, 2, 0));
    }

    #[test]
    fn pristine_noise_short_circuits() {
        let v = crate::forgegen::synth_texture(
            Dims::new(5, 48, 48),
            crate::forgegen::TextureKind::GaussianBlurNoise {
                sigma: 1.5,
                temporal_sigma: 1.0,
            },
            3,
        )
        .unwrap();
        let cfg = DetectorConfig {
            features: FeatureConfig::with_mode(FeatureMode::TwoD),
            ..Default::default()
        };
        let det = detect_multires(&v, &cfg).unwrap();
        assert!(!det.decision.detected);
        assert_eq!(det.coarse_map.unwrap().count(), 0);
        assert!(det.voi.unwrap().is_empty());
        assert!(det.timings.iter().all(|t| !t.stage.starts_with("level0")));
    }

    #[test]
    fn invalid_pyramid_is_rejected() {
        let p = PyramidConfig {
            stride: 1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
