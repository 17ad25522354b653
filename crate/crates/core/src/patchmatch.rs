//! Approximate nearest-neighbor field over a feature volume.
//!
//! Each source site looks for the most similar target feature at least
//! `min_offset` away (spatio-temporal Euclidean distance). The search
//! alternates a propagation pass, which tries the offsets of already visited
//! neighbors (zero-order) and their linear extrapolations (first-order) along
//! rows, columns, diagonals, antidiagonals and frames, with a random search
//! pass sampling cubes of exponentially growing radius around the current
//! match.
//!
//! Offsets are always expressed in full-resolution target coordinates, so a
//! field computed on a subsampled source grid can seed a finer one unchanged.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::video::Dims;
use crate::zernike::FeatureField;

/// Displacement `(dr, dc, dt)` from a source pixel to its match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Offset {
    pub dr: i32,
    pub dc: i32,
    pub dt: i32,
}

impl Offset {
    /// Sentinel carried by sites without an admissible match.
    pub const NONE: Offset = Offset {
        dr: i32::MIN,
        dc: i32::MIN,
        dt: i32::MIN,
    };

    pub const fn new(dr: i32, dc: i32, dt: i32) -> Self {
        Offset { dr, dc, dt }
    }

    #[inline]
    pub fn is_none(&self) -> bool {
        *self == Offset::NONE
    }

    #[inline]
    pub fn norm_sq(&self) -> i64 {
        let (a, b, c) = (self.dr as i64, self.dc as i64, self.dt as i64);
        a * a + b * b + c * c
    }

    /// `2 * self - far`, the first-order extrapolation.
    #[inline]
    fn extrapolate(self, far: Offset) -> Offset {
        Offset {
            dr: 2 * self.dr - far.dr,
            dc: 2 * self.dc - far.dc,
            dt: 2 * self.dt - far.dt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanDirection {
    Forward,
    Backward,
}

impl ScanDirection {
    fn for_iteration(it: usize) -> Self {
        if it.is_multiple_of(2) {
            ScanDirection::Forward
        } else {
            ScanDirection::Backward
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub iterations: usize,
    /// Random-search candidates per site and pass; candidate `i` is drawn
    /// from a cube of radius `2^(i-1)`.
    pub random_candidates: usize,
    pub min_offset: f64,
    pub seed: u64,
    pub random_search: bool,
    /// Number of source slabs searched independently within a pass.
    pub slabs: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            iterations: 8,
            random_candidates: 10,
            min_offset: 16.0,
            seed: 0,
            random_search: true,
            slabs: 1,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.random_candidates == 0 {
            return Err(Error::Config("random_candidates must be at least 1".into()));
        }
        if !(self.min_offset > 0.0) || !self.min_offset.is_finite() {
            return Err(Error::Config("min_offset must be positive".into()));
        }
        if self.slabs == 0 {
            return Err(Error::Config("slabs must be at least 1".into()));
        }
        if self.random_candidates > 31 {
            return Err(Error::Config("random_candidates must be at most 31".into()));
        }
        Ok(())
    }
}

/// Per-site offsets and cached match distances over a source grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetField {
    level: usize,
    stride: usize,
    dims: Dims,
    full_dims: Dims,
    offsets: Vec<Offset>,
    dist: Vec<f32>,
}

impl OffsetField {
    /// Field with every site unmatched.
    pub fn unmatched(level: usize, stride: usize, dims: Dims, full_dims: Dims) -> Self {
        OffsetField {
            level,
            stride,
            dims,
            full_dims,
            offsets: vec![Offset::NONE; dims.len()],
            dist: vec![f32::INFINITY; dims.len()],
        }
    }

    /// Field over the same grid as `src` with every site unmatched.
    pub fn unmatched_like(src: &FeatureField) -> Self {
        Self::unmatched(src.level(), src.stride(), src.dims(), src.full_dims())
    }

    /// Field with given offsets; distances are unknown until the next search.
    pub fn from_offsets(
        level: usize,
        stride: usize,
        dims: Dims,
        full_dims: Dims,
        offsets: Vec<Offset>,
    ) -> Result<Self> {
        if offsets.len() != dims.len() {
            return Err(Error::Config(format!(
                "{} offsets supplied for {}",
                offsets.len(),
                dims
            )));
        }
        Ok(OffsetField {
            level,
            stride,
            dims,
            full_dims,
            dist: vec![f32::INFINITY; dims.len()],
            offsets,
        })
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

    pub fn full_dims(&self) -> Dims {
        self.full_dims
    }

    #[inline]
    pub fn offset(&self, idx: usize) -> Offset {
        self.offsets[idx]
    }

    #[inline]
    pub fn distance(&self, idx: usize) -> f32 {
        self.dist[idx]
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn distances(&self) -> &[f32] {
        &self.dist
    }

    #[inline]
    pub fn is_matched(&self, idx: usize) -> bool {
        !self.offsets[idx].is_none()
    }

    /// Full-resolution coordinates of a site.
    #[inline]
    pub fn full_coords(&self, idx: usize) -> (usize, usize, usize) {
        let (t, k, l) = self.dims.coords(idx);
        (t, k * self.stride, l * self.stride)
    }

    /// Full-resolution coordinates of the match of a site.
    pub fn target(&self, idx: usize) -> Option<(i64, i64, i64)> {
        let o = self.offsets[idx];
        if o.is_none() {
            return None;
        }
        let (t, r, c) = self.full_coords(idx);
        Some((
            t as i64 + o.dt as i64,
            r as i64 + o.dr as i64,
            c as i64 + o.dc as i64,
        ))
    }

    pub fn matched_count(&self) -> usize {
        self.offsets.iter().filter(|o| !o.is_none()).count()
    }

    /// Sum of cached distances over matched sites.
    pub fn total_distance(&self) -> f64 {
        self.offsets
            .iter()
            .zip(&self.dist)
            .filter(|(o, _)| !o.is_none())
            .map(|(_, &d)| d as f64)
            .sum()
    }

    #[cfg(test)]
    pub(crate) fn set(&mut self, idx: usize, off: Offset, dist: f32) {
        self.offsets[idx] = off;
        self.dist[idx] = dist;
    }
}

#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Source and target features plus the admissibility rule for matches.
#[derive(Clone, Copy)]
pub struct SearchSpace<'a> {
    src: &'a FeatureField,
    tgt: &'a FeatureField,
    min_offset_sq: f64,
    active_frames: Option<&'a [bool]>,
}

impl<'a> SearchSpace<'a> {
    pub fn new(src: &'a FeatureField, tgt: &'a FeatureField, min_offset: f64) -> Result<Self> {
        if tgt.stride() != 1 {
            return Err(Error::Config(
                "target features must be at full resolution".into(),
            ));
        }
        if src.full_dims() != tgt.dims() {
            return Err(Error::DimMismatch {
                left: src.full_dims(),
                right: tgt.dims(),
            });
        }
        if src.feature_len() != tgt.feature_len() {
            return Err(Error::Config(format!(
                "feature lengths differ: {} vs {}",
                src.feature_len(),
                tgt.feature_len()
            )));
        }
        Ok(SearchSpace {
            src,
            tgt,
            min_offset_sq: min_offset * min_offset,
            active_frames: None,
        })
    }

    /// Restricts the search to source sites in frames flagged `true`.
    pub fn with_active_frames(mut self, frames: &'a [bool]) -> Result<Self> {
        if frames.len() != self.src.dims().frames {
            return Err(Error::Config(format!(
                "{} frame flags for {} frames",
                frames.len(),
                self.src.dims().frames
            )));
        }
        self.active_frames = Some(frames);
        Ok(self)
    }

    pub fn src(&self) -> &'a FeatureField {
        self.src
    }

    pub fn tgt(&self) -> &'a FeatureField {
        self.tgt
    }

    /// Whether a source site takes part in the search.
    #[inline]
    pub fn is_active(&self, src_idx: usize) -> bool {
        self.src.is_valid(src_idx)
            && self
                .active_frames
                .is_none_or(|f| f[src_idx / self.src.dims().frame_len()])
    }

    /// Target index of `off` from `src_idx`, if the match is admissible:
    /// inside the target grid, on a valid feature and far enough away.
    #[inline]
    pub fn admissible(&self, src_idx: usize, off: Offset) -> Option<usize> {
        if off.is_none() || (off.norm_sq() as f64) < self.min_offset_sq {
            return None;
        }
        let (t, r, c) = self.src.full_coords(src_idx);
        let ti = self.tgt.dims().checked_index(
            t as i64 + off.dt as i64,
            r as i64 + off.dr as i64,
            c as i64 + off.dc as i64,
        )?;
        self.tgt.is_valid(ti).then_some(ti)
    }

    #[inline]
    pub fn distance(&self, src_idx: usize, tgt_idx: usize) -> f32 {
        sq_dist(self.src.feature(src_idx), self.tgt.feature(tgt_idx))
    }

    /// Distance of an admissible offset.
    pub fn offset_distance(&self, src_idx: usize, off: Offset) -> Option<f32> {
        self.admissible(src_idx, off)
            .map(|ti| self.distance(src_idx, ti))
    }

    /// Candidate offsets for the propagation step at `site`, in evaluation
    /// order: the incumbent, zero-order predictors along row, column,
    /// diagonal, antidiagonal and frame, then first-order predictors along the
    /// same directions. Predictors come from neighbors already visited in
    /// `dir`; inadmissible candidates are dropped.
    pub fn predictor_set(
        &self,
        field: &OffsetField,
        site: usize,
        dir: ScanDirection,
    ) -> Vec<Offset> {
        let slab = Slab::whole(field.dims());
        let mut raw = Vec::with_capacity(11);
        raw.push(field.offset(site));
        let (t, r, c) = field.dims().coords(site);
        predictors(&slab, &field.offsets, (t, r, c), dir, &mut raw);
        raw.into_iter()
            .filter(|&o| self.admissible(site, o).is_some())
            .collect()
    }

    /// Recomputes the cached distances of `field`; inactive sites and
    /// inadmissible offsets become unmatched.
    pub fn refresh(&self, field: &mut OffsetField) -> Result<()> {
        self.check_field(field)?;
        for i in 0..field.offsets.len() {
            let d = if self.is_active(i) {
                self.offset_distance(i, field.offsets[i])
            } else {
                None
            };
            match d {
                Some(d) => field.dist[i] = d,
                None => {
                    field.offsets[i] = Offset::NONE;
                    field.dist[i] = f32::INFINITY;
                }
            }
        }
        Ok(())
    }

    fn check_field(&self, field: &OffsetField) -> Result<()> {
        if field.dims() != self.src.dims() || field.stride() != self.src.stride() {
            return Err(Error::DimMismatch {
                left: field.dims(),
                right: self.src.dims(),
            });
        }
        Ok(())
    }
}

const STEPS: [(i64, i64, i64); 5] = [
    (0, 0, -1),  // row
    (0, -1, 0),  // column
    (0, -1, -1), // diagonal
    (0, -1, 1),  // antidiagonal
    (-1, 0, 0),  // frame
];

/// Zero- then first-order predictors of the local site `(t, r, c)`.
fn predictors(
    slab: &Slab,
    offsets: &[Offset],
    (t, r, c): (usize, usize, usize),
    dir: ScanDirection,
    out: &mut Vec<Offset>,
) {
    let sign = match dir {
        ScanDirection::Forward => 1,
        ScanDirection::Backward => -1,
    };
    let at = |k: i64, step: (i64, i64, i64)| -> Option<Offset> {
        let i = slab.local_dims().checked_index(
            t as i64 + k * sign * step.0,
            r as i64 + k * sign * step.1,
            c as i64 + k * sign * step.2,
        )?;
        let o = offsets[i];
        (!o.is_none()).then_some(o)
    };
    for step in STEPS {
        if let Some(o) = at(1, step) {
            out.push(o);
        }
    }
    for step in STEPS {
        if let (Some(near), Some(far)) = (at(1, step), at(2, step)) {
            out.push(near.extrapolate(far));
        }
    }
}

/// Box of source sites searched by one worker.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Slab {
    t: (usize, usize),
    r: (usize, usize),
    c: (usize, usize),
}

impl Slab {
    fn whole(d: Dims) -> Self {
        Slab {
            t: (0, d.frames),
            r: (0, d.rows),
            c: (0, d.cols),
        }
    }

    fn local_dims(&self) -> Dims {
        Dims::new(
            self.t.1 - self.t.0,
            self.r.1 - self.r.0,
            self.c.1 - self.c.0,
        )
    }

    fn global_index(&self, d: Dims, local: usize) -> usize {
        let (t, r, c) = self.local_dims().coords(local);
        d.index(t + self.t.0, r + self.r.0, c + self.c.0)
    }
}

/// Splits the grid into `count` slabs along columns (0), rows (1) or frames (2).
fn partition(d: Dims, count: usize, orientation: usize) -> Vec<Slab> {
    let whole = Slab::whole(d);
    let extent = [d.cols, d.rows, d.frames][orientation % 3];
    let n = count.clamp(1, extent.max(1));
    (0..n)
        .map(|i| {
            let range = (i * extent / n, (i + 1) * extent / n);
            let mut s = whole.clone();
            match orientation % 3 {
                0 => s.c = range,
                1 => s.r = range,
                _ => s.t = range,
            }
            s
        })
        .collect()
}

/// Offsets and distances of one slab, in local raster order.
struct Local {
    slab: Slab,
    offsets: Vec<Offset>,
    dist: Vec<f32>,
}

impl Local {
    fn gather(field: &OffsetField, slab: Slab) -> Self {
        let n = slab.local_dims().len();
        let d = field.dims();
        let mut offsets = Vec::with_capacity(n);
        let mut dist = Vec::with_capacity(n);
        for i in 0..n {
            let g = slab.global_index(d, i);
            offsets.push(field.offsets[g]);
            dist.push(field.dist[g]);
        }
        Local {
            slab,
            offsets,
            dist,
        }
    }

    fn scatter(self, field: &mut OffsetField) {
        let d = field.dims();
        for (i, (o, dd)) in self.offsets.into_iter().zip(self.dist).enumerate() {
            let g = self.slab.global_index(d, i);
            field.offsets[g] = o;
            field.dist[g] = dd;
        }
    }

    /// Takes the whole field without copying.
    fn take(field: &mut OffsetField) -> Self {
        Local {
            slab: Slab::whole(field.dims()),
            offsets: std::mem::take(&mut field.offsets),
            dist: std::mem::take(&mut field.dist),
        }
    }

    fn put_back(self, field: &mut OffsetField) {
        field.offsets = self.offsets;
        field.dist = self.dist;
    }

    fn propagate(&mut self, space: &SearchSpace, dir: ScanDirection) {
        let d = space.src.dims();
        let ld = self.slab.local_dims();
        let n = ld.len();
        let mut cands = Vec::with_capacity(10);
        let mut tried: Vec<Offset> = Vec::with_capacity(11);
        for step in 0..n {
            let i = match dir {
                ScanDirection::Forward => step,
                ScanDirection::Backward => n - 1 - step,
            };
            let g = self.slab.global_index(d, i);
            if !space.is_active(g) {
                continue;
            }
            cands.clear();
            predictors(&self.slab, &self.offsets, ld.coords(i), dir, &mut cands);
            let mut best = self.offsets[i];
            let mut best_d = self.dist[i];
            tried.clear();
            tried.push(best);
            for &cand in &cands {
                if tried.contains(&cand) {
                    continue;
                }
                tried.push(cand);
                if let Some(ti) = space.admissible(g, cand) {
                    let dd = space.distance(g, ti);
                    if dd < best_d {
                        best = cand;
                        best_d = dd;
                    }
                }
            }
            self.offsets[i] = best;
            self.dist[i] = best_d;
        }
    }

    fn random_search(&mut self, space: &SearchSpace, candidates: usize, rng: &mut ChaCha8Rng) {
        let d = space.src.dims();
        let td = space.tgt.dims();
        let hi = [td.frames as i64 - 1, td.rows as i64 - 1, td.cols as i64 - 1];
        for i in 0..self.offsets.len() {
            let g = self.slab.global_index(d, i);
            let inc = self.offsets[i];
            if inc.is_none() || !space.is_active(g) {
                continue;
            }
            let (t, r, c) = space.src.full_coords(g);
            let base = [
                t as i64 + inc.dt as i64,
                r as i64 + inc.dr as i64,
                c as i64 + inc.dc as i64,
            ];
            let mut best = inc;
            let mut best_d = self.dist[i];
            for k in 0..candidates {
                let radius = 1i64 << k;
                let mut p = [0i64; 3];
                for a in 0..3 {
                    let lo = (base[a] - radius).max(0);
                    let up = (base[a] + radius).min(hi[a]);
                    p[a] = rng.gen_range(lo..=up);
                }
                if p == base {
                    continue;
                }
                let cand = Offset::new(
                    (p[1] - r as i64) as i32,
                    (p[2] - c as i64) as i32,
                    (p[0] - t as i64) as i32,
                );
                if let Some(ti) = space.admissible(g, cand) {
                    let dd = space.distance(g, ti);
                    if dd < best_d {
                        best = cand;
                        best_d = dd;
                    }
                }
            }
            self.offsets[i] = best;
            self.dist[i] = best_d;
        }
    }

    fn init(&mut self, space: &SearchSpace, valid_targets: &[usize], rng: &mut ChaCha8Rng) {
        let d = space.src.dims();
        for i in 0..self.offsets.len() {
            let g = self.slab.global_index(d, i);
            if !space.is_active(g) {
                self.offsets[i] = Offset::NONE;
                self.dist[i] = f32::INFINITY;
                continue;
            }
            let off = random_offset(space, g, valid_targets, rng);
            self.offsets[i] = off;
            self.dist[i] = space.offset_distance(g, off).unwrap_or(f32::INFINITY);
        }
    }

    /// Keeps admissible warm-start offsets and draws the rest at random.
    fn reseed(&mut self, space: &SearchSpace, valid_targets: &[usize], rng: &mut ChaCha8Rng) {
        let d = space.src.dims();
        for i in 0..self.offsets.len() {
            let g = self.slab.global_index(d, i);
            if !space.is_active(g) {
                self.offsets[i] = Offset::NONE;
                self.dist[i] = f32::INFINITY;
                continue;
            }
            match space.offset_distance(g, self.offsets[i]) {
                Some(dd) => self.dist[i] = dd,
                None => {
                    let off = random_offset(space, g, valid_targets, rng);
                    self.offsets[i] = off;
                    self.dist[i] = space.offset_distance(g, off).unwrap_or(f32::INFINITY);
                }
            }
        }
    }
}

const INIT_TRIES: usize = 64;

/// Uniform draw over admissible targets of `g`, or `Offset::NONE` if none exist.
fn random_offset(
    space: &SearchSpace,
    g: usize,
    valid_targets: &[usize],
    rng: &mut ChaCha8Rng,
) -> Offset {
    if valid_targets.is_empty() {
        return Offset::NONE;
    }
    let (t, r, c) = space.src.full_coords(g);
    let td = space.tgt.dims();
    let to_offset = |ti: usize| {
        let (tt, tr, tc) = td.coords(ti);
        Offset::new(
            tr as i32 - r as i32,
            tc as i32 - c as i32,
            tt as i32 - t as i32,
        )
    };
    for _ in 0..INIT_TRIES {
        let off = to_offset(valid_targets[rng.gen_range(0..valid_targets.len())]);
        if space.admissible(g, off).is_some() {
            return off;
        }
    }
    // Rejection keeps failing: enumerate what is left.
    let admissible: Vec<Offset> = valid_targets
        .iter()
        .map(|&ti| to_offset(ti))
        .filter(|&o| space.admissible(g, o).is_some())
        .collect();
    if admissible.is_empty() {
        Offset::NONE
    } else {
        admissible[rng.gen_range(0..admissible.len())]
    }
}

fn valid_targets(tgt: &FeatureField) -> Vec<usize> {
    (0..tgt.dims().len()).filter(|&i| tgt.is_valid(i)).collect()
}

/// Runs `work` on every slab of the partition, in parallel when there are
/// several, and writes the results back.
fn for_each_slab(
    field: &mut OffsetField,
    slabs: usize,
    orientation: usize,
    work: impl Fn(usize, &mut Local) + Sync,
) {
    let parts = partition(field.dims(), slabs, orientation);
    if parts.len() == 1 {
        let mut local = Local::take(field);
        work(0, &mut local);
        local.put_back(field);
        return;
    }
    let locals: Vec<Local> = parts
        .into_par_iter()
        .enumerate()
        .map(|(k, slab)| {
            let mut local = Local::gather(field, slab);
            work(k, &mut local);
            local
        })
        .collect();
    for local in locals {
        local.scatter(field);
    }
}

const PHASE_INIT: u64 = 1;
const PHASE_SEARCH: u64 = 2;

/// Random initial field: each active site gets a uniform admissible target.
pub fn init_offsets(space: &SearchSpace, cfg: &MatchConfig) -> Result<OffsetField> {
    cfg.validate()?;
    let mut field = OffsetField::unmatched_like(space.src);
    let targets = valid_targets(space.tgt);
    for_each_slab(&mut field, cfg.slabs, 0, |k, local| {
        let mut rng = rng::stream(cfg.seed, &[PHASE_INIT, k as u64]);
        local.init(space, &targets, &mut rng);
    });
    Ok(field)
}

/// One propagation pass over the whole field in raster (`Forward`) or
/// reverse-raster order.
pub fn propagate_pass(
    space: &SearchSpace,
    field: &mut OffsetField,
    dir: ScanDirection,
) -> Result<()> {
    space.check_field(field)?;
    let mut local = Local::take(field);
    local.propagate(space, dir);
    local.put_back(field);
    Ok(())
}

/// One random-search pass over the whole field.
pub fn random_search_pass(
    space: &SearchSpace,
    field: &mut OffsetField,
    cfg: &MatchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    space.check_field(field)?;
    cfg.validate()?;
    let mut local = Local::take(field);
    local.random_search(space, cfg.random_candidates, rng);
    local.put_back(field);
    Ok(())
}

/// Full search: random (or warm-started) initialization followed by
/// `cfg.iterations` rounds of propagation and random search, with the scan
/// direction reversed every round.
///
/// With several slabs, round `i` partitions the source along columns, rows
/// or frames (`(i / 2) % 3`), so boundaries move after each forward/backward
/// pair. Results are reproducible for a given seed and slab count.
pub fn run(
    space: &SearchSpace,
    cfg: &MatchConfig,
    initial: Option<OffsetField>,
) -> Result<OffsetField> {
    cfg.validate()?;
    let mut field = match initial {
        None => init_offsets(space, cfg)?,
        Some(mut f) => {
            space.check_field(&f)?;
            let targets = valid_targets(space.tgt);
            for_each_slab(&mut f, cfg.slabs, 0, |k, local| {
                let mut rng = rng::stream(cfg.seed, &[PHASE_INIT, k as u64]);
                local.reseed(space, &targets, &mut rng);
            });
            f
        }
    };
    for it in 0..cfg.iterations {
        let dir = ScanDirection::for_iteration(it);
        for_each_slab(&mut field, cfg.slabs, it / 2, |k, local| {
            local.propagate(space, dir);
            if cfg.random_search {
                let mut rng = rng::stream(cfg.seed, &[PHASE_SEARCH, it as u64, k as u64]);
                local.random_search(space, cfg.random_candidates, &mut rng);
            }
        });
    }
    Ok(field)
}

/// Random-search radius of candidate `i` (1-based).
pub fn search_radius(i: usize) -> i64 {
    1i64 << (i - 1)
}

const NNF_MAGIC: &[u8; 4] = b"VCNN";

/// Writes an offset-field dump: magic, level, T, H, W (little-endian u32),
/// then per site `dr, dc, dt` as i32 and the distance as f32.
pub fn write_nnf_dump(field: &OffsetField, path: &Path) -> Result<()> {
    let d = field.dims();
    let mut out = Vec::with_capacity(20 + d.len() * 16);
    out.extend_from_slice(NNF_MAGIC);
    for v in [field.level, d.frames, d.rows, d.cols] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for (o, dd) in field.offsets.iter().zip(&field.dist) {
        for v in [o.dr, o.dc, o.dt] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&dd.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Contents of an offset-field dump.
#[derive(Clone, Debug, PartialEq)]
pub struct NnfDump {
    pub level: usize,
    pub dims: Dims,
    pub offsets: Vec<Offset>,
    pub distances: Vec<f32>,
}

pub fn read_nnf_dump(path: &Path) -> Result<NnfDump> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Dump {
        path: path.into(),
        message: m.into(),
    };
    if bytes.len() < 20 || &bytes[..4] != NNF_MAGIC {
        return Err(bad("missing offset-field header"));
    }
    let word = |b: &[u8], i: usize| u32::from_le_bytes(b[4 * i..4 * i + 4].try_into().unwrap());
    let head = &bytes[4..20];
    let level = word(head, 0) as usize;
    let dims = Dims::new(
        word(head, 1) as usize,
        word(head, 2) as usize,
        word(head, 3) as usize,
    );
    let body = &bytes[20..];
    if body.len() != dims.len() * 16 {
        return Err(bad("payload size does not match header"));
    }
    let mut offsets = Vec::with_capacity(dims.len());
    let mut distances = Vec::with_capacity(dims.len());
    for rec in body.chunks_exact(16) {
        let w = |i: usize| word(rec, i);
        offsets.push(Offset::new(w(0) as i32, w(1) as i32, w(2) as i32));
        distances.push(f32::from_bits(w(3)));
    }
    Ok(NnfDump {
        level,
        dims,
        offsets,
        distances,
    })
}

impl NnfDump {
    pub fn of(field: &OffsetField) -> Self {
        NnfDump {
            level: field.level,
            dims: field.dims,
            offsets: field.offsets.clone(),
            distances: field.dist.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::Video;
    use crate::zernike::{extract_field, FeatureConfig};

    /// Feature field where every site is valid and features are scalars.
    fn scalar_field(d: Dims, f: impl Fn(usize, usize, usize) -> f32) -> FeatureField {
        let mut data = Vec::with_capacity(d.len());
        for i in 0..d.len() {
            let (t, r, c) = d.coords(i);
            data.push(f(t, r, c));
        }
        FeatureField::from_parts(0, 1, d, d, 1, data, vec![true; d.len()])
    }

    fn field_with(d: Dims, f: impl Fn(usize, usize, usize) -> Offset) -> OffsetField {
        let offsets = (0..d.len())
            .map(|i| {
                let (t, r, c) = d.coords(i);
                f(t, r, c)
            })
            .collect();
        OffsetField::from_offsets(0, 1, d, d, offsets).unwrap()
    }

    #[test]
    fn constant_field_gives_identical_candidates() {
        let d = Dims::new(3, 10, 10);
        let feats = scalar_field(d, |_, _, _| 0.0);
        let space = SearchSpace::new(&feats, &feats, 1.0).unwrap();
        let field = field_with(d, |_, _, _| Offset::new(5, 0, 0));
        let site = d.index(2, 4, 4);
        let c = space.predictor_set(&field, site, ScanDirection::Forward);
        assert_eq!(c.len(), 11);
        assert!(c.iter().all(|&o| o == Offset::new(5, 0, 0)));
    }

    #[test]
    fn first_order_predictor_follows_linear_field() {
        let d = Dims::new(1, 20, 20);
        let feats = scalar_field(d, |_, _, _| 0.0);
        let space = SearchSpace::new(&feats, &feats, 1.0).unwrap();
        // dr grows with the row; the column predictor (r-1) extrapolates it.
        let field = field_with(d, |_, r, _| Offset::new(r as i32, 0, 0));
        let site = d.index(0, 6, 3);
        let c = space.predictor_set(&field, site, ScanDirection::Forward);
        // zero-order: row (6), column (5), diag (5), antidiag (5);
        // first-order: row (6), column (6), diag (6), antidiag (6).
        let first_order = &c[c.len() - 4..];
        assert!(first_order.iter().all(|&o| o == Offset::new(6, 0, 0)));
    }

    #[test]
    fn boundary_sites_lose_predictors() {
        let d = Dims::new(2, 10, 10);
        let feats = scalar_field(d, |_, _, _| 0.0);
        let space = SearchSpace::new(&feats, &feats, 1.0).unwrap();
        let field = field_with(d, |_, _, _| Offset::new(0, 3, 0));
        let n = |t, r, c, dir| space.predictor_set(&field, d.index(t, r, c), dir).len();
        // Interior of frame 1: incumbent + 5 zero-order + 4 first-order (frame needs t-2).
        assert_eq!(n(1, 5, 5, ScanDirection::Forward), 10);
        // First frame: no frame predictors.
        assert_eq!(n(0, 5, 5, ScanDirection::Forward), 9);
        // First row: column, diagonal, antidiagonal absent.
        assert_eq!(n(0, 0, 5, ScanDirection::Forward), 3);
        // First column: row and diagonal absent.
        assert_eq!(n(0, 5, 0, ScanDirection::Forward), 5);
        // Backward scan looks the other way: on the last row and frame only
        // the row direction remains.
        assert_eq!(n(1, 9, 5, ScanDirection::Backward), 3);
    }

    #[test]
    fn inadmissible_predictors_are_dropped() {
        let d = Dims::new(1, 10, 10);
        let feats = scalar_field(d, |_, _, _| 0.0);
        let space = SearchSpace::new(&feats, &feats, 4.0).unwrap();
        let field = field_with(d, |_, _, _| Offset::new(2, 0, 0));
        assert!(space
            .predictor_set(&field, d.index(0, 5, 5), ScanDirection::Forward)
            .is_empty());
    }

    #[test]
    fn init_respects_min_offset_and_is_deterministic() {
        let d = Dims::new(2, 20, 20);
        let feats = scalar_field(d, |t, r, c| (t * 400 + r * 20 + c) as f32);
        let space = SearchSpace::new(&feats, &feats, 16.0).unwrap();
        let cfg = MatchConfig::default();
        let a = init_offsets(&space, &cfg).unwrap();
        let b = init_offsets(&space, &cfg).unwrap();
        assert_eq!(a, b);
        for i in 0..d.len() {
            if a.is_matched(i) {
                assert!(a.offset(i).norm_sq() >= 256);
                let ti = space.admissible(i, a.offset(i)).unwrap();
                assert_eq!(a.distance(i), space.distance(i, ti));
            }
        }
        assert!(a.matched_count() > d.len() / 2);
    }

    #[test]
    fn nothing_admissible_means_unmatched() {
        let d = Dims::new(2, 20, 20);
        let feats = scalar_field(d, |_, _, _| 0.0);
        let space = SearchSpace::new(&feats, &feats, 40.0).unwrap();
        let f = init_offsets(&space, &MatchConfig::default()).unwrap();
        assert_eq!(f.matched_count(), 0);
        assert!(f.distances().iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn search_radii_double() {
        let radii: Vec<i64> = (1..=10).map(search_radius).collect();
        assert_eq!(radii, vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512]);
        assert!(2 * radii[9] >= 1024);
    }

    #[test]
    fn optimal_field_is_a_fixed_point() {
        let d = Dims::new(1, 12, 40);
        // Feature depends only on column parity; offset (0, 20, 0) is exact.
        let feats = scalar_field(d, |_, _, c| (c % 20) as f32);
        let space = SearchSpace::new(&feats, &feats, 16.0).unwrap();
        let mut field = field_with(d, |_, _, c| {
            if c < 20 {
                Offset::new(0, 20, 0)
            } else {
                Offset::new(0, -20, 0)
            }
        });
        for i in 0..d.len() {
            let dd = space.offset_distance(i, field.offset(i)).unwrap();
            field.set(i, field.offset(i), dd);
        }
        let before = field.clone();
        propagate_pass(&space, &mut field, ScanDirection::Forward).unwrap();
        propagate_pass(&space, &mut field, ScanDirection::Backward).unwrap();
        assert_eq!(field, before);
    }

    #[test]
    fn slab_partition_covers_grid() {
        let d = Dims::new(5, 7, 9);
        for orientation in 0..3 {
            for count in [1, 2, 3, 8, 20] {
                let parts = partition(d, count, orientation);
                let total: usize = parts.iter().map(|s| s.local_dims().len()).sum();
                assert_eq!(total, d.len());
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let d = Dims::new(2, 4, 5);
        let mut f = field_with(d, |t, r, c| {
            Offset::new(r as i32 - 9, c as i32 * 3, t as i32)
        });
        for i in 0..d.len() {
            f.set(i, f.offset(i), i as f32 * 0.5);
        }
        f.set(3, Offset::NONE, f32::INFINITY);
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("nnf.bin");
        write_nnf_dump(&f, &p).unwrap();
        assert_eq!(read_nnf_dump(&p).unwrap(), NnfDump::of(&f));
    }

    #[test]
    fn rejects_mismatched_fields() {
        let v = Video::filled(Dims::new(1, 20, 20), 0.5);
        let a = extract_field(&v, &FeatureConfig::default()).unwrap();
        let v2 = Video::filled(Dims::new(1, 20, 21), 0.5);
        let b = extract_field(&v2, &FeatureConfig::default()).unwrap();
        assert!(SearchSpace::new(&a, &b, 16.0).is_err());
    }
}
