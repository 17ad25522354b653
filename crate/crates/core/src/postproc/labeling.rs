use crate::patchmatch::OffsetField;
use crate::video::{Dims, MaskVolume};

/// Axis-aligned bounds, inclusive, in grid coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: (usize, usize, usize),
    pub max: (usize, usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub size: usize,
    pub bbox: BoundingBox,
    /// Mean `(dr, dc, dt)` of matched sites, when an offset field was supplied.
    pub mean_offset: Option<[f64; 3]>,
}

/// 6-connected components of a mask. Label 0 is background; region `k`
/// carries label `k + 1`.
#[derive(Clone, Debug)]
pub struct RegionLabeling {
    dims: Dims,
    labels: Vec<u32>,
    regions: Vec<Region>,
}

impl RegionLabeling {
    pub fn new(mask: &MaskVolume) -> Self {
        let d = mask.dims();
        let bits = mask.bits();
        let mut labels = vec![0u32; d.len()];
        let mut regions = Vec::new();
        let mut stack = Vec::new();
        for seed in 0..d.len() {
            if !bits[seed] || labels[seed] != 0 {
                continue;
            }
            let label = regions.len() as u32 + 1;
            let (t, r, c) = d.coords(seed);
            let mut region = Region {
                size: 0,
                bbox: BoundingBox {
                    min: (t, r, c),
                    max: (t, r, c),
                },
                mean_offset: None,
            };
            labels[seed] = label;
            stack.push(seed);
            while let Some(i) = stack.pop() {
                let (t, r, c) = d.coords(i);
                region.size += 1;
                let b = &mut region.bbox;
                b.min = (b.min.0.min(t), b.min.1.min(r), b.min.2.min(c));
                b.max = (b.max.0.max(t), b.max.1.max(r), b.max.2.max(c));
                let (t, r, c) = (t as i64, r as i64, c as i64);
                for (dt, dr, dc) in [
                    (-1, 0, 0),
                    (1, 0, 0),
                    (0, -1, 0),
                    (0, 1, 0),
                    (0, 0, -1),
                    (0, 0, 1),
                ] {
                    if let Some(j) = d.checked_index(t + dt, r + dr, c + dc) {
                        if bits[j] && labels[j] == 0 {
                            labels[j] = label;
                            stack.push(j);
                        }
                    }
                }
            }
            regions.push(region);
        }
        RegionLabeling {
            dims: d,
            labels,
            regions,
        }
    }

    /// Labels the mask and records each region's mean offset.
    pub fn with_offsets(mask: &MaskVolume, field: &OffsetField) -> Self {
        let mut lab = Self::new(mask);
        let mut sums = vec![([0.0f64; 3], 0usize); lab.regions.len()];
        for (i, &l) in lab.labels.iter().enumerate() {
            if l == 0 || !field.is_matched(i) {
                continue;
            }
            let o = field.offset(i);
            let s = &mut sums[l as usize - 1];
            s.0[0] += o.dr as f64;
            s.0[1] += o.dc as f64;
            s.0[2] += o.dt as f64;
            s.1 += 1;
        }
        for (region, (sum, n)) in lab.regions.iter_mut().zip(sums) {
            if n > 0 {
                region.mean_offset = Some(sum.map(|v| v / n as f64));
            }
        }
        lab
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, idx: usize) -> u32 {
        self.labels[idx]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(d: Dims, on: &[(usize, usize, usize)]) -> MaskVolume {
        let mut m = MaskVolume::empty(d);
        for &(t, r, c) in on {
            m.set(t, r, c, true);
        }
        m
    }

    #[test]
    fn six_connectivity_does_not_join_diagonals() {
        let d = Dims::new(2, 4, 4);
        let m = mask_from(d, &[(0, 0, 0), (0, 1, 1), (1, 1, 1), (1, 2, 1)]);
        let lab = RegionLabeling::new(&m);
        // (0,0,0) is alone; (0,1,1)-(1,1,1)-(1,2,1) are face-connected.
        assert_eq!(lab.len(), 2);
        let sizes: Vec<usize> = lab.regions().iter().map(|r| r.size).collect();
        assert_eq!(sizes, vec![1, 3]);
        assert_eq!(lab.regions()[1].bbox.min, (0, 1, 1));
        assert_eq!(lab.regions()[1].bbox.max, (1, 2, 1));
    }

    #[test]
    fn empty_mask_has_no_regions() {
        let lab = RegionLabeling::new(&MaskVolume::empty(Dims::new(3, 3, 3)));
        assert!(lab.is_empty());
        assert!(lab.labels().iter().all(|&l| l == 0));
    }
}
