//! Dense linear fitting: per-site affine regression of the offset field.
//!
//! For every site, each offset component is fit by `a + b*row + c*col` over
//! the surrounding `(2w+1)×(2w+1)` window of the same frame (truncated at the
//! borders, unmatched sites left out). The error is the mean squared residual
//! summed over the three components.

use rayon::prelude::*;

use crate::patchmatch::OffsetField;
use crate::video::Dims;

/// Inclusive window `[x - half, x + half]` clipped to `0..len`.
#[inline]
fn window(x: usize, half: usize, len: usize) -> (usize, usize) {
    (x.saturating_sub(half), (x + half).min(len - 1))
}

/// Integer least-squares residual from centered sums.
///
/// With `n` samples and (centered) cross terms scaled by `n`, returns the
/// residual sum of squares, exactly when the inputs are exact integers.
fn affine_rss(
    n: i128,
    cxx: i128,
    cxy: i128,
    cyy: i128,
    cxv: i128,
    cyv: i128,
    cvv: i128,
) -> Option<f64> {
    let det = cxx * cyy - cxy * cxy;
    if det <= 0 {
        return None;
    }
    let explained = cyy * cxv * cxv - 2 * cxy * cxv * cyv + cxx * cyv * cyv;
    let num = cvv * det - explained;
    Some(num.max(0) as f64 / (n * det) as f64)
}

/// Running 2D sums of one quantity over a frame.
struct Integral {
    cols: usize,
    data: Vec<i64>,
}

impl Integral {
    fn new(rows: usize, cols: usize, value: impl Fn(usize, usize) -> i64) -> Self {
        let w = cols + 1;
        let mut data = vec![0i64; (rows + 1) * w];
        for r in 0..rows {
            let mut run = 0i64;
            for c in 0..cols {
                run += value(r, c);
                data[(r + 1) * w + c + 1] = data[r * w + c + 1] + run;
            }
        }
        Integral { cols, data }
    }

    /// Sum over rows `r0..=r1`, cols `c0..=c1`.
    #[inline]
    fn sum(&self, (r0, r1): (usize, usize), (c0, c1): (usize, usize)) -> i64 {
        let w = self.cols + 1;
        self.data[(r1 + 1) * w + c1 + 1] - self.data[r0 * w + c1 + 1] - self.data[(r1 + 1) * w + c0]
            + self.data[r0 * w + c0]
    }
}

/// Fitting error of an offset field, per site; `f64::INFINITY` where the site
/// is unmatched or its window does not support an affine fit.
///
/// Offsets are integers, so all window sums are accumulated exactly with
/// integral images and the residual is formed in integer arithmetic.
pub fn dlf_error(field: &OffsetField, window_half: usize) -> Vec<f64> {
    let d = field.dims();
    let n = d.frame_len();
    let mut out = vec![f64::INFINITY; d.len()];
    out.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(t, out)| {
            let base = t * n;
            let matched = |r: usize, c: usize| field.is_matched(base + r * d.cols + c);
            let comp = |r: usize, c: usize, k: usize| -> i64 {
                let o = field.offset(base + r * d.cols + c);
                [o.dr, o.dc, o.dt][k] as i64
            };
            let w = |r: usize, c: usize| matched(r, c) as i64;
            let ones = Integral::new(d.rows, d.cols, w);
            let xs = Integral::new(d.rows, d.cols, |r, c| w(r, c) * c as i64);
            let ys = Integral::new(d.rows, d.cols, |r, c| w(r, c) * r as i64);
            let xx = Integral::new(d.rows, d.cols, |r, c| w(r, c) * (c * c) as i64);
            let xy = Integral::new(d.rows, d.cols, |r, c| w(r, c) * (r * c) as i64);
            let yy = Integral::new(d.rows, d.cols, |r, c| w(r, c) * (r * r) as i64);
            let per_comp: Vec<[Integral; 4]> = (0..3)
                .map(|k| {
                    let v = |r: usize, c: usize| if matched(r, c) { comp(r, c, k) } else { 0 };
                    [
                        Integral::new(d.rows, d.cols, v),
                        Integral::new(d.rows, d.cols, |r, c| v(r, c) * c as i64),
                        Integral::new(d.rows, d.cols, |r, c| v(r, c) * r as i64),
                        Integral::new(d.rows, d.cols, |r, c| v(r, c) * v(r, c)),
                    ]
                })
                .collect();
            for r in 0..d.rows {
                for c in 0..d.cols {
                    if !matched(r, c) {
                        continue;
                    }
                    let wr = window(r, window_half, d.rows);
                    let wc = window(c, window_half, d.cols);
                    let cnt = ones.sum(wr, wc) as i128;
                    if cnt < 3 {
                        continue;
                    }
                    // Coordinates relative to the window center keep sums small.
                    let (r0, c0) = (r as i128, c as i128);
                    let sx = xs.sum(wr, wc) as i128 - c0 * cnt;
                    let sy = ys.sum(wr, wc) as i128 - r0 * cnt;
                    let sxx =
                        xx.sum(wr, wc) as i128 - 2 * c0 * xs.sum(wr, wc) as i128 + c0 * c0 * cnt;
                    let syy =
                        yy.sum(wr, wc) as i128 - 2 * r0 * ys.sum(wr, wc) as i128 + r0 * r0 * cnt;
                    let sxy = xy.sum(wr, wc) as i128
                        - r0 * xs.sum(wr, wc) as i128
                        - c0 * ys.sum(wr, wc) as i128
                        + r0 * c0 * cnt;
                    let cxx = cnt * sxx - sx * sx;
                    let cyy = cnt * syy - sy * sy;
                    let cxy = cnt * sxy - sx * sy;
                    let mut total = 0.0;
                    let mut ok = true;
                    for ints in &per_comp {
                        let sv = ints[0].sum(wr, wc) as i128;
                        let sxv = ints[1].sum(wr, wc) as i128 - c0 * sv;
                        let syv = ints[2].sum(wr, wc) as i128 - r0 * sv;
                        let svv = ints[3].sum(wr, wc) as i128;
                        let cxv = cnt * sxv - sx * sv;
                        let cyv = cnt * syv - sy * sv;
                        let cvv = cnt * svv - sv * sv;
                        match affine_rss(cnt, cxx, cxy, cyy, cxv, cyv, cvv) {
                            Some(rss) => total += rss,
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok {
                        out[r * d.cols + c] = total / cnt as f64;
                    }
                }
            }
        });
    out
}

/// Fitting error of a real-valued vector field, computed directly: the fit
/// is solved per window and residuals are summed explicitly.
///
/// `present[i] == false` excludes a site. Slower than [`dlf_error`], but
/// works on non-integer fields.
pub fn dlf_error_values(
    dims: Dims,
    values: &[[f64; 3]],
    present: &[bool],
    window_half: usize,
) -> Vec<f64> {
    assert_eq!(values.len(), dims.len());
    assert_eq!(present.len(), dims.len());
    let mut out = vec![f64::INFINITY; dims.len()];
    let n = dims.frame_len();
    out.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(t, out)| {
            let base = t * n;
            let mut pts: Vec<(f64, f64, [f64; 3])> = Vec::new();
            for r in 0..dims.rows {
                for c in 0..dims.cols {
                    if !present[base + r * dims.cols + c] {
                        continue;
                    }
                    let (r0, r1) = window(r, window_half, dims.rows);
                    let (c0, c1) = window(c, window_half, dims.cols);
                    pts.clear();
                    for rr in r0..=r1 {
                        for cc in c0..=c1 {
                            let i = base + rr * dims.cols + cc;
                            if present[i] {
                                pts.push((cc as f64 - c as f64, rr as f64 - r as f64, values[i]));
                            }
                        }
                    }
                    if pts.len() < 3 {
                        continue;
                    }
                    let m = pts.len() as f64;
                    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
                    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
                    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
                    for p in &pts {
                        let (x, y) = (p.0 - mx, p.1 - my);
                        sxx += x * x;
                        sxy += x * y;
                        syy += y * y;
                    }
                    let det = sxx * syy - sxy * sxy;
                    if det <= 1e-12 {
                        continue;
                    }
                    let mut total = 0.0;
                    for k in 0..3 {
                        let mv = pts.iter().map(|p| p.2[k]).sum::<f64>() / m;
                        let (mut sxv, mut syv) = (0.0, 0.0);
                        for p in &pts {
                            let v = p.2[k] - mv;
                            sxv += (p.0 - mx) * v;
                            syv += (p.1 - my) * v;
                        }
                        let bx = (syy * sxv - sxy * syv) / det;
                        let by = (sxx * syv - sxy * sxv) / det;
                        total += pts
                            .iter()
                            .map(|p| {
                                let res = p.2[k] - mv - bx * (p.0 - mx) - by * (p.1 - my);
                                res * res
                            })
                            .sum::<f64>();
                    }
                    out[r * dims.cols + c] = total / m;
                }
            }
        });
    out
}
