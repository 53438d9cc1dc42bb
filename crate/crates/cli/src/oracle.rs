//! Brute-force registration oracle.
//!
//! Every grid point `(θ, dx, dy)` is scored by the normalized cross-correlation
//! between the moving image and the reference carried into the moving frame,
//! restricted to their common valid support. For a fixed θ the integer-shift
//! scores are all obtained at once from masked correlations evaluated with
//! FFTs, so the search is exhaustive without re-warping per shift.

use histair::estimate::RigidTransform;
use histair::warp::{sample, Interpolation};
use histair::{GrayImage, HistairError, Result};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Shifts whose overlap covers less than this fraction of the moving frame are skipped.
pub const MIN_OVERLAP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_step: f64,
    /// Shifts span `-shift_range..=shift_range` on both axes.
    pub shift_range: usize,
    /// Whole pixels.
    pub shift_step: usize,
}

impl OracleGrid {
    pub fn thetas(&self) -> Result<Vec<f64>> {
        let ordered = self.theta_step > 0.0 && self.theta_max >= self.theta_min;
        if !ordered || self.shift_step == 0 {
            return Err(HistairError::InvalidConfig(format!(
                "empty oracle grid: {self:?}"
            )));
        }
        let count =
            ((self.theta_max - self.theta_min) / self.theta_step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|k| self.theta_min + k as f64 * self.theta_step)
            .collect())
    }

    fn shifts(&self) -> Vec<i64> {
        let r = (self.shift_range / self.shift_step) as i64;
        (-r..=r).map(|k| k * self.shift_step as i64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub transform: RigidTransform,
    pub ncc: f64,
    pub evaluated: usize,
}

type C64 = Complex<f64>;

struct Fft2 {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(w: usize, h: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            w,
            h,
            row_fwd: planner.plan_fft_forward(w),
            col_fwd: planner.plan_fft_forward(h),
            row_inv: planner.plan_fft_inverse(w),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    fn transpose(data: &[C64], w: usize, h: usize) -> Vec<C64> {
        let mut out = vec![C64::default(); w * h];
        for y in 0..h {
            for x in 0..w {
                out[x * h + y] = data[y * w + x];
            }
        }
        out
    }

    fn run(&self, data: &mut Vec<C64>, inverse: bool) {
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        rows.process(data);
        let mut t = Self::transpose(data, self.w, self.h);
        cols.process(&mut t);
        *data = Self::transpose(&t, self.h, self.w);
    }
}

/// Smallest 2^a·3^b·5^c that is >= n.
fn smooth_size(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut k = m;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        })
        .unwrap()
}

/// Splits the spectrum of `a + i·b` (both real) into the spectra of `a` and `b`.
fn split_real_pair(z: &[C64], w: usize, h: usize) -> (Vec<C64>, Vec<C64>) {
    let mut fa = vec![C64::default(); w * h];
    let mut fb = vec![C64::default(); w * h];
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            let mirror = ((h - y) % h) * w + (w - x) % w;
            let zk = z[k];
            let zm = z[mirror].conj();
            fa[k] = (zk + zm) * 0.5;
            fb[k] = (zk - zm) * C64::new(0.0, -0.5);
        }
    }
    (fa, fb)
}

/// Linear cross-correlations `Σ_p x(p)·y(p + e)` of two pairs, computed with
/// one inverse transform: `conj(X1)·Y1 + i·conj(X2)·Y2`.
fn correlate_pair(
    fft: &Fft2,
    x1: &[C64],
    y1: &[C64],
    x2: &[C64],
    y2: &[C64],
) -> (Vec<f64>, Vec<f64>) {
    let n = (fft.w * fft.h) as f64;
    let mut prod: Vec<C64> = (0..x1.len())
        .map(|k| x1[k].conj() * y1[k] + C64::new(0.0, 1.0) * (x2[k].conj() * y2[k]))
        .collect();
    fft.run(&mut prod, true);
    (
        prod.iter().map(|c| c.re / n).collect(),
        prod.iter().map(|c| c.im / n).collect(),
    )
}

fn pack(
    w: usize,
    h: usize,
    fw: usize,
    fh: usize,
    re: impl Fn(usize, usize) -> f64,
    im: impl Fn(usize, usize) -> f64,
) -> Vec<C64> {
    let mut out = vec![C64::default(); fw * fh];
    for y in 0..h {
        for x in 0..w {
            out[y * fw + x] = C64::new(re(x, y), im(x, y));
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Best {
    ncc: f64,
    theta: f64,
    dx: i64,
    dy: i64,
}

impl Best {
    /// Higher NCC wins; ties go to the smaller (|θ|, |dx|, |dy|).
    fn better_than(&self, other: &Best) -> bool {
        if self.ncc != other.ncc {
            return self.ncc > other.ncc;
        }
        (self.theta.abs(), self.dx.abs(), self.dy.abs())
            .partial_cmp(&(other.theta.abs(), other.dx.abs(), other.dy.abs()))
            .is_some_and(|o| o.is_lt())
    }
}

/// Exhaustive NCC grid search for the transform mapping `reference`
/// coordinates onto `moving` coordinates (same convention as the pipeline).
pub fn oracle_search(
    reference: &GrayImage,
    moving: &GrayImage,
    grid: &OracleGrid,
) -> Result<OracleResult> {
    let thetas = grid.thetas()?;
    let shifts = grid.shifts();
    let d = grid.shift_range;
    let (w2, h2) = moving.dims();
    let (ew, eh) = (w2 + 2 * d, h2 + 2 * d);
    let (fw, fh) = (smooth_size(ew), smooth_size(eh));
    let fft = Fft2::new(fw, fh);
    let center = reference.center();

    // moving-frame terms are shared by every θ
    let a = |x: usize, y: usize| moving.get(x, y) as f64;
    let mut za = pack(w2, h2, fw, fh, a, |x, y| a(x, y) * a(x, y));
    fft.run(&mut za, false);
    let (fa, fa2) = split_real_pair(&za, fw, fh);
    let mut fma = pack(w2, h2, fw, fh, |_, _| 1.0, |_, _| 0.0);
    fft.run(&mut fma, false);

    let min_overlap = MIN_OVERLAP_FRACTION * (w2 * h2) as f64;
    let per_theta: Vec<Option<Best>> = thetas
        .par_iter()
        .map(|&theta| {
            // reference carried into the moving frame by rotation only, on a
            // grid extended by the shift range: ext(j) = U(j - d)
            let back = RigidTransform::new(-theta, 0.0, 0.0, center);
            let mut b = vec![0.0; ew * eh];
            let mut m = vec![0.0; ew * eh];
            for j in 0..eh {
                for i in 0..ew {
                    let p = (i as f64 - d as f64, j as f64 - d as f64);
                    let q = back.apply(p);
                    if let Some(v) = sample(reference, q.0, q.1, Interpolation::Bilinear) {
                        b[j * ew + i] = v;
                        m[j * ew + i] = 1.0;
                    }
                }
            }
            let mut zb = pack(
                ew,
                eh,
                fw,
                fh,
                |x, y| b[y * ew + x],
                |x, y| {
                    let v = b[y * ew + x];
                    v * v
                },
            );
            fft.run(&mut zb, false);
            let (fb, fb2) = split_real_pair(&zb, fw, fh);
            let mut fm = pack(ew, eh, fw, fh, |x, y| m[y * ew + x], |_, _| 0.0);
            fft.run(&mut fm, false);

            let (n, sab) = correlate_pair(&fft, &fma, &fm, &fa, &fb);
            let (sa, sa2) = correlate_pair(&fft, &fa, &fm, &fa2, &fm);
            let (sb, sb2) = correlate_pair(&fft, &fma, &fb, &fma, &fb2);

            let mut best: Option<Best> = None;
            for &dy in &shifts {
                for &dx in &shifts {
                    // lag e = d - shift
                    let ex = (d as i64 - dx) as usize;
                    let ey = (d as i64 - dy) as usize;
                    let k = ey * fw + ex;
                    let cnt = n[k].round();
                    if cnt < min_overlap {
                        continue;
                    }
                    let va = sa2[k] - sa[k] * sa[k] / cnt;
                    let vb = sb2[k] - sb[k] * sb[k] / cnt;
                    if va <= 0.0 || vb <= 0.0 {
                        continue;
                    }
                    let ncc = (sab[k] - sa[k] * sb[k] / cnt) / (va * vb).sqrt();
                    let cand = Best { ncc, theta, dx, dy };
                    if best.is_none_or(|b| cand.better_than(&b)) {
                        best = Some(cand);
                    }
                }
            }
            best
        })
        .collect();

    let best = per_theta
        .into_iter()
        .flatten()
        .fold(None::<Best>, |acc, c| match acc {
            Some(b) if !c.better_than(&b) => Some(b),
            _ => Some(c),
        })
        .ok_or_else(|| HistairError::InvalidConfig("no grid point has enough overlap".into()))?;
    Ok(OracleResult {
        transform: RigidTransform::new(best.theta, best.dx as f64, best.dy as f64, center),
        ncc: best.ncc,
        evaluated: thetas.len() * shifts.len() * shifts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synthesize;

    fn blobs(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (fx, fy) = (x as f64, y as f64);
            let e1 = ((fx - 30.0) / 14.0).powi(2) + ((fy - 26.0) / 6.0).powi(2) <= 1.0;
            let e2 = ((fx - 50.0) / 5.0).powi(2) + ((fy - 44.0) / 11.0).powi(2) <= 1.0;
            if e1 {
                200
            } else if e2 {
                120
            } else {
                ((x * 3 + y * 5) % 40) as u8 + 20
            }
        })
        .unwrap()
    }

    /// Direct masked NCC at one integer grid point, for cross-checking the FFT path.
    fn direct_ncc(reference: &GrayImage, moving: &GrayImage, theta: f64, dx: i64, dy: i64) -> f64 {
        let t = RigidTransform::new(theta, dx as f64, dy as f64, reference.center());
        let inv = histair::warp::invert(&t);
        let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for y in 0..moving.height() {
            for x in 0..moving.width() {
                let q = inv.apply((x as f64, y as f64));
                if let Some(b) = sample(reference, q.0, q.1, Interpolation::Bilinear) {
                    let a = moving.get(x, y) as f64;
                    n += 1.0;
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                }
            }
        }
        (sab - sa * sb / n) / ((saa - sa * sa / n) * (sbb - sb * sb / n)).sqrt()
    }

    #[test]
    fn identity_pair_returns_zero() {
        let img = blobs(80, 70);
        let grid = OracleGrid {
            theta_min: -3.0,
            theta_max: 3.0,
            theta_step: 1.0,
            shift_range: 4,
            shift_step: 1,
        };
        let r = oracle_search(&img, &img, &grid).unwrap();
        assert_eq!(
            (r.transform.theta_deg, r.transform.dx, r.transform.dy),
            (0.0, 0.0, 0.0)
        );
        assert!((r.ncc - 1.0).abs() < 1e-9);
        assert_eq!(r.evaluated, 7 * 9 * 9);
    }

    #[test]
    fn recovers_synthetic_motion() {
        let img = blobs(80, 80);
        let moved = synthesize(&img, 4.0, 3.0, -2.0, 0.0, 0).unwrap();
        let grid = OracleGrid {
            theta_min: -6.0,
            theta_max: 6.0,
            theta_step: 1.0,
            shift_range: 5,
            shift_step: 1,
        };
        let r = oracle_search(&img, &moved, &grid).unwrap();
        assert_eq!(
            (r.transform.theta_deg, r.transform.dx, r.transform.dy),
            (4.0, 3.0, -2.0)
        );
    }

    #[test]
    fn fft_scores_match_direct_evaluation() {
        let img = blobs(64, 60);
        let moved = synthesize(&img, -7.0, 2.0, 1.0, 0.0, 0).unwrap();
        for theta in [-7.0, 0.0, 5.0] {
            let pinned = OracleGrid {
                theta_min: theta,
                theta_max: theta,
                theta_step: 1.0,
                shift_range: 0,
                shift_step: 1,
            };
            let r = oracle_search(&img, &moved, &pinned).unwrap();
            assert!((r.ncc - direct_ncc(&img, &moved, theta, 0, 0)).abs() < 1e-9);

            let grid = OracleGrid {
                shift_range: 4,
                ..pinned
            };
            let best = oracle_search(&img, &moved, &grid).unwrap();
            let direct = direct_ncc(
                &img,
                &moved,
                theta,
                best.transform.dx as i64,
                best.transform.dy as i64,
            );
            assert!((best.ncc - direct).abs() < 1e-9, "{} vs {direct}", best.ncc);
        }
    }

    #[test]
    fn empty_grid_is_error() {
        let img = blobs(20, 20);
        let grid = OracleGrid {
            theta_min: 1.0,
            theta_max: 0.0,
            theta_step: 1.0,
            shift_range: 1,
            shift_step: 1,
        };
        assert!(oracle_search(&img, &img, &grid).is_err());
        let grid = OracleGrid {
            theta_min: 0.0,
            theta_max: 0.0,
            theta_step: 0.0,
            shift_range: 1,
            shift_step: 1,
        };
        assert!(oracle_search(&img, &img, &grid).is_err());
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(800), 800);
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(121), 125);
    }
}
