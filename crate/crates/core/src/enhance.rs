//! Preprocessing of a reference/moving pair: histogram specification of the
//! moving image onto the reference, followed by an adaptive local Wiener
//! filter on both images.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HistairError, Result};
use crate::raster::{compute_histogram, GrayImage};

/// Guards the Wiener gain against division by a vanishing local variance.
const VARIANCE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceConfig {
    /// Odd side length of the square Wiener window.
    pub wiener_window: usize,
    /// Additive noise variance; estimated as the mean local variance when `None`.
    pub noise_variance: Option<f64>,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            wiener_window: 5,
            noise_variance: None,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.wiener_window < 3 || self.wiener_window.is_multiple_of(2) {
            return Err(HistairError::InvalidConfig(format!(
                "wiener window must be odd and >= 3, got {}",
                self.wiener_window
            )));
        }
        if let Some(nv) = self.noise_variance {
            if !(nv >= 0.0 && nv.is_finite()) {
                return Err(HistairError::InvalidConfig(format!(
                    "noise variance must be finite and >= 0, got {nv}"
                )));
            }
        }
        Ok(())
    }
}

/// Gray-level mapping table that carries the moving image's CDF onto the
/// reference CDF: `v -> argmin_u |CDF_ref(u) - CDF_mov(v)|`, lowest `u` on ties.
pub fn histogram_mapping(moving: &GrayImage, reference: &GrayImage) -> [u8; 256] {
    let hm = compute_histogram(moving);
    let hr = compute_histogram(reference);
    let (tm, tr) = (hm.total() as u128, hr.total() as u128);

    // cumulative counts, compared exactly by cross-multiplication
    let cum = |counts: &[u64; 256]| {
        let mut out = [0u128; 256];
        let mut acc = 0u128;
        for (o, &c) in out.iter_mut().zip(counts.iter()) {
            acc += c as u128;
            *o = acc;
        }
        out
    };
    let cm = cum(hm.counts());
    let cr = cum(hr.counts());

    let mut table = [0u8; 256];
    for v in 0..256 {
        let target = cm[v] * tr;
        let mut best = 0usize;
        let mut best_dist = u128::MAX;
        for (u, &c) in cr.iter().enumerate() {
            let dist = (c * tm).abs_diff(target);
            if dist < best_dist {
                best_dist = dist;
                best = u;
            }
        }
        table[v] = best as u8;
    }
    table
}

pub fn match_histogram(moving: &GrayImage, reference: &GrayImage) -> GrayImage {
    let table = histogram_mapping(moving, reference);
    let pixels = moving.pixels().iter().map(|&p| table[p as usize]).collect();
    GrayImage::new(moving.width(), moving.height(), pixels).expect("dimensions preserved")
}

/// Per-pixel local mean and (population) variance over a `window x window`
/// neighbourhood with replicated borders.
pub fn local_statistics(img: &GrayImage, window: usize) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = img.dims();
    let r = window / 2;
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    // integral images over the replicated-border padding, one extra row/col of zeros
    let mut sum = vec![0u64; (pw + 1) * (ph + 1)];
    let mut sq = vec![0u64; (pw + 1) * (ph + 1)];
    for py in 0..ph {
        let sy = py.saturating_sub(r).min(h - 1);
        let mut row_sum = 0u64;
        let mut row_sq = 0u64;
        for px in 0..pw {
            let sx = px.saturating_sub(r).min(w - 1);
            let v = img.get(sx, sy) as u64;
            row_sum += v;
            row_sq += v * v;
            let idx = (py + 1) * (pw + 1) + px + 1;
            sum[idx] = sum[idx - (pw + 1)] + row_sum;
            sq[idx] = sq[idx - (pw + 1)] + row_sq;
        }
    }
    let n = (window * window) as f64;
    let rect = |tab: &[u64], x: usize, y: usize| {
        let (x0, y0, x1, y1) = (x, y, x + window, y + window);
        tab[y1 * (pw + 1) + x1] + tab[y0 * (pw + 1) + x0]
            - tab[y0 * (pw + 1) + x1]
            - tab[y1 * (pw + 1) + x0]
    };
    let mut mean = vec![0.0; w * h];
    let mut var = vec![0.0; w * h];
    mean.par_chunks_mut(w)
        .zip(var.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (mrow, vrow))| {
            for x in 0..w {
                let s = rect(&sum, x, y) as f64;
                let s2 = rect(&sq, x, y) as f64;
                let m = s / n;
                mrow[x] = m;
                vrow[x] = (s2 / n - m * m).max(0.0);
            }
        });
    (mean, var)
}

/// Adaptive Wiener filter:
/// `out = m + max(s² - n², 0) / max(s², eps) * (in - m)`, rounded and clamped.
pub fn wiener_filter(img: &GrayImage, cfg: &EnhanceConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let (w, h) = img.dims();
    if cfg.wiener_window > 2 * w || cfg.wiener_window > 2 * h {
        return Err(HistairError::InvalidConfig(format!(
            "wiener window {} too large for a {w}x{h} image",
            cfg.wiener_window
        )));
    }
    let (mean, var) = local_statistics(img, cfg.wiener_window);
    let noise = match cfg.noise_variance {
        Some(nv) => nv,
        None => {
            // per-row partial sums keep the reduction order fixed
            let row_sums: Vec<f64> = var.par_chunks(w).map(|r| r.iter().sum()).collect();
            row_sums.iter().sum::<f64>() / (w * h) as f64
        }
    };
    let mut out = vec![0u8; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let m = mean[i];
            let s2 = var[i];
            let gain = (s2 - noise).max(0.0) / s2.max(VARIANCE_EPS);
            let v = m + gain * (img.get(x, y) as f64 - m);
            *o = v.round().clamp(0.0, 255.0) as u8;
        }
    });
    GrayImage::new(w, h, out)
}

/// Returns `(wiener(img1), wiener(match_histogram(img2, img1)))`.
pub fn preprocess_pair(
    img1: &GrayImage,
    img2: &GrayImage,
    cfg: &EnhanceConfig,
) -> Result<(GrayImage, GrayImage)> {
    let matched = match_histogram(img2, img1);
    Ok((wiener_filter(img1, cfg)?, wiener_filter(&matched, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: usize, h: usize, px: Vec<u8>) -> GrayImage {
        GrayImage::new(w, h, px).unwrap()
    }

    #[test]
    fn matching_self_is_identity() {
        let a = img(4, 2, vec![3, 3, 10, 200, 50, 50, 51, 255]);
        assert_eq!(match_histogram(&a, &a), a);
    }

    #[test]
    fn matching_constant_images() {
        let m = GrayImage::filled(5, 5, 10).unwrap();
        let r = GrayImage::filled(3, 3, 200).unwrap();
        assert!(match_histogram(&m, &r).pixels().iter().all(|&p| p == 200));
    }

    #[test]
    fn matching_two_level_images() {
        let m = img(2, 2, vec![0, 255, 0, 255]);
        let r = img(4, 1, vec![100, 200, 200, 100]);
        let table = histogram_mapping(&m, &r);
        assert_eq!(table[0], 100);
        assert_eq!(table[255], 200);
        assert_eq!(match_histogram(&m, &r).pixels(), &[100, 200, 100, 200]);
    }

    #[test]
    fn wiener_constant_image_unchanged() {
        let c = GrayImage::filled(9, 7, 77).unwrap();
        assert_eq!(wiener_filter(&c, &EnhanceConfig::default()).unwrap(), c);
    }

    #[test]
    fn wiener_zero_noise_is_identity() {
        let a = GrayImage::from_fn(12, 9, |x, y| ((x * 37 + y * 91) % 256) as u8).unwrap();
        let cfg = EnhanceConfig {
            noise_variance: Some(0.0),
            ..Default::default()
        };
        assert_eq!(wiener_filter(&a, &cfg).unwrap(), a);
    }

    #[test]
    fn wiener_attenuates_impulse_on_ramp() {
        let mut a = GrayImage::from_fn(21, 21, |x, _| (10 + 4 * x) as u8).unwrap();
        let mut px = a.clone().into_pixels();
        px[10 * 21 + 10] = 250;
        a = GrayImage::new(21, 21, px).unwrap();
        let out = wiener_filter(&a, &EnhanceConfig::default()).unwrap();

        // independent direct-loop statistics at the impulse
        let (mut s, mut s2) = (0.0, 0.0);
        for y in 8..13 {
            for x in 8..13 {
                let v = a.get(x, y) as f64;
                s += v;
                s2 += v * v;
            }
        }
        let m = s / 25.0;
        let var = s2 / 25.0 - m * m;
        let (mean, lv) = local_statistics(&a, 5);
        assert!((mean[10 * 21 + 10] - m).abs() < 1e-9);
        assert!((lv[10 * 21 + 10] - var).abs() < 1e-6);

        let ramp_value = (10 + 40) as f64;
        let before = (250.0 - ramp_value).abs();
        let after = (out.get(10, 10) as f64 - ramp_value).abs();
        assert!(after < before, "impulse {before} -> {after}");
    }

    #[test]
    fn wiener_rejects_bad_config() {
        let a = GrayImage::filled(3, 3, 1).unwrap();
        let even = EnhanceConfig {
            wiener_window: 4,
            ..Default::default()
        };
        assert!(wiener_filter(&a, &even).is_err());
        let huge = EnhanceConfig {
            wiener_window: 7,
            ..Default::default()
        };
        assert!(wiener_filter(&a, &huge).is_err());
        let neg = EnhanceConfig {
            noise_variance: Some(-1.0),
            ..Default::default()
        };
        assert!(wiener_filter(&a, &neg).is_err());
    }

    #[test]
    fn preprocess_identical_and_constant_pairs() {
        let a = GrayImage::from_fn(16, 16, |x, y| ((x * x + 3 * y) % 200) as u8).unwrap();
        let (p1, p2) = preprocess_pair(&a, &a, &EnhanceConfig::default()).unwrap();
        assert_eq!(p1, p2);

        let c = GrayImage::filled(8, 8, 42).unwrap();
        let (q1, q2) = preprocess_pair(&c, &c, &EnhanceConfig::default()).unwrap();
        assert_eq!(q1, c);
        assert_eq!(q2, c);
    }

    #[test]
    fn preprocess_shrinks_brightness_gap() {
        let a = GrayImage::from_fn(
            32,
            32,
            |x, y| {
                if (x / 8 + y / 8) % 2 == 0 {
                    60
                } else {
                    140
                }
            },
        )
        .unwrap();
        let b = GrayImage::new(
            32,
            32,
            a.pixels().iter().map(|&p| p.saturating_add(50)).collect(),
        )
        .unwrap();
        let l1 = |p: &GrayImage, q: &GrayImage| -> u64 {
            let (hp, hq) = (compute_histogram(p), compute_histogram(q));
            hp.counts()
                .iter()
                .zip(hq.counts())
                .map(|(x, y)| x.abs_diff(*y))
                .sum()
        };
        let before = l1(&a, &b);
        let (p1, p2) = preprocess_pair(&a, &b, &EnhanceConfig::default()).unwrap();
        let after = l1(&p1, &p2);
        assert_eq!(before, 2 * 1024);
        assert!(after * 10 < before, "{before} -> {after}");
    }

    proptest! {
        #[test]
        fn mapping_is_monotone(
            m in proptest::collection::vec(any::<u8>(), 1..200),
            r in proptest::collection::vec(any::<u8>(), 1..200),
        ) {
            let mi = GrayImage::new(m.len(), 1, m).unwrap();
            let ri = GrayImage::new(r.len(), 1, r).unwrap();
            let table = histogram_mapping(&mi, &ri);
            for v in 1..256 {
                prop_assert!(table[v - 1] <= table[v]);
            }
        }

        #[test]
        fn wiener_stays_within_local_range(px in proptest::collection::vec(any::<u8>(), 64)) {
            let a = GrayImage::new(8, 8, px).unwrap();
            let out = wiener_filter(&a, &EnhanceConfig::default()).unwrap();
            for y in 0..8usize {
                for x in 0..8usize {
                    let (mut lo, mut hi) = (255u8, 0u8);
                    for dy in -2i64..=2 {
                        for dx in -2i64..=2 {
                            let sx = (x as i64 + dx).clamp(0, 7) as usize;
                            let sy = (y as i64 + dy).clamp(0, 7) as usize;
                            lo = lo.min(a.get(sx, sy));
                            hi = hi.max(a.get(sx, sy));
                        }
                    }
                    let v = out.get(x, y);
                    prop_assert!(v >= lo && v <= hi);
                }
            }
        }
    }
}
