//! Full-reference image quality: PSNR, SSIM and RMSE per view and per
//! light field. Inputs are RGB views with samples in `[0, 1]`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lightfield::{LightField, View, CHANNELS};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn check_shapes(a: &View<'_>, b: &View<'_>) -> Result<()> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::Shape(format!(
            "views differ: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

fn mse(a: &View<'_>, b: &View<'_>) -> Result<f64> {
    check_shapes(a, b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

pub fn rmse(a: &View<'_>, b: &View<'_>) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

/// Peak signal-to-noise ratio in dB for unit peak; `+inf` when equal.
pub fn psnr(a: &View<'_>, b: &View<'_>) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / m).log10()
    })
}

fn luma(v: &View<'_>) -> Vec<f64> {
    v.data
        .chunks_exact(CHANNELS)
        .map(|p| LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64)
        .collect()
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gy in &g {
        for gx in &g {
            w.push(gy * gx);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Mean SSIM over all valid 11x11 Gaussian windows of the luma channel.
pub fn ssim(a: &View<'_>, b: &View<'_>) -> Result<f64> {
    check_shapes(a, b)?;
    let (h, w) = (a.height, a.width);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "{h}x{w} view is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let (ya, yb) = (luma(a), luma(b));
    let window = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for oy in 0..oh {
        for ox in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                let row = (oy + ky) * w + ox;
                for kx in 0..SSIM_WINDOW {
                    let g = window[ky * SSIM_WINDOW + kx];
                    let (pa, pb) = (ya[row + kx], yb[row + kx]);
                    ma += g * pa;
                    mb += g * pb;
                    saa += g * pa * pa;
                    sbb += g * pb * pb;
                    sab += g * pa * pb;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
        }
    }
    Ok(total / (oh * ow) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScores {
    pub row: usize,
    pub col: usize,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub prediction: String,
    pub reference: String,
    pub views: Vec<ViewScores>,
    pub mean: Scores,
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("invalid psnr {t:?}"))),
    }
}

fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

/// Arithmetic mean of each metric, summed in view order.
pub fn mean_scores(views: &[ViewScores]) -> Scores {
    let n = views.len() as f64;
    let sum = |f: fn(&Scores) -> f64| views.iter().map(|v| f(&v.scores)).sum::<f64>() / n;
    Scores {
        psnr: sum(|s| s.psnr),
        ssim: sum(|s| s.ssim),
        rmse: sum(|s| s.rmse),
    }
}

pub fn score_view(pred: &View<'_>, gt: &View<'_>) -> Result<Scores> {
    Ok(Scores {
        psnr: psnr(pred, gt)?,
        ssim: ssim(pred, gt)?,
        rmse: rmse(pred, gt)?,
    })
}

/// Scores every view of `pred` against `gt`.
pub fn evaluate_lf(pred: &LightField, gt: &LightField) -> Result<EvalReport> {
    if pred.angular_size() != gt.angular_size() || pred.spatial_size() != gt.spatial_size() {
        return Err(Error::Shape(format!(
            "light fields differ: {:?}x{:?} vs {:?}x{:?}",
            pred.angular_size(),
            pred.spatial_size(),
            gt.angular_size(),
            gt.spatial_size()
        )));
    }
    let (rows, cols) = pred.angular_size();
    let views = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            Ok(ViewScores {
                row,
                col,
                scores: score_view(&pred.view(row, col), &gt.view(row, col))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        prediction: String::new(),
        reference: String::new(),
        mean: mean_scores(&views),
        views,
    })
}

impl EvalReport {
    pub fn with_ids(mut self, prediction: impl Into<String>, reference: impl Into<String>) -> Self {
        self.prediction = prediction.into();
        self.reference = reference.into();
        self
    }

    /// One line per view plus a final `mean` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,psnr,ssim,rmse\n");
        for v in &self.views {
            let s = &v.scores;
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                v.row,
                v.col,
                format_db(s.psnr),
                s.ssim,
                s.rmse
            );
        }
        let m = &self.mean;
        let _ = writeln!(out, "mean,mean,{},{},{}", format_db(m.psnr), m.ssim, m.rmse);
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::Intrinsics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn view(h: usize, w: usize, data: &[f32]) -> View<'_> {
        View::new(h, w, data).unwrap()
    }

    fn noise(seed: u64, n: usize) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f32>()).collect()
    }

    /// Independent SSIM: explicit 2D Gaussian, two-pass variance per window.
    fn ssim_oracle(a: &[f32], b: &[f32], h: usize, w: usize) -> f64 {
        let y = |d: &[f32], i: usize| {
            0.299 * d[3 * i] as f64 + 0.587 * d[3 * i + 1] as f64 + 0.114 * d[3 * i + 2] as f64
        };
        let mut k = [[0.0; 11]; 11];
        let mut norm = 0.0;
        for (i, row) in k.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let r2 = ((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5);
                *v = (-r2).exp();
                norm += *v;
            }
        }
        let mut total = 0.0;
        let mut count = 0;
        for oy in 0..=h - 11 {
            for ox in 0..=w - 11 {
                let at = |i: usize, j: usize| (oy + i) * w + ox + j;
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        ma += k[i][j] / norm * y(a, at(i, j));
                        mb += k[i][j] / norm * y(b, at(i, j));
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let g = k[i][j] / norm;
                        let (da, db) = (y(a, at(i, j)) - ma, y(b, at(i, j)) - mb);
                        va += g * da * da;
                        vb += g * db * db;
                        cov += g * da * db;
                    }
                }
                let (c1, c2) = (0.0001, 0.0009);
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn uniform_difference_closed_forms() {
        let a = vec![0.5f32; 16 * 16 * 3];
        let b = vec![0.5625f32; 16 * 16 * 3];
        let (va, vb) = (view(16, 16, &a), view(16, 16, &b));
        assert_eq!(rmse(&va, &vb).unwrap(), 0.0625);
        assert!((psnr(&va, &vb).unwrap() - 24.082).abs() < 1e-3);
        let c = vec![0.0f32; 16 * 16 * 3];
        assert!((psnr(&view(16, 16, &a), &view(16, 16, &c)).unwrap() - 6.021).abs() < 1e-3);
        assert_eq!(psnr(&va, &va).unwrap(), f64::INFINITY);
        assert_eq!(rmse(&va, &va).unwrap(), 0.0);
    }

    #[test]
    fn rmse_matches_two_pass() {
        let a = noise(1, 20 * 13 * 3);
        let b = noise(2, 20 * 13 * 3);
        let diffs: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| x as f64 - y as f64)
            .collect();
        let sq: Vec<f64> = diffs.iter().map(|d| d * d).collect();
        let want = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        assert!((rmse(&view(20, 13, &a), &view(20, 13, &b)).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = noise(3, 24 * 30 * 3);
        assert_eq!(ssim(&view(24, 30, &a), &view(24, 30, &a)).unwrap(), 1.0);
        let c = vec![0.3f32; 16 * 16 * 3];
        assert_eq!(ssim(&view(16, 16, &c), &view(16, 16, &c)).unwrap(), 1.0);
    }

    #[test]
    fn ssim_matches_oracle_and_is_symmetric() {
        let a = noise(4, 18 * 21 * 3);
        let b: Vec<f32> = a
            .iter()
            .zip(noise(5, a.len()))
            .map(|(&x, n)| (0.7 * x + 0.3 * n).min(1.0))
            .collect();
        let (va, vb) = (view(18, 21, &a), view(18, 21, &b));
        let s = ssim(&va, &vb).unwrap();
        assert!((s - ssim_oracle(&a, &b, 18, 21)).abs() < 1e-10);
        assert!((s - ssim(&vb, &va).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_against_inverse() {
        let mut a = Vec::new();
        for y in 0..16 {
            for x in 0..16 {
                let v = if (x + y) % 2 == 0 { 1.0 } else { 0.0 };
                a.extend([v; 3]);
            }
        }
        let b: Vec<f32> = a.iter().map(|v| 1.0 - v).collect();
        let s = ssim(&view(16, 16, &a), &view(16, 16, &b)).unwrap();
        assert!(s < 0.1, "{s}");
        assert!((s - ssim_oracle(&a, &b, 16, 16)).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = vec![0.0f32; 10 * 10 * 3];
        let b = vec![0.0f32; 10 * 12 * 3];
        assert!(rmse(&view(10, 10, &a), &view(10, 12, &b)).is_err());
        assert!(ssim(&view(10, 10, &a), &view(10, 10, &a)).is_err());
    }

    #[test]
    fn report_rows_and_means() {
        let intr = Intrinsics::for_spatial_size(12, 12);
        let gt = LightField::constant((1, 2), (12, 12), 0.5).unwrap();
        let pred = LightField::from_fn(
            (1, 2),
            (12, 12),
            intr,
            |_, c, _, _, _| if c == 0 { 0.6 } else { 0.8 },
        )
        .unwrap();
        let report = evaluate_lf(&pred, &gt).unwrap();
        assert_eq!(report.views.len(), 2);
        let r: Vec<f64> = report.views.iter().map(|v| v.scores.rmse).collect();
        assert!((r[0] - 0.1).abs() < 1e-6 && (r[1] - 0.3).abs() < 1e-6);
        assert!((report.mean.rmse - 0.2).abs() < 1e-6);
        assert_eq!(report.mean.rmse, (r[0] + r[1]) / 2.0);
    }

    #[test]
    fn infinite_psnr_round_trips_as_text() {
        let gt = LightField::constant((5, 5), (12, 12), 0.25).unwrap();
        let report = evaluate_lf(&gt, &gt).unwrap().with_ids("a", "b");
        assert_eq!(report.views.len(), 25);
        assert!(report
            .views
            .iter()
            .all(|v| v.scores.rmse == 0.0 && v.scores.ssim == 1.0));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"psnr\":\"inf\""));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert_eq!(report.to_csv().lines().count(), 27);
    }
}
