//! Distortion and structural-similarity metrics for fields in [0, 1].

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Field;

const MAX_VALUE: f64 = 1.0;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const WINDOW: usize = 8;
const STRIDE: usize = 4;

pub fn mse(x: &Field, reference: &Field) -> Result<f64> {
    x.ensure_same_shape(reference)?;
    Ok(x.dist_sq(reference) / x.len() as f64)
}

/// `10 log10(MAX² / MSE)` with MAX = 1; identical inputs give `+∞`.
pub fn psnr(x: &Field, reference: &Field) -> Result<f64> {
    let m = mse(x, reference)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (MAX_VALUE * MAX_VALUE / m).log10())
}

/// Mean SSIM over 8×8 windows (stride 4) per channel, averaged over channels.
/// Dimensions smaller than the window use a single full-extent window.
pub fn ssim(x: &Field, reference: &Field) -> Result<f64> {
    x.ensure_same_shape(reference)?;
    let (h, w) = (x.height(), x.width());
    let (wh, ww) = (WINDOW.min(h), WINDOW.min(w));
    let c1 = (K1 * MAX_VALUE).powi(2);
    let c2 = (K2 * MAX_VALUE).powi(2);
    let starts = |extent: usize, win: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..=extent - win).step_by(STRIDE).collect();
        if *v.last().unwrap() != extent - win {
            v.push(extent - win);
        }
        v
    };
    let (rows, cols) = (starts(h, wh), starts(w, ww));
    let n = (wh * ww) as f64;
    let mut total = 0.0;
    for ch in 0..x.channels() {
        let mut acc = 0.0;
        for &r0 in &rows {
            for &c0 in &cols {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in r0..r0 + wh {
                    for c in c0..c0 + ww {
                        let a = x.get(r, c, ch);
                        let b = reference.get(r, c, ch);
                        sa += a;
                        sb += b;
                        saa += a * a;
                        sbb += b * b;
                        sab += a * b;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let va = (saa / n - ma * ma).max(0.0);
                let vb = (sbb / n - mb * mb).max(0.0);
                let cov = sab / n - ma * mb;
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        total += acc / (rows.len() * cols.len()) as f64;
    }
    Ok(total / x.channels() as f64)
}

/// PSNR, the SSIM-based sharpness proxy and raw MSE of one reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    #[serde(with = "float_or_inf")]
    pub psnr: f64,
    pub sharpness: f64,
    pub mse: f64,
}

impl MetricPair {
    pub fn evaluate(x: &Field, reference: &Field) -> Result<Self> {
        Ok(Self { psnr: psnr(x, reference)?, sharpness: ssim(x, reference)?, mse: mse(x, reference)? })
    }

    /// Weakly better in both objectives and strictly better in one.
    pub fn dominates(&self, other: &MetricPair) -> bool {
        self.psnr >= other.psnr
            && self.sharpness >= other.sharpness
            && (self.psnr > other.psnr || self.sharpness > other.sharpness)
    }
}

/// Serializes infinities as the string `"inf"`.
pub(crate) mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s}"))),
        }
    }
}

/// Formats a metric for text outputs, writing `inf` for +∞.
pub fn format_metric(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}
