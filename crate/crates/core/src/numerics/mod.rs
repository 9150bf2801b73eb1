//! Independent verification oracles.
//!
//! Nothing here calls into `ssm`: the projector is re-derived with plain
//! loops and the recurrence is replaced by its unrolled closed form
//!
//! ```text
//! y_k = g_k · C0 · Σ_{j ≤ k} (Π_{i=j+1..k} A_i) ⊙ Bx_j
//! ```
//!
//! with `Bx_j` taken as zero on invalid tokens.

#![allow(clippy::needless_range_loop)]

pub mod extended;
pub mod reference;

use crate::error::{shape_err, Result};
use crate::linalg::Matrix;
use crate::scans::TokenSequence;
use crate::ssm::SsmParams;

/// Closed-form outputs (`T × d`) from precomputed per-step parameters.
pub fn oracle_scan(decay: &[f64], drive: &[f64], gate: &[f64], mask: &[bool], mix: &Matrix) -> Result<Vec<f64>> {
    let d = mix.rows();
    let t = gate.len();
    if decay.len() != t * d || drive.len() != t * d || mask.len() != t || mix.cols() != d {
        return shape_err("oracle inputs disagree on T or d");
    }
    let mut out = vec![0.0; t * d];
    for k in 0..t {
        let mut h = vec![0.0; d];
        for j in 0..=k {
            if !mask[j] {
                continue;
            }
            for i in 0..d {
                let mut carry = 1.0;
                for step in j + 1..=k {
                    carry *= decay[step * d + i];
                }
                h[i] += carry * drive[j * d + i];
            }
        }
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                acc += mix.data()[r * d + c] * h[c];
            }
            out[k * d + r] = gate[k] * acc;
        }
    }
    Ok(out)
}

/// Unrolled closed-form SSM outputs for a token sequence.
pub fn oracle_ssm(seq: &TokenSequence, p: &SsmParams) -> Result<Vec<f64>> {
    let (m, d) = (p.token_width(), p.state_width());
    if seq.width() != m {
        return shape_err(format!("tokens of width {} for m={m}", seq.width()));
    }
    let t = seq.len();
    let mut decay = vec![0.0; t * d];
    let mut drive = vec![0.0; t * d];
    let mut gate = vec![0.0; t];
    let wa = p.decay_w.data();
    let wb = p.input_w.data();
    for k in 0..t {
        let x = seq.token(k);
        for i in 0..d {
            let mut sa = p.decay_b[i];
            let mut sb = p.input_b[i];
            for c in 0..m {
                sa += wa[i * m + c] * x[c];
                sb += wb[i * m + c] * x[c];
            }
            // exp(-softplus(s)) = 1 / (1 + e^s)
            decay[k * d + i] = 1.0 / (1.0 + sa.exp());
            drive[k * d + i] = sb;
        }
        let mut sg = p.gate_b;
        for c in 0..m {
            sg += p.gate_w[c] * x[c];
        }
        gate[k] = 1.0 / (1.0 + (-sg).exp());
    }
    oracle_scan(&decay, &drive, &gate, seq.mask(), &p.mix)
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate.
pub fn finite_diff<F>(f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            x[i] = point[i] + h;
            let plus = f(&x);
            x[i] = point[i] - h;
            let minus = f(&x);
            x[i] = point[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    pub relative_errors: Vec<f64>,
    pub max_rel_error: f64,
    pub step: f64,
    pub compared: usize,
}

impl FiniteDiffReport {
    /// Relative error per partial with denominator `max(|a|, |n|, 1e-12)`.
    pub fn compare(analytic: &[f64], numeric: &[f64], step: f64) -> Self {
        assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
        let relative_errors: Vec<f64> =
            analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12)).collect();
        let max_rel_error = relative_errors.iter().cloned().fold(0.0, f64::max);
        Self { compared: relative_errors.len(), relative_errors, max_rel_error, step }
    }
}

/// `(mean(a − b), fraction of items with a < b)`.
pub fn paired_deviation(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return shape_err(format!("paired lists of length {} and {}", a.len(), b.len()));
    }
    let n = a.len() as f64;
    let mean = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / n;
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count() as f64 / n;
    Ok((mean, wins))
}

/// `‖b − a‖ / ‖a‖`; 0 when both are zero.
pub fn relative_l2(reference: &[f64], other: &[f64]) -> f64 {
    let diff = reference.iter().zip(other).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = reference.iter().map(|x| x * x).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else if norm == 0.0 {
        f64::INFINITY
    } else {
        diff / norm
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}
