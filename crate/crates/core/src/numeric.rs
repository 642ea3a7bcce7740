//! Small numerical kernels shared across modules: order-fixed summation and
//! adaptive Gauss-Kronrod quadrature.

use thiserror::Error;

/// Sum in a fixed binary-tree order.
///
/// The split points depend only on the slice length, so the result is
/// reproducible regardless of how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean computed with [`pairwise_sum`].
pub fn pairwise_mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge on [{a}, {b}] after {intervals} subintervals (estimate {estimate}, error {error})")]
    NonConvergence {
        a: f64,
        b: f64,
        intervals: usize,
        estimate: f64,
        error: f64,
    },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadratureError::NonFinite { at: x })
        }
    };
    let fc = eval(centre)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = eval(centre - dx)? + eval(centre + dx)?;
        kronrod += w * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Subintervals are bisected until each local error estimate is below
/// `rel_tol` times the running total (with a tiny absolute floor so that
/// integrals of exactly zero terminate).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64, QuadratureError> {
    const MAX_INTERVALS: usize = 20_000;
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (first, first_err) = gk15(&f, lo, hi)?;
    let mut intervals = vec![(lo, hi, first, first_err)];
    let mut total = first;
    let mut total_err = first_err;
    let mut count = 1;
    loop {
        let floor = 1e-300_f64.max(f64::EPSILON * 4.0 * intervals.iter().map(|iv| iv.2.abs()).sum::<f64>());
        if total_err <= (rel_tol * total.abs()).max(floor) {
            return Ok(sign * total);
        }
        if count >= MAX_INTERVALS {
            return Err(QuadratureError::NonConvergence {
                a: lo,
                b: hi,
                intervals: count,
                estimate: total,
                error: total_err,
            });
        }
        // Split the interval carrying the largest error.
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, iv)| if iv.3 > acc.1 { (i, iv.3) } else { acc });
        let (ia, ib, val, err) = intervals.swap_remove(idx);
        let mid = 0.5 * (ia + ib);
        if mid <= ia || mid >= ib {
            return Err(QuadratureError::NonConvergence {
                a: lo,
                b: hi,
                intervals: count,
                estimate: total,
                error: total_err,
            });
        }
        let (l, le) = gk15(&f, ia, mid)?;
        let (r, re) = gk15(&f, mid, ib)?;
        total += l + r - val;
        total_err += le + re - err;
        intervals.push((ia, mid, l, le));
        intervals.push((mid, ib, r, re));
        count += 1;
        if total_err < 0.0 {
            total_err = intervals.iter().map(|iv| iv.3).sum();
        }
    }
}
