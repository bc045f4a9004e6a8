//! Special functions and adaptive quadrature used by the model and the oracle.

use statrs::function::erf::erfc;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        2.0 * (x * x).exp() - erfcx(-x)
    } else if x < 15.0 {
        (x * x).exp() * erfc(x)
    } else {
        // asymptotic expansion; the omitted term is below 1e-15 relative at x = 15
        let z = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..=8 {
            term *= -((2 * k - 1) as f64) * z;
            series += term;
        }
        series / (x * SQRT_PI)
    }
}

/// `ln(erfcx(x))`, finite for every finite `x`.
pub fn ln_erfcx(x: f64) -> f64 {
    if x < -26.0 {
        x * x + std::f64::consts::LN_2
    } else {
        erfcx(x).ln()
    }
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Soft-threshold map, the proximal operator of `t -> threshold * |t|`.
pub fn soft_threshold(t: f64, threshold: f64) -> f64 {
    t.signum() * (t.abs() - threshold).max(0.0)
}

// Gauss-Kronrod 7/15 nodes on [-1, 1] (non-negative half).
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
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadTolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_segments: usize,
}

impl Default for QuadTolerance {
    fn default() -> Self {
        QuadTolerance {
            rel: 1e-10,
            abs: 1e-300,
            max_segments: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

fn gk15<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    dim: usize,
    buf: &mut [f64],
) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f(c, buf);
    for d in 0..dim {
        kron[d] += WGK[7] * buf[d];
        gauss[d] += WG[3] * buf[d];
    }
    for i in 0..7 {
        for &x in &[c - h * XGK[i], c + h * XGK[i]] {
            f(x, buf);
            for d in 0..dim {
                kron[d] += WGK[i] * buf[d];
                if i % 2 == 1 {
                    gauss[d] += WG[i / 2] * buf[d];
                }
            }
        }
    }
    let mut error = 0.0f64;
    for d in 0..dim {
        kron[d] *= h;
        gauss[d] *= h;
        error = error.max((kron[d] - gauss[d]).abs());
    }
    Segment {
        a,
        b,
        value: kron,
        error,
    }
}

/// Globally adaptive Gauss-Kronrod integration of a vector-valued integrand.
///
/// `breaks` must be sorted and hold at least two points; every interval between
/// consecutive breaks starts out split into `panels` equal segments. The error
/// target is relative to the magnitude of component 0.
pub fn integrate<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    breaks: &[f64],
    panels: usize,
    dim: usize,
    tol: QuadTolerance,
) -> QuadResult {
    let mut buf = vec![0.0; dim];
    let mut segments = Vec::new();
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let step = (hi - lo) / panels as f64;
        for i in 0..panels {
            let a = lo + step * i as f64;
            let b = if i + 1 == panels { hi } else { a + step };
            segments.push(gk15(&mut f, a, b, dim, &mut buf));
        }
    }
    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        let mut worst = 0;
        for (i, s) in segments.iter().enumerate() {
            for d in 0..dim {
                total[d] += s.value[d];
            }
            err += s.error;
            if s.error > segments[worst].error {
                worst = i;
            }
        }
        let target = (tol.rel * total.first().copied().unwrap_or(0.0).abs()).max(tol.abs);
        if err <= target || segments.len() >= tol.max_segments || segments.is_empty() {
            return QuadResult {
                value: total,
                error: err,
            };
        }
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        segments.push(gk15(&mut f, s.a, mid, dim, &mut buf));
        segments.push(gk15(&mut f, mid, s.b, dim, &mut buf));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_matches_definition_in_the_safe_range() {
        for &x in &[-3.0, -0.5, 0.0, 0.3, 1.0, 4.0, 10.0] {
            let direct = (x * x as f64).exp() * erfc(x);
            assert!((erfcx(x) - direct).abs() <= 1e-12 * direct.abs());
        }
        assert_eq!(erfcx(0.0), 1.0);
    }

    #[test]
    fn erfcx_matches_high_precision_values() {
        // reference values from 40-digit arithmetic
        for &(x, want) in &[
            (14.999, 0.037_532_097_528_931_79),
            (15.001, 0.037_527_115_578_029_31),
            (25.0, 0.022_549_572_432_641_36),
            (100.0, 0.005_641_613_782_989_433),
        ] {
            assert!((erfcx(x) - want).abs() / want < 1e-10, "x = {x}");
        }
        assert!(ln_erfcx(1e6).is_finite());
        assert!(ln_erfcx(-40.0).is_finite());
    }

    #[test]
    fn quadrature_integrates_gaussian_and_kink() {
        let r = integrate(
            |x, out| {
                out[0] = (-0.5 * x * x).exp();
                out[1] = x.abs() * (-0.5 * x * x).exp();
            },
            &[-12.0, 0.0, 12.0],
            2,
            2,
            QuadTolerance::default(),
        );
        let s = (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value[0] - s).abs() < 1e-11);
        assert!((r.value[1] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn soft_threshold_identity() {
        assert_eq!(soft_threshold(0.0, 0.2), 0.0);
        assert_eq!(soft_threshold(1.0, 0.2), 0.8);
        assert_eq!(soft_threshold(-1.0, 0.2), -0.8);
        assert_eq!(soft_threshold(0.1, 0.2), 0.0);
    }
}
