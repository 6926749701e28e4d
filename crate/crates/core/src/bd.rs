//! Bjontegaard deltas over rate-quality and time-quality curves.
//!
//! Each curve is fitted with a least-squares cubic `log10(rate) = p(quality)`
//! and the two fits are integrated exactly over their common quality range.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 4;

/// One operating point. `rate` is bits, or seconds (or node counts) when the
/// curve describes encoding effort.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub rate: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(rate: f64, quality: f64) -> Self {
        RdPoint { rate, quality }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdResult {
    pub bdbr_percent: f64,
    pub bdt_percent: f64,
    /// `None` when `bdt_percent` is zero.
    pub ratio: Option<f64>,
}

impl BdResult {
    pub fn new(bdbr_percent: f64, bdt_percent: f64) -> Self {
        BdResult {
            bdbr_percent,
            bdt_percent,
            ratio: bd_ratio(bdbr_percent, bdt_percent),
        }
    }
}

/// Cubic in a centred and scaled quality variable.
struct Fit {
    coeffs: [f64; 4],
    center: f64,
    scale: f64,
}

impl Fit {
    /// Integral of the fit over `[lo, hi]` in quality units.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |x: f64| {
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * x.powi(k as i32 + 1) / (k + 1) as f64)
                .sum::<f64>()
        };
        let a = (lo - self.center) / self.scale;
        let b = (hi - self.center) / self.scale;
        self.scale * (anti(b) - anti(a))
    }
}

fn validate(curve: &[RdPoint]) -> Result<Vec<RdPoint>> {
    if curve.len() < MIN_POINTS {
        return Err(Error::TooFewPoints(curve.len()));
    }
    if curve.iter().any(|p| !(p.rate > 0.0) || !p.rate.is_finite()) {
        return Err(Error::NonPositiveRate);
    }
    let mut sorted = curve.to_vec();
    sorted.sort_by(|a, b| a.quality.total_cmp(&b.quality));
    if let Some(w) = sorted.windows(2).find(|w| w[0].quality == w[1].quality) {
        return Err(Error::DuplicateQuality(w[0].quality));
    }
    Ok(sorted)
}

fn fit_cubic(curve: &[RdPoint]) -> Fit {
    let lo = curve[0].quality;
    let hi = curve[curve.len() - 1].quality;
    let center = 0.5 * (lo + hi);
    let scale = (0.5 * (hi - lo)).max(f64::MIN_POSITIVE);
    let n = curve.len();
    let a = DMatrix::from_fn(n, 4, |i, k| ((curve[i].quality - center) / scale).powi(k as i32));
    let y = DVector::from_iterator(n, curve.iter().map(|p| p.rate.log10()));
    let sol = a
        .svd(true, true)
        .solve(&y, 1e-12)
        .expect("SVD computed with both factors");
    Fit {
        coeffs: [sol[0], sol[1], sol[2], sol[3]],
        center,
        scale,
    }
}

/// Average rate difference of `test` relative to `anchor` at equal quality,
/// in percent. Positive means `test` needs more rate.
pub fn bd_delta(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    let a = validate(anchor)?;
    let t = validate(test)?;
    let lo = a[0].quality.max(t[0].quality);
    let hi = a[a.len() - 1].quality.min(t[t.len() - 1].quality);
    if !(hi > lo) {
        return Err(Error::NoOverlap);
    }
    let fa = fit_cubic(&a);
    let ft = fit_cubic(&t);
    let avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

/// Encoding-time saving of `test` against `anchor`, in percent; positive
/// when `test` is faster.
pub fn bd_time(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    Ok(0.0 - bd_delta(anchor, test)?)
}

/// `bdbr / bdt`, undefined when `bdt` is zero.
pub fn bd_ratio(bdbr: f64, bdt: f64) -> Option<f64> {
    (bdt != 0.0).then(|| bdbr / bdt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(pairs: &[(f64, f64)]) -> Vec<RdPoint> {
        pairs.iter().map(|&(r, q)| RdPoint::new(r, q)).collect()
    }

    fn scaled(c: &[RdPoint], k: f64) -> Vec<RdPoint> {
        c.iter().map(|p| RdPoint::new(p.rate * k, p.quality)).collect()
    }

    fn anchor() -> Vec<RdPoint> {
        curve(&[(100.0, 30.0), (180.0, 33.0), (320.0, 36.0), (560.0, 39.0)])
    }

    /// Lagrange interpolation through four points integrated with composite
    /// Simpson on a fine grid.
    fn simpson_oracle(a: &[RdPoint], t: &[RdPoint]) -> f64 {
        fn lagrange(c: &[RdPoint], x: f64) -> f64 {
            let mut acc = 0.0;
            for (i, pi) in c.iter().enumerate() {
                let mut l = pi.rate.log10();
                for (j, pj) in c.iter().enumerate() {
                    if i != j {
                        l *= (x - pj.quality) / (pi.quality - pj.quality);
                    }
                }
                acc += l;
            }
            acc
        }
        let lo = a[0].quality.max(t[0].quality);
        let hi = a[3].quality.min(t[3].quality);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| lagrange(t, x) - lagrange(a, x);
        let mut s = f(lo) + f(hi);
        for k in 1..n {
            s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let avg = s * h / 3.0 / (hi - lo);
        (10f64.powf(avg) - 1.0) * 100.0
    }

    #[test]
    fn identity_is_zero() {
        let a = anchor();
        assert!(bd_delta(&a, &a).unwrap().abs() < 1e-9);
        assert!(bd_time(&a, &a).unwrap().abs() < 1e-9);
    }

    #[test]
    fn uniform_ten_percent() {
        let a = anchor();
        let d = bd_delta(&a, &scaled(&a, 1.10)).unwrap();
        assert!((d - 10.0).abs() < 0.01, "{d}");
    }

    #[test]
    fn five_percent_reduction_fixture() {
        let a = anchor();
        let t = curve(&[(95.0, 30.0), (171.0, 33.0), (304.0, 36.0), (532.0, 39.0)]);
        let d = bd_delta(&a, &t).unwrap();
        let oracle = simpson_oracle(&a, &t);
        assert!((d - oracle).abs() < 1e-6, "{d} vs {oracle}");
        assert!((d + 5.0).abs() < 0.05, "{d}");
    }

    #[test]
    fn time_savings() {
        let a = anchor();
        let bdt = bd_time(&a, &scaled(&a, 0.79)).unwrap();
        assert!((bdt - 21.0).abs() < 0.1, "{bdt}");
        let bdt = bd_time(&a, &scaled(&a, 2.0)).unwrap();
        assert!((bdt + 100.0).abs() < 1e-9, "{bdt}");
    }

    #[test]
    fn ratios() {
        assert!((bd_ratio(3.96, 21.09).unwrap() - 0.188).abs() < 0.001);
        assert!((bd_ratio(18.55, 58.33).unwrap() - 0.318).abs() < 0.001);
        assert_eq!(bd_ratio(0.0, 5.0), Some(0.0));
        assert_eq!(bd_ratio(3.0, 0.0), None);
        assert_eq!(BdResult::new(1.0, 0.0).ratio, None);
    }

    #[test]
    fn input_errors() {
        let a = anchor();
        assert!(matches!(bd_delta(&a[..3], &a), Err(Error::TooFewPoints(3))));
        let mut dup = a.clone();
        dup[1].quality = 30.0;
        assert!(matches!(bd_delta(&dup, &a), Err(Error::DuplicateQuality(_))));
        let far = curve(&[(1.0, 50.0), (2.0, 51.0), (3.0, 52.0), (4.0, 53.0)]);
        assert!(matches!(bd_delta(&a, &far), Err(Error::NoOverlap)));
        let mut neg = a.clone();
        neg[2].rate = 0.0;
        assert!(matches!(bd_delta(&a, &neg), Err(Error::NonPositiveRate)));
    }

    #[test]
    fn unsorted_input_is_accepted() {
        let a = anchor();
        let mut rev = scaled(&a, 1.1);
        rev.reverse();
        assert!((bd_delta(&a, &rev).unwrap() - 10.0).abs() < 0.01);
    }

    #[test]
    fn least_squares_with_more_points() {
        // Five points on an exact cubic in log-rate are fitted exactly.
        let c: Vec<RdPoint> = [28.0, 31.0, 34.0, 37.0, 40.0]
            .iter()
            .map(|&q: &f64| RdPoint::new(10f64.powf(0.01 * q * q - 0.2 * q + 3.0), q))
            .collect();
        let d = bd_delta(&c, &scaled(&c, 1.25)).unwrap();
        assert!((d - 25.0).abs() < 1e-6);
    }

    fn arb_curve() -> impl Strategy<Value = Vec<RdPoint>> {
        (
            1.0f64..1000.0,
            prop::array::uniform4(0.05f64..0.3),
            25.0f64..30.0,
            prop::array::uniform4(1.0f64..4.0),
        )
            .prop_map(|(r0, growth, q0, gaps)| {
                let (mut r, mut q) = (r0, q0);
                (0..4)
                    .map(|i| {
                        r *= 10f64.powf(growth[i]);
                        q += gaps[i];
                        RdPoint::new(r, q)
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn zero_law(a in arb_curve()) {
            prop_assert!(bd_delta(&a, &a).unwrap().abs() < 1e-9);
        }

        #[test]
        fn scale_invariance(a in arb_curve(), k in 0.01f64..100.0, s in 0.5f64..2.0) {
            let base = bd_delta(&a, &scaled(&a, s)).unwrap();
            let both = bd_delta(&scaled(&a, k), &scaled(&a, k * s)).unwrap();
            prop_assert!((base - both).abs() < 1e-6 * (1.0 + base.abs()));
        }

        #[test]
        fn antisymmetry_for_uniform_shifts(a in arb_curve(), s in 0.5f64..2.0) {
            let b = scaled(&a, s);
            let ab = bd_delta(&a, &b).unwrap();
            let ba = bd_delta(&b, &a).unwrap();
            prop_assert!((ab + ba / (1.0 + ba / 100.0)).abs() < 1e-6);
        }

        #[test]
        fn monotone_in_test_rate(a in arb_curve(), s in 0.5f64..2.0, k in 1.001f64..1.5) {
            let lo = bd_delta(&a, &scaled(&a, s)).unwrap();
            let hi = bd_delta(&a, &scaled(&a, s * k)).unwrap();
            prop_assert!(hi > lo);
        }
    }
}
