//! One-dimensional marginals and their monotone transport maps.
//!
//! Two representations are supported: Gaussian parameters and sorted
//! empirical samples. Quantile queries on empirical data use the
//! left-continuous generalized inverse, so `quantile(p)` is the
//! `⌈pN⌉`-th smallest sample. Transport maps out of an empirical source
//! instead use midpoint ranks `(i − 0.5)/N` with linear interpolation
//! between samples, which turns the map between equal-size samples into
//! plain sort matching.

use std::f64::consts::SQRT_2;

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// A one-dimensional probability law.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist1D {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// Samples sorted nondecreasing.
    Empirical(Vec<f64>),
}

impl Dist1D {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::Domain(format!(
                "gaussian marginal needs finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self::Gaussian { mean, variance })
    }

    /// Sorts `samples`; rejects empty or non-finite input.
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("empirical marginal needs samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("empirical samples must be finite".into()));
        }
        samples.sort_unstable_by(f64::total_cmp);
        Ok(Self::Empirical(samples))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } => *mean,
            Self::Empirical(s) => s.iter().sum::<f64>() / s.len() as f64,
        }
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        match self {
            Self::Gaussian { variance, .. } => *variance,
            Self::Empirical(s) => {
                let m = self.mean();
                s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64
            }
        }
    }

    /// Left-continuous inverse CDF at `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        Ok(self.quantile_unchecked(p))
    }

    /// Quantile with `p` clamped into the support of the rule.
    fn quantile_unchecked(&self, p: f64) -> f64 {
        match self {
            Self::Gaussian { mean, variance } => {
                let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                mean + variance.sqrt() * standard_normal_quantile(p)
            }
            Self::Empirical(s) => {
                let n = s.len();
                let rank = (p * n as f64).ceil() as usize;
                s[rank.clamp(1, n) - 1]
            }
        }
    }

    /// CDF used as the input side of a transport map.
    ///
    /// Empirical: midpoint ranks, linear interpolation, clamped to
    /// `[0.5/N, 1 − 0.5/N]`. A value equal to a run of tied samples gets
    /// the rank of the first of them.
    fn transport_cdf(&self, s: f64) -> f64 {
        match self {
            Self::Gaussian { mean, variance } => normal_cdf((s - mean) / variance.sqrt()),
            Self::Empirical(samples) => {
                let n = samples.len() as f64;
                let idx = samples.partition_point(|&v| v < s);
                if idx == samples.len() {
                    return 1.0 - 0.5 / n;
                }
                if samples[idx] == s || idx == 0 {
                    return (idx as f64 + 0.5) / n;
                }
                let (lo, hi) = (samples[idx - 1], samples[idx]);
                let frac = (s - lo) / (hi - lo);
                (idx as f64 - 0.5 + frac) / n
            }
        }
    }
}

/// Standard normal quantile, `Φ⁻¹(p) = −√2 · erfc⁻¹(2p)`.
pub fn standard_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// A monotone nondecreasing map of the real line.
#[derive(Debug, Clone, PartialEq)]
pub enum Map1D {
    Affine {
        slope: f64,
        intercept: f64,
    },
    /// `s ↦ F_target⁻¹(F_source(s))`.
    QuantileComposed {
        source: Dist1D,
        target: Dist1D,
    },
}

impl Map1D {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Self::Affine { slope, intercept } => slope * s + intercept,
            Self::QuantileComposed { source, target } => {
                target.quantile_unchecked(source.transport_cdf(s))
            }
        }
    }
}

/// Optimal quadratic-cost transport map from `source` to `target`.
pub fn ot_map_1d(source: &Dist1D, target: &Dist1D) -> Map1D {
    match (source, target) {
        (
            Dist1D::Gaussian {
                mean: m_s,
                variance: v_s,
            },
            Dist1D::Gaussian {
                mean: m_t,
                variance: v_t,
            },
        ) => {
            let slope = (v_t / v_s).sqrt();
            Map1D::Affine {
                slope,
                intercept: m_t - slope * m_s,
            }
        }
        _ => Map1D::QuantileComposed {
            source: source.clone(),
            target: target.clone(),
        },
    }
}

/// Squared 2-Wasserstein distance between two 1D laws.
///
/// Gaussian pairs use the closed form. Anything else integrates the
/// squared quantile difference with the midpoint rule on `quantile_grid`
/// cells.
pub fn w2_1d(mu: &Dist1D, nu: &Dist1D, quantile_grid: usize) -> Result<f64> {
    if let (
        Dist1D::Gaussian {
            mean: m1,
            variance: v1,
        },
        Dist1D::Gaussian {
            mean: m2,
            variance: v2,
        },
    ) = (mu, nu)
    {
        return Ok((m1 - m2).powi(2) + (v1.sqrt() - v2.sqrt()).powi(2));
    }
    if quantile_grid == 0 {
        return Err(Error::Config(
            "quantile grid must have at least one cell".into(),
        ));
    }
    let g = quantile_grid as f64;
    let total: f64 = (1..=quantile_grid)
        .map(|j| {
            let z = (j as f64 - 0.5) / g;
            (mu.quantile_unchecked(z) - nu.quantile_unchecked(z)).powi(2)
        })
        .sum();
    Ok(total / g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn emp(v: &[f64]) -> Dist1D {
        Dist1D::empirical(v.to_vec()).unwrap()
    }

    #[test]
    fn gaussian_median_is_the_mean() {
        let d = Dist1D::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(d.quantile(0.5).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn empirical_quantile_uses_ceiling_rank() {
        let d = emp(&[4.0, 2.0, 1.0, 3.0]);
        assert_eq!(d.quantile(0.5).unwrap(), 2.0);
        assert_eq!(d.quantile(0.51).unwrap(), 3.0);
        assert_eq!(d.quantile(0.01).unwrap(), 1.0);
        assert_eq!(d.quantile(0.99).unwrap(), 4.0);
    }

    #[test]
    fn gaussian_quantile_at_one_sigma() {
        // Φ(1) = 0.841344746068543 (mpmath, 30 digits).
        let d = Dist1D::gaussian(3.0, 4.0).unwrap();
        assert_abs_diff_eq!(d.quantile(0.8413).unwrap(), 5.0, epsilon = 1e-3);
        assert_abs_diff_eq!(
            d.quantile(0.841_344_746_068_543).unwrap(),
            5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn quantile_rejects_levels_outside_unit_interval() {
        let d = Dist1D::gaussian(0.0, 1.0).unwrap();
        for p in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(d.quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn invalid_marginals_are_rejected() {
        assert!(Dist1D::gaussian(0.0, 0.0).is_err());
        assert!(Dist1D::gaussian(0.0, -1.0).is_err());
        assert!(Dist1D::empirical(vec![]).is_err());
        assert!(Dist1D::empirical(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn identity_gaussian_map() {
        let g = Dist1D::gaussian(0.0, 1.0).unwrap();
        assert_eq!(
            ot_map_1d(&g, &g),
            Map1D::Affine {
                slope: 1.0,
                intercept: 0.0
            }
        );
    }

    #[test]
    fn affine_map_for_projected_example_pair() {
        let src = Dist1D::gaussian(-2.0, 1.0).unwrap();
        let tgt = Dist1D::gaussian(-8.0, 0.1).unwrap();
        let Map1D::Affine { slope, intercept } = ot_map_1d(&src, &tgt) else {
            panic!("expected affine map");
        };
        assert_abs_diff_eq!(slope, 0.1f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(intercept, -8.0 + 2.0 * 0.1f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(slope, 0.31623, epsilon = 1e-5);
        assert_abs_diff_eq!(intercept, -7.36754, epsilon = 1e-5);
    }

    #[test]
    fn equal_size_empirical_map_is_sort_matching() {
        let map = ot_map_1d(&emp(&[0.0, 1.0, 2.0]), &emp(&[10.0, 11.0, 12.0]));
        assert_eq!(map.eval(1.0), 11.0);
        assert_eq!(map.eval(0.0), 10.0);
        assert_eq!(map.eval(2.0), 12.0);
    }

    #[test]
    fn empirical_map_clamps_outside_support() {
        let map = ot_map_1d(&emp(&[0.0, 1.0]), &Dist1D::gaussian(0.0, 1.0).unwrap());
        let lo = map.eval(-1e9);
        let hi = map.eval(1e9);
        assert!(lo.is_finite() && hi.is_finite());
        assert_abs_diff_eq!(lo, standard_normal_quantile(0.25), epsilon = 1e-12);
        assert_abs_diff_eq!(hi, standard_normal_quantile(0.75), epsilon = 1e-12);
    }

    #[test]
    fn w2_examples() {
        let g = Dist1D::gaussian(-2.0, 1.0).unwrap();
        assert_eq!(w2_1d(&g, &g, 1).unwrap(), 0.0);
        let e = emp(&[0.5, 1.5, 9.0]);
        assert_eq!(w2_1d(&e, &e, 64).unwrap(), 0.0);

        let f = Dist1D::gaussian(-8.0, 0.1).unwrap();
        let expect = 36.0 + (1.0 - 0.1f64.sqrt()).powi(2);
        assert_abs_diff_eq!(w2_1d(&g, &f, 1).unwrap(), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(expect, 36.46754, epsilon = 1e-5);

        // Both monotone couplings of {0,2} and {1,3} cost 1 per unit mass.
        assert_abs_diff_eq!(
            w2_1d(&emp(&[0.0, 2.0]), &emp(&[1.0, 3.0]), 2).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(w2_1d(&e, &g, 0).is_err());
    }

    #[test]
    fn mixed_w2_approaches_closed_form() {
        let a = Dist1D::gaussian(1.0, 2.0).unwrap();
        let b = Dist1D::gaussian(-0.5, 0.3).unwrap();
        let closed = w2_1d(&a, &b, 1).unwrap();
        let grid: Vec<f64> = (1..=20_000)
            .map(|j| b.quantile((j as f64 - 0.5) / 20_000.0).unwrap())
            .collect();
        let quad = w2_1d(&a, &emp(&grid), 20_000).unwrap();
        assert!((quad - closed).abs() / closed < 1e-3);
    }

    #[test]
    fn gaussian_cdf_and_quantile_invert() {
        for p in [1e-10, 0.001, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-10] {
            let x = standard_normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() <= 1e-10 * p, "p = {p}");
        }
    }

    fn dist_strategy() -> impl Strategy<Value = Dist1D> {
        prop_oneof![
            (-5.0..5.0f64, 0.01..4.0f64).prop_map(|(m, v)| Dist1D::gaussian(m, v).unwrap()),
            prop::collection::vec(-10.0..10.0f64, 1..40)
                .prop_map(|v| Dist1D::empirical(v).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn maps_are_monotone(src in dist_strategy(), tgt in dist_strategy()) {
            let map = ot_map_1d(&src, &tgt);
            let lo = src.quantile(0.001).unwrap();
            let hi = src.quantile(0.999).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..1000 {
                let s = lo + (hi - lo) * i as f64 / 999.0;
                let y = map.eval(s);
                prop_assert!(y >= prev, "map decreased at s = {}", s);
                prev = y;
            }
        }

        #[test]
        fn w2_is_even_under_reflection(src in dist_strategy(), tgt in dist_strategy()) {
            let reflect = |d: &Dist1D| match d {
                Dist1D::Gaussian { mean, variance } => Dist1D::gaussian(-mean, *variance).unwrap(),
                Dist1D::Empirical(s) => Dist1D::empirical(s.iter().map(|x| -x).collect()).unwrap(),
            };
            // Midpoints (2j-1)/2048 never hit an atom boundary k/N for N < 40.
            let a = w2_1d(&src, &tgt, 1024).unwrap();
            let b = w2_1d(&reflect(&src), &reflect(&tgt), 1024).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn sort_matching_on_equal_sizes(
            pair in (1usize..30).prop_flat_map(|n| (
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(-10.0..10.0f64, n),
            ))
        ) {
            let src = Dist1D::empirical(pair.0).unwrap();
            let tgt = Dist1D::empirical(pair.1).unwrap();
            let (Dist1D::Empirical(s), Dist1D::Empirical(t)) = (&src, &tgt) else { unreachable!() };
            let map = ot_map_1d(&src, &tgt);
            for (i, &x) in s.iter().enumerate() {
                // First-of-ties rank.
                let first = s.partition_point(|&v| v < x);
                prop_assert_eq!(map.eval(x), t[first]);
                if first == i {
                    prop_assert_eq!(map.eval(x), t[i]);
                }
            }
        }
    }
}
