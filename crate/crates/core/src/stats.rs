//! Paired t-test, Wilcoxon signed-rank test (normal approximation) and
//! Holm-Bonferroni step-down correction.

use serde::Serialize;

use crate::error::{Error, Result};

/// Family-wise significance level.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject_h0_at_95: bool,
}

// ---- special functions -------------------------------------------------

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Gamma(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student-t cumulative distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized lower incomplete gamma P(a, x).
fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut term = sum;
        let mut ap = a;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) by continued fraction.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    let x2 = x * x;
    if x2 < 1.5 {
        1.0 - gamma_p(0.5, x2)
    } else {
        gamma_q_cf(0.5, x2)
    }
}

/// Standard normal cumulative distribution.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

// ---- tests ---------------------------------------------------------------

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("differences".into()));
    }
    Ok(())
}

/// Two-tailed one-sample t-test of the mean difference against zero.
pub fn paired_t(differences: &[f64]) -> Result<TestResult> {
    check_finite(differences)?;
    let n = differences.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "paired t-test needs at least 2 observations, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = differences.iter().sum::<f64>() / nf;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var <= 0.0 {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    let t = mean * nf.sqrt() / var.sqrt();
    let upper = 1.0 - student_t_cdf(t.abs(), nf - 1.0);
    // Small tails lose precision through 1 - cdf; use the symmetric lower tail.
    let tail = student_t_cdf(-t.abs(), nf - 1.0).min(upper.max(0.0));
    let p = (2.0 * tail).clamp(0.0, 1.0);
    Ok(TestResult {
        statistic: t,
        p_value: p,
        reject_h0_at_95: p < ALPHA,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// W = min(sum of positive ranks, sum of negative ranks), its two-sided
    /// normal-approximation p-value, and the critical-value decision.
    pub test: TestResult,
    pub sum_positive: f64,
    pub sum_negative: f64,
    /// Non-zero differences that were ranked.
    pub n_used: usize,
    pub mean: f64,
    pub sd: f64,
    pub z: f64,
    /// Two-sided p with a 0.5 continuity correction.
    pub p_value_corrected: f64,
    /// One-sided p for a positive shift (positive ranks dominate).
    pub p_value_greater: f64,
    /// Largest W still significant at two-sided 0.05 (exact null).
    pub critical_value: Option<f64>,
}

/// Average ranks of `values` (1-based), ties sharing the mean position.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided 5% critical value of W for `n` untied ranks: the
/// largest w with P(W <= w) <= 0.025. `None` when even w = 0 is too likely.
pub fn wilcoxon_critical_value(n: usize) -> Option<f64> {
    if n == 0 {
        return None;
    }
    let max = n * (n + 1) / 2;
    if n > 200 {
        let mu = max as f64 / 2.0;
        let sd = ((n * (n + 1) * (2 * n + 1)) as f64 / 24.0).sqrt();
        return Some((mu - 1.959_963_984_540_054 * sd).floor());
    }
    // Null distribution of the positive-rank sum: each rank in or out w.p. 1/2.
    let mut prob = vec![0.0f64; max + 1];
    prob[0] = 1.0;
    for r in 1..=n {
        for s in (r..=max).rev() {
            prob[s] = 0.5 * (prob[s] + prob[s - r]);
        }
        for p in prob[..r].iter_mut() {
            *p *= 0.5;
        }
    }
    let mut cum = 0.0;
    let mut best = None;
    for (w, p) in prob.iter().enumerate() {
        cum += p;
        if cum <= ALPHA / 2.0 + 1e-12 {
            best = Some(w as f64);
        } else {
            break;
        }
    }
    best
}

pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<WilcoxonResult> {
    check_finite(differences)?;
    let nonzero: Vec<f64> = differences.iter().copied().filter(|&d| d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Degenerate("all differences are zero".into()));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let (mut pos, mut neg) = (0.0, 0.0);
    for (d, r) in nonzero.iter().zip(&ranks) {
        if *d > 0.0 {
            pos += r;
        } else {
            neg += r;
        }
    }
    let n = nonzero.len();
    let nf = n as f64;
    let w = pos.min(neg);
    let mean = nf * (nf + 1.0) / 4.0;
    let sd = (nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0).sqrt();
    let z = (w - mean) / sd;
    let p = (2.0 * normal_cdf(-(w - mean).abs() / sd)).min(1.0);
    let corrected_gap = ((w - mean).abs() - 0.5).max(0.0);
    let p_corrected = (2.0 * normal_cdf(-corrected_gap / sd)).min(1.0);
    let p_greater = normal_cdf(-(pos - mean) / sd);
    let critical = wilcoxon_critical_value(n);
    Ok(WilcoxonResult {
        test: TestResult {
            statistic: w,
            p_value: p,
            reject_h0_at_95: critical.is_some_and(|c| w < c),
        },
        sum_positive: pos,
        sum_negative: neg,
        n_used: n,
        mean,
        sd,
        z,
        p_value_corrected: p_corrected,
        p_value_greater: p_greater,
        critical_value: critical,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolmDecision {
    pub p_value: f64,
    /// 1 for the smallest p.
    pub rank: usize,
    /// `0.05 / (k + 1 - rank)`.
    pub alpha: f64,
    pub reject: bool,
}

/// Holm step-down: hypotheses are tested in ascending p order and rejection
/// stops at the first p that is not below its adjusted level. Output is in
/// input order.
pub fn holm_bonferroni(p_values: &[f64]) -> Result<Vec<HolmDecision>> {
    if p_values.is_empty() {
        return Err(Error::InvalidArgument("no p-values".into()));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!(
            "p-value {p} outside [0, 1]"
        )));
    }
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut out = vec![
        HolmDecision {
            p_value: 0.0,
            rank: 0,
            alpha: 0.0,
            reject: false,
        };
        k
    ];
    let mut still_rejecting = true;
    for (pos, &i) in order.iter().enumerate() {
        let rank = pos + 1;
        let alpha = ALPHA / (k + 1 - rank) as f64;
        let reject = still_rejecting && p_values[i] < alpha;
        still_rejecting = reject;
        out[i] = HolmDecision {
            p_value: p_values[i],
            rank,
            alpha,
            reject,
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference values from an independent statistics package.
    #[test]
    fn special_functions_match_reference() {
        let cases_t = [
            (7.1582, 24.0, 0.9999998935024592),
            (2.6552, 24.0, 0.9930723982754023),
            (0.5, 3.0, 0.6742760175759246),
            (-1.3, 10.0, 0.11138290860342223),
            (2.0, 1.0, 0.8524163823495667),
            (1.0, 100.0, 0.8401379221079381),
            (-40.0, 3.0, 1.719034039457927e-05),
            (0.3, 2.5, 0.6063288142524015),
        ];
        for (t, df, want) in cases_t {
            let got = student_t_cdf(t, df);
            assert!((got - want).abs() < 1e-10, "t={t} df={df}: {got} vs {want}");
        }
        let cases_beta = [
            (2.0, 3.0, 0.4, 0.5247999999999999),
            (12.0, 0.5, 0.77, 0.013168722006851959),
            (0.5, 0.5, 0.1, 0.20483276469913345),
            (50.0, 0.5, 0.99, 0.3173043978741973),
        ];
        for (a, b, x, want) in cases_beta {
            assert!((incomplete_beta(a, b, x) - want).abs() < 1e-12);
        }
        let cases_norm = [
            (-3.5, 0.00023262907903552502),
            (-1.0, 0.15865525393145707),
            (0.0, 0.5),
            (0.5, 0.6914624612740131),
            (2.4082, 0.9919843020218118),
            (6.0, 0.9999999990134123),
        ];
        for (z, want) in cases_norm {
            assert!((normal_cdf(z) - want).abs() < 1e-13, "z={z}");
        }
        assert!((ln_gamma(10.0) - 362880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn t_test_examples() {
        let r = paired_t(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((r.statistic - 4.242640687119285).abs() < 1e-12);
        assert!((r.p_value - 0.013235599563682695).abs() < 1e-9);
        assert!(r.reject_h0_at_95);
        assert!(matches!(paired_t(&[0.0; 5]), Err(Error::Degenerate(_))));
        assert!(paired_t(&[1.0]).is_err());
    }

    #[test]
    fn wilcoxon_moments_for_25() {
        let d: Vec<f64> = (1..=25).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&d).unwrap();
        assert_eq!(r.mean, 162.5);
        assert!((r.sd - 37.165_171_868_296_27).abs() < 1e-9);
        assert_eq!(r.sum_positive, 325.0);
        assert_eq!(r.sum_negative, 0.0);
        assert_eq!(r.test.statistic, 0.0);
        assert!(r.test.reject_h0_at_95);
        assert_eq!(r.critical_value, Some(89.0));
    }

    #[test]
    fn wilcoxon_tied_ranks_average() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
        let r = wilcoxon_signed_rank(&[1.0, -1.0, 2.0, 0.0]).unwrap();
        assert_eq!(r.n_used, 3);
        assert_eq!((r.sum_positive, r.sum_negative), (4.5, 1.5));
        assert!(wilcoxon_signed_rank(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn critical_values_match_tables() {
        assert_eq!(wilcoxon_critical_value(5), None);
        assert_eq!(wilcoxon_critical_value(6), Some(0.0));
        assert_eq!(wilcoxon_critical_value(10), Some(8.0));
        assert_eq!(wilcoxon_critical_value(20), Some(52.0));
        assert_eq!(wilcoxon_critical_value(25), Some(89.0));
        assert_eq!(wilcoxon_critical_value(30), Some(137.0));
    }

    #[test]
    fn holm_examples() {
        let levels = holm_bonferroni(&[0.001, 0.002, 0.003]).unwrap();
        let alphas: Vec<f64> = levels.iter().map(|h| h.alpha).collect();
        assert_eq!(alphas, vec![0.05 / 3.0, 0.025, 0.05]);
        assert!(levels.iter().all(|h| h.reject));

        let single = holm_bonferroni(&[0.2]).unwrap();
        assert_eq!(single[0].alpha, 0.05);

        let h = holm_bonferroni(&[0.04, 0.001, 0.2]).unwrap();
        assert_eq!(h.iter().map(|d| d.rank).collect::<Vec<_>>(), vec![2, 1, 3]);
        assert_eq!(
            h.iter().map(|d| d.reject).collect::<Vec<_>>(),
            vec![false, true, false]
        );

        assert!(holm_bonferroni(&[]).is_err());
        assert!(holm_bonferroni(&[1.5]).is_err());
    }

    proptest! {
        #[test]
        fn rank_sums_total(d in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            prop_assume!(d.iter().any(|v| *v != 0.0));
            let r = wilcoxon_signed_rank(&d).unwrap();
            let n = r.n_used as f64;
            prop_assert!((r.sum_positive + r.sum_negative - n * (n + 1.0) / 2.0).abs() < 1e-9);
            let neg: Vec<f64> = d.iter().map(|v| -v).collect();
            let s = wilcoxon_signed_rank(&neg).unwrap();
            prop_assert_eq!(s.sum_positive, r.sum_negative);
            prop_assert_eq!(s.sum_negative, r.sum_positive);
            prop_assert_eq!(s.test.statistic, r.test.statistic);
        }

        #[test]
        fn holm_levels_monotone(p in prop::collection::vec(0.0f64..=1.0, 1..12)) {
            let h = holm_bonferroni(&p).unwrap();
            let mut by_rank = h.clone();
            by_rank.sort_by_key(|d| d.rank);
            for pair in by_rank.windows(2) {
                prop_assert!(pair[0].alpha <= pair[1].alpha);
            }
            prop_assert_eq!(by_rank[0].alpha, ALPHA / p.len() as f64);
        }
    }
}
