//! Kulldorff's Bernoulli log-likelihood ratio, the hypergeometric tail bound
//! built on the same functional, and the detection-boundary quantity.
//!
//! All logarithms are natural. `0 · log 0` is taken as 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window counts against dataset totals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counts {
    pub n_in: usize,
    pub ones_in: usize,
    pub n_total: usize,
    pub ones_total: usize,
}

impl Counts {
    pub fn new(n_in: usize, ones_in: usize, n_total: usize, ones_total: usize) -> Result<Self> {
        let c = Self {
            n_in,
            ones_in,
            n_total,
            ones_total,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.ones_in <= self.n_in
            && self.n_in <= self.n_total
            && self.ones_total <= self.n_total
            && self.ones_in <= self.ones_total
            && self.ones_total - self.ones_in <= self.n_total - self.n_in;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidCounts(format!("{self:?}")))
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n_in == 0
    }

    /// Proportion of ones inside the window.
    pub fn p_hat(&self) -> f64 {
        self.ones_in as f64 / self.n_in as f64
    }

    /// Proportion of ones outside the window.
    pub fn q_hat(&self) -> f64 {
        (self.ones_total - self.ones_in) as f64 / (self.n_total - self.n_in) as f64
    }

    pub fn pbar(&self) -> f64 {
        self.ones_total as f64 / self.n_total as f64
    }

    /// The same counts seen from the complement window.
    pub fn complement(&self) -> Self {
        Self {
            n_in: self.n_total - self.n_in,
            ones_in: self.ones_total - self.ones_in,
            ..*self
        }
    }
}

/// `a · ln(a / b)` with `0 · ln 0 = 0`.
#[inline]
fn xlogx_over(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

/// `weight · KL(Bernoulli(p) ‖ Bernoulli(pbar))`.
#[inline]
fn bernoulli_divergence(weight: f64, p: f64, pbar: f64) -> f64 {
    weight * (xlogx_over(p, pbar) + xlogx_over(1.0 - p, 1.0 - pbar))
}

/// Two-term log-likelihood ratio for `ones_in` successes among `n_in` draws,
/// population `n_total` with `ones_total` successes. Caller guarantees
/// `0 < n_in < n_total`.
#[inline]
pub(crate) fn llr_raw(n_in: usize, ones_in: usize, n_total: usize, ones_total: usize) -> f64 {
    let pbar = ones_total as f64 / n_total as f64;
    let n_out = n_total - n_in;
    let p_hat = ones_in as f64 / n_in as f64;
    let q_hat = (ones_total - ones_in) as f64 / n_out as f64;
    let v = bernoulli_divergence(n_in as f64, p_hat, pbar) + bernoulli_divergence(n_out as f64, q_hat, pbar);
    // Rounding can leave tiny negative values when p_hat == q_hat.
    v.max(0.0)
}

fn check_labels(c: &Counts) -> Result<()> {
    c.validate()?;
    if c.ones_total == 0 || c.ones_total == c.n_total {
        return Err(Error::DegenerateLabels {
            n_total: c.n_total,
            ones_total: c.ones_total,
        });
    }
    Ok(())
}

/// One-sided local statistic `T(R)`: the log-likelihood ratio when the window's
/// success rate is at least the complement's, zero otherwise.
///
/// Windows holding no points or all points carry no contrast and score 0.
pub fn llr(counts: &Counts) -> Result<f64> {
    check_labels(counts)?;
    Ok(llr_one_sided_unchecked(
        counts.n_in,
        counts.ones_in,
        counts.n_total,
        counts.ones_total,
    ))
}

/// Two-sided variant: the same expression without zeroing when the window is
/// depleted rather than enriched.
pub fn llr_two_sided(counts: &Counts) -> Result<f64> {
    check_labels(counts)?;
    Ok(llr_two_sided_unchecked(
        counts.n_in,
        counts.ones_in,
        counts.n_total,
        counts.ones_total,
    ))
}

#[inline]
pub(crate) fn llr_one_sided_unchecked(n_in: usize, ones_in: usize, n_total: usize, ones_total: usize) -> f64 {
    if n_in == 0 || n_in == n_total {
        return 0.0;
    }
    // q_hat <= p_hat  <=>  ones_in * (N - n) >= (K - ones_in) * n, exact in integers.
    let lhs = ones_in as u128 * (n_total - n_in) as u128;
    let rhs = (ones_total - ones_in) as u128 * n_in as u128;
    if lhs < rhs {
        return 0.0;
    }
    llr_raw(n_in, ones_in, n_total, ones_total)
}

#[inline]
pub(crate) fn llr_two_sided_unchecked(n_in: usize, ones_in: usize, n_total: usize, ones_total: usize) -> f64 {
    if n_in == 0 || n_in == n_total {
        return 0.0;
    }
    llr_raw(n_in, ones_in, n_total, ones_total)
}

/// Which local statistic a scan uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    OneSided,
    TwoSided,
}

impl Sidedness {
    #[inline]
    pub fn eval(self, n_in: usize, ones_in: usize, n_total: usize, ones_total: usize) -> f64 {
        match self {
            Sidedness::OneSided => llr_one_sided_unchecked(n_in, ones_in, n_total, ones_total),
            Sidedness::TwoSided => llr_two_sided_unchecked(n_in, ones_in, n_total, ones_total),
        }
    }

    pub fn eval_counts(self, counts: &Counts) -> Result<f64> {
        match self {
            Sidedness::OneSided => llr(counts),
            Sidedness::TwoSided => llr_two_sided(counts),
        }
    }
}

/// Parameters of a hypergeometric draw: `draws` items without replacement out
/// of `n_total`, of which `reds` are red; `x` red items were observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypergeomParams {
    pub n_total: usize,
    pub reds: usize,
    pub draws: usize,
    pub x: usize,
}

impl HypergeomParams {
    pub fn new(n_total: usize, reds: usize, draws: usize, x: usize) -> Result<Self> {
        if !(0 < draws && draws < n_total) {
            return Err(Error::InvalidParams(format!(
                "need 0 < draws < N, got draws = {draws}, N = {n_total}"
            )));
        }
        if !(0 < reds && reds < n_total) {
            return Err(Error::InvalidParams(format!(
                "need 0 < reds < N, got reds = {reds}, N = {n_total}"
            )));
        }
        let p = Self {
            n_total,
            reds,
            draws,
            x,
        };
        let (lo, hi) = p.support();
        if x < lo || x > hi {
            return Err(Error::InvalidParams(format!("x = {x} outside support [{lo}, {hi}]")));
        }
        Ok(p)
    }

    /// Smallest and largest possible red counts.
    pub fn support(&self) -> (usize, usize) {
        let lo = (self.draws + self.reds).saturating_sub(self.n_total);
        (lo, self.draws.min(self.reds))
    }

    /// Mean red count `m = n R / N`.
    pub fn mean(&self) -> f64 {
        self.draws as f64 * self.reds as f64 / self.n_total as f64
    }

    pub fn with_x(&self, x: usize) -> Result<Self> {
        Self::new(self.n_total, self.reds, self.draws, x)
    }

    fn mean_cmp(&self) -> std::cmp::Ordering {
        // x vs nR/N compared exactly in integers.
        (self.x as u128 * self.n_total as u128).cmp(&(self.draws as u128 * self.reds as u128))
    }
}

/// `L(x)`, the log-likelihood-ratio functional evaluated at a red count.
pub fn l_function(params: &HypergeomParams) -> f64 {
    llr_raw(params.draws, params.x, params.n_total, params.reds)
}

/// Constant `C = 2 exp{13 / (12 p̄(1 − p̄)) · (1/n + 1/(N − n))}` of the tail bound.
pub fn bound_constant(params: &HypergeomParams) -> f64 {
    let pbar = params.reds as f64 / params.n_total as f64;
    let n = params.draws as f64;
    let rest = (params.n_total - params.draws) as f64;
    2.0 * (13.0 / (12.0 * pbar * (1.0 - pbar)) * (1.0 / n + 1.0 / rest)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `P(X ≥ x)` for `x > m`.
    Upper,
    /// `P(X ≤ x)` for `x < m`.
    Lower,
    /// `P(L(X) ≥ t)` with `t = x > 0`.
    TwoSidedL,
}

/// Concentration bound `C (L + 2) e^{-L}` on the hypergeometric tail.
///
/// For [`Side::TwoSidedL`] the observation `x` is read as the threshold `t`;
/// use [`l_tail_bound`] for non-integer thresholds. The bound may exceed 1.
pub fn tail_bound(params: &HypergeomParams, side: Side) -> Result<f64> {
    use std::cmp::Ordering::*;
    let c = bound_constant(params);
    match (side, params.mean_cmp()) {
        (Side::Upper, Greater) | (Side::Lower, Less) => {
            let l = l_function(params);
            Ok(c * (l + 2.0) * (-l).exp())
        }
        (Side::TwoSidedL, _) if params.x > 0 => Ok(l_tail_bound(c, params.x as f64)),
        (Side::TwoSidedL, _) => Err(Error::InvalidSide("threshold t must be positive".into())),
        (Side::Upper, _) => Err(Error::InvalidSide(format!(
            "upper tail needs x > m = {}, got {}",
            params.mean(),
            params.x
        ))),
        (Side::Lower, _) => Err(Error::InvalidSide(format!(
            "lower tail needs x < m = {}, got {}",
            params.mean(),
            params.x
        ))),
    }
}

/// `2 C (t + 2) e^{-t}`, the bound on `P(L(X) ≥ t)`.
pub fn l_tail_bound(c: f64, t: f64) -> f64 {
    2.0 * c * (t + 2.0) * (-t).exp()
}

/// `D(F(R), p, q) = F(R)(1 − F(R)) (p − q)² / (p (1 − q))`.
pub fn detection_boundary(f_r: f64, p: f64, q: f64) -> Result<f64> {
    if !(f_r > 0.0 && f_r < 1.0) {
        return Err(Error::InvalidArgument(format!("F(R) = {f_r} must lie in (0, 1)")));
    }
    if !(p > 0.0 && p <= 1.0 && (0.0..1.0).contains(&q)) {
        return Err(Error::InvalidArgument(format!(
            "need p in (0, 1] and q in [0, 1), got p = {p}, q = {q}"
        )));
    }
    if q >= p {
        return Err(Error::InvalidAlternative { p, q });
    }
    let d = p - q;
    Ok(f_r * (1.0 - f_r) * d * d / (p * (1.0 - q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values from 50-digit evaluation of the two-term formula.
    const T_100_40_20_15: f64 = 6.367_553_844_129_866_9;
    const T2_100_40_20_5: f64 = 1.229_327_226_432_815_5;
    const L_50_20_10_8: f64 = 4.211_987_032_885_204_5;
    const L_50_20_10_0: f64 = 5.924_696_128_065_009;

    #[test]
    fn llr_examples() {
        let c = |k| Counts::new(20, k, 100, 40).unwrap();
        assert_eq!(llr(&c(8)).unwrap(), 0.0);
        assert_eq!(llr(&c(5)).unwrap(), 0.0);
        assert!(rel(llr(&c(15)).unwrap(), T_100_40_20_15) < 1e-12);
    }

    #[test]
    fn two_sided_examples() {
        let c = |k| Counts::new(20, k, 100, 40).unwrap();
        assert_eq!(llr_two_sided(&c(8)).unwrap(), 0.0);
        assert_eq!(llr_two_sided(&c(15)).unwrap(), llr(&c(15)).unwrap());
        let v = llr_two_sided(&c(5)).unwrap();
        assert!(v > 0.0);
        assert!(rel(v, T2_100_40_20_5) < 1e-12);
    }

    #[test]
    fn degenerate_labels_rejected() {
        let c = Counts::new(10, 0, 50, 0).unwrap();
        assert!(matches!(llr(&c), Err(Error::DegenerateLabels { .. })));
        let c = Counts::new(10, 10, 50, 50).unwrap();
        assert!(matches!(llr_two_sided(&c), Err(Error::DegenerateLabels { .. })));
    }

    #[test]
    fn counts_invariants() {
        assert!(Counts::new(5, 6, 10, 8).is_err());
        assert!(Counts::new(11, 0, 10, 3).is_err());
        assert!(Counts::new(5, 4, 10, 3).is_err());
        // 9 ones outside but only 5 outside slots.
        assert!(Counts::new(5, 0, 10, 9).is_err());
    }

    #[test]
    fn l_function_examples() {
        let p = |x| HypergeomParams::new(50, 20, 10, x).unwrap();
        assert_eq!(l_function(&p(4)), 0.0);
        assert!(rel(l_function(&p(8)), L_50_20_10_8) < 1e-12);
        assert!(rel(l_function(&p(0)), L_50_20_10_0) < 1e-12);
    }

    #[test]
    fn tail_bound_sides() {
        let p = |x| HypergeomParams::new(50, 20, 10, x).unwrap();
        assert!(matches!(tail_bound(&p(4), Side::Upper), Err(Error::InvalidSide(_))));
        assert!(matches!(tail_bound(&p(3), Side::Upper), Err(Error::InvalidSide(_))));
        assert!(matches!(tail_bound(&p(5), Side::Lower), Err(Error::InvalidSide(_))));
        // 50-digit reference: C = 3.51620854664259, bound(8) = 0.323640184048512.
        assert!(rel(bound_constant(&p(8)), 3.516_208_546_642_592_8) < 1e-12);
        assert!(rel(tail_bound(&p(8), Side::Upper).unwrap(), 0.323_640_184_048_511_88) < 1e-12);
        assert!(rel(tail_bound(&p(0), Side::Lower).unwrap(), 0.074_472_238_485_074_77) < 1e-12);
        let c = bound_constant(&p(8));
        assert!((l_tail_bound(c, 1e-12) - 4.0 * c).abs() < 1e-9);
        assert!(l_tail_bound(c, 1e-12) >= 1.0);
    }

    #[test]
    fn hypergeom_params_support() {
        assert!(HypergeomParams::new(50, 20, 10, 11).is_err());
        assert!(HypergeomParams::new(50, 45, 10, 4).is_err());
        assert!(HypergeomParams::new(50, 0, 10, 0).is_err());
        assert!(HypergeomParams::new(50, 20, 50, 20).is_err());
        assert_eq!(HypergeomParams::new(50, 45, 10, 5).unwrap().support(), (5, 10));
    }

    #[test]
    fn detection_boundary_examples() {
        assert_eq!(detection_boundary(0.5, 1.0, 0.0).unwrap(), 0.25);
        let d = detection_boundary(0.125, 0.75, 0.4).unwrap();
        assert!(rel(d, 0.029_774_305_555_555_556) < 1e-14);
        assert!(detection_boundary(0.3, 0.5 + 1e-9, 0.5).unwrap() < 1e-16);
        assert!(matches!(
            detection_boundary(0.3, 0.4, 0.4),
            Err(Error::InvalidAlternative { .. })
        ));
        assert!(detection_boundary(0.0, 0.4, 0.1).is_err());
    }

    #[test]
    fn l_monotone_away_from_mean() {
        for n_total in [20usize, 37, 100, 200] {
            for reds in [1, n_total / 3, n_total - 1] {
                for draws in [1, n_total / 4, n_total / 2, n_total - 1] {
                    let base = HypergeomParams::new(n_total, reds, draws, draws.min(reds)).unwrap();
                    let (lo, hi) = base.support();
                    let m = base.mean();
                    for x in lo..hi {
                        let a = l_function(&base.with_x(x).unwrap());
                        let b = l_function(&base.with_x(x + 1).unwrap());
                        if ((x + 1) as f64) < m {
                            assert!(b < a, "N={n_total} R={reds} n={draws} x={x}");
                        } else if (x as f64) > m {
                            assert!(b > a, "N={n_total} R={reds} n={draws} x={x}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn second_order_sandwich() {
        // Single-term divergence against its quadratic approximations near pbar.
        // The curvature is 1 / (ξ(1 − ξ)) along the segment, which gives an exact
        // lower bound; it equals the plain quadratic bound whenever p̂ moves away
        // from 1/2.
        for &pbar in &[0.2, 0.4, 0.5, 0.7] {
            for &n in &[10.0, 100.0, 1000.0] {
                for step in 1..=20 {
                    let delta = step as f64 * 0.005;
                    for phat in [pbar - delta, pbar + delta] {
                        let l = bernoulli_divergence(n, phat, pbar);
                        let sq = n * (phat - pbar).powi(2);
                        assert!(l <= sq / (pbar * (1.0 - pbar)), "upper pbar={pbar} phat={phat}");
                        let widest = if (phat - 0.5) * (pbar - 0.5) <= 0.0 {
                            0.25
                        } else {
                            (phat * (1.0 - phat)).max(pbar * (1.0 - pbar))
                        };
                        assert!(
                            l >= sq / (2.0 * widest) * (1.0 - 1e-12),
                            "lower pbar={pbar} phat={phat}"
                        );
                        if (phat - 0.5).abs() >= (pbar - 0.5).abs() {
                            assert!(l >= sq / (2.0 * pbar * (1.0 - pbar)) * (1.0 - 1e-12));
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn llr_nonnegative_and_zero_iff_not_enriched(
            n_total in 2usize..400, a in any::<u64>(), b in any::<u64>(), c in any::<u64>()
        ) {
            let ones_total = 1 + (a as usize) % (n_total - 1);
            let n_in = 1 + (b as usize) % (n_total - 1);
            let lo = (n_in + ones_total).saturating_sub(n_total);
            let hi = n_in.min(ones_total);
            let ones_in = lo + (c as usize) % (hi - lo + 1);
            let counts = Counts::new(n_in, ones_in, n_total, ones_total).unwrap();
            let t = llr(&counts).unwrap();
            prop_assert!(t >= 0.0 && t.is_finite());
            let enriched = counts.p_hat() > counts.q_hat();
            if !enriched {
                prop_assert_eq!(t, 0.0);
            }
            let two = llr_two_sided(&counts).unwrap();
            let swapped = llr_two_sided(&counts.complement()).unwrap();
            prop_assert!((two - swapped).abs() <= 1e-12 * two.max(1.0));
        }

        #[test]
        fn one_sided_monotone_in_ones(n_total in 3usize..300, a in any::<u64>(), b in any::<u64>()) {
            let ones_total = 1 + (a as usize) % (n_total - 1);
            let n_in = 1 + (b as usize) % (n_total - 1);
            let lo = (n_in + ones_total).saturating_sub(n_total);
            let hi = n_in.min(ones_total);
            let mut prev = -1.0;
            for k in lo..=hi {
                let t = llr_one_sided_unchecked(n_in, k, n_total, ones_total);
                prop_assert!(t >= prev);
                prev = t;
            }
        }
    }
}
