//! Independent references: exhaustive rectangle scan, exact hypergeometric
//! tails and approximation quality of the enumerated family.

use serde::{Deserialize, Serialize};

use crate::approx::{block_range, y_ranks, ApproxRect, BlockSpec, RectCoords};
use crate::error::{Error, Result};
use crate::model::{cmp_f64, Dataset};
use crate::statistic::{l_function, llr_raw, Counts, HypergeomParams, Side};

/// Largest point count accepted by [`brute_force_max`].
pub const BRUTE_FORCE_LIMIT: usize = 80;

/// Largest population accepted by [`exact_tail`].
pub const EXACT_TAIL_LIMIT: usize = 2000;

/// Rank rectangle over the whole point set: x-ranks and global y-ranks, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteRect {
    pub x_lo_rank: usize,
    pub x_hi_rank: usize,
    pub y_lo_rank: usize,
    pub y_hi_rank: usize,
    pub counts: Counts,
}

/// Global y-rank (1-based) of each point, indexed by x-rank; ties by x-rank.
pub fn global_y_ranks(dataset: &Dataset) -> Vec<usize> {
    let ys = dataset.ys();
    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| cmp_f64(ys[a], ys[b]).then(a.cmp(&b)));
    let mut rank = vec![0; ys.len()];
    for (r, &p) in order.iter().enumerate() {
        rank[p] = r + 1;
    }
    rank
}

/// Maximum one-sided statistic over every x-rank interval times y-rank
/// interval, with the lexicographically first rectangle attaining it.
///
/// With all labels equal every statistic is 0.
pub fn brute_force_max(dataset: &Dataset) -> Result<(f64, BruteRect)> {
    let n = dataset.n_total();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let ones_total = dataset.ones_total();
    let yr = global_y_ranks(dataset);
    let labels = dataset.labels();
    // cnt[a][c], ones[a][c]: points with x-rank <= a and y-rank <= c.
    let w = n + 1;
    let mut cnt = vec![0usize; w * w];
    let mut ones = vec![0usize; w * w];
    for a in 1..=n {
        for c in 1..=n {
            let here = (yr[a - 1] == c) as usize;
            let lab = here * labels[a - 1] as usize;
            cnt[a * w + c] = here + cnt[(a - 1) * w + c] + cnt[a * w + c - 1] - cnt[(a - 1) * w + c - 1];
            ones[a * w + c] = lab + ones[(a - 1) * w + c] + ones[a * w + c - 1] - ones[(a - 1) * w + c - 1];
        }
    }
    let rect_sum = |t: &[usize], a: usize, b: usize, c: usize, d: usize| {
        t[b * w + d] + t[(a - 1) * w + (c - 1)] - t[(a - 1) * w + d] - t[b * w + (c - 1)]
    };
    let mut best: Option<(f64, BruteRect)> = None;
    for a in 1..=n {
        for b in a..=n {
            for c in 1..=n {
                for d in c..=n {
                    let n_in = rect_sum(&cnt, a, b, c, d);
                    if n_in == 0 {
                        continue;
                    }
                    let ones_in = rect_sum(&ones, a, b, c, d);
                    let t = if ones_in * n > ones_total * n_in {
                        llr_raw(n_in, ones_in, n, ones_total)
                    } else {
                        0.0
                    };
                    if best.as_ref().is_none_or(|(m, _)| t > *m) {
                        best = Some((
                            t,
                            BruteRect {
                                x_lo_rank: a,
                                x_hi_rank: b,
                                y_lo_rank: c,
                                y_hi_rank: d,
                                counts: Counts {
                                    n_in,
                                    ones_in,
                                    n_total: n,
                                    ones_total,
                                },
                            },
                        ));
                    }
                }
            }
        }
    }
    best.ok_or(Error::EmptyInput)
}

/// Natural-log pmf over the support `lo..=hi`, normalized.
fn log_pmf(params: &HypergeomParams) -> (usize, Vec<f64>) {
    let (lo, hi) = params.support();
    let (nn, r, n) = (params.n_total as f64, params.reds as f64, params.draws as f64);
    let mut logw = Vec::with_capacity(hi - lo + 1);
    logw.push(0.0);
    for k in lo..hi {
        let k = k as f64;
        // pmf(k + 1) / pmf(k)
        let ratio = (r - k) * (n - k) / ((k + 1.0) * (nn - r - n + k + 1.0));
        let prev = *logw.last().unwrap();
        logw.push(prev + ratio.ln());
    }
    let peak = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logw.iter().map(|v| (v - peak).exp()).sum();
    let norm = peak + total.ln();
    (lo, logw.into_iter().map(|v| v - norm).collect())
}

/// Probability mass at each point of the support, starting at its lower end.
pub fn pmf(params: &HypergeomParams) -> (usize, Vec<f64>) {
    let (lo, lp) = log_pmf(params);
    (lo, lp.into_iter().map(f64::exp).collect())
}

fn sum_small_first(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Exact tail by pmf summation: `P(X ≥ x)` for [`Side::Upper`], `P(X ≤ x)` for
/// [`Side::Lower`], and `P(L(X) ≥ x)` for [`Side::TwoSidedL`].
pub fn exact_tail(params: &HypergeomParams, side: Side) -> Result<f64> {
    if params.n_total > EXACT_TAIL_LIMIT {
        return Err(Error::TooLarge {
            n: params.n_total,
            limit: EXACT_TAIL_LIMIT,
        });
    }
    match side {
        Side::TwoSidedL => Ok(exact_l_tail(params, params.x as f64)),
        _ => {
            let (lo, p) = pmf(params);
            let x = params.x;
            let terms = p
                .into_iter()
                .enumerate()
                .filter(|(k, _)| if side == Side::Upper { lo + k >= x } else { lo + k <= x })
                .map(|(_, v)| v)
                .collect();
            Ok(sum_small_first(terms).min(1.0))
        }
    }
}

/// Exact `P(L(X) ≥ t)` for the population and draw size of `params`.
pub fn exact_l_tail(params: &HypergeomParams, t: f64) -> f64 {
    let (lo, p) = pmf(params);
    let terms = p
        .into_iter()
        .enumerate()
        .filter(|(k, _)| {
            let at = HypergeomParams { x: lo + k, ..*params };
            l_function(&at) >= t
        })
        .map(|(_, v)| v)
        .collect();
    sum_small_first(terms).min(1.0)
}

/// Best approximant found inside a target rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxQuality {
    pub ell: u32,
    /// Points of the target rectangle.
    pub target_count: usize,
    pub best: ApproxRect,
    /// `F_N(R \ R′) / F_N(R)`.
    pub ratio: f64,
}

/// Block of a rectangle holding `count` of `n_total` points: the `ℓ` with
/// `2^{-ℓ-1} N < count ≤ 2^{-ℓ} N`.
pub fn block_of_count(count: usize, n_total: usize) -> Option<u32> {
    if count == 0 || count > n_total {
        return None;
    }
    (0..64u32).find(|&l| (count as u128) << l <= n_total as u128 && (count as u128) << (l + 1) > n_total as u128)
}

/// Search block `ℓ(R)` for the enumerated rectangle inside `rect` holding the
/// most points, as in the contained-approximant construction: candidates are
/// grid rectangles whose strip lies within the x-extent of `rect` and whose
/// y-window lies within its y-extent.
pub fn approx_quality(dataset: &Dataset, rect: &RectCoords) -> Result<ApproxQuality> {
    let n_total = dataset.n_total();
    let (target, _) = dataset.count_in(rect.x_lo, rect.x_hi, rect.y_lo, rect.y_hi);
    let range = block_range(n_total);
    let ell = block_of_count(target, n_total)
        .filter(|l| range.contains(l))
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "rectangle holds {target} of {n_total} points, outside the scanned block sizes"
            ))
        })?;
    let block = BlockSpec::new(ell);
    let xs = dataset.xs();
    let ys = dataset.ys();
    let labels = dataset.labels();
    let ones_total = dataset.ones_total();
    let k_span = block.k_span();
    let n_span = block.n_span();

    let mut best: Option<ApproxRect> = None;
    let mut best_n = 0usize;
    for i in 0..=ell {
        let m_max = block.m_max(i);
        for j in 0..=block.j_max(i) {
            let mut below = 0usize;
            let mut inside = 0usize;
            let mut counted_to = 0usize;
            let mut lo_rank = 0usize;
            for k in j + 1..=j + k_span {
                let (lo, hi) = block.strip_ranks(i, j, k, n_total);
                if lo > hi {
                    continue;
                }
                if xs[lo - 1] < rect.x_lo {
                    break;
                }
                if xs[hi - 1] > rect.x_hi {
                    break;
                }
                if lo != lo_rank {
                    lo_rank = lo;
                    below = 0;
                    inside = 0;
                    counted_to = lo - 1;
                }
                for &y in &ys[counted_to..hi] {
                    if y < rect.y_lo {
                        below += 1;
                    } else if y <= rect.y_hi {
                        inside += 1;
                    }
                }
                counted_to = hi;
                if inside <= best_n {
                    continue;
                }
                let len = hi - lo + 1;
                let (a, b) = (below, below + inside);
                let v = block.y_unit(i, len);
                if let Some((m, n, y_lo, y_hi)) = best_window(a, b, v, len, m_max, n_span) {
                    let n_in = y_hi - y_lo + 1;
                    if n_in > best_n {
                        best_n = n_in;
                        best = Some(materialize(
                            dataset,
                            &block,
                            i,
                            j,
                            k,
                            m,
                            n,
                            (lo, hi),
                            (y_lo, y_hi),
                            labels,
                            ones_total,
                        ));
                    }
                }
            }
        }
    }
    let best = best.ok_or(Error::NoContainedRect)?;
    Ok(ApproxQuality {
        ell,
        target_count: target,
        best,
        ratio: (target - best_n) as f64 / target as f64,
    })
}

/// Largest grid window `[y_lo(m), y_hi(n)]` within strip ranks `a+1 ..= b`.
fn best_window(
    a: usize,
    b: usize,
    v: f64,
    len: usize,
    m_max: usize,
    n_span: usize,
) -> Option<(usize, usize, usize, usize)> {
    let lo_rank = |m: usize| y_ranks(m, m + 1, v, len).0;
    let hi_rank = |n: usize| y_ranks(0, n, v, len).1;
    // First m whose window starts at or after a + 1.
    let mut m = ((a as f64 / v).floor() as usize).saturating_sub(1);
    while m <= m_max && lo_rank(m) < a + 1 {
        m += 1;
    }
    let mut best: Option<(usize, usize, usize, usize)> = None;
    while m <= m_max {
        let y_lo = lo_rank(m);
        if y_lo > b {
            break;
        }
        // Largest n in m+1 ..= m+n_span with hi_rank(n) <= b.
        let guess = ((b as f64 + 0.5) / v).ceil() as usize;
        let mut n = guess.saturating_add(1).clamp(m + 1, m + n_span);
        while n > m && hi_rank(n) > b {
            n -= 1;
        }
        if n > m {
            let y_hi = hi_rank(n);
            if y_hi >= y_lo && best.is_none_or(|(_, _, l, h)| y_hi - y_lo > h - l) {
                best = Some((m, n, y_lo, y_hi));
            }
        }
        if n < m + n_span {
            // Later starts cannot reach further up.
            break;
        }
        m += 1;
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn materialize(
    dataset: &Dataset,
    block: &BlockSpec,
    i: u32,
    j: usize,
    k: usize,
    m: usize,
    n: usize,
    (lo, hi): (usize, usize),
    (y_lo, y_hi): (usize, usize),
    labels: &[u8],
    ones_total: usize,
) -> ApproxRect {
    let ys = dataset.ys();
    let mut members: Vec<usize> = (lo - 1..hi).collect();
    members.sort_by(|&p, &q| cmp_f64(ys[p], ys[q]).then(p.cmp(&q)));
    let chosen = &members[y_lo - 1..y_hi];
    let ones_in = chosen.iter().map(|&p| labels[p] as usize).sum();
    let xs = dataset.xs();
    ApproxRect {
        ell: block.ell,
        i,
        j,
        k,
        m,
        n,
        x_lo_rank: lo,
        x_hi_rank: hi,
        y_lo_rank: y_lo,
        y_hi_rank: y_hi,
        counts: Counts {
            n_in: chosen.len(),
            ones_in,
            n_total: dataset.n_total(),
            ones_total,
        },
        coords: Some(RectCoords {
            x_lo: xs[lo - 1],
            x_hi: xs[hi - 1],
            y_lo: ys[chosen[0]],
            y_hi: ys[*chosen.last().unwrap()],
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{blocks, enumerate_block, BlockMembership};
    use crate::model::LabeledPoint;
    use crate::statistic::{llr, tail_bound};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Discrete, DiscreteCDF, Hypergeometric};

    fn random(n: usize, seed: u64, p: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(
            (0..n)
                .map(|_| LabeledPoint {
                    x: rng.random(),
                    y: rng.random(),
                    label: rng.random_bool(p) as u8,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn brute_force_hand_fixture() {
        // Ones are exactly the three leftmost points; y values are their ranks.
        let ys = [5.0, 1.0, 8.0, 2.0, 9.0, 3.0, 10.0, 4.0, 6.0, 7.0];
        let pts = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| LabeledPoint::new(i as f64 + 1.0, y, (i < 3) as u8).unwrap())
            .collect();
        let d = Dataset::new(pts).unwrap();
        let (t, r) = brute_force_max(&d).unwrap();
        let expected = 3.0 * (10.0f64 / 3.0).ln() + 7.0 * (10.0f64 / 7.0).ln();
        assert!((t - expected).abs() < 1e-12);
        assert_eq!((r.x_lo_rank, r.x_hi_rank, r.y_lo_rank, r.y_hi_rank), (1, 3, 1, 8));
        assert_eq!((r.counts.n_in, r.counts.ones_in), (3, 3));
    }

    #[test]
    fn brute_force_guards() {
        let flat = random(30, 1, 0.5).with_labels(vec![1; 30]).unwrap();
        assert_eq!(brute_force_max(&flat).unwrap().0, 0.0);
        assert!(matches!(
            brute_force_max(&random(81, 2, 0.5)),
            Err(Error::TooLarge { n: 81, limit: 80 })
        ));
    }

    #[test]
    fn brute_force_dominates_enumeration() {
        for seed in 0..5 {
            let d = random(60, 10 + seed, 0.3);
            let (max, r) = brute_force_max(&d).unwrap();
            assert_eq!(max, llr(&r.counts).unwrap());
            // The block range is empty this small, so the family is built at ℓ = 3, 4 directly.
            assert!(blocks(60).is_empty());
            let mut enumerated = 0.0f64;
            let mut visited = 0;
            for b in [BlockSpec::new(3), BlockSpec::new(4)] {
                enumerate_block(&d, &b, |x| {
                    if !x.is_empty() {
                        visited += 1;
                        enumerated = enumerated.max(llr(&x.counts).unwrap());
                    }
                });
            }
            assert!(visited > 0);
            assert!(enumerated <= max);
        }
    }

    #[test]
    fn exact_tail_examples() {
        let p = HypergeomParams::new(50, 20, 10, 10).unwrap();
        let top = exact_tail(&p, Side::Upper).unwrap();
        let reference = 184_756.0 / 10_272_278_170.0;
        assert!((top - reference).abs() / reference < 1e-12);
        let p0 = p.with_x(0).unwrap();
        let bottom = exact_tail(&p0, Side::Lower).unwrap();
        let reference = 30_045_015.0 / 10_272_278_170.0;
        assert!((bottom - reference).abs() / reference < 1e-12);
        let p8 = p.with_x(8).unwrap();
        let tail = exact_tail(&p8, Side::Upper).unwrap();
        assert!((tail - 0.005_842_959_566_193_3).abs() / tail < 1e-12);
        assert!(tail < tail_bound(&p8, Side::Upper).unwrap());
        let big = HypergeomParams::new(2001, 100, 100, 5).unwrap();
        assert!(matches!(exact_tail(&big, Side::Upper), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn exact_tail_matches_statrs() {
        for &(nn, r, n) in &[(50usize, 20usize, 10usize), (200, 37, 90), (1500, 600, 700)] {
            let h = Hypergeometric::new(nn as u64, r as u64, n as u64).unwrap();
            let base = HypergeomParams::new(nn, r, n, r.min(n)).unwrap();
            let (lo, hi) = base.support();
            let (plo, probs) = pmf(&base);
            assert_eq!(plo, lo);
            for x in lo..=hi {
                let px = probs[x - lo];
                let reference = h.pmf(x as u64);
                if reference > 1e-250 {
                    assert!((px - reference).abs() / reference < 1e-9, "pmf N={nn} x={x}");
                }
                let at = base.with_x(x).unwrap();
                let lower = exact_tail(&at, Side::Lower).unwrap();
                let cdf = h.cdf(x as u64);
                assert!(
                    (lower - cdf).abs() <= 1e-12 * cdf.max(1e-300) + 1e-15,
                    "cdf N={nn} x={x}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn tails_complement(nn in 10usize..400, rf in 0.05f64..0.95, df in 0.05f64..0.95, xf in 0.0f64..1.0) {
            let r = ((nn as f64 * rf) as usize).clamp(1, nn - 1);
            let n = ((nn as f64 * df) as usize).clamp(1, nn - 1);
            let base = HypergeomParams::new(nn, r, n, r.min(n)).unwrap();
            let (lo, hi) = base.support();
            let x = lo + ((hi - lo) as f64 * xf) as usize;
            let upper = exact_tail(&base.with_x(x).unwrap(), Side::Upper).unwrap();
            let below = if x > lo { exact_tail(&base.with_x(x - 1).unwrap(), Side::Lower).unwrap() } else { 0.0 };
            prop_assert!((upper + below - 1.0).abs() < 1e-12);
            let (_, probs) = pmf(&base);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn l_tail_below_its_bound() {
        let p = HypergeomParams::new(100, 40, 30, 12).unwrap();
        for t in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let exact = exact_l_tail(&p, t);
            let c = crate::statistic::bound_constant(&p);
            assert!(exact <= crate::statistic::l_tail_bound(c, t));
        }
        assert!((exact_l_tail(&p, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_of_count_edges() {
        assert_eq!(block_of_count(125, 1000), Some(3));
        assert_eq!(block_of_count(126, 1000), Some(2));
        assert_eq!(block_of_count(63, 1000), Some(3));
        assert_eq!(block_of_count(62, 1000), Some(4));
        assert_eq!(block_of_count(0, 1000), None);
    }

    #[test]
    fn enumerated_rect_has_ratio_zero() {
        let d = random(500, 40, 0.5);
        let b = blocks(500)[1];
        let mut target = None;
        enumerate_block(&d, &b, |r| {
            if target.is_none()
                && block_of_count(r.counts.n_in, 500) == Some(b.ell)
                && BlockMembership::SizeWindow.admits(&b, r.counts.n_in, 500)
            {
                target = Some(*r);
            }
        });
        let r = target.unwrap();
        let q = approx_quality(&d, &r.coords.unwrap()).unwrap();
        assert_eq!(q.ratio, 0.0);
        assert_eq!(q.best.counts.n_in, r.counts.n_in);
    }

    #[test]
    fn random_rects_are_approximated() {
        let d = random(500, 41, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 100 {
            let (a, b, c, e): (f64, f64, f64, f64) = (rng.random(), rng.random(), rng.random(), rng.random());
            let rect = RectCoords {
                x_lo: a.min(b),
                x_hi: a.max(b),
                y_lo: c.min(e),
                y_hi: c.max(e),
            };
            let Ok(q) = approx_quality(&d, &rect) else { continue };
            checked += 1;
            let best = q.best.coords.unwrap();
            assert!(best.is_within(&rect));
            let (n_in, ones_in) = d.count_in(best.x_lo, best.x_hi, best.y_lo, best.y_hi);
            assert_eq!((n_in, ones_in), (q.best.counts.n_in, q.best.counts.ones_in));
            let missed = (q.target_count - q.best.counts.n_in) as f64;
            assert!(
                missed <= (q.ell as f64).powf(-0.5) * q.target_count as f64 + 4.0,
                "{q:?}"
            );
        }
    }

    #[test]
    fn rect_outside_block_sizes_is_rejected() {
        let d = random(500, 43, 0.5);
        let tiny = RectCoords {
            x_lo: 2.0,
            x_hi: 3.0,
            y_lo: 2.0,
            y_hi: 3.0,
        };
        assert!(matches!(approx_quality(&d, &tiny), Err(Error::InvalidArgument(_))));
        let all = RectCoords {
            x_lo: 0.0,
            x_hi: 1.0,
            y_lo: 0.0,
            y_hi: 1.0,
        };
        assert!(matches!(approx_quality(&d, &all), Err(Error::InvalidArgument(_))));
    }
}
