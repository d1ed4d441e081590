//! Enumeration of the approximating rectangle family, one block at a time.
//!
//! Block `ℓ` covers rectangles holding roughly a `2^-ℓ` fraction of the points.
//! Within a block, level `i` fixes the aspect ratio: x-strips are cut on a grid
//! of `ε s 2^i N` order statistics, and inside each strip the y-interval is cut
//! on a grid of `ε 2^-i` strip quantiles, with `s = 2^-ℓ` and `ε = ℓ^{-1/2}/6`.
//!
//! All ranks handed out by this module are 1-based. A rank interval `[lo, hi]`
//! with `lo > hi` is empty.

use serde::{Deserialize, Serialize};

use crate::model::{cmp_f64, rank_index, Dataset};
use crate::statistic::Counts;

/// Geometry parameters of block `ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub ell: u32,
    /// Target mass `2^-ℓ`.
    pub s: f64,
    /// Approximation step `ℓ^{-1/2} / 6`.
    pub eps: f64,
}

impl BlockSpec {
    pub fn new(ell: u32) -> Self {
        assert!((1..=60).contains(&ell), "block index {ell} out of range");
        Self {
            ell,
            s: (-(ell as f64)).exp2(),
            eps: 1.0 / inv_eps(ell),
        }
    }

    /// `1/ε = 6 √ℓ`. Loop bounds are computed from this value times powers of
    /// two so that exact cases such as `ℓ = 4` floor correctly.
    fn inv_eps(&self) -> f64 {
        inv_eps(self.ell)
    }

    /// Largest x-grid start index `⌊(ε s 2^i)^{-1}⌋` at level `i`.
    pub fn j_max(&self, i: u32) -> usize {
        (self.inv_eps() * ((self.ell - i) as f64).exp2()).floor() as usize
    }

    /// Number of strip widths `⌊1/ε⌋`.
    pub fn k_span(&self) -> usize {
        self.inv_eps().floor() as usize
    }

    /// Largest y-grid start index `⌊2^i/ε⌋` at level `i`.
    pub fn m_max(&self, i: u32) -> usize {
        (self.inv_eps() * (i as f64).exp2()).floor() as usize
    }

    /// Number of y-interval lengths `⌊2/ε⌋`.
    pub fn n_span(&self) -> usize {
        (2.0 * self.inv_eps()).floor() as usize
    }

    /// Order statistics per x-grid step at level `i`: `ε s 2^i N`.
    pub fn x_unit(&self, i: u32, n_total: usize) -> f64 {
        n_total as f64 * (i as f64 - self.ell as f64).exp2() / self.inv_eps()
    }

    /// Strip quantile step at level `i` for a strip of `strip_len` points: `ε 2^-i N_jk`.
    pub fn y_unit(&self, i: u32, strip_len: usize) -> f64 {
        strip_len as f64 * (-(i as f64)).exp2() / self.inv_eps()
    }

    /// x-rank interval `[X_(j u + 1), X_(k u)]` of strip `(i, j, k)`.
    pub fn strip_ranks(&self, i: u32, j: usize, k: usize, n_total: usize) -> (usize, usize) {
        let u = self.x_unit(i, n_total);
        (
            rank_index(j as f64 * u + 1.0, n_total),
            rank_index(k as f64 * u, n_total),
        )
    }

    /// Number of `(i, j, k, m, n)` tuples in this block, independent of the data.
    pub fn tuple_count(&self) -> u64 {
        let k = self.k_span() as u64;
        let n = self.n_span() as u64;
        (0..=self.ell)
            .map(|i| (self.j_max(i) as u64 + 1) * k * (self.m_max(i) as u64 + 1) * n)
            .sum()
    }
}

fn inv_eps(ell: u32) -> f64 {
    6.0 * (ell as f64).sqrt()
}

/// y-rank interval `[Y_(m v + 1), Y_(n v)]` inside a strip of `len` points,
/// where `v` is the strip's y unit. Empty strips yield `(1, 0)`.
#[inline]
pub(crate) fn y_ranks(m: usize, n: usize, v: f64, len: usize) -> (usize, usize) {
    if len == 0 {
        return (1, 0);
    }
    (rank_index(m as f64 * v + 1.0, len), rank_index(n as f64 * v, len))
}

/// Blocks scanned for a dataset of `n_total` points: `3 ..= ⌊log₂(N / (2 ln N))⌋`.
///
/// The range is empty when the upper end falls below 3.
pub fn block_range(n_total: usize) -> std::ops::RangeInclusive<u32> {
    if n_total < 2 {
        #[allow(clippy::reversed_empty_ranges)]
        return 3..=2;
    }
    let n = n_total as f64;
    let upper = (n / (2.0 * n.ln())).log2().floor();
    if upper < 3.0 {
        #[allow(clippy::reversed_empty_ranges)]
        return 3..=2;
    }
    3..=(upper as u32)
}

pub fn blocks(n_total: usize) -> Vec<BlockSpec> {
    block_range(n_total).map(BlockSpec::new).collect()
}

/// Which enumerated rectangles a block's maximum runs over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockMembership {
    /// Every rectangle enumerated at level `ℓ`, whatever its point count.
    Level,
    /// Rectangles enumerated at level `ℓ` holding between
    /// `(1 − ℓ^{-1/2}) 2^{-ℓ-1} N` (exclusive) and `2^{-ℓ} N` points: the block's
    /// size window widened just enough to keep every contained approximant of a
    /// rectangle of that size.
    #[default]
    SizeWindow,
}

impl BlockMembership {
    /// Inclusive range of admissible point counts for `block`.
    pub fn count_range(&self, block: &BlockSpec, n_total: usize) -> (usize, usize) {
        match self {
            BlockMembership::Level => (1, n_total),
            BlockMembership::SizeWindow => {
                let n = n_total as f64;
                let lower = (1.0 - block.eps * 6.0) * block.s * n / 2.0;
                let upper = (block.s * n).floor() as usize;
                ((lower.floor() as usize + 1).max(1), upper)
            }
        }
    }

    #[inline]
    pub fn admits(&self, block: &BlockSpec, n_in: usize, n_total: usize) -> bool {
        let (lo, hi) = self.count_range(block, n_total);
        n_in >= lo && n_in <= hi
    }
}

/// Realized coordinate bounds of a nonempty rectangle (closed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectCoords {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl RectCoords {
    /// Closed-rectangle inclusion `self ⊆ other`.
    pub fn is_within(&self, other: &RectCoords) -> bool {
        other.x_lo <= self.x_lo && self.x_hi <= other.x_hi && other.y_lo <= self.y_lo && self.y_hi <= other.y_hi
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        self.x_lo <= x && x <= self.x_hi && self.y_lo <= y && y <= self.y_hi
    }

    pub fn intersects(&self, other: &RectCoords) -> bool {
        self.x_lo <= other.x_hi && other.x_lo <= self.x_hi && self.y_lo <= other.y_hi && other.y_lo <= self.y_hi
    }
}

/// One enumerated rectangle with its index tuple, realized ranks and counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxRect {
    pub ell: u32,
    pub i: u32,
    pub j: usize,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// x-ranks delimiting the strip `X_jk`.
    pub x_lo_rank: usize,
    pub x_hi_rank: usize,
    /// Ranks within the y-sorted strip.
    pub y_lo_rank: usize,
    pub y_hi_rank: usize,
    pub counts: Counts,
    /// `None` exactly when the rectangle holds no points.
    pub coords: Option<RectCoords>,
}

impl ApproxRect {
    pub fn is_empty(&self) -> bool {
        self.counts.n_in == 0
    }
}

/// Points of an x-strip sorted by y, with the running label sums.
#[derive(Clone, Debug, Default)]
pub struct Strip {
    /// 0-based x-ranks of the members, ascending in y.
    pub members: Vec<u32>,
    pub ys: Vec<f64>,
    /// `cumsum[t]` is the number of ones among the first `t` members.
    pub cumsum: Vec<u32>,
}

impl Strip {
    /// Fill from the inclusive 1-based x-rank interval `[lo, hi]`.
    pub fn extract(&mut self, dataset: &Dataset, lo: usize, hi: usize) {
        self.members.clear();
        self.ys.clear();
        self.cumsum.clear();
        self.cumsum.push(0);
        if lo > hi {
            return;
        }
        let ys = dataset.ys();
        self.members.extend((lo - 1) as u32..hi as u32);
        self.members
            .sort_by(|&a, &b| cmp_f64(ys[a as usize], ys[b as usize]).then(a.cmp(&b)));
        let labels = dataset.labels();
        let mut acc = 0u32;
        for &p in &self.members {
            self.ys.push(ys[p as usize]);
            acc += labels[p as usize] as u32;
            self.cumsum.push(acc);
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `(n_in, ones_in)` for strip ranks `[y_lo, y_hi]`, in constant time.
    #[inline]
    pub fn rank_counts(&self, y_lo: usize, y_hi: usize) -> (usize, usize) {
        rect_counts(&self.cumsum, y_lo, y_hi)
    }
}

/// Counts for the 1-based rank range `[y_lo, y_hi]` from a cumulative label
/// sum with a leading zero. Empty ranges give `(0, 0)`.
#[inline]
pub fn rect_counts(cumsum: &[u32], y_lo: usize, y_hi: usize) -> (usize, usize) {
    if y_lo > y_hi {
        return (0, 0);
    }
    (y_hi - y_lo + 1, (cumsum[y_hi] - cumsum[y_lo - 1]) as usize)
}

/// Visit every `(i, j, k, m, n)` tuple of `block` in loop order and return the
/// number of tuples visited.
///
/// Each strip is extracted, y-sorted and cumulated once; the `(m, n)` loops
/// reuse it. Tuples whose rectangle holds no points are still visited, with
/// `coords == None`.
pub fn enumerate_block<F>(dataset: &Dataset, block: &BlockSpec, mut visit: F) -> u64
where
    F: FnMut(&ApproxRect),
{
    let n_total = dataset.n_total();
    let ones_total = dataset.ones_total();
    let xs = dataset.xs();
    let k_span = block.k_span();
    let n_span = block.n_span();
    let mut strip = Strip::default();
    let mut visited = 0u64;
    let mut empty_strips = 0u64;

    for i in 0..=block.ell {
        let m_max = block.m_max(i);
        for j in 0..=block.j_max(i) {
            for k in j + 1..=j + k_span {
                let (x_lo_rank, x_hi_rank) = block.strip_ranks(i, j, k, n_total);
                strip.extract(dataset, x_lo_rank, x_hi_rank);
                if strip.is_empty() {
                    empty_strips += 1;
                }
                let len = strip.len();
                let v = block.y_unit(i, len);
                for m in 0..=m_max {
                    for n in m + 1..=m + n_span {
                        let (y_lo_rank, y_hi_rank) = y_ranks(m, n, v, len);
                        let (n_in, ones_in) = if len == 0 {
                            (0, 0)
                        } else {
                            strip.rank_counts(y_lo_rank, y_hi_rank)
                        };
                        let coords = (n_in > 0).then(|| RectCoords {
                            x_lo: xs[x_lo_rank - 1],
                            x_hi: xs[x_hi_rank - 1],
                            y_lo: strip.ys[y_lo_rank - 1],
                            y_hi: strip.ys[y_hi_rank - 1],
                        });
                        visit(&ApproxRect {
                            ell: block.ell,
                            i,
                            j,
                            k,
                            m,
                            n,
                            x_lo_rank,
                            x_hi_rank,
                            y_lo_rank,
                            y_hi_rank,
                            counts: Counts {
                                n_in,
                                ones_in,
                                n_total,
                                ones_total,
                            },
                            coords,
                        });
                        visited += 1;
                    }
                }
            }
        }
    }
    if empty_strips > 0 {
        log::debug!(
            "block {}: {empty_strips} strips collapsed to no points after rounding",
            block.ell
        );
    }
    visited
}

/// Total number of tuples visited across all blocks of the dataset.
pub fn count_all(dataset: &Dataset) -> u64 {
    blocks(dataset.n_total())
        .iter()
        .map(|b| enumerate_block(dataset, b, |_| {}))
        .sum()
}
