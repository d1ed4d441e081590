//! Label-independent compilation of the rectangle family for repeated scans.
//!
//! Permutation calibration rescans the same geometry thousands of times with
//! shuffled labels. A [`ScanPlan`] keeps, per block, the y-sorted members of
//! every distinct strip and the distinct `(y_lo, y_hi)` rank pairs its `(m, n)`
//! grid realizes, compressed into runs of consecutive `y_hi`. Duplicate tuples
//! cannot change a maximum, so block maxima from the plan equal those of the
//! full enumeration.

use std::collections::HashSet;

use crate::approx::{blocks, y_ranks, BlockMembership, BlockSpec};
use crate::model::{cmp_f64, Dataset};
use crate::statistic::Sidedness;

/// `y_hi` runs over `hi_first..=hi_last` with fixed `y_lo = lo` (1-based strip ranks).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Run {
    lo: u32,
    hi_first: u32,
    hi_last: u32,
}

#[derive(Clone, Debug)]
struct PlanStrip {
    /// Range into `BlockPlan::members`.
    members: (u32, u32),
    /// Range into `BlockPlan::runs`.
    runs: (u32, u32),
}

#[derive(Clone, Debug)]
struct BlockPlan {
    ell: u32,
    members: Vec<u32>,
    runs: Vec<Run>,
    strips: Vec<PlanStrip>,
    /// Largest admissible point count.
    max_n: usize,
}

/// Compiled geometry of every block for one dataset.
#[derive(Clone, Debug)]
pub struct ScanPlan {
    n_total: usize,
    membership: BlockMembership,
    blocks: Vec<BlockPlan>,
}

/// Reusable buffers for [`ScanPlan::block_maxima_into`].
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    cumsum: Vec<i32>,
    best: Vec<i32>,
    worst: Vec<i32>,
}

impl ScanPlan {
    pub fn new(dataset: &Dataset, membership: BlockMembership) -> Self {
        let n_total = dataset.n_total();
        let blocks = blocks(n_total)
            .iter()
            .map(|b| compile_block(dataset, b, membership))
            .collect();
        Self {
            n_total,
            membership,
            blocks,
        }
    }

    pub fn membership(&self) -> BlockMembership {
        self.membership
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn block_ids(&self) -> Vec<u32> {
        self.blocks.iter().map(|b| b.ell).collect()
    }

    /// Number of distinct `(strip, y_lo, y_hi)` rectangles with at least one point.
    pub fn distinct_rects(&self) -> u64 {
        self.blocks
            .iter()
            .flat_map(|b| b.runs.iter())
            .map(|r| (r.hi_last - r.hi_first + 1) as u64)
            .sum()
    }

    /// Maximum local statistic per block for a label vector in x-rank order.
    pub fn block_maxima(&self, labels: &[u8], sidedness: Sidedness) -> Vec<f64> {
        let mut out = vec![0.0; self.blocks.len()];
        self.block_maxima_into(labels, sidedness, &mut Scratch::default(), &mut out);
        out
    }

    pub fn block_maxima_into(&self, labels: &[u8], sidedness: Sidedness, scratch: &mut Scratch, out: &mut [f64]) {
        assert_eq!(labels.len(), self.n_total, "label vector length");
        assert_eq!(out.len(), self.blocks.len());
        let ones_total: usize = labels.iter().map(|&l| l as usize).sum();
        let two_sided = sidedness == Sidedness::TwoSided;
        for (block, slot) in self.blocks.iter().zip(out.iter_mut()) {
            let size = block.max_n + 1;
            scratch.best.clear();
            scratch.best.resize(size, -1);
            if two_sided {
                scratch.worst.clear();
                scratch.worst.resize(size, i32::MAX);
            }
            for strip in &block.strips {
                let members = &block.members[strip.members.0 as usize..strip.members.1 as usize];
                let cumsum = &mut scratch.cumsum;
                cumsum.clear();
                cumsum.push(0);
                let mut acc = 0i32;
                for &p in members {
                    acc += labels[p as usize] as i32;
                    cumsum.push(acc);
                }
                for run in &block.runs[strip.runs.0 as usize..strip.runs.1 as usize] {
                    let base = cumsum[run.lo as usize - 1];
                    let first = run.hi_first as usize;
                    let last = run.hi_last as usize;
                    let n0 = first - run.lo as usize + 1;
                    let ones = &cumsum[first..=last];
                    let best = &mut scratch.best[n0..n0 + ones.len()];
                    for (b, &c) in best.iter_mut().zip(ones) {
                        *b = (*b).max(c - base);
                    }
                    if two_sided {
                        let worst = &mut scratch.worst[n0..n0 + ones.len()];
                        for (w, &c) in worst.iter_mut().zip(ones) {
                            *w = (*w).min(c - base);
                        }
                    }
                }
            }
            // For fixed n_in the one-sided statistic is nondecreasing in ones_in and
            // the two-sided one is convex in it, so the extremes carry the maximum.
            let mut max = 0.0f64;
            for n in 1..size {
                let hi = scratch.best[n];
                if hi < 0 {
                    continue;
                }
                max = max.max(sidedness.eval(n, hi as usize, self.n_total, ones_total));
                if two_sided {
                    let lo = scratch.worst[n] as usize;
                    max = max.max(sidedness.eval(n, lo, self.n_total, ones_total));
                }
            }
            *slot = max;
        }
    }
}

/// Block maxima straight from the enumeration, without compiling a plan.
///
/// Visits every `(i, j, k, m, n)` tuple once; memory stays linear in `N`,
/// which makes this the path for one-off scans of large data sets.
pub fn direct_block_maxima(dataset: &Dataset, membership: BlockMembership, sidedness: Sidedness) -> Vec<(u32, f64)> {
    let n_total = dataset.n_total();
    let ones_total = dataset.ones_total();
    let ys = dataset.ys();
    let labels = dataset.labels();
    let mut order: Vec<u32> = (0..n_total as u32).collect();
    order.sort_by(|&a, &b| cmp_f64(ys[a as usize], ys[b as usize]).then(a.cmp(&b)));
    let mut y_rank = vec![0u32; n_total];
    let mut label_by_y = vec![0u8; n_total];
    for (r, &p) in order.iter().enumerate() {
        y_rank[p as usize] = r as u32;
        label_by_y[r] = labels[p as usize];
    }
    let two_sided = sidedness == Sidedness::TwoSided;
    let mut keys: Vec<u32> = Vec::new();
    let mut chunk: Vec<u32> = Vec::new();
    let mut merged: Vec<u32> = Vec::new();
    let mut cumsum: Vec<i32> = Vec::new();
    let mut lo_rank: Vec<u32> = Vec::new();
    let mut hi_rank: Vec<u32> = Vec::new();
    blocks(n_total)
        .iter()
        .map(|block| {
            let (n_min, n_max) = membership.count_range(block, n_total);
            let mut best = vec![-1i32; n_max + 1];
            let mut worst = vec![i32::MAX; if two_sided { n_max + 1 } else { 0 }];
            let n_span = block.n_span();
            for i in 0..=block.ell {
                let m_max = block.m_max(i);
                for j in 0..=block.j_max(i) {
                    // Strips of one j share their left edge; keys grows by merging.
                    keys.clear();
                    let mut covered = 0usize;
                    for k in j + 1..=j + block.k_span() {
                        let (lo, hi) = block.strip_ranks(i, j, k, n_total);
                        if lo > hi {
                            continue;
                        }
                        let len = hi - lo + 1;
                        if len < n_min {
                            continue;
                        }
                        let from = covered.max(lo - 1);
                        if hi > from {
                            chunk.clear();
                            chunk.extend_from_slice(&y_rank[from..hi]);
                            chunk.sort_unstable();
                            merged.clear();
                            merge_sorted(&keys, &chunk, &mut merged);
                            std::mem::swap(&mut keys, &mut merged);
                            covered = hi;
                        }
                        debug_assert_eq!(keys.len(), len);
                        cumsum.clear();
                        cumsum.push(0);
                        let mut acc = 0;
                        for &r in &keys {
                            acc += label_by_y[r as usize] as i32;
                            cumsum.push(acc);
                        }
                        let v = block.y_unit(i, len);
                        lo_rank.clear();
                        lo_rank.extend((0..=m_max).map(|m| y_ranks(m, m + 1, v, len).0 as u32));
                        hi_rank.clear();
                        hi_rank.extend((0..=m_max + n_span).map(|n| y_ranks(0, n, v, len).1 as u32));
                        for m in 0..=m_max {
                            let y_lo = lo_rank[m] as usize;
                            if y_lo + n_min - 1 > len {
                                break;
                            }
                            let base = cumsum[y_lo - 1];
                            // hi_rank is nondecreasing, so the admitted n form one run.
                            let ends = &hi_rank[m + 1..=m + n_span];
                            let first = ends.partition_point(|&h| (h as usize) < y_lo + n_min - 1);
                            let last = ends.partition_point(|&h| (h as usize) < y_lo + n_max);
                            for &y_hi in &ends[first..last.max(first)] {
                                let y_hi = y_hi as usize;
                                let n_in = y_hi - y_lo + 1;
                                let ones = cumsum[y_hi] - base;
                                if ones > best[n_in] {
                                    best[n_in] = ones;
                                }
                                if two_sided && ones < worst[n_in] {
                                    worst[n_in] = ones;
                                }
                            }
                        }
                    }
                }
            }
            let mut max = 0.0f64;
            for n in 1..=n_max {
                if best[n] >= 0 {
                    max = max.max(sidedness.eval(n, best[n] as usize, n_total, ones_total));
                    if two_sided {
                        max = max.max(sidedness.eval(n, worst[n] as usize, n_total, ones_total));
                    }
                }
            }
            (block.ell, max)
        })
        .collect()
}

fn merge_sorted(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.reserve(a.len() + b.len());
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        if a[x] <= b[y] {
            out.push(a[x]);
            x += 1;
        } else {
            out.push(b[y]);
            y += 1;
        }
    }
    out.extend_from_slice(&a[x..]);
    out.extend_from_slice(&b[y..]);
}

fn compile_block(dataset: &Dataset, block: &BlockSpec, membership: BlockMembership) -> BlockPlan {
    let n_total = dataset.n_total();
    let ys = dataset.ys();
    let mut plan = BlockPlan {
        ell: block.ell,
        members: Vec::new(),
        runs: Vec::new(),
        strips: Vec::new(),
        max_n: 0,
    };
    let (n_min, n_max) = membership.count_range(block, n_total);
    let n_span = block.n_span();
    let mut his: Vec<u32> = Vec::new();
    for i in 0..=block.ell {
        let m_max = block.m_max(i);
        let mut seen = HashSet::new();
        for j in 0..=block.j_max(i) {
            for k in j + 1..=j + block.k_span() {
                let (lo, hi) = block.strip_ranks(i, j, k, n_total);
                if lo > hi || !seen.insert((lo, hi)) {
                    continue;
                }
                let len = hi - lo + 1;
                let v = block.y_unit(i, len);
                let runs_start = plan.runs.len();

                let mut current_lo = 0usize;
                his.clear();
                let flush = |y_lo: usize, his: &mut Vec<u32>, runs: &mut Vec<Run>| {
                    let (keep_lo, keep_hi) = ((y_lo + n_min - 1) as u32, (y_lo + n_max - 1) as u32);
                    his.retain(|&h| h >= keep_lo && h <= keep_hi);
                    his.sort_unstable();
                    his.dedup();
                    let mut iter = his.iter().copied();
                    if let Some(first) = iter.next() {
                        let mut run = Run {
                            lo: y_lo as u32,
                            hi_first: first,
                            hi_last: first,
                        };
                        for h in iter {
                            if h == run.hi_last + 1 {
                                run.hi_last = h;
                            } else {
                                runs.push(run);
                                run.hi_first = h;
                                run.hi_last = h;
                            }
                        }
                        runs.push(run);
                    }
                    his.clear();
                };
                for m in 0..=m_max {
                    let (y_lo, _) = y_ranks(m, m + 1, v, len);
                    if y_lo != current_lo {
                        if current_lo != 0 {
                            flush(current_lo, &mut his, &mut plan.runs);
                        }
                        current_lo = y_lo;
                    }
                    for n in m + 1..=m + n_span {
                        let (_, y_hi) = y_ranks(m, n, v, len);
                        if y_hi >= y_lo {
                            his.push(y_hi as u32);
                        }
                        if y_hi == len {
                            break;
                        }
                    }
                }
                if current_lo != 0 {
                    flush(current_lo, &mut his, &mut plan.runs);
                }
                if plan.runs.len() == runs_start {
                    continue;
                }
                let members_start = plan.members.len();
                let mut members: Vec<u32> = ((lo - 1) as u32..hi as u32).collect();
                members.sort_by(|&a, &b| cmp_f64(ys[a as usize], ys[b as usize]).then(a.cmp(&b)));
                plan.members.extend_from_slice(&members);
                plan.max_n = plan.max_n.max(len.min(n_max));
                plan.strips.push(PlanStrip {
                    members: (members_start as u32, plan.members.len() as u32),
                    runs: (runs_start as u32, plan.runs.len() as u32),
                });
            }
        }
    }
    plan
}
