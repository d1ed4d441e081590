//! Permutation null distribution of the block maxima and the solve for the
//! common level `α̃` that gives every block its own critical value.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::BlockMembership;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::plan::{ScanPlan, Scratch};
use crate::statistic::Sidedness;

/// Block weight `w(ℓ)`; block `ℓ` is tested at level `α̃ / w(ℓ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightScheme {
    /// `ℓ²`
    #[default]
    #[serde(rename = "ell2")]
    Ell2,
    /// `(10 + ℓ)²`
    #[serde(rename = "ell10")]
    Ell10,
}

impl WeightScheme {
    pub fn weight(self, ell: u32) -> f64 {
        let e = ell as f64;
        match self {
            WeightScheme::Ell2 => e * e,
            WeightScheme::Ell10 => (10.0 + e) * (10.0 + e),
        }
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ell2" => Ok(WeightScheme::Ell2),
            "ell10" => Ok(WeightScheme::Ell10),
            other => Err(Error::InvalidArgument(format!("unknown weight scheme {other:?}"))),
        }
    }
}

/// Settings shared by calibration and scanning; both sides must agree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScanOptions {
    #[serde(default)]
    pub sidedness: Sidedness,
    #[serde(default)]
    pub membership: BlockMembership,
}

#[derive(Clone, Debug, Default)]
pub struct NullOptions {
    pub scan: ScanOptions,
    /// Use the observed labels as permutation 0.
    pub include_identity: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

/// Joint per-permutation block maxima under label permutation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationTable {
    pub n_perms: usize,
    pub block_ids: Vec<u32>,
    /// `maxima[p][b]` is the maximum over block `block_ids[b]` for permutation `p`.
    pub maxima: Vec<Vec<f64>>,
    /// Per block, the column of `maxima` sorted ascending.
    pub sorted_maxima: Vec<Vec<f64>>,
    pub seed: u64,
    pub options: ScanOptions,
}

impl PermutationTable {
    /// Assemble from joint tuples, sorting each block's column.
    pub fn from_maxima(block_ids: Vec<u32>, maxima: Vec<Vec<f64>>, seed: u64, options: ScanOptions) -> Result<Self> {
        if maxima.is_empty() {
            return Err(Error::InvalidArgument(
                "permutation table needs at least one permutation".into(),
            ));
        }
        if maxima.iter().any(|row| row.len() != block_ids.len()) {
            return Err(Error::InvalidArgument("ragged permutation table".into()));
        }
        if maxima.iter().flatten().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::InvalidArgument("block maxima must be nonnegative".into()));
        }
        let sorted_maxima = (0..block_ids.len())
            .map(|b| {
                let mut col: Vec<f64> = maxima.iter().map(|row| row[b]).collect();
                col.sort_by(f64::total_cmp);
                col
            })
            .collect();
        Ok(Self {
            n_perms: maxima.len(),
            block_ids,
            maxima,
            sorted_maxima,
            seed,
            options,
        })
    }

    fn block_pos(&self, ell: u32) -> Option<usize> {
        self.block_ids.iter().position(|&b| b == ell)
    }

    /// Per-permutation maximum over all blocks.
    pub fn global_maxima(&self) -> Vec<f64> {
        self.maxima
            .iter()
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .collect()
    }
}

/// Label vector for permutation `index`: a uniform shuffle from its own
/// ChaCha stream, so results do not depend on scheduling.
pub fn permuted_labels(labels: &[u8], seed: u64, index: u64, out: &mut Vec<u8>) {
    out.clear();
    out.extend_from_slice(labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    out.shuffle(&mut rng);
}

/// Simulate `n_perms` label permutations and record each one's block maxima.
pub fn simulate_null(dataset: &Dataset, n_perms: usize, seed: u64, options: &NullOptions) -> Result<PermutationTable> {
    let plan = ScanPlan::new(dataset, options.scan.membership);
    simulate_null_with_plan(dataset, &plan, n_perms, seed, options)
}

/// As [`simulate_null`], reusing a compiled plan for the dataset's geometry.
pub fn simulate_null_with_plan(
    dataset: &Dataset,
    plan: &ScanPlan,
    n_perms: usize,
    seed: u64,
    options: &NullOptions,
) -> Result<PermutationTable> {
    if dataset.is_degenerate() {
        return Err(Error::DegenerateLabels {
            n_total: dataset.n_total(),
            ones_total: dataset.ones_total(),
        });
    }
    let block_ids = plan.block_ids();
    if block_ids.is_empty() {
        return Err(Error::EmptyBlockRange(dataset.n_total()));
    }
    if plan.n_total() != dataset.n_total() || plan.membership() != options.scan.membership {
        return Err(Error::InvalidArgument(
            "scan plan does not match dataset or options".into(),
        ));
    }
    if n_perms == 0 {
        return Err(Error::InvalidArgument("need at least one permutation".into()));
    }
    let labels = dataset.labels();
    let sidedness = options.scan.sidedness;
    let n_blocks = block_ids.len();
    let include_identity = options.include_identity;

    let run = || -> Vec<Vec<f64>> {
        (0..n_perms)
            .into_par_iter()
            .map_init(
                || (Scratch::default(), Vec::with_capacity(labels.len())),
                |(scratch, buf), p| {
                    if include_identity && p == 0 {
                        buf.clear();
                        buf.extend_from_slice(labels);
                    } else {
                        permuted_labels(labels, seed, p as u64, buf);
                    }
                    let mut row = vec![0.0; n_blocks];
                    plan.block_maxima_into(buf, sidedness, scratch, &mut row);
                    row
                },
            )
            .collect()
    };
    let maxima = match options.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    PermutationTable::from_maxima(block_ids, maxima, seed, options.scan)
}

/// 1-based index `⌈(1 − level) M⌉` clamped to `[1, M]`.
///
/// Products within `1e-9` of an integer are taken as that integer so that
/// levels placed exactly on the grid are not pushed one step up by rounding.
pub fn quantile_index(level: f64, n_perms: usize) -> usize {
    let r = (1.0 - level) * n_perms as f64;
    let nearest = r.round();
    let idx = if (r - nearest).abs() < 1e-9 { nearest } else { r.ceil() };
    idx.clamp(1.0, n_perms as f64) as usize
}

/// Empirical `(1 − level)`-quantile of a block's recorded maxima.
pub fn block_quantile(table: &PermutationTable, ell: u32, level: f64) -> Result<f64> {
    let b = table
        .block_pos(ell)
        .ok_or_else(|| Error::InvalidArgument(format!("block {ell} not in table")))?;
    Ok(sorted_quantile(&table.sorted_maxima[b], level))
}

pub(crate) fn sorted_quantile(sorted: &[f64], level: f64) -> f64 {
    sorted[quantile_index(level, sorted.len()) - 1]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockThreshold {
    pub ell: u32,
    /// Per-block tail level `min(α̃ / w(ℓ), 1)`.
    pub level: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub weight_scheme: WeightScheme,
    pub thresholds: Vec<BlockThreshold>,
    /// Fraction of permutations exceeding at least one block threshold.
    pub union_rate: f64,
    pub n_perms: usize,
    pub seed: u64,
    #[serde(default)]
    pub options: ScanOptions,
}

impl CalibrationResult {
    pub fn block_ids(&self) -> Vec<u32> {
        self.thresholds.iter().map(|t| t.ell).collect()
    }

    pub fn threshold(&self, ell: u32) -> Option<f64> {
        self.thresholds.iter().find(|t| t.ell == ell).map(|t| t.q)
    }
}

/// Fraction of permutations whose joint tuple exceeds at least one threshold.
pub fn union_rate(table: &PermutationTable, thresholds: &[f64]) -> f64 {
    assert_eq!(thresholds.len(), table.block_ids.len());
    let hits = table
        .maxima
        .iter()
        .filter(|row| row.iter().zip(thresholds).any(|(v, q)| v > q))
        .count();
    hits as f64 / table.n_perms as f64
}

fn thresholds_at(table: &PermutationTable, weights: &[f64], alpha_tilde: f64) -> Vec<BlockThreshold> {
    table
        .block_ids
        .iter()
        .zip(weights)
        .zip(&table.sorted_maxima)
        .map(|((&ell, &w), sorted)| {
            let level = (alpha_tilde / w).min(1.0);
            BlockThreshold {
                ell,
                level,
                q: sorted_quantile(sorted, level),
            }
        })
        .collect()
}

/// Largest `α̃` such that the joint exceedance rate over the table stays at
/// or below `alpha`.
///
/// Each block's threshold only changes where `(1 − α̃/w(ℓ)) M` crosses an
/// integer, so `α̃` is searched by bisection over the sorted set of those
/// breakpoints in `[0, min_ℓ w(ℓ)]`. `α̃ = 0` (every threshold at the block's
/// largest recorded maximum) is always feasible.
pub fn solve_alpha_tilde(
    table: &PermutationTable,
    alpha: f64,
    weight_scheme: WeightScheme,
) -> Result<CalibrationResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in [0, 1]")));
    }
    let m = table.n_perms;
    let weights: Vec<f64> = table.block_ids.iter().map(|&l| weight_scheme.weight(l)).collect();
    let cap = weights.iter().copied().fold(f64::INFINITY, f64::min);

    let mut grid: Vec<f64> = vec![0.0, cap];
    for &w in &weights {
        for c in 0..=m {
            let a = w * (1.0 - c as f64 / m as f64);
            if a > 0.0 && a < cap {
                grid.push(a);
            }
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let rate_at = |a: f64| {
        let q: Vec<f64> = thresholds_at(table, &weights, a).iter().map(|t| t.q).collect();
        union_rate(table, &q)
    };
    // Invariant: grid[lo] feasible; grid[hi] infeasible or hi == len.
    let (mut lo, mut hi) = (0usize, grid.len());
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if rate_at(grid[mid]) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha_tilde = grid[lo];
    let thresholds = thresholds_at(table, &weights, alpha_tilde);
    let q: Vec<f64> = thresholds.iter().map(|t| t.q).collect();
    let union = union_rate(table, &q);
    if alpha_tilde == 0.0 {
        log::warn!(
            "no positive alpha_tilde keeps the union rate at or below {alpha}; using the largest recorded maxima"
        );
    }
    Ok(CalibrationResult {
        alpha,
        alpha_tilde,
        weight_scheme,
        thresholds,
        union_rate: union,
        n_perms: m,
        seed: table.seed,
        options: table.options,
    })
}

/// Single critical value for the overall maximum: the empirical `(1 − α)`
/// quantile of the per-permutation maxima across all blocks.
pub fn conventional_threshold(table: &PermutationTable, alpha: f64) -> f64 {
    let mut global = table.global_maxima();
    global.sort_by(f64::total_cmp);
    sorted_quantile(&global, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabeledPoint;
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform(n: usize, seed: u64, p: f64) -> Dataset {
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

    fn table(rows: Vec<Vec<f64>>) -> PermutationTable {
        let blocks = (3..3 + rows[0].len() as u32).collect();
        PermutationTable::from_maxima(blocks, rows, 0, ScanOptions::default()).unwrap()
    }

    #[test]
    fn quantile_rule() {
        let t = table(vec![vec![3.0], vec![1.0], vec![4.0], vec![2.0]]);
        assert_eq!(block_quantile(&t, 3, 0.5).unwrap(), 2.0);
        assert_eq!(block_quantile(&t, 3, 1.0 - 1e-12).unwrap(), 1.0);
        assert_eq!(block_quantile(&t, 3, 1e-12).unwrap(), 4.0);
        assert_eq!(block_quantile(&t, 3, 0.3).unwrap(), 3.0);
        assert!(block_quantile(&t, 4, 0.3).is_err());
        assert_eq!(quantile_index(0.05, 2000), 1900);
        assert_eq!(quantile_index(1.0 - 0.7 * 1e-3, 1000), 1);
    }

    #[test]
    fn alpha_one_takes_the_whole_domain() {
        let t = table(vec![vec![1.0, 2.0], vec![0.5, 0.1], vec![2.0, 0.0]]);
        let r = solve_alpha_tilde(&t, 1.0, WeightScheme::Ell2).unwrap();
        assert_eq!(r.alpha_tilde, 9.0);
        assert!(r.union_rate <= 1.0);
    }

    #[test]
    fn zero_alpha_gives_zero_union() {
        let t = table(vec![vec![1.0, 2.0], vec![0.5, 0.1], vec![2.0, 0.0]]);
        let r = solve_alpha_tilde(&t, 0.0, WeightScheme::Ell2).unwrap();
        assert_eq!(r.union_rate, 0.0);
        for (th, col) in r.thresholds.iter().zip(&t.sorted_maxima) {
            assert!(th.q >= *col.last().unwrap() || r.alpha_tilde > 0.0);
        }
    }

    #[test]
    fn identity_permutation_matches_observed() {
        let d = uniform(500, 21, 0.4);
        let opts = NullOptions {
            include_identity: true,
            ..Default::default()
        };
        let t = simulate_null(&d, 3, 9, &opts).unwrap();
        let plan = ScanPlan::new(&d, opts.scan.membership);
        assert_eq!(t.maxima[0], plan.block_maxima(d.labels(), opts.scan.sidedness));
        assert_eq!(t.n_perms, 3);
        assert!(t.maxima.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn seed_and_thread_determinism() {
        let d = uniform(400, 22, 0.35);
        let one = NullOptions {
            threads: Some(1),
            ..Default::default()
        };
        let four = NullOptions {
            threads: Some(4),
            ..Default::default()
        };
        let a = simulate_null(&d, 24, 5, &one).unwrap();
        let b = simulate_null(&d, 24, 5, &four).unwrap();
        assert_eq!(a, b);
        let c = simulate_null(&d, 24, 6, &one).unwrap();
        assert_ne!(a.maxima, c.maxima);
    }

    #[test]
    fn rejects_degenerate_and_small() {
        let d = uniform(400, 23, 0.0);
        assert!(matches!(
            simulate_null(&d, 5, 1, &NullOptions::default()),
            Err(Error::DegenerateLabels { .. })
        ));
        let d = uniform(50, 24, 0.5);
        assert!(matches!(
            simulate_null(&d, 5, 1, &NullOptions::default()),
            Err(Error::EmptyBlockRange(50))
        ));
    }

    #[test]
    fn single_permutation() {
        let d = uniform(300, 25, 0.5);
        let t = simulate_null(&d, 1, 3, &NullOptions::default()).unwrap();
        assert_eq!(t.maxima.len(), 1);
    }

    fn arb_table() -> impl Strategy<Value = PermutationTable> {
        (1usize..4, 5usize..80).prop_flat_map(|(blocks, perms)| {
            prop::collection::vec(prop::collection::vec(0.0f64..10.0, blocks), perms).prop_map(table)
        })
    }

    proptest! {
        #[test]
        fn solve_invariants(t in arb_table(), alpha in 0.0f64..0.5, ell10 in any::<bool>()) {
            let scheme = if ell10 { WeightScheme::Ell10 } else { WeightScheme::Ell2 };
            let r = solve_alpha_tilde(&t, alpha, scheme).unwrap();
            prop_assert!(r.union_rate <= alpha);
            let q: Vec<f64> = r.thresholds.iter().map(|x| x.q).collect();
            prop_assert_eq!(union_rate(&t, &q), r.union_rate);
            for th in &r.thresholds {
                prop_assert_eq!(th.level, (r.alpha_tilde / scheme.weight(th.ell)).min(1.0));
            }
            // Maximality: the next grid value up must break the level.
            let weights: Vec<f64> = t.block_ids.iter().map(|&l| scheme.weight(l)).collect();
            let cap = weights.iter().copied().fold(f64::INFINITY, f64::min);
            let m = t.n_perms as f64;
            let next = weights
                .iter()
                .flat_map(|&w| (0..=t.n_perms).map(move |c| w * (1.0 - c as f64 / m)))
                .filter(|&a| a > r.alpha_tilde && a <= cap)
                .fold(f64::INFINITY, f64::min);
            if next.is_finite() {
                let q: Vec<f64> = thresholds_at(&t, &weights, next).iter().map(|x| x.q).collect();
                prop_assert!(union_rate(&t, &q) > alpha);
            }
            // Larger alpha never shrinks the solution.
            let r2 = solve_alpha_tilde(&t, (alpha + 0.1).min(1.0), scheme).unwrap();
            prop_assert!(r2.alpha_tilde >= r.alpha_tilde);
        }

        #[test]
        fn thresholds_decrease_with_level(t in arb_table(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for &ell in &t.block_ids {
                prop_assert!(block_quantile(&t, ell, hi).unwrap() <= block_quantile(&t, ell, lo).unwrap());
            }
        }
    }
}
