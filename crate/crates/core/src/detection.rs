//! Apply critical values to the observed labels and report significant and
//! minimal rectangles.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::approx::{blocks, enumerate_block, ApproxRect, RectCoords};
use crate::calibration::{conventional_threshold, CalibrationResult, PermutationTable, ScanOptions};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::statistic::Sidedness;

/// A rectangle whose observed statistic exceeds its critical value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub rect: ApproxRect,
    pub t_value: f64,
    pub ell: u32,
    pub threshold: f64,
    pub coords: RectCoords,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Blocked,
    Conventional,
}

/// Flat serialized form of a [`Detection`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub ell: u32,
    pub i: u32,
    pub j: usize,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub n_in: usize,
    pub ones_in: usize,
    pub t: f64,
    pub threshold: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        Self {
            ell: d.ell,
            i: d.rect.i,
            j: d.rect.j,
            k: d.rect.k,
            m: d.rect.m,
            n: d.rect.n,
            x_lo: d.coords.x_lo,
            x_hi: d.coords.x_hi,
            y_lo: d.coords.y_lo,
            y_hi: d.coords.y_hi,
            n_in: d.rect.counts.n_in,
            ones_in: d.rect.counts.ones_in,
            t: d.t_value,
            threshold: d.threshold,
        }
    }
}

impl DetectionRecord {
    pub fn coords(&self) -> RectCoords {
        RectCoords {
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            y_lo: self.y_lo,
            y_hi: self.y_hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub alpha: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha_tilde: Option<f64>,
    pub detections: Vec<DetectionRecord>,
    pub minimal: Vec<DetectionRecord>,
}

impl DetectionReport {
    pub fn new(alpha: f64, method: Method, alpha_tilde: Option<f64>, detections: &[Detection]) -> Self {
        Self {
            alpha,
            method,
            alpha_tilde,
            detections: detections.iter().map(DetectionRecord::from).collect(),
            minimal: minimal_rects(detections).iter().map(DetectionRecord::from).collect(),
        }
    }
}

fn check_blocks(dataset: &Dataset, calibrated: Vec<u32>) -> Result<()> {
    let ours: Vec<u32> = blocks(dataset.n_total()).iter().map(|b| b.ell).collect();
    if ours != calibrated {
        return Err(Error::BlockMismatch {
            calibrated,
            dataset: ours,
        });
    }
    Ok(())
}

/// Enumerate every block and keep rectangles with `T` above the block's
/// threshold. Rectangles realizing the same point set within a block are
/// reported once, by their first tuple in loop order.
fn scan_with<F>(dataset: &Dataset, options: ScanOptions, threshold: F) -> Result<Vec<Detection>>
where
    F: Fn(u32) -> f64,
{
    if dataset.is_degenerate() {
        return Err(Error::DegenerateLabels {
            n_total: dataset.n_total(),
            ones_total: dataset.ones_total(),
        });
    }
    let n_total = dataset.n_total();
    let ones_total = dataset.ones_total();
    let one_sided = options.sidedness == Sidedness::OneSided;
    let mut out = Vec::new();
    for block in blocks(n_total) {
        let q = threshold(block.ell);
        let (n_lo, n_hi) = options.membership.count_range(&block, n_total);
        let mut seen = HashSet::new();
        enumerate_block(dataset, &block, |r| {
            let c = r.counts;
            if c.n_in < n_lo || c.n_in > n_hi {
                return;
            }
            // One-sided T vanishes unless the inside rate beats the overall rate.
            if one_sided && c.ones_in * n_total <= ones_total * c.n_in {
                return;
            }
            let t = options.sidedness.eval(c.n_in, c.ones_in, n_total, ones_total);
            if t > q && seen.insert((r.x_lo_rank, r.x_hi_rank, r.y_lo_rank, r.y_hi_rank)) {
                out.push(Detection {
                    rect: *r,
                    t_value: t,
                    ell: r.ell,
                    threshold: q,
                    coords: r.coords.expect("nonempty rectangle has coordinates"),
                });
            }
        });
    }
    Ok(out)
}

/// Rectangles exceeding their block's critical value `q_ℓ(α̃ / w(ℓ))`.
pub fn blocked_scan(dataset: &Dataset, calibration: &CalibrationResult) -> Result<Vec<Detection>> {
    check_blocks(dataset, calibration.block_ids())?;
    let thresholds = calibration.thresholds.clone();
    scan_with(dataset, calibration.options, |ell| {
        thresholds
            .iter()
            .find(|t| t.ell == ell)
            .map(|t| t.q)
            .unwrap_or(f64::INFINITY)
    })
}

/// Rectangles exceeding the single `(1 − α)` critical value of the overall maximum.
pub fn conventional_scan(dataset: &Dataset, table: &PermutationTable, alpha: f64) -> Result<Vec<Detection>> {
    check_blocks(dataset, table.block_ids.clone())?;
    let q = conventional_threshold(table, alpha);
    scan_with(dataset, table.options, |_| q)
}

fn strictly_within(a: &RectCoords, b: &RectCoords) -> bool {
    a.is_within(b) && a != b
}

/// Detections whose box strictly contains no other detection's box, ordered
/// by block descending and then statistic descending. Of several detections
/// with identical boxes only the first in that order is kept.
pub fn minimal_rects(detections: &[Detection]) -> Vec<Detection> {
    let mut order: Vec<&Detection> = detections.iter().collect();
    order.sort_by(|a, b| b.ell.cmp(&a.ell).then(b.t_value.total_cmp(&a.t_value)));
    // Small boxes first so most candidates are rejected against a short list.
    order.sort_by(|a, b| {
        let pa = (a.coords.x_hi - a.coords.x_lo) + (a.coords.y_hi - a.coords.y_lo);
        let pb = (b.coords.x_hi - b.coords.x_lo) + (b.coords.y_hi - b.coords.y_lo);
        pa.total_cmp(&pb)
    });
    let mut kept: Vec<&Detection> = Vec::new();
    for d in order {
        if kept.iter().any(|s| s.coords.is_within(&d.coords)) {
            continue;
        }
        kept.retain(|s| !strictly_within(&d.coords, &s.coords));
        kept.push(d);
    }
    let mut out: Vec<Detection> = kept.into_iter().copied().collect();
    out.sort_by(|a, b| b.ell.cmp(&a.ell).then(b.t_value.total_cmp(&a.t_value)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{simulate_null, solve_alpha_tilde, NullOptions, WeightScheme};
    use crate::model::LabeledPoint;
    use crate::statistic::Counts;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(ell: u32, t: f64, x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Detection {
        let coords = RectCoords { x_lo, x_hi, y_lo, y_hi };
        Detection {
            rect: ApproxRect {
                ell,
                i: 0,
                j: 0,
                k: 1,
                m: 0,
                n: 1,
                x_lo_rank: 1,
                x_hi_rank: 1,
                y_lo_rank: 1,
                y_hi_rank: 1,
                counts: Counts {
                    n_in: 1,
                    ones_in: 1,
                    n_total: 10,
                    ones_total: 5,
                },
                coords: Some(coords),
            },
            t_value: t,
            ell,
            threshold: 0.0,
            coords,
        }
    }

    #[test]
    fn minimal_examples() {
        let a = det(3, 5.0, 0.0, 1.0, 0.0, 1.0);
        assert_eq!(minimal_rects(&[a]), vec![a]);
        let inner = det(4, 4.0, 0.2, 0.5, 0.2, 0.5);
        assert_eq!(minimal_rects(&[a, inner]), vec![inner]);
        let far = det(3, 6.0, 2.0, 3.0, 2.0, 3.0);
        assert_eq!(minimal_rects(&[a, far]), vec![far, a]);
        let twin = det(5, 1.0, 0.0, 1.0, 0.0, 1.0);
        assert_eq!(minimal_rects(&[a, twin]), vec![twin]);
        let edge = det(3, 2.0, 0.0, 1.0, 0.0, 0.5);
        assert_eq!(minimal_rects(&[a, edge]), vec![edge]);
        assert!(minimal_rects(&[]).is_empty());
    }

    fn arb_det() -> impl Strategy<Value = Detection> {
        (3u32..6, 0.0f64..10.0, 0u8..6, 0u8..6, 0u8..6, 0u8..6).prop_map(|(ell, t, a, b, c, d)| {
            let (x_lo, x_hi) = (a.min(b) as f64, a.max(b) as f64);
            let (y_lo, y_hi) = (c.min(d) as f64, c.max(d) as f64);
            det(ell, t, x_lo, x_hi, y_lo, y_hi)
        })
    }

    proptest! {
        #[test]
        fn minimal_is_exact_antichain(ds in prop::collection::vec(arb_det(), 0..40)) {
            let out = minimal_rects(&ds);
            for (x, a) in out.iter().enumerate() {
                for (y, b) in out.iter().enumerate() {
                    if x != y {
                        prop_assert!(!a.coords.is_within(&b.coords));
                    }
                }
            }
            for d in &ds {
                let is_min = !ds.iter().any(|o| strictly_within(&o.coords, &d.coords));
                let present = out.iter().any(|o| o.coords == d.coords);
                prop_assert_eq!(is_min, present);
            }
            for w in out.windows(2) {
                prop_assert!(w[0].ell > w[1].ell || (w[0].ell == w[1].ell && w[0].t_value >= w[1].t_value));
            }
        }
    }

    fn planted(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(
            (0..n)
                .map(|_| {
                    let (x, y): (f64, f64) = (rng.random(), rng.random());
                    let p = if x < 0.3 && y < 0.4 { 0.9 } else { 0.3 };
                    LabeledPoint {
                        x,
                        y,
                        label: rng.random_bool(p) as u8,
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn scans_find_planted_effect_and_recount() {
        let d = planted(500, 31);
        let table = simulate_null(&d, 200, 4, &NullOptions::default()).unwrap();
        let cal = solve_alpha_tilde(&table, 0.05, WeightScheme::Ell2).unwrap();
        let blocked = blocked_scan(&d, &cal).unwrap();
        let conventional = conventional_scan(&d, &table, 0.05).unwrap();
        assert!(!blocked.is_empty());
        assert!(!conventional.is_empty());
        let effect = RectCoords {
            x_lo: 0.0,
            x_hi: 0.3,
            y_lo: 0.0,
            y_hi: 0.4,
        };
        for det in blocked.iter().chain(&conventional) {
            assert!(det.t_value > det.threshold);
            let (n_in, ones_in) = d.count_in(det.coords.x_lo, det.coords.x_hi, det.coords.y_lo, det.coords.y_hi);
            assert_eq!((n_in, ones_in), (det.rect.counts.n_in, det.rect.counts.ones_in));
            let t = Sidedness::OneSided.eval(n_in, ones_in, d.n_total(), d.ones_total());
            assert_eq!(t, det.t_value);
        }
        assert!(minimal_rects(&blocked).iter().all(|m| m.coords.intersects(&effect)));
    }

    #[test]
    fn block_mismatch_and_degenerate() {
        let d = planted(500, 32);
        let table = simulate_null(&d, 20, 4, &NullOptions::default()).unwrap();
        let cal = solve_alpha_tilde(&table, 0.05, WeightScheme::Ell2).unwrap();
        let bigger = planted(1000, 33);
        assert!(matches!(blocked_scan(&bigger, &cal), Err(Error::BlockMismatch { .. })));
        assert!(matches!(
            conventional_scan(&bigger, &table, 0.05),
            Err(Error::BlockMismatch { .. })
        ));
        let flat = d.with_labels(vec![1; 500]).unwrap();
        assert!(matches!(blocked_scan(&flat, &cal), Err(Error::DegenerateLabels { .. })));
    }

    #[test]
    fn conventional_at_alpha_one_uses_smallest_max() {
        let d = planted(500, 34);
        let table = simulate_null(&d, 30, 4, &NullOptions::default()).unwrap();
        let dets = conventional_scan(&d, &table, 1.0).unwrap();
        let smallest = table.global_maxima().into_iter().fold(f64::INFINITY, f64::min);
        assert!(dets.iter().all(|x| x.threshold == smallest));
    }

    #[test]
    fn report_serializes_flat_records() {
        let d = planted(500, 35);
        let table = simulate_null(&d, 50, 4, &NullOptions::default()).unwrap();
        let dets = conventional_scan(&d, &table, 0.05).unwrap();
        let report = DetectionReport::new(0.05, Method::Conventional, None, &dets);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["method"], "conventional");
        assert!(json.get("alpha_tilde").is_none());
        let back: DetectionReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
        if let Some(first) = report.detections.first() {
            let keys = [
                "ell",
                "i",
                "j",
                "k",
                "m",
                "n",
                "x_lo",
                "x_hi",
                "y_lo",
                "y_hi",
                "n_in",
                "ones_in",
                "t",
                "threshold",
            ];
            let v = serde_json::to_value(first).unwrap();
            assert_eq!(v.as_object().unwrap().len(), keys.len());
            assert!(keys.iter().all(|k| v.get(k).is_some()));
        }
    }
}
