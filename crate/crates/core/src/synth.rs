//! Synthetic Bernoulli-labeled point sets: locations from a normal mixture,
//! labels with region-dependent success probability.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::approx::RectCoords;
use crate::error::{Error, Result};
use crate::model::{Dataset, LabeledPoint};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd: f64,
}

/// Region with its own success probability. Bounds are closed and may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub region: RectCoords,
    pub p: f64,
}

impl Effect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.region.contains_point(x, y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_points: usize,
    pub base_p: f64,
    pub strip: Option<Effect>,
    /// Takes precedence over `strip` where they overlap.
    pub box_effect: Option<Effect>,
    pub mixture: Vec<MixtureComponent>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let comp = |mean_x, mean_y| MixtureComponent {
            weight: 0.25,
            mean_x,
            mean_y,
            sd: 1.0,
        };
        Self {
            n_points: 1000,
            base_p: 0.4,
            strip: Some(Effect {
                region: RectCoords {
                    x_lo: 5.0,
                    x_hi: f64::INFINITY,
                    y_lo: f64::NEG_INFINITY,
                    y_hi: f64::INFINITY,
                },
                p: 0.6,
            }),
            box_effect: Some(Effect {
                region: RectCoords {
                    x_lo: 1.0,
                    x_hi: 2.0,
                    y_lo: 3.0,
                    y_hi: 5.0,
                },
                p: 0.75,
            }),
            mixture: vec![comp(0.0, 0.0), comp(1.5, 4.0), comp(2.0, -1.0), comp(6.5, 2.0)],
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Same locations model with every label drawn at `p`.
    pub fn null(n_points: usize, p: f64, seed: u64) -> Self {
        Self {
            n_points,
            base_p: p,
            strip: None,
            box_effect: None,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n_points == 0 {
            return bad("n_points must be positive".into());
        }
        if self.mixture.is_empty() {
            return bad("mixture needs at least one component".into());
        }
        if self.mixture.iter().any(|c| {
            !c.mean_x.is_finite()
                || !c.mean_y.is_finite()
                || !c.sd.is_finite()
                || c.weight.is_nan()
                || c.weight <= 0.0
                || c.sd <= 0.0
        }) {
            return bad("mixture weights and sds must be positive, means finite".into());
        }
        let total: f64 = self.mixture.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("mixture weights sum to {total}, not 1"));
        }
        let probs = std::iter::once(self.base_p).chain(self.strip.iter().chain(&self.box_effect).map(|e| e.p));
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Success probability at a location: box, then strip, then base.
    pub fn p_at(&self, x: f64, y: f64) -> f64 {
        if let Some(b) = self.box_effect.filter(|b| b.contains(x, y)) {
            return b.p;
        }
        if let Some(s) = self.strip.filter(|s| s.contains(x, y)) {
            return s.p;
        }
        self.base_p
    }

    pub fn generate_points(&self) -> Result<Vec<LabeledPoint>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let pick = WeightedIndex::new(self.mixture.iter().map(|c| c.weight))
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        Ok((0..self.n_points)
            .map(|_| {
                let c = &self.mixture[pick.sample(&mut rng)];
                let x = c.mean_x + c.sd * std.sample(&mut rng);
                let y = c.mean_y + c.sd * std.sample(&mut rng);
                let label = rng.random_bool(self.p_at(x, y)) as u8;
                LabeledPoint { x, y, label }
            })
            .collect())
    }

    pub fn generate(&self) -> Result<Dataset> {
        Dataset::new(self.generate_points()?)
    }
}
