//! Per-step input selection between the gold token, the model's previous
//! prediction and a sampled replacement of the gold token.

use rand::Rng;

use crate::neighbors::{sample_neighbor, ReplacementTable, Temperature};
use crate::schedules::RatePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choice {
    Teacher,
    Prediction,
    Neighbor,
    /// Both rates fired and the coin picked the prediction.
    MixedPrediction,
    /// Both rates fired and the coin picked the neighbor.
    MixedNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub id: usize,
    pub choice: Choice,
    /// A neighbor was requested but the gold token had no candidates.
    pub fallback: bool,
}

/// Picks the input for the next step.
///
/// Draws `pi1` then `pi2` uniformly from `[0, 1)`. If `epsilon > pi1` and
/// `gamma > pi2` a fair coin (one more uniform draw, `< 0.5` meaning the
/// prediction) chooses between `yhat_prev` and a neighbor of `y_prev`;
/// otherwise `epsilon > pi1` gives `yhat_prev`, `gamma > pi2` gives a
/// neighbor, and the gold `y_prev` is kept. Neighbors are drawn only when
/// chosen.
pub fn select_input<R: Rng + ?Sized>(
    y_prev: usize,
    yhat_prev: usize,
    rates: RatePair,
    table: Option<&dyn ReplacementTable>,
    tau: Temperature,
    rng: &mut R,
) -> Selection {
    let pi1: f64 = rng.random();
    let pi2: f64 = rng.random();
    let use_pred = rates.epsilon > pi1;
    let use_neigh = rates.gamma > pi2;

    let neighbor = |rng: &mut R| match table {
        Some(t) => {
            let r = sample_neighbor(y_prev, t, tau, rng);
            (r.id, r.fallback)
        }
        None => (y_prev, true),
    };

    let (id, choice, fallback) = match (use_pred, use_neigh) {
        (true, true) => {
            if rng.random::<f64>() < 0.5 {
                (yhat_prev, Choice::MixedPrediction, false)
            } else {
                let (id, fb) = neighbor(rng);
                (id, Choice::MixedNeighbor, fb)
            }
        }
        (true, false) => (yhat_prev, Choice::Prediction, false),
        (false, true) => {
            let (id, fb) = neighbor(rng);
            (id, Choice::Neighbor, fb)
        }
        (false, false) => (y_prev, Choice::Teacher, false),
    };
    Selection { id, choice, fallback }
}

/// Counts of selection outcomes over an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReplacementStats {
    pub teacher: u64,
    pub prediction: u64,
    pub neighbor: u64,
    pub mixed_prediction: u64,
    pub mixed_neighbor: u64,
    /// Neighbor requests that kept the gold token for lack of candidates.
    pub fallbacks: u64,
}

impl ReplacementStats {
    pub fn record(&mut self, s: &Selection) {
        match s.choice {
            Choice::Teacher => self.teacher += 1,
            Choice::Prediction => self.prediction += 1,
            Choice::Neighbor => self.neighbor += 1,
            Choice::MixedPrediction => self.mixed_prediction += 1,
            Choice::MixedNeighbor => self.mixed_neighbor += 1,
        }
        if s.fallback {
            self.fallbacks += 1;
        }
    }

    pub fn decisions(&self) -> u64 {
        self.teacher + self.prediction + self.neighbor + self.mixed_prediction + self.mixed_neighbor
    }

    fn frac(&self, count: u64) -> f64 {
        match self.decisions() {
            0 => 0.0,
            n => count as f64 / n as f64,
        }
    }

    /// `(teacher, prediction, neighbor, mixed)`, summing to 1. An epoch
    /// without decisions counts as fully teacher-forced.
    pub fn fractions(&self) -> [f64; 4] {
        if self.decisions() == 0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        [
            self.frac(self.teacher),
            self.frac(self.prediction),
            self.frac(self.neighbor),
            self.frac(self.mixed_prediction + self.mixed_neighbor),
        ]
    }

    /// Fraction of inputs that ended up being the model's prediction.
    pub fn prediction_share(&self) -> f64 {
        self.frac(self.prediction + self.mixed_prediction)
    }

    /// Fraction of inputs that ended up being a sampled neighbor.
    pub fn neighbor_share(&self) -> f64 {
        self.frac(self.neighbor + self.mixed_neighbor)
    }
}
