use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use rand::Rng;

use super::{forward_stepwise, HiddenState, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationMode {
    Greedy,
    Sample,
}

impl FromStr for GenerationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(GenerationMode::Greedy),
            "sample" => Ok(GenerationMode::Sample),
            _ => Err(format!("unknown generation mode {s:?} (expected greedy or sample)")),
        }
    }
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenerationMode::Greedy => "greedy",
            GenerationMode::Sample => "sample",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationConfig {
    pub max_len: usize,
    /// Length-normalization exponent for the score.
    pub alpha: f64,
    pub mode: GenerationMode,
    /// Generation stops after emitting this id.
    pub eos_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub ids: Vec<usize>,
    /// Log-probability of every emitted token.
    pub log_probs: Vec<f64>,
    /// `T^-alpha * sum(log p)` over the `T` emitted tokens.
    pub score: f64,
}

/// Length-normalized sequence score `T^-alpha * sum(log p)`.
pub fn length_normalized_score(log_probs: &[f64], alpha: f64) -> f64 {
    if log_probs.is_empty() {
        return 0.0;
    }
    let t = log_probs.len() as f64;
    t.powf(-alpha) * log_probs.iter().sum::<f64>()
}

fn log_softmax(logits: ArrayView1<'_, f64>) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Continues `prefix` autoregressively, feeding back its own outputs until
/// `eos` is emitted or `max_len` tokens have been produced.
pub fn generate<R: Rng + ?Sized>(
    params: &ModelParams,
    prefix: &[usize],
    cfg: &GenerationConfig,
    rng: &mut R,
) -> Result<Generated> {
    if prefix.is_empty() {
        return Err(Error::Sizing("generation prefix must not be empty".into()));
    }
    if cfg.max_len == 0 || !(cfg.alpha > 0.0) {
        return Err(Error::Range(format!(
            "generation needs max_len >= 1 and alpha > 0, got {} and {}",
            cfg.max_len, cfg.alpha
        )));
    }

    let mut state = HiddenState::zeros(&params.config, 1);
    let (cache, next) = forward_stepwise(params, prefix.len(), &state, |t, _, ids| {
        ids[0] = prefix[t];
        Ok(())
    })?;
    state = next;
    let mut log_p = log_softmax(cache.logits_at(0, prefix.len() - 1));

    let mut ids = Vec::new();
    let mut log_probs = Vec::new();
    loop {
        let chosen = match cfg.mode {
            GenerationMode::Greedy => argmax(&log_p),
            GenerationMode::Sample => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = log_p.len() - 1;
                for (i, lp) in log_p.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
        };
        ids.push(chosen);
        log_probs.push(log_p[chosen]);
        if Some(chosen) == cfg.eos_id || ids.len() >= cfg.max_len {
            break;
        }
        let (cache, next) = forward_stepwise(params, 1, &state, |_, _, slot| {
            slot[0] = chosen;
            Ok(())
        })?;
        state = next;
        log_p = log_softmax(cache.logits_at(0, 0));
    }

    let score = length_normalized_score(&log_probs, cfg.alpha);
    Ok(Generated { ids, log_probs, score })
}
