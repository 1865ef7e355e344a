//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use curricle::corpus::{BatchSet, TokenStream};
use curricle::neighbors::EmbeddingMatrix;
use curricle::seqmodel::{
    clip_gradients, forward, init_params, loss_and_grads, nll_sum, perplexity, HiddenState, ModelConfig, ModelParams,
};
use curricle::trainer::{cosine_lr, evaluate, DataPaths};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Teacher-forced mean NLL of one window, computed by the forward pass only.
pub fn window_loss(
    params: &ModelParams,
    inputs: ArrayView2<'_, usize>,
    targets: ArrayView2<'_, usize>,
    h0: &HiddenState,
) -> f64 {
    let (cache, _) = forward(params, inputs, h0).unwrap();
    nll_sum(params, &cache, targets).unwrap() / inputs.len() as f64
}

/// Largest relative error between analytic gradients and central finite
/// differences over every parameter. Denominators are floored at `floor`
/// so gradients that are zero up to rounding do not dominate.
pub fn max_gradient_error(
    params: &ModelParams,
    inputs: ArrayView2<'_, usize>,
    targets: ArrayView2<'_, usize>,
    h0: &HiddenState,
    step: f64,
    floor: f64,
) -> (f64, String) {
    let (_, grads, _) = loss_and_grads(params, inputs, targets, h0).unwrap();
    let names = params.tensor_names();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(<[f64]>::to_vec).collect();
    let mut probe = params.clone();
    let mut worst = (0.0, String::new());
    for (ti, name) in names.iter().enumerate() {
        for i in 0..analytic[ti].len() {
            let orig = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + step;
            let up = window_loss(&probe, inputs, targets, h0);
            probe.tensors_mut()[ti][i] = orig - step;
            let down = window_loss(&probe, inputs, targets, h0);
            probe.tensors_mut()[ti][i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[ti][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}]: analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

/// Brute-force top-k cosine neighbors: every pair scored, rows sorted by
/// descending similarity then ascending id.
pub fn brute_force_neighbors(emb: &Array2<f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = emb.nrows();
    let norms: Vec<f64> = (0..n)
        .map(|i| emb.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dot: f64 = emb.row(i).iter().zip(emb.row(j)).map(|(a, b)| a * b).sum();
                    (j, (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0))
                })
                .collect();
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            row.truncate(k);
            row
        })
        .collect()
}

/// Random embeddings with deliberate duplicate and negated rows, so the
/// neighbor ordering has exact ties to resolve.
pub fn random_embeddings(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingMatrix {
    let integer = rng.random_bool(0.5);
    let mut v = Array2::zeros((n, d));
    for i in 0..n {
        loop {
            for x in v.row_mut(i).iter_mut() {
                *x = if integer {
                    rng.random_range(-3i32..=3) as f64
                } else {
                    rng.random_range(-1.0..1.0)
                };
            }
            if v.row(i).iter().any(|&x| x != 0.0) {
                break;
            }
        }
        if i > 0 && rng.random_bool(0.15) {
            let j = rng.random_range(0..i);
            let src = v.row(j).to_owned();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -2.0 };
            v.row_mut(i).assign(&(src * sign));
        }
    }
    EmbeddingMatrix::new(v)
}

/// Plain teacher-forced truncated-BPTT SGD, one epoch, using only the model
/// primitives. Returns the training perplexity.
pub fn reference_epoch(params: &mut ModelParams, batches: &BatchSet, lr: f64, clip: f64) -> f64 {
    let mut hidden = HiddenState::zeros(&params.config, batches.batch_size());
    let mut total = 0.0;
    for w in batches.windows() {
        let (loss, mut grads, h_next) =
            loss_and_grads(params, batches.window_inputs(w), batches.window_targets(w), &hidden).unwrap();
        clip_gradients(&mut grads, clip);
        params.sgd_step(&grads, lr);
        hidden = h_next;
        total += loss * w.len as f64 * batches.batch_size() as f64;
    }
    perplexity(total / batches.num_tokens() as f64)
}

/// Teacher-forced reference training from a fresh seeded init. Returns the
/// final parameters and per-epoch validation perplexities.
pub fn reference_training(
    config: ModelConfig,
    seed: u64,
    train: &BatchSet,
    valid: &BatchSet,
    epochs: usize,
    lr0: f64,
    clip: f64,
) -> (ModelParams, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(config, &mut rng).unwrap();
    let mut valid_ppl = Vec::new();
    for e in 0..epochs {
        reference_epoch(&mut params, train, cosine_lr(lr0, 0.0, e, epochs), clip);
        valid_ppl.push(evaluate(&params, valid).unwrap());
    }
    (params, valid_ppl)
}

pub fn stream(ids: &[usize]) -> TokenStream {
    TokenStream { ids: ids.to_vec() }
}

/// Writes train/valid/test files holding the same text.
pub fn write_same_splits(dir: &Path, text: &str) -> DataPaths {
    let mut paths = Vec::new();
    for name in ["train.txt", "valid.txt", "test.txt"] {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        paths.push(p);
    }
    DataPaths {
        train: paths[0].clone(),
        valid: paths[1].clone(),
        test: paths[2].clone(),
        embeddings: None,
    }
}
