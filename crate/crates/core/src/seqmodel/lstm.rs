use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use super::{HiddenState, ModelParams};
use crate::error::{Error, Result};

/// Activations of one layer over a window. Row `t * batch + b` holds step
/// `t` of stripe `b`.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Layer input, `[N x in]`.
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    /// Activated gates `(i, f, g, o)`, `[N x 4h]`.
    pub gates: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

impl LayerCache {
    fn new(rows: usize, input: usize, hidden: usize) -> Self {
        let z = |c| Array2::zeros((rows, c));
        LayerCache {
            x: z(input),
            h_prev: z(hidden),
            c_prev: z(hidden),
            gates: z(4 * hidden),
            tanh_c: z(hidden),
            h: z(hidden),
        }
    }
}

/// Everything the backward pass needs from a forward window.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub batch: usize,
    pub steps: usize,
    /// Input ids actually fed, row-major by step then stripe.
    pub inputs: Vec<usize>,
    pub layers: Vec<LayerCache>,
    /// `[N x |V|]`
    pub logits: Array2<f64>,
}

impl StepCache {
    pub fn row(&self, b: usize, t: usize) -> usize {
        t * self.batch + b
    }

    pub fn logits_at(&self, b: usize, t: usize) -> ArrayView1<'_, f64> {
        self.logits.row(self.row(b, t))
    }

    /// Logits of step `t`, `[batch x |V|]`.
    pub fn step_logits(&self, t: usize) -> ArrayView2<'_, f64> {
        self.logits.slice(s![t * self.batch..(t + 1) * self.batch, ..])
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the LSTM one step at a time. Before step `t`, `choose(t, prev, ids)`
/// fills `ids` (one per stripe) with the inputs to feed; `prev` holds the
/// logits of step `t - 1`, or `None` at `t = 0`.
pub fn forward_stepwise<F>(
    params: &ModelParams,
    steps: usize,
    h0: &HiddenState,
    mut choose: F,
) -> Result<(StepCache, HiddenState)>
where
    F: FnMut(usize, Option<ArrayView2<'_, f64>>, &mut [usize]) -> Result<()>,
{
    let cfg = &params.config;
    let batch = h0.batch();
    if h0.h.len() != cfg.layers || h0.h.iter().chain(&h0.c).any(|a| a.dim() != (batch, cfg.hidden)) {
        return Err(Error::Sizing("initial hidden state does not match the model".into()));
    }
    let hid = cfg.hidden;
    let rows = steps * batch;
    let mut layers: Vec<LayerCache> = (0..cfg.layers)
        .map(|l| LayerCache::new(rows, cfg.layer_input(l), hid))
        .collect();
    let mut logits = Array2::zeros((rows, cfg.vocab_size));
    let mut inputs = vec![0; rows];
    let mut state = h0.clone();
    let w_out = params.output_weights();

    for t in 0..steps {
        let r = t * batch..(t + 1) * batch;
        {
            let prev = (t > 0).then(|| logits.slice(s![(t - 1) * batch..t * batch, ..]));
            choose(t, prev, &mut inputs[r.clone()])?;
        }
        for (b, &id) in inputs[r.clone()].iter().enumerate() {
            if id >= cfg.vocab_size {
                return Err(Error::Index {
                    id,
                    vocab_size: cfg.vocab_size,
                });
            }
            layers[0].x.row_mut(t * batch + b).assign(&params.embedding.row(id));
        }

        for l in 0..cfg.layers {
            if l > 0 {
                let (below, above) = layers.split_at_mut(l);
                above[0]
                    .x
                    .slice_mut(s![r.clone(), ..])
                    .assign(&below[l - 1].h.slice(s![r.clone(), ..]));
            }
            let lc = &mut layers[l];
            let p = &params.layers[l];
            lc.h_prev.slice_mut(s![r.clone(), ..]).assign(&state.h[l]);
            lc.c_prev.slice_mut(s![r.clone(), ..]).assign(&state.c[l]);

            let mut z = lc.gates.slice_mut(s![r.clone(), ..]);
            z.assign(&p.bias.broadcast((batch, 4 * hid)).expect("bias broadcast"));
            general_mat_mul(1.0, &lc.x.slice(s![r.clone(), ..]), &p.w_input.t(), 1.0, &mut z);
            general_mat_mul(1.0, &state.h[l], &p.w_recurrent.t(), 1.0, &mut z);

            for b in 0..batch {
                let row = t * batch + b;
                let g = lc.gates.row_mut(row).into_slice().expect("contiguous row");
                let c_prev = state.c[l].row(b);
                let mut c_new = state.c[l].row(b).to_owned();
                for j in 0..hid {
                    let i = sigmoid(g[j]);
                    let f = sigmoid(g[hid + j]);
                    let gg = g[2 * hid + j].tanh();
                    let o = sigmoid(g[3 * hid + j]);
                    g[j] = i;
                    g[hid + j] = f;
                    g[2 * hid + j] = gg;
                    g[3 * hid + j] = o;
                    c_new[j] = f * c_prev[j] + i * gg;
                }
                let (g, tc, h) = (lc.gates.row(row), &mut lc.tanh_c, &mut lc.h);
                for j in 0..hid {
                    let th = c_new[j].tanh();
                    tc[[row, j]] = th;
                    h[[row, j]] = g[3 * hid + j] * th;
                }
                state.c[l].row_mut(b).assign(&c_new);
                state.h[l].row_mut(b).assign(&h.row(row));
            }
        }

        let top = &layers[cfg.layers - 1];
        let mut out = logits.slice_mut(s![r.clone(), ..]);
        out.assign(
            &params
                .output_bias
                .broadcast((batch, cfg.vocab_size))
                .expect("bias broadcast"),
        );
        general_mat_mul(1.0, &top.h.slice(s![r.clone(), ..]), &w_out.t(), 1.0, &mut out);
    }

    Ok((
        StepCache {
            batch,
            steps,
            inputs,
            layers,
            logits,
        },
        state,
    ))
}

/// Teacher-forced forward over `input_ids` (`[batch x steps]`).
pub fn forward(
    params: &ModelParams,
    input_ids: ArrayView2<'_, usize>,
    h0: &HiddenState,
) -> Result<(StepCache, HiddenState)> {
    if input_ids.nrows() != h0.batch() {
        return Err(Error::Sizing(format!(
            "{} input rows for a hidden state of batch {}",
            input_ids.nrows(),
            h0.batch()
        )));
    }
    forward_stepwise(params, input_ids.ncols(), h0, |t, _, ids| {
        for (slot, &id) in ids.iter_mut().zip(input_ids.column(t)) {
            *slot = id;
        }
        Ok(())
    })
}

/// Log-softmax of `row` at `target`, with max-subtraction.
fn log_prob(row: ArrayView1<'_, f64>, target: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
    row[target] - max - sum.ln()
}

fn check_targets(cache: &StepCache, targets: ArrayView2<'_, usize>, vocab_size: usize) -> Result<()> {
    if targets.dim() != (cache.batch, cache.steps) {
        return Err(Error::Sizing(format!(
            "targets of shape {:?} for a window of {}x{}",
            targets.dim(),
            cache.batch,
            cache.steps
        )));
    }
    if let Some(&id) = targets.iter().find(|&&id| id >= vocab_size) {
        return Err(Error::Index { id, vocab_size });
    }
    Ok(())
}

/// Summed negative log-likelihood of `targets` under a forward window.
pub fn nll_sum(params: &ModelParams, cache: &StepCache, targets: ArrayView2<'_, usize>) -> Result<f64> {
    check_targets(cache, targets, params.config.vocab_size)?;
    let mut total = 0.0;
    for t in 0..cache.steps {
        for b in 0..cache.batch {
            total -= log_prob(cache.logits_at(b, t), targets[[b, t]]);
        }
    }
    Ok(total)
}

/// Mean token NLL of `targets` and its exact gradient by backpropagation
/// through the whole window. The incoming hidden state is treated as a
/// constant.
pub fn backward(params: &ModelParams, cache: &StepCache, targets: ArrayView2<'_, usize>) -> Result<(f64, ModelParams)> {
    let cfg = &params.config;
    check_targets(cache, targets, cfg.vocab_size)?;
    let (batch, steps, hid) = (cache.batch, cache.steps, cfg.hidden);
    let n = batch * steps;
    let mut grads = params.zeros_like();
    if n == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / n as f64;

    // Softmax cross-entropy.
    let mut dlogits = cache.logits.clone();
    let mut total_nll = 0.0;
    for t in 0..steps {
        for b in 0..batch {
            let row_idx = t * batch + b;
            let target = targets[[b, t]];
            let row = dlogits.row_mut(row_idx).into_slice().expect("contiguous row");
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            total_nll -= cache.logits[[row_idx, target]] - max - sum.ln();
            let inv = scale / sum;
            row.iter_mut().for_each(|x| *x *= inv);
            row[target] -= scale;
        }
    }
    grads.output_bias = dlogits.sum_axis(Axis(0));

    let top = &cache.layers[cfg.layers - 1];
    {
        let g_out = match grads.output.as_mut() {
            Some(o) => o,
            None => &mut grads.embedding,
        };
        general_mat_mul(1.0, &dlogits.t(), &top.h, 1.0, g_out);
    }
    let mut dh_above = dlogits.dot(params.output_weights());
    drop(dlogits);

    for l in (0..cfg.layers).rev() {
        let lc = &cache.layers[l];
        let p = &params.layers[l];
        let mut dz = Array2::<f64>::zeros((n, 4 * hid));
        let mut dh_next = Array2::<f64>::zeros((batch, hid));
        let mut dc_next = Array2::<f64>::zeros((batch, hid));

        for t in (0..steps).rev() {
            for b in 0..batch {
                let row = t * batch + b;
                let g = lc.gates.row(row);
                let dzr = dz.row_mut(row).into_slice().expect("contiguous row");
                for j in 0..hid {
                    let (i, f, gg, o) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
                    let tc = lc.tanh_c[[row, j]];
                    let dh = dh_above[[row, j]] + dh_next[[b, j]];
                    let d_o = dh * tc;
                    let dc = dc_next[[b, j]] + dh * o * (1.0 - tc * tc);
                    dzr[j] = dc * gg * i * (1.0 - i);
                    dzr[hid + j] = dc * lc.c_prev[[row, j]] * f * (1.0 - f);
                    dzr[2 * hid + j] = dc * i * (1.0 - gg * gg);
                    dzr[3 * hid + j] = d_o * o * (1.0 - o);
                    dc_next[[b, j]] = dc * f;
                }
            }
            let dz_t = dz.slice(s![t * batch..(t + 1) * batch, ..]);
            general_mat_mul(1.0, &dz_t, &p.w_recurrent, 0.0, &mut dh_next);
        }

        let g = &mut grads.layers[l];
        general_mat_mul(1.0, &dz.t(), &lc.x, 1.0, &mut g.w_input);
        general_mat_mul(1.0, &dz.t(), &lc.h_prev, 1.0, &mut g.w_recurrent);
        g.bias += &dz.sum_axis(Axis(0));
        let dx = dz.dot(&p.w_input);

        if l > 0 {
            dh_above = dx;
        } else {
            for (row, &id) in cache.inputs.iter().enumerate() {
                let mut e = grads.embedding.row_mut(id);
                e += &dx.row(row);
            }
        }
    }

    Ok((total_nll * scale, grads))
}

/// Teacher-forced mean NLL, gradients and final hidden state for one window.
pub fn loss_and_grads(
    params: &ModelParams,
    input_ids: ArrayView2<'_, usize>,
    target_ids: ArrayView2<'_, usize>,
    h0: &HiddenState,
) -> Result<(f64, ModelParams, HiddenState)> {
    let (cache, h_t) = forward(params, input_ids, h0)?;
    let (loss, grads) = backward(params, &cache, target_ids)?;
    Ok((loss, grads, h_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::{init_params, init_params_scaled, ModelConfig};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_uniform_predictions() {
        let cfg = ModelConfig::tied(10, 3);
        let params = ModelParams::zeros(cfg).unwrap();
        let inputs = array![[1usize, 2, 3], [4, 5, 6]];
        let targets = array![[2usize, 3, 4], [5, 6, 7]];
        let h0 = HiddenState::zeros(&cfg, 2);
        let (cache, _) = forward(&params, inputs.view(), &h0).unwrap();
        assert!(cache.logits.iter().all(|&x| x == 0.0));
        let (loss, _, _) = loss_and_grads(&params, inputs.view(), targets.view(), &h0).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rows_give_identical_logits() {
        let cfg = ModelConfig::tied(7, 4);
        let params = init_params(cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let inputs = array![[1usize, 4, 2], [1, 4, 2]];
        let (cache, _) = forward(&params, inputs.view(), &HiddenState::zeros(&cfg, 2)).unwrap();
        for t in 0..3 {
            assert_eq!(cache.logits_at(0, t), cache.logits_at(1, t));
        }
    }

    #[test]
    fn out_of_range_input_is_index_error() {
        let cfg = ModelConfig::tied(5, 2);
        let params = ModelParams::zeros(cfg).unwrap();
        let inputs = array![[7usize]];
        let err = forward(&params, inputs.view(), &HiddenState::zeros(&cfg, 1)).unwrap_err();
        assert!(matches!(err, Error::Index { id: 7, vocab_size: 5 }));
    }

    #[test]
    fn tied_logits_are_embedding_products() {
        let cfg = ModelConfig::tied(6, 3);
        let mut params = init_params_scaled(cfg, 0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        params.output_bias = array![0.1, -0.2, 0.3, 0.0, 0.05, -0.4];
        let inputs = array![[0usize, 5, 3]];
        let (cache, _) = forward(&params, inputs.view(), &HiddenState::zeros(&cfg, 1)).unwrap();
        let top = &cache.layers[1];
        for t in 0..3 {
            for j in 0..6 {
                let expected = top.h.row(t).dot(&params.embedding.row(j)) + params.output_bias[j];
                assert!((cache.logits_at(0, t)[j] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hidden_state_carry_matches_full_window() {
        let cfg = ModelConfig::tied(9, 4);
        let params = init_params_scaled(cfg, 0.4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let inputs = array![[1usize, 3, 8, 2, 0, 4], [5, 5, 6, 7, 1, 2]];
        let h0 = HiddenState::zeros(&cfg, 2);
        let (full, h_full) = forward(&params, inputs.view(), &h0).unwrap();
        let (first, h_mid) = forward(&params, inputs.slice(s![.., ..2]), &h0).unwrap();
        let (second, h_end) = forward(&params, inputs.slice(s![.., 2..]), &h_mid).unwrap();
        for b in 0..2 {
            for t in 0..6 {
                let split = if t < 2 {
                    first.logits_at(b, t)
                } else {
                    second.logits_at(b, t - 2)
                };
                for (x, y) in full.logits_at(b, t).iter().zip(split) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
        for (a, b) in h_full.h.iter().zip(&h_end.h) {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-10));
        }
    }

    #[test]
    fn wider_target_gap_lowers_loss() {
        let cfg = ModelConfig::tied(5, 2);
        let mut params = ModelParams::zeros(cfg).unwrap();
        let inputs = array![[0usize, 1]];
        let targets = array![[2usize, 2]];
        let h0 = HiddenState::zeros(&cfg, 1);
        params.output_bias[2] = 0.7;
        let (narrow, _, _) = loss_and_grads(&params, inputs.view(), targets.view(), &h0).unwrap();
        params.output_bias[2] = 1.4;
        let (wide, _, _) = loss_and_grads(&params, inputs.view(), targets.view(), &h0).unwrap();
        assert!(wide < narrow);
    }
}
