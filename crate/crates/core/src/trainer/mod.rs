//! The curriculum training loop.
//!
//! Every epoch the two replacement rates are read off their schedules, the
//! model is trained with per-step input selection ([`select_input`]), and the
//! validation perplexity drives both best-model selection and the neighbor
//! temperature. The learning rate follows a single cosine cycle.
//!
//! All randomness comes from one seeded ChaCha8 stream: parameter
//! initialization first, then for every window, step and stripe (in that
//! order) the draws of [`select_input`]. With sampled feedback, the
//! prediction for a step is drawn just before its `select_input` draws.

mod report;
mod select;

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{self, BatchSet, TokenStream, Vocabulary};
use crate::error::{Error, Result};
use crate::neighbors::{
    self, build_neighbor_table, build_transition_table, default_k, update_temperature, ReplacementTable, Temperature,
};
use crate::schedules::{RatePair, ScheduleKind, ScheduleSpec};
use crate::seqmodel::{
    backward, clip_gradients, forward, forward_stepwise, init_params, load_checkpoint, nll_sum, perplexity,
    save_checkpoint, CheckpointState, GenerationMode, HiddenState, ModelConfig, ModelParams,
};

pub use report::{read_reports, reports_to_csv, write_reports, EpochReport, REPORT_HEADER};
pub use select::{select_input, Choice, ReplacementStats, Selection};

pub const REPORTS_FILE: &str = "reports.csv";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Where replacement neighbors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReplacementSource {
    None,
    /// Cosine neighbors under pretrained embeddings.
    Nnrs,
    /// Most likely bigram successors in the training corpus.
    Tprs,
}

impl ReplacementSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplacementSource::None => "none",
            ReplacementSource::Nnrs => "nnrs",
            ReplacementSource::Tprs => "tprs",
        }
    }
}

impl fmt::Display for ReplacementSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReplacementSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(ReplacementSource::None),
            "nnrs" => Ok(ReplacementSource::Nnrs),
            "tprs" => Ok(ReplacementSource::Tprs),
            _ => Err(format!(
                "unknown replacement source {s:?} (expected none, nnrs or tprs)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub bptt_len: usize,
    pub clip: f64,
    /// Scheduled-sampling rate. Its `total_epochs` is taken from this config.
    pub ss: ScheduleSpec,
    /// Neighbor-replacement rate. Its `total_epochs` is taken from this config.
    pub nnrs: ScheduleSpec,
    pub source: ReplacementSource,
    pub seed: u64,
    pub hidden: usize,
    pub emb_dim: usize,
    pub layers: usize,
    pub tied: bool,
    pub min_count: usize,
    /// Neighbors per word; `round(log2 |V|)` when unset.
    pub k: Option<usize>,
    /// Continue from `last.ckpt` in the output directory when present.
    pub resume: bool,
    /// How the fed-back prediction is read off the previous step's output.
    pub feedback: GenerationMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 20.0,
            lr_min: 0.0,
            total_epochs: 40,
            batch_size: 30,
            eval_batch_size: 10,
            bptt_len: 35,
            clip: 0.5,
            ss: ScheduleSpec::off(40),
            nnrs: ScheduleSpec::off(40),
            source: ReplacementSource::None,
            seed: 1,
            hidden: 200,
            emb_dim: 200,
            layers: 2,
            tied: true,
            min_count: 1,
            k: None,
            resume: false,
            feedback: GenerationMode::Greedy,
        }
    }
}

impl TrainConfig {
    pub fn ss_spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            total_epochs: self.total_epochs,
            ..self.ss
        }
    }

    pub fn nnrs_spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            total_epochs: self.total_epochs,
            ..self.nnrs
        }
    }

    pub fn with_schedules(mut self, ss: (ScheduleKind, f64, f64), nnrs: (ScheduleKind, f64, f64)) -> Self {
        self.ss = ScheduleSpec {
            kind: ss.0,
            start: ss.1,
            end: ss.2,
            total_epochs: self.total_epochs,
        };
        self.nnrs = ScheduleSpec {
            kind: nnrs.0,
            start: nnrs.1,
            end: nnrs.2,
            total_epochs: self.total_epochs,
        };
        self
    }

    /// Rates in effect during 1-based epoch `epoch`; the last epoch runs at
    /// the end rates.
    pub fn rates(&self, epoch: usize) -> RatePair {
        RatePair::at(&self.ss_spec(), &self.nnrs_spec(), epoch)
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            emb_dim: self.emb_dim,
            hidden: self.hidden,
            layers: self.layers,
            tied: self.tied,
        }
    }

    /// Checks every field. Errors name the offending configuration key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(Error::config(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("epochs", self.total_epochs)?;
        positive("batch_size", self.batch_size)?;
        positive("eval_batch_size", self.eval_batch_size)?;
        positive("bptt_len", self.bptt_len)?;
        positive("hidden", self.hidden)?;
        positive("emb_dim", self.emb_dim)?;
        positive("layers", self.layers)?;
        positive("min_count", self.min_count)?;
        if let Some(k) = self.k {
            positive("k", k)?;
        }
        if !(self.lr_min >= 0.0 && self.lr_min.is_finite()) {
            return Err(Error::config("lr_min", "must be finite and >= 0"));
        }
        if !(self.lr0 > self.lr_min && self.lr0.is_finite()) {
            return Err(Error::config("lr0", "must be finite and greater than lr_min"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::config("clip", "must be > 0"));
        }
        if self.tied && self.emb_dim != self.hidden {
            return Err(Error::config("emb_dim", "must equal hidden when weights are tied"));
        }
        for (prefix, spec) in [("ss", &self.ss), ("nnrs", &self.nnrs)] {
            for (field, v) in [("start", spec.start), ("end", spec.end)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(&format!("{prefix}.{field}"), "must be in [0, 1]"));
                }
            }
            if spec.start > spec.end {
                return Err(Error::config(
                    &format!("{prefix}.start"),
                    format!("{} exceeds {prefix}.end = {}", spec.start, spec.end),
                ));
            }
        }
        if self.source == ReplacementSource::None && (self.nnrs.end > 0.0 || self.nnrs.start > 0.0) {
            return Err(Error::config(
                "nnrs.end",
                "neighbor replacement needs source = nnrs or tprs",
            ));
        }
        Ok(())
    }
}

/// Input corpora and, for `nnrs`, the embedding file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub embeddings: Option<PathBuf>,
}

/// `lr_min + (lr0 - lr_min) (1 + cos(pi epoch / total)) / 2`.
pub fn cosine_lr(lr0: f64, lr_min: f64, epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 || epoch >= total_epochs {
        return lr_min;
    }
    let progress = epoch as f64 / total_epochs as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * progress).cos())
}

/// Mutable training progress.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub tau: Temperature,
    pub lr: f64,
    pub valid_ppl_history: Vec<f64>,
    pub best_valid: f64,
    pub rng: ChaCha8Rng,
    pub seed: u64,
    /// Selection counts of the most recent epoch.
    pub stats: ReplacementStats,
}

impl TrainState {
    pub fn new(seed: u64, lr: f64) -> Self {
        TrainState {
            epoch: 0,
            tau: Temperature::default(),
            lr,
            valid_ppl_history: Vec::new(),
            best_valid: f64::INFINITY,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            stats: ReplacementStats::default(),
        }
    }

    pub fn checkpoint_state(&self) -> CheckpointState {
        CheckpointState {
            epoch: self.epoch,
            tau: self.tau.get(),
            lr: self.lr,
            seed: self.seed,
            rng_word_pos: self.rng.get_word_pos(),
            best_valid: self.best_valid,
            valid_history: self.valid_ppl_history.clone(),
        }
    }

    pub fn from_checkpoint(s: &CheckpointState) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_word_pos(s.rng_word_pos);
        Ok(TrainState {
            epoch: s.epoch,
            tau: Temperature::new(s.tau)?,
            lr: s.lr,
            valid_ppl_history: s.valid_history.clone(),
            best_valid: s.best_valid,
            rng,
            seed: s.seed,
            stats: ReplacementStats::default(),
        })
    }
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Inverse-CDF draw from `softmax(row)` with `u` uniform in `[0, 1)`.
fn sample_logits(row: ArrayView1<'_, f64>, u: f64) -> usize {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = row.iter().map(|x| (x - max).exp()).sum();
    let mut acc = 0.0;
    for (i, &x) in row.iter().enumerate() {
        acc += (x - max).exp() / total;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// Result of one pass over the training batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOutcome {
    pub train_ppl: f64,
    pub stats: ReplacementStats,
}

/// One epoch of truncated-BPTT SGD with per-step input selection.
///
/// The loss is always taken against the gold targets. The hidden state and
/// the last predictions carry across windows of a stripe. The very first
/// step of the epoch has no previous prediction and is fed the gold token
/// without drawing.
pub fn train_epoch(
    params: &mut ModelParams,
    batches: &BatchSet,
    state: &mut TrainState,
    cfg: &TrainConfig,
    rates: RatePair,
    table: Option<&dyn ReplacementTable>,
) -> Result<EpochOutcome> {
    let batch = batches.batch_size();
    let mut hidden = HiddenState::zeros(&params.config, batch);
    // Last-step logits of the previous window, per stripe.
    let mut carried: Option<Array2<f64>> = None;
    let mut stats = ReplacementStats::default();
    let mut total_nll = 0.0;
    let mut tokens = 0usize;
    let tau = state.tau;
    let want_pred = rates.epsilon > 0.0;

    for (w_idx, w) in batches.windows().enumerate() {
        let inputs = batches.window_inputs(w);
        let targets = batches.window_targets(w);
        let rng = &mut state.rng;
        let carried_logits = carried.take();
        let (cache, h_next) = forward_stepwise(params, w.len, &hidden, |t, prev, ids| {
            for (b, slot) in ids.iter_mut().enumerate() {
                let gold = inputs[[b, t]];
                let logits = match (&prev, &carried_logits) {
                    (Some(p), _) => Some(p.row(b)),
                    (None, Some(c)) => Some(c.row(b)),
                    (None, None) => None,
                };
                let yhat = logits.map(|row| match cfg.feedback {
                    _ if !want_pred => gold,
                    GenerationMode::Greedy => argmax(row),
                    GenerationMode::Sample => sample_logits(row, rng.random()),
                });
                *slot = match yhat {
                    Some(yhat) => {
                        let s = select_input(gold, yhat, rates, table, tau, rng);
                        stats.record(&s);
                        s.id
                    }
                    None => gold,
                };
            }
            Ok(())
        })?;
        let (loss, mut grads) = backward(params, &cache, targets)?;
        let norm = clip_gradients(&mut grads, cfg.clip);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::NonFinite {
                epoch: state.epoch + 1,
                batch: w_idx,
                lr: state.lr,
            });
        }
        params.sgd_step(&grads, state.lr);

        carried = Some(cache.step_logits(w.len - 1).to_owned());
        hidden = h_next;
        total_nll += loss * (w.len * batch) as f64;
        tokens += w.len * batch;
    }

    state.stats = stats;
    Ok(EpochOutcome {
        train_ppl: perplexity(total_nll / tokens.max(1) as f64),
        stats,
    })
}

/// Teacher-forced perplexity over all batches. Consumes no randomness.
pub fn evaluate(params: &ModelParams, batches: &BatchSet) -> Result<f64> {
    let mut hidden = HiddenState::zeros(&params.config, batches.batch_size());
    let mut total = 0.0;
    for w in batches.windows() {
        let (cache, h_next) = forward(params, batches.window_inputs(w), &hidden)?;
        total += nll_sum(params, &cache, batches.window_targets(w))?;
        hidden = h_next;
    }
    Ok(perplexity(total / batches.num_tokens().max(1) as f64))
}

/// Loaded corpora, vocabulary and replacement table, ready for training.
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub train_stream: TokenStream,
    pub train: BatchSet,
    pub valid: BatchSet,
    pub test: BatchSet,
    pub table: Option<Box<dyn ReplacementTable + Send + Sync>>,
    /// Neighbors per word, when a table was built.
    pub k: Option<usize>,
    /// `(covered, |V|)` for embedding-based tables.
    pub coverage: Option<(usize, usize)>,
}

/// Reads and checks every input. Writes nothing.
pub fn prepare_data(cfg: &TrainConfig, paths: &DataPaths) -> Result<PreparedData> {
    cfg.validate()?;
    let train_tokens = corpus::read_tokens(&paths.train)?;
    let vocab = corpus::build_vocab(&train_tokens, cfg.min_count);
    let train_stream = corpus::encode(&train_tokens, &vocab);
    let (valid_stream, _) = corpus::load_corpus(&paths.valid, Some(&vocab))?;
    let (test_stream, _) = corpus::load_corpus(&paths.test, Some(&vocab))?;
    let train = corpus::batchify(&train_stream, cfg.batch_size, cfg.bptt_len)?;
    let valid = corpus::batchify(&valid_stream, cfg.eval_batch_size, cfg.bptt_len)?;
    let test = corpus::batchify(&test_stream, cfg.eval_batch_size, cfg.bptt_len)?;

    let k = cfg.k.unwrap_or_else(|| default_k(vocab.len()));
    let (table, k, coverage): (Option<Box<dyn ReplacementTable + Send + Sync>>, _, _) = match cfg.source {
        ReplacementSource::None => (None, None, None),
        ReplacementSource::Nnrs => {
            let path = paths
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::config("embeddings", "required when source = nnrs"))?;
            let emb = neighbors::load_embeddings(path, &vocab)?;
            if k >= vocab.len() {
                return Err(Error::config("k", format!("{k} must be below |V| = {}", vocab.len())));
            }
            let table = build_neighbor_table(&emb, k)?;
            (Some(Box::new(table)), Some(k), Some((emb.covered, vocab.len())))
        }
        ReplacementSource::Tprs => {
            let table = build_transition_table(&train_stream, vocab.len(), k)?;
            (Some(Box::new(table)), Some(k), None)
        }
    };

    Ok(PreparedData {
        vocab,
        train_stream,
        train,
        valid,
        test,
        table,
        k,
        coverage,
    })
}

/// Final model and learning curve of a run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation perplexity.
    pub best_params: ModelParams,
    pub final_params: ModelParams,
    pub reports: Vec<EpochReport>,
    pub best_valid: f64,
    /// Test perplexity of `best_params`.
    pub test_ppl: f64,
    pub state: TrainState,
}

/// Trains on prepared data. With an output directory, writes `vocab.txt`,
/// `reports.csv` (after every epoch), `best.ckpt` and `last.ckpt`.
pub fn train_prepared(
    cfg: &TrainConfig,
    data: &PreparedData,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let table: Option<&dyn ReplacementTable> = data.table.as_deref().map(|t| t as &dyn ReplacementTable);

    let last_path = out_dir.map(|d| d.join(LAST_CHECKPOINT));
    let resume_from = last_path.as_ref().filter(|p| cfg.resume && p.exists());

    let (mut params, mut best_params, mut state, mut reports) = match (resume_from, out_dir) {
        (Some(last), Some(dir)) => {
            let (params, saved) = load_checkpoint(last)?;
            if params.config != cfg.model_config(data.vocab.len()) {
                return Err(Error::Format(format!(
                    "{} does not match the configured model",
                    last.display()
                )));
            }
            let (best, _) = load_checkpoint(&dir.join(BEST_CHECKPOINT))?;
            let reports = read_reports(&dir.join(REPORTS_FILE))?;
            let state = TrainState::from_checkpoint(&saved)?;
            if reports.len() != state.epoch {
                return Err(Error::Format("reports.csv and last.ckpt disagree on progress".into()));
            }
            (params, best, state, reports)
        }
        _ => {
            let mut state = TrainState::new(cfg.seed, cfg.lr0);
            let params = init_params(cfg.model_config(data.vocab.len()), &mut state.rng)?;
            (params.clone(), params, state, Vec::new())
        }
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        data.vocab.save(&dir.join(VOCAB_FILE))?;
    }

    while state.epoch < cfg.total_epochs {
        let n = state.epoch + 1;
        let rates = cfg.rates(n);
        state.lr = cosine_lr(cfg.lr0, cfg.lr_min, state.epoch, cfg.total_epochs);
        let tau_used = state.tau;
        let outcome = train_epoch(&mut params, &data.train, &mut state, cfg, rates, table)?;
        let valid_ppl = evaluate(&params, &data.valid)?;

        if let Some(&prev) = state.valid_ppl_history.last() {
            state.tau = update_temperature(state.tau, valid_ppl, prev);
        }
        state.valid_ppl_history.push(valid_ppl);
        state.epoch = n;

        let [frac_teacher, frac_pred, frac_neigh, frac_mixed] = outcome.stats.fractions();
        let report = EpochReport {
            epoch: n,
            train_ppl: outcome.train_ppl,
            valid_ppl,
            lr: state.lr,
            epsilon: rates.epsilon,
            gamma: rates.gamma,
            tau: tau_used.get(),
            frac_teacher,
            frac_pred,
            frac_neigh,
            frac_mixed,
        };
        on_epoch(&report);
        reports.push(report);

        let improved = valid_ppl < state.best_valid;
        if improved {
            state.best_valid = valid_ppl;
            best_params = params.clone();
        }
        if let Some(dir) = out_dir {
            let saved = state.checkpoint_state();
            if improved {
                save_checkpoint(&dir.join(BEST_CHECKPOINT), &best_params, &saved)?;
            }
            save_checkpoint(&dir.join(LAST_CHECKPOINT), &params, &saved)?;
            write_reports(&dir.join(REPORTS_FILE), &reports)?;
        }
    }
    state.lr = cosine_lr(cfg.lr0, cfg.lr_min, cfg.total_epochs, cfg.total_epochs);

    let test_ppl = evaluate(&best_params, &data.test)?;
    Ok(TrainOutcome {
        best_valid: state.best_valid,
        best_params,
        final_params: params,
        reports,
        test_ppl,
        state,
    })
}

/// Loads the data, trains, and reports test perplexity of the best
/// checkpoint.
pub fn run_training(cfg: &TrainConfig, paths: &DataPaths, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let data = prepare_data(cfg, paths)?;
    train_prepared(cfg, &data, out_dir, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::batchify;

    #[test]
    fn sampled_feedback_follows_the_softmax() {
        let logits = ndarray::arr1(&[0.0, 1.0, 2.0, -1.0]);
        let z: f64 = logits.iter().map(|x: &f64| x.exp()).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_logits(logits.view(), rng.random())] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            let p = logits[i].exp() / z;
            assert!((*c as f64 / n as f64 - p).abs() < 0.01, "{i}: {c}");
        }
        assert_eq!(sample_logits(logits.view(), 0.0), 0);
        assert_eq!(sample_logits(logits.view(), 1.0 - 1e-17), 3);
    }

    #[test]
    fn cosine_lr_points() {
        assert_eq!(cosine_lr(20.0, 1.0, 0, 40), 20.0);
        assert_eq!(cosine_lr(20.0, 1.0, 40, 40), 1.0);
        assert!((cosine_lr(20.0, 1.0, 20, 40) - 10.5).abs() < 1e-12);
        let lrs: Vec<f64> = (0..=40).map(|e| cosine_lr(20.0, 0.0, e, 40)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn config_validation_names_keys() {
        let mut cfg = TrainConfig::default();
        cfg.validate().unwrap();
        cfg.ss.start = 0.6;
        cfg.ss.end = 0.5;
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "ss.start"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = TrainConfig {
            lr0: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { key, .. }) if key == "lr0"));
        let mut cfg = TrainConfig::default();
        cfg.nnrs.end = 0.2;
        assert!(matches!(cfg.validate(), Err(Error::Config { key, .. }) if key == "nnrs.end"));
    }

    #[test]
    fn evaluate_is_deterministic_and_near_uniform() {
        let cfg = ModelConfig::tied(50, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = init_params(cfg, &mut rng).unwrap();
        let ids: Vec<usize> = (0..400).map(|i| (i * 7 + i / 3) % 50).collect();
        let batches = batchify(&TokenStream { ids }, 4, 10).unwrap();
        let a = evaluate(&params, &batches).unwrap();
        let b = evaluate(&params, &batches).unwrap();
        assert_eq!(a, b);
        assert!((25.0..=100.0).contains(&a), "{a}");
    }
}
