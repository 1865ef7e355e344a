//! Replacement candidates for nearest-neighbor replacement sampling.
//!
//! Two candidate sources are supported: the `k` most cosine-similar words
//! under a pretrained embedding ([`NeighborTable`]), and the `k` most likely
//! successors in the corpus bigram matrix ([`TransitionTable`]). Either way a
//! replacement is drawn from a softmax over the row's scores at temperature
//! `tau`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{TokenStream, Vocabulary};
use crate::error::{Error, Result};

/// Seed for rows of words that the embedding file does not cover.
const MISSING_ROW_SEED: u64 = 0x6e6e_7273;

const TABLE_MAGIC: &str = "NNRS1";

/// Initial neighbor temperature.
pub const INITIAL_TAU: f64 = 0.1;

/// Word vectors aligned to vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub vectors: Array2<f64>,
    /// Number of vocabulary words found in the embedding file.
    pub covered: usize,
}

impl EmbeddingMatrix {
    pub fn new(vectors: Array2<f64>) -> Self {
        let covered = vectors.nrows();
        EmbeddingMatrix { vectors, covered }
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn coverage(&self) -> f64 {
        if self.vocab_size() == 0 {
            return 0.0;
        }
        self.covered as f64 / self.vocab_size() as f64
    }
}

/// Temperature of the neighbor distribution, always in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau <= 1.0 {
            Ok(Temperature(tau))
        } else {
            Err(Error::Range(format!("temperature {tau} not in (0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature(INITIAL_TAU)
    }
}

/// Adapts the temperature after an epoch. Lower perplexity counts as an
/// improvement: `tau` then grows to `2 tau - (2^tau - 1)`; otherwise it
/// shrinks to `2^tau - 1`. Both maps fix `tau = 1`.
pub fn update_temperature(tau: Temperature, p_curr: f64, p_prev: f64) -> Temperature {
    let t = tau.get();
    let decayed = t.exp2() - 1.0;
    let next = if p_curr < p_prev && t < 1.0 {
        // Near 1 the increment rounds away; the exact update is still
        // strictly larger, so round toward the fixed point instead.
        let grown = t + (t - decayed).abs();
        if grown > t {
            grown
        } else {
            t.next_up()
        }
    } else {
        decayed
    };
    Temperature(next.clamp(f64::MIN_POSITIVE, 1.0))
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

fn cosine_from_parts(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    (dot / (norm_u * norm_v)).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Sizing(format!(
            "vector dimensions differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 {
        return Err(Error::UndefinedSimilarity { row: 0 });
    }
    if nv == 0.0 {
        return Err(Error::UndefinedSimilarity { row: 1 });
    }
    Ok(cosine_from_parts(dot(u, v), nu, nv))
}

/// `round(log2 |V|)`, at least 1.
pub fn default_k(vocab_size: usize) -> usize {
    ((vocab_size.max(2) as f64).log2().round() as usize).max(1)
}

/// Softmax of `scores / tau`, computed with max-subtraction.
pub fn truncated_softmax(scores: &[f64], tau: Temperature) -> Vec<f64> {
    let t = tau.get();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|s| ((s - max) / t).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Per-word replacement candidates with their scores, best first.
pub trait ReplacementTable {
    fn vocab_size(&self) -> usize;

    /// Candidate ids and scores for `word`. May be empty.
    fn candidates(&self, word: usize) -> (&[usize], &[f64]);
}

/// The `k` most cosine-similar other words for every vocabulary word.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    k: usize,
    neighbor_ids: Vec<usize>,
    similarities: Vec<f64>,
}

impl NeighborTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbor_ids(&self, word: usize) -> &[usize] {
        &self.neighbor_ids[word * self.k..(word + 1) * self.k]
    }

    pub fn similarities(&self, word: usize) -> &[f64] {
        &self.similarities[word * self.k..(word + 1) * self.k]
    }

    /// Writes the versioned text cache: a `NNRS1` line, then one
    /// `<word_id> <k> (<neighbor_id> <similarity>)*k` line per word.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(TABLE_MAGIC);
        out.push('\n');
        for word in 0..self.vocab_size() {
            write!(out, "{word} {}", self.k).expect("write to String");
            for (id, sim) in self.neighbor_ids(word).iter().zip(self.similarities(word)) {
                write!(out, " {id} {sim:?}").expect("write to String");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(TABLE_MAGIC) => {}
            other => {
                return Err(parse_err(1, format!("expected magic {TABLE_MAGIC:?}, got {other:?}")));
            }
        }
        let mut k = None;
        let mut neighbor_ids = Vec::new();
        let mut similarities = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| parse_err(lineno, format!("bad integer {s:?}: {e}")))
            };
            if fields.len() < 2 {
                return Err(parse_err(lineno, "expected `<word_id> <k> ...`".into()));
            }
            if int(fields[0])? != i {
                return Err(parse_err(lineno, format!("expected word id {i}")));
            }
            let row_k = int(fields[1])?;
            if *k.get_or_insert(row_k) != row_k || fields.len() != 2 + 2 * row_k {
                return Err(parse_err(lineno, "inconsistent neighbor count".into()));
            }
            for pair in fields[2..].chunks(2) {
                neighbor_ids.push(int(pair[0])?);
                let sim: f64 = pair[1]
                    .parse()
                    .map_err(|e| parse_err(lineno, format!("bad similarity {:?}: {e}", pair[1])))?;
                similarities.push(sim);
            }
        }
        let k = k.ok_or_else(|| Error::Format("empty neighbor table".into()))?;
        let rows = neighbor_ids.len() / k.max(1);
        if neighbor_ids.iter().any(|&id| id >= rows) {
            return Err(Error::Format("neighbor id outside the vocabulary".into()));
        }
        Ok(NeighborTable {
            k,
            neighbor_ids,
            similarities,
        })
    }
}

impl ReplacementTable for NeighborTable {
    fn vocab_size(&self) -> usize {
        self.neighbor_ids.len().checked_div(self.k).unwrap_or(0)
    }

    fn candidates(&self, word: usize) -> (&[usize], &[f64]) {
        (self.neighbor_ids(word), self.similarities(word))
    }
}

/// Keeps the best `k` of a stream of `(score, id)` pairs visited in
/// ascending id order. Equal scores keep the earlier (lower) id ahead.
fn push_top_k(top: &mut Vec<(f64, usize)>, k: usize, score: f64, id: usize) {
    if top.len() == k && score <= top[k - 1].0 {
        return;
    }
    let pos = top.partition_point(|&(s, _)| s >= score);
    if top.len() == k {
        top.pop();
    }
    top.insert(pos, (score, id));
}

/// For every word, the `k` most cosine-similar other words, descending by
/// similarity with ties going to the lower id.
pub fn build_neighbor_table(emb: &EmbeddingMatrix, k: usize) -> Result<NeighborTable> {
    let n = emb.vocab_size();
    if k == 0 || k >= n {
        return Err(Error::Sizing(format!("k = {k} must satisfy 1 <= k < |V| = {n}")));
    }
    let vectors = emb.vectors.as_standard_layout();
    let vectors = vectors.as_slice().expect("standard layout");
    let d = emb.dim();
    let row = |i: usize| &vectors[i * d..(i + 1) * d];
    let norms: Vec<f64> = (0..n).map(|i| norm(row(i))).collect();
    if let Some(zero) = norms.iter().position(|&x| x == 0.0) {
        return Err(Error::UndefinedSimilarity { row: zero });
    }

    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut top = Vec::with_capacity(k + 1);
            let u = row(i);
            for j in (0..n).filter(|&j| j != i) {
                let sim = cosine_from_parts(dot(u, row(j)), norms[i], norms[j]);
                push_top_k(&mut top, k, sim, j);
            }
            top
        })
        .collect();

    let mut neighbor_ids = Vec::with_capacity(n * k);
    let mut similarities = Vec::with_capacity(n * k);
    for top in rows {
        for (sim, id) in top {
            neighbor_ids.push(id);
            similarities.push(sim);
        }
    }
    Ok(NeighborTable {
        k,
        neighbor_ids,
        similarities,
    })
}

/// Top-`k` successors of every word under the corpus bigram distribution.
/// Words without an outgoing bigram have an empty row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    k: usize,
    offsets: Vec<usize>,
    top_ids: Vec<usize>,
    probs: Vec<f64>,
}

impl TransitionTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn top_ids(&self, word: usize) -> &[usize] {
        &self.top_ids[self.offsets[word]..self.offsets[word + 1]]
    }

    pub fn probs(&self, word: usize) -> &[f64] {
        &self.probs[self.offsets[word]..self.offsets[word + 1]]
    }

    pub fn is_empty_row(&self, word: usize) -> bool {
        self.offsets[word] == self.offsets[word + 1]
    }
}

impl ReplacementTable for TransitionTable {
    fn vocab_size(&self) -> usize {
        self.offsets.len() - 1
    }

    fn candidates(&self, word: usize) -> (&[usize], &[f64]) {
        (self.top_ids(word), self.probs(word))
    }
}

/// Full row-normalized bigram distributions, each row sorted by descending
/// probability with ties going to the lower id.
pub fn transition_rows(stream: &TokenStream, vocab_size: usize) -> Vec<Vec<(usize, f64)>> {
    let mut counts: Vec<HashMap<usize, usize>> = vec![HashMap::new(); vocab_size];
    for pair in stream.ids.windows(2) {
        *counts[pair[0]].entry(pair[1]).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|row| {
            let total: usize = row.values().sum();
            let mut entries: Vec<(usize, usize)> = row.into_iter().collect();
            entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            entries
                .into_iter()
                .map(|(id, c)| (id, c as f64 / total as f64))
                .collect()
        })
        .collect()
}

pub fn build_transition_table(stream: &TokenStream, vocab_size: usize, k: usize) -> Result<TransitionTable> {
    if stream.len() < 2 {
        return Err(Error::Sizing(format!(
            "transition table needs at least 2 tokens, got {}",
            stream.len()
        )));
    }
    if let Some(&id) = stream.ids.iter().find(|&&id| id >= vocab_size) {
        return Err(Error::Index { id, vocab_size });
    }
    let mut offsets = vec![0];
    let mut top_ids = Vec::new();
    let mut probs = Vec::new();
    for row in transition_rows(stream, vocab_size) {
        for (id, p) in row.into_iter().take(k) {
            top_ids.push(id);
            probs.push(p);
        }
        offsets.push(top_ids.len());
    }
    Ok(TransitionTable {
        k,
        offsets,
        top_ids,
        probs,
    })
}

/// A drawn replacement token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replacement {
    pub id: usize,
    /// The word had no candidates and was kept as is.
    pub fallback: bool,
}

/// Draws a replacement for `word` from the temperature softmax over its
/// candidate scores. Consumes exactly one uniform draw from `rng` when the
/// row is nonempty, none otherwise.
pub fn sample_neighbor<T, R>(word: usize, table: &T, tau: Temperature, rng: &mut R) -> Replacement
where
    T: ReplacementTable + ?Sized,
    R: Rng + ?Sized,
{
    let (ids, scores) = table.candidates(word);
    if ids.is_empty() {
        return Replacement {
            id: word,
            fallback: true,
        };
    }
    let probs = truncated_softmax(scores, tau);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&id, p) in ids.iter().zip(&probs) {
        acc += p;
        if u < acc {
            return Replacement { id, fallback: false };
        }
    }
    // Rounding left `acc` just below 1: take the last candidate with mass.
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Replacement {
        id: ids[last],
        fallback: false,
    }
}

/// Reads word vectors in the common text format (optional `<count> <dim>`
/// header, then `<token> <v1> ... <vd>` lines) and aligns them to `vocab`.
/// Vocabulary words missing from the file get small random vectors drawn
/// uniformly from `[-0.5/d, 0.5/d]` under a fixed seed.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut dim: Option<usize> = None;
    let mut rows: HashMap<usize, Vec<f64>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            dim = Some(fields[1].parse().expect("checked above"));
            continue;
        }
        if fields.len() < 2 {
            return Err(parse_err(lineno, "expected a token followed by its vector".into()));
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(lineno, format!("bad vector component {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Format(format!(
                    "{}:{lineno}: expected {d} components, found {}",
                    path.display(),
                    values.len()
                )));
            }
            Some(_) => {}
        }
        if let Some(id) = vocab.id(fields[0]) {
            rows.entry(id).or_insert(values);
        }
    }

    let d = dim.ok_or_else(|| Error::Format(format!("{}: no vectors", path.display())))?;
    if d == 0 {
        return Err(Error::Format(format!("{}: zero-dimensional vectors", path.display())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(MISSING_ROW_SEED);
    let bound = 0.5 / d as f64;
    let mut vectors = Array2::zeros((vocab.len(), d));
    let covered = rows.len();
    for (id, mut row) in vectors.outer_iter_mut().enumerate() {
        match rows.get(&id) {
            Some(values) => row.assign(&ndarray::ArrayView1::from(values.as_slice())),
            None => row.iter_mut().for_each(|x| *x = rng.random_range(-bound..=bound)),
        }
    }
    Ok(EmbeddingMatrix { vectors, covered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_examples() {
        assert!((cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - 0.7071).abs() < 1e-4);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::UndefinedSimilarity { .. })
        ));
    }

    #[test]
    fn three_word_table() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let t = build_neighbor_table(&emb, 1).unwrap();
        assert_eq!(t.neighbor_ids(0), &[2]);
        assert_eq!(t.neighbor_ids(1), &[2]);
        assert_eq!(t.neighbor_ids(2), &[0]);
        assert!((t.similarities(2)[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_are_mutual_neighbors() {
        let emb = EmbeddingMatrix::new(array![[0.5, 2.0], [-1.0, 0.3], [0.5, 2.0]]);
        let t = build_neighbor_table(&emb, 2).unwrap();
        assert_eq!(t.neighbor_ids(0)[0], 2);
        assert_eq!(t.neighbor_ids(2)[0], 0);
        assert_eq!(t.similarities(0)[0], 1.0);
        for w in 0..3 {
            assert!(!t.neighbor_ids(w).contains(&w));
        }
    }

    #[test]
    fn table_rejects_large_k() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(build_neighbor_table(&emb, 2), Err(Error::Sizing(_))));
    }

    #[test]
    fn softmax_examples() {
        let tau = Temperature::new(0.1).unwrap();
        let p = truncated_softmax(&[0.3; 4], tau);
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));

        let p = truncated_softmax(&[0.9, 0.5], tau);
        let logistic4 = 1.0 / (1.0 + (-4.0f64).exp());
        assert!((p[0] - 0.98201).abs() < 1e-5 && (p[1] - 0.01799).abs() < 1e-5);
        assert!((p[0] - logistic4).abs() < 1e-12);

        let hot = truncated_softmax(&[0.9, 0.5], Temperature::new(1.0).unwrap());
        assert!(entropy(&hot) > entropy(&p));
    }

    #[test]
    fn temperature_updates() {
        let one = Temperature::new(1.0).unwrap();
        assert_eq!(update_temperature(one, 5.0, 10.0).get(), 1.0);
        assert_eq!(update_temperature(one, 10.0, 5.0).get(), 1.0);

        let t = update_temperature(Temperature::new(0.1).unwrap(), 90.0, 100.0);
        assert!((t.get() - 0.12823).abs() < 1e-5);
        let t = update_temperature(Temperature::new(0.5).unwrap(), 110.0, 100.0);
        assert!((t.get() - 0.41421).abs() < 1e-5);

        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(1.5).is_err());
    }

    #[test]
    fn transition_examples() {
        // a=0 b=1 c=2
        let stream = TokenStream {
            ids: vec![0, 1, 0, 1, 0, 2],
        };
        let t = build_transition_table(&stream, 3, 2).unwrap();
        assert_eq!(t.top_ids(0), &[1, 2]);
        assert!((t.probs(0)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.probs(0)[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(t.is_empty_row(2));

        let t = build_transition_table(&TokenStream { ids: vec![0, 0, 0] }, 1, 3).unwrap();
        assert_eq!(t.top_ids(0), &[0]);
        assert_eq!(t.probs(0), &[1.0]);

        assert!(build_transition_table(&TokenStream { ids: vec![0] }, 1, 1).is_err());
    }

    #[test]
    fn sampling_degenerate_and_fallback() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let t = build_neighbor_table(&emb, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tau = Temperature::new(0.7).unwrap();
        for _ in 0..100 {
            assert_eq!(
                sample_neighbor(0, &t, tau, &mut rng),
                Replacement { id: 2, fallback: false }
            );
        }

        let tt = build_transition_table(&TokenStream { ids: vec![0, 1] }, 2, 2).unwrap();
        let r = sample_neighbor(1, &tt, tau, &mut rng);
        assert_eq!(r, Replacement { id: 1, fallback: true });
    }

    #[test]
    fn near_greedy_temperature() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.0], [0.9, 0.1], [0.5, 0.5], [0.0, 1.0]]);
        let t = build_neighbor_table(&emb, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tau = Temperature::new(0.01).unwrap();
        let top = t.neighbor_ids(0)[0];
        let hits = (0..10_000)
            .filter(|_| sample_neighbor(0, &t, tau, &mut rng).id == top)
            .count();
        assert!(hits as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn embeddings_with_header_and_missing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = Vocabulary::from_ordered_tokens(["b", "a"]).unwrap();
        let plain = dir.path().join("plain.txt");
        fs::write(&plain, "a 1.0 0.0\nb 0.0 1.0\n").unwrap();
        let with_header = dir.path().join("header.txt");
        fs::write(&with_header, "2 2\na 1.0 0.0\nb 0.0 1.0\n").unwrap();

        let e = load_embeddings(&plain, &vocab).unwrap();
        assert_eq!(e, load_embeddings(&with_header, &vocab).unwrap());
        assert_eq!(e.vectors.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(e.vectors.row(1).to_vec(), vec![1.0, 0.0]);
        // <eos> and <unk> are not in the file.
        assert_eq!(e.covered, 2);
        assert_eq!(e.vocab_size(), 4);
        for x in e.vectors.row(2).iter().chain(e.vectors.row(3)) {
            assert!(x.abs() <= 0.25);
        }
    }

    #[test]
    fn embedding_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = Vocabulary::from_ordered_tokens(["a"]).unwrap();
        let bad = dir.path().join("bad.txt");
        fs::write(&bad, "a 1.0 0.0\nb 0.0 zz\n").unwrap();
        match load_embeddings(&bad, &vocab) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&bad, "a 1.0 0.0\nb 0.0\n").unwrap();
        assert!(matches!(load_embeddings(&bad, &vocab), Err(Error::Format(_))));
    }

    #[test]
    fn table_cache_round_trip() {
        let emb = EmbeddingMatrix::new(array![[1.0, 0.2], [0.1, 1.0], [1.0, 1.0], [-0.3, 0.7]]);
        let t = build_neighbor_table(&emb, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.nnrs");
        t.save(&path).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("NNRS1\n0 2 "));
        assert_eq!(NeighborTable::load(&path).unwrap(), t);
    }
}
