//! Whitespace-tokenized corpora, vocabularies and BPTT batching.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Bidirectional token/id mapping. Ids are dense and ordered by descending
/// frequency, ties broken by first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    eos_id: usize,
    unk_id: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens already in id order. `<eos>` and
    /// `<unk>` are appended when absent.
    pub fn from_ordered_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut token_to_id = HashMap::new();
        let mut id_to_token = Vec::new();
        for token in tokens {
            let token = token.into();
            if token_to_id.contains_key(&token) {
                return Err(Error::Format(format!("duplicate vocabulary token {token:?}")));
            }
            token_to_id.insert(token.clone(), id_to_token.len());
            id_to_token.push(token);
        }
        for special in [EOS, UNK] {
            if !token_to_id.contains_key(special) {
                token_to_id.insert(special.to_string(), id_to_token.len());
                id_to_token.push(special.to_string());
            }
        }
        let eos_id = token_to_id[EOS];
        let unk_id = token_to_id[UNK];
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            eos_id,
            unk_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    /// Never true: `<eos>` and `<unk>` are always present.
    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn eos_id(&self) -> usize {
        self.eos_id
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    /// Id of `token`, or the unknown-token id.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(self.unk_id)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Maps ids back to tokens, joined by single spaces.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for token in &self.id_to_token {
            writeln!(out, "{token}").expect("write to Vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let token = line.trim();
            if token.is_empty() || token.split_ascii_whitespace().count() != 1 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected exactly one token, got {line:?}"),
                });
            }
            tokens.push(token.to_string());
        }
        Self::from_ordered_tokens(tokens)
    }
}

/// Token ids of a corpus, one `<eos>` after every input line.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    pub ids: Vec<usize>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Splits text on ASCII whitespace and appends [`EOS`] to every line.
pub fn tokenize_text(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        tokens.extend(line.split_ascii_whitespace());
        tokens.push(EOS);
    }
    tokens
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads the raw token sequence (with `<eos>` markers) of a corpus file.
pub fn read_tokens(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    Ok(tokenize_text(&text).into_iter().map(str::to_string).collect())
}

/// Loads a corpus file as ids. Without a vocabulary, one is built from the
/// file itself with `min_count = 1`.
pub fn load_corpus(path: &Path, vocab: Option<&Vocabulary>) -> Result<(TokenStream, Vocabulary)> {
    let text = read_text(path)?;
    let tokens = tokenize_text(&text);
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => build_vocab(&tokens, 1),
    };
    Ok((encode(&tokens, &vocab), vocab))
}

pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> TokenStream {
    TokenStream {
        ids: tokens.iter().map(|t| vocab.id_or_unk(t.as_ref())).collect(),
    }
}

/// Frequency-ordered vocabulary. Tokens seen fewer than `min_count` times are
/// left out and will map to `<unk>`.
pub fn build_vocab<S: AsRef<str>>(tokens: &[S], min_count: usize) -> Vocabulary {
    let min_count = min_count.max(1);
    // (count, first occurrence)
    let mut stats: HashMap<&str, (usize, usize)> = HashMap::new();
    for (pos, token) in tokens.iter().enumerate() {
        stats.entry(token.as_ref()).or_insert((0, pos)).0 += 1;
    }
    let mut entries: Vec<(&str, usize, usize)> = stats
        .into_iter()
        .filter(|(token, (count, _))| *count >= min_count || *token == EOS || *token == UNK)
        .map(|(token, (count, first))| (token, count, first))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    Vocabulary::from_ordered_tokens(entries.into_iter().map(|(token, _, _)| token)).expect("token keys are unique")
}

/// A stream reshaped into `batch_size` parallel stripes.
///
/// `inputs[[b, t]]` is followed by `targets[[b, t]]` in the stream. Tokens
/// that do not fill a whole stripe are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSet {
    pub inputs: Array2<usize>,
    pub targets: Array2<usize>,
    pub bptt_len: usize,
}

/// One truncated-BPTT window: columns `start..start + len` of a [`BatchSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl BatchSet {
    pub fn batch_size(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn steps(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn num_tokens(&self) -> usize {
        self.inputs.len()
    }

    pub fn windows(&self) -> impl Iterator<Item = Window> + '_ {
        let steps = self.steps();
        let bptt = self.bptt_len;
        (0..steps).step_by(bptt).map(move |start| Window {
            start,
            len: bptt.min(steps - start),
        })
    }

    pub fn window_inputs(&self, w: Window) -> ArrayView2<'_, usize> {
        self.inputs.slice(s![.., w.start..w.start + w.len])
    }

    pub fn window_targets(&self, w: Window) -> ArrayView2<'_, usize> {
        self.targets.slice(s![.., w.start..w.start + w.len])
    }
}

pub fn batchify(stream: &TokenStream, batch_size: usize, bptt_len: usize) -> Result<BatchSet> {
    if batch_size == 0 || bptt_len == 0 {
        return Err(Error::Sizing(format!(
            "batch_size ({batch_size}) and bptt_len ({bptt_len}) must be at least 1"
        )));
    }
    let stripe = stream.len() / batch_size;
    if stripe < 2 {
        return Err(Error::Sizing(format!(
            "stream of {} tokens is too short for batch_size {batch_size}",
            stream.len()
        )));
    }
    let steps = stripe - 1;
    let inputs = Array2::from_shape_fn((batch_size, steps), |(b, t)| stream.ids[b * stripe + t]);
    let targets = Array2::from_shape_fn((batch_size, steps), |(b, t)| stream.ids[b * stripe + t + 1]);
    Ok(BatchSet {
        inputs,
        targets,
        bptt_len,
    })
}
