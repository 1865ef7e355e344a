//! A seeded toy language for desk-scale experiments.
//!
//! Words come in synonym groups: members of a group are interchangeable in
//! every context, and their embeddings sit close to a shared group centroid.
//! Sentences follow a small grammar with topic-dependent group preferences
//! and verb/object affinities, so the corpus has sequential structure for
//! an LSTM to learn and meaningful nearest neighbors for replacement.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Det,
    Adj,
    Noun,
    Verb,
    Adv,
    Prep,
    Conj,
}

/// Sizes of the generated language.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub noun_groups: usize,
    pub verb_groups: usize,
    pub adj_groups: usize,
    pub adv_groups: usize,
    /// Members per content-word group.
    pub group_size: usize,
    pub topics: usize,
    pub emb_dim: usize,
    /// Share of words left out of the embedding file.
    pub missing_embeddings: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            noun_groups: 40,
            verb_groups: 24,
            adj_groups: 16,
            adv_groups: 8,
            group_size: 10,
            topics: 12,
            emb_dim: 32,
            missing_embeddings: 0.03,
        }
    }
}

struct Group {
    category: Category,
    words: Vec<String>,
    weights: WeightedIndex<f64>,
}

/// A sampled language: word groups, topic preferences and embeddings.
pub struct SyntheticLanguage {
    spec: SyntheticSpec,
    groups: Vec<Group>,
    by_category: Vec<(Category, Vec<usize>)>,
    /// Per topic, preferred groups of every category.
    topic_prefs: Vec<Vec<(Category, Vec<usize>)>>,
    /// Per verb group, preferred object noun groups.
    verb_objects: Vec<(usize, Vec<usize>)>,
    rng: ChaCha8Rng,
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "va", "de", "zu", "fe", "go", "hi", "ju", "be", "no", "sa", "te",
    "wi", "ro", "ma", "ki", "lu",
];

fn spell(index: usize, suffix: &str) -> String {
    let mut n = index;
    let mut word = String::new();
    loop {
        word.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
        if n == 0 {
            break;
        }
        n -= 1;
    }
    word.push_str(suffix);
    word
}

fn zipf_weights(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / (r as f64 + 1.0))).expect("positive weights")
}

impl SyntheticLanguage {
    pub fn new(spec: SyntheticSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut groups = Vec::new();
        let mut next_word = 0usize;
        let mut add = |groups: &mut Vec<Group>, category, count: usize, size: usize, suffix: &str| {
            let mut ids = Vec::new();
            for _ in 0..count {
                let words: Vec<String> = (0..size)
                    .map(|_| {
                        next_word += 1;
                        spell(next_word, suffix)
                    })
                    .collect();
                ids.push(groups.len());
                groups.push(Group {
                    category,
                    weights: zipf_weights(words.len()),
                    words,
                });
            }
            (category, ids)
        };
        let gs = spec.group_size.max(1);
        let by_category = vec![
            add(&mut groups, Category::Det, 1, 6, "d"),
            add(&mut groups, Category::Adj, spec.adj_groups, gs, "y"),
            add(&mut groups, Category::Noun, spec.noun_groups, gs, "n"),
            add(&mut groups, Category::Verb, spec.verb_groups, gs, "v"),
            add(&mut groups, Category::Adv, spec.adv_groups, gs, "ly"),
            add(&mut groups, Category::Prep, 1, 8, "p"),
            add(&mut groups, Category::Conj, 1, 4, "c"),
        ];

        let pick_subset = |rng: &mut ChaCha8Rng, pool: &[usize], n: usize| -> Vec<usize> {
            let mut chosen = Vec::new();
            while chosen.len() < n.min(pool.len()) {
                let g = pool[rng.random_range(0..pool.len())];
                if !chosen.contains(&g) {
                    chosen.push(g);
                }
            }
            chosen
        };
        let mut topic_prefs = Vec::new();
        for _ in 0..spec.topics.max(1) {
            let prefs = by_category
                .iter()
                .map(|(cat, pool)| (*cat, pick_subset(&mut rng, pool, pool.len().div_ceil(4).max(1))))
                .collect();
            topic_prefs.push(prefs);
        }
        let nouns = by_category[2].1.clone();
        let verb_objects = by_category[3]
            .1
            .iter()
            .map(|&v| (v, pick_subset(&mut rng, &nouns, 3)))
            .collect();

        SyntheticLanguage {
            spec,
            groups,
            by_category,
            topic_prefs,
            verb_objects,
            rng,
        }
    }

    pub fn vocab_words(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().flat_map(|g| g.words.iter().map(String::as_str))
    }

    pub fn num_words(&self) -> usize {
        self.groups.iter().map(|g| g.words.len()).sum()
    }

    /// Groups of synonymous words.
    pub fn synonym_groups(&self) -> impl Iterator<Item = &[String]> {
        self.groups.iter().map(|g| g.words.as_slice())
    }

    fn word(&mut self, group: usize) -> &str {
        let g = &self.groups[group];
        &g.words[g.weights.sample(&mut self.rng)]
    }

    fn group_of(&mut self, topic: usize, category: Category, preferred: Option<&[usize]>) -> usize {
        // 70% preferred (verb affinity or topic), 30% anywhere in the category.
        let roll: f64 = self.rng.random();
        let pool: Vec<usize> = match preferred {
            Some(p) if roll < 0.7 => p.to_vec(),
            _ if roll < 0.7 => self.topic_prefs[topic]
                .iter()
                .find(|(c, _)| *c == category)
                .map(|(_, g)| g.clone())
                .expect("every category has preferences"),
            _ => self
                .by_category
                .iter()
                .find(|(c, _)| *c == category)
                .map(|(_, g)| g.clone())
                .expect("every category has groups"),
        };
        pool[self.rng.random_range(0..pool.len())]
    }

    fn push(&mut self, out: &mut Vec<String>, topic: usize, category: Category, preferred: Option<&[usize]>) -> usize {
        let g = self.group_of(topic, category, preferred);
        let w = self.word(g).to_string();
        out.push(w);
        g
    }

    fn noun_phrase(&mut self, out: &mut Vec<String>, topic: usize, nouns: Option<&[usize]>, depth: usize) {
        self.push(out, topic, Category::Det, None);
        if self.rng.random::<f64>() < 0.4 {
            self.push(out, topic, Category::Adj, None);
        }
        self.push(out, topic, Category::Noun, nouns);
        if depth == 0 && self.rng.random::<f64>() < 0.25 {
            self.push(out, topic, Category::Prep, None);
            self.noun_phrase(out, topic, None, depth + 1);
        }
    }

    fn clause(&mut self, out: &mut Vec<String>, topic: usize) {
        self.noun_phrase(out, topic, None, 0);
        let verb = self.push(out, topic, Category::Verb, None);
        let objects = self
            .verb_objects
            .iter()
            .find(|(v, _)| *v == verb)
            .map(|(_, o)| o.clone());
        self.noun_phrase(out, topic, objects.as_deref(), 0);
        if self.rng.random::<f64>() < 0.3 {
            self.push(out, topic, Category::Adv, None);
        }
    }

    pub fn sentence(&mut self) -> Vec<String> {
        let topic = self.rng.random_range(0..self.topic_prefs.len());
        let mut out = Vec::new();
        self.clause(&mut out, topic);
        if self.rng.random::<f64>() < 0.3 {
            self.push(&mut out, topic, Category::Conj, None);
            self.clause(&mut out, topic);
        }
        out
    }

    /// Sentences, one per line, until at least `tokens` tokens (counting one
    /// end-of-line marker per sentence) have been produced.
    pub fn text(&mut self, tokens: usize) -> String {
        let mut out = String::new();
        let mut count = 0;
        while count < tokens {
            let s = self.sentence();
            count += s.len() + 1;
            out.push_str(&s.join(" "));
            out.push('\n');
        }
        out
    }

    /// Embedding file text with a `<count> <dim>` header: group centroid plus
    /// per-word noise, a few words left out.
    pub fn embeddings_text(&self) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ 0xe3b0_c442);
        let d = self.spec.emb_dim.max(1);
        let mut gauss =
            |scale: f64| -> Vec<f64> { (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect() };
        let mut lines = Vec::new();
        let category_vecs: Vec<(Category, Vec<f64>)> = self.by_category.iter().map(|(c, _)| (*c, gauss(0.5))).collect();
        for g in &self.groups {
            let cat = &category_vecs
                .iter()
                .find(|(c, _)| *c == g.category)
                .expect("category")
                .1;
            let centroid = gauss(1.0);
            for w in &g.words {
                let noise = gauss(0.35);
                let v: Vec<f64> = (0..d).map(|i| cat[i] + centroid[i] + noise[i]).collect();
                lines.push((w.clone(), v));
            }
        }
        let mut keep = ChaCha8Rng::seed_from_u64(self.spec.seed ^ 0x5eed);
        lines.retain(|_| keep.random::<f64>() >= self.spec.missing_embeddings);

        let mut out = String::new();
        writeln!(out, "{} {d}", lines.len()).expect("write to String");
        for (w, v) in lines {
            out.push_str(&w);
            for x in v {
                write!(out, " {x:.5}").expect("write to String");
            }
            out.push('\n');
        }
        out
    }
}

/// Sizes of a written desk corpus, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl Default for CorpusSizes {
    fn default() -> Self {
        CorpusSizes {
            train: 160_000,
            valid: 20_000,
            test: 20_000,
        }
    }
}

/// Writes `train.txt`, `valid.txt`, `test.txt` and `embeddings.txt` into
/// `dir`.
pub fn write_desk_corpus(dir: &Path, spec: SyntheticSpec, sizes: CorpusSizes) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut lang = SyntheticLanguage::new(spec);
    let files = [
        ("train.txt", lang.text(sizes.train)),
        ("valid.txt", lang.text(sizes.valid)),
        ("test.txt", lang.text(sizes.test)),
        ("embeddings.txt", lang.embeddings_text()),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
