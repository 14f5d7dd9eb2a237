//! Synthetic summarization task.
//!
//! A seeded grammar writes an "article" out of tagged words; the reference
//! summary is the article's words whose tags are in the summary tag set,
//! deduplicated in order of first appearance. The agent writes a summary one
//! word per step and stops with [`END_TOKEN`] or at `max_summary_len`; the
//! terminal reward is the configured ROUGE F1 against the reference.
//!
//! State features are `[bag of summary words so far ‖ mean one-hot of the
//! article]`, width `2·|vocab|`. Action `i < |vocab|` emits word `i`; action
//! `|vocab|` ends the summary.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::rouge::RougeKind;
use super::{Environment, MdpSpec, TokenInfo, Transition};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub const END_TOKEN: &str = "</s>";

/// Noun, plural noun, verb, modal, adverb, determiner, pronoun, symbol.
pub const DEFAULT_TAGS: [&str; 8] = ["NN", "NNS", "VB", "MD", "RB", "DT", "PRP", "SYM"];

const WORDS: [&[&str]; 8] = [
    &["report", "market", "city", "run", "plan", "storm", "court", "team", "budget", "river", "vote", "border"],
    &["prices", "voters", "ships", "storms", "markets", "officials", "workers", "rates", "banks", "schools", "farms", "leaders"],
    &["run", "rise", "fall", "said", "announce", "close", "expand", "approve", "reject", "warn", "build", "cut"],
    &["can", "will", "must", "may", "should", "could", "might", "would", "shall", "ought", "need", "dare"],
    &["quickly", "sharply", "today", "again", "nearly", "also", "still", "widely", "soon", "later", "rarely", "only"],
    &["the", "a", "this", "that", "every", "some", "each", "another", "any", "no", "these", "those"],
    &["he", "she", "they", "it", "we", "you", "i", "them", "us", "him", "her", "me"],
    &["$", "%", "°", "&", "+", "=", "@", "*", "~", "^", "|", "§"],
];

/// Sentence shapes over [`DEFAULT_TAGS`] indices.
const TEMPLATES: [&[usize]; 5] = [
    &[5, 0, 3, 2, 4],    // DT NN MD VB RB
    &[6, 2, 5, 1, 7],    // PRP VB DT NNS SYM
    &[5, 1, 2, 4],       // DT NNS VB RB
    &[5, 0, 2, 5, 0],    // DT NN VB DT NN
    &[6, 3, 2, 1],       // PRP MD VB NNS
];

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenEntry {
    pub surface: String,
    pub tag: String,
}

/// Word list where `(surface, tag)` identifies an entry, so the same surface
/// under two tags is two words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<TokenEntry>,
    index: HashMap<TokenEntry, usize>,
}

impl Vocabulary {
    pub fn new(entries: Vec<TokenEntry>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.surface.is_empty() || e.tag.is_empty() {
                return Err(Error::Data(format!("vocabulary entry {i} has an empty field")));
            }
            // `#` opens a comment line in the written tables.
            if e.surface.starts_with('#') || [&e.surface, &e.tag].iter().any(|f| f.contains(['\t', '\n', '\r'])) {
                return Err(Error::Data(format!(
                    "vocabulary entry {i} ({:?}, {:?}): fields may not start with `#` or contain tabs or newlines",
                    e.surface, e.tag
                )));
            }
            if index.insert(e.clone(), i).is_some() {
                return Err(Error::Data(format!(
                    "duplicate vocabulary entry ({}, {})",
                    e.surface, e.tag
                )));
            }
        }
        if entries.is_empty() {
            return Err(Error::Data("empty vocabulary".into()));
        }
        Ok(Vocabulary { entries, index })
    }

    /// Built-in words: `words_per_tag` per tag. The first eight tags use the
    /// names in [`DEFAULT_TAGS`]; further tags are synthetic (`T09`, ...).
    pub fn synthetic(tag_count: usize, words_per_tag: usize) -> Result<Self> {
        if tag_count < 2 || words_per_tag == 0 {
            return Err(Error::Contract(
                "need at least two tags and one word per tag".into(),
            ));
        }
        let mut entries = Vec::with_capacity(tag_count * words_per_tag);
        for t in 0..tag_count {
            let tag = tag_name(t);
            for w in 0..words_per_tag {
                let surface = match WORDS.get(t).and_then(|ws| ws.get(w)) {
                    Some(s) => s.to_string(),
                    None => synthetic_word(t, w),
                };
                entries.push(TokenEntry {
                    surface,
                    tag: tag.clone(),
                });
            }
        }
        Vocabulary::new(entries)
    }

    /// Parses `surface<TAB>tag` lines; blank lines and `#` comments are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(t), None) => entries.push(TokenEntry {
                    surface: s.to_string(),
                    tag: t.to_string(),
                }),
                _ => {
                    return Err(Error::Data(format!(
                        "vocabulary line {}: expected `surface<TAB>tag`",
                        n + 1
                    )))
                }
            }
        }
        Vocabulary::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::parse_tsv(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.surface, e.tag))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TokenEntry] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> Option<&TokenEntry> {
        self.entries.get(i)
    }

    pub fn lookup(&self, surface: &str, tag: &str) -> Option<usize> {
        self.index
            .get(&TokenEntry {
                surface: surface.to_string(),
                tag: tag.to_string(),
            })
            .copied()
    }

    /// Distinct tags in first-appearance order.
    pub fn tags(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.tag.clone()))
            .map(|e| e.tag.clone())
            .collect()
    }

    pub fn words_with_tag(&self, tag: &str) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.tag == tag)
            .map(|(i, _)| i)
            .collect()
    }
}

fn tag_name(t: usize) -> String {
    DEFAULT_TAGS
        .get(t)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("T{:02}", t + 1))
}

fn synthetic_word(tag: usize, word: usize) -> String {
    const SYL: [&str; 8] = ["ka", "lo", "mi", "ru", "te", "sa", "no", "vi"];
    let mut s = String::new();
    let mut k = tag * 31 + word * 7 + 3;
    for _ in 0..(2 + (tag + word) % 3) {
        s.push_str(SYL[k % SYL.len()]);
        k = k / SYL.len() + word + 1;
    }
    format!("{s}{tag}{word}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenEnvConfig {
    pub tag_count: usize,
    pub words_per_tag: usize,
    /// Optional `surface<TAB>tag` file replacing the built-in words.
    pub vocab_path: Option<PathBuf>,
    pub sentences_per_article: usize,
    /// Tags whose words belong in the reference summary.
    pub summary_tags: Vec<String>,
    /// Tag whose words every article contains and every reference requires.
    pub planted_tag: Option<String>,
    /// Chance that each other summary-tag word of the article enters the
    /// reference. Below 1 the reference is a hidden random subset.
    pub reference_keep_prob: f64,
    pub max_summary_len: usize,
    pub rouge: RougeKind,
    pub gamma: f64,
    pub grammar_seed: u64,
}

impl Default for TokenEnvConfig {
    fn default() -> Self {
        TokenEnvConfig {
            tag_count: 8,
            words_per_tag: 8,
            vocab_path: None,
            sentences_per_article: 2,
            summary_tags: vec!["NN".into(), "NNS".into(), "VB".into()],
            planted_tag: None,
            reference_keep_prob: 1.0,
            max_summary_len: 8,
            rouge: RougeKind::Rouge1,
            gamma: 0.95,
            grammar_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
struct Episode {
    article: Vec<usize>,
    reference: Vec<usize>,
    summary: Vec<usize>,
    article_embedding: Vec<f64>,
    done: bool,
}

#[derive(Clone, Debug)]
pub struct TokenGenEnv {
    cfg: TokenEnvConfig,
    vocab: Vocabulary,
    /// Sentence shapes as tag indices into `tags`.
    templates: Vec<Vec<usize>>,
    /// Word ids per tag index.
    words_by_tag: Vec<Vec<usize>>,
    tags: Vec<String>,
    summary_tags: BTreeSet<usize>,
    planted: Option<usize>,
    spec: MdpSpec,
    episode: Episode,
}

impl TokenGenEnv {
    pub fn new(cfg: TokenEnvConfig) -> Result<Self> {
        let vocab = match &cfg.vocab_path {
            Some(p) => Vocabulary::load(p)?,
            None => Vocabulary::synthetic(cfg.tag_count, cfg.words_per_tag)?,
        };
        TokenGenEnv::with_vocabulary(cfg, vocab)
    }

    pub fn with_vocabulary(cfg: TokenEnvConfig, vocab: Vocabulary) -> Result<Self> {
        if cfg.max_summary_len == 0 || cfg.sentences_per_article == 0 {
            return Err(Error::Contract(
                "max_summary_len and sentences_per_article must be positive".into(),
            ));
        }
        if !(cfg.reference_keep_prob > 0.0 && cfg.reference_keep_prob <= 1.0) {
            return Err(Error::Contract(format!(
                "reference_keep_prob must be in (0, 1], got {}",
                cfg.reference_keep_prob
            )));
        }
        let tags = vocab.tags();
        let tag_index = |t: &str| {
            tags.iter()
                .position(|x| x == t)
                .ok_or_else(|| Error::Contract(format!("tag {t:?} is not in the vocabulary")))
        };
        let summary_tags = cfg
            .summary_tags
            .iter()
            .map(|t| tag_index(t))
            .collect::<Result<BTreeSet<_>>>()?;
        let planted = cfg.planted_tag.as_deref().map(tag_index).transpose()?;
        let words_by_tag: Vec<Vec<usize>> = tags.iter().map(|t| vocab.words_with_tag(t)).collect();

        let default_layout = tags.len() == DEFAULT_TAGS.len()
            && tags.iter().zip(DEFAULT_TAGS).all(|(a, b)| a == b);
        let templates = if default_layout {
            TEMPLATES.iter().map(|t| t.to_vec()).collect()
        } else {
            let mut rng = rng_from_seed(derive_seed(cfg.grammar_seed, 0x7e41, 0));
            (0..5)
                .map(|_| {
                    let len = rng.gen_range(4..=6);
                    (0..len).map(|_| rng.gen_range(0..tags.len())).collect()
                })
                .collect()
        };

        let v = vocab.len();
        let spec = MdpSpec::new(2 * v, v + 1, cfg.gamma)?;
        Ok(TokenGenEnv {
            episode: Episode {
                article: Vec::new(),
                reference: Vec::new(),
                summary: Vec::new(),
                article_embedding: vec![0.0; v],
                done: true,
            },
            cfg,
            vocab,
            templates,
            words_by_tag,
            tags,
            summary_tags,
            planted,
            spec,
        })
    }

    pub fn config(&self) -> &TokenEnvConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn end_action(&self) -> usize {
        self.vocab.len()
    }

    pub fn article(&self) -> &[usize] {
        &self.episode.article
    }

    pub fn reference(&self) -> &[usize] {
        &self.episode.reference
    }

    pub fn summary(&self) -> &[usize] {
        &self.episode.summary
    }

    fn sentence(&self, rng: &mut Rng, out: &mut Vec<usize>) {
        let template = self.templates.choose(rng).expect("templates");
        for &t in template {
            if let Some(w) = self.words_by_tag[t].choose(rng) {
                out.push(*w);
            }
        }
    }

    /// `(article, reference)` drawn for `seed`.
    pub fn generate(&self, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = rng_from_seed(derive_seed(self.cfg.grammar_seed, 0xa471, seed));
        let mut article = Vec::new();
        for _ in 0..self.cfg.sentences_per_article {
            self.sentence(&mut rng, &mut article);
        }
        if let Some(p) = self.planted {
            let has = article.iter().any(|w| self.tag_of(*w) == p);
            if !has && !self.words_by_tag[p].is_empty() {
                let w = *self.words_by_tag[p].choose(&mut rng).unwrap();
                let at = rng.gen_range(0..=article.len());
                article.insert(at, w);
            }
        }
        let p = self.cfg.reference_keep_prob;
        let reference = self.select_reference(&article, || p >= 1.0 || rng.gen_bool(p));
        (article, reference)
    }

    fn tag_of(&self, word: usize) -> usize {
        let tag = &self.vocab.entries()[word].tag;
        self.tags.iter().position(|t| t == tag).expect("known tag")
    }

    /// Required words of `article`, first occurrence order, planted tag first.
    pub fn reference_for(&self, article: &[usize]) -> Vec<usize> {
        self.select_reference(article, || true)
    }

    fn select_reference(&self, article: &[usize], mut keep: impl FnMut() -> bool) -> Vec<usize> {
        let mut seen = BTreeSet::new();
        let mut planted = Vec::new();
        let mut rest = Vec::new();
        for &w in article {
            let t = self.tag_of(w);
            if Some(t) == self.planted {
                if seen.insert(w) {
                    planted.push(w);
                }
            } else if self.summary_tags.contains(&t) && seen.insert(w) {
                rest.push(w);
            }
        }
        let candidates = std::mem::take(&mut rest);
        rest = candidates.iter().copied().filter(|_| keep()).collect();
        if planted.is_empty() && rest.is_empty() {
            rest.extend(candidates.first());
        }
        planted.extend(rest);
        planted.truncate(self.cfg.max_summary_len);
        planted
    }

    fn features(&self) -> Vec<f64> {
        let v = self.vocab.len();
        let mut f = vec![0.0; 2 * v];
        for &w in &self.episode.summary {
            f[w] += 1.0;
        }
        f[v..].copy_from_slice(&self.episode.article_embedding);
        f
    }

    pub fn score(&self, summary: &[usize], reference: &[usize]) -> f64 {
        self.cfg.rouge.f1(summary, reference)
    }
}

impl Environment for TokenGenEnv {
    fn spec(&self) -> MdpSpec {
        self.spec
    }

    fn max_steps(&self) -> usize {
        // the end action is only available before the cap is reached
        self.cfg.max_summary_len
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let (article, reference) = self.generate(seed);
        let v = self.vocab.len();
        let mut emb = vec![0.0; v];
        for &w in &article {
            emb[w] += 1.0 / article.len() as f64;
        }
        self.episode = Episode {
            article,
            reference,
            summary: Vec::new(),
            article_embedding: emb,
            done: false,
        };
        self.features()
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        if self.episode.done {
            return Err(Error::Contract("step called on a finished episode".into()));
        }
        if action > self.vocab.len() {
            return Err(Error::Contract(format!(
                "action {action} out of range 0..={}",
                self.vocab.len()
            )));
        }
        let state = self.features();
        if action != self.end_action() {
            self.episode.summary.push(action);
        }
        let done = action == self.end_action() || self.episode.summary.len() >= self.cfg.max_summary_len;
        self.episode.done = done;
        let reward = if done {
            self.score(&self.episode.summary, &self.episode.reference)
        } else {
            0.0
        };
        Ok(Transition {
            state,
            action,
            next_state: self.features(),
            reward,
            done,
        })
    }

    fn is_done(&self) -> bool {
        self.episode.done
    }

    fn annotate(&self, action: usize) -> Option<TokenInfo> {
        self.vocab.get(action).map(|e| TokenInfo {
            surface: e.surface.clone(),
            tag: e.tag.clone(),
        })
    }

    fn episode_input(&self) -> Vec<usize> {
        self.episode.article.clone()
    }

    fn episode_reference(&self) -> Vec<usize> {
        self.episode.reference.clone()
    }
}
