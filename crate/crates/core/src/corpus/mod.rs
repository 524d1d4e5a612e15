//! QA-pair corpora: the JSONL schema, vocabulary, fixed-length encoding and
//! the train/valid/test split.

mod synth;

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LineError;
use crate::model::{LabelSpace, ModelConfig, Task};
use crate::nn::{PAD, UNK};
use crate::{Error, Result};

pub use synth::{synth_generate, PolarityMix};

/// One question with its answer and, optionally, gold question labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub id: String,
    pub product_id: String,
    #[serde(rename = "question")]
    pub question_tokens: Vec<String>,
    #[serde(rename = "answer")]
    pub answer_tokens: Vec<String>,
    #[serde(rename = "labels")]
    pub gold_labels: Option<Vec<String>>,
    pub task: Task,
}

impl QAPair {
    /// Checks the label sequence against the question and the task space.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let Some(labels) = &self.gold_labels else {
            return Ok(());
        };
        if labels.len() != self.question_tokens.len() {
            return Err(format!(
                "pair `{}`: {} question tokens but {} labels",
                self.id,
                self.question_tokens.len(),
                labels.len()
            ));
        }
        let space = LabelSpace::for_task(self.task);
        if let Some(bad) = labels.iter().find(|l| space.index(l).is_none()) {
            return Err(format!(
                "pair `{}`: label `{bad}` is not in the {} label space ({})",
                self.id,
                self.task,
                space.names().collect::<Vec<_>>().join(",")
            ));
        }
        Ok(())
    }
}

/// Parses a JSONL corpus. Every malformed line is reported at once.
pub fn parse_corpus(text: &str) -> Result<Vec<QAPair>> {
    let mut pairs = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        match serde_json::from_str::<QAPair>(line) {
            Ok(pair) => match pair.validate() {
                Ok(()) => pairs.push(pair),
                Err(message) => problems.push(LineError { line: line_no, message }),
            },
            Err(e) => problems.push(LineError {
                line: line_no,
                message: e.to_string(),
            }),
        }
    }
    if problems.is_empty() {
        Ok(pairs)
    } else {
        Err(Error::Validation(problems))
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<QAPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn save_corpus(path: &Path, pairs: &[QAPair]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for pair in pairs {
        serde_json::to_writer(&mut out, pair)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Token to index map with PAD at 0 and UNK at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Rebuilds a vocabulary from its full token list (reserved entries first).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != "<pad>" || tokens[UNK] != "<unk>" {
            return Err(Error::Contract("vocabulary must start with <pad>, <unk>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate().skip(2) {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the newline-joined token list, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.tokens.join("\n").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Question and answer tokens with frequency `>= min_count`, most frequent
/// first, ties in lexical order.
pub fn build_vocab(pairs: &[QAPair], min_count: usize) -> Result<Vocab> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for pair in pairs {
        for t in pair.question_tokens.iter().chain(&pair.answer_tokens) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string()];
    tokens.extend(kept.into_iter().filter(|(t, _)| *t != "<pad>" && *t != "<unk>").map(|(t, _)| t.to_string()));
    Vocab::from_tokens(tokens)
}

/// A pair mapped to fixed-length index sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub id: String,
    pub product_id: String,
    /// Question tokens kept after truncation (length = number of real tokens).
    pub question_tokens: Vec<String>,
    pub question: Vec<usize>,
    pub answer: Vec<usize>,
    pub question_mask: Vec<bool>,
    pub answer_mask: Vec<bool>,
    /// Gold label indices, `O` on padding. `None` for unlabeled pairs.
    pub labels: Option<Vec<usize>>,
}

impl EncodedExample {
    /// Question followed by answer.
    pub fn story(&self) -> Vec<usize> {
        let mut s = self.question.clone();
        s.extend_from_slice(&self.answer);
        s
    }

    pub fn story_mask(&self) -> Vec<bool> {
        let mut s = self.question_mask.clone();
        s.extend_from_slice(&self.answer_mask);
        s
    }

    pub fn real_len(&self) -> usize {
        self.question_mask.iter().filter(|m| **m).count()
    }
}

/// Pads or truncates a pair to the configured lengths. The answer keeps its
/// first `answer_len` tokens. Dropping labeled question tokens is logged.
pub fn encode(pair: &QAPair, vocab: &Vocab, cfg: &ModelConfig) -> Result<EncodedExample> {
    if pair.task != cfg.task {
        return Err(Error::Contract(format!(
            "pair `{}` is a {} pair but the model is configured for {}",
            pair.id, pair.task, cfg.task
        )));
    }
    pair.validate().map_err(Error::Contract)?;
    let (tq, ta) = (cfg.question_len, cfg.answer_len);
    let fit = |tokens: &[String], len: usize| -> (Vec<usize>, Vec<bool>) {
        let mut ids: Vec<usize> = tokens.iter().take(len).map(|t| vocab.get(t)).collect();
        let mut mask = vec![true; ids.len()];
        ids.resize(len, PAD);
        mask.resize(len, false);
        (ids, mask)
    };
    let (question, question_mask) = fit(&pair.question_tokens, tq);
    let (answer, answer_mask) = fit(&pair.answer_tokens, ta);
    let space = LabelSpace::for_task(pair.task);
    let labels = pair.gold_labels.as_ref().map(|labels| {
        let dropped = labels.iter().skip(tq).filter(|l| l.as_str() != "O").count();
        if dropped > 0 {
            log::warn!(
                "pair `{}`: truncating the question to {tq} tokens drops {dropped} labeled token(s)",
                pair.id
            );
        }
        let mut y: Vec<usize> = labels
            .iter()
            .take(tq)
            .map(|l| space.index(l).unwrap_or(LabelSpace::OTHER))
            .collect();
        y.resize(tq, LabelSpace::OTHER);
        y
    });
    Ok(EncodedExample {
        id: pair.id.clone(),
        product_id: pair.product_id.clone(),
        question_tokens: pair.question_tokens.iter().take(tq).cloned().collect(),
        question,
        answer,
        question_mask,
        answer_mask,
        labels,
    })
}

/// Number of labeled question tokens that `encode` would drop.
pub fn truncated_label_count(pair: &QAPair, question_len: usize) -> usize {
    pair.gold_labels
        .as_ref()
        .map_or(0, |l| l.iter().skip(question_len).filter(|l| l.as_str() != "O").count())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<QAPair>,
    pub valid: Vec<QAPair>,
    pub test: Vec<QAPair>,
}

/// Seeded shuffle then 70/10/20: valid and test sizes are floored and the
/// remainder goes to train.
pub fn split(pairs: &[QAPair], seed: u64) -> Result<Split> {
    let n = pairs.len();
    if n < 10 {
        return Err(Error::Config(format!("need at least 10 pairs to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = n / 10;
    let n_test = n / 5;
    let n_train = n - n_valid - n_test;
    let take = |range: std::ops::Range<usize>| order[range].iter().map(|&i| pairs[i].clone()).collect();
    Ok(Split {
        train: take(0..n_train),
        valid: take(n_train..n_train + n_valid),
        test: take(n_train + n_valid..n),
    })
}
