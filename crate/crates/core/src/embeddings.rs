//! Pretrained word vectors and the character n-gram fallback for tokens
//! the vector file does not cover.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Vocab;
use crate::nn::EmbeddingTable;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const MIN_GRAM: usize = 3;
pub const MAX_GRAM: usize = 6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub words: HashMap<String, Vec<f64>>,
    /// Boundary-marked n-grams such as `<ip` or `ne>`.
    pub ngrams: Option<HashMap<String, Vec<f64>>>,
}

/// Parses the whitespace-separated vector format with an optional
/// `count dim` header line.
pub fn parse_vectors(text: &str, expected_dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let dim: usize = fields[1].parse().unwrap();
            if dim != expected_dim {
                return Err(Error::Config(format!(
                    "vector file declares dimension {dim}, expected {expected_dim}"
                )));
            }
            continue;
        }
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad component for `{}`: {e}", fields[0]),
            })?;
        if values.len() != expected_dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "`{}` has {} components, expected {expected_dim}",
                    fields[0],
                    values.len()
                ),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("`{}` has a non-finite component", fields[0]),
            });
        }
        map.insert(fields[0].to_string(), values);
    }
    Ok(map)
}

pub fn load_vectors(path: &Path, ngram_path: Option<&Path>, expected_dim: usize) -> Result<PretrainedVectors> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let words = parse_vectors(&read(path)?, expected_dim)?;
    let ngrams = match ngram_path {
        Some(p) => Some(parse_vectors(&read(p)?, expected_dim)?),
        None => None,
    };
    Ok(PretrainedVectors {
        dim: expected_dim,
        words,
        ngrams,
    })
}

/// Character n-grams of `<token>` for n in `MIN_GRAM..=MAX_GRAM`.
pub fn char_ngrams(token: &str) -> Vec<String> {
    let marked: Vec<char> = format!("<{token}>").chars().collect();
    let mut grams = Vec::new();
    for n in MIN_GRAM..=MAX_GRAM {
        for w in marked.windows(n) {
            grams.push(w.iter().collect());
        }
    }
    grams
}

/// Embedding table for `vocab`: exact vectors where available, else the
/// mean of known n-gram vectors, else the seeded random initialisation.
pub fn init_table(vocab: &Vocab, vectors: Option<&PretrainedVectors>, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::random(vocab.len(), dim, &mut rng)?;
    let Some(vectors) = vectors else {
        return Ok(table);
    };
    if vectors.dim != dim {
        return Err(Error::Config(format!(
            "pretrained vectors have dimension {}, the model uses {dim}",
            vectors.dim
        )));
    }
    let mut values = table.weight.values().to_vec();
    let (mut exact, mut composed) = (0, 0);
    for (i, token) in vocab.tokens().iter().enumerate().skip(2) {
        let row = &mut values[i * dim..(i + 1) * dim];
        if let Some(v) = vectors.words.get(token) {
            row.copy_from_slice(v);
            exact += 1;
            continue;
        }
        let Some(ngrams) = &vectors.ngrams else {
            continue;
        };
        let found: Vec<&Vec<f64>> = char_ngrams(token).iter().filter_map(|g| ngrams.get(g)).collect();
        if found.is_empty() {
            continue;
        }
        row.iter_mut().for_each(|r| *r = 0.0);
        for v in &found {
            for (r, x) in row.iter_mut().zip(v.iter()) {
                *r += x;
            }
        }
        row.iter_mut().for_each(|r| *r /= found.len() as f64);
        composed += 1;
    }
    log::info!(
        "embeddings: {exact} exact, {composed} from n-grams, {} random of {}",
        vocab.len() - 2 - exact - composed,
        vocab.len() - 2
    );
    table.weight = Tensor::new(vec![vocab.len(), dim], values)?.with_grad(true);
    Ok(table)
}
