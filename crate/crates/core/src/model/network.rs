//! The four model variants wired on a tape.
//!
//! Every variant shares the same skeleton:
//!
//! ```text
//! question ─ embed ─ ctx1_question ─┐                ┌─ ctx2_question (seq) ─┐
//!                                   ├─ [attention] ──┤                        ├─ dense ─ softmax
//! answer   ─ embed ─ ctx1_answer ───┘                └─ ctx2_answer (pool) ───┘
//! ```
//!
//! DAN additionally encodes the question+answer story with `ctx1_story` and
//! lets both sides attend over it. The answer summary from `ctx2_answer` is
//! repeated at every question position before the dense layer.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant};
use super::labels::LabelSpace;
use crate::corpus::EncodedExample;
use crate::nn::{self, Blstm, Dense, Embedding, EmbeddingTable};
use crate::params::{BoundParams, ParamSet};
use crate::tensor::{Tape, Var};
use crate::{Error, Result};

pub const EMBEDDING: &str = "embedding";
pub const CTX1_QUESTION: &str = "ctx1_question";
pub const CTX1_ANSWER: &str = "ctx1_answer";
pub const CTX1_STORY: &str = "ctx1_story";
pub const CTX2_QUESTION: &str = "ctx2_question";
pub const CTX2_ANSWER: &str = "ctx2_answer";
pub const DENSE: &str = "dense";

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub params: ParamSet,
}

/// Switches that alter a forward pass without touching parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Replace every attention context with zeros.
    pub zero_attention: bool,
}

/// Handles to the intermediate values of one batched forward pass.
///
/// Sequence tensors are example-major, `batch * steps` rows.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub batch: usize,
    pub h_q1: Var,
    pub h_a1: Var,
    pub h_story: Option<Var>,
    pub c_q: Option<Var>,
    pub c_a: Option<Var>,
    /// One `T_q × T_story` (or `T_q × T_a`) weight matrix per example.
    pub question_attention: Vec<Var>,
    pub answer_attention: Vec<Var>,
    pub h_q2: Var,
    pub h_a2: Var,
    pub h_q3: Var,
    /// `batch × blstm_dim` answer summaries.
    pub h_a3: Var,
    pub scores: Var,
    pub probs: Var,
}

struct Layers {
    embedding: Embedding,
    ctx1_question: Blstm,
    ctx1_answer: Blstm,
    ctx1_story: Option<Blstm>,
    ctx2_question: Blstm,
    ctx2_answer: Blstm,
    dense: Dense,
}

fn layers(cfg: &ModelConfig, vocab_size: usize, labels: usize) -> Result<Layers> {
    let (de, d) = (cfg.embed_dim, cfg.blstm_dim);
    let q_width = if cfg.variant == Variant::QaSBlstm { d } else { 2 * d };
    let a_width = match cfg.variant {
        Variant::QaSBlstm | Variant::DanNoAnsAttn => d,
        Variant::Dan | Variant::QaCoattention => 2 * d,
    };
    Ok(Layers {
        embedding: Embedding {
            name: EMBEDDING.into(),
            vocab_size,
            dim: de,
        },
        ctx1_question: Blstm::new(CTX1_QUESTION, de, d)?,
        ctx1_answer: Blstm::new(CTX1_ANSWER, de, d)?,
        ctx1_story: if cfg.variant.uses_story() {
            Some(Blstm::new(CTX1_STORY, de, d)?)
        } else {
            None
        },
        ctx2_question: Blstm::new(CTX2_QUESTION, q_width, d)?,
        ctx2_answer: Blstm::new(CTX2_ANSWER, a_width, d)?,
        dense: Dense {
            name: DENSE.into(),
            input_dim: 2 * d,
            output_dim: labels,
        },
    })
}

/// Builds a model with freshly initialised parameters, seeded by `cfg.seed`.
pub fn build_model(cfg: &ModelConfig, vocab_size: usize) -> Result<Model> {
    build_model_with_embeddings(cfg, vocab_size, None)
}

/// Like [`build_model`] but starting from a prepared embedding table.
pub fn build_model_with_embeddings(
    cfg: &ModelConfig,
    vocab_size: usize,
    table: Option<EmbeddingTable>,
) -> Result<Model> {
    cfg.validate()?;
    if vocab_size < 2 {
        return Err(Error::Config(format!("vocabulary size {vocab_size} < 2 (PAD, UNK)")));
    }
    let space = LabelSpace::for_task(cfg.task);
    let l = layers(cfg, vocab_size, space.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let random = EmbeddingTable::random(vocab_size, cfg.embed_dim, &mut rng)?;
    let table = match table {
        Some(t) if t.vocab_size() != vocab_size || t.dim() != cfg.embed_dim => {
            return Err(Error::Config(format!(
                "embedding table is {}x{} but the model needs {vocab_size}x{}",
                t.vocab_size(),
                t.dim(),
                cfg.embed_dim
            )));
        }
        Some(t) => t,
        None => random,
    };
    let mut params = ParamSet::new();
    let mut weight = table.weight;
    weight.set_requires_grad(table.trainable);
    params.insert(l.embedding.weight_name(), weight)?;
    for blstm in [Some(&l.ctx1_question), Some(&l.ctx1_answer), l.ctx1_story.as_ref()]
        .into_iter()
        .flatten()
        .chain([&l.ctx2_question, &l.ctx2_answer])
    {
        blstm.init(&mut params, &mut rng)?;
    }
    l.dense.init(&mut params, &mut rng)?;
    Ok(Model {
        config: cfg.clone(),
        vocab_size,
        params,
    })
}

fn rows_of(tape: &mut Tape, x: Var, b: usize, steps: usize) -> Result<Var> {
    Ok(tape.slice(x, 0, b * steps, (b + 1) * steps)?)
}

impl Model {
    pub fn label_space(&self) -> LabelSpace {
        LabelSpace::for_task(self.config.task)
    }

    /// Records a forward pass over `batch` on `tape`. Passing `dropout_rng`
    /// switches dropout on (training mode).
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        batch: &[&EncodedExample],
        mut dropout_rng: Option<&mut dyn RngCore>,
        opts: ForwardOptions,
    ) -> Result<ForwardTrace> {
        let cfg = &self.config;
        let (tq, ta) = (cfg.question_len, cfg.answer_len);
        let ts = tq + ta;
        let nb = batch.len();
        if nb == 0 {
            return Err(Error::Contract("empty batch".into()));
        }
        for ex in batch {
            if ex.question.len() != tq || ex.answer.len() != ta {
                return Err(Error::Contract(format!(
                    "example `{}` has lengths ({}, {}) but the model expects ({tq}, {ta})",
                    ex.id,
                    ex.question.len(),
                    ex.answer.len()
                )));
            }
        }
        let l = layers(cfg, self.vocab_size, self.label_space().len())?;
        let rate = cfg.dropout;
        let mut drop = |tape: &mut Tape, x: Var| -> Result<Var> {
            nn::dropout(tape, x, rate, dropout_rng.as_mut().map(|r| &mut **r as &mut dyn RngCore))
        };

        let q_ids: Vec<usize> = batch.iter().flat_map(|e| e.question.iter().copied()).collect();
        let a_ids: Vec<usize> = batch.iter().flat_map(|e| e.answer.iter().copied()).collect();
        let e_q = l.embedding.embed(tape, bound, &q_ids)?;
        let e_a = l.embedding.embed(tape, bound, &a_ids)?;
        let h_q1 = l.ctx1_question.seq(tape, bound, e_q, nb)?;
        let h_q1 = drop(tape, h_q1)?;
        let h_a1 = l.ctx1_answer.seq(tape, bound, e_a, nb)?;
        let h_a1 = drop(tape, h_a1)?;

        let h_story = match &l.ctx1_story {
            Some(layer) => {
                let s_ids: Vec<usize> = batch.iter().flat_map(|e| e.story()).collect();
                let e_s = l.embedding.embed(tape, bound, &s_ids)?;
                let h = layer.seq(tape, bound, e_s, nb)?;
                Some(drop(tape, h)?)
            }
            None => None,
        };

        // (source, source steps, memory, memory steps, memory mask) per side.
        let plan: [Option<(Var, usize, Var, usize, bool)>; 2] = match cfg.variant {
            Variant::Dan => {
                let s = h_story.expect("story encoded");
                [Some((h_q1, tq, s, ts, true)), Some((h_a1, ta, s, ts, true))]
            }
            Variant::DanNoAnsAttn => [Some((h_q1, tq, h_story.expect("story encoded"), ts, true)), None],
            Variant::QaSBlstm => [None, None],
            Variant::QaCoattention => [Some((h_q1, tq, h_a1, ta, false)), Some((h_a1, ta, h_q1, tq, false))],
        };
        let mut contexts = [None, None];
        let mut weights: [Vec<Var>; 2] = [Vec::new(), Vec::new()];
        for (side, entry) in plan.into_iter().enumerate() {
            let Some((src, src_steps, mem, mem_steps, is_story)) = entry else {
                continue;
            };
            let ctx = if opts.zero_attention {
                let width = tape.shape(src)[1];
                tape.constant(vec![nb * src_steps, width], vec![0.0; nb * src_steps * width])?
            } else {
                let mut parts = Vec::with_capacity(nb);
                for (b, ex) in batch.iter().enumerate() {
                    let mask = if is_story {
                        ex.story_mask()
                    } else if side == 0 {
                        ex.answer_mask.clone()
                    } else {
                        ex.question_mask.clone()
                    };
                    let s = rows_of(tape, src, b, src_steps)?;
                    let m = rows_of(tape, mem, b, mem_steps)?;
                    let r = nn::attend(tape, s, m, Some(&mask))?;
                    weights[side].push(r.weights);
                    parts.push(r.context);
                }
                if parts.len() == 1 {
                    parts[0]
                } else {
                    tape.concat(&parts, 0)?
                }
            };
            contexts[side] = Some(ctx);
        }
        let [c_q, c_a] = contexts;
        let [question_attention, answer_attention] = weights;

        let h_q2 = match c_q {
            Some(c) => tape.concat(&[h_q1, c], 1)?,
            None => h_q1,
        };
        let h_a2 = match c_a {
            Some(c) => tape.concat(&[h_a1, c], 1)?,
            None => h_a1,
        };
        let h_q3 = l.ctx2_question.seq(tape, bound, h_q2, nb)?;
        let h_a3 = l.ctx2_answer.pool(tape, bound, h_a2, nb)?;
        let copies: Vec<usize> = (0..nb).flat_map(|b| std::iter::repeat(b).take(tq)).collect();
        let h_a3_rep = tape.gather_rows(h_a3, &copies)?;
        let joint = tape.concat(&[h_q3, h_a3_rep], 1)?;
        let joint = drop(tape, joint)?;
        let scores = l.dense.forward(tape, bound, joint)?;
        let probs = tape.softmax_rows(scores)?;
        Ok(ForwardTrace {
            batch: nb,
            h_q1,
            h_a1,
            h_story,
            c_q,
            c_a,
            question_attention,
            answer_attention,
            h_q2,
            h_a2,
            h_q3,
            h_a3,
            scores,
            probs,
        })
    }

    /// Summed masked cross-entropy of the batch. Needs gold labels.
    pub fn loss(&self, tape: &mut Tape, trace: &ForwardTrace, batch: &[&EncodedExample]) -> Result<Var> {
        let n = self.label_space().len();
        let tq = self.config.question_len;
        let mut target = vec![0.0; batch.len() * tq * n];
        let mut mask = vec![0.0; batch.len() * tq];
        for (b, ex) in batch.iter().enumerate() {
            let labels = ex
                .labels
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("example `{}` has no gold labels", ex.id)))?;
            for t in 0..tq {
                let row = b * tq + t;
                if ex.question_mask[t] {
                    mask[row] = 1.0;
                    target[row * n + labels[t]] = 1.0;
                }
            }
        }
        Ok(tape.cross_entropy(trace.probs, &target, &mask)?)
    }

    /// Inference-mode label predictions for each example.
    pub fn predict(&self, batch: &[&EncodedExample]) -> Result<Vec<Vec<usize>>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let trace = self.forward(&mut tape, &bound, batch, None, ForwardOptions::default())?;
        let n = self.label_space().len();
        let tq = self.config.question_len;
        let probs = tape.value(trace.probs);
        Ok(batch
            .iter()
            .enumerate()
            .map(|(b, ex)| predict_labels(&probs[b * tq * n..(b + 1) * tq * n], n, &ex.question_mask))
            .collect())
    }
}

/// Row-wise argmax over a `T × n` probability matrix; ties go to the lowest
/// index and padded positions are `O`.
pub fn predict_labels(probs: &[f64], n: usize, mask: &[bool]) -> Vec<usize> {
    probs
        .chunks(n)
        .zip(mask)
        .map(|(row, &real)| {
            if !real {
                return LabelSpace::OTHER;
            }
            let mut best = 0;
            for (i, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
