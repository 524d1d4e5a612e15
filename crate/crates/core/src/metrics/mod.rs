//! Span-overlap evaluation of predicted question labels.
//!
//! A predicted target is a positive extraction when it covers at least half
//! of a gold target's tokens. Each gold target is matched to at most one
//! prediction, greedily by descending overlap (ties: leftmost prediction,
//! then leftmost gold). A positive extraction whose voted polarity agrees
//! with the gold polarity is a true positive for that class; a polarity
//! mismatch is a false negative for the gold class and is not counted as a
//! false positive. Unmatched predictions are false positives for their own
//! class, unmatched gold targets false negatives.
//!
//! For satisfiability a positive extraction must also hit a function word:
//! some token of a gold function-word span paired with the gold target must
//! be predicted as any function-word label. Gold targets without paired
//! function words pass this test automatically.

mod report;

use crate::model::decode::{label_spans, span_distance, Span, PAIRING_WINDOW};
use crate::model::{LabelClass, LabelSpace, Polarity, Task};
use crate::{Error, Result};

pub use report::{render_table, ClassMetrics, MetricsReport, TableRow};

pub const MIN_OVERLAP: f64 = 0.5;

/// Spans of a label sequence (maximal runs of one non-`O` label).
pub fn spans_from_labels(labels: &[usize], space: &LabelSpace) -> Result<Vec<Span>> {
    label_spans(labels, space)
}

/// Fraction of `gold`'s tokens covered by `pred`.
pub fn overlap_ratio(pred: &Span, gold: &Span) -> f64 {
    let lo = pred.start.max(gold.start);
    let hi = pred.end.min(gold.end);
    hi.saturating_sub(lo) as f64 / gold.len() as f64
}

/// `(prediction index, gold index, overlap)` for each positive extraction.
pub type Matching = Vec<(usize, usize, f64)>;

pub fn match_targets(pred: &[Span], gold: &[Span]) -> Matching {
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gold.iter().enumerate() {
            let r = overlap_ratio(p, g);
            if r >= MIN_OVERLAP {
                candidates.push((i, j, r));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(pred[a.0].start.cmp(&pred[b.0].start))
            .then(gold[a.1].start.cmp(&gold[b.1].start))
    });
    let mut pred_used = vec![false; pred.len()];
    let mut gold_used = vec![false; gold.len()];
    let mut out = Vec::new();
    for (i, j, r) in candidates {
        if !pred_used[i] && !gold_used[j] {
            pred_used[i] = true;
            gold_used[j] = true;
            out.push((i, j, r));
        }
    }
    out
}

/// Most frequent polarity among `labels`, ties to the lower polarity code.
/// `O` tokens do not vote.
pub fn polarity_of_extraction(labels: &[usize], space: &LabelSpace) -> Option<Polarity> {
    let mut votes = [0usize; 3];
    for &l in labels {
        if let Some(p) = space.class(l).and_then(LabelClass::polarity) {
            votes[p.index()] += 1;
        }
    }
    let best = (0..3).rev().max_by_key(|&i| votes[i])?;
    (votes[best] > 0).then(|| Polarity::ALL[best])
}

/// Raw counts accumulated over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counts {
    /// `[tp, fp, fn]` per polarity class.
    pub per_class: [[usize; 3]; 3],
    pub extraction: [usize; 3],
    pub positive_extractions: usize,
    pub polarity_correct: usize,
    pub gold_targets: usize,
    pub predicted_targets: usize,
}

fn check_len(pred: &[usize], gold: &[usize]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Contract(format!(
            "prediction has {} labels but gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

/// Adds one question's outcome to `counts`.
pub fn count_example(counts: &mut Counts, pred: &[usize], gold: &[usize], space: &LabelSpace) -> Result<()> {
    check_len(pred, gold)?;
    let pred_spans = spans_from_labels(pred, space)?;
    let gold_spans = spans_from_labels(gold, space)?;
    let p_targets: Vec<Span> = pred_spans.iter().copied().filter(Span::is_target).collect();
    let g_targets: Vec<Span> = gold_spans.iter().copied().filter(Span::is_target).collect();
    let g_funcs: Vec<Span> = gold_spans.iter().copied().filter(Span::is_funcword).collect();
    counts.gold_targets += g_targets.len();
    counts.predicted_targets += p_targets.len();

    let matching = match_targets(&p_targets, &g_targets);
    let mut pred_matched = vec![false; p_targets.len()];
    let mut gold_matched = vec![false; g_targets.len()];
    for &(i, j, _) in &matching {
        pred_matched[i] = true;
        gold_matched[j] = true;
        let g = &g_targets[j];
        let gold_pol = g.polarity().expect("target polarity");
        let function_ok = space.task() == Task::Compat || function_word_hit(g, &g_funcs, pred, space);
        if !function_ok {
            counts.per_class[gold_pol.index()][2] += 1;
            counts.extraction[2] += 1;
            continue;
        }
        counts.extraction[0] += 1;
        counts.positive_extractions += 1;
        let p = &p_targets[i];
        let voted = polarity_of_extraction(&pred[p.start..p.end], space).expect("non-empty target");
        if voted == gold_pol {
            counts.per_class[gold_pol.index()][0] += 1;
            counts.polarity_correct += 1;
        } else {
            counts.per_class[gold_pol.index()][2] += 1;
        }
    }
    for (p, _) in p_targets.iter().zip(&pred_matched).filter(|(_, m)| !**m) {
        counts.per_class[p.polarity().expect("target polarity").index()][1] += 1;
        counts.extraction[1] += 1;
    }
    for (g, _) in g_targets.iter().zip(&gold_matched).filter(|(_, m)| !**m) {
        counts.per_class[g.polarity().expect("target polarity").index()][2] += 1;
        counts.extraction[2] += 1;
    }
    Ok(())
}

/// Whether the prediction labels some token of a gold function-word span
/// paired with `target` as a function word. True when there is none.
fn function_word_hit(target: &Span, gold_funcs: &[Span], pred: &[usize], space: &LabelSpace) -> bool {
    let paired: Vec<&Span> = gold_funcs
        .iter()
        .filter(|f| f.polarity() == target.polarity() && span_distance(target, f) <= PAIRING_WINDOW)
        .collect();
    if paired.is_empty() {
        return true;
    }
    paired.iter().any(|f| {
        pred[f.start..f.end]
            .iter()
            .any(|&l| matches!(space.class(l), Some(LabelClass::FuncWord(_))))
    })
}

fn score(pairs: &[(Vec<usize>, Vec<usize>)], space: &LabelSpace) -> Result<MetricsReport> {
    let mut counts = Counts::default();
    for (pred, gold) in pairs {
        count_example(&mut counts, pred, gold, space)?;
    }
    Ok(MetricsReport::from_counts(&counts, space))
}

/// Compatibility metrics over `(predicted, gold)` label sequences.
pub fn score_compat(pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<MetricsReport> {
    score(pairs, &LabelSpace::for_task(Task::Compat))
}

/// Satisfiability metrics over `(predicted, gold)` label sequences.
pub fn score_satisf(pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<MetricsReport> {
    score(pairs, &LabelSpace::for_task(Task::Satisf))
}

pub fn score_task(task: Task, pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<MetricsReport> {
    score(pairs, &LabelSpace::for_task(task))
}
