//! Turning per-token labels into spans and extraction tuples.
//!
//! A span is a maximal run of one non-`O` label. Satisfiability targets are
//! paired with every function-word span of the same polarity whose nearest
//! token is at most [`PAIRING_WINDOW`] positions away; function-word spans
//! left unpaired become tuples with an empty target.

use serde::{Deserialize, Serialize};

use super::labels::{LabelClass, LabelSpace, Polarity};
use crate::{Error, Result};

pub const PAIRING_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: usize,
    pub class: LabelClass,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn polarity(&self) -> Option<Polarity> {
        self.class.polarity()
    }

    pub fn is_target(&self) -> bool {
        matches!(self.class, LabelClass::Target(_))
    }

    pub fn is_funcword(&self) -> bool {
        matches!(self.class, LabelClass::FuncWord(_))
    }
}

/// Distance between the closest tokens of two spans (0 when they overlap).
pub fn span_distance(a: &Span, b: &Span) -> usize {
    if a.end <= b.start {
        b.start - (a.end - 1)
    } else if b.end <= a.start {
        a.start - (b.end - 1)
    } else {
        0
    }
}

/// Maximal runs of identical non-`O` labels.
pub fn label_spans(labels: &[usize], space: &LabelSpace) -> Result<Vec<Span>> {
    let mut spans: Vec<Span> = Vec::new();
    for (t, &label) in labels.iter().enumerate() {
        let class = space.class(label).ok_or_else(|| {
            Error::Contract(format!(
                "label index {label} at position {t} is outside the {} label space",
                space.task()
            ))
        })?;
        if class == LabelClass::Other {
            continue;
        }
        match spans.last_mut() {
            Some(s) if s.end == t && s.label == label => s.end += 1,
            _ => spans.push(Span {
                start: t,
                end: t + 1,
                label,
                class,
            }),
        }
    }
    Ok(spans)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// `(product, target, polarity)` with the function words supporting it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionTuple {
    pub product_id: String,
    /// Empty for a function expression without a recognised target.
    pub target_text: String,
    pub target: Option<TokenSpan>,
    pub function_words: Vec<TokenSpan>,
    pub polarity: Polarity,
}

fn token_span(tokens: &[String], s: &Span) -> TokenSpan {
    let end = s.end.min(tokens.len());
    let start = s.start.min(end);
    TokenSpan {
        text: tokens[start..end].join(" "),
        start: s.start,
        end: s.end,
    }
}

/// Decodes one question's labels into extraction tuples.
pub fn decode_tuples(
    labels: &[usize],
    tokens: &[String],
    product_id: &str,
    space: &LabelSpace,
) -> Result<Vec<ExtractionTuple>> {
    let spans = label_spans(labels, space)?;
    let (targets, funcs): (Vec<Span>, Vec<Span>) = spans.into_iter().partition(Span::is_target);
    let mut used = vec![false; funcs.len()];
    let mut tuples = Vec::new();
    for target in &targets {
        let polarity = target.polarity().expect("targets carry a polarity");
        let mut words = Vec::new();
        for (i, f) in funcs.iter().enumerate() {
            if f.polarity() == Some(polarity) && span_distance(target, f) <= PAIRING_WINDOW {
                used[i] = true;
                words.push(token_span(tokens, f));
            }
        }
        let target = token_span(tokens, target);
        tuples.push(ExtractionTuple {
            product_id: product_id.to_string(),
            target_text: target.text.clone(),
            target: Some(target),
            function_words: words,
            polarity,
        });
    }
    for (f, _) in funcs.iter().zip(&used).filter(|(_, u)| !**u) {
        tuples.push(ExtractionTuple {
            product_id: product_id.to_string(),
            target_text: String::new(),
            target: None,
            function_words: vec![token_span(tokens, f)],
            polarity: f.polarity().expect("function words carry a polarity"),
        });
    }
    Ok(tuples)
}

/// Rebuilds a label sequence of length `len` from decoded tuples.
pub fn labels_from_tuples(tuples: &[ExtractionTuple], len: usize, space: &LabelSpace) -> Result<Vec<usize>> {
    let mut labels = vec![LabelSpace::OTHER; len];
    let mut paint = |span: &TokenSpan, class: LabelClass| -> Result<()> {
        let label = space
            .label_for(class)
            .ok_or_else(|| Error::Contract(format!("{class:?} has no label in the {} space", space.task())))?;
        if span.end > len {
            return Err(Error::Contract(format!("span [{}, {}) exceeds length {len}", span.start, span.end)));
        }
        labels[span.start..span.end].iter_mut().for_each(|l| *l = label);
        Ok(())
    };
    for t in tuples {
        if let Some(target) = &t.target {
            paint(target, LabelClass::Target(t.polarity))?;
        }
        for f in &t.function_words {
            paint(f, LabelClass::FuncWord(t.polarity))?;
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::Task;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn idx(space: &LabelSpace, s: &str) -> Vec<usize> {
        s.split_whitespace().map(|l| space.index(l).unwrap()).collect()
    }

    #[test]
    fn all_other_decodes_to_nothing() {
        let space = LabelSpace::for_task(Task::Satisf);
        assert!(decode_tuples(&[0, 0, 0], &toks("a b c"), "p1", &space).unwrap().is_empty());
    }

    #[test]
    fn works_with_iphone() {
        let space = LabelSpace::for_task(Task::Satisf);
        let labels = idx(&space, "F-S F-S S O");
        let tuples = decode_tuples(&labels, &toks("Works with iphone ?"), "p1", &space).unwrap();
        assert_eq!(tuples.len(), 1);
        assert_eq!(tuples[0].target_text, "iphone");
        assert_eq!(tuples[0].function_words.len(), 1);
        assert_eq!(tuples[0].function_words[0].text, "Works with");
        assert_eq!(tuples[0].polarity, Polarity::Positive);

        let compat = LabelSpace::for_task(Task::Compat);
        let labels = idx(&compat, "O O C O");
        let tuples = decode_tuples(&labels, &toks("Works with iphone ?"), "p1", &compat).unwrap();
        assert_eq!(tuples[0].target_text, "iphone");
        assert!(tuples[0].function_words.is_empty());
    }

    #[test]
    fn google_play_store() {
        let q = toks("Does the surface pro 4 support the Google Play app store ?");
        let space = LabelSpace::for_task(Task::Satisf);
        let labels = idx(&space, "O O O O O F-UN O UN UN UN UN O");
        let tuples = decode_tuples(&labels, &q, "surface-pro-4", &space).unwrap();
        assert_eq!(tuples.len(), 1);
        assert_eq!(tuples[0].target_text, "Google Play app store");
        assert_eq!(tuples[0].polarity, Polarity::Negative);
        assert_eq!(tuples[0].function_words[0].text, "support");

        let compat = LabelSpace::for_task(Task::Compat);
        let labels = idx(&compat, "O O O O O O O I I I I O");
        let tuples = decode_tuples(&labels, &q, "surface-pro-4", &compat).unwrap();
        assert_eq!(tuples[0].target_text, "Google Play app store");
        assert_eq!(tuples[0].polarity.code(), 2);
    }

    #[test]
    fn pairing_rules() {
        let space = LabelSpace::for_task(Task::Satisf);
        // Window: distance 3 pairs, distance 4 does not.
        let labels = idx(&space, "F-S O O S");
        let t = decode_tuples(&labels, &toks("a b c d"), "p", &space).unwrap();
        assert_eq!(t.len(), 1);
        let labels = idx(&space, "F-S O O O S");
        let t = decode_tuples(&labels, &toks("a b c d e"), "p", &space).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].target_text, "");
        assert_eq!(t[1].target, None);
        // Polarity must agree.
        let labels = idx(&space, "F-UN S");
        let t = decode_tuples(&labels, &toks("a b"), "p", &space).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].function_words.is_empty());
    }

    #[test]
    fn runs_split_on_label_change() {
        let space = LabelSpace::for_task(Task::Compat);
        let spans = label_spans(&idx(&space, "C I"), &space).unwrap();
        assert_eq!(spans.len(), 2);
        let spans = label_spans(&idx(&space, "O C C O"), &space).unwrap();
        assert_eq!((spans[0].start, spans[0].end), (1, 3));
        assert!(label_spans(&[4], &space).is_err());
    }

    proptest! {
        #[test]
        fn decode_then_relabel_is_identity(
            satisf in any::<bool>(),
            raw in proptest::collection::vec(0usize..7, 0..20),
        ) {
            let task = if satisf { Task::Satisf } else { Task::Compat };
            let space = LabelSpace::for_task(task);
            let labels: Vec<usize> = raw.into_iter().map(|l| l % space.len()).collect();
            let tokens: Vec<String> = (0..labels.len()).map(|i| format!("w{i}")).collect();
            let tuples = decode_tuples(&labels, &tokens, "p", &space).unwrap();
            prop_assert_eq!(labels_from_tuples(&tuples, labels.len(), &space).unwrap(), labels);
        }
    }
}
