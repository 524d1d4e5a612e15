//! Templated QA pairs with known gold labels.
//!
//! Questions come from a handful of yes/no templates. Function words sit
//! next to a slot that is filled with an entity (or, for satisfiability, a
//! gerund phrase). Answers are drawn from polarity-keyed templates, many of
//! them implicit ("it runs fallout 4 very well") rather than a bare yes/no.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::QAPair;
use crate::model::{LabelClass, LabelSpace, Polarity, Task};
use crate::{Error, Result};

/// Target proportions of the three polarities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarityMix(pub [f64; 3]);

impl Default for PolarityMix {
    fn default() -> Self {
        PolarityMix([1.0 / 3.0; 3])
    }
}

impl PolarityMix {
    pub fn new(weights: [f64; 3]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "polarity mix {weights:?} must be non-negative and sum to 1"
            )));
        }
        Ok(PolarityMix(weights))
    }

    /// Exact per-class counts for `n` items by largest remainder.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let raw: Vec<f64> = self.0.iter().map(|w| w * n as f64).collect();
        let mut counts = [0usize; 3];
        for (c, r) in counts.iter_mut().zip(&raw) {
            *c = r.floor() as usize;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        let mut left = n - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

const ENTITIES: &[&str] = &[
    "iphone",
    "iphone 6",
    "ipad air",
    "galaxy s7",
    "google play app store",
    "fallout 4",
    "windows 10",
    "mac os",
    "linux",
    "xbox one",
    "ps4",
    "kindle fire",
    "macbook pro",
    "surface pro",
    "nintendo switch",
    "chromecast",
    "photoshop",
    "android",
    "my car stereo",
    "dell xps 13",
    "apple tv",
    "roku",
    "echo dot",
    "garmin gps",
];

const GERUNDS: &[&str] = &[
    "drawing pictures",
    "editing photos",
    "gaming",
    "video calls",
    "streaming movies",
    "taking notes",
    "reading books",
    "running",
    "recording music",
    "watching netflix",
    "charging two phones",
    "hiking",
];

const PARTS: &[&str] = &["charger", "cable", "adapter", "remote", "case"];

/// A question template: `F:` marks a function word, `<E>` an entity slot,
/// `<G>` a gerund slot and `<P>` a product part (labeled `O`).
struct Template {
    tokens: &'static [&'static str],
    satisf_only: bool,
}

const QUESTIONS: &[Template] = &[
    Template { tokens: &["does", "this", "F:work", "F:with", "<E>", "?"], satisf_only: false },
    Template { tokens: &["can", "it", "F:run", "<E>", "?"], satisf_only: false },
    Template { tokens: &["can", "you", "F:use", "this", "F:for", "<G>", "?"], satisf_only: true },
    Template { tokens: &["F:Works", "F:with", "<E>", "?"], satisf_only: false },
    Template { tokens: &["will", "it", "F:support", "<E>", "?"], satisf_only: false },
    Template { tokens: &["is", "it", "F:compatible", "F:with", "<E>", "?"], satisf_only: false },
    Template { tokens: &["does", "the", "<P>", "F:connect", "F:to", "<E>", "?"], satisf_only: false },
];

const POSITIVE: &[&str] = &[
    "Yes , it is",
    "yes it works great",
    "yes , works perfectly with my <E>",
    "it runs <E> very well",
    "I use it with my <E> every day and love it",
    "absolutely , no problems at all",
    "sure does",
    "works fine for me",
];

const NEGATIVE: &[&str] = &[
    "No",
    "no , it does not",
    "it struggles with <E>",
    "unfortunately it will not work with <E>",
    "sadly no , I returned it",
    "nope , does not fit",
    "it fails every time I try",
    "not compatible , do not buy",
];

const UNCERTAIN: &[&str] = &[
    "not sure",
    "I do not know , sorry",
    "maybe , check with the seller",
    "it depends on your <E>",
    "I have never tried it with <E>",
    "no idea , I only use it at home",
    "you would have to ask the manufacturer",
    "probably but I can not confirm",
];

fn answer_templates(p: Polarity) -> &'static [&'static str] {
    match p {
        Polarity::Positive => POSITIVE,
        Polarity::Negative => NEGATIVE,
        Polarity::Uncertain => UNCERTAIN,
    }
}

/// Whether `text` is one of the entity or gerund slot fillers.
#[cfg(test)]
pub(crate) fn is_lexicon_entry(text: &str) -> bool {
    ENTITIES.contains(&text) || GERUNDS.contains(&text)
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split_whitespace().map(str::to_string)
}

/// Generates `n` labeled pairs whose polarity counts follow `mix` exactly
/// (up to rounding) in a seeded random order.
pub fn synth_generate(n: usize, task: Task, seed: u64, mix: PolarityMix) -> Result<Vec<QAPair>> {
    if n == 0 {
        return Err(Error::Config("synthetic corpus size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = mix.counts(n);
    let mut polarities: Vec<Polarity> = Polarity::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&p, c)| std::iter::repeat(p).take(c))
        .collect();
    polarities.shuffle(&mut rng);

    let space = LabelSpace::for_task(task);
    let templates: Vec<&Template> = QUESTIONS
        .iter()
        .filter(|t| task == Task::Satisf || !t.satisf_only)
        .collect();

    let mut pairs = Vec::with_capacity(n);
    for (i, polarity) in polarities.into_iter().enumerate() {
        let template = templates[rng.gen_range(0..templates.len())];
        let entity = ENTITIES[rng.gen_range(0..ENTITIES.len())];
        let gerund = GERUNDS[rng.gen_range(0..GERUNDS.len())];
        let part = PARTS[rng.gen_range(0..PARTS.len())];
        let target_label = space.name(space.label_for(LabelClass::Target(polarity)).expect("target label")).unwrap();
        let func_label = match task {
            Task::Compat => "O",
            Task::Satisf => space
                .name(space.label_for(LabelClass::FuncWord(polarity)).expect("function-word label"))
                .unwrap(),
        };

        let mut question = Vec::new();
        let mut labels = Vec::new();
        for tok in template.tokens {
            let (fill, label) = match *tok {
                "<E>" => (entity, target_label),
                "<G>" => (gerund, target_label),
                "<P>" => (part, "O"),
                t if t.starts_with("F:") => (&t[2..], func_label),
                t => (t, "O"),
            };
            for w in words(fill) {
                question.push(w);
                labels.push(label.to_string());
            }
        }

        let answers = answer_templates(polarity);
        let answer_text = answers[rng.gen_range(0..answers.len())];
        let answer = words(answer_text)
            .flat_map(|w| {
                if w == "<E>" {
                    words(entity).collect::<Vec<_>>()
                } else {
                    vec![w]
                }
            })
            .collect();

        pairs.push(QAPair {
            id: format!("synth-{}-{seed}-{i}", task.as_str()),
            product_id: format!("P{:05}", rng.gen_range(0..100_000)),
            question_tokens: question,
            answer_tokens: answer,
            gold_labels: Some(labels),
            task,
        });
    }
    Ok(pairs)
}
