//! A deliberately naive second implementation of the evaluation protocol,
//! written against label strings and token sets only. It shares no code
//! with the library's scorer and is used as an oracle.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;

#[derive(Debug, Clone)]
struct RefSpan {
    tokens: BTreeSet<usize>,
    first: usize,
    polarity: usize,
    function_word: bool,
}

/// `(polarity 1..=3, is function word)` for a non-`O` label string.
fn describe(label: &str) -> Option<(usize, bool)> {
    match label {
        "C" | "S" => Some((1, false)),
        "I" | "UN" => Some((2, false)),
        "U" => Some((3, false)),
        "F-S" => Some((1, true)),
        "F-UN" => Some((2, true)),
        "F-U" => Some((3, true)),
        _ => None,
    }
}

fn spans(labels: &[String]) -> Vec<RefSpan> {
    let mut out: Vec<RefSpan> = Vec::new();
    let mut prev: Option<&str> = None;
    for (t, l) in labels.iter().enumerate() {
        match describe(l) {
            None => prev = None,
            Some((polarity, function_word)) => {
                if prev == Some(l.as_str()) {
                    out.last_mut().unwrap().tokens.insert(t);
                } else {
                    out.push(RefSpan {
                        tokens: BTreeSet::from([t]),
                        first: t,
                        polarity,
                        function_word,
                    });
                }
                prev = Some(l.as_str());
            }
        }
    }
    out
}

fn min_distance(a: &RefSpan, b: &RefSpan) -> usize {
    let mut best = usize::MAX;
    for &i in &a.tokens {
        for &j in &b.tokens {
            best = best.min(i.abs_diff(j));
        }
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefCounts {
    pub per_class: [[usize; 3]; 3],
    pub extraction: [usize; 3],
    pub positive: usize,
    pub correct_polarity: usize,
    pub gold_targets: usize,
    pub predicted_targets: usize,
}

/// Scores one question. `satisf` switches the function-word requirement on.
pub fn count(c: &mut RefCounts, pred: &[String], gold: &[String], satisf: bool) {
    let p_all = spans(pred);
    let g_all = spans(gold);
    let p: Vec<&RefSpan> = p_all.iter().filter(|s| !s.function_word).collect();
    let g: Vec<&RefSpan> = g_all.iter().filter(|s| !s.function_word).collect();
    let gf: Vec<&RefSpan> = g_all.iter().filter(|s| s.function_word).collect();
    c.gold_targets += g.len();
    c.predicted_targets += p.len();

    // Repeatedly take the best remaining qualifying pair.
    let mut p_free = vec![true; p.len()];
    let mut g_free = vec![true; g.len()];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(usize, usize, usize, usize)> = None; // (i, j, overlap, gold len)
        for i in 0..p.len() {
            for j in 0..g.len() {
                if !p_free[i] || !g_free[j] {
                    continue;
                }
                let ov = p[i].tokens.intersection(&g[j].tokens).count();
                let glen = g[j].tokens.len();
                if 2 * ov < glen {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj, bov, bglen)) => {
                        let lhs = ov * bglen;
                        let rhs = bov * glen;
                        lhs > rhs
                            || (lhs == rhs && p[i].first < p[bi].first)
                            || (lhs == rhs && p[i].first == p[bi].first && g[j].first < g[bj].first)
                    }
                };
                if better {
                    best = Some((i, j, ov, glen));
                }
            }
        }
        let Some((i, j, _, _)) = best else { break };
        p_free[i] = false;
        g_free[j] = false;
        pairs.push((i, j));
    }

    for &(i, j) in &pairs {
        let gold_pol = g[j].polarity;
        let mut ok = true;
        if satisf {
            let paired: Vec<&&RefSpan> = gf
                .iter()
                .filter(|f| f.polarity == gold_pol && min_distance(f, g[j]) <= 3)
                .collect();
            if !paired.is_empty() {
                ok = paired
                    .iter()
                    .any(|f| f.tokens.iter().any(|&t| pred[t].starts_with("F-")));
            }
        }
        if !ok {
            c.per_class[gold_pol - 1][2] += 1;
            c.extraction[2] += 1;
            continue;
        }
        c.positive += 1;
        c.extraction[0] += 1;
        let mut votes = [0; 4];
        for &t in &p[i].tokens {
            if let Some((pol, _)) = describe(&pred[t]) {
                votes[pol] += 1;
            }
        }
        let mut voted = 1;
        for pol in 2..=3 {
            if votes[pol] > votes[voted] {
                voted = pol;
            }
        }
        if voted == gold_pol {
            c.per_class[gold_pol - 1][0] += 1;
            c.correct_polarity += 1;
        } else {
            c.per_class[gold_pol - 1][2] += 1;
        }
    }
    for i in 0..p.len() {
        if p_free[i] {
            c.per_class[p[i].polarity - 1][1] += 1;
            c.extraction[1] += 1;
        }
    }
    for j in 0..g.len() {
        if g_free[j] {
            c.per_class[g[j].polarity - 1][2] += 1;
            c.extraction[2] += 1;
        }
    }
}

pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefReport {
    pub counts: RefCounts,
    pub avg_f1: f64,
    pub extraction_f1: f64,
    pub polarity_acc: f64,
}

pub fn score(cases: &[(Vec<String>, Vec<String>)], satisf: bool) -> RefReport {
    let mut c = RefCounts::default();
    for (pred, gold) in cases {
        count(&mut c, pred, gold, satisf);
    }
    let avg_f1 = c.per_class.iter().map(|k| f1(k[0], k[1], k[2])).sum::<f64>() / 3.0;
    let extraction_f1 = f1(c.extraction[0], c.extraction[1], c.extraction[2]);
    let polarity_acc = if c.positive > 0 {
        c.correct_polarity as f64 / c.positive as f64
    } else if c.gold_targets == 0 && c.predicted_targets == 0 {
        1.0
    } else {
        0.0
    };
    RefReport {
        counts: c,
        avg_f1,
        extraction_f1,
        polarity_acc,
    }
}

/// Random labeled question with at most `max_spans` spans.
pub fn random_labels(rng: &mut impl Rng, len: usize, satisf: bool, max_spans: usize) -> Vec<String> {
    let targets: &[&str] = if satisf { &["S", "UN", "U"] } else { &["C", "I", "U"] };
    let funcs: &[&str] = &["F-S", "F-UN", "F-U"];
    let mut labels = vec!["O".to_string(); len];
    let n = rng.gen_range(0..=max_spans);
    for _ in 0..n {
        let start = rng.gen_range(0..len);
        let end = (start + rng.gen_range(1..=4)).min(len);
        let pool = if satisf && rng.gen_bool(0.4) { funcs } else { targets };
        let label = pool[rng.gen_range(0..pool.len())];
        for l in &mut labels[start..end] {
            *l = label.to_string();
        }
    }
    // Overwrites can fragment spans; trim back to the span budget.
    while spans(&labels).len() > max_spans {
        let s = spans(&labels).pop().unwrap();
        for t in s.tokens {
            labels[t] = "O".into();
        }
    }
    labels
}

/// A prediction derived from `gold` by boundary shifts, polarity flips,
/// deletions and insertions, so that matches, half-overlaps and misses all
/// occur frequently.
pub fn perturb(rng: &mut impl Rng, gold: &[String], satisf: bool, max_spans: usize) -> Vec<String> {
    let mut pred = gold.to_vec();
    let len = pred.len();
    for t in 0..len {
        if rng.gen_bool(0.15) {
            pred[t] = "O".into();
        }
    }
    for t in 0..len {
        if pred[t] != "O" && rng.gen_bool(0.15) {
            let flips: &[&str] = match (satisf, pred[t].starts_with("F-")) {
                (_, true) => &["F-S", "F-UN", "F-U"],
                (true, false) => &["S", "UN", "U"],
                (false, false) => &["C", "I", "U"],
            };
            pred[t] = flips[rng.gen_range(0..flips.len())].to_string();
        }
    }
    if rng.gen_bool(0.3) {
        let extra = random_labels(rng, len, satisf, 2);
        for t in 0..len {
            if extra[t] != "O" && pred[t] == "O" {
                pred[t] = extra[t].clone();
            }
        }
    }
    while spans(&pred).len() > max_spans {
        let s = spans(&pred).pop().unwrap();
        for t in s.tokens {
            pred[t] = "O".into();
        }
    }
    pred
}

/// `n` random (prediction, gold) cases, each side with at most 5 spans.
pub fn random_cases(rng: &mut impl Rng, n: usize, satisf: bool) -> Vec<(Vec<String>, Vec<String>)> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=14);
            let gold = random_labels(rng, len, satisf, 5);
            let pred = if rng.gen_bool(0.8) {
                perturb(rng, &gold, satisf, 5)
            } else {
                random_labels(rng, len, satisf, 5)
            };
            (pred, gold)
        })
        .collect()
}

/// Hand-built cases that pin the 50% boundary and the missing-function-word
/// clause.
pub fn boundary_cases(satisf: bool) -> Vec<(Vec<String>, Vec<String>)> {
    let v = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    if satisf {
        vec![
            (v("O O S O"), v("O O S O")),
            (v("O O S O"), v("F-S F-S S O")),
            (v("O F-U S O"), v("F-S F-S S O")),
            (v("O S O O"), v("O S S O")),
            (v("O S O O O"), v("O S S S O")),
        ]
    } else {
        vec![
            (v("O C O O"), v("O C C O")),
            (v("O C O O O"), v("O C C C O")),
            (v("O I I O"), v("O C C O")),
            (v("C O U O"), v("O O O O")),
        ]
    }
}
