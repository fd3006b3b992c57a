//! Evaluation metrics: ROUGE-1/2/L, TF-IDF cosine, trigger-level F1 and the
//! pairwise judge harness with order swapping.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::TriggerState;
use crate::error::MetricsError;
use crate::hplanner::{build_judge_prompt, PromptOptions, PromptRequest, VlmBackend};

/// Lowercases, turns every non-alphanumeric character into a space and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScore {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }

    /// Precision `hits / predicted`, recall `hits / actual`, 0/0 as 0.
    pub fn from_counts(hits: usize, predicted: usize, actual: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        // 2pr/(p+r) reduces to 2h/(P+A); one division keeps it exactly rounded.
        Self {
            precision: ratio(hits, predicted),
            recall: ratio(hits, actual),
            f1: ratio(2 * hits, predicted + actual),
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap.
pub fn rouge_n(reference: &str, candidate: &str, n: usize) -> Result<PrfScore, MetricsError> {
    if n == 0 {
        return Err(MetricsError::NGramOrder(n));
    }
    let (r, c) = (tokenize(reference), tokenize(candidate));
    let (rc, cc) = (ngram_counts(&r, n), ngram_counts(&c, n));
    let overlap: usize = cc.iter().map(|(g, k)| (*k).min(rc.get(g).copied().unwrap_or(0))).sum();
    Ok(PrfScore::from_counts(overlap, cc.values().sum(), rc.values().sum()))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Longest-common-subsequence F-measure with equal weight on P and R.
pub fn rouge_l(reference: &str, candidate: &str) -> PrfScore {
    let (r, c) = (tokenize(reference), tokenize(candidate));
    PrfScore::from_counts(lcs_len(&r, &c), c.len(), r.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub reference: String,
    pub candidate: String,
}

/// Cosine similarity of each pair under TF-IDF weights fitted on the batch.
///
/// Every reference and every candidate is one document. Weights are raw
/// term counts times `ln((1 + docs) / (1 + df)) + 1`. Scores follow the
/// order of `pairs`; a pair with an empty side scores 0.
pub fn tfidf_similarity(pairs: &[EvalPair]) -> Result<Vec<f64>, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let docs: Vec<Vec<String>> = pairs
        .iter()
        .flat_map(|p| [tokenize(&p.reference), tokenize(&p.candidate)])
        .collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in &docs {
        let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let n_docs = docs.len() as f64;
    let idf = |t: &str| ((1.0 + n_docs) / (1.0 + df[t] as f64)).ln() + 1.0;
    // BTreeMap keeps summation order fixed, so scores are reproducible.
    fn weighted<'a>(doc: &'a [String], idf: &dyn Fn(&str) -> f64) -> BTreeMap<&'a str, f64> {
        let mut v: BTreeMap<&str, f64> = BTreeMap::new();
        for t in doc {
            *v.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
        for (t, w) in v.iter_mut() {
            *w *= idf(t);
        }
        v
    }
    Ok(docs
        .chunks(2)
        .map(|pair| {
            let (a, b) = (weighted(&pair[0], &idf), weighted(&pair[1], &idf));
            let norm = |v: &BTreeMap<&str, f64>| v.values().map(|w| w * w).sum::<f64>().sqrt();
            let (na, nb) = (norm(&a), norm(&b));
            if na == 0.0 || nb == 0.0 {
                return 0.0;
            }
            // Folding from +0.0 keeps disjoint pairs at 0 rather than -0.
            let dot = a.iter().filter_map(|(t, w)| b.get(t).map(|u| w * u)).fold(0.0, |acc, x| acc + x);
            (dot / (na * nb)).clamp(0.0, 1.0)
        })
        .collect())
}

/// ROUGE and TF-IDF scores for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub id: String,
    pub rouge1: PrfScore,
    pub rouge2: PrfScore,
    pub rouge_l: PrfScore,
    pub tfidf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextReport {
    pub pairs: Vec<PairScores>,
    /// Means of the per-pair F1 values and TF-IDF cosines.
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rouge_l_f1: f64,
    pub tfidf: f64,
}

pub fn evaluate_text(pairs: &[EvalPair]) -> Result<TextReport, MetricsError> {
    for p in pairs {
        if p.reference.trim().is_empty() {
            return Err(MetricsError::EmptyReference(p.id.clone()));
        }
    }
    let tfidf = tfidf_similarity(pairs)?;
    let scores: Vec<PairScores> = pairs
        .iter()
        .zip(tfidf)
        .map(|(p, tfidf)| PairScores {
            id: p.id.clone(),
            rouge1: rouge_n(&p.reference, &p.candidate, 1).expect("order 1"),
            rouge2: rouge_n(&p.reference, &p.candidate, 2).expect("order 2"),
            rouge_l: rouge_l(&p.reference, &p.candidate),
            tfidf,
        })
        .collect();
    let mean = |f: fn(&PairScores) -> f64| scores.iter().map(f).sum::<f64>() / scores.len() as f64;
    Ok(TextReport {
        rouge1_f1: mean(|s| s.rouge1.f1),
        rouge2_f1: mean(|s| s.rouge2.f1),
        rouge_l_f1: mean(|s| s.rouge_l.f1),
        tfidf: mean(|s| s.tfidf),
        pairs: scores,
    })
}

/// `counts[gt][pred]` over the three levels.
pub fn confusion_matrix(
    predictions: &[TriggerState],
    ground_truth: &[TriggerState],
) -> Result<[[usize; 3]; 3], MetricsError> {
    if predictions.len() != ground_truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            ground_truth: ground_truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let mut m = [[0usize; 3]; 3];
    for (p, g) in predictions.iter().zip(ground_truth) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    /// Unweighted mean of the per-level F1 values.
    #[default]
    Macro,
    /// F1 of pooled counts, which equals accuracy for single-label data.
    Micro,
}

/// Per-level scores from a confusion matrix, indexed Low, Mid, High.
pub fn per_level_scores(m: &[[usize; 3]; 3]) -> [PrfScore; 3] {
    std::array::from_fn(|k| {
        let predicted: usize = (0..3).map(|g| m[g][k]).sum();
        let actual: usize = m[k].iter().sum();
        PrfScore::from_counts(m[k][k], predicted, actual)
    })
}

pub fn trf_f1(
    predictions: &[TriggerState],
    ground_truth: &[TriggerState],
    average: F1Average,
) -> Result<f64, MetricsError> {
    let m = confusion_matrix(predictions, ground_truth)?;
    Ok(match average {
        F1Average::Macro => per_level_scores(&m).iter().map(|s| s.f1).sum::<f64>() / 3.0,
        F1Average::Micro => {
            let hits: usize = (0..3).map(|k| m[k][k]).sum();
            PrfScore::from_counts(hits, predictions.len(), predictions.len()).f1
        }
    })
}

pub fn trf_macro_f1(predictions: &[TriggerState], ground_truth: &[TriggerState]) -> Result<f64, MetricsError> {
    trf_f1(predictions, ground_truth, F1Average::Macro)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    A,
    B,
    Invalid,
}

/// `A` iff the reply contains `[[A]]` but not `[[B]]`, and symmetrically.
pub fn parse_verdict(reply: &str) -> Verdict {
    match (reply.contains("[[A]]"), reply.contains("[[B]]")) {
        (true, false) => Verdict::A,
        (false, true) => Verdict::B,
        _ => Verdict::Invalid,
    }
}

/// Judge prompt showing `answer_a` as assistant A.
pub fn judge_pair(
    ground_truth: &str,
    answer_a: &str,
    answer_b: &str,
    opts: &PromptOptions,
) -> Result<PromptRequest, MetricsError> {
    for (name, text) in [("ground truth", ground_truth), ("answer A", answer_a), ("answer B", answer_b)] {
        if text.trim().is_empty() {
            return Err(MetricsError::EmptyText(name));
        }
    }
    build_judge_prompt(ground_truth, answer_a, answer_b, opts).map_err(|e| MetricsError::Prompt(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeSample {
    pub ground_truth: String,
    pub answer_a: String,
    pub answer_b: String,
}

/// One judged ordering of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub sample: usize,
    /// True when `answer_b` was shown in the A position.
    pub swapped: bool,
    pub verdict: Verdict,
    /// Which sample answer won, if any.
    pub winner: Option<Verdict>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GptScoreReport {
    /// `None` when every comparison was invalid.
    pub win_rate_a: Option<f64>,
    pub win_rate_b: Option<f64>,
    pub invalid_count: usize,
    pub comparisons: Vec<Comparison>,
}

/// Judges every sample twice, once per presentation order, and reports how
/// often each side wins among valid verdicts. A backend failure marks that
/// comparison invalid and is kept in the report.
pub fn gpt_score(
    samples: &[JudgeSample],
    backend: &dyn VlmBackend,
    opts: &PromptOptions,
    timeout_ms: u64,
) -> Result<GptScoreReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let mut comparisons = Vec::with_capacity(samples.len() * 2);
    for (i, s) in samples.iter().enumerate() {
        for swapped in [false, true] {
            let (first, second) = if swapped {
                (&s.answer_b, &s.answer_a)
            } else {
                (&s.answer_a, &s.answer_b)
            };
            let req = judge_pair(&s.ground_truth, first, second, opts)?;
            let (verdict, error) = match backend.complete(&req, timeout_ms) {
                Ok(reply) => (parse_verdict(&reply), None),
                Err(e) => (Verdict::Invalid, Some(e.to_string())),
            };
            let winner = match (verdict, swapped) {
                (Verdict::Invalid, _) => None,
                (v, false) => Some(v),
                (Verdict::A, true) => Some(Verdict::B),
                (Verdict::B, true) => Some(Verdict::A),
            };
            comparisons.push(Comparison {
                sample: i,
                swapped,
                verdict,
                winner,
                error,
            });
        }
    }
    let wins = |side| comparisons.iter().filter(|c| c.winner == Some(side)).count();
    let (wa, wb) = (wins(Verdict::A), wins(Verdict::B));
    let counted = wa + wb;
    let rate = |w: usize| (counted > 0).then(|| w as f64 / counted as f64);
    Ok(GptScoreReport {
        win_rate_a: rate(wa),
        win_rate_b: rate(wb),
        invalid_count: comparisons.len() - counted,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TriggerState::{High, Low, Mid};
    use crate::error::BackendError;
    use crate::hplanner::MockBackend;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Turn LEFT, now!"), ["turn", "left", "now"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("10 o'clock"), ["10", "o", "clock"]);
    }

    #[test]
    fn rouge_examples() {
        let (r, c) = ("turn left at the corner", "turn right at the corner");
        let one = rouge_n(r, c, 1).unwrap();
        assert!(close(one.precision, 0.8) && close(one.recall, 0.8) && close(one.f1, 0.8));
        let two = rouge_n(r, c, 2).unwrap();
        assert!(close(two.f1, 0.5));
        let l = rouge_l("the cat sat on the mat", "the cat on the mat");
        assert!(close(l.precision, 1.0) && close(l.recall, 5.0 / 6.0) && close(l.f1, 10.0 / 11.0));
        assert_eq!(rouge_l("a b", "c d"), PrfScore::default());
        assert!(matches!(rouge_n(r, c, 0), Err(MetricsError::NGramOrder(0))));
    }

    #[test]
    fn clipping_limits_repeated_words() {
        // Candidate repeats "the" four times, reference has it twice.
        let s = rouge_n("the cat and the dog", "the the the the", 1).unwrap();
        assert!(close(s.precision, 2.0 / 4.0) && close(s.recall, 2.0 / 5.0));
    }

    #[test]
    fn tfidf_edges() {
        let pair = |id: &str, r: &str, c: &str| EvalPair {
            id: id.into(),
            reference: r.into(),
            candidate: c.into(),
        };
        let s = tfidf_similarity(&[pair("1", "stop at the curb", "stop at the curb"), pair("2", "red car", "blue bus")])
            .unwrap();
        assert!((s[0] - 1.0).abs() < 1e-9);
        assert_eq!(s[1], 0.0);
        assert_eq!(tfidf_similarity(&[]), Err(MetricsError::EmptyBatch));
        assert_eq!(tfidf_similarity(&[pair("x", "word", "!!")]).unwrap(), vec![0.0]);
    }

    #[test]
    fn new_vocabulary_document_can_raise_scores() {
        // A common shared word and rare distinct words: adding unrelated
        // documents flattens the idf weights, so the shared word gains weight.
        let pair = |r: &str, c: &str| EvalPair {
            id: String::new(),
            reference: r.into(),
            candidate: c.into(),
        };
        let base = vec![pair("go b", "go c"), pair("go", "go"), pair("go", "go")];
        let before = tfidf_similarity(&base).unwrap()[0];
        let mut grown = base.clone();
        grown.push(pair("zebra", "yak"));
        let after = tfidf_similarity(&grown).unwrap()[0];
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn trf_examples() {
        assert_eq!(trf_macro_f1(&[Low, Mid, High], &[Low, Mid, High]).unwrap(), 1.0);
        assert_eq!(trf_macro_f1(&[Mid, High, Low], &[Low, Mid, High]).unwrap(), 0.0);
        // Two per class, one error each: every level has P = R = 1/2.
        let gt = [Low, Low, Mid, Mid, High, High];
        let pred = [Low, Mid, Mid, High, High, Low];
        assert!(close(trf_macro_f1(&pred, &gt).unwrap(), 0.5));
        assert!(close(trf_f1(&pred, &gt, F1Average::Micro).unwrap(), 0.5));
        assert!(matches!(trf_macro_f1(&[Low], &[]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("My final verdict: [[A]]"), Verdict::A);
        assert_eq!(parse_verdict("[[B]]"), Verdict::B);
        assert_eq!(parse_verdict("[[A]] or maybe [[B]]"), Verdict::Invalid);
        assert_eq!(parse_verdict("A"), Verdict::Invalid);
    }

    struct Failing;
    impl VlmBackend for Failing {
        fn complete(&self, _: &PromptRequest, ms: u64) -> Result<String, BackendError> {
            Err(BackendError::Timeout(ms))
        }
    }

    #[test]
    fn failures_are_invalid_comparisons() {
        let s = JudgeSample {
            ground_truth: "go".into(),
            answer_a: "a".into(),
            answer_b: "b".into(),
        };
        let r = gpt_score(&[s.clone(), s], &Failing, &PromptOptions::default(), 5).unwrap();
        assert_eq!((r.win_rate_a, r.win_rate_b, r.invalid_count), (None, None, 4));
        assert!(r.comparisons[0].error.as_deref().unwrap().contains("timed out"));
        let biased = gpt_score(
            &[JudgeSample {
                ground_truth: "g".into(),
                answer_a: "x".into(),
                answer_b: "y".into(),
            }],
            &MockBackend::constant("[[A]]"),
            &PromptOptions::default(),
            5,
        )
        .unwrap();
        assert_eq!((biased.win_rate_a, biased.win_rate_b), (Some(0.5), Some(0.5)));
    }

    proptest! {
        #[test]
        fn self_overlap_is_perfect(words in proptest::collection::vec("[a-z0-9]{1,6}", 2..12)) {
            let text = words.join(" ");
            for n in 1..=2 {
                let s = rouge_n(&text, &text, n).unwrap();
                prop_assert!(close(s.f1, 1.0));
            }
            prop_assert!(close(rouge_l(&text, &text).f1, 1.0));
        }

        #[test]
        fn scores_are_bounded_and_swap(r in "[a-d ]{0,30}", c in "[a-d ]{0,30}") {
            for n in 1..=2 {
                let fwd = rouge_n(&r, &c, n).unwrap();
                let back = rouge_n(&c, &r, n).unwrap();
                prop_assert_eq!(fwd.precision, back.recall);
                prop_assert_eq!(fwd.recall, back.precision);
                for v in [fwd.precision, fwd.recall, fwd.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            let l = rouge_l(&r, &c);
            prop_assert!((0.0..=1.0).contains(&l.f1));
            let pr = PrfScore::from_pr(l.precision, l.recall);
            prop_assert_eq!((pr.precision, pr.recall), (l.precision, l.recall));
            prop_assert!((pr.f1 - l.f1).abs() <= 1e-15, "{pr:?} vs {l:?}");
        }

        #[test]
        fn tfidf_is_bounded_and_order_free(texts in proptest::collection::vec(("[a-e ]{0,20}", "[a-e ]{0,20}"), 1..6), rot in 0usize..6) {
            let pairs: Vec<EvalPair> = texts.iter().enumerate().map(|(i, (r, c))| EvalPair { id: i.to_string(), reference: r.clone(), candidate: c.clone() }).collect();
            let scores = tfidf_similarity(&pairs).unwrap();
            prop_assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let again = tfidf_similarity(&rotated).unwrap();
            for (p, s) in rotated.iter().zip(again) {
                let i: usize = p.id.parse().unwrap();
                prop_assert!((scores[i] - s).abs() < 1e-12);
            }
        }

        #[test]
        fn trf_is_bounded(pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..50)) {
            let pred: Vec<TriggerState> = pairs.iter().map(|p| TriggerState::from_index(p.0).unwrap()).collect();
            let gt: Vec<TriggerState> = pairs.iter().map(|p| TriggerState::from_index(p.1).unwrap()).collect();
            for avg in [F1Average::Macro, F1Average::Micro] {
                let f = trf_f1(&pred, &gt, avg).unwrap();
                prop_assert!((0.0..=1.0).contains(&f));
            }
            prop_assert!(close(trf_macro_f1(&gt, &gt).unwrap(), 1.0) || gt.iter().collect::<std::collections::BTreeSet<_>>().len() < 3);
        }
    }
}
