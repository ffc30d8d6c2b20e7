//! Recognition, VQA and captioning metrics. All values are percentages.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::dataset::Choice;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Positive,
    Other,
    HardNegative,
    Fake,
}

impl Split {
    pub const NEGATIVE: [Split; 3] = [Split::Other, Split::HardNegative, Split::Fake];
}

/// Whether the object was predicted present in one validation image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecognitionOutcome {
    pub image: String,
    pub split: Split,
    pub predicted_present: bool,
}

impl RecognitionOutcome {
    pub fn new(image: impl Into<String>, split: Split, predicted_present: bool) -> Self {
        Self {
            image: image.into(),
            split,
            predicted_present,
        }
    }

    pub fn ground_truth_present(&self) -> bool {
        self.split == Split::Positive
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectOutcomes {
    pub object_id: String,
    pub outcomes: Vec<RecognitionOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NegativeAccuracy {
    pub other: Option<f64>,
    pub hard: Option<f64>,
    pub fake: Option<f64>,
    pub pooled: f64,
}

impl NegativeAccuracy {
    fn get(&self, split: Split) -> Option<f64> {
        match split {
            Split::Other => self.other,
            Split::HardNegative => self.hard,
            Split::Fake => self.fake,
            Split::Positive => None,
        }
    }

    fn slot(&mut self, split: Split) -> &mut Option<f64> {
        match split {
            Split::Other => &mut self.other,
            Split::HardNegative => &mut self.hard,
            Split::Fake => &mut self.fake,
            Split::Positive => unreachable!("positive is not a negative split"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub object_id: String,
    pub true_positives: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub positive_acc: f64,
    pub negative_acc_by_split: NegativeAccuracy,
    pub weighted_acc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personalization_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub positive_acc: f64,
    pub negative_acc_by_split: NegativeAccuracy,
    pub weighted_acc: f64,
    pub avg_visual_recognition: f64,
    pub vqa_acc: Option<f64>,
    pub personalization_recall: Option<f64>,
    pub per_object: Vec<ObjectMetrics>,
}

fn pct(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Midpoint of recall and pooled specificity.
pub fn weighted_accuracy(positive_acc: f64, pooled_negative_acc: f64) -> f64 {
    (positive_acc + pooled_negative_acc) / 2.0
}

/// Mean of precision, positive accuracy and whichever negative splits exist.
pub fn average_visual_recognition(precision: f64, positive_acc: f64, negatives: &NegativeAccuracy) -> f64 {
    let mut cols = vec![precision, positive_acc];
    cols.extend(Split::NEGATIVE.iter().filter_map(|&s| negatives.get(s)));
    mean(&cols).expect("at least two columns")
}

fn object_metrics(o: &ObjectOutcomes) -> Result<ObjectMetrics, EvalError> {
    let (mut tp, mut fn_) = (0, 0);
    let mut neg = [(0usize, 0usize); 3]; // (true negatives, total) per negative split
    for out in &o.outcomes {
        match out.split {
            Split::Positive if out.predicted_present => tp += 1,
            Split::Positive => fn_ += 1,
            s => {
                let k = Split::NEGATIVE.iter().position(|&n| n == s).unwrap();
                neg[k].1 += 1;
                if !out.predicted_present {
                    neg[k].0 += 1;
                }
            }
        }
    }
    if tp + fn_ == 0 {
        return Err(EvalError::NoPositives(o.object_id.clone()));
    }
    let tn: usize = neg.iter().map(|n| n.0).sum();
    let n_neg: usize = neg.iter().map(|n| n.1).sum();
    if n_neg == 0 {
        return Err(EvalError::NoNegatives(o.object_id.clone()));
    }
    let fp = n_neg - tn;
    let mut negatives = NegativeAccuracy {
        pooled: pct(tn, n_neg),
        ..Default::default()
    };
    for (k, &split) in Split::NEGATIVE.iter().enumerate() {
        if neg[k].1 > 0 {
            *negatives.slot(split) = Some(pct(neg[k].0, neg[k].1));
        }
    }
    let positive_acc = pct(tp, tp + fn_);
    Ok(ObjectMetrics {
        object_id: o.object_id.clone(),
        true_positives: tp,
        false_negatives: fn_,
        false_positives: fp,
        true_negatives: tn,
        precision: if tp + fp == 0 { 100.0 } else { pct(tp, tp + fp) },
        positive_acc,
        negative_acc_by_split: negatives,
        weighted_acc: weighted_accuracy(positive_acc, negatives.pooled),
        personalization_recall: None,
    })
}

/// Macro-averages per-object precision, recall and specificity. A negative
/// split is averaged over the objects that have it and left out when none do.
pub fn recognition_metrics(objects: &[ObjectOutcomes]) -> Result<MetricsReport, EvalError> {
    if objects.is_empty() {
        return Err(EvalError::NoObjects);
    }
    let per_object = objects.iter().map(object_metrics).collect::<Result<Vec<_>, _>>()?;
    let avg = |f: &dyn Fn(&ObjectMetrics) -> Option<f64>| {
        mean(&per_object.iter().filter_map(f).collect::<Vec<_>>())
    };
    let precision = avg(&|m| Some(m.precision)).unwrap();
    let positive_acc = avg(&|m| Some(m.positive_acc)).unwrap();
    let negatives = NegativeAccuracy {
        other: avg(&|m| m.negative_acc_by_split.other),
        hard: avg(&|m| m.negative_acc_by_split.hard),
        fake: avg(&|m| m.negative_acc_by_split.fake),
        pooled: avg(&|m| Some(m.negative_acc_by_split.pooled)).unwrap(),
    };
    Ok(MetricsReport {
        precision,
        positive_acc,
        negative_acc_by_split: negatives,
        weighted_acc: weighted_accuracy(positive_acc, negatives.pooled),
        avg_visual_recognition: average_visual_recognition(precision, positive_acc, &negatives),
        vqa_acc: None,
        personalization_recall: None,
        per_object,
    })
}

static CHOICE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b([ab])\b").unwrap());

/// First standalone "A" or "B" in the answer, case-insensitive.
pub fn parse_choice(answer: &str) -> Option<Choice> {
    CHOICE.captures(answer).and_then(|c| Choice::parse(&c[1]))
}

pub fn vqa_accuracy<S: AsRef<str>>(answers: &[S], gold: &[Choice]) -> Result<f64, EvalError> {
    if answers.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            answers: answers.len(),
            gold: gold.len(),
        });
    }
    if answers.is_empty() {
        return Err(EvalError::NoVqaItems);
    }
    let correct = answers
        .iter()
        .zip(gold)
        .filter(|(a, g)| parse_choice(a.as_ref()) == Some(**g))
        .count();
    Ok(pct(correct, gold.len()))
}

/// Lowercases, folds apostrophe variants to `'` and collapses whitespace.
pub fn normalize_text(s: &str) -> String {
    let folded: String = s
        .chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '\u{02BC}' | '`' | '\u{00B4}' | '\u{FF07}' => '\'',
            c => c,
        })
        .collect::<String>()
        .to_lowercase();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn caption_mentions(caption: &str, name: &str) -> bool {
    let name = normalize_text(name);
    !name.is_empty() && normalize_text(caption).contains(&name)
}

/// Share of captions naming the object.
pub fn object_personalization_recall<S: AsRef<str>>(name: &str, captions: &[S]) -> Option<f64> {
    if captions.is_empty() {
        return None;
    }
    let hits = captions.iter().filter(|c| caption_mentions(c.as_ref(), name)).count();
    Some(pct(hits, captions.len()))
}

/// Macro average of [`object_personalization_recall`] over objects that
/// have captions.
pub fn personalization_recall<S: AsRef<str>>(per_object: &[(&str, Vec<S>)]) -> Option<f64> {
    let values: Vec<f64> = per_object
        .iter()
        .filter_map(|(name, caps)| object_personalization_recall(name, caps))
        .collect();
    mean(&values)
}

/// Rounds half away from zero at `decimals` places, absorbing binary
/// representation error so that e.g. 96.35 becomes 96.4.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = x * scale;
    (scaled + 1e-9 * scaled.signum()).round() / scale
}

fn fixed(v: f64, decimals: usize) -> String {
    format!("{:.*}", decimals, round_half_up(v, decimals as i32))
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| fixed(v, 1)).unwrap_or_else(|| "-".into())
}

/// Plain-text rendering in the usual column order.
pub fn render_table(r: &MetricsReport) -> String {
    use std::fmt::Write;
    let n = &r.negative_acc_by_split;
    let mut s = String::new();
    let _ = writeln!(s, "{:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "Precision", "Positive", "Other", "Hard", "Fake", "Avg.");
    let _ = writeln!(
        s,
        "{:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        cell(Some(r.precision)),
        cell(Some(r.positive_acc)),
        cell(n.other),
        cell(n.hard),
        cell(n.fake),
        fixed(r.avg_visual_recognition, 2)
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>9} {:>9} {:>9} {:>9} {:>9}", "Positive", "Negative", "Weighted", "VQA", "Recall");
    let _ = writeln!(
        s,
        "{:>9} {:>9} {:>9} {:>9} {:>9}",
        cell(Some(r.positive_acc)),
        cell(Some(n.pooled)),
        cell(Some(r.weighted_acc)),
        cell(r.vqa_acc),
        cell(r.personalization_recall)
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<24} {:>9} {:>9} {:>9} {:>9}", "object", "Precision", "Positive", "Negative", "Recall");
    for o in &r.per_object {
        let _ = writeln!(
            s,
            "{:<24} {:>9} {:>9} {:>9} {:>9}",
            o.object_id,
            cell(Some(o.precision)),
            cell(Some(o.positive_acc)),
            cell(Some(o.negative_acc_by_split.pooled)),
            cell(o.personalization_recall)
        );
    }
    s
}
