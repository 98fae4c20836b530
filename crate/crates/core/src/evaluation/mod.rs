//! Objective speaker-similarity evaluation.
//!
//! Embeddings are compared by cosine similarity in three conditions:
//! converted speech against the target speaker's average embedding, genuine
//! same-speaker pairs (leave-one-out averages), and cross-speaker pairs.
//! A threshold sweep over the genuine/impostor score lists yields an
//! equal-error-rate style operating point.

mod plots;

pub use plots::{emit_plots, PlotGroup};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoders::{average_speaker_embedding, SpeakerEmbedding};
use crate::error::{Error, Result};

/// `dot(a, b) / (|a| |b|)`, rejecting zero-norm inputs.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("cosine of zero-norm vector".into()));
    }
    let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    ConvertedVsTargetAvg,
    SameSpeakerVsOwnAvg,
    DiffSpeakerVsOtherAvg,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::ConvertedVsTargetAvg => "converted_vs_target_avg",
            Condition::SameSpeakerVsOwnAvg => "same_speaker_vs_own_avg",
            Condition::DiffSpeakerVsOtherAvg => "diff_speaker_vs_other_avg",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub utterance_id: String,
    pub condition: Condition,
    pub cosine: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistributionSummary {
    pub condition: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub histogram: Histogram,
    pub quantiles: Quantiles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramConfig {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig { bins: 50, lo: -0.2, hi: 1.0 }
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Histogram, moments, and quantiles of one score list.
pub fn summarize(condition: &str, scores: &[f64], cfg: &HistogramConfig) -> DistributionSummary {
    assert!(!scores.is_empty(), "summarize needs at least one score");
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;

    let mut counts = vec![0u64; cfg.bins];
    let width = (cfg.hi - cfg.lo) / cfg.bins as f64;
    for &s in scores {
        let idx = ((s - cfg.lo) / width).floor();
        let idx = (idx.max(0.0) as usize).min(cfg.bins - 1);
        counts[idx] += 1;
    }
    let edges = (0..=cfg.bins).map(|i| cfg.lo + width * i as f64).collect();

    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    DistributionSummary {
        condition: condition.to_string(),
        count: scores.len(),
        mean,
        std: var.sqrt(),
        histogram: Histogram { edges, counts },
        quantiles: Quantiles {
            q05: quantile(&sorted, 0.05),
            q25: quantile(&sorted, 0.25),
            q50: quantile(&sorted, 0.50),
            q75: quantile(&sorted, 0.75),
            q95: quantile(&sorted, 0.95),
        },
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub eer_threshold: f64,
    pub eer: f64,
    /// `mean(same) - mean(diff)`.
    pub separation: f64,
}

/// Sweep candidate thresholds over the observed scores and return the
/// operating point minimizing the mean of false-accept and false-reject
/// rates (ties broken toward balance, then toward the larger threshold).
///
/// A trial is accepted when its score is strictly greater than the
/// threshold: `FAR = frac(diff > t)`, `FRR = frac(same <= t)`.
pub fn threshold_analysis(same: &[f64], diff: &[f64]) -> Result<ThresholdReport> {
    if same.is_empty() || diff.is_empty() {
        return Err(Error::EmptyInput("threshold analysis needs both score lists".into()));
    }
    let mut candidates: Vec<f64> = same.iter().chain(diff.iter()).copied().collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let mut best = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY); // (rate, imbalance, threshold)
    for &t in &candidates {
        let far = diff.iter().filter(|&&s| s > t).count() as f64 / diff.len() as f64;
        let frr = same.iter().filter(|&&s| s <= t).count() as f64 / same.len() as f64;
        let rate = 0.5 * (far + frr);
        let imbalance = (far - frr).abs();
        if rate < best.0 - 1e-15
            || (rate <= best.0 + 1e-15 && imbalance < best.1 - 1e-15)
            || (rate <= best.0 + 1e-15 && imbalance <= best.1 + 1e-15 && t > best.2)
        {
            best = (rate, imbalance, t);
        }
    }

    let mean_same = same.iter().sum::<f64>() / same.len() as f64;
    let mean_diff = diff.iter().sum::<f64>() / diff.len() as f64;
    Ok(ThresholdReport { eer_threshold: best.2, eer: best.0, separation: mean_same - mean_diff })
}

/// One converted utterance with the speaker it was converted toward.
#[derive(Debug, Clone)]
pub struct ConvertedUtterance {
    pub utterance_id: String,
    pub target_speaker: String,
    pub embedding: SpeakerEmbedding,
}

/// One enrollment utterance of a known speaker.
#[derive(Debug, Clone)]
pub struct EnrollmentUtterance {
    pub utterance_id: String,
    pub embedding: SpeakerEmbedding,
}

pub type Enrollment = BTreeMap<String, Vec<EnrollmentUtterance>>;

#[derive(Debug, Serialize)]
pub struct ThreeConditionReport {
    pub records: Vec<SimilarityRecord>,
    pub summaries: Vec<DistributionSummary>,
    pub threshold: Option<ThresholdReport>,
    pub warnings: Vec<String>,
}

impl ThreeConditionReport {
    pub fn scores(&self, condition: Condition) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.condition == condition)
            .map(|r| r.cosine)
            .collect()
    }
}

/// Score the three conditions of the similarity evaluation.
///
/// Same-speaker scores are leave-one-out: the scored utterance is excluded
/// from its own speaker's average. Speakers with fewer than two enrollment
/// utterances are skipped for that condition with a warning.
pub fn build_three_condition_report(
    converted: &[ConvertedUtterance],
    enrollment: &Enrollment,
    cfg: &HistogramConfig,
) -> Result<ThreeConditionReport> {
    if enrollment.is_empty() {
        return Err(Error::EmptyInput("no enrollment speakers".into()));
    }
    let mut records = Vec::new();
    let mut warnings = Vec::new();

    let mut averages: BTreeMap<&str, SpeakerEmbedding> = BTreeMap::new();
    for (speaker, utts) in enrollment {
        if utts.is_empty() {
            return Err(Error::EmptyInput(format!("speaker {speaker} has no utterances")));
        }
        let embs: Vec<SpeakerEmbedding> = utts.iter().map(|u| u.embedding.clone()).collect();
        averages.insert(speaker, average_speaker_embedding(&embs)?);
    }

    for c in converted {
        let Some(avg) = averages.get(c.target_speaker.as_str()) else {
            return Err(Error::Validation(format!(
                "converted utterance {} targets unknown speaker {}",
                c.utterance_id, c.target_speaker
            )));
        };
        let cosine =
            cosine_similarity(c.embedding.values.as_slice().unwrap(), avg.values.as_slice().unwrap())?;
        records.push(SimilarityRecord {
            utterance_id: c.utterance_id.clone(),
            condition: Condition::ConvertedVsTargetAvg,
            cosine,
        });
    }

    for (speaker, utts) in enrollment {
        if utts.len() < 2 {
            warnings.push(format!(
                "speaker {speaker} has {} utterance(s); same-speaker condition skipped",
                utts.len()
            ));
            continue;
        }
        for (i, utt) in utts.iter().enumerate() {
            let others: Vec<SpeakerEmbedding> = utts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, u)| u.embedding.clone())
                .collect();
            let loo_avg = average_speaker_embedding(&others)?;
            let cosine = cosine_similarity(
                utt.embedding.values.as_slice().unwrap(),
                loo_avg.values.as_slice().unwrap(),
            )?;
            records.push(SimilarityRecord {
                utterance_id: utt.utterance_id.clone(),
                condition: Condition::SameSpeakerVsOwnAvg,
                cosine,
            });
        }
    }

    for (speaker, utts) in enrollment {
        for (other, avg) in &averages {
            if *other == speaker.as_str() {
                continue;
            }
            for utt in utts {
                let cosine = cosine_similarity(
                    utt.embedding.values.as_slice().unwrap(),
                    avg.values.as_slice().unwrap(),
                )?;
                records.push(SimilarityRecord {
                    utterance_id: utt.utterance_id.clone(),
                    condition: Condition::DiffSpeakerVsOtherAvg,
                    cosine,
                });
            }
        }
    }

    let mut summaries = Vec::new();
    for cond in [
        Condition::ConvertedVsTargetAvg,
        Condition::SameSpeakerVsOwnAvg,
        Condition::DiffSpeakerVsOtherAvg,
    ] {
        let scores: Vec<f64> = records
            .iter()
            .filter(|r| r.condition == cond)
            .map(|r| r.cosine)
            .collect();
        if !scores.is_empty() {
            summaries.push(summarize(cond.label(), &scores, cfg));
        }
    }

    let same: Vec<f64> = records
        .iter()
        .filter(|r| r.condition == Condition::SameSpeakerVsOwnAvg)
        .map(|r| r.cosine)
        .collect();
    let diff: Vec<f64> = records
        .iter()
        .filter(|r| r.condition == Condition::DiffSpeakerVsOtherAvg)
        .map(|r| r.cosine)
        .collect();
    let threshold = if !same.is_empty() && !diff.is_empty() {
        Some(threshold_analysis(&same, &diff)?)
    } else {
        None
    };

    Ok(ThreeConditionReport { records, summaries, threshold, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EmbeddingSource;
    use ndarray::Array1;
    use proptest::prelude::*;

    fn emb(v: &[f64]) -> SpeakerEmbedding {
        SpeakerEmbedding {
            values: Array1::from_vec(v.to_vec()),
            source: EmbeddingSource::ReferenceAudio,
        }
    }

    #[test]
    fn cosine_examples() {
        let v = vec![0.3, 0.4, -0.2];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap().abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let got = cosine_similarity(&[1.0, 0.0], &[s, s]).unwrap();
        assert!((got - 0.7071).abs() < 1e-4);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn threshold_perfectly_separated() {
        let r = threshold_analysis(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert_eq!(r.eer, 0.0);
        assert!((0.2..=0.8).contains(&r.eer_threshold));
        assert!((r.separation - 0.7).abs() < 1e-12);
    }

    #[test]
    fn threshold_identical_distributions() {
        let xs = [0.3, 0.5, 0.7];
        let r = threshold_analysis(&xs, &xs).unwrap();
        assert!((r.eer - 0.5).abs() < 1e-12);
        assert!(r.separation.abs() < 1e-12);
    }

    #[test]
    fn threshold_partial_overlap() {
        let r = threshold_analysis(&[0.7, 0.5], &[0.6, 0.3]).unwrap();
        assert!((r.eer - 0.25).abs() < 1e-12);
        assert!(r.eer_threshold > 0.5 && r.eer_threshold <= 0.6, "{}", r.eer_threshold);
    }

    #[test]
    fn threshold_empty_is_error() {
        assert!(matches!(threshold_analysis(&[], &[0.1]), Err(Error::EmptyInput(_))));
        assert!(matches!(threshold_analysis(&[0.1], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn summary_counts_cover_everything() {
        let scores = [0.1, 0.4, 0.4, 0.95, -0.3, 1.2];
        let s = summarize("x", &scores, &HistogramConfig::default());
        assert_eq!(s.count, 6);
        assert_eq!(s.histogram.counts.iter().sum::<u64>(), 6);
        assert_eq!(s.histogram.edges.len(), s.histogram.counts.len() + 1);
        assert!(s.quantiles.q05 <= s.quantiles.q50 && s.quantiles.q50 <= s.quantiles.q95);
    }

    fn toy_enrollment() -> Enrollment {
        let mut e = Enrollment::new();
        e.insert(
            "spk_a".into(),
            vec![
                EnrollmentUtterance { utterance_id: "a0".into(), embedding: emb(&[1.0, 0.1, 0.0]) },
                EnrollmentUtterance { utterance_id: "a1".into(), embedding: emb(&[0.9, 0.0, 0.1]) },
            ],
        );
        e.insert(
            "spk_b".into(),
            vec![
                EnrollmentUtterance { utterance_id: "b0".into(), embedding: emb(&[-0.1, 1.0, 0.0]) },
                EnrollmentUtterance { utterance_id: "b1".into(), embedding: emb(&[0.0, 0.9, 0.1]) },
            ],
        );
        e
    }

    #[test]
    fn three_condition_report_separates_toy_speakers() {
        let enrollment = toy_enrollment();
        let converted = vec![ConvertedUtterance {
            utterance_id: "conv0".into(),
            target_speaker: "spk_b".into(),
            embedding: emb(&[0.0, 1.0, 0.0]),
        }];
        let rep =
            build_three_condition_report(&converted, &enrollment, &HistogramConfig::default())
                .unwrap();
        assert_eq!(rep.summaries.len(), 3);
        let same = rep.scores(Condition::SameSpeakerVsOwnAvg);
        let diff = rep.scores(Condition::DiffSpeakerVsOtherAvg);
        assert_eq!(same.len(), 4);
        assert_eq!(diff.len(), 4);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&same) > mean(&diff));
        let th = rep.threshold.unwrap();
        assert!(th.eer < 0.5);
        assert!(rep.warnings.is_empty());
    }

    #[test]
    fn single_utterance_speaker_is_skipped_with_warning() {
        let mut enrollment = toy_enrollment();
        enrollment
            .insert("spk_c".into(), vec![EnrollmentUtterance {
                utterance_id: "c0".into(),
                embedding: emb(&[0.5, 0.5, 0.5]),
            }]);
        let rep = build_three_condition_report(&[], &enrollment, &HistogramConfig::default())
            .unwrap();
        assert_eq!(rep.warnings.len(), 1);
        assert!(rep.warnings[0].contains("spk_c"));
        // spk_c contributes no same-speaker scores but does appear in the
        // cross-speaker condition.
        assert!(rep
            .records
            .iter()
            .filter(|r| r.condition == Condition::SameSpeakerVsOwnAvg)
            .all(|r| !r.utterance_id.starts_with('c')));
    }

    #[test]
    fn empty_converted_set_keeps_reference_conditions() {
        let rep = build_three_condition_report(&[], &toy_enrollment(), &HistogramConfig::default())
            .unwrap();
        assert_eq!(rep.summaries.len(), 2);
        assert!(rep.summaries.iter().all(|s| s.condition != "converted_vs_target_avg"));
    }

    #[test]
    fn loo_excludes_the_scored_utterance() {
        // One outlier utterance: with true LOO its own average excludes it,
        // so its same-speaker score is the cosine against the other two.
        let mut e = Enrollment::new();
        e.insert(
            "s".into(),
            vec![
                EnrollmentUtterance { utterance_id: "u0".into(), embedding: emb(&[1.0, 0.0]) },
                EnrollmentUtterance { utterance_id: "u1".into(), embedding: emb(&[1.0, 0.0]) },
                EnrollmentUtterance { utterance_id: "u2".into(), embedding: emb(&[0.0, 1.0]) },
            ],
        );
        let rep =
            build_three_condition_report(&[], &e, &HistogramConfig::default()).unwrap();
        let u2 = rep
            .records
            .iter()
            .find(|r| r.utterance_id == "u2" && r.condition == Condition::SameSpeakerVsOwnAvg)
            .unwrap();
        // Against the average of u0, u1 only: exactly orthogonal.
        assert!(u2.cosine.abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 6),
            b in proptest::collection::vec(-5.0f64..5.0, 6),
            k in 0.1f64..20.0,
        ) {
            prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
            prop_assume!(b.iter().any(|v| v.abs() > 1e-3));
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|v| k * v).collect();
            let s = cosine_similarity(&scaled, &b).unwrap();
            prop_assert!((ab - s).abs() < 1e-9);
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
        }

        #[test]
        fn eer_zero_when_fully_separated(
            same in proptest::collection::vec(0.6f64..1.0, 1..20),
            diff in proptest::collection::vec(-1.0f64..0.4, 1..20),
        ) {
            let r = threshold_analysis(&same, &diff).unwrap();
            prop_assert_eq!(r.eer, 0.0);
        }

        #[test]
        fn eer_bounded_by_half(
            same in proptest::collection::vec(-1.0f64..1.0, 1..30),
            diff in proptest::collection::vec(-1.0f64..1.0, 1..30),
        ) {
            let r = threshold_analysis(&same, &diff).unwrap();
            prop_assert!(r.eer >= 0.0 && r.eer <= 0.5 + 1e-12);
        }
    }
}
