//! Inconsistency pairs, their deduplication and run-level statistics.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::AttackResult;
use crate::data::{join_tokens, normalize, Explanation, NliLabel};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("realism fraction must lie in [0, 1], got {0}")]
    Realism(f64),
    #[error("cannot sample {requested} of {available} distinct pairs")]
    SampleTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A verified pair: the original explanation and the inconsistent one the
/// model produced for the reverse input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InconsistencyPair {
    pub instance_id: String,
    pub candidate_index: usize,
    pub premise: String,
    pub original_hypothesis: String,
    pub original_label: Option<NliLabel>,
    pub original_explanation: Explanation,
    pub reverse_hypothesis: String,
    pub reverse_label: Option<NliLabel>,
    pub reverse_explanation: Explanation,
}

impl InconsistencyPair {
    pub fn key(&self) -> (&[String], &[String]) {
        (&self.original_explanation.tokens, &self.reverse_explanation.tokens)
    }
}

/// Pairs behind every verified trace, in result then candidate order.
pub fn collect_pairs(results: &[AttackResult]) -> Vec<InconsistencyPair> {
    let mut pairs = Vec::new();
    for r in results {
        let Some(original) = &r.original else { continue };
        for t in r.verified() {
            let (Some(rev_var), Some(reverse)) = (&t.reverse_variable, &t.reverse) else {
                continue;
            };
            pairs.push(InconsistencyPair {
                instance_id: r.instance.id.clone(),
                candidate_index: t.index,
                premise: r.instance.context.clone(),
                original_hypothesis: r.instance.variable.clone(),
                original_label: original.label,
                original_explanation: original.explanation.clone(),
                reverse_hypothesis: rev_var.clone(),
                reverse_label: reverse.label,
                reverse_explanation: reverse.explanation.clone(),
            });
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistinctPair {
    /// First pair seen with this key.
    pub pair: InconsistencyPair,
    /// Distinct normalized reverse hypotheses, first-seen order.
    pub reverse_hypotheses: Vec<String>,
    pub raw_count: usize,
}

/// Groups pairs by (original explanation, reverse explanation) tokens. The
/// premise is not part of the key.
pub fn dedup_pairs(pairs: &[InconsistencyPair]) -> Vec<DistinctPair> {
    let mut index: HashMap<(Vec<String>, Vec<String>), usize> = HashMap::new();
    let mut out: Vec<DistinctPair> = Vec::new();
    for p in pairs {
        let key = (p.original_explanation.tokens.clone(), p.reverse_explanation.tokens.clone());
        let hyp = join_tokens(&normalize(&p.reverse_hypothesis));
        match index.get(&key) {
            Some(&i) => {
                let d = &mut out[i];
                d.raw_count += 1;
                if !d.reverse_hypotheses.contains(&hyp) {
                    d.reverse_hypotheses.push(hyp);
                }
            }
            None => {
                index.insert(key, out.len());
                out.push(DistinctPair {
                    pair: p.clone(),
                    reverse_hypotheses: vec![hyp],
                    raw_count: 1,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deviation {
    #[default]
    Population,
    Sample,
}

/// Mean and standard deviation; zero for empty input.
pub fn mean_std(values: &[f64], kind: Deviation) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let denom = match kind {
        Deviation::Population => n as f64,
        Deviation::Sample if n > 1 => (n - 1) as f64,
        Deviation::Sample => return (mean, 0.0),
    };
    (mean, (ss / denom).sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairCounts {
    pub processed: usize,
    pub discarded: usize,
    pub raw_pairs: usize,
    pub distinct_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub processed: usize,
    pub discarded: usize,
    pub discard_fraction: f64,
    pub errored_instances: usize,
    pub errored_traces: usize,
    pub raw_pairs: usize,
    pub distinct_pairs: usize,
    /// Distinct reverse hypotheses per distinct pair.
    pub hypotheses_per_pair_mean: f64,
    pub hypotheses_per_pair_std: f64,
    /// Same count, averaged over raw pairs instead of distinct ones.
    pub hypotheses_per_raw_pair_mean: f64,
    pub hypotheses_per_raw_pair_std: f64,
    pub deviation: Deviation,
    pub realism_fraction: f64,
    pub realistic_pairs: usize,
    pub success_rate: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Rates derived from bare counts. Realistic pairs are
/// `round(realism * distinct)`, the success rate is realistic pairs over
/// processed instances.
pub fn summarize_counts(counts: PairCounts, realism: f64) -> Result<RunSummary, StatsError> {
    if !(0.0..=1.0).contains(&realism) {
        return Err(StatsError::Realism(realism));
    }
    let realistic = (realism * counts.distinct_pairs as f64).round() as usize;
    Ok(RunSummary {
        processed: counts.processed,
        discarded: counts.discarded,
        discard_fraction: ratio(counts.discarded, counts.processed),
        errored_instances: 0,
        errored_traces: 0,
        raw_pairs: counts.raw_pairs,
        distinct_pairs: counts.distinct_pairs,
        hypotheses_per_pair_mean: 0.0,
        hypotheses_per_pair_std: 0.0,
        hypotheses_per_raw_pair_mean: 0.0,
        hypotheses_per_raw_pair_std: 0.0,
        deviation: Deviation::Population,
        realism_fraction: realism,
        realistic_pairs: realistic,
        success_rate: ratio(realistic, counts.processed),
    })
}

pub fn compute_summary(results: &[AttackResult], realism: f64, deviation: Deviation) -> Result<RunSummary, StatsError> {
    let pairs = collect_pairs(results);
    let distinct = dedup_pairs(&pairs);
    let counts = PairCounts {
        processed: results.len(),
        discarded: results.iter().filter(|r| r.is_discarded()).count(),
        raw_pairs: pairs.len(),
        distinct_pairs: distinct.len(),
    };
    let mut summary = summarize_counts(counts, realism)?;
    summary.errored_instances = results.iter().filter(|r| r.error.is_some()).count();
    summary.errored_traces = results.iter().map(AttackResult::errored_traces).sum();
    summary.deviation = deviation;

    let per_pair: Vec<f64> = distinct.iter().map(|d| d.reverse_hypotheses.len() as f64).collect();
    (summary.hypotheses_per_pair_mean, summary.hypotheses_per_pair_std) = mean_std(&per_pair, deviation);
    let per_raw: Vec<f64> = distinct
        .iter()
        .flat_map(|d| std::iter::repeat_n(d.reverse_hypotheses.len() as f64, d.raw_count))
        .collect();
    (summary.hypotheses_per_raw_pair_mean, summary.hypotheses_per_raw_pair_std) = mean_std(&per_raw, deviation);
    Ok(summary)
}

/// Uniform sample of `n` distinct pairs without replacement.
pub fn sample_for_annotation(distinct: &[DistinctPair], n: usize, seed: u64) -> Result<Vec<&DistinctPair>, StatsError> {
    if n > distinct.len() {
        return Err(StatsError::SampleTooLarge {
            requested: n,
            available: distinct.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..distinct.len()).collect();
    let (picked, _) = order.partial_shuffle(&mut rng, n);
    Ok(picked.iter().map(|&i| &distinct[i]).collect())
}

pub const ANNOTATION_HEADER: [&str; 10] = [
    "instance_id",
    "premise",
    "original_hypothesis",
    "original_label",
    "original_explanation",
    "reverse_hypothesis",
    "reverse_label",
    "reverse_explanation",
    "distinct_reverse_hypotheses",
    "realistic",
];

/// Writes the sample as CSV with an empty `realistic` column for annotators.
pub fn write_annotation_csv<W: Write>(out: W, sample: &[&DistinctPair]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ANNOTATION_HEADER)?;
    let label = |l: Option<NliLabel>| l.map(|l| l.as_str()).unwrap_or("");
    for d in sample {
        let p = &d.pair;
        w.write_record([
            p.instance_id.as_str(),
            p.premise.as_str(),
            p.original_hypothesis.as_str(),
            label(p.original_label),
            p.original_explanation.raw.as_str(),
            p.reverse_hypothesis.as_str(),
            label(p.reverse_label),
            p.reverse_explanation.raw.as_str(),
            &d.reverse_hypotheses.len().to_string(),
            "",
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
