use serde::{Deserialize, Serialize};

use super::monitored_vectors;
use crate::error::{Error, Result};
use crate::trace::Dataset;

/// Stored training vectors with Euclidean k-nearest-neighbor voting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    vectors: Vec<Vec<f64>>,
    labels: Vec<usize>,
    k: usize,
    classes: usize,
}

impl KnnModel {
    pub fn from_parts(vectors: Vec<Vec<f64>>, labels: Vec<usize>, k: usize, classes: usize) -> Self {
        assert_eq!(vectors.len(), labels.len());
        KnnModel { vectors, labels, k, classes }
    }

    pub fn input_len(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

pub fn knn_fit(train: &Dataset, feature_len: usize, k: usize) -> Result<KnnModel> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if k == 0 || k > train.len() {
        return Err(Error::BadConfig(format!("k = {k} for {} training vectors", train.len())));
    }
    let (vectors, labels) = monitored_vectors(train, feature_len)?;
    Ok(KnnModel { vectors, labels, k, classes: train.class_count() })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority label among the k nearest, ties broken by smaller mean distance
/// and then by smaller label. The score is the winning vote fraction.
pub fn knn_predict(m: &KnnModel, v: &[f64]) -> Result<(usize, f64)> {
    if v.len() != m.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "query has {} features, model expects {}",
            v.len(),
            m.input_len()
        )));
    }
    let mut d: Vec<(f64, usize)> = m
        .vectors
        .iter()
        .zip(&m.labels)
        .map(|(x, &l)| (sq_dist(x, v).sqrt(), l))
        .collect();
    let k = m.k.min(d.len());
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![(0usize, 0.0f64); m.classes];
    for &(dist, l) in &d[..k] {
        votes[l].0 += 1;
        votes[l].1 += dist;
    }
    let mut best = None::<(usize, usize, f64)>;
    for (label, &(count, sum)) in votes.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let mean = sum / count as f64;
        let better = match best {
            None => true,
            Some((_, bc, bm)) => count > bc || (count == bc && mean < bm),
        };
        if better {
            best = Some((label, count, mean));
        }
    }
    let (label, count, _) = best.expect("k >= 1");
    Ok((label, count as f64 / k as f64))
}
