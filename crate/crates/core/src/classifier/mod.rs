//! Fixed-length features and the two classifiers: k-NN and a 1-D CNN.

mod cnn;
mod knn;

pub use cnn::{
    cnn_predict, cnn_train, CnnArchitecture, CnnModel, Gradients, TrainConfig, TrainReport,
    train_vectors, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use knn::{knn_fit, knn_predict, KnnModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::trace::{Dataset, Label, Trace, MAX_WIRE_SIZE};

/// Default feature length.
pub const DEFAULT_FEATURE_LEN: usize = 1000;

/// First `len` signed sizes scaled by the max wire size, zero-padded.
pub fn vectorize(t: &Trace, len: usize) -> Vec<f64> {
    let scale = MAX_WIRE_SIZE as f64;
    let mut v = vec![0.0; len];
    for (slot, p) in v.iter_mut().zip(t.packets()) {
        *slot = p.size() as f64 / scale;
    }
    v
}

/// Vectors and class indices of a closed-world dataset.
pub(crate) fn monitored_vectors(ds: &Dataset, len: usize) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(ds.len());
    let mut ys = Vec::with_capacity(ds.len());
    for t in ds.traces() {
        match t.label() {
            Some(Label::Monitored(c)) => {
                xs.push(vectorize(t, len));
                ys.push(c);
            }
            _ => return Err(Error::BadConfig("expected only monitored traces".into())),
        }
    }
    Ok((xs, ys))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Knn(KnnModel),
    Cnn(CnnModel),
}

impl Model {
    pub fn input_len(&self) -> usize {
        match self {
            Model::Knn(m) => m.input_len(),
            Model::Cnn(m) => m.arch().input_len,
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            Model::Knn(m) => m.class_count(),
            Model::Cnn(m) => m.arch().classes,
        }
    }

    /// Predicted class and its monitored score.
    pub fn predict(&self, v: &[f64]) -> Result<(usize, f64)> {
        match self {
            Model::Knn(m) => knn_predict(m, v),
            Model::Cnn(m) => {
                let probs = cnn_predict(m, v)?;
                let (best, p) = argmax(&probs);
                Ok((best, p))
            }
        }
    }

    pub fn predict_trace(&self, t: &Trace) -> Result<(usize, f64)> {
        self.predict(&vectorize(t, self.input_len()))
    }
}

/// First index of the largest value.
fn argmax(v: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    (best, v[best])
}

/// Confidence that an instance belongs to the monitored set: the max class
/// probability for the CNN, the neighbor agreement fraction for k-NN.
pub fn monitored_score(m: &Model, v: &[f64]) -> Result<f64> {
    Ok(m.predict(v)?.1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedEval {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

pub fn evaluate_closed(m: &Model, test: &Dataset) -> Result<ClosedEval> {
    let c = m.class_count();
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0;
    for t in test.traces() {
        let truth = match t.label() {
            Some(Label::Monitored(i)) if i < c => i,
            other => {
                return Err(Error::BadConfig(format!(
                    "closed-world evaluation got label {other:?} for {c} classes"
                )))
            }
        };
        let (pred, _) = m.predict_trace(t)?;
        confusion[truth][pred] += 1;
        if pred == truth {
            correct += 1;
        }
    }
    Ok(ClosedEval { accuracy: correct as f64 / test.len() as f64, confusion, total: test.len() })
}

/// Per-class shuffled split: the first `ratio` of each class trains.
/// Classes with at least two traces keep at least one on each side.
pub fn stratified_split(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::BadConfig(format!("split ratio {ratio}")));
    }
    let mut by_class: std::collections::BTreeMap<Label, Vec<usize>> = Default::default();
    for (i, t) in ds.traces().iter().enumerate() {
        by_class.entry(t.label().expect("labeled")).or_default().push(i);
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (ci, (_, mut idx)) in by_class.into_iter().enumerate() {
        let mut rng = SeededRng::derived(seed, ci as u64);
        use rand::seq::SliceRandom;
        idx.shuffle(rng.inner());
        let n = idx.len();
        let mut k = (n as f64 * ratio).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        }
        train_idx.extend_from_slice(&idx[..k]);
        test_idx.extend_from_slice(&idx[k..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |ix: &[usize]| ds.with_traces(ix.iter().map(|&i| ds.traces()[i].clone()).collect());
    Ok((pick(&train_idx)?, pick(&test_idx)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::World;

    #[test]
    fn vectorize_examples() {
        let t = Trace::from_sizes(&[1514, -757]).unwrap();
        assert_eq!(vectorize(&t, 4), vec![1.0, -0.5, 0.0, 0.0]);
        let long = Trace::from_sizes(&[1514, 1514, -1514, 757]).unwrap();
        assert_eq!(vectorize(&long, 2), vec![1.0, 1.0]);
        let empty = Trace::possibly_empty(vec![], None);
        assert_eq!(vectorize(&empty, 3), vec![0.0; 3]);
    }

    fn knn_model(vs: &[(&[f64], usize)], classes: usize) -> Model {
        Model::Knn(KnnModel::from_parts(
            vs.iter().map(|v| v.0.to_vec()).collect(),
            vs.iter().map(|v| v.1).collect(),
            1,
            classes,
        ))
    }

    fn labeled(sizes: &[i32], c: usize) -> Trace {
        Trace::from_sizes(sizes).unwrap().with_label(Some(Label::Monitored(c)))
    }

    #[test]
    fn evaluate_closed_examples() {
        // 1-NN over one-hot prototypes: class c wins for a trace whose first
        // packet is 1514 in position c.
        let m = knn_model(&[(&[1.0, 0.0, 0.0], 0), (&[0.0, 1.0, 0.0], 1), (&[0.0, 0.0, 1.0], 2)], 3);
        let test = Dataset::new(
            vec![labeled(&[1514], 0), labeled(&[1, 1514], 1), labeled(&[1, 1, 1514], 2)],
            3,
            World::Closed,
        )
        .unwrap();
        let e = evaluate_closed(&m, &test).unwrap();
        assert_eq!(e.accuracy, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(e.confusion[i][j], usize::from(i == j));
            }
        }

        // Constant classifier on a balanced set scores 1/C.
        let constant = knn_model(&[(&[0.0, 0.0, 0.0], 1)], 3);
        let e = evaluate_closed(&constant, &test).unwrap();
        assert!((e.accuracy - 1.0 / 3.0).abs() < 1e-12);

        let three = Dataset::new(
            vec![labeled(&[1514], 0), labeled(&[1, 1514], 1), labeled(&[1, 1514], 2)],
            3,
            World::Closed,
        )
        .unwrap();
        let e = evaluate_closed(&m, &three).unwrap();
        assert!((e.accuracy - 2.0 / 3.0).abs() < 1e-12);
        let row_sums: Vec<usize> = e.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![1, 1, 1]);
    }

    #[test]
    fn monitored_score_examples() {
        let m = knn_model(&[(&[1.0], 0), (&[1.0], 0)], 2);
        assert_eq!(monitored_score(&m, &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let ts: Vec<Trace> = (0..30).map(|i| labeled(&[i + 1], (i % 3) as usize)).collect();
        let ds = Dataset::new(ts, 3, World::Closed).unwrap();
        let (tr, te) = stratified_split(&ds, 0.8, 5).unwrap();
        assert_eq!((tr.len(), te.len()), (24, 6));
        for c in 0..3 {
            assert_eq!(te.labels().iter().filter(|l| **l == Label::Monitored(c)).count(), 2);
        }
        let (tr2, _) = stratified_split(&ds, 0.8, 5).unwrap();
        assert_eq!(tr, tr2);
    }
}
