//! Empirical packet-size distribution and the top-X filter list derived from it.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Dataset, Packet, Trace};

/// Default length of the filter list.
pub const DEFAULT_X: usize = 30;

/// Counts of each signed size over a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SizeHistogram {
    counts: BTreeMap<i32, u64>,
    total: u64,
}

impl SizeHistogram {
    pub fn add_trace(&mut self, t: &Trace) {
        for p in t.packets() {
            *self.counts.entry(p.size()).or_insert(0) += 1;
        }
        self.total += t.len() as u64;
    }

    /// Count-wise merge; associative and commutative.
    pub fn merge(&mut self, other: &SizeHistogram) {
        for (&s, &c) in &other.counts {
            *self.counts.entry(s).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, size: i32) -> u64 {
        self.counts.get(&size).copied().unwrap_or(0)
    }

    pub fn probability(&self, size: i32) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(size) as f64 / self.total as f64
    }

    /// `(size, count, probability)` in ascending size order.
    pub fn entries(&self) -> impl Iterator<Item = (i32, u64, f64)> + '_ {
        self.counts
            .iter()
            .map(move |(&s, &c)| (s, c, c as f64 / self.total as f64))
    }

    /// Sizes by descending probability, ties by ascending signed size.
    pub fn ranked(&self) -> Vec<(i32, u64)> {
        let mut v: Vec<(i32, u64)> = self.counts.iter().map(|(&s, &c)| (s, c)).collect();
        // Counts share one denominator, so ordering on counts is exact.
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["size", "count", "probability"])?;
        for (s, c, p) in self.entries() {
            out.write_record([s.to_string(), c.to_string(), format!("{p:.9}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn build_histogram(ds: &Dataset) -> Result<SizeHistogram> {
    histogram_of(ds.traces())
}

pub fn histogram_of(traces: &[Trace]) -> Result<SizeHistogram> {
    let mut h = SizeHistogram::default();
    for t in traces {
        h.add_trace(t);
    }
    if h.total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(h)
}

/// Top-X sizes and their probabilities renormalized over the list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterList {
    sizes: Vec<i32>,
    probs: Vec<f64>,
}

impl FilterList {
    /// Builds a list from explicit entries. Weights are renormalized to sum 1.
    pub fn new(entries: &[(i32, f64)]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyFilterList);
        }
        let mut seen = std::collections::HashSet::new();
        for &(s, w) in entries {
            Packet::new(s)?;
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::BadConfig(format!("filter weight {w} for size {s}")));
            }
            if !seen.insert(s) {
                return Err(Error::BadConfig(format!("duplicate filter size {s}")));
            }
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        Ok(FilterList {
            sizes: entries.iter().map(|e| e.0).collect(),
            probs: entries.iter().map(|e| e.1 / total).collect(),
        })
    }

    pub fn sizes(&self) -> &[i32] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn contains(&self, size: i32) -> bool {
        self.sizes.contains(&size)
    }

    pub fn entries(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.sizes.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "size", "probability"])?;
        for (i, (s, p)) in self.entries().enumerate() {
            out.write_record([i.to_string(), s.to_string(), format!("{p:.9}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn top_x(h: &SizeHistogram, x: usize) -> Result<FilterList> {
    if x == 0 || x > h.distinct() {
        return Err(Error::XOutOfRange { x, distinct: h.distinct() });
    }
    let ranked = h.ranked();
    let kept = &ranked[..x];
    let mass: u64 = kept.iter().map(|e| e.1).sum();
    Ok(FilterList {
        sizes: kept.iter().map(|e| e.0).collect(),
        probs: kept.iter().map(|e| e.1 as f64 / mass as f64).collect(),
    })
}
