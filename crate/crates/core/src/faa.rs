//! Filter-assisted attack: drop every packet whose signed size is not among
//! the attacker's top-X sizes of normal traffic.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::stats::{build_histogram, top_x, FilterList};
use crate::trace::{Dataset, Trace};

pub fn build_filter(corpus: &Dataset, x: usize) -> Result<FilterList> {
    top_x(&build_histogram(corpus)?, x)
}

/// Precomputed membership set for filtering many traces with one list.
#[derive(Clone, Debug)]
pub struct Filter {
    keep: HashSet<i32>,
}

impl Filter {
    pub fn new(list: &FilterList) -> Result<Self> {
        if list.is_empty() {
            return Err(Error::EmptyFilterList);
        }
        Ok(Filter { keep: list.sizes().iter().copied().collect() })
    }

    pub fn admits(&self, size: i32) -> bool {
        self.keep.contains(&size)
    }

    /// In-order subsequence of `t` whose signed sizes are in the list. May be empty.
    pub fn apply(&self, t: &Trace) -> Trace {
        let kept = t.packets().iter().copied().filter(|p| self.admits(p.size())).collect();
        Trace::possibly_empty(kept, t.label())
    }

    pub fn apply_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        ds.with_traces(ds.traces().iter().map(|t| self.apply(t)).collect())
    }
}

pub fn faa_filter(t: &Trace, list: &FilterList) -> Result<Trace> {
    Ok(Filter::new(list)?.apply(t))
}

/// Expected fraction of RPD packets (uniform sign, magnitude uniform in
/// `[s_min, s_max]`) that survive the filter.
pub fn rpd_survival_rate(list: &FilterList, s_min: u32, s_max: u32) -> f64 {
    let hits = list
        .sizes()
        .iter()
        .filter(|s| (s_min..=s_max).contains(&s.unsigned_abs()))
        .count();
    hits as f64 / (2.0 * (s_max - s_min + 1) as f64)
}
