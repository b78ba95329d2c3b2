//! End-to-end protocols: train attackers, sweep defenses over P_t, measure
//! accuracy, defensive efficiency, overhead and open-world ROC.
//!
//! Two attackers are trained on the same clean training split:
//!
//! * `df`: the classifier on raw traces,
//! * `faa`: the classifier on traces passed through the attacker's filter.
//!
//! Defenses are applied to the test split only. Under FAA the defended test
//! traces are filtered with the same list before classification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    cnn_train, evaluate_closed, knn_fit, monitored_score, stratified_split, vectorize,
    CnnArchitecture, Model, TrainConfig, TrainReport,
};
use crate::defense::{defend_dataset, observed_dataset, Defense, LadConfig, RpdConfig, SizeRange, DEFAULT_SPLIT_MIN};
use crate::error::{Error, Result};
use crate::faa::{build_filter, Filter};
use crate::metrics::{
    de_drop, defensive_efficiency, overhead, roc_exact, RocCurve, SweepPoint, SweepResult, DEFAULT_HEADER_BYTES,
};
use crate::rng::derive_seed;
use crate::stats::{FilterList, DEFAULT_X};
use crate::trace::{Dataset, Label, Trace, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierConfig {
    Knn { k: usize },
    Cnn { channels: Vec<usize>, train: TrainConfig },
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Cnn { channels: vec![32, 64, 128, 256], train: TrainConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub feature_len: usize,
    pub classifier: ClassifierConfig,
    /// Length of the attacker's filter list.
    pub attack_x: usize,
    /// Length of the defender's list.
    pub defense_x: usize,
    pub split_min: u32,
    pub header_bytes: u64,
    pub grid: Vec<f64>,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            feature_len: crate::classifier::DEFAULT_FEATURE_LEN,
            classifier: ClassifierConfig::default(),
            attack_x: DEFAULT_X,
            defense_x: DEFAULT_X,
            split_min: DEFAULT_SPLIT_MIN,
            header_bytes: DEFAULT_HEADER_BYTES,
            grid: crate::metrics::default_grid(),
            split_ratio: 0.8,
            seed: 0,
        }
    }
}

/// Which defense a sweep cell applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DefenseKind {
    None,
    Rpd(SizeRange),
    LadInsert,
    LadSplit,
}

impl DefenseKind {
    pub fn name(self) -> String {
        match self {
            DefenseKind::None => "none".into(),
            DefenseKind::Rpd(r) => format!("rpd-{}", r.name()),
            DefenseKind::LadInsert => "lad-insert".into(),
            DefenseKind::LadSplit => "lad-split".into(),
        }
    }

    fn stream(self) -> u64 {
        match self {
            DefenseKind::None => 0,
            DefenseKind::Rpd(SizeRange::Small) => 1,
            DefenseKind::Rpd(SizeRange::Medium) => 2,
            DefenseKind::Rpd(SizeRange::Large) => 3,
            DefenseKind::LadInsert => 4,
            DefenseKind::LadSplit => 5,
        }
    }
}

impl std::str::FromStr for DefenseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => DefenseKind::None,
            "lad-insert" => DefenseKind::LadInsert,
            "lad-split" => DefenseKind::LadSplit,
            other => match other.strip_prefix("rpd-") {
                Some(r) => DefenseKind::Rpd(r.parse()?),
                None => return Err(Error::BadConfig(format!("unknown defense {other:?}"))),
            },
        })
    }
}

/// Trains the configured classifier on a closed-world training set.
pub fn train_model(train: &Dataset, cfg: &ExperimentConfig) -> Result<(Model, Option<TrainReport>)> {
    match &cfg.classifier {
        ClassifierConfig::Knn { k } => Ok((Model::Knn(knn_fit(train, cfg.feature_len, *k)?), None)),
        ClassifierConfig::Cnn { channels, train: tc } => {
            let arch = CnnArchitecture::with_channels(cfg.feature_len, train.class_count(), channels.clone());
            let (m, report) = cnn_train(train, &arch, tc)?;
            Ok((Model::Cnn(m), Some(report)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub p_t: f64,
    pub acc_df: f64,
    pub acc_faa: f64,
    pub overhead: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub defense: String,
    pub df: SweepResult,
    pub faa: SweepResult,
    pub de_df: f64,
    pub de_faa: f64,
    /// Relative DE loss caused by FAA.
    pub drop: f64,
    pub overheads: Vec<(f64, f64)>,
}

/// Trained attackers plus the lists both sides use.
pub struct ClosedWorldBench {
    pub cfg: ExperimentConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub attack_list: FilterList,
    pub defense_list: FilterList,
    pub df_model: Model,
    pub faa_model: Model,
    pub reports: Vec<TrainReport>,
}

impl ClosedWorldBench {
    pub fn prepare(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        if ds.world() != World::Closed {
            return Err(Error::BadConfig("closed-world bench needs a closed-world dataset".into()));
        }
        let (train, test) = stratified_split(ds, cfg.split_ratio, derive_seed(cfg.seed, 0x5350_4c49))?;
        let attack_list = build_filter(&train, cfg.attack_x)?;
        let defense_list = build_filter(&train, cfg.defense_x)?;
        let filtered_train = Filter::new(&attack_list)?.apply_dataset(&train)?;
        let (df_model, r1) = train_model(&train, cfg)?;
        let (faa_model, r2) = train_model(&filtered_train, cfg)?;
        Ok(ClosedWorldBench {
            cfg: cfg.clone(),
            train,
            test,
            attack_list,
            defense_list,
            df_model,
            faa_model,
            reports: r1.into_iter().chain(r2).collect(),
        })
    }

    pub fn defense(&self, kind: DefenseKind, p_t: f64) -> Result<Defense> {
        Ok(match kind {
            DefenseKind::None => Defense::None,
            DefenseKind::Rpd(r) => Defense::Rpd(RpdConfig::preset(p_t, r)?),
            DefenseKind::LadInsert => Defense::Lad(LadConfig::insert(p_t, self.defense_list.clone())?),
            DefenseKind::LadSplit => {
                Defense::Lad(LadConfig::split(p_t, self.cfg.split_min, self.defense_list.clone())?)
            }
        })
    }

    /// Seed for defending the test set in one sweep cell.
    pub fn cell_seed(&self, kind: DefenseKind, p_t: f64) -> u64 {
        derive_seed(derive_seed(self.cfg.seed, kind.stream()), (p_t * 1e6).round() as u64)
    }

    pub fn evaluate_cell(&self, kind: DefenseKind, p_t: f64) -> Result<CellResult> {
        let defense = self.defense(kind, p_t)?;
        let defended = defend_dataset(&self.test, &defense, self.cell_seed(kind, p_t))?;
        let observed = observed_dataset(&self.test, &defended)?;
        let filtered = Filter::new(&self.attack_list)?.apply_dataset(&observed)?;
        Ok(CellResult {
            p_t,
            acc_df: evaluate_closed(&self.df_model, &observed)?.accuracy,
            acc_faa: evaluate_closed(&self.faa_model, &filtered)?.accuracy,
            overhead: overhead(&self.test, &defended, self.cfg.header_bytes)?,
        })
    }

    pub fn sweep(&self, kind: DefenseKind) -> Result<SweepSummary> {
        let cells = self
            .cfg
            .grid
            .par_iter()
            .map(|&p| self.evaluate_cell(kind, p))
            .collect::<Result<Vec<_>>>()?;
        summarize(kind, &cells, self.test.len())
    }
}

pub fn summarize(kind: DefenseKind, cells: &[CellResult], test_size: usize) -> Result<SweepSummary> {
    let result = |attack: &str, f: fn(&CellResult) -> f64| SweepResult {
        defense: kind.name(),
        attack: attack.into(),
        test_size,
        points: cells.iter().map(|c| SweepPoint { p_t: c.p_t, accuracy: f(c) }).collect(),
    };
    let df = result("df", |c| c.acc_df);
    let faa = result("faa", |c| c.acc_faa);
    let de_df = defensive_efficiency(&df)?;
    let de_faa = defensive_efficiency(&faa)?;
    Ok(SweepSummary {
        defense: kind.name(),
        df,
        faa,
        de_df,
        de_faa,
        drop: de_drop(de_df, de_faa),
        overheads: cells.iter().map(|c| (c.p_t, c.overhead)).collect(),
    })
}

/// Closed-world bench on the monitored part plus every unmonitored trace as
/// extra test data.
pub struct OpenWorldBench {
    pub closed: ClosedWorldBench,
    pub unmonitored: Vec<Trace>,
}

impl OpenWorldBench {
    pub fn prepare(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        let (mon, unmon): (Vec<Trace>, Vec<Trace>) =
            ds.traces().iter().cloned().partition(|t| t.label().is_some_and(Label::is_monitored));
        let closed_ds = Dataset::new(mon, ds.class_count(), World::Closed)?;
        Ok(OpenWorldBench { closed: ClosedWorldBench::prepare(&closed_ds, cfg)?, unmonitored: unmon })
    }

    /// Monitored test split followed by the unmonitored traces.
    pub fn test_set(&self) -> Result<Dataset> {
        let mut traces = self.closed.test.traces().to_vec();
        traces.extend(self.unmonitored.iter().cloned());
        Dataset::new(traces, self.closed.test.class_count(), World::Open)
    }

    /// Monitored scores and true labels on the defended open-world test set,
    /// with or without the filter attack.
    pub fn scores(&self, kind: DefenseKind, p_t: f64, with_faa: bool) -> Result<(Vec<f64>, Vec<Label>)> {
        let test = self.test_set()?;
        let defense = self.closed.defense(kind, p_t)?;
        let defended = defend_dataset(&test, &defense, self.closed.cell_seed(kind, p_t))?;
        let mut observed = observed_dataset(&test, &defended)?;
        let model = if with_faa {
            observed = Filter::new(&self.closed.attack_list)?.apply_dataset(&observed)?;
            &self.closed.faa_model
        } else {
            &self.closed.df_model
        };
        let len = model.input_len();
        let scores = observed
            .traces()
            .par_iter()
            .map(|t| monitored_score(model, &vectorize(t, len)))
            .collect::<Result<Vec<_>>>()?;
        Ok((scores, observed.labels()))
    }

    /// ROC at every distinct score; see [`OpenWorldBench::scores`].
    pub fn roc(&self, kind: DefenseKind, p_t: f64, with_faa: bool) -> Result<RocCurve> {
        let (scores, labels) = self.scores(kind, p_t, with_faa)?;
        roc_exact(&scores, &labels)
    }
}
