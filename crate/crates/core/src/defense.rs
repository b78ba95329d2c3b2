//! Padding defenses: random packets (RPD) and the list-assisted defense (LAD)
//! in its insert and split variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::stats::FilterList;
use crate::trace::{Dataset, DefendedTrace, Packet, Provenance, Trace, MAX_WIRE_SIZE};

/// Default floor on the second fragment of a split.
pub const DEFAULT_SPLIT_MIN: u32 = 60;

/// Size-range presets for random packets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeRange {
    Small,
    Medium,
    Large,
}

impl SizeRange {
    pub const ALL: [SizeRange; 3] = [SizeRange::Small, SizeRange::Medium, SizeRange::Large];

    /// `(S_m, S_M)` magnitude bounds.
    pub fn bounds(self) -> (u32, u32) {
        match self {
            SizeRange::Small => (1, 500),
            SizeRange::Medium => (1, 1000),
            SizeRange::Large => (1, 1514),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeRange::Small => "small",
            SizeRange::Medium => "medium",
            SizeRange::Large => "large",
        }
    }
}

impl std::str::FromStr for SizeRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(SizeRange::Small),
            "medium" => Ok(SizeRange::Medium),
            "large" => Ok(SizeRange::Large),
            other => Err(Error::BadConfig(format!("unknown size range {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpdConfig {
    pub p_t: f64,
    pub s_min: u32,
    pub s_max: u32,
}

impl RpdConfig {
    pub fn new(p_t: f64, s_min: u32, s_max: u32) -> Result<Self> {
        let cfg = RpdConfig { p_t, s_min, s_max };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(p_t: f64, range: SizeRange) -> Result<Self> {
        let (lo, hi) = range.bounds();
        Self::new(p_t, lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.p_t)?;
        if self.s_min == 0 || self.s_min > self.s_max || self.s_max > MAX_WIRE_SIZE {
            return Err(Error::BadRange { min: self.s_min, max: self.s_max });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadMode {
    Insert,
    Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadConfig {
    pub p_t: f64,
    pub mode: LadMode,
    /// Minimum magnitude of the remainder fragment; only used when splitting.
    pub s_min: u32,
    pub list: FilterList,
}

impl LadConfig {
    pub fn insert(p_t: f64, list: FilterList) -> Result<Self> {
        let cfg = LadConfig { p_t, mode: LadMode::Insert, s_min: DEFAULT_SPLIT_MIN, list };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn split(p_t: f64, s_min: u32, list: FilterList) -> Result<Self> {
        let cfg = LadConfig { p_t, mode: LadMode::Split, s_min, list };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.p_t)?;
        if self.list.is_empty() {
            return Err(Error::EmptyFilterList);
        }
        if self.mode == LadMode::Split && (self.s_min == 0 || self.s_min > MAX_WIRE_SIZE) {
            return Err(Error::BadRange { min: self.s_min, max: MAX_WIRE_SIZE });
        }
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::BadConfig(format!("P_t = {p} is not a probability")));
    }
    Ok(())
}

/// One random-direction packet with magnitude uniform in `[s_min, s_max]`.
pub fn random_packet(s_min: u32, s_max: u32, rng: &mut SeededRng) -> Result<Packet> {
    if s_min == 0 || s_min > s_max {
        return Err(Error::BadRange { min: s_min, max: s_max });
    }
    let sign = if rng.randi(1, 2) == 1 { -1 } else { 1 };
    let magnitude = rng.randi(s_min as i64, s_max as i64) as i32;
    Ok(Packet::from_nonzero(sign * magnitude))
}

pub fn rpd(t: &Trace, cfg: &RpdConfig, rng: &mut SeededRng) -> Result<DefendedTrace> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(t.len() * 2);
    for &p in t.packets() {
        out.push((p, Provenance::Original));
        if rng.randr() < cfg.p_t {
            out.push((random_packet(cfg.s_min, cfg.s_max, rng)?, Provenance::Inserted));
        }
    }
    Ok(DefendedTrace { packets: out, split_count: 0, label: t.label() })
}

/// Weighted draw over filter-list entries via cumulative weights.
struct Cumulative {
    sizes: Vec<i32>,
    cum: Vec<f64>,
}

impl Cumulative {
    fn new(entries: impl IntoIterator<Item = (i32, f64)>) -> Self {
        let mut sizes = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for (s, w) in entries {
            acc += w;
            sizes.push(s);
            cum.push(acc);
        }
        Cumulative { sizes, cum }
    }

    /// Draws among the first `k` entries, weighted.
    fn draw_prefix(&self, k: usize, rng: &mut SeededRng) -> i32 {
        debug_assert!(k > 0 && k <= self.sizes.len());
        let u = rng.randr() * self.cum[k - 1];
        let idx = self.cum[..k].partition_point(|&c| c <= u).min(k - 1);
        self.sizes[idx]
    }

    fn draw(&self, rng: &mut SeededRng) -> i32 {
        self.draw_prefix(self.sizes.len(), rng)
    }
}

/// Samples one size from `L` weighted by `P_L`.
pub fn sample_list(list: &FilterList, rng: &mut SeededRng) -> Result<Packet> {
    if list.is_empty() {
        return Err(Error::EmptyFilterList);
    }
    Ok(Packet::from_nonzero(Cumulative::new(list.entries()).draw(rng)))
}

pub fn lad_insert(t: &Trace, cfg: &LadConfig, rng: &mut SeededRng) -> Result<DefendedTrace> {
    cfg.validate()?;
    let sampler = Cumulative::new(cfg.list.entries());
    let mut out = Vec::with_capacity(t.len() * 2);
    for &p in t.packets() {
        out.push((p, Provenance::Original));
        if rng.randr() < cfg.p_t {
            out.push((Packet::from_nonzero(sampler.draw(rng)), Provenance::Inserted));
        }
    }
    Ok(DefendedTrace { packets: out, split_count: 0, label: t.label() })
}

/// List entries of one direction, ascending by magnitude, so that "magnitude
/// below |P|" is a prefix.
struct SignedCandidates {
    outbound: Cumulative,
    inbound: Cumulative,
}

impl SignedCandidates {
    fn new(list: &FilterList) -> Self {
        let mut pos: Vec<(i32, f64)> = list.entries().filter(|e| e.0 > 0).collect();
        let mut neg: Vec<(i32, f64)> = list.entries().filter(|e| e.0 < 0).collect();
        pos.sort_by_key(|e| e.0.unsigned_abs());
        neg.sort_by_key(|e| e.0.unsigned_abs());
        SignedCandidates { outbound: Cumulative::new(pos), inbound: Cumulative::new(neg) }
    }

    fn for_packet(&self, p: Packet) -> (&Cumulative, usize) {
        let side = if p.is_outbound() { &self.outbound } else { &self.inbound };
        let k = side.sizes.partition_point(|s| s.unsigned_abs() < p.magnitude());
        (side, k)
    }
}

pub fn lad_split(t: &Trace, cfg: &LadConfig, rng: &mut SeededRng) -> Result<DefendedTrace> {
    cfg.validate()?;
    let candidates = SignedCandidates::new(&cfg.list);
    let mut out = Vec::with_capacity(t.len() * 2);
    let mut split_count = 0;
    for &p in t.packets() {
        if rng.randr() < cfg.p_t {
            let (side, k) = candidates.for_packet(p);
            if k > 0 {
                let first = side.draw_prefix(k, rng);
                let rest = p.size() - first;
                if rest.unsigned_abs() >= cfg.s_min {
                    out.push((Packet::from_nonzero(first), Provenance::SplitChild));
                    out.push((Packet::from_nonzero(rest), Provenance::SplitChild));
                    split_count += 1;
                    continue;
                }
            }
        }
        out.push((p, Provenance::Original));
    }
    Ok(DefendedTrace { packets: out, split_count, label: t.label() })
}

/// Probability that `lad_split` splits packet `p`, given the config.
pub fn split_probability(p: Packet, cfg: &LadConfig) -> f64 {
    let candidates = SignedCandidates::new(&cfg.list);
    let (side, k) = candidates.for_packet(p);
    if k == 0 {
        return 0.0;
    }
    let total = side.cum[k - 1];
    let ok: f64 = (0..k)
        .filter(|&i| (p.size() - side.sizes[i]).unsigned_abs() >= cfg.s_min)
        .map(|i| side.cum[i] - if i == 0 { 0.0 } else { side.cum[i - 1] })
        .sum();
    cfg.p_t * ok / total
}

/// Any of the defenses, or none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Defense {
    None,
    Rpd(RpdConfig),
    Lad(LadConfig),
}

impl Defense {
    pub fn apply(&self, t: &Trace, rng: &mut SeededRng) -> Result<DefendedTrace> {
        match self {
            Defense::None => Ok(DefendedTrace {
                packets: t.packets().iter().map(|&p| (p, Provenance::Original)).collect(),
                split_count: 0,
                label: t.label(),
            }),
            Defense::Rpd(cfg) => rpd(t, cfg, rng),
            Defense::Lad(cfg) => match cfg.mode {
                LadMode::Insert => lad_insert(t, cfg, rng),
                LadMode::Split => lad_split(t, cfg, rng),
            },
        }
    }
}

/// Defends every trace with its own stream derived from `(seed, index)`.
pub fn defend_dataset(ds: &Dataset, defense: &Defense, seed: u64) -> Result<Vec<DefendedTrace>> {
    ds.traces()
        .par_iter()
        .enumerate()
        .map(|(i, t)| defense.apply(t, &mut SeededRng::derived(seed, i as u64)))
        .collect()
}

/// The attacker's view of a defended dataset.
pub fn observed_dataset(ds: &Dataset, defended: &[DefendedTrace]) -> Result<Dataset> {
    let traces = defended
        .iter()
        .map(crate::trace::strip_provenance)
        .collect::<Result<Vec<_>>>()?;
    ds.with_traces(traces)
}
