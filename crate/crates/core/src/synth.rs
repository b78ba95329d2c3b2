//! Seeded synthetic worlds.
//!
//! Each monitored site owns a fixed signature drawn from a skewed size
//! alphabet. A visit replays the signature with per-packet jitter (drop, or
//! resize to an adjacent alphabet entry) and pads it with alphabet-sampled
//! filler up to a random length. Unmonitored visits use fresh one-off
//! signatures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::trace::{Dataset, Label, Packet, Trace, World};

const SIGNATURE_STREAM: u64 = 0x5349_474e_0000_0001;
const VISIT_STREAM: u64 = 0x5649_5354_0000_0002;
const UNMON_SIGNATURE_STREAM: u64 = 0x554e_4d53_0000_0003;
const UNMON_VISIT_STREAM: u64 = 0x554e_4d56_0000_0004;

/// Six dominant sizes carrying 65% of the mass, then a light tail.
pub fn default_alphabet() -> Vec<(i32, f64)> {
    let mut a = vec![
        (-1514, 0.20),
        (52, 0.15),
        (-52, 0.10),
        (-1460, 0.08),
        (1514, 0.06),
        (1460, 0.06),
    ];
    let tail = [
        -66, 66, -90, 90, 120, -120, 150, -150, 200, -200, 250, -300, 300, -400, 420, -500, 517,
        -576, 583, -640, 640, 700, -800, 800, -900, -1000, 1000, -1100, 1200, -1200, -1300, -1400,
        60, -60,
    ];
    // Harmonic decay, normalized to the remaining 35%.
    let raw: Vec<f64> = (0..tail.len()).map(|i| 1.0 / (i as f64 + 4.0)).collect();
    let z: f64 = raw.iter().sum();
    a.extend(tail.iter().zip(&raw).map(|(&s, &w)| (s, 0.35 * w / z)));
    a
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub num_sites: usize,
    pub traces_per_site: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub alphabet: Vec<(i32, f64)>,
    pub signature_len: usize,
    pub drop_prob: f64,
    pub resize_prob: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_sites: 20,
            traces_per_site: 40,
            min_len: 200,
            max_len: 400,
            alphabet: default_alphabet(),
            signature_len: 100,
            drop_prob: 0.02,
            resize_prob: 0.05,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if self.num_sites < 2 {
            return bad(format!("need at least 2 sites, got {}", self.num_sites));
        }
        if self.traces_per_site < 2 {
            return bad(format!("need at least 2 traces per site, got {}", self.traces_per_site));
        }
        if self.signature_len == 0 || self.min_len < self.signature_len || self.min_len > self.max_len {
            return bad(format!(
                "need 0 < signature_len <= min_len <= max_len, got {} / {} / {}",
                self.signature_len, self.min_len, self.max_len
            ));
        }
        if self.alphabet.is_empty() {
            return bad("alphabet is empty".into());
        }
        for &(s, w) in &self.alphabet {
            Packet::new(s)?;
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("alphabet weight {w} for size {s}"));
            }
        }
        let mut sizes: Vec<i32> = self.alphabet.iter().map(|e| e.0).collect();
        sizes.sort_unstable();
        if sizes.windows(2).any(|w| w[0] == w[1]) {
            return bad("alphabet sizes must be distinct".into());
        }
        for p in [self.drop_prob, self.resize_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("jitter probability {p}"));
            }
        }
        Ok(())
    }
}

struct Alphabet {
    /// Ascending by signed size; neighbors are adjacent entries.
    sizes: Vec<i32>,
    cum: Vec<f64>,
}

impl Alphabet {
    fn new(entries: &[(i32, f64)]) -> Self {
        let mut e = entries.to_vec();
        e.sort_by_key(|x| x.0);
        let mut acc = 0.0;
        let cum = e.iter().map(|x| { acc += x.1; acc }).collect();
        Alphabet { sizes: e.iter().map(|x| x.0).collect(), cum }
    }

    fn draw(&self, rng: &mut SeededRng) -> usize {
        let u = rng.randr() * self.cum[self.cum.len() - 1];
        self.cum.partition_point(|&c| c <= u).min(self.sizes.len() - 1)
    }

    fn neighbor(&self, i: usize, rng: &mut SeededRng) -> usize {
        let n = self.sizes.len();
        if n == 1 {
            return i;
        }
        if i == 0 {
            1
        } else if i == n - 1 {
            n - 2
        } else if rng.randi(0, 1) == 0 {
            i - 1
        } else {
            i + 1
        }
    }
}

fn signature(a: &Alphabet, len: usize, rng: &mut SeededRng) -> Vec<usize> {
    (0..len).map(|_| a.draw(rng)).collect()
}

fn visit(cfg: &WorldConfig, a: &Alphabet, sig: &[usize], rng: &mut SeededRng) -> Vec<Packet> {
    let target = rng.randi(cfg.min_len as i64, cfg.max_len as i64) as usize;
    let mut out = Vec::with_capacity(target);
    for &i in sig {
        if rng.randr() < cfg.drop_prob {
            continue;
        }
        let j = if rng.randr() < cfg.resize_prob { a.neighbor(i, rng) } else { i };
        out.push(Packet::from_nonzero(a.sizes[j]));
    }
    while out.len() < target {
        out.push(Packet::from_nonzero(a.sizes[a.draw(rng)]));
    }
    out
}

pub fn gen_closed_world(cfg: &WorldConfig) -> Result<Dataset> {
    cfg.validate()?;
    let a = Alphabet::new(&cfg.alphabet);
    let traces: Vec<Trace> = (0..cfg.num_sites)
        .into_par_iter()
        .flat_map_iter(|site| {
            let sig = signature(&a, cfg.signature_len, &mut SeededRng::derived(cfg.seed ^ SIGNATURE_STREAM, site as u64));
            let a = &a;
            (0..cfg.traces_per_site).map(move |r| {
                let idx = (site * cfg.traces_per_site + r) as u64;
                let mut rng = SeededRng::derived(cfg.seed ^ VISIT_STREAM, idx);
                Trace::possibly_empty(visit(cfg, a, &sig, &mut rng), Some(Label::Monitored(site)))
            })
        })
        .collect();
    Dataset::new(traces, cfg.num_sites, World::Closed)
}

pub fn gen_open_world(cfg: &WorldConfig, num_unmonitored: usize) -> Result<Dataset> {
    let closed = gen_closed_world(cfg)?;
    if num_unmonitored == 0 {
        return Ok(closed);
    }
    let a = Alphabet::new(&cfg.alphabet);
    let extra: Vec<Trace> = (0..num_unmonitored)
        .into_par_iter()
        .map(|j| {
            let sig = signature(&a, cfg.signature_len, &mut SeededRng::derived(cfg.seed ^ UNMON_SIGNATURE_STREAM, j as u64));
            let mut rng = SeededRng::derived(cfg.seed ^ UNMON_VISIT_STREAM, j as u64);
            Trace::possibly_empty(visit(cfg, &a, &sig, &mut rng), Some(Label::Unmonitored))
        })
        .collect();
    let mut traces = closed.into_traces();
    traces.extend(extra);
    Dataset::new(traces, cfg.num_sites, World::Open)
}
