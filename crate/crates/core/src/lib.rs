//! Website fingerprinting workbench.
//!
//! Traces are sequences of signed packet sizes (positive = outbound,
//! negative = inbound). On top of that representation this crate provides:
//!
//! * [`defense`]: random-packet padding (RPD) and the list-assisted defense
//!   (LAD) in its insert and split variants,
//! * [`faa`]: the filter-assisted attack that strips packets whose sizes are
//!   not among the most frequent sizes of normal traffic,
//! * [`classifier`]: fixed-length vectorization, a k-NN baseline and a 1-D CNN
//!   trained with Adam,
//! * [`metrics`]: defensive efficiency, byte overhead, open-world confusion
//!   counts and ROC curves,
//! * [`pcap`] / [`dataset_csv`]: ingestion of classic pcap captures and the CSV
//!   dataset format,
//! * [`synth`]: seeded synthetic closed/open worlds with a skewed size
//!   distribution,
//! * [`experiment`]: the end-to-end sweep protocols tying everything together.

pub mod classifier;
pub mod dataset_csv;
pub mod defense;
pub mod error;
pub mod experiment;
pub mod faa;
pub mod metrics;
pub mod pcap;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{
    Dataset, DefendedTrace, Label, Packet, Provenance, Trace, World, MAX_WIRE_SIZE,
};
