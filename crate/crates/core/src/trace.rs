//! Packets, traces, labeled datasets and defended traces.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest on-wire Ethernet frame we expect to observe.
pub const MAX_WIRE_SIZE: u32 = 1514;

/// One observed packet: magnitude is the wire size in bytes, sign is the
/// direction (positive = outbound from the client).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct Packet(i32);

impl Packet {
    pub fn new(signed_size: i32) -> Result<Self> {
        Self::with_max(signed_size, MAX_WIRE_SIZE)
    }

    pub fn with_max(signed_size: i32, max_wire_size: u32) -> Result<Self> {
        if signed_size == 0 {
            return Err(Error::ZeroSize);
        }
        if signed_size.unsigned_abs() > max_wire_size {
            return Err(Error::OversizedPacket {
                size: signed_size as i64,
                max: max_wire_size,
            });
        }
        Ok(Packet(signed_size))
    }

    /// Callers guarantee `signed_size != 0`.
    pub(crate) fn from_nonzero(signed_size: i32) -> Self {
        debug_assert!(signed_size != 0);
        Packet(signed_size)
    }

    pub fn size(self) -> i32 {
        self.0
    }

    pub fn magnitude(self) -> u32 {
        self.0.unsigned_abs()
    }

    pub fn is_outbound(self) -> bool {
        self.0 > 0
    }
}

impl TryFrom<i32> for Packet {
    type Error = Error;

    fn try_from(v: i32) -> Result<Self> {
        Packet::new(v)
    }
}

impl From<Packet> for i32 {
    fn from(p: Packet) -> i32 {
        p.0
    }
}

impl fmt::Display for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Monitored(usize),
    Unmonitored,
}

impl Label {
    pub fn site_index(self) -> Option<usize> {
        match self {
            Label::Monitored(i) => Some(i),
            Label::Unmonitored => None,
        }
    }

    pub fn is_monitored(self) -> bool {
        matches!(self, Label::Monitored(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Monitored(i) => write!(f, "{i}"),
            Label::Unmonitored => f.write_str("unmon"),
        }
    }
}

/// Ordered packets of one page load.
///
/// Traces built with [`Trace::new`] are non-empty. Filtering can legitimately
/// produce an empty trace; those exist only as attack outputs and vectorize
/// to all zeros.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    packets: Vec<Packet>,
    label: Option<Label>,
}

impl Trace {
    pub fn new(packets: Vec<Packet>) -> Result<Self> {
        if packets.is_empty() {
            return Err(Error::EmptyTrace);
        }
        Ok(Trace { packets, label: None })
    }

    pub fn labeled(packets: Vec<Packet>, label: Label) -> Result<Self> {
        Ok(Self::new(packets)?.with_label(Some(label)))
    }

    /// Builds a trace from raw signed sizes, validating each packet.
    pub fn from_sizes(sizes: &[i32]) -> Result<Self> {
        let packets = sizes.iter().map(|&s| Packet::new(s)).collect::<Result<Vec<_>>>()?;
        Self::new(packets)
    }

    pub(crate) fn possibly_empty(packets: Vec<Packet>, label: Option<Label>) -> Self {
        Trace { packets, label }
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    pub fn packets(&self) -> &[Packet] {
        &self.packets
    }

    pub fn sizes(&self) -> Vec<i32> {
        self.packets.iter().map(|p| p.size()).collect()
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn signed_sum(&self) -> i64 {
        self.packets.iter().map(|p| p.size() as i64).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.packets.iter().map(|p| p.magnitude() as u64).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum World {
    Closed,
    Open,
}

/// Labeled traces with a declared class count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    traces: Vec<Trace>,
    class_count: usize,
    world: World,
}

impl Dataset {
    pub fn new(traces: Vec<Trace>, class_count: usize, world: World) -> Result<Self> {
        for t in &traces {
            match t.label() {
                Some(Label::Monitored(i)) if i >= class_count => {
                    return Err(Error::LabelOutOfRange { index: i, classes: class_count })
                }
                Some(Label::Unmonitored) if world == World::Closed => {
                    return Err(Error::UnmonitoredInClosedWorld)
                }
                None => {
                    return Err(Error::BadConfig("dataset traces must be labeled".into()))
                }
                _ => {}
            }
        }
        Ok(Dataset { traces, class_count, world })
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn world(&self) -> World {
        self.world
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.traces.iter().map(|t| t.label().expect("dataset traces are labeled")).collect()
    }

    /// Same class count and world, different traces. Labels are re-validated.
    pub fn with_traces(&self, traces: Vec<Trace>) -> Result<Self> {
        Dataset::new(traces, self.class_count, self.world)
    }

    pub fn total_bytes(&self) -> u64 {
        self.traces.iter().map(Trace::total_bytes).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    Inserted,
    SplitChild,
}

/// Output of a defense: every packet tagged with where it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefendedTrace {
    pub packets: Vec<(Packet, Provenance)>,
    pub split_count: usize,
    pub label: Option<Label>,
}

impl DefendedTrace {
    pub fn count(&self, provenance: Provenance) -> usize {
        self.packets.iter().filter(|(_, p)| *p == provenance).count()
    }

    /// Packets tagged `Original`, in order.
    pub fn originals(&self) -> Vec<Packet> {
        self.of(Provenance::Original)
    }

    pub fn of(&self, provenance: Provenance) -> Vec<Packet> {
        self.packets
            .iter()
            .filter(|(_, p)| *p == provenance)
            .map(|(pk, _)| *pk)
            .collect()
    }

    pub fn inserted_bytes(&self) -> u64 {
        self.packets
            .iter()
            .filter(|(_, p)| *p == Provenance::Inserted)
            .map(|(pk, _)| pk.magnitude() as u64)
            .sum()
    }

    pub fn signed_sum(&self) -> i64 {
        self.packets.iter().map(|(p, _)| p.size() as i64).sum()
    }
}

/// What the attacker sees: the defended packets without their tags.
pub fn strip_provenance(d: &DefendedTrace) -> Result<Trace> {
    let packets: Vec<Packet> = d.packets.iter().map(|(p, _)| *p).collect();
    Ok(Trace::new(packets)?.with_label(d.label))
}
