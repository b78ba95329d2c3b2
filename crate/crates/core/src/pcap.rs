//! Classic pcap ingestion.
//!
//! Only the classic format with microsecond timestamps and Ethernet link type
//! is understood. Each TCP-over-IPv4 frame becomes one packet whose magnitude
//! is the captured length and whose sign says whether the client sent it.
//! VLAN-tagged frames, IPv6 and anything that is not TCP are skipped.

use std::net::Ipv4Addr;

use crate::error::{Error, Result};
use crate::trace::{Packet, Trace, MAX_WIRE_SIZE};

const MAGIC: u32 = 0xa1b2_c3d4;
const MAGIC_SWAPPED: u32 = 0xd4c3_b2a1;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
const LINKTYPE_ETHERNET: u32 = 1;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETH_HEADER_LEN: usize = 14;
const IPPROTO_TCP: u8 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClientIdentity {
    pub client_ip: Ipv4Addr,
}

impl ClientIdentity {
    pub fn new(client_ip: Ipv4Addr) -> Self {
        ClientIdentity { client_ip }
    }
}

impl std::str::FromStr for ClientIdentity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<Ipv4Addr>()
            .map(ClientIdentity::new)
            .map_err(|_| Error::BadConfig(format!("invalid client IPv4 address {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PcapRecord<'a> {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub incl_len: u32,
    pub orig_len: u32,
    pub payload: &'a [u8],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlobalHeader {
    pub big_endian: bool,
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub snaplen: u32,
    pub linktype: u32,
}

#[derive(Clone, Copy)]
struct Endian(bool);

impl Endian {
    fn u16(self, b: &[u8]) -> u16 {
        let a = [b[0], b[1]];
        if self.0 { u16::from_be_bytes(a) } else { u16::from_le_bytes(a) }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        if self.0 { u32::from_be_bytes(a) } else { u32::from_le_bytes(a) }
    }
}

/// Iterator over the records of a classic pcap byte buffer.
pub struct PcapReader<'a> {
    header: GlobalHeader,
    endian: Endian,
    data: &'a [u8],
    pos: usize,
}

impl<'a> PcapReader<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        if data.len() < 4 {
            return Err(Error::Truncated("missing global header".into()));
        }
        let magic = u32::from_le_bytes([data[0], data[1], data[2], data[3]]);
        let big_endian = match magic {
            MAGIC => false,
            MAGIC_SWAPPED => true,
            other => return Err(Error::BadMagic(other)),
        };
        if data.len() < GLOBAL_HEADER_LEN {
            return Err(Error::Truncated("global header shorter than 24 bytes".into()));
        }
        let e = Endian(big_endian);
        let header = GlobalHeader {
            big_endian,
            version_major: e.u16(&data[4..]),
            version_minor: e.u16(&data[6..]),
            thiszone: e.u32(&data[8..]) as i32,
            sigfigs: e.u32(&data[12..]),
            snaplen: e.u32(&data[16..]),
            linktype: e.u32(&data[20..]),
        };
        Ok(PcapReader { header, endian: e, data, pos: GLOBAL_HEADER_LEN })
    }

    pub fn header(&self) -> &GlobalHeader {
        &self.header
    }
}

impl<'a> Iterator for PcapReader<'a> {
    type Item = Result<PcapRecord<'a>>;

    fn next(&mut self) -> Option<Self::Item> {
        let rest = &self.data[self.pos..];
        if rest.is_empty() {
            return None;
        }
        if rest.len() < RECORD_HEADER_LEN {
            self.pos = self.data.len();
            return Some(Err(Error::Truncated(format!(
                "record header at offset {} has {} of 16 bytes",
                self.data.len() - rest.len(),
                rest.len()
            ))));
        }
        let e = self.endian;
        let incl_len = e.u32(&rest[8..]);
        let rec = PcapRecord {
            ts_sec: e.u32(rest),
            ts_usec: e.u32(&rest[4..]),
            incl_len,
            orig_len: e.u32(&rest[12..]),
            payload: &[],
        };
        let body = &rest[RECORD_HEADER_LEN..];
        if incl_len as usize > body.len() {
            self.pos = self.data.len();
            return Some(Err(Error::Truncated(format!(
                "record claims {incl_len} bytes, {} remain",
                body.len()
            ))));
        }
        if self.header.snaplen != 0 && incl_len > self.header.snaplen {
            self.pos = self.data.len();
            return Some(Err(Error::Truncated(format!(
                "record length {incl_len} exceeds snaplen {}",
                self.header.snaplen
            ))));
        }
        self.pos += RECORD_HEADER_LEN + incl_len as usize;
        Some(Ok(PcapRecord { payload: &body[..incl_len as usize], ..rec }))
    }
}

/// Source and destination of a TCP-over-IPv4 Ethernet frame, or `None` for
/// anything else.
fn tcp_endpoints(frame: &[u8]) -> Option<(Ipv4Addr, Ipv4Addr)> {
    if frame.len() < ETH_HEADER_LEN + 20 {
        return None;
    }
    let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    if ethertype != ETHERTYPE_IPV4 {
        return None;
    }
    let ip = &frame[ETH_HEADER_LEN..];
    if ip[0] >> 4 != 4 || ip[9] != IPPROTO_TCP {
        return None;
    }
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    Some((src, dst))
}

pub fn parse_pcap(bytes: &[u8], who: ClientIdentity) -> Result<Trace> {
    parse_pcap_with_max(bytes, who, MAX_WIRE_SIZE)
}

/// As [`parse_pcap`], with an explicit largest admissible frame size. Larger
/// frames (e.g. offloaded segments) are skipped with a warning.
pub fn parse_pcap_with_max(bytes: &[u8], who: ClientIdentity, max_wire_size: u32) -> Result<Trace> {
    let reader = PcapReader::new(bytes)?;
    if reader.header().linktype != LINKTYPE_ETHERNET {
        return Err(Error::UnsupportedLinkType(reader.header().linktype));
    }
    let mut packets = Vec::new();
    for rec in reader {
        let rec = rec?;
        let Some((src, dst)) = tcp_endpoints(rec.payload) else { continue };
        let sign = if src == who.client_ip {
            1
        } else if dst == who.client_ip {
            -1
        } else {
            continue;
        };
        if rec.incl_len == 0 || rec.incl_len > i32::MAX as u32 {
            continue;
        }
        match Packet::with_max(sign * rec.incl_len as i32, max_wire_size) {
            Ok(p) => packets.push(p),
            Err(_) => log::warn!(
                "skipping {}-byte frame above max wire size {max_wire_size}",
                rec.incl_len
            ),
        }
    }
    Trace::new(packets)
}
