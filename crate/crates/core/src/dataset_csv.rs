//! CSV dataset format: one trace per row, label first, then signed sizes.
//!
//! ```text
//! # wfbench-dataset v1 classes=20 world=closed
//! 3,1514,-1514,52
//! unmon,100
//! ```
//!
//! The header line is optional on input. Without it the class count is
//! `max label + 1` and the world is open iff any row is `unmon`. A row with a
//! label and no sizes is an empty (fully filtered) trace.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::{Dataset, DefendedTrace, Label, Packet, Provenance, Trace, World};

pub const DATASET_HEADER: &str = "# wfbench-dataset v1";
pub const PROVENANCE_HEADER: &str = "# wfbench-provenance v1";
pub const UNMONITORED: &str = "unmon";

fn parse_label(tok: &str, line: usize) -> Result<Label> {
    if tok == UNMONITORED {
        return Ok(Label::Unmonitored);
    }
    tok.parse::<usize>().map(Label::Monitored).map_err(|_| Error::MalformedRow {
        line,
        reason: format!("bad label {tok:?}"),
    })
}

fn parse_header(line: &str) -> Option<(usize, World)> {
    let rest = line.strip_prefix(DATASET_HEADER)?;
    let mut classes = None;
    let mut world = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("classes", v)) => classes = v.parse().ok(),
            Some(("world", "closed")) => world = Some(World::Closed),
            Some(("world", "open")) => world = Some(World::Open),
            _ => {}
        }
    }
    Some((classes?, world?))
}

fn records(text: &str) -> csv::StringRecordsIntoIter<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .into_records()
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let declared = text.lines().next().and_then(parse_header);
    let mut traces = Vec::new();
    for rec in records(text) {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut fields = rec.iter();
        let Some(label_tok) = fields.next() else { continue };
        if label_tok.is_empty() && rec.len() == 1 {
            continue;
        }
        let label = parse_label(label_tok, line)?;
        let mut packets = Vec::with_capacity(rec.len() - 1);
        for tok in fields {
            let v: i32 = tok.parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("non-integer size {tok:?}"),
            })?;
            let p = Packet::new(v).map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
            packets.push(p);
        }
        traces.push(Trace::possibly_empty(packets, Some(label)));
    }
    let (classes, world) = declared.unwrap_or_else(|| {
        let classes = traces
            .iter()
            .filter_map(|t| t.label().and_then(Label::site_index))
            .max()
            .map_or(0, |m| m + 1);
        let open = traces.iter().any(|t| t.label() == Some(Label::Unmonitored));
        (classes, if open { World::Open } else { World::Closed })
    });
    Dataset::new(traces, classes, world)
}

pub fn read_csv_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let world = match ds.world() {
        World::Closed => "closed",
        World::Open => "open",
    };
    writeln!(w, "{DATASET_HEADER} classes={} world={world}", ds.class_count())?;
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    for t in ds.traces() {
        let label = t.label().expect("dataset traces are labeled");
        let mut row = Vec::with_capacity(t.len() + 1);
        row.push(label.to_string());
        row.extend(t.packets().iter().map(|p| p.size().to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let f = std::io::BufWriter::new(fs::File::create(path)?);
    write_dataset(ds, f)
}

fn provenance_code(p: Provenance) -> &'static str {
    match p {
        Provenance::Original => "O",
        Provenance::Inserted => "I",
        Provenance::SplitChild => "S",
    }
}

/// Sidecar for a defended dataset: per row, the split count followed by one
/// provenance code (`O`, `I`, `S`) per packet of the matching dataset row.
pub fn write_provenance<W: Write>(defended: &[DefendedTrace], mut w: W) -> Result<()> {
    writeln!(w, "{PROVENANCE_HEADER}")?;
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    for d in defended {
        let mut row = Vec::with_capacity(d.packets.len() + 1);
        row.push(d.split_count.to_string());
        row.extend(d.packets.iter().map(|(_, p)| provenance_code(*p).to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Rebuilds defended traces from a dataset and its provenance sidecar.
pub fn parse_provenance(ds: &Dataset, text: &str) -> Result<Vec<DefendedTrace>> {
    let mut out = Vec::with_capacity(ds.len());
    let mut traces = ds.traces().iter();
    for rec in records(text) {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let t = traces.next().ok_or_else(|| {
            Error::MisalignedDatasets(format!("sidecar has more rows than the dataset (line {line})"))
        })?;
        let mut fields = rec.iter();
        let split_count = fields
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::MalformedRow { line, reason: "bad split count".into() })?;
        let codes: Vec<&str> = fields.collect();
        if codes.len() != t.len() {
            return Err(Error::MisalignedDatasets(format!(
                "line {line}: {} provenance codes for {} packets",
                codes.len(),
                t.len()
            )));
        }
        let packets = t
            .packets()
            .iter()
            .zip(codes)
            .map(|(&p, c)| {
                let prov = match c {
                    "O" => Provenance::Original,
                    "I" => Provenance::Inserted,
                    "S" => Provenance::SplitChild,
                    other => {
                        return Err(Error::MalformedRow {
                            line,
                            reason: format!("bad provenance code {other:?}"),
                        })
                    }
                };
                Ok((p, prov))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(DefendedTrace { packets, split_count, label: t.label() });
    }
    if out.len() != ds.len() {
        return Err(Error::MisalignedDatasets(format!(
            "sidecar has {} rows, dataset has {}",
            out.len(),
            ds.len()
        )));
    }
    Ok(out)
}
