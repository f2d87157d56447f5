//! CSV file formats.
//!
//! * tag stream: `shot,true_n,arrival_ps`
//! * labeled stream: `shot,true_n,arrival_ps,label`
//! * histogram: a `# bin_width_ps=..,range_ps=lo:hi,underflow=..,overflow=..`
//!   header line, then `bin_left_ps,count`
//! * curves: `n,<value>`
//!
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! read back reproduces the exact values and identical inputs give
//! byte-identical files.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::montecarlo::{Histogram, TagRecord, TagStream};

pub const TAGS_HEADER: &str = "shot,true_n,arrival_ps";
pub const LABELED_HEADER: &str = "shot,true_n,arrival_ps,label";
pub const HISTOGRAM_HEADER: &str = "bin_left_ps,count";

fn io_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str, line: usize) -> Result<T> {
    field
        .map(str::trim)
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::Format(format!("line {line}: bad or missing {what}")))
}

pub fn write_tags_csv<W: Write>(mut w: W, tags: &TagStream) -> Result<()> {
    writeln!(w, "{TAGS_HEADER}").map_err(io_err)?;
    for r in &tags.records {
        writeln!(w, "{},{},{}", r.shot_index, r.true_n, r.arrival).map_err(io_err)?;
    }
    Ok(())
}

pub fn write_labeled_csv<W: Write>(mut w: W, tags: &TagStream, labels: &[usize]) -> Result<()> {
    if labels.len() != tags.len() {
        return Err(Error::Format("label count does not match tag count".into()));
    }
    writeln!(w, "{LABELED_HEADER}").map_err(io_err)?;
    for (r, l) in tags.records.iter().zip(labels) {
        writeln!(w, "{},{},{},{}", r.shot_index, r.true_n, r.arrival, l).map_err(io_err)?;
    }
    Ok(())
}

/// Reads a tag stream; a trailing `label` column is accepted and ignored.
pub fn read_tags_csv<R: BufRead>(r: R) -> Result<TagStream> {
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == TAGS_HEADER || h.trim() == LABELED_HEADER => {}
        Some((_, Ok(h))) => return Err(Error::Format(format!("unexpected tag header {h:?}"))),
        Some((_, Err(e))) => return Err(io_err(e)),
        None => return Err(Error::Format("empty tag file".into())),
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let shot_index = parse(f.next(), "shot", i + 1)?;
        let true_n: usize = parse(f.next(), "true_n", i + 1)?;
        let arrival: f64 = parse(f.next(), "arrival_ps", i + 1)?;
        if true_n == 0 || !arrival.is_finite() {
            return Err(Error::Format(format!("line {}: invalid record", i + 1)));
        }
        records.push(TagRecord { shot_index, true_n, arrival });
    }
    Ok(TagStream { records })
}

pub fn write_histogram_csv<W: Write>(mut w: W, h: &Histogram) -> Result<()> {
    writeln!(
        w,
        "# bin_width_ps={},range_ps={}:{},underflow={},overflow={}",
        h.bin_width(),
        h.lo(),
        h.hi(),
        h.underflow,
        h.overflow
    )
    .map_err(io_err)?;
    writeln!(w, "{HISTOGRAM_HEADER}").map_err(io_err)?;
    for (e, c) in h.bin_edges.iter().zip(&h.counts) {
        writeln!(w, "{e},{c}").map_err(io_err)?;
    }
    Ok(())
}

pub fn read_histogram_csv<R: BufRead>(r: R) -> Result<Histogram> {
    let mut lines = r.lines();
    let meta = lines
        .next()
        .ok_or_else(|| Error::Format("empty histogram file".into()))?
        .map_err(io_err)?;
    let meta = meta
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("histogram file must start with a '#' header".into()))?;
    let (mut width, mut lo, mut under, mut over) = (None, None, 0u64, 0u64);
    for kv in meta.split(',') {
        let (k, v) = kv
            .trim()
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header entry {kv:?}")))?;
        match k {
            "bin_width_ps" => width = Some(parse::<f64>(Some(v), "bin_width_ps", 1)?),
            "range_ps" => {
                let (a, _) = v
                    .split_once(':')
                    .ok_or_else(|| Error::Format("range_ps must be lo:hi".into()))?;
                lo = Some(parse::<f64>(Some(a), "range_ps", 1)?);
            }
            "underflow" => under = parse(Some(v), "underflow", 1)?,
            "overflow" => over = parse(Some(v), "overflow", 1)?,
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::Format("missing bin_width_ps".into()))?;
    let lo = lo.ok_or_else(|| Error::Format("missing range_ps".into()))?;
    if !(width > 0.0) {
        return Err(Error::Format("bin_width_ps must be > 0".into()));
    }
    match lines.next() {
        Some(Ok(h)) if h.trim() == HISTOGRAM_HEADER => {}
        _ => return Err(Error::Format(format!("expected column header {HISTOGRAM_HEADER:?}"))),
    }
    let mut counts = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let _left: f64 = parse(f.next(), "bin_left_ps", i + 3)?;
        counts.push(parse::<u64>(f.next(), "count", i + 3)?);
    }
    if counts.is_empty() {
        return Err(Error::Format("histogram has no bins".into()));
    }
    let mut h = Histogram::with_bins(width, lo, counts.len());
    h.total = counts.iter().sum();
    h.counts = counts;
    h.underflow = under;
    h.overflow = over;
    Ok(h)
}

/// Two-column `n,<value_name>` CSV.
pub fn write_curve_csv<W: Write>(mut w: W, value_name: &str, rows: &[(usize, f64)]) -> Result<()> {
    writeln!(w, "n,{value_name}").map_err(io_err)?;
    for (n, v) in rows {
        writeln!(w, "{n},{v}").map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn histogram_round_trip() {
        let mut h = Histogram::new(0.1, -3.0, 7.0).unwrap();
        for t in [-5.0, -3.0, 0.05, 0.1, 6.99, 9.0] {
            h.fill(t);
        }
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &h).unwrap();
        let back = read_histogram_csv(buf.as_slice()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn empty_stream_keeps_header() {
        let mut buf = Vec::new();
        write_tags_csv(&mut buf, &TagStream::default()).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "shot,true_n,arrival_ps\n");
        assert!(read_tags_csv(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn rejects_malformed_tags() {
        assert!(read_tags_csv("a,b,c\n1,1,2\n".as_bytes()).is_err());
        assert!(read_tags_csv("shot,true_n,arrival_ps\n1,0,2\n".as_bytes()).is_err());
        assert!(read_tags_csv("shot,true_n,arrival_ps\n1,x,2\n".as_bytes()).is_err());
    }

    #[test]
    fn labeled_file_reads_as_tags() {
        let tags = TagStream { records: vec![TagRecord { shot_index: 4, true_n: 2, arrival: 1.5 }] };
        let mut buf = Vec::new();
        write_labeled_csv(&mut buf, &tags, &[2]).unwrap();
        assert_eq!(read_tags_csv(buf.as_slice()).unwrap(), tags);
    }

    proptest! {
        #[test]
        fn tag_csv_round_trips_exactly(
            recs in prop::collection::vec((0u64..1_000_000, 1usize..10, -1e6f64..1e6), 0..50)
        ) {
            let tags = TagStream {
                records: recs.into_iter()
                    .map(|(s, n, a)| TagRecord { shot_index: s, true_n: n, arrival: a })
                    .collect(),
            };
            let mut buf = Vec::new();
            write_tags_csv(&mut buf, &tags).unwrap();
            prop_assert_eq!(read_tags_csv(buf.as_slice()).unwrap(), tags);
        }
    }
}
