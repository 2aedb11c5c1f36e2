//! Click-record files.
//!
//! ```text
//! pulses=<N> bins=<k> seed=<s>
//! 0100
//! 0000
//! ...
//! ```
//!
//! One line per pulse; character `j` of the line is `1` when bin `j`
//! clicked. Files starting with the gzip magic bytes are decompressed
//! transparently.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::detection::ClickPattern;
use crate::error::{Error, Result};
use crate::simulator::{synthesize_records, CountsAccumulator, SimulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub pulses: u64,
    pub bins: usize,
    pub seed: u64,
}

impl RecordHeader {
    pub fn parse(line: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse { line: 1, msg: format!("{msg}: {line:?}") };
        let mut pulses = None;
        let mut bins = None;
        let mut seed = None;
        for field in line.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| bad("header field without '='"))?;
            let slot = match key {
                "pulses" => &mut pulses,
                "bins" => &mut bins,
                "seed" => &mut seed,
                _ => return Err(bad("unknown header key")),
            };
            *slot = Some(value.parse::<u64>().map_err(|_| bad("header value is not an integer"))?);
        }
        match (pulses, bins, seed) {
            (Some(pulses), Some(bins), Some(seed)) if (1..=32).contains(&bins) => {
                Ok(Self { pulses, bins: bins as usize, seed })
            }
            _ => Err(bad("header must be `pulses=<N> bins=<k> seed=<s>`")),
        }
    }
}

impl std::fmt::Display for RecordHeader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "pulses={} bins={} seed={}", self.pulses, self.bins, self.seed)
    }
}

/// Writes a header and one line per pattern.
pub fn write_records<W, I>(mut out: W, header: RecordHeader, patterns: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = ClickPattern>,
{
    writeln!(out, "{header}")?;
    let mut written = 0u64;
    let mut line = Vec::with_capacity(header.bins + 1);
    for p in patterns {
        line.clear();
        line.extend((0..header.bins).map(|i| if p.contains(i) { b'1' } else { b'0' }));
        line.push(b'\n');
        out.write_all(&line).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("writing pulse {written}: {e}")))
        })?;
        written += 1;
    }
    out.flush()?;
    if written != header.pulses {
        return Err(Error::DataMismatch(format!("header announces {} pulses, wrote {written}", header.pulses)));
    }
    Ok(())
}

/// Simulates `config` and writes its records to `path`, gzip-compressed if asked.
pub fn write_simulated_records(path: &Path, config: &SimulationConfig, gzip: bool) -> Result<()> {
    let header = RecordHeader { pulses: config.n_pulses, bins: config.chain.bins(), seed: config.seed };
    let stream = synthesize_records(config)?;
    let file = BufWriter::new(File::create(path)?);
    if gzip {
        let mut enc = GzEncoder::new(file, Compression::fast());
        write_records(&mut enc, header, stream)?;
        enc.finish()?.flush()?;
    } else {
        write_records(file, header, stream)?;
    }
    Ok(())
}

/// Streams the records of `reader` into `sink`, validating every line.
pub fn ingest<R: BufRead, F: FnMut(ClickPattern)>(mut reader: R, mut sink: F) -> Result<RecordHeader> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Err(Error::Parse { line: 1, msg: "empty file, missing header".into() });
    }
    let header = RecordHeader::parse(line.trim_end())?;
    let mut seen = 0u64;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let lineno = seen as usize + 2;
        let text = line.trim_end_matches(['\n', '\r']);
        if seen == header.pulses {
            if text.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse { line: lineno, msg: format!("more records than the {} announced", header.pulses) });
        }
        let pattern = match ClickPattern::from_bits(text) {
            Some(p) if text.len() == header.bins => p,
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {} characters of 0/1, got {text:?}", header.bins),
                })
            }
        };
        sink(pattern);
        seen += 1;
    }
    if seen != header.pulses {
        return Err(Error::Parse {
            line: seen as usize + 1,
            msg: format!(
                "truncated file: {} of {} records present; last good line is {}",
                seen,
                header.pulses,
                seen + 1
            ),
        });
    }
    Ok(header)
}

fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    drop(file);
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(BufReader::new(file)))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Reads a record file into one accumulator.
pub fn read_records(path: &Path) -> Result<(RecordHeader, CountsAccumulator)> {
    let header = peek_header(path)?;
    let mut acc = CountsAccumulator::new(header.bins)?;
    ingest(open(path)?, |p| acc.record(p))?;
    Ok((header, acc))
}

/// Reads a record file into consecutive accumulators of `block_pulses` pulses each.
pub fn read_record_blocks(path: &Path, block_pulses: u64) -> Result<(RecordHeader, Vec<CountsAccumulator>)> {
    if block_pulses == 0 {
        return Err(Error::Config("bootstrap block must contain at least one pulse".into()));
    }
    let header = peek_header(path)?;
    let mut blocks = Vec::new();
    let mut current = CountsAccumulator::new(header.bins)?;
    ingest(open(path)?, |p| {
        current.record(p);
        if current.pulses() == block_pulses {
            let full = std::mem::replace(&mut current, CountsAccumulator::new(header.bins).expect("checked"));
            blocks.push(full);
        }
    })?;
    if current.pulses() > 0 {
        blocks.push(current);
    }
    Ok((header, blocks))
}

fn peek_header(path: &Path) -> Result<RecordHeader> {
    let mut reader = open(path)?;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header = RecordHeader::parse(line.trim_end())?;
    if header.bins > crate::detection::MAX_BINS {
        return Err(Error::Capacity { what: "bins".into(), value: header.bins, max: crate::detection::MAX_BINS });
    }
    Ok(header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn collect(text: &str) -> Result<(RecordHeader, Vec<ClickPattern>)> {
        let mut out = Vec::new();
        let h = ingest(Cursor::new(text.as_bytes()), |p| out.push(p))?;
        Ok((h, out))
    }

    #[test]
    fn parses_minimal_file() {
        let (h, p) = collect("pulses=3 bins=4 seed=9\n0000\n1001\n0100\n").unwrap();
        assert_eq!(h, RecordHeader { pulses: 3, bins: 4, seed: 9 });
        assert_eq!(p, vec![ClickPattern(0), ClickPattern(0b1001), ClickPattern(0b0010)]);
    }

    #[test]
    fn reports_malformed_line() {
        match collect("pulses=3 bins=4 seed=9\n0000\n10x1\n0100\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match collect("pulses=2 bins=4 seed=9\n0000\n101\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_truncation_with_last_good_line() {
        match collect("pulses=5 bins=4 seed=9\n0000\n1001\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("last good line is 3"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_header_and_extra_records() {
        assert!(collect("pulses=1 bins=4\n0000\n").is_err());
        assert!(collect("pulses=1 bins=4 seed=1 colour=3\n0000\n").is_err());
        assert!(collect("").is_err());
        assert!(collect("pulses=1 bins=4 seed=1\n0000\n0001\n").is_err());
        assert!(collect("pulses=1 bins=4 seed=1\n0000\n\n").is_ok());
    }

    #[test]
    fn header_display_roundtrip() {
        let h = RecordHeader { pulses: 10, bins: 4, seed: u64::MAX };
        assert_eq!(RecordHeader::parse(&h.to_string()).unwrap(), h);
    }
}
