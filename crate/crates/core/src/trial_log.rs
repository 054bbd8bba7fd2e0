//! Text format for trial logs.
//!
//! ```text
//! # format=chsh-trial-log/1
//! # n_trials=4
//! # seed=7
//! # ...
//! # columns=index,x,y,a,b
//! 0,1,0,1,1
//! 1,0,0,0,0
//! ```
//!
//! Header lines are `# key=value`; records are decimal and unpadded, with
//! strictly increasing indices. Floats are written in shortest round-trip
//! form, so a config read back from a header is bit-identical.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::finite_stats::TrialTally;
use crate::simulator::{ExperimentConfig, NoiseModel, OutcomeCounts, TrialRecord, TrialSink};

pub const FORMAT_VERSION: &str = "chsh-trial-log/1";
pub const COLUMNS: &str = "index,x,y,a,b";

/// Ordered `key=value` header pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogHeader {
    pub entries: Vec<(String, String)>,
}

impl LogHeader {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::InvalidConfig(format!("log header lacks `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::InvalidConfig(format!("log header `{key}={raw}` is malformed")))
    }
}

/// Header entries describing `config`.
pub fn config_header(config: &ExperimentConfig) -> LogHeader {
    let nm = &config.noise;
    let mut h = LogHeader::default();
    h.push("n_trials", config.n_trials);
    h.push("block_size", config.block_size);
    h.push("report_size", config.report_size);
    h.push("seed", config.seed);
    h.push("repetition_rate", config.repetition_rate);
    h.push("bell_fidelity", nm.bell_fidelity);
    h.push("alpha_a", nm.alpha_a);
    h.push("theta_offset", nm.theta_offset);
    h.push("readout_eg_a", nm.readout_eg_a);
    h.push("readout_ge_a", nm.readout_ge_a);
    h.push("readout_eg_b", nm.readout_eg_b);
    h.push("readout_ge_b", nm.readout_ge_b);
    h.push("drift_amplitude", nm.drift_amplitude);
    h.push("drift_period", nm.drift_period);
    h
}

/// Inverse of [`config_header`].
pub fn config_from_header(h: &LogHeader) -> Result<ExperimentConfig> {
    let config = ExperimentConfig {
        n_trials: h.parsed("n_trials")?,
        block_size: h.parsed("block_size")?,
        report_size: h.parsed("report_size")?,
        seed: h.parsed("seed")?,
        repetition_rate: h.parsed("repetition_rate")?,
        noise: NoiseModel {
            bell_fidelity: h.parsed("bell_fidelity")?,
            alpha_a: h.parsed("alpha_a")?,
            theta_offset: h.parsed("theta_offset")?,
            readout_eg_a: h.parsed("readout_eg_a")?,
            readout_ge_a: h.parsed("readout_ge_a")?,
            readout_eg_b: h.parsed("readout_eg_b")?,
            readout_ge_b: h.parsed("readout_ge_b")?,
            drift_amplitude: h.parsed("drift_amplitude")?,
            drift_period: h.parsed("drift_period")?,
        },
    };
    config.validate()?;
    Ok(config)
}

/// Writes the header up front, then records as they arrive.
pub struct LogWriter<W: Write> {
    out: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut out: W, header: &LogHeader) -> io::Result<Self> {
        writeln!(out, "# format={FORMAT_VERSION}")?;
        for (k, v) in &header.entries {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "# columns={COLUMNS}")?;
        Ok(Self { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TrialSink for LogWriter<W> {
    fn accept(&mut self, batch: &[TrialRecord]) -> io::Result<()> {
        for r in batch {
            writeln!(self.out, "{},{},{},{},{}", r.index, r.x, r.y, r.a, r.b)?;
        }
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Header, tally and outcome counts of a parsed log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSummary {
    pub header: LogHeader,
    pub tally: TrialTally,
    pub counts: OutcomeCounts,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_bit(field: &str, name: &str, line: usize) -> Result<u8> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(parse_err(line, format!("{name} must be 0 or 1, found `{field}`"))),
    }
}

fn parse_record(text: &str, line: usize) -> Result<TrialRecord> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != 5 {
        return Err(parse_err(line, format!("expected 5 fields, found {}", fields.len())));
    }
    let index = fields[0]
        .parse::<u64>()
        .map_err(|_| parse_err(line, format!("bad trial index `{}`", fields[0])))?;
    Ok(TrialRecord {
        index,
        x: parse_bit(fields[1], "x", line)?,
        y: parse_bit(fields[2], "y", line)?,
        a: parse_bit(fields[3], "a", line)?,
        b: parse_bit(fields[4], "b", line)?,
    })
}

/// Parses a log, handing each record to `visit` in order. Returns the header.
pub fn read_log<R: BufRead>(reader: R, mut visit: impl FnMut(&TrialRecord)) -> Result<LogHeader> {
    let mut header = LogHeader::default();
    let mut seen_format = false;
    let mut in_body = false;
    let mut last_index: Option<u64> = None;
    let mut count = 0u64;
    let mut line_no = 0usize;
    for line in reader.lines() {
        let line = line?;
        line_no += 1;
        let text = line.trim_end_matches('\r');
        if let Some(rest) = text.strip_prefix('#') {
            if in_body {
                return Err(parse_err(line_no, "header line after the first record"));
            }
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, "header line is not `# key=value`"))?;
            match (k, seen_format) {
                ("format", false) if v == FORMAT_VERSION => seen_format = true,
                ("format", false) => return Err(parse_err(line_no, format!("unsupported format `{v}`"))),
                (_, false) => return Err(parse_err(line_no, "first line must declare the format")),
                ("columns", true) if v == COLUMNS => in_body = true,
                ("columns", true) => return Err(parse_err(line_no, format!("unexpected columns `{v}`"))),
                (k, true) => header.push(k, v),
            }
            continue;
        }
        if !in_body {
            return Err(parse_err(line_no, "record before the `# columns=` line"));
        }
        let r = parse_record(text, line_no)?;
        if last_index.is_some_and(|prev| r.index <= prev) {
            return Err(parse_err(line_no, format!("trial index {} is not increasing", r.index)));
        }
        last_index = Some(r.index);
        count += 1;
        visit(&r);
    }
    if !in_body {
        return Err(parse_err(line_no.max(1), "log has no `# columns=` line"));
    }
    if let Some(expected) = header.get("n_trials") {
        if expected.parse::<u64>().ok() != Some(count) {
            return Err(parse_err(
                line_no,
                format!("header declares n_trials={expected} but {count} records were read"),
            ));
        }
    }
    Ok(header)
}

/// Parses a log and tallies its wins.
pub fn summarize_log<R: BufRead>(reader: R) -> Result<LogSummary> {
    let mut counts = OutcomeCounts::default();
    let header = read_log(reader, |r| counts.add(r))?;
    let tally = TrialTally::new(counts.total(), counts.wins())?;
    Ok(LogSummary { header, tally, counts })
}

/// Parses a log into memory.
pub fn read_records<R: BufRead>(reader: R) -> Result<(LogHeader, Vec<TrialRecord>)> {
    let mut records = Vec::new();
    let header = read_log(reader, |r| records.push(*r))?;
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::simulate;

    fn small_log() -> (ExperimentConfig, Vec<u8>) {
        let mut config = ExperimentConfig::new(2000, 5, NoiseModel::lab());
        config.block_size = 500;
        let mut w = LogWriter::new(Vec::new(), &config_header(&config)).unwrap();
        simulate(&config, &mut w).unwrap();
        (config, w.into_inner())
    }

    #[test]
    fn round_trip() {
        let (config, bytes) = small_log();
        let (header, records) = read_records(&bytes[..]).unwrap();
        assert_eq!(records.len(), 2000);
        assert_eq!(config_from_header(&header).unwrap(), config);
        let mut direct = Vec::new();
        let summary = simulate(&config, &mut direct).unwrap();
        assert_eq!(records, direct);
        assert_eq!(summarize_log(&bytes[..]).unwrap().tally, summary.tally);
    }

    #[test]
    fn errors_name_the_line() {
        let (_, bytes) = small_log();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let first_record = lines.iter().position(|l| !l.starts_with('#')).unwrap();
        lines[first_record + 3] = "3,1,0";
        let broken = lines.join("\n");
        match summarize_log(broken.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, first_record + 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_structure() {
        let ok = "# format=chsh-trial-log/1\n# columns=index,x,y,a,b\n0,0,0,0,0\n1,1,1,1,0\n";
        assert_eq!(summarize_log(ok.as_bytes()).unwrap().tally.wins(), 2);
        let cases = [
            "0,0,0,0,0\n",
            "# format=other/9\n",
            "# format=chsh-trial-log/1\n# columns=index,x,y,a,b\n1,0,0,0,0\n1,0,0,0,0\n",
            "# format=chsh-trial-log/1\n# columns=index,x,y,a,b\n0,0,2,0,0\n",
            "# format=chsh-trial-log/1\n# n_trials=3\n# columns=index,x,y,a,b\n0,0,0,0,0\n",
            "# format=chsh-trial-log/1\n# columns=index,x,y,a,b\n0,0,0,0,0\n# late=1\n",
        ];
        for c in cases {
            assert!(matches!(summarize_log(c.as_bytes()), Err(Error::Parse { .. })), "{c:?}");
        }
    }
}
