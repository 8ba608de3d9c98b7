//! Text file formats for recordings, event logs and trial tables.
//!
//! Raw recording (`.csv`): three header records followed by one record per
//! channel, channel-major:
//!
//! ```text
//! sample_rate_hz,500
//! channel_names,Fp1,Fp2,...,A1,A2
//! earlobe_channels,A1,A2
//! Fp1,12.5,11.9,...
//! ...
//! ```
//!
//! Event log: `deviation_onset_s,response_onset_s` header, one event per row.
//!
//! Trial table: `subject_id,t_s,f_000,...,f_059,di` header, one trial per row.
//! Floats are written in shortest round-trip form, so read-after-write is
//! exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use super::{EventLog, RawRecording, TrialTable};
use crate::error::{Error, Result};

fn open_reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(ReaderBuilder::new()
        .has_headers(headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn line_of(record: &StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn next_record(path: &Path, records: &mut csv::StringRecordsIter<'_, File>, what: &str) -> Result<StringRecord> {
    match records.next() {
        Some(Ok(r)) => Ok(r),
        Some(Err(e)) => Err(csv_error(path, e)),
        None => Err(Error::parse(path, 0, format!("missing {what} record"))),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(path, line, e.to_string())
}

fn parse_f64(path: &Path, record: &StringRecord, field: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::parse(path, line_of(record), format!("not a number: {field:?}")))
}

pub fn read_recording(path: &Path) -> Result<RawRecording> {
    let mut reader = open_reader(path, false)?;
    let mut records = reader.records();

    let rate = next_record(path, &mut records, "sample_rate_hz")?;
    if rate.get(0) != Some("sample_rate_hz") || rate.len() != 2 {
        return Err(Error::parse(path, line_of(&rate), "expected `sample_rate_hz,<Hz>`"));
    }
    let fs = parse_f64(path, &rate, &rate[1])?;

    let names_rec = next_record(path, &mut records, "channel_names")?;
    if names_rec.get(0) != Some("channel_names") {
        return Err(Error::parse(path, line_of(&names_rec), "expected `channel_names,...`"));
    }
    let names: Vec<String> = names_rec.iter().skip(1).map(str::to_owned).collect();

    let ear_rec = next_record(path, &mut records, "earlobe_channels")?;
    if ear_rec.get(0) != Some("earlobe_channels") {
        return Err(Error::parse(path, line_of(&ear_rec), "expected `earlobe_channels,...`"));
    }
    let ear_names: Vec<&str> = ear_rec.iter().skip(1).filter(|s| !s.is_empty()).collect();
    let earlobes = match ear_names.as_slice() {
        [] => None,
        [a, b] => {
            let find = |n: &str| {
                names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::parse(path, line_of(&ear_rec), format!("unknown earlobe channel {n:?}")))
            };
            Some((find(a)?, find(b)?))
        }
        _ => {
            return Err(Error::parse(
                path,
                line_of(&ear_rec),
                "earlobe_channels lists exactly two channel names or none",
            ))
        }
    };

    let mut samples = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let rec = next_record(path, &mut records, &format!("channel {name}"))?;
        if rec.get(0) != Some(name.as_str()) {
            return Err(Error::parse(
                path,
                line_of(&rec),
                format!("expected samples of channel {k} ({name:?})"),
            ));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|f| parse_f64(path, &rec, f))
            .collect::<Result<Vec<_>>>()?;
        samples.push(values);
    }
    if let Some(extra) = records.next() {
        let line = extra.map(|r| line_of(&r)).unwrap_or(0);
        return Err(Error::parse(path, line, "unexpected trailing record"));
    }
    RawRecording::new(samples, fs, names, earlobes).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn write_recording(path: &Path, rec: &RawRecording) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "sample_rate_hz,{}", rec.sample_rate_hz)?;
    writeln!(out, "channel_names,{}", rec.channel_names.join(","))?;
    match rec.earlobe_indices {
        Some((a, b)) => writeln!(
            out,
            "earlobe_channels,{},{}",
            rec.channel_names[a], rec.channel_names[b]
        )?,
        None => writeln!(out, "earlobe_channels")?,
    }
    for (name, ch) in rec.channel_names.iter().zip(&rec.samples) {
        write!(out, "{name}")?;
        for v in ch {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_event_log(path: &Path) -> Result<EventLog> {
    let mut reader = open_reader(path, true)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column {name:?}")))
    };
    let (dev, resp) = (col("deviation_onset_s")?, col("response_onset_s")?);
    let mut log = EventLog::default();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| Error::parse(path, line_of(&rec), "missing field"))
        };
        log.deviation_onsets.push(parse_f64(path, &rec, field(dev)?)?);
        log.response_onsets.push(parse_f64(path, &rec, field(resp)?)?);
    }
    log.validate().map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(log)
}

pub fn write_event_log(path: &Path, log: &EventLog) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "deviation_onset_s,response_onset_s")?;
    for (d, r) in log.deviation_onsets.iter().zip(&log.response_onsets) {
        writeln!(out, "{d},{r}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn feature_column(l: usize) -> String {
    format!("f_{l:03}")
}

pub fn write_trial_table(path: &Path, table: &TrialTable) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "subject_id,t_s")?;
    for l in 0..table.dim() {
        write!(out, ",{}", feature_column(l))?;
    }
    writeln!(out, ",di")?;
    for ((row, y), t) in table.features.iter().zip(&table.labels).zip(&table.trial_times) {
        write!(out, "{},{t}", table.subject_id)?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{y}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads every subject in a trial-table file, in order of first appearance.
pub fn read_trial_tables(path: &Path) -> Result<Vec<TrialTable>> {
    let mut reader = open_reader(path, true)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let n = headers.len();
    if n < 3 || &headers[0] != "subject_id" || &headers[1] != "t_s" || &headers[n - 1] != "di" {
        return Err(Error::parse(path, 1, "header must be subject_id,t_s,f_000,...,di"));
    }
    let d = n - 3;
    for l in 0..d {
        if headers[2 + l] != feature_column(l) {
            return Err(Error::parse(
                path,
                1,
                format!("column {} should be {}", 2 + l, feature_column(l)),
            ));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut tables: HashMap<String, TrialTable> = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != n {
            return Err(Error::parse(
                path,
                line_of(&rec),
                format!("{} fields, header has {n}", rec.len()),
            ));
        }
        let subject = rec[0].to_string();
        let t = parse_f64(path, &rec, &rec[1])?;
        let row = (0..d)
            .map(|l| parse_f64(path, &rec, &rec[2 + l]))
            .collect::<Result<Vec<_>>>()?;
        let y = parse_f64(path, &rec, &rec[n - 1])?;
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::parse(path, line_of(&rec), "non-finite feature"));
        }
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::parse(path, line_of(&rec), format!("label {y} outside [0, 1]")));
        }
        let table = tables.entry(subject.clone()).or_insert_with(|| {
            order.push(subject.clone());
            TrialTable {
                subject_id: subject,
                features: Vec::new(),
                labels: Vec::new(),
                trial_times: Vec::new(),
            }
        });
        table.features.push(row);
        table.labels.push(y);
        table.trial_times.push(t);
    }
    Ok(order
        .into_iter()
        .map(|s| tables.remove(&s).expect("subject recorded"))
        .collect())
}

/// Reads a file holding exactly one subject.
pub fn read_trial_table(path: &Path) -> Result<TrialTable> {
    let mut tables = read_trial_tables(path)?;
    match tables.len() {
        1 => Ok(tables.remove(0)),
        0 => Err(Error::parse(path, 0, "no trials")),
        k => Err(Error::parse(path, 0, format!("{k} subjects in a single-subject file"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_table_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s01.csv");
        let table = TrialTable::new(
            "s01",
            vec![vec![0.1, -3.25e-7, 1.0 / 3.0], vec![12.0, 7.5, -0.0]],
            vec![0.0, 0.462_117_157_260_009_8],
            vec![30.0, 33.0],
        )
        .unwrap();
        write_trial_table(&path, &table).unwrap();
        assert_eq!(read_trial_table(&path).unwrap(), table);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "subject_id,t_s,f_000,di\ns1,30,1.0,0.5\ns1,33,oops,0.5\n").unwrap();
        match read_trial_tables(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "deviation_onset_s,response_onset_s\n1.0,1.5\n2.0,x\n").unwrap();
        assert!(matches!(read_event_log(&path), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn recording_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        let rec = RawRecording::new(
            vec![vec![1.5, -2.0, 0.25], vec![0.0, 0.1, 0.2], vec![3.0, 3.0, 3.0]],
            500.0,
            vec!["Cz".into(), "A1".into(), "A2".into()],
            Some((1, 2)),
        )
        .unwrap();
        write_recording(&path, &rec).unwrap();
        assert_eq!(read_recording(&path).unwrap(), rec);
    }

    #[test]
    fn missing_file_is_not_found() {
        assert!(matches!(
            read_event_log(Path::new("/nonexistent/events.csv")),
            Err(Error::NotFound(_))
        ));
    }
}
