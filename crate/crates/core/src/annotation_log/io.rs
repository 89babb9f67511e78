use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{validate_log, AnnotationEvent, AnnotatorInfo};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogFormat {
    Jsonl,
    Csv,
}

impl LogFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Ok(LogFormat::Jsonl),
            Some("csv") => Ok(LogFormat::Csv),
            _ => Err(Error::InvalidConfig(format!(
                "cannot infer log format from `{}` (expected .jsonl or .csv)",
                path.display()
            ))),
        }
    }
}

/// Reads and validates an annotation log. The format follows the file extension.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<AnnotationEvent>> {
    let path = path.as_ref();
    let format = LogFormat::from_path(path)?;
    let file = File::open(path)?;
    let events = read_records(file, format, &path.display().to_string())?;
    validate_log(&events)?;
    Ok(events)
}

pub fn write_log(path: impl AsRef<Path>, events: &[AnnotationEvent]) -> Result<()> {
    let path = path.as_ref();
    let format = LogFormat::from_path(path)?;
    let file = File::create(path)?;
    write_records(BufWriter::new(file), format, events)
}

pub fn read_annotators(path: impl AsRef<Path>) -> Result<Vec<AnnotatorInfo>> {
    let path = path.as_ref();
    let format = LogFormat::from_path(path)?;
    let records: Vec<AnnotatorInfo> = read_records(File::open(path)?, format, &path.display().to_string())?;
    for record in &records {
        record.validate()?;
    }
    Ok(records)
}

pub fn write_annotators(path: impl AsRef<Path>, annotators: &[AnnotatorInfo]) -> Result<()> {
    let path = path.as_ref();
    let format = LogFormat::from_path(path)?;
    write_records(BufWriter::new(File::create(path)?), format, annotators)
}

pub(crate) fn read_records<T: DeserializeOwned, R: Read>(reader: R, format: LogFormat, name: &str) -> Result<Vec<T>> {
    match format {
        LogFormat::Jsonl => {
            let mut out = Vec::new();
            for (idx, line) in BufReader::new(reader).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: name.to_string(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                out.push(record);
            }
            Ok(out)
        }
        LogFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
            let mut out = Vec::new();
            for result in rdr.deserialize() {
                let record = result.map_err(|e: csv::Error| Error::Parse {
                    path: name.to_string(),
                    line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                    message: e.to_string(),
                })?;
                out.push(record);
            }
            Ok(out)
        }
    }
}

pub(crate) fn write_records<T: Serialize, W: Write>(mut writer: W, format: LogFormat, records: &[T]) -> Result<()> {
    match format {
        LogFormat::Jsonl => {
            for record in records {
                serde_json::to_writer(&mut writer, record)?;
                writer.write_all(b"\n")?;
            }
            writer.flush()?;
        }
        LogFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(writer);
            for record in records {
                wtr.serialize(record)?;
            }
            wtr.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation_log::tests::sample_event;

    fn round_trip(format: LogFormat) {
        let events = vec![sample_event("t1")];
        let mut first = Vec::new();
        write_records(&mut first, format, &events).unwrap();
        let back: Vec<AnnotationEvent> = read_records(first.as_slice(), format, "mem").unwrap();
        assert_eq!(back, events);
        let mut second = Vec::new();
        write_records(&mut second, format, &back).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        round_trip(LogFormat::Jsonl);
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        round_trip(LogFormat::Csv);
    }

    #[test]
    fn empty_inputs_give_empty_logs() {
        let a: Vec<AnnotationEvent> = read_records(&b""[..], LogFormat::Jsonl, "mem").unwrap();
        let b: Vec<AnnotationEvent> = read_records(&b""[..], LogFormat::Csv, "mem").unwrap();
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn parse_error_reports_line() {
        let mut buf = Vec::new();
        write_records(&mut buf, LogFormat::Jsonl, &[sample_event("t1")]).unwrap();
        buf.extend_from_slice(b"{\"task_id\": 3}\n");
        let err = read_records::<AnnotationEvent, _>(buf.as_slice(), LogFormat::Jsonl, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        write_log(&path, &[sample_event("t1")]).unwrap();
        let events = read_log(&path).unwrap();
        assert_eq!(events.len(), 1);

        let mut bad = sample_event("t2");
        bad.input_conversion_rate = 1.3;
        let bad_path = dir.path().join("bad.csv");
        write_log(&bad_path, &[bad]).unwrap();
        let err = read_log(&bad_path).unwrap_err();
        assert!(err.to_string().contains("input_conversion_rate"), "{err}");
    }
}
