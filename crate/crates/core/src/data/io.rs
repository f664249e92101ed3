//! Cohort ingestion and persistence.
//!
//! Metadata travels as CSV with header
//! `patient_id,ecg_id,time_to_event_days,event,age,sex[,extras...]`;
//! an empty cell means the value is missing. Waveforms travel in the
//! "ECGB v1" container: magic `ECGB`, version byte `1`, little-endian u32
//! record count, then per record a 16-byte zero-padded ecg id, u32 sample
//! count, u32 channel count, and samples as little-endian f32 in
//! channel-major order.

use super::{
    preprocess_waveform, Cohort, DataError, EcgRecord, Waveform, MIN_TTE_DAYS, SAMPLES,
    TARGET_RATE_HZ,
};
use indexmap::IndexMap;
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const ECGB_MAGIC: &[u8; 4] = b"ECGB";
const ECGB_VERSION: u8 = 1;
const ID_BYTES: usize = 16;

/// What ingestion kept and what it dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_seen: usize,
    pub loaded: usize,
    pub excluded_missing_value: usize,
    pub excluded_missing_waveform: usize,
    /// Observed times raised to the 0.5-day floor.
    pub clamped_times: usize,
}

impl LoadReport {
    pub fn excluded(&self) -> usize {
        self.excluded_missing_value + self.excluded_missing_waveform
    }
}

/// Read a metadata CSV plus an ECGB waveform file into a cohort.
///
/// Rows with an empty time-to-event, event, or covariate cell are
/// excluded, as are rows whose ECG is absent from the waveform file.
/// Retained times are floored at 0.5 days. Waveforms shorter than 4096
/// samples are assumed to be at 400 Hz and are centered and zero-padded;
/// 4096-sample records pass through unchanged.
pub fn load_cohort(
    metadata_path: &Path,
    waveform_path: &Path,
) -> Result<(Cohort, LoadReport), DataError> {
    let waveforms = read_ecgb(waveform_path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(metadata_path)
        .map_err(csv_error)?;

    let headers = reader.headers().map_err(csv_error)?.clone();
    let expected = ["patient_id", "ecg_id", "time_to_event_days", "event", "age", "sex"];
    if headers.len() < expected.len() {
        return Err(DataError::Format(format!(
            "metadata header has {} columns, expected at least {}",
            headers.len(),
            expected.len()
        )));
    }
    for (i, name) in expected.iter().enumerate() {
        if &headers[i] != *name {
            return Err(DataError::Format(format!(
                "metadata column {i} is '{}', expected '{name}'",
                &headers[i]
            )));
        }
    }
    let covariate_names: Vec<String> = headers.iter().skip(4).map(|s| s.to_string()).collect();

    let mut report = LoadReport::default();
    let mut records = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();

    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(csv_error)?;
        report.rows_seen += 1;
        if row.len() != headers.len() {
            return Err(DataError::Format(format!(
                "row {row_idx} has {} cells, header has {}",
                row.len(),
                headers.len()
            )));
        }
        let patient_id = row[0].to_string();
        let ecg_id = row[1].to_string();
        if patient_id.is_empty() || ecg_id.is_empty() {
            return Err(DataError::Format(format!("row {row_idx} has an empty id cell")));
        }
        if let Some(prev) = seen_ids.insert(ecg_id.clone(), row_idx) {
            return Err(DataError::Consistency(format!(
                "ecg_id {ecg_id} appears in metadata rows {prev} and {row_idx}"
            )));
        }

        let tte_cell = row[2].trim();
        let event_cell = row[3].trim();
        if tte_cell.is_empty() || event_cell.is_empty() {
            report.excluded_missing_value += 1;
            continue;
        }
        let tte: f64 = tte_cell.parse().map_err(|_| {
            DataError::Format(format!("row {row_idx}: bad time_to_event_days '{tte_cell}'"))
        })?;
        if !tte.is_finite() || tte < 0.0 {
            return Err(DataError::Format(format!(
                "row {row_idx}: time_to_event_days must be finite and >= 0, got {tte_cell}"
            )));
        }
        let event = match event_cell {
            "0" => false,
            "1" => true,
            other => {
                return Err(DataError::Format(format!(
                    "row {row_idx}: event must be 0 or 1, got '{other}'"
                )))
            }
        };

        let mut covariates = IndexMap::new();
        let mut missing_covariate = false;
        for (k, name) in covariate_names.iter().enumerate() {
            let cell = row[4 + k].trim();
            if cell.is_empty() {
                missing_covariate = true;
                break;
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| DataError::Format(format!("row {row_idx}: bad {name} '{cell}'")))?;
            if !value.is_finite() {
                return Err(DataError::Format(format!(
                    "row {row_idx}: {name} must be finite, got '{cell}'"
                )));
            }
            covariates.insert(name.clone(), value);
        }
        if missing_covariate {
            report.excluded_missing_value += 1;
            continue;
        }

        let Some(raw) = waveforms.get(&ecg_id) else {
            report.excluded_missing_waveform += 1;
            continue;
        };
        let waveform = if raw.samples() == SAMPLES {
            preprocess_waveform(raw, TARGET_RATE_HZ)?
        } else if raw.samples() > SAMPLES {
            return Err(DataError::Format(format!(
                "waveform {ecg_id} has {} samples; the container holds at most {SAMPLES}",
                raw.samples()
            )));
        } else {
            preprocess_waveform(raw, TARGET_RATE_HZ)?
        };

        let clamped = tte < MIN_TTE_DAYS;
        if clamped {
            report.clamped_times += 1;
        }
        records.push(EcgRecord {
            patient_id,
            ecg_id,
            waveform,
            covariates,
            time_to_event: tte.max(MIN_TTE_DAYS),
            event,
        });
        report.loaded += 1;
    }

    Ok((Cohort::new(records), report))
}

fn csv_error(err: csv::Error) -> DataError {
    match err.kind() {
        csv::ErrorKind::Io(_) => match err.into_kind() {
            csv::ErrorKind::Io(io) => DataError::Io(io),
            _ => unreachable!(),
        },
        _ => DataError::Format(err.to_string()),
    }
}

fn read_ecgb(path: &Path) -> Result<HashMap<String, Waveform>, DataError> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != ECGB_MAGIC {
        return Err(DataError::Format(format!(
            "bad magic bytes {magic:?}; not an ECGB file"
        )));
    }
    let version = read_u8(&mut reader)?;
    if version != ECGB_VERSION {
        return Err(DataError::Format(format!(
            "unsupported ECGB version {version}"
        )));
    }
    let count = read_u32(&mut reader)? as usize;
    let mut out = HashMap::with_capacity(count);
    for _ in 0..count {
        let mut id_bytes = [0u8; ID_BYTES];
        reader.read_exact(&mut id_bytes)?;
        let end = id_bytes.iter().position(|&b| b == 0).unwrap_or(ID_BYTES);
        let id = std::str::from_utf8(&id_bytes[..end])
            .map_err(|_| DataError::Format("ecg id is not valid UTF-8".to_string()))?
            .to_string();
        let samples = read_u32(&mut reader)? as usize;
        let channels = read_u32(&mut reader)? as usize;
        let mut buf = vec![0u8; samples * channels * 4];
        reader.read_exact(&mut buf)?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let waveform = Waveform::new(samples, channels, data)?;
        if out.insert(id.clone(), waveform).is_some() {
            return Err(DataError::Consistency(format!(
                "ecg_id {id} appears twice in the waveform file"
            )));
        }
    }
    Ok(out)
}

fn read_u8(r: &mut impl Read) -> Result<u8, DataError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32, DataError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Write records to an ECGB v1 file, in record order.
pub fn write_ecgb<'a>(
    path: &Path,
    records: impl ExactSizeIterator<Item = &'a EcgRecord>,
) -> Result<(), DataError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(ECGB_MAGIC)?;
    w.write_all(&[ECGB_VERSION])?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        if rec.ecg_id.len() > ID_BYTES {
            return Err(DataError::Format(format!(
                "ecg_id {} exceeds {ID_BYTES} bytes",
                rec.ecg_id
            )));
        }
        let mut id_bytes = [0u8; ID_BYTES];
        id_bytes[..rec.ecg_id.len()].copy_from_slice(rec.ecg_id.as_bytes());
        w.write_all(&id_bytes)?;
        w.write_all(&(rec.waveform.samples() as u32).to_le_bytes())?;
        w.write_all(&(rec.waveform.channels() as u32).to_le_bytes())?;
        for &v in rec.waveform.raw() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write the metadata CSV companion for the given records.
///
/// Covariate columns come from the first record's covariate order.
/// Formatting uses the shortest round-trippable decimal form, so reading
/// the file back reproduces every value bit-exactly.
pub fn write_metadata_csv<'a>(
    path: &Path,
    records: impl Iterator<Item = &'a EcgRecord>,
) -> Result<(), DataError> {
    let mut records = records.peekable();
    let covariate_names: Vec<String> = match records.peek() {
        Some(first) => first.covariates.keys().cloned().collect(),
        None => vec!["age".to_string(), "sex".to_string()],
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header = vec![
        "patient_id".to_string(),
        "ecg_id".to_string(),
        "time_to_event_days".to_string(),
        "event".to_string(),
    ];
    header.extend(covariate_names.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for rec in records {
        let mut row = vec![
            rec.patient_id.clone(),
            rec.ecg_id.clone(),
            format!("{}", rec.time_to_event),
            if rec.event { "1" } else { "0" }.to_string(),
        ];
        for name in &covariate_names {
            let v = rec.covariate(name).ok_or_else(|| {
                DataError::Consistency(format!("record {} lacks covariate {name}", rec.ecg_id))
            })?;
            row.push(format!("{v}"));
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the CSV + ECGB pair for a cohort under `prefix` (`prefix.csv`,
/// `prefix.ecgb`).
pub fn save_cohort(cohort: &Cohort, prefix: &Path) -> Result<(), DataError> {
    write_metadata_csv(&prefix.with_extension("csv"), cohort.records.iter())?;
    write_ecgb(&prefix.with_extension("ecgb"), cohort.records.iter())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{test_record, CHANNELS};

    fn write_pair(dir: &Path, csv_body: &str, records: &[EcgRecord]) -> (std::path::PathBuf, std::path::PathBuf) {
        let csv_path = dir.join("meta.csv");
        let ecgb_path = dir.join("wave.ecgb");
        std::fs::write(&csv_path, csv_body).unwrap();
        write_ecgb(&ecgb_path, records.iter()).unwrap();
        (csv_path, ecgb_path)
    }

    fn wave_record(ecg: &str) -> EcgRecord {
        let mut r = test_record("p", ecg, 10.0, false, 50.0, 0.0);
        let mut rng = crate::rng::Pcg::seeded(ecg.len() as u64 + 1);
        for c in 0..CHANNELS {
            for v in r.waveform.channel_mut(c) {
                *v = rng.normal() as f32;
            }
        }
        r
    }

    #[test]
    fn missing_tte_row_is_excluded_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![wave_record("a"), wave_record("b")];
        let csv = "patient_id,ecg_id,time_to_event_days,event,age,sex\n\
                   p1,a,,1,50,0\n\
                   p2,b,120.5,0,40,1\n";
        let (m, w) = write_pair(dir.path(), csv, &records);
        let (cohort, report) = load_cohort(&m, &w).unwrap();
        assert_eq!(cohort.len(), 1);
        assert_eq!(report.excluded(), 1);
        assert_eq!(report.excluded_missing_value, 1);
        assert_eq!(cohort.records[0].ecg_id, "b");
    }

    #[test]
    fn small_tte_is_clamped_to_half_day() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![wave_record("a")];
        let csv = "patient_id,ecg_id,time_to_event_days,event,age,sex\np1,a,0.1,1,50,0\n";
        let (m, w) = write_pair(dir.path(), csv, &records);
        let (cohort, report) = load_cohort(&m, &w).unwrap();
        assert_eq!(cohort.records[0].time_to_event, 0.5);
        assert_eq!(report.clamped_times, 1);
    }

    #[test]
    fn empty_metadata_with_valid_header_loads_zero_records() {
        let dir = tempfile::tempdir().unwrap();
        let (m, w) = write_pair(
            dir.path(),
            "patient_id,ecg_id,time_to_event_days,event,age,sex\n",
            &[],
        );
        let (cohort, report) = load_cohort(&m, &w).unwrap();
        assert!(cohort.is_empty());
        assert_eq!(report.excluded(), 0);
    }

    #[test]
    fn missing_column_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (m, w) = write_pair(dir.path(), "patient_id,ecg_id,time_to_event_days,event,age\n", &[]);
        assert!(matches!(load_cohort(&m, &w), Err(DataError::Format(_))));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("meta.csv");
        let w = dir.path().join("wave.ecgb");
        std::fs::write(&m, "patient_id,ecg_id,time_to_event_days,event,age,sex\n").unwrap();
        std::fs::write(&w, b"NOPE\x01\x00\x00\x00\x00").unwrap();
        assert!(matches!(load_cohort(&m, &w), Err(DataError::Format(_))));
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("missing.csv");
        let w = dir.path().join("missing.ecgb");
        assert!(matches!(load_cohort(&m, &w), Err(DataError::Io(_))));
    }

    #[test]
    fn row_without_waveform_is_excluded() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![wave_record("a")];
        let csv = "patient_id,ecg_id,time_to_event_days,event,age,sex\n\
                   p1,a,10,1,50,0\n\
                   p2,ghost,10,1,50,0\n";
        let (m, w) = write_pair(dir.path(), csv, &records);
        let (cohort, report) = load_cohort(&m, &w).unwrap();
        assert_eq!(cohort.len(), 1);
        assert_eq!(report.excluded_missing_waveform, 1);
    }

    #[test]
    fn duplicate_ecg_id_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![wave_record("a")];
        let csv = "patient_id,ecg_id,time_to_event_days,event,age,sex\n\
                   p1,a,10,1,50,0\n\
                   p1,a,11,0,50,0\n";
        let (m, w) = write_pair(dir.path(), csv, &records);
        assert!(matches!(load_cohort(&m, &w), Err(DataError::Consistency(_))));
    }

    #[test]
    fn missing_covariate_cell_is_excluded() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![wave_record("a")];
        let csv = "patient_id,ecg_id,time_to_event_days,event,age,sex\np1,a,10,1,,0\n";
        let (m, w) = write_pair(dir.path(), csv, &records);
        let (cohort, report) = load_cohort(&m, &w).unwrap();
        assert!(cohort.is_empty());
        assert_eq!(report.excluded_missing_value, 1);
    }

    #[test]
    fn short_waveforms_are_center_padded_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = wave_record("a");
        // store a 2800-sample raw waveform
        let mut data = Vec::new();
        for c in 0..CHANNELS {
            for s in 0..2800 {
                data.push((s as f32 * 1e-3) + c as f32 + 1.0);
            }
        }
        rec.waveform = Waveform::new(2800, CHANNELS, data).unwrap();
        let csv = "patient_id,ecg_id,time_to_event_days,event,age,sex\np1,a,10,1,50,0\n";
        let (m, w) = write_pair(dir.path(), csv, std::slice::from_ref(&rec));
        let (cohort, _) = load_cohort(&m, &w).unwrap();
        let ch = cohort.records[0].waveform.channel(1);
        assert_eq!(ch.iter().position(|&v| v != 0.0).unwrap(), 648);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = crate::rng::Pcg::seeded(99);
        let mut records = Vec::new();
        for i in 0..5 {
            let mut r = wave_record(&format!("ecg{i}"));
            r.patient_id = format!("p{}", i / 2);
            r.time_to_event = rng.range(0.5, 5000.0);
            r.event = rng.bernoulli(0.5);
            r.covariates.insert("age".into(), rng.range(1.0, 90.0));
            r.covariates.insert("sex".into(), if rng.bernoulli(0.5) { 1.0 } else { 0.0 });
            r.covariates.insert("qrs".into(), rng.normal() * 40.0 + 100.0);
            records.push(r);
        }
        let cohort = Cohort::new(records);
        let prefix = dir.path().join("cohort");
        save_cohort(&cohort, &prefix).unwrap();
        let (loaded, report) = load_cohort(&prefix.with_extension("csv"), &prefix.with_extension("ecgb")).unwrap();
        assert_eq!(report.excluded(), 0);
        assert_eq!(loaded.len(), cohort.len());
        for (a, b) in loaded.records.iter().zip(&cohort.records) {
            assert_eq!(a.patient_id, b.patient_id);
            assert_eq!(a.ecg_id, b.ecg_id);
            assert_eq!(a.time_to_event.to_bits(), b.time_to_event.to_bits());
            assert_eq!(a.event, b.event);
            assert_eq!(a.covariates, b.covariates);
            assert_eq!(a.waveform.raw().len(), b.waveform.raw().len());
            for (x, y) in a.waveform.raw().iter().zip(b.waveform.raw()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
