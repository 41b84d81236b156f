//! Canonical comma-separated clinical and scan tables.

use std::collections::HashSet;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord, Trim, Writer};

use super::{ClinicalRecord, CurationError, Result, ScanRecord};

pub const CLINICAL_COLUMNS: [&str; 4] = [
    "subject_id",
    "months_from_baseline",
    "diagnosis",
    "amyloid_status",
];

pub const SCAN_COLUMNS: [&str; 11] = [
    "subject_id",
    "months_from_baseline",
    "modality",
    "gradwarp",
    "b1_corrected",
    "quality_rank",
    "field_strength_tesla",
    "study_phase",
    "coregistered_averaged",
    "source_path",
    "scan_uid",
];

/// One data row, with its 1-based line number in the source text.
#[derive(Debug, Clone)]
pub struct Row {
    pub line: usize,
    columns: Vec<usize>,
    record: StringRecord,
    schema: Vec<String>,
}

impl Row {
    /// Raw text of a schema column.
    pub fn get(&self, column: &str) -> &str {
        let at = self
            .schema
            .iter()
            .position(|c| c == column)
            .expect("column is part of the schema");
        self.record.get(self.columns[at]).unwrap_or("")
    }

    pub fn parse<T: FromStr>(&self, column: &str) -> Result<T> {
        let raw = self.get(column);
        raw.parse().map_err(|_| self.bad(column))
    }

    pub fn bad(&self, column: &str) -> CurationError {
        CurationError::BadValue {
            row: self.line,
            column: column.to_string(),
            value: self.get(column).to_string(),
        }
    }

    fn flag(&self, column: &str) -> Result<bool> {
        match self.get(column).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "y" => Ok(true),
            "false" | "0" | "no" | "n" | "" => Ok(false),
            _ => Err(self.bad(column)),
        }
    }
}

/// Reads a headed CSV table, resolving every schema column by name. Extra
/// columns are ignored; quoted fields may contain commas.
pub fn parse_table(text: &str, schema: &[&str]) -> Result<Vec<Row>> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .trim(Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CurationError::Malformed(e.to_string()))?
        .clone();
    let columns = schema
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| CurationError::MissingColumn(name.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let schema: Vec<String> = schema.iter().map(|s| s.to_string()).collect();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CurationError::Malformed(e.to_string()))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push(Row {
            line,
            columns: columns.clone(),
            record,
            schema: schema.clone(),
        });
    }
    Ok(rows)
}

pub fn parse_clinical(text: &str) -> Result<Vec<ClinicalRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in parse_table(text, &CLINICAL_COLUMNS)? {
        let subject_id = row.get("subject_id").to_string();
        if subject_id.is_empty() {
            return Err(row.bad("subject_id"));
        }
        let rec = ClinicalRecord {
            months_from_baseline: row.parse("months_from_baseline")?,
            diagnosis: row.parse("diagnosis")?,
            amyloid_status: row.parse("amyloid_status")?,
            subject_id,
        };
        if !seen.insert((rec.subject_id.clone(), rec.months_from_baseline)) {
            return Err(CurationError::DuplicateKey(format!(
                "({}, month {}) at row {}",
                rec.subject_id, rec.months_from_baseline, row.line
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_scans(text: &str) -> Result<Vec<ScanRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in parse_table(text, &SCAN_COLUMNS)? {
        let subject_id = row.get("subject_id").to_string();
        if subject_id.is_empty() {
            return Err(row.bad("subject_id"));
        }
        let field_strength_tesla: f64 = row.parse("field_strength_tesla")?;
        if !field_strength_tesla.is_finite() {
            return Err(row.bad("field_strength_tesla"));
        }
        let scan_uid = row.get("scan_uid").to_string();
        if scan_uid.is_empty() {
            return Err(row.bad("scan_uid"));
        }
        let source_path = row.get("source_path").to_string();
        if source_path.is_empty() {
            return Err(row.bad("source_path"));
        }
        let rec = ScanRecord {
            months_from_baseline: row.parse("months_from_baseline")?,
            modality: row.parse("modality")?,
            gradwarp: row.flag("gradwarp")?,
            b1_corrected: row.flag("b1_corrected")?,
            quality_rank: row.parse("quality_rank")?,
            field_strength_tesla,
            study_phase: row.parse("study_phase")?,
            coregistered_averaged: row.flag("coregistered_averaged")?,
            source_path,
            scan_uid,
            subject_id,
        };
        if !seen.insert(rec.scan_uid.clone()) {
            return Err(CurationError::DuplicateKey(format!(
                "scan_uid {} at row {}",
                rec.scan_uid, row.line
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

fn to_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Canonical clinical table text, readable by [`parse_clinical`].
pub fn clinical_to_csv(records: &[ClinicalRecord]) -> String {
    to_csv(
        &CLINICAL_COLUMNS,
        records.iter().map(|r| {
            vec![
                r.subject_id.clone(),
                r.months_from_baseline.to_string(),
                format!("{:?}", r.diagnosis),
                r.amyloid_status.as_str().to_string(),
            ]
        }),
    )
}

/// Canonical scan table text, readable by [`parse_scans`].
pub fn scans_to_csv(records: &[ScanRecord]) -> String {
    to_csv(
        &SCAN_COLUMNS,
        records.iter().map(|r| {
            vec![
                r.subject_id.clone(),
                r.months_from_baseline.to_string(),
                r.modality.as_str().to_string(),
                r.gradwarp.to_string(),
                r.b1_corrected.to_string(),
                r.quality_rank.to_string(),
                r.field_strength_tesla.to_string(),
                r.study_phase.as_str().to_string(),
                r.coregistered_averaged.to_string(),
                r.source_path.clone(),
                r.scan_uid.clone(),
            ]
        }),
    )
}
