//! Cohort curation: clinical and scan tables, scan selection, diagnostic
//! grouping and the BIDS tree.

mod bids;
mod grouping;
mod selection;
mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use bids::{
    bids_label, bids_relative_path, build_bids, read_bids, select_subjects, BidsSummary,
    PARTICIPANTS_HEADER,
};
pub use grouping::{assign_group, build_manifest, refine_with_amyloid, ManifestBuild};
pub use selection::{select_scan, Selection, SelectionRule};
pub use table::{clinical_to_csv, parse_clinical, parse_scans, parse_table, scans_to_csv, Row, CLINICAL_COLUMNS, SCAN_COLUMNS};

#[derive(Debug, Error, PartialEq)]
pub enum CurationError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: bad value {value:?}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("malformed table: {0}")]
    Malformed(String),
    #[error("no candidate scans")]
    EmptyCandidates,
    #[error("candidates differ in subject, month or modality")]
    MixedKey,
    #[error("subject {0} has no baseline (month 0) record")]
    NoBaseline(String),
    #[error("source file missing: {0}")]
    MissingSource(String),
    #[error("two entries map to {0}")]
    CollisionAtDestination(String),
    #[error("{0} already exists with different content")]
    DestinationExists(String),
    #[error("unknown group label {0:?}")]
    UnknownLabel(String),
    #[error("task labels must differ, got {0} twice")]
    SameLabel(String),
    #[error("subject id {0:?} has no alphanumeric characters")]
    InvalidSubjectId(String),
    #[error("malformed BIDS tree: {0}")]
    MalformedTree(String),
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, CurationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Diagnosis {
    CN,
    MCI,
    AD,
}

impl FromStr for Diagnosis {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CN" => Ok(Diagnosis::CN),
            "MCI" => Ok(Diagnosis::MCI),
            "AD" => Ok(Diagnosis::AD),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AmyloidStatus {
    Positive,
    Negative,
    Unknown,
}

impl AmyloidStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AmyloidStatus::Positive => "positive",
            AmyloidStatus::Negative => "negative",
            AmyloidStatus::Unknown => "unknown",
        }
    }
}

impl FromStr for AmyloidStatus {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(AmyloidStatus::Positive),
            "negative" | "neg" | "-" => Ok(AmyloidStatus::Negative),
            "unknown" | "" | "na" => Ok(AmyloidStatus::Unknown),
            _ => Err(()),
        }
    }
}

impl fmt::Display for AmyloidStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    T1,
    FDG,
    AV45,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::T1, Modality::FDG, Modality::AV45];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::T1 => "T1",
            Modality::FDG => "FDG",
            Modality::AV45 => "AV45",
        }
    }

    pub fn is_pet(self) -> bool {
        !matches!(self, Modality::T1)
    }
}

impl FromStr for Modality {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_uppercase().as_str() {
            "T1" | "T1W" => Ok(Modality::T1),
            "FDG" => Ok(Modality::FDG),
            "AV45" => Ok(Modality::AV45),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StudyPhase {
    Phase1,
    PhaseGO,
    Phase2,
}

impl StudyPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyPhase::Phase1 => "phase1",
            StudyPhase::PhaseGO => "phaseGO",
            StudyPhase::Phase2 => "phase2",
        }
    }
}

impl FromStr for StudyPhase {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phase1" | "adni1" => Ok(StudyPhase::Phase1),
            "phasego" | "adnigo" => Ok(StudyPhase::PhaseGO),
            "phase2" | "adni2" => Ok(StudyPhase::Phase2),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicalRecord {
    pub subject_id: String,
    pub months_from_baseline: u32,
    pub diagnosis: Diagnosis,
    pub amyloid_status: AmyloidStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub subject_id: String,
    pub months_from_baseline: u32,
    pub modality: Modality,
    pub gradwarp: bool,
    pub b1_corrected: bool,
    pub quality_rank: i64,
    pub field_strength_tesla: f64,
    pub study_phase: StudyPhase,
    /// PET only; always false for T1.
    pub coregistered_averaged: bool,
    pub source_path: String,
    pub scan_uid: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaseGroup {
    AD,
    MCIc,
    MCInc,
    CN,
    Excluded,
}

impl BaseGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            BaseGroup::AD => "AD",
            BaseGroup::MCIc => "MCIc",
            BaseGroup::MCInc => "MCInc",
            BaseGroup::CN => "CN",
            BaseGroup::Excluded => "excluded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "AD" => Some(BaseGroup::AD),
            "MCIc" => Some(BaseGroup::MCIc),
            "MCInc" => Some(BaseGroup::MCInc),
            "CN" => Some(BaseGroup::CN),
            "excluded" => Some(BaseGroup::Excluded),
            _ => None,
        }
    }
}

impl fmt::Display for BaseGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Amyloid-refined diagnostic groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RefinedGroup {
    AdPositive,
    MciCPositive,
    MciCNegative,
    MciNcPositive,
    MciNcNegative,
    CnNegative,
}

impl RefinedGroup {
    pub const ALL: [RefinedGroup; 6] = [
        RefinedGroup::AdPositive,
        RefinedGroup::MciCPositive,
        RefinedGroup::MciCNegative,
        RefinedGroup::MciNcPositive,
        RefinedGroup::MciNcNegative,
        RefinedGroup::CnNegative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RefinedGroup::AdPositive => "AD-Aβ+",
            RefinedGroup::MciCPositive => "MCIc-Aβ+",
            RefinedGroup::MciCNegative => "MCIc-Aβ−",
            RefinedGroup::MciNcPositive => "MCInc-Aβ+",
            RefinedGroup::MciNcNegative => "MCInc-Aβ−",
            RefinedGroup::CnNegative => "CN-Aβ−",
        }
    }

    /// ASCII spelling used in file names.
    pub fn ascii(self) -> &'static str {
        match self {
            RefinedGroup::AdPositive => "AD-Abeta+",
            RefinedGroup::MciCPositive => "MCIc-Abeta+",
            RefinedGroup::MciCNegative => "MCIc-Abeta-",
            RefinedGroup::MciNcPositive => "MCInc-Abeta+",
            RefinedGroup::MciNcNegative => "MCInc-Abeta-",
            RefinedGroup::CnNegative => "CN-Abeta-",
        }
    }

    pub fn base(self) -> BaseGroup {
        match self {
            RefinedGroup::AdPositive => BaseGroup::AD,
            RefinedGroup::MciCPositive | RefinedGroup::MciCNegative => BaseGroup::MCIc,
            RefinedGroup::MciNcPositive | RefinedGroup::MciNcNegative => BaseGroup::MCInc,
            RefinedGroup::CnNegative => BaseGroup::CN,
        }
    }

    pub fn status(self) -> AmyloidStatus {
        match self {
            RefinedGroup::AdPositive | RefinedGroup::MciCPositive | RefinedGroup::MciNcPositive => {
                AmyloidStatus::Positive
            }
            _ => AmyloidStatus::Negative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupLabel {
    pub base: BaseGroup,
    pub amyloid_refined: Option<RefinedGroup>,
}

impl GroupLabel {
    pub fn new(base: BaseGroup, status: AmyloidStatus) -> Self {
        GroupLabel {
            base,
            amyloid_refined: refine_with_amyloid(base, status),
        }
    }
}

/// A label that can name one side of a classification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskLabel {
    Base(BaseGroup),
    Refined(RefinedGroup),
}

impl TaskLabel {
    pub fn matches(self, label: &GroupLabel) -> bool {
        match self {
            TaskLabel::Base(b) => label.base == b,
            TaskLabel::Refined(r) => label.amyloid_refined == Some(r),
        }
    }

    /// File-name safe spelling.
    pub fn ascii(self) -> &'static str {
        match self {
            TaskLabel::Base(b) => b.as_str(),
            TaskLabel::Refined(r) => r.ascii(),
        }
    }
}

impl FromStr for TaskLabel {
    type Err = CurationError;

    /// Accepts `AD`, `MCIc`, `MCInc`, `CN` and the refined forms written with
    /// `Aβ`, `Abeta` or `A`, and `+`, `-` or `−`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || CurationError::UnknownLabel(s.to_string());
        let t = s.trim();
        if let Some(b) = BaseGroup::parse(t) {
            if b == BaseGroup::Excluded {
                return Err(unknown());
            }
            return Ok(TaskLabel::Base(b));
        }
        let (base, rest) = t.split_once('-').ok_or_else(unknown)?;
        let rest = rest.replace('−', "-");
        let sign = rest
            .strip_prefix("Aβ")
            .or_else(|| rest.strip_prefix("Abeta"))
            .or_else(|| rest.strip_prefix('A'))
            .ok_or_else(unknown)?;
        let status = match sign {
            "+" => AmyloidStatus::Positive,
            "-" => AmyloidStatus::Negative,
            _ => return Err(unknown()),
        };
        let base = BaseGroup::parse(base).ok_or_else(unknown)?;
        refine_with_amyloid(base, status)
            .map(TaskLabel::Refined)
            .ok_or_else(unknown)
    }
}

impl fmt::Display for TaskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskLabel::Base(b) => f.write_str(b.as_str()),
            TaskLabel::Refined(r) => f.write_str(r.as_str()),
        }
    }
}

/// The scan chosen for one modality of a manifest entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedScan {
    pub months_from_baseline: u32,
    pub scan_uid: String,
    pub source_path: String,
}

impl From<&ScanRecord> for SelectedScan {
    fn from(s: &ScanRecord) -> Self {
        SelectedScan {
            months_from_baseline: s.months_from_baseline,
            scan_uid: s.scan_uid.clone(),
            source_path: s.source_path.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub label: GroupLabel,
    pub amyloid_status: AmyloidStatus,
    pub scans: BTreeMap<Modality, SelectedScan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub entries: Vec<ManifestEntry>,
    pub horizon_months: u32,
}

impl CohortManifest {
    pub fn empty(horizon_months: u32) -> Self {
        CohortManifest {
            entries: Vec::new(),
            horizon_months,
        }
    }

    pub fn entry(&self, subject_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.subject_id == subject_id)
    }
}
