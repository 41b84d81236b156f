//! BIDS tree materialization, reading it back, and task subject lists.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    AmyloidStatus, BaseGroup, CohortManifest, CurationError, GroupLabel, ManifestEntry, Modality,
    Result, SelectedScan, TaskLabel,
};
use crate::fsio::{write_new, WriteError};

pub const PARTICIPANTS_HEADER: &str = "participant_id\tgroup\tamyloid";
const SCANS_HEADER: &str = "filename\tsource_uid\tsource_path";
const BIDS_VERSION: &str = "1.8.0";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidsSummary {
    /// Every file written, relative to the destination root, sorted.
    pub files: Vec<PathBuf>,
    pub participants: usize,
}

/// BIDS subject label: the alphanumeric characters of the id.
pub fn bids_label(subject_id: &str) -> Result<String> {
    let label: String = subject_id
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    if label.is_empty() {
        return Err(CurationError::InvalidSubjectId(subject_id.to_string()));
    }
    Ok(label)
}

fn session(month: u32) -> String {
    format!("ses-M{month:02}")
}

fn file_stem(label: &str, month: u32, modality: Modality) -> String {
    let ses = session(month);
    match modality {
        Modality::T1 => format!("sub-{label}_{ses}_T1w"),
        Modality::FDG => format!("sub-{label}_{ses}_acq-fdg_pet"),
        Modality::AV45 => format!("sub-{label}_{ses}_acq-av45_pet"),
    }
}

/// Path of an image inside a BIDS root.
pub fn bids_relative_path(label: &str, month: u32, modality: Modality) -> PathBuf {
    let kind = if modality.is_pet() { "pet" } else { "anat" };
    PathBuf::from(format!("sub-{label}"))
        .join(session(month))
        .join(kind)
        .join(format!("{}.nii", file_stem(label, month, modality)))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CurationError {
    CurationError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn put(dest_root: &Path, rel: &Path, bytes: &[u8]) -> Result<()> {
    let full = dest_root.join(rel);
    write_new(&full, bytes).map_err(|e| match e {
        WriteError::Exists => CurationError::DestinationExists(full.display().to_string()),
        WriteError::Io(e) => io_err(&full, e),
    })?;
    Ok(())
}

struct PlannedImage {
    rel: PathBuf,
    source: PathBuf,
    uid: String,
    source_path: String,
}

/// Copies every selected scan into a BIDS layout under `dest_root` and writes
/// `participants.tsv`, per-session `_scans.tsv` files and
/// `dataset_description.json`. Nothing is written if any source is missing
/// or two entries would land on the same file.
pub fn build_bids(
    manifest: &CohortManifest,
    source_root: &Path,
    dest_root: &Path,
) -> Result<BidsSummary> {
    let mut entries: Vec<&ManifestEntry> = manifest.entries.iter().collect();
    entries.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));

    let mut images: BTreeMap<PathBuf, PlannedImage> = BTreeMap::new();
    let mut participants = String::from(PARTICIPANTS_HEADER);
    participants.push('\n');
    let mut seen_labels = BTreeSet::new();
    for entry in &entries {
        let label = bids_label(&entry.subject_id)?;
        if !seen_labels.insert(label.clone()) {
            return Err(CurationError::CollisionAtDestination(format!(
                "sub-{label} (participants.tsv)"
            )));
        }
        participants.push_str(&format!(
            "sub-{label}\t{}\t{}\n",
            entry.label.base, entry.amyloid_status
        ));
        for (&modality, scan) in &entry.scans {
            let rel = bids_relative_path(&label, scan.months_from_baseline, modality);
            let source = source_root.join(&scan.source_path);
            let planned = PlannedImage {
                rel: rel.clone(),
                source,
                uid: scan.scan_uid.clone(),
                source_path: scan.source_path.clone(),
            };
            if images.insert(rel.clone(), planned).is_some() {
                return Err(CurationError::CollisionAtDestination(
                    rel.display().to_string(),
                ));
            }
        }
    }
    for img in images.values() {
        if !img.source.is_file() {
            return Err(CurationError::MissingSource(img.source.display().to_string()));
        }
    }

    let mut files = Vec::new();
    let description = serde_json::json!({
        "Name": "voxbench curated cohort",
        "BIDSVersion": BIDS_VERSION,
        "DatasetType": "raw",
        "HorizonMonths": manifest.horizon_months,
    });
    let description = serde_json::to_string_pretty(&description).expect("static json") + "\n";
    put(dest_root, Path::new("dataset_description.json"), description.as_bytes())?;
    files.push(PathBuf::from("dataset_description.json"));
    put(dest_root, Path::new("participants.tsv"), participants.as_bytes())?;
    files.push(PathBuf::from("participants.tsv"));

    let mut scans_tables: BTreeMap<PathBuf, String> = BTreeMap::new();
    for img in images.values() {
        let bytes = fs::read(&img.source).map_err(|e| io_err(&img.source, e))?;
        put(dest_root, &img.rel, &bytes)?;
        files.push(img.rel.clone());

        // sub-X/ses-Y/<kind>/file -> sub-X/ses-Y/sub-X_ses-Y_scans.tsv
        let ses_dir = img.rel.parent().and_then(Path::parent).expect("nested path");
        let sub = ses_dir.parent().expect("nested path");
        let table_rel = ses_dir.join(format!(
            "{}_{}_scans.tsv",
            sub.display(),
            ses_dir.file_name().expect("session dir").to_string_lossy()
        ));
        let within_session = img.rel.strip_prefix(ses_dir).expect("prefix");
        let table = scans_tables
            .entry(table_rel)
            .or_insert_with(|| format!("{SCANS_HEADER}\n"));
        table.push_str(&format!(
            "{}\t{}\t{}\n",
            within_session.display(),
            img.uid,
            img.source_path
        ));
    }
    for (rel, table) in &scans_tables {
        put(dest_root, rel, table.as_bytes())?;
        files.push(rel.clone());
    }
    files.sort();
    Ok(BidsSummary {
        files,
        participants: entries.len(),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_session(name: &str) -> Option<u32> {
    name.strip_prefix("ses-M")?.parse().ok()
}

/// Reconstructs a manifest from a tree written by [`build_bids`]. Subject ids
/// are the BIDS labels; each modality maps to its earliest session.
pub fn read_bids(root: &Path) -> Result<CohortManifest> {
    let participants = read_text(&root.join("participants.tsv"))?;
    let mut lines = participants.lines();
    if lines.next().map(str::trim_end) != Some(PARTICIPANTS_HEADER) {
        return Err(CurationError::MalformedTree(
            "participants.tsv header".into(),
        ));
    }
    let horizon_months = match fs::read_to_string(root.join("dataset_description.json")) {
        Ok(text) => serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v.get("HorizonMonths").and_then(|h| h.as_u64()))
            .unwrap_or(36) as u32,
        Err(_) => 36,
    };

    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CurationError::MalformedTree(format!("participants.tsv line {}", i + 2));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad());
        }
        let label = cols[0].strip_prefix("sub-").ok_or_else(bad)?.to_string();
        let base = BaseGroup::parse(cols[1]).ok_or_else(bad)?;
        let status: AmyloidStatus = cols[2].parse().map_err(|_| bad())?;

        let sub_dir = root.join(format!("sub-{label}"));
        let mut sessions: Vec<(u32, PathBuf)> = Vec::new();
        if sub_dir.is_dir() {
            for d in fs::read_dir(&sub_dir).map_err(|e| io_err(&sub_dir, e))? {
                let d = d.map_err(|e| io_err(&sub_dir, e))?;
                if let Some(m) = parse_session(&d.file_name().to_string_lossy()) {
                    sessions.push((m, d.path()));
                }
            }
        }
        sessions.sort();

        let mut scans = BTreeMap::new();
        for (month, dir) in &sessions {
            let uids = read_scans_table(dir)?;
            for modality in Modality::ALL {
                if scans.contains_key(&modality) {
                    continue;
                }
                let rel = bids_relative_path(&label, *month, modality);
                if root.join(&rel).is_file() {
                    let within = rel.strip_prefix(rel.iter().take(2).collect::<PathBuf>())
                        .expect("prefix")
                        .display()
                        .to_string();
                    let (uid, source_path) = uids.get(&within).cloned().unwrap_or_default();
                    scans.insert(
                        modality,
                        SelectedScan {
                            months_from_baseline: *month,
                            scan_uid: uid,
                            source_path: if source_path.is_empty() {
                                rel.display().to_string()
                            } else {
                                source_path
                            },
                        },
                    );
                }
            }
        }
        entries.push(ManifestEntry {
            subject_id: label,
            label: GroupLabel::new(base, status),
            amyloid_status: status,
            scans,
        });
    }
    entries.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(CohortManifest {
        entries,
        horizon_months,
    })
}

fn read_scans_table(ses_dir: &Path) -> Result<BTreeMap<String, (String, String)>> {
    let mut out = BTreeMap::new();
    let Ok(listing) = fs::read_dir(ses_dir) else {
        return Ok(out);
    };
    for f in listing.flatten() {
        let name = f.file_name().to_string_lossy().to_string();
        if !name.ends_with("_scans.tsv") {
            continue;
        }
        let text = read_text(&f.path())?;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() == 3 {
                out.insert(cols[0].to_string(), (cols[1].to_string(), cols[2].to_string()));
            }
        }
    }
    Ok(out)
}

/// Subjects of each task label that have every required modality, sorted
/// by id.
pub fn select_subjects(
    manifest: &CohortManifest,
    task: (&str, &str),
    required: &BTreeSet<Modality>,
) -> Result<(Vec<String>, Vec<String>)> {
    let first: TaskLabel = task.0.parse()?;
    let second: TaskLabel = task.1.parse()?;
    if first == second {
        return Err(CurationError::SameLabel(first.to_string()));
    }
    let pick = |label: TaskLabel| {
        let mut ids: Vec<String> = manifest
            .entries
            .iter()
            .filter(|e| label.matches(&e.label))
            .filter(|e| required.iter().all(|m| e.scans.contains_key(m)))
            .map(|e| e.subject_id.clone())
            .collect();
        ids.sort();
        ids
    };
    Ok((pick(first), pick(second)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::RefinedGroup;

    fn entry(id: &str, base: BaseGroup, status: AmyloidStatus, mods: &[Modality]) -> ManifestEntry {
        ManifestEntry {
            subject_id: id.into(),
            label: GroupLabel::new(base, status),
            amyloid_status: status,
            scans: mods
                .iter()
                .map(|&m| {
                    (
                        m,
                        SelectedScan {
                            months_from_baseline: 0,
                            scan_uid: format!("{id}-{m}"),
                            source_path: format!("{id}_{m}.nii"),
                        },
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn naming_grammar() {
        assert_eq!(
            bids_relative_path("011S0002", 0, Modality::T1),
            PathBuf::from("sub-011S0002/ses-M00/anat/sub-011S0002_ses-M00_T1w.nii")
        );
        assert_eq!(
            bids_relative_path("011S0002", 6, Modality::FDG),
            PathBuf::from("sub-011S0002/ses-M06/pet/sub-011S0002_ses-M06_acq-fdg_pet.nii")
        );
        assert_eq!(
            bids_relative_path("X1", 120, Modality::AV45),
            PathBuf::from("sub-X1/ses-M120/pet/sub-X1_ses-M120_acq-av45_pet.nii")
        );
        assert_eq!(bids_label("011_S_0002").unwrap(), "011S0002");
        assert!(bids_label("__").is_err());
    }

    #[test]
    fn empty_manifest_writes_participants_only() {
        let dest = tempfile::tempdir().unwrap();
        let src = tempfile::tempdir().unwrap();
        let summary = build_bids(&CohortManifest::empty(36), src.path(), dest.path()).unwrap();
        assert_eq!(summary.participants, 0);
        assert_eq!(
            summary.files,
            vec![
                PathBuf::from("dataset_description.json"),
                PathBuf::from("participants.tsv")
            ]
        );
        let p = fs::read_to_string(dest.path().join("participants.tsv")).unwrap();
        assert_eq!(p, format!("{PARTICIPANTS_HEADER}\n"));
    }

    #[test]
    fn collision_detected_before_writing() {
        let src = tempfile::tempdir().unwrap();
        fs::write(src.path().join("011_S_0002_T1.nii"), b"a").unwrap();
        fs::write(src.path().join("011S0002_T1.nii"), b"b").unwrap();
        let manifest = CohortManifest {
            entries: vec![
                entry("011_S_0002", BaseGroup::AD, AmyloidStatus::Positive, &[Modality::T1]),
                entry("011S0002", BaseGroup::AD, AmyloidStatus::Positive, &[Modality::T1]),
            ],
            horizon_months: 36,
        };
        let dest = tempfile::tempdir().unwrap();
        assert!(matches!(
            build_bids(&manifest, src.path(), dest.path()),
            Err(CurationError::CollisionAtDestination(_))
        ));
        assert_eq!(fs::read_dir(dest.path()).unwrap().count(), 0);
    }

    #[test]
    fn missing_source() {
        let src = tempfile::tempdir().unwrap();
        let manifest = CohortManifest {
            entries: vec![entry("s1", BaseGroup::CN, AmyloidStatus::Negative, &[Modality::T1])],
            horizon_months: 36,
        };
        let dest = tempfile::tempdir().unwrap();
        assert!(matches!(
            build_bids(&manifest, src.path(), dest.path()),
            Err(CurationError::MissingSource(_))
        ));
    }

    #[test]
    fn build_then_read_back() {
        let src = tempfile::tempdir().unwrap();
        for f in ["s1_T1.nii", "s1_FDG.nii", "s2_T1.nii"] {
            fs::write(src.path().join(f), f.as_bytes()).unwrap();
        }
        let manifest = CohortManifest {
            entries: vec![
                entry("s2", BaseGroup::MCInc, AmyloidStatus::Negative, &[Modality::T1]),
                entry("s1", BaseGroup::AD, AmyloidStatus::Positive, &[Modality::T1, Modality::FDG]),
            ],
            horizon_months: 36,
        };
        let dest = tempfile::tempdir().unwrap();
        let summary = build_bids(&manifest, src.path(), dest.path()).unwrap();
        assert!(summary
            .files
            .contains(&PathBuf::from("sub-s1/ses-M00/pet/sub-s1_ses-M00_acq-fdg_pet.nii")));
        assert!(summary
            .files
            .contains(&PathBuf::from("sub-s1/ses-M00/sub-s1_ses-M00_scans.tsv")));
        let participants = fs::read_to_string(dest.path().join("participants.tsv")).unwrap();
        assert_eq!(
            participants,
            "participant_id\tgroup\tamyloid\nsub-s1\tAD\tpositive\nsub-s2\tMCInc\tnegative\n"
        );

        let back = read_bids(dest.path()).unwrap();
        assert_eq!(back.entries.len(), 2);
        assert_eq!(back.entries[0].subject_id, "s1");
        assert_eq!(back.entries[0].scans[&Modality::FDG].scan_uid, "s1-FDG");
        assert_eq!(
            back.entries[0].label.amyloid_refined,
            Some(RefinedGroup::AdPositive)
        );
        assert_eq!(back.entries[1].label.amyloid_refined, Some(RefinedGroup::MciNcNegative));

        // rerun onto the same tree is a no-op; a changed source is refused
        assert_eq!(build_bids(&manifest, src.path(), dest.path()).unwrap(), summary);
        fs::write(src.path().join("s2_T1.nii"), b"changed").unwrap();
        assert!(matches!(
            build_bids(&manifest, src.path(), dest.path()),
            Err(CurationError::DestinationExists(_))
        ));
    }

    #[test]
    fn subject_selection() {
        use AmyloidStatus::*;
        let manifest = CohortManifest {
            entries: vec![
                entry("c", BaseGroup::AD, Positive, &[Modality::T1]),
                entry("a", BaseGroup::AD, Negative, &[Modality::T1, Modality::FDG]),
                entry("b", BaseGroup::AD, Positive, &[Modality::FDG]),
                entry("d", BaseGroup::CN, Negative, &[Modality::T1]),
                entry("e", BaseGroup::MCIc, Positive, &[Modality::T1]),
                entry("f", BaseGroup::MCInc, Positive, &[Modality::T1]),
                entry("g", BaseGroup::MCInc, Negative, &[Modality::T1]),
            ],
            horizon_months: 36,
        };
        let t1: BTreeSet<_> = [Modality::T1].into();
        let (ad, cn) = select_subjects(&manifest, ("AD", "CN"), &t1).unwrap();
        assert_eq!(ad, vec!["a", "c"]);
        assert_eq!(cn, vec!["d"]);

        let (c, nc) = select_subjects(&manifest, ("MCIc-Aβ+", "MCInc-Aβ+"), &t1).unwrap();
        assert_eq!(c, vec!["e"]);
        assert_eq!(nc, vec!["f"]);

        let (x, y) = select_subjects(&CohortManifest::empty(36), ("AD", "CN"), &t1).unwrap();
        assert!(x.is_empty() && y.is_empty());

        assert!(matches!(
            select_subjects(&manifest, ("AD", "XYZ"), &t1),
            Err(CurationError::UnknownLabel(_))
        ));
        assert!(matches!(
            select_subjects(&manifest, ("AD", "AD"), &t1),
            Err(CurationError::SameLabel(_))
        ));
    }
}
