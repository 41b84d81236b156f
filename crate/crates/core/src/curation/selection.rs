//! Choosing one scan per subject, visit and modality.

use std::cmp::Ordering;
use std::fmt;

use super::{CurationError, Modality, Result, ScanRecord, StudyPhase};

/// The criterion that separated the winner from the best runner-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    OnlyCandidate,
    GradwarpB1Corrected,
    QualityRank,
    FieldStrength15T,
    CoregisteredAveraged,
    ScanUid,
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionRule::OnlyCandidate => "single candidate",
            SelectionRule::GradwarpB1Corrected => "gradwarp+B1 preferred",
            SelectionRule::QualityRank => "higher quality preferred",
            SelectionRule::FieldStrength15T => "1.5T preferred for phase1",
            SelectionRule::CoregisteredAveraged => "coregistered averaged preferred",
            SelectionRule::ScanUid => "smallest scan uid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub scan: ScanRecord,
    pub rule: SelectionRule,
    pub candidates: usize,
}

fn is_15t(s: &ScanRecord) -> bool {
    (s.field_strength_tesla - 1.5).abs() < 1e-6
}

/// Compares two candidates, returning the ordering (Less = `a` preferred)
/// and the rule that decided it.
fn compare(a: &ScanRecord, b: &ScanRecord) -> (Ordering, SelectionRule) {
    let mut steps: Vec<(Ordering, SelectionRule)> = Vec::with_capacity(4);
    if a.modality == Modality::T1 {
        let corrected = |s: &ScanRecord| !(s.gradwarp && s.b1_corrected);
        steps.push((
            corrected(a).cmp(&corrected(b)),
            SelectionRule::GradwarpB1Corrected,
        ));
        steps.push((a.quality_rank.cmp(&b.quality_rank), SelectionRule::QualityRank));
        let field = |s: &ScanRecord| s.study_phase == StudyPhase::Phase1 && !is_15t(s);
        steps.push((field(a).cmp(&field(b)), SelectionRule::FieldStrength15T));
    } else {
        steps.push((
            (!a.coregistered_averaged).cmp(&!b.coregistered_averaged),
            SelectionRule::CoregisteredAveraged,
        ));
        steps.push((a.quality_rank.cmp(&b.quality_rank), SelectionRule::QualityRank));
    }
    steps.push((a.scan_uid.cmp(&b.scan_uid), SelectionRule::ScanUid));
    steps
        .into_iter()
        .find(|(o, _)| *o != Ordering::Equal)
        .unwrap_or((Ordering::Equal, SelectionRule::ScanUid))
}

/// Picks the preferred scan among candidates sharing subject, month and
/// modality. The result does not depend on candidate order.
pub fn select_scan(candidates: &[ScanRecord]) -> Result<Selection> {
    let first = candidates.first().ok_or(CurationError::EmptyCandidates)?;
    if candidates.iter().any(|c| {
        c.subject_id != first.subject_id
            || c.months_from_baseline != first.months_from_baseline
            || c.modality != first.modality
    }) {
        return Err(CurationError::MixedKey);
    }
    let mut ranked: Vec<&ScanRecord> = candidates.iter().collect();
    ranked.sort_by(|a, b| compare(a, b).0);
    let rule = match ranked.get(1) {
        None => SelectionRule::OnlyCandidate,
        Some(runner_up) => compare(ranked[0], runner_up).1,
    };
    Ok(Selection {
        scan: ranked[0].clone(),
        rule,
        candidates: candidates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t1(uid: &str, gradwarp: bool, b1: bool, rank: i64, tesla: f64, phase: StudyPhase) -> ScanRecord {
        ScanRecord {
            subject_id: "s1".into(),
            months_from_baseline: 0,
            modality: Modality::T1,
            gradwarp,
            b1_corrected: b1,
            quality_rank: rank,
            field_strength_tesla: tesla,
            study_phase: phase,
            coregistered_averaged: false,
            source_path: format!("raw/{uid}.nii"),
            scan_uid: uid.into(),
        }
    }

    fn pet(uid: &str, coreg: bool, rank: i64) -> ScanRecord {
        ScanRecord {
            modality: Modality::FDG,
            coregistered_averaged: coreg,
            ..t1(uid, false, false, rank, 3.0, StudyPhase::Phase2)
        }
    }

    #[test]
    fn single_candidate() {
        let only = t1("X", false, false, 3, 3.0, StudyPhase::Phase2);
        let sel = select_scan(std::slice::from_ref(&only)).unwrap();
        assert_eq!(sel.scan, only);
        assert_eq!(sel.rule, SelectionRule::OnlyCandidate);
    }

    #[test]
    fn corrected_t1_beats_original() {
        let original = t1("A", false, false, 1, 1.5, StudyPhase::Phase1);
        let corrected = t1("B", true, true, 2, 1.5, StudyPhase::Phase1);
        let sel = select_scan(&[original, corrected.clone()]).unwrap();
        assert_eq!(sel.scan, corrected);
        assert_eq!(sel.rule, SelectionRule::GradwarpB1Corrected);
        assert_eq!(sel.rule.to_string(), "gradwarp+B1 preferred");
    }

    #[test]
    fn gradwarp_alone_is_not_corrected() {
        let half = t1("A", true, false, 1, 3.0, StudyPhase::Phase2);
        let full = t1("B", true, true, 5, 3.0, StudyPhase::Phase2);
        assert_eq!(select_scan(&[half, full]).unwrap().scan.scan_uid, "B");
    }

    #[test]
    fn quality_then_field_strength() {
        let a = t1("A", true, true, 2, 1.5, StudyPhase::Phase1);
        let b = t1("B", true, true, 1, 3.0, StudyPhase::Phase1);
        let sel = select_scan(&[a.clone(), b]).unwrap();
        assert_eq!(sel.scan.scan_uid, "B");
        assert_eq!(sel.rule, SelectionRule::QualityRank);

        let c = t1("C", true, true, 2, 3.0, StudyPhase::Phase1);
        let sel = select_scan(&[c, a]).unwrap();
        assert_eq!(sel.scan.scan_uid, "A");
        assert_eq!(sel.rule, SelectionRule::FieldStrength15T);
    }

    #[test]
    fn field_strength_ignored_outside_phase1() {
        let a = t1("B", true, true, 1, 1.5, StudyPhase::Phase2);
        let b = t1("A", true, true, 1, 3.0, StudyPhase::Phase2);
        let sel = select_scan(&[a, b]).unwrap();
        assert_eq!(sel.scan.scan_uid, "A");
        assert_eq!(sel.rule, SelectionRule::ScanUid);
    }

    #[test]
    fn uid_tie_break() {
        let b = t1("B", true, true, 1, 3.0, StudyPhase::Phase2);
        let a = t1("A", true, true, 1, 3.0, StudyPhase::Phase2);
        assert_eq!(select_scan(&[b, a]).unwrap().scan.scan_uid, "A");
    }

    #[test]
    fn pet_prefers_coregistered_average() {
        let raw = pet("A", false, 1);
        let avg = pet("B", true, 4);
        let sel = select_scan(&[raw, avg]).unwrap();
        assert_eq!(sel.scan.scan_uid, "B");
        assert_eq!(sel.rule, SelectionRule::CoregisteredAveraged);
    }

    #[test]
    fn errors() {
        assert_eq!(select_scan(&[]), Err(CurationError::EmptyCandidates));
        let a = t1("A", true, true, 1, 3.0, StudyPhase::Phase2);
        let mut b = a.clone();
        b.scan_uid = "B".into();
        b.months_from_baseline = 12;
        assert_eq!(select_scan(&[a, b]), Err(CurationError::MixedKey));
    }

    fn arb_t1() -> impl Strategy<Value = ScanRecord> {
        (
            any::<bool>(),
            any::<bool>(),
            0i64..3,
            prop_oneof![Just(1.5), Just(3.0)],
            prop_oneof![Just(StudyPhase::Phase1), Just(StudyPhase::Phase2)],
        )
            .prop_map(|(g, b, r, t, p)| t1("", g, b, r, t, p))
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_idempotent(
            mut cands in prop::collection::vec(arb_t1(), 1..7),
            rotate in 0usize..7,
        ) {
            for (i, c) in cands.iter_mut().enumerate() {
                c.scan_uid = format!("U{i:02}");
            }
            let winner = select_scan(&cands).unwrap().scan;
            let mut shuffled = cands.clone();
            shuffled.reverse();
            let k = rotate % shuffled.len();
            shuffled.rotate_left(k);
            prop_assert_eq!(&select_scan(&shuffled).unwrap().scan, &winner);
            prop_assert_eq!(&select_scan(std::slice::from_ref(&winner)).unwrap().scan, &winner);
        }
    }
}
