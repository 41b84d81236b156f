use voxbench::curation::{assign_group, AmyloidStatus, BaseGroup, ClinicalRecord, CurationError, Diagnosis};

const MONTHS: [u32; 5] = [0, 12, 24, 36, 48];
const HORIZON: u32 = 36;

/// The grouping rules stated directly over an ordered visit list.
fn oracle(visits: &[(u32, Diagnosis)]) -> Option<BaseGroup> {
    let baseline = visits.iter().find(|v| v.0 == 0)?.1;
    let within = |d: Diagnosis| visits.iter().any(|&(m, x)| m <= HORIZON && x == d);
    let group = match baseline {
        Diagnosis::AD => BaseGroup::AD,
        Diagnosis::CN if !within(Diagnosis::MCI) && !within(Diagnosis::AD) => BaseGroup::CN,
        Diagnosis::CN => BaseGroup::Excluded,
        Diagnosis::MCI if within(Diagnosis::AD) => BaseGroup::MCIc,
        Diagnosis::MCI if visits.iter().any(|&(m, _)| m >= HORIZON) => BaseGroup::MCInc,
        Diagnosis::MCI => BaseGroup::Excluded,
    };
    Some(group)
}

fn month_subsets(len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << MONTHS.len()) {
        if mask.count_ones() as usize == len {
            out.push((0..MONTHS.len()).filter(|&i| mask & (1 << i) != 0).map(|i| MONTHS[i]).collect());
        }
    }
    out
}

fn diagnosis_sequences(len: usize) -> Vec<Vec<Diagnosis>> {
    let all = [Diagnosis::CN, Diagnosis::MCI, Diagnosis::AD];
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p: Vec<Diagnosis>| {
                all.iter().map(move |&d| {
                    let mut q = p.clone();
                    q.push(d);
                    q
                })
            })
            .collect();
    }
    out
}

#[test]
fn every_short_sequence_matches_oracle() {
    let mut checked = 0;
    for len in 1..=4 {
        for months in month_subsets(len) {
            for diags in diagnosis_sequences(len) {
                let visits: Vec<(u32, Diagnosis)> = months.iter().copied().zip(diags).collect();
                let mut records: Vec<ClinicalRecord> = visits
                    .iter()
                    .map(|&(m, d)| ClinicalRecord {
                        subject_id: "002_S_0001".into(),
                        months_from_baseline: m,
                        diagnosis: d,
                        amyloid_status: AmyloidStatus::Unknown,
                    })
                    .collect();
                records.reverse();
                let got = assign_group(&records, HORIZON);
                match oracle(&visits) {
                    Some(want) => assert_eq!(got, Ok(want), "{visits:?}"),
                    None => assert!(matches!(got, Err(CurationError::NoBaseline(_))), "{visits:?}"),
                }
                checked += 1;
            }
        }
    }
    // sum over len of C(5, len) * 3^len
    assert_eq!(checked, 15 + 90 + 270 + 405);
}
