//! Diarization scoring: optimal reference↔hypothesis speaker mapping, DER
//! with collar and overlap handling, and JER.
//!
//! Times are treated as exact interval endpoints throughout; the scorer
//! sweeps the merged event timeline instead of rasterizing to frames.
//! Collars attach to reference segment boundaries only: ±collar around every
//! reference onset and offset is excluded from scoring. With overlap scoring
//! disabled, instants where two or more reference speakers are active are
//! excluded as well.

use std::collections::BTreeMap;

use crate::rttm::SegmentList;
use crate::{Error, Result};

/// Largest speaker count (on the smaller side of the mapping) handled by the
/// exhaustive assignment search.
pub const MAX_MAPPED_SPEAKERS: usize = 7;

#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub der: f64,
    pub jer: f64,
    pub missed_s: f64,
    pub false_alarm_s: f64,
    pub confusion_s: f64,
    pub scored_speech_s: f64,
    /// Reference speaker → hypothesis speaker, zero-overlap pairs dropped.
    pub mapping: Vec<(String, String)>,
    /// Set when no reference speech survived the collar exclusion; the
    /// report is then defined-empty with der = 0.
    pub scored_speech_empty: bool,
}

/// Per-speaker merged interval lists, ordered by first onset.
fn speaker_intervals(list: &SegmentList) -> Vec<(String, Vec<(f64, f64)>)> {
    let speakers = list.speakers_by_onset();
    let mut by_speaker: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for seg in list.segments() {
        by_speaker
            .entry(seg.speaker.as_str())
            .or_default()
            .push((seg.onset_s, seg.end_s()));
    }
    speakers
        .into_iter()
        .map(|s| {
            let merged = merge_intervals(by_speaker.remove(s.as_str()).unwrap_or_default());
            (s, merged)
        })
        .collect()
}

fn merge_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (s, e) in iv {
        if e <= s {
            continue;
        }
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

fn total_len(iv: &[(f64, f64)]) -> f64 {
    iv.iter().map(|(s, e)| e - s).sum()
}

fn intersection_len(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            acc += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    acc
}

fn contains(iv: &[(f64, f64)], t: f64) -> bool {
    iv.iter().any(|&(s, e)| s <= t && t < e)
}

/// Elementary timeline pieces on which all activity sets are constant.
struct Sweep {
    ref_iv: Vec<(String, Vec<(f64, f64)>)>,
    hyp_iv: Vec<(String, Vec<(f64, f64)>)>,
    excluded: Vec<(f64, f64)>,
    times: Vec<f64>,
}

impl Sweep {
    fn build(reference: &SegmentList, hypothesis: &SegmentList, collar_s: f64) -> Sweep {
        let ref_iv = speaker_intervals(reference);
        let hyp_iv = speaker_intervals(hypothesis);
        let mut excluded = Vec::new();
        if collar_s > 0.0 {
            for seg in reference.segments() {
                for b in [seg.onset_s, seg.end_s()] {
                    excluded.push(((b - collar_s).max(0.0), b + collar_s));
                }
            }
        }
        let excluded = merge_intervals(excluded);
        let mut times = vec![0.0];
        for (_, iv) in ref_iv.iter().chain(hyp_iv.iter()) {
            for &(s, e) in iv {
                times.push(s);
                times.push(e);
            }
        }
        for &(s, e) in &excluded {
            times.push(s);
            times.push(e);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        Sweep { ref_iv, hyp_iv, excluded, times }
    }

    /// Calls `f(dt, ref_active, hyp_active)` for every scored elementary
    /// interval. `score_overlap = false` drops pieces with ≥ 2 active
    /// reference speakers.
    fn for_each_scored(&self, score_overlap: bool, mut f: impl FnMut(f64, &[bool], &[bool])) {
        let mut ref_active = vec![false; self.ref_iv.len()];
        let mut hyp_active = vec![false; self.hyp_iv.len()];
        for w in self.times.windows(2) {
            let (t1, t2) = (w[0], w[1]);
            if t2 <= t1 {
                continue;
            }
            let mid = 0.5 * (t1 + t2);
            if contains(&self.excluded, mid) {
                continue;
            }
            for (flag, (_, iv)) in ref_active.iter_mut().zip(&self.ref_iv) {
                *flag = contains(iv, mid);
            }
            if !score_overlap && ref_active.iter().filter(|&&a| a).count() >= 2 {
                continue;
            }
            for (flag, (_, iv)) in hyp_active.iter_mut().zip(&self.hyp_iv) {
                *flag = contains(iv, mid);
            }
            f(t2 - t1, &ref_active, &hyp_active);
        }
    }
}

/// Exhaustive injective assignment of the smaller speaker side maximizing the
/// summed overlap, ties broken toward the lexicographically smallest
/// assignment in enumeration order. Returns ref-index → hyp-index pairs
/// (zero-overlap pairs dropped).
fn best_assignment(overlap: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let nr = overlap.len();
    let nh = if nr == 0 { 0 } else { overlap[0].len() };
    if nr == 0 || nh == 0 {
        return Ok(Vec::new());
    }
    if nr.min(nh) > MAX_MAPPED_SPEAKERS {
        return Err(Error::InvalidInput(format!(
            "speaker mapping supports at most {MAX_MAPPED_SPEAKERS} speakers on the smaller side, got {}",
            nr.min(nh)
        )));
    }
    // Enumerate over the smaller side in index order; the first maximum kept
    // under strict improvement is the lexicographically smallest tie.
    let ref_small = nr <= nh;
    let (small, large) = if ref_small { (nr, nh) } else { (nh, nr) };
    let mut best_score = f64::NEG_INFINITY;
    let mut best: Vec<usize> = Vec::new();
    let mut current = vec![usize::MAX; small];
    let mut used = vec![false; large];

    fn dfs(
        overlap: &[Vec<f64>],
        ref_small: bool,
        i: usize,
        small: usize,
        large: usize,
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        acc: f64,
        best_score: &mut f64,
        best: &mut Vec<usize>,
    ) {
        if i == small {
            if acc > *best_score {
                *best_score = acc;
                *best = current.clone();
            }
            return;
        }
        for j in 0..large {
            if used[j] {
                continue;
            }
            used[j] = true;
            current[i] = j;
            let gain = if ref_small { overlap[i][j] } else { overlap[j][i] };
            dfs(overlap, ref_small, i + 1, small, large, current, used, acc + gain, best_score, best);
            used[j] = false;
        }
    }
    dfs(
        overlap, ref_small, 0, small, large, &mut current, &mut used, 0.0, &mut best_score,
        &mut best,
    );
    let mut pairs: Vec<(usize, usize)> = best
        .iter()
        .enumerate()
        .map(|(i, &j)| if ref_small { (i, j) } else { (j, i) })
        .filter(|&(r, h)| overlap[r][h] > 0.0)
        .collect();
    pairs.sort();
    Ok(pairs)
}

/// One-to-one partial speaker mapping maximizing the total time mapped pairs
/// are simultaneously active, over the full (uncollared) timeline.
pub fn optimal_mapping(
    reference: &SegmentList,
    hypothesis: &SegmentList,
) -> Result<Vec<(String, String)>> {
    let ref_iv = speaker_intervals(reference);
    let hyp_iv = speaker_intervals(hypothesis);
    let overlap: Vec<Vec<f64>> = ref_iv
        .iter()
        .map(|(_, ri)| hyp_iv.iter().map(|(_, hi)| intersection_len(ri, hi)).collect())
        .collect();
    let pairs = best_assignment(&overlap)?;
    Ok(pairs
        .into_iter()
        .map(|(r, h)| (ref_iv[r].0.clone(), hyp_iv[h].0.clone()))
        .collect())
}

/// DER with collar exclusion and per-speaker overlap counting:
/// missed = Σ max(0, Nref − Nhyp), false alarm = Σ max(0, Nhyp − Nref),
/// confusion = Σ (min(Nref, Nhyp) − Ncorrect), each weighted by duration,
/// divided by the scored reference speech time Σ Nref. The speaker mapping
/// is chosen to maximize correctly attributed time within the scored
/// regions.
pub fn der(
    reference: &SegmentList,
    hypothesis: &SegmentList,
    collar_s: f64,
    score_overlap: bool,
) -> Result<ScoreReport> {
    let sweep = Sweep::build(reference, hypothesis, collar_s);
    let nr = sweep.ref_iv.len();
    let nh = sweep.hyp_iv.len();

    // Pass 1: pairwise co-activity inside the scored regions.
    let mut overlap = vec![vec![0.0f64; nh]; nr];
    sweep.for_each_scored(score_overlap, |dt, ra, ha| {
        for (r, &rf) in ra.iter().enumerate() {
            if !rf {
                continue;
            }
            for (h, &hf) in ha.iter().enumerate() {
                if hf {
                    overlap[r][h] += dt;
                }
            }
        }
    });
    let pairs = best_assignment(&overlap)?;
    let hyp_of_ref: Vec<Option<usize>> = (0..nr)
        .map(|r| pairs.iter().find(|(pr, _)| *pr == r).map(|&(_, h)| h))
        .collect();

    // Pass 2: error components.
    let (mut miss, mut fa, mut conf, mut scored) = (0.0, 0.0, 0.0, 0.0);
    sweep.for_each_scored(score_overlap, |dt, ra, ha| {
        let nref = ra.iter().filter(|&&a| a).count();
        let nhyp = ha.iter().filter(|&&a| a).count();
        let ncorrect = ra
            .iter()
            .enumerate()
            .filter(|&(r, &rf)| rf && hyp_of_ref[r].map(|h| ha[h]).unwrap_or(false))
            .count();
        scored += nref as f64 * dt;
        miss += (nref.saturating_sub(nhyp)) as f64 * dt;
        fa += (nhyp.saturating_sub(nref)) as f64 * dt;
        conf += (nref.min(nhyp) - ncorrect.min(nref.min(nhyp))) as f64 * dt;
    });

    let mapping: Vec<(String, String)> = pairs
        .iter()
        .map(|&(r, h)| (sweep.ref_iv[r].0.clone(), sweep.hyp_iv[h].0.clone()))
        .collect();
    let jer_value = if nr > 0 { jer(reference, hypothesis, &mapping)? } else { 0.0 };

    if scored <= 0.0 {
        return Ok(ScoreReport {
            der: 0.0,
            jer: jer_value,
            missed_s: 0.0,
            false_alarm_s: 0.0,
            confusion_s: 0.0,
            scored_speech_s: 0.0,
            mapping,
            scored_speech_empty: true,
        });
    }
    Ok(ScoreReport {
        der: (miss + fa + conf) / scored,
        jer: jer_value,
        missed_s: miss,
        false_alarm_s: fa,
        confusion_s: conf,
        scored_speech_s: scored,
        mapping,
        scored_speech_empty: false,
    })
}

/// Jaccard error rate: per reference speaker r with mapped hypothesis h,
/// 1 − |r∩h|/|r∪h|; reference speakers without a mapped partner score 1.
/// The result is the mean over reference speakers, computed without collars.
pub fn jer(
    reference: &SegmentList,
    hypothesis: &SegmentList,
    mapping: &[(String, String)],
) -> Result<f64> {
    let ref_iv = speaker_intervals(reference);
    if ref_iv.is_empty() {
        return Err(Error::InvalidInput("JER needs at least one reference speaker".into()));
    }
    let hyp_iv: BTreeMap<String, Vec<(f64, f64)>> =
        speaker_intervals(hypothesis).into_iter().collect();
    let map: BTreeMap<&str, &str> =
        mapping.iter().map(|(r, h)| (r.as_str(), h.as_str())).collect();
    let mut total = 0.0;
    for (speaker, iv) in &ref_iv {
        let score = match map.get(speaker.as_str()).and_then(|h| hyp_iv.get(*h)) {
            Some(hiv) => {
                let inter = intersection_len(iv, hiv);
                let union = total_len(iv) + total_len(hiv) - inter;
                if union > 0.0 {
                    1.0 - inter / union
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        total += score;
    }
    Ok(total / ref_iv.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rttm::Segment;

    fn seg(spk: &str, onset: f64, dur: f64) -> Segment {
        Segment { recording_id: "r".into(), speaker: spk.into(), onset_s: onset, duration_s: dur }
    }

    #[test]
    fn perfect_hypothesis_scores_zero() {
        let list = SegmentList::new(vec![seg("a", 0.0, 5.0), seg("b", 3.0, 4.0)]);
        let report = der(&list, &list, 0.25, true).unwrap();
        assert_eq!(report.der, 0.0);
        assert_eq!(report.jer, 0.0);
    }

    #[test]
    fn relabeled_hypothesis_recovers_mapping() {
        let reference = SegmentList::new(vec![seg("a", 0.0, 5.0), seg("b", 6.0, 3.0)]);
        let hypothesis = SegmentList::new(vec![seg("x", 0.0, 5.0), seg("y", 6.0, 3.0)]);
        let report = der(&reference, &hypothesis, 0.0, true).unwrap();
        assert!(report.der.abs() < 1e-12);
        assert_eq!(report.mapping, vec![("a".into(), "x".into()), ("b".into(), "y".into())]);
    }

    #[test]
    fn truncated_hypothesis_is_missed_speech() {
        // ref A[0,10], hyp A[0,8], collar 0: missed 2 s, DER 20%.
        let reference = SegmentList::new(vec![seg("a", 0.0, 10.0)]);
        let hypothesis = SegmentList::new(vec![seg("a", 0.0, 8.0)]);
        let report = der(&reference, &hypothesis, 0.0, true).unwrap();
        assert!((report.missed_s - 2.0).abs() < 1e-12);
        assert!((report.der - 0.20).abs() < 1e-12);
        assert_eq!(report.false_alarm_s, 0.0);
        assert_eq!(report.confusion_s, 0.0);
    }

    #[test]
    fn empty_hypothesis_is_all_missed() {
        let reference = SegmentList::new(vec![seg("a", 0.0, 4.0), seg("b", 1.0, 2.0)]);
        let hypothesis = SegmentList::default();
        let report = der(&reference, &hypothesis, 0.0, true).unwrap();
        assert!((report.der - 1.0).abs() < 1e-12);
        assert!(report.mapping.is_empty());
        assert!((report.jer - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_reference_gives_defined_empty_report() {
        let reference = SegmentList::default();
        let hypothesis = SegmentList::new(vec![seg("a", 0.0, 4.0)]);
        let report = der(&reference, &hypothesis, 0.25, true).unwrap();
        assert!(report.scored_speech_empty);
        assert_eq!(report.der, 0.0);
    }

    #[test]
    fn jer_interval_hand_case() {
        // ref a[0,2], hyp x[1,3]: intersection 1, union 3 → JER 2/3.
        let reference = SegmentList::new(vec![seg("a", 0.0, 2.0)]);
        let hypothesis = SegmentList::new(vec![seg("x", 1.0, 2.0)]);
        let mapping = vec![("a".to_string(), "x".to_string())];
        let val = jer(&reference, &hypothesis, &mapping).unwrap();
        assert!((val - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn jer_requires_reference_speakers() {
        let reference = SegmentList::default();
        let hypothesis = SegmentList::new(vec![seg("x", 0.0, 1.0)]);
        assert!(jer(&reference, &hypothesis, &[]).is_err());
    }

    #[test]
    fn mapping_matches_brute_force_on_3x3() {
        // Handcrafted overlap structure: a↔y, b↔z, c↔x is optimal.
        let reference = SegmentList::new(vec![
            seg("a", 0.0, 4.0),
            seg("b", 10.0, 4.0),
            seg("c", 20.0, 4.0),
        ]);
        let hypothesis = SegmentList::new(vec![
            seg("x", 20.0, 3.0),
            seg("y", 0.0, 3.5),
            seg("z", 10.5, 3.0),
        ]);
        let mapping = optimal_mapping(&reference, &hypothesis).unwrap();
        assert_eq!(
            mapping,
            vec![
                ("a".to_string(), "y".to_string()),
                ("b".to_string(), "z".to_string()),
                ("c".to_string(), "x".to_string())
            ]
        );
    }

    #[test]
    fn collar_shrinks_scored_speech() {
        let reference = SegmentList::new(vec![seg("a", 1.0, 8.0)]);
        let hypothesis = SegmentList::new(vec![seg("a", 1.0, 8.0)]);
        let r0 = der(&reference, &hypothesis, 0.0, true).unwrap();
        let r1 = der(&reference, &hypothesis, 0.25, true).unwrap();
        let r2 = der(&reference, &hypothesis, 1.0, true).unwrap();
        assert!(r0.scored_speech_s > r1.scored_speech_s);
        assert!(r1.scored_speech_s > r2.scored_speech_s);
        assert!((r0.scored_speech_s - 8.0).abs() < 1e-12);
        assert!((r1.scored_speech_s - 7.0).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_mode_excludes_overlap_regions() {
        let reference = SegmentList::new(vec![seg("a", 0.0, 4.0), seg("b", 2.0, 4.0)]);
        let hypothesis = SegmentList::new(vec![seg("a", 0.0, 4.0), seg("b", 2.0, 4.0)]);
        let with = der(&reference, &hypothesis, 0.0, true).unwrap();
        let without = der(&reference, &hypothesis, 0.0, false).unwrap();
        // Overlap [2,4) counts twice when scored, is dropped when not.
        assert!((with.scored_speech_s - 8.0).abs() < 1e-12);
        assert!((without.scored_speech_s - 4.0).abs() < 1e-12);
    }

    #[test]
    fn components_sum_to_der_times_scored() {
        let reference = SegmentList::new(vec![seg("a", 0.0, 6.0), seg("b", 2.0, 7.0)]);
        let hypothesis = SegmentList::new(vec![seg("q", 0.5, 4.0), seg("w", 3.0, 9.0)]);
        let r = der(&reference, &hypothesis, 0.25, true).unwrap();
        let total = r.missed_s + r.false_alarm_s + r.confusion_s;
        assert!((r.der * r.scored_speech_s - total).abs() < 1e-9);
        assert!(r.missed_s >= 0.0 && r.false_alarm_s >= 0.0 && r.confusion_s >= 0.0);
    }
}
