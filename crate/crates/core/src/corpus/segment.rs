use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnnotationSet, CorpusError, Segment, SentenceRef, Session};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentPolicy {
    /// Fixed windows of this many seconds, measured from the first utterance.
    ByTime(f64),
    /// Fixed number of utterances per segment.
    ByUtteranceCount(usize),
}

/// Cuts a session into contiguous, non-overlapping segments covering all of it.
///
/// With [`SegmentPolicy::ByTime`] a new segment starts at the first utterance
/// whose `t_start` reaches the next window boundary; windows with no utterance
/// produce no segment. The last, possibly short, segment is kept.
///
/// Segments inherit the parent's ratings. Relevance references are re-indexed
/// to the segment and those falling outside it are dropped.
pub fn segment_session(session: &Session, policy: SegmentPolicy) -> Result<Vec<Segment>, CorpusError> {
    let ranges = match policy {
        SegmentPolicy::ByUtteranceCount(0) => {
            return Err(CorpusError::Segmentation(
                "by_utterance_count must be at least 1".into(),
            ))
        }
        SegmentPolicy::ByUtteranceCount(size) => (0..session.utterances.len())
            .step_by(size)
            .map(|start| (start, (start + size).min(session.utterances.len())))
            .collect::<Vec<_>>(),
        SegmentPolicy::ByTime(window) => time_ranges(session, window)?,
    };

    Ok(ranges
        .into_iter()
        .enumerate()
        .map(|(segment_index, (start, end))| Segment {
            parent_session_id: session.session_id.clone(),
            segment_index,
            utterance_offset: start,
            utterances: session.utterances[start..end].to_vec(),
            annotations: slice_annotations(&session.annotations, start, end),
        })
        .collect())
}

fn time_ranges(session: &Session, window: f64) -> Result<Vec<(usize, usize)>, CorpusError> {
    if !window.is_finite() || window <= 0.0 {
        return Err(CorpusError::Segmentation(format!(
            "by_time window must be positive, got {window}"
        )));
    }
    let starts = session
        .utterances
        .iter()
        .enumerate()
        .map(|(i, u)| {
            u.t_start.ok_or_else(|| {
                CorpusError::Segmentation(format!(
                    "session {:?} utterance {i} has no t_start; by_time needs timestamps",
                    session.session_id
                ))
            })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let Some(&origin) = starts.first() else {
        return Ok(Vec::new());
    };

    let mut ranges = Vec::new();
    let mut seg_start = 0;
    let mut boundary = origin + window;
    for (i, &t) in starts.iter().enumerate() {
        if t >= boundary {
            if i > seg_start {
                ranges.push((seg_start, i));
                seg_start = i;
            }
            while t >= boundary {
                boundary += window;
            }
        }
    }
    ranges.push((seg_start, starts.len()));
    Ok(ranges)
}

fn slice_annotations(
    annotations: &BTreeMap<String, AnnotationSet>,
    start: usize,
    end: usize,
) -> BTreeMap<String, AnnotationSet> {
    annotations
        .iter()
        .map(|(name, set)| {
            let relevance = set.relevance.as_ref().map(|refs| {
                refs.iter()
                    .filter(|r| (start..end).contains(&r.utterance_index))
                    .map(|r| SentenceRef::new(r.utterance_index - start, r.sentence_index))
                    .collect()
            });
            (
                name.clone(),
                AnnotationSet {
                    ratings: set.ratings.clone(),
                    relevance,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Source, Utterance};

    fn timed_session(n: usize, step: f64) -> Session {
        let utts = (0..n)
            .map(|i| Utterance::teacher(format!("Line {i}.")).with_times(i as f64 * step, i as f64 * step + step))
            .collect();
        Session::new("lesson", Source::Classroom, utts)
    }

    #[test]
    fn sixty_minutes_in_seven_and_a_half_minute_windows() {
        let s = timed_session(360, 10.0);
        let segs = segment_session(&s, SegmentPolicy::ByTime(450.0)).unwrap();
        assert_eq!(segs.len(), 8);
        assert!(segs.iter().all(|g| g.utterances.len() == 45));
        let idx: Vec<usize> = segs.iter().map(|g| g.segment_index).collect();
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn count_policy_keeps_short_tail() {
        let s = timed_session(25, 1.0);
        let segs = segment_session(&s, SegmentPolicy::ByUtteranceCount(10)).unwrap();
        let sizes: Vec<usize> = segs.iter().map(|g| g.utterances.len()).collect();
        assert_eq!(sizes, vec![10, 10, 5]);
        let rejoined: Vec<Utterance> = segs.into_iter().flat_map(|g| g.utterances).collect();
        assert_eq!(rejoined, s.utterances);
    }

    #[test]
    fn single_utterance_is_one_segment() {
        let s = timed_session(1, 5.0);
        let segs = segment_session(&s, SegmentPolicy::ByTime(450.0)).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].utterances, s.utterances);
    }

    #[test]
    fn gaps_skip_empty_windows() {
        let utts = vec![
            Utterance::teacher("a.").with_times(0.0, 1.0),
            Utterance::teacher("b.").with_times(1000.0, 1001.0),
        ];
        let s = Session::new("gap", Source::Classroom, utts);
        let segs = segment_session(&s, SegmentPolicy::ByTime(450.0)).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].segment_index, 1);
    }

    #[test]
    fn missing_timestamps_is_precondition_error() {
        let s = Session::new("x", Source::Classroom, vec![Utterance::teacher("Hi.")]);
        assert!(matches!(
            segment_session(&s, SegmentPolicy::ByTime(450.0)),
            Err(CorpusError::Segmentation(_))
        ));
        assert!(segment_session(&s, SegmentPolicy::ByUtteranceCount(0)).is_err());
    }

    #[test]
    fn relevance_is_reindexed() {
        let s = timed_session(4, 1.0).annotate(
            "v",
            AnnotationSet::new(vec![2]).with_relevance(vec![SentenceRef::new(0, 0), SentenceRef::new(3, 0)]),
        );
        let segs = segment_session(&s, SegmentPolicy::ByUtteranceCount(2)).unwrap();
        assert_eq!(segs[0].annotations["v"].relevance, Some(vec![SentenceRef::new(0, 0)]));
        assert_eq!(segs[1].annotations["v"].relevance, Some(vec![SentenceRef::new(1, 0)]));
        assert_eq!(segs[1].annotations["v"].ratings, vec![2]);
    }
}
