use alloc::string::String;
use alloc::vec::Vec;

use super::{RankedDoc, RankerSource, Ranking, RankingError};

/// Length-`k` ranking with `key_ids` occupying consecutive slots starting at
/// `key_position`, fillers taking the remaining slots in order. Scores are
/// `k - position` so the ranking stays well formed.
pub fn make_synthetic_ranking(
    key_ids: &[String],
    filler_ids: &[String],
    k: usize,
    key_position: usize,
) -> Result<Ranking, RankingError> {
    if k == 0 {
        return Err(RankingError::ZeroK);
    }
    if key_ids.is_empty() {
        return Err(RankingError::NoKeyIds);
    }
    if key_ids.len() > k || key_position > k - key_ids.len() {
        return Err(RankingError::PositionOutOfRange { index: key_position, max: k.saturating_sub(key_ids.len()) });
    }
    let fillers: Vec<&String> = filler_ids.iter().filter(|f| !key_ids.contains(f)).collect();
    let needed = k - key_ids.len();
    if fillers.len() < needed {
        return Err(RankingError::InsufficientFillers { needed, available: fillers.len() });
    }
    let mut fill = fillers.into_iter();
    let mut entries = Vec::with_capacity(k);
    for pos in 0..k {
        let id = if pos >= key_position && pos < key_position + key_ids.len() {
            key_ids[pos - key_position].clone()
        } else {
            fill.next().expect("filler count checked").clone()
        };
        if entries.iter().any(|e: &RankedDoc| e.id == id) {
            return Err(RankingError::DuplicateId(id));
        }
        entries.push(RankedDoc { id, score: (k - pos) as f64 });
    }
    Ok(Ranking { source: RankerSource::Synthetic, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;
    use alloc::vec;

    fn fillers(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn key_first() {
        let r = make_synthetic_ranking(&["K".to_string()], &fillers(7), 8, 0).unwrap();
        assert_eq!(r.entries[0].id, "K");
        assert_eq!(r.len(), 8);
        assert!(r.is_well_formed());
    }

    #[test]
    fn key_in_middle_of_sixteen() {
        let r = make_synthetic_ranking(&["K".to_string()], &fillers(15), 16, 8).unwrap();
        let mut expected: Vec<String> = fillers(15);
        expected.insert(8, "K".to_string());
        assert_eq!(r.id_vec(), expected);
        assert_eq!(r.entries[8].score, 8.0);
        assert_eq!(r.source, RankerSource::Synthetic);
    }

    #[test]
    fn errors() {
        let k = vec!["K".to_string()];
        assert!(matches!(make_synthetic_ranking(&k, &fillers(7), 8, 8), Err(RankingError::PositionOutOfRange { .. })));
        assert!(matches!(
            make_synthetic_ranking(&k, &fillers(3), 8, 0),
            Err(RankingError::InsufficientFillers { needed: 7, available: 3 })
        ));
        assert_eq!(make_synthetic_ranking(&[], &fillers(3), 3, 0), Err(RankingError::NoKeyIds));
    }

    #[test]
    fn key_ids_among_fillers_are_skipped() {
        let mut f = fillers(3);
        f.insert(1, "K".to_string());
        let r = make_synthetic_ranking(&["K".to_string()], &f, 4, 3).unwrap();
        assert_eq!(r.id_vec(), ["f1", "f2", "f3", "K"]);
    }
}
