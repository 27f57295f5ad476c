/// All-points average precision: rank by descending score (ties keep input
/// order), then average precision@k over the ranks k of the positives.
/// `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // sort_by is stable, so equal scores stay in index order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Mean of the defined entries, `None` if there are none.
pub fn mean_defined(aps: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = aps.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Quadratic reference: the rank of item i is one plus the number of
    /// items that precede it (higher score, or equal score and lower index).
    pub(crate) fn brute_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let n = scores.len();
        let precedes = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
        let mut total = 0.0;
        let mut n_pos = 0;
        for i in (0..n).filter(|&i| labels[i]) {
            n_pos += 1;
            let rank = 1 + (0..n).filter(|&j| precedes(j, i)).count();
            let pos_at_or_above = 1 + (0..n).filter(|&j| labels[j] && precedes(j, i)).count();
            total += pos_at_or_above as f64 / rank as f64;
        }
        (n_pos > 0).then(|| total / n_pos as f64)
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1, 0.0], &[true, true, false, false]), Some(1.0));
    }

    #[test]
    fn hand_example() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[false, true, true]).unwrap();
        assert!((ap - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn no_positives_is_undefined() {
        assert_eq!(average_precision(&[0.3, 0.2], &[false, false]), None);
        assert_eq!(mean_defined(&[None, Some(0.5), Some(1.0)]), Some(0.75));
        assert_eq!(mean_defined(&[None]), None);
    }

    #[test]
    fn ties_follow_input_order() {
        // all scores equal: ranks are the input positions
        let ap = average_precision(&[0.5; 4], &[false, true, false, true]).unwrap();
        assert!((ap - (0.5 + 0.5) / 2.0).abs() < 1e-15);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1usize..20).prop_flat_map(|n| {
            // a coarse score grid makes ties common
            (prop::collection::vec((0u8..5).prop_map(|v| v as f64 / 4.0), n), prop::collection::vec(any::<bool>(), n))
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force((scores, labels) in instance()) {
            match (average_precision(&scores, &labels), brute_ap(&scores, &labels)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn monotone_transform_keeps_ap((scores, labels) in instance()) {
            let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s - 1.0).exp()).collect();
            prop_assert_eq!(average_precision(&scores, &labels), average_precision(&squashed, &labels));
        }

        #[test]
        fn ap_in_unit_interval((scores, labels) in instance()) {
            if let Some(ap) = average_precision(&scores, &labels) {
                prop_assert!(ap > 0.0 && ap <= 1.0);
            }
        }
    }
}
