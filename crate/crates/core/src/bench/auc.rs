use crate::error::{Error, Result};

/// ROC AUC with anomalies (`label == 0`) as the positive class.
///
/// Mann-Whitney statistic: the fraction of (anomaly, normal) pairs where the
/// anomaly scores higher, ties counting one half. Sorting makes it
/// `O(n log n)`; counts are kept as integers so the result is exact.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Evaluation(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Evaluation("NaN score".into()));
    }
    let anomalies = labels.iter().filter(|&&y| y == 0).count() as u64;
    let normals = labels.iter().filter(|&&y| y == 1).count() as u64;
    if anomalies + normals != labels.len() as u64 {
        return Err(Error::Evaluation("labels must be 0 (anomalous) or 1 (normal)".into()));
    }
    if anomalies == 0 || normals == 0 {
        return Err(Error::Evaluation("AUC needs both anomalous and normal samples".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the number of winning pairs, so ties stay integral
    let mut doubled_wins: u64 = 0;
    let mut normals_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut tied_anom, mut tied_norm) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 0 {
                tied_anom += 1;
            } else {
                tied_norm += 1;
            }
            j += 1;
        }
        doubled_wins += tied_anom * (2 * normals_below + tied_norm);
        normals_below += tied_norm;
        i = j;
    }
    Ok(doubled_wins as f64 / (2 * anomalies * normals) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        // anomalies {0.9, 0.8}, normals {0.1, 0.2}
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.3, 0.1, 0.5], &[0, 1, 1]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::Evaluation(_))));
        assert!(matches!(auc(&[0.1, 0.2], &[0, 0]), Err(Error::Evaluation(_))));
        assert!(auc(&[0.1], &[0, 1]).is_err());
        assert!(auc(&[0.1, 0.2], &[0, 2]).is_err());
    }

    #[test]
    fn signed_zero_ties() {
        assert_eq!(auc(&[0.0, -0.0], &[0, 1]).unwrap(), 0.5);
    }
}
