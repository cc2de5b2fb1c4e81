use crate::dataset::Sample;
use crate::error::{Error, Result};

/// One vector per clip: the feature matrix averaged over time.
pub fn clip_vectors(samples: &[&Sample]) -> Vec<(Vec<f64>, usize)> {
    samples.iter().map(|s| (s.features.time_average(), s.label)).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Majority class among the `k` nearest training vectors (Euclidean).
/// A tied vote goes to the tied class whose member is nearest.
pub fn knn_predict(train: &[(Vec<f64>, usize)], query: &[f64], k: usize) -> Result<usize> {
    if k == 0 || k > train.len() {
        return Err(Error::Parameter(format!(
            "k = {k} must be between 1 and the training size {}",
            train.len()
        )));
    }
    let mut order: Vec<(f64, usize)> = train.iter().enumerate().map(|(i, (v, _))| (dist2(v, query), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let neighbours: Vec<usize> = order[..k].iter().map(|&(_, i)| train[i].1).collect();
    let n_classes = neighbours.iter().max().unwrap() + 1;
    let mut votes = vec![0usize; n_classes];
    for &c in &neighbours {
        votes[c] += 1;
    }
    let top = *votes.iter().max().unwrap();
    Ok(*neighbours.iter().find(|&&c| votes[c] == top).expect("some class has the top vote"))
}

/// Accuracy of [`knn_predict`] over a test set.
pub fn knn_baseline(train: &[(Vec<f64>, usize)], test: &[(Vec<f64>, usize)], k: usize) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Parameter("cannot evaluate on an empty set".into()));
    }
    let mut correct = 0;
    for (v, label) in test {
        if knn_predict(train, v, k)? == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_on_a_training_point() {
        let train = vec![(vec![0.0, 0.0], 0), (vec![5.0, 5.0], 1), (vec![9.0, 1.0], 2)];
        assert_eq!(knn_predict(&train, &[5.0, 5.0], 1).unwrap(), 1);
    }

    #[test]
    fn majority_of_three() {
        let train = vec![(vec![0.0], 1), (vec![1.0], 0), (vec![1.5], 0), (vec![10.0], 1)];
        assert_eq!(knn_predict(&train, &[0.9], 3).unwrap(), 0);
    }

    #[test]
    fn tie_goes_to_nearest() {
        let train = vec![(vec![0.0], 0), (vec![2.0], 1), (vec![-3.0], 0), (vec![3.5], 1)];
        assert_eq!(knn_predict(&train, &[1.2], 4).unwrap(), 1);
        assert_eq!(knn_predict(&train, &[0.8], 4).unwrap(), 0);
    }

    #[test]
    fn k_larger_than_training_set() {
        let train = vec![(vec![0.0], 0)];
        assert!(matches!(knn_predict(&train, &[0.0], 2), Err(Error::Parameter(_))));
        assert!(matches!(knn_baseline(&train, &[(vec![0.0], 0)], 5), Err(Error::Parameter(_))));
    }
}
