use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Train and held-out indices of one split, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified random split of samples with the given class labels.
///
/// About `1 - train_fraction` of the samples are held out, allocated to
/// classes by largest remainder. Every class with at least two samples
/// keeps at least one sample on each side; single-sample classes go to
/// the training side.
pub fn monte_carlo_split(labels: &[usize], train_fraction: f64, seed: u64) -> Result<Split> {
    if labels.is_empty() {
        return Err(Error::Parameter("cannot split an empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let held = 1.0 - train_fraction;
    let target = (labels.len() as f64 * held).round() as usize;

    let ideal: Vec<f64> = members.iter().map(|m| m.len() as f64 * held).collect();
    let mut take: Vec<usize> = members
        .iter()
        .zip(&ideal)
        .map(|(m, &x)| if m.len() < 2 { 0 } else { (x.floor() as usize).clamp(1, m.len() - 1) })
        .collect();
    for (c, m) in members.iter().enumerate() {
        if m.len() == 1 {
            log::warn!("class {c} has a single sample; it stays in the training split");
        }
    }
    let mut total: usize = take.iter().sum();
    while total < target {
        let pick = (0..n_classes)
            .filter(|&c| members[c].len() >= 2 && take[c] < members[c].len() - 1)
            .max_by(|&a, &b| {
                (ideal[a] - take[a] as f64).total_cmp(&(ideal[b] - take[b] as f64)).then(b.cmp(&a))
            });
        let Some(c) = pick else { break };
        take[c] += 1;
        total += 1;
    }
    while total > target {
        let pick = (0..n_classes)
            .filter(|&c| take[c] > 1)
            .min_by(|&a, &b| {
                (ideal[a] - take[a] as f64).total_cmp(&(ideal[b] - take[b] as f64)).then(a.cmp(&b))
            });
        let Some(c) = pick else { break };
        take[c] -= 1;
        total -= 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, m) in members.iter().enumerate() {
        let mut m = m.clone();
        m.shuffle(&mut rng);
        test.extend_from_slice(&m[..take[c]]);
        train.extend_from_slice(&m[take[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}
