//! Bag-of-words logistic probe used as the generator's self-test.

use std::collections::HashMap;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numkit::sigmoid;
use crate::tem::tokenize;

const EPOCHS: usize = 300;
const LR: f64 = 0.5;

fn featurize(text: &str, index: &HashMap<String, usize>) -> Vec<usize> {
    let mut f: Vec<usize> = tokenize(text)
        .iter()
        .filter_map(|t| index.get(t).copied())
        .collect();
    f.sort_unstable();
    f.dedup();
    f
}

/// Trains full-batch logistic regression on binary token-presence features
/// of `train` and returns accuracy on `test`.
pub fn bow_probe_accuracy(train: &[(&str, u8)], test: &[(&str, u8)]) -> f64 {
    let mut index = HashMap::new();
    for (text, _) in train {
        for t in tokenize(text) {
            let n = index.len();
            index.entry(t).or_insert(n);
        }
    }
    let xs: Vec<Vec<usize>> = train.iter().map(|(t, _)| featurize(t, &index)).collect();
    let mut w = vec![0.0; index.len()];
    let mut b = 0.0;
    let n = train.len() as f64;
    for _ in 0..EPOCHS {
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (x, (_, y)) in xs.iter().zip(train) {
            let z = b + x.iter().map(|&i| w[i]).sum::<f64>();
            let err = sigmoid(z) - f64::from(*y);
            gb += err;
            x.iter().for_each(|&i| gw[i] += err);
        }
        b -= LR * gb / n;
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= LR * g / n);
    }
    let correct = test
        .iter()
        .filter(|(t, y)| {
            let z = b + featurize(t, &index).iter().map(|&i| w[i]).sum::<f64>();
            u8::from(z >= 0.0) == *y
        })
        .count();
    correct as f64 / test.len().max(1) as f64
}

/// Held-out accuracy of the probe on a dataset's captions.
pub fn text_probe(ds: &Dataset) -> Result<f64> {
    if ds.train.is_empty() || ds.test.is_empty() {
        return Err(Error::Config(
            "the probe needs both train and test records".into(),
        ));
    }
    Ok(bow_probe_accuracy(&pairs(&ds.train), &pairs(&ds.test)))
}

fn pairs(v: &[crate::model::Example]) -> Vec<(&str, u8)> {
    v.iter().map(|e| (e.text.as_str(), e.label)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_a_marker_word() {
        let train = [
            ("a b c", 0),
            ("a b x", 1),
            ("b c", 0),
            ("c x", 1),
            ("a c", 0),
            ("x b", 1),
        ];
        let test = [("a x", 1), ("b c a", 0)];
        assert_eq!(bow_probe_accuracy(&train, &test), 1.0);
    }
}
