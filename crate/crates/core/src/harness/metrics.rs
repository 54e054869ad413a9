//! Micro/macro F1 from a confusion matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub micro_f: f64,
    pub macro_f: f64,
    /// `confusion[truth][prediction]`, indexed by position in the class set.
    pub confusion: Vec<Vec<usize>>,
}

pub fn compute_metrics(predictions: &[usize], truths: &[usize], classes: &[usize]) -> Result<Metrics> {
    if predictions.len() != truths.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Contract("no predictions to score".into()));
    }
    let pos = |c: usize| {
        classes
            .iter()
            .position(|&x| x == c)
            .ok_or_else(|| Error::Contract(format!("label {c} outside the class set")))
    };
    let n = classes.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (&p, &t) in predictions.iter().zip(truths) {
        confusion[pos(t)?][pos(p)?] += 1;
    }
    let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
    let micro_f = correct as f64 / predictions.len() as f64;
    let f1 = |c: usize| {
        let tp = confusion[c][c];
        let fp: usize = (0..n).filter(|&t| t != c).map(|t| confusion[t][c]).sum();
        let fn_: usize = (0..n).filter(|&p| p != c).map(|p| confusion[c][p]).sum();
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let macro_f = (0..n).map(f1).sum::<f64>() / n as f64;
    Ok(Metrics {
        micro_f,
        macro_f,
        confusion,
    })
}
