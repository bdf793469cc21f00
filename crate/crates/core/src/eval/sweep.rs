//! Oracle threshold search for external consistency scores.

use thiserror::Error;

use super::metrics::{f1_macro, ConfusionCounts};
use crate::model::Judgment;

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("no scores")]
    Empty,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("grid step must be in (0, 1], got {0}")]
    BadStep(f64),
    #[error("score {0} is outside [0, 1]")]
    OutOfRange(f64),
}

/// `0, step, 2*step, ...` up to and including 1.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>, SweepError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(SweepError::BadStep(step));
    }
    let round = |x: f64| (x * 1e12).round() / 1e12;
    let mut grid: Vec<f64> = (0..)
        .map(|k| round(k as f64 * step))
        .take_while(|&t| t <= 1.0)
        .collect();
    if grid.last() != Some(&1.0) {
        grid.push(1.0);
    }
    Ok(grid)
}

/// Scores below the threshold are predicted hallucinated.
pub fn predict(score: f64, threshold: f64) -> Judgment {
    if score < threshold {
        Judgment::Hallucination
    } else {
        Judgment::NonHallucination
    }
}

pub fn f1_at(scores: &[f64], labels: &[Judgment], threshold: f64) -> f64 {
    let mut c = ConfusionCounts::default();
    for (s, l) in scores.iter().zip(labels) {
        c.add(*l, predict(*s, threshold));
    }
    f1_macro(&c)
}

fn check(scores: &[f64], labels: &[Judgment]) -> Result<(), SweepError> {
    if scores.is_empty() {
        return Err(SweepError::Empty);
    }
    if scores.len() != labels.len() {
        return Err(SweepError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(SweepError::OutOfRange(*s));
    }
    Ok(())
}

// best by value; ties go to the threshold nearest the 0.5 default, then the lower one
fn argmax(grid: &[f64], values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut best = (grid[0], f64::NEG_INFINITY);
    for (&t, v) in grid.iter().zip(values) {
        let closer = (t - 0.5).abs() < (best.0 - 0.5).abs() - 1e-12;
        if v > best.1 + 1e-12 || ((v - best.1).abs() <= 1e-12 && closer) {
            best = (t, v);
        }
    }
    best
}

/// Threshold with the highest macro F1, and that F1.
pub fn sweep_threshold(
    scores: &[f64],
    labels: &[Judgment],
    step: f64,
) -> Result<(f64, f64), SweepError> {
    check(scores, labels)?;
    let grid = threshold_grid(step)?;
    let values: Vec<f64> = grid.iter().map(|&t| f1_at(scores, labels, t)).collect();
    Ok(argmax(&grid, values.into_iter()))
}

/// Threshold maximizing the mean macro F1 across datasets.
pub fn sweep_threshold_multi(
    datasets: &[(Vec<f64>, Vec<Judgment>)],
    step: f64,
) -> Result<(f64, f64), SweepError> {
    if datasets.is_empty() {
        return Err(SweepError::Empty);
    }
    for (s, l) in datasets {
        check(s, l)?;
    }
    let grid = threshold_grid(step)?;
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| datasets.iter().map(|(s, l)| f1_at(s, l, t)).sum::<f64>() / datasets.len() as f64)
        .collect();
    Ok(argmax(&grid, values.into_iter()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Judgment::*;

    #[test]
    fn four_point_case() {
        let scores = [0.1, 0.4, 0.6, 0.9];
        let labels = [
            Hallucination,
            Hallucination,
            NonHallucination,
            NonHallucination,
        ];
        assert_eq!(sweep_threshold(&scores, &labels, 0.02), Ok((0.5, 1.0)));
    }

    #[test]
    fn grid_shape() {
        let g = threshold_grid(0.02).unwrap();
        assert_eq!(g.len(), 51);
        assert_eq!((g[0], g[25], g[50]), (0.0, 0.5, 1.0));
        assert_eq!(threshold_grid(0.3).unwrap(), [0.0, 0.3, 0.6, 0.9, 1.0]);
        assert!(threshold_grid(0.0).is_err());
        assert!(threshold_grid(-1.0).is_err());
    }

    #[test]
    fn errors() {
        assert_eq!(sweep_threshold(&[], &[], 0.1), Err(SweepError::Empty));
        assert!(sweep_threshold(&[0.5], &[], 0.1).is_err());
        assert_eq!(
            sweep_threshold(&[1.5], &[Hallucination], 0.1),
            Err(SweepError::OutOfRange(1.5))
        );
    }

    #[test]
    fn multi_dataset_mean() {
        let a = (vec![0.1, 0.3], vec![Hallucination, NonHallucination]);
        let b = (vec![0.1, 0.3], vec![Hallucination, NonHallucination]);
        let (t, f1) = sweep_threshold_multi(&[a, b], 0.1).unwrap();
        assert_eq!(f1, 1.0);
        assert!(t > 0.1 && t <= 0.3);
    }
}
