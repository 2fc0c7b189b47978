//! Locally weighted linear regression over the K nearest stored samples,
//! used as a cheap reward surrogate during policy search.
//!
//! For a query point the K nearest samples are kernel-weighted with a
//! Gaussian whose bandwidth is the mean neighbor distance, and a linear
//! model centered on the query is fit by ridge-stabilized weighted least
//! squares. The prediction is the model's intercept. As the bandwidth
//! shrinks to zero all weight concentrates on an exactly matching sample, so
//! the prediction reproduces that sample's value.

use nalgebra::{DMatrix, DVector};

/// Predicts the value at `query` from `(points, values)` samples using the
/// `k` nearest under Euclidean distance.
///
/// Panics if no samples are given; callers guard on archive size.
pub fn lwr_predict(points: &[Vec<f64>], values: &[f64], query: &[f64], k: usize, ridge: f64) -> f64 {
    assert!(!points.is_empty());
    assert_eq!(points.len(), values.len());
    let k = k.min(points.len());

    // K nearest by (distance, index) for deterministic neighbor sets.
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (super::kdtree::dist_sq(p, query).sqrt(), i))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let neighbors = &order[..k];

    let bandwidth = neighbors.iter().map(|(d, _)| d).sum::<f64>() / k as f64;
    if bandwidth == 0.0 {
        // Every neighbor coincides with the query; return the first sample.
        return values[neighbors[0].1];
    }

    let dim = query.len();
    let cols = dim + 1;
    let mut xtwx = DMatrix::<f64>::zeros(cols, cols);
    let mut xtwy = DVector::<f64>::zeros(cols);
    let mut row = vec![0.0; cols];
    for &(dist, idx) in neighbors {
        let w = (-(dist * dist) / (2.0 * bandwidth * bandwidth)).exp();
        row[0] = 1.0;
        for j in 0..dim {
            row[j + 1] = points[idx][j] - query[j];
        }
        for a in 0..cols {
            for b in 0..cols {
                xtwx[(a, b)] += w * row[a] * row[b];
            }
            xtwy[a] += w * row[a] * values[idx];
        }
    }
    // Ridge on the slopes only; the intercept is the prediction and must be
    // free to match the local level.
    for j in 1..cols {
        xtwx[(j, j)] += ridge;
    }

    match xtwx.lu().solve(&xtwy) {
        Some(coef) => coef[0],
        None => {
            // Degenerate neighborhood: kernel-weighted mean.
            let mut num = 0.0;
            let mut den = 0.0;
            for &(dist, idx) in neighbors {
                let w = (-(dist * dist) / (2.0 * bandwidth * bandwidth)).exp();
                num += w * values[idx];
                den += w;
            }
            num / den
        }
    }
}
