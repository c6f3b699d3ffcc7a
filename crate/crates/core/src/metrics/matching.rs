use pathfinding::prelude::{kuhn_munkres_min, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluorophore::distance;
use crate::grid::Vec3;

pub const DEFAULT_MATCH_RADIUS_UM: f64 = 0.5;

/// Distances are integerized at this resolution (µm) for the assignment solve.
const COST_QUANTUM_UM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub estimate: usize,
    pub truth: usize,
    pub distance_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_estimates: usize,
    pub unmatched_truth: usize,
    /// Absent when nothing was matched.
    pub rmse_3d_um: Option<f64>,
}

/// One-to-one assignment maximizing the number of pairs within `radius`, then
/// minimizing their total distance.
pub fn match_and_rmse(estimates: &[Vec3], truth: &[Vec3], radius: f64) -> Result<MatchResult> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("match radius must be > 0, got {radius}")));
    }
    let (ne, nt) = (estimates.len(), truth.len());
    if ne == 0 || nt == 0 {
        return Ok(MatchResult {
            pairs: Vec::new(),
            unmatched_estimates: ne,
            unmatched_truth: nt,
            rmse_3d_um: None,
        });
    }
    // rows must not outnumber columns
    let transpose = ne > nt;
    let (rows, cols) = if transpose { (truth, estimates) } else { (estimates, truth) };
    let limit = (radius / COST_QUANTUM_UM).ceil() as i64;
    // any in-radius pair beats every out-of-radius one, whatever the total distance
    let penalty = limit * (rows.len() as i64 + 1);
    let mut weights = Matrix::new(rows.len(), cols.len(), 0i64);
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let d = distance(*r, *c);
            weights[(i, j)] = if d <= radius {
                (d / COST_QUANTUM_UM).round() as i64
            } else {
                penalty
            };
        }
    }
    let (_, assignment) = kuhn_munkres_min(&weights);
    let mut pairs = Vec::new();
    for (i, &j) in assignment.iter().enumerate() {
        let (e, t) = if transpose { (j, i) } else { (i, j) };
        let d = distance(estimates[e], truth[t]);
        if d <= radius {
            pairs.push(MatchedPair {
                estimate: e,
                truth: t,
                distance_um: d,
            });
        }
    }
    pairs.sort_by_key(|p| p.estimate);
    let rmse = (!pairs.is_empty()).then(|| {
        (pairs.iter().map(|p| p.distance_um.powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
    });
    Ok(MatchResult {
        unmatched_estimates: ne - pairs.len(),
        unmatched_truth: nt - pairs.len(),
        pairs,
        rmse_3d_um: rmse,
    })
}
