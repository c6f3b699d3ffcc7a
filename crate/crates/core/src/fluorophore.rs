use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid3, Vec3};

/// A point emitter: position in micrometers and field amplitude (intensity scales as `a^2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fluorophore {
    pub position: Vec3,
    pub amplitude: f64,
}

impl Fluorophore {
    pub fn new(position: Vec3, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(Error::invalid(format!("amplitude must be > 0, got {amplitude}")));
        }
        if position.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("position must be finite"));
        }
        Ok(Self {
            position,
            amplitude,
        })
    }

    pub fn distance(&self, other: &Fluorophore) -> f64 {
        distance(self.position, other.position)
    }
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FluorophoreSet {
    items: Vec<Fluorophore>,
}

impl FluorophoreSet {
    pub fn new(items: Vec<Fluorophore>) -> Self {
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Fluorophore> {
        self.items.iter()
    }

    pub fn as_slice(&self) -> &[Fluorophore] {
        &self.items
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.items.iter().map(|f| f.position).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.items.iter().map(|f| f.amplitude).collect()
    }

    pub fn all_within(&self, grid: &Grid3) -> bool {
        self.items.iter().all(|f| grid.contains(f.position))
    }

    /// Smallest pairwise distance, `None` for fewer than two emitters.
    pub fn min_pairwise_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, a) in self.items.iter().enumerate() {
            for b in &self.items[i + 1..] {
                let d = a.distance(b);
                best = Some(best.map_or(d, |m| m.min(d)));
            }
        }
        best
    }
}

impl From<Vec<Fluorophore>> for FluorophoreSet {
    fn from(items: Vec<Fluorophore>) -> Self {
        Self::new(items)
    }
}

impl<'a> IntoIterator for &'a FluorophoreSet {
    type Item = &'a Fluorophore;
    type IntoIter = std::slice::Iter<'a, Fluorophore>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}
