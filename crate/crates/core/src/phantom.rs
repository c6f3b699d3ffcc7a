//! Synthetic refractive-index phantoms and randomly placed emitters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluorophore::{distance, Fluorophore, FluorophoreSet};
use crate::grid::{Grid3, OpticalConstants, Vec3};
use crate::rng::{sample_poisson, stream_rng, streams};
use crate::volume::{ri_to_potential, ScatteringVolume};

/// An analytically defined solid with uniform refractive-index excess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inclusion {
    Ellipsoid {
        center_um: Vec3,
        radii_um: Vec3,
        delta_ri: f64,
    },
    Shell {
        center_um: Vec3,
        radius_um: f64,
        thickness_um: f64,
        delta_ri: f64,
    },
}

impl Inclusion {
    pub fn delta_ri(&self) -> f64 {
        match self {
            Inclusion::Ellipsoid { delta_ri, .. } | Inclusion::Shell { delta_ri, .. } => *delta_ri,
        }
    }

    pub fn contains(&self, x: Vec3) -> bool {
        match self {
            Inclusion::Ellipsoid {
                center_um,
                radii_um,
                ..
            } => {
                let s: f64 = (0..3)
                    .map(|a| ((x[a] - center_um[a]) / radii_um[a]).powi(2))
                    .sum();
                s <= 1.0
            }
            Inclusion::Shell {
                center_um,
                radius_um,
                thickness_um,
                ..
            } => {
                let r = distance(x, *center_um);
                r <= *radius_um && r >= radius_um - thickness_um
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Inclusion::Ellipsoid {
                radii_um, delta_ri, ..
            } => radii_um.iter().all(|&r| r > 0.0) && *delta_ri >= 0.0,
            Inclusion::Shell {
                radius_um,
                thickness_um,
                delta_ri,
                ..
            } => *radius_um > 0.0 && *thickness_um > 0.0 && *delta_ri >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("malformed inclusion {self:?}")))
        }
    }
}

/// Describes the refractive-index phantom and where emitters may be placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastSpec {
    /// Explicit inclusions.
    pub inclusions: Vec<Inclusion>,
    /// Additional randomly drawn inclusions (seeded).
    pub random_inclusions: usize,
    /// Peak refractive-index excess of random inclusions.
    pub peak_delta_ri: f64,
    /// Fraction of emitters constrained to lie inside an inclusion.
    pub labeled_fraction: f64,
    /// Minimum distance of emitters from the lateral and bottom faces.
    pub molecule_margin_um: f64,
    /// Minimum distance of emitters from the top (exit) face.
    pub molecule_top_margin_um: f64,
}

impl Default for ContrastSpec {
    fn default() -> Self {
        Self {
            inclusions: Vec::new(),
            random_inclusions: 3,
            peak_delta_ri: 0.05,
            labeled_fraction: 0.8,
            molecule_margin_um: 0.1,
            molecule_top_margin_um: 0.3,
        }
    }
}

impl ContrastSpec {
    pub fn validate(&self) -> Result<()> {
        for inc in &self.inclusions {
            inc.validate()?;
        }
        if !(self.peak_delta_ri >= 0.0) {
            return Err(Error::invalid("peak_delta_ri must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.labeled_fraction) {
            return Err(Error::invalid("labeled_fraction must be in [0, 1]"));
        }
        if self.molecule_margin_um < 0.0 || self.molecule_top_margin_um < 0.0 {
            return Err(Error::invalid("molecule margins must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpec {
    pub count: usize,
    pub min_separation_um: f64,
    pub mean_amplitude: f64,
}

/// Resolves the full inclusion list: explicit ones followed by the seeded random ones.
pub fn resolve_inclusions(grid: &Grid3, spec: &ContrastSpec, seed: u64) -> Vec<Inclusion> {
    let mut out = spec.inclusions.clone();
    let mut rng = stream_rng(seed, streams::PHANTOM_SHAPES);
    let ext = grid.extent();
    let org = grid.origin();
    for n in 0..spec.random_inclusions {
        let delta = if n == 0 {
            spec.peak_delta_ri
        } else {
            spec.peak_delta_ri * rng.random_range(0.6..=1.0)
        };
        let center = [
            org[0] + ext[0] * rng.random_range(0.25..0.75),
            org[1] + ext[1] * rng.random_range(0.25..0.75),
            org[2] + ext[2] * rng.random_range(0.35..0.65),
        ];
        if rng.random::<f64>() < 0.75 {
            out.push(Inclusion::Ellipsoid {
                center_um: center,
                radii_um: [
                    ext[0] * rng.random_range(0.08..0.2),
                    ext[1] * rng.random_range(0.08..0.2),
                    ext[2] * rng.random_range(0.12..0.25),
                ],
                delta_ri: delta,
            });
        } else {
            let radius = ext[0].min(ext[1]).min(2.0 * ext[2]) * rng.random_range(0.12..0.2);
            out.push(Inclusion::Shell {
                center_um: center,
                radius_um: radius,
                thickness_um: (0.35 * radius).max(1.5 * grid.spacing()[0]),
                delta_ri: delta,
            });
        }
    }
    out
}

/// Refractive-index excess at a point (maximum over overlapping inclusions).
pub fn delta_ri_at(inclusions: &[Inclusion], x: Vec3) -> f64 {
    inclusions
        .iter()
        .filter(|inc| inc.contains(x))
        .map(Inclusion::delta_ri)
        .fold(0.0, f64::max)
}

pub fn rasterize(
    grid: &Grid3,
    inclusions: &[Inclusion],
    constants: &OpticalConstants,
) -> Result<ScatteringVolume> {
    let eta_b = constants.background_ri();
    let ri: Vec<f64> = grid
        .voxel_centers()
        .into_iter()
        .map(|x| eta_b + delta_ri_at(inclusions, x))
        .collect();
    ri_to_potential(*grid, &ri, constants)
}

/// Draws `count` amplitudes from Poisson(`mean`), redrawing zeros.
pub fn draw_amplitudes(count: usize, mean: f64, seed: u64) -> Result<Vec<f64>> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::invalid(format!("mean amplitude must be > 0, got {mean}")));
    }
    let mut rng = stream_rng(seed, streams::MOLECULE_AMPLITUDES);
    Ok((0..count)
        .map(|_| loop {
            let k = sample_poisson(&mut rng, mean);
            if k > 0 {
                break k as f64;
            }
        })
        .collect())
}

const PLACEMENT_TRIES_PER_MOLECULE: usize = 2_000;

/// Places emitters by rejection sampling inside the placement box.
pub fn place_molecules(
    grid: &Grid3,
    inclusions: &[Inclusion],
    spec: &ContrastSpec,
    count: usize,
    min_separation: f64,
    seed: u64,
) -> Result<Vec<Vec3>> {
    let lo = grid.origin();
    let hi = grid.upper();
    let m = spec.molecule_margin_um;
    let box_lo = [lo[0] + m, lo[1] + m, lo[2] + m];
    let box_hi = [hi[0] - m, hi[1] - m, hi[2] - spec.molecule_top_margin_um.max(m)];
    if (0..3).any(|a| !(box_hi[a] > box_lo[a])) {
        return Err(Error::invalid("molecule margins leave no room inside the grid"));
    }
    let labeled_possible = inclusions.iter().any(|inc| inc.delta_ri() > 0.0);
    let mut rng = stream_rng(seed, streams::MOLECULE_POSITIONS);
    let mut placed: Vec<Vec3> = Vec::with_capacity(count);
    for _ in 0..count {
        let labeled = labeled_possible && rng.random::<f64>() < spec.labeled_fraction;
        let mut found = None;
        for _ in 0..PLACEMENT_TRIES_PER_MOLECULE {
            let p = [
                rng.random_range(box_lo[0]..box_hi[0]),
                rng.random_range(box_lo[1]..box_hi[1]),
                rng.random_range(box_lo[2]..box_hi[2]),
            ];
            if labeled && delta_ri_at(inclusions, p) <= 0.0 {
                continue;
            }
            if placed.iter().all(|q| distance(p, *q) >= min_separation) {
                found = Some(p);
                break;
            }
        }
        match found {
            Some(p) => placed.push(p),
            None => {
                return Err(Error::PlacementFailure {
                    requested: count,
                    placed: placed.len(),
                })
            }
        }
    }
    Ok(placed)
}

pub fn generate_phantom(
    grid: &Grid3,
    constants: &OpticalConstants,
    spec: &ContrastSpec,
    molecules: &MoleculeSpec,
    seed: u64,
) -> Result<(ScatteringVolume, FluorophoreSet)> {
    spec.validate()?;
    if !(molecules.min_separation_um >= 0.0) {
        return Err(Error::invalid("min_separation must be >= 0"));
    }
    let inclusions = resolve_inclusions(grid, spec, seed);
    let volume = rasterize(grid, &inclusions, constants)?;
    let positions = place_molecules(
        grid,
        &inclusions,
        spec,
        molecules.count,
        molecules.min_separation_um,
        seed,
    )?;
    let amplitudes = draw_amplitudes(molecules.count, molecules.mean_amplitude, seed)?;
    let set = positions
        .into_iter()
        .zip(amplitudes)
        .map(|(p, a)| Fluorophore::new(p, a))
        .collect::<Result<Vec<_>>>()?;
    Ok((volume, FluorophoreSet::new(set)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_scale_grid() -> Grid3 {
        Grid3::new([72, 72, 32], [0.1; 3], [0.0; 3]).unwrap()
    }

    fn molecules(count: usize, sep: f64) -> MoleculeSpec {
        MoleculeSpec {
            count,
            min_separation_um: sep,
            mean_amplitude: 1000.0,
        }
    }

    #[test]
    fn full_scale_population() {
        let grid = full_scale_grid();
        let c = OpticalConstants::water_647();
        let (vol, set) =
            generate_phantom(&grid, &c, &ContrastSpec::default(), &molecules(1000, 0.02), 5).unwrap();
        assert_eq!(set.len(), 1000);
        assert!(set.min_pairwise_distance().unwrap() >= 0.02);
        assert!(set.iter().all(|f| grid.contains_strict(f.position) && f.amplitude > 0.0));
        assert!(vol.is_nonnegative());
        assert!(vol.max() > 0.0);
    }

    #[test]
    fn single_molecule() {
        let grid = full_scale_grid();
        let c = OpticalConstants::water_647();
        let (_, set) =
            generate_phantom(&grid, &c, &ContrastSpec::default(), &molecules(1, 0.02), 9).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.min_pairwise_distance().is_none());
    }

    #[test]
    fn separation_by_pairwise_scan() {
        let grid = full_scale_grid();
        let c = OpticalConstants::water_647();
        let spec = ContrastSpec {
            labeled_fraction: 0.0,
            ..Default::default()
        };
        let (_, set) = generate_phantom(&grid, &c, &spec, &molecules(50, 0.5), 21).unwrap();
        let pts = set.positions();
        for i in 0..pts.len() {
            for j in 0..i {
                let d = ((pts[i][0] - pts[j][0]).powi(2)
                    + (pts[i][1] - pts[j][1]).powi(2)
                    + (pts[i][2] - pts[j][2]).powi(2))
                .sqrt();
                assert!(d >= 0.5, "pair ({i},{j}) at {d}");
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let grid = Grid3::new([16, 16, 8], [0.1; 3], [0.0; 3]).unwrap();
        let c = OpticalConstants::water_647();
        let spec = ContrastSpec::default();
        let a = generate_phantom(&grid, &c, &spec, &molecules(20, 0.05), 77).unwrap();
        let b = generate_phantom(&grid, &c, &spec, &molecules(20, 0.05), 77).unwrap();
        assert_eq!(a, b);
        let other = generate_phantom(&grid, &c, &spec, &molecules(20, 0.05), 78).unwrap();
        assert_ne!(a.1, other.1);
    }

    #[test]
    fn impossible_packing_fails() {
        let grid = Grid3::new([8, 8, 8], [0.1; 3], [0.0; 3]).unwrap();
        let c = OpticalConstants::water_647();
        let spec = ContrastSpec {
            labeled_fraction: 0.0,
            ..Default::default()
        };
        let err = generate_phantom(&grid, &c, &spec, &molecules(100, 0.5), 1).unwrap_err();
        assert!(matches!(err, Error::PlacementFailure { requested: 100, .. }));
    }

    #[test]
    fn amplitude_mean_clt() {
        let n = 100_000;
        let mean = 1000.0;
        let a = draw_amplitudes(n, mean, 4).unwrap();
        let m = a.iter().sum::<f64>() / n as f64;
        assert!((m - mean).abs() < 3.0 * (mean / n as f64).sqrt(), "mean {m}");
        assert!(a.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn tiny_mean_never_yields_zero() {
        let a = draw_amplitudes(10_000, 0.05, 2).unwrap();
        assert!(a.iter().all(|&x| x >= 1.0));
    }

    #[test]
    fn shell_membership() {
        let shell = Inclusion::Shell {
            center_um: [0.0; 3],
            radius_um: 1.0,
            thickness_um: 0.2,
            delta_ri: 0.05,
        };
        assert!(shell.contains([0.9, 0.0, 0.0]));
        assert!(!shell.contains([0.5, 0.0, 0.0]));
        assert!(!shell.contains([1.1, 0.0, 0.0]));
    }
}
