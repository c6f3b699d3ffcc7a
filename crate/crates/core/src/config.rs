//! Run configuration shared by all commands: a sectioned TOML file whose keys
//! carry their units (`_um`, `_um2`, `_frames`). Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid3, OpticalConstants};
use crate::inverse::{LocalizerSettings, ModelSettings, OptimConfig};
use crate::metrics::{DEFAULT_MATCH_RADIUS_UM, DEFAULT_WINDOW_SIGMA};
use crate::phantom::{ContrastSpec, MoleculeSpec};
use crate::sensor::{BackgroundSpec, BiplaneConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub counts: [usize; 3],
    pub spacing_um: [f64; 3],
    pub origin_um: [f64; 3],
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            counts: [32, 32, 16],
            spacing_um: [0.1; 3],
            origin_um: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsSection {
    pub wavelength_um: f64,
    pub background_ri: f64,
}

impl Default for OpticsSection {
    fn default() -> Self {
        let w = OpticalConstants::water_647();
        Self {
            wavelength_um: w.wavelength(),
            background_ri: w.background_ri(),
        }
    }
}

/// Camera overrides; anything left out follows the grid-derived biplane defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub numerical_aperture: Option<f64>,
    pub plane_offsets_um: Option<[f64; 2]>,
    pub pixel_pitch_um: Option<f64>,
    pub camera_counts: Option<[usize; 2]>,
    pub focal_plane_z_um: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSection {
    pub frames: usize,
    pub min_separation_um: f64,
    pub mean_amplitude: f64,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self {
            frames: 50,
            min_separation_um: 0.02,
            mean_amplitude: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundEstimationSection {
    /// When false, reconstruction uses the backgrounds stored with the frames as-is.
    pub enabled: bool,
    pub spatial_sigma_um: f64,
    pub temporal_window_frames: usize,
    pub shot_noise_correction: bool,
}

impl Default for BackgroundEstimationSection {
    fn default() -> Self {
        Self {
            enabled: true,
            spatial_sigma_um: 1.0,
            temporal_window_frames: 51,
            shot_noise_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub match_radius_um: f64,
    pub ssim_window_sigma_vox: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            match_radius_um: DEFAULT_MATCH_RADIUS_UM,
            ssim_window_sigma_vox: DEFAULT_WINDOW_SIGMA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameDtype {
    F64,
    U32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub frame_dtype: FrameDtype,
    /// Write a checkpoint every this many outer iterations (0 disables).
    pub checkpoint_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            frame_dtype: FrameDtype::F64,
            checkpoint_every: 5,
        }
    }
}

pub const ARM_NAMES: [&str; 3] = ["init-only", "joint", "true-pos-amp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub arms: Vec<String>,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            arms: ARM_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridSection,
    pub optics: OpticsSection,
    pub camera: CameraSection,
    pub phantom: ContrastSpec,
    pub acquisition: AcquisitionSection,
    pub background: BackgroundSpec,
    pub background_estimation: BackgroundEstimationSection,
    pub model: ModelSettings,
    pub optimizer: OptimConfig,
    pub localizer: LocalizerSettings,
    pub metrics: MetricsSection,
    pub bench: BenchSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            grid: GridSection::default(),
            optics: OpticsSection::default(),
            camera: CameraSection::default(),
            phantom: ContrastSpec::default(),
            acquisition: AcquisitionSection::default(),
            background: BackgroundSpec::default(),
            background_estimation: BackgroundEstimationSection::default(),
            model: ModelSettings::default(),
            optimizer: desk_optimizer(),
            localizer: LocalizerSettings::default(),
            metrics: MetricsSection::default(),
            bench: BenchSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Optimizer settings used by the default desk-scale protocol.
pub fn desk_optimizer() -> OptimConfig {
    OptimConfig::default()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    pub fn grid(&self) -> Result<Grid3> {
        Grid3::new(self.grid.counts, self.grid.spacing_um, self.grid.origin_um)
    }

    pub fn optical_constants(&self) -> Result<OpticalConstants> {
        OpticalConstants::new(self.optics.wavelength_um, self.optics.background_ri)
    }

    pub fn biplane(&self) -> Result<BiplaneConfig> {
        let mut c = BiplaneConfig::default_for(&self.grid()?);
        let o = &self.camera;
        if let Some(v) = o.numerical_aperture {
            c.numerical_aperture = v;
        }
        if let Some(v) = o.plane_offsets_um {
            c.plane_offsets_um = v;
        }
        if let Some(v) = o.pixel_pitch_um {
            c.pixel_pitch_um = v;
        }
        if let Some(v) = o.camera_counts {
            c.camera_counts = v;
        }
        if let Some(v) = o.focal_plane_z_um {
            c.focal_plane_z_um = v;
        }
        Ok(c)
    }

    pub fn molecules(&self) -> MoleculeSpec {
        MoleculeSpec {
            count: self.acquisition.frames,
            min_separation_um: self.acquisition.min_separation_um,
            mean_amplitude: self.acquisition.mean_amplitude,
        }
    }

    /// Checks every section and reports all problems at once, one per line.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        fn check(problems: &mut Vec<String>, key: &str, r: Result<()>) {
            if let Err(e) = r {
                problems.push(format!("{key}: {e}"));
            }
        }
        check(&mut problems, "grid", self.grid().map(|_| ()));
        let consts = self.optical_constants();
        if let Err(e) = &consts {
            problems.push(format!("optics: {e}"));
        }
        if let (Ok(c), Ok(_)) = (&consts, self.grid()) {
            check(&mut problems, "camera", self.biplane().and_then(|b| b.validate(c)));
        }
        check(&mut problems, "phantom", self.phantom.validate());
        if self.acquisition.frames == 0 {
            problems.push("acquisition.frames: must be >= 1".into());
        }
        if !(self.acquisition.mean_amplitude > 0.0) {
            problems.push("acquisition.mean_amplitude: must be > 0".into());
        }
        if !(self.acquisition.min_separation_um >= 0.0) {
            problems.push("acquisition.min_separation_um: must be >= 0".into());
        }
        if !(self.background.level >= 0.0)
            || !(self.background.spatial_scale_um > 0.0)
            || !(self.background.temporal_scale_frames > 0.0)
        {
            problems.push("background: level must be >= 0 and scales > 0".into());
        }
        let est = &self.background_estimation;
        if est.temporal_window_frames == 0 || !(est.spatial_sigma_um >= 0.0) {
            problems.push("background_estimation: window must be >= 1 and sigma >= 0".into());
        }
        if self.model.pad_factor < 2 {
            problems.push("model.pad_factor: must be >= 2".into());
        }
        if !(self.model.smoothing_um2 > 0.0) {
            problems.push("model.smoothing_um2: must be > 0".into());
        }
        check(&mut problems, "model", self.model.solver().validate());
        check(&mut problems, "optimizer", self.optimizer.validate());
        if !(self.localizer.peak_potential >= 0.0) || !(self.localizer.filter_sigma_px > 0.0) {
            problems.push("localizer: peak_potential must be >= 0 and filter_sigma_px > 0".into());
        }
        if !(self.localizer.calibration_step_um > 0.0) {
            problems.push("localizer.calibration_step_um: must be > 0".into());
        }
        if !(self.metrics.match_radius_um > 0.0) || !(self.metrics.ssim_window_sigma_vox > 0.0) {
            problems.push("metrics: radius and window sigma must be > 0".into());
        }
        if self.bench.arms.is_empty() {
            problems.push("bench.arms: at least one arm is required".into());
        }
        for arm in &self.bench.arms {
            if !ARM_NAMES.contains(&arm.as_str()) {
                problems.push(format!(
                    "bench.arms: unknown arm {arm:?} (expected one of {})",
                    ARM_NAMES.join(", ")
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("\n")))
        }
    }
}
