use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensor::FrameStack;

use super::kl::DEFAULT_BETA;

/// Poisson data-term parameters: `beta` and one background per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KlParams {
    pub beta: f64,
    pub backgrounds: Vec<Vec<f64>>,
}

impl KlParams {
    pub fn new(beta: f64, backgrounds: Vec<Vec<f64>>) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("beta must be > 0, got {beta}")));
        }
        Ok(Self { beta, backgrounds })
    }

    pub fn from_stack(stack: &FrameStack, beta: f64) -> Result<Self> {
        Self::new(beta, stack.frames().iter().map(|f| f.background.clone()).collect())
    }
}

impl Default for KlParams {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            backgrounds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub tv_weight: f64,
    pub beta: f64,
    pub outer_iterations: usize,
    pub newton_steps: usize,
    pub position_steps: usize,
    pub fista_steps: usize,
    pub tv_iterations: usize,
    /// Initial and maximal position step, in µm.
    pub position_step_um: f64,
    pub fista_relaxation: f64,
    /// Outer relative objective change that stops the run.
    pub tolerance: f64,
    pub update_amplitudes: bool,
    pub update_positions: bool,
    pub update_volume: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            tv_weight: 0.0,
            beta: DEFAULT_BETA,
            outer_iterations: 20,
            newton_steps: 3,
            position_steps: 5,
            fista_steps: 10,
            tv_iterations: 30,
            position_step_um: 0.05,
            fista_relaxation: 1.3,
            tolerance: 1e-5,
            update_amplitudes: true,
            update_positions: true,
            update_volume: true,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tv_weight >= 0.0) {
            return Err(Error::invalid(format!("TV weight must be >= 0, got {}", self.tv_weight)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.position_step_um > 0.0) {
            return Err(Error::invalid("position step must be > 0"));
        }
        if !(self.fista_relaxation >= 1.0) {
            return Err(Error::invalid("FISTA relaxation must be >= 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("tolerance must be >= 0"));
        }
        Ok(())
    }

    /// Positions and amplitudes held fixed; only the volume is refined.
    pub fn volume_only(mut self) -> Self {
        self.update_amplitudes = false;
        self.update_positions = false;
        self
    }
}
