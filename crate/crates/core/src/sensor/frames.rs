use crate::error::{Error, Result};

use super::BiplaneConfig;

/// One single-activation acquisition. Measurement order: plane 0 then plane 1, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub values: Vec<f64>,
    pub background: Vec<f64>,
    pub molecule_count: usize,
}

impl Frame {
    pub fn new(values: Vec<f64>, background: Vec<f64>) -> Result<Self> {
        if values.len() != background.len() {
            return Err(Error::invalid("frame and background lengths differ"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("frame values must be >= 0"));
        }
        if background.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("background values must be >= 0"));
        }
        Ok(Self {
            values,
            background,
            molecule_count: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    config: BiplaneConfig,
    frames: Vec<Frame>,
    /// Acquisition index of each stored frame.
    order: Vec<usize>,
}

impl FrameStack {
    pub fn new(config: BiplaneConfig, frames: Vec<Frame>) -> Result<Self> {
        let order = (0..frames.len()).collect();
        Self::with_order(config, frames, order)
    }

    pub fn with_order(config: BiplaneConfig, frames: Vec<Frame>, order: Vec<usize>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("a frame stack needs at least one frame"));
        }
        if order.len() != frames.len() {
            return Err(Error::invalid("acquisition order length differs from frame count"));
        }
        let m = config.measurement_count();
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != m) {
            return Err(Error::invalid(format!(
                "frame {i} has {} measurements, configuration expects {m}",
                f.len()
            )));
        }
        Ok(Self {
            config,
            frames,
            order,
        })
    }

    pub fn config(&self) -> &BiplaneConfig {
        &self.config
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Frame] {
        &mut self.frames
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Replaces every frame's background.
    pub fn set_backgrounds(&mut self, backgrounds: Vec<Vec<f64>>) -> Result<()> {
        if backgrounds.len() != self.frames.len() {
            return Err(Error::invalid("one background per frame is required"));
        }
        for (f, b) in self.frames.iter_mut().zip(backgrounds) {
            if b.len() != f.values.len() {
                return Err(Error::invalid("background length differs from frame"));
            }
            f.background = b;
        }
        Ok(())
    }

    /// Keeps only the frames whose index passes `keep`.
    pub fn retain_indices(&self, keep: &[usize]) -> Result<Self> {
        let frames = keep.iter().map(|&i| self.frames[i].clone()).collect();
        let order = keep.iter().map(|&i| self.order[i]).collect();
        Self::with_order(self.config.clone(), frames, order)
    }
}
