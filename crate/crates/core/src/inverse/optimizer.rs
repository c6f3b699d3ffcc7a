//! Alternating minimization of
//! `sum_l D_KL(a_l^2 H(f, p_l, 1) + b_l; y_l) + tau TV(f)`
//! subject to `f >= 0`, `p_l` in the grid box and `a_l > 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::C64;
use crate::fluorophore::Fluorophore;
use crate::grid::Vec3;
use crate::sensor::FrameStack;
use crate::volume::ScatteringVolume;

use super::config::{KlParams, OptimConfig};
use super::kl::{kl_divergence, kl_gradient};
use super::model::{BaseImage, ForwardModel};
use super::tv::{total_variation, tv_prox};

/// Smallest amplitude the Newton safeguard will return.
pub const AMPLITUDE_FLOOR: f64 = 1e-6;
/// Position line searches give up below this step, in µm.
pub const MIN_POSITION_STEP_UM: f64 = 1e-9;
const ARMIJO: f64 = 1e-4;
const MAX_MOMENTUM: f64 = 0.95;
pub const FISTA_VARIANT: &str =
    "monotone FISTA, momentum min(rho (t_k - 1) / t_(k+1), 0.95), restart on objective increase";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Initial,
    Amplitudes,
    Positions,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRecord {
    pub outer: usize,
    pub block: Block,
    pub objective: f64,
    pub data: f64,
    pub tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub outer: usize,
    pub block: Block,
    /// Acquisition index of the frame concerned, if any.
    pub frame: Option<usize>,
    pub message: String,
}

/// Optimization variables plus the record of how they evolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub volume: ScatteringVolume,
    /// One emitter per optimized frame.
    pub molecules: Vec<Fluorophore>,
    /// Index into the frame stack of each optimized frame.
    pub frames: Vec<usize>,
    pub outer_iteration: usize,
    pub volume_step: f64,
    pub history: Vec<ObjectiveRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

impl OptimState {
    pub fn new(volume: ScatteringVolume, molecules: Vec<Fluorophore>, frames: Vec<usize>) -> Result<Self> {
        if molecules.len() != frames.len() {
            return Err(Error::invalid("one molecule per optimized frame is required"));
        }
        Ok(Self {
            volume,
            molecules,
            frames,
            outer_iteration: 0,
            volume_step: 0.0,
            history: Vec::new(),
            diagnostics: Vec::new(),
        })
    }

    pub fn objective(&self) -> Option<f64> {
        self.history.last().map(|r| r.objective)
    }

    pub fn is_feasible(&self) -> bool {
        let grid = self.volume.grid();
        self.volume.is_nonnegative()
            && self
                .molecules
                .iter()
                .all(|m| m.amplitude > 0.0 && grid.contains(m.position))
    }
}

#[derive(Debug, Clone)]
struct FrameCache {
    base: BaseImage,
    adjoint: Option<Vec<C64>>,
    position_step: f64,
}

/// Per-frame evaluation at a trial volume.
struct Evaluation {
    data: f64,
    bases: Vec<BaseImage>,
    adjoints: Vec<Vec<C64>>,
    gradient: Option<Vec<f64>>,
}

/// Driver owning the optimization state and per-frame caches.
pub struct Reconstruction<'a> {
    model: &'a ForwardModel,
    stack: &'a FrameStack,
    params: KlParams,
    config: OptimConfig,
    state: OptimState,
    cache: Vec<FrameCache>,
    tv_dual: Option<Vec<[f64; 3]>>,
    mask: Option<Vec<bool>>,
}

impl<'a> Reconstruction<'a> {
    pub fn new(
        model: &'a ForwardModel,
        stack: &'a FrameStack,
        config: OptimConfig,
        state: OptimState,
    ) -> Result<Self> {
        config.validate()?;
        let grid = model.grid();
        if state.volume.grid() != grid {
            return Err(Error::invalid("initial volume grid differs from the model grid"));
        }
        if !state.volume.is_nonnegative() {
            return Err(Error::invalid("initial volume must be nonnegative"));
        }
        if stack.frames().first().map(|f| f.len()) != Some(model.measurement_count()) {
            return Err(Error::invalid("frame length differs from the model's measurement count"));
        }
        for (&idx, m) in state.frames.iter().zip(&state.molecules) {
            if idx >= stack.len() {
                return Err(Error::invalid(format!("frame index {idx} out of range")));
            }
            if !grid.contains(m.position) {
                return Err(Error::Domain(format!(
                    "initial position {:?} of frame {idx} lies outside the volume",
                    m.position
                )));
            }
            if !(m.amplitude > 0.0) {
                return Err(Error::Domain(format!("initial amplitude of frame {idx} is not positive")));
            }
        }
        let params = KlParams::from_stack(stack, config.beta)?;
        let f = state.volume.values();
        let bases = state
            .molecules
            .par_iter()
            .map(|m| model.base_image(f, m.position, None))
            .collect::<Result<Vec<_>>>()?;
        let cache = bases
            .into_iter()
            .map(|base| FrameCache {
                base,
                adjoint: None,
                position_step: config.position_step_um,
            })
            .collect();
        let mut rec = Self {
            model,
            stack,
            params,
            config,
            state,
            cache,
            tv_dual: None,
            mask: None,
        };
        rec.record(Block::Initial)?;
        Ok(rec)
    }

    pub fn state(&self) -> &OptimState {
        &self.state
    }

    pub fn into_state(self) -> OptimState {
        self.state
    }

    pub fn config(&self) -> &OptimConfig {
        &self.config
    }

    /// Restricts volume updates to voxels where `mask` is true.
    pub fn set_volume_mask(&mut self, mask: Option<Vec<bool>>) -> Result<()> {
        if let Some(m) = &mask {
            if m.len() != self.model.grid().len() {
                return Err(Error::invalid("mask length differs from the volume"));
            }
        }
        self.mask = mask;
        Ok(())
    }

    fn frame_data(&self, slot: usize) -> (&[f64], &[f64]) {
        let idx = self.state.frames[slot];
        (&self.stack.frames()[idx].values, &self.params.backgrounds[idx])
    }

    fn means(image: &[f64], a: f64, b: &[f64]) -> Vec<f64> {
        let a2 = a * a;
        image.iter().zip(b).map(|(h, bg)| a2 * h + bg).collect()
    }

    fn frame_kl(&self, slot: usize, image: &[f64], a: f64) -> Result<f64> {
        let (y, b) = self.frame_data(slot);
        kl_divergence(&Self::means(image, a, b), y, self.params.beta)
    }

    fn data_term(&self) -> Result<f64> {
        let mut acc = 0.0;
        for slot in 0..self.cache.len() {
            acc += self.frame_kl(slot, &self.cache[slot].base.image, self.state.molecules[slot].amplitude)?;
        }
        Ok(acc)
    }

    fn tv(&self, f: &[f64]) -> Result<f64> {
        total_variation(f, self.model.grid().counts())
    }

    /// Current objective from the cached base images.
    pub fn objective(&self) -> Result<f64> {
        Ok(self.data_term()? + self.config.tv_weight * self.tv(self.state.volume.values())?)
    }

    fn record(&mut self, block: Block) -> Result<f64> {
        let data = self.data_term()?;
        let tv = self.tv(self.state.volume.values())?;
        let objective = data + self.config.tv_weight * tv;
        self.state.history.push(ObjectiveRecord {
            outer: self.state.outer_iteration,
            block,
            objective,
            data,
            tv,
        });
        Ok(objective)
    }

    fn diagnose(&mut self, block: Block, frame: Option<usize>, message: String) {
        log::info!("{block:?}: {message}");
        self.state.diagnostics.push(Diagnostic {
            outer: self.state.outer_iteration,
            block,
            frame,
            message,
        });
    }

    /// Adjoint field `A^{-H} S^T P^H (r . U)` of one frame at unit amplitude.
    fn frame_adjoint(
        &self,
        slot: usize,
        f: &[f64],
        base: &BaseImage,
        a: f64,
        warm: Option<&[C64]>,
    ) -> Result<Vec<C64>> {
        let (y, b) = self.frame_data(slot);
        let r = kl_gradient(&Self::means(&base.image, a, b), y, self.params.beta);
        let per_plane = base.camera[0].len();
        let weights: [Vec<C64>; 2] = std::array::from_fn(|plane| {
            base.camera[plane]
                .iter()
                .zip(&r[plane * per_plane..(plane + 1) * per_plane])
                .map(|(u, w)| u * *w)
                .collect()
        });
        let rhs = self.model.adjoint_source(&weights);
        Ok(self.model.adjoint_solve(f, &rhs, warm)?.0)
    }

    /// Gradient of the frame's data term with respect to its emitter position.
    pub fn position_gradient(&self, slot: usize) -> Result<Vec3> {
        let m = self.state.molecules[slot];
        let base = &self.cache[slot].base;
        let w = self.frame_adjoint(slot, self.state.volume.values(), base, m.amplitude, None)?;
        let s = self.model.position_sensitivity(&w, m.position)?;
        let a2 = m.amplitude * m.amplitude;
        Ok([a2 * s[0], a2 * s[1], a2 * s[2]])
    }

    /// Data term of every frame at volume `f` with the current emitters, optionally with its gradient.
    fn evaluate(&self, f: &[f64], with_gradient: bool, warm: Option<&[BaseImage]>) -> Result<Evaluation> {
        let per_frame = (0..self.cache.len())
            .into_par_iter()
            .map(|slot| {
                let m = self.state.molecules[slot];
                let warm_field = warm.map(|w| w[slot].field.as_slice());
                let base = self.model.base_image(f, m.position, warm_field)?;
                let kl = self.frame_kl(slot, &base.image, m.amplitude)?;
                let (adjoint, grad) = if with_gradient {
                    let w = self.frame_adjoint(
                        slot,
                        f,
                        &base,
                        m.amplitude,
                        self.cache[slot].adjoint.as_deref(),
                    )?;
                    let g = self.model.volume_sensitivity(&w, &base.field);
                    (w, Some(g))
                } else {
                    (Vec::new(), None)
                };
                Ok((kl, base, adjoint, grad))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = 0.0;
        let mut bases = Vec::with_capacity(per_frame.len());
        let mut adjoints = Vec::with_capacity(per_frame.len());
        let mut gradient = with_gradient.then(|| vec![0.0; f.len()]);
        // fixed frame order keeps the reduction reproducible
        for (slot, (kl, base, adjoint, grad)) in per_frame.into_iter().enumerate() {
            data += kl;
            if let (Some(acc), Some(g)) = (gradient.as_mut(), grad) {
                let a2 = self.state.molecules[slot].amplitude.powi(2);
                for (x, v) in acc.iter_mut().zip(g) {
                    *x += a2 * v;
                }
            }
            bases.push(base);
            adjoints.push(adjoint);
        }
        Ok(Evaluation {
            data,
            bases,
            adjoints,
            gradient,
        })
    }

    /// Data term at volume `f` with fresh forward solves.
    pub fn data_term_at(&self, f: &[f64]) -> Result<f64> {
        Ok(self.evaluate(f, false, None)?.data)
    }

    /// Gradient of the data term with respect to the volume at `f`.
    pub fn volume_gradient_at(&self, f: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(f, true, None)?.gradient.unwrap_or_default())
    }

    /// Data term with frame `slot`'s emitter moved to `p` (other frames unchanged).
    pub fn data_term_with_position(&self, slot: usize, p: Vec3) -> Result<f64> {
        let a = self.state.molecules[slot].amplitude;
        let base = self.model.base_image(self.state.volume.values(), p, None)?;
        let mut total = 0.0;
        for s in 0..self.cache.len() {
            total += if s == slot {
                self.frame_kl(s, &base.image, a)?
            } else {
                self.frame_kl(s, &self.cache[s].base.image, self.state.molecules[s].amplitude)?
            };
        }
        Ok(total)
    }

    /// Exact first and second derivatives of the frame's data term in `a`.
    pub fn amplitude_derivatives(&self, slot: usize, a: f64) -> (f64, f64) {
        let (y, b) = self.frame_data(slot);
        let h = &self.cache[slot].base.image;
        let beta = self.params.beta;
        let (mut d1, mut d2) = (0.0, 0.0);
        for ((&hm, &ym), &bm) in h.iter().zip(y).zip(b) {
            let z = a * a * hm + bm + beta;
            d1 += 2.0 * a * hm * (1.0 - ym / z);
            d2 += 2.0 * hm * (1.0 - ym / z) + 4.0 * a * a * hm * hm * ym / (z * z);
        }
        (d1, d2)
    }

    fn newton_amplitude(&self, slot: usize, steps: usize) -> Result<Option<f64>> {
        let (y, b) = self.frame_data(slot);
        let h = &self.cache[slot].base.image;
        if h.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        let beta = self.params.beta;
        // Newton on s = a^2, where the frame term is convex; g'(s) = sum h r, g''(s) = sum h^2 y / z^2
        let derivs = |s: f64| {
            let (mut g1, mut g2) = (0.0, 0.0);
            for ((&hm, &ym), &bm) in h.iter().zip(y).zip(b) {
                let z = s * hm + bm + beta;
                g1 += hm * (1.0 - ym / z);
                g2 += hm * hm * ym / (z * z);
            }
            (g1, g2)
        };
        let a0 = self.state.molecules[slot].amplitude;
        let floor = AMPLITUDE_FLOOR * AMPLITUDE_FLOOR;
        let mut lo = floor;
        let mut hi = f64::INFINITY;
        let mut s = a0 * a0;
        for _ in 0..steps {
            let (g1, g2) = derivs(s);
            if g1 == 0.0 {
                break;
            }
            if g1 > 0.0 {
                hi = hi.min(s);
            } else {
                lo = lo.max(s);
            }
            if s <= floor && g1 > 0.0 {
                break;
            }
            let newton = if g2 > 0.0 { s - g1 / g2 } else { f64::NAN };
            if newton == s {
                break;
            }
            s = if newton >= lo && newton <= hi {
                newton
            } else if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * s
            };
            s = s.max(floor);
        }
        let a = s.sqrt();
        let before = self.frame_kl(slot, h, a0)?;
        let after = self.frame_kl(slot, h, a)?;
        Ok(Some(if after <= before { a } else { a0 }))
    }

    /// Safeguarded Newton steps on every amplitude (base images unchanged).
    pub fn update_amplitudes(&mut self) -> Result<()> {
        let steps = self.config.newton_steps;
        let results = (0..self.cache.len())
            .into_par_iter()
            .map(|slot| self.newton_amplitude(slot, steps))
            .collect::<Result<Vec<_>>>()?;
        for (slot, r) in results.into_iter().enumerate() {
            match r {
                Some(a) => {
                    if a != self.state.molecules[slot].amplitude {
                        self.cache[slot].adjoint = None;
                    }
                    self.state.molecules[slot].amplitude = a;
                }
                None => {
                    let frame = self.state.frames[slot];
                    self.diagnose(
                        Block::Amplitudes,
                        Some(frame),
                        "emitter image is identically zero; amplitude unchanged".into(),
                    );
                }
            }
        }
        Ok(())
    }

    fn descend_position(&self, slot: usize) -> Result<(Vec3, FrameCache, Option<String>)> {
        let f = self.state.volume.values();
        let grid = self.model.grid();
        let a = self.state.molecules[slot].amplitude;
        let a2 = a * a;
        let max_step = self.config.position_step_um;
        let mut p = self.state.molecules[slot].position;
        let mut cache = self.cache[slot].clone();
        let mut value = self.frame_kl(slot, &cache.base.image, a)?;
        let grad_at = |p: Vec3, cache: &mut FrameCache| -> Result<Vec3> {
            let w = self.frame_adjoint(slot, f, &cache.base, a, cache.adjoint.as_deref())?;
            let s = self.model.position_sensitivity(&w, p)?;
            cache.adjoint = Some(w);
            Ok([a2 * s[0], a2 * s[1], a2 * s[2]])
        };
        let mut g = grad_at(p, &mut cache)?;
        let mut step = cache.position_step.min(max_step);
        let mut flag = None;
        for iter in 0..self.config.position_steps {
            let gnorm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if gnorm == 0.0 {
                break;
            }
            let accepted = loop {
                let trial = grid.clamp([
                    p[0] - step * g[0] / gnorm,
                    p[1] - step * g[1] / gnorm,
                    p[2] - step * g[2] / gnorm,
                ]);
                let d = [trial[0] - p[0], trial[1] - p[1], trial[2] - p[2]];
                let descent = g[0] * d[0] + g[1] * d[1] + g[2] * d[2];
                if descent < 0.0 {
                    let base = self.model.base_image(f, trial, Some(&cache.base.field))?;
                    let v = self.frame_kl(slot, &base.image, a)?;
                    if v <= value + ARMIJO * descent {
                        break Some((trial, base, v));
                    }
                }
                step *= 0.5;
                if step < MIN_POSITION_STEP_UM {
                    break None;
                }
            };
            let Some((trial, base, v)) = accepted else {
                flag = Some(format!("position step collapsed below {MIN_POSITION_STEP_UM} um"));
                step = max_step;
                break;
            };
            let s_vec = [trial[0] - p[0], trial[1] - p[1], trial[2] - p[2]];
            p = trial;
            cache.base = base;
            value = v;
            if iter + 1 == self.config.position_steps {
                break;
            }
            let g_new = grad_at(p, &mut cache)?;
            let y_vec = [g_new[0] - g[0], g_new[1] - g[1], g_new[2] - g[2]];
            let sy = s_vec[0] * y_vec[0] + s_vec[1] * y_vec[1] + s_vec[2] * y_vec[2];
            let ss = s_vec[0] * s_vec[0] + s_vec[1] * s_vec[1] + s_vec[2] * s_vec[2];
            let gn = (g_new[0] * g_new[0] + g_new[1] * g_new[1] + g_new[2] * g_new[2]).sqrt();
            // Barzilai-Borwein length, capped
            step = if sy > 0.0 { (ss / sy * gn).min(max_step) } else { max_step };
            step = step.max(1e3 * MIN_POSITION_STEP_UM);
            g = g_new;
        }
        cache.position_step = step;
        cache.adjoint = None;
        Ok((p, cache, flag))
    }

    /// Projected gradient steps with backtracking on every emitter position.
    pub fn update_positions(&mut self) -> Result<()> {
        let results = (0..self.cache.len())
            .into_par_iter()
            .map(|slot| self.descend_position(slot))
            .collect::<Result<Vec<_>>>()?;
        for (slot, (p, cache, flag)) in results.into_iter().enumerate() {
            self.state.molecules[slot].position = p;
            self.cache[slot] = cache;
            if let Some(msg) = flag {
                let frame = self.state.frames[slot];
                self.diagnose(Block::Positions, Some(frame), msg);
            }
        }
        Ok(())
    }

    fn apply_mask(&self, candidate: &mut [f64], reference: &[f64]) {
        if let Some(mask) = &self.mask {
            for ((c, r), free) in candidate.iter_mut().zip(reference).zip(mask) {
                if !free {
                    *c = *r;
                }
            }
        }
    }

    fn initial_volume_step(&self, gradient: &[f64]) -> f64 {
        let gmax = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let fmax = self.state.volume.max();
        let scale = if fmax > 0.0 { fmax } else { 1.0 };
        if gmax > 0.0 {
            0.1 * scale / gmax
        } else {
            1.0
        }
    }

    /// Relaxed, monotone FISTA iterations on the volume.
    pub fn update_volume(&mut self) -> Result<()> {
        let dims = self.model.grid().counts();
        let tau = self.config.tv_weight;
        let rho = self.config.fista_relaxation;
        let mut x = self.state.volume.values().to_vec();
        let mut obj_x = self.objective()?;
        let mut bases_x: Vec<BaseImage> = self.cache.iter().map(|c| c.base.clone()).collect();
        let mut y = x.clone();
        let mut y_is_x = true;
        let mut t = 1.0f64;
        let mut step = 2.0 * self.state.volume_step;
        let mut note = None;

        for _ in 0..self.config.fista_steps {
            let eval_y = self.evaluate(&y, true, Some(&bases_x))?;
            for (c, w) in self.cache.iter_mut().zip(&eval_y.adjoints) {
                c.adjoint = Some(w.clone());
            }
            let mut grad = eval_y.gradient.expect("gradient requested");
            if let Some(mask) = &self.mask {
                for (g, free) in grad.iter_mut().zip(mask) {
                    if !free {
                        *g = 0.0;
                    }
                }
            }
            if !(step > 0.0) {
                step = self.initial_volume_step(&grad);
            }
            let mut backtracks = 0;
            let trial = loop {
                let v: Vec<f64> = y.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
                let prox = tv_prox(&v, step * tau, dims, self.config.tv_iterations, 0.0, self.tv_dual.as_deref())?;
                let mut z = prox.x;
                self.apply_mask(&mut z, &x);
                match self.evaluate(&z, false, Some(&eval_y.bases)) {
                    Ok(eval_z) => {
                        let mut lin = 0.0;
                        let mut quad = 0.0;
                        for ((zi, yi), gi) in z.iter().zip(&y).zip(&grad) {
                            lin += gi * (zi - yi);
                            quad += (zi - yi).powi(2);
                        }
                        let bound = eval_y.data + lin + quad / (2.0 * step);
                        if eval_z.data <= bound + 1e-12 * eval_y.data.abs() {
                            if tau > 0.0 {
                                self.tv_dual = Some(prox.dual);
                            }
                            break Some((z, eval_z));
                        }
                    }
                    Err(Error::SolverFailure { .. }) => {}
                    Err(e) => return Err(e),
                }
                step *= 0.5;
                backtracks += 1;
                if backtracks > 40 {
                    break None;
                }
            };
            let Some((z, eval_z)) = trial else {
                note = Some("step size underflow; block stopped early".to_string());
                break;
            };
            let obj_z = eval_z.data + tau * self.tv(&z)?;
            if obj_z <= obj_x {
                let x_prev = std::mem::replace(&mut x, z);
                obj_x = obj_z;
                bases_x = eval_z.bases;
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let momentum = (rho * (t - 1.0) / t_next).min(MAX_MOMENTUM);
                t = t_next;
                if momentum > 0.0 {
                    y = x
                        .iter()
                        .zip(&x_prev)
                        .map(|(a, b)| (a + momentum * (a - b)).max(0.0))
                        .collect();
                    let reference = x.clone();
                    self.apply_mask(&mut y, &reference);
                    y_is_x = false;
                } else {
                    y = x.clone();
                    y_is_x = true;
                }
            } else if y_is_x {
                note = Some("no decrease from the current iterate; block stopped".to_string());
                break;
            } else {
                t = 1.0;
                y = x.clone();
                y_is_x = true;
            }
        }
        self.state.volume.values_mut().copy_from_slice(&x);
        for (c, b) in self.cache.iter_mut().zip(bases_x) {
            c.base = b;
        }
        self.state.volume_step = step;
        if let Some(msg) = note {
            self.diagnose(Block::Volume, None, msg);
        }
        Ok(())
    }

    fn snapshot(&self) -> (OptimState, Vec<FrameCache>) {
        (self.state.clone(), self.cache.clone())
    }

    /// Runs one block with rollback on failure or objective increase.
    fn run_block(&mut self, block: Block) -> Result<()> {
        let (saved_state, saved_cache) = self.snapshot();
        let before = self.state.objective().unwrap_or(f64::INFINITY);
        let outcome = match block {
            Block::Amplitudes => self.update_amplitudes(),
            Block::Positions => self.update_positions(),
            Block::Volume => self.update_volume(),
            Block::Initial => Ok(()),
        };
        let restore = |this: &mut Self, msg: String| {
            let diagnostics = std::mem::take(&mut this.state.diagnostics);
            this.state = saved_state.clone();
            this.state.diagnostics = diagnostics;
            this.cache = saved_cache.clone();
            this.diagnose(block, None, msg);
        };
        match outcome {
            Ok(()) => {
                let after = self.objective()?;
                if after > before || !self.state.is_feasible() {
                    restore(self, format!("block rejected: objective {before} -> {after}"));
                }
            }
            Err(e) => restore(self, format!("block failed and was skipped: {e}")),
        }
        self.record(block)?;
        Ok(())
    }

    /// One outer iteration: amplitudes, positions, volume (each if enabled).
    pub fn outer_step(&mut self) -> Result<()> {
        self.state.outer_iteration += 1;
        if self.config.update_amplitudes {
            self.run_block(Block::Amplitudes)?;
        }
        if self.config.update_positions {
            self.run_block(Block::Positions)?;
        }
        if self.config.update_volume {
            self.run_block(Block::Volume)?;
        }
        Ok(())
    }

    /// Runs outer iterations until the budget or the relative-change tolerance is reached.
    /// `checkpoint` is called after every outer iteration.
    pub fn run(&mut self, mut checkpoint: impl FnMut(&OptimState) -> Result<()>) -> Result<()> {
        let mut previous = self.objective()?;
        for _ in 0..self.config.outer_iterations {
            self.outer_step()?;
            checkpoint(&self.state)?;
            let current = self.state.objective().unwrap_or(previous);
            let change = (previous - current).abs() / previous.abs().max(f64::MIN_POSITIVE);
            previous = current;
            if change < self.config.tolerance {
                break;
            }
        }
        Ok(())
    }
}

/// Runs the alternating optimization from `init` and returns the final state.
pub fn joint_optimize(
    stack: &FrameStack,
    model: &ForwardModel,
    config: &OptimConfig,
    init: OptimState,
) -> Result<OptimState> {
    let mut rec = Reconstruction::new(model, stack, config.clone(), init)?;
    rec.run(|_| Ok(()))?;
    Ok(rec.into_state())
}
