//! Haptic feedback from the admittance tracking error.
//!
//! The operator feels a virtual spring-damper stretched by the difference
//! between the reference the admittance controller received and where the
//! compliant frame ended up, expressed in the leader base with the same
//! viewing-angle correspondence as the motion mapping.

use serde::{Deserialize, Serialize};

use crate::ehcc::{viewing_rotation, FrameConfig};
use crate::filters::VectorWindow;
use crate::se3::{Rotation3, Vec3};

pub const DEFAULT_DERIVATIVE_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HfcParams {
    /// Diagonal virtual stiffness (N/m).
    pub stiffness: [f64; 3],
    /// Diagonal virtual damping (N·s/m).
    pub damping: [f64; 3],
    /// Largest force the device may render (N).
    pub max_force: f64,
    /// Contact-force norm at or below which feedback is suppressed (N).
    pub dead_band: f64,
    /// Smoothing window of the error derivative.
    pub derivative_window: usize,
}

impl Default for HfcParams {
    fn default() -> Self {
        Self {
            stiffness: [200.0; 3],
            damping: [5.0; 3],
            max_force: 3.3,
            dead_band: 0.1,
            derivative_window: DEFAULT_DERIVATIVE_WINDOW,
        }
    }
}

impl HfcParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.stiffness.iter().chain(&self.damping).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err("stiffness and damping entries must be non-negative".into());
        }
        if !(self.max_force > 0.0) {
            return Err("max_force must be positive".into());
        }
        if !(self.dead_band >= 0.0) {
            return Err("dead_band must be non-negative".into());
        }
        if self.derivative_window == 0 {
            return Err("derivative_window must be at least 1".into());
        }
        Ok(())
    }
}

/// `K_h R p̃ + D_h R ṗ̃` with `R = stylus_to_hb · re_to_he`.
pub fn feedback_force(
    error: &Vec3,
    error_rate: &Vec3,
    stylus_to_hb: &Rotation3,
    re_to_he: &Rotation3,
    params: &HfcParams,
) -> Vec3 {
    let r = stylus_to_hb * re_to_he;
    let e = r.rotate(error);
    let de = r.rotate(error_rate);
    Vec3::from_fn(|i, _| params.stiffness[i] * e[i] + params.damping[i] * de[i])
}

pub fn saturate(f: &Vec3, max_force: f64) -> Vec3 {
    let n = f.norm();
    if n < max_force {
        *f
    } else {
        f * (max_force / n)
    }
}

pub fn dead_band(f: &Vec3, contact_force_norm: f64, threshold: f64) -> Vec3 {
    if contact_force_norm > threshold {
        *f
    } else {
        Vec3::zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HfcOutput {
    /// Force sent to the device.
    pub force: Vec3,
    /// Unsaturated virtual impedance force.
    pub raw: Vec3,
    pub error_rate: Vec3,
}

/// Stateful wrapper holding the finite-difference memory.
#[derive(Debug, Clone)]
pub struct HapticFeedback {
    params: HfcParams,
    period: f64,
    prev_error: Option<Vec3>,
    rate: VectorWindow,
}

impl HapticFeedback {
    pub fn new(params: HfcParams, period: f64) -> Self {
        Self {
            rate: VectorWindow::new(params.derivative_window.max(1)),
            params,
            period,
            prev_error: None,
        }
    }

    pub fn params(&self) -> &HfcParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.prev_error = None;
        self.rate.clear();
    }

    /// `error` is the tool-frame tracking error, `stylus_to_hb` the stylus
    /// orientation and `phi` the current viewing angle.
    pub fn tick(
        &mut self,
        error: &Vec3,
        contact_force_norm: f64,
        stylus_to_hb: &Rotation3,
        phi: f64,
        frames: &FrameConfig,
    ) -> HfcOutput {
        let diff = match self.prev_error {
            Some(prev) => (error - prev) / self.period,
            None => Vec3::zeros(),
        };
        self.prev_error = Some(*error);
        let error_rate = self.rate.push(diff);
        let re_to_he = viewing_rotation(phi, frames).transpose();
        let raw = feedback_force(error, &error_rate, stylus_to_hb, &re_to_he, &self.params);
        let force = dead_band(&saturate(&raw, self.params.max_force), contact_force_norm, self.params.dead_band);
        HfcOutput {
            force,
            raw,
            error_rate,
        }
    }
}
