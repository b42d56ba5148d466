//! Follower-side interaction control.
//!
//! Each tick the desired TCP position is expressed in the tool frame, scaled
//! down by the filtered contact force, displaced by an admittance model
//! driven by the measured wrench, and finally checked by the safety layer.

use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::filters::{VectorWindow, DEFAULT_FORCE_WINDOW};
use crate::se3::{Pose, Rotation3, Twist, UnitQuaternion, Vec3, Wrench};

/// Diagonal mass, damping and stiffness of the admittance model. Entries 0..3
/// are translational, 3..6 rotational.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmittanceParams {
    pub mass: [f64; 6],
    pub damping: [f64; 6],
    pub stiffness: [f64; 6],
}

impl Default for AdmittanceParams {
    fn default() -> Self {
        Self::critically_damped([6.0, 6.0, 6.0, 0.06, 0.06, 0.06], [1000.0, 1000.0, 1000.0, 10.0, 10.0, 10.0])
    }
}

impl AdmittanceParams {
    /// Damping `2√(m k)` on every axis.
    pub fn critically_damped(mass: [f64; 6], stiffness: [f64; 6]) -> Self {
        let damping = std::array::from_fn(|i| 2.0 * (mass[i] * stiffness[i]).sqrt());
        Self {
            mass,
            damping,
            stiffness,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, d) in [
            ("mass", &self.mass),
            ("damping", &self.damping),
            ("stiffness", &self.stiffness),
        ] {
            if let Some(i) = d.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(format!("{name}[{i}] must be positive, got {}", d[i]));
            }
        }
        Ok(())
    }
}

/// Compliant-frame offset relative to the desired frame, in the desired frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdmittanceState {
    pub offset_pos: Vec3,
    /// Rotation vector of the compliant frame relative to the desired one.
    pub offset_ori: Vec3,
    pub vel: Twist,
    pub acc: [f64; 6],
}

impl AdmittanceState {
    pub fn position(&self, axis: usize) -> f64 {
        if axis < 3 {
            self.offset_pos[axis]
        } else {
            self.offset_ori[axis - 3]
        }
    }

    pub fn velocity(&self, axis: usize) -> f64 {
        if axis < 3 {
            self.vel.linear[axis]
        } else {
            self.vel.angular[axis - 3]
        }
    }

    pub fn offset_rotation(&self) -> UnitQuaternion {
        UnitQuaternion::from_rotation_vector(&self.offset_ori)
    }

    /// `‖offset‖ + ‖velocity‖` over all six axes.
    pub fn magnitude(&self) -> f64 {
        (0..6).map(|i| self.position(i).powi(2)).sum::<f64>().sqrt()
            + (0..6).map(|i| self.velocity(i).powi(2)).sum::<f64>().sqrt()
    }
}

/// Exact zero-order-hold discretization of the six decoupled
/// mass-spring-damper axes for one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmittanceModel {
    params: AdmittanceParams,
    period: f64,
    transition: [Matrix2<f64>; 6],
    input: [Vector2<f64>; 6],
}

impl AdmittanceModel {
    pub fn new(params: AdmittanceParams, period: f64) -> Self {
        let mut transition = [Matrix2::zeros(); 6];
        let mut input = [Vector2::zeros(); 6];
        for i in 0..6 {
            let (m, d, k) = (params.mass[i], params.damping[i], params.stiffness[i]);
            // exp([[A, B], [0, 0]] T) yields the state transition and the input map.
            #[rustfmt::skip]
            let aug = Matrix3::new(
                0.0,    1.0,    0.0,
                -k / m, -d / m, 1.0 / m,
                0.0,    0.0,    0.0,
            ) * period;
            let e = aug.exp();
            transition[i] = Matrix2::new(e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]);
            input[i] = Vector2::new(e[(0, 2)], e[(1, 2)]);
        }
        Self {
            params,
            period,
            transition,
            input,
        }
    }

    pub fn params(&self) -> &AdmittanceParams {
        &self.params
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Advances the state by one period under a wrench held constant over it.
    pub fn step(&self, state: &AdmittanceState, wrench: &Wrench) -> AdmittanceState {
        let h = [
            wrench.force.x,
            wrench.force.y,
            wrench.force.z,
            wrench.torque.x,
            wrench.torque.y,
            wrench.torque.z,
        ];
        let mut out = AdmittanceState::default();
        for i in 0..6 {
            let x = Vector2::new(state.position(i), state.velocity(i));
            let next = self.transition[i] * x + self.input[i] * h[i];
            let p = &self.params;
            let acc = (h[i] - p.damping[i] * next[1] - p.stiffness[i] * next[0]) / p.mass[i];
            if i < 3 {
                out.offset_pos[i] = next[0];
                out.vel.linear[i] = next[1];
            } else {
                out.offset_ori[i - 3] = next[0];
                out.vel.angular[i - 3] = next[1];
            }
            out.acc[i] = acc;
        }
        out
    }
}

/// One step of `M v̇ + D v + K x = h`, with `h` the wrench the environment
/// applies to the tool, expressed in the desired frame.
pub fn admittance_step(
    state: &AdmittanceState,
    wrench: &Wrench,
    params: &AdmittanceParams,
    period: f64,
) -> AdmittanceState {
    AdmittanceModel::new(*params, period).step(state, wrench)
}

/// Desired position relative to the measured TCP, in the TCP frame.
pub fn reference_in_tool_frame(desired: &Vec3, tcp: &Vec3, tcp_rotation: &Rotation3) -> Vec3 {
    tcp_rotation.transpose().rotate(&(desired - tcp))
}

/// Force-driven attenuation `p / (1 + K_s ‖f‖)`.
pub fn scale_reference(reference: &Vec3, filtered_force: &Vec3, gain: f64) -> Vec3 {
    reference / (1.0 + gain * filtered_force.norm())
}

/// Compliant pose: the scaled reference carried back to the base frame, then
/// displaced and rotated by the admittance offset.
pub fn compose_compliant_pose(
    scaled_reference: &Vec3,
    desired_orientation: &UnitQuaternion,
    tcp_position: &Vec3,
    tcp_rotation: &Rotation3,
    state: &AdmittanceState,
) -> Pose {
    let base_reference = tcp_position + tcp_rotation.rotate(scaled_reference);
    Pose {
        position: base_reference + desired_orientation.rotate(&state.offset_pos),
        orientation: *desired_orientation * state.offset_rotation(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    /// Reference scaling gain `K_s` (1/N). Zero disables the limiter.
    pub force_scaling_gain: f64,
    /// Emergency stop threshold (N).
    pub emergency_threshold: f64,
    /// Emergency release threshold (N), below `emergency_threshold`.
    pub release_threshold: f64,
    /// Largest allowed distance between command and measurement (m).
    pub max_translation_deviation: f64,
    /// Largest allowed rotation between command and measurement (rad).
    pub max_rotation_deviation: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            force_scaling_gain: 0.1,
            emergency_threshold: 15.0,
            release_threshold: 12.0,
            max_translation_deviation: 0.01,
            max_rotation_deviation: 0.2,
        }
    }
}

impl SafetyConfig {
    /// Limiter off and every threshold infinite.
    pub fn disabled() -> Self {
        Self {
            force_scaling_gain: 0.0,
            emergency_threshold: f64::INFINITY,
            release_threshold: f64::INFINITY,
            max_translation_deviation: f64::INFINITY,
            max_rotation_deviation: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.force_scaling_gain >= 0.0 && self.force_scaling_gain.is_finite()) {
            return Err("force_scaling_gain must be non-negative".into());
        }
        for (name, v) in [
            ("emergency_threshold", self.emergency_threshold),
            ("release_threshold", self.release_threshold),
            ("max_translation_deviation", self.max_translation_deviation),
            ("max_rotation_deviation", self.max_rotation_deviation),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.emergency_threshold.is_finite() && self.release_threshold >= self.emergency_threshold {
            return Err("release_threshold must be below emergency_threshold".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SafetyEvents {
    pub stale_reference: bool,
    pub deviation_clamped: bool,
    pub emergency_active: bool,
}

/// Emergency latch with hysteresis: enters strictly above the threshold and
/// stays latched until the force drops strictly below the release level.
pub fn emergency_latch(latched: bool, force_norm: f64, cfg: &SafetyConfig) -> bool {
    if latched {
        force_norm >= cfg.release_threshold
    } else {
        force_norm > cfg.emergency_threshold
    }
}

/// Picks the reference for this tick: the measured pose during an emergency,
/// otherwise the fresh desired pose, otherwise the last valid one. Returns the
/// reference and whether it is stale. With no reference ever received the
/// measured pose is held.
pub fn select_reference(
    fresh: Option<&Pose>,
    last_valid: Option<&Pose>,
    measured: &Pose,
    emergency: bool,
) -> (Pose, bool) {
    if emergency {
        return (*measured, fresh.is_none());
    }
    match (fresh, last_valid) {
        (Some(p), _) => (*p, false),
        (None, Some(p)) => (*p, true),
        (None, None) => (*measured, true),
    }
}

/// Replaces the candidate by the measured pose when it is too far away in
/// translation or rotation. Returns the pose to command and whether it clamped.
pub fn clamp_deviation(candidate: &Pose, measured: &Pose, cfg: &SafetyConfig) -> (Pose, bool) {
    let dp = (candidate.position - measured.position).norm();
    let dr = candidate.orientation.angle_to(&measured.orientation);
    if dp > cfg.max_translation_deviation || dr > cfg.max_rotation_deviation {
        (*measured, true)
    } else {
        (*candidate, false)
    }
}

/// Optional stage between the force limiter and the admittance law, e.g. a
/// time-domain passivity layer. Receives and returns the tool-frame reference.
pub trait ReferenceModulator: Send {
    fn modulate(&mut self, reference: Vec3, wrench: &Wrench, period: f64) -> Vec3;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionConfig {
    pub admittance: AdmittanceParams,
    pub safety: SafetyConfig,
    pub force_window: usize,
    /// Control period (s). Set by the owning session, not read from files.
    #[serde(skip, default = "default_period")]
    pub period: f64,
}

fn default_period() -> f64 {
    crate::ehcc::DEFAULT_PERIOD
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self {
            admittance: AdmittanceParams::default(),
            safety: SafetyConfig::default(),
            force_window: DEFAULT_FORCE_WINDOW,
            period: crate::ehcc::DEFAULT_PERIOD,
        }
    }
}

/// Everything a tick produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionOutput {
    pub commanded: Pose,
    pub compliant: Pose,
    /// Reference actually used (after stale hold / emergency substitution).
    pub reference: Pose,
    /// Unscaled reference in the tool frame; its norm is the virtual penetration.
    pub reference_tool: Vec3,
    pub scaled_reference_tool: Vec3,
    /// Scaled reference minus compliant position, in the tool frame.
    pub tracking_error: Vec3,
    pub filtered_force: Vec3,
    pub events: SafetyEvents,
    pub admittance: AdmittanceState,
}

pub struct InteractionController {
    cfg: InteractionConfig,
    model: AdmittanceModel,
    force_filter: VectorWindow,
    state: AdmittanceState,
    last_valid: Option<Pose>,
    emergency: bool,
    modulator: Option<Box<dyn ReferenceModulator>>,
}

impl std::fmt::Debug for InteractionController {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InteractionController")
            .field("cfg", &self.cfg)
            .field("state", &self.state)
            .field("last_valid", &self.last_valid)
            .field("emergency", &self.emergency)
            .finish_non_exhaustive()
    }
}

impl InteractionController {
    pub fn new(cfg: InteractionConfig) -> Self {
        Self {
            model: AdmittanceModel::new(cfg.admittance, cfg.period),
            force_filter: VectorWindow::new(cfg.force_window),
            cfg,
            state: AdmittanceState::default(),
            last_valid: None,
            emergency: false,
            modulator: None,
        }
    }

    pub fn config(&self) -> &InteractionConfig {
        &self.cfg
    }

    pub fn state(&self) -> &AdmittanceState {
        &self.state
    }

    pub fn set_force_scaling_gain(&mut self, gain: f64) {
        self.cfg.safety.force_scaling_gain = gain.max(0.0);
    }

    pub fn set_modulator(&mut self, modulator: Option<Box<dyn ReferenceModulator>>) {
        self.modulator = modulator;
    }

    pub fn emergency_active(&self) -> bool {
        self.emergency
    }

    /// One control tick. `wrench` is the measured contact wrench in the TCP
    /// frame (force the environment applies to the tool).
    pub fn tick(&mut self, desired: Option<&Pose>, measured: &Pose, wrench: &Wrench) -> InteractionOutput {
        let safety = self.cfg.safety;
        let tcp_rotation = measured.rotation();
        let filtered_force = self.force_filter.push(wrench.force);

        self.emergency = emergency_latch(self.emergency, wrench.force.norm(), &safety);
        if let Some(d) = desired {
            self.last_valid = Some(*d);
        }
        let (reference, stale) =
            select_reference(desired, self.last_valid.as_ref(), measured, self.emergency);

        let reference_tool = reference_in_tool_frame(&reference.position, &measured.position, &tcp_rotation);
        let mut scaled = scale_reference(&reference_tool, &filtered_force, safety.force_scaling_gain);
        if let Some(m) = self.modulator.as_mut() {
            scaled = m.modulate(scaled, wrench, self.cfg.period);
        }

        let to_desired = reference.rotation().transpose() * tcp_rotation;
        self.state = self.model.step(&self.state, &wrench.rotated(&to_desired));
        let compliant = compose_compliant_pose(
            &scaled,
            &reference.orientation,
            &measured.position,
            &tcp_rotation,
            &self.state,
        );
        let compliant_tool = reference_in_tool_frame(&compliant.position, &measured.position, &tcp_rotation);
        let (commanded, clamped) = clamp_deviation(&compliant, measured, &safety);

        InteractionOutput {
            commanded,
            compliant,
            reference,
            reference_tool,
            scaled_reference_tool: scaled,
            tracking_error: scaled - compliant_tool,
            filtered_force,
            events: SafetyEvents {
                stale_reference: stale,
                deviation_clamped: clamped,
                emergency_active: self.emergency,
            },
            admittance: self.state,
        }
    }
}
