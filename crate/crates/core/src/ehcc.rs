//! Eye-hand coordination: turns the leader stylus motion into a desired
//! follower TCP pose that moves consistently with the camera view.
//!
//! Frame names: `Hb` leader base, `He` stylus, `Rb` robot base, `Re` robot
//! TCP (carrying the camera, optical axis = z), `Red` desired TCP.
//! A rotation named `a_to_b` maps coordinates expressed in `a` into `b`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{FilteredPose, PoseFilter, DEFAULT_POSE_WINDOW};
use crate::se3::{
    rotate_twist, swing_twist_about_z, Axis, Pose, Rotation3, Transform, Twist, Vec3,
};

pub const DEFAULT_PERIOD: f64 = 0.008;
pub const DEFAULT_ENGAGEMENT_TOLERANCE: f64 = 0.02;
pub const DEFAULT_TRANSLATION_SCALE: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EhccError {
    #[error("the controller is not engaged")]
    NotEngaged,
}

/// Fixed rotations relating the leader and follower frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    /// Leader base expressed in the robot base.
    pub hb_to_rb: Rotation3,
    /// Desired TCP relative to the stylus, used during engagement.
    pub re_to_he: Rotation3,
    /// Mapping of stylus-frame quantities into the TCP frame.
    pub he_to_re: Rotation3,
    /// The camera optical axis is the TCP z axis and `he_to_re` maps the
    /// stylus z axis onto it.
    pub camera_axis_is_z: bool,
    /// Apply the viewing-angle roll. When false the mapping ignores φ.
    pub view_compensation: bool,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            hb_to_rb: Rotation3::identity(),
            re_to_he: Rotation3::identity(),
            he_to_re: Rotation3::identity(),
            camera_axis_is_z: true,
            view_compensation: true,
        }
    }
}

impl FrameConfig {
    /// Whether `he_to_re` keeps the z axis fixed, which is what makes the
    /// stylus-side and tool-side viewing rotations interchangeable.
    pub fn preserves_z(&self) -> bool {
        (self.he_to_re.rotate(&Vec3::z()) - Vec3::z()).norm() < 1e-9
    }
}

/// Diagonal 6×6 twist scaling; the rotational block is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct ScalingMatrix {
    gains: [f64; 3],
}

impl TryFrom<[f64; 3]> for ScalingMatrix {
    type Error = String;
    fn try_from(g: [f64; 3]) -> Result<Self, String> {
        ScalingMatrix::new(g)
    }
}

impl From<ScalingMatrix> for [f64; 3] {
    fn from(s: ScalingMatrix) -> Self {
        s.gains
    }
}

impl Default for ScalingMatrix {
    fn default() -> Self {
        Self::uniform(DEFAULT_TRANSLATION_SCALE)
    }
}

impl ScalingMatrix {
    pub fn new(gains: [f64; 3]) -> Result<Self, String> {
        if gains.iter().all(|g| g.is_finite() && *g > 0.0) {
            Ok(Self { gains })
        } else {
            Err(format!("translational gains must be positive, got {gains:?}"))
        }
    }

    /// # Panics
    /// If `gain` is not a positive finite number.
    pub fn uniform(gain: f64) -> Self {
        Self::new([gain; 3]).expect("positive gain")
    }

    pub fn translational(&self) -> [f64; 3] {
        self.gains
    }

    pub fn diagonal(&self) -> [f64; 6] {
        [self.gains[0], self.gains[1], self.gains[2], 1.0, 1.0, 1.0]
    }

    pub fn apply(&self, v: &Twist) -> Twist {
        Twist {
            linear: v.linear.component_mul(&Vec3::from(self.gains)),
            angular: v.angular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EhccConfig {
    pub frames: FrameConfig,
    pub scaling: ScalingMatrix,
    pub pose_window: usize,
    /// Alignment tolerance of the engagement phase (rad).
    pub engagement_tolerance: f64,
    /// Control period (s). Set by the owning session, not read from files.
    #[serde(skip, default = "default_period")]
    pub period: f64,
}

fn default_period() -> f64 {
    DEFAULT_PERIOD
}

impl Default for EhccConfig {
    fn default() -> Self {
        Self {
            frames: FrameConfig::default(),
            scaling: ScalingMatrix::default(),
            pose_window: DEFAULT_POSE_WINDOW,
            engagement_tolerance: DEFAULT_ENGAGEMENT_TOLERANCE,
            period: DEFAULT_PERIOD,
        }
    }
}

/// Desired TCP frame generated from the stylus during engagement: the stylus
/// orientation carried into the robot base, at the current TCP position.
pub fn engagement_target(stylus: &Transform, tcp_position: &Vec3, frames: &FrameConfig) -> Transform {
    Transform {
        rotation: frames.hb_to_rb * stylus.rotation * frames.re_to_he,
        translation: *tcp_position,
    }
}

/// True when the angle of `measuredᵀ · target` is strictly below `tolerance`.
pub fn engagement_aligned(measured: &Rotation3, target: &Rotation3, tolerance: f64) -> bool {
    (measured.transpose() * *target).angle() < tolerance
}

/// Stylus twist from two consecutive filtered poses, both halves expressed
/// in the leader base. The relative rotation `prevᵀ · curr` has its axis in
/// the previous stylus frame, so the axis is carried back into `Hb`.
pub fn hd_twist(prev: &FilteredPose, curr: &FilteredPose, period: f64) -> Twist {
    let linear = (curr.position - prev.position) / period;
    let relative = prev.orientation.conjugate() * curr.orientation;
    let aa = relative.to_axis_angle();
    Twist {
        linear,
        angular: prev.orientation.rotate(&aa.axis) * (aa.angle / period),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewingAngle {
    pub angle: f64,
    /// Swing-twist split was undefined; the caller should keep its previous angle.
    pub degenerate: bool,
}

/// Camera roll about the TCP z axis relative to the orientation latched at
/// engagement, read from the measured TCP orientation.
pub fn viewing_angle(measured: &Rotation3, engagement_reference: &Rotation3) -> ViewingAngle {
    let relative = (engagement_reference.transpose() * *measured).to_quaternion();
    let st = swing_twist_about_z(&relative);
    ViewingAngle {
        angle: st.twist_angle,
        degenerate: st.degenerate,
    }
}

/// Stylus-to-TCP mapping with the viewing-angle roll applied on the TCP side.
pub fn viewing_rotation(phi: f64, frames: &FrameConfig) -> Rotation3 {
    if !frames.view_compensation {
        return frames.he_to_re;
    }
    Rotation3::elementary(Axis::Z, phi) * frames.he_to_re
}

/// Same mapping with the roll applied about the stylus z axis instead. Only
/// equal to [`viewing_rotation`] when `frames.preserves_z()`.
pub fn viewing_rotation_stylus_side(phi: f64, frames: &FrameConfig) -> Rotation3 {
    if !frames.view_compensation {
        return frames.he_to_re;
    }
    frames.he_to_re * Rotation3::elementary(Axis::Z, phi)
}

/// Maps a stylus twist (in `Hb`) to a desired TCP twist (in `Rb`):
/// into the stylus frame, through the viewing rotation into the TCP frame,
/// scaled, then into the robot base through the measured TCP orientation.
pub fn map_twist(
    stylus_twist: &Twist,
    stylus_orientation: &Rotation3,
    tcp_orientation: &Rotation3,
    phi: f64,
    scaling: &ScalingMatrix,
    frames: &FrameConfig,
) -> Twist {
    let to_tool = viewing_rotation(phi, frames) * stylus_orientation.transpose();
    let in_tool = rotate_twist(&to_tool, stylus_twist);
    rotate_twist(tcp_orientation, &scaling.apply(&in_tool))
}

/// One integration step of the desired TCP transform. The rotation is built
/// on the previously measured TCP orientation; the position accumulates on
/// the previous desired position.
pub fn integrate_reference(
    prev_desired: &Transform,
    twist: &Twist,
    measured_prev: &Rotation3,
    period: f64,
) -> Transform {
    let r = measured_prev.transpose().rotate(&(twist.angular * period));
    Transform {
        rotation: *measured_prev * Rotation3::from_rotation_vector(&r),
        translation: prev_desired.translation + twist.linear * period,
    }
}

/// Controller state once engaged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhccState {
    pub prev_filtered: FilteredPose,
    pub prev_desired: Transform,
    pub engagement_reference: Rotation3,
    pub phi: f64,
}

/// Per-tick diagnostics of [`EyeHandController::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhccOutput {
    pub desired: Pose,
    pub filtered: FilteredPose,
    pub stylus_twist: Twist,
    pub desired_twist: Twist,
    pub phi: f64,
    pub phi_degenerate: bool,
    pub filter_degenerate: bool,
}

/// Stateful eye-hand coordination controller for one session.
#[derive(Debug, Clone)]
pub struct EyeHandController {
    cfg: EhccConfig,
    filter: PoseFilter,
    state: Option<EhccState>,
}

impl EyeHandController {
    /// # Panics
    /// If the period is not positive or the pose window is zero.
    pub fn new(cfg: EhccConfig) -> Self {
        assert!(cfg.period > 0.0, "control period must be positive");
        Self {
            filter: PoseFilter::new(cfg.pose_window),
            cfg,
            state: None,
        }
    }

    pub fn config(&self) -> &EhccConfig {
        &self.cfg
    }

    pub fn set_scaling(&mut self, scaling: ScalingMatrix) {
        self.cfg.scaling = scaling;
    }

    pub fn is_engaged(&self) -> bool {
        self.state.is_some()
    }

    pub fn state(&self) -> Option<&EhccState> {
        self.state.as_ref()
    }

    /// Runs the stylus sample through the tremor filter without producing a
    /// command. Used before engagement so the window is warm.
    pub fn observe(&mut self, raw_stylus: &Pose) -> FilteredPose {
        self.filter.push(raw_stylus)
    }

    /// Engagement target for the current raw stylus pose.
    pub fn engagement_target(&self, raw_stylus: &Pose, measured_tcp: &Pose) -> Transform {
        engagement_target(
            &raw_stylus.to_transform(),
            &measured_tcp.position,
            &self.cfg.frames,
        )
    }

    pub fn is_aligned(&self, raw_stylus: &Pose, measured_tcp: &Pose) -> bool {
        let target = self.engagement_target(raw_stylus, measured_tcp);
        engagement_aligned(
            &measured_tcp.rotation(),
            &target.rotation,
            self.cfg.engagement_tolerance,
        )
    }

    /// Latches the engagement reference. The desired frame starts at the
    /// measured TCP and the last filtered stylus pose becomes the baseline.
    pub fn engage(&mut self, measured_tcp: &Pose) {
        let rotation = measured_tcp.rotation();
        self.state = Some(EhccState {
            prev_filtered: self.filter.current(),
            prev_desired: Transform::new(rotation, measured_tcp.position),
            engagement_reference: rotation,
            phi: 0.0,
        });
    }

    /// Restarts differentiation from the current filter output, so stylus
    /// motion made while the input was ignored is not replayed.
    pub fn rebase(&mut self) {
        let current = self.filter.current();
        if let Some(state) = self.state.as_mut() {
            state.prev_filtered = current;
        }
    }

    pub fn disengage(&mut self) {
        self.state = None;
    }

    /// Filter, differentiate, map and integrate one stylus sample.
    pub fn step(&mut self, raw_stylus: &Pose, measured_tcp: &Pose) -> Result<EhccOutput, EhccError> {
        let cfg = self.cfg;
        let filtered = self.filter.push(raw_stylus);
        let filter_degenerate = self
            .filter
            .quaternions()
            .last_solve()
            .is_some_and(|s| s.degenerate || !s.converged);
        let state = self.state.as_mut().ok_or(EhccError::NotEngaged)?;

        let stylus_twist = hd_twist(&state.prev_filtered, &filtered, cfg.period);
        let measured = measured_tcp.rotation();
        let view = viewing_angle(&measured, &state.engagement_reference);
        if !view.degenerate {
            state.phi = view.angle;
        }
        let desired_twist = map_twist(
            &stylus_twist,
            &filtered.orientation.to_rotation(),
            &measured,
            state.phi,
            &cfg.scaling,
            &cfg.frames,
        );
        let desired = integrate_reference(&state.prev_desired, &desired_twist, &measured, cfg.period);
        state.prev_filtered = filtered;
        state.prev_desired = desired;
        Ok(EhccOutput {
            desired: desired.to_pose(),
            filtered,
            stylus_twist,
            desired_twist,
            phi: state.phi,
            phi_degenerate: view.degenerate,
            filter_degenerate,
        })
    }
}
