//! One teleoperation session: engagement, then the synchronous control
//! cycle stylus → eye-hand mapping → interaction control → follower →
//! contact → haptic feedback. Shared by the offline harness and the live
//! service so both produce the same records from the same inputs.

use serde::{Deserialize, Serialize};

use crate::ehcc::{EhccConfig, EyeHandController, DEFAULT_PERIOD};
use crate::hfc::{HapticFeedback, HfcParams};
use crate::interaction::{InteractionConfig, InteractionController, SafetyEvents};
use crate::se3::{Pose, Rotation3, Vec3};
use crate::sim::{World, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementConfig {
    /// Continuous alignment required before engaging (s).
    pub hold_time: f64,
    /// Give up after this long without engaging (s). `None` waits forever.
    pub timeout: Option<f64>,
}

impl Default for EngagementConfig {
    fn default() -> Self {
        Self {
            hold_time: 0.5,
            timeout: Some(30.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Control period (s).
    pub period: f64,
    pub ehcc: EhccConfig,
    pub interaction: InteractionConfig,
    pub hfc: HfcParams,
    pub world: WorldConfig,
    pub engagement: EngagementConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            period: DEFAULT_PERIOD,
            ehcc: EhccConfig::default(),
            interaction: InteractionConfig::default(),
            hfc: HfcParams::default(),
            world: WorldConfig::default(),
            engagement: EngagementConfig::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err("period: must be positive".into());
        }
        if self.ehcc.pose_window == 0 {
            return Err("ehcc.pose_window: must be at least 1".into());
        }
        if !(self.ehcc.engagement_tolerance > 0.0) {
            return Err("ehcc.engagement_tolerance: must be positive".into());
        }
        if self.interaction.force_window == 0 {
            return Err("interaction.force_window: must be at least 1".into());
        }
        self.interaction
            .admittance
            .validate()
            .map_err(|e| format!("interaction.admittance: {e}"))?;
        self.interaction
            .safety
            .validate()
            .map_err(|e| format!("interaction.safety: {e}"))?;
        self.hfc.validate().map_err(|e| format!("hfc: {e}"))?;
        self.world.validate().map_err(|e| format!("world: {e}"))?;
        if !(self.engagement.hold_time >= 0.0) {
            return Err("engagement.hold_time: must be non-negative".into());
        }
        if self.engagement.timeout.is_some_and(|t| !(t > 0.0)) {
            return Err("engagement.timeout: must be positive".into());
        }
        Ok(())
    }

    /// Ticks of continuous alignment needed to engage.
    pub fn hold_ticks(&self) -> u64 {
        (self.engagement.hold_time / self.period - 1e-9).ceil().max(0.0) as u64
    }
}

/// One engaged control tick. Field names are part of the log format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: u64,
    /// Session time (s).
    pub t: f64,
    /// Measured contact force norm in the tool frame (N).
    pub a: f64,
    /// Virtual penetration: norm of the desired position relative to the
    /// measured TCP, before force scaling (m).
    pub b: f64,
    pub stylus: Option<Pose>,
    /// Reference fed to the interaction controller.
    pub desired: Pose,
    pub commanded: Pose,
    /// TCP pose after this tick's motion.
    pub measured: Pose,
    pub phi: f64,
    pub stale: bool,
    pub clamped: bool,
    pub emergency: bool,
    /// Contact force in the tool frame (N).
    pub force: Vec3,
    /// Force rendered on the leader device (N).
    pub feedback: Vec3,
    pub tracking_error: Vec3,
}

impl LogRecord {
    pub fn events(&self) -> SafetyEvents {
        SafetyEvents {
            stale_reference: self.stale,
            deviation_clamped: self.clamped,
            emergency_active: self.emergency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum EngagementStatus {
    Waiting {
        /// Consecutive aligned ticks so far.
        aligned_ticks: u64,
        required_ticks: u64,
    },
    Engaged,
    TimedOut,
}

/// Frames shown to the operator while aligning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementView {
    pub tick: u64,
    pub t: f64,
    pub target: Rotation3,
    pub measured: Rotation3,
    /// Angle between the two (rad).
    pub error: f64,
    pub aligned: bool,
    pub status: EngagementStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TickOutcome {
    Engaging(EngagementView),
    /// Engagement just completed on this tick.
    Engaged(EngagementView),
    Control(LogRecord),
    TimedOut,
}

pub struct Session {
    cfg: SessionConfig,
    ehcc: EyeHandController,
    controller: InteractionController,
    hfc: HapticFeedback,
    world: World,
    tick: u64,
    status: EngagementStatus,
    last_stylus: Option<Pose>,
    clutch_open: bool,
    limiter_gain: f64,
    limiter_enabled: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("tick", &self.tick)
            .field("status", &self.status)
            .finish_non_exhaustive()
    }
}

impl Session {
    /// # Panics
    /// If the configuration does not validate.
    pub fn new(mut cfg: SessionConfig) -> Self {
        if let Err(e) = cfg.validate() {
            panic!("invalid session config: {e}");
        }
        cfg.ehcc.period = cfg.period;
        cfg.interaction.period = cfg.period;
        let required = cfg.hold_ticks();
        Self {
            ehcc: EyeHandController::new(cfg.ehcc),
            controller: InteractionController::new(cfg.interaction),
            hfc: HapticFeedback::new(cfg.hfc, cfg.period),
            world: World::new(cfg.world.clone()),
            tick: 0,
            status: EngagementStatus::Waiting {
                aligned_ticks: 0,
                required_ticks: required,
            },
            last_stylus: None,
            clutch_open: false,
            limiter_gain: cfg.interaction.safety.force_scaling_gain,
            limiter_enabled: true,
            cfg,
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn status(&self) -> EngagementStatus {
        self.status
    }

    pub fn is_engaged(&self) -> bool {
        self.status == EngagementStatus::Engaged
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.period
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn ehcc(&self) -> &EyeHandController {
        &self.ehcc
    }

    pub fn controller(&self) -> &InteractionController {
        &self.controller
    }

    pub fn set_force_scaling_gain(&mut self, gain: f64) {
        self.limiter_gain = gain.max(0.0);
        if self.limiter_enabled {
            self.controller.set_force_scaling_gain(self.limiter_gain);
        }
    }

    pub fn set_limiter_enabled(&mut self, enabled: bool) {
        self.limiter_enabled = enabled;
        self.controller
            .set_force_scaling_gain(if enabled { self.limiter_gain } else { 0.0 });
    }

    pub fn limiter_enabled(&self) -> bool {
        self.limiter_enabled
    }

    pub fn force_scaling_gain(&self) -> f64 {
        self.controller.config().safety.force_scaling_gain
    }

    pub fn set_scaling(&mut self, scaling: crate::ehcc::ScalingMatrix) {
        self.ehcc.set_scaling(scaling);
    }

    /// While the clutch is open stylus motion is ignored and the follower
    /// holds; closing it resumes from the stylus pose at that moment.
    pub fn set_clutch(&mut self, open: bool) {
        if self.clutch_open && !open {
            self.ehcc.rebase();
        }
        self.clutch_open = open;
    }

    /// Restarts the engagement phase.
    pub fn request_engagement(&mut self) {
        self.ehcc.disengage();
        self.status = EngagementStatus::Waiting {
            aligned_ticks: 0,
            required_ticks: self.cfg.hold_ticks(),
        };
    }

    /// Advances the session by one period. `stylus` is the newest raw stylus
    /// pose, or `None` when no fresh sample arrived.
    pub fn tick(&mut self, stylus: Option<&Pose>) -> TickOutcome {
        let k = self.tick;
        let t = self.time();
        self.tick += 1;
        match self.status {
            EngagementStatus::TimedOut => {
                self.hold();
                TickOutcome::TimedOut
            }
            EngagementStatus::Waiting { aligned_ticks, required_ticks } => {
                self.engagement_tick(k, t, stylus, aligned_ticks, required_ticks)
            }
            EngagementStatus::Engaged => TickOutcome::Control(self.control_tick(k, t, stylus)),
        }
    }

    fn hold(&mut self) {
        let measured = self.world.measurement().pose;
        self.world.step(&measured, self.cfg.period);
    }

    fn engagement_tick(
        &mut self,
        k: u64,
        t: f64,
        stylus: Option<&Pose>,
        aligned_ticks: u64,
        required_ticks: u64,
    ) -> TickOutcome {
        if let Some(s) = stylus {
            self.last_stylus = Some(*s);
            self.ehcc.observe(s);
        }
        let measured = self.world.measurement().pose;
        let (target, aligned) = match self.last_stylus {
            Some(s) => (
                self.ehcc.engagement_target(&s, &measured).rotation,
                stylus.is_some() && self.ehcc.is_aligned(&s, &measured),
            ),
            None => (measured.rotation(), false),
        };
        let aligned_ticks = if aligned { aligned_ticks + 1 } else { 0 };
        let mut view = EngagementView {
            tick: k,
            t,
            target,
            measured: measured.rotation(),
            error: (measured.rotation().transpose() * target).angle(),
            aligned,
            status: EngagementStatus::Waiting {
                aligned_ticks,
                required_ticks,
            },
        };
        self.hold();
        if aligned_ticks >= required_ticks.max(1) {
            self.ehcc.engage(&measured);
            self.status = EngagementStatus::Engaged;
            view.status = self.status;
            return TickOutcome::Engaged(view);
        }
        if self.cfg.engagement.timeout.is_some_and(|limit| t + self.cfg.period >= limit - 1e-9) {
            self.status = EngagementStatus::TimedOut;
            return TickOutcome::TimedOut;
        }
        self.status = view.status;
        TickOutcome::Engaging(view)
    }

    fn control_tick(&mut self, k: u64, t: f64, stylus: Option<&Pose>) -> LogRecord {
        let before = *self.world.measurement();
        let input = if self.clutch_open { None } else { stylus };
        if self.clutch_open {
            if let Some(s) = stylus {
                self.ehcc.observe(s);
            }
        }
        let ehcc_out = input.map(|s| {
            self.ehcc
                .step(s, &before.pose)
                .expect("controller is engaged while the session is")
        });
        let desired = ehcc_out.map(|o| o.desired);
        let out = self.controller.tick(desired.as_ref(), &before.pose, &before.wrench);
        let after = self.world.step(&out.commanded, self.cfg.period);

        let state = self.ehcc.state().expect("engaged");
        let stylus_rotation = state.prev_filtered.orientation.to_rotation();
        let feedback = self.hfc.tick(
            &out.tracking_error,
            after.wrench.force.norm(),
            &stylus_rotation,
            state.phi,
            &self.cfg.ehcc.frames,
        );
        LogRecord {
            tick: k,
            t,
            a: after.wrench.force.norm(),
            b: out.reference_tool.norm(),
            stylus: stylus.copied(),
            desired: out.reference,
            commanded: out.commanded,
            measured: after.pose,
            phi: state.phi,
            stale: out.events.stale_reference,
            clamped: out.events.deviation_clamped,
            emergency: out.events.emergency_active,
            force: after.wrench.force,
            feedback: feedback.force,
            tracking_error: out.tracking_error,
        }
    }
}
