//! The control loop: one owner of the session, fed by inbound messages and
//! emitting outbound frames.
//!
//! [`SessionLoop`] is the deterministic core and runs the same way live and
//! in replay. [`run_realtime`] paces it at the control period.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use teleop_core::ehcc::ScalingMatrix;
use teleop_core::se3::Pose;
use teleop_core::session::{EngagementStatus, LogRecord, Session, SessionConfig, TickOutcome};

use crate::protocol::{
    EngagementFrame, FeedbackFrame, Inbound, InboundMsg, Outbound, ParamName, PedalFunction, SafetyFrame,
    StateFrame, StatsFrame,
};
use crate::queue::OutboundQueue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub session: SessionConfig,
    /// Emit state and feedback frames every this many ticks.
    pub state_decimation: u64,
    /// Emit a statistics snapshot every this many engaged ticks.
    pub stats_interval: u64,
    /// Outbound frames kept before droppable ones are discarded.
    pub queue_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            state_decimation: 2,
            stats_interval: 125,
            queue_capacity: 256,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.session.validate().map_err(|e| format!("session.{e}"))?;
        if self.state_decimation == 0 {
            return Err("state_decimation: must be at least 1".into());
        }
        if self.stats_interval == 0 {
            return Err("stats_interval: must be at least 1".into());
        }
        if self.queue_capacity == 0 {
            return Err("queue_capacity: must be at least 1".into());
        }
        Ok(())
    }

    /// Rate of state frames (Hz).
    pub fn state_rate(&self) -> f64 {
        1.0 / (self.session.period * self.state_decimation as f64)
    }
}

/// Everything that reached the loop before one tick, in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickInput {
    pub tick: u64,
    pub events: Vec<InputEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum InputEvent {
    Message { msg: InboundMsg },
    /// The client went away.
    Disconnected,
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    engaged: u64,
    sum_force: f64,
    max_force: f64,
    stale: u64,
    clamped: u64,
    emergency: u64,
}

pub struct SessionLoop {
    cfg: ServiceConfig,
    session: Session,
    latest: Option<Pose>,
    scaler_active: bool,
    clutch_pressed: bool,
    degraded: bool,
    last_safety: Option<SafetyFrame>,
    stats: Stats,
    dropped_frames: u64,
    log: Vec<LogRecord>,
    inputs: Vec<TickInput>,
    pending: Vec<InputEvent>,
}

impl std::fmt::Debug for SessionLoop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionLoop").field("session", &self.session).finish_non_exhaustive()
    }
}

impl SessionLoop {
    /// # Panics
    /// If the configuration does not validate.
    pub fn new(cfg: ServiceConfig) -> Self {
        if let Err(e) = cfg.validate() {
            panic!("invalid service config: {e}");
        }
        Self {
            session: Session::new(cfg.session.clone()),
            cfg,
            latest: None,
            scaler_active: false,
            clutch_pressed: false,
            degraded: false,
            last_safety: None,
            stats: Stats::default(),
            dropped_frames: 0,
            log: Vec::new(),
            inputs: Vec::new(),
            pending: Vec::new(),
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn tick_index(&self) -> u64 {
        self.session.tick_index()
    }

    pub fn degraded(&self) -> bool {
        self.degraded
    }

    /// Engaged records so far.
    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    /// Inputs applied so far, one entry per tick that had any.
    pub fn inputs(&self) -> &[TickInput] {
        &self.inputs
    }

    pub fn into_parts(self) -> (Vec<LogRecord>, Vec<TickInput>) {
        (self.log, self.inputs)
    }

    /// Applies one input before the next tick. Stylus poses are coalesced:
    /// the tick uses the most recent one.
    pub fn handle(&mut self, event: InputEvent) {
        match &event {
            InputEvent::Disconnected => {
                // Stop feeding the controller so it holds the last valid
                // reference.
                self.latest = None;
                self.degraded = true;
            }
            InputEvent::Message { msg } => match &msg.body {
                Inbound::StylusPose(p) => {
                    if let Ok(pose) = p.to_pose() {
                        self.latest = Some(pose);
                    }
                }
                Inbound::EngageRequest(_) => self.session.request_engagement(),
                Inbound::SetParam(p) => match p.name {
                    ParamName::ForceScalingGain => self.session.set_force_scaling_gain(p.value),
                    ParamName::TranslationScale => {
                        if let Ok(s) = ScalingMatrix::new([p.value; 3]) {
                            self.session.set_scaling(s);
                        }
                    }
                },
                Inbound::ToggleLimiter(t) => self.session.set_limiter_enabled(t.enabled),
                Inbound::FootPedal(f) => match f.function {
                    PedalFunction::Scaler => self.scaler_active = f.pressed,
                    PedalFunction::Clutch => {
                        self.clutch_pressed = f.pressed;
                        self.session.set_clutch(f.pressed);
                    }
                },
            },
        }
        self.pending.push(event);
    }

    /// Runs one control period and hands the resulting frames to `emit`.
    pub fn tick(&mut self, mut emit: impl FnMut(u64, Outbound)) -> TickOutcome {
        let k = self.session.tick_index();
        if !self.pending.is_empty() {
            self.inputs.push(TickInput {
                tick: k,
                events: std::mem::take(&mut self.pending),
            });
        }
        let outcome = self.session.tick(self.latest.as_ref());
        let emit_state = k.is_multiple_of(self.cfg.state_decimation);
        let mut safety = self.last_safety.unwrap_or_else(default_safety);
        safety.degraded = self.degraded;
        match &outcome {
            TickOutcome::Engaging(v) => {
                if emit_state {
                    emit(k, Outbound::EngagementStatus(EngagementFrame::from(v)));
                }
            }
            TickOutcome::Engaged(v) => emit(k, Outbound::EngagementStatus(EngagementFrame::from(v))),
            TickOutcome::TimedOut => safety.engagement_timed_out = true,
            TickOutcome::Control(r) => {
                safety.stale_reference = r.stale;
                safety.deviation_clamped = r.clamped;
                safety.emergency_active = r.emergency;
                self.record_stats(r);
                if emit_state {
                    emit(
                        k,
                        Outbound::State(StateFrame {
                            record: *r,
                            limiter_enabled: self.session.limiter_enabled(),
                            force_scaling_gain: self.session.force_scaling_gain(),
                            scaler_active: self.scaler_active,
                            clutch_pressed: self.clutch_pressed,
                            degraded: self.degraded,
                        }),
                    );
                    emit(k, Outbound::FeedbackForce(FeedbackFrame { force: r.feedback }));
                }
                if self.stats.engaged.is_multiple_of(self.cfg.stats_interval) {
                    emit(k, Outbound::StatsSnapshot(self.snapshot()));
                }
                self.log.push(*r);
            }
        }
        if self.session.status() != EngagementStatus::Engaged && !matches!(outcome, TickOutcome::TimedOut) {
            safety.stale_reference = false;
            safety.deviation_clamped = false;
            safety.emergency_active = false;
        }
        // Every change is reported, clearing included.
        if self.last_safety.map_or(safety != default_safety(), |prev| prev != safety) {
            emit(k, Outbound::SafetyEvent(safety));
        }
        self.last_safety = Some(safety);
        outcome
    }

    fn record_stats(&mut self, r: &LogRecord) {
        let s = &mut self.stats;
        s.engaged += 1;
        s.sum_force += r.a;
        s.max_force = s.max_force.max(r.a);
        s.stale += r.stale as u64;
        s.clamped += r.clamped as u64;
        s.emergency += r.emergency as u64;
    }

    fn snapshot(&self) -> StatsFrame {
        let s = &self.stats;
        StatsFrame {
            engaged_ticks: s.engaged,
            mean_force: if s.engaged > 0 { s.sum_force / s.engaged as f64 } else { 0.0 },
            max_force: s.max_force,
            stale_ticks: s.stale,
            clamped_ticks: s.clamped,
            emergency_ticks: s.emergency,
            dropped_frames: self.dropped_frames,
        }
    }

    /// Outbound frames lost so far, reported in statistics snapshots.
    pub fn set_dropped_frames(&mut self, n: u64) {
        self.dropped_frames = n;
    }
}

fn default_safety() -> SafetyFrame {
    SafetyFrame {
        stale_reference: false,
        deviation_clamped: false,
        emergency_active: false,
        degraded: false,
        engagement_timed_out: false,
    }
}

/// Re-runs a recorded input stream offline for `ticks` ticks.
pub fn replay(cfg: &ServiceConfig, inputs: &[TickInput], ticks: u64) -> Vec<LogRecord> {
    let mut lp = SessionLoop::new(cfg.clone());
    let mut next = inputs.iter().peekable();
    for k in 0..ticks {
        while let Some(input) = next.next_if(|i| i.tick == k) {
            for e in &input.events {
                lp.handle(e.clone());
            }
        }
        lp.tick(|_, _| {});
    }
    lp.into_parts().0
}

/// Shared view of a running loop.
#[derive(Debug, Default)]
pub struct LoopStatus {
    pub tick: AtomicU64,
    pub stop: AtomicBool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub ticks: u64,
    pub degraded: bool,
    pub dropped_frames: u64,
    /// Ticks that started later than one period after their deadline.
    pub overruns: u64,
    pub log: Vec<LogRecord>,
    pub inputs: Vec<TickInput>,
}

/// Paces a [`SessionLoop`] at the control period on the calling thread
/// until `status.stop` is set, `max_ticks` is reached or the input channel
/// closes.
pub fn run_realtime(
    cfg: ServiceConfig,
    inputs: Receiver<InputEvent>,
    queue: Arc<OutboundQueue>,
    status: Arc<LoopStatus>,
    max_ticks: Option<u64>,
) -> LoopReport {
    let period = Duration::from_secs_f64(cfg.session.period);
    let mut lp = SessionLoop::new(cfg);
    let start = Instant::now();
    let mut overruns = 0;
    let mut open = true;
    loop {
        let k = lp.tick_index();
        if status.stop.load(Ordering::Acquire) || max_ticks.is_some_and(|m| k >= m) {
            break;
        }
        let deadline = start + period * (k as u32);
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else if now - deadline > period {
            overruns += 1;
        }
        while open {
            match inputs.try_recv() {
                Ok(e) => lp.handle(e),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => open = false,
            }
        }
        lp.set_dropped_frames(queue.dropped());
        lp.tick(|tick, body| queue.push(tick, body));
        status.tick.store(lp.tick_index(), Ordering::Release);
    }
    let degraded = lp.degraded();
    let ticks = lp.tick_index();
    let (log, inputs) = lp.into_parts();
    LoopReport {
        ticks,
        degraded,
        dropped_frames: queue.dropped(),
        overruns,
        log,
        inputs,
    }
}
