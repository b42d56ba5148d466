//! Built-in scenarios: the dental-stand-in force campaign and the eye-hand
//! axis-swap assessment.

use serde::{Deserialize, Serialize};

use crate::harness::{run_scenario, HarnessError, ScenarioConfig, ScenarioId};
use crate::se3::{Axis, Pose, UnitQuaternion, Vec3};
use crate::session::{LogRecord, Session, SessionConfig, TickOutcome};
use crate::sim::{look_along, ContactSurface, Interpolation, LeaderScript, TremorSpec, Waypoint, WorldConfig};
use crate::stats::{bin_conditional_stats, compare_scenarios, BinSpec, BinStats, ScenarioComparison, StatsError};

/// One tooth of the dental stand-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tooth {
    pub center: Vec3,
    pub radius: f64,
    pub stiffness: f64,
    /// Tilt of the approach direction away from vertical (rad).
    pub tilt: f64,
}

pub const TEETH: [Tooth; 3] = [
    Tooth {
        center: Vec3::new(0.40, 0.0, 0.003),
        radius: 0.006,
        stiffness: 2000.0,
        tilt: 0.0,
    },
    Tooth {
        center: Vec3::new(0.42, 0.0, 0.003),
        radius: 0.006,
        stiffness: 5000.0,
        tilt: 0.45,
    },
    Tooth {
        center: Vec3::new(0.44, 0.0, 0.003),
        radius: 0.006,
        stiffness: 10000.0,
        tilt: 0.7,
    },
];

pub const BASE_STIFFNESS: f64 = 3000.0;
pub const CONTACT_DAMPING: f64 = 5.0;
pub const TRIALS: usize = 3;
pub const TRIAL_DURATION: f64 = 20.0;
/// Free-space gap between the tool and the tooth at the start (m).
pub const START_GAP: f64 = 0.005;
/// Deepest commanded tool advance past the tooth surface per trial (m).
pub const MAX_DEPTH: [f64; TRIALS] = [0.010, 0.011, 0.012];
/// Press cycle: approach, hold, retract (s).
pub const PRESS_TIMES: [f64; 3] = [1.6, 0.8, 1.6];

pub fn dental_surfaces() -> Vec<ContactSurface> {
    let mut s = vec![ContactSurface::plane(Vec3::zeros(), Vec3::z(), BASE_STIFFNESS, CONTACT_DAMPING)];
    s.extend(TEETH.iter().map(|t| ContactSurface::sphere(t.center, t.radius, t.stiffness, CONTACT_DAMPING)));
    s
}

/// Unit direction from the tool toward the tooth center.
pub fn approach_direction(tooth: &Tooth, trial: usize) -> Vec3 {
    let azimuth = trial as f64 * 2.0 * std::f64::consts::PI / TRIALS as f64;
    -Vec3::new(
        tooth.tilt.sin() * azimuth.cos(),
        tooth.tilt.sin() * azimuth.sin(),
        tooth.tilt.cos(),
    )
}

/// Scenario config for one trial on one tooth. A and B share the seed of
/// a given `(tooth, trial)` pair.
pub fn dental_trial(scenario: ScenarioId, tooth: usize, trial: usize) -> ScenarioConfig {
    let t = &TEETH[tooth];
    let dir = approach_direction(t, trial);
    let orientation = look_along(&dir, &Vec3::x());
    let tcp = Pose::new(t.center - dir * (t.radius + START_GAP), orientation);

    let mut session = SessionConfig::default();
    session.world = WorldConfig {
        surfaces: dental_surfaces(),
        initial_tcp: tcp,
        force_noise_std: 0.02,
        ..WorldConfig::default()
    };
    let scale = session.ehcc.scaling.translational()[0];

    // The stylus starts with the TCP orientation so that engagement is
    // immediate and stylus translations map one-to-one in direction.
    let stylus0 = Pose::new(Vec3::new(0.0, 0.0, 0.1), orientation);
    let reach = (START_GAP + MAX_DEPTH[trial]) / scale;
    let mut waypoints = vec![Waypoint { time: 0.0, pose: stylus0 }];
    let cycle: f64 = PRESS_TIMES.iter().sum();
    let deep = Pose::new(stylus0.position + dir * reach, orientation);
    let cycles = (TRIAL_DURATION / cycle + 1e-9).floor() as usize;
    for c in 0..cycles {
        let t0 = c as f64 * cycle;
        let at = |time, pose| Waypoint { time, pose };
        waypoints.push(at(t0 + PRESS_TIMES[0], deep));
        waypoints.push(at(t0 + PRESS_TIMES[0] + PRESS_TIMES[1], deep));
        waypoints.push(at((c + 1) as f64 * cycle, stylus0));
    }
    let script = LeaderScript::new(waypoints, Interpolation::Linear, TremorSpec::default())
        .expect("waypoint times increase");
    ScenarioConfig {
        name: format!("tooth{tooth}_trial{trial}_{scenario:?}"),
        scenario,
        duration: TRIAL_DURATION,
        seed: 1000 + 10 * tooth as u64 + trial as u64,
        session,
        script,
    }
}

/// All trials of one scenario, tooth-major.
pub fn dental_campaign(scenario: ScenarioId) -> Vec<ScenarioConfig> {
    (0..TEETH.len())
        .flat_map(|tooth| (0..TRIALS).map(move |trial| dental_trial(scenario, tooth, trial)))
        .collect()
}

/// Minimum samples per bin and scenario for a bin to enter the comparison.
pub const MIN_BIN_COUNT: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub bins_a: BinStats,
    pub bins_b: BinStats,
    pub comparison: ScenarioComparison,
}

pub fn compare_logs(a: &[LogRecord], b: &[LogRecord], spec: &BinSpec) -> Result<CampaignReport, StatsError> {
    let bins_a = bin_conditional_stats(crate::harness::samples(a), spec)?;
    let bins_b = bin_conditional_stats(crate::harness::samples(b), spec)?;
    let comparison = compare_scenarios(&bins_a, &bins_b, MIN_BIN_COUNT)?;
    Ok(CampaignReport {
        bins_a,
        bins_b,
        comparison,
    })
}

/// Significance level and effect-size bound of the direction check.
pub const MAX_P_VALUE: f64 = 0.01;
pub const MAX_EFFECT_SIZE: f64 = -0.2;

/// Reasons the comparison fails to show lower forces with the limiter.
pub fn direction_failures(c: &ScenarioComparison) -> Vec<String> {
    let mut out = Vec::new();
    for bin in c.bins.iter().filter(|b| !b.b_not_above) {
        out.push(format!(
            "bin at {:.5} m: mean force {:.4} N with limiter exceeds {:.4} N without",
            bin.center, bin.mean_b, bin.mean_a
        ));
    }
    if !(c.welch.t < 0.0) {
        out.push(format!("Welch t = {:.4} is not negative", c.welch.t));
    }
    if !(c.welch.p < MAX_P_VALUE) {
        out.push(format!("Welch p = {:.3e} is not below {MAX_P_VALUE}", c.welch.p));
    }
    if !(c.cohens_d.d < MAX_EFFECT_SIZE) {
        out.push(format!("Cohen's d = {:.4} is not below {MAX_EFFECT_SIZE}", c.cohens_d.d));
    }
    out
}

/// Runs both scenarios of the campaign and returns the concatenated logs.
pub fn run_dental_campaign() -> Result<(Vec<LogRecord>, Vec<LogRecord>), HarnessError> {
    let run = |id| -> Result<Vec<LogRecord>, HarnessError> {
        let mut all = Vec::new();
        for cfg in dental_campaign(id) {
            all.extend(run_scenario(&cfg)?);
        }
        Ok(all)
    };
    Ok((run(ScenarioId::A)?, run(ScenarioId::B)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EyehandConfig {
    pub session: SessionConfig,
    /// Initial stylus and TCP orientation.
    pub start_orientation: UnitQuaternion,
    /// Stylus translation along the leader-base x axis per phase (m).
    pub stroke: f64,
    /// Stylus roll about its own z axis in the middle phase (rad).
    pub roll: f64,
    /// Duration of each motion phase (s).
    pub phase_time: f64,
    /// Still time after each phase before measuring (s).
    pub settle_time: f64,
    /// Minimum share of the displacement along the expected axis.
    pub min_axis_share: f64,
}

impl Default for EyehandConfig {
    fn default() -> Self {
        let start_orientation = UnitQuaternion::about(Axis::X, -std::f64::consts::FRAC_PI_2);
        let mut session = SessionConfig::default();
        session.world.initial_tcp = Pose::new(Vec3::new(0.4, 0.0, 0.3), start_orientation);
        Self {
            session,
            start_orientation,
            stroke: 0.04,
            roll: -std::f64::consts::FRAC_PI_2,
            phase_time: 2.0,
            settle_time: 0.5,
            min_axis_share: 0.98,
        }
    }
}

impl EyehandConfig {
    pub fn validate(&self) -> Result<(), crate::harness::ConfigError> {
        use crate::harness::ConfigError;
        if !self.session.world.surfaces.is_empty() {
            return Err(ConfigError::new("session.world.surfaces", "the assessment runs in free space"));
        }
        if !(self.stroke > 0.0) {
            return Err(ConfigError::new("stroke", "must be positive"));
        }
        if !(self.phase_time > 0.0) {
            return Err(ConfigError::new("phase_time", "must be positive"));
        }
        if !(self.settle_time >= 0.0) {
            return Err(ConfigError::new("settle_time", "must be non-negative"));
        }
        if !(self.min_axis_share > 0.0 && self.min_axis_share <= 1.0) {
            return Err(ConfigError::new("min_axis_share", "must lie in (0, 1]"));
        }
        self.session
            .validate()
            .map_err(|m| ConfigError::new("session", m))
    }

    /// Stylus script of the three phases, starting at `t = 0`.
    pub fn script(&self) -> LeaderScript {
        let q0 = self.start_orientation;
        let q1 = q0.multiply(&UnitQuaternion::about(Axis::Z, self.roll));
        let p0 = Vec3::new(0.0, 0.0, 0.1);
        let p1 = p0 + Vec3::x() * self.stroke;
        let p2 = p1 + Vec3::x() * self.stroke;
        let seg = self.phase_time + self.settle_time;
        let wp = |time, position, orientation| Waypoint {
            time,
            pose: Pose::new(position, orientation),
        };
        LeaderScript::new(
            vec![
                wp(0.0, p0, q0),
                wp(self.phase_time, p1, q0),
                wp(seg, p1, q0),
                wp(seg + self.phase_time, p1, q1),
                wp(2.0 * seg, p1, q1),
                wp(2.0 * seg + self.phase_time, p2, q1),
            ],
            Interpolation::Linear,
            TremorSpec::none(),
        )
        .expect("phase times increase")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    pub displacement: Vec3,
    /// Index of the largest displacement component in the robot base.
    pub dominant_axis: usize,
    /// Share of the displacement norm along the expected axis.
    pub axis_share: f64,
    pub expected_axis: Option<usize>,
    pub final_phi: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyehandReport {
    pub phases: Vec<PhaseReport>,
    pub failures: Vec<String>,
}

impl EyehandReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Translate, roll the stylus, translate again; checks that the follower
/// moves along base x in the first phase and along base z in the last.
pub fn run_eyehand_assessment(cfg: &EyehandConfig) -> Result<EyehandReport, HarnessError> {
    cfg.validate()?;
    let script = cfg.script();
    let mut session = Session::new(cfg.session.clone());
    let period = session.config().period;
    let start = script.sample(0.0);
    loop {
        match session.tick(Some(&start)) {
            TickOutcome::Engaged(_) => break,
            TickOutcome::TimedOut => return Err(HarnessError::EngagementTimedOut(session.time())),
            _ => {}
        }
    }
    let seg = cfg.phase_time + cfg.settle_time;
    let phases = [("translate", Some(0)), ("roll", None), ("translate after roll", Some(2))];
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut k = 0u64;
    for (i, (name, expected)) in phases.into_iter().enumerate() {
        let before = session.world().measurement().pose.position;
        let end = (i + 1) as f64 * seg;
        let mut phi = 0.0;
        while (k as f64) * period < end - 1e-9 {
            k += 1;
            if let TickOutcome::Control(r) = session.tick(Some(&script.sample(k as f64 * period))) {
                phi = r.phi;
            }
        }
        let displacement = session.world().measurement().pose.position - before;
        let dominant_axis = displacement.iamax();
        let norm = displacement.norm();
        let axis_share = match expected {
            Some(a) if norm > 0.0 => displacement[a].abs() / norm,
            Some(_) => 0.0,
            None => 1.0,
        };
        let passed = expected.map_or(true, |a| dominant_axis == a && axis_share >= cfg.min_axis_share);
        if !passed {
            let a = expected.unwrap();
            failures.push(format!(
                "phase {} ({name}): expected motion along {} but {:.2} % of {:.4} m was along it (dominant {})",
                i + 1,
                AXIS_NAMES[a],
                100.0 * axis_share,
                norm,
                AXIS_NAMES[dominant_axis],
            ));
        }
        reports.push(PhaseReport {
            name: name.into(),
            displacement,
            dominant_axis,
            axis_share,
            expected_axis: expected,
            final_phi: phi,
            passed,
        });
    }
    Ok(EyehandReport {
        phases: reports,
        failures,
    })
}
