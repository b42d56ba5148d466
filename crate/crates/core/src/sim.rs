//! Deterministic desk-scale world: a scripted stylus with synthetic tremor,
//! a speed-limited kinematic follower and penalty contact surfaces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::se3::{Pose, Twist, UnitQuaternion, Vec3, Wrench};

/// Independent draws keyed by `(seed, stream, t)`, so samples never depend on
/// how many were drawn before.
fn keyed_rng(seed: u64, stream: u64, t: f64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t.to_bits().rotate_left(17));
    rng.set_stream(stream);
    rng
}

fn gaussian3(rng: &mut ChaCha8Rng, std: f64) -> Vec3 {
    if std == 0.0 {
        return Vec3::zeros();
    }
    let n = Normal::new(0.0, std).expect("finite standard deviation");
    Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TremorComponent {
    /// Peak displacement (m).
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    /// Displacement direction, normalized on use.
    pub direction: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TremorSpec {
    pub components: Vec<TremorComponent>,
    /// Per-axis white noise standard deviation (m).
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for TremorSpec {
    fn default() -> Self {
        Self {
            components: vec![
                TremorComponent {
                    amplitude: 3e-4,
                    frequency: 10.0,
                    phase: 0.0,
                    direction: Vec3::new(1.0, 0.5, 0.2),
                },
                TremorComponent {
                    amplitude: 1.5e-4,
                    frequency: 8.5,
                    phase: 1.0,
                    direction: Vec3::new(-0.3, 1.0, 0.4),
                },
            ],
            noise_std: 5e-5,
            seed: 0,
        }
    }
}

impl TremorSpec {
    pub fn none() -> Self {
        Self {
            components: Vec::new(),
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, c) in self.components.iter().enumerate() {
            if !(c.amplitude >= 0.0) || !c.frequency.is_finite() {
                return Err(format!("components[{i}]: amplitude must be non-negative"));
            }
            if c.amplitude > 0.0 && c.direction.norm() == 0.0 {
                return Err(format!("components[{i}]: direction must be non-zero"));
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err("noise_std must be non-negative".into());
        }
        Ok(())
    }

    pub fn displacement(&self, t: f64) -> Vec3 {
        let mut d = Vec3::zeros();
        for c in &self.components {
            if c.amplitude == 0.0 {
                continue;
            }
            let s = (2.0 * std::f64::consts::PI * c.frequency * t + c.phase).sin();
            d += c.direction.normalize() * (c.amplitude * s);
        }
        if self.noise_std > 0.0 {
            d += gaussian3(&mut keyed_rng(self.seed, 1, t), self.noise_std);
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub time: f64,
    pub pose: Pose,
}

/// Timed stylus waypoints plus tremor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderScript {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default = "TremorSpec::none")]
    pub tremor: TremorSpec,
}

impl LeaderScript {
    pub fn new(waypoints: Vec<Waypoint>, interpolation: Interpolation, tremor: TremorSpec) -> Result<Self, String> {
        let s = Self {
            waypoints,
            interpolation,
            tremor,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.waypoints.is_empty() {
            return Err("at least one waypoint is required".into());
        }
        if let Some(i) = self.waypoints.windows(2).position(|w| !(w[1].time > w[0].time)) {
            return Err(format!("waypoints[{}].time must be strictly increasing", i + 1));
        }
        self.tremor.validate()
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.time)
    }

    /// Noise-free scripted pose at time `t`.
    pub fn nominal(&self, t: f64) -> Pose {
        let wps = &self.waypoints;
        let i = wps.partition_point(|w| w.time <= t);
        if i == 0 {
            return wps[0].pose;
        }
        if i == wps.len() {
            return wps[i - 1].pose;
        }
        let (a, b) = (&wps[i - 1], &wps[i]);
        match self.interpolation {
            Interpolation::Hold => a.pose,
            Interpolation::Linear => {
                let s = (t - a.time) / (b.time - a.time);
                if s == 0.0 {
                    return a.pose;
                }
                Pose::new(
                    a.pose.position + (b.pose.position - a.pose.position) * s,
                    a.pose.orientation.slerp(&b.pose.orientation, s),
                )
            }
        }
    }

    pub fn sample(&self, t: f64) -> Pose {
        let mut p = self.nominal(t);
        p.position += self.tremor.displacement(t);
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowerLimits {
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
}

impl Default for FollowerLimits {
    fn default() -> Self {
        Self {
            max_linear_speed: 0.25,
            max_angular_speed: 1.5,
        }
    }
}

/// Position-controlled robot: moves toward the command, limited in speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerModel {
    pub pose: Pose,
    pub limits: FollowerLimits,
    /// Velocity over the last step.
    pub velocity: Twist,
}

impl FollowerModel {
    pub fn new(pose: Pose, limits: FollowerLimits) -> Self {
        Self {
            pose,
            limits,
            velocity: Twist::zero(),
        }
    }

    pub fn step(&mut self, commanded: &Pose, period: f64) -> Pose {
        let prev = self.pose;
        let delta = commanded.position - prev.position;
        let max_step = self.limits.max_linear_speed * period;
        let position = if delta.norm() <= max_step {
            commanded.position
        } else {
            prev.position + delta * (max_step / delta.norm())
        };
        let angle = prev.orientation.angle_to(&commanded.orientation);
        let max_turn = self.limits.max_angular_speed * period;
        let orientation = if angle <= max_turn {
            commanded.orientation
        } else {
            prev.orientation.slerp(&commanded.orientation, max_turn / angle)
        };
        self.pose = Pose::new(position, orientation);
        let rel = prev.orientation.conjugate() * orientation;
        self.velocity = Twist::new(
            (position - prev.position) / period,
            prev.orientation.rotate(&rel.to_rotation_vector()) / period,
        );
        self.pose
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// Half space below `point` along the outward `normal`.
    Plane { point: Vec3, normal: Vec3 },
    Sphere { center: Vec3, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSurface {
    pub geometry: Geometry,
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    #[serde(default)]
    pub damping: f64,
}

impl ContactSurface {
    pub fn plane(point: Vec3, normal: Vec3, stiffness: f64, damping: f64) -> Self {
        Self {
            geometry: Geometry::Plane {
                point,
                normal: normal.normalize(),
            },
            stiffness,
            damping,
        }
    }

    pub fn sphere(center: Vec3, radius: f64, stiffness: f64, damping: f64) -> Self {
        Self {
            geometry: Geometry::Sphere { center, radius },
            stiffness,
            damping,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.stiffness > 0.0) || !(self.damping >= 0.0) {
            return Err("stiffness must be positive and damping non-negative".into());
        }
        match self.geometry {
            Geometry::Plane { normal, .. } if (normal.norm() - 1.0).abs() > 1e-9 => {
                Err("plane normal must be a unit vector".into())
            }
            Geometry::Sphere { radius, .. } if !(radius > 0.0) => Err("sphere radius must be positive".into()),
            _ => Ok(()),
        }
    }

    /// Penetration depth and outward normal at `p`; depth ≤ 0 means outside.
    pub fn penetration(&self, p: &Vec3) -> (f64, Vec3) {
        match self.geometry {
            Geometry::Plane { point, normal } => ((point - p).dot(&normal), normal),
            Geometry::Sphere { center, radius } => {
                let d = p - center;
                let n = d.norm();
                let normal = if n > 0.0 { d / n } else { Vec3::z() };
                (radius - n, normal)
            }
        }
    }

    /// Kelvin-Voigt force on a point at `p` moving with `v`, along the outward normal.
    pub fn force(&self, p: &Vec3, v: &Vec3) -> Vec3 {
        let (depth, normal) = self.penetration(p);
        if depth <= 0.0 {
            return Vec3::zeros();
        }
        let magnitude = self.stiffness * depth - self.damping * v.dot(&normal);
        normal * magnitude.max(0.0)
    }
}

/// Summed point-contact wrench at the tool tip, in the base frame.
pub fn contact_wrench(tip: &Vec3, tip_velocity: &Vec3, surfaces: &[ContactSurface]) -> Wrench {
    Wrench::from_force(surfaces.iter().map(|s| s.force(tip, tip_velocity)).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub surfaces: Vec<ContactSurface>,
    pub follower: FollowerLimits,
    pub initial_tcp: Pose,
    /// Per-axis force sensor noise (N).
    pub force_noise_std: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            surfaces: Vec::new(),
            follower: FollowerLimits::default(),
            initial_tcp: Pose::identity(),
            force_noise_std: 0.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.surfaces.iter().enumerate() {
            s.validate().map_err(|e| format!("surfaces[{i}]: {e}"))?;
        }
        if !(self.follower.max_linear_speed > 0.0 && self.follower.max_angular_speed > 0.0) {
            return Err("follower speed limits must be positive".into());
        }
        if !(self.force_noise_std >= 0.0) {
            return Err("force_noise_std must be non-negative".into());
        }
        Ok(())
    }
}

/// What the robot side reports after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub pose: Pose,
    /// Contact wrench in the TCP frame.
    pub wrench: Wrench,
    /// Contact wrench in the base frame, without sensor noise.
    pub base_wrench: Wrench,
}

#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
    follower: FollowerModel,
    tick: u64,
    last: Measurement,
}

impl World {
    pub fn new(cfg: WorldConfig) -> Self {
        let follower = FollowerModel::new(cfg.initial_tcp, cfg.follower);
        let mut w = Self {
            cfg,
            follower,
            tick: 0,
            last: Measurement {
                pose: follower.pose,
                wrench: Wrench::zero(),
                base_wrench: Wrench::zero(),
            },
        };
        w.last = w.measure();
        w
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn measurement(&self) -> &Measurement {
        &self.last
    }

    pub fn follower(&self) -> &FollowerModel {
        &self.follower
    }

    fn measure(&self) -> Measurement {
        let pose = self.follower.pose;
        let base = contact_wrench(&pose.position, &self.follower.velocity.linear, &self.cfg.surfaces);
        let mut wrench = base.rotated(&pose.rotation().transpose());
        if self.cfg.force_noise_std > 0.0 {
            let mut rng = keyed_rng(self.cfg.seed, 2, self.tick as f64);
            wrench.force += gaussian3(&mut rng, self.cfg.force_noise_std);
        }
        Measurement {
            pose,
            wrench,
            base_wrench: base,
        }
    }

    /// Moves the follower toward `commanded` for one period and measures.
    pub fn step(&mut self, commanded: &Pose, period: f64) -> Measurement {
        self.follower.step(commanded, period);
        self.tick += 1;
        self.last = self.measure();
        self.last
    }
}

/// Rotation taking the z axis onto `dir`, with the x axis kept as close to
/// `hint` as possible.
pub fn look_along(dir: &Vec3, hint: &Vec3) -> UnitQuaternion {
    let z = dir.normalize();
    let mut x = hint - z * hint.dot(&z);
    if x.norm() < 1e-9 {
        x = z.cross(&Vec3::x());
        if x.norm() < 1e-9 {
            x = z.cross(&Vec3::y());
        }
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
    crate::se3::Rotation3::from_matrix(&m).to_quaternion()
}
