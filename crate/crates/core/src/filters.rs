//! Sliding-window moving averages with O(1) updates.
//!
//! Positions and forces keep a running sum over a ring buffer. Orientations
//! keep the running sum of outer products `Σ q qᵀ`; the average is the
//! dominant eigenvector of that matrix divided by the sample count (Markley's
//! quaternion mean). Both running sums are rebuilt from the buffer once every
//! `n` updates so floating-point drift stays bounded.

use std::collections::VecDeque;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::se3::{Pose, UnitQuaternion, Vec3};

pub const DEFAULT_POSE_WINDOW: usize = 16;
pub const DEFAULT_FORCE_WINDOW: usize = 32;

/// Moving average over the last `n` 3-vectors.
#[derive(Debug, Clone)]
pub struct VectorWindow {
    capacity: usize,
    samples: VecDeque<Vec3>,
    sum: Vec3,
    since_rebuild: usize,
}

impl VectorWindow {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window size must be positive");
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
            sum: Vec3::zeros(),
            since_rebuild: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Adds a sample and returns the mean of the buffered samples.
    pub fn push(&mut self, p: Vec3) -> Vec3 {
        if self.samples.len() == self.capacity {
            if let Some(old) = self.samples.pop_front() {
                self.sum -= old;
            }
        }
        self.samples.push_back(p);
        self.sum += p;
        self.since_rebuild += 1;
        if self.since_rebuild >= self.capacity {
            self.sum = self.samples.iter().sum();
            self.since_rebuild = 0;
        }
        self.sum / self.samples.len() as f64
    }

    pub fn mean(&self) -> Option<Vec3> {
        (!self.samples.is_empty()).then(|| self.sum / self.samples.len() as f64)
    }

    pub fn last(&self) -> Option<Vec3> {
        self.samples.back().copied()
    }

    pub fn sum(&self) -> Vec3 {
        self.sum
    }

    pub fn samples(&self) -> impl Iterator<Item = &Vec3> {
        self.samples.iter()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.sum = Vec3::zeros();
        self.since_rebuild = 0;
    }
}

pub const EIGEN_MAX_ITERATIONS: usize = 200;
pub const EIGEN_TOLERANCE: f64 = 1e-12;

/// Outcome of the dominant-eigenvector solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominantEigen {
    pub vector: Vector4<f64>,
    /// Rayleigh quotient of `vector`.
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out; `vector` is the last iterate.
    pub converged: bool,
    /// The top eigenvalue is (numerically) repeated, so any vector in its
    /// eigenspace is an equally valid answer.
    pub degenerate: bool,
}

/// Dominant eigenvector of a symmetric positive semidefinite 4×4 matrix.
///
/// Power iteration seeded with `seed`. When plain iteration stalls (close
/// leading eigenvalues) the iteration matrix is repeatedly squared, which
/// squares the convergence ratio each time. Convergence is declared when the
/// residual `‖M v − λ v‖` drops below `EIGEN_TOLERANCE · λ`.
pub fn dominant_eigenvector_sym4(m: &Matrix4<f64>, seed: &Vector4<f64>) -> DominantEigen {
    let scale = m.trace().abs().max(f64::MIN_POSITIVE);
    let mut v = initial_vector(m, seed, scale);
    let mut step = *m / scale;
    let mut plain_steps = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut value = v.dot(&(m * v));

    while iterations < EIGEN_MAX_ITERATIONS {
        let mv = m * v;
        value = v.dot(&mv);
        if (mv - v * value).norm() <= EIGEN_TOLERANCE * value.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        let w = step * v;
        let n = w.norm();
        if n == 0.0 || !n.is_finite() {
            break;
        }
        v = w / n;
        iterations += 1;
        plain_steps += 1;
        if plain_steps == 8 {
            // Normalize by the trace so repeated squaring never overflows.
            let sq = step * step;
            step = sq / sq.trace().max(f64::MIN_POSITIVE);
            plain_steps = 0;
            iterations += 1;
        }
    }
    let degenerate = is_degenerate(m, &v, value);
    DominantEigen {
        vector: v,
        value,
        iterations,
        converged,
        degenerate,
    }
}

fn initial_vector(m: &Matrix4<f64>, seed: &Vector4<f64>, scale: f64) -> Vector4<f64> {
    let n = seed.norm();
    if n > 0.0 && n.is_finite() {
        let s = seed / n;
        // A seed (almost) in the null space carries no dominant component.
        if (m * s).norm() > 1e-6 * scale {
            return s;
        }
    }
    let col = (0..4)
        .max_by(|&i, &j| m.column(i).norm().total_cmp(&m.column(j).norm()))
        .unwrap_or(0);
    let c: Vector4<f64> = m.column(col).into_owned();
    let cn = c.norm();
    if cn > 0.0 {
        c / cn
    } else {
        Vector4::new(1.0, 0.0, 0.0, 0.0)
    }
}

/// Checks whether the second eigenvalue is within a relative 1e-9 of the first.
fn is_degenerate(m: &Matrix4<f64>, v: &Vector4<f64>, value: f64) -> bool {
    if value <= 0.0 {
        return true;
    }
    let deflated = m - v * v.transpose() * value;
    let rest = deflated.trace();
    if rest < (1.0 - 1e-9) * value {
        // The remaining eigenvalues sum to less than the top one.
        return false;
    }
    // Estimate the next eigenvalue by squared power iteration on the deflated matrix.
    let mut p = deflated / rest.max(f64::MIN_POSITIVE);
    for _ in 0..6 {
        let sq = p * p;
        p = sq / sq.trace().max(f64::MIN_POSITIVE);
    }
    let col = (0..4)
        .max_by(|&i, &j| p.column(i).norm().total_cmp(&p.column(j).norm()))
        .unwrap_or(0);
    let mut u: Vector4<f64> = p.column(col).into_owned();
    let un = u.norm();
    if un == 0.0 {
        return false;
    }
    u /= un;
    let second = u.dot(&(deflated * u));
    value - second <= 1e-9 * value
}

/// Moving average over the last `n` unit quaternions.
#[derive(Debug, Clone)]
pub struct QuaternionWindow {
    capacity: usize,
    samples: VecDeque<UnitQuaternion>,
    outer: Matrix4<f64>,
    since_rebuild: usize,
    estimate: Option<UnitQuaternion>,
    last_solve: Option<DominantEigen>,
}

impl QuaternionWindow {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window size must be positive");
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
            outer: Matrix4::zeros(),
            since_rebuild: 0,
            estimate: None,
            last_solve: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Adds a sample and returns the average orientation of the window.
    ///
    /// The sample is sign-flipped onto the hemisphere of the previous buffered
    /// sample first. The returned quaternion is on the hemisphere of `q`.
    pub fn push(&mut self, q: UnitQuaternion) -> UnitQuaternion {
        let q = match self.samples.back() {
            Some(prev) if prev.dot(&q) < 0.0 => q.negated(),
            _ => q,
        };
        if self.samples.len() == self.capacity {
            if let Some(old) = self.samples.pop_front() {
                let o = old.coords();
                self.outer -= o * o.transpose();
            }
        }
        let c = q.coords();
        self.samples.push_back(q);
        self.outer += c * c.transpose();
        self.since_rebuild += 1;
        if self.since_rebuild >= self.capacity {
            self.outer = self
                .samples
                .iter()
                .map(|s| {
                    let c = s.coords();
                    c * c.transpose()
                })
                .sum();
            self.since_rebuild = 0;
        }

        let mean = self.outer / self.samples.len() as f64;
        let seed = self.estimate.unwrap_or(q).coords();
        let solve = dominant_eigenvector_sym4(&mean, &seed);
        let mut out = UnitQuaternion::from_vector4(&solve.vector);
        if out.dot(&q) < 0.0 {
            out = out.negated();
        }
        self.estimate = Some(out);
        self.last_solve = Some(solve);
        out
    }

    /// Current average, or the identity before any sample.
    pub fn current(&self) -> UnitQuaternion {
        self.estimate.unwrap_or_default()
    }

    pub fn last_solve(&self) -> Option<&DominantEigen> {
        self.last_solve.as_ref()
    }

    pub fn outer_sum(&self) -> &Matrix4<f64> {
        &self.outer
    }

    pub fn samples(&self) -> impl Iterator<Item = &UnitQuaternion> {
        self.samples.iter()
    }
}

/// Output of the pose filter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FilteredPose {
    pub position: Vec3,
    pub orientation: UnitQuaternion,
}

impl From<FilteredPose> for Pose {
    fn from(f: FilteredPose) -> Self {
        Pose::new(f.position, f.orientation)
    }
}

impl From<Pose> for FilteredPose {
    fn from(p: Pose) -> Self {
        FilteredPose {
            position: p.position,
            orientation: p.orientation,
        }
    }
}

/// Position and orientation windows of equal length.
#[derive(Debug, Clone)]
pub struct PoseFilter {
    positions: VectorWindow,
    orientations: QuaternionWindow,
    last: Option<FilteredPose>,
}

impl PoseFilter {
    pub fn new(window: usize) -> Self {
        Self {
            positions: VectorWindow::new(window),
            orientations: QuaternionWindow::new(window),
            last: None,
        }
    }

    pub fn push(&mut self, pose: &Pose) -> FilteredPose {
        let out = FilteredPose {
            position: self.positions.push(pose.position),
            orientation: self.orientations.push(pose.orientation),
        };
        self.last = Some(out);
        out
    }

    /// Last filter output, or the identity pose before any sample.
    pub fn current(&self) -> FilteredPose {
        self.last.unwrap_or_default()
    }

    pub fn window(&self) -> usize {
        self.positions.capacity()
    }

    pub fn is_full(&self) -> bool {
        self.positions.len() == self.positions.capacity()
    }

    pub fn quaternions(&self) -> &QuaternionWindow {
        &self.orientations
    }
}
