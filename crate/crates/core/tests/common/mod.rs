//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the crate's own numerics.

#![allow(dead_code)]

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use teleop_core::se3::{UnitQuaternion, Vec3};

pub fn textbook_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn textbook_var(x: &[f64]) -> f64 {
    let m = textbook_mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

fn textbook_median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// `(t, dof, two-sided p)` for Welch's unequal-variance test.
pub fn textbook_welch(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (vx, vy) = (textbook_var(x) / nx, textbook_var(y) / ny);
    let t = (textbook_mean(x) - textbook_mean(y)) / (vx + vy).sqrt();
    let dof = (vx + vy).powi(2) / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
    (t, dof, 2.0 * dist.sf(t.abs()))
}

/// Cohen's d of `x` relative to `y` with the pooled standard deviation.
pub fn textbook_cohens_d(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let pooled = (((nx - 1.0) * textbook_var(x) + (ny - 1.0) * textbook_var(y)) / (nx + ny - 2.0)).sqrt();
    (textbook_mean(x) - textbook_mean(y)) / pooled
}

/// Median-centred Levene test for two groups: one-way ANOVA on the absolute
/// deviations from each group median.
pub fn textbook_levene(x: &[f64], y: &[f64]) -> (f64, f64) {
    let zx: Vec<f64> = {
        let m = textbook_median(x);
        x.iter().map(|v| (v - m).abs()).collect()
    };
    let zy: Vec<f64> = {
        let m = textbook_median(y);
        y.iter().map(|v| (v - m).abs()).collect()
    };
    let n = (x.len() + y.len()) as f64;
    let grand = (zx.iter().sum::<f64>() + zy.iter().sum::<f64>()) / n;
    let (mx, my) = (textbook_mean(&zx), textbook_mean(&zy));
    let between = zx.len() as f64 * (mx - grand).powi(2) + zy.len() as f64 * (my - grand).powi(2);
    let within = zx.iter().map(|z| (z - mx).powi(2)).sum::<f64>() + zy.iter().map(|z| (z - my).powi(2)).sum::<f64>();
    let w = (n - 2.0) * between / within;
    let p = FisherSnedecor::new(1.0, n - 2.0).unwrap().sf(w);
    (w, p)
}

/// Random pair of samples with random sizes, location and spread.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let group = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(5..80);
        let loc = rng.random_range(-5.0..5.0);
        let scale = rng.random_range(0.1..4.0);
        (0..n).map(|_| loc + scale * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()
    };
    (group(rng), group(rng))
}

/// Average orientation as the dominant eigenvector of the dense outer-product
/// sum, from a full symmetric eigendecomposition.
pub fn eigen_average(samples: &[UnitQuaternion]) -> UnitQuaternion {
    let m: Matrix4<f64> = samples
        .iter()
        .map(|q| {
            let c = Vector4::new(q.w(), q.x(), q.y(), q.z());
            c * c.transpose()
        })
        .sum();
    let eig = SymmetricEigen::new(m);
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let v = eig.eigenvectors.column(imax);
    UnitQuaternion::new(v[0], v[1], v[2], v[3])
}

/// Sign-invariant angular distance between two orientations.
pub fn angular_distance(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
    let d = (a.w() * b.w() + a.x() * b.x() + a.y() * b.y() + a.z() * b.z()).abs().min(1.0);
    2.0 * d.acos()
}

/// Orientation near `centre` with a random rotation of up to `spread` rad.
pub fn perturbed(rng: &mut ChaCha8Rng, centre: &UnitQuaternion, spread: f64) -> UnitQuaternion {
    let axis = random_unit(rng);
    *centre * UnitQuaternion::from_rotation_vector(&(axis * rng.random_range(0.0..spread)))
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_orientation(rng: &mut ChaCha8Rng) -> UnitQuaternion {
    UnitQuaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
}

/// Classical RK4 for `m ẍ + d ẋ + k x = f` with `f` held constant, taking
/// `substeps` steps per `period`. Returns the position at every period.
pub fn rk4_msd(m: f64, d: f64, k: f64, f: f64, period: f64, substeps: usize, periods: usize) -> Vec<f64> {
    let h = period / substeps as f64;
    let acc = |x: f64, v: f64| (f - d * v - k * x) / m;
    let (mut x, mut v) = (0.0, 0.0);
    let mut out = Vec::with_capacity(periods);
    for _ in 0..periods {
        for _ in 0..substeps {
            let (k1x, k1v) = (v, acc(x, v));
            let (k2x, k2v) = (v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v));
            let (k3x, k3v) = (v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v));
            let (k4x, k4v) = (v + h * k3v, acc(x + h * k3x, v + h * k3v));
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        out.push(x);
    }
    out
}
