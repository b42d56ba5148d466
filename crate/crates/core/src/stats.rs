//! Binned conditional moments and two-sample tests.
//!
//! Distribution tails go through the regularized incomplete beta function,
//! evaluated with the modified Lentz continued fraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample of size {0} is too small (need at least 2)")]
    TooSmall(usize),
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error("pooled standard deviation is zero")]
    ZeroPooledSd,
    #[error("all absolute deviations from the group medians are zero")]
    DegenerateSpread,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("invalid bin specification: {0}")]
    InvalidBins(String),
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the approximation in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges fastest on the side of the mean.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| ≥ |t|)` of Student's t.
pub fn student_t_two_sided(t: f64, dof: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t))
}

/// Upper tail `P(F ≥ f)` of the F distribution.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn check(x: &[f64]) -> Result<(), StatsError> {
    if x.len() < 2 {
        return Err(StatsError::TooSmall(x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    /// Two-sided.
    pub p: f64,
}

/// Welch's unequal-variance t-test of `mean(x) - mean(y)`.
pub fn welch_t(x: &[f64], y: &[f64]) -> Result<WelchResult, StatsError> {
    check(x)?;
    check(y)?;
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (vx, vy) = (variance(x) / nx, variance(y) / ny);
    let se2 = vx + vy;
    if se2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = (mean(x) - mean(y)) / se2.sqrt();
    let dof = se2 * se2 / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
    Ok(WelchResult {
        t,
        dof,
        p: student_t_two_sided(t, dof),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub d: f64,
    /// 95 % interval from the large-sample normal approximation of the
    /// standard error of d.
    pub ci95: [f64; 2],
}

const Z_975: f64 = 1.959_963_984_540_054;

/// Cohen's d of `x` relative to `y` with the pooled standard deviation.
pub fn cohens_d(x: &[f64], y: &[f64]) -> Result<EffectSize, StatsError> {
    check(x)?;
    check(y)?;
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let pooled = (((nx - 1.0) * variance(x) + (ny - 1.0) * variance(y)) / (nx + ny - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(StatsError::ZeroPooledSd);
    }
    let d = (mean(x) - mean(y)) / pooled;
    let se = ((nx + ny) / (nx * ny) + d * d / (2.0 * (nx + ny))).sqrt();
    Ok(EffectSize {
        d,
        ci95: [d - Z_975 * se, d + Z_975 * se],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeveneResult {
    pub w: f64,
    pub p: f64,
}

/// Brown–Forsythe test for equal variances (deviations from the median).
pub fn levene_test(x: &[f64], y: &[f64]) -> Result<LeveneResult, StatsError> {
    check(x)?;
    check(y)?;
    let dev = |s: &[f64]| {
        let m = median(s);
        s.iter().map(|v| (v - m).abs()).collect::<Vec<_>>()
    };
    let (zx, zy) = (dev(x), dev(y));
    let (mx, my) = (mean(&zx), mean(&zy));
    let n = (zx.len() + zy.len()) as f64;
    let grand = (zx.iter().sum::<f64>() + zy.iter().sum::<f64>()) / n;
    let between = zx.len() as f64 * (mx - grand).powi(2) + zy.len() as f64 * (my - grand).powi(2);
    let within = zx.iter().map(|z| (z - mx).powi(2)).sum::<f64>() + zy.iter().map(|z| (z - my).powi(2)).sum::<f64>();
    if within == 0.0 {
        if between == 0.0 {
            return Err(StatsError::DegenerateSpread);
        }
        return Ok(LeveneResult { w: f64::INFINITY, p: 0.0 });
    }
    let (k, dof2) = (2.0, n - 2.0);
    let w = dof2 / (k - 1.0) * between / within;
    Ok(LeveneResult {
        w,
        p: f_survival(w, k - 1.0, dof2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub b_min: f64,
    pub b_max: f64,
    pub b_step: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            b_min: 0.0,
            b_max: 0.007,
            b_step: 0.0001,
        }
    }
}

impl BinSpec {
    pub fn validate(&self) -> Result<(), StatsError> {
        if !(self.b_step > 0.0 && self.b_step.is_finite()) {
            return Err(StatsError::InvalidBins("b_step must be positive".into()));
        }
        if !(self.b_max > self.b_min && self.b_min.is_finite() && self.b_max.is_finite()) {
            return Err(StatsError::InvalidBins("b_max must exceed b_min".into()));
        }
        Ok(())
    }

    /// Number of bins; a trailing partial step counts as a bin.
    pub fn count(&self) -> usize {
        let n = (self.b_max - self.b_min) / self.b_step;
        let whole = n.round();
        let n = if (n - whole).abs() <= 1e-9 * whole.max(1.0) { whole } else { n.ceil() };
        n.max(1.0) as usize
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.b_min + i as f64 * self.b_step
    }

    pub fn upper(&self, i: usize) -> f64 {
        if i + 1 == self.count() {
            self.b_max
        } else {
            self.lower(i + 1)
        }
    }

    /// Bin of `b`: `[lower, upper)`, with the last bin also holding `b_max`.
    /// Values within a relative 1e-9 of an edge count as lying on it, so
    /// decimal inputs such as 0.0003 land where they read.
    pub fn index(&self, b: f64) -> Option<usize> {
        if !(b >= self.b_min && b <= self.b_max) {
            return None;
        }
        let q = (b - self.b_min) / self.b_step;
        let edge = q.round();
        let i = if (q - edge).abs() <= 1e-9 * edge.max(1.0) { edge } else { q.floor() };
        Some((i as usize).min(self.count() - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub count: usize,
    pub sum: f64,
    /// `None` for an empty bin.
    pub mean: Option<f64>,
    /// Unbiased; `None` below two samples.
    pub variance: Option<f64>,
}

impl Bin {
    pub fn is_flagged(&self) -> bool {
        self.variance.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub spec: BinSpec,
    pub bins: Vec<Bin>,
    /// Samples whose `b` fell outside the range.
    pub out_of_range: usize,
}

/// Conditional mean and variance of `a` per bin of `b`.
pub fn bin_conditional_stats<I>(samples: I, spec: &BinSpec) -> Result<BinStats, StatsError>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    spec.validate()?;
    let n = spec.count();
    // Welford accumulators per bin.
    let mut acc = vec![(0usize, 0.0f64, 0.0f64, 0.0f64); n];
    let mut out_of_range = 0;
    for (a, b) in samples {
        let Some(i) = spec.index(b) else {
            out_of_range += 1;
            continue;
        };
        let (count, m, m2, sum) = &mut acc[i];
        *count += 1;
        *sum += a;
        let delta = a - *m;
        *m += delta / *count as f64;
        *m2 += delta * (a - *m);
    }
    let bins = acc
        .iter()
        .enumerate()
        .map(|(i, &(count, m, m2, sum))| {
            let (lower, upper) = (spec.lower(i), spec.upper(i));
            Bin {
                lower,
                upper,
                center: 0.5 * (lower + upper),
                count,
                sum,
                mean: (count > 0).then_some(m),
                variance: (count > 1).then(|| m2 / (count - 1) as f64),
            }
        })
        .collect();
    Ok(BinStats {
        spec: *spec,
        bins,
        out_of_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub center: f64,
    pub count_a: usize,
    pub count_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub variance_a: f64,
    pub variance_b: f64,
    /// `mean_b <= mean_a`.
    pub b_not_above: bool,
}

/// Scenario B against scenario A over the bins both populate well enough.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioComparison {
    pub spec: BinSpec,
    pub min_count: usize,
    pub bins: Vec<BinComparison>,
    /// Every compared bin has B's mean at or below A's.
    pub dominance: bool,
    /// Tests on the per-bin conditional means, B relative to A.
    pub welch: WelchResult,
    pub cohens_d: EffectSize,
    /// Equal-variance test on the same per-bin means, deciding whether the
    /// unequal-variance t-test is warranted.
    pub levene: LeveneResult,
}

pub fn compare_scenarios(
    a: &BinStats,
    b: &BinStats,
    min_count: usize,
) -> Result<ScenarioComparison, StatsError> {
    if a.spec != b.spec {
        return Err(StatsError::InvalidBins("scenarios were binned differently".into()));
    }
    let bins: Vec<BinComparison> = a
        .bins
        .iter()
        .zip(&b.bins)
        .filter(|(x, y)| x.count >= min_count.max(2) && y.count >= min_count.max(2))
        .map(|(x, y)| {
            let (mean_a, mean_b) = (x.mean.unwrap_or(0.0), y.mean.unwrap_or(0.0));
            BinComparison {
                center: x.center,
                count_a: x.count,
                count_b: y.count,
                mean_a,
                mean_b,
                variance_a: x.variance.unwrap_or(0.0),
                variance_b: y.variance.unwrap_or(0.0),
                b_not_above: mean_b <= mean_a,
            }
        })
        .collect();
    let means_a: Vec<f64> = bins.iter().map(|c| c.mean_a).collect();
    let means_b: Vec<f64> = bins.iter().map(|c| c.mean_b).collect();
    Ok(ScenarioComparison {
        spec: a.spec,
        min_count,
        dominance: bins.iter().all(|c| c.b_not_above),
        welch: welch_t(&means_b, &means_a)?,
        cohens_d: cohens_d(&means_b, &means_a)?,
        levene: levene_test(&means_b, &means_a)?,
        bins,
    })
}
