//! Descriptive and correlational statistics.
//!
//! Slice sums go through [`fsum`], which is correctly rounded and therefore
//! independent of summation order and platform. Streaming accumulations use
//! [`CompensatedSum`]. Central moments use the biased, divide-by-N
//! convention.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Correctly rounded sum of finite values (Shewchuk's partials algorithm,
/// with round-half-even on the final step).
///
/// The result is the exact sum rounded once, so it does not depend on the
/// order of the inputs.
pub fn fsum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

pub fn sum(xs: &[f64]) -> f64 {
    fsum(xs.iter().copied())
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(AuditError::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(sum(xs) / xs.len() as f64)
}

/// Biased central moment of order `order` around `center`.
fn central_moment(xs: &[f64], center: f64, order: i32) -> f64 {
    fsum(xs.iter().map(|&x| (x - center).powi(order))) / xs.len() as f64
}

/// Population (divide-by-N) standard deviation.
pub fn population_std(xs: &[f64]) -> Result<f64> {
    let m = mean(xs)?;
    Ok(central_moment(xs, m, 2).sqrt())
}

/// Sample (divide-by-N-1) standard deviation.
pub fn sample_std(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(AuditError::TooFewSamples {
            needed: 2,
            got: xs.len(),
        });
    }
    let m = mean(xs)?;
    let n = xs.len() as f64;
    Ok((central_moment(xs, m, 2) * n / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub skewness: f64,
    pub n: usize,
}

/// Mean, biased second and third central moments, and skewness `m3 / m2^(3/2)`.
pub fn moments(xs: &[f64]) -> Result<MomentSummary> {
    if xs.len() < 3 {
        return Err(AuditError::TooFewSamples {
            needed: 3,
            got: xs.len(),
        });
    }
    let mean = mean(xs)?;
    let m2 = central_moment(xs, mean, 2);
    let m3 = central_moment(xs, mean, 3);
    if m2 <= 0.0 {
        return Err(AuditError::UndefinedSkew);
    }
    // m2 * sqrt(m2) instead of powf(1.5): sqrt is correctly rounded everywhere.
    let skewness = m3 / (m2 * m2.sqrt());
    Ok(MomentSummary {
        mean,
        m2,
        m3,
        skewness,
        n: xs.len(),
    })
}

pub fn skewness(xs: &[f64]) -> Result<f64> {
    moments(xs).map(|m| m.skewness)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(AuditError::Shape(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(AuditError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    Ok(())
}

fn product_moment(x: &[f64], y: &[f64]) -> Result<f64> {
    let mx = mean(x)?;
    let my = mean(y)?;
    let mut sxy = CompensatedSum::new();
    let mut sxx = CompensatedSum::new();
    let mut syy = CompensatedSum::new();
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    let (sxx, syy) = (sxx.value(), syy.value());
    if sxx <= 0.0 {
        return Err(AuditError::ZeroVariance("first series"));
    }
    if syy <= 0.0 {
        return Err(AuditError::ZeroVariance("second series"));
    }
    Ok((sxy.value() / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value for a product-moment correlation `rho` over `n` pairs,
/// from Student's t with `n - 2` degrees of freedom.
///
/// Evaluated as the regularized incomplete beta `I_{df/(df+t^2)}(df/2, 1/2)`,
/// which keeps full relative precision deep into the tail (p far below 1e-90).
pub fn correlation_p_value(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let r2 = rho * rho;
    if r2 >= 1.0 {
        return 0.0;
    }
    // df / (df + t^2) with t^2 = df * r2 / (1 - r2) simplifies to 1 - r2.
    let x = 1.0 - r2;
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Pearson's product-moment correlation with a parametric two-sided p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let rho = product_moment(x, y)?;
    Ok(CorrelationResult {
        rho,
        p_value: correlation_p_value(rho, x.len()),
        n: x.len(),
    })
}

/// Pearson's rho with a two-sided permutation p-value, for small samples.
///
/// Shuffles `y` against fixed `x`; the observed pairing counts toward both
/// numerator and denominator.
pub fn pearson_permutation(
    x: &[f64],
    y: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    if permutations == 0 {
        return Err(AuditError::Size("permutations must be >= 1".into()));
    }
    let rho = product_moment(x, y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = y.to_vec();
    let threshold = rho.abs() * (1.0 - 1e-12);
    let mut hits = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        if product_moment(x, &shuffled)?.abs() >= threshold {
            hits += 1;
        }
    }
    Ok(CorrelationResult {
        rho,
        p_value: (hits + 1) as f64 / (permutations + 1) as f64,
        n: x.len(),
    })
}
