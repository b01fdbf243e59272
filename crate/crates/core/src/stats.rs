//! Mergeable streaming accumulators, least-squares fits and the two-sample
//! Kolmogorov-Smirnov statistic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::parallel::Merge;

/// Welford running mean and variance; partial accumulators merge with the
/// pairwise update of Chan, Golub and LeVeque.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanVar {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n1 = self.count as f64;
        let n2 = other.count as f64;
        let n = n1 + n2;
        let delta = other.mean - self.mean;
        self.mean += delta * (n2 / n);
        self.m2 += other.m2 + delta * delta * (n1 * n2 / n);
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Sample standard deviation over `sqrt(count)`.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std_dev() / (self.count as f64).sqrt()
        }
    }
}

impl Merge for MeanVar {
    fn merge_from(&mut self, other: Self) {
        self.merge(&other);
    }
}

/// Componentwise [`MeanVar`] for complex samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComplexMeanVar {
    pub re: MeanVar,
    pub im: MeanVar,
}

impl ComplexMeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, z: Complex64) {
        self.re.push(z.re);
        self.im.push(z.im);
    }

    pub fn count(&self) -> u64 {
        self.re.count()
    }

    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.re.mean(), self.im.mean())
    }

    pub fn std_error(&self) -> Complex64 {
        Complex64::new(self.re.std_error(), self.im.std_error())
    }
}

impl Merge for ComplexMeanVar {
    fn merge_from(&mut self, other: Self) {
        self.re.merge(&other.re);
        self.im.merge(&other.im);
    }
}

/// Ordinary least-squares line `ordinate ~ slope * abscissa + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl DecayFit {
    /// Fits a line; `None` with fewer than two points or a degenerate abscissa.
    pub fn fit(abscissa: &[f64], ordinate: &[f64]) -> Option<Self> {
        let n = abscissa.len();
        if n < 2 || n != ordinate.len() {
            return None;
        }
        let nf = n as f64;
        let mx = abscissa.iter().sum::<f64>() / nf;
        let my = ordinate.iter().sum::<f64>() / nf;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (&x, &y) in abscissa.iter().zip(ordinate) {
            let (dx, dy) = (x - mx, y - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        if sxx <= 0.0 || !sxx.is_finite() {
            return None;
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
        Some(Self {
            abscissa: abscissa.to_vec(),
            ordinate: ordinate.to_vec(),
            slope,
            intercept,
            r_squared,
        })
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.abscissa
            .iter()
            .zip(&self.ordinate)
            .map(|(&x, &y)| y - (self.slope * x + self.intercept))
            .collect()
    }
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical_value(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_pass(xs: &[f64]) -> MeanVar {
        let mut m = MeanVar::new();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    #[test]
    fn welford_small() {
        let m = single_pass(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(MeanVar::new().std_error(), 0.0);
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(
            xs in prop::collection::vec(-1e3f64..1e3, 2..400),
            cuts in prop::collection::vec(0usize..400, 0..6),
        ) {
            let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c % xs.len()).collect();
            cuts.push(0);
            cuts.push(xs.len());
            cuts.sort_unstable();
            let mut merged = MeanVar::new();
            for w in cuts.windows(2) {
                merged.merge(&single_pass(&xs[w[0]..w[1]]));
            }
            let whole = single_pass(&xs);
            prop_assert_eq!(merged.count(), whole.count());
            let scale = whole.mean().abs().max(1.0);
            prop_assert!((merged.mean() - whole.mean()).abs() <= 1e-12 * scale);
            let vscale = whole.variance().max(1e-300);
            prop_assert!((merged.variance() - whole.variance()).abs() <= 1e-12 * vscale.max(1.0));
        }
    }

    #[test]
    fn fit_satisfies_normal_equations() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.5];
        let y = [2.1, 3.9, 6.2, 7.8, 11.3];
        let f = DecayFit::fit(&x, &y).unwrap();
        let r = f.residuals();
        let s0: f64 = r.iter().sum();
        let s1: f64 = r.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!(s0.abs() < 1e-9 && s1.abs() < 1e-9);
        assert!(f.r_squared > 0.99 && f.r_squared <= 1.0);
        let exact = DecayFit::fit(&[0.0, 1.0, 2.0], &[1.0, -1.0, -3.0]).unwrap();
        assert!((exact.slope + 2.0).abs() < 1e-15 && (exact.intercept - 1.0).abs() < 1e-15);
        assert!(DecayFit::fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn ks_statistic() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]) - 0.5).abs() < 1e-15);
        // c(0.01) = 1.6276
        assert!((ks_critical_value(0.01, 1, 1) / 2f64.sqrt() - 1.6276).abs() < 1e-3);
    }
}
