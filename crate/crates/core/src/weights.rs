//! The node-weight law, criticality constants and the phase diagram.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::Runner;
use crate::report::EstimateReport;
use crate::rng::{trial_seed, Domain, PhiloxStream};
use crate::stats::MeanVar;

/// Mean of the real part of a node weight, `2 ln 2`.
pub const REAL_MEAN: f64 = 2.0 * LN_2;
/// Standard deviation of the real part of a node weight, `sqrt(2 ln 2)`.
pub const REAL_SD: f64 = 1.177_410_022_515_474_7;
/// Multiplier of `beta * X` in the phase of a leaf weight.
pub const PHASE_SCALE: f64 = REAL_SD;

/// Absolute tolerance on `gamma + beta - 1` for boundary membership.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum Phase {
    PhaseI,
    BoundaryI_II,
    /// Phases II and III, and the arcs of the diagram other than `gamma + beta = 1`.
    Outside,
}

/// Classifies `(gamma, beta)` in the nonnegative quadrant.
pub fn classify_phase(gamma: f64, beta: f64) -> Result<Phase> {
    if !(gamma.is_finite() && beta.is_finite()) || gamma < 0.0 || beta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma and beta must be finite and nonnegative, got ({gamma}, {beta})"
        )));
    }
    let interior_gamma = gamma > 0.5 && gamma < 1.0;
    let phase = if interior_gamma && (gamma + beta - 1.0).abs() <= BOUNDARY_TOL {
        Phase::BoundaryI_II
    } else if (gamma <= 0.5 && gamma * gamma + beta * beta < 0.5)
        || (interior_gamma && gamma + beta < 1.0)
    {
        Phase::PhaseI
    } else {
        Phase::Outside
    };
    Ok(phase)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    gamma: f64,
    beta: f64,
    phase: Phase,
}

impl ModelParams {
    pub fn new(gamma: f64, beta: f64) -> Result<Self> {
        let phase = classify_phase(gamma, beta)?;
        Ok(Self { gamma, beta, phase })
    }

    /// The boundary point `(gamma, 1 - gamma)`.
    pub fn boundary(gamma: f64) -> Result<Self> {
        let p = Self::new(gamma, 1.0 - gamma)?;
        if p.phase != Phase::BoundaryI_II {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} is not on the I/II boundary"
            )));
        }
        Ok(p)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// `E[M_1] = 2^(1 + gamma^2 - 2 gamma - beta^2)`; `E[M_n]` is its n-th power.
    pub fn mean_factor(&self) -> f64 {
        mean_factor(self)
    }

    /// `exp(-gamma v + i beta sqrt(2 ln 2) x)`.
    #[inline]
    pub fn weight(&self, v: f64, x: f64) -> Complex64 {
        Complex64::from_polar((-self.gamma * v).exp(), self.beta * PHASE_SCALE * x)
    }

    /// `exp(-gamma v)`, the modulus of [`ModelParams::weight`].
    #[inline]
    pub fn modulus(&self, v: f64) -> f64 {
        (-self.gamma * v).exp()
    }
}

/// Closed form through the Gaussian moment-generating function:
/// `E[e^{-gamma V}] = 2^{gamma^2 - 2 gamma}`, `E[e^{i beta sqrt(2 ln 2) X}] = 2^{-beta^2}`,
/// two children per node.
pub fn mean_factor(params: &ModelParams) -> f64 {
    let (g, b) = (params.gamma, params.beta);
    (1.0 + g * g - 2.0 * g - b * b).exp2()
}

/// One independent draw of the node weight `Theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSample {
    pub v_inc: f64,
    pub x_inc: f64,
}

pub fn sample_theta<R: RngCore + ?Sized>(rng: &mut R) -> ThetaSample {
    let zv: f64 = StandardNormal.sample(rng);
    let zx: f64 = StandardNormal.sample(rng);
    ThetaSample { v_inc: REAL_MEAN + REAL_SD * zv, x_inc: zx }
}

pub const MIN_CRITICALITY_TRIALS: u64 = 1000;

/// Estimates `E[sum_{|z|=1} e^{-V(z)}]` and `E[sum_{|z|=1} V(z) e^{-V(z)}]`,
/// which equal 1 and 0 for the critical law.
pub fn criticality_check(
    trials: u64,
    seed: u64,
    runner: &Runner,
) -> Result<(EstimateReport, EstimateReport)> {
    if trials < MIN_CRITICALITY_TRIALS {
        return Err(Error::TooFewTrials { got: trials, min: MIN_CRITICALITY_TRIALS });
    }
    let [mass, derivative] = runner.run(trials, || [MeanVar::new(), MeanVar::new()], |t, acc| {
        let mut rng = PhiloxStream::new(trial_seed(seed, t), Domain::Theta, 0);
        let (mut m, mut d) = (0.0, 0.0);
        for _ in 0..2 {
            let v = sample_theta(&mut rng).v_inc;
            let e = (-v).exp();
            m += e;
            d += v * e;
        }
        acc[0].push(m);
        acc[1].push(d);
    });
    Ok((
        EstimateReport::real(&mass, seed).with_bound(1.0),
        EstimateReport::real(&derivative, seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants() {
        assert!((REAL_SD * REAL_SD - REAL_MEAN).abs() < 1e-15);
    }

    #[test]
    fn phases() {
        assert_eq!(classify_phase(0.3, 0.3).unwrap(), Phase::PhaseI);
        assert_eq!(classify_phase(0.7, 0.3).unwrap(), Phase::BoundaryI_II);
        assert_eq!(classify_phase(0.6, 0.6).unwrap(), Phase::Outside);
        assert_eq!(classify_phase(0.7, 0.2).unwrap(), Phase::PhaseI);
        assert_eq!(classify_phase(0.5, 0.5).unwrap(), Phase::Outside);
        assert_eq!(classify_phase(1.0, 0.0).unwrap(), Phase::Outside);
        assert_eq!(classify_phase(0.7, 0.3 + 5e-13).unwrap(), Phase::BoundaryI_II);
        assert_eq!(classify_phase(0.7, 0.3 + 1e-9).unwrap(), Phase::Outside);
        assert!(classify_phase(-1.0, 0.3).is_err());
        assert!(classify_phase(0.3, f64::NAN).is_err());
    }

    #[test]
    fn mean_factor_examples() {
        let b = ModelParams::new(0.7, 0.3).unwrap();
        assert!((b.mean_factor() - 1.0).abs() <= 1e-12);
        assert_eq!(ModelParams::new(0.0, 0.0).unwrap().mean_factor(), 2.0);
        assert_eq!(ModelParams::new(1.0, 0.0).unwrap().mean_factor(), 1.0);
    }

    #[test]
    fn boundary_mean_factor_is_one() {
        for i in 1..100 {
            let g = 0.5 + 0.5 * f64::from(i) / 100.0;
            let p = ModelParams::boundary(g).unwrap();
            assert!((p.mean_factor() - 1.0).abs() <= 1e-12, "gamma = {g}");
        }
        assert!(ModelParams::boundary(0.4).is_err());
    }

    #[test]
    fn theta_is_reproducible() {
        let mut a = PhiloxStream::new(11, Domain::Theta, 0);
        let mut b = PhiloxStream::new(11, Domain::Theta, 0);
        let first = (sample_theta(&mut a), sample_theta(&mut a));
        let again = (sample_theta(&mut b), sample_theta(&mut b));
        assert_eq!(first, again);
        assert_ne!(first.0, first.1);
    }

    #[test]
    fn theta_moments() {
        let n = 1_000_000;
        let mut rng = PhiloxStream::new(5, Domain::Theta, 0);
        let (mut v, mut x) = (MeanVar::new(), MeanVar::new());
        for _ in 0..n {
            let s = sample_theta(&mut rng);
            v.push(s.v_inc);
            x.push(s.x_inc);
        }
        assert!((v.mean() - 2.0 * LN_2).abs() < 4.0 * v.std_error());
        // Var of the sample variance of a standard normal is ~ 2/n.
        let var_se = (2.0 / n as f64).sqrt();
        assert!((x.variance() - 1.0).abs() < 4.0 * var_se);
        assert!(x.mean().abs() < 4.0 * x.std_error());
        assert!((v.variance() - REAL_MEAN).abs() < 4.0 * REAL_MEAN * var_se);
    }

    #[test]
    fn criticality_rejects_small_samples() {
        let r = Runner::default();
        assert!(criticality_check(0, 0, &r).is_err());
        assert!(criticality_check(999, 0, &r).is_err());
    }

    #[test]
    fn criticality_identities() {
        let (m, d) = criticality_check(200_000, 1, &Runner::default()).unwrap();
        assert!((m.estimate.re() - 1.0).abs() < 3.0 * m.std_error.re());
        assert!(d.estimate.re().abs() < 3.0 * d.std_error.re());
    }

    #[test]
    fn first_generation_mass_matches_mean_factor() {
        let grid = [(0.7, 0.3), (0.3, 0.3), (0.0, 0.0), (1.0, 0.0), (0.6, 0.6), (0.2, 0.9)];
        for (i, &(g, b)) in grid.iter().enumerate() {
            let p = ModelParams::new(g, b).unwrap();
            let (mut re, mut im) = (MeanVar::new(), MeanVar::new());
            let mut rng = PhiloxStream::new(100 + i as u64, Domain::Aux, 0);
            for _ in 0..100_000 {
                let mut m = Complex64::new(0.0, 0.0);
                for _ in 0..2 {
                    let s = sample_theta(&mut rng);
                    m += p.weight(s.v_inc, s.x_inc);
                }
                re.push(m.re);
                im.push(m.im);
            }
            let mf = p.mean_factor();
            assert!((re.mean() - mf).abs() <= 4.0 * re.std_error().max(1e-15), "{g},{b}");
            assert!(im.mean().abs() <= 4.0 * im.std_error().max(1e-15), "{g},{b}");
        }
    }
}
