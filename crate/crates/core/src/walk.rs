//! The centered Gaussian walk of the many-to-one lemma and its ballot-type
//! estimates.
//!
//! Under the measure tilted by `e^{-V}`, one step of `V` has law
//! `N(2 ln 2 - 2 ln 2, 2 ln 2)`, so the walk steps are `N(0, 2 ln 2)`.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeConfig, Components, StreamCursor};
use crate::error::{Error, Result};
use crate::parallel::Runner;
use crate::report::EstimateReport;
use crate::rng::{trial_seed, Domain, PhiloxStream, TreeKey};
use crate::stats::MeanVar;
use crate::summation::NeumaierSum;
use crate::weights::REAL_SD;

pub const STEP_SD: f64 = REAL_SD;
pub const MIN_MANY_TO_ONE_TRIALS: u64 = 1000;
pub const MAX_MANY_TO_ONE_DEPTH: u32 = 20;
pub const MIN_BALLOT_TRIALS: u64 = 10_000;
/// Horizon doublings tried by [`exp_sum`] before giving up on stabilization.
pub const MAX_HORIZON_DOUBLINGS: u32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    pub start: f64,
    /// `S_1, ..., S_n`.
    pub steps: Vec<f64>,
    /// `min_{1<=j<=n} S_j`, `+inf` for the empty path.
    pub running_min: f64,
}

impl WalkPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `S_n`, or the start for the empty path.
    pub fn end(&self) -> f64 {
        self.steps.last().copied().unwrap_or(self.start)
    }
}

#[inline]
fn step<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    STEP_SD * z
}

pub fn sample_walk<R: RngCore + ?Sized>(n: usize, x: f64, rng: &mut R) -> WalkPath {
    let mut s = x;
    let mut running_min = f64::INFINITY;
    let steps = (0..n)
        .map(|_| {
            s += step(rng);
            running_min = running_min.min(s);
            s
        })
        .collect();
    WalkPath { start: x, steps, running_min }
}

fn walk_stream(seed: u64, trial: u64) -> PhiloxStream {
    PhiloxStream::new(trial_seed(seed, trial), Domain::Walk, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "arg")]
pub enum TestFunction {
    /// `1{y >= threshold}`.
    IndicatorAbove(f64),
    Identity,
    /// `exp(-rate |y|)`.
    ExpDecay(f64),
    /// `sum_k c_k y^k`.
    Polynomial(Vec<f64>),
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction::Polynomial(vec![c])
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            TestFunction::IndicatorAbove(t) => f64::from(u8::from(y >= *t)),
            TestFunction::Identity => y,
            TestFunction::ExpDecay(rate) => (-rate * y.abs()).exp(),
            TestFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &a| acc * y + a),
        }
    }
}

/// Estimates both sides of the many-to-one identity
/// `E[sum_{|z|=n} F(x + V(z)) e^{-V(z)}] = E_x[F(S_n)]`, returning
/// `(tree side, walk side)`.
pub fn many_to_one_compare(
    f: &TestFunction,
    n: u32,
    x: f64,
    trials: u64,
    seed: u64,
    runner: &Runner,
) -> Result<(EstimateReport, EstimateReport)> {
    if trials < MIN_MANY_TO_ONE_TRIALS {
        return Err(Error::TooFewTrials { got: trials, min: MIN_MANY_TO_ONE_TRIALS });
    }
    if n > MAX_MANY_TO_ONE_DEPTH {
        return Err(Error::InvalidDepth { depth: n, reason: "tree side limited to depth 20" });
    }
    let config = CascadeConfig::default();
    let tree = runner.run(trials, MeanVar::new, |t, acc| {
        let cursor = StreamCursor::new(n, TreeKey::for_trial(seed, t), config, Components::RealOnly)
            .expect("depth checked");
        let s: NeumaierSum = cursor.map(|leaf| f.eval(x + leaf.v) * (-leaf.v).exp()).collect();
        acc.push(s.value());
    });
    let walk = runner.run(trials, MeanVar::new, |t, acc| {
        let mut rng = walk_stream(seed, t);
        let mut s = x;
        for _ in 0..n {
            s += step(&mut rng);
        }
        acc.push(f.eval(s));
    });
    Ok((EstimateReport::real(&tree, seed), EstimateReport::real(&walk, seed)))
}

/// Estimates `P_x(min_{j<=n} S_j >= 0, S_n in [a, b])`; `b` may be `+inf`.
/// The bound ratio is `estimate n^{3/2} / ((1+x)(1+b^+)(1+(b-a)))`.
pub fn ballot_probability(
    n: u32,
    x: f64,
    a: f64,
    b: f64,
    trials: u64,
    seed: u64,
    runner: &Runner,
) -> Result<EstimateReport> {
    if !(x >= 0.0) || a.is_nan() || b.is_nan() {
        return Err(Error::InvalidParameter(format!("ballot needs x >= 0, got x = {x}")));
    }
    if a > b {
        return Err(Error::InvalidParameter(format!("empty window [{a}, {b}]")));
    }
    if trials < MIN_BALLOT_TRIALS {
        return Err(Error::TooFewTrials { got: trials, min: MIN_BALLOT_TRIALS });
    }
    let hits = runner.run(trials, MeanVar::new, |t, acc| {
        let mut rng = walk_stream(seed, t);
        let mut s = x;
        let mut alive = true;
        for _ in 0..n {
            s += step(&mut rng);
            if s < 0.0 {
                alive = false;
                break;
            }
        }
        acc.push(f64::from(u8::from(alive && s >= a && s <= b)));
    });
    let report = EstimateReport::probability(&hits, seed);
    let bound = (1.0 + x) * (1.0 + b.max(0.0)) * (1.0 + (b - a)) / f64::from(n).powf(1.5);
    Ok(if bound.is_finite() { report.with_bound(bound) } else { report })
}

/// Per-trial partial sums of `sum_l e^{-kappa S_l} 1{min_{1<=j<=l} S_j >= 0}`
/// up to `horizon` and `2 horizon`, on the same path.
fn exp_sum_pair(kappa: f64, x: f64, horizon: u64, seed: u64, runner: &Runner, trials: u64) -> [MeanVar; 2] {
    runner.run(trials, || [MeanVar::new(), MeanVar::new()], |t, acc| {
        let mut rng = walk_stream(seed, t);
        let mut s = x;
        let mut sum = NeumaierSum::new();
        sum.add((-kappa * x).exp());
        let mut at_horizon = None;
        for l in 1..=2 * horizon {
            s += step(&mut rng);
            if s < 0.0 {
                break;
            }
            sum.add((-kappa * s).exp());
            if l == horizon {
                at_horizon = Some(sum.value());
            }
        }
        let total = sum.value();
        acc[0].push(at_horizon.unwrap_or(total));
        acc[1].push(total);
    })
}

/// Estimates `E_x[sum_{l>=0} e^{-kappa S_l} 1{min_{1<=j<=l} S_j >= 0}]`,
/// doubling the horizon until the estimates at `H` and `2H` differ by at
/// most two standard errors of the latter. The report carries the horizon
/// used in its truncation note.
pub fn exp_sum(kappa: f64, x: f64, horizon: u64, trials: u64, seed: u64, runner: &Runner) -> Result<EstimateReport> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!("start must be nonnegative, got {x}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if trials < 2 {
        return Err(Error::TooFewTrials { got: trials, min: 2 });
    }
    let mut h = horizon;
    for _ in 0..=MAX_HORIZON_DOUBLINGS {
        let [short, long] = exp_sum_pair(kappa, x, h, seed, runner, trials);
        if (long.mean() - short.mean()).abs() <= 2.0 * long.std_error() {
            return Ok(EstimateReport::real(&long, seed)
                .with_truncation(format!("horizon {}, stabilized against horizon {h}", 2 * h)));
        }
        h *= 2;
    }
    let [_, long] = exp_sum_pair(kappa, x, h / 2, seed, runner, trials);
    Ok(EstimateReport::real(&long, seed).with_truncation(format!("horizon {h}, not stabilized")))
}

/// `E_x[sum_{l=0}^{horizon} ...]` at a fixed horizon, without stabilization.
pub fn exp_sum_truncated(kappa: f64, x: f64, horizon: u64, trials: u64, seed: u64, runner: &Runner) -> Result<EstimateReport> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let acc = runner.run(trials, MeanVar::new, |t, acc| {
        let mut rng = walk_stream(seed, t);
        let mut s = x;
        let mut sum = NeumaierSum::new();
        sum.add((-kappa * x).exp());
        for _ in 0..horizon {
            s += step(&mut rng);
            if s < 0.0 {
                break;
            }
            sum.add((-kappa * s).exp());
        }
        acc.push(sum.value());
    });
    Ok(EstimateReport::real(&acc, seed).with_truncation(format!("horizon {horizon}")))
}
