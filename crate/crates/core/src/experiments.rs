//! Monte Carlo campaigns: martingale normalization, tails, moments, barrier
//! crossings, oscillation decay and total variation, plus the exact-identity
//! suite.
//!
//! Trial `t` of a run with master seed `s` always simulates the tree keyed by
//! `TreeKey::for_trial(s, t)`, so every estimate at several thresholds or
//! levels uses common random numbers and nested events are monotone path by
//! path.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cascade::{simulate, simulate_breadth, subtree_masses_with, CascadeConfig, Components, Mode, StreamCursor};
use crate::error::{Error, Result};
use crate::measure::{
    max_dyadic_partial_sum, oscillation_profile, sup_functional, total_variation, variation_profile,
    verify_cascade_recursion, verify_left_decomposition, PartialSumProcess,
};
use crate::parallel::Runner;
use crate::report::{Estimate, EstimateReport};
use crate::rng::{trial_seed, Domain, PhiloxStream, TreeKey};
use crate::stats::{ks_critical_value, ks_two_sample, ComplexMeanVar, DecayFit, MeanVar};
use crate::summation::ComplexSum;
use crate::weights::ModelParams;

pub const MAX_BARRIER_DEPTH: u32 = 24;

fn normalization(params: &ModelParams, n: u32) -> f64 {
    params.mean_factor().powi(n as i32)
}

fn leaf_mass(sim: crate::cascade::Simulation, params: &ModelParams) -> (Complex64, crate::cascade::TreeExtremes) {
    let mut sum = ComplexSum::new();
    let ext = sim.for_each_leaf(|leaf| sum.add(params.weight(leaf.v, leaf.x)));
    (sum.value(), ext)
}

/// Complex sample mean of `M_n / mean_factor^n`. At `n = 0` the value is
/// exactly `1` and the report has one trial and zero error.
pub fn martingale_mean(
    params: &ModelParams,
    n: u32,
    trials: u64,
    seed: u64,
    mode: Mode,
    config: CascadeConfig,
    runner: &Runner,
) -> Result<EstimateReport> {
    if n == 0 {
        return Ok(EstimateReport::exact(Complex64::new(1.0, 0.0).into(), seed));
    }
    if trials < 2 {
        return Err(Error::TooFewTrials { got: trials, min: 2 });
    }
    // Surface capacity errors before spawning work.
    if mode == Mode::Breadth && n > config.breadth_cap {
        return Err(Error::Capacity { what: "breadth level", depth: n, cap: config.breadth_cap });
    }
    let norm = normalization(params, n);
    let acc = runner.run(trials, ComplexMeanVar::new, |t, acc| {
        let sim = simulate(n, TreeKey::for_trial(seed, t), config, mode).expect("depth checked");
        acc.push(leaf_mass(sim, params).0 / norm);
    });
    Ok(EstimateReport::complex(&acc, seed))
}

fn bound_ratio_exp(x: f64) -> f64 {
    x.exp() / (1.0 + x)
}

/// For each `x`, estimates `P(||M_{n,0}||_inf >= e^{gamma x})`, with the
/// process normalized by `mean_factor^n`. Bound ratio `estimate e^x / (1+x)`.
pub fn tail_sup(
    params: &ModelParams,
    n: u32,
    x_grid: &[f64],
    trials: u64,
    seed: u64,
    config: CascadeConfig,
    runner: &Runner,
) -> Result<Vec<EstimateReport>> {
    if trials < 2 {
        return Err(Error::TooFewTrials { got: trials, min: 2 });
    }
    if n > config.breadth_cap {
        return Err(Error::Capacity { what: "breadth level", depth: n, cap: config.breadth_cap });
    }
    let norm = normalization(params, n);
    let thresholds: Vec<f64> = x_grid.iter().map(|&x| (params.gamma() * x).exp()).collect();
    let acc = runner.run(trials, || vec![MeanVar::new(); x_grid.len()], |t, acc| {
        let level = simulate_breadth(n, TreeKey::for_trial(seed, t), config).expect("depth checked");
        let proc = PartialSumProcess::from_level(&level, params).scaled(norm);
        let sup = sup_functional(&proc, n).expect("level in range").value;
        for (a, &th) in acc.iter_mut().zip(&thresholds) {
            a.push(f64::from(u8::from(sup >= th)));
        }
    });
    Ok(acc
        .iter()
        .zip(x_grid)
        .map(|(a, &x)| EstimateReport::probability(a, seed).with_ratio(a.mean() * bound_ratio_exp(x)))
        .collect())
}

/// For each `x`, estimates `E[|M_n|^4 1{min_{|u|<=n} V(u) >= -x}]` with `M_n`
/// normalized by `mean_factor^n`. Bound ratio `estimate e^{x(1 - 4 gamma)}`.
pub fn fourth_moment(
    params: &ModelParams,
    n: u32,
    x_grid: &[f64],
    trials: u64,
    seed: u64,
    runner: &Runner,
) -> Result<Vec<EstimateReport>> {
    if x_grid.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter("fourth moment needs x >= 0".into()));
    }
    let ratio = |x: f64, est: f64| est * (x * (1.0 - 4.0 * params.gamma())).exp();
    if n == 0 {
        return Ok(x_grid
            .iter()
            .map(|&x| EstimateReport::exact(Estimate::Real(1.0), seed).with_ratio(ratio(x, 1.0)))
            .collect());
    }
    if trials < 2 {
        return Err(Error::TooFewTrials { got: trials, min: 2 });
    }
    let norm = normalization(params, n);
    let config = CascadeConfig::default();
    let acc = runner.run(trials, || vec![MeanVar::new(); x_grid.len()], |t, acc| {
        let cursor = StreamCursor::new(n, TreeKey::for_trial(seed, t), config, Components::Full).expect("depth checked");
        let (mass, ext) = leaf_mass(crate::cascade::Simulation::Stream(cursor), params);
        let m4 = (mass.norm() / norm).powi(4);
        for (a, &x) in acc.iter_mut().zip(x_grid) {
            a.push(if ext.min_so_far >= -x { m4 } else { 0.0 });
        }
    });
    Ok(acc
        .iter()
        .zip(x_grid)
        .map(|(a, &x)| EstimateReport::real(a, seed).with_ratio(ratio(x, a.mean())))
        .collect())
}

/// For each `x`, estimates `P(exists u, 1 <= |u| <= n_max: V(u) <= -x + r ln |u|)`
/// with `r = 1/2 - epsilon0`. The law of `V` does not depend on `(gamma, beta)`.
pub fn barrier_probability(
    x_grid: &[f64],
    n_max: u32,
    trials: u64,
    seed: u64,
    config: CascadeConfig,
    runner: &Runner,
) -> Result<Vec<EstimateReport>> {
    if n_max > MAX_BARRIER_DEPTH {
        return Err(Error::InvalidDepth { depth: n_max, reason: "barrier depth limited to 24" });
    }
    if trials < 2 {
        return Err(Error::TooFewTrials { got: trials, min: 2 });
    }
    let acc = runner.run(trials, || vec![MeanVar::new(); x_grid.len()], |t, acc| {
        let mut cursor =
            StreamCursor::new(n_max, TreeKey::for_trial(seed, t), config, Components::RealOnly).expect("depth checked");
        let ext = cursor.drain();
        for (a, &x) in acc.iter_mut().zip(x_grid) {
            a.push(f64::from(u8::from(ext.barrier_crossed(x))));
        }
    });
    let note = format!(
        "generations 1..={n_max} only; a lower bound for the event over the infinite tree (r = {})",
        config.barrier_slope()
    );
    Ok(acc
        .iter()
        .zip(x_grid)
        .map(|(a, &x)| {
            EstimateReport::probability(a, seed)
                .with_ratio(a.mean() * bound_ratio_exp(x))
                .with_truncation(note.clone())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusResult {
    pub levels: Vec<u32>,
    /// Mean over trials of the largest block diameter at each level.
    pub per_level: Vec<EstimateReport>,
    /// `ln E[osc_l]` against `ln l`.
    pub log_fit: Option<DecayFit>,
    /// `ln E[osc_l]` against `l ln 2`.
    pub linear_fit: Option<DecayFit>,
}

/// Oscillation lower bound `max_k diam{P(j) : j in block k}` at each level of
/// `l_grid`, for the process normalized by `mean_factor^n`.
pub fn modulus_experiment(
    params: &ModelParams,
    n: u32,
    l_grid: &[u32],
    trials: u64,
    seed: u64,
    config: CascadeConfig,
    runner: &Runner,
) -> Result<ModulusResult> {
    if n < 4 || l_grid.is_empty() || l_grid.iter().any(|&l| l < 2 || l > n - 2) {
        return Err(Error::InvalidParameter(format!("levels must lie in [2, {}]", n.saturating_sub(2))));
    }
    if trials < 2 {
        return Err(Error::TooFewTrials { got: trials, min: 2 });
    }
    if n > config.breadth_cap {
        return Err(Error::Capacity { what: "breadth level", depth: n, cap: config.breadth_cap });
    }
    let mut levels = l_grid.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let norm = normalization(params, n);
    let acc = runner.run(trials, || vec![MeanVar::new(); levels.len()], |t, acc| {
        let level = simulate_breadth(n, TreeKey::for_trial(seed, t), config).expect("depth checked");
        let proc = PartialSumProcess::from_level(&level, params).scaled(norm);
        let profile = oscillation_profile(&proc, &levels).expect("levels checked");
        for (a, (_, lo)) in acc.iter_mut().zip(profile) {
            a.push(lo);
        }
    });
    let ln_mean: Vec<f64> = acc.iter().map(|a| a.mean().ln()).collect();
    let ln_l: Vec<f64> = levels.iter().map(|&l| f64::from(l).ln()).collect();
    let l_ln2: Vec<f64> = levels.iter().map(|&l| f64::from(l) * std::f64::consts::LN_2).collect();
    Ok(ModulusResult {
        per_level: acc.iter().map(|a| EstimateReport::real(a, seed)).collect(),
        log_fit: DecayFit::fit(&ln_l, &ln_mean),
        linear_fit: DecayFit::fit(&l_ln2, &ln_mean),
        levels,
    })
}

/// `E[2^{beta^2}]^n`: the mean of `TV(n) / mean_factor^n`.
pub fn expected_leaf_variation(params: &ModelParams, n: u32) -> f64 {
    (params.beta() * params.beta() * f64::from(n)).exp2()
}

/// `E[TV(l)]` for `l = 0..=n`, with the process normalized by `mean_factor^n`.
pub fn variation_experiment(
    params: &ModelParams,
    n: u32,
    trials: u64,
    seed: u64,
    config: CascadeConfig,
    runner: &Runner,
) -> Result<Vec<EstimateReport>> {
    if trials < 2 {
        return Err(Error::TooFewTrials { got: trials, min: 2 });
    }
    if n > config.breadth_cap {
        return Err(Error::Capacity { what: "breadth level", depth: n, cap: config.breadth_cap });
    }
    let norm = normalization(params, n);
    let acc = runner.run(trials, || vec![MeanVar::new(); n as usize + 1], |t, acc| {
        let level = simulate_breadth(n, TreeKey::for_trial(seed, t), config).expect("depth checked");
        let proc = PartialSumProcess::from_level(&level, params).scaled(norm);
        for (a, tv) in acc.iter_mut().zip(variation_profile(&proc)) {
            a.push(tv);
        }
    });
    let top = expected_leaf_variation(params, n);
    Ok(acc
        .iter()
        .enumerate()
        .map(|(l, a)| {
            let r = EstimateReport::real(a, seed);
            if l == n as usize {
                r.with_bound(top)
            } else {
                r
            }
        })
        .collect())
}

/// Worst values of the exact identities over a batch of trees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct IdentityReport {
    pub trees: u64,
    /// Relative error of the one-step cascade recursion.
    pub recursion: f64,
    /// Relative error of the left decomposition over the sampled leaves.
    pub decomposition: f64,
    /// Largest `max_k |P(k 2^-m)| / ||M_{m,p}||_inf - 1`, `p in {0, 4}`; nonpositive when the comparison holds.
    pub triangle_excess: f64,
    /// Largest relative drop `(TV(l) - TV(l+1)) / TV(l)`; nonpositive when TV is monotone.
    pub variation_drop: f64,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Leaves at which the left decomposition is checked, per tree.
pub const DECOMPOSITION_SAMPLES: u64 = 100;

impl IdentityReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.recursion <= tolerance
            && self.decomposition <= tolerance
            && self.triangle_excess <= tolerance
            && self.variation_drop <= tolerance
    }

    fn merge(&mut self, o: &IdentityReport) {
        self.trees += o.trees;
        self.recursion = self.recursion.max(o.recursion);
        self.decomposition = self.decomposition.max(o.decomposition);
        self.triangle_excess = self.triangle_excess.max(o.triangle_excess);
        self.variation_drop = self.variation_drop.max(o.variation_drop);
    }
}

impl crate::parallel::Merge for IdentityReport {
    fn merge_from(&mut self, other: Self) {
        self.merge(&other);
    }
}

/// Checks every exact identity on `trees` simulated trees at depth `n >= 1`.
pub fn identity_suite(
    params: &ModelParams,
    n: u32,
    trees: u64,
    seed: u64,
    config: CascadeConfig,
    runner: &Runner,
) -> Result<IdentityReport> {
    if n == 0 {
        return Err(Error::InvalidDepth { depth: 0, reason: "identities need at least one generation" });
    }
    if n > config.breadth_cap {
        return Err(Error::Capacity { what: "breadth level", depth: n, cap: config.breadth_cap });
    }
    let init = || IdentityReport { trees: 0, recursion: 0.0, decomposition: 0.0, triangle_excess: f64::NEG_INFINITY, variation_drop: f64::NEG_INFINITY };
    let out = runner.run(trees, init, |t, acc| {
        let level = simulate_breadth(n, TreeKey::for_trial(seed, t), config).expect("depth checked");
        let proc = PartialSumProcess::from_level(&level, params);
        let scale = proc.abs_mass().max(f64::MIN_POSITIVE);
        let mut r = init();
        r.trees = 1;

        let first = level.ancestor(1).expect("n >= 1");
        let masses = subtree_masses_with(&level, &first, params).expect("same tree");
        r.recursion = verify_cascade_recursion(&proc, &masses, &first).expect("shapes match");

        let mut pick = PhiloxStream::new(trial_seed(seed, t), Domain::Aux, 0);
        let leaves = 1u64 << n;
        for _ in 0..DECOMPOSITION_SAMPLES.min(leaves) {
            let u = rand::RngCore::next_u64(&mut pick) % leaves;
            let e = verify_left_decomposition(&level, &proc, u).expect("index in range") / scale;
            r.decomposition = r.decomposition.max(e);
        }

        for p in [0, 4] {
            if p > n {
                continue;
            }
            let m = n - p;
            let sup = sup_functional(&proc, m).expect("level in range").value;
            let max_sum = max_dyadic_partial_sum(&proc, m).expect("level in range");
            r.triangle_excess = r.triangle_excess.max(max_sum / sup - 1.0);
        }

        let tv: Vec<f64> = (0..=n).map(|l| total_variation(&proc, l).expect("level in range")).collect();
        for w in tv.windows(2) {
            r.variation_drop = r.variation_drop.max((w[0] - w[1]) / w[0].max(f64::MIN_POSITIVE));
        }
        acc.merge(&r);
    });
    Ok(out)
}

/// Two-sample KS comparison of `|M_{n+1}|` against `|T(0) M' + T(1) M''|`
/// built from an independent first generation and two independent depth-`n`
/// copies. Returns `(statistic, critical value at alpha)`.
pub fn recursion_distribution_check(
    params: &ModelParams,
    n: u32,
    trials: u64,
    seed: u64,
    alpha: f64,
    runner: &Runner,
) -> Result<(f64, f64)> {
    if trials < 2 {
        return Err(Error::TooFewTrials { got: trials, min: 2 });
    }
    let config = CascadeConfig::default();
    if n + 1 > config.breadth_cap {
        return Err(Error::Capacity { what: "breadth level", depth: n + 1, cap: config.breadth_cap });
    }
    let mass = |depth: u32, key: TreeKey| {
        let level = simulate_breadth(depth, key, config).expect("depth checked");
        PartialSumProcess::from_level(&level, params).total_mass()
    };
    let direct: Vec<f64> = runner.map(trials, |t| mass(n + 1, TreeKey::for_trial(seed, t)).norm());
    let recombined: Vec<f64> = runner.map(trials, |t| {
        let base = trials + 3 * t;
        let first = simulate_breadth(1, TreeKey::for_trial(seed, base), config).expect("depth 1");
        let t0 = params.weight(first.v()[0], first.x()[0]);
        let t1 = params.weight(first.v()[1], first.x()[1]);
        let a = mass(n, TreeKey::for_trial(seed, base + 1));
        let b = mass(n, TreeKey::for_trial(seed, base + 2));
        (t0 * a + t1 * b).norm()
    });
    let d = ks_two_sample(&direct, &recombined);
    Ok((d, ks_critical_value(alpha, direct.len(), recombined.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boundary() -> ModelParams {
        ModelParams::new(0.7, 0.3).unwrap()
    }

    fn runner() -> Runner {
        Runner::default()
    }

    #[test]
    fn martingale_mean_at_root_is_exact() {
        let r = martingale_mean(&boundary(), 0, 10, 3, Mode::Breadth, CascadeConfig::default(), &runner()).unwrap();
        assert_eq!(r.estimate.as_complex(), Complex64::new(1.0, 0.0));
        assert_eq!(r.trials, 1);
        assert_eq!(r.se_norm(), 0.0);
    }

    #[test]
    fn martingale_mean_modes_agree_bitwise() {
        let p = boundary();
        let c = CascadeConfig::default();
        let a = martingale_mean(&p, 6, 200, 4, Mode::Breadth, c, &runner()).unwrap();
        let b = martingale_mean(&p, 6, 200, 4, Mode::Stream, c, &runner()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            martingale_mean(&p, 30, 200, 4, Mode::Breadth, c, &runner()),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn martingale_mean_phase_one() {
        let p = ModelParams::new(0.3, 0.3).unwrap();
        let r = martingale_mean(&p, 10, 4000, 5, Mode::Breadth, CascadeConfig::default(), &runner()).unwrap();
        let z = r.estimate.as_complex() - 1.0;
        assert!(z.re.abs() <= 3.0 * r.std_error.re() && z.im.abs() <= 3.0 * r.std_error.im(), "{r:?}");
    }

    #[test]
    fn tail_is_monotone_and_flags_rare_events() {
        let xs = [0.5, 1.0, 2.0, 4.0, 20.0];
        let r = tail_sup(&boundary(), 6, &xs, 500, 6, CascadeConfig::default(), &runner()).unwrap();
        assert!(r.windows(2).all(|w| w[0].estimate.re() >= w[1].estimate.re()));
        assert!(r[4].zero_count);
        assert!(r.iter().all(|e| e.bound_ratio.is_some()));
    }

    #[test]
    fn fourth_moment_cases() {
        let p = boundary();
        let r = fourth_moment(&p, 0, &[0.0, 2.0], 10, 7, &runner()).unwrap();
        assert!(r.iter().all(|e| e.estimate.re() == 1.0));
        let xs = [0.0, 1.0, 2.0, 4.0];
        let r = fourth_moment(&p, 6, &xs, 500, 7, &runner()).unwrap();
        assert!(r.windows(2).all(|w| w[0].estimate.re() <= w[1].estimate.re()));
        assert!(fourth_moment(&p, 6, &[-1.0], 500, 7, &runner()).is_err());
    }

    #[test]
    fn barrier_is_monotone_and_noted() {
        let xs = [0.0, 1.0, 2.0, 4.0];
        let r = barrier_probability(&xs, 8, 500, 8, CascadeConfig::default(), &runner()).unwrap();
        assert!(r.windows(2).all(|w| w[0].estimate.re() >= w[1].estimate.re()));
        assert!(r.iter().all(|e| e.truncation.is_some()));
        assert!(barrier_probability(&xs, 25, 500, 8, CascadeConfig::default(), &runner()).is_err());
    }

    #[test]
    fn modulus_of_identity_path() {
        let flat = ModelParams::new(0.0, 0.0).unwrap();
        let r = modulus_experiment(&flat, 10, &[2, 4, 8], 4, 9, CascadeConfig::default(), &runner()).unwrap();
        for (l, e) in r.levels.iter().zip(&r.per_level) {
            assert!((e.estimate.re() - (-f64::from(*l)).exp2()).abs() <= 1e-14);
        }
        let lin = r.linear_fit.unwrap();
        assert!((lin.slope + 1.0).abs() <= 1e-12);
        assert!(modulus_experiment(&flat, 10, &[1], 4, 9, CascadeConfig::default(), &runner()).is_err());
        assert!(modulus_experiment(&flat, 10, &[9], 4, 9, CascadeConfig::default(), &runner()).is_err());
    }

    #[test]
    fn variation_cases() {
        let p = boundary();
        let r = variation_experiment(&p, 8, 2000, 10, CascadeConfig::default(), &runner()).unwrap();
        assert_eq!(r.len(), 9);
        assert!(r.windows(2).all(|w| w[0].estimate.re() <= w[1].estimate.re()));
        let top = &r[8];
        assert!((top.estimate.re() - expected_leaf_variation(&p, 8)).abs() <= 4.0 * top.se_norm());
        assert!((expected_leaf_variation(&p, 10) - 2f64.powf(0.9)).abs() <= 1e-12);
        let m = martingale_mean(&p, 8, 2000, 10, Mode::Breadth, CascadeConfig::default(), &runner()).unwrap();
        // TV(0) = |M_n| on the same trees.
        assert!(r[0].estimate.re() >= m.estimate.as_complex().norm() * (1.0 - 1e-12));
    }

    #[test]
    fn identities_hold() {
        let r = identity_suite(&boundary(), 10, 8, 7, CascadeConfig::default(), &runner()).unwrap();
        assert_eq!(r.trees, 8);
        assert!(r.holds(IDENTITY_TOLERANCE), "{r:?}");
        assert!(identity_suite(&boundary(), 0, 8, 7, CascadeConfig::default(), &runner()).is_err());
    }

    #[test]
    fn recursion_in_distribution() {
        let (d, crit) = recursion_distribution_check(&boundary(), 10, 1000, 11, 0.01, &runner()).unwrap();
        assert!(d <= crit, "KS {d} above {crit}");
    }
}
