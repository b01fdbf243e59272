use cascade_lab::cascade::simulate_breadth;
use cascade_lab::experiments::{
    barrier_probability, expected_leaf_variation, fourth_moment, identity_suite, martingale_mean,
    modulus_experiment, tail_sup, variation_experiment, IDENTITY_TOLERANCE,
};
use cascade_lab::measure::{process_summary, write_process_csv, PartialSumProcess};
use cascade_lab::report::{EstimateReport, Report, ReportParams, Row};
use cascade_lab::walk::{ballot_probability, exp_sum, many_to_one_compare};
use cascade_lab::weights::criticality_check;
use cascade_lab::{Estimate, Result, Runner, TreeKey};
use serde_json::json;

use crate::config::{Experiment, RunConfig};

pub struct Outcome {
    pub report: Report,
    /// Set when an exact identity failed.
    pub violation: bool,
}

fn max_ratio(rows: &[EstimateReport]) -> Option<f64> {
    rows.iter().filter_map(|r| r.bound_ratio).reduce(f64::max)
}

pub fn run(cfg: &RunConfig, runner: &Runner) -> Result<Outcome> {
    let p = &cfg.params;
    let c = cfg.cascade;
    let (seed, trials) = (cfg.seed, cfg.trials);
    let mut violation = false;
    let mut summary = None;
    let rows: Vec<Row> = match cfg.experiment {
        Experiment::Criticality => {
            let (mass, deriv) = criticality_check(trials, seed, runner)?;
            vec![Row::from_estimate(&mass).labelled("mass"), Row::from_estimate(&deriv).labelled("derivative")]
        }
        Experiment::Mean => {
            let mut rows = Vec::new();
            for &n in &cfg.n_grid {
                let r = martingale_mean(p, n, trials, seed, cfg.mode, c, runner)?;
                rows.push(Row::from_estimate(&r).at_n(n));
            }
            rows
        }
        Experiment::TailSup => {
            let mut rows = Vec::new();
            let mut maxima = Vec::new();
            for &n in &cfg.n_grid {
                let r = tail_sup(p, n, &cfg.x_grid, trials, seed, c, runner)?;
                maxima.push(json!({ "n": n, "max_bound_ratio": max_ratio(&r) }));
                rows.extend(r.iter().zip(&cfg.x_grid).map(|(e, &x)| Row::from_estimate(e).at_x(x).at_n(n)));
            }
            summary = Some(json!({ "constants": maxima }));
            rows
        }
        Experiment::FourthMoment => {
            let mut rows = Vec::new();
            for &n in &cfg.n_grid {
                let r = fourth_moment(p, n, &cfg.x_grid, trials, seed, runner)?;
                rows.extend(r.iter().zip(&cfg.x_grid).map(|(e, &x)| Row::from_estimate(e).at_x(x).at_n(n)));
            }
            rows
        }
        Experiment::Barrier => {
            let r = barrier_probability(&cfg.x_grid, cfg.depth, trials, seed, c, runner)?;
            summary = Some(json!({ "max_bound_ratio": max_ratio(&r) }));
            r.iter().zip(&cfg.x_grid).map(|(e, &x)| Row::from_estimate(e).at_x(x)).collect()
        }
        Experiment::Modulus => {
            let r = modulus_experiment(p, cfg.depth, &cfg.l_grid, trials, seed, c, runner)?;
            summary = Some(json!({ "log_fit": r.log_fit, "linear_fit": r.linear_fit }));
            r.per_level.iter().zip(&r.levels).map(|(e, &l)| Row::from_estimate(e).at_l(l)).collect()
        }
        Experiment::Variation => {
            let r = variation_experiment(p, cfg.depth, trials, seed, c, runner)?;
            summary = Some(json!({ "expected_tv_n": expected_leaf_variation(p, cfg.depth) }));
            r.iter().enumerate().map(|(l, e)| Row::from_estimate(e).at_l(l as u32)).collect()
        }
        Experiment::ManyToOne => {
            let mut rows = Vec::new();
            for &n in &cfg.n_grid {
                for &x in &cfg.x_grid {
                    let (lhs, rhs) = many_to_one_compare(&cfg.function, n, x, trials, seed, runner)?;
                    rows.push(Row::from_estimate(&lhs).labelled("tree").at_x(x).at_n(n));
                    rows.push(Row::from_estimate(&rhs).labelled("walk").at_x(x).at_n(n));
                }
            }
            rows
        }
        Experiment::Ballot => {
            let b = cfg.b.unwrap_or(f64::INFINITY);
            let mut rows = Vec::new();
            for &n in &cfg.n_grid {
                for &x in &cfg.x_grid {
                    let r = ballot_probability(n, x, cfg.a, b, trials, seed, runner)?;
                    rows.push(Row::from_estimate(&r).at_x(x).at_n(n));
                }
            }
            rows
        }
        Experiment::ExpSum => {
            let mut rows = Vec::new();
            for &x in &cfg.x_grid {
                let r = exp_sum(cfg.kappa, x, cfg.horizon, trials, seed, runner)?;
                rows.push(Row::from_estimate(&r).at_x(x));
            }
            rows
        }
        Experiment::Identities => {
            let r = identity_suite(p, cfg.depth, trials, seed, c, runner)?;
            violation = !r.holds(IDENTITY_TOLERANCE);
            summary = Some(json!({ "tolerance": IDENTITY_TOLERANCE, "holds": !violation, "worst": r }));
            [
                ("recursion", r.recursion),
                ("decomposition", r.decomposition),
                ("triangle_excess", r.triangle_excess),
                ("variation_drop", r.variation_drop),
            ]
            .into_iter()
            .map(|(label, v)| Row { estimate: Some(Estimate::Real(v)), ..Row::default() }.labelled(label))
            .collect()
        }
    };
    let report = Report {
        experiment: cfg.experiment.name().into(),
        params: ReportParams { gamma: cfg.gamma, beta: cfg.beta, epsilon0: cfg.epsilon0 },
        n: cfg.depth,
        trials,
        seed,
        rows,
        summary,
        config: Some(serde_json::to_value(cfg)?),
    };
    Ok(Outcome { report, violation })
}

/// Writes the partial-sum process of trial 0 to `path` and its summary to
/// `path` with `.summary.json` appended.
pub fn export_process(cfg: &RunConfig, path: &std::path::Path) -> Result<()> {
    let level = simulate_breadth(cfg.depth, TreeKey::for_trial(cfg.seed, 0), cfg.cascade)?;
    let proc = PartialSumProcess::from_level(&level, &cfg.params);
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_process_csv(&proc, file)?;
    let mut summary_path = path.as_os_str().to_owned();
    summary_path.push(".summary.json");
    let mut body = serde_json::to_string_pretty(&process_summary(&proc))?;
    body.push('\n');
    std::fs::write(summary_path, body)?;
    Ok(())
}
