//! Monte Carlo runner.
//!
//! Every repetition draws its own fine path from `(seed, rep)`, computes the
//! Milstein reference at `fine_n` and all coarse schemes on the same path.
//! Repetitions run on a rayon pool and come back in repetition order; all
//! sums happen afterwards, sequentially, so the output does not depend on
//! the thread count.

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::diagnostics::{crossing_fraction, occupation_fraction};
use super::stats::empirical_error_from_norms;
use super::table::{fit_rate, Diagnostic, DiagnosticKind, ErrorRow, ErrorTable};
use crate::brownian::{generate_fine_path, CoarseDrivers, PathBundle};
use crate::error::{Error, Result};
use crate::geometry::HypersurfaceDescriptor;
use crate::schemes::{
    continuous_interpolation, euler_path, map_back, milstein_path, transformed_interpolation, Scheme, Trajectory,
};
use crate::transform::TransformedProblem;

/// Fraction of repetitions allowed to abort before the experiment fails.
pub const MAX_ABORT_FRACTION: f64 = 1e-4;

/// Per-scheme results of one repetition.
#[derive(Debug, Clone)]
struct SchemeSample {
    /// Error norm per `n`.
    diffs: Vec<f64>,
    /// Occupation fraction per `(n, eps)`, `n` major.
    occupation: Vec<f64>,
    crossing: Vec<f64>,
}

/// `None` for a scheme that aborted in this repetition.
type RepOutcome = Vec<Option<SchemeSample>>;

fn is_abort(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::InverseDidNotConverge { .. })
}

/// Coarse drivers for every `n`, derived from the fine drivers by repeated
/// halving where possible.
fn drivers_for(bundle: &PathBundle, fine: &CoarseDrivers, n_list: &[usize]) -> Result<Vec<CoarseDrivers>> {
    let mut order: Vec<usize> = (0..n_list.len()).collect();
    order.sort_by(|&a, &b| n_list[b].cmp(&n_list[a]));
    let mut out: Vec<Option<CoarseDrivers>> = vec![None; n_list.len()];
    let mut cur = fine.clone();
    for i in order {
        let n = n_list[i];
        if (cur.n() / n).is_power_of_two() && cur.n().is_multiple_of(n) {
            while cur.n() > n {
                cur = cur.coarsen()?;
            }
            out[i] = Some(cur.clone());
        } else {
            out[i] = Some(CoarseDrivers::from_bundle(bundle, n)?);
        }
    }
    Ok(out.into_iter().map(|d| d.expect("every n handled")).collect())
}

fn diagnostic_surface(config: &ExperimentConfig) -> Option<&HypersurfaceDescriptor> {
    let p = &config.problem;
    [&p.theta, &p.delta].into_iter().find(|s| !s.is_empty())
}

struct Simulation<'a> {
    config: &'a ExperimentConfig,
    schemes: &'a [Scheme],
    transform: Option<TransformedProblem>,
}

impl Simulation<'_> {
    fn needs_fine(&self) -> bool {
        self.config.sup_error || (!self.config.occupation_eps.is_empty() && diagnostic_surface(self.config).is_some())
    }

    /// Coarse trajectory and, when needed, its values on the fine grid.
    fn scheme_path(
        &self,
        scheme: Scheme,
        drivers: &CoarseDrivers,
        bundle: &PathBundle,
    ) -> Result<(Trajectory, Option<Vec<f64>>)> {
        let problem = &self.config.problem;
        let fine = self.needs_fine();
        match scheme {
            Scheme::Euler | Scheme::Milstein => {
                let correction = scheme == Scheme::Milstein;
                let traj = if correction {
                    milstein_path(problem, &problem.x0, drivers)?
                } else {
                    euler_path(problem, &problem.x0, drivers)?
                };
                let states =
                    if fine { Some(continuous_interpolation(problem, &traj, bundle, correction)?) } else { None };
                Ok((traj, states))
            }
            Scheme::TransformedMilstein => {
                let tf = self.transform.as_ref().expect("transform built for transformed scheme");
                let z = milstein_path(tf, &tf.transformed_x0()?, drivers)?;
                let states = if fine { Some(transformed_interpolation(tf, &z, bundle)?) } else { None };
                Ok((map_back(tf, &z)?, states))
            }
        }
    }

    fn sample(
        &self,
        scheme: Scheme,
        reference: &Trajectory,
        all: &[CoarseDrivers],
        bundle: &PathBundle,
    ) -> Result<SchemeSample> {
        let cfg = self.config;
        let d = reference.dim();
        let surface = diagnostic_surface(cfg).filter(|_| !cfg.occupation_eps.is_empty());
        let mut sample = SchemeSample { diffs: Vec::new(), occupation: Vec::new(), crossing: Vec::new() };
        for drivers in all {
            let (traj, fine) = self.scheme_path(scheme, drivers, bundle)?;
            let diff = if cfg.sup_error {
                let fine = fine.as_ref().expect("fine states for sup error");
                reference
                    .states()
                    .chunks_exact(d)
                    .zip(fine.chunks_exact(d))
                    .map(|(a, b)| norm_diff(a, b))
                    .fold(0.0, f64::max)
            } else {
                norm_diff(reference.final_state(), traj.final_state())
            };
            sample.diffs.push(diff);
            if let (Some(surface), Some(fine)) = (surface, fine.as_ref()) {
                for &eps in &cfg.occupation_eps {
                    sample.occupation.push(occupation_fraction(fine, d, surface, eps));
                }
                sample.crossing.push(crossing_fraction(fine, &traj, surface));
            }
        }
        Ok(sample)
    }

    fn repetition(&self, rep: u64) -> Result<RepOutcome> {
        let cfg = self.config;
        let d = cfg.problem.dim();
        let bundle = generate_fine_path(cfg.seed, rep, cfg.fine_n, d);
        let fine = CoarseDrivers::from_bundle(&bundle, cfg.fine_n)?;
        let reference = match milstein_path(&cfg.problem, &cfg.problem.x0, &fine) {
            Ok(t) => t,
            Err(e) if is_abort(&e) => return Ok(vec![None; self.schemes.len()]),
            Err(e) => return Err(e),
        };
        let all = drivers_for(&bundle, &fine, &cfg.n_list)?;
        self.schemes
            .iter()
            .map(|&s| match self.sample(s, &reference, &all, &bundle) {
                Ok(sample) => Ok(Some(sample)),
                Err(e) if is_abort(&e) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn reduce(config: &ExperimentConfig, scheme: Scheme, samples: Vec<&SchemeSample>, aborted: usize) -> ErrorTable {
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let n_eps = config.occupation_eps.len();
    for (i, &n) in config.n_list.iter().enumerate() {
        let norms: Vec<f64> = samples.iter().map(|s| s.diffs[i]).collect();
        for &p in &config.p_list {
            let e = empirical_error_from_norms(&norms, p);
            rows.push(ErrorRow { n, p, error: e.error, stderr: e.stderr });
        }
        if samples.first().is_some_and(|s| !s.crossing.is_empty()) {
            for (k, &eps_tilde) in config.occupation_eps.iter().enumerate() {
                let values: Vec<f64> = samples.iter().map(|s| s.occupation[i * n_eps + k]).collect();
                let (mean, stderr) = mean_and_stderr(&values);
                diagnostics.push(Diagnostic { n, kind: DiagnosticKind::Occupation { eps_tilde }, mean, stderr });
            }
            let values: Vec<f64> = samples.iter().map(|s| s.crossing[i]).collect();
            let (mean, stderr) = mean_and_stderr(&values);
            diagnostics.push(Diagnostic { n, kind: DiagnosticKind::Crossing, mean, stderr });
        }
    }
    let mut table = ErrorTable {
        scheme: scheme.name().to_string(),
        problem: config.problem_name.clone(),
        reps: samples.len(),
        seed: config.seed,
        aborted,
        rows,
        rates: Vec::new(),
        diagnostics,
    };
    // Fits that cannot be formed (fewer than three n, a zero error) are
    // left out of the table.
    table.rates = config.p_list.iter().filter_map(|&p| fit_rate(&table, p).ok()).collect();
    table
}

/// Run `schemes` on shared paths and a shared reference; one table per
/// scheme, in the given order.
pub fn run_comparison(config: &ExperimentConfig, schemes: &[Scheme]) -> Result<Vec<ErrorTable>> {
    config.validate()?;
    let transform = if schemes.contains(&Scheme::TransformedMilstein) {
        Some(TransformedProblem::new(config.problem.clone(), config.transform)?)
    } else {
        None
    };
    let sim = Simulation { config, schemes, transform };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<RepOutcome>> =
        pool.install(|| (0..config.reps as u64).into_par_iter().map(|rep| sim.repetition(rep)).collect());
    let outcomes: Vec<RepOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let allowed = (MAX_ABORT_FRACTION * config.reps as f64).floor() as usize;
    let mut tables = Vec::with_capacity(schemes.len());
    for (k, &scheme) in schemes.iter().enumerate() {
        let samples: Vec<&SchemeSample> = outcomes.iter().filter_map(|o| o[k].as_ref()).collect();
        let aborted = config.reps - samples.len();
        if aborted > allowed {
            return Err(Error::TooManyAborts { aborted, reps: config.reps });
        }
        tables.push(reduce(config, scheme, samples, aborted));
    }
    Ok(tables)
}

/// Run the configured scheme.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ErrorTable> {
    Ok(run_comparison(config, &[config.scheme])?.remove(0))
}
