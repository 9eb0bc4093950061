//! Executes the checks of a scenario and writes their reports.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use lipflow_core::calculus::{difference_quotient, make_cutoff_field};
use lipflow_core::theorems::{self, CoefficientVector, ConvergenceReport, TheoremError};
use lipflow_core::{Bump, Grid, SampledFunction};

use crate::report::{write_report, CheckOutcome};
use crate::scenario::{CheckKind, CheckSpec, Scenario};

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Overrides the scenario's output directory.
    pub out: Option<PathBuf>,
    /// Most checks running at once.
    pub jobs: usize,
    /// Multiplies every threshold.
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out: None,
            jobs: 1,
            tol_scale: 1.0,
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    /// In declaration order.
    pub outcomes: Vec<CheckOutcome>,
    pub files: Vec<PathBuf>,
}

impl RunResult {
    /// True when no check failed or raised. Diagnostic reports do not count
    /// as failures.
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(CheckOutcome::passed)
    }
}

fn error_text(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Runs one check with `threads` worker threads for its node loops.
pub fn run_check(
    scenario: &Scenario,
    spec: &CheckSpec,
    tol_scale: f64,
    threads: usize,
) -> CheckOutcome {
    let threshold = spec.threshold * tol_scale;
    match evaluate(scenario, spec, threshold, threads) {
        Ok(mut report) => {
            report.label = spec.name.clone();
            CheckOutcome::Report(report)
        }
        Err(message) => CheckOutcome::Error {
            label: spec.name.clone(),
            threshold,
            message,
        },
    }
}

fn evaluate(
    scenario: &Scenario,
    spec: &CheckSpec,
    threshold: f64,
    threads: usize,
) -> Result<ConvergenceReport, String> {
    let region = &scenario.region;
    let dim = region.dimension();
    let grid =
        Grid::new(region.domain().clone(), spec.tuning.resolution(dim)).map_err(error_text)?;
    let sample = |name: &str| {
        SampledFunction::sample(scenario.function(name), grid.clone()).map_err(error_text)
    };
    let mut settings = spec.tuning.settings(threshold);
    settings.integrator.threads = threads.max(1);
    let t = spec.t_sequence.as_slice();
    let sub = region.sub();
    let th = |r: Result<ConvergenceReport, TheoremError>| r.map_err(error_text);

    match &spec.kind {
        CheckKind::MainEquivalence { field, f, g } => th(theorems::verify_main_equivalence(
            &sample(f)?,
            &sample(g)?,
            scenario.field(field),
            sub,
            t,
            &settings,
        )),
        CheckKind::DqDistributionLimit { field, f, bump } => {
            let u = Bump::new(bump.center.clone(), bump.radius).map_err(error_text)?;
            th(theorems::verify_dq_distribution_limit(
                &sample(f)?,
                scenario.field(field),
                &u,
                t,
                &settings,
            ))
        }
        CheckKind::JacobianBounds {
            field,
            points,
            samples,
        } => {
            let points = match points {
                Some(p) => p.clone(),
                None => theorems::sample_points(region.working_box(), *samples, settings.seed),
            };
            let mut t_grid: Vec<f64> = t.to_vec();
            t_grid.push(0.0);
            t_grid.extend(t.iter().rev().map(|s| -s));
            th(theorems::verify_jacobian_bounds(
                scenario.field(field),
                &points,
                &t_grid,
                &settings,
            ))
        }
        CheckKind::WeakstarDivergence { field, bumps } => {
            let family = bumps
                .iter()
                .map(|b| Bump::new(b.center.clone(), b.radius).and_then(|u| u.sample(grid.clone())))
                .collect::<Result<Vec<_>, _>>()
                .map_err(error_text)?;
            th(theorems::verify_weakstar_divergence(
                scenario.field(field),
                &family,
                t,
                &settings,
            ))
        }
        CheckKind::Semigroup { field, f, pairs } => th(theorems::verify_semigroup(
            scenario.field(field),
            &sample(f)?,
            pairs,
            t,
            &settings,
        )),
        CheckKind::Commutation { field, f } => {
            let pairs: Vec<(f64, f64)> = t
                .iter()
                .flat_map(|&a| t.iter().map(move |&b| (a, b)))
                .collect();
            th(theorems::verify_commutation(
                &sample(f)?,
                scenario.field(field),
                &pairs,
                &settings,
            ))
        }
        CheckKind::UpperGradient { field, f, h } => th(theorems::verify_upper_gradient(
            &sample(f)?,
            &sample(h)?,
            scenario.field(field),
            t,
            &settings,
        )),
        CheckKind::System {
            fields,
            f,
            h,
            coefficients,
            coefficient_vectors,
        } => {
            let fields: Vec<_> = fields.iter().map(|n| scenario.field(n).clone()).collect();
            let coeffs = match coefficient_vectors {
                Some(vs) => vs
                    .iter()
                    .map(|v| CoefficientVector::new(v.clone()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(error_text)?,
                None => {
                    CoefficientVector::sample_unit_ball(fields.len(), *coefficients, settings.seed)
                }
            };
            th(theorems::verify_system(
                &sample(f)?,
                &fields,
                &sample(h)?,
                &coeffs,
                t,
                &settings,
            ))
        }
        CheckKind::CutoffLocalization { field, f, g, bump } => {
            let cutoff = make_cutoff_field(scenario.field(field), &bump.center, bump.radius)
                .map_err(error_text)?;
            th(theorems::verify_cutoff_localization(
                &sample(f)?,
                &sample(g)?,
                &cutoff,
                t,
                &settings,
            ))
        }
        CheckKind::LebesguePoints {
            field,
            f,
            points,
            exceptional,
        } => th(theorems::lebesgue_point_check(
            &sample(f)?,
            scenario.field(field),
            points,
            exceptional,
            t,
            &settings,
        )),
        CheckKind::UniformIntegrability { field, f, deltas } => {
            let f = sample(f)?;
            let family = t
                .iter()
                .map(|&s| {
                    difference_quotient(&f, scenario.field(field), s, &settings.integrator)
                        .map(|q| q.function)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(error_text)?;
            let diag =
                theorems::uniform_integrability_diagnostic(&family, deltas).map_err(error_text)?;
            let mut report = diag.to_report();
            report.threshold = threshold;
            Ok(report)
        }
    }
}

/// Runs every check, at most `opts.jobs` at a time, then writes the reports
/// in declaration order. A scenario without checks writes nothing.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> std::io::Result<RunResult> {
    let checks = &scenario.checks;
    if checks.is_empty() {
        return Ok(RunResult {
            outcomes: Vec::new(),
            files: Vec::new(),
        });
    }
    let jobs = opts.jobs.clamp(1, checks.len());
    let cores = thread::available_parallelism().map_or(1, |n| n.get());
    let threads = (cores / jobs).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<CheckOutcome>>> = checks.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = checks.get(i) else { break };
                let outcome = run_check(scenario, spec, opts.tol_scale, threads);
                *slots[i].lock().expect("slot") = Some(outcome);
            });
        }
    });
    let outcomes: Vec<CheckOutcome> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot").expect("every check ran"))
        .collect();
    let dir = opts.out.clone().unwrap_or_else(|| scenario.output.clone());
    let mut files = Vec::with_capacity(2 * outcomes.len());
    for o in &outcomes {
        files.extend(write_report(&dir, &scenario.name, o)?);
    }
    Ok(RunResult { outcomes, files })
}
