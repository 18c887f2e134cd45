//! Parallel evaluation of scenarios.
//!
//! Every evaluation is pure; results are collected in input order and summed
//! pairwise, so reports do not depend on the worker count.

use std::time::Instant;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use vertexeuler_core::atlas::{normal_coordinate, wrapped_distance, TorusPoint};
use vertexeuler_core::covering::{TransversalCovering, VertexRecord};
use vertexeuler_core::euler_mq::{assemble_cells, euler_total_general, flat_cell_integral, EulerEstimate, FlatIntegrand};
use vertexeuler_core::flat_bundle::FlatBundle;
use vertexeuler_core::gaussian_fiber::{fiber_integrate, QuadraticWeight};
use vertexeuler_core::local_index::{
    assemble_local_index, gamma_diagnostic, log_log_slope, nu_at_t, nu_scale_free, Cutoff, LocalIndexResult,
    ScaleFreeOptions, TSchedule, VertexKernel, Window, window_avoids_b_plus,
};
use vertexeuler_core::quadrature::{pairwise_sum, Tolerance};

use crate::error::{HarnessError, Result};
use crate::report::{
    Assembly, DecayCurve, Diagnostics, GammaCurve, LineReport, MonteCarloCheck, OrderingRow, OrderingStudy, Report,
    Timing, Value, VertexReport, WindowKind, SCHEMA_VERSION,
};
use crate::scenario::Scenario;

pub const WORKERS_ENV: &str = "VERTEXEULER_WORKERS";

/// Accepted distance of a line-bundle result from its degree.
pub const LINE_TOLERANCE: f64 = 2e-2;

/// Accepted spread of `Σ ν_p` across orderings.
pub const ORDERING_LIMIT: f64 = 5e-3;

/// Midpoint grid of the curvature oracle.
pub const ORACLE_RESOLUTION: usize = 512;

/// Relative finite-difference step of `γ_T`.
pub const GAMMA_STEP: f64 = 1e-3;

/// Sizes the global worker pool from `workers` or `VERTEXEULER_WORKERS`.
pub fn configure_workers(workers: Option<usize>) -> Result<()> {
    let n = match workers {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| HarnessError::Invalid(format!("{WORKERS_ENV}={v:?}")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(HarnessError::Invalid("worker count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    }
    Ok(())
}

fn core<T>(context: &str, r: vertexeuler_core::Result<T>) -> Result<T> {
    r.map_err(|e| HarnessError::core(context, e))
}

/// Weighted flat integral with vertex cells evaluated in parallel.
pub fn flat_integral(
    covering: &TransversalCovering,
    bundle: &FlatBundle,
    t: f64,
    weight: &(dyn Fn(TorusPoint) -> f64 + Sync),
    tol: Tolerance,
) -> Result<EulerEstimate> {
    let integrand = core("flat integrand", FlatIntegrand::new(covering, bundle, t))?;
    let records = covering.vertex_layout();
    let cells = records
        .par_iter()
        .map(|r| flat_cell_integral(&integrand, r, weight, tol))
        .collect::<vertexeuler_core::Result<Vec<_>>>();
    Ok(assemble_cells(&core("vertex cell", cells)?))
}

/// `B₊` records of `covering` for `bundle`.
pub fn b_plus(covering: &TransversalCovering, bundle: &FlatBundle) -> Result<Vec<VertexRecord>> {
    Ok(core("vertices", covering.vertices(bundle))?.into_iter().filter(|r| r.in_b_plus).collect())
}

/// `ν_p` for each record, schedule entries and vertices in parallel.
pub fn local_indices(
    covering: &TransversalCovering,
    records: &[VertexRecord],
    schedule: &TSchedule,
    tol: Tolerance,
) -> Result<Vec<LocalIndexResult>> {
    let ts = schedule.values();
    let jobs: Vec<(usize, f64)> = (0..records.len()).cartesian_product(ts.iter().copied()).collect();
    let values = jobs
        .par_iter()
        .map(|(i, t)| {
            let r = &records[*i];
            nu_at_t(r, covering, *t, &Cutoff::for_vertex(r), tol)
        })
        .collect::<vertexeuler_core::Result<Vec<_>>>();
    let values = core("local index", values)?;
    let scale_free = records
        .par_iter()
        .map(|r| nu_scale_free(r, ScaleFreeOptions::default()))
        .collect::<vertexeuler_core::Result<Vec<_>>>();
    let scale_free = core("scale-free index", scale_free)?;
    records
        .iter()
        .zip(values.chunks(ts.len()))
        .zip(scale_free)
        .map(|((r, v), sf)| core("extrapolation", assemble_local_index(r, schedule, v, sf)))
        .collect()
}

pub fn vertex_report(record: &VertexRecord, result: &LocalIndexResult) -> VertexReport {
    VertexReport {
        point: result.vertex.point,
        boundary_indices: record.boundary_indices.clone(),
        containing_indices: record.containing_indices.clone(),
        v_radius: record.v_radius,
        schedule: result.schedule.clone(),
        values: result.values.clone(),
        value_errors: result.value_errors.clone(),
        nu: Value { value: result.nu, error: result.error },
        fit_residual: result.fit.residual,
        fit_coefficients: result.fit.coefficients.clone(),
        scale_free: Value { value: result.scale_free, error: result.scale_free_error },
        agreement: result.agreement,
    }
}

fn sum_of(vertices: &[VertexReport]) -> Value {
    let v: Vec<f64> = vertices.iter().map(|r| r.nu.value).collect();
    let e: Vec<f64> = vertices.iter().map(|r| r.nu.error).collect();
    Value { value: pairwise_sum(&v), error: pairwise_sum(&e) }
}

fn flat_setup(scenario: &Scenario) -> Result<(TransversalCovering, FlatBundle)> {
    let covering = scenario.covering()?;
    let bundle = scenario.flat_bundle(&covering)?;
    Ok((covering, bundle))
}

/// Local indices only.
pub fn run_indices(scenario: &Scenario) -> Result<Report> {
    if scenario.is_line() {
        return Err(HarnessError::Invalid("line-bundle scenarios have no vertex indices".into()));
    }
    let (covering, bundle) = flat_setup(scenario)?;
    let records = b_plus(&covering, &bundle)?;
    let results = local_indices(&covering, &records, &scenario.t_schedule()?, scenario.quadrature.index.into())?;
    let mut report = Report::empty(&scenario.name);
    report.vertices = records.iter().zip(&results).map(|(r, l)| vertex_report(r, l)).collect();
    report.nu_sum = sum_of(&report.vertices);
    report.agreement = report.vertices.iter().all(|v| v.agreement);
    Ok(report)
}

/// Splits the flat integral at `t` by the `V_p` cutoffs of `records`.
pub fn partition_assembly(
    covering: &TransversalCovering,
    bundle: &FlatBundle,
    records: &[VertexRecord],
    t: f64,
    tol: Tolerance,
) -> Result<Assembly> {
    let windows: Vec<(TorusPoint, Cutoff)> = records.iter().map(|r| (r.point(), Cutoff::for_vertex(r))).collect();
    let mut windowed = Vec::with_capacity(records.len());
    let mut windowed_error = 0.0;
    for (p, c) in &windows {
        let (p, c) = (*p, *c);
        let est = flat_integral(covering, bundle, t, &move |x| c.value(wrapped_distance(x, p)), tol)?;
        windowed.push(est.value);
        windowed_error += est.error;
    }
    let rest = |x: TorusPoint| 1.0 - windows.iter().map(|(p, c)| c.value(wrapped_distance(x, *p))).sum::<f64>();
    let remainder = flat_integral(covering, bundle, t, &rest, tol)?;
    let total = flat_integral(covering, bundle, t, &|_| 1.0, tol)?;
    let assembled = pairwise_sum(&windowed) + remainder.value;
    let scale = windowed.iter().map(|w| w.abs()).sum::<f64>() + remainder.value.abs() + total.value.abs();
    let bound = windowed_error + remainder.error + total.error + 64.0 * f64::EPSILON * scale;
    Ok(Assembly {
        t,
        consistent: (assembled - total.value).abs() <= bound,
        windowed,
        remainder: Value { value: remainder.value, error: remainder.error },
        windowed_error,
        total: Value { value: total.value, error: total.error },
    })
}

/// Global integral, local indices, their comparison and the partition of
/// unity assembly at the largest `T`. Line-bundle scenarios are routed to
/// [`run_line_bundle`].
pub fn run_verify(scenario: &Scenario, timing: bool) -> Result<Report> {
    if scenario.is_line() {
        let t0 = Instant::now();
        let line = run_line_bundle(scenario)?;
        let mut report = Report::empty(&scenario.name);
        report.euler = Some(line.euler);
        report.matches = line.matches;
        report.line = Some(line);
        if timing {
            report.timing =
                Some(Timing { euler_seconds: t0.elapsed().as_secs_f64(), indices_seconds: 0.0, assembly_seconds: 0.0 });
        }
        return Ok(report);
    }
    let (covering, bundle) = flat_setup(scenario)?;
    let schedule = scenario.t_schedule()?;
    let t0 = Instant::now();
    let euler = flat_integral(&covering, &bundle, scenario.quadrature.euler_t, &|_| 1.0, scenario.quadrature.euler.into())?;
    let t1 = Instant::now();
    let records = b_plus(&covering, &bundle)?;
    let results = local_indices(&covering, &records, &schedule, scenario.quadrature.index.into())?;
    let t2 = Instant::now();
    let t_max = *schedule.values().last().expect("schedule is non-empty");
    let assembly = partition_assembly(&covering, &bundle, &records, t_max, scenario.quadrature.euler.into())?;
    let t3 = Instant::now();

    let mut report = Report::empty(&scenario.name);
    report.vertices = records.iter().zip(&results).map(|(r, l)| vertex_report(r, l)).collect();
    report.nu_sum = sum_of(&report.vertices);
    report.euler = Some(Value { value: euler.value, error: euler.error });
    report.matches = (report.nu_sum.value - euler.value).abs() <= report.nu_sum.error + euler.error;
    report.agreement = report.vertices.iter().all(|v| v.agreement);
    report.assembly = Some(assembly);
    if timing {
        report.timing = Some(Timing {
            euler_seconds: (t1 - t0).as_secs_f64(),
            indices_seconds: (t2 - t1).as_secs_f64(),
            assembly_seconds: (t3 - t2).as_secs_f64(),
        });
    }
    Ok(report)
}

/// All permutations of `1..=n` in lexicographic order.
pub fn all_permutations(n: u32) -> Vec<Vec<u32>> {
    (1..=n).permutations(n as usize).collect()
}

/// `Σ ν_p` under re-orderings of the charts. Chart `k` gets index
/// `permutation[k − 1]`.
pub fn run_ordering_study(scenario: &Scenario, permutations: &[Vec<u32>]) -> Result<OrderingStudy> {
    if scenario.is_line() {
        return Err(HarnessError::Invalid("ordering studies need a flat bundle".into()));
    }
    let base = scenario.covering()?;
    let schedule = scenario.t_schedule()?;
    let tol: Tolerance = scenario.quadrature.index.into();
    let mut rows = Vec::with_capacity(permutations.len());
    for perm in permutations {
        let covering = core("permutation", base.permute_ordering(perm))?;
        let bundle = scenario.flat_bundle(&covering)?;
        let records = b_plus(&covering, &bundle)?;
        let results = local_indices(&covering, &records, &schedule, tol)?;
        let nu: Vec<f64> = results.iter().map(|r| r.nu).collect();
        rows.push(OrderingRow {
            permutation: perm.clone(),
            b_plus: records.iter().map(|r| r.point().coords()).collect(),
            errors: results.iter().map(|r| r.error).collect(),
            sum: pairwise_sum(&nu),
            nu,
        });
    }
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.sum), hi.max(r.sum)));
    let spread = if rows.is_empty() { 0.0 } else { hi - lo };
    Ok(OrderingStudy {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        rows,
        spread,
        limit: ORDERING_LIMIT,
        invariant: spread < ORDERING_LIMIT,
    })
}

/// Euler number of the scenario's line bundle, with the curvature oracle.
pub fn run_line_bundle(scenario: &Scenario) -> Result<LineReport> {
    let bundle = scenario.line_bundle()?;
    let est = core("line bundle", euler_total_general(&bundle, scenario.quadrature.general.into()))?;
    let oracle = bundle.euler_number_by_curvature(ORACLE_RESOLUTION);
    let k = bundle.degree as f64;
    Ok(LineReport {
        degree: bundle.degree,
        euler: Value { value: est.value, error: est.error },
        curvature_oracle: oracle,
        tolerance: LINE_TOLERANCE,
        matches: (est.value - k).abs() <= LINE_TOLERANCE && (oracle - k).abs() <= LINE_TOLERANCE,
    })
}

/// Windows for the decay study: one per vertex outside `B₊`, one inside
/// each of their collar cells away from the vertex, and one far from every
/// collar.
pub fn decay_windows(covering: &TransversalCovering, bundle: &FlatBundle) -> Result<Vec<(WindowKind, Window)>> {
    let records = core("vertices", covering.vertices(bundle))?;
    let width = covering.profile().width();
    let mut out = Vec::new();
    for r in records.iter().filter(|r| !r.in_b_plus) {
        out.push((WindowKind::Vertex, Window { center: r.point(), radius: r.v_radius }));
    }
    for r in records.iter().filter(|r| !r.in_b_plus) {
        if let Some(q) = r.cell.point([0.6 * width, 0.6 * width]) {
            let center = TorusPoint::new(q[0], q[1]);
            let radius = 0.25 * width;
            if wrapped_distance(center, r.point()) > radius {
                out.push((WindowKind::Interior, Window { center, radius }));
            }
        }
    }
    if let Some(w) = empty_window(covering) {
        out.push((WindowKind::Empty, w));
    }
    Ok(out)
}

/// Grid point farthest from every collar band.
fn empty_window(covering: &TransversalCovering) -> Option<Window> {
    let width = covering.profile().width();
    let n = 64;
    let mut best: Option<(f64, TorusPoint)> = None;
    for i in 0..n {
        for j in 0..n {
            let x = TorusPoint::new(i as f64 / n as f64, j as f64 / n as f64);
            let clearance = covering
                .charts()
                .iter()
                .map(|c| {
                    let d = normal_coordinate(c, x);
                    if d <= 0.0 {
                        -d
                    } else if d >= width {
                        d - width
                    } else {
                        0.0
                    }
                })
                .fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(b, _)| clearance > b) {
                best = Some((clearance, x));
            }
        }
    }
    best.filter(|(c, _)| *c > 0.0).map(|(c, x)| Window { center: x, radius: 0.5 * c })
}

pub fn decay_curves(
    covering: &TransversalCovering,
    bundle: &FlatBundle,
    windows: &[(WindowKind, Window)],
    schedule: &TSchedule,
    tol: Tolerance,
) -> Result<Vec<DecayCurve>> {
    for (_, w) in windows {
        core("window", window_avoids_b_plus(w, covering, bundle))?;
    }
    let ts = schedule.values();
    let jobs: Vec<(usize, f64)> = (0..windows.len()).cartesian_product(ts.iter().copied()).collect();
    let values = jobs
        .par_iter()
        .map(|(i, t)| {
            let w = windows[*i].1;
            flat_integral(covering, bundle, *t, &move |x| w.weight(x), tol).map(|e| e.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(windows
        .iter()
        .zip(values.chunks(ts.len()))
        .map(|((kind, w), v)| DecayCurve {
            kind: *kind,
            center: w.center.coords(),
            radius: w.radius,
            t: ts.to_vec(),
            values: v.to_vec(),
        })
        .collect())
}

/// `γ_T` over the schedule for each record with a nonvanishing kernel.
pub fn gamma_curves(
    covering: &TransversalCovering,
    records: &[VertexRecord],
    schedule: &TSchedule,
    tol: Tolerance,
) -> Result<Vec<GammaCurve>> {
    let mut live = Vec::new();
    for r in records {
        if core("kernel", VertexKernel::new(r))?.trace != 0.0 {
            live.push(r);
        }
    }
    let ts = schedule.values();
    let jobs: Vec<(usize, f64)> = (0..live.len()).cartesian_product(ts.iter().copied()).collect();
    let gammas = jobs
        .par_iter()
        .map(|(i, t)| {
            let r = live[*i];
            gamma_diagnostic(r, covering, *t, &Cutoff::for_vertex(r), GAMMA_STEP, tol)
        })
        .collect::<vertexeuler_core::Result<Vec<_>>>();
    let gammas = core("gamma", gammas)?;
    live.iter()
        .zip(gammas.chunks(ts.len()))
        .map(|(r, g)| {
            let gamma: Vec<f64> = g.iter().map(|e| e.value).collect();
            Ok(GammaCurve {
                point: r.point().coords(),
                t: ts.to_vec(),
                slope: core("slope", log_log_slope(ts, &gamma))?,
                gamma_double_step: g.iter().map(|e| e.value_double_step).collect(),
                analytic: g.iter().map(|e| e.analytic).collect(),
                gamma,
            })
        })
        .collect()
}

/// Monte Carlo estimate of the vertex fiber integral against its closed
/// form, with `y ~ N(0, (2Q)⁻¹)`.
pub fn monte_carlo_check(record: &VertexRecord, s: [f64; 2], samples: usize, seed: u64) -> Result<MonteCarloCheck> {
    let kernel = core("kernel", VertexKernel::new(record))?;
    let q = core("metric", QuadraticWeight::new(kernel.scaled_metric(s)))?;
    let closed_form = core("fiber integral", fiber_integrate(&kernel.form, &q))?;
    let cov = q.inverse().scale(0.5);
    let l = core("covariance", cov.cholesky())?;
    let poly = kernel.form.coefficient();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..samples {
        let z: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        let y = l.mul_vec(&z);
        let v = poly.evaluate(&y);
        sum += v;
        sum2 += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    let norm = q.normalization();
    Ok(MonteCarloCheck {
        point: record.point().coords(),
        s,
        closed_form,
        sampled: norm * mean,
        standard_error: norm * (var / n).sqrt(),
    })
}

/// `γ_T` curves, decay windows and Monte Carlo checks of the fiber integral.
pub fn run_diagnostics(scenario: &Scenario, samples: usize) -> Result<Diagnostics> {
    if scenario.is_line() {
        return Err(HarnessError::Invalid("diagnostics need a flat bundle".into()));
    }
    let (covering, bundle) = flat_setup(scenario)?;
    let schedule = scenario.t_schedule()?;
    let records = b_plus(&covering, &bundle)?;
    let gamma = gamma_curves(&covering, &records, &schedule, scenario.quadrature.index.into())?;
    let windows = decay_windows(&covering, &bundle)?;
    let decay = decay_curves(&covering, &bundle, &windows, &schedule, scenario.quadrature.euler.into())?;
    let mut monte_carlo = Vec::new();
    for (i, r) in records.iter().enumerate() {
        for (j, s) in [[1.0, 1.0], [0.3, 3.0]].into_iter().enumerate() {
            let seed = scenario.seed.wrapping_add((2 * i + j) as u64);
            monte_carlo.push(monte_carlo_check(r, s, samples, seed)?);
        }
    }
    Ok(Diagnostics { schema_version: SCHEMA_VERSION, scenario: scenario.name.clone(), seed: scenario.seed, gamma, decay, monte_carlo })
}
