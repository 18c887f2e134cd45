use vertexeuler_core::covering::{default_charts, BumpProfile, CoveringOptions, TransversalCovering};
use vertexeuler_core::euler_mq::{euler_total_flat, euler_total_general};
use vertexeuler_core::flat_bundle::{line_bundle, FlatBundle};
use vertexeuler_core::linalg::Matrix;
use vertexeuler_core::local_index::{nu_extrapolated, nu_scale_free, Cutoff, ScaleFreeOptions, TSchedule};
use vertexeuler_core::quadrature::Tolerance;

fn covering() -> TransversalCovering {
    TransversalCovering::new(default_charts(), BumpProfile::new(0.05).unwrap(), CoveringOptions::default()).unwrap()
}

fn shear(cov: &TransversalCovering) -> FlatBundle {
    let a = Matrix::from_rows([[1.0, 1.0], [0.0, 1.0]]);
    let b = Matrix::from_rows([[1.0, 2.0], [0.0, 1.0]]);
    FlatBundle::from_holonomy(a, b, cov.charts()).unwrap()
}

const INDEX_TOL: Tolerance = Tolerance { abs: 1e-14, rel: 1e-10, max_cells: 4000 };

#[test]
fn shear_bundle_indices_sum_to_global_integral() {
    let cov = covering();
    let bundle = shear(&cov);
    let records = cov.vertices(&bundle).unwrap();
    assert_eq!(records.len(), 32);
    let plus: Vec<_> = records.into_iter().filter(|r| r.in_b_plus).collect();
    assert_eq!(plus.len(), 8);

    let euler = euler_total_flat(&cov, &bundle, 1.0, Tolerance { abs: 1e-10, rel: 1e-8, max_cells: 4000 }).unwrap();
    let schedule = TSchedule::default();
    let (mut sum, mut err) = (0.0, 0.0);
    for r in &plus {
        let res = nu_extrapolated(r, &cov, &schedule, &Cutoff::for_vertex(r), INDEX_TOL).unwrap();
        let sf = nu_scale_free(r, ScaleFreeOptions::default()).unwrap();
        assert!((res.nu - sf.value).abs() <= res.error + sf.error, "{} vs {}", res.nu, sf.value);
        sum += res.nu;
        err += res.error;
    }
    assert!(euler.value.abs() < 1e-6);
    assert!((sum - euler.value).abs() <= err + euler.error, "{sum} ± {err} vs {}", euler.value);
}

#[test]
fn trivial_bundle_has_zero_indices() {
    let cov = covering();
    let bundle = FlatBundle::trivial(2, cov.charts()).unwrap();
    let schedule = TSchedule::default();
    for r in cov.vertices(&bundle).unwrap().iter().filter(|r| r.in_b_plus) {
        let res = nu_extrapolated(r, &cov, &schedule, &Cutoff::for_vertex(r), INDEX_TOL).unwrap();
        assert_eq!(res.nu, 0.0);
    }
}

#[test]
fn line_bundle_degree_is_recovered() {
    for k in [-1, 1] {
        let est = euler_total_general(&line_bundle(k), Tolerance { abs: 1e-10, rel: 1e-8, max_cells: 20000 }).unwrap();
        assert!((est.value - k as f64).abs() < 2e-2, "k = {k}: {}", est.value);
    }
}
