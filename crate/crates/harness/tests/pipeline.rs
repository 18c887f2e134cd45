use std::path::PathBuf;

use vertexeuler::pipeline::{b_plus, run_verify};
use vertexeuler::report::{emit_report, parse_report, Format};
use vertexeuler::Scenario;
use vertexeuler_core::local_index::{nu_extrapolated, Cutoff, TSchedule, VertexKernel};

fn scenario(name: &str) -> Scenario {
    Scenario::load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))).unwrap()
}

#[test]
fn index_does_not_depend_on_the_cutoff() {
    let s = scenario("shear");
    let cov = s.covering().unwrap();
    let bundle = s.flat_bundle(&cov).unwrap();
    let tol = s.quadrature.index.into();
    let schedule = TSchedule::default();
    let mut checked = 0;
    for r in b_plus(&cov, &bundle).unwrap() {
        if VertexKernel::new(&r).unwrap().trace == 0.0 {
            continue;
        }
        let wide = nu_extrapolated(&r, &cov, &schedule, &Cutoff::for_vertex(&r), tol).unwrap();
        let other = Cutoff::new(0.75 * r.v_radius, 0.375 * r.v_radius).unwrap();
        let narrow = nu_extrapolated(&r, &cov, &schedule, &other, tol).unwrap();
        assert!(
            (wide.nu - narrow.nu).abs() <= wide.error + narrow.error,
            "{} ± {} vs {} ± {}",
            wide.nu,
            wide.error,
            narrow.nu,
            narrow.error
        );
        checked += 1;
    }
    assert!(checked >= 2);
}

#[test]
fn partition_of_unity_assembly_is_consistent() {
    for name in ["trivial", "shear"] {
        let r = run_verify(&scenario(name), false).unwrap();
        let a = r.assembly.expect("flat scenarios assemble");
        assert!(a.consistent, "{name}: {a:?}");
        assert_eq!(a.windowed.len(), r.vertices.len());
    }
}

#[test]
fn json_report_round_trips() {
    let r = run_verify(&scenario("diagonal"), false).unwrap();
    let bytes = emit_report(&r, Format::Json).unwrap();
    let back = parse_report(&bytes).unwrap();
    assert_eq!(back, r);
    assert_eq!(emit_report(&back, Format::Json).unwrap(), bytes);
}

#[test]
fn scenario_emit_parse_round_trips() {
    for name in ["trivial", "diagonal", "shear", "line"] {
        let s = scenario(name);
        let text = s.emit().unwrap();
        assert_eq!(Scenario::parse(&text).unwrap(), s);
    }
}
