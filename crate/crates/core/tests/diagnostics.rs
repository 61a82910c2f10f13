use inclusion_accel::diagnostics::{
    check_sequence_bound, check_u_descent, check_v_descent, check_v_lower_bound, eag_sequence, potential_u,
    u1_bound, v1_bound, v1_bound_unconstrained, IdentityTraceObserver,
};
use inclusion_accel::problems::{make_bilinear, make_rotation_family, Constraint, ProblemInstance};
use inclusion_accel::solvers::{run, StepView};
use inclusion_accel::{Algorithm, DenseVector, SolverConfig, Termination};
use nalgebra::DMatrix;

fn v(x: &[f64]) -> DenseVector {
    DenseVector::new(x.to_vec()).unwrap()
}

fn bilinear_scalar() -> ProblemInstance {
    make_bilinear(&DMatrix::from_element(1, 1, 1.0), Constraint::None).unwrap()
}

fn box_bilinear() -> ProblemInstance {
    make_bilinear(&DMatrix::identity(2, 2), Constraint::Box { lo: -1.0, hi: 1.0 }).unwrap()
}

fn config(alg: Algorithm, p: &ProblemInstance, iters: usize) -> SolverConfig {
    SolverConfig::with_defaults(alg, p.lipschitz, p.rho, iters)
}

#[test]
fn v_descent_on_bilinear() {
    for (p, z0) in [(bilinear_scalar(), v(&[1.0, 1.0])), (box_bilinear(), v(&[1.0, -1.0, 0.5, 1.0]))] {
        let cfg = config(Algorithm::Eag, &p, 1000);
        let report = run(&p, &cfg, &z0, &mut ()).unwrap();
        let trace = check_v_descent(&report.records, cfg.eta, p.lipschitz);
        assert!(trace.precondition_met);
        assert_eq!(trace.entries.len(), 999);
        assert!(trace.holds(), "{:?}", trace.violations());
    }
}

#[test]
fn v_descent_with_illegal_step_is_flagged() {
    let p = box_bilinear();
    let mut cfg = config(Algorithm::Eag, &p, 1000);
    cfg.eta = 2.0 / p.lipschitz;
    let report = run(&p, &cfg, &v(&[1.0, -1.0, 0.5, 1.0]), &mut ()).unwrap();
    let trace = check_v_descent(&report.records, cfg.eta, p.lipschitz);
    assert!(!trace.precondition_met);
    assert!(!trace.violations().is_empty());
}

#[test]
fn u_descent_on_monotone_and_comonotone() {
    let mono = bilinear_scalar();
    let mut cfg = config(Algorithm::As, &mono, 1000);
    cfg.eta = 0.5 / mono.lipschitz;
    let report = run(&mono, &cfg, &v(&[1.0, 1.0]), &mut ()).unwrap();
    assert!(check_u_descent(&report.records, cfg.eta, cfg.rho).holds());

    let rot = make_rotation_family(-0.3, 1.0, 2).unwrap();
    let cfg = config(Algorithm::As, &rot, 1000);
    let report = run(&rot, &cfg, &v(&[1.0, -2.0, 0.3, 0.0]), &mut ()).unwrap();
    let trace = check_u_descent(&report.records, cfg.eta, cfg.rho);
    assert!(trace.precondition_met);
    assert!(trace.holds(), "{:?}", trace.violations());
}

#[test]
fn potentials_vanish_from_the_solution() {
    let rot = make_rotation_family(-0.2, 1.0, 1).unwrap();
    let report = run(&rot, &config(Algorithm::As, &rot, 50), &v(&[0.0, 0.0]), &mut ()).unwrap();
    assert!(report.records.iter().all(|r| r.potential == Some(0.0)));
}

#[test]
fn initial_potential_bounds() {
    for (p, z0) in [(bilinear_scalar(), v(&[1.0, 1.0])), (box_bilinear(), v(&[1.0, -1.0, 0.5, 1.0]))] {
        let cfg = config(Algorithm::Eag, &p, 1);
        let report = run(&p, &cfg, &z0, &mut ()).unwrap();
        let d = z0.dist(p.solution().unwrap());
        let v1 = report.records[0].potential.unwrap();
        assert!(v1 <= v1_bound(cfg.eta, p.lipschitz, d) + 1e-12);
        if p.feasible_set().unwrap().kind().name() == "full-space" {
            assert!(v1 <= v1_bound_unconstrained(cfg.eta, p.lipschitz, d) + 1e-12);
        }
    }

    let rot = make_rotation_family(-0.2, 1.0, 1).unwrap();
    let cfg = config(Algorithm::As, &rot, 1);
    let z0 = v(&[1.0, 2.0]);
    let mut z1 = None;
    let report = run(&rot, &cfg, &z0, &mut |s: &StepView<'_>| z1 = Some(s.z.clone())).unwrap();
    let z1 = z1.unwrap();
    let r = &report.records[0];
    let fz1 = rot.operator.eval(&z1).unwrap();
    let u1 = potential_u(1, cfg.eta, cfg.rho, &fz1, &DenseVector::zeros(2), &z1, &z0).unwrap();
    assert_eq!(Some(u1), r.potential);
    assert!(u1 <= u1_bound(cfg.eta, rot.lipschitz, z1.dist(&z0)) + 1e-12);
}

#[test]
fn identities_hold_along_runs() {
    let cases = [
        (Algorithm::Eag, bilinear_scalar(), v(&[1.0, 1.0])),
        (Algorithm::Eag, box_bilinear(), v(&[1.0, -1.0, 0.5, 1.0])),
        (Algorithm::As, bilinear_scalar(), v(&[1.0, 1.0])),
        (Algorithm::As, make_rotation_family(-0.2, 1.0, 2).unwrap(), v(&[1.0, -1.0, 0.5, 1.0])),
    ];
    for (alg, p, z0) in cases {
        let cfg = config(alg, &p, 500);
        let mut obs = IdentityTraceObserver::new(cfg.eta, p.lipschitz, cfg.delta, cfg.rho);
        run(&p, &cfg, &z0, &mut obs).unwrap();
        assert_eq!(obs.checked, 499, "{alg} on {}", p.name);
        assert!(obs.all_balance(), "{alg} on {}: {} {:?}", p.name, obs.worst_relative, obs.errors);
        if alg == Algorithm::As {
            assert!(obs.worst_certificate_gap <= 1e-9, "{}", obs.worst_certificate_gap);
        }
    }
}

#[test]
fn sequence_bound_on_eag_trace() {
    for (p, z0) in [(bilinear_scalar(), v(&[1.0, 1.0])), (box_bilinear(), v(&[1.0, -1.0, 0.5, 1.0]))] {
        let cfg = config(Algorithm::Eag, &p, 2000);
        let report = run(&p, &cfg, &z0, &mut ()).unwrap();
        let d = z0.dist(p.solution().unwrap());
        let a = eag_sequence(&report.records, cfg.eta, d);
        let verdict = check_sequence_bound(&a, 11.0, (cfg.eta * p.lipschitz).powi(2)).unwrap();
        assert!(verdict.passed(), "{verdict:?}");
    }
}

#[test]
fn v_lower_bound_along_runs() {
    for (p, z0) in [(bilinear_scalar(), v(&[1.0, 1.0])), (box_bilinear(), v(&[1.0, -1.0, 0.5, 1.0]))] {
        let cfg = config(Algorithm::Eag, &p, 1000);
        let report = run(&p, &cfg, &z0, &mut ()).unwrap();
        assert_eq!(report.termination, Termination::MaxIters);
        let d = z0.dist(p.solution().unwrap());
        assert!(check_v_lower_bound(&report.records, cfg.eta, d).is_empty());
    }
}
