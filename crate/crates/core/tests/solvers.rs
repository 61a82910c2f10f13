use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use inclusion_accel::operators::{ConvexSet, LipschitzOperator, MaxMonotoneOperator};
use inclusion_accel::problems::{
    make_bilinear, make_identity_1d, make_l1_regularized_minmax, make_rotation_family, Constraint,
    ProblemInstance,
};
use inclusion_accel::solvers::{as_step, eag_step, eg_step, run, AsState, EagState, EgState, StepView};
use inclusion_accel::{Algorithm, DenseVector, EnvelopeVerdict, Error, SolverConfig, Termination};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn v(x: &[f64]) -> DenseVector {
    DenseVector::new(x.to_vec()).unwrap()
}

fn identity_op(dim: usize) -> LipschitzOperator {
    LipschitzOperator::linear(DMatrix::identity(dim, dim), 1.0).unwrap()
}

fn bilinear_scalar() -> ProblemInstance {
    make_bilinear(&DMatrix::from_element(1, 1, 1.0), Constraint::None).unwrap()
}

fn config(alg: Algorithm, p: &ProblemInstance, iters: usize) -> SolverConfig {
    SolverConfig::with_defaults(alg, p.lipschitz, p.rho, iters)
}

#[test]
fn eag_first_step_by_hand() {
    let f = identity_op(1);
    let set = ConvexSet::uniform_box(1, 0.0, 1.0).unwrap();
    let s0 = EagState::new(&f, &set, v(&[1.0])).unwrap();
    let s1 = eag_step(&s0, &f, &set, 1.0 / 3.0, 0.0).unwrap();
    assert!((s1.half.as_ref().unwrap()[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((s1.z[0] - 7.0 / 9.0).abs() < 1e-15);
    assert_eq!(s1.cert.as_ref().unwrap().c.as_slice(), &[0.0]);
    assert_eq!(s1.k, 1);
}

#[test]
fn eag_fixed_point_at_interior_solution() {
    let p = make_bilinear(&DMatrix::identity(2, 2), Constraint::Box { lo: -1.0, hi: 1.0 }).unwrap();
    let set = p.feasible_set().unwrap();
    let mut s = EagState::new(&p.operator, &set, DenseVector::zeros(4)).unwrap();
    for _ in 0..20 {
        s = eag_step(&s, &p.operator, &set, 0.3, 0.0).unwrap();
        assert_eq!(s.z, DenseVector::zeros(4));
        assert_eq!(s.cert.as_ref().unwrap().c, DenseVector::zeros(4));
    }
}

#[test]
fn unconstrained_eag_has_zero_certificates() {
    let p = bilinear_scalar();
    let set = p.feasible_set().unwrap();
    let mut s = EagState::new(&p.operator, &set, v(&[1.0, 1.0])).unwrap();
    for _ in 0..200 {
        s = eag_step(&s, &p.operator, &set, 1.0 / 3.0, 0.0).unwrap();
        assert!(s.cert.as_ref().unwrap().c.iter().all(|c| *c == 0.0));
    }
}

#[test]
fn as_two_steps_by_hand() {
    let f = identity_op(1);
    let a = MaxMonotoneOperator::Zero { dim: 1 };
    let s0 = AsState::new(&f, v(&[1.0]), 0.5).unwrap();
    let s1 = as_step(&s0, &f, &a, 0.5, 0.0).unwrap();
    assert_eq!(s1.half.as_ref().unwrap()[0], 1.0);
    assert!((s1.z[0] - 0.5).abs() < 1e-15);
    assert_eq!(s1.cert.c[0], 0.0);
    let s2 = as_step(&s1, &f, &a, 0.5, 0.0).unwrap();
    assert!((s2.half.as_ref().unwrap()[0] - 0.625).abs() < 1e-15);
    assert!((s2.z[0] - 0.4375).abs() < 1e-15);
}

#[test]
fn as_first_half_step_is_the_anchor() {
    let p = make_l1_regularized_minmax(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]), 0.3, 0.1).unwrap();
    let z0 = v(&[0.4, -2.0, 1.5, 0.7]);
    for rho in [0.0, -0.1] {
        let s0 = AsState::new(&p.operator, z0.clone(), 0.5).unwrap();
        let s1 = as_step(&s0, &p.operator, &p.resolvent, 0.5, rho).unwrap();
        assert_eq!(s1.half.as_ref().unwrap(), &z0);
    }
}

#[test]
fn as_rejects_small_step() {
    let f = identity_op(1);
    let a = MaxMonotoneOperator::Zero { dim: 1 };
    let s0 = AsState::new(&f, v(&[1.0]), 0.1).unwrap();
    assert!(matches!(as_step(&s0, &f, &a, 0.1, -0.1), Err(Error::StepSizeViolation { .. })));
}

#[test]
fn eg_steps_by_hand() {
    let f = identity_op(1);
    let set = ConvexSet::uniform_box(1, 0.0, 1.0).unwrap();
    let s1 = eg_step(&EgState::new(&f, &set, v(&[1.0])).unwrap(), &f, &set, 1.0 / 3.0).unwrap();
    assert!((s1.half.as_ref().unwrap()[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((s1.z[0] - 7.0 / 9.0).abs() < 1e-15);

    let p = bilinear_scalar();
    let set = p.feasible_set().unwrap();
    let s1 = eg_step(&EgState::new(&p.operator, &set, v(&[1.0, 0.0])).unwrap(), &p.operator, &set, 0.5).unwrap();
    assert_eq!(s1.half.as_ref().unwrap().as_slice(), &[1.0, 0.5]);
    assert_eq!(s1.z.as_slice(), &[0.75, 0.5]);
}

#[test]
fn eag_and_eg_agree_on_first_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = make_bilinear(&DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.7, 2.0]), Constraint::Ball { radius: 1.5 })
        .unwrap();
    let set = p.feasible_set().unwrap();
    for _ in 0..50 {
        let z0 = set.sample(&mut rng, 1.0);
        let eag = eag_step(&EagState::new(&p.operator, &set, z0.clone()).unwrap(), &p.operator, &set, 0.2, 0.0)
            .unwrap();
        let eg = eg_step(&EgState::new(&p.operator, &set, z0).unwrap(), &p.operator, &set, 0.2).unwrap();
        assert_eq!(eag.half, eg.half);
        assert_eq!(eag.z, eg.z);
    }
}

#[test]
fn two_operator_evaluations_per_step() {
    for alg in Algorithm::ALL {
        let count = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&count);
        let f = LipschitzOperator::from_fn(2, 1.0, move |z| {
            counter.fetch_add(1, Ordering::SeqCst);
            v(&[z[1], -z[0]])
        })
        .unwrap();
        let mut p = bilinear_scalar();
        p.operator = f;
        let cfg = config(alg, &p, 37);
        let report = run(&p, &cfg, &v(&[1.0, 1.0]), &mut ()).unwrap();
        assert_eq!(report.records.len(), 37);
        // one evaluation at z_0, then two per step
        assert_eq!(count.load(Ordering::SeqCst), 1 + 2 * 37, "{alg}");
    }
}

#[test]
fn iterates_stay_feasible_and_certificates_are_normal() {
    let p = make_bilinear(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), Constraint::Box { lo: 0.2, hi: 1.0 })
        .unwrap();
    let set = p.feasible_set().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let probes: Vec<DenseVector> = (0..50).map(|_| set.sample(&mut rng, 1.0)).collect();
    for alg in Algorithm::ALL {
        let mut bad = Vec::new();
        let mut observer = |s: &StepView<'_>| {
            if s.algorithm != Algorithm::As && !(set.contains(s.z) && set.contains(s.half)) {
                bad.push(format!("k = {} infeasible", s.k));
            }
            for zp in &probes {
                if s.c.dot(&(zp - s.z)) > 1e-9 {
                    bad.push(format!("k = {} certificate not normal", s.k));
                }
            }
        };
        let z0 = v(&[1.0, 0.2, 0.5, 0.5]);
        let cfg = config(alg, &p, 300);
        run(&p, &cfg, &z0, &mut observer).unwrap();
        assert!(bad.is_empty(), "{alg}: {bad:?}");
    }
}

#[test]
fn eg_distance_to_solution_never_grows() {
    let p = make_bilinear(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, -1.0]), Constraint::Ball { radius: 3.0 })
        .unwrap();
    let cfg = config(Algorithm::Eg, &p, 1000);
    let report = run(&p, &cfg, &v(&[1.0, -1.0, 0.5, 2.0]), &mut ()).unwrap();
    let d0 = v(&[1.0, -1.0, 0.5, 2.0]).norm();
    let mut prev = d0;
    for r in &report.records {
        let d = r.distance_to_solution.unwrap();
        assert!(d <= prev + 1e-9, "k = {}", r.k);
        prev = d;
    }
    assert!(matches!(report.envelope, EnvelopeVerdict::NotAssessable { .. }));
}

#[test]
fn zero_iterations_give_empty_trace() {
    let p = bilinear_scalar();
    let report = run(&p, &config(Algorithm::Eag, &p, 0), &v(&[1.0, 1.0]), &mut ()).unwrap();
    assert!(report.records.is_empty());
    assert!(report.envelope_ok);
    assert_eq!(report.termination, Termination::MaxIters);
    assert_eq!(report.fitted_rate_exponent, None);
}

#[test]
fn eag_envelope_holds_on_bilinear() {
    let p = bilinear_scalar();
    let report = run(&p, &config(Algorithm::Eag, &p, 1000), &v(&[1.0, 1.0]), &mut ()).unwrap();
    assert!(report.envelope_ok, "{:?}", report.envelope);
    let d = 2f64.sqrt();
    let last = report.records.last().unwrap();
    assert!(last.cert_residual <= 96f64.sqrt() * d / 1000.0);
}

#[test]
fn as_envelope_holds_on_rotation_family() {
    let p = make_rotation_family(-0.2, 1.0, 2).unwrap();
    let report = run(&p, &config(Algorithm::As, &p, 2000), &v(&[1.0, -0.5, 0.3, 2.0]), &mut ()).unwrap();
    assert!(report.envelope_ok, "{:?}", report.envelope);
    assert!(report.records.iter().all(|r| r.descent_slack.is_none_or(|s| s >= -1e-8 * (1.0 + r.potential.unwrap().abs()))));
}

#[test]
fn as_on_l1_problem_stays_within_envelope() {
    let b = DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 0.2, 0.3, 1.0, -1.0]);
    let p = make_l1_regularized_minmax(&b, 0.2, 0.4).unwrap();
    let report = run(&p, &config(Algorithm::As, &p, 1000), &v(&[1.0, 2.0, -1.0, 0.5, 0.5]), &mut ()).unwrap();
    assert!(report.envelope_ok, "{:?}", report.envelope);
}

#[test]
fn divergence_is_reported_not_raised() {
    let p = bilinear_scalar();
    let mut cfg = config(Algorithm::Eag, &p, 1000);
    cfg.eta = 1e8;
    let report = run(&p, &cfg, &v(&[1.0, 1.0]), &mut ()).unwrap();
    let Termination::Diverged { k } = report.termination else {
        panic!("expected divergence, got {:?}", report.termination);
    };
    assert!(report.records.len() < k);
    assert!(report.records.iter().all(|r| r.cert_residual.is_finite()));
}

#[test]
fn configuration_errors() {
    let l1 = make_l1_regularized_minmax(&DMatrix::from_element(1, 1, 1.0), 0.5, 0.5).unwrap();
    let z = v(&[0.0, 0.0]);
    assert!(matches!(run(&l1, &config(Algorithm::Eag, &l1, 5), &z, &mut ()), Err(Error::Inadmissible { .. })));

    let rot = make_rotation_family(-0.2, 1.0, 1).unwrap();
    let mut cfg = config(Algorithm::As, &rot, 5);
    cfg.eta = 0.1;
    assert!(matches!(run(&rot, &cfg, &z, &mut ()), Err(Error::StepSizeViolation { .. })));

    let id = make_identity_1d().unwrap();
    assert!(matches!(run(&id, &config(Algorithm::Eag, &id, 5), &v(&[2.0]), &mut ()), Err(Error::InfeasibleStart)));
    assert!(matches!(run(&id, &config(Algorithm::Eag, &id, 5), &z, &mut ()), Err(Error::DimMismatch { .. })));
}

#[test]
fn target_residual_stops_early() {
    let p = make_identity_1d().unwrap();
    let mut cfg = config(Algorithm::Eg, &p, 10_000);
    cfg.target_residual = 1e-8;
    let report = run(&p, &cfg, &v(&[1.0]), &mut ()).unwrap();
    let Termination::TargetReached { k } = report.termination else {
        panic!("{:?}", report.termination);
    };
    assert_eq!(report.records.len(), k);
    assert!(report.records.last().unwrap().cert_residual <= 1e-8);
}

/// On `F(x) = x` over `[0, 1]` only EG reaches `1e-8` within `1e4` steps:
/// the anchor pulls EAG and AS back toward `z_0`, so their residual decays
/// like `1/k`. They are held to their envelopes instead.
#[test]
fn identity_1d_comparison() {
    let p = make_identity_1d().unwrap();
    for alg in Algorithm::ALL {
        let mut cfg = config(alg, &p, 10_000);
        cfg.target_residual = 1e-8;
        let report = run(&p, &cfg, &v(&[1.0]), &mut ()).unwrap();
        match alg {
            Algorithm::Eg => assert!(matches!(report.termination, Termination::TargetReached { .. })),
            _ => {
                assert!(report.envelope_ok, "{alg}: {:?}", report.envelope);
                let last = report.records.last().unwrap();
                assert!(last.cert_residual <= 1e-3, "{alg}: {}", last.cert_residual);
            }
        }
    }
}

#[test]
fn delta_shift_keeps_descent_but_drops_envelope() {
    let p = make_bilinear(&DMatrix::identity(2, 2), Constraint::Box { lo: -1.0, hi: 1.0 }).unwrap();
    let mut cfg = config(Algorithm::Eag, &p, 500);
    cfg.delta = 2.5;
    let report = run(&p, &cfg, &v(&[1.0, -1.0, 0.5, 0.5]), &mut ()).unwrap();
    assert!(matches!(report.envelope, EnvelopeVerdict::NotAssessable { .. }));
    let trace = inclusion_accel::diagnostics::check_v_descent(&report.records, cfg.eta, p.lipschitz);
    assert!(trace.holds(), "{:?}", trace.violations());
}

#[test]
fn runs_are_deterministic() {
    let p = make_rotation_family(-0.1, 1.0, 3).unwrap();
    let cfg = config(Algorithm::As, &p, 200);
    let z0 = v(&[1.0, 2.0, 3.0, -1.0, 0.0, 0.5]);
    let a = run(&p, &cfg, &z0, &mut ()).unwrap();
    let b = run(&p, &cfg, &z0, &mut ()).unwrap();
    assert_eq!(a.records, b.records);
}
