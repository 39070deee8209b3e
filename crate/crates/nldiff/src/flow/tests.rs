use std::f64::consts::PI;

use super::*;
use crate::diagnostics::field_mean;
use crate::spectral::build_spectrum;

fn periodic_cfg(epsilon: f64, h_t: f64, steps: usize) -> FlowConfig {
    FlowConfig::new(
        Formulation::Integrated,
        BoundaryCondition::Periodic,
        epsilon,
        h_t,
        steps,
    )
}

#[test]
fn diffusivity_is_one_on_constants() {
    for bc in [BoundaryCondition::Periodic, BoundaryCondition::Neumann] {
        let n = 32;
        let s = build_spectrum(n, bc, Dim::One).unwrap();
        let u = GridField::constant(n, bc, Dim::One, 7.0);
        let a = diffusivity(&u, 0.8, &s).unwrap();
        for &v in a.values() {
            assert!((v - 1.0).abs() < 1e-14, "{bc}");
        }
    }
}

#[test]
fn diffusivity_closed_form_on_eigenfunction() {
    let n = 64;
    let s = build_spectrum(n, BoundaryCondition::Periodic, Dim::One).unwrap();
    let u = GridField::from_fn_1d(n, BoundaryCondition::Periodic, |x| (2.0 * PI * x).sin());
    let a = diffusivity(&u, 0.5, &s).unwrap();
    for (j, &x) in u.axis_nodes().iter().enumerate() {
        let g = 2.0 * PI * (2.0 * PI * x).sin();
        let want = 1.0 / (1.0 + g * g);
        assert!((a.values()[j] - want).abs() < 1e-12);
    }
    // Spot value at x = 1/4.
    let j = n / 4;
    assert!((a.values()[j] - 1.0 / (1.0 + 4.0 * PI * PI)).abs() < 1e-12);
}

#[test]
fn diffusivity_range_and_kink_localization() {
    // The nonlocal coefficient of a triangle wave collapses at the kinks:
    // the grid minimum of `a` must sit within 2 nodes of a kink.
    let n = 4096;
    let eps = 0.2;
    let s = build_spectrum(n, BoundaryCondition::Periodic, Dim::One).unwrap();
    let u = GridField::from_fn_1d(n, BoundaryCondition::Periodic, |x| (x - 0.5).abs());
    let a = diffusivity(&u, 1.0 - eps, &s).unwrap();
    let mut min_idx = 0;
    for (j, &v) in a.values().iter().enumerate() {
        assert!(v > 0.0 && v <= 1.0);
        if v < a.values()[min_idx] {
            min_idx = j;
        }
    }
    // Kinks at x = 0 and x = 1/2, i.e. nodes 0 and n/2.
    let d_half = (min_idx as i64 - (n / 2) as i64).unsigned_abs();
    let d_zero = (min_idx as i64).min((n - min_idx) as i64).unsigned_abs();
    assert!(
        d_half.min(d_zero) <= 2,
        "minimum at node {min_idx}, not near a kink"
    );
}

#[test]
fn step_integrated_backward_euler_on_eigenfunction() {
    let n = 64;
    let h_t = 0.06;
    let cfg = periodic_cfg(0.3, h_t, 1);
    let s = build_spectrum(n, cfg.bc, Dim::One).unwrap();
    let u = GridField::from_fn_1d(n, cfg.bc, |x| (2.0 * PI * x).sin());
    let a = GridField::constant(n, cfg.bc, Dim::One, 1.0);
    let (next, report) = step_integrated(&u, &a, &cfg, &s).unwrap();
    let factor = 1.0 / (1.0 + 4.0 * PI * PI * h_t);
    for (got, want) in next.values().iter().zip(u.values()) {
        assert!((got - want * factor).abs() < 1e-10);
    }
    assert!(report.relative_residual <= 1e-10);
}

#[test]
fn constants_are_fixed_points_of_both_steps() {
    for bc in [BoundaryCondition::Periodic, BoundaryCondition::Neumann] {
        let n = 64;
        let s = build_spectrum(n, bc, Dim::One).unwrap();
        let u = GridField::constant(n, bc, Dim::One, 3.0);
        for formulation in [Formulation::Integrated, Formulation::Divergence] {
            let mut cfg = FlowConfig::new(formulation, bc, 0.3, 0.06, 1);
            cfg.solver_tol = 1e-12;
            let a = diffusivity(&u, cfg.gamma(), &s).unwrap();
            let (next, _) = match formulation {
                Formulation::Integrated => step_integrated(&u, &a, &cfg, &s).unwrap(),
                Formulation::Divergence => step_divergence(&u, &a, &cfg, &s).unwrap(),
            };
            let drift = next
                .values()
                .iter()
                .zip(u.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(drift < 1e-10, "{bc} {formulation}: drift {drift}");
        }
    }
    // Dirichlet: the zero field is the invariant one.
    let n = 64;
    let s = build_spectrum(n, BoundaryCondition::Dirichlet, Dim::One).unwrap();
    let u = GridField::zeros(n, BoundaryCondition::Dirichlet, Dim::One);
    let cfg = FlowConfig::new(
        Formulation::Integrated,
        BoundaryCondition::Dirichlet,
        0.3,
        0.06,
        1,
    );
    let a = diffusivity(&u, cfg.gamma(), &s).unwrap();
    let (next, _) = step_integrated(&u, &a, &cfg, &s).unwrap();
    assert!(next.max_abs() < 1e-12);
}

#[test]
fn integrated_step_krylov_route_matches_dense_route() {
    // Dual route: the 1D step goes through the dense factorization; solve
    // the same system with BiCGStab and compare.
    let n = 256;
    let cfg = periodic_cfg(0.3, 0.06, 1);
    let s = build_spectrum(n, cfg.bc, Dim::One).unwrap();
    let u = GridField::from_fn_1d(n, cfg.bc, |x| {
        (2.0 * PI * x).sin() + 2.0 * (4.0 * PI * x).sin()
    });
    let a = diffusivity(&u, cfg.gamma(), &s).unwrap();
    let (dense, _) = step_integrated(&u, &a, &cfg, &s).unwrap();

    let op = integrated_operator(&a, cfg.h_t, &s);
    let pre = make_constant_coefficient_preconditioner(&a, cfg.h_t, &s);
    let (krylov, _) = linsolve::solve_krylov(
        op,
        &u,
        &pre,
        KrylovMethod::BiCgStab,
        1e-12,
        500,
    )
    .unwrap();
    let diff = dense
        .values()
        .iter()
        .zip(krylov.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(diff <= 1e-8, "routes differ by {diff}");
}

#[test]
fn divergence_step_conserves_mean_per_step() {
    let n = 64;
    let mut cfg = FlowConfig::new(
        Formulation::Divergence,
        BoundaryCondition::Neumann,
        0.6,
        0.01,
        1,
    );
    cfg.solver_tol = 1e-12;
    let s = build_spectrum(n, cfg.bc, Dim::Two).unwrap();
    let u = GridField::from_fn_2d(n, cfg.bc, |x, y| {
        (PI * x).cos() * (2.0 * PI * y).cos() + 0.5 * x * y
    });
    let a = diffusivity(&u, cfg.gamma(), &s).unwrap();
    let (next, _) = step_divergence(&u, &a, &cfg, &s).unwrap();
    let drift = (field_mean(&next) - field_mean(&u)).abs();
    assert!(drift <= 1e-10 * u.max_abs(), "mean drift {drift}");
}

#[test]
fn run_flow_zero_steps_returns_initial_state() {
    let n = 64;
    let cfg = periodic_cfg(0.1, 0.06, 0);
    let s = build_spectrum(n, cfg.bc, Dim::One).unwrap();
    let u0 = GridField::from_fn_1d(n, cfg.bc, |x| (2.0 * PI * x).sin());
    let mut called = 0;
    let run = run_flow(&u0, &cfg, &s, |_, _, _| called += 1).unwrap();
    assert_eq!(called, 0);
    assert_eq!(run.final_state.values(), u0.values());
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.records[0].step, 0);
}

#[test]
fn run_flow_h1_seminorm_is_monotone_nonincreasing() {
    let n = 256;
    let mut cfg = periodic_cfg(0.3, 0.06, 30);
    cfg.solver_tol = 1e-11;
    let s = build_spectrum(n, cfg.bc, Dim::One).unwrap();
    let u0 = GridField::from_fn_1d(n, cfg.bc, |x| {
        (2.0 * PI * x).sin() + 2.0 * (4.0 * PI * x).sin()
    });
    let run = run_flow(&u0, &cfg, &s, |_, _, _| {}).unwrap();
    for pair in run.records.windows(2) {
        assert!(
            pair[1].h1_seminorm_sq <= pair[0].h1_seminorm_sq + 10.0 * cfg.solver_tol,
            "H1 grew at step {}",
            pair[1].step
        );
    }
    // Dissipation accumulates monotonically.
    for pair in run.records.windows(2) {
        assert!(pair[1].dissipation_accum >= pair[0].dissipation_accum);
    }
}

#[test]
fn run_flow_propagates_solver_failure_with_partial_records() {
    let n = 1024; // Krylov path
    let mut cfg = FlowConfig::new(
        Formulation::Integrated,
        BoundaryCondition::Periodic,
        0.3,
        0.06,
        5,
    );
    cfg.solver_max_iter = 1; // cannot converge
    cfg.solver_tol = 1e-14;
    let s = build_spectrum(n, cfg.bc, Dim::One).unwrap();
    let u0 = GridField::from_fn_1d(n, cfg.bc, |x| {
        (2.0 * PI * x).sin() + 2.0 * (4.0 * PI * x).sin()
    });
    let err = run_flow(&u0, &cfg, &s, |_, _, _| {}).unwrap_err();
    assert_eq!(err.step, 1);
    assert_eq!(err.records.len(), 1); // the t=0 row survived
    assert!(matches!(err.source, Error::SolverFailure { .. }));
}

#[test]
fn epsilon_continuity_of_final_state() {
    let n = 128;
    let steps = 50;
    let s = build_spectrum(n, BoundaryCondition::Periodic, Dim::One).unwrap();
    let u0 = GridField::from_fn_1d(n, BoundaryCondition::Periodic, |x| {
        5.0 - (10.0 * x - 5.0).abs()
    });
    let run_eps = |eps: f64| {
        let cfg = periodic_cfg(eps, 0.06, steps);
        run_flow(&u0, &cfg, &s, |_, _, _| {})
            .unwrap()
            .final_state
    };
    let f1 = run_eps(0.2);
    let f2 = run_eps(0.2001);
    let diff = f1
        .values()
        .iter()
        .zip(f2.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(diff <= 1e-2 * u0.max_abs(), "jump {diff}");
}

#[test]
fn integrate_image_of_constant_vanishes() {
    for bc in [
        BoundaryCondition::Periodic,
        BoundaryCondition::Dirichlet,
        BoundaryCondition::Neumann,
    ] {
        let img = GridField::constant(64, bc, Dim::One, 2.5);
        let w = integrate_image(&img).unwrap();
        assert!(w.max_abs() < 1e-13, "{bc}");
    }
}

#[test]
fn integrate_image_of_step_is_a_hat() {
    let n = 256;
    let img = GridField::from_fn_1d(n, BoundaryCondition::Periodic, |x| {
        if x < 0.5 {
            0.0
        } else {
            1.0
        }
    });
    let w = integrate_image(&img).unwrap();
    // Antiderivative of the step minus x/2: down-slope -x/2 then up-slope,
    // kink (minimum) at 1/2, zero at both ends.
    let values = w.values();
    assert!(values[0].abs() < 1e-13);
    // The sampled step puts its jump on a node, so the two nodes around the
    // kink tie for the minimum.
    let min_idx = (0..n).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    assert!(min_idx == n / 2 || min_idx == n / 2 - 1, "minimum at {min_idx}");
    for (j, &x) in w.axis_nodes().iter().enumerate() {
        // w(x) = int_0^x step - x/2: -x/2 below the jump, (x-1/2) - x/2 above.
        let want = if x < 0.5 { -0.5 * x } else { (x - 0.5) - 0.5 * x };
        assert!(
            (values[j] - want).abs() < 1.0 / n as f64,
            "node {j}: {} vs {want}",
            values[j]
        );
    }
}

#[test]
fn integrate_image_matches_analytic_antiderivative() {
    // p(x) = x^2 (1-x)^2 integrates to x^3/3 - x^4/2 + x^5/5, total 1/30.
    let n = 512;
    let img = GridField::from_fn_1d(n, BoundaryCondition::Periodic, |x| {
        x * x * (1.0 - x) * (1.0 - x)
    });
    let w = integrate_image(&img).unwrap();
    let mut max_err = 0.0f64;
    for (j, &x) in w.axis_nodes().iter().enumerate() {
        let anti = x.powi(3) / 3.0 - x.powi(4) / 2.0 + x.powi(5) / 5.0;
        let want = anti - x / 30.0;
        max_err = max_err.max((w.values()[j] - want).abs());
    }
    assert!(max_err < 4.0 / (n * n) as f64, "error {max_err}");
}

#[test]
fn differentiate_state_restores_the_mean() {
    let n = 64;
    let w = GridField::zeros(n, BoundaryCondition::Periodic, Dim::One);
    let u = differentiate_state(&w, 2.5).unwrap();
    for &v in u.values() {
        assert!((v - 2.5).abs() < 1e-13);
    }
}

#[test]
fn differentiate_state_inverts_integrate_image_on_smooth_input() {
    let n = 256;
    let img = GridField::from_fn_1d(n, BoundaryCondition::Periodic, |x| {
        x * x * (1.0 - x) * (1.0 - x)
    });
    let mean = field_mean(&img);
    let w = integrate_image(&img).unwrap();
    let back = differentiate_state(&w, mean).unwrap();
    let max_err = back
        .values()
        .iter()
        .zip(img.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    // Quadrature-limited round trip, O(1/n^2).
    assert!(max_err < 10.0 / (n * n) as f64, "error {max_err}");
}

#[test]
fn integrate_image_rejects_2d_input() {
    let img = GridField::zeros(16, BoundaryCondition::Neumann, Dim::Two);
    assert!(matches!(
        integrate_image(&img),
        Err(Error::Unsupported { .. })
    ));
    assert!(matches!(
        differentiate_state(&img, 0.0),
        Err(Error::Unsupported { .. })
    ));
}

#[test]
fn gamma_defaults_and_override() {
    let mut cfg = periodic_cfg(0.3, 0.06, 1);
    assert!((cfg.gamma() - 0.7).abs() < 1e-15);
    cfg.formulation = Formulation::Divergence;
    assert!((cfg.gamma() - 0.35).abs() < 1e-15);
    cfg.gamma_override = Some(0.123);
    assert!((cfg.gamma() - 0.123).abs() < 1e-15);
}

#[test]
fn config_validation_rejects_bad_parameters() {
    let mut cfg = periodic_cfg(0.3, 0.06, 1);
    cfg.epsilon = 1.0;
    assert!(cfg.validate().is_err());
    let mut cfg = periodic_cfg(0.3, 0.0, 1);
    cfg.h_t = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = periodic_cfg(0.3, 0.06, 1);
    cfg.solver_tol = 0.0;
    assert!(cfg.validate().is_err());
}

#[test]
fn step_rejects_mismatched_diffusivity() {
    let n = 64;
    let cfg = periodic_cfg(0.3, 0.06, 1);
    let s = build_spectrum(n, cfg.bc, Dim::One).unwrap();
    let u = GridField::zeros(n, cfg.bc, Dim::One);
    let a = GridField::zeros(n, BoundaryCondition::Neumann, Dim::One);
    assert!(matches!(
        step_integrated(&u, &a, &cfg, &s),
        Err(Error::ShapeMismatch { .. })
    ));
}
