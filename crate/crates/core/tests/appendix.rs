use nlw_core::appendix::{
    apex_checks, envelope_check, envelope_step, triangle_source_constant, triangle_integral, TriangleRegion,
};
use nlw_core::diagnostics::MonitorSpec;
use nlw_core::model::{make_params, InitialData};
use nlw_core::solver::{evolve, Boundary, GridSpec};

/// Midpoint rule on geometric cells in `u = s - (t' - r')`, `v = (t' - r') - tau`
/// for `int int r^(-(p+1)/(p-1)) dr dt` over the enlarged region with `r' = 1`.
fn brute_force_constant(p: f64) -> f64 {
    let q = (p + 1.0) / (p - 1.0);
    let cells = |lo: f64, hi: f64| {
        let mut edges = vec![0.0, lo];
        while *edges.last().unwrap() < hi {
            let e = edges.last().unwrap() * 1.01;
            edges.push(e.min(hi));
        }
        edges
    };
    let us = cells(1e-15, 2.0);
    let vs = cells(1e-15, 1e9);
    let mut total = 0.0;
    for u in us.windows(2) {
        let (um, du) = (0.5 * (u[0] + u[1]), u[1] - u[0]);
        for v in vs.windows(2) {
            let (vm, dv) = (0.5 * (v[0] + v[1]), v[1] - v[0]);
            // dr dt = ds dtau / 2 and r = (u + v) / 2
            total += 0.5 * (0.5 * (um + vm)).powf(-q) * du * dv;
        }
    }
    total
}

#[test]
fn source_constant_matches_brute_force() {
    for p in [3.5, 4.0, 4.5] {
        let c = triangle_source_constant(p);
        let b = brute_force_constant(p);
        assert!((c - b).abs() <= 2e-3 * b, "p = {p}: {c} vs {b}");
    }
}

#[test]
fn triangle_integral_respects_the_source_bound() {
    let p = make_params(4.0, 0.25).unwrap();
    let a = 0.7;
    let w = |r: f64, _t: f64| a * r.powf(p.beta);
    let h = 1.0 / 64.0;
    let small = triangle_integral(&TriangleRegion::new(8.0, 4.0).unwrap(), &w, &p, h).unwrap();
    let bound = triangle_source_constant(4.0) * a.powf(4.0) * 8f64.powf(p.beta);
    assert!(small > 0.0 && small <= bound, "{small} {bound}");
    // exact scaling lambda^beta of the integral
    let big = triangle_integral(&TriangleRegion::new(16.0, 8.0).unwrap(), &w, &p, h).unwrap();
    let ratio = big / small / 2f64.powf(p.beta);
    assert!((ratio - 1.0).abs() <= 0.05, "{ratio}");
}

fn appendix_run(c: f64, linear: bool, t_max: f64) -> nlw_core::diagnostics::Trajectory {
    let mut p = make_params(4.0, 0.25).unwrap();
    if linear {
        p = p.linear_mode();
    }
    let h = 1.0 / 32.0;
    let grid = GridSpec::new(h, 2.0 * t_max + 4.0, t_max, Boundary::Cone).unwrap();
    let pair = InitialData::AppendixPowerLaw { c, blend: 0.5 }
        .radial_pair(grid.n_r, h, &p, None)
        .unwrap();
    let spec = MonitorSpec {
        apexes: vec![(3.0, 1.0), (4.0, 2.0), (6.0, 4.0)],
        envelope_c: Some(c),
        ..MonitorSpec::default()
    };
    evolve(&pair, &p, &grid, &spec).unwrap().0
}

#[test]
fn duhamel_decomposition_at_apexes() {
    let c = 0.3;
    let traj = appendix_run(c, false, 8.0);
    let checks = apex_checks(&traj, c);
    assert_eq!(checks.len(), 3);
    for a in &checks {
        // the nonlinear correction is resolved well above the discretization residual
        assert!(a.duhamel_residual.abs() <= 1e-3 * (a.w - a.free).abs(), "{a:?}");
        assert!(a.absolute <= a.bound, "{a:?}");
    }
    let env = envelope_check(&traj).unwrap();
    assert!(env.holds && env.profile_holds, "{env:?}");
}

#[test]
fn linear_profile_is_transported() {
    let traj = appendix_run(0.3, true, 8.0);
    for a in apex_checks(&traj, 0.3) {
        assert!((a.w - a.free).abs() <= 1e-12, "{a:?}");
    }
    // w / (c r^beta) stays within [1/2, 1] for the free wave of c r^beta
    let env = envelope_check(&traj).unwrap();
    assert!(env.max_ratio <= 1.0 / 3.0 + 1e-12);
    assert!(env.min_profile >= 0.5);
}

#[test]
fn large_amplitude_breaks_the_envelope() {
    let p = make_params(4.0, 0.25).unwrap();
    let grid = GridSpec::new(1.0 / 32.0, 36.0, 16.0, Boundary::Cone).unwrap();
    let small = envelope_step(0.05, &p, &grid);
    assert!(small.holds, "{small:?}");
    let large = envelope_step(4.0, &p, &grid);
    assert!(!large.holds, "{large:?}");
}
