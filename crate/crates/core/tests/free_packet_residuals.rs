//! The exact free Gaussian packet is the oracle for the field-equation
//! residuals: with no coarse graining and one particle every implemented
//! residual must converge to zero under simultaneous (dt, h) halving.

use cghydro_core::evolution::schrodinger_reference;
use cghydro_core::hydro::{
    eom_residuals, euler_residual, quantum_energy, EnergyDerivatives, KappaParenthesization,
    PrefactorMode, Window,
};
use cghydro_core::pipeline::{align_to_anchor, extract, ExtractOptions};
use cghydro_core::states::gaussian_packet;
use cghydro_core::Grid;

/// Sup norms of the continuity, Bernoulli and Euler residuals on the exact
/// packet at resolution `(m, dt)`, evaluated around `t = 1`.
fn residual_sups(m: usize, dt: f64) -> (f64, f64, f64) {
    let g = Grid::new(20.0, m, 1, 1, u128::MAX).unwrap();
    let w0 = gaussian_packet(&g, &[10.0], 1.0, &[0.0]).unwrap();
    let opts = ExtractOptions::default();
    let mass = 1.0;
    let t = 1.0;

    let snap = |time: f64| {
        let w = schrodinger_reference(&w0, mass, time).unwrap();
        extract(&w, mass, &opts).unwrap().fields
    };
    let mut prev = snap(t - dt);
    let mid = snap(t);
    let mut next = snap(t + dt);
    align_to_anchor(&mut prev, &mid);
    align_to_anchor(&mut next, &mid);
    let win = Window {
        prev: &prev,
        mid: &mid,
        next: &next,
        dt,
    };
    let (_, q) = quantum_energy(&mid.rho, mass, &mid.grid_1p, PrefactorMode::Standard, &mid.mask)
        .unwrap();
    let de = EnergyDerivatives::zeros(&mid.grid_1p);
    let res = eom_residuals(&win, &q, &de, mass).unwrap();
    let norms = res.norms();
    let continuity = norms.iter().find(|n| n.0 == "varphi").unwrap().2;
    let bernoulli = norms.iter().find(|n| n.0 == "rho").unwrap().2;
    let euler = euler_residual(&win, &q, &de, mass, KappaParenthesization::Inside).unwrap();
    let euler_sup = euler.norms()[0].2;
    (continuity, bernoulli, euler_sup)
}

#[test]
fn residuals_converge_at_second_order() {
    let coarse = residual_sups(64, 4e-3);
    let medium = residual_sups(128, 2e-3);
    let fine = residual_sups(256, 1e-3);
    let order = |a: f64, b: f64| (a / b).log2();
    for (name, c, m, f) in [
        ("continuity", coarse.0, medium.0, fine.0),
        ("bernoulli", coarse.1, medium.1, fine.1),
        ("euler", coarse.2, medium.2, fine.2),
    ] {
        let o1 = order(c, m);
        let o2 = order(m, f);
        assert!(
            o1 >= 1.8 && o2 >= 1.8,
            "{name}: orders {o1:.2}, {o2:.2} (sups {c:.3e}, {m:.3e}, {f:.3e})"
        );
    }
    // absolute size at the finest rung is far below the packet scale
    assert!(fine.0 < 1e-3 && fine.1 < 1e-3 && fine.2 < 1e-3);
}

#[test]
fn perfect_fluid_residual_equals_quantum_force() {
    // With the forces dropped, what remains of the momentum equation is the
    // quantum-force term itself.
    let m = 128;
    let dt = 1e-3;
    let g = Grid::new(20.0, m, 1, 1, u128::MAX).unwrap();
    let w0 = gaussian_packet(&g, &[10.0], 1.0, &[0.0]).unwrap();
    let opts = ExtractOptions::default();
    let snap = |time: f64| {
        let w = schrodinger_reference(&w0, 1.0, time).unwrap();
        extract(&w, 1.0, &opts).unwrap().fields
    };
    let mut prev = snap(1.0 - dt);
    let mid = snap(1.0);
    let mut next = snap(1.0 + dt);
    align_to_anchor(&mut prev, &mid);
    align_to_anchor(&mut next, &mid);
    let win = Window {
        prev: &prev,
        mid: &mid,
        next: &next,
        dt,
    };
    let (_, q) =
        quantum_energy(&mid.rho, 1.0, &mid.grid_1p, PrefactorMode::Standard, &mid.mask).unwrap();
    let de = EnergyDerivatives::zeros(&mid.grid_1p);
    let res = euler_residual(&win, &q, &de, 1.0, KappaParenthesization::Inside).unwrap();

    // analytic quantum force of the spread packet:
    // Q = (1/2)(1/(2 s^2) - u^2/(4 s^4)) with s^2 = 1 + t^2/4, so
    // -rho dQ/dx = rho u / (4 s^4)
    let s_sq = 1.0 + 0.25; // t = 1
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..mid.grid_1p.n_points() {
        if mid.mask.as_slice().unwrap()[i] {
            continue;
        }
        let u = mid.grid_1p.coordinate(i) - 10.0;
        let force = mid.rho.as_slice().unwrap()[i] * u / (4.0 * s_sq * s_sq);
        let lhs = res.lhs[0].as_slice().unwrap()[i];
        worst = worst.max((lhs - force).abs());
        scale = scale.max(force.abs());
    }
    // the rate itself is pinned by residuals_converge_at_second_order; here
    // only the identity's shape is asserted at this resolution's error floor
    assert!(worst < 2e-2 * scale, "worst {worst:.3e} scale {scale:.3e}");
}
