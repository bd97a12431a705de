//! Initial-state builders used by the CLI and the test suites.

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, WaveFunction};

/// Position-space field from a closure over configuration-space coordinates
/// (length `rank`, ordered particle-major).
pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> Complex64) -> WaveFunction {
    let rank = grid.rank();
    let mut coords = vec![0.0; rank];
    let n = grid.n_points();
    let mut vals = Vec::with_capacity(n);
    for flat in 0..n {
        for (axis, c) in coords.iter_mut().enumerate() {
            *c = grid.coordinate(grid.axis_index(flat, axis));
        }
        vals.push(f(&coords));
    }
    WaveFunction::from_position(
        grid.clone(),
        ArrayD::from_shape_vec(IxDyn(&grid.shape()), vals).unwrap(),
    )
    .expect("shape from grid")
}

/// Normalized product Gaussian packet: every particle carries the same
/// `d`-dimensional envelope `exp(-|x - c|^2 / (4 sigma^2)) exp(i k0.x)`, so
/// the one-particle density has standard deviation `sigma` per axis.
pub fn gaussian_packet(
    grid: &Grid,
    center: &[f64],
    sigma: f64,
    momentum: &[f64],
) -> Result<WaveFunction> {
    let d = grid.dims();
    if center.len() != d || momentum.len() != d {
        return Err(Error::InvalidArgument(format!(
            "center and momentum must have {d} components"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let w = from_fn(grid, |coords| {
        let mut arg = 0.0;
        let mut phase = 0.0;
        for (axis, &x) in coords.iter().enumerate() {
            let j = axis % d;
            let dx = x - center[j];
            arg += dx * dx;
            phase += momentum[j] * x;
        }
        Complex64::from_polar((-arg / (4.0 * sigma * sigma)).exp(), phase)
    });
    Ok(w.normalized())
}

/// Normalized plane wave with the given integer mode per spatial axis,
/// repeated for every particle.
pub fn plane_wave(grid: &Grid, mode: &[i64]) -> Result<WaveFunction> {
    let d = grid.dims();
    if mode.len() != d {
        return Err(Error::InvalidArgument(format!(
            "mode must have {d} components"
        )));
    }
    let m = grid.points_per_dim() as i64;
    if mode.iter().any(|&n| n < -m / 2 || n >= m / 2) {
        return Err(Error::InvalidArgument(format!(
            "mode index outside {{-{}, ..., {}}}",
            m / 2,
            m / 2 - 1
        )));
    }
    let dk = std::f64::consts::TAU / grid.box_length();
    let w = from_fn(grid, |coords| {
        let mut phase = 0.0;
        for (axis, &x) in coords.iter().enumerate() {
            phase += mode[axis % d] as f64 * dk * x;
        }
        Complex64::from_polar(1.0, phase)
    });
    Ok(w.normalized())
}

/// Weighted sum of compatible states (not re-normalized).
pub fn superposition(parts: &[(Complex64, WaveFunction)]) -> Result<WaveFunction> {
    let (_, first) = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty superposition".into()))?;
    let grid = first.grid.clone();
    let mut values = grid.zeros_complex();
    for (weight, w) in parts {
        if w.grid != grid {
            return Err(Error::GridMismatch);
        }
        let pos = w.clone().into_position();
        values.zip_mut_with(&pos.values, |acc, v| *acc += weight * v);
    }
    WaveFunction::from_position(grid, values)
}

/// Reproducible random state with Gaussian spectral weight cut at `k_cut`,
/// returned in position representation with unit norm.
pub fn random_band_limited(grid: &Grid, k_cut: f64, seed: u64) -> WaveFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_points();
    let mut vals = Vec::with_capacity(n);
    for flat in 0..n {
        let ksq = grid.k_squared_sum(flat);
        let envelope = (-ksq / (k_cut * k_cut)).exp();
        let (g1, g2) = normal_pair(&mut rng);
        vals.push(Complex64::new(g1, g2) * envelope);
    }
    let w = WaveFunction::from_spectral(
        grid.clone(),
        ArrayD::from_shape_vec(IxDyn(&grid.shape()), vals).unwrap(),
    )
    .expect("shape from grid");
    w.normalized().into_position()
}

/// One Box-Muller pair of standard normals.
pub(crate) fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}
