//! Periodic configuration-space lattice, spectral transforms and the free
//! dispersion table.
//!
//! Fields over `N` particles in `d` dimensions are rank `N*d` tensors with
//! every axis of length `M` and box length `L` per axis.  Spectral values are
//! Fourier-series coefficients, `a(x) = sum_k c_k exp(i k.x)` with
//! `k = 2*pi*n/L`, `n` in `{-M/2, ..., M/2 - 1}` per axis, so a plane wave on
//! the grid is a single spectral entry and Parseval holds as
//! `sum |a|^2 h^rank = V sum |c_k|^2`.

use std::fmt;
use std::sync::Arc;

use ndarray::{ArrayD, Axis, IxDyn};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Which basis the stored values of a [`WaveFunction`] refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Position,
    Spectral,
}

/// Immutable lattice description shared by all fields of a run.
#[derive(Clone)]
pub struct Grid {
    box_length: f64,
    points_per_dim: usize,
    dims: usize,
    particles: usize,
    spacing: f64,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("box_length", &self.box_length)
            .field("points_per_dim", &self.points_per_dim)
            .field("dims", &self.dims)
            .field("particles", &self.particles)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.box_length == other.box_length
            && self.points_per_dim == other.points_per_dim
            && self.dims == other.dims
            && self.particles == other.particles
    }
}

impl Grid {
    /// Build a lattice for `particles` particles in `dims` dimensions with
    /// `points_per_dim` points per axis.  Fails if `points_per_dim` is not a
    /// power of two or the configuration-space tensor would not fit in
    /// `memory_budget` bytes (one complex value per point).
    pub fn new(
        box_length: f64,
        points_per_dim: usize,
        dims: usize,
        particles: usize,
        memory_budget: u128,
    ) -> Result<Grid> {
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive, got {box_length}"
            )));
        }
        if !(1..=3).contains(&dims) {
            return Err(Error::InvalidGrid(format!("dims must be 1..=3, got {dims}")));
        }
        if !(1..=3).contains(&particles) {
            return Err(Error::InvalidGrid(format!(
                "particles must be 1..=3, got {particles}"
            )));
        }
        if points_per_dim < 2 || !points_per_dim.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(points_per_dim));
        }
        let rank = (dims * particles) as u32;
        let points = (points_per_dim as u128).pow(rank);
        let bytes = points.saturating_mul(16);
        if bytes > memory_budget {
            return Err(Error::BudgetExceeded {
                points,
                bytes,
                budget: memory_budget,
            });
        }

        let m = points_per_dim;
        let dk = std::f64::consts::TAU / box_length;
        let wavenumbers = (0..m)
            .map(|n| {
                let signed = if n < m / 2 { n as i64 } else { n as i64 - m as i64 };
                signed as f64 * dk
            })
            .collect();

        let mut planner = FftPlanner::new();
        Ok(Grid {
            box_length,
            points_per_dim,
            dims,
            particles,
            spacing: box_length / m as f64,
            wavenumbers,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        })
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Tensor rank of configuration-space fields: `particles * dims`.
    pub fn rank(&self) -> usize {
        self.dims * self.particles
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.points_per_dim; self.rank()]
    }

    pub fn n_points(&self) -> usize {
        self.points_per_dim.pow(self.rank() as u32)
    }

    /// Configuration-space volume `L^rank`.
    pub fn volume(&self) -> f64 {
        self.box_length.powi(self.rank() as i32)
    }

    /// Quadrature weight of one lattice cell, `h^rank`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.rank() as i32)
    }

    /// Wavenumbers per axis in FFT-natural order (`0, dk, ..., -dk`).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Index of the Nyquist entry in [`Self::wavenumbers`].
    pub fn nyquist_index(&self) -> usize {
        self.points_per_dim / 2
    }

    /// Axis coordinate of `flat` along `axis` under row-major layout.
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        let rank = self.rank();
        let mut divisor = 1usize;
        for _ in axis + 1..rank {
            divisor *= self.points_per_dim;
        }
        (flat / divisor) % self.points_per_dim
    }

    /// Position coordinate along one axis.
    pub fn coordinate(&self, axis_index: usize) -> f64 {
        axis_index as f64 * self.spacing
    }

    /// `sum_j |k_j|^2` over all axes at a flat spectral index.
    pub fn k_squared_sum(&self, flat: usize) -> f64 {
        let rank = self.rank();
        let m = self.points_per_dim;
        let mut rest = flat;
        let mut acc = 0.0;
        for _ in 0..rank {
            let idx = rest % m;
            let k = self.wavenumbers[idx];
            acc += k * k;
            rest /= m;
        }
        acc
    }

    /// The matching one-particle lattice (same box, same points).
    pub fn one_particle(&self) -> Grid {
        let mut g = self.clone();
        g.particles = 1;
        g
    }

    /// In-place FFT over every axis.  Forward scales by `1/M` per axis so the
    /// result holds Fourier-series coefficients; inverse applies no scaling.
    pub(crate) fn transform_in_place(&self, values: &mut ArrayD<Complex64>, forward: bool) {
        let m = self.points_per_dim;
        let fft = if forward { &self.forward } else { &self.inverse };
        let mut lane_buf = vec![Complex64::new(0.0, 0.0); m];
        for axis in 0..values.ndim() {
            for mut lane in values.lanes_mut(Axis(axis)) {
                for (b, v) in lane_buf.iter_mut().zip(lane.iter()) {
                    *b = *v;
                }
                fft.process(&mut lane_buf);
                for (v, b) in lane.iter_mut().zip(lane_buf.iter()) {
                    *v = *b;
                }
            }
        }
        if forward {
            let scale = 1.0 / (m as f64).powi(values.ndim() as i32);
            values.mapv_inplace(|v| v * scale);
        }
    }

    /// Zero-filled complex field over configuration space.
    pub fn zeros_complex(&self) -> ArrayD<Complex64> {
        ArrayD::zeros(IxDyn(&self.shape()))
    }

    /// Zero-filled real field over configuration space.
    pub fn zeros_real(&self) -> ArrayD<f64> {
        ArrayD::zeros(IxDyn(&self.shape()))
    }
}

/// Complex amplitude field over configuration space.
#[derive(Clone, Debug)]
pub struct WaveFunction {
    pub grid: Grid,
    representation: Representation,
    pub values: ArrayD<Complex64>,
    pub time: f64,
}

impl WaveFunction {
    pub fn from_position(grid: Grid, values: ArrayD<Complex64>) -> Result<WaveFunction> {
        Self::with_representation(grid, values, Representation::Position)
    }

    pub fn from_spectral(grid: Grid, values: ArrayD<Complex64>) -> Result<WaveFunction> {
        Self::with_representation(grid, values, Representation::Spectral)
    }

    fn with_representation(
        grid: Grid,
        values: ArrayD<Complex64>,
        representation: Representation,
    ) -> Result<WaveFunction> {
        if values.shape() != grid.shape().as_slice() {
            return Err(Error::ShapeMismatch);
        }
        Ok(WaveFunction {
            grid,
            representation,
            values,
            time: 0.0,
        })
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Forward transform; errors if already spectral.
    pub fn to_spectral(&self) -> Result<WaveFunction> {
        if self.representation != Representation::Position {
            return Err(Error::WrongRepresentation {
                expected: Representation::Position,
                found: self.representation,
            });
        }
        let mut out = self.clone();
        out.grid.transform_in_place(&mut out.values, true);
        out.representation = Representation::Spectral;
        Ok(out)
    }

    /// Inverse transform; errors if already in position space.
    pub fn to_position(&self) -> Result<WaveFunction> {
        if self.representation != Representation::Spectral {
            return Err(Error::WrongRepresentation {
                expected: Representation::Spectral,
                found: self.representation,
            });
        }
        let mut out = self.clone();
        out.grid.transform_in_place(&mut out.values, false);
        out.representation = Representation::Position;
        Ok(out)
    }

    /// Convert into spectral representation, transforming only when needed.
    pub fn into_spectral(self) -> WaveFunction {
        match self.representation {
            Representation::Spectral => self,
            Representation::Position => self.to_spectral().expect("position input"),
        }
    }

    /// Convert into position representation, transforming only when needed.
    pub fn into_position(self) -> WaveFunction {
        match self.representation {
            Representation::Position => self,
            Representation::Spectral => self.to_position().expect("spectral input"),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        let weight = match self.representation {
            Representation::Position => self.grid.cell_volume(),
            Representation::Spectral => self.grid.volume(),
        };
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * weight
    }

    /// `||a||` with the lattice measure (position) or `V^(1/2)`-weighted
    /// coefficient sum (spectral); the two agree by Parseval.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `<self|other>` in the representation both operands share.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.representation != other.representation {
            return Err(Error::WrongRepresentation {
                expected: self.representation,
                found: other.representation,
            });
        }
        let weight = match self.representation {
            Representation::Position => self.grid.cell_volume(),
            Representation::Spectral => self.grid.volume(),
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            acc += a.conj() * b;
        }
        Ok(acc * weight)
    }

    /// Rescaled copy with unit norm.
    pub fn normalized(&self) -> WaveFunction {
        let n = self.norm();
        let mut out = self.clone();
        if n > 0.0 {
            out.values.mapv_inplace(|v| v / n);
        }
        out
    }
}

/// Free-field eigenvalue table `omega(k_1..k_N) = sum_j |k_j|^2 / (2m)`.
#[derive(Clone, Debug)]
pub struct OmegaTable {
    pub grid: Grid,
    pub values: ArrayD<f64>,
    max_value: f64,
}

impl OmegaTable {
    pub fn max_value(&self) -> f64 {
        self.max_value
    }
}

/// Non-relativistic free dispersion for every spectral point (`hbar = 1`).
pub fn dispersion(grid: &Grid, mass: f64) -> Result<OmegaTable> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::NonPositiveMass(mass));
    }
    let n = grid.n_points();
    let mut values = Vec::with_capacity(n);
    let mut max_value: f64 = 0.0;
    for flat in 0..n {
        let w = grid.k_squared_sum(flat) / (2.0 * mass);
        max_value = max_value.max(w);
        values.push(w);
    }
    let values = ArrayD::from_shape_vec(IxDyn(&grid.shape()), values).expect("shape");
    Ok(OmegaTable {
        grid: grid.clone(),
        values,
        max_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const TAU: f64 = std::f64::consts::TAU;

    fn grid_1d(l: f64, m: usize) -> Grid {
        Grid::new(l, m, 1, 1, u128::MAX).unwrap()
    }

    #[test]
    fn make_grid_spacing_and_wavenumbers() {
        let g = grid_1d(20.0, 8);
        assert_abs_diff_eq!(g.spacing(), 2.5);
        let mut ks: Vec<f64> = g.wavenumbers().to_vec();
        ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<f64> = (-4..4).map(|n| n as f64 * TAU / 20.0).collect();
        for (a, b) in ks.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn config_size_two_particles() {
        let g = Grid::new(20.0, 256, 1, 2, u128::MAX).unwrap();
        assert_eq!(g.n_points(), 65536);
        assert_eq!(g.rank(), 2);
    }

    #[test]
    fn budget_exceeded() {
        let err = Grid::new(20.0, 256, 3, 3, 1 << 30).unwrap_err();
        match err {
            Error::BudgetExceeded { points, .. } => {
                assert_eq!(points, (256u128).pow(9));
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(
            Grid::new(20.0, 96, 1, 1, u128::MAX),
            Err(Error::NotPowerOfTwo(96))
        ));
    }

    #[test]
    fn constant_field_is_dc_mode() {
        let g = grid_1d(20.0, 16);
        let c = Complex64::new(0.7, -0.3);
        let w = WaveFunction::from_position(g.clone(), ArrayD::from_elem(IxDyn(&g.shape()), c))
            .unwrap();
        let s = w.to_spectral().unwrap();
        let flat = s.values.as_slice().unwrap();
        assert!((flat[0] - c).norm() < 1e-14);
        for v in &flat[1..] {
            assert!(v.norm() < 1e-14);
        }
    }

    #[test]
    fn plane_wave_is_single_mode() {
        let g = grid_1d(20.0, 16);
        let k0 = 3.0 * TAU / 20.0;
        let vals: Vec<Complex64> = (0..16)
            .map(|j| Complex64::from_polar(1.0, k0 * g.coordinate(j)))
            .collect();
        let w = WaveFunction::from_position(
            g.clone(),
            ArrayD::from_shape_vec(IxDyn(&g.shape()), vals).unwrap(),
        )
        .unwrap();
        let s = w.to_spectral().unwrap();
        let flat = s.values.as_slice().unwrap();
        for (n, v) in flat.iter().enumerate() {
            if n == 3 {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-13);
            } else {
                assert!(v.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn round_trip_matches_direct_dft_at_m8() {
        // Independent oracle: direct DFT summation on an M = 8 grid.
        let g = grid_1d(20.0, 8);
        let vals: Vec<Complex64> = (0..8)
            .map(|j| {
                let x = j as f64;
                Complex64::new((0.3 * x).sin() + 0.1 * x, (0.7 * x).cos())
            })
            .collect();
        let w = WaveFunction::from_position(
            g.clone(),
            ArrayD::from_shape_vec(IxDyn(&g.shape()), vals.clone()).unwrap(),
        )
        .unwrap();
        let s = w.to_spectral().unwrap();
        let coeffs = s.values.as_slice().unwrap();
        for n in 0..8usize {
            let k = g.wavenumbers()[n];
            let mut direct = Complex64::new(0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                direct += v * Complex64::from_polar(1.0, -k * g.coordinate(j));
            }
            direct /= 8.0;
            assert!((coeffs[n] - direct).norm() < 1e-12);
        }
        let back = s.to_position().unwrap();
        for (a, b) in back.values.iter().zip(vals.iter()) {
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn parseval_between_representations() {
        let g = Grid::new(12.0, 16, 1, 2, u128::MAX).unwrap();
        let vals: Vec<Complex64> = (0..g.n_points())
            .map(|j| {
                let x = j as f64;
                Complex64::new((0.11 * x).sin(), (0.23 * x + 1.0).cos() * 0.5)
            })
            .collect();
        let w = WaveFunction::from_position(
            g.clone(),
            ArrayD::from_shape_vec(IxDyn(&g.shape()), vals).unwrap(),
        )
        .unwrap();
        let s = w.to_spectral().unwrap();
        let rel = (w.norm() - s.norm()).abs() / w.norm();
        assert!(rel < 1e-12);
    }

    #[test]
    fn wrong_representation_errors() {
        let g = grid_1d(10.0, 8);
        let w = WaveFunction::from_spectral(g.clone(), g.zeros_complex()).unwrap();
        assert!(matches!(
            w.to_spectral(),
            Err(Error::WrongRepresentation { .. })
        ));
    }

    #[test]
    fn dispersion_trivial_values() {
        // omega = 0 at k = 0; single particle k = 2 gives k^2/2m = 2.
        let g = grid_1d(TAU, 8); // dk = 1
        let t = dispersion(&g, 1.0).unwrap();
        let flat = t.values.as_slice().unwrap();
        assert_eq!(flat[0], 0.0);
        assert_abs_diff_eq!(flat[2], 2.0, epsilon = 1e-14);

        let g2 = Grid::new(TAU, 8, 1, 2, u128::MAX).unwrap();
        let t2 = dispersion(&g2, 1.0).unwrap();
        // k = (1, 1): flat index 1*8 + 1
        assert_abs_diff_eq!(t2.values.as_slice().unwrap()[9], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn dispersion_even_and_additive() {
        let g2 = Grid::new(TAU, 8, 1, 2, u128::MAX).unwrap();
        let g1 = g2.one_particle();
        let t2 = dispersion(&g2, 0.7).unwrap();
        let t1 = dispersion(&g1, 0.7).unwrap();
        let m = 8usize;
        for i in 0..m {
            for j in 0..m {
                let w = t2.values.as_slice().unwrap()[i * m + j];
                let wi = t1.values.as_slice().unwrap()[i];
                let wj = t1.values.as_slice().unwrap()[j];
                assert_abs_diff_eq!(w, wi + wj, epsilon = 1e-13);
                // even in each argument: mirror index M - i
                let mi = (m - i) % m;
                let wm = t2.values.as_slice().unwrap()[mi * m + j];
                assert_abs_diff_eq!(w, wm, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn rejects_non_positive_mass() {
        let g = grid_1d(10.0, 8);
        assert!(matches!(dispersion(&g, 0.0), Err(Error::NonPositiveMass(_))));
    }
}
