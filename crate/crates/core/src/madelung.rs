//! Amplitude/phase decomposition and the reduced one-particle fields.
//!
//! The phase is stored as `S = arg(a)/m`, unwrapped along a lexicographic
//! sweep; points with `|a|` below the node threshold are masked and carry no
//! contract.  The two-particle phase structure
//! `S = sum_i varphi_i + (1/2) sum_{i != j} mu_i mu_j` is extracted by
//! alternating least squares, and the fit residual is always reported.

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::calculus::{self, fill_masked};
use crate::error::{Error, Result};
use crate::grid::{Grid, Representation, WaveFunction};

const TAU: f64 = std::f64::consts::TAU;

/// Default relative node threshold (`|a| < eps * max|a|`).
pub const DEFAULT_EPS_NODE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct MadelungDecomposition {
    pub grid: Grid,
    /// `phi = |a| >= 0`.
    pub amplitude: ArrayD<f64>,
    /// Unwrapped total phase divided by the mass.
    pub phase: ArrayD<f64>,
    pub mass: f64,
    pub node_mask: ArrayD<bool>,
    pub eps_node_abs: f64,
}

/// Split a position-space wavefunction into amplitude and phase.
pub fn decompose(w: &WaveFunction, mass: f64, eps_node_rel: f64) -> Result<MadelungDecomposition> {
    if w.representation() != Representation::Position {
        return Err(Error::WrongRepresentation {
            expected: Representation::Position,
            found: w.representation(),
        });
    }
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::NonPositiveMass(mass));
    }
    let amplitude = w.values.mapv(|v| v.norm());
    let max_amp = amplitude.iter().fold(0.0f64, |a, &b| a.max(b));
    if !(max_amp.is_finite()) || max_amp == 0.0 {
        return Err(Error::AllNodes);
    }
    let eps_abs = eps_node_rel * max_amp;
    let node_mask = amplitude.mapv(|a| a < eps_abs);
    if node_mask.iter().all(|&m| m) {
        return Err(Error::AllNodes);
    }

    // Lexicographic unwrap: heal each raw phase against the last unmasked
    // value by the nearest multiple of 2*pi.  Masked points are healed too
    // but never serve as a reference.
    let raw: Vec<f64> = w.values.iter().map(|v| v.arg()).collect();
    let msk = node_mask.as_slice().unwrap();
    let mut theta = raw;
    let mut last: Option<f64> = None;
    for (i, th) in theta.iter_mut().enumerate() {
        if let Some(prev) = last {
            *th += TAU * ((prev - *th) / TAU).round();
        }
        if !msk[i] {
            last = Some(*th);
        }
    }
    let phase = ArrayD::from_shape_vec(IxDyn(&w.grid.shape()), theta)
        .expect("shape")
        .mapv(|t| t / mass);
    Ok(MadelungDecomposition {
        grid: w.grid.clone(),
        amplitude,
        phase,
        mass,
        node_mask,
        eps_node_abs: eps_abs,
    })
}

/// `phi * exp(i m S)`; inverse of [`decompose`] away from the node mask.
pub fn recompose(dec: &MadelungDecomposition) -> WaveFunction {
    let mut values = dec.grid.zeros_complex();
    {
        let out = values.as_slice_mut().unwrap();
        let amp = dec.amplitude.as_slice().unwrap();
        let phase = dec.phase.as_slice().unwrap();
        for i in 0..out.len() {
            out[i] = Complex64::from_polar(amp[i], dec.mass * phase[i]);
        }
    }
    WaveFunction::from_position(dec.grid.clone(), values).expect("shape from grid")
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub power_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 200,
            rel_tol: 1e-10,
            power_iters: 40,
        }
    }
}

/// Per-particle phase fields extracted from `S`.
#[derive(Clone, Debug)]
pub struct PhaseStructure {
    pub varphi: Vec<ArrayD<f64>>,
    pub mu: Vec<ArrayD<f64>>,
    /// `L^2` norm of `S - model` over unmasked points; never hidden.
    pub fit_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PhaseStructure {
    /// Particle-averaged one-body phase (particles agree for symmetric states).
    pub fn varphi_mean(&self) -> ArrayD<f64> {
        mean_of(&self.varphi)
    }

    pub fn mu_mean(&self) -> ArrayD<f64> {
        mean_of(&self.mu)
    }
}

fn mean_of(fields: &[ArrayD<f64>]) -> ArrayD<f64> {
    let mut out = fields[0].clone();
    for f in &fields[1..] {
        out += f;
    }
    out.mapv(|v| v / fields.len() as f64)
}

struct FlatFit<'a> {
    s: &'a [f64],
    w: Vec<f64>,
    p: usize,
    n: usize,
    cell: f64,
}

impl FlatFit<'_> {
    fn model_at(&self, varphi: &[Vec<f64>], mu: &[Vec<f64>], idx: &[usize]) -> f64 {
        let mut m = 0.0;
        for (i, &pi) in idx.iter().enumerate() {
            m += varphi[i][pi];
            for (j, &pj) in idx.iter().enumerate() {
                if j > i {
                    m += mu[i][pi] * mu[j][pj];
                }
            }
        }
        m
    }

    fn residual(&self, varphi: &[Vec<f64>], mu: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        let mut idx = vec![0usize; self.n];
        for (flat, (&s, &w)) in self.s.iter().zip(self.w.iter()).enumerate() {
            if w == 0.0 {
                continue;
            }
            self.unflatten(flat, &mut idx);
            let d = s - self.model_at(varphi, mu, &idx);
            acc += d * d;
        }
        (acc * self.cell).sqrt()
    }

    fn unflatten(&self, flat: usize, idx: &mut [usize]) {
        let mut rest = flat;
        for i in (0..self.n).rev() {
            idx[i] = rest % self.p;
            rest /= self.p;
        }
    }
}

/// Alternating least squares for the pair-phase ansatz.  `n = 1` returns
/// `varphi = S` exactly; the bilinear part is seeded by power iteration on
/// the de-separated residual (plain zero initialization is a stuck point of
/// ALS).  Non-convergence is reported, not fatal.
pub fn fit_phase_structure(
    s: &ArrayD<f64>,
    mask: &ArrayD<bool>,
    grid: &Grid,
    opts: &FitOptions,
) -> Result<PhaseStructure> {
    let n = grid.particles();
    let d = grid.dims();
    let p = grid.points_per_dim().pow(d as u32);
    let shape_1p = vec![grid.points_per_dim(); d];
    if s.shape() != grid.shape().as_slice() {
        return Err(Error::ShapeMismatch);
    }

    if n == 1 {
        let mut varphi = s.clone();
        // reshape to the one-particle shape (identical layout)
        let varphi = ArrayD::from_shape_vec(
            IxDyn(&shape_1p),
            varphi.as_slice_mut().unwrap().to_vec(),
        )
        .expect("shape");
        let zero = ArrayD::zeros(IxDyn(&shape_1p));
        return Ok(PhaseStructure {
            varphi: vec![varphi],
            mu: vec![zero],
            fit_residual: 0.0,
            converged: true,
            iterations: 0,
        });
    }

    let weights: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { 1.0 }).collect();
    let fit = FlatFit {
        s: s.as_slice().ok_or(Error::ShapeMismatch)?,
        w: weights,
        p,
        n,
        cell: grid.cell_volume(),
    };

    let mut varphi = vec![vec![0.0f64; p]; n];
    let mut mu = vec![vec![0.0f64; p]; n];

    // separable stage
    for _ in 0..4 {
        for i in 0..n {
            update_varphi(&fit, &mut varphi, &mu, i);
        }
    }
    let sep_res = fit.residual(&varphi, &mu);

    // seed the bilinear part unless the separable fit is already exact
    let scale = calc_scale(fit.s, &fit.w);
    if sep_res > 1e-12 * (1.0 + scale) {
        seed_mu(&fit, &varphi, &mut mu, opts.power_iters);
    }

    let mut res_prev = sep_res;
    let mut iters = 0usize;
    let mut converged = false;
    for it in 0..opts.max_iters {
        iters = it + 1;
        for i in 0..n {
            update_varphi(&fit, &mut varphi, &mu, i);
        }
        for i in 0..n {
            update_mu(&fit, &varphi, &mut mu, i);
        }
        let res = fit.residual(&varphi, &mu);
        if res <= 1e-14 * (1.0 + scale)
            || (res_prev - res).abs() <= opts.rel_tol * res_prev.max(1e-300)
        {
            res_prev = res;
            converged = true;
            break;
        }
        res_prev = res;
    }

    gauge_fix(&mut varphi, &mut mu, n);

    let to_arr = |v: Vec<f64>| ArrayD::from_shape_vec(IxDyn(&shape_1p), v).expect("shape");
    Ok(PhaseStructure {
        varphi: varphi.into_iter().map(to_arr).collect(),
        mu: mu.into_iter().map(to_arr).collect(),
        fit_residual: res_prev,
        converged,
        iterations: iters,
    })
}

fn calc_scale(s: &[f64], w: &[f64]) -> f64 {
    s.iter()
        .zip(w.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max)
}

fn update_varphi(fit: &FlatFit, varphi: &mut [Vec<f64>], mu: &[Vec<f64>], target: usize) {
    let p = fit.p;
    let mut num = vec![0.0f64; p];
    let mut den = vec![0.0f64; p];
    let mut idx = vec![0usize; fit.n];
    for (flat, (&s, &w)) in fit.s.iter().zip(fit.w.iter()).enumerate() {
        if w == 0.0 {
            continue;
        }
        fit.unflatten(flat, &mut idx);
        let mut rest = s;
        for (i, &pi) in idx.iter().enumerate() {
            if i != target {
                rest -= varphi[i][pi];
            }
            for (j, &pj) in idx.iter().enumerate() {
                if j > i {
                    rest -= mu[i][pi] * mu[j][pj];
                }
            }
        }
        let pt = idx[target];
        num[pt] += rest;
        den[pt] += 1.0;
    }
    for i in 0..p {
        varphi[target][i] = if den[i] > 0.0 { num[i] / den[i] } else { 0.0 };
    }
}

fn update_mu(fit: &FlatFit, varphi: &[Vec<f64>], mu: &mut [Vec<f64>], target: usize) {
    let p = fit.p;
    // coefficient of mu_target at a config point is sum of partner values
    let partner_norm: f64 = (0..fit.n)
        .filter(|&i| i != target)
        .map(|i| mu[i].iter().map(|v| v * v).sum::<f64>())
        .sum();
    if partner_norm == 0.0 {
        return;
    }
    let mut num = vec![0.0f64; p];
    let mut den = vec![0.0f64; p];
    let mut idx = vec![0usize; fit.n];
    for (flat, (&s, &w)) in fit.s.iter().zip(fit.w.iter()).enumerate() {
        if w == 0.0 {
            continue;
        }
        fit.unflatten(flat, &mut idx);
        let mut rest = s;
        let mut coeff = 0.0;
        for (i, &pi) in idx.iter().enumerate() {
            rest -= varphi[i][pi];
            if i != target {
                coeff += mu[i][pi];
            }
            for (j, &pj) in idx.iter().enumerate() {
                if j > i && i != target && j != target {
                    rest -= mu[i][pi] * mu[j][pj];
                }
            }
        }
        let pt = idx[target];
        num[pt] += rest * coeff;
        den[pt] += coeff * coeff;
    }
    for i in 0..p {
        if den[i] > 1e-300 {
            mu[target][i] = num[i] / den[i];
        }
    }
}

/// Rank-1 seed for the bilinear term from the de-separated residual.
fn seed_mu(fit: &FlatFit, varphi: &[Vec<f64>], mu: &mut [Vec<f64>], power_iters: usize) {
    let p = fit.p;
    let n = fit.n;
    let mut idx = vec![0usize; n];
    if n == 2 {
        // masked entries count as zero in the matvecs; this is only a seed.
        let mut resid = vec![0.0f64; p * p];
        for (flat, (&s, &w)) in fit.s.iter().zip(fit.w.iter()).enumerate() {
            if w == 0.0 {
                continue;
            }
            fit.unflatten(flat, &mut idx);
            resid[flat] = s - varphi[0][idx[0]] - varphi[1][idx[1]];
        }
        let mut v: Vec<f64> = (0..p).map(|j| 1.0 + 0.01 * (j as f64).cos()).collect();
        normalize(&mut v);
        let mut u = vec![0.0f64; p];
        let mut sigma = 0.0;
        for _ in 0..power_iters {
            for (i, ui) in u.iter_mut().enumerate() {
                *ui = (0..p).map(|j| resid[i * p + j] * v[j]).sum();
            }
            normalize(&mut u);
            for (j, vj) in v.iter_mut().enumerate() {
                *vj = (0..p).map(|i| resid[i * p + j] * u[i]).sum();
            }
            sigma = normalize(&mut v);
        }
        if sigma > 0.0 {
            let sq = sigma.sqrt();
            for i in 0..p {
                mu[0][i] = u[i] * sq;
                mu[1][i] = v[i] * sq;
            }
        }
    } else {
        // n = 3: power iteration on the mode-1 unfolding for a direction,
        // then closed-form partner updates bring in the scales.
        let cols = p * p;
        let mut u: Vec<f64> = (0..p).map(|i| 1.0 + 0.01 * (i as f64).sin()).collect();
        normalize(&mut u);
        let mut col = vec![0.0f64; cols];
        for _ in 0..power_iters {
            for c in col.iter_mut() {
                *c = 0.0;
            }
            for (flat, (&s, &w)) in fit.s.iter().zip(fit.w.iter()).enumerate() {
                if w == 0.0 {
                    continue;
                }
                fit.unflatten(flat, &mut idx);
                let r = s - varphi[0][idx[0]] - varphi[1][idx[1]] - varphi[2][idx[2]];
                col[idx[1] * p + idx[2]] += r * u[idx[0]];
            }
            normalize(&mut col);
            let mut u_next = vec![0.0f64; p];
            for (flat, (&s, &w)) in fit.s.iter().zip(fit.w.iter()).enumerate() {
                if w == 0.0 {
                    continue;
                }
                fit.unflatten(flat, &mut idx);
                let r = s - varphi[0][idx[0]] - varphi[1][idx[1]] - varphi[2][idx[2]];
                u_next[idx[0]] += r * col[idx[1] * p + idx[2]];
            }
            u = u_next;
            normalize(&mut u);
        }
        mu[0].copy_from_slice(&u);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Canonical gauge: per-particle constants collected in `varphi_1`, balanced
/// `mu` norms for pairs, leading sign positive.
fn gauge_fix(varphi: &mut [Vec<f64>], mu: &mut [Vec<f64>], n: usize) {
    let p = varphi[0].len();
    for i in 1..n {
        let mean: f64 = varphi[i].iter().sum::<f64>() / p as f64;
        for v in varphi[i].iter_mut() {
            *v -= mean;
        }
        for v in varphi[0].iter_mut() {
            *v += mean;
        }
    }
    if n == 2 {
        let n0 = mu[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        let n1 = mu[1].iter().map(|v| v * v).sum::<f64>().sqrt();
        if n0 > 0.0 && n1 > 0.0 {
            let c = (n1 / n0).sqrt();
            for v in mu[0].iter_mut() {
                *v *= c;
            }
            for v in mu[1].iter_mut() {
                *v /= c;
            }
        }
    }
    let lead = mu[0]
        .iter()
        .cloned()
        .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap_or(0.0);
    if lead < 0.0 {
        for m in mu.iter_mut() {
            for v in m.iter_mut() {
                *v = -*v;
            }
        }
    }
}

/// Reduced `i`-particle densities with `N!/(N-i)!` weights.
#[derive(Clone, Debug)]
pub struct Moments {
    pub n_particles: usize,
    pub rho: ArrayD<f64>,
    pub rho2: Option<ArrayD<f64>>,
    pub rho3: Option<ArrayD<f64>>,
}

/// Marginalize `phi^2` down to one-, two- and three-particle moments.
pub fn moments(phi_sq: &ArrayD<f64>, grid: &Grid) -> Result<Moments> {
    if phi_sq.shape() != grid.shape().as_slice() {
        return Err(Error::ShapeMismatch);
    }
    if phi_sq.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "phi^2 must be non-negative".into(),
        ));
    }
    let n = grid.particles();
    let d = grid.dims();
    let h_d = grid.spacing().powi(d as i32);

    let marginal_to = |particles_kept: usize| -> ArrayD<f64> {
        let mut out = phi_sq.clone();
        for _ in 0..(n - particles_kept) * d {
            let last = out.ndim() - 1;
            out = out.sum_axis(ndarray::Axis(last));
        }
        out.mapv(|v| v * h_d.powi((n - particles_kept) as i32))
    };

    let weight = |i: usize| -> f64 {
        // N!/(N - i)!
        ((n - i + 1)..=n).map(|v| v as f64).product()
    };

    let rho = marginal_to(1).mapv(|v| v * weight(1));
    let rho2 = (n >= 2).then(|| marginal_to(2).mapv(|v| v * weight(2)));
    let rho3 = (n >= 3).then(|| marginal_to(3).mapv(|v| v * weight(3)));
    Ok(Moments {
        n_particles: n,
        rho,
        rho2,
        rho3,
    })
}

/// `lambda` and `kappa^2` fields from the moments and a one-particle `mu`.
#[derive(Clone, Debug)]
pub struct CorrelationFields {
    pub lambda: ArrayD<f64>,
    pub kappa_sq: ArrayD<f64>,
    pub mask: ArrayD<bool>,
    /// Largest negative `kappa^2` removed by the clamp.
    pub clamp_magnitude: f64,
}

pub fn correlation_fields(
    m: &Moments,
    mu: &ArrayD<f64>,
    grid_1p: &Grid,
    eps_rel: f64,
) -> Result<CorrelationFields> {
    let rho = m.rho.as_slice().ok_or(Error::ShapeMismatch)?;
    let p = rho.len();
    let max_rho = rho.iter().fold(0.0f64, |a, &b| a.max(b));
    if max_rho <= 0.0 {
        return Err(Error::AllNodes);
    }
    let floor = eps_rel * max_rho;
    let mask_v: Vec<bool> = rho.iter().map(|&r| r < floor).collect();
    let mut lambda = vec![0.0f64; p];
    let mut kappa_sq = vec![0.0f64; p];
    let mut clamp: f64 = 0.0;

    if m.n_particles >= 2 {
        let mu_s = mu.as_slice().ok_or(Error::ShapeMismatch)?;
        if mu_s.len() != p {
            return Err(Error::ShapeMismatch);
        }
        let h_d = grid_1p.cell_volume();
        let rho2 = m
            .rho2
            .as_ref()
            .expect("rho2 present for n >= 2")
            .as_slice()
            .unwrap();
        for i in 0..p {
            if mask_v[i] {
                continue;
            }
            let mut s1 = 0.0; // int rho2 mu
            let mut s2 = 0.0; // int rho2 mu^2
            for j in 0..p {
                let r2 = rho2[i * p + j];
                s1 += r2 * mu_s[j];
                s2 += r2 * mu_s[j] * mu_s[j];
            }
            s1 *= h_d;
            s2 *= h_d;
            let lam = s1 / rho[i];
            let mut s3 = 0.0; // int rho3 mu mu (n = 3 only)
            if let Some(rho3) = m.rho3.as_ref() {
                let r3 = rho3.as_slice().unwrap();
                for j in 0..p {
                    for k in 0..p {
                        s3 += r3[(i * p + j) * p + k] * mu_s[j] * mu_s[k];
                    }
                }
                s3 *= h_d * h_d;
            }
            let raw = (s3 + s2 - rho[i] * lam * lam) / rho[i];
            lambda[i] = lam;
            if raw < 0.0 {
                clamp = clamp.max(-raw);
                kappa_sq[i] = 0.0;
            } else {
                kappa_sq[i] = raw;
            }
        }
    }

    let shape = IxDyn(&grid_1p.shape());
    Ok(CorrelationFields {
        lambda: ArrayD::from_shape_vec(shape.clone(), lambda).expect("shape"),
        kappa_sq: ArrayD::from_shape_vec(shape.clone(), kappa_sq).expect("shape"),
        mask: ArrayD::from_shape_vec(shape, mask_v).expect("shape"),
        clamp_magnitude: clamp,
    })
}

/// `u = grad varphi + lambda grad mu` from precomputed gradients.
pub fn velocity_from_parts(
    grad_varphi: &[ArrayD<f64>],
    lambda: &ArrayD<f64>,
    grad_mu: &[ArrayD<f64>],
) -> Vec<ArrayD<f64>> {
    grad_varphi
        .iter()
        .zip(grad_mu.iter())
        .map(|(gv, gm)| {
            let mut out = gv.clone();
            {
                let o = out.as_slice_mut().unwrap();
                let l = lambda.as_slice().unwrap();
                let g = gm.as_slice().unwrap();
                for i in 0..o.len() {
                    o[i] += l[i] * g[i];
                }
            }
            out
        })
        .collect()
}

/// `grad lambda x grad mu`: empty for `d = 1`, one component for `d = 2`,
/// three for `d = 3`.
pub fn vorticity_from_gradients(
    grad_lambda: &[ArrayD<f64>],
    grad_mu: &[ArrayD<f64>],
) -> Vec<ArrayD<f64>> {
    match grad_lambda.len() {
        2 => {
            let mut c = grad_lambda[0].clone();
            {
                let o = c.as_slice_mut().unwrap();
                let lx = grad_lambda[0].as_slice().unwrap();
                let ly = grad_lambda[1].as_slice().unwrap();
                let mx = grad_mu[0].as_slice().unwrap();
                let my = grad_mu[1].as_slice().unwrap();
                for i in 0..o.len() {
                    o[i] = lx[i] * my[i] - ly[i] * mx[i];
                }
            }
            vec![c]
        }
        3 => {
            let comp = |a1: usize, a2: usize| {
                let mut c = grad_lambda[0].clone();
                let o = c.as_slice_mut().unwrap();
                let l1 = grad_lambda[a1].as_slice().unwrap();
                let l2 = grad_lambda[a2].as_slice().unwrap();
                let m1 = grad_mu[a1].as_slice().unwrap();
                let m2 = grad_mu[a2].as_slice().unwrap();
                for i in 0..o.len() {
                    o[i] = l1[i] * m2[i] - l2[i] * m1[i];
                }
                c
            };
            vec![comp(1, 2), comp(2, 0), comp(0, 1)]
        }
        _ => Vec::new(),
    }
}

/// Velocity and vorticity on the one-particle lattice.  Phase gradients go
/// through the unit-modulus exponential at scale `mass`; `lambda` and `mu`
/// are differentiated spectrally.
pub fn velocity_and_vorticity(
    grid_1p: &Grid,
    varphi: &ArrayD<f64>,
    lambda: &ArrayD<f64>,
    mu: &ArrayD<f64>,
    mass: f64,
    mask: &ArrayD<bool>,
) -> (Vec<ArrayD<f64>>, Vec<ArrayD<f64>>) {
    let grad_varphi = calculus::phase_gradient(grid_1p, varphi, mass, mask);
    let mut lam = lambda.clone();
    fill_masked(&mut lam, mask);
    let mut mufill = mu.clone();
    fill_masked(&mut mufill, mask);
    let grad_mu = calculus::gradient(grid_1p, &mufill);
    let grad_lambda = calculus::gradient(grid_1p, &lam);
    let u = velocity_from_parts(&grad_varphi, &lam, &grad_mu);
    let vort = vorticity_from_gradients(&grad_lambda, &grad_mu);
    (u, vort)
}

/// One-particle summary of a decomposed state.
#[derive(Clone, Debug)]
pub struct HydroFields {
    pub grid: Grid,
    pub rho: ArrayD<f64>,
    pub rho2: Option<ArrayD<f64>>,
    pub rho3: Option<ArrayD<f64>>,
    pub lambda: ArrayD<f64>,
    pub kappa_sq: ArrayD<f64>,
    pub u: Vec<ArrayD<f64>>,
    pub vorticity: Vec<ArrayD<f64>>,
    pub mask: ArrayD<bool>,
}
