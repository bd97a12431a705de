//! Energies, functional derivatives and equation-of-motion residuals.
//!
//! Trajectories come from `evolution`; the hydrodynamic equations are
//! evaluated as residuals on the extracted fields, never forward-solved.
//! Functional derivatives of the coarse-graining energy are taken by central
//! Gateaux differences on the wavefunction-level functional with the time
//! history frozen, which avoids differentiating through the phase fit.

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::calculus::{self, fill_masked};
use crate::error::{Error, Result};
use crate::evolution::{memory_increment, FluctuationSource, Trajectory};
use crate::grid::{Grid, WaveFunction};
use crate::projector::KernelSet;

/// Quantum-energy prefactor: the standard Bohm form `1/(2m)` or the printed
/// `m/2` (the same expressions scaled by `m^2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefactorMode {
    Standard,
    Paper,
}

impl PrefactorMode {
    pub fn prefactor(self, mass: f64) -> f64 {
        match self {
            PrefactorMode::Standard => 1.0 / (2.0 * mass),
            PrefactorMode::Paper => mass / 2.0,
        }
    }
}

/// Reading of the `rho grad (kappa / 2 rho) d/d kappa` term in the momentum
/// bracket; the gradient either acts on the whole product or on the ratio
/// alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaParenthesization {
    Inside,
    Outside,
}

/// One-particle fields entering the equations of motion, plus what is needed
/// to rebuild a configuration-space state from them.
#[derive(Clone, Debug)]
pub struct FieldSet {
    pub grid_1p: Grid,
    pub config_grid: Grid,
    pub n_particles: usize,
    pub mass: f64,
    pub rho: ArrayD<f64>,
    pub varphi: ArrayD<f64>,
    pub lambda: ArrayD<f64>,
    pub mu: ArrayD<f64>,
    pub kappa_sq: ArrayD<f64>,
    pub mask: ArrayD<bool>,
}

impl FieldSet {
    pub fn kappa(&self) -> ArrayD<f64> {
        self.kappa_sq.mapv(|v| v.max(0.0).sqrt())
    }

    pub fn velocity(&self) -> Vec<ArrayD<f64>> {
        let (u, _) = crate::madelung::velocity_and_vorticity(
            &self.grid_1p,
            &self.varphi,
            &self.lambda,
            &self.mu,
            self.mass,
            &self.mask,
        );
        u
    }
}

/// Scalar energies of one snapshot.
#[derive(Clone, Debug)]
pub struct EnergyBreakdown {
    pub e_qm: f64,
    pub e_p: Complex64,
    pub quantum_potential: ArrayD<f64>,
    pub prefactor_mode: PrefactorMode,
}

/// `E_qm = pref * int |grad sqrt(rho)|^2` and its functional derivative
/// `Q = -pref * lap sqrt(rho) / sqrt(rho)` (zero on the mask).  `Q` depends
/// only on the shape of `rho`, not its scale.
pub fn quantum_energy(
    rho: &ArrayD<f64>,
    mass: f64,
    grid_1p: &Grid,
    mode: PrefactorMode,
    mask: &ArrayD<bool>,
) -> Result<(f64, ArrayD<f64>)> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::NonPositiveMass(mass));
    }
    let max_rho = rho.iter().fold(0.0f64, |a, &b| a.max(b));
    if rho.iter().any(|&v| v < -1e-12 * max_rho.max(1.0)) {
        return Err(Error::InvalidArgument("rho must be non-negative".into()));
    }
    let pref = mode.prefactor(mass);
    let sqrt_rho = rho.mapv(|v| v.max(0.0).sqrt());
    let grads = calculus::gradient(grid_1p, &sqrt_rho);
    let mut grad_sq = grid_1p.zeros_real();
    for g in &grads {
        grad_sq.zip_mut_with(g, |acc, &v| *acc += v * v);
    }
    let e_qm = pref * calculus::integrate(grid_1p, &grad_sq);

    let lap = calculus::laplacian(grid_1p, &sqrt_rho);
    let mut q = grid_1p.zeros_real();
    {
        let qv = q.as_slice_mut().unwrap();
        let l = lap.as_slice().unwrap();
        let s = sqrt_rho.as_slice().unwrap();
        let m = mask.as_slice().unwrap();
        for i in 0..qv.len() {
            if !m[i] && s[i] > 0.0 {
                qv[i] = -pref * l[i] / s[i];
            }
        }
    }
    Ok((e_qm, q))
}

/// `E_P = <a| G^P a> - <a| zeta>` evaluated on a trajectory snapshot with the
/// same product quadrature as the integrator.
pub fn coarse_energy(
    traj: &Trajectory,
    kernels: &KernelSet,
    src: &FluctuationSource,
    s_zeta: f64,
    t_index: usize,
) -> Result<Complex64> {
    let t = *traj
        .times
        .get(t_index)
        .ok_or(Error::InsufficientHistory { t: 0.0, dt: traj.dt })?;
    let a_t = traj.state(t_index)?;
    let mem = memory_increment(traj, kernels, t, traj.dt)?;
    let zeta = crate::evolution::fluctuation_term(src, kernels, t, s_zeta)?;
    Ok(a_t.inner(&mem)? - a_t.inner(&zeta)?)
}

/// Rebuild a configuration-space wavefunction from one-particle fields: the
/// exact Madelung form for one particle, the product-amplitude closure with
/// the symmetric pair phase for two and three.
pub fn reconstruct_wavefunction(fields: &FieldSet) -> Result<WaveFunction> {
    let n = fields.n_particles;
    let g1 = &fields.grid_1p;
    let cg = &fields.config_grid;
    let p = g1.n_points();
    let rho = fields.rho.as_slice().ok_or(Error::ShapeMismatch)?;
    let varphi = fields.varphi.as_slice().ok_or(Error::ShapeMismatch)?;
    let mu = fields.mu.as_slice().ok_or(Error::ShapeMismatch)?;
    let mass = fields.mass;

    let values = match n {
        1 => {
            let mut vals = Vec::with_capacity(p);
            for i in 0..p {
                vals.push(Complex64::from_polar(
                    (rho[i].max(0.0)).sqrt(),
                    mass * varphi[i],
                ));
            }
            vals
        }
        _ => {
            let f: Vec<f64> = rho.iter().map(|&r| r.max(0.0) / n as f64).collect();
            let total: f64 = f.iter().sum::<f64>() * g1.cell_volume();
            if total <= 0.0 {
                return Err(Error::AllNodes);
            }
            let norm_pow = total.powi(n as i32 - 1);
            let mut vals = Vec::with_capacity(cg.n_points());
            let mut idx = vec![0usize; n];
            for flat in 0..cg.n_points() {
                let mut rest = flat;
                for i in (0..n).rev() {
                    idx[i] = rest % p;
                    rest /= p;
                }
                let mut amp_sq = 1.0;
                let mut phase = 0.0;
                for (i, &pi) in idx.iter().enumerate() {
                    amp_sq *= f[pi];
                    phase += varphi[pi];
                    for &pj in idx.iter().skip(i + 1) {
                        phase += mu[pi] * mu[pj];
                    }
                }
                vals.push(Complex64::from_polar(
                    (amp_sq / norm_pow).sqrt(),
                    mass * phase,
                ));
            }
            vals
        }
    };
    WaveFunction::from_position(
        cg.clone(),
        ArrayD::from_shape_vec(IxDyn(&cg.shape()), values).map_err(|_| Error::ShapeMismatch)?,
    )
}

/// The coarse-graining energy as a functional of the present one-particle
/// fields, with the trajectory history frozen.  Only the `tau = 0` quadrature
/// endpoint and the bra feel the reconstructed state.
pub struct CoarseFunctional {
    grid: Grid,
    dt: f64,
    t: f64,
    s_zeta: f64,
    /// history part of the memory integral, independent of the present state
    frozen: ArrayD<Complex64>,
    /// weight of the present state in the memory integral: `dt/2 * G(k, 0)`
    endpoint: ArrayD<f64>,
    zeta_t: ArrayD<Complex64>,
    pub is_zero: bool,
    /// The first-order response around the base state vanishes identically
    /// (all kernel weights are zero on its support), so every functional
    /// derivative is exactly zero; finite differences would only resolve
    /// their own quadratic floor.
    pub zero_linear_response: bool,
}

impl CoarseFunctional {
    pub fn new(
        kernels: &KernelSet,
        src: &FluctuationSource,
        s_zeta: f64,
        history: &Trajectory,
        t_index: usize,
    ) -> Result<CoarseFunctional> {
        if history.grid != *kernels.grid() {
            return Err(Error::GridMismatch);
        }
        if t_index >= history.len() {
            return Err(Error::InsufficientHistory {
                t: t_index as f64 * history.dt,
                dt: history.dt,
            });
        }
        let grid = kernels.grid().clone();
        let dt = history.dt;
        let t = history.times[t_index];
        let n = t_index;
        let g = kernels.g_amp.as_slice().unwrap();
        let w = kernels.omega.values.as_slice().unwrap();
        let is_zero = g.iter().all(|&v| v == 0.0) && kernels.f_amp.iter().all(|&v| v == 0.0);

        let mut frozen = grid.zeros_complex();
        if n > 0 {
            let out = frozen.as_slice_mut().unwrap();
            for j in 1..=n {
                let weight = if j == n { 0.5 } else { 1.0 };
                let tau = j as f64 * dt;
                let state = history.states[n - j].as_slice().unwrap();
                for i in 0..out.len() {
                    if g[i] != 0.0 {
                        out[i] +=
                            weight * g[i] * Complex64::from_polar(1.0, -w[i] * tau) * state[i];
                    }
                }
            }
            frozen.mapv_inplace(|v| v * dt);
        }
        let endpoint = if n > 0 {
            kernels.g_amp.mapv(|gv| 0.5 * dt * gv)
        } else {
            ArrayD::zeros(IxDyn(&grid.shape()))
        };
        let zeta_t = crate::evolution::fluctuation_term(src, kernels, t, s_zeta)?.values;
        let base = history.states[t_index].as_slice().unwrap();
        let zero_linear_response = is_zero
            || (frozen.iter().all(|v| v.norm_sqr() == 0.0)
                && zeta_t.iter().all(|v| v.norm_sqr() == 0.0)
                && base.iter().enumerate().all(|(i, v)| g[i] * v.norm() == 0.0));
        Ok(CoarseFunctional {
            grid,
            dt,
            t,
            s_zeta,
            frozen,
            endpoint,
            zeta_t,
            is_zero,
            zero_linear_response,
        })
    }

    /// `E_P` with the present state rebuilt from `fields`.
    pub fn eval(&self, fields: &FieldSet) -> Result<Complex64> {
        if self.is_zero {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let a_rec = reconstruct_wavefunction(fields)?.to_spectral()?;
        let a = a_rec.values.as_slice().unwrap();
        let frozen = self.frozen.as_slice().unwrap();
        let endpoint = self.endpoint.as_slice().unwrap();
        let zeta = self.zeta_t.as_slice().unwrap();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..a.len() {
            let mem = frozen[i] + endpoint[i] * a[i];
            acc += a[i].conj() * (mem - zeta[i]);
        }
        Ok(acc * self.grid.volume())
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn s_zeta(&self) -> f64 {
        self.s_zeta
    }
}

/// Central Gateaux difference `(F[s + eps b] - F[s - eps b]) / (2 eps)` for a
/// normalized bump centered at `center` (flat index).  `width = 0` uses a
/// single-cell bump of unit integral.
pub fn gateaux_sample<F>(
    f: &F,
    base: &ArrayD<f64>,
    grid: &Grid,
    center: usize,
    width: f64,
    eps: f64,
) -> Result<f64>
where
    F: Fn(&ArrayD<f64>) -> Result<f64>,
{
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gateaux eps must be positive, got {eps}"
        )));
    }
    let bump = make_bump(grid, center, width);
    let mut plus = base.clone();
    plus.zip_mut_with(&bump, |v, &b| *v += eps * b);
    let mut minus = base.clone();
    minus.zip_mut_with(&bump, |v, &b| *v -= eps * b);
    Ok((f(&plus)? - f(&minus)?) / (2.0 * eps))
}

fn make_bump(grid: &Grid, center: usize, width: f64) -> ArrayD<f64> {
    let mut bump = grid.zeros_real();
    if width <= 0.0 {
        let flat = bump.as_slice_mut().unwrap();
        flat[center] = 1.0 / grid.cell_volume();
        return bump;
    }
    let rank = grid.rank();
    let l = grid.box_length();
    {
        let flat = bump.as_slice_mut().unwrap();
        for (i, b) in flat.iter_mut().enumerate() {
            let mut r_sq = 0.0;
            for axis in 0..rank {
                let xi = grid.coordinate(grid.axis_index(i, axis));
                let xc = grid.coordinate(grid.axis_index(center, axis));
                let mut dx = (xi - xc).abs();
                if dx > l / 2.0 {
                    dx = l - dx;
                }
                r_sq += dx * dx;
            }
            *b = (-r_sq / (2.0 * width * width)).exp();
        }
    }
    let total = calculus::integrate(grid, &bump);
    bump.mapv(|v| v / total)
}

/// Assemble the whole derivative field `dF/d sigma` by scanning bump centers
/// over the lattice.
pub fn gateaux_field<F>(
    f: &F,
    base: &ArrayD<f64>,
    grid: &Grid,
    width: f64,
    eps: f64,
) -> Result<ArrayD<f64>>
where
    F: Fn(&ArrayD<f64>) -> Result<f64> + Sync,
{
    let n = grid.n_points();
    let samples: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|center| gateaux_sample(f, base, grid, center, width, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(ArrayD::from_shape_vec(IxDyn(&grid.shape()), samples).expect("shape"))
}

/// Functional derivatives of `Re E_P` with respect to the one-particle
/// fields.  Under the product-amplitude closure the reconstruction involves
/// only `rho`, `varphi` and `mu`, so the `lambda` and `kappa` derivatives
/// vanish identically.
#[derive(Clone, Debug)]
pub struct EnergyDerivatives {
    pub d_rho: ArrayD<f64>,
    pub d_varphi: ArrayD<f64>,
    pub d_lambda: ArrayD<f64>,
    pub d_mu: ArrayD<f64>,
    pub d_kappa: ArrayD<f64>,
}

impl EnergyDerivatives {
    pub fn zeros(grid_1p: &Grid) -> EnergyDerivatives {
        EnergyDerivatives {
            d_rho: grid_1p.zeros_real(),
            d_varphi: grid_1p.zeros_real(),
            d_lambda: grid_1p.zeros_real(),
            d_mu: grid_1p.zeros_real(),
            d_kappa: grid_1p.zeros_real(),
        }
    }
}

/// Scan `delta E_P / delta sigma` for `sigma` in `{rho, varphi, mu}`.
pub fn coarse_derivative_fields(
    func: &CoarseFunctional,
    fields: &FieldSet,
    eps_rel: f64,
) -> Result<EnergyDerivatives> {
    let grid_1p = &fields.grid_1p;
    if func.zero_linear_response {
        return Ok(EnergyDerivatives::zeros(grid_1p));
    }
    let scale = |f: &ArrayD<f64>| calculus::sup_norm(f).max(1.0);
    let scan = |name: &str| -> Result<ArrayD<f64>> {
        let base = match name {
            "rho" => &fields.rho,
            "varphi" => &fields.varphi,
            _ => &fields.mu,
        };
        let eps = eps_rel * scale(base);
        let eval = |replaced: &ArrayD<f64>| -> Result<f64> {
            let mut trial = fields.clone();
            match name {
                "rho" => trial.rho = replaced.clone(),
                "varphi" => trial.varphi = replaced.clone(),
                _ => trial.mu = replaced.clone(),
            }
            Ok(func.eval(&trial)?.re)
        };
        gateaux_field(&eval, base, grid_1p, 0.0, eps)
    };
    Ok(EnergyDerivatives {
        d_rho: scan("rho")?,
        d_varphi: scan("varphi")?,
        d_lambda: grid_1p.zeros_real(),
        d_mu: if fields.n_particles >= 2 {
            scan("mu")?
        } else {
            grid_1p.zeros_real()
        },
        d_kappa: grid_1p.zeros_real(),
    })
}

/// Derivative bundle fed to the momentum bracket.
#[derive(Clone, Debug)]
pub struct BracketDerivs {
    pub d_rho: ArrayD<f64>,
    pub d_varphi: ArrayD<f64>,
    pub d_lambda: ArrayD<f64>,
    pub d_mu: ArrayD<f64>,
    pub d_kappa: ArrayD<f64>,
}

impl BracketDerivs {
    pub fn from_energy(q_potential: &ArrayD<f64>, de_p: &EnergyDerivatives) -> BracketDerivs {
        let mut d_rho = q_potential.clone();
        d_rho += &de_p.d_rho;
        BracketDerivs {
            d_rho,
            d_varphi: de_p.d_varphi.clone(),
            d_lambda: de_p.d_lambda.clone(),
            d_mu: de_p.d_mu.clone(),
            d_kappa: de_p.d_kappa.clone(),
        }
    }

    pub fn only_rho(d_rho: ArrayD<f64>, grid_1p: &Grid) -> BracketDerivs {
        BracketDerivs {
            d_rho,
            d_varphi: grid_1p.zeros_real(),
            d_lambda: grid_1p.zeros_real(),
            d_mu: grid_1p.zeros_real(),
            d_kappa: grid_1p.zeros_real(),
        }
    }
}

/// The force bracket of the momentum equation,
///
/// ```text
/// B(E)_i = rho d_i[(kappa / 2 rho) dE/dkappa] + d_i(rho dE/drho)
///          - sum_{sigma in {rho, varphi, lambda, mu}} (d_i sigma) dE/dsigma
/// ```
///
/// The second term carries the gradient of the whole product; with the plain
/// `(grad rho) dE/drho` reading the sum would cancel it exactly and no
/// quantum force would survive, so for an energy depending on `rho` alone
/// this bracket reduces to `rho grad(dE/drho)`.
pub fn force_bracket(
    fields: &FieldSet,
    derivs: &BracketDerivs,
    paren: KappaParenthesization,
) -> Vec<ArrayD<f64>> {
    let grid = &fields.grid_1p;
    let mask = &fields.mask;
    let kappa = fields.kappa();
    let mut ratio = grid.zeros_real();
    {
        let r = ratio.as_slice_mut().unwrap();
        let k = kappa.as_slice().unwrap();
        let rho = fields.rho.as_slice().unwrap();
        let m = mask.as_slice().unwrap();
        for i in 0..r.len() {
            if !m[i] && rho[i] > 0.0 {
                r[i] = k[i] / (2.0 * rho[i]);
            }
        }
    }

    let term1: Vec<ArrayD<f64>> = match paren {
        KappaParenthesization::Inside => {
            let mut prod = ratio.clone();
            prod.zip_mut_with(&derivs.d_kappa, |a, &b| *a *= b);
            calculus::gradient(grid, &prod)
                .into_iter()
                .map(|mut g| {
                    g.zip_mut_with(&fields.rho, |a, &b| *a *= b);
                    g
                })
                .collect()
        }
        KappaParenthesization::Outside => calculus::gradient(grid, &ratio)
            .into_iter()
            .map(|mut g| {
                g.zip_mut_with(&derivs.d_kappa, |a, &b| *a *= b);
                g.zip_mut_with(&fields.rho, |a, &b| *a *= b);
                g
            })
            .collect(),
    };

    let mut rho_drho = fields.rho.clone();
    rho_drho.zip_mut_with(&derivs.d_rho, |a, &b| *a *= b);
    let term2 = calculus::gradient(grid, &rho_drho);

    let grad_rho = calculus::gradient(grid, &fields.rho);
    let grad_varphi = calculus::phase_gradient(grid, &fields.varphi, fields.mass, mask);
    let mut lam = fields.lambda.clone();
    fill_masked(&mut lam, mask);
    let grad_lambda = calculus::gradient(grid, &lam);
    let mut mu = fields.mu.clone();
    fill_masked(&mut mu, mask);
    let grad_mu = calculus::gradient(grid, &mu);

    (0..grid.rank())
        .map(|axis| {
            let mut out = term1[axis].clone();
            out += &term2[axis];
            {
                let o = out.as_slice_mut().unwrap();
                let gr = grad_rho[axis].as_slice().unwrap();
                let gv = grad_varphi[axis].as_slice().unwrap();
                let gl = grad_lambda[axis].as_slice().unwrap();
                let gm = grad_mu[axis].as_slice().unwrap();
                let dr = derivs.d_rho.as_slice().unwrap();
                let dv = derivs.d_varphi.as_slice().unwrap();
                let dl = derivs.d_lambda.as_slice().unwrap();
                let dm = derivs.d_mu.as_slice().unwrap();
                let msk = mask.as_slice().unwrap();
                for i in 0..o.len() {
                    o[i] -= gr[i] * dr[i] + gv[i] * dv[i] + gl[i] * dl[i] + gm[i] * dm[i];
                    if msk[i] {
                        o[i] = 0.0;
                    }
                }
            }
            out
        })
        .collect()
}

/// Three consecutive aligned snapshots of the extracted fields.
pub struct Window<'a> {
    pub prev: &'a FieldSet,
    pub mid: &'a FieldSet,
    pub next: &'a FieldSet,
    pub dt: f64,
}

impl Window<'_> {
    fn ddt(&self, pick: impl Fn(&FieldSet) -> &ArrayD<f64>) -> ArrayD<f64> {
        let mut out = pick(self.next).clone();
        out.zip_mut_with(pick(self.prev), |a, &b| *a = (*a - b) / (2.0 * self.dt));
        out
    }

    fn ddt_product(
        &self,
        pa: impl Fn(&FieldSet) -> &ArrayD<f64>,
        pb: impl Fn(&FieldSet) -> &ArrayD<f64>,
    ) -> ArrayD<f64> {
        let mut hi = pa(self.next).clone();
        hi.zip_mut_with(pb(self.next), |a, &b| *a *= b);
        let mut lo = pa(self.prev).clone();
        lo.zip_mut_with(pb(self.prev), |a, &b| *a *= b);
        hi.zip_mut_with(&lo, |a, &b| *a = (*a - b) / (2.0 * self.dt));
        hi
    }
}

/// Left-hand sides of the five field equations evaluated on data, masked
/// points zeroed.
#[derive(Clone, Debug)]
pub struct ResidualSet {
    pub r_varphi: ArrayD<f64>,
    pub r_lambda: ArrayD<f64>,
    pub r_mu: ArrayD<f64>,
    pub r_rho: ArrayD<f64>,
    pub r_kappa: ArrayD<f64>,
    pub mask: ArrayD<bool>,
    grid_1p: Grid,
}

impl ResidualSet {
    /// `(name, l2, sup)` per residual, off the mask.
    pub fn norms(&self) -> Vec<(&'static str, f64, f64)> {
        let entry = |name: &'static str, f: &ArrayD<f64>| {
            (
                name,
                calculus::l2_norm(&self.grid_1p, f),
                calculus::sup_norm_masked(f, &self.mask),
            )
        };
        vec![
            entry("varphi", &self.r_varphi),
            entry("lambda", &self.r_lambda),
            entry("mu", &self.r_mu),
            entry("rho", &self.r_rho),
            entry("kappa", &self.r_kappa),
        ]
    }
}

fn check_mask_coverage(mask: &ArrayD<bool>) -> Result<()> {
    let covered = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
    if covered > 0.5 {
        return Err(Error::MaskCoverage {
            covered: covered * 100.0,
        });
    }
    Ok(())
}

/// Evaluate the bracket of each field equation on a three-snapshot window.
/// Spatial derivatives are spectral, the time derivative is centered.
pub fn eom_residuals(
    win: &Window,
    q_potential: &ArrayD<f64>,
    de_p: &EnergyDerivatives,
    mass: f64,
) -> Result<ResidualSet> {
    let mid = win.mid;
    check_mask_coverage(&mid.mask)?;
    let grid = &mid.grid_1p;
    let inv_m = 1.0 / mass;
    let u = mid.velocity();
    let kappa = mid.kappa();

    let mut mu_fill = mid.mu.clone();
    fill_masked(&mut mu_fill, &mid.mask);
    let grad_mu = calculus::gradient(grid, &mu_fill);
    let mut grad_mu_sq = grid.zeros_real();
    for g in &grad_mu {
        grad_mu_sq.zip_mut_with(g, |a, &v| *a += v * v);
    }
    let mut u_sq = grid.zeros_real();
    for c in &u {
        u_sq.zip_mut_with(c, |a, &v| *a += v * v);
    }

    // continuity: d_t rho + div(rho u) + (1/m) dE_P/dvarphi
    let mut rho_u: Vec<ArrayD<f64>> = u
        .iter()
        .map(|c| {
            let mut f = c.clone();
            f.zip_mut_with(&mid.rho, |a, &b| *a *= b);
            f
        })
        .collect();
    let mut r_varphi = win.ddt(|f| &f.rho);
    r_varphi += &calculus::divergence(grid, &rho_u);
    r_varphi.zip_mut_with(&de_p.d_varphi, |a, &b| *a += inv_m * b);

    // pair advection: rho (d_t mu + u . grad mu) + (1/m) dE_P/dlambda
    let ddt_mu = win.ddt(|f| &f.mu);
    let mut advect = ddt_mu.clone();
    for (c, g) in u.iter().zip(grad_mu.iter()) {
        let mut term = c.clone();
        term.zip_mut_with(g, |a, &b| *a *= b);
        advect += &term;
    }
    let mut r_lambda = advect;
    r_lambda.zip_mut_with(&mid.rho, |a, &b| *a *= b);
    r_lambda.zip_mut_with(&de_p.d_lambda, |a, &b| *a += inv_m * b);

    // vortex transport: d_t(rho lambda) + div(rho lambda u + rho kappa^2 grad mu)
    //                   + (1/m) dE_P/dmu
    let mut flux: Vec<ArrayD<f64>> = Vec::with_capacity(grid.rank());
    for (c, g) in u.iter().zip(grad_mu.iter()) {
        let mut f = c.clone();
        f.zip_mut_with(&mid.rho, |a, &b| *a *= b);
        f.zip_mut_with(&mid.lambda, |a, &b| *a *= b);
        let mut diff = g.clone();
        diff.zip_mut_with(&mid.rho, |a, &b| *a *= b);
        diff.zip_mut_with(&mid.kappa_sq, |a, &b| *a *= b);
        f += &diff;
        flux.push(f);
    }
    let mut r_mu = win.ddt_product(|f| &f.rho, |f| &f.lambda);
    r_mu += &calculus::divergence(grid, &flux);
    r_mu.zip_mut_with(&de_p.d_mu, |a, &b| *a += inv_m * b);

    // Bernoulli: d_t varphi + lambda d_t mu + u^2/2 + kappa^2 (grad mu)^2 / 2
    //            + (1/m) d(E_qm + E_P)/drho
    let mut r_rho = win.ddt(|f| &f.varphi);
    let mut lam_dmu = mid.lambda.clone();
    lam_dmu.zip_mut_with(&ddt_mu, |a, &b| *a *= b);
    r_rho += &lam_dmu;
    r_rho.zip_mut_with(&u_sq, |a, &b| *a += 0.5 * b);
    let mut ksq_gm = mid.kappa_sq.clone();
    ksq_gm.zip_mut_with(&grad_mu_sq, |a, &b| *a *= b);
    r_rho.zip_mut_with(&ksq_gm, |a, &b| *a += 0.5 * b);
    r_rho.zip_mut_with(q_potential, |a, &b| *a += inv_m * b);
    r_rho.zip_mut_with(&de_p.d_rho, |a, &b| *a += inv_m * b);

    // kappa stationarity: rho kappa (grad mu)^2 + (1/m) dE_P/dkappa
    let mut r_kappa = mid.rho.clone();
    r_kappa.zip_mut_with(&kappa, |a, &b| *a *= b);
    r_kappa.zip_mut_with(&grad_mu_sq, |a, &b| *a *= b);
    r_kappa.zip_mut_with(&de_p.d_kappa, |a, &b| *a += inv_m * b);

    for f in [
        &mut r_varphi,
        &mut r_lambda,
        &mut r_mu,
        &mut r_rho,
        &mut r_kappa,
    ] {
        let v = f.as_slice_mut().unwrap();
        let m = mid.mask.as_slice().unwrap();
        for i in 0..v.len() {
            if m[i] {
                v[i] = 0.0;
            }
        }
    }
    let _ = &mut rho_u;

    Ok(ResidualSet {
        r_varphi,
        r_lambda,
        r_mu,
        r_rho,
        r_kappa,
        mask: mid.mask.clone(),
        grid_1p: grid.clone(),
    })
}

/// Momentum-flux residual.  `full = LHS - RHS`; `lhs` alone is the
/// perfect-fluid residual (what survives when all forces are dropped).
#[derive(Clone, Debug)]
pub struct EulerResidual {
    pub full: Vec<ArrayD<f64>>,
    pub lhs: Vec<ArrayD<f64>>,
    pub mask: ArrayD<bool>,
    grid_1p: Grid,
}

impl EulerResidual {
    pub fn norms(&self) -> Vec<(String, f64, f64)> {
        let mut out = Vec::new();
        for (axis, (f, l)) in self.full.iter().zip(self.lhs.iter()).enumerate() {
            out.push((
                format!("euler_full_{axis}"),
                calculus::l2_norm(&self.grid_1p, f),
                calculus::sup_norm_masked(f, &self.mask),
            ));
            out.push((
                format!("euler_lhs_{axis}"),
                calculus::l2_norm(&self.grid_1p, l),
                calculus::sup_norm_masked(l, &self.mask),
            ));
        }
        out
    }
}

pub fn euler_residual(
    win: &Window,
    q_potential: &ArrayD<f64>,
    de_p: &EnergyDerivatives,
    mass: f64,
    paren: KappaParenthesization,
) -> Result<EulerResidual> {
    let mid = win.mid;
    check_mask_coverage(&mid.mask)?;
    let grid = &mid.grid_1p;
    let u_prev = win.prev.velocity();
    let u_mid = mid.velocity();
    let u_next = win.next.velocity();
    let mut mu_fill = mid.mu.clone();
    fill_masked(&mut mu_fill, &mid.mask);
    let grad_mu = calculus::gradient(grid, &mu_fill);

    let derivs = BracketDerivs::from_energy(q_potential, de_p);
    let bracket = force_bracket(mid, &derivs, paren);

    let mut lhs = Vec::with_capacity(grid.rank());
    let mut full = Vec::with_capacity(grid.rank());
    for i in 0..grid.rank() {
        // d_t (rho u_i)
        let mut hi = u_next[i].clone();
        hi.zip_mut_with(&win.next.rho, |a, &b| *a *= b);
        let mut lo = u_prev[i].clone();
        lo.zip_mut_with(&win.prev.rho, |a, &b| *a *= b);
        hi.zip_mut_with(&lo, |a, &b| *a = (*a - b) / (2.0 * win.dt));
        let mut acc = hi;

        // div(rho u_j u_i + rho kappa^2 dmu_j dmu_i)
        let flux: Vec<ArrayD<f64>> = (0..grid.rank())
            .map(|j| {
                let mut f = u_mid[j].clone();
                f.zip_mut_with(&u_mid[i], |a, &b| *a *= b);
                f.zip_mut_with(&mid.rho, |a, &b| *a *= b);
                let mut press = grad_mu[j].clone();
                press.zip_mut_with(&grad_mu[i], |a, &b| *a *= b);
                press.zip_mut_with(&mid.rho, |a, &b| *a *= b);
                press.zip_mut_with(&mid.kappa_sq, |a, &b| *a *= b);
                f += &press;
                f
            })
            .collect();
        acc += &calculus::divergence(grid, &flux);

        {
            let v = acc.as_slice_mut().unwrap();
            let m = mid.mask.as_slice().unwrap();
            for n in 0..v.len() {
                if m[n] {
                    v[n] = 0.0;
                }
            }
        }
        let mut f = acc.clone();
        f.zip_mut_with(&bracket[i], |a, &b| *a += b / mass);
        lhs.push(acc);
        full.push(f);
    }
    Ok(EulerResidual {
        full,
        lhs,
        mask: mid.mask.clone(),
        grid_1p: grid.clone(),
    })
}

/// `P_ij = rho kappa^2 (grad mu)_i (grad mu)_j` with its eigenvalue summary.
/// The tensor is rank one, so its only nonzero eigenvalue is
/// `rho kappa^2 |grad mu|^2`.
#[derive(Clone, Debug)]
pub struct PressureReport {
    /// Upper-triangle components indexed `(i, j)` with `i <= j`.
    pub components: Vec<((usize, usize), ArrayD<f64>)>,
    pub min_eigenvalue: ArrayD<f64>,
    pub max_eigenvalue: ArrayD<f64>,
}

pub fn thermal_pressure(
    grid_1p: &Grid,
    rho: &ArrayD<f64>,
    kappa_sq: &ArrayD<f64>,
    mu: &ArrayD<f64>,
    mask: &ArrayD<bool>,
) -> PressureReport {
    let mut mu_fill = mu.clone();
    fill_masked(&mut mu_fill, mask);
    let grad_mu = calculus::gradient(grid_1p, &mu_fill);
    let d = grid_1p.rank();
    let mut weight = rho.clone();
    weight.zip_mut_with(kappa_sq, |a, &b| *a *= b);

    let mut components = Vec::new();
    for i in 0..d {
        for j in i..d {
            let mut c = grad_mu[i].clone();
            c.zip_mut_with(&grad_mu[j], |a, &b| *a *= b);
            c.zip_mut_with(&weight, |a, &b| *a *= b);
            components.push(((i, j), c));
        }
    }
    let mut trace = grid_1p.zeros_real();
    for g in &grad_mu {
        let mut sq = g.clone();
        sq.zip_mut_with(g, |a, &b| *a *= b);
        trace += &sq;
    }
    trace.zip_mut_with(&weight, |a, &b| *a *= b);
    let (min_eigenvalue, max_eigenvalue) = if d == 1 {
        (trace.clone(), trace)
    } else {
        (trace.mapv(|v| v.min(0.0)), trace.mapv(|v| v.max(0.0)))
    };
    PressureReport {
        components,
        min_eigenvalue,
        max_eigenvalue,
    }
}

/// Fluid-form Lagrangian of one window:
/// `-m int rho (d_t varphi + lambda d_t mu)
///  - m/2 int rho (u^2 + kappa^2 (grad mu)^2) - E_qm - Re E_P`.
pub fn lagrangian(win: &Window, e_qm: f64, e_p: Complex64, mass: f64) -> f64 {
    let mid = win.mid;
    let grid = &mid.grid_1p;
    let ddt_varphi = win.ddt(|f| &f.varphi);
    let ddt_mu = win.ddt(|f| &f.mu);
    let u = mid.velocity();
    let mut mu_fill = mid.mu.clone();
    fill_masked(&mut mu_fill, &mid.mask);
    let grad_mu = calculus::gradient(grid, &mu_fill);

    let mut kinetic_phase = ddt_varphi;
    let mut lam_term = mid.lambda.clone();
    lam_term.zip_mut_with(&ddt_mu, |a, &b| *a *= b);
    kinetic_phase += &lam_term;
    kinetic_phase.zip_mut_with(&mid.rho, |a, &b| *a *= b);

    let mut quad = grid.zeros_real();
    for c in &u {
        let mut sq = c.clone();
        sq.zip_mut_with(c, |a, &b| *a *= b);
        quad += &sq;
    }
    let mut gm_sq = grid.zeros_real();
    for g in &grad_mu {
        let mut sq = g.clone();
        sq.zip_mut_with(g, |a, &b| *a *= b);
        gm_sq += &sq;
    }
    gm_sq.zip_mut_with(&mid.kappa_sq, |a, &b| *a *= b);
    quad += &gm_sq;
    quad.zip_mut_with(&mid.rho, |a, &b| *a *= b);

    -mass * calculus::integrate(grid, &kinetic_phase)
        - 0.5 * mass * calculus::integrate(grid, &quad)
        - e_qm
        - e_p.re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{FluctuationSource, Trajectory};
    use crate::projector::{build_kernels, ExponentFactor};
    use crate::states;
    use approx::assert_abs_diff_eq;

    const TAU: f64 = std::f64::consts::TAU;

    fn grid_1d(l: f64, m: usize) -> Grid {
        Grid::new(l, m, 1, 1, u128::MAX).unwrap()
    }

    fn no_mask(grid: &Grid) -> ArrayD<bool> {
        ArrayD::from_elem(IxDyn(&grid.shape()), false)
    }

    fn gaussian_rho(grid: &Grid, center: f64, sigma: f64) -> ArrayD<f64> {
        states::from_fn(grid, |x| {
            let u = x[0] - center;
            Complex64::new((-u * u / (2.0 * sigma * sigma)).exp(), 0.0)
        })
        .values
        .mapv(|v| v.re)
    }

    #[test]
    fn quantum_potential_constant_density() {
        let g = grid_1d(10.0, 32);
        let rho = ArrayD::from_elem(IxDyn(&g.shape()), 2.5);
        let (e, q) = quantum_energy(&rho, 1.0, &g, PrefactorMode::Standard, &no_mask(&g)).unwrap();
        assert!(e.abs() < 1e-20);
        assert!(q.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn quantum_potential_gaussian_values() {
        // rho = exp(-x^2 / 2): Q(x) = (1/2m)(1/2 - x^2/4); Q(0) = 1/4,
        // Q(2) = -1/4.  L = 16, M = 64 puts x = 2 on the grid.
        let g = grid_1d(16.0, 64);
        let rho = gaussian_rho(&g, 8.0, 1.0);
        let mask = rho.mapv(|v| v < 1e-12);
        let (_, q) = quantum_energy(&rho, 1.0, &g, PrefactorMode::Standard, &mask).unwrap();
        let at = |x: f64| q.as_slice().unwrap()[(x / g.spacing()).round() as usize];
        assert_abs_diff_eq!(at(8.0), 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(at(10.0), -0.25, epsilon = 1e-6);
    }

    #[test]
    fn quantum_energy_matches_quadrature_oracle() {
        // E = (1/2m) int (x^2/4) exp(-x^2/2) dx = sqrt(2 pi) / 8 for m = 1.
        let g = grid_1d(20.0, 128);
        let rho = gaussian_rho(&g, 10.0, 1.0);
        let (e, _) = quantum_energy(&rho, 1.0, &g, PrefactorMode::Standard, &no_mask(&g)).unwrap();
        let exact = TAU.sqrt() / 8.0 * 2f64.sqrt() / 2f64.sqrt(); // sqrt(2 pi)/8
        assert_abs_diff_eq!(e, exact, epsilon = 1e-10);
    }

    #[test]
    fn paper_mode_scales_by_mass_squared() {
        let g = grid_1d(16.0, 64);
        let rho = gaussian_rho(&g, 8.0, 1.0);
        let m = 2.0;
        let (es, qs) = quantum_energy(&rho, m, &g, PrefactorMode::Standard, &no_mask(&g)).unwrap();
        let (ep, qp) = quantum_energy(&rho, m, &g, PrefactorMode::Paper, &no_mask(&g)).unwrap();
        assert_abs_diff_eq!(ep, es * m * m, epsilon = 1e-12);
        for (a, b) in qp.iter().zip(qs.iter()) {
            assert_abs_diff_eq!(*a, b * m * m, epsilon = 1e-10);
        }
    }

    #[test]
    fn quantum_potential_scale_invariant() {
        let g = grid_1d(16.0, 64);
        let rho = gaussian_rho(&g, 8.0, 1.2);
        let max = rho.iter().fold(0.0f64, |a, &b| a.max(b));
        let mask = rho.mapv(|v| v < 1e-6 * max);
        let (_, q1) = quantum_energy(&rho, 1.0, &g, PrefactorMode::Standard, &mask).unwrap();
        let scaled = rho.mapv(|v| 3.7 * v);
        let (_, q2) = quantum_energy(&scaled, 1.0, &g, PrefactorMode::Standard, &mask).unwrap();
        for (a, b) in q1.iter().zip(q2.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    fn single_mode_history(
        grid: &Grid,
        mode_idx: usize,
        omega: f64,
        dt: f64,
        steps: usize,
    ) -> Trajectory {
        let mut states = Vec::with_capacity(steps + 1);
        for j in 0..=steps {
            let mut v = grid.zeros_complex();
            v[IxDyn(&[mode_idx])] = Complex64::from_polar(1.0, -omega * dt * j as f64);
            states.push(v);
        }
        Trajectory {
            grid: grid.clone(),
            times: (0..=steps).map(|j| j as f64 * dt).collect(),
            states,
            dt,
            norm_ratio: 1.0,
            initial_cg_defect: 0.0,
        }
    }

    #[test]
    fn coarse_energy_trivial_and_closed_form() {
        let g = grid_1d(TAU, 8);
        // l = 0: E_P = 0 exactly
        let k0 = build_kernels(&g, 0.0, 0.25, ExponentFactor::Half).unwrap();
        let traj0 = single_mode_history(&g, 1, 2.0, 1e-3, 100);
        let w0 = traj0.state(0).unwrap();
        let src = FluctuationSource::deterministic(w0.clone());
        let e0 = coarse_energy(&traj0, &k0, &src, 1.0, 100).unwrap();
        assert_eq!(e0, Complex64::new(0.0, 0.0));

        // engineered mode: P = 1/2, omega = 2 at k = 1 (m = 1/4)
        let l = (2.0 * (2f64).ln()).sqrt();
        let k = build_kernels(&g, l, 0.25, ExponentFactor::Half).unwrap();
        let dt = 1e-3_f64;
        let t = 0.4;
        let steps = (t / dt).round() as usize;
        let traj = single_mode_history(&g, 1, 2.0, dt, steps);
        let src = FluctuationSource::deterministic(traj.state(0).unwrap());
        let e_p = coarse_energy(&traj, &k, &src, 1.0, steps).unwrap();
        // integrand of <a|G a> is constant in tau: exact value V (g t - f)
        let expected = TAU * (0.25 * t - 0.25);
        assert_abs_diff_eq!(e_p.re, expected, epsilon = 1e-8);
        assert!(e_p.im.abs() < 1e-8);

        // k = 0 support only: kernels vanish on the mode
        let traj_dc = single_mode_history(&g, 0, 0.0, dt, steps);
        let src_dc = FluctuationSource::deterministic(traj_dc.state(0).unwrap());
        let e_dc = coarse_energy(&traj_dc, &k, &src_dc, 1.0, steps).unwrap();
        assert!(e_dc.norm() < 1e-14);
    }

    #[test]
    fn gateaux_of_density_square() {
        let g = grid_1d(12.0, 32);
        let rho = gaussian_rho(&g, 6.0, 1.5).mapv(|v| v + 0.2);
        let f = |r: &ArrayD<f64>| -> Result<f64> {
            Ok(r.iter().map(|v| v * v).sum::<f64>() * g.cell_volume())
        };
        let field = gateaux_field(&f, &rho, &g, 0.0, 1e-5).unwrap();
        for (got, r) in field.iter().zip(rho.iter()) {
            assert!((got - 2.0 * r).abs() < 1e-6);
        }
    }

    #[test]
    fn gateaux_linear_functional_eps_independent() {
        let g = grid_1d(12.0, 16);
        let rho = gaussian_rho(&g, 6.0, 2.0);
        let f = |r: &ArrayD<f64>| -> Result<f64> { Ok(calculus::integrate(&g, r) * 3.0) };
        let a = gateaux_sample(&f, &rho, &g, 4, 0.0, 1e-5).unwrap();
        let b = gateaux_sample(&f, &rho, &g, 4, 0.0, 1e-3).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert_abs_diff_eq!(a, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn gateaux_matches_quantum_potential() {
        // offset Gaussian keeps rho positive under the bumps
        let g = grid_1d(16.0, 64);
        let rho = gaussian_rho(&g, 8.0, 1.0).mapv(|v| v + 0.1);
        let mask = no_mask(&g);
        let (_, q) = quantum_energy(&rho, 1.0, &g, PrefactorMode::Standard, &mask).unwrap();
        let f = |r: &ArrayD<f64>| -> Result<f64> {
            quantum_energy(r, 1.0, &g, PrefactorMode::Standard, &mask).map(|(e, _)| e)
        };
        let num = gateaux_field(&f, &rho, &g, 0.0, 1e-5).unwrap();
        let sup = num
            .iter()
            .zip(q.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-4, "sup {sup}");
    }

    fn constant_fieldset(g1: &Grid, cg: &Grid, rho0: f64) -> FieldSet {
        FieldSet {
            grid_1p: g1.clone(),
            config_grid: cg.clone(),
            n_particles: cg.particles(),
            mass: 1.0,
            rho: ArrayD::from_elem(IxDyn(&g1.shape()), rho0),
            varphi: g1.zeros_real(),
            lambda: g1.zeros_real(),
            mu: g1.zeros_real(),
            kappa_sq: g1.zeros_real(),
            mask: ArrayD::from_elem(IxDyn(&g1.shape()), false),
        }
    }

    #[test]
    fn residuals_vanish_on_constant_state() {
        let g = grid_1d(10.0, 16);
        let fs = constant_fieldset(&g, &g, 0.3);
        let win = Window {
            prev: &fs,
            mid: &fs,
            next: &fs,
            dt: 0.01,
        };
        let q = g.zeros_real();
        let de = EnergyDerivatives::zeros(&g);
        let res = eom_residuals(&win, &q, &de, 1.0).unwrap();
        for (_, l2, sup) in res.norms() {
            assert!(l2 < 1e-12 && sup < 1e-12);
        }
        let eu = euler_residual(&win, &q, &de, 1.0, KappaParenthesization::Inside).unwrap();
        for (_, l2, sup) in eu.norms() {
            assert!(l2 < 1e-12 && sup < 1e-12);
        }
    }

    #[test]
    fn plane_wave_continuity_and_bernoulli() {
        // exact Madelung solution of a plane wave: rho const, u const,
        // d_t varphi = -u^2/2
        let g = grid_1d(20.0, 32);
        let mass = 1.0;
        let k0 = 2.0 * TAU / 20.0;
        let make = |t: f64| -> FieldSet {
            let omega = k0 * k0 / (2.0 * mass);
            FieldSet {
                grid_1p: g.clone(),
                config_grid: g.clone(),
                n_particles: 1,
                mass,
                rho: ArrayD::from_elem(IxDyn(&g.shape()), 1.0 / 20.0),
                varphi: states::from_fn(&g, |x| {
                    Complex64::new((k0 * x[0] - omega * t) / mass, 0.0)
                })
                .values
                .mapv(|v| v.re),
                lambda: g.zeros_real(),
                mu: g.zeros_real(),
                kappa_sq: g.zeros_real(),
                mask: ArrayD::from_elem(IxDyn(&g.shape()), false),
            }
        };
        let dt = 1e-3;
        let (prev, mid, next) = (make(-dt), make(0.0), make(dt));
        let win = Window {
            prev: &prev,
            mid: &mid,
            next: &next,
            dt,
        };
        let q = g.zeros_real();
        let de = EnergyDerivatives::zeros(&g);
        let res = eom_residuals(&win, &q, &de, mass).unwrap();
        let norms = res.norms();
        assert!(norms[0].2 < 1e-12, "continuity sup {}", norms[0].2); // varphi eq
        assert!(norms[3].2 < 1e-10, "bernoulli sup {}", norms[3].2); // rho eq
    }

    #[test]
    fn bracket_reduces_to_quantum_force() {
        // for an energy depending only on rho the bracket is rho grad(dE/drho)
        let g = grid_1d(16.0, 64);
        let rho = gaussian_rho(&g, 8.0, 1.3).mapv(|v| v + 0.05);
        let mut fs = constant_fieldset(&g, &g, 1.0);
        fs.rho = rho.clone();
        let q = states::from_fn(&g, |x| Complex64::new((TAU * x[0] / 16.0).cos(), 0.0))
            .values
            .mapv(|v| v.re);
        let derivs = BracketDerivs::only_rho(q.clone(), &g);
        let b = force_bracket(&fs, &derivs, KappaParenthesization::Inside);
        let grad_q = calculus::gradient(&g, &q);
        for (bi, (gq, r)) in b[0].iter().zip(grad_q[0].iter().zip(rho.iter())) {
            assert!((bi - gq * r).abs() < 1e-9, "{bi} vs {}", gq * r);
        }
    }

    #[test]
    fn thermal_pressure_values_and_psd() {
        let g = grid_1d(10.0, 16);
        let mask = no_mask(&g);
        // mu constant -> P = 0
        let rho = ArrayD::from_elem(IxDyn(&g.shape()), 2.0);
        let ksq = ArrayD::from_elem(IxDyn(&g.shape()), 1.0);
        let mu_c = ArrayD::from_elem(IxDyn(&g.shape()), 0.9);
        let p = thermal_pressure(&g, &rho, &ksq, &mu_c, &mask);
        assert!(p.max_eigenvalue.iter().all(|&v| v.abs() < 1e-18));

        // kappa = 0 -> P = 0
        let mu_x = states::from_fn(&g, |x| Complex64::new((TAU * x[0] / 10.0).sin(), 0.0))
            .values
            .mapv(|v| v.re);
        let zeros = g.zeros_real();
        let p0 = thermal_pressure(&g, &rho, &zeros, &mu_x, &mask);
        assert!(p0.max_eigenvalue.iter().all(|&v| v == 0.0));

        // d = 1 plug-in: rho kappa^2 = 2, dmu/dx = 3 -> P = 18
        let g3 = grid_1d(TAU, 16);
        let mu3 = states::from_fn(&g3, |x| Complex64::new(3.0 * (x[0]).sin(), 0.0))
            .values
            .mapv(|v| v.re);
        let rho3 = ArrayD::from_elem(IxDyn(&g3.shape()), 2.0);
        let one = ArrayD::from_elem(IxDyn(&g3.shape()), 1.0);
        let p3 = thermal_pressure(&g3, &rho3, &one, &mu3, &no_mask(&g3));
        // at x = 0 the derivative of 3 sin x is 3
        assert_abs_diff_eq!(
            p3.components[0].1.as_slice().unwrap()[0],
            18.0,
            epsilon = 1e-9
        );
        assert!(p3.min_eigenvalue.iter().all(|&v| v >= -1e-12));
    }
}
