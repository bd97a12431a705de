//! Classicality diagnostics: the averaging-length stationarity sweep, nodal
//! regions of the smeared amplitude, the quantum-force bound and the
//! temperature map, combined into a single verdict.
//!
//! The sweep searches; it never assumes a stationary `l_av` exists, and an
//! empty candidate list is a legitimate outcome.

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::calculus;
use crate::error::{Error, Result};
use crate::evolution::{
    evolve_zwanzig, EvolveOptions, FluctuationSource, MemoryStrategy, Trajectory,
};
use crate::grid::{Grid, WaveFunction};
use crate::hydro::{
    coarse_energy, force_bracket, quantum_energy, BracketDerivs, CoarseFunctional,
    EnergyDerivatives, FieldSet, KappaParenthesization, PrefactorMode,
};
use crate::madelung::FitOptions;
use crate::pipeline::{align_to_anchor, extract, ExtractOptions};
use crate::projector::{build_kernels, coarse_grain, ExponentFactor, KernelSet, ProjectorSymbol};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub c_p: ExponentFactor,
    pub s_h: f64,
    pub s_zeta: f64,
    pub eps_node: f64,
    /// Stationarity tolerance relative to the field scales.
    pub tol: f64,
    pub prefactor: PrefactorMode,
    pub fit: FitOptions,
    pub memory: MemoryStrategy,
    pub gateaux_eps_rel: f64,
    pub kappa_paren: KappaParenthesization,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            c_p: ExponentFactor::Half,
            s_h: -1.0,
            s_zeta: 1.0,
            eps_node: crate::madelung::DEFAULT_EPS_NODE,
            tol: 1e-3,
            prefactor: PrefactorMode::Standard,
            fit: FitOptions::default(),
            memory: MemoryStrategy::DirectSum,
            gateaux_eps_rel: 1e-5,
            kappa_paren: KappaParenthesization::Inside,
        }
    }
}

impl SweepOptions {
    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            s_h: self.s_h,
            s_zeta: self.s_zeta,
            memory: self.memory,
            ..EvolveOptions::default()
        }
    }
}

/// One leg of the sweep: smear, evolve, extract.
pub fn evolve_leg(
    w0: &WaveFunction,
    src: &FluctuationSource,
    l: f64,
    mass: f64,
    dt: f64,
    t_probe: f64,
    opts: &SweepOptions,
) -> Result<(Trajectory, KernelSet)> {
    let kernels = build_kernels(&w0.grid, l, mass, opts.c_p)?;
    let w_cg = coarse_grain(w0, &kernels.symbol)?;
    let traj = evolve_zwanzig(&w_cg, src, &kernels, dt, t_probe, &opts.evolve_options())?;
    Ok((traj, kernels))
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub l: f64,
    pub fields: Option<FieldSet>,
    pub e_qm: f64,
    pub e_p: Complex64,
    pub norm_drift: f64,
    pub error: Option<String>,
}

pub const SWEEP_FIELD_NAMES: [&str; 5] = ["rho", "varphi", "lambda", "mu", "kappa"];

/// Centered `l`-derivative norms at one interior grid point; `NaN` entries
/// mark legs that failed.
#[derive(Clone, Debug)]
pub struct DerivativeRow {
    pub l: f64,
    pub field_norms: [f64; 5],
    pub field_scales: [f64; 5],
    pub d_energy: f64,
    pub energy_scale: f64,
    pub d_e_p: f64,
    pub e_p_scale: f64,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub l_grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub derivatives: Vec<DerivativeRow>,
    pub stationary_candidates: Vec<f64>,
    pub tol: f64,
}

fn within(d: f64, tol: f64, scale: f64) -> bool {
    if d.is_nan() {
        return false;
    }
    tol.is_infinite() || d <= tol * scale
}

fn mean_removed(f: &ArrayD<f64>, mask: &ArrayD<bool>) -> ArrayD<f64> {
    let mut acc = 0.0;
    let mut count = 0usize;
    for (v, &m) in f.iter().zip(mask.iter()) {
        if !m {
            acc += v;
            count += 1;
        }
    }
    let mean = if count > 0 { acc / count as f64 } else { 0.0 };
    f.mapv(|v| v - mean)
}

/// Evolve `w0` at every `l`, extract fields at `t_probe` and difference them
/// across the grid.  Per-leg failures are recorded and the sweep continues.
pub fn sweep_l(
    w0: &WaveFunction,
    src: &FluctuationSource,
    l_grid: &[f64],
    t_probe: f64,
    mass: f64,
    dt: f64,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    if l_grid.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "sweep needs at least 3 l values, got {}",
            l_grid.len()
        )));
    }
    if l_grid
        .windows(2)
        .any(|w| w[0] <= 0.0 || w[1] <= w[0])
    {
        return Err(Error::InvalidArgument(
            "sweep l values must be positive and strictly increasing".into(),
        ));
    }
    let ex_opts = ExtractOptions {
        eps_node: opts.eps_node,
        fit: opts.fit.clone(),
    };
    let mut points = Vec::with_capacity(l_grid.len());
    for &l in l_grid {
        let point = (|| -> Result<SweepPoint> {
            let (traj, kernels) = evolve_leg(w0, src, l, mass, dt, t_probe, opts)?;
            let final_state = traj.final_state()?;
            let ex = extract(&final_state, mass, &ex_opts)?;
            let (e_qm, _) = quantum_energy(
                &ex.fields.rho,
                mass,
                &ex.fields.grid_1p,
                opts.prefactor,
                &ex.fields.mask,
            )?;
            let e_p = coarse_energy(&traj, &kernels, src, opts.s_zeta, traj.len() - 1)?;
            Ok(SweepPoint {
                l,
                fields: Some(ex.fields),
                e_qm,
                e_p,
                norm_drift: traj.norm_ratio,
                error: None,
            })
        })();
        points.push(point.unwrap_or_else(|e| SweepPoint {
            l,
            fields: None,
            e_qm: f64::NAN,
            e_p: Complex64::new(f64::NAN, f64::NAN),
            norm_drift: f64::NAN,
            error: Some(e.to_string()),
        }));
    }

    let mut derivatives = Vec::with_capacity(l_grid.len().saturating_sub(2));
    for i in 1..l_grid.len() - 1 {
        derivatives.push(derivative_row(&points, i));
    }
    let stationary_candidates = candidates_from(&derivatives, opts.tol);
    Ok(SweepReport {
        l_grid: l_grid.to_vec(),
        points,
        derivatives,
        stationary_candidates,
        tol: opts.tol,
    })
}

fn derivative_row(points: &[SweepPoint], i: usize) -> DerivativeRow {
    let l = points[i].l;
    let nan_row = DerivativeRow {
        l,
        field_norms: [f64::NAN; 5],
        field_scales: [f64::NAN; 5],
        d_energy: f64::NAN,
        energy_scale: f64::NAN,
        d_e_p: f64::NAN,
        e_p_scale: f64::NAN,
    };
    let (Some(prev), Some(mid), Some(next)) = (
        points[i - 1].fields.as_ref(),
        points[i].fields.as_ref(),
        points[i + 1].fields.as_ref(),
    ) else {
        return nan_row;
    };
    let dl = points[i + 1].l - points[i - 1].l;
    let grid = &mid.grid_1p;

    let mut lo = prev.clone();
    let mut hi = next.clone();
    align_to_anchor(&mut lo, mid);
    align_to_anchor(&mut hi, mid);

    let pick = |f: &FieldSet, name: &str| -> ArrayD<f64> {
        match name {
            "rho" => f.rho.clone(),
            "varphi" => mean_removed(&f.varphi, &f.mask),
            "lambda" => f.lambda.clone(),
            "mu" => mean_removed(&f.mu, &f.mask),
            _ => f.kappa(),
        }
    };
    let mut field_norms = [0.0; 5];
    let mut field_scales = [0.0; 5];
    for (slot, name) in SWEEP_FIELD_NAMES.iter().enumerate() {
        let a = pick(&lo, name);
        let b = pick(&hi, name);
        let mut diff = b;
        diff.zip_mut_with(&a, |x, &y| *x = (*x - y) / dl);
        field_norms[slot] = calculus::l2_norm(grid, &diff);
        field_scales[slot] = calculus::l2_norm(grid, &pick(mid, name));
    }
    let e = |p: &SweepPoint| p.e_qm + p.e_p.re;
    let d_energy = ((e(&points[i + 1]) - e(&points[i - 1])) / dl).abs();
    let d_e_p = ((points[i + 1].e_p - points[i - 1].e_p) / dl).norm();
    DerivativeRow {
        l,
        field_norms,
        field_scales,
        d_energy,
        energy_scale: e(&points[i]).abs(),
        d_e_p,
        e_p_scale: points[i].e_p.norm(),
    }
}

fn candidates_from(rows: &[DerivativeRow], tol: f64) -> Vec<f64> {
    rows.iter()
        .filter(|r| {
            r.field_norms
                .iter()
                .zip(r.field_scales.iter())
                .all(|(&d, &s)| within(d, tol, s))
                && within(r.d_energy, tol, r.energy_scale)
                && within(r.d_e_p, tol, r.e_p_scale)
        })
        .map(|r| r.l)
        .collect()
}

/// Re-apply the simultaneous stationarity conditions at a caller-chosen
/// tolerance.  An empty list is a valid answer.
pub fn find_stationary_l(report: &SweepReport, tol: f64) -> Vec<f64> {
    candidates_from(&report.derivatives, tol)
}

/// Connected lattice component of the nodal set.
#[derive(Clone, Debug)]
pub struct NodalRegion {
    pub size: usize,
    pub volume: f64,
}

#[derive(Clone, Debug)]
pub struct NodalRegions {
    pub regions: Vec<NodalRegion>,
    pub mask: ArrayD<bool>,
}

impl NodalRegions {
    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn total_volume(&self) -> f64 {
        self.regions.iter().map(|r| r.volume).sum()
    }

    pub fn contains(&self, flat: usize) -> bool {
        self.mask.as_slice().unwrap()[flat]
    }
}

/// Lattice set where the smeared amplitude drops below
/// `eps_node * max |P w|`, split into periodic connected components.
pub fn nodal_regions(
    w: &WaveFunction,
    symbol: &ProjectorSymbol,
    eps_node: f64,
) -> Result<NodalRegions> {
    let smeared = coarse_grain(w, symbol)?.into_position();
    let amp: Vec<f64> = smeared.values.iter().map(|v| v.norm()).collect();
    let max = amp.iter().fold(0.0f64, |a, &b| a.max(b));
    let grid = &smeared.grid;
    let threshold = eps_node * max;
    let mask_v: Vec<bool> = amp.iter().map(|&a| a < threshold).collect();

    let m = grid.points_per_dim();
    let rank = grid.rank();
    let n = grid.n_points();
    let mut visited = vec![false; n];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if !mask_v[start] || visited[start] {
            continue;
        }
        let mut size = 0usize;
        stack.push(start);
        visited[start] = true;
        while let Some(flat) = stack.pop() {
            size += 1;
            // axis neighbours with periodic wrap
            let mut stride = 1usize;
            for _ in 0..rank {
                let idx = (flat / stride) % m;
                for &next_idx in &[(idx + 1) % m, (idx + m - 1) % m] {
                    let nb = flat - idx * stride + next_idx * stride;
                    if mask_v[nb] && !visited[nb] {
                        visited[nb] = true;
                        stack.push(nb);
                    }
                }
                stride *= m;
            }
        }
        regions.push(NodalRegion {
            size,
            volume: size as f64 * grid.cell_volume(),
        });
    }
    regions.sort_by(|a, b| b.size.cmp(&a.size));
    Ok(NodalRegions {
        regions,
        mask: ArrayD::from_shape_vec(IxDyn(&grid.shape()), mask_v).expect("shape"),
    })
}

#[derive(Clone, Debug)]
pub struct NodeScanRow {
    pub l: f64,
    pub node_free: bool,
    pub max_nodal_volume: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct NodeScan {
    pub per_l: Vec<NodeScanRow>,
    pub min_l: Option<f64>,
}

/// Check the nodal set of the evolving smeared state over a time horizon at
/// every `l`; `min_l` is the smallest grid value whose sampled snapshots stay
/// node-free, `None` when no grid value qualifies.
pub fn node_scan(
    w0: &WaveFunction,
    src: &FluctuationSource,
    l_grid: &[f64],
    horizon: f64,
    dt: f64,
    sample_stride: usize,
    mass: f64,
    opts: &SweepOptions,
) -> Result<NodeScan> {
    let mut per_l = Vec::with_capacity(l_grid.len());
    for &l in l_grid {
        let row = (|| -> Result<NodeScanRow> {
            let (traj, kernels) = evolve_leg(w0, src, l, mass, dt, horizon, opts)?;
            let stride = sample_stride.max(1);
            let mut node_free = true;
            let mut max_vol = 0.0f64;
            let mut index = 0;
            loop {
                let snap = traj.state(index)?;
                let regions = nodal_regions(&snap, &kernels.symbol, opts.eps_node)?;
                if !regions.is_empty() {
                    node_free = false;
                    max_vol = max_vol.max(regions.total_volume());
                }
                if index == traj.len() - 1 {
                    break;
                }
                index = (index + stride).min(traj.len() - 1);
            }
            Ok(NodeScanRow {
                l,
                node_free,
                max_nodal_volume: max_vol,
                error: None,
            })
        })();
        per_l.push(row.unwrap_or_else(|e| NodeScanRow {
            l,
            node_free: false,
            max_nodal_volume: f64::NAN,
            error: Some(e.to_string()),
        }));
    }
    let min_l = per_l.iter().find(|r| r.node_free).map(|r| r.l);
    Ok(NodeScan { per_l, min_l })
}

/// Smallest grid `l` whose smeared amplitude never develops nodes over the
/// horizon; `None` is a legitimate outcome.
pub fn min_l_no_nodes(
    w0: &WaveFunction,
    src: &FluctuationSource,
    l_grid: &[f64],
    horizon: f64,
    dt: f64,
    sample_stride: usize,
    mass: f64,
    opts: &SweepOptions,
) -> Result<Option<f64>> {
    Ok(node_scan(w0, src, l_grid, horizon, dt, sample_stride, mass, opts)?.min_l)
}

/// Quantum-force bound: `|rho grad dE_qm/drho|` against the dissipative and
/// fluctuation force bracket of the coarse-graining energy, in both norms.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub lhs_l2: f64,
    pub lhs_sup: f64,
    pub rhs_l2: f64,
    pub rhs_sup: f64,
    pub satisfied_l2: bool,
    pub satisfied_sup: bool,
    pub margin_l2: f64,
    pub margin_sup: f64,
}

fn magnitude(grid: &Grid, v: &[ArrayD<f64>]) -> ArrayD<f64> {
    let mut out = grid.zeros_real();
    for comp in v {
        out.zip_mut_with(comp, |a, &b| *a += b * b);
    }
    out.mapv(f64::sqrt)
}

pub fn quantum_force_bound(
    fields: &FieldSet,
    q_potential: &ArrayD<f64>,
    de_p: &EnergyDerivatives,
    paren: KappaParenthesization,
) -> BoundReport {
    let grid = &fields.grid_1p;
    let lhs_vec = force_bracket(
        fields,
        &BracketDerivs::only_rho(q_potential.clone(), grid),
        paren,
    );
    let rhs_vec = force_bracket(
        fields,
        &BracketDerivs {
            d_rho: de_p.d_rho.clone(),
            d_varphi: de_p.d_varphi.clone(),
            d_lambda: de_p.d_lambda.clone(),
            d_mu: de_p.d_mu.clone(),
            d_kappa: de_p.d_kappa.clone(),
        },
        paren,
    );
    let lhs_mag = magnitude(grid, &lhs_vec);
    let rhs_mag = magnitude(grid, &rhs_vec);
    let lhs_l2 = calculus::l2_norm(grid, &lhs_mag);
    let rhs_l2 = calculus::l2_norm(grid, &rhs_mag);
    let lhs_sup = calculus::sup_norm_masked(&lhs_mag, &fields.mask);
    let rhs_sup = calculus::sup_norm_masked(&rhs_mag, &fields.mask);
    // numerical-zero slack so exactly-flat states compare as 0 <= 0
    let ok = |lhs: f64, rhs: f64| lhs <= rhs + 1e-10 * (1.0 + lhs.max(rhs));
    BoundReport {
        lhs_l2,
        lhs_sup,
        rhs_l2,
        rhs_sup,
        satisfied_l2: ok(lhs_l2, rhs_l2),
        satisfied_sup: ok(lhs_sup, rhs_sup),
        margin_l2: if lhs_l2 > 0.0 { rhs_l2 / lhs_l2 } else { f64::INFINITY },
        margin_sup: if lhs_sup > 0.0 {
            rhs_sup / lhs_sup
        } else {
            f64::INFINITY
        },
    }
}

/// Derivative fields of `Re E_P` for the bound and the residuals, via the
/// frozen-history functional.
pub fn coarse_derivatives_for(
    kernels: &KernelSet,
    src: &FluctuationSource,
    traj: &Trajectory,
    fields: &FieldSet,
    opts: &SweepOptions,
) -> Result<EnergyDerivatives> {
    let func = CoarseFunctional::new(kernels, src, opts.s_zeta, traj, traj.len() - 1)?;
    crate::hydro::coarse_derivative_fields(&func, fields, opts.gateaux_eps_rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitMode {
    /// `hbar = k_B = 1`.
    Natural,
    /// CODATA SI values.
    Si,
}

/// Temperature map `T = hbar^2 / (2 m l_av^2 k_B)`; `l_av = 0` returns the
/// infinite-temperature sentinel.
pub fn temperature(l_av: f64, mass: f64, unit: UnitMode) -> Result<f64> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::NonPositiveMass(mass));
    }
    if !(l_av.is_finite() && l_av >= 0.0) {
        return Err(Error::NegativeAveragingLength(l_av));
    }
    if l_av == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(match unit {
        UnitMode::Natural => 1.0 / (2.0 * mass * l_av * l_av),
        UnitMode::Si => {
            const HBAR: f64 = 1.054_571_817e-34;
            const K_B: f64 = 1.380_649e-23;
            HBAR * HBAR / (2.0 * mass * l_av * l_av * K_B)
        }
    })
}

/// `l_obs = 2 pi / k95`, where `k95` is the smallest wavenumber radius
/// holding 95% of the spectral weight of the density; infinite when the
/// weight sits entirely at `k = 0`.
pub fn observation_scale(rho: &ArrayD<f64>, grid_1p: &Grid) -> f64 {
    let mut spec = rho.mapv(|v| Complex64::new(v, 0.0));
    grid_1p.transform_in_place(&mut spec, true);
    let mut weights: Vec<(f64, f64)> = spec
        .as_slice()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, c)| (grid_1p.k_squared_sum(i).sqrt(), c.norm_sqr()))
        .collect();
    weights.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = weights.iter().map(|w| w.1).sum();
    if total <= 0.0 {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    let mut k95 = 0.0;
    for (k, w) in weights {
        acc += w;
        if acc >= 0.95 * total {
            k95 = k;
            break;
        }
    }
    if k95 == 0.0 {
        f64::INFINITY
    } else {
        TAU / k95
    }
}

/// Per-`l` condition flags feeding the verdict.
#[derive(Clone, Debug)]
pub struct LFlags {
    pub l: f64,
    pub stationary: bool,
    pub node_free: bool,
    pub bound_ok: bool,
    pub l_obs: f64,
    pub separation_ok: bool,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub stationary_l_exists: bool,
    pub nodes_absent: bool,
    pub bound_satisfied: bool,
    pub scale_separation: bool,
    pub chosen_l: Option<f64>,
    pub temperature: Option<f64>,
}

/// Intersect the four conditions; `chosen_l` is the smallest `l` passing all
/// of them and is re-checked condition by condition before being reported.
pub fn classicality_verdict(flags: &[LFlags], mass: f64) -> Result<Verdict> {
    let all_four = |f: &&LFlags| f.stationary && f.node_free && f.bound_ok && f.separation_ok;
    let chosen = flags
        .iter()
        .filter(all_four)
        .map(|f| f.l)
        .fold(None, |acc: Option<f64>, l| {
            Some(acc.map_or(l, |a: f64| a.min(l)))
        });
    if let Some(l) = chosen {
        // soundness: each sub-condition must hold at the chosen value
        let row = flags
            .iter()
            .find(|f| f.l == l)
            .ok_or_else(|| Error::Numeric("chosen l missing from flags".into()))?;
        debug_assert!(row.stationary && row.node_free && row.bound_ok && row.separation_ok);
        let t = temperature(l, mass, UnitMode::Natural)?;
        Ok(Verdict {
            stationary_l_exists: true,
            nodes_absent: true,
            bound_satisfied: true,
            scale_separation: true,
            chosen_l: Some(l),
            temperature: Some(t),
        })
    } else {
        Ok(Verdict {
            stationary_l_exists: flags.iter().any(|f| f.stationary),
            nodes_absent: flags.iter().any(|f| f.node_free),
            bound_satisfied: flags.iter().any(|f| f.bound_ok),
            scale_separation: flags.iter().any(|f| f.separation_ok),
            chosen_l: None,
            temperature: None,
        })
    }
}
