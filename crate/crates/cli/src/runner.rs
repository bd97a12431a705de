//! Orchestration of the four run kinds.  Each writes its artifacts into the
//! output directory and returns the manifest; all numeric outputs are
//! deterministic for a fixed config and seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use cghydro_core::classicality::{
    classicality_verdict, coarse_derivatives_for, evolve_leg, node_scan, observation_scale,
    quantum_force_bound, sweep_l, BoundReport, LFlags, SweepOptions, SweepReport,
    SWEEP_FIELD_NAMES,
};
use cghydro_core::evolution::{
    evolve_zwanzig, schrodinger_reference, EvolveOptions, FluctuationSource, MemoryStrategy,
    Trajectory,
};
use cghydro_core::hydro::{
    coarse_energy, eom_residuals, euler_residual, lagrangian, quantum_energy, thermal_pressure,
    CoarseFunctional, EnergyDerivatives, FieldSet, Window,
};
use cghydro_core::madelung::FitOptions;
use cghydro_core::pipeline::{align_to_anchor, extract, ExtractOptions, Extraction};
use cghydro_core::projector::{build_kernels, coarse_grain, expansion_report, KernelSet};
use cghydro_core::states;
use cghydro_core::{Grid, WaveFunction};

use crate::config::{FluctuationModeCfg, RunConfig, StateConfig};
use crate::format::{read_array, write_complex_array, write_csv, write_real_array, CghData};
use crate::manifest::Manifest;
use crate::CliError;

pub fn build_grid(cfg: &RunConfig) -> Result<Grid, CliError> {
    Ok(Grid::new(
        cfg.grid.box_length,
        cfg.grid.points_per_dim,
        cfg.grid.dims,
        cfg.grid.particles,
        cfg.effective_budget(),
    )?)
}

fn build_basic_state(
    grid: &Grid,
    state: &StateConfig,
    dims: usize,
) -> Result<WaveFunction, CliError> {
    match state {
        StateConfig::GaussianPacket {
            center,
            sigma,
            momentum,
        } => {
            let momentum = if momentum.is_empty() {
                vec![0.0; dims]
            } else {
                momentum.clone()
            };
            Ok(states::gaussian_packet(grid, center, *sigma, &momentum)?)
        }
        StateConfig::PlaneWave { mode } => Ok(states::plane_wave(grid, mode)?),
        StateConfig::File { path } => {
            let arr = read_array(Path::new(path))?;
            let shape: Vec<usize> = arr.dims.iter().map(|&d| d as usize).collect();
            if shape != grid.shape() {
                return Err(CliError::Config(format!(
                    "initial_state.path: array shape {shape:?} does not match the grid"
                )));
            }
            let values = match arr.data {
                CghData::Complex(v) => v,
                CghData::Real(v) => v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
            };
            Ok(WaveFunction::from_position(
                grid.clone(),
                ArrayD::from_shape_vec(IxDyn(&shape), values)
                    .map_err(|e| CliError::Config(e.to_string()))?,
            )?)
        }
        StateConfig::Superposition { .. } => unreachable!("nesting rejected by validation"),
    }
}

pub fn build_state(cfg: &RunConfig, grid: &Grid) -> Result<WaveFunction, CliError> {
    match &cfg.initial_state {
        StateConfig::Superposition { components } => {
            let mut parts = Vec::with_capacity(components.len());
            for c in components {
                let w = build_basic_state(grid, &c.state, cfg.grid.dims)?;
                parts.push((Complex64::new(c.weight[0], c.weight[1]), w));
            }
            Ok(states::superposition(&parts)?)
        }
        other => build_basic_state(grid, other, cfg.grid.dims),
    }
}

pub fn fluctuation_source(
    cfg: &RunConfig,
    w0: &WaveFunction,
    seed_override: Option<u64>,
) -> FluctuationSource {
    let seed = seed_override.unwrap_or(cfg.fluctuation.seed);
    match cfg.fluctuation.mode {
        FluctuationModeCfg::Deterministic => {
            let mut src = FluctuationSource::deterministic(w0.clone());
            src.seed = seed;
            src
        }
        FluctuationModeCfg::Ensemble => {
            FluctuationSource::ensemble(w0.clone(), seed, cfg.fluctuation.irrelevant_amplitude)
        }
    }
}

pub fn evolve_options(cfg: &RunConfig) -> EvolveOptions {
    EvolveOptions {
        s_h: cfg.physics.s_h,
        s_zeta: cfg.physics.s_zeta,
        memory: MemoryStrategy::DirectSum,
        history_budget: cfg.effective_budget(),
    }
}

pub fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    SweepOptions {
        c_p: cfg.exponent_factor(),
        s_h: cfg.physics.s_h,
        s_zeta: cfg.physics.s_zeta,
        eps_node: cfg.physics.eps_node,
        tol: cfg.sweep.tol,
        prefactor: cfg.physics.prefactor_mode.into(),
        fit: FitOptions::default(),
        memory: MemoryStrategy::DirectSum,
        gateaux_eps_rel: 1e-5,
        kappa_paren: cfg.physics.kappa_parenthesization.into(),
    }
}

fn extract_options(cfg: &RunConfig) -> ExtractOptions {
    ExtractOptions {
        eps_node: cfg.physics.eps_node,
        fit: FitOptions::default(),
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn dims_of(grid: &Grid) -> Vec<u64> {
    grid.shape().iter().map(|&d| d as u64).collect()
}

fn write_field(
    man: &mut Manifest,
    out_dir: &Path,
    name: &str,
    grid: &Grid,
    field: &ArrayD<f64>,
) -> Result<(), CliError> {
    let path = out_dir.join(format!("{name}.cgh"));
    write_real_array(&path, &dims_of(grid), field.as_slice().unwrap())?;
    man.record_file(out_dir, &path)?;
    Ok(())
}

/// Extraction window around the final snapshot plus the derivative fields of
/// the coarse-graining energy there.
struct FinalWindow {
    prev: FieldSet,
    mid: FieldSet,
    next: FieldSet,
    q_mid: ArrayD<f64>,
    e_qm_mid: f64,
    de_p: EnergyDerivatives,
    mid_index: usize,
}

fn final_window(
    cfg: &RunConfig,
    traj: &Trajectory,
    kernels: &KernelSet,
    src: &FluctuationSource,
    end_extraction: &Extraction,
) -> Result<Option<FinalWindow>, CliError> {
    if traj.len() < 3 {
        return Ok(None);
    }
    let mass = cfg.physics.m;
    let ex_opts = extract_options(cfg);
    let n = traj.len() - 1;
    let mut prev = extract(&traj.state(n - 2)?, mass, &ex_opts)?.fields;
    let mid = extract(&traj.state(n - 1)?, mass, &ex_opts)?.fields;
    let mut next = end_extraction.fields.clone();
    align_to_anchor(&mut prev, &mid);
    align_to_anchor(&mut next, &mid);
    let (e_qm_mid, q_mid) = quantum_energy(
        &mid.rho,
        mass,
        &mid.grid_1p,
        cfg.physics.prefactor_mode.into(),
        &mid.mask,
    )?;
    let func = CoarseFunctional::new(kernels, src, cfg.physics.s_zeta, traj, n - 1)?;
    let de_p = cghydro_core::hydro::coarse_derivative_fields(&func, &mid, 1e-5)?;
    Ok(Some(FinalWindow {
        prev,
        mid,
        next,
        q_mid,
        e_qm_mid,
        de_p,
        mid_index: n - 1,
    }))
}

fn record_residuals(
    cfg: &RunConfig,
    man: &mut Manifest,
    out_dir: &Path,
    traj: &Trajectory,
    win: &FinalWindow,
) -> Result<(), CliError> {
    let mass = cfg.physics.m;
    let window = Window {
        prev: &win.prev,
        mid: &win.mid,
        next: &win.next,
        dt: traj.dt,
    };
    let res = eom_residuals(&window, &win.q_mid, &win.de_p, mass)?;
    let euler = euler_residual(
        &window,
        &win.q_mid,
        &win.de_p,
        mass,
        cfg.physics.kappa_parenthesization.into(),
    )?;
    let mut rows = Vec::new();
    for (name, l2, sup) in res.norms() {
        man.scalar(&format!("residual_{name}_l2"), l2);
        man.scalar(&format!("residual_{name}_sup"), sup);
        rows.push(vec![name.to_string(), fmt(l2), fmt(sup)]);
    }
    for (name, l2, sup) in euler.norms() {
        man.scalar(&format!("residual_{name}_l2"), l2);
        man.scalar(&format!("residual_{name}_sup"), sup);
        rows.push(vec![name, fmt(l2), fmt(sup)]);
    }
    if cfg.wants_format("csv") {
        let path = out_dir.join("residuals.csv");
        write_csv(&path, &["residual", "l2", "sup"], &rows)?;
        man.record_file(out_dir, &path)?;
    }
    Ok(())
}

pub fn run_evolve(
    cfg: &RunConfig,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<Manifest, CliError> {
    fs::create_dir_all(out_dir)?;
    let mut man = Manifest::new("evolve", cfg);
    let mass = cfg.physics.m;

    let t0 = Instant::now();
    let grid = build_grid(cfg)?;
    let kernels = build_kernels(&grid, cfg.physics.l_av, mass, cfg.exponent_factor())?;
    let w0 = build_state(cfg, &grid)?;
    let src = fluctuation_source(cfg, &w0, seed);
    let w_cg = coarse_grain(&w0, &kernels.symbol)?;
    man.timing("setup", t0);

    let t1 = Instant::now();
    let traj = evolve_zwanzig(
        &w_cg,
        &src,
        &kernels,
        cfg.time.dt,
        cfg.time.t_final,
        &evolve_options(cfg),
    )?;
    man.timing("evolve", t1);
    man.scalar("steps", (traj.len() - 1) as u64);
    man.scalar("norm_drift", traj.norm_ratio);
    man.scalar("initial_cg_defect", traj.initial_cg_defect);

    let t2 = Instant::now();
    let mut norm_rows = Vec::new();
    let norm0 = traj.state(0)?.norm();
    let mut idx = 0;
    loop {
        let snap = traj.state(idx)?;
        let norm = snap.norm();
        norm_rows.push(vec![
            idx.to_string(),
            fmt(traj.times[idx]),
            fmt(norm),
            fmt(if norm0 > 0.0 { norm / norm0 } else { 1.0 }),
        ]);
        if cfg.wants_format("cgh") {
            let pos = snap.to_position()?;
            let path = out_dir.join(format!("snapshot_{idx:06}.cgh"));
            write_complex_array(&path, &dims_of(&grid), pos.values.as_slice().unwrap())?;
            man.record_file(out_dir, &path)?;
        }
        if idx == traj.len() - 1 {
            break;
        }
        idx = (idx + cfg.time.snapshot_stride).min(traj.len() - 1);
    }
    if cfg.wants_format("csv") {
        let path = out_dir.join("norms.csv");
        write_csv(&path, &["step", "t", "norm", "ratio"], &norm_rows)?;
        man.record_file(out_dir, &path)?;
    }
    man.timing("snapshots", t2);

    if cfg.physics.l_av == 0.0 {
        let reference = schrodinger_reference(&w_cg, mass, *traj.times.last().unwrap())?
            .into_position();
        let got = traj.final_state()?.to_position()?;
        let sup = got
            .values
            .iter()
            .zip(reference.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        man.scalar("schrodinger_match_sup", sup);
    }

    let t3 = Instant::now();
    let ex = extract(&traj.final_state()?, mass, &extract_options(cfg))?;
    man.scalar("fit_residual", ex.phases.fit_residual);
    man.scalar("fit_converged", ex.phases.converged);
    man.scalar("kappa_clamp_magnitude", ex.correlations.clamp_magnitude);
    let (e_qm, _) = quantum_energy(
        &ex.fields.rho,
        mass,
        &ex.fields.grid_1p,
        cfg.physics.prefactor_mode.into(),
        &ex.fields.mask,
    )?;
    let e_p = coarse_energy(&traj, &kernels, &src, cfg.physics.s_zeta, traj.len() - 1)?;
    man.scalar("e_qm", e_qm);
    man.scalar("e_p_re", e_p.re);
    man.scalar("e_p_im", e_p.im);
    if cfg.wants_format("cgh") {
        let g1 = &ex.fields.grid_1p;
        write_field(&mut man, out_dir, "field_rho", g1, &ex.fields.rho)?;
        write_field(&mut man, out_dir, "field_varphi", g1, &ex.fields.varphi)?;
        write_field(&mut man, out_dir, "field_lambda", g1, &ex.fields.lambda)?;
        write_field(&mut man, out_dir, "field_mu", g1, &ex.fields.mu)?;
        write_field(&mut man, out_dir, "field_kappa_sq", g1, &ex.fields.kappa_sq)?;
        for (axis, u) in ex.hydro.u.iter().enumerate() {
            write_field(&mut man, out_dir, &format!("field_u_{axis}"), g1, u)?;
        }
    }
    man.timing("extract", t3);

    let t4 = Instant::now();
    if let Some(win) = final_window(cfg, &traj, &kernels, &src, &ex)? {
        record_residuals(cfg, &mut man, out_dir, &traj, &win)?;
    }
    man.timing("residuals", t4);

    man.write(out_dir)?;
    Ok(man)
}

pub fn run_diagnose(
    cfg: &RunConfig,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<Manifest, CliError> {
    fs::create_dir_all(out_dir)?;
    let mut man = Manifest::new("diagnose", cfg);
    let mass = cfg.physics.m;

    let t0 = Instant::now();
    let grid = build_grid(cfg)?;
    let kernels = build_kernels(&grid, cfg.physics.l_av, mass, cfg.exponent_factor())?;
    let w0 = build_state(cfg, &grid)?;
    let src = fluctuation_source(cfg, &w0, seed);
    let w_cg = coarse_grain(&w0, &kernels.symbol)?;
    let traj = evolve_zwanzig(
        &w_cg,
        &src,
        &kernels,
        cfg.time.dt,
        cfg.time.t_final,
        &evolve_options(cfg),
    )?;
    man.timing("evolve", t0);
    man.scalar("norm_drift", traj.norm_ratio);
    man.scalar("initial_cg_defect", traj.initial_cg_defect);

    let t1 = Instant::now();
    let ex = extract(&traj.final_state()?, mass, &extract_options(cfg))?;
    man.scalar("fit_residual", ex.phases.fit_residual);
    man.scalar("kappa_clamp_magnitude", ex.correlations.clamp_magnitude);
    let (e_qm, _) = quantum_energy(
        &ex.fields.rho,
        mass,
        &ex.fields.grid_1p,
        cfg.physics.prefactor_mode.into(),
        &ex.fields.mask,
    )?;
    let e_p = coarse_energy(&traj, &kernels, &src, cfg.physics.s_zeta, traj.len() - 1)?;
    man.scalar("e_qm", e_qm);
    man.scalar("e_p_re", e_p.re);
    man.scalar("e_p_im", e_p.im);

    let pressure = thermal_pressure(
        &ex.fields.grid_1p,
        &ex.fields.rho,
        &ex.fields.kappa_sq,
        &ex.fields.mu,
        &ex.fields.mask,
    );
    let min_eig = pressure
        .min_eigenvalue
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let max_eig = pressure
        .max_eigenvalue
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    man.scalar("pressure_min_eigenvalue", min_eig);
    man.scalar("pressure_max_eigenvalue", max_eig);
    if cfg.wants_format("csv") {
        let rows: Vec<Vec<String>> = pressure
            .min_eigenvalue
            .iter()
            .zip(pressure.max_eigenvalue.iter())
            .enumerate()
            .map(|(i, (lo, hi))| vec![i.to_string(), fmt(*lo), fmt(*hi)])
            .collect();
        let path = out_dir.join("pressure.csv");
        write_csv(&path, &["index", "min_eigenvalue", "max_eigenvalue"], &rows)?;
        man.record_file(out_dir, &path)?;
    }
    man.timing("pressure", t1);

    let t2 = Instant::now();
    if let Some(win) = final_window(cfg, &traj, &kernels, &src, &ex)? {
        record_residuals(cfg, &mut man, out_dir, &traj, &win)?;
        let bound = quantum_force_bound(
            &win.mid,
            &win.q_mid,
            &win.de_p,
            cfg.physics.kappa_parenthesization.into(),
        );
        record_bound(&mut man, &bound);
        let window = Window {
            prev: &win.prev,
            mid: &win.mid,
            next: &win.next,
            dt: traj.dt,
        };
        let e_p_mid = coarse_energy(&traj, &kernels, &src, cfg.physics.s_zeta, win.mid_index)?;
        man.scalar(
            "lagrangian",
            lagrangian(&window, win.e_qm_mid, e_p_mid, mass),
        );
    }
    man.timing("residuals", t2);

    man.write(out_dir)?;
    Ok(man)
}

fn record_bound(man: &mut Manifest, bound: &BoundReport) {
    man.scalar("bound_lhs_l2", bound.lhs_l2);
    man.scalar("bound_rhs_l2", bound.rhs_l2);
    man.scalar("bound_lhs_sup", bound.lhs_sup);
    man.scalar("bound_rhs_sup", bound.rhs_sup);
    man.scalar("bound_satisfied_l2", bound.satisfied_l2);
    man.scalar("bound_satisfied_sup", bound.satisfied_sup);
    man.scalar("bound_margin_l2", bound.margin_l2);
    man.scalar("bound_margin_sup", bound.margin_sup);
}

/// Per-`l` artifacts of the sweep beyond the derivative tables.
pub struct SweepLeg {
    pub l: f64,
    pub bound: Option<BoundReport>,
    pub l_obs: f64,
    pub error: Option<String>,
}

pub fn run_sweep(cfg: &RunConfig, out_dir: &Path, seed: Option<u64>) -> Result<Manifest, CliError> {
    fs::create_dir_all(out_dir)?;
    let mut man = Manifest::new("sweep", cfg);
    let mass = cfg.physics.m;
    let l_grid = cfg.sweep_l_grid()?;
    let opts = sweep_options(cfg);
    let ex_opts = extract_options(cfg);

    let t0 = Instant::now();
    let grid = build_grid(cfg)?;
    let w0 = build_state(cfg, &grid)?;
    let src = fluctuation_source(cfg, &w0, seed);
    man.timing("setup", t0);

    let t1 = Instant::now();
    let report = sweep_l(
        &w0,
        &src,
        &l_grid,
        cfg.sweep.t_probe,
        mass,
        cfg.time.dt,
        &opts,
    )?;
    man.timing("sweep", t1);

    let t2 = Instant::now();
    let nodes = node_scan(
        &w0,
        &src,
        &l_grid,
        cfg.sweep.t_probe,
        cfg.time.dt,
        cfg.sweep.sample_stride,
        mass,
        &opts,
    )?;
    man.timing("nodes", t2);

    let t3 = Instant::now();
    let mut legs = Vec::with_capacity(l_grid.len());
    for &l in &l_grid {
        let leg = (|| -> Result<SweepLeg, cghydro_core::Error> {
            let (traj, kernels) = evolve_leg(&w0, &src, l, mass, cfg.time.dt, cfg.sweep.t_probe, &opts)?;
            let ex = extract(&traj.final_state()?, mass, &ex_opts)?;
            let (_, q) = quantum_energy(
                &ex.fields.rho,
                mass,
                &ex.fields.grid_1p,
                opts.prefactor,
                &ex.fields.mask,
            )?;
            let de = coarse_derivatives_for(&kernels, &src, &traj, &ex.fields, &opts)?;
            let bound = quantum_force_bound(&ex.fields, &q, &de, opts.kappa_paren);
            let l_obs = observation_scale(&ex.fields.rho, &ex.fields.grid_1p);
            Ok(SweepLeg {
                l,
                bound: Some(bound),
                l_obs,
                error: None,
            })
        })();
        legs.push(leg.unwrap_or_else(|e| SweepLeg {
            l,
            bound: None,
            l_obs: f64::NAN,
            error: Some(e.to_string()),
        }));
    }
    man.timing("bounds", t3);

    let flags: Vec<LFlags> = l_grid
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let stationary = report.stationary_candidates.contains(&l);
            let node_free = nodes.per_l[i].node_free;
            let (bound_ok, l_obs) = match (&legs[i].bound, legs[i].l_obs) {
                (Some(b), lo) => (b.satisfied_l2, lo),
                (None, lo) => (false, lo),
            };
            LFlags {
                l,
                stationary,
                node_free,
                bound_ok,
                l_obs,
                separation_ok: l_obs.is_infinite()
                    || (l_obs > 0.0 && l / l_obs < cfg.sweep.ratio_threshold),
            }
        })
        .collect();
    let verdict = classicality_verdict(&flags, mass)?;
    man.scalar("verdict_stationary_l_exists", verdict.stationary_l_exists);
    man.scalar("verdict_nodes_absent", verdict.nodes_absent);
    man.scalar("verdict_bound_satisfied", verdict.bound_satisfied);
    man.scalar("verdict_scale_separation", verdict.scale_separation);
    match verdict.chosen_l {
        Some(l) => {
            man.scalar("verdict_chosen_l", l);
            man.scalar("verdict_temperature", verdict.temperature.unwrap());
        }
        None => {
            man.scalar("verdict_chosen_l", serde_json::Value::Null);
            man.scalar("verdict_temperature", serde_json::Value::Null);
        }
    }
    man.scalar(
        "stationary_candidates",
        serde_json::to_value(&report.stationary_candidates)?,
    );

    if cfg.wants_format("csv") {
        let path = out_dir.join("sweep.csv");
        write_sweep_csv(&path, &report, &nodes.per_l, &legs, &flags)?;
        man.record_file(out_dir, &path)?;
    }
    man.write(out_dir)?;
    Ok(man)
}

fn write_sweep_csv(
    path: &Path,
    report: &SweepReport,
    nodes: &[cghydro_core::classicality::NodeScanRow],
    legs: &[SweepLeg],
    flags: &[LFlags],
) -> Result<(), CliError> {
    let mut header = vec![
        "l".to_string(),
        "e_qm".into(),
        "e_p_re".into(),
        "e_p_im".into(),
        "norm_drift".into(),
    ];
    for name in SWEEP_FIELD_NAMES {
        header.push(format!("d_{name}"));
        header.push(format!("scale_{name}"));
    }
    header.extend(
        [
            "d_energy",
            "d_e_p",
            "stationary",
            "node_free",
            "bound_satisfied_l2",
            "bound_lhs_l2",
            "bound_rhs_l2",
            "l_obs",
            "separation_ok",
            "error",
        ]
        .map(String::from),
    );
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();

    let mut rows = Vec::new();
    for (i, point) in report.points.iter().enumerate() {
        let mut row = vec![
            fmt(point.l),
            fmt(point.e_qm),
            fmt(point.e_p.re),
            fmt(point.e_p.im),
            fmt(point.norm_drift),
        ];
        let deriv = report.derivatives.iter().find(|r| r.l == point.l);
        for slot in 0..SWEEP_FIELD_NAMES.len() {
            match deriv {
                Some(d) => {
                    row.push(fmt(d.field_norms[slot]));
                    row.push(fmt(d.field_scales[slot]));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        match deriv {
            Some(d) => {
                row.push(fmt(d.d_energy));
                row.push(fmt(d.d_e_p));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
            }
        }
        row.push(flags[i].stationary.to_string());
        row.push(nodes[i].node_free.to_string());
        match &legs[i].bound {
            Some(b) => {
                row.push(b.satisfied_l2.to_string());
                row.push(fmt(b.lhs_l2));
                row.push(fmt(b.rhs_l2));
            }
            None => {
                row.push(String::new());
                row.push(String::new());
                row.push(String::new());
            }
        }
        row.push(fmt(flags[i].l_obs));
        row.push(flags[i].separation_ok.to_string());
        row.push(
            point
                .error
                .clone()
                .or_else(|| legs[i].error.clone())
                .unwrap_or_default(),
        );
        rows.push(row);
    }
    write_csv(path, &header_refs, &rows)?;
    Ok(())
}

pub fn run_kernels(
    cfg: &RunConfig,
    out_dir: &Path,
    _seed: Option<u64>,
) -> Result<Manifest, CliError> {
    fs::create_dir_all(out_dir)?;
    let mut man = Manifest::new("kernels", cfg);
    let mass = cfg.physics.m;

    let t0 = Instant::now();
    let grid = build_grid(cfg)?;
    let kernels = build_kernels(&grid, cfg.physics.l_av, mass, cfg.exponent_factor())?;
    man.timing("kernels", t0);

    if cfg.wants_format("csv") {
        let rank = grid.rank();
        let mut header: Vec<String> = vec!["index".into()];
        for axis in 0..rank {
            header.push(format!("k_{axis}"));
        }
        header.extend(["omega", "p", "h", "g_amp", "f_amp"].map(String::from));
        let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let p = kernels.symbol.values.as_slice().unwrap();
        let w = kernels.omega.values.as_slice().unwrap();
        let h = kernels.h.as_slice().unwrap();
        let g = kernels.g_amp.as_slice().unwrap();
        let f = kernels.f_amp.as_slice().unwrap();
        let rows: Vec<Vec<String>> = (0..grid.n_points())
            .map(|i| {
                let mut row = vec![i.to_string()];
                for axis in 0..rank {
                    row.push(fmt(grid.wavenumbers()[grid.axis_index(i, axis)]));
                }
                row.extend([fmt(w[i]), fmt(p[i]), fmt(h[i]), fmt(g[i]), fmt(f[i])]);
                row
            })
            .collect();
        let path = out_dir.join("kernels.csv");
        write_csv(&path, &header_refs, &rows)?;
        man.record_file(out_dir, &path)?;
    }

    let t1 = Instant::now();
    let nyquist = std::f64::consts::PI * grid.points_per_dim() as f64 / grid.box_length();
    let k_max = cfg
        .sweep
        .expansion_k_max
        .unwrap_or_else(|| (0.45 * nyquist).min(2.0));
    let ls: Vec<f64> = if cfg.sweep.l_values.is_empty() {
        [0.02, 0.032, 0.05, 0.08, 0.13, 0.2]
            .iter()
            .map(|f| f / k_max)
            .collect()
    } else {
        cfg.sweep.l_values.clone()
    };
    let expansion = expansion_report(&grid, mass, &ls, cfg.exponent_factor(), k_max)?;
    man.scalar("expansion_k_max", expansion.k_max);
    man.scalar("h_error_slope", expansion.h_error_slope);
    man.scalar("f_slope", expansion.f_slope);
    man.scalar("g_slope", expansion.g_slope);
    man.scalar("g_printed_power", expansion.g_printed_power);
    man.scalar("g_discrepancy", expansion.g_discrepancy);
    man.scalar("expansion_note", expansion.note.clone());
    if cfg.wants_format("csv") {
        let rows: Vec<Vec<String>> = expansion
            .rows
            .iter()
            .map(|r| {
                vec![
                    fmt(r.l_av),
                    fmt(r.h_error),
                    fmt(r.f_norm),
                    fmt(r.g_norm),
                    fmt(r.f_paper),
                    fmt(r.g_paper),
                ]
            })
            .collect();
        let path = out_dir.join("expansion.csv");
        write_csv(
            &path,
            &["l_av", "h_error", "f_norm", "g_norm", "f_paper", "g_paper"],
            &rows,
        )?;
        man.record_file(out_dir, &path)?;
    }
    man.timing("expansion", t1);

    man.write(out_dir)?;
    Ok(man)
}

/// Dispatch helper used by `main` and the test suites.
pub fn run_command(
    command: &str,
    cfg: &RunConfig,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<Manifest, CliError> {
    match command {
        "evolve" => run_evolve(cfg, out_dir, seed),
        "sweep" => run_sweep(cfg, out_dir, seed),
        "diagnose" => run_diagnose(cfg, out_dir, seed),
        "kernels" => run_kernels(cfg, out_dir, seed),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}

/// Output directory resolution: the CLI flag wins over the config value.
pub fn resolve_out_dir(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}
