//! Shared extraction pipeline: wavefunction -> Madelung fields -> one-particle
//! field bundle, plus the gauge alignment needed before differencing
//! snapshots in time or across averaging lengths.

use ndarray::ArrayD;

use crate::error::Result;
use crate::grid::WaveFunction;
use crate::hydro::FieldSet;
use crate::madelung::{
    self, correlation_fields, decompose, fit_phase_structure, moments, CorrelationFields,
    FitOptions, HydroFields, MadelungDecomposition, Moments, PhaseStructure,
};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Debug)]
pub struct ExtractOptions {
    pub eps_node: f64,
    pub fit: FitOptions,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            eps_node: madelung::DEFAULT_EPS_NODE,
            fit: FitOptions::default(),
        }
    }
}

/// Everything extracted from one snapshot.
pub struct Extraction {
    pub decomposition: MadelungDecomposition,
    pub phases: PhaseStructure,
    pub moments: Moments,
    pub correlations: CorrelationFields,
    pub hydro: HydroFields,
    pub fields: FieldSet,
}

/// Decompose, fit the pair phase, marginalize and assemble the one-particle
/// field bundle.  Per-particle phase fields are averaged into the single
/// `varphi`/`mu` of the field equations (identical for symmetric states).
pub fn extract(w: &WaveFunction, mass: f64, opts: &ExtractOptions) -> Result<Extraction> {
    let pos = w.clone().into_position();
    let grid = pos.grid.clone();
    let grid_1p = grid.one_particle();
    let dec = decompose(&pos, mass, opts.eps_node)?;
    let phases = fit_phase_structure(&dec.phase, &dec.node_mask, &grid, &opts.fit)?;
    let phi_sq = dec.amplitude.mapv(|a| a * a);
    let m = moments(&phi_sq, &grid)?;
    let varphi = phases.varphi_mean();
    let mu = phases.mu_mean();
    let corr = correlation_fields(&m, &mu, &grid_1p, opts.eps_node)?;
    let (u, vorticity) = madelung::velocity_and_vorticity(
        &grid_1p,
        &varphi,
        &corr.lambda,
        &mu,
        mass,
        &corr.mask,
    );
    let hydro = HydroFields {
        grid: grid_1p.clone(),
        rho: m.rho.clone(),
        rho2: m.rho2.clone(),
        rho3: m.rho3.clone(),
        lambda: corr.lambda.clone(),
        kappa_sq: corr.kappa_sq.clone(),
        u,
        vorticity,
        mask: corr.mask.clone(),
    };
    let fields = FieldSet {
        grid_1p,
        config_grid: grid,
        n_particles: pos.grid.particles(),
        mass,
        rho: m.rho.clone(),
        varphi,
        lambda: corr.lambda.clone(),
        mu,
        kappa_sq: corr.kappa_sq.clone(),
        mask: corr.mask.clone(),
    };
    Ok(Extraction {
        decomposition: dec,
        phases,
        moments: m,
        correlations: corr,
        hydro,
        fields,
    })
}

fn masked_mean_diff(a: &ArrayD<f64>, b: &ArrayD<f64>, mask: &ArrayD<bool>) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for ((x, y), &m) in a.iter().zip(b.iter()).zip(mask.iter()) {
        if !m {
            acc += x - y;
            count += 1;
        }
    }
    if count > 0 {
        acc / count as f64
    } else {
        0.0
    }
}

fn masked_dot(a: &ArrayD<f64>, b: &ArrayD<f64>, mask: &ArrayD<bool>) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(mask.iter())
        .filter(|(_, &m)| !m)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Remove the snapshot-to-snapshot gauge freedom before time differencing:
/// `varphi` is healed to the anchor by the nearest multiple of `2 pi / m`
/// (per-snapshot unwrapping fixes the constant only modulo that), and the
/// `(mu, lambda)` pair is sign-aligned with the anchor.
pub fn align_to_anchor(target: &mut FieldSet, anchor: &FieldSet) {
    let period = TAU / target.mass;
    let diff = masked_mean_diff(&anchor.varphi, &target.varphi, &anchor.mask);
    let shift = period * (diff / period).round();
    if shift != 0.0 {
        target.varphi.mapv_inplace(|v| v + shift);
    }
    if masked_dot(&target.mu, &anchor.mu, &anchor.mask) < 0.0 {
        target.mu.mapv_inplace(|v| -v);
        target.lambda.mapv_inplace(|v| -v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::states;

    #[test]
    fn extract_free_packet_fields() {
        let g = Grid::new(20.0, 64, 1, 1, u128::MAX).unwrap();
        let w = states::gaussian_packet(&g, &[10.0], 1.0, &[0.0]).unwrap();
        let ex = extract(&w, 1.0, &ExtractOptions::default()).unwrap();
        // one-particle density integrates to N ||a||^2 = 1
        let total = crate::calculus::integrate(&ex.fields.grid_1p, &ex.fields.rho);
        assert!((total - 1.0).abs() < 1e-8);
        assert!(ex.phases.fit_residual < 1e-10);
        assert!(ex.fields.kappa_sq.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alignment_heals_phase_offsets() {
        let g = Grid::new(10.0, 16, 1, 1, u128::MAX).unwrap();
        let w = states::gaussian_packet(&g, &[5.0], 1.0, &[0.0]).unwrap();
        let ex1 = extract(&w, 2.0, &ExtractOptions::default()).unwrap();
        let mut shifted = ex1.fields.clone();
        shifted.varphi.mapv_inplace(|v| v + TAU / 2.0); // one period for m = 2
        align_to_anchor(&mut shifted, &ex1.fields);
        let sup = shifted
            .varphi
            .iter()
            .zip(ex1.fields.varphi.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-12);
    }
}
