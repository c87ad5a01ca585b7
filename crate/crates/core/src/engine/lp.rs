//! `‖Σ_V 1_{N_δ(𝐕)}‖_{L^p}` on the chart grid and the δ-sweep of the
//! counting inequality.

use rayon::prelude::*;
use serde::Serialize;

use crate::discretize::{check_scale, SlabNeighborhood};
use crate::engine::family::PlaneFamily;
use crate::error::{GkError, Result};

/// Largest dense chart grid [`lp_counting_norm`] will allocate.
pub const LP_CELL_CAP: usize = 1 << 26;

/// Largest number of slab-membership tests per call.
pub const LP_WORK_CAP: f64 = 4e9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpNorm {
    pub value: f64,
    /// Cells with positive overlap count.
    pub support: usize,
    pub max_overlap: u32,
    pub cell_volume: f64,
}

/// Factor-grid cells (base-`side` packed) whose centres lie in `R_j`.
fn factor_cells(slab: &SlabNeighborhood, j: usize, side: usize, q: usize, h: f64) -> Vec<usize> {
    let a = &slab.core().offsets()[j];
    let normals = slab.normals();
    let delta = slab.scale();
    let total = side.pow(q as u32);
    let mut out = Vec::new();
    let mut x = vec![0.0; q];
    for idx in 0..total {
        let mut r = idx;
        for slot in x.iter_mut().rev() {
            *slot = -1.0 + h * ((r % side) as f64 + 0.5);
            r /= side;
        }
        let inside = normals.iter().all(|nu| {
            let t: f64 = x.iter().zip(a).zip(nu).map(|((xi, ai), ui)| (xi - ai) * ui).sum();
            t.abs() <= delta + crate::discretize::BALL_SLACK
        });
        if inside {
            out.push(idx);
        }
    }
    out
}

/// Riemann sum on the grid of side ≈ `grid_delta` over `[-1,1]^N`: overlap
/// counts at cell centres raised to `p`, times the cell volume, to `1/p`.
pub fn lp_counting_norm(family: &PlaneFamily, p: f64, grid_delta: f64) -> Result<LpNorm> {
    check_scale(grid_delta)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(GkError::InvalidExponent { p, max: f64::INFINITY });
    }
    let params = family.params;
    let q = params.n - params.l;
    let factors = params.l + 1;
    let side = (2.0 / grid_delta).round() as usize;
    let h = 2.0 / side as f64;
    let cells = (side as f64).powi((q * factors) as i32);
    if cells > LP_CELL_CAP as f64 {
        return Err(GkError::ResourceCap(format!("L^p grid of {cells} cells at delta = {grid_delta}")));
    }
    let work = (side as f64).powi(q as i32) * (factors * family.len()) as f64;
    if work > LP_WORK_CAP {
        return Err(GkError::ResourceCap(format!("L^p evaluation needs about {work:.0} membership tests")));
    }
    let cells = cells as usize;
    let block = side.pow(q as u32);
    let per_member: Vec<Vec<usize>> = family
        .members
        .par_iter()
        .map(|v| {
            let slab = SlabNeighborhood::new(v.clone(), family.delta)?;
            let mut keys = vec![0usize];
            for j in 0..factors {
                let fc = factor_cells(&slab, j, side, q, h);
                keys = keys.iter().flat_map(|&k| fc.iter().map(move |&c| k * block + c)).collect();
            }
            Ok(keys)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u32; cells];
    for keys in &per_member {
        for &k in keys {
            counts[k] += 1;
        }
    }
    let vol = h.powi((q * factors) as i32);
    let mut sum = 0.0;
    let mut support = 0;
    let mut max_overlap = 0;
    for &c in &counts {
        if c > 0 {
            support += 1;
            max_overlap = max_overlap.max(c);
            sum += (c as f64).powf(p);
        }
    }
    Ok(LpNorm { value: (sum * vol).powf(1.0 / p), support, max_overlap, cell_volume: vol })
}

/// One δ of the counting-inequality sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KakeyaRecord {
    pub delta: f64,
    pub p: f64,
    pub members: usize,
    pub slab_measure_sum: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `LHS / [δ^{−(m−l)(d−m)/p′ − ε} (Σ_V |N_δ(𝐕)|)^{1/p}]` for one family.
pub fn verify_kakeya_inequality(family: &PlaneFamily, p: f64, epsilon: f64) -> Result<KakeyaRecord> {
    let params = family.params;
    let lhs = lp_counting_norm(family, p, family.delta)?.value;
    let slab = crate::discretize::slab_measure(params.l, params.m, params.n, family.delta);
    let slab_measure_sum = slab * family.len() as f64;
    let inv_p_prime = 1.0 - 1.0 / p;
    let exponent = -(((params.m - params.l) * (params.d - params.m)) as f64) * inv_p_prime - epsilon;
    let rhs = family.delta.powf(exponent) * slab_measure_sum.powf(1.0 / p);
    Ok(KakeyaRecord { delta: family.delta, p, members: family.len(), slab_measure_sum, lhs, rhs, ratio: lhs / rhs })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KakeyaSweep {
    pub records: Vec<KakeyaRecord>,
    pub max_ratio: f64,
    /// Largest ratio growth per halving of δ between consecutive records.
    pub max_growth: f64,
    pub passes: bool,
}

/// Runs [`verify_kakeya_inequality`] over families at decreasing δ and
/// checks `ratio < bound` and growth at most `growth` per halving.
pub fn kakeya_sweep(families: &[PlaneFamily], p: f64, epsilon: f64, bound: f64, growth: f64) -> Result<KakeyaSweep> {
    let records = families.iter().map(|f| verify_kakeya_inequality(f, p, epsilon)).collect::<Result<Vec<_>>>()?;
    let max_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let max_growth = records
        .windows(2)
        .map(|w| {
            let halvings = (w[0].delta / w[1].delta).log2();
            (w[1].ratio / w[0].ratio).powf(1.0 / halvings)
        })
        .fold(0.0, f64::max);
    let passes = max_ratio < bound && max_growth <= growth;
    Ok(KakeyaSweep { records, max_ratio, max_growth, passes })
}
