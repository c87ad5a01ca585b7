//! The Brascamp–Lieb dimension functional
//! `dim U − (p/J)·Σ_j dim π_{W_j}(U)` over a structured candidate set.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::affine::product_subspace;
use crate::engine::bush::TransverseTuple;
use crate::engine::family::{admissible_p_max, FamilyParams};
use crate::error::{GkError, Result};
use crate::grassmann::Subspace;

/// `dim π_W(U) = dim U − dim(U ∩ W⊥)`.
pub fn dim_projection(u: &Subspace, w: &Subspace) -> Result<usize> {
    let kernel = u.intersect(&w.orthogonal_complement())?;
    Ok(u.dim() - kernel.dim())
}

/// How the candidate subspaces are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateStrategy {
    /// Random subspaces drawn per intermediate dimension.
    pub random_per_dim: usize,
    pub seed: u64,
    /// `(copies, block)`: ℝ^N is a product of `copies` blocks of size
    /// `block`; sums of whole blocks become candidates.
    pub blocks: Option<(usize, usize)>,
}

impl Default for CandidateStrategy {
    fn default() -> Self {
        CandidateStrategy { random_per_dim: 8, seed: 0, blocks: None }
    }
}

#[derive(Debug, Clone)]
pub struct BlInstance {
    pub p: f64,
    pub value: f64,
    pub best: Subspace,
    pub best_label: String,
    pub candidates: usize,
}

/// The functional at one `U`.
pub fn bl_functional(u: &Subspace, ws: &[Subspace], p: f64) -> Result<f64> {
    let mut sum = 0usize;
    for w in ws {
        sum += dim_projection(u, w)?;
    }
    Ok(u.dim() as f64 - p / ws.len() as f64 * sum as f64)
}

fn subsets(count: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1 << count)).map(move |mask| (0..count).filter(|i| mask & (1 << i) != 0).collect())
}

/// Candidate subspaces with labels.
pub fn bl_candidates(ws: &[Subspace], strategy: &CandidateStrategy) -> Result<Vec<(String, Subspace)>> {
    let n = ws[0].ambient_dim();
    let mut out = vec![("zero".to_string(), Subspace::zero(n)), ("full".to_string(), Subspace::full(n))];
    let perps: Vec<Subspace> = ws.iter().map(Subspace::orthogonal_complement).collect();
    for (i, w) in perps.iter().enumerate() {
        out.push((format!("perp[{i}]"), w.clone()));
    }
    if perps.len() <= 12 {
        for set in subsets(perps.len()).filter(|s| s.len() > 1) {
            let mut acc = perps[set[0]].clone();
            for &i in &set[1..] {
                acc = acc.sum(&perps[i])?;
            }
            out.push((format!("sum{set:?}"), acc));
        }
    }
    for i in 0..perps.len() {
        for j in i + 1..perps.len() {
            out.push((format!("meet[{i},{j}]"), perps[i].intersect(&perps[j])?));
        }
    }
    if let Some((copies, block)) = strategy.blocks {
        if copies * block == n && copies <= 12 {
            for set in subsets(copies) {
                let idx: Vec<usize> = set.iter().flat_map(|&t| t * block..(t + 1) * block).collect();
                out.push((format!("blocks{set:?}"), Subspace::coordinate(n, &idx)));
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(strategy.seed);
    for dim in 1..n {
        for r in 0..strategy.random_per_dim {
            out.push((format!("random[{dim}:{r}]"), Subspace::random(&mut rng, n, dim)));
        }
    }
    Ok(out)
}

/// Best value of the functional over [`bl_candidates`] plus any `extra`
/// candidates: a lower bound for the supremum over all subspaces.
pub fn bl_constant_lower(ws: &[Subspace], p: f64, strategy: &CandidateStrategy) -> Result<BlInstance> {
    bl_constant_lower_with(ws, p, strategy, &[])
}

pub fn bl_constant_lower_with(ws: &[Subspace], p: f64, strategy: &CandidateStrategy, extra: &[Subspace]) -> Result<BlInstance> {
    let Some(first) = ws.first() else {
        return Err(GkError::InvalidInput("need at least one subspace".into()));
    };
    if ws.iter().any(|w| w.ambient_dim() != first.ambient_dim()) {
        return Err(GkError::InvalidInput("subspaces live in different spaces".into()));
    }
    let j = ws.len() as f64;
    if !(p >= 1.0 && p <= j) {
        return Err(GkError::InvalidExponent { p, max: j });
    }
    let mut cands = bl_candidates(ws, strategy)?;
    cands.extend(extra.iter().enumerate().map(|(i, u)| (format!("extra[{i}]"), u.clone())));
    let mut best: Option<(f64, usize)> = None;
    for (i, (_, u)) in cands.iter().enumerate() {
        let v = bl_functional(u, ws, p)?;
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    let (value, i) = best.expect("candidate list is never empty");
    let (label, u) = cands.swap_remove(i);
    Ok(BlInstance { p, value, best: u, best_label: label, candidates: cands.len() + 1 })
}

/// `(l+1)(d−l) + β − ((l+1)(d−m) + β)p`.
pub fn bl_bound_rhs(params: &FamilyParams, p: f64) -> f64 {
    let FamilyParams { l, m, d, beta, .. } = *params;
    ((l + 1) * (d - l)) as f64 + beta - (((l + 1) * (d - m)) as f64 + beta) * p
}

#[derive(Debug, Clone, Serialize)]
pub struct BlReport {
    pub p: f64,
    pub lower_bound: f64,
    pub rhs: f64,
    pub slack: f64,
    pub violation: bool,
    pub best_dim: usize,
    pub best_label: String,
    /// The functional at `U = ℝ^N`, `N − p(N−k)`.
    pub full_space_value: f64,
}

/// Weights of a tuple: `W_j = (U_j × … × U_j)^⊥ ∈ G(N−k, N)`.
pub fn tuple_weights(tuple: &TransverseTuple, params: &FamilyParams) -> Vec<Subspace> {
    tuple.balls.iter().map(|b| product_subspace(&b.center, params.l + 1).orthogonal_complement()).collect()
}

/// Checks the candidate lower bound against the right-hand side; a value
/// above it by more than 1e-9 is a violation.
pub fn verify_bl_bound(tuple: &TransverseTuple, params: &FamilyParams, p: f64, strategy: &CandidateStrategy) -> Result<BlReport> {
    params.validate()?;
    let pmax = admissible_p_max(params.l, params.m, params.d, params.beta)?;
    if !(p >= 1.0 && p <= pmax + 1e-12) {
        return Err(GkError::InvalidExponent { p, max: pmax });
    }
    if tuple.balls.len() != params.tuple_len() {
        return Err(GkError::InvalidInput(format!("tuple has {} balls, expected {}", tuple.balls.len(), params.tuple_len())));
    }
    let ws = tuple_weights(tuple, params);
    let mut strategy = *strategy;
    strategy.blocks = Some((params.l + 1, params.n - params.l));
    let inst = bl_constant_lower(&ws, p, &strategy)?;
    let rhs = bl_bound_rhs(params, p);
    let n = params.chart_dim() as f64;
    let k = params.slab_dim() as f64;
    Ok(BlReport {
        p,
        lower_bound: inst.value,
        rhs,
        slack: rhs - inst.value,
        violation: inst.value > rhs + 1e-9,
        best_dim: inst.best.dim(),
        best_label: inst.best_label,
        full_space_value: n - p * (n - k),
    })
}
