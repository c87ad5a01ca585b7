//! Bushes of directions through a chart point and the broad/narrow split.

use serde::Serialize;

use crate::affine::ChartPoint;
use crate::discretize::{section_distance, snap_to_net};
use crate::engine::family::{FamilyParams, PlaneFamily};
use crate::error::{GkError, Result};
use crate::grassmann::{distance, distance_to_sub_grassmannian, Subspace};
use crate::linalg::{gram_volume, Matrix};

/// The members of a family whose slab meets the δ-ball at `anchor`, and
/// their section directions `w⃗(V) ∈ G(m−l, n−l)`.
#[derive(Debug, Clone)]
pub struct BushDirections {
    pub anchor: ChartPoint,
    pub members: Vec<usize>,
    pub directions: Vec<Subspace>,
    /// Index into a δ-net of G(m−l, n−l), when one was supplied.
    pub net_indices: Option<Vec<usize>>,
}

impl BushDirections {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// `𝒱(L)`: members `V` with `N_δ(𝐕) ∩ Q_δ(L) ≠ ∅`, decided by the chart
/// distance from `L` to the sections being at most 2δ.
pub fn bush_directions(anchor: &ChartPoint, family: &PlaneFamily, net: Option<&[Subspace]>) -> Result<BushDirections> {
    let p = family.params;
    if anchor.l() != p.l || anchor.n() != p.n {
        return Err(GkError::InvalidInput("anchor lives in a different chart".into()));
    }
    let reach = 2.0 * family.delta;
    let members: Vec<usize> = family
        .members
        .iter()
        .enumerate()
        .filter(|(_, v)| section_distance(anchor.flat(), v) <= reach + 1e-12)
        .map(|(i, _)| i)
        .collect();
    let directions: Vec<Subspace> = members.iter().map(|&i| family.members[i].direction_w().clone()).collect();
    let net_indices = net.map(|net| directions.iter().map(|w| snap_to_net(w, net).map_or(usize::MAX, |(i, _)| i)).collect());
    Ok(BushDirections { anchor: anchor.clone(), members, directions, net_indices })
}

/// Constants of the broad/narrow split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifyConfig {
    pub k: f64,
    pub c1: f64,
    pub c_tilde: f64,
    pub c_prime: f64,
}

impl ClassifyConfig {
    /// `C_1 = 100n²`, `C̃ = 10n`, `C′ = 10·C̃^{d−l+1}` and `K` from
    /// [`default_k`].
    pub fn defaults(params: &FamilyParams, epsilon: f64, p: f64) -> Result<Self> {
        let n = params.n as f64;
        let c_tilde = 10.0 * n;
        Ok(ClassifyConfig {
            k: default_k(epsilon, p)?,
            c1: 100.0 * n * n,
            c_tilde,
            c_prime: 10.0 * c_tilde.powi((params.d - params.l + 1) as i32),
        })
    }

    /// Radius `K^{-(n−l)}` of the direction balls.
    pub fn ball_radius(&self, params: &FamilyParams) -> f64 {
        self.k.powi(-((params.n - params.l) as i32))
    }

    /// Gram-volume threshold `C′K^{-(n−l)}` of a broad certificate.
    pub fn broad_threshold(&self, params: &FamilyParams) -> f64 {
        self.c_prime * self.ball_radius(params)
    }
}

/// `(ln K)^p K^{−εp}` peaks at `ln K = 1/ε` and is small near `K = 1` too;
/// only powers of two past the peak are considered, so the bound keeps
/// holding for every larger `K`.
pub fn default_k(epsilon: f64, p: f64) -> Result<f64> {
    if !(epsilon > 0.0 && p >= 1.0) {
        return Err(GkError::InvalidInput(format!("need epsilon > 0 and p >= 1, got {epsilon}, {p}")));
    }
    let first = ((1.0 / epsilon) / std::f64::consts::LN_2).ceil().max(1.0) as i32;
    for e in first..1024 {
        let k = 2f64.powi(e);
        if k.ln().powf(p) * k.powf(-epsilon * p) <= 0.5 {
            return Ok(k);
        }
    }
    Err(GkError::InvalidInput(format!("no K below 2^1024 closes the bound for epsilon = {epsilon}")))
}

/// A ball of directions: its centre and the bush members it holds.
#[derive(Debug, Clone)]
pub struct DirectionBall {
    pub center: Subspace,
    pub radius: f64,
    pub members: Vec<usize>,
}

/// A `(d−m+2)`-tuple of direction balls with vectors `v_1, …, v_{d−l+1}`
/// drawn from their centres whose Gram volume certifies that no
/// `(d−l)`-plane holds all the centres.
#[derive(Debug, Clone)]
pub struct TransverseTuple {
    pub balls: Vec<DirectionBall>,
    pub vectors: Vec<Vec<f64>>,
    pub gram_volume: f64,
    pub threshold: f64,
}

impl TransverseTuple {
    /// Greedy certificate: an orthonormal basis of the first centre, then
    /// for each further centre the unit vector of it farthest from the span
    /// so far.
    pub fn certify(balls: Vec<DirectionBall>, threshold: f64) -> Result<Self> {
        let Some(first) = balls.first() else {
            return Err(GkError::InvalidInput("empty tuple".into()));
        };
        let mut vectors = first.center.basis_vectors();
        for b in &balls[1..] {
            vectors.push(farthest_unit_vector(&b.center, &vectors)?.0);
        }
        let gram_volume = gram_volume(&vectors)?;
        if gram_volume < threshold {
            return Err(GkError::InvalidInput(format!("Gram volume {gram_volume:e} is below the threshold {threshold:e}")));
        }
        Ok(TransverseTuple { balls, vectors, gram_volume, threshold })
    }

    /// Builds a certified tuple straight from directions (radius-zero balls).
    pub fn from_directions(dirs: &[Subspace], threshold: f64) -> Result<Self> {
        let balls = dirs.iter().map(|u| DirectionBall { center: u.clone(), radius: 0.0, members: vec![] }).collect();
        TransverseTuple::certify(balls, threshold)
    }

    pub fn centers(&self) -> Vec<Subspace> {
        self.balls.iter().map(|b| b.center.clone()).collect()
    }
}

/// Unit vector of `u` with the largest residual against `span(vectors)`,
/// with that residual.
fn farthest_unit_vector(u: &Subspace, vectors: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let q = u.ambient_dim();
    let span = Subspace::span(q, vectors)?;
    let resid: Vec<Vec<f64>> = u
        .basis_vectors()
        .iter()
        .map(|b| {
            let p = span.project(b);
            b.iter().zip(&p).map(|(x, y)| x - y).collect()
        })
        .collect();
    let m = Matrix::from_columns(q, &resid)?;
    let s = m.svd()?;
    // The top right singular vector gives coefficients in u's basis.
    let coef = s.right.column(0);
    let v = u.basis().mul_vec(&coef);
    Ok((v, s.singular_values[0]))
}

/// Narrow witness: `Π ∈ G(d−l, n−l)` with the share of selected balls whose
/// centres lie within `C_1/K` of `G(m−l, Π)`. `fallback` marks a witness
/// returned because no broad certificate reached its threshold.
#[derive(Debug, Clone)]
pub struct NarrowWitness {
    pub pi: Subspace,
    pub covered: usize,
    pub selected: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub enum Classification {
    Narrow(NarrowWitness),
    Broad(TransverseTuple),
}

impl Classification {
    pub fn is_broad(&self) -> bool {
        matches!(self, Classification::Broad(_))
    }
}

/// Greedy cover of the bush by balls of radius `r`, in member order.
pub fn cluster_directions(dirs: &[Subspace], r: f64) -> Vec<DirectionBall> {
    let mut assigned = vec![false; dirs.len()];
    let mut balls = Vec::new();
    for i in 0..dirs.len() {
        if assigned[i] {
            continue;
        }
        let members: Vec<usize> = (i..dirs.len())
            .filter(|&j| !assigned[j] && distance(&dirs[i], &dirs[j]).is_ok_and(|d| d <= r))
            .collect();
        for &j in &members {
            assigned[j] = true;
        }
        balls.push(DirectionBall { center: dirs[i].clone(), radius: r, members });
    }
    balls
}

/// Significant balls, the heaviest dyadic count class among them, and a
/// `100r`-separated selection from that class.
pub fn select_balls(balls: Vec<DirectionBall>, total: usize, params: &FamilyParams, r: f64, k: f64) -> Vec<DirectionBall> {
    let floor = total as f64 * k.powf(-((params.n as f64).powi(4)));
    let significant: Vec<DirectionBall> = balls.into_iter().filter(|b| b.members.len() as f64 >= floor).collect();
    let class_of = |b: &DirectionBall| usize::BITS - 1 - b.members.len().leading_zeros();
    let mut weight = std::collections::BTreeMap::new();
    for b in &significant {
        *weight.entry(class_of(b)).or_insert(0usize) += b.members.len();
    }
    let Some((&best, _)) = weight.iter().max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0))) else {
        return vec![];
    };
    let mut chosen: Vec<DirectionBall> = Vec::new();
    for b in significant.into_iter().filter(|b| class_of(b) == best) {
        if chosen.iter().all(|c| distance(&c.center, &b.center).is_ok_and(|d| d > 100.0 * r)) {
            chosen.push(b);
        }
    }
    chosen
}

fn coverage(centers: &[Subspace], pi: &Subspace, reach: f64) -> usize {
    centers.iter().filter(|u| distance_to_sub_grassmannian(u, pi).is_ok_and(|d| d <= reach)).count()
}

/// Candidate `(d−l)`-planes: the top singular directions of all centres
/// together, and for each centre the greedy extension by the farthest
/// vectors of the others.
fn candidate_planes(centers: &[Subspace], dim: usize) -> Result<Vec<Subspace>> {
    let q = centers[0].ambient_dim();
    let mut out = Vec::new();
    let stacked: Vec<Vec<f64>> = centers.iter().flat_map(Subspace::basis_vectors).collect();
    let s = Matrix::from_columns(q, &stacked)?.svd()?;
    let top: Vec<Vec<f64>> = (0..dim.min(s.left.cols())).map(|i| s.left.column(i)).collect();
    out.push(pad_plane(q, top, dim)?);
    for (i, c) in centers.iter().enumerate().take(64) {
        let mut vecs = c.basis_vectors();
        while vecs.len() < dim {
            let best = centers
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .filter_map(|(_, u)| farthest_unit_vector(u, &vecs).ok())
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((v, r)) if r > 1e-12 => vecs.push(v),
                _ => break,
            }
        }
        out.push(pad_plane(q, vecs, dim)?);
    }
    Ok(out)
}

/// Spans `vecs` and completes with coordinate directions up to `dim`.
fn pad_plane(q: usize, mut vecs: Vec<Vec<f64>>, dim: usize) -> Result<Subspace> {
    let base = Subspace::span(q, &vecs)?;
    vecs = base.basis_vectors();
    let extra = crate::linalg::complete_basis(q, &vecs, dim.saturating_sub(vecs.len()));
    vecs.extend(extra);
    Subspace::from_vectors(&vecs)
}

/// Splits a bush into narrow (a `(d−l)`-plane near half the selected
/// balls) or broad (a certified transverse tuple).
pub fn broad_narrow_classify(bush: &BushDirections, params: &FamilyParams, cfg: &ClassifyConfig) -> Result<Classification> {
    if cfg.k < 2.0 {
        return Err(GkError::InvalidInput(format!("K must be at least 2, got {}", cfg.k)));
    }
    if bush.is_empty() {
        return Err(GkError::InvalidInput("empty bush".into()));
    }
    let r = cfg.ball_radius(params);
    let balls = cluster_directions(&bush.directions, r);
    let selected = select_balls(balls, bush.len(), params, r, cfg.k);
    let centers: Vec<Subspace> = selected.iter().map(|b| b.center.clone()).collect();
    let dim = params.d - params.l;
    let reach = cfg.c1 / cfg.k;

    let mut best: Option<(Subspace, usize)> = None;
    for pi in candidate_planes(&centers, dim)? {
        let c = coverage(&centers, &pi, reach);
        if best.as_ref().is_none_or(|(_, b)| c > *b) {
            best = Some((pi, c));
        }
    }
    let (pi, covered) = best.expect("at least one candidate plane");
    if 2 * covered >= centers.len() {
        return Ok(Classification::Narrow(NarrowWitness { pi, covered, selected: centers.len(), fallback: false }));
    }

    if let Some(tuple) = greedy_tuple(&selected, params, cfg.broad_threshold(params))? {
        return Ok(Classification::Broad(tuple));
    }
    Ok(Classification::Narrow(NarrowWitness { pi, covered, selected: centers.len(), fallback: true }))
}

/// Greedy tuple: start from each selected ball in turn, then repeatedly add
/// the ball contributing the longest residual vector.
fn greedy_tuple(selected: &[DirectionBall], params: &FamilyParams, threshold: f64) -> Result<Option<TransverseTuple>> {
    let want = params.tuple_len();
    if selected.len() < want {
        return Ok(None);
    }
    let mut best: Option<TransverseTuple> = None;
    for start in 0..selected.len().min(16) {
        let mut picked = vec![start];
        let mut vectors = selected[start].center.basis_vectors();
        while picked.len() < want {
            let next = (0..selected.len())
                .filter(|i| !picked.contains(i))
                .filter_map(|i| farthest_unit_vector(&selected[i].center, &vectors).ok().map(|(v, r)| (i, v, r)))
                .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)));
            let Some((i, v, _)) = next else { break };
            picked.push(i);
            vectors.push(v);
        }
        if picked.len() < want {
            continue;
        }
        let vol = gram_volume(&vectors)?;
        if vol >= threshold && best.as_ref().is_none_or(|b| vol > b.gram_volume) {
            let balls = picked.iter().map(|&i| selected[i].clone()).collect();
            best = Some(TransverseTuple { balls, vectors, gram_volume: vol, threshold });
        }
    }
    Ok(best)
}
