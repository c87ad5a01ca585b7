//! δ-scale machinery on the chart box `[-1,1]^q`: separated nets, slab
//! neighborhoods of chart m-planes, grid occupancy, box counting, the ball
//! spacing condition and greedy partitioning into spacing-compliant parts.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::affine::{ChartMPlane, ChartPoint};
use crate::error::{GkError, Result};
use crate::grassmann::Subspace;
use crate::linalg::dot;

/// Slack added to closed-ball and slab tests.
pub const BALL_SLACK: f64 = 1e-9;

/// Upper bound on candidate-grid size in [`build_net`].
pub const NET_CANDIDATE_CAP: usize = 1 << 21;

/// Upper bound on sample points generated by [`box_count_planes`].
pub const SAMPLE_CAP: usize = 400_000_000;

pub fn check_scale(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 && delta <= 1.0 {
        Ok(())
    } else {
        Err(GkError::InvalidScale(delta))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// A δ-separated point set in `[-1,1]^dim`.
#[derive(Debug, Clone)]
pub struct DeltaNet {
    pub scale: f64,
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    /// Spacing of the candidate grid the net was drawn from. Maximality holds
    /// up to half its diagonal.
    pub resolution: f64,
}

impl DeltaNet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[i + 1..] {
                best = best.min(dist(p, q));
            }
        }
        best
    }

    pub fn distance_to_net(&self, x: &[f64]) -> f64 {
        self.points.iter().map(|p| dist(p, x)).fold(f64::INFINITY, f64::min)
    }

    /// Largest distance from `probes` uniform random points to the net.
    pub fn covering_radius_estimate<R: Rng + ?Sized>(&self, rng: &mut R, probes: usize) -> f64 {
        (0..probes)
            .map(|_| {
                let x: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                self.distance_to_net(&x)
            })
            .fold(0.0, f64::max)
    }

    /// The covering radius the net guarantees: δ plus the candidate-grid
    /// half-diagonal.
    pub fn covering_bound(&self) -> f64 {
        self.scale + 0.5 * self.resolution * (self.dim as f64).sqrt()
    }
}

/// Farthest-point insertion over a grid of spacing δ/4 in `[-1,1]^dim`.
/// Ties go to the lowest grid index, so the net is deterministic.
pub fn build_net(dim: usize, delta: f64) -> Result<DeltaNet> {
    check_scale(delta)?;
    let resolution = delta / 4.0;
    let per_axis = (2.0 / resolution).round() as usize + 1;
    let total = (per_axis as f64).powi(dim as i32);
    if total > NET_CANDIDATE_CAP as f64 {
        return Err(GkError::ResourceCap(format!("net candidate grid of {total} points")));
    }
    let step = 2.0 / (per_axis - 1) as f64;
    let total = total as usize;
    let candidates: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; dim];
            for slot in x.iter_mut().rev() {
                *slot = -1.0 + step * (idx % per_axis) as f64;
                idx /= per_axis;
            }
            x
        })
        .collect();
    let mut gap = vec![f64::INFINITY; total];
    let mut points = Vec::new();
    let mut next = 0;
    loop {
        let p = candidates[next].clone();
        gap.par_iter_mut().zip(&candidates).for_each(|(g, c)| *g = g.min(dist(c, &p)));
        points.push(p);
        let (best, far) = gap
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &g)| if g > acc.1 { (i, g) } else { acc });
        if far < delta {
            break;
        }
        next = best;
    }
    Ok(DeltaNet { scale: delta, dim, points, resolution: step })
}

/// Greedy δ-separated subset of Haar samples of G(k, q); the sample count
/// controls how close to maximal the result is.
pub fn grassmann_net<R: Rng + ?Sized>(rng: &mut R, k: usize, q: usize, delta: f64, samples: usize) -> Result<Vec<Subspace>> {
    check_scale(delta)?;
    let mut net: Vec<Subspace> = Vec::new();
    for _ in 0..samples {
        let s = Subspace::random(rng, q, k);
        let far = net.iter().all(|p| crate::grassmann::distance(p, &s).is_ok_and(|d| d >= delta));
        if far {
            net.push(s);
        }
    }
    Ok(net)
}

/// Index of the net member nearest to `s` (first on ties).
pub fn snap_to_net(s: &Subspace, net: &[Subspace]) -> Option<(usize, f64)> {
    net.iter()
        .enumerate()
        .filter_map(|(i, p)| crate::grassmann::distance(p, s).ok().map(|d| (i, d)))
        .fold(None, |acc, (i, d)| match acc {
            Some((_, bd)) if bd <= d => acc,
            _ => Some((i, d)),
        })
}

/// `N_δ(𝐕)` as the product `R_0 × … × R_l` of parallel rectangles in
/// `[-1,1]^{n−l}`: `R_j` holds the box points within δ of the section `v_j`
/// along each normal direction `ν_i` of `W⊥`.
#[derive(Debug, Clone)]
pub struct SlabNeighborhood {
    core: ChartMPlane,
    scale: f64,
    normals: Vec<Vec<f64>>,
}

impl SlabNeighborhood {
    pub fn new(core: ChartMPlane, delta: f64) -> Result<Self> {
        check_scale(delta)?;
        let normals = core.direction_w().orthogonal_complement().basis_vectors();
        Ok(SlabNeighborhood { core, scale: delta, normals })
    }

    pub fn core(&self) -> &ChartMPlane {
        &self.core
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The orthonormal normal frame of the rectangles.
    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    /// Membership of a flat chart vector `x_0, …, x_l`.
    pub fn contains_flat(&self, x: &[f64]) -> bool {
        let q = self.core.n() - self.core.l();
        x.len() == q * (self.core.l() + 1)
            && x.chunks(q).zip(self.core.offsets()).all(|(xj, aj)| {
                xj.iter().all(|v| v.abs() <= 1.0 + BALL_SLACK)
                    && self.normals.iter().all(|nu| {
                        let d: f64 = xj.iter().zip(aj).zip(nu).map(|((x, a), u)| (x - a) * u).sum();
                        d.abs() <= self.scale + BALL_SLACK
                    })
            })
    }

    /// Nominal product volume `(2δ)^{(n−m)(l+1)} · 2^{(m−l)(l+1)}`.
    pub fn measure(&self) -> f64 {
        slab_measure(self.core.l(), self.core.m(), self.core.n(), self.scale)
    }
}

/// `x_j(L) ∈ R_j` for every j.
pub fn slab_membership(point: &ChartPoint, slab: &SlabNeighborhood) -> bool {
    point.l() == slab.core.l() && point.n() == slab.core.n() && slab.contains_flat(point.flat())
}

/// Euclidean chart distance from a flat point to the (unclipped) sections:
/// `(Σ_j dist(x_j, v_j)²)^{1/2}`.
pub fn section_distance(x: &[f64], core: &ChartMPlane) -> f64 {
    let q = core.n() - core.l();
    x.chunks(q)
        .zip(core.offsets())
        .map(|(xj, aj)| {
            let diff: Vec<f64> = xj.iter().zip(aj).map(|(a, b)| a - b).collect();
            let r = core.direction_w().residual(&diff);
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

pub fn slab_measure(l: usize, m: usize, n: usize, delta: f64) -> f64 {
    let thin = ((n - m) * (l + 1)) as i32;
    let long = ((m - l) * (l + 1)) as i32;
    (2.0 * delta).powi(thin) * 2f64.powi(long)
}

/// Volume of the Euclidean δ-ball in the `(n−l)(l+1)`-dimensional chart.
pub fn ball_measure(delta: f64, l: usize, n: usize) -> f64 {
    let dim = (n - l) * (l + 1);
    unit_ball_volume(dim) * delta.powi(dim as i32)
}

pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(dim - 2) * 2.0 * PI / dim as f64,
    }
}

/// Occupancy counts on the δ-grid of `[-1,1]^dim`, anchored at −1 with
/// half-open cells `[−1 + iδ, −1 + (i+1)δ)`; the point 1 falls in the last cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCounter {
    scale: f64,
    dim: usize,
    side: u64,
    bits: u32,
    cells: BTreeMap<u64, u64>,
}

impl GridCounter {
    pub fn new(delta: f64, dim: usize) -> Result<Self> {
        check_scale(delta)?;
        let side = (2.0 / delta).ceil() as u64;
        let bits = 64 - side.leading_zeros();
        if dim as u32 * bits > 64 {
            return Err(GkError::ResourceCap(format!("grid of side {side} in dimension {dim} exceeds 64-bit cell keys")));
        }
        Ok(GridCounter { scale: delta, dim, side, bits, cells: BTreeMap::new() })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn side(&self) -> u64 {
        self.side
    }

    pub fn axis_index(&self, x: f64) -> Option<u64> {
        if !(-1.0 - BALL_SLACK..=1.0 + BALL_SLACK).contains(&x) {
            return None;
        }
        let i = ((x + 1.0) / self.scale).floor().max(0.0) as u64;
        Some(i.min(self.side - 1))
    }

    /// Packed key of the cell holding `x`; `None` outside the box.
    pub fn key(&self, x: &[f64]) -> Option<u64> {
        let mut key = 0u64;
        for &v in x {
            key = (key << self.bits) | self.axis_index(v)?;
        }
        Some(key)
    }

    pub fn pack(&self, idx: &[u64]) -> u64 {
        idx.iter().fold(0u64, |k, &i| (k << self.bits) | i)
    }

    pub fn unpack(&self, mut key: u64) -> Vec<u64> {
        let mask = (1u64 << self.bits) - 1;
        let mut idx = vec![0; self.dim];
        for slot in idx.iter_mut().rev() {
            *slot = key & mask;
            key >>= self.bits;
        }
        idx
    }

    pub fn add(&mut self, x: &[f64]) -> bool {
        match self.key(x) {
            Some(k) => {
                *self.cells.entry(k).or_insert(0) += 1;
                true
            }
            None => false,
        }
    }

    pub fn add_key(&mut self, key: u64, count: u64) {
        *self.cells.entry(key).or_insert(0) += count;
    }

    /// Merges another shard; order of merging never changes the result.
    pub fn merge(&mut self, other: GridCounter) {
        assert!(self.dim == other.dim && self.side == other.side, "merging incompatible grids");
        for (k, c) in other.cells {
            self.add_key(k, c);
        }
    }

    pub fn occupied(&self) -> usize {
        self.cells.len()
    }

    pub fn total(&self) -> u64 {
        self.cells.values().sum()
    }

    pub fn get(&self, idx: &[u64]) -> u64 {
        self.cells.get(&self.pack(idx)).copied().unwrap_or(0)
    }

    /// `(cell index, count)` in lexicographic cell order.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<u64>, u64)> + '_ {
        self.cells.iter().map(|(&k, &c)| (self.unpack(k), c))
    }

    /// CSV with header `c0,…,c{dim−1},count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim).map(|i| format!("c{i}")).collect();
        let _ = writeln!(out, "{},count", header.join(","));
        for (idx, c) in self.iter() {
            let cells: Vec<String> = idx.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{},{c}", cells.join(","));
        }
        out
    }
}

/// Number of δ-cells of `[-1,1]^dim` holding at least one point.
pub fn box_count(points: &[Vec<f64>], delta: f64) -> Result<usize> {
    let dim = points.first().map_or(1, Vec::len);
    let grid = GridCounter::new(delta, dim)?;
    let mut keys: Vec<u64> = points.iter().filter_map(|p| grid.key(p)).collect();
    keys.sort_unstable();
    keys.dedup();
    Ok(keys.len())
}

/// Cells of the `q`-dimensional factor grid met by `(a + W) ∩ [-1,1]^q`,
/// found by sampling the section at spacing δ/2 (δ/4 for lines).
fn section_cells(grid: &GridCounter, a: &[f64], w: &Subspace) -> Vec<u64> {
    let q = a.len();
    let k = w.dim();
    let mut keys = Vec::new();
    if k == 0 {
        if let Some(key) = grid.key(a) {
            keys.push(key);
        }
        return keys;
    }
    let h = if k == 1 { grid.scale / 4.0 } else { grid.scale / 2.0 };
    // Points of the section in the box satisfy |t| ≤ √q since a ⟂ W.
    let reach = (q as f64).sqrt();
    let per_axis = (2.0 * reach / h).ceil() as usize + 1;
    let basis = w.basis_vectors();
    let mut t = vec![0usize; k];
    let mut x = vec![0.0; q];
    loop {
        let coords: Vec<f64> = t.iter().map(|&i| -reach + h * i as f64).collect();
        if dot(&coords, &coords) <= q as f64 + h {
            x.copy_from_slice(a);
            for (c, b) in coords.iter().zip(&basis) {
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi += c * bi;
                }
            }
            if let Some(key) = grid.key(&x) {
                keys.push(key);
            }
        }
        let mut axis = 0;
        loop {
            if axis == k {
                keys.sort_unstable();
                keys.dedup();
                return keys;
            }
            t[axis] += 1;
            if t[axis] < per_axis {
                break;
            }
            t[axis] = 0;
            axis += 1;
        }
    }
}

/// Cells of the `(n−l)(l+1)`-dimensional chart grid met by the chart set
/// `𝐕 = v_0 × … × v_l` of one member.
pub fn plane_cells(plane: &ChartMPlane, delta: f64) -> Result<Vec<u64>> {
    let q = plane.n() - plane.l();
    let factor = GridCounter::new(delta, q)?;
    let full = GridCounter::new(delta, q * (plane.l() + 1))?;
    let per_factor: Vec<Vec<u64>> =
        plane.offsets().iter().map(|a| section_cells(&factor, a, plane.direction_w())).collect();
    let shift = factor.bits * q as u32;
    let mut keys = vec![0u64];
    for cells in &per_factor {
        let mut next = Vec::with_capacity(keys.len() * cells.len());
        for &k in &keys {
            for &c in cells {
                next.push(if shift == 64 { c } else { (k << shift) | c });
            }
        }
        keys = next;
    }
    debug_assert_eq!(full.dim(), q * (plane.l() + 1));
    keys.sort_unstable();
    Ok(keys)
}

/// Number of chart δ-cells met by the union of the members' chart sets.
pub fn box_count_planes(members: &[ChartMPlane], delta: f64) -> Result<usize> {
    let Some(first) = members.first() else {
        return Ok(0);
    };
    let q = first.n() - first.l();
    GridCounter::new(delta, q * (first.l() + 1))?;
    let k = first.m() - first.l();
    let h = if k == 1 { delta / 4.0 } else { delta / 2.0 };
    let per_section = (2.0 * (q as f64).sqrt() / h + 1.0).powi(k as i32);
    let estimate = per_section * (first.l() + 1) as f64 * members.len() as f64;
    if estimate > SAMPLE_CAP as f64 {
        return Err(GkError::ResourceCap(format!("box count would sample about {estimate:.0} points")));
    }
    let per_member: Vec<Vec<u64>> = members.par_iter().map(|p| plane_cells(p, delta)).collect::<Result<_>>()?;
    let mut all: Vec<u64> = per_member.concat();
    all.par_sort_unstable();
    all.dedup();
    Ok(all.len())
}

/// Least-squares line through `(log(1/δ), log count)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn box_dimension_fit(deltas: &[f64], counts: &[usize]) -> Result<DimensionFit> {
    if deltas.len() != counts.len() || deltas.len() < 2 {
        return Err(GkError::InvalidInput("need at least two (delta, count) pairs".into()));
    }
    for &d in deltas {
        check_scale(d)?;
    }
    if counts.contains(&0) {
        return Err(GkError::InvalidInput("box counts must be positive".into()));
    }
    let xs: Vec<f64> = deltas.iter().map(|d| (1.0 / d).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(GkError::InvalidInput("scales must differ".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(DimensionFit { slope, intercept, residual: (sse / n).sqrt() })
}

/// Outcome of a spacing check: the largest `count / (r/δ)^s` over dyadic
/// radii and member-centred closed balls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacingReport {
    pub passes: bool,
    pub worst_ratio: f64,
    pub witness: Option<SpacingWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacingWitness {
    pub center: usize,
    pub radius: f64,
    pub count: usize,
    pub allowed: f64,
}

impl SpacingReport {
    pub fn passes_with(&self, constant: f64) -> bool {
        self.worst_ratio <= constant * (1.0 + 1e-12)
    }
}

/// Radii `δ, 2δ, 4δ, …` not exceeding 1.
pub fn dyadic_radii(delta: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = delta;
    while r <= 1.0 + 1e-12 {
        out.push(r);
        r *= 2.0;
    }
    out
}

/// Points sorted along their widest coordinate, for window queries.
struct Sweep<'a> {
    points: &'a [Vec<f64>],
    axis: usize,
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl<'a> Sweep<'a> {
    fn new(points: &'a [Vec<f64>]) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        let spread = |k: usize| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])));
            hi - lo
        };
        let axis = (0..dim).max_by(|&a, &b| spread(a).total_cmp(&spread(b)).then(b.cmp(&a))).unwrap_or(0);
        let key = |i: usize| points[i].get(axis).copied().unwrap_or(0.0);
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| key(i)).collect();
        Sweep { points, axis, order, keys }
    }

    /// Members of the closed ball around `points[c]`, ascending.
    fn ball(&self, c: usize, r: f64, alive: Option<&[bool]>) -> Vec<usize> {
        let x = &self.points[c];
        let x0 = x.get(self.axis).copied().unwrap_or(0.0);
        let lo = self.keys.partition_point(|&k| k < x0 - r - BALL_SLACK);
        let hi = self.keys.partition_point(|&k| k <= x0 + r + BALL_SLACK);
        let mut out: Vec<usize> = self.order[lo..hi]
            .iter()
            .copied()
            .filter(|&i| alive.is_none_or(|a| a[i]) && dist(&self.points[i], x) <= r + BALL_SLACK)
            .collect();
        out.sort_unstable();
        out
    }
}

/// Static k-d tree for ball counts. A node whose box lies inside the ball
/// is counted without visiting its points.
struct KdTree<'a> {
    points: &'a [Vec<f64>],
    idx: Vec<usize>,
    nodes: Vec<KdNode>,
}

struct KdNode {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

const KD_LEAF: usize = 16;

impl<'a> KdTree<'a> {
    fn new(points: &'a [Vec<f64>]) -> Self {
        let mut t = KdTree { points, idx: (0..points.len()).collect(), nodes: Vec::new() };
        if !points.is_empty() {
            t.build(0, points.len());
        }
        t
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let dim = self.points[0].len();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &i in &self.idx[start..end] {
            for (k, &v) in self.points[i].iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        let id = self.nodes.len();
        let axis = (0..dim).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let flat = dim == 0 || hi[axis] - lo[axis] == 0.0;
        self.nodes.push(KdNode { lo, hi, start, end, children: None });
        if end - start > KD_LEAF && !flat {
            let mid = start + (end - start) / 2;
            let pts = self.points;
            self.idx[start..end].select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    /// `#{i : |p_i − x| ≤ r}`.
    fn count(&self, x: &[f64], r: f64) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let r2 = r * r;
        let mut total = 0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let (mut near, mut far) = (0.0, 0.0);
            for ((&v, &lo), &hi) in x.iter().zip(&node.lo).zip(&node.hi) {
                let below = (lo - v).max(0.0);
                let above = (v - hi).max(0.0);
                near += (below + above).powi(2);
                far += (v - lo).abs().max((hi - v).abs()).powi(2);
            }
            if near > r2 {
                continue;
            }
            if far <= r2 {
                total += node.end - node.start;
                continue;
            }
            match node.children {
                Some((a, b)) => {
                    stack.push(a);
                    stack.push(b);
                }
                None => total += self.idx[node.start..node.end].iter().filter(|&&i| dist(&self.points[i], x) <= r).count(),
            }
        }
        total
    }
}

fn worst_ball(sweep: &Sweep<'_>, tree: Option<&KdTree<'_>>, delta: f64, s: f64, alive: Option<&[bool]>) -> (f64, Option<SpacingWitness>) {
    let centers: Vec<usize> = (0..sweep.points.len()).filter(|&i| alive.is_none_or(|a| a[i])).collect();
    let mut worst = 0.0;
    let mut witness = None;
    for r in dyadic_radii(delta) {
        let allowed = (r / delta).powf(s);
        let count = |c: usize| match tree {
            Some(t) => t.count(&sweep.points[c], r + BALL_SLACK),
            None => sweep.ball(c, r, alive).len(),
        };
        let best = centers
            .par_iter()
            .map(|&c| (c, count(c)))
            .reduce(|| (usize::MAX, 0), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
        if best.0 == usize::MAX {
            continue;
        }
        let ratio = best.1 as f64 / allowed;
        if ratio > worst {
            worst = ratio;
            witness = Some(SpacingWitness { center: best.0, radius: r, count: best.1, allowed });
        }
    }
    (worst, witness)
}

/// Checks `#(A ∩ Q_r(a)) ≤ (r/δ)^s` for every member `a` and dyadic
/// `r ∈ [δ, 1]`, with closed Euclidean balls.
pub fn check_spacing(points: &[Vec<f64>], delta: f64, s: f64) -> Result<SpacingReport> {
    check_scale(delta)?;
    if !(s >= 0.0) {
        return Err(GkError::InvalidInput(format!("spacing exponent must be non-negative, got {s}")));
    }
    let sweep = Sweep::new(points);
    let tree = KdTree::new(points);
    let (worst_ratio, witness) = worst_ball(&sweep, Some(&tree), delta, s, None);
    Ok(SpacingReport { passes: worst_ratio <= 1.0 + 1e-12, worst_ratio, witness })
}

/// Splits `A` into parts that each satisfy the spacing condition with
/// constant 1, given that `A` satisfies it with constant `M`.
///
/// Each part is peeled greedily: while some ball is overfull, the
/// highest-index points of the worst ball are moved to the remainder.
pub fn partition_spacing(points: &[Vec<f64>], delta: f64, s: f64, m: f64) -> Result<Vec<Vec<usize>>> {
    let pre = check_spacing(points, delta, s)?;
    if !pre.passes_with(m) {
        let w = pre.witness.expect("a failing check has a witness");
        return Err(GkError::SpacingViolation { center: w.center, radius: w.radius, count: w.count, allowed: m * w.allowed });
    }
    let sweep = Sweep::new(points);
    let mut unassigned = vec![true; points.len()];
    let mut parts = Vec::new();
    while unassigned.iter().any(|&u| u) {
        let mut alive = unassigned.clone();
        loop {
            let (ratio, witness) = worst_ball(&sweep, None, delta, s, Some(&alive));
            if ratio <= 1.0 + 1e-12 {
                break;
            }
            let w = witness.expect("overfull ball has a witness");
            let members = sweep.ball(w.center, w.radius, Some(&alive));
            let keep = (w.allowed * (1.0 + 1e-12)).floor().max(1.0) as usize;
            for &i in &members[keep.min(members.len())..] {
                alive[i] = false;
            }
        }
        let part: Vec<usize> = (0..points.len()).filter(|&i| alive[i]).collect();
        for &i in &part {
            unassigned[i] = false;
        }
        parts.push(part);
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::ChartMPlane;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn line(a: [f64; 2], dir: [f64; 2]) -> ChartMPlane {
        let w = Subspace::from_vectors(&[dir.to_vec()]).unwrap();
        ChartMPlane::new(0, 2, w, &[a.to_vec()]).unwrap()
    }

    #[test]
    fn kd_counts_match_brute_force() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        // Duplicates and a flat coordinate exercise the degenerate splits.
        let mut pts: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.gen_range(-1.0..1.0), 0.5, rng.gen_range(-1.0..1.0)]).collect();
        pts.extend(pts[..50].to_vec());
        let tree = KdTree::new(&pts);
        for c in (0..pts.len()).step_by(37) {
            for r in [0.0, 0.05, 0.3, 1.0, 3.0] {
                let brute = pts.iter().filter(|p| dist(p, &pts[c]) <= r).count();
                assert_eq!(tree.count(&pts[c], r), brute);
            }
        }
    }

    #[test]
    fn net_examples() {
        let coarse = build_net(1, 1.0).unwrap();
        assert!(coarse.len() <= 3);
        let net = build_net(2, 1.0 / 16.0).unwrap();
        assert!(net.len() >= 16 * 16 && net.len() <= 33 * 33, "{}", net.len());
        assert!(net.min_separation() >= 1.0 / 16.0 - 1e-12);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert!(net.covering_radius_estimate(&mut rng, 2000) <= net.covering_bound());
        assert_eq!(build_net(2, 0.0).unwrap_err(), GkError::InvalidScale(0.0));
        assert!(matches!(build_net(2, 1.5), Err(GkError::InvalidScale(_))));
    }

    #[test]
    fn slab_membership_examples() {
        let core = line([0.0, 0.2], [1.0, 0.0]);
        let slab = SlabNeighborhood::new(core.clone(), 0.1).unwrap();
        let on = ChartPoint::new(0, 2, &[vec![0.5, 0.2]]).unwrap();
        assert!(slab_membership(&on, &slab));
        let off = ChartPoint::new(0, 2, &[vec![0.5, 0.4]]).unwrap();
        assert!(!slab_membership(&off, &slab));
        assert!((slab.measure() - 2.0 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn slab_membership_matches_sampled_distance() {
        // Oracle: distance to a dense sample of the core segment.
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let core = line([0.1, -0.05], [0.6, 0.8]);
        let delta = 0.05;
        let slab = SlabNeighborhood::new(core.clone(), delta).unwrap();
        let a = core.offsets()[0].clone();
        let d = core.direction_w().basis_vectors()[0].clone();
        let samples: Vec<[f64; 2]> = (0..=20_000)
            .map(|i| {
                let t = -2.0 + 4.0 * i as f64 / 20_000.0;
                [a[0] + t * d[0], a[1] + t * d[1]]
            })
            .collect();
        for _ in 0..500 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let near = samples.iter().map(|s| ((s[0] - x[0]).powi(2) + (s[1] - x[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min);
            if (near - delta).abs() < 1e-3 {
                continue;
            }
            assert_eq!(slab.contains_flat(&x), near <= delta, "{x:?}");
        }
    }

    #[test]
    fn measures() {
        assert_eq!(slab_measure(0, 3, 3, 0.1), 8.0);
        assert!((slab_measure(0, 1, 2, 0.25) - 1.0).abs() < 1e-15);
        let r = slab_measure(1, 2, 4, 0.2) / slab_measure(1, 2, 4, 0.1);
        assert!((r - 2f64.powi(4)).abs() < 1e-9);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((ball_measure(0.5, 0, 2) - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn grid_counter_roundtrip() {
        let mut g = GridCounter::new(0.5, 2).unwrap();
        assert!(g.add(&[-1.0, -1.0]));
        assert!(g.add(&[1.0, 1.0]));
        assert!(g.add(&[-0.75, -0.9]));
        assert!(!g.add(&[1.5, 0.0]));
        assert_eq!(g.occupied(), 2);
        assert_eq!(g.total(), 3);
        assert_eq!(g.get(&[0, 0]), 2);
        assert_eq!(g.get(&[3, 3]), 1);
        assert_eq!(g.to_csv(), "c0,c1,count\n0,0,2\n3,3,1\n");
        let mut a = GridCounter::new(0.5, 2).unwrap();
        a.add(&[0.1, 0.1]);
        let mut b = a.clone();
        b.merge(g.clone());
        let mut c = g;
        c.merge(a);
        assert_eq!(b, c);
    }

    #[test]
    fn box_count_examples() {
        let deltas: Vec<f64> = (4..=10).map(|k| 2f64.powi(-k)).collect();
        let point = vec![vec![0.3, -0.2]];
        let counts: Vec<usize> = deltas.iter().map(|&d| box_count(&point, d).unwrap()).collect();
        assert!(counts.iter().all(|&c| c == 1));
        assert!(box_dimension_fit(&deltas, &counts).unwrap().slope.abs() < 1e-12);

        let seg = [line([0.0, 0.0], [1.0, 0.0])];
        let counts: Vec<usize> = deltas.iter().map(|&d| box_count_planes(&seg, d).unwrap()).collect();
        assert_eq!(counts[0], 32);
        let fit = box_dimension_fit(&deltas, &counts).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn spacing_examples() {
        let one = vec![vec![0.1, 0.2]];
        assert!(check_spacing(&one, 0.01, 0.0).unwrap().passes);

        // 16 = δ^{-1} points inside one δ-ball, s = 1.
        let delta = 1.0 / 16.0;
        let cluster: Vec<Vec<f64>> = (0..16).map(|i| vec![0.001 * i as f64, 0.0]).collect();
        let rep = check_spacing(&cluster, delta, 1.0).unwrap();
        assert!(!rep.passes);
        assert_eq!(rep.witness.as_ref().unwrap().radius, delta);
        assert!(check_spacing(&cluster, delta, 0.0).is_ok());
    }

    #[test]
    fn spacing_grid_matches_exhaustive_enumeration() {
        // δ-grid of a 1-dimensional coordinate slice, s = 1: brute force
        // every dyadic member-centred ball.
        let delta = 1.0 / 32.0;
        let pts: Vec<Vec<f64>> = (0..=64).map(|i| vec![-1.0 + i as f64 * delta, 0.0]).collect();
        let rep = check_spacing(&pts, delta, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for r in dyadic_radii(delta) {
            for c in &pts {
                let cnt = pts.iter().filter(|p| dist(p, c) <= r + BALL_SLACK).count();
                worst = worst.max(cnt as f64 / (r / delta));
            }
        }
        assert_eq!(rep.worst_ratio, worst);
        assert!(rep.passes_with(3.0));
    }

    fn translated_copies(m: usize, delta: f64) -> Vec<Vec<f64>> {
        let base: Vec<f64> = (0..12).map(|i| 0.05 + 2.5 * delta * i as f64).collect();
        (0..m).flat_map(|c| base.iter().map(move |&x| vec![x + 1e-4 * c as f64, 0.5])).collect()
    }

    #[test]
    fn partition_examples() {
        let delta = 1.0 / 64.0;
        let single = translated_copies(1, delta);
        assert!(check_spacing(&single, delta, 1.0).unwrap().passes);
        let parts = partition_spacing(&single, delta, 1.0, 1.0).unwrap();
        assert_eq!(parts, vec![(0..single.len()).collect::<Vec<_>>()]);

        for m in [2usize, 4, 8] {
            let pts = translated_copies(m, delta);
            let parts = partition_spacing(&pts, delta, 1.0, m as f64).unwrap();
            assert_eq!(parts.len(), m);
            let mut seen: Vec<usize> = parts.concat();
            seen.sort_unstable();
            assert_eq!(seen, (0..pts.len()).collect::<Vec<_>>());
            for part in &parts {
                let sub: Vec<Vec<f64>> = part.iter().map(|&i| pts[i].clone()).collect();
                assert!(check_spacing(&sub, delta, 1.0).unwrap().passes);
            }
        }

        let pts = translated_copies(4, delta);
        assert!(matches!(partition_spacing(&pts, delta, 1.0, 2.0), Err(GkError::SpacingViolation { .. })));
    }
}
