//! The affine Grassmannian A(l, n) and its local chart.
//!
//! Coordinates of ℝⁿ are split as ℝ^{n−l} × ℝ^l. The parallel slices are
//! `Π_0 = ℝ^{n−l} × {0}` and `Π_j = Π_0 + e_{n−l+j}` for `j = 1..=l`. A
//! transverse l-plane is recorded by its `l+1` intersection points with the
//! slices (a [`ChartPoint`]); a transverse m-plane by its `l+1` parallel
//! (m−l)-dimensional sections (a [`ChartMPlane`]).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GkError, Result};
use crate::grassmann::{distance, Subspace};
use crate::linalg::{dot, norm, pseudo_solve, svd, Matrix};

/// Default incidence tolerance for exact-geometry checks.
pub const INCIDENCE_TOL: f64 = 1e-9;

const BOX_SLACK: f64 = 1e-12;

/// An affine plane `direction + offset` with `offset ⟂ direction`.
#[derive(Debug, Clone)]
pub struct AffinePlane {
    direction: Subspace,
    offset: Vec<f64>,
}

impl AffinePlane {
    /// The plane through `point` with the given direction.
    pub fn new(direction: Subspace, point: &[f64]) -> Result<Self> {
        if point.len() != direction.ambient_dim() {
            return Err(GkError::InvalidInput("point and direction live in different spaces".into()));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(GkError::InvalidInput("non-finite point".into()));
        }
        let p = direction.project(point);
        let offset = point.iter().zip(&p).map(|(a, b)| a - b).collect();
        Ok(AffinePlane { direction, offset })
    }

    pub fn point(ambient: usize, x: &[f64]) -> Result<Self> {
        AffinePlane::new(Subspace::zero(ambient), x)
    }

    /// Random plane with Haar direction and offset uniform in the ball of
    /// radius `radius` inside `direction^⊥`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, ambient: usize, dim: usize, radius: f64) -> Self {
        let direction = Subspace::random(rng, ambient, dim);
        let comp = direction.orthogonal_complement();
        let k = comp.dim();
        let offset = if k == 0 {
            vec![0.0; ambient]
        } else {
            let g: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let gn = norm(&g).max(f64::MIN_POSITIVE);
            let r = radius * rng.gen_range(0.0f64..1.0).powf(1.0 / k as f64);
            let c: Vec<f64> = g.iter().map(|x| x * r / gn).collect();
            comp.basis().mul_vec(&c)
        };
        AffinePlane { direction, offset }
    }

    pub fn direction(&self) -> &Subspace {
        &self.direction
    }

    /// The offset `x_V ∈ dir(V)^⊥`.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn dim(&self) -> usize {
        self.direction.dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn distance_to_point(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        self.direction.residual(&d)
    }

    pub fn contains_point(&self, x: &[f64], tol: f64) -> bool {
        self.distance_to_point(x) <= tol
    }

    pub fn is_parallel(&self, other: &AffinePlane) -> bool {
        self.direction.approx_eq(&other.direction, 1e-9)
    }

    /// Whether `other ⊆ self` as point sets.
    pub fn contains_plane(&self, other: &AffinePlane, tol: f64) -> bool {
        self.direction.contains(&other.direction, tol) && self.contains_point(&other.offset, tol)
    }
}

/// Lifts `L ⊂ ℝⁿ` to the (l+1)-subspace of ℝ^{n+1} meeting `ℝⁿ × {1}` in `L`.
pub fn to_projective(plane: &AffinePlane) -> Subspace {
    let mut cols: Vec<Vec<f64>> = plane.direction.pad(1).basis_vectors();
    let mut o = plane.offset.clone();
    o.push(1.0);
    cols.push(o);
    Subspace::from_vectors(&cols).expect("the lifted point is independent of the direction")
}

/// Inverse of [`to_projective`] on subspaces transverse to `ℝⁿ × {0}`.
pub fn from_projective(lift: &Subspace) -> Result<AffinePlane> {
    let n1 = lift.ambient_dim();
    if n1 == 0 || lift.dim() == 0 {
        return Err(GkError::InvalidInput("cannot de-projectivize the zero subspace".into()));
    }
    let n = n1 - 1;
    let b = lift.basis();
    let last = b.row(n);
    let r2 = dot(&last, &last);
    if r2 < 1e-20 {
        return Err(GkError::OutOfChart("subspace is parallel to the hyperplane at infinity".into()));
    }
    // Minimal-norm vector of the lift with last coordinate 1.
    let coef: Vec<f64> = last.iter().map(|x| x / r2).collect();
    let p = b.mul_vec(&coef);
    // Directions: the part of the lift inside ℝⁿ × {0}.
    let k = Subspace::from_vectors(std::slice::from_ref(&last))?.orthogonal_complement();
    let dirs = b.matmul(k.basis());
    let dir_cols: Vec<Vec<f64>> = dirs.columns().into_iter().map(|mut c| {
        c.truncate(n);
        c
    }).collect();
    let direction = if dir_cols.is_empty() { Subspace::zero(n) } else { Subspace::from_vectors(&dir_cols)? };
    AffinePlane::new(direction, &p[..n])
}

/// Distance induced on A(l, n) by the Grassmannian of the projective lifts.
pub fn affine_distance(a: &AffinePlane, b: &AffinePlane) -> Result<f64> {
    distance(&to_projective(a), &to_projective(b))
}

/// The smallest `ρ` with `Bⁿ(0,1) ∩ V_1 ⊂ N_ρ(V_2)`; offsets must lie in `B(0, 1/2)`.
pub fn rho_distance(v1: &AffinePlane, v2: &AffinePlane) -> Result<f64> {
    if v1.ambient_dim() != v2.ambient_dim() || v1.dim() != v2.dim() {
        return Err(GkError::InvalidInput("rho distance needs planes of equal dimension".into()));
    }
    for v in [v1, v2] {
        if norm(&v.offset) > 0.5 + BOX_SLACK {
            return Err(GkError::OutOfChart(format!("offset norm {} exceeds 1/2", norm(&v.offset))));
        }
    }
    // B ∩ V_1 is a disk of radius r about o_1; the distance to V_2 is convex,
    // so its maximum sits on the boundary sphere: maximize ‖c + r M u‖ over unit u.
    let comp = v2.direction.orthogonal_complement();
    let pc = comp.projector();
    let diff: Vec<f64> = v1.offset.iter().zip(&v2.offset).map(|(a, b)| a - b).collect();
    let c = pc.mul_vec(&diff);
    let r = (1.0 - dot(&v1.offset, &v1.offset)).max(0.0).sqrt();
    if v1.dim() == 0 || r == 0.0 {
        return Ok(norm(&c));
    }
    let m = pc.matmul(v1.direction.basis());
    Ok(max_norm_on_sphere(&c, &m, r)?.sqrt())
}

/// `max_{‖u‖=1} ‖c + r M u‖²` by the secular equation of the quadratic
/// maximization on the sphere, with the degenerate ("hard") case handled.
fn max_norm_on_sphere(c: &[f64], m: &Matrix, r: f64) -> Result<f64> {
    let s = svd(m)?;
    let k = s.singular_values.len();
    let uc = s.left.tr_mul_vec(c);
    let eig: Vec<f64> = s.singular_values.iter().map(|x| r * r * x * x).collect();
    let lin: Vec<f64> = (0..k).map(|i| r * s.singular_values[i] * uc[i]).collect();
    let cc = dot(c, c);
    let value = |z: &[f64]| cc + 2.0 * dot(&lin, z) + z.iter().zip(&eig).map(|(zi, e)| e * zi * zi).sum::<f64>();

    let top = eig.iter().cloned().fold(0.0, f64::max);
    let top_tol = 1e-12 * top.max(1.0);
    let is_top = |i: usize| eig[i] >= top - top_tol;
    let z_at = |mu: f64| -> Vec<f64> { (0..k).map(|i| lin[i] / (mu - eig[i])).collect() };
    let phi = |mu: f64| z_at(mu).iter().map(|x| x * x).sum::<f64>();

    let top_lin: f64 = (0..k).filter(|&i| is_top(i)).map(|i| lin[i] * lin[i]).sum();
    let mut best = f64::NEG_INFINITY;

    // Hard case: the non-top components alone do not fill the sphere.
    if top_lin.sqrt() <= 1e-14 {
        let mut z = vec![0.0; k];
        let mut used = 0.0;
        for i in 0..k {
            if !is_top(i) {
                z[i] = lin[i] / (top - eig[i]);
                used += z[i] * z[i];
            }
        }
        if used <= 1.0 {
            if let Some(i) = (0..k).find(|&i| is_top(i)) {
                z[i] = (1.0 - used).sqrt();
            }
            best = best.max(value(&z));
        }
    }

    let lnorm = norm(&lin);
    if lnorm > 0.0 {
        let mut lo = top;
        let mut hi = top + lnorm + 1.0;
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if phi(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut z = z_at(hi);
        let zn = norm(&z);
        if zn > 0.0 && zn.is_finite() {
            z.iter_mut().for_each(|x| *x /= zn);
            best = best.max(value(&z));
        }
    } else {
        // No linear term: the best unit vector is a top eigenvector.
        let mut z = vec![0.0; k];
        if let Some(i) = (0..k).find(|&i| is_top(i)) {
            z[i] = 1.0;
        }
        best = best.max(value(&z));
    }
    // Coordinate directions are cheap extra candidates.
    for i in 0..k {
        for sgn in [-1.0, 1.0] {
            let mut z = vec![0.0; k];
            z[i] = sgn;
            best = best.max(value(&z));
        }
    }
    Ok(best.max(0.0))
}

/// Coordinates of a transverse l-plane: its intersections `x_j = L ∩ Π_j`,
/// each in `[-1,1]^{n−l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    l: usize,
    n: usize,
    coords: Vec<f64>,
}

fn check_ln(l: usize, n: usize) -> Result<()> {
    if l >= n {
        return Err(GkError::InvalidParams(format!("chart needs l < n, got l={l}, n={n}")));
    }
    Ok(())
}

/// Point of `Π_j` in ℝⁿ over the chart coordinate `x ∈ ℝ^{n−l}`.
fn lift_section_point(l: usize, n: usize, j: usize, x: &[f64]) -> Vec<f64> {
    let mut p = x.to_vec();
    p.resize(n, 0.0);
    if j > 0 {
        p[n - l + j - 1] = 1.0;
    }
    p
}

impl ChartPoint {
    pub fn from_flat(l: usize, n: usize, coords: Vec<f64>) -> Result<Self> {
        check_ln(l, n)?;
        if coords.len() != (l + 1) * (n - l) {
            return Err(GkError::InvalidInput(format!(
                "chart point for l={l}, n={n} needs {} coordinates, got {}",
                (l + 1) * (n - l),
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite() || x.abs() > 1.0 + BOX_SLACK) {
            return Err(GkError::OutOfChart("chart coordinate outside [-1, 1]".into()));
        }
        Ok(ChartPoint { l, n, coords })
    }

    pub fn new(l: usize, n: usize, sections: &[Vec<f64>]) -> Result<Self> {
        ChartPoint::from_flat(l, n, sections.concat())
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Flat coordinates `x_0, …, x_l`, the chart's `(n−l)(l+1)` parameters.
    pub fn flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn section(&self, j: usize) -> &[f64] {
        let q = self.n - self.l;
        &self.coords[j * q..(j + 1) * q]
    }

    /// The l-plane through the points `(x_j, e_j)`.
    pub fn to_plane(&self) -> AffinePlane {
        let (l, n) = (self.l, self.n);
        let p0 = lift_section_point(l, n, 0, self.section(0));
        let dirs: Vec<Vec<f64>> = (1..=l)
            .map(|j| {
                let pj = lift_section_point(l, n, j, self.section(j));
                pj.iter().zip(&p0).map(|(a, b)| a - b).collect()
            })
            .collect();
        let direction = if dirs.is_empty() {
            Subspace::zero(n)
        } else {
            Subspace::from_vectors(&dirs).expect("the slices make the directions independent")
        };
        AffinePlane::new(direction, &p0).expect("finite")
    }
}

/// The chart coordinates of an affine l-plane (`l = plane.dim()`).
pub fn chart_coords(plane: &AffinePlane) -> Result<ChartPoint> {
    let l = plane.dim();
    let n = plane.ambient_dim();
    check_ln(l, n)?;
    let sections = section_points(plane, l)?;
    ChartPoint::new(l, n, &sections)
}

/// For a plane of any dimension ≥ l, a point of `plane ∩ Π_j` for each j,
/// restricted to the first `n−l` coordinates.
fn section_points(plane: &AffinePlane, l: usize) -> Result<Vec<Vec<f64>>> {
    let n = plane.ambient_dim();
    let d = plane.direction.basis();
    let tail_rows: Vec<Vec<f64>> = (n - l..n).map(|i| d.row(i)).collect();
    let tail = Matrix::from_rows(&tail_rows)?;
    let tail = if tail_rows.is_empty() { Matrix::zeros(0, d.cols()) } else { tail };
    let mut out = Vec::with_capacity(l + 1);
    for j in 0..=l {
        let mut rhs: Vec<f64> = plane.offset[n - l..].iter().map(|x| -x).collect();
        if j > 0 {
            rhs[j - 1] += 1.0;
        }
        let (c, rank) = if l == 0 { (vec![0.0; d.cols()], 0) } else { pseudo_solve(&tail, &rhs)? };
        if rank < l {
            return Err(GkError::OutOfChart("plane is not transverse to the slices".into()));
        }
        let mut p = plane.offset.clone();
        let dc = d.mul_vec(&c);
        p.iter_mut().zip(&dc).for_each(|(a, b)| *a += b);
        // Solving exactly: confirm the last coordinates hit the slice.
        let hit = (0..l).all(|i| (p[n - l + i] - if i + 1 == j { 1.0 } else { 0.0 }).abs() < 1e-9);
        if !hit {
            return Err(GkError::OutOfChart("plane is not transverse to the slices".into()));
        }
        p.truncate(n - l);
        out.push(p);
    }
    Ok(out)
}

/// A transverse m-plane in chart form: `l+1` parallel (m−l)-planes
/// `v_j = a_j + W` inside the slices, with `a_j ⟂ W`.
#[derive(Debug, Clone)]
pub struct ChartMPlane {
    l: usize,
    n: usize,
    direction: Subspace,
    offsets: Vec<Vec<f64>>,
}

impl ChartMPlane {
    /// Builds the sections through the given points with common direction
    /// `direction ⊂ ℝ^{n−l}`; fails if some section misses the unit box.
    pub fn new(l: usize, n: usize, direction: Subspace, points: &[Vec<f64>]) -> Result<Self> {
        let v = ChartMPlane::from_parts(l, n, direction, points)?;
        if !v.meets_box() {
            return Err(GkError::OutOfChart("a section misses [-1,1]^(n-l)".into()));
        }
        Ok(v)
    }

    /// Like [`ChartMPlane::new`] without the box check (rescaled images may
    /// leave the unit chart).
    pub fn from_parts(l: usize, n: usize, direction: Subspace, points: &[Vec<f64>]) -> Result<Self> {
        check_ln(l, n)?;
        let q = n - l;
        if direction.ambient_dim() != q {
            return Err(GkError::InvalidInput(format!("section direction must live in R^{q}")));
        }
        if points.len() != l + 1 || points.iter().any(|p| p.len() != q) {
            return Err(GkError::InvalidInput(format!("need {} section points in R^{q}", l + 1)));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(GkError::InvalidInput("non-finite section point".into()));
        }
        let offsets = points
            .iter()
            .map(|p| {
                let pr = direction.project(p);
                p.iter().zip(&pr).map(|(a, b)| a - b).collect()
            })
            .collect();
        Ok(ChartMPlane { l, n, direction, offsets })
    }

    /// Chart form of an affine m-plane in ℝⁿ transverse to `Π_0`.
    pub fn from_plane(plane: &AffinePlane, l: usize) -> Result<Self> {
        let n = plane.ambient_dim();
        check_ln(l, n)?;
        if plane.dim() < l {
            return Err(GkError::InvalidParams("m-plane dimension below l".into()));
        }
        let m = plane.dim();
        let base = Subspace::coordinate(n, &(0..n - l).collect::<Vec<_>>());
        let w_full = plane.direction.intersect(&base)?;
        if w_full.dim() != m - l {
            return Err(GkError::OutOfChart("plane is not transverse to the slices".into()));
        }
        let w_cols: Vec<Vec<f64>> = w_full
            .basis_vectors()
            .into_iter()
            .map(|mut c| {
                c.truncate(n - l);
                c
            })
            .collect();
        let w = if w_cols.is_empty() { Subspace::zero(n - l) } else { Subspace::from_vectors(&w_cols)? };
        let points = section_points(plane, l)?;
        ChartMPlane::new(l, n, w, &points)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.l + self.direction.dim()
    }

    /// `w⃗(V) ∈ G(m−l, n−l)`, the common direction of the sections.
    pub fn direction_w(&self) -> &Subspace {
        &self.direction
    }

    pub fn offsets(&self) -> &[Vec<f64>] {
        &self.offsets
    }

    pub fn section(&self, j: usize) -> AffinePlane {
        AffinePlane { direction: self.direction.clone(), offset: self.offsets[j].clone() }
    }

    /// Free parameters of a chart m-plane: direction plus parallel offsets.
    pub fn free_parameters(&self) -> usize {
        let (l, m, n) = (self.l, self.m(), self.n);
        (m - l) * (n - m) + (l + 1) * (n - m)
    }

    /// The m-plane in ℝⁿ with these sections.
    pub fn to_plane(&self) -> AffinePlane {
        let (l, n) = (self.l, self.n);
        let p0 = lift_section_point(l, n, 0, &self.offsets[0]);
        let mut dirs: Vec<Vec<f64>> = self.direction.pad(l).basis_vectors();
        for j in 1..=l {
            let pj = lift_section_point(l, n, j, &self.offsets[j]);
            dirs.push(pj.iter().zip(&p0).map(|(a, b)| a - b).collect());
        }
        let direction = Subspace::span(n, &dirs).expect("finite");
        AffinePlane::new(direction, &p0).expect("finite")
    }

    /// Every section meets `[-1,1]^{n−l}` (alternating projections).
    pub fn meets_box(&self) -> bool {
        self.offsets.iter().all(|a| affine_meets_box(a, &self.direction))
    }

    /// `x_j ∈ v_j` for every j, within `tol`.
    pub fn contains(&self, point: &ChartPoint, tol: f64) -> bool {
        incidence(point, self, tol)
    }

    /// Flat serialization: `a_0, …, a_l` followed by the direction basis,
    /// column by column.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.offsets.concat();
        for c in self.direction.basis_vectors() {
            out.extend(c);
        }
        out
    }

    pub fn from_flat(l: usize, m: usize, n: usize, flat: &[f64]) -> Result<Self> {
        check_ln(l, n)?;
        if m < l || m > n {
            return Err(GkError::InvalidParams(format!("need l <= m <= n, got l={l}, m={m}, n={n}")));
        }
        let q = n - l;
        let k = m - l;
        let want = (l + 1) * q + k * q;
        if flat.len() != want {
            return Err(GkError::InvalidInput(format!("chart m-plane needs {want} numbers, got {}", flat.len())));
        }
        let points: Vec<Vec<f64>> = flat[..(l + 1) * q].chunks(q).map(<[f64]>::to_vec).collect();
        let cols: Vec<Vec<f64>> = flat[(l + 1) * q..].chunks(q).map(<[f64]>::to_vec).collect();
        let direction = if k == 0 { Subspace::zero(q) } else { Subspace::from_vectors(&cols)? };
        ChartMPlane::from_parts(l, n, direction, &points)
    }
}

fn affine_meets_box(a: &[f64], w: &Subspace) -> bool {
    if a.iter().all(|x| x.abs() <= 1.0 + BOX_SLACK) {
        return true;
    }
    if w.dim() == 0 {
        return false;
    }
    let mut x = a.to_vec();
    for _ in 0..20_000 {
        let y: Vec<f64> = x.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let gap: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        if gap < 1e-10 {
            return true;
        }
        let diff: Vec<f64> = y.iter().zip(a).map(|(p, q)| p - q).collect();
        let pr = w.project(&diff);
        let nx: Vec<f64> = a.iter().zip(&pr).map(|(p, q)| p + q).collect();
        let step: f64 = nx.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        x = nx;
        if step < 1e-15 {
            return false;
        }
    }
    false
}

/// `L ⊂ V` in chart form: every `x_j` lies on `v_j` within `tol`.
pub fn incidence(point: &ChartPoint, plane: &ChartMPlane, tol: f64) -> bool {
    if point.l != plane.l || point.n != plane.n {
        return false;
    }
    (0..=point.l).all(|j| {
        let diff: Vec<f64> = point.section(j).iter().zip(&plane.offsets[j]).map(|(a, b)| a - b).collect();
        plane.direction.residual(&diff) <= tol
    })
}

/// The product plane `v_0 × … × v_l` in ℝ^N, `N = (n−l)(l+1)`,
/// of dimension `k = (m−l)(l+1)`.
#[derive(Debug, Clone)]
pub struct TildePlane {
    plane: AffinePlane,
}

impl TildePlane {
    pub fn plane(&self) -> &AffinePlane {
        &self.plane
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.plane.contains_point(x, tol)
    }

    pub fn is_parallel(&self, other: &TildePlane) -> bool {
        self.plane.is_parallel(&other.plane)
    }
}

/// The (l+1)-fold block-diagonal copy of a subspace of ℝ^{n−l} in ℝ^N.
pub fn product_subspace(w: &Subspace, copies: usize) -> Subspace {
    let q = w.ambient_dim();
    let big = q * copies;
    let mut cols = Vec::with_capacity(w.dim() * copies);
    for t in 0..copies {
        for c in w.basis_vectors() {
            let mut v = vec![0.0; big];
            v[t * q..(t + 1) * q].copy_from_slice(&c);
            cols.push(v);
        }
    }
    if cols.is_empty() {
        return Subspace::zero(big);
    }
    Subspace::from_orthonormal(Matrix::from_columns(big, &cols).expect("finite")).expect("block copies stay orthonormal")
}

pub fn embed_tilde(plane: &ChartMPlane) -> TildePlane {
    let direction = product_subspace(&plane.direction, plane.l + 1);
    let offset = plane.offsets.concat();
    TildePlane { plane: AffinePlane { direction, offset } }
}

pub fn embed_tilde_point(point: &ChartPoint) -> Vec<f64> {
    point.coords.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn projective_lift_examples() {
        let x_axis = AffinePlane::new(Subspace::coordinate(2, &[0]), &[0.0, 0.0]).unwrap();
        let lift = to_projective(&x_axis);
        assert!(lift.approx_eq(&Subspace::coordinate(3, &[0, 2]), 1e-12));

        let (a, b) = (0.3, -0.7);
        let pt = AffinePlane::point(2, &[a, b]).unwrap();
        assert!(to_projective(&pt).approx_eq(&Subspace::from_vectors(&[vec![a, b, 1.0]]).unwrap(), 1e-12));
    }

    #[test]
    fn projective_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for i in 0..500 {
            let n = 2 + i % 4;
            let l = i % n;
            let p = AffinePlane::random(&mut rng, n, l, 2.0);
            let back = from_projective(&to_projective(&p)).unwrap();
            assert!(back.direction().approx_eq(p.direction(), 1e-10));
            let err = back.offset().iter().zip(p.offset()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10);
        }
        let flat = Subspace::coordinate(3, &[0, 1]);
        assert!(matches!(from_projective(&flat), Err(GkError::OutOfChart(_))));
    }

    #[test]
    fn affine_distance_of_two_points() {
        let p = AffinePlane::point(2, &[0.0, 0.0]).unwrap();
        let q = AffinePlane::point(2, &[1.0, 0.0]).unwrap();
        // Lines spanned by (0,0,1) and (1,0,1).
        let want = (1.0 / 2f64.sqrt()).acos();
        assert!((affine_distance(&p, &q).unwrap() - want).abs() < 1e-14);
        assert!(affine_distance(&p, &p).unwrap() < 1e-12);
    }

    #[test]
    fn rho_examples() {
        let a = AffinePlane::new(Subspace::coordinate(2, &[0]), &[0.0, 0.1]).unwrap();
        assert!(rho_distance(&a, &a).unwrap() < 1e-12);
        let b = AffinePlane::new(Subspace::coordinate(2, &[0]), &[0.0, -0.25]).unwrap();
        assert!((rho_distance(&a, &b).unwrap() - 0.35).abs() < 1e-12);
        let far = AffinePlane::new(Subspace::coordinate(2, &[0]), &[0.0, 0.7]).unwrap();
        assert!(matches!(rho_distance(&far, &a), Err(GkError::OutOfChart(_))));
    }

    /// Dense sampling of the boundary sphere of `B ∩ V_1` as an oracle.
    fn rho_by_sampling(v1: &AffinePlane, v2: &AffinePlane, rng: &mut ChaCha20Rng) -> f64 {
        let r = (1.0 - dot(v1.offset(), v1.offset())).sqrt();
        let basis = v1.direction().basis();
        let mut best: f64 = 0.0;
        for _ in 0..20_000 {
            let g: Vec<f64> = (0..v1.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let gn = norm(&g);
            let u: Vec<f64> = g.iter().map(|x| x * r / gn).collect();
            let mut y = v1.offset().to_vec();
            y.iter_mut().zip(basis.mul_vec(&u)).for_each(|(a, b)| *a += b);
            best = best.max(v2.distance_to_point(&y));
        }
        best
    }

    #[test]
    fn rho_matches_sampling_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for (n, l) in [(3, 1), (4, 2), (5, 2), (4, 3)] {
            for _ in 0..10 {
                let v1 = AffinePlane::random(&mut rng, n, l, 0.5);
                let v2 = AffinePlane::random(&mut rng, n, l, 0.5);
                let exact = rho_distance(&v1, &v2).unwrap();
                let sampled = rho_by_sampling(&v1, &v2, &mut rng);
                assert!(sampled <= exact + 1e-9, "sampled {sampled} above exact {exact}");
                assert!(exact - sampled < 0.05 * exact.max(1e-3), "n={n} l={l}: {exact} vs {sampled}");
            }
        }
    }

    #[test]
    fn chart_coords_examples() {
        let pt = AffinePlane::point(2, &[0.3, -0.2]).unwrap();
        assert_eq!(chart_coords(&pt).unwrap().flat(), &[0.3, -0.2]);

        // Line through (0.2, 0) and (0.5, 1).
        let line = AffinePlane::new(Subspace::from_vectors(&[vec![0.3, 1.0]]).unwrap(), &[0.2, 0.0]).unwrap();
        let c = chart_coords(&line).unwrap();
        assert!((c.flat()[0] - 0.2).abs() < 1e-12 && (c.flat()[1] - 0.5).abs() < 1e-12);

        let inside = AffinePlane::new(Subspace::coordinate(2, &[0]), &[0.0, 0.3]).unwrap();
        assert!(matches!(chart_coords(&inside), Err(GkError::OutOfChart(_))));

        let steep = AffinePlane::new(Subspace::from_vectors(&[vec![3.0, 1.0]]).unwrap(), &[0.0, 0.0]).unwrap();
        assert!(matches!(chart_coords(&steep), Err(GkError::OutOfChart(_))));
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for (l, n) in [(0, 2), (1, 2), (1, 3), (1, 4), (2, 4), (2, 5)] {
            for _ in 0..100 {
                let flat: Vec<f64> = (0..(l + 1) * (n - l)).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let p = ChartPoint::from_flat(l, n, flat.clone()).unwrap();
                let back = chart_coords(&p.to_plane()).unwrap();
                let err = back.flat().iter().zip(&flat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "l={l} n={n} err={err}");
            }
        }
    }

    fn random_chart_mplane(rng: &mut ChaCha20Rng, l: usize, m: usize, n: usize) -> ChartMPlane {
        loop {
            let w = Subspace::random(rng, n - l, m - l);
            let pts: Vec<Vec<f64>> = (0..=l).map(|_| (0..n - l).map(|_| rng.gen_range(-0.9..0.9)).collect()).collect();
            if let Ok(v) = ChartMPlane::new(l, n, w, &pts) {
                return v;
            }
        }
    }

    #[test]
    fn chart_mplane_round_trip_and_parameters() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for (l, m, n) in [(0, 1, 2), (1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 5)] {
            for _ in 0..30 {
                let v = random_chart_mplane(&mut rng, l, m, n);
                assert_eq!(v.to_plane().dim(), m);
                let back = ChartMPlane::from_plane(&v.to_plane(), l).unwrap();
                assert!(back.direction_w().approx_eq(v.direction_w(), 1e-10));
                for j in 0..=l {
                    let err = back.offsets()[j].iter().zip(&v.offsets()[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    assert!(err < 1e-10);
                }
                assert_eq!(v.free_parameters(), (m - l) * (n - m) + (l + 1) * (n - m));
                let flat = v.to_flat();
                assert_eq!(flat.len(), (l + 1) * (n - l) + (m - l) * (n - l));
                let again = ChartMPlane::from_flat(l, m, n, &flat).unwrap();
                assert!(again.direction_w().approx_eq(v.direction_w(), 1e-12));
            }
        }
    }

    #[test]
    fn incidence_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (l, m, n) = (1, 2, 4);
        for _ in 0..200 {
            let v = random_chart_mplane(&mut rng, l, m, n);
            let xs: Vec<Vec<f64>> = (0..=l)
                .map(|j| loop {
                    let t: Vec<f64> = (0..m - l).map(|_| rng.gen_range(-1.5..1.5)).collect();
                    let mut x = v.offsets()[j].clone();
                    x.iter_mut().zip(v.direction_w().basis().mul_vec(&t)).for_each(|(a, b)| *a += b);
                    if x.iter().all(|c| c.abs() <= 1.0) {
                        break x;
                    }
                })
                .collect();
            let p = ChartPoint::new(l, n, &xs).unwrap();
            assert!(incidence(&p, &v, INCIDENCE_TOL));
            // Point-sampling oracle: points of L lie in V.
            let lp = p.to_plane();
            let vp = v.to_plane();
            for s in [-0.7, 0.0, 0.4] {
                let mut y = lp.offset().to_vec();
                y.iter_mut().zip(lp.direction().basis().column(0)).for_each(|(a, b)| *a += s * b);
                assert!(vp.contains_point(&y, 1e-9));
            }
            // Push x_0 off v_0 along a normal by 0.1.
            let normal = v.direction_w().orthogonal_complement().basis().column(0);
            let mut moved = xs.clone();
            moved[0].iter_mut().zip(&normal).for_each(|(a, b)| *a = (*a + 0.1 * b).clamp(-1.0, 1.0));
            let q = ChartPoint::new(l, n, &moved).unwrap();
            let off = v.section(0).distance_to_point(q.section(0));
            assert_eq!(incidence(&q, &v, 1e-6), off <= 1e-6);
            assert_eq!(incidence(&q, &v, 1e-6), vp.contains_plane(&q.to_plane(), 1e-6));
        }
    }

    #[test]
    fn tilde_embedding() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        // l = 0 is the identity embedding.
        let v = random_chart_mplane(&mut rng, 0, 1, 2);
        let t = embed_tilde(&v);
        assert!(t.plane().direction().approx_eq(v.direction_w(), 1e-12));
        assert_eq!(t.plane().offset(), &v.offsets()[0][..]);

        let (l, m, n) = (1, 2, 4);
        let a = random_chart_mplane(&mut rng, l, m, n);
        let b = ChartMPlane::new(l, n, a.direction_w().clone(), &[vec![0.1, 0.2, -0.3], vec![0.0, 0.5, 0.5]]).unwrap();
        let c = random_chart_mplane(&mut rng, l, m, n);
        assert!(embed_tilde(&a).is_parallel(&embed_tilde(&b)));
        assert!(!embed_tilde(&a).is_parallel(&embed_tilde(&c)));
        let perp = product_subspace(&a.direction_w().orthogonal_complement(), l + 1);
        let td = embed_tilde(&a);
        assert!(td.plane().direction().orthogonal_complement().approx_eq(&perp, 1e-10));
    }
}
