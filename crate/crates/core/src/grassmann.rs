//! The linear Grassmannian G(l, n): principal angles, the invariant
//! distance, explicit geodesics and nearest-point projection onto a
//! sub-Grassmannian G(l, Π).

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GkError, Result};
use crate::linalg::{self, column_span, complete_basis, dot, orthonormalize, svd, Matrix};

/// Angles within this of zero are treated as zero when building geodesics.
const ANGLE_EPS: f64 = 1e-12;

/// Subspaces are equal when every principal angle is at most this.
pub const EQUALITY_TOL: f64 = 1e-9;

/// A linear subspace of ℝⁿ held as an orthonormal basis (the columns of an
/// `n×l` matrix). The zero subspace is allowed and has `dim() == 0`.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: Matrix,
}

impl Subspace {
    /// Spans the given vectors; they must be linearly independent.
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        Ok(Subspace { basis: orthonormalize(vectors)? })
    }

    /// Spans the columns of `m`, dropping dependent directions.
    pub fn from_basis(m: &Matrix) -> Result<Self> {
        Ok(Subspace { basis: column_span(m)? })
    }

    /// Spans arbitrary (possibly dependent) vectors in ℝ^ambient.
    pub fn span(ambient: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        Subspace::from_basis(&Matrix::from_columns(ambient, vectors)?)
    }

    /// Wraps a matrix whose columns are already orthonormal (checked).
    pub fn from_orthonormal(m: Matrix) -> Result<Self> {
        let gram = m.transpose().matmul(&m);
        if gram.max_abs_diff(&Matrix::identity(m.cols())) > 1e-10 {
            return Err(GkError::InvalidInput("basis columns are not orthonormal".into()));
        }
        Ok(Subspace { basis: m })
    }

    pub fn zero(ambient: usize) -> Self {
        Subspace { basis: Matrix::zeros(ambient, 0) }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace { basis: Matrix::identity(ambient) }
    }

    /// Span of the standard basis vectors with the given indices.
    pub fn coordinate(ambient: usize, indices: &[usize]) -> Self {
        let cols: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| {
                let mut e = vec![0.0; ambient];
                e[i] = 1.0;
                e
            })
            .collect();
        Subspace { basis: Matrix::from_columns(ambient, &cols).expect("finite") }
    }

    /// A Haar-random `dim`-dimensional subspace of ℝ^ambient.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, ambient: usize, dim: usize) -> Self {
        assert!(dim <= ambient, "dimension exceeds ambient dimension");
        if dim == 0 {
            return Subspace::zero(ambient);
        }
        loop {
            let vs: Vec<Vec<f64>> =
                (0..dim).map(|_| (0..ambient).map(|_| rng.sample(StandardNormal)).collect()).collect();
            if let Ok(s) = Subspace::from_vectors(&vs) {
                return s;
            }
        }
    }

    /// A random `dim`-dimensional subspace of `self`.
    pub fn random_subspace<R: Rng + ?Sized>(&self, rng: &mut R, dim: usize) -> Self {
        let inner = Subspace::random(rng, self.dim(), dim);
        Subspace { basis: self.basis.matmul(&inner.basis) }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn basis_vectors(&self) -> Vec<Vec<f64>> {
        self.basis.columns()
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        vector_projection(x, self)
    }

    /// `‖x − π(x)‖`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let p = self.project(x);
        x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// The projector `B Bᵀ`.
    pub fn projector(&self) -> Matrix {
        self.basis.matmul(&self.basis.transpose())
    }

    pub fn orthogonal_complement(&self) -> Subspace {
        let n = self.ambient_dim();
        let cols = complete_basis(n, &self.basis_vectors(), n - self.dim());
        Subspace { basis: Matrix::from_columns(n, &cols).expect("finite") }
    }

    /// Largest residual of `other`'s basis vectors against `self`.
    pub fn containment_residual(&self, other: &Subspace) -> f64 {
        other.basis_vectors().iter().map(|v| self.residual(v)).fold(0.0, f64::max)
    }

    /// Whether `other ⊆ self` within `tol`.
    pub fn contains(&self, other: &Subspace, tol: f64) -> bool {
        other.dim() <= self.dim() && self.containment_residual(other) <= tol
    }

    /// `self + other`.
    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        Subspace::from_basis(&self.basis.hstack(&other.basis))
    }

    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        linalg::intersect(self, other)
    }

    /// Subspace equality via principal angles, never via bases.
    pub fn approx_eq(&self, other: &Subspace, tol: f64) -> bool {
        if self.ambient_dim() != other.ambient_dim() || self.dim() != other.dim() {
            return false;
        }
        match principal_angles(self, other) {
            Ok(pa) => pa.angles.iter().all(|&a| a <= tol),
            Err(_) => false,
        }
    }

    /// Applies a linear map (`ambient'×ambient` matrix) and re-spans.
    pub fn transform(&self, q: &Matrix) -> Result<Subspace> {
        Subspace::from_basis(&q.matmul(&self.basis))
    }

    /// Embeds into ℝ^{ambient + extra} by zero padding at the end.
    pub fn pad(&self, extra: usize) -> Subspace {
        let n = self.ambient_dim();
        let cols: Vec<Vec<f64>> = self
            .basis_vectors()
            .into_iter()
            .map(|mut v| {
                v.resize(n + extra, 0.0);
                v
            })
            .collect();
        Subspace { basis: Matrix::from_columns(n + extra, &cols).expect("finite") }
    }
}

/// Principal angles `θ_1 ≤ … ≤ θ_l` and the aligned orthonormal bases
/// `{v_i}`, `{w_i}` with `v_i·w_j = δ_ij cos θ_i`.
#[derive(Debug, Clone)]
pub struct PrincipalAngleData {
    pub angles: Vec<f64>,
    pub aligned_v: Matrix,
    pub aligned_w: Matrix,
}

fn angles_between(v: &Subspace, w: &Subspace) -> Result<PrincipalAngleData> {
    if v.ambient_dim() != w.ambient_dim() {
        return Err(GkError::InvalidInput("principal angles: ambient dimensions differ".into()));
    }
    let l = v.dim();
    if l > w.dim() {
        return Err(GkError::InvalidInput("principal angles: first subspace is larger".into()));
    }
    if l == 0 {
        return Ok(PrincipalAngleData {
            angles: vec![],
            aligned_v: Matrix::zeros(v.ambient_dim(), 0),
            aligned_w: Matrix::zeros(v.ambient_dim(), 0),
        });
    }
    // Overlap matrix A_ij = v_i · w_j and its SVD.
    let overlap = v.basis.transpose().matmul(&w.basis);
    let s = svd(&overlap)?;
    let idx: Vec<usize> = (0..l).collect();
    let aligned_v = v.basis.matmul(&s.left);
    let aligned_w = w.basis.matmul(&s.right.select_columns(&idx));

    // arccos loses half the digits near 0; small angles come from the sines
    // of the residual of V against W, whose singular values pair with the
    // cosines in reverse order.
    let resid = v.basis.sub(&w.basis.matmul(&overlap.transpose()));
    let sines = svd(&resid)?.singular_values;
    let angles = (0..l)
        .map(|i| {
            let c = s.singular_values[i].clamp(0.0, 1.0);
            if c * c >= 0.5 {
                sines[l - 1 - i].clamp(0.0, 1.0).asin()
            } else {
                c.acos()
            }
        })
        .collect();
    Ok(PrincipalAngleData { angles, aligned_v, aligned_w })
}

pub fn principal_angles(v: &Subspace, w: &Subspace) -> Result<PrincipalAngleData> {
    if v.dim() != w.dim() {
        return Err(GkError::InvalidInput(format!(
            "principal angles need equal dimensions, got {} and {}",
            v.dim(),
            w.dim()
        )));
    }
    angles_between(v, w)
}

/// `d(V, W) = √(θ_1² + … + θ_l²)`.
pub fn distance(v: &Subspace, w: &Subspace) -> Result<f64> {
    let pa = principal_angles(v, w)?;
    Ok(pa.angles.iter().map(|a| a * a).sum::<f64>().sqrt())
}

/// The geodesic from `V` to `W` with its principal data precomputed.
#[derive(Debug, Clone)]
pub struct Geodesic {
    angles: Vec<f64>,
    start: Matrix,
    normal: Matrix,
    unique: bool,
}

impl Geodesic {
    pub fn new(v: &Subspace, w: &Subspace) -> Result<Self> {
        let pa = principal_angles(v, w)?;
        let n = v.ambient_dim();
        let mut normals = Vec::with_capacity(v.dim());
        let mut unique = true;
        for (i, &theta) in pa.angles.iter().enumerate() {
            let vi = pa.aligned_v.column(i);
            let wi = pa.aligned_w.column(i);
            if theta <= ANGLE_EPS {
                normals.push(vec![0.0; n]);
            } else if theta >= FRAC_PI_2 - ANGLE_EPS {
                unique = false;
                normals.push(wi);
            } else {
                // Gram-Schmidt of w_i against v_i inside span{v_i, w_i}.
                let c = dot(&vi, &wi);
                let mut perp: Vec<f64> = wi.iter().zip(&vi).map(|(w, v)| w - c * v).collect();
                let nrm = linalg::norm(&perp);
                perp.iter_mut().for_each(|x| *x /= nrm);
                normals.push(perp);
            }
        }
        Ok(Geodesic {
            angles: pa.angles,
            start: pa.aligned_v,
            normal: Matrix::from_columns(n, &normals)?,
            unique,
        })
    }

    /// `γ(t) = span{cos(tθ_i) v_i + sin(tθ_i) v_i^⊥}`.
    pub fn at(&self, t: f64) -> Subspace {
        let n = self.start.rows();
        let cols: Vec<Vec<f64>> = self
            .angles
            .iter()
            .enumerate()
            .map(|(i, &theta)| {
                let (s, c) = (t * theta).sin_cos();
                let v = self.start.column(i);
                let p = self.normal.column(i);
                v.iter().zip(&p).map(|(a, b)| c * a + s * b).collect()
            })
            .collect();
        let m = Matrix::from_columns(n, &cols).expect("finite");
        // Columns are orthonormal up to rounding; re-span to keep the invariant tight.
        Subspace::from_basis(&m).expect("geodesic points have full rank")
    }

    pub fn length(&self) -> f64 {
        self.angles.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// False when some principal angle is π/2 and the geodesic is not unique.
    pub fn is_unique(&self) -> bool {
        self.unique
    }
}

/// A point on a geodesic together with the uniqueness flag.
#[derive(Debug, Clone)]
pub struct GeodesicPoint {
    pub subspace: Subspace,
    pub unique: bool,
}

pub fn geodesic(v: &Subspace, w: &Subspace, t: f64) -> Result<GeodesicPoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(GkError::InvalidInput(format!("geodesic parameter {t} outside [0, 1]")));
    }
    let g = Geodesic::new(v, w)?;
    Ok(GeodesicPoint { subspace: g.at(t), unique: g.is_unique() })
}

/// Nearest point of G(l, Π) to `V`, with the distance and a uniqueness flag.
#[derive(Debug, Clone)]
pub struct Projection {
    pub subspace: Subspace,
    pub distance: f64,
    /// False when `π_Π` restricted to `V` drops rank, so minimizers tie.
    pub unique: bool,
}

/// Projects `V ∈ G(l, n)` onto the totally geodesic `G(l, Π)`, `dim Π ≥ l`,
/// via the principal vectors of `V` against `Π`.
pub fn project_to_sub_grassmannian(v: &Subspace, pi: &Subspace) -> Result<Projection> {
    if v.dim() > pi.dim() {
        return Err(GkError::InvalidInput(format!(
            "cannot project a {}-plane into a {}-dimensional subspace",
            v.dim(),
            pi.dim()
        )));
    }
    let pa = angles_between(v, pi)?;
    let subspace = Subspace::from_orthonormal(pa.aligned_w.clone())
        .or_else(|_| Subspace::from_basis(&pa.aligned_w))?;
    let distance = pa.angles.iter().map(|a| a * a).sum::<f64>().sqrt();
    let unique = pa.angles.iter().all(|&a| a < FRAC_PI_2 - 1e-10);
    Ok(Projection { subspace, distance, unique })
}

/// `min over W ∈ G(l, Π) of d(V, W)`.
pub fn distance_to_sub_grassmannian(v: &Subspace, pi: &Subspace) -> Result<f64> {
    Ok(project_to_sub_grassmannian(v, pi)?.distance)
}

pub fn vector_projection(x: &[f64], pi: &Subspace) -> Vec<f64> {
    let c = pi.basis.tr_mul_vec(x);
    pi.basis.mul_vec(&c)
}

/// Whether two subspaces agree as sets (principal angles ≤ [`EQUALITY_TOL`]).
pub fn same_subspace(a: &Subspace, b: &Subspace) -> bool {
    a.approx_eq(b, EQUALITY_TOL)
}
