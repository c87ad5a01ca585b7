//! The anisotropic dilation that blows a `K^{-1}`-slab up to the unit chart.

use crate::affine::{ChartMPlane, ChartPoint};
use crate::error::{GkError, Result};
use crate::grassmann::Subspace;
use crate::linalg::Matrix;

/// `𝓛(x) = P(x − o) + K(I − P)(x − o)` on each factor, where `P` projects onto
/// the section direction of the slab core and `o` is its offset.
#[derive(Debug, Clone)]
pub struct SlabRescaling {
    l: usize,
    n: usize,
    k: f64,
    origin: Vec<Vec<f64>>,
    factor: Matrix,
}

pub fn rescale_slab(core: &ChartMPlane, k: f64) -> Result<SlabRescaling> {
    if !(k.is_finite() && k > 0.0) {
        return Err(GkError::InvalidInput(format!("dilation factor must be positive, got {k}")));
    }
    let q = core.n() - core.l();
    let p = core.direction_w().projector();
    let id = Matrix::identity(q);
    let factor = Matrix::new(q, q, p.as_slice().iter().zip(id.as_slice()).map(|(pv, iv)| pv + k * (iv - pv)).collect())?;
    Ok(SlabRescaling { l: core.l(), n: core.n(), k, origin: core.offsets().to_vec(), factor })
}

impl SlabRescaling {
    pub fn k(&self) -> f64 {
        self.k
    }

    /// The per-factor linear part `P + K(I − P)`.
    pub fn linear_part(&self) -> &Matrix {
        &self.factor
    }

    /// Image of a flat chart vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let q = self.n - self.l;
        x.chunks(q)
            .zip(&self.origin)
            .flat_map(|(xj, oj)| {
                let d: Vec<f64> = xj.iter().zip(oj).map(|(a, b)| a - b).collect();
                self.factor.mul_vec(&d)
            })
            .collect()
    }

    pub fn apply_point(&self, pt: &ChartPoint) -> Vec<f64> {
        self.apply(pt.flat())
    }

    /// Image of a chart m-plane, which stays a product of parallel sections.
    /// The result may leave the unit chart.
    pub fn apply_plane(&self, v: &ChartMPlane) -> Result<ChartMPlane> {
        if v.l() != self.l || v.n() != self.n {
            return Err(GkError::InvalidInput("plane lives in a different chart".into()));
        }
        let dir = if v.direction_w().dim() == 0 {
            Subspace::zero(self.n - self.l)
        } else {
            v.direction_w().transform(&self.factor)?
        };
        let flat: Vec<f64> = v.offsets().concat();
        let img = self.apply(&flat);
        let q = self.n - self.l;
        let points: Vec<Vec<f64>> = img.chunks(q).map(<[f64]>::to_vec).collect();
        ChartMPlane::from_parts(self.l, self.n, dir, &points)
    }
}
