//! Seeded invariant suites over the geometry modules. Each suite reports its
//! worst observed errors next to the tolerance it is judged against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::affine::{chart_coords, embed_tilde, embed_tilde_point, incidence, ChartMPlane, ChartPoint};
use crate::error::Result;
use crate::grassmann::{distance, project_to_sub_grassmannian, vector_projection, Geodesic, Subspace};
use crate::linalg::{rank, Matrix};

/// One measured quantity of a suite and the bound it must respect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteMetric {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `"max"`: value ≤ bound. `"min"`: value ≥ bound.
    pub kind: &'static str,
    pub passes: bool,
}

impl SuiteMetric {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        SuiteMetric { name: name.into(), value, bound, kind: "max", passes: value <= bound }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        SuiteMetric { name: name.into(), value, bound, kind: "min", passes: value >= bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub cases: usize,
    pub metrics: Vec<SuiteMetric>,
    pub passes: bool,
}

impl SuiteReport {
    fn new(suite: &str, seed: u64, cases: usize, metrics: Vec<SuiteMetric>) -> Self {
        let passes = metrics.iter().all(|m| m.passes);
        SuiteReport { suite: suite.into(), seed, cases, metrics, passes }
    }

    pub fn metric(&self, name: &str) -> Option<&SuiteMetric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

/// Distance symmetry, the triangle inequality, arc-length along geodesics
/// at t ∈ {1/4, 1/2, 3/4}, and containment of geodesics between planes of a
/// fixed hyperplane Π, on `pairs` random pairs in G(2, 4).
pub fn geodesic_suite(seed: u64, pairs: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let pi = Subspace::random(&mut rng, 4, 3);
    let mut sym: f64 = 0.0;
    let mut tri = f64::INFINITY;
    let mut arc: f64 = 0.0;
    let mut contain: f64 = 0.0;
    for _ in 0..pairs {
        let v = Subspace::random(&mut rng, 4, 2);
        let w = Subspace::random(&mut rng, 4, 2);
        let u = Subspace::random(&mut rng, 4, 2);
        let dvw = distance(&v, &w)?;
        sym = sym.max((dvw - distance(&w, &v)?).abs());
        tri = tri.min(distance(&v, &u)? + distance(&u, &w)? - dvw);
        let g = Geodesic::new(&v, &w)?;
        for t in [0.25, 0.5, 0.75] {
            arc = arc.max((distance(&v, &g.at(t))? - t * dvw).abs());
        }
        let a = pi.random_subspace(&mut rng, 2);
        let b = pi.random_subspace(&mut rng, 2);
        let g = Geodesic::new(&a, &b)?;
        for t in [0.25, 0.5, 0.75] {
            contain = contain.max(pi.containment_residual(&g.at(t)));
        }
    }
    Ok(SuiteReport::new(
        "geodesic",
        seed,
        pairs,
        vec![
            SuiteMetric::at_most("symmetry_error", sym, 1e-9),
            SuiteMetric::at_least("triangle_slack", if pairs == 0 { 0.0 } else { tri }, -1e-9),
            SuiteMetric::at_most("arc_length_error", arc, 1e-8),
            SuiteMetric::at_most("containment_residual", contain, 1e-8),
        ],
    ))
}

/// Projection of lines in ℝ³ onto G(1, Π) for random planes Π: the
/// projected line `π_Π(V)` lies in the result (rank test), and no random
/// competitor line of Π is closer to `V`.
pub fn projection_suite(seed: u64, cases: usize, competitors: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rank_failures = 0usize;
    let mut contain: f64 = 0.0;
    let mut slack = f64::INFINITY;
    for _ in 0..cases {
        let v = Subspace::random(&mut rng, 3, 1);
        let pi = Subspace::random(&mut rng, 3, 2);
        let proj = project_to_sub_grassmannian(&v, &pi)?;
        let w = &proj.subspace;
        let image: Vec<Vec<f64>> = v.basis_vectors().iter().map(|b| vector_projection(b, &pi)).collect();
        let mut cols = w.basis_vectors();
        cols.extend(image.iter().cloned());
        if rank(&Matrix::from_columns(3, &cols)?)? != w.dim() {
            rank_failures += 1;
        }
        for x in &image {
            let nrm = crate::linalg::norm(x);
            if nrm > 0.0 {
                contain = contain.max(w.residual(x) / nrm);
            }
        }
        for _ in 0..competitors {
            let c = pi.random_subspace(&mut rng, 1);
            slack = slack.min(distance(&v, &c)? - proj.distance);
        }
    }
    Ok(SuiteReport::new(
        "projection",
        seed,
        cases,
        vec![
            SuiteMetric::at_most("rank_failures", rank_failures as f64, 0.0),
            SuiteMetric::at_most("containment_residual", contain, 1e-8),
            SuiteMetric::at_least("minimality_slack", if cases * competitors == 0 { 0.0 } else { slack }, -1e-6),
        ],
    ))
}

fn random_section_point<R: Rng + ?Sized>(rng: &mut R, v: &ChartMPlane, j: usize) -> Vec<f64> {
    let mut x = v.offsets()[j].clone();
    for b in v.direction_w().basis_vectors() {
        let t: f64 = rng.gen_range(-0.3..0.3);
        x.iter_mut().zip(&b).for_each(|(xi, bi)| *xi += t * bi);
    }
    x
}

fn random_chart_plane<R: Rng + ?Sized>(rng: &mut R, l: usize, m: usize, n: usize, w: Subspace) -> Result<ChartMPlane> {
    let q = n - l;
    let points: Vec<Vec<f64>> = (0..=l).map(|_| (0..q).map(|_| rng.gen_range(-0.3..0.3)).collect()).collect();
    debug_assert_eq!(w.dim(), m - l);
    ChartMPlane::new(l, n, w, &points)
}

/// Incidence against the tilde embedding, and equality of section
/// directions against parallelism of the embedded planes, at (l, m, n) =
/// (1, 2, 4). Half the points are incident by construction, the rest are
/// pushed off one section by at least 1e-3; half the plane pairs share a
/// direction.
pub fn embedding_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let (l, m, n) = (1, 2, 4);
    let q = n - l;
    let tau = 1e-9;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut incidence_mismatch = 0usize;
    let mut parallel_mismatch = 0usize;
    let mut incident_cases = 0usize;
    for _ in 0..cases {
        let w = Subspace::random(&mut rng, q, m - l);
        let v = random_chart_plane(&mut rng, l, m, n, w)?;
        let mut sections: Vec<Vec<f64>> = (0..=l).map(|j| random_section_point(&mut rng, &v, j)).collect();
        if rng.gen_bool(0.5) {
            let j = rng.gen_range(0..=l);
            let normal = v.direction_w().orthogonal_complement().random_subspace(&mut rng, 1).basis_vectors().remove(0);
            let eps: f64 = rng.gen_range(1e-3..0.1);
            sections[j].iter_mut().zip(&normal).for_each(|(x, u)| *x += eps * u);
        }
        let pt = ChartPoint::new(l, n, &sections)?;
        let direct = incidence(&pt, &v, tau);
        incident_cases += direct as usize;
        if direct != embed_tilde(&v).contains(&embed_tilde_point(&pt), tau) {
            incidence_mismatch += 1;
        }

        let w2 = if rng.gen_bool(0.5) { v.direction_w().clone() } else { Subspace::random(&mut rng, q, m - l) };
        let v2 = random_chart_plane(&mut rng, l, m, n, w2)?;
        let same = v.direction_w().approx_eq(v2.direction_w(), 1e-9);
        if same != embed_tilde(&v).is_parallel(&embed_tilde(&v2)) {
            parallel_mismatch += 1;
        }
    }
    Ok(SuiteReport::new(
        "embedding",
        seed,
        cases,
        vec![
            SuiteMetric::at_most("incidence_disagreements", incidence_mismatch as f64, 0.0),
            SuiteMetric::at_most("parallel_disagreements", parallel_mismatch as f64, 0.0),
            SuiteMetric::at_least("incident_cases", incident_cases as f64, if cases >= 10 { 1.0 } else { 0.0 }),
        ],
    ))
}

/// `chart_coords ∘ to_plane` on random chart points of (l, n) = (1, 3).
pub fn chart_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let (l, n) = (1, 3);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let flat: Vec<f64> = (0..(n - l) * (l + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pt = ChartPoint::from_flat(l, n, flat)?;
        let back = chart_coords(&pt.to_plane())?;
        let e = back.flat().iter().zip(pt.flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        err = err.max(e);
    }
    Ok(SuiteReport::new("chart", seed, cases, vec![SuiteMetric::at_most("roundtrip_error", err, 1e-10)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_runs() {
        for r in [
            geodesic_suite(3, 50).unwrap(),
            projection_suite(3, 20, 20).unwrap(),
            embedding_suite(3, 100).unwrap(),
            chart_suite(3, 100).unwrap(),
        ] {
            assert!(r.passes, "{r:?}");
        }
    }

    #[test]
    fn suites_are_seeded() {
        assert_eq!(geodesic_suite(9, 20).unwrap(), geodesic_suite(9, 20).unwrap());
        assert_eq!(embedding_suite(9, 50).unwrap(), embedding_suite(9, 50).unwrap());
    }
}
