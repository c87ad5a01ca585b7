//! Plane families in the chart, the admissible exponent range and the
//! two-branch sharp example built from dyadic Cantor sets.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::affine::ChartMPlane;
use crate::discretize::{self, check_scale, SpacingReport};
use crate::error::{GkError, Result};
use crate::grassmann::Subspace;
use crate::linalg::dot;

/// Largest family [`generate_sharp_example`] will materialize.
pub const MEMBER_CAP: usize = 1 << 22;

pub const FAMILY_SCHEMA_VERSION: u32 = 1;

/// `(l, m, d, n, β)` with `0 ≤ l ≤ m ≤ d < n` and `β ∈ [0, m+1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub l: usize,
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub beta: f64,
}

impl FamilyParams {
    pub fn new(l: usize, m: usize, d: usize, n: usize, beta: f64) -> Result<Self> {
        let p = FamilyParams { l, m, d, n, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let FamilyParams { l, m, d, n, beta } = *self;
        if !(l <= m && m <= d && d < n) {
            return Err(GkError::InvalidParams(format!("need 0 <= l <= m <= d < n, got l={l}, m={m}, d={d}, n={n}")));
        }
        if !(beta.is_finite() && (0.0..=(m + 1) as f64).contains(&beta)) {
            return Err(GkError::InvalidParams(format!("beta must lie in [0, m+1] = [0, {}], got {beta}", m + 1)));
        }
        Ok(())
    }

    /// `s = (m+1)(d−m) + β`.
    pub fn spacing_exponent(&self) -> f64 {
        ((self.m + 1) * (self.d - self.m)) as f64 + self.beta
    }

    /// `N = (n−l)(l+1)`.
    pub fn chart_dim(&self) -> usize {
        (self.n - self.l) * (self.l + 1)
    }

    /// `k = (m−l)(l+1)`.
    pub fn slab_dim(&self) -> usize {
        (self.m - self.l) * (self.l + 1)
    }

    /// `J = d−m+2`.
    pub fn tuple_len(&self) -> usize {
        self.d - self.m + 2
    }

    /// `(l+1)(d−l) + min{l+1, β}`.
    pub fn union_dimension(&self) -> f64 {
        ((self.l + 1) * (self.d - self.l)) as f64 + self.beta.min((self.l + 1) as f64)
    }
}

/// Which integer stands in for the unnamed symbol in the first term of the
/// exponent bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KReading {
    #[default]
    M,
    L,
    /// `(m−l)(l+1)`, the dimension of the product slabs.
    SlabDim,
}

fn ratio_or_inf(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// `min{(d−k+β+1)/(d−k+β), (d+β)/(d+β−1/J), J}` with `J = d−m+2`. A term
/// whose denominator is not positive imposes no constraint.
pub fn admissible_p_max(l: usize, m: usize, d: usize, beta: f64) -> Result<f64> {
    admissible_p_max_with(l, m, d, beta, KReading::M)
}

pub fn admissible_p_max_with(l: usize, m: usize, d: usize, beta: f64, reading: KReading) -> Result<f64> {
    if !(l <= m && m <= d) {
        return Err(GkError::InvalidParams(format!("need l <= m <= d, got l={l}, m={m}, d={d}")));
    }
    if !(beta.is_finite() && (0.0..=(m + 1) as f64).contains(&beta)) {
        return Err(GkError::InvalidParams(format!("beta must lie in [0, m+1] = [0, {}], got {beta}", m + 1)));
    }
    let k = match reading {
        KReading::M => m,
        KReading::L => l,
        KReading::SlabDim => (m - l) * (l + 1),
    } as f64;
    let j = (d - m + 2) as f64;
    let d = d as f64;
    let first = ratio_or_inf(d - k + beta + 1.0, d - k + beta);
    let second = ratio_or_inf(d + beta, d + beta - 1.0 / j);
    Ok(first.min(second).min(j))
}

/// A δ-separated family of chart m-planes with its parameters.
#[derive(Debug, Clone)]
pub struct PlaneFamily {
    pub params: FamilyParams,
    pub delta: f64,
    pub members: Vec<ChartMPlane>,
}

#[derive(Serialize, Deserialize)]
struct FamilyJson {
    schema_version: u32,
    params: FamilyParams,
    delta: f64,
    spacing_exponent: f64,
    members: Vec<Vec<f64>>,
}

impl PlaneFamily {
    pub fn new(params: FamilyParams, delta: f64, members: Vec<ChartMPlane>) -> Result<Self> {
        params.validate()?;
        check_scale(delta)?;
        for v in &members {
            if v.l() != params.l || v.m() != params.m || v.n() != params.n {
                return Err(GkError::InvalidInput("member shape does not match family parameters".into()));
            }
        }
        Ok(PlaneFamily { params, delta, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn spacing_exponent(&self) -> f64 {
        self.params.spacing_exponent()
    }

    /// Metric embedding of the members used for ball counts.
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(member_features).collect()
    }

    pub fn check_spacing(&self) -> Result<SpacingReport> {
        discretize::check_spacing(&self.features(), self.delta, self.spacing_exponent())
    }

    pub fn to_json(&self) -> String {
        let doc = FamilyJson {
            schema_version: FAMILY_SCHEMA_VERSION,
            params: self.params,
            delta: self.delta,
            spacing_exponent: self.spacing_exponent(),
            members: self.members.iter().map(ChartMPlane::to_flat).collect(),
        };
        serde_json::to_string(&doc).expect("family serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "schema_version": FAMILY_SCHEMA_VERSION,
            "params": self.params,
            "delta": self.delta,
            "spacing_exponent": self.spacing_exponent(),
            "members": self.members.iter().map(ChartMPlane::to_flat).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FamilyJson = serde_json::from_str(text)?;
        if doc.schema_version != FAMILY_SCHEMA_VERSION {
            return Err(GkError::InvalidInput(format!("unsupported family schema_version {}", doc.schema_version)));
        }
        let p = doc.params;
        p.validate()?;
        let members = doc
            .members
            .iter()
            .map(|flat| ChartMPlane::from_flat(p.l, p.m, p.n, flat))
            .collect::<Result<Vec<_>>>()?;
        PlaneFamily::new(p, doc.delta, members)
    }
}

/// Offsets `a_0, …, a_l` followed by `vec(P_W)/√2`, so that two members with
/// equal offsets sit at distance `‖P_W − P_W'‖_F/√2`.
pub fn member_features(v: &ChartMPlane) -> Vec<f64> {
    let mut out: Vec<f64> = v.offsets().concat();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    out.extend(v.direction_w().projector().as_slice().iter().map(|x| x * s));
    out
}

/// Exponent `J` with `δ = 2^{-J}`.
pub fn dyadic_level(delta: f64) -> Result<u32> {
    check_scale(delta)?;
    let j = (1.0 / delta).log2().round();
    if (2f64.powi(-(j as i32)) - delta).abs() > 1e-12 * delta {
        return Err(GkError::InvalidScale(delta));
    }
    Ok(j as u32)
}

/// Points of a dyadic Cantor set of box dimension `b ∈ [0,1]` inside
/// `[lo, hi)`, resolved down to intervals of length about 2δ.
///
/// Level `i` keeps both halves of every interval when `⌊b·i⌋` increases and
/// only the left half otherwise, so the final level holds `2^{⌊b·J⌋}`
/// intervals. Each contributes the point three eighths of the way in, which
/// keeps it off the dyadic grid lines and cell centres at scale δ. With
/// `b = 0` the single point is the midpoint of the range.
pub fn cantor_points(lo: f64, hi: f64, b: f64, delta: f64) -> Vec<f64> {
    let len = hi - lo;
    if b <= 0.0 {
        return vec![lo + 0.5 * len];
    }
    let levels = (len / (2.0 * delta)).log2().floor().max(0.0) as u32;
    let mut starts = vec![lo];
    let mut width = len;
    for i in 1..=levels {
        width /= 2.0;
        let split = (b * i as f64 + 1e-9).floor() > (b * (i - 1) as f64 + 1e-9).floor();
        if split {
            starts = starts.iter().flat_map(|&s| [s, s + width]).collect();
        }
    }
    starts.into_iter().map(|s| s + 0.375 * width).collect()
}

/// Splits a total dimension over `slots` coordinates: ones first, then the
/// fractional remainder, then zeros.
pub fn spread_dimension(total: f64, slots: usize) -> Vec<f64> {
    let mut left = total;
    (0..slots)
        .map(|_| {
            let b = left.clamp(0.0, 1.0);
            left -= b;
            b
        })
        .collect()
}

/// Orthonormal basis of `span{[I; B]}` placed on `coords` of ℝ^q, where `B`
/// is `(coords.len() − k) × k` in row-major order.
fn graph_subspace(q: usize, coords: &[usize], k: usize, b: &[f64]) -> Result<Subspace> {
    if k == 0 {
        return Ok(Subspace::zero(q));
    }
    let rest = coords.len() - k;
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut v = vec![0.0; q];
            v[coords[c]] = 1.0;
            for r in 0..rest {
                v[coords[k + r]] = b[r * k + c];
            }
            v
        })
        .collect();
    Subspace::from_vectors(&cols)
}

/// Orthonormal basis of the part of `span{e_i : i ∈ coords}` orthogonal to
/// the graph subspace: Gram–Schmidt on the columns of `[−Bᵀ; I]`, which
/// varies continuously with `B`.
fn graph_normals(q: usize, coords: &[usize], k: usize, b: &[f64]) -> Vec<Vec<f64>> {
    let rest = coords.len() - k;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rest);
    for r in 0..rest {
        let mut v = vec![0.0; q];
        for c in 0..k {
            v[coords[c]] = -b[r * k + c];
        }
        v[coords[k + r]] = 1.0;
        for u in &out {
            let c = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
        }
        let nrm = dot(&v, &v).sqrt();
        out.push(v.into_iter().map(|x| x / nrm).collect());
    }
    out
}

/// One parameter axis of the construction: its leaf values.
struct Axis {
    values: Vec<f64>,
}

fn enumerate(axes: &[Axis]) -> Result<Vec<Vec<f64>>> {
    let total = axes.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()));
    match total {
        Some(t) if t <= MEMBER_CAP => {}
        _ => return Err(GkError::ResourceCap(format!("sharp example would exceed {MEMBER_CAP} members"))),
    }
    let mut out = vec![Vec::with_capacity(axes.len())];
    for a in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                a.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

/// The sharp example at scale δ.
///
/// For `β ≤ l+1`: `Y` is a β-dimensional Cantor product over the `I_j`
/// coordinates (the first `n−d` chart coordinates of each factor), and over
/// each `y ∈ Y` every m-plane inside `V_d(y_0 + J_0, …, y_l + J_0)` is sampled
/// on a 2δ lattice (direction through a graph chart of G(m−l, d−l) in `J_0`,
/// offsets in `J_0 ⊖ W`).
///
/// For `β > l+1`: all members lie in the (d+1)-plane spanned by the first
/// `d+1−l` chart coordinates and the transverse directions; a
/// `((m+1)(d−m)+β)`-dimensional Cantor product of its chart parameters is
/// taken, offsets filled before directions.
pub fn generate_sharp_example(params: FamilyParams, delta: f64) -> Result<PlaneFamily> {
    params.validate()?;
    dyadic_level(delta)?;
    let FamilyParams { l, m, d, n, beta } = params;
    let q = n - l;
    let k = m - l;
    let branch_two = beta <= (l + 1) as f64;

    // Chart coordinates of each factor that hold the sections.
    let (y_coords, e_coords): (Vec<usize>, Vec<usize>) =
        if branch_two { ((0..n - d).collect(), (n - d..q).collect()) } else { (vec![], (0..d + 1 - l).collect()) };
    let e_dim = e_coords.len();
    let b_len = (e_dim - k) * k;
    let c_len = e_dim - k;
    let c_half = if c_len > 0 { 1.0 / (c_len as f64).sqrt() } else { 1.0 };

    let y_slots = (l + 1) * y_coords.len();
    let c_slots = (l + 1) * c_len;
    let (y_dims, c_dims, b_dims) = if branch_two {
        (spread_dimension(beta, y_slots), vec![1.0; c_slots], vec![1.0; b_len])
    } else {
        let target = ((m + 1) * (d - m)) as f64 + beta;
        let all = spread_dimension(target, c_slots + b_len);
        (vec![], all[..c_slots].to_vec(), all[c_slots..].to_vec())
    };

    let mut axes: Vec<Axis> = Vec::new();
    axes.extend(y_dims.iter().map(|&b| Axis { values: cantor_points(-1.0, 1.0, b, delta) }));
    axes.extend(b_dims.iter().map(|&b| Axis { values: cantor_points(-1.0, 1.0, b, delta) }));
    axes.extend(c_dims.iter().map(|&b| Axis { values: cantor_points(-c_half, c_half, b, delta) }));

    let mut members = Vec::new();
    for p in enumerate(&axes)? {
        let (ys, rest) = p.split_at(y_slots);
        let (bs, cs) = rest.split_at(b_len);
        let w = graph_subspace(q, &e_coords, k, bs)?;
        let normals = graph_normals(q, &e_coords, k, bs);
        let points: Vec<Vec<f64>> = (0..=l)
            .map(|j| {
                let mut a = vec![0.0; q];
                for (t, &c) in y_coords.iter().enumerate() {
                    a[c] = ys[j * y_coords.len() + t];
                }
                for (t, nu) in normals.iter().enumerate() {
                    let coef = cs[j * c_len + t];
                    a.iter_mut().zip(nu).for_each(|(x, v)| *x += coef * v);
                }
                a
            })
            .collect();
        members.push(ChartMPlane::new(l, n, w, &points)?);
    }
    PlaneFamily::new(params, delta, members)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_max_examples() {
        assert!((admissible_p_max(0, 1, 1, 1.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        // d = m caps p at 2 through the third term.
        for beta in [0.0, 0.5, 1.0, 2.0] {
            assert!(admissible_p_max(0, 2, 2, beta).unwrap() <= 2.0);
        }
        // β = 0 and d = m: the first term has no constraint.
        assert_eq!(admissible_p_max(0, 1, 1, 0.0).unwrap(), 2.0);
        assert!(admissible_p_max(1, 0, 1, 0.5).is_err());
        assert!(admissible_p_max(0, 1, 1, 2.5).is_err());
    }

    #[test]
    fn p_max_exceeds_one_exhaustively() {
        for n in 1..=6usize {
            for d in 0..n {
                for m in 0..=d {
                    for l in 0..=m {
                        for i in 1..=8 {
                            let beta = (m + 1) as f64 * i as f64 / 8.0;
                            let p = admissible_p_max(l, m, d, beta).unwrap();
                            assert!(p > 1.0, "l={l} m={m} d={d} beta={beta}: {p}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn readings_differ_only_in_first_term() {
        let a = admissible_p_max_with(1, 2, 3, 0.5, KReading::M).unwrap();
        let b = admissible_p_max_with(1, 2, 3, 0.5, KReading::L).unwrap();
        let c = admissible_p_max_with(1, 2, 3, 0.5, KReading::SlabDim).unwrap();
        let second = (3.5) / (3.5 - 1.0 / 3.0);
        assert!((a - (2.5f64 / 1.5).min(second)).abs() < 1e-15);
        assert!((b - (3.5f64 / 2.5).min(second)).abs() < 1e-15);
        assert!((c - (2.5f64 / 1.5).min(second)).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(FamilyParams::new(0, 1, 1, 2, 1.0).is_ok());
        assert!(matches!(FamilyParams::new(0, 1, 2, 2, 1.0), Err(GkError::InvalidParams(_))));
        assert!(matches!(FamilyParams::new(0, 1, 1, 2, 3.0), Err(GkError::InvalidParams(_))));
        assert!(matches!(FamilyParams::new(2, 1, 1, 2, 0.0), Err(GkError::InvalidParams(_))));
    }

    #[test]
    fn cantor_counts() {
        // Oracle: 2^{⌊bJ⌋} leaves when [-1,1) is cut down to width 2δ.
        for (b, jexp) in [(0.5, 8u32), (1.0, 6), (0.3, 10), (0.75, 7)] {
            let delta = 2f64.powi(-(jexp as i32));
            let pts = cantor_points(-1.0, 1.0, b, delta);
            let expect = 2usize.pow((b * jexp as f64 + 1e-9).floor() as u32);
            assert_eq!(pts.len(), expect, "b={b}");
            for w in pts.windows(2) {
                assert!(w[1] - w[0] >= 2.0 * delta - 1e-12);
            }
            assert!(pts.iter().all(|x| (-1.0..1.0).contains(x)));
        }
        assert_eq!(cantor_points(-1.0, 1.0, 0.0, 0.01), vec![0.0]);
    }

    #[test]
    fn sharp_example_count_matches_cantor_oracle() {
        let delta = 2f64.powi(-8);
        let fam = generate_sharp_example(FamilyParams::new(0, 1, 1, 2, 0.5).unwrap(), delta).unwrap();
        let ratio = fam.len() as f64 / delta.powf(-0.5);
        assert!((0.25..=4.0).contains(&ratio), "{}", fam.len());
        // Vertical lines through the Cantor points.
        for v in &fam.members {
            assert!(v.direction_w().approx_eq(&Subspace::coordinate(2, &[1]), 1e-12));
            assert_eq!(v.offsets()[0][1], 0.0);
        }
    }

    #[test]
    fn full_dimensional_branch_one() {
        // β = m+1, d = m: every chart line in the plane.
        let delta = 2f64.powi(-4);
        let fam = generate_sharp_example(FamilyParams::new(0, 1, 1, 2, 2.0).unwrap(), delta).unwrap();
        let expect = delta.powi(-2);
        let ratio = fam.len() as f64 / expect;
        assert!((0.1..=10.0).contains(&ratio), "{}", fam.len());
        assert!(fam.check_spacing().unwrap().passes_with(4.0));
    }

    #[test]
    fn sharp_examples_respect_spacing() {
        let cases = [
            (0, 1, 1, 2, 0.0, 6),
            (0, 1, 1, 2, 1.0, 6),
            (0, 1, 2, 3, 0.5, 3),
            (1, 1, 2, 3, 1.0, 3),
            (0, 2, 2, 3, 2.5, 3),
            (1, 2, 2, 4, 1.5, 2),
        ];
        for (l, m, d, n, beta, j) in cases {
            let p = FamilyParams::new(l, m, d, n, beta).unwrap();
            let fam = generate_sharp_example(p, 2f64.powi(-j)).unwrap();
            assert!(!fam.is_empty());
            let rep = fam.check_spacing().unwrap();
            assert!(rep.passes_with(4.0), "{p:?}: ratio {}", rep.worst_ratio);
            let feats = fam.features();
            let net = crate::discretize::DeltaNet { scale: fam.delta, dim: feats[0].len(), points: feats, resolution: 0.0 };
            assert!(net.min_separation() >= fam.delta - 1e-12, "{p:?}");
        }
    }

    #[test]
    fn branch_two_members_lie_over_y() {
        let p = FamilyParams::new(1, 1, 2, 3, 1.0).unwrap();
        let fam = generate_sharp_example(p, 0.125).unwrap();
        // Four chart coordinates: (y_0, c_0, y_1, c_1); β = 1 fills y_0 only.
        for v in &fam.members {
            assert_eq!(v.offsets()[1][0], 0.0);
            assert_eq!(v.direction_w().dim(), 0);
        }
        assert_eq!(fam.len(), 8 * 8 * 8);
    }

    #[test]
    fn json_roundtrip() {
        let p = FamilyParams::new(0, 1, 2, 3, 0.5).unwrap();
        let fam = generate_sharp_example(p, 0.25).unwrap();
        let text = fam.to_json();
        let back = PlaneFamily::from_json(&text).unwrap();
        assert_eq!(back.len(), fam.len());
        assert_eq!(back.params, fam.params);
        for (a, b) in fam.members.iter().zip(&back.members) {
            assert!(a.direction_w().approx_eq(b.direction_w(), 1e-12));
            for (x, y) in a.offsets().iter().zip(b.offsets()) {
                assert!(x.iter().zip(y).all(|(s, t)| (s - t).abs() < 1e-12));
            }
        }
        assert_eq!(serde_json::from_str::<serde_json::Value>(&text).unwrap(), fam.to_json_value());
        assert!(PlaneFamily::from_json("{\"schema_version\": 1}").is_err());
    }
}
