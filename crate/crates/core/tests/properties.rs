use grasskit::affine::{chart_coords, embed_tilde, embed_tilde_point, incidence, ChartMPlane, ChartPoint};
use grasskit::discretize::{
    box_count, box_dimension_fit, build_net, check_spacing, partition_spacing, section_distance, GridCounter, SlabNeighborhood,
};
use grasskit::engine::bl::{bl_constant_lower, bl_constant_lower_with};
use grasskit::engine::family::admissible_p_max;
use grasskit::engine::{
    generate_sharp_example, rescale_slab, verify_bl_bound, CandidateStrategy, FamilyParams, PlaneFamily, TransverseTuple,
};
use grasskit::grassmann::{distance, project_to_sub_grassmannian, Geodesic};
use grasskit::linalg::{gram_volume, intersect, rank, Matrix};
use grasskit::Subspace;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn orthogonal(r: &mut ChaCha20Rng, n: usize) -> Matrix {
    Subspace::random(r, n, n).basis().clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn svd_reconstructs(seed: u64, rows in 1usize..7, cols in 1usize..7) {
        let a = random_matrix(&mut rng(seed), rows, cols);
        let s = a.svd().unwrap();
        prop_assert!(s.reconstruct().max_abs_diff(&a) <= 1e-10);
    }

    #[test]
    fn gram_volume_is_rotation_invariant(seed: u64, n in 2usize..6, k in 1usize..4) {
        let mut r = rng(seed);
        let k = k.min(n);
        let vs: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let q = orthogonal(&mut r, n);
        let rotated: Vec<Vec<f64>> = vs.iter().map(|v| q.mul_vec(v)).collect();
        prop_assert!((gram_volume(&vs).unwrap() - gram_volume(&rotated).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn intersection_dimension_formula(seed: u64, n in 2usize..7, a in 0usize..7, b in 0usize..7) {
        let mut r = rng(seed);
        let (a, b) = (a.min(n), b.min(n));
        let u = Subspace::random(&mut r, n, a);
        // Share a random piece of u with w half the time so the intersection is not generic.
        let w = if a > 0 && b > 0 && r.gen_bool(0.5) {
            let shared = u.random_subspace(&mut r, 1);
            let rest = Subspace::random(&mut r, n, b - 1);
            shared.sum(&rest).unwrap()
        } else {
            Subspace::random(&mut r, n, b)
        };
        let mut cols = u.basis_vectors();
        cols.extend(w.basis_vectors());
        let rk = if cols.is_empty() { 0 } else { rank(&Matrix::from_columns(n, &cols).unwrap()).unwrap() };
        prop_assert_eq!(intersect(&u, &w).unwrap().dim(), u.dim() + w.dim() - rk);
    }

    #[test]
    fn distance_is_orthogonally_invariant(seed: u64, n in 2usize..6, l in 1usize..4) {
        let mut r = rng(seed);
        let l = l.min(n);
        let v = Subspace::random(&mut r, n, l);
        let w = Subspace::random(&mut r, n, l);
        let q = orthogonal(&mut r, n);
        let d0 = distance(&v, &w).unwrap();
        let d1 = distance(&v.transform(&q).unwrap(), &w.transform(&q).unwrap()).unwrap();
        prop_assert!((d0 - d1).abs() <= 1e-9);
        prop_assert!((d0 - distance(&w, &v).unwrap()).abs() <= 1e-9);
        prop_assert!(distance(&v, &v).unwrap() <= 1e-9);
    }

    #[test]
    fn triangle_inequality(seed: u64) {
        let mut r = rng(seed);
        let [a, b, c] = [(); 3].map(|_| Subspace::random(&mut r, 4, 2));
        let ab = distance(&a, &b).unwrap();
        prop_assert!(distance(&a, &c).unwrap() + distance(&c, &b).unwrap() - ab >= -1e-9);
    }

    #[test]
    fn geodesics_stay_in_a_containing_subspace(seed: u64, t in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let pi = Subspace::random(&mut r, 5, 3);
        let a = pi.random_subspace(&mut r, 2);
        let b = pi.random_subspace(&mut r, 2);
        let g = Geodesic::new(&a, &b).unwrap();
        let p = g.at(t);
        prop_assert!(pi.containment_residual(&p) <= 1e-8);
        prop_assert!((distance(&a, &p).unwrap() - t * g.length()).abs() <= 1e-8);
    }

    #[test]
    fn projection_is_minimal(seed: u64, n in 3usize..6) {
        let mut r = rng(seed);
        let v = Subspace::random(&mut r, n, 1);
        let pi = Subspace::random(&mut r, n, 2);
        let p = project_to_sub_grassmannian(&v, &pi).unwrap();
        prop_assert!(pi.containment_residual(&p.subspace) <= 1e-9);
        for _ in 0..50 {
            let c = pi.random_subspace(&mut r, 1);
            prop_assert!(distance(&v, &c).unwrap() - p.distance >= -1e-6);
        }
    }

    #[test]
    fn chart_roundtrip(seed: u64, l in 0usize..3, extra in 1usize..3) {
        let n = l + extra;
        let mut r = rng(seed);
        let flat: Vec<f64> = (0..(n - l) * (l + 1)).map(|_| r.gen_range(-1.0..1.0)).collect();
        let pt = ChartPoint::from_flat(l, n, flat.clone()).unwrap();
        let back = chart_coords(&pt.to_plane()).unwrap();
        for (a, b) in back.flat().iter().zip(&flat) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn tilde_embedding_preserves_incidence(seed: u64, push in prop::bool::ANY) {
        let mut r = rng(seed);
        let (l, n) = (1, 4);
        let w = Subspace::random(&mut r, 3, 1);
        let pts: Vec<Vec<f64>> = (0..2).map(|_| (0..3).map(|_| r.gen_range(-0.3..0.3)).collect()).collect();
        let v = ChartMPlane::new(l, n, w.clone(), &pts).unwrap();
        let b = w.basis_vectors().remove(0);
        let mut sections: Vec<Vec<f64>> = v
            .offsets()
            .iter()
            .map(|a| {
                let t: f64 = r.gen_range(-0.3..0.3);
                a.iter().zip(&b).map(|(x, y)| x + t * y).collect()
            })
            .collect();
        if push {
            let nu = w.orthogonal_complement().basis_vectors().remove(0);
            sections[1].iter_mut().zip(&nu).for_each(|(x, u)| *x += 0.01 * u);
        }
        let pt = ChartPoint::new(l, n, &sections).unwrap();
        let direct = incidence(&pt, &v, 1e-9);
        prop_assert_eq!(direct, !push);
        prop_assert_eq!(direct, embed_tilde(&v).contains(&embed_tilde_point(&pt), 1e-9));

        // The same holds after blowing up a slab around a random core.
        let core_dir = Subspace::random(&mut r, 3, 1);
        let core = ChartMPlane::new(l, n, core_dir, &[vec![0.0; 3], vec![0.1, 0.0, -0.1]]).unwrap();
        let map = rescale_slab(&core, r.gen_range(1.0..32.0)).unwrap();
        let img = map.apply_plane(&v).unwrap();
        prop_assert_eq!(direct, embed_tilde(&img).contains(&map.apply(&embed_tilde_point(&pt)), 1e-8));
    }

    #[test]
    fn slab_membership_matches_section_distance(seed: u64) {
        let mut r = rng(seed);
        let delta = 1.0 / 32.0;
        let w = Subspace::random(&mut r, 3, 1);
        let core = ChartMPlane::new(1, 4, w, &[vec![0.1, 0.0, 0.2], vec![-0.1, 0.1, 0.0]]).unwrap();
        let slab = SlabNeighborhood::new(core.clone(), delta).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| r.gen_range(-0.3..0.3)).collect();
            let d = section_distance(&x, &core);
            // Rectangle membership implies sections within √(n−m)·δ, and
            // sections within δ imply membership.
            if slab.contains_flat(&x) {
                prop_assert!(d <= 2f64.sqrt() * delta + 1e-9);
            }
            if d <= delta {
                prop_assert!(slab.contains_flat(&x));
            }
        }
    }

    #[test]
    fn grid_keys_roundtrip(seed: u64, dim in 1usize..5) {
        let mut r = rng(seed);
        let g = GridCounter::new(1.0 / 64.0, dim).unwrap();
        let idx: Vec<u64> = (0..dim).map(|_| r.gen_range(0..g.side())).collect();
        prop_assert_eq!(g.unpack(g.pack(&idx)), idx);
    }

    #[test]
    fn partition_reunites_and_spaces(seed: u64, copies in 2usize..5) {
        let mut r = rng(seed);
        let delta = 1.0 / 64.0;
        let base: Vec<Vec<f64>> = (0..10).map(|i| vec![-0.8 + 0.15 * i as f64, r.gen_range(-0.5..0.5)]).collect();
        let mut pts = Vec::new();
        for c in 0..copies {
            for b in &base {
                pts.push(vec![b[0] + 1e-4 * c as f64, b[1]]);
            }
        }
        let s = 1.0;
        let m = check_spacing(&pts, delta, s).unwrap().worst_ratio.ceil();
        let parts = partition_spacing(&pts, delta, s, m).unwrap();
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..pts.len()).collect::<Vec<_>>());
        for part in &parts {
            let sub: Vec<Vec<f64>> = part.iter().map(|&i| pts[i].clone()).collect();
            prop_assert!(check_spacing(&sub, delta, s).unwrap().passes_with(1.0));
        }
    }

    #[test]
    fn p_max_lies_in_range(l in 0usize..4, dm in 0usize..4, dd in 0usize..4, beta_frac in 0.0f64..=1.0) {
        let m = l + dm;
        let d = m + dd;
        let beta = beta_frac * (m + 1) as f64;
        let p = admissible_p_max(l, m, d, beta).unwrap();
        prop_assert!(p >= 1.0);
        prop_assert!(p <= (d - m + 2) as f64);
    }

    #[test]
    fn bl_lower_bound_is_monotone_in_candidates(seed: u64) {
        let mut r = rng(seed);
        let ws: Vec<Subspace> = (0..3).map(|_| Subspace::random(&mut r, 4, 2)).collect();
        let p = r.gen_range(1.0..2.0);
        let s = CandidateStrategy::default();
        let base = bl_constant_lower(&ws, p, &s).unwrap().value;
        let extra: Vec<Subspace> = (0..4)
            .map(|_| {
                let k = r.gen_range(1..4);
                Subspace::random(&mut r, 4, k)
            })
            .collect();
        prop_assert!(bl_constant_lower_with(&ws, p, &s, &extra).unwrap().value >= base);
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn bl_single_weight_at_p_one(seed: u64, n in 1usize..6, k in 0usize..6) {
        let w = Subspace::random(&mut rng(seed), n, k.min(n));
        let v = bl_constant_lower(std::slice::from_ref(&w), 1.0, &CandidateStrategy::default()).unwrap().value;
        prop_assert_eq!(v, (n - w.dim()) as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bl_bound_holds_on_certified_tuples(seed: u64, which in 0usize..3, beta_frac in 0.0f64..=1.0, at_max in prop::bool::ANY) {
        let (l, m, d, n) = [(0, 1, 1, 2), (0, 1, 2, 3), (1, 2, 2, 4)][which];
        let beta = beta_frac * (l + 1) as f64;
        let params = FamilyParams::new(l, m, d, n, beta).unwrap();
        let p = if at_max { admissible_p_max(l, m, d, beta).unwrap() } else { 1.0 };
        let mut r = rng(seed);
        let dirs: Vec<Subspace> = (0..params.tuple_len()).map(|_| Subspace::random(&mut r, n - l, m - l)).collect();
        let tuple = TransverseTuple::from_directions(&dirs, 1e-6).unwrap();
        let strategy = CandidateStrategy { seed, ..CandidateStrategy::default() };
        let rep = verify_bl_bound(&tuple, &params, p, &strategy).unwrap();
        prop_assert!(!rep.violation, "{:?}", rep);
    }

    #[test]
    fn sharp_examples_are_spaced(level in 3i32..6, beta_frac in 0.0f64..=1.0, branch in 0usize..2) {
        let params = if branch == 0 {
            FamilyParams::new(0, 1, 1, 2, beta_frac).unwrap()
        } else {
            FamilyParams::new(0, 1, 2, 3, 2.0 * beta_frac).unwrap()
        };
        // The (0,1,2,3) family grows like δ^{-4}; keep it under ~4k members.
        let level = if branch == 1 { level.min(4) } else { level };
        let fam = generate_sharp_example(params, 2f64.powi(-level)).unwrap();
        prop_assert!(!fam.is_empty());
        let rep = fam.check_spacing().unwrap();
        prop_assert!(rep.passes_with(4.0), "{}", rep.worst_ratio);
        let back = PlaneFamily::from_json(&fam.to_json()).unwrap();
        prop_assert_eq!(back.len(), fam.len());
        for (a, b) in back.members.iter().zip(&fam.members) {
            let diff = a.to_flat().iter().zip(b.to_flat()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn product_sets_add_dimensions(seed: u64) {
        // A segment times three separated points: slope 1 + 0.
        let mut r = rng(seed);
        let ys: Vec<f64> = [-0.6, 0.0, 0.6].iter().map(|y| y + r.gen_range(-0.05..0.05)).collect();
        let deltas: Vec<f64> = (4..9).map(|j| 2f64.powi(-j)).collect();
        let counts: Vec<usize> = deltas
            .iter()
            .map(|&d| {
                let pts: Vec<Vec<f64>> = ys
                    .iter()
                    .flat_map(|&y| (0..(4.0 / d) as usize).map(move |i| vec![-0.99 + i as f64 * d / 2.0, y]))
                    .filter(|p| p[0] <= 0.99)
                    .collect();
                box_count(&pts, d).unwrap()
            })
            .collect();
        let fit = box_dimension_fit(&deltas, &counts).unwrap();
        prop_assert!((fit.slope - 1.0).abs() <= 0.1, "{}", fit.slope);
    }

    #[test]
    fn nets_are_separated_and_covering(seed: u64, dim in 1usize..3, level in 2i32..5) {
        let delta = 2f64.powi(-level);
        let net = build_net(dim, delta).unwrap();
        prop_assert!(net.min_separation() >= delta - 1e-12);
        let mut r = rng(seed);
        prop_assert!(net.covering_radius_estimate(&mut r, 200) <= delta + 1e-12);
    }
}
