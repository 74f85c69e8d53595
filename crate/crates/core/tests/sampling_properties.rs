use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slowman::io::write_cloud;
use slowman::kinetics::{DavisSkodje, Linear2d};
use slowman::sampling::{
    box_vertices, enumerate_vertices, harvest, random_initial_condition, sample_weights, subsample, Polytope,
    SamplingPlan,
};
use slowman::{PointCloud, ScaledMetric};

const TETRAHEDRON: [[f64; 3]; 4] = [[1.8, 0.5, 0.0], [1.0, 0.0, 3.0], [0.0, 1.0, 1.5], [0.2, 0.0, 0.0]];

fn tetra_vertices() -> Vec<Vec<f64>> {
    TETRAHEDRON.iter().map(|v| v.to_vec()).collect()
}

/// Barycentric coordinates of `y` in the tetrahedron.
fn barycentric(y: &[f64]) -> Vector4<f64> {
    let mut a = Matrix4::zeros();
    for (j, v) in TETRAHEDRON.iter().enumerate() {
        for i in 0..3 {
            a[(i, j)] = v[i];
        }
        a[(3, j)] = 1.0;
    }
    a.lu().solve(&Vector4::new(y[0], y[1], y[2], 1.0)).unwrap()
}

/// Distance from `y` to the nearest facet plane of the tetrahedron.
fn facet_distance(y: &[f64]) -> f64 {
    let v = TETRAHEDRON.map(nalgebra::Vector3::from);
    let p = nalgebra::Vector3::new(y[0], y[1], y[2]);
    (0..4)
        .map(|skip| {
            let f: Vec<_> = (0..4).filter(|&k| k != skip).map(|k| v[k]).collect();
            let n = (f[1] - f[0]).cross(&(f[2] - f[0])).normalize();
            (p - f[0]).dot(&n).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn tetrahedron_draws_stay_inside() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2000 {
        let w = sample_weights(4, 1.5, &mut rng).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let y = random_initial_condition(&tetra_vertices(), &w).unwrap();
        assert!(y.iter().all(|v| *v >= 0.0));
        let b = barycentric(&y);
        assert!(b.iter().all(|c| *c >= -1e-12));
        assert!((b.sum() - 1.0).abs() < 1e-12);
        // the weights are the barycentric coordinates
        for (c, wi) in b.iter().zip(&w) {
            assert!((c - wi).abs() < 1e-10);
        }
    }
}

#[test]
fn exponent_pushes_samples_toward_facets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 500;
    let near = |ys: &[Vec<f64>]| ys.iter().filter(|y| facet_distance(y) < 0.05).count() as f64 / ys.len() as f64;
    let weighted: Vec<Vec<f64>> = (0..n)
        .map(|_| random_initial_condition(&tetra_vertices(), &sample_weights(4, 1.5, &mut rng).unwrap()).unwrap())
        .collect();
    let naive: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = z.iter().sum();
            let w: Vec<f64> = z.iter().map(|v| v / s).collect();
            random_initial_condition(&tetra_vertices(), &w).unwrap()
        })
        .collect();
    assert!(near(&weighted) > near(&naive), "{} vs {}", near(&weighted), near(&naive));
}

#[test]
fn unit_exponent_gives_flat_dirichlet() {
    // first coordinate of Dirichlet(1, 1, 1, 1) is Beta(1, 3): F(x) = 1 - (1 - x)^3
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    let mut xs: Vec<f64> = (0..n).map(|_| sample_weights(4, 1.0, &mut rng).unwrap()[0]).collect();
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (1.0 - x).powi(3);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // asymptotic critical value at alpha = 0.01
    let critical = 1.6276 / (n as f64).sqrt();
    assert!(ks < critical, "KS statistic {ks} exceeds {critical}");
    let mean = xs.iter().sum::<f64>() / n as f64;
    // Beta(1, 3) variance 3 / 80
    assert!((mean - 0.25).abs() < 3.0 * (3.0f64 / 80.0 / n as f64).sqrt());
}

/// Vertices from every zero pattern whose support columns are independent.
fn brute_force_vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<Vec<f64>> {
    let n = a.ncols();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mask in 0u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        // independent support columns need at most one per equality
        if support.is_empty() || support.len() > a.nrows() {
            continue;
        }
        let sub = a.select_columns(&support);
        let svd = sub.clone().svd(true, true);
        if svd.singular_values.iter().any(|s| *s < 1e-10) {
            continue;
        }
        let x = svd.solve(b, 1e-12).unwrap();
        if (&sub * &x - b).amax() > 1e-9 || x.iter().any(|v| *v <= 1e-12) {
            continue;
        }
        let mut y = vec![0.0; n];
        for (k, &j) in support.iter().enumerate() {
            y[j] = x[k];
        }
        out.push(y);
    }
    out.sort_by(|p, q| p.iter().zip(q).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    out
}

fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    v.sort_by(|p, q| p.iter().zip(q).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    v
}

#[test]
fn segment_vertices_match_brute_force() {
    let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 1.0, -1.0, 0.0]);
    let b = DVector::from_vec(vec![1.0, 0.0]);
    let p = Polytope::new(a.clone(), b.clone()).unwrap();
    let found = sorted(enumerate_vertices(&p).unwrap());
    let oracle = brute_force_vertices(&a, &b);
    assert_eq!(found.len(), 2);
    assert_eq!(found.len(), oracle.len());
    for (u, v) in found.iter().zip(&oracle) {
        for (x, y) in u.iter().zip(v) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_polytopes_match_brute_force(
        entries in prop::collection::vec(0.1f64..3.0, 12),
        reference in prop::collection::vec(0.0f64..2.0, 6),
    ) {
        let a = DMatrix::from_row_slice(2, 6, &entries);
        let b = &a * DVector::from_column_slice(&reference);
        prop_assume!(b.amax() > 1e-3);
        let p = Polytope::new(a.clone(), b.clone());
        prop_assume!(p.is_ok());
        let p = p.unwrap();
        let found = sorted(enumerate_vertices(&p).unwrap());
        let oracle = brute_force_vertices(&a, &b);
        prop_assert_eq!(found.len(), oracle.len());
        for (u, v) in found.iter().zip(&oracle) {
            for (x, y) in u.iter().zip(v) {
                prop_assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
            }
            prop_assert!(p.contains(u, 1e-9));
        }
    }

    #[test]
    fn subsample_is_idempotent(pts in prop::collection::vec(-1.0f64..1.0, 2..120), d in 0.0f64..0.5) {
        let m = pts.len() / 2 * 2;
        let cloud = PointCloud::new(pts[..m].to_vec(), 2).unwrap();
        let once = subsample(&cloud, d).unwrap();
        let twice = subsample(&once, d).unwrap();
        prop_assert_eq!(once.as_flat(), twice.as_flat());
        for i in 0..once.len() {
            for j in 0..i {
                prop_assert!(once.distance(i, j) >= d);
            }
        }
    }

    #[test]
    fn weights_are_convex(v in 1usize..12, p in 1.0f64..=2.0, seed in any::<u64>()) {
        let w = sample_weights(v, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(w.len(), v);
        prop_assert!(w.iter().all(|x| *x > 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn greedy_line_subsample_keeps_every_fourth() {
    let cloud = PointCloud::new((0..1000).map(|i| i as f64 * 0.1).collect(), 1).unwrap();
    let kept = subsample(&cloud, 0.35).unwrap();
    assert_eq!(kept.len(), 250);
    for (k, r) in kept.rows().enumerate() {
        assert!((r[0] - 0.4 * k as f64).abs() < 1e-9);
    }
}

#[test]
fn duplicates_collapse_to_one_representative() {
    let cloud = PointCloud::new(vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 2).unwrap();
    assert_eq!(subsample(&cloud, 1e-9).unwrap().len(), 1);
    assert_eq!(subsample(&cloud, 0.0).unwrap().len(), 3);
}

fn ds_plan(seed: u64, tau_f: f64) -> SamplingPlan {
    SamplingPlan { tau_f, t_end: 6.0, d_min: 0.003, n_trajectories: 40, seed, ..Default::default() }
}

#[test]
fn davis_skodje_harvest_lies_near_the_slow_curve() {
    let gamma = 10.0;
    let field = DavisSkodje { gamma };
    let v = box_vertices(&[0.0, 0.0], &[4.0, 4.0]).unwrap();
    let cloud = harvest(&field, &v, &ds_plan(3, 3.0 / gamma), 40, &ScaledMetric::identity(2)).unwrap();
    assert!(cloud.len() > 100);
    let near = cloud.rows().filter(|y| (y[1] - y[0] / (1.0 + y[0])).abs() < 0.05).count();
    assert!(near as f64 >= 0.95 * cloud.len() as f64, "{near} of {}", cloud.len());
}

#[test]
fn linear_decay_stays_in_the_shrunken_ball() {
    let field = Linear2d { a: 1.0, b: 1.0 };
    let v = box_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
    let tau = 2.0;
    let plan = SamplingPlan { tau_f: tau, t_end: 4.0, n_trajectories: 20, seed: 8, ..Default::default() };
    let cloud = harvest(&field, &v, &plan, 20, &ScaledMetric::identity(2)).unwrap();
    let radius = 2f64.sqrt() * (-tau).exp() * (1.0 + 1e-6);
    assert!(!cloud.is_empty());
    assert!(cloud.rows().all(|y| (y[0] * y[0] + y[1] * y[1]).sqrt() <= radius));
    let none = harvest(&field, &v, &plan, 0, &ScaledMetric::identity(2)).unwrap();
    assert!(none.is_empty());
}

#[test]
fn fixed_seed_serializes_identically() {
    let field = DavisSkodje { gamma: 10.0 };
    let v = box_vertices(&[0.0, 0.0], &[4.0, 4.0]).unwrap();
    let metric = ScaledMetric::new(vec![0.25, 1.0]).unwrap();
    let render = |seed| {
        let plan = ds_plan(seed, 0.8);
        let c = subsample(&harvest(&field, &v, &plan, 40, &metric).unwrap(), plan.d_min).unwrap();
        let mut out = Vec::new();
        write_cloud(&mut out, &c, serde_json::json!({ "seed": seed })).unwrap();
        out
    };
    assert_eq!(render(5), render(5));
    assert_ne!(render(5), render(6));
}
