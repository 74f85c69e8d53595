//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every criterion is reported even
//! when an earlier one fails. Failures are reported but only turn into a
//! non-zero exit status when `ACCEPTANCE_STRICT=1` is set, so the rest of
//! the workspace tests still run under `cargo test`. Numeric arguments
//! select criteria: `cargo test --test acceptance -- 3 9`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slowman::dmap::{diffusion_map, DmapParams};
use slowman::extension::{
    Extension, FitFlags, GeometricHarmonics, KrigingModel, LaplacianPyramid, LpConfig, Mapping, Model,
    NystromRestriction, RbfConfig, RbfModel, SchemeConfig,
};
use slowman::kinetics::{
    integrate, toy_h2_network, DavisSkodje, IntegratorOptions, Output, ReactionNetwork, Trajectory, VectorField,
    TOY_H2_FRESH,
};
use slowman::reduced::simulate_reduced;
use slowman::sampling::{
    enumerate_vertices, harvest, synthetic_cloud, Polytope, SamplingPlan, SyntheticKind, SyntheticParams,
};
use slowman::{PointCloud, ScaledMetric};
use slowman_cli::config::PipelineConfig;
use slowman_cli::pipeline::{self, Problem};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let s = start.elapsed();
    (s <= limit, format!("{:.1} s of {} s", s.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------- 1

fn spectral_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_row: f64 = 0.0;
    let mut worst_trivial: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    let mut sign_ok = true;
    for _ in 0..50 {
        let dim = rng.gen_range(1..=5);
        let m = rng.gen_range(10..=500);
        let pts: Vec<f64> = (0..dim * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cloud = PointCloud::new(pts, dim).map_err(fail)?;
        let run = diffusion_map(&cloud, &DmapParams { n_coords: 1, n_eigen: 10, ..Default::default() })
            .map_err(fail)?;
        for r in run.markov.kernel.row_iter() {
            worst_row = worst_row.max((r.sum() - 1.0).abs());
        }
        let e = &run.embedding;
        worst_trivial = worst_trivial.max((e.eigenvalue(1) - 1.0).abs());
        worst_bound = e.eigenvalues.iter().fold(worst_bound, |w, l| w.max(l.abs() - 1.0));
        let phi = e.eigenvector(1);
        sign_ok &= phi.iter().all(|v| *v > 0.0) || phi.iter().all(|v| *v < 0.0);
    }
    let (fast, t) = within(Duration::from_secs(30), start);
    check(
        worst_row < 1e-12 && worst_trivial < 1e-10 && worst_bound <= 1e-10 && sign_ok && fast,
        format!(
            "row sums {worst_row:.1e}, |lambda1 - 1| {worst_trivial:.1e}, max |lambda| - 1 {worst_bound:.1e}, \
             phi1 one-signed {sign_ok}, {t}"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn regular_grid_gap() -> Outcome {
    let n = 200;
    let d = 1.0 / (n - 1) as f64;
    let pts: Vec<f64> = (0..n).map(|i| i as f64 * d).collect();
    let cloud = PointCloud::new(pts, 1).map_err(fail)?;
    let run = diffusion_map(&cloud, &DmapParams { epsilon: Some(d), n_coords: 1, n_eigen: 3, ..Default::default() })
        .map_err(fail)?;
    let computed = 1.0 - run.embedding.eigenvalue(2);
    let length = (n - 1) as f64 * d;
    let delta = (-1.0f64).exp();
    let predicted = delta * (PI * d / length).powi(2);
    let rel = (computed - predicted).abs() / predicted;
    check(rel <= 0.10, format!("gap {computed:.4e}, predicted {predicted:.4e}, relative error {rel:.3} (limit 0.10)"))
}

// ---------------------------------------------------------------- 3

/// Coefficient of determination of a least-squares fit of `y` on `[1, x...]`.
fn r_squared(y: &[f64], xs: &[Vec<f64>]) -> f64 {
    let m = y.len();
    let a = DMatrix::from_fn(m, xs.len() + 1, |i, j| if j == 0 { 1.0 } else { xs[j - 1][i] });
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).expect("svd solve");
    let res = &b - &a * coef;
    let mean = y.iter().sum::<f64>() / m as f64;
    let total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    1.0 - res.norm_squared() / total
}

fn cylinder_modes() -> Outcome {
    let start = Instant::now();
    let modes = [
        (SyntheticKind::CylinderUniform, SyntheticParams { n: 2000, ..Default::default() }),
        (SyntheticKind::CylinderGrid, SyntheticParams { rows: 40, cols: 40, ..Default::default() }),
        (SyntheticKind::CylinderJittered, SyntheticParams { rows: 40, cols: 40, ..Default::default() }),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (kind, params) in modes {
        let cloud = synthetic_cloud(kind, &params, &mut ChaCha8Rng::seed_from_u64(3)).map_err(fail)?;
        let run = diffusion_map(&cloud, &DmapParams { n_coords: 2, n_eigen: 10, ..Default::default() })
            .map_err(fail)?;
        let sel = &run.selection;
        let r3 = sel.residuals.iter().find(|(l, _)| *l == 3).map(|p| p.1).unwrap_or(f64::NAN);
        let later = sel.selected.get(1).copied();
        let picked_ok = sel.selected.len() == 2 && later.is_some_and(|l| l > 3 && l <= 10);
        let labels = cloud.labels().ok_or("cylinder cloud without labels")?;
        let (theta, z): (Vec<f64>, Vec<f64>) = labels.values.chunks(2).map(|p| (p[0], p[1])).unzip();
        let (r2_theta, r2_z) = match later {
            Some(l) => {
                let pair = vec![run.embedding.eigenvector(2), run.embedding.eigenvector(l)];
                (r_squared(&theta, &pair), r_squared(&z, &pair))
            }
            None => (f64::NAN, f64::NAN),
        };
        ok &= r3 < 0.3 && picked_ok && r2_theta > 0.95 && r2_z > 0.95;
        notes.push(format!(
            "{kind:?}: r3 {r3:.3}, selected {:?}, R2 theta {r2_theta:.3} z {r2_z:.3}",
            sel.selected
        ));
    }
    let (fast, t) = within(Duration::from_secs(120), start);
    check(ok && fast, format!("{}; {t}", notes.join("; ")))
}

// ---------------------------------------------------------------- 4

fn smooth_values(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), 2, |i, c| {
        let r = x.row(i);
        if c == 0 {
            (2.0 * r[0]).sin() * r[1].exp()
        } else {
            (r.sum()).cos() + r[0] * r[1]
        }
    })
}

fn ring_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<f64> = (0..n)
        .flat_map(|_| {
            let t: f64 = rng.gen_range(0.0..TAU);
            let r = 1.0 + 0.1 * rng.gen_range(-1.0..1.0);
            [r * t.cos(), 2.0 * r * t.sin()]
        })
        .collect();
    let mut cloud = PointCloud::new(pts, 2).unwrap();
    cloud.set_metric(ScaledMetric::new(vec![1.0, 0.5]).unwrap()).unwrap();
    cloud
}

fn extension_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let flags = FitFlags::default();
    let mut worst_rbf: f64 = 0.0;
    let mut worst_kri: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.gen_range(15..60);
        let a = rng.gen_range(2..=3);
        let x = DMatrix::from_fn(m, a, |_, _| rng.gen_range(-1.0..1.0));
        let f = smooth_values(&x);
        let theta = rng.gen_range(0.5..5.0);
        let rbf = RbfModel::fit(&x, &f, 3, &flags).map_err(fail)?;
        let kri = KrigingModel::fit(&x, &f, 2, theta, &flags).map_err(fail)?;
        for i in 0..m {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            let vr = rbf.eval(&xi).map_err(fail)?;
            let vk = kri.eval(&xi).map_err(fail)?;
            for c in 0..2 {
                let scale = f.column(c).amax();
                worst_rbf = worst_rbf.max((vr[c] - f[(i, c)]).abs() / scale);
                worst_kri = worst_kri.max((vk[c] - f[(i, c)]).abs() / scale);
            }
        }
    }

    let cloud = ring_cloud(300, 9);
    let emb = diffusion_map(&cloud, &DmapParams { n_coords: 2, n_eigen: 8, ..Default::default() })
        .map_err(fail)?
        .embedding;
    let ny = NystromRestriction::new(&cloud, &emb).map_err(fail)?;
    // training values re-evaluated through the extension differ from the
    // stored eigenvector entries by at most the eigen-residual of each pair
    let k = kernel_matrix(&cloud, emb.epsilon);
    let mut ny_ok = true;
    let mut worst_ny: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    let weights = emb.coordinate_weights();
    for (c, &l) in emb.selected.iter().enumerate() {
        let phi = DVector::from_vec(emb.eigenvector(l));
        let lambda = emb.eigenvalue(l);
        let residual = ((&k * &phi - &phi * lambda).amax() / lambda.abs()) * weights[c].abs();
        worst_res = worst_res.max(residual);
        for i in 0..cloud.len() {
            let v = ny.eval(cloud.row(i)).map_err(fail)?[c];
            let dev = (v - weights[c] * phi[i]).abs();
            worst_ny = worst_ny.max(dev);
            ny_ok &= dev <= residual * (1.0 + 1e-6) + 1e-14;
        }
    }
    check(
        worst_rbf < 1e-8 && worst_kri < 1e-8 && ny_ok,
        format!(
            "RBF {worst_rbf:.1e}, Kriging {worst_kri:.1e} (relative, limit 1e-8); Nystrom {worst_ny:.1e} \
             vs eigen-residual {worst_res:.1e}"
        ),
    )
}

/// Row-normalized heat kernel of the cloud in its own metric.
fn kernel_matrix(cloud: &PointCloud, eps: f64) -> DMatrix<f64> {
    let m = cloud.len();
    let r = cloud.metric().diag().to_vec();
    let mut w = DMatrix::from_fn(m, m, |i, j| {
        let d2: f64 = cloud.row(i).iter().zip(cloud.row(j)).zip(&r).map(|((a, b), s)| ((a - b) * s).powi(2)).sum();
        (-d2 / (eps * eps)).exp()
    });
    for mut row in w.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    w
}

// ---------------------------------------------------------------- 5

fn fd_discrepancy(map: &dyn Mapping, x: &[f64], h: f64) -> Result<f64, String> {
    let jac = map.jacobian(x).map_err(fail)?;
    let mut worst: f64 = 0.0;
    for d in 0..x.len() {
        let mut p = x.to_vec();
        let mut q = x.to_vec();
        p[d] += h;
        q[d] -= h;
        let fp = map.eval(&p).map_err(fail)?;
        let fq = map.eval(&q).map_err(fail)?;
        for k in 0..fp.len() {
            worst = worst.max(((fp[k] - fq[k]) / (2.0 * h) - jac[(k, d)]).abs());
        }
    }
    Ok(worst / jac.amax().max(1e-12))
}

fn jacobian_suite() -> Outcome {
    let cloud = ring_cloud(200, 5);
    let emb = diffusion_map(&cloud, &DmapParams { n_coords: 2, n_eigen: 8, ..Default::default() })
        .map_err(fail)?
        .embedding;
    let ny = NystromRestriction::new(&cloud, &emb).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let x = DMatrix::from_fn(40, 2, |_, _| rng.gen_range(-1.0..1.0));
    let f = smooth_values(&x);
    let fit = |cfg: SchemeConfig| Extension::fit(&cfg, &x, &f, &[1.0, 1.0], Arc::new(FitFlags::default()));
    let rbf = fit(SchemeConfig::Rbf(RbfConfig { p: 3, nn: None })).map_err(fail)?;
    let lp = fit(SchemeConfig::Lp(LpConfig { sigma0: 2.0, max_level: 8, err: 1e-12, nn: None })).map_err(fail)?;
    let mut worst = [0.0f64; 3];
    for s in 0..20 {
        let t = 0.31 * s as f64 + 0.05;
        let on_ring = [1.03 * t.cos(), 2.06 * t.sin()];
        worst[0] = worst[0].max(fd_discrepancy(&ny, &on_ring, 1e-6)?);
        let q = [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)];
        worst[1] = worst[1].max(fd_discrepancy(&rbf, &q, 1e-5)?);
        worst[2] = worst[2].max(fd_discrepancy(&lp, &q, 1e-5)?);
    }
    check(
        worst.iter().all(|w| *w < 1e-4),
        format!("Nystrom {:.1e}, RBF {:.1e}, LP {:.1e} (limit 1e-4)", worst[0], worst[1], worst[2]),
    )
}

// ---------------------------------------------------------------- 6

fn chirp(x: f64) -> f64 {
    x.cos() + 0.5 * (x * x / 5.0).sin()
}

fn even_chirp_samples() -> (DMatrix<f64>, DMatrix<f64>) {
    let n = 2000;
    let h = 10.0 * PI / (n - 1) as f64;
    let x = DMatrix::from_fn(n, 1, |i, _| i as f64 * h);
    let f = x.map(chirp);
    (x, f)
}

fn multiscale_monotonicity() -> Outcome {
    let (x, f) = even_chirp_samples();
    let lp = LaplacianPyramid::fit(&x, &f, 30.0, 11, 1e-14).map_err(fail)?;
    let e = lp.training_errors();
    if e.len() < 12 {
        return Err(format!("pyramid stopped after {} levels", e.len()));
    }
    let lp_ok = e[2] > e[5] && e[5] > e[8] && e[8] > e[11];
    let gh = GeometricHarmonics::fit(&x, &f, 3.0, 1e-3, 1e-14, 8).map_err(fail)?;
    let r = gh.residual_norms();
    if r.len() < 8 {
        return Err(format!("harmonics stopped after {} steps", r.len()));
    }
    let gh_ok = r[7] < r[1] && r[1] < r[0];
    check(
        lp_ok && gh_ok,
        format!(
            "LP max error at levels 2/5/8/11: {:.3e} {:.3e} {:.3e} {:.3e}; GH residual after 1/2/8 steps: \
             {:.3e} {:.3e} {:.3e}",
            e[2], e[5], e[8], e[11], r[0], r[1], r[7]
        ),
    )
}

// ---------------------------------------------------------------- 7

fn circle_extension() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(350);
    let angles: Vec<f64> = (0..350).map(|_| rng.gen_range(0.0..TAU)).collect();
    let x = DMatrix::from_fn(350, 2, |i, c| if c == 0 { angles[i].cos() } else { angles[i].sin() });
    let f = DMatrix::from_fn(350, 1, |i, _| (3.0 * angles[i]).cos());
    let lp = LaplacianPyramid::fit(&x, &f, 10.0, 10, 1e-14).map_err(fail)?;
    let mut held_out: f64 = 0.0;
    for _ in 0..500 {
        let t: f64 = rng.gen_range(0.0..TAU);
        let v = lp.eval_levels(&[t.cos(), t.sin()], 10, None)[0];
        held_out = held_out.max((v - (3.0 * t).cos()).abs());
    }
    let err = 1e-3;
    let mut gh_ok = true;
    let mut notes = Vec::new();
    for eps0 in [0.25, 0.5] {
        let gh = GeometricHarmonics::fit(&x, &f, eps0, 1e-3, err, 12).map_err(fail)?;
        gh_ok &= gh.residual_norm() < err;
        notes.push(format!("eps0 {eps0}: {:.2e} after {} steps", gh.residual_norm(), gh.n_steps()));
    }
    check(
        held_out < 1e-2 && gh_ok,
        format!("LP held-out error {held_out:.2e} (limit 1e-2); GH residual (err {err:.0e}) {}", notes.join(", ")),
    )
}

// ---------------------------------------------------------------- 8

fn derivative_pathology() -> Outcome {
    let n = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
    xs.sort_by(f64::total_cmp);
    let x = DMatrix::from_fn(n, 1, |i, _| xs[i]);
    let f = x.map(f64::sin);
    let lp = LaplacianPyramid::fit(&x, &f, 10.0, 13, 1e-300).map_err(fail)?;
    if lp.n_levels() < 14 {
        return Err(format!("pyramid stopped after {} levels", lp.n_levels()));
    }
    // dense probes between the second and the second-to-last sample
    let probes: Vec<f64> = (0..2000).map(|i| xs[1] + (xs[n - 2] - xs[1]) * i as f64 / 1999.0).collect();
    let value_err = |l: usize| probes.iter().map(|&p| (lp.eval_levels(&[p], l, None)[0] - p.sin()).abs()).fold(0.0, f64::max);
    let slope_err =
        |l: usize| probes.iter().map(|&p| (lp.jacobian_levels(&[p], l)[(0, 0)] - p.cos()).abs()).fold(0.0, f64::max);
    let (v5, v9) = (value_err(5), value_err(9));
    let (d9, d13) = (slope_err(9), slope_err(13));
    check(
        v9 < v5 && d13 > d9,
        format!("value error level 5 {v5:.2e}, level 9 {v9:.2e}; derivative error level 9 {d9:.2e}, level 13 {d13:.2e}"),
    )
}

// ---------------------------------------------------------------- 9, 10

const DS_CONFIG: &str = r#"{
  "schema_version": 1,
  "seed": 1,
  "sampling": {
    "model": "davis-skodje",
    "gamma": 10,
    "metric": { "diagonal": [0.25, 1.0] },
    "plan": { "tau_f": 0.8, "t_end": 6, "d_min": 0.003, "n_trajectories": 100 }
  },
  "dmap": { "n_coords": 1, "n_eigen": 10 },
  "grid": { "nodes": [60] }
}"#;

fn ds_config(preset: u8) -> Result<PipelineConfig, String> {
    let mut cfg = PipelineConfig::from_json(DS_CONFIG).map_err(fail)?;
    cfg.operators.preset = Some(preset);
    Ok(cfg)
}

struct Reduction {
    cfg: PipelineConfig,
    problem: Problem,
    cloud: PointCloud,
    embedding: slowman::dmap::DiffusionEmbedding,
    pair: slowman::extension::OperatorPair,
    table: slowman::reduced::ReducedTable,
}

fn build_reduction(preset: u8) -> Result<Reduction, String> {
    let cfg = ds_config(preset)?;
    let problem = pipeline::resolve_problem(&cfg).map_err(fail)?.ok_or("no vector field")?;
    let raw = pipeline::sample_cloud(&cfg, Some(&problem)).map_err(fail)?;
    let (cloud, run) = pipeline::embed_cloud(&cfg, &raw).map_err(fail)?;
    let pair = pipeline::build_pair(&cfg, &cloud, &run.embedding).map_err(fail)?;
    let table = pipeline::tabulate_table(&cfg, &pair, &problem, &run.embedding).map_err(fail)?;
    Ok(Reduction { cfg, problem, cloud, embedding: run.embedding, pair, table })
}

fn trapezoid_mean(t: &[f64], v: &[f64]) -> f64 {
    let area: f64 = t.windows(2).zip(v.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum();
    area / (t[t.len() - 1] - t[0])
}

struct Deviations {
    psi: f64,
    relative_psi: f64,
    /// Mean lifted deviation of each coordinate over its range.
    relative_y: Vec<f64>,
}

/// Restricts the detailed trajectory and lifts the reduced one at the
/// shared output times, then time-averages both deviations.
fn deviations(red: &Reduction) -> Result<Deviations, String> {
    let sim = pipeline::simulate(&red.cfg, &red.pair, &red.problem, Some(&red.table)).map_err(fail)?;
    if let Some(e) = &sim.reduced.stopped {
        return Err(format!("reduced run stopped early: {e}"));
    }
    let det = &sim.detailed;
    let rdc = &sim.reduced.trajectory;
    if det.times() != rdc.times() {
        return Err("detailed and reduced output times differ".into());
    }
    let n = red.cloud.dim();
    let mut dpsi = Vec::with_capacity(det.len());
    let mut dy = vec![Vec::with_capacity(det.len()); n];
    for (y, u) in det.states().zip(rdc.states()) {
        let ru = red.pair.restrict(y).map_err(fail)?;
        dpsi.push(ru.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        let ly = red.pair.lift(u).map_err(fail)?;
        for k in 0..n {
            dy[k].push((ly[k] - y[k]).abs());
        }
    }
    let coords = red.embedding.coordinates();
    let mut diameter: f64 = 0.0;
    for i in 0..coords.nrows() {
        for j in 0..i {
            diameter = diameter.max((coords.row(i) - coords.row(j)).norm());
        }
    }
    let relative_y = (0..n)
        .map(|k| {
            let col: Vec<f64> = red.cloud.rows().map(|r| r[k]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            trapezoid_mean(det.times(), &dy[k]) / (hi - lo)
        })
        .collect();
    let psi = trapezoid_mean(det.times(), &dpsi);
    Ok(Deviations { psi, relative_psi: psi / diameter, relative_y })
}

fn end_to_end(preset2: &Result<(Reduction, Duration), String>) -> Outcome {
    let start = Instant::now();
    let (p2, built) = preset2.as_ref().map_err(Clone::clone)?;
    let d2 = deviations(p2)?;
    let p3 = build_reduction(3)?;
    let d3 = deviations(&p3)?;
    let elapsed = start.elapsed() + *built;
    let fast = elapsed <= Duration::from_secs(300);
    let t = format!("{:.1} s of 300 s", elapsed.as_secs_f64());
    check(
        d2.relative_psi < 0.02 && d2.relative_y.iter().all(|v| *v < 0.05) && d3.psi >= d2.psi && fast,
        format!(
            "preset 2: dpsi {:.3e} ({:.2e} of diameter), dy/range {:?}; preset 3: dpsi {:.3e}; {t} including sampling and tabulation",
            d2.psi,
            d2.relative_psi,
            d2.relative_y.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>(),
            d3.psi
        ),
    )
}

/// Slowest relaxation time of the linearized field at `y`, from central
/// differences.
fn relaxation_time(field: &dyn VectorField, y: &[f64]) -> Result<f64, String> {
    let n = y.len();
    let h = 1e-6;
    let mut jac = DMatrix::zeros(n, n);
    let mut fp = vec![0.0; n];
    let mut fq = vec![0.0; n];
    for d in 0..n {
        let mut p = y.to_vec();
        let mut q = y.to_vec();
        p[d] += h;
        q[d] -= h;
        field.eval(&p, &mut fp).map_err(fail)?;
        field.eval(&q, &mut fq).map_err(fail)?;
        for k in 0..n {
            jac[(k, d)] = (fp[k] - fq[k]) / (2.0 * h);
        }
    }
    let slowest = jac.complex_eigenvalues().iter().map(|c| c.re.abs()).fold(f64::INFINITY, f64::min);
    Ok(1.0 / slowest)
}

fn equilibrium_stationarity(preset2: &Result<(Reduction, Duration), String>) -> Outcome {
    let (red, _) = preset2.as_ref().map_err(Clone::clone)?;
    let y_eq = [0.0, DavisSkodje::slow_curve(0.0)];
    let tau = relaxation_time(red.problem.field.as_ref(), &y_eq)?;
    let u0 = red.pair.restrict(&y_eq).map_err(fail)?;
    let horizon = 10.0 * tau;
    let times: Vec<f64> = (0..=400).map(|i| horizon * i as f64 / 400.0).collect();
    let opts = IntegratorOptions { output: Output::At(times), ..IntegratorOptions::with_tolerances(1e-9, 1e-12) };
    let run = simulate_reduced(&red.table, &u0, (0.0, horizon), &opts).map_err(fail)?;
    if let Some(e) = &run.stopped {
        return Err(format!("reduced run from restrict(y_eq) = {u0:?} stopped: {e}"));
    }
    let drift = run
        .trajectory
        .states()
        .map(|u| u.iter().zip(&u0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let diag = red.table.grid.cell_diagonal();
    check(
        drift < 2.0 * diag,
        format!("drift {drift:.2e} over {horizon:.2} time units, limit 2 x {diag:.2e}"),
    )
}

// ---------------------------------------------------------------- 11

fn relative_drift(net: &ReactionNetwork, reference: &[f64], y: &[f64]) -> f64 {
    net.element_totals(reference)
        .iter()
        .zip(net.element_totals(y))
        .map(|(a, b)| (a - b).abs() / a.abs())
        .fold(0.0, f64::max)
}

/// Vertices of `{y >= 0 : A y = b}` as the positive solutions over every
/// support whose columns of `A` are independent.
fn brute_force_vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<Vec<f64>> {
    let n = a.ncols();
    let mut found: Vec<Vec<f64>> = Vec::new();
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        if support.len() > a.nrows() {
            continue;
        }
        let sub = DMatrix::from_fn(a.nrows(), support.len(), |i, j| a[(i, support[j])]);
        let svd = sub.clone().svd(true, true);
        if svd.rank(1e-10) < support.len() {
            continue;
        }
        let x = svd.solve(b, 1e-12).expect("svd solve");
        if (&sub * &x - b).amax() > 1e-9 || x.iter().any(|v| *v <= 1e-12) {
            continue;
        }
        let mut y = vec![0.0; n];
        for (k, &j) in support.iter().enumerate() {
            y[j] = x[k];
        }
        if !found.iter().any(|f| f.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-9)) {
            found.push(y);
        }
    }
    found
}

fn toy_conservation() -> Outcome {
    let net = toy_h2_network();
    let polytope = Polytope::from_network(&net, &TOY_H2_FRESH).map_err(fail)?;
    let vertices = enumerate_vertices(&polytope).map_err(fail)?;
    let plan = SamplingPlan { tau_f: 0.05, t_end: 5.0, d_min: 0.0, n_trajectories: 40, seed: 11, ..Default::default() };
    let cloud = harvest(&net.field(), &vertices, &plan, plan.n_trajectories, &ScaledMetric::identity(4)).map_err(fail)?;
    let mut worst = cloud.rows().map(|y| relative_drift(&net, &TOY_H2_FRESH, y)).fold(0.0, f64::max);
    // dense trajectories from each vertex, independent of the harvest path
    for v in &vertices {
        let traj: Trajectory = integrate(&net.field(), v, (0.0, 5.0), 1e-9, 1e-12).map_err(fail)?;
        worst = traj.states().map(|y| relative_drift(&net, &TOY_H2_FRESH, y)).fold(worst, f64::max);
    }
    let oracle = brute_force_vertices(polytope.equality_matrix(), polytope.equality_rhs());
    let sorted = |mut v: Vec<Vec<f64>>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    let (ours, theirs) = (sorted(vertices), sorted(oracle));
    let same = ours.len() == theirs.len()
        && ours.iter().zip(&theirs).all(|(a, b)| a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-9));
    check(
        worst < 1e-8 && same,
        format!(
            "{} harvested samples, worst element drift {worst:.1e} (limit 1e-8); {} vertices, brute force {}, match {same}",
            cloud.len(),
            ours.len(),
            theirs.len()
        ),
    )
}

// ---------------------------------------------------------------- 12

fn read_tree(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(fail)? {
        let entry = entry.map_err(fail)?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "timing.json" {
            continue;
        }
        out.insert(name, std::fs::read(entry.path()).map_err(fail)?);
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let config = tmp.path().join("ds.json");
    std::fs::write(&config, DS_CONFIG).map_err(fail)?;
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_slowman"))
            .args(["run", "--seed", "17", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(fail)?;
        if !status.status.success() {
            return Err(format!("run {run} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        trees.push(read_tree(&out)?);
    }
    let names: Vec<&String> = trees[0].keys().collect();
    let differing: Vec<&String> = names.iter().copied().filter(|n| trees[1].get(*n) != trees[0].get(*n)).collect();
    let same_set = trees[0].len() == trees[1].len();
    check(
        same_set && differing.is_empty() && names.len() >= 8,
        format!("{} artifacts compared, differing: {differing:?}", names.len()),
    )
}

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| filter.is_empty() || filter.contains(&n);
    let mut failures = Vec::new();
    let mut report = |n: usize, title: &str, run: &dyn Fn() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {n:>2} {title}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                println!("FAIL  {n:>2} {title}: {detail} [{secs:.1} s]");
                failures.push(n);
            }
        }
    };
    report(1, "spectral invariants", &spectral_invariants);
    report(2, "regular-grid eigenvalue gap", &regular_grid_gap);
    report(3, "cylinder coordinate selection", &cylinder_modes);
    report(4, "extension exactness", &extension_exactness);
    report(5, "analytic Jacobians", &jacobian_suite);
    report(6, "multiscale monotonicity", &multiscale_monotonicity);
    report(7, "circle extension", &circle_extension);
    report(8, "LP derivative pathology", &derivative_pathology);
    let preset2 = if wanted(9) || wanted(10) {
        let start = Instant::now();
        build_reduction(2).map(|r| (r, start.elapsed()))
    } else {
        Err("not built".into())
    };
    report(9, "end-to-end reduction", &|| end_to_end(&preset2));
    report(10, "equilibrium stationarity", &|| equilibrium_stationarity(&preset2));
    report(11, "toy mechanism conservation", &toy_conservation);
    report(12, "determinism", &determinism);
    if failures.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: FAILED criteria {failures:?}");
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
