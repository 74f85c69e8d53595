//! Pipeline stages, both in memory and as file-to-file commands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use slowman::dmap::{diffusion_map, DiffusionEmbedding, DmapRun};
use slowman::extension::{make_operator_pair, OperatorPair};
use slowman::io;
use slowman::kinetics::{
    builtin_model, integrate_field, parse_mechanism, toy_h2_network, DavisSkodje, Integration, IntegratorOptions,
    Output, ReactionNetwork, Trajectory, VectorField, TOY_H2_FRESH,
};
use slowman::reduced::{compare, simulate_reduced, tabulate, Axis, ComparisonReport, DirectRhs, GridSpec, ReducedTable};
use slowman::sampling::{box_vertices, enumerate_vertices, harvest, select_vertex_subset, subsample, synthetic_cloud, Polytope};
use slowman::{PointCloud, ScaledMetric};

use crate::config::{MetricChoice, PipelineConfig, RhsSource};
use crate::CliError;

/// Default initial-condition box for models without conservation laws.
const DEFAULT_BOX: (f64, f64) = (0.0, 4.0);

/// A vector field together with the vertices its initial conditions are
/// drawn from.
pub struct Problem {
    pub name: String,
    pub field: Box<dyn VectorField>,
    pub vertices: Vec<Vec<f64>>,
    pub network: Option<ReactionNetwork>,
    pub fresh: Option<Vec<f64>>,
}

impl Problem {
    /// Default detailed initial state of the simulation stage.
    pub fn default_initial_state(&self) -> Vec<f64> {
        if self.name.starts_with("davis-skodje") {
            return vec![1.5, DavisSkodje::slow_curve(1.5)];
        }
        if let Some(f) = &self.fresh {
            return f.clone();
        }
        let n = self.vertices.len() as f64;
        let mut mean = vec![0.0; self.field.dim()];
        for v in &self.vertices {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x / n;
            }
        }
        mean
    }
}

fn config_err(e: slowman::Error, key: &str) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

/// Resolves the sampled field; `None` for synthetic clouds.
pub fn resolve_problem(cfg: &PipelineConfig) -> Result<Option<Problem>, CliError> {
    let s = &cfg.sampling;
    if s.synthetic.is_some() {
        return Ok(None);
    }
    let network = if let Some(path) = &s.mechanism {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { context: format!("reading mechanism {}", path.display()), source: e })?;
        Some(parse_mechanism(&text)?)
    } else if s.model.as_deref() == Some("toy-h2-skeleton") {
        Some(toy_h2_network())
    } else {
        None
    };
    if let Some(net) = network {
        let fresh = match (&s.fresh, s.mechanism.is_none()) {
            (Some(f), _) => f.clone(),
            (None, true) => TOY_H2_FRESH.to_vec(),
            (None, false) => return Err(CliError::Config("sampling.fresh: required for mechanism files".into())),
        };
        let polytope = Polytope::from_network(&net, &fresh).map_err(|e| config_err(e, "sampling.fresh"))?;
        let mut vertices = enumerate_vertices(&polytope)?;
        if let Some(k) = s.plan.vertex_subset_size {
            let eq = net.equilibrium(&fresh)?;
            let metric = sampling_metric(&s.metric, &vertices)?;
            vertices = select_vertex_subset(&vertices, &fresh, &eq, k, &metric)
                .map_err(|e| config_err(e, "sampling.plan.vertex_subset_size"))?;
        }
        let name = match &s.mechanism {
            Some(p) => p.display().to_string(),
            None => "toy-h2-skeleton".into(),
        };
        return Ok(Some(Problem { name, field: Box::new(net.field()), vertices, network: Some(net), fresh: Some(fresh) }));
    }
    let name = cfg.model_name().expect("validated source");
    let field = builtin_model(&name).map_err(|e| config_err(e, "sampling.model"))?;
    let n = field.dim();
    let (lo, hi) = match &s.bounds {
        Some(b) => (b.lo.clone(), b.hi.clone()),
        None => (vec![DEFAULT_BOX.0; n], vec![DEFAULT_BOX.1; n]),
    };
    if lo.len() != n {
        return Err(CliError::Config(format!("sampling.box: model has {n} coordinates, box {}", lo.len())));
    }
    let vertices = box_vertices(&lo, &hi).map_err(|e| config_err(e, "sampling.box"))?;
    Ok(Some(Problem { name, field, vertices, network: None, fresh: None }))
}

fn sampling_metric(choice: &MetricChoice, vertices: &[Vec<f64>]) -> Result<ScaledMetric, CliError> {
    let n = vertices[0].len();
    Ok(match choice {
        MetricChoice::Identity => ScaledMetric::identity(n),
        MetricChoice::Box => {
            let flat: Vec<f64> = vertices.iter().flatten().copied().collect();
            ScaledMetric::from_max_abs(&flat, n)
        }
        MetricChoice::Diagonal(d) => {
            if d.len() != n {
                return Err(CliError::Config(format!("sampling.metric: {n} coordinates, {} scales", d.len())));
            }
            ScaledMetric::new(d.clone()).map_err(|e| config_err(e, "sampling.metric"))?
        }
    })
}

/// Harvested and subsampled cloud, or the synthetic benchmark cloud.
pub fn sample_cloud(cfg: &PipelineConfig, problem: Option<&Problem>) -> Result<PointCloud, CliError> {
    let s = &cfg.sampling;
    if let Some(kind) = s.synthetic {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        return Ok(synthetic_cloud(kind, &s.synthetic_params, &mut rng)?);
    }
    let problem = problem.ok_or_else(|| CliError::Config("sampling: no vector field to sample".into()))?;
    let mut plan = s.plan.clone();
    plan.seed = cfg.seed;
    let metric = sampling_metric(&s.metric, &problem.vertices)?;
    let raw = harvest(problem.field.as_ref(), &problem.vertices, &plan, plan.n_trajectories, &metric)?;
    Ok(subsample(&raw, plan.d_min)?)
}

/// Embeds the cloud and returns it re-expressed in the embedding's metric.
pub fn embed_cloud(cfg: &PipelineConfig, cloud: &PointCloud) -> Result<(PointCloud, DmapRun), CliError> {
    if cloud.is_empty() {
        return Err(CliError::Config("the point cloud is empty".into()));
    }
    let run = diffusion_map(cloud, &cfg.dmap)?;
    let mut cloud = cloud.clone();
    cloud.set_metric(run.metric.clone())?;
    Ok((cloud, run))
}

pub fn build_pair(cfg: &PipelineConfig, cloud: &PointCloud, embedding: &DiffusionEmbedding) -> Result<OperatorPair, CliError> {
    let ops = cfg.operators.resolve()?;
    Ok(make_operator_pair(&ops.restriction, &ops.lifting, cloud, embedding)?)
}

pub fn grid_for(cfg: &PipelineConfig, embedding: &DiffusionEmbedding) -> Result<GridSpec, CliError> {
    let m = embedding.reduced_dim();
    let nodes = cfg.grid.nodes.clone().unwrap_or_else(|| vec![60; m]);
    if nodes.len() != m {
        return Err(CliError::Config(format!("grid.nodes: {} axes for a {m}-dimensional embedding", nodes.len())));
    }
    match &cfg.grid.bounds {
        Some(b) => {
            if b.len() != m {
                return Err(CliError::Config(format!("grid.bounds: {} axes for a {m}-dimensional embedding", b.len())));
            }
            let axes = b
                .iter()
                .zip(&nodes)
                .map(|(r, &n)| Axis::new(r[0], r[1], n))
                .collect::<slowman::Result<Vec<_>>>()
                .map_err(|e| config_err(e, "grid.bounds"))?;
            Ok(GridSpec::new(axes)?)
        }
        None => Ok(GridSpec::fit_to(&embedding.coordinates(), &nodes, cfg.grid.pad)?),
    }
}

pub fn tabulate_table(cfg: &PipelineConfig, pair: &OperatorPair, problem: &Problem, embedding: &DiffusionEmbedding) -> Result<ReducedTable, CliError> {
    let grid = grid_for(cfg, embedding)?;
    let formulation = cfg.operators.resolve()?.formulation;
    Ok(tabulate(&grid, pair, problem.field.as_ref(), formulation, &problem.name)?)
}

/// Detailed and reduced runs from matching initial conditions.
#[derive(Debug)]
pub struct Simulation {
    pub y0: Vec<f64>,
    pub u0: Vec<f64>,
    pub detailed: Trajectory,
    pub reduced: Integration,
}

pub fn output_times(t_end: f64, n_out: usize) -> Vec<f64> {
    (0..=n_out).map(|i| if i == n_out { t_end } else { t_end * i as f64 / n_out as f64 }).collect()
}

pub fn simulate(cfg: &PipelineConfig, pair: &OperatorPair, problem: &Problem, table: Option<&ReducedTable>) -> Result<Simulation, CliError> {
    let sim = &cfg.simulation;
    let (y0, u0) = match (&sim.y0, &sim.u0) {
        (Some(y), Some(u)) => (y.clone(), u.clone()),
        (Some(y), None) => (y.clone(), pair.restrict(y)?),
        (None, Some(u)) => (pair.lift(u)?, u.clone()),
        (None, None) => {
            let y = problem.default_initial_state();
            let u = pair.restrict(&y)?;
            (y, u)
        }
    };
    if y0.len() != problem.field.dim() {
        return Err(CliError::Config(format!("simulation.y0: expected {} entries, got {}", problem.field.dim(), y0.len())));
    }
    if u0.len() != pair.reduced_dim() {
        return Err(CliError::Config(format!("simulation.u0: expected {} entries, got {}", pair.reduced_dim(), u0.len())));
    }
    let times = output_times(sim.t_end, sim.n_out);
    let opts = IntegratorOptions { output: Output::At(times), ..IntegratorOptions::with_tolerances(sim.rel_tol, sim.abs_tol) };
    let detailed = integrate_field(problem.field.as_ref(), &y0, (0.0, sim.t_end), &opts)?;
    let reduced = match (sim.source, table) {
        (RhsSource::Table, Some(t)) => simulate_reduced(t, &u0, (0.0, sim.t_end), &opts)?,
        (RhsSource::Table, None) => return Err(CliError::Config("simulation.source: table requested but none given".into())),
        (RhsSource::Direct, _) => {
            let formulation = cfg.operators.resolve()?.formulation;
            let rhs = DirectRhs { pair, field: problem.field.as_ref(), formulation };
            simulate_reduced(&rhs, &u0, (0.0, sim.t_end), &opts)?
        }
    };
    if let Some(e) = &reduced.stopped {
        log::warn!("reduced integration stopped at t = {:.6e}: {e}", reduced.trajectory.last_time());
    }
    Ok(Simulation { y0, u0, detailed, reduced })
}

/// Largest distance between two embedded training points.
pub fn embedded_diameter(embedding: &DiffusionEmbedding) -> f64 {
    let u = embedding.coordinates();
    let mut best: f64 = 0.0;
    for i in 0..u.nrows() {
        for j in 0..i {
            best = best.max((u.row(i) - u.row(j)).norm());
        }
    }
    best
}

/// Range `max - min` of each ambient coordinate over the cloud.
pub fn coordinate_ranges(cloud: &PointCloud) -> Vec<f64> {
    (0..cloud.dim())
        .map(|d| {
            let (lo, hi) = cloud.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[d]), hi.max(r[d])));
            hi - lo
        })
        .collect()
}

/// Artifact file names inside the output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
    pub fn cloud(&self) -> PathBuf {
        self.dir.join("cloud.csv")
    }
    pub fn embedding(&self) -> PathBuf {
        self.dir.join("embedding.csv")
    }
    pub fn sidecar(&self) -> PathBuf {
        self.dir.join("embedding.json")
    }
    pub fn table(&self) -> PathBuf {
        self.dir.join("table.csv")
    }
    pub fn detailed(&self) -> PathBuf {
        self.dir.join("detailed.csv")
    }
    pub fn reduced(&self) -> PathBuf {
        self.dir.join("reduced.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }
    pub fn deviation(&self) -> PathBuf {
        self.dir.join("deviation.csv")
    }
    /// Wall-clock record; the only output that differs between identical runs.
    pub fn timing(&self) -> PathBuf {
        self.dir.join("timing.json")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Io { context: format!("creating {}", parent.display()), source: e })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io { context: format!("writing {}", path.display()), source: e })
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("missing input artifact {}: {e}", path.display())))
}

fn meta(cfg: &PipelineConfig, stage: &str) -> Value {
    json!({ "config_hash": cfg.hash(), "stage": stage, "seed": cfg.seed })
}

fn hash_of(meta: &Value) -> Option<&str> {
    meta.get("config_hash").and_then(Value::as_str)
}

fn record_timing(arts: &Artifacts, stage: &str, seconds: f64) -> Result<(), CliError> {
    let path = arts.timing();
    let mut all: Value = std::fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_else(|| json!({}));
    all[stage] = json!(seconds);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &all).map_err(slowman::Error::from)?;
    writeln!(w).map_err(|e| CliError::Io { context: "writing timing".into(), source: e })?;
    Ok(())
}

fn load_embedded(arts: &Artifacts) -> Result<(PointCloud, DiffusionEmbedding, Vec<Value>), CliError> {
    let (mut cloud, cloud_meta) = io::read_cloud(open(&arts.cloud())?)?;
    let (embedding, car) = io::read_embedding(open(&arts.embedding())?, open(&arts.sidecar())?)?;
    let metric: Vec<f64> = serde_json::from_value(car.extra.get("metric").cloned().unwrap_or(Value::Null))
        .map_err(|_| CliError::Config("embedding sidecar lacks the embedding metric".into()))?;
    cloud.set_metric(ScaledMetric::new(metric)?)?;
    if cloud.len() != embedding.len() {
        return Err(CliError::Config(format!("cloud has {} points, embedding {}", cloud.len(), embedding.len())));
    }
    Ok((cloud, embedding, vec![cloud_meta, car.extra]))
}

fn need_problem(cfg: &PipelineConfig) -> Result<Problem, CliError> {
    resolve_problem(cfg)?.ok_or_else(|| CliError::Config("sampling: synthetic clouds have no vector field to reduce".into()))
}

pub fn cmd_sample(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let arts = Artifacts::new(cfg.out_dir());
    let problem = resolve_problem(cfg)?;
    let cloud = sample_cloud(cfg, problem.as_ref())?;
    let mut m = meta(cfg, "sample");
    if let Some(p) = &problem {
        m["field"] = json!(p.name);
    }
    let path = arts.cloud();
    let mut w = create(&path)?;
    io::write_cloud(&mut w, &cloud, m)?;
    w.flush().map_err(|e| CliError::Io { context: "writing cloud".into(), source: e })?;
    log::info!("{} samples written to {}", cloud.len(), path.display());
    record_timing(&arts, "sample", start.elapsed().as_secs_f64())?;
    Ok(path)
}

pub fn cmd_embed(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let arts = Artifacts::new(cfg.out_dir());
    let (cloud, _) = io::read_cloud(open(&arts.cloud())?)?;
    let (_, run) = embed_cloud(cfg, &cloud)?;
    let mut m = meta(cfg, "embed");
    m["metric"] = json!(run.metric.diag());
    m["epsilon_rule"] = json!(cfg.dmap.epsilon_rule);
    m["multiplier"] = json!(cfg.dmap.multiplier);
    m["residuals"] = json!(run.selection.residuals);
    let mut w = create(&arts.embedding())?;
    let mut s = create(&arts.sidecar())?;
    io::write_embedding(&mut w, &mut s, &run.embedding, m)?;
    w.flush().and_then(|_| s.flush()).map_err(|e| CliError::Io { context: "writing embedding".into(), source: e })?;
    record_timing(&arts, "embed", start.elapsed().as_secs_f64())?;
    Ok(arts.embedding())
}

pub fn cmd_tabulate(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let arts = Artifacts::new(cfg.out_dir());
    let problem = need_problem(cfg)?;
    let (cloud, embedding, _) = load_embedded(&arts)?;
    let pair = build_pair(cfg, &cloud, &embedding)?;
    let table = tabulate_table(cfg, &pair, &problem, &embedding)?;
    let mut m = meta(cfg, "tabulate");
    m["fit_report"] = json!(pair.fit_report());
    let mut w = create(&arts.table())?;
    io::write_table(&mut w, &table, m)?;
    w.flush().map_err(|e| CliError::Io { context: "writing table".into(), source: e })?;
    record_timing(&arts, "tabulate", start.elapsed().as_secs_f64())?;
    Ok(arts.table())
}

pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let arts = Artifacts::new(cfg.out_dir());
    let problem = need_problem(cfg)?;
    let (cloud, embedding, _) = load_embedded(&arts)?;
    let pair = build_pair(cfg, &cloud, &embedding)?;
    let table = match cfg.simulation.source {
        RhsSource::Table => Some(io::read_table(open(&arts.table())?)?.0),
        RhsSource::Direct => None,
    };
    let sim = simulate(cfg, &pair, &problem, table.as_ref())?;
    let mut m = meta(cfg, "simulate");
    m["y0"] = json!(sim.y0);
    m["u0"] = json!(sim.u0);
    let mut w = create(&arts.detailed())?;
    io::write_trajectory(&mut w, &sim.detailed, cloud.names(), m.clone())?;
    w.flush().map_err(|e| CliError::Io { context: "writing detailed trajectory".into(), source: e })?;
    m["stopped"] = json!(sim.reduced.stopped.as_ref().map(|e| e.to_string()));
    let names: Vec<String> = embedding.selected.iter().map(|l| format!("psi_{l}")).collect();
    let mut w = create(&arts.reduced())?;
    io::write_trajectory(&mut w, &sim.reduced.trajectory, &names, m)?;
    w.flush().map_err(|e| CliError::Io { context: "writing reduced trajectory".into(), source: e })?;
    record_timing(&arts, "simulate", start.elapsed().as_secs_f64())?;
    Ok(arts.reduced())
}

pub fn cmd_compare(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let start = Instant::now();
    let arts = Artifacts::new(cfg.out_dir());
    let (cloud, embedding, mut metas) = load_embedded(&arts)?;
    let (detailed, _, dm) = io::read_trajectory(open(&arts.detailed())?)?;
    let (reduced, _, rm) = io::read_trajectory(open(&arts.reduced())?)?;
    metas.push(dm);
    metas.push(rm);
    if !cfg.comparison.force {
        let expected = cfg.hash();
        for m in &metas {
            match hash_of(m) {
                Some(h) if h == expected => {}
                other => {
                    return Err(CliError::Provenance(format!(
                        "{} artifact has config hash {}, expected {expected}",
                        m.get("stage").and_then(Value::as_str).unwrap_or("an"),
                        other.unwrap_or("<none>")
                    )))
                }
            }
        }
    }
    let pair = build_pair(cfg, &cloud, &embedding)?;
    let report = compare(&detailed, &reduced, &pair)?;
    write_report(&arts, cfg, &report, &cloud, &embedding)?;
    record_timing(&arts, "compare", start.elapsed().as_secs_f64())?;
    Ok(arts.report())
}

fn write_report(
    arts: &Artifacts,
    cfg: &PipelineConfig,
    report: &ComparisonReport,
    cloud: &PointCloud,
    embedding: &DiffusionEmbedding,
) -> Result<(), CliError> {
    let diameter = embedded_diameter(embedding);
    let ranges = coordinate_ranges(cloud);
    let body = json!({
        "config_hash": cfg.hash(),
        "horizon": report.horizon,
        "mean_reduced_deviation": report.mean_reduced_deviation,
        "mean_ambient_deviation": cloud.names().iter().cloned().zip(report.mean_ambient_deviation.iter().map(|v| json!(v))).collect::<serde_json::Map<String, Value>>(),
        "embedded_diameter": diameter,
        "relative_reduced_deviation": report.mean_reduced_deviation / diameter,
        "coordinate_ranges": ranges,
    });
    let mut w = create(&arts.report())?;
    serde_json::to_writer_pretty(&mut w, &body).map_err(slowman::Error::from)?;
    writeln!(w).map_err(|e| CliError::Io { context: "writing report".into(), source: e })?;
    let header = vec!["t".to_string(), "dpsi".to_string()];
    let rows: Vec<Vec<String>> = report
        .times
        .iter()
        .zip(&report.reduced_deviation)
        .map(|(t, d)| vec![io::format_float(*t), io::format_float(*d)])
        .collect();
    let mut w = create(&arts.deviation())?;
    io::write_document(&mut w, &meta(cfg, "compare"), &header, &rows)?;
    w.flush().map_err(|e| CliError::Io { context: "writing deviation series".into(), source: e })?;
    Ok(())
}

/// All stages in sequence.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    cmd_sample(cfg)?;
    cmd_embed(cfg)?;
    if cfg.sampling.synthetic.is_some() {
        return Ok(Artifacts::new(cfg.out_dir()).embedding());
    }
    if cfg.simulation.source == RhsSource::Table {
        cmd_tabulate(cfg)?;
    }
    cmd_simulate(cfg)?;
    cmd_compare(cfg)
}
