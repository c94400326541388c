//! Command-line front end: `gen-data`, `train`, `plan`, `simulate`, `plot`, `eval`.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesic::{build_graph, GeodesicGraph, DEFAULT_CONTROL_POINTS, DEFAULT_MARGIN};
use crate::io::{
    gen_pouring, gen_toy_jc, load_checkpoint, load_script, load_trajectory, parse_obstacle,
    parse_pose, plot_latent, save_checkpoint, save_timing_report, save_trajectory, DatasetFile,
    PlotMode, PlotOptions, PouringConfig, ToyJcConfig,
};
use crate::motion::{plan, replan_loop, PlanRequest};
use crate::types::{orientation_angle, Obstacle, Pose};
use crate::vae::{
    elbo_with_noise, reconstruction_rmse, train, ManifoldModel, TrainConfig, Trainable,
};

#[derive(Debug, Parser)]
#[command(
    name = "geomotion",
    version,
    about = "Geodesic motion skills on learned pose manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic demonstration set.
    GenData(GenDataArgs),
    /// Fit a model to a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Plan one trajectory between two poses.
    Plan(PlanArgs),
    /// Replay an obstacle script, replanning every tick.
    Simulate(SimulateArgs),
    /// Render a latent field as SVG.
    Plot(PlotArgs),
    /// Report reconstruction errors and ELBO terms as JSON.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    ToyJc,
    Pouring,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples per demonstration.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Demonstrations (per branch for `pouring`).
    #[arg(long)]
    pub demos: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub latent_dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "200,100")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub rbf_k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Defaults to `n / (m + 1)`.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Epochs of the first stage (encoder and decoder means).
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    /// Epochs of the second stage (variance heads).
    #[arg(long, default_value_t = 500)]
    pub head_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Nodes per latent axis.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// `x,y,z;qw,qx,qy,qz`
    #[arg(long, allow_hyphen_values = true)]
    pub start: String,
    #[arg(long, allow_hyphen_values = true)]
    pub goal: String,
    /// `cx,cy,cz,r,eta`, repeatable.
    #[arg(long = "obstacle", allow_hyphen_values = true)]
    pub obstacles: Vec<String>,
    /// Minimize the spline energy after the graph search.
    #[arg(long)]
    pub refine: bool,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_CONTROL_POINTS)]
    pub control_points: usize,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub script: PathBuf,
    /// Overrides the script's start pose.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub goal: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_CONTROL_POINTS)]
    pub control_points: usize,
    /// Directory for per-tick trajectories and `timing.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldKind {
    Magnification,
    Variance,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, default_value = "magnification")]
    pub mode: FieldKind,
    /// Trajectory CSV drawn as a latent curve, repeatable.
    #[arg(long = "path")]
    pub paths: Vec<PathBuf>,
    /// Obstacles whose influenced nodes are marked.
    #[arg(long = "obstacle", allow_hyphen_values = true)]
    pub obstacles: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    /// Raster cells per axis.
    #[arg(long, default_value_t = 80)]
    pub cells: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Seeds the reparameterization noise of the ELBO estimate.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub poses: usize,
    pub position_rmse: f64,
    pub position_diagonal: f64,
    pub orientation_error_deg: f64,
    pub neg_elbo: f64,
    pub position_loglik: f64,
    pub orientation_loglik: f64,
    pub kl: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Plan(a) => plan_cmd(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Plot(a) => plot(&a),
        Command::Eval(a) => {
            let report = eval(&a)?;
            let text =
                serde_json::to_string_pretty(&report).map_err(|e| Error::invalid(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let file = match a.kind {
        DataKind::ToyJc => {
            let d = ToyJcConfig::default();
            gen_toy_jc(&ToyJcConfig {
                samples: a.samples.unwrap_or(d.samples),
                demonstrations: a.demos.unwrap_or(d.demonstrations),
                noise: a.noise.unwrap_or(d.noise),
                seed: a.seed,
            })?
        }
        DataKind::Pouring => {
            let d = PouringConfig::default();
            gen_pouring(&PouringConfig {
                samples: a.samples.unwrap_or(d.samples),
                per_branch: a.demos.unwrap_or(d.per_branch),
                noise: a.noise.unwrap_or(d.noise),
                seed: a.seed,
                ..d
            })?
        }
    };
    file.save(&a.out)?;
    info!(
        "wrote {} demonstrations to {}",
        file.demonstrations.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let demos = DatasetFile::load(&a.data)?.demonstrations()?;
    let config = TrainConfig {
        latent_dim: a.latent_dim,
        hidden: a.hidden.clone(),
        rbf_kernels: a.rbf_k,
        alpha: a.alpha,
        beta: a.beta,
        learning_rate: a.lr,
        batch_size: a.batch,
        stage1_epochs: a.epochs,
        stage2_epochs: a.head_epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let model = train(&demos, &config)?;
    save_checkpoint(&model, &a.out)?;
    info!("wrote checkpoint {}", a.out.display());
    Ok(())
}

fn parse_obstacles(texts: &[String]) -> Result<Vec<Obstacle>> {
    texts.iter().map(|t| parse_obstacle(t)).collect()
}

fn request(
    start: Pose,
    goal: Pose,
    obstacles: Vec<Obstacle>,
    samples: usize,
    control_points: usize,
) -> PlanRequest {
    let mut req = PlanRequest::new(start, goal).with_obstacles(obstacles);
    req.samples = samples;
    req.control_points = control_points;
    req
}

fn load_model_and_graph(g: &GraphArgs) -> Result<(ManifoldModel, GeodesicGraph)> {
    let model = load_checkpoint(&g.ckpt)?;
    let graph = build_graph(&model, g.grid, g.margin)?;
    Ok((model, graph))
}

fn plan_cmd(a: &PlanArgs) -> Result<()> {
    let (model, mut graph) = load_model_and_graph(&a.graph)?;
    let mut req = request(
        parse_pose(&a.start)?,
        parse_pose(&a.goal)?,
        parse_obstacles(&a.obstacles)?,
        a.samples,
        a.control_points,
    );
    req.refine = a.refine;
    let out = plan(&model, &mut graph, &req)?;
    save_trajectory(&out.trajectory, &a.out)?;
    info!(
        "graph cost {:.4} over {} nodes, {} poses written to {}",
        out.latent.graph_cost,
        out.latent.nodes.len(),
        out.trajectory.len(),
        a.out.display()
    );
    Ok(())
}

fn pick_pose(flag: &Option<String>, from_script: &Option<Pose>, which: &str) -> Result<Pose> {
    match (flag, from_script) {
        (Some(text), _) => parse_pose(text),
        (None, Some(p)) => Pose::new(p.position.clone(), p.orientation.clone())
            .map_err(|e| Error::format(which, e.to_string())),
        (None, None) => Err(Error::invalid(format!(
            "no {which} pose: pass --{which} or set '{which}' in the script"
        ))),
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let script = load_script(&a.script)?;
    let (model, mut graph) = load_model_and_graph(&a.graph)?;
    let req = request(
        pick_pose(&a.start, &script.start, "start")?,
        pick_pose(&a.goal, &script.goal, "goal")?,
        Vec::new(),
        a.samples,
        a.control_points,
    );
    let outcome = replan_loop(&model, &mut graph, &script, &req)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    for tick in &outcome.ticks {
        save_trajectory(
            &tick.trajectory,
            &a.out.join(format!("tick_{:05}.csv", tick.tick)),
        )?;
    }
    save_timing_report(&outcome.report, &a.out.join("timing.json"))?;
    let r = &outcome.report;
    info!(
        "{} ticks, median {:.2} ms, p95 {:.2} ms, {} over the {:.1} ms budget",
        r.ticks, r.median_ms, r.p95_ms, r.over_budget, r.budget_ms
    );
    Ok(())
}

fn plot(a: &PlotArgs) -> Result<()> {
    let model = load_checkpoint(&a.ckpt)?;
    let paths = a
        .paths
        .iter()
        .map(|p| {
            load_trajectory(p)?
                .samples
                .iter()
                .map(|(_, pose)| model.encode_mean(pose))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let graph = if a.obstacles.is_empty() {
        None
    } else {
        let mut g = build_graph(&model, a.grid, DEFAULT_MARGIN)?;
        g.apply_obstacles(&parse_obstacles(&a.obstacles)?)?;
        Some(g)
    };
    let options = PlotOptions {
        mode: match a.mode {
            FieldKind::Magnification => PlotMode::Magnification,
            FieldKind::Variance => PlotMode::Variance,
        },
        cols: a.cells,
        rows: a.cells,
        paths,
        ..PlotOptions::default()
    };
    plot_latent(&model, graph.as_ref(), &options, &a.out)?;
    info!("wrote {}", a.out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<EvalReport> {
    let model = load_checkpoint(&a.ckpt)?;
    let demos = DatasetFile::load(&a.data)?.demonstrations()?;
    let poses: Vec<Pose> = demos.iter().flat_map(|d| d.poses().cloned()).collect();
    evaluate(&model, &poses, a.seed)
}

/// Reconstruction errors at the posterior mean and a one-sample ELBO estimate.
pub fn evaluate(model: &ManifoldModel, poses: &[Pose], seed: u64) -> Result<EvalReport> {
    let position_rmse = reconstruction_rmse(model, poses)?;
    let mut angle = 0.0;
    for p in poses {
        let dec = model.decode_vector(&model.encode_mean(p)?)?;
        angle += orientation_angle(&p.orientation, dec.orientation.as_slice())?.to_degrees();
    }
    let n = model.dims.n;
    let diagonal = (0..n)
        .map(|k| {
            let (lo, hi) = poses
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p.position[k]), hi.max(p.position[k]))
                });
            (hi - lo).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = DMatrix::from_fn(model.dims.d, poses.len(), |_, _| rng.sample(StandardNormal));
    let out = elbo_with_noise(model, poses, &noise, None, Trainable::HEADS)?;
    Ok(EvalReport {
        poses: poses.len(),
        position_rmse,
        position_diagonal: diagonal,
        orientation_error_deg: angle / poses.len() as f64,
        neg_elbo: out.loss,
        position_loglik: out.terms.position_loglik,
        orientation_loglik: out.terms.orientation_loglik,
        kl: out.terms.kl,
    })
}
