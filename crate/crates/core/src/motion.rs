//! Trajectory generation from latent geodesics and the replanning loop.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{
    fit_spline, refine_spline, GeodesicGraph, SplinePath, DEFAULT_CONTROL_POINTS,
};
use crate::metric::AmbientMetricSpec;
use crate::types::{Obstacle, Pose, Trajectory};
use crate::vae::ManifoldModel;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub start: Pose,
    pub goal: Pose,
    pub obstacles: Vec<Obstacle>,
    pub samples: usize,
    pub refine: bool,
    pub control_points: usize,
    pub refine_iterations: usize,
}

impl PlanRequest {
    pub fn new(start: Pose, goal: Pose) -> Self {
        PlanRequest {
            start,
            goal,
            obstacles: Vec::new(),
            samples: 100,
            refine: false,
            control_points: DEFAULT_CONTROL_POINTS,
            refine_iterations: 50,
        }
    }

    pub fn with_obstacles(mut self, obstacles: Vec<Obstacle>) -> Self {
        self.obstacles = obstacles;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::invalid(format!(
                "sample count must be >= 2, got {}",
                self.samples
            )));
        }
        if self.start.n() != self.goal.n() || self.start.m() != self.goal.m() {
            return Err(Error::invalid("start and goal dimensions differ"));
        }
        Ok(())
    }
}

/// Latent-side record of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPlan {
    pub start: DVector<f64>,
    pub goal: DVector<f64>,
    /// The goal orientation was replaced by its antipode because that
    /// encoding is cheaper to reach.
    pub goal_flipped: bool,
    pub nodes: Vec<usize>,
    pub graph_cost: f64,
    pub spline: Option<SplinePath>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub trajectory: Trajectory,
    pub latent: LatentPlan,
}

/// Decodes `samples` uniformly spaced spline points, flipping quaternions
/// where needed so consecutive orientations have a nonnegative dot product.
pub fn decode_trajectory(
    model: &ManifoldModel,
    spline: &SplinePath,
    samples: usize,
) -> Result<Trajectory> {
    if samples < 2 {
        return Err(Error::invalid("trajectory needs >= 2 samples"));
    }
    let mut out: Vec<(f64, Pose)> = Vec::with_capacity(samples);
    for (i, z) in spline.sample(samples).iter().enumerate() {
        let mut pose = model.decode_vector(z)?.pose();
        if let Some((_, prev)) = out.last() {
            let dot: f64 = prev
                .orientation
                .iter()
                .zip(&pose.orientation)
                .map(|(a, b)| a * b)
                .sum();
            if dot < 0.0 {
                pose = pose.antipode();
            }
        }
        out.push((i as f64 / (samples - 1) as f64, pose));
    }
    Trajectory::new(out)
}

fn same_pose(a: &Pose, b: &Pose) -> bool {
    let dot: f64 = a
        .orientation
        .iter()
        .zip(&b.orientation)
        .map(|(x, y)| x * y)
        .sum();
    a.position == b.position && (dot.abs() - 1.0).abs() < 1e-12
}

/// Goal latent point and node; the antipodal encoding is used when it is
/// cheaper to reach from `start_node` on the current weights.
fn resolve_goal(
    model: &ManifoldModel,
    graph: &GeodesicGraph,
    start_node: usize,
    goal: &Pose,
) -> Result<(DVector<f64>, bool, crate::geodesic::GraphPath)> {
    let z = model.encode_mean(goal)?;
    let path = graph.shortest_path_nodes(start_node, graph.nearest_node(&z)?)?;
    let z_flip = model.encode_mean(&goal.antipode())?;
    let path_flip = graph.shortest_path_nodes(start_node, graph.nearest_node(&z_flip)?)?;
    if path_flip.cost < path.cost {
        Ok((z_flip, true, path_flip))
    } else {
        Ok((z, false, path))
    }
}

fn latent_polyline(
    graph: &GeodesicGraph,
    nodes: &[usize],
    start: &DVector<f64>,
    goal: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let mut pts = graph.path_coords(nodes);
    if pts.len() == 1 {
        pts.push(goal.clone());
    }
    pts[0] = start.clone();
    let last = pts.len() - 1;
    pts[last] = goal.clone();
    pts
}

/// Plans on the graph's current obstacle weights without modifying it.
pub fn plan_on(
    model: &ManifoldModel,
    graph: &GeodesicGraph,
    request: &PlanRequest,
) -> Result<Plan> {
    request.validate()?;
    let z_start = model.encode_mean(&request.start)?;
    let start_node = graph.nearest_node(&z_start)?;
    let (z_goal, goal_flipped, path) = resolve_goal(model, graph, start_node, &request.goal)?;

    if same_pose(&request.start, &request.goal) {
        let pose = model.decode_vector(&z_start)?.pose();
        return Ok(Plan {
            trajectory: Trajectory::new(vec![(0.0, pose)])?,
            latent: LatentPlan {
                start: z_start,
                goal: z_goal,
                goal_flipped,
                nodes: path.nodes,
                graph_cost: path.cost,
                spline: None,
            },
        });
    }

    let pts = latent_polyline(graph, &path.nodes, &z_start, &z_goal);
    let mut spline = fit_spline(&pts, request.control_points)?;
    if request.refine {
        let ambient = AmbientMetricSpec::new(graph.obstacles().to_vec());
        spline = refine_spline(model, &spline, &ambient, request.refine_iterations)?;
    }
    let trajectory = decode_trajectory(model, &spline, request.samples)?;
    Ok(Plan {
        trajectory,
        latent: LatentPlan {
            start: z_start,
            goal: z_goal,
            goal_flipped,
            nodes: path.nodes,
            graph_cost: path.cost,
            spline: Some(spline),
        },
    })
}

/// Applies the request's obstacles to the graph, then plans.
pub fn plan(
    model: &ManifoldModel,
    graph: &mut GeodesicGraph,
    request: &PlanRequest,
) -> Result<Plan> {
    graph.apply_obstacles(&request.obstacles)?;
    plan_on(model, graph, request)
}

/// Obstacle configuration taking effect at `tick`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub tick: usize,
    pub obstacles: Vec<Obstacle>,
}

/// Timeline of obstacle states for the replanning loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanScript {
    pub tick_rate_hz: f64,
    pub total_ticks: usize,
    pub timeline: Vec<ScriptEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Pose>,
}

impl ReplanScript {
    pub fn validate(&self) -> Result<()> {
        if !(self.tick_rate_hz > 0.0 && self.tick_rate_hz.is_finite()) {
            return Err(Error::invalid("tick rate must be > 0"));
        }
        if self.timeline.windows(2).any(|w| w[1].tick <= w[0].tick) {
            return Err(Error::invalid("timeline ticks must be strictly increasing"));
        }
        Ok(())
    }

    /// Obstacles in force at `tick` (empty before the first event).
    pub fn obstacles_at(&self, tick: usize) -> &[Obstacle] {
        self.timeline
            .iter()
            .rev()
            .find(|e| e.tick <= tick)
            .map_or(&[], |e| e.obstacles.as_slice())
    }

    /// An obstacle moving linearly from `from` to `to` over `ticks` ticks.
    pub fn linear_sweep(
        from: &[f64],
        to: &[f64],
        radius: f64,
        strength: f64,
        ticks: usize,
        tick_rate_hz: f64,
    ) -> Result<Self> {
        let timeline = (0..ticks)
            .map(|k| {
                let s = if ticks > 1 {
                    k as f64 / (ticks - 1) as f64
                } else {
                    0.0
                };
                let center = from.iter().zip(to).map(|(a, b)| a + s * (b - a)).collect();
                Ok(ScriptEvent {
                    tick: k,
                    obstacles: vec![Obstacle::new(center, radius, strength)?],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReplanScript {
            tick_rate_hz,
            total_ticks: ticks,
            timeline,
            start: None,
            goal: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickResult {
    pub tick: usize,
    pub nodes: Vec<usize>,
    pub trajectory: Trajectory,
    pub touched_edges: usize,
    /// Reweighting, shortest path and spline fit.
    pub plan_seconds: f64,
    pub decode_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub ticks: usize,
    pub budget_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub mean_decode_ms: f64,
    pub over_budget: usize,
}

impl TimingReport {
    fn from_ticks(ticks: &[TickResult], budget_ms: f64) -> Self {
        let mut ms: Vec<f64> = ticks.iter().map(|t| t.plan_seconds * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let pick = |q: f64| {
            if ms.is_empty() {
                return 0.0;
            }
            let idx = ((q * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1;
            ms[idx]
        };
        TimingReport {
            ticks: ticks.len(),
            budget_ms,
            median_ms: pick(0.5),
            p95_ms: pick(0.95),
            max_ms: ms.last().copied().unwrap_or(0.0),
            mean_decode_ms: ticks.iter().map(|t| t.decode_seconds * 1e3).sum::<f64>()
                / ticks.len().max(1) as f64,
            over_budget: ms.iter().filter(|v| **v > budget_ms).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplanOutcome {
    pub ticks: Vec<TickResult>,
    pub report: TimingReport,
}

/// Runs the scripted loop: each tick reweights the graph for the current
/// obstacles, replans from the progress node to the goal and refits the
/// spline. Progress advances one node along the previous plan per tick.
pub fn replan_loop(
    model: &ManifoldModel,
    graph: &mut GeodesicGraph,
    script: &ReplanScript,
    request: &PlanRequest,
) -> Result<ReplanOutcome> {
    script.validate()?;
    request.validate()?;
    graph.apply_obstacles(script.obstacles_at(0))?;
    let z_start = model.encode_mean(&request.start)?;
    let mut progress = graph.nearest_node(&z_start)?;
    let (z_goal, _, _) = resolve_goal(model, graph, progress, &request.goal)?;
    let goal_node = graph.nearest_node(&z_goal)?;

    let mut ticks = Vec::with_capacity(script.total_ticks);
    for tick in 0..script.total_ticks {
        let t0 = Instant::now();
        let report = graph.apply_obstacles(script.obstacles_at(tick))?;
        let path = graph.shortest_path_nodes(progress, goal_node)?;
        let from = if tick == 0 {
            z_start.clone()
        } else {
            graph.node(progress).coords.clone()
        };
        let pts = latent_polyline(graph, &path.nodes, &from, &z_goal);
        let spline = fit_spline(&pts, request.control_points)?;
        let plan_seconds = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let trajectory = decode_trajectory(model, &spline, request.samples)?;
        let decode_seconds = t1.elapsed().as_secs_f64();

        if path.nodes.len() > 1 {
            progress = path.nodes[1];
        }
        ticks.push(TickResult {
            tick,
            nodes: path.nodes,
            trajectory,
            touched_edges: report.touched_edges.len(),
            plan_seconds,
            decode_seconds,
        });
    }
    let report = TimingReport::from_ticks(&ticks, 1e3 / script.tick_rate_hz);
    Ok(ReplanOutcome { ticks, report })
}

/// Smallest distance from any trajectory position to `center`.
pub fn min_clearance(trajectory: &Trajectory, center: &[f64]) -> f64 {
    trajectory
        .positions()
        .map(|p| {
            p.iter()
                .zip(center)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}
