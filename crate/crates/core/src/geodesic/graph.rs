use log::debug;
use nalgebra::{DMatrix, DVector};
use parking_lot::{RwLock, RwLockReadGuard};
use rayon::prelude::*;

use super::dijkstra::dijkstra;
use crate::error::{check_dim, Error, Result};
use crate::metric::{ambient_factor, metric_blocks};
use crate::types::{LatentPoint, Obstacle};
use crate::vae::ManifoldModel;

/// Nodes whose factor exceeds `1 + INFLUENCE_EPS` count as near an obstacle.
pub const INFLUENCE_EPS: f64 = 1e-3;
pub const DEFAULT_MARGIN: f64 = 0.15;

/// Cached decoder outputs and metric blocks at one grid node.
#[derive(Debug, Clone)]
pub struct GraphNode {
    pub coords: DVector<f64>,
    pub position: DVector<f64>,
    pub orientation: DVector<f64>,
    pub position_std: DVector<f64>,
    pub concentration: f64,
    pub metric_position: DMatrix<f64>,
    pub metric_orientation: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub e_pos: f64,
    pub e_ori: f64,
    /// Endpoint factors averaged with the endpoints' shares of `e_pos` as
    /// weights.
    pub lambda: f64,
    pub weight: f64,
    base_weight: f64,
    share_a: f64,
}

impl GraphEdge {
    fn new(a: usize, b: usize, pos_a: f64, pos_b: f64, e_ori: f64) -> Self {
        let e_pos = 0.5 * (pos_a + pos_b);
        let share_a = if e_pos > 0.0 {
            0.5 * pos_a / e_pos
        } else {
            0.5
        };
        let weight = (e_pos + e_ori).sqrt();
        GraphEdge {
            a,
            b,
            e_pos,
            e_ori,
            lambda: 1.0,
            weight,
            base_weight: weight,
            share_a,
        }
    }

    pub fn base_weight(&self) -> f64 {
        self.base_weight
    }

    fn set_factors(&mut self, at_a: f64, at_b: f64) {
        let lambda = self.share_a * at_a + (1.0 - self.share_a) * at_b;
        self.lambda = lambda;
        self.weight = (lambda * self.e_pos + self.e_ori).sqrt();
    }

    fn reset(&mut self) {
        self.lambda = 1.0;
        self.weight = self.base_weight;
    }
}

/// Result of a shortest-path query.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPath {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

/// What an obstacle update touched.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObstacleReport {
    /// Edge indices whose weight was rewritten, ascending.
    pub touched_edges: Vec<usize>,
    pub influenced_nodes: Vec<usize>,
}

/// 8-connected `G x G` grid over a 2-D latent box with decoded poses and
/// split edge energies cached at build time.
#[derive(Debug, Clone)]
pub struct GeodesicGraph {
    grid: usize,
    lo: DVector<f64>,
    hi: DVector<f64>,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    adjacency: Vec<Vec<(usize, usize)>>,
    node_factor: Vec<f64>,
    influenced: Vec<usize>,
    obstacles: Vec<Obstacle>,
}

const OFFSETS: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

/// Builds the graph over the encoded training support expanded by `margin`
/// (a fraction of the extent) per side.
pub fn build_graph(model: &ManifoldModel, grid: usize, margin: f64) -> Result<GeodesicGraph> {
    let (mut lo, mut hi) = model.latent_bounds()?;
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!("margin must be >= 0, got {margin}")));
    }
    for j in 0..lo.len() {
        let pad = margin * (hi[j] - lo[j]).max(1e-9);
        lo[j] -= pad;
        hi[j] += pad;
    }
    build_graph_in_box(model, grid, &lo, &hi)
}

pub fn build_graph_in_box(
    model: &ManifoldModel,
    grid: usize,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<GeodesicGraph> {
    if grid < 2 {
        return Err(Error::invalid(format!(
            "grid size must be >= 2, got {grid}"
        )));
    }
    if model.dims.d != 2 {
        return Err(Error::invalid(format!(
            "grid graphs need a 2-D latent space, model has d = {}",
            model.dims.d
        )));
    }
    check_dim("box lower corner", 2, lo.len())?;
    check_dim("box upper corner", 2, hi.len())?;
    if (0..2).any(|j| !(hi[j] > lo[j])) {
        return Err(Error::invalid("empty latent box"));
    }
    let step = (hi - lo) / (grid - 1) as f64;
    let nodes = (0..grid * grid)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % grid, k / grid);
            let coords =
                DVector::from_vec(vec![lo[0] + step[0] * i as f64, lo[1] + step[1] * j as f64]);
            let blocks = metric_blocks(model, &coords)?;
            Ok(GraphNode {
                coords,
                position: blocks.decoded.position,
                orientation: blocks.decoded.orientation,
                position_std: blocks.decoded.position_std,
                concentration: blocks.decoded.concentration,
                metric_position: blocks.position,
                metric_orientation: blocks.orientation,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut edges = Vec::with_capacity(4 * grid * grid);
    let mut adjacency = vec![Vec::with_capacity(8); grid * grid];
    for j in 0..grid {
        for i in 0..grid {
            let a = j * grid + i;
            for (di, dj) in OFFSETS {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || ni >= grid as isize || nj >= grid as isize {
                    continue;
                }
                let b = nj as usize * grid + ni as usize;
                let (na, nb) = (&nodes[a], &nodes[b]);
                let dz = &nb.coords - &na.coords;
                let quad = |m: &DMatrix<f64>| dz.dot(&(m * &dz));
                let pos_a = quad(&na.metric_position).max(0.0);
                let pos_b = quad(&nb.metric_position).max(0.0);
                let e_ori =
                    (0.5 * (quad(&na.metric_orientation) + quad(&nb.metric_orientation))).max(0.0);
                let id = edges.len();
                edges.push(GraphEdge::new(a, b, pos_a, pos_b, e_ori));
                adjacency[a].push((b, id));
                adjacency[b].push((a, id));
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    debug!(
        "graph {grid}x{grid}: {} nodes, {} edges",
        nodes.len(),
        edges.len()
    );
    Ok(GeodesicGraph {
        grid,
        lo: lo.clone(),
        hi: hi.clone(),
        node_factor: vec![1.0; nodes.len()],
        nodes,
        edges,
        adjacency,
        influenced: Vec::new(),
        obstacles: Vec::new(),
    })
}

impl GeodesicGraph {
    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn bounds(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.lo, &self.hi)
    }

    pub fn spacing(&self) -> DVector<f64> {
        (&self.hi - &self.lo) / (self.grid - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node(&self, k: usize) -> &GraphNode {
        &self.nodes[k]
    }

    /// `(neighbor, edge index)` pairs of node `k`, sorted by neighbor.
    pub fn neighbors(&self, k: usize) -> &[(usize, usize)] {
        &self.adjacency[k]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<&GraphEdge> {
        self.adjacency[a]
            .iter()
            .find(|(v, _)| *v == b)
            .map(|(_, e)| &self.edges[*e])
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn node_factor(&self, k: usize) -> f64 {
        self.node_factor[k]
    }

    /// Grid node closest to `z`; points outside the box snap to its border.
    pub fn nearest_node(&self, z: &DVector<f64>) -> Result<usize> {
        check_dim("latent point", 2, z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("latent point"));
        }
        let step = self.spacing();
        let idx = |j: usize| {
            let f = ((z[j] - self.lo[j]) / step[j]).round();
            f.clamp(0.0, (self.grid - 1) as f64) as usize
        };
        Ok(idx(1) * self.grid + idx(0))
    }

    pub fn shortest_path_nodes(&self, start: usize, goal: usize) -> Result<GraphPath> {
        let (nodes, cost) = dijkstra(self.nodes.len(), start, goal, |u, emit| {
            for &(v, e) in &self.adjacency[u] {
                emit(v, self.edges[e].weight);
            }
        })?;
        Ok(GraphPath { nodes, cost })
    }

    /// Shortest path between the nodes nearest to `start` and `goal`.
    pub fn shortest_path(&self, start: &LatentPoint, goal: &LatentPoint) -> Result<GraphPath> {
        let s = self.nearest_node(&start.to_vector())?;
        let g = self.nearest_node(&goal.to_vector())?;
        self.shortest_path_nodes(s, g)
    }

    /// Sum of current edge weights along consecutive nodes.
    pub fn path_cost(&self, nodes: &[usize]) -> Result<f64> {
        nodes.windows(2).try_fold(0.0, |acc, w| {
            self.edge_between(w[0], w[1])
                .map(|e| acc + e.weight)
                .ok_or_else(|| {
                    Error::invalid(format!("nodes {} and {} are not adjacent", w[0], w[1]))
                })
        })
    }

    pub fn path_coords(&self, nodes: &[usize]) -> Vec<DVector<f64>> {
        nodes
            .iter()
            .map(|&k| self.nodes[k].coords.clone())
            .collect()
    }

    /// Rescales the position energy of edges near the obstacles using the
    /// cached decoded node positions, and restores every edge that left the
    /// influence region to its baseline weight.
    pub fn apply_obstacles(&mut self, obstacles: &[Obstacle]) -> Result<ObstacleReport> {
        let n = self.nodes[0].position.len();
        for o in obstacles {
            check_dim("obstacle center", n, o.center.len())?;
        }
        let factors: Vec<f64> = self
            .nodes
            .iter()
            .map(|node| ambient_factor(node.position.as_slice(), obstacles))
            .collect();
        let influenced: Vec<usize> = (0..self.nodes.len())
            .filter(|&k| factors[k] > 1.0 + INFLUENCE_EPS)
            .collect();
        let mut in_new = vec![false; self.nodes.len()];
        for &k in &influenced {
            in_new[k] = true;
        }

        let mut touched: Vec<usize> = self
            .influenced
            .iter()
            .chain(&influenced)
            .flat_map(|&k| self.adjacency[k].iter().map(|&(_, e)| e))
            .collect();
        touched.sort_unstable();
        touched.dedup();

        for &e in &touched {
            let edge = &mut self.edges[e];
            if in_new[edge.a] || in_new[edge.b] {
                edge.set_factors(factors[edge.a], factors[edge.b]);
            } else {
                edge.reset();
            }
        }
        self.node_factor = factors;
        self.influenced = influenced.clone();
        self.obstacles = obstacles.to_vec();
        Ok(ObstacleReport {
            touched_edges: touched,
            influenced_nodes: influenced,
        })
    }

    pub fn clear_obstacles(&mut self) -> ObstacleReport {
        self.apply_obstacles(&[])
            .expect("empty obstacle list is always valid")
    }
}

/// A graph behind a reader-writer lock: obstacle updates take the write
/// lock for their whole duration, so queries never see a partial update.
#[derive(Debug)]
pub struct SharedGraph {
    inner: RwLock<GeodesicGraph>,
}

impl SharedGraph {
    pub fn new(graph: GeodesicGraph) -> Self {
        SharedGraph {
            inner: RwLock::new(graph),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, GeodesicGraph> {
        self.inner.read()
    }

    pub fn apply_obstacles(&self, obstacles: &[Obstacle]) -> Result<ObstacleReport> {
        self.inner.write().apply_obstacles(obstacles)
    }

    pub fn shortest_path_nodes(&self, start: usize, goal: usize) -> Result<GraphPath> {
        self.inner.read().shortest_path_nodes(start, goal)
    }

    pub fn into_inner(self) -> GeodesicGraph {
        self.inner.into_inner()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn flat_graph(grid: usize) -> GeodesicGraph {
        let model = ManifoldModel::linear(DMatrix::identity(2, 2), &[0.0, 0.0, 1.0]).unwrap();
        let lo = DVector::from_vec(vec![0.0, 0.0]);
        let hi = DVector::from_vec(vec![1.0, 1.0]);
        build_graph_in_box(&model, grid, &lo, &hi).unwrap()
    }

    #[test]
    fn counts_match_grid_combinatorics() {
        for g in [2usize, 3, 7] {
            let graph = flat_graph(g);
            assert_eq!(graph.node_count(), g * g);
            assert_eq!(graph.edge_count(), 2 * g * (g - 1) + 2 * (g - 1) * (g - 1));
            let degree_sum: usize = (0..g * g).map(|k| graph.neighbors(k).len()).sum();
            assert_eq!(degree_sum, 2 * graph.edge_count());
        }
    }

    #[test]
    fn flat_edges_have_euclidean_weights() {
        let graph = flat_graph(11);
        let h = 0.1;
        for e in graph.edges() {
            let (ia, ja) = (e.a % 11, e.a / 11);
            let (ib, jb) = (e.b % 11, e.b / 11);
            let want = if ia != ib && ja != jb { SQRT_2 * h } else { h };
            assert!((e.weight - want).abs() < 1e-12);
            assert_eq!(e.lambda, 1.0);
        }
    }

    #[test]
    fn snapping_clamps_to_the_box() {
        let graph = flat_graph(5);
        assert_eq!(
            graph
                .nearest_node(&DVector::from_vec(vec![-3.0, -3.0]))
                .unwrap(),
            0
        );
        assert_eq!(
            graph
                .nearest_node(&DVector::from_vec(vec![0.26, 0.49]))
                .unwrap(),
            2 * 5 + 1
        );
        assert_eq!(
            graph
                .nearest_node(&DVector::from_vec(vec![9.0, 9.0]))
                .unwrap(),
            24
        );
    }

    #[test]
    fn start_equals_goal() {
        let graph = flat_graph(4);
        let p = graph.shortest_path_nodes(5, 5).unwrap();
        assert_eq!(p.nodes, vec![5]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn far_obstacle_touches_nothing() {
        let mut graph = flat_graph(6);
        let report = graph
            .apply_obstacles(&[Obstacle::new(vec![100.0, 100.0], 0.1, 50.0).unwrap()])
            .unwrap();
        assert!(report.touched_edges.is_empty());
        assert!(graph.edges().iter().all(|e| e.weight == e.base_weight()));
    }

    #[test]
    fn remove_restores_baseline_bits() {
        let mut graph = flat_graph(9);
        let before: Vec<u64> = graph.edges().iter().map(|e| e.weight.to_bits()).collect();
        let report = graph
            .apply_obstacles(&[Obstacle::new(vec![0.5, 0.5], 0.1, 10.0).unwrap()])
            .unwrap();
        assert!(!report.touched_edges.is_empty());
        let center = 4 * 9 + 4;
        for &(_, e) in graph.neighbors(center) {
            assert!(graph.edges()[e].weight > graph.edges()[e].base_weight());
        }
        graph.clear_obstacles();
        let after: Vec<u64> = graph.edges().iter().map(|e| e.weight.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = ManifoldModel::linear(DMatrix::identity(2, 2), &[1.0, 0.0]).unwrap();
        let lo = DVector::zeros(2);
        let hi = DVector::from_element(2, 1.0);
        assert!(build_graph_in_box(&model, 1, &lo, &hi).is_err());
        assert!(build_graph(&model, 10, 0.15).is_err()); // no latent support
        let model3 = ManifoldModel::linear(DMatrix::identity(3, 3), &[1.0, 0.0]).unwrap();
        assert!(build_graph_in_box(&model3, 4, &lo, &hi).is_err());
    }
}
