//! Grid-graph geodesics, obstacle reweighting and spline smoothing.

mod dijkstra;
mod graph;
mod spline;

pub use dijkstra::{dijkstra, dijkstra_adjacency};
pub use graph::{
    build_graph, build_graph_in_box, GeodesicGraph, GraphEdge, GraphNode, GraphPath,
    ObstacleReport, SharedGraph, DEFAULT_MARGIN, INFLUENCE_EPS,
};
pub use spline::{
    chord_parameters, fit_residual, fit_spline, refine_spline, spline_length, SplinePath,
    DEFAULT_CONTROL_POINTS, LENGTH_SAMPLES,
};
