//! Smooth a graph geodesic with a cubic spline, shorten it under the
//! pullback metric and decode it into a pose trajectory.
//!
//! cargo run --release --example spline_refinement -- [epochs]

use geomotion::geodesic::{
    build_graph, fit_spline, refine_spline, spline_length, DEFAULT_CONTROL_POINTS, DEFAULT_MARGIN,
};
use geomotion::io::{gen_toy_jc, trajectory_csv, ToyJcConfig};
use geomotion::metric::{curve_length, AmbientMetricSpec};
use geomotion::motion::decode_trajectory;
use geomotion::vae::{train, TrainConfig};

fn main() -> geomotion::Result<()> {
    env_logger::init();
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(1000);
    let demos = gen_toy_jc(&ToyJcConfig::default())?.demonstrations()?;
    let model = train(
        &demos,
        &TrainConfig {
            stage1_epochs: epochs,
            stage2_epochs: epochs / 4,
            ..TrainConfig::default()
        },
    )?;
    let graph = build_graph(&model, 100, DEFAULT_MARGIN)?;
    let ambient = AmbientMetricSpec::default();

    let start = model.encode_mean(&demos[1].samples[10].pose)?;
    let goal = model.encode_mean(&demos[1].samples[80].pose)?;
    let path =
        graph.shortest_path_nodes(graph.nearest_node(&start)?, graph.nearest_node(&goal)?)?;
    let points = graph.path_coords(&path.nodes);
    println!("graph path: {} nodes, cost {:.4}", points.len(), path.cost);
    if points.len() < 2 {
        return Ok(());
    }
    println!(
        "polyline length {:.4}",
        curve_length(&model, &points, &ambient)?
    );
    let spline = fit_spline(&points, DEFAULT_CONTROL_POINTS)?;
    println!(
        "spline length {:.4}",
        spline_length(&model, &spline, &ambient)?
    );
    let refined = refine_spline(&model, &spline, &ambient, 50)?;
    println!(
        "refined length {:.4}",
        spline_length(&model, &refined, &ambient)?
    );
    let traj = decode_trajectory(&model, &refined, 20)?;
    print!("{}", trajectory_csv(&traj)?);
    Ok(())
}
