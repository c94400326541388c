//! Write magnification and variance plots of the toy model with a geodesic
//! drawn on top.
//!
//! cargo run --release --example magnification_plot -- [out_dir] [epochs]

use std::path::PathBuf;

use geomotion::geodesic::{build_graph, DEFAULT_MARGIN};
use geomotion::io::{gen_toy_jc, plot_latent, PlotMode, PlotOptions, ToyJcConfig};
use geomotion::types::Obstacle;
use geomotion::vae::{train, TrainConfig};

fn main() -> geomotion::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let demos = gen_toy_jc(&ToyJcConfig::default())?.demonstrations()?;
    let model = train(
        &demos,
        &TrainConfig {
            stage1_epochs: epochs,
            stage2_epochs: epochs / 4,
            ..TrainConfig::default()
        },
    )?;
    let mut graph = build_graph(&model, 100, DEFAULT_MARGIN)?;
    graph.apply_obstacles(&[Obstacle::new(vec![0.5, 1.2], 0.15, 50.0)?])?;

    let start = model.encode_mean(&demos[0].samples[2].pose)?;
    let goal = model.encode_mean(&demos[0].samples[97].pose)?;
    let path =
        graph.shortest_path_nodes(graph.nearest_node(&start)?, graph.nearest_node(&goal)?)?;
    for (mode, name) in [
        (PlotMode::Magnification, "magnification.svg"),
        (PlotMode::Variance, "variance.svg"),
    ] {
        let options = PlotOptions {
            mode,
            paths: vec![graph.path_coords(&path.nodes)],
            ..PlotOptions::default()
        };
        let file = out.join(name);
        plot_latent(&model, Some(&graph), &options, &file)?;
        println!("wrote {}", file.display());
    }
    Ok(())
}
