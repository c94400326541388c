//! Train on the J/C toy set and compare a geodesic with the straight latent
//! segment between the same endpoints.
//!
//! cargo run --release --example toy_jc -- [epochs]

use std::time::Instant;

use geomotion::geodesic::{build_graph, DEFAULT_MARGIN};
use geomotion::io::{gen_toy_jc, ToyJcConfig};
use geomotion::types::{orientation_angle, Pose};
use geomotion::vae::{reconstruction_rmse, train, TrainConfig};
use nalgebra::DVector;

fn mean_std_along(model: &geomotion::vae::ManifoldModel, pts: &[DVector<f64>]) -> f64 {
    pts.iter()
        .map(|z| model.decode_vector(z).unwrap().mean_position_std())
        .sum::<f64>()
        / pts.len() as f64
}

fn main() -> geomotion::Result<()> {
    env_logger::init();
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(2000);
    let data = gen_toy_jc(&ToyJcConfig::default())?;
    let demos = data.demonstrations()?;
    let held_out = gen_toy_jc(&ToyJcConfig {
        seed: 99,
        ..ToyJcConfig::default()
    })?
    .demonstrations()?;

    let config = TrainConfig {
        stage1_epochs: epochs,
        stage2_epochs: epochs / 4,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let model = train(&demos, &config)?;
    println!("trained in {:.1} s", t0.elapsed().as_secs_f64());

    let test: Vec<Pose> = held_out.iter().flat_map(|d| d.poses().cloned()).collect();
    let rmse = reconstruction_rmse(&model, &test)?;
    let mut angle = 0.0;
    for p in &test {
        let dec = model.decode_vector(&model.encode_mean(p)?)?;
        angle += orientation_angle(&p.orientation, dec.orientation.as_slice())?.to_degrees();
    }
    println!(
        "held-out position rmse {rmse:.4} (diagonal {:.3})",
        5f64.sqrt()
    );
    println!(
        "held-out orientation error {:.2} deg",
        angle / test.len() as f64
    );

    let graph = build_graph(&model, 100, DEFAULT_MARGIN)?;
    let start = &demos[0].samples[5].pose;
    let goal = &demos[0].samples[90].pose;
    let (zs, zg) = (model.encode_mean(start)?, model.encode_mean(goal)?);
    let path = graph.shortest_path_nodes(graph.nearest_node(&zs)?, graph.nearest_node(&zg)?)?;
    let geodesic = graph.path_coords(&path.nodes);
    let straight: Vec<DVector<f64>> = (0..=50)
        .map(|i| &zs + (&zg - &zs) * (i as f64 / 50.0))
        .collect();
    println!(
        "mean predictive std: geodesic {:.4}, straight segment {:.4}",
        mean_std_along(&model, &geodesic),
        mean_std_along(&model, &straight)
    );
    Ok(())
}
