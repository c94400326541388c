//! Sweep a spherical obstacle across the pouring workspace at 100 Hz and
//! replan on every tick.
//!
//! cargo run --release --example obstacle_replanning -- [epochs]

use geomotion::geodesic::{build_graph, DEFAULT_MARGIN};
use geomotion::io::{gen_pouring, pouring_orientation, pouring_position, PouringConfig};
use geomotion::motion::{min_clearance, replan_loop, PlanRequest, ReplanScript};
use geomotion::types::Pose;
use geomotion::vae::{train, TrainConfig};

fn main() -> geomotion::Result<()> {
    env_logger::init();
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(1000);
    let demos = gen_pouring(&PouringConfig::default())?.demonstrations()?;
    let model = train(
        &demos,
        &TrainConfig {
            stage1_epochs: epochs,
            stage2_epochs: epochs / 4,
            ..TrainConfig::default()
        },
    )?;
    let mut graph = build_graph(&model, 100, DEFAULT_MARGIN)?;

    let pose = |s: f64| {
        Pose::new(
            pouring_position(1, s).to_vec(),
            pouring_orientation(1, s).to_vec(),
        )
    };
    let request = PlanRequest::new(pose(0.05)?, pose(0.95)?);
    let (radius, strength) = (0.04, 50.0);
    let script = ReplanScript::linear_sweep(
        &pouring_position(0, 0.1),
        &pouring_position(0, 0.9),
        radius,
        strength,
        300,
        100.0,
    )?;
    let outcome = replan_loop(&model, &mut graph, &script, &request)?;
    let r = &outcome.report;
    println!(
        "{} ticks: median {:.2} ms, p95 {:.2} ms, max {:.2} ms, {} over budget",
        r.ticks, r.median_ms, r.p95_ms, r.max_ms, r.over_budget
    );
    let worst = outcome
        .ticks
        .iter()
        .map(|t| {
            let center = &script.obstacles_at(t.tick)[0].center;
            min_clearance(&t.trajectory, center) / radius
        })
        .fold(f64::INFINITY, f64::min);
    println!("smallest clearance over all ticks: {worst:.2} radii");
    Ok(())
}
