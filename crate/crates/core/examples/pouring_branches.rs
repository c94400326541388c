//! Plan within and across the three grasp-and-pour branches and print which
//! branch each trajectory passes through.
//!
//! cargo run --release --example pouring_branches -- [epochs]

use geomotion::geodesic::{build_graph, DEFAULT_MARGIN};
use geomotion::io::{gen_pouring, PouringConfig, POURING_BRANCHES};
use geomotion::motion::{plan, PlanRequest};
use geomotion::types::{Pose, Trajectory};
use geomotion::vae::{train, TrainConfig};

fn branch_sequence(traj: &Trajectory, reference: &[(Vec<f64>, u32)]) -> Vec<u32> {
    let mut seq: Vec<u32> = Vec::new();
    for p in traj.positions() {
        let (_, label) = reference
            .iter()
            .map(|(x, l)| {
                let d: f64 = x.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
                (d, *l)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        if seq.last() != Some(&label) {
            seq.push(label);
        }
    }
    seq
}

fn main() -> geomotion::Result<()> {
    env_logger::init();
    let epochs: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(2000);
    let config = PouringConfig::default();
    let demos = gen_pouring(&config)?.demonstrations()?;
    let model = train(
        &demos,
        &TrainConfig {
            stage1_epochs: epochs,
            stage2_epochs: epochs / 4,
            ..TrainConfig::default()
        },
    )?;
    let mut graph = build_graph(&model, 100, DEFAULT_MARGIN)?;

    let reference: Vec<(Vec<f64>, u32)> = demos
        .iter()
        .flat_map(|d| d.samples.iter())
        .filter_map(|s| s.label.map(|l| (s.pose.position.clone(), l)))
        .collect();
    // middle demonstration of each branch
    let pick = |branch: usize, frac: f64| -> Pose {
        let demo = &demos[branch * config.per_branch + config.per_branch / 2];
        let k = ((demo.samples.len() - 1) as f64 * frac).round() as usize;
        demo.samples[k].pose.clone()
    };
    for from in 0..POURING_BRANCHES {
        for to in 0..POURING_BRANCHES {
            let req = PlanRequest::new(pick(from, 0.1), pick(to, 0.9));
            let out = plan(&model, &mut graph, &req)?;
            println!(
                "grasp {from} -> pour {to}: cost {:.3}, branches {:?}",
                out.latent.graph_cost,
                branch_sequence(&out.trajectory, &reference)
            );
        }
    }
    Ok(())
}
