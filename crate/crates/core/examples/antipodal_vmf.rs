//! Compare the plain and antipodal von Mises-Fisher densities on the unit
//! quaternions.
//!
//! cargo run --example antipodal_vmf

use geomotion::vae::{antipodal_vmf_log_density, log_normalizer, vmf_log_density, VmfParams};

fn main() -> geomotion::Result<()> {
    let mean = vec![1.0, 0.0, 0.0, 0.0];
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let probes = [
        ("q = mu", vec![1.0, 0.0, 0.0, 0.0]),
        ("q = -mu", vec![-1.0, 0.0, 0.0, 0.0]),
        ("90 deg about z", vec![half, 0.0, 0.0, half]),
        ("180 deg about z", vec![0.0, 0.0, 0.0, 1.0]),
    ];
    for kappa in [0.5, 1.0, 10.0, 100.0, 1000.0] {
        let params = VmfParams::new(mean.clone(), kappa)?;
        println!("kappa {kappa:>6}: log C = {:.4}", log_normalizer(4, kappa));
        for (name, q) in &probes {
            println!(
                "  {name:<16} vmf {:>10.4}  antipodal {:>10.4}",
                vmf_log_density(q, &params)?,
                antipodal_vmf_log_density(q, &mean, kappa)?
            );
        }
    }
    Ok(())
}
