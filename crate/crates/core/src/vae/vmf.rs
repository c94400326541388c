//! von Mises-Fisher densities on `S^{D-1}` and their antipodal mixture.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use super::bessel::{bessel_ratio, log_bessel_i, log_series_core, ASYMPTOTIC_THRESHOLD};
use crate::error::{check_dim, Error, Result};
use crate::types::l2;

/// Tolerance on `| |q| - 1 |` for density arguments.
const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmfParams {
    pub mean_direction: Vec<f64>,
    pub concentration: f64,
}

impl VmfParams {
    pub fn new(mean_direction: Vec<f64>, concentration: f64) -> Result<Self> {
        check_unit(&mean_direction)?;
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(Error::invalid(format!(
                "vMF concentration must be > 0, got {concentration}"
            )));
        }
        Ok(VmfParams {
            mean_direction,
            concentration,
        })
    }
}

fn check_unit(v: &[f64]) -> Result<()> {
    if v.len() < 2 {
        return Err(Error::invalid("vMF needs an embedding dimension D >= 2"));
    }
    let norm = l2(v);
    if !((norm - 1.0).abs() <= UNIT_TOL) {
        return Err(Error::NonUnitOrientation { norm });
    }
    Ok(())
}

/// `log C_D(kappa)` for `kappa >= 0`; at `kappa = 0` this is minus the log
/// surface area of `S^{D-1}`.
pub fn log_normalizer(dim: usize, kappa: f64) -> f64 {
    let d = dim as f64;
    let nu = 0.5 * d - 1.0;
    let base = -0.5 * d * (2.0 * PI).ln();
    if kappa < ASYMPTOTIC_THRESHOLD {
        // kappa^nu / I_nu(kappa) = 2^nu / series_core
        nu * LN_2 + base - log_series_core(nu, kappa)
    } else {
        nu * kappa.ln() + base - log_bessel_i(nu, kappa)
    }
}

/// Mean resultant length `A_D(kappa) = I_{D/2}(kappa) / I_{D/2-1}(kappa)`,
/// which equals `-d/dkappa log C_D(kappa)`.
pub fn mean_resultant_length(dim: usize, kappa: f64) -> f64 {
    bessel_ratio(0.5 * dim as f64 - 1.0, kappa)
}

/// Log surface area of the unit sphere `S^{D-1}`.
pub fn log_sphere_area(dim: usize) -> f64 {
    -log_normalizer(dim, 0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log vMF(q | mu, kappa) = log C_D(kappa) + kappa mu^T q` with `D = len(q)`.
pub fn vmf_log_density(q: &[f64], params: &VmfParams) -> Result<f64> {
    check_unit(q)?;
    check_unit(&params.mean_direction)?;
    check_dim("vmf mean direction", q.len(), params.mean_direction.len())?;
    if !(params.concentration > 0.0 && params.concentration.is_finite()) {
        return Err(Error::invalid("vMF concentration must be > 0"));
    }
    let k = params.concentration;
    Ok(log_normalizer(q.len(), k) + k * dot(&params.mean_direction, q))
}

/// Log density of the equal-weight mixture of `vMF(mu, kappa)` and
/// `vMF(-mu, kappa)`. Invariant under `q -> -q` bit for bit; `kappa = 0`
/// gives the uniform density.
pub fn antipodal_vmf_log_density(q: &[f64], mean: &[f64], kappa: f64) -> Result<f64> {
    check_unit(q)?;
    check_unit(mean)?;
    check_dim("antipodal vmf mean", q.len(), mean.len())?;
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!(
            "vMF concentration must be >= 0, got {kappa}"
        )));
    }
    Ok(antipodal_terms(q.len(), dot(mean, q), kappa).value)
}

/// Value and partial derivatives of an orientation log density expressed in
/// the alignment `t = mu^T q` and the concentration.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AlignmentTerms {
    pub value: f64,
    pub d_alignment: f64,
    pub d_concentration: f64,
}

pub(crate) fn antipodal_terms(dim: usize, alignment: f64, kappa: f64) -> AlignmentTerms {
    // log(e^{k t} + e^{-k t}) = k|t| + log1p(e^{-2k|t|})
    let a = kappa * alignment.abs();
    let value = log_normalizer(dim, kappa) - LN_2 + a + (-2.0 * a).exp().ln_1p();
    let th = (kappa * alignment).tanh();
    AlignmentTerms {
        value,
        d_alignment: kappa * th,
        d_concentration: alignment * th - mean_resultant_length(dim, kappa),
    }
}

/// Single-sided counterpart of [`antipodal_terms`].
pub(crate) fn directed_terms(dim: usize, alignment: f64, kappa: f64) -> AlignmentTerms {
    AlignmentTerms {
        value: log_normalizer(dim, kappa) + kappa * alignment,
        d_alignment: kappa,
        d_concentration: alignment - mean_resultant_length(dim, kappa),
    }
}
