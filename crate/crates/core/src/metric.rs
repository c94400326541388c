//! Pullback metric of the decoder and quantities derived from it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::types::{normalize_orientation, LatentPoint, Obstacle};
use crate::vae::{Decoded, ManifoldModel};

/// Product of the per-obstacle inflations `1 + eta exp(-|x - o|^2 / 2 r^2)`.
pub fn ambient_factor(x: &[f64], obstacles: &[Obstacle]) -> f64 {
    obstacles
        .iter()
        .map(|o| {
            let d2: f64 = x.iter().zip(&o.center).map(|(a, b)| (a - b).powi(2)).sum();
            1.0 + o.strength * (-d2 / (2.0 * o.radius * o.radius)).exp()
        })
        .product()
}

/// Ambient metric on `R^n x S^m`: the position block is scaled by the
/// obstacle factor, the orientation block stays the identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AmbientMetricSpec {
    pub obstacles: Vec<Obstacle>,
}

impl AmbientMetricSpec {
    pub fn new(obstacles: Vec<Obstacle>) -> Self {
        AmbientMetricSpec { obstacles }
    }

    pub fn factor(&self, x: &[f64]) -> f64 {
        ambient_factor(x, &self.obstacles)
    }
}

/// Symmetric positive definite `d x d` latent metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor(DMatrix<f64>);

impl MetricTensor {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("metric must be square"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("metric tensor"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(MetricTensor(sym))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `v^T M v`.
    pub fn quadratic(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    /// `log sqrt det M`, or `None` if the Cholesky factorization fails.
    pub fn log_sqrt_det(&self) -> Option<f64> {
        let chol = self.0.clone().cholesky()?;
        Some(chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum())
    }
}

/// Metric split by ambient block at one latent point.
#[derive(Debug, Clone)]
pub struct MetricBlocks {
    /// `J_x^T J_x + J_sigma^T J_sigma`, the part scaled by obstacles.
    pub position: DMatrix<f64>,
    /// `J_u^T J_u + J_kappa^T J_kappa`.
    pub orientation: DMatrix<f64>,
    pub decoded: Decoded,
}

impl MetricBlocks {
    pub fn combine(&self, lambda: f64) -> Result<MetricTensor> {
        MetricTensor::from_matrix(&self.position * lambda + &self.orientation)
    }
}

/// Jacobians of the decoder outputs stacked in ambient order.
#[derive(Debug, Clone)]
pub struct DecoderJacobians {
    pub position: DMatrix<f64>,
    pub position_std: DMatrix<f64>,
    pub orientation: DMatrix<f64>,
    pub concentration: DMatrix<f64>,
    pub decoded: Decoded,
}

pub fn decoder_jacobians(model: &ManifoldModel, z: &DVector<f64>) -> Result<DecoderJacobians> {
    check_dim("latent point", model.dims.d, z.len())?;
    let n = model.dims.n;
    let q = model.dims.orientation();
    let (y, jy) = model.decoder_mean.forward_with_jacobian(z)?;
    let (u, proj) = normalize_orientation(&y.as_slice()[n..])?;
    let (prec, jp) = model.position_precision.forward_with_jacobian(z)?;
    let (kappa, jk) = model.concentration.forward_with_jacobian(z)?;

    let position = jy.rows(0, n).into_owned();
    let orientation = proj * jy.rows(n, q);
    let mut position_std = jp;
    for (a, mut row) in position_std.row_iter_mut().enumerate() {
        row *= -0.5 * prec[a].powf(-1.5);
    }
    let decoded = Decoded {
        position: y.rows(0, n).into_owned(),
        position_std: prec.map(|p| p.powf(-0.5)),
        orientation: u,
        concentration: kappa[0],
    };
    let jac = DecoderJacobians {
        position,
        position_std,
        orientation,
        concentration: jk,
        decoded,
    };
    let finite = [
        &jac.position,
        &jac.position_std,
        &jac.orientation,
        &jac.concentration,
    ]
    .iter()
    .all(|m| m.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(Error::non_finite("decoder Jacobian"));
    }
    Ok(jac)
}

pub fn metric_blocks(model: &ManifoldModel, z: &DVector<f64>) -> Result<MetricBlocks> {
    let j = decoder_jacobians(model, z)?;
    Ok(MetricBlocks {
        position: j.position.tr_mul(&j.position) + j.position_std.tr_mul(&j.position_std),
        orientation: j.orientation.tr_mul(&j.orientation)
            + j.concentration.tr_mul(&j.concentration),
        decoded: j.decoded,
    })
}

pub fn pullback_metric_at(
    model: &ManifoldModel,
    z: &DVector<f64>,
    ambient: &AmbientMetricSpec,
) -> Result<MetricTensor> {
    let blocks = metric_blocks(model, z)?;
    let lambda = ambient.factor(blocks.decoded.position.as_slice());
    blocks.combine(lambda)
}

pub fn pullback_metric(
    model: &ManifoldModel,
    z: &LatentPoint,
    ambient: &AmbientMetricSpec,
) -> Result<MetricTensor> {
    pullback_metric_at(model, &z.to_vector(), ambient)
}

/// Riemannian length of a latent polyline using endpoint-averaged metrics.
pub fn curve_length(
    model: &ManifoldModel,
    curve: &[DVector<f64>],
    ambient: &AmbientMetricSpec,
) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::invalid(format!(
            "curve needs >= 2 points, got {}",
            curve.len()
        )));
    }
    let metrics = curve
        .iter()
        .map(|z| pullback_metric_at(model, z, ambient))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for i in 0..curve.len() - 1 {
        let dz = &curve[i + 1] - &curve[i];
        let e = 0.5 * (metrics[i].quadratic(&dz) + metrics[i + 1].quadratic(&dz));
        total += e.max(0.0).sqrt();
    }
    if !total.is_finite() {
        return Err(Error::non_finite("curve length"));
    }
    Ok(total)
}

/// `log sqrt det M(z)`.
pub fn magnification_factor(
    model: &ManifoldModel,
    z: &LatentPoint,
    ambient: &AmbientMetricSpec,
) -> Result<f64> {
    let m = pullback_metric(model, z, ambient)?;
    m.log_sqrt_det().ok_or_else(|| Error::NotPositiveDefinite {
        at: z.coords.clone(),
    })
}

/// Magnification factor on a `cols x rows` raster over `[lo, hi]` (2-D latent
/// spaces only), row-major from the `lo` corner.
pub fn magnification_grid(
    model: &ManifoldModel,
    lo: &[f64],
    hi: &[f64],
    cols: usize,
    rows: usize,
    ambient: &AmbientMetricSpec,
) -> Result<Vec<f64>> {
    scalar_grid(lo, hi, cols, rows, |z| {
        magnification_factor(model, &LatentPoint { coords: z.to_vec() }, ambient)
    })
}

pub(crate) fn scalar_grid<F>(
    lo: &[f64],
    hi: &[f64],
    cols: usize,
    rows: usize,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if lo.len() != 2 || hi.len() != 2 {
        return Err(Error::invalid("raster evaluation needs a 2-D latent space"));
    }
    if cols < 2 || rows < 2 {
        return Err(Error::invalid("raster needs at least 2 x 2 points"));
    }
    (0..cols * rows)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % cols, k / cols);
            let z = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / (cols - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / (rows - 1) as f64,
            ];
            f(&z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obstacle(c: &[f64], r: f64, eta: f64) -> Obstacle {
        Obstacle::new(c.to_vec(), r, eta).unwrap()
    }

    #[test]
    fn ambient_factor_values() {
        assert_eq!(ambient_factor(&[1.0, 2.0], &[]), 1.0);
        let o = obstacle(&[1.0, 2.0], 0.3, 7.0);
        assert_eq!(ambient_factor(&[1.0, 2.0], &[o.clone()]), 8.0);
        assert_relative_eq!(
            ambient_factor(&[1.3, 2.0], &[o.clone()]),
            1.0 + 7.0 * (-0.5f64).exp(),
            epsilon = 1e-14
        );
        let o2 = obstacle(&[1.0, 2.0], 0.1, 1.0);
        assert_eq!(ambient_factor(&[1.0, 2.0], &[o, o2]), 16.0);
    }

    #[test]
    fn linear_model_metric_is_gram_matrix() {
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 0.0, 1.5]);
        let model = ManifoldModel::linear(w.clone(), &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let want = w.transpose() * &w;
        for z in [[0.0, 0.0], [3.0, -1.0], [-20.0, 7.0]] {
            let m = pullback_metric_at(
                &model,
                &DVector::from_row_slice(&z),
                &AmbientMetricSpec::default(),
            )
            .unwrap();
            assert!((m.matrix() - &want).abs().max() < 1e-12);
        }
    }

    #[test]
    fn magnification_of_scaled_identity() {
        let model = ManifoldModel::linear(DMatrix::identity(2, 2), &[0.0, 1.0]).unwrap();
        let z = LatentPoint::new(vec![0.2, 0.1]).unwrap();
        assert!(
            magnification_factor(&model, &z, &AmbientMetricSpec::default())
                .unwrap()
                .abs()
                < 1e-14
        );
        let model = ManifoldModel::linear(DMatrix::identity(2, 2) * 2.0, &[0.0, 1.0]).unwrap();
        let got = magnification_factor(&model, &z, &AmbientMetricSpec::default()).unwrap();
        assert_relative_eq!(got, 4f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn identity_metric_length_is_euclidean() {
        let model = ManifoldModel::linear(DMatrix::identity(2, 2), &[0.0, 1.0]).unwrap();
        let pts: Vec<DVector<f64>> = [[0.0, 0.0], [3.0, 4.0], [3.0, 5.0]]
            .iter()
            .map(|p| DVector::from_row_slice(p))
            .collect();
        let len = curve_length(&model, &pts, &AmbientMetricSpec::default()).unwrap();
        assert_relative_eq!(len, 6.0, epsilon = 1e-12);
        let rev: Vec<_> = pts.iter().rev().cloned().collect();
        assert_eq!(
            curve_length(&model, &rev, &AmbientMetricSpec::default()).unwrap(),
            len
        );
        assert!(curve_length(&model, &pts[..1], &AmbientMetricSpec::default()).is_err());
    }

    #[test]
    fn obstacle_scales_position_block_only() {
        let model = ManifoldModel::linear(DMatrix::identity(2, 2), &[0.0, 1.0]).unwrap();
        let spec = AmbientMetricSpec::new(vec![obstacle(&[0.0, 0.0], 1.0, 3.0)]);
        let m = pullback_metric_at(&model, &DVector::zeros(2), &spec).unwrap();
        assert!((m.matrix() - DMatrix::identity(2, 2) * 4.0).abs().max() < 1e-14);
        let far = AmbientMetricSpec::new(vec![obstacle(&[1e6, 0.0], 1.0, 3.0)]);
        let m = pullback_metric_at(&model, &DVector::zeros(2), &far).unwrap();
        assert_eq!(m.matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn grid_layout_is_row_major() {
        let v = scalar_grid(&[0.0, 10.0], &[1.0, 20.0], 3, 2, |z| Ok(z[0] + z[1])).unwrap();
        assert_eq!(v, vec![10.0, 10.5, 11.0, 20.0, 20.5, 21.0]);
        assert!(scalar_grid(&[0.0], &[1.0], 3, 3, |_| Ok(0.0)).is_err());
    }
}
