use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::error::{check_dim, Error, Result};
use crate::nets::{Dense, Mlp, RbfNet};
use crate::types::{normalize_orientation, LatentPoint, Pose};

/// Model dimensions: positions in `R^n`, orientations on `S^m`, latent `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub d: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, d: usize) -> Result<Self> {
        if n == 0 || m == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "dims must be >= 1, got n={n} m={m} d={d}"
            )));
        }
        Ok(Dims { n, m, d })
    }

    /// Length of the ambient vector `(x, q)`.
    pub fn ambient(&self) -> usize {
        self.n + self.m + 1
    }

    pub fn orientation(&self) -> usize {
        self.m + 1
    }
}

/// What training produced, kept alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub config: TrainConfig,
    /// Fixed position std used during the first stage.
    pub stage1_position_std: f64,
    pub stage1_history: Vec<f64>,
    pub stage2_history: Vec<f64>,
    pub final_loss: Option<f64>,
}

/// A trained (or hand-built) stochastic immersion of the latent space into
/// `R^n x S^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldModel {
    pub dims: Dims,
    pub encoder_mean: Mlp,
    pub encoder_logstd: Mlp,
    /// Joint mean head: first `n` outputs are the position, the last `m + 1`
    /// are the unnormalized orientation.
    pub decoder_mean: Mlp,
    /// Per-axis position precision `sigma^-2`.
    pub position_precision: RbfNet,
    pub concentration: RbfNet,
    pub alpha: f64,
    pub beta: f64,
    /// Encoder means of the (doubled) training set, one row per pose.
    pub latent_support: DMatrix<f64>,
    pub training: Option<TrainingRecord>,
}

/// Decoder outputs at one latent point.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub position: DVector<f64>,
    pub position_std: DVector<f64>,
    pub orientation: DVector<f64>,
    pub concentration: f64,
}

impl Decoded {
    pub fn pose(&self) -> Pose {
        Pose {
            position: self.position.as_slice().to_vec(),
            orientation: self.orientation.as_slice().to_vec(),
        }
    }

    pub fn mean_position_std(&self) -> f64 {
        self.position_std.mean()
    }
}

impl ManifoldModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dims: Dims,
        encoder_mean: Mlp,
        encoder_logstd: Mlp,
        decoder_mean: Mlp,
        position_precision: RbfNet,
        concentration: RbfNet,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let (a, d) = (dims.ambient(), dims.d);
        check_dim("encoder mean input", a, encoder_mean.input_dim())?;
        check_dim("encoder mean output", d, encoder_mean.output_dim())?;
        check_dim("encoder logstd input", a, encoder_logstd.input_dim())?;
        check_dim("encoder logstd output", d, encoder_logstd.output_dim())?;
        check_dim("decoder input", d, decoder_mean.input_dim())?;
        check_dim("decoder output", a, decoder_mean.output_dim())?;
        check_dim("precision head input", d, position_precision.input_dim())?;
        check_dim(
            "precision head output",
            dims.n,
            position_precision.output_dim(),
        )?;
        check_dim("concentration head input", d, concentration.input_dim())?;
        check_dim("concentration head output", 1, concentration.output_dim())?;
        if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::invalid("ELBO weights must be finite and >= 0"));
        }
        Ok(ManifoldModel {
            dims,
            encoder_mean,
            encoder_logstd,
            decoder_mean,
            position_precision,
            concentration,
            alpha,
            beta,
            latent_support: DMatrix::zeros(0, d),
            training: None,
        })
    }

    /// Deterministic linear immersion `z -> (W z, q0)` with constant
    /// variance heads. Its pullback metric is `W^T W` everywhere, so with
    /// `W = I` latent lengths are Euclidean.
    pub fn linear(position_map: DMatrix<f64>, orientation: &[f64]) -> Result<Self> {
        let (n, d) = position_map.shape();
        let m = orientation
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::invalid("orientation needs at least 2 coordinates"))?;
        let dims = Dims::new(n, m, d)?;
        let (q0, _) = normalize_orientation(orientation)?;
        let mut w = DMatrix::zeros(dims.ambient(), d);
        w.view_mut((0, 0), (n, d)).copy_from(&position_map);
        let mut b = DVector::zeros(dims.ambient());
        b.rows_mut(n, m + 1).copy_from(&q0);
        let decoder = Mlp::from_layers(vec![Dense { weight: w, bias: b }], vec![])?;

        // encoder: least-squares inverse of the position map
        let pinv = position_map
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let mut we = DMatrix::zeros(d, dims.ambient());
        we.view_mut((0, 0), (d, n)).copy_from(&pinv);
        let encoder_mean = Mlp::from_layers(
            vec![Dense {
                weight: we,
                bias: DVector::zeros(d),
            }],
            vec![],
        )?;
        let encoder_logstd = Mlp::from_layers(
            vec![Dense {
                weight: DMatrix::zeros(d, dims.ambient()),
                bias: DVector::from_element(d, -3.0),
            }],
            vec![],
        )?;
        ManifoldModel::from_parts(
            dims,
            encoder_mean,
            encoder_logstd,
            decoder,
            RbfNet::constant(d, n, 1.0)?,
            RbfNet::constant(d, 1, 1.0)?,
            1.0,
            1.0,
        )
    }

    pub fn with_latent_support(mut self, support: DMatrix<f64>) -> Result<Self> {
        check_dim("latent support columns", self.dims.d, support.ncols())?;
        self.latent_support = support;
        Ok(self)
    }

    /// Gaussian posterior mean and std for a pose.
    pub fn encode(&self, pose: &Pose) -> Result<(LatentPoint, DVector<f64>)> {
        check_dim("pose position", self.dims.n, pose.n())?;
        check_dim(
            "pose orientation",
            self.dims.orientation(),
            pose.orientation.len(),
        )?;
        let x = pose.to_vector();
        let mean = self.encoder_mean.forward(&x)?;
        let std = self.encoder_logstd.forward(&x)?.map(f64::exp);
        Ok((LatentPoint::from(&mean), std))
    }

    pub fn encode_mean(&self, pose: &Pose) -> Result<DVector<f64>> {
        Ok(self.encode(pose)?.0.to_vector())
    }

    pub fn decode(&self, z: &LatentPoint) -> Result<Decoded> {
        self.decode_vector(&z.to_vector())
    }

    pub fn decode_vector(&self, z: &DVector<f64>) -> Result<Decoded> {
        check_dim("latent point", self.dims.d, z.len())?;
        let y = self.decoder_mean.forward(z)?;
        let n = self.dims.n;
        let (orientation, _) = normalize_orientation(&y.as_slice()[n..])?;
        let precision = self.position_precision.forward(z)?;
        let concentration = self.concentration.forward(z)?[0];
        Ok(Decoded {
            position: y.rows(0, n).into_owned(),
            position_std: precision.map(|p| p.powf(-0.5)),
            orientation,
            concentration,
        })
    }

    /// Per-dimension `[min, max]` of the encoded training means.
    pub fn latent_bounds(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.latent_support.nrows() == 0 {
            return Err(Error::invalid("model has no latent support recorded"));
        }
        let d = self.dims.d;
        let lo = DVector::from_fn(d, |j, _| self.latent_support.column(j).min());
        let hi = DVector::from_fn(d, |j, _| self.latent_support.column(j).max());
        Ok((lo, hi))
    }

    pub fn is_finite(&self) -> bool {
        self.encoder_mean.is_finite()
            && self.encoder_logstd.is_finite()
            && self.decoder_mean.is_finite()
    }
}
