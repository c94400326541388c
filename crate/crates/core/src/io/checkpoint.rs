use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::nets::{Activation, Dense, Mlp, RbfNet};
use crate::vae::{Dims, ManifoldModel, TrainingRecord};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Dense matrix stored column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixRecord {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl MatrixRecord {
    fn to_matrix(&self, field: &str) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::format(
                field,
                format!(
                    "{} x {} matrix holds {} values",
                    self.rows,
                    self.cols,
                    self.data.len()
                ),
            ));
        }
        Ok(DMatrix::from_column_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<MatrixRecord>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&Mlp> for MlpRecord {
    fn from(net: &Mlp) -> Self {
        MlpRecord {
            widths: net.widths(),
            activations: net.activations().to_vec(),
            weights: net
                .layers()
                .iter()
                .map(|l| MatrixRecord::from(&l.weight))
                .collect(),
            biases: net
                .layers()
                .iter()
                .map(|l| l.bias.as_slice().to_vec())
                .collect(),
        }
    }
}

impl MlpRecord {
    fn to_mlp(&self, field: &str) -> Result<Mlp> {
        if self.weights.len() != self.biases.len() {
            return Err(Error::format(
                format!("{field}.biases"),
                "one bias per weight matrix expected",
            ));
        }
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .enumerate()
            .map(|(i, (w, b))| {
                Ok(Dense {
                    weight: w.to_matrix(&format!("{field}.weights[{i}]"))?,
                    bias: DVector::from_column_slice(b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Mlp::from_layers(layers, self.activations.clone())
            .map_err(|e| Error::format(field, e.to_string()))?;
        if net.widths() != self.widths {
            return Err(Error::format(
                format!("{field}.widths"),
                "does not match the weight shapes",
            ));
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfRecord {
    /// k-means centers, one per row.
    pub centers: MatrixRecord,
    pub gamma: f64,
    pub weights: MatrixRecord,
    pub floor: f64,
}

impl From<&RbfNet> for RbfRecord {
    fn from(net: &RbfNet) -> Self {
        RbfRecord {
            centers: net.centers().into(),
            gamma: net.gamma(),
            weights: net.weights().into(),
            floor: net.floor(),
        }
    }
}

impl RbfRecord {
    fn to_net(&self, field: &str) -> Result<RbfNet> {
        RbfNet::new(
            self.centers.to_matrix(&format!("{field}.centers"))?,
            self.gamma,
            self.weights.to_matrix(&format!("{field}.weights"))?,
            self.floor,
        )
        .map_err(|e| Error::format(field, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub version: u32,
    pub dims: Dims,
    pub alpha: f64,
    pub beta: f64,
    pub encoder_mean: MlpRecord,
    pub encoder_logstd: MlpRecord,
    pub decoder_mean: MlpRecord,
    pub position_precision: RbfRecord,
    pub concentration: RbfRecord,
    pub latent_support: MatrixRecord,
    pub training: Option<TrainingRecord>,
}

impl From<&ManifoldModel> for CheckpointFile {
    fn from(m: &ManifoldModel) -> Self {
        CheckpointFile {
            version: CHECKPOINT_VERSION,
            dims: m.dims,
            alpha: m.alpha,
            beta: m.beta,
            encoder_mean: (&m.encoder_mean).into(),
            encoder_logstd: (&m.encoder_logstd).into(),
            decoder_mean: (&m.decoder_mean).into(),
            position_precision: (&m.position_precision).into(),
            concentration: (&m.concentration).into(),
            latent_support: (&m.latent_support).into(),
            training: m.training.clone(),
        }
    }
}

impl CheckpointFile {
    pub fn to_model(&self) -> Result<ManifoldModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported checkpoint version {}", self.version),
            ));
        }
        let mut model = ManifoldModel::from_parts(
            self.dims,
            self.encoder_mean.to_mlp("encoder_mean")?,
            self.encoder_logstd.to_mlp("encoder_logstd")?,
            self.decoder_mean.to_mlp("decoder_mean")?,
            self.position_precision.to_net("position_precision")?,
            self.concentration.to_net("concentration")?,
            self.alpha,
            self.beta,
        )
        .map_err(|e| Error::format("dims", e.to_string()))?;
        model = model
            .with_latent_support(self.latent_support.to_matrix("latent_support")?)
            .map_err(|e| Error::format("latent_support", e.to_string()))?;
        model.training = self.training.clone();
        Ok(model)
    }
}

pub fn save_checkpoint(model: &ManifoldModel, path: &Path) -> Result<()> {
    write_json(path, &CheckpointFile::from(model))
}

pub fn load_checkpoint(path: &Path) -> Result<ManifoldModel> {
    let file: CheckpointFile = read_json(path)?;
    file.to_model().map_err(|e| match e {
        Error::Format {
            path: field,
            message,
        } => Error::format(format!("{}: {field}", path.display()), message),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_record_checks_shape() {
        let r = MatrixRecord {
            rows: 2,
            cols: 2,
            data: vec![1.0, 2.0, 3.0],
        };
        assert!(r.to_matrix("m").unwrap_err().to_string().contains("m:"));
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(MatrixRecord::from(&m).to_matrix("m").unwrap(), m);
    }

    #[test]
    fn linear_model_round_trips() {
        let model =
            ManifoldModel::linear(DMatrix::identity(2, 2) * 0.1f64.sqrt(), &[0.3, 0.4, 0.5])
                .unwrap();
        let back = CheckpointFile::from(&model).to_model().unwrap();
        assert_eq!(model, back);
    }
}
