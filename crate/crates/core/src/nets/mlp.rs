use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

/// Affine layer `W x + b`, `W` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: DMatrix::zeros(outputs, inputs),
            bias: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Feed-forward network: hidden layers use their activation tag, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    activations: Vec<Activation>,
}

/// Cached activations of a batched forward pass, one column per datum.
#[derive(Debug, Clone)]
pub struct MlpTape {
    /// `outputs[0]` is the input batch, `outputs[l]` the output of layer `l`.
    outputs: Vec<DMatrix<f64>>,
}

impl MlpTape {
    pub fn output(&self) -> &DMatrix<f64> {
        self.outputs.last().expect("tape always holds the input")
    }
}

/// Gradient of a scalar loss with respect to every layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub layers: Vec<Dense>,
}

impl MlpGradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

impl Mlp {
    /// Glorot-uniform weights and zero biases for the given layer widths.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inp, out) = (w[0], w[1]);
                let limit = (6.0 / (inp + out) as f64).sqrt();
                Dense {
                    weight: DMatrix::from_fn(out, inp, |_, _| rng.random_range(-limit..limit)),
                    bias: DVector::zeros(out),
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            activations: vec![Activation::Tanh; widths.len() - 2],
        })
    }

    pub fn from_layers(layers: Vec<Dense>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        if activations.len() + 1 != layers.len() {
            return Err(Error::invalid(format!(
                "{} layers need {} hidden activations, got {}",
                layers.len(),
                layers.len() - 1,
                activations.len()
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::invalid(format!(
                    "layer {i} emits {} values but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::invalid("bias length does not match layer output"));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::non_finite("network parameters"));
            }
        }
        Ok(Mlp {
            layers,
            activations,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::outputs))
            .collect()
    }

    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("mlp input", self.input_dim(), z.len())?;
        let mut h = z.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = &layer.weight * &h + &layer.bias;
            if let Some(act) = self.activations.get(i) {
                a.apply(|v| *v = act.apply(*v));
            }
            h = a;
        }
        Ok(h)
    }

    /// Exact Jacobian `d out / d z`, shape `output x input`.
    pub fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_with_jacobian(z)?.1)
    }

    /// Output and Jacobian in one pass (forward-mode chain rule).
    pub fn forward_with_jacobian(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        check_dim("mlp input", self.input_dim(), z.len())?;
        let mut h = z.clone();
        let mut jac = DMatrix::identity(z.len(), z.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = &layer.weight * &h + &layer.bias;
            jac = &layer.weight * jac;
            if let Some(&act) = self.activations.get(i) {
                a.apply(|v| *v = act.apply(*v));
                for (r, &out) in a.iter().enumerate() {
                    let s = act.slope_from_output(out);
                    jac.row_mut(r).scale_mut(s);
                }
            }
            h = a;
        }
        Ok((h, jac))
    }

    /// Batched forward pass; `x` holds one datum per column.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<MlpTape> {
        check_dim("mlp batch input", self.input_dim(), x.nrows())?;
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = &outputs[i];
            let mut a = &layer.weight * prev;
            for mut col in a.column_iter_mut() {
                col += &layer.bias;
            }
            if let Some(&act) = self.activations.get(i) {
                a.apply(|v| *v = act.apply(*v));
            }
            outputs.push(a);
        }
        Ok(MlpTape { outputs })
    }

    /// Reverse pass for a loss whose gradient w.r.t. the batch output is
    /// `grad_out`. Returns parameter gradients and the gradient w.r.t. the
    /// input batch.
    pub fn backward(
        &self,
        tape: &MlpTape,
        grad_out: &DMatrix<f64>,
    ) -> Result<(MlpGradients, DMatrix<f64>)> {
        check_dim("mlp backward rows", self.output_dim(), grad_out.nrows())?;
        check_dim(
            "mlp backward batch",
            tape.output().ncols(),
            grad_out.ncols(),
        )?;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(&act) = self.activations.get(i) {
                let out = &tape.outputs[i + 1];
                g.zip_apply(out, |gv, h| *gv *= act.slope_from_output(h));
            }
            let input = &tape.outputs[i];
            let dw = &g * input.transpose();
            let db = g.column_sum();
            let next = layer.weight.transpose() * &g;
            grads.push(Dense {
                weight: dw,
                bias: db,
            });
            g = next;
        }
        grads.reverse();
        Ok((MlpGradients { layers: grads }, g))
    }

    pub fn zero_gradients(&self) -> MlpGradients {
        MlpGradients {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}
