use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Positive-output radial basis network
/// `out_i(z) = sum_k w_ik exp(-gamma |z - c_k|^2) + floor`.
///
/// With nonnegative weights the output never drops below `floor`, and far
/// from every center it decays to exactly `floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfNet {
    /// One center per row, `K x d`.
    centers: DMatrix<f64>,
    gamma: f64,
    /// `outputs x K`, elementwise nonnegative.
    weights: DMatrix<f64>,
    floor: f64,
}

/// Batched kernel activations, `K x B`.
#[derive(Debug, Clone)]
pub struct RbfTape {
    inputs: DMatrix<f64>,
    kernels: DMatrix<f64>,
    output: DMatrix<f64>,
}

impl RbfTape {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }
}

impl RbfNet {
    pub fn new(
        centers: DMatrix<f64>,
        gamma: f64,
        weights: DMatrix<f64>,
        floor: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "rbf bandwidth must be > 0, got {gamma}"
            )));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::invalid(format!(
                "rbf floor must be > 0, got {floor}"
            )));
        }
        check_dim("rbf weight columns", centers.nrows(), weights.ncols())?;
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("rbf weights must be finite and nonnegative"));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::non_finite("rbf centers"));
        }
        Ok(RbfNet {
            centers,
            gamma,
            weights,
            floor,
        })
    }

    /// Kernel-free network whose output is the constant `value` everywhere.
    pub fn constant(dim: usize, outputs: usize, value: f64) -> Result<Self> {
        RbfNet::new(
            DMatrix::zeros(0, dim),
            1.0,
            DMatrix::zeros(outputs, 0),
            value,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.centers.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn kernel_count(&self) -> usize {
        self.centers.nrows()
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    fn kernels(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.kernel_count(), |k, _| {
            let d2: f64 = self
                .centers
                .row(k)
                .iter()
                .zip(z)
                .map(|(c, x)| (x - c) * (x - c))
                .sum();
            (-self.gamma * d2).exp()
        })
    }

    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("rbf input", self.input_dim(), z.len())?;
        let phi = self.kernels(z.as_slice());
        Ok((&self.weights * phi).add_scalar(self.floor))
    }

    /// `d out_i / d z_j = sum_k w_ik phi_k (-2 gamma) (z_j - c_kj)`.
    pub fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_with_jacobian(z)?.1)
    }

    pub fn forward_with_jacobian(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        check_dim("rbf input", self.input_dim(), z.len())?;
        let phi = self.kernels(z.as_slice());
        let out = (&self.weights * &phi).add_scalar(self.floor);
        // diff_kj = z_j - c_kj, scaled per row by -2 gamma phi_k
        let mut scaled = DMatrix::from_fn(self.kernel_count(), z.len(), |k, j| {
            z[j] - self.centers[(k, j)]
        });
        for (k, mut row) in scaled.row_iter_mut().enumerate() {
            row *= -2.0 * self.gamma * phi[k];
        }
        Ok((out, &self.weights * scaled))
    }

    /// Batched forward, one datum per column of `z`.
    pub fn forward_batch(&self, z: &DMatrix<f64>) -> Result<RbfTape> {
        check_dim("rbf batch input", self.input_dim(), z.nrows())?;
        let b = z.ncols();
        let mut kernels = DMatrix::zeros(self.kernel_count(), b);
        for (col, zc) in z.column_iter().enumerate() {
            let phi = self.kernels(zc.as_slice());
            kernels.set_column(col, &phi);
        }
        let output = (&self.weights * &kernels).add_scalar(self.floor);
        Ok(RbfTape {
            inputs: z.clone(),
            kernels,
            output,
        })
    }

    /// Gradients w.r.t. the weights and the input batch given the loss
    /// gradient w.r.t. the batch output.
    pub fn backward(
        &self,
        tape: &RbfTape,
        grad_out: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_dim("rbf backward rows", self.output_dim(), grad_out.nrows())?;
        check_dim("rbf backward batch", tape.output.ncols(), grad_out.ncols())?;
        let dw = grad_out * tape.kernels.transpose();
        // s_kb = (W^T G)_kb phi_kb
        let mut s = self.weights.transpose() * grad_out;
        s.component_mul_assign(&tape.kernels);
        let col_sums = s.row_sum(); // 1 x B
        let mut dz = self.centers.transpose() * &s; // d x B
        for (b, mut col) in dz.column_iter_mut().enumerate() {
            let zb = tape.inputs.column(b);
            col.zip_apply(&zb, |v, x| *v = x * col_sums[b] - *v);
            col *= -2.0 * self.gamma;
        }
        Ok((dw, dz))
    }

    pub fn weights_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.weights
    }

    /// Clamps the weights back onto the nonnegative orthant.
    pub fn project_nonnegative(&mut self) {
        self.weights.apply(|w| {
            if *w < 0.0 {
                *w = 0.0
            }
        });
    }
}
