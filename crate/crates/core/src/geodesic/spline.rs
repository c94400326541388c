use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metric::{curve_length, AmbientMetricSpec};
use crate::vae::ManifoldModel;

pub const DEFAULT_CONTROL_POINTS: usize = 16;
/// Curve samples used when measuring a spline's Riemannian length.
pub const LENGTH_SAMPLES: usize = 64;

/// Natural cubic spline through `N` control points at uniform knots on
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplinePath {
    /// One control point per row, `N x d`.
    control: DMatrix<f64>,
    /// Per segment, rows `4i..4i+4` hold the coefficients of `1, u, u^2, u^3`
    /// in the local parameter `u in [0, 1]`.
    coefficients: DMatrix<f64>,
}

/// Second derivatives of the natural spline through `values` at unit spacing.
fn natural_second_derivatives(values: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = values.shape();
    let mut second = DMatrix::zeros(n, d);
    if n < 3 {
        return second;
    }
    // Thomas algorithm on [1 4 1] for the interior knots
    let m = n - 2;
    let mut diag = vec![4.0; m];
    let mut rhs = DMatrix::from_fn(m, d, |i, j| {
        6.0 * (values[(i + 2, j)] - 2.0 * values[(i + 1, j)] + values[(i, j)])
    });
    for i in 1..m {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        for j in 0..d {
            rhs[(i, j)] -= w * rhs[(i - 1, j)];
        }
    }
    for j in 0..d {
        second[(m, j)] = rhs[(m - 1, j)] / diag[m - 1];
        for i in (0..m - 1).rev() {
            second[(i + 1, j)] = (rhs[(i, j)] - second[(i + 2, j)]) / diag[i];
        }
    }
    second
}

impl SplinePath {
    pub fn from_control_points(control: DMatrix<f64>) -> Result<Self> {
        let (n, d) = control.shape();
        if n < 2 || d == 0 {
            return Err(Error::invalid(format!(
                "spline needs >= 2 control points, got {n}"
            )));
        }
        if control.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("spline control points"));
        }
        let second = natural_second_derivatives(&control);
        let mut coefficients = DMatrix::zeros(4 * (n - 1), d);
        for i in 0..n - 1 {
            for j in 0..d {
                let (p0, p1) = (control[(i, j)], control[(i + 1, j)]);
                let (m0, m1) = (second[(i, j)], second[(i + 1, j)]);
                coefficients[(4 * i, j)] = p0;
                coefficients[(4 * i + 1, j)] = p1 - p0 - (2.0 * m0 + m1) / 6.0;
                coefficients[(4 * i + 2, j)] = 0.5 * m0;
                coefficients[(4 * i + 3, j)] = (m1 - m0) / 6.0;
            }
        }
        Ok(SplinePath {
            control,
            coefficients,
        })
    }

    pub fn control_points(&self) -> &DMatrix<f64> {
        &self.control
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn segments(&self) -> usize {
        self.control.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.control.ncols()
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let s = self.segments();
        let x = t.clamp(0.0, 1.0) * s as f64;
        let i = (x.floor() as usize).min(s - 1);
        (i, x - i as f64)
    }

    pub fn evaluate(&self, t: f64) -> DVector<f64> {
        let (i, u) = self.locate(t);
        let c = |k: usize| self.coefficients.row(4 * i + k).transpose();
        c(0) + c(1) * u + c(2) * (u * u) + c(3) * (u * u * u)
    }

    /// `k`-th derivative with respect to `t` (`k <= 3`).
    pub fn derivative(&self, t: f64, k: usize) -> DVector<f64> {
        let (i, u) = self.locate(t);
        let s = self.segments() as f64;
        let c = |r: usize| self.coefficients.row(4 * i + r).transpose();
        match k {
            0 => self.evaluate(t),
            1 => (c(1) + c(2) * (2.0 * u) + c(3) * (3.0 * u * u)) * s,
            2 => (c(2) * 2.0 + c(3) * (6.0 * u)) * (s * s),
            3 => c(3) * (6.0 * s * s * s),
            _ => DVector::zeros(self.dim()),
        }
    }

    /// `count` points at uniform parameters including both ends.
    pub fn sample(&self, count: usize) -> Vec<DVector<f64>> {
        match count {
            0 => Vec::new(),
            1 => vec![self.evaluate(0.0)],
            _ => (0..count)
                .map(|i| self.evaluate(i as f64 / (count - 1) as f64))
                .collect(),
        }
    }
}

/// Values of every cardinal basis spline (unit control value at one knot)
/// at parameters `ts`, `ts.len() x n`.
fn basis_matrix(n: usize, ts: &[f64]) -> Result<DMatrix<f64>> {
    let mut basis = DMatrix::zeros(ts.len(), n);
    for k in 0..n {
        let mut unit = DMatrix::zeros(n, 1);
        unit[(k, 0)] = 1.0;
        let s = SplinePath::from_control_points(unit)?;
        for (r, &t) in ts.iter().enumerate() {
            basis[(r, k)] = s.evaluate(t)[0];
        }
    }
    Ok(basis)
}

/// Cumulative chord-length parameters of a polyline, normalized to `[0, 1]`.
pub fn chord_parameters(points: &[DVector<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; points.len()];
    for i in 1..points.len() {
        acc[i] = acc[i - 1] + (&points[i] - &points[i - 1]).norm();
    }
    let total = *acc.last().unwrap_or(&0.0);
    if total > 0.0 {
        acc.iter().map(|v| v / total).collect()
    } else {
        let last = points.len().saturating_sub(1).max(1) as f64;
        (0..points.len()).map(|i| i as f64 / last).collect()
    }
}

/// Least-squares natural cubic spline with `control_points` knots through a
/// latent polyline. The first and last control points equal the polyline
/// endpoints; interior ones minimize the squared deviation at the chord
/// parameters of the polyline vertices.
pub fn fit_spline(points: &[DVector<f64>], control_points: usize) -> Result<SplinePath> {
    if points.len() < 2 {
        return Err(Error::invalid(format!(
            "polyline needs >= 2 points, got {}",
            points.len()
        )));
    }
    if control_points < 2 {
        return Err(Error::invalid("spline needs >= 2 control points"));
    }
    let mut n = control_points;
    if n > points.len() {
        warn!(
            "control points reduced from {n} to path length {}",
            points.len()
        );
        n = points.len();
    }
    let d = points[0].len();
    let ts = chord_parameters(points);
    let first = &points[0];
    let last = &points[points.len() - 1];
    let mut control = DMatrix::zeros(n, d);
    control.set_row(0, &first.transpose());
    control.set_row(n - 1, &last.transpose());
    if n > 2 {
        let basis = basis_matrix(n, &ts)?;
        let interior = basis.columns(1, n - 2).into_owned();
        let mut rhs = DMatrix::zeros(points.len(), d);
        for (r, p) in points.iter().enumerate() {
            let fixed = first * basis[(r, 0)] + last * basis[(r, n - 1)];
            rhs.set_row(r, &(p - fixed).transpose());
        }
        let solved = interior
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::invalid(e.to_string()))?;
        control.rows_mut(1, n - 2).copy_from(&solved);
    }
    SplinePath::from_control_points(control)
}

/// Root-mean-square distance between the polyline vertices and the spline
/// at their chord parameters.
pub fn fit_residual(spline: &SplinePath, points: &[DVector<f64>]) -> f64 {
    let ts = chord_parameters(points);
    let sq: f64 = points
        .iter()
        .zip(&ts)
        .map(|(p, &t)| (spline.evaluate(t) - p).norm_squared())
        .sum();
    (sq / points.len().max(1) as f64).sqrt()
}

pub fn spline_length(
    model: &ManifoldModel,
    spline: &SplinePath,
    ambient: &AmbientMetricSpec,
) -> Result<f64> {
    curve_length(model, &spline.sample(LENGTH_SAMPLES), ambient)
}

/// Shortens the spline under the pullback metric by gradient descent on the
/// interior control points. Steps are accepted only if they reduce the
/// sampled length, so the result is never longer than the input.
pub fn refine_spline(
    model: &ManifoldModel,
    spline: &SplinePath,
    ambient: &AmbientMetricSpec,
    iterations: usize,
) -> Result<SplinePath> {
    let n = spline.control_points().nrows();
    if iterations == 0 || n < 3 {
        return Ok(spline.clone());
    }
    let d = spline.dim();
    let length_of = |control: &DMatrix<f64>| -> Result<f64> {
        let s = SplinePath::from_control_points(control.clone())?;
        spline_length(model, &s, ambient)
    };
    let mut control = spline.control_points().clone();
    let mut current = length_of(&control)?;
    if !current.is_finite() {
        return Err(Error::non_finite("spline length"));
    }
    let scale = (&control.row(n - 1) - &control.row(0)).norm().max(1e-9) / (n - 1) as f64;
    let h = 1e-6 * scale;
    let mut step = 0.25 * scale;

    for it in 0..iterations {
        let coords: Vec<(usize, usize)> = (1..n - 1)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .collect();
        let grads = coords
            .par_iter()
            .map(|&(r, c)| {
                let mut plus = control.clone();
                plus[(r, c)] += h;
                let mut minus = control.clone();
                minus[(r, c)] -= h;
                Ok((length_of(&plus)? - length_of(&minus)?) / (2.0 * h))
            })
            .collect::<Result<Vec<f64>>>()?;
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::non_finite("spline length gradient"));
        }
        if norm == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..20 {
            let mut trial = control.clone();
            for (&(r, c), g) in coords.iter().zip(&grads) {
                trial[(r, c)] -= step * g / norm;
            }
            let len = length_of(&trial)?;
            if len < current {
                control = trial;
                current = len;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            debug!("refinement converged after {it} iterations");
            break;
        }
    }
    SplinePath::from_control_points(control)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f64; 2]]) -> Vec<DVector<f64>> {
        v.iter().map(|p| DVector::from_row_slice(p)).collect()
    }

    #[test]
    fn interpolates_control_points_at_knots() {
        let control =
            DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 2.0, 2.0, -1.0, 3.0, 0.5, 4.0, 4.0]);
        let s = SplinePath::from_control_points(control.clone()).unwrap();
        for i in 0..5 {
            let v = s.evaluate(i as f64 / 4.0);
            assert!((v - control.row(i).transpose()).norm() < 1e-12);
        }
    }

    #[test]
    fn second_derivative_continuous_and_natural() {
        let control = DMatrix::from_row_slice(6, 1, &[0.0, 1.0, -2.0, 0.5, 3.0, 1.0]);
        let s = SplinePath::from_control_points(control).unwrap();
        for i in 1..5 {
            let t = i as f64 / 5.0;
            let eps = 1e-9;
            for k in 0..3 {
                let left = s.derivative(t - eps, k);
                let right = s.derivative(t + eps, k);
                assert!((left - right).norm() < 1e-5, "order {k} at knot {i}");
            }
        }
        assert!(s.derivative(0.0, 2).norm() < 1e-12);
        assert!(s.derivative(1.0, 2).norm() < 1e-9);
    }

    #[test]
    fn collinear_path_fits_exactly() {
        let path = pts(&[
            [0.0, 0.0],
            [0.1, 0.1],
            [0.2, 0.2],
            [0.3, 0.3],
            [0.4, 0.4],
            [0.5, 0.4 + 0.1],
        ]);
        let s = fit_spline(&path, 4).unwrap();
        assert!(fit_residual(&s, &path) < 1e-9);
        assert!((s.evaluate(0.0) - &path[0]).norm() == 0.0);
        assert!((s.evaluate(1.0) - &path[5]).norm() < 1e-15);
    }

    #[test]
    fn control_points_clamped_to_path_length() {
        let path = pts(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        let s = fit_spline(&path, 16).unwrap();
        assert_eq!(s.control_points().nrows(), 3);
        let two = fit_spline(&path[..2], 16).unwrap();
        assert_eq!(two.control_points().nrows(), 2);
        assert!(fit_spline(&path[..1], 4).is_err());
    }

    #[test]
    fn chord_parameters_are_normalized() {
        let t = chord_parameters(&pts(&[[0.0, 0.0], [3.0, 4.0], [3.0, 9.0]]));
        assert_eq!(t, vec![0.0, 0.5, 1.0]);
        let same = chord_parameters(&pts(&[[1.0, 1.0], [1.0, 1.0]]));
        assert_eq!(same, vec![0.0, 1.0]);
    }

    #[test]
    fn straight_line_is_fixed_point_of_refinement() {
        let model = ManifoldModel::linear(DMatrix::identity(2, 2), &[0.0, 1.0]).unwrap();
        let path: Vec<DVector<f64>> = (0..10)
            .map(|i| DVector::from_vec(vec![0.1 * i as f64, -0.05 * i as f64]))
            .collect();
        let s = fit_spline(&path, 6).unwrap();
        let spec = AmbientMetricSpec::default();
        let before = spline_length(&model, &s, &spec).unwrap();
        let refined = refine_spline(&model, &s, &spec, 50).unwrap();
        let after = spline_length(&model, &refined, &spec).unwrap();
        assert!((before - after).abs() < 1e-9);
        assert_eq!(refine_spline(&model, &s, &spec, 0).unwrap(), s);
    }

    #[test]
    fn refinement_straightens_a_detour() {
        let model = ManifoldModel::linear(DMatrix::identity(2, 2), &[0.0, 1.0]).unwrap();
        let path = pts(&[[0.0, 0.0], [0.3, 0.4], [0.6, 0.5], [1.0, 0.0]]);
        let s = fit_spline(&path, 4).unwrap();
        let spec = AmbientMetricSpec::default();
        let before = spline_length(&model, &s, &spec).unwrap();
        let after = spline_length(
            &model,
            &refine_spline(&model, &s, &spec, 40).unwrap(),
            &spec,
        )
        .unwrap();
        assert!(after < before);
        assert!(after < 1.05);
    }
}
