//! Domain types shared by every stage of the pipeline.
//!
//! Orientations are stored scalar-first (`w, x, y, z` for quaternions) and
//! generalize to unit vectors on `S^m`; positions live in `R^n`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Norms below this are treated as a collapsed orientation head.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Tolerance on `| |q| - 1 |` accepted when constructing a pose.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// End-effector pose: a point of `R^n x S^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec<f64>,
    pub orientation: Vec<f64>,
}

impl Pose {
    /// Builds a pose, renormalizing an orientation that is unit within
    /// [`UNIT_TOLERANCE`].
    pub fn new(position: Vec<f64>, orientation: Vec<f64>) -> Result<Self> {
        if position.is_empty() || orientation.len() < 2 {
            return Err(Error::invalid(
                "pose needs n >= 1 position and m + 1 >= 2 orientation coordinates",
            ));
        }
        if position.iter().chain(&orientation).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("pose"));
        }
        let norm = l2(&orientation);
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitOrientation { norm });
        }
        let orientation = orientation.iter().map(|v| v / norm).collect();
        Ok(Pose {
            position,
            orientation,
        })
    }

    /// Builds a pose from an arbitrary nonzero orientation vector.
    pub fn from_raw(position: Vec<f64>, raw_orientation: &[f64]) -> Result<Self> {
        let (u, _) = normalize_orientation(raw_orientation)?;
        Pose::new(position, u.as_slice().to_vec())
    }

    pub fn n(&self) -> usize {
        self.position.len()
    }

    /// Sphere dimension `m` (orientation has `m + 1` coordinates).
    pub fn m(&self) -> usize {
        self.orientation.len() - 1
    }

    /// Same position, orientation negated.
    pub fn antipode(&self) -> Pose {
        Pose {
            position: self.position.clone(),
            orientation: self.orientation.iter().map(|v| -v).collect(),
        }
    }

    /// Position followed by orientation, the encoder's input layout.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.position.len() + self.orientation.len(),
            self.position.iter().chain(&self.orientation).copied(),
        )
    }
}

/// One recorded sample of a demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub pose: Pose,
    /// Generator-provided group label (e.g. pouring branch), if any.
    pub label: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub id: String,
    pub samples: Vec<Sample>,
}

impl Demonstration {
    pub fn new(id: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let id = id.into();
        let Some(first) = samples.first() else {
            return Err(Error::invalid(format!("demonstration {id} has no samples")));
        };
        let (n, m) = (first.pose.n(), first.pose.m());
        for (i, s) in samples.iter().enumerate() {
            if s.pose.n() != n || s.pose.m() != m {
                return Err(Error::invalid(format!(
                    "demonstration {id}: sample {i} has dims ({}, {}), expected ({n}, {m})",
                    s.pose.n(),
                    s.pose.m()
                )));
            }
            if i > 0 && s.time <= samples[i - 1].time {
                return Err(Error::invalid(format!(
                    "demonstration {id}: timestamps not strictly increasing at sample {i}"
                )));
            }
        }
        Ok(Demonstration { id, samples })
    }

    pub fn dims(&self) -> (usize, usize) {
        let p = &self.samples[0].pose;
        (p.n(), p.m())
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.samples.iter().map(|s| &s.pose)
    }
}

/// Coordinates in the model's latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPoint {
    pub coords: Vec<f64>,
}

impl LatentPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("latent point needs d >= 1"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("latent point"));
        }
        Ok(LatentPoint { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }
}

impl From<&DVector<f64>> for LatentPoint {
    fn from(v: &DVector<f64>) -> Self {
        LatentPoint {
            coords: v.as_slice().to_vec(),
        }
    }
}

/// Spherical obstacle in position space with a soft-cost strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec<f64>,
    pub radius: f64,
    pub strength: f64,
}

impl Obstacle {
    pub fn new(center: Vec<f64>, radius: f64, strength: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "obstacle radius must be > 0, got {radius}"
            )));
        }
        if !(strength > 0.0 && strength.is_finite()) {
            return Err(Error::invalid(format!(
                "obstacle strength must be > 0, got {strength}"
            )));
        }
        if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("obstacle center must be a finite vector"));
        }
        Ok(Obstacle {
            center,
            radius,
            strength,
        })
    }
}

/// Decoded motion: poses at curve parameters in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, Pose)>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::invalid("trajectory has no samples"));
        };
        if first.0 != 0.0 {
            return Err(Error::invalid("trajectory must start at t = 0"));
        }
        if samples.len() > 1 && samples[samples.len() - 1].0 != 1.0 {
            return Err(Error::invalid("trajectory must end at t = 1"));
        }
        if samples.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::invalid(
                "trajectory parameters must be non-decreasing",
            ));
        }
        Ok(Trajectory { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|(_, p)| p.position.as_slice())
    }
}

/// Appends a copy of every demonstration with all orientations negated.
///
/// `q` and `-q` encode the same rotation, so the doubled set lets the model
/// see both hemispheres without any sign preprocessing.
pub fn antipodal_double(demos: &[Demonstration]) -> Result<Vec<Demonstration>> {
    if demos.is_empty() {
        return Err(Error::NoDemonstrations);
    }
    let twins = demos.iter().map(|d| Demonstration {
        id: format!("{}~antipode", d.id),
        samples: d
            .samples
            .iter()
            .map(|s| Sample {
                time: s.time,
                pose: s.pose.antipode(),
                label: s.label,
            })
            .collect(),
    });
    Ok(demos.iter().cloned().chain(twins).collect())
}

/// Projects `v` onto the unit sphere and returns the Jacobian of that map,
/// `(I - u u^T) / |v|`.
pub fn normalize_orientation(v: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let norm = l2(v);
    if !(norm > DEGENERATE_NORM) || !norm.is_finite() {
        return Err(Error::DegenerateQuaternion { norm });
    }
    let u = DVector::from_iterator(v.len(), v.iter().map(|x| x / norm));
    let jac = (DMatrix::identity(v.len(), v.len()) - &u * u.transpose()) / norm;
    Ok((u, jac))
}

/// Geodesic angle between two orientations modulo sign.
///
/// For quaternions (`m = 3`) this is the rotation angle between the two
/// frames, `2 acos |<a, b>|`; for other spheres it is the arc `acos |<a, b>|`.
pub fn orientation_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("orientation_angle", a.len(), b.len())?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (l2(a) * l2(b));
    let arc = dot.abs().min(1.0).acos();
    Ok(if a.len() == 4 { 2.0 * arc } else { arc })
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
