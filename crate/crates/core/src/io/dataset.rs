use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::error::{Error, Result};
use crate::types::{Demonstration, Pose, Sample, UNIT_TOLERANCE};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub n: usize,
    pub m: usize,
    pub units: String,
    /// How the data was produced.
    pub generator: String,
    pub seed: Option<u64>,
    /// Names of the per-sample labels, if any.
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub id: String,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    /// Unit vectors; quaternions are scalar-first.
    pub orientations: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub demonstrations: Vec<DemoRecord>,
}

impl DatasetFile {
    pub fn from_demonstrations(header: DatasetHeader, demos: &[Demonstration]) -> Self {
        let demonstrations = demos
            .iter()
            .map(|d| {
                let labels: Vec<Option<u32>> = d.samples.iter().map(|s| s.label).collect();
                DemoRecord {
                    id: d.id.clone(),
                    times: d.samples.iter().map(|s| s.time).collect(),
                    positions: d.samples.iter().map(|s| s.pose.position.clone()).collect(),
                    orientations: d
                        .samples
                        .iter()
                        .map(|s| s.pose.orientation.clone())
                        .collect(),
                    labels: labels
                        .iter()
                        .all(Option::is_some)
                        .then(|| labels.iter().flatten().copied().collect()),
                }
            })
            .collect();
        DatasetFile {
            header,
            demonstrations,
        }
    }

    /// Validates the file and converts it to demonstrations. Orientations
    /// off the unit sphere by more than the tolerance are rejected, not
    /// renormalized.
    pub fn demonstrations(&self) -> Result<Vec<Demonstration>> {
        let h = &self.header;
        if h.version != DATASET_VERSION {
            return Err(Error::format(
                "header.version",
                format!("unsupported version {}", h.version),
            ));
        }
        if self.demonstrations.is_empty() {
            return Err(Error::NoDemonstrations);
        }
        self.demonstrations
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let at = |field: &str| format!("demonstrations[{i}].{field}");
                let len = rec.times.len();
                if rec.positions.len() != len || rec.orientations.len() != len {
                    return Err(Error::format(
                        at("positions"),
                        "times, positions and orientations differ in length",
                    ));
                }
                if let Some(labels) = &rec.labels {
                    if labels.len() != len {
                        return Err(Error::format(at("labels"), "length differs from times"));
                    }
                }
                let mut samples = Vec::with_capacity(len);
                for k in 0..len {
                    let (x, q) = (&rec.positions[k], &rec.orientations[k]);
                    if x.len() != h.n {
                        return Err(Error::format(
                            at(&format!("positions[{k}]")),
                            format!("expected {} values, got {}", h.n, x.len()),
                        ));
                    }
                    if q.len() != h.m + 1 {
                        return Err(Error::format(
                            at(&format!("orientations[{k}]")),
                            format!("expected {} values, got {}", h.m + 1, q.len()),
                        ));
                    }
                    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
                        return Err(Error::format(
                            at(&format!("orientations[{k}]")),
                            format!("norm {norm} is not unit"),
                        ));
                    }
                    let pose = Pose::new(x.clone(), q.clone())
                        .map_err(|e| Error::format(at(&format!("samples[{k}]")), e.to_string()))?;
                    samples.push(Sample {
                        time: rec.times[k],
                        pose,
                        label: rec.labels.as_ref().map(|l| l[k]),
                    });
                }
                Demonstration::new(rec.id.clone(), samples)
                    .map_err(|e| Error::format(at("times"), e.to_string()))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: DatasetFile = read_json(path)?;
        file.demonstrations()?;
        Ok(file)
    }
}

/// Settings for the planar J / spherical C toy set.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyJcConfig {
    pub samples: usize,
    pub demonstrations: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for ToyJcConfig {
    fn default() -> Self {
        ToyJcConfig {
            samples: 100,
            demonstrations: 5,
            noise: 0.02,
            seed: 0,
        }
    }
}

const J_STEM: f64 = 1.5;
const J_RADIUS: f64 = 0.5;

/// Point on the J at arc-length fraction `s`: a vertical stem from (0.5, 2)
/// down to (0.5, 0.5) followed by a half circle hooking left to (-0.5, 0.5).
pub fn j_curve(s: f64) -> [f64; 2] {
    let total = J_STEM + PI * J_RADIUS;
    let a = s.clamp(0.0, 1.0) * total;
    if a <= J_STEM {
        [J_RADIUS, 2.0 - a]
    } else {
        let th = -(a - J_STEM) / J_RADIUS;
        [J_RADIUS * th.cos(), J_RADIUS + J_RADIUS * th.sin()]
    }
}

/// Vertices bounding the J: stem top, stem bottom, hook bottom, hook tip.
pub fn j_control_polygon() -> Vec<[f64; 2]> {
    vec![[0.5, 2.0], [0.5, 0.5], [0.0, 0.0], [-0.5, 0.5]]
}

const C_RADIUS: f64 = 0.6;
const C_OPENING: f64 = PI / 4.0;

/// Tangent-plane C at the north pole of `S^2`, before the exponential map.
fn c_tangent(s: f64) -> [f64; 2] {
    let th = C_OPENING + s.clamp(0.0, 1.0) * (2.0 * PI - 2.0 * C_OPENING);
    [C_RADIUS * th.cos(), C_RADIUS * th.sin()]
}

/// Exponential map of a tangent vector at `(0, 0, 1)`.
fn sphere_exp(v: [f64; 2]) -> [f64; 3] {
    let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if r < 1e-15 {
        return [v[0], v[1], 1.0];
    }
    let k = r.sin() / r;
    [k * v[0], k * v[1], r.cos()]
}

/// Point on the spherical C at arc fraction `s`.
pub fn c_curve(s: f64) -> [f64; 3] {
    sphere_exp(c_tangent(s))
}

pub fn gen_toy_jc(config: &ToyJcConfig) -> Result<DatasetFile> {
    if config.samples < 10 {
        return Err(Error::invalid(format!(
            "need >= 10 samples per shape, got {}",
            config.samples
        )));
    }
    if config.demonstrations == 0 || !(config.noise >= 0.0) {
        return Err(Error::invalid("need >= 1 demonstration and noise >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = Normal::new(0.0, config.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut demos = Vec::with_capacity(config.demonstrations);
    for d in 0..config.demonstrations {
        let samples = (0..config.samples)
            .map(|i| {
                let s = i as f64 / (config.samples - 1) as f64;
                let [x, y] = j_curve(s);
                let position = vec![x + jitter.sample(&mut rng), y + jitter.sample(&mut rng)];
                let [u, v] = c_tangent(s);
                let q = sphere_exp([u + jitter.sample(&mut rng), v + jitter.sample(&mut rng)]);
                Ok(Sample {
                    time: s,
                    pose: Pose::from_raw(position, &q)?,
                    label: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        demos.push(Demonstration::new(format!("jc-{d}"), samples)?);
    }
    let header = DatasetHeader {
        version: DATASET_VERSION,
        n: 2,
        m: 2,
        units: "unitless".into(),
        generator: format!(
            "toy-jc: J-shaped planar positions (stem 1.5, hook radius 0.5) paired by arc length with a C-shaped \
             curve (radius 0.6 rad, opening 90 deg) mapped onto S^2 by the exponential map at (0,0,1); \
             gaussian jitter std {} on positions and tangent coordinates",
            config.noise
        ),
        seed: Some(config.seed),
        labels: None,
    };
    Ok(DatasetFile::from_demonstrations(header, &demos))
}

/// Settings for the three-branch grasp-and-pour set.
#[derive(Debug, Clone, PartialEq)]
pub struct PouringConfig {
    pub samples: usize,
    pub per_branch: usize,
    /// Largest sideways offset of a demonstration at the hub, metres.
    pub spread: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PouringConfig {
    fn default() -> Self {
        PouringConfig {
            samples: 60,
            per_branch: 5,
            spread: 0.08,
            noise: 0.002,
            seed: 0,
        }
    }
}

pub const POURING_BRANCHES: usize = 3;
pub const POURING_HUB: [f64; 3] = [0.5, 0.0, 0.3];
const CAN_X: [f64; 3] = [0.35, 0.5, 0.65];
const CAN_Y: f64 = -0.3;
const CAN_Z: f64 = 0.05;
const CUP_Y: f64 = 0.3;
const CUP_Z: f64 = 0.15;
const BRANCH_YAW_DEG: [f64; 3] = [-30.0, 0.0, 30.0];

pub fn pouring_can(branch: usize) -> [f64; 3] {
    [CAN_X[branch], CAN_Y, CAN_Z]
}

/// Cups are mirrored in x so every branch crosses the others at the hub.
pub fn pouring_cup(branch: usize) -> [f64; 3] {
    [CAN_X[POURING_BRANCHES - 1 - branch], CUP_Y, CUP_Z]
}

fn hermite(p0: [f64; 3], m0: [f64; 3], p1: [f64; 3], m1: [f64; 3], u: f64) -> [f64; 3] {
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    std::array::from_fn(|k| h00 * p0[k] + h10 * m0[k] + h01 * p1[k] + h11 * m1[k])
}

/// Nominal end-effector position of `branch` at progress `s`.
pub fn pouring_position(branch: usize, s: f64) -> [f64; 3] {
    let through = [0.0, 0.6, 0.0];
    if s <= 0.5 {
        hermite(
            pouring_can(branch),
            [0.0, 0.0, 0.8],
            POURING_HUB,
            through,
            2.0 * s,
        )
    } else {
        hermite(
            POURING_HUB,
            through,
            pouring_cup(branch),
            [0.0, 0.3, -0.4],
            2.0 * s - 1.0,
        )
    }
}

fn quat_mul(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

/// Gripper pointing down, scalar-first.
pub const POURING_GRASP: [f64; 4] = [0.0, 1.0, 0.0, 0.0];

/// Orientation of `branch` at progress `s`: the grasp orientation until the
/// hub, then a smooth 90 degree tilt about a branch-specific horizontal axis.
pub fn pouring_orientation(branch: usize, s: f64) -> [f64; 4] {
    let u = ((s - 0.5) / 0.5).clamp(0.0, 1.0);
    let ease = u * u * (3.0 - 2.0 * u);
    let half = 0.5 * FRAC_PI_2 * ease;
    let yaw = BRANCH_YAW_DEG[branch].to_radians();
    let r = [
        half.cos(),
        half.sin() * yaw.cos(),
        half.sin() * yaw.sin(),
        0.0,
    ];
    quat_mul(r, POURING_GRASP)
}

pub fn gen_pouring(config: &PouringConfig) -> Result<DatasetFile> {
    if config.samples < 10 || config.per_branch == 0 {
        return Err(Error::invalid(
            "need >= 10 samples and >= 1 demonstration per branch",
        ));
    }
    if !(config.noise >= 0.0 && config.spread >= 0.0) {
        return Err(Error::invalid("noise and spread must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = Normal::new(0.0, config.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut demos = Vec::new();
    for branch in 0..POURING_BRANCHES {
        for k in 0..config.per_branch {
            let offset = if config.per_branch > 1 {
                config.spread * (2.0 * k as f64 / (config.per_branch - 1) as f64 - 1.0)
            } else {
                0.0
            };
            let samples = (0..config.samples)
                .map(|i| {
                    let s = i as f64 / (config.samples - 1) as f64;
                    let mut p = pouring_position(branch, s);
                    p[0] += offset * (PI * s).sin();
                    let position = p.iter().map(|v| v + jitter.sample(&mut rng)).collect();
                    let q = pouring_orientation(branch, s);
                    Ok(Sample {
                        time: s,
                        pose: Pose::from_raw(position, &q)?,
                        label: Some(branch as u32),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            demos.push(Demonstration::new(format!("branch{branch}-{k}"), samples)?);
        }
    }
    let header = DatasetHeader {
        version: DATASET_VERSION,
        n: 3,
        m: 3,
        units: "metres; quaternions scalar-first".into(),
        generator: format!(
            "pouring: 3 branches from cans at x=0.35/0.5/0.65, y=-0.3 through a shared hub (0.5, 0, 0.3) to cups \
             mirrored in x at y=0.3; {} demonstrations per branch with sideways offsets up to {} m peaking at the \
             hub; orientation holds a top grasp until the hub then tilts 90 deg about a horizontal axis at yaw \
             -30/0/30 deg; jitter std {} m",
            config.per_branch, config.spread, config.noise
        ),
        seed: Some(config.seed),
        labels: Some((0..POURING_BRANCHES).map(|b| format!("branch{b}")).collect()),
    };
    Ok(DatasetFile::from_demonstrations(header, &demos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::orientation_angle;

    #[test]
    fn toy_orientations_are_unit_and_j_is_tall() {
        let file = gen_toy_jc(&ToyJcConfig::default()).unwrap();
        let demos = file.demonstrations().unwrap();
        assert_eq!(demos.len(), 5);
        for p in demos.iter().flat_map(|d| d.poses()) {
            let n: f64 = p.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let poly = j_control_polygon();
        let span = |k: usize| {
            let (lo, hi) = poly
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[k]), hi.max(p[k]))
                });
            hi - lo
        };
        assert!(span(1) > span(0));
        // the curve itself stays within the polygon's box
        for i in 0..=200 {
            let [x, y] = j_curve(i as f64 / 200.0);
            assert!(
                (-0.5 - 1e-12..=0.5 + 1e-12).contains(&x) && (-1e-12..=2.0 + 1e-12).contains(&y)
            );
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = serde_json::to_string(&gen_toy_jc(&ToyJcConfig::default()).unwrap()).unwrap();
        let b = serde_json::to_string(&gen_toy_jc(&ToyJcConfig::default()).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = gen_toy_jc(&ToyJcConfig {
            seed: 1,
            ..ToyJcConfig::default()
        })
        .unwrap();
        assert_ne!(a, serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn pouring_has_three_crossing_branches() {
        let file = gen_pouring(&PouringConfig::default()).unwrap();
        let demos = file.demonstrations().unwrap();
        let mut by_branch: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 3];
        for s in demos.iter().flat_map(|d| &d.samples) {
            by_branch[s.label.unwrap() as usize].push(s.pose.position.clone());
        }
        assert!(by_branch.iter().all(|b| !b.is_empty()));
        for a in 0..3 {
            for b in a + 1..3 {
                let closest = by_branch[a]
                    .iter()
                    .flat_map(|p| {
                        by_branch[b].iter().map(move |q| {
                            crate::types::l2(&[p[0] - q[0], p[1] - q[1], p[2] - q[2]])
                        })
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(closest < 0.02, "branches {a} {b}: {closest}");
            }
        }
    }

    #[test]
    fn pouring_rotates_ninety_degrees() {
        for b in 0..3 {
            let angle =
                orientation_angle(&pouring_orientation(b, 0.0), &pouring_orientation(b, 1.0))
                    .unwrap();
            assert!((angle.to_degrees() - 90.0).abs() < 10.0);
        }
    }

    #[test]
    fn loader_names_offending_sample() {
        let mut file = gen_toy_jc(&ToyJcConfig::default()).unwrap();
        file.demonstrations[2].orientations[7] = vec![0.0, 0.0, 1.1];
        let err = file.demonstrations().unwrap_err().to_string();
        assert!(err.contains("demonstrations[2].orientations[7]"), "{err}");
        let mut file = gen_toy_jc(&ToyJcConfig::default()).unwrap();
        file.header.version = 9;
        assert!(file
            .demonstrations()
            .unwrap_err()
            .to_string()
            .contains("header.version"));
    }

    #[test]
    fn toy_requires_ten_samples() {
        assert!(gen_toy_jc(&ToyJcConfig {
            samples: 9,
            ..ToyJcConfig::default()
        })
        .is_err());
    }
}
