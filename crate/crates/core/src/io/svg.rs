use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic::{GeodesicGraph, INFLUENCE_EPS};
use crate::metric::{magnification_factor, AmbientMetricSpec};
use crate::types::LatentPoint;
use crate::vae::ManifoldModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMode {
    /// `log` of the total predictive position variance.
    Variance,
    /// `log sqrt det M`.
    Magnification,
}

/// Scalar field sampled at cell centers over a latent box, row-major from
/// the lower-left cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub cols: usize,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.lo[0] + (self.hi[0] - self.lo[0]) * (i as f64 + 0.5) / self.cols as f64,
            self.lo[1] + (self.hi[1] - self.lo[1]) * (j as f64 + 0.5) / self.rows as f64,
        ]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.cols + i]
    }
}

pub fn latent_raster(
    model: &ManifoldModel,
    mode: PlotMode,
    lo: [f64; 2],
    hi: [f64; 2],
    cols: usize,
    rows: usize,
) -> Result<Raster> {
    if model.dims.d != 2 {
        return Err(Error::invalid("latent plots need a 2-D latent space"));
    }
    if cols == 0 || rows == 0 || !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::invalid("empty raster"));
    }
    let mut raster = Raster {
        lo,
        hi,
        cols,
        rows,
        values: Vec::new(),
    };
    let ambient = AmbientMetricSpec::default();
    raster.values = (0..cols * rows)
        .into_par_iter()
        .map(|k| {
            let z = raster.center(k % cols, k / cols);
            match mode {
                PlotMode::Magnification => {
                    magnification_factor(model, &LatentPoint { coords: z.to_vec() }, &ambient)
                }
                PlotMode::Variance => {
                    let dec = model.decode_vector(&DVector::from_row_slice(&z))?;
                    Ok(dec.position_std.map(|s| s * s).sum().ln())
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(raster)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub mode: PlotMode,
    pub cols: usize,
    pub rows: usize,
    /// Latent curves drawn on top of the field.
    pub paths: Vec<Vec<DVector<f64>>>,
    pub size: f64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            mode: PlotMode::Magnification,
            cols: 80,
            rows: 80,
            paths: Vec::new(),
            size: 480.0,
        }
    }
}

const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colormap(t: f64) -> String {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        1.0
    };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn plot_box(model: &ManifoldModel, graph: Option<&GeodesicGraph>) -> Result<([f64; 2], [f64; 2])> {
    let (lo, hi) = match graph {
        Some(g) => {
            let (lo, hi) = g.bounds();
            (lo.clone(), hi.clone())
        }
        None => {
            let (mut lo, mut hi) = model.latent_bounds()?;
            for j in 0..lo.len() {
                let pad = 0.15 * (hi[j] - lo[j]).max(1e-9);
                lo[j] -= pad;
                hi[j] += pad;
            }
            (lo, hi)
        }
    };
    Ok(([lo[0], lo[1]], [hi[0], hi[1]]))
}

/// SVG text for a latent plot. Output depends only on the inputs.
pub fn render_svg(
    model: &ManifoldModel,
    graph: Option<&GeodesicGraph>,
    options: &PlotOptions,
) -> Result<String> {
    let (lo, hi) = plot_box(model, graph)?;
    let raster = latent_raster(model, options.mode, lo, hi, options.cols, options.rows)?;
    let size = options.size;
    let to_svg = |z: &[f64]| {
        (
            (z[0] - lo[0]) / (hi[0] - lo[0]) * size,
            size - (z[1] - lo[1]) / (hi[1] - lo[1]) * size,
        )
    };
    let finite: Vec<f64> = raster
        .values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    let vmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };

    let mut s = String::new();
    let title = match options.mode {
        PlotMode::Magnification => "magnification factor",
        PlotMode::Variance => "log predictive variance",
    };
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, "<title>{title} (range {vmin:.4} .. {vmax:.4})</title>");
    let (cw, ch) = (size / raster.cols as f64, size / raster.rows as f64);
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for j in 0..raster.rows {
        for i in 0..raster.cols {
            let v = raster.value(i, j);
            let _ = writeln!(
                s,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}" data-v="{v:.6}"/>"#,
                i as f64 * cw,
                size - (j + 1) as f64 * ch,
                cw,
                ch,
                colormap((v - vmin) / span)
            );
        }
    }
    let _ = writeln!(s, "</g>");

    if let Some(g) = graph {
        let _ = writeln!(s, r##"<g fill="#ff7f0e">"##);
        for k in 0..g.node_count() {
            let f = g.node_factor(k);
            if f > 1.0 + INFLUENCE_EPS {
                let (x, y) = to_svg(g.node(k).coords.as_slice());
                let opacity = (f.ln() / 4.0).clamp(0.1, 0.8);
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.3}" cy="{y:.3}" r="2" fill-opacity="{opacity:.3}"/>"#
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }

    let _ = writeln!(s, r##"<g fill="#ffffff" fill-opacity="0.35">"##);
    for row in model.latent_support.row_iter() {
        let (x, y) = to_svg(&[row[0], row[1]]);
        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="1.5"/>"#);
    }
    let _ = writeln!(s, "</g>");

    for path in &options.paths {
        let pts: Vec<String> = path
            .iter()
            .map(|z| {
                let (x, y) = to_svg(z.as_slice());
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn plot_latent(
    model: &ManifoldModel,
    graph: Option<&GeodesicGraph>,
    options: &PlotOptions,
    path: &Path,
) -> Result<()> {
    let svg = render_svg(model, graph, options)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn stub() -> ManifoldModel {
        let support = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.5, -0.5, 1.0]);
        ManifoldModel::linear(DMatrix::identity(2, 2) * 2.0, &[0.0, 1.0])
            .unwrap()
            .with_latent_support(support)
            .unwrap()
    }

    #[test]
    fn raster_matches_pointwise_evaluation() {
        let model = stub();
        let r = latent_raster(
            &model,
            PlotMode::Magnification,
            [0.0, 0.0],
            [1.0, 2.0],
            4,
            3,
        )
        .unwrap();
        assert_eq!(r.center(0, 0), [0.125, 1.0 / 3.0]);
        for v in &r.values {
            assert!((v - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let model = stub();
        let opts = PlotOptions {
            cols: 10,
            rows: 10,
            paths: vec![vec![
                DVector::from_vec(vec![0.0, 0.0]),
                DVector::from_vec(vec![1.0, 1.0]),
            ]],
            ..PlotOptions::default()
        };
        let a = render_svg(&model, None, &opts).unwrap();
        let b = render_svg(&model, None, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<rect").count(), 100);
        assert_eq!(a.matches("<polyline").count(), 1);
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), "#440154");
        assert_eq!(colormap(1.0), "#fde725");
        assert_eq!(colormap(f64::NAN), "#fde725");
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let model = stub();
        let err = plot_latent(
            &model,
            None,
            &PlotOptions::default(),
            Path::new("/nonexistent/dir/x.svg"),
        );
        assert!(err.is_err());
    }
}
