use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::ManifoldModel;
use serde::{Deserialize, Serialize};

use super::vmf::{antipodal_terms, directed_terms};
use crate::error::{check_dim, Error, Result};
use crate::nets::MlpGradients;
use crate::types::Pose;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Which parameter groups receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub encoder: bool,
    pub decoder_mean: bool,
    pub variance_heads: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        encoder: true,
        decoder_mean: true,
        variance_heads: true,
    };
    pub const MEANS: Trainable = Trainable {
        encoder: true,
        decoder_mean: true,
        variance_heads: false,
    };
    pub const HEADS: Trainable = Trainable {
        encoder: false,
        decoder_mean: false,
        variance_heads: true,
    };
}

/// Orientation term of the ELBO. The model density is always antipodal;
/// `Directed` scores `q` with a single vMF and so tells `q` from `-q`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationLikelihood {
    #[default]
    Antipodal,
    Directed,
}

/// Batch means of the three ELBO terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub position_loglik: f64,
    pub orientation_loglik: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct ModelGradients {
    pub encoder_mean: MlpGradients,
    pub encoder_logstd: MlpGradients,
    pub decoder_mean: MlpGradients,
    pub position_precision: DMatrix<f64>,
    pub concentration: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ElboOutput {
    /// Weighted mean of the per-datum negative ELBO.
    pub loss: f64,
    pub terms: ElboTerms,
    pub gradients: ModelGradients,
}

fn batch_matrix(model: &ManifoldModel, batch: &[Pose]) -> Result<DMatrix<f64>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let a = model.dims.ambient();
    let mut x = DMatrix::zeros(a, batch.len());
    for (b, pose) in batch.iter().enumerate() {
        check_dim("batch position", model.dims.n, pose.n())?;
        check_dim(
            "batch orientation",
            model.dims.orientation(),
            pose.orientation.len(),
        )?;
        x.set_column(b, &pose.to_vector());
    }
    Ok(x)
}

/// Negative ELBO and its gradient with one reparameterized sample per datum
/// drawn from `rng`.
pub fn elbo<R: Rng + ?Sized>(
    model: &ManifoldModel,
    batch: &[Pose],
    trainable: Trainable,
    rng: &mut R,
) -> Result<ElboOutput> {
    let noise = DMatrix::from_fn(model.dims.d, batch.len(), |_, _| rng.sample(StandardNormal));
    elbo_with_noise(model, batch, &noise, None, trainable)
}

/// Negative ELBO with explicit reparameterization noise (`d x B`) and
/// optional per-datum weights.
pub fn elbo_with_noise(
    model: &ManifoldModel,
    batch: &[Pose],
    noise: &DMatrix<f64>,
    weights: Option<&[f64]>,
    trainable: Trainable,
) -> Result<ElboOutput> {
    elbo_with_likelihood(
        model,
        batch,
        noise,
        weights,
        trainable,
        OrientationLikelihood::Antipodal,
    )
}

pub fn elbo_with_likelihood(
    model: &ManifoldModel,
    batch: &[Pose],
    noise: &DMatrix<f64>,
    weights: Option<&[f64]>,
    trainable: Trainable,
    likelihood: OrientationLikelihood,
) -> Result<ElboOutput> {
    let x = batch_matrix(model, batch)?;
    let bsz = batch.len();
    let (n, d) = (model.dims.n, model.dims.d);
    let qdim = model.dims.orientation();
    check_dim("noise rows", d, noise.nrows())?;
    check_dim("noise columns", bsz, noise.ncols())?;
    if let Some(w) = weights {
        check_dim("datum weights", bsz, w.len())?;
    }

    let mu_tape = model.encoder_mean.forward_batch(&x)?;
    let ls_tape = model.encoder_logstd.forward_batch(&x)?;
    let mu = mu_tape.output();
    let logstd = ls_tape.output();
    let sigma = logstd.map(f64::exp);
    let z = mu + sigma.component_mul(noise);

    let dec_tape = model.decoder_mean.forward_batch(&z)?;
    let prec_tape = model.position_precision.forward_batch(&z)?;
    let kap_tape = model.concentration.forward_batch(&z)?;
    let y = dec_tape.output();
    let prec = prec_tape.output();
    let kap = kap_tape.output();

    let mut d_y = DMatrix::zeros(y.nrows(), bsz);
    let mut d_prec = DMatrix::zeros(n, bsz);
    let mut d_kap = DMatrix::zeros(1, bsz);
    let mut d_mu = DMatrix::zeros(d, bsz);
    let mut d_logstd = DMatrix::zeros(d, bsz);
    let (alpha, beta) = (model.alpha, model.beta);
    let (mut sum_lx, mut sum_lq, mut sum_kl, mut loss) = (0.0, 0.0, 0.0, 0.0);

    for b in 0..bsz {
        let scale = weights.map_or(1.0, |w| w[b]) / bsz as f64;

        let mut lx = 0.0;
        for a in 0..n {
            let p = prec[(a, b)];
            let r = x[(a, b)] - y[(a, b)];
            lx += 0.5 * (p.ln() - LN_2PI - p * r * r);
            d_y[(a, b)] = -scale * alpha * p * r;
            d_prec[(a, b)] = -scale * alpha * 0.5 * (1.0 / p - r * r);
        }

        let raw = y.view((n, b), (qdim, 1));
        let norm = raw.norm();
        if !(norm > 1e-12) {
            return Err(Error::DegenerateQuaternion { norm });
        }
        let q = x.view((n, b), (qdim, 1));
        let u = raw / norm;
        let t = u.dot(&q);
        let terms = match likelihood {
            OrientationLikelihood::Antipodal => antipodal_terms(qdim, t, kap[(0, b)]),
            OrientationLikelihood::Directed => directed_terms(qdim, t, kap[(0, b)]),
        };
        let lq = terms.value;
        // d/d raw of t = (I - u u^T) q / |raw|
        let dt_draw = (q - &u * t) / norm;
        d_y.view_mut((n, b), (qdim, 1))
            .copy_from(&(dt_draw * (-scale * beta * terms.d_alignment)));
        d_kap[(0, b)] = -scale * beta * terms.d_concentration;

        let mut kl = 0.0;
        for j in 0..d {
            let (m, s, ls) = (mu[(j, b)], sigma[(j, b)], logstd[(j, b)]);
            kl += 0.5 * (m * m + s * s - 1.0 - 2.0 * ls);
            d_mu[(j, b)] = scale * m;
            d_logstd[(j, b)] = scale * (s * s - 1.0);
        }

        sum_lx += lx;
        sum_lq += lq;
        sum_kl += kl;
        loss += scale * -(alpha * lx + beta * lq - kl);
    }

    let terms = ElboTerms {
        position_loglik: sum_lx / bsz as f64,
        orientation_loglik: sum_lq / bsz as f64,
        kl: sum_kl / bsz as f64,
    };
    if !terms.position_loglik.is_finite() {
        return Err(Error::non_finite("position log-likelihood"));
    }
    if !terms.orientation_loglik.is_finite() {
        return Err(Error::non_finite("orientation log-likelihood"));
    }
    if !terms.kl.is_finite() {
        return Err(Error::non_finite("KL"));
    }

    let (g_prec, dz_prec) = model.position_precision.backward(&prec_tape, &d_prec)?;
    let (g_kap, dz_kap) = model.concentration.backward(&kap_tape, &d_kap)?;
    let (g_dec, dz_dec) = if trainable.decoder_mean || trainable.encoder {
        model.decoder_mean.backward(&dec_tape, &d_y)?
    } else {
        (model.decoder_mean.zero_gradients(), DMatrix::zeros(d, bsz))
    };

    let (g_mu, g_ls) = if trainable.encoder {
        let dz = dz_dec + dz_prec + dz_kap;
        d_mu += &dz;
        d_logstd += dz.component_mul(&sigma).component_mul(noise);
        let (g_mu, _) = model.encoder_mean.backward(&mu_tape, &d_mu)?;
        let (g_ls, _) = model.encoder_logstd.backward(&ls_tape, &d_logstd)?;
        (g_mu, g_ls)
    } else {
        (
            model.encoder_mean.zero_gradients(),
            model.encoder_logstd.zero_gradients(),
        )
    };

    let zero_mlp = |g: MlpGradients, on: bool, net: &crate::nets::Mlp| {
        if on {
            g
        } else {
            net.zero_gradients()
        }
    };
    let gradients = ModelGradients {
        encoder_mean: g_mu,
        encoder_logstd: g_ls,
        decoder_mean: zero_mlp(g_dec, trainable.decoder_mean, &model.decoder_mean),
        position_precision: if trainable.variance_heads {
            g_prec
        } else {
            g_prec * 0.0
        },
        concentration: if trainable.variance_heads {
            g_kap
        } else {
            g_kap * 0.0
        },
    };
    Ok(ElboOutput {
        loss,
        terms,
        gradients,
    })
}

/// Mean negative ELBO over `poses` using the posterior mean (no sampling).
pub fn mean_loss(model: &ManifoldModel, poses: &[Pose]) -> Result<f64> {
    let noise = DMatrix::zeros(model.dims.d, poses.len());
    Ok(elbo_with_noise(model, poses, &noise, None, Trainable::HEADS)?.loss)
}

/// Per-datum orientation log-likelihood at the posterior mean.
pub fn orientation_loglik(model: &ManifoldModel, pose: &Pose) -> Result<f64> {
    let z: DVector<f64> = model.encode_mean(pose)?;
    let dec = model.decode_vector(&z)?;
    super::vmf::antipodal_vmf_log_density(
        &pose.orientation,
        dec.orientation.as_slice(),
        dec.concentration,
    )
}
