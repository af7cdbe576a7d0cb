use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::par;

const FORMAT: &str = "metaiot-sensing-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
    Relu,
    /// Softmax across the whole hidden layer.
    Softmax,
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            _ => Err(Error::Config(format!("unknown activation {s:?}"))),
        }
    }
}

impl Activation {
    fn apply(self, pre: &[f64], out: &mut [f64]) {
        match self {
            Activation::Sigmoid => {
                for (o, x) in out.iter_mut().zip(pre) {
                    *o = 1.0 / (1.0 + (-x).exp());
                }
            }
            Activation::Tanh => {
                for (o, x) in out.iter_mut().zip(pre) {
                    *o = x.tanh();
                }
            }
            Activation::Relu => {
                for (o, x) in out.iter_mut().zip(pre) {
                    *o = x.max(0.0);
                }
            }
            Activation::Softmax => {
                let m = pre.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for (o, x) in out.iter_mut().zip(pre) {
                    *o = (x - m).exp();
                    s += *o;
                }
                for o in out.iter_mut() {
                    *o /= s;
                }
            }
        }
    }

    /// Back-propagates `dh` (gradient w.r.t. activations) to the pre-activations.
    fn backward(self, pre: &[f64], h: &[f64], dh: &[f64], dpre: &mut [f64]) {
        match self {
            Activation::Sigmoid => {
                for i in 0..h.len() {
                    dpre[i] = dh[i] * h[i] * (1.0 - h[i]);
                }
            }
            Activation::Tanh => {
                for i in 0..h.len() {
                    dpre[i] = dh[i] * (1.0 - h[i] * h[i]);
                }
            }
            Activation::Relu => {
                for i in 0..h.len() {
                    dpre[i] = if pre[i] > 0.0 { dh[i] } else { 0.0 };
                }
            }
            Activation::Softmax => {
                let dot: f64 = h.iter().zip(dh).map(|(a, b)| a * b).sum();
                for i in 0..h.len() {
                    dpre[i] = h[i] * (dh[i] - dot);
                }
            }
        }
    }
}

/// One-hidden-layer perceptron with input standardisation and output
/// min-max scaling.
///
/// Parameters are stored flat as `[W1 (hidden x in, row-major), b1,
/// W2 (out x hidden, row-major), b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingModel {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub activation: Activation,
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    pub out_min: Vec<f64>,
    pub out_scale: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: SensingModel,
}

impl SensingModel {
    pub fn n_params(n_in: usize, n_hidden: usize, n_out: usize) -> usize {
        n_hidden * n_in + n_hidden + n_out * n_hidden + n_out
    }

    /// Zero-weight model with identity normalisation.
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize, activation: Activation) -> Self {
        SensingModel {
            n_in,
            n_hidden,
            n_out,
            activation,
            in_mean: vec![0.0; n_in],
            in_std: vec![1.0; n_in],
            out_min: vec![0.0; n_out],
            out_scale: vec![1.0; n_out],
            w: vec![0.0; Self::n_params(n_in, n_hidden, n_out)],
        }
    }

    /// Glorot-uniform weights, zero biases, normalisation from the training
    /// inputs and the configured output ranges.
    pub fn init<R: Rng + ?Sized>(
        train: &Dataset,
        n_hidden: usize,
        out_bounds: &[(f64, f64)],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training dataset"));
        }
        if n_hidden == 0 {
            return Err(Error::Config("hidden layer needs at least one node".into()));
        }
        let (n_in, n_out) = (train.n_features(), train.n_targets());
        if out_bounds.len() != n_out {
            return Err(Error::Dimension {
                expected: n_out,
                got: out_bounds.len(),
            });
        }
        let mut m = Self::zeros(n_in, n_hidden, n_out, activation);
        let n = train.len() as f64;
        for i in 0..n_in {
            let mean = train.records.iter().map(|r| r.p[i]).sum::<f64>() / n;
            let var = train.records.iter().map(|r| (r.p[i] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            m.in_mean[i] = mean;
            m.in_std[i] = if std > 0.0 && std.is_finite() { std } else { 1.0 };
        }
        for (k, &(lo, hi)) in out_bounds.iter().enumerate() {
            m.out_min[k] = lo;
            // a zero-width range pins that output to `lo`
            m.out_scale[k] = if hi > lo { hi - lo } else { 0.0 };
        }
        let l1 = (6.0 / (n_in + n_hidden) as f64).sqrt();
        let l2 = (6.0 / (n_hidden + n_out) as f64).sqrt();
        let (o_b1, o_w2, o_b2) = m.offsets();
        for x in &mut m.w[..o_b1] {
            *x = rng.random_range(-l1..=l1);
        }
        for x in &mut m.w[o_w2..o_b2] {
            *x = rng.random_range(-l2..=l2);
        }
        Ok(m)
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.n_hidden * self.n_in;
        let w2 = b1 + self.n_hidden;
        let b2 = w2 + self.n_out * self.n_hidden;
        (b1, w2, b2)
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.in_mean.len() == self.n_in
            && self.in_std.len() == self.n_in
            && self.out_min.len() == self.n_out
            && self.out_scale.len() == self.n_out
            && self.w.len() == Self::n_params(self.n_in, self.n_hidden, self.n_out);
        if !dims_ok {
            return Err(Error::Parse {
                path: "<model>".into(),
                msg: "inconsistent model dimensions".into(),
            });
        }
        let stats = self.in_mean.iter().chain(&self.out_min).chain(&self.w);
        if stats.clone().any(|x| !x.is_finite())
            || self.in_std.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.out_scale.iter().any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(Error::Parse {
                path: "<model>".into(),
                msg: "non-finite or negative normalisation statistics".into(),
            });
        }
        Ok(())
    }

    /// Hidden pre-activations, activations and normalised outputs.
    fn forward_parts(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let (o_b1, o_w2, o_b2) = self.offsets();
        let x: Vec<f64> = p
            .iter()
            .zip(&self.in_mean)
            .zip(&self.in_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let mut pre = self.w[o_b1..o_w2].to_vec();
        for (h, pre_h) in pre.iter_mut().enumerate() {
            let row = &self.w[h * self.n_in..(h + 1) * self.n_in];
            *pre_h += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        }
        let mut hid = vec![0.0; self.n_hidden];
        self.activation.apply(&pre, &mut hid);
        let mut y = self.w[o_b2..].to_vec();
        for (k, yk) in y.iter_mut().enumerate() {
            let row = &self.w[o_w2 + k * self.n_hidden..o_w2 + (k + 1) * self.n_hidden];
            *yk += row.iter().zip(&hid).map(|(a, b)| a * b).sum::<f64>();
        }
        (x, pre, hid, y)
    }

    fn check_input(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_in {
            return Err(Error::Dimension {
                expected: self.n_in,
                got: p.len(),
            });
        }
        Ok(())
    }

    /// Condition estimate for one received power vector.
    pub fn forward(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_input(p)?;
        let (_, _, _, y) = self.forward_parts(p);
        Ok(y.iter()
            .zip(&self.out_min)
            .zip(&self.out_scale)
            .map(|((v, lo), s)| lo + s * v)
            .collect())
    }

    fn check_batch(&self, batch: &[&Record]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        for r in batch {
            self.check_input(&r.p)?;
            if r.c.len() != self.n_out {
                return Err(Error::Dimension {
                    expected: self.n_out,
                    got: r.c.len(),
                });
            }
        }
        Ok(())
    }

    fn target(&self, c: &[f64]) -> Vec<f64> {
        c.iter()
            .zip(&self.out_min)
            .zip(&self.out_scale)
            .map(|((v, lo), s)| if *s > 0.0 { (v - lo) / s } else { 0.0 })
            .collect()
    }

    /// Mean squared error per output element, in normalised output units.
    pub fn loss(&self, batch: &[&Record]) -> Result<f64> {
        self.check_batch(batch)?;
        let sq: f64 = batch
            .iter()
            .map(|r| {
                let (_, _, _, y) = self.forward_parts(&r.p);
                y.iter()
                    .zip(self.target(&r.c))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum();
        Ok(sq / (batch.len() * self.n_out) as f64)
    }

    /// Exact gradient of [`SensingModel::loss`] with respect to the flat
    /// parameter vector.
    pub fn gradient(&self, batch: &[&Record]) -> Result<Vec<f64>> {
        Ok(self.loss_gradient(batch)?.1)
    }

    /// Loss and its gradient from a single pass over the batch.
    pub fn loss_gradient(&self, batch: &[&Record]) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        const CHUNK: usize = 64;
        let norm = 2.0 / (batch.len() * self.n_out) as f64;
        let (o_b1, o_w2, o_b2) = self.offsets();
        let partial = par::map_indexed(batch.len().div_ceil(CHUNK), |ci| {
            let mut g = vec![0.0; self.w.len()];
            let mut sq = 0.0;
            let mut dh = vec![0.0; self.n_hidden];
            let mut dpre = vec![0.0; self.n_hidden];
            for r in &batch[ci * CHUNK..((ci + 1) * CHUNK).min(batch.len())] {
                let (x, pre, hid, y) = self.forward_parts(&r.p);
                let t = self.target(&r.c);
                dh.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..self.n_out {
                    sq += (y[k] - t[k]).powi(2);
                    let dy = norm * (y[k] - t[k]);
                    g[o_b2 + k] += dy;
                    let row = o_w2 + k * self.n_hidden;
                    for h in 0..self.n_hidden {
                        g[row + h] += dy * hid[h];
                        dh[h] += dy * self.w[row + h];
                    }
                }
                self.activation.backward(&pre, &hid, &dh, &mut dpre);
                for h in 0..self.n_hidden {
                    g[o_b1 + h] += dpre[h];
                    let row = h * self.n_in;
                    for i in 0..self.n_in {
                        g[row + i] += dpre[h] * x[i];
                    }
                }
            }
            (sq, g)
        });
        let mut total = vec![0.0; self.w.len()];
        let mut sq = 0.0;
        for (s, g) in partial {
            sq += s;
            for (t, v) in total.iter_mut().zip(g) {
                *t += v;
            }
        }
        Ok((sq / (batch.len() * self.n_out) as f64, total))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&ModelFile {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            model: self.clone(),
        })
        .map_err(|e| Error::parse("<model>", e))
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse(origin, e))?;
        if file.format != FORMAT || file.version != FORMAT_VERSION {
            return Err(Error::parse(
                origin,
                format!("unsupported model format {} v{}", file.format, file.version),
            ));
        }
        file.model.validate().map_err(|e| match e {
            Error::Parse { msg, .. } => Error::parse(origin, msg),
            other => other,
        })?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Root mean squared error per condition element, in condition units.
pub fn rmse(model: &SensingModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let sq = par::try_map_indexed(ds.len(), |i| {
        let r = &ds.records[i];
        if r.c.len() != model.n_out {
            return Err(Error::Dimension {
                expected: model.n_out,
                got: r.c.len(),
            });
        }
        let est = model.forward(&r.p)?;
        Ok(est.iter().zip(&r.c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
    })?;
    Ok((sq.iter().sum::<f64>() / (ds.len() * model.n_out) as f64).sqrt())
}
