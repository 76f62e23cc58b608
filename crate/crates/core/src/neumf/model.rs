//! GMF, MLP and fused NeuMF scorers over fixed feature rows.
//!
//! Latent vectors are learned linear projections of the feature rows: `U1`/`P1` feed the
//! GMF side and `U2`/`P2` feed the MLP side, so any user or post with a feature row can be
//! scored without retraining.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{bce_grad, bce_with_logits, fill_uniform, relu, sigmoid, Dense};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::matrix::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gmf,
    Mlp,
    Neumf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Gmf, ModelKind::Mlp, ModelKind::Neumf];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gmf => "gmf",
            ModelKind::Mlp => "mlp",
            ModelKind::Neumf => "neumf",
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        ModelKind::ALL
            .get(tag as usize)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("unknown model tag {tag}")))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model `{s}` (gmf, mlp, neumf)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentConfig {
    pub gmf_dim: usize,
    pub mlp_embed_dim: usize,
    pub mlp_layers: [usize; 3],
    pub seed: u64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            gmf_dim: 16,
            mlp_embed_dim: 32,
            mlp_layers: [64, 32, 16],
            seed: 42,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gmf_dim == 0 || self.mlp_embed_dim == 0 || self.mlp_layers.contains(&0) {
            return Err(Error::invalid("latent dimensions must be at least 1"));
        }
        Ok(())
    }
}

/// Feature rows of one (user, post) pair.
#[derive(Clone, Copy, Debug)]
pub struct PairInput<'a> {
    pub u1: &'a [f64],
    pub p1: &'a [f64],
    pub u2: &'a [f64],
    pub p2: &'a [f64],
}

impl<'a> PairInput<'a> {
    pub fn from_features(fs: &'a FeatureSet, user: usize, post: usize) -> Self {
        PairInput {
            u1: fs.u1.row(user),
            p1: fs.p1.row(post),
            u2: fs.u2.row(user),
            p2: fs.p2.row(post),
        }
    }
}

/// Borrowed parameter tensor with its checkpoint name and shape.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub trait NeuralModel: Clone + Send + Sync {
    fn kind(&self) -> ModelKind;
    fn input_dim(&self) -> usize;
    fn latent(&self) -> &LatentConfig;
    fn logit(&self, x: &PairInput) -> f64;
    /// Adds `scale * d bce / d params` for one labelled example into `grad` and returns the
    /// example's loss.
    fn accumulate(&self, x: &PairInput, label: f64, scale: f64, grad: &mut Self) -> f64;
    fn zeros_like(&self) -> Self;
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn predict(&self, x: &PairInput) -> f64 {
        sigmoid(self.logit(x))
    }

    fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

fn dense_tensors<'a>(prefix: &str, d: &'a Dense, out: &mut Vec<TensorRef<'a>>) {
    out.push(TensorRef {
        name: format!("{prefix}.w"),
        shape: vec![d.n_out, d.n_in],
        data: &d.w,
    });
    out.push(TensorRef {
        name: format!("{prefix}.b"),
        shape: vec![d.n_out],
        data: &d.b,
    });
}

fn check_input(x: &PairInput, d: usize) -> bool {
    x.u1.len() == d && x.p1.len() == d && x.u2.len() == d && x.p2.len() == d
}

/// User/item projections whose elementwise product is the GMF representation.
#[derive(Clone, Debug, PartialEq)]
pub struct GmfBranch {
    pub user: Dense,
    pub item: Dense,
}

struct GmfCache {
    p: Vec<f64>,
    q: Vec<f64>,
    phi: Vec<f64>,
}

impl GmfBranch {
    fn init(d: usize, cfg: &LatentConfig, rng: &mut ChaCha8Rng) -> Self {
        GmfBranch {
            user: Dense::init(d, cfg.gmf_dim, rng),
            item: Dense::init(d, cfg.gmf_dim, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        GmfBranch {
            user: Dense::zeros(self.user.n_in, self.user.n_out),
            item: Dense::zeros(self.item.n_in, self.item.n_out),
        }
    }

    fn dim(&self) -> usize {
        self.user.n_out
    }

    fn forward(&self, u1: &[f64], p1: &[f64]) -> GmfCache {
        let g = self.dim();
        let mut p = vec![0.0; g];
        let mut q = vec![0.0; g];
        self.user.forward(u1, &mut p);
        self.item.forward(p1, &mut q);
        let phi = p.iter().zip(&q).map(|(a, b)| a * b).collect();
        GmfCache { p, q, phi }
    }

    fn backward(&self, u1: &[f64], p1: &[f64], c: &GmfCache, dphi: &[f64], grad: &mut GmfBranch) {
        let dp: Vec<f64> = dphi.iter().zip(&c.q).map(|(d, q)| d * q).collect();
        let dq: Vec<f64> = dphi.iter().zip(&c.p).map(|(d, p)| d * p).collect();
        self.user.backward(u1, &dp, &mut grad.user, None);
        self.item.backward(p1, &dq, &mut grad.item, None);
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        dense_tensors(&format!("{prefix}.user"), &self.user, out);
        dense_tensors(&format!("{prefix}.item"), &self.item, out);
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.user.w);
        out.push(&mut self.user.b);
        out.push(&mut self.item.w);
        out.push(&mut self.item.b);
    }
}

/// User/item projections, concatenated and passed through three ReLU layers.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpBranch {
    pub user: Dense,
    pub item: Dense,
    pub layers: Vec<Dense>,
}

struct MlpCache {
    /// Activations: `z[0]` is the concatenated projection, `z[l + 1]` the output of layer `l`.
    z: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    a: Vec<Vec<f64>>,
}

impl MlpBranch {
    fn init(d: usize, cfg: &LatentConfig, rng: &mut ChaCha8Rng) -> Self {
        let e = cfg.mlp_embed_dim;
        let user = Dense::init(d, e, rng);
        let item = Dense::init(d, e, rng);
        let mut layers = Vec::with_capacity(3);
        let mut width = 2 * e;
        for &out in &cfg.mlp_layers {
            layers.push(Dense::init(width, out, rng));
            width = out;
        }
        MlpBranch { user, item, layers }
    }

    fn zeros_like(&self) -> Self {
        MlpBranch {
            user: Dense::zeros(self.user.n_in, self.user.n_out),
            item: Dense::zeros(self.item.n_in, self.item.n_out),
            layers: self.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    fn forward(&self, u2: &[f64], p2: &[f64]) -> MlpCache {
        let e = self.user.n_out;
        let mut z0 = vec![0.0; 2 * e];
        self.user.forward(u2, &mut z0[..e]);
        self.item.forward(p2, &mut z0[e..]);
        let mut z = vec![z0];
        let mut a = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut pre = vec![0.0; layer.n_out];
            layer.forward(z.last().expect("input"), &mut pre);
            z.push(pre.iter().map(|v| relu(*v)).collect());
            a.push(pre);
        }
        MlpCache { z, a }
    }

    fn output<'c>(&self, c: &'c MlpCache) -> &'c [f64] {
        c.z.last().expect("output")
    }

    fn backward(&self, u2: &[f64], p2: &[f64], c: &MlpCache, dout: &[f64], grad: &mut MlpBranch) {
        let mut dz = dout.to_vec();
        for l in (0..self.layers.len()).rev() {
            let da: Vec<f64> = dz
                .iter()
                .zip(&c.a[l])
                .map(|(g, pre)| if *pre > 0.0 { *g } else { 0.0 })
                .collect();
            let mut dprev = vec![0.0; self.layers[l].n_in];
            self.layers[l].backward(&c.z[l], &da, &mut grad.layers[l], Some(&mut dprev));
            dz = dprev;
        }
        let e = self.user.n_out;
        self.user.backward(u2, &dz[..e], &mut grad.user, None);
        self.item.backward(p2, &dz[e..], &mut grad.item, None);
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        dense_tensors(&format!("{prefix}.user"), &self.user, out);
        dense_tensors(&format!("{prefix}.item"), &self.item, out);
        for (i, l) in self.layers.iter().enumerate() {
            dense_tensors(&format!("{prefix}.layer{i}"), l, out);
        }
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.user.w);
        out.push(&mut self.user.b);
        out.push(&mut self.item.w);
        out.push(&mut self.item.b);
        for l in &mut self.layers {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
    }
}

fn readout_tensor<'a>(h: &'a [f64], out: &mut Vec<TensorRef<'a>>) {
    out.push(TensorRef {
        name: "h".into(),
        shape: vec![h.len()],
        data: h,
    });
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmfModel {
    pub branch: GmfBranch,
    /// Readout weights; the output is `sigmoid(h · (p ⊙ q))`.
    pub h: Vec<f64>,
    pub latent: LatentConfig,
}

impl GmfModel {
    pub fn new(input_dim: usize, cfg: &LatentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let branch = GmfBranch::init(input_dim, cfg, &mut rng);
        let mut h = vec![0.0; cfg.gmf_dim];
        fill_uniform(&mut h, cfg.gmf_dim, &mut rng);
        Ok(GmfModel {
            branch,
            h,
            latent: cfg.clone(),
        })
    }
}

impl NeuralModel for GmfModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Gmf
    }

    fn input_dim(&self) -> usize {
        self.branch.user.n_in
    }

    fn latent(&self) -> &LatentConfig {
        &self.latent
    }

    fn logit(&self, x: &PairInput) -> f64 {
        dot(&self.h, &self.branch.forward(x.u1, x.p1).phi)
    }

    fn accumulate(&self, x: &PairInput, label: f64, scale: f64, grad: &mut Self) -> f64 {
        let c = self.branch.forward(x.u1, x.p1);
        let z = dot(&self.h, &c.phi);
        let dz = scale * bce_grad(z, label);
        for (g, p) in grad.h.iter_mut().zip(&c.phi) {
            *g += dz * p;
        }
        let dphi: Vec<f64> = self.h.iter().map(|h| dz * h).collect();
        self.branch.backward(x.u1, x.p1, &c, &dphi, &mut grad.branch);
        bce_with_logits(z, label)
    }

    fn zeros_like(&self) -> Self {
        GmfModel {
            branch: self.branch.zeros_like(),
            h: vec![0.0; self.h.len()],
            latent: self.latent.clone(),
        }
    }

    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        self.branch.tensors("gmf", &mut out);
        readout_tensor(&self.h, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.branch.tensors_mut(&mut out);
        out.push(&mut self.h);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub branch: MlpBranch,
    pub h: Vec<f64>,
    pub latent: LatentConfig,
}

impl MlpModel {
    pub fn new(input_dim: usize, cfg: &LatentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let branch = MlpBranch::init(input_dim, cfg, &mut rng);
        let out = branch.out_dim();
        let mut h = vec![0.0; out];
        fill_uniform(&mut h, out, &mut rng);
        Ok(MlpModel {
            branch,
            h,
            latent: cfg.clone(),
        })
    }
}

impl NeuralModel for MlpModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Mlp
    }

    fn input_dim(&self) -> usize {
        self.branch.user.n_in
    }

    fn latent(&self) -> &LatentConfig {
        &self.latent
    }

    fn logit(&self, x: &PairInput) -> f64 {
        let c = self.branch.forward(x.u2, x.p2);
        dot(&self.h, self.branch.output(&c))
    }

    fn accumulate(&self, x: &PairInput, label: f64, scale: f64, grad: &mut Self) -> f64 {
        let c = self.branch.forward(x.u2, x.p2);
        let out = self.branch.output(&c);
        let z = dot(&self.h, out);
        let dz = scale * bce_grad(z, label);
        for (g, o) in grad.h.iter_mut().zip(out) {
            *g += dz * o;
        }
        let dout: Vec<f64> = self.h.iter().map(|h| dz * h).collect();
        self.branch.backward(x.u2, x.p2, &c, &dout, &mut grad.branch);
        bce_with_logits(z, label)
    }

    fn zeros_like(&self) -> Self {
        MlpModel {
            branch: self.branch.zeros_like(),
            h: vec![0.0; self.h.len()],
            latent: self.latent.clone(),
        }
    }

    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        self.branch.tensors("mlp", &mut out);
        readout_tensor(&self.h, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.branch.tensors_mut(&mut out);
        out.push(&mut self.h);
        out
    }
}

/// Separate GMF and MLP branches under one readout over `[gmf ‖ mlp]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeumfModel {
    pub gmf: GmfBranch,
    pub mlp: MlpBranch,
    pub h: Vec<f64>,
    pub latent: LatentConfig,
}

impl NeumfModel {
    pub fn new(input_dim: usize, cfg: &LatentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let gmf = GmfBranch::init(input_dim, cfg, &mut rng);
        let mlp = MlpBranch::init(input_dim, cfg, &mut rng);
        let n = gmf.dim() + mlp.out_dim();
        let mut h = vec![0.0; n];
        fill_uniform(&mut h, n, &mut rng);
        Ok(NeumfModel {
            gmf,
            mlp,
            h,
            latent: cfg.clone(),
        })
    }
}

impl NeuralModel for NeumfModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Neumf
    }

    fn input_dim(&self) -> usize {
        self.gmf.user.n_in
    }

    fn latent(&self) -> &LatentConfig {
        &self.latent
    }

    fn logit(&self, x: &PairInput) -> f64 {
        let g = self.gmf.forward(x.u1, x.p1);
        let m = self.mlp.forward(x.u2, x.p2);
        let gd = self.gmf.dim();
        dot(&self.h[..gd], &g.phi) + dot(&self.h[gd..], self.mlp.output(&m))
    }

    fn accumulate(&self, x: &PairInput, label: f64, scale: f64, grad: &mut Self) -> f64 {
        let g = self.gmf.forward(x.u1, x.p1);
        let m = self.mlp.forward(x.u2, x.p2);
        let out = self.mlp.output(&m);
        let gd = self.gmf.dim();
        let z = dot(&self.h[..gd], &g.phi) + dot(&self.h[gd..], out);
        let dz = scale * bce_grad(z, label);
        for (gh, v) in grad.h.iter_mut().zip(g.phi.iter().chain(out)) {
            *gh += dz * v;
        }
        let dphi: Vec<f64> = self.h[..gd].iter().map(|h| dz * h).collect();
        let dout: Vec<f64> = self.h[gd..].iter().map(|h| dz * h).collect();
        self.gmf.backward(x.u1, x.p1, &g, &dphi, &mut grad.gmf);
        self.mlp.backward(x.u2, x.p2, &m, &dout, &mut grad.mlp);
        bce_with_logits(z, label)
    }

    fn zeros_like(&self) -> Self {
        NeumfModel {
            gmf: self.gmf.zeros_like(),
            mlp: self.mlp.zeros_like(),
            h: vec![0.0; self.h.len()],
            latent: self.latent.clone(),
        }
    }

    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        self.gmf.tensors("gmf", &mut out);
        self.mlp.tensors("mlp", &mut out);
        readout_tensor(&self.h, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.gmf.tensors_mut(&mut out);
        self.mlp.tensors_mut(&mut out);
        out.push(&mut self.h);
        out
    }
}

/// NeuMF initialized from trained GMF and MLP models with readout
/// `[alpha * h_gmf ‖ (1 - alpha) * h_mlp]`.
pub fn pretrain_and_fuse(gmf: &GmfModel, mlp: &MlpModel, alpha: f64) -> Result<NeumfModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if gmf.input_dim() != mlp.input_dim() {
        return Err(Error::shape(format!(
            "GMF input width {} vs MLP input width {}",
            gmf.input_dim(),
            mlp.input_dim()
        )));
    }
    let mut h: Vec<f64> = gmf.h.iter().map(|v| alpha * v).collect();
    h.extend(mlp.h.iter().map(|v| (1.0 - alpha) * v));
    Ok(NeumfModel {
        gmf: gmf.branch.clone(),
        mlp: mlp.branch.clone(),
        h,
        latent: LatentConfig {
            gmf_dim: gmf.latent.gmf_dim,
            mlp_embed_dim: mlp.latent.mlp_embed_dim,
            mlp_layers: mlp.latent.mlp_layers,
            seed: gmf.latent.seed,
        },
    })
}

/// Any of the three trained models, as loaded from a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Gmf(GmfModel),
    Mlp(MlpModel),
    Neumf(NeumfModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Gmf(_) => ModelKind::Gmf,
            AnyModel::Mlp(_) => ModelKind::Mlp,
            AnyModel::Neumf(_) => ModelKind::Neumf,
        }
    }

    pub fn logit(&self, x: &PairInput) -> f64 {
        match self {
            AnyModel::Gmf(m) => m.logit(x),
            AnyModel::Mlp(m) => m.logit(x),
            AnyModel::Neumf(m) => m.logit(x),
        }
    }

    pub fn predict(&self, x: &PairInput) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            AnyModel::Gmf(m) => m.input_dim(),
            AnyModel::Mlp(m) => m.input_dim(),
            AnyModel::Neumf(m) => m.input_dim(),
        }
    }

    /// Scores one pair after checking the feature widths and parameter finiteness.
    pub fn score(&self, x: &PairInput) -> Result<f64> {
        if !check_input(x, self.input_dim()) {
            return Err(Error::shape(format!(
                "feature rows must have width {}",
                self.input_dim()
            )));
        }
        let finite = match self {
            AnyModel::Gmf(m) => m.is_finite(),
            AnyModel::Mlp(m) => m.is_finite(),
            AnyModel::Neumf(m) => m.is_finite(),
        };
        if !finite {
            return Err(Error::NonFinite(format!("{} parameters", self.kind())));
        }
        Ok(self.predict(x))
    }
}
