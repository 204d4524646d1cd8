//! Residual dense network over a two-channel input: luminance and its
//! Laplacian.
//!
//! ```text
//! [L, lap] -> sfe1 (3x3) = F(-1) -> sfe2 (3x3) = F(0)
//!          -> RDB_1 -> ... -> RDB_N          (F_1 .. F_N)
//!          -> concat(F_1..F_N) -> gff1 (1x1) -> gff2 (3x3) = F_GF
//!          -> F_GF + F(-1) = F_DF -> head (3x3, 1 channel)
//! ```
//!
//! Inside block `m`, conv `c` sees `concat(F_{m-1}, F_{m,1}, .., F_{m,c-1})`
//! and is followed by ReLU. A 1x1 local fusion conv maps the full
//! concatenation back to `base_channels` and the block input is added back.
//! No other layer has an activation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::seed::{self, Stream};
use crate::tensor::{Graph, Shape, Tensor, TensorError, Var};

/// Spatial size of every non-1x1 convolution.
pub const KERNEL: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    Config(String),
    #[error("tensor {name}: expected shape {expected}, got {got}")]
    TensorShape { name: String, expected: Shape, got: Shape },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    pub num_rdbs: usize,
    pub convs_per_rdb: usize,
    pub growth: usize,
    pub base_channels: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            num_rdbs: 8,
            convs_per_rdb: 6,
            growth: 32,
            base_channels: 64,
        }
    }
}

impl ArchConfig {
    /// Small configuration used by tests and desk-scale experiments.
    pub const fn test_preset() -> Self {
        ArchConfig {
            num_rdbs: 3,
            convs_per_rdb: 4,
            growth: 16,
            base_channels: 16,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("num_rdbs", self.num_rdbs),
            ("convs_per_rdb", self.convs_per_rdb),
            ("growth", self.growth),
            ("base_channels", self.base_channels),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    fn layer_count(&self) -> usize {
        2 + self.num_rdbs * (self.convs_per_rdb + 1) + 3
    }
}

/// One convolution layer of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl LayerSpec {
    fn new(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        LayerSpec {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel, self.kernel)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(self.out_channels, 1, 1, 1)
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().numel() + self.out_channels
    }
}

/// Layers in forward order.
pub fn layer_specs(cfg: &ArchConfig) -> Vec<LayerSpec> {
    let (g0, g) = (cfg.base_channels, cfg.growth);
    let mut layers = vec![
        LayerSpec::new("sfe1", 2, g0, KERNEL),
        LayerSpec::new("sfe2", g0, g0, KERNEL),
    ];
    for m in 1..=cfg.num_rdbs {
        for c in 1..=cfg.convs_per_rdb {
            layers.push(LayerSpec::new(format!("rdb{m}.conv{c}"), g0 + (c - 1) * g, g, KERNEL));
        }
        layers.push(LayerSpec::new(format!("rdb{m}.lff"), g0 + cfg.convs_per_rdb * g, g0, 1));
    }
    layers.push(LayerSpec::new("gff1", cfg.num_rdbs * g0, g0, 1));
    layers.push(LayerSpec::new("gff2", g0, g0, KERNEL));
    layers.push(LayerSpec::new("head", g0, 1, KERNEL));
    layers
}

/// Closed-form parameter count.
pub fn count_params(cfg: &ArchConfig) -> usize {
    let (n, c, g, g0, k2) = (cfg.num_rdbs, cfg.convs_per_rdb, cfg.growth, cfg.base_channels, KERNEL * KERNEL);
    let sfe = (2 * g0 * k2 + g0) + (g0 * g0 * k2 + g0);
    // sum_{c=1..C} (g0 + (c-1) g) = C g0 + g C (C-1) / 2
    let block_convs = (c * g0 + g * c * (c - 1) / 2) * g * k2 + c * g;
    let lff = (g0 + c * g) * g0 + g0;
    let gff = (n * g0 * g0 + g0) + (g0 * g0 * k2 + g0);
    let head = g0 * k2 + 1;
    sfe + n * (block_convs + lff) + gff + head
}

/// Named weights and biases of the network. Tensor `2i` is the weight and
/// `2i + 1` the bias of layer `i` in [`layer_specs`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: ArchConfig,
    layers: Vec<LayerSpec>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn zeros(arch: ArchConfig) -> Result<Self, ModelError> {
        arch.validate()?;
        let layers = layer_specs(&arch);
        let tensors = layers
            .iter()
            .flat_map(|l| [Tensor::zeros(l.weight_shape()), Tensor::zeros(l.bias_shape())])
            .collect();
        Ok(ModelParams { arch, layers, tensors })
    }

    /// Rectifier-scaled normal weights (`std = sqrt(2 / fan_in)`), zero
    /// biases. Deterministic per seed.
    pub fn init(arch: ArchConfig, seed: u64) -> Result<Self, ModelError> {
        let mut params = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, Stream::Init, 0));
        for (i, layer) in params.layers.iter().enumerate() {
            let fan_in = (layer.in_channels * layer.kernel * layer.kernel) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for w in params.tensors[2 * i].data_mut() {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(params)
    }

    /// Weights that copy the luminance input to the output unchanged: one
    /// center tap in `sfe1` and `head`, everything else zero.
    pub fn passthrough(arch: ArchConfig) -> Result<Self, ModelError> {
        let mut params = Self::zeros(arch)?;
        let c = KERNEL / 2;
        for name in ["sfe1", "head"] {
            let (w, _) = params.layer_mut(name).expect("fixed layer");
            let idx = w.index(0, 0, c, c);
            w.data_mut()[idx] = 1.0;
        }
        Ok(params)
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// `"<layer>.weight"` / `"<layer>.bias"`, aligned with [`tensors`](Self::tensors).
    pub fn tensor_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|l| [format!("{}.weight", l.name), format!("{}.bias", l.name)])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn layer(&self, name: &str) -> Option<(&Tensor, &Tensor)> {
        let i = self.layer_index(name)?;
        Some((&self.tensors[2 * i], &self.tensors[2 * i + 1]))
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<(&mut Tensor, &mut Tensor)> {
        let i = self.layer_index(name)?;
        let (w, b) = self.tensors[2 * i..2 * i + 2].split_at_mut(1);
        Some((&mut w[0], &mut b[0]))
    }

    /// Replaces the tensor called `name`, checking its shape.
    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<(), ModelError> {
        let names = self.tensor_names();
        let i = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))?;
        let expected = self.tensors[i].shape();
        if value.shape() != expected {
            return Err(ModelError::TensorShape {
                name: name.to_string(),
                expected,
                got: value.shape(),
            });
        }
        self.tensors[i] = value;
        Ok(())
    }

    pub fn round_to_f32(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::round_to_f32);
    }

    /// Records every tensor as a leaf of `g`.
    pub fn register(&self, g: &mut Graph, requires_grad: bool) -> ParamVars {
        ParamVars {
            arch: self.arch,
            vars: self.tensors.iter().map(|t| g.leaf(t.clone(), requires_grad)).collect(),
        }
    }
}

/// Graph handles for a registered [`ModelParams`], same order as its tensors.
#[derive(Clone, Debug)]
pub struct ParamVars {
    arch: ArchConfig,
    vars: Vec<Var>,
}

/// Weight/bias handles of one convolution.
#[derive(Clone, Copy, Debug)]
pub struct ConvVars {
    pub weight: Var,
    pub bias: Var,
}

/// Handles for one residual dense block.
#[derive(Clone, Debug)]
pub struct BlockVars {
    pub convs: Vec<ConvVars>,
    pub lff: ConvVars,
}

impl ParamVars {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn conv(&self, layer: usize) -> ConvVars {
        ConvVars {
            weight: self.vars[2 * layer],
            bias: self.vars[2 * layer + 1],
        }
    }

    /// Block `m`, zero-based.
    pub fn block(&self, m: usize) -> BlockVars {
        let c = self.arch.convs_per_rdb;
        let base = 2 + m * (c + 1);
        BlockVars {
            convs: (0..c).map(|i| self.conv(base + i)).collect(),
            lff: self.conv(base + c),
        }
    }
}

fn conv(g: &mut Graph, x: Var, p: ConvVars) -> Result<Var, TensorError> {
    let k = g.value(p.weight).shape().height();
    g.conv2d(x, p.weight, p.bias, k / 2)
}

/// One residual dense block: dense ReLU convs, 1x1 local fusion, local
/// residual. Shape is preserved.
pub fn rdb_forward(g: &mut Graph, prev: Var, block: &BlockVars) -> Result<Var, TensorError> {
    let mut feats = vec![prev];
    for &p in &block.convs {
        let x = if feats.len() == 1 { prev } else { g.concat_channels(&feats)? };
        let y = conv(g, x, p)?;
        feats.push(g.relu(y)?);
    }
    let all = g.concat_channels(&feats)?;
    let fused = conv(g, all, block.lff)?;
    g.add(fused, prev)
}

/// Full network. `luminance` and `laplacian` are `(B, 1, H, W)`; the output
/// is the restored luminance, same shape, unclamped.
pub fn rdn_forward(g: &mut Graph, luminance: Var, laplacian: Var, params: &ParamVars) -> Result<Var, TensorError> {
    let (ls, ps) = (g.value(luminance).shape(), g.value(laplacian).shape());
    if ls != ps {
        return Err(TensorError::ShapeMismatch {
            op: "rdn_forward",
            lhs: ls,
            rhs: ps,
        });
    }
    let arch = params.arch;
    let input = g.concat_channels(&[luminance, laplacian])?;
    let shallow = conv(g, input, params.conv(0))?;
    let mut f = conv(g, shallow, params.conv(1))?;
    let mut block_outputs = Vec::with_capacity(arch.num_rdbs);
    for m in 0..arch.num_rdbs {
        f = rdb_forward(g, f, &params.block(m))?;
        block_outputs.push(f);
    }
    let tail = arch.layer_count() - 3;
    let cat = g.concat_channels(&block_outputs)?;
    let fused = conv(g, cat, params.conv(tail))?;
    let global = conv(g, fused, params.conv(tail + 1))?;
    let dense = g.add(global, shallow)?;
    conv(g, dense, params.conv(tail + 2))
}

/// Inference without gradient tracking. Inputs are `(B, 1, H, W)`.
pub fn predict(params: &ModelParams, luminance: &Tensor, laplacian: &Tensor) -> Result<Tensor, TensorError> {
    let mut g = Graph::new();
    let vars = params.register(&mut g, false);
    let l = g.constant(luminance.clone());
    let p = g.constant(laplacian.clone());
    let out = rdn_forward(&mut g, l, p, &vars)?;
    Ok(g.value(out).clone())
}
