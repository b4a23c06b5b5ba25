//! Inception-variant blocks assembled into a multi-scale hourglass network.
//!
//! Every level of the hourglass computes
//!
//! ```text
//! out = skip(x) ⊕ upsample(up(inner(down(avgpool(x)))))
//! ```
//!
//! where `skip`, `down` and `up` are chains of inception blocks named by id
//! and `inner` is the next level (identity below the deepest one). A 7×7
//! stem lifts RGB to the first level's width and a 3×3 head reduces the
//! outermost level to one channel. Which block sits where is data in
//! [`HourglassConfig`], not code.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{invalid, Error, Result};
use crate::tensor::{Element, Graph, Tensor, Var};

/// Parameters of one inception block: a 1×1 branch plus three
/// `1×1 → k×k` branches, each contributing `out_ch / 4` channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InceptionParams {
    pub in_ch: usize,
    pub out_ch: usize,
    pub inter_dim: usize,
    /// Kernel sizes of the second to fourth branch.
    pub kernels: [usize; 3],
}

impl InceptionParams {
    pub const fn new(in_ch: usize, out_ch: usize, inter_dim: usize, kernels: [usize; 3]) -> Self {
        Self {
            in_ch,
            out_ch,
            inter_dim,
            kernels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_ch == 0 || self.out_ch == 0 || self.inter_dim == 0 {
            return Err(invalid(format!(
                "inception widths must be positive: {self:?}"
            )));
        }
        if self.out_ch % 4 != 0 {
            return Err(invalid(format!(
                "inception out_ch {} is not divisible by 4",
                self.out_ch
            )));
        }
        if let Some(k) = self.kernels.iter().find(|k| **k % 2 == 0) {
            return Err(invalid(format!(
                "inception kernel size {k} must be odd"
            )));
        }
        Ok(())
    }

    pub fn branch_width(&self) -> usize {
        self.out_ch / 4
    }

    /// Weights plus biases of the block.
    pub fn param_count(&self) -> usize {
        let q = self.branch_width();
        let first = self.in_ch * q + q;
        let rest: usize = self
            .kernels
            .iter()
            .map(|k| self.in_ch * self.inter_dim + self.inter_dim + self.inter_dim * q * k * k + q)
            .sum();
        first + rest
    }

    fn scaled(&self, s: ScaleFactor) -> Result<Self> {
        let p = Self {
            in_ch: s.apply(self.in_ch)?,
            out_ch: s.apply(self.out_ch)?,
            inter_dim: s.apply(self.inter_dim)?,
            kernels: self.kernels,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Rational multiplier applied to every channel width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ScaleFactor {
    pub num: usize,
    pub den: usize,
}

impl ScaleFactor {
    pub const ONE: ScaleFactor = ScaleFactor { num: 1, den: 1 };

    pub fn new(num: usize, den: usize) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(invalid(format!(
                "scale factor {num}/{den} must be positive"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn apply(&self, width: usize) -> Result<usize> {
        let scaled = width * self.num;
        if scaled % self.den != 0 || scaled / self.den == 0 {
            return Err(invalid(format!(
                "width {width} scaled by {self} is not a positive integer"
            )));
        }
        Ok(scaled / self.den)
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for ScaleFactor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| invalid(format!("bad scale factor {s:?}")))
        };
        match s.split_once('/') {
            Some((n, d)) => Self::new(parse(n)?, parse(d)?),
            None => Self::new(parse(s)?, 1),
        }
    }
}

impl TryFrom<String> for ScaleFactor {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScaleFactor> for String {
    fn from(s: ScaleFactor) -> String {
        s.to_string()
    }
}

/// Block chains of one hourglass level.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    /// Full-resolution branch added back after upsampling.
    pub skip: Vec<String>,
    /// Applied after pooling, before the inner level.
    pub down: Vec<String>,
    /// Applied after the inner level, before upsampling.
    pub up: Vec<String>,
}

impl LevelSpec {
    fn new(skip: &[&str], down: &[&str], up: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            skip: own(skip),
            down: own(down),
            up: own(up),
        }
    }
}

fn default_stem_channels() -> usize {
    128
}

fn default_stem_kernel() -> usize {
    7
}

fn default_head_kernel() -> usize {
    3
}

/// Network layout. Widths are given at full scale and multiplied by
/// `scale_factor` when the model is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourglassConfig {
    pub n_scales: usize,
    pub scale_factor: ScaleFactor,
    #[serde(default = "default_stem_channels")]
    pub stem_channels: usize,
    #[serde(default = "default_stem_kernel")]
    pub stem_kernel: usize,
    #[serde(default = "default_head_kernel")]
    pub head_kernel: usize,
    #[serde(default = "HourglassConfig::table_blocks")]
    pub blocks: BTreeMap<String, InceptionParams>,
    /// Outermost level first; only the first `n_scales` entries are used.
    #[serde(default = "HourglassConfig::table_levels")]
    pub levels: Vec<LevelSpec>,
}

impl HourglassConfig {
    /// Block ids A–G with their widths and kernel sizes.
    pub fn table_blocks() -> BTreeMap<String, InceptionParams> {
        [
            ("A", InceptionParams::new(128, 64, 64, [3, 7, 11])),
            ("B", InceptionParams::new(128, 128, 32, [3, 5, 7])),
            ("C", InceptionParams::new(128, 128, 64, [3, 7, 11])),
            ("D", InceptionParams::new(128, 256, 32, [3, 5, 7])),
            ("E", InceptionParams::new(256, 256, 32, [3, 5, 7])),
            ("F", InceptionParams::new(256, 256, 64, [3, 7, 11])),
            ("G", InceptionParams::new(256, 128, 32, [3, 5, 7])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Four-level placement of the blocks, outermost first.
    pub fn table_levels() -> Vec<LevelSpec> {
        vec![
            LevelSpec::new(&["A"], &["B", "B"], &["C", "A"]),
            LevelSpec::new(&["B", "C"], &["B", "D"], &["E", "G"]),
            LevelSpec::new(&["E", "F"], &["E", "E"], &["E", "F"]),
            LevelSpec::new(&["E", "E"], &["E", "E", "E"], &[]),
        ]
    }

    /// Full-width network with four scales.
    pub fn full() -> Self {
        Self {
            n_scales: 4,
            scale_factor: ScaleFactor::ONE,
            stem_channels: default_stem_channels(),
            stem_kernel: default_stem_kernel(),
            head_kernel: default_head_kernel(),
            blocks: Self::table_blocks(),
            levels: Self::table_levels(),
        }
    }

    /// One-eighth width, three scales: small enough to train on a CPU.
    pub fn desk() -> Self {
        Self {
            n_scales: 3,
            scale_factor: ScaleFactor { num: 1, den: 8 },
            ..Self::full()
        }
    }

    /// Input height and width must be multiples of this.
    pub fn resolution_multiple(&self) -> usize {
        1 << self.n_scales
    }

    fn block(&self, id: &str) -> Result<InceptionParams> {
        let p = self
            .blocks
            .get(id)
            .ok_or_else(|| invalid(format!("unknown block id {id:?}")))?;
        p.validate()?;
        p.scaled(self.scale_factor)
    }

    fn chain(&self, ids: &[String], mut channels: usize, what: &str) -> Result<(Vec<InceptionParams>, usize)> {
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let p = self.block(id)?;
            if p.in_ch != channels {
                return Err(invalid(format!(
                    "{what}: block {id} expects {} input channels but receives {channels}",
                    p.in_ch
                )));
            }
            channels = p.out_ch;
            out.push(p);
        }
        Ok((out, channels))
    }

    /// Checks channel flow through every level and returns the resolved blocks.
    fn resolve(&self) -> Result<ResolvedLayout> {
        if self.n_scales == 0 {
            return Err(Error::InvalidArgument("n_scales must be at least 1".into()));
        }
        if self.levels.len() < self.n_scales {
            return Err(invalid(format!(
                "{} levels configured but n_scales is {}",
                self.levels.len(),
                self.n_scales
            )));
        }
        for k in [self.stem_kernel, self.head_kernel] {
            if k % 2 == 0 {
                return Err(invalid(format!("kernel size {k} must be odd")));
            }
        }
        let stem_channels = self.scale_factor.apply(self.stem_channels)?;
        let (levels, out_channels) = self.resolve_level(0, stem_channels)?;
        Ok(ResolvedLayout {
            stem_channels,
            levels,
            out_channels,
        })
    }

    fn resolve_level(&self, depth: usize, in_ch: usize) -> Result<(Vec<ResolvedLevel>, usize)> {
        let spec = &self.levels[depth];
        let name = format!("level {depth}");
        let (skip, skip_out) = self.chain(&spec.skip, in_ch, &format!("{name} skip"))?;
        let (down, mid) = self.chain(&spec.down, in_ch, &format!("{name} down"))?;
        let mut levels = Vec::new();
        if depth + 1 < self.n_scales {
            let (inner, inner_out) = self.resolve_level(depth + 1, mid)?;
            if inner_out != mid {
                return Err(invalid(format!(
                    "level {} maps {mid} channels to {inner_out}; it must preserve width",
                    depth + 1
                )));
            }
            levels = inner;
        }
        let (up, up_out) = self.chain(&spec.up, mid, &format!("{name} up"))?;
        if up_out != skip_out {
            return Err(invalid(format!(
                "{name}: skip branch yields {skip_out} channels, upsampled branch {up_out}"
            )));
        }
        levels.insert(0, ResolvedLevel { skip, down, up });
        Ok((levels, skip_out))
    }

    /// Closed-form parameter count of the model this config builds.
    pub fn param_count(&self) -> Result<usize> {
        let layout = self.resolve()?;
        let stem = 3 * layout.stem_channels * self.stem_kernel * self.stem_kernel + layout.stem_channels;
        let head = layout.out_channels * self.head_kernel * self.head_kernel + 1;
        let blocks: usize = layout
            .levels
            .iter()
            .flat_map(|l| l.skip.iter().chain(&l.down).chain(&l.up))
            .map(InceptionParams::param_count)
            .sum();
        Ok(stem + blocks + head)
    }

    /// Output `(height, width)` for an input of the given size, or an error
    /// explaining the required padding.
    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let m = self.resolution_multiple();
        if height == 0 || width == 0 || height % m != 0 || width % m != 0 {
            let pad = |v: usize| v.div_ceil(m).max(1) * m;
            return Err(invalid(format!(
                "input {height}x{width} must be divisible by {m} (2^{} scales); pad to {}x{}",
                self.n_scales,
                pad(height),
                pad(width)
            )));
        }
        Ok((height, width))
    }
}

struct ResolvedLevel {
    skip: Vec<InceptionParams>,
    down: Vec<InceptionParams>,
    up: Vec<InceptionParams>,
}

struct ResolvedLayout {
    stem_channels: usize,
    levels: Vec<ResolvedLevel>,
    out_channels: usize,
}

#[derive(Clone, Copy, Debug)]
struct ConvSlot {
    weight: usize,
    bias: usize,
    padding: usize,
}

#[derive(Clone, Debug)]
struct BlockPlan {
    /// First entry is the 1×1 branch; the rest are `[reduce, conv]` pairs.
    pointwise: ConvSlot,
    branches: Vec<[ConvSlot; 2]>,
}

#[derive(Clone, Debug)]
struct LevelPlan {
    skip: Vec<BlockPlan>,
    down: Vec<BlockPlan>,
    up: Vec<BlockPlan>,
}

#[derive(Clone, Debug)]
struct Plan {
    stem: ConvSlot,
    levels: Vec<LevelPlan>,
    head: ConvSlot,
}

struct Builder<'a, T: Element> {
    params: Vec<(String, Tensor<T>)>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Element> Builder<'_, T> {
    fn conv(&mut self, name: &str, in_ch: usize, out_ch: usize, k: usize) -> ConvSlot {
        let fan_in = (in_ch * k * k) as f64;
        let w = Tensor::randn(vec![out_ch, in_ch, k, k], (2.0 / fan_in).sqrt(), self.rng);
        self.params.push((format!("{name}.weight"), w));
        self.params.push((format!("{name}.bias"), Tensor::zeros(vec![out_ch])));
        ConvSlot {
            weight: self.params.len() - 2,
            bias: self.params.len() - 1,
            padding: (k - 1) / 2,
        }
    }

    fn inception(&mut self, name: &str, p: &InceptionParams) -> BlockPlan {
        let q = p.branch_width();
        let pointwise = self.conv(&format!("{name}.b0"), p.in_ch, q, 1);
        let branches = p
            .kernels
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                [
                    self.conv(&format!("{name}.b{}.reduce", i + 1), p.in_ch, p.inter_dim, 1),
                    self.conv(&format!("{name}.b{}.conv", i + 1), p.inter_dim, q, k),
                ]
            })
            .collect();
        BlockPlan {
            pointwise,
            branches,
        }
    }

    fn chain(&mut self, prefix: &str, blocks: &[InceptionParams]) -> Vec<BlockPlan> {
        blocks
            .iter()
            .enumerate()
            .map(|(i, p)| self.inception(&format!("{prefix}{i}"), p))
            .collect()
    }
}

/// Hourglass network parameters together with the config that produced them.
#[derive(Clone, Debug)]
pub struct Model<T: Element = f32> {
    config: HourglassConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    plan: Plan,
}

impl<T: Element> Model<T> {
    /// Builds the network with He-initialised weights and zero biases.
    pub fn new(config: HourglassConfig, seed: u64) -> Result<Self> {
        let layout = config.resolve()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            params: Vec::new(),
            rng: &mut rng,
        };
        let stem = b.conv("stem", 3, layout.stem_channels, config.stem_kernel);
        let levels = layout
            .levels
            .iter()
            .enumerate()
            .map(|(d, l)| LevelPlan {
                skip: b.chain(&format!("level{d}.skip"), &l.skip),
                down: b.chain(&format!("level{d}.down"), &l.down),
                up: b.chain(&format!("level{d}.up"), &l.up),
            })
            .collect();
        let head = b.conv("head", layout.out_channels, 1, config.head_kernel);
        let (names, tensors) = b.params.into_iter().unzip();
        Ok(Self {
            config,
            names,
            tensors,
            plan: Plan { stem, levels, head },
        })
    }

    pub fn config(&self) -> &HourglassConfig {
        &self.config
    }

    /// Parameter names, aligned with [`Model::tensors`].
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Same architecture with parameters converted to another element type.
    pub fn cast<U: Element>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            plan: self.plan.clone(),
        }
    }

    /// Replaces parameters by name, e.g. from a checkpoint. Every parameter must be present
    /// with its exact shape.
    pub fn load_params(&mut self, named: Vec<(String, Tensor<T>)>) -> Result<()> {
        let mut by_name: BTreeMap<String, Tensor<T>> = named.into_iter().collect();
        for (name, slot) in self.names.iter().zip(&mut self.tensors) {
            let t = by_name
                .remove(name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::ShapeMismatch {
                    op: "load_params",
                    lhs: slot.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            *slot = t;
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Format(format!("unexpected parameter {extra} in checkpoint")));
        }
        Ok(())
    }

    /// Records the forward pass into `g`.
    ///
    /// Returns the `N×1×H×W` output and one graph handle per parameter, in
    /// [`Model::tensors`] order. With `trainable = false` the parameters are
    /// recorded as constants and receive no gradient.
    pub fn forward_graph(&self, g: &mut Graph<T>, image: Var, trainable: bool) -> Result<(Var, Vec<Var>)> {
        let [_, c, h, w] = g.value(image).dims4()?;
        if c != 3 {
            return Err(Error::InvalidShape {
                op: "hourglass forward",
                shape: g.value(image).shape().to_vec(),
                reason: "expected 3 input channels".into(),
            });
        }
        self.config.output_size(h, w)?;
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect::<Result<Vec<_>>>()?;

        let conv = |g: &mut Graph<T>, x: Var, s: ConvSlot, relu: bool| -> Result<Var> {
            let y = g.conv2d(x, vars[s.weight], vars[s.bias], 1, s.padding)?;
            if relu {
                g.relu(y)
            } else {
                Ok(y)
            }
        };
        let block = |g: &mut Graph<T>, x: Var, b: &BlockPlan| -> Result<Var> {
            let mut parts = vec![conv(g, x, b.pointwise, true)?];
            for [reduce, spatial] in &b.branches {
                let r = conv(g, x, *reduce, true)?;
                parts.push(conv(g, r, *spatial, true)?);
            }
            g.concat_channels(&parts)
        };
        let chain = |g: &mut Graph<T>, mut x: Var, blocks: &[BlockPlan]| -> Result<Var> {
            for b in blocks {
                x = block(g, x, b)?;
            }
            Ok(x)
        };

        fn level<T: Element>(
            g: &mut Graph<T>,
            x: Var,
            levels: &[LevelPlan],
            chain: &dyn Fn(&mut Graph<T>, Var, &[BlockPlan]) -> Result<Var>,
        ) -> Result<Var> {
            let (this, deeper) = levels.split_first().expect("at least one level");
            let skip = chain(g, x, &this.skip)?;
            let pooled = g.avgpool2x(x)?;
            let mut y = chain(g, pooled, &this.down)?;
            if !deeper.is_empty() {
                y = level(g, y, deeper, chain)?;
            }
            let y = chain(g, y, &this.up)?;
            let y = g.upsample2x(y)?;
            g.add(skip, y)
        }

        let x = conv(g, image, self.plan.stem, true)?;
        let x = level(g, x, &self.plan.levels, &chain)?;
        let out = conv(g, x, self.plan.head, false)?;
        Ok((out, vars))
    }

    /// Predicts a score map for one `1×3×H×W` image.
    pub fn forward(&self, image: &Tensor<T>) -> Result<DepthMap> {
        let [n, _, h, w] = image.dims4()?;
        if n != 1 {
            return Err(Error::InvalidShape {
                op: "hourglass forward",
                shape: image.shape().to_vec(),
                reason: "expected a single image".into(),
            });
        }
        let mut g = Graph::new();
        let x = g.constant(image.clone())?;
        let (out, _) = self.forward_graph(&mut g, x, false)?;
        DepthMap::from_f64(h, w, g.value(out).data().iter().map(|v| v.f64()).collect())
    }
}

impl Model<f32> {
    pub fn to_checkpoint(&self) -> Vec<(String, Tensor<f32>)> {
        self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn table_rows() {
        let blocks = HourglassConfig::table_blocks();
        let a = blocks["A"];
        assert_eq!((a.in_ch, a.out_ch, a.inter_dim, a.kernels), (128, 64, 64, [3, 7, 11]));
        assert_eq!(a.branch_width(), 16);
        let e = blocks["E"];
        assert_eq!((e.in_ch, e.out_ch, e.inter_dim, e.kernels), (256, 256, 32, [3, 5, 7]));
        for p in blocks.values() {
            p.validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_blocks() {
        assert!(InceptionParams::new(8, 6, 4, [3, 5, 7]).validate().is_err());
        assert!(InceptionParams::new(8, 8, 4, [3, 4, 7]).validate().is_err());
        let mut cfg = HourglassConfig::desk();
        cfg.scale_factor = ScaleFactor::new(1, 64).unwrap();
        assert!(Model::<f32>::new(cfg, 0).is_err());
        let mut cfg = HourglassConfig::desk();
        cfg.levels[0].up = vec!["C".into()];
        let err = Model::<f32>::new(cfg, 0).unwrap_err().to_string();
        assert!(err.contains("skip branch"), "{err}");
    }

    #[test]
    fn resolution_error_has_padding_hint() {
        let cfg = HourglassConfig::desk();
        let err = cfg.output_size(50, 48).unwrap_err().to_string();
        assert!(err.contains("pad to 56x48"), "{err}");
    }

    #[test]
    fn scale_factor_parsing() {
        assert_eq!("1/8".parse::<ScaleFactor>().unwrap(), ScaleFactor { num: 1, den: 8 });
        assert_eq!("2".parse::<ScaleFactor>().unwrap(), ScaleFactor { num: 2, den: 1 });
        assert!("0/3".parse::<ScaleFactor>().is_err());
        assert!("x".parse::<ScaleFactor>().is_err());
    }

    #[test]
    fn single_block_preserves_shape() {
        let blocks = HourglassConfig::table_blocks();
        let cfg = HourglassConfig {
            n_scales: 1,
            scale_factor: ScaleFactor::new(1, 8).unwrap(),
            levels: vec![LevelSpec::new(&["A"], &[], &["A"])],
            ..HourglassConfig::full()
        };
        let model = Model::<f32>::new(cfg, 1).unwrap();
        let p = blocks["A"].scaled(ScaleFactor::new(1, 8).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let x = g
            .constant(Tensor::randn(vec![1, p.in_ch, 16, 16], 1.0, &mut rng))
            .unwrap();
        let plan = &model.plan.levels[0].skip[0];
        let vars: Vec<Var> = model
            .tensors
            .iter()
            .map(|t| g.constant(t.clone()).unwrap())
            .collect();
        let mut parts = Vec::new();
        let s = plan.pointwise;
        let y = g.conv2d(x, vars[s.weight], vars[s.bias], 1, s.padding).unwrap();
        parts.push(g.relu(y).unwrap());
        for [r, c] in &plan.branches {
            let y = g.conv2d(x, vars[r.weight], vars[r.bias], 1, r.padding).unwrap();
            let y = g.relu(y).unwrap();
            let y = g.conv2d(y, vars[c.weight], vars[c.bias], 1, c.padding).unwrap();
            parts.push(g.relu(y).unwrap());
        }
        for part in &parts {
            assert_eq!(g.value(*part).shape(), &[1, p.out_ch / 4, 16, 16]);
        }
        let out = g.concat_channels(&parts).unwrap();
        assert_eq!(g.value(out).shape(), &[1, p.out_ch, 16, 16]);
    }

    #[test]
    fn zero_parameters_give_constant_bias_output() {
        let mut model = Model::<f32>::new(HourglassConfig::desk(), 3).unwrap();
        for (name, t) in model.names.iter().zip(&mut model.tensors) {
            let fill = if name == "head.bias" { 0.375 } else { 0.0 };
            t.data_mut().fill(fill);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let image = Tensor::uniform(vec![1, 3, 16, 24], 0.0, 1.0, &mut rng);
        let out = model.forward(&image).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.375));
    }

    #[test]
    fn same_seed_same_model() {
        let a = Model::<f32>::new(HourglassConfig::desk(), 9).unwrap();
        let b = Model::<f32>::new(HourglassConfig::desk(), 9).unwrap();
        let c = Model::<f32>::new(HourglassConfig::desk(), 10).unwrap();
        assert_eq!(a.tensors, b.tensors);
        assert_ne!(a.tensors, c.tensors);
    }
}
