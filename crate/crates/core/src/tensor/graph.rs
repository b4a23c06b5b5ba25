use super::kernels;
use super::{Element, Tensor};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::loss::{self, MetricLoss, PairQuery};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    AvgPool2x(Var),
    Upsample2x(Var),
    Add(Var, Var),
    Relu(Var),
    Exp(Var),
    Concat(Vec<Var>),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    WeightedSum(Var, Tensor<T>),
    RankingLoss(Var, Vec<PairQuery>),
    MetricLoss(Var, DepthMap, MetricLoss),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => vec![*input, *weight, *bias],
            Op::AvgPool2x(x)
            | Op::Upsample2x(x)
            | Op::Relu(x)
            | Op::Exp(x)
            | Op::Scale(x, _)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::WeightedSum(x, _)
            | Op::RankingLoss(x, _)
            | Op::MetricLoss(x, _, _) => vec![*x],
            Op::Add(a, b) => vec![*a, *b],
            Op::Concat(parts) => parts.clone(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::AvgPool2x(_) => "avgpool2x",
            Op::Upsample2x(_) => "upsample2x",
            Op::Add(..) => "add",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Concat(_) => "concat_channels",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::WeightedSum(..) => "weighted_sum",
            Op::RankingLoss(..) => "ranking_loss",
            Op::MetricLoss(..) => "metric_loss",
        }
    }
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Summary of one backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackwardReport {
    /// Non-leaf nodes whose backward rule ran.
    pub nodes_visited: usize,
}

/// Single-threaded computation graph recording ops for reverse-mode differentiation.
///
/// Nodes are appended in creation order, which is a topological order, so
/// backward walks the node list in reverse.
pub struct Graph<T: Element = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: receives a gradient on backward.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        value.ensure_finite("param")?;
        Ok(self.push(Op::Leaf, value, true))
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        value.ensure_finite("constant")?;
        Ok(self.push(Op::Leaf, value, false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient from the last backward pass, if this node received one.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, leaf_trainable: bool) -> Var {
        let requires_grad = match op {
            Op::Leaf => leaf_trainable,
            _ => op.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op<T>, value: Tensor<T>) -> Result<Var> {
        value.ensure_finite(op.name())?;
        Ok(self.push(op, value, false))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let out = kernels::conv2d(
            self.value(input),
            self.value(weight),
            self.value(bias).data(),
            stride,
            padding,
        )?;
        self.record(
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            out,
        )
    }

    pub fn avgpool2x(&mut self, x: Var) -> Result<Var> {
        let out = kernels::avgpool2x(self.value(x))?;
        self.record(Op::AvgPool2x(x), out)
    }

    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let out = kernels::upsample2x(self.value(x))?;
        self.record(Op::Upsample2x(x), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| *x + *y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.record(Op::Add(a, b), out)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let data = v.data().iter().map(|a| a.max(T::zero())).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.record(Op::Relu(x), out)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let data = v.data().iter().map(|a| a.exp()).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.record(Op::Exp(x), out)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|p| self.value(*p)).collect();
        let out = kernels::concat_channels(&tensors)?;
        self.record(Op::Concat(parts.to_vec()), out)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let v = self.value(x);
        let f = T::of(factor);
        let data = v.data().iter().map(|a| *a * f).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        self.record(Op::Scale(x, factor), out)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum_f64();
        self.record(Op::Sum(x), Tensor::scalar(T::of(s)))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let s = v.sum_f64() / v.len() as f64;
        self.record(Op::Mean(x), Tensor::scalar(T::of(s)))
    }

    /// `Σ x ⊙ weights` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        let v = self.value(x);
        if v.shape() != weights.shape() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                lhs: v.shape().to_vec(),
                rhs: weights.shape().to_vec(),
            });
        }
        let s: f64 = v
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a.f64() * b.f64())
            .sum();
        self.record(Op::WeightedSum(x, weights), Tensor::scalar(T::of(s)))
    }

    /// Sum of pairwise ranking losses over `queries` on a `1×1×H×W` map.
    pub fn ranking_loss(&mut self, z: Var, queries: &[PairQuery]) -> Result<Var> {
        let map = self.depth_view(z, "ranking_loss")?;
        let total = loss::image_loss(&map, queries)?;
        self.record(
            Op::RankingLoss(z, queries.to_vec()),
            Tensor::scalar(T::of(total)),
        )
    }

    /// Dense supervision against a full depth map.
    pub fn metric_loss(&mut self, z: Var, target: &DepthMap, kind: MetricLoss) -> Result<Var> {
        let map = self.depth_view(z, "metric_loss")?;
        let total = loss::metric_depth_loss(&map, target, kind)?;
        self.record(
            Op::MetricLoss(z, target.clone(), kind),
            Tensor::scalar(T::of(total)),
        )
    }

    fn depth_view(&self, z: Var, op: &'static str) -> Result<DepthMap> {
        let v = self.value(z);
        let [n, c, h, w] = v.dims4()?;
        if n != 1 || c != 1 {
            return Err(Error::InvalidShape {
                op,
                shape: v.shape().to_vec(),
                reason: "expected a single-image, single-channel map".into(),
            });
        }
        DepthMap::from_f64(h, w, v.data().iter().map(|x| x.f64()).collect())
    }

    /// Reverse-mode pass from a scalar root.
    ///
    /// Gradients from any earlier pass are cleared first. Only nodes reachable
    /// from `root` that require a gradient are visited, each exactly once.
    pub fn backward(&mut self, root: Var) -> Result<BackwardReport> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::InvalidShape {
                op: "backward",
                shape: self.nodes[root.0].value.shape().to_vec(),
                reason: "root must be a scalar".into(),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let mut reachable = vec![false; root.0 + 1];
        reachable[root.0] = true;
        for idx in (0..=root.0).rev() {
            if reachable[idx] {
                for input in self.nodes[idx].op.inputs() {
                    reachable[input.0] = true;
                }
            }
        }

        self.nodes[root.0].grad = Some(Tensor::new(
            self.nodes[root.0].value.shape().to_vec(),
            vec![T::one()],
        )?);
        let mut visited = 0;
        for idx in (0..=root.0).rev() {
            if !reachable[idx] || !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = self.nodes[idx].grad.take() else {
                continue;
            };
            visited += 1;
            let contributions = self.backward_rule(idx, &upstream)?;
            self.nodes[idx].grad = Some(upstream);
            for (input, g) in contributions {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                g.ensure_finite("backward")?;
                let slot = &mut self.nodes[input.0].grad;
                match slot {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a = *a + *b;
                        }
                    }
                    None => *slot = Some(g),
                }
            }
        }
        Ok(BackwardReport {
            nodes_visited: visited,
        })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_rule(&self, idx: usize, up: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let like = |v: Var, data: Vec<T>| Tensor::new(self.value(v).shape().to_vec(), data);
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let grads = kernels::conv2d_backward(
                    self.value(*input),
                    self.value(*weight),
                    up.data(),
                    *stride,
                    *padding,
                    self.needs(*input),
                )?;
                let mut out = vec![
                    (*weight, grads.weight),
                    (*bias, like(*bias, grads.bias)?),
                ];
                if let Some(dx) = grads.input {
                    out.push((*input, dx));
                }
                out
            }
            Op::AvgPool2x(x) => vec![(
                *x,
                kernels::avgpool2x_backward(self.value(*x).shape(), up.data()),
            )],
            Op::Upsample2x(x) => vec![(
                *x,
                kernels::upsample2x_backward(self.value(*x).shape(), up.data()),
            )],
            Op::Add(a, b) => vec![(*a, up.clone()), (*b, up.clone())],
            Op::Relu(x) => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(y, g)| if *y > T::zero() { *g } else { T::zero() })
                    .collect();
                vec![(*x, like(*x, data)?)]
            }
            Op::Exp(x) => {
                let data = node
                    .value
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(y, g)| *y * *g)
                    .collect();
                vec![(*x, like(*x, data)?)]
            }
            Op::Concat(parts) => {
                let mut start = 0;
                let mut out = Vec::with_capacity(parts.len());
                for p in parts {
                    let c = self.value(*p).shape()[1];
                    out.push((*p, up.slice_channels(start, start + c)?));
                    start += c;
                }
                out
            }
            Op::Scale(x, f) => {
                let f = T::of(*f);
                let data = up.data().iter().map(|g| *g * f).collect();
                vec![(*x, like(*x, data)?)]
            }
            Op::Sum(x) => {
                let g = up.data()[0];
                vec![(*x, Tensor::full(self.value(*x).shape().to_vec(), g))]
            }
            Op::Mean(x) => {
                let v = self.value(*x);
                let g = T::of(up.data()[0].f64() / v.len() as f64);
                vec![(*x, Tensor::full(v.shape().to_vec(), g))]
            }
            Op::WeightedSum(x, w) => {
                let g = up.data()[0];
                let data = w.data().iter().map(|a| *a * g).collect();
                vec![(*x, like(*x, data)?)]
            }
            Op::RankingLoss(z, queries) => {
                let g = up.data()[0].f64();
                let map = self.depth_view(*z, "ranking_loss")?;
                let width = map.width();
                let mut data = vec![T::zero(); map.len()];
                for q in queries {
                    let (di, dj) = loss::pair_loss_grad(map.at(q.i), map.at(q.j), q.r);
                    let (a, b) = (q.i.row * width + q.i.col, q.j.row * width + q.j.col);
                    data[a] = data[a] + T::of(di * g);
                    data[b] = data[b] + T::of(dj * g);
                }
                vec![(*z, like(*z, data)?)]
            }
            Op::MetricLoss(z, target, kind) => {
                let g = up.data()[0].f64();
                let map = self.depth_view(*z, "metric_loss")?;
                let grad = loss::metric_depth_loss_grad(&map, target, *kind)?;
                let data = grad.into_iter().map(|d| T::of(d * g)).collect();
                vec![(*z, like(*z, data)?)]
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::Pixel;
    use crate::loss::Relation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Build = dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>;

    /// Compares backward against central differences on every parameter
    /// element, returning the worst relative error.
    fn worst_fd_error(params: &[Tensor<f64>], build: &Build) -> f64 {
        let eval = |ps: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone()).unwrap()).collect();
            let root = build(&mut g, &vars).unwrap();
            g.value(root).data()[0]
        };
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone()).unwrap()).collect();
        let root = build(&mut g, &vars).unwrap();
        g.backward(root).unwrap();
        let eps = 1e-3;
        let mut worst: f64 = 0.0;
        for (pi, p) in params.iter().enumerate() {
            let analytic = g.grad(vars[pi]).map(|t| t.data().to_vec());
            for e in 0..p.len() {
                let mut plus = params.to_vec();
                plus[pi].data_mut()[e] += eps;
                let mut minus = params.to_vec();
                minus[pi].data_mut()[e] -= eps;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let a = analytic.as_ref().map_or(0.0, |d| d[e]);
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(err);
            }
        }
        worst
    }

    fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::randn(shape.to_vec(), 1.0, rng)
    }

    /// Values bounded away from zero so ReLU kinks stay outside the FD stencil.
    fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| {
            let m = rng.random_range(0.1..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
    }

    fn check(name: &str, mut case: impl FnMut(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Box<Build>)) {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (params, build) = case(&mut rng);
            let err = worst_fd_error(&params, &*build);
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err}");
        }
    }

    fn reduce(g: &mut Graph<f64>, x: Var, seed: u64) -> Result<Var> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let w = Tensor::randn(g.value(x).shape().to_vec(), 1.0, &mut rng);
        g.weighted_sum(x, w)
    }

    #[test]
    fn conv2d_gradients() {
        for (stride, padding) in [(1, 1), (2, 0), (2, 2)] {
            check("conv2d", |rng| {
                let k = if stride == 2 && padding == 0 { 2 } else { 3 };
                let params = vec![
                    randn(&[2, 2, 5, 6], rng),
                    randn(&[3, 2, k, k], rng),
                    randn(&[3], rng),
                ];
                let build: Box<Build> = Box::new(move |g, v| {
                    let y = g.conv2d(v[0], v[1], v[2], stride, padding)?;
                    reduce(g, y, 1)
                });
                (params, build)
            });
        }
    }

    #[test]
    fn pooling_and_upsampling_gradients() {
        check("avgpool2x", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.avgpool2x(v[0])?;
                reduce(g, y, 2)
            });
            (vec![randn(&[1, 2, 4, 6], rng)], build)
        });
        check("upsample2x", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.upsample2x(v[0])?;
                reduce(g, y, 3)
            });
            (vec![randn(&[1, 2, 3, 2], rng)], build)
        });
    }

    #[test]
    fn elementwise_gradients() {
        check("add", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.add(v[0], v[1])?;
                reduce(g, y, 4)
            });
            (vec![randn(&[1, 1, 3, 3], rng), randn(&[1, 1, 3, 3], rng)], build)
        });
        check("relu", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.relu(v[0])?;
                reduce(g, y, 5)
            });
            (vec![away_from_zero(&[1, 2, 3, 3], rng)], build)
        });
        check("exp", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.exp(v[0])?;
                reduce(g, y, 6)
            });
            (vec![randn(&[1, 1, 4, 4], rng)], build)
        });
        check("scale", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.scale(v[0], -2.5)?;
                reduce(g, y, 7)
            });
            (vec![randn(&[2, 3], rng)], build)
        });
    }

    #[test]
    fn structural_gradients() {
        check("concat_channels", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.concat_channels(&[v[0], v[1], v[0]])?;
                reduce(g, y, 8)
            });
            (vec![randn(&[2, 1, 3, 3], rng), randn(&[2, 3, 3, 3], rng)], build)
        });
        check("sum", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.exp(v[0])?;
                g.sum(y)
            });
            (vec![randn(&[3, 4], rng)], build)
        });
        check("mean", |rng| {
            let build: Box<Build> = Box::new(|g, v| {
                let y = g.exp(v[0])?;
                g.mean(y)
            });
            (vec![randn(&[3, 4], rng)], build)
        });
    }

    fn random_queries(h: usize, w: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<PairQuery> {
        let mut out = Vec::new();
        while out.len() < n {
            let i = Pixel::new(rng.random_range(0..h), rng.random_range(0..w));
            let j = Pixel::new(rng.random_range(0..h), rng.random_range(0..w));
            let r = [Relation::Closer, Relation::Farther, Relation::Equal][rng.random_range(0..3)];
            if let Ok(q) = PairQuery::new(i, j, r) {
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn loss_gradients() {
        check("ranking_loss", |rng| {
            let queries = random_queries(4, 5, 12, rng);
            let build: Box<Build> = Box::new(move |g, v| g.ranking_loss(v[0], &queries));
            (vec![randn(&[1, 1, 4, 5], rng)], build)
        });
        for kind in [MetricLoss::LogMse, MetricLoss::Mse] {
            check("metric_loss", |rng| {
                let gt = DepthMap::from_fn(4, 4, |_, _| rng.random_range(1.0..10.0)).unwrap();
                let build: Box<Build> = Box::new(move |g, v| {
                    let z = g.exp(v[0])?;
                    g.metric_loss(z, &gt, kind)
                });
                (vec![randn(&[1, 1, 4, 4], rng)], build)
            });
        }
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::full(vec![2, 3], 0.7)).unwrap();
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn disconnected_parameter_has_no_gradient() {
        let mut g = Graph::<f32>::new();
        let x = g.param(Tensor::full(vec![2], 1.0)).unwrap();
        let unused = g.param(Tensor::full(vec![2], 1.0)).unwrap();
        let c = g.constant(Tensor::full(vec![2], 3.0)).unwrap();
        let y = g.add(x, c).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(unused).is_none());
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.param(Tensor::full(vec![2], 1.0)).unwrap();
        let y = g.relu(x).unwrap();
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn chain_of_k_ops_visits_k_nodes() {
        for k in [1usize, 4, 17] {
            let mut g = Graph::<f32>::new();
            let mut x = g.param(Tensor::full(vec![1], 0.5)).unwrap();
            for _ in 0..k - 1 {
                x = g.scale(x, 1.01).unwrap();
            }
            let s = g.sum(x).unwrap();
            assert_eq!(g.backward(s).unwrap().nodes_visited, k);
            // A second pass clears and recomputes rather than accumulating.
            g.backward(s).unwrap();
            let once = g.grad(x).unwrap().data()[0];
            assert_eq!(once, 1.0);
        }
    }

    #[test]
    fn non_finite_forward_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.param(Tensor::full(vec![1], 200.0)).unwrap();
        assert!(matches!(g.exp(x), Err(Error::NonFinite { op: "exp" })));
    }
}
