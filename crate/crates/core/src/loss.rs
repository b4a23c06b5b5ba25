//! Pairwise ranking loss on predicted depth scores, and dense metric supervision.
//!
//! Sign convention: for `r = +1` the loss drives `z_i` above `z_j`, so network
//! output is an ordinal score where larger means closer to the camera.

use std::fmt;

use serde::{Deserialize, Serialize};

pub use crate::depth::Pixel;
use crate::depth::DepthMap;
use crate::error::{Error, Result};

/// Ordinal relation between the first and second point of a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Relation {
    /// First point is closer (`+1`).
    Closer,
    /// First point is farther (`-1`).
    Farther,
    /// Equal depth (`0`).
    Equal,
}

impl Relation {
    pub fn sign(self) -> i8 {
        match self {
            Relation::Closer => 1,
            Relation::Farther => -1,
            Relation::Equal => 0,
        }
    }

    /// Relation seen from the other point.
    pub fn flipped(self) -> Self {
        match self {
            Relation::Closer => Relation::Farther,
            Relation::Farther => Relation::Closer,
            Relation::Equal => Relation::Equal,
        }
    }

    pub fn is_ordered(self) -> bool {
        self != Relation::Equal
    }
}

impl TryFrom<i8> for Relation {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Relation::Closer),
            -1 => Ok(Relation::Farther),
            0 => Ok(Relation::Equal),
            other => Err(Error::InvalidArgument(format!(
                "relation must be +1, -1 or 0, got {other}"
            ))),
        }
    }
}

impl From<Relation> for i8 {
    fn from(r: Relation) -> i8 {
        r.sign()
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.sign())
    }
}

/// One relative-depth query: two pixel locations and their relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairQuery {
    pub i: Pixel,
    pub j: Pixel,
    pub r: Relation,
}

impl PairQuery {
    pub fn new(i: Pixel, j: Pixel, r: Relation) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidArgument(format!(
                "query points must differ, both are {i:?}"
            )));
        }
        Ok(Self { i, j, r })
    }

    pub fn in_bounds(&self, height: usize, width: usize) -> bool {
        self.i.row < height && self.i.col < width && self.j.row < height && self.j.col < width
    }
}

/// `log(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Logistic function, stable for large `|t|`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Loss for one query given the scores at its two points.
pub fn pair_loss(z_i: f64, z_j: f64, r: Relation) -> f64 {
    let delta = z_i - z_j;
    match r {
        Relation::Closer => softplus(-delta),
        Relation::Farther => softplus(delta),
        Relation::Equal => delta * delta,
    }
}

/// `(∂ψ/∂z_i, ∂ψ/∂z_j)` for [`pair_loss`].
pub fn pair_loss_grad(z_i: f64, z_j: f64, r: Relation) -> (f64, f64) {
    let delta = z_i - z_j;
    let d = match r {
        Relation::Closer => -sigmoid(-delta),
        Relation::Farther => sigmoid(delta),
        Relation::Equal => 2.0 * delta,
    };
    (d, -d)
}

/// Sum of [`pair_loss`] over all queries of one image. Not averaged.
pub fn image_loss(z: &DepthMap, queries: &[PairQuery]) -> Result<f64> {
    let mut total = 0.0;
    for (index, q) in queries.iter().enumerate() {
        if !q.in_bounds(z.height(), z.width()) {
            return Err(Error::QueryOutOfBounds {
                index,
                detail: format!(
                    "{:?} / {:?} on a {}x{} map",
                    q.i,
                    q.j,
                    z.height(),
                    z.width()
                ),
            });
        }
        total += pair_loss(z.at(q.i), z.at(q.j), q.r);
    }
    Ok(total)
}

/// Dense supervision variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricLoss {
    /// `mean((log z − log gt)²)`; needs positive predictions.
    #[default]
    LogMse,
    /// `mean((z − gt)²)`.
    Mse,
}

fn check_metric_inputs(z: &DepthMap, gt: &DepthMap, kind: MetricLoss) -> Result<()> {
    if !z.same_shape(gt) {
        return Err(Error::ShapeMismatch {
            op: "metric_depth_loss",
            lhs: vec![z.height(), z.width()],
            rhs: vec![gt.height(), gt.width()],
        });
    }
    if gt.data().iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidArgument(
            "ground-truth depth must be strictly positive".into(),
        ));
    }
    if kind == MetricLoss::LogMse && z.data().iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidArgument(
            "log-space loss needs strictly positive predictions".into(),
        ));
    }
    Ok(())
}

pub fn metric_depth_loss(z: &DepthMap, gt: &DepthMap, kind: MetricLoss) -> Result<f64> {
    check_metric_inputs(z, gt, kind)?;
    let n = z.len() as f64;
    let total: f64 = z
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| match kind {
            MetricLoss::LogMse => (p.ln() - g.ln()).powi(2),
            MetricLoss::Mse => (p - g).powi(2),
        })
        .sum();
    Ok(total / n)
}

pub fn metric_depth_loss_grad(z: &DepthMap, gt: &DepthMap, kind: MetricLoss) -> Result<Vec<f64>> {
    check_metric_inputs(z, gt, kind)?;
    let n = z.len() as f64;
    Ok(z.data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| match kind {
            MetricLoss::LogMse => 2.0 * (p.ln() - g.ln()) / (p * n),
            MetricLoss::Mse => 2.0 * (p - g) / n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn px(row: usize, col: usize) -> Pixel {
        Pixel::new(row, col)
    }

    #[test]
    fn closed_form_values() {
        assert!((pair_loss(0.3, 0.3, Relation::Closer) - LN_2).abs() < 1e-15);
        assert!((pair_loss(0.3, 0.3, Relation::Closer) - 0.693147).abs() < 1e-6);
        assert_eq!(pair_loss(1.25, 1.25, Relation::Equal), 0.0);
        let v = pair_loss(5.0, 0.0, Relation::Closer);
        assert!((v - (1.0 + (-5.0f64).exp()).ln()).abs() < 1e-15);
        assert!((v - 0.0067153).abs() < 1e-7);
    }

    #[test]
    fn large_margin_is_stable() {
        let v = pair_loss(500.0, 0.0, Relation::Farther);
        assert!(v.is_finite());
        // log(1 + e^500) = 500 + log1p(e^-500)
        assert_eq!(v, 500.0);
        assert_eq!(pair_loss(500.0, 0.0, Relation::Closer), (-500.0f64).exp());
        let (a, b) = pair_loss_grad(-500.0, 0.0, Relation::Closer);
        assert_eq!((a, b), (-1.0, 1.0));
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(pair_loss_grad(0.7, 0.7, Relation::Closer), (-0.5, 0.5));
        assert_eq!(pair_loss_grad(0.7, 0.7, Relation::Farther), (0.5, -0.5));
        assert_eq!(pair_loss_grad(2.0, 1.0, Relation::Equal), (2.0, -2.0));
    }

    #[test]
    fn invalid_relation_rejected() {
        assert!(Relation::try_from(2).is_err());
        assert_eq!(Relation::try_from(-1).unwrap(), Relation::Farther);
        assert!(PairQuery::new(px(1, 1), px(1, 1), Relation::Equal).is_err());
    }

    #[test]
    fn image_loss_examples() {
        let z = DepthMap::from_fn(4, 4, |r, c| (r * 4 + c) as f64 * 0.5).unwrap();
        assert_eq!(image_loss(&z, &[]).unwrap(), 0.0);

        let q = PairQuery::new(px(0, 1), px(3, 2), Relation::Farther).unwrap();
        let single = image_loss(&z, &[q]).unwrap();
        let many = image_loss(&z, &[q; 7]).unwrap();
        assert!((many - 7.0 * single).abs() < 1e-12);

        // z(0,1)=0.5, z(3,2)=7.0, z(2,2)=5.0, z(1,0)=2.0, z(1,1)=2.5
        let queries = [
            PairQuery::new(px(0, 1), px(3, 2), Relation::Closer).unwrap(),
            PairQuery::new(px(2, 2), px(1, 0), Relation::Farther).unwrap(),
            PairQuery::new(px(1, 0), px(1, 1), Relation::Equal).unwrap(),
        ];
        let hand = (1.0 + 6.5f64.exp()).ln() + (1.0 + 3.0f64.exp()).ln() + 0.25;
        assert!((image_loss(&z, &queries).unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_names_query_index() {
        let z = DepthMap::constant(4, 4, 1.0).unwrap();
        let queries = [
            PairQuery::new(px(0, 0), px(1, 1), Relation::Equal).unwrap(),
            PairQuery::new(px(0, 0), px(4, 1), Relation::Equal).unwrap(),
        ];
        match image_loss(&z, &queries) {
            Err(Error::QueryOutOfBounds { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn metric_loss_examples() {
        let gt = DepthMap::from_fn(3, 4, |r, c| 1.0 + r as f64 + 0.5 * c as f64).unwrap();
        assert_eq!(metric_depth_loss(&gt, &gt, MetricLoss::LogMse).unwrap(), 0.0);
        let doubled = gt.map(|v| 2.0 * v).unwrap();
        let v = metric_depth_loss(&doubled, &gt, MetricLoss::LogMse).unwrap();
        assert!((v - LN_2 * LN_2).abs() < 1e-12);
        assert!((v - 0.4805).abs() < 1e-4);
        let zero_gt = DepthMap::constant(3, 4, 0.0).unwrap();
        assert!(metric_depth_loss(&gt, &zero_gt, MetricLoss::LogMse).is_err());
        let mse = metric_depth_loss(&doubled, &gt, MetricLoss::Mse).unwrap();
        let oracle: f64 = gt.data().iter().map(|g| g * g).sum::<f64>() / 12.0;
        assert!((mse - oracle).abs() < 1e-12);
    }

    #[test]
    fn metric_loss_matches_loop_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let z = DepthMap::from_fn(5, 6, |_, _| rng.random_range(0.5..9.0)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let gt = DepthMap::from_fn(5, 6, |_, _| rng.random_range(1.0..10.0)).unwrap();
        let mut acc = 0.0;
        for r in 0..5 {
            for c in 0..6 {
                let d = z.at(px(r, c)).ln() - gt.at(px(r, c)).ln();
                acc += d * d;
            }
        }
        let v = metric_depth_loss(&z, &gt, MetricLoss::LogMse).unwrap();
        assert!((v - acc / 30.0).abs() < 1e-12);
    }

    fn relation() -> impl Strategy<Value = Relation> {
        prop_oneof![
            Just(Relation::Closer),
            Just(Relation::Farther),
            Just(Relation::Equal)
        ]
    }

    proptest! {
        #[test]
        fn translation_invariant(zi in -50.0..50.0f64, zj in -50.0..50.0f64, c in -100.0..100.0f64, r in relation()) {
            let a = pair_loss(zi, zj, r);
            let b = pair_loss(zi + c, zj + c, r);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn antisymmetric(zi in -50.0..50.0f64, zj in -50.0..50.0f64) {
            prop_assert_eq!(pair_loss(zi, zj, Relation::Closer), pair_loss(zj, zi, Relation::Farther));
        }

        #[test]
        fn nonnegative_and_monotone(m in -30.0..30.0f64, step in 0.01..5.0f64) {
            for r in [Relation::Closer, Relation::Farther, Relation::Equal] {
                prop_assert!(pair_loss(m, 0.0, r) >= 0.0);
            }
            // margin in the correct direction for +1 is z_i - z_j
            prop_assert!(pair_loss(m + step, 0.0, Relation::Closer) < pair_loss(m, 0.0, Relation::Closer));
            prop_assert!(pair_loss(0.0, m + step, Relation::Farther) < pair_loss(0.0, m, Relation::Farther));
        }

        #[test]
        fn gradient_matches_central_differences(zi in -8.0..8.0f64, zj in -8.0..8.0f64, r in relation()) {
            let eps = 1e-5;
            let (gi, gj) = pair_loss_grad(zi, zj, r);
            let ni = (pair_loss(zi + eps, zj, r) - pair_loss(zi - eps, zj, r)) / (2.0 * eps);
            let nj = (pair_loss(zi, zj + eps, r) - pair_loss(zi, zj - eps, r)) / (2.0 * eps);
            prop_assert!((gi - ni).abs() < 1e-6, "{} vs {}", gi, ni);
            prop_assert!((gj - nj).abs() < 1e-6, "{} vs {}", gj, nj);
            prop_assert!((gi + gj).abs() < 1e-15);
        }
    }
}
