//! Point-pair samplers, ground-truth relations from depth, and location-bias
//! statistics of labeled pair sets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depth::{DepthMap, Pixel};
use crate::error::{invalid, Error, Result};
use crate::loss::{PairQuery, Relation};
use crate::metrics::LocationRule;

/// Width at which `d_min` and `d_max` are expressed.
pub const REFERENCE_WIDTH: f64 = 320.0;

pub const DEFAULT_EQUAL_RATIO: f64 = 1.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Unconstrained,
    Symmetric,
    DistanceConstrained,
    /// Per image, symmetric with probability `mix_ratio`, otherwise unconstrained.
    Mixed,
}

fn default_d_min() -> f64 {
    13.0
}
fn default_d_max() -> f64 {
    19.0
}
fn default_mix() -> f64 {
    0.5
}
fn default_max_draws() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub width: usize,
    pub height: usize,
    pub strategy: Strategy,
    /// Distance band at the reference width; scaled by `width / 320`.
    #[serde(default = "default_d_min")]
    pub d_min: f64,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    #[serde(default = "default_mix")]
    pub mix_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rejection cap per distance-constrained pair.
    #[serde(default = "default_max_draws")]
    pub max_draws: usize,
}

impl SamplerConfig {
    pub fn new(width: usize, height: usize, strategy: Strategy, seed: u64) -> Self {
        Self {
            width,
            height,
            strategy,
            d_min: default_d_min(),
            d_max: default_d_max(),
            mix_ratio: default_mix(),
            seed,
            max_draws: default_max_draws(),
        }
    }

    /// Resolution scale applied to the distance band.
    pub fn distance_scale(&self) -> f64 {
        self.width as f64 / REFERENCE_WIDTH
    }

    /// Distance band in pixels at this resolution.
    pub fn band(&self) -> (f64, f64) {
        let s = self.distance_scale();
        (self.d_min * s, self.d_max * s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(invalid(format!(
                "image must be at least 2x2, got {}x{}",
                self.height, self.width
            )));
        }
        if self.strategy == Strategy::Symmetric || self.strategy == Strategy::Mixed {
            if self.width < 3 {
                return Err(invalid("symmetric sampling needs width >= 3"));
            }
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return Err(invalid(format!("mix ratio {} outside [0, 1]", self.mix_ratio)));
        }
        if self.strategy == Strategy::DistanceConstrained {
            let (lo, hi) = self.band();
            let side = self.width.min(self.height) as f64;
            if !(self.d_min > 0.0 && self.d_min <= self.d_max && hi < side) {
                return Err(invalid(format!(
                    "distance band [{lo}, {hi}] invalid for {}x{}",
                    self.height, self.width
                )));
            }
            if self.max_draws == 0 {
                return Err(invalid("max_draws must be positive"));
            }
        }
        Ok(())
    }
}

/// Two distinct uniformly random pixels.
pub fn sample_unconstrained<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> (Pixel, Pixel) {
    let mut draw = || Pixel::new(rng.random_range(0..height), rng.random_range(0..width));
    let a = draw();
    loop {
        let b = draw();
        if b != a {
            return (a, b);
        }
    }
}

/// Mirror pair `(y, x)`, `(y, W-1-x)` with `x` uniform on `[0, ceil(W/2) - 1)`.
pub fn sample_symmetric<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> (Pixel, Pixel) {
    let y = rng.random_range(0..height);
    let x = rng.random_range(0..width.div_ceil(2) - 1);
    (Pixel::new(y, x), Pixel::new(y, width - 1 - x))
}

/// Lattice offsets whose length lies in the scaled band, precomputed once.
#[derive(Clone, Debug)]
pub struct DistancePlan {
    offsets: Vec<(isize, isize)>,
    width: usize,
    height: usize,
    max_draws: usize,
}

impl DistancePlan {
    /// Uses offsets with length in `[lo, hi]`; if the band holds no lattice
    /// point, widens it by half a pixel on each side.
    pub fn new(cfg: &SamplerConfig) -> Result<Self> {
        let (lo, hi) = cfg.band();
        let collect = |lo: f64, hi: f64| {
            let r = hi.floor() as isize;
            let mut v = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let d = ((dy * dy + dx * dx) as f64).sqrt();
                    if (dy, dx) != (0, 0) && d >= lo && d <= hi {
                        v.push((dy, dx));
                    }
                }
            }
            v
        };
        let mut offsets = collect(lo, hi);
        if offsets.is_empty() {
            offsets = collect((lo - 0.5).max(0.0), hi + 0.5);
        }
        if offsets.is_empty() {
            return Err(Error::Infeasible(format!("no pixel offsets in band [{lo}, {hi}]")));
        }
        Ok(Self {
            offsets,
            width: cfg.width,
            height: cfg.height,
            max_draws: cfg.max_draws,
        })
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Pixel, Pixel)> {
        for _ in 0..self.max_draws {
            let a = Pixel::new(rng.random_range(0..self.height), rng.random_range(0..self.width));
            let (dy, dx) = self.offsets[rng.random_range(0..self.offsets.len())];
            let (r, c) = (a.row as isize + dy, a.col as isize + dx);
            if r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width {
                return Ok((a, Pixel::new(r as usize, c as usize)));
            }
        }
        Err(Error::Infeasible(format!(
            "no in-bounds pair after {} draws",
            self.max_draws
        )))
    }
}

/// Seeded sampler owning its random stream.
#[derive(Clone, Debug)]
pub struct Sampler {
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
    plan: Option<DistancePlan>,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = match cfg.strategy {
            Strategy::DistanceConstrained => Some(DistancePlan::new(&cfg)?),
            _ => None,
        };
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self { cfg, rng, plan })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    fn draw(&mut self, strategy: Strategy) -> Result<(Pixel, Pixel)> {
        let (w, h) = (self.cfg.width, self.cfg.height);
        match strategy {
            Strategy::Unconstrained => Ok(sample_unconstrained(w, h, &mut self.rng)),
            Strategy::Symmetric => Ok(sample_symmetric(w, h, &mut self.rng)),
            Strategy::DistanceConstrained => self
                .plan
                .as_ref()
                .expect("plan exists for distance strategy")
                .sample(&mut self.rng),
            Strategy::Mixed => unreachable!("mixed resolves per image"),
        }
    }

    /// One pair using the configured strategy (mixed picks afresh).
    pub fn next_pair(&mut self) -> Result<(Pixel, Pixel)> {
        Ok(self.next_image(1)?.remove(0))
    }

    /// `n` pairs for one image; a mixed strategy is resolved once per image.
    pub fn next_image(&mut self, n: usize) -> Result<Vec<(Pixel, Pixel)>> {
        let strategy = match self.cfg.strategy {
            Strategy::Mixed if self.rng.random_bool(self.cfg.mix_ratio) => Strategy::Symmetric,
            Strategy::Mixed => Strategy::Unconstrained,
            s => s,
        };
        (0..n).map(|_| self.draw(strategy)).collect()
    }
}

/// Equal when the larger depth is within `ratio_thresh` of the smaller,
/// otherwise `Closer` when `i` has the smaller depth.
pub fn relation_from_depth(gt: &DepthMap, i: Pixel, j: Pixel, ratio_thresh: f64) -> Result<Relation> {
    if !(ratio_thresh > 1.0) {
        return Err(invalid(format!("ratio threshold {ratio_thresh} must exceed 1")));
    }
    let depth = |p: Pixel| {
        gt.get(p).ok_or_else(|| Error::QueryOutOfBounds {
            index: 0,
            detail: format!("{p:?} outside {}x{}", gt.height(), gt.width()),
        })
    };
    let (a, b) = (depth(i)?, depth(j)?);
    if a <= 0.0 || b <= 0.0 {
        return Err(invalid(format!("depth must be positive, got {a} and {b}")));
    }
    Ok(if a.max(b) / a.min(b) <= ratio_thresh {
        Relation::Equal
    } else if a < b {
        Relation::Closer
    } else {
        Relation::Farther
    })
}

/// Labels `(i, j)` from depth for every pair.
pub fn label_pairs(gt: &DepthMap, pairs: &[(Pixel, Pixel)], ratio_thresh: f64) -> Result<Vec<PairQuery>> {
    pairs
        .iter()
        .map(|&(i, j)| PairQuery::new(i, j, relation_from_depth(gt, i, j, ratio_thresh)?))
        .collect()
}

/// Agreement of location-only rules with ordered labels. Ties score one half.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    /// Pairs with an ordered label; equal-labelled pairs are skipped.
    pub n_ordered: usize,
    pub lower_point: f64,
    pub center_proximity: f64,
    pub left_point: f64,
}

pub fn bias_statistics(pairs: &[PairQuery], height: usize, width: usize) -> Result<BiasReport> {
    let ordered: Vec<&PairQuery> = pairs.iter().filter(|q| q.r.is_ordered()).collect();
    if ordered.is_empty() {
        return Err(invalid("bias statistics need at least one ordered pair"));
    }
    let rate = |rule: LocationRule| {
        let score: f64 = ordered
            .iter()
            .map(|q| match rule.decide(q.i, q.j, height, width) {
                Some(r) if r == q.r => 1.0,
                Some(_) => 0.0,
                None => 0.5,
            })
            .sum();
        score / ordered.len() as f64
    };
    Ok(BiasReport {
        n_ordered: ordered.len(),
        lower_point: rate(LocationRule::LowerPoint),
        center_proximity: rate(LocationRule::CenterProximity),
        left_point: rate(LocationRule::LeftPoint),
    })
}
