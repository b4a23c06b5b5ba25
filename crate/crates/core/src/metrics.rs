//! Ordinal disagreement rates, threshold calibration, metric depth errors
//! and location-only baselines.
//!
//! Scores follow the ranking-loss convention: a larger score means closer.
//! Standard deviations are population (divide by `n`) throughout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::depth::{DepthMap, Pixel};
use crate::error::{invalid, Error, Result};
use crate::loss::{PairQuery, Relation};

/// Predictions below this are clamped before taking logs.
pub const LOG_CLAMP: f64 = 1e-6;

/// Equal when `|z_i - z_j| < tau`, otherwise the larger score is closer.
pub fn predict_relation(z_i: f64, z_j: f64, tau: f64) -> Relation {
    let d = z_i - z_j;
    if d.abs() < tau {
        Relation::Equal
    } else if d > 0.0 {
        Relation::Closer
    } else {
        Relation::Farther
    }
}

/// Ground-truth relation with the two predicted scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub r: Relation,
    pub z_i: f64,
    pub z_j: f64,
}

impl ScoredPair {
    pub fn delta(&self) -> f64 {
        self.z_i - self.z_j
    }
}

/// Reads each query's scores off a predicted map.
pub fn score_pairs(z: &DepthMap, queries: &[PairQuery]) -> Result<Vec<ScoredPair>> {
    queries
        .iter()
        .enumerate()
        .map(|(k, q)| {
            if !q.in_bounds(z.height(), z.width()) {
                return Err(Error::QueryOutOfBounds {
                    index: k,
                    detail: format!("{q:?} outside {}x{}", z.height(), z.width()),
                });
            }
            Ok(ScoredPair {
                r: q.r,
                z_i: z.at(q.i),
                z_j: z.at(q.j),
            })
        })
        .collect()
}

/// Disagreement rates; a sub-rate is `None` when its subset is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wkdr {
    pub wkdr: f64,
    pub wkdr_eq: Option<f64>,
    pub wkdr_neq: Option<f64>,
}

impl Wkdr {
    /// Largest of the present rates.
    pub fn worst(&self) -> f64 {
        [Some(self.wkdr), self.wkdr_eq, self.wkdr_neq]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }
}

pub fn wkdr(gt: &[Relation], pred: &[Relation]) -> Result<Wkdr> {
    if gt.len() != pred.len() {
        return Err(invalid(format!(
            "{} ground-truth relations but {} predictions",
            gt.len(),
            pred.len()
        )));
    }
    if gt.is_empty() {
        return Err(invalid("WKDR of an empty pair set"));
    }
    let (mut wrong, mut n_eq, mut wrong_eq) = (0usize, 0usize, 0usize);
    for (g, p) in gt.iter().zip(pred) {
        let miss = g != p;
        wrong += miss as usize;
        if *g == Relation::Equal {
            n_eq += 1;
            wrong_eq += miss as usize;
        }
    }
    let n = gt.len();
    let n_neq = n - n_eq;
    let rate = |w: usize, d: usize| (d > 0).then(|| w as f64 / d as f64);
    Ok(Wkdr {
        wkdr: wrong as f64 / n as f64,
        wkdr_eq: rate(wrong_eq, n_eq),
        wkdr_neq: rate(wrong - wrong_eq, n_neq),
    })
}

pub fn wkdr_at(pairs: &[ScoredPair], tau: f64) -> Result<Wkdr> {
    let gt: Vec<Relation> = pairs.iter().map(|p| p.r).collect();
    let pred: Vec<Relation> = pairs
        .iter()
        .map(|p| predict_relation(p.z_i, p.z_j, tau))
        .collect();
    wkdr(&gt, &pred)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tau: f64,
    pub wkdr: f64,
    pub wkdr_eq: f64,
    pub wkdr_neq: f64,
}

impl Calibration {
    pub fn worst(&self) -> f64 {
        self.wkdr.max(self.wkdr_eq).max(self.wkdr_neq)
    }
}

/// Candidate thresholds: 0, midpoints of consecutive distinct `|Δz|`, and
/// just above the largest `|Δz|`.
pub fn tau_candidates(pairs: &[ScoredPair]) -> Vec<f64> {
    let mut mags: Vec<f64> = pairs.iter().map(|p| p.delta().abs()).collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup();
    let mut out = vec![0.0];
    out.extend(mags.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    if let Some(&max) = mags.last() {
        out.push(max + 1e-9 * max.max(1.0));
    }
    out
}

/// Threshold minimising the largest of the three rates; ties go to the
/// smaller threshold.
pub fn calibrate_tau(pairs: &[ScoredPair]) -> Result<Calibration> {
    let n_eq = pairs.iter().filter(|p| p.r == Relation::Equal).count();
    let n = pairs.len();
    if n_eq == 0 || n_eq == n {
        return Err(invalid(
            "calibration needs both equal and unequal ground-truth pairs",
        ));
    }
    let n_neq = n - n_eq;
    let mut order: Vec<&ScoredPair> = pairs.iter().collect();
    order.sort_by(|a, b| a.delta().abs().total_cmp(&b.delta().abs()));

    // Errors when every pair is predicted unequal (tau = 0).
    let mut wrong_eq = n_eq;
    let mut wrong_neq = pairs
        .iter()
        .filter(|p| p.r != Relation::Equal && predict_relation(p.z_i, p.z_j, 0.0) != p.r)
        .count();
    let score = |we: usize, wn: usize| {
        let c = (
            (we + wn) as f64 / n as f64,
            we as f64 / n_eq as f64,
            wn as f64 / n_neq as f64,
        );
        (c.0.max(c.1).max(c.2), c)
    };
    let candidates = tau_candidates(pairs);
    let (mut best_val, mut best_c) = score(wrong_eq, wrong_neq);
    let mut best_tau = 0.0;
    let mut k = 0;
    for &tau in &candidates[1..] {
        while k < order.len() && order[k].delta().abs() < tau {
            let p = order[k];
            if p.r == Relation::Equal {
                wrong_eq -= 1;
            } else {
                if predict_relation(p.z_i, p.z_j, 0.0) == p.r {
                    wrong_neq += 1;
                }
            }
            k += 1;
        }
        let (val, c) = score(wrong_eq, wrong_neq);
        if val < best_val {
            best_val = val;
            best_c = c;
            best_tau = tau;
        }
    }
    Ok(Calibration {
        tau: best_tau,
        wkdr: best_c.0,
        wkdr_eq: best_c.1,
        wkdr_neq: best_c.2,
    })
}

/// Fraction of ordered pairs whose score difference has the wrong sign.
pub fn whdr(pairs: &[ScoredPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("WHDR of an empty pair set"));
    }
    let mut wrong = 0usize;
    for p in pairs {
        let want = match p.r {
            Relation::Closer => 1.0,
            Relation::Farther => -1.0,
            Relation::Equal => return Err(invalid("WHDR is undefined for equal-labelled pairs")),
        };
        if p.delta().signum() != want || p.delta() == 0.0 {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / pairs.len() as f64)
}

/// Affine map onto the given mean and population std. With `negate`, the
/// scores are negated first so that larger output means farther.
pub fn normalize_depth(pred: &DepthMap, target_mean: f64, target_std: f64, negate: bool) -> Result<DepthMap> {
    if !(target_std > 0.0) || !target_mean.is_finite() {
        return Err(invalid(format!(
            "normalisation target mean {target_mean}, std {target_std} invalid"
        )));
    }
    let sign = if negate { -1.0 } else { 1.0 };
    let (mean, std) = (sign * pred.mean(), pred.std());
    if std <= f64::EPSILON * mean.abs().max(1.0) {
        return Err(invalid("cannot normalise a constant prediction"));
    }
    pred.map(|v| (sign * v - mean) / std * target_std + target_mean)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricErrors {
    pub rmse: f64,
    pub rmse_log: f64,
    pub rmse_sinv: f64,
    pub absrel: f64,
    pub sqrrel: f64,
    /// Predictions raised to [`LOG_CLAMP`] for the log measures.
    pub clamped: usize,
}

/// Running sums from which [`MetricErrors`] are formed; sums over several
/// maps pool their pixels.
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorSums {
    n: usize,
    sq: f64,
    log_sq: f64,
    log: f64,
    abs_rel: f64,
    sq_rel: f64,
    clamped: usize,
}

impl ErrorSums {
    pub fn add(&mut self, pred: &DepthMap, gt: &DepthMap) -> Result<()> {
        if !pred.same_shape(gt) {
            return Err(Error::ShapeMismatch {
                op: "metric_errors",
                lhs: vec![pred.height(), pred.width()],
                rhs: vec![gt.height(), gt.width()],
            });
        }
        if gt.data().iter().any(|g| *g <= 0.0) {
            return Err(invalid("ground-truth depth must be strictly positive"));
        }
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            let e = p - g;
            self.sq += e * e;
            self.abs_rel += e.abs() / g;
            self.sq_rel += e * e / g;
            if p < LOG_CLAMP {
                self.clamped += 1;
            }
            let d = p.max(LOG_CLAMP).ln() - g.ln();
            self.log += d;
            self.log_sq += d * d;
        }
        self.n += gt.len();
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricErrors> {
        if self.n == 0 {
            return Err(invalid("no pixels accumulated"));
        }
        let n = self.n as f64;
        let mean_log = self.log / n;
        Ok(MetricErrors {
            rmse: (self.sq / n).sqrt(),
            rmse_log: (self.log_sq / n).sqrt(),
            rmse_sinv: (self.log_sq / n - mean_log * mean_log).max(0.0).sqrt(),
            absrel: self.abs_rel / n,
            sqrrel: self.sq_rel / n,
            clamped: self.clamped,
        })
    }
}

pub fn metric_errors(pred: &DepthMap, gt: &DepthMap) -> Result<MetricErrors> {
    let mut sums = ErrorSums::default();
    sums.add(pred, gt)?;
    sums.finish()
}

/// Relation guess from point locations alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationRule {
    /// The point lower in the image (larger row) is closer.
    LowerPoint,
    /// The point nearer the image centre is closer.
    CenterProximity,
    /// The point with the smaller column is closer.
    LeftPoint,
    /// Lower point, with a random guess on equal rows.
    LocationOnly,
}

impl LocationRule {
    /// `None` when the rule cannot tell the points apart.
    pub fn decide(self, i: Pixel, j: Pixel, height: usize, width: usize) -> Option<Relation> {
        use std::cmp::Ordering::*;
        let pick = |ord: std::cmp::Ordering| match ord {
            Greater => Some(Relation::Closer),
            Less => Some(Relation::Farther),
            Equal => None,
        };
        match self {
            LocationRule::LowerPoint | LocationRule::LocationOnly => pick(i.row.cmp(&j.row)),
            LocationRule::LeftPoint => pick(j.col.cmp(&i.col)),
            LocationRule::CenterProximity => {
                // Doubled coordinates keep the centre on the integer grid.
                let (cy, cx) = (height as i64 - 1, width as i64 - 1);
                let d2 = |p: Pixel| {
                    let (dy, dx) = (2 * p.row as i64 - cy, 2 * p.col as i64 - cx);
                    dy * dy + dx * dx
                };
                pick(d2(j).cmp(&d2(i)))
            }
        }
    }
}

/// Rule decision with a fair coin from `rng` on ties.
pub fn baseline_relation<R: Rng + ?Sized>(
    i: Pixel,
    j: Pixel,
    rule: LocationRule,
    height: usize,
    width: usize,
    rng: &mut R,
) -> Relation {
    rule.decide(i, j, height, width).unwrap_or_else(|| {
        if rng.random_bool(0.5) {
            Relation::Closer
        } else {
            Relation::Farther
        }
    })
}

pub const REPORT_KEYS: [&str; 10] = [
    "wkdr", "wkdr_eq", "wkdr_neq", "tau", "whdr", "rmse", "rmse_log", "rmse_sinv", "absrel", "sqrrel",
];

/// Evaluation summary. Absent entries could not be computed from the inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wkdr: Option<f64>,
    pub wkdr_eq: Option<f64>,
    pub wkdr_neq: Option<f64>,
    pub tau: Option<f64>,
    pub whdr: Option<f64>,
    pub rmse: Option<f64>,
    pub rmse_log: Option<f64>,
    pub rmse_sinv: Option<f64>,
    pub absrel: Option<f64>,
    pub sqrrel: Option<f64>,
}

impl MetricsReport {
    fn values(&self) -> [Option<f64>; 10] {
        [
            self.wkdr,
            self.wkdr_eq,
            self.wkdr_neq,
            self.tau,
            self.whdr,
            self.rmse,
            self.rmse_log,
            self.rmse_sinv,
            self.absrel,
            self.sqrrel,
        ]
    }

    /// `key=value` lines in fixed key order; absent values print as `NA`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in REPORT_KEYS.iter().zip(self.values()) {
            match v {
                Some(v) => writeln!(s, "{k}={v}"),
                None => writeln!(s, "{k}=NA"),
            }
            .expect("writing to a String");
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `<stem>.txt` and `<stem>.json` into `dir`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        fs::write(dir.join(format!("{stem}.json")), self.to_json())?;
        Ok(())
    }
}

/// One evaluated image: the raw network scores, its queries and optionally
/// ground-truth depth.
#[derive(Clone, Debug)]
pub struct EvalItem {
    pub scores: DepthMap,
    pub queries: Vec<PairQuery>,
    pub gt: Option<DepthMap>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TauChoice {
    /// Use this threshold.
    Fixed(f64),
    /// Calibrate on the evaluated pairs themselves.
    Calibrate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub tau: TauChoice,
    /// Mean and std the scores are mapped onto before metric errors; when
    /// absent, the statistics of the mean ground-truth map are used.
    pub target: Option<(f64, f64)>,
    pub negate: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tau: TauChoice::Calibrate,
            target: None,
            negate: true,
        }
    }
}

/// Mean and population std of the pixelwise mean of equally sized maps.
pub fn mean_map_stats(maps: &[&DepthMap]) -> Result<(f64, f64)> {
    let first = maps.first().ok_or_else(|| invalid("no maps to average"))?;
    let mut acc = vec![0.0; first.len()];
    for m in maps {
        if !m.same_shape(first) {
            return Err(invalid("maps to average differ in shape"));
        }
        for (a, v) in acc.iter_mut().zip(m.data()) {
            *a += v;
        }
    }
    let n = maps.len() as f64;
    let mean = DepthMap::from_f64(first.height(), first.width(), acc.into_iter().map(|a| a / n).collect())?;
    Ok((mean.mean(), mean.std()))
}

/// Computes every report entry the inputs allow.
pub fn evaluate(items: &[EvalItem], opts: &EvalOptions) -> Result<(MetricsReport, EvalSummary)> {
    let mut report = MetricsReport::default();
    let mut summary = EvalSummary::default();
    let mut pairs = Vec::new();
    for it in items {
        pairs.extend(score_pairs(&it.scores, &it.queries)?);
    }
    if !pairs.is_empty() {
        let tau = match opts.tau {
            TauChoice::Fixed(t) => t,
            TauChoice::Calibrate => calibrate_tau(&pairs).map(|c| c.tau).unwrap_or(0.0),
        };
        let w = wkdr_at(&pairs, tau)?;
        report.wkdr = Some(w.wkdr);
        report.wkdr_eq = w.wkdr_eq;
        report.wkdr_neq = w.wkdr_neq;
        report.tau = Some(tau);
        let ordered: Vec<ScoredPair> = pairs.iter().copied().filter(|p| p.r.is_ordered()).collect();
        if !ordered.is_empty() {
            report.whdr = Some(whdr(&ordered)?);
        }
    }
    let gts: Vec<&DepthMap> = items.iter().filter_map(|it| it.gt.as_ref()).collect();
    if !gts.is_empty() {
        let (mean, std) = match opts.target {
            Some(t) => t,
            None => mean_map_stats(&gts)?,
        };
        let mut sums = ErrorSums::default();
        for it in items {
            if let Some(gt) = &it.gt {
                let pred = normalize_depth(&it.scores, mean, std, opts.negate)?;
                sums.add(&pred, gt)?;
            }
        }
        let e = sums.finish()?;
        summary.clamped = e.clamped;
        report.rmse = Some(e.rmse);
        report.rmse_log = Some(e.rmse_log);
        report.rmse_sinv = Some(e.rmse_sinv);
        report.absrel = Some(e.absrel);
        report.sqrrel = Some(e.sqrrel);
    }
    summary.n_pairs = pairs.len();
    summary.n_images = items.len();
    Ok((report, summary))
}

/// Counts that accompany a report without being part of it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_images: usize,
    pub n_pairs: usize,
    pub clamped: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Relation::{Closer as C, Equal as E, Farther as F};

    fn sp(r: Relation, d: f64) -> ScoredPair {
        ScoredPair { r, z_i: d, z_j: 0.0 }
    }

    #[test]
    fn predict_relation_examples() {
        assert_eq!(predict_relation(0.4, 0.4, 0.1), E);
        assert_eq!(predict_relation(3.0, 1.0, 1.0), C);
        assert_eq!(predict_relation(1.0, 2.0, 1.0), F);
        assert_eq!(predict_relation(1.0, 1.5, 1.0), E);
    }

    #[test]
    fn wkdr_examples() {
        let w = wkdr(&[C, F, E, C], &[C, C, E, E]).unwrap();
        assert_eq!(w.wkdr, 0.5);
        assert_eq!(w.wkdr_eq, Some(0.0));
        assert!((w.wkdr_neq.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let perfect = wkdr(&[C, E], &[C, E]).unwrap();
        assert_eq!((perfect.wkdr, perfect.wkdr_eq, perfect.wkdr_neq), (0.0, Some(0.0), Some(0.0)));
        let flipped = wkdr(&[C, F, C], &[F, C, F]).unwrap();
        assert_eq!(flipped.wkdr_neq, Some(1.0));
        assert_eq!(flipped.wkdr_eq, None);
        assert!(wkdr(&[], &[]).is_err());
        assert!(wkdr(&[C], &[]).is_err());
    }

    #[test]
    fn calibration_handcrafted() {
        // |Δ| = 0.1 (E), 0.2 (E), 0.3 (C), 0.5 (E), 0.8 (F wrong sign), 1.0 (C).
        let pairs = [sp(E, 0.1), sp(E, -0.2), sp(C, 0.3), sp(E, 0.5), sp(F, 0.8), sp(C, 1.0)];
        // Sweep by hand: τ = 0.25 → eq wrong 1/3, neq wrong 1/3, all 2/6.
        let c = calibrate_tau(&pairs).unwrap();
        assert_eq!(c.tau, 0.25);
        assert!((c.worst() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(wkdr_at(&pairs, 0.0).unwrap().wkdr_eq, Some(1.0));
        assert_eq!(wkdr_at(&pairs, 1e9).unwrap().wkdr_neq, Some(1.0));
        assert!(calibrate_tau(&pairs[2..3]).is_err());
        assert!(calibrate_tau(&pairs[..2]).is_err());
    }

    #[test]
    fn whdr_examples() {
        assert_eq!(whdr(&[sp(C, 1.0), sp(F, -2.0)]).unwrap(), 0.0);
        assert_eq!(whdr(&[sp(C, -1.0), sp(F, -2.0)]).unwrap(), 0.5);
        assert_eq!(whdr(&[sp(C, 0.0)]).unwrap(), 1.0);
        assert!(whdr(&[sp(E, 1.0)]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs: Vec<ScoredPair> = (0..10_000)
            .map(|k| sp(if k % 2 == 0 { C } else { F }, rng.random_range(-1.0..1.0)))
            .collect();
        assert!((whdr(&pairs).unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn normalize_examples() {
        let pred = DepthMap::from_f64(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let out = normalize_depth(&pred, 10.0, 2.0, false).unwrap();
        let expect = [10.0 - 2.0 * 1.5f64.sqrt(), 10.0, 10.0 + 2.0 * 1.5f64.sqrt()];
        for (a, b) in out.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((out.data()[0] - 7.5505).abs() < 1e-4);
        let neg = normalize_depth(&pred, 10.0, 2.0, true).unwrap();
        assert!((neg.data()[0] - expect[2]).abs() < 1e-12);
        let fixed = normalize_depth(&out, 10.0, 2.0, false).unwrap();
        for (a, b) in fixed.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(normalize_depth(&DepthMap::constant(2, 2, 3.0).unwrap(), 1.0, 1.0, false).is_err());
        assert!(normalize_depth(&pred, 1.0, 0.0, false).is_err());
    }

    #[test]
    fn metric_error_examples() {
        let gt = DepthMap::from_f64(2, 2, vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        let e = metric_errors(&gt, &gt).unwrap();
        assert_eq!((e.rmse, e.rmse_log, e.rmse_sinv, e.absrel, e.sqrrel), (0.0, 0.0, 0.0, 0.0, 0.0));
        let scaled = gt.map(|v| 3.0 * v).unwrap();
        let e = metric_errors(&scaled, &gt).unwrap();
        assert!(e.rmse_sinv < 1e-7);
        assert!((e.rmse_log - 3f64.ln()).abs() < 1e-12);
        let neg = DepthMap::from_f64(2, 2, vec![-1.0, 2.0, 0.0, 8.0]).unwrap();
        assert_eq!(metric_errors(&neg, &gt).unwrap().clamped, 2);
        assert!(metric_errors(&gt, &neg).is_err());
        assert!(metric_errors(&gt, &DepthMap::constant(1, 4, 1.0).unwrap()).is_err());
    }

    #[test]
    fn location_rules() {
        let (a, b) = (Pixel::new(7, 2), Pixel::new(3, 2));
        assert_eq!(LocationRule::LowerPoint.decide(a, b, 10, 10), Some(C));
        assert_eq!(LocationRule::LowerPoint.decide(b, a, 10, 10), Some(F));
        let (l, r) = (Pixel::new(4, 1), Pixel::new(4, 8));
        assert_eq!(LocationRule::LowerPoint.decide(l, r, 10, 10), None);
        assert_eq!(LocationRule::LeftPoint.decide(l, r, 10, 10), Some(C));
        assert_eq!(LocationRule::CenterProximity.decide(l, r, 10, 10), None);
        assert_eq!(
            LocationRule::CenterProximity.decide(Pixel::new(4, 4), Pixel::new(0, 0), 10, 10),
            Some(C)
        );
        let flip = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            baseline_relation(l, r, LocationRule::LocationOnly, 10, 10, &mut rng)
        };
        assert_eq!(flip(3), flip(3));
        let closer = (0..2000).filter(|s| flip(*s) == C).count();
        assert!((900..1100).contains(&closer), "{closer}");
    }

    #[test]
    fn report_text_and_json() {
        let report = MetricsReport {
            wkdr: Some(0.25),
            tau: Some(0.0),
            ..Default::default()
        };
        let text = report.to_text();
        assert!(text.starts_with("wkdr=0.25\nwkdr_eq=NA\n"));
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        assert_eq!(keys, REPORT_KEYS);
        let back = MetricsReport::from_json(&report.to_json()).unwrap();
        assert_eq!(back, report);
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        let mut json_keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        json_keys.sort();
        let mut expect = REPORT_KEYS.to_vec();
        expect.sort();
        assert_eq!(json_keys, expect);
    }

    fn scored_strategy() -> impl Strategy<Value = Vec<ScoredPair>> {
        prop::collection::vec((0usize..3, -3i32..=3), 2..14).prop_map(|v| {
            v.into_iter()
                .map(|(r, d)| sp([C, F, E][r], d as f64 * 0.25))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn wkdr_monotone_in_tau(pairs in scored_strategy()) {
            let mut prev: Option<Wkdr> = None;
            for k in 0..40 {
                let w = wkdr_at(&pairs, k as f64 * 0.05).unwrap();
                if let Some(p) = prev {
                    if let (Some(a), Some(b)) = (p.wkdr_eq, w.wkdr_eq) { prop_assert!(b <= a); }
                    if let (Some(a), Some(b)) = (p.wkdr_neq, w.wkdr_neq) { prop_assert!(b >= a); }
                }
                prev = Some(w);
            }
        }

        #[test]
        fn decisions_invariant_under_shift_and_scale(
            zi in -5.0f64..5.0, zj in -5.0f64..5.0, c in -10.0f64..10.0,
            lambda in 0.1f64..10.0, tau in 0.0f64..3.0,
        ) {
            prop_assume!(((zi - zj).abs() - tau).abs() > 1e-9);
            let base = predict_relation(zi, zj, tau);
            prop_assert_eq!(predict_relation(zi + c, zj + c, tau), base);
            prop_assert_eq!(predict_relation(lambda * zi, lambda * zj, lambda * tau), base);
        }

        #[test]
        fn whdr_complements_agreement(pairs in scored_strategy()) {
            let ordered: Vec<ScoredPair> = pairs.into_iter().filter(|p| p.r.is_ordered()).collect();
            prop_assume!(!ordered.is_empty());
            let agree = ordered
                .iter()
                .filter(|p| p.delta() != 0.0 && (p.delta() > 0.0) == (p.r == C))
                .count() as f64 / ordered.len() as f64;
            prop_assert_eq!(whdr(&ordered).unwrap() + agree, 1.0);
        }

        #[test]
        fn scale_invariant_rmse_ignores_global_scale(
            vals in prop::collection::vec((0.5f64..10.0, 0.5f64..10.0), 1..30),
            c in 0.01f64..100.0,
        ) {
            let n = vals.len();
            let pred = DepthMap::from_f64(1, n, vals.iter().map(|v| v.0).collect()).unwrap();
            let gt = DepthMap::from_f64(1, n, vals.iter().map(|v| v.1).collect()).unwrap();
            let a = metric_errors(&pred, &gt).unwrap().rmse_sinv;
            let b = metric_errors(&pred.map(|v| c * v).unwrap(), &gt).unwrap().rmse_sinv;
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }
}
