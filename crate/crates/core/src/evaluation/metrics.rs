use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::digamma;

use crate::datagen::FlowSequence;
use crate::error::{Error, Result};

/// Pointwise absolute error and per-frame relative L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub n_steps: usize,
    pub ny: usize,
    pub nx: usize,
    /// `[T, ny, nx]` of `|pred - truth|`.
    pub abs: Vec<f64>,
    /// `||pred - truth|| / ||truth||` per frame; falls back to the absolute
    /// norm for an all-zero truth frame.
    pub rel_l2: Vec<f64>,
}

impl ErrorMap {
    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.ny * self.nx;
        &self.abs[t * n..(t + 1) * n]
    }

    pub fn mean_rel_l2(&self) -> f64 {
        self.rel_l2.iter().sum::<f64>() / self.rel_l2.len().max(1) as f64
    }
}

fn check_pair(pred: &FlowSequence, truth: &FlowSequence) -> Result<()> {
    if !pred.same_shape(truth) {
        return Err(Error::ShapeMismatch(format!(
            "prediction [{}, {}, {}] vs truth [{}, {}, {}]",
            pred.n_steps(),
            pred.ny,
            pred.nx,
            truth.n_steps(),
            truth.ny,
            truth.nx
        )));
    }
    if pred.units != truth.units {
        return Err(Error::InvalidParams(format!(
            "prediction in {:?} units but truth in {:?} units",
            pred.units, truth.units
        )));
    }
    Ok(())
}

pub fn spatial_l2_error(pred: &FlowSequence, truth: &FlowSequence) -> Result<ErrorMap> {
    check_pair(pred, truth)?;
    let n = pred.frame_len();
    let abs: Vec<f64> = pred
        .frames
        .iter()
        .zip(&truth.frames)
        .map(|(&p, &t)| (p as f64 - t as f64).abs())
        .collect();
    let rel_l2 = (0..pred.n_steps())
        .map(|t| {
            let err: f64 = abs[t * n..(t + 1) * n].iter().map(|e| e * e).sum::<f64>().sqrt();
            let norm: f64 = truth.frame(t).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                err / norm
            } else {
                err
            }
        })
        .collect();
    Ok(ErrorMap {
        n_steps: pred.n_steps(),
        ny: pred.ny,
        nx: pred.nx,
        abs,
        rel_l2,
    })
}

/// Time series comparison at one grid node (`i` column, `j` row).
#[derive(Debug, Clone, PartialEq)]
pub struct PointTrajectory {
    pub i: usize,
    pub j: usize,
    pub pred: Vec<f64>,
    pub truth: Vec<f64>,
    pub mse: f64,
    /// `NaN` when `undefined` is set.
    pub pearson_r: f64,
    /// Either series is constant, so the correlation is undefined.
    pub undefined: bool,
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (dx, dy) = (x[k] - mx, y[k] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1 with ties given their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn point_metrics(
    pred: &FlowSequence,
    truth: &FlowSequence,
    points: &[(usize, usize)],
) -> Result<Vec<PointTrajectory>> {
    check_pair(pred, truth)?;
    points
        .iter()
        .map(|&(i, j)| {
            if i >= pred.nx || j >= pred.ny {
                return Err(Error::IndexOutOfBounds(format!(
                    "probe ({i}, {j}) outside the {}x{} grid (column < {}, row < {})",
                    pred.ny, pred.nx, pred.nx, pred.ny
                )));
            }
            let p: Vec<f64> = pred.series(j, i).iter().map(|&v| v as f64).collect();
            let t: Vec<f64> = truth.series(j, i).iter().map(|&v| v as f64).collect();
            let mse = p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len().max(1) as f64;
            let r = pearson(&p, &t);
            Ok(PointTrajectory {
                i,
                j,
                pred: p,
                truth: t,
                mse,
                pearson_r: r.unwrap_or(f64::NAN),
                undefined: r.is_none(),
            })
        })
        .collect()
}

/// Minimum series length accepted by [`mutual_information`].
pub const MI_MIN_LEN: usize = 20;
const JITTER: f64 = 1e-10;
const JITTER_SEED: u64 = 0x4b_53_47;

/// Unit-variance scaling followed by a tiny seeded Gaussian jitter that
/// breaks ties between equal values.
fn prepare(x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scaled: Vec<f64> = x.iter().map(|v| if sd > 0.0 { v / sd } else { *v }).collect();
    let amp = JITTER * (scaled.iter().map(|v| v.abs()).sum::<f64>() / n).max(1.0);
    scaled
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v + amp * z
        })
        .collect()
}

/// Number of entries of the sorted slice strictly within `eps` of `v`.
fn count_within(sorted: &[f64], v: f64, eps: f64) -> usize {
    // compare differences, not shifted bounds, so the neighbour at exactly
    // `eps` is excluded regardless of rounding
    let lo = sorted.partition_point(|&s| v - s >= eps);
    let hi = sorted.partition_point(|&s| s - v < eps);
    hi - lo
}

/// Kraskov-Stögbauer-Grassberger estimate (first variant, Chebyshev
/// metric) of the mutual information in nats, clamped at zero.
pub fn mutual_information(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("series lengths {} and {}", n, y.len())));
    }
    if n < MI_MIN_LEN {
        return Err(Error::SeriesTooShort { len: n, min: MI_MIN_LEN });
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidParams(format!("k = {k} must lie in [1, {})", n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    let xs = prepare(x, &mut rng);
    let ys = prepare(y, &mut rng);

    // k-th neighbour distance in the joint space; points sorted by x let the
    // scan stop once the x gap alone exceeds the current k-th distance.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let sx: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let sy: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let mut ys_sorted = ys.clone();
    ys_sorted.sort_by(f64::total_cmp);

    let mut acc = 0.0;
    let mut best = Vec::with_capacity(k + 1);
    for p in 0..n {
        best.clear();
        let push = |best: &mut Vec<f64>, d: f64| {
            let pos = best.partition_point(|&b| b <= d);
            if pos < k {
                best.insert(pos, d);
                best.truncate(k);
            }
        };
        let kth = |best: &Vec<f64>| if best.len() == k { best[k - 1] } else { f64::INFINITY };
        let mut lo = p;
        let mut hi = p + 1;
        loop {
            let left = if lo > 0 { sx[p] - sx[lo - 1] } else { f64::INFINITY };
            let right = if hi < n { sx[hi] - sx[p] } else { f64::INFINITY };
            let (gap, q) = if left <= right {
                (left, lo.wrapping_sub(1))
            } else {
                (right, hi)
            };
            if gap >= kth(&best) || gap.is_infinite() {
                break;
            }
            let d = gap.max((sy[q] - sy[p]).abs());
            push(&mut best, d);
            if left <= right {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        let eps = kth(&best);
        // strict counts exclude the point itself
        let nx = count_within(&sx, sx[p], eps) - 1;
        let ny = count_within(&ys_sorted, sy[p], eps) - 1;
        acc += digamma((nx + 1) as f64) + digamma((ny + 1) as f64);
    }
    let mi = digamma(k as f64) + digamma(n as f64) - acc / n as f64;
    Ok(mi.max(0.0))
}
