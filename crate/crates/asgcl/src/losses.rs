//! The three-part training objective.
//!
//! Per batch the total is the sum of a symmetric InfoNCE term over both
//! views, a lower-bound hinge that keeps each positive pair closer than the
//! anchor's negative by a margin, and an upper-bound hinge that caps how far
//! the negative may drift beyond the positive. InfoNCE works on cosine
//! similarities (scale-invariant); both hinges work on raw Euclidean
//! distances, whose margins are calibrated for unnormalized embeddings.
//!
//! Every operation returns exact values and, through [`total_loss`], exact
//! gradients with hinge subgradient 0 at the kink.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Row norms below this behave as zero vectors: their cosine similarity is 0
/// and no gradient flows into them.
const NORM_GUARD: f64 = 1e-12;

/// Margins, temperature and anchor-set size for one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    alpha: f64,
    beta: f64,
    tau: f64,
    batch: usize,
}

impl LossConfig {
    pub fn new(alpha: f64, beta: f64, tau: f64, batch: usize) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("lower margin must be positive, got {alpha}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("upper margin must be positive, got {beta}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        if batch == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(LossConfig { alpha, beta, tau, batch })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// One evaluation of the objective, split by component. `total` is always
/// `infonce + lower + upper` in that summation order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub infonce: f64,
    pub lower: f64,
    pub upper: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(infonce: f64, lower: f64, upper: f64) -> Self {
        LossBreakdown { infonce, lower, upper, total: infonce + lower + upper }
    }
}

/// `u . v / (|u| |v|)`, defined as 0 when either norm falls below 1e-12,
/// clamped into `[-1, 1]`.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu < NORM_GUARD || nv < NORM_GUARD {
        return 0.0;
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Anchor rows of an embedding matrix, unit-normalized, plus the original
/// norms (0-norm rows stay zero and their stored norm is 0).
struct AnchorRows {
    unit: DMatrix<f64>,
    norms: Vec<f64>,
}

fn anchor_rows(h: &DMatrix<f64>, anchors: &[usize]) -> AnchorRows {
    let m = anchors.len();
    let d = h.ncols();
    let mut unit = DMatrix::zeros(m, d);
    let mut norms = vec![0.0; m];
    for (x, &a) in anchors.iter().enumerate() {
        let norm = h.row(a).norm();
        if norm >= NORM_GUARD {
            norms[x] = norm;
            for c in 0..d {
                unit[(x, c)] = h[(a, c)] / norm;
            }
        }
    }
    AnchorRows { unit, norms }
}

/// Maps a gradient on the unit rows back through the normalization:
/// `du = (dn - (dn . n) n) / |u|`, zero for guarded rows.
fn unnormalize_grad(rows: &AnchorRows, dunit: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, d) = dunit.shape();
    let mut draw = DMatrix::zeros(m, d);
    for x in 0..m {
        if rows.norms[x] == 0.0 {
            continue;
        }
        let proj: f64 = (0..d).map(|c| dunit[(x, c)] * rows.unit[(x, c)]).sum();
        for c in 0..d {
            draw[(x, c)] = (dunit[(x, c)] - proj * rows.unit[(x, c)]) / rows.norms[x];
        }
    }
    draw
}

/// Stable `log(sum(exp(terms)))`.
fn logsumexp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

struct InfonceEval {
    loss: f64,
    dunit1: Option<DMatrix<f64>>,
    dunit2: Option<DMatrix<f64>>,
}

/// Shared forward (and optional reverse) pass for the contrastive term.
///
/// Per anchor and direction the denominator holds the positive pair plus
/// both cross-view and intra-view negatives over the rest of the batch; the
/// two directions are averaged with weight `1 / (2 m)`.
fn infonce_eval(
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    anchors: &[usize],
    tau: f64,
    want_grad: bool,
) -> Result<InfonceEval> {
    validate_pair(h1, h2, anchors)?;
    let m = anchors.len();
    let rows1 = anchor_rows(h1, anchors);
    let rows2 = anchor_rows(h2, anchors);
    let cross = &rows1.unit * rows2.unit.transpose();
    let intra1 = &rows1.unit * rows1.unit.transpose();
    let intra2 = &rows2.unit * rows2.unit.transpose();

    let scale = 1.0 / (2.0 * m as f64);
    let mut loss = 0.0;
    let mut dcross = DMatrix::zeros(m, m);
    let mut dintra1 = DMatrix::zeros(m, m);
    let mut dintra2 = DMatrix::zeros(m, m);

    // Direction 1 anchors view 1 (negatives cross[x][y] and intra1[x][y]);
    // direction 2 anchors view 2 (negatives cross[y][x] and intra2[x][y]).
    for x in 0..m {
        for dir in 0..2 {
            let pos = cross[(x, x)] / tau;
            let mut terms = Vec::with_capacity(2 * m - 1);
            terms.push(pos);
            for y in 0..m {
                if y != x {
                    let c = if dir == 0 { cross[(x, y)] } else { cross[(y, x)] };
                    terms.push(c / tau);
                }
            }
            for y in 0..m {
                if y != x {
                    let i = if dir == 0 { intra1[(x, y)] } else { intra2[(x, y)] };
                    terms.push(i / tau);
                }
            }
            let lse = logsumexp(&terms);
            loss += scale * (lse - pos);

            if want_grad {
                // Softmax weights of the denominator terms, in `terms` order.
                let weights: Vec<f64> = terms.iter().map(|t| (t - lse).exp()).collect();
                let coeff = scale / tau;
                dcross[(x, x)] += coeff * (weights[0] - 1.0);
                let mut idx = 1;
                for y in 0..m {
                    if y != x {
                        if dir == 0 {
                            dcross[(x, y)] += coeff * weights[idx];
                        } else {
                            dcross[(y, x)] += coeff * weights[idx];
                        }
                        idx += 1;
                    }
                }
                for y in 0..m {
                    if y != x {
                        if dir == 0 {
                            dintra1[(x, y)] += coeff * weights[idx];
                        } else {
                            dintra2[(x, y)] += coeff * weights[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }

    if !want_grad {
        return Ok(InfonceEval { loss, dunit1: None, dunit2: None });
    }
    let mut dunit1 = &dcross * &rows2.unit;
    let mut dunit2 = dcross.transpose() * &rows1.unit;
    dunit1 += (&dintra1 + dintra1.transpose()) * &rows1.unit;
    dunit2 += (&dintra2 + dintra2.transpose()) * &rows2.unit;
    Ok(InfonceEval {
        loss,
        dunit1: Some(unnormalize_grad(&rows1, &dunit1)),
        dunit2: Some(unnormalize_grad(&rows2, &dunit2)),
    })
}

fn validate_pair(h1: &DMatrix<f64>, h2: &DMatrix<f64>, anchors: &[usize]) -> Result<()> {
    if h1.shape() != h2.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", h1.nrows(), h1.ncols()),
            got: format!("{}x{}", h2.nrows(), h2.ncols()),
        });
    }
    if anchors.is_empty() {
        return Err(Error::EmptyAnchors);
    }
    for &a in anchors {
        if a >= h1.nrows() {
            return Err(Error::IndexOutOfRange { index: a, n: h1.nrows() });
        }
    }
    let mut sorted = anchors.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("anchor set contains duplicates".into()));
    }
    Ok(())
}

/// Symmetric batch-restricted contrastive loss over the two views.
pub fn infonce(h1: &DMatrix<f64>, h2: &DMatrix<f64>, anchors: &[usize], tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    Ok(infonce_eval(h1, h2, anchors, tau, false)?.loss)
}

/// One uniformly drawn in-batch negative per anchor, returned as node
/// indices parallel to `anchors` (`negatives[x]` is the node whose view-2
/// row serves as the negative for `anchors[x]`). Redrawn every call.
pub fn sample_negatives<R: Rng>(anchors: &[usize], rng: &mut R) -> Result<Vec<usize>> {
    let m = anchors.len();
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 anchors to draw negatives, got {m}")));
    }
    let mut negatives = Vec::with_capacity(m);
    for x in 0..m {
        let r = rng.gen_range(0..m - 1);
        let idx = if r >= x { r + 1 } else { r };
        negatives.push(anchors[idx]);
    }
    Ok(negatives)
}

fn validate_triplet(
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    negatives: &[usize],
    anchors: &[usize],
) -> Result<()> {
    validate_pair(h1, h2, anchors)?;
    if negatives.len() != anchors.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} negatives", anchors.len()),
            got: format!("{}", negatives.len()),
        });
    }
    for &b in negatives {
        if b >= h1.nrows() {
            return Err(Error::IndexOutOfRange { index: b, n: h1.nrows() });
        }
    }
    Ok(())
}

fn pair_distance(h1: &DMatrix<f64>, a: usize, h2: &DMatrix<f64>, b: usize) -> f64 {
    (h1.row(a) - h2.row(b)).norm()
}

/// `sum_a max(0, |H1_a - H2_a| - |H1_a - H2_neg(a)| + alpha)` over raw
/// embeddings: each positive pair must sit at least `alpha` closer than the
/// anchor's negative.
pub fn lower_loss(
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    negatives: &[usize],
    anchors: &[usize],
    alpha: f64,
) -> Result<f64> {
    validate_triplet(h1, h2, negatives, anchors)?;
    let mut sum = 0.0;
    for (x, &a) in anchors.iter().enumerate() {
        let d_pos = pair_distance(h1, a, h2, a);
        let d_neg = pair_distance(h1, a, h2, negatives[x]);
        sum += (d_pos - d_neg + alpha).max(0.0);
    }
    Ok(sum)
}

/// `sum_a max(0, |H1_a - H2_neg(a)| - |H1_a - H2_a| - beta)`: negatives may
/// not drift more than `beta` beyond the positive distance.
pub fn upper_loss(
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    negatives: &[usize],
    anchors: &[usize],
    beta: f64,
) -> Result<f64> {
    validate_triplet(h1, h2, negatives, anchors)?;
    let mut sum = 0.0;
    for (x, &a) in anchors.iter().enumerate() {
        let d_pos = pair_distance(h1, a, h2, a);
        let d_neg = pair_distance(h1, a, h2, negatives[x]);
        sum += (d_neg - d_pos - beta).max(0.0);
    }
    Ok(sum)
}

/// Adds `coeff * d(|H1_a - H2_b|)` into both gradient matrices. The norm's
/// subgradient at coincident rows is taken as 0.
fn add_distance_grad(
    h1: &DMatrix<f64>,
    a: usize,
    h2: &DMatrix<f64>,
    b: usize,
    coeff: f64,
    dh1: &mut DMatrix<f64>,
    dh2: &mut DMatrix<f64>,
) {
    let diff = h1.row(a) - h2.row(b);
    let dist = diff.norm();
    if dist == 0.0 {
        return;
    }
    for c in 0..h1.ncols() {
        let g = coeff * diff[c] / dist;
        dh1[(a, c)] += g;
        dh2[(b, c)] -= g;
    }
}

/// Full objective with exact gradients with respect to both embedding
/// matrices. Negatives are redrawn from `rng`; a single-anchor batch skips
/// both hinge terms (logged once per call) since no negative exists.
pub fn total_loss<R: Rng>(
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    anchors: &[usize],
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<(LossBreakdown, DMatrix<f64>, DMatrix<f64>)> {
    total_loss_selective(h1, h2, anchors, cfg, true, true, rng)
}

/// [`total_loss`] with per-hinge switches for the ablation variants: a
/// disabled term contributes exactly 0 to both the value and the gradients.
/// Negatives are only drawn when at least one hinge is active.
pub fn total_loss_selective<R: Rng>(
    h1: &DMatrix<f64>,
    h2: &DMatrix<f64>,
    anchors: &[usize],
    cfg: &LossConfig,
    use_lower: bool,
    use_upper: bool,
    rng: &mut R,
) -> Result<(LossBreakdown, DMatrix<f64>, DMatrix<f64>)> {
    let eval = infonce_eval(h1, h2, anchors, cfg.tau, true)?;
    let (n, d) = h1.shape();
    let mut dh1 = DMatrix::zeros(n, d);
    let mut dh2 = DMatrix::zeros(n, d);
    let dunit1 = eval.dunit1.expect("gradient requested");
    let dunit2 = eval.dunit2.expect("gradient requested");
    for (x, &a) in anchors.iter().enumerate() {
        for c in 0..d {
            dh1[(a, c)] += dunit1[(x, c)];
            dh2[(a, c)] += dunit2[(x, c)];
        }
    }

    let mut lower = 0.0;
    let mut upper = 0.0;
    if use_lower || use_upper {
        if anchors.len() < 2 {
            log::info!("single-anchor batch: both distance-bound terms skipped");
        } else {
            let negatives = sample_negatives(anchors, rng)?;
            for (x, &a) in anchors.iter().enumerate() {
                let b = negatives[x];
                let d_pos = pair_distance(h1, a, h2, a);
                let d_neg = pair_distance(h1, a, h2, b);
                // Subgradient 0 exactly at each hinge kink.
                if use_lower && d_pos - d_neg + cfg.alpha > 0.0 {
                    lower += d_pos - d_neg + cfg.alpha;
                    add_distance_grad(h1, a, h2, a, 1.0, &mut dh1, &mut dh2);
                    add_distance_grad(h1, a, h2, b, -1.0, &mut dh1, &mut dh2);
                }
                if use_upper && d_neg - d_pos - cfg.beta > 0.0 {
                    upper += d_neg - d_pos - cfg.beta;
                    add_distance_grad(h1, a, h2, b, 1.0, &mut dh1, &mut dh2);
                    add_distance_grad(h1, a, h2, a, -1.0, &mut dh1, &mut dh2);
                }
            }
        }
    }

    Ok((LossBreakdown::new(eval.loss, lower, upper), dh1, dh2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_sim_canonical_values() {
        assert_abs_diff_eq!(cosine_sim(&[3.0, 4.0], &[3.0, 4.0]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 2.0]), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cosine_sim(&[1.0, 0.0], &[-2.0, 0.0]), -1.0, epsilon = 1e-15);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert_eq!(cosine_sim(&[1e-13, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn infonce_single_anchor_is_zero() {
        let h1 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 0.5, -1.0, 2.0]);
        let h2 = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.5, -0.5, 1.0, 2.0]);
        assert_eq!(infonce(&h1, &h2, &[1], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn infonce_orthonormal_two_anchor_value() {
        // Identical views with orthonormal rows: positive similarity 1,
        // every negative similarity 0, so each of the four per-anchor terms
        // is -log(e / (e + 2)) = ln(1 + 2/e).
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let want = (1.0 + 2.0 / 1.0f64.exp()).ln(); // 0.5514447139320511
        let got = infonce(&h, &h.clone(), &[0, 1], 1.0).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 0.5514447139320511, epsilon = 1e-12);
    }

    #[test]
    fn infonce_rejects_bad_anchors() {
        let h = DMatrix::zeros(3, 2);
        assert!(matches!(infonce(&h, &h.clone(), &[], 1.0), Err(Error::EmptyAnchors)));
        assert!(infonce(&h, &h.clone(), &[0, 3], 1.0).is_err());
        assert!(infonce(&h, &h.clone(), &[0, 0], 1.0).is_err());
        assert!(infonce(&h, &h.clone(), &[0, 1], 0.0).is_err());
    }

    #[test]
    fn sample_negatives_two_anchors_are_forced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let negatives = sample_negatives(&[3, 7], &mut rng).unwrap();
        assert_eq!(negatives, vec![7, 3]);
        assert!(sample_negatives(&[3], &mut rng).is_err());
    }

    #[test]
    fn sample_negatives_is_seed_deterministic() {
        let anchors = [2usize, 4, 6, 8, 10];
        let a = sample_negatives(&anchors, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_negatives(&anchors, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        for (x, &neg) in a.iter().enumerate() {
            assert_ne!(neg, anchors[x]);
            assert!(anchors.contains(&neg));
        }
    }

    #[test]
    fn lower_loss_canonical_values() {
        // Rows: anchor 0 at origin, its positive at distance 2, node 1's
        // view-2 row at distance 3 from it.
        let h1 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 9.0, 9.0]);
        let h2 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 3.0, 0.0]);
        let got = lower_loss(&h1, &h2, &[1], &[0], 5.0).unwrap();
        assert_abs_diff_eq!(got, 4.0, epsilon = 1e-12); // 2 - 3 + 5

        // Coincident anchor, positive and negative: the margin survives.
        let z1 = DMatrix::zeros(2, 2);
        let z2 = DMatrix::zeros(2, 2);
        assert_abs_diff_eq!(
            lower_loss(&z1, &z2, &[1], &[0], 5.0).unwrap(),
            5.0,
            epsilon = 1e-15
        );

        // Far negative keeps the hinge inactive.
        let h2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 10.0, 0.0]);
        assert_eq!(lower_loss(&h1, &h2, &[1], &[0], 5.0).unwrap(), 0.0);
    }

    #[test]
    fn upper_loss_canonical_values() {
        let h1 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 9.0, 9.0]);
        let h2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 20.0, 0.0]);
        let got = upper_loss(&h1, &h2, &[1], &[0], 10.0).unwrap();
        assert_abs_diff_eq!(got, 9.0, epsilon = 1e-12); // 20 - 1 - 10

        let h2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 5.0, 0.0]);
        assert_eq!(upper_loss(&h1, &h2, &[1], &[0], 10.0).unwrap(), 0.0);
    }

    #[test]
    fn breakdown_sums_in_order() {
        let b = LossBreakdown::new(0.5514, 4.0, 9.0);
        assert_eq!(b.total, 0.5514 + 4.0 + 9.0);
        assert_abs_diff_eq!(b.total, 13.5514, epsilon = 1e-12);
    }

    #[test]
    fn total_loss_single_anchor_is_exactly_zero() {
        let h1 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let h2 = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 2.0, -0.5]);
        let cfg = LossConfig::new(5.0, 9.0, 1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (breakdown, dh1, dh2) = total_loss(&h1, &h2, &[0], &cfg, &mut rng).unwrap();
        assert_eq!(breakdown.infonce, 0.0);
        assert_eq!(breakdown.lower, 0.0);
        assert_eq!(breakdown.upper, 0.0);
        assert_eq!(breakdown.total, 0.0);
        assert_eq!(dh1, DMatrix::zeros(2, 2));
        assert_eq!(dh2, DMatrix::zeros(2, 2));
    }

    #[test]
    fn total_loss_components_match_standalone_calls() {
        let mut data_rng = ChaCha8Rng::seed_from_u64(11);
        let h1 = DMatrix::from_fn(6, 3, |_, _| 4.0 * data_rng.gen::<f64>() - 2.0);
        let h2 = DMatrix::from_fn(6, 3, |_, _| 4.0 * data_rng.gen::<f64>() - 2.0);
        let anchors = [0usize, 2, 3, 5];
        let cfg = LossConfig::new(1.5, 2.5, 0.7, anchors.len()).unwrap();

        let (breakdown, _, _) =
            total_loss(&h1, &h2, &anchors, &cfg, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let negatives =
            sample_negatives(&anchors, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let i = infonce(&h1, &h2, &anchors, cfg.tau()).unwrap();
        let l = lower_loss(&h1, &h2, &negatives, &anchors, cfg.alpha()).unwrap();
        let u = upper_loss(&h1, &h2, &negatives, &anchors, cfg.beta()).unwrap();
        assert_eq!(breakdown.infonce, i);
        assert_eq!(breakdown.lower, l);
        assert_eq!(breakdown.upper, u);
        assert_eq!(breakdown.total, i + l + u);
    }

    #[test]
    fn selective_switches_remove_components_exactly() {
        let mut data_rng = ChaCha8Rng::seed_from_u64(17);
        let h1 = DMatrix::from_fn(5, 3, |_, _| 2.0 * data_rng.gen::<f64>() - 1.0);
        let h2 = DMatrix::from_fn(5, 3, |_, _| 2.0 * data_rng.gen::<f64>() - 1.0);
        let anchors = [0usize, 1, 3];
        let cfg = LossConfig::new(2.0, 0.2, 1.0, anchors.len()).unwrap();
        let fresh = || ChaCha8Rng::seed_from_u64(77);

        let (full, _, _) = total_loss(&h1, &h2, &anchors, &cfg, &mut fresh()).unwrap();
        assert!(full.lower > 0.0 && full.upper > 0.0, "instance must activate both hinges");

        let (no_upper, _, _) =
            total_loss_selective(&h1, &h2, &anchors, &cfg, true, false, &mut fresh()).unwrap();
        assert_eq!(no_upper.infonce, full.infonce);
        assert_eq!(no_upper.lower, full.lower);
        assert_eq!(no_upper.upper, 0.0);

        let (no_lower, _, _) =
            total_loss_selective(&h1, &h2, &anchors, &cfg, false, true, &mut fresh()).unwrap();
        assert_eq!(no_lower.lower, 0.0);
        assert_eq!(no_lower.upper, full.upper);

        let (neither, g1, g2) =
            total_loss_selective(&h1, &h2, &anchors, &cfg, false, false, &mut fresh()).unwrap();
        assert_eq!(neither.total, full.infonce);
        // With both hinges off the gradient is the contrastive part alone:
        // non-anchor rows receive nothing.
        for c in 0..3 {
            assert_eq!(g1[(2, c)], 0.0);
            assert_eq!(g2[(4, c)], 0.0);
        }
        assert!(g1.amax() > 0.0);
    }

    #[test]
    fn config_rejects_invalid_fields() {
        assert!(LossConfig::new(0.0, 9.0, 1.0, 4).is_err());
        assert!(LossConfig::new(5.0, -1.0, 1.0, 4).is_err());
        assert!(LossConfig::new(5.0, 9.0, 0.0, 4).is_err());
        assert!(LossConfig::new(5.0, 9.0, 1.0, 0).is_err());
        assert!(LossConfig::new(5.0, 9.0, 1.0, 128).is_ok());
    }
}
