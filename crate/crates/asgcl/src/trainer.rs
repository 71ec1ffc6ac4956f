//! The end-to-end training loop.
//!
//! A run optimizes both flip-probability matrices once up front, then
//! iterates epochs of: sample the two augmented views, embed them through
//! the shared encoder stack, evaluate the three-part objective, push the
//! gradients back through the encoder and take one Adam step.
//!
//! Reproducibility contract: all randomness comes from four sub-streams of
//! one seeded generator (weight init, view-1 probabilities, view-2
//! probabilities, epoch loop), and the epoch stream draws in a fixed order:
//! view masks, anchors, then negatives inside the loss. Two runs with equal
//! configs produce bit-identical weights and logs.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{
    optimize_delta, sample_mask, uniform_projected, apply_mask, spectral_loss,
    DeltaOptimization, PerturbationPlan, TrajectoryPoint,
};
use crate::encoder::{backward_pair, forward_pair, EncoderWeights};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{total_loss_selective, LossBreakdown, LossConfig};

/// Adam first-moment decay, shared by the trainer and the linear probe.
pub const ADAM_BETA1: f64 = 0.9;
/// Adam second-moment decay.
pub const ADAM_BETA2: f64 = 0.999;
/// Adam denominator guard.
pub const ADAM_EPS: f64 = 1e-8;

/// Checkpoint files start with these bytes.
pub const CHECKPOINT_MAGIC: &[u8; 6] = b"ASGCL1";

fn default_epochs() -> usize {
    1000
}
fn default_batch() -> usize {
    128
}
fn default_lr() -> f64 {
    1e-3
}
fn default_weight_decay() -> f64 {
    5e-5
}
fn default_layers() -> usize {
    2
}
fn default_extra_diffusion() -> usize {
    2
}
fn default_hidden() -> usize {
    256
}
fn default_epsilon() -> f64 {
    0.2
}
fn default_rounds() -> usize {
    5
}
fn default_eta() -> f64 {
    0.5
}
fn default_noise_scale() -> f64 {
    1e-6
}
fn default_alpha() -> f64 {
    5.0
}
fn default_beta() -> f64 {
    9.0
}
fn default_tau() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

/// Every knob of one training run. Defaults reproduce the reference
/// protocol: 1000 epochs, batch 128, Adam at 0.001 with 5e-5 decay, a
/// 2-layer width-256 encoder with 2 extra diffusions on view 2, flip budget
/// 0.2 refined for 5 rounds, and margins 5 / 9 at temperature 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Shared transformation layers.
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Extra diffusion applications on view 2.
    #[serde(default = "default_extra_diffusion")]
    pub extra_diffusion: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Fraction of the n^2 adjacency entries the flip budget allows.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Per-view budgets; view 1 defaults to `epsilon / 2`, view 2 to
    /// `epsilon`.
    #[serde(default)]
    pub epsilon_1: Option<f64>,
    #[serde(default)]
    pub epsilon_2: Option<f64>,
    /// Projected-descent rounds for the flip probabilities.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Projected-descent step size.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Symmetric tie-break noise used when a gradient eigensolve hits a
    /// repeated spectrum; 0 disables the retry.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub seed: u64,
    /// Replace the optimized flip probabilities with the uniform projected
    /// constant at the same budgets.
    #[serde(default)]
    pub no_spectral: bool,
    /// Force both views through the identical composition (no extra
    /// diffusions).
    #[serde(default)]
    pub symmetric_encoder: bool,
    #[serde(default)]
    pub no_upper: bool,
    #[serde(default)]
    pub no_lower: bool,
    /// Redraw the Bernoulli view masks every epoch; off reuses the masks of
    /// epoch 1 for the whole run.
    #[serde(default = "default_true")]
    pub resample_each_epoch: bool,
    /// Omit self-loops from the diffusion operator.
    #[serde(default)]
    pub raw_diffusion: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            batch: default_batch(),
            lr: default_lr(),
            weight_decay: default_weight_decay(),
            layers: default_layers(),
            extra_diffusion: default_extra_diffusion(),
            hidden: default_hidden(),
            epsilon: default_epsilon(),
            epsilon_1: None,
            epsilon_2: None,
            rounds: default_rounds(),
            eta: default_eta(),
            noise_scale: default_noise_scale(),
            alpha: default_alpha(),
            beta: default_beta(),
            tau: default_tau(),
            seed: 0,
            no_spectral: false,
            symmetric_encoder: false,
            no_upper: false,
            no_lower: false,
            resample_each_epoch: true,
            raw_diffusion: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("perturbation rounds must be at least 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("tau", self.tau)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("lr", self.lr),
            ("eta", self.eta),
            ("weight_decay", self.weight_decay),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        let (e1, e2) = self.view_budgets();
        for v in [self.epsilon, e1, e2] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidBudget(v));
            }
        }
        Ok(())
    }

    /// Flip budgets for the two views: explicit overrides, else
    /// `(epsilon / 2, epsilon)`.
    pub fn view_budgets(&self) -> (f64, f64) {
        (self.epsilon_1.unwrap_or(self.epsilon / 2.0), self.epsilon_2.unwrap_or(self.epsilon))
    }

    /// Extra diffusion depth after ablation flags are applied.
    pub fn effective_extra_diffusion(&self) -> usize {
        if self.symmetric_encoder {
            0
        } else {
            self.extra_diffusion
        }
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        LossConfig::new(self.alpha, self.beta, self.tau, self.batch)
    }
}

/// Per-layer Adam moment accumulators plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(weights: &EncoderWeights) -> Self {
        let zeros: Vec<DMatrix<f64>> =
            weights.matrices().iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn from_parts(m: Vec<DMatrix<f64>>, v: Vec<DMatrix<f64>>, step: u64) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::ShapeMismatch {
                expected: "matching first/second moment shapes".into(),
                got: format!("{} vs {} matrices", m.len(), v.len()),
            });
        }
        Ok(AdamState { m, v, step })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[DMatrix<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[DMatrix<f64>] {
        &self.v
    }
}

/// One bias-corrected Adam update over every layer. Weight decay enters as
/// an additive `lambda * W` term folded into the gradient before the moment
/// update. Non-finite gradients abort with layer diagnostics.
pub fn adam_step(
    weights: &mut EncoderWeights,
    grads: &[DMatrix<f64>],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.len() != weights.layer_count() || state.m.len() != weights.layer_count() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} gradient matrices", weights.layer_count()),
            got: format!("{} (state {})", grads.len(), state.m.len()),
        });
    }
    for (l, g) in grads.iter().enumerate() {
        if g.shape() != weights.matrices()[l].shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?} at layer {l}", weights.matrices()[l].shape()),
                got: format!("{:?}", g.shape()),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient".into(),
                diagnostics: format!("layer {l} at optimizer step {}", state.step + 1),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let corr1 = 1.0 - ADAM_BETA1.powi(t);
    let corr2 = 1.0 - ADAM_BETA2.powi(t);
    for l in 0..grads.len() {
        let w = &mut weights.matrices_mut()[l];
        for c in 0..w.ncols() {
            for r in 0..w.nrows() {
                let g = grads[l][(r, c)] + weight_decay * w[(r, c)];
                let m = ADAM_BETA1 * state.m[l][(r, c)] + (1.0 - ADAM_BETA1) * g;
                let v = ADAM_BETA2 * state.v[l][(r, c)] + (1.0 - ADAM_BETA2) * g * g;
                state.m[l][(r, c)] = m;
                state.v[l][(r, c)] = v;
                let mhat = m / corr1;
                let vhat = v / corr2;
                w[(r, c)] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
    Ok(())
}

/// Everything a finished run produces: final weights, optimizer state, the
/// per-epoch loss log, the perturbation plan actually used and both
/// refinement trajectories.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: EncoderWeights,
    pub adam: AdamState,
    pub log: Vec<LossBreakdown>,
    pub plan: PerturbationPlan,
    pub trajectory_1: Vec<TrajectoryPoint>,
    pub trajectory_2: Vec<TrajectoryPoint>,
}

/// Independent RNG stream under one seed. Streams in use: 0 weight init,
/// 1 and 2 per-view flip optimization, 3 the epoch loop.
pub fn epoch_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw of `batch` distinct node indices via a partial shuffle.
fn sample_anchors<R: Rng>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    let take = batch.min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    for x in 0..take {
        let j = rng.gen_range(x..n);
        perm.swap(x, j);
    }
    perm.truncate(take);
    perm
}

/// Flip probabilities for one view: spectrum-preserving refinement, or the
/// projected uniform start when spectral optimization is disabled.
pub fn prepare_delta<R: Rng>(
    g: &Graph,
    cfg: &TrainConfig,
    eps: f64,
    rng: &mut R,
) -> Result<DeltaOptimization> {
    if cfg.no_spectral {
        let delta = uniform_projected(g.n(), eps)?;
        let loss = spectral_loss(g, &delta)?;
        let nnz = delta.nnz();
        return Ok(DeltaOptimization {
            delta,
            trajectory: vec![TrajectoryPoint { round: 0, loss, nnz }],
        });
    }
    optimize_delta(g, eps, cfg.rounds, cfg.eta, cfg.noise_scale, rng)
}

/// Trains encoder weights on one graph. The flip probabilities are
/// optimized once before the contrastive loop; every epoch then samples the
/// two views, embeds them, evaluates the objective and applies one Adam
/// update. See the module doc for the randomness contract.
pub fn fit(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if g.n() < 2 {
        return Err(Error::Config(format!("training needs at least 2 nodes, got {}", g.n())));
    }
    if g.feature_dim() == 0 {
        return Err(Error::Config("training needs at least one feature column".into()));
    }

    let mut weight_rng = epoch_stream(cfg.seed, 0);
    let mut delta1_rng = epoch_stream(cfg.seed, 1);
    let mut delta2_rng = epoch_stream(cfg.seed, 2);
    let mut loop_rng = epoch_stream(cfg.seed, 3);

    let k = cfg.effective_extra_diffusion();
    let mut weights =
        EncoderWeights::init(g.feature_dim(), cfg.hidden, cfg.layers, k, &mut weight_rng)?;
    let mut adam = AdamState::new(&weights);

    let (eps1, eps2) = cfg.view_budgets();
    let opt1 = prepare_delta(g, cfg, eps1, &mut delta1_rng)?;
    let opt2 = prepare_delta(g, cfg, eps2, &mut delta2_rng)?;
    let plan = PerturbationPlan::new(
        opt1.delta.clone(),
        opt2.delta.clone(),
        cfg.rounds,
        cfg.eta,
        cfg.noise_scale,
    )?;

    let loss_cfg = cfg.loss_config()?;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut fixed_views: Option<(Graph, Graph)> = None;
    if !cfg.resample_each_epoch && cfg.epochs > 0 {
        let mask1 = sample_mask(&plan.delta_1, &mut loop_rng);
        let mask2 = sample_mask(&plan.delta_2, &mut loop_rng);
        fixed_views = Some((apply_mask(g, &mask1)?, apply_mask(g, &mask2)?));
    }

    for epoch in 1..=cfg.epochs {
        let (g1, g2);
        let (view1, view2) = if cfg.resample_each_epoch {
            let mask1 = sample_mask(&plan.delta_1, &mut loop_rng);
            let mask2 = sample_mask(&plan.delta_2, &mut loop_rng);
            g1 = apply_mask(g, &mask1)?;
            g2 = apply_mask(g, &mask2)?;
            (&g1, &g2)
        } else {
            let (a, b) = fixed_views.as_ref().expect("fixed views prepared");
            (a, b)
        };

        let anchors = sample_anchors(g.n(), cfg.batch, &mut loop_rng);
        let (emb, tape) = forward_pair(view1, view2, &weights, cfg.raw_diffusion)?;
        let (breakdown, dh1, dh2) = total_loss_selective(
            &emb.h1,
            &emb.h2,
            &anchors,
            &loss_cfg,
            !cfg.no_lower,
            !cfg.no_upper,
            &mut loop_rng,
        )?;
        if !breakdown.total.is_finite() {
            return Err(Error::NonFinite {
                what: "training loss".into(),
                diagnostics: format!(
                    "epoch {epoch}: infonce = {}, lower = {}, upper = {}",
                    breakdown.infonce, breakdown.lower, breakdown.upper
                ),
            });
        }
        let grads = backward_pair(&tape, &weights, &dh1, &dh2)?;
        adam_step(&mut weights, &grads, &mut adam, cfg.lr, cfg.weight_decay)?;
        log.push(breakdown);
    }

    Ok(TrainOutcome {
        weights,
        adam,
        log,
        plan,
        trajectory_1: opt1.trajectory,
        trajectory_2: opt2.trajectory,
    })
}

fn write_matrix<W: Write>(out: &mut W, m: &DMatrix<f64>) -> Result<()> {
    out.write_all(&(m.nrows() as u32).to_le_bytes())?;
    out.write_all(&(m.ncols() as u32).to_le_bytes())?;
    for v in m.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_exact_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_matrix<R: Read>(input: &mut R) -> Result<DMatrix<f64>> {
    let rows = read_exact_u32(input)? as usize;
    let cols = read_exact_u32(input)? as usize;
    if rows.saturating_mul(cols) > 1 << 28 {
        return Err(Error::Data(format!("checkpoint matrix {rows}x{cols} is implausibly large")));
    }
    let mut data = vec![0.0f64; rows * cols];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        input.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    // Entries were written in nalgebra's column-major iteration order.
    Ok(DMatrix::from_vec(rows, cols, data))
}

fn write_matrices<W: Write>(out: &mut W, ms: &[DMatrix<f64>]) -> Result<()> {
    out.write_all(&(ms.len() as u32).to_le_bytes())?;
    for m in ms {
        write_matrix(out, m)?;
    }
    Ok(())
}

fn read_matrices<R: Read>(input: &mut R) -> Result<Vec<DMatrix<f64>>> {
    let count = read_exact_u32(input)? as usize;
    if count > 4096 {
        return Err(Error::Data(format!("checkpoint claims {count} matrices")));
    }
    (0..count).map(|_| read_matrix(input)).collect()
}

/// A resumable snapshot: config, weights and optimizer state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub weights: EncoderWeights,
    pub adam: AdamState,
}

/// Binary layout after the 6-byte magic: u32 config-JSON length, the JSON,
/// the weight matrices (count, then rows/cols/column-major f64 data each),
/// u32 extra-diffusion depth, both Adam moment lists, u64 step counter.
/// All integers and floats little-endian.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    let config = serde_json::to_vec(&ckpt.config)?;
    out.write_all(&(config.len() as u32).to_le_bytes())?;
    out.write_all(&config)?;
    write_matrices(&mut out, ckpt.weights.matrices())?;
    out.write_all(&(ckpt.weights.extra_diffusion() as u32).to_le_bytes())?;
    write_matrices(&mut out, ckpt.adam.first_moments())?;
    write_matrices(&mut out, ckpt.adam.second_moments())?;
    out.write_all(&ckpt.adam.step().to_le_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 6];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Data(format!(
            "not a checkpoint: magic {:?} (expected {:?})",
            magic, CHECKPOINT_MAGIC
        )));
    }
    let config_len = read_exact_u32(&mut input)? as usize;
    if config_len > 1 << 20 {
        return Err(Error::Data(format!("checkpoint config block of {config_len} bytes")));
    }
    let mut config_buf = vec![0u8; config_len];
    input.read_exact(&mut config_buf)?;
    let config: TrainConfig = serde_json::from_slice(&config_buf)?;
    let w = read_matrices(&mut input)?;
    let k = read_exact_u32(&mut input)? as usize;
    let weights = EncoderWeights::from_matrices(w, k)?;
    let m = read_matrices(&mut input)?;
    let v = read_matrices(&mut input)?;
    let step = read_exact_u64(&mut input)?;
    let adam = AdamState::from_parts(m, v, step)?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::Data("checkpoint has trailing bytes".into()));
    }
    Ok(Checkpoint { config, weights, adam })
}
