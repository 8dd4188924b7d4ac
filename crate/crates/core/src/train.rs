//! Scoring model: a low-rank residual adapter over frozen embeddings,
//! trained with a pairwise ranking loss plus a contrastive cross-entropy
//! term by in-house Adam, with finite-difference gradient verification.
//!
//! The adapter maps an embedding `e` to `h(e) = normalize(e + B·(Aᵀ·e))`
//! with `A, B ∈ R^{dim×r}`. `B` starts at zero, so the map is exactly the
//! identity at initialization and scores reduce to raw cosine. Both sides
//! of a pair share the one adapter. All arithmetic is double precision and
//! every reduction runs in a fixed order, so training is bit-reproducible
//! for a fixed seed.

// Indexed loops keep the row-major matrix math explicit.
#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dense::dot;
use crate::error::{Error, Result};
use crate::prefgen::PreferenceTriplet;

const CHECKPOINT_MAGIC: &[u8; 4] = b"ADPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Scale of the normal init for `A`.
const INIT_STD: f64 = 0.02;

/// Low-rank residual adapter. `a` and `b` are row-major `dim × rank`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterModel {
    pub base_dim: usize,
    pub rank: usize,
    pub temperature: f64,
    pub lambda_ce: f64,
    pub seed: u64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl AdapterModel {
    /// Identity-start initialization: `A ~ N(0, 0.02²)` from the seed,
    /// `B = 0`.
    pub fn init(base_dim: usize, rank: usize, temperature: f64, lambda_ce: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let a: Vec<f64> = (0..base_dim * rank).map(|_| normal.sample(&mut rng)).collect();
        AdapterModel {
            base_dim,
            rank,
            temperature,
            lambda_ce,
            seed,
            a,
            b: vec![0.0; base_dim * rank],
        }
    }

    /// Construct from explicit parameter matrices.
    pub fn with_params(
        base_dim: usize,
        rank: usize,
        temperature: f64,
        lambda_ce: f64,
        seed: u64,
        a: Vec<f64>,
        b: Vec<f64>,
    ) -> Result<Self> {
        if a.len() != base_dim * rank || b.len() != base_dim * rank {
            return Err(Error::DimMismatch {
                expected: base_dim * rank,
                got: a.len().max(b.len()),
            });
        }
        Ok(AdapterModel {
            base_dim,
            rank,
            temperature,
            lambda_ce,
            seed,
            a,
            b,
        })
    }

    pub fn params_a(&self) -> &[f64] {
        &self.a
    }

    pub fn params_b(&self) -> &[f64] {
        &self.b
    }

    /// `h(e) = normalize(e + B·(Aᵀ·e))`. A zero residual (in particular
    /// `B = 0`) returns `e` unchanged, keeping the identity exact.
    pub fn transform(&self, e: &[f64]) -> Result<Vec<f64>> {
        let fwd = self.forward(e)?;
        Ok(fwd.h)
    }

    /// Cosine between adapted embeddings; both sides share the adapter.
    pub fn score(&self, anchor: &[f64], candidate: &[f64]) -> Result<f64> {
        let ha = self.transform(anchor)?;
        let hc = self.transform(candidate)?;
        Ok(dot(&ha, &hc))
    }

    fn forward(&self, e: &[f64]) -> Result<Forward> {
        if e.len() != self.base_dim {
            return Err(Error::DimMismatch {
                expected: self.base_dim,
                got: e.len(),
            });
        }
        let r = self.rank;
        let mut u = vec![0.0; r];
        for i in 0..self.base_dim {
            let ei = e[i];
            if ei != 0.0 {
                for j in 0..r {
                    u[j] += self.a[i * r + j] * ei;
                }
            }
        }
        let mut z = e.to_vec();
        let mut residual_is_zero = true;
        for i in 0..self.base_dim {
            let mut d = 0.0;
            for j in 0..r {
                d += self.b[i * r + j] * u[j];
            }
            if d != 0.0 {
                residual_is_zero = false;
            }
            z[i] += d;
        }
        if residual_is_zero {
            return Ok(Forward {
                u,
                n: 1.0,
                h: e.to_vec(),
            });
        }
        let n = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::BadVector {
                doc_id: "<adapter output>".to_string(),
            });
        }
        let h: Vec<f64> = z.iter().map(|x| x / n).collect();
        Ok(Forward { u, n, h })
    }

    /// Checkpoint: header {base_dim, rank, temperature, lambda_ce, seed},
    /// then row-major `A` and `B` as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.base_dim as u32).to_le_bytes())?;
        w.write_all(&(self.rank as u32).to_le_bytes())?;
        w.write_all(&self.temperature.to_le_bytes())?;
        w.write_all(&self.lambda_ce.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for &x in self.a.iter().chain(&self.b) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let bad = |detail: &str| Error::FileFormat {
            path: path.display().to_string(),
            detail: detail.to_string(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != CHECKPOINT_VERSION {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut u32buf)?;
        let base_dim = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let rank = u32::from_le_bytes(u32buf) as usize;
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let temperature = f64::from_le_bytes(f64buf);
        r.read_exact(&mut f64buf)?;
        let lambda_ce = f64::from_le_bytes(f64buf);
        r.read_exact(&mut f64buf)?;
        let seed = u64::from_le_bytes(f64buf);
        let count = base_dim * rank;
        let mut read_matrix = |n: usize| -> Result<Vec<f64>> {
            let mut m = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                m.push(f64::from_le_bytes(buf));
            }
            Ok(m)
        };
        let a = read_matrix(count)?;
        let b = read_matrix(count)?;
        AdapterModel::with_params(base_dim, rank, temperature, lambda_ce, seed, a, b)
    }
}

struct Forward {
    u: Vec<f64>,
    n: f64,
    h: Vec<f64>,
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

/// Numerically stable `-ln σ(x)` = softplus(-x).
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pairwise ranking loss `-ln σ((s⁺ − s⁻)/τ)`.
pub fn loss_pair(
    model: &AdapterModel,
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
) -> Result<f64> {
    let s_pos = model.score(anchor, positive)?;
    let s_neg = model.score(anchor, negative)?;
    Ok(neg_log_sigmoid((s_pos - s_neg) / model.temperature))
}

/// In-batch contrastive cross-entropy:
/// `-ln [exp(s(a,c⁺)/τ) / Σ_{c∈B} exp(s(a,c)/τ)]`, computed with max
/// subtraction. The positive must be one of the batch candidates.
pub fn loss_ce(
    model: &AdapterModel,
    anchor: &[f64],
    positive_id: &str,
    candidates: &[(&str, &[f64])],
) -> Result<f64> {
    let mut logits = Vec::with_capacity(candidates.len());
    let mut pos_logit = None;
    for (id, emb) in candidates {
        let logit = model.score(anchor, emb)? / model.temperature;
        if *id == positive_id && pos_logit.is_none() {
            pos_logit = Some(logit);
        }
        logits.push(logit);
    }
    let Some(pos_logit) = pos_logit else {
        return Err(Error::PositiveNotInBatch {
            id: positive_id.to_string(),
        });
    };
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(-(pos_logit - max) + log_sum)
}

fn embedding_of<'a>(
    embeddings: &'a BTreeMap<String, Vec<f64>>,
    id: &str,
) -> Result<&'a Vec<f64>> {
    embeddings.get(id).ok_or_else(|| Error::MissingEmbedding {
        id: id.to_string(),
    })
}

/// In-batch candidate set: every positive and negative id appearing in the
/// mini-batch, deduplicated, in sorted order.
fn batch_candidates(batch: &[&PreferenceTriplet]) -> Vec<String> {
    let mut set = std::collections::BTreeSet::new();
    for t in batch {
        set.insert(t.positive_id.clone());
        set.insert(t.negative_id.clone());
    }
    set.into_iter().collect()
}

/// Mean over the batch of `loss_pair + λ_ce · loss_ce`, where each
/// triplet's CE candidates are all positives and negatives in the batch.
pub fn total_loss(
    model: &AdapterModel,
    batch: &[&PreferenceTriplet],
    embeddings: &BTreeMap<String, Vec<f64>>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    let candidate_ids = batch_candidates(batch);
    let candidates: Vec<(&str, &[f64])> = candidate_ids
        .iter()
        .map(|id| Ok((id.as_str(), embedding_of(embeddings, id)?.as_slice())))
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    for t in batch {
        let anchor = embedding_of(embeddings, &t.anchor_id)?;
        let positive = embedding_of(embeddings, &t.positive_id)?;
        let negative = embedding_of(embeddings, &t.negative_id)?;
        let mut value = loss_pair(model, anchor, positive, negative)?;
        if model.lambda_ce != 0.0 {
            value += model.lambda_ce * loss_ce(model, anchor, &t.positive_id, &candidates)?;
        }
        sum += value;
    }
    Ok(sum / batch.len() as f64)
}

// ---------------------------------------------------------------------------
// analytic gradients
// ---------------------------------------------------------------------------

/// Loss plus gradients of the batch objective w.r.t. `A` and `B`.
///
/// Backprop through `s = h_xᵀ h_y` with `h = z/‖z‖`, `z = e + B Aᵀ e`:
/// `∂s/∂z_x = (h_y − s·h_x)/‖z_x‖`, then `∇B += g_z u_xᵀ` and
/// `∇A += e (Bᵀ g_z)ᵀ` per embedding. Per-embedding z-gradients accumulate
/// over every score term in id order, keeping summation deterministic.
fn batch_loss_and_grad(
    model: &AdapterModel,
    batch: &[&PreferenceTriplet],
    embeddings: &BTreeMap<String, Vec<f64>>,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    let dim = model.base_dim;
    let r = model.rank;
    let tau = model.temperature;
    let weight = 1.0 / batch.len() as f64;

    let candidate_ids = batch_candidates(batch);

    // Forward pass per unique id, in sorted order.
    let mut ids: std::collections::BTreeSet<&str> =
        candidate_ids.iter().map(String::as_str).collect();
    for t in batch {
        ids.insert(t.anchor_id.as_str());
    }
    let mut fwd: BTreeMap<&str, Forward> = BTreeMap::new();
    for id in &ids {
        fwd.insert(id, model.forward(embedding_of(embeddings, id)?)?);
    }
    let score_of = |x: &str, y: &str| dot(&fwd[x].h, &fwd[y].h);

    // coeff · ∂s(x,y)/∂z into both endpoint gradients
    fn add_score_grad<'a>(
        g_z: &mut BTreeMap<&'a str, Vec<f64>>,
        fwd: &BTreeMap<&'a str, Forward>,
        dim: usize,
        x: &'a str,
        y: &'a str,
        coeff: f64,
    ) {
        let s = dot(&fwd[x].h, &fwd[y].h);
        let (fx, fy) = (&fwd[x], &fwd[y]);
        let gx = g_z.entry(x).or_insert_with(|| vec![0.0; dim]);
        for i in 0..dim {
            gx[i] += coeff * (fy.h[i] - s * fx.h[i]) / fx.n;
        }
        let gy = g_z.entry(y).or_insert_with(|| vec![0.0; dim]);
        for i in 0..dim {
            gy[i] += coeff * (fx.h[i] - s * fy.h[i]) / fy.n;
        }
    }

    let mut g_z: BTreeMap<&str, Vec<f64>> = BTreeMap::new();

    let mut loss_sum = 0.0;
    for t in batch {
        let a_id = t.anchor_id.as_str();
        let p_id = t.positive_id.as_str();
        let n_id = t.negative_id.as_str();

        let s_pos = score_of(a_id, p_id);
        let s_neg = score_of(a_id, n_id);
        let x = (s_pos - s_neg) / tau;
        loss_sum += neg_log_sigmoid(x);
        let d_pos = (sigmoid(x) - 1.0) / tau;
        add_score_grad(&mut g_z, &fwd, dim, a_id, p_id, weight * d_pos);
        add_score_grad(&mut g_z, &fwd, dim, a_id, n_id, -weight * d_pos);

        if model.lambda_ce != 0.0 {
            let logits: Vec<f64> = candidate_ids
                .iter()
                .map(|c| score_of(a_id, c) / tau)
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let pos_index = candidate_ids
                .iter()
                .position(|c| c == p_id)
                .expect("positive is in the candidate set by construction");
            loss_sum += model.lambda_ce * (-(logits[pos_index] - max) + exp_sum.ln());
            for (c, logit) in candidate_ids.iter().zip(&logits) {
                let p_c = (logit - max).exp() / exp_sum;
                let indicator = if c == p_id { 1.0 } else { 0.0 };
                let coeff = weight * model.lambda_ce * (p_c - indicator) / tau;
                if coeff != 0.0 {
                    add_score_grad(&mut g_z, &fwd, dim, a_id, c, coeff);
                }
            }
        }
    }

    // Fold per-embedding z-gradients into parameter gradients.
    let mut grad_a = vec![0.0; dim * r];
    let mut grad_b = vec![0.0; dim * r];
    for (id, g) in &g_z {
        let f = &fwd[id];
        let e = embedding_of(embeddings, id)?;
        // ∇B_{ij} += g_i · u_j
        for i in 0..dim {
            let gi = g[i];
            if gi != 0.0 {
                for j in 0..r {
                    grad_b[i * r + j] += gi * f.u[j];
                }
            }
        }
        // ∇A_{ij} += e_i · (Bᵀ g)_j
        let mut bt_g = vec![0.0; r];
        for i in 0..dim {
            let gi = g[i];
            if gi != 0.0 {
                for j in 0..r {
                    bt_g[j] += model.b[i * r + j] * gi;
                }
            }
        }
        for i in 0..dim {
            let ei = e[i];
            if ei != 0.0 {
                for j in 0..r {
                    grad_a[i * r + j] += ei * bt_g[j];
                }
            }
        }
    }

    Ok((loss_sum / batch.len() as f64, grad_a, grad_b))
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of total steps spent in linear LR warmup.
    pub warmup_fraction: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 15,
            batch_size: 4,
            warmup_fraction: 0.05,
            patience: 6,
            seed: 622,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One row of the loss history. Epoch 0 records the untrained model.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Write the loss history as CSV (epoch, train_loss, val_loss, lr).
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,train_loss,val_loss,lr")?;
    for row in history {
        writeln!(w, "{},{},{},{}", row.epoch, row.train_loss, row.val_loss, row.lr)?;
    }
    w.flush()?;
    Ok(())
}

fn eval_in_batches(
    model: &AdapterModel,
    triplets: &[&PreferenceTriplet],
    embeddings: &BTreeMap<String, Vec<f64>>,
    batch_size: usize,
) -> Result<f64> {
    let mut weighted = 0.0;
    for chunk in triplets.chunks(batch_size.max(1)) {
        weighted += total_loss(model, chunk, embeddings)? * chunk.len() as f64;
    }
    Ok(weighted / triplets.len() as f64)
}

/// Adam training of `A` and `B` with linear warmup and early stopping on
/// validation loss; returns the best-validation snapshot and the history.
///
/// The triplets are split 90/10 into train/validation by a seeded shuffle.
/// Deterministic for a fixed seed.
pub fn train_adapter(
    model: AdapterModel,
    triplets: &[PreferenceTriplet],
    embeddings: &BTreeMap<String, Vec<f64>>,
    config: &TrainConfig,
) -> Result<(AdapterModel, Vec<EpochStats>)> {
    use rand::seq::SliceRandom;

    if triplets.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    for t in triplets {
        for id in [&t.anchor_id, &t.positive_id, &t.negative_id] {
            embedding_of(embeddings, id)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.shuffle(&mut rng);
    let n = order.len();
    let val_count = if n >= 2 { (n / 10).clamp(1, n - 1) } else { 0 };
    let (train_idx, val_idx) = order.split_at(n - val_count);
    let train_idx: Vec<usize> = train_idx.to_vec();
    let val_set: Vec<&PreferenceTriplet> = val_idx.iter().map(|&i| &triplets[i]).collect();

    let batch_size = config.batch_size.max(1);
    let batches_per_epoch = train_idx.len().div_ceil(batch_size);
    let total_steps = config.epochs * batches_per_epoch;
    let warmup_steps = (config.warmup_fraction * total_steps as f64).ceil() as usize;
    let lr_at = |step: usize| -> f64 {
        if warmup_steps > 0 && step <= warmup_steps {
            config.learning_rate * step as f64 / warmup_steps as f64
        } else {
            config.learning_rate
        }
    };

    let mut model = model;
    let param_len = model.a.len();
    let mut m_a = vec![0.0; param_len];
    let mut v_a = vec![0.0; param_len];
    let mut m_b = vec![0.0; param_len];
    let mut v_b = vec![0.0; param_len];

    // Loss rows are always evaluated on this fixed batching, so the
    // history depends only on the parameters (in-batch CE makes shuffled
    // batch averages composition-dependent).
    let train_eval_set: Vec<&PreferenceTriplet> =
        train_idx.iter().map(|&i| &triplets[i]).collect();
    // Numeric failures during evaluation surface as the same non-finite
    // abort the step loop uses; step 0 marks the pre-training pass.
    let as_non_finite = |e: Error| match e {
        Error::BadVector { .. } => Error::NonFiniteLoss {
            step: 0,
            triplet_ids: vec!["<epoch-0 evaluation>".to_string()],
        },
        other => other,
    };
    let epoch0_train =
        eval_in_batches(&model, &train_eval_set, embeddings, batch_size).map_err(as_non_finite)?;
    let epoch0_val = if val_set.is_empty() {
        epoch0_train
    } else {
        eval_in_batches(&model, &val_set, embeddings, batch_size).map_err(as_non_finite)?
    };
    let mut history = vec![EpochStats {
        epoch: 0,
        train_loss: epoch0_train,
        val_loss: epoch0_val,
        lr: 0.0,
    }];

    let mut best_model = model.clone();
    let mut best_val = epoch0_val;
    let mut stale_epochs = 0usize;
    let mut step = 0usize;

    let mut shuffled = train_idx;
    for epoch in 1..=config.epochs {
        shuffled.shuffle(&mut rng);
        let mut epoch_lr = 0.0;
        for chunk in shuffled.chunks(batch_size) {
            step += 1;
            let batch: Vec<&PreferenceTriplet> = chunk.iter().map(|&i| &triplets[i]).collect();
            let non_finite = |step: usize, batch: &[&PreferenceTriplet]| Error::NonFiniteLoss {
                step,
                triplet_ids: batch.iter().map(|t| t.anchor_id.clone()).collect(),
            };
            let (loss, grad_a, grad_b) = match batch_loss_and_grad(&model, &batch, embeddings) {
                Ok(v) => v,
                // a non-finite vector norm inside the forward pass is the
                // same numeric failure as a non-finite loss
                Err(Error::BadVector { .. }) => return Err(non_finite(step, &batch)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(non_finite(step, &batch));
            }
            let lr = lr_at(step);
            epoch_lr = lr;
            let t = step as f64;
            let bc1 = 1.0 - config.beta1.powf(t);
            let bc2 = 1.0 - config.beta2.powf(t);
            for k in 0..param_len {
                m_a[k] = config.beta1 * m_a[k] + (1.0 - config.beta1) * grad_a[k];
                v_a[k] = config.beta2 * v_a[k] + (1.0 - config.beta2) * grad_a[k] * grad_a[k];
                model.a[k] -= lr * (m_a[k] / bc1) / ((v_a[k] / bc2).sqrt() + config.epsilon);
                m_b[k] = config.beta1 * m_b[k] + (1.0 - config.beta1) * grad_b[k];
                v_b[k] = config.beta2 * v_b[k] + (1.0 - config.beta2) * grad_b[k] * grad_b[k];
                model.b[k] -= lr * (m_b[k] / bc1) / ((v_b[k] / bc2).sqrt() + config.epsilon);
            }
        }
        let train_loss = eval_in_batches(&model, &train_eval_set, embeddings, batch_size)?;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            eval_in_batches(&model, &val_set, embeddings, batch_size)?
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                triplet_ids: vec!["<validation>".to_string()],
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr: epoch_lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_model = model.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= config.patience {
                log::info!("early stop at epoch {epoch} (best val {best_val})");
                break;
            }
        }
    }

    Ok((best_model, history))
}

// ---------------------------------------------------------------------------
// gradient verification
// ---------------------------------------------------------------------------

/// Central finite differences against the analytic gradient on `coords`
/// randomly chosen coordinates (alternating between `A` and `B`). Returns
/// the maximum relative error
/// `|g_fd − g_an| / max(1e-12, |g_fd| + |g_an|)`.
pub fn grad_check(
    model: &AdapterModel,
    triplets: &[PreferenceTriplet],
    embeddings: &BTreeMap<String, Vec<f64>>,
    epsilon: f64,
    coords: usize,
    seed: u64,
) -> Result<f64> {
    let batch: Vec<&PreferenceTriplet> = triplets.iter().collect();
    let (_, grad_a, grad_b) = batch_loss_and_grad(model, &batch, embeddings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let param_len = model.a.len();
    let mut max_rel = 0.0f64;
    for c in 0..coords {
        let idx = rng.random_range(0..param_len);
        let in_a = c % 2 == 0;
        let mut perturbed = model.clone();
        let (params, analytic) = if in_a {
            (&mut perturbed.a, grad_a[idx])
        } else {
            (&mut perturbed.b, grad_b[idx])
        };
        let original = params[idx];
        params[idx] = original + epsilon;
        let f_plus = total_loss(&perturbed, &batch, embeddings)?;
        let params = if in_a { &mut perturbed.a } else { &mut perturbed.b };
        params[idx] = original - epsilon;
        let f_minus = total_loss(&perturbed, &batch, embeddings)?;
        let fd = (f_plus - f_minus) / (2.0 * epsilon);
        let rel = (fd - analytic).abs() / 1e-12f64.max(fd.abs() + analytic.abs());
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
