//! A small trainable masked-language scorer: token + learned position
//! embeddings, a stack of bidirectional attention layers with residual
//! feed-forwards, RMS normalization, and an output projection tied to the
//! embedding table. A 3-way classifier head over the first position serves
//! the supervised and distillation paths.
//!
//! Everything runs in f64 with hand-written backward passes; the gradient
//! check in the test suite compares every tensor against central finite
//! differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::backend::{
    compose_label_scores, ClozeQuery, LabelScores, PairClassifier, PairEncoding, ScorerModel,
    Tokenizer,
};
use crate::error::{Error, Result};

const RMS_EPS: f64 = 1e-6;
const INIT_STD: f64 = 0.02;
/// Corruption rate of the auxiliary masked-token objective.
pub const AUX_MASK_RATE: f64 = 0.15;

/// Architecture hyperparameters. These are configuration, not contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_positions: usize,
}

impl Default for MlmConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            layers: 2,
            heads: 2,
            ffn_mult: 4,
            max_positions: 256,
        }
    }
}

impl MlmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.layers == 0 || self.heads == 0 || self.ffn_mult == 0 {
            return Err(Error::InvalidConfig(
                "mlm dimensions must be positive".to_string(),
            ));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.max_positions == 0 {
            return Err(Error::InvalidConfig("max_positions must be positive".to_string()));
        }
        Ok(())
    }
}

/// Offsets of the named tensors inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    vocab: usize,
    dim: usize,
    ffn: usize,
    layers: usize,
    max_positions: usize,
}

impl Layout {
    fn new(cfg: &MlmConfig, vocab: usize) -> Self {
        Self {
            vocab,
            dim: cfg.dim,
            ffn: cfg.dim * cfg.ffn_mult,
            layers: cfg.layers,
            max_positions: cfg.max_positions,
        }
    }

    fn layer_size(&self) -> usize {
        4 * self.dim * self.dim + 2 * self.ffn * self.dim
    }

    fn wte(&self) -> std::ops::Range<usize> {
        0..self.vocab * self.dim
    }

    fn wpe(&self) -> std::ops::Range<usize> {
        let start = self.vocab * self.dim;
        start..start + self.max_positions * self.dim
    }

    fn layer_base(&self, layer: usize) -> usize {
        self.wpe().end + layer * self.layer_size()
    }

    fn wq(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l);
        b..b + self.dim * self.dim
    }

    fn wk(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + self.dim * self.dim;
        b..b + self.dim * self.dim
    }

    fn wv(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + 2 * self.dim * self.dim;
        b..b + self.dim * self.dim
    }

    fn wo(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + 3 * self.dim * self.dim;
        b..b + self.dim * self.dim
    }

    fn w1(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + 4 * self.dim * self.dim;
        b..b + self.ffn * self.dim
    }

    fn w2(&self, l: usize) -> std::ops::Range<usize> {
        let b = self.layer_base(l) + 4 * self.dim * self.dim + self.ffn * self.dim;
        b..b + self.dim * self.ffn
    }

    fn wcls(&self) -> std::ops::Range<usize> {
        let b = self.layer_base(self.layers);
        b..b + 3 * self.dim
    }

    fn bcls(&self) -> std::ops::Range<usize> {
        let b = self.wcls().end;
        b..b + 3
    }

    fn total(&self) -> usize {
        self.bcls().end
    }

    /// Named tensor ranges, used by the gradient check to report per-tensor
    /// errors.
    fn tensors(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut out = vec![
            ("wte".to_string(), self.wte()),
            ("wpe".to_string(), self.wpe()),
        ];
        for l in 0..self.layers {
            out.push((format!("l{l}.wq"), self.wq(l)));
            out.push((format!("l{l}.wk"), self.wk(l)));
            out.push((format!("l{l}.wv"), self.wv(l)));
            out.push((format!("l{l}.wo"), self.wo(l)));
            out.push((format!("l{l}.w1"), self.w1(l)));
            out.push((format!("l{l}.w2"), self.w2(l)));
        }
        out.push(("wcls".to_string(), self.wcls()));
        out.push(("bcls".to_string(), self.bcls()));
        out
    }
}

// y = W x, W row-major [out, in]
fn matvec(w: &[f64], x: &[f64], out_dim: usize, in_dim: usize, y: &mut [f64]) {
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        y[o] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

// dx += W^T dy
fn matvec_transpose_acc(w: &[f64], dy: &[f64], out_dim: usize, in_dim: usize, dx: &mut [f64]) {
    for o in 0..out_dim {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let g = dy[o];
        if g != 0.0 {
            for (dx_i, w_i) in dx.iter_mut().zip(row) {
                *dx_i += w_i * g;
            }
        }
    }
}

// gW += scale * dy x^T
fn outer_acc(gw: &mut [f64], dy: &[f64], x: &[f64], in_dim: usize, scale: f64) {
    for (o, g) in dy.iter().enumerate() {
        let g = g * scale;
        if g != 0.0 {
            let row = &mut gw[o * in_dim..(o + 1) * in_dim];
            for (gw_i, x_i) in row.iter_mut().zip(x) {
                *gw_i += g * x_i;
            }
        }
    }
}

// returns rinv; n = x * rinv
fn rmsnorm(x: &[f64], n: &mut [f64]) -> f64 {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let rinv = 1.0 / (ms + RMS_EPS).sqrt();
    for (n_i, x_i) in n.iter_mut().zip(x) {
        *n_i = x_i * rinv;
    }
    rinv
}

// dx += rinv*dn - (rinv^3/d) (dn . x) x
fn rmsnorm_bwd(dn: &[f64], x: &[f64], rinv: f64, dx: &mut [f64]) {
    let d = x.len() as f64;
    let dot: f64 = dn.iter().zip(x).map(|(a, b)| a * b).sum();
    let k = rinv * rinv * rinv / d * dot;
    for ((dx_i, dn_i), x_i) in dx.iter_mut().zip(dn).zip(x) {
        *dx_i += rinv * dn_i - k * x_i;
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn log_softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

struct LayerCache {
    x_in: Vec<f64>,
    n1: Vec<f64>,
    rms1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// attention weights, [heads][T][T] flattened
    att: Vec<f64>,
    /// concatenated head outputs before the output projection
    ho: Vec<f64>,
    x_mid: Vec<f64>,
    n2: Vec<f64>,
    rms2: Vec<f64>,
    h_pre: Vec<f64>,
    h_act: Vec<f64>,
}

struct Cache {
    t: usize,
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    /// input to the final norm (last layer output, or embeddings)
    x_last: Vec<f64>,
    rms_f: Vec<f64>,
    xf: Vec<f64>,
}

/// Serialized model state; predictions round-trip bit-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlmSnapshot {
    pub version: u32,
    pub config: MlmConfig,
    pub vocab_size: usize,
    pub init_seed: u64,
    pub params: Vec<f64>,
}

pub const SNAPSHOT_VERSION: u32 = 1;

/// The trainable scorer. Parameters live in one flat vector so optimizer
/// state, clipping, snapshots, and finite-difference checks stay trivial.
#[derive(Debug, Clone)]
pub struct ToyMlm {
    cfg: MlmConfig,
    vocab_size: usize,
    init_seed: u64,
    layout_cache: LayoutCacheMarker,
    params: Vec<f64>,
}

// Layout is cheap to recompute; this marker keeps Clone derivable without
// storing redundant state.
#[derive(Debug, Clone, Copy)]
struct LayoutCacheMarker;

impl ToyMlm {
    pub fn new(cfg: MlmConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if vocab_size == 0 {
            return Err(Error::InvalidConfig("vocabulary is empty".to_string()));
        }
        let layout = Layout::new(&cfg, vocab_size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        let mut params = vec![0.0; layout.total()];
        for p in params.iter_mut() {
            let z: f64 = normal.sample(&mut rng);
            *p = z * INIT_STD;
        }
        // classifier bias starts at zero
        for i in layout.bcls() {
            params[i] = 0.0;
        }
        Ok(Self {
            cfg,
            vocab_size,
            init_seed: seed,
            layout_cache: LayoutCacheMarker,
            params,
        })
    }

    fn layout(&self) -> Layout {
        let _ = self.layout_cache;
        Layout::new(&self.cfg, self.vocab_size)
    }

    pub fn config(&self) -> &MlmConfig {
        &self.cfg
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Named tensor ranges in the flat parameter vector.
    pub fn tensor_ranges(&self) -> Vec<(String, std::ops::Range<usize>)> {
        self.layout().tensors()
    }

    pub fn snapshot(&self) -> MlmSnapshot {
        MlmSnapshot {
            version: SNAPSHOT_VERSION,
            config: self.cfg,
            vocab_size: self.vocab_size,
            init_seed: self.init_seed,
            params: self.params.clone(),
        }
    }

    pub fn from_snapshot(snapshot: MlmSnapshot) -> Result<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::SnapshotVersion(snapshot.version));
        }
        snapshot.config.validate()?;
        let layout = Layout::new(&snapshot.config, snapshot.vocab_size);
        if snapshot.params.len() != layout.total() {
            return Err(Error::InvalidConfig(format!(
                "snapshot parameter count {} does not match layout {}",
                snapshot.params.len(),
                layout.total()
            )));
        }
        Ok(Self {
            cfg: snapshot.config,
            vocab_size: snapshot.vocab_size,
            init_seed: snapshot.init_seed,
            layout_cache: LayoutCacheMarker,
            params: snapshot.params,
        })
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::InvalidConfig("empty token sequence".to_string()));
        }
        if ids.len() > self.cfg.max_positions {
            return Err(Error::InvalidConfig(format!(
                "sequence length {} exceeds max positions {}",
                ids.len(),
                self.cfg.max_positions
            )));
        }
        if let Some(bad) = ids.iter().find(|id| **id as usize >= self.vocab_size) {
            return Err(Error::InvalidConfig(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        Ok(())
    }

    fn forward(&self, ids: &[u32]) -> Cache {
        let layout = self.layout();
        let (d, heads) = (self.cfg.dim, self.cfg.heads);
        let hd = d / heads;
        let f = layout.ffn;
        let t_len = ids.len();
        let p = &self.params;

        let mut x = vec![0.0; t_len * d];
        let wte = &p[layout.wte()];
        let wpe = &p[layout.wpe()];
        for (t, id) in ids.iter().enumerate() {
            let tok = &wte[*id as usize * d..(*id as usize + 1) * d];
            let pos = &wpe[t * d..(t + 1) * d];
            for i in 0..d {
                x[t * d + i] = tok[i] + pos[i];
            }
        }

        let mut layers = Vec::with_capacity(self.cfg.layers);
        for l in 0..self.cfg.layers {
            let x_in = x.clone();
            let mut n1 = vec![0.0; t_len * d];
            let mut rms1 = vec![0.0; t_len];
            for t in 0..t_len {
                rms1[t] = rmsnorm(&x_in[t * d..(t + 1) * d], &mut n1[t * d..(t + 1) * d]);
            }
            let (wq, wk, wv) = (&p[layout.wq(l)], &p[layout.wk(l)], &p[layout.wv(l)]);
            let mut q = vec![0.0; t_len * d];
            let mut k = vec![0.0; t_len * d];
            let mut v = vec![0.0; t_len * d];
            for t in 0..t_len {
                let n_t = &n1[t * d..(t + 1) * d];
                matvec(wq, n_t, d, d, &mut q[t * d..(t + 1) * d]);
                matvec(wk, n_t, d, d, &mut k[t * d..(t + 1) * d]);
                matvec(wv, n_t, d, d, &mut v[t * d..(t + 1) * d]);
            }
            let scale = 1.0 / (hd as f64).sqrt();
            let mut att = vec![0.0; heads * t_len * t_len];
            let mut ho = vec![0.0; t_len * d];
            for h in 0..heads {
                let off = h * hd;
                for i in 0..t_len {
                    let row = &mut att[h * t_len * t_len + i * t_len..][..t_len];
                    let q_i = &q[i * d + off..i * d + off + hd];
                    for (j, r) in row.iter_mut().enumerate() {
                        let k_j = &k[j * d + off..j * d + off + hd];
                        *r = q_i.iter().zip(k_j).map(|(a, b)| a * b).sum::<f64>() * scale;
                    }
                    softmax_in_place(row);
                    for c in 0..hd {
                        let mut acc = 0.0;
                        for (j, w) in row.iter().enumerate() {
                            acc += w * v[j * d + off + c];
                        }
                        ho[i * d + off + c] = acc;
                    }
                }
            }
            let wo = &p[layout.wo(l)];
            let mut x_mid = vec![0.0; t_len * d];
            {
                let mut attn_out = vec![0.0; d];
                for t in 0..t_len {
                    matvec(wo, &ho[t * d..(t + 1) * d], d, d, &mut attn_out);
                    for i in 0..d {
                        x_mid[t * d + i] = x_in[t * d + i] + attn_out[i];
                    }
                }
            }
            let mut n2 = vec![0.0; t_len * d];
            let mut rms2 = vec![0.0; t_len];
            for t in 0..t_len {
                rms2[t] = rmsnorm(&x_mid[t * d..(t + 1) * d], &mut n2[t * d..(t + 1) * d]);
            }
            let (w1, w2) = (&p[layout.w1(l)], &p[layout.w2(l)]);
            let mut h_pre = vec![0.0; t_len * f];
            let mut h_act = vec![0.0; t_len * f];
            let mut x_out = vec![0.0; t_len * d];
            {
                let mut ffn = vec![0.0; d];
                for t in 0..t_len {
                    matvec(w1, &n2[t * d..(t + 1) * d], f, d, &mut h_pre[t * f..(t + 1) * f]);
                    for i in 0..f {
                        h_act[t * f + i] = silu(h_pre[t * f + i]);
                    }
                    matvec(w2, &h_act[t * f..(t + 1) * f], d, f, &mut ffn);
                    for i in 0..d {
                        x_out[t * d + i] = x_mid[t * d + i] + ffn[i];
                    }
                }
            }
            x = x_out;
            layers.push(LayerCache {
                x_in,
                n1,
                rms1,
                q,
                k,
                v,
                att,
                ho,
                x_mid,
                n2,
                rms2,
                h_pre,
                h_act,
            });
        }

        let x_last = x;
        let mut xf = vec![0.0; t_len * d];
        let mut rms_f = vec![0.0; t_len];
        for t in 0..t_len {
            rms_f[t] = rmsnorm(&x_last[t * d..(t + 1) * d], &mut xf[t * d..(t + 1) * d]);
        }
        Cache {
            t: t_len,
            ids: ids.to_vec(),
            layers,
            x_last,
            rms_f,
            xf,
        }
    }

    fn logits_at(&self, cache: &Cache, position: usize) -> Vec<f64> {
        let layout = self.layout();
        let d = self.cfg.dim;
        let wte = &self.params[layout.wte()];
        let mut logits = vec![0.0; self.vocab_size];
        matvec(
            wte,
            &cache.xf[position * d..(position + 1) * d],
            self.vocab_size,
            d,
            &mut logits,
        );
        logits
    }

    /// Normalized log-probability distribution over the vocabulary at each
    /// mask position of the query.
    pub fn mask_distributions(&self, query: &ClozeQuery) -> Result<Vec<Vec<f64>>> {
        self.check_ids(query.token_ids())?;
        let cache = self.forward(query.token_ids());
        Ok(query
            .mask_positions()
            .iter()
            .map(|pos| log_softmax(&self.logits_at(&cache, *pos)))
            .collect())
    }

    fn cls_logits(&self, cache: &Cache) -> [f64; 3] {
        let layout = self.layout();
        let d = self.cfg.dim;
        let wcls = &self.params[layout.wcls()];
        let bcls = &self.params[layout.bcls()];
        let x0 = &cache.xf[0..d];
        let mut out = [0.0; 3];
        for (o, slot) in out.iter_mut().enumerate() {
            *slot = bcls[o]
                + wcls[o * d..(o + 1) * d]
                    .iter()
                    .zip(x0)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
        out
    }

    /// Backpropagates from a gradient on the final normed states into every
    /// parameter, adding `scale *` gradient into `grad`.
    fn backward(&self, cache: &Cache, d_xf: &[f64], grad: &mut [f64], scale: f64) {
        let layout = self.layout();
        let (d, heads) = (self.cfg.dim, self.cfg.heads);
        let hd = d / heads;
        let f = layout.ffn;
        let t_len = cache.t;
        let p = &self.params;

        // final norm
        let mut dx = vec![0.0; t_len * d];
        for t in 0..t_len {
            rmsnorm_bwd(
                &d_xf[t * d..(t + 1) * d],
                &cache.x_last[t * d..(t + 1) * d],
                cache.rms_f[t],
                &mut dx[t * d..(t + 1) * d],
            );
        }

        for l in (0..self.cfg.layers).rev() {
            let lc = &cache.layers[l];
            // FFN block: x_out = x_mid + W2 silu(W1 rmsnorm(x_mid))
            let w2 = &p[layout.w2(l)];
            let w1 = &p[layout.w1(l)];
            let mut d_xmid = dx.clone(); // residual branch
            {
                let mut d_hact = vec![0.0; f];
                let mut d_hpre = vec![0.0; f];
                let mut d_n2 = vec![0.0; d];
                for t in 0..t_len {
                    let dy = &dx[t * d..(t + 1) * d];
                    outer_acc(&mut grad[layout.w2(l)], dy, &lc.h_act[t * f..(t + 1) * f], f, scale);
                    d_hact.iter_mut().for_each(|v| *v = 0.0);
                    matvec_transpose_acc(w2, dy, d, f, &mut d_hact);
                    for i in 0..f {
                        d_hpre[i] = d_hact[i] * silu_prime(lc.h_pre[t * f + i]);
                    }
                    outer_acc(&mut grad[layout.w1(l)], &d_hpre, &lc.n2[t * d..(t + 1) * d], d, scale);
                    d_n2.iter_mut().for_each(|v| *v = 0.0);
                    matvec_transpose_acc(w1, &d_hpre, f, d, &mut d_n2);
                    rmsnorm_bwd(
                        &d_n2,
                        &lc.x_mid[t * d..(t + 1) * d],
                        lc.rms2[t],
                        &mut d_xmid[t * d..(t + 1) * d],
                    );
                }
            }

            // attention block: x_mid = x_in + Wo heads(rmsnorm(x_in))
            let wo = &p[layout.wo(l)];
            let mut d_ho = vec![0.0; t_len * d];
            for t in 0..t_len {
                let dy = &d_xmid[t * d..(t + 1) * d];
                outer_acc(&mut grad[layout.wo(l)], dy, &lc.ho[t * d..(t + 1) * d], d, scale);
                matvec_transpose_acc(wo, dy, d, d, &mut d_ho[t * d..(t + 1) * d]);
            }
            let mut d_q = vec![0.0; t_len * d];
            let mut d_k = vec![0.0; t_len * d];
            let mut d_v = vec![0.0; t_len * d];
            let att_scale = 1.0 / (hd as f64).sqrt();
            for h in 0..heads {
                let off = h * hd;
                for i in 0..t_len {
                    let a_row = &lc.att[h * t_len * t_len + i * t_len..][..t_len];
                    let d_o = &d_ho[i * d + off..i * d + off + hd];
                    // d attention weights and value gradients
                    let mut d_a = vec![0.0; t_len];
                    for j in 0..t_len {
                        let v_j = &lc.v[j * d + off..j * d + off + hd];
                        d_a[j] = d_o.iter().zip(v_j).map(|(a, b)| a * b).sum();
                        let w = a_row[j];
                        if w != 0.0 {
                            let dv_j = &mut d_v[j * d + off..j * d + off + hd];
                            for (dv, g) in dv_j.iter_mut().zip(d_o) {
                                *dv += w * g;
                            }
                        }
                    }
                    // softmax backward
                    let dot: f64 = a_row.iter().zip(&d_a).map(|(a, b)| a * b).sum();
                    for j in 0..t_len {
                        let d_logit = a_row[j] * (d_a[j] - dot) * att_scale;
                        if d_logit != 0.0 {
                            let k_j = &lc.k[j * d + off..j * d + off + hd];
                            let q_i = &lc.q[i * d + off..i * d + off + hd];
                            let dq_i = &mut d_q[i * d + off..i * d + off + hd];
                            for (dq, kv) in dq_i.iter_mut().zip(k_j) {
                                *dq += d_logit * kv;
                            }
                            let dk_j = &mut d_k[j * d + off..j * d + off + hd];
                            for (dk, qv) in dk_j.iter_mut().zip(q_i) {
                                *dk += d_logit * qv;
                            }
                        }
                    }
                }
            }
            let (wq, wk, wv) = (&p[layout.wq(l)], &p[layout.wk(l)], &p[layout.wv(l)]);
            let mut d_xin = d_xmid; // residual branch
            {
                let mut d_n1 = vec![0.0; d];
                for t in 0..t_len {
                    let n_t = &lc.n1[t * d..(t + 1) * d];
                    d_n1.iter_mut().for_each(|v| *v = 0.0);
                    outer_acc(&mut grad[layout.wq(l)], &d_q[t * d..(t + 1) * d], n_t, d, scale);
                    matvec_transpose_acc(wq, &d_q[t * d..(t + 1) * d], d, d, &mut d_n1);
                    outer_acc(&mut grad[layout.wk(l)], &d_k[t * d..(t + 1) * d], n_t, d, scale);
                    matvec_transpose_acc(wk, &d_k[t * d..(t + 1) * d], d, d, &mut d_n1);
                    outer_acc(&mut grad[layout.wv(l)], &d_v[t * d..(t + 1) * d], n_t, d, scale);
                    matvec_transpose_acc(wv, &d_v[t * d..(t + 1) * d], d, d, &mut d_n1);
                    rmsnorm_bwd(
                        &d_n1,
                        &lc.x_in[t * d..(t + 1) * d],
                        lc.rms1[t],
                        &mut d_xin[t * d..(t + 1) * d],
                    );
                }
            }
            dx = d_xin;
        }

        // embeddings
        let wte_range = layout.wte();
        let wpe_range = layout.wpe();
        for (t, id) in cache.ids.iter().enumerate() {
            let src = &dx[t * d..(t + 1) * d];
            let wte_row = &mut grad[wte_range.start + *id as usize * d..][..d];
            for (g, s) in wte_row.iter_mut().zip(src) {
                *g += scale * s;
            }
        }
        for t in 0..t_len {
            let src = &dx[t * d..(t + 1) * d];
            let wpe_row = &mut grad[wpe_range.start + t * d..][..d];
            for (g, s) in wpe_row.iter_mut().zip(src) {
                *g += scale * s;
            }
        }
    }

    fn pvp_forward(&self, query: &ClozeQuery) -> Result<(Cache, Vec<Vec<f64>>, Vec<f64>)> {
        self.check_ids(query.token_ids())?;
        if query.mask_positions().is_empty() {
            return Err(Error::InvalidConfig("query has no mask positions".to_string()));
        }
        let cache = self.forward(query.token_ids());
        let log_probs: Vec<Vec<f64>> = query
            .mask_positions()
            .iter()
            .map(|pos| log_softmax(&self.logits_at(&cache, *pos)))
            .collect();
        let scores = compose_label_scores(&log_probs, query.candidates());
        Ok((cache, log_probs, scores))
    }

    /// Cross-entropy of softmax(label scores) against the gold label.
    pub fn pvp_loss(&self, query: &ClozeQuery, gold_index: usize) -> Result<f64> {
        let (_, _, scores) = self.pvp_forward(query)?;
        let mut probs = scores;
        softmax_in_place(&mut probs);
        Ok(-probs[gold_index].ln())
    }

    /// Adds `scale *` the gradient of [`ToyMlm::pvp_loss`] into `grad`.
    pub fn pvp_loss_grad(
        &self,
        query: &ClozeQuery,
        gold_index: usize,
        grad: &mut [f64],
        scale: f64,
    ) -> Result<f64> {
        let layout = self.layout();
        let d = self.cfg.dim;
        let (cache, log_probs, scores) = self.pvp_forward(query)?;
        let mut probs = scores.clone();
        softmax_in_place(&mut probs);
        let loss = -probs[gold_index].ln();

        // d loss / d score
        let mut d_scores = probs;
        d_scores[gold_index] -= 1.0;
        // d loss / d log-prob, sparse over candidate tokens per mask position
        let mut d_lp: Vec<Vec<(usize, f64)>> = vec![Vec::new(); query.mask_positions().len()];
        for (label, tokens) in query.candidates().iter().enumerate() {
            let per_token = d_scores[label] / tokens.len() as f64;
            for (j, id) in tokens.iter().enumerate() {
                d_lp[j].push((*id as usize, per_token));
            }
        }

        let wte = layout.wte();
        let mut d_xf = vec![0.0; cache.t * d];
        for (j, pos) in query.mask_positions().iter().enumerate() {
            if d_lp[j].is_empty() {
                continue;
            }
            // log-softmax backward: d_logit = g - softmax * sum(g)
            let g_sum: f64 = d_lp[j].iter().map(|(_, g)| g).sum();
            let mut d_logits: Vec<f64> = log_probs[j].iter().map(|lp| -lp.exp() * g_sum).collect();
            for (id, g) in &d_lp[j] {
                d_logits[*id] += g;
            }
            outer_acc(
                &mut grad[wte.clone()],
                &d_logits,
                &cache.xf[pos * d..(pos + 1) * d],
                d,
                scale,
            );
            matvec_transpose_acc(
                &self.params[wte.clone()],
                &d_logits,
                self.vocab_size,
                d,
                &mut d_xf[pos * d..(pos + 1) * d],
            );
        }
        self.backward(&cache, &d_xf, grad, scale);
        Ok(loss)
    }

    /// Masked-token cross-entropy on a randomly corrupted copy of the
    /// sequence (the auxiliary objective).
    pub fn aux_loss_grad(
        &self,
        token_ids: &[u32],
        rng: &mut ChaCha8Rng,
        grad: Option<&mut [f64]>,
        scale: f64,
    ) -> Result<f64> {
        use rand::Rng;
        self.check_ids(token_ids)?;
        let maskable: Vec<usize> = token_ids
            .iter()
            .enumerate()
            .filter(|(_, id)| {
                ![Tokenizer::MASK_ID, Tokenizer::SEP_ID, Tokenizer::PAD_ID].contains(id)
            })
            .map(|(i, _)| i)
            .collect();
        if maskable.is_empty() {
            return Ok(0.0);
        }
        let mut selected: Vec<usize> = maskable
            .iter()
            .copied()
            .filter(|_| rng.gen::<f64>() < AUX_MASK_RATE)
            .collect();
        if selected.is_empty() {
            selected.push(maskable[rng.gen_range(0..maskable.len())]);
        }
        let mut corrupted = token_ids.to_vec();
        for pos in &selected {
            corrupted[*pos] = Tokenizer::MASK_ID;
        }
        let cache = self.forward(&corrupted);
        let layout = self.layout();
        let d = self.cfg.dim;
        let norm = 1.0 / selected.len() as f64;
        let mut loss = 0.0;
        let mut d_xf = vec![0.0; cache.t * d];
        let mut want_grad = grad;
        for pos in &selected {
            let logits = self.logits_at(&cache, *pos);
            let lp = log_softmax(&logits);
            let target = token_ids[*pos] as usize;
            loss -= lp[target] * norm;
            if let Some(grad) = want_grad.as_deref_mut() {
                let mut d_logits: Vec<f64> = lp.iter().map(|l| l.exp() * norm).collect();
                d_logits[target] -= norm;
                outer_acc(
                    &mut grad[layout.wte()],
                    &d_logits,
                    &cache.xf[pos * d..(pos + 1) * d],
                    d,
                    scale,
                );
                matvec_transpose_acc(
                    &self.params[layout.wte()],
                    &d_logits,
                    self.vocab_size,
                    d,
                    &mut d_xf[pos * d..(pos + 1) * d],
                );
            }
        }
        if let Some(grad) = want_grad {
            self.backward(&cache, &d_xf, grad, scale);
        }
        Ok(loss)
    }

    /// Cross-entropy of the classifier head against a target distribution.
    pub fn cls_loss(&self, token_ids: &[u32], target: &[f64; 3]) -> Result<f64> {
        self.check_ids(token_ids)?;
        let cache = self.forward(token_ids);
        let mut probs = self.cls_logits(&cache).to_vec();
        softmax_in_place(&mut probs);
        Ok(-target
            .iter()
            .zip(&probs)
            .map(|(t, p)| if *t > 0.0 { t * p.ln() } else { 0.0 })
            .sum::<f64>())
    }

    /// Adds `scale *` the gradient of [`ToyMlm::cls_loss`] into `grad`.
    pub fn cls_loss_grad(
        &self,
        token_ids: &[u32],
        target: &[f64; 3],
        grad: &mut [f64],
        scale: f64,
    ) -> Result<f64> {
        self.check_ids(token_ids)?;
        let layout = self.layout();
        let d = self.cfg.dim;
        let cache = self.forward(token_ids);
        let logits = self.cls_logits(&cache);
        let mut probs = logits.to_vec();
        softmax_in_place(&mut probs);
        let loss = -target
            .iter()
            .zip(&probs)
            .map(|(t, p)| if *t > 0.0 { t * p.ln() } else { 0.0 })
            .sum::<f64>();
        let d_logits: Vec<f64> = probs.iter().zip(target).map(|(p, t)| p - t).collect();
        outer_acc(&mut grad[layout.wcls()], &d_logits, &cache.xf[0..d], d, scale);
        for (o, g) in d_logits.iter().enumerate() {
            grad[layout.bcls().start + o] += scale * g;
        }
        let mut d_xf = vec![0.0; cache.t * d];
        matvec_transpose_acc(
            &self.params[layout.wcls()],
            &d_logits,
            3,
            d,
            &mut d_xf[0..d],
        );
        self.backward(&cache, &d_xf, grad, scale);
        Ok(loss)
    }
}

impl ScorerModel for ToyMlm {
    fn score(&self, query: &ClozeQuery) -> Result<LabelScores> {
        let (_, _, scores) = self.pvp_forward(query)?;
        LabelScores::new(scores)
    }
}

impl PairClassifier for ToyMlm {
    fn classify(&self, encoding: &PairEncoding) -> Result<LabelScores> {
        self.check_ids(encoding.token_ids())?;
        let cache = self.forward(encoding.token_ids());
        LabelScores::new(self.cls_logits(&cache).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{build_tokenizer_for_task, make_query};
    use crate::data::{Dataset, Example, Label, LabeledExample, Provenance, RequirementPair};
    use crate::pvp::{builtin_patterns, Pvp, Verbalizer};

    fn tiny_config() -> MlmConfig {
        MlmConfig {
            dim: 6,
            layers: 2,
            heads: 2,
            ffn_mult: 2,
            max_positions: 64,
        }
    }

    fn fixture() -> (Dataset<LabeledExample>, Pvp, crate::backend::Tokenizer) {
        let make = |id: &str, r1: &str, r2: &str, label| {
            LabeledExample::new(RequirementPair::new(id, r1, r2).unwrap(), label)
        };
        let ds = Dataset::new(
            vec![
                make(
                    "a",
                    "The UAV shall fly home.",
                    "The UAV shall not fly home.",
                    Label::Conflict,
                ),
                make(
                    "b",
                    "The UAV shall record video.",
                    "The drone shall capture video.",
                    Label::Duplicate,
                ),
            ],
            Provenance::Train,
        )
        .unwrap();
        let pvp = Pvp::new(
            builtin_patterns().remove(2),
            Verbalizer::for_task("vt", ["No", "Yes", "not related"]).unwrap(),
        );
        let tok = build_tokenizer_for_task(&ds, std::slice::from_ref(&pvp)).unwrap();
        (ds, pvp, tok)
    }

    #[test]
    fn mask_distributions_normalize() {
        let (ds, pvp, tok) = fixture();
        let model = ToyMlm::new(tiny_config(), tok.vocab_size(), 5).unwrap();
        let query = make_query(&pvp, ds.examples()[0].pair(), &tok, 64).unwrap();
        for lp in model.mask_distributions(&query).unwrap() {
            let lse: f64 = lp.iter().map(|l| l.exp()).sum();
            assert!((lse - 1.0).abs() < 1e-6, "sum {lse}");
            assert!(lp.iter().all(|l| l.is_finite()));
        }
    }

    #[test]
    fn score_is_deterministic_for_fixed_params() {
        let (ds, pvp, tok) = fixture();
        let model = ToyMlm::new(tiny_config(), tok.vocab_size(), 5).unwrap();
        let query = make_query(&pvp, ds.examples()[0].pair(), &tok, 64).unwrap();
        let a = model.score(&query).unwrap();
        let b = model.score(&query).unwrap();
        assert_eq!(a.scores(), b.scores());
    }

    #[test]
    fn identical_seeds_give_identical_params() {
        let a = ToyMlm::new(tiny_config(), 20, 9).unwrap();
        let b = ToyMlm::new(tiny_config(), 20, 9).unwrap();
        assert_eq!(a.params(), b.params());
        let c = ToyMlm::new(tiny_config(), 20, 10).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn snapshot_round_trip_is_bit_identical() {
        let (ds, pvp, tok) = fixture();
        let model = ToyMlm::new(tiny_config(), tok.vocab_size(), 5).unwrap();
        let restored = ToyMlm::from_snapshot(model.snapshot()).unwrap();
        let query = make_query(&pvp, ds.examples()[1].pair(), &tok, 64).unwrap();
        assert_eq!(
            model.score(&query).unwrap().scores(),
            restored.score(&query).unwrap().scores()
        );
    }

    fn numeric_grad(
        model: &ToyMlm,
        loss: impl Fn(&ToyMlm) -> f64,
        step: f64,
    ) -> Vec<f64> {
        let mut probe = model.clone();
        let n = probe.param_count();
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + step;
            let up = loss(&probe);
            probe.params_mut()[i] = orig - step;
            let down = loss(&probe);
            probe.params_mut()[i] = orig;
            grad[i] = (up - down) / (2.0 * step);
        }
        grad
    }

    // Per-tensor L2 relative error; entrywise comparison drowns in central
    // difference truncation noise once the true entry is ~1e-7.
    fn assert_grad_close(model: &ToyMlm, analytic: &[f64], numeric: &[f64], tol: f64) {
        for (name, range) in model.tensor_ranges() {
            let mut err = 0.0f64;
            let mut norm_a = 0.0f64;
            let mut norm_n = 0.0f64;
            for i in range {
                err += (analytic[i] - numeric[i]).powi(2);
                norm_a += analytic[i].powi(2);
                norm_n += numeric[i].powi(2);
            }
            let rel = err.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(1e-8);
            assert!(rel <= tol, "tensor {name}: relative error {rel}");
        }
    }

    #[test]
    fn pvp_gradient_matches_finite_differences() {
        let (ds, pvp, tok) = fixture();
        let model = ToyMlm::new(tiny_config(), tok.vocab_size(), 17).unwrap();
        let query = make_query(&pvp, ds.examples()[0].pair(), &tok, 64).unwrap();
        let mut analytic = vec![0.0; model.param_count()];
        model.pvp_loss_grad(&query, 0, &mut analytic, 1.0).unwrap();
        let numeric = numeric_grad(&model, |m| m.pvp_loss(&query, 0).unwrap(), 1e-4);
        assert_grad_close(&model, &analytic, &numeric, 1e-4);
    }

    #[test]
    fn cls_gradient_matches_finite_differences() {
        let (ds, _, tok) = fixture();
        let model = ToyMlm::new(tiny_config(), tok.vocab_size(), 23).unwrap();
        let enc = crate::backend::encode_pair(ds.examples()[1].pair(), &tok, 64);
        let target = [0.2, 0.5, 0.3];
        let mut analytic = vec![0.0; model.param_count()];
        model
            .cls_loss_grad(enc.token_ids(), &target, &mut analytic, 1.0)
            .unwrap();
        let numeric = numeric_grad(
            &model,
            |m| m.cls_loss(enc.token_ids(), &target).unwrap(),
            1e-4,
        );
        assert_grad_close(&model, &analytic, &numeric, 1e-4);
    }

    #[test]
    fn aux_gradient_matches_finite_differences() {
        let (ds, pvp, tok) = fixture();
        let model = ToyMlm::new(tiny_config(), tok.vocab_size(), 31).unwrap();
        let query = make_query(&pvp, ds.examples()[0].pair(), &tok, 64).unwrap();
        let ids = query.token_ids().to_vec();
        // fix the corruption mask by reusing an identically seeded rng
        let mut analytic = vec![0.0; model.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        model
            .aux_loss_grad(&ids, &mut rng, Some(&mut analytic), 1.0)
            .unwrap();
        let numeric = numeric_grad(
            &model,
            |m| {
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                m.aux_loss_grad(&ids, &mut rng, None, 1.0).unwrap()
            },
            1e-4,
        );
        assert_grad_close(&model, &analytic, &numeric, 1e-4);
    }
}
