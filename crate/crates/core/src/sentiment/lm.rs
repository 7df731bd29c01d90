use rayon::prelude::*;

use super::{encode_text, index_char, NEWLINE, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, matmul, softmax_row, Adam, Checkpoint, LayerSpec, LstmCell, LstmGrads, Model};
use crate::rng::SplitMix64;
use crate::synthdata::ReviewCorpus;

/// Embedding → LSTM → output projection over the 96-symbol vocabulary.
///
/// A document is scored from the zero state: the first character is
/// predicted from `h = 0` (bias only), each consumed character yields the
/// next prediction, and `'\n'` terminates the document.
#[derive(Debug, Clone, PartialEq)]
pub struct CharLM {
    model: Model,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub embed: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub bptt: usize,
    pub batch_size: usize,
    /// Fraction of documents held out for evaluation.
    pub holdout: f64,
    /// Global gradient-norm clip per update; 0 disables.
    pub clip: f64,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            embed: 16,
            hidden: 64,
            epochs: 8,
            lr: 1e-2,
            bptt: 64,
            batch_size: 8,
            holdout: 0.1,
            clip: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    /// Mean next-character cross-entropy (nats) per epoch on training docs.
    pub epoch_losses: Vec<f64>,
    pub holdout_loss: Option<f64>,
    /// Corpus indices of the held-out documents, ascending.
    pub holdout: Vec<usize>,
    pub train: Vec<usize>,
}

// Parameter slots inside the wrapped model.
const TABLE: usize = 0;
const W_IH: usize = 1;
const W_HH: usize = 2;
const BIAS: usize = 3;
const W_OUT: usize = 4;
const B_OUT: usize = 5;

impl CharLM {
    pub fn new(embed: usize, hidden: usize, seed: u64) -> Result<Self> {
        if embed == 0 || hidden == 0 {
            return Err(Error::invalid("embedding and hidden sizes must be positive"));
        }
        let layers = vec![
            LayerSpec::Embedding { vocab: VOCAB_SIZE, dim: embed },
            LayerSpec::Lstm { inputs: embed, hidden },
            LayerSpec::Dense { inputs: hidden, outputs: VOCAB_SIZE },
        ];
        Ok(Self { model: Model::new(&[1], layers, seed)? })
    }

    pub fn embed_dim(&self) -> usize {
        self.model.params()[TABLE].value.dims()[1]
    }

    pub fn hidden(&self) -> usize {
        self.model.params()[W_HH].value.dims()[1]
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn cell(&self) -> LstmCell<'_> {
        let p = self.model.params();
        LstmCell::new(&p[W_IH].value, &p[W_HH].value, &p[BIAS].value).expect("validated at construction")
    }

    fn embedding(&self, token: usize) -> &[f32] {
        let e = self.embed_dim();
        &self.model.params()[TABLE].value.data()[token * e..(token + 1) * e]
    }

    /// Next-character logits for hidden state `h`.
    pub fn logits(&self, h: &[f32]) -> Vec<f32> {
        let p = self.model.params();
        let mut out = p[B_OUT].value.data().to_vec();
        matmul(1, self.hidden(), VOCAB_SIZE, h, false, p[W_OUT].value.data(), true, &mut out, true);
        out
    }

    /// Consume one character index; returns the new `(h, c)`.
    pub fn step(&self, token: usize, h: &[f32], c: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let cache = self.cell().forward_batch(1, self.embedding(token), h, c);
        (cache.h, cache.c)
    }

    /// Hidden state after consuming `text` from the zero state.
    pub fn encode_review(&self, text: &str) -> Result<Vec<f32>> {
        let tokens = encode_text(text)?;
        let hd = self.hidden();
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        for t in tokens {
            (h, c) = self.step(t, &h, &c);
        }
        Ok(h)
    }

    pub fn encode_reviews<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<Vec<f32>>> {
        texts.par_iter().map(|t| self.encode_review(t.as_ref())).collect()
    }

    /// Summed cross-entropy and prediction count for one document scored
    /// with its `'\n'` terminator.
    fn document_loss(&self, text: &str) -> Result<(f64, usize)> {
        let mut tokens = encode_text(text)?;
        tokens.push(NEWLINE);
        let hd = self.hidden();
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        let mut total = 0.0;
        for (k, &target) in tokens.iter().enumerate() {
            let logits = self.logits(&h);
            total += f64::from(log_sum_exp(&logits) - logits[target]);
            if k + 1 < tokens.len() {
                (h, c) = self.step(target, &h, &c);
            }
        }
        Ok((total, tokens.len()))
    }

    /// Mean per-character cross-entropy over `texts`.
    pub fn mean_loss<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<f64> {
        let parts = texts
            .par_iter()
            .map(|t| self.document_loss(t.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let (sum, count) = parts.iter().fold((0.0, 0), |(s, n), &(a, b)| (s + a, n + b));
        if count == 0 {
            return Err(Error::invalid("no documents to score"));
        }
        Ok(sum / count as f64)
    }

    /// Sample `length` characters from the zero state. Temperature 0 takes
    /// the argmax. With `clamp = (unit, value)` the hidden unit is
    /// overwritten after every step (and in the initial state), before the
    /// output projection and before the state feeds the next step. A
    /// generated `'\n'` ends a document and resets the state.
    pub fn generate(&self, length: usize, temperature: f64, seed: u64, clamp: Option<(usize, f32)>) -> Result<String> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::invalid("temperature must be finite and non-negative"));
        }
        let hd = self.hidden();
        if let Some((unit, _)) = clamp {
            if unit >= hd {
                return Err(Error::OutOfRange { index: unit, size: hd });
            }
        }
        let apply = |h: &mut [f32]| {
            if let Some((unit, value)) = clamp {
                h[unit] = value;
            }
        };
        let mut rng = SplitMix64::new(seed);
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        apply(&mut h);
        let mut out = String::with_capacity(length);
        for _ in 0..length {
            let logits = self.logits(&h);
            let token = if temperature == 0.0 {
                crate::nn::argmax(&logits)
            } else {
                let scaled: Vec<f64> = logits.iter().map(|&l| f64::from(l) / temperature).collect();
                sample(&softmax_row(&scaled), &mut rng)
            };
            out.push(index_char(token)?);
            if token == NEWLINE {
                h.fill(0.0);
                c.fill(0.0);
            } else {
                (h, c) = self.step(token, &h, &c);
            }
            apply(&mut h);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        ck.set("kind", "charlm");
        ck.set("vocab", "newline+ascii32-126");
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let model = Model::from_checkpoint(ck)?;
        match model.layers() {
            [LayerSpec::Embedding { vocab: VOCAB_SIZE, dim }, LayerSpec::Lstm { inputs, hidden }, LayerSpec::Dense { inputs: di, outputs: VOCAB_SIZE }]
                if dim == inputs && hidden == di =>
            {
                Ok(Self { model })
            }
            _ => Err(Error::invalid("checkpoint is not a character language model")),
        }
    }
}

fn sample(probs: &[f64], rng: &mut SplitMix64) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Gradient buffers for one update.
struct Grads {
    table: Vec<f32>,
    w_ih: Vec<f32>,
    w_hh: Vec<f32>,
    bias: Vec<f32>,
    w_out: Vec<f32>,
    b_out: Vec<f32>,
}

impl Grads {
    fn zeros(lm: &CharLM) -> Self {
        let p = lm.model.params();
        let z = |i: usize| vec![0.0f32; p[i].value.len()];
        Self {
            table: z(TABLE),
            w_ih: z(W_IH),
            w_hh: z(W_HH),
            bias: z(BIAS),
            w_out: z(W_OUT),
            b_out: z(B_OUT),
        }
    }

    fn buffers(&mut self) -> [&mut Vec<f32>; 6] {
        [
            &mut self.table,
            &mut self.w_ih,
            &mut self.w_hh,
            &mut self.bias,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }
}

/// Lock-step state of a batch of documents.
struct Batch<'a> {
    docs: Vec<&'a [usize]>,
    h: Vec<f32>,
    c: Vec<f32>,
}

impl CharLM {
    /// Cross-entropy of `logits [B, V]` against the targets of valid rows;
    /// writes `softmax − onehot` scaled by `scale` into `dlogits`.
    fn xent_rows(logits: &[f32], targets: &[Option<usize>], scale: f32, dlogits: &mut [f32]) -> f64 {
        let mut loss = 0.0;
        for ((row, d), target) in logits.chunks(VOCAB_SIZE).zip(dlogits.chunks_mut(VOCAB_SIZE)).zip(targets) {
            match target {
                Some(t) => {
                    let p = softmax_row(row);
                    loss += f64::from(log_sum_exp(row) - row[*t]);
                    for (dv, pv) in d.iter_mut().zip(p) {
                        *dv = pv * scale;
                    }
                    d[*t] -= scale;
                }
                None => d.fill(0.0),
            }
        }
        loss
    }

    /// Forward and backward over steps `k0..k1` of a batch; returns the
    /// summed loss. Step `k` consumes character `k` and predicts `k + 1`.
    fn window(&self, batch: &mut Batch<'_>, k0: usize, k1: usize, scale: f32, g: &mut Grads) -> f64 {
        let b = batch.docs.len();
        let (e, hd) = (self.embed_dim(), self.hidden());
        let cell = self.cell();
        let w_out = self.model.params()[W_OUT].value.data();
        let b_out = self.model.params()[B_OUT].value.data();
        let mut caches = Vec::with_capacity(k1 - k0);
        let mut tokens = Vec::with_capacity(k1 - k0);
        let mut dlogits_all = Vec::with_capacity(k1 - k0);
        let mut loss = 0.0;
        for k in k0..k1 {
            let toks: Vec<usize> = batch.docs.iter().map(|d| d.get(k).copied().unwrap_or(NEWLINE)).collect();
            let mut x = Vec::with_capacity(b * e);
            for &t in &toks {
                x.extend_from_slice(self.embedding(t));
            }
            let cache = cell.forward_batch(b, &x, &batch.h, &batch.c);
            let mut logits = Vec::with_capacity(b * VOCAB_SIZE);
            for _ in 0..b {
                logits.extend_from_slice(b_out);
            }
            matmul(b, hd, VOCAB_SIZE, &cache.h, false, w_out, true, &mut logits, true);
            let targets: Vec<Option<usize>> = batch.docs.iter().map(|d| d.get(k + 1).copied()).collect();
            let mut dlogits = vec![0.0; b * VOCAB_SIZE];
            loss += Self::xent_rows(&logits, &targets, scale, &mut dlogits);
            batch.h.clone_from(&cache.h);
            batch.c.clone_from(&cache.c);
            caches.push(cache);
            tokens.push(toks);
            dlogits_all.push(dlogits);
        }

        let mut dh_next = vec![0.0f32; b * hd];
        let mut dc_next = vec![0.0f32; b * hd];
        let mut lstm_grads = LstmGrads {
            w_ih: &mut g.w_ih,
            w_hh: &mut g.w_hh,
            bias: &mut g.bias,
        };
        for ((cache, toks), dlogits) in caches.iter().zip(&tokens).zip(&dlogits_all).rev() {
            matmul(VOCAB_SIZE, b, hd, dlogits, true, &cache.h, false, &mut g.w_out, true);
            for row in dlogits.chunks(VOCAB_SIZE) {
                for (acc, &d) in g.b_out.iter_mut().zip(row) {
                    *acc += d;
                }
            }
            let mut dh = dh_next;
            matmul(b, VOCAB_SIZE, hd, dlogits, false, w_out, false, &mut dh, true);
            let (dx, dh_prev, dc_prev) = cell.backward_batch(cache, &dh, &dc_next, &mut lstm_grads);
            for (&t, row) in toks.iter().zip(dx.chunks(e)) {
                for (acc, &d) in g.table[t * e..(t + 1) * e].iter_mut().zip(row) {
                    *acc += d;
                }
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        loss
    }
}

fn clip_norm(g: &mut Grads, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = g
        .buffers()
        .iter()
        .flat_map(|b| b.iter())
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        for buf in g.buffers() {
            buf.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Split document indices into (train, holdout) with a seeded shuffle.
fn split_docs(n: usize, holdout: f64, rng: &mut SplitMix64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_hold = ((n as f64 * holdout).round() as usize).min(n.saturating_sub(1));
    let mut hold = order[..n_hold].to_vec();
    let mut train = order[n_hold..].to_vec();
    hold.sort_unstable();
    train.sort_unstable();
    (train, hold)
}

/// Train with Adam and truncated backpropagation through time. Documents
/// run in lock-step batches; the recurrent state is carried across windows
/// of `bptt` steps but gradients are cut at window boundaries.
pub fn train_char_lm(corpus: &ReviewCorpus, cfg: &LmConfig) -> Result<(CharLM, LmReport)> {
    if corpus.docs.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    if cfg.bptt == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("bptt length and batch size must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.holdout) {
        return Err(Error::invalid("holdout fraction must lie in [0, 1)"));
    }
    let encoded = corpus
        .docs
        .iter()
        .map(|d| {
            let mut t = encode_text(&d.text)?;
            t.push(NEWLINE);
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut lm = CharLM::new(cfg.embed, cfg.hidden, cfg.seed)?;
    let mut rng = SplitMix64::new(cfg.seed);
    let (train, holdout) = split_docs(encoded.len(), cfg.holdout, &mut rng.split("lm-holdout"));
    let mut order_rng = rng.split("lm-order");
    let adam = Adam::new(cfg.lr);
    let hd = cfg.hidden;
    let mut step = 0u64;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order = train.clone();

    for _ in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let docs: Vec<&[usize]> = chunk.iter().map(|&i| encoded[i].as_slice()).collect();
            let steps = docs.iter().map(|d| d.len() - 1).max().unwrap_or(0);
            let mut batch = Batch {
                h: vec![0.0; docs.len() * hd],
                c: vec![0.0; docs.len() * hd],
                docs,
            };
            let mut k0 = 0;
            loop {
                let k1 = (k0 + cfg.bptt).min(steps);
                let first = k0 == 0;
                let mut n_pred: usize = batch
                    .docs
                    .iter()
                    .map(|d| (k0 + 1..=k1).filter(|&t| t < d.len()).count())
                    .sum();
                if first {
                    n_pred += batch.docs.len();
                }
                if n_pred == 0 {
                    break;
                }
                let scale = 1.0 / n_pred as f32;
                let mut g = Grads::zeros(&lm);
                let mut loss = 0.0;
                if first {
                    // The first character of every document is predicted
                    // from the zero state, i.e. from the output bias alone.
                    let b_out = lm.model.params()[B_OUT].value.data().to_vec();
                    let logits: Vec<f32> = batch.docs.iter().flat_map(|_| b_out.iter().copied()).collect();
                    let targets: Vec<Option<usize>> = batch.docs.iter().map(|d| Some(d[0])).collect();
                    let mut d = vec![0.0; logits.len()];
                    loss += CharLM::xent_rows(&logits, &targets, scale, &mut d);
                    for row in d.chunks(VOCAB_SIZE) {
                        for (acc, &v) in g.b_out.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                }
                loss += lm.window(&mut batch, k0, k1, scale, &mut g);
                clip_norm(&mut g, cfg.clip);
                for (p, buf) in lm.model.params_mut().iter_mut().zip(g.buffers()) {
                    p.grad.data_mut().copy_from_slice(buf);
                }
                step += 1;
                adam.step(lm.model.params_mut(), step);
                total += loss;
                count += n_pred;
                if k1 >= steps {
                    break;
                }
                k0 = k1;
            }
        }
        epoch_losses.push(total / count.max(1) as f64);
    }

    let holdout_loss = if holdout.is_empty() {
        None
    } else {
        let texts: Vec<&str> = holdout.iter().map(|&i| corpus.docs[i].text.as_str()).collect();
        Some(lm.mean_loss(&texts)?)
    };
    Ok((
        lm,
        LmReport {
            epoch_losses,
            holdout_loss,
            holdout,
            train,
        },
    ))
}
