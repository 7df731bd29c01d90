//! Continuous bag-of-words embeddings over the relational corpus, with
//! cosine nearest-neighbour and vector-offset analogy queries.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Adam, Checkpoint, Parameter, Tensor};
use crate::rng::SplitMix64;
use crate::synthdata::RelationalCorpus;

/// Ordered unique words with a reverse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Rejects duplicates and empty or whitespace-bearing words.
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("`{w}` is not a single token")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate word `{w}`")));
            }
        }
        Ok(Self { words, index })
    }

    /// Sorted vocabulary of a corpus.
    pub fn from_corpus(corpus: &RelationalCorpus) -> Result<Self> {
        Self::new(corpus.vocabulary().into_iter().map(String::from).collect())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, i: usize) -> Result<&str> {
        self.words
            .get(i)
            .map(String::as_str)
            .ok_or(Error::OutOfRange { index: i, size: self.len() })
    }

    pub fn lookup(&self, word: &str) -> Result<usize> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

pub fn one_hot(i: usize, size: usize) -> Result<Vec<f32>> {
    if i >= size {
        return Err(Error::OutOfRange { index: i, size });
    }
    let mut v = vec![0.0; size];
    v[i] = 1.0;
    Ok(v)
}

/// Input matrix `[V, m]` (the word codes) and output matrix `[m, V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub input: Tensor<f32>,
    pub output: Tensor<f32>,
}

impl EmbeddingTable {
    pub fn vocab_size(&self) -> usize {
        self.input.dims()[0]
    }

    pub fn dim(&self) -> usize {
        self.input.dims()[1]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let m = self.dim();
        &self.input.data()[i * m..(i + 1) * m]
    }

    /// Word2vec-style start: input rows `U(±0.5/m)`, output matrix zero.
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed).split("cbow-init");
        let r = 0.5 / dim as f64;
        let data = (0..vocab_size * dim).map(|_| rng.uniform(-r, r) as f32).collect();
        Self {
            input: Tensor::new(vec![vocab_size, dim], data).expect("dims match data"),
            output: Tensor::zeros(&[dim, vocab_size]),
        }
    }
}

/// A vocabulary with its embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    pub vocab: Vocab,
    pub table: EmbeddingTable,
}

fn cosine(a: &[f64], b: &[f32]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let y = f64::from(y);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (na > 0.0 && nb > 0.0).then(|| dot / (na.sqrt() * nb.sqrt()))
}

impl WordEmbeddings {
    /// Hand-built table from `(word, code)` rows; the output matrix is zero.
    pub fn from_rows(rows: &[(&str, &[f32])]) -> Result<Self> {
        let dim = rows.first().map(|r| r.1.len()).unwrap_or(0);
        if dim < 2 || rows.iter().any(|r| r.1.len() != dim) {
            return Err(Error::invalid("rows need a common dimension of at least 2"));
        }
        let vocab = Vocab::new(rows.iter().map(|r| r.0.to_string()).collect())?;
        let data = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
        Ok(Self {
            table: EmbeddingTable {
                input: Tensor::new(vec![rows.len(), dim], data)?,
                output: Tensor::zeros(&[dim, rows.len()]),
            },
            vocab,
        })
    }

    pub fn vector(&self, word: &str) -> Result<&[f32]> {
        Ok(self.table.row(self.vocab.lookup(word)?))
    }

    /// Top `k` words by cosine to `query`, highest first, ties to the lower
    /// vocabulary index. Excluded words are removed before ranking.
    pub fn nearest(&self, query: &[f64], k: usize, exclude: &[&str]) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if query.len() != self.table.dim() {
            return Err(Error::Shape(format!(
                "query has {} entries, table dimension is {}",
                query.len(),
                self.table.dim()
            )));
        }
        if query.iter().all(|&q| q == 0.0) {
            return Err(Error::invalid("zero query vector has no direction"));
        }
        let excluded = exclude
            .iter()
            .map(|w| self.vocab.lookup(w))
            .collect::<Result<BTreeSet<_>>>()?;
        let mut scored: Vec<(usize, f64)> = (0..self.vocab.len())
            .filter(|i| !excluded.contains(i))
            .filter_map(|i| cosine(query, self.table.row(i)).map(|c| (i, c)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(i, c)| (self.vocab.words[i].clone(), c))
            .collect())
    }

    /// `v_b − v_a + v_c`, evaluated left to right.
    pub fn analogy_query(&self, a: &str, b: &str, c: &str) -> Result<Vec<f64>> {
        let (va, vb, vc) = (self.vector(a)?, self.vector(b)?, self.vector(c)?);
        Ok((0..va.len())
            .map(|j| (f64::from(vb[j]) - f64::from(va[j])) + f64::from(vc[j]))
            .collect())
    }

    /// `a::b` as `c::?`, excluding the three query words.
    pub fn analogy(&self, a: &str, b: &str, c: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let query = self.analogy_query(a, b, c)?;
        self.nearest(&query, k, &[a, b, c])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.set("kind", "embeddings");
        ck.set("vocab", self.vocab.words.join(" "));
        ck.tensors.push(("input".into(), self.table.input.clone()));
        ck.tensors.push(("output".into(), self.table.output.clone()));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let kind = ck.require("kind")?;
        if kind != "embeddings" {
            return Err(Error::invalid(format!("checkpoint holds `{kind}`, not embeddings")));
        }
        let vocab = Vocab::new(ck.require("vocab")?.split(' ').map(String::from).collect())?;
        let input = ck.tensor("input")?.clone();
        let output = ck.tensor("output")?.clone();
        let (v, m) = (vocab.len(), input.dims().get(1).copied().unwrap_or(0));
        if input.dims() != [v, m] || output.dims() != [m, v] || m < 2 {
            return Err(Error::Shape(format!(
                "tables {:?} and {:?} do not fit a vocabulary of {v}",
                input.dims(),
                output.dims()
            )));
        }
        Ok(Self { vocab, table: EmbeddingTable { input, output } })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbowConfig {
    /// Context words on each side, within the sentence.
    pub window: usize,
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Center positions per Adam step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        Self { window: 2, dim: 16, epochs: 10, lr: 1e-2, batch_size: 16, seed: 0 }
    }
}

/// One training example: center word and the bag of its context words.
struct Example {
    center: usize,
    context: Vec<usize>,
}

fn examples(corpus: &RelationalCorpus, vocab: &Vocab, window: usize) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for sentence in &corpus.sentences {
        let ids = sentence
            .split_whitespace()
            .map(|w| vocab.lookup(w))
            .collect::<Result<Vec<_>>>()?;
        for (i, &center) in ids.iter().enumerate() {
            let lo = i.saturating_sub(window);
            let hi = (i + window + 1).min(ids.len());
            let context: Vec<usize> = (lo..hi).filter(|&j| j != i).map(|j| ids[j]).collect();
            if !context.is_empty() {
                out.push(Example { center, context });
            }
        }
    }
    Ok(out)
}

/// Mean cross-entropy of a batch; accumulates gradients into `grads`
/// (input `[V, m]`, output `[m, V]`) scaled by `1 / batch`.
fn batch_loss(input: &Tensor<f32>, output: &Tensor<f32>, batch: &[&Example], grads: &mut [Tensor<f32>; 2]) -> f64 {
    let (v, m) = (input.dims()[0], input.dims()[1]);
    let (w_in, w_out) = (input.data(), output.data());
    let scale = 1.0 / batch.len() as f32;
    let mut total = 0.0;
    let mut hidden = vec![0.0f32; m];
    let mut logits = vec![0.0f32; v];
    let mut dh = vec![0.0f32; m];
    for ex in batch {
        hidden.iter_mut().for_each(|x| *x = 0.0);
        for &c in &ex.context {
            for (h, &w) in hidden.iter_mut().zip(&w_in[c * m..(c + 1) * m]) {
                *h += w;
            }
        }
        logits.iter_mut().for_each(|x| *x = 0.0);
        for (j, &h) in hidden.iter().enumerate() {
            for (l, &w) in logits.iter_mut().zip(&w_out[j * v..(j + 1) * v]) {
                *l += h * w;
            }
        }
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let z: f32 = logits.iter().map(|&l| (l - max).exp()).sum();
        total += f64::from(z.ln() + max - logits[ex.center]);
        // Softmax minus one-hot, scaled for the batch mean.
        for (i, l) in logits.iter_mut().enumerate() {
            *l = ((*l - max).exp() / z - if i == ex.center { 1.0 } else { 0.0 }) * scale;
        }
        let [g_in, g_out] = grads;
        let g_out = g_out.data_mut();
        for j in 0..m {
            let row = &w_out[j * v..(j + 1) * v];
            dh[j] = row.iter().zip(&logits).map(|(&w, &d)| w * d).sum();
            for (g, &d) in g_out[j * v..(j + 1) * v].iter_mut().zip(&logits) {
                *g += hidden[j] * d;
            }
        }
        let g_in = g_in.data_mut();
        for &c in &ex.context {
            for (g, &d) in g_in[c * m..(c + 1) * m].iter_mut().zip(&dh) {
                *g += d;
            }
        }
    }
    total / batch.len() as f64
}

/// Full-softmax CBOW trained with Adam. Returns the embeddings and the mean
/// training loss of each epoch.
pub fn train_cbow(corpus: &RelationalCorpus, cfg: &CbowConfig) -> Result<(WordEmbeddings, Vec<f64>)> {
    if corpus.sentences.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    if cfg.window == 0 || cfg.dim < 2 || cfg.batch_size == 0 {
        return Err(Error::invalid("window ≥ 1, dim ≥ 2 and batch size ≥ 1 required"));
    }
    let vocab = Vocab::from_corpus(corpus)?;
    let data = examples(corpus, &vocab, cfg.window)?;
    if data.is_empty() {
        return Err(Error::invalid("no word has a context within its sentence"));
    }
    let init = EmbeddingTable::random(vocab.len(), cfg.dim, cfg.seed);
    let mut params = [
        Parameter::new("input", init.input),
        Parameter::new("output", init.output),
    ];
    let adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = SplitMix64::new(cfg.seed).split("cbow-order");
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let mut grads = [
                Tensor::zeros(params[0].value.dims()),
                Tensor::zeros(params[1].value.dims()),
            ];
            sum += batch_loss(&params[0].value, &params[1].value, &batch, &mut grads) * batch.len() as f64;
            let [g_in, g_out] = grads;
            params[0].grad = g_in;
            params[1].grad = g_out;
            step += 1;
            adam.step(&mut params, step);
        }
        losses.push(sum / data.len() as f64);
    }
    let [input, output] = params;
    Ok((
        WordEmbeddings {
            vocab,
            table: EmbeddingTable { input: input.value, output: output.value },
        },
        losses,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{gen_relational, DEFAULT_PAIRS};

    #[test]
    fn one_hot_contract() {
        assert_eq!(one_hot(0, 3).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(one_hot(2, 3).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(one_hot(3, 3).is_err());
        let mut sum = vec![0.0; 7];
        for i in 0..7 {
            let h = one_hot(i, 7).unwrap();
            let arg = h.iter().position(|&x| x == 1.0).unwrap();
            assert_eq!(arg, i);
            sum.iter_mut().zip(&h).for_each(|(s, x)| *s += x);
        }
        assert_eq!(sum, vec![1.0; 7]);
    }

    #[test]
    fn vocab_round_trips_and_rejects_duplicates() {
        let v = Vocab::new(vec!["b".into(), "a".into()]).unwrap();
        for i in 0..v.len() {
            assert_eq!(v.lookup(v.word(i).unwrap()).unwrap(), i);
        }
        assert!(matches!(v.lookup("zebra"), Err(Error::UnknownWord(w)) if w == "zebra"));
        assert!(Vocab::new(vec!["a".into(), "a".into()]).is_err());
        assert!(Vocab::new(vec!["a b".into()]).is_err());
    }

    #[test]
    fn hand_built_nearest_ranking() {
        let e = WordEmbeddings::from_rows(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[-1.0, 0.0])]).unwrap();
        let ranked: Vec<String> = e.nearest(&[1.0, 0.1], 3, &[]).unwrap().into_iter().map(|r| r.0).collect();
        assert_eq!(ranked, ["a", "b", "c"]);
        let top = e.nearest(&[1.0, 0.0], 1, &[]).unwrap();
        assert_eq!(top[0], ("a".to_string(), 1.0));
        assert_ne!(e.nearest(&[1.0, 0.0], 1, &["a"]).unwrap()[0].0, "a");
        assert!(e.nearest(&[0.0, 0.0], 1, &[]).is_err());
        assert!(e.nearest(&[1.0, 0.0], 0, &[]).is_err());
        assert!(e.nearest(&[1.0, 0.0], 1, &["zebra"]).is_err());
    }

    #[test]
    fn ties_go_to_the_lower_index() {
        let e = WordEmbeddings::from_rows(&[("x", &[0.0, 1.0]), ("y", &[1.0, 0.0]), ("z", &[0.0, 2.0])]).unwrap();
        let ranked: Vec<String> = e.nearest(&[0.0, 1.0], 2, &[]).unwrap().into_iter().map(|r| r.0).collect();
        assert_eq!(ranked, ["x", "z"]);
    }

    fn animals() -> WordEmbeddings {
        WordEmbeddings::from_rows(&[
            ("dog", &[3.0, 6.0]),
            ("puppy", &[0.0, 1.0]),
            ("cat", &[9.0, 8.0]),
            ("kitten", &[6.0, 3.0]),
        ])
        .unwrap()
    }

    #[test]
    fn hand_built_analogy() {
        let e = animals();
        assert_eq!(e.analogy_query("dog", "puppy", "cat").unwrap(), vec![6.0, 3.0]);
        let top = &e.analogy("dog", "puppy", "cat", 1).unwrap()[0];
        assert_eq!(top.0, "kitten");
        assert!((top.1 - 1.0).abs() < 1e-12);
        assert!(e.analogy("dog", "wolf", "cat", 1).is_err());
    }

    #[test]
    fn analogy_with_repeated_first_term_queries_the_third() {
        let e = animals();
        let q = e.analogy_query("dog", "dog", "cat").unwrap();
        let vc: Vec<f64> = e.vector("cat").unwrap().iter().map(|&x| f64::from(x)).collect();
        assert_eq!(q, vc);
        // analogy(a, b, a) queries v_b with b excluded: kitten (6,3) is
        // closest to cat (cosine 0.966) ahead of dog (0.8).
        let top = &e.analogy("puppy", "kitten", "puppy", 1).unwrap()[0];
        assert_eq!(top.0, "cat");
    }

    #[test]
    fn zero_epochs_keep_the_seeded_initialization() {
        let corpus = gen_relational(&DEFAULT_PAIRS, 20, 1).unwrap();
        let cfg = CbowConfig { epochs: 0, seed: 9, ..CbowConfig::default() };
        let (e, losses) = train_cbow(&corpus, &cfg).unwrap();
        assert!(losses.is_empty());
        assert_eq!(e.table, EmbeddingTable::random(e.vocab.len(), 16, 9));
        let r = 0.5 / 16.0;
        assert!(e.table.input.data().iter().all(|x| x.abs() <= r));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let corpus = RelationalCorpus {
            sentences: vec!["a b c d".into(), "b d a".into()],
            pairs: vec![],
            seed: 0,
        };
        let vocab = Vocab::from_corpus(&corpus).unwrap();
        let data = examples(&corpus, &vocab, 2).unwrap();
        let batch: Vec<&Example> = data.iter().collect();
        let mut table = EmbeddingTable::random(vocab.len(), 3, 4);
        let mut rng = SplitMix64::new(2);
        table.output.data_mut().iter_mut().for_each(|w| *w = rng.uniform(-0.5, 0.5) as f32);
        let mut grads = [Tensor::zeros(table.input.dims()), Tensor::zeros(table.output.dims())];
        batch_loss(&table.input, &table.output, &batch, &mut grads);
        let eps = 1e-2f32;
        for (which, grad) in grads.iter().enumerate() {
            for i in 0..grad.data().len() {
                let probe = |delta: f32| {
                    let mut t = table.clone();
                    let w = if which == 0 { &mut t.input } else { &mut t.output };
                    w.data_mut()[i] += delta;
                    let mut g = [Tensor::zeros(t.input.dims()), Tensor::zeros(t.output.dims())];
                    batch_loss(&t.input, &t.output, &batch, &mut g)
                };
                let numeric = (probe(eps) - probe(-eps)) / (2.0 * f64::from(eps));
                let analytic = f64::from(grad.data()[i]);
                assert!((numeric - analytic).abs() < 1e-3, "{which}/{i}: {numeric} vs {analytic}");
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_persists() {
        let corpus = gen_relational(&DEFAULT_PAIRS, 20, 1).unwrap();
        let cfg = CbowConfig { epochs: 2, seed: 3, ..CbowConfig::default() };
        let (a, la) = train_cbow(&corpus, &cfg).unwrap();
        let (b, lb) = train_cbow(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la[1] < la[0]);
        let back = WordEmbeddings::from_checkpoint(
            &Checkpoint::from_bytes(&a.to_checkpoint().to_bytes().unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn rejects_bad_training_inputs() {
        let empty = RelationalCorpus { sentences: vec![], pairs: vec![], seed: 0 };
        assert!(train_cbow(&empty, &CbowConfig::default()).is_err());
        let corpus = gen_relational(&DEFAULT_PAIRS, 20, 1).unwrap();
        assert!(train_cbow(&corpus, &CbowConfig { window: 0, ..CbowConfig::default() }).is_err());
    }
}
