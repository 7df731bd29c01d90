use std::path::Path;

use super::args::{opt, optional, repeat, required, usage, CliError, CliResult, Opt, RunConfig};
use super::csv::Csv;
use crate::classifier::{train_classifier, Classifier, ClassifierArch, TrainConfig};
use crate::csv_row;
use crate::dream::{dream_compare, high_frequency_energy, maximize_activation, DreamConfig, DreamTarget, Selector};
use crate::embed::{train_cbow, CbowConfig, WordEmbeddings};
use crate::error::{Error, Result};
use crate::nn::{grad_check, standard_cases, Checkpoint, Tensor};
use crate::percept::{dominance_check, evolve, transfer_report, DrawingGenome, EvolutionConfig};
use crate::rng::SplitMix64;
use crate::sentiment::{find_sentiment_unit, fit_probe, train_char_lm, CharLM, LmConfig};
use crate::style::{transfer, StyleNet, StyleObjective, TransferConfig};
use crate::synthdata::{
    gen_glyphs, gen_relational, gen_reviews, parse_classes, read_pgm, write_pgm, GlyphClass, RelationalCorpus,
    ReviewCorpus,
};

pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub positional: &'static [&'static str],
    pub opts: &'static [Opt],
    pub run: fn(&RunConfig) -> CliResult<()>,
}

const ALL_CLASSES: &str = "circle,ring,square,triangle,cross,bar,dot-grid,chevron";

pub const COMMANDS: &[Command] = &[
    Command {
        name: "gen-glyphs",
        about: "render labelled glyph images as PGM files",
        positional: &[],
        opts: &[
            opt("classes", ALL_CLASSES, "comma-separated glyph classes"),
            opt("n", "10", "images per class"),
            opt("size", "32", "image side in pixels"),
        ],
        run: gen_glyphs_cmd,
    },
    Command {
        name: "gen-reviews",
        about: "generate the synthetic labelled review corpus",
        positional: &[],
        opts: &[opt("n", "2000", "number of reviews")],
        run: gen_reviews_cmd,
    },
    Command {
        name: "gen-relational",
        about: "generate the relational sentence corpus",
        positional: &[],
        opts: &[
            opt("pairs", "dog:puppy,cat:kitten,cow:calf,horse:foal", "base:related word pairs"),
            opt("templates", "20", "templates per slot"),
            optional("synonym", "word:synonym sharing every context of word"),
        ],
        run: gen_relational_cmd,
    },
    Command {
        name: "train-classifier",
        about: "train the glyph classifier",
        positional: &[],
        opts: &[
            opt("classes", ALL_CLASSES, "comma-separated glyph classes"),
            opt("n-train", "200", "training images per class"),
            opt("n-test", "50", "held-out images per class"),
            opt("size", "32", "image side in pixels"),
            opt("epochs", "10", "training epochs"),
            opt("batch", "32", "mini-batch size"),
            opt("lr", "0.002", "Adam learning rate"),
            opt("conv1", "8", "channels of the first conv layer"),
            opt("conv2", "16", "channels of the second conv layer"),
            opt("hidden", "64", "width of the hidden dense layer"),
        ],
        run: train_classifier_cmd,
    },
    Command {
        name: "train-lm",
        about: "train the character-level LSTM language model",
        positional: &[],
        opts: &[
            optional("reviews", "review corpus file; generated when absent"),
            opt("n-docs", "2000", "reviews to generate when --reviews is absent"),
            opt("embed", "16", "character embedding width"),
            opt("hidden", "64", "LSTM hidden width"),
            opt("epochs", "8", "training epochs"),
            opt("lr", "0.01", "Adam learning rate"),
            opt("bptt", "64", "truncated backpropagation length"),
            opt("batch", "8", "documents per batch"),
            opt("holdout", "0.1", "held-out document fraction"),
            opt("clip", "5", "gradient-norm clip, 0 disables"),
        ],
        run: train_lm_cmd,
    },
    Command {
        name: "train-embed",
        about: "train CBOW word embeddings",
        positional: &[],
        opts: &[
            optional("corpus", "relational corpus file; generated when absent"),
            opt("pairs", "dog:puppy,cat:kitten,cow:calf,horse:foal", "pairs for the generated corpus"),
            opt("templates", "20", "templates per slot for the generated corpus"),
            optional("synonym", "word:synonym added to the generated corpus"),
            opt("window", "2", "context words on each side"),
            opt("dim", "16", "embedding width"),
            opt("epochs", "10", "training epochs"),
            opt("lr", "0.01", "Adam learning rate"),
            opt("batch", "16", "center positions per step"),
        ],
        run: train_embed_cmd,
    },
    Command {
        name: "dream",
        about: "maximize a unit, channel or layer of a classifier by gradient ascent",
        positional: &[],
        opts: &[
            required("classifier", "classifier checkpoint"),
            optional("class", "class name; targets its logit"),
            optional("layer", "layer index (default: logits)"),
            optional("unit", "flat unit index within the layer"),
            optional("channel", "channel index within the layer"),
            opt("start", "grey", "grey, noise or a PGM path"),
            opt("steps", "200", "ascent steps"),
            opt("step-size", "0.05", "initial step size"),
            opt("l2", "0.0001", "L2 penalty weight"),
            opt("jitter", "0", "maximum circular shift in pixels"),
        ],
        run: dream_cmd,
    },
    Command {
        name: "dream-compare",
        about: "dream a peripheral and a deep layer from one start and compare them",
        positional: &[],
        opts: &[
            required("classifier", "classifier checkpoint"),
            opt("peripheral", "1", "peripheral layer index"),
            opt("deep", "7", "deep layer index"),
            opt("start", "grey", "grey, noise or a PGM path"),
            opt("steps", "200", "ascent steps"),
            opt("step-size", "0.05", "initial step size"),
            opt("l2", "0.0001", "L2 penalty weight"),
            opt("jitter", "0", "maximum circular shift in pixels"),
        ],
        run: dream_compare_cmd,
    },
    Command {
        name: "style",
        about: "synthesize an image matching one image's content and another's style",
        positional: &[],
        opts: &[
            required("content", "content PGM"),
            required("style", "style PGM"),
            opt("alpha", "1", "content weight"),
            opt("beta", "1", "style weight"),
            repeat("content-layer", "layer:weight (default: deepest layer)"),
            repeat("style-layer", "layer:weight (default: every layer)"),
            opt("widths", "32,64,128", "filters per conv layer of the random net"),
            opt("kernels", "3,5,7", "kernel size per conv layer"),
            opt("steps", "200", "descent steps"),
            opt("step-size", "100000", "initial step size"),
        ],
        run: style_cmd,
    },
    Command {
        name: "sentiment-probe",
        about: "fit a linear probe on LM states and locate the sentiment unit",
        positional: &[],
        opts: &[
            required("lm", "language model checkpoint"),
            required("reviews", "review corpus file"),
            optional("split", "split.csv from train-lm; a seeded split when absent"),
            opt("holdout", "0.1", "held-out fraction when --split is absent"),
        ],
        run: sentiment_probe_cmd,
    },
    Command {
        name: "sentiment-generate",
        about: "sample text, optionally clamping the sentiment unit",
        positional: &[],
        opts: &[
            required("lm", "language model checkpoint"),
            optional("probe", "probe.csv from sentiment-probe; needed to clamp"),
            opt("clamp", "none", "+, - or none"),
            opt("length", "200", "characters per sample"),
            opt("temperature", "1", "sampling temperature"),
            opt("samples", "1", "number of samples"),
        ],
        run: sentiment_generate_cmd,
    },
    Command {
        name: "analogy",
        about: "solve A is to B as C is to ? by vector offset",
        positional: &["A", "B", "C"],
        opts: &[required("embeddings", "embeddings checkpoint"), opt("k", "5", "answers to list")],
        run: analogy_cmd,
    },
    Command {
        name: "nearest",
        about: "list the nearest words by cosine similarity",
        positional: &["WORD"],
        opts: &[required("embeddings", "embeddings checkpoint"), opt("k", "5", "neighbours to list")],
        run: nearest_cmd,
    },
    Command {
        name: "percept",
        about: "evolve a stroke drawing to raise a class score",
        positional: &[],
        opts: &[
            required("class", "target class name"),
            repeat("classifier", "classifier checkpoint; repeat for an ensemble"),
            opt("iterations", "1000", "generations"),
            opt("lambda", "16", "children per generation"),
            opt("sigma", "0.03", "mutation noise as a fraction of each box"),
            opt("rate", "0.25", "per-parameter mutation probability"),
            opt("strokes", "6", "number of strokes"),
            opt("blobs", "3", "number of discs"),
            opt("n-real", "50", "real images per class for the dominance check"),
        ],
        run: percept_cmd,
    },
    Command {
        name: "grad-check",
        about: "compare analytic and finite-difference gradients for every layer kind",
        positional: &[],
        opts: &[],
        run: grad_check_cmd,
    },
];

fn save_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn classes(cfg: &RunConfig) -> CliResult<Vec<GlyphClass>> {
    parse_classes(cfg.str("classes")).map_err(|e| usage(format!("--classes: {e}")))
}

fn word_pairs(cfg: &RunConfig, key: &str) -> CliResult<Vec<(String, String)>> {
    cfg.str(key)
        .split(',')
        .map(|p| match p.split_once(':') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
            _ => Err(usage(format!("--{key}: `{p}` is not word:word"))),
        })
        .collect()
}

fn relational_corpus(cfg: &RunConfig) -> CliResult<RelationalCorpus> {
    let pairs = word_pairs(cfg, "pairs")?;
    let refs: Vec<(&str, &str)> = pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut corpus = gen_relational(&refs, cfg.get("templates")?, cfg.module_seed("synthdata")?)?;
    if cfg.opt_str("synonym").is_some() {
        let syn = word_pairs(cfg, "synonym")?;
        let [(w, s)] = syn.as_slice() else {
            return Err(usage("--synonym: expected a single word:synonym"));
        };
        corpus = corpus.with_synonym(w, s)?;
    }
    Ok(corpus)
}

fn load_classifier(path: &str) -> Result<Classifier> {
    Classifier::from_checkpoint(&Checkpoint::load(path)?)
}

fn image_side(clf: &Classifier) -> Result<usize> {
    match clf.model.input_dims() {
        [1, h, w] if h == w => Ok(*h),
        dims => Err(Error::Shape(format!("classifier input {dims:?} is not [1, S, S]"))),
    }
}

/// Grey, grey plus uniform noise, or a PGM of the classifier's size.
fn start_image(cfg: &RunConfig, size: usize) -> CliResult<Tensor<f32>> {
    let dims = [1, size, size];
    match cfg.str("start") {
        "grey" => Ok(Tensor::filled(&dims, 0.5)),
        "noise" => {
            let mut rng = SplitMix64::new(cfg.module_seed("dream-start")?);
            let data = (0..size * size).map(|_| rng.uniform(0.4, 0.6) as f32).collect();
            Ok(Tensor::new(dims.to_vec(), data)?)
        }
        path => {
            let img = read_pgm(path)?;
            if img.dims() != dims {
                return Err(usage(format!("--start: image is {:?}, classifier expects {dims:?}", img.dims())));
            }
            Ok(img)
        }
    }
}

fn dream_config(cfg: &RunConfig) -> CliResult<DreamConfig> {
    Ok(DreamConfig {
        steps: cfg.get("steps")?,
        step_size: cfg.get("step-size")?,
        l2_decay: cfg.get("l2")?,
        jitter: cfg.get("jitter")?,
        seed: cfg.module_seed("dream")?,
    })
}

fn trace_csv(column: &str, trace: &[f64]) -> Csv {
    let mut csv = Csv::new(&["step", column]);
    for (i, &v) in trace.iter().enumerate() {
        csv.row(csv_row![i, v]);
    }
    csv
}

fn loss_log(losses: &[f64]) -> Csv {
    let mut csv = Csv::new(&["epoch", "loss"]);
    for (i, &l) in losses.iter().enumerate() {
        csv.row(csv_row![i + 1, l]);
    }
    csv
}

fn gen_glyphs_cmd(cfg: &RunConfig) -> CliResult<()> {
    let set = gen_glyphs(&classes(cfg)?, cfg.get("n")?, cfg.get("size")?, cfg.module_seed("synthdata")?)?;
    let mut labels = Csv::new(&["file", "label", "class"]);
    for (i, (img, &label)) in set.images.iter().zip(&set.labels).enumerate() {
        let file = format!("glyph_{i:05}.pgm");
        write_pgm(img, cfg.out(&file))?;
        labels.row(csv_row![file, label, set.class_names[label].as_str()]);
    }
    labels.save(cfg.out("labels.csv"))?;
    Ok(())
}

fn gen_reviews_cmd(cfg: &RunConfig) -> CliResult<()> {
    gen_reviews(cfg.get("n")?, cfg.module_seed("synthdata")?)?.save(cfg.out("reviews.txt"))?;
    Ok(())
}

fn gen_relational_cmd(cfg: &RunConfig) -> CliResult<()> {
    relational_corpus(cfg)?.save(cfg.out("relational.txt"))?;
    Ok(())
}

fn train_classifier_cmd(cfg: &RunConfig) -> CliResult<()> {
    let classes = classes(cfg)?;
    let size = cfg.get("size")?;
    let train = gen_glyphs(&classes, cfg.get("n-train")?, size, cfg.module_seed("synthdata-train")?)?;
    let test = gen_glyphs(&classes, cfg.get("n-test")?, size, cfg.module_seed("synthdata-test")?)?;
    let arch = ClassifierArch { conv1: cfg.get("conv1")?, conv2: cfg.get("conv2")?, hidden: cfg.get("hidden")? };
    let tc = TrainConfig {
        epochs: cfg.get("epochs")?,
        batch_size: cfg.get("batch")?,
        lr: cfg.get("lr")?,
        seed: cfg.module_seed("classifier")?,
    };
    let (clf, report) = train_classifier(&train, arch, &tc)?;
    clf.to_checkpoint().save(cfg.out("classifier.nnck"))?;
    loss_log(&report.epoch_losses).save(cfg.out("train_log.csv"))?;
    let mut eval = Csv::new(&["metric", "value"]);
    eval.row(csv_row!["train_accuracy", clf.accuracy(&train)?]);
    eval.row(csv_row!["test_accuracy", clf.accuracy(&test)?]);
    eval.save(cfg.out("eval.csv"))?;
    Ok(())
}

fn train_lm_cmd(cfg: &RunConfig) -> CliResult<()> {
    let corpus = match cfg.opt_str("reviews") {
        Some(path) => ReviewCorpus::load(path)?,
        None => gen_reviews(cfg.get("n-docs")?, cfg.module_seed("synthdata")?)?,
    };
    let lc = LmConfig {
        embed: cfg.get("embed")?,
        hidden: cfg.get("hidden")?,
        epochs: cfg.get("epochs")?,
        lr: cfg.get("lr")?,
        bptt: cfg.get("bptt")?,
        batch_size: cfg.get("batch")?,
        holdout: cfg.get("holdout")?,
        clip: cfg.get("clip")?,
        seed: cfg.module_seed("sentiment")?,
    };
    let (lm, report) = train_char_lm(&corpus, &lc)?;
    lm.to_checkpoint().save(cfg.out("lm.nnck"))?;
    corpus.save(cfg.out("reviews.txt"))?;
    let mut split = Csv::new(&["doc", "set"]);
    let mut sets: Vec<(usize, &str)> = report.train.iter().map(|&i| (i, "train")).collect();
    sets.extend(report.holdout.iter().map(|&i| (i, "holdout")));
    sets.sort_unstable();
    for (i, s) in sets {
        split.row(csv_row![i, s]);
    }
    split.save(cfg.out("split.csv"))?;
    loss_log(&report.epoch_losses).save(cfg.out("train_log.csv"))?;
    let mut eval = Csv::new(&["metric", "value"]);
    eval.row(csv_row!["holdout_loss", report.holdout_loss.unwrap_or(f64::NAN)]);
    eval.save(cfg.out("eval.csv"))?;
    Ok(())
}

/// `(train, holdout)` indices from a split.csv written by train-lm.
fn read_split(path: &str, n: usize) -> CliResult<(Vec<usize>, Vec<usize>)> {
    let text = read_text(path)?;
    let bad = |line: &str| usage(format!("--split: bad line `{line}`"));
    let (mut train, mut hold) = (Vec::new(), Vec::new());
    for line in text.lines().skip(1) {
        let (i, set) = line.split_once(',').ok_or_else(|| bad(line))?;
        let i: usize = i.parse().map_err(|_| bad(line))?;
        if i >= n {
            return Err(usage(format!("--split: document {i} beyond the {n} reviews")));
        }
        match set {
            "train" => train.push(i),
            "holdout" => hold.push(i),
            _ => return Err(bad(line)),
        }
    }
    Ok((train, hold))
}

fn sentiment_probe_cmd(cfg: &RunConfig) -> CliResult<()> {
    let lm = CharLM::from_checkpoint(&Checkpoint::load(cfg.str("lm"))?)?;
    let corpus = ReviewCorpus::load(cfg.str("reviews"))?;
    let n = corpus.docs.len();
    let (train, hold) = match cfg.opt_str("split") {
        Some(path) => read_split(path, n)?,
        None => {
            let frac: f64 = cfg.get("holdout")?;
            if !(0.0..1.0).contains(&frac) {
                return Err(usage("--holdout: must lie in [0, 1)"));
            }
            let mut order: Vec<usize> = (0..n).collect();
            SplitMix64::new(cfg.module_seed("sentiment-probe")?).shuffle(&mut order);
            let k = (n as f64 * frac).round() as usize;
            let (mut hold, mut train) = (order[..k].to_vec(), order[k..].to_vec());
            hold.sort_unstable();
            train.sort_unstable();
            (train, hold)
        }
    };
    let texts: Vec<&str> = corpus.docs.iter().map(|d| d.text.as_str()).collect();
    let states = lm.encode_reviews(&texts)?;
    let labels: Vec<bool> = corpus.docs.iter().map(|d| d.sentiment.is_positive()).collect();
    let pick = |idx: &[usize]| -> (Vec<Vec<f32>>, Vec<bool>) {
        (idx.iter().map(|&i| states[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (xs, ys) = pick(&train);
    let (hx, hy) = pick(&hold);
    let probe = fit_probe(&xs, &ys)?;
    let unit = find_sentiment_unit(&probe, &xs, &ys)?;

    let mut out = Csv::new(&["key", "value"]);
    out.row(csv_row!["train_docs", xs.len()]);
    out.row(csv_row!["holdout_docs", hx.len()]);
    out.row(csv_row!["probe_train_accuracy", probe.accuracy]);
    out.row(csv_row!["probe_holdout_accuracy", if hx.is_empty() { f64::NAN } else { probe.accuracy_on(&hx, &hy) }]);
    out.row(csv_row!["probe_iterations", probe.iterations]);
    out.row(csv_row!["unit", unit.index]);
    out.row(csv_row!["positive_mean", unit.positive_mean]);
    out.row(csv_row!["negative_mean", unit.negative_mean]);
    out.row(csv_row!["threshold", unit.threshold]);
    out.row(csv_row!["positive_above", unit.positive_above]);
    out.row(csv_row!["single_unit_accuracy", unit.single_unit_accuracy]);
    out.row(csv_row!["pooled_std", unit.pooled_std]);
    out.row(csv_row!["separation", unit.separation]);
    out.save(cfg.out("probe.csv"))?;

    let h = &unit.histogram;
    let mut hist = Csv::new(&["bin_low", "count_pos", "count_neg"]);
    for i in 0..h.bin_low.len() {
        hist.row(csv_row![h.bin_low[i], h.count_pos[i], h.count_neg[i]]);
    }
    hist.save(cfg.out("histogram.csv"))?;

    let mut weights = Csv::new(&["unit", "weight"]);
    for (i, &w) in probe.weights.iter().enumerate() {
        weights.row(csv_row![i, w]);
    }
    weights.row(csv_row!["bias", probe.bias]);
    weights.save(cfg.out("weights.csv"))?;
    Ok(())
}

/// `(unit, clamp value)` for `+` or `-` from a probe.csv.
fn clamp_from_probe(path: &str, sign: &str) -> CliResult<(usize, f32)> {
    let text = read_text(path)?;
    let field = |key: &str| -> CliResult<&str> {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(',')))
            .ok_or_else(|| usage(format!("--probe: `{key}` missing")))
    };
    let unit = field("unit")?.parse().map_err(|_| usage("--probe: bad `unit`"))?;
    let key = if sign == "+" { "positive_mean" } else { "negative_mean" };
    let value: f32 = field(key)?.parse().map_err(|_| usage(format!("--probe: bad `{key}`")))?;
    Ok((unit, value))
}

fn sentiment_generate_cmd(cfg: &RunConfig) -> CliResult<()> {
    let lm = CharLM::from_checkpoint(&Checkpoint::load(cfg.str("lm"))?)?;
    let clamp = match cfg.str("clamp") {
        "none" => None,
        sign @ ("+" | "-") => {
            let probe = cfg.opt_str("probe").ok_or_else(|| usage("--probe: required when clamping"))?;
            Some(clamp_from_probe(probe, sign)?)
        }
        other => return Err(usage(format!("--clamp: expected +, - or none, got `{other}`"))),
    };
    let (length, temperature, samples): (usize, f64, usize) =
        (cfg.get("length")?, cfg.get("temperature")?, cfg.get("samples")?);
    let base = cfg.module_seed("sentiment-generate")?;
    let lexicon = crate::synthdata::Lexicon::default();
    let mut polarity = Csv::new(&["sample", "positive", "negative", "polarity"]);
    for i in 0..samples {
        let text = lm.generate(length, temperature, derive_index(base, i), clamp)?;
        save_text(cfg.out(&format!("sample_{i:03}.txt")), &text)?;
        let (pos, neg) = lexicon.counts(&text);
        polarity.row(csv_row![i, pos, neg, lexicon.polarity(&text)]);
    }
    polarity.save(cfg.out("polarity.csv"))?;
    Ok(())
}

fn derive_index(seed: u64, i: usize) -> u64 {
    SplitMix64::new(seed).split_index(i as u64).next_u64()
}

fn train_embed_cmd(cfg: &RunConfig) -> CliResult<()> {
    let corpus = match cfg.opt_str("corpus") {
        Some(path) => RelationalCorpus::load(path)?,
        None => relational_corpus(cfg)?,
    };
    let cc = CbowConfig {
        window: cfg.get("window")?,
        dim: cfg.get("dim")?,
        epochs: cfg.get("epochs")?,
        lr: cfg.get("lr")?,
        batch_size: cfg.get("batch")?,
        seed: cfg.module_seed("embed")?,
    };
    let (emb, losses) = train_cbow(&corpus, &cc)?;
    emb.save(cfg.out("embeddings.nnck"))?;
    corpus.save(cfg.out("corpus.txt"))?;
    loss_log(&losses).save(cfg.out("train_log.csv"))?;
    Ok(())
}

fn ranked(cfg: &RunConfig, file: &str, hits: &[(String, f64)]) -> CliResult<()> {
    let mut csv = Csv::new(&["rank", "word", "cosine"]);
    for (i, (w, c)) in hits.iter().enumerate() {
        csv.row(csv_row![i + 1, w.as_str(), *c]);
    }
    print!("{}", csv.text());
    csv.save(cfg.out(file))?;
    Ok(())
}

fn analogy_cmd(cfg: &RunConfig) -> CliResult<()> {
    let emb = WordEmbeddings::load(cfg.str("embeddings"))?;
    let [a, b, c] = &cfg.positionals[..] else { unreachable!("arity checked by the parser") };
    let hits = emb.analogy(a, b, c, cfg.get("k")?)?;
    ranked(cfg, "analogy.csv", &hits)
}

fn nearest_cmd(cfg: &RunConfig) -> CliResult<()> {
    let emb = WordEmbeddings::load(cfg.str("embeddings"))?;
    let word = cfg.positionals[0].as_str();
    let query: Vec<f64> = emb.vector(word)?.iter().map(|&v| f64::from(v)).collect();
    let hits = emb.nearest(&query, cfg.get("k")?, &[word])?;
    ranked(cfg, "nearest.csv", &hits)
}

fn dream_cmd(cfg: &RunConfig) -> CliResult<()> {
    let clf = load_classifier(cfg.str("classifier"))?;
    let logits = clf.model.depth() - 1;
    let layer = cfg.get_opt::<usize>("layer")?;
    let unit = cfg.get_opt::<usize>("unit")?;
    let channel = cfg.get_opt::<usize>("channel")?;
    let chosen = [cfg.opt_str("class").is_some(), unit.is_some(), channel.is_some()];
    if chosen.iter().filter(|&&c| c).count() > 1 {
        return Err(usage("--class, --unit and --channel are mutually exclusive"));
    }
    let target = match cfg.opt_str("class") {
        Some(name) => {
            if layer.is_some_and(|l| l != logits) {
                return Err(usage(format!("--class: targets the logit layer {logits}, not --layer")));
            }
            let k = clf.class_index(name).map_err(|e| usage(format!("--class: {e}")))?;
            DreamTarget { layer: logits, selector: Selector::Unit(k) }
        }
        None => DreamTarget {
            layer: layer.unwrap_or(logits),
            selector: match (unit, channel) {
                (Some(u), _) => Selector::Unit(u),
                (_, Some(c)) => Selector::Channel(c),
                _ => Selector::WholeLayer,
            },
        },
    };
    let start = start_image(cfg, image_side(&clf)?)?;
    let r = maximize_activation(&clf.model, &start, &target, &dream_config(cfg)?)?;
    write_pgm(&start, cfg.out("start.pgm"))?;
    write_pgm(&r.image, cfg.out("final.pgm"))?;
    trace_csv("objective", &r.trace).save(cfg.out("trace.csv"))?;
    Ok(())
}

fn dream_compare_cmd(cfg: &RunConfig) -> CliResult<()> {
    let clf = load_classifier(cfg.str("classifier"))?;
    let (p, d): (usize, usize) = (cfg.get("peripheral")?, cfg.get("deep")?);
    let start = start_image(cfg, image_side(&clf)?)?;
    let c = dream_compare(&clf.model, &start, p, d, &dream_config(cfg)?)?;
    write_pgm(&start, cfg.out("start.pgm"))?;
    write_pgm(&c.peripheral.image, cfg.out("peripheral.pgm"))?;
    write_pgm(&c.deep.image, cfg.out("deep.pgm"))?;
    let mut energy = Csv::new(&["role", "layer", "hf_energy_delta", "hf_energy_image"]);
    energy.row(csv_row!["peripheral", p, c.stats.peripheral_energy, high_frequency_energy(&c.peripheral.image)]);
    energy.row(csv_row!["deep", d, c.stats.deep_energy, high_frequency_energy(&c.deep.image)]);
    energy.save(cfg.out("energy.csv"))?;
    let mut trace = Csv::new(&["step", "peripheral", "deep"]);
    for (i, (a, b)) in c.peripheral.trace.iter().zip(&c.deep.trace).enumerate() {
        trace.row(csv_row![i, *a, *b]);
    }
    trace.save(cfg.out("trace.csv"))?;
    Ok(())
}

fn layer_weights(cfg: &RunConfig, key: &str) -> CliResult<Vec<(usize, f64)>> {
    cfg.all(key)
        .iter()
        .map(|s| {
            let parsed = s.split_once(':').and_then(|(l, w)| Some((l.parse().ok()?, w.parse().ok()?)));
            parsed.ok_or_else(|| usage(format!("--{key}: `{s}` is not layer:weight")))
        })
        .collect()
}

fn style_cmd(cfg: &RunConfig) -> CliResult<()> {
    let content = read_pgm(cfg.str("content"))?;
    let style = read_pgm(cfg.str("style"))?;
    let dims = content.dims();
    if dims.len() != 3 || dims[0] != 1 || dims[1] != dims[2] {
        return Err(usage(format!("--content: expected a square greyscale image, got {dims:?}")));
    }
    if style.dims() != dims {
        return Err(usage(format!("--style: image is {:?}, content is {dims:?}", style.dims())));
    }
    let widths: Vec<usize> = cfg.list("widths")?;
    let kernels: Vec<usize> = cfg.list("kernels")?;
    let net = StyleNet::random(1, dims[1], &widths, &kernels, cfg.module_seed("style")?)?;
    let mut obj = StyleObjective::for_net(&net, cfg.get("alpha")?, cfg.get("beta")?);
    if !cfg.all("content-layer").is_empty() {
        obj.content_layers = layer_weights(cfg, "content-layer")?;
    }
    if !cfg.all("style-layer").is_empty() {
        obj.style_layers = layer_weights(cfg, "style-layer")?;
    }
    let tc = TransferConfig { steps: cfg.get("steps")?, step_size: cfg.get("step-size")? };
    let r = transfer(&content, &style, &net, &obj, &tc)?;
    write_pgm(&r.image, cfg.out("final.pgm"))?;
    trace_csv("loss", &r.trace).save(cfg.out("trace.csv"))?;
    Ok(())
}

fn percept_cmd(cfg: &RunConfig) -> CliResult<()> {
    let paths = cfg.all("classifier");
    if paths.is_empty() {
        return Err(usage("--classifier: at least one is required"));
    }
    let clfs = paths.iter().map(|p| load_classifier(p)).collect::<Result<Vec<_>>>()?;
    let name = cfg.str("class");
    let target = clfs[0].class_index(name).map_err(|e| usage(format!("--class: {e}")))?;
    if clfs.iter().any(|c| c.class_names != clfs[0].class_names) {
        return Err(usage("--classifier: checkpoints name different classes"));
    }
    let models: Vec<_> = clfs.iter().map(|c| &c.model).collect();
    let ec = EvolutionConfig {
        iterations: cfg.get("iterations")?,
        lambda: cfg.get("lambda")?,
        sigma: cfg.get("sigma")?,
        rate: cfg.get("rate")?,
        seed: cfg.module_seed("percept")?,
    };
    let g0 = DrawingGenome::random(cfg.get("strokes")?, cfg.get("blobs")?, cfg.module_seed("percept-genome")?);
    let r = evolve(&g0, &models, target, &ec)?;
    let size = image_side(&clfs[0])?;
    write_pgm(&r.genome.rasterize(size), cfg.out("final.pgm"))?;
    r.genome.save(cfg.out("genome.txt"))?;
    trace_csv("fitness", &r.trace).save(cfg.out("trace.csv"))?;

    let class_list = clfs[0].class_names.join(",");
    let glyphs = parse_classes(&class_list)?;
    let real = gen_glyphs(&glyphs, cfg.get("n-real")?, size, cfg.module_seed("percept-real")?)?;
    let mut dom = Csv::new(&["classifier", "genome_score", "mean_real_score", "real_count", "dominates"]);
    for (i, m) in models.iter().enumerate() {
        let d = dominance_check(&r.genome, m, target, &real)?;
        dom.row(csv_row![i, d.genome_score, d.mean_real_score, d.real_count, d.dominates]);
    }
    dom.save(cfg.out("dominance.csv"))?;

    if models.len() >= 2 {
        let rep = transfer_report(&r.genome, &models)?;
        let mut agree = Csv::new(&["classifier", "top1", "top1_class", "pairwise_agreement"]);
        for (i, &t) in rep.top1.iter().enumerate() {
            agree.row(csv_row![i, t, clfs[0].class_names[t].as_str(), rep.agreement]);
        }
        agree.save(cfg.out("agreement.csv"))?;
    }
    Ok(())
}

fn grad_check_cmd(cfg: &RunConfig) -> CliResult<()> {
    let mut csv = Csv::new(&["case", "precision", "error", "threshold", "pass"]);
    let mut failed = Vec::new();
    for case in standard_cases(cfg.module_seed("grad-check")?)? {
        let e32 = grad_check(&case.model, &case.input, 1e-3)?;
        let e64 = grad_check(&case.model.cast::<f64>(), &case.input.cast::<f64>(), 1e-5)?;
        for (precision, err, limit) in [("f32", e32, 1e-2), ("f64", e64, 1e-5)] {
            let pass = err < limit;
            if !pass {
                failed.push(format!("{}/{precision}", case.name));
            }
            csv.row(csv_row![case.name, precision, err, limit, pass]);
        }
    }
    csv.save(cfg.out("gradcheck.csv"))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(Error::invalid(format!("gradient check failed: {}", failed.join(", ")))))
    }
}
