use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;

use embcomp::codec::{compute_alpha, BudgetSpec, SparseFile};
use embcomp::embed_io::{self, Embedding};
use embcomp::eval::{
    eval_analogy as score_analogies, eval_similarity, interpret as probe, AnalogyDataset,
    AnalogyMethod, CosineProvider, DenseCosine, EvalReport, SimilarityDataset,
};
use embcomp::lloyd::{self, LloydConfig};
use embcomp::lsh::{SignatureSet, DEFAULT_BITS};
use embcomp::wta::{self, Checkpoint, EpochLog, TrainConfig, Trainer};

use crate::config::{Defaults, RunConfig};
use crate::{
    DecodeArgs, DequantizeArgs, EncodeArgs, InterpretArgs, LshArgs, MethodChoice, QuantizeArgs,
    RepArgs, TrainArgs, UsageError,
};

const DEFAULT_LEVELS: usize = 8;
const DEFAULT_K: usize = 1024;
const DEFAULT_BUDGET: usize = 900;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Text,
    Emb,
    Lqe,
    Sne,
    Lsh,
    Wta,
}

fn sniff(path: &Path) -> Result<Kind> {
    let mut f =
        File::open(path).map_err(|e| UsageError(format!("cannot open {}: {e}", path.display())))?;
    let mut head = [0u8; 4];
    let n = f.read(&mut head)?;
    Ok(match &head[..n] {
        b"EMB1" => Kind::Emb,
        b"LQE1" => Kind::Lqe,
        b"SNE1" => Kind::Sne,
        b"LSH1" => Kind::Lsh,
        b"WTA1" => Kind::Wta,
        _ => Kind::Text,
    })
}

/// A dense embedding from text or the EMB1 cache.
fn load_dense(path: &Path) -> Result<Embedding> {
    let e = match sniff(path)? {
        Kind::Text => embed_io::load_text(path, None),
        Kind::Emb => embed_io::load_binary(path),
        other => {
            return Err(UsageError(format!(
                "{}: expected a dense embedding, found a {other:?} file",
                path.display()
            ))
            .into())
        }
    };
    let e = e.with_context(|| format!("reading {}", path.display()))?;
    info!(
        "{}: {} words x {} dimensions",
        path.display(),
        e.len(),
        e.dim()
    );
    Ok(e)
}

fn load_sparse(path: &Path) -> Result<SparseFile> {
    if sniff(path)? != Kind::Sne {
        return Err(UsageError(format!("{}: not an SNE1 file", path.display())).into());
    }
    Ok(embcomp::codec::read_file(path).with_context(|| format!("reading {}", path.display()))?)
}

fn save_embedding(e: &Embedding, path: &Path, binary: bool) -> Result<()> {
    if binary {
        embed_io::save_binary(e, path)?;
    } else {
        embed_io::save_text(e, path)?;
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn quantize(a: &QuantizeArgs, d: &Defaults) -> Result<()> {
    let levels = d.pick(a.levels, "levels", DEFAULT_LEVELS)?;
    if levels == 0 || levels > usize::from(u16::MAX) {
        return Err(UsageError(format!("--levels must be in 1..=65535, got {levels}")).into());
    }
    let e = load_dense(&a.input)?;
    let q = lloyd::quantize_with(&e, &LloydConfig::with_levels(levels))?;
    lloyd::save_quantized(&q, &a.output)?;
    info!(
        "{} levels, {} payload bits per word",
        levels,
        q.payload_bits_per_word()
    );
    RunConfig::new("quantize")
        .set("input", a.input.display())
        .set("levels", levels)
        .set("seed", "none")
        .write_for(&a.output)
}

pub fn dequantize(a: &DequantizeArgs) -> Result<()> {
    if sniff(&a.input)? != Kind::Lqe {
        return Err(UsageError(format!("{}: not an LQE1 file", a.input.display())).into());
    }
    let q = lloyd::load_quantized(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    save_embedding(&lloyd::dequantize(&q), &a.output, a.binary)?;
    RunConfig::new("dequantize")
        .set("input", a.input.display())
        .set("levels", q.n_levels())
        .set("seed", "none")
        .write_for(&a.output)
}

fn run_header(cfg: &TrainConfig, budget: usize, input: &Path, alpha_source: &str) -> RunConfig {
    let mut r = RunConfig::new("train");
    r.set("input", input.display())
        .set("budget_bits", budget)
        .set("alpha_source", alpha_source);
    for line in cfg.to_kv().lines() {
        if let Some((k, v)) = line.split_once('=') {
            r.set(k, v);
        }
    }
    r
}

pub fn train(a: &TrainArgs, d: &Defaults) -> Result<()> {
    let k = d.pick(a.k, "k", DEFAULT_K)?;
    let budget = d.pick(a.budget_bits, "budget-bits", DEFAULT_BUDGET)?;
    let spec = BudgetSpec::new(budget, k).map_err(|e| UsageError(e.to_string()))?;
    let override_alpha = d.lookup(a.alpha, "alpha")?;
    let alpha = override_alpha.unwrap_or_else(|| compute_alpha(budget, k));
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        k,
        alpha,
        epochs: d.pick(a.epochs, "epochs", defaults.epochs)?,
        seed: d.pick(a.seed, "seed", defaults.seed)?,
        batch_size: d.pick(a.batch_size, "batch-size", defaults.batch_size)?,
        ..defaults
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let e = load_dense(&a.input)?;
    info!(
        "alpha = {:.2}% ({})",
        alpha * 100.0,
        if override_alpha.is_some() {
            "override"
        } else {
            "from budget"
        }
    );

    let header = run_header(
        &cfg,
        budget,
        &a.input,
        if override_alpha.is_some() {
            "override"
        } else {
            "budget"
        },
    );
    let log_path = a
        .log
        .clone()
        .unwrap_or_else(|| with_suffix(&a.output, ".log"));
    let mut log = BufWriter::new(
        File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    for line in header.render().lines() {
        writeln!(log, "# {line}")?;
    }
    writeln!(log, "{}", EpochLog::HEADER)?;

    let mut trainer = Trainer::new(e.dim(), cfg.clone())?;
    let mut io_err = None;
    trainer.fit(&e, |entry| {
        if entry.epoch % 100 == 0 {
            info!("{entry}");
        }
        if let Err(err) = writeln!(log, "{entry}") {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = io_err {
        return Err(err).context("writing training log");
    }
    log.flush()?;

    let (enc, _) = trainer.encode(&e)?;
    let file = SparseFile::from_encoding(&enc, spec)?;
    let mut bytes = Vec::new();
    file.write(&mut bytes)?;
    std::fs::write(&a.output, &bytes).with_context(|| format!("creating {}", a.output.display()))?;
    info!(
        "non-zero fraction {:.4}; {:.1} budget bits per word on average",
        enc.nonzero_fraction(),
        file.mean_budget_bits()
    );

    // E* exactly as a later `decode` of the file will produce it: decoded
    // codes times the dictionary at its stored precision
    let recon = SparseFile::read(bytes.as_slice())?.to_encoding()?.reconstruct()?;
    let recon_path = a
        .recon
        .clone()
        .unwrap_or_else(|| with_suffix(&a.output, ".recon.txt"));
    embed_io::save_text(&recon, &recon_path)?;

    let mut header = header;
    header
        .set("epochs_run", trainer.epochs_run())
        .set("final_sigma", trainer.schedule().sigma);
    header.write_for(&a.output)?;
    header.write_for(&recon_path)?;
    if let Some(path) = &a.checkpoint {
        let ck = Checkpoint {
            config: cfg,
            schedule: trainer.schedule(),
            epoch: trainer.epochs_run(),
            params: trainer.params().clone(),
        };
        wta::save_checkpoint(&ck, path)?;
        header.write_for(path)?;
    }
    Ok(())
}

pub fn encode(a: &EncodeArgs, d: &Defaults) -> Result<()> {
    if sniff(&a.model)? != Kind::Wta {
        return Err(UsageError(format!("{}: not a WTA1 checkpoint", a.model.display())).into());
    }
    let ck =
        wta::load_checkpoint(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let budget = d.pick(a.budget_bits, "budget-bits", DEFAULT_BUDGET)?;
    let spec = BudgetSpec::new(budget, ck.config.k).map_err(|e| UsageError(e.to_string()))?;
    let e = load_dense(&a.input)?;
    if e.dim() != ck.params.input_dim() {
        return Err(UsageError(format!(
            "embedding has {} dimensions, model expects {}",
            e.dim(),
            ck.params.input_dim()
        ))
        .into());
    }
    let (enc, _) = wta::encode_with(
        &ck.params,
        &e,
        ck.schedule.alpha_t,
        ck.config.bisect_iters,
        ck.config.batch_size,
    )?;
    embcomp::codec::write_file(&enc, spec, &a.output)?;
    RunConfig::new("encode")
        .set("input", a.input.display())
        .set("model", a.model.display())
        .set("budget_bits", budget)
        .set("k", ck.config.k)
        .set("alpha_t", ck.schedule.alpha_t)
        .set("seed", ck.config.seed)
        .write_for(&a.output)
}

pub fn decode(a: &DecodeArgs) -> Result<()> {
    let file = load_sparse(&a.input)?;
    let enc = file.to_encoding()?;
    let out = if a.raw_codes {
        enc.codes_embedding()?
    } else {
        enc.reconstruct()?
    };
    save_embedding(&out, &a.output, a.binary)?;
    RunConfig::new("decode")
        .set("input", a.input.display())
        .set("raw_codes", a.raw_codes)
        .set("seed", "none")
        .write_for(&a.output)
}

/// Any supported file as something that can score word pairs.
fn load_representation(path: &Path, raw_codes: bool) -> Result<Box<dyn CosineProvider>> {
    let kind = sniff(path)?;
    if raw_codes && kind != Kind::Sne {
        return Err(UsageError("--raw-codes applies only to SNE1 input".into()).into());
    }
    let ctx = || format!("reading {}", path.display());
    Ok(match kind {
        Kind::Text | Kind::Emb => Box::new(DenseCosine::from_embedding(&load_dense(path)?)),
        Kind::Lqe => {
            let q = lloyd::load_quantized(path).with_context(ctx)?;
            Box::new(DenseCosine::from_embedding(&lloyd::dequantize(&q)))
        }
        Kind::Sne => {
            let enc = load_sparse(path)?.to_encoding()?;
            let e = if raw_codes {
                enc.codes_embedding()?
            } else {
                enc.reconstruct()?
            };
            Box::new(DenseCosine::from_embedding(&e))
        }
        Kind::Lsh => Box::new(SignatureSet::load(path).with_context(ctx)?),
        Kind::Wta => {
            return Err(UsageError(format!(
                "{}: a checkpoint is not a representation; run encode first",
                path.display()
            ))
            .into())
        }
    })
}

fn task_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn print_reports(reports: &[EvalReport], tsv: bool) {
    if tsv {
        for r in reports {
            println!("{}", r.tsv());
        }
    } else {
        println!("{}", EvalReport::TABLE_HEADER);
        for r in reports {
            println!("{r}");
        }
    }
}

pub fn eval_sim(a: &RepArgs) -> Result<()> {
    let rep = load_representation(&a.input, a.raw_codes)?;
    let mut reports = Vec::new();
    for path in &a.datasets {
        let ds = SimilarityDataset::load(path, a.lowercase)
            .with_context(|| format!("reading {}", path.display()))?;
        reports.push(eval_similarity(rep.as_ref(), &ds, &task_name(path))?);
    }
    print_reports(&reports, a.tsv);
    Ok(())
}

pub fn eval_analogy(a: &RepArgs, method: Option<MethodChoice>, d: &Defaults) -> Result<()> {
    let methods = match d.pick(method, "method", MethodChoice::Both)? {
        MethodChoice::Add => vec![AnalogyMethod::Add],
        MethodChoice::Mul => vec![AnalogyMethod::Mul],
        MethodChoice::Both => vec![AnalogyMethod::Add, AnalogyMethod::Mul],
    };
    let rep = load_representation(&a.input, a.raw_codes)?;
    let mut reports = Vec::new();
    for path in &a.datasets {
        let ds = AnalogyDataset::load(path, a.lowercase)
            .with_context(|| format!("reading {}", path.display()))?;
        for &m in &methods {
            let task = format!("{}/{}", task_name(path), m.name());
            reports.push(score_analogies(rep.as_ref(), &ds, m, &task)?);
        }
    }
    print_reports(&reports, a.tsv);
    Ok(())
}

pub fn lsh(a: &LshArgs, d: &Defaults) -> Result<()> {
    let bits = d.pick(a.bits, "bits", DEFAULT_BITS)?;
    if bits == 0 || bits > usize::from(u16::MAX) {
        return Err(UsageError(format!("--bits must be in 1..=65535, got {bits}")).into());
    }
    let seed = d.pick(a.seed, "seed", 0u64)?;
    let e = load_dense(&a.input)?;
    SignatureSet::from_embedding(&e, bits, seed).save(&a.output)?;
    RunConfig::new("lsh")
        .set("input", a.input.display())
        .set("bits", bits)
        .set("seed", seed)
        .write_for(&a.output)
}

pub fn interpret(a: &InterpretArgs, d: &Defaults) -> Result<()> {
    let dims = d.pick(a.dims, "dims", 5usize)?;
    let top = d.pick(a.top, "top", 10usize)?;
    let enc = load_sparse(&a.input)?.to_encoding()?;
    for p in probe(&enc, &a.word, dims, top)? {
        let words: Vec<String> = p.top.iter().map(|(w, v)| format!("{w}:{v:.3}")).collect();
        println!("{}\t{:.4}\t{}", p.dimension, p.value, words.join(" "));
    }
    Ok(())
}
