use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use sepal_core::atomic::{self, read_atomics, write_atomics, AtomicRecord};
use sepal_core::data::ClassPermTable;
use sepal_core::features::{EncoderContext, FlagSpec, FlagTable};
use sepal_core::model::{self, read_model, write_model, NeighborIndex, NeighborVerdict, SplitMode, TrainConfig};
use sepal_core::nlp::{read_vectors, write_vectors, Corpus, Doc2VecConfig, DocVectors};
use sepal_core::parse::{
    parse_file_contexts, parse_rc, parse_seapp, parse_sources, parse_te_comments, write_flat, write_sentence_file,
    ParseOptions, PolicyFormat,
};
use sepal_core::pipeline::{self, UidSources};
use sepal_core::policy::{AtomicRule, Ident, PolicyDb};
use sepal_core::report::{
    self, read_findings, read_images, write_findings, CategorizeConfig, Evidence, ReferenceVersion,
};
use sepal_core::synth::{generate, SynthConfig};
use sepal_core::uid::{read_uid_map, write_uid_map, AidTable, UidMap};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| path.display().to_string())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| path.display().to_string())
}

/// Writes to `out`, or to stdout without one.
fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| path.display().to_string()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            Ok(stdout.flush()?)
        }
    }
}

fn parse_options(strict: bool) -> Result<ParseOptions> {
    Ok(ParseOptions {
        strict,
        class_perms: ClassPermTable::load()?,
        ..ParseOptions::default()
    })
}

fn sources(paths: &[PathBuf]) -> Result<Vec<(String, String)>> {
    paths.iter().map(|p| Ok((p.display().to_string(), read(p)?))).collect()
}

/// Policy files by extension: all `.cil` files are CIL, anything else is
/// flat rule text.
fn load_db(paths: &[PathBuf], strict: bool) -> Result<PolicyDb> {
    if paths.is_empty() {
        bail!("no policy files given");
    }
    let is_cil = |p: &PathBuf| p.extension().is_some_and(|e| e == "cil");
    let format = if paths.iter().all(is_cil) {
        PolicyFormat::Cil
    } else if paths.iter().any(is_cil) {
        bail!("cannot mix CIL and flat policy files");
    } else {
        PolicyFormat::Flat
    };
    Ok(parse_sources(format, &sources(paths)?, &parse_options(strict)?)?)
}

fn load_atomics(path: &Path) -> Result<Vec<AtomicRecord>> {
    read_atomics(&read(path)?).with_context(|| path.display().to_string())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InputFormat {
    Cil,
    Flat,
    TeComments,
    FileContexts,
    Rc,
    Seapp,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct ParseArgs {
    #[arg(long, value_enum)]
    format: InputFormat,
    /// Input files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reject undeclared type names.
    #[arg(long)]
    strict: bool,
}

fn entries_json<T: Serialize>(parsed: Vec<sepal_core::parse::Parsed<T>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for p in parsed {
        if p.skipped > 0 {
            warn!("{} unparseable lines skipped", p.skipped);
        }
        for e in p.entries {
            serde_json::to_writer(&mut out, &e)?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn parse(a: ParseArgs) -> Result<()> {
    let texts = || a.inputs.iter().map(|p| read(p)).collect::<Result<Vec<_>>>();
    let bytes = match a.format {
        InputFormat::Cil | InputFormat::Flat => {
            let format = if matches!(a.format, InputFormat::Cil) {
                PolicyFormat::Cil
            } else {
                PolicyFormat::Flat
            };
            let db = parse_sources(format, &sources(&a.inputs)?, &parse_options(a.strict)?)?;
            for w in &db.warnings {
                warn!("{w}");
            }
            write_flat(&db)?.into_bytes()
        }
        InputFormat::TeComments => {
            let mut docs = Vec::new();
            for path in &a.inputs {
                let unit = Ident::new(&stem(path)).with_context(|| path.display().to_string())?;
                let (allow, never) = parse_te_comments(&read(path)?, &unit);
                docs.extend([allow, never]);
            }
            write_sentence_file(&docs).into_bytes()
        }
        InputFormat::FileContexts => entries_json(texts()?.iter().map(|t| parse_file_contexts(t)).collect())?,
        InputFormat::Rc => entries_json(texts()?.iter().map(|t| parse_rc(t)).collect())?,
        InputFormat::Seapp => entries_json(texts()?.iter().map(|t| parse_seapp(t)).collect())?,
    };
    emit(&a.out, &bytes)
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct ExpandArgs {
    /// Policy files (`.cil`, or flat rule text).
    #[arg(long, required = true, num_args = 1..)]
    db: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add up to N allow atomics inferred from negated neverallow subjects,
    /// or `balance` to stop at the neverallow count.
    #[arg(long, value_name = "N|balance")]
    augment_cap: Option<String>,
    /// Source label stored with each atomic (default: first file stem).
    #[arg(long)]
    source: Option<String>,
}

pub fn expand(a: ExpandArgs) -> Result<()> {
    let db = load_db(&a.db, false)?;
    let source = a.source.unwrap_or_else(|| stem(&a.db[0]));
    let atomics: Vec<AtomicRule> = match a.augment_cap.as_deref() {
        None => atomic::expand(&db)?.into_iter().collect(),
        Some("balance") => pipeline::training_atomics(&db, None)?.0,
        Some(n) => {
            let cap = n.parse().with_context(|| format!("--augment-cap {n:?}"))?;
            pipeline::training_atomics(&db, Some(cap))?.0
        }
    };
    let records: Vec<AtomicRecord> = atomics.iter().map(|r| AtomicRecord::new(r, source.as_str())).collect();
    emit(&a.out, write_atomics(&records)?.as_bytes())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct DiffArgs {
    /// Device atomics (JSON lines).
    #[arg(long)]
    device: PathBuf,
    /// Reference atomics (JSON lines).
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn diff(a: DiffArgs) -> Result<()> {
    let device = load_atomics(&a.device)?;
    let reference: BTreeSet<AtomicRule> = load_atomics(&a.reference)?.iter().map(AtomicRecord::rule).collect();
    let device_set: BTreeSet<AtomicRule> = device.iter().map(AtomicRecord::rule).collect();
    let keep = atomic::customized(&device_set, &reference);
    let mut seen = BTreeSet::new();
    let records: Vec<&AtomicRecord> = device
        .iter()
        .filter(|r| {
            let rule = r.rule();
            keep.contains(&rule) && seen.insert(rule)
        })
        .collect();
    info!("{} of {} device atomics are customized", records.len(), device.len());
    emit(&a.out, write_atomics(records)?.as_bytes())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct UidArgs {
    /// Policy files (`.cil`, or flat rule text).
    #[arg(long, required = true, num_args = 1..)]
    db: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    fc: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    rc: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    seapp: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn concat(paths: &[PathBuf]) -> Result<String> {
    let mut out = String::new();
    for p in paths {
        out.push_str(&read(p)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn uid(a: UidArgs) -> Result<()> {
    let db = load_db(&a.db, false)?;
    let (fc, rc, seapp) = (concat(&a.fc)?, concat(&a.rc)?, concat(&a.seapp)?);
    let inference = pipeline::infer_uids(
        &db,
        &[UidSources {
            file_contexts: &fc,
            init_rc: &rc,
            seapp_contexts: &seapp,
        }],
        &AidTable::load()?,
    );
    for w in &inference.warnings {
        warn!("{w}");
    }
    info!("{} domains, {} unknown", inference.map.len(), inference.unknown_count());
    emit(&a.out, write_uid_map(&inference.map).as_bytes())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct CommentsArgs {
    /// Parsed comment sentences (CoNLL-U with unit and polarity comments).
    #[arg(long, required = true, num_args = 1..)]
    conllu: Vec<PathBuf>,
    /// Directory with actions.txt, resources.txt and optional synonyms.txt.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    /// Noise samples per token.
    #[arg(long, default_value_t = 5)]
    negative: usize,
}

pub fn comments(a: CommentsArgs) -> Result<()> {
    let corpus = match &a.corpus {
        Some(dir) => Corpus::from_dir(dir).with_context(|| dir.display().to_string())?,
        None => Corpus::load()?,
    };
    let texts = a.conllu.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let cfg = Doc2VecConfig {
        dim: a.dim,
        epochs: a.epochs,
        negative: a.negative,
        seed: a.seed,
        ..Doc2VecConfig::default()
    };
    let emb = pipeline::comment_vectors(&refs, &corpus, &cfg)?;
    info!("loss {:.4} -> {:.4}", emb.loss_before, emb.loss_after);
    emit(&a.out, write_vectors(&emb.vectors).as_bytes())
}

/// Encoder inputs besides the atomics themselves.
#[derive(Args, Debug)]
pub struct SideArgs {
    /// Policy files for attribute flags (`.cil`, or flat rule text).
    #[arg(long, num_args = 1..)]
    db: Vec<PathBuf>,
    /// Domain to uid bucket map.
    #[arg(long)]
    uid: Option<PathBuf>,
    /// Comment vectors.
    #[arg(long)]
    vecs: Option<PathBuf>,
    /// `domain<TAB>unit` lines naming the comment unit of a domain.
    #[arg(long)]
    units: Option<PathBuf>,
}

fn read_units(text: &str) -> Result<BTreeMap<Ident, Ident>> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (domain, unit) = line.split_once('\t').with_context(|| format!("bad unit line {line:?}"))?;
        out.insert(Ident::new(domain.trim())?, Ident::new(unit.trim())?);
    }
    Ok(out)
}

impl SideArgs {
    fn load(&self, spec: &FlagSpec, vec_dim: Option<usize>) -> Result<model::SideInputs> {
        let flags = if self.db.is_empty() {
            warn!("no policy given; attribute flags are all clear");
            FlagTable::default()
        } else {
            FlagTable::from_db(&load_db(&self.db, false)?, spec)?
        };
        let uids: UidMap = match &self.uid {
            Some(p) => read_uid_map(&read(p)?)?,
            None => UidMap::new(),
        };
        let vectors = match &self.vecs {
            Some(p) => DocVectors::from_list(read_vectors(&read(p)?)?, vec_dim.unwrap_or(0))?,
            None => DocVectors::new(vec_dim.unwrap_or(0), Vec::new())?,
        };
        if let Some(dim) = vec_dim {
            if vectors.dim != dim {
                bail!("comment vectors have {} components, the model expects {dim}", vectors.dim);
            }
        }
        let units = match &self.units {
            Some(p) => read_units(&read(p)?)?,
            None => BTreeMap::new(),
        };
        Ok(model::SideInputs {
            flags,
            uids,
            vectors,
            units,
        })
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Split {
    Random,
    UnseenPair,
}

fn list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',').map(|x| Ok(x.trim().parse()?)).collect()
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Labeled reference atomics (JSON lines).
    #[arg(long)]
    atomics: PathBuf,
    #[command(flatten)]
    side: SideArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.10)]
    test_frac: f64,
    #[arg(long, value_enum, default_value = "random")]
    split: Split,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr_wide: f64,
    #[arg(long, default_value_t = 0.01)]
    lr_deep: f64,
    #[arg(long, default_value_t = sepal_core::features::DEFAULT_HASH_BUCKETS)]
    hash_buckets: u32,
    /// Embedding widths for subject, target, class and permission.
    #[arg(long, default_value = "64,64,8,8")]
    emb_dims: String,
    /// Hidden layer widths.
    #[arg(long, default_value = "256,128,64,32")]
    hidden: String,
    /// Attributes whose members count as untrusted.
    #[arg(long, num_args = 1.., default_values = ["untrusted_app_all", "untrusted_app", "isolated_app"])]
    untrusted: Vec<String>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let emb: Vec<usize> = list(&a.emb_dims)?;
    let emb_dims: [usize; 4] = emb.try_into().map_err(|_| anyhow::anyhow!("--emb-dims needs four widths"))?;
    let spec = FlagSpec {
        untrusted: a.untrusted.iter().map(|s| Ident::new(s)).collect::<Result<_, _>>()?,
        ..FlagSpec::default()
    };
    let cfg = TrainConfig {
        seed: a.seed,
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr_wide: a.lr_wide,
        lr_deep: a.lr_deep,
        test_frac: a.test_frac,
        hash_buckets: a.hash_buckets,
        emb_dims,
        hidden: list(&a.hidden)?,
        flag_spec: spec.clone(),
    };
    let atomics: Vec<AtomicRule> = load_atomics(&a.atomics)?.iter().map(AtomicRecord::rule).collect();
    let side = a.side.load(&spec, None)?;
    let mode = match a.split {
        Split::Random => SplitMode::Random,
        Split::UnseenPair => SplitMode::UnseenPair,
    };
    let report = model::fit(&atomics, side, &cfg, mode)?;
    let mut buf = Vec::new();
    write_model(&mut buf, &report.model)?;
    emit(&Some(a.out), &buf)?;
    let m = report.metrics;
    println!("train {}", report.train.len());
    println!("test {}", m.n);
    println!("accuracy {:.4}", m.accuracy());
    println!("precision {:.4}", m.precision());
    println!("recall {:.4}", m.recall());
    Ok(())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Customized atomics (JSON lines).
    #[arg(long)]
    custom: PathBuf,
    #[command(flatten)]
    side: SideArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn classify(a: ClassifyArgs) -> Result<()> {
    let model = read_model(&mut read_bytes(&a.model)?.as_slice()).with_context(|| a.model.display().to_string())?;
    let side = a.side.load(&model.config.flag_spec, Some(model.arch.vec_dim))?;
    let encoder = EncoderContext::new(
        model.vocab.clone(),
        model.config.hash_buckets,
        side.flags,
        side.uids,
        side.vectors,
        side.units,
    );
    let custom = load_atomics(&a.custom)?;
    let findings = model::flag_unregulated(&model, &encoder, &custom);
    info!("{} of {} customized rules flagged", findings.len(), custom.len());
    emit(&a.out, write_findings(&findings)?.as_bytes())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct BaselineArgs {
    /// Labeled training atomics (JSON lines).
    #[arg(long)]
    train: PathBuf,
    /// Atomics to classify (JSON lines).
    #[arg(long)]
    custom: PathBuf,
    /// Minimum neighbour count.
    #[arg(long, default_value_t = 10)]
    m: usize,
    /// Minimum majority share.
    #[arg(long, default_value_t = 0.55)]
    sigma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct VerdictLine<'a> {
    #[serde(flatten)]
    record: &'a AtomicRecord,
    #[serde(flatten)]
    verdict: NeighborVerdict,
}

pub fn baseline(a: BaselineArgs) -> Result<()> {
    let train: Vec<AtomicRule> = load_atomics(&a.train)?.iter().map(AtomicRecord::rule).collect();
    let index = NeighborIndex::new(&train);
    let mut out = Vec::new();
    for record in &load_atomics(&a.custom)? {
        let verdict = index.classify(&record.rule(), a.m, a.sigma);
        serde_json::to_writer(&mut out, &VerdictLine { record, verdict })?;
        out.push(b'\n');
    }
    emit(&a.out, &out)
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct ReportArgs {
    /// Findings from `classify` (JSON lines).
    #[arg(long)]
    findings: PathBuf,
    /// Device policy files, for coarse-attribute detection.
    #[arg(long, num_args = 1..)]
    db: Vec<PathBuf>,
    /// Directory of device TE sources, for debug-only rules.
    #[arg(long)]
    te: Option<PathBuf>,
    /// Directory of older reference policies named `<version>.cil` or
    /// `<version>.<ext>` for flat text.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-group statistics CSV; needs --custom.
    #[arg(long, requires = "custom")]
    stats: Option<PathBuf>,
    /// Customized atomics of every image (JSON lines), for statistics.
    #[arg(long)]
    custom: Option<PathBuf>,
    /// `image<TAB>manufacturer<TAB>version` lines.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    coarse_threshold: usize,
    #[arg(long, num_args = 1.., default_values = ["untrusted_app", "isolated_app"])]
    untrusted: Vec<String>,
}

fn dir_files(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| dir.display().to_string())? {
        let path = entry?.path();
        if path.is_file() && keep(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut findings = read_findings(&read(&a.findings)?).with_context(|| a.findings.display().to_string())?;
    let db = if a.db.is_empty() { None } else { Some(load_db(&a.db, false)?) };
    let te = match &a.te {
        Some(dir) => sources(&dir_files(dir, |p| p.extension().is_some_and(|e| e == "te"))?)?,
        None => Vec::new(),
    };
    let mut history = Vec::new();
    if let Some(dir) = &a.history {
        for path in dir_files(dir, |_| true)? {
            history.push(ReferenceVersion {
                version: stem(&path),
                atomics: atomic::expand(&load_db(std::slice::from_ref(&path), false)?)?,
            });
        }
    }
    let cfg = CategorizeConfig {
        coarse_threshold: a.coarse_threshold,
        untrusted: a.untrusted.into_iter().collect(),
    };
    let evidence = Evidence {
        db: db.as_ref(),
        te_sources: &te,
        history: &history,
    };
    report::categorize(&mut findings, &evidence, &cfg)?;
    emit(&a.out, write_findings(&findings)?.as_bytes())?;

    if let (Some(stats_path), Some(custom)) = (&a.stats, &a.custom) {
        let images = match &a.images {
            Some(p) => read_images(&read(p)?)?,
            None => Vec::new(),
        };
        let per_image = report::summarize(&images, &load_atomics(custom)?, &findings);
        let corpus = report::stats(per_image);
        emit(&Some(stats_path.clone()), report::write_stats_csv(&corpus)?.as_bytes())?;
    }
    Ok(())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    images: usize,
    /// Planted violations per image.
    #[arg(long, default_value_t = 8)]
    violations: usize,
    /// Legal customized rules per image.
    #[arg(long, default_value_t = 30)]
    legal: usize,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        images: a.images,
        violations_per_image: a.violations,
        legal_per_image: a.legal,
        ..SynthConfig::default()
    };
    let corpus = generate(&cfg)?;
    corpus.write_to(&a.out).with_context(|| a.out.display().to_string())?;
    info!(
        "{} images, {} customized atomics, {} planted violations",
        corpus.images.len(),
        corpus.truth.len(),
        corpus.truth.iter().filter(|t| t.violation).count()
    );
    Ok(())
}
