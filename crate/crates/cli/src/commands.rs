use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use repurpose_core::corpus::{self, MergedRecord, SpeciesAliasTable};
use repurpose_core::dataset::{self, DatasetFile, LabeledExample};
use repurpose_core::labels;
use repurpose_core::manifest::Manifest;
use repurpose_core::models::{CnnConfig, Model, ModelConfig, ModelKind, PAPER_CNN_PARAMS};
use repurpose_core::report::{self, SequenceId};
use repurpose_core::rng::run_seed;
use repurpose_core::tensor::{suite, Container};
use repurpose_core::train::{self, MetricsSnapshot, Side};
use repurpose_core::{Error, Result};

use crate::config::{RunConfig, Stage};

pub fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("tsv" | "tab" | "txt") => b'\t',
        _ => b',',
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    if !path.exists() {
        return Err(Error::MissingArtifact { path: path.to_path_buf() });
    }
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<PathBuf> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, v)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn read_dataset_file(path: &Path) -> Result<DatasetFile> {
    dataset::read_dataset(open(path)?)
}

fn write_counts(path: &Path, rows: &[(String, usize)]) -> Result<PathBuf> {
    write_with(path, |w| {
        writeln!(w, "species\tcount")?;
        for (s, c) in rows {
            writeln!(w, "{s}\t{c}")?;
        }
        Ok(())
    })
}

fn counts_sorted(m: &BTreeMap<String, usize>) -> Vec<(String, usize)> {
    let mut rows: Vec<(String, usize)> = m.iter().map(|(s, c)| (s.clone(), *c)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

/// Everything a stage needs from its invocation.
pub struct Ctx {
    pub config: RunConfig,
    pub allow_mismatch: bool,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    /// Verifies the upstream manifest against the current configuration.
    fn check_upstream(&self, stage: Stage, upstream: Option<&Manifest>) -> Result<()> {
        let (Some(up_stage), Some(m)) = (stage.upstream(), upstream) else {
            return Ok(());
        };
        match m.check(&self.config.stage_hash(up_stage)?) {
            Err(e @ (Error::ConfigMismatch { .. } | Error::ArtifactChanged { .. })) if self.allow_mismatch => {
                log::warn!("{e} (continuing: --allow-config-mismatch)");
                Ok(())
            }
            other => other,
        }
    }

    fn finish(&self, stage: Stage, seed: u64, inputs: &[PathBuf], outputs: &[PathBuf], extra: serde_json::Value) -> Result<()> {
        let mut m = Manifest::new(stage.name(), self.config.stage_hash(stage)?, self.config.to_value()?, seed, inputs, outputs)?;
        m.extra = extra;
        let path = m.save(&self.config.out_dir)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

pub fn ingest(ctx: &Ctx) -> Result<()> {
    let inp = &ctx.config.inputs;
    let need = |p: &Option<PathBuf>, what: &str| p.clone().ok_or_else(|| Error::Config(format!("ingest needs a {what} table")));
    let metadata_path = need(&inp.metadata, "metadata")?;
    let drug_path = need(&inp.drugvirus, "drug-virus")?;
    if inp.sequences.is_empty() {
        return Err(Error::Config("ingest needs at least one FASTA file".into()));
    }
    let entries = corpus::parse_drugvirus(open(&drug_path)?, delimiter_for(&drug_path))?;
    let viruses = corpus::virus_list(&entries);
    let mut aliases = SpeciesAliasTable::defaults().restricted_to(&viruses);
    if let Some(p) = &inp.aliases {
        let extra = SpeciesAliasTable::parse(open(p)?, delimiter_for(p))?;
        extra.validate(&viruses)?;
        aliases.extend(&extra);
    }
    let mut sequences = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for p in &inp.sequences {
        let tag = p.file_stem().and_then(|s| s.to_str()).unwrap_or("fasta");
        for s in corpus::parse_fasta(open(p)?, tag)? {
            if !seen.insert(s.accession.clone()) {
                return Err(Error::DuplicateAccession { accession: s.accession });
            }
            sequences.push(s);
        }
    }
    let metadata = corpus::parse_metadata(open(&metadata_path)?, delimiter_for(&metadata_path))?;
    let (merged, report) = corpus::merge(&sequences, &metadata, &viruses, &aliases);
    if inp.strict_species {
        if let Some(raw) = report.dropped_by_species.keys().next() {
            return Err(Error::UnmappedSpecies { raw: raw.clone() });
        }
    }
    for (raw, n) in &report.dropped_by_species {
        log::warn!("dropped {n} records of unmapped species '{raw}'");
    }
    let outputs = vec![
        write_with(&ctx.out("merged.tsv"), |w| corpus::write_merged(&merged, w))?,
        write_with(&ctx.out("drugvirus.tsv"), |w| {
            writeln!(w, "Drug\tVirus\tPhase")?;
            for e in &entries {
                for p in &e.phases {
                    writeln!(w, "{}\t{}\t{}", e.drug, e.virus, p.name())?;
                }
            }
            Ok(())
        })?,
        write_json(&ctx.out("ingest_report.json"), &report)?,
    ];
    println!(
        "ingest: {} sequences, {} metadata rows, {} merged records over {} species ({} dropped as unmapped)",
        report.sequences,
        report.metadata_rows,
        report.matched,
        report.merged_by_species.len(),
        report.dropped_unmapped
    );
    let mut inputs = inp.sequences.clone();
    inputs.extend([metadata_path, drug_path]);
    inputs.extend(inp.aliases.clone());
    ctx.finish(Stage::Ingest, ctx.config.seed, &inputs, &outputs, json!({"species": report.merged_by_species.len()}))
}

pub fn build_dataset(ctx: &Ctx, upstream: Option<&Manifest>) -> Result<()> {
    ctx.check_upstream(Stage::BuildDataset, upstream)?;
    let cfg = &ctx.config;
    let merged_path = ctx.out("merged.tsv");
    let drug_path = ctx.out("drugvirus.tsv");
    let merged: Vec<MergedRecord> = corpus::read_merged(open(&merged_path)?)?;
    let entries = corpus::parse_drugvirus(open(&drug_path)?, b'\t')?;
    let viruses = corpus::virus_list(&entries);
    let dict = labels::build_label_dictionary(&entries, cfg.labels.version, &viruses)?;
    if cfg.labels.require_full_registry {
        dict.registry.require_full()?;
    }
    let (examples, coverage) = labels::attach_labels(&merged, &dict)?;
    let raw_counts = dataset::species_counts(&examples);
    let (deduped, dedup) = dataset::deduplicate(examples, cfg.dataset.dedup);
    let balance_cfg = cfg.balance();
    let (kept, excluded) = dataset::exclude_rare(deduped, balance_cfg.rarity_fraction);
    let kept_counts = dataset::species_counts(&kept);
    let (balanced, balance) = dataset::balance(kept, &balance_cfg)?;
    let file = DatasetFile {
        version: dict.version,
        slots: dict.slot_names(),
        examples: balanced,
    };
    let outputs = vec![
        write_with(&ctx.out("dataset.tsv"), |w| dataset::write_dataset(&file, w))?,
        write_with(&ctx.out("labels.tsv"), |w| dict.write_grid(w))?,
        write_counts(&ctx.out("counts_merged.tsv"), &counts_sorted(&raw_counts))?,
        write_counts(&ctx.out("counts_dedup.tsv"), &counts_sorted(&dedup.after))?,
        write_counts(&ctx.out("counts_kept.tsv"), &counts_sorted(&kept_counts))?,
        write_counts(&ctx.out("counts_balanced.tsv"), &dataset::profile(&file.examples))?,
        write_json(
            &ctx.out("dataset_report.json"),
            &json!({
                "label_version": dict.version,
                "drugs": dict.registry.len(),
                "registry_sha256": dict.registry.hash(),
                "coverage": coverage,
                "dedup": {"before": dedup.total_before(), "after": dedup.total_after()},
                "rarity_threshold": balance_cfg.rarity_fraction * dedup.total_after() as f64,
                "excluded_species": excluded,
                "balance": balance,
                "examples": file.examples.len(),
            }),
        )?,
    ];
    println!(
        "build-dataset: {} -> {} after dedup, {} species kept ({} excluded), {} balanced examples, {} label slots ({})",
        dedup.total_before(),
        dedup.total_after(),
        kept_counts.len(),
        excluded.len(),
        file.examples.len(),
        file.slots.len(),
        dict.version
    );
    ctx.finish(Stage::BuildDataset, cfg.seed, &[merged_path, drug_path], &outputs, json!({"examples": file.examples.len()}))
}

pub fn profile(input: &Path, output: Option<&Path>) -> Result<()> {
    let mut head = String::new();
    std::io::BufRead::read_line(&mut open(input)?, &mut head).map_err(|e| Error::io(input, e))?;
    let rows: Vec<(String, usize)> = if head.starts_with('#') {
        dataset::profile(&read_dataset_file(input)?.examples)
    } else {
        let merged = corpus::read_merged(open(input)?)?;
        let mut m = BTreeMap::new();
        for r in merged {
            *m.entry(r.species).or_insert(0usize) += 1;
        }
        counts_sorted(&m)
    };
    let total: usize = rows.iter().map(|r| r.1).sum();
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(7).max(7);
    println!("{:<width$}  {:>7}", "species", "count");
    for (s, c) in &rows {
        println!("{s:<width$}  {c:>7}");
    }
    println!("{:<width$}  {total:>7}  ({} species)", "total", rows.len());
    if let Some(p) = output {
        write_counts(p, &rows)?;
    }
    Ok(())
}

pub fn split(ctx: &Ctx, upstream: Option<&Manifest>) -> Result<()> {
    ctx.check_upstream(Stage::Split, upstream)?;
    let input = ctx.out("dataset.tsv");
    let file = read_dataset_file(&input)?;
    let spec = ctx.config.split_spec();
    let (tr, ev, rep) = dataset::split(&file.examples, &spec)?;
    let side = |examples: Vec<LabeledExample>| DatasetFile {
        version: file.version,
        slots: file.slots.clone(),
        examples,
    };
    let eval_species: Vec<&String> = rep.eval.keys().collect();
    let outputs = vec![
        write_with(&ctx.out("train.tsv"), |w| dataset::write_dataset(&side(tr), w))?,
        write_with(&ctx.out("eval.tsv"), |w| dataset::write_dataset(&side(ev), w))?,
        write_json(&ctx.out("split_report.json"), &rep)?,
    ];
    println!(
        "split ({:?}): {} train / {} eval examples; eval species: {}",
        spec.mode,
        rep.train.values().sum::<usize>(),
        rep.eval.values().sum::<usize>(),
        eval_species.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
    );
    ctx.finish(Stage::Split, spec.seed, &[input], &outputs, json!({"holdouts": rep.holdouts, "eval_species": eval_species}))
}

fn run_dir(ctx: &Ctx, run: usize) -> PathBuf {
    ctx.out(&format!("runs/run-{run}"))
}

fn checkpoint_path(ctx: &Ctx, run: usize) -> PathBuf {
    run_dir(ctx, run).join("model.rpck")
}

pub fn train(ctx: &Ctx, upstream: Option<&Manifest>) -> Result<()> {
    ctx.check_upstream(Stage::Train, upstream)?;
    let cfg = &ctx.config;
    let (train_path, eval_path) = (ctx.out("train.tsv"), ctx.out("eval.tsv"));
    let tr = read_dataset_file(&train_path)?;
    let ev = read_dataset_file(&eval_path)?;
    if cfg.train.runs == 0 {
        return Err(Error::Config("train.runs must be at least 1".into()));
    }
    let model_cfg = cfg.model_config(tr.slots.len());
    model_cfg.validate()?;
    let master = cfg.train_seed();
    let mut outputs = Vec::new();
    let mut curves = Vec::new();
    let mut finals = Vec::new();
    for run in 0..cfg.train.runs {
        let seed = run_seed(master, run);
        let tc = cfg.train_config(seed);
        let mut model = Model::build(model_cfg.clone(), seed)?;
        let started = Instant::now();
        println!("run {run}: {} with {} parameters, seed {seed}, lr {}", model.kind(), model.param_count(), tc.lr);
        let outcome = train::train(&mut model, &tr.examples, &ev.examples, &tc, |_, hist| {
            if let Some(s) = hist.iter().rev().find(|s| s.side == Side::Validation).or(hist.last()) {
                println!(
                    "  epoch {:>3} {:<10} f1 {:.4} precision {:.4} recall {:.4} loss {:.4} ({:.1?})",
                    s.epoch,
                    s.side.to_string(),
                    s.f1,
                    s.precision,
                    s.recall,
                    s.loss,
                    started.elapsed()
                );
            }
            Ok(())
        })?;
        let ckpt = checkpoint_path(ctx, run);
        let header = json!({
            "run": run,
            "seed": seed,
            "epochs": tc.epochs,
            "lr": tc.lr,
            "label_version": tr.version,
            "slots": tr.slots,
        });
        std::fs::create_dir_all(run_dir(ctx, run)).map_err(|e| Error::io(run_dir(ctx, run), e))?;
        model.to_container(header)?.save(&ckpt)?;
        let run_id = format!("run-{run}");
        outputs.push(ckpt);
        outputs.push(write_with(&run_dir(ctx, run).join("metrics.jsonl"), |w| train::write_metrics_log(&run_id, &outcome.history, w))?);
        outputs.push(write_json(&run_dir(ctx, run).join("class_weights.json"), &outcome.class_weights)?);
        if let Some(last) = outcome.history.iter().rev().find(|s| s.side == Side::Validation) {
            finals.push(*last);
        }
        curves.push((run_id, outcome.history));
    }
    outputs.push(write_with(&ctx.out("curves.csv"), |w| train::write_curves(&curves, w))?);
    let aggregate = if finals.len() >= 2 { Some(train::aggregate_runs(&finals)?) } else { None };
    outputs.push(write_json(&ctx.out("train_summary.json"), &json!({"final_validation": finals, "aggregate": aggregate}))?);
    if let Some(a) = &aggregate {
        println!("validation f1 over {} runs: {:.4} ± {:.4}", a.n, a.f1.mean, a.f1.half_width.unwrap_or(0.0));
    }
    ctx.finish(Stage::Train, master, &[train_path, eval_path], &outputs, json!({"runs": cfg.train.runs}))
}

fn load_checkpoint(path: &Path) -> Result<(Model, Vec<String>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact { path: path.to_path_buf() });
    }
    let c = Container::load(path)?;
    let slots: Vec<String> = c
        .header
        .get("slots")
        .and_then(|s| serde_json::from_value(s.clone()).ok())
        .ok_or_else(|| Error::Checkpoint(format!("{}: header lacks slot names", path.display())))?;
    let model = Model::from_container(&c)?;
    if slots.len() != model.out_dim() {
        return Err(Error::Checkpoint(format!("{} slot names for {} outputs", slots.len(), model.out_dim())));
    }
    Ok((model, slots))
}

fn runs_to_use(ctx: &Ctx, only: Option<usize>) -> Vec<usize> {
    match only {
        Some(r) => vec![r],
        None => (0..ctx.config.train.runs.max(1)).collect(),
    }
}

fn check_slots(model_slots: &[String], data: &DatasetFile) -> Result<()> {
    if model_slots != data.slots.as_slice() {
        return Err(Error::LabelLength {
            expected: model_slots.len(),
            found: data.slots.len(),
        });
    }
    Ok(())
}

pub fn evaluate(ctx: &Ctx, upstream: Option<&Manifest>, input: Option<&Path>, only: Option<usize>) -> Result<()> {
    ctx.check_upstream(Stage::Evaluate, upstream)?;
    let input = input.map(Path::to_path_buf).unwrap_or_else(|| ctx.out("eval.tsv"));
    let data = read_dataset_file(&input)?;
    let threshold = ctx.config.train.threshold;
    let mut runs = Vec::new();
    let mut finals: Vec<MetricsSnapshot> = Vec::new();
    let mut inputs = vec![input.clone()];
    for run in runs_to_use(ctx, only) {
        let ckpt = checkpoint_path(ctx, run);
        let (model, slots) = load_checkpoint(&ckpt)?;
        check_slots(&slots, &data)?;
        let ev = train::evaluate(&model, &data.examples, threshold)?;
        let by_species: BTreeMap<String, _> = train::confusion_by_species(&data.examples, &ev.probabilities, slots.len(), threshold, None)
            .into_iter()
            .map(|(s, c)| (s, json!({"confusion": c, "metrics": c.metrics()})))
            .collect();
        let s = ev.snapshot;
        println!(
            "run {run}: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} loss {:.4}",
            s.accuracy, s.precision, s.recall, s.f1, s.loss
        );
        runs.push(json!({"run": run, "metrics": s, "confusion": ev.confusion, "by_species": by_species}));
        finals.push(s);
        inputs.push(ckpt);
    }
    let aggregate = if finals.len() >= 2 { Some(train::aggregate_runs(&finals)?) } else { None };
    let outputs = vec![write_json(&ctx.out("evaluation.json"), &json!({"input": input, "threshold": threshold, "runs": runs, "aggregate": aggregate}))?];
    ctx.finish(Stage::Evaluate, ctx.config.train_seed(), &inputs, &outputs, serde_json::Value::Null)
}

pub fn predict(ctx: &Ctx, upstream: Option<&Manifest>, input: Option<&Path>, only: Option<usize>, dump: Option<&str>) -> Result<()> {
    ctx.check_upstream(Stage::Predict, upstream)?;
    let input = input.map(Path::to_path_buf).unwrap_or_else(|| ctx.out("eval.tsv"));
    let data = read_dataset_file(&input)?;
    let threshold = ctx.config.report.threshold;
    let ids: Vec<SequenceId> = data.examples.iter().map(SequenceId::from).collect();
    let mut inputs = vec![input.clone()];
    let mut outputs = Vec::new();
    for run in runs_to_use(ctx, only) {
        let ckpt = checkpoint_path(ctx, run);
        let (model, slots) = load_checkpoint(&ckpt)?;
        check_slots(&slots, &data)?;
        let probs = train::predict_probabilities(&model, &data.examples, 64)?;
        let rows = report::postprocess(&ids, &probs, &slots, threshold)?;
        let path = ctx.out(&format!("predictions/run-{run}.tsv"));
        outputs.push(write_with(&path, |w| report::write_predictions(&rows, w))?);
        let with_any = rows.iter().filter(|r| !r.drugs.is_empty()).count();
        println!("run {run}: {} sequences scored, {with_any} with at least one candidate at p >= {threshold}", rows.len());
        if let (Some(acc), true) = (dump, inputs.len() == 1) {
            let ex = data
                .examples
                .iter()
                .find(|e| e.accession == acc)
                .ok_or_else(|| Error::Config(format!("accession '{acc}' not in {}", input.display())))?;
            let c = report::dump_activations(&model, &model.encode(&ex.residues)?)?;
            let p = ctx.out(&format!("activations/{acc}.rpck"));
            std::fs::create_dir_all(p.parent().expect("joined path")).map_err(|e| Error::io(&p, e))?;
            c.save(&p)?;
            outputs.push(p);
        }
        inputs.push(ckpt);
    }
    ctx.finish(Stage::Predict, ctx.config.train_seed(), &inputs, &outputs, json!({"threshold": threshold}))
}

pub fn report(ctx: &Ctx, upstream: Option<&Manifest>, species: &[String]) -> Result<()> {
    ctx.check_upstream(Stage::Report, upstream)?;
    let dir = ctx.out("predictions");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(report::read_predictions(open(f)?)?);
    }
    if !species.is_empty() {
        rows.retain(|r| species.contains(&r.species));
    }
    let table = report::summarize_by_species(&rows, ctx.config.summary.top_k)?;
    let path = write_with(&ctx.out("summary.tsv"), |w| {
        let mut first = true;
        for (s, sums) in &table {
            let mut buf = Vec::new();
            report::write_summary(s, sums, &mut buf)?;
            let text = String::from_utf8(buf).map_err(|e| Error::Internal(e.to_string()))?;
            // One header for the whole file.
            let body = if first { text.as_str() } else { text.split_once('\n').map_or("", |x| x.1) };
            w.write_all(body.as_bytes())?;
            first = false;
        }
        Ok(())
    })?;
    for (s, sums) in &table {
        println!("{s} ({} runs):", files.len());
        for (i, d) in sums.iter().enumerate().take(10) {
            let hw = d.half_width.map_or_else(|| "n/a".to_string(), |h| format!("{h:.3}"));
            println!("  {:>2}. {:<24} count {:>5}  mean p {:.3} ± {hw}", i + 1, d.drug, d.count, d.mean_probability);
        }
    }
    ctx.finish(Stage::Report, ctx.config.train_seed(), &files, &[path], json!({"species": table.len()}))
}

pub struct GradCheckOutcome {
    pub checks: usize,
    pub failed: Vec<String>,
}

pub fn grad_check(kinds: &[ModelKind], seed: u64, output: Option<&Path>) -> Result<GradCheckOutcome> {
    let started = Instant::now();
    let mut reports = suite::run(seed)?;
    for &k in kinds {
        reports.push(repurpose_core::models::grad_check_model(k, seed, suite::TOLERANCE)?);
    }
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    println!("grad-check: {} checks, {} failed, {:.1?}", reports.len(), failed.len(), started.elapsed());
    if let Some(p) = output {
        write_json(p, &reports)?;
    }
    Ok(GradCheckOutcome {
        checks: reports.len(),
        failed,
    })
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn inspect(kind: ModelKind, paper_exact: bool, checkpoint: Option<&Path>, out_dim: Option<usize>, base: &RunConfig) -> Result<usize> {
    let model = if let Some(p) = checkpoint {
        Model::from_container(&Container::load(p)?)?
    } else {
        let config = match (kind, paper_exact) {
            (ModelKind::Cnn, true) => ModelConfig::Cnn(CnnConfig {
                paper_exact: true,
                ..CnnConfig::default()
            }),
            (ModelKind::Lstm, true) => return Err(Error::Config("--paper_exact applies to the cnn only".into())),
            (ModelKind::Cnn, false) => ModelConfig::Cnn(base.model.cnn.clone()),
            (ModelKind::Lstm, false) => ModelConfig::Lstm(base.model.lstm.clone()),
        };
        let mut config = config;
        if let Some(d) = out_dim {
            config.set_out_dim(d);
        }
        config.validate()?;
        Model::build(config, 0)?
    };
    let layers = model.layers();
    println!("{:<24} {:<18} {:>12}", "layer", "output shape", "params");
    for l in &layers {
        println!("{:<24} {:<18} {:>12}", l.name, format!("{:?}", l.output_shape), thousands(l.params));
    }
    let total = model.param_count();
    println!("total parameters: {}", thousands(total));
    if paper_exact && total != PAPER_CNN_PARAMS {
        return Err(Error::Config(format!("expected {PAPER_CNN_PARAMS} parameters, found {total}")));
    }
    Ok(total)
}

pub fn upstream_manifest(dir: &Path, stage: Stage) -> Result<Option<Manifest>> {
    match stage.upstream() {
        None => Ok(None),
        Some(up) => Manifest::load(dir, up.name()).map(Some),
    }
}
