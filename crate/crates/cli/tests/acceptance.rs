//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Experiments run at full synthetic scale, so expect minutes.

#[path = "../../core/tests/common/oracles.rs"]
#[allow(dead_code)]
mod oracles;
#[path = "../../core/tests/common/properties.rs"]
#[allow(dead_code)]
mod properties;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use repurpose_core::dataset::{self, LabeledExample, SplitMode, SplitSpec};
use repurpose_core::models::{CnnConfig, LstmConfig, Model, ModelConfig};
use repurpose_core::synth::{generate, SynthSpec};
use repurpose_core::train::{confusion_by_species, evaluate, train, Confusion, Side, TrainConfig};
use repurpose_core::{corpus, labels};

const SEED: u64 = 7;
const WIDTH: usize = 16;
/// Drugs SARS-CoV-2 shares with its motif donor at Phase II or later.
const SHARED_DRUGS: [usize; 3] = [0, 1, 2];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let started = Instant::now();
    let mut o = f();
    let took = started.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            o.passed = false;
            o.detail = format!("{}; exceeded {:?}", o.detail, limit);
        }
    }
    (o, took)
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_repurpose"))
}

fn inspect_cnn() -> Outcome {
    let out = match binary().args(["inspect", "--model", "cnn", "--paper_exact"]).output() {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("spawn failed: {e}")),
    };
    let stdout = String::from_utf8_lossy(&out.stdout);
    let total = stdout.lines().find_map(|l| l.strip_prefix("total parameters: ")).map(|s| s.replace(',', ""));
    match total.as_deref().map(str::parse::<usize>) {
        Some(Ok(n)) => outcome(out.status.success() && n == 209_022, format!("{n} parameters")),
        _ => outcome(false, format!("no parameter total in output: {stdout}")),
    }
}

fn grad_check() -> Outcome {
    let out = match binary().args(["grad-check", "--model", "all"]).output() {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("spawn failed: {e}")),
    };
    let stdout = String::from_utf8_lossy(&out.stdout);
    let summary = stdout.lines().rev().find(|l| l.starts_with("grad-check:")).unwrap_or("no summary").to_string();
    outcome(out.status.success(), summary)
}

fn oracle_suite() -> Outcome {
    let c1 = oracles::conv1d_max_error(1, 10);
    let c2 = oracles::conv2d_max_error(2, 10);
    let bce = oracles::bce_max_error(3, 20);
    let mut problems = Vec::new();
    if c1 >= 1e-12 {
        problems.push(format!("conv1d {c1:e}"));
    }
    if c2 >= 1e-12 {
        problems.push(format!("conv2d {c2:e}"));
    }
    if bce >= 1e-10 {
        problems.push(format!("bce {bce:e}"));
    }
    if let Err(e) = oracles::check_evaluate(1, 8) {
        problems.push(format!("evaluate: {e}"));
    }
    if let Err(e) = oracles::check_summarize(2, 50) {
        problems.push(format!("summarize: {e}"));
    }
    let detail = format!("conv1d {c1:.1e}, conv2d {c2:.1e}, bce {bce:.1e}, evaluate and summarize exact");
    if problems.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, problems.join("; "))
    }
}

fn synthetic_dataset() -> Result<Vec<LabeledExample>, String> {
    let c = generate(&SynthSpec::standard(SEED)).map_err(|e| e.to_string())?;
    let viruses = corpus::virus_list(&c.drug_table);
    let aliases = corpus::SpeciesAliasTable::defaults().restricted_to(&viruses);
    let (merged, _) = corpus::merge(&c.sequences, &c.metadata, &viruses, &aliases);
    let dict = labels::build_label_dictionary(&c.drug_table, labels::LabelVersion::V3, &viruses).map_err(|e| e.to_string())?;
    Ok(labels::attach_labels(&merged, &dict).map_err(|e| e.to_string())?.0)
}

fn cnn_config() -> ModelConfig {
    ModelConfig::Cnn(CnnConfig {
        max_len: 500,
        filters_per_bank: 8,
        out_dim: WIDTH,
        paper_exact: false,
    })
}

fn lstm_config() -> ModelConfig {
    ModelConfig::Lstm(LstmConfig {
        max_len: 500,
        embed_dim: 16,
        conv_filters: 16,
        conv_kernel: 3,
        pool: 4,
        lstm_hidden: 16,
        fc1_dim: 32,
        out_dim: WIDTH,
        dropout: 0.0,
        masking: true,
    })
}

fn fit(config: ModelConfig, lr: f64, epochs: usize, tr: &[LabeledExample], ev: &[LabeledExample]) -> Result<(Model, f64), String> {
    let mut model = Model::build(config, SEED).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs,
        batch_size: 128,
        lr,
        seed: SEED,
        ..Default::default()
    };
    let out = train(&mut model, tr, ev, &cfg, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let best = out.history.iter().filter(|s| s.side == Side::Validation).map(|s| s.f1).fold(0.0, f64::max);
    Ok((model, best))
}

fn experiment_one(data: &[LabeledExample]) -> Result<(Outcome, f64), String> {
    let spec = SplitSpec {
        mode: SplitMode::Random,
        ratio: 0.8,
        seed: SEED,
        ..Default::default()
    };
    let (tr, ev, _) = dataset::split(data, &spec).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let (_, cnn) = fit(cnn_config(), 1e-2, 5, &tr, &ev)?;
    let cnn_time = started.elapsed();
    let (_, lstm) = fit(lstm_config(), 1e-3, 20, &tr, &ev)?;
    let best = cnn.max(lstm);
    let detail = format!("validation micro-F1 cnn {cnn:.4} ({cnn_time:.0?}), lstm {lstm:.4}");
    Ok((outcome(best >= 0.95, detail), best))
}

fn experiment_two(data: &[LabeledExample], reference_f1: f64) -> Result<Outcome, String> {
    let spec = SplitSpec {
        mode: SplitMode::BySpecies,
        holdouts: vec!["SARS-CoV-2".into(), "Ebola virus".into()],
        n_random_holdouts: 0,
        seed: SEED,
        ..Default::default()
    };
    let (tr, ev, _) = dataset::split(data, &spec).map_err(|e| e.to_string())?;
    let (model, _) = fit(cnn_config(), 1e-2, 5, &tr, &[])?;
    let result = evaluate(&model, &ev, 0.5).map_err(|e| e.to_string())?;
    let shared = confusion_by_species(&ev, &result.probabilities, WIDTH, 0.5, Some(&SHARED_DRUGS));
    let all = confusion_by_species(&ev, &result.probabilities, WIDTH, 0.5, None);
    let sars = shared.get("SARS-CoV-2").map(Confusion::metrics).ok_or("no SARS-CoV-2 in eval")?;
    let ebola = all.get("Ebola virus").map(Confusion::metrics).ok_or("no Ebola virus in eval")?;
    let passed = sars.recall >= 0.8 && ebola.f1 <= reference_f1 - 0.4;
    Ok(outcome(
        passed,
        format!(
            "SARS-CoV-2 shared-drug recall {:.4}; Ebola virus F1 {:.4} against reference {:.4}",
            sars.recall, ebola.f1, reference_f1
        ),
    ))
}

fn property_suite() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let checks: [(&str, Box<dyn Fn() -> Result<(), String>>); 8] = [
        ("dedup", Box::new(properties::dedup_idempotent_with_unique_keys)),
        ("exclusion", Box::new(properties::exclusion_idempotent)),
        ("balance range", Box::new(properties::balanced_counts_in_range)),
        ("published pool", Box::new(move || properties::published_pool(&fixtures))),
        ("split", Box::new(properties::split_disjoint_with_pinned_holdout)),
        ("class weights", Box::new(properties::class_weight_mass_balance)),
        ("threshold", Box::new(properties::threshold_monotonicity)),
        ("checkpoints", Box::new(properties::identical_runs_identical_checkpoints)),
    ];
    let failures: Vec<String> = checks.iter().filter_map(|(name, f)| f().err().map(|e| format!("{name}: {e}"))).collect();
    if failures.is_empty() {
        outcome(true, format!("{} properties hold", checks.len()))
    } else {
        outcome(false, failures.join("; "))
    }
}

fn report(id: usize, name: &str, (o, took): (Outcome, Duration), failed: &mut usize) {
    if !o.passed {
        *failed += 1;
    }
    println!("{} {id} {name}: {} [{took:.1?}]", if o.passed { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let mut failed = 0;
    report(1, "reference cnn size", timed(None, inspect_cnn), &mut failed);
    report(2, "gradient check", timed(Some(Duration::from_secs(120)), grad_check), &mut failed);
    report(3, "oracles", timed(None, oracle_suite), &mut failed);

    let fifteen = Some(Duration::from_secs(15 * 60));
    let data = synthetic_dataset();
    let mut reference = None;
    let one = timed(fifteen, || match data.as_deref().map_err(Clone::clone).and_then(experiment_one) {
        Ok((o, f1)) => {
            reference = Some(f1);
            o
        }
        Err(e) => outcome(false, e),
    });
    report(4, "synthetic experiment I", one, &mut failed);
    let two = timed(fifteen, || match (data.as_deref(), reference) {
        (Ok(d), Some(f1)) => experiment_two(d, f1).unwrap_or_else(|e| outcome(false, e)),
        _ => outcome(false, "experiment I did not produce a reference F1"),
    });
    report(5, "synthetic experiment II", two, &mut failed);
    report(6, "property suite", timed(Some(Duration::from_secs(60)), property_suite), &mut failed);
    println!("INFO 7 real-data results: documented, not gating");

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
