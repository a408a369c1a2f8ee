//! Naive reference implementations and the checks that compare the engine
//! against them. Shared by the integration tests and the acceptance run.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use repurpose_core::dataset::LabeledExample;
use repurpose_core::models::{CnnConfig, Model, ModelConfig};
use repurpose_core::report::{summarize, DrugSummary, PredictionRow};
use repurpose_core::rng;
use repurpose_core::tensor::{Tape, Tensor};
use repurpose_core::train::{bce_mean, evaluate};

fn random(r: &mut impl Rng, shape: &[usize], sparsity: f64) -> Tensor {
    Tensor::from_fn(shape, |_| if r.gen_bool(sparsity) { 0.0 } else { r.gen_range(-2.0..2.0) })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn naive_conv1d(x: &Tensor, k: &Tensor) -> Vec<f64> {
    let (len, c_in) = (x.shape()[0], x.shape()[1]);
    let (w, c_out) = (k.shape()[0], k.shape()[2]);
    let mut out = Vec::new();
    for t in 0..=len - w {
        for o in 0..c_out {
            let mut s = 0.0;
            for j in 0..w {
                for c in 0..c_in {
                    s += x.data()[(t + j) * c_in + c] * k.data()[(j * c_in + c) * c_out + o];
                }
            }
            out.push(s);
        }
    }
    out
}

pub fn naive_conv2d(x: &Tensor, k: &Tensor) -> Vec<f64> {
    let (h, w) = (x.shape()[0], x.shape()[1]);
    let (kh, kw, f) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    let mut out = Vec::new();
    for p in 0..=h - kh {
        for q in 0..=w - kw {
            for o in 0..f {
                let mut s = 0.0;
                for a in 0..kh {
                    for b in 0..kw {
                        s += x.data()[(p + a) * w + q + b] * k.data()[(a * kw + b) * f + o];
                    }
                }
                out.push(s);
            }
        }
    }
    out
}

/// Largest deviation from the naive loops over `n` random instances.
/// Odd instances are mostly zero, like one-hot input.
pub fn conv1d_max_error(seed: u64, n: usize) -> f64 {
    let mut r = rng::stream(seed, "oracle/conv1d");
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let len = r.gen_range(5..40);
        let c_in = r.gen_range(1..9);
        let width = r.gen_range(1..=5.min(len));
        let c_out = r.gen_range(1..7);
        let x = random(&mut r, &[len, c_in], if i % 2 == 0 { 0.0 } else { 0.8 });
        let k = random(&mut r, &[width, c_in, c_out], 0.0);
        let mut tape = Tape::new();
        let (xv, kv) = (tape.constant(x.clone()), tape.constant(k.clone()));
        let y = tape.conv1d_valid(xv, kv).unwrap();
        assert_eq!(tape.shape(y), &[len + 1 - width, c_out]);
        worst = worst.max(max_abs_diff(tape.value(y).data(), &naive_conv1d(&x, &k)));
    }
    worst
}

pub fn conv2d_max_error(seed: u64, n: usize) -> f64 {
    let mut r = rng::stream(seed, "oracle/conv2d");
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let h = r.gen_range(5..30);
        let w = r.gen_range(2..29);
        let kh = r.gen_range(1..=5.min(h));
        let kw = r.gen_range(1..=w);
        let f = r.gen_range(1..6);
        let x = random(&mut r, &[h, w], if i % 2 == 0 { 0.0 } else { 0.9 });
        let k = random(&mut r, &[kh, kw, f], 0.0);
        let mut tape = Tape::new();
        let (xv, kv) = (tape.constant(x.clone()), tape.constant(k.clone()));
        let y = tape.conv2d_valid(xv, kv).unwrap();
        assert_eq!(tape.shape(y), &[h + 1 - kh, w + 1 - kw, f]);
        worst = worst.max(max_abs_diff(tape.value(y).data(), &naive_conv2d(&x, &k)));
    }
    worst
}

/// Textbook form −[w⁺·t·ln σ(z) + w⁻·(1−t)·ln(1−σ(z))], averaged.
pub fn naive_bce(z: &[f64], t: &[f64], pos: &[f64], neg: &[f64]) -> f64 {
    let d = pos.len();
    let mut s = 0.0;
    for (i, (&zi, &ti)) in z.iter().zip(t).enumerate() {
        let p = 1.0 / (1.0 + (-zi).exp());
        s += -(pos[i % d] * ti * p.ln() + neg[i % d] * (1.0 - ti) * (1.0 - p).ln());
    }
    s / z.len() as f64
}

/// Largest deviation of the weighted and unweighted losses from the naive
/// formula; also checks all-one weights reduce to the unweighted loss.
pub fn bce_max_error(seed: u64, n: usize) -> f64 {
    let mut r = rng::stream(seed, "oracle/bce");
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (b, d) = (r.gen_range(1..6), r.gen_range(1..9));
        let z: Vec<f64> = (0..b * d).map(|_| r.gen_range(-8.0..8.0)).collect();
        let t: Vec<f64> = (0..b * d).map(|_| r.gen_range(0..2) as f64).collect();
        let pos: Vec<f64> = (0..d).map(|_| r.gen_range(0.05..20.0)).collect();
        let neg: Vec<f64> = (0..d).map(|_| r.gen_range(0.05..20.0)).collect();
        let ones = vec![1.0; d];
        for (wp, wn) in [(&pos, &neg), (&ones, &ones)] {
            let mut tape = Tape::new();
            let zv = tape.constant(Tensor::new(vec![b, d], z.clone()).unwrap());
            let loss = tape.bce_with_logits_weighted(zv, &t, wp, wn).unwrap();
            worst = worst.max((tape.value(loss).item() - naive_bce(&z, &t, wp, wn)).abs());
        }
        let targets: Vec<u8> = t.iter().map(|&x| x as u8).collect();
        worst = worst.max((bce_mean(&z, &targets) - naive_bce(&z, &t, &ones, &ones)).abs());
    }
    worst
}

const RESIDUES: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";

fn random_examples(r: &mut impl Rng, n: usize, width: usize) -> Vec<LabeledExample> {
    (0..n)
        .map(|i| {
            let len = r.gen_range(6..30);
            LabeledExample {
                accession: format!("E{i}"),
                residues: (0..len).map(|_| RESIDUES[r.gen_range(0..RESIDUES.len())] as char).collect(),
                species: format!("S{}", i % 3),
                genbank_title: String::new(),
                labels: Arc::from((0..width).map(|_| r.gen_range(0..2u8)).collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// `evaluate` against per-example forward passes, explicit cell tallies
/// and the textbook ratios. Counts and metrics must agree exactly.
pub fn check_evaluate(seed: u64, trials: usize) -> Result<(), String> {
    let mut r = rng::stream(seed, "oracle/evaluate");
    for trial in 0..trials {
        let width = 3 + trial % 5;
        let model = Model::build(
            ModelConfig::Cnn(CnnConfig {
                max_len: 30,
                filters_per_bank: 4,
                out_dim: width,
                paper_exact: false,
            }),
            seed + trial as u64,
        )
        .map_err(|e| e.to_string())?;
        let data = random_examples(&mut r, 40, width);
        let threshold = r.gen_range(0.3..0.7);
        let got = evaluate(&model, &data, threshold).map_err(|e| e.to_string())?;

        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        let mut loss = 0.0;
        for (i, e) in data.iter().enumerate() {
            let logits = model.predict_logits(&[model.encode(&e.residues).unwrap()]).unwrap();
            for j in 0..width {
                let p = 1.0 / (1.0 + (-logits.data()[j]).exp());
                if (p - got.probabilities[i * width + j]).abs() > 1e-12 {
                    return Err(format!("trial {trial}: probability {i},{j} differs"));
                }
                let t = e.labels[j];
                loss += -(t as f64 * p.ln() + (1.0 - t as f64) * (1.0 - p).ln());
                match (p >= threshold, t == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
        }
        let c = got.confusion;
        if (c.tp, c.fp, c.fn_, c.tn) != (tp, fp, fn_, tn) {
            return Err(format!("trial {trial}: confusion {c:?} vs oracle {:?}", (tp, fp, fn_, tn)));
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let accuracy = (tp + tn) as f64 / (tp + fp + fn_ + tn) as f64;
        let s = got.snapshot;
        if (s.accuracy, s.precision, s.recall, s.f1) != (accuracy, precision, recall, f1) {
            return Err(format!("trial {trial}: metrics {s:?} vs oracle {:?}", (accuracy, precision, recall, f1)));
        }
        if (s.loss - loss / (data.len() * width) as f64).abs() > 1e-10 {
            return Err(format!("trial {trial}: loss {} vs oracle {}", s.loss, loss / (data.len() * width) as f64));
        }
    }
    Ok(())
}

pub fn oracle_summary(rows: &[PredictionRow]) -> Vec<DrugSummary> {
    let mut drugs: Vec<String> = rows.iter().flat_map(|r| r.drugs.iter().map(|d| d.0.clone())).collect();
    drugs.sort();
    drugs.dedup();
    let mut table: Vec<DrugSummary> = drugs
        .into_iter()
        .map(|drug| {
            let mut ps: Vec<f64> = rows.iter().flat_map(|r| r.drugs.iter().filter(|d| d.0 == drug).map(|d| d.1)).collect();
            ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = ps.len() as f64;
            let mut sum = 0.0;
            for p in &ps {
                sum += p;
            }
            let mean = sum / n;
            let half_width = if ps.len() < 2 {
                None
            } else {
                let mut ss = 0.0;
                for p in &ps {
                    ss += (p - mean) * (p - mean);
                }
                Some(1.96 * (ss / (n - 1.0)).sqrt() / n.sqrt())
            };
            DrugSummary {
                drug,
                count: ps.len(),
                mean_probability: mean,
                half_width,
            }
        })
        .collect();
    // Selection sort by (count desc, mean desc, name asc).
    let mut sorted = Vec::new();
    while !table.is_empty() {
        let mut best = 0;
        for i in 1..table.len() {
            let (a, b) = (&table[i], &table[best]);
            let better = a.count > b.count
                || (a.count == b.count && a.mean_probability > b.mean_probability)
                || (a.count == b.count && a.mean_probability == b.mean_probability && a.drug < b.drug);
            if better {
                best = i;
            }
        }
        sorted.push(table.remove(best));
    }
    sorted
}

/// `summarize` against the brute-force table, including top-k truncation
/// and shuffled row order. Must agree exactly.
pub fn check_summarize(seed: u64, trials: usize) -> Result<(), String> {
    let mut r = rng::stream(seed, "oracle/summarize");
    let names: Vec<String> = (0..12).map(|i| format!("Drug{i:02}")).collect();
    for trial in 0..trials {
        let n_rows = r.gen_range(1..40);
        let mut rows: Vec<PredictionRow> = (0..n_rows)
            .map(|i| {
                let k = r.gen_range(0..6);
                let mut picked: Vec<(String, f64)> = names.choose_multiple(&mut r, k).map(|d| (d.clone(), r.gen_range(0.2..1.0))).collect();
                picked.sort_by(|a, b| b.1.total_cmp(&a.1));
                PredictionRow {
                    accession: format!("A{i}"),
                    species: "SARS-CoV-2".into(),
                    genbank_title: String::new(),
                    drugs: picked,
                }
            })
            .collect();
        let want = oracle_summary(&rows);
        let top = r.gen_range(1..5);
        let got = summarize(&rows, None).map_err(|e| e.to_string())?;
        let got_top = summarize(&rows, Some(top)).map_err(|e| e.to_string())?;
        rows.shuffle(&mut r);
        let got_shuffled = summarize(&rows, None).map_err(|e| e.to_string())?;
        if got != want || got_top != want[..top.min(want.len())] || got_shuffled != want {
            return Err(format!("trial {trial}: summary differs from brute force"));
        }
    }
    Ok(())
}
