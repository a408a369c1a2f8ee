//! Gradient checks for every primitive on small random instances.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::gradcheck::{grad_check, GradCheckReport};
use super::ops::LstmWeights;
use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::{self, StageRng};

pub const TOLERANCE: f64 = 1e-4;
const COORDS: usize = 40;

fn randn(rng: &mut StageRng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = StandardNormal.sample(rng);
        v * scale
    })
}

/// Values bounded away from zero so ReLU/ELU kinks are not straddled.
fn away_from_zero(rng: &mut StageRng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let mag = rng.gen_range(0.1..1.5);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Distinct, well-separated values in random order (no max-pool ties).
fn distinct(rng: &mut StageRng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - n as f64 * 0.05).collect();
    rand::seq::SliceRandom::shuffle(values.as_mut_slice(), rng);
    Tensor::new(shape.to_vec(), values).expect("shape")
}

/// Scalarizes any output against fixed random weights.
fn probe(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = rng::stream(seed, "probe");
    let w: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    tape.weighted_sum(out, &w)
}

type Case = (&'static str, Vec<Tensor>, Vec<bool>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

fn cases(seed: u64) -> Vec<Case> {
    let mut r = rng::stream(seed, "primitive-suite");
    let r = &mut r;
    let mut v: Vec<Case> = Vec::new();
    v.push((
        "matmul",
        vec![randn(r, &[3, 4], 1.0), randn(r, &[4, 2], 1.0)],
        vec![true, true],
        Box::new(|t, x| {
            let y = t.matmul(x[0], x[1])?;
            probe(t, y, 1)
        }),
    ));
    v.push((
        "bias_add",
        vec![randn(r, &[3, 4], 1.0), randn(r, &[4], 1.0)],
        vec![true, true],
        Box::new(|t, x| {
            let y = t.bias_add(x[0], x[1])?;
            probe(t, y, 2)
        }),
    ));
    v.push((
        "embedding_lookup",
        vec![randn(r, &[6, 3], 1.0)],
        vec![true],
        Box::new(|t, x| {
            let y = t.embedding(x[0], &[0, 3, 3, 5, 1])?;
            probe(t, y, 3)
        }),
    ));
    v.push((
        "conv1d_valid",
        vec![randn(r, &[7, 3], 1.0), randn(r, &[3, 3, 4], 0.5)],
        vec![true, true],
        Box::new(|t, x| {
            let y = t.conv1d_valid(x[0], x[1])?;
            probe(t, y, 4)
        }),
    ));
    v.push((
        "conv2d_valid",
        vec![randn(r, &[6, 5], 1.0), randn(r, &[2, 3, 3], 0.5)],
        vec![true, true],
        Box::new(|t, x| {
            let y = t.conv2d_valid(x[0], x[1])?;
            probe(t, y, 5)
        }),
    ));
    v.push((
        "maxpool1d",
        vec![distinct(r, &[9, 3])],
        vec![true],
        Box::new(|t, x| {
            let y = t.maxpool1d(x[0], 3, 2)?;
            probe(t, y, 6)
        }),
    ));
    v.push((
        "global_maxpool",
        vec![distinct(r, &[8, 4])],
        vec![true],
        Box::new(|t, x| {
            let y = t.global_maxpool(x[0])?;
            probe(t, y, 7)
        }),
    ));
    v.push((
        "concat",
        vec![randn(r, &[2, 3], 1.0), randn(r, &[2, 2], 1.0)],
        vec![true, true],
        Box::new(|t, x| {
            let y = t.concat(&[x[0], x[1]], 1)?;
            probe(t, y, 8)
        }),
    ));
    v.push((
        "relu",
        vec![away_from_zero(r, &[4, 3])],
        vec![true],
        Box::new(|t, x| {
            let y = t.relu(x[0])?;
            probe(t, y, 9)
        }),
    ));
    v.push((
        "elu",
        vec![away_from_zero(r, &[4, 3])],
        vec![true],
        Box::new(|t, x| {
            let y = t.elu(x[0], 1.0)?;
            probe(t, y, 10)
        }),
    ));
    v.push((
        "sigmoid",
        vec![randn(r, &[4, 3], 2.0)],
        vec![true],
        Box::new(|t, x| {
            let y = t.sigmoid(x[0])?;
            probe(t, y, 11)
        }),
    ));
    v.push((
        "tanh",
        vec![randn(r, &[4, 3], 1.0)],
        vec![true],
        Box::new(|t, x| {
            let y = t.tanh(x[0])?;
            probe(t, y, 12)
        }),
    ));
    v.push((
        "lstm_cell",
        vec![
            randn(r, &[3], 1.0),
            randn(r, &[4], 0.5),
            randn(r, &[4], 0.5),
            randn(r, &[3, 16], 0.5),
            randn(r, &[4, 16], 0.5),
            randn(r, &[16], 0.5),
        ],
        vec![true; 6],
        Box::new(|t, x| {
            let y = t.lstm_cell(x[0], x[1], x[2], x[3], x[4], x[5])?;
            probe(t, y, 13)
        }),
    ));
    v.push((
        "bidirectional_scan",
        vec![
            randn(r, &[7, 3], 1.0),
            randn(r, &[3, 16], 0.5),
            randn(r, &[4, 16], 0.5),
            randn(r, &[16], 0.5),
            randn(r, &[3, 16], 0.5),
            randn(r, &[4, 16], 0.5),
            randn(r, &[16], 0.5),
        ],
        vec![true; 7],
        Box::new(|t, x| {
            let f = LstmWeights { w_ih: x[1], w_hh: x[2], bias: x[3] };
            let b = LstmWeights { w_ih: x[4], w_hh: x[5], bias: x[6] };
            let y = t.bidirectional_scan(x[0], &f, &b)?;
            probe(t, y, 14)
        }),
    ));
    let targets: Vec<f64> = (0..12).map(|_| if r.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
    let pos: Vec<f64> = (0..4).map(|_| r.gen_range(0.5..3.0)).collect();
    let neg: Vec<f64> = (0..4).map(|_| r.gen_range(0.5..3.0)).collect();
    v.push((
        "bce_with_logits_weighted",
        vec![randn(r, &[3, 4], 2.0)],
        vec![true],
        Box::new(move |t, x| t.bce_with_logits_weighted(x[0], &targets, &pos, &neg)),
    ));
    v.push((
        "select_row+reshape+stack",
        vec![randn(r, &[3, 4], 1.0)],
        vec![true],
        Box::new(|t, x| {
            let a = t.select_row(x[0], 2)?;
            let b = t.select_row(x[0], 0)?;
            let s = t.stack(&[a, b])?;
            let s = t.reshape(s, vec![8])?;
            let s = t.scale(s, 1.5)?;
            probe(t, s, 15)
        }),
    ));
    v
}

/// Runs the gradient check over every primitive.
pub fn run(seed: u64) -> Result<Vec<GradCheckReport>> {
    cases(seed)
        .into_iter()
        .map(|(name, inputs, diff, f)| grad_check(name, &inputs, &diff, f, COORDS, seed, TOLERANCE))
        .collect()
}
