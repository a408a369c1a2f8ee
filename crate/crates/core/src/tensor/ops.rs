//! Forward definitions of the differentiable primitives.
//!
//! Shape conventions: matrices are `rows × cols`; `conv1d_valid` takes a
//! `L × C_in` signal and `K × C_in × C_out` kernels; `conv2d_valid` takes an
//! `H × W` image and `kh × kw × F` kernels and yields `(H−kh+1) × (W−kw+1) × F`.

use rand::Rng;

use super::array::Tensor;
use super::kernels::{self, Conv2dDims};
use super::lstm;
use super::tape::{Op, Tape, Var};
use crate::error::{Error, Result};

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl Tape {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul { a, b })
    }

    /// Adds a length-`n` bias to every row of an `m × n` matrix.
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(shape_err("bias_add", sx, sb));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_exact_mut(b.len()) {
            for (o, bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push("bias_add", out, Op::BiasAdd { x, bias })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += v;
        }
        self.push("add", out, Op::Add { a, b })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push("scale", out, Op::Scale { x, factor })
    }

    /// Gathers rows of a `V × E` table; output `len(ids) × E`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let st = self.shape(table);
        if st.len() != 2 {
            return Err(shape_err("embedding", st, &[ids.len()]));
        }
        let (vocab, width) = (st[0], st[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(shape_err("embedding", st, &[bad]));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            out.extend_from_slice(&t[id * width..(id + 1) * width]);
        }
        self.push(
            "embedding",
            Tensor::new(vec![ids.len(), width], out)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn conv1d_valid(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let (sx, sk) = (self.shape(x), self.shape(kernel));
        if sx.len() != 2 || sk.len() != 3 || sx[1] != sk[1] || sx[0] < sk[0] || sk[0] == 0 {
            return Err(shape_err("conv1d_valid", sx, sk));
        }
        let (len, c_in, width, c_out) = (sx[0], sx[1], sk[0], sk[2]);
        let positions = len + 1 - width;
        let mut out = vec![0.0; positions * c_out];
        kernels::conv1d(self.value(x).data(), self.value(kernel).data(), &mut out, len, c_in, width, c_out);
        self.push("conv1d_valid", Tensor::new(vec![positions, c_out], out)?, Op::Conv1d { x, kernel })
    }

    pub fn conv2d_valid(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let (sx, sk) = (self.shape(x), self.shape(kernel));
        if sx.len() != 2 || sk.len() != 3 || sx[0] < sk[0] || sx[1] < sk[1] || sk[0] == 0 || sk[1] == 0 {
            return Err(shape_err("conv2d_valid", sx, sk));
        }
        let dims = Conv2dDims::new(sx, sk);
        let shape = vec![dims.out_rows(), dims.out_cols(), dims.filters];
        let mut out = vec![0.0; shape.iter().product()];
        kernels::conv2d(self.value(x).data(), self.value(kernel).data(), &mut out, &dims);
        self.push("conv2d_valid", Tensor::new(shape, out)?, Op::Conv2d { x, kernel })
    }

    /// Max over windows of rows of an `L × C` matrix. Gradient goes to the
    /// first maximal row of each window.
    pub fn maxpool1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 2 || window == 0 || stride == 0 || sx[0] < window {
            return Err(shape_err("maxpool1d", sx, &[window, stride]));
        }
        let (len, ch) = (sx[0], sx[1]);
        let rows = (len - window) / stride + 1;
        let data = self.value(x).data();
        let mut out = vec![0.0; rows * ch];
        let mut argmax = vec![0usize; rows * ch];
        for r in 0..rows {
            for c in 0..ch {
                let mut best = r * stride * ch + c;
                for w in 1..window {
                    let idx = (r * stride + w) * ch + c;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out[r * ch + c] = data[best];
                argmax[r * ch + c] = best;
            }
        }
        self.push("maxpool1d", Tensor::new(vec![rows, ch], out)?, Op::MaxPool { x, argmax })
    }

    /// Max over the leading axis: `N × rest` → `rest`. First maximum wins ties.
    pub fn global_maxpool(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.is_empty() || sx[0] == 0 {
            return Err(shape_err("global_maxpool", &sx, &[]));
        }
        let rest: Vec<usize> = sx[1..].to_vec();
        let width: usize = rest.iter().product();
        let data = self.value(x).data();
        let mut out = data[..width].to_vec();
        let mut argmax: Vec<usize> = (0..width).collect();
        for n in 1..sx[0] {
            let row = &data[n * width..(n + 1) * width];
            for (j, &v) in row.iter().enumerate() {
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = n * width + j;
                }
            }
        }
        self.push("global_maxpool", Tensor::new(rest, out)?, Op::MaxPool { x, argmax })
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*inputs.first().ok_or(Error::EmptyInput("concat"))?).to_vec();
        if axis >= first.len() {
            return Err(shape_err("concat", &first, &[axis]));
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", &first, s));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.len() / outer.max(1);
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        self.push(
            "concat",
            Tensor::new(out_shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    /// Stacks equally shaped values along a new leading axis.
    pub fn stack(&mut self, inputs: &[Var]) -> Result<Var> {
        let mut reshaped = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let mut s = vec![1];
            s.extend_from_slice(self.shape(v));
            reshaped.push(self.reshape(v, s)?);
        }
        self.concat(&reshaped, 0)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        self.push("reshape", out, Op::Reshape { x })
    }

    pub fn select_row(&mut self, x: Var, row: usize) -> Result<Var> {
        let sx = self.shape(x);
        if sx.is_empty() || row >= sx[0] {
            return Err(shape_err("select_row", sx, &[row]));
        }
        let out = Tensor::new(sx[1..].to_vec(), self.value(x).row(row).to_vec())?;
        self.push("select_row", out, Op::SelectRow { x, row })
    }

    fn map(&mut self, x: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())?;
        self.push(name, out, op)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, "relu", |v| v.max(0.0), Op::Relu { x })
    }

    pub fn elu(&mut self, x: Var, alpha: f64) -> Result<Var> {
        self.map(x, "elu", |v| if v > 0.0 { v } else { alpha * v.exp_m1() }, Op::Elu { x, alpha })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, "sigmoid", kernels::sigmoid, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map(x, "tanh", f64::tanh, Op::Tanh { x })
    }

    /// Inverted dropout; the identity outside training mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !self.is_training() || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.dropout_rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().zip(&mask).map(|(v, m)| v * m).collect())?;
        self.push("dropout", out, Op::Dropout { x, mask })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum { x })
    }

    /// `Σ x ⊙ w` against fixed weights.
    pub fn weighted_sum(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        if self.value(x).len() != weights.len() {
            return Err(shape_err("weighted_sum", self.shape(x), &[weights.len()]));
        }
        let s = kernels::dot(self.value(x).data(), weights);
        self.push(
            "weighted_sum",
            Tensor::scalar(s),
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
        )
    }

    /// One LSTM step. Output is `2 × H`: row 0 the new hidden state, row 1
    /// the new cell state.
    pub fn lstm_cell(&mut self, x: Var, h: Var, c: Var, w_ih: Var, w_hh: Var, bias: Var) -> Result<Var> {
        let hidden = self.value(h).len();
        let c_in = self.value(x).len();
        self.check_lstm_weights("lstm_cell", c_in, hidden, w_ih, w_hh, bias)?;
        if self.value(c).len() != hidden {
            return Err(shape_err("lstm_cell", self.shape(h), self.shape(c)));
        }
        let (h_new, c_new, cache) = lstm::cell_forward(
            self.value(x).data(),
            self.value(h).data(),
            self.value(c).data(),
            self.value(w_ih).data(),
            self.value(w_hh).data(),
            self.value(bias).data(),
        );
        let mut out = h_new;
        out.extend(c_new);
        self.push(
            "lstm_cell",
            Tensor::new(vec![2, hidden], out)?,
            Op::LstmCell {
                x,
                h,
                c,
                w_ih,
                w_hh,
                bias,
                cache,
            },
        )
    }

    /// Unidirectional LSTM over the rows of `x` (`T × C_in`) from zero state;
    /// output `T × H`, row `t` aligned with input row `t`.
    pub fn lstm_scan(&mut self, x: Var, w_ih: Var, w_hh: Var, bias: Var, reverse: bool) -> Result<Var> {
        let sx = self.shape(x);
        if sx.len() != 2 || sx[0] == 0 {
            return Err(shape_err("lstm_scan", sx, self.shape(w_ih)));
        }
        let c_in = sx[1];
        let hidden = self.shape(w_hh).first().copied().unwrap_or(0);
        self.check_lstm_weights("lstm_scan", c_in, hidden, w_ih, w_hh, bias)?;
        let (out, cache) = lstm::scan_forward(
            self.value(x),
            self.value(w_ih).data(),
            self.value(w_hh).data(),
            self.value(bias).data(),
            hidden,
            reverse,
        );
        self.push(
            "lstm_scan",
            out,
            Op::LstmScan {
                x,
                w_ih,
                w_hh,
                bias,
                cache,
            },
        )
    }

    /// Forward and time-reversed LSTM over `x`, hidden states concatenated
    /// per time step: output `T × 2H`.
    pub fn bidirectional_scan(&mut self, x: Var, forward: &LstmWeights, backward: &LstmWeights) -> Result<Var> {
        let fwd = self.lstm_scan(x, forward.w_ih, forward.w_hh, forward.bias, false)?;
        let bwd = self.lstm_scan(x, backward.w_ih, backward.w_hh, backward.bias, true)?;
        self.concat(&[fwd, bwd], 1)
    }

    fn check_lstm_weights(&self, op: &'static str, c_in: usize, hidden: usize, w_ih: Var, w_hh: Var, bias: Var) -> Result<()> {
        let g4 = 4 * hidden;
        if self.shape(w_ih) != [c_in, g4] {
            return Err(shape_err(op, self.shape(w_ih), &[c_in, g4]));
        }
        if self.shape(w_hh) != [hidden, g4] {
            return Err(shape_err(op, self.shape(w_hh), &[hidden, g4]));
        }
        if self.shape(bias) != [g4] {
            return Err(shape_err(op, self.shape(bias), &[g4]));
        }
        Ok(())
    }

    /// Class-weighted binary cross-entropy on logits, averaged over all
    /// `B × D` cells. Positives in column `d` are weighted by `pos_weights[d]`,
    /// negatives by `neg_weights[d]`.
    pub fn bce_with_logits_weighted(&mut self, logits: Var, targets: &[f64], pos_weights: &[f64], neg_weights: &[f64]) -> Result<Var> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || targets.len() != sl[0] * sl[1] || pos_weights.len() != sl[1] || neg_weights.len() != sl[1] {
            return Err(shape_err("bce_with_logits_weighted", &sl, &[targets.len(), pos_weights.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::NonBinaryTarget { value: bad });
        }
        let d = sl[1];
        let weights: Vec<f64> = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| if t == 1.0 { pos_weights[i % d] } else { neg_weights[i % d] })
            .collect();
        let scale = 1.0 / targets.len().max(1) as f64;
        let z = self.value(logits).data();
        let total: f64 = z
            .iter()
            .zip(targets)
            .zip(&weights)
            .map(|((&zi, &t), &w)| w * (kernels::softplus(zi) - t * zi))
            .sum();
        self.push(
            "bce_with_logits_weighted",
            Tensor::scalar(total * scale),
            Op::Bce {
                logits,
                targets: targets.to_vec(),
                weights,
                scale,
            },
        )
    }
}

/// Tape handles of one LSTM direction's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
}
