use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, StreamRng};

use super::tensor::{Parameter, Tensor};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise activation with an analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let data = x
            .data()
            .iter()
            .map(|&v| match self {
                Activation::Tanh => v.tanh(),
                Activation::Sigmoid => sigmoid(v),
                Activation::Relu => v.max(0.0),
            })
            .collect();
        Tensor::new(x.shape().to_vec(), data).expect("same shape")
    }

    /// Input gradient given the forward input `x`, output `y`, and the
    /// output gradient `dy`.
    pub fn backward(&self, x: &Tensor, y: &Tensor, dy: &Tensor) -> Tensor {
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .zip(dy.data())
            .map(|((&xi, &yi), &di)| {
                di * match self {
                    Activation::Tanh => 1.0 - yi * yi,
                    Activation::Sigmoid => yi * (1.0 - yi),
                    Activation::Relu => {
                        if xi > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();
        Tensor::new(x.shape().to_vec(), data).expect("same shape")
    }
}

/// Numerically stable softmax over a 1-D logit vector.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Dimension("softmax of empty vector".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / sum).collect())
}

/// Gradient of a scalar through softmax: given the softmax output `y`
/// and the output gradient `dy`, returns the logit gradient.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    debug_assert_eq!(y.len(), dy.len());
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(&yi, &di)| yi * (di - dot)).collect()
}

/// Affine layer `y = x W^T + b` with weight shape `[out, in]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearLayer {
    pub weight: Parameter,
    pub bias: Parameter,
    out_dim: usize,
    in_dim: usize,
}

/// Saved forward input, needed to accumulate weight gradients.
#[derive(Debug, Clone)]
pub struct LinearCache {
    input: Tensor,
    rows: usize,
}

impl LinearLayer {
    pub fn new(id: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Parameter::new(format!("{id}.w"), Tensor::zeros(vec![out_dim, in_dim])),
            bias: Parameter::new(format!("{id}.b"), Tensor::zeros(vec![out_dim])),
            out_dim,
            in_dim,
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn init_xavier(&mut self, rng: &mut StreamRng) {
        let bound = (6.0 / (self.in_dim + self.out_dim) as f64).sqrt();
        for w in self.weight.value_mut().data_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        self.bias.value_mut().fill(0.0);
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Forward over a `[in]` vector or `[N, in]` batch.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LinearCache)> {
        let (rows, cols) = match x.shape() {
            [c] => (1, *c),
            [r, c] => (*r, *c),
            s => return Err(Error::Dimension(format!("linear input rank {:?}", s))),
        };
        if cols != self.in_dim {
            return Err(Error::Dimension(format!(
                "linear expects input dim {}, got {}",
                self.in_dim, cols
            )));
        }
        let w = self.weight.value().data();
        let b = self.bias.value().data();
        let mut out = vec![0.0; rows * self.out_dim];
        for r in 0..rows {
            let xr = &x.data()[r * cols..(r + 1) * cols];
            let or = &mut out[r * self.out_dim..(r + 1) * self.out_dim];
            for (o, acc) in or.iter_mut().enumerate() {
                let wrow = &w[o * cols..(o + 1) * cols];
                *acc = b[o] + dot(wrow, xr);
            }
        }
        let shape = if x.shape().len() == 1 {
            vec![self.out_dim]
        } else {
            vec![rows, self.out_dim]
        };
        Ok((
            Tensor::new(shape, out).expect("shape consistent"),
            LinearCache {
                input: x.clone(),
                rows,
            },
        ))
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &LinearCache, dy: &Tensor) -> Tensor {
        let rows = cache.rows;
        let cols = self.in_dim;
        debug_assert_eq!(dy.len(), rows * self.out_dim);
        let mut dw = vec![0.0; self.out_dim * cols];
        let mut db = vec![0.0; self.out_dim];
        let mut dx = vec![0.0; rows * cols];
        let w = self.weight.value().data();
        for r in 0..rows {
            let xr = &cache.input.data()[r * cols..(r + 1) * cols];
            let dyr = &dy.data()[r * self.out_dim..(r + 1) * self.out_dim];
            for (o, &g) in dyr.iter().enumerate() {
                db[o] += g;
                let dwrow = &mut dw[o * cols..(o + 1) * cols];
                let wrow = &w[o * cols..(o + 1) * cols];
                let dxr = &mut dx[r * cols..(r + 1) * cols];
                for c in 0..cols {
                    dwrow[c] += g * xr[c];
                    dxr[c] += g * wrow[c];
                }
            }
        }
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        Tensor::new(cache.input.shape().to_vec(), dx).expect("same shape as input")
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Single LSTM cell step. Gate order in the stacked weights is
/// input, forget, candidate, output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_ih: Parameter, // [4H, I]
    pub w_hh: Parameter, // [4H, H]
    pub b_ih: Parameter, // [4H]
    pub b_hh: Parameter, // [4H]
    input_dim: usize,
    hidden_dim: usize,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn new(id: &str, input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_ih: Parameter::new(
                format!("{id}.w_ih"),
                Tensor::zeros(vec![4 * hidden_dim, input_dim]),
            ),
            w_hh: Parameter::new(
                format!("{id}.w_hh"),
                Tensor::zeros(vec![4 * hidden_dim, hidden_dim]),
            ),
            b_ih: Parameter::new(format!("{id}.b_ih"), Tensor::zeros(vec![4 * hidden_dim])),
            b_hh: Parameter::new(format!("{id}.b_hh"), Tensor::zeros(vec![4 * hidden_dim])),
            input_dim,
            hidden_dim,
        }
    }

    /// Uniform init in `[-1/sqrt(H), 1/sqrt(H)]`, the usual LSTM default.
    pub fn init_uniform(&mut self, rng: &mut StreamRng) {
        let bound = 1.0 / (self.hidden_dim as f64).sqrt();
        for p in [&mut self.w_ih, &mut self.w_hh, &mut self.b_ih, &mut self.b_hh] {
            for w in p.value_mut().data_mut() {
                *w = rng.gen_range(-bound..bound);
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.b_ih, &mut self.b_hh]
    }

    pub fn forward(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, LstmCache)> {
        let hd = self.hidden_dim;
        if x.len() != self.input_dim || h_prev.len() != hd || c_prev.len() != hd {
            return Err(Error::Dimension(format!(
                "lstm expects x[{}], h[{}], c[{}]; got x[{}], h[{}], c[{}]",
                self.input_dim,
                hd,
                hd,
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        let w_ih = self.w_ih.value().data();
        let w_hh = self.w_hh.value().data();
        let b_ih = self.b_ih.value().data();
        let b_hh = self.b_hh.value().data();

        let mut gates = vec![0.0; 4 * hd];
        for (gidx, gate) in gates.iter_mut().enumerate() {
            let wrow = &w_ih[gidx * self.input_dim..(gidx + 1) * self.input_dim];
            let urow = &w_hh[gidx * hd..(gidx + 1) * hd];
            *gate = b_ih[gidx] + b_hh[gidx] + dot(wrow, x) + dot(urow, h_prev);
        }
        let mut i = vec![0.0; hd];
        let mut f = vec![0.0; hd];
        let mut g = vec![0.0; hd];
        let mut o = vec![0.0; hd];
        for k in 0..hd {
            i[k] = sigmoid(gates[k]);
            f[k] = sigmoid(gates[hd + k]);
            g[k] = gates[2 * hd + k].tanh();
            o[k] = sigmoid(gates[3 * hd + k]);
        }
        let mut c = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for k in 0..hd {
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
        let cache = LstmCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        Ok((h, c, cache))
    }

    /// Backward through one step. `dh`/`dc` are gradients on the new
    /// hidden and cell state; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &mut self,
        cache: &LstmCache,
        dh: &[f64],
        dc_in: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden_dim;
        let id = self.input_dim;
        let mut d_gates = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for k in 0..hd {
            let do_ = dh[k] * cache.tanh_c[k];
            let dc = dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]) + dc_in[k];
            let di = dc * cache.g[k];
            let df = dc * cache.c_prev[k];
            let dg = dc * cache.i[k];
            dc_prev[k] = dc * cache.f[k];
            d_gates[k] = di * cache.i[k] * (1.0 - cache.i[k]);
            d_gates[hd + k] = df * cache.f[k] * (1.0 - cache.f[k]);
            d_gates[2 * hd + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
            d_gates[3 * hd + k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
        }

        let mut dw_ih = vec![0.0; 4 * hd * id];
        let mut dw_hh = vec![0.0; 4 * hd * hd];
        let mut dx = vec![0.0; id];
        let mut dh_prev = vec![0.0; hd];
        let w_ih = self.w_ih.value().data();
        let w_hh = self.w_hh.value().data();
        for (gidx, &dg) in d_gates.iter().enumerate() {
            let wrow = &w_ih[gidx * id..(gidx + 1) * id];
            let urow = &w_hh[gidx * hd..(gidx + 1) * hd];
            for c in 0..id {
                dw_ih[gidx * id + c] += dg * cache.x[c];
                dx[c] += dg * wrow[c];
            }
            for c in 0..hd {
                dw_hh[gidx * hd + c] += dg * cache.h_prev[c];
                dh_prev[c] += dg * urow[c];
            }
        }
        self.w_ih.accumulate_grad(&dw_ih);
        self.w_hh.accumulate_grad(&dw_hh);
        self.b_ih.accumulate_grad(&d_gates);
        self.b_hh.accumulate_grad(&d_gates);
        (dx, dh_prev, dc_prev)
    }
}

/// Feed-forward attention over K per-domain feature pairs.
///
/// Scores are `e_k = v . tanh(W u_k + b)`; weights are `softmax(e)`; the
/// context keeps per-domain structure as the 2K-dim concatenation of
/// `weight_k * u_k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionUnit {
    pub score_w: Parameter, // [A, 2]
    pub score_b: Parameter, // [A]
    pub score_v: Parameter, // [A]
    attn_dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    features: Vec<f64>, // K x 2 row-major
    pre: Vec<f64>,      // K x A, tanh outputs
    weights: Vec<f64>,  // K
    k: usize,
}

impl AttentionUnit {
    pub fn new(id: &str, attn_dim: usize) -> Self {
        Self {
            score_w: Parameter::new(format!("{id}.w"), Tensor::zeros(vec![attn_dim, 2])),
            score_b: Parameter::new(format!("{id}.b"), Tensor::zeros(vec![attn_dim])),
            score_v: Parameter::new(format!("{id}.v"), Tensor::zeros(vec![attn_dim])),
            attn_dim,
        }
    }

    pub fn init_xavier(&mut self, rng: &mut StreamRng) {
        let bound = (6.0 / (2 + self.attn_dim) as f64).sqrt();
        for w in self.score_w.value_mut().data_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        self.score_b.value_mut().fill(0.0);
        let vb = (3.0 / self.attn_dim as f64).sqrt();
        for w in self.score_v.value_mut().data_mut() {
            *w = rng.gen_range(-vb..vb);
        }
    }

    pub fn attn_dim(&self) -> usize {
        self.attn_dim
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.score_w, &mut self.score_b, &mut self.score_v]
    }

    /// `features` is a `[K, 2]` tensor of per-domain `[q_k, p_k]` pairs.
    /// Returns `(context [2K], weights [K], cache)`.
    pub fn forward(&self, features: &Tensor) -> Result<(Vec<f64>, Vec<f64>, AttentionCache)> {
        let k = match features.shape() {
            [k, 2] if *k >= 1 => *k,
            s => {
                return Err(Error::Dimension(format!(
                    "attention expects [K,2] features with K >= 1, got {:?}",
                    s
                )))
            }
        };
        let a = self.attn_dim;
        let w = self.score_w.value().data();
        let b = self.score_b.value().data();
        let v = self.score_v.value().data();
        let mut pre = vec![0.0; k * a];
        let mut scores = vec![0.0; k];
        for ki in 0..k {
            let u = &features.data()[ki * 2..ki * 2 + 2];
            let mut e = 0.0;
            for ai in 0..a {
                let t = (w[ai * 2] * u[0] + w[ai * 2 + 1] * u[1] + b[ai]).tanh();
                pre[ki * a + ai] = t;
                e += v[ai] * t;
            }
            scores[ki] = e;
        }
        let weights = softmax(&scores)?;
        let mut context = vec![0.0; 2 * k];
        for ki in 0..k {
            context[2 * ki] = weights[ki] * features.data()[ki * 2];
            context[2 * ki + 1] = weights[ki] * features.data()[ki * 2 + 1];
        }
        Ok((
            context,
            weights.clone(),
            AttentionCache {
                features: features.data().to_vec(),
                pre,
                weights,
                k,
            },
        ))
    }

    /// Backward from a context gradient; returns the `[K, 2]` feature
    /// gradient.
    pub fn backward(&mut self, cache: &AttentionCache, dcontext: &[f64]) -> Tensor {
        let k = cache.k;
        let a = self.attn_dim;
        debug_assert_eq!(dcontext.len(), 2 * k);
        let mut dfeat = vec![0.0; 2 * k];
        let mut dweights = vec![0.0; k];
        for ki in 0..k {
            let u = &cache.features[ki * 2..ki * 2 + 2];
            dweights[ki] = dcontext[2 * ki] * u[0] + dcontext[2 * ki + 1] * u[1];
            dfeat[2 * ki] += cache.weights[ki] * dcontext[2 * ki];
            dfeat[2 * ki + 1] += cache.weights[ki] * dcontext[2 * ki + 1];
        }
        let dscores = softmax_backward(&cache.weights, &dweights);

        let w = self.score_w.value().data();
        let v = self.score_v.value().data();
        let mut dw = vec![0.0; a * 2];
        let mut db = vec![0.0; a];
        let mut dv = vec![0.0; a];
        for ki in 0..k {
            let u = &cache.features[ki * 2..ki * 2 + 2];
            let de = dscores[ki];
            for ai in 0..a {
                let t = cache.pre[ki * a + ai];
                dv[ai] += de * t;
                let dt = de * v[ai] * (1.0 - t * t);
                dw[ai * 2] += dt * u[0];
                dw[ai * 2 + 1] += dt * u[1];
                db[ai] += dt;
                dfeat[2 * ki] += dt * w[ai * 2];
                dfeat[2 * ki + 1] += dt * w[ai * 2 + 1];
            }
        }
        self.score_w.accumulate_grad(&dw);
        self.score_b.accumulate_grad(&db);
        self.score_v.accumulate_grad(&dv);
        Tensor::new(vec![k, 2], dfeat).expect("feature gradient shape")
    }
}

/// Free-function form of [`LstmCell::forward`] matching the rest of the
/// layer API: returns `(y, h, c)` with `y = h`.
pub fn lstm_forward(
    cell: &LstmCell,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (h, c, _) = cell.forward(x, h_prev, c_prev)?;
    Ok((h.clone(), h, c))
}

/// Free-function form of [`AttentionUnit::forward`].
pub fn attention_forward(unit: &AttentionUnit, features: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let (context, weights, _) = unit.forward(features)?;
    Ok((context, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor1(data: &[f64]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity_passthrough() {
        let mut layer = LinearLayer::new("l", 2, 2);
        layer.weight.value_mut().data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let (y, _) = layer.forward(&tensor1(&[3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn linear_zero_weight_outputs_bias() {
        let mut layer = LinearLayer::new("l", 3, 2);
        layer.bias.value_mut().data_mut().copy_from_slice(&[1.0, 1.0]);
        let (y, _) = layer.forward(&tensor1(&[5.0, -2.0, 0.5])).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0]);
    }

    #[test]
    fn linear_rejects_wrong_input_dim() {
        let layer = LinearLayer::new("l", 3, 2);
        assert!(layer.forward(&tensor1(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn tanh_and_sigmoid_symmetry_points() {
        let x = tensor1(&[0.0]);
        let y = Activation::Tanh.forward(&x);
        assert_eq!(y.data()[0], 0.0);
        let dx = Activation::Tanh.backward(&x, &y, &tensor1(&[1.0]));
        assert_eq!(dx.data()[0], 1.0);

        let y = Activation::Sigmoid.forward(&x);
        assert_eq!(y.data()[0], 0.5);
        let dx = Activation::Sigmoid.backward(&x, &y, &tensor1(&[1.0]));
        assert_eq!(dx.data()[0], 0.25);
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let b = softmax(&[101.0, 102.0, 103.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let raw: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).collect();
        let sum: f64 = raw.iter().sum();
        for (got, want) in p.iter().zip(raw.iter().map(|v| v / sum)) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn lstm_zero_weights_zero_state_gives_zero_hidden() {
        let cell = LstmCell::new("lstm", 3, 4);
        let (h, c, _) = cell.forward(&[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn lstm_zero_input_candidate_contributes_nothing() {
        // All weights zero: gates are sigmoid(0)=0.5, candidate tanh(0)=0,
        // so c' = 0.5*c_prev and h' = 0.5*tanh(0.5*c_prev).
        let cell = LstmCell::new("lstm", 2, 3);
        let c_prev = [0.8, -0.4, 2.0];
        let (h, c, _) = cell.forward(&[0.0, 0.0], &[0.0; 3], &c_prev).unwrap();
        for k in 0..3 {
            assert!((c[k] - 0.5 * c_prev[k]).abs() < 1e-15);
            assert!((h[k] - 0.5 * (0.5 * c_prev[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_rejects_shape_mismatch() {
        let cell = LstmCell::new("lstm", 2, 3);
        assert!(cell.forward(&[0.0; 3], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(cell.forward(&[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn attention_identical_features_give_uniform_weights() {
        let mut unit = AttentionUnit::new("attn", 4);
        let mut rng = crate::rng::stream(1, 0xA77, 0);
        unit.init_xavier(&mut rng);
        let features = Tensor::new(vec![3, 2], vec![0.7, -0.2, 0.7, -0.2, 0.7, -0.2]).unwrap();
        let (_, weights, _) = unit.forward(&features).unwrap();
        for w in &weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_singleton_passes_feature_through() {
        let mut unit = AttentionUnit::new("attn", 4);
        let mut rng = crate::rng::stream(2, 0xA77, 0);
        unit.init_xavier(&mut rng);
        let features = Tensor::new(vec![1, 2], vec![0.3, 0.9]).unwrap();
        let (context, weights, _) = unit.forward(&features).unwrap();
        assert!((weights[0] - 1.0).abs() < 1e-15);
        assert!((context[0] - 0.3).abs() < 1e-15);
        assert!((context[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn attention_rejects_empty() {
        let unit = AttentionUnit::new("attn", 4);
        let features = Tensor::new(vec![0, 2], vec![]).unwrap();
        assert!(unit.forward(&features).is_err());
    }
}
