//! Two-hidden-layer MLP with hand-written softmax cross-entropy backprop.
//!
//! Parameters live in one flat vector in the fixed order `w1, b1, w2, b2,
//! w3, b3`, with each weight matrix row-major (`w1` is `h1 x p`, `w2` is
//! `h2 x h1`, `w3` is `k x h2`). The flat layout is the contract between
//! the model, the optimizer state, and the finite-difference check. The
//! activation is the positive part with derivative 0 at 0.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Central-difference step for the gradient check.
const FD_STEP: f64 = 1e-5;
/// Denominator floor in the relative-error metric, so exact-zero gradient
/// pairs compare as zero error instead of 0/0.
const FD_ABS_FLOOR: f64 = 1e-4;

/// Feed-forward classifier `p -> h1 -> h2 -> k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// Input features.
    pub p: usize,
    /// First hidden width.
    pub h1: usize,
    /// Second hidden width.
    pub h2: usize,
    /// Classes.
    pub k: usize,
    theta: Vec<f64>,
}

fn check_sizes(p: usize, h1: usize, h2: usize, k: usize) -> Result<()> {
    if p == 0 || h1 == 0 || h2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "mlp layer sizes must be >= 1, got p {p}, h1 {h1}, h2 {h2}"
        )));
    }
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "mlp needs at least 2 classes, got {k}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// Seeded init: each weight matrix is uniform in
    /// `[-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))]`,
    /// drawn layer by layer in flat order; biases start at zero.
    pub fn new(p: usize, h1: usize, h2: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        check_sizes(p, h1, h2, k)?;
        let mut model = Self::zeros(p, h1, h2, k)?;
        // (weight block length, fan_in + fan_out, trailing bias length)
        let layers = [
            (h1 * p, p + h1, h1),
            (h2 * h1, h1 + h2, h2),
            (k * h2, h2 + k, k),
        ];
        let mut offset = 0;
        for (len, fan_sum, bias_len) in layers {
            let limit = (6.0 / fan_sum as f64).sqrt();
            for w in &mut model.theta[offset..offset + len] {
                *w = rng.uniform_in(-limit, limit);
            }
            offset += len + bias_len;
        }
        Ok(model)
    }

    /// All-zero parameters (uniform logits).
    pub fn zeros(p: usize, h1: usize, h2: usize, k: usize) -> Result<Self> {
        check_sizes(p, h1, h2, k)?;
        let count = p * h1 + h1 + h1 * h2 + h2 + h2 * k + k;
        Ok(Self {
            p,
            h1,
            h2,
            k,
            theta: vec![0.0; count],
        })
    }

    /// Flat parameter count `p*h1 + h1 + h1*h2 + h2 + h2*k + k`.
    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    /// Flat parameters in `w1, b1, w2, b2, w3, b3` order.
    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    /// Mutable view of the flat parameters.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Replaces the parameters from a flat vector of the same length.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                context: "mlp set_params",
                expected: self.theta.len(),
                got: flat.len(),
            });
        }
        self.theta.copy_from_slice(flat);
        Ok(())
    }

    fn blocks(&self) -> [(usize, usize); 6] {
        let (p, h1, h2, k) = (self.p, self.h1, self.h2, self.k);
        let mut out = [(0usize, 0usize); 6];
        let lens = [h1 * p, h1, h2 * h1, h2, k * h2, k];
        let mut offset = 0;
        for (slot, &len) in out.iter_mut().zip(&lens) {
            *slot = (offset, len);
            offset += len;
        }
        out
    }

    fn check_batch(&self, xs: &[f64], ys: &[usize]) -> Result<usize> {
        let b = ys.len();
        if b == 0 {
            return Err(Error::InvalidConfig("mlp batch must be nonempty".into()));
        }
        if xs.len() != b * self.p {
            return Err(Error::DimensionMismatch {
                context: "mlp batch inputs",
                expected: b * self.p,
                got: xs.len(),
            });
        }
        if let Some(&bad) = ys.iter().find(|&&y| y >= self.k) {
            return Err(Error::InvalidConfig(format!(
                "mlp label {bad} out of range for {} classes",
                self.k
            )));
        }
        Ok(b)
    }

    /// Forward pass for one sample into the provided activation buffers.
    fn forward_one(&self, x: &[f64], z1: &mut [f64], z2: &mut [f64], z3: &mut [f64]) {
        let [bw1, bb1, bw2, bb2, bw3, bb3] = self.blocks();
        let th = &self.theta;
        for j in 0..self.h1 {
            let row = &th[bw1.0 + j * self.p..bw1.0 + (j + 1) * self.p];
            let mut acc = th[bb1.0 + j];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            z1[j] = acc;
        }
        for j in 0..self.h2 {
            let row = &th[bw2.0 + j * self.h1..bw2.0 + (j + 1) * self.h1];
            let mut acc = th[bb2.0 + j];
            for (w, z) in row.iter().zip(z1.iter()) {
                acc += w * z.max(0.0);
            }
            z2[j] = acc;
        }
        for c in 0..self.k {
            let row = &th[bw3.0 + c * self.h2..bw3.0 + (c + 1) * self.h2];
            let mut acc = th[bb3.0 + c];
            for (w, z) in row.iter().zip(z2.iter()) {
                acc += w * z.max(0.0);
            }
            z3[c] = acc;
        }
    }

    /// Stable per-sample cross-entropy pieces: `(log-sum-exp, max logit)`.
    fn lse(z3: &[f64]) -> (f64, f64) {
        let mx = z3.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z3.iter().map(|z| (z - mx).exp()).sum();
        (sum.ln() + mx, mx)
    }

    /// Mean softmax cross-entropy over the batch (forward only).
    pub fn loss(&self, xs: &[f64], ys: &[usize]) -> Result<f64> {
        let b = self.check_batch(xs, ys)?;
        let mut z1 = vec![0.0; self.h1];
        let mut z2 = vec![0.0; self.h2];
        let mut z3 = vec![0.0; self.k];
        let mut total = 0.0;
        for (s, &y) in ys.iter().enumerate() {
            self.forward_one(&xs[s * self.p..(s + 1) * self.p], &mut z1, &mut z2, &mut z3);
            let (lse, _) = Self::lse(&z3);
            total += lse - z3[y];
        }
        let loss = total / b as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("mlp loss"));
        }
        Ok(loss)
    }

    /// Mean cross-entropy loss and its exact gradient, flattened in the
    /// documented parameter order.
    pub fn forward_backward(&self, xs: &[f64], ys: &[usize]) -> Result<(f64, Vec<f64>)> {
        let b = self.check_batch(xs, ys)?;
        let [bw1, bb1, bw2, bb2, bw3, bb3] = self.blocks();
        let th = &self.theta;
        let inv_b = 1.0 / b as f64;

        let mut grads = vec![0.0; self.theta.len()];
        let mut z1 = vec![0.0; self.h1];
        let mut z2 = vec![0.0; self.h2];
        let mut z3 = vec![0.0; self.k];
        let mut dz3 = vec![0.0; self.k];
        let mut dz2 = vec![0.0; self.h2];
        let mut dz1 = vec![0.0; self.h1];
        let mut total = 0.0;

        for (s, &y) in ys.iter().enumerate() {
            let x = &xs[s * self.p..(s + 1) * self.p];
            self.forward_one(x, &mut z1, &mut z2, &mut z3);
            let (lse, _) = Self::lse(&z3);
            if !lse.is_finite() {
                return Err(Error::NonFinite("mlp logits"));
            }
            total += lse - z3[y];

            for c in 0..self.k {
                let p_c = (z3[c] - lse).exp();
                dz3[c] = (p_c - f64::from(u8::from(c == y))) * inv_b;
            }

            for i in 0..self.h2 {
                let a2 = z2[i].max(0.0);
                let mut back = 0.0;
                for c in 0..self.k {
                    grads[bw3.0 + c * self.h2 + i] += dz3[c] * a2;
                    back += th[bw3.0 + c * self.h2 + i] * dz3[c];
                }
                dz2[i] = if z2[i] > 0.0 { back } else { 0.0 };
            }
            for (c, &d) in dz3.iter().enumerate() {
                grads[bb3.0 + c] += d;
            }

            for i in 0..self.h1 {
                let a1 = z1[i].max(0.0);
                let mut back = 0.0;
                for j in 0..self.h2 {
                    grads[bw2.0 + j * self.h1 + i] += dz2[j] * a1;
                    back += th[bw2.0 + j * self.h1 + i] * dz2[j];
                }
                dz1[i] = if z1[i] > 0.0 { back } else { 0.0 };
            }
            for (j, &d) in dz2.iter().enumerate() {
                grads[bb2.0 + j] += d;
            }

            for (j, &d) in dz1.iter().enumerate() {
                grads[bb1.0 + j] += d;
                let row = &mut grads[bw1.0 + j * self.p..bw1.0 + (j + 1) * self.p];
                for (slot, xi) in row.iter_mut().zip(x) {
                    *slot += d * xi;
                }
            }
        }

        let loss = total * inv_b;
        if !loss.is_finite() {
            return Err(Error::NonFinite("mlp loss"));
        }
        Ok((loss, grads))
    }

    /// Worst relative deviation between analytic gradients and central
    /// finite differences (step `1e-5`) on `coords_per_layer` sampled
    /// coordinates from each of the six parameter blocks.
    ///
    /// The deviation for a coordinate is `|analytic - fd|` divided by
    /// `max(|analytic|, |fd|, 1e-4)`, so dead-unit zero gradients compare
    /// as zero rather than as 0/0.
    pub fn max_finite_difference_rel_err(
        &self,
        xs: &[f64],
        ys: &[usize],
        coords_per_layer: usize,
        rng: &mut Rng,
    ) -> Result<f64> {
        let (_, grads) = self.forward_backward(xs, ys)?;
        let mut probe = self.clone();
        let mut worst = 0.0_f64;
        for (offset, len) in self.blocks() {
            for _ in 0..coords_per_layer.min(len) {
                let c = offset + rng.index(len);
                let saved = probe.theta[c];
                probe.theta[c] = saved + FD_STEP;
                let plus = probe.loss(xs, ys)?;
                probe.theta[c] = saved - FD_STEP;
                let minus = probe.loss(xs, ys)?;
                probe.theta[c] = saved;
                let fd = (plus - minus) / (2.0 * FD_STEP);
                let a = grads[c];
                let dev = (a - fd).abs() / a.abs().max(fd.abs()).max(FD_ABS_FLOOR);
                worst = worst.max(dev);
            }
        }
        Ok(worst)
    }
}
