//! Small dense and GRU layers over a flat parameter vector, with hand-written backward
//! passes. Layers only hold offsets; parameters and gradients live in caller slices.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Hands out consecutive parameter ranges.
#[derive(Debug, Default)]
pub struct ParamAllocator {
    len: usize,
}

impl ParamAllocator {
    pub fn dense(&mut self, inp: usize, out: usize) -> Dense {
        let d = Dense { inp, out, offset: self.len };
        self.len += d.len();
        d
    }

    pub fn gru(&mut self, inp: usize, hid: usize) -> Gru {
        let input = self.dense(inp, 3 * hid);
        let hidden = self.dense(hid, 3 * hid);
        Gru { inp, hid, input, hidden }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// `y = W x + b`, with `W` stored row-major as `out x inp` followed by `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
    pub offset: usize,
}

impl Dense {
    pub fn len(&self) -> usize {
        self.out * self.inp + self.out
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let w_end = self.offset + self.out * self.inp;
        (&p[self.offset..w_end], &p[w_end..self.offset + self.len()])
    }

    pub fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inp);
        let (w, b) = self.split(p);
        for (o, yo) in y.iter_mut().enumerate().take(self.out) {
            let row = &w[o * self.inp..(o + 1) * self.inp];
            *yo = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients into `g` and, when given, input gradients into `dx`.
    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], g: &mut [f64], dx: Option<&mut [f64]>) {
        let w_off = self.offset;
        let b_off = self.offset + self.out * self.inp;
        for o in 0..self.out {
            let d = dy[o];
            if d == 0.0 {
                continue;
            }
            let gw = &mut g[w_off + o * self.inp..w_off + (o + 1) * self.inp];
            for (gi, xi) in gw.iter_mut().zip(x) {
                *gi += d * xi;
            }
            g[b_off + o] += d;
        }
        if let Some(dx) = dx {
            let (w, _) = self.split(p);
            for o in 0..self.out {
                let d = dy[o];
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * self.inp..(o + 1) * self.inp];
                for (dxi, wi) in dx.iter_mut().zip(row) {
                    *dxi += d * wi;
                }
            }
        }
    }

    /// Orthogonal weights scaled by `gain`, zero bias.
    pub fn init_orthogonal<R: Rng + ?Sized>(&self, p: &mut [f64], gain: f64, rng: &mut R) {
        let w = orthogonal(self.out, self.inp, rng);
        let (w_end, end) = (self.offset + self.out * self.inp, self.offset + self.len());
        for (dst, src) in p[self.offset..w_end].iter_mut().zip(&w) {
            *dst = gain * src;
        }
        p[w_end..end].fill(0.0);
    }

    pub fn init_uniform<R: Rng + ?Sized>(&self, p: &mut [f64], bound: f64, rng: &mut R) {
        for v in &mut p[self.offset..self.offset + self.len()] {
            *v = rng.random_range(-bound..=bound);
        }
    }
}

/// A `rows x cols` matrix with orthonormal rows or columns (whichever is fewer),
/// from Gram-Schmidt on a Gaussian draw.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (k, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    m
}

/// Gated recurrent unit with gate order reset, update, candidate:
///
/// ```text
/// r  = σ(Wir x + bir + Whr h + bhr)
/// z  = σ(Wiz x + biz + Whz h + bhz)
/// n  = tanh(Win x + bin + r ⊙ (Whn h + bhn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gru {
    pub inp: usize,
    pub hid: usize,
    input: Dense,
    hidden: Dense,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    pub h: Vec<f64>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Gru {
    pub fn init<R: Rng + ?Sized>(&self, p: &mut [f64], rng: &mut R) {
        let bound = 1.0 / (self.hid as f64).sqrt();
        self.input.init_uniform(p, bound, rng);
        self.hidden.init_uniform(p, bound, rng);
    }

    pub fn forward(&self, p: &[f64], x: &[f64], h_prev: &[f64]) -> GruCache {
        let h = self.hid;
        let mut gi = vec![0.0; 3 * h];
        let mut gh = vec![0.0; 3 * h];
        self.input.forward(p, x, &mut gi);
        self.hidden.forward(p, h_prev, &mut gh);
        let mut r = vec![0.0; h];
        let mut z = vec![0.0; h];
        let mut n = vec![0.0; h];
        let mut out = vec![0.0; h];
        for j in 0..h {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[h + j] + gh[h + j]);
            n[j] = (gi[2 * h + j] + r[j] * gh[2 * h + j]).tanh();
            out[j] = (1.0 - z[j]) * n[j] + z[j] * h_prev[j];
        }
        GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            n,
            hn: gh[2 * h..].to_vec(),
            h: out,
        }
    }

    /// Backpropagates `dh` (gradient w.r.t. the step output). Accumulates into `g`,
    /// `dx` and `dh_prev`.
    pub fn backward(&self, p: &[f64], c: &GruCache, dh: &[f64], g: &mut [f64], dx: &mut [f64], dh_prev: &mut [f64]) {
        let h = self.hid;
        let mut dgi = vec![0.0; 3 * h];
        let mut dgh = vec![0.0; 3 * h];
        for j in 0..h {
            let (r, z, n) = (c.r[j], c.z[j], c.n[j]);
            let dn_pre = dh[j] * (1.0 - z) * (1.0 - n * n);
            let dz_pre = dh[j] * (c.h_prev[j] - n) * z * (1.0 - z);
            let dr_pre = dn_pre * c.hn[j] * r * (1.0 - r);
            dh_prev[j] += dh[j] * z;
            dgi[j] = dr_pre;
            dgi[h + j] = dz_pre;
            dgi[2 * h + j] = dn_pre;
            dgh[j] = dr_pre;
            dgh[h + j] = dz_pre;
            dgh[2 * h + j] = dn_pre * r;
        }
        self.input.backward(p, &c.x, &dgi, g, Some(dx));
        self.hidden.backward(p, &c.h_prev, &dgh, g, Some(dh_prev));
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr * bc2.sqrt() / bc1;
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= step * self.m[i] / (self.v[i].sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns the norm before.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (rows, cols) in [(4, 9), (9, 4), (5, 5)] {
            let m = orthogonal(rows, cols, &mut rng);
            let k = rows.min(cols);
            for a in 0..k {
                for b in 0..k {
                    let dot: f64 = if rows <= cols {
                        (0..cols).map(|c| m[a * cols + c] * m[b * cols + c]).sum()
                    } else {
                        (0..rows).map(|r| m[r * cols + a] * m[r * cols + b]).sum()
                    };
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut alloc = ParamAllocator::default();
        let gru = alloc.gru(3, 4);
        let mut p = vec![0.0; alloc.len()];
        gru.init(&mut p, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let proj: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        // scalar objective: proj · h'
        let f = |p: &[f64], x: &[f64], h0: &[f64]| -> f64 {
            gru.forward(p, x, h0).h.iter().zip(&proj).map(|(a, b)| a * b).sum()
        };
        let cache = gru.forward(&p, &x, &h0);
        let mut g = vec![0.0; p.len()];
        let mut dx = vec![0.0; 3];
        let mut dh0 = vec![0.0; 4];
        gru.backward(&p, &cache, &proj, &mut g, &mut dx, &mut dh0);
        let eps = 1e-6;
        for i in 0..p.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[i] += eps;
            b[i] -= eps;
            let fd = (f(&a, &x, &h0) - f(&b, &x, &h0)) / (2.0 * eps);
            assert!(rel_err(g[i], fd) < 1e-6, "param {i}: {} vs {fd}", g[i]);
        }
        for i in 0..3 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += eps;
            b[i] -= eps;
            let fd = (f(&p, &a, &h0) - f(&p, &b, &h0)) / (2.0 * eps);
            assert!(rel_err(dx[i], fd) < 1e-6);
        }
        for i in 0..4 {
            let (mut a, mut b) = (h0.clone(), h0.clone());
            a[i] += eps;
            b[i] -= eps;
            let fd = (f(&p, &x, &a) - f(&p, &x, &b)) / (2.0 * eps);
            assert!(rel_err(dh0[i], fd) < 1e-6);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-4);
        assert!((p[1] + 0.9).abs() < 1e-4);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] - 0.4).abs() < 1e-12);
        let mut small = vec![0.1, 0.1];
        clip_grad_norm(&mut small, 0.5);
        assert_eq!(small, vec![0.1, 0.1]);
    }
}
