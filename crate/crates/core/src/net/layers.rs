//! Dense and convolutional layers over a flat parameter array.
//!
//! Layers only store offsets; parameters and their gradients live in plain
//! `[f64]` slices so a whole network snapshot is one vector.

use rand::Rng;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Hands out consecutive parameter ranges.
#[derive(Debug, Default)]
pub struct LayoutBuilder {
    len: usize,
    fan_in: Vec<(usize, usize, usize)>,
}

impl LayoutBuilder {
    pub fn len(&self) -> usize {
        self.len
    }

    /// `(offset, count, fan_in)` of every range handed out so far.
    pub fn ranges(&self) -> &[(usize, usize, usize)] {
        &self.fan_in
    }

    pub fn from_ranges(fan_in: Vec<(usize, usize, usize)>) -> Self {
        let len = fan_in.last().map_or(0, |&(o, n, _)| o + n);
        LayoutBuilder { len, fan_in }
    }

    fn take(&mut self, n: usize, fan_in: usize) -> usize {
        let off = self.len;
        self.fan_in.push((off, n, fan_in));
        self.len += n;
        off
    }

    pub fn linear(&mut self, inp: usize, out: usize) -> Linear {
        let w = self.take(inp * out, inp);
        let b = self.take(out, inp);
        Linear { inp, out, w, b }
    }

    pub fn conv(&mut self, cin: usize, cout: usize) -> Conv {
        let w = self.take(cout * cin * 9, cin * 9);
        let b = self.take(cout, cin * 9);
        Conv { cin, cout, w, b }
    }

    /// Fan-in scaled uniform initialization of every range handed out.
    pub fn init(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.len];
        for &(off, n, fan_in) in &self.fan_in {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in &mut p[off..off + n] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }
}

/// `y = W x + b`, with `W` stored row-major `out × inp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub inp: usize,
    pub out: usize,
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.w..self.b + self.out
    }

    #[inline]
    fn weights<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.inp * self.out]
    }

    pub fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        self.forward_cols(p, 0, self.inp, x, y, true);
    }

    /// Partial product over input columns `[col, col + n)`; adds the bias
    /// when `bias` is set and accumulates into `y` otherwise.
    pub fn forward_cols(&self, p: &[f64], col: usize, n: usize, x: &[f64], y: &mut [f64], bias: bool) {
        debug_assert_eq!(x.len(), n);
        debug_assert!(col + n <= self.inp);
        let w = self.weights(p);
        let bvec = &p[self.b..self.b + self.out];
        for o in 0..self.out {
            let row = &w[o * self.inp + col..o * self.inp + col + n];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[o] = if bias { bvec[o] + acc } else { y[o] + acc };
        }
    }

    /// Accumulates parameter gradients for input columns `[col, col + n)`.
    /// Bias gradients are added when `bias` is set.
    pub fn backward_params(&self, col: usize, x: &[f64], dy: &[f64], g: &mut [f64], bias: bool) {
        for o in 0..self.out {
            let d = dy[o];
            if d == 0.0 {
                continue;
            }
            let row = &mut g[self.w + o * self.inp + col..self.w + o * self.inp + col + x.len()];
            for (gw, xv) in row.iter_mut().zip(x) {
                *gw += d * xv;
            }
        }
        if bias {
            for (gb, d) in g[self.b..self.b + self.out].iter_mut().zip(dy) {
                *gb += d;
            }
        }
    }

    /// Accumulates `Wᵀ dy` restricted to input columns `[col, col + dx.len())`.
    pub fn backward_input(&self, p: &[f64], col: usize, dy: &[f64], dx: &mut [f64]) {
        let w = self.weights(p);
        for o in 0..self.out {
            let d = dy[o];
            if d == 0.0 {
                continue;
            }
            let row = &w[o * self.inp + col..o * self.inp + col + dx.len()];
            for (dxv, a) in dx.iter_mut().zip(row) {
                *dxv += d * a;
            }
        }
    }
}

/// 3×3 convolution, stride 2, zero padding 1, channel-major `c × h × w`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub w: usize,
    pub b: usize,
}

pub fn conv_out(n: usize) -> usize {
    n.div_ceil(2)
}

impl Conv {
    pub fn forward(&self, p: &[f64], x: &[f64], h: usize, w: usize, y: &mut [f64]) {
        let (ho, wo) = (conv_out(h), conv_out(w));
        debug_assert_eq!(x.len(), self.cin * h * w);
        debug_assert_eq!(y.len(), self.cout * ho * wo);
        for co in 0..self.cout {
            let bias = p[self.b + co];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias;
                    for ci in 0..self.cin {
                        let k = &p[self.w + (co * self.cin + ci) * 9..][..9];
                        let plane = &x[ci * h * w..(ci + 1) * h * w];
                        for ky in 0..3 {
                            let iy = (2 * oy + ky) as isize - 1;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = (2 * ox + kx) as isize - 1;
                                if ix < 0 || ix as usize >= w {
                                    continue;
                                }
                                acc += k[ky * 3 + kx] * plane[iy as usize * w + ix as usize];
                            }
                        }
                    }
                    y[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }

    /// Accumulates parameter gradients and, when given, the input gradient.
    pub fn backward(&self, p: &[f64], x: &[f64], h: usize, w: usize, dy: &[f64], g: &mut [f64], mut dx: Option<&mut [f64]>) {
        let (ho, wo) = (conv_out(h), conv_out(w));
        for co in 0..self.cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let d = dy[(co * ho + oy) * wo + ox];
                    if d == 0.0 {
                        continue;
                    }
                    g[self.b + co] += d;
                    for ci in 0..self.cin {
                        let koff = self.w + (co * self.cin + ci) * 9;
                        for ky in 0..3 {
                            let iy = (2 * oy + ky) as isize - 1;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = (2 * ox + kx) as isize - 1;
                                if ix < 0 || ix as usize >= w {
                                    continue;
                                }
                                let xi = ci * h * w + iy as usize * w + ix as usize;
                                g[koff + ky * 3 + kx] += d * x[xi];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[xi] += d * p[koff + ky * 3 + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Stack of dense layers with SiLU between them; the last layer is linear
/// unless `final_act` is set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub final_act: bool,
}

/// Per-row activations kept for the backward pass: pre-activations of each
/// layer.
#[derive(Clone, Debug, Default)]
pub struct MlpTrace {
    pub pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(b: &mut LayoutBuilder, sizes: &[usize], final_act: bool) -> Self {
        let layers = sizes.windows(2).map(|s| b.linear(s[0], s[1])).collect();
        Mlp { layers, final_act }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inp
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out
    }

    fn act(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.final_act
    }

    /// Runs the stack on `x`, where the first layer's pre-activation is
    /// already given as `first_pre` (lets callers share partial products).
    pub fn forward_from_pre(&self, p: &[f64], first_pre: Vec<f64>) -> (Vec<f64>, MlpTrace) {
        let mut pre = vec![first_pre];
        let mut h: Vec<f64>;
        let mut i = 0;
        loop {
            let cur = &pre[i];
            h = if self.act(i) { cur.iter().map(|&v| silu(v)).collect() } else { cur.clone() };
            i += 1;
            if i == self.layers.len() {
                break;
            }
            let mut next = vec![0.0; self.layers[i].out];
            self.layers[i].forward(p, &h, &mut next);
            pre.push(next);
        }
        (h, MlpTrace { pre })
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> (Vec<f64>, MlpTrace) {
        let mut first = vec![0.0; self.layers[0].out];
        self.layers[0].forward(p, x, &mut first);
        self.forward_from_pre(p, first)
    }

    pub fn output(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(p, x).0
    }

    /// Backpropagates `dy` through all layers but the first; returns the
    /// gradient w.r.t. the first layer's pre-activation.
    pub fn backward_to_first_pre(&self, p: &[f64], trace: &MlpTrace, dy: &[f64], g: &mut [f64]) -> Vec<f64> {
        let n = self.layers.len();
        let mut d: Vec<f64> = dy.to_vec();
        for i in (0..n).rev() {
            if self.act(i) {
                for (dv, &z) in d.iter_mut().zip(&trace.pre[i]) {
                    *dv *= silu_grad(z);
                }
            }
            if i == 0 {
                break;
            }
            let l = &self.layers[i];
            let x: Vec<f64> = {
                let z = &trace.pre[i - 1];
                if self.act(i - 1) {
                    z.iter().map(|&v| silu(v)).collect()
                } else {
                    z.clone()
                }
            };
            l.backward_params(0, &x, &d, g, true);
            let mut dx = vec![0.0; l.inp];
            l.backward_input(p, 0, &d, &mut dx);
            d = dx;
        }
        d
    }

    /// Full backward for input `x`; returns `dL/dx`.
    pub fn backward(&self, p: &[f64], x: &[f64], trace: &MlpTrace, dy: &[f64], g: &mut [f64]) -> Vec<f64> {
        let d0 = self.backward_to_first_pre(p, trace, dy, g);
        let l = &self.layers[0];
        l.backward_params(0, x, &d0, g, true);
        let mut dx = vec![0.0; l.inp];
        l.backward_input(p, 0, &d0, &mut dx);
        dx
    }
}
