//! Fully connected tanh networks over `f32` or `f64` with batched forward and
//! backward passes. Parameters live in one flat vector so the optimizer can
//! treat them uniformly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub trait Float: num_traits::Float + Default + Send + Sync + std::fmt::Debug + 'static {
    /// `c = alpha a b + beta c` with explicit row and column strides.
    ///
    /// # Safety
    /// Strides and sizes must describe memory inside the given pointers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(x: f64) -> Self;
    fn get(self) -> f64;

    /// `tanh` as used by the network activations.
    fn act(self) -> Self {
        self.tanh()
    }
}

/// Rational minimax `tanh` for `f32`, a few ulp from the exact value and
/// branch-free so the activation loops vectorize.
fn tanh_f32(x: f32) -> f32 {
    const A: [f32; 7] = [
        4.893_524_6e-3,
        6.372_619_3e-4,
        1.485_722_4e-5,
        5.122_297e-8,
        -8.604_671_5e-11,
        2.000_187_9e-13,
        -2.760_768_5e-16,
    ];
    const B: [f32; 4] = [4.893_525e-3, 2.268_434_6e-3, 1.185_347_1e-4, 1.198_258_4e-6];
    let c = x.clamp(-7.905_311, 7.905_311);
    let x2 = c * c;
    let mut p = A[6];
    for &a in A[..6].iter().rev() {
        p = p * x2 + a;
    }
    let q = ((B[3] * x2 + B[2]) * x2 + B[1]) * x2 + B[0];
    let r = c * p / q;
    if x.abs() < 4e-4 {
        x
    } else {
        r
    }
}

impl Float for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn of(x: f64) -> f32 {
        x as f32
    }

    fn get(self) -> f64 {
        self as f64
    }

    fn act(self) -> f32 {
        tanh_f32(self)
    }
}

impl Float for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn of(x: f64) -> f64 {
        x
    }

    fn get(self) -> f64 {
        self
    }
}

/// `C (m x n) = op(A) op(B) + beta C`, all row-major. `op(A)` is `m x k`;
/// with `ta` the stored `A` is `k x m`. Likewise for `B`.
#[allow(clippy::too_many_arguments)]
fn gemm<F: Float>(m: usize, k: usize, n: usize, a: &[F], ta: bool, b: &[F], tb: bool, beta: F, c: &mut [F]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        F::gemm_raw(m, k, n, F::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Identity on the last layer.
    Linear,
    /// `a * tanh(z)` with a learnt scale `a` per output.
    ScaledTanh,
}

/// Parameters are laid out layer by layer as the weights (row-major,
/// `out x in`) followed by the biases; [`Head::ScaledTanh`] appends one scale
/// per output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<F> {
    pub sizes: Vec<usize>,
    pub head: Head,
    pub params: Vec<F>,
}

pub struct Cache<F> {
    batch: usize,
    /// Input followed by each hidden activation.
    acts: Vec<Vec<F>>,
    /// `tanh(z)` of the last layer for [`Head::ScaledTanh`].
    last_tanh: Vec<F>,
    pub out: Vec<F>,
}

impl<F: Float> Mlp<F> {
    /// Xavier-uniform weights, zero biases, unit output scales.
    pub fn new(sizes: &[usize], head: Head, rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2);
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| F::of(rng.random_range(-a..a))));
            params.extend((0..fan_out).map(|_| F::zero()));
        }
        if head == Head::ScaledTanh {
            params.extend((0..*sizes.last().unwrap()).map(|_| F::one()));
        }
        Self { sizes: sizes.to_vec(), head, params }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let wo = off;
                let bo = off + w[0] * w[1];
                off = bo + w[1];
                (wo, bo)
            })
            .collect()
    }

    fn scale_offset(&self) -> usize {
        self.params.len() - self.output_dim()
    }

    /// Negates output `m` by flipping its row of the last weight matrix and its bias.
    pub fn negate_output(&mut self, m: usize) {
        let &(wo, bo) = self.layer_offsets().last().unwrap();
        let fi = self.sizes[self.sizes.len() - 2];
        for w in &mut self.params[wo + m * fi..wo + (m + 1) * fi] {
            *w = -*w;
        }
        self.params[bo + m] = -self.params[bo + m];
    }

    pub fn cast<G: Float>(&self) -> Mlp<G> {
        Mlp { sizes: self.sizes.clone(), head: self.head, params: self.params.iter().map(|x| G::of(x.get())).collect() }
    }

    /// Forward pass on `batch` row-major inputs.
    pub fn forward(&self, x: &[F], batch: usize) -> Cache<F> {
        assert_eq!(x.len(), batch * self.input_dim());
        let offsets = self.layer_offsets();
        let layers = offsets.len();
        let mut acts = vec![x.to_vec()];
        let mut last_tanh = Vec::new();
        let mut out = Vec::new();
        for (l, &(wo, bo)) in offsets.iter().enumerate() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let bias = &self.params[bo..bo + fo];
            let mut z = Vec::with_capacity(batch * fo);
            for _ in 0..batch {
                z.extend_from_slice(bias);
            }
            gemm(batch, fi, fo, &acts[l], false, &self.params[wo..wo + fi * fo], true, F::one(), &mut z);
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.act());
                acts.push(z);
            } else {
                match self.head {
                    Head::Linear => out = z,
                    Head::ScaledTanh => {
                        let scale = &self.params[self.scale_offset()..];
                        z.iter_mut().for_each(|v| *v = v.act());
                        out = z.chunks(fo).flat_map(|row| row.iter().zip(scale).map(|(t, a)| *t * *a)).collect();
                        last_tanh = z;
                    }
                }
            }
        }
        Cache { batch, acts, last_tanh, out }
    }

    /// Writes parameter gradients into `grad` (overwriting) and returns the
    /// input gradient if requested.
    pub fn backward(&self, cache: &Cache<F>, d_out: &[F], grad: &mut [F], input_grad: bool) -> Option<Vec<F>> {
        let batch = cache.batch;
        let offsets = self.layer_offsets();
        let layers = offsets.len();
        let fo = self.output_dim();
        assert_eq!(d_out.len(), batch * fo);
        assert_eq!(grad.len(), self.params.len());
        let mut dz: Vec<F> = match self.head {
            Head::Linear => d_out.to_vec(),
            Head::ScaledTanh => {
                let so = self.scale_offset();
                let scale = &self.params[so..];
                let mut ds = vec![F::zero(); fo];
                let mut dz = vec![F::zero(); batch * fo];
                for b in 0..batch {
                    for m in 0..fo {
                        let idx = b * fo + m;
                        let t = cache.last_tanh[idx];
                        ds[m] = ds[m] + d_out[idx] * t;
                        dz[idx] = d_out[idx] * scale[m] * (F::one() - t * t);
                    }
                }
                grad[so..].copy_from_slice(&ds);
                dz
            }
        };
        for l in (0..layers).rev() {
            let (wo, bo) = offsets[l];
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let h = &cache.acts[l];
            gemm(fo, batch, fi, &dz, true, h, false, F::zero(), &mut grad[wo..wo + fi * fo]);
            for j in 0..fo {
                grad[bo + j] = F::zero();
            }
            for row in dz.chunks(fo) {
                for (g, d) in grad[bo..bo + fo].iter_mut().zip(row) {
                    *g = *g + *d;
                }
            }
            if l == 0 && !input_grad {
                return None;
            }
            let mut dh = vec![F::zero(); batch * fi];
            gemm(batch, fo, fi, &dz, false, &self.params[wo..wo + fi * fo], false, F::zero(), &mut dh);
            if l == 0 {
                return Some(dh);
            }
            for (d, a) in dh.iter_mut().zip(h) {
                *d = *d * (F::one() - *a * *a);
            }
            dz = dh;
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

pub struct Adam<F> {
    cfg: AdamConfig,
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Float> Adam<F> {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Self { cfg, m: vec![F::zero(); n], v: vec![F::zero(); n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [F], grad: &[F], lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = F::of(lr * c2.sqrt() / c1);
        let eps = F::of(self.cfg.eps * c2.sqrt());
        let (fb1, fb2) = (F::of(b1), F::of(b2));
        let (ob1, ob2) = (F::of(1.0 - b1), F::of(1.0 - b2));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = fb1 * self.m[i] + ob1 * g;
            self.v[i] = fb2 * self.v[i] + ob2 * g * g;
            params[i] = params[i] - step * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}
