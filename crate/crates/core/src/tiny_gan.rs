//! A two-layer GAN with an optional supervision term, small enough for dense
//! linear algebra.
//!
//! Per sample `ξ = (ξ_1, ξ_2)` the loss is
//!
//! ```text
//! ℓ(x, y, ξ) = γ [ log D(y, ξ_1) + log(1 - D(y, G(x, ξ_2))) ] + λ ½‖ξ_1 - G(x, ξ_2)‖²
//! ```
//!
//! with `G` and `D` one-hidden-layer networks using GELU hidden units and a
//! logistic output. The generator parameters form `x`, the discriminator
//! parameters form `y`, each flattened as column-major weight matrices
//! followed by bias vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::problem::{BoxBounds, SaaLoss, SaaProblem, Vector};

/// GELU spread used for the hidden layers.
pub const GELU_SPREAD: f64 = 1e-4;

/// Shape and data-generation parameters for [`TinyGan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TinyGanSpec {
    pub latent_dim: usize,
    pub data_dim: usize,
    pub gen_hidden: usize,
    pub disc_hidden: usize,
    pub samples: usize,
    /// Weight `λ` of the supervision term.
    pub lambda: f64,
    /// Weight `γ` of the adversarial term.
    pub adversarial_weight: f64,
    pub spread: f64,
    /// Half-width of the parameter box `[-w, w]^{n+m}`.
    pub box_half_width: f64,
    /// Standard deviation of the initial weights (biases start at zero).
    pub init_std: f64,
}

impl Default for TinyGanSpec {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            data_dim: 4,
            gen_hidden: 8,
            disc_hidden: 8,
            samples: 32,
            lambda: 0.0,
            adversarial_weight: 1.0,
            spread: GELU_SPREAD,
            box_half_width: 1.0,
            init_std: 0.02,
        }
    }
}

/// Parameter offsets inside `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    latent: usize,
    data: usize,
    gen_hidden: usize,
    disc_hidden: usize,
    gw1: usize,
    gw2: usize,
    gb1: usize,
    gb2: usize,
    dw1: usize,
    dw2: usize,
    db1: usize,
    db2: usize,
    n: usize,
    total: usize,
}

impl Layout {
    fn new(latent: usize, data: usize, gen_hidden: usize, disc_hidden: usize) -> Self {
        let gw1 = 0;
        let gw2 = gw1 + gen_hidden * latent;
        let gb1 = gw2 + data * gen_hidden;
        let gb2 = gb1 + gen_hidden;
        let n = gb2 + data;
        let dw1 = n;
        let dw2 = dw1 + disc_hidden * data;
        let db1 = dw2 + disc_hidden;
        let db2 = db1 + disc_hidden;
        let total = db2 + 1;
        Self {
            latent,
            data,
            gen_hidden,
            disc_hidden,
            gw1,
            gw2,
            gb1,
            gb2,
            dw1,
            dw2,
            db1,
            db2,
            n,
            total,
        }
    }
}

/// `out = W s + b` with `W` stored column-major at `w` (`rows × s.len()`).
fn affine<T: Scalar>(p: &[T], w: usize, b: usize, rows: usize, s: &[T]) -> Vec<T> {
    let mut out: Vec<T> = p[b..b + rows].to_vec();
    for (c, &sc) in s.iter().enumerate() {
        let col = &p[w + c * rows..w + (c + 1) * rows];
        for (o, &wrc) in out.iter_mut().zip(col) {
            *o += wrc * sc;
        }
    }
    out
}

/// Accumulates `dW += d s^T`, `db += d`, and returns `W^T d`.
fn affine_back<T: Scalar>(p: &[T], grad: &mut [T], w: usize, b: usize, d: &[T], s: &[T]) -> Vec<T> {
    let rows = d.len();
    let mut ds = Vec::with_capacity(s.len());
    for (c, &sc) in s.iter().enumerate() {
        let mut acc = T::constant(0.0);
        for r in 0..rows {
            let idx = w + c * rows + r;
            grad[idx] += d[r] * sc;
            acc += p[idx] * d[r];
        }
        ds.push(acc);
    }
    for r in 0..rows {
        grad[b + r] += d[r];
    }
    ds
}

/// Small GAN over synthetic data, usable as an [`SaaLoss`].
#[derive(Debug, Clone)]
pub struct TinyGan {
    spec: TinyGanSpec,
    layout: Layout,
    real: Vec<Vec<f64>>,
    latent: Vec<Vec<f64>>,
}

struct DiscPass<T> {
    pre: Vec<T>,
    hidden: Vec<T>,
    logit: T,
}

impl TinyGan {
    /// Builds the network with explicit samples `(ξ_1^i, ξ_2^i)`.
    pub fn new(spec: TinyGanSpec, real: Vec<Vec<f64>>, latent: Vec<Vec<f64>>) -> Result<Self> {
        if real.is_empty() {
            return Err(Error::EmptySamples);
        }
        if real.len() != latent.len() {
            return Err(Error::DimensionMismatch {
                what: "latent samples",
                expected: real.len(),
                got: latent.len(),
            });
        }
        if let Some(bad) = real.iter().find(|s| s.len() != spec.data_dim) {
            return Err(Error::DimensionMismatch {
                what: "real sample",
                expected: spec.data_dim,
                got: bad.len(),
            });
        }
        if let Some(bad) = latent.iter().find(|s| s.len() != spec.latent_dim) {
            return Err(Error::DimensionMismatch {
                what: "latent sample",
                expected: spec.latent_dim,
                got: bad.len(),
            });
        }
        if !(spec.spread > 0.0) {
            return Err(Error::InvalidParameter {
                name: "spread",
                reason: "must be positive".into(),
            });
        }
        if !(spec.lambda >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "must be non-negative".into(),
            });
        }
        let layout = Layout::new(
            spec.latent_dim,
            spec.data_dim,
            spec.gen_hidden,
            spec.disc_hidden,
        );
        Ok(Self {
            spec,
            layout,
            real,
            latent,
        })
    }

    /// Seeded synthetic data: latent codes uniform on `(-1, 1)^latent`, real
    /// samples drawn around two fixed prototypes in `(0, 1)^data`.
    pub fn synthetic(spec: TinyGanSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prototypes: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                (0..spec.data_dim)
                    .map(|_| rng.gen_range(0.2..0.8))
                    .collect()
            })
            .collect();
        let noise = Normal::new(0.0, 0.05).expect("valid normal");
        let mut real = Vec::with_capacity(spec.samples);
        let mut latent = Vec::with_capacity(spec.samples);
        for _ in 0..spec.samples {
            let proto = &prototypes[rng.gen_range(0..prototypes.len())];
            real.push(
                proto
                    .iter()
                    .map(|&p| (p + noise.sample(&mut rng)).clamp(0.02, 0.98))
                    .collect(),
            );
            latent.push(
                (0..spec.latent_dim)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            );
        }
        Self::new(spec, real, latent)
    }

    pub fn spec(&self) -> &TinyGanSpec {
        &self.spec
    }

    pub fn real_samples(&self) -> &[Vec<f64>] {
        &self.real
    }

    pub fn latent_samples(&self) -> &[Vec<f64>] {
        &self.latent
    }

    /// The parameter box `[-w, w]^{n+m}`.
    pub fn bounds(&self) -> Result<BoxBounds> {
        let w = self.spec.box_half_width;
        BoxBounds::uniform(self.layout.total, -w, w)
    }

    /// Wraps the loss as an SAA problem over its own box.
    pub fn into_problem(self) -> Result<SaaProblem<TinyGan>> {
        let bounds = self.bounds()?;
        SaaProblem::new(self, bounds)
    }

    /// Gaussian weights with `init_std`, zero biases.
    pub fn initial_point(&self, seed: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, self.spec.init_std).expect("valid normal");
        let l = &self.layout;
        let mut z = Vector::zeros(l.total);
        for i in (l.gw1..l.gb1).chain(l.dw1..l.db1) {
            z[i] = normal.sample(&mut rng);
        }
        z
    }

    /// Generator output `G(x, ξ_2)`.
    pub fn generate(&self, z: &Vector, latent: &[f64]) -> Vec<f64> {
        let p: Vec<f64> = z.iter().copied().collect();
        self.generator_forward(&p, latent).2
    }

    /// Discriminator output `D(y, s)` in `(0, 1)`.
    pub fn discriminate(&self, z: &Vector, s: &[f64]) -> f64 {
        let p: Vec<f64> = z.iter().copied().collect();
        crate::activation::logistic(self.disc_forward(&p, s).logit)
    }

    fn generator_forward<T: Scalar>(&self, p: &[T], latent: &[f64]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let l = &self.layout;
        let input: Vec<T> = latent.iter().map(|&v| T::constant(v)).collect();
        let pre = affine(p, l.gw1, l.gb1, l.gen_hidden, &input);
        let hidden: Vec<T> = pre.iter().map(|&a| a.gelu(self.spec.spread)).collect();
        let out_pre = affine(p, l.gw2, l.gb2, l.data, &hidden);
        let out = out_pre.iter().map(|&a| a.logistic()).collect();
        (pre, hidden, out)
    }

    fn disc_forward<T: Scalar, S: Copy + Into<T>>(&self, p: &[T], s: &[S]) -> DiscPass<T> {
        let l = &self.layout;
        let input: Vec<T> = s.iter().map(|&v| v.into()).collect();
        let pre = affine(p, l.dw1, l.db1, l.disc_hidden, &input);
        let hidden: Vec<T> = pre.iter().map(|&a| a.gelu(self.spec.spread)).collect();
        let logit = affine(p, l.dw2, l.db2, 1, &hidden)[0];
        DiscPass { pre, hidden, logit }
    }

    /// Backward pass of `D` for an upstream `dℓ/dlogit`; returns `dℓ/ds`.
    fn disc_backward<T: Scalar>(
        &self,
        p: &[T],
        grad: &mut [T],
        pass: &DiscPass<T>,
        input: &[T],
        dlogit: T,
    ) -> Vec<T> {
        let l = &self.layout;
        let dhidden = affine_back(p, grad, l.dw2, l.db2, &[dlogit], &pass.hidden);
        let dpre: Vec<T> = dhidden
            .iter()
            .zip(&pass.pre)
            .map(|(&d, &a)| d * a.gelu_slope(self.spec.spread))
            .collect();
        affine_back(p, grad, l.dw1, l.db1, &dpre, input)
    }

    /// `(∇_x ℓ, ∇_y ℓ)` for one sample, generic over the scalar type.
    fn sample_gradient<T: Scalar>(&self, p: &[T], sample: usize) -> Vec<T>
    where
        f64: Into<T>,
    {
        let l = &self.layout;
        let gamma = T::constant(self.spec.adversarial_weight);
        let lambda = T::constant(self.spec.lambda);
        let mut grad = vec![T::constant(0.0); l.total];

        let real_in: Vec<T> = self.real[sample].iter().map(|&v| T::constant(v)).collect();
        let real = self.disc_forward(p, &self.real[sample]);
        // d/dt log σ(t) = σ(-t)
        let d_real = gamma * (-real.logit).logistic();
        self.disc_backward(p, &mut grad, &real, &real_in, d_real);

        let (gpre, ghidden, fake_in) = self.generator_forward(p, &self.latent[sample]);
        let fake = self.disc_forward(p, &fake_in);
        // d/dt log(1 - σ(t)) = -σ(t)
        let d_fake = -(gamma * fake.logit.logistic());
        let mut dout = self.disc_backward(p, &mut grad, &fake, &fake_in, d_fake);
        for (k, d) in dout.iter_mut().enumerate() {
            *d += lambda * (fake_in[k] - T::constant(self.real[sample][k]));
        }

        let dout_pre: Vec<T> = dout
            .iter()
            .zip(&fake_in)
            .map(|(&d, &o)| d * o * (T::constant(1.0) - o))
            .collect();
        let dhidden = affine_back(p, &mut grad, l.gw2, l.gb2, &dout_pre, &ghidden);
        let dpre: Vec<T> = dhidden
            .iter()
            .zip(&gpre)
            .map(|(&d, &a)| d * a.gelu_slope(self.spec.spread))
            .collect();
        let latent_in: Vec<T> = self.latent[sample]
            .iter()
            .map(|&v| T::constant(v))
            .collect();
        affine_back(p, &mut grad, l.gw1, l.gb1, &dpre, &latent_in);
        grad
    }

    fn signed(&self, mut grad: Vec<f64>) -> Vector {
        for g in grad.iter_mut().skip(self.layout.n) {
            *g = -*g;
        }
        Vector::from_vec(grad)
    }

    /// Adversarial part `log D(ξ_1) + log(1 - D(G(ξ_2)))` for one sample.
    pub fn adversarial_loss(&self, z: &Vector, sample: usize) -> f64 {
        use crate::activation::softplus;
        let p: Vec<f64> = z.iter().copied().collect();
        let real = self.disc_forward(&p, &self.real[sample]).logit;
        let fake_in = self.generator_forward(&p, &self.latent[sample]).2;
        let fake = self.disc_forward(&p, &fake_in).logit;
        -softplus(-real) - softplus(fake)
    }

    /// Supervision part `½‖ξ_1 - G(x, ξ_2)‖²` for one sample.
    pub fn supervised_loss(&self, z: &Vector, sample: usize) -> f64 {
        let out = self.generate(z, &self.latent[sample]);
        0.5 * out
            .iter()
            .zip(&self.real[sample])
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
    }
}

impl SaaLoss for TinyGan {
    fn dim_x(&self) -> usize {
        self.layout.n
    }

    fn dim_y(&self) -> usize {
        self.layout.total - self.layout.n
    }

    fn sample_count(&self) -> usize {
        self.real.len()
    }

    fn loss(&self, z: &Vector, sample: usize) -> f64 {
        self.spec.adversarial_weight * self.adversarial_loss(z, sample)
            + self.spec.lambda * self.supervised_loss(z, sample)
    }

    fn grad(&self, z: &Vector, sample: usize) -> Vector {
        let p: Vec<f64> = z.iter().copied().collect();
        self.signed(self.sample_gradient(&p, sample))
    }

    fn hvp(&self, z: &Vector, sample: usize, v: &Vector) -> Vector {
        let p: Vec<Dual> = z
            .iter()
            .zip(v.iter())
            .map(|(&a, &b)| Dual::new(a, b))
            .collect();
        let grad = self.sample_gradient(&p, sample);
        self.signed(grad.into_iter().map(|d| d.du).collect())
    }
}

impl From<f64> for Dual {
    fn from(value: f64) -> Self {
        Dual::new(value, 0.0)
    }
}
