//! Fully connected velocity networks `v(x, t; θ)`.
//!
//! The input is `x ∈ R^d` concatenated with a small vector of time features;
//! the output lives in `R^d`. Hidden layers share one activation and the
//! output layer is affine. Parameters are a single flat vector: for each layer
//! in order, the weight matrix (row-major, `fan_out × fan_in`) followed by its
//! bias.
//!
//! Everything here is batched: a batch of `n` points is a row-major `n × d`
//! buffer and the dense products go through `matrixmultiply`. Gradients with
//! respect to the parameters and the exact Jacobian trace with respect to `x`
//! are both obtained by reverse-mode passes over a recorded tape.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    /// No nonlinearity; used for linear sanity fields.
    Linear,
    Relu,
    Softplus,
    Elu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Linear,
        Activation::Relu,
        Activation::Softplus,
        Activation::Elu,
        Activation::Tanh,
    ];

    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Linear => a,
            Activation::Relu => a.max(0.0),
            Activation::Softplus => {
                if a > 30.0 {
                    a
                } else {
                    a.exp().ln_1p()
                }
            }
            Activation::Elu => {
                if a > 0.0 {
                    a
                } else {
                    a.exp_m1()
                }
            }
            Activation::Tanh => a.tanh(),
        }
    }

    /// Derivative evaluated at the pre-activation `a`.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => {
                if a > 30.0 {
                    1.0
                } else {
                    1.0 / (1.0 + (-a).exp())
                }
            }
            Activation::Elu => {
                if a > 0.0 {
                    1.0
                } else {
                    a.exp()
                }
            }
            Activation::Tanh => {
                let th = a.tanh();
                1.0 - th * th
            }
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Softplus => 2,
            Activation::Elu => 3,
            Activation::Tanh => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Activation::ALL.into_iter().find(|a| a.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
            Activation::Elu => "elu",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown activation '{s}' (expected linear, relu, softplus, elu or tanh)"))
    }
}

/// How the scalar time enters the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeFeatures {
    /// No time input (residual maps of a distilled model).
    None,
    /// Append `t` itself.
    Raw,
    /// Append `k` pairs `sin(2^j π t), cos(2^j π t)`, `j = 0..k`.
    Sinusoidal(u32),
}

impl TimeFeatures {
    pub fn width(self) -> usize {
        match self {
            TimeFeatures::None => 0,
            TimeFeatures::Raw => 1,
            TimeFeatures::Sinusoidal(k) => 2 * k as usize,
        }
    }

    fn write(self, t: f64, out: &mut [f64]) {
        match self {
            TimeFeatures::None => {}
            TimeFeatures::Raw => out[0] = t,
            TimeFeatures::Sinusoidal(k) => {
                let mut freq = std::f64::consts::PI;
                for j in 0..k as usize {
                    let (s, c) = (freq * t).sin_cos();
                    out[2 * j] = s;
                    out[2 * j + 1] = c;
                    freq *= 2.0;
                }
            }
        }
    }

    pub fn id(self) -> u8 {
        match self {
            TimeFeatures::None => 0,
            TimeFeatures::Raw => 1,
            TimeFeatures::Sinusoidal(_) => 2,
        }
    }

    /// Number of frequency pairs, zero unless sinusoidal.
    pub fn frequencies(self) -> u32 {
        match self {
            TimeFeatures::Sinusoidal(k) => k,
            _ => 0,
        }
    }

    pub fn from_parts(id: u8, k: u32) -> Option<Self> {
        match (id, k) {
            (0, 0) => Some(TimeFeatures::None),
            (1, 0) => Some(TimeFeatures::Raw),
            (2, k) if k >= 1 => Some(TimeFeatures::Sinusoidal(k)),
            _ => None,
        }
    }
}

impl fmt::Display for TimeFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFeatures::None => f.write_str("none"),
            TimeFeatures::Raw => f.write_str("raw"),
            TimeFeatures::Sinusoidal(k) => write!(f, "sinusoidal:{k}"),
        }
    }
}

impl FromStr for TimeFeatures {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(TimeFeatures::None),
            "raw" => Ok(TimeFeatures::Raw),
            _ => {
                let k = s
                    .strip_prefix("sinusoidal:")
                    .and_then(|k| k.parse::<u32>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| {
                        format!("unknown time features '{s}' (expected none, raw or sinusoidal:<k>=1..)")
                    })?;
                Ok(TimeFeatures::Sinusoidal(k))
            }
        }
    }
}

/// Architecture of a velocity network. The output dimension equals `input_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub time_features: TimeFeatures,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        activation: Activation,
        time_features: TimeFeatures,
    ) -> Result<Self> {
        let spec = MlpSpec {
            input_dim,
            hidden_widths,
            activation,
            time_features,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::invalid("hidden_widths", "at least one hidden layer is required"));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("hidden_widths", "widths must be positive"));
        }
        if self.time_features == TimeFeatures::Sinusoidal(0) {
            return Err(Error::invalid("time_features", "sinusoidal needs k >= 1"));
        }
        Ok(())
    }

    /// Width of the network input: `d` plus the time features.
    pub fn feature_dim(&self) -> usize {
        self.input_dim + self.time_features.width()
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.feature_dim();
        for &w in &self.hidden_widths {
            shapes.push((fan_in, w));
            fan_in = w;
        }
        shapes.push((fan_in, self.input_dim));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Flat parameter vector θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

/// Activations recorded by a forward pass, consumed by the backward passes.
struct Tape {
    n: usize,
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    out: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    spec: MlpSpec,
    params: ParamVector,
    layers: Vec<Layer>,
}

fn layout(spec: &MlpSpec) -> Vec<Layer> {
    let mut off = 0;
    spec.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let l = Layer {
                fan_in,
                fan_out,
                w: off,
                b: off + fan_in * fan_out,
            };
            off += fan_in * fan_out + fan_out;
            l
        })
        .collect()
}

/// `c = a·b + beta·c` for row/column-strided operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= (m - 1) * rsa + (k.max(1) - 1) * csa + 1 || k == 0);
    assert!(b.len() >= (k.max(1) - 1) * rsb + (n - 1) * csb + 1 || k == 0);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

impl VelocityField {
    pub fn new(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: spec.param_count(),
                actual: params.len(),
            });
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        let layers = layout(&spec);
        Ok(VelocityField {
            spec,
            params,
            layers,
        })
    }

    /// The zero network: `v ≡ 0`.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        let p = ParamVector::zeros(spec.param_count());
        VelocityField::new(spec, p)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut p = ParamVector::zeros(spec.param_count());
        for l in layout(&spec) {
            let a = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            for w in &mut p.as_mut_slice()[l.w..l.b] {
                *w = rng.gen_range(-a..=a);
            }
        }
        VelocityField::new(spec, p)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.spec.input_dim
    }

    /// Replace θ. Length and finiteness are checked.
    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        if !params.all_finite() {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        self.params = params;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    /// Weight matrix of layer `l` (row-major `fan_out × fan_in`) and its bias.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let layer = self.layers[l];
        let (w, rest) = self.params.as_mut_slice()[layer.w..].split_at_mut(layer.b - layer.w);
        (w, &mut rest[..layer.fan_out])
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn check_point(&self, x: &[f64], t: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("time t = {t}")));
        }
        Ok(())
    }

    fn check_batch(&self, xs: &[f64], ts: &[f64]) -> Result<usize> {
        let n = ts.len();
        if xs.len() != n * self.dim() {
            return Err(Error::DimensionMismatch {
                what: "batch buffer (n × d)",
                expected: n * self.dim(),
                actual: xs.len(),
            });
        }
        if let Some(t) = ts.iter().find(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("time t = {t}")));
        }
        Ok(n)
    }

    fn run(&self, xs: &[f64], ts: &[f64]) -> Tape {
        let n = ts.len();
        let d = self.dim();
        let f0 = self.spec.feature_dim();
        let mut input = vec![0.0; n * f0];
        for i in 0..n {
            let row = &mut input[i * f0..(i + 1) * f0];
            row[..d].copy_from_slice(&xs[i * d..(i + 1) * d]);
            self.spec.time_features.write(ts[i], &mut row[d..]);
        }
        let p = self.params.as_slice();
        let act = self.spec.activation;
        let hidden = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(hidden);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(hidden);
        let mut out = Vec::new();
        for (li, l) in self.layers.iter().enumerate() {
            let inp: &[f64] = if li == 0 { &input } else { &post[li - 1] };
            let mut z = vec![0.0; n * l.fan_out];
            for row in z.chunks_exact_mut(l.fan_out) {
                row.copy_from_slice(&p[l.b..l.b + l.fan_out]);
            }
            // z = inp · Wᵀ + b
            gemm(
                n,
                l.fan_in,
                l.fan_out,
                inp,
                (l.fan_in, 1),
                &p[l.w..l.b],
                (1, l.fan_in),
                1.0,
                &mut z,
                (l.fan_out, 1),
            );
            if li < hidden {
                let h: Vec<f64> = z.iter().map(|&a| act.apply(a)).collect();
                pre.push(z);
                post.push(h);
            } else {
                out = z;
            }
        }
        Tape {
            n,
            input,
            pre,
            post,
            out,
        }
    }

    /// Reverse pass from `delta = ∂L/∂out`. Accumulates ∂L/∂θ into `grad`
    /// when given and returns ∂L/∂(network input) when `want_input`.
    fn backward(
        &self,
        tape: &Tape,
        mut delta: Vec<f64>,
        mut grad: Option<&mut [f64]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let n = tape.n;
        let p = self.params.as_slice();
        let act = self.spec.activation;
        for (li, l) in self.layers.iter().enumerate().rev() {
            let inp: &[f64] = if li == 0 { &tape.input } else { &tape.post[li - 1] };
            if let Some(g) = grad.as_deref_mut() {
                // dW += deltaᵀ · inp
                gemm(
                    l.fan_out,
                    n,
                    l.fan_in,
                    &delta,
                    (1, l.fan_out),
                    inp,
                    (l.fan_in, 1),
                    1.0,
                    &mut g[l.w..l.b],
                    (l.fan_in, 1),
                );
                let gb = &mut g[l.b..l.b + l.fan_out];
                for row in delta.chunks_exact(l.fan_out) {
                    for (a, b) in gb.iter_mut().zip(row) {
                        *a += b;
                    }
                }
            }
            if li == 0 && !want_input {
                return None;
            }
            // d_inp = delta · W
            let mut d_inp = vec![0.0; n * l.fan_in];
            gemm(
                n,
                l.fan_out,
                l.fan_in,
                &delta,
                (l.fan_out, 1),
                &p[l.w..l.b],
                (l.fan_in, 1),
                0.0,
                &mut d_inp,
                (l.fan_in, 1),
            );
            if li == 0 {
                return Some(d_inp);
            }
            for (g, &a) in d_inp.iter_mut().zip(&tape.pre[li - 1]) {
                *g *= act.derivative(a);
            }
            delta = d_inp;
        }
        None
    }

    /// `v(x, t)` for a single point.
    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_point(x, t)?;
        Ok(self.run(x, &[t]).out)
    }

    /// `v` at `n = ts.len()` points; `xs` is row-major `n × d`.
    pub fn forward_batch(&self, xs: &[f64], ts: &[f64]) -> Result<Vec<f64>> {
        self.check_batch(xs, ts)?;
        Ok(self.run(xs, ts).out)
    }

    /// Batch mean of `‖v(x_i, t_i) − target_i‖²` and its gradient in θ.
    pub fn loss_and_grad(&self, xs: &[f64], ts: &[f64], targets: &[f64]) -> Result<(f64, ParamVector)> {
        let mut grad = ParamVector::zeros(self.params.len());
        let loss = self.loss_and_grad_into(xs, ts, targets, &mut grad)?;
        Ok((loss, grad))
    }

    /// As [`loss_and_grad`](Self::loss_and_grad), overwriting `grad` in place.
    pub fn loss_and_grad_into(
        &self,
        xs: &[f64],
        ts: &[f64],
        targets: &[f64],
        grad: &mut ParamVector,
    ) -> Result<f64> {
        let n = self.check_batch(xs, ts)?;
        if n == 0 {
            return Err(Error::Empty("training batch"));
        }
        if targets.len() != xs.len() {
            return Err(Error::DimensionMismatch {
                what: "target buffer (n × d)",
                expected: xs.len(),
                actual: targets.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient buffer",
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        let tape = self.run(xs, ts);
        let scale = 1.0 / n as f64;
        let mut loss = 0.0;
        let delta: Vec<f64> = tape
            .out
            .iter()
            .zip(targets)
            .map(|(y, u)| {
                let r = y - u;
                loss += r * r;
                2.0 * r * scale
            })
            .collect();
        grad.as_mut_slice().fill(0.0);
        self.backward(&tape, delta, Some(grad.as_mut_slice()), false);
        Ok(loss * scale)
    }

    /// Exact divergence `∇_x · v(x, t)`, one reverse pass per output coordinate.
    pub fn jacobian_trace(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_point(x, t)?;
        let (_, tr) = self.forward_with_trace_unchecked(x, &[t]);
        Ok(tr[0])
    }

    /// `v` and `∇·v` at a batch of points.
    pub fn forward_with_trace(&self, xs: &[f64], ts: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_batch(xs, ts)?;
        Ok(self.forward_with_trace_unchecked(xs, ts))
    }

    fn forward_with_trace_unchecked(&self, xs: &[f64], ts: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let tape = self.run(xs, ts);
        let n = tape.n;
        let d = self.dim();
        let f0 = self.spec.feature_dim();
        let mut trace = vec![0.0; n];
        for i in 0..d {
            let mut seed = vec![0.0; n * d];
            for r in 0..n {
                seed[r * d + i] = 1.0;
            }
            let d_in = self
                .backward(&tape, seed, None, true)
                .expect("input gradient requested");
            for (r, tr) in trace.iter_mut().enumerate() {
                *tr += d_in[r * f0 + i];
            }
        }
        (tape.out, trace)
    }
}
