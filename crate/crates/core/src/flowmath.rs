//! Interpolants, time sampling, Ornstein–Uhlenbeck endpoints and schedules.
//!
//! The OU process `dX = −X dt + √2 dW` has the closed-form marginal
//! `X_t = e^{−t} X_0 + √(1 − e^{−2t}) Z` with `Z ~ N(0, I)`, so its equilibrium
//! is the standard normal and diagonal Gaussians stay diagonal Gaussians.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::samples::Samples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InterpolantKind {
    /// `x_l + t (x_r − x_l)`
    Ot,
    /// `cos(πt/2) x_l + sin(πt/2) x_r`
    Trig,
}

impl InterpolantKind {
    pub fn id(self) -> u8 {
        match self {
            InterpolantKind::Ot => 0,
            InterpolantKind::Trig => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(InterpolantKind::Ot),
            1 => Some(InterpolantKind::Trig),
            _ => None,
        }
    }

    /// Coefficients `(a, b)` with `I_t = a x_l + b x_r`.
    fn coefficients(self, t: f64) -> (f64, f64) {
        match self {
            InterpolantKind::Ot => (1.0 - t, t),
            InterpolantKind::Trig => {
                let (s, c) = (FRAC_PI_2 * t).sin_cos();
                (c, s)
            }
        }
    }

    /// Time derivatives of [`coefficients`](Self::coefficients).
    fn coefficient_rates(self, t: f64) -> (f64, f64) {
        match self {
            InterpolantKind::Ot => (-1.0, 1.0),
            InterpolantKind::Trig => {
                let (s, c) = (FRAC_PI_2 * t).sin_cos();
                (-FRAC_PI_2 * s, FRAC_PI_2 * c)
            }
        }
    }
}

impl fmt::Display for InterpolantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterpolantKind::Ot => "ot",
            InterpolantKind::Trig => "trig",
        })
    }
}

impl FromStr for InterpolantKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ot" => Ok(InterpolantKind::Ot),
            "trig" => Ok(InterpolantKind::Trig),
            _ => Err(format!("unknown interpolant '{s}' (expected ot or trig)")),
        }
    }
}

fn check_unit_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid("t", format!("{t} is outside [0, 1]")));
    }
    Ok(())
}

fn check_pair(x_l: &[f64], x_r: &[f64]) -> Result<()> {
    if x_l.len() != x_r.len() {
        return Err(Error::DimensionMismatch {
            what: "interpolant endpoints",
            expected: x_l.len(),
            actual: x_r.len(),
        });
    }
    Ok(())
}

pub fn interp(kind: InterpolantKind, t: f64, x_l: &[f64], x_r: &[f64]) -> Result<Vec<f64>> {
    check_unit_time(t)?;
    check_pair(x_l, x_r)?;
    let mut out = vec![0.0; x_l.len()];
    interp_into(kind, t, x_l, x_r, &mut out);
    Ok(out)
}

/// `d/dt I_t(x_l, x_r)`.
pub fn interp_deriv(kind: InterpolantKind, t: f64, x_l: &[f64], x_r: &[f64]) -> Result<Vec<f64>> {
    check_unit_time(t)?;
    check_pair(x_l, x_r)?;
    let mut out = vec![0.0; x_l.len()];
    interp_deriv_into(kind, t, x_l, x_r, &mut out);
    Ok(out)
}

pub(crate) fn interp_into(kind: InterpolantKind, t: f64, x_l: &[f64], x_r: &[f64], out: &mut [f64]) {
    if kind == InterpolantKind::Ot {
        for ((o, l), r) in out.iter_mut().zip(x_l).zip(x_r) {
            *o = l + t * (r - l);
        }
        return;
    }
    let (a, b) = kind.coefficients(t);
    for ((o, l), r) in out.iter_mut().zip(x_l).zip(x_r) {
        *o = a * l + b * r;
    }
}

pub(crate) fn interp_deriv_into(kind: InterpolantKind, t: f64, x_l: &[f64], x_r: &[f64], out: &mut [f64]) {
    if kind == InterpolantKind::Ot {
        for ((o, l), r) in out.iter_mut().zip(x_l).zip(x_r) {
            *o = r - l;
        }
        return;
    }
    let (a, b) = kind.coefficient_rates(t);
    for ((o, l), r) in out.iter_mut().zip(x_l).zip(x_r) {
        *o = a * l + b * r;
    }
}

/// Beta(α, β) law of the training times.
#[derive(Debug, Clone, Copy)]
pub struct TimeSampler {
    alpha: f64,
    beta: f64,
    ga: Gamma<f64>,
    gb: Gamma<f64>,
}

impl PartialEq for TimeSampler {
    fn eq(&self, other: &Self) -> bool {
        self.alpha == other.alpha && self.beta == other.beta
    }
}

impl TimeSampler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("beta_alpha", format!("{alpha} must be positive")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("beta_beta", format!("{beta} must be positive")));
        }
        Ok(TimeSampler {
            alpha,
            beta,
            ga: Gamma::new(alpha, 1.0).expect("positive shape"),
            gb: Gamma::new(beta, 1.0).expect("positive shape"),
        })
    }

    pub fn uniform() -> Self {
        TimeSampler::new(1.0, 1.0).expect("valid")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// One draw `X / (X + Y)` with `X ~ Γ(α)`, `Y ~ Γ(β)` (Marsaglia–Tsang gamma draws).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = self.ga.sample(rng);
            let y = self.gb.sample(rng);
            let s = x + y;
            if s > 0.0 {
                return (x / s).clamp(0.0, 1.0);
            }
        }
    }
}

pub fn sample_time<R: Rng + ?Sized>(sampler: &TimeSampler, rng: &mut R) -> f64 {
    sampler.sample(rng)
}

/// Fill `out` with i.i.d. standard normal draws.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

pub fn standard_normal_samples<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Samples {
    let mut s = Samples::zeros(n, dim);
    fill_standard_normal(rng, s.as_mut_slice());
    s
}

/// Right endpoints `x_r = e^{−γ} x_l′ + √(1 − e^{−2γ}) g` with `x_l′` drawn
/// uniformly with replacement from `pool` and `g ~ N(0, I)`.
pub fn ou_right_sample<R: Rng + ?Sized>(pool: &Samples, gamma: f64, rng: &mut R, batch: usize) -> Result<Samples> {
    if pool.is_empty() {
        return Err(Error::Empty("left sample pool"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("{gamma} must be positive")));
    }
    let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..pool.len())).collect();
    let mut out = pool.gather(&idx);
    let decay = (-gamma).exp();
    let noise = (-(-2.0 * gamma).exp_m1()).sqrt();
    for v in out.as_mut_slice() {
        let g: f64 = StandardNormal.sample(rng);
        *v = decay * *v + noise * g;
    }
    Ok(out)
}

/// A training pair `(x_l, x_r)` for one OU step: `x_l` and the `x_l′` behind
/// `x_r` come from independent index draws.
pub fn ou_pair_sample<R: Rng + ?Sized>(
    left_pool: &Samples,
    gamma: f64,
    rng: &mut R,
    batch: usize,
) -> Result<(Samples, Samples)> {
    if left_pool.is_empty() {
        return Err(Error::Empty("left sample pool"));
    }
    let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..left_pool.len())).collect();
    let x_l = left_pool.gather(&idx);
    let x_r = ou_right_sample(left_pool, gamma, rng, batch)?;
    Ok((x_l, x_r))
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                what: "gaussian variance vector",
                expected: mean.len(),
                actual: var.len(),
            });
        }
        if mean.is_empty() {
            return Err(Error::Empty("gaussian mean"));
        }
        if let Some(v) = var.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("var", format!("variance {v} must be positive and finite")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian mean".into()));
        }
        Ok(DiagGaussian { mean, var })
    }

    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn isotropic(mean: Vec<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        DiagGaussian::new(mean, vec![var; d])
    }

    /// Moment fit (per-coordinate mean and population variance) of a sample cloud.
    pub fn fit(samples: &Samples) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Empty("at least two samples are needed for a Gaussian fit"));
        }
        DiagGaussian::new(samples.mean(), samples.variance())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Samples {
        let mut s = Samples::zeros(n, self.dim());
        for row in s.as_mut_slice().chunks_exact_mut(self.dim()) {
            for ((v, m), var) in row.iter_mut().zip(&self.mean).zip(&self.var) {
                let g: f64 = StandardNormal.sample(rng);
                *v = m + var.sqrt() * g;
            }
        }
        s
    }

    pub fn logpdf(&self, x: &[f64]) -> f64 {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| -0.5 * (ln2pi + v.ln() + (x - m) * (x - m) / v))
            .sum()
    }
}

/// `(OU)_0^t` applied to a diagonal Gaussian.
pub fn ou_gaussian_marginal(g: &DiagGaussian, t: f64) -> Result<DiagGaussian> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("OU time {t} must be non-negative")));
    }
    let decay = (-t).exp();
    let decay2 = (-2.0 * t).exp();
    // 1 − e^{−2t} via expm1 keeps small-t accuracy.
    let fresh = -(-2.0 * t).exp_m1();
    Ok(DiagGaussian {
        mean: g.mean.iter().map(|m| decay * m).collect(),
        var: g.var.iter().map(|v| decay2 * v + fresh).collect(),
    })
}

/// Geometric step sizes `γ_n = ρ^{n−1} c` and cumulative times `t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub c: f64,
    pub rho: f64,
    pub n_blocks: usize,
    gammas: Vec<f64>,
    timestamps: Vec<f64>,
}

impl Schedule {
    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// `t_0 = 0, …, t_N`.
    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn total_time(&self) -> f64 {
        self.timestamps[self.n_blocks]
    }
}

pub fn make_schedule(c: f64, rho: f64, n_blocks: usize) -> Result<Schedule> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("c", format!("{c} must be positive")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho", format!("{rho} must be positive")));
    }
    if n_blocks == 0 {
        return Err(Error::invalid("n_blocks", "must be at least 1"));
    }
    let gammas: Vec<f64> = (0..n_blocks).map(|n| rho.powi(n as i32) * c).collect();
    if gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::invalid("rho", "schedule under/overflows"));
    }
    let mut timestamps = Vec::with_capacity(n_blocks + 1);
    timestamps.push(0.0);
    for g in &gammas {
        let last = *timestamps.last().unwrap();
        timestamps.push(last + g);
    }
    Ok(Schedule {
        c,
        rho,
        n_blocks,
        gammas,
        timestamps,
    })
}
