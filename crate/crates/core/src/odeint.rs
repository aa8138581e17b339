//! Fixed-step integration of a velocity field over a block's unit interval.
//!
//! Each block runs in rescaled time `[0, 1]`. Forward integration goes from
//! `t = 0` to `t = 1`; reverse integration walks the same grid from `t = 1`
//! back to `t = 0`. The divergence variant integrates the augmented state
//! `(x, ℓ)` with `dℓ/dt = ∇·v(x, t)` using the same scheme, so `ℓ` picks up
//! `∫ ∇·v dt` in the direction of travel (negative of the forward integral
//! when reversing).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::netcore::VelocityField;
use crate::samples::Samples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl Scheme {
    pub fn id(self) -> u8 {
        match self {
            Scheme::Euler => 0,
            Scheme::Rk4 => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Scheme::Euler),
            1 => Some(Scheme::Rk4),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            _ => Err(format!("unknown scheme '{s}' (expected euler or rk4)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            scheme: Scheme::Rk4,
            steps: 20,
        }
    }
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        Ok(IntegratorConfig { scheme, steps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    fn span(self) -> (f64, f64) {
        match self {
            Direction::Forward => (0.0, 1.0),
            Direction::Reverse => (1.0, 0.0),
        }
    }
}

/// Grid time of node `k` on `[t0, t1]` split into `steps` pieces. Endpoints are exact.
#[inline]
fn node(t0: f64, t1: f64, k: usize, steps: usize) -> f64 {
    if k == steps {
        t1
    } else {
        t0 + (t1 - t0) * (k as f64 / steps as f64)
    }
}

fn check_state(xs: &[f64], what: &str, step: usize) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} at integration step {step}")))
    }
}

struct Evaluator<'a> {
    field: &'a VelocityField,
    with_div: bool,
}

impl Evaluator<'_> {
    fn eval(&self, xs: &[f64], t: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let ts = vec![t; n];
        if self.with_div {
            self.field.forward_with_trace(xs, &ts)
        } else {
            Ok((self.field.forward_batch(xs, &ts)?, Vec::new()))
        }
    }
}

fn axpy(out: &mut [f64], base: &[f64], h: f64, k: &[f64]) {
    for ((o, b), k) in out.iter_mut().zip(base).zip(k) {
        *o = b + h * k;
    }
}

/// Core stepper over `[t0, t1]`. `div` (one entry per point) is accumulated when present.
fn run(
    field: &VelocityField,
    xs: &mut [f64],
    mut div: Option<&mut [f64]>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<()> {
    let d = field.dim();
    if xs.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            what: "integrator state (n × d)",
            expected: (xs.len() / d + 1) * d,
            actual: xs.len(),
        });
    }
    if cfg.steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    let n = xs.len() / d;
    if n == 0 {
        return Ok(());
    }
    check_state(xs, "initial state", 0)?;
    let ev = Evaluator {
        field,
        with_div: div.is_some(),
    };
    let steps = cfg.steps;
    let mut tmp = vec![0.0; xs.len()];
    for k in 0..steps {
        let ta = node(t0, t1, k, steps);
        let tb = node(t0, t1, k + 1, steps);
        let h = tb - ta;
        match cfg.scheme {
            Scheme::Euler => {
                let (v, tr) = ev.eval(xs, ta, n)?;
                for (x, v) in xs.iter_mut().zip(&v) {
                    *x += h * v;
                }
                if let Some(l) = div.as_deref_mut() {
                    for (l, tr) in l.iter_mut().zip(&tr) {
                        *l += h * tr;
                    }
                }
            }
            Scheme::Rk4 => {
                let tm = ta + 0.5 * h;
                let (k1, d1) = ev.eval(xs, ta, n)?;
                axpy(&mut tmp, xs, 0.5 * h, &k1);
                let (k2, d2) = ev.eval(&tmp, tm, n)?;
                axpy(&mut tmp, xs, 0.5 * h, &k2);
                let (k3, d3) = ev.eval(&tmp, tm, n)?;
                axpy(&mut tmp, xs, h, &k3);
                let (k4, d4) = ev.eval(&tmp, tb, n)?;
                for (i, x) in xs.iter_mut().enumerate() {
                    *x += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                if let Some(l) = div.as_deref_mut() {
                    for (i, l) in l.iter_mut().enumerate() {
                        *l += h / 6.0 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]);
                    }
                }
            }
        }
        check_state(xs, "state", k + 1)?;
        if let Some(l) = div.as_deref() {
            check_state(l, "divergence integral", k + 1)?;
        }
    }
    Ok(())
}

/// Solve `ẋ = v(x, t)` for one point across the unit interval.
pub fn integrate(field: &VelocityField, x0: &[f64], direction: Direction, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: field.dim(),
            actual: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let (t0, t1) = direction.span();
    run(field, &mut x, None, t0, t1, cfg)?;
    Ok(x)
}

/// As [`integrate`], for a whole batch at once.
pub fn integrate_batch(field: &VelocityField, xs: &Samples, direction: Direction, cfg: &IntegratorConfig) -> Result<Samples> {
    check_dim(field, xs)?;
    let mut out = xs.clone();
    let (t0, t1) = direction.span();
    run(field, out.as_mut_slice(), None, t0, t1, cfg)?;
    Ok(out)
}

/// Final state and `∫ ∇·v dt` along the trajectory.
pub fn integrate_with_divergence(
    field: &VelocityField,
    x0: &[f64],
    direction: Direction,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, f64)> {
    let (t0, t1) = direction.span();
    integrate_span_with_divergence(field, x0, t0, t1, cfg)
}

/// Batched [`integrate_with_divergence`]; returns per-point divergence integrals.
pub fn integrate_batch_with_divergence(
    field: &VelocityField,
    xs: &Samples,
    direction: Direction,
    cfg: &IntegratorConfig,
) -> Result<(Samples, Vec<f64>)> {
    check_dim(field, xs)?;
    let mut out = xs.clone();
    let mut div = vec![0.0; xs.len()];
    let (t0, t1) = direction.span();
    run(field, out.as_mut_slice(), Some(&mut div), t0, t1, cfg)?;
    Ok((out, div))
}

/// Integrate over an arbitrary sub-interval `[t0, t1]` with `cfg.steps` steps.
pub fn integrate_span(field: &VelocityField, x0: &[f64], t0: f64, t1: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: field.dim(),
            actual: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    run(field, &mut x, None, t0, t1, cfg)?;
    Ok(x)
}

pub fn integrate_span_with_divergence(
    field: &VelocityField,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, f64)> {
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: field.dim(),
            actual: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let mut div = [0.0];
    run(field, &mut x, Some(&mut div), t0, t1, cfg)?;
    Ok((x, div[0]))
}

fn check_dim(field: &VelocityField, xs: &Samples) -> Result<()> {
    if xs.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            what: "sample dimension",
            expected: field.dim(),
            actual: xs.dim(),
        });
    }
    Ok(())
}
