//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls into the code under test except to evaluate
//! the function being differentiated.

#![allow(dead_code)]

use localflow::app::seeds::stream_rng;
use localflow::netcore::{Activation, MlpSpec, ParamVector, TimeFeatures, VelocityField};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 0xACCE)
}

/// A random smooth network; activations are those with a continuous second
/// derivative so central differences converge at their nominal rate.
pub fn random_spec(r: &mut ChaCha8Rng, d: usize) -> MlpSpec {
    let depth = r.gen_range(1..=3);
    let widths = (0..depth).map(|_| r.gen_range(2..=9)).collect();
    let act = [Activation::Softplus, Activation::Tanh, Activation::Linear][r.gen_range(0..3)];
    let tf = if r.gen_bool(0.5) {
        TimeFeatures::Raw
    } else {
        TimeFeatures::Sinusoidal(r.gen_range(1..=3))
    };
    MlpSpec::new(d, widths, act, tf).unwrap()
}

/// A field whose parameters (biases included) are all random, scaled by `scale`.
pub fn random_field(r: &mut ChaCha8Rng, spec: MlpSpec, scale: f64) -> VelocityField {
    let n = spec.param_count();
    let p = (0..n).map(|_| scale * (2.0 * r.gen::<f64>() - 1.0)).collect();
    VelocityField::new(spec, ParamVector::from_vec(p)).unwrap()
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * r.gen::<f64>() - 1.0)).collect()
}

/// Straight-line loss evaluation for finite differences.
pub fn loss_at(field: &VelocityField, params: &[f64], xs: &[f64], ts: &[f64], targets: &[f64]) -> f64 {
    let f = VelocityField::new(field.spec().clone(), ParamVector::from_vec(params.to_vec())).unwrap();
    let out = f.forward_batch(xs, ts).unwrap();
    out.iter().zip(targets).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / ts.len() as f64
}

/// Central-difference gradient of the batch loss.
pub fn fd_grad(field: &VelocityField, xs: &[f64], ts: &[f64], targets: &[f64], h: f64) -> Vec<f64> {
    let base = field.params().as_slice().to_vec();
    let mut p = base.clone();
    (0..base.len())
        .map(|i| {
            p[i] = base[i] + h;
            let up = loss_at(field, &p, xs, ts, targets);
            p[i] = base[i] - h;
            let dn = loss_at(field, &p, xs, ts, targets);
            p[i] = base[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Central-difference divergence `Σ_i ∂v_i/∂x_i`.
pub fn fd_divergence(field: &VelocityField, x: &[f64], t: f64, h: f64) -> f64 {
    let mut y = x.to_vec();
    let mut s = 0.0;
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let up = field.forward(&y, t).unwrap()[i];
        y[i] = x[i] - h;
        let dn = field.forward(&y, t).unwrap()[i];
        y[i] = x[i];
        s += (up - dn) / (2.0 * h);
    }
    s
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Analytic conditional velocity `E[dφ/dt | φ(t) = x]` for independent
/// `x_l ~ N(0, σ_l² I)`, `x_r ~ N(0, σ_r² I)`: `v(x, t) = a(t) x`.
///
/// For `φ = α x_l + β x_r` with `φ' = α' x_l + β' x_r`, joint Gaussianity gives
/// `a = (α α' σ_l² + β β' σ_r²) / (α² σ_l² + β² σ_r²)`.
pub fn gaussian_velocity_coeff(trig: bool, t: f64, sl: f64, sr: f64) -> f64 {
    let (al, be, dal, dbe) = if trig {
        let h = std::f64::consts::FRAC_PI_2;
        ((h * t).cos(), (h * t).sin(), -h * (h * t).sin(), h * (h * t).cos())
    } else {
        (1.0 - t, t, -1.0, 1.0)
    };
    let (vl, vr) = (sl * sl, sr * sr);
    (al * dal * vl + be * dbe * vr) / (al * al * vl + be * be * vr)
}

/// Grid RMS of `v(x, t) − a(t) x` over `|x_i| ≤ 2`, `t ∈ [0.1, 0.9]` in d = 2.
pub fn gaussian_velocity_rms(field: &VelocityField, trig: bool, sl: f64, sr: f64) -> f64 {
    let mut se = 0.0;
    let mut count = 0usize;
    for it in 0..=8 {
        let t = 0.1 + 0.1 * it as f64;
        let a = gaussian_velocity_coeff(trig, t, sl, sr);
        for i in 0..=10 {
            for j in 0..=10 {
                let x = [-2.0 + 0.4 * i as f64, -2.0 + 0.4 * j as f64];
                let v = field.forward(&x, t).unwrap();
                se += (v[0] - a * x[0]).powi(2) + (v[1] - a * x[1]).powi(2);
                count += 2;
            }
        }
    }
    (se / count as f64).sqrt()
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// `log |det M|` of a small dense matrix by Gaussian elimination with partial pivoting.
pub fn log_abs_det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut acc = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        acc += piv.abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / piv;
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    acc
}

/// Identity velocity `v(x, t) = x` as a one-layer linear network.
pub fn identity_field(d: usize) -> VelocityField {
    linear_field(&identity(d), &vec![0.0; d])
}

pub fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// `v(x, t) = A x + b` as a network with one linear hidden layer of width d
/// (identity) followed by the output layer (A, b).
pub fn linear_field(a: &[Vec<f64>], b: &[f64]) -> VelocityField {
    let d = b.len();
    let spec = MlpSpec::new(d, vec![d], Activation::Linear, TimeFeatures::Raw).unwrap();
    let f0 = spec.feature_dim();
    let mut p = Vec::with_capacity(spec.param_count());
    // layer 0: W (d × f0) picks the x block, zero bias
    for i in 0..d {
        for j in 0..f0 {
            p.push(if i == j { 1.0 } else { 0.0 });
        }
    }
    p.extend(std::iter::repeat(0.0).take(d));
    for row in a {
        p.extend_from_slice(row);
    }
    p.extend_from_slice(b);
    VelocityField::new(spec, ParamVector::from_vec(p)).unwrap()
}

/// A random architecture with random parameters in one draw.
pub fn random_net(r: &mut ChaCha8Rng, d: usize, scale: f64) -> VelocityField {
    let spec = random_spec(r, d);
    random_field(r, spec, scale)
}
