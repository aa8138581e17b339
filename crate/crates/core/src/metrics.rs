//! Closed-form divergences between diagonal Gaussians, energy-distance
//! two-sample statistics, and executable checks of the contraction and
//! stability properties of the OU-guided chain.
//!
//! Everything in the theory checks works on diagonal Gaussians, where χ², KL
//! and W2 are closed form and the OU step maps the family to itself.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::flowmath::{ou_gaussian_marginal, DiagGaussian};
use crate::samples::Samples;

fn check_same_dim(p: &DiagGaussian, q: &DiagGaussian) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            what: "gaussian dimension",
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    Ok(())
}

/// `log ∫ p²/q` for one coordinate, or `None` when the integral diverges.
fn log_chi2_factor(mp: f64, vp: f64, mq: f64, vq: f64) -> Option<f64> {
    // ∫ p²/q = vq / (√vp · √(2vq − vp)) · exp((mp − mq)² / (2vq − vp))
    let denom = 2.0 * vq - vp;
    if !(denom > 0.0) {
        return None;
    }
    let dm = mp - mq;
    Some(vq.ln() - 0.5 * vp.ln() - 0.5 * denom.ln() + dm * dm / denom)
}

/// `χ²(p‖q) = ∫ p²/q − 1`.
pub fn chi2_gaussian(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    check_same_dim(p, q)?;
    let mut log_int = 0.0;
    for i in 0..p.dim() {
        log_int += log_chi2_factor(p.mean[i], p.var[i], q.mean[i], q.var[i])
            .ok_or(Error::Chi2Divergent { coord: i })?;
    }
    Ok(log_int.exp_m1().max(0.0))
}

pub fn kl_gaussian(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    check_same_dim(p, q)?;
    let mut kl = 0.0;
    for i in 0..p.dim() {
        let r = p.var[i] / q.var[i];
        let dm = p.mean[i] - q.mean[i];
        kl += 0.5 * (r + dm * dm / q.var[i] - 1.0 - r.ln());
    }
    Ok(kl.max(0.0))
}

/// 2-Wasserstein distance; for diagonal covariances the Bures term is `Σ(σ_p − σ_q)²`.
pub fn w2_gaussian(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    check_same_dim(p, q)?;
    let mut s = 0.0;
    for i in 0..p.dim() {
        let dm = p.mean[i] - q.mean[i];
        let ds = p.var[i].sqrt() - q.var[i].sqrt();
        s += dm * dm + ds * ds;
    }
    Ok(s.sqrt())
}

/// Second moment `E‖X‖²`.
pub fn second_moment(p: &DiagGaussian) -> f64 {
    p.mean.iter().zip(&p.var).map(|(m, v)| m * m + v).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_pairwise(a: &Samples, b: &Samples) -> f64 {
    let mut s = 0.0;
    for x in a.rows() {
        for y in b.rows() {
            s += dist(x, y);
        }
    }
    s / (a.len() as f64 * b.len() as f64)
}

/// Orders two sample sets canonically so cross sums are symmetric bit for bit.
fn canonical<'a>(x: &'a Samples, y: &'a Samples) -> (&'a Samples, &'a Samples) {
    let key = |s: &Samples| (s.len(), s.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    if key(x) <= key(y) {
        (x, y)
    } else {
        (y, x)
    }
}

/// V-statistic energy distance `2E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖`.
pub fn energy_distance(x: &Samples, y: &Samples) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("energy distance samples"));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            what: "energy distance sample dimension",
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    let (a, b) = canonical(x, y);
    let cross = mean_pairwise(a, b);
    let within = mean_pairwise(a, a) + mean_pairwise(b, b);
    Ok(2.0 * cross - within)
}

/// Energy statistic and its label-permutation p-value `(1 + #{E_π ≥ E}) / (1 + n_perm)`.
pub fn permutation_test<R: Rng + ?Sized>(x: &Samples, y: &Samples, n_perm: usize, rng: &mut R) -> Result<(f64, f64)> {
    let observed = energy_distance(x, y)?;
    let (nx, ny) = (x.len(), y.len());
    let n = nx + ny;
    let d = x.dim();
    let mut pooled = x.as_slice().to_vec();
    pooled.extend_from_slice(y.as_slice());
    let pooled = Samples::new(d, pooled)?;
    // Full distance matrix, upper triangle mirrored.
    let mut dm = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist(pooled.row(i), pooled.row(j));
            dm[i * n + j] = v;
            dm[j * n + i] = v;
        }
    }
    let stat = |labels: &[bool]| {
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let row = &dm[i * n..(i + 1) * n];
            for j in 0..n {
                match (labels[i], labels[j]) {
                    (true, true) => sxx += row[j],
                    (false, false) => syy += row[j],
                    _ => sxy += row[j],
                }
            }
        }
        // sxy counts each cross pair twice.
        sxy / (nx as f64 * ny as f64) - sxx / (nx * nx) as f64 - syy / (ny * ny) as f64
    };
    let mut labels: Vec<bool> = (0..n).map(|i| i < nx).collect();
    let reference = stat(&labels);
    let mut exceed = 0usize;
    for _ in 0..n_perm {
        labels.shuffle(rng);
        if stat(&labels) >= reference - 1e-12 * reference.abs() {
            exceed += 1;
        }
    }
    Ok((observed, (1 + exceed) as f64 / (1 + n_perm) as f64))
}

pub fn permutation_pvalue<R: Rng + ?Sized>(x: &Samples, y: &Samples, n_perm: usize, rng: &mut R) -> Result<f64> {
    Ok(permutation_test(x, y, n_perm, rng)?.1)
}

/// One line of a theory-check report.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub name: String,
    pub chi2: Option<f64>,
    pub kl: Option<f64>,
    pub w2: Option<f64>,
    /// The quantity compared against the bound.
    pub measured: f64,
    pub bound_rhs: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl DivergenceReport {
    fn new(name: String, measured: f64, bound_rhs: f64, tolerance: f64) -> Self {
        let passed = measured.is_finite() && bound_rhs.is_finite() && measured <= bound_rhs + tolerance;
        DivergenceReport {
            name,
            chi2: None,
            kl: None,
            w2: None,
            measured,
            bound_rhs,
            tolerance,
            passed,
        }
    }
}

impl fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.12e}\t{:.12e}\t{}",
            self.name,
            self.measured,
            self.bound_rhs,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// `χ²((OU)^γ p ‖ q) ≤ e^{−2γ} χ²(p‖q)` for `p = N(m, I)`, `q = N(0, I)` over a grid.
pub fn check_ou_contraction(m_grid: &[Vec<f64>], gamma_grid: &[f64]) -> Result<Vec<DivergenceReport>> {
    let mut out = Vec::with_capacity(m_grid.len() * gamma_grid.len());
    for m in m_grid {
        let p = DiagGaussian::isotropic(m.clone(), 1.0)?;
        let q = DiagGaussian::standard(p.dim());
        let before = chi2_gaussian(&p, &q)?;
        for &gamma in gamma_grid {
            let after = chi2_gaussian(&ou_gaussian_marginal(&p, gamma)?, &q)?;
            let mut r = DivergenceReport::new(
                format!("ou_contraction |m|={:.3} gamma={gamma:.3}", norm(m)),
                after,
                (-2.0 * gamma).exp() * before,
                1e-12,
            );
            r.chi2 = Some(after);
            out.push(r);
        }
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `W2(P, (OU)^δ P) ≤ C₅ √δ` with `C₅ = (M₂(P) + 2d)^{1/2}`.
pub fn check_initial_diffusion_w2(p: &DiagGaussian, delta_grid: &[f64]) -> Result<Vec<DivergenceReport>> {
    let c5 = (second_moment(p) + 2.0 * p.dim() as f64).sqrt();
    let mut out = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid("delta", format!("{delta} must lie in [0, 1)")));
        }
        let w = w2_gaussian(p, &ou_gaussian_marginal(p, delta)?)?;
        let mut r = DivergenceReport::new(format!("w2_initial_diffusion delta={delta:.3}"), w, c5 * delta.sqrt(), 1e-12);
        r.w2 = Some(w);
        out.push(r);
    }
    Ok(out)
}

/// Pushforward of a diagonal Gaussian under `x ↦ a ⊙ x + b`.
pub fn affine_pushforward(g: &DiagGaussian, a: &[f64], b: &[f64]) -> Result<DiagGaussian> {
    if a.len() != g.dim() || b.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            what: "affine map",
            expected: g.dim(),
            actual: a.len().min(b.len()),
        });
    }
    if let Some(i) = a.iter().position(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::invalid("A", format!("diagonal entry {i} makes the map singular")));
    }
    DiagGaussian::new(
        g.mean.iter().zip(a).zip(b).map(|((m, a), b)| a * m + b).collect(),
        g.var.iter().zip(a).map(|(v, a)| a * a * v).collect(),
    )
}

/// `D(T#p ‖ T#q) = D(p ‖ q)` for an invertible diagonal affine `T`; reports the
/// absolute change in KL and, when convergent, χ².
pub fn check_bidirectional_dpi(a: &[f64], b: &[f64], p: &DiagGaussian, q: &DiagGaussian) -> Result<DivergenceReport> {
    let tp = affine_pushforward(p, a, b)?;
    let tq = affine_pushforward(q, a, b)?;
    let kl0 = kl_gaussian(p, q)?;
    let kl1 = kl_gaussian(&tp, &tq)?;
    let mut gap = (kl0 - kl1).abs() / kl0.abs().max(1.0);
    let chi = match (chi2_gaussian(p, q), chi2_gaussian(&tp, &tq)) {
        (Ok(c0), Ok(c1)) => {
            gap = gap.max((c0 - c1).abs() / c0.abs().max(1.0));
            Some(c0)
        }
        (Err(Error::Chi2Divergent { .. }), Err(Error::Chi2Divergent { .. })) => None,
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let mut r = DivergenceReport::new("bidirectional_dpi".into(), gap, 0.0, 1e-10);
    r.kl = Some(kl0);
    r.chi2 = chi;
    Ok(r)
}

/// `KL(p‖q) ≤ χ²(p‖q)`.
pub fn check_kl_below_chi2(p: &DiagGaussian, q: &DiagGaussian) -> Result<DivergenceReport> {
    let kl = kl_gaussian(p, q)?;
    let chi = chi2_gaussian(p, q)?;
    let mut r = DivergenceReport::new("kl_below_chi2".into(), kl, chi, 1e-12);
    r.kl = Some(kl);
    r.chi2 = Some(chi);
    Ok(r)
}

/// The fixed verification suite run by the `verify` command.
pub fn verify_suite() -> Result<Vec<DivergenceReport>> {
    let mut out = Vec::new();

    // χ² of a unit shift is e − 1.
    let q2 = DiagGaussian::standard(2);
    let shifted = DiagGaussian::isotropic(vec![1.0, 0.0], 1.0)?;
    let c = chi2_gaussian(&shifted, &q2)?;
    out.push(DivergenceReport::new(
        "chi2_unit_shift_closed_form".into(),
        (c - (std::f64::consts::E - 1.0)).abs(),
        0.0,
        1e-12,
    ));

    // OU semigroup on a non-trivial Gaussian.
    let g = DiagGaussian::new(vec![1.5, -0.5, 2.0], vec![0.3, 2.0, 1.0])?;
    let two = ou_gaussian_marginal(&ou_gaussian_marginal(&g, 0.3)?, 0.45)?;
    let one = ou_gaussian_marginal(&g, 0.75)?;
    let gap = two
        .mean
        .iter()
        .zip(&one.mean)
        .chain(two.var.iter().zip(&one.var))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    out.push(DivergenceReport::new("ou_semigroup".into(), gap, 0.0, 1e-12));

    // Contraction grid (10 × 10), summarised as one worst-case line plus endpoints.
    let m_grid: Vec<Vec<f64>> = (0..10).map(|i| vec![0.15 * (i + 1) as f64, 0.0]).collect();
    let gamma_grid: Vec<f64> = (0..10).map(|j| 0.05 + 0.2 * j as f64).collect();
    let reports = check_ou_contraction(&m_grid, &gamma_grid)?;
    let worst = reports
        .iter()
        .map(|r| r.measured - r.bound_rhs)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut r = DivergenceReport::new("ou_contraction_grid_worst_slack".into(), worst, 0.0, 1e-12);
    r.passed &= reports.iter().all(|r| r.passed);
    out.push(r);
    out.extend(check_ou_contraction(&[vec![1.0, 0.0]], &[0.5])?);
    let eq = check_ou_contraction(&[vec![1.0, 0.0]], &[0.0])?.remove(0);
    out.push(DivergenceReport::new(
        "ou_contraction_identity_step".into(),
        (eq.measured - eq.bound_rhs).abs(),
        0.0,
        1e-12,
    ));

    // KL ≤ χ² over shifts.
    let mut worst = f64::NEG_INFINITY;
    let mut all = true;
    for i in 0..=15 {
        let p = DiagGaussian::isotropic(vec![0.1 * i as f64, 0.0], 1.0)?;
        let r = check_kl_below_chi2(&p, &q2)?;
        worst = worst.max(r.measured - r.bound_rhs);
        all &= r.passed;
    }
    let mut r = DivergenceReport::new("kl_below_chi2_grid".into(), worst, 0.0, 1e-12);
    r.passed &= all;
    out.push(r);

    // DPI under invertible diagonal affine maps.
    out.push(check_bidirectional_dpi(&[1.0, 1.0], &[3.0, -2.0], &shifted, &q2)?);
    let p = DiagGaussian::isotropic(vec![0.0, 0.0], 1.0)?;
    let q = DiagGaussian::isotropic(vec![0.0, 0.0], 2.0)?;
    out.push(check_bidirectional_dpi(&[2.0, 2.0], &[0.0, 0.0], &p, &q)?);
    let p = DiagGaussian::new(vec![0.3, -0.7], vec![0.8, 1.2])?;
    let q = DiagGaussian::new(vec![-0.1, 0.4], vec![1.0, 1.5])?;
    out.push(check_bidirectional_dpi(&[1.0, 3.0], &[0.5, 0.5], &p, &q)?);

    // W2 after a short initial diffusion.
    let deltas: Vec<f64> = (1..=50).map(|i| 0.01 * i as f64).collect();
    let w = check_initial_diffusion_w2(&DiagGaussian::standard(2), &deltas)?;
    let worst = w.iter().map(|r| r.measured - r.bound_rhs).fold(f64::NEG_INFINITY, f64::max);
    let mut r = DivergenceReport::new("w2_initial_diffusion_grid_worst_slack".into(), worst, 0.0, 1e-12);
    r.passed &= w.iter().all(|r| r.passed);
    out.push(r);
    out.extend(check_initial_diffusion_w2(&DiagGaussian::standard(2), &[0.25])?);
    let monotone = w.windows(2).all(|p| p[1].bound_rhs > p[0].bound_rhs);
    out.push(DivergenceReport::new(
        "w2_bound_monotone_in_delta".into(),
        if monotone { 0.0 } else { 1.0 },
        0.0,
        0.0,
    ));
    let shifted_p = DiagGaussian::new(vec![2.0, -1.0], vec![0.5, 3.0])?;
    out.extend(check_initial_diffusion_w2(&shifted_p, &[0.01, 0.1, 0.5])?);

    // Energy distance of a set with itself is zero.
    let s = Samples::from_rows(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]])?;
    out.push(DivergenceReport::new(
        "energy_distance_self_zero".into(),
        energy_distance(&s, &s)?.abs(),
        0.0,
        0.0,
    ));
    Ok(out)
}

pub fn render_report(reports: &[DivergenceReport]) -> String {
    let mut s = String::from("# check\tmeasured\tbound\tresult\n");
    for r in reports {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    s.push_str(&format!("# {passed}/{} checks passed\n", reports.len()));
    s
}
