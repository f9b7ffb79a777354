//! Semitrivial-escape machinery: given a constraint-set point with a
//! dead component, inject ε·φ into it, follow the continuation t(ε)
//! that keeps the perturbed function on the constraint set, and compare
//! the measured energy change against the leading-order coefficient of
//! the p < 2 (order ε^p) and p = 2 (order ε²) expansions.

use crate::discretize::{
    energy, mixed_integral, norm_sq, BlockFunction, DiscreteDomain, ScalarField,
};
use crate::model::ProblemSpec;
use crate::nehari::coefficients;
use crate::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct EscapeProbe {
    /// Index of the vanishing component that the probe feeds.
    pub dead_component: usize,
    /// Injection direction φ (lives in the dead component's space).
    pub direction: ScalarField,
    /// Decreasing positive injection amplitudes.
    pub epsilons: Vec<f64>,
}

/// Geometric ε schedule spanning 10⁻¹ … 10⁻⁴.
pub fn default_epsilons() -> Vec<f64> {
    let points = 13usize;
    let ratio = (1e-4f64 / 1e-1).powf(1.0 / (points as f64 - 1.0));
    (0..points).map(|k| 1e-1 * ratio.powi(k as i32)).collect()
}

impl EscapeProbe {
    pub fn validate(&self, domain: &DiscreteDomain) -> Result<(), Error> {
        if self.direction.values.len() != domain.n {
            return Err(Error::invalid("direction length does not match the grid"));
        }
        if self.direction.values.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("escape direction must be nonzero"));
        }
        if self.epsilons.is_empty()
            || self.epsilons.windows(2).any(|w| w[0] <= w[1])
            || self.epsilons.iter().any(|&e| !(e > 0.0))
        {
            return Err(Error::invalid("epsilons must be positive and decreasing"));
        }
        Ok(())
    }
}

/// Builds the default probe for a semitrivial candidate: zeroes the
/// weakest component, reprojects onto the constraint set, and takes φ
/// as the heaviest component of the dead component's block (globally
/// heaviest if its block carries nothing else). Returns the cleaned
/// constraint-set point alongside the probe.
pub fn default_probe(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
) -> Result<(EscapeProbe, BlockFunction), Error> {
    let norms: Vec<f64> = u
        .components
        .iter()
        .map(|c| c.l2p_norm(domain, spec.p))
        .collect();
    let dead = (0..spec.ell())
        .min_by(|&a, &b| norms[a].total_cmp(&norms[b]))
        .ok_or_else(|| Error::invalid("empty system"))?;
    let mut cleaned = u.clone();
    cleaned.components[dead] = ScalarField::zeros(domain.n);
    let cleaned = crate::nehari::project_to_nehari(domain, spec, &cleaned)?
        .ok_or_else(|| Error::no_convergence("cleaned candidate escaped the admissible set"))?;
    let h = spec.partition.block_of(dead);
    let donor = spec
        .partition
        .block_range(h)
        .filter(|&j| j != dead && norms[j] > 0.0)
        .max_by(|&a, &b| norms[a].total_cmp(&norms[b]))
        .or_else(|| {
            (0..spec.ell())
                .filter(|&j| j != dead && norms[j] > 0.0)
                .max_by(|&a, &b| norms[a].total_cmp(&norms[b]))
        })
        .ok_or_else(|| Error::invalid("no live component to borrow a direction from"))?;
    let probe = EscapeProbe {
        dead_component: dead,
        direction: cleaned.components[donor].clone(),
        epsilons: default_epsilons(),
    };
    probe.validate(domain)?;
    Ok((probe, cleaned))
}

fn inject(
    u: &BlockFunction,
    dead: usize,
    phi: &ScalarField,
    eps: f64,
) -> BlockFunction {
    let mut out = u.clone();
    out.components[dead] = phi.scaled(eps);
    out
}

/// The block membership functions of the injected family:
/// `F_h(ε, t) = ∂_{ū_h} 𝒥(t u_ε)[t_h ū_{ε,h}]`, evaluated through the
/// scale-polynomial coefficients of `u_ε` (so `F_h = t_h ∂_h J(t)`).
pub fn f_system(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
    phi: &ScalarField,
    dead: usize,
    eps: f64,
    t: &[f64],
) -> Result<Vec<f64>, Error> {
    let u_eps = inject(u, dead, phi, eps);
    let c = coefficients(domain, spec, &u_eps)?;
    let g = c.j_gradient(t, spec.p);
    Ok(t.iter().zip(g).map(|(&th, gh)| th * gh).collect())
}

/// The Jacobian (a_hk) of the F-system in t at (0, 1), with its sign
/// and strict-diagonal-dominance certificates:
/// `|a_hh| − Σ_{k≠h} |a_hk| = (2p−2)·‖ū_h‖²`.
pub fn jacobian_t(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
) -> Result<Vec<Vec<f64>>, Error> {
    let c = coefficients(domain, spec, u)?;
    let p = spec.p;
    let q = c.q();
    let mut a = vec![vec![0.0; q]; q];
    for h in 0..q {
        let cross: f64 = (0..q).filter(|&k| k != h).map(|k| c.d[h][k]).sum();
        a[h][h] = 4.0 * c.a[h] - 4.0 * p * p * c.b[h] + 2.0 * p * p * cross;
        for k in 0..q {
            if k != h {
                a[h][k] = 2.0 * p * p * c.d[h][k];
            }
        }
    }
    // certificates; failures mean u is not actually on the constraint set
    for h in 0..q {
        if !(a[h][h] < 0.0) {
            return Err(Error::invalid(format!(
                "diagonal entry a[{h}][{h}] = {} is not negative",
                a[h][h]
            )));
        }
        for k in 0..q {
            if k != h && c.d[h][k] != 0.0 && !(a[h][k] > 0.0) {
                return Err(Error::invalid(format!(
                    "off-diagonal a[{h}][{k}] = {} should be positive",
                    a[h][k]
                )));
            }
        }
        let gap = -a[h][h] - (0..q).filter(|&k| k != h).map(|k| a[h][k]).sum::<f64>();
        let expect = (2.0 * p - 2.0) * 2.0 * c.a[h];
        if (gap - expect).abs() > 1e-8 * (1.0 + expect.abs()) {
            return Err(Error::invalid(format!(
                "dominance identity violated in block {h}: gap {gap} vs (2p-2)|u_h|^2 = {expect}"
            )));
        }
    }
    Ok(a)
}

/// Newton continuation of the membership scales: solves F(ε, t) = 0
/// from t = 1. Errors mean ε is outside the continuation radius.
pub fn continue_t(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
    phi: &ScalarField,
    dead: usize,
    eps: f64,
) -> Result<Vec<f64>, Error> {
    let u_eps = inject(u, dead, phi, eps);
    let c = coefficients(domain, spec, &u_eps)?;
    let p = spec.p;
    let q = c.q();
    let scale = c.a.iter().fold(1.0f64, |m, &v| m.max(v));
    let tol = 1e-12 * scale;
    let mut t = vec![1.0; q];
    for _ in 0..80 {
        let g = c.j_gradient(&t, p);
        let f: Vec<f64> = t.iter().zip(&g).map(|(&th, gh)| th * gh).collect();
        if f.iter().map(|x| x * x).sum::<f64>().sqrt() <= tol {
            return Ok(t);
        }
        let hess = c.j_hessian(&t, p);
        // ∂F_h/∂t_k = δ_hk ∂_h J + t_h H_hk
        let mut jac = vec![vec![0.0; q]; q];
        for h in 0..q {
            for k in 0..q {
                jac[h][k] = t[h] * hess[h][k];
                if h == k {
                    jac[h][k] += g[h];
                }
            }
        }
        let dt = crate::linalg::solve_dense(&jac, &f)
            .ok_or_else(|| Error::no_convergence("singular continuation Jacobian"))?;
        let mut damping = 1.0;
        loop {
            let trial: Vec<f64> = t.iter().zip(&dt).map(|(x, d)| x - damping * d).collect();
            if trial.iter().all(|&v| v > 0.0) {
                t = trial;
                break;
            }
            damping *= 0.5;
            if damping < 1e-8 {
                return Err(Error::no_convergence(
                    "continuation left the positive orthant; epsilon too large",
                ));
            }
        }
    }
    Err(Error::no_convergence(
        "continuation Newton did not reach tolerance; epsilon outside the radius",
    ))
}

/// Leading coefficient of the energy expansion along the probe:
/// `−(1/p)·Σ_{j≠dead} β_{dead,j} ∫|φ|^p|u_j|^p` for p < 2, and
/// `½(‖φ‖²_{dead} − Σ_{j≠dead} β_{dead,j} ∫|φ|²|u_j|²)` for p = 2
/// (the ½ matches the ½‖·‖² energy normalization used throughout).
pub fn escape_coefficient(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
    phi: &ScalarField,
    dead: usize,
) -> f64 {
    let p = spec.p;
    let interaction: f64 = (0..spec.ell())
        .filter(|&j| j != dead)
        .map(|j| {
            let beta = spec.coupling.beta[dead][j];
            if beta == 0.0 {
                0.0
            } else {
                beta * mixed_integral(domain, phi, &u.components[j], p)
            }
        })
        .sum();
    if p < 2.0 {
        -interaction / p
    } else {
        0.5 * (norm_sq(domain, phi, spec.lambda[dead]) - interaction)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeReport {
    pub dead_component: usize,
    pub predicted: f64,
    pub fitted: f64,
    pub relative_gap: f64,
    pub passed: bool,
    /// (ε, t(ε), Δ(ε), Δ(ε)/ε^min(p,2)) rows, largest ε first.
    pub samples: Vec<(f64, Vec<f64>, f64, f64)>,
    /// ε values dropped by the round-off cancellation guard.
    pub truncated: Vec<f64>,
    pub notes: Vec<String>,
}

fn aitken_limit(c: &[f64]) -> f64 {
    // Aitken Δ² on the tail; falls back to the last raw value
    let mut best = *c.last().expect("nonempty sequence");
    if c.len() >= 3 {
        for w in c.windows(3).rev() {
            let denom = w[2] - 2.0 * w[1] + w[0];
            if denom.abs() > 1e-300 {
                let acc = w[2] - (w[2] - w[1]) * (w[2] - w[1]) / denom;
                if acc.is_finite() {
                    best = acc;
                    break;
                }
            }
        }
    }
    best
}

/// Runs the probe: for each ε follows the continuation, measures the
/// energy difference 𝒥(t(ε)u_ε) − 𝒥(u), extrapolates Δ(ε)/ε^min(p,2),
/// and compares against the predicted leading coefficient (5% gap).
pub fn escape_test(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    probe: &EscapeProbe,
    u: &BlockFunction,
) -> Result<EscapeReport, Error> {
    probe.validate(domain)?;
    let dead = probe.dead_component;
    if dead >= spec.ell() {
        return Err(Error::invalid("dead component index out of range"));
    }
    let predicted = escape_coefficient(domain, spec, u, &probe.direction, dead);
    let base_energy = energy(domain, spec, u);
    let power = spec.p.min(2.0);
    let guard = 1e-12 * base_energy.abs().max(1.0);

    use rayon::prelude::*;
    let measured: Vec<(f64, Result<(Vec<f64>, f64), Error>)> = probe
        .epsilons
        .par_iter()
        .map(|&eps| {
            let r = continue_t(domain, spec, u, &probe.direction, dead, eps).map(|t| {
                let scaled = inject(u, dead, &probe.direction, eps).scale_blocks(spec, &t);
                let delta = energy(domain, spec, &scaled) - base_energy;
                (t, delta)
            });
            (eps, r)
        })
        .collect();

    let mut samples = Vec::new();
    let mut truncated = Vec::new();
    let mut notes = Vec::new();
    for (eps, r) in measured {
        match r {
            Ok((t, delta)) => {
                if delta.abs() < guard {
                    truncated.push(eps);
                } else {
                    let scaled = delta / eps.powf(power);
                    samples.push((eps, t, delta, scaled));
                }
            }
            Err(e) => notes.push(format!("epsilon {eps:.3e}: {e}")),
        }
    }
    if samples.is_empty() {
        // every ε cancelled below round-off: the measured change is
        // indistinguishable from zero
        let passed = predicted.abs() <= 1e-9 * (1.0 + base_energy.abs());
        return Ok(EscapeReport {
            dead_component: dead,
            predicted,
            fitted: 0.0,
            relative_gap: if passed { 0.0 } else { f64::INFINITY },
            passed,
            samples,
            truncated,
            notes,
        });
    }
    let series: Vec<f64> = samples.iter().map(|s| s.3).collect();
    let fitted = aitken_limit(&series);
    let scale = predicted.abs().max(1e-9 * (1.0 + base_energy.abs()));
    let relative_gap = (fitted - predicted).abs() / scale;
    let passed = relative_gap <= 0.05;
    Ok(EscapeReport {
        dead_component: dead,
        predicted,
        fitted,
        relative_gap,
        passed,
        samples,
        truncated,
        notes,
    })
}
