//! The finite-dimensional synchronized system: amplitudes c with
//! `c_i = Σ_j β_ij |c_j|^p |c_i|^{p−2} c_i`, solved by minimizing the
//! algebraic energy `J(c) = ½|c|² − (1/2p) Σ β_ij |c_i|^p |c_j|^p` over
//! the manifold M = {c ≠ 0 : ⟨∇J(c), c⟩ = 0}.
//!
//! On the unit sphere the constrained scale is explicit, so minimizing J
//! on M is equivalent to maximizing the interaction form
//! `B(c) = Σ β_ij |c_i|^p |c_j|^p` over the sphere (intersected with the
//! closed positive orthant; J is even in every coordinate).

use crate::linalg::solve_dense;
use crate::model::{ConditionReport, ProblemSpec};
use crate::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncCandidate {
    pub c: Vec<f64>,
}

impl SyncCandidate {
    pub fn fully_synchronized(&self, tol: f64) -> bool {
        let max = self.c.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        self.c.iter().all(|&x| x > tol * max)
    }
}

#[derive(Debug, Clone)]
pub struct SyncConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            restarts: 16,
            max_iterations: 4000,
            tolerance: 1e-14,
            seed: 0,
        }
    }
}

/// Interaction form `B(c) = Σ_ij β_ij |c_i|^p |c_j|^p`.
pub fn interaction_form(c: &[f64], beta: &[Vec<f64>], p: f64) -> f64 {
    let ell = c.len();
    let cp: Vec<f64> = c.iter().map(|&x| x.abs().powf(p)).collect();
    let mut b = 0.0;
    for i in 0..ell {
        for j in 0..ell {
            b += beta[i][j] * cp[i] * cp[j];
        }
    }
    b
}

/// Algebraic energy `J(c) = ½|c|² − (1/2p) B(c)`.
pub fn j_algebraic(c: &[f64], beta: &[Vec<f64>], p: f64) -> f64 {
    let norm_sq: f64 = c.iter().map(|x| x * x).sum();
    0.5 * norm_sq - interaction_form(c, beta, p) / (2.0 * p)
}

/// Residual of the synchronized system:
/// `max_i |c_i − Σ_j β_ij |c_j|^p |c_i|^{p−2} c_i|`, with the zero
/// convention at c_i = 0 for p < 2.
pub fn sync_residual(c: &[f64], beta: &[Vec<f64>], p: f64) -> f64 {
    let ell = c.len();
    let cp: Vec<f64> = c.iter().map(|&x| x.abs().powf(p)).collect();
    (0..ell)
        .map(|i| {
            let s: f64 = (0..ell).map(|j| beta[i][j] * cp[j]).sum();
            let pm = if c[i] == 0.0 {
                0.0
            } else {
                c[i].abs().powf(p - 2.0) * c[i]
            };
            (c[i] - pm * s).abs()
        })
        .fold(0.0, f64::max)
}

/// Scales a nonzero vector onto M with the closed form
/// `t = (|c|² / B(c))^{1/(2p−2)}`; `None` when the interaction sum is
/// not positive (no positive scaling lands on M).
pub fn project_to_m(c: &[f64], beta: &[Vec<f64>], p: f64) -> Option<SyncCandidate> {
    let b = interaction_form(c, beta, p);
    if !(b > 0.0) {
        return None;
    }
    let norm_sq: f64 = c.iter().map(|x| x * x).sum();
    let t = (norm_sq / b).powf(1.0 / (2.0 * p - 2.0));
    Some(SyncCandidate {
        c: c.iter().map(|&x| t * x).collect(),
    })
}

/// `⟨∇J(c), c⟩ = |c|² − B(c)`; vanishes on M.
pub fn m_constraint(c: &[f64], beta: &[Vec<f64>], p: f64) -> f64 {
    c.iter().map(|x| x * x).sum::<f64>() - interaction_form(c, beta, p)
}

fn newton_polish(c: &mut [f64], beta: &[Vec<f64>], p: f64, tol: f64) {
    // polish on the positive support only; zero coordinates are exact
    // solutions of their equation and stay zero
    let support: Vec<usize> = (0..c.len()).filter(|&i| c[i] > 0.0).collect();
    let m = support.len();
    if m == 0 {
        return;
    }
    for _ in 0..60 {
        let cp: Vec<f64> = c.iter().map(|&x| x.abs().powf(p)).collect();
        let g: Vec<f64> = support
            .iter()
            .map(|&i| {
                let s: f64 = (0..c.len()).map(|j| beta[i][j] * cp[j]).sum();
                c[i] - c[i].powf(p - 1.0) * s
            })
            .collect();
        if g.iter().map(|x| x * x).sum::<f64>().sqrt() <= tol {
            break;
        }
        let mut jac = vec![vec![0.0; m]; m];
        for (a, &i) in support.iter().enumerate() {
            let s: f64 = (0..c.len()).map(|j| beta[i][j] * cp[j]).sum();
            for (b_idx, &k) in support.iter().enumerate() {
                let mut v = -c[i].powf(p - 1.0) * beta[i][k] * p * c[k].powf(p - 1.0);
                if k == i {
                    v += 1.0 - (p - 1.0) * c[i].powf(p - 2.0) * s;
                }
                jac[a][b_idx] = v;
            }
        }
        match solve_dense(&jac, &g) {
            Some(dx) => {
                for (a, &i) in support.iter().enumerate() {
                    let next = c[i] - dx[a];
                    if !(next > 0.0 && next.is_finite()) {
                        return; // keep the unpolished iterate
                    }
                    c[i] = next;
                }
            }
            None => return,
        }
    }
}

/// Exact full-support solve at p = 2: the synchronized system is linear
/// in the squared amplitudes, `Σ_j β_ij c_j² = 1` for every i.
fn full_support_p2(beta: &[Vec<f64>]) -> Option<SyncCandidate> {
    let ell = beta.len();
    let rhs = vec![1.0; ell];
    let x = solve_dense(beta, &rhs)?;
    if x.iter().all(|&v| v > 0.0) {
        Some(SyncCandidate {
            c: x.iter().map(|v| v.sqrt()).collect(),
        })
    } else {
        None
    }
}

/// Full-support solve for p ≠ 2 by the scale-projected fixed point
/// `c ← project_to_M(T(c))` with `T_i(c) = (Σ_j β_ij c_j^p)^{1/(2−p)}`
/// (the synchronized system rearranged for c_i > 0), polished by Newton.
fn full_support_fixed_point(
    beta: &[Vec<f64>],
    p: f64,
    start: &[f64],
    iterations: usize,
) -> Option<SyncCandidate> {
    let ell = beta.len();
    let mut c = start.to_vec();
    for _ in 0..iterations {
        let cp: Vec<f64> = c.iter().map(|&x| x.powf(p)).collect();
        let mut next = Vec::with_capacity(ell);
        for i in 0..ell {
            let s: f64 = (0..ell).map(|j| beta[i][j] * cp[j]).sum();
            if !(s > 0.0) {
                return None;
            }
            next.push(s.powf(1.0 / (2.0 - p)));
        }
        c = project_to_m(&next, beta, p)?.c;
        if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return None;
        }
    }
    newton_polish(&mut c, beta, p, 1e-15);
    if c.iter().all(|&v| v > 0.0) && sync_residual(&c, beta, p) <= 1e-9 {
        Some(SyncCandidate { c })
    } else {
        None
    }
}

/// Solves the synchronized system. The fully supported solution is
/// preferred when one exists (the synchronized-existence path); when no
/// fully supported critical point is found, the global minimizer of J
/// over M is returned instead, which may have zero amplitudes. `None`
/// means no positive-interaction direction exists at all.
pub fn solve_sync(
    beta: &[Vec<f64>],
    p: f64,
    config: &SyncConfig,
) -> Result<Option<SyncCandidate>, Error> {
    use rand::{Rng, SeedableRng};
    let ell = beta.len();
    if ell == 0 || beta.iter().any(|r| r.len() != ell) {
        return Err(Error::invalid("beta must be square"));
    }
    if !(p > 1.0) {
        return Err(Error::invalid("p must exceed 1"));
    }
    if (0..ell).any(|i| !(beta[i][i] > 0.0)) {
        return Err(Error::invalid("diagonal couplings must be positive"));
    }
    let normalize = |c: &mut Vec<f64>| {
        let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            for x in c.iter_mut() {
                *x /= n;
            }
        }
    };
    let grad_b = |c: &[f64]| -> Vec<f64> {
        let cp: Vec<f64> = c.iter().map(|&x| x.abs().powf(p)).collect();
        (0..ell)
            .map(|i| {
                let s: f64 = (0..ell).map(|j| beta[i][j] * cp[j]).sum();
                let pm = if c[i] == 0.0 {
                    0.0
                } else {
                    c[i].abs().powf(p - 2.0) * c[i]
                };
                2.0 * p * pm * s
            })
            .collect()
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    starts.push(vec![1.0; ell]);
    for i in 0..ell {
        let mut e = vec![0.05; ell];
        e[i] = 1.0;
        starts.push(e);
        let mut pure = vec![0.0; ell];
        pure[i] = 1.0;
        starts.push(pure);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    while starts.len() < config.restarts + ell + 1 {
        starts.push((0..ell).map(|_| rng.gen_range(0.01..1.0)).collect());
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for mut c in starts {
        normalize(&mut c);
        let mut b_cur = interaction_form(&c, beta, p);
        let mut step = 0.5;
        for _ in 0..config.max_iterations {
            let g = grad_b(&c);
            // tangential part
            let radial: f64 = g.iter().zip(&c).map(|(a, b)| a * b).sum();
            let tang: Vec<f64> = g.iter().zip(&c).map(|(a, b)| a - radial * b).collect();
            let tnorm = tang.iter().map(|x| x * x).sum::<f64>().sqrt();
            if tnorm <= config.tolerance * (1.0 + b_cur.abs()) {
                break;
            }
            let mut advanced = false;
            for _ in 0..40 {
                let mut trial: Vec<f64> = c
                    .iter()
                    .zip(&tang)
                    .map(|(x, t)| (x + step * t).max(0.0))
                    .collect();
                normalize(&mut trial);
                let b_trial = interaction_form(&trial, beta, p);
                if b_trial > b_cur {
                    c = trial;
                    b_cur = b_trial;
                    step = (step * 2.0).min(10.0);
                    advanced = true;
                    break;
                }
                step *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        if b_cur > 0.0 {
            match &best {
                Some((b_best, _)) if *b_best >= b_cur => {}
                _ => best = Some((b_cur, c)),
            }
        }
    }
    let minimizer = best.and_then(|(_, c_sphere)| {
        let mut cand = project_to_m(&c_sphere, beta, p)?;
        newton_polish(&mut cand.c, beta, p, 1e-15);
        Some(cand)
    });

    let full = if p == 2.0 {
        full_support_p2(beta)
    } else {
        let mut found: Option<SyncCandidate> = None;
        let mut fp_starts: Vec<Vec<f64>> = vec![vec![1.0; ell]];
        if let Some(m) = &minimizer {
            // reintroduce vanished amplitudes at a small level; the fixed
            // point restores their correct (possibly tiny) magnitude
            let max = m.c.iter().fold(0.0f64, |a, &b| a.max(b));
            fp_starts.push(m.c.iter().map(|&x| x.max(1e-3 * max)).collect());
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
        for _ in 0..4 {
            fp_starts.push((0..ell).map(|_| rng.gen_range(0.1..1.0)).collect());
        }
        for s in fp_starts {
            if let Some(c) = full_support_fixed_point(beta, p, &s, 300) {
                match &found {
                    Some(prev) => {
                        if j_algebraic(&c.c, beta, p) < j_algebraic(&prev.c, beta, p) {
                            found = Some(c);
                        }
                    }
                    None => found = Some(c),
                }
            }
        }
        found
    };

    let cand = match (full, minimizer) {
        (Some(c), _) => Some(c),
        (None, m) => m,
    };
    let cand = match cand {
        Some(c) => c,
        None => return Ok(None),
    };

    // cooperative p < 2 instances must synchronize fully
    let cooperative = (0..ell).all(|i| (0..ell).all(|j| beta[i][j] >= 0.0 || i == j));
    if cooperative && p < 2.0 && !cand.fully_synchronized(1e-12) {
        return Err(Error::no_convergence(
            "cooperative p < 2 minimizer has a vanishing amplitude; this contradicts \
             the synchronized existence result",
        ));
    }
    Ok(Some(cand))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoComponentVerdict {
    Exists,
    NoPositiveSolution,
    Degenerate,
}

/// Closed-form p = 2 two-component solve: the system is linear in the
/// squared amplitudes. A positive solution exists iff the cross coupling
/// lies outside the closed gap between the diagonal entries (and above
/// −√(β₁₁β₂₂)).
pub fn sync_p2_two_component(
    beta: &[Vec<f64>],
) -> Result<(Option<SyncCandidate>, TwoComponentVerdict), Error> {
    if beta.len() != 2 || beta.iter().any(|r| r.len() != 2) {
        return Err(Error::invalid("two-component solve needs a 2x2 matrix"));
    }
    let (b11, b22, b12) = (beta[0][0], beta[1][1], beta[0][1]);
    if !(b11 > 0.0 && b22 > 0.0) {
        return Err(Error::invalid("diagonal couplings must be positive"));
    }
    let det = b11 * b22 - b12 * b12;
    if det == 0.0 {
        return Ok((None, TwoComponentVerdict::Degenerate));
    }
    let x = (b22 - b12) / det;
    let y = (b11 - b12) / det;
    if x > 0.0 && y > 0.0 {
        Ok((
            Some(SyncCandidate {
                c: vec![x.sqrt(), y.sqrt()],
            }),
            TwoComponentVerdict::Exists,
        ))
    } else {
        Ok((None, TwoComponentVerdict::NoPositiveSolution))
    }
}

/// The p = 2 interval criterion for the two-component system: a positive
/// synchronized solution exists iff
/// β₁₂ ∈ (−√(β₁₁β₂₂), min{β₁₁,β₂₂}) ∪ (max{β₁₁,β₂₂}, ∞).
pub fn p2_interval_predicts_existence(b11: f64, b22: f64, b12: f64) -> bool {
    (b12 > -(b11 * b22).sqrt() && b12 < b11.min(b22)) || b12 > b11.max(b22)
}

/// Composes amplitudes with a scalar profile into a block function and
/// reports the per-equation strong residuals of the full system.
/// Requires equal potentials (the scalar equation must be shared).
pub fn synchronize_with_pde(
    cand: &SyncCandidate,
    u: &crate::discretize::ScalarField,
    domain: &crate::discretize::DiscreteDomain,
    spec: &ProblemSpec,
) -> Result<(crate::discretize::BlockFunction, Vec<f64>), Error> {
    let ell = spec.ell();
    if cand.c.len() != ell {
        return Err(Error::invalid("amplitude count mismatch"));
    }
    let l0 = spec.lambda[0];
    if spec.lambda.iter().any(|&l| l != l0) {
        return Err(Error::invalid(
            "synchronized composition requires equal potentials",
        ));
    }
    let block = crate::discretize::BlockFunction {
        components: cand.c.iter().map(|&ci| u.scaled(ci)).collect(),
    };
    let g = crate::discretize::energy_gradient(domain, spec, &block);
    let residuals: Vec<f64> = g
        .components
        .iter()
        .map(|gi| {
            domain
                .weights
                .iter()
                .zip(&gi.values)
                .map(|(w, r)| w * r * r)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok((block, residuals))
}

/// Checks the p = 2 minimizer bound `Σ_{j≠i} β_ij c_j² ≤ 1` for every i.
pub fn lemma_sync_p2_check(cand: &SyncCandidate, beta: &[Vec<f64>]) -> ConditionReport {
    let ell = cand.c.len();
    let mut report = ConditionReport::new("p2-minimizer-bound");
    for i in 0..ell {
        let s: f64 = (0..ell)
            .filter(|&j| j != i)
            .map(|j| beta[i][j] * cand.c[j] * cand.c[j])
            .sum();
        let ok = s <= 1.0 + 1e-9;
        report.items.push(crate::model::InequalityRecord {
            label: format!("sum_(j != {}) beta c_j^2 <= 1", i + 1),
            lhs: s,
            rhs: 1.0,
            margin: 1.0 - s,
            satisfied: ok,
        });
        if !ok {
            report.status = crate::model::ConditionStatus::Fail;
        }
    }
    report
}
