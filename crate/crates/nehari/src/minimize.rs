//! Minimization of the reduced functional Ψ over the product of unit
//! block-spheres by retraction-based projected gradient descent with
//! parallel restarts, plus classification of the resulting candidate.

use crate::discretize::{
    energy, energy_gradient, BlockFunction, DiscreteDomain, ScalarField,
};
use crate::model::{validate_b1, ConditionConstants, ProblemSpec};
use crate::nehari::{h_norm, normalize_blocks, project_to_nehari, psi, psi_gradient};
use crate::Error;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the H-norm of the Ψ-gradient.
    pub gradient_tolerance: f64,
    pub backtracking_factor: f64,
    pub initial_step: f64,
    pub restart_count: usize,
    /// Scale magnitude past which the constrained maximizer is treated
    /// as escaped (the point left the admissible open set).
    pub escape_cap: f64,
    /// Relative L^{2p}-mass threshold δ for calling a component alive.
    pub classification_threshold: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 600,
            gradient_tolerance: 1e-8,
            backtracking_factor: 0.5,
            initial_step: 1.0,
            restart_count: 8,
            escape_cap: 1e8,
            classification_threshold: 1e-4,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.gradient_tolerance > 0.0)
            || !(self.classification_threshold > 0.0)
            || !(self.backtracking_factor > 0.0 && self.backtracking_factor < 1.0)
            || !(self.initial_step > 0.0)
        {
            return Err(Error::invalid("solver tolerances must be positive"));
        }
        if self.restart_count == 0 {
            return Err(Error::invalid("restart_count must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    FullyNontrivial,
    Semitrivial,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Candidate least energy (the value of 𝒥 at the output).
    pub energy: f64,
    pub component_l2p: Vec<f64>,
    /// Per-equation weighted-L² strong residuals.
    pub residuals: Vec<f64>,
    pub classification: Classification,
    pub iterations: usize,
    pub restarts_used: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Theoretical upper bound d₁·(min_h max_{i∈I_h} β_ii)^{−1/(p−1)}
    /// when constants were supplied for comparison.
    pub d1_upper_bound: Option<f64>,
    pub wall_time_s: f64,
    pub notes: Vec<String>,
}

/// The upper bound on the least energy implied by the annular
/// test-function construction, scaled by the weakest best diagonal
/// coupling across blocks.
pub fn d1_upper_bound(spec: &ProblemSpec, constants: &ConditionConstants) -> f64 {
    constants.d1 * spec.min_block_max_diag().powf(-1.0 / (spec.p - 1.0))
}

/// Per-equation weighted-L² residual of the strong form
/// `−Δu_i + λ_i u_i − Σ_j β_ij |u_j|^p |u_i|^{p−2} u_i`.
pub fn euler_lagrange_residual(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
) -> Vec<f64> {
    let g = energy_gradient(domain, spec, u);
    g.components
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
        .collect()
}

/// Strict relative L^{2p}-mass rule: fully nontrivial needs every
/// component strictly above δ·max; semitrivial needs every block to
/// keep at least one component strictly above.
pub fn classify_solution(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
    delta: f64,
) -> Classification {
    let norms: Vec<f64> = u
        .components
        .iter()
        .map(|c| c.l2p_norm(domain, spec.p))
        .collect();
    let max = norms.iter().fold(0.0f64, |a, &b| a.max(b));
    if !(max > 0.0) {
        return Classification::Indeterminate;
    }
    let live = |i: usize| norms[i] > delta * max;
    if (0..spec.ell()).all(live) {
        return Classification::FullyNontrivial;
    }
    let every_block_live = (0..spec.partition.q())
        .all(|h| spec.partition.block_range(h).any(live));
    if every_block_live {
        Classification::Semitrivial
    } else {
        Classification::Indeterminate
    }
}

/// Evenness of every term of 𝒥 makes the component-wise absolute value
/// an equal-energy point of the constraint set; used when positive
/// candidates are requested.
pub fn positive_representative(u: &BlockFunction) -> BlockFunction {
    u.abs()
}

struct RestartOutcome {
    u_on_t: BlockFunction,
    value: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

fn descend(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    config: &SolverConfig,
    start: &BlockFunction,
) -> Option<RestartOutcome> {
    let mut u = normalize_blocks(domain, spec, start).ok()?;
    let mut value = match psi(domain, spec, &u) {
        Ok(Some(v)) => v,
        _ => return None,
    };
    let mut step = config.initial_step;
    let mut gradient_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..config.max_iterations {
        iterations = k;
        let g = match psi_gradient(domain, spec, &u) {
            Ok(Some(g)) => g,
            _ => break,
        };
        gradient_norm = h_norm(domain, spec, &g);
        if gradient_norm <= config.gradient_tolerance {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = u.clone();
            for (ti, gi) in trial.components.iter_mut().zip(&g.components) {
                for (tv, gv) in ti.values.iter_mut().zip(&gi.values) {
                    *tv -= step * gv;
                }
            }
            let trial = match normalize_blocks(domain, spec, &trial) {
                Ok(t) => t,
                Err(_) => {
                    step *= config.backtracking_factor;
                    continue;
                }
            };
            // sufficient decrease, degrading to plain non-increase once the
            // demanded decrease falls below float resolution of the value
            let needed = 1e-4 * step * gradient_norm * gradient_norm;
            let target = if needed > f64::EPSILON * (1.0 + value.abs()) {
                value - needed
            } else {
                value
            };
            match psi(domain, spec, &trial) {
                Ok(Some(v)) if v <= target => {
                    u = trial;
                    value = v;
                    step = (step * 2.0).min(16.0 * config.initial_step);
                    accepted = true;
                    break;
                }
                _ => step *= config.backtracking_factor,
            }
        }
        if !accepted {
            break;
        }
    }
    Some(RestartOutcome {
        u_on_t: u,
        value,
        gradient_norm,
        iterations,
        converged,
    })
}

/// Damped Newton polish on the strong Euler–Lagrange system, used to
/// push a gradient-descent limit to discretization-level residuals. The
/// Jacobian is block tridiagonal: the stiffness couples neighboring
/// nodes within one component, the nonlinearity couples components at
/// one node. Steps are accepted only on residual decrease.
fn newton_refine(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
    max_iterations: usize,
) -> Option<BlockFunction> {
    let ell = spec.ell();
    let n = domain.n;
    let p = spec.p;
    let res_norm = |v: &BlockFunction| -> f64 {
        euler_lagrange_residual(domain, spec, v)
            .into_iter()
            .fold(0.0, f64::max)
    };
    let mut cur = u.clone();
    let mut cur_res = res_norm(&cur);
    let scale = crate::nehari::h_norm(domain, spec, &cur).max(1.0);
    let stiff_diag = domain.stiffness_diag();
    let stiff_off = domain.stiffness_off();
    let off: Vec<Vec<f64>> = (0..n - 1).map(|k| vec![stiff_off[k]; ell]).collect();
    let mut tw = vec![0.0; n];
    for _ in 0..max_iterations {
        if cur_res <= 1e-13 * scale {
            break;
        }
        // unweighted residual F = T u + λ W u − W f(u), node-major
        let mut f = vec![vec![0.0; ell]; n];
        for i in 0..ell {
            domain.apply_stiffness(&cur.components[i].values, &mut tw);
            for k in 0..n {
                let uik = cur.components[i].values[k];
                let mut nl = 0.0;
                for j in 0..ell {
                    let beta = spec.coupling.beta[i][j];
                    if beta != 0.0 {
                        nl += beta
                            * cur.components[j].values[k].abs().powf(p)
                            * crate::discretize::power_mean(uik, p);
                    }
                }
                f[k][i] = tw[k] + domain.weights[k] * (spec.lambda[i] * uik - nl);
            }
        }
        let mut diag = vec![vec![vec![0.0; ell]; ell]; n];
        for k in 0..n {
            let w = domain.weights[k];
            for i in 0..ell {
                let uik = cur.components[i].values[k];
                let pmi = crate::discretize::power_mean(uik, p);
                let mut self_term = 0.0;
                for j in 0..ell {
                    let beta = spec.coupling.beta[i][j];
                    if beta == 0.0 {
                        continue;
                    }
                    let ujp = cur.components[j].values[k].abs().powf(p);
                    // ∂/∂u_i of |u_i|^{p−2}u_i, with the zero convention
                    if uik != 0.0 {
                        self_term += beta * ujp * (p - 1.0) * uik.abs().powf(p - 2.0);
                    }
                    if j != i {
                        let pmj = crate::discretize::power_mean(
                            cur.components[j].values[k],
                            p,
                        );
                        diag[k][i][j] = -w * beta * p * pmj * pmi;
                    }
                }
                diag[k][i][i] = stiff_diag[k] + w * (spec.lambda[i] - self_term)
                    - w * spec.coupling.beta[i][i] * p * pmi * pmi;
            }
        }
        let dx = crate::linalg::solve_block_tridiagonal(&diag, &off, &f)?;
        let mut alpha = 1.0;
        let mut advanced = false;
        for _ in 0..30 {
            let mut trial = cur.clone();
            for i in 0..ell {
                for k in 0..n {
                    trial.components[i].values[k] -= alpha * dx[k][i];
                }
            }
            if trial.is_finite() {
                let r = res_norm(&trial);
                if r < cur_res {
                    cur = trial;
                    cur_res = r;
                    advanced = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    Some(cur)
}

/// A localized radial bump, zero-compatible with the Dirichlet ends.
fn bump(domain: &DiscreteDomain, center: f64, width: f64) -> ScalarField {
    ScalarField::from_fn(domain, |r| {
        let t = (r - center) / width;
        (-t * t).exp()
    })
}

fn random_start(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> BlockFunction {
    let lo = spec.domain.r_inner;
    let hi = spec.domain.outer_radius();
    let span = hi - lo;
    let mut u = BlockFunction::zeros(spec.ell(), domain.n);
    for i in 0..spec.ell() {
        let center = lo + span * rng.gen_range(0.1..0.7);
        let width = span * rng.gen_range(0.1..0.4);
        let amplitude = rng.gen_range(0.5..1.5);
        u.components[i] = bump(domain, center, width).scaled(amplitude);
    }
    u
}

fn synchronized_start(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
) -> Option<BlockFunction> {
    let cand = crate::synchronized::solve_sync(
        &spec.coupling.beta,
        spec.p,
        &crate::synchronized::SyncConfig::default(),
    )
    .ok()??;
    let lo = spec.domain.r_inner;
    let span = spec.domain.outer_radius() - lo;
    let profile = bump(domain, lo + 0.35 * span, 0.3 * span);
    Some(BlockFunction {
        components: cand
            .c
            .iter()
            .map(|&ci| profile.scaled(ci.max(1e-3)))
            .collect(),
    })
}

/// Replaces each dead component by a small copy of the heaviest live
/// component of its block (globally heaviest for a starved singleton
/// block) and restarts descent from there.
fn escape_start(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
    delta: f64,
    epsilon: f64,
) -> BlockFunction {
    let norms: Vec<f64> = u
        .components
        .iter()
        .map(|c| c.l2p_norm(domain, spec.p))
        .collect();
    let max = norms.iter().fold(0.0f64, |a, &b| a.max(b));
    let global_best = (0..spec.ell())
        .max_by(|&a, &b| norms[a].total_cmp(&norms[b]))
        .unwrap_or(0);
    let mut out = u.clone();
    for i in 0..spec.ell() {
        if norms[i] > delta * max {
            continue;
        }
        let h = spec.partition.block_of(i);
        let donor = spec
            .partition
            .block_range(h)
            .filter(|&j| norms[j] > delta * max)
            .max_by(|&a, &b| norms[a].total_cmp(&norms[b]))
            .unwrap_or(global_best);
        out.components[i] = u.components[donor].scaled(epsilon);
    }
    out
}

/// Minimizes Ψ over the product of unit block-spheres, best over
/// `restart_count` parallel restarts (deterministic reduction: minimum
/// value, ties broken by restart index), and returns the constraint-set
/// point together with its report.
pub fn minimize_psi(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    config: &SolverConfig,
    init: Option<&BlockFunction>,
) -> Result<(BlockFunction, SolveReport), Error> {
    let t0 = std::time::Instant::now();
    config.validate()?;
    let b1 = validate_b1(&spec.coupling, &spec.partition)?;
    if !b1.passed() {
        return Err(Error::invalid(
            "coupling sign pattern violates the block hypothesis",
        ));
    }

    let mut starts: Vec<BlockFunction> = Vec::new();
    if let Some(u0) = init {
        starts.push(u0.clone());
    }
    if spec.partition.q() == 1 {
        if let Some(s) = synchronized_start(domain, spec) {
            starts.push(s);
        }
    }
    let deterministic = starts.len();
    for r in 0..config.restart_count {
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
        starts.push(random_start(domain, spec, &mut rng));
    }

    let outcomes: Vec<Option<RestartOutcome>> = starts
        .par_iter()
        .map(|s| descend(domain, spec, config, s))
        .collect();
    let restarts_used = outcomes.len();
    let mut best: Option<(usize, RestartOutcome)> = None;
    for (idx, o) in outcomes.into_iter().enumerate() {
        if let Some(o) = o {
            match &best {
                Some((_, b)) if b.value <= o.value => {}
                _ => best = Some((idx, o)),
            }
        }
    }
    let (_, mut best) = best.ok_or_else(|| {
        Error::no_convergence(format!(
            "all {restarts_used} restarts escaped or stalled ({} deterministic, {} random)",
            deterministic, config.restart_count
        ))
    })?;

    let mut notes: Vec<String> = Vec::new();
    let delta = config.classification_threshold;
    if classify_solution(domain, spec, &best.u_on_t, delta) == Classification::Semitrivial {
        // energy-decreasing perturbation: feed mass into dead components
        // and re-descend; keep the result only if it strictly improves
        let injected = escape_start(domain, spec, &best.u_on_t, delta, 1e-2);
        if let Some(o) = descend(domain, spec, config, &injected) {
            if o.value < best.value - 1e-12 * (1.0 + best.value.abs()) {
                notes.push(format!(
                    "escape-informed rerun lowered the energy {:.12e} -> {:.12e}",
                    best.value, o.value
                ));
                best = o;
            } else {
                notes.push(
                    "escape-informed rerun did not improve the semitrivial candidate"
                        .to_string(),
                );
            }
        }
    }

    let mut u_star = project_to_nehari(domain, spec, &best.u_on_t)?.ok_or_else(|| {
        Error::no_convergence("final iterate escaped the admissible set")
    })?;
    let mut gradient_norm = best.gradient_norm;
    let mut converged = best.converged;
    // Newton polish on the strong system; adopted only when it lowers
    // the Ψ-gradient at the polished point's sphere representative
    if let Some(refined) = newton_refine(domain, spec, &u_star, 40) {
        if let Ok(Some(on_n)) = project_to_nehari(domain, spec, &refined) {
            if let Ok(rep) = normalize_blocks(domain, spec, &on_n) {
                if let Ok(Some(g)) = psi_gradient(domain, spec, &rep) {
                    let gn = h_norm(domain, spec, &g);
                    if gn < gradient_norm {
                        u_star = on_n;
                        gradient_norm = gn;
                        converged = gn <= config.gradient_tolerance;
                    }
                }
            }
        }
    }
    let energy_value = energy(domain, spec, &u_star);
    let norm_sq: f64 = (0..spec.partition.q())
        .map(|h| crate::discretize::block_norm_sq(domain, spec, &u_star, h))
        .sum();
    let identity = (0.5 - 0.5 / spec.p) * norm_sq;
    if (energy_value - identity).abs() > 1e-9 * (1.0 + energy_value.abs()) {
        return Err(Error::no_convergence(format!(
            "output violates the constraint-set energy identity: {energy_value} vs {identity}"
        )));
    }

    let report = SolveReport {
        energy: energy_value,
        component_l2p: u_star
            .components
            .iter()
            .map(|c| c.l2p_norm(domain, spec.p))
            .collect(),
        residuals: euler_lagrange_residual(domain, spec, &u_star),
        classification: classify_solution(domain, spec, &u_star, delta),
        iterations: best.iterations,
        restarts_used,
        gradient_norm,
        converged,
        d1_upper_bound: None,
        wall_time_s: t0.elapsed().as_secs_f64(),
        notes,
    };
    Ok((u_star, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::DomainDescriptor;
    use crate::model::{BlockPartition, CouplingMatrix};

    fn scalar_spec(n: usize) -> (ProblemSpec, DiscreteDomain) {
        let spec = ProblemSpec::new(
            2.0,
            vec![1.0],
            BlockPartition::single(1),
            CouplingMatrix::new(vec![vec![1.0]]).unwrap(),
            DomainDescriptor::ball(3, 12.0, n),
        )
        .unwrap();
        let domain = DiscreteDomain::build(&spec.domain).unwrap();
        (spec, domain)
    }

    #[test]
    fn scalar_ground_state_converges() {
        let (spec, domain) = scalar_spec(512);
        let config = SolverConfig {
            restart_count: 3,
            ..Default::default()
        };
        let (u, report) = minimize_psi(&domain, &spec, &config, None).unwrap();
        assert!(report.converged, "gradient norm {}", report.gradient_norm);
        assert_eq!(report.classification, Classification::FullyNontrivial);
        // N-membership identity asserted inside; sanity on positivity of
        // the |u|-representative
        let pos = positive_representative(&u);
        let e1 = energy(&domain, &spec, &u);
        let e2 = energy(&domain, &spec, &pos);
        assert!((e1 - e2).abs() <= 1e-12 * (1.0 + e1.abs()));
    }

    #[test]
    fn restart_stability_scalar() {
        let (spec, domain) = scalar_spec(256);
        let config = SolverConfig {
            restart_count: 4,
            ..Default::default()
        };
        let mut energies = Vec::new();
        for seed in 0..3 {
            let c = SolverConfig { seed, ..config.clone() };
            let (_, report) = minimize_psi(&domain, &spec, &c, None).unwrap();
            energies.push(report.energy);
        }
        let lo = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo <= 1e-6 * (1.0 + lo.abs()), "{energies:?}");
    }

    #[test]
    fn decoupled_blocks_energy_is_additive() {
        let domain_desc = DomainDescriptor::ball(3, 10.0, 192);
        let pair = ProblemSpec::new(
            2.0,
            vec![1.0, 2.0],
            BlockPartition::singletons(2),
            CouplingMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            domain_desc.clone(),
        )
        .unwrap();
        let domain = DiscreteDomain::build(&domain_desc).unwrap();
        let config = SolverConfig {
            restart_count: 4,
            ..Default::default()
        };
        let (_, joint) = minimize_psi(&domain, &pair, &config, None).unwrap();
        let mut sum = 0.0;
        for lambda in [1.0, 2.0] {
            let single = ProblemSpec::new(
                2.0,
                vec![lambda],
                BlockPartition::single(1),
                CouplingMatrix::new(vec![vec![1.0]]).unwrap(),
                domain_desc.clone(),
            )
            .unwrap();
            let (_, r) = minimize_psi(&domain, &single, &config, None).unwrap();
            sum += r.energy;
        }
        assert!(
            (joint.energy - sum).abs() <= 1e-8 * (1.0 + sum.abs()),
            "joint {} vs sum {}",
            joint.energy,
            sum
        );
    }

    #[test]
    fn classification_rules() {
        let (spec2, domain) = {
            let spec = ProblemSpec::new(
                2.0,
                vec![1.0, 1.0],
                BlockPartition::single(2),
                CouplingMatrix::new(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap(),
                DomainDescriptor::ball(3, 8.0, 64),
            )
            .unwrap();
            let d = DiscreteDomain::build(&spec.domain).unwrap();
            (spec, d)
        };
        let f = bump(&domain, 2.0, 1.0);
        let both = BlockFunction {
            components: vec![f.clone(), f.clone()],
        };
        assert_eq!(
            classify_solution(&domain, &spec2, &both, 1e-4),
            Classification::FullyNontrivial
        );
        let one_dead = BlockFunction {
            components: vec![f.clone(), ScalarField::zeros(domain.n)],
        };
        assert_eq!(
            classify_solution(&domain, &spec2, &one_dead, 1e-4),
            Classification::Semitrivial
        );
        // exactly at half the threshold: still semitrivial
        let tiny = BlockFunction {
            components: vec![f.clone(), {
                let n1 = f.l2p_norm(&domain, 2.0);
                f.scaled(0.5e-4 * n1 / n1)
            }],
        };
        assert_eq!(
            classify_solution(&domain, &spec2, &tiny, 1e-4),
            Classification::Semitrivial
        );
        let all_dead = BlockFunction {
            components: vec![ScalarField::zeros(domain.n), ScalarField::zeros(domain.n)],
        };
        assert_eq!(
            classify_solution(&domain, &spec2, &all_dead, 1e-4),
            Classification::Indeterminate
        );
    }

    #[test]
    fn residual_zero_for_zero_and_positive_for_random() {
        let (spec, domain) = scalar_spec(128);
        let zero = BlockFunction::zeros(1, domain.n);
        let r = euler_lagrange_residual(&domain, &spec, &zero);
        assert_eq!(r[0], 0.0);
        let random = BlockFunction {
            components: vec![bump(&domain, 3.0, 0.7)],
        };
        let r = euler_lagrange_residual(&domain, &spec, &random);
        let scale = h_norm(&domain, &spec, &random);
        assert!(r[0] > 1e-2 * scale, "residual {} scale {}", r[0], scale);
    }

    #[test]
    fn discrete_system_solved_to_machine_level_and_energy_converges_at_second_order() {
        let config = SolverConfig {
            restart_count: 2,
            ..Default::default()
        };
        let mut energies = Vec::new();
        for n in [128usize, 256, 512] {
            let (spec, domain) = scalar_spec(n);
            let (u, report) = minimize_psi(&domain, &spec, &config, None).unwrap();
            let scale = h_norm(&domain, &spec, &u);
            assert!(
                report.residuals[0] <= 1e-11 * scale,
                "n={n}: residual {} not at machine level",
                report.residuals[0]
            );
            energies.push(report.energy);
        }
        // Richardson: successive energy differences shrink by ~4
        let d1 = (energies[0] - energies[1]).abs();
        let d2 = (energies[1] - energies[2]).abs();
        let order = (d1 / d2).log2();
        assert!(
            order > 1.7 && order < 2.3,
            "energies {energies:?}, order {order}"
        );
    }

    #[test]
    fn energy_upper_bound_from_annular_construction() {
        let (spec, domain) = scalar_spec(512);
        let config = SolverConfig {
            restart_count: 2,
            ..Default::default()
        };
        let (_, report) = minimize_psi(&domain, &spec, &config, None).unwrap();
        let constants =
            crate::model::estimate_constants(&spec, &domain).unwrap();
        let bound = d1_upper_bound(&spec, &constants);
        assert!(
            report.energy <= bound,
            "energy {} exceeds bound {}",
            report.energy,
            bound
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let (spec, domain) = scalar_spec(128);
        let config = SolverConfig {
            restart_count: 3,
            seed: 7,
            ..Default::default()
        };
        let (u1, r1) = minimize_psi(&domain, &spec, &config, None).unwrap();
        let (u2, r2) = minimize_psi(&domain, &spec, &config, None).unwrap();
        assert_eq!(r1.energy.to_bits(), r2.energy.to_bits());
        for (a, b) in u1.components[0].values.iter().zip(&u2.components[0].values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
