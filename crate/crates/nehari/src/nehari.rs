//! The scaling map onto the natural constraint set and the reduced
//! functional.
//!
//! For a block function u with nonzero blocks, the energy of the scaled
//! function `s·u = (s_1 ū_1, ..., s_q ū_q)` is the polynomial
//!
//! ```text
//! J_u(s) = Σ_h a_h s_h² − Σ_h b_h s_h^{2p} + Σ_{h≠k} d_hk s_h^p s_k^p,
//! ```
//!
//! whose unique critical point in the open positive orthant (when it
//! exists) is the global maximum and places `s·u` on the constraint set.
//! The reduced functional on the product of unit block-spheres is
//! `Ψ(u) = J_u(s_u) = (1/2 − 1/2p)|s_u|²`.

use crate::discretize::{
    block_h_inner, block_norm_sq, mixed_integral, norm_sq, power_mean, BlockFunction,
    DiscreteDomain, ScalarField,
};
use crate::linalg::solve_dense;
use crate::model::ProblemSpec;
use crate::Error;
use serde::{Deserialize, Serialize};

/// Coefficients of the scale polynomial J_u: `a_h = ½‖ū_h‖²`,
/// `b_h = (1/2p) Σ_{(i,j) intra-block} β_ij ∫|u_i|^p|u_j|^p`,
/// `d_hk = −(1/2p) Σ_{(i,j) ∈ I_h×I_k} β_ij ∫|u_i|^p|u_j|^p`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NehariCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: Vec<Vec<f64>>,
}

impl NehariCoefficients {
    /// Validates the sign pattern that the block hypotheses guarantee for
    /// nonzero blocks: a_h > 0, b_h > 0, d_hk ≥ 0 symmetric with zero
    /// diagonal.
    pub fn new(a: Vec<f64>, b: Vec<f64>, d: Vec<Vec<f64>>) -> Result<Self, Error> {
        let q = a.len();
        if b.len() != q || d.len() != q || d.iter().any(|row| row.len() != q) {
            return Err(Error::invalid("coefficient dimensions disagree"));
        }
        if a.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("a_h must be positive (nonzero blocks)"));
        }
        if b.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("b_h must be positive"));
        }
        for h in 0..q {
            if d[h][h] != 0.0 {
                return Err(Error::invalid("d must have zero diagonal"));
            }
            for k in 0..q {
                if d[h][k] < 0.0 {
                    return Err(Error::invalid("d_hk must be nonnegative"));
                }
                if d[h][k] != d[k][h] {
                    return Err(Error::invalid("d must be symmetric"));
                }
            }
        }
        Ok(NehariCoefficients { a, b, d })
    }

    pub fn q(&self) -> usize {
        self.a.len()
    }

    /// J_u(s), summing the cross term over ordered pairs h ≠ k.
    pub fn j_value(&self, s: &[f64], p: f64) -> f64 {
        let q = self.q();
        let sp: Vec<f64> = s.iter().map(|&x| x.powf(p)).collect();
        let mut v = 0.0;
        for h in 0..q {
            v += self.a[h] * s[h] * s[h] - self.b[h] * sp[h] * sp[h];
            for k in 0..q {
                if k != h {
                    v += self.d[h][k] * sp[h] * sp[k];
                }
            }
        }
        v
    }

    pub fn j_gradient(&self, s: &[f64], p: f64) -> Vec<f64> {
        let q = self.q();
        let sp: Vec<f64> = s.iter().map(|&x| x.powf(p)).collect();
        (0..q)
            .map(|h| {
                let cross: f64 = (0..q).filter(|&k| k != h).map(|k| self.d[h][k] * sp[k]).sum();
                2.0 * self.a[h] * s[h] - 2.0 * p * self.b[h] * s[h].powf(2.0 * p - 1.0)
                    + 2.0 * p * s[h].powf(p - 1.0) * cross
            })
            .collect()
    }

    pub fn j_hessian(&self, s: &[f64], p: f64) -> Vec<Vec<f64>> {
        let q = self.q();
        let sp: Vec<f64> = s.iter().map(|&x| x.powf(p)).collect();
        let mut m = vec![vec![0.0; q]; q];
        for h in 0..q {
            let cross: f64 = (0..q).filter(|&k| k != h).map(|k| self.d[h][k] * sp[k]).sum();
            m[h][h] = 2.0 * self.a[h]
                - 2.0 * p * (2.0 * p - 1.0) * self.b[h] * s[h].powf(2.0 * p - 2.0)
                + 2.0 * p * (p - 1.0) * s[h].powf(p - 2.0) * cross;
            for k in 0..q {
                if k != h {
                    m[h][k] =
                        2.0 * p * p * self.d[h][k] * s[h].powf(p - 1.0) * s[k].powf(p - 1.0);
                }
            }
        }
        m
    }

    /// Decoupled stationary scales, ignoring the cross terms.
    pub fn decoupled_scales(&self, p: f64) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(&a, &b)| (a / (p * b)).powf(1.0 / (2.0 * p - 2.0)))
            .collect()
    }
}

/// Positive block scales s_u.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NehariScales {
    pub s: Vec<f64>,
}

impl NehariScales {
    pub fn norm(&self) -> f64 {
        self.s.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Outcome of the scale solve.
#[derive(Debug, Clone)]
pub enum ScaleResult {
    Found(NehariScales),
    /// The maximizer escapes to infinity: the input lies outside the open
    /// set where the scaling map is defined.
    Escaped,
    /// Iteration budget exhausted without an escape certificate.
    Indeterminate,
}

impl ScaleResult {
    pub fn found(self) -> Option<NehariScales> {
        match self {
            ScaleResult::Found(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSolveConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Escape declared when |s| exceeds this with the objective still
    /// increasing along the current ray.
    pub escape_cap: f64,
}

impl Default for ScaleSolveConfig {
    fn default() -> Self {
        ScaleSolveConfig {
            max_iterations: 400,
            tolerance: 1e-12,
            escape_cap: 1e8,
        }
    }
}

/// Computes the scale-polynomial coefficients of a block function.
/// Rejects inputs with a vanishing block.
pub fn coefficients(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
) -> Result<NehariCoefficients, Error> {
    let q = spec.partition.q();
    let p = spec.p;
    let mut a = vec![0.0; q];
    for (h, ah) in a.iter_mut().enumerate() {
        *ah = 0.5 * block_norm_sq(domain, spec, u, h);
        if !(*ah > 0.0) {
            return Err(Error::invalid(format!(
                "block {} of the input vanishes; scaling map undefined",
                h + 1
            )));
        }
    }
    let mut b = vec![0.0; q];
    let mut d = vec![vec![0.0; q]; q];
    let ell = spec.ell();
    // one integral per unordered pair keeps d bitwise symmetric
    for i in 0..ell {
        for j in i..ell {
            let beta = spec.coupling.beta[i][j];
            if beta == 0.0 {
                continue;
            }
            let m = mixed_integral(domain, &u.components[i], &u.components[j], p);
            let contrib = beta * m / (2.0 * p);
            let (hi, hj) = (spec.partition.block_of(i), spec.partition.block_of(j));
            if hi == hj {
                b[hi] += if i == j { contrib } else { 2.0 * contrib };
            } else {
                d[hi][hj] -= contrib;
                d[hj][hi] -= contrib;
            }
        }
    }
    NehariCoefficients::new(a, b, d)
}

/// Unique positive root of `2a − 2p b s^{2p−2} + p c s^{p−2} = 0`
/// (stationarity of `a s² − b s^{2p} + c s^p`): the left side is
/// strictly decreasing in s for 1 < p ≤ 2, so bisection from an expanded
/// bracket cannot fail.
fn coordinate_max(a: f64, b: f64, c: f64, p: f64, hint: f64) -> f64 {
    let psi = |s: f64| 2.0 * a - 2.0 * p * b * s.powf(2.0 * p - 2.0) + p * c * s.powf(p - 2.0);
    let mut hi = hint.max(1e-300);
    for _ in 0..200 {
        if psi(hi) < 0.0 {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while psi(lo) < 0.0 {
        lo /= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if psi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Finds the critical point of J_u in the open positive orthant from a
/// caller-chosen start: monotone coordinate-wise exact maximization
/// (each scalar subproblem has a unique positive maximizer), finished
/// with a Newton polish. Escape is certified when the iterates pass the
/// cap with the objective still increasing along the current ray.
pub fn solve_scales_from(
    coeffs: &NehariCoefficients,
    p: f64,
    start: &[f64],
    config: &ScaleSolveConfig,
) -> ScaleResult {
    let q = coeffs.q();
    let scale_ref: f64 = coeffs.a.iter().fold(0.0f64, |m, &x| m.max(x)).max(1.0);
    let gtol = config.tolerance * scale_ref;
    let mut s: Vec<f64> = start.iter().map(|&x| x.max(1e-12)).collect();

    let escape_certified = |s: &[f64]| -> bool {
        let g = coeffs.j_gradient(s, p);
        g.iter().zip(s).map(|(gi, si)| gi * si).sum::<f64>() > 0.0
    };

    let mut swept = false;
    for _ in 0..config.max_iterations {
        let mut delta = 0.0f64;
        for h in 0..q {
            let c: f64 = (0..q)
                .filter(|&k| k != h)
                .map(|k| coeffs.d[h][k] * s[k].powf(p))
                .sum();
            let next = coordinate_max(coeffs.a[h], coeffs.b[h], c, p, s[h]);
            delta = delta.max((next - s[h]).abs() / next.max(1.0));
            s[h] = next;
        }
        if s.iter().map(|x| x * x).sum::<f64>().sqrt() > config.escape_cap {
            return if escape_certified(&s) {
                ScaleResult::Escaped
            } else {
                ScaleResult::Indeterminate
            };
        }
        if delta <= 1e-14 {
            swept = true;
            break;
        }
    }
    if !swept {
        // sweeps did not settle: either slow escape or a genuinely hard
        // instance; probe the ray before declaring anything
        let g = coeffs.j_gradient(&s, p);
        if g.iter().map(|x| x * x).sum::<f64>().sqrt() > gtol {
            return ScaleResult::Indeterminate;
        }
    }
    // Newton polish on grad J = 0
    for _ in 0..40 {
        let g = coeffs.j_gradient(&s, p);
        if g.iter().map(|x| x * x).sum::<f64>().sqrt() <= gtol {
            break;
        }
        let hess = coeffs.j_hessian(&s, p);
        match solve_dense(&hess, &g) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => {
                for h in 0..q {
                    s[h] = (s[h] - dx[h]).max(1e-12);
                }
            }
            _ => break,
        }
    }
    let g = coeffs.j_gradient(&s, p);
    if g.iter().map(|x| x * x).sum::<f64>().sqrt() <= gtol
        && s.iter().all(|&x| x > 1e-12 && x.is_finite())
    {
        ScaleResult::Found(NehariScales { s })
    } else {
        ScaleResult::Indeterminate
    }
}

/// `solve_scales_from` starting at the decoupled closed forms.
pub fn solve_scales(coeffs: &NehariCoefficients, p: f64, config: &ScaleSolveConfig) -> ScaleResult {
    let start = coeffs.decoupled_scales(p);
    solve_scales_from(coeffs, p, &start, config)
}

/// Normalizes each block of `u` to the unit sphere.
pub fn normalize_blocks(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
) -> Result<BlockFunction, Error> {
    let q = spec.partition.q();
    let mut out = u.clone();
    for h in 0..q {
        let nrm = block_norm_sq(domain, spec, u, h).sqrt();
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(Error::invalid(format!("block {} has zero norm", h + 1)));
        }
        for i in spec.partition.block_range(h) {
            out.components[i].scale(1.0 / nrm);
        }
    }
    Ok(out)
}

/// Residuals of the constraint-set membership relations,
/// `∂_{ū_h} 𝒥(u)[ū_h]` for each block, relative to the block norm scale.
pub fn membership_residuals(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
) -> Result<Vec<f64>, Error> {
    let c = coefficients(domain, spec, u)?;
    let p = spec.p;
    let q = c.q();
    Ok((0..q)
        .map(|h| {
            let cross: f64 = (0..q).filter(|&k| k != h).map(|k| c.d[h][k]).sum();
            let raw = 2.0 * c.a[h] - 2.0 * p * c.b[h] + 2.0 * p * cross;
            raw / (2.0 * c.a[h])
        })
        .collect())
}

/// Scales `u` onto the constraint set: normalizes blocks, solves for the
/// scales, returns the scaled function. `None` when the maximizer
/// escapes (input outside the admissible open set).
pub fn project_to_nehari(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u: &BlockFunction,
) -> Result<Option<BlockFunction>, Error> {
    let v = normalize_blocks(domain, spec, u)?;
    let c = coefficients(domain, spec, &v)?;
    match solve_scales(&c, spec.p, &ScaleSolveConfig::default()) {
        ScaleResult::Found(scales) => {
            let out = v.scale_blocks(spec, &scales.s);
            let res = membership_residuals(domain, spec, &out)?;
            if res.iter().any(|r| r.abs() > 1e-9) {
                return Err(Error::no_convergence(format!(
                    "constraint-set membership residual {:.3e} above 1e-9",
                    res.iter().fold(0.0f64, |m, r| m.max(r.abs()))
                )));
            }
            Ok(Some(out))
        }
        ScaleResult::Escaped => Ok(None),
        ScaleResult::Indeterminate => Err(Error::no_convergence(
            "scale solve exhausted its budget without an escape certificate",
        )),
    }
}

/// The reduced functional at a point of the product of unit
/// block-spheres. Cross-checks its two expressions
/// (`𝒥(s_u u)` and `(1/2 − 1/2p)|s_u|²`) and returns the latter.
/// `None` mirrors `project_to_nehari` (escape).
pub fn psi(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u_on_t: &BlockFunction,
) -> Result<Option<f64>, Error> {
    let c = coefficients(domain, spec, u_on_t)?;
    match solve_scales(&c, spec.p, &ScaleSolveConfig::default()) {
        ScaleResult::Found(scales) => {
            let via_scales = (0.5 - 0.5 / spec.p) * scales.norm().powi(2);
            let scaled = u_on_t.scale_blocks(spec, &scales.s);
            let via_energy = crate::discretize::energy(domain, spec, &scaled);
            if (via_scales - via_energy).abs() > 1e-10 * (1.0 + via_energy.abs()) {
                return Err(Error::no_convergence(format!(
                    "reduced-functional identity violated: {via_scales} vs {via_energy}"
                )));
            }
            Ok(Some(via_scales))
        }
        ScaleResult::Escaped => Ok(None),
        ScaleResult::Indeterminate => Err(Error::no_convergence(
            "scale solve indeterminate in psi",
        )),
    }
}

/// Gradient of the reduced functional, returned as the metric (Riesz)
/// representative in the product H-inner product, tangent to the product
/// of unit block-spheres: `⟨g, v⟩_H = 𝒥'(s_u u)[s_u v]` for tangent v.
pub fn psi_gradient(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    u_on_t: &BlockFunction,
) -> Result<Option<BlockFunction>, Error> {
    let c = coefficients(domain, spec, u_on_t)?;
    let scales = match solve_scales(&c, spec.p, &ScaleSolveConfig::default()) {
        ScaleResult::Found(s) => s,
        ScaleResult::Escaped => return Ok(None),
        ScaleResult::Indeterminate => {
            return Err(Error::no_convergence("scale solve indeterminate in psi_gradient"))
        }
    };
    let w = u_on_t.scale_blocks(spec, &scales.s);
    let p = spec.p;
    let ell = spec.ell();
    let n = domain.n;
    // weak gradient of the energy at w, scaled block-wise by s_h, then
    // pulled to the H-metric by one shifted solve per component
    let mut g = BlockFunction::zeros(ell, n);
    let mut tw = vec![0.0; n];
    for i in 0..ell {
        let s_h = scales.s[spec.partition.block_of(i)];
        domain.apply_stiffness(&w.components[i].values, &mut tw);
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            let mut f = 0.0;
            for j in 0..ell {
                let beta = spec.coupling.beta[i][j];
                if beta != 0.0 {
                    f += beta
                        * w.components[j].values[k].abs().powf(p)
                        * power_mean(w.components[i].values[k], p);
                }
            }
            rhs[k] = s_h
                * (tw[k] + spec.lambda[i] * domain.weights[k] * w.components[i].values[k]
                    - domain.weights[k] * f);
        }
        g.components[i] = ScalarField {
            values: domain.solve_shifted(spec.lambda[i], &rhs),
        };
    }
    // block tangent projection: remove the radial part along ū_h
    for h in 0..spec.partition.q() {
        let radial = block_h_inner(domain, spec, &g, u_on_t, h);
        let unit = block_norm_sq(domain, spec, u_on_t, h);
        let coef = radial / unit;
        for i in spec.partition.block_range(h) {
            for k in 0..n {
                g.components[i].values[k] -= coef * u_on_t.components[i].values[k];
            }
        }
    }
    Ok(Some(g))
}

/// Product-H norm of a block function (used for gradient magnitudes).
pub fn h_norm(domain: &DiscreteDomain, spec: &ProblemSpec, v: &BlockFunction) -> f64 {
    v.components
        .iter()
        .enumerate()
        .map(|(i, vi)| norm_sq(domain, vi, spec.lambda[i]))
        .sum::<f64>()
        .sqrt()
}
