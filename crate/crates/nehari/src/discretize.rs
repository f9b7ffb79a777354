//! Radial / 1D finite-difference discretization of the function space.
//!
//! The radial sector of every supported domain reduces to a weighted
//! one-dimensional problem on `(r_inner, r_outer)` with measure
//! `r^{N-1} dr`. Nodes sit at cell centers `r_k = r_inner + (k + 1/2) h`;
//! faces sit at `r_inner + j h`. Quadrature weights are the exact cell
//! measures `(f_{k+1}^N - f_k^N) / N`, and the stiffness matrix is the
//! conservative flux form of `-(r^{N-1} u')' / r^{N-1}`, which is
//! symmetric positive semidefinite with respect to the weighted inner
//! product. Dirichlet data enters through half-cell boundary terms; the
//! `r = 0` face of ball-type domains carries zero flux, which encodes the
//! regularity condition `u'(0) = 0`.
//!
//! The unit-sphere surface area factor is omitted from all integrals; it
//! rescales the energy by a positive constant and cancels everywhere it
//! could matter.

use crate::linalg::solve_tridiagonal;
use crate::model::ProblemSpec;
use crate::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Interval,
    Ball,
    Annulus,
    RadialTruncatedSpace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub kind: DomainKind,
    /// Ambient dimension N. The radial kinds are meant for N >= 3;
    /// N = 1 is allowed for desk tests on intervals.
    pub dimension: usize,
    #[serde(default)]
    pub r_inner: f64,
    pub r_outer: f64,
    pub grid_points: usize,
    /// Only meaningful for `radial-truncated-space`: the Dirichlet
    /// truncation radius replacing `r_outer`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
}

impl DomainDescriptor {
    pub fn interval(a: f64, b: f64, grid_points: usize) -> Self {
        DomainDescriptor {
            kind: DomainKind::Interval,
            dimension: 1,
            r_inner: a,
            r_outer: b,
            grid_points,
            truncation_radius: None,
        }
    }

    pub fn ball(dimension: usize, radius: f64, grid_points: usize) -> Self {
        DomainDescriptor {
            kind: DomainKind::Ball,
            dimension,
            r_inner: 0.0,
            r_outer: radius,
            grid_points,
            truncation_radius: None,
        }
    }

    pub fn annulus(dimension: usize, r_inner: f64, r_outer: f64, grid_points: usize) -> Self {
        DomainDescriptor {
            kind: DomainKind::Annulus,
            dimension,
            r_inner,
            r_outer,
            grid_points,
            truncation_radius: None,
        }
    }

    pub fn truncated_space(dimension: usize, truncation_radius: f64, grid_points: usize) -> Self {
        DomainDescriptor {
            kind: DomainKind::RadialTruncatedSpace,
            dimension,
            r_inner: 0.0,
            r_outer: truncation_radius,
            grid_points,
            truncation_radius: Some(truncation_radius),
        }
    }

    /// Effective outer radius (the truncation radius for truncated space).
    pub fn outer_radius(&self) -> f64 {
        match self.kind {
            DomainKind::RadialTruncatedSpace => self.truncation_radius.unwrap_or(self.r_outer),
            _ => self.r_outer,
        }
    }

    /// Whether the inner end carries a Dirichlet condition. Ball-type
    /// domains instead have the zero-flux regularity condition at r = 0.
    pub fn inner_dirichlet(&self) -> bool {
        matches!(self.kind, DomainKind::Interval | DomainKind::Annulus)
    }

    /// Minimal orbit dimension of the symmetry group acting on the domain:
    /// N - 1 for the O(N)-radial kinds, 0 for a plain interval.
    pub fn orbit_dimension(&self) -> usize {
        match self.kind {
            DomainKind::Interval => 0,
            _ => self.dimension.saturating_sub(1),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.dimension < 1 {
            return Err(Error::invalid("domain dimension must be >= 1"));
        }
        if self.grid_points < 16 {
            return Err(Error::invalid("grid_points must be >= 16"));
        }
        let outer = self.outer_radius();
        if !(outer.is_finite() && outer > self.r_inner) {
            return Err(Error::invalid("r_outer must exceed r_inner"));
        }
        match self.kind {
            DomainKind::Ball | DomainKind::RadialTruncatedSpace => {
                if self.r_inner != 0.0 {
                    return Err(Error::invalid("ball-type domains must have r_inner = 0"));
                }
            }
            DomainKind::Annulus => {
                if self.r_inner <= 0.0 {
                    return Err(Error::invalid("annulus needs r_inner > 0"));
                }
            }
            DomainKind::Interval => {
                if self.r_inner < 0.0 {
                    return Err(Error::invalid("interval needs r_inner >= 0"));
                }
            }
        }
        if self.kind == DomainKind::RadialTruncatedSpace && self.truncation_radius.is_none() {
            return Err(Error::invalid("radial-truncated-space needs truncation_radius"));
        }
        Ok(())
    }
}

/// Assembled discrete carrier of the radial function space.
#[derive(Debug, Clone)]
pub struct DiscreteDomain {
    pub descriptor: DomainDescriptor,
    /// Number of interior nodes.
    pub n: usize,
    /// Uniform cell width.
    pub h: f64,
    /// Node radii (cell centers).
    pub nodes: Vec<f64>,
    /// Exact cell measures of r^{N-1} dr; strictly positive.
    pub weights: Vec<f64>,
    /// Face coefficients g_j = r_j^{N-1}, length n + 1.
    pub face_coeff: Vec<f64>,
    stiff_diag: Vec<f64>,
    stiff_off: Vec<f64>,
}

impl DiscreteDomain {
    pub fn build(descriptor: &DomainDescriptor) -> Result<Self, Error> {
        descriptor.validate()?;
        let n = descriptor.grid_points;
        let a = descriptor.r_inner;
        let b = descriptor.outer_radius();
        let h = (b - a) / n as f64;
        let dim = descriptor.dimension as i32;
        let nodes: Vec<f64> = (0..n).map(|k| a + (k as f64 + 0.5) * h).collect();
        let faces: Vec<f64> = (0..=n).map(|j| a + j as f64 * h).collect();
        let face_coeff: Vec<f64> = faces.iter().map(|&r| r.powi(dim - 1)).collect();
        let weights: Vec<f64> = (0..n)
            .map(|k| (faces[k + 1].powi(dim) - faces[k].powi(dim)) / dim as f64)
            .collect();
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("nonpositive quadrature weight"));
        }
        let mut stiff_diag = vec![0.0; n];
        let stiff_off: Vec<f64> = (1..n).map(|j| -face_coeff[j] / h).collect();
        for k in 0..n {
            if k > 0 {
                stiff_diag[k] += face_coeff[k] / h;
            } else if descriptor.inner_dirichlet() {
                // boundary value at distance h/2
                stiff_diag[k] += 2.0 * face_coeff[0] / h;
            }
            if k < n - 1 {
                stiff_diag[k] += face_coeff[k + 1] / h;
            } else {
                stiff_diag[k] += 2.0 * face_coeff[n] / h;
            }
        }
        Ok(DiscreteDomain {
            descriptor: descriptor.clone(),
            n,
            h,
            nodes,
            weights,
            face_coeff,
            stiff_diag,
            stiff_off,
        })
    }

    /// Diagonal of the stiffness matrix T.
    pub fn stiffness_diag(&self) -> &[f64] {
        &self.stiff_diag
    }

    /// Off-diagonal of the (symmetric tridiagonal) stiffness matrix T.
    pub fn stiffness_off(&self) -> &[f64] {
        &self.stiff_off
    }

    /// Total radial measure, exact by construction.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted quadrature of nodal values.
    pub fn integrate(&self, vals: &[f64]) -> f64 {
        self.weights.iter().zip(vals).map(|(w, v)| w * v).sum()
    }

    /// Applies the stiffness matrix T (the discrete Dirichlet form), so
    /// that `sum_k (T u)_k v_k` approximates `int u' v' r^{N-1} dr`.
    pub fn apply_stiffness(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let mut s = self.stiff_diag[k] * u[k];
            if k > 0 {
                s += self.stiff_off[k - 1] * u[k - 1];
            }
            if k < n - 1 {
                s += self.stiff_off[k] * u[k + 1];
            }
            out[k] = s;
        }
    }

    /// The discrete Dirichlet form `int u' v' r^{N-1} dr`.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut tu = vec![0.0; self.n];
        self.apply_stiffness(u, &mut tu);
        tu.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Solves `(T + lambda W) x = rhs` where `W = diag(weights)`.
    /// `rhs` is given in the weak sense (already paired against test
    /// functions, i.e. it is the vector of linear-functional values).
    pub fn solve_shifted(&self, lambda: f64, rhs: &[f64]) -> Vec<f64> {
        let diag: Vec<f64> = self
            .stiff_diag
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| d + lambda * w)
            .collect();
        solve_tridiagonal(&self.stiff_off, &diag, &self.stiff_off, rhs)
    }

    /// Solves the restriction of `(T + lambda W) x = rhs` to the node
    /// range `lo..hi`, with zero values outside (the principal submatrix,
    /// i.e. the subspace of fields supported on those nodes).
    pub fn solve_shifted_sub(&self, lambda: f64, lo: usize, hi: usize, rhs: &[f64]) -> Vec<f64> {
        assert!(lo < hi && hi <= self.n && rhs.len() == hi - lo);
        let diag: Vec<f64> = (lo..hi)
            .map(|k| self.stiff_diag[k] + lambda * self.weights[k])
            .collect();
        let off: Vec<f64> = (lo..hi - 1).map(|k| self.stiff_off[k]).collect();
        solve_tridiagonal(&off, &diag, &off, rhs)
    }

    /// Smallest generalized eigenvalue of `T x = lambda W x`, i.e. the
    /// first Dirichlet eigenvalue of the discrete radial Laplacian.
    pub fn smallest_eigenvalue(&self) -> Result<f64, Error> {
        smallest_eigenvalue(self)
    }
}

/// Nodal values of a scalar function on a `DiscreteDomain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        ScalarField { values: vec![0.0; n] }
    }

    pub fn from_fn(domain: &DiscreteDomain, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            values: domain.nodes.iter().map(|&r| f(r)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scale(&mut self, t: f64) {
        for v in &mut self.values {
            *v *= t;
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.scale(t);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Weighted L^{2p} norm |v|_{2p}.
    pub fn l2p_norm(&self, domain: &DiscreteDomain, p: f64) -> f64 {
        let s: f64 = domain
            .weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.abs().powf(2.0 * p))
            .sum();
        s.powf(1.0 / (2.0 * p))
    }
}

/// The discrete block function u = (u_1, ..., u_ell) on a shared domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFunction {
    pub components: Vec<ScalarField>,
}

impl BlockFunction {
    pub fn zeros(ell: usize, n: usize) -> Self {
        BlockFunction {
            components: (0..ell).map(|_| ScalarField::zeros(n)).collect(),
        }
    }

    pub fn ell(&self) -> usize {
        self.components.len()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    /// Scales block h by t_h (block structure from `spec`).
    pub fn scale_blocks(&self, spec: &ProblemSpec, t: &[f64]) -> BlockFunction {
        let mut out = self.clone();
        for h in 0..spec.partition.q() {
            for i in spec.partition.block_range(h) {
                out.components[i].scale(t[h]);
            }
        }
        out
    }

    /// Componentwise absolute value; leaves the energy unchanged.
    pub fn abs(&self) -> BlockFunction {
        BlockFunction {
            components: self
                .components
                .iter()
                .map(|c| ScalarField {
                    values: c.values.iter().map(|v| v.abs()).collect(),
                })
                .collect(),
        }
    }
}

/// `|x|^{p-2} x`, extended by 0 at x = 0 (needed for p < 2).
pub fn power_mean(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(p - 2.0) * x
    }
}

/// The squared norm `int (|v'|^2 + lambda v^2) r^{N-1} dr`.
pub fn norm_sq(domain: &DiscreteDomain, v: &ScalarField, lambda: f64) -> f64 {
    let grad = domain.dirichlet_form(&v.values, &v.values);
    let mass: f64 = domain
        .weights
        .iter()
        .zip(&v.values)
        .map(|(w, x)| w * x * x)
        .sum();
    grad + lambda * mass
}

/// The H-inner product `int (u'v' + lambda u v) r^{N-1} dr`.
pub fn h_inner(domain: &DiscreteDomain, u: &ScalarField, v: &ScalarField, lambda: f64) -> f64 {
    let grad = domain.dirichlet_form(&u.values, &v.values);
    let mass: f64 = domain
        .weights
        .iter()
        .zip(u.values.iter().zip(&v.values))
        .map(|(w, (a, b))| w * a * b)
        .sum();
    grad + lambda * mass
}

/// `int |u|^p |v|^p r^{N-1} dr`.
pub fn mixed_integral(domain: &DiscreteDomain, u: &ScalarField, v: &ScalarField, p: f64) -> f64 {
    domain
        .weights
        .iter()
        .zip(u.values.iter().zip(&v.values))
        .map(|(w, (a, b))| w * a.abs().powf(p) * b.abs().powf(p))
        .sum()
}

/// Squared block norm `sum_{i in I_h} ||u_i||_i^2`.
pub fn block_norm_sq(domain: &DiscreteDomain, spec: &ProblemSpec, u: &BlockFunction, h: usize) -> f64 {
    spec.partition
        .block_range(h)
        .map(|i| norm_sq(domain, &u.components[i], spec.lambda[i]))
        .sum()
}

/// Block H-inner product.
pub fn block_h_inner(
    domain: &DiscreteDomain,
    spec: &ProblemSpec,
    a: &BlockFunction,
    b: &BlockFunction,
    h: usize,
) -> f64 {
    spec.partition
        .block_range(h)
        .map(|i| h_inner(domain, &a.components[i], &b.components[i], spec.lambda[i]))
        .sum()
}

/// The energy functional J(u) = 1/2 sum ||u_i||_i^2
/// - 1/(2p) sum beta_ij int |u_i|^p |u_j|^p.
pub fn energy(domain: &DiscreteDomain, spec: &ProblemSpec, u: &BlockFunction) -> f64 {
    let ell = spec.ell();
    let mut quad = 0.0;
    for i in 0..ell {
        quad += norm_sq(domain, &u.components[i], spec.lambda[i]);
    }
    let mut inter = 0.0;
    for i in 0..ell {
        for j in 0..ell {
            let beta = spec.coupling.beta[i][j];
            if beta != 0.0 {
                inter += beta * mixed_integral(domain, &u.components[i], &u.components[j], spec.p);
            }
        }
    }
    0.5 * quad - inter / (2.0 * spec.p)
}

/// Nodal strong-form residual field of the Euler-Lagrange system:
/// component i is `(-Delta + lambda_i) u_i - sum_j beta_ij |u_j|^p |u_i|^{p-2} u_i`.
///
/// The weak pairing against a direction field is `weak_pairing(...)`, and
/// directional derivatives of `energy` match it.
pub fn energy_gradient(domain: &DiscreteDomain, spec: &ProblemSpec, u: &BlockFunction) -> BlockFunction {
    let ell = spec.ell();
    let n = domain.n;
    let p = spec.p;
    let mut out = BlockFunction::zeros(ell, n);
    let mut tu = vec![0.0; n];
    for i in 0..ell {
        domain.apply_stiffness(&u.components[i].values, &mut tu);
        let g = &mut out.components[i].values;
        for k in 0..n {
            g[k] = tu[k] / domain.weights[k] + spec.lambda[i] * u.components[i].values[k];
        }
        for j in 0..ell {
            let beta = spec.coupling.beta[i][j];
            if beta == 0.0 {
                continue;
            }
            for k in 0..n {
                let uj = u.components[j].values[k].abs().powf(p);
                g[k] -= beta * uj * power_mean(u.components[i].values[k], p);
            }
        }
    }
    out
}

/// Quadrature-weighted pairing `sum_i int g_i v_i r^{N-1} dr`; with `g`
/// from `energy_gradient` this equals the directional derivative of the
/// energy along `v`.
pub fn weak_pairing(domain: &DiscreteDomain, g: &BlockFunction, v: &BlockFunction) -> f64 {
    g.components
        .iter()
        .zip(&v.components)
        .map(|(gi, vi)| {
            domain
                .weights
                .iter()
                .zip(gi.values.iter().zip(&vi.values))
                .map(|(w, (a, b))| w * a * b)
                .sum::<f64>()
        })
        .sum()
}

/// Smallest discrete Dirichlet eigenvalue of -Delta on the domain, by
/// inverse power iteration on the tridiagonal stiffness matrix.
pub fn smallest_eigenvalue(domain: &DiscreteDomain) -> Result<f64, Error> {
    let n = domain.n;
    let mut x: Vec<f64> = domain
        .nodes
        .iter()
        .map(|&r| {
            let a = domain.descriptor.r_inner;
            let b = domain.descriptor.outer_radius();
            ((r - a) / (b - a) * std::f64::consts::PI).sin().max(1e-3)
        })
        .collect();
    let mut lambda_prev = f64::INFINITY;
    for _ in 0..10_000 {
        let rhs: Vec<f64> = domain.weights.iter().zip(&x).map(|(w, v)| w * v).collect();
        let mut y = domain.solve_shifted(0.0, &rhs);
        let norm: f64 = domain
            .weights
            .iter()
            .zip(&y)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("eigenvalue iteration degenerated"));
        }
        for v in &mut y {
            *v /= norm;
        }
        let mut ty = vec![0.0; n];
        domain.apply_stiffness(&y, &mut ty);
        let num: f64 = ty.iter().zip(&y).map(|(a, b)| a * b).sum();
        let den: f64 = domain.weights.iter().zip(&y).map(|(w, v)| w * v * v).sum();
        let lambda = num / den;
        x = y;
        if (lambda - lambda_prev).abs() <= 1e-13 * (1.0 + lambda.abs()) {
            return Ok(lambda);
        }
        lambda_prev = lambda;
    }
    Err(Error::invalid("eigenvalue iteration did not converge"))
}

/// Serializes fields as CSV with header `r,u_1,...,u_ell` at full precision.
pub fn fields_to_csv(domain: &DiscreteDomain, u: &BlockFunction) -> String {
    let ell = u.ell();
    let mut out = String::from("r");
    for i in 1..=ell {
        out.push_str(&format!(",u_{i}"));
    }
    out.push('\n');
    for k in 0..domain.n {
        out.push_str(&format!("{:.16e}", domain.nodes[k]));
        for i in 0..ell {
            out.push_str(&format!(",{:.16e}", u.components[i].values[k]));
        }
        out.push('\n');
    }
    out
}

/// Parses the CSV emitted by `fields_to_csv`; returns (radii, fields).
pub fn fields_from_csv(text: &str) -> Result<(Vec<f64>, BlockFunction), Error> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::invalid("empty CSV"))?;
    let ell = header.split(',').count().saturating_sub(1);
    if ell == 0 {
        return Err(Error::invalid("CSV header must be r,u_1,...,u_ell"));
    }
    let mut radii = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ell];
    for line in lines {
        let mut parts = line.split(',');
        let r: f64 = parts
            .next()
            .ok_or_else(|| Error::invalid("short CSV row"))?
            .trim()
            .parse()
            .map_err(|_| Error::invalid("bad CSV number"))?;
        radii.push(r);
        for c in cols.iter_mut() {
            let v: f64 = parts
                .next()
                .ok_or_else(|| Error::invalid("short CSV row"))?
                .trim()
                .parse()
                .map_err(|_| Error::invalid("bad CSV number"))?;
            c.push(v);
        }
    }
    Ok((
        radii,
        BlockFunction {
            components: cols.into_iter().map(|values| ScalarField { values }).collect(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockPartition, CouplingMatrix, ProblemSpec};
    use std::f64::consts::PI;

    fn interval_domain(n: usize) -> DiscreteDomain {
        DiscreteDomain::build(&DomainDescriptor::interval(0.0, 1.0, n)).unwrap()
    }

    fn scalar_spec(domain: DomainDescriptor, lambda: f64, p: f64, beta: f64) -> ProblemSpec {
        ProblemSpec::new(
            p,
            vec![lambda],
            BlockPartition::new(1, vec![0, 1]).unwrap(),
            CouplingMatrix::new(vec![vec![beta]]).unwrap(),
            domain,
        )
        .unwrap()
    }

    #[test]
    fn weights_positive_and_measure_exact() {
        for desc in [
            DomainDescriptor::interval(0.0, 1.0, 64),
            DomainDescriptor::ball(3, 1.0, 64),
            DomainDescriptor::annulus(3, 1.0, 2.0, 64),
        ] {
            let dom = DiscreteDomain::build(&desc).unwrap();
            assert!(dom.weights.iter().all(|&w| w > 0.0));
            let dim = desc.dimension as i32;
            let exact = (desc.outer_radius().powi(dim) - desc.r_inner.powi(dim)) / dim as f64;
            assert!((dom.measure() - exact).abs() < 1e-13 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn norm_sq_zero_field() {
        let dom = interval_domain(64);
        assert_eq!(norm_sq(&dom, &ScalarField::zeros(64), 1.0), 0.0);
    }

    #[test]
    fn norm_sq_sine() {
        // int_0^1 pi^2 cos^2(pi x) dx = pi^2 / 2, O(h^2)
        let dom = interval_domain(512);
        let v = ScalarField::from_fn(&dom, |x| (PI * x).sin());
        let got = norm_sq(&dom, &v, 0.0);
        let want = PI * PI / 2.0;
        assert!((got - want).abs() < 5.0 * want / (512.0 * 512.0), "{got} vs {want}");
    }

    #[test]
    fn norm_sq_lambda_shift_is_mass() {
        let dom = interval_domain(64);
        let v = ScalarField::from_fn(&dom, |x| x * (1.0 - x));
        let with = norm_sq(&dom, &v, 1.0);
        let without = norm_sq(&dom, &v, 0.0);
        let mass: f64 = dom
            .weights
            .iter()
            .zip(&v.values)
            .map(|(w, x)| w * x * x)
            .sum();
        assert!((with - without - mass).abs() < 1e-14);
    }

    #[test]
    fn mixed_integral_basics() {
        let dom = interval_domain(64);
        let mut u = ScalarField::zeros(64);
        let mut v = ScalarField::zeros(64);
        u.values[5] = 1.0;
        v.values[40] = 1.0;
        assert_eq!(mixed_integral(&dom, &u, &v, 1.5), 0.0);

        let w = ScalarField::from_fn(&dom, |x| x);
        let got = mixed_integral(&dom, &w, &w, 1.0);
        let mass: f64 = dom
            .weights
            .iter()
            .zip(&w.values)
            .map(|(q, x)| q * x * x)
            .sum();
        assert_eq!(got, mass);

        let one = ScalarField::from_fn(&dom, |_| 1.0);
        for p in [1.2, 1.5, 2.0] {
            assert!((mixed_integral(&dom, &one, &one, p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_zero_and_scalar_form() {
        let dom = interval_domain(64);
        let spec = scalar_spec(DomainDescriptor::interval(0.0, 1.0, 64), 1.0, 1.5, 1.0);
        let zero = BlockFunction::zeros(1, 64);
        assert_eq!(energy(&dom, &spec, &zero), 0.0);

        let u = BlockFunction {
            components: vec![ScalarField::from_fn(&dom, |x| (PI * x).sin())],
        };
        let direct = 0.5 * norm_sq(&dom, &u.components[0], 1.0)
            - mixed_integral(&dom, &u.components[0], &u.components[0], 1.5) / 3.0;
        assert!((energy(&dom, &spec, &u) - direct).abs() < 1e-14);
    }

    #[test]
    fn energy_even_in_each_component() {
        let dom = interval_domain(48);
        let spec = scalar_spec(DomainDescriptor::interval(0.0, 1.0, 48), 0.5, 1.5, 1.0);
        let u = BlockFunction {
            components: vec![ScalarField::from_fn(&dom, |x| (PI * x).sin() - 0.3)],
        };
        let flipped = BlockFunction {
            components: vec![u.components[0].scaled(-1.0)],
        };
        assert!((energy(&dom, &spec, &u) - energy(&dom, &spec, &flipped)).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let dom = interval_domain(96);
        let spec = scalar_spec(DomainDescriptor::interval(0.0, 1.0, 96), 1.0, 1.5, 1.0);
        let u = BlockFunction {
            components: vec![ScalarField::from_fn(&dom, |x| 2.0 * (PI * x).sin())],
        };
        let dir = BlockFunction {
            components: vec![ScalarField::from_fn(&dom, |x| (2.0 * PI * x).sin())],
        };
        let g = energy_gradient(&dom, &spec, &u);
        let pairing = weak_pairing(&dom, &g, &dir);
        let eps = 1e-5;
        let mut up = u.clone();
        let mut um = u.clone();
        for k in 0..dom.n {
            up.components[0].values[k] += eps * dir.components[0].values[k];
            um.components[0].values[k] -= eps * dir.components[0].values[k];
        }
        let fd = (energy(&dom, &spec, &up) - energy(&dom, &spec, &um)) / (2.0 * eps);
        assert!(
            (fd - pairing).abs() <= 1e-5 * (1.0 + pairing.abs()),
            "fd={fd} pairing={pairing}"
        );
    }

    #[test]
    fn gradient_zero_at_zero() {
        let dom = interval_domain(32);
        let spec = scalar_spec(DomainDescriptor::interval(0.0, 1.0, 32), 1.0, 1.5, 1.0);
        let g = energy_gradient(&dom, &spec, &BlockFunction::zeros(1, 32));
        assert!(g.components[0].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eigenvalue_interval_and_ball() {
        let tol = |n: f64| 12.0 / (n * n); // pi^4/12 h^2 + slack
        for desc in [
            DomainDescriptor::interval(0.0, 1.0, 256),
            DomainDescriptor::ball(3, 1.0, 256),
            DomainDescriptor::annulus(3, 1.0, 2.0, 256),
        ] {
            let dom = DiscreteDomain::build(&desc).unwrap();
            let l1 = smallest_eigenvalue(&dom).unwrap();
            assert!((l1 - PI * PI).abs() < tol(256.0), "{:?}: {l1}", desc.kind);
        }
    }

    #[test]
    fn eigenvalue_second_order_convergence() {
        for desc_of in [
            |n| DomainDescriptor::interval(0.0, 1.0, n),
            |n| DomainDescriptor::ball(3, 1.0, n),
        ] {
            let errs: Vec<f64> = [64usize, 128, 256]
                .iter()
                .map(|&n| {
                    let dom = DiscreteDomain::build(&desc_of(n)).unwrap();
                    (smallest_eigenvalue(&dom).unwrap() - PI * PI).abs()
                })
                .collect();
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log2();
                assert!((1.8..=2.2).contains(&order), "order {order}");
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let dom = interval_domain(16);
        let u = BlockFunction {
            components: vec![
                ScalarField::from_fn(&dom, |x| x),
                ScalarField::from_fn(&dom, |x| 1.0 - x),
            ],
        };
        let text = fields_to_csv(&dom, &u);
        assert!(text.starts_with("r,u_1,u_2\n"));
        let (radii, back) = fields_from_csv(&text).unwrap();
        assert_eq!(radii.len(), 16);
        assert_eq!(back, u);
    }
}
