//! Property-based invariants of the algebraic kernels: homogeneity,
//! symmetry, idempotence, and serialization roundtrips.

use nehari::discretize::{
    fields_from_csv, fields_to_csv, power_mean, BlockFunction, DiscreteDomain, DomainDescriptor,
    ScalarField,
};
use nehari::nehari::{solve_scales, NehariCoefficients, ScaleSolveConfig};
use nehari::synchronized::{
    interaction_form, j_algebraic, m_constraint, project_to_m, sync_residual,
};
use proptest::prelude::*;

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.25), Just(1.5), Just(2.0)]
}

fn coefficients() -> impl Strategy<Value = NehariCoefficients> {
    (1usize..=3).prop_flat_map(|q| {
        (
            proptest::collection::vec(0.2f64..2.0, q),
            proptest::collection::vec(0.2f64..2.0, q),
            proptest::collection::vec(0.0f64..0.05, q * q),
        )
            .prop_map(move |(a, b, flat)| {
                let mut d = vec![vec![0.0; q]; q];
                for h in 0..q {
                    for k in h + 1..q {
                        d[h][k] = flat[h * q + k];
                        d[k][h] = flat[h * q + k];
                    }
                }
                NehariCoefficients::new(a, b, d).unwrap()
            })
    })
}

/// Symmetric coupling with positive diagonal plus an amplitude vector.
fn beta_and_amplitudes(
    lo: f64,
) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=4).prop_flat_map(move |ell| {
        (
            proptest::collection::vec(0.5f64..2.0, ell),
            proptest::collection::vec(-0.3f64..0.3, ell * ell),
            proptest::collection::vec(lo..2.0, ell),
        )
            .prop_map(move |(diag, flat, c)| {
                let mut beta = vec![vec![0.0; ell]; ell];
                for (i, &v) in diag.iter().enumerate() {
                    beta[i][i] = v;
                }
                for i in 0..ell {
                    for j in i + 1..ell {
                        beta[i][j] = flat[i * ell + j];
                        beta[j][i] = flat[i * ell + j];
                    }
                }
                (beta, c)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_solve_finds_interior_critical_points(
        coeffs in coefficients(),
        p in exponent(),
    ) {
        if let Some(s) = solve_scales(&coeffs, p, &ScaleSolveConfig::default()).found() {
            prop_assert!(s.s.iter().all(|&x| x > 0.0));
            let g = coeffs.j_gradient(&s.s, p);
            let scale = coeffs.a.iter().cloned().fold(1.0f64, f64::max);
            for gh in g {
                prop_assert!(gh.abs() <= 1e-8 * scale, "gradient {} not critical", gh);
            }
        }
    }

    #[test]
    fn scale_solution_is_a_max_along_rays(
        coeffs in coefficients(),
        p in exponent(),
        shrink in 0.5f64..0.99,
    ) {
        if let Some(s) = solve_scales(&coeffs, p, &ScaleSolveConfig::default()).found() {
            let at = coeffs.j_value(&s.s, p);
            let inner: Vec<f64> = s.s.iter().map(|&x| x * shrink).collect();
            let outer: Vec<f64> = s.s.iter().map(|&x| x / shrink).collect();
            prop_assert!(coeffs.j_value(&inner, p) <= at + 1e-12 * at.abs().max(1.0));
            prop_assert!(coeffs.j_value(&outer, p) <= at + 1e-12 * at.abs().max(1.0));
        }
    }

    #[test]
    fn interaction_form_is_2p_homogeneous(
        (beta, c) in beta_and_amplitudes(-2.0),
        p in exponent(),
        t in 0.1f64..3.0,
    ) {
        let scaled: Vec<f64> = c.iter().map(|&x| t * x).collect();
        let lhs = interaction_form(&scaled, &beta, p);
        let rhs = t.powf(2.0 * p) * interaction_form(&c, &beta, p);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs().max(rhs.abs())));
    }

    #[test]
    fn sync_quantities_respect_permutations(
        (beta, c) in beta_and_amplitudes(0.1),
        p in prop_oneof![Just(1.5), Just(2.0)],
        rot in 1usize..=3,
    ) {
        let ell = c.len();
        let perm: Vec<usize> = (0..ell).map(|i| (i + rot) % ell).collect();
        let mut pb = vec![vec![0.0; ell]; ell];
        let mut pc = vec![0.0; ell];
        for i in 0..ell {
            pc[i] = c[perm[i]];
            for j in 0..ell {
                pb[i][j] = beta[perm[i]][perm[j]];
            }
        }
        let r1 = sync_residual(&c, &beta, p);
        let r2 = sync_residual(&pc, &pb, p);
        prop_assert!((r1 - r2).abs() <= 1e-10 * (1.0 + r1.abs()));
        let j1 = j_algebraic(&c, &beta, p);
        let j2 = j_algebraic(&pc, &pb, p);
        prop_assert!((j1 - j2).abs() <= 1e-10 * (1.0 + j1.abs()));
    }

    #[test]
    fn projection_to_m_is_idempotent(
        (beta, c) in beta_and_amplitudes(0.1),
        p in exponent(),
    ) {
        if let Some(m) = project_to_m(&c, &beta, p) {
            let norm: f64 = m.c.iter().map(|x| x * x).sum();
            prop_assert!(m_constraint(&m.c, &beta, p).abs() <= 1e-10 * (1.0 + norm));
            let again = project_to_m(&m.c, &beta, p).unwrap();
            for (x, y) in m.c.iter().zip(&again.c) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn power_mean_is_odd_and_matches_powers(
        x in -10.0f64..10.0,
        p in 1.1f64..3.0,
    ) {
        let f = power_mean(x, p);
        prop_assert!((f + power_mean(-x, p)).abs() <= 1e-12 * (1.0 + f.abs()));
        if x != 0.0 {
            let expect = x.abs().powf(p - 1.0) * x.signum();
            prop_assert!((f - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        } else {
            prop_assert!(f == 0.0);
        }
    }

    #[test]
    fn csv_roundtrip_is_exact(
        ell in 1usize..=4,
        raw in proptest::collection::vec(-1.0e3f64..1.0e3, 32 * 4),
    ) {
        let domain = DiscreteDomain::build(&DomainDescriptor::annulus(3, 1.0, 3.0, 32)).unwrap();
        let u = BlockFunction {
            components: (0..ell)
                .map(|i| ScalarField {
                    values: raw[i * 32..(i + 1) * 32].to_vec(),
                })
                .collect(),
        };
        let text = fields_to_csv(&domain, &u);
        let (radii, back) = fields_from_csv(&text).unwrap();
        prop_assert_eq!(radii, domain.nodes.clone());
        prop_assert_eq!(back, u);
    }
}
