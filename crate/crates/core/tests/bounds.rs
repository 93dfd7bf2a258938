use privgraph::bounds::{
    BoundInputs, bound_table, c_tilde, cor5_bound, cor6_bound, laplace_factor, log_plus, optimal_inputs, optimal_params,
    rate_bounds, stein_constants, thm2_bound, thm3_bound,
};
use privgraph::metric::Metric;
use privgraph::noise::NoiseSpec;
use proptest::prelude::*;

fn laplace_abs(eps: f64) -> f64 {
    // direct pmf summation, independent of the closed form
    let spec = NoiseSpec::discrete_laplace(eps).unwrap();
    let cutoff = (80.0 / eps) as i64 + 50;
    (-cutoff..=cutoff).map(|k| k.unsigned_abs() as f64 * spec.pmf(k)).sum()
}

fn cube(d: u32, m: u64, n: u64, eps: f64, a: f64) -> BoundInputs {
    BoundInputs {
        a,
        b: a,
        n,
        m,
        eps,
        d,
        alpha: 0.5,
        cap: 1.0,
        lipschitz: 1.0,
        diam_omega: 1.0,
        max_cell_diam: (m as f64).powf(-1.0 / d as f64),
        leb_omega: 1.0,
        expected_abs_noise: NoiseSpec::discrete_laplace(eps).unwrap().expected_abs(),
    }
}

#[test]
fn laplace_mean_abs_value() {
    let closed = NoiseSpec::discrete_laplace(1.0).unwrap().expected_abs();
    assert!((closed - 0.850918).abs() < 1e-6);
    assert!((closed - laplace_abs(1.0)).abs() < 1e-12);
}

#[test]
fn stein_bound_example() {
    let inp = cube(2, 100, 1000, 1.0, 10.0);
    let e = thm3_bound(&inp).unwrap();
    // vertex 2*(1/2)*0.1; noise 2 c_V (10/1000) E|L|; edge (1/2) c_E 2 (0.1)^3 100
    let c_v = (1.0 + (1.0 - (-10f64).exp()) * 10f64.ln()) / 10.0;
    let c_e = (2.0 - (-10f64).exp()) / 10.0 - (1.5 - (-10f64).exp()) / 100.0;
    let want = 0.1 + 2.0 * c_v * 0.01 * laplace_abs(1.0) + 0.5 * c_e * 2.0 * 1e-3 * 100.0;
    assert!((e.total - want).abs() < 1e-12, "{} vs {want}", e.total);
    assert!((e.total - 0.1241198725).abs() < 1e-9);
}

#[test]
fn simplified_stein_example() {
    let e = cor6_bound(&cube(2, 100, 1000, 1.0, 100.0)).unwrap();
    let p = (-1f64).exp();
    let want = 0.1 + 2.0 * (1.0 + 100f64.ln()) / 1000.0 * p / (1.0 - p * p) + 0.2;
    assert!((e.total - want).abs() < 1e-12);
    assert!((e.total - 0.3047695409).abs() < 1e-9);
}

#[test]
fn stein_vertex_constant_decays() {
    let inp = cube(1, 10, 100, 1.0, 10.0);
    let mut last = f64::INFINITY;
    for i in 1..200 {
        let c = 1.5f64.powi(i);
        let (cv, _, ca) = stein_constants(c, &inp).unwrap();
        assert!(cv <= ca);
        if c > 3.0 {
            assert!(cv <= last + 1e-15);
        }
        last = cv;
    }
    assert!(last < 1e-20);
}

#[test]
fn optimal_parameters_and_rates() {
    let p = optimal_params(1.0, 1000, 1).unwrap();
    assert!((p.f_n - 0.0316227766).abs() < 1e-9);
    assert_eq!((p.m, p.a), (32, 1024.0));
    let p = optimal_params(1.0, 1000, 2).unwrap();
    assert!((p.f_n - 0.1).abs() < 1e-12);
    assert_eq!((p.m, p.a), (100, 100.0));
    let (coupling, _) = rate_bounds(1.0, 1000, 2, 0.5, 1.0, 1.0, 1.0);
    assert!((coupling.total - 0.35).abs() < 1e-12);
}

#[test]
fn large_eps_favours_the_coupling_bound() {
    let t = bound_table(&[0.1, 5.0], &[100, 1000, 10000], 2, 0.5, 1.0, 1.0).unwrap();
    let last = t.eps.len() - 1;
    for j in 0..t.n.len() {
        assert!(t.cor5[last][j] <= t.cor6[last][j]);
    }
    assert!(t.decreasing_in_n());
}

fn inputs() -> impl Strategy<Value = BoundInputs> {
    (1u32..4, 1u64..400, 1u64..100_000, 0.01f64..8.0, 0.5f64..500.0, 0.0f64..=1.0, 0.1f64..3.0, 0.1f64..3.0)
        .prop_map(|(d, m, n, eps, a, alpha, cap, l)| BoundInputs {
            alpha,
            cap,
            lipschitz: l,
            ..cube(d, m, n, eps, a)
        })
}

proptest! {
    #[test]
    fn terms_are_nonnegative_and_sum(inp in inputs(), gap in 0.0f64..50.0) {
        let general = BoundInputs { b: inp.a + gap, ..inp };
        for e in [thm2_bound(&general).unwrap(), thm3_bound(&general).unwrap(), cor5_bound(&inp).unwrap(), cor6_bound(&inp).unwrap()] {
            prop_assert!(e.terms.iter().all(|(_, v)| *v >= 0.0 && v.is_finite()));
            let s: f64 = e.terms.iter().map(|(_, v)| v).sum();
            prop_assert!((s - e.total).abs() <= 1e-12 * s.max(1.0));
        }
    }

    #[test]
    fn bounds_shrink_with_more_data_and_budget(inp in inputs(), k in 2u64..10, scale in 1.01f64..4.0) {
        let more_n = BoundInputs { n: inp.n * k, ..inp };
        let more_eps = BoundInputs {
            eps: inp.eps * scale,
            expected_abs_noise: NoiseSpec::discrete_laplace(inp.eps * scale).unwrap().expected_abs(),
            ..inp
        };
        for f in [thm2_bound, thm3_bound, cor5_bound, cor6_bound] {
            let base = f(&inp).unwrap().total;
            prop_assert!(f(&more_n).unwrap().total <= base + 1e-15);
            prop_assert!(f(&more_eps).unwrap().total <= base + 1e-15);
        }
    }

    #[test]
    fn laplace_factor_at_most_half(eps in 1e-6f64..60.0) {
        let v = laplace_factor(eps);
        prop_assert!(v > 0.0 && v <= 0.5);
        let e_abs = NoiseSpec::discrete_laplace(eps).unwrap().expected_abs();
        prop_assert!((v - eps * e_abs / 2.0).abs() <= 1e-12 * v.max(1e-300) + 1e-300);
    }

    #[test]
    fn coupling_bound_pair(inp in inputs()) {
        // same discretisation term; the simplified noise term is half the general one
        let general = thm2_bound(&inp).unwrap();
        let simplified = cor5_bound(&inp).unwrap();
        let (c1, _) = c_tilde(&inp);
        prop_assert!((general.term("matched_cell").unwrap() - c1 * inp.max_cell_diam).abs() < 1e-12);
        prop_assert!((simplified.term("discretisation").unwrap() - general.term("matched_cell").unwrap()).abs() < 1e-12);
        let ratio = simplified.term("noise").unwrap() / general.term("noise").unwrap();
        prop_assert!((ratio - 0.5).abs() < 1e-9);
    }

    #[test]
    fn stein_bound_pair(inp in inputs()) {
        let general = thm3_bound(&inp).unwrap();
        let simplified = cor6_bound(&inp).unwrap();
        prop_assert!((general.term("vertex_attributes").unwrap() - simplified.term("discretisation").unwrap()).abs() < 1e-12);
        let a = inp.a;
        let want = 2.0 * (1.0 + (1.0 - (-a).exp()) * log_plus(a)) / (1.0 + log_plus(a));
        let (cv, _, ca) = stein_constants(a, &inp).unwrap();
        let noise_ratio = general.term("noise").unwrap() / simplified.term("noise").unwrap();
        if cv < ca {
            prop_assert!((noise_ratio - want).abs() < 1e-9 * want);
            prop_assert!(want > 1.0 - 1e-12 && want <= 2.0 + 1e-12);
        } else {
            // clamped at C_alpha
            prop_assert!(noise_ratio <= want + 1e-9);
        }
        prop_assert!(general.term("edges").unwrap() <= simplified.term("edges").unwrap() + 1e-15);
    }

    #[test]
    fn doubling_eps_n_scales_rates(eps in 0.01f64..5.0, n in 10u64..10_000, d in 1u32..4) {
        let (c1, _) = rate_bounds(eps, n, d, 0.5, 1.0, 1.0, 1.0);
        let (c2, _) = rate_bounds(eps, 2 * n, d, 0.5, 1.0, 1.0, 1.0);
        let want = 2f64.powf(-1.0 / (d as f64 + 1.0));
        prop_assert!((c2.total / c1.total - want).abs() < 1e-12);
    }

    #[test]
    fn optimal_grid_covers_request(eps in 0.01f64..10.0, n in 1u64..100_000, d in 1u32..4) {
        let p = optimal_params(eps, n, d).unwrap();
        prop_assert!(p.m >= p.m_request);
        prop_assert!(p.k_per_axis == 1 || (p.k_per_axis - 1).pow(d) < p.m_request);
        let inp = optimal_inputs(eps, n, d, 0.5, 1.0, 1.0, Metric::SupNorm).unwrap();
        prop_assert!(cor5_bound(&inp).is_ok());
        prop_assert!(cor6_bound(&inp).is_ok());
    }
}
