use fraclab_core::fixtures::{explicit_solution, odd_kink};
use fraclab_core::gridfn::{ExteriorExtension, Grid, GridFunction};
use fraclab_core::kernels::{
    check_ellipticity, log_spaced_samples, normalization_constant, IsaacsOperator, KernelSpec,
};
use fraclab_core::nonlocal_ops::{eval_isaacs, eval_linear, eval_pucci, PucciSign, QuadratureScheme};
use fraclab_core::probe::{blowup_profile, fit_holder_exponent, flatness_trace, Side};
use fraclab_core::solver::{
    pseudo_time_step, residual, solve_vanishing_viscosity, solve_viscous, stability_bound, ProblemSpec, SolveConfig,
    Source,
};
use proptest::prelude::*;

fn small_grid() -> Grid {
    Grid::new(2.0, 1.0 / 16.0).unwrap()
}

fn random_function(values: Vec<f64>) -> GridFunction {
    GridFunction::new(small_grid(), values, ExteriorExtension::zero()).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 65)
}

fn interior_node() -> impl Strategy<Value = f64> {
    (-15i32..=15).prop_map(|k| k as f64 / 16.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn band_kernels_are_pinched_and_even(
        sigma in 0.1f64..1.9,
        lambda in 0.2f64..1.0,
        ratio in 1.0f64..4.0,
        seed in 0u64..1000,
        z in 1e-3f64..20.0,
    ) {
        let spec = KernelSpec::band(sigma, lambda, lambda * ratio, seed).unwrap();
        prop_assert!(check_ellipticity(&spec, &log_spaced_samples(4.0, 32)).unwrap().passed());
        let frac = KernelSpec::frac_laplacian(sigma).unwrap().kernel_value(z).unwrap();
        let k = spec.kernel_value(z).unwrap();
        prop_assert!(k >= lambda * frac * (1.0 - 1e-12));
        prop_assert!(k <= lambda * ratio * frac * (1.0 + 1e-12));
        prop_assert_eq!(k, spec.kernel_value(-z).unwrap());
    }

    #[test]
    fn normalization_is_positive_and_continuous(sigma in 0.05f64..1.95) {
        let c = normalization_constant(sigma).unwrap();
        prop_assert!(c > 0.0);
        let c2 = normalization_constant(sigma + 1e-7).unwrap();
        prop_assert!((c2 - c).abs() <= 1e-5);
    }

    #[test]
    fn holder_seminorm_grows_with_the_ball(v in values(), alpha in 0.05f64..1.0, r1 in 0.3f64..1.0, extra in 0.0f64..0.9) {
        let u = random_function(v);
        let small = u.holder_seminorm(alpha, 0.0, r1).unwrap();
        let large = u.holder_seminorm(alpha, 0.0, r1 + extra).unwrap();
        prop_assert!(large >= small);
    }

    #[test]
    fn holder_exponents_compare(v in values(), a in 0.05f64..0.95, gap in 0.01f64..0.5, r in 0.3f64..1.5) {
        let b = (a + gap).min(1.0);
        let u = random_function(v);
        let sa = u.holder_seminorm(a, 0.0, r).unwrap();
        let sb = u.holder_seminorm(b, 0.0, r).unwrap();
        prop_assert!(sb * (2.0 * r).powf(b - a) >= sa * (1.0 - 1e-12));
    }

    #[test]
    fn affine_fit_ignores_added_affine_functions(v in values(), a0 in -3.0f64..3.0, p0 in -3.0f64..3.0, r in 0.3f64..1.5) {
        let u = random_function(v);
        let w = u.map(|x, val| val + a0 + p0 * x).unwrap();
        let fu = u.best_affine_fit(0.0, r).unwrap();
        let fw = w.best_affine_fit(0.0, r).unwrap();
        prop_assert!((fu.dev - fw.dev).abs() <= 1e-12 * (1.0 + fu.dev));
        prop_assert!((fw.p - fu.p - p0).abs() <= 1e-9);
        prop_assert!((fw.a - fu.a - a0).abs() <= 1e-9);
    }

    #[test]
    fn tail_norm_is_homogeneous(v in values(), c in -5.0f64..5.0, s in 0.1f64..2.0, beta in 0.0f64..1.2) {
        let grid = small_grid();
        let u = GridFunction::new(grid, v.clone(), ExteriorExtension::power(s, beta).unwrap()).unwrap();
        let scaled = GridFunction::new(
            grid,
            v.iter().map(|x| c * x).collect(),
            ExteriorExtension::power(c * s, beta).unwrap(),
        )
        .unwrap();
        let (a, b) = (u.tail_norm(1.5).unwrap(), scaled.tail_norm(1.5).unwrap());
        prop_assert!((b - c.abs() * a).abs() <= 1e-9 * (1.0 + b));
    }

    #[test]
    fn linear_operators_are_linear(
        v in values(), w in values(), a in -2.0f64..2.0, b in -2.0f64..2.0,
        sigma in 0.2f64..1.9, seed in 0u64..100, x in interior_node(),
    ) {
        let q = QuadratureScheme::default();
        let spec = KernelSpec::band(sigma, 1.0, 2.0, seed).unwrap();
        let comb: Vec<f64> = v.iter().zip(&w).map(|(p, r)| a * p + b * r).collect();
        let lhs = eval_linear(&random_function(comb), &spec, x, &q).unwrap();
        let lu = eval_linear(&random_function(v), &spec, x, &q).unwrap();
        let lw = eval_linear(&random_function(w), &spec, x, &q).unwrap();
        let scale = (a * lu).abs() + (b * lw).abs() + 1.0;
        prop_assert!((lhs - a * lu - b * lw).abs() <= 1e-10 * scale);
    }

    #[test]
    fn isaacs_lies_between_the_extremals(v in values(), sigma in 0.2f64..1.9, seed in 0u64..100, x in interior_node()) {
        let q = QuadratureScheme::default();
        let u = random_function(v);
        let op = IsaacsOperator::band_family(sigma, 1.0, 2.0, 2, 3, seed).unwrap();
        let mid = eval_isaacs(&u, &op, x, &q).unwrap();
        let lo = eval_pucci(&u, x, PucciSign::Minus, sigma, 1.0, 2.0, &q).unwrap();
        let hi = eval_pucci(&u, x, PucciSign::Plus, sigma, 1.0, 2.0, &q).unwrap();
        prop_assert!(lo <= mid + 1e-12 && mid <= hi + 1e-12, "{} {} {}", lo, mid, hi);
    }

    #[test]
    fn shifting_function_and_point_together(shift in -8i32..=8, sigma in 0.3f64..1.9, k in -8i32..=8) {
        let grid = Grid::new(4.0, 1.0 / 32.0).unwrap();
        let q = QuadratureScheme::default();
        let s = shift as f64 / 32.0;
        let spec = KernelSpec::frac_laplacian(sigma).unwrap();
        let u = GridFunction::analytic(grid, "gauss", 0.0, |x| (-x * x).exp()).unwrap();
        let moved = GridFunction::analytic(grid, "gauss_shifted", 0.0, move |x| (-(x - s) * (x - s)).exp()).unwrap();
        let x = k as f64 / 32.0;
        let a = eval_linear(&u, &spec, x, &q).unwrap();
        let b = eval_linear(&moved, &spec, x + s, &q).unwrap();
        prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn holder_fit_is_scale_free(v in values(), c in 0.1f64..10.0, d in -5.0f64..5.0) {
        let u = random_function(v);
        let w = u.map(|_, val| c * val + d).unwrap();
        let scales = [1.0, 0.5, 0.25];
        let fu = fit_holder_exponent(&u, 0.0, &scales).unwrap();
        let fw = fit_holder_exponent(&w, 0.0, &scales).unwrap();
        prop_assert!((fu.fitted_exponent - fw.fitted_exponent).abs() <= 1e-9);
    }

    #[test]
    fn flatness_ignores_added_affine_functions(v in values(), a0 in -3.0f64..3.0, p0 in -3.0f64..3.0) {
        let u = random_function(v);
        let w = u.map(|x, val| val + a0 + p0 * x).unwrap();
        let tu = flatness_trace(&u, 0.0, 0.5, 2, 1.0, 0.3).unwrap();
        let tw = flatness_trace(&w, 0.0, 0.5, 2, 1.0, 0.3).unwrap();
        for (eu, ew) in tu.entries.iter().zip(&tw.entries) {
            prop_assert!((eu.dev - ew.dev).abs() <= 1e-12 * (1.0 + eu.dev));
        }
    }
}

fn exterior() -> impl Strategy<Value = ExteriorExtension> {
    prop_oneof![
        Just(ExteriorExtension::zero()),
        any::<f64>()
            .prop_filter("finite", |c| c.is_finite())
            .prop_map(ExteriorExtension::constant),
        (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b)| ExteriorExtension::affine(a, b)),
        (-10.0f64..10.0, 0.0f64..1.9).prop_map(|(s, beta)| ExteriorExtension::power(s, beta).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_bit_exact(
        v in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 65),
        ext in exterior(),
    ) {
        let u = GridFunction::new(small_grid(), v, ext).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back = GridFunction::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.grid(), u.grid());
        prop_assert!(back.values().iter().zip(u.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        for y in [-7.5, -2.25, 2.5, 100.0] {
            prop_assert_eq!(back.value_at(y).to_bits(), u.value_at(y).to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn blowup_slopes_are_mirror_symmetric(sigma in 1.05f64..1.95) {
        let grid = Grid::new(4.0, 1.0 / 128.0).unwrap();
        let q = QuadratureScheme::default();
        let u = odd_kink(grid).unwrap();
        let spec = KernelSpec::frac_laplacian(sigma).unwrap();
        let dists = [0.25, 0.125, 0.0625, 0.03125];
        let right: Vec<f64> = dists.iter().map(|d| 1.0 - d).collect();
        let left: Vec<f64> = dists.iter().map(|d| d - 1.0).collect();
        let pr = blowup_profile(&u, &spec, Side::Right, &right, &q).unwrap();
        let pl = blowup_profile(&u, &spec, Side::Left, &left, &q).unwrap();
        prop_assert!((pr.slope - pl.slope).abs() <= 1e-6);
        prop_assert!(pr.table.windows(2).all(|w| w[1].1 > w[0].1));
        prop_assert!(pl.table.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn flat_gradient_nullifies_diffusion(
        v in values(), gamma in 0.1f64..3.0, f in -2.0f64..2.0, k in -12i32..=12, sigma in 0.3f64..1.9,
    ) {
        let grid = small_grid();
        let c = (grid.center_index() as i32 + k) as usize;
        let mut v = v;
        v[c - 1] = v[c];
        v[c + 1] = v[c];
        let u = random_function(v);
        let op = IsaacsOperator::band_family(sigma, 1.0, 2.0, 2, 2, 5).unwrap();
        let prob = ProblemSpec::new(op, gamma, 0.0, Source::Constant(f), u.clone()).unwrap();
        let r = residual(&u, &prob, 0.0).unwrap();
        prop_assert_eq!(r.values()[c], f);
    }

    #[test]
    fn zero_shift_is_bit_identical(v in values(), gamma in 0.0f64..2.0, eps in 0.0f64..0.2) {
        let u = random_function(v);
        let op = IsaacsOperator::single(KernelSpec::frac_laplacian(1.3).unwrap());
        let a = ProblemSpec::new(op.clone(), gamma, 0.0, Source::Constant(1.0), u.clone()).unwrap();
        let b = ProblemSpec::new(op, gamma, -0.0, Source::Constant(1.0), u.clone()).unwrap();
        let (ra, rb) = (residual(&u, &a, eps).unwrap(), residual(&u, &b, eps).unwrap());
        prop_assert!(ra.values().iter().zip(rb.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn exterior_nodes_are_never_modified(
        v in values(), gamma in 0.0f64..2.0, f in -1.0f64..1.0, c in -1.0f64..1.0, iters in 1usize..40,
    ) {
        let grid = small_grid();
        let boundary = GridFunction::new(grid, v.clone(), ExteriorExtension::constant(c)).unwrap();
        let op = IsaacsOperator::band_family(1.2, 1.0, 2.0, 2, 2, 1).unwrap();
        let prob = ProblemSpec::new(op, gamma, 0.3, Source::Constant(f), boundary.clone()).unwrap();
        let outside = |u: &GridFunction| -> Vec<u64> {
            grid.nodes()
                .zip(u.values())
                .filter(|(x, _)| x.abs() >= 1.0)
                .map(|(_, v)| v.to_bits())
                .collect()
        };
        let cfg = SolveConfig { max_iters: iters, epsilon_schedule: vec![0.1, 0.05], ..SolveConfig::default() };
        let (u1, _) = solve_viscous(&prob, 0.1, &cfg, None).unwrap();
        prop_assert_eq!(outside(&u1), outside(&boundary));
        let rep = solve_vanishing_viscosity(&prob, &cfg).unwrap();
        prop_assert_eq!(outside(&rep.u), outside(&boundary));
        let dt = 0.5 * stability_bound(&boundary, &prob, 0.1).unwrap();
        let stepped = pseudo_time_step(&boundary, &prob, 0.1, dt).unwrap();
        prop_assert_eq!(outside(&stepped), outside(&boundary));
    }

    #[test]
    fn proper_linear_problems_obey_comparison(
        g1 in -1.0f64..1.0, dg in 0.0f64..1.0, f1 in -1.0f64..1.0, df in 0.0f64..1.0, sigma in 0.5f64..1.9,
    ) {
        let grid = Grid::new(2.0, 1.0 / 32.0).unwrap();
        let op = IsaacsOperator::single(KernelSpec::frac_laplacian(sigma).unwrap());
        let solve = |g: f64, f: f64| {
            let b = GridFunction::from_fn(grid, ExteriorExtension::constant(g), |_| g).unwrap();
            let prob = ProblemSpec::new(op.clone(), 0.0, 0.0, Source::Constant(f), b).unwrap();
            let cfg = SolveConfig { epsilon_schedule: vec![0.1, 0.05], ..SolveConfig::default() };
            let rep = solve_vanishing_viscosity(&prob, &cfg).unwrap();
            assert!(rep.converged());
            rep.u
        };
        let u1 = solve(g1, f1);
        let u2 = solve(g1 + dg, f1 + df);
        prop_assert!(u1.values().iter().zip(u2.values()).all(|(a, b)| *a <= b + 1e-6));
    }

    #[test]
    fn linear_solutions_scale_with_the_source(c in 0.1f64..10.0, sigma in 0.5f64..1.9) {
        let grid = Grid::new(2.0, 1.0 / 32.0).unwrap();
        let op = IsaacsOperator::single(KernelSpec::frac_laplacian(sigma).unwrap());
        let zero = GridFunction::from_fn(grid, ExteriorExtension::zero(), |_| 0.0).unwrap();
        let tol = 1e-9;
        let cfg = SolveConfig { epsilon_schedule: vec![0.1, 0.05], tol_residual: tol, ..SolveConfig::default() };
        let solve = |f: f64| {
            let prob = ProblemSpec::new(op.clone(), 0.0, 0.0, Source::Constant(f), zero.clone()).unwrap();
            solve_vanishing_viscosity(&prob, &cfg).unwrap().u
        };
        let (u, uc) = (solve(1.0), solve(c));
        // the error is bounded by tol times the sup of the torsion function of B1, which is O(1)
        let worst = u.values().iter().zip(uc.values()).map(|(a, b)| (c * a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 2.0 * tol * c.max(1.0), "{}", worst);
    }
}

#[test]
fn flatness_exponent_decreases_with_gamma() {
    let grid = Grid::new(4.0, 1.0 / 512.0).unwrap();
    let slopes: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&g| {
            let u = explicit_solution(grid, 1.8, g).unwrap();
            flatness_trace(&u, 0.0, 0.5, 5, 1.0, 0.1).unwrap().slope.unwrap()
        })
        .collect();
    assert!(slopes[0] > slopes[1] && slopes[1] > slopes[2], "{slopes:?}");
    for (s, g) in slopes.iter().zip([0.5, 1.0, 2.0]) {
        assert!((s - (1.0 + 0.8 / (1.0 + g))).abs() < 0.01, "{s} at gamma {g}");
    }
}
