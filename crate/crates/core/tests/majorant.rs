use cauchy_lab::exec::Exec;
use cauchy_lab::instability::{growing_mode, make_params, semigroup_bound_check, HoelderInputs};
use cauchy_lab::majorant::*;
use cauchy_lab::series::ProfileOperator;
use cauchy_lab::symbol::PolySystem;

fn brute_c0(t: i64) -> f64 {
    let sup = (0..=t)
        .map(|n| {
            let s: f64 = (0..=n).map(|p| 1.0 / ((p * p + 1) as f64 * ((n - p) * (n - p) + 1) as f64)).sum();
            (n * n + 1) as f64 * s
        })
        .fold(0.0, f64::max);
    1.0 / sup
}

#[test]
fn constants_and_algebra_to_order_200() {
    assert!(bracket_subadditive(100));
    let k = compute_constants(200, 200, Exec::default());
    assert!((k.c0 - brute_c0(200)).abs() < 1e-12);
    assert!(k.c0_tail_monotone);
    let phi = MajorantSeries::phi(k.c0, 200);
    assert!(dominates(&phi.mul(&phi), &phi));
    assert!(c1_inequality_worst(k.c1, 200, Exec::default()) <= 1.0);
}

fn vdw_norm(eps: f64) -> (NormParams, f64) {
    let op = ProfileOperator::new(&PolySystem::vdw(), &[1.0], eps).unwrap();
    let gm = growing_mode(&op.abar).unwrap();
    let ip = make_params(eps, 3.0, 0.1, gm.gamma0, HoelderInputs::default()).unwrap();
    let k = compute_constants(200, 200, Exec::default());
    (NormParams::from_instability(&ip, &k), gm.gamma0)
}

#[test]
fn seeded_norm_inequalities() {
    let (p, _) = vdw_norm(1e-2);
    let c2 = compute_c2(p.c1, 200, Exec::default());
    let sgrid: Vec<f64> = (0..4).map(|j| j as f64 * 0.3 * p.sbar).collect();
    let rep = algebra_batch(&p, c2, &sgrid, 8, 4, 100, 7, Exec::default()).unwrap();
    assert_eq!(rep.submultiplicative_violations, 0, "{rep:?}");
    assert_eq!(rep.prime_product_violations, 0, "{rep:?}");
    assert_eq!(rep.one_product_violations, 0, "{rep:?}");
    assert_eq!(rep.homogeneity_violations, 0, "{rep:?}");
    // schedule independence
    let seq = algebra_batch(&p, c2, &sgrid, 8, 4, 20, 7, Exec::Sequential).unwrap();
    let par = algebra_batch(&p, c2, &sgrid, 8, 4, 20, 7, Exec::default()).unwrap();
    assert_eq!(seq.worst_ratio, par.worst_ratio);
}

#[test]
fn duhamel_bounds_on_seeded_data() {
    let (p, g0) = vdw_norm(1e-2);
    let abar = ProfileOperator::new(&PolySystem::vdw(), &[1.0], 1e-2).unwrap().abar;
    let kg = semigroup_bound_check(&abar, p.gamma, 8, p.sbar, 200, Exec::default()).unwrap();
    let kg1 = semigroup_bound_check(&abar, 0.5 * (p.gamma + g0), 8, p.sbar, 200, Exec::default()).unwrap();
    let dc = duhamel_constants(&p, g0, kg, kg1);
    let sgrid: Vec<f64> = (0..=400).map(|j| j as f64 * 0.9 * p.sbar / 400.0).collect();
    let rep = duhamel_batch(&p, &abar, &dc, &sgrid, 6, 2, 50, 11, Exec::default()).unwrap();
    assert_eq!(rep.one_violations + rep.prime_violations, 0, "{rep:?}");
}

#[test]
fn norm_refines_monotonically_on_nested_grids() {
    let (p, _) = vdw_norm(1e-2);
    let fine: Vec<f64> = (0..=8).map(|j| j as f64 * 0.1 * p.sbar).collect();
    let u = random_profile(3, &p, &fine, 1, 6, 2, Variant::Plain).unwrap();
    let coarse = ProfileSeries {
        sgrid: fine.iter().step_by(2).copied().collect(),
        fields: u.fields.iter().step_by(2).cloned().collect(),
    };
    assert!(enorm(&coarse, &p, Variant::Plain).unwrap() <= enorm(&u, &p, Variant::Plain).unwrap());
}

#[test]
fn linear_system_converges_at_once() {
    use cauchy_lab::poly::Polynomial;
    let mut sys = PolySystem::zero("rotation", 2, 1);
    sys.coeff[0][0][1] = Polynomial::constant(-1.0, 2);
    sys.coeff[0][1][0] = Polynomial::constant(1.0, 2);
    let st = ContractionSettings {
        s_points: 201,
        k: 8,
        ..Default::default()
    };
    let ex = contraction_experiment(&sys, 1.0, &st, Exec::default()).unwrap();
    assert_eq!(ex.report.iterations, 1);
    assert_eq!(ex.report.aposteriori, 0.0);
    assert!(ex.agreement < 1e-12);
}

#[test]
fn vdw_contraction_matches_profile_solver() {
    let ex = contraction_experiment(&PolySystem::vdw(), 1.0, &ContractionSettings::default(), Exec::default()).unwrap();
    println!(
        "f_norm {:.4e} factor {:.4} margin {:.4} iterations {} residual {:.2e} worst ratio {:.3e} agreement {:.3e}",
        ex.report.f_norm, ex.report.factor, ex.report.margin, ex.report.iterations, ex.report.residual, ex.worst_ratio, ex.agreement
    );
    assert!(ex.report.converged && ex.report.iterations <= 30);
    assert!(ex.worst_ratio <= ex.report.factor);
    assert!(ex.agreement <= 1e-6);
    assert!(ex.report.aposteriori <= ex.report.apriori);
    // certified mode refuses these parameters
    let st = ContractionSettings {
        certify: true,
        ..Default::default()
    };
    assert!(contraction_experiment(&PolySystem::vdw(), 1.0, &st, Exec::default()).is_err());
}
