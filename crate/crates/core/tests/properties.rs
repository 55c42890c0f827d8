use std::sync::OnceLock;

use cauchy_lab::exec::Exec;
use cauchy_lab::fbi::{gaussian_transform, Cutoff, Signal, TransformSpec};
use cauchy_lab::instability::{growing_mode, make_params, HoelderInputs};
use cauchy_lab::kirchhoff::{integrate_a, Initial, SpectrumData, WeightSpec};
use cauchy_lab::majorant::*;
use cauchy_lab::poly::Ring;
use cauchy_lab::series::{FtSeries, ProfileOperator};
use cauchy_lab::symbol::{principal_symbol, projector_upper, spectrum_classify, vdw_tools, PolySystem, Verdict};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

/// Modes limited to `|n| <= 1` so triple products stay inside `|n| <= k`
/// and truncation does not break associativity.
fn series(k: usize, t: usize) -> impl Strategy<Value = FtSeries> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3 * (t + 1)).prop_map(move |v| {
        let mut s = FtSeries::zeros(k, t);
        for (i, (a, b)) in v.into_iter().enumerate() {
            s.set(i as i64 / (t as i64 + 1) - 1, i % (t + 1), Complex64::new(a, b));
        }
        s
    })
}

fn close(a: &FtSeries, b: &FtSeries, tol: f64) -> bool {
    a.c.iter().zip(&b.c).all(|(x, y)| (x - y).norm() <= tol)
}

fn vdw_norm() -> &'static NormParams {
    static P: OnceLock<NormParams> = OnceLock::new();
    P.get_or_init(|| {
        let op = ProfileOperator::new(&PolySystem::vdw(), &[1.0], 1e-2).unwrap();
        let gm = growing_mode(&op.abar).unwrap();
        let ip = make_params(1e-2, 3.0, 0.1, gm.gamma0, HoelderInputs::default()).unwrap();
        NormParams::from_instability(&ip, &compute_constants(64, 64, Exec::Sequential))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_is_subadditive(p in -1_000_000i64..1_000_000, q in -1_000_000i64..1_000_000) {
        prop_assert!(weight_bracket(p + q) <= weight_bracket(p) + weight_bracket(q));
    }

    #[test]
    fn series_ring_laws(a in series(3, 2), b in series(3, 2), c in series(3, 2)) {
        prop_assert!(close(&a.mul(&b), &b.mul(&a), 1e-12));
        prop_assert!(close(&a.mul(&b).mul(&c), &a.mul(&b.mul(&c)), 1e-10));
        prop_assert!(close(&a.mul(&b.add(&c)), &a.mul(&b).add(&a.mul(&c)), 1e-10));
        prop_assert!(close(&a.mul(&a.one_like()), &a, 0.0));
    }

    #[test]
    fn vdw_verdict_follows_pressure_slope(u in -2.0f64..2.0, n in 1i64..12) {
        prop_assume!((u * u - 1.0 / 3.0).abs() >= 1e-6);
        let m = principal_symbol(&PolySystem::vdw(), 0.0, &[0.0], &[u, 0.0], &[n as f64]).unwrap();
        let s = spectrum_classify(&m).unwrap();
        let vp = vdw_tools(u);
        prop_assert_eq!(s.verdict == Verdict::NonHyperbolic, vp.elliptic);
        let want = if vp.elliptic { n as f64 * (-vp.dp).sqrt() } else { 0.0 };
        prop_assert!((s.gamma0 - want).abs() <= 1e-10 * (1.0 + want));
    }

    #[test]
    fn spectrum_is_closed_under_conjugation(v in prop::collection::vec(-2.0f64..2.0, 16)) {
        let m = DMatrix::from_vec(4, 4, v);
        let ev = spectrum_classify(&m).unwrap().eigenvalues;
        for z in &ev {
            let best = ev.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(best <= 1e-8 * (1.0 + m.norm()), "{z} in {ev:?}");
        }
    }

    #[test]
    fn upper_projector_is_scale_invariant(v in prop::collection::vec(-2.0f64..2.0, 9), c in 0.1f64..10.0) {
        let m = DMatrix::from_vec(3, 3, v);
        let (Ok(p), Ok(q)) = (projector_upper(&m), projector_upper(&(&m * c))) else {
            return Ok(());
        };
        prop_assert_eq!(p.rank, q.rank);
        prop_assert!((p.matrix - q.matrix).norm() <= 1e-8 * (1.0 + m.norm()));
    }

    #[test]
    fn transform_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, w in 0.5f64..3.0, y_re in -0.3f64..0.3) {
        let f = Signal::sample_1d(-2.0, 1.0 / 256.0, 1025, |x| Complex64::new((-x * x).exp(), 0.0));
        let g = Signal::sample_1d(-2.0, 1.0 / 256.0, 1025, |x| Complex64::new(0.0, (w * x).sin()));
        let mut h = f.clone();
        for (z, (p, q)) in h.values.iter_mut().zip(f.values.iter().zip(&g.values)) {
            *z = p * a + q * b;
        }
        let spec = TransformSpec {
            q: vec![1.0],
            chi: Some(Cutoff { center: vec![0.0], inner: 0.5, outer: 1.0 }),
            lambdas: vec![8.0],
        };
        let y = [Complex64::new(y_re, 0.1)];
        let lhs = gaussian_transform(&h, &spec, &y, 8.0).unwrap();
        let rhs = gaussian_transform(&f, &spec, &y, 8.0).unwrap() * a + gaussian_transform(&g, &spec, &y, 8.0).unwrap() * b;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn kirchhoff_u_increases_below_one(s in 3.0f64..6.0, norm in 0.1f64..0.9, lambda in 4i64..40) {
        let data = SpectrumData::from_spec(&WeightSpec::Power { s, norm, n_max: 256 }).unwrap();
        let traj = integrate_a(&data, lambda, 1.0, 1e-3, Initial::Velocity).unwrap();
        prop_assert!(traj.check_invariants().is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn enorm_is_homogeneous(seed in any::<u64>(), c in -5.0f64..5.0) {
        let p = vdw_norm();
        let sgrid: Vec<f64> = (0..3).map(|j| j as f64 * 0.3 * p.sbar).collect();
        let u = random_profile(seed, p, &sgrid, 2, 4, 3, Variant::Plain).unwrap();
        for v in [Variant::Plain, Variant::Prime, Variant::One] {
            let a = enorm(&u.scale(c), p, v).unwrap();
            let b = c.abs() * enorm(&u, p, v).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "{v:?}: {a} vs {b}");
        }
    }

    #[test]
    fn plain_norm_is_submultiplicative(s1 in any::<u64>(), s2 in any::<u64>()) {
        let p = vdw_norm();
        let sgrid: Vec<f64> = (0..3).map(|j| j as f64 * 0.3 * p.sbar).collect();
        let u = random_profile(s1, p, &sgrid, 2, 4, 3, Variant::Plain).unwrap();
        let v = random_profile(s2, p, &sgrid, 2, 4, 3, Variant::Plain).unwrap();
        let lhs = enorm(&u.mul(&v), p, Variant::Plain).unwrap();
        let rhs = enorm(&u, p, Variant::Plain).unwrap() * enorm(&v, p, Variant::Plain).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn batches_do_not_depend_on_schedule(seed in any::<u64>()) {
        let p = vdw_norm();
        let sgrid: Vec<f64> = (0..2).map(|j| j as f64 * 0.4 * p.sbar).collect();
        let c2 = compute_c2(p.c1, 32, Exec::Sequential);
        let a = algebra_batch(p, c2, &sgrid, 3, 2, 8, seed, Exec::Sequential).unwrap();
        let b = algebra_batch(p, c2, &sgrid, 3, 2, 8, seed, Exec::default()).unwrap();
        prop_assert_eq!(a.worst_ratio, b.worst_ratio);
        prop_assert_eq!(compute_constants(40, 40, Exec::Sequential), compute_constants(40, 40, Exec::default()));
    }
}
