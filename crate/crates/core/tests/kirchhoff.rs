use cauchy_lab::exec::Exec;
use cauchy_lab::kirchhoff::*;

fn power() -> SpectrumData {
    SpectrumData::from_spec(&WeightSpec::Power { s: 4.0, norm: 0.5, n_max: 4096 }).unwrap()
}

#[test]
fn power_law_bound_holds_and_low_modes_converge() {
    let rep = verify_bound_and_limit(&power(), &[16, 32, 64, 128], 1.0, 1e-4, 2, Exec::default()).unwrap();
    for r in &rep.rows {
        assert!(r.pass, "{r:?}");
    }
    assert!(rep.residuals_decreasing, "{:?}", rep.rows);
}

#[test]
fn single_pair_does_not_converge() {
    let d = SpectrumData::from_spec(&WeightSpec::Single { n: 1, w: 1.0 }).unwrap();
    let rep = verify_bound_and_limit(&d, &[16, 32, 64], 10.0, 1e-3, 1, Exec::Sequential).unwrap();
    let expect = 1f64.asinh().sinh() * 0.5f64.sqrt();
    for r in &rep.rows {
        assert!((r.a - 1f64.asinh()).abs() < 1e-6);
        assert!((r.residual_u - expect).abs() < 1e-6, "{r:?}");
    }
}

#[test]
fn closed_form_agrees_with_direct_modes() {
    let d = power();
    for lambda in [8i64, 64] {
        let run = direct_mode_ode(&d, lambda, 2.0, 1e-4, 2000, Initial::Velocity).unwrap();
        let traj = integrate_a(&d, lambda, 2.0, 1e-4, Initial::Velocity).unwrap();
        let mut worst: f64 = 0.0;
        for (t, snap) in run.tgrid.iter().zip(&run.snapshots) {
            let cf = closed_form_state(&traj, &d, *t).unwrap();
            for (a, b) in cf.iter().zip(snap) {
                worst = worst.max((a.u - b.u).norm()).max((a.v - b.v).norm());
            }
        }
        assert!(worst <= 1e-8, "lambda {lambda}: {worst:e}");
        let e0 = run.energy[0];
        let drift = run.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-6, "drift {drift:e}");
        assert!((e0 - (1.0 + d.filtered_norm2(lambda))).abs() < 1e-14);
    }
}
