//! Classical fixed-step RK4 on flat state vectors.

use std::ops::{Add, Mul};

/// One RK4 step of `y' = f(t, y)`; `f` writes the derivative into its
/// output slice.
pub fn rk4_step<T, F>(y: &mut [T], t: f64, dt: f64, mut f: F)
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
    F: FnMut(f64, &[T], &mut [T]),
{
    let n = y.len();
    let y0 = y.to_vec();
    let mut k1 = y0.clone();
    let mut k2 = y0.clone();
    let mut k3 = y0.clone();
    let mut k4 = y0.clone();
    let mut tmp = y0.clone();

    f(t, &y0, &mut k1);
    for i in 0..n {
        tmp[i] = y0[i] + k1[i] * (0.5 * dt);
    }
    f(t + 0.5 * dt, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = y0[i] + k2[i] * (0.5 * dt);
    }
    f(t + 0.5 * dt, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = y0[i] + k3[i] * dt;
    }
    f(t + dt, &tmp, &mut k4);
    for i in 0..n {
        y[i] = y0[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0);
    }
}

/// Number of fixed steps of size close to `dt` covering `[0, t_end]`; the
/// step is shrunk so the last one lands exactly on `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, dt);
    }
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}
