//! Explicit fourth-order Runge-Kutta in the arc-length domain.
//!
//! Both transcriptions and the re-simulation diagnostics share these steps,
//! so a discretization bug would at least be a consistent one, and the order
//! property is tested once here.

use crate::scalar::Real;

/// One classical RK4 step of size `h` from `s` with state `x`.
///
/// `f(s, x)` evaluates the state derivative; controls are expected to be
/// captured by the closure and held constant across the four stages.
#[inline]
pub fn rk4_step<R: Real, const N: usize>(
    f: &mut impl FnMut(f64, &[R; N]) -> [R; N],
    s: f64,
    h: f64,
    x: &[R; N],
) -> [R; N] {
    let lift = |x: &[R; N], k: &[R; N], c: f64| {
        let mut y = *x;
        for i in 0..N {
            y[i] = y[i] + R::constant(c * h) * k[i];
        }
        y
    };
    let k1 = f(s, x);
    let k2 = f(s + 0.5 * h, &lift(x, &k1, 0.5));
    let k3 = f(s + 0.5 * h, &lift(x, &k2, 0.5));
    let k4 = f(s + h, &lift(x, &k3, 1.0));
    let mut out = *x;
    for i in 0..N {
        out[i] = out[i]
            + R::constant(h / 6.0)
                * (k1[i] + R::constant(2.0) * k2[i] + R::constant(2.0) * k3[i] + k4[i]);
    }
    out
}

/// Stage at which a guarded step left the admissible region (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageViolation {
    pub stage: usize,
}

/// RK4 step that checks every stage state with `admissible` before using it.
///
/// The speed floor of the spatial formulation is the canonical guard: the
/// derivative has a 1/v singularity, so a stage dipping below the floor must
/// abort with its position rather than produce garbage.
pub fn rk4_step_guarded<R: Real, const N: usize>(
    f: &mut impl FnMut(f64, &[R; N]) -> [R; N],
    admissible: &impl Fn(&[R; N]) -> bool,
    s: f64,
    h: f64,
    x: &[R; N],
) -> Result<[R; N], StageViolation> {
    let lift = |x: &[R; N], k: &[R; N], c: f64| {
        let mut y = *x;
        for i in 0..N {
            y[i] = y[i] + R::constant(c * h) * k[i];
        }
        y
    };
    if !admissible(x) {
        return Err(StageViolation { stage: 1 });
    }
    let k1 = f(s, x);
    let x2 = lift(x, &k1, 0.5);
    if !admissible(&x2) {
        return Err(StageViolation { stage: 2 });
    }
    let k2 = f(s + 0.5 * h, &x2);
    let x3 = lift(x, &k2, 0.5);
    if !admissible(&x3) {
        return Err(StageViolation { stage: 3 });
    }
    let k3 = f(s + 0.5 * h, &x3);
    let x4 = lift(x, &k3, 1.0);
    if !admissible(&x4) {
        return Err(StageViolation { stage: 4 });
    }
    let k4 = f(s + h, &x4);
    let mut out = *x;
    for i in 0..N {
        out[i] = out[i]
            + R::constant(h / 6.0)
                * (k1[i] + R::constant(2.0) * k2[i] + R::constant(2.0) * k3[i] + k4[i]);
    }
    Ok(out)
}
