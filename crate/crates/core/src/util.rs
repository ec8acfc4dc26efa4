//! Small numeric helpers shared across modules.

/// Plain left-to-right dot product.
///
/// The leader recursion and the compensator bottom rows must evaluate the
/// same coefficient row the same way so that matched trajectories stay
/// matched to roundoff; both call this.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Sign function with `sgn(0) = 0` (the Filippov selection at the
/// discontinuity). `f64::signum` maps `0.0` to `1.0`, which would kick a
/// trajectory off the consensus manifold.
pub(crate) fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Saturation with boundary layer `eps`: linear inside `|x| <= eps`,
/// `±1` outside.
pub(crate) fn sat(x: f64, eps: f64) -> f64 {
    if x.abs() <= eps {
        x / eps
    } else {
        signum0(x)
    }
}
