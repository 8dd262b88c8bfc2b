//! Pose regression losses: robust per-component loss, summed globally
//! (ensemble output) and locally (palm + finger branches), combined as
//! L = L_g + λ·L_l and averaged over the batch.

use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::ForwardOutput;
use crate::tensor::{Tape, Tensor};

/// Knee of the piecewise loss: quadratic inside |x| < 0.01, linear outside.
pub const SMOOTH_L1_DELTA: f64 = 0.01;

/// Robust scalar loss: `0.5x²` for `|x| < 0.01`, else `0.01(|x| − 0.005)`.
/// Even in `x` and continuous at the knee (both branches give 5e-5).
pub fn smooth_l1<T: Element>(x: T) -> T {
    let delta = T::from_f64(SMOOTH_L1_DELTA);
    let half = T::from_f64(0.5);
    let a = x.abs();
    if a < delta {
        half * x * x
    } else {
        delta * (a - half * delta)
    }
}

/// Derivative of [`smooth_l1`]: `x` inside the knee, `±0.01` outside.
pub fn smooth_l1_grad<T: Element>(x: T) -> T {
    let delta = T::from_f64(SMOOTH_L1_DELTA);
    if x.abs() < delta {
        x
    } else if x > T::zero() {
        delta
    } else {
        -delta
    }
}

/// Ground-truth targets shaped like a forward pass's outputs.
pub struct PoseTargets<T: Element> {
    pub global: Tensor<T>,
    pub palm: Tensor<T>,
    pub finger_blocks: Vec<Tensor<T>>,
}

/// L = (L_g + λ·L_l) / batch, with L_g the smooth loss summed over all 3T
/// global components and L_l the palm-branch term plus every finger
/// branch's local components.
pub fn total_loss<T: Element>(
    tape: &Tape<T>,
    output: &ForwardOutput<T>,
    targets: &PoseTargets<T>,
    lambda: T,
) -> Result<Tensor<T>> {
    if output.finger_blocks.len() != targets.finger_blocks.len() {
        return Err(Error::dim(
            "total_loss",
            format!(
                "{} finger blocks predicted, {} target blocks",
                output.finger_blocks.len(),
                targets.finger_blocks.len()
            ),
        ));
    }
    let batch = output.global.shape()[0];
    let global_loss = tape.smooth_l1_sum(&output.global, &targets.global)?;
    let mut local_loss = tape.smooth_l1_sum(&output.palm_local, &targets.palm)?;
    for (pred, target) in output.finger_blocks.iter().zip(&targets.finger_blocks) {
        local_loss = tape.add(&local_loss, &tape.smooth_l1_sum(pred, target)?)?;
    }
    let combined = tape.add(&global_loss, &tape.scale(&local_loss, lambda)?)?;
    tape.scale(&combined, T::one() / T::from_f64(batch as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check;
    use proptest::prelude::*;

    #[test]
    fn zero_input_gives_zero() {
        assert_eq!(smooth_l1(0.0f64), 0.0);
    }

    #[test]
    fn continuous_at_the_knee() {
        // Quadratic branch at the knee: 0.5 · 0.01² = 5e-5.
        // Linear branch at the knee: 0.01 · (0.01 − 0.005) = 5e-5.
        // (The linear branch is the symmetric-continuous reading
        // 0.01(|x| − 0.005); the asymmetric variant 0.01|x − 0.005| would
        // jump at the knee for negative x.)
        let quadratic = 0.5 * 0.01f64 * 0.01;
        let linear = 0.01 * (0.01 - 0.005);
        assert_eq!(quadratic, 5e-5);
        assert_eq!(linear, 5e-5);
        assert!((smooth_l1(0.01f64) - 5e-5).abs() < 1e-18);
        assert!((smooth_l1(0.01f64 - 1e-12) - 5e-5).abs() < 1e-13);
    }

    #[test]
    fn linear_region_values() {
        assert!((smooth_l1(0.1f64) - 9.5e-4).abs() < 1e-15);
        assert!((smooth_l1(-0.1f64) - 9.5e-4).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences_across_the_knee() {
        for &x in &[-0.1, -0.011, -0.01, -0.005, 0.0, 0.003, 0.01, 0.02, 0.5] {
            let h = 1e-5;
            let fd = (smooth_l1(x + h) - smooth_l1(x - h)) / (2.0 * h);
            let err = check::rel_err(smooth_l1_grad(x), fd);
            assert!(err < 1e-3, "x={x}: analytic {} vs fd {fd}", smooth_l1_grad(x));
        }
    }

    proptest! {
        #[test]
        fn even_and_nonnegative(x in -2.0f64..2.0) {
            prop_assert_eq!(smooth_l1(x), smooth_l1(-x));
            prop_assert!(smooth_l1(x) >= 0.0);
        }
    }
}
