//! Gated recurrent unit used by the finger branches.
//!
//! The gating convention follows the update rule this network was designed
//! around: the update gate `z` weights the *previous* hidden state,
//!
//! ```text
//! r = σ(W_r x + U_r h + b_r)
//! z = σ(W_z x + U_z h + b_z)
//! h̃ = tanh(W_h x + r ⊙ U_h h + b_h)
//! h' = z ⊙ h + (1 − z) ⊙ h̃
//! y  = W_y h' + b_y
//! ```
//!
//! (Note this swaps the roles of `z` and `1 − z` relative to the common
//! GRU formulation; the readout `W_y`, `b_y` is shared across steps.)

use rand::Rng;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

/// Gate, candidate, and shared readout parameters of one GRU.
#[derive(Clone)]
pub struct GruParams<T: Element> {
    pub w_r: Tensor<T>,
    pub w_z: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_h: Tensor<T>,
    pub w_y: Tensor<T>,
    pub b_y: Tensor<T>,
}

impl<T: Element> GruParams<T> {
    /// Fresh parameters: gate weights uniform in ±√(1/d_h), biases zero.
    pub fn init<R: Rng>(d_in: usize, d_h: usize, d_out: usize, rng: &mut R) -> Self {
        let bound = T::from_f64((1.0 / d_h as f64).sqrt());
        let gate = |rng: &mut R| Tensor::rand_uniform(&[d_h, d_in], bound, rng).requires_grad();
        let state = |rng: &mut R| Tensor::rand_uniform(&[d_h, d_h], bound, rng).requires_grad();
        GruParams {
            w_r: gate(rng),
            w_z: gate(rng),
            w_h: gate(rng),
            u_r: state(rng),
            u_z: state(rng),
            u_h: state(rng),
            b_r: Tensor::zeros(&[d_h]).requires_grad(),
            b_z: Tensor::zeros(&[d_h]).requires_grad(),
            b_h: Tensor::zeros(&[d_h]).requires_grad(),
            w_y: Tensor::rand_uniform(&[d_out, d_h], bound, rng).requires_grad(),
            b_y: Tensor::zeros(&[d_out]).requires_grad(),
        }
    }

    /// All-zero parameters, mainly for degenerate-case tests.
    pub fn zeros(d_in: usize, d_h: usize, d_out: usize) -> Self {
        GruParams {
            w_r: Tensor::zeros(&[d_h, d_in]).requires_grad(),
            w_z: Tensor::zeros(&[d_h, d_in]).requires_grad(),
            w_h: Tensor::zeros(&[d_h, d_in]).requires_grad(),
            u_r: Tensor::zeros(&[d_h, d_h]).requires_grad(),
            u_z: Tensor::zeros(&[d_h, d_h]).requires_grad(),
            u_h: Tensor::zeros(&[d_h, d_h]).requires_grad(),
            b_r: Tensor::zeros(&[d_h]).requires_grad(),
            b_z: Tensor::zeros(&[d_h]).requires_grad(),
            b_h: Tensor::zeros(&[d_h]).requires_grad(),
            w_y: Tensor::zeros(&[d_out, d_h]).requires_grad(),
            b_y: Tensor::zeros(&[d_out]).requires_grad(),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_r.shape()[1]
    }

    pub fn d_h(&self) -> usize {
        self.w_r.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w_y.shape()[0]
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor<T>); 11] {
        [
            ("w_r", &self.w_r),
            ("w_z", &self.w_z),
            ("w_h", &self.w_h),
            ("u_r", &self.u_r),
            ("u_z", &self.u_z),
            ("u_h", &self.u_h),
            ("b_r", &self.b_r),
            ("b_z", &self.b_z),
            ("b_h", &self.b_h),
            ("w_y", &self.w_y),
            ("b_y", &self.b_y),
        ]
    }
}

/// Hidden state. Rank 1 `[d_h]` for a single sample or rank 2 `[N, d_h]`
/// for a batch; the initial state is always the zero vector.
#[derive(Clone)]
pub struct GruState<T: Element> {
    pub h: Tensor<T>,
}

impl<T: Element> GruState<T> {
    pub fn zero(d_h: usize) -> Self {
        GruState { h: Tensor::zeros(&[d_h]) }
    }

    pub fn zero_batched(batch: usize, d_h: usize) -> Self {
        GruState { h: Tensor::zeros(&[batch, d_h]) }
    }

    fn like_input(x: &Tensor<T>, d_h: usize) -> Self {
        match x.shape() {
            [_] => GruState::zero(d_h),
            [n, _] => GruState::zero_batched(*n, d_h),
            _ => GruState::zero(d_h),
        }
    }
}

/// One recurrence step; returns the new state and the readout `y`.
pub fn gru_step<T: Element>(
    tape: &Tape<T>,
    params: &GruParams<T>,
    h_prev: &GruState<T>,
    x: &Tensor<T>,
) -> Result<(GruState<T>, Tensor<T>)> {
    let d_in = params.d_in();
    let got = *x.shape().last().ok_or_else(|| {
        Error::dim("gru_step", "input must be rank 1 or 2".to_string())
    })?;
    if got != d_in {
        return Err(Error::dim(
            "gru_step",
            format!("input width {} does not match cell d_in {}", got, d_in),
        ));
    }

    let r = tape.sigmoid(&tape.add(
        &tape.fully_connected(x, &params.w_r, &params.b_r)?,
        &tape.linear(&h_prev.h, &params.u_r)?,
    )?)?;
    let z = tape.sigmoid(&tape.add(
        &tape.fully_connected(x, &params.w_z, &params.b_z)?,
        &tape.linear(&h_prev.h, &params.u_z)?,
    )?)?;
    let candidate = tape.tanh(&tape.add(
        &tape.fully_connected(x, &params.w_h, &params.b_h)?,
        &tape.mul(&r, &tape.linear(&h_prev.h, &params.u_h)?)?,
    )?)?;
    let ones = Tensor::full(z.shape(), T::one());
    let h = tape.add(
        &tape.mul(&z, &h_prev.h)?,
        &tape.mul(&tape.sub(&ones, &z)?, &candidate)?,
    )?;
    let y = tape.fully_connected(&h, &params.w_y, &params.b_y)?;
    Ok((GruState { h }, y))
}

/// Unrolls the cell over `inputs` starting from the zero state; returns
/// every per-step readout and the final hidden state.
pub fn gru_unroll<T: Element>(
    tape: &Tape<T>,
    params: &GruParams<T>,
    inputs: &[Tensor<T>],
) -> Result<(Vec<Tensor<T>>, GruState<T>)> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Usage("gru_unroll requires at least one input".into()))?;
    let state = GruState::like_input(first, params.d_h());
    gru_unroll_from(tape, params, state, inputs)
}

/// Unroll continuation from an explicit state (used for the
/// length-composability property and by callers that chain segments).
pub fn gru_unroll_from<T: Element>(
    tape: &Tape<T>,
    params: &GruParams<T>,
    mut state: GruState<T>,
    inputs: &[Tensor<T>],
) -> Result<(Vec<Tensor<T>>, GruState<T>)> {
    if inputs.is_empty() {
        return Err(Error::Usage("gru_unroll requires at least one input".into()));
    }
    let mut outputs = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (next, y) = gru_step(tape, params, &state, x)?;
        state = next;
        outputs.push(y);
    }
    Ok((outputs, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_parameters_give_half_gates_and_zero_outputs() {
        let tape = Tape::<f64>::new();
        let params = GruParams::zeros(3, 4, 2);
        let x = Tensor::from_vec(&[3], vec![0.7, -1.3, 2.2]).unwrap();
        let state = GruState::zero(4);

        // With all parameters zero: r = z = σ(0) = 0.5, h̃ = tanh(0) = 0,
        // so h = 0.5·0 + 0.5·0 = 0 and y = 0.
        let (next, y) = gru_step(&tape, &params, &state, &x).unwrap();
        assert!(next.h.to_vec().iter().all(|&v| v == 0.0));
        assert!(y.to_vec().iter().all(|&v| v == 0.0));

        let r = {
            let t = Tape::<f64>::no_grad();
            t.sigmoid(&t.add(
                &t.fully_connected(&x, &params.w_r, &params.b_r).unwrap(),
                &t.linear(&state.h, &params.u_r).unwrap(),
            ).unwrap())
            .unwrap()
        };
        assert!(r.to_vec().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn saturated_update_gate_carries_previous_state() {
        let tape = Tape::<f64>::new();
        let mut params = GruParams::zeros(3, 4, 2);
        params.b_z = Tensor::full(&[4], 40.0).requires_grad();
        let x = Tensor::from_vec(&[3], vec![0.3, 0.1, -0.5]).unwrap();
        let h_prev = GruState {
            h: Tensor::from_vec(&[4], vec![0.2, -0.4, 0.9, -1.0]).unwrap(),
        };
        let (next, _) = gru_step(&tape, &params, &h_prev, &x).unwrap();
        for (a, b) in next.h.to_vec().iter().zip(h_prev.h.to_vec()) {
            assert!((a - b).abs() < 1e-6, "update gate at 1 must carry h_prev");
        }
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut r = rng(11);
        for _ in 0..50 {
            let params = GruParams::<f64>::init(3, 4, 3, &mut r);
            let x = Tensor::rand_uniform(&[3], 1.5, &mut r);
            let h0 = Tensor::rand_uniform(&[4], 1.0, &mut r);

            let tape = Tape::no_grad();
            let (state, y) = gru_step(&tape, &params, &GruState { h: h0.clone() }, &x).unwrap();

            let oracle = check::gru_step_scalar(&check::GruScalarParams::from_params(&params), &h0.to_vec(), &x.to_vec());
            for (a, b) in state.h.to_vec().iter().zip(&oracle.0) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in y.to_vec().iter().zip(&oracle.1) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_gates_reduce_to_vanilla_rnn() {
        // Forcing r → 1 and z → 0 collapses the cell to
        // h' = tanh(W_h x + U_h h + b_h), y = W_y h' + b_y.
        let mut r = rng(5);
        let mut params = GruParams::<f64>::init(3, 4, 2, &mut r);
        params.b_r = Tensor::full(&[4], 60.0).requires_grad();
        params.b_z = Tensor::full(&[4], -60.0).requires_grad();
        let x = Tensor::rand_uniform(&[3], 1.0, &mut r);
        let h0 = Tensor::rand_uniform(&[4], 1.0, &mut r);

        let tape = Tape::no_grad();
        let (state, y) = gru_step(&tape, &params, &GruState { h: h0.clone() }, &x).unwrap();

        let (h_ref, y_ref) = check::vanilla_rnn_scalar(
            &params.w_h.to_vec(),
            &params.u_h.to_vec(),
            &params.b_h.to_vec(),
            &params.w_y.to_vec(),
            &params.b_y.to_vec(),
            4,
            3,
            2,
            &h0.to_vec(),
            &x.to_vec(),
        );
        for (a, b) in state.h.to_vec().iter().zip(&h_ref) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in y.to_vec().iter().zip(&y_ref) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unroll_length_one_equals_single_step() {
        let mut r = rng(3);
        let params = GruParams::<f64>::init(3, 4, 2, &mut r);
        let x = Tensor::rand_uniform(&[3], 1.0, &mut r);

        let t1 = Tape::no_grad();
        let (ys, state) = gru_unroll(&t1, &params, std::slice::from_ref(&x)).unwrap();
        let t2 = Tape::no_grad();
        let (state2, y2) = gru_step(&t2, &params, &GruState::zero(4), &x).unwrap();

        assert_eq!(ys.len(), 1);
        assert_eq!(ys[0].to_vec(), y2.to_vec());
        assert_eq!(state.h.to_vec(), state2.h.to_vec());
    }

    #[test]
    fn unroll_matches_manually_chained_steps() {
        let mut r = rng(4);
        let params = GruParams::<f64>::init(3, 4, 2, &mut r);
        let xs: Vec<Tensor<f64>> = (0..3).map(|_| Tensor::rand_uniform(&[3], 1.0, &mut r)).collect();

        let t1 = Tape::no_grad();
        let (ys, _) = gru_unroll(&t1, &params, &xs).unwrap();

        let t2 = Tape::no_grad();
        let mut state = GruState::zero(4);
        for (x, y_unrolled) in xs.iter().zip(&ys) {
            let (next, y) = gru_step(&t2, &params, &state, x).unwrap();
            state = next;
            assert_eq!(y.to_vec(), y_unrolled.to_vec());
        }
    }

    #[test]
    fn empty_unroll_is_a_usage_error() {
        let tape = Tape::<f64>::new();
        let params = GruParams::zeros(3, 4, 2);
        assert!(matches!(
            gru_unroll(&tape, &params, &[]),
            Err(crate::error::Error::Usage(_))
        ));
    }

    #[test]
    fn bptt_gradients_match_finite_differences_over_length_four_unroll() {
        let mut r = rng(9);
        let params = GruParams::<f64>::init(3, 4, 2, &mut r);
        let xs: Vec<Tensor<f64>> = (0..4).map(|_| Tensor::rand_uniform(&[3], 1.0, &mut r)).collect();

        let loss = |params: &GruParams<f64>, xs: &[Tensor<f64>]| -> f64 {
            let tape = Tape::no_grad();
            let (ys, state) = gru_unroll(&tape, &params.clone(), xs).unwrap();
            let mut parts: Vec<&Tensor<f64>> = ys.iter().collect();
            parts.push(&state.h);
            tape.sum(&tape.concat(&parts, 0).unwrap()).unwrap().item()
        };

        let tape = Tape::new();
        let (ys, state) = gru_unroll(&tape, &params, &xs).unwrap();
        let mut parts: Vec<&Tensor<f64>> = ys.iter().collect();
        parts.push(&state.h);
        let seed = tape.sum(&tape.concat(&parts, 0).unwrap()).unwrap();
        tape.backward(&seed).unwrap();

        // Includes U_h, whose gradient flows through the reset-gate product.
        for (name, tensor) in params.tensors() {
            let grad = tensor.grad().unwrap_or_else(|| panic!("{name} missing grad"));
            for idx in check::probe_indices(tensor.numel(), 6) {
                let fd = check::finite_diff(tensor, idx, 1e-5, || loss(&params, &xs));
                let err = check::rel_err(grad[idx], fd);
                assert!(err < 1e-4, "{name}[{idx}]: analytic {} vs fd {} (rel {err})", grad[idx], fd);
            }
        }
    }

    #[test]
    fn unroll_composes_across_segment_boundaries() {
        let mut r = rng(13);
        let params = GruParams::<f64>::init(3, 5, 2, &mut r);
        let xs: Vec<Tensor<f64>> = (0..6).map(|_| Tensor::rand_uniform(&[3], 1.0, &mut r)).collect();

        let t = Tape::no_grad();
        let (full_ys, full_state) = gru_unroll(&t, &params, &xs).unwrap();
        let (head_ys, head_state) = gru_unroll(&t, &params, &xs[..2]).unwrap();
        let (tail_ys, tail_state) = gru_unroll_from(&t, &params, head_state, &xs[2..]).unwrap();

        let chained: Vec<Vec<f64>> = head_ys.iter().chain(tail_ys.iter()).map(|y| y.to_vec()).collect();
        for (a, b) in full_ys.iter().map(|y| y.to_vec()).zip(chained) {
            assert_eq!(a, b);
        }
        assert_eq!(full_state.h.to_vec(), tail_state.h.to_vec());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gate_ranges_and_state_convexity(seed in 0u64..1000) {
            let mut r = rng(seed);
            let params = GruParams::<f64>::init(4, 5, 2, &mut r);
            let x = Tensor::rand_uniform(&[4], 3.0, &mut r);
            let h0 = Tensor::rand_uniform(&[5], 2.0, &mut r);

            let tape = Tape::no_grad();
            let fc = |w, b| tape.fully_connected(&x, w, b).unwrap();
            let r_gate = tape.sigmoid(&tape.add(&fc(&params.w_r, &params.b_r), &tape.linear(&h0, &params.u_r).unwrap()).unwrap()).unwrap();
            let z_gate = tape.sigmoid(&tape.add(&fc(&params.w_z, &params.b_z), &tape.linear(&h0, &params.u_z).unwrap()).unwrap()).unwrap();
            let cand = tape.tanh(&tape.add(&fc(&params.w_h, &params.b_h), &tape.mul(&r_gate, &tape.linear(&h0, &params.u_h).unwrap()).unwrap()).unwrap()).unwrap();

            for &v in r_gate.to_vec().iter().chain(z_gate.to_vec().iter()) {
                prop_assert!(v > 0.0 && v < 1.0);
            }
            for &v in cand.to_vec().iter() {
                prop_assert!(v > -1.0 && v < 1.0);
            }

            let (next, _) = gru_step(&tape, &params, &GruState { h: h0.clone() }, &x).unwrap();
            for ((&h, &prev), &cand_v) in next.h.to_vec().iter()
                .zip(h0.to_vec().iter())
                .zip(cand.to_vec().iter())
            {
                let lo = prev.min(cand_v) - 1e-12;
                let hi = prev.max(cand_v) + 1e-12;
                prop_assert!(h >= lo && h <= hi, "state must interpolate h_prev and candidate");
            }
        }
    }
}
