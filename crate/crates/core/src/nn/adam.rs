//! Adam optimizer with bias correction.

use super::NetworkParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub hyper: AdamHyper,
}

impl OptimizerState {
    pub fn new(param_count: usize, hyper: AdamHyper) -> Self {
        OptimizerState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
            hyper,
        }
    }
}

/// One Adam update in place. Rejects non-finite gradients and parameter
/// blow-ups rather than letting them poison the run.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &[f64],
    state: &mut OptimizerState,
) -> Result<()> {
    if grads.len() != params.values.len() || grads.len() != state.first_moment.len() {
        return Err(Error::LengthMismatch);
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            epoch: state.step as usize,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let h = state.hyper;
    let bias1 = 1.0 - h.beta1.powi(t);
    let bias2 = 1.0 - h.beta2.powi(t);
    for (((&grad, value), m), v) in grads
        .iter()
        .zip(&mut params.values)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        let g = grad + h.weight_decay * *value;
        *m = h.beta1 * *m + (1.0 - h.beta1) * g;
        *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *value -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
    if !params.all_finite() {
        return Err(Error::Diverged {
            epoch: state.step as usize,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{EncoderSpec, HeadNorm, HeadSpec, NetworkSpec};

    fn params() -> NetworkParams {
        NetworkParams::init(
            NetworkSpec {
                encoder: EncoderSpec {
                    per_point_widths: vec![2],
                },
                head: HeadSpec {
                    hidden_widths: vec![],
                    output_dim: 1,
                    norm: HeadNorm::None,
                },
            },
            1,
            4,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = params();
        let before = p.values.clone();
        let mut state = OptimizerState::new(p.param_count(), AdamHyper::default());
        adam_step(&mut p, &vec![0.0; before.len()], &mut state).unwrap();
        assert_eq!(p.values, before);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // With constant gradient g and zero moments, bias correction gives
        // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
        let mut p = params();
        let before = p.values.clone();
        let hyper = AdamHyper {
            lr: 1e-3,
            ..AdamHyper::default()
        };
        let mut state = OptimizerState::new(p.param_count(), hyper);
        let grads = vec![0.37; before.len()];
        adam_step(&mut p, &grads, &mut state).unwrap();
        for (after, before) in p.values.iter().zip(&before) {
            let delta = before - after;
            assert!((delta - 1e-3).abs() < 1e-7, "delta {delta}");
        }
    }

    #[test]
    fn two_steps_match_hand_trace() {
        // Scalar Adam by hand: lr=0.1, b1=0.9, b2=0.999, eps=1e-8, g=1 then
        // g=-0.5, starting from p=0.
        let mut p = params();
        p.values.iter_mut().for_each(|v| *v = 0.0);
        let n = p.param_count();
        let hyper = AdamHyper {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        };
        let mut state = OptimizerState::new(n, hyper);

        adam_step(&mut p, &vec![1.0; n], &mut state).unwrap();
        // step 1: m=0.1, v=0.001; m_hat=1, v_hat=1; p = -0.1/(1+1e-8)
        let expect1 = -0.1 / (1.0 + 1e-8);
        assert!((p.values[0] - expect1).abs() < 1e-15);

        adam_step(&mut p, &vec![-0.5; n], &mut state).unwrap();
        // step 2: m = 0.9*0.1 + 0.1*(-0.5) = 0.04
        //         v = 0.999*0.001 + 0.001*0.25 = 0.001249
        //         m_hat = 0.04/(1-0.81) = 0.21052631...
        //         v_hat = 0.001249/(1-0.998001) = 0.62481240...
        let m_hat = 0.04 / (1.0 - 0.9f64.powi(2));
        let v_hat = 0.001249 / (1.0 - 0.999f64.powi(2));
        let expect2 = expect1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.values[0] - expect2).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = params();
        let n = p.param_count();
        let mut state = OptimizerState::new(n, AdamHyper::default());
        let mut grads = vec![0.0; n];
        grads[0] = f64::NAN;
        assert!(matches!(
            adam_step(&mut p, &grads, &mut state),
            Err(Error::Diverged { .. })
        ));
    }
}
