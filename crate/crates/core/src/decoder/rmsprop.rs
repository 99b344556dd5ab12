//! RMSProp: `acc ← ρ·acc + (1-ρ)·g²`, `θ ← θ - lr·g / (√acc + ε)`.

use super::{DecoderParams, ParamGrads};
use crate::error::{invalid, PactError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub acc: Vec<Vec<f64>>,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    /// Updates applied so far.
    pub steps: usize,
}

impl OptState {
    /// Zero accumulators with lr 1e-3, ρ 0.9, ε 1e-8.
    pub fn new(p: &DecoderParams) -> Self {
        Self::with_hyper(p, 1e-3, 0.9, 1e-8)
    }

    pub fn with_hyper(p: &DecoderParams, lr: f64, decay: f64, eps: f64) -> Self {
        Self {
            acc: p.params.iter().map(|t| vec![0.0; t.data.len()]).collect(),
            lr,
            decay,
            eps,
            steps: 0,
        }
    }
}

pub fn rmsprop_step(p: &mut DecoderParams, g: &ParamGrads, st: &mut OptState) -> Result<()> {
    if g.grads.len() != p.params.len() || st.acc.len() != p.params.len() {
        return invalid("gradient/optimizer state does not match the parameters");
    }
    for ((t, gr), acc) in p.params.iter().zip(&g.grads).zip(&st.acc) {
        if gr.len() != t.data.len() || acc.len() != t.data.len() {
            return invalid(format!("gradient for `{}` has the wrong length", t.name));
        }
    }
    if g.grads.iter().flatten().any(|v| !v.is_finite()) {
        return Err(PactError::Divergence {
            what: "RMSProp update",
            iteration: st.steps,
        });
    }
    let (rho, lr, eps) = (st.decay, st.lr, st.eps);
    for ((t, gr), acc) in p.params_mut().iter_mut().zip(&g.grads).zip(st.acc.iter_mut()) {
        for ((theta, &gi), a) in t.data.iter_mut().zip(gr).zip(acc.iter_mut()) {
            *a = rho * *a + (1.0 - rho) * gi * gi;
            *theta -= lr * gi / (a.sqrt() + eps);
        }
    }
    st.steps += 1;
    Ok(())
}
