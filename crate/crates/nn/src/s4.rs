//! Diagonal state-space layer: kernel construction plus a step-by-step
//! recurrence oracle, both over one channel of states.
//!
//! Continuous dynamics s'(t) = lambda * s(t) + b * x(t), y = sum_n c_n s_n,
//! sampled every `dt` seconds: the discrete pole is abar = exp(dt * lambda)
//! and the input enters once per step scaled by b, so the impulse response
//! is K[t] = sum_n c_n * b_n * abar_n^t, a sum of geometric series.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    /// Continuous eigenvalues; all must have negative real part (these are
    /// real, so simply negative).
    pub rates: Vec<f64>,
    pub input_weights: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub dt: f64,
    /// Longest kernel this layer may materialize.
    pub l_max: usize,
}

impl StateSpace {
    pub fn new(
        rates: Vec<f64>,
        input_weights: Vec<f64>,
        output_weights: Vec<f64>,
        dt: f64,
        l_max: usize,
    ) -> Result<Self> {
        if rates.is_empty() || rates.len() != input_weights.len() || rates.len() != output_weights.len() {
            return Err(Error::spec(format!(
                "state space needs equal nonzero parameter lengths, got {}/{}/{}",
                rates.len(),
                input_weights.len(),
                output_weights.len()
            )));
        }
        if !(dt > 0.0) || l_max == 0 {
            return Err(Error::spec("state space needs dt > 0 and l_max >= 1"));
        }
        for (i, &r) in rates.iter().enumerate() {
            if !r.is_finite() || r >= 0.0 {
                return Err(Error::UnstableState {
                    msg: format!("rate {i} is {r}; every eigenvalue must be negative"),
                });
            }
        }
        Ok(StateSpace {
            rates,
            input_weights,
            output_weights,
            dt,
            l_max,
        })
    }

    fn check_length(&self, length: usize) -> Result<()> {
        if length == 0 || length > self.l_max {
            return Err(Error::length(format!(
                "kernel length {length} outside 1..={}",
                self.l_max
            )));
        }
        Ok(())
    }

    fn poles(&self) -> Vec<f64> {
        self.rates.iter().map(|&r| (self.dt * r).exp()).collect()
    }

    /// Impulse response K[t] = sum_n c_n b_n abar_n^t for t in 0..length.
    pub fn kernel(&self, length: usize) -> Result<Vec<f64>> {
        self.check_length(length)?;
        let poles = self.poles();
        let mut k = vec![0.0; length];
        for ((&abar, &bw), &cw) in poles
            .iter()
            .zip(&self.input_weights)
            .zip(&self.output_weights)
        {
            let mut pw = cw * bw;
            for slot in k.iter_mut() {
                *slot += pw;
                pw *= abar;
            }
        }
        Ok(k)
    }

    /// Causal convolution of the input with the materialized kernel.
    pub fn convolve(&self, input: &[f64]) -> Result<Vec<f64>> {
        let k = self.kernel(input.len())?;
        let mut y = vec![0.0; input.len()];
        for (t, slot) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (s, &kv) in k[..=t].iter().enumerate() {
                acc += kv * input[t - s];
            }
            *slot = acc;
        }
        Ok(y)
    }

    /// Step-by-step recurrence: s[t] = abar * s[t-1] + b * x[t],
    /// y[t] = sum_n c_n s_n[t]. Must match `convolve` exactly up to
    /// floating-point reassociation.
    pub fn scan(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_length(input.len())?;
        let poles = self.poles();
        let n = self.rates.len();
        let mut state = vec![0.0; n];
        let mut y = vec![0.0; input.len()];
        for (t, &x) in input.iter().enumerate() {
            let mut out = 0.0;
            for i in 0..n {
                state[i] = poles[i] * state[i] + self.input_weights[i] * x;
                out += self.output_weights[i] * state[i];
            }
            y[t] = out;
        }
        Ok(y)
    }
}
