use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orders above this need [`VolterraFunction::with_high_order`].
pub const DEFAULT_MAX_VOLTERRA_ORDER: usize = 3;

/// Truncated Volterra series over a window of `window_len` scalar inputs.
///
/// `kernels[k - 1]` holds `h_k` densely in row-major order over
/// `(i_1, ..., i_k)`, so it has `window_len^k` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraFunction {
    pub h0: f64,
    pub kernels: Vec<Vec<f64>>,
    pub window_len: usize,
}

impl VolterraFunction {
    pub fn new(h0: f64, kernels: Vec<Vec<f64>>, window_len: usize) -> Result<Self> {
        if kernels.len() > DEFAULT_MAX_VOLTERRA_ORDER {
            return Err(Error::Contract(format!(
                "Volterra order {} exceeds {DEFAULT_MAX_VOLTERRA_ORDER}; use with_high_order",
                kernels.len()
            )));
        }
        Self::with_high_order(h0, kernels, window_len)
    }

    /// Same as [`new`](Self::new) without the order cap.
    pub fn with_high_order(h0: f64, kernels: Vec<Vec<f64>>, window_len: usize) -> Result<Self> {
        for (i, h) in kernels.iter().enumerate() {
            let k = i + 1;
            let want = window_len
                .checked_pow(k as u32)
                .ok_or_else(|| Error::Contract(format!("h_{k} is too large to store")))?;
            if h.len() != want {
                return Err(Error::Contract(format!(
                    "h_{k} has {} entries, expected {want}",
                    h.len()
                )));
            }
        }
        if !h0.is_finite() || kernels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Contract("Volterra coefficients must be finite".into()));
        }
        Ok(Self {
            h0,
            kernels,
            window_len,
        })
    }

    pub fn order(&self) -> usize {
        self.kernels.len()
    }

    /// `sum_k (rho_k / k!) |h_k|^2` over the stored orders, with `|h_0| = |h0|`.
    pub fn weighted_norm_sq(&self, rho: &[f64]) -> Result<f64> {
        if rho.len() < self.order() + 1 {
            return Err(Error::Contract(format!(
                "need {} weights, got {}",
                self.order() + 1,
                rho.len()
            )));
        }
        let mut total = rho[0] * self.h0 * self.h0;
        let mut fact = 1.0;
        for (i, h) in self.kernels.iter().enumerate() {
            let k = i + 1;
            fact *= k as f64;
            total += rho[k] / fact * h.iter().map(|x| x * x).sum::<f64>();
        }
        Ok(total)
    }

    /// Contribution of the order-`k` term alone (`k >= 1`).
    pub fn term(&self, k: usize, u: &[f64]) -> f64 {
        let h = &self.kernels[k - 1];
        let n = self.window_len;
        // prod_j u_{i_j} accumulated over the k-fold index in row-major order
        let mut total = 0.0;
        let mut idx = vec![0usize; k];
        for &coef in h {
            if coef != 0.0 {
                total += coef * idx.iter().map(|&i| u[i]).product::<f64>();
            }
            for d in (0..k).rev() {
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
            }
        }
        total
    }
}

/// `h0 + sum_k sum_{i_1..i_k} h_k(i_1..i_k) u_{i_1} ... u_{i_k}` for one window.
pub fn eval_volterra(v: &VolterraFunction, window: &[f64]) -> Result<f64> {
    if window.len() != v.window_len {
        return Err(Error::Contract(format!(
            "Volterra window has {} entries, expected {}",
            window.len(),
            v.window_len
        )));
    }
    Ok(v.h0 + (1..=v.order()).map(|k| v.term(k, window)).sum::<f64>())
}
