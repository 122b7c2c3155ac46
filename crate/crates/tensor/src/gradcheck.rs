//! Central finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct Probe {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    /// `|a − n| / max(|a|, |n|, floor)`; the floor keeps vanishing gradients
    /// from turning rounding noise into huge relative errors.
    pub fn rel_err(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub probes: Vec<Probe>,
}

impl GradCheck {
    pub fn max_rel_err(&self, floor: f64) -> f64 {
        self.probes.iter().map(|p| p.rel_err(floor)).fold(0.0, f64::max)
    }

    pub fn worst(&self, floor: f64) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_err(floor).total_cmp(&b.rel_err(floor)))
    }
}

/// Compares `∂f/∂inputs` from [`Tensor::backward`] against central
/// differences with step `eps`. `select(input, numel)` picks which flat
/// indices of each input to probe.
pub fn check_gradients(
    inputs: &[Tensor],
    f: impl Fn() -> Result<Tensor>,
    eps: f64,
    mut select: impl FnMut(usize, usize) -> Vec<usize>,
) -> Result<GradCheck> {
    inputs.iter().for_each(Tensor::zero_grad);
    f()?.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    inputs.iter().for_each(Tensor::zero_grad);

    let _guard = crate::no_grad();
    let mut probes = Vec::new();
    for (ii, t) in inputs.iter().enumerate() {
        for idx in select(ii, t.numel()) {
            let orig = t.data()[idx];
            t.update_data(|d| d[idx] = orig + eps);
            let plus = f()?.item();
            t.update_data(|d| d[idx] = orig - eps);
            let minus = f()?.item();
            t.update_data(|d| d[idx] = orig);
            probes.push(Probe {
                input: ii,
                index: idx,
                analytic: analytic[ii][idx],
                numeric: (plus - minus) / (2.0 * eps),
            });
        }
    }
    Ok(GradCheck { probes })
}

/// Probes every index.
pub fn all_indices(_: usize, n: usize) -> Vec<usize> {
    (0..n).collect()
}
