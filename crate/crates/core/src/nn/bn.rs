//! Batch normalization over `rows × channels` activations.

pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, Default)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Statistics used for normalization (batch or running).
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub out: Vec<f64>,
    pub batch_stats: bool,
}

/// Normalize every channel. With `running = None` the batch statistics
/// (biased variance) are used, otherwise the given running statistics.
pub fn bn_forward(x: &[f64], channels: usize, gamma: &[f64], beta: &[f64], running: Option<(&[f64], &[f64])>) -> BnCache {
    let rows = if channels == 0 { 0 } else { x.len() / channels };
    let (mean, var, batch_stats) = match running {
        Some((m, v)) => (m.to_vec(), v.to_vec(), false),
        None => {
            let mut mean = vec![0.0; channels];
            let mut var = vec![0.0; channels];
            for r in 0..rows {
                for (c, m) in mean.iter_mut().enumerate() {
                    *m += x[r * channels + c];
                }
            }
            let n = rows.max(1) as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            for r in 0..rows {
                for (c, v) in var.iter_mut().enumerate() {
                    let d = x[r * channels + c] - mean[c];
                    *v += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= n);
            (mean, var, true)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..channels {
            let i = r * channels + c;
            xhat[i] = (x[i] - mean[c]) * inv_std[c];
            out[i] = gamma[c] * xhat[i] + beta[c];
        }
    }
    BnCache { xhat, inv_std, mean, var, out, batch_stats }
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn bn_backward(dout: &[f64], cache: &BnCache, gamma: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let channels = gamma.len();
    let rows = if channels == 0 { 0 } else { dout.len() / channels };
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    let mut sum_dxhat = vec![0.0; channels];
    let mut sum_dxhat_xhat = vec![0.0; channels];
    for r in 0..rows {
        for c in 0..channels {
            let i = r * channels + c;
            dgamma[c] += dout[i] * cache.xhat[i];
            dbeta[c] += dout[i];
            let dxh = dout[i] * gamma[c];
            sum_dxhat[c] += dxh;
            sum_dxhat_xhat[c] += dxh * cache.xhat[i];
        }
    }
    let mut dx = vec![0.0; dout.len()];
    let n = rows.max(1) as f64;
    for r in 0..rows {
        for c in 0..channels {
            let i = r * channels + c;
            let dxh = dout[i] * gamma[c];
            dx[i] = if cache.batch_stats {
                cache.inv_std[c] / n * (n * dxh - sum_dxhat[c] - cache.xhat[i] * sum_dxhat_xhat[c])
            } else {
                dxh * cache.inv_std[c]
            };
        }
    }
    (dx, dgamma, dbeta)
}
