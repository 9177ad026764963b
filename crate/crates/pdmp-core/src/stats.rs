//! Small statistics toolbox: Kolmogorov–Smirnov tests and Monte Carlo
//! estimates with error bars. Only what the verification suites need.

/// How an estimate's stderr was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMethod {
    /// Independent samples; stderr = sd / sqrt(n).
    Iid,
    /// Batch means over a correlated time series.
    BatchMeans(usize),
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithError {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub method: EstimatorMethod,
}

impl EstimateWithError {
    pub fn z_score(&self, reference: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == reference {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - reference) / self.stderr
        }
    }
}

/// Plain i.i.d. sample mean with stderr.
pub fn iid_estimate(samples: &[f64]) -> EstimateWithError {
    let n = samples.len();
    assert!(n > 1, "need at least two samples");
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    EstimateWithError {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
        method: EstimatorMethod::Iid,
    }
}

/// Estimate from a list of (roughly independent) batch means.
pub fn batch_means_estimate(batch_means: &[f64]) -> EstimateWithError {
    let b = batch_means.len();
    assert!(b >= 2, "need at least two batches");
    let mean = batch_means.iter().sum::<f64>() / b as f64;
    let var = batch_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    EstimateWithError {
        mean,
        stderr: (var / b as f64).sqrt(),
        n: b,
        method: EstimatorMethod::BatchMeans(b),
    }
}

/// Kolmogorov distribution tail Q(lambda) = P(K > lambda), the asymptotic
/// p-value of the KS statistic.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_pvalue(d: f64, n_eff: f64) -> f64 {
    let sqrt_n = n_eff.sqrt();
    kolmogorov_tail((sqrt_n + 0.12 + 0.11 / sqrt_n) * d)
}

/// Two-sample Kolmogorov–Smirnov test; returns (D, asymptotic p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    (d, ks_pvalue(d, n_eff))
}

/// One-sample KS test against a CDF; returns (D, asymptotic p-value).
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    assert!(!samples.is_empty(), "empty sample");
    let mut xs = samples.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((f - i as f64 / n).abs());
    }
    (d, ks_pvalue(d, n))
}

/// CDF of Exp(rate).
pub fn exp_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - (-rate * x).exp()
        }
    }
}
