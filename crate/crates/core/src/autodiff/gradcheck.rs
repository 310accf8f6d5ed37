use super::{AutodiffError, Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|g_a − g_n| / max(1e-8, |g_a| + |g_n|)` over checked coordinates.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±eps probes changed a relu or max decision.
    pub skipped: usize,
    /// `(parameter, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

fn evaluate<F>(f: &F, params: &[Tensor<f64>]) -> Result<(f64, u64, Vec<Tensor<f64>>), AutodiffError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut g = Graph::with_kink_tracking();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(AutodiffError::NonFinite {
            at: "loss".to_string(),
        });
    }
    g.backward(loss)?;
    let grads = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros_like(p)))
        .collect();
    Ok((value, g.kink_signature(), grads))
}

/// Compare reverse-mode gradients of `f` against central differences.
///
/// `f` receives a fresh graph and the parameters registered as leaves, and
/// returns the scalar loss. A coordinate is excluded when either probe
/// `θ ± eps` lands on a different side of any relu or max kink than `θ`.
///
/// ```
/// use kgat::autodiff::{grad_check, Tensor};
///
/// let x = Tensor::scalar(1.0);
/// let report = grad_check(
///     |g, p| {
///         let zero = Tensor::scalar(0.0);
///         g.mse_loss(p[0], &zero)
///     },
///     &[x],
///     1e-5,
/// )
/// .unwrap();
/// assert!(report.max_rel_error <= 1e-9);
/// ```
pub fn grad_check<F>(
    f: F,
    params: &[Tensor<f64>],
    eps: f64,
) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, AutodiffError>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(AutodiffError::InvalidEps(eps));
    }
    let (_, base_sig, analytic) = evaluate(&f, params)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    let mut probe = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for k in 0..p.numel() {
            let orig = p.data()[k];
            probe[pi].data_mut()[k] = orig + eps;
            let (plus, sig_plus, _) = evaluate(&f, &probe)?;
            probe[pi].data_mut()[k] = orig - eps;
            let (minus, sig_minus, _) = evaluate(&f, &probe)?;
            probe[pi].data_mut()[k] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let exact = analytic[pi].data()[k];
            let rel = (exact - numeric).abs() / (exact.abs() + numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((pi, k));
            }
        }
    }
    Ok(report)
}
