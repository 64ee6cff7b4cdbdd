use super::params::Parameterized;

/// Compares a reverse-mode gradient against central differences on every
/// coordinate. Returns the largest relative error, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`; any non-finite value yields infinity.
///
/// `f` must be deterministic and return the objective with its gradient.
pub fn grad_check<P, F>(f: F, params: &P, eps: f64) -> f64
where
    P: Parameterized + Clone,
    F: Fn(&P) -> (f64, P),
{
    let (_, grad) = f(params);
    let analytic = grad.flatten();
    let base = params.flatten();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let mut coords = base.clone();
    for i in 0..base.len() {
        coords[i] = base[i] + eps;
        probe.assign(&coords).expect("same shape");
        let plus = f(&probe).0;
        coords[i] = base[i] - eps;
        probe.assign(&coords).expect("same shape");
        let minus = f(&probe).0;
        coords[i] = base[i];

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        if !numeric.is_finite() || !a.is_finite() {
            return f64::INFINITY;
        }
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
