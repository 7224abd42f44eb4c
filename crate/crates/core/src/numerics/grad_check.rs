use super::ParamGroup;

/// Per-group outcome of a finite-difference gradient check.
#[derive(Clone, Debug)]
pub struct GroupDeviation {
    pub name: String,
    pub max_rel: f64,
}

/// Relative deviation used throughout: `|a - n| / max(|a|, |n|, 1e-8)`.
#[inline]
pub fn relative_deviation(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradients stored in `params[*].grad` against central
/// finite differences of `loss_fn`, entry by entry. Returns the maximum
/// relative deviation over all entries.
pub fn grad_check<F>(loss_fn: F, params: &mut [ParamGroup], probe_eps: f64) -> f64
where
    F: FnMut(&[ParamGroup]) -> f64,
{
    grad_check_by_group(loss_fn, params, probe_eps)
        .iter()
        .map(|g| g.max_rel)
        .fold(0.0, f64::max)
}

pub fn grad_check_by_group<F>(mut loss_fn: F, params: &mut [ParamGroup], probe_eps: f64) -> Vec<GroupDeviation>
where
    F: FnMut(&[ParamGroup]) -> f64,
{
    assert!(probe_eps > 0.0, "probe_eps must be positive");
    let mut out = Vec::with_capacity(params.len());
    for g in 0..params.len() {
        let mut worst: f64 = 0.0;
        for j in 0..params[g].value.len() {
            let orig = params[g].value.as_slice()[j];
            params[g].value.as_mut_slice()[j] = orig + probe_eps;
            let plus = loss_fn(params);
            params[g].value.as_mut_slice()[j] = orig - probe_eps;
            let minus = loss_fn(params);
            params[g].value.as_mut_slice()[j] = orig;
            let numeric = (plus - minus) / (2.0 * probe_eps);
            let analytic = params[g].grad.as_slice()[j];
            worst = worst.max(relative_deviation(analytic, numeric));
        }
        out.push(GroupDeviation {
            name: params[g].name.clone(),
            max_rel: worst,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn half_norm_sq(p: &[ParamGroup]) -> f64 {
        p.iter()
            .flat_map(|g| g.value.as_slice())
            .map(|v| 0.5 * v * v)
            .sum()
    }

    fn quadratic_params() -> Vec<ParamGroup> {
        let mut a = ParamGroup::new("a", Matrix::from_vec(2, 2, vec![0.5, -1.5, 2.0, 0.25]).unwrap());
        let mut b = ParamGroup::new("b", Matrix::column(&[3.0, -0.75]));
        a.grad = a.value.clone();
        b.grad = b.value.clone();
        vec![a, b]
    }

    #[test]
    fn exact_gradient_passes() {
        let mut params = quadratic_params();
        let dev = grad_check(half_norm_sq, &mut params, 1e-6);
        assert!(dev <= 1e-8, "deviation {dev}");
        // parameters restored
        assert_eq!(params, quadratic_params());
    }

    #[test]
    fn corrupted_gradient_detected() {
        let mut params = quadratic_params();
        params[1].grad.as_mut_slice()[0] *= 2.0;
        let dev = grad_check(half_norm_sq, &mut params, 1e-6);
        assert!(dev >= 0.3, "deviation {dev}");
        let by_group = grad_check_by_group(half_norm_sq, &mut params, 1e-6);
        assert!(by_group[0].max_rel <= 1e-8);
        assert!(by_group[1].max_rel >= 0.3);
    }
}
