/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Floor on the relative-error denominator so parameters whose true
/// gradient is zero are judged on absolute error.
const DENOM_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

/// Worst relative error between `analytic` and central differences of `f`
/// at `params`. `params` is restored before returning.
pub fn grad_check<F>(params: &mut [f64], analytic: &[f64], mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let orig = params[k];
        params[k] = orig + GRAD_CHECK_STEP;
        let plus = f(params);
        params[k] = orig - GRAD_CHECK_STEP;
        let minus = f(params);
        params[k] = orig;
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        worst = worst.max(relative_error(analytic[k], numeric));
    }
    worst
}

/// Outcome of [`grad_check_piecewise`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PiecewiseCheck {
    pub worst: f64,
    pub checked: usize,
    /// Parameters whose stencil had to shrink to avoid a kink.
    pub refined: usize,
    /// Parameters still straddling a kink at the smallest step; excluded.
    pub straddling: usize,
}

/// Central differences for a piecewise-smooth `f` that also reports which
/// smooth piece it evaluated (for a ReLU network, the activation pattern).
/// A stencil whose two ends land on different pieces does not estimate the
/// derivative, so its step shrinks tenfold up to `refinements` times.
pub fn grad_check_piecewise<F, P>(params: &mut [f64], analytic: &[f64], refinements: u32, mut f: F) -> PiecewiseCheck
where
    F: FnMut(&[f64]) -> (f64, P),
    P: PartialEq,
{
    assert_eq!(params.len(), analytic.len());
    let mut out = PiecewiseCheck::default();
    for k in 0..params.len() {
        let orig = params[k];
        let mut h = GRAD_CHECK_STEP;
        let mut numeric = None;
        for attempt in 0..=refinements {
            params[k] = orig + h;
            let (plus, piece_plus) = f(params);
            params[k] = orig - h;
            let (minus, piece_minus) = f(params);
            if piece_plus == piece_minus {
                numeric = Some((plus - minus) / (2.0 * h));
                out.refined += usize::from(attempt > 0);
                break;
            }
            h *= 0.1;
        }
        params[k] = orig;
        match numeric {
            Some(n) => {
                out.checked += 1;
                out.worst = out.worst.max(relative_error(analytic[k], n));
            }
            None => out.straddling += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let mut w = [3.0];
        let err = grad_check(&mut w, &[6.0], |w| w[0] * w[0]);
        assert!(err < 1e-8, "{err}");
        assert_eq!(w, [3.0]);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let mut w = [3.0, -1.0];
        let err = grad_check(&mut w, &[6.0, -2.0 * 1.5], |w| w[0] * w[0] + w[1] * w[1]);
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn kink_inside_stencil_is_refined() {
        // |w| at w = 4e-6: the 1e-5 stencil crosses zero, 1e-6 does not
        let mut w = [4e-6];
        let plain = grad_check(&mut w, &[1.0], |w| w[0].abs());
        assert!(plain > 0.5, "{plain}");
        let c = grad_check_piecewise(&mut w, &[1.0], 2, |w| (w[0].abs(), w[0] > 0.0));
        assert_eq!((c.checked, c.refined, c.straddling), (1, 1, 0));
        assert!(c.worst < 1e-9, "{c:?}");
        let c = grad_check_piecewise(&mut [0.0], &[1.0], 2, |w| (w[0].abs(), w[0] > 0.0));
        assert_eq!(c.straddling, 1);
    }
}
