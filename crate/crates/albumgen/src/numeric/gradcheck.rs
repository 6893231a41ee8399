//! Central-difference verification of reverse-mode gradients.

use super::rng::Rng;
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Probes discarded because the loss was not smooth across the
    /// evaluation interval (e.g. a relu activation flipped); zero for
    /// checks that do not track smoothness.
    pub skipped: usize,
    /// tensor index and flat coordinate of the worst disagreement
    pub worst: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Relative error with an absolute floor, so near-zero pairs compare sanely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Compare analytic gradients against central finite differences of `loss`
/// at `params`, probing `samples_per_tensor` random coordinates in every
/// tensor (all coordinates when a tensor is smaller than that).
///
/// `loss` must be a pure function of the parameter vector and smooth in the
/// probed eps-intervals; it is evaluated at perturbed copies, never at
/// shared state. For losses with kinks, use [`grad_check_smooth_regions`].
pub fn grad_check<F>(
    params: &[Tensor],
    analytic: &[Tensor],
    mut loss: F,
    eps: f64,
    samples_per_tensor: usize,
    rng: &mut Rng,
) -> GradCheckReport
where
    F: FnMut(&[Tensor]) -> f64,
{
    grad_check_smooth_regions(
        params,
        analytic,
        |ps| (loss(ps), 0),
        eps,
        samples_per_tensor,
        rng,
    )
}

/// Gradient check for piecewise-smooth losses. The probe returns the loss
/// together with a token identifying the active smooth region (for a relu
/// network, a hash of the activation pattern). A central difference whose
/// two endpoints land in different regions straddles a kink and is not a
/// valid derivative estimate; such draws are discarded and replaced so
/// every tensor keeps its sample count where possible.
pub fn grad_check_smooth_regions<F>(
    params: &[Tensor],
    analytic: &[Tensor],
    mut probe: F,
    eps: f64,
    samples_per_tensor: usize,
    rng: &mut Rng,
) -> GradCheckReport
where
    F: FnMut(&[Tensor]) -> (f64, u64),
{
    assert_eq!(params.len(), analytic.len(), "gradient list length mismatch");
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (ti, p) in params.iter().enumerate() {
        let n = p.len();
        let want = samples_per_tensor.min(n);
        let exhaustive = n <= samples_per_tensor;
        let mut done = 0;
        let mut attempt = 0;
        // a few extra draws per tensor cover discarded kink-straddling probes
        let budget = if exhaustive { n } else { want * 8 };
        while done < want && attempt < budget {
            let ci = if exhaustive {
                attempt
            } else {
                (rng.next_u64() % n as u64) as usize
            };
            attempt += 1;

            let orig = work[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + eps;
            let (up, region_up) = probe(&work);
            work[ti].data_mut()[ci] = orig - eps;
            let (down, region_down) = probe(&work);
            work[ti].data_mut()[ci] = orig;

            if region_up != region_down {
                report.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[ti].data()[ci];
            let err = relative_error(a, numeric);
            report.checked += 1;
            done += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (ti, ci);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_matches_exactly() {
        // L = 0.5 * sum(theta^2), dL/dtheta = theta
        let theta = Tensor::from_vec(&[2, 3], vec![0.4, -1.2, 2.0, 0.01, -0.5, 3.3]).unwrap();
        let grad = theta.clone();
        let mut rng = Rng::new(5);
        let report = grad_check(
            &[theta],
            &[grad],
            |ps| 0.5 * ps[0].data().iter().map(|x| x * x).sum::<f64>(),
            1e-5,
            100,
            &mut rng,
        );
        // exact up to float cancellation in the central difference
        assert!(report.max_rel_err < 1e-8, "err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let theta = Tensor::from_vec(&[1, 4], vec![0.4, -1.2, 2.0, 0.7]).unwrap();
        let mut grad = theta.clone();
        grad.data_mut()[2] = grad.data()[2] * 2.0 + 1.0;
        let mut rng = Rng::new(5);
        let report = grad_check(
            &[theta],
            &[grad],
            |ps| 0.5 * ps[0].data().iter().map(|x| x * x).sum::<f64>(),
            1e-5,
            100,
            &mut rng,
        );
        assert!(report.max_rel_err > 1e-2, "err {}", report.max_rel_err);
    }
}
