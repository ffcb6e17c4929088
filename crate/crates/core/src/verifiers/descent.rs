//! Small backtracking gradient descent over a box, shared by the hunts.

/// Objective evaluation: value and gradient, or `None` when the point is
/// infeasible (outside a constraint the caller enforces by rejection).
pub(crate) type Eval<'a> = dyn FnMut(&[f64]) -> Option<(f64, Vec<f64>)> + 'a;

pub(crate) struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
}

/// Minimizes `eval` from `x0`, keeping iterates strictly inside `bounds`
/// (per-coordinate open intervals) and feasible. Backtracking halves the step
/// on any rejection; the step grows gently after accepted moves.
pub(crate) fn descend(
    x0: &[f64],
    bounds: &[(f64, f64)],
    max_iters: usize,
    eval: &mut Eval<'_>,
) -> Option<DescentOutcome> {
    let inside =
        |x: &[f64]| x.iter().zip(bounds).all(|(&v, &(lo, hi))| lo < v && v < hi);
    if !inside(x0) {
        return None;
    }
    let (mut value, mut grad) = eval(x0)?;
    let mut x = x0.to_vec();
    let min_side =
        bounds.iter().map(|&(lo, hi)| hi - lo).fold(f64::INFINITY, f64::min);
    let mut step = 0.05 * min_side;

    for _ in 0..max_iters {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !gnorm.is_finite() || gnorm == 0.0 || step < 1e-17 * min_side {
            break;
        }
        let mut accepted = false;
        let mut trial_step = step.min(0.2 * min_side);
        for _ in 0..40 {
            let trial: Vec<f64> =
                x.iter().zip(&grad).map(|(&v, &g)| v - trial_step * g / gnorm).collect();
            if inside(&trial) {
                if let Some((tv, tg)) = eval(&trial) {
                    if tv.is_finite() && tv < value {
                        x = trial;
                        value = tv;
                        grad = tg;
                        accepted = true;
                        break;
                    }
                }
            }
            trial_step *= 0.5;
            if trial_step < 1e-17 * min_side {
                break;
            }
        }
        if !accepted {
            break;
        }
        step = (trial_step * 1.6).min(0.2 * min_side);
    }
    Some(DescentOutcome { x, value })
}
