//! Proximal maps: soft-thresholding and Euclidean projection onto the l1 ball.

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Threshold `θ` such that `Σ max(|v_i| − θ, 0) = radius`, or `None` when `v`
/// already lies in the ball.
///
/// Sort-and-threshold: only entries above `max|v| − radius` can survive the
/// projection, so just those are sorted.
pub fn l1_ball_threshold(v: &[f64], radius: f64) -> Option<f64> {
    debug_assert!(radius >= 0.0);
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return None;
    }
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = vmax - radius;
    let mut cand: Vec<f64> = v.iter().map(|x| x.abs()).filter(|&a| a > floor).collect();
    cand.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, u) in cand.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    Some(theta.max(0.0))
}

/// Projects `v` onto `{x : ‖x‖₁ ≤ radius}` in place.
pub fn project_l1_ball(v: &mut [f64], radius: f64) {
    if let Some(theta) = l1_ball_threshold(v, radius) {
        for x in v.iter_mut() {
            *x = soft_threshold(*x, theta);
        }
    }
}

/// `prox_{t‖·‖∞}(v) = v − Π_{‖·‖₁ ≤ t}(v)`, in place.
pub fn prox_max_norm(v: &mut [f64], t: f64) {
    if let Some(theta) = l1_ball_threshold(v, t) {
        for x in v.iter_mut() {
            *x -= soft_threshold(*x, theta);
        }
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
}
