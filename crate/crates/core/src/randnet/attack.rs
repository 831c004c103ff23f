use serde::Serialize;

use super::network::ScalarModel;
use super::RandnetError;
use crate::norm::Norm;

/// Gradient evaluations allowed per search before it is censored.
pub const GRADIENT_CAP: usize = 2000;
/// Relative width at which the radius bisection stops.
const RADIUS_RTOL: f64 = 0.01;
/// Projected-gradient steps per trial radius (l2, l-inf).
const PGD_STEPS: usize = 10;
/// Greedy coordinate rounds per trial radius (l1); each spends at most 1/8 of the radius.
const L1_ROUNDS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRecord {
    pub norm: Norm,
    pub x0: Vec<f64>,
    /// Flipped point, or `x0` when censored.
    pub adversarial: Vec<f64>,
    /// `|adversarial - x0|_p`; infinite when censored.
    pub distance: f64,
    /// Length of the segment bisected in the final stage.
    pub segment_length: f64,
    pub gradient_evals: usize,
    pub bisection_steps: usize,
    pub converged: bool,
    /// No flip was found inside the box within the gradient budget.
    pub censored: bool,
}

impl AttackRecord {
    pub fn iterations(&self) -> usize {
        self.gradient_evals + self.bisection_steps
    }
}

/// `phi(x) = w . x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ScalarModel for Affine {
    fn input_len(&self) -> usize {
        self.w.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.b + self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.value(x), self.w.clone())
    }
}

/// First-order distance estimate `|phi(x0)| / |grad phi(x0)|_q`, `1/p + 1/q = 1`.
pub fn linear_estimate<M: ScalarModel + ?Sized>(model: &M, x0: &[f64], norm: Norm) -> f64 {
    let (v, g) = model.value_and_gradient(x0);
    v.abs() / norm.dual().of(&g)
}

struct Search<'a, M: ?Sized> {
    model: &'a M,
    x0: &'a [f64],
    norm: Norm,
    sign: f64,
    grads: usize,
}

impl<M: ScalarModel + ?Sized> Search<'_, M> {
    fn margin(&self, x: &[f64]) -> f64 {
        self.sign * self.model.value(x)
    }

    fn margin_and_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self.grads += 1;
        let (v, mut g) = self.model.value_and_gradient(x);
        g.iter_mut().for_each(|c| *c *= self.sign);
        (self.sign * v, g)
    }

    fn exhausted(&self) -> bool {
        self.grads >= GRADIENT_CAP
    }

    /// Try to flip the sign inside the `eps`-ball around `x0` intersected with the box.
    fn attempt(&mut self, eps: f64) -> Option<Vec<f64>> {
        match self.norm {
            Norm::L1 => self.greedy_l1(eps),
            Norm::L2 | Norm::Linf => self.pgd(eps),
        }
    }

    fn pgd(&mut self, eps: f64) -> Option<Vec<f64>> {
        let mut x = self.x0.to_vec();
        for step in 0..PGD_STEPS {
            if self.exhausted() {
                return None;
            }
            let (m, g) = self.margin_and_gradient(&x);
            if m < 0.0 {
                return Some(x);
            }
            let scale = self.norm.dual().of(&g);
            if !(scale > 0.0) {
                break;
            }
            let eta = if step == 0 { eps } else { 0.25 * eps };
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= eta * if self.norm == Norm::L2 { gi / scale } else { gi.signum() };
            }
            self.project(&mut x, eps);
        }
        (self.margin(&x) < 0.0).then_some(x)
    }

    /// Project onto the `eps`-ball around `x0`, then clip to the box. Clipping
    /// moves every coordinate toward `x0`, so the result stays in the ball.
    fn project(&self, x: &mut [f64], eps: f64) {
        match self.norm {
            Norm::L2 => {
                let d = Norm::L2.distance(x, self.x0);
                if d > eps {
                    let s = eps / d;
                    for (xi, oi) in x.iter_mut().zip(self.x0) {
                        *xi = oi + s * (*xi - oi);
                    }
                }
            }
            Norm::Linf => {
                for (xi, oi) in x.iter_mut().zip(self.x0) {
                    *xi = xi.clamp(oi - eps, oi + eps);
                }
            }
            Norm::L1 => unreachable!("l1 moves are budgeted directly"),
        }
        x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    fn greedy_l1(&mut self, eps: f64) -> Option<Vec<f64>> {
        let mut x = self.x0.to_vec();
        let mut order: Vec<usize> = (0..x.len()).collect();
        for _ in 0..L1_ROUNDS {
            let left = eps - Norm::L1.distance(&x, self.x0);
            if left <= 1e-12 * eps || self.exhausted() {
                break;
            }
            let (m, g) = self.margin_and_gradient(&x);
            if m < 0.0 {
                return Some(x);
            }
            order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
            let mut chunk = (0.125 * eps).min(left);
            for &i in &order {
                if g[i] == 0.0 || chunk <= 0.0 {
                    break;
                }
                let room = if g[i] < 0.0 { 1.0 - x[i] } else { x[i] };
                let step = room.min(chunk);
                x[i] -= step * g[i].signum();
                chunk -= step;
            }
        }
        (self.margin(&x) < 0.0).then_some(x)
    }
}

/// Search for the closest sign flip of `model` around `x0` inside `[0,1]^n`.
///
/// The trial radius starts at the first-order estimate and doubles until a
/// flip is found, is then bisected to 1% relative width, and finally the
/// segment from `x0` to the flipped point is bisected down to `tolerance`.
pub fn boundary_search<M: ScalarModel + ?Sized>(
    model: &M,
    x0: &[f64],
    norm: Norm,
    tolerance: f64,
) -> Result<AttackRecord, RandnetError> {
    if x0.len() != model.input_len() {
        return Err(RandnetError::Dimension { expected: model.input_len(), got: x0.len() });
    }
    if let Some(i) = x0.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(RandnetError::OutsideBox(i));
    }
    if !(tolerance > 0.0) {
        return Err(RandnetError::Tolerance(tolerance));
    }
    let phi0 = model.value(x0);
    if phi0 == 0.0 || !phi0.is_finite() {
        return Err(RandnetError::DegenerateStart(phi0));
    }
    let mut s = Search { model, x0, norm, sign: phi0.signum(), grads: 0 };
    let censored = |s: &Search<M>| AttackRecord {
        norm,
        x0: x0.to_vec(),
        adversarial: x0.to_vec(),
        distance: f64::INFINITY,
        segment_length: 0.0,
        gradient_evals: s.grads,
        bisection_steps: 0,
        converged: false,
        censored: true,
    };

    let corner: Vec<f64> = x0.iter().map(|&v| if v < 0.5 { 1.0 } else { 0.0 }).collect();
    let max_r = norm.distance(&corner, x0);
    let (m0, g0) = s.margin_and_gradient(x0);
    let slope = norm.dual().of(&g0);
    let mut eps = if slope > 0.0 { (m0 / slope).min(max_r) } else { max_r };

    // Bracket: grow until a flip is found.
    let mut lo = 0.0;
    let mut hi: (f64, Vec<f64>);
    loop {
        if s.exhausted() {
            return Ok(censored(&s));
        }
        if let Some(p) = s.attempt(eps) {
            hi = (eps, p);
            break;
        }
        lo = eps;
        if eps >= max_r {
            return Ok(censored(&s));
        }
        eps = (2.0 * eps).min(max_r);
    }
    if lo == 0.0 {
        // The first radius already worked; halve until it fails.
        while !s.exhausted() && hi.0 > 1e-12 * max_r {
            let e = 0.5 * hi.0;
            match s.attempt(e) {
                Some(p) => hi = (e, p),
                None => {
                    lo = e;
                    break;
                }
            }
        }
    }
    while hi.0 - lo > RADIUS_RTOL * hi.0 && !s.exhausted() {
        let mid = 0.5 * (lo + hi.0);
        match s.attempt(mid) {
            Some(p) => hi = (mid, p),
            None => lo = mid,
        }
    }

    // Bisect along the segment, keeping the flipped end.
    let best = hi.1;
    let dir: Vec<f64> = best.iter().zip(x0).map(|(b, a)| b - a).collect();
    let full = norm.of(&dir);
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut steps = 0;
    while (b - a) * full > tolerance {
        let mid = 0.5 * (a + b);
        let x: Vec<f64> = x0.iter().zip(&dir).map(|(o, d)| o + mid * d).collect();
        if s.margin(&x) < 0.0 {
            b = mid;
        } else {
            a = mid;
        }
        steps += 1;
    }
    let adversarial = if b == 1.0 { best } else { x0.iter().zip(&dir).map(|(o, d)| o + b * d).collect() };
    Ok(AttackRecord {
        norm,
        x0: x0.to_vec(),
        distance: norm.distance(&adversarial, x0),
        adversarial,
        segment_length: full,
        gradient_evals: s.grads,
        bisection_steps: steps,
        converged: true,
        censored: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randnet::init_random;
    use crate::arch::ArchSpec;

    fn affine() -> (Affine, Vec<f64>) {
        let w = vec![0.3, -1.2, 0.5, 0.9, -0.1];
        (Affine { w, b: 0.05 }, vec![0.45, 0.5, 0.55, 0.4, 0.6])
    }

    #[test]
    fn affine_dual_norm_distances() {
        let (model, x0) = affine();
        let phi = model.value(&x0).abs();
        for norm in Norm::ALL {
            let rec = boundary_search(&model, &x0, norm, 1e-9).unwrap();
            let exact = phi / norm.dual().of(&model.w);
            assert!(rec.converged && !rec.censored);
            assert!((rec.distance - exact).abs() <= 1e-8 + 1e-9 * exact, "{norm}: {} vs {exact}", rec.distance);
            assert!(model.value(&rec.adversarial) * model.value(&x0) < 0.0);
        }
    }

    #[test]
    fn unreachable_flip_is_censored() {
        let model = Affine { w: vec![1.0, 1.0], b: 5.0 };
        for norm in Norm::ALL {
            let rec = boundary_search(&model, &[0.5, 0.5], norm, 1e-6).unwrap();
            assert!(rec.censored && !rec.converged);
            assert!(rec.distance.is_infinite());
        }
    }

    #[test]
    fn rejects_bad_starts() {
        let model = Affine { w: vec![1.0, -1.0], b: 0.0 };
        assert!(matches!(boundary_search(&model, &[0.5, 0.5], Norm::L2, 1e-6), Err(RandnetError::DegenerateStart(_))));
        assert!(matches!(boundary_search(&model, &[1.5, 0.5], Norm::L2, 1e-6), Err(RandnetError::OutsideBox(0))));
        assert!(matches!(boundary_search(&model, &[0.2, 0.5], Norm::L2, 0.0), Err(RandnetError::Tolerance(_))));
    }

    #[test]
    fn finer_tolerance_never_increases_distance_and_bisection_is_bounded() {
        let arch = ArchSpec::fully_connected(16, 2, 0.1).unwrap();
        let net = init_random(&arch, &[32, 32], 9).unwrap();
        let x0: Vec<f64> = (0..16).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
        for norm in Norm::ALL {
            let mut last = f64::INFINITY;
            for tol in [1e-2, 1e-4, 1e-6] {
                let rec = boundary_search(&net, &x0, norm, tol).unwrap();
                if rec.censored {
                    continue;
                }
                assert!(rec.distance <= last);
                last = rec.distance;
                let bound = (rec.segment_length / tol).log2().ceil().max(0.0) + 2.0;
                assert!(rec.bisection_steps as f64 <= bound);
                assert!(net.value(&rec.adversarial).signum() != net.value(&x0).signum());
                assert!(rec.adversarial.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
