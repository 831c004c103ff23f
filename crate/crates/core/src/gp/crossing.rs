use serde::Serialize;

use super::ensemble::build_ensemble;
use super::{CovarianceKernel, GpError};
use crate::numeric::{binomial_stderr, normal_quantile};

/// Region around `x0` whose grid is searched for a sign change.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Closed `l^p` ball of radius `r`, `p` in {1, 2, inf}.
    Ball { r: f64, p: f64 },
    /// Segment `x0 + t v / |v|_2`, `0 <= t <= r`.
    Segment { v: Vec<f64>, r: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub crossings: usize,
    pub trials: usize,
    pub grid_size: usize,
    pub jitter_used: f64,
}

/// Point `k` of the additive recurrence with generalized golden ratio in `dim` dimensions.
pub fn quasi_random(k: usize, dim: usize) -> Vec<f64> {
    // phi_d is the positive root of x^(d+1) = x + 1.
    let mut phi = 1.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let mut alpha = 1.0;
    (0..dim)
        .map(|_| {
            alpha /= phi;
            (0.5 + alpha * k as f64).fract()
        })
        .collect()
}

/// Grid of `grid_size` points in `region`, starting with `x0` itself.
///
/// Balls get quasi-random interior points, points on the sphere and (for `p = 1`)
/// vertices, since the extremes of a smooth process over a ball sit near its boundary.
pub fn discretize(x0: &[f64], region: &Region, grid_size: usize) -> Result<Vec<Vec<f64>>, GpError> {
    let n = x0.len();
    if grid_size < 2 {
        return Err(GpError::DegenerateRegion(format!("grid_size = {grid_size}")));
    }
    match region {
        Region::Segment { v, r } => {
            if !(*r > 0.0) {
                return Err(GpError::DegenerateRegion(format!("segment length {r}")));
            }
            if v.len() != n {
                return Err(GpError::Dimension { expected: n, got: v.len() });
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(GpError::DegenerateRegion("zero segment direction".into()));
            }
            Ok((0..grid_size)
                .map(|k| {
                    let t = r * k as f64 / (grid_size - 1) as f64;
                    x0.iter().zip(v).map(|(a, b)| a + t * b / norm).collect()
                })
                .collect())
        }
        Region::Ball { r, p } => {
            if !(*r > 0.0) {
                return Err(GpError::DegenerateRegion(format!("ball radius {r}")));
            }
            let mut offsets: Vec<Vec<f64>> = Vec::with_capacity(grid_size - 1);
            let budget = grid_size - 1;
            if *p == 1.0 {
                let count = (2 * n).min(budget / 4);
                for j in 0..count {
                    // Evenly spread over the 2n vertices when not all fit.
                    let v = j * 2 * n / count;
                    let mut e = vec![0.0; n];
                    e[v / 2] = if v.is_multiple_of(2) { 1.0 } else { -1.0 };
                    offsets.push(e);
                }
            }
            let rest = budget - offsets.len();
            for k in 0..rest {
                let u = quasi_random(k + 1, n + 1);
                let on_sphere = k % 2 == 0;
                offsets.push(unit_ball_point(&u, *p, on_sphere)?);
            }
            let mut pts = vec![x0.to_vec()];
            pts.extend(offsets.into_iter().map(|o| x0.iter().zip(&o).map(|(a, b)| a + r * b).collect()));
            Ok(pts)
        }
    }
}

/// Map `u` in `[0,1)^(n+1)` into the unit `l^p` ball (onto its boundary if `on_sphere`).
fn unit_ball_point(u: &[f64], p: f64, on_sphere: bool) -> Result<Vec<f64>, GpError> {
    let n = u.len() - 1;
    let radius = if on_sphere { 1.0 } else { u[n].powf(1.0 / n as f64) };
    // Keep the uniforms away from 0 and 1 so the quantile maps stay finite.
    let clip = |v: f64| v.clamp(1e-12, 1.0 - 1e-12);
    let dir: Vec<f64> = if p == 1.0 {
        let g: Vec<f64> = u[..n]
            .iter()
            .map(|&v| {
                let v = clip(v);
                if v < 0.5 {
                    (2.0 * v).ln()
                } else {
                    -(2.0 - 2.0 * v).ln()
                }
            })
            .collect();
        let s: f64 = g.iter().map(|v| v.abs()).sum();
        g.into_iter().map(|v| v / s).collect()
    } else if p == 2.0 {
        let g: Vec<f64> = u[..n].iter().map(|&v| normal_quantile(clip(v))).collect();
        let s = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        g.into_iter().map(|v| v / s).collect()
    } else if p.is_infinite() {
        if on_sphere {
            return Ok(u[..n].iter().map(|&v| if v < 0.5 { -1.0 } else { 1.0 }).collect());
        }
        return Ok(u[..n].iter().map(|&v| 2.0 * v - 1.0).collect());
    } else {
        return Err(GpError::DegenerateRegion(format!("unsupported norm p = {p}")));
    };
    Ok(dir.into_iter().map(|v| v * radius).collect())
}

/// Fraction of draws of the centered process in which some grid point of the
/// region has a sign different from the sign at `x0`.
///
/// The grid is finite, so this under-estimates the continuum crossing event.
pub fn crossing_probability<K: CovarianceKernel + ?Sized>(
    kernel: &K,
    x0: &[f64],
    region: &Region,
    grid_size: usize,
    trials: usize,
    seed: u64,
) -> Result<CrossingEstimate, GpError> {
    kernel.check_point(x0)?;
    let pts = discretize(x0, region, grid_size)?;
    let ens = build_ensemble(kernel, pts)?;
    let flags = ens.map_draws(trials, seed, |v| {
        let s = v[0] > 0.0;
        v[1..].iter().any(|&w| (w > 0.0) != s)
    });
    let crossings = flags.iter().filter(|&&f| f).count();
    let estimate = crossings as f64 / trials.max(1) as f64;
    Ok(CrossingEstimate {
        estimate,
        stderr: binomial_stderr(estimate, trials.max(1)),
        crossings,
        trials,
        grid_size,
        jitter_used: ens.jitter_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::LinearKernel;

    #[test]
    fn ball_points_stay_inside() {
        let x0 = vec![0.3; 6];
        for p in [1.0, 2.0, f64::INFINITY] {
            let pts = discretize(&x0, &Region::Ball { r: 0.5, p }, 200).unwrap();
            assert_eq!(pts.len(), 200);
            assert_eq!(pts[0], x0);
            for q in &pts {
                let d: Vec<f64> = q.iter().zip(&x0).map(|(a, b)| a - b).collect();
                let norm = if p == 1.0 {
                    d.iter().map(|v| v.abs()).sum::<f64>()
                } else if p == 2.0 {
                    d.iter().map(|v| v * v).sum::<f64>().sqrt()
                } else {
                    d.iter().fold(0.0f64, |a, v| a.max(v.abs()))
                };
                assert!(norm <= 0.5 * (1.0 + 1e-12), "p={p} norm={norm}");
            }
        }
    }

    #[test]
    fn segment_includes_endpoints() {
        let pts = discretize(&[1.0, 1.0], &Region::Segment { v: vec![0.0, 2.0], r: 3.0 }, 4).unwrap();
        assert_eq!(pts, vec![vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0], vec![1.0, 4.0]]);
    }

    #[test]
    fn degenerate_regions() {
        let x0 = [1.0, 0.0];
        assert!(discretize(&x0, &Region::Ball { r: 0.0, p: 1.0 }, 10).is_err());
        assert!(discretize(&x0, &Region::Segment { v: vec![0.0, 0.0], r: 1.0 }, 10).is_err());
        assert!(discretize(&x0, &Region::Ball { r: 1.0, p: 3.0 }, 10).is_err());
    }

    #[test]
    fn radial_segment_never_crosses() {
        let k = LinearKernel { n: 2 };
        let est = crossing_probability(&k, &[10.0, 0.0], &Region::Segment { v: vec![1.0, 0.0], r: 5.0 }, 64, 2000, 3)
            .unwrap();
        assert_eq!(est.crossings, 0);
    }
}
