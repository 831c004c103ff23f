use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attack::{boundary_search, linear_estimate};
use super::network::{hidden_layer_count, init_random};
use super::RandnetError;
use crate::arch::ArchSpec;
use crate::harness::stats::{percentile, sorted};
use crate::norm::Norm;
use crate::rng;

/// Settings of the adversarial-distance scaling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub dims: Vec<usize>,
    pub nets_per_dim: usize,
    pub points_per_net: usize,
    pub seed: u64,
    #[serde(default = "default_norms")]
    pub norms: Vec<Norm>,
    /// Hidden layers of the default fully connected family.
    #[serde(default = "default_hidden")]
    pub hidden_layers: usize,
    /// Width of every hidden layer.
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default)]
    pub sigma_b: f64,
    /// Final bisection tolerance relative to the first-order distance estimate.
    #[serde(default = "default_rel_tol")]
    pub rel_tolerance: f64,
}

fn default_norms() -> Vec<Norm> {
    Norm::ALL.to_vec()
}
fn default_hidden() -> usize {
    3
}
fn default_width() -> usize {
    256
}
fn default_rel_tol() -> f64 {
    1e-3
}

impl ScalingConfig {
    pub fn new(dims: Vec<usize>, nets_per_dim: usize, points_per_net: usize, seed: u64) -> Self {
        Self {
            dims,
            nets_per_dim,
            points_per_net,
            seed,
            norms: default_norms(),
            hidden_layers: default_hidden(),
            width: default_width(),
            sigma_b: 0.0,
            rel_tolerance: default_rel_tol(),
        }
    }
}

/// One attack, stripped of its point coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRecord {
    pub n: usize,
    pub net: usize,
    pub point: usize,
    pub norm: Norm,
    pub distance: f64,
    /// `distance / |x0|_p`.
    pub relative: f64,
    pub norm2_x0: f64,
    pub censored: bool,
    pub iterations: usize,
}

/// Median and 45th/55th percentiles of one (n, p) cell; `None` when every attack was censored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub p: Norm,
    pub median: Option<f64>,
    pub p45: Option<f64>,
    pub p55: Option<f64>,
    pub censored_count: usize,
    pub nets: usize,
    pub points: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingResult {
    pub distances: Vec<ScalingRow>,
    pub relative: Vec<ScalingRow>,
    pub records: Vec<ScalingRecord>,
    /// Lipschitz ratio of the family (the same for every n).
    pub m: f64,
}

/// Architecture of the family at input dimension `n`: the template with its
/// channel count scaled to `n`, or the default fully connected network.
pub fn family_member(template: Option<&ArchSpec>, cfg: &ScalingConfig, n: usize) -> Result<ArchSpec, RandnetError> {
    match template {
        None => Ok(ArchSpec::fully_connected(n, cfg.hidden_layers, cfg.sigma_b)?),
        Some(t) => {
            let pixels = t.input_grid().size();
            if !n.is_multiple_of(pixels) {
                return Err(RandnetError::Widths(format!("n = {n} is not a multiple of {pixels} pixels")));
            }
            Ok(t.with_input_channels(n / pixels)?)
        }
    }
}

/// Attack `points_per_net` uniform inputs of `nets_per_dim` random networks per
/// dimension in every norm, and summarize distances per (n, p).
pub fn scaling_experiment(cfg: &ScalingConfig, template: Option<&ArchSpec>) -> Result<ScalingResult, RandnetError> {
    if cfg.dims.is_empty() || cfg.nets_per_dim == 0 || cfg.points_per_net == 0 || cfg.norms.is_empty() {
        return Err(RandnetError::Config("empty dimension sweep, norm list or job count".into()));
    }
    if cfg.dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RandnetError::Config(format!("dims must be increasing, got {:?}", cfg.dims)));
    }
    let archs: Vec<ArchSpec> = cfg.dims.iter().map(|&n| family_member(template, cfg, n)).collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.dims.len()).flat_map(|d| (0..cfg.nets_per_dim).map(move |k| (d, k))).collect();
    let per_job = jobs
        .par_iter()
        .map(|&(d, k)| run_job(cfg, &archs[d], cfg.dims[d], k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut records: Vec<ScalingRecord> = per_job.into_iter().flatten().collect();
    records.sort_by_key(|a| (a.n, a.norm, a.net, a.point));

    let summarize = |value: fn(&ScalingRecord) -> f64| -> Vec<ScalingRow> {
        let mut rows = Vec::new();
        for &n in &cfg.dims {
            for &p in &cfg.norms {
                let cell: Vec<&ScalingRecord> = records.iter().filter(|r| r.n == n && r.norm == p).collect();
                let kept = sorted(cell.iter().filter(|r| !r.censored).map(|r| value(r)));
                rows.push(ScalingRow {
                    n,
                    p,
                    median: percentile(&kept, 0.5),
                    p45: percentile(&kept, 0.45),
                    p55: percentile(&kept, 0.55),
                    censored_count: cell.len() - kept.len(),
                    nets: cfg.nets_per_dim,
                    points: cfg.points_per_net,
                    seed: cfg.seed,
                });
            }
        }
        rows
    };
    let distances = summarize(|r| r.distance);
    let relative = summarize(|r| r.relative);
    let m = crate::kernel::smoothness_constants(&archs[0]).m;
    Ok(ScalingResult { distances, relative, records, m })
}

fn run_job(cfg: &ScalingConfig, arch: &ArchSpec, n: usize, net_index: usize) -> Result<Vec<ScalingRecord>, RandnetError> {
    let widths = vec![cfg.width; hidden_layer_count(arch)];
    let net = init_random(arch, &widths, rng::subseed(cfg.seed, &format!("net/{n}/{net_index}")))?;
    let mut point_rng = rng::stream(rng::subseed(cfg.seed, &format!("points/{n}")), net_index as u64);
    let mut out = Vec::with_capacity(cfg.points_per_net * cfg.norms.len());
    for point in 0..cfg.points_per_net {
        let x0: Vec<f64> = (0..n).map(|_| point_rng.random::<f64>()).collect();
        let norm2_x0 = Norm::L2.of(&x0);
        for &norm in &cfg.norms {
            let tol = cfg.rel_tolerance * linear_estimate(&net, &x0, norm);
            let tol = if tol > 0.0 && tol.is_finite() { tol } else { cfg.rel_tolerance };
            let rec = boundary_search(&net, &x0, norm, tol)?;
            out.push(ScalingRecord {
                n,
                net: net_index,
                point,
                norm,
                distance: rec.distance,
                relative: rec.distance / norm.of(&x0),
                norm2_x0,
                censored: rec.censored,
                iterations: rec.iterations(),
            });
        }
    }
    Ok(out)
}
