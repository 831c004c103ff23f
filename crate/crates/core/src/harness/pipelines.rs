use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::config::{KernelChoice, Pipeline, RunConfig};
use super::output::{write_csv, write_scaling_csv, write_summary, RowSink, RunOutcome, Summary};
use super::stats::{fit_loglog, percentile, percentile_profile_values, sorted};
use super::HarnessError;
use crate::arch::{load_arch, ArchSpec};
use crate::certificate::{certify, RobustnessCertificate};
use crate::covering::{covering_bound, dudley_integral, lattice_cardinality, lattice_cover, verify_cover, LATTICE_MAX_DIM};
use crate::gp::{
    borell_tis_check, build_ensemble, crossing_probability, discretize, dudley_check, rice_check, CovarianceKernel,
    LinearKernel, Region,
};
use crate::kernel::{kernel_matrix, smoothness_constants};
use crate::norm::Norm;
use crate::randnet::{
    empirical_kernel, family_member, hidden_layer_count, scaling_experiment, ScalingConfig, ScalingResult,
};
use crate::rng;

/// Validate `cfg`, run its pipeline and write `<stem>.csv` plus `<stem>_summary.toml`
/// (and pipeline-specific extras) into `cfg.out`.
pub fn run_config(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let arch = match &cfg.arch {
        Some(p) => Some(read_arch(p)?),
        None => None,
    };
    let hash = cfg.hash();
    let mut run = Run {
        cfg,
        seed,
        arch,
        sink: RowSink::new(cfg.experiment.name(), &hash),
        extra: BTreeMap::new(),
        tables: Vec::new(),
    };
    match cfg.experiment {
        Pipeline::Certify => run.certify()?,
        Pipeline::Covering => run.covering()?,
        Pipeline::GpCrossing => run.gp_crossing()?,
        Pipeline::GpRice => run.gp_rice()?,
        Pipeline::GpTails => run.gp_tails()?,
        Pipeline::VerifyKernel => run.verify_kernel()?,
        Pipeline::AttackScaling => run.attack_scaling()?,
        Pipeline::Profile => run.profile()?,
    }
    run.finish(&hash)
}

fn read_arch(path: &Path) -> Result<ArchSpec, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    load_arch(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn read_point(path: &Path) -> Result<Vec<f64>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: expected a JSON array of numbers: {e}", path.display())))
}

/// An extra CSV table produced by a pipeline.
enum Table {
    Scaling(&'static str, Vec<crate::randnet::ScalingRow>),
    Records(Vec<crate::randnet::ScalingRecord>),
    Profile(Vec<ProfilePoint>),
}

#[derive(Debug, Clone, Serialize)]
struct ProfilePoint {
    n: usize,
    p: Norm,
    percentile: f64,
    distance: f64,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    arch: Option<ArchSpec>,
    sink: RowSink,
    extra: BTreeMap<String, f64>,
    tables: Vec<Table>,
}

fn random_direction(n: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, index);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn uniform_point(n: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, index);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Start point, optional direction and label of one GP case.
struct GpCase {
    label: String,
    x0: Vec<f64>,
    cert: Option<RobustnessCertificate>,
}

impl Run<'_> {
    fn arch(&self) -> Result<&ArchSpec, HarnessError> {
        self.arch.as_ref().ok_or_else(|| HarnessError::Config(format!("{} needs an arch", self.cfg.experiment)))
    }

    /// Arch given in the config, or the fully connected family at `dims[0]`.
    fn arch_or_family(&self) -> Result<ArchSpec, HarnessError> {
        match &self.arch {
            Some(a) => Ok(a.clone()),
            None => Ok(ArchSpec::fully_connected(self.cfg.dims[0], self.cfg.hidden_layers, self.cfg.sigma_b)?),
        }
    }

    fn gp_kernel(&self) -> Result<Box<dyn CovarianceKernel>, HarnessError> {
        Ok(match self.cfg.kernel {
            KernelChoice::Arch => Box::new(self.arch_or_family()?),
            KernelChoice::Linear => Box::new(LinearKernel { n: self.cfg.dims[0] }),
        })
    }

    /// Certified cases for the arch kernel: `points` uniform start points times `deltas`.
    fn arch_cases(&self, kernel: &dyn CovarianceKernel) -> Result<Vec<GpCase>, HarnessError> {
        let n = kernel.input_len();
        let (_, m) = kernel.smoothness();
        let mut cases = Vec::new();
        for i in 0..self.cfg.points {
            let x0 = uniform_point(n, rng::subseed(self.seed, "x0"), i as u64);
            let norm2 = Norm::L2.of(&x0);
            for &delta in &self.cfg.deltas {
                let cert = certify(norm2, delta, m, n)?;
                cases.push(GpCase { label: format!("point={i};delta={delta}"), x0: x0.clone(), cert: Some(cert) });
            }
        }
        Ok(cases)
    }

    /// The linear-kernel case: `x0 = x0_norm e_1`.
    fn linear_case(&self) -> Result<GpCase, HarnessError> {
        let n = self.cfg.dims[0];
        if n < 2 {
            return Err(HarnessError::Config("linear kernel needs n >= 2".into()));
        }
        let mut x0 = vec![0.0; n];
        x0[0] = self.cfg.x0_norm;
        Ok(GpCase {
            label: format!("R={};r={}", self.cfg.x0_norm, self.cfg.radius),
            x0,
            cert: None,
        })
    }

    fn linear_target(&self) -> f64 {
        (self.cfg.radius / self.cfg.x0_norm).atan() / PI
    }

    fn certify(&mut self) -> Result<(), HarnessError> {
        let arch = self.arch()?;
        let n = arch.input_len();
        let m = smoothness_constants(arch).m;
        let norm2 = match (&self.cfg.x0, self.cfg.norm2) {
            (Some(p), _) => {
                let x0 = read_point(p)?;
                if x0.len() != n {
                    return Err(HarnessError::Config(format!("x0 has {} entries, arch expects {n}", x0.len())));
                }
                Norm::L2.of(&x0)
            }
            (None, Some(v)) => v,
            (None, None) => unreachable!("validated"),
        };
        self.extra.insert("M".into(), m);
        self.extra.insert("norm2_x0".into(), norm2);
        for &delta in &self.cfg.deltas {
            let cert = certify(norm2, delta, m, n)?;
            let label = format!("delta={delta}");
            self.sink.value(&label, "a_n", cert.a_n, None);
            for &p in &self.cfg.norms {
                self.sink.value(&label, &format!("r_l{p}"), cert.r_lp(p.p())?, None);
            }
            self.sink.value(&label, "r_segment", cert.r_segment, None);
        }
        Ok(())
    }

    fn covering(&mut self) -> Result<(), HarnessError> {
        for &n in &self.cfg.dims {
            for &eps in &self.cfg.eps {
                self.sink.value(&format!("n={n};eps={eps}"), "covering_bound", covering_bound(n, eps), None);
            }
            if n >= 2 {
                let integral = dudley_integral(n)?;
                let a_n = crate::certificate::dudley_constant(n)?;
                self.sink.check(&format!("n={n}"), "dudley_integral", integral, None, a_n, integral <= a_n);
            }
            if n > LATTICE_MAX_DIM {
                continue;
            }
            for &m in self.cfg.lattice.iter().filter(|&&m| m <= n) {
                let label = format!("n={n};m={m}");
                let cover = lattice_cover(n, m)?;
                let expected = lattice_cardinality(n, m) as f64;
                self.sink.check(&label, "lattice_count", cover.len() as f64, None, expected, cover.len() as f64 == expected);
                let seed = rng::subseed(self.seed, &format!("cover/{n}/{m}"));
                let bound = cover.radius_bound;
                match verify_cover(&cover, self.cfg.samples, seed) {
                    Ok(worst) => self.sink.check(&label, "max_distance", worst.sqrt(), None, bound, true),
                    Err(crate::covering::CoverError::Counterexample { dist2, .. }) => {
                        self.sink.check(&label, "max_distance", dist2.sqrt(), None, bound, false)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(())
    }

    fn gp_crossing(&mut self) -> Result<(), HarnessError> {
        let kernel = self.gp_kernel()?;
        let (grid, trials) = (self.cfg.grid, self.cfg.trials);
        if self.cfg.kernel == KernelChoice::Linear {
            let case = self.linear_case()?;
            let mut v = vec![0.0; case.x0.len()];
            v[1] = 1.0;
            let region = Region::Segment { v, r: self.cfg.radius };
            let est = crossing_probability(kernel.as_ref(), &case.x0, &region, grid, trials, self.seed)?;
            let target = self.linear_target();
            let pass = (est.estimate - target).abs() <= 3.0 * est.stderr;
            self.sink.check(&case.label, "segment_crossing", est.estimate, Some(est.stderr), target, pass);
            return Ok(());
        }
        for (k, case) in self.arch_cases(kernel.as_ref())?.into_iter().enumerate() {
            let cert = case.cert.expect("arch cases are certified");
            let v = random_direction(case.x0.len(), rng::subseed(self.seed, "direction"), k as u64);
            let regions = [
                ("ball_l1", Region::Ball { r: cert.r_l1, p: 1.0 }),
                ("segment", Region::Segment { v, r: cert.r_segment }),
            ];
            for (j, (name, region)) in regions.into_iter().enumerate() {
                let seed = rng::subseed(self.seed, &format!("crossing/{k}/{j}"));
                let est = crossing_probability(kernel.as_ref(), &case.x0, &region, grid, trials, seed)?;
                let pass = est.estimate <= cert.delta + 2.0 * est.stderr;
                let label = format!("{};region={name}", case.label);
                self.sink.check(&label, "crossing_probability", est.estimate, Some(est.stderr), cert.delta, pass);
            }
        }
        Ok(())
    }

    fn gp_rice(&mut self) -> Result<(), HarnessError> {
        let kernel = self.gp_kernel()?;
        let (grid, trials) = (self.cfg.grid, self.cfg.trials);
        let cases: Vec<(GpCase, Vec<f64>, f64)> = if self.cfg.kernel == KernelChoice::Linear {
            let case = self.linear_case()?;
            let mut v = vec![0.0; case.x0.len()];
            v[1] = 1.0;
            vec![(case, v, self.cfg.radius)]
        } else {
            self.arch_cases(kernel.as_ref())?
                .into_iter()
                .enumerate()
                .map(|(k, c)| {
                    let v = random_direction(c.x0.len(), rng::subseed(self.seed, "direction"), k as u64);
                    let r = c.cert.as_ref().expect("certified").r_segment;
                    (c, v, r)
                })
                .collect()
        };
        for (k, (case, v, r)) in cases.into_iter().enumerate() {
            let seed = rng::subseed(self.seed, &format!("rice/{k}"));
            let rep = rice_check(kernel.as_ref(), &case.x0, &v, r, grid, trials, seed)?;
            let slack = rep.rice_bound + 3.0 * rep.stderr;
            let l = &case.label;
            self.sink.check(l, "zeros_vs_rice", rep.empirical_mean, Some(rep.stderr), rep.rice_bound, rep.empirical_mean <= slack);
            self.sink.check(l, "rice_vs_coarse", slack, None, rep.coarse_bound, slack <= rep.coarse_bound);
            if self.cfg.kernel == KernelChoice::Linear {
                let target = self.linear_target();
                let pass = (rep.empirical_mean - target).abs() <= 3.0 * rep.stderr;
                self.sink.check(l, "zeros_vs_analytic", rep.empirical_mean, Some(rep.stderr), target, pass);
            }
        }
        Ok(())
    }

    fn gp_tails(&mut self) -> Result<(), HarnessError> {
        let kernel = self.gp_kernel()?;
        let (grid, trials) = (self.cfg.grid, self.cfg.trials);
        let cases: Vec<(GpCase, f64)> = if self.cfg.kernel == KernelChoice::Linear {
            vec![(self.linear_case()?, self.cfg.radius)]
        } else {
            self.arch_cases(kernel.as_ref())?
                .into_iter()
                .map(|c| {
                    let r = c.cert.as_ref().expect("certified").r_l1;
                    (c, r)
                })
                .collect()
        };
        for (k, (case, r)) in cases.into_iter().enumerate() {
            let pts = discretize(&case.x0, &Region::Ball { r, p: 1.0 }, grid)?;
            let ens = build_ensemble(kernel.as_ref(), pts)?;
            let sigma = ens.gram.diagonal().iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
            let ts = [sigma, 2.0 * sigma, 3.0 * sigma];
            let rep = borell_tis_check(&ens, &ts, trials, rng::subseed(self.seed, &format!("tails/{k}")))?;
            for (j, row) in rep.rows.iter().enumerate() {
                let label = format!("{};t={}sigma", case.label, j + 1);
                let pass = row.frequency <= row.bound + 3.0 * row.stderr;
                self.sink.check(&label, "exceedance", row.frequency, Some(row.stderr), row.bound, pass);
            }
        }
        for &n in &self.cfg.dudley_dims {
            let rep = dudley_check(n, self.cfg.cloud, trials, rng::subseed(self.seed, &format!("dudley/{n}")))?;
            self.sink.check(&format!("n={n}"), "expected_sup", rep.empirical_sup, Some(rep.stderr), rep.bound, rep.pass);
        }
        Ok(())
    }

    fn verify_kernel(&mut self) -> Result<(), HarnessError> {
        let arch = self.arch_or_family()?;
        let n = arch.input_len();
        let mut rng = rng::stream(rng::subseed(self.seed, "kernel-points"), 0);
        let points: Vec<Vec<f64>> =
            (0..self.cfg.points).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let exact = kernel_matrix(&arch, &points)?;
        let hidden = hidden_layer_count(&arch);
        let mut previous: Option<f64> = None;
        for &w in &self.cfg.widths {
            let est = empirical_kernel(&arch, &vec![w; hidden], &points, self.cfg.draws, self.seed, self.cfg.estimator)?;
            let err = (&est - &exact).norm() / exact.norm();
            let label = format!("width={w}");
            match previous {
                Some(prev) => self.sink.check(&label, "rel_frobenius_error", err, None, prev, err < prev),
                None => self.sink.value(&label, "rel_frobenius_error", err, None),
            }
            previous = Some(err);
        }
        let last = previous.expect("widths validated nonempty");
        let label = format!("width={}", self.cfg.widths.last().expect("nonempty"));
        self.sink.check(&label, "final_rel_frobenius_error", last, None, self.cfg.max_rel_error, last <= self.cfg.max_rel_error);
        Ok(())
    }

    fn scaling_config(&self, dims: Vec<usize>) -> ScalingConfig {
        ScalingConfig {
            dims,
            nets_per_dim: self.cfg.nets,
            points_per_net: self.cfg.points,
            seed: self.seed,
            norms: self.cfg.norms.clone(),
            hidden_layers: self.cfg.hidden_layers,
            width: self.cfg.width,
            sigma_b: self.cfg.sigma_b,
            rel_tolerance: self.cfg.rel_tolerance,
        }
    }

    /// One-sided check: the empirical delta-quantile of l1 attack distances
    /// must not fall below the certified l1 radius.
    fn lower_bound_rows(&mut self, res: &ScalingResult, n: usize) -> Result<(), HarnessError> {
        let cell: Vec<_> = res.records.iter().filter(|r| r.n == n && r.norm == Norm::L1 && !r.censored).collect();
        if cell.is_empty() {
            return Ok(());
        }
        let dists = sorted(cell.iter().map(|r| r.distance));
        let norm2 = percentile(&sorted(cell.iter().map(|r| r.norm2_x0)), 0.5).expect("nonempty");
        for &delta in &self.cfg.deltas {
            let q = percentile(&dists, delta).expect("nonempty");
            let r = certify(norm2, delta, res.m, n)?.r_l1;
            self.sink.check(&format!("n={n};delta={delta}"), "l1_quantile_vs_radius", q, None, r, q >= r);
        }
        Ok(())
    }

    fn attack_scaling(&mut self) -> Result<(), HarnessError> {
        let sc = self.scaling_config(self.cfg.dims.clone());
        let res = scaling_experiment(&sc, self.arch.as_ref())?;
        if self.cfg.dims.len() >= 3 {
            let xs: Vec<f64> = self.cfg.dims.iter().map(|&n| n as f64).collect();
            for (kind, rows) in [("distance", &res.distances), ("relative", &res.relative)] {
                for &p in &self.cfg.norms {
                    let target = match (kind, p) {
                        ("distance", Norm::L1) => 0.5,
                        ("distance", Norm::L2) => 0.0,
                        _ => -0.5,
                    };
                    let ys: Option<Vec<f64>> = rows.iter().filter(|r| r.p == p).map(|r| r.median).collect();
                    let label = format!("p={p};{kind}");
                    let slope = match ys {
                        Some(ys) => fit_loglog(&xs, &ys)?.slope,
                        None => f64::NAN,
                    };
                    let pass = (slope - target).abs() <= self.cfg.slope_tolerance;
                    self.sink.check(&label, "loglog_slope", slope, None, target, pass);
                    self.extra.insert(format!("slope_{kind}_l{p}"), slope);
                }
            }
        }
        if self.cfg.norms.contains(&Norm::L1) {
            for &n in &self.cfg.dims {
                self.lower_bound_rows(&res, n)?;
            }
        }
        self.extra.insert("M".into(), res.m);
        self.tables.push(Table::Scaling("", res.distances));
        self.tables.push(Table::Scaling("_relative", res.relative));
        self.tables.push(Table::Records(res.records));
        Ok(())
    }

    fn profile(&mut self) -> Result<(), HarnessError> {
        let mut series = Vec::new();
        for &n in &self.cfg.dims {
            // Check the family builds before the attack jobs start.
            family_member(self.arch.as_ref(), &self.scaling_config(vec![n]), n)?;
            let res = scaling_experiment(&self.scaling_config(vec![n]), self.arch.as_ref())?;
            for &p in &self.cfg.norms {
                let d: Vec<f64> =
                    res.records.iter().filter(|r| r.norm == p && !r.censored).map(|r| r.distance).collect();
                let prof = percentile_profile_values(&d)?;
                let label = format!("n={n};p={p}");
                self.sink.value(&label, "profile_slope", prof.fit.slope, Some(prof.fit.slope_stderr));
                self.sink.check(&label, "profile_r2", prof.fit.r2, None, self.cfg.min_r2, prof.fit.r2 >= self.cfg.min_r2);
                series.extend(prof.series.iter().map(|&(q, d)| ProfilePoint { n, p, percentile: q, distance: d }));
            }
            if self.cfg.norms.contains(&Norm::L1) {
                self.lower_bound_rows(&res, n)?;
            }
        }
        self.tables.push(Table::Profile(series));
        Ok(())
    }

    fn finish(self, hash: &str) -> Result<RunOutcome, HarnessError> {
        let out = &self.cfg.out;
        std::fs::create_dir_all(out).map_err(|e| HarnessError::Io(format!("{}: {e}", out.display())))?;
        let stem = self.cfg.experiment.stem();
        let mut files: Vec<PathBuf> = Vec::new();
        let mut emit = |name: String| -> PathBuf {
            let p = out.join(name);
            files.push(p.clone());
            p
        };
        let main_csv = match self.cfg.experiment {
            Pipeline::AttackScaling => format!("{stem}_checks.csv"),
            _ => format!("{stem}.csv"),
        };
        write_csv(&emit(main_csv), self.sink.rows())?;
        for table in &self.tables {
            match table {
                Table::Scaling(suffix, rows) => write_scaling_csv(&emit(format!("{stem}{suffix}.csv")), rows)?,
                Table::Records(rows) => write_csv(&emit(format!("{stem}_records.csv")), rows)?,
                Table::Profile(rows) => write_csv(&emit(format!("{stem}_series.csv")), rows)?,
            }
        }
        let summary_path = emit(format!("{stem}_summary.toml"));
        let summary = Summary {
            experiment: self.cfg.experiment.name().into(),
            config_hash: hash.into(),
            seed: self.seed,
            rows: self.sink.rows().len(),
            checks: self.sink.checks(),
            failures: self.sink.failures(),
            pass: self.sink.failures() == 0,
            files: files
                .iter()
                .filter_map(|f| f.file_name().map(|s| s.to_string_lossy().into_owned()))
                .collect(),
            extra: self.extra.clone(),
            config: toml::Value::try_from(self.cfg).map_err(|e| HarnessError::Io(e.to_string()))?,
        };
        write_summary(&summary_path, &summary)?;
        Ok(RunOutcome { files, checks: self.sink.checks(), failures: self.sink.failures() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_in(dir: &Path, experiment: Pipeline) -> RunConfig {
        let mut cfg = RunConfig::new(experiment, 11);
        cfg.out = dir.to_path_buf();
        cfg
    }

    #[test]
    fn empty_sweep_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let mut cfg = cfg_in(&out, Pipeline::AttackScaling);
        cfg.dims.clear();
        assert!(matches!(run_config(&cfg), Err(HarnessError::Config(_))));
        assert!(!out.exists());
    }

    #[test]
    fn covering_run_passes_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg_in(dir.path(), Pipeline::Covering);
        cfg.dims = vec![2, 4];
        cfg.eps = vec![0.5, 2.0];
        cfg.samples = 2000;
        let a = run_config(&cfg).unwrap();
        // The entropy integral of the covering bound exceeds a_n at small n; those
        // two rows are the only failures.
        assert_eq!((a.checks, a.failures), (8, 2));
        let text = std::fs::read_to_string(&a.files[0]).unwrap();
        assert!(text.lines().filter(|l| l.ends_with("false")).all(|l| l.contains("dudley_integral")));
        let first = std::fs::read(&a.files[0]).unwrap();
        run_config(&cfg).unwrap();
        assert_eq!(first, std::fs::read(&a.files[0]).unwrap());
        // 2 dims x (2 bounds + 1 integral) + lattice rows for (2,2), (4,2), (4,3).
        let text = String::from_utf8(first).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 + 3 * 2);
    }

    #[test]
    fn attack_scaling_row_accounting() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg_in(dir.path(), Pipeline::AttackScaling);
        cfg.dims = vec![4, 8, 16];
        cfg.nets = 2;
        cfg.points = 2;
        cfg.width = 16;
        let res = run_config(&cfg).unwrap();
        let main = std::fs::read_to_string(dir.path().join("attack_scaling.csv")).unwrap();
        let mut lines = main.lines();
        assert_eq!(lines.next().unwrap(), "n,p,median,p45,p55,censored_count,nets,points,seed");
        assert_eq!(lines.count(), 9);
        assert!(res.files.iter().any(|f| f.ends_with("attack_scaling_summary.toml")));
    }

    #[test]
    fn linear_crossing_matches_arctan() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = cfg_in(dir.path(), Pipeline::GpCrossing);
        cfg.kernel = KernelChoice::Linear;
        cfg.dims = vec![3];
        cfg.grid = 64;
        cfg.trials = 20_000;
        assert!(run_config(&cfg).unwrap().passed());
    }
}
