//! Stage orchestration, output files and exit codes.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aniso_field::covariance::{
    empirical_c2, fingerprint, gram, increment_gram, strong_lnd_scan, variogram, Gram, LndConfiguration,
};
use aniso_field::estimators::{
    chung_statistic, dyadic_levels, estimate_small_ball, fit_small_ball_exponent, lil_constants,
    lil_ratio_convergence, local_modulus_statistic, uniform_modulus_statistic, Direction, LevelRecord, Metric,
    ModulusReport, PointPair, MAX_LEVEL, MAX_PAIRS,
};
use aniso_field::sampler::{cholesky_factor, empirical_cov, ks_critical, marginal_normality, sample_ensemble, Ensemble};
use aniso_field::{
    delta_metric, derive_exponents, validate_model, Error, Execution, Exponents, FieldModel, Point, SpdeModel,
};
use nalgebra::DMatrix;
use serde_json::json;

use crate::cache::Cache;
use crate::config::{self, RunConfig};
use crate::report::{RunReport, StageReport, Verdict};
use crate::Stage;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERDICT: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidModel(_)
            | Error::ExponentCondition(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidArgument(_) => Failure::Validation(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("output: {e}"))
    }
}

type StageResult = Result<StageReport, Failure>;

const STAGES: [(Stage, &str); 7] = [
    (Stage::Validate, "validate"),
    (Stage::Cov, "cov"),
    (Stage::Sample, "sample"),
    (Stage::Smallball, "smallball"),
    (Stage::Chung, "chung"),
    (Stage::Modulus, "modulus"),
    (Stage::Lilconst, "lilconst"),
];

pub fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::All => "all",
        s => STAGES.iter().find(|(t, _)| *t == s).map(|(_, n)| *n).unwrap_or("all"),
    }
}

pub fn execute(stage: Stage, opts: &Options) -> u8 {
    let mut cfg = match config::load(&opts.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        cfg.sampler.master_seed = seed;
    }
    let exec = match configure_threads(opts.threads) {
        Ok(e) => e,
        Err(m) => {
            eprintln!("error: {m}");
            return EXIT_VALIDATION;
        }
    };
    let out = cfg.output_dir.clone();
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_NUMERICAL;
    }

    let mut report = RunReport::new(stage_name(stage), cfg.clone());
    report.metadata.threads = opts.threads;
    let mut ctx = Context::new(cfg, exec);
    let order: Vec<(Stage, &str)> = match stage {
        Stage::All => STAGES.to_vec(),
        s => vec![(s, stage_name(s))],
    };
    let mut code = EXIT_OK;
    for (s, name) in order {
        let started = Instant::now();
        let result = ctx.run(s);
        report
            .metadata
            .wall_clock_seconds
            .insert(name.to_string(), started.elapsed().as_secs_f64());
        match result {
            Ok(r) => {
                for v in &r.verdicts {
                    println!("{} {name} [{}] {}", if v.pass { "PASS" } else { "FAIL" }, v.criterion, v.detail);
                }
                report.add(name, r)
            }
            Err(f) => {
                let (c, m) = match f {
                    Failure::Validation(m) => (EXIT_VALIDATION, m),
                    Failure::Numerical(m) => (EXIT_NUMERICAL, m),
                };
                eprintln!("error in {name}: {m}");
                report.error = Some(format!("{name}: {m}"));
                report.passed = false;
                code = c;
                break;
            }
        }
    }
    report.constants = ctx.constants.clone();
    report.metadata.cache_hits = ctx.cache.hits;
    report.metadata.cache_misses = ctx.cache.misses;
    report.metadata.finished_unix_seconds = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    if let Err(e) = write_json(&out.join("report.json"), &report) {
        eprintln!("error: {e}");
        return EXIT_NUMERICAL;
    }
    if code == EXIT_OK && !report.passed {
        code = EXIT_VERDICT;
    }
    code
}

fn configure_threads(threads: Option<usize>) -> Result<Execution, String> {
    match threads {
        Some(0) => Err("--threads must be at least 1".into()),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            // A second build in the same process is harmless; the first pool stays.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None if cfg!(feature = "parallel") => Ok(Execution::Parallel),
        None => Ok(Execution::Sequential),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Numerical(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn verdict(criterion: &str, pass: bool, detail: String) -> Verdict {
    Verdict {
        criterion: criterion.to_string(),
        pass,
        detail,
    }
}


/// State shared by the stages of one invocation.
struct Context {
    cfg: RunConfig,
    exec: Execution,
    cache: Cache,
    constants: crate::report::MeasuredConstants,
    points: Option<Vec<Point>>,
    exps: Option<Exponents>,
    increments: Option<(Ensemble, DMatrix<f64>)>,
}

impl Context {
    fn new(cfg: RunConfig, exec: Execution) -> Self {
        let cache = Cache::new(cfg.output_dir.join("cache"));
        Self {
            cfg,
            exec,
            cache,
            constants: Default::default(),
            points: None,
            exps: None,
            increments: None,
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn run(&mut self, stage: Stage) -> StageResult {
        match stage {
            Stage::Validate => self.validate(),
            Stage::Cov => self.cov(),
            Stage::Sample => self.sample(),
            Stage::Smallball => self.smallball(),
            Stage::Chung => self.chung(),
            Stage::Modulus => self.modulus(),
            Stage::Lilconst => self.lilconst(),
            Stage::All => unreachable!("expanded by execute"),
        }
    }

    /// Model checks, grid construction and level consistency; every stage
    /// runs this first.
    fn prepare(&mut self) -> Result<(), Failure> {
        if self.points.is_some() {
            return Ok(());
        }
        let report = validate_model(&self.cfg.model);
        if let Some(f) = report.failures().next() {
            return Err(Failure::Validation(format!("{}: {}", f.name, f.detail)));
        }
        self.cfg.quadrature.validate()?;
        let exps = derive_exponents(&self.cfg.model)?;
        let points = aniso_field::grid::build_grid(&self.cfg.model, &self.cfg.grid)?;
        if points.len() < 2 {
            return Err(Failure::Validation("grid needs at least two points".into()));
        }
        if let Some(domain) = &self.cfg.domain {
            domain.validate(&self.cfg.model)?;
            if let Some(p) = points.iter().find(|p| !domain.contains(p)) {
                return Err(Failure::Validation(format!("grid point {} lies outside the domain", p.label())));
            }
        }
        let delta = self.deltas_with(&points, &exps)?;
        let resolution = delta.iter().skip(1).copied().fold(f64::INFINITY, f64::min);
        let reach = delta.iter().copied().fold(0.0, f64::max);
        for (name, levels) in self.level_blocks()? {
            for l in levels {
                if l < resolution {
                    return Err(Failure::Validation(format!(
                        "{name}: level {l} is below the grid resolution {resolution:.3e}"
                    )));
                }
                if name == "small_ball" && l > reach {
                    return Err(Failure::Validation(format!(
                        "small_ball: radius {l} exceeds the grid reach {reach:.3e}"
                    )));
                }
            }
        }
        self.exps = Some(exps);
        self.points = Some(points);
        Ok(())
    }

    fn level_blocks(&self) -> Result<Vec<(&'static str, Vec<f64>)>, Failure> {
        let e = &self.cfg.estimators;
        let mut blocks = Vec::new();
        if let Some(sb) = &e.small_ball {
            if sb.levels.is_empty() {
                return Err(Failure::Validation("small_ball: levels must not be empty".into()));
            }
            blocks.push(("small_ball", sb.levels.iter().map(|l| l.0).collect()));
        }
        if let Some(c) = &e.chung {
            blocks.push(("chung", c.radii.clone()));
        }
        if let Some(m) = &e.modulus {
            blocks.push(("modulus", m.levels.clone()));
        }
        Ok(blocks)
    }

    fn points(&self) -> &[Point] {
        self.points.as_deref().expect("prepared")
    }

    fn exps(&self) -> &Exponents {
        self.exps.as_ref().expect("prepared")
    }

    /// Δ from every point to the first grid point.
    fn deltas_with(&self, points: &[Point], exps: &Exponents) -> Result<Vec<f64>, Failure> {
        Ok(points
            .iter()
            .map(|p| delta_metric(p, &points[0], exps))
            .collect::<aniso_field::Result<_>>()?)
    }

    fn deltas(&self) -> Result<Vec<f64>, Failure> {
        self.deltas_with(self.points(), self.exps())
    }

    /// Dyadic levels 2^{−n} that the grid resolves: at most min(reach, 0.1)
    /// and no finer than the closest grid point.
    fn default_levels(&self, delta: &[f64]) -> Result<Vec<f64>, Failure> {
        let resolution = delta.iter().skip(1).copied().fold(f64::INFINITY, f64::min);
        let reach = delta.iter().copied().fold(0.0, f64::max).min(MAX_LEVEL);
        let from = (1.0 / reach).log2().ceil() as i32;
        let to = (1.0 / resolution).log2().floor() as i32;
        if to <= from {
            return Err(Failure::Validation(format!(
                "grid resolves fewer than two dyadic levels (Δ from {resolution:.3e} to {reach:.3e})"
            )));
        }
        Ok(dyadic_levels(from, to)?)
    }

    fn key(&self) -> String {
        fingerprint(&self.cfg.model, self.points(), &self.cfg.quadrature)
    }

    fn plain_gram(&mut self) -> Result<Gram, Failure> {
        let key = self.key();
        let (model, spec, exec) = (self.cfg.model.clone(), self.cfg.quadrature.clone(), self.exec);
        let pts = self.points().to_vec();
        Ok(self.cache.gram(&key, || gram(&model, &pts, &spec, exec))?)
    }

    fn variogram(&mut self) -> Result<DMatrix<f64>, Failure> {
        let key = format!("variogram-{}", self.key());
        let (model, spec, exec) = (self.cfg.model.clone(), self.cfg.quadrature.clone(), self.exec);
        let pts = self.points().to_vec();
        Ok(self.cache.matrix(&key, || variogram(&model, &pts, &spec, exec))?)
    }

    /// Ensemble of v − v(first grid point), plus the variogram it came from.
    fn increments(&mut self) -> Result<(Ensemble, DMatrix<f64>), Failure> {
        if let Some(i) = &self.increments {
            return Ok(i.clone());
        }
        let v = self.variogram()?;
        let key = format!("increment-{}", self.key());
        let (model, spec) = (self.cfg.model.clone(), self.cfg.quadrature.clone());
        let pts = self.points().to_vec();
        let g = self.cache.gram(&key, || increment_gram(&model, &pts, 0, &v, &spec))?;
        let f = cholesky_factor(&g)?;
        let e = sample_ensemble(&f, self.cfg.sampler.n_paths, self.cfg.sampler.master_seed, self.exec)?;
        self.increments = Some((e, v));
        Ok(self.increments.clone().expect("just set"))
    }

    fn validate(&mut self) -> StageResult {
        self.prepare()?;
        let exps = self.exps().clone();
        let checks = validate_model(&self.cfg.model);
        let consistent = match (&self.cfg.model, exps.theta1, exps.theta2) {
            (FieldModel::Spde(m), Some(t1), Some(t2)) => {
                let q = 1.0 / t1 + m.dim as f64 / t2;
                (t2 - m.alpha * t1).abs() <= 4.0 * f64::EPSILON * t2 && (exps.big_q - q).abs() <= 4.0 * f64::EPSILON * q
            }
            (FieldModel::Product(m), _, _) => {
                let q: f64 = m.alphas.iter().map(|a| 1.0 / a).sum();
                (exps.big_q - q).abs() <= 4.0 * f64::EPSILON * q
            }
            _ => false,
        };
        Ok(StageReport {
            verdicts: vec![verdict(
                "1-exponents",
                checks.passed() && consistent,
                format!(
                    "theta1 {}, theta2 {}, Q {}; {} grid points",
                    show(exps.theta1),
                    show(exps.theta2),
                    exps.big_q,
                    self.points().len()
                ),
            )],
            outputs: vec![],
            data: json!({
                "exponents": exps,
                "checks": checks.checks,
                "grid_points": self.points().len(),
            }),
        })
    }

    fn cov(&mut self) -> StageResult {
        self.prepare()?;
        let g = self.plain_gram()?;
        g.write_csv(create(&self.out("gram.csv"))?)?;
        Ok(StageReport {
            verdicts: vec![verdict(
                "9-gram-psd",
                g.min_eigenvalue >= -1e-8 * g.matrix.trace(),
                format!(
                    "{} points, min eigenvalue {:.3e}, max quadrature error {:.3e}",
                    g.len(),
                    g.min_eigenvalue,
                    g.max_error
                ),
            )],
            outputs: vec!["gram.csv".into()],
            data: json!({
                "fingerprint": g.model_fingerprint,
                "points": g.len(),
                "min_eigenvalue": g.min_eigenvalue,
                "max_error": g.max_error,
                "trace": g.matrix.trace(),
            }),
        })
    }

    fn sample(&mut self) -> StageResult {
        self.prepare()?;
        let g = self.plain_gram()?;
        let f = cholesky_factor(&g)?;
        let sc = self.cfg.sampler.clone();
        let e = sample_ensemble(&f, sc.n_paths, sc.master_seed, self.exec)?;
        let mut outputs = vec!["ensemble.bin".to_string()];
        e.write_binary(create(&self.out("ensemble.bin"))?)?;
        if sc.write_csv {
            e.write_csv(create(&self.out("ensemble.csv"))?)?;
            outputs.push("ensemble.csv".into());
        }
        let recon = f.reconstruction_error(&g.matrix);
        let mut verdicts = vec![verdict(
            "9-factor-reconstruction",
            recon <= 1e-8,
            format!("relative reconstruction error {recon:.3e}, jitter {:.3e}", f.jitter_applied),
        )];
        let marg = marginal_normality(&e, &g.matrix)?;
        let n_tested = marg.statistics.iter().filter(|s| s.is_finite()).count().max(1);
        let bonferroni = ks_critical(e.n_paths(), 0.01 / n_tested as f64);
        let worst = marg.statistics.iter().copied().filter(|s| s.is_finite()).fold(0.0, f64::max);
        verdicts.push(verdict(
            "9-marginal-normality",
            worst <= bonferroni,
            format!("max KS {worst:.4} against the Bonferroni 1% value {bonferroni:.4}"),
        ));
        let mut data = json!({
            "n_paths": e.n_paths(),
            "n_points": e.n_points(),
            "master_seed": e.master_seed,
            "jitter": f.jitter_applied,
            "reconstruction_error": recon,
            "ks_max": worst,
            "ks_flagged_1pct": marg.flagged.len(),
        });
        if e.n_paths() > 1 {
            let c = empirical_cov(&e)?;
            let frob = (&c - &g.matrix).norm() / g.matrix.norm();
            data["covariance_frobenius_error"] = json!(frob);
            // The 3% bound is calibrated for the 50 000-path regime.
            if e.n_paths() >= 50_000 {
                verdicts.push(verdict(
                    "9-empirical-covariance",
                    frob <= 0.03,
                    format!("relative Frobenius error {frob:.4} over {} paths", e.n_paths()),
                ));
            }
        }
        Ok(StageReport { verdicts, outputs, data })
    }

    fn smallball(&mut self) -> StageResult {
        self.prepare()?;
        let delta = self.deltas()?;
        let levels = match &self.cfg.estimators.small_ball {
            Some(sb) => sb.levels.clone(),
            None => {
                let r = delta.iter().copied().fold(0.0, f64::max).min(MAX_LEVEL);
                (0..=18).map(|k| (r, r / (1.2 + 0.1 * k as f64))).collect()
            }
        };
        let (e, _) = self.increments()?;
        let curve = estimate_small_ball(&e, 0, &delta, &levels, self.exec)?;
        curve.write_csv(create(&self.out("smallball.csv"))?)?;
        let q = self.exps().big_q;
        let (pass, detail, fit) = match fit_small_ball_exponent(&curve) {
            Ok(f) => (
                (0.8 * q..=1.2 * q).contains(&f.slope),
                format!("Q̂ = {:.3} ± {:.3} against Q = {q} (band [{:.2}, {:.2}])", f.slope, f.slope_se, 0.8 * q, 1.2 * q),
                Some(f),
            ),
            Err(err) => (false, format!("fit failed: {err}"), None),
        };
        Ok(StageReport {
            verdicts: vec![verdict("6-small-ball-exponent", pass, detail)],
            outputs: vec!["smallball.csv".into()],
            data: json!({
                "fit": fit,
                "q": q,
                "grid_warning": curve.entries.iter().any(|s| s.grid_warning),
                "entries": curve.entries,
            }),
        })
    }

    fn chung(&mut self) -> StageResult {
        self.prepare()?;
        let delta = self.deltas()?;
        let radii = match &self.cfg.estimators.chung {
            Some(c) => c.radii.clone(),
            None => self.default_levels(&delta)?,
        };
        let (e, _) = self.increments()?;
        let q = self.exps().big_q;
        let report = chung_statistic(&e, 0, &delta, &radii, q, self.exec)?;
        report.write_csv(create(&self.out("modulus_chung.csv"))?)?;
        let flipped = chung_statistic(&negate(&e), 0, &delta, &radii, q, self.exec)?;
        let m = report.liminf_median;
        Ok(StageReport {
            verdicts: vec![
                verdict(
                    "8-chung-liminf",
                    m.is_finite() && m > 0.0,
                    format!("liminf proxy median {m:.4} over {} paths", e.n_paths()),
                ),
                verdict("8-sign-flip", flipped == report, "statistic unchanged under v → −v".into()),
            ],
            outputs: vec!["modulus_chung.csv".into()],
            data: summary(&report),
        })
    }

    fn modulus(&mut self) -> StageResult {
        self.prepare()?;
        let delta = self.deltas()?;
        let (e, v) = self.increments()?;
        let n = e.n_points();
        let canonical: Vec<f64> = (0..n).map(|i| v[(i, 0)].max(0.0).sqrt()).collect();
        self.measure_constants(&canonical, &delta)?;
        let (metric, uniform) = match &self.cfg.estimators.modulus {
            Some(m) => (m.metric, m.uniform),
            None => (Metric::Canonical, true),
        };
        let dist = match metric {
            Metric::Canonical => canonical,
            Metric::Delta => delta.clone(),
        };
        let levels = match &self.cfg.estimators.modulus {
            Some(m) => m.levels.clone(),
            None => self.default_levels(&dist)?,
        };

        let local = local_modulus_statistic(&e, 0, &dist, &levels, metric, None, self.exec)?;
        local.write_csv(create(&self.out("modulus_local.csv"))?)?;
        let flipped = negate(&e);
        let mut flip_ok = local_modulus_statistic(&flipped, 0, &dist, &levels, metric, None, self.exec)? == local;
        let mut verdicts = Vec::new();
        match local.reference_band {
            Some((lo, hi)) => {
                let (lo, hi) = (lo / 1.4, hi * 1.4);
                verdicts.push(verdict(
                    "8-local-modulus",
                    (lo..=hi).contains(&local.limsup_median),
                    format!("limsup proxy median {:.4} in [{lo:.3}, {hi:.3}]", local.limsup_median),
                ));
            }
            None => verdicts.push(verdict(
                "8-local-modulus",
                local.limsup_median.is_finite() && local.limsup_median > 0.0,
                format!("limsup proxy median {:.4} (no reference band for Δ)", local.limsup_median),
            )),
        }
        let mut outputs = vec!["modulus_local.csv".to_string()];
        let mut data = json!({ "local": summary(&local) });

        if uniform {
            let pairs = self.pairs(&v, metric)?;
            let band = match (metric, self.constants.c1, self.constants.c2) {
                (Metric::Canonical, Some(c1), Some(c2)) => {
                    let q = self.exps().big_q;
                    Some(((2.0 * q * c2).sqrt() / c1, (2.0 * q).sqrt()))
                }
                _ => None,
            };
            let uni = uniform_modulus_statistic(&e, &pairs, &levels, metric, band, self.exec)?;
            uni.write_csv(create(&self.out("modulus_uniform.csv"))?)?;
            flip_ok &= uniform_modulus_statistic(&flipped, &pairs, &levels, metric, band, self.exec)? == uni;
            verdicts.push(match band {
                Some((lo, hi)) => {
                    let (lo, hi) = (lo / 1.5, hi * 1.5);
                    verdict(
                        "8-uniform-modulus",
                        (lo..=hi).contains(&uni.limsup_median),
                        format!(
                            "limsup proxy median {:.4} in [{lo:.3}, {hi:.3}] over {} pairs",
                            uni.limsup_median,
                            pairs.len()
                        ),
                    )
                }
                None => verdict(
                    "8-uniform-modulus",
                    uni.limsup_median.is_finite() && uni.limsup_median > 0.0,
                    format!("limsup proxy median {:.4} (no reference band)", uni.limsup_median),
                ),
            });
            outputs.push("modulus_uniform.csv".into());
            data["uniform"] = summary(&uni);
            data["pairs"] = json!(pairs.len());
        }
        verdicts.push(verdict("8-sign-flip", flip_ok, "statistics unchanged under v → −v".into()));
        data["constants"] = json!(self.constants);
        Ok(StageReport { verdicts, outputs, data })
    }

    /// All grid pairs (a seeded subsample above the pair cap) with distances
    /// from the variogram or Δ.
    fn pairs(&self, v: &DMatrix<f64>, metric: Metric) -> Result<Vec<PointPair>, Failure> {
        let pts = self.points();
        let n = pts.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let distance = match metric {
                    Metric::Canonical => v[(i, j)].max(0.0).sqrt(),
                    Metric::Delta => delta_metric(&pts[i], &pts[j], self.exps())?,
                };
                pairs.push(PointPair { i, j, distance });
            }
        }
        if pairs.len() > MAX_PAIRS {
            let stride = pairs.len().div_ceil(MAX_PAIRS);
            pairs = pairs.into_iter().step_by(stride).collect();
        }
        Ok(pairs)
    }

    /// c₁, c₃ from d/Δ against the first grid point, c₂ from conditioning it
    /// on its nearest grid neighbours.
    fn measure_constants(&mut self, canonical: &[f64], delta: &[f64]) -> Result<(), Failure> {
        let ratios: Vec<f64> = (1..delta.len())
            .filter(|&i| delta[i] > 0.0)
            .map(|i| canonical[i] / delta[i])
            .collect();
        self.constants.c1 = ratios.iter().copied().reduce(f64::max);
        self.constants.c3 = ratios.iter().copied().reduce(f64::min);
        let mut order: Vec<usize> = (1..delta.len()).filter(|&i| delta[i] > 0.0).collect();
        order.sort_by(|&a, &b| delta[a].total_cmp(&delta[b]).then(a.cmp(&b)));
        order.truncate(16);
        if !order.is_empty() {
            let pts = self.points();
            let cfg = LndConfiguration {
                target: pts[0].clone(),
                conditioning: order.iter().map(|&i| pts[i].clone()).collect(),
            };
            let r = strong_lnd_scan(&self.cfg.model, &[cfg], &self.cfg.quadrature, self.exec)?;
            self.constants.c2 = Some(empirical_c2(&r).0);
        }
        Ok(())
    }

    fn lilconst(&mut self) -> StageResult {
        self.prepare()?;
        let FieldModel::Spde(model) = self.cfg.model.clone() else {
            return Ok(StageReport {
                verdicts: vec![],
                outputs: vec![],
                data: json!({ "skipped": "LIL constants are defined for SPDE models only" }),
            });
        };
        let (base, s_values) = match &self.cfg.estimators.lilconst {
            Some(l) => (l.base.clone(), l.s_values.clone()),
            None => (self.points()[0].clone(), vec![1e-1, 1e-2, 1e-3]),
        };
        if s_values.is_empty() {
            return Err(Failure::Validation("lilconst: s_values must not be empty".into()));
        }
        lil_report(&model, &base, &s_values, self)
    }
}

fn lil_report(
    model: &SpdeModel,
    base: &Point,
    s_values: &[f64],
    ctx: &Context,
) -> StageResult {
    let spec = &ctx.cfg.quadrature;
    let k = lil_constants(model, spec)?;
    let time = lil_ratio_convergence(model, base, s_values, Direction::Time, spec, ctx.exec)?;
    let space = lil_ratio_convergence(model, base, s_values, Direction::Space, spec, ctx.exec)?;
    let body = json!({ "constants": k, "time_ratios": time, "space_ratios": space });
    write_json(&ctx.out("lilconst.json"), &body)?;
    let smallest = |r: &[aniso_field::estimators::LilRatio]| {
        r.iter().min_by(|a, b| a.s.total_cmp(&b.s)).copied().expect("non-empty")
    };
    let (t, x) = (smallest(&time), smallest(&space));
    let gap_t = (t.scaled_ratio - k.kappa5).abs() / k.kappa5;
    let gap_x = (x.scaled_ratio - k.kappa6).abs() / k.kappa6;
    let verdicts = vec![
        verdict(
            "7-dual-quadrature",
            k.kappa5_method_gap <= 5e-3 && k.kappa6_method_gap <= 5e-3,
            format!(
                "κ5 {:.10} (method gap {:.1e}), κ6 {:.10} (method gap {:.1e})",
                k.kappa5, k.kappa5_method_gap, k.kappa6, k.kappa6_method_gap
            ),
        ),
        verdict(
            "7-ratio-convergence",
            gap_t <= 0.02 && gap_x <= 0.02,
            format!(
                "√2·ratio at s = {:.0e}: time {:.6} ({gap_t:.2e}), space {:.6} ({gap_x:.2e})",
                t.s, t.scaled_ratio, x.scaled_ratio
            ),
        ),
    ];
    Ok(StageReport {
        verdicts,
        outputs: vec!["lilconst.json".into()],
        data: body,
    })
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| x.to_string())
}

fn negate(e: &Ensemble) -> Ensemble {
    Ensemble {
        values: -&e.values,
        ..e.clone()
    }
}

/// Report data for a modulus statistic without the per-path arrays.
fn summary(r: &ModulusReport) -> serde_json::Value {
    let levels: Vec<serde_json::Value> = r
        .levels
        .iter()
        .map(|l: &LevelRecord| {
            json!({
                "scale": l.scale,
                "count": l.count,
                "median": l.median,
                "q10": l.q10,
                "q90": l.q90,
                "max": l.max,
            })
        })
        .collect();
    json!({
        "statistic": r.statistic,
        "metric": r.metric,
        "levels": levels,
        "liminf_median": r.liminf_median,
        "limsup_median": r.limsup_median,
        "reference_band": r.reference_band,
    })
}
