//! Config-driven experiment runs. A run is a pure function of its config
//! (seed included); the worker count and wall-clock timings live in the
//! report's `timings` block and nowhere else.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::{box_count_planes, box_dimension_fit, DimensionFit};
use crate::engine::bl::{bl_constant_lower, BlReport};
use crate::engine::family::{admissible_p_max, admissible_p_max_with, dyadic_level};
use crate::engine::{
    generate_sharp_example, kakeya_sweep, verify_bl_bound, CandidateStrategy, ClassifyConfig, FamilyParams, KReading,
    KakeyaSweep, PlaneFamily, TransverseTuple,
};
use crate::error::{GkError, Result};
use crate::grassmann::Subspace;
use crate::selftest::{chart_suite, embedding_suite, geodesic_suite, projection_suite, SuiteReport};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Families above this size skip the per-scale spacing check.
const SPACING_CHECK_CAP: usize = 1 << 14;

/// Redraws allowed per certified tuple in a BL audit.
const TUPLE_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    GeometrySelftest,
    SharpDimension,
    KakeyaSweep,
    BlAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedP {
    /// The admissible maximum.
    Max,
    /// `(p_max + 1)/2`.
    Mid,
}

/// An exponent, either literal or named relative to the admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Value(f64),
    Named(NamedP),
}

fn default_epsilon() -> f64 {
    0.1
}

/// Overrides of the classification constants and exponent conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub c_tilde: Option<f64>,
    #[serde(default)]
    pub c_prime: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub k_reading: KReading,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides { c1: None, c_tilde: None, c_prime: None, epsilon: default_epsilon(), k: None, k_reading: KReading::M }
    }
}

/// Pass/fail bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Allowed distance of the fitted slope from the union dimension.
    pub slope_tolerance: f64,
    pub ratio_bound: f64,
    /// Allowed growth of the ratio per halving of δ.
    pub growth_bound: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { slope_tolerance: 0.15, ratio_bound: 10.0, growth_bound: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<FamilyParams>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub ps: Vec<PValue>,
    #[serde(default)]
    pub seed: u64,
    /// Case count: pairs for the geometry suites (projection uses half as
    /// many), tuples for a BL audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            params: None,
            deltas: vec![],
            ps: vec![],
            seed: 0,
            samples: None,
            overrides: Overrides::default(),
            thresholds: Thresholds::default(),
            workers: None,
            out: None,
            csv: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GkError::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn params(&self) -> Result<FamilyParams> {
        let p = self.params.ok_or_else(|| GkError::InvalidParams(format!("{:?} needs params", self.kind)))?;
        p.validate()?;
        Ok(p)
    }

    /// Admissible maximum under the configured reading.
    pub fn p_max(&self) -> Result<f64> {
        let p = self.params()?;
        admissible_p_max_with(p.l, p.m, p.d, p.beta, self.overrides.k_reading)
    }

    /// Exponents with names resolved, in config order.
    pub fn resolved_ps(&self) -> Result<Vec<f64>> {
        if self.ps.is_empty() {
            return Ok(vec![]);
        }
        let pmax = self.p_max()?;
        self.ps
            .iter()
            .map(|p| {
                let v = match *p {
                    PValue::Value(v) => v,
                    PValue::Named(NamedP::Max) => pmax,
                    PValue::Named(NamedP::Mid) => pmax / 2.0 + 0.5,
                };
                if !(v >= 1.0 && v <= pmax + 1e-12) {
                    return Err(GkError::InvalidExponent { p: v, max: pmax });
                }
                Ok(v)
            })
            .collect()
    }

    /// Constraint check and defaults: scales sorted decreasing without
    /// repeats, per-kind default exponents and case counts.
    pub fn normalized(&self) -> Result<Self> {
        let mut c = self.clone();
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(GkError::InvalidParams(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("c1", c.overrides.c1)?;
        positive("c_tilde", c.overrides.c_tilde)?;
        positive("c_prime", c.overrides.c_prime)?;
        positive("epsilon", Some(c.overrides.epsilon))?;
        positive("slope_tolerance", Some(c.thresholds.slope_tolerance))?;
        positive("ratio_bound", Some(c.thresholds.ratio_bound))?;
        positive("growth_bound", Some(c.thresholds.growth_bound))?;
        if let Some(k) = c.overrides.k {
            if !(k.is_finite() && k > 1.0) {
                return Err(GkError::InvalidParams(format!("K must exceed 1, got {k}")));
            }
        }
        if c.workers == Some(0) {
            return Err(GkError::InvalidParams("workers must be at least 1".into()));
        }
        if c.samples == Some(0) {
            return Err(GkError::InvalidParams("samples must be at least 1".into()));
        }
        for &d in &c.deltas {
            dyadic_level(d)?;
        }
        c.deltas.sort_by(|a, b| b.total_cmp(a));
        c.deltas.dedup();
        match c.kind {
            ExperimentKind::GeometrySelftest => {
                c.samples.get_or_insert(1000);
            }
            ExperimentKind::SharpDimension => {
                c.params()?;
                if c.deltas.len() < 2 {
                    return Err(GkError::InvalidParams("sharp-dimension needs at least two scales".into()));
                }
            }
            ExperimentKind::KakeyaSweep => {
                c.params()?;
                if c.deltas.is_empty() {
                    return Err(GkError::InvalidParams("kakeya-sweep needs at least one scale".into()));
                }
                if c.ps.is_empty() {
                    c.ps = vec![PValue::Value(1.0), PValue::Named(NamedP::Mid), PValue::Named(NamedP::Max)];
                }
            }
            ExperimentKind::BlAudit => {
                c.params()?;
                c.samples.get_or_insert(100);
                if c.ps.is_empty() {
                    c.ps = vec![PValue::Value(1.0), PValue::Named(NamedP::Max)];
                }
            }
        }
        c.resolved_ps()?;
        Ok(c)
    }

    fn classify_config(&self, params: &FamilyParams, p: f64) -> Result<ClassifyConfig> {
        let mut cfg = ClassifyConfig::defaults(params, self.overrides.epsilon, p)?;
        let o = &self.overrides;
        if let Some(k) = o.k {
            cfg.k = k;
        }
        if let Some(c1) = o.c1 {
            cfg.c1 = c1;
        }
        if let Some(ct) = o.c_tilde {
            cfg.c_tilde = ct;
            cfg.c_prime = 10.0 * ct.powi((params.d - params.l + 1) as i32);
        }
        if let Some(cp) = o.c_prime {
            cfg.c_prime = cp;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpRecord {
    pub delta: f64,
    pub members: usize,
    pub cells: usize,
    /// Worst spacing ratio, when the family was small enough to check.
    pub spacing_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlAuditRecord {
    pub tuple: usize,
    pub gram_volume: f64,
    #[serde(flatten)]
    pub report: BlReport,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentResults {
    GeometrySelftest {
        suites: Vec<SuiteReport>,
    },
    SharpDimension {
        target: f64,
        records: Vec<SharpRecord>,
        fit: DimensionFit,
    },
    KakeyaSweep {
        p_max: f64,
        sweeps: Vec<KakeyaSweep>,
    },
    BlAudit {
        p_max: f64,
        certificate_threshold: f64,
        records: Vec<BlAuditRecord>,
        violations: usize,
        /// The functional on `W_1 = span{e1}`, `W_2 = span{e2}` in ℝ² at p = 2.
        coordinate_example: f64,
    },
}

impl ExperimentResults {
    /// One CSV table per result kind.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self {
            ExperimentResults::GeometrySelftest { suites } => {
                out.push_str("suite,metric,value,bound,passes\n");
                for s in suites {
                    for m in &s.metrics {
                        out.push_str(&format!("{},{},{:e},{:e},{}\n", s.suite, m.name, m.value, m.bound, m.passes));
                    }
                }
            }
            ExperimentResults::SharpDimension { records, .. } => {
                out.push_str("delta,members,cells,spacing_ratio\n");
                for r in records {
                    let s = r.spacing_ratio.map_or(String::new(), |v| format!("{v:e}"));
                    out.push_str(&format!("{:e},{},{},{}\n", r.delta, r.members, r.cells, s));
                }
            }
            ExperimentResults::KakeyaSweep { sweeps, .. } => {
                out.push_str("delta,p,members,slab_measure_sum,lhs,rhs,ratio\n");
                for s in sweeps {
                    for r in &s.records {
                        out.push_str(&format!(
                            "{:e},{},{},{:e},{:e},{:e},{:e}\n",
                            r.delta, r.p, r.members, r.slab_measure_sum, r.lhs, r.rhs, r.ratio
                        ));
                    }
                }
            }
            ExperimentResults::BlAudit { records, .. } => {
                out.push_str("tuple,p,lower_bound,rhs,slack,violation,best_dim\n");
                for r in records {
                    let b = &r.report;
                    out.push_str(&format!("{},{},{},{},{},{},{}\n", r.tuple, b.p, b.lower_bound, b.rhs, b.slack, b.violation, b.best_dim));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passes: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passes: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passes, detail: detail.into() }
}

/// Non-reproducible context of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub workers: usize,
    pub total_seconds: f64,
    pub stages: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub results: ExperimentResults,
    pub checks: Vec<Check>,
    pub passes: bool,
    pub timings: Timings,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// The report without its `timings` block: the part fixed by config and seed.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        serde_json::to_string(&v).expect("value serializes")
    }
}

struct Stopwatch {
    stages: BTreeMap<String, f64>,
}

impl Stopwatch {
    fn time<T>(&mut self, name: impl Into<String>, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f()?;
        self.stages.insert(name.into(), t.elapsed().as_secs_f64());
        Ok(out)
    }
}

/// Parse and constraint-check a config file; returns the normalized config.
pub fn validate(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path)?.normalized()
}

/// Runs an experiment on a pool of `workers` threads (default: all cores)
/// and, when the config names output paths, writes the JSON report and
/// CSV table atomically.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let config = config.normalized()?;
    let workers = config.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| GkError::InvalidInput(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mut sw = Stopwatch { stages: BTreeMap::new() };
    let (results, checks) = pool.install(|| run_kind(&config, &mut sw))?;
    let passes = checks.iter().all(|c| c.passes);
    let mut echo = config.clone();
    echo.workers = None;
    echo.out = None;
    echo.csv = None;
    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: echo,
        results,
        checks,
        passes,
        timings: Timings { workers, total_seconds: start.elapsed().as_secs_f64(), stages: sw.stages },
    };
    if let Some(path) = &config.out {
        write_atomic(path, report.to_json().as_bytes())?;
    }
    if let Some(path) = &config.csv {
        write_atomic(path, report.results.to_csv().as_bytes())?;
    }
    Ok(report)
}

/// Temp file in the target directory, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| GkError::Io(e.to_string()))?;
    Ok(())
}

fn run_kind(config: &ExperimentConfig, sw: &mut Stopwatch) -> Result<(ExperimentResults, Vec<Check>)> {
    match config.kind {
        ExperimentKind::GeometrySelftest => run_selftest(config, sw),
        ExperimentKind::SharpDimension => run_sharp(config, sw),
        ExperimentKind::KakeyaSweep => run_kakeya(config, sw),
        ExperimentKind::BlAudit => run_bl_audit(config, sw),
    }
}

fn run_selftest(config: &ExperimentConfig, sw: &mut Stopwatch) -> Result<(ExperimentResults, Vec<Check>)> {
    let n = config.samples.unwrap_or(1000);
    let seed = config.seed;
    let suites = vec![
        sw.time("geodesic", || geodesic_suite(seed, n))?,
        sw.time("projection", || projection_suite(seed, n.div_ceil(2), 200))?,
        sw.time("embedding", || embedding_suite(seed, n))?,
        sw.time("chart", || chart_suite(seed, n))?,
    ];
    let checks = suites
        .iter()
        .map(|s| {
            let failing: Vec<&str> = s.metrics.iter().filter(|m| !m.passes).map(|m| m.name.as_str()).collect();
            let detail = if failing.is_empty() { format!("{} cases", s.cases) } else { format!("failing: {}", failing.join(", ")) };
            check(format!("{}-suite", s.suite), s.passes, detail)
        })
        .collect();
    Ok((ExperimentResults::GeometrySelftest { suites }, checks))
}

fn run_sharp(config: &ExperimentConfig, sw: &mut Stopwatch) -> Result<(ExperimentResults, Vec<Check>)> {
    let params = config.params()?;
    let mut records = Vec::with_capacity(config.deltas.len());
    for &delta in &config.deltas {
        let rec = sw.time(format!("delta={delta:e}"), || {
            let fam = generate_sharp_example(params, delta)?;
            let cells = box_count_planes(&fam.members, delta)?;
            let spacing_ratio = if fam.len() <= SPACING_CHECK_CAP { Some(fam.check_spacing()?.worst_ratio) } else { None };
            Ok(SharpRecord { delta, members: fam.len(), cells, spacing_ratio })
        })?;
        records.push(rec);
    }
    let deltas: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let counts: Vec<usize> = records.iter().map(|r| r.cells).collect();
    let fit = box_dimension_fit(&deltas, &counts)?;
    let target = params.union_dimension();
    let tol = config.thresholds.slope_tolerance;
    let checks = vec![check(
        "box-count-slope",
        (fit.slope - target).abs() <= tol,
        format!("slope {:.4} vs {target} ± {tol}", fit.slope),
    )];
    Ok((ExperimentResults::SharpDimension { target, records, fit }, checks))
}

fn run_kakeya(config: &ExperimentConfig, sw: &mut Stopwatch) -> Result<(ExperimentResults, Vec<Check>)> {
    let params = config.params()?;
    let families: Vec<PlaneFamily> = sw.time("families", || {
        config.deltas.iter().map(|&d| generate_sharp_example(params, d)).collect::<Result<Vec<_>>>()
    })?;
    let t = config.thresholds;
    let mut sweeps = Vec::new();
    let mut checks = Vec::new();
    for p in config.resolved_ps()? {
        let s = sw.time(format!("p={p}"), || kakeya_sweep(&families, p, config.overrides.epsilon, t.ratio_bound, t.growth_bound))?;
        checks.push(check(
            format!("kakeya-ratio p={p}"),
            s.passes,
            format!("max ratio {:.4} (< {}), max growth {:.4} (<= {})", s.max_ratio, t.ratio_bound, s.max_growth, t.growth_bound),
        ));
        sweeps.push(s);
    }
    Ok((ExperimentResults::KakeyaSweep { p_max: config.p_max()?, sweeps }, checks))
}

/// The functional on the coordinate axes of ℝ² at p = 2.
pub fn coordinate_example_value() -> Result<f64> {
    let ws = [Subspace::coordinate(2, &[0]), Subspace::coordinate(2, &[1])];
    Ok(bl_constant_lower(&ws, 2.0, &CandidateStrategy::default())?.value)
}

/// Draws `count` tuples of random directions in G(m−l, n−l) certified at
/// `threshold`, redrawing tuples that fall short.
pub fn random_certified_tuples(params: &FamilyParams, count: usize, threshold: f64, seed: u64) -> Result<Vec<TransverseTuple>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let q = params.n - params.l;
    let k = params.m - params.l;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..TUPLE_ATTEMPTS {
            let dirs: Vec<Subspace> = (0..params.tuple_len()).map(|_| Subspace::random(&mut rng, q, k)).collect();
            if let Ok(t) = TransverseTuple::from_directions(&dirs, threshold) {
                found = Some(t);
                break;
            }
        }
        out.push(found.ok_or_else(|| {
            GkError::InvalidParams(format!("no random tuple reached Gram volume {threshold:e} in {TUPLE_ATTEMPTS} draws"))
        })?);
    }
    Ok(out)
}

fn run_bl_audit(config: &ExperimentConfig, sw: &mut Stopwatch) -> Result<(ExperimentResults, Vec<Check>)> {
    let params = config.params()?;
    let ps = config.resolved_ps()?;
    let p_top = ps.iter().copied().fold(1.0, f64::max);
    let threshold = config.classify_config(&params, p_top)?.broad_threshold(&params);
    let count = config.samples.unwrap_or(100);
    let tuples = sw.time("tuples", || random_certified_tuples(&params, count, threshold, config.seed))?;
    let records = sw.time("audit", || {
        let mut out = Vec::new();
        for (i, t) in tuples.iter().enumerate() {
            let strategy = CandidateStrategy { seed: config.seed.wrapping_add(i as u64), ..CandidateStrategy::default() };
            for &p in &ps {
                out.push(BlAuditRecord { tuple: i, gram_volume: t.gram_volume, report: verify_bl_bound(t, &params, p, &strategy)? });
            }
        }
        Ok(out)
    })?;
    let violations = records.iter().filter(|r| r.report.violation).count();
    let coordinate_example = coordinate_example_value()?;
    let min_slack = records.iter().map(|r| r.report.slack).fold(f64::INFINITY, f64::min);
    let checks = vec![
        check("bl-bound", violations == 0, format!("{violations} violations in {} evaluations, least slack {min_slack:.6}", records.len())),
        check("bl-coordinate-example", coordinate_example == 0.0, format!("value {coordinate_example}")),
    ];
    Ok((
        ExperimentResults::BlAudit {
            p_max: admissible_p_max(params.l, params.m, params.d, params.beta)?,
            certificate_threshold: threshold,
            records,
            violations,
            coordinate_example,
        },
        checks,
    ))
}
