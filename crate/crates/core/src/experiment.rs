//! Config-driven runs of the verification suites.
//!
//! A run is deterministic given its config: every random choice is derived
//! from the listed seeds. Reports carry wall-clock times, which
//! [`Report::strip_timings`] clears for comparison.

use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dyadic::{augment_sparse_family, build_adjacent_systems, verify_dyadic_axioms, verify_sparse};
use crate::error::{Error, Result};
use crate::generate::{generate_space, log_uniform_weight, power_weight, random_symbol, SpaceGenerator};
use crate::kernel::{adjoint, adjoint_size_bound, certify, CertifyOptions, KernelSpec};
use crate::lower_bound::{lower_bound_bmo, LowerMethod, LowerOptions};
use crate::operator::{operator_norm, NormMethod, NormOptions, OperatorMatrix};
use crate::space::{SpaceModel, SpaceProfile};
use crate::sparse_bound::{stopping_family, test_function_corpus, verify_upper_bound, TestFunction};
use crate::weights::{check_exponents, verify_bloom_bounds};

/// Where the space comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceSource {
    Generator(SpaceGenerator),
    File(PathBuf),
}

/// The weight pair `(λ1, λ2)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightSource {
    #[default]
    Unit,
    /// `exp(spread · u)` with `u` uniform in `[-1, 1]`, seeded per run seed.
    LogUniform { spread: f64 },
    /// `(1 + d(x, anchor))^gamma`.
    Power { anchor: usize, gamma1: f64, gamma2: f64 },
    Values { lambda1: Vec<f64>, lambda2: Vec<f64> },
}

/// The symbol `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SymbolSource {
    /// Entries uniform in `[-1, 1]` (or the unit square), seeded per run seed.
    Random {
        #[serde(default)]
        complex: bool,
    },
    Values {
        re: Vec<f64>,
        #[serde(default)]
        im: Option<Vec<f64>>,
    },
}

impl Default for SymbolSource {
    fn default() -> Self {
        SymbolSource::Random { complex: false }
    }
}

impl SymbolSource {
    fn is_real(&self) -> bool {
        match self {
            SymbolSource::Random { complex } => !complex,
            SymbolSource::Values { im, .. } => im.as_ref().map_or(true, |v| v.iter().all(|&x| x == 0.0)),
        }
    }
}

/// Suites in the order they run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Dyadic,
    BloomWeights,
    KernelCert,
    Upper,
    LowerMedian,
    LowerAwf,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Dyadic,
        Suite::BloomWeights,
        Suite::KernelCert,
        Suite::Upper,
        Suite::LowerMedian,
        Suite::LowerAwf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Dyadic => "dyadic",
            Suite::BloomWeights => "bloom-weights",
            Suite::KernelCert => "kernel-cert",
            Suite::Upper => "upper",
            Suite::LowerMedian => "lower-median",
            Suite::LowerAwf => "lower-awf",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::param("suites", format!("unknown suite `{s}`")))
    }
}

fn default_p() -> f64 {
    2.0
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_tol() -> f64 {
    1e-9
}
fn default_systems() -> usize {
    3
}
fn default_signs() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceSource,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub weights: WeightSource,
    #[serde(default)]
    pub symbol: SymbolSource,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_p")]
    pub q: f64,
    pub suites: Vec<Suite>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Adjacent dyadic systems for the upper and dyadic suites.
    #[serde(default = "default_systems")]
    pub systems: usize,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Seeded `±1` test functions added to the upper-bound corpus.
    #[serde(default = "default_signs")]
    pub signs: usize,
    #[serde(default)]
    pub norm: NormOptions,
    #[serde(default)]
    pub lower: LowerOptions,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks everything that does not need the space.
    pub fn validate(&self) -> Result<()> {
        check_exponents(self.p, self.q)?;
        if self.suites.is_empty() {
            return Err(Error::param("suites", "select at least one suite"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "give at least one seed"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::param("tol", format!("need a positive tolerance, got {}", self.tol)));
        }
        if self.systems == 0 {
            return Err(Error::param("systems", "need at least one dyadic system"));
        }
        if self.suites.contains(&Suite::LowerMedian) && !self.symbol.is_real() {
            return Err(Error::param("symbol", "suite lower-median needs a real symbol"));
        }
        if let WeightSource::LogUniform { spread } = self.weights {
            if !(spread >= 0.0 && spread.is_finite()) {
                return Err(Error::param("weights.spread", format!("need spread >= 0, got {spread}")));
            }
        }
        Ok(())
    }

    pub fn load_space(&self) -> Result<SpaceModel> {
        match &self.space {
            SpaceSource::Generator(g) => generate_space(g),
            SpaceSource::File(p) => SpaceModel::load(p),
        }
    }

    /// `(λ1, λ2)` for one run seed.
    pub fn weights_for(&self, space: &SpaceModel, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = space.len();
        let pair = match &self.weights {
            WeightSource::Unit => (vec![1.0; n], vec![1.0; n]),
            WeightSource::LogUniform { spread } => (
                log_uniform_weight(n, *spread, seed),
                log_uniform_weight(n, *spread, seed.wrapping_add(0x5eed)),
            ),
            WeightSource::Power { anchor, gamma1, gamma2 } => {
                if *anchor >= n {
                    return Err(Error::param("weights.anchor", format!("anchor {anchor} outside {n} points")));
                }
                (power_weight(space, *anchor, *gamma1), power_weight(space, *anchor, *gamma2))
            }
            WeightSource::Values { lambda1, lambda2 } => (lambda1.clone(), lambda2.clone()),
        };
        for (name, w) in [("weights.lambda1", &pair.0), ("weights.lambda2", &pair.1)] {
            if w.len() != n {
                return Err(Error::param(name, format!("expected {n} values, got {}", w.len())));
            }
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::param(name, "weights must be positive and finite"));
            }
        }
        Ok(pair)
    }

    pub fn symbol_for(&self, space: &SpaceModel, seed: u64) -> Result<Vec<Complex64>> {
        let n = space.len();
        match &self.symbol {
            SymbolSource::Random { complex } => Ok(random_symbol(n, *complex, seed.wrapping_add(1))),
            SymbolSource::Values { re, im } => {
                if re.len() != n || im.as_ref().is_some_and(|v| v.len() != n) {
                    return Err(Error::param("symbol", format!("expected {n} values")));
                }
                Ok((0..n)
                    .map(|i| Complex64::new(re[i], im.as_ref().map_or(0.0, |v| v[i])))
                    .collect())
            }
        }
    }

    fn system_seeds(&self, seed: u64) -> Vec<u64> {
        (0..self.systems as u64).map(|k| seed.wrapping_mul(1000).wrapping_add(k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    /// An invariant that holds by construction or by theorem failed.
    Violation,
    /// A size or budget limit stopped the suite.
    Skipped,
    Error,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub seed: u64,
    pub status: Status,
    pub message: Option<String>,
    pub data: Value,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: ExperimentConfig,
    pub space: SpaceProfile,
    pub results: Vec<SuiteResult>,
    pub violations: usize,
    pub skipped: usize,
    pub errors: usize,
    pub elapsed_ms: f64,
}

impl Report {
    /// Zeroes every wall-clock field.
    pub fn strip_timings(&mut self) {
        self.elapsed_ms = 0.0;
        for r in &mut self.results {
            r.elapsed_ms = 0.0;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Instance<'a> {
    space: &'a SpaceModel,
    op: &'a OperatorMatrix,
    l1: Vec<f64>,
    l2: Vec<f64>,
    b: Vec<Complex64>,
    seed: u64,
}

type Outcome = Result<(bool, Value)>;

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn run_dyadic(cfg: &ExperimentConfig, it: &Instance) -> Outcome {
    let systems = build_adjacent_systems(it.space, cfg.delta, &cfg.system_seeds(it.seed))?;
    let mut ok = true;
    let mut rows = Vec::new();
    for sys in &systems {
        let axioms = verify_dyadic_axioms(it.space, sys);
        let family = stopping_family(it.space, sys, &it.b);
        let aug = augment_sparse_family(it.space, sys, &it.b, &family);
        let sparse = verify_sparse(it.space, sys, &aug.family);
        let expected_eta = family.eta / (2.0 * (family.eta + 1.0));
        let good = axioms.passed && axioms.measured.a_dy > 0.0 && sparse.passed && aug.family.eta == expected_eta;
        ok &= good;
        rows.push(json!({
            "seed": sys.seed,
            "delta": sys.delta,
            "levels": sys.levels.len(),
            "axioms": axioms,
            "augmented_cubes": aug.family.cubes.len(),
            "augmented_eta": aug.family.eta,
            "domination_constant": aug.constant,
            "sparse": sparse,
        }));
    }
    Ok((ok, json!({ "systems": rows })))
}

fn run_bloom_weights(cfg: &ExperimentConfig, it: &Instance) -> Outcome {
    let r = verify_bloom_bounds(it.space, &it.l1, &it.l2, cfg.p, cfg.q, cfg.tol)?;
    Ok((r.passed, to_value(&r)?))
}

fn run_kernel_cert(cfg: &ExperimentConfig, it: &Instance) -> Outcome {
    let opts = CertifyOptions {
        c_bar: cfg.lower.c_bar,
    };
    let cert = certify(&cfg.kernel, it.space, opts)?;
    let adj = certify(&adjoint(&cfg.kernel), it.space, opts)?;
    let d = it.space.doubling_profile();
    let (holds, lhs, bound) = adjoint_size_bound(&cert, &adj, d.c_mu, d.q);
    Ok((
        holds,
        json!({
            "certificate": cert,
            "adjoint_c_k": adj.c_k,
            "adjoint_size_bound": { "holds": holds, "lhs": lhs, "bound": bound },
        }),
    ))
}

fn commutator_norm(cfg: &ExperimentConfig, it: &Instance) -> Result<(f64, bool, Value)> {
    let m = it.op.commutator_matrix(&it.b);
    let exact = cfg.p == 2.0 && cfg.q == 2.0;
    let method = if exact { NormMethod::SvdExact } else { NormMethod::MultistartAscent };
    let opts = NormOptions {
        seed: it.seed,
        ..cfg.norm
    };
    let est = operator_norm(it.space, &m, cfg.p, Some(&it.l1), cfg.q, Some(&it.l2), method, opts)?;
    let certified = est.upper.is_some();
    Ok((
        est.value(),
        certified,
        json!({ "method": est.method, "lower": est.lower, "upper": est.upper, "witness": est.witness }),
    ))
}

fn run_upper(cfg: &ExperimentConfig, it: &Instance) -> Outcome {
    let systems = build_adjacent_systems(it.space, cfg.delta, &cfg.system_seeds(it.seed))?;
    let mut tests = test_function_corpus(it.space, &systems[0], cfg.signs, it.seed);
    let (theta, certified, norm) = commutator_norm(cfg, it)?;
    if let Some(w) = norm["witness"].as_array().filter(|w| !w.is_empty()) {
        let values: Vec<Complex64> = serde_json::from_value(Value::Array(w.clone()))?;
        tests.push(TestFunction {
            label: "ascent".into(),
            values,
        });
    }
    let r = verify_upper_bound(it.space, it.op, &it.b, cfg.p, cfg.q, &it.l1, &it.l2, &systems, &tests)?;
    let dominated = r.rows.iter().all(|row| row.c_dom.is_finite());
    Ok((
        r.chains_hold && dominated,
        json!({
            "commutator_norm": { "value": theta, "certified": certified, "estimate": norm },
            "bmo_norm": r.bmo_norm,
            "char_lambda1": r.char_lambda1,
            "char_lambda2": r.char_lambda2,
            "max_ratio": r.max_ratio,
            "max_c_dom": r.max_c_dom,
            "chains_hold": r.chains_hold,
            "rows": r.rows.iter().map(|row| json!({
                "label": row.label,
                "commutator_norm": row.commutator_norm,
                "f_norm": row.f_norm,
                "ratio": row.ratio,
                "c_dom": row.c_dom,
                "chains": row.chains,
            })).collect::<Vec<_>>(),
        }),
    ))
}

fn run_lower(cfg: &ExperimentConfig, it: &Instance, method: LowerMethod) -> Outcome {
    let (theta, certified, norm) = commutator_norm(cfg, it)?;
    let r = lower_bound_bmo(it.space, it.op, &it.b, cfg.p, cfg.q, &it.l1, &it.l2, theta, method, cfg.lower)?;
    // the per-ball chain is a theorem only when theta bounds the norm from above
    let ok = r.final_ratio.is_finite() && (r.all_hold || !certified);
    let mut data = to_value(&r)?;
    data["theta_certified"] = json!(certified);
    data["theta_estimate"] = norm;
    Ok((ok, data))
}

/// Runs the selected suites for every seed, in dependency order.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let space = config.load_space()?;
    let profile = space.profile();
    let op = OperatorMatrix::new(&config.kernel, &space)?;
    let mut suites = config.suites.clone();
    suites.sort();
    suites.dedup();

    let mut results = Vec::new();
    for &seed in &config.seeds {
        let (l1, l2) = config.weights_for(&space, seed)?;
        let b = config.symbol_for(&space, seed)?;
        let it = Instance {
            space: &space,
            op: &op,
            l1,
            l2,
            b,
            seed,
        };
        for &suite in &suites {
            let t = Instant::now();
            let outcome = match suite {
                Suite::Dyadic => run_dyadic(config, &it),
                Suite::BloomWeights => run_bloom_weights(config, &it),
                Suite::KernelCert => run_kernel_cert(config, &it),
                Suite::Upper => run_upper(config, &it),
                Suite::LowerMedian => run_lower(config, &it, LowerMethod::Median),
                Suite::LowerAwf => run_lower(config, &it, LowerMethod::Awf),
            };
            let (status, message, data) = match outcome {
                Ok((true, d)) => (Status::Pass, None, d),
                Ok((false, d)) => (Status::Violation, Some("an invariant failed; see data".to_string()), d),
                Err(e) if e.is_capability() => (Status::Skipped, Some(e.to_string()), Value::Null),
                Err(e) if e.is_violation() => (Status::Violation, Some(e.to_string()), Value::Null),
                Err(e) => (Status::Error, Some(e.to_string()), Value::Null),
            };
            results.push(SuiteResult {
                suite,
                seed,
                status,
                message,
                data,
                elapsed_ms: t.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    let count = |s: Status| results.iter().filter(|r| r.status == s).count();
    Ok(Report {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        space: profile,
        violations: count(Status::Violation),
        skipped: count(Status::Skipped),
        errors: count(Status::Error),
        results,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;

    fn minimal() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "space": {"generator": {"kind": "grid-1d", "size": 4}},
                "kernel": {"family": "hilbert-grid"},
                "suites": ["bloom-weights"]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn minimal_config_passes_weight_products() {
        let cfg = minimal();
        assert_eq!(cfg.kernel.family, KernelFamily::HilbertGrid);
        let r = run(&cfg).unwrap();
        assert_eq!(r.results.len(), 1);
        assert_eq!(r.results[0].status, Status::Pass);
        assert_eq!(r.results[0].data["passed"], json!(true));
    }

    #[test]
    fn reports_repeat_exactly() {
        let mut cfg = minimal();
        cfg.suites = Suite::ALL.to_vec();
        cfg.weights = WeightSource::LogUniform { spread: 0.2 };
        cfg.seeds = vec![3, 4];
        let mut a = run(&cfg).unwrap();
        let mut b = run(&cfg).unwrap();
        a.strip_timings();
        b.strip_timings();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.violations, 0, "{}", a.to_json().unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = minimal();
        cfg.p = 3.0;
        match run(&cfg) {
            Err(Error::Parameter { name, .. }) => assert_eq!(name, "exponents"),
            other => panic!("{other:?}"),
        }
        let mut cfg = minimal();
        cfg.suites = vec![Suite::LowerMedian];
        cfg.symbol = SymbolSource::Random { complex: true };
        assert!(matches!(cfg.validate(), Err(Error::Parameter { name: "symbol", .. })));
        let text = r#"{"space": {"generator": {"kind": "grid-1d", "size": 4}}, "kernel": {"family": "hilbert-grid"}, "suites": [], "bogus": 1}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Json(_))));
    }
}
