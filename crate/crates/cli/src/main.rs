use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use fracbloom::dyadic::{build_adjacent_systems, build_dyadic_system, verify_dyadic_axioms, DyadicSystem};
use fracbloom::experiment::{run, ExperimentConfig, Report, Status, Suite};
use fracbloom::generate::{generate_space, log_uniform_weight, power_weight, random_symbol, SpaceGenerator};
use fracbloom::kernel::{adjoint, adjoint_size_bound, certify, CertifyOptions, KernelFamily, KernelSpec};
use fracbloom::lower_bound::{
    bound_oscillation, median_decomposition, LowerMethod, LowerOptions, Orientation, SpaceConstants,
};
use fracbloom::operator::{operator_norm, NormMethod, NormOptions, OperatorMatrix};
use fracbloom::space::SpaceModel;
use fracbloom::sparse_bound::{test_function_corpus, verify_upper_bound};
use fracbloom::weights::{bloom_tuple, bmo_fractional_norm, verify_bloom_bounds, WeightProfile};
use fracbloom::{Complex64, Error};

#[derive(Parser)]
#[command(name = "fracbloom", version, about = "Two-weight commutator bounds on finite spaces of homogeneous type")]
struct Cli {
    /// Seed for generated spaces, weights, symbols and dyadic systems.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance for inequality checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Write the JSON result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quasi-triangle and doubling constants of a space.
    Space {
        #[command(subcommand)]
        action: SpaceAction,
    },
    /// Dyadic systems.
    Dyadic {
        #[command(subcommand)]
        action: DyadicAction,
    },
    /// Weight characteristics and weighted BMO.
    Weights {
        #[command(subcommand)]
        action: WeightsAction,
    },
    /// Kernel certificates.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
    /// Operator norms.
    Op {
        #[command(subcommand)]
        action: OpAction,
    },
    /// Upper and lower commutator bounds.
    Verify {
        #[command(subcommand)]
        action: VerifyAction,
    },
    /// Factorisation of the oscillation test function on one ball.
    Awf {
        #[command(subcommand)]
        action: AwfAction,
    },
    /// Median split of a ball and its companion.
    Median {
        #[command(subcommand)]
        action: MedianAction,
    },
    /// Run the suites of a config file.
    Run {
        config: PathBuf,
        /// Restrict to these suites (repeatable).
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
}

#[derive(Args, Clone)]
struct SpaceArg {
    /// Space file, or generator shorthand such as `grid-1d:16`, `tree:32`, `snowflake:8:0.5`.
    #[arg(long)]
    space: String,
}

#[derive(Args, Clone)]
struct WeightArgs {
    /// `unit`, `log-uniform:SPREAD`, `power:ANCHOR:GAMMA`, or a JSON file with an array.
    #[arg(long, default_value = "unit")]
    lambda1: String,
    #[arg(long, default_value = "unit")]
    lambda2: String,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
}

#[derive(Args, Clone)]
struct KernelArg {
    /// Kernel family name or a JSON kernel spec file.
    #[arg(long, default_value = "power-sign")]
    kernel: String,
}

#[derive(Args, Clone)]
struct SymbolArg {
    /// `random`, `random-complex`, or a JSON file with numbers or `[re, im]` pairs.
    #[arg(long, default_value = "random")]
    symbol: String,
}

#[derive(Subcommand)]
enum SpaceAction {
    Profile(SpaceArg),
}

#[derive(Subcommand)]
enum DyadicAction {
    Build {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        delta: Option<f64>,
    },
    Verify {
        #[command(flatten)]
        space: SpaceArg,
        #[arg(long)]
        delta: Option<f64>,
        /// Verify a saved system instead of building one.
        #[arg(long)]
        system: Option<PathBuf>,
        /// Number of adjacent systems to build.
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
}

#[derive(Subcommand)]
enum WeightsAction {
    /// `[λ1]_{A_{p,p}}` and `[λ2]_{A_{q,q}}`.
    Char {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        weights: WeightArgs,
    },
    /// Fractional weighted BMO norm against the Bloom weight.
    Bmo {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        symbol: SymbolArg,
    },
    /// Ball-wise comparison of the weight products with the Bloom weight.
    Bloom {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        weights: WeightArgs,
    },
}

#[derive(Subcommand)]
enum KernelAction {
    Certify {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        kernel: KernelArg,
        #[arg(long, default_value_t = 4.0)]
        c_bar: f64,
    },
}

#[derive(Subcommand)]
enum OpAction {
    /// Norm of `T`, or of `[b, T]` when `--commutator` is set.
    Norm {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        kernel: KernelArg,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        symbol: SymbolArg,
        #[arg(long)]
        commutator: bool,
        /// `svd-exact`, `brute-oracle` or `multistart-ascent`.
        #[arg(long, default_value = "svd-exact")]
        method: String,
    },
}

#[derive(Subcommand)]
enum VerifyAction {
    Upper {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        kernel: KernelArg,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        symbol: SymbolArg,
        #[arg(long, default_value_t = 3)]
        systems: u64,
    },
    Lower {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        kernel: KernelArg,
        #[command(flatten)]
        weights: WeightArgs,
        #[command(flatten)]
        symbol: SymbolArg,
        /// `median` or `awf`.
        #[arg(long, default_value = "awf")]
        method: String,
    },
}

#[derive(Subcommand)]
enum AwfAction {
    Decompose {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        kernel: KernelArg,
        #[command(flatten)]
        symbol: SymbolArg,
        #[arg(long)]
        center: usize,
        #[arg(long)]
        radius: f64,
        /// Run on `T` (`opp`) or on `T*` (`std`).
        #[arg(long, default_value = "std")]
        orientation: String,
    },
}

#[derive(Subcommand)]
enum MedianAction {
    Decompose {
        #[command(flatten)]
        space: SpaceArg,
        #[command(flatten)]
        symbol: SymbolArg,
        /// Base ball as `CENTER:RADIUS`.
        #[arg(long)]
        base: String,
        /// Companion ball as `CENTER:RADIUS`.
        #[arg(long)]
        companion: String,
    },
}

/// What a command produced: JSON plus whether every checked invariant held.
struct Outcome {
    value: Value,
    ok: bool,
}

impl Outcome {
    fn pass<T: Serialize>(v: &T) -> Result<Self, Error> {
        Ok(Outcome {
            value: serde_json::to_value(v)?,
            ok: true,
        })
    }

    fn checked<T: Serialize>(v: &T, ok: bool) -> Result<Self, Error> {
        Ok(Outcome {
            value: serde_json::to_value(v)?,
            ok,
        })
    }
}

fn load_space(arg: &SpaceArg, seed: u64) -> Result<SpaceModel, Error> {
    let path = Path::new(&arg.space);
    if path.exists() {
        SpaceModel::load(path)
    } else {
        generate_space(&SpaceGenerator::parse_short(&arg.space, seed)?)
    }
}

fn read_json(path: &str) -> Result<Value, Error> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn parse_weight(text: &str, space: &SpaceModel, seed: u64) -> Result<Vec<f64>, Error> {
    let n = space.len();
    let parts: Vec<&str> = text.split(':').collect();
    let num = |i: usize| -> Result<f64, Error> {
        parts
            .get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parameter {
                name: "weight",
                detail: format!("cannot read `{text}`"),
            })
    };
    let w = match parts[0] {
        "unit" => vec![1.0; n],
        "log-uniform" => log_uniform_weight(n, num(1)?, seed),
        "power" => power_weight(space, num(1)? as usize, num(2)?),
        _ => serde_json::from_value(read_json(text)?)?,
    };
    WeightProfile::new(w.clone())?;
    if w.len() != n {
        return Err(Error::Parameter {
            name: "weight",
            detail: format!("expected {n} values, got {}", w.len()),
        });
    }
    Ok(w)
}

fn weights(args: &WeightArgs, space: &SpaceModel, seed: u64) -> Result<(Vec<f64>, Vec<f64>), Error> {
    Ok((
        parse_weight(&args.lambda1, space, seed)?,
        parse_weight(&args.lambda2, space, seed.wrapping_add(0x5eed))?,
    ))
}

fn symbol(arg: &SymbolArg, space: &SpaceModel, seed: u64) -> Result<Vec<Complex64>, Error> {
    let n = space.len();
    let b: Vec<Complex64> = match arg.symbol.as_str() {
        "random" => random_symbol(n, false, seed.wrapping_add(1)),
        "random-complex" => random_symbol(n, true, seed.wrapping_add(1)),
        path => match read_json(path)? {
            Value::Array(items) => items
                .into_iter()
                .map(|v| match v {
                    Value::Number(x) => Ok(Complex64::new(x.as_f64().unwrap_or(f64::NAN), 0.0)),
                    other => Ok(serde_json::from_value(other)?),
                })
                .collect::<Result<_, Error>>()?,
            _ => {
                return Err(Error::Parameter {
                    name: "symbol",
                    detail: "expected a JSON array".into(),
                })
            }
        },
    };
    if b.len() != n {
        return Err(Error::Parameter {
            name: "symbol",
            detail: format!("expected {n} values, got {}", b.len()),
        });
    }
    Ok(b)
}

fn kernel(arg: &KernelArg) -> Result<KernelSpec, Error> {
    let quoted = Value::String(arg.kernel.clone());
    match serde_json::from_value::<KernelFamily>(quoted) {
        Ok(family) => Ok(KernelSpec::new(family)),
        Err(_) => Ok(serde_json::from_value(read_json(&arg.kernel)?)?),
    }
}

fn parse_ball(text: &str, space: &SpaceModel) -> Result<Vec<usize>, Error> {
    let bad = || Error::Parameter {
        name: "ball",
        detail: format!("expected CENTER:RADIUS, got `{text}`"),
    };
    let (c, r) = text.split_once(':').ok_or_else(bad)?;
    let c: usize = c.parse().map_err(|_| bad())?;
    let r: f64 = r.parse().map_err(|_| bad())?;
    if c >= space.len() {
        return Err(bad());
    }
    let ball = space.make_ball(c, r);
    Ok(space.members(&ball).to_vec())
}

fn execute(cli: &Cli) -> Result<Outcome, Error> {
    let seed = cli.seed;
    match &cli.command {
        Command::Space {
            action: SpaceAction::Profile(s),
        } => Outcome::pass(&load_space(s, seed)?.profile()),

        Command::Dyadic { action } => match action {
            DyadicAction::Build { space, delta } => {
                let s = load_space(space, seed)?;
                Outcome::pass(&build_dyadic_system(&s, *delta, seed)?)
            }
            DyadicAction::Verify {
                space,
                delta,
                system,
                count,
            } => {
                let s = load_space(space, seed)?;
                let systems: Vec<DyadicSystem> = match system {
                    Some(p) => vec![serde_json::from_value(read_json(&p.to_string_lossy())?)?],
                    None => build_adjacent_systems(&s, *delta, &(0..*count).map(|k| seed.wrapping_add(k)).collect::<Vec<_>>())?,
                };
                let reports: Vec<_> = systems.iter().map(|sys| verify_dyadic_axioms(&s, sys)).collect();
                let ok = reports.iter().all(|r| r.passed);
                Outcome::checked(&reports, ok)
            }
        },

        Command::Weights { action } => match action {
            WeightsAction::Char { space, weights: w } => {
                let s = load_space(space, seed)?;
                let (l1, l2) = weights(w, &s, seed)?;
                let c1 = WeightProfile::new(l1)?.app(&s, w.p)?;
                let c2 = WeightProfile::new(l2)?.app(&s, w.q)?;
                Outcome::pass(&json!({ "lambda1": c1, "lambda2": c2, "p": w.p, "q": w.q }))
            }
            WeightsAction::Bmo { space, weights: w, symbol: sym } => {
                let s = load_space(space, seed)?;
                let (l1, l2) = weights(w, &s, seed)?;
                let b = symbol(sym, &s, seed)?;
                let t = bloom_tuple(&l1, &l2, w.p, w.q, 1.0)?;
                let norm = bmo_fractional_norm(&s, &b, &t.nu, t.alpha_over_q);
                Outcome::pass(&json!({ "norm": norm, "alpha_over_q": t.alpha_over_q, "nu": t.nu }))
            }
            WeightsAction::Bloom { space, weights: w } => {
                let s = load_space(space, seed)?;
                let (l1, l2) = weights(w, &s, seed)?;
                let r = verify_bloom_bounds(&s, &l1, &l2, w.p, w.q, cli.tol)?;
                let ok = r.passed;
                Outcome::checked(&r, ok)
            }
        },

        Command::Kernel {
            action: KernelAction::Certify { space, kernel: k, c_bar },
        } => {
            let s = load_space(space, seed)?;
            let spec = kernel(k)?;
            let opts = CertifyOptions { c_bar: *c_bar };
            let cert = certify(&spec, &s, opts)?;
            let adj = certify(&adjoint(&spec), &s, opts)?;
            let d = s.doubling_profile();
            let (holds, lhs, bound) = adjoint_size_bound(&cert, &adj, d.c_mu, d.q);
            Outcome::checked(
                &json!({ "certificate": cert, "adjoint_size_bound": { "holds": holds, "lhs": lhs, "bound": bound } }),
                holds,
            )
        }

        Command::Op {
            action:
                OpAction::Norm {
                    space,
                    kernel: k,
                    weights: w,
                    symbol: sym,
                    commutator,
                    method,
                },
        } => {
            let s = load_space(space, seed)?;
            let (l1, l2) = weights(w, &s, seed)?;
            let op = OperatorMatrix::new(&kernel(k)?, &s)?;
            let m = if *commutator {
                op.commutator_matrix(&symbol(sym, &s, seed)?)
            } else {
                op.matrix()
            };
            let method: NormMethod = method.parse()?;
            let opts = NormOptions {
                seed,
                ..NormOptions::default()
            };
            Outcome::pass(&operator_norm(&s, &m, w.p, Some(&l1), w.q, Some(&l2), method, opts)?)
        }

        Command::Verify { action } => match action {
            VerifyAction::Upper {
                space,
                kernel: k,
                weights: w,
                symbol: sym,
                systems,
            } => {
                let s = load_space(space, seed)?;
                let (l1, l2) = weights(w, &s, seed)?;
                let b = symbol(sym, &s, seed)?;
                let op = OperatorMatrix::new(&kernel(k)?, &s)?;
                let seeds: Vec<u64> = (0..*systems).map(|j| seed.wrapping_mul(1000).wrapping_add(j)).collect();
                let sys = build_adjacent_systems(&s, None, &seeds)?;
                let tests = test_function_corpus(&s, &sys[0], 4, seed);
                let r = verify_upper_bound(&s, &op, &b, w.p, w.q, &l1, &l2, &sys, &tests)?;
                let ok = r.chains_hold && r.rows.iter().all(|row| row.c_dom.is_finite());
                Outcome::checked(&r, ok)
            }
            VerifyAction::Lower {
                space,
                kernel: k,
                weights: w,
                symbol: sym,
                method,
            } => {
                let s = load_space(space, seed)?;
                let (l1, l2) = weights(w, &s, seed)?;
                let b = symbol(sym, &s, seed)?;
                let op = OperatorMatrix::new(&kernel(k)?, &s)?;
                let method: LowerMethod = method.parse()?;
                let exact = w.p == 2.0 && w.q == 2.0;
                let est = operator_norm(
                    &s,
                    &op.commutator_matrix(&b),
                    w.p,
                    Some(&l1),
                    w.q,
                    Some(&l2),
                    if exact { NormMethod::SvdExact } else { NormMethod::MultistartAscent },
                    NormOptions {
                        seed,
                        ..NormOptions::default()
                    },
                )?;
                let r = fracbloom::lower_bound::lower_bound_bmo(
                    &s,
                    &op,
                    &b,
                    w.p,
                    w.q,
                    &l1,
                    &l2,
                    est.value(),
                    method,
                    LowerOptions::default(),
                )?;
                let ok = r.final_ratio.is_finite() && (r.all_hold || est.upper.is_none());
                Outcome::checked(&json!({ "theta_certified": est.upper.is_some(), "report": r }), ok)
            }
        },

        Command::Awf {
            action:
                AwfAction::Decompose {
                    space,
                    kernel: k,
                    symbol: sym,
                    center,
                    radius,
                    orientation,
                },
        } => {
            let s = load_space(space, seed)?;
            if *center >= s.len() {
                return Err(Error::Parameter {
                    name: "center",
                    detail: format!("no point {center}"),
                });
            }
            let b = symbol(sym, &s, seed)?;
            let op = OperatorMatrix::new(&kernel(k)?, &s)?;
            let orientation: Orientation = serde_json::from_value(Value::String(orientation.clone()))?;
            let r = bound_oscillation(
                &s,
                &op,
                &b,
                s.make_ball(*center, *radius),
                orientation,
                None,
                LowerOptions::default(),
                SpaceConstants::of(&s),
            )?;
            Outcome::pass(&r)
        }

        Command::Median {
            action:
                MedianAction::Decompose {
                    space,
                    symbol: sym,
                    base,
                    companion,
                },
        } => {
            let s = load_space(space, seed)?;
            let b = symbol(sym, &s, seed)?;
            let d = median_decomposition(&s, &b, &parse_ball(base, &s)?, &parse_ball(companion, &s)?)?;
            Outcome::pass(&d)
        }

        Command::Run { config, suites } => {
            let mut cfg = ExperimentConfig::load(config)?;
            if !suites.is_empty() {
                cfg.suites = suites.iter().map(|s| s.parse::<Suite>()).collect::<Result<_, _>>()?;
            }
            let report = run(&cfg)?;
            let target = cli.out.clone().or_else(|| cfg.output.clone());
            if let Some(path) = &target {
                write_side_tables(&report, path)?;
            }
            let ok = report.violations == 0 && report.errors == 0;
            Outcome::checked(&report, ok)
        }
    }
}

/// One CSV per lower-bound result with the per-ball rows, next to the report.
fn write_side_tables(report: &Report, path: &Path) -> Result<(), Error> {
    let stem = path.with_extension("");
    for r in &report.results {
        let Some(rows) = r.data.get("rows").and_then(Value::as_array) else {
            continue;
        };
        if !matches!(r.suite, Suite::LowerMedian | Suite::LowerAwf) {
            continue;
        }
        let file = PathBuf::from(format!("{}.{}.{}.csv", stem.display(), r.suite.name(), r.seed));
        let mut w = csv::Writer::from_path(file).map_err(csv_error)?;
        let cols = [
            "size", "center", "radius", "companion_center", "a", "eps", "xi", "xi_dual", "xi_star", "oscillation", "constant",
            "transfer", "transfer_bound", "holds", "skip",
        ];
        w.write_record(cols).map_err(csv_error)?;
        for row in rows {
            let cells: Vec<String> = cols
                .iter()
                .map(|c| match &row[*c] {
                    Value::Null => String::new(),
                    Value::String(s) => s.clone(),
                    v => v.to_string(),
                })
                .collect();
            w.write_record(&cells).map_err(csv_error)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_violation() {
        1
    } else if e.is_capability() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            let text = match serde_json::to_string_pretty(&outcome.value) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            let written = match &cli.out {
                Some(p) => std::fs::write(p, text + "\n"),
                None => {
                    use std::io::Write;
                    match writeln!(std::io::stdout().lock(), "{text}") {
                        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                        other => other,
                    }
                }
            };
            if let Err(e) = written {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if let Some(results) = outcome.value.get("results").and_then(Value::as_array) {
                for r in results {
                    let status: Option<Status> = serde_json::from_value(r["status"].clone()).ok();
                    if status != Some(Status::Pass) {
                        eprintln!("{} seed {}: {}", r["suite"], r["seed"], r["message"]);
                    }
                }
            }
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
