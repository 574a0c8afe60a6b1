//! Command-line surface: `eval`, `expand`, `verify`, and `character`.
//!
//! Reports are line-delimited JSON so runs can be diffed as golden files;
//! identical command + seed produces a byte-identical stream. Exit codes:
//! 0 all checks passed, 1 an identity check failed, 2 usage or domain error.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::appell::{phi_direct, phi_eval_plan, phi_formal, phi_resolve, EvalPoint, PhiComponent, PhiSpec};
use crate::characters::{char_expand, char_general, char_via_definition, CharKind, ModuleLabel};
use crate::error::{Error, Result};
use crate::halfint::HalfInt;
use crate::identities::{
    check_identity, list_identities, param_grid, CheckMode, GridConfig, IdentityId,
    IdentityReport, Sampling, IDENTITY_COUNT,
};
use crate::series::{rat_int, Region, TruncationBox};
use crate::thetas::{dedekind_eta, theta_km_rational, vartheta, MumfordLabel, ThetaIndex};

/// A parsed invocation.
#[derive(Clone, Debug)]
pub enum Command {
    Eval {
        function: String,
        m: HalfInt,
        s: HalfInt,
        k: HalfInt,
        a: u8,
        b: u8,
        alternating: bool,
        component: PhiComponent,
        tau: Complex64,
        z: Complex64,
        z1: Complex64,
        z2: Complex64,
        t: Complex64,
        plan: bool,
    },
    Expand {
        function: String,
        m: HalfInt,
        s: HalfInt,
        k: HalfInt,
        alternating: bool,
        component: PhiComponent,
        q_order: i64,
        x_window: i64,
    },
    Verify {
        suite: String,
        mode: CheckMode,
        sampling: Sampling,
        grid: GridConfig,
        list: bool,
        out: Option<String>,
    },
    Character {
        m: i64,
        m2: i64,
        sign: CharKind,
        tau: Complex64,
        z: Complex64,
        q_order: Option<i64>,
        out: Option<String>,
    },
}

/// Parse a complex number written as `a`, `bi`, or `a+bi` / `a-bi`.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let bad = || Error::Usage(format!("cannot parse complex number from `{s}`"));
    let t = s.trim().replace(' ', "");
    if t.is_empty() {
        return Err(bad());
    }
    if let Some(im_part) = t.strip_suffix('i') {
        // find the split between real and imaginary parts: a sign that is not
        // at position 0 and not part of an exponent
        let bytes = im_part.as_bytes();
        let mut split = None;
        for idx in (1..bytes.len()).rev() {
            let c = bytes[idx] as char;
            if (c == '+' || c == '-') && bytes[idx - 1] as char != 'e' && bytes[idx - 1] as char != 'E' {
                split = Some(idx);
                break;
            }
        }
        match split {
            Some(idx) => {
                let re: f64 = im_part[..idx].parse().map_err(|_| bad())?;
                let im_str = &im_part[idx..];
                let im: f64 = if im_str == "+" {
                    1.0
                } else if im_str == "-" {
                    -1.0
                } else {
                    im_str.parse().map_err(|_| bad())?
                };
                Ok(Complex64::new(re, im))
            }
            None => {
                let im: f64 = if im_part.is_empty() {
                    1.0
                } else if im_part == "-" {
                    -1.0
                } else {
                    im_part.parse().map_err(|_| bad())?
                };
                Ok(Complex64::new(0.0, im))
            }
        }
    } else {
        let re: f64 = t.parse().map_err(|_| bad())?;
        Ok(Complex64::new(re, 0.0))
    }
}

fn parse_halfint_list(s: &str) -> Result<Vec<HalfInt>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<HalfInt>())
        .collect()
}

struct Args {
    positional: Vec<String>,
    flags: std::collections::BTreeMap<String, String>,
    switches: std::collections::BTreeSet<String>,
}

fn split_args(argv: &[String]) -> Result<Args> {
    let mut positional = Vec::new();
    let mut flags = std::collections::BTreeMap::new();
    let mut switches = std::collections::BTreeSet::new();
    let switch_names = ["alternating", "plan", "list", "help"];
    let mut i = 0;
    while i < argv.len() {
        let a = &argv[i];
        if let Some(name) = a.strip_prefix("--") {
            if switch_names.contains(&name) {
                switches.insert(name.to_string());
                i += 1;
            } else {
                let val = argv
                    .get(i + 1)
                    .ok_or_else(|| Error::Usage(format!("flag --{name} needs a value")))?;
                flags.insert(name.to_string(), val.clone());
                i += 2;
            }
        } else {
            positional.push(a.clone());
            i += 1;
        }
    }
    Ok(Args { positional, flags, switches })
}

impl Args {
    fn complex(&self, name: &str, default: Complex64) -> Result<Complex64> {
        match self.flags.get(name) {
            Some(v) => parse_complex(v),
            None => Ok(default),
        }
    }

    fn halfint(&self, name: &str, default: HalfInt) -> Result<HalfInt> {
        match self.flags.get(name) {
            Some(v) => v.parse(),
            None => Ok(default),
        }
    }

    fn int(&self, name: &str, default: i64) -> Result<i64> {
        match self.flags.get(name) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Usage(format!("flag --{name} expects an integer, got `{v}`"))),
            None => Ok(default),
        }
    }

    fn float(&self, name: &str, default: f64) -> Result<f64> {
        match self.flags.get(name) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Usage(format!("flag --{name} expects a number, got `{v}`"))),
            None => Ok(default),
        }
    }
}

pub const USAGE: &str = "mock-theta <command> [flags]

commands:
  eval <phi|theta|vartheta|eta>     numeric evaluation
      --m 3/2 --s 1/2 --component diff --tau 0+0.9i --z1 0.2 --z2 0.07 --t 0
      --k 1 --alternating --z 0.2          (theta)
      --a 1 --b 1 --z 0.2                  (vartheta)
      --plan                               (phi: closed-form plan instead of the defining sum)
  expand <phi|theta|eta>            exact truncated q-expansion (JSON)
      --m, --s, --component, --k, --alternating, --q-order 6, --x-window 12
  verify                            run identity suites, ndjson reports
      --suite all|recurrence|d21a|closed|theta-blocks|characters|<IDENTITY_ID>
      --tol 1e-8 --samples 10 --seed 0 --mode both|numeric|formal --q-order 6
      --grid-m 1/2,1,3/2,2,5/2,3 --grid-s -3/2,...,5/2 --grid-p -2,...,2
      --char-m-max 3 --out report.ndjson --list
  character                         N=3 (super)character, two routes
      --m 2 --m2 1 --sign plus --tau 0.08+0.9i --z 0.23   (numeric)
      --q-order 4                                          (expansion instead)
";

/// Parse argv (without the binary name).
pub fn parse(argv: &[String]) -> Result<Command> {
    if argv.is_empty() {
        return Err(Error::Usage("missing command".into()));
    }
    let cmd = argv[0].as_str();
    let rest = split_args(&argv[1..])?;
    if rest.switches.contains("help") {
        return Err(Error::Usage("help requested".into()));
    }
    match cmd {
        "eval" => {
            let function = rest
                .positional
                .first()
                .cloned()
                .ok_or_else(|| Error::Usage("eval needs a function (phi|theta|vartheta|eta)".into()))?;
            let component = match rest.flags.get("component") {
                Some(c) => PhiComponent::parse(c)?,
                None => PhiComponent::Diff,
            };
            Ok(Command::Eval {
                function,
                m: rest.halfint("m", HalfInt::ONE)?,
                s: rest.halfint("s", HalfInt::ZERO)?,
                k: rest.halfint("k", HalfInt::ZERO)?,
                a: rest.int("a", 1)? as u8,
                b: rest.int("b", 1)? as u8,
                alternating: rest.switches.contains("alternating"),
                component,
                tau: rest.complex("tau", Complex64::new(0.0, 0.9))?,
                z: rest.complex("z", Complex64::new(0.2, 0.0))?,
                z1: rest.complex("z1", Complex64::new(0.2, 0.0))?,
                z2: rest.complex("z2", Complex64::new(0.07, 0.0))?,
                t: rest.complex("t", Complex64::new(0.0, 0.0))?,
                plan: rest.switches.contains("plan"),
            })
        }
        "expand" => {
            let function = rest
                .positional
                .first()
                .cloned()
                .ok_or_else(|| Error::Usage("expand needs a function (phi|theta|eta)".into()))?;
            let component = match rest.flags.get("component") {
                Some(c) => PhiComponent::parse(c)?,
                None => PhiComponent::Diff,
            };
            Ok(Command::Expand {
                function,
                m: rest.halfint("m", HalfInt::ONE)?,
                s: rest.halfint("s", HalfInt::ZERO)?,
                k: rest.halfint("k", HalfInt::ZERO)?,
                alternating: rest.switches.contains("alternating"),
                component,
                q_order: rest.int("q-order", 6)?,
                x_window: rest.int("x-window", 12)?,
            })
        }
        "verify" => {
            let mode = match rest.flags.get("mode") {
                Some(m) => CheckMode::parse(m)?,
                None => CheckMode::Both,
            };
            let sampling = Sampling {
                points: rest.int("samples", 10)? as usize,
                seed: rest.int("seed", 0)? as u64,
                tolerance: rest.float("tol", 1e-8)?,
                q_order: rest.int("q-order", 6)?,
            };
            let mut grid = GridConfig::default();
            if let Some(v) = rest.flags.get("grid-m") {
                grid.ms = parse_halfint_list(v)?;
            }
            if let Some(v) = rest.flags.get("grid-s") {
                grid.ss = parse_halfint_list(v)?;
            }
            if let Some(v) = rest.flags.get("grid-p") {
                grid.ps = v
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| p.trim().parse::<i64>().map_err(|_| Error::Usage(format!("bad p `{p}`"))))
                    .collect::<Result<_>>()?;
            }
            grid.char_m_max = rest.int("char-m-max", grid.char_m_max)?;
            Ok(Command::Verify {
                suite: rest.flags.get("suite").cloned().unwrap_or_else(|| "all".into()),
                mode,
                sampling,
                grid,
                list: rest.switches.contains("list"),
                out: rest.flags.get("out").cloned(),
            })
        }
        "character" => {
            let m = rest.int("m", 1)?;
            let m2 = rest.int("m2", 0)?;
            // validate early so `character --m 2 --m2 5` is a usage error
            ModuleLabel::new(m, m2).map_err(|e| Error::Usage(e.to_string()))?;
            let sign = match rest.flags.get("sign") {
                Some(sv) => CharKind::parse(sv)?,
                None => CharKind::Plus,
            };
            Ok(Command::Character {
                m,
                m2,
                sign,
                tau: rest.complex("tau", Complex64::new(0.08, 0.9))?,
                z: rest.complex("z", Complex64::new(0.23, 0.015))?,
                q_order: rest.flags.get("q-order").map(|v| v.parse()).transpose().map_err(|_| {
                    Error::Usage("flag --q-order expects an integer".into())
                })?,
                out: rest.flags.get("out").cloned(),
            })
        }
        other => Err(Error::Usage(format!("unknown command `{other}`"))),
    }
}

fn cval(v: Complex64) -> Value {
    json!({"re": format!("{:.17e}", v.re), "im": format!("{:.17e}", v.im)})
}

fn emit(out: &mut dyn Write, v: &Value) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(v).expect("json"))
}

/// Execute a command, writing its report stream; returns the process exit code.
pub fn execute(cmd: Command, out: &mut dyn Write) -> i32 {
    match run(cmd, out) {
        Ok(all_pass) => {
            if all_pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let kind = match &e {
                Error::Usage(_) => "usage",
                Error::Scope(_) => "scope",
                Error::Domain(_) => "domain",
                Error::PoleProximity { .. } => "pole",
                Error::PrefactorZero { .. } => "prefactor-zero",
                _ => "error",
            };
            let _ = emit(out, &json!({"error": {"kind": kind, "message": e.to_string()}}));
            2
        }
    }
}

fn run(cmd: Command, out: &mut dyn Write) -> Result<bool> {
    match cmd {
        Command::Eval {
            function, m, s, k, a, b, alternating, component, tau, z, z1, z2, t, plan,
        } => {
            let value = match function.as_str() {
                "phi" => {
                    let point = EvalPoint::new(tau, z1, z2, t)?;
                    if plan {
                        let resolved = phi_resolve(m, s)?;
                        if component != PhiComponent::Diff {
                            return Err(Error::Usage(
                                "--plan evaluates the difference Phi; drop --component".into(),
                            ));
                        }
                        phi_eval_plan(&resolved, &point)?
                    } else {
                        phi_direct(&PhiSpec::new(m, s, component)?, &point)?
                    }
                }
                "theta" => theta_km_rational(
                    &ThetaIndex::new(k.to_rational(), m.to_rational(), alternating)?,
                    tau,
                    z,
                )?,
                "vartheta" => {
                    let label = MumfordLabel::new(a, b)?;
                    vartheta(label.a, label.b, tau, z)?
                }
                "eta" => dedekind_eta(tau)?,
                other => return Err(Error::Usage(format!("unknown eval function `{other}`"))),
            };
            let mut doc = json!({
                "function": function,
                "value": cval(value),
            });
            if function == "phi" {
                doc["m"] = json!(m.to_string());
                doc["s"] = json!(s.to_string());
                doc["route"] = json!(if plan { "plan" } else { "direct" });
                if plan {
                    doc["plan"] = json!(phi_resolve(m, s)?.plan.render());
                }
            }
            emit(out, &doc).ok();
            Ok(true)
        }
        Command::Expand { function, m, s, k, alternating, component, q_order, x_window } => {
            let bbox = TruncationBox::new(
                rat_int(q_order),
                (rat_int(-x_window), rat_int(x_window)),
                (rat_int(-x_window), rat_int(x_window)),
            );
            let series = match function.as_str() {
                "phi" => phi_formal(&PhiSpec::new(m, s, component)?, &bbox, Region::Standard)?,
                "theta" => crate::thetas::theta_formal(
                    &ThetaIndex::new(k.to_rational(), m.to_rational(), alternating)?,
                    &crate::thetas::ThetaImage::new(
                        num_rational::BigRational::from_integer(1.into()),
                        crate::series::Monomial::new(
                            rat_int(0),
                            rat_int(1),
                            rat_int(0),
                        ),
                    ),
                    &crate::series::Monomial::one(),
                    &crate::cyclo::CycloNum::one(1),
                    &bbox,
                    Region::Standard,
                )?,
                "eta" => crate::thetas::eta_formal(
                    &num_rational::BigRational::from_integer(1.into()),
                    &bbox,
                    Region::Standard,
                )?,
                other => return Err(Error::Usage(format!("unknown expand function `{other}`"))),
            };
            emit(
                out,
                &json!({
                    "function": function,
                    "q_order": q_order,
                    "x_window": x_window,
                    "terms": series.len(),
                    "series": series.to_json(),
                }),
            )
            .ok();
            Ok(true)
        }
        Command::Verify { suite, mode, sampling, grid, list, out: out_path } => {
            let mut sink: Box<dyn Write> = match &out_path {
                Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(
                    |e| Error::Usage(format!("cannot create --out file {p}: {e}")),
                )?)),
                None => Box::new(std::io::BufWriter::new(WriterShim(out))),
            };
            if list {
                for entry in list_identities() {
                    emit(&mut sink, &entry).ok();
                }
                emit(&mut sink, &json!({"catalogue_size": IDENTITY_COUNT})).ok();
                return Ok(true);
            }
            let ids = select_suite(&suite)?;
            let pass = run_suite(&ids, mode, &sampling, &grid, &mut sink)?;
            Ok(pass)
        }
        Command::Character { m, m2, sign, tau, z, q_order, out: out_path } => {
            let mut sink: Box<dyn Write> = match &out_path {
                Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(
                    |e| Error::Usage(format!("cannot create --out file {p}: {e}")),
                )?)),
                None => Box::new(std::io::BufWriter::new(WriterShim(out))),
            };
            let label = ModuleLabel::new(m, m2)?;
            match q_order {
                None => {
                    let def = char_via_definition(label, sign, tau, z)?;
                    let gen = char_general(label, sign, tau, z)?;
                    let resid = crate::identities::residual(def, gen);
                    emit(
                        &mut sink,
                        &json!({
                            "m": m, "m2": m2, "sign": sign.label(),
                            "mode": "numeric",
                            "value": cval(def),
                            "route": "definition",
                            "residual_vs_other_route": format!("{resid:.3e}"),
                        }),
                    )
                    .ok();
                    Ok(true)
                }
                Some(qo) => {
                    let bbox = TruncationBox::new(
                        rat_int(qo),
                        (rat_int(-12), rat_int(12)),
                        (rat_int(-12), rat_int(12)),
                    );
                    let series = char_expand(label, sign, &bbox, Region::Standard)?;
                    let leading = series.leading().map(|(mo, _)| mo.e_q.to_string());
                    emit(
                        &mut sink,
                        &json!({
                            "m": m, "m2": m2, "sign": sign.label(),
                            "mode": "expand",
                            "route": "definition",
                            "leading_q_exponent": leading,
                            "series": series.to_json(),
                        }),
                    )
                    .ok();
                    Ok(true)
                }
            }
        }
    }
}

struct WriterShim<'a>(&'a mut dyn Write);

impl Write for WriterShim<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

fn select_suite(suite: &str) -> Result<Vec<IdentityId>> {
    if suite == "all" {
        return Ok(IdentityId::ALL.to_vec());
    }
    let by_group: Vec<IdentityId> = IdentityId::ALL
        .iter()
        .copied()
        .filter(|i| i.group().name() == suite)
        .collect();
    if !by_group.is_empty() {
        return Ok(by_group);
    }
    if let Some(id) = IdentityId::from_name(suite) {
        return Ok(vec![id]);
    }
    Err(Error::Usage(format!(
        "unknown suite `{suite}` (all, recurrence, d21a, closed, theta-blocks, characters, or an identity id)"
    )))
}

/// Run checks for the ids (fanning out over a worker pool), emit reports in
/// catalogue order, then a summary; returns overall pass.
pub fn run_suite(
    ids: &[IdentityId],
    mode: CheckMode,
    sampling: &Sampling,
    grid: &GridConfig,
    out: &mut dyn Write,
) -> Result<bool> {
    let jobs: Vec<(IdentityId, crate::identities::IdParams)> = ids
        .iter()
        .flat_map(|&id| param_grid(id, grid).into_iter().map(move |p| (id, p)))
        .collect();
    let workers = std::env::var("MOCK_THETA_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let reports: Vec<Result<IdentityReport>> = match workers {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Usage(format!("worker pool: {e}")))?
            .install(|| {
                jobs.par_iter()
                    .map(|(id, p)| {
                        let m = if id.formal_capable() { mode } else { CheckMode::Numeric };
                        check_identity(*id, p, m, sampling)
                    })
                    .collect()
            }),
        _ => jobs
            .par_iter()
            .map(|(id, p)| {
                let m = if id.formal_capable() { mode } else { CheckMode::Numeric };
                check_identity(*id, p, m, sampling)
            })
            .collect(),
    };
    let mut all_pass = true;
    let mut total = 0usize;
    let mut failed = 0usize;
    let mut resamples = 0u32;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut per_id_worst: std::collections::BTreeMap<String, f64> = Default::default();
    for r in reports {
        let rep = r?;
        total += 1;
        resamples += rep.resamples;
        if !rep.pass {
            failed += 1;
            all_pass = false;
        }
        if rep.max_residual > worst.0 {
            worst = (rep.max_residual, rep.id.clone());
        }
        let w = per_id_worst.entry(rep.id.clone()).or_insert(0.0);
        if rep.max_residual > *w {
            *w = rep.max_residual;
        }
        emit(out, &serde_json::to_value(&rep).expect("report json")).ok();
    }
    let summary = json!({
        "summary": {
            "suite_checks": total,
            "passed": total - failed,
            "failed": failed,
            "resamples": resamples,
            "worst": {"id": worst.1, "max_residual": worst.0},
            "per_identity_worst": per_id_worst,
            "catalogue_size": IDENTITY_COUNT,
            "seed": sampling.seed,
            "tolerance": sampling.tolerance,
        }
    });
    emit(out, &summary).ok();
    out.flush().ok();
    Ok(all_pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parse_complex_forms() {
        assert_eq!(parse_complex("0.5").unwrap(), Complex64::new(0.5, 0.0));
        assert_eq!(parse_complex("0.9i").unwrap(), Complex64::new(0.0, 0.9));
        assert_eq!(parse_complex("0+0.9i").unwrap(), Complex64::new(0.0, 0.9));
        assert_eq!(parse_complex("-0.3-0.1i").unwrap(), Complex64::new(-0.3, -0.1));
        assert_eq!(parse_complex("1e-2+3e-4i").unwrap(), Complex64::new(0.01, 0.0003));
        assert!(parse_complex("abc").is_err());
    }

    #[test]
    fn parse_verify_defaults() {
        let cmd = parse(&argv("verify --suite all --tol 1e-8 --seed 42")).unwrap();
        match cmd {
            Command::Verify { suite, sampling, .. } => {
                assert_eq!(suite, "all");
                assert_eq!(sampling.seed, 42);
                assert_eq!(sampling.points, 10);
                assert_eq!(sampling.q_order, 6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_eval_phi() {
        let cmd = parse(&argv(
            "eval phi --m 3/2 --s 1/2 --tau 0+0.9i --z1 0.2 --z2 0.07 --t 0",
        ))
        .unwrap();
        match cmd {
            Command::Eval { function, m, s, .. } => {
                assert_eq!(function, "phi");
                assert_eq!(m, HalfInt::from_twice(3));
                assert_eq!(s, HalfInt::HALF);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn character_m2_out_of_range_is_usage_error() {
        let e = parse(&argv("character --m 2 --m2 5"));
        assert!(matches!(e, Err(Error::Usage(_))));
    }

    #[test]
    fn unknown_flags_and_commands_error() {
        assert!(parse(&argv("frobnicate")).is_err());
        assert!(parse(&argv("verify --suite")).is_err());
        assert!(select_suite("no-such-suite").is_err());
        assert_eq!(select_suite("d21a").unwrap().len(), 3);
        assert_eq!(select_suite("all").unwrap().len(), IDENTITY_COUNT);
        assert_eq!(select_suite("D21A_BRIDGE").unwrap().len(), 1);
    }

    #[test]
    fn eval_pole_is_exit_2() {
        let cmd = parse(&argv("eval phi --m 1 --s 0 --tau 0+0.9i --z1 0 --z2 0.07")).unwrap();
        let mut buf = Vec::new();
        let code = execute(cmd, &mut buf);
        assert_eq!(code, 2);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("pole"), "{text}");
    }
}
