use std::fs;
use std::path::Path;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fibwalk_core::combinatorics::{closest_returns, fibonacci_times, is_fibonacci_to_depth, solve_parameter};
use fibwalk_core::distortion::{collared_configuration, koebe_check, random_trials};
use fibwalk_core::induced::{build_annuli, estimate_transitions, measured_scaling, montecarlo_basin, BasinConfig, K0};
use fibwalk_core::nest::{build_nest, rho_upper_bound, ScalingReport};
use fibwalk_core::walk::{
    derived_bounds, fit_constants, moment_lower_bounds, moments, random_scaling_pair, simulate_walk, validate_scaling,
    IncrementLaw, ScalingConstants, Sequence, SequencePair, Tail, WalkConfig,
};
use fibwalk_core::{FibMap, PrecisionPolicy, Real};

use crate::args::{
    BasinArgs, Cli, Command, DistortionArgs, EstimateArgs, Format, MapArgs, MapCommandArgs, OutputArgs, PipelineArgs,
    SolveArgs, ValidateArgs, WalkArgs,
};
use crate::output::{
    emit, envelope, render_json, to_value, Assertion, CliError, CliResult, Outcome, EXIT_OK, EXIT_USAGE,
};

/// Cross-ratio expansion is accepted down to this value.
const B_FLOOR: f64 = 1.0 - 1e-12;

pub fn run(cmd: &Command) -> CliResult<u8> {
    match cmd {
        Command::Solve(a) => finish("solve", a, &a.out, false, || solve(a)),
        Command::Combinatorics(a) => finish("combinatorics", a, &a.out, false, || combinatorics(a)),
        Command::ScalingReport(a) => finish("scaling-report", a, &a.out, true, || scaling_report(a)),
        Command::DistortionReport(a) => finish("distortion-report", a, &a.out, true, || distortion_report(a)),
        Command::ValidateScaling(a) => finish("validate-scaling", a, &a.out, false, || validate(a)),
        Command::WalkSim(a) => finish("walk-sim", a, &a.out, false, || walk_sim(a)),
        Command::EstimateNu(a) => finish("estimate-nu", a, &a.out, true, || estimate_nu(a)),
        Command::BasinMc(a) => finish("basin-mc", a, &a.out, false, || basin_mc(a)),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn finish(
    name: &str,
    args: &impl Serialize,
    out: &OutputArgs,
    csv: bool,
    body: impl FnOnce() -> CliResult<Outcome>,
) -> CliResult<u8> {
    if out.format == Format::Csv && !csv {
        return Err(CliError::Usage(format!("{name} has no CSV output")));
    }
    let outcome = body()?;
    let text = match out.format {
        Format::Csv => outcome.csv.clone().unwrap_or_default(),
        Format::Json => render_json(&envelope(name, config_echo(args)?, &outcome)),
    };
    emit(&text, out.output.as_deref())?;
    Ok(outcome.exit_code())
}

/// The arguments that determine the result; output location and format are left out.
fn config_echo(args: &impl Serialize) -> CliResult<Value> {
    let mut v = to_value(args)?;
    if let Value::Object(map) = &mut v {
        map.remove("out");
        if let Some(Value::Object(inner)) = map.remove("map") {
            map.extend(inner);
        }
    }
    Ok(v)
}

fn policy(cap: Option<u32>) -> CliResult<PrecisionPolicy> {
    let base = PrecisionPolicy::from_env()?;
    Ok(match cap {
        Some(cap) => PrecisionPolicy::new(base.start_bits.min(cap), cap),
        None => base,
    })
}

fn parse_real(text: &str, prec: u32, what: &str) -> CliResult<Real> {
    Real::parse(text, prec).map_err(|e| CliError::Usage(format!("--{what}: {e}")))
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{} is not JSON: {e}", path.display())))
}

/// Turns decimal strings back into numbers so that written reports can be read as input.
fn numeric_strings(v: Value) -> Value {
    match v {
        Value::String(s) if looks_numeric(&s) => s
            .parse::<f64>()
            .ok()
            .and_then(serde_json::Number::from_f64)
            .map(Value::Number)
            .unwrap_or(Value::String(s)),
        Value::Array(items) => Value::Array(items.into_iter().map(numeric_strings).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, numeric_strings(v))).collect()),
        other => other,
    }
}

fn looks_numeric(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    digits.starts_with(|c: char| c.is_ascii_digit())
}

/// The map to work on, and a description of where it came from.
fn load_map(m: &MapArgs) -> CliResult<(FibMap, Value)> {
    let policy = policy(m.precision_cap)?;
    if let Some(path) = &m.solution {
        let doc = read_json(path)?;
        let result = doc.get("result").unwrap_or(&doc);
        let field = |key: &str| -> CliResult<String> {
            match result.get(key) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(Value::Number(n)) => Ok(n.to_string()),
                _ => Err(CliError::Usage(format!("{} has no `{key}`", path.display()))),
            }
        };
        let bits: u32 = field("precision_bits")?
            .parse()
            .map_err(|_| CliError::Usage(format!("{}: bad precision_bits", path.display())))?;
        let ell = parse_real(&field("ell")?, bits, "solution")?;
        if let Some(given) = &m.ell {
            if parse_real(given, bits, "ell")?.cmp_raw(&ell) != std::cmp::Ordering::Equal {
                return Err(CliError::Usage(format!(
                    "--ell {given} disagrees with the solution file"
                )));
            }
        }
        let lambda = parse_real(&field("lambda_star")?, bits, "solution")?;
        let f = FibMap::new(lambda, ell)?;
        return Ok((f, json!({"kind": "solution", "path": path.display().to_string()})));
    }
    let ell_text = m.ell.as_deref().unwrap_or("2");
    let ell = parse_real(ell_text, policy.start_bits, "ell")?;
    if let Some(lambda) = &m.lambda {
        let f = FibMap::new(parse_real(lambda, policy.start_bits, "lambda")?, ell)?;
        return Ok((f, json!({"kind": "parameter"})));
    }
    let solved = solve_parameter(&ell, m.depth as usize, &policy)?;
    Ok((solved.map(), json!({"kind": "solved", "solution": to_value(&solved)?})))
}

fn solve(a: &SolveArgs) -> CliResult<Outcome> {
    let policy = policy(a.precision_cap)?;
    let ell = parse_real(&a.ell, policy.start_bits, "ell")?;
    let solved = solve_parameter(&ell, a.depth as usize, &policy)?;
    let ok = solved.verdict.ok;
    let mut out = Outcome::new(&solved)?;
    out.assertions.push(Assertion::new(
        "fibonacci_to_depth",
        ok,
        format!("closest returns checked to depth {}", solved.verdict.depth_reached),
    ));
    Ok(out)
}

fn combinatorics(a: &MapCommandArgs) -> CliResult<Outcome> {
    let (f, source) = load_map(&a.map)?;
    let k = a.map.depth as usize;
    let times = fibonacci_times(k)?;
    let verdict = is_fibonacci_to_depth(&f, k)?;
    let returns = closest_returns(&f, times.last())?;
    let mut out = Outcome::new(json!({
        "ell": f.ell(),
        "lambda": f.lambda(),
        "K": k,
        "map_source": source,
        "cutting_times": times.0,
        "closest_returns": to_value(&returns)?,
        "verdict": to_value(&verdict)?,
    }))?;
    out.assertions.push(Assertion::new(
        "fibonacci_to_depth",
        verdict.ok,
        format!("{:?}", verdict.first_violation),
    ));
    Ok(out)
}

fn scaling_report(a: &MapCommandArgs) -> CliResult<Outcome> {
    let (f, source) = load_map(&a.map)?;
    let k = a.map.depth as usize;
    let nest = build_nest(&f, k)?;
    let report = ScalingReport::build(&f, &nest)?;
    let rho_bound = rho_upper_bound(f.ell_f64()).ok();
    let deepest: Vec<_> = report.deepest_rows(3);
    let rows_ok = deepest.iter().all(|r| r.pass);
    let threshold_ok = report.lambda_threshold.is_some_and(|n0| n0 + 3 <= k);
    let mut out = Outcome::new(json!({
        "report": to_value(&report)?,
        "map_source": source,
        "rho_upper_bound": to_value(&rho_bound)?,
    }))?;
    out.assertions.push(Assertion::new(
        "scaling_threshold_within_depth",
        threshold_ok,
        format!("n0 = {:?}, K = {k}", report.lambda_threshold),
    ));
    out.assertions.push(Assertion::new(
        "deepest_rows_hold",
        rows_ok,
        format!("{} rows at the deepest three levels", deepest.len()),
    ));
    out.csv = Some(report.to_csv()?);
    Ok(out)
}

fn distortion_report(a: &DistortionArgs) -> CliResult<Outcome> {
    if a.trials == 0 || a.max_iterate == 0 {
        return Err(CliError::Usage("--trials and --max-iterate must be positive".into()));
    }
    let (f, source) = load_map(&a.map)?;
    let trials = random_trials(&f, a.max_iterate, a.trials, a.seed)?;
    let floor = Real::from_f64(B_FLOOR, f.prec());
    let cross_failures = trials.iter().filter(|t| t.record.b_value < floor).count();
    let double_failures = trials.iter().filter(|t| !t.double.pass).count();
    let min_b = trials
        .iter()
        .map(|t| t.record.b_value.clone())
        .reduce(|m, b| m.min(&b))
        .expect("at least one trial");

    let k = a.map.depth as usize;
    let times = fibonacci_times(k)?;
    let mut koebe = Vec::new();
    for level in (4..=k.min(10)).step_by(2) {
        let n = times.get(level) - 1;
        for &tau in &a.tau {
            let (j, t) = collared_configuration(&f, n, f.critical_value(), tau)?;
            let r = koebe_check(&f, n, &j, &t, &Real::from_f64(tau, f.prec()))?;
            koebe.push(json!({"level": level, "n": n, "check": to_value(&r)?}));
        }
    }
    let koebe_failures = koebe.iter().filter(|r| r["check"]["pass"] != Value::Bool(true)).count();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "trial",
        "n",
        "B_value",
        "sum_lengths",
        "max_length",
        "double_lhs",
        "double_rhs_lower",
        "double_rhs_upper",
        "double_pass",
    ])
    .map_err(csv_error)?;
    for t in &trials {
        w.write_record([
            t.trial.to_string(),
            t.n.to_string(),
            t.record.b_value.to_decimal(),
            t.record.sum_lengths.to_decimal(),
            t.record.max_length.to_decimal(),
            t.double.lhs.to_decimal(),
            t.double.rhs_lower.to_decimal(),
            t.double.rhs_upper.to_decimal(),
            t.double.pass.to_string(),
        ])
        .map_err(csv_error)?;
    }
    let csv_text = String::from_utf8(w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let mut out = Outcome::new(json!({
        "ell": f.ell(),
        "lambda": f.lambda(),
        "map_source": source,
        "min_B": min_b,
        "cross_ratio_failures": cross_failures,
        "double_interval_failures": double_failures,
        "koebe": koebe,
        "trials": to_value(&trials)?,
    }))?;
    out.assertions.push(Assertion::new(
        "cross_ratio_expands",
        cross_failures == 0,
        format!("min B = {}", min_b.to_decimal_digits(16)),
    ));
    out.assertions.push(Assertion::new(
        "double_interval_bounds",
        double_failures == 0,
        format!("{double_failures} of {} configurations fail", trials.len()),
    ));
    out.assertions.push(Assertion::new(
        "koebe_bound",
        koebe_failures == 0,
        format!("{koebe_failures} of {} configurations fail", koebe.len()),
    ));
    out.csv = Some(csv_text);
    Ok(out)
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Usage(format!("cannot write CSV: {e}"))
}

#[derive(Deserialize)]
struct PairInput {
    pair: SequencePair,
    constants: ScalingConstants,
}

fn validate(a: &ValidateArgs) -> CliResult<Outcome> {
    let (pair, consts) = if let Some(path) = &a.input {
        let input: PairInput = serde_json::from_value(numeric_strings(read_json(path)?))
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        (input.pair, input.constants)
    } else if let Some(q) = a.geometric {
        if !(q > 0.0 && q < 1.0) {
            return Err(CliError::Usage("--geometric needs a ratio in (0, 1)".into()));
        }
        let seq_a = Sequence::new(0, vec![1.0, q], Tail::Geometric(q))?;
        let seq_nu = Sequence::new(1, vec![1.0 - q], Tail::Geometric(q))?;
        let pair = SequencePair::new(seq_a, seq_nu)?;
        let consts = fit_constants(&pair, 0, K0)?;
        (pair, consts)
    } else {
        random_scaling_pair(a.generated_seed.expect("clap requires a pair source"))?
    };
    let verdict = validate_scaling(&pair, &consts)?;
    let (m1, m2) = moments(&pair)?;
    let (derived, moment_bounds) = if verdict.pass() {
        (
            Some(derived_bounds(&pair, &consts)?),
            Some(moment_lower_bounds(&pair, &consts)?),
        )
    } else {
        (None, None)
    };
    let mut out = Outcome::new(json!({
        "pair": to_value(&pair)?,
        "constants": to_value(&consts)?,
        "contracting_range": consts.in_contracting_range(),
        "verdict": to_value(&verdict)?,
        "derived_bounds": to_value(&derived)?,
        "moment_bounds": to_value(&moment_bounds)?,
        "m1": m1,
        "m2": m2,
    }))?;
    out.assertions.push(Assertion::new(
        "scaling_condition",
        verdict.pass(),
        format!("checked to index {}", verdict.checked_up_to),
    ));
    if let Some(d) = &derived {
        out.assertions.push(Assertion::new("derived_bounds", d.pass(), ""));
    }
    Ok(out)
}

fn walk_sim(a: &WalkArgs) -> CliResult<Outcome> {
    let law = match (&a.weights, a.point_mass) {
        (Some(w), _) => IncrementLaw::from_weights(w.clone(), a.tail_ratio)?,
        (None, Some(j)) => IncrementLaw::point_mass(j)?,
        (None, None) => return Err(CliError::Usage("give --weights or --point-mass".into())),
    };
    let cfg = WalkConfig {
        k0: a.k0,
        r0: a.r0,
        s: a.s,
        horizon: a.horizon,
        n_walkers: a.walkers,
        seed: a.seed,
        keep_traces: a.keep_traces,
    };
    cfg.validate()?;
    Outcome::new(simulate_walk(&law, &cfg)?)
}

fn estimate_nu(a: &EstimateArgs) -> CliResult<Outcome> {
    let (f, source) = load_map(&a.map)?;
    let nest = build_nest(&f, a.map.depth as usize)?;
    let partition = build_annuli(&f, &nest.levels)?;
    let t = estimate_transitions(&f, &partition, a.source_level, a.samples, a.seed)?;
    let measured = measured_scaling(&partition, &t, a.d)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "index", "count", "nu_hat"])
        .map_err(csv_error)?;
    for (&level, &count) in &t.counts {
        let (index, nu) = if level == partition.depth {
            (String::new(), String::new())
        } else {
            let i = level + K0 + 1 - t.r;
            (i.to_string(), t.nu_hat[i - 1].to_string())
        };
        w.write_record([level.to_string(), index, count.to_string(), nu])
            .map_err(csv_error)?;
    }
    let csv_text = String::from_utf8(w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let mut out = Outcome::new(json!({
        "ell": f.ell(),
        "lambda": f.lambda(),
        "K": partition.depth,
        "map_source": source,
        "samples": a.samples,
        "seed": a.seed,
        "annulus_lengths": to_value(&partition.lengths())?,
        "nu_hat": to_value(&t.nu_hat)?,
        "a": to_value(&measured.pair.a)?,
        "transitions": to_value(&t)?,
        "measured": to_value(&measured)?,
    }))?;
    out.csv = Some(csv_text);
    Ok(out)
}

fn basin_mc(a: &BasinArgs) -> CliResult<Outcome> {
    let (f, source) = load_map(&a.map)?;
    let nest = build_nest(&f, a.map.depth as usize)?;
    let partition = build_annuli(&f, &nest.levels)?;
    let cfg = BasinConfig {
        samples: a.samples,
        horizon: a.horizon,
        seed: a.seed,
        r0: a.r0,
        start_level: a.start_level,
    };
    let report = montecarlo_basin(&f, &partition, &cfg)?;
    let drop = report.max_level_drop;
    let mut result = to_value(&report)?;
    result["map_source"] = source;
    let mut out = Outcome::new(result)?;
    out.assertions.push(Assertion::new(
        "level_drop_at_most_two",
        drop <= K0 as i64,
        format!("largest drop {drop}"),
    ));
    Ok(out)
}

#[derive(Deserialize)]
struct Manifest {
    steps: Vec<ManifestStep>,
}

#[derive(Deserialize)]
struct ManifestStep {
    #[serde(default)]
    name: Option<String>,
    args: Vec<String>,
}

fn pipeline(a: &PipelineArgs) -> CliResult<u8> {
    if a.out.format == Format::Csv {
        return Err(CliError::Usage("pipeline has no CSV output".into()));
    }
    let manifest: Manifest = serde_json::from_value(read_json(&a.manifest)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.manifest.display())))?;
    let mut steps = Vec::new();
    let mut first_failure = EXIT_OK;
    for (i, step) in manifest.steps.iter().enumerate() {
        let name = step.name.clone().unwrap_or_else(|| format!("step-{}", i + 1));
        let (code, error) = match Cli::try_parse_from(std::iter::once("fibwalk".to_string()).chain(step.args.clone())) {
            Err(e) => (EXIT_USAGE, Some(e.to_string().trim().to_string())),
            Ok(cli) if matches!(cli.command, Command::Pipeline(_)) => {
                (EXIT_USAGE, Some("pipelines cannot be nested".to_string()))
            }
            Ok(cli) => match run(&cli.command) {
                Ok(code) => (code, None),
                Err(e) => (e.exit_code(), Some(e.to_string())),
            },
        };
        steps.push(json!({"name": name, "args": step.args, "exit_code": code, "error": error}));
        if code != EXIT_OK && first_failure == EXIT_OK {
            first_failure = code;
        }
        if code != EXIT_OK && !a.keep_going {
            break;
        }
    }
    let mut outcome = Outcome::new(json!({"steps": steps, "completed": steps.len(), "planned": manifest.steps.len()}))?;
    outcome.assertions.push(Assertion::new(
        "all_steps_succeeded",
        first_failure == EXIT_OK && steps.len() == manifest.steps.len(),
        "",
    ));
    let text = render_json(&envelope("pipeline", config_echo(a)?, &outcome));
    emit(&text, a.out.output.as_deref())?;
    Ok(first_failure)
}
