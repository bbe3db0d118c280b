//! Line-oriented `key = value` experiment configuration.
//!
//! The format is deliberately austere: `[section]` headers, one `key =
//! value` pair per line, `#` comments. Unknown sections and keys are
//! rejected rather than ignored, and every problem a file has is reported
//! in one pass with its line number.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;
use vklbm_core::ModelKind;

/// The benchmark problems the runner knows how to set up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// Periodic Burgers with a sinusoidal initial condition.
    BurgersSine,
    /// 1D advected step with a bistable relaxation source.
    Ly1d,
    /// 2D advected ball with the same source.
    Ly2d,
    /// 3D advected ball with the same source.
    Ly3d,
    /// Steady Burgers shock driven by a space-linear source.
    Embid,
    /// Steady oblique linear advection of a contact line.
    Spekreijse,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::BurgersSine => "burgers-sine",
            ProblemKind::Ly1d => "ly-1d",
            ProblemKind::Ly2d => "ly-2d",
            ProblemKind::Ly3d => "ly-3d",
            ProblemKind::Embid => "embid",
            ProblemKind::Spekreijse => "spekreijse",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ProblemKind::BurgersSine | ProblemKind::Ly1d | ProblemKind::Embid => 1,
            ProblemKind::Ly2d | ProblemKind::Spekreijse => 2,
            ProblemKind::Ly3d => 3,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "burgers-sine" => ProblemKind::BurgersSine,
            "ly-1d" => ProblemKind::Ly1d,
            "ly-2d" => ProblemKind::Ly2d,
            "ly-3d" => ProblemKind::Ly3d,
            "embid" => ProblemKind::Embid,
            "spekreijse" => ProblemKind::Spekreijse,
            _ => return None,
        })
    }

    /// Does this problem take a stiffness parameter μ?
    fn takes_mu(self) -> bool {
        matches!(
            self,
            ProblemKind::Ly1d | ProblemKind::Ly2d | ProblemKind::Ly3d | ProblemKind::Embid
        )
    }
}

/// Flow angle for the oblique-advection problem. The quarter-turn values
/// are kept symbolic so the runner can use exactly equal or exactly zero
/// velocity components where the benchmark depends on that.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AngleSpec {
    Zero,
    QuarterPi,
    HalfPi,
    Radians(f64),
}

impl AngleSpec {
    /// Advection components `(cos θ, sin θ)`, exact at the symbolic angles.
    pub fn components(self) -> (f64, f64) {
        match self {
            AngleSpec::Zero => (1.0, 0.0),
            AngleSpec::QuarterPi => (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
            AngleSpec::HalfPi => (0.0, 1.0),
            AngleSpec::Radians(t) => (t.cos(), t.sin()),
        }
    }

    pub fn radians(self) -> f64 {
        match self {
            AngleSpec::Zero => 0.0,
            AngleSpec::QuarterPi => FRAC_PI_4,
            AngleSpec::HalfPi => FRAC_PI_2,
            AngleSpec::Radians(t) => t,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "0" | "0.0" => AngleSpec::Zero,
            "pi/4" => AngleSpec::QuarterPi,
            "pi/2" => AngleSpec::HalfPi,
            "pi" => AngleSpec::Radians(PI),
            _ => AngleSpec::Radians(s.parse().ok()?),
        })
    }
}

/// Lattice-speed selection: a pinned value or adaptive growth from the
/// subcharacteristic bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaSpec {
    Fixed(f64),
    Auto { floor: f64, safety: f64 },
}

/// How long to run: to a physical time (stopping at the first step past
/// it) or for an exact iteration count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Duration {
    FinalTime(f64),
    Iterations(usize),
}

/// Nine-speed flux partition choice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PartitionChoice {
    Coordinate,
    Diagonal,
    /// Axis fraction in [0, 1]; the remainder rides the diagonal pair.
    Blend(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelaxationChoice {
    Explicit,
    SemiImplicit,
}

#[derive(Clone, Debug)]
pub struct OutputConfig {
    /// Output directory; the `VKLBM_OUTDIR` environment variable overrides
    /// it at run time.
    pub directory: PathBuf,
    pub fields: String,
    pub diagnostics: String,
    pub table: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            fields: "fields.csv".into(),
            diagnostics: "diagnostics.csv".into(),
            table: "table.csv".into(),
        }
    }
}

/// Grid sizes and relaxation rates for the built-in convergence study.
#[derive(Clone, Debug)]
pub struct TableConfig {
    pub omegas: Vec<f64>,
    pub sizes: Vec<usize>,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig { omegas: vec![0.1, 0.6, 1.0, 1.4, 1.9], sizes: vec![41, 81, 161, 321] }
    }
}

/// A fully validated experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub model: ModelKind,
    pub relaxation: RelaxationChoice,
    pub omega: f64,
    pub lambda: LambdaSpec,
    pub partition: PartitionChoice,
    /// Advertised node count per axis (for the periodic Burgers problem
    /// this includes the duplicated endpoint; the stored grid drops it).
    pub grid: Vec<usize>,
    pub duration: Duration,
    pub mu: Option<f64>,
    pub theta: Option<AngleSpec>,
    /// Record macro history and audit the reconstruction after the run.
    pub oracle: bool,
    pub output: OutputConfig,
    pub table: TableConfig,
    /// Expected-values file for the `check` subcommand.
    pub check_file: Option<PathBuf>,
}

/// One problem found in a config file. `line` is 1-based; 0 marks errors
/// about the file as a whole (e.g. a missing required key).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

/// Everything wrong with a config file, in file order.
#[derive(Debug, Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

const SECTIONS: [&str; 4] = ["experiment", "output", "table", "check"];
const EXPERIMENT_KEYS: [&str; 14] = [
    "problem",
    "model",
    "relaxation",
    "omega",
    "lambda",
    "lambda-floor",
    "lambda-safety",
    "partition",
    "grid",
    "final-time",
    "iterations",
    "mu",
    "theta",
    "oracle",
];
const OUTPUT_KEYS: [&str; 4] = ["directory", "fields", "diagnostics", "table"];
const TABLE_KEYS: [&str; 2] = ["omegas", "sizes"];
const CHECK_KEYS: [&str; 1] = ["file"];

struct Entry {
    line: usize,
    section: &'static str,
    key: String,
    value: String,
    used: bool,
}

struct Raw {
    entries: Vec<Entry>,
    errors: Vec<ConfigError>,
}

impl Raw {
    /// Takes the single value for `section.key`, flagging duplicates.
    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        let mut found: Option<(usize, String)> = None;
        for e in &mut self.entries {
            if e.section == section && e.key == key {
                e.used = true;
                if found.is_none() {
                    found = Some((e.line, e.value.clone()));
                } else {
                    self.errors.push(ConfigError {
                        line: e.line,
                        message: format!("duplicate key `{key}` in [{section}]"),
                    });
                }
            }
        }
        found
    }
}

fn lex(text: &str) -> Raw {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    let mut section: Option<&'static str> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw_line.split_once('#') {
            Some((head, _)) => head,
            None => raw_line,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            match SECTIONS.iter().find(|s| **s == name.trim()) {
                Some(s) => section = Some(s),
                None => {
                    errors.push(ConfigError {
                        line,
                        message: format!("unknown section `[{}]`", name.trim()),
                    });
                    section = None;
                }
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(ConfigError {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            });
            continue;
        };
        let Some(section) = section else {
            errors.push(ConfigError {
                line,
                message: "key before any [section] header".into(),
            });
            continue;
        };
        entries.push(Entry {
            line,
            section,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            used: false,
        });
    }
    Raw { entries, errors }
}

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "experiment" => &EXPERIMENT_KEYS,
        "output" => &OUTPUT_KEYS,
        "table" => &TABLE_KEYS,
        "check" => &CHECK_KEYS,
        _ => &[],
    }
}

/// Parses and validates experiment text. All errors are aggregated; the
/// config is returned only when the file is entirely clean.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut raw = lex(text);

    // problem first: defaults hang off it
    let problem = match raw.take("experiment", "problem") {
        Some((line, v)) => match ProblemKind::parse(&v) {
            Some(p) => Some(p),
            None => {
                raw.errors.push(ConfigError {
                    line,
                    message: format!(
                        "unknown problem `{v}` (expected burgers-sine, ly-1d, ly-2d, ly-3d, embid, or spekreijse)"
                    ),
                });
                None
            }
        },
        None => {
            raw.errors.push(ConfigError {
                line: 0,
                message: "missing required key `problem` in [experiment]".into(),
            });
            None
        }
    };

    let model = take_parsed(&mut raw, "model", parse_model);
    let relaxation = take_parsed(&mut raw, "relaxation", |s| {
        Some(match s {
            "explicit" => RelaxationChoice::Explicit,
            "semi-implicit" => RelaxationChoice::SemiImplicit,
            _ => return None,
        })
    });
    let omega = take_parsed(&mut raw, "omega", |s| s.parse::<f64>().ok());
    let lambda_value = take_parsed(&mut raw, "lambda", |s| {
        Some(match s {
            "auto" => None,
            _ => Some(s.parse::<f64>().ok()?),
        })
    });
    let lambda_floor = take_parsed(&mut raw, "lambda-floor", |s| s.parse::<f64>().ok());
    let lambda_safety = take_parsed(&mut raw, "lambda-safety", |s| s.parse::<f64>().ok());
    let partition = take_parsed(&mut raw, "partition", |s| {
        Some(match s {
            "coordinate" => PartitionChoice::Coordinate,
            "diagonal" => PartitionChoice::Diagonal,
            _ => PartitionChoice::Blend(s.parse::<f64>().ok()?),
        })
    });
    let grid = take_parsed(&mut raw, "grid", parse_grid);
    let final_time = take_parsed(&mut raw, "final-time", |s| s.parse::<f64>().ok());
    let iterations = take_parsed(&mut raw, "iterations", |s| s.parse::<usize>().ok());
    let mu = take_parsed(&mut raw, "mu", |s| s.parse::<f64>().ok());
    let theta = take_parsed(&mut raw, "theta", AngleSpec::parse);
    let oracle = take_parsed(&mut raw, "oracle", |s| {
        Some(match s {
            "on" | "true" => true,
            "off" | "false" => false,
            _ => return None,
        })
    });

    let mut output = OutputConfig::default();
    if let Some((_, v)) = raw.take("output", "directory") {
        output.directory = PathBuf::from(v);
    }
    for (key, slot) in [("fields", 0usize), ("diagnostics", 1), ("table", 2)] {
        if let Some((_, v)) = raw.take("output", key) {
            match slot {
                0 => output.fields = v,
                1 => output.diagnostics = v,
                _ => output.table = v,
            }
        }
    }

    let mut table = TableConfig::default();
    let table_given = {
        let omegas = take_parsed_in(&mut raw, "table", "omegas", parse_f64_list);
        let sizes = take_parsed_in(&mut raw, "table", "sizes", parse_usize_list);
        let any = omegas.is_some() || sizes.is_some();
        if let Some(Some(v)) = omegas {
            table.omegas = v;
        }
        if let Some(Some(v)) = sizes {
            table.sizes = v;
        }
        any
    };

    let check_file = raw.take("check", "file").map(|(_, v)| PathBuf::from(v));

    // anything not consumed is unknown
    for e in &raw.entries {
        if !e.used {
            let hint = known_keys(e.section).join(", ");
            raw.errors.push(ConfigError {
                line: e.line,
                message: format!("unknown key `{}` in [{}] (known: {hint})", e.key, e.section),
            });
        }
    }
    raw.errors.sort_by_key(|e| e.line);

    let mut errors = std::mem::take(&mut raw.errors);
    let Some(problem) = problem else {
        return Err(ConfigErrors(errors));
    };

    // fill defaults, then validate cross-field constraints
    let model = model.flatten().unwrap_or_else(|| default_model(problem));
    let relaxation = relaxation.flatten().unwrap_or(RelaxationChoice::Explicit);
    let omega = omega.flatten().unwrap_or(1.0);
    let grid = grid.flatten().unwrap_or_else(|| default_grid(problem));
    let partition_given = matches!(partition, Some(Some(_)));
    let partition = partition.flatten().unwrap_or(PartitionChoice::Coordinate);
    let oracle = oracle.flatten().unwrap_or(false);
    let mu = mu.flatten();
    let theta = theta.flatten();
    let final_time = final_time.flatten();
    let iterations = iterations.flatten();
    let lambda_floor_given = matches!(lambda_floor, Some(Some(_)));
    let lambda_safety_given = matches!(lambda_safety, Some(Some(_)));
    let lambda_floor = lambda_floor.flatten().unwrap_or(1.0);
    let lambda_safety = lambda_safety.flatten().unwrap_or(1.0);

    let lambda = match lambda_value.flatten() {
        Some(Some(v)) => LambdaSpec::Fixed(v),
        Some(None) => LambdaSpec::Auto { floor: lambda_floor, safety: lambda_safety },
        None => default_lambda(problem),
    };
    if (lambda_floor_given || lambda_safety_given) && !matches!(lambda, LambdaSpec::Auto { .. }) {
        errors.push(ConfigError {
            line: 0,
            message: "lambda-floor/lambda-safety only apply when `lambda = auto`".into(),
        });
    }

    let duration = match (final_time, iterations) {
        (Some(_), Some(_)) => {
            errors.push(ConfigError {
                line: 0,
                message: "`final-time` and `iterations` are mutually exclusive".into(),
            });
            default_duration(problem)
        }
        (Some(t), None) => Duration::FinalTime(t),
        (None, Some(n)) => Duration::Iterations(n),
        (None, None) => default_duration(problem),
    };

    validate(
        &mut errors,
        problem,
        model,
        relaxation,
        omega,
        lambda,
        &grid,
        duration,
        mu,
        theta,
        partition_given,
        partition,
        oracle,
        table_given,
    );

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(ExperimentConfig {
        problem,
        model,
        relaxation,
        omega,
        lambda,
        partition,
        grid,
        duration,
        mu,
        theta,
        oracle,
        output,
        table,
        check_file,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigError {
            line: 0,
            message: format!("cannot read {}: {e}", path.display()),
        }])
    })?;
    parse_config(&text)
}

// Outer Option: key present? Inner Option (from Some case): parsed ok?
// Parse failures are recorded immediately so later code sees `Some(None)`.
fn take_parsed<T>(
    raw: &mut Raw,
    key: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Option<Option<T>> {
    take_parsed_in(raw, "experiment", key, parse)
}

fn take_parsed_in<T>(
    raw: &mut Raw,
    section: &str,
    key: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Option<Option<T>> {
    let (line, value) = raw.take(section, key)?;
    match parse(&value) {
        Some(v) => Some(Some(v)),
        None => {
            raw.errors.push(ConfigError {
                line,
                message: format!("cannot parse `{key} = {value}`"),
            });
            Some(None)
        }
    }
}

fn parse_model(s: &str) -> Option<ModelKind> {
    Some(match s {
        "d1q2" => ModelKind::D1Q2,
        "d1q3" => ModelKind::D1Q3,
        "upwind-d1q3" => ModelKind::UpwindD1Q3,
        "upwind-d2q5" => ModelKind::UpwindD2Q5,
        "upwind-d3q7" => ModelKind::UpwindD3Q7,
        "d2q9" => ModelKind::D2Q9,
        _ => return None,
    })
}

fn parse_grid(s: &str) -> Option<Vec<usize>> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .ok()?;
    (!parts.is_empty() && parts.len() <= 3).then_some(parts)
}

fn parse_f64_list(s: &str) -> Option<Vec<f64>> {
    let v: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().ok()?;
    (!v.is_empty()).then_some(v)
}

fn parse_usize_list(s: &str) -> Option<Vec<usize>> {
    let v: Vec<usize> =
        s.split(',').map(|p| p.trim().parse::<usize>()).collect::<Result<_, _>>().ok()?;
    (!v.is_empty()).then_some(v)
}

fn default_model(problem: ProblemKind) -> ModelKind {
    match problem {
        ProblemKind::BurgersSine | ProblemKind::Embid => ModelKind::UpwindD1Q3,
        ProblemKind::Ly1d => ModelKind::D1Q2,
        ProblemKind::Ly2d => ModelKind::UpwindD2Q5,
        ProblemKind::Ly3d => ModelKind::UpwindD3Q7,
        ProblemKind::Spekreijse => ModelKind::D2Q9,
    }
}

fn default_grid(problem: ProblemKind) -> Vec<usize> {
    match problem {
        ProblemKind::BurgersSine => vec![41],
        ProblemKind::Ly1d => vec![51],
        ProblemKind::Ly2d => vec![101, 101],
        ProblemKind::Ly3d => vec![61, 61, 61],
        ProblemKind::Embid => vec![101],
        ProblemKind::Spekreijse => vec![50, 50],
    }
}

fn default_lambda(problem: ProblemKind) -> LambdaSpec {
    match problem {
        ProblemKind::BurgersSine | ProblemKind::Ly1d | ProblemKind::Spekreijse => {
            LambdaSpec::Fixed(1.0)
        }
        ProblemKind::Ly2d => LambdaSpec::Fixed(2.0),
        ProblemKind::Ly3d => LambdaSpec::Fixed(3.0),
        ProblemKind::Embid => LambdaSpec::Auto { floor: 1.0, safety: 1.0 },
    }
}

fn default_duration(problem: ProblemKind) -> Duration {
    match problem {
        ProblemKind::BurgersSine => Duration::FinalTime(0.1 / (2.0 * PI)),
        ProblemKind::Ly1d => Duration::FinalTime(0.3),
        ProblemKind::Ly2d | ProblemKind::Ly3d => Duration::FinalTime(0.1),
        ProblemKind::Embid => Duration::Iterations(500),
        ProblemKind::Spekreijse => Duration::Iterations(1000),
    }
}

#[allow(clippy::too_many_arguments)]
fn validate(
    errors: &mut Vec<ConfigError>,
    problem: ProblemKind,
    model: ModelKind,
    relaxation: RelaxationChoice,
    omega: f64,
    lambda: LambdaSpec,
    grid: &[usize],
    duration: Duration,
    mu: Option<f64>,
    theta: Option<AngleSpec>,
    partition_given: bool,
    _partition: PartitionChoice,
    oracle: bool,
    table_given: bool,
) {
    let mut push = |message: String| errors.push(ConfigError { line: 0, message });

    if model.dim() != problem.dim() {
        push(format!(
            "model {model:?} is {}-dimensional but problem {} is {}-dimensional",
            model.dim(),
            problem.name(),
            problem.dim()
        ));
    }
    if grid.len() != problem.dim() {
        push(format!(
            "grid has {} axis size(s) but problem {} needs {}",
            grid.len(),
            problem.name(),
            problem.dim()
        ));
    }
    if grid.iter().any(|&n| n < 4) {
        push("grid sizes must be at least 4 nodes per axis".into());
    }
    if grid.len() > 1 && grid.windows(2).any(|w| w[0] != w[1]) {
        push("multi-dimensional domains are unit squares/cubes; grid axes must be equal".into());
    }

    match (problem.takes_mu(), mu) {
        (true, None) => push(format!(
            "problem {} requires the stiffness parameter `mu`",
            problem.name()
        )),
        (false, Some(_)) => push(format!("problem {} takes no `mu`", problem.name())),
        (true, Some(m)) if m <= 0.0 => push("`mu` must be positive".into()),
        (true, Some(m)) if problem == ProblemKind::Embid && !(1.0..=8.0).contains(&m) => {
            push("embid supports `mu` in [1, 8] (the reference solve's range)".into())
        }
        _ => {}
    }

    match (problem == ProblemKind::Spekreijse, theta) {
        (true, None) => push("spekreijse requires the flow angle `theta`".into()),
        (false, Some(_)) => push(format!("problem {} takes no `theta`", problem.name())),
        _ => {}
    }

    if partition_given && model != ModelKind::D2Q9 {
        push("`partition` only applies to the d2q9 model".into());
    }

    match relaxation {
        RelaxationChoice::Explicit => {
            if !(omega > 0.0 && omega < 2.0) {
                push(format!("explicit relaxation needs omega in (0, 2), got {omega}"));
            }
        }
        RelaxationChoice::SemiImplicit => {
            if omega <= 0.0 {
                push(format!("semi-implicit relaxation needs omega > 0, got {omega}"));
            }
        }
    }

    match lambda {
        LambdaSpec::Fixed(v) if v <= 0.0 => push(format!("lambda must be positive, got {v}")),
        LambdaSpec::Auto { floor, safety } => {
            if floor <= 0.0 {
                push(format!("lambda-floor must be positive, got {floor}"));
            }
            if safety < 1.0 {
                push(format!("lambda-safety must be at least 1, got {safety}"));
            }
        }
        _ => {}
    }

    match duration {
        Duration::FinalTime(t) if t <= 0.0 => push(format!("final-time must be positive, got {t}")),
        Duration::Iterations(0) => push("iterations must be at least 1".into()),
        _ => {}
    }

    if oracle && problem != ProblemKind::BurgersSine {
        push("`oracle = on` needs the fully periodic problem (burgers-sine)".into());
    }
    if table_given && problem != ProblemKind::BurgersSine {
        push("[table] only applies to burgers-sine (the convergence study)".into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_problem_defaults() {
        let cfg = parse_config("[experiment]\nproblem = burgers-sine\n").unwrap();
        assert_eq!(cfg.problem, ProblemKind::BurgersSine);
        assert_eq!(cfg.model, ModelKind::UpwindD1Q3);
        assert_eq!(cfg.lambda, LambdaSpec::Fixed(1.0));
        assert_eq!(cfg.grid, [41]);
        assert!(!cfg.oracle);
        assert_eq!(cfg.omega, 1.0);
        assert_eq!(cfg.relaxation, RelaxationChoice::Explicit);
        assert_eq!(cfg.duration, Duration::FinalTime(0.1 / (2.0 * PI)));
        assert_eq!(cfg.output.directory, PathBuf::from("out"));
        assert_eq!(cfg.table.sizes, [41, 81, 161, 321]);
    }

    #[test]
    fn missing_mu_is_reported_by_name() {
        let err = parse_config("[experiment]\nproblem = ly-2d\n").unwrap_err();
        assert!(err.0.iter().any(|e| e.message.contains("`mu`")), "{err}");
    }

    #[test]
    fn dimensional_mismatch_is_rejected() {
        let err =
            parse_config("[experiment]\nproblem = spekreijse\nmodel = d1q3\ntheta = 0\n")
                .unwrap_err();
        assert!(
            err.0.iter().any(|e| e.message.contains("1-dimensional")
                && e.message.contains("2-dimensional")),
            "{err}"
        );
    }

    #[test]
    fn unknown_keys_and_sections_carry_line_numbers() {
        let text = "[experiment]\nproblem = burgers-sine\nspeed = 3\n[plotting]\nstyle = dots\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        assert!(lines.contains(&3), "{err}");
        assert!(lines.contains(&4), "{err}");
        assert!(err.0.iter().any(|e| e.message.contains("unknown key `speed`")));
        assert!(err.0.iter().any(|e| e.message.contains("unknown section `[plotting]`")));
    }

    #[test]
    fn errors_aggregate_rather_than_shortcircuit() {
        let text = "[experiment]\nproblem = ly-2d\nmodel = d1q2\nomega = 5\niterations = 10\nfinal-time = 0.1\n";
        let err = parse_config(text).unwrap_err();
        // missing mu, dim mismatch, omega range, duration conflict
        assert!(err.0.len() >= 4, "{err}");
    }

    #[test]
    fn duplicate_keys_are_flagged() {
        let text = "[experiment]\nproblem = burgers-sine\nomega = 1\nomega = 0.5\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.0.iter().any(|e| e.line == 4 && e.message.contains("duplicate")), "{err}");
    }

    #[test]
    fn quarter_turn_angles_stay_symbolic() {
        let text = "[experiment]\nproblem = spekreijse\ntheta = pi/4\npartition = diagonal\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.theta, Some(AngleSpec::QuarterPi));
        let (a, b) = cfg.theta.unwrap().components();
        assert_eq!(a.to_bits(), b.to_bits());
        let (a, b) = AngleSpec::HalfPi.components();
        assert_eq!(a, 0.0);
        assert_eq!(b, 1.0);
    }

    #[test]
    fn grid_accepts_cross_separated_axes() {
        let text = "[experiment]\nproblem = ly-2d\nmu = 100\ngrid = 81 x 81\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.grid, [81, 81]);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# study\n\n[experiment]  \nproblem = burgers-sine # default run\n\n# done\n";
        assert!(parse_config(text).is_ok());
    }

    #[test]
    fn auto_lambda_reads_floor_and_safety() {
        let text = "[experiment]\nproblem = embid\nmu = 4\nlambda = auto\nlambda-floor = 2\nlambda-safety = 1.5\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.lambda, LambdaSpec::Auto { floor: 2.0, safety: 1.5 });

        let text = "[experiment]\nproblem = burgers-sine\nlambda = 1\nlambda-floor = 2\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.0.iter().any(|e| e.message.contains("lambda-floor")), "{err}");
    }

    #[test]
    fn oracle_is_restricted_to_the_periodic_problem() {
        let text = "[experiment]\nproblem = embid\nmu = 4\noracle = on\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.0.iter().any(|e| e.message.contains("oracle")), "{err}");
    }

    #[test]
    fn table_and_check_sections_parse() {
        let text = "[experiment]\nproblem = burgers-sine\n[table]\nomegas = 1.0, 1.9\nsizes = 41, 81\n[check]\nfile = expected.txt\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.table.omegas, [1.0, 1.9]);
        assert_eq!(cfg.table.sizes, [41, 81]);
        assert_eq!(cfg.check_file, Some(PathBuf::from("expected.txt")));
    }

    #[test]
    fn embid_mu_outside_reference_range_is_rejected() {
        let text = "[experiment]\nproblem = embid\nmu = 12\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.0.iter().any(|e| e.message.contains("[1, 8]")), "{err}");
    }
}
