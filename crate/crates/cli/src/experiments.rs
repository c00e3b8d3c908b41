//! One runner per subcommand. Each turns validated parameters into
//! artifacts: CSV for tables, JSON for structured reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use polylab_core::abelint::{count_zeros, Branch, HamiltonianProblem};
use polylab_core::chainstrata::{
    a_regularity_test, ap_regularity_test, geometric_multiplicity, limiting_set_sample, linearize_compare,
    ChainMapSpec, ConeSpec, LimitOptions, LinearizeOptions, SequenceGenerator, Stratum,
};
use polylab_core::interp::{build_table, newton_interpolate, JetField, NodeGrid};
use polylab_core::multijet::{
    dd_of_map, diagonal_distance, epsilon_to_u, jet_of_map, pi_map, u_to_epsilon, MultijetPoint,
};
use polylab_core::normalforms::{count_limit_cycles, Connector, CycleOptions, PolycycleModel};
use polylab_core::perturb::{count_periodic, CountOptions, MapSpec};
use polylab_core::pfaffrolle::{
    khovanskii_reduce, rolle_count, trace_level_curve, ComponentKind, MixedSystem, PolySystemSpec, RolleDerivative,
    RolleReport, TraceOptions,
};
use polylab_core::poly::Poly;

use crate::config::{from_value, CliError, CliResult, ExperimentConfig, Subcommand};
use crate::format::{num, to_json, Table};

/// A named output. The primary artifact has no suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub suffix: Option<String>,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub primary: Artifact,
    pub extra: Vec<Artifact>,
}

impl Output {
    fn single(content: String) -> Self {
        Output { primary: Artifact { suffix: None, content }, extra: Vec::new() }
    }

    fn with(mut self, suffix: &str, content: String) -> Self {
        self.extra.push(Artifact { suffix: Some(suffix.to_string()), content });
        self
    }
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<Output> {
    match cfg.subcommand {
        Subcommand::Interp => interp(cfg),
        Subcommand::Multijet => multijet(cfg),
        Subcommand::Perturb => perturb(cfg),
        Subcommand::Cycles => cycles(cfg),
        Subcommand::Rolle => rolle(cfg),
        Subcommand::Strata => strata(cfg),
        Subcommand::Abel => abel(cfg),
    }
}

fn default_random_points() -> usize {
    100
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpParams {
    field: Vec<Poly>,
    grid: NodeGrid,
    #[serde(default)]
    points: Vec<Vec<f64>>,
    /// Extra evaluation points drawn uniformly from the grid's bounding box.
    #[serde(default = "default_random_points")]
    random_points: usize,
}

fn interp(cfg: &ExperimentConfig) -> CliResult<Output> {
    let p: InterpParams = cfg.params()?;
    p.grid.validate()?;
    let d = p.grid.dim();
    if p.field.is_empty() || p.field.iter().any(|f| f.nvars() != d) {
        return Err(CliError::schema("parameters.field", format!("need polynomials in {d} variables")));
    }
    if let Some(i) = p.points.iter().position(|x| x.len() != d) {
        return Err(CliError::schema(format!("parameters.points[{i}]"), format!("expected {d} coordinates")));
    }
    let table = build_table(&p.field, &p.grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stream_seed(1));
    let bounds: Vec<(f64, f64)> = p
        .grid
        .axes
        .iter()
        .map(|ax| ax.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))))
        .collect();
    let mut points = p.points.clone();
    for _ in 0..p.random_points {
        points.push(bounds.iter().map(|&(a, b)| if a < b { rng.random_range(a..=b) } else { a }).collect());
    }
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.extend(["component", "interpolant", "exact", "abs_error"].map(String::from));
    let mut t = Table::new(&header);
    let zeros = vec![0; d];
    for x in &points {
        let approx = newton_interpolate(&table, x);
        let exact = p.field.taylor(x, &zeros);
        for (c, (a, e)) in approx.iter().zip(&exact).enumerate() {
            let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
            row.extend([c.to_string(), num(*a), num(*e), num((a - e).abs())]);
            t.row(row);
        }
    }
    Ok(Output::single(t.finish()))
}

fn default_jet_order() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MultijetParams {
    function: Poly,
    nodes: Vec<f64>,
    #[serde(default = "default_jet_order")]
    jet_order: usize,
}

#[derive(Serialize)]
struct MultijetReport {
    nodes: Vec<f64>,
    jet_order: usize,
    diagonal_distance: Option<f64>,
    u: Vec<f64>,
    epsilon: Vec<f64>,
    round_trip_error: f64,
    pi_of_u: MultijetPoint,
    direct_jet: MultijetPoint,
    max_blowup_error: f64,
}

fn multijet(cfg: &ExperimentConfig) -> CliResult<Output> {
    let p: MultijetParams = cfg.params()?;
    if p.function.nvars() != 1 {
        return Err(CliError::schema("parameters.function", "must be univariate"));
    }
    let f = &p.function;
    let derivs = |x: &f64, order: usize| -> Option<Vec<f64>> {
        let mut q = f.clone();
        let mut out = Vec::with_capacity(order + 1);
        for _ in 0..=order {
            out.push(q.eval(&[*x]));
            q = q.partial(0);
        }
        Some(out)
    };
    let dd = dd_of_map(&derivs, &p.nodes, p.jet_order)?;
    let eps = u_to_epsilon(&p.nodes, &dd.u)?;
    let back = epsilon_to_u(&p.nodes, &eps)?;
    let round_trip_error = back.iter().zip(&dd.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let pi = pi_map(&dd);
    let direct = jet_of_map(&derivs, &p.nodes)?;
    let max_blowup_error = pi
        .values
        .iter()
        .chain(&pi.derivs)
        .zip(direct.values.iter().chain(&direct.derivs))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let report = MultijetReport {
        nodes: p.nodes.clone(),
        jet_order: p.jet_order,
        diagonal_distance: (p.nodes.len() >= 2).then(|| diagonal_distance(&p.nodes)),
        u: dd.u.clone(),
        epsilon: eps.0,
        round_trip_error,
        pi_of_u: pi,
        direct_jet: direct,
        max_blowup_error,
    };
    Ok(Output::single(to_json(&report)))
}

fn default_resolution() -> usize {
    1_000_000
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbParams {
    map: MapSpec,
    n_max: usize,
    #[serde(default = "default_resolution")]
    resolution: usize,
    #[serde(default)]
    minimal_period: bool,
}

fn perturb(cfg: &ExperimentConfig) -> CliResult<Output> {
    let p: PerturbParams = cfg.params()?;
    if p.n_max == 0 {
        return Err(CliError::schema("parameters.n_max", "must be at least 1"));
    }
    let f = p.map.build();
    let opts = CountOptions { resolution: p.resolution, minimal_period: p.minimal_period, window: None };
    let mut t = Table::new(&["n", "p_n", "high_confidence", "unresolved_cells"]);
    for n in 1..=p.n_max {
        let c = count_periodic(&f, n, &opts);
        t.row(vec![
            n.to_string(),
            c.count.to_string(),
            c.confidence.high.to_string(),
            c.confidence.unresolved_cells.to_string(),
        ]);
    }
    Ok(Output::single(t.finish()))
}

fn default_cycle_resolution() -> usize {
    CycleOptions::default().resolution
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CyclesParams {
    model: PolycycleModel,
    delta1: f64,
    #[serde(default)]
    family: Vec<Vec<Connector>>,
    #[serde(default = "default_cycle_resolution")]
    resolution: usize,
}

fn cycles(cfg: &ExperimentConfig) -> CliResult<Output> {
    let p: CyclesParams = cfg.params()?;
    let mut opts = CycleOptions { resolution: p.resolution, ..CycleOptions::default() };
    if let Some(t) = cfg.tolerance("regular_tol") {
        opts.regular_tol = t;
    }
    let count = count_limit_cycles(&p.model, &p.family, p.delta1, &opts)?;
    Ok(Output::single(to_json(&count)))
}

fn zero() -> f64 {
    0.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelSetParams {
    system: PolySystemSpec,
    function: Poly,
    #[serde(default = "zero")]
    a: f64,
    delta: f64,
    #[serde(default)]
    trace: TraceOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KhovanskiiParams {
    system: MixedSystem,
    cascade: [f64; 4],
    #[serde(default)]
    trace: TraceOptions,
}

/// Splits off the `mode` tag so the remaining block is deserialized on its
/// own and schema errors keep their full path.
fn split_mode(cfg: &ExperimentConfig, modes: &[&str]) -> CliResult<(String, Value)> {
    let mut obj = match &cfg.parameters {
        Value::Object(m) => m.clone(),
        _ => return Err(CliError::schema("parameters", "expected an object with a `mode` field")),
    };
    let mode = match obj.remove("mode") {
        Some(Value::String(m)) if modes.contains(&m.as_str()) => m,
        Some(other) => {
            return Err(CliError::schema("parameters.mode", format!("unknown mode {other}; expected one of {modes:?}")))
        }
        None => return Err(CliError::schema("parameters.mode", format!("missing; expected one of {modes:?}"))),
    };
    Ok((mode, Value::Object(obj)))
}

#[derive(Serialize)]
struct ComponentRolle {
    kind: ComponentKind,
    length: f64,
    vertices: usize,
    report: RolleReport,
}

#[derive(Serialize)]
struct LevelSetRolle {
    components: Vec<ComponentRolle>,
    lhs: usize,
    rhs: usize,
    holds: bool,
}

fn rolle(cfg: &ExperimentConfig) -> CliResult<Output> {
    let (mode, block) = split_mode(cfg, &["level_set", "khovanskii"])?;
    let tune = |mut t: TraceOptions| {
        t.rng_seed = cfg.stream_seed(2);
        if let Some(v) = cfg.tolerance("step_fraction") {
            t.step_fraction = v;
        }
        if let Some(v) = cfg.tolerance("max_angle") {
            t.max_angle = v;
        }
        t
    };
    if mode == "level_set" {
        let LevelSetParams { system, function, a, delta, trace } = from_value("parameters", block)?;
        {
            let sys = system.build()?;
            if function.nvars() != system.equations.first().map_or(0, |e| e.nvars()) {
                return Err(CliError::schema("parameters.function", "variable count differs from the system"));
            }
            let comps = trace_level_curve(&sys, &system.value, &tune(trace))?;
            let mut out = Vec::with_capacity(comps.len());
            for c in &comps {
                let report = rolle_count(&function, c, a, delta, RolleDerivative::Tangent)?;
                out.push(ComponentRolle { kind: c.kind, length: c.length(), vertices: c.points.len(), report });
            }
            let lhs = out.iter().map(|c| c.report.lhs).sum();
            let rhs = out.iter().map(|c| c.report.rhs).sum();
            let holds = out.iter().all(|c| c.report.holds);
            Ok(Output::single(to_json(&LevelSetRolle { components: out, lhs, rhs, holds })))
        }
    } else {
        let KhovanskiiParams { system, cascade, trace } = from_value("parameters", block)?;
        let report = khovanskii_reduce(&system, cascade, &tune(trace))?;
        Ok(Output::single(to_json(&report)))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearizeParams {
    map: ChainMapSpec,
    target: Vec<f64>,
    radius: f64,
    #[serde(default)]
    options: LinearizeOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiplicityParams {
    map: ChainMapSpec,
    radius: f64,
    targets: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitParams {
    p: Vec<Poly>,
    cone: ConeSpec,
    ladder: Vec<f64>,
    #[serde(default)]
    options: LimitOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegularityParams {
    big: Stratum,
    small: Stratum,
    point: Vec<f64>,
    generator: SequenceGenerator,
    /// Present for a_P-regularity.
    #[serde(default)]
    p: Option<Vec<Poly>>,
}

fn strata(cfg: &ExperimentConfig) -> CliResult<Output> {
    let (mode, block) = split_mode(cfg, &["linearize", "multiplicity", "limit", "regularity"])?;
    match mode.as_str() {
        "linearize" => {
            let LinearizeParams { map, target, radius, mut options } = from_value("parameters", block)?;
            options.seed = cfg.stream_seed(3);
            Ok(Output::single(to_json(&linearize_compare(&map, &target, radius, &options)?)))
        }
        "multiplicity" => {
            let MultiplicityParams { map, radius, targets } = from_value("parameters", block)?;
            Ok(Output::single(to_json(&geometric_multiplicity(&map, radius, &targets)?)))
        }
        "limit" => {
            let LimitParams { p, cone, ladder, mut options } = from_value("parameters", block)?;
            options.seed = cfg.stream_seed(4);
            if let Some(w) = cfg.tolerance("window") {
                options.window = w;
            }
            let set = limiting_set_sample(&p, &cone, &ladder, &options)?;
            let dim = set.points.first().map_or(0, Vec::len);
            let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
            header.insert(0, "point".into());
            let mut t = Table::new(&header);
            for (i, x) in set.points.iter().enumerate() {
                let mut row = vec![i.to_string()];
                row.extend(x.iter().map(|v| num(*v)));
                t.row(row);
            }
            Ok(Output::single(to_json(&set)).with("points.csv", t.finish()))
        }
        _ => {
            let RegularityParams { big, small, point, mut generator, p } = from_value("parameters", block)?;
            if let SequenceGenerator::RandomOnStratum { seed, .. } = &mut generator {
                *seed = cfg.stream_seed(5);
            }
            let report = match &p {
                Some(p) => ap_regularity_test(&big, &small, p, &point, &generator)?,
                None => a_regularity_test(&big, &small, &point, &generator)?,
            };
            let mut header: Vec<String> = vec!["sequence".into(), "term".into(), "witness".into()];
            header.extend((0..point.len()).map(|i| format!("x{i}")));
            let mut t = Table::new(&header);
            let witness = report.witness.as_ref();
            for (s, seq) in report.sequences.iter().enumerate() {
                let is_witness = witness.is_some_and(|w| w.points == seq.points);
                for (k, x) in seq.points.iter().enumerate() {
                    let mut row = vec![s.to_string(), k.to_string(), is_witness.to_string()];
                    row.extend(x.iter().map(|v| num(*v)));
                    t.row(row);
                }
            }
            Ok(Output::single(to_json(&report)).with("sequences.csv", t.finish()))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AbelParams {
    problem: HamiltonianProblem,
    branches: Vec<Branch>,
    grid: Vec<f64>,
}

#[derive(Serialize)]
struct BranchZeros {
    branch: usize,
    zeros: Vec<f64>,
    identically_zero: bool,
}

fn abel(cfg: &ExperimentConfig) -> CliResult<Output> {
    let p: AbelParams = cfg.params()?;
    let mut problem = p.problem;
    if let Some(s) = cfg.tolerance("step") {
        problem.step = s;
    }
    problem.validate()?;
    let mut t = Table::new(&["h", "branch", "integral"]);
    let mut zeros = Vec::with_capacity(p.branches.len());
    for (b, branch) in p.branches.iter().enumerate() {
        let r = count_zeros(&problem, branch, &p.grid)?;
        for (h, v) in &r.samples {
            t.row(vec![num(*h), b.to_string(), num(*v)]);
        }
        zeros.push(BranchZeros { branch: b, zeros: r.zeros, identically_zero: r.identically_zero });
    }
    Ok(Output::single(t.finish()).with("zeros.json", to_json(&zeros)))
}
