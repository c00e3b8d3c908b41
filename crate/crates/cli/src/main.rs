use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use serde_json::{json, Map, Value};

use polylab_cli::{load_config, parse_config_value, run, write_output, CliError, CliResult, Subcommand};

#[derive(Parser)]
#[command(name = "polylab", version, about = "Batch experiments for the polylab toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; flags given alongside it take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random draw; defaults to 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Primary artifact path; extra artifacts are written next to it.
    /// Without it the primary artifact goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Parameter block as inline JSON or a path to a JSON file.
    #[arg(long)]
    params: Option<String>,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Run a config file; the subcommand is taken from the file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Newton interpolation of a polynomial field on a node grid.
    Interp(Common),
    /// Divided-difference coordinates and the map back to multijets.
    Multijet(Common),
    /// Periodic-point counts of an interval map.
    Perturb {
        #[command(flatten)]
        common: Common,
        /// `logistic`, `square`, or a JSON map object such as `{"map":"linear","a":2}`.
        #[arg(long)]
        map: Option<String>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        minimal_period: bool,
    },
    /// Limit cycles of a composed polycycle return map.
    Cycles {
        #[command(flatten)]
        common: Common,
        /// JSON file holding a polycycle model.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        delta1: Option<f64>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Rolle inequality on level curves, or the Khovanskii reduction.
    Rolle(Common),
    /// Chain maps, limiting sets and regularity diagnostics.
    Strata(Common),
    /// Abelian integrals over ovals and their zeros.
    Abel(Common),
}

fn read_json(source: &str, field: &str) -> CliResult<Value> {
    let text = if source.trim_start().starts_with(['{', '[']) {
        source.to_string()
    } else {
        std::fs::read_to_string(source).map_err(|e| CliError::schema(field, format!("cannot read {source}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::schema(field, e.to_string()))
}

fn build_config(sub: Subcommand, common: &Common, flags: Map<String, Value>) -> CliResult<Value> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::schema("<config>", format!("cannot read {}: {e}", path.display())))?;
            if text.trim().is_empty() {
                return Err(CliError::schema(".", "empty config"));
            }
            let v: Value = serde_json::from_str(&text).map_err(|e| CliError::schema(".", e.to_string()))?;
            if !v.is_object() {
                return Err(CliError::schema(".", "config must be a JSON object"));
            }
            v
        }
        None => json!({ "subcommand": sub.name() }),
    };
    let obj = cfg.as_object_mut().expect("checked above");
    match obj.get("subcommand") {
        Some(Value::String(s)) if s == sub.name() => {}
        Some(other) => {
            return Err(CliError::schema("subcommand", format!("config is for {other}, invoked as {}", sub.name())))
        }
        None => return Err(CliError::schema("subcommand", "missing field `subcommand`")),
    }
    if let Some(seed) = common.seed {
        obj.insert("seed".into(), json!(seed));
    }
    if let Some(out) = &common.output {
        obj.insert("output".into(), json!(out));
    }
    let mut params = match obj.remove("parameters") {
        Some(Value::Object(m)) => m,
        Some(Value::Null) | None => Map::new(),
        Some(_) => return Err(CliError::schema("parameters", "expected an object")),
    };
    if let Some(src) = &common.params {
        match read_json(src, "--params")? {
            Value::Object(m) => params.extend(m),
            _ => return Err(CliError::schema("--params", "expected a JSON object")),
        }
    }
    params.extend(flags);
    obj.insert("parameters".into(), Value::Object(params));
    Ok(cfg)
}

fn execute(cli: Cli) -> CliResult<()> {
    let cfg = match cli.command {
        Command::Run { config } => load_config(&config)?,
        Command::Interp(c) => parse_config_value(build_config(Subcommand::Interp, &c, Map::new())?)?,
        Command::Multijet(c) => parse_config_value(build_config(Subcommand::Multijet, &c, Map::new())?)?,
        Command::Rolle(c) => parse_config_value(build_config(Subcommand::Rolle, &c, Map::new())?)?,
        Command::Strata(c) => parse_config_value(build_config(Subcommand::Strata, &c, Map::new())?)?,
        Command::Abel(c) => parse_config_value(build_config(Subcommand::Abel, &c, Map::new())?)?,
        Command::Perturb { common, map, n_max, resolution, minimal_period } => {
            let mut flags = Map::new();
            if let Some(m) = map {
                let v = if m.trim_start().starts_with('{') { read_json(&m, "--map")? } else { json!({ "map": m }) };
                flags.insert("map".into(), v);
            }
            if let Some(n) = n_max {
                flags.insert("n_max".into(), json!(n));
            }
            if let Some(r) = resolution {
                flags.insert("resolution".into(), json!(r));
            }
            if minimal_period {
                flags.insert("minimal_period".into(), json!(true));
            }
            parse_config_value(build_config(Subcommand::Perturb, &common, flags)?)?
        }
        Command::Cycles { common, model, delta1, resolution } => {
            let mut flags = Map::new();
            if let Some(path) = model {
                flags.insert("model".into(), read_json(&path.to_string_lossy(), "--model")?);
            }
            if let Some(d) = delta1 {
                flags.insert("delta1".into(), json!(d));
            }
            if let Some(r) = resolution {
                flags.insert("resolution".into(), json!(r));
            }
            parse_config_value(build_config(Subcommand::Cycles, &common, flags)?)?
        }
    };
    let out = run(&cfg)?;
    for p in write_output(&cfg, &out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("POLYLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::schema("POLYLAB_THREADS", format!("expected a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Io(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", serde_json::to_string(&e.payload()).unwrap_or_default());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
