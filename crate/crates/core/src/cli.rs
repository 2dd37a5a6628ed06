//! `bergman-lab` command line: one subcommand per pipeline stage, each
//! writing its artifacts plus a manifest into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forms::{assemble_mkh, coercivity_rayleigh, FormGrid, StencilOrder};
use crate::kernel::{build_kernel, default_degree};
use crate::radius::radius_axiom_constant;
use crate::verify::{kappa_field, pair_distance, rho_field, verify_bound, KappaMode, PairSampler, VerifyConfig};
use crate::weights::hypotheses::{default_probe, inspect};
use crate::weights::spec::{make_weight, WeightSpec};
use crate::weights::Weight;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_GATE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "bergman-lab", version, about = "Weighted Bergman kernel and Agmon-distance laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weight utilities.
    Weight {
        #[command(subcommand)]
        action: WeightAction,
    },
    /// ρ on a lattice over the box (z₁-plane for n ≥ 2).
    Radius(Common),
    /// d_κ between two points.
    Distance {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<String>,
    },
    /// K_φ(z, w) from the truncated orthogonal expansion.
    Kernel {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        z: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        w: Option<String>,
    },
    /// Lowest generalized Rayleigh quotient of the MKH form against the κ mass.
    Coercivity(Common),
    /// Kernel bound verification over sampled pairs.
    Verify(Common),
}

#[derive(Subcommand, Debug)]
enum WeightAction {
    /// Hypothesis scans; exit 2 when the gate is closed.
    Inspect(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    #[arg(long, alias = "family")]
    weight: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<f64>,
    /// Exponent tuples, e.g. "1,0;0,2".
    #[arg(long)]
    gamma: Option<String>,
    /// Half-width of the box.
    #[arg(long = "box")]
    half_width: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    degree: Option<usize>,
    /// rho | scale:<c> | table:<path>
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// The config file; every field is optional and flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    weight: Option<WeightSpec>,
    grid: Option<GridSpec>,
    basis: Option<BasisSpec>,
    kappa: Option<String>,
    sampler: Option<PairSampler>,
    window: Option<(f64, f64)>,
    eps_min: Option<f64>,
    log_margin: Option<f64>,
    out: Option<PathBuf>,
    from: Option<Vec<f64>>,
    to: Option<Vec<f64>>,
    z: Option<Vec<f64>>,
    w: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    #[serde(rename = "box")]
    half_width: Option<f64>,
    h: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisSpec {
    degree: Option<usize>,
}

/// Fully resolved settings, recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub weight: WeightSpec,
    pub half_width: f64,
    pub h: f64,
    pub degree: usize,
    pub kappa: String,
    pub sampler: PairSampler,
    pub window: (f64, f64),
    pub eps_min: f64,
    pub log_margin: f64,
    pub out: PathBuf,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub deterministic: bool,
}

struct Inputs {
    hashes: Vec<(String, String)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::InvalidParams(format!("bad coordinate `{t}` in `{s}`"))))
        .collect()
}

fn parse_gamma(s: &str) -> Result<Vec<Vec<u32>>> {
    s.split(';')
        .map(|tuple| {
            tuple
                .split(',')
                .map(|t| t.trim().parse::<u32>().map_err(|_| Error::InvalidParams(format!("bad exponent `{t}`"))))
                .collect()
        })
        .collect()
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParams(format!("`{name}` must be positive, got {v}")))
    }
}

fn resolve_weight(flags: &Common, file: Option<WeightSpec>) -> Result<WeightSpec> {
    let mut spec = file.unwrap_or_else(|| WeightSpec::new("fock", 1, json!({})));
    if let Some(fam) = &flags.weight {
        if *fam != spec.family {
            spec = WeightSpec { family: fam.clone(), n: spec.n, params: json!({}) };
        }
    }
    if let Some(n) = flags.n {
        spec.n = Some(n);
    }
    if !spec.params.is_object() {
        spec.params = json!({});
    }
    let params = spec.params.as_object_mut().expect("object");
    if let Some(m) = flags.m {
        params.insert("m".into(), json!(m));
    }
    if let Some(g) = &flags.gamma {
        params.insert("gamma".into(), json!(parse_gamma(g)?));
    }
    Ok(spec)
}

fn resolve(command: &str, flags: &Common, point_flags: [Option<&String>; 4]) -> Result<(RunConfig, Inputs)> {
    let mut hashes = Vec::new();
    let file: FileConfig = match &flags.config {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            hashes.push((path.display().to_string(), sha256_hex(&bytes)));
            serde_json::from_slice(&bytes).map_err(|e| Error::InvalidParams(format!("config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let weight = resolve_weight(flags, file.weight.clone())?;
    let w = make_weight(&weight)?;
    let dim = w.dim();
    let grid = file.grid.clone().unwrap_or_default();
    let half_width = positive("box", flags.half_width.or(grid.half_width).unwrap_or(4.0))?;
    let h = positive("h", flags.h.or(grid.h).unwrap_or(0.1))?;
    let degree = flags
        .degree
        .or(file.basis.as_ref().and_then(|b| b.degree))
        .unwrap_or_else(|| default_degree(w.n));
    if degree == 0 {
        return Err(Error::InvalidParams("`degree` must be positive".into()));
    }
    let defaults = VerifyConfig::default();
    let point = |flag: Option<&String>, file: Option<Vec<f64>>, default: Vec<f64>| -> Result<Vec<f64>> {
        let p = match flag {
            Some(s) => parse_point(s)?,
            None => file.unwrap_or(default),
        };
        if p.len() != dim {
            return Err(Error::InvalidParams(format!("points need {dim} real coordinates, got {}", p.len())));
        }
        Ok(p)
    };
    let origin = vec![0.0; dim];
    let mut e1 = origin.clone();
    e1[0] = 1.0;
    let cfg = RunConfig {
        command: command.into(),
        half_width,
        h,
        degree,
        kappa: flags.kappa.clone().or(file.kappa).unwrap_or_else(|| "rho".into()),
        sampler: file.sampler.unwrap_or(defaults.sampler),
        window: file.window.unwrap_or(defaults.window),
        eps_min: file.eps_min.unwrap_or(defaults.eps_min),
        log_margin: file.log_margin.unwrap_or(defaults.log_margin),
        out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("bergman-lab-out")),
        from: point(point_flags[0], file.from, origin.clone())?,
        to: point(point_flags[1], file.to, e1)?,
        z: point(point_flags[2], file.z, origin.clone())?,
        w: point(point_flags[3], file.w, origin)?,
        weight,
        deterministic: true,
    };
    positive("eps_min", cfg.eps_min)?;
    positive("log_margin", cfg.log_margin)?;
    Ok((cfg, Inputs { hashes }))
}

fn parse_kappa(s: &str, dim: usize, inputs: &mut Inputs) -> Result<KappaMode> {
    if s == "rho" {
        return Ok(KappaMode::Rho);
    }
    if let Some(c) = s.strip_prefix("scale:") {
        let c: f64 = c.parse().map_err(|_| Error::InvalidParams(format!("bad κ scale `{c}`")))?;
        return Ok(KappaMode::Scaled { c: positive("kappa scale", c)? });
    }
    if let Some(path) = s.strip_prefix("table:") {
        let bytes = fs::read(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
        inputs.hashes.push((path.to_string(), sha256_hex(&bytes)));
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let (mut points, mut values) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::InvalidParams(format!("κ table: {e}")))?;
            let row: Vec<f64> = rec
                .iter()
                .map(|t| t.trim().parse::<f64>().map_err(|_| Error::InvalidParams(format!("κ table: bad number `{t}`"))))
                .collect::<Result<_>>()?;
            if row.len() != dim + 1 {
                return Err(Error::InvalidParams(format!("κ table rows need {} columns", dim + 1)));
            }
            values.push(row[dim]);
            points.push(row[..dim].to_vec());
        }
        return Ok(KappaMode::Table { points, values, source: path.to_string() });
    }
    Err(Error::InvalidParams(format!("unknown κ mode `{s}` (rho | scale:<c> | table:<path>)")))
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

fn coord_names(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

struct Outcome {
    files: Vec<(String, Vec<u8>)>,
    summary: String,
    stdout_json: Option<Vec<u8>>,
    code: i32,
}

fn cmd_weight_inspect(cfg: &RunConfig) -> Result<Outcome> {
    let w = make_weight(&cfg.weight)?;
    let rep = inspect(&w, &default_probe(w.n))?;
    let open = rep.gate_open();
    let body = json_bytes(&rep)?;
    let summary = format!(
        "weight inspect {} gate={} D={} delta={}",
        if open { "OK" } else { "GATE-CLOSED" },
        if open { "OPEN" } else { "CLOSED" },
        rep.doubling_value().map_or("none".into(), |v| format!("{v:.6}")),
        rep.delta().map_or("none".into(), |v| format!("{v:.6}")),
    );
    Ok(Outcome {
        files: vec![("hypotheses.json".into(), body.clone())],
        summary,
        stdout_json: Some(body),
        code: if open { EXIT_OK } else { EXIT_GATE },
    })
}

fn plane_point(x: f64, y: f64, dim: usize) -> Vec<f64> {
    let mut p = vec![0.0; dim];
    p[0] = x;
    p[1] = y;
    p
}

fn cmd_radius(cfg: &RunConfig) -> Result<Outcome> {
    let w = make_weight(&cfg.weight)?;
    let rho = rho_field(&w);
    let dim = w.dim();
    let k = (cfg.half_width / cfg.h).round() as i64;
    let pts: Vec<Vec<f64>> = (-k..=k)
        .flat_map(|j| (-k..=k).map(move |i| (i as f64 * cfg.h, j as f64 * cfg.h)))
        .map(|(x, y)| plane_point(x, y, dim))
        .collect();
    let vals = rho.eval_many(&pts)?;
    let rows: Vec<Vec<String>> = pts.iter().zip(&vals).map(|(p, v)| vec![f(p[0]), f(p[1]), f(*v)]).collect();
    let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    let rho0 = rho.eval(&vec![0.0; dim])?;
    // Pairs at distance ρ(x)/2 along each axis of the plane.
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = pts
        .iter()
        .zip(&vals)
        .step_by(7)
        .map(|(p, r)| {
            let mut q = p.clone();
            q[0] += 0.5 * r;
            (p.clone(), q)
        })
        .collect();
    let axiom = radius_axiom_constant(&rho, &pairs, 1.0)?;
    let report = json!({
        "provenance": rho.provenance(),
        "rho_at_origin": rho0,
        "rho_min": lo,
        "rho_max": hi,
        "axiom_constant": axiom,
        "points": vals.len(),
        "plane": if dim > 2 { "z1" } else { "full" },
    });
    Ok(Outcome {
        files: vec![
            ("radius.csv".into(), csv_bytes(&["x".into(), "y".into(), "rho".into()], &rows)?),
            ("radius.json".into(), json_bytes(&report)?),
        ],
        summary: format!("radius OK rho0={rho0:.8} rho_min={lo:.6e} C={:.6}", axiom.value),
        stdout_json: None,
        code: EXIT_OK,
    })
}

fn cmd_distance(cfg: &RunConfig, kappa: &KappaMode) -> Result<Outcome> {
    let w = make_weight(&cfg.weight)?;
    let rho = rho_field(&w);
    let (field, substituted) = kappa_field(kappa, &rho, &[cfg.from.clone(), cfg.to.clone()])?;
    let pd = pair_distance(&field, &cfg.from, &cfg.to, None)?;
    let report = json!({
        "from": cfg.from,
        "to": cfg.to,
        "d": pd.d,
        "method": pd.method.tag(),
        "grid_spacing": pd.grid_spacing,
        "to_node": pd.w_node,
        "kappa": kappa.tag(),
        "kappa_provenance": field.provenance(),
        "kappa_substituted": substituted,
    });
    Ok(Outcome {
        files: vec![("distance.json".into(), json_bytes(&report)?)],
        summary: format!("distance OK d={:.10} method={}", pd.d, pd.method.tag()),
        stdout_json: None,
        code: EXIT_OK,
    })
}

fn cmd_kernel(cfg: &RunConfig) -> Result<Outcome> {
    let w = make_weight(&cfg.weight)?;
    let model = build_kernel(&w, cfg.degree)?;
    let v = model.eval(&cfg.z, &cfg.w)?;
    let report = json!({
        "z": cfg.z,
        "w": cfg.w,
        "re": v.k.re,
        "im": v.k.im,
        "abs": v.k.norm(),
        "degree": v.degree,
        "tail_indicator": v.tail_indicator,
        "tail_estimate": v.tail_estimate,
        "warning": v.warning,
        "validated_radius": model.validated_radius,
    });
    let flag = if v.warning { " tail-warning" } else { "" };
    Ok(Outcome {
        files: vec![("kernel.json".into(), json_bytes(&report)?)],
        summary: format!("kernel OK K={:.7}{:+.7}i{flag}", v.k.re, v.k.im),
        stdout_json: None,
        code: EXIT_OK,
    })
}

fn cmd_coercivity(cfg: &RunConfig, kappa: &KappaMode) -> Result<Outcome> {
    let w = make_weight(&cfg.weight)?;
    let grid = FormGrid::new(w.n, cfg.half_width, cfg.h, StencilOrder::Second)?;
    let asm = assemble_mkh(&w, &grid)?;
    let rho = rho_field(&w);
    let (field, substituted) = kappa_field(kappa, &rho, &[vec![0.0; w.dim()]])?;
    let eig = coercivity_rayleigh(&asm, &asm.mass_kappa(&field)?)?;
    let report = json!({
        "lambda": eig.lambda,
        "iterations": eig.iterations,
        "cg_iterations": eig.cg_iterations,
        "unknowns": asm.len(),
        "box": cfg.half_width,
        "h": cfg.h,
        "kappa": kappa.tag(),
        "kappa_provenance": field.provenance(),
        "kappa_substituted": substituted,
    });
    Ok(Outcome {
        files: vec![("coercivity.json".into(), json_bytes(&report)?)],
        summary: format!("coercivity OK lambda={:.8}", eig.lambda),
        stdout_json: None,
        code: EXIT_OK,
    })
}

fn cmd_verify(cfg: &RunConfig, kappa: &KappaMode) -> Result<Outcome> {
    let vc = VerifyConfig {
        sampler: cfg.sampler.clone(),
        window: cfg.window,
        eps_min: cfg.eps_min,
        log_margin: cfg.log_margin,
        degree: Some(cfg.degree),
        max_degree: VerifyConfig::default().max_degree.max(cfg.degree),
    };
    let rep = verify_bound(&cfg.weight, kappa, &vc)?;
    let dim = rep.rows.first().map_or(2, |r| r.z.len());
    let mut header = vec!["index".to_string()];
    header.extend(coord_names("z", dim));
    header.extend(coord_names("w", dim));
    header.extend(
        ["abs_k", "phi_sum", "rho_z", "rho_w", "kappa_z", "d", "q", "log_q", "method", "tail_indicator", "flagged", "in_window"]
            .map(String::from),
    );
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.index.to_string()];
            row.extend(r.z.iter().chain(&r.w).map(|v| f(*v)));
            row.extend([r.abs_k, r.phi_sum, r.rho_z, r.rho_w, r.kappa_z, r.d, r.q, r.log_q].map(f));
            row.push(r.method.tag().into());
            row.push(f(r.tail_indicator));
            row.push(r.flagged.to_string());
            row.push(r.in_window.to_string());
            row
        })
        .collect();
    let plot: Vec<Vec<String>> = rep
        .rows
        .iter()
        .filter(|r| r.q > 0.0)
        .map(|r| {
            vec![f(r.d), f(r.log_q), f(rep.fit.intercept + rep.fit.slope * r.d), r.in_window.to_string()]
        })
        .collect();
    let plot_header = ["d", "log_q", "fit", "in_window"].map(String::from);
    let summary = format!(
        "verify OK eps={:.6} slope={:.6} C={:.6e} residual={:.4} verdict={}{}",
        rep.eps_hat,
        rep.fit.slope,
        rep.c_hat,
        rep.fit.max_residual_above,
        match rep.verdict {
            crate::verify::Verdict::Pass => "PASS",
            crate::verify::Verdict::Fail => "FAIL",
        },
        if rep.exploratory { " exploratory" } else { "" }
    );
    Ok(Outcome {
        files: vec![
            ("report.json".into(), json_bytes(&rep)?),
            ("pairs.csv".into(), csv_bytes(&header, &rows)?),
            ("plot.csv".into(), csv_bytes(&plot_header, &plot)?),
        ],
        summary,
        stdout_json: None,
        code: EXIT_OK,
    })
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let meta = fs::metadata(dir)?;
    if meta.permissions().readonly() {
        return Err(Error::Io(format!("{} is not writable", dir.display())));
    }
    Ok(())
}

fn write_outputs(cfg: &RunConfig, inputs: &Inputs, out: &Outcome, started: Instant) -> Result<()> {
    let mut listed = Vec::new();
    for (name, bytes) in &out.files {
        fs::write(cfg.out.join(name), bytes)?;
        listed.push(json!({"file": name, "sha256": sha256_hex(bytes), "bytes": bytes.len()}));
    }
    let config_json = serde_json::to_vec(cfg).map_err(|e| Error::Io(e.to_string()))?;
    let mut inputs_json: Vec<Value> =
        inputs.hashes.iter().map(|(p, h)| json!({"path": p, "sha256": h})).collect();
    inputs_json.push(json!({"path": "<resolved config>", "sha256": sha256_hex(&config_json)}));
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "tool": "bergman-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command,
        "config": cfg,
        "inputs": inputs_json,
        "outputs": listed,
        "exit_code": out.code,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "timestamp_unix": stamp,
    });
    fs::write(cfg.out.join("manifest.json"), json_bytes(&manifest)?)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<i32> {
    let started = Instant::now();
    let (name, common, points) = match &cli.command {
        Command::Weight { action: WeightAction::Inspect(c) } => ("weight-inspect", c, [None; 4]),
        Command::Radius(c) => ("radius", c, [None; 4]),
        Command::Distance { common, from, to } => ("distance", common, [from.as_ref(), to.as_ref(), None, None]),
        Command::Kernel { common, z, w } => ("kernel", common, [None, None, z.as_ref(), w.as_ref()]),
        Command::Coercivity(c) => ("coercivity", c, [None; 4]),
        Command::Verify(c) => ("verify", c, [None; 4]),
    };
    let (cfg, mut inputs) = resolve(name, common, points)?;
    ensure_writable(&cfg.out)?;
    let dim = make_weight(&cfg.weight).map(|w: Weight| w.dim())?;
    let kappa = parse_kappa(&cfg.kappa, dim, &mut inputs)?;
    let out = match &cli.command {
        Command::Weight { .. } => cmd_weight_inspect(&cfg)?,
        Command::Radius(_) => cmd_radius(&cfg)?,
        Command::Distance { .. } => cmd_distance(&cfg, &kappa)?,
        Command::Kernel { .. } => cmd_kernel(&cfg)?,
        Command::Coercivity(_) => cmd_coercivity(&cfg, &kappa)?,
        Command::Verify(_) => cmd_verify(&cfg, &kappa)?,
    };
    write_outputs(&cfg, &inputs, &out, started)?;
    if let Some(body) = &out.stdout_json {
        print!("{}", String::from_utf8_lossy(body));
        eprintln!("{}", out.summary);
    } else {
        println!("{}", out.summary);
    }
    Ok(out.code)
}

/// Parses `args` (program name first) and runs one command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
