//! Batch front-end. Every subcommand resolves its parameters from flags,
//! then the matching `[section]` of an INI `--config` file, then the file's
//! top-level keys, then built-in defaults. Exit codes: 0 when every check
//! passes, 1 on a failed check or a scientific error (with a JSON report),
//! 2 on usage errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{blowdown_convergence, BlowdownOptions, BlowdownReport, DEFAULT_ANNULUS};
use crate::error::Error;
use crate::field::{cone_check, ScalarField4, JET_MARGIN, NESTED_MARGIN};
use crate::forcing::{ForcingSpec, KSpec};
use crate::mass::{level_grid, mass_scan_grid, mass_scan_radial_with, BinningOptions, MassScan};
use crate::pohozaev::{pohozaev_grid, pohozaev_radial, PohozaevGridOptions, PohozaevReport};
use crate::radial::{
    concavity_check, cone_violation, first_integral_residual, ode_residual, solve_radial, solve_radial_general,
    ProfileMeta, RadialOptions, RadialProfile,
};
use crate::VERSION;

#[derive(Parser, Debug)]
#[command(name = "sigma2lab", version, about = "Verification runs for sigma_2 equations on R^4")]
pub struct Cli {
    /// INI file with defaults for the flags (keys named like the flags).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the JSON run report here instead of stdout.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the radial problem and export the profile.
    Radial(RadialArgs),
    /// Scan N, P, Q, V and the mass over levels.
    MassScan(MassScanArgs),
    /// Compare both sides of the Pohozaev identity.
    Pohozaev(PohozaevArgs),
    /// Sample or load a grid field and test the discrete identities.
    FieldCheck(FieldCheckArgs),
    /// Blow-down diagnostics along a level sequence.
    Blowdown(BlowdownArgs),
    /// Cellwise cone test of a grid field.
    ConeCheck(ConeCheckArgs),
}

#[derive(Args, Debug, Default)]
pub struct ForcingArgs {
    /// Ascending coefficients of p in f = e^{4u} p(u), comma separated.
    #[arg(long)]
    pub p: Option<String>,
    /// `constant:<c>` or `gaussian:<base>,<amplitude>,<width>`.
    #[arg(long)]
    pub k: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct GridArgs {
    /// Field blob to load.
    #[arg(long)]
    pub field: Option<String>,
    /// Profile CSV to sample on a centered cube (sidecar `<stem>.json`).
    #[arg(long)]
    pub profile: Option<String>,
    /// Nodes per axis when sampling a profile.
    #[arg(long)]
    pub n: Option<usize>,
    /// Half-width of the sampled cube.
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RadialArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub s_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub first_integral_tol: Option<f64>,
    #[arg(long)]
    pub ode_tol: Option<f64>,
    #[command(flatten)]
    pub forcing: ForcingArgs,
    /// Profile CSV; the sidecar goes to `<stem>.json`.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct MassScanArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// `hi:lo:count` or a comma-separated decreasing list.
    #[arg(long, allow_hyphen_values = true)]
    pub t_grid: Option<String>,
    /// Scan with the declared forcing `c f` (c < 1: a super-solution).
    #[arg(long)]
    pub forcing_scale: Option<f64>,
    #[arg(long)]
    pub mass_tol: Option<f64>,
    #[arg(long)]
    pub monotone_tol: Option<f64>,
    #[command(flatten)]
    pub forcing: ForcingArgs,
    /// Scan CSV; the sidecar goes to `<stem>.json`.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct PohozaevArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Ball radius (radial profiles).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Level (grid fields).
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long)]
    pub kernel_half_width: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[command(flatten)]
    pub forcing: ForcingArgs,
    /// JSON report of the identity.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct FieldCheckArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub divergence_tol: Option<f64>,
    #[arg(long)]
    pub solution_tol: Option<f64>,
    #[command(flatten)]
    pub forcing: ForcingArgs,
    /// Write the field blob here (sidecar `<stem>.json`).
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct BlowdownArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub t_grid: Option<String>,
    #[arg(long)]
    pub annulus: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub monotone_tol: Option<f64>,
    /// Bound on the last gradient alignment error.
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[command(flatten)]
    pub forcing: ForcingArgs,
    /// CSV `t,r_min,r_max,sup_err,grad_err`; summary in `<stem>.json`.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct ConeCheckArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub min_fraction: Option<f64>,
    #[command(flatten)]
    pub forcing: ForcingArgs,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Format(_) | Error::Json(_) | Error::Invalid(_) => CliError::Usage(e.to_string()),
            other => CliError::Lib(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parameter lookup with provenance: flag, then config, then default. Every
/// resolved value is echoed.
struct Resolver {
    section: BTreeMap<String, String>,
    strict: BTreeSet<String>,
    used: BTreeSet<String>,
    echo: BTreeMap<String, String>,
}

impl Resolver {
    fn new(ini: Option<&ini::Ini>, name: &str) -> Self {
        let mut section = BTreeMap::new();
        let mut strict = BTreeSet::new();
        if let Some(ini) = ini {
            for (k, v) in ini.general_section().iter() {
                section.insert(k.to_string(), v.to_string());
            }
            if let Some(s) = ini.section(Some(name)) {
                for (k, v) in s.iter() {
                    section.insert(k.to_string(), v.to_string());
                    strict.insert(k.to_string());
                }
            }
        }
        Self { section, strict, used: BTreeSet::new(), echo: BTreeMap::new() }
    }

    fn opt<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.used.insert(key.to_string());
        let v = match flag {
            Some(v) => Some(v),
            None => match self.section.get(key) {
                Some(raw) => match raw.trim().parse::<T>() {
                    Ok(v) => Some(v),
                    Err(e) => return usage(format!("config key {key} = {raw:?}: {e}")),
                },
                None => None,
            },
        };
        if let Some(v) = &v {
            self.echo.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.echo.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    fn req<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => usage(format!("missing required parameter --{key}")),
        }
    }

    fn finish(&self, name: &str) -> CliResult<()> {
        match self.strict.iter().find(|k| !self.used.contains(*k)) {
            Some(k) => usage(format!("unknown key {k:?} in config section [{name}]")),
            None => Ok(()),
        }
    }
}

fn parse_list(raw: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|x| x.trim().parse::<f64>().or_else(|e| usage(format!("bad number {x:?}: {e}"))))
        .collect()
}

fn parse_forcing(raw: Option<String>) -> CliResult<Option<ForcingSpec>> {
    match raw {
        None => Ok(None),
        Some(r) => Ok(Some(ForcingSpec::new(parse_list(&r)?)?)),
    }
}

fn parse_k(raw: Option<String>) -> CliResult<Option<KSpec>> {
    let Some(raw) = raw else { return Ok(None) };
    let (kind, rest) = raw.split_once(':').unwrap_or(("constant", raw.as_str()));
    let v = parse_list(rest)?;
    let k = match (kind.trim(), v.as_slice()) {
        ("constant", [c]) => KSpec::Constant { value: *c },
        ("gaussian", [b, a, w]) => KSpec::Gaussian { base: *b, amplitude: *a, width: *w },
        _ => return usage(format!("bad K spec {raw:?}; use constant:<c> or gaussian:<base>,<amp>,<width>")),
    };
    k.validate()?;
    Ok(Some(k))
}

fn parse_t_grid(raw: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = raw.split(':').collect();
    let grid = match parts.as_slice() {
        [hi, lo, n] => {
            let hi = parse_list(hi)?[0];
            let lo = parse_list(lo)?[0];
            let n: usize = n.trim().parse().or_else(|e| usage(format!("bad level count {n:?}: {e}")))?;
            if n == 0 {
                return usage("level count must be positive");
            }
            level_grid(hi, lo, n)
        }
        [list] => parse_list(list)?,
        _ => return usage(format!("bad t-grid {raw:?}; use hi:lo:count or a comma list")),
    };
    if grid.windows(2).any(|w| !(w[0] > w[1])) {
        return usage("t-grid must be strictly decreasing");
    }
    Ok(grid)
}

fn sidecar_path(out: &str) -> PathBuf {
    Path::new(out).with_extension("json")
}

fn read_to_string(path: &str) -> CliResult<String> {
    std::fs::read_to_string(path).or_else(|e| usage(format!("cannot read {path}: {e}")))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    std::fs::write(path, contents).or_else(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn load_profile(path: &str) -> CliResult<RadialProfile> {
    let csv = read_to_string(path)?;
    let meta_path = sidecar_path(path);
    let meta_raw = read_to_string(&meta_path.to_string_lossy())?;
    let meta: ProfileMeta = serde_json::from_str(&meta_raw)
        .or_else(|e| usage(format!("malformed profile sidecar {}: {e}", meta_path.display())))?;
    Ok(RadialProfile::from_csv(&csv, &meta)?)
}

/// JSON object with the payload's fields plus `config` and `version`.
fn with_echo<T: Serialize>(payload: &T, echo: &BTreeMap<String, String>) -> CliResult<Value> {
    let mut v = serde_json::to_value(payload).map_err(Error::from)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("config".into(), json!(echo));
            obj.insert("version".into(), json!(VERSION));
            Ok(v)
        }
        None => Ok(json!({ "value": v, "config": echo, "version": VERSION })),
    }
}

fn write_json<T: Serialize>(path: &Path, payload: &T, echo: &BTreeMap<String, String>) -> CliResult<()> {
    let v = with_echo(payload, echo)?;
    let mut s = serde_json::to_string_pretty(&v).map_err(Error::from)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

/// Outcome of a subcommand: results and failed checks.
struct Outcome {
    results: Value,
    failures: Vec<String>,
}

impl Outcome {
    fn new(results: Value) -> Self {
        Self { results, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(msg());
        }
    }
}

/// Data a grid-based subcommand works on.
struct GridInput {
    field: ScalarField4,
    rho: f64,
    forcing: ForcingSpec,
    k: KSpec,
}

enum Source {
    Profile(RadialProfile),
    Grid(Box<GridInput>),
}

fn resolve_source(r: &mut Resolver, g: GridArgs, f: ForcingArgs, want_grid: bool) -> CliResult<Source> {
    let field_path = r.opt("field", g.field)?;
    let profile_path = r.opt("profile", g.profile)?;
    let n = r.opt("n", g.n)?;
    let half = r.opt("half-width", g.half_width)?;
    let rho_flag = r.opt("rho", g.rho)?;
    let p_flag = parse_forcing(r.opt("p", f.p)?)?;
    let k_flag = parse_k(r.opt("k", f.k)?)?;
    match (field_path, profile_path) {
        (Some(_), Some(_)) => usage("give either --field or --profile, not both"),
        (None, None) => usage("missing input: --field <blob> or --profile <csv>"),
        (Some(path), None) => {
            let field = ScalarField4::load(Path::new(&path))?;
            let Some(rho) = rho_flag else { return usage("--rho is required with --field") };
            Ok(Source::Grid(Box::new(GridInput {
                field,
                rho,
                forcing: p_flag.unwrap_or_else(ForcingSpec::three_halves),
                k: k_flag.unwrap_or_default(),
            })))
        }
        (None, Some(path)) => {
            let profile = load_profile(&path)?;
            if rho_flag.is_some_and(|x| x != profile.rho) {
                return usage("--rho disagrees with the profile sidecar");
            }
            let forcing = p_flag.unwrap_or_else(|| profile.forcing.clone());
            let k = k_flag.unwrap_or(profile.k);
            if !want_grid && n.is_none() {
                return Ok(Source::Profile(RadialProfile { forcing, k, ..profile }));
            }
            let n = match n {
                Some(n) => n,
                None => return usage("--n is required to sample a profile on a grid"),
            };
            let Some(half) = half else { return usage("--half-width is required to sample a profile on a grid") };
            let field = ScalarField4::centered_cube(n, half, |x| {
                profile.radial_derivatives(x.iter().map(|v| v * v).sum::<f64>().sqrt()).0
            })?;
            Ok(Source::Grid(Box::new(GridInput { field, rho: profile.rho, forcing, k })))
        }
    }
}

fn cmd_radial(r: &mut Resolver, a: RadialArgs) -> CliResult<Outcome> {
    let rho = r.req("rho", a.rho)?;
    let epsilon = r.req("epsilon", a.epsilon)?;
    let d = RadialOptions::default();
    let opts = RadialOptions {
        s_min: r.or("s-min", a.s_min, d.s_min)?,
        s_max: r.or("s-max", a.s_max, d.s_max)?,
        step: r.or("step", a.step, d.step)?,
        tolerance: r.or("tolerance", a.tolerance, d.tolerance)?,
    };
    let fi_tol = r.or("first-integral-tol", a.first_integral_tol, 1e-10)?;
    let ode_tol = r.or("ode-tol", a.ode_tol, 1e-6)?;
    let forcing = parse_forcing(r.opt("p", a.forcing.p)?)?.unwrap_or_else(ForcingSpec::three_halves);
    let k = parse_k(r.opt("k", a.forcing.k)?)?.unwrap_or_default();
    let out = r.opt("out", a.out)?;
    r.finish("radial")?;
    let profile = if forcing.is_three_halves() && k.is_unit() {
        solve_radial(rho, epsilon, &opts)?
    } else {
        solve_radial_general(rho, epsilon, &forcing, &k, &opts)?
    };
    let first_integral = first_integral_residual(&profile).ok();
    let ode = ode_residual(&profile);
    let concavity = concavity_check(&profile);
    let cone = cone_violation(&profile);
    let mut o = Outcome::new(json!({
        "points": profile.len(),
        "alpha": profile.alpha,
        "u_max": profile.u_max(),
        "first_integral_residual": first_integral,
        "ode_residual": ode,
        "concavity_max_second_difference": concavity,
        "consistency_residual": profile.consistency_residual,
    }));
    if let Some(fi) = first_integral {
        o.check(fi <= fi_tol, || format!("first-integral residual {fi:e} exceeds {fi_tol:e}"));
    }
    o.check(ode <= ode_tol, || format!("ODE residual {ode:e} exceeds {ode_tol:e}"));
    o.check(concavity <= 1e-8, || format!("u(s) is not concave: second difference {concavity:e}"));
    o.check(cone.is_none(), || format!("cone condition fails at grid index {}", cone.unwrap_or(0)));
    if let Some(out) = out {
        write_file(Path::new(&out), profile.to_csv().as_bytes())?;
        write_json(&sidecar_path(&out), &profile.meta(), &r.echo)?;
    }
    Ok(o)
}

fn scan_checks(o: &mut Outcome, scan: &MassScan, solution: bool, mass_tol: f64, monotone_tol: f64) {
    let defect = scan.monotonicity_defect();
    o.check(defect <= monotone_tol, || format!("M decreases by {defect:e} between neighbouring levels"));
    for v in scan.structural_violations(1e-9) {
        o.failures.push(v);
    }
    if !solution {
        return;
    }
    for i in 0..scan.len() {
        let bound = match &scan.m_error {
            Some(err) => mass_tol.max(3.0 * err[i]),
            None => mass_tol * scan.q[i].powi(4).max(1.0),
        };
        if scan.m[i].abs() > bound {
            o.failures.push(format!("|M| = {:e} exceeds {bound:e} at t={}", scan.m[i].abs(), scan.t_grid[i]));
        }
    }
}

fn cmd_mass_scan(r: &mut Resolver, a: MassScanArgs) -> CliResult<Outcome> {
    let src = resolve_source(r, a.grid, a.forcing, false)?;
    let t_raw = r.opt::<String>("t-grid", a.t_grid)?;
    let scale = r.or("forcing-scale", a.forcing_scale, 1.0)?;
    let out = r.opt("out", a.out)?;
    if !(scale > 0.0) {
        return usage("--forcing-scale must be positive");
    }
    let (scan, mass_tol, monotone_tol) = match src {
        Source::Profile(p) => {
            let mass_tol = r.or("mass-tol", a.mass_tol, 1e-6)?;
            let monotone_tol = r.or("monotone-tol", a.monotone_tol, 1e-8)?;
            r.finish("mass-scan")?;
            let t_grid = match t_raw {
                Some(raw) => parse_t_grid(&raw)?,
                None => level_grid(p.u_max() - 0.05, p.u_max() - 8.05, 50),
            };
            (mass_scan_radial_with(&p, &p.forcing.scaled(scale), &t_grid)?, mass_tol, monotone_tol)
        }
        Source::Grid(g) => {
            let mass_tol = r.or("mass-tol", a.mass_tol, 5e-3)?;
            let monotone_tol = r.or("monotone-tol", a.monotone_tol, 5e-3)?;
            r.finish("mass-scan")?;
            let Some(raw) = t_raw else { return usage("--t-grid is required for grid scans") };
            let t_grid = parse_t_grid(&raw)?;
            let scan = mass_scan_grid(&g.field, g.rho, &g.forcing.scaled(scale), &t_grid, &BinningOptions::default())?;
            (scan, mass_tol, monotone_tol)
        }
    };
    let mut o = Outcome::new(serde_json::to_value(scan.meta()).map_err(Error::from)?);
    scan_checks(&mut o, &scan, scale == 1.0, mass_tol, monotone_tol);
    if let Some(out) = out {
        write_file(Path::new(&out), scan.to_csv().as_bytes())?;
        write_json(&sidecar_path(&out), &scan.meta(), &r.echo)?;
    }
    Ok(o)
}

fn cmd_pohozaev(r: &mut Resolver, a: PohozaevArgs) -> CliResult<Outcome> {
    let src = resolve_source(r, a.grid, a.forcing, false)?;
    let out = r.opt("out", a.out)?;
    let (report, tol): (PohozaevReport, f64) = match src {
        Source::Profile(p) => {
            let radius = r.req("radius", a.radius)?;
            let tol = r.or("rel-tol", a.rel_tol, 1e-6)?;
            r.finish("pohozaev")?;
            (pohozaev_radial(&p, radius, &p.k)?, tol)
        }
        Source::Grid(g) => {
            let t = r.req("t", a.t)?;
            let w = r.opt("kernel-half-width", a.kernel_half_width)?;
            let tol = r.or("rel-tol", a.rel_tol, 5e-2)?;
            r.finish("pohozaev")?;
            let opts = PohozaevGridOptions { kernel_half_width: w, ..Default::default() };
            (pohozaev_grid(&g.field, g.rho, &g.forcing, t, &g.k, &opts)?, tol)
        }
    };
    let mut o = Outcome::new(serde_json::to_value(&report).map_err(Error::from)?);
    let rel = report.rel_residual;
    o.check(rel <= tol, || format!("relative residual {rel:e} exceeds {tol:e}"));
    if let Some(out) = out {
        write_json(Path::new(&out), &report, &r.echo)?;
    }
    Ok(o)
}

#[derive(Serialize)]
struct FieldSummary {
    extent: [usize; 4],
    spacing: [f64; 4],
    origin: [f64; 4],
    min: f64,
    max: f64,
    divergence_residual: f64,
    newton_divergence_residual: f64,
    solution_residual: Option<f64>,
    fraction_in_cone: f64,
}

fn nested_interior(field: &ScalarField4) -> Vec<[usize; 4]> {
    (0..field.len()).map(|l| field.unravel(l)).filter(|&i| field.is_interior(i, NESTED_MARGIN)).collect()
}

fn cmd_field_check(r: &mut Resolver, a: FieldCheckArgs) -> CliResult<Outcome> {
    use rayon::prelude::*;
    let src = resolve_source(r, a.grid, a.forcing, true)?;
    let div_tol = r.or("divergence-tol", a.divergence_tol, 1e-2)?;
    let sol_tol = r.opt("solution-tol", a.solution_tol)?;
    let out = r.opt("out", a.out)?;
    r.finish("field-check")?;
    let Source::Grid(g) = src else { unreachable!("grid requested") };
    let f = &g.field;
    let nodes = nested_interior(f);
    if nodes.is_empty() {
        return usage("grid too small for nested differences");
    }
    let div = nodes.par_iter().map(|&i| f.divergence_residual(i, g.rho).unwrap_or(f64::NAN)).reduce(|| 0.0, f64::max);
    let newton = nodes.par_iter().map(|&i| f.newton_divergence_residual(i).unwrap_or(f64::NAN)).reduce(|| 0.0, f64::max);
    let solution_residual = sol_tol.map(|_| {
        (0..f.len())
            .into_par_iter()
            .filter(|&l| f.is_interior(f.unravel(l), JET_MARGIN))
            .map(|l| {
                let jet = f.jet_unchecked(f.unravel(l), 1);
                let kf = g.k.at(jet.point) * g.forcing.f(jet.value);
                (crate::field::assemble_a(&jet, g.rho).sigma2() - kf).abs() / kf.abs()
            })
            .reduce(|| 0.0, f64::max)
    });
    let (min, max) = f.min_max();
    let summary = FieldSummary {
        extent: f.extent,
        spacing: f.spacing,
        origin: f.origin,
        min,
        max,
        divergence_residual: div,
        newton_divergence_residual: newton,
        solution_residual,
        fraction_in_cone: cone_check(f, g.rho).fraction_in_cone,
    };
    let mut o = Outcome::new(serde_json::to_value(&summary).map_err(Error::from)?);
    o.check(div <= div_tol, || format!("divergence residual {div:e} exceeds {div_tol:e}"));
    o.check(newton <= div_tol, || format!("Newton-tensor divergence {newton:e} exceeds {div_tol:e}"));
    if let (Some(res), Some(tol)) = (solution_residual, sol_tol) {
        o.check(res <= tol, || format!("equation residual {res:e} exceeds {tol:e}"));
    }
    if let Some(out) = out {
        let mut buf = Vec::new();
        f.write_blob(&mut buf)?;
        write_file(Path::new(&out), &buf)?;
        write_json(&sidecar_path(&out), &summary, &r.echo)?;
    }
    Ok(o)
}

fn cmd_blowdown(r: &mut Resolver, a: BlowdownArgs) -> CliResult<Outcome> {
    let src = resolve_source(r, a.grid, a.forcing, false)?;
    let raw = r.req::<String>("t-grid", a.t_grid)?;
    let annulus = r.or("annulus", a.annulus, DEFAULT_ANNULUS)?;
    let alpha = r.opt("alpha", a.alpha)?;
    let monotone_tol = r.or("monotone-tol", a.monotone_tol, 0.0)?;
    let grad_tol = r.opt("grad-tol", a.grad_tol)?;
    let out = r.opt("out", a.out)?;
    r.finish("blowdown")?;
    let t_grid = parse_t_grid(&raw)?;
    let opts = BlowdownOptions { annulus, alpha };
    let rep: BlowdownReport = match &src {
        Source::Profile(p) => blowdown_convergence(p, &t_grid, &opts)?,
        Source::Grid(g) => blowdown_convergence(&g.field, &t_grid, &opts)?,
    };
    let mut o = Outcome::new(serde_json::to_value(&rep).map_err(Error::from)?);
    o.check(rep.errors_non_increasing(monotone_tol), || "blow-down errors are not non-increasing".into());
    o.check(rep.radii_consistent(), || "extremal radii are not ordered or not monotone in t".into());
    o.check(rep.ratio_trend_bounded(), || format!("r_max/r_min grows over the scan (max {})", rep.ratio_max));
    if let Some(tol) = grad_tol {
        let last = *rep.gradient_alignment_error.last().unwrap_or(&f64::NAN);
        o.check(last <= tol, || format!("final gradient alignment error {last:e} exceeds {tol:e}"));
    }
    if let Some(out) = out {
        write_file(Path::new(&out), rep.to_csv().as_bytes())?;
        write_json(&sidecar_path(&out), &rep.summary(), &r.echo)?;
    }
    Ok(o)
}

fn cmd_cone_check(r: &mut Resolver, a: ConeCheckArgs) -> CliResult<Outcome> {
    let src = resolve_source(r, a.grid, a.forcing, true)?;
    let min_fraction = r.or("min-fraction", a.min_fraction, 0.999)?;
    let out = r.opt("out", a.out)?;
    r.finish("cone-check")?;
    let Source::Grid(g) = src else { unreachable!("grid requested") };
    let rep = cone_check(&g.field, g.rho);
    let mut o = Outcome::new(serde_json::to_value(&rep).map_err(Error::from)?);
    let frac = rep.fraction_in_cone;
    o.check(frac >= min_fraction, || format!("only {frac} of interior cells lie in the cone (need {min_fraction})"));
    let bad = rep.inequality_violations();
    o.check(bad == 0, || format!("{bad} cells violate the level-set inequalities"));
    if let Some(out) = out {
        write_json(Path::new(&out), &rep, &r.echo)?;
    }
    Ok(o)
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Radial(_) => "radial",
        Command::MassScan(_) => "mass-scan",
        Command::Pohozaev(_) => "pohozaev",
        Command::FieldCheck(_) => "field-check",
        Command::Blowdown(_) => "blowdown",
        Command::ConeCheck(_) => "cone-check",
    }
}

fn emit(report: &Value, path: Option<&Path>) -> std::result::Result<(), String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    s.push('\n');
    match path {
        Some(p) => std::fs::write(p, s).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{s}");
            Ok(())
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let ini = match &cli.config {
        Some(p) => match ini::Ini::load_from_file(p) {
            Ok(i) => Some(i),
            Err(e) => {
                eprintln!("error: cannot load config {}: {e}", p.display());
                return 2;
            }
        },
        None => None,
    };
    let name = subcommand_name(&cli.command);
    let mut r = Resolver::new(ini.as_ref(), name);
    let result = match cli.command {
        Command::Radial(a) => cmd_radial(&mut r, a),
        Command::MassScan(a) => cmd_mass_scan(&mut r, a),
        Command::Pohozaev(a) => cmd_pohozaev(&mut r, a),
        Command::FieldCheck(a) => cmd_field_check(&mut r, a),
        Command::Blowdown(a) => cmd_blowdown(&mut r, a),
        Command::ConeCheck(a) => cmd_cone_check(&mut r, a),
    };
    let (report, code) = match result {
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            return 2;
        }
        Err(CliError::Lib(e)) => (
            json!({
                "subcommand": name,
                "status": "fail",
                "error": e.to_string(),
                "failures": [e.to_string()],
                "config": r.echo,
                "version": VERSION,
            }),
            1,
        ),
        Ok(o) => {
            let pass = o.failures.is_empty();
            (
                json!({
                    "subcommand": name,
                    "status": if pass { "pass" } else { "fail" },
                    "failures": o.failures,
                    "results": o.results,
                    "config": r.echo,
                    "version": VERSION,
                }),
                if pass { 0 } else { 1 },
            )
        }
    };
    if let Err(msg) = emit(&report, cli.report.as_deref()) {
        eprintln!("error: {msg}");
        return 2;
    }
    if code == 1 {
        eprintln!("{name}: checks failed");
    }
    code
}
