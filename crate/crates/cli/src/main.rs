//! Command-line front end: system files in, JSON/CSV reports out.

use clap::{Args, Parser, Subcommand, ValueEnum};
use mop_trees::angelesco::AngelescoSystem;
use mop_trees::finite_spectral::{eigenvalue_set, full_basis, s_orthogonalize, signature_counts, ZeroSource};
use mop_trees::hp::DEFAULT_PRECISION;
use mop_trees::nikishin::NikishinSystem;
use mop_trees::periodic_surface::{midpoint_grid, ray_limit_estimate, SurfaceParams};
use mop_trees::systems::SystemSpec;
use mop_trees::tree_jacobi::{assemble_finite, assemble_truncated};
use mop_trees::tree_topology::Tree;
use mop_trees::{MopError, MopSystem, MultiIndex};
use num_complex::Complex64;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

const SCHEMA: &str = "mop-trees/1";

#[derive(Parser)]
#[command(name = "mop-trees", version, about = "Multiple orthogonal polynomials and Jacobi matrices on trees")]
struct Cli {
    #[command(subcommand)]
    command: Group,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Clone, Debug)]
struct Opts {
    /// system definition file (JSON)
    #[arg(long, global = true)]
    system: Option<PathBuf>,
    /// tree multi-index, e.g. 2,1
    #[arg(long = "N", global = true, value_parser = parse_index)]
    big_n: Option<MultiIndex>,
    /// single multi-index, e.g. 0,0
    #[arg(long = "n", global = true, value_parser = parse_index)]
    n: Option<MultiIndex>,
    /// root weights κ1,κ2 summing to 1
    #[arg(long, global = true, value_parser = parse_pair, allow_hyphen_values = true)]
    kappa: Option<(f64, f64)>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    nmax: Option<usize>,
    #[arg(long = "precision-bits", global = true)]
    precision_bits: Option<u32>,
    /// number of grid points
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// spectral parameter re,im
    #[arg(long, global = true, value_parser = parse_pair, allow_hyphen_values = true)]
    z: Option<(f64, f64)>,
    /// vertex index of X (breadth-first numbering)
    #[arg(long, global = true)]
    x: Option<usize>,
    /// vertex index of Y (breadth-first numbering)
    #[arg(long, global = true)]
    y: Option<usize>,
    /// surface parameters A1,A2,B1,B2
    #[arg(long, global = true, value_parser = parse_params, allow_hyphen_values = true)]
    params: Option<[f64; 4]>,
    /// sheet / root label l ∈ {1, 2}
    #[arg(long, global = true)]
    l: Option<usize>,
    /// ray slope c ∈ (0, 1)
    #[arg(long, global = true)]
    c: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Group {
    /// polynomial data
    Mop {
        #[command(subcommand)]
        action: MopAction,
    },
    /// finite and truncated tree operators
    Tree {
        #[command(subcommand)]
        action: TreeAction,
    },
    /// Angelesco systems on the infinite tree
    Angelesco {
        #[command(subcommand)]
        action: AngelescoAction,
    },
    /// Nikishin sign patterns and growth
    Nikishin {
        #[command(subcommand)]
        action: NikishinAction,
    },
    /// periodic operators and their surface
    Periodic {
        #[command(subcommand)]
        action: PeriodicAction,
    },
    /// run the module checks on a system
    Verify {
        #[command(subcommand)]
        action: VerifyAction,
    },
}

#[derive(Subcommand)]
enum MopAction {
    /// recurrence coefficients at --n, or for all |n| ≤ --nmax
    Coeffs,
}

#[derive(Subcommand)]
enum TreeAction {
    /// eigenvalues on T_N (--N) or on a truncated Cayley tree (--depth)
    Spectrum,
    /// S-orthogonal eigenbasis on T_N
    Svec,
}

#[derive(Subcommand)]
enum AngelescoAction {
    /// G(Y, X; z) against the truncated resolvent
    Green,
    /// summary of the root spectral measure
    Rho,
    /// density of the root spectral measure on a grid
    DosProfile,
}

#[derive(Subcommand)]
enum NikishinAction {
    Signs,
    Blowup,
}

#[derive(Subcommand)]
enum PeriodicAction {
    /// branch points and cuts
    Surface,
    /// density of states on a grid
    Dos,
    /// recurrence coefficients along a ray and the fitted surface
    Raylimit,
}

#[derive(Subcommand)]
enum VerifyAction {
    All,
}

enum CliError {
    Usage(String),
    Module(&'static str, MopError),
    Failed(String),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn module(group: &'static str) -> impl Fn(MopError) -> CliError {
    move |e| CliError::Module(group, e)
}

fn error_code(e: &MopError) -> &'static str {
    match e {
        MopError::Domain(_) => "domain",
        MopError::Endpoint(_) => "endpoint",
        MopError::Overlap(_) => "overlap",
        MopError::Normality(..) => "normality",
        MopError::Convergence(_) => "convergence",
        MopError::Zero(_) => "zero",
        MopError::ZeroWeight(..) => "zero_weight",
        MopError::Assumption(_) => "assumption",
        MopError::Joint(_) => "joint",
        MopError::Rank { .. } => "rank",
        MopError::NeutralVector(_) => "neutral_vector",
        MopError::Series(_) => "series",
        MopError::Branch(_) => "branch",
        MopError::InvalidSurface(_) => "invalid_surface",
        MopError::InvalidInput(_) => "invalid_input",
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v: Vec<&str> = s.split(',').collect();
    if v.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got {s:?}"));
    }
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(v[0])?, p(v[1])?))
}

fn parse_index(s: &str) -> Result<MultiIndex, String> {
    let v: Vec<&str> = s.split(',').collect();
    if v.len() != 2 {
        return Err(format!("expected n1,n2, got {s:?}"));
    }
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok(MultiIndex::new(p(v[0])?, p(v[1])?))
}

fn parse_params(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected A1,A2,B1,B2, got {s:?}"))
}

impl Opts {
    fn need<T: Clone>(v: &Option<T>, flag: &str) -> CliResult<T> {
        v.clone().ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
    }

    fn prec(&self) -> u32 {
        self.precision_bits.unwrap_or(DEFAULT_PRECISION)
    }

    fn spec(&self) -> CliResult<SystemSpec> {
        let path = Self::need(&self.system, "system")?;
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        SystemSpec::from_json(&text).map_err(module("system"))
    }

    fn mop_system(&self, group: &'static str) -> CliResult<MopSystem> {
        self.spec()?.build(self.prec()).map_err(module(group))
    }

    fn angelesco(&self) -> CliResult<AngelescoSystem> {
        let sys = self.mop_system("angelesco")?;
        AngelescoSystem::new(sys).map_err(module("angelesco"))
    }

    fn nikishin(&self) -> CliResult<NikishinSystem> {
        match self.spec()? {
            SystemSpec::Nikishin { mu1, tau } => {
                NikishinSystem::with_precision(mu1, tau, self.prec()).map_err(module("nikishin"))
            }
            _ => Err(CliError::Module("nikishin", MopError::InvalidInput("system file is not of type nikishin".into()))),
        }
    }

    fn kappa(&self) -> CliResult<(f64, f64)> {
        Self::need(&self.kappa, "kappa")
    }

    fn grid(&self) -> CliResult<usize> {
        match self.grid {
            Some(0) => Err(CliError::Usage("--grid must be at least 1".into())),
            Some(g) => Ok(g),
            None => Err(CliError::Usage("missing required flag --grid".into())),
        }
    }

    fn surface(&self) -> CliResult<SurfaceParams> {
        let [a1, a2, b1, b2] = Self::need(&self.params, "params")?;
        SurfaceParams::from_params(a1, a2, b1, b2).map_err(module("periodic"))
    }
}

struct Output<'a> {
    opts: &'a Opts,
    command: &'static str,
}

impl Output<'_> {
    fn write(&self, text: &str) -> CliResult<()> {
        match &self.opts.out {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn json(&self, mut v: Value) -> CliResult<()> {
        if let Value::Object(m) = &mut v {
            m.insert("schema".into(), json!(SCHEMA));
            m.insert("command".into(), json!(self.command));
        }
        let mut s = serde_json::to_string_pretty(&sort_keys(v)).expect("serializable");
        s.push('\n');
        self.write(&s)
    }

    fn csv(&self, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            let line: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        self.write(&s)
    }

    /// Table output honoring --format; `extra` is merged into the JSON form.
    fn table(&self, header: &[&str], rows: &[Vec<f64>], extra: Value) -> CliResult<()> {
        match self.opts.format {
            Format::Csv => self.csv(header, rows),
            Format::Json => {
                let mut v = extra;
                let recs: Vec<Value> = rows
                    .iter()
                    .map(|r| Value::Object(header.iter().zip(r).map(|(h, x)| (h.to_string(), json!(x))).collect()))
                    .collect();
                v["rows"] = Value::Array(recs);
                self.json(v)
            }
        }
    }
}

fn sort_keys(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(String, Value)> = m.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort_keys(v))).collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

fn idx(n: MultiIndex) -> Value {
    json!([n.n1, n.n2])
}

fn mop_coeffs(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "mop coeffs" };
    let sys = o.mop_system("mop")?;
    let m = module("mop");
    if let Some(n) = o.n {
        let (a, b) = sys.recurrence_f64(n).map_err(&m)?;
        return match o.format {
            Format::Json => out.json(json!({"n": idx(n), "a": a, "b": b})),
            Format::Csv => out.csv(&["n1", "n2", "a1", "a2", "b1", "b2"], &[vec![n.n1 as f64, n.n2 as f64, a[0], a[1], b[0], b[1]]]),
        };
    }
    let nmax = o.nmax.ok_or_else(|| CliError::Usage("mop coeffs needs --n or --nmax".into()))?;
    let mut rows = vec![];
    for t in 0..=nmax {
        for n1 in 0..=t {
            let n = MultiIndex::new(n1, t - n1);
            let (a, b) = sys.recurrence_f64(n).map_err(&m)?;
            rows.push(vec![n.n1 as f64, n.n2 as f64, a[0], a[1], b[0], b[1]]);
        }
    }
    out.table(&["n1", "n2", "a1", "a2", "b1", "b2"], &rows, json!({"nmax": nmax}))
}

fn source_label(s: &ZeroSource) -> String {
    match s {
        ZeroSource::ParentOfRoot => "parent_of_root".into(),
        ZeroSource::Index(n) => format!("P{n}"),
    }
}

fn tree_spectrum(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "tree spectrum" };
    let sys = o.mop_system("tree")?;
    let kappa = o.kappa()?;
    let m = module("tree");
    match (o.big_n, o.depth) {
        (Some(n), None) => {
            let evs = eigenvalue_set(&sys, kappa, n).map_err(&m)?;
            let op = assemble_finite(&sys, kappa, n).map_err(&m)?;
            let dense = op.eigenvalues().map_err(&m)?;
            let mismatch = evs
                .iter()
                .zip(&dense)
                .map(|(e, d)| ((e.e - d.re).powi(2) + d.im.powi(2)).sqrt())
                .fold(0.0, f64::max);
            let rows: Vec<Vec<f64>> = evs.iter().enumerate().map(|(i, e)| vec![i as f64, e.e]).collect();
            let sources: Vec<Vec<String>> = evs.iter().map(|e| e.sources.iter().map(source_label).collect()).collect();
            match o.format {
                Format::Csv => out.csv(&["index", "eigenvalue"], &rows),
                Format::Json => out.json(json!({
                    "tree": "finite",
                    "N": idx(n),
                    "kappa": [kappa.0, kappa.1],
                    "vertices": op.len(),
                    "count": evs.len(),
                    "eigenvalues": evs.iter().map(|e| e.e).collect::<Vec<_>>(),
                    "sources": sources,
                    "dense_mismatch": mismatch,
                })),
            }
        }
        (None, Some(depth)) => {
            let op = assemble_truncated(&sys, kappa, depth).map_err(&m)?;
            let ev = op.eigenvalues().map_err(&m)?;
            let rows: Vec<Vec<f64>> = ev.iter().enumerate().map(|(i, e)| vec![i as f64, e.re, e.im]).collect();
            match o.format {
                Format::Csv => out.csv(&["index", "re", "im"], &rows),
                Format::Json => out.json(json!({
                    "tree": "cayley",
                    "depth": depth,
                    "kappa": [kappa.0, kappa.1],
                    "vertices": op.len(),
                    "count": ev.len(),
                    "eigenvalues": ev.iter().map(|e| [e.re, e.im]).collect::<Vec<_>>(),
                })),
            }
        }
        _ => Err(CliError::Usage("tree spectrum needs exactly one of --N or --depth".into())),
    }
}

fn tree_svec(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "tree svec" };
    let sys = o.mop_system("tree")?;
    let kappa = o.kappa()?;
    let n = Opts::need(&o.big_n, "N")?;
    let m = module("tree");
    let d = full_basis(&sys, kappa, n).map_err(&m)?;
    let b = s_orthogonalize(&d).map_err(&m)?;
    let (p, q) = signature_counts(&d.op);
    match o.format {
        Format::Csv => {
            let rows: Vec<Vec<f64>> = b
                .vectors
                .iter()
                .zip(&b.signs)
                .enumerate()
                .flat_map(|(i, ((e, v), s))| v.iter().enumerate().map(move |(y, x)| vec![i as f64, *e, *s as f64, y as f64, *x]))
                .collect();
            out.csv(&["vector", "eigenvalue", "sign", "vertex", "value"], &rows)
        }
        Format::Json => out.json(json!({
            "N": idx(n),
            "kappa": [kappa.0, kappa.1],
            "vertices": d.op.len(),
            "inertia": [b.i_plus, b.i_minus],
            "signature_counts": [p, q],
            "off_diagonal": b.off_diagonal,
            "residual": d.residual,
            "vectors": b.vectors.iter().zip(&b.signs).map(|((e, v), s)| json!({"eigenvalue": e, "sign": s, "values": v})).collect::<Vec<_>>(),
        })),
    }
}

fn angelesco_green(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "angelesco green" };
    let a = o.angelesco()?;
    let kappa = o.kappa()?;
    let (re, im) = o.z.unwrap_or((5.0, 0.0));
    let x = o.x.unwrap_or(0);
    let y = o.y.unwrap_or(x);
    let depth = o.depth.unwrap_or(12);
    let (g, r) = a.green(kappa, y, x, Complex64::new(re, im), depth).map_err(module("angelesco"))?;
    out.json(json!({
        "kappa": [kappa.0, kappa.1],
        "z": [re, im],
        "x": x,
        "y": y,
        "depth": depth,
        "formula": [g.re, g.im],
        "resolvent": [r.re, r.im],
        "relative_error": (g - r).norm() / g.norm(),
    }))
}

fn angelesco_rho(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "angelesco rho" };
    let a = o.angelesco()?;
    let kappa = o.kappa()?;
    let m = module("angelesco");
    let rho = a.rho_o(kappa).map_err(&m)?;
    let mass = a.total_mass(&rho).map_err(&m)?;
    let mean = a.moment(&rho, 1).map_err(&m)?;
    let op = assemble_truncated(&a.sys, kappa, 0).map_err(&m)?;
    out.json(json!({
        "kappa": [kappa.0, kappa.1],
        "support": rho.support,
        "point_masses": rho.point_masses,
        "total_mass": mass,
        "first_moment": mean,
        "root_potential": op.v[0],
    }))
}

fn angelesco_dos_profile(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "angelesco dos-profile" };
    let a = o.angelesco()?;
    let kappa = o.kappa()?;
    let grid = o.grid()?;
    let m = module("angelesco");
    let rho = a.rho_o(kappa).map_err(&m)?;
    let rows: Vec<Vec<f64>> = midpoint_grid(a.delta, grid)
        .into_iter()
        .map(|x| Ok(vec![x, a.density(&rho, x).or_else(|e| if matches!(e, MopError::Endpoint(_)) { Ok(0.0) } else { Err(e) })?]))
        .collect::<Result<_, MopError>>()
        .map_err(&m)?;
    let masses = json!({"kappa": [kappa.0, kappa.1], "point_masses": rho.point_masses});
    if o.format == Format::Csv && !rho.point_masses.is_empty() {
        if let Some(p) = &o.out {
            let mut side = p.clone().into_os_string();
            side.push(".masses.json");
            let side_out = Opts { out: Some(PathBuf::from(side)), ..o.clone() };
            Output { opts: &side_out, command: "angelesco dos-profile" }.json(masses.clone())?;
        }
    }
    out.table(&["x", "density"], &rows, masses)
}

fn nikishin_signs(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "nikishin signs" };
    let s = o.nikishin()?;
    let nmax = o.nmax.unwrap_or(8);
    let m = module("nikishin");
    let a = s.sign_pattern_check(nmax).map_err(&m)?;
    let h = s.h_sign_check(nmax).map_err(&m)?;
    let pass = a.ok() && h.ok();
    out.json(json!({"nmax": nmax, "a_signs": a, "h_signs": h, "pass": pass}))?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} a-sign and {} h-sign violations", a.violations.len(), h.violations.len())))
    }
}

fn nikishin_blowup(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "nikishin blowup" };
    let s = o.nikishin()?;
    let nmax = o.nmax.unwrap_or(6);
    let m = module("nikishin");
    let rows = s.diagonal_blowup_scan(nmax).map_err(&m)?;
    let bounds = s.bound_table(2 * nmax + 1).map_err(&m)?;
    let ratios: Vec<[f64; 2]> = rows.windows(2).map(|w| [w[1].a1 / w[0].a1, w[1].a2 / w[0].a2]).collect();
    let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.n as f64, r.a1, r.a2]).collect();
    out.table(&["n", "a1", "a2"], &table, json!({"nmax": nmax, "growth_ratios": ratios, "off_diagonal_bounds": bounds}))
}

fn periodic_surface(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "periodic surface" };
    let s = o.surface()?;
    out.json(json!({
        "params": {"A1": s.a[0], "A2": s.a[1], "B1": s.b[0], "B2": s.b[1]},
        "critical_points": s.critical_points,
        "branch_points": [s.cuts[0].0, s.cuts[0].1, s.cuts[1].0, s.cuts[1].1],
        "cuts": s.cuts,
    }))
}

fn periodic_dos(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "periodic dos" };
    let s = o.surface()?;
    let l = o.l.unwrap_or(1);
    let grid = o.grid()?;
    let rows: Vec<Vec<f64>> = s.dos_profile(l, grid).map_err(module("periodic"))?.into_iter().map(|(x, d)| vec![x, d]).collect();
    out.table(&["x", "dos"], &rows, json!({"l": l, "cuts": s.cuts}))
}

fn periodic_raylimit(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "periodic raylimit" };
    let a = o.angelesco()?;
    let c = o.c.unwrap_or(0.5);
    let nmax = o.nmax.unwrap_or(15);
    let r = ray_limit_estimate(&a.sys, c, nmax).map_err(module("periodic"))?;
    let [a1, a2, b1, b2] = r.estimate;
    let fitted = match SurfaceParams::from_params(a1, a2, b1, b2) {
        Ok(s) => json!({"cuts": s.cuts, "critical_points": s.critical_points}),
        Err(e) => json!({"error": e.to_string()}),
    };
    out.json(json!({"report": r, "fitted_surface": fitted, "supports": a.delta}))
}

fn check(name: &str, pass: bool, detail: String) -> Value {
    json!({"name": name, "pass": pass, "detail": detail})
}

fn verify_all(o: &Opts) -> CliResult<()> {
    let out = Output { opts: o, command: "verify all" };
    let spec = o.spec()?;
    let nmax = o.nmax.unwrap_or(6);
    let m = module("verify");
    let sys = spec.build(o.prec()).map_err(&m)?;
    let mut checks = vec![];
    let mut worst = 0.0f64;
    for t in 2..=nmax.max(2) {
        for n1 in 1..t {
            let r = sys.consistency_residual(MultiIndex::new(n1, t - n1)).map_err(&m)?;
            worst = worst.max(r.iter().cloned().fold(0.0, f64::max));
        }
    }
    let tol = 2f64.powi(-(o.prec() as i32) + 170);
    checks.push(check("consistency", worst <= tol, format!("max residual {worst:e}")));
    let n = MultiIndex::new(2, 1);
    let d = full_basis(&sys, (0.0, 1.0), n).map_err(&m)?;
    let count: usize = d.spaces.iter().map(|s| s.g).sum();
    checks.push(check(
        "finite_spectrum",
        count == Tree::finite(n).len() && d.dense_mismatch <= 1e-10 && d.residual <= 1e-9,
        format!("N=(2,1): Σg = {count}, dense mismatch {:e}, residual {:e}", d.dense_mismatch, d.residual),
    ));
    match &spec {
        SystemSpec::Nikishin { mu1, tau } => {
            let s = NikishinSystem::with_precision(mu1.clone(), tau.clone(), o.prec()).map_err(&m)?;
            let a = s.sign_pattern_check(nmax).map_err(&m)?;
            let h = s.h_sign_check(nmax).map_err(&m)?;
            checks.push(check("sign_pattern", a.ok(), format!("{} checked, {} violations", a.checked, a.violations.len())));
            checks.push(check("h_signs", h.ok(), format!("{} checked, {} violations", h.checked, h.violations.len())));
            let op = assemble_finite(&s.sys, (1.0, 0.0), MultiIndex::new(2, 2)).map_err(&m)?;
            let r = op.s_selfadjoint_check();
            checks.push(check("s_selfadjoint", r <= 1e-14, format!("residual {r:e}")));
        }
        _ => {
            let mut bad = 0;
            let mut total = 0;
            for t in 0..nmax {
                for n1 in 0..=t {
                    let n = MultiIndex::new(n1, t - n1);
                    for i in 1..=2 {
                        total += 1;
                        bad += usize::from(!sys.interlacing_check(n, i).map_err(&m)?);
                    }
                }
            }
            checks.push(check("interlacing", bad == 0, format!("{total} checked, {bad} failures")));
            if matches!(spec, SystemSpec::Angelesco { .. }) {
                let a = AngelescoSystem::new(sys).map_err(&m)?;
                let rho = a.rho_o((1.0, 0.0)).map_err(&m)?;
                let mass = a.total_mass(&rho).map_err(&m)?;
                checks.push(check("rho_mass", (mass - 1.0).abs() <= 1e-8, format!("total mass {mass}")));
            }
        }
    }
    let pass = checks.iter().all(|c| c["pass"] == json!(true));
    out.json(json!({"nmax": nmax, "checks": checks, "pass": pass}))?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed("one or more checks failed".into()))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let o = &cli.opts;
    match cli.command {
        Group::Mop { action: MopAction::Coeffs } => mop_coeffs(o),
        Group::Tree { action: TreeAction::Spectrum } => tree_spectrum(o),
        Group::Tree { action: TreeAction::Svec } => tree_svec(o),
        Group::Angelesco { action: AngelescoAction::Green } => angelesco_green(o),
        Group::Angelesco { action: AngelescoAction::Rho } => angelesco_rho(o),
        Group::Angelesco { action: AngelescoAction::DosProfile } => angelesco_dos_profile(o),
        Group::Nikishin { action: NikishinAction::Signs } => nikishin_signs(o),
        Group::Nikishin { action: NikishinAction::Blowup } => nikishin_blowup(o),
        Group::Periodic { action: PeriodicAction::Surface } => periodic_surface(o),
        Group::Periodic { action: PeriodicAction::Dos } => periodic_dos(o),
        Group::Periodic { action: PeriodicAction::Raylimit } => periodic_raylimit(o),
        Group::Verify { action: VerifyAction::All } => verify_all(o),
    }
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("MOP_TREES_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Usage(format!("MOP_TREES_THREADS={v:?} is not a positive integer")))?;
        if n == 0 {
            return Err(CliError::Usage("MOP_TREES_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Module(group, e)) => {
            eprintln!("error[{group}/{}]: {e}", error_code(&e));
            ExitCode::from(2)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("2,-1").unwrap(), (2.0, -1.0));
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("a,1").is_err());
        assert_eq!(parse_index("2, 1").unwrap(), MultiIndex::new(2, 1));
        assert!(parse_index("-1,2").is_err());
        assert_eq!(parse_params("1,2,3,4").unwrap(), [1.0, 2.0, 3.0, 4.0]);
        assert!(parse_params("1,2,3").is_err());
    }

    #[test]
    fn keys_are_sorted_recursively() {
        let v = sort_keys(json!({"b": 1, "a": {"d": 2, "c": 3}}));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"a":{"c":3,"d":2},"b":1}"#);
    }
}
