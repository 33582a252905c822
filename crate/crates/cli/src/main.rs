//! `dpw`: drivers for the loop-group surface pipeline.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use dpw_core::factorization::{birkhoff_with, cell_classify_with, iwasawa_with, FactorOptions};
use dpw_core::frame::{dpw_construct, FrameField, Grid, IntegrationOptions, PointStatus};
use dpw_core::homogeneous::{
    cylinder_potential, ejiri_potential, homogeneous_blocks, homogeneous_immersion, pipeline_torus_energy,
    torus_energy, vacuum_classify, validate_homogeneous,
};
use dpw_core::linalg::b1_of;
use dpw_core::loops::LoopJson;
use dpw_core::potentials::{parse_expr, parse_potential, serialize_potential, validate_normalized};
use dpw_core::reference::{cylinder_immersion, ejiri_immersion, example_s6};
use dpw_core::surface::{Mesh, Projection, SurfaceGrid};
use dpw_core::wu::{sample_mc_data, wu_from_samples, DiscNodes, McData, DEFAULT_MODES, DEFAULT_TERMS};
use dpw_core::{Error, Potential, PotentialKind, TwistedLoop, C64};

#[derive(Parser)]
#[command(name = "dpw", version, about = "Willmore surfaces from holomorphic potentials")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a potential over a grid and write the surface.
    Construct {
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, default_value = "re:-1:1:21,im:-1:1:21")]
        grid: String,
        /// Spectral parameter on the unit circle: a constant such as `i`, or `exp:<angle>`.
        #[arg(long, default_value = "1")]
        lambda: String,
        /// Loop truncation degree of the holomorphic frame.
        #[arg(long, default_value_t = 8)]
        deg: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Surface output: .csv, .obj or .ply.
        #[arg(long)]
        out: PathBuf,
        /// Diagnostics JSON (default: stdout).
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Geometry checks on a surface CSV.
    Analyze {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "conformal,willmore,isotropy")]
        checks: Vec<Check>,
    },
    /// Normalized potential from Maurer-Cartan data.
    Wu {
        /// Sampled MC data (JSON, as written by --emit-mc).
        #[arg(long, conflicts_with = "potential")]
        mc: Option<PathBuf>,
        /// Sample the MC data from the DPW frame of this potential instead.
        #[arg(long)]
        potential: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        #[arg(long, default_value_t = 20)]
        radial: usize,
        #[arg(long, default_value_t = 48)]
        angular: usize,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long, default_value_t = 8)]
        deg: usize,
        #[arg(long)]
        emit_mc: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MODES)]
        modes: usize,
        #[arg(long, default_value_t = DEFAULT_TERMS)]
        terms: usize,
        /// Degree of the output polynomial entries.
        #[arg(long, default_value_t = DEFAULT_MODES)]
        degree: usize,
        /// Potential text output (default: stdout, report on stderr).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Factorize a loop given as JSON.
    Factorize {
        #[arg(long = "loop")]
        loop_file: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Iwasawa)]
        kind: Split,
        #[arg(long)]
        deg: Option<usize>,
    },
    /// Constant potentials: validation, vacuum class, energies, surfaces.
    Homogeneous {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        /// Ejiri torus energy for coprime j,l.
        #[arg(long)]
        energy: Option<String>,
        /// Also measure the energy from the sampled surface on a count x count grid.
        #[arg(long)]
        measure: Option<usize>,
        /// Print the energy as a plain table row instead of JSON.
        #[arg(long)]
        table: bool,
        #[arg(long)]
        emit_potential: Option<PathBuf>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form reference surfaces.
    Reference {
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long, default_value = "re:-1:1:21,im:-1:1:21")]
        grid: String,
        #[arg(long, default_value = "1")]
        lambda: String,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Check {
    Conformal,
    Willmore,
    Isotropy,
    Codazzi,
    Energy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Birkhoff,
    Iwasawa,
    Classify,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Cylinder,
    Ejiri,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Which {
    S6,
    Cylinder,
    Ejiri,
}

/// Exit codes: 1 numerical failure, 2 usage or IO, 3 validation.
struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "usage".into(),
            message: msg.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            kind: "io".into(),
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::NullConditionViolated { .. }
            | Error::SizeMismatch { .. }
            | Error::Domain(_) => 3,
            _ => 1,
        };
        Failure {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

type Out = std::result::Result<(), Failure>;

fn read(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn emit(path: Option<&Path>, v: &Value) -> Out {
    let text = serde_json::to_string_pretty(v).expect("json values serialize");
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}").map_err(|e| Failure::io(p, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_potential(path: &Path) -> std::result::Result<Potential, Failure> {
    Ok(parse_potential(&read(path)?)?)
}

fn parse_grid(s: &str) -> std::result::Result<Grid, Failure> {
    s.parse::<Grid>().map_err(|e| Failure::usage(format!("--grid: {e}")))
}

fn parse_lambda(s: &str) -> std::result::Result<C64, Failure> {
    let l = if let Some(angle) = s.strip_prefix("exp:") {
        let t: f64 = angle
            .parse()
            .map_err(|_| Failure::usage(format!("--lambda: bad angle '{angle}'")))?;
        C64::from_polar(1.0, t)
    } else {
        parse_expr(s)
            .ok()
            .and_then(|e| e.as_constant())
            .ok_or_else(|| Failure::usage(format!("--lambda: '{s}' is not a constant")))?
    };
    if (l.norm() - 1.0).abs() > 1e-12 {
        return Err(Failure::usage("--lambda must lie on the unit circle"));
    }
    Ok(l)
}

fn write_surface(s: &SurfaceGrid, path: &Path) -> Out {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut w = create(path)?;
    match ext.as_str() {
        "csv" => s.write_csv(&mut w)?,
        "obj" | "ply" => {
            let mesh = Mesh::from_surface(s, &Projection::Stereographic);
            let r = if ext == "obj" { mesh.write_obj(&mut w) } else { mesh.write_ply(&mut w) };
            r.map_err(|e| Failure::io(path, e))?;
        }
        _ => return Err(Failure::usage("--out must end in .csv, .obj or .ply")),
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

fn status_counts(field: &FrameField) -> Value {
    json!({
        "ok": field.count(PointStatus::Ok),
        "pole_skipped": field.count(PointStatus::PoleSkipped),
        "cell_boundary": field.count(PointStatus::CellBoundary),
        "not_computed": field.count(PointStatus::NotComputed),
    })
}

fn complex(z: C64) -> Value {
    json!([z.re, z.im])
}

fn construct(
    potential: &Path,
    grid: &str,
    lambda: &str,
    deg: usize,
    tol: f64,
    out: &Path,
    diagnostics: Option<&Path>,
) -> Out {
    let start = Instant::now();
    let p = load_potential(potential)?;
    if p.kind() == PotentialKind::Normalized {
        let v = validate_normalized(&p);
        if !v.passed {
            return Err(Failure {
                code: 3,
                kind: "validation".into(),
                message: format!(
                    "not a normalized potential: null {:.3e}, nilpotency {:.3e}, parity {:.3e}, algebra {:.3e}",
                    v.null_residual, v.nilpotency_residual, v.parity_residual, v.algebra_residual
                ),
            });
        }
    }
    let grid = parse_grid(grid)?;
    let lambda = parse_lambda(lambda)?;
    let opts = IntegrationOptions {
        tol,
        degree: deg,
        ..Default::default()
    };
    let field = dpw_construct(&p, &grid, &opts);
    let mut surface = SurfaceGrid::from_frames(&field, lambda);
    if surface.ok_count() == 0 {
        return Err(Failure {
            code: 1,
            kind: "cell_boundary".into(),
            message: "no grid point could be factorized".into(),
        });
    }
    surface.fill_scalars();
    let energy = surface.interior_energy(4).ok().map(|(g, e)| json!({ "region": g, "report": e }));
    let diag = surface.diagnostics();
    write_surface(&surface, out)?;
    emit(
        diagnostics,
        &json!({
            "potential": potential.display().to_string(),
            "grid": grid,
            "lambda": complex(lambda),
            "degree": deg,
            "points": status_counts(&field),
            "surface_points": surface.ok_count(),
            "energy": energy,
            "residuals": diag,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    )
}

fn analyze(surface: &Path, checks: &[Check]) -> Out {
    let f = File::open(surface).map_err(|e| Failure::io(surface, e))?;
    let mut s = SurfaceGrid::read_csv(BufReader::new(f))?;
    let d = s.diagnostics();
    let mut report = serde_json::Map::new();
    report.insert("surface".into(), json!(surface.display().to_string()));
    report.insert("points".into(), json!(s.ok_count()));
    report.insert("interior_points".into(), json!(d.interior_points));
    for c in checks {
        let (k, v) = match c {
            Check::Conformal => ("conformality", json!(d.conformality)),
            Check::Willmore => ("willmore", json!(d.willmore)),
            Check::Isotropy => ("isotropy", json!(d.isotropy)),
            Check::Codazzi => ("codazzi", json!(d.codazzi)),
            Check::Energy => {
                if s.energy_density.iter().all(|e| e.is_none()) {
                    s.fill_scalars();
                }
                let e = s.interior_energy(4).ok().map(|(g, e)| json!({ "region": g, "report": e }));
                ("energy", json!(e))
            }
        };
        report.insert(k.into(), v);
    }
    emit(None, &Value::Object(report))
}

#[allow(clippy::too_many_arguments)]
fn wu(
    mc: Option<&Path>,
    potential: Option<&Path>,
    nodes: (f64, usize, usize),
    h: f64,
    deg: usize,
    emit_mc: Option<&Path>,
    fit: (usize, usize, usize),
    out: Option<&Path>,
) -> Out {
    let data = match (mc, potential) {
        (Some(path), _) => McData::from_json(&read(path)?)?,
        (None, Some(path)) => {
            let p = load_potential(path)?;
            let nodes = DiscNodes::new(p.basepoint(), nodes.0, nodes.1, nodes.2)?;
            let opts = IntegrationOptions {
                degree: deg,
                ..Default::default()
            };
            sample_mc_data(&p, nodes, h, &opts)?
        }
        (None, None) => return Err(Failure::usage("wu needs --mc or --potential")),
    };
    if let Some(path) = emit_mc {
        let mut w = create(path)?;
        w.write_all(data.to_json()?.as_bytes()).map_err(|e| Failure::io(path, e))?;
    }
    let (p, residual) = wu_from_samples(&data, fit.0, fit.1, fit.2)?;
    let v = validate_normalized(&p);
    let report = json!({
        "fit_residual": residual,
        "null_residual": v.null_residual,
        "nilpotency_residual": v.nilpotency_residual,
        "nodes": data.nodes.len(),
    });
    let text = serialize_potential(&p);
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes()).map_err(|e| Failure::io(path, e))?;
            emit(None, &report)
        }
        None => {
            print!("{text}");
            eprintln!("{report}");
            Ok(())
        }
    }
}

fn factorize(path: &Path, kind: Split, deg: Option<usize>) -> Out {
    let doc: LoopJson = serde_json::from_str(&read(path)?).map_err(|e| Failure {
        code: 3,
        kind: "parse".into(),
        message: e.to_string(),
    })?;
    let g = TwistedLoop::from_json(&doc)?;
    let opts = FactorOptions {
        degree: deg,
        ..Default::default()
    };
    let v = match kind {
        Split::Birkhoff => serde_json::to_value(birkhoff_with(&g, &opts)?.2),
        Split::Iwasawa => serde_json::to_value(iwasawa_with(&g, &opts)?.report),
        Split::Classify => Ok(json!({ "cell": cell_classify_with(&g, &opts) })),
    }
    .expect("reports serialize");
    emit(None, &v)
}

#[allow(clippy::too_many_arguments)]
fn homogeneous(
    family: Family,
    a: Option<f64>,
    b: Option<f64>,
    energy: Option<&str>,
    measure: Option<usize>,
    table: bool,
    emit_potential: Option<&Path>,
    grid: Option<&str>,
    out: Option<&Path>,
) -> Out {
    let p = match family {
        Family::Cylinder => {
            let a = a.ok_or_else(|| Failure::usage("cylinder needs --a"))?;
            let b = b.unwrap_or_else(|| (1.0 - a * a).max(0.0).sqrt());
            cylinder_potential(a, b)?
        }
        Family::Ejiri => ejiri_potential(b.ok_or_else(|| Failure::usage("ejiri needs --b"))?)?,
    };
    if let Some(path) = emit_potential {
        let mut w = create(path)?;
        w.write_all(serialize_potential(&p).as_bytes()).map_err(|e| Failure::io(path, e))?;
    }
    if let (Some(g), Some(path)) = (grid, out) {
        let g = parse_grid(g)?;
        let s = SurfaceGrid::from_fn(&g, |u, v| homogeneous_immersion(&p, C64::new(u, v)))?;
        write_surface(&s, path)?;
    } else if grid.is_some() != out.is_some() {
        return Err(Failure::usage("--grid and --out go together"));
    }
    let (eta_m1, eta_0) = homogeneous_blocks(&p)?;
    let rep = validate_homogeneous(&eta_m1, &eta_0)?;
    let mut v = json!({
        "family": format!("{family:?}").to_lowercase(),
        "validation": rep,
        "vacuum": vacuum_classify(&b1_of(&eta_m1)),
    });
    if let Some(e) = energy {
        if !matches!(family, Family::Ejiri) {
            return Err(Failure::usage("--energy applies to the ejiri family"));
        }
        let (j, l) = e
            .split_once(',')
            .and_then(|(j, l)| Some((j.trim().parse::<u32>().ok()?, l.trim().parse::<u32>().ok()?)))
            .ok_or_else(|| Failure::usage("--energy expects j,l"))?;
        let te = torus_energy(j, l)?;
        let measured = match measure {
            Some(count) => Some(pipeline_torus_energy(j, l, count)?),
            None => None,
        };
        if table {
            let m = measured.as_ref().map_or("-".to_string(), |m| format!("{:.12}", m.value));
            println!("j\tl\tb\tW_quadrature\tW_formula\tW_measured");
            println!("{j}\t{l}\t{}\t{:.12}\t{:.12}\t{m}", te.b, te.quadrature, te.closed_form);
            return Ok(());
        }
        v["energy"] = json!({ "torus": te, "measured": measured });
    }
    emit(None, &v)
}

fn reference(which: Which, grid: &str, lambda: &str, a: Option<f64>, b: Option<f64>, out: &Path) -> Out {
    let g = parse_grid(grid)?;
    let s = match which {
        Which::S6 => {
            let l = parse_lambda(lambda)?;
            SurfaceGrid::from_fn(&g, |u, v| Ok(example_s6(C64::new(u, v), l)))?
        }
        Which::Cylinder => {
            let a = a.ok_or_else(|| Failure::usage("cylinder needs --a"))?;
            let b = b.unwrap_or_else(|| (1.0 - a * a).max(0.0).sqrt());
            SurfaceGrid::from_fn(&g, |u, v| cylinder_immersion(u, v, a, b))?
        }
        Which::Ejiri => {
            let b = b.ok_or_else(|| Failure::usage("ejiri needs --b"))?;
            SurfaceGrid::from_fn(&g, |u, v| ejiri_immersion(u, v, b))?
        }
    };
    write_surface(&s, out)?;
    emit(None, &json!({ "points": s.ok_count(), "out": out.display().to_string() }))
}

fn run(cli: Cli) -> Out {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| Failure::usage(format!("--threads: {e}")))?;
    }
    match cli.cmd {
        Cmd::Construct {
            potential,
            grid,
            lambda,
            deg,
            tol,
            out,
            diagnostics,
        } => construct(&potential, &grid, &lambda, deg, tol, &out, diagnostics.as_deref()),
        Cmd::Analyze { surface, checks } => analyze(&surface, &checks),
        Cmd::Wu {
            mc,
            potential,
            radius,
            radial,
            angular,
            h,
            deg,
            emit_mc,
            modes,
            terms,
            degree,
            out,
        } => wu(
            mc.as_deref(),
            potential.as_deref(),
            (radius, radial, angular),
            h,
            deg,
            emit_mc.as_deref(),
            (modes, terms, degree),
            out.as_deref(),
        ),
        Cmd::Factorize { loop_file, kind, deg } => factorize(&loop_file, kind, deg),
        Cmd::Homogeneous {
            family,
            a,
            b,
            energy,
            measure,
            table,
            emit_potential,
            grid,
            out,
        } => homogeneous(
            family,
            a,
            b,
            energy.as_deref(),
            measure,
            table,
            emit_potential.as_deref(),
            grid.as_deref(),
            out.as_deref(),
        ),
        Cmd::Reference {
            which,
            grid,
            lambda,
            a,
            b,
            out,
        } => reference(which, &grid, &lambda, a, b, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                // --help and --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let f = Failure::usage(e.to_string().trim().to_string());
            eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message, "exit_code": f.code } }));
            return ExitCode::from(f.code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message, "exit_code": f.code } }));
            ExitCode::from(f.code)
        }
    }
}
