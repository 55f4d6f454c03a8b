use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use kforge::balanced::{run_iteration, sweep};
use kforge::energy::monotonicity_audit;
use kforge::heatmap::Heatmap;
use kforge::quadrature::{DEFAULT_RADIUS, DEFAULT_RESOLUTION};
use kforge::real_ma::grid::field_csv;
use kforge::real_ma::{cross_validate, ricci_iteration_real, RealMaConfig};
use kforge::{FanoPolygon, IterationConfig, MetricWeights, SampleCloud, Scheme, SectionBasis};

use crate::RunArgs;

/// Columns of the comparison table, in print order.
pub const TABLE_SCHEMES: [Scheme; 4] =
    [Scheme::Balanced, Scheme::RefinedBalanced, Scheme::Canonical, Scheme::RefinedCanonical];
const AUDIT_SLACK: f64 = 1e-4;

pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|&n| n > 0) {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().context("building thread pool")?;
        return Ok(pool.install(f));
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(f())
}

pub fn load_polygon(spec: Option<&str>) -> Result<FanoPolygon> {
    Ok(match spec.unwrap_or("hexagon") {
        "hexagon" => FanoPolygon::hexagon(),
        "p2" => FanoPolygon::projective_plane(),
        "blowup" => FanoPolygon::one_point_blowup(),
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading polygon file {path}"))?;
            FanoPolygon::parse(&text).with_context(|| format!("in polygon file {path}"))?
        }
    })
}

fn out_dir(args: &RunArgs) -> Result<PathBuf> {
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn cloud(args: &RunArgs, polygon: &FanoPolygon) -> Result<SampleCloud> {
    let res = args.grid_res.unwrap_or(DEFAULT_RESOLUTION);
    let radius = args.grid_radius.unwrap_or(DEFAULT_RADIUS);
    Ok(SampleCloud::build(polygon, res, radius)?)
}

pub fn polytope_report(polygon: &FanoPolygon) -> String {
    let pts = |v: &[[i64; 2]]| v.iter().map(|p| format!("({}, {})", p[0], p[1])).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    writeln!(s, "rays: {}", pts(polygon.rays())).unwrap();
    writeln!(s, "dual vertices: {}", pts(polygon.vertices())).unwrap();
    writeln!(s, "area: {}", polygon.area()).unwrap();
    writeln!(s, "symmetry order: {}", polygon.symmetries().len()).unwrap();
    writeln!(s, "r,N_r").unwrap();
    for r in 1..=12 {
        writeln!(s, "{r},{}", polygon.lattice_points(r).len()).unwrap();
    }
    s
}

pub fn polytope_info(args: &RunArgs) -> Result<bool> {
    print!("{}", polytope_report(&load_polygon(args.polygon.as_deref())?));
    Ok(true)
}

fn iteration_config(args: &RunArgs, scheme: Scheme) -> IterationConfig {
    let mut cfg = IterationConfig::new(scheme, args.r.unwrap_or(4), args.iters.unwrap_or(15));
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(n) = args.inner_iters {
        cfg.inner_iters = n;
    }
    cfg.record_timing = args.timing;
    cfg
}

pub fn iterate(args: &RunArgs) -> Result<bool> {
    let polygon = load_polygon(args.polygon.as_deref())?;
    let cloud = cloud(args, &polygon)?;
    let cfg = iteration_config(args, args.scheme.unwrap_or(Scheme::Canonical));
    let dir = out_dir(args)?;
    let trace = run_iteration(&cfg, &polygon, &cloud)?;
    write(&dir.join("trace.csv"), trace.to_csv())?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    if args.dump_weights {
        let wdir = dir.join("weights");
        fs::create_dir_all(&wdir)?;
        for (k, w) in trace.snapshots.iter().enumerate() {
            write(&wdir.join(format!("step_{k:03}.txt")), w.to_text())?;
        }
    }
    let mut ok = true;
    for &k in &args.heatmap_at {
        let Some(w) = trace.snapshots.get(k) else {
            eprintln!("error: no step {k} for a heatmap; the trace has {} steps", trace.snapshots.len());
            ok = false;
            continue;
        };
        let sw = sweep(w, &cloud, None, true);
        let img = Heatmap::from_sweep(&polygon, &cloud, &sw, cfg.condition_bound);
        write(&dir.join(format!("sigma_step_{k:03}.ppm")), img.to_ppm())?;
    }
    if cfg.scheme == Scheme::RicciOuter {
        let audit = monotonicity_audit(&trace.snapshots, &cloud, AUDIT_SLACK)?;
        write(&dir.join("audit.csv"), audit.to_csv())?;
        if !audit.passed() {
            eprintln!("audit: {} violations, worst {:e}", audit.violations.len(), audit.worst);
        }
    }
    let last = trace.last();
    println!(
        "{} r={} steps={} converged={} sigma avg {:.4} min {:.4} max {:.4}",
        cfg.scheme,
        cfg.rank,
        trace.steps.len() - 1,
        trace.converged,
        last.sigma.avg,
        last.sigma.min,
        last.sigma.max
    );
    Ok(ok)
}

pub fn table(args: &RunArgs) -> Result<bool> {
    let polygon = load_polygon(args.polygon.as_deref())?;
    let cloud = cloud(args, &polygon)?;
    let dir = out_dir(args)?;
    let mut csv = String::from("scheme,sigma_avg,sigma_max,sigma_min,wall_s,status\n");
    let mut ok = true;
    for scheme in TABLE_SCHEMES {
        let mut cfg = iteration_config(args, scheme);
        cfg.tol = args.tol.unwrap_or(0.0);
        cfg.record_functionals = false;
        let clock = Instant::now();
        match run_iteration(&cfg, &polygon, &cloud) {
            Ok(trace) => {
                let s = trace.last().sigma;
                let secs = clock.elapsed().as_secs_f64();
                writeln!(csv, "{scheme},{:.6},{:.6},{:.6},{secs:.2},ok", s.avg, s.max, s.min).unwrap();
                println!("{scheme:<18} avg {:.4} max {:.4} min {:.4} {secs:.1} s", s.avg, s.max, s.min);
            }
            Err(e) => {
                eprintln!("{scheme}: {e}");
                writeln!(csv, "{scheme},NaN,NaN,NaN,NaN,failed").unwrap();
                ok = false;
            }
        }
    }
    write(&dir.join("table.csv"), csv)?;
    Ok(ok)
}

pub fn real_ma(args: &RunArgs) -> Result<bool> {
    let polygon = load_polygon(args.polygon.as_deref())?;
    let mut cfg = RealMaConfig::default();
    cfg.radius = args.grid_radius.unwrap_or(cfg.radius);
    cfg.spacing = args.grid_res.unwrap_or(cfg.spacing);
    cfg.eps = args.eps.unwrap_or(0.0);
    cfg.steps = args.iters.unwrap_or(cfg.steps);
    if let Some(t) = args.tol {
        cfg.newton.tol = t;
    }
    cfg.keep_history = !args.heatmap_at.is_empty();
    let dir = out_dir(args)?;
    let run = ricci_iteration_real(&polygon, &cfg)?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let grid = *run.potential.grid();
    let sigma = run.potential.sigma_field();
    write(&dir.join("real_ma.csv"), run.to_csv())?;
    write(&dir.join("potential.csv"), run.potential.to_csv())?;
    write(&dir.join("sigma.csv"), field_csv(&grid, "sigma", &sigma))?;
    write(&dir.join("sigma.ppm"), Heatmap::from_grid(&polygon, &run.potential, &sigma).to_ppm())?;
    let mut ok = true;
    for &k in &args.heatmap_at {
        let Some(w) = run.history.get(k) else {
            eprintln!("error: no step {k} for a heatmap; the run has {} steps", run.history.len());
            ok = false;
            continue;
        };
        let img = Heatmap::from_grid(&polygon, w, &w.sigma_field());
        write(&dir.join(format!("sigma_step_{k:03}.ppm")), img.to_ppm())?;
    }
    if let Some(path) = &args.weights {
        let basis = Arc::new(SectionBasis::new(&polygon, args.r.unwrap_or(12))?);
        let text = fs::read_to_string(path).with_context(|| format!("reading weights {}", path.display()))?;
        let weights = MetricWeights::parse(basis, &text).with_context(|| format!("in weights {}", path.display()))?;
        let report = cross_validate(&polygon, &run.potential, &weights, cfg.interior_half_width())?;
        write(
            &dir.join("cross.csv"),
            format!(
                "sup,l2,constant,nodes,tolerance,passed\n{:e},{:e},{:e},{},{:e},{}\n",
                report.sup,
                report.l2,
                report.constant,
                report.nodes,
                report.tolerance,
                report.passed()
            ),
        )?;
        println!("cross-validation: sup {:.3e} l2 {:.3e} (tolerance {:.0e})", report.sup, report.l2, report.tolerance);
        ok &= report.passed();
    }
    match run.last() {
        Some(s) => println!(
            "{} steps, last increment {:.3e}, interior sigma avg {:.4} min {:.4} max {:.4}",
            run.steps.len(),
            s.increment,
            s.sigma.avg,
            s.sigma.min,
            s.sigma.max
        ),
        None => println!("no steps requested; wrote the reference potential"),
    }
    Ok(ok)
}
