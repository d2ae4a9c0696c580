//! Command-line driver: single ensembles, parameter scans, exact references,
//! and post-hoc finite-size-scaling analysis over persisted scan tables.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use spintraj::analysis::{
    collapse_scan, contour_segments, crossing_summary, derivative_curve, find_peak,
    log_linear_fit, mirrored_across_diagonal, ScalingExponents, SizeCurve,
};
use spintraj::ensemble::{run_ensemble, workers_from_env, EnsembleOptions};
use spintraj::exact::{ExactSpace, SteadyStateOptions};
use spintraj::jump::{JumpEngine, JumpOptions};
use spintraj::lattice::{Boundary, LatticeSpec};
use spintraj::model::{ModelParams, Problem};
use spintraj::observables::EnsembleStats;
use spintraj::output::{
    curves_from_rows, read_scan_csv_path, write_json_path, write_records_csv_path,
    write_records_jsonl, write_scan_csv_path, ScanRow,
};
use spintraj::qsd::{CumulantEngine, CumulantOptions};

#[derive(Parser)]
#[command(name = "spintraj", version, about = "Driven-dissipative XYZ lattice trajectory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact steady state of the master equation on a small lattice.
    Exact(ExactArgs),
    /// Run one trajectory ensemble at a single parameter point.
    Traj(TrajArgs),
    /// Run ensembles over a coupling grid and sizes, appending a scan table.
    Scan(ScanArgs),
    /// Finite-size-scaling analysis of persisted scan tables.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 4)]
    lx: usize,
    #[arg(long)]
    ly: Option<usize>,
    /// Lattice boundary conditions.
    #[arg(long, value_enum, default_value_t = BoundaryArg::Periodic)]
    boundary: BoundaryArg,
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    jx: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    jy: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    jz: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BoundaryArg {
    Periodic,
    Open,
}

impl ModelArgs {
    fn problem(&self) -> Problem {
        let boundary = match self.boundary {
            BoundaryArg::Periodic => Boundary::Periodic,
            BoundaryArg::Open => Boundary::Open,
        };
        let lattice = LatticeSpec::new(self.lx, self.ly.unwrap_or(self.lx), boundary);
        let model = ModelParams {
            jx: self.jx,
            jy: self.jy,
            jz: self.jz,
            gamma: self.gamma,
        };
        Problem::new(lattice, model)
    }
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Trajectory engine.
    #[arg(long, value_enum, default_value_t = EngineKind::CumulantK2)]
    engine: EngineKind,
    /// Detection efficiency in [0, 1]; 0 is deterministic (cumulant engines).
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Include the multiplicative noise of the covariance equation.
    #[arg(long, default_value_t = false)]
    cov_noise: bool,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 150.0)]
    t_max: f64,
    /// Observable window start (time units of 1/gamma).
    #[arg(long, default_value_t = 75.0)]
    window_start: f64,
    /// Observable window end; defaults to t_max.
    #[arg(long)]
    window_end: Option<f64>,
    /// Sample observables every this many steps.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Uniform transverse kick on the initial state.
    #[arg(long, default_value_t = 0.0)]
    init_kick: f64,
    /// Accumulate collective fourth moments.
    #[arg(long, default_value_t = false)]
    fourth_moments: bool,
    #[arg(long, default_value_t = 256)]
    n_traj: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; defaults to SPINTRAJ_WORKERS or the CPU count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum EngineKind {
    CumulantK1,
    CumulantK2,
    Jump,
}

impl EngineArgs {
    fn ensemble_opts(&self) -> EnsembleOptions {
        EnsembleOptions {
            n_traj: self.n_traj,
            seed: self.seed,
            workers: self.workers.unwrap_or_else(workers_from_env),
        }
    }

    fn cumulant_opts(&self, order: usize) -> CumulantOptions {
        CumulantOptions {
            order,
            eta: self.eta,
            include_cov_noise: self.cov_noise,
            dt: self.dt,
            t_max: self.t_max,
            window: (self.window_start, self.window_end.unwrap_or(self.t_max)),
            record_every: self.record_every,
            init_kick: self.init_kick,
            with_fourth_moments: self.fourth_moments,
        }
    }

    fn run(&self, problem: Problem) -> Result<(EnsembleStats, usize)> {
        let opts = self.ensemble_opts();
        let stats = match self.engine {
            EngineKind::CumulantK1 => {
                run_ensemble(&CumulantEngine::new(problem, self.cumulant_opts(1)), opts)
            }
            EngineKind::CumulantK2 => {
                run_ensemble(&CumulantEngine::new(problem, self.cumulant_opts(2)), opts)
            }
            EngineKind::Jump => {
                let space = ExactSpace::new(problem).context("jump engine needs a small lattice")?;
                let engine = JumpEngine {
                    space,
                    opts: JumpOptions {
                        dt: self.dt,
                        t_max: self.t_max,
                        window: (self.window_start, self.window_end.unwrap_or(self.t_max)),
                        record_every: self.record_every,
                        ..JumpOptions::default()
                    },
                };
                run_ensemble(&engine, opts)
            }
        };
        Ok((stats, opts.workers))
    }

    fn order(&self) -> usize {
        match self.engine {
            EngineKind::CumulantK1 => 1,
            EngineKind::CumulantK2 => 2,
            EngineKind::Jump => 0,
        }
    }
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Convergence threshold on ||d rho/dt||.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 600.0)]
    t_max: f64,
    /// Output JSON path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrajArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Per-trajectory scalar table (CSV).
    #[arg(long)]
    out_records: Option<PathBuf>,
    /// Per-trajectory records as JSON lines.
    #[arg(long)]
    out_jsonl: Option<PathBuf>,
    /// Aggregate summary JSON.
    #[arg(long)]
    out_summary: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Comma-separated linear sizes, e.g. 4,5,6 (overrides --lx/--ly).
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Comma-separated Jy values, e.g. 1.00,1.04,1.08.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    jy_list: Vec<f64>,
    /// Output scan table (CSV); appended to if it exists.
    #[arg(long)]
    out: PathBuf,
    /// Manifest JSON describing the scan.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Scaling-collapse quality scan over trial critical points.
    Collapse(CollapseArgs),
    /// Pairwise crossings of amplitude-rescaled curves.
    Crossing(CrossingArgs),
    /// Susceptibility gamma dm^z/dJy: peaks per size and log-size fit.
    Derivative(DerivativeArgs),
    /// Structure-factor map over (Jx, Jy) and its contour.
    PhaseDiagram(PhaseDiagramArgs),
}

#[derive(Args)]
struct AnalyzeInput {
    /// Scan tables to read (CSV, concatenated).
    #[arg(long, value_delimiter = ',', required = true)]
    input: Vec<PathBuf>,
    /// Observable column to analyze.
    #[arg(long, value_enum, default_value_t = Observable::Sphi)]
    observable: Observable,
    /// Output JSON path; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Observable {
    /// S^xx(0)
    Sxx0,
    /// S^{phi phi}(0) at the optimal angle
    Sphi,
    /// Staggered structure factor at its optimal angle
    SphiStag,
    /// Magnetization m^z
    Mz,
    /// 4 F_q / N
    Fq4n,
    /// Inverse squeezing parameter
    Xi2inv,
}

impl Observable {
    fn select(&self, r: &ScanRow) -> (f64, f64) {
        match self {
            Observable::Sxx0 => (r.sxx0, r.sxx0_se),
            Observable::Sphi => (r.sphi, r.sphi_se),
            Observable::SphiStag => (r.sphi_stag, r.sphi_stag_se),
            Observable::Mz => (r.mz, r.mz_se),
            Observable::Fq4n => (r.fq4n, r.fq4n_se),
            Observable::Xi2inv => (r.xi2inv, r.xi2inv_se),
        }
    }
}

#[derive(Args)]
struct CollapseArgs {
    #[command(flatten)]
    input: AnalyzeInput,
    #[arg(long, value_enum, default_value_t = ExponentSet::Ising)]
    exponents: ExponentSet,
    #[arg(long, default_value_t = 0.95)]
    xc_min: f64,
    #[arg(long, default_value_t = 1.15)]
    xc_max: f64,
    #[arg(long, default_value_t = 0.002)]
    xc_step: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ExponentSet {
    /// 2D Ising: beta = 1/8, nu = 1
    Ising,
    /// Mean field: beta = nu = 1/2
    MeanField,
}

impl ExponentSet {
    fn exponents(&self) -> ScalingExponents {
        match self {
            ExponentSet::Ising => ScalingExponents::ising_2d(),
            ExponentSet::MeanField => ScalingExponents::mean_field(),
        }
    }
}

#[derive(Args)]
struct CrossingArgs {
    #[command(flatten)]
    input: AnalyzeInput,
    /// Amplitude rescaling exponent 2 beta / nu applied before crossing.
    #[arg(long, default_value_t = 0.25)]
    two_beta_over_nu: f64,
}

#[derive(Args)]
struct DerivativeArgs {
    #[command(flatten)]
    input: AnalyzeInput,
}

#[derive(Args)]
struct PhaseDiagramArgs {
    #[command(flatten)]
    input: AnalyzeInput,
    /// Contour level; defaults to the map value closest to (0.9, 1.24).
    #[arg(long)]
    level: Option<f64>,
    /// Contour segment table (CSV: x0,y0,x1,y1,mirrored).
    #[arg(long)]
    contours: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Exact(args) => cmd_exact(args),
        Command::Traj(args) => cmd_traj(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Analyze(cmd) => match cmd {
            AnalyzeCommand::Collapse(args) => cmd_collapse(args),
            AnalyzeCommand::Crossing(args) => cmd_crossing(args),
            AnalyzeCommand::Derivative(args) => cmd_derivative(args),
            AnalyzeCommand::PhaseDiagram(args) => cmd_phase_diagram(args),
        },
    }
}

fn emit_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    match out {
        Some(path) => {
            write_json_path(path, value)?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn cmd_exact(args: ExactArgs) -> Result<()> {
    let problem = args.model.problem();
    let space = ExactSpace::new(problem.clone()).context("exact solver size limit")?;
    let mut rho = space.rho_all_down();
    let report = space.evolve_to_steady_state(
        &mut rho,
        &SteadyStateOptions {
            tol: args.tol,
            t_max: args.t_max,
            ..SteadyStateOptions::default()
        },
    );
    if !report.converged {
        eprintln!(
            "warning: steady state not converged (residual {:.3e} at t = {})",
            report.residual, report.t_final
        );
    }
    let n = problem.lattice.n_sites();
    let mut mz = 0.0;
    for i in 0..n {
        mz += space.site_mean(&rho, i, spintraj::lattice::Axis::Z);
    }
    mz /= n as f64;
    let sxx = space.structure_factor(&rho, 0.0, false);
    let (phi, sphi) = space.optimal_structure_factor(&rho, false);
    let (phi_st, sphi_st) = space.optimal_structure_factor(&rho, true);
    let value = serde_json::json!({
        "lattice": {"lx": problem.lattice.lx, "ly": problem.lattice.ly},
        "model": problem.model,
        "converged": report.converged,
        "residual": report.residual,
        "t_final": report.t_final,
        "mz": mz,
        "sxx0": sxx,
        "phi_opt": phi,
        "sphi": sphi,
        "phi_opt_stag": phi_st,
        "sphi_stag": sphi_st,
    });
    emit_json(&args.out, &value)
}

fn summary_json(row: &ScanRow, stats: &EnsembleStats, workers: usize, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "row": row,
        "n_ok": stats.n_ok,
        "divergence_fraction": stats.divergence_fraction(),
        "workers": workers,
        "seed": seed,
    })
}

fn cmd_traj(args: TrajArgs) -> Result<()> {
    let problem = args.model.problem();
    let params = problem.model.clone();
    let (stats, workers) = args.engine.run(problem)?;
    let row = ScanRow::from_stats(&params, args.engine.order(), args.engine.eta, &stats);
    if let Some(path) = &args.out_records {
        write_records_csv_path(path, &stats)?;
        eprintln!("wrote {}", path.display());
    }
    if let Some(path) = &args.out_jsonl {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_records_jsonl(&mut w, &stats)?;
        eprintln!("wrote {}", path.display());
    }
    let summary = summary_json(&row, &stats, workers, args.engine.seed);
    emit_json(&args.out_summary, &summary)
}

fn cmd_scan(args: ScanArgs) -> Result<()> {
    let explicit_sizes = !args.sizes.is_empty();
    let sizes = if explicit_sizes {
        args.sizes.clone()
    } else {
        vec![args.model.lx]
    };
    let mut rows: Vec<ScanRow> = if args.out.exists() {
        read_scan_csv_path(&args.out)?
    } else {
        Vec::new()
    };
    let t0 = std::time::Instant::now();
    for &l in &sizes {
        for &jy in &args.jy_list {
            let mut model_args = args.model.clone();
            if explicit_sizes {
                // sizes are square lattices L x L
                model_args.lx = l;
                model_args.ly = Some(l);
            }
            model_args.jy = jy;
            let problem = model_args.problem();
            let params = problem.model.clone();
            let (stats, _) = args.engine.run(problem)?;
            let row = ScanRow::from_stats(&params, args.engine.order(), args.engine.eta, &stats);
            eprintln!(
                "[{:7.1}s] L={} jy={:.4}: sphi={:.5} ({:.5}) mz={:.5} div={}/{}",
                t0.elapsed().as_secs_f64(),
                l,
                jy,
                row.sphi,
                row.sphi_se,
                row.mz,
                row.n_divergent,
                row.n_traj
            );
            rows.push(row);
            write_scan_csv_path(&args.out, &rows)?;
        }
    }
    if let Some(path) = &args.manifest {
        let manifest = serde_json::json!({
            "sizes": sizes,
            "jy_list": args.jy_list,
            "jx": args.model.jx,
            "jz": args.model.jz,
            "gamma": args.model.gamma,
            "eta": args.engine.eta,
            "order": args.engine.order(),
            "cov_noise": args.engine.cov_noise,
            "dt": args.engine.dt,
            "t_max": args.engine.t_max,
            "window": [args.engine.window_start, args.engine.window_end.unwrap_or(args.engine.t_max)],
            "record_every": args.engine.record_every,
            "n_traj": args.engine.n_traj,
            "seed": args.engine.seed,
        });
        write_json_path(path, &manifest)?;
    }
    eprintln!("scan complete: {} rows in {}", rows.len(), args.out.display());
    Ok(())
}

fn load_curves(input: &AnalyzeInput) -> Result<Vec<SizeCurve>> {
    let mut rows = Vec::new();
    for path in &input.input {
        rows.extend(read_scan_csv_path(path).with_context(|| format!("reading {}", path.display()))?);
    }
    if rows.is_empty() {
        bail!("no scan rows found");
    }
    Ok(curves_from_rows(&rows, |r| input.observable.select(r)))
}

fn cmd_collapse(args: CollapseArgs) -> Result<()> {
    let curves = load_curves(&args.input)?;
    let exp = args.exponents.exponents();
    let n_grid = ((args.xc_max - args.xc_min) / args.xc_step).round() as usize + 1;
    let grid: Vec<f64> = (0..n_grid).map(|k| args.xc_min + k as f64 * args.xc_step).collect();
    let scan = collapse_scan(&curves, exp, &grid)?;
    let value = serde_json::json!({
        "exponents": {"two_beta_over_nu": exp.two_beta_over_nu, "one_over_nu": exp.one_over_nu},
        "best_xc": scan.best_xc,
        "best_q": scan.best_q,
        "valid_overlap": scan.valid_overlap,
        "sizes": curves.iter().map(|c| c.l).collect::<Vec<_>>(),
        "grid": scan.grid,
    });
    emit_json(&args.input.out, &value)
}

fn cmd_crossing(args: CrossingArgs) -> Result<()> {
    let curves = load_curves(&args.input)?;
    let rescaled: Vec<SizeCurve> = curves
        .iter()
        .map(|c| c.amplitude_rescaled(args.two_beta_over_nu))
        .collect();
    let summary = crossing_summary(&rescaled)?;
    let value = serde_json::json!({
        "two_beta_over_nu": args.two_beta_over_nu,
        "mean": summary.mean,
        "se": summary.se,
        "n_multiple": summary.n_multiple,
        "crossings": summary
            .crossings
            .iter()
            .map(|c| {
                serde_json::json!({
                    "l_pair": c.l_pair,
                    "x": c.x,
                    "se": c.se,
                    "n_candidates": c.n_candidates,
                })
            })
            .collect::<Vec<_>>(),
    });
    emit_json(&args.input.out, &value)
}

fn cmd_derivative(args: DerivativeArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.input.input {
        rows.extend(read_scan_csv_path(path)?);
    }
    if rows.is_empty() {
        bail!("no scan rows found");
    }
    let gamma = rows[0].gamma;
    let curves = curves_from_rows(&rows, |r| (r.mz, r.mz_se));
    let mut per_size = Vec::new();
    let mut ls = Vec::new();
    let mut peak_heights = Vec::new();
    let mut peak_ses = Vec::new();
    for c in &curves {
        let deriv = derivative_curve(&c.points)?;
        let scaled: Vec<_> = deriv
            .iter()
            .map(|p| spintraj::analysis::CurvePoint { x: p.x, y: gamma * p.y, se: gamma * p.se })
            .collect();
        let peak = find_peak(&scaled, true)?;
        let dip = find_peak(&scaled, false)?;
        ls.push(c.l as f64);
        peak_heights.push(peak.height);
        peak_ses.push(peak.se.max(1e-12));
        per_size.push(serde_json::json!({
            "l": c.l,
            "peak": {"x": peak.x, "height": peak.height, "se": peak.se},
            "dip": {"x": dip.x, "height": dip.height, "se": dip.se},
            "derivative": scaled.iter().map(|p| (p.x, p.y, p.se)).collect::<Vec<_>>(),
        }));
    }
    let log_fit = if ls.len() >= 2 {
        log_linear_fit(&ls, &peak_heights, Some(&peak_ses)).ok()
    } else {
        None
    };
    let value = serde_json::json!({
        "per_size": per_size,
        "peak_log_fit": log_fit.map(|f| {
            serde_json::json!({
                "a": f.intercept, "b": f.slope,
                "se_a": f.se_intercept, "se_b": f.se_slope,
            })
        }),
    });
    emit_json(&args.input.out, &value)
}

fn cmd_phase_diagram(args: PhaseDiagramArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.input.input {
        rows.extend(read_scan_csv_path(path)?);
    }
    if rows.is_empty() {
        bail!("no scan rows found");
    }
    let mut jxs: Vec<f64> = rows.iter().map(|r| r.jx).collect();
    let mut jys: Vec<f64> = rows.iter().map(|r| r.jy).collect();
    jxs.sort_by(f64::total_cmp);
    jxs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    jys.sort_by(f64::total_cmp);
    jys.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut map = Array2::from_elem((jxs.len(), jys.len()), f64::NAN);
    for r in &rows {
        let i = jxs.iter().position(|v| (v - r.jx).abs() < 1e-9).unwrap();
        let j = jys.iter().position(|v| (v - r.jy).abs() < 1e-9).unwrap();
        // order detector: larger of the uniform and staggered peaks
        map[[i, j]] = r.sphi.max(r.sphi_stag);
    }
    let mut missing = 0usize;
    for v in map.iter() {
        if v.is_nan() {
            missing += 1;
        }
    }
    if missing > 0 {
        eprintln!("warning: {missing} grid points missing; contour skips their cells");
    }
    let level = args.level.unwrap_or_else(|| {
        // reference level: the map value nearest to (0.9, 1.24)
        let mut best = (f64::INFINITY, f64::NAN);
        for r in &rows {
            let d = (r.jx - 0.9).powi(2) + (r.jy - 1.24).powi(2);
            if d < best.0 {
                best = (d, r.sphi.max(r.sphi_stag));
            }
        }
        best.1
    });
    let segs = contour_segments(&jxs, &jys, &map, level);
    let mirrored = mirrored_across_diagonal(&segs);
    if let Some(path) = &args.contours {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x0", "y0", "x1", "y1", "mirrored"])?;
        for (seg, m) in segs.iter().map(|s| (s, 0)).chain(mirrored.iter().map(|s| (s, 1))) {
            w.write_record([
                seg[0].0.to_string(),
                seg[0].1.to_string(),
                seg[1].0.to_string(),
                seg[1].1.to_string(),
                m.to_string(),
            ])?;
        }
        w.flush()?;
        eprintln!("wrote {}", path.display());
    }
    let value = serde_json::json!({
        "jx_grid": jxs,
        "jy_grid": jys,
        "level": level,
        "map": map.outer_iter().map(|row| row.to_vec()).collect::<Vec<_>>(),
        "n_segments": segs.len(),
    });
    emit_json(&args.input.out, &value)
}
