//! `rto`: batch front end for robust topology optimization runs.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rto_cli::config::{self, RunConfig};
use rto_core::adjoint::{cdm_gradient, objective_value, robust_gradient};
use rto_core::io;
use rto_core::optimize::{expand_design, design_masters, optimize};
use rto_core::perturbation::{analyze, mc_estimate};
use rto_core::problem::Problem;
use rto_core::stochastic::Block;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rto", version, about = "Finite-strain robust topology optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// output directory (created if missing)
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// overrides `run.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads; results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization and write history, design, image and mesh.
    Optimize(Common),
    /// Perturbation statistics of a design.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// design CSV; defaults to the uniform volume-fraction design
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Perturbation statistics against Monte Carlo for each `σ_P`.
    UqVerify(Common),
    /// Adjoint gradient against central differences.
    GradVerify(Common),
    /// Compliance of a saved design at prescribed random inputs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: PathBuf,
        /// which random input the eigenmode belongs to
        #[arg(long, value_enum)]
        source: Option<Source>,
        /// 1-based mode (or load component) within the source
        #[arg(long)]
        eigenmode: Option<usize>,
        /// sweep `A:B:N` of the selected coefficient
        #[arg(long, allow_hyphen_values = true)]
        coeff_range: Option<String>,
        /// full realization as comma-separated values
        #[arg(long, allow_hyphen_values = true, conflicts_with_all = ["source", "eigenmode", "coeff_range"])]
        xi: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Load,
    Material,
    Geometry,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error, Option<PathBuf>),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        classify(e, None)
    }
}

fn classify(e: anyhow::Error, checkpoint: Option<PathBuf>) -> Failure {
    use rto_core::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::InvalidArgument(_) | E::Geometry { .. } | E::Configuration(_) | E::DegenerateField(_)) => {
            Failure::Config(e)
        }
        Some(
            E::InadmissibleState(_)
            | E::Singular { .. }
            | E::SolverFailure(_)
            | E::OracleUnreliable { .. },
        ) => Failure::Solver(e, checkpoint),
        _ => Failure::Other(e),
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
}

fn setup(c: &Common) -> Result<Ctx, Failure> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Failure::Other(anyhow!(e)))?;
    }
    let text = std::fs::read_to_string(&c.config)
        .with_context(|| format!("reading {}", c.config.display()))
        .map_err(Failure::Config)?;
    let cfg = config::parse(&text)
        .with_context(|| format!("{}", c.config.display()))
        .map_err(Failure::Config)?;
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let seed = c.seed.unwrap_or(cfg.run.seed);
    eprintln!("{}: {} scale, seed {seed}", c.config.display(), cfg.scale);
    Ok(Ctx { cfg, out: c.out.clone(), seed })
}

fn build(cfg: &RunConfig) -> Result<Problem, Failure> {
    cfg.build().map_err(|e| match classify(e, None) {
        Failure::Other(e) => Failure::Config(e),
        f => f,
    })
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_design(problem: &Problem, path: &Path) -> Result<Vec<f64>, Failure> {
    let x = io::read_design_csv(path).map_err(|e| Failure::Config(e.into()))?;
    if x.len() != problem.n_ele() {
        return Err(Failure::Config(anyhow!(
            "{}: {} design values for {} elements",
            path.display(),
            x.len(),
            problem.n_ele()
        )));
    }
    Ok(x)
}

fn export(problem: &Problem, dir: &Path, stem: &str, x: &[f64], beta: f64) -> anyhow::Result<()> {
    let d = problem.design_fields(x, beta);
    io::write_design_csv(&dir.join(format!("{stem}.csv")), &d.x, &d.rho_hat, &d.rho_bar)?;
    io::write_pgm(&dir.join(format!("{stem}.pgm")), &problem.model.mesh, &d.rho_bar)?;
    Ok(())
}

fn run_optimize(c: &Common) -> Result<(), Failure> {
    let ctx = setup(c)?;
    let problem = build(&ctx.cfg)?;
    let opt = ctx.cfg.opt_config().map_err(Failure::Config)?;
    let snap = ctx.cfg.run.snapshot_interval;
    let snap_dir = ctx.out.join("snapshots");
    if snap > 0 {
        std::fs::create_dir_all(&snap_dir).with_context(|| format!("creating {}", snap_dir.display()))?;
    }
    let mut history = String::from(io::HISTORY_HEADER);
    history.push('\n');
    let mut last_x: Vec<f64> = Vec::new();
    let mut snap_err = None;
    let result = optimize(&problem, &opt, |row, x| {
        history.push_str(&io::history_line(row));
        history.push('\n');
        last_x.clear();
        last_x.extend_from_slice(x);
        if snap > 0 && row.iter % snap == 0 && snap_err.is_none() {
            snap_err = export(&problem, &snap_dir, &format!("iter_{:05}", row.iter), x, row.beta).err();
        }
    });
    write(&ctx.out.join("history.csv"), &history)?;
    if let Some(e) = snap_err {
        return Err(Failure::Other(e));
    }
    let res = match result {
        Ok(r) => r,
        Err(e) => {
            let path = ctx.out.join("checkpoint.csv");
            let x = if last_x.is_empty() {
                let (master, _) = design_masters(&problem);
                let mut x = vec![opt.volume_fraction; problem.n_ele()];
                expand_design(&problem, &master, &mut x);
                x
            } else {
                last_x
            };
            let d = problem.design_fields(&x, opt.continuation.params(0).beta);
            io::write_design_csv(&path, &d.x, &d.rho_hat, &d.rho_bar).map_err(|e| Failure::Other(e.into()))?;
            return Err(classify(e.into(), Some(path)));
        }
    };
    let beta = res.final_params.beta;
    export(&problem, &ctx.out, "design", &res.x, beta)?;
    let d = problem.design_fields(&res.x, beta);
    io::write_vtk(
        &ctx.out.join("mesh.vtk"),
        &problem.model.mesh,
        &[("x", &d.x), ("rho_hat", &d.rho_hat), ("rho_bar", &d.rho_bar)],
    )
    .map_err(|e| Failure::Other(e.into()))?;
    if let Some(r) = res.history.last() {
        println!("{} iterations, final objective {:.6e}", res.history.len(), r.objective);
    }
    Ok(())
}

fn run_analyze(c: &Common, design: Option<&Path>) -> Result<(), Failure> {
    let ctx = setup(c)?;
    let problem = build(&ctx.cfg)?;
    let ip = ctx.cfg.analysis_params().map_err(Failure::Config)?;
    let x = match design {
        Some(p) => load_design(&problem, p)?,
        None => {
            let (master, _) = design_masters(&problem);
            let mut x = vec![ctx.cfg.design.volume_fraction; problem.n_ele()];
            expand_design(&problem, &master, &mut x);
            x
        }
    };
    let an = analyze(&problem, &problem.filter.apply(&x), &ip).map_err(|e| classify(e.into(), None))?;
    let alpha = ctx.cfg.design.alpha;
    let mut s = String::from("quantity,value\n");
    let _ = writeln!(s, "m,{}", an.m());
    let _ = writeln!(s, "f0,{:?}", an.f0);
    let _ = writeln!(s, "mean,{:?}", an.mean);
    let _ = writeln!(s, "std,{:?}", an.std());
    let _ = writeln!(s, "objective,{:?}", objective_value(&an, alpha));
    let _ = writeln!(s, "c,{:?}", an.ip.c);
    write(&ctx.out.join("analysis.csv"), &s)?;
    print!("{s}");
    Ok(())
}

fn rel_pct(a: f64, b: f64) -> f64 {
    100.0 * (a - b).abs() / b.abs()
}

fn run_uq_verify(c: &Common) -> Result<(), Failure> {
    let ctx = setup(c)?;
    let base = ctx.cfg.problem_spec().map_err(Failure::Config)?;
    let ip = ctx.cfg.analysis_params().map_err(Failure::Config)?;
    let sigmas = if ctx.cfg.run.sigma_p_list.is_empty() {
        base.load_sigma.into_iter().collect()
    } else {
        ctx.cfg.run.sigma_p_list.clone()
    };
    if sigmas.is_empty() {
        return Err(Failure::Config(anyhow!("uq-verify needs run.sigma_p_list or uncertainty.load.sigma")));
    }
    let n = ctx.cfg.run.mc_samples;
    let mut s = String::from("sigma_P,pert_mean,pert_std,mc_mean,mc_std,rel_err_mean_pct,rel_err_std_pct,n_samples,seed\n");
    for sigma in sigmas {
        let mut spec = base.clone();
        spec.load_sigma = Some(sigma);
        let problem = ctx.cfg.build_spec(&spec).map_err(Failure::Config)?;
        let x = vec![ctx.cfg.run.uniform_design; problem.n_ele()];
        let rho = problem.filter.apply(&x);
        let an = analyze(&problem, &rho, &ip).map_err(|e| classify(e.into(), None))?;
        let mc = mc_estimate(&problem, &rho, &ip, n, ctx.seed).map_err(|e| classify(e.into(), None))?;
        let mc_std = mc.variance.sqrt();
        let _ = writeln!(
            s,
            "{sigma:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
            an.mean,
            an.std(),
            mc.mean,
            mc_std,
            rel_pct(an.mean, mc.mean),
            rel_pct(an.std(), mc_std),
            mc.samples,
            ctx.seed
        );
        println!(
            "sigma_P {sigma}: mean {:.5} vs {:.5} ({:.3}%), std {:.5} vs {:.5} ({:.3}%)",
            an.mean,
            mc.mean,
            rel_pct(an.mean, mc.mean),
            an.std(),
            mc_std,
            rel_pct(an.std(), mc_std)
        );
    }
    write(&ctx.out.join("uq_verify.csv"), &s)?;
    Ok(())
}

fn run_grad_verify(c: &Common) -> Result<(), Failure> {
    let ctx = setup(c)?;
    let problem = build(&ctx.cfg)?;
    let ip = ctx.cfg.analysis_params().map_err(Failure::Config)?;
    let alpha = ctx.cfg.design.alpha;
    let x = vec![ctx.cfg.run.uniform_design; problem.n_ele()];
    let an = analyze(&problem, &problem.filter.apply(&x), &ip).map_err(|e| classify(e.into(), None))?;
    let g = robust_gradient(&problem, &an, alpha).map_err(|e| classify(e.into(), None))?;
    let obj = |x: &[f64]| -> rto_core::Result<f64> {
        let an = analyze(&problem, &problem.filter.apply(x), &ip)?;
        Ok(objective_value(&an, alpha))
    };
    let idx: Vec<usize> = (0..problem.n_ele()).collect();
    let fd = cdm_gradient(obj, &x, ctx.cfg.run.cdm_step, &idx);
    let mut s = String::from("element,g_adjoint,g_cdm,rel_err\n");
    let mut worst = 0.0f64;
    for e in idx {
        let Some(f) = fd[e] else {
            return Err(classify(anyhow!(rto_core::Error::SolverFailure(format!("perturbed solve for element {e}"))), None));
        };
        let err = (g[e] - f).abs() / f.abs();
        worst = worst.max(err);
        let _ = writeln!(s, "{e},{:?},{f:?},{err:?}", g[e]);
    }
    write(&ctx.out.join("grad_verify.csv"), &s)?;
    println!("max relative error {worst:.3e}");
    Ok(())
}

fn parse_range(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        bail!("coefficient range must be A:B:N, got {s}");
    };
    let a: f64 = a.parse().with_context(|| format!("range start {a}"))?;
    let b: f64 = b.parse().with_context(|| format!("range end {b}"))?;
    let n: usize = n.parse().with_context(|| format!("range count {n}"))?;
    Ok(match n {
        0 => bail!("range count must be positive"),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    })
}

fn run_evaluate(
    c: &Common,
    design: &Path,
    source: Option<Source>,
    eigenmode: Option<usize>,
    range: Option<&str>,
    xi: Option<&str>,
) -> Result<(), Failure> {
    let ctx = setup(c)?;
    let problem = build(&ctx.cfg)?;
    let ip = ctx.cfg.analysis_params().map_err(Failure::Config)?;
    let x = load_design(&problem, design)?;
    let rho = problem.filter.apply(&x);
    let m = problem.dim();
    let sto = &problem.stochastic;
    let mut s = String::new();
    if let Some(text) = xi {
        let v = text
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::Config(anyhow!("--xi: {e}")))?;
        if v.len() != m {
            return Err(Failure::Config(anyhow!("--xi has {} values, the model has {m} random variables", v.len())));
        }
        let f = problem.compliance_at(&rho, &v, &ip, None).map_err(|e| classify(e.into(), None))?;
        s.push_str("compliance\n");
        let _ = writeln!(s, "{f:?}");
    } else {
        let (Some(src), Some(k), Some(r)) = (source, eigenmode, range) else {
            return Err(Failure::Config(anyhow!("evaluate needs --xi or all of --source, --eigenmode, --coeff-range")));
        };
        let (count, block) = match src {
            Source::Load => (sto.n_load(), Block::Load(k.wrapping_sub(1))),
            Source::Material => (sto.n_material(), Block::Material(k.wrapping_sub(1))),
            Source::Geometry => (sto.n_geometry(), Block::Geometry(k.wrapping_sub(1))),
        };
        if k == 0 || k > count {
            return Err(Failure::Config(anyhow!("--eigenmode {k} outside 1..={count} for this source")));
        }
        let idx = sto.offset(block);
        let coeffs = parse_range(r).map_err(Failure::Config)?;
        let zero = vec![0.0; m];
        let u0 = problem.solve_at(&rho, &zero, &ip, None, false).map_err(|e| classify(e.into(), None))?.u;
        s.push_str("coefficient,compliance\n");
        for t in coeffs {
            let mut v = zero.clone();
            v[idx] = t;
            let f = problem.compliance_at(&rho, &v, &ip, Some(&u0)).map_err(|e| classify(e.into(), None))?;
            let _ = writeln!(s, "{t:?},{f:?}");
        }
    }
    write(&ctx.out.join("evaluate.csv"), &s)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Optimize(c) => run_optimize(c),
        Command::Analyze { common, design } => run_analyze(common, design.as_deref()),
        Command::UqVerify(c) => run_uq_verify(c),
        Command::GradVerify(c) => run_grad_verify(c),
        Command::Evaluate { common, design, source, eigenmode, coeff_range, xi } => {
            run_evaluate(common, design, *source, *eigenmode, coeff_range.as_deref(), xi.as_deref())
        }
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e, checkpoint)) => {
            eprintln!("solver failure: {e:#}");
            if let Some(p) = checkpoint {
                eprintln!("checkpoint written to {}", p.display());
            }
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
