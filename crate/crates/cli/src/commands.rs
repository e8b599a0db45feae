use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::Path;

use fraclab_core::fixtures::{
    explicit_exponent, explicit_residual_check, explicit_solution, increment_slope, odd_kink, odd_kink_operator,
    run_validate as validation_suite, ValidationConfig, BLOWUP_DISTS,
};
use fraclab_core::gridfn::{ExteriorExtension, Grid, GridFunction};
use fraclab_core::kernels::{IsaacsOperator, KernelSpec};
use fraclab_core::nonlocal_ops::{eval_linear, eval_sweep, OperatorKind, PucciSign, QuadratureScheme};
use fraclab_core::probe::{blowup_profile, fit_holder_exponent, flatness_trace, Side};
use fraclab_core::solver::{
    solve_vanishing_viscosity, sup_distance, GradientEstimate, ProblemSpec, SolveConfig, Source, Sweep,
};

use crate::config::{ConfigError, Ini, Resolver, Term};

/// Process exit status of a finished command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    FixtureFailure = 1,
    NotConverged = 3,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(fraclab_core::Error),
    Io(io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Core(e) => write!(f, "error: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<fraclab_core::Error> for CliError {
    fn from(e: fraclab_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_SCALES: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

fn positive(v: f64) -> bool {
    v > 0.0
}

fn any(_: f64) -> bool {
    true
}

fn read_grid(r: &mut Resolver) -> Result<Grid> {
    let radius = r.number("grid", "radius", ValidationConfig::BASE_RADIUS, positive, "positive")?;
    let h = r.number("grid", "h", ValidationConfig::BASE_H, positive, "positive")?;
    Grid::new(radius, h).map_err(|e| {
        ConfigError {
            line: r.line("grid", "h"),
            msg: e.to_string(),
        }
        .into()
    })
}

fn read_sigma(r: &mut Resolver, section: &str, default: f64) -> Result<f64> {
    Ok(r.number(section, "sigma", default, |s| s > 0.0 && s < 2.0, "in (0, 2)")?)
}

/// Kernel family from `[kernel]`: `fraclap`, `band(lambda, Lambda, seed)`,
/// `perturbed(k, omega_exponent)` or `isaacs_band(lambda, Lambda, rows, cols, seed)`.
fn read_operator(r: &mut Resolver) -> Result<(f64, IsaacsOperator)> {
    let sigma = read_sigma(r, "kernel", 1.5)?;
    let fam = r.term("kernel", "family", "fraclap")?;
    let wrap = |e: fraclab_core::Error| fam.error(e.to_string());
    let seed = |v: f64| -> std::result::Result<u64, ConfigError> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as u64)
        } else {
            Err(fam.error(format!("seed {v} must be a nonnegative integer")))
        }
    };
    let op = match fam.name.as_str() {
        "fraclap" => {
            fam.expect_args(0)?;
            IsaacsOperator::single(KernelSpec::frac_laplacian(sigma).map_err(wrap)?)
        }
        "band" => {
            let a = fam.expect_args(3)?;
            IsaacsOperator::single(KernelSpec::band(sigma, a[0], a[1], seed(a[2])?).map_err(wrap)?)
        }
        "perturbed" => {
            let a = fam.expect_args(2)?;
            IsaacsOperator::single(KernelSpec::perturbed(sigma, a[0], a[1]).map_err(wrap)?)
        }
        "isaacs_band" => {
            let a = fam.expect_args(5)?;
            let count = |v: f64| -> std::result::Result<usize, ConfigError> {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(fam.error(format!("rows/cols {v} must be a positive integer")))
                }
            };
            IsaacsOperator::band_family(sigma, a[0], a[1], count(a[2])?, count(a[3])?, seed(a[4])?).map_err(wrap)?
        }
        other => return Err(fam.error(format!("unknown kernel family `{other}`")).into()),
    };
    Ok((sigma, op))
}

fn read_quadrature(r: &mut Resolver) -> Result<QuadratureScheme> {
    let delta_inner = r.optional_number("quadrature", "delta_inner", |d| d > 0.0 && d <= 1.0, "in (0, 1]")?;
    let tail_tol = r.number("quadrature", "tail_tol", 1e-10, positive, "positive")?;
    Ok(QuadratureScheme { delta_inner, tail_tol })
}

fn read_gamma(r: &mut Resolver) -> Result<f64> {
    Ok(r.number("problem", "gamma", 0.0, |g| g >= 0.0, ">= 0")?)
}

/// Exterior data: `zero`, `constant(c)`, `affine(a, b)`, `power(s, beta)` or
/// `explicit` (the explicit radial solution).
fn exterior(t: &Term, sigma: f64, gamma: f64) -> Result<ExteriorExtension> {
    let ext = match t.name.as_str() {
        "zero" => {
            t.expect_args(0)?;
            ExteriorExtension::zero()
        }
        "constant" => ExteriorExtension::constant(t.expect_args(1)?[0]),
        "affine" => {
            let a = t.expect_args(2)?;
            ExteriorExtension::affine(a[0], a[1])
        }
        "power" => {
            let a = t.expect_args(2)?;
            ExteriorExtension::power(a[0], a[1]).map_err(|e| t.error(e.to_string()))?
        }
        "explicit" => {
            t.expect_args(0)?;
            ExteriorExtension::power(1.0, explicit_exponent(sigma, gamma)).map_err(|e| t.error(e.to_string()))?
        }
        other => return Err(t.error(format!("unknown exterior `{other}`")).into()),
    };
    Ok(ext)
}

/// A grid function from `input = PATH` (a solution CSV, which fixes the grid)
/// or from `function = NAME` on the `[grid]` grid.
fn read_function(r: &mut Resolver, section: &str, sigma: f64, gamma: f64) -> Result<GridFunction> {
    if let Some(path) = r.text(section, "input") {
        if r.line(section, "function").is_some() {
            return Err(ConfigError {
                line: r.line(section, "function"),
                msg: format!("[{section}] give either `input` or `function`, not both"),
            }
            .into());
        }
        let file = fs::File::open(&path).map_err(|e| ConfigError {
            line: r.line(section, "input"),
            msg: format!("[{section}] input: cannot open {path}: {e}"),
        })?;
        return Ok(GridFunction::read_csv(BufReader::new(file))?);
    }
    let grid = read_grid(r)?;
    let t = r.term(section, "function", "cos")?;
    let u = match t.name.as_str() {
        "cos" => {
            t.expect_args(0)?;
            GridFunction::analytic(grid, "cos", 0.0, f64::cos)?
        }
        "gauss" => {
            t.expect_args(0)?;
            GridFunction::analytic(grid, "gauss", 0.0, |x| (-x * x).exp())?
        }
        "odd_kink" => {
            t.expect_args(0)?;
            odd_kink(grid)?
        }
        "explicit" => {
            t.expect_args(0)?;
            explicit_solution(grid, sigma, gamma)?
        }
        "power" => {
            let a = t.expect_args(2)?;
            let (s, beta) = (a[0], a[1]);
            let ext = ExteriorExtension::power(s, beta).map_err(|e| t.error(e.to_string()))?;
            GridFunction::from_fn(grid, ext, move |x| s * x.abs().powf(beta))?
        }
        other => return Err(t.error(format!("unknown function `{other}`")).into()),
    };
    Ok(u)
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_file(out: &Path, name: &str, body: &str) -> Result<()> {
    let mut f = fs::File::create(out.join(name))?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn run_solve(ini: &Ini, out: &Path) -> Result<Status> {
    let mut r = Resolver::new(ini);
    let grid = read_grid(&mut r)?;
    let (sigma, op) = read_operator(&mut r)?;
    let q = read_quadrature(&mut r)?;
    let gamma = read_gamma(&mut r)?;
    let shift_p = r.number("problem", "p", 0.0, any, "finite")?;
    let ext_term = r.term("problem", "exterior", "zero")?;
    let ext = exterior(&ext_term, sigma, gamma)?;
    ext.check_integrable(grid.radius(), sigma)
        .map_err(|e| ext_term.error(format!("[problem] exterior: {e}")))?;
    let f_term = r.term("problem", "f", "0")?;
    let gradient = match r
        .choice("problem", "gradient", "upwind", &["upwind", "central"])?
        .as_str()
    {
        "central" => GradientEstimate::Central,
        _ => GradientEstimate::Upwind,
    };
    let defaults = SolveConfig::default();
    let epsilon_schedule = r.list("solver", "epsilon", &defaults.epsilon_schedule)?;
    if epsilon_schedule.iter().any(|e| !(*e > 0.0)) || epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ConfigError {
            line: r.line("solver", "epsilon"),
            msg: "[solver] epsilon: schedule must be positive and strictly decreasing".into(),
        }
        .into());
    }
    let cfl_factor = r.number(
        "solver",
        "cfl",
        defaults.cfl_factor,
        |c| c > 0.0 && c < 1.0,
        "in (0, 1)",
    )?;
    let tol_residual = r.number("solver", "tol", defaults.tol_residual, positive, "positive")?;
    let max_iters = r.integer("solver", "max_iters", defaults.max_iters, 1)?;
    let default_sweep = match defaults.sweep {
        Sweep::Jacobi => "jacobi".to_string(),
        Sweep::Sor(w) => format!("sor({w})"),
    };
    let sweep_term = r.term("solver", "sweep", &default_sweep)?;
    let sweep = match sweep_term.name.as_str() {
        "jacobi" => {
            sweep_term.expect_args(0)?;
            Sweep::Jacobi
        }
        "sor" => {
            let w = sweep_term.expect_args(1)?[0];
            if !(w > 0.0 && w < 2.0) {
                return Err(sweep_term
                    .error(format!("relaxation factor {w} must be in (0, 2)"))
                    .into());
            }
            Sweep::Sor(w)
        }
        other => return Err(sweep_term.error(format!("unknown sweep `{other}`")).into()),
    };
    let config = SolveConfig {
        epsilon_schedule,
        cfl_factor,
        tol_residual,
        max_iters,
        sweep,
    };

    let boundary = GridFunction::from_fn(grid, ext.clone(), |x| ext.eval(x))?;
    let exact = if ext_term.name == "explicit" {
        Some(explicit_solution(grid, sigma, gamma)?)
    } else {
        None
    };
    let rhs = match (f_term.name.as_str(), f_term.args.len()) {
        ("explicit", 0) => {
            if op.rows() * op.cols() != 1 {
                return Err(f_term.error("`f = explicit` needs a single-kernel family").into());
            }
            let chk = explicit_residual_check(grid, sigma, gamma, op.get(0, 0).clone())?;
            r.derived("derived.c_star", chk.c_star);
            Source::Constant(-chk.c_star)
        }
        _ => {
            let c = crate::config::parse_number(&f_term.name)
                .filter(|_| f_term.args.is_empty())
                .ok_or_else(|| f_term.error(format!("f must be a number or `explicit`, got `{f_term}`")))?;
            Source::Constant(c)
        }
    };
    let prob = ProblemSpec::new(op, gamma, shift_p, rhs, boundary)?
        .with_gradient(gradient)
        .with_quadrature(q);
    config.validate()?;

    let report = solve_vanishing_viscosity(&prob, &config)?;
    create_out(out)?;
    let mut csv = Vec::new();
    writeln!(csv, "{}", r.header())?;
    report.u.write_csv(&mut csv)?;
    fs::write(out.join("solution.csv"), csv)?;

    let mut kv = String::new();
    let converged = report.converged();
    writeln!(kv, "converged = {converged}").unwrap();
    writeln!(kv, "stages = {}", report.stages.len()).unwrap();
    if let Some(k) = report.failed_stage() {
        writeln!(kv, "failed_stage = {k}").unwrap();
    }
    for (k, s) in report.stages.iter().enumerate() {
        writeln!(kv, "stage.{k}.epsilon = {}", num(s.epsilon)).unwrap();
        writeln!(kv, "stage.{k}.iterations = {}", s.iterations).unwrap();
        writeln!(kv, "stage.{k}.residual = {}", num(s.residual)).unwrap();
        writeln!(kv, "stage.{k}.converged = {}", s.converged).unwrap();
    }
    for (k, d) in report.increments.iter().enumerate() {
        writeln!(kv, "increment.{k} = {}", num(*d)).unwrap();
    }
    if let Some(last) = report.stages.last() {
        writeln!(kv, "final_epsilon = {}", num(last.epsilon)).unwrap();
        writeln!(kv, "final_residual = {}", num(last.residual)).unwrap();
    }
    if let Some(exact) = exact {
        let err = sup_distance(&report.u, &exact, 0.5);
        let scale = grid
            .nodes()
            .zip(exact.values())
            .filter(|(x, _)| x.abs() <= 0.5)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max);
        writeln!(kv, "exact_sup_error_half_ball = {}", num(err)).unwrap();
        writeln!(kv, "exact_relative_error_half_ball = {}", num(err / scale)).unwrap();
    }
    write_file(out, "report.txt", &kv)?;
    print!("{kv}");
    Ok(if converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

pub fn run_eval(ini: &Ini, out: &Path) -> Result<Status> {
    let mut r = Resolver::new(ini);
    let (sigma, op) = read_operator(&mut r)?;
    let q = read_quadrature(&mut r)?;
    let gamma = read_gamma(&mut r)?;
    let name = r.choice(
        "eval",
        "operator",
        "linear",
        &["linear", "isaacs", "pucci_plus", "pucci_minus", "local_limit", "frac_p"],
    )?;
    let single = |op: &IsaacsOperator| -> Result<KernelSpec> {
        if op.rows() * op.cols() != 1 {
            return Err(ConfigError::bare("[eval] operator `linear` needs a single-kernel family").into());
        }
        Ok(op.get(0, 0).clone())
    };
    let kind = match name.as_str() {
        "linear" => OperatorKind::Linear(single(&op)?),
        "isaacs" => OperatorKind::Isaacs(op.clone()),
        "pucci_plus" | "pucci_minus" => OperatorKind::Pucci {
            sign: if name == "pucci_plus" {
                PucciSign::Plus
            } else {
                PucciSign::Minus
            },
            sigma,
            lambda: op.lambda(),
            big_lambda: op.big_lambda(),
        },
        "local_limit" => {
            let m = r.matrix("eval", "multipliers", &[vec![1.0]])?;
            if m.iter().any(|row| row.is_empty() || row.len() != m[0].len()) {
                return Err(ConfigError {
                    line: r.line("eval", "multipliers"),
                    msg: "[eval] multipliers: rows must be nonempty and of equal length".into(),
                }
                .into());
            }
            OperatorKind::LocalLimit(m)
        }
        _ => OperatorKind::FracP {
            sigma,
            p_exp: r.number("eval", "p_exp", 3.0, |p| p > 2.0, "> 2")?,
            r_p: r.number("eval", "r_p", 0.0, |v| v >= 0.0, ">= 0")?,
        },
    };
    let u = read_function(&mut r, "eval", sigma, gamma)?;
    if name != "local_limit" {
        u.exterior()
            .check_integrable(u.grid().radius(), sigma)
            .map_err(|e| ConfigError {
                line: r.line("eval", "function"),
                msg: format!("[eval] function: {e}"),
            })?;
    }
    let rows = eval_sweep(&u, &kind, &q)?;
    create_out(out)?;
    let mut csv = String::new();
    writeln!(csv, "{}", r.header()).unwrap();
    writeln!(csv, "x,value").unwrap();
    for (x, v) in &rows {
        writeln!(csv, "{},{}", num(*x), num(*v)).unwrap();
    }
    write_file(out, "eval.csv", &csv)?;
    println!("evaluated {} nodes", rows.len());
    Ok(Status::Success)
}

pub fn run_probe(ini: &Ini, out: &Path) -> Result<Status> {
    let mut r = Resolver::new(ini);
    let mode = r.choice("probe", "mode", "holder", &["holder", "flatness"])?;
    let center = r.number("probe", "center", 0.0, any, "finite")?;
    let mut csv = String::new();
    let mut kv = String::new();
    let header;
    if mode == "holder" {
        let scales = r.list("probe", "scales", &DEFAULT_SCALES)?;
        let u = probe_function(&mut r)?;
        let rep = fit_holder_exponent(&u, center, &scales)?;
        header = r.header();
        writeln!(csv, "scale,oscillation").unwrap();
        for (s, o) in &rep.scale_table {
            writeln!(csv, "{},{}", num(*s), num(*o)).unwrap();
        }
        writeln!(kv, "fitted_exponent = {}", num(rep.fitted_exponent)).unwrap();
        writeln!(kv, "seminorm_at_fit = {}", num(rep.seminorm_at_fit)).unwrap();
        writeln!(kv, "regression_residual = {}", num(rep.regression_residual)).unwrap();
    } else {
        let rho = r.number("probe", "rho", 0.5, |v| v > 0.0 && v < 1.0, "in (0, 1)")?;
        let depth = r.integer("probe", "depth", 5, 0)?;
        let alpha = r.number("probe", "alpha", 0.3, |v| v >= 0.0, ">= 0")?;
        let c_bound = r.number("probe", "C", 1.0, |v| v >= 0.0, ">= 0")?;
        let u = probe_function(&mut r)?;
        let tr = flatness_trace(&u, center, rho, depth, c_bound, alpha)?;
        header = r.header();
        writeln!(csv, "k,radius,a,p,dev").unwrap();
        for e in &tr.entries {
            writeln!(
                csv,
                "{},{},{},{},{}",
                e.k,
                num(e.radius),
                num(e.a),
                num(e.p),
                num(e.dev)
            )
            .unwrap();
        }
        match tr.slope {
            Some(s) => writeln!(kv, "slope = {}", num(s)).unwrap(),
            None => writeln!(kv, "slope = none").unwrap(),
        }
        writeln!(kv, "passed = {}", tr.passed).unwrap();
        if let Some((k, what)) = tr.violation {
            writeln!(kv, "violation = {what} at k={k}").unwrap();
        }
    }
    create_out(out)?;
    write_file(out, "probe.csv", &format!("{header}\n{csv}"))?;
    write_file(out, "report.txt", &kv)?;
    print!("{kv}");
    Ok(Status::Success)
}

fn probe_function(r: &mut Resolver) -> Result<GridFunction> {
    let sigma = read_sigma(r, "kernel", 1.5)?;
    let gamma = read_gamma(r)?;
    read_function(r, "probe", sigma, gamma)
}

pub fn run_counterexample(ini: &Ini, out: &Path) -> Result<Status> {
    let mut r = Resolver::new(ini);
    let grid = read_grid(&mut r)?;
    let sigma = r.number("counterexample", "sigma", 1.5, |s| s > 1.0 && s < 2.0, "in (1, 2)")?;
    let q = read_quadrature(&mut r)?;
    let side = r.choice("counterexample", "side", "both", &["left", "right", "both"])?;
    let dists = r.list("counterexample", "dists", &BLOWUP_DISTS)?;
    if dists.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(ConfigError {
            line: r.line("counterexample", "dists"),
            msg: "[counterexample] dists: distances must lie in (0, 1)".into(),
        }
        .into());
    }
    let spec = KernelSpec::frac_laplacian(sigma)?;
    let u = odd_kink(grid)?;
    let origin = eval_linear(&u, &spec, 0.0, &q)?;
    let sides: &[(Side, &str)] = match side.as_str() {
        "left" => &[(Side::Left, "left")],
        "right" => &[(Side::Right, "right")],
        _ => &[(Side::Left, "left"), (Side::Right, "right")],
    };
    let mut csv = String::new();
    let mut kv = String::new();
    writeln!(csv, "{}", r.header()).unwrap();
    writeln!(csv, "side,dist,value,closed_form").unwrap();
    writeln!(kv, "sigma = {sigma}").unwrap();
    writeln!(kv, "value_at_origin = {}", num(origin)).unwrap();
    writeln!(kv, "expected_slope = {}", num(1.0 - sigma)).unwrap();
    for &(s, label) in sides {
        let points: Vec<f64> = dists
            .iter()
            .map(|d| if s == Side::Right { 1.0 - d } else { d - 1.0 })
            .collect();
        let prof = blowup_profile(&u, &spec, s, &points, &q)?;
        for &(d, v) in &prof.table {
            let x = if s == Side::Right { 1.0 - d } else { d - 1.0 };
            writeln!(
                csv,
                "{label},{},{},{}",
                num(d),
                num(v),
                num(odd_kink_operator(sigma, x)?)
            )
            .unwrap();
        }
        writeln!(kv, "{label}.slope = {}", num(prof.slope)).unwrap();
        writeln!(kv, "{label}.terminal_slope = {}", num(prof.terminal_slope)).unwrap();
        writeln!(kv, "{label}.regression_residual = {}", num(prof.regression_residual)).unwrap();
        writeln!(kv, "{label}.increment_slope = {}", num(increment_slope(&prof.table)?)).unwrap();
        let sign_ok = prof
            .table
            .iter()
            .all(|&(_, v)| if s == Side::Right { v > 0.0 } else { v < 0.0 });
        writeln!(kv, "{label}.signs_as_expected = {sign_ok}").unwrap();
    }
    create_out(out)?;
    write_file(out, "blowup.csv", &csv)?;
    write_file(out, "report.txt", &kv)?;
    print!("{kv}");
    Ok(Status::Success)
}

pub fn run_validate(cfg: &ValidationConfig, out: &Path) -> Result<Status> {
    cfg.grid()?;
    let outcomes = validation_suite(cfg);
    let mut text = String::new();
    writeln!(
        text,
        "# validate coarsen={} normalization_factor={}",
        cfg.coarsen, cfg.normalization_factor
    )
    .unwrap();
    for o in &outcomes {
        writeln!(text, "{o}").unwrap();
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    writeln!(text, "summary: {} passed, {failed} failed", outcomes.len() - failed).unwrap();
    create_out(out)?;
    write_file(out, "validate.txt", &text)?;
    print!("{text}");
    Ok(if failed == 0 {
        Status::Success
    } else {
        Status::FixtureFailure
    })
}
