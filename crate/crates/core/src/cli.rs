//! Command-line runner: `nmpl <command> <config> [--out DIR] [--seed N] [--threads K]`.
//!
//! Exit codes: 0 when every check passes, 2 when a check fails or a
//! numerical routine aborts, 1 on usage or configuration errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::barriers::{
    derivative_convergence_order, verify_component_lemmas, verify_exp_inequality, verify_exp_scalar, verify_nl_estimate, BoundReport,
    HorizontalBarrier, VerticalBarrier,
};
use crate::config::{require, ExpectedVerdict, ExperimentConfig};
use crate::diagnostics::{
    nondegeneracy_probe, scaling_check, vertical_nondegeneracy_check, ProbeConfig, ScalingConfig, ScalingDefect, Verdict,
};
use crate::error::Error;
use crate::expr::Expr;
use crate::field::{Analytic, Grid, GridField};
use crate::measures::{geometric_grid, mc_scaling_probe, measure_bound, BoundStatus};
use crate::output::{num, Check, OutDir};
use crate::quadrature::QuadratureConfig;
use crate::reachability::{covers_domain, iterate_reachable, MeasureFamily, ReachConfig};
use crate::scheme::{discrete_comparison_check, simulate, stability_dt, SchemeConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    CheckMeasure,
    Reachability,
    VerifyBarrier,
    VerifyAppendix,
    ProbeNondegeneracy,
    CheckScaling,
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::CheckMeasure => "check-measure",
            Command::Reachability => "reachability",
            Command::VerifyBarrier => "verify-barrier",
            Command::VerifyAppendix => "verify-appendix",
            Command::ProbeNondegeneracy => "probe-nondegeneracy",
            Command::CheckScaling => "check-scaling",
            Command::Compare => "compare",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nmpl", version, about = "Numerical checks of maximum principles for parabolic integro-differential equations")]
struct Args {
    command: Command,
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// RNG seed; overrides `seed` in the config (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to `NMPL_THREADS`, then to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

/// Why a run stopped early.
#[derive(Debug)]
enum Failure {
    /// Bad usage or configuration (exit 1).
    Config(String),
    /// A numerical routine failed while computing the named check (exit 2).
    Numeric { check: String, message: String },
}

type Run<T> = std::result::Result<T, Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn numeric(check: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Numeric { check: check.to_string(), message: e.to_string() }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = args.threads.or_else(|| std::env::var("NMPL_THREADS").ok().and_then(|v| v.trim().parse().ok()));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            eprintln!("error: thread count must be positive");
            return 1;
        }
        builder = builder.num_threads(k);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    pool.install(|| run_parsed(&args))
}

fn run_parsed(args: &Args) -> i32 {
    let cfg = match ExperimentConfig::from_path(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Some(c) = &cfg.command {
        if c != args.command.name() {
            eprintln!("error: config is for `{c}` but `{}` was requested", args.command.name());
            return 1;
        }
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let out = match OutDir::create(&args.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    let result = match args.command {
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::CheckMeasure => cmd_check_measure(&cfg, &out),
        Command::Reachability => cmd_reachability(&cfg, &out),
        Command::VerifyBarrier => cmd_verify_barrier(&cfg, &out, seed),
        Command::VerifyAppendix => cmd_verify_appendix(&cfg, &out, seed),
        Command::ProbeNondegeneracy => cmd_probe(&cfg, &out, seed),
        Command::CheckScaling => cmd_scaling(&cfg, &out, seed),
        Command::Compare => cmd_compare(&cfg, &out),
    };
    let checks = match result {
        Ok(c) => c,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            return 1;
        }
        Err(Failure::Numeric { check, message }) => {
            eprintln!("check `{check}` failed: {message}");
            let row = Check::text(check, "NaN", format!("error: {message}"), false);
            if let Err(e) = out.write_summary(seed, &[row]) {
                eprintln!("error: {e:#}");
            }
            return 2;
        }
    };
    if let Err(e) = out.write_summary(seed, &checks) {
        eprintln!("error: {e:#}");
        return 1;
    }
    for c in &checks {
        println!("{:<32} {:>24}  {:<24} {}", c.name, c.value, c.threshold, if c.pass { "pass" } else { "FAIL" });
    }
    if checks.iter().all(|c| c.pass) {
        0
    } else {
        2
    }
}

fn write(out: &OutDir, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Run<()> {
    out.write_csv(name, header, rows).map_err(|e| Failure::Config(format!("{e:#}")))
}

fn coord_header(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("x{k}")).collect()
}

fn scheme_config(cfg: &ExperimentConfig, initial: GridField<f64>) -> Run<SchemeConfig<f64>> {
    let g = cfg.grid().map_err(config_err)?;
    let mut c = SchemeConfig::new(initial, cfg.nonlinearity().map_err(config_err)?, cfg.measure().map_err(config_err)?, g.t_end);
    c.dt = g.dt;
    c.stride = g.stride;
    Ok(c)
}

fn trajectory_rows(tr: &Trajectory<f64>) -> Vec<Vec<String>> {
    tr.records.iter().map(|r| vec![r.step.to_string(), num(r.t), num(r.max), r.argmax.to_string(), num(r.min)]).collect()
}

fn snapshot_rows(tr: &Trajectory<f64>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (step, u) in &tr.snapshots {
        for (i, &v) in u.values().iter().enumerate() {
            let mut r = vec![step.to_string(), num(u.time()), i.to_string()];
            r.extend(u.grid().node(i).into_iter().map(num));
            r.push(num(v));
            rows.push(r);
        }
    }
    rows
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &OutDir) -> Run<Vec<Check>> {
    let g = cfg.grid().map_err(config_err)?;
    g.validate().map_err(config_err)?;
    let c = scheme_config(cfg, g.initial().map_err(config_err)?)?;
    let bound = stability_dt(&c).map_err(numeric("stability_dt"))?;
    let tr = simulate(&c).map_err(numeric("simulate"))?;
    let n = c.initial.grid().dim();
    write(out, "trajectory.csv", &["step", "t", "max", "argmax", "min"], trajectory_rows(&tr))?;
    let mut header: Vec<String> = vec!["step".into(), "t".into(), "cell".into()];
    header.extend(coord_header(n));
    header.push("value".into());
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write(out, "snapshots.csv", &h, snapshot_rows(&tr))?;

    let mut checks =
        vec![if tr.horizon_limited { Check::new("dt", tr.dt, "inf (horizon-limited)", true) } else { Check::at_most("dt", tr.dt, bound) }];
    if c.initial.grid().is_periodic() {
        // Every catalogue form has F(x, t, 0, 0, 0) = 0, so the discrete
        // maximum cannot rise without exterior data.
        let max0 = tr.records[0].max;
        let rise = tr.records.windows(2).map(|w| w[1].max - w[0].max).fold(0.0f64, f64::max);
        checks.push(Check::at_most("max_rise", rise, 1e-12 * max0.abs().max(1.0)));
    }
    let last = tr.records.last().expect("trajectory has records");
    checks.push(Check::new("final_max", last.max, "-", true));
    checks.push(Check::new("steps", last.step as f64, "-", true));
    Ok(checks)
}

fn origin_or_probe(cfg: &ExperimentConfig, dim: usize) -> Run<Vec<f64>> {
    match &cfg.probe {
        Some(p) if p.xbar.len() != dim => Err(Failure::Config(format!("probe.xbar has {} coordinates, measure has {dim}", p.xbar.len()))),
        Some(p) => Ok(p.xbar.clone()),
        None => Ok(vec![0.0; dim]),
    }
}

fn cmd_check_measure(cfg: &ExperimentConfig, out: &OutDir) -> Run<Vec<Check>> {
    let m = cfg.measure().map_err(config_err)?;
    let x = origin_or_probe(cfg, m.dim())?;
    let q = QuadratureConfig::default();
    let b = measure_bound(&m, &x, &q).map_err(numeric("C_mu_tilde"))?;
    let mut checks = vec![
        Check::new("near_second_moment", b.near_second_moment.value, "finite", b.near_second_moment.value.is_finite()),
        Check::new("tail_mass", b.tail_mass.value, "finite", b.tail_mass.value.is_finite()),
        Check::new("C_mu_tilde", b.c_tilde, "finite", b.c_tilde.is_finite()),
        Check::text("condition_M", if b.status == BoundStatus::Holds { "holds" } else { "not-applicable" }, "holds", b.passes()),
    ];
    if let Some(p) = &cfg.probe {
        let gammas = geometric_grid(p.gamma_min, p.gamma_max, p.gamma_count);
        let mut dir = vec![0.0; m.dim()];
        dir[0] = p.r;
        let fit = mc_scaling_probe(&m, &x, &dir, p.eta, &gammas, &q).map_err(numeric("mc_exponent"))?;
        write(
            out,
            "mc_scaling.csv",
            &["gamma", "cone_mass"],
            fit.gammas.iter().zip(&fit.masses).map(|(&g, &v)| vec![num(g), num(v)]).collect(),
        )?;
        let tol = 0.05;
        checks.push(Check::new(
            "mc_exponent",
            fit.slope,
            format!("{} +- {}", num(fit.expected_slope), num(tol)),
            (fit.slope - fit.expected_slope).abs() <= tol,
        ));
    }
    Ok(checks)
}

/// Node nearest to `x`.
fn nearest_cell(grid: &Grid<f64>, x: &[f64]) -> Run<Vec<usize>> {
    if x.len() != grid.dim() {
        return Err(Failure::Config(format!("reachability.seed has {} coordinates, grid has {}", x.len(), grid.dim())));
    }
    (0..grid.dim())
        .map(|a| {
            let c = grid.cells()[a];
            (0..c)
                .min_by(|&i, &j| {
                    let di = (grid.coord(a, i as isize) - x[a]).abs();
                    let dj = (grid.coord(a, j as isize) - x[a]).abs();
                    di.total_cmp(&dj)
                })
                .ok_or_else(|| Failure::Config("empty grid".into()))
        })
        .collect()
}

fn cmd_reachability(cfg: &ExperimentConfig, out: &OutDir) -> Run<Vec<Check>> {
    let m = cfg.measure().map_err(config_err)?;
    let grid = cfg.grid().map_err(config_err)?.grid().map_err(config_err)?;
    let r = require(&cfg.reachability, "reachability").map_err(config_err)?;
    let seed = nearest_cell(&grid, &r.seed)?;
    let res = iterate_reachable(&MeasureFamily::Constant(m), &seed, &grid, None, r.max_iter, &ReachConfig::default())
        .map_err(numeric("reachability"))?;
    let omega = vec![true; grid.len()];
    let (covered, _) = covers_domain(&res, &omega).map_err(numeric("covers_domain"))?;
    let mut header: Vec<String> = vec!["cell".into()];
    header.extend(coord_header(grid.dim()));
    header.extend(["reached".into(), "first_reach".into()]);
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..grid.len())
        .map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(grid.node(i).into_iter().map(num));
            row.push(res.mask[i].to_string());
            row.push(res.first_reach[i].map(|k| k.to_string()).unwrap_or_default());
            row
        })
        .collect();
    write(out, "mask.csv", &h, rows)?;
    Ok(vec![
        Check::new("reached_cells", res.count() as f64, num(grid.len() as f64), true),
        Check::text("converged", res.converged.to_string(), "true", res.converged),
        Check::text("covers_domain", covered.to_string(), r.expect_cover.to_string(), covered == r.expect_cover),
    ])
}

fn bound_rows(rep: &BoundReport<f64>, rows: &mut Vec<Vec<String>>) {
    for s in &rep.samples {
        let x = s.x.iter().map(|&v| num(v)).collect::<Vec<_>>().join(" ");
        rows.push(vec![rep.name.to_string(), num(rep.gamma), x, num(s.t), num(s.lhs), num(s.rhs), num(s.margin), num(s.tolerance)]);
    }
}

fn cmd_verify_barrier(cfg: &ExperimentConfig, out: &OutDir, seed: u64) -> Run<Vec<Check>> {
    let m = cfg.measure().map_err(config_err)?;
    let bt = require(&cfg.barrier, "barrier").map_err(config_err)?;
    if bt.xbar.len() != m.dim() {
        return Err(Failure::Config(format!("barrier.xbar has {} coordinates, measure has {}", bt.xbar.len(), m.dim())));
    }
    let base = HorizontalBarrier::new(bt.xbar.clone(), bt.t0, bt.r, bt.lambda, 1.0).map_err(config_err)?;
    let g0 = base.gamma0(bt.eta);
    let c = bt.c.unwrap_or_else(|| base.default_c(bt.eta));
    let q = QuadratureConfig::default();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for &k in &bt.gamma_multipliers {
        let b = base.with_gamma(k * g0).map_err(config_err)?;
        let samples = b.sample_region(bt.samples, seed);
        let tag = format!("g{k}");
        let nl = verify_nl_estimate(&b, &m, bt.eta, c, &samples, &q).map_err(numeric("nl_estimate"))?;
        checks.push(Check::at_least(format!("nl_estimate_{tag}"), nl.worst_slack(), 0.0));
        bound_rows(&nl, &mut rows);
        for rep in verify_component_lemmas(&b, &m, bt.eta, &samples, &q).map_err(numeric("component_lemmas"))? {
            checks.push(Check::at_least(format!("{}_{tag}", rep.name), rep.worst_slack(), 0.0));
            bound_rows(&rep, &mut rows);
        }
    }
    write(out, "barrier_samples.csv", &["check", "gamma", "x", "t", "lhs", "rhs", "margin", "tolerance"], rows)?;

    let hb = base.with_gamma(g0).map_err(config_err)?;
    let vb = VerticalBarrier::new(bt.xbar.clone(), bt.t0, bt.lambda).map_err(config_err)?;
    let points = hb.sample_region(bt.derivative_points, seed.wrapping_add(1));
    let (mut oh, mut ov) = (f64::INFINITY, f64::INFINITY);
    let mut drows = Vec::new();
    for (x, t) in &points {
        let a = derivative_convergence_order(&hb, x, *t, bt.derivative_step);
        let b = derivative_convergence_order(&vb, x, *t, bt.derivative_step);
        oh = oh.min(a.min());
        ov = ov.min(b.min());
        drows.push(vec![num(*t), num(a.vt), num(a.dv), num(a.d2v), num(b.vt), num(b.dv), num(b.d2v)]);
    }
    write(
        out,
        "derivative_orders.csv",
        &["t", "horizontal_vt", "horizontal_dv", "horizontal_d2v", "vertical_vt", "vertical_dv", "vertical_d2v"],
        drows,
    )?;
    checks.push(Check::at_least("derivative_order_horizontal", oh, 1.9));
    checks.push(Check::at_least("derivative_order_vertical", ov, 1.9));
    Ok(checks)
}

fn cmd_verify_appendix(cfg: &ExperimentConfig, out: &OutDir, seed: u64) -> Run<Vec<Check>> {
    use rand::{Rng, SeedableRng};
    let at = require(&cfg.appendix, "appendix").map_err(config_err)?;
    let mut checks = Vec::new();
    for &db in &at.delta_bars {
        let (worst, _) = verify_exp_scalar(db, at.y_max, at.scalar_points).map_err(config_err)?;
        checks.push(Check::at_least(format!("exp_scalar_delta{db}"), worst, -1e-12));
    }
    if at.phi.is_empty() {
        return Ok(checks);
    }
    let m = cfg.measure().map_err(config_err)?;
    let n = m.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..at.points).map(|_| (0..n).map(|_| rng.gen_range(-at.x_range..=at.x_range)).collect()).collect();
    let q = QuadratureConfig::default();
    let mut rows = Vec::new();
    for (k, src) in at.phi.iter().enumerate() {
        let phi = Analytic::from_expr(Expr::parse(src).map_err(config_err)?, n);
        for &db in &at.delta_bars {
            let name = format!("exp_functional_phi{k}_delta{db}");
            let samples = verify_exp_inequality(&phi, &m, at.t, db, &xs, &q).map_err(numeric(&name))?;
            let slack = samples.iter().map(|s| s.margin() + s.tolerance()).fold(f64::INFINITY, f64::min);
            checks.push(Check::at_least(name, slack, 0.0));
            for s in &samples {
                let x = s.x.iter().map(|&v| num(v)).collect::<Vec<_>>().join(" ");
                rows.push(vec![k.to_string(), num(db), x, num(s.lhs.value), num(s.rhs.value), num(s.margin()), num(s.tolerance())]);
            }
        }
    }
    write(out, "appendix_samples.csv", &["phi", "delta_bar", "x", "lhs", "rhs", "margin", "tolerance"], rows)?;
    Ok(checks)
}

fn cmd_probe(cfg: &ExperimentConfig, out: &OutDir, seed: u64) -> Run<Vec<Check>> {
    let f = cfg.nonlinearity().map_err(config_err)?;
    let m = cfg.measure().map_err(config_err)?;
    let p = require(&cfg.probe, "probe").map_err(config_err)?;
    let pc = ProbeConfig {
        xbar: p.xbar.clone(),
        t0: p.t0,
        r: p.r,
        eta: p.eta,
        c: p.c,
        gammas: geometric_grid(p.gamma_min, p.gamma_max, p.gamma_count),
        samples: p.samples,
        seed,
        quad: QuadratureConfig::default(),
    };
    let rep = nondegeneracy_probe(&f, &m, &pc).map_err(|e| match e {
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => config_err(e),
        e => numeric("nondegeneracy")(e),
    })?;
    write(
        out,
        "probe.csv",
        &["gamma", "worst", "growth"],
        (0..rep.gammas.len()).map(|j| vec![num(rep.gammas[j]), num(rep.worst[j]), num(rep.growth[j])]).collect(),
    )?;
    let expected = match p.expect {
        ExpectedVerdict::Diverges => Verdict::Diverges,
        ExpectedVerdict::Bounded => Verdict::Bounded,
    };
    let mut checks = vec![
        Check::text("nondegeneracy_verdict", rep.verdict.as_str(), expected.as_str(), rep.verdict == expected),
        Check::text("monotone_in_l", rep.monotone_in_l.to_string(), "true", rep.monotone_in_l),
    ];
    let exponent = rep.exponent.unwrap_or(f64::NAN);
    match p.expect_exponent {
        Some(e) => checks.push(Check::new(
            "growth_exponent",
            exponent,
            format!("{} +- {}", num(e), num(p.exponent_tol)),
            (exponent - e).abs() <= p.exponent_tol,
        )),
        None => checks.push(Check::new("growth_exponent", exponent, "-", true)),
    }
    let count = p.lambda_count.max(2);
    let lambdas: Vec<f64> = (0..count).map(|k| p.lambda_min + (p.lambda_max - p.lambda_min) * k as f64 / (count - 1) as f64).collect();
    let v = vertical_nondegeneracy_check(&f, &m, &p.xbar, p.t0, &lambdas, &pc.quad).map_err(numeric("vertical"))?;
    write(out, "vertical.csv", &["lambda", "value"], v.values.iter().map(|&(l, x)| vec![num(l), num(x)]).collect())?;
    checks.push(Check::new("vertical_smallest_lambda", v.smallest_passing.unwrap_or(f64::NAN), "exists", v.smallest_passing.is_some()));
    Ok(checks)
}

fn cmd_scaling(cfg: &ExperimentConfig, out: &OutDir, seed: u64) -> Run<Vec<Check>> {
    let f = cfg.nonlinearity().map_err(config_err)?;
    let st = require(&cfg.scaling, "scaling").map_err(config_err)?;
    let mut sc = ScalingConfig::new(st.dim, st.samples, seed);
    sc.eps = geometric_grid(st.eps_min, st.eps_max, st.eps_count);
    let rep = scaling_check(&f, &sc).map_err(config_err)?;
    let row = |name: &str, d: &ScalingDefect<f64>| {
        vec![
            name.to_string(),
            num(d.literal),
            num(d.linearized_coarse),
            num(d.linearized_fine),
            d.literal_passes().to_string(),
            d.linearized_passes().to_string(),
        ]
    };
    write(
        out,
        "scaling.csv",
        &["condition", "literal", "linearized_1e-6", "linearized_1e-8", "literal_passes", "linearized_passes"],
        vec![row("S", &rep.s), row("S_prime", &rep.s_prime)],
    )?;
    Ok(vec![
        Check::new("S", rep.s.violation(), "literal or linearized", rep.s.passes()),
        Check::new("S_prime", rep.s_prime.violation(), "literal or linearized", rep.s_prime.passes()),
    ])
}

fn cmd_compare(cfg: &ExperimentConfig, out: &OutDir) -> Run<Vec<Check>> {
    let g = cfg.grid().map_err(config_err)?;
    g.validate().map_err(config_err)?;
    let mut cu = scheme_config(cfg, g.initial().map_err(config_err)?)?;
    let mut cv = scheme_config(cfg, g.initial_v().map_err(config_err)?)?;
    let dt = match g.dt {
        Some(dt) => dt,
        None => {
            let a = stability_dt(&cu).map_err(numeric("stability_dt"))?;
            let b = stability_dt(&cv).map_err(numeric("stability_dt"))?;
            a.min(b).min(g.t_end - g.t0)
        }
    };
    for c in [&mut cu, &mut cv] {
        c.dt = Some(dt);
        c.stride = 1;
    }
    let tu = simulate(&cu).map_err(numeric("simulate_u"))?;
    let tv = simulate(&cv).map_err(numeric("simulate_v"))?;
    let rep = discrete_comparison_check(&tu, &tv).map_err(numeric("comparison"))?;
    write(out, "comparison.csv", &["step", "max_diff"], rep.max_diff.iter().map(|&(s, d)| vec![s.to_string(), num(d)]).collect())?;
    let scale = tu.records[0].max.abs().max(tv.records[0].max.abs()).max(1.0);
    Ok(vec![Check::at_most("comparison_violation", rep.violation, 1e-12 * scale)])
}
