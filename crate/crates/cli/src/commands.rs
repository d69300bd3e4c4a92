use std::io::Write;
use std::path::Path;
use std::time::Instant;

use cayley_rd::dynamics::{
    evolve_site_ode, solve_green, step_profile_solution, InitialProfile, ShellSolver,
};
use cayley_rd::lattice::build_tree;
use cayley_rd::spectral::{
    crossover_time, green_chain_log, green_large_time_ln, green_large_xi_ln, mass_horizon,
    shell_mass,
};
use cayley_rd::stochastic::{autonomy_witness, ensemble_mean, EnsembleConfig, InitSpec};
use cayley_rd::{
    Coefficients, Error, GreenEvaluator, GreenValue, RateModel, SpectralParams, Stationary,
};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::exit::{domain, usage, CliResult};
use crate::manifest::SCHEMA_VERSION;
use crate::output::{num, sink, write_json, write_manifest};
use crate::Context;

pub fn load_rates(path: &Path) -> CliResult<RateModel> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    RateModel::from_json_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn coefficients_of(model: &RateModel, tol: Option<f64>) -> CliResult<Coefficients> {
    Ok(model.derive_coefficients_with_tol(tol.unwrap_or(0.0))?)
}

fn times_of(times: &Option<Vec<f64>>) -> CliResult<&[f64]> {
    let t = require(times, "times")?;
    if t.is_empty() || t.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(usage(
            "--times must be a nonempty list of nonnegative numbers",
        ));
    }
    Ok(t)
}

#[derive(Serialize)]
struct ValidationReport {
    schema_version: u32,
    nonnegative: bool,
    symmetric: bool,
    violations: Vec<String>,
    autonomous: bool,
    residual: f64,
    tol: f64,
}

pub fn validate(ctx: &Context, args: &ValidateArgs) -> CliResult<i32> {
    let args = merge_config(args, ctx.config.as_ref(), "validate")?;
    let model = load_rates(require(&args.rates, "rates")?)?;
    let tol = args.tol.unwrap_or(0.0);
    let (nonnegative, violations) = match model.validate_symmetry() {
        Ok(r) => (
            true,
            r.violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>(),
        ),
        Err(e @ (Error::NegativeRate { .. } | Error::NonFiniteRate { .. })) => {
            (false, vec![e.to_string()])
        }
        Err(e) => return Err(e.into()),
    };
    let symmetric = nonnegative && violations.is_empty();
    let residual = model.check_autonomy().residual;
    let report = ValidationReport {
        schema_version: SCHEMA_VERSION,
        nonnegative,
        symmetric,
        violations,
        autonomous: residual.abs() <= tol,
        residual,
        tol,
    };
    if args.json {
        write_json(None, &report)?;
    } else {
        let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
        println!("nonnegative  {}", verdict(report.nonnegative));
        println!("symmetric    {}", verdict(report.symmetric));
        for v in &report.violations {
            println!("  {v}");
        }
        println!(
            "autonomous   {}  residual {}",
            verdict(report.autonomous),
            report.residual
        );
    }
    write_manifest(ctx, "validate", &args, None, None)?;
    Ok(
        if report.nonnegative && report.symmetric && report.autonomous {
            0
        } else {
            1
        },
    )
}

pub fn coefficients(ctx: &Context, args: &CoefficientsArgs) -> CliResult<i32> {
    let args = merge_config(args, ctx.config.as_ref(), "coefficients")?;
    let model = load_rates(require(&args.rates, "rates")?)?;
    let c = coefficients_of(&model, args.tol)?;
    let params = SpectralParams::from_coefficients(&c);
    let stationary = match c.stationary {
        Stationary::Value(v) => json!(v),
        Stationary::Conserved => json!("conserved"),
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "xi": c.xi,
        "alpha": c.alpha,
        "beta": c.beta,
        "gamma": c.gamma,
        "eta": c.eta,
        "stationary_density": stationary,
        "crossover_time": crossover_time(&params).ok(),
    });
    write_json(None, &report)?;
    write_manifest(ctx, "coefficients", &args, None, None)?;
    Ok(0)
}

fn limit_value(
    limit: Limit,
    params: &SpectralParams,
    a: u32,
    b: u32,
    t: f64,
) -> CliResult<GreenValue> {
    let ln_value = match limit {
        Limit::Chain => return Ok(green_chain_log(params.beta, params.gamma, a, b, t)),
        Limit::LargeTime => green_large_time_ln(params, a, b, t)?,
        Limit::LargeXi => green_large_xi_ln(params, a, b, t),
    };
    Ok(GreenValue {
        log_prefactor: ln_value,
        integral: 1.0,
    })
}

#[derive(Serialize)]
struct GreenRecord {
    a: u32,
    b: u32,
    t: f64,
    value: f64,
    log_prefactor: f64,
    integral: f64,
}

pub fn green(ctx: &Context, args: &GreenArgs) -> CliResult<i32> {
    let args = merge_config(args, ctx.config.as_ref(), "green")?;
    let model = load_rates(require(&args.rates, "rates")?)?;
    let c = coefficients_of(&model, args.tol)?;
    let params = SpectralParams::from_coefficients(&c);
    let eval = GreenEvaluator::new(params);
    let (a_max, b_max) = (args.a_max.unwrap_or(10), args.b_max.unwrap_or(10));
    let times = times_of(&args.times)?;
    if args.limit == Some(Limit::Chain) && c.xi != 2 {
        return Err(usage(format!(
            "--limit chain needs xi = 2, the rate file has xi = {}",
            c.xi
        )));
    }
    let mut grids = Vec::with_capacity(times.len());
    for &t in times {
        let grid = match args.limit {
            None => eval.green_matrix(a_max, b_max, t, ctx.exec)?,
            Some(limit) => (0..=a_max)
                .map(|a| {
                    (0..=b_max)
                        .map(|b| limit_value(limit, &params, a, b, t))
                        .collect()
                })
                .collect::<CliResult<Vec<Vec<_>>>>()?,
        };
        grids.push(grid);
    }

    let format = args.format.unwrap_or(Format::Csv);
    let output = args.output.as_deref();
    match format {
        Format::Json => {
            let records: Vec<GreenRecord> = times
                .iter()
                .zip(&grids)
                .flat_map(|(&t, grid)| {
                    grid.iter().enumerate().flat_map(move |(a, row)| {
                        row.iter().enumerate().map(move |(b, g)| GreenRecord {
                            a: a as u32,
                            b: b as u32,
                            t,
                            value: g.value(),
                            log_prefactor: g.log_prefactor,
                            integral: g.integral,
                        })
                    })
                })
                .collect();
            write_json(
                output,
                &json!({"schema_version": SCHEMA_VERSION, "records": records}),
            )?;
        }
        Format::Csv => {
            if let Some(dir) = output {
                std::fs::create_dir_all(dir)?;
            }
            let mut stdout = if output.is_none() {
                Some(sink(None)?)
            } else {
                None
            };
            for (k, (&t, grid)) in times.iter().zip(&grids).enumerate() {
                let mut file;
                let w: &mut dyn Write = match (output, stdout.as_mut()) {
                    (Some(dir), _) => {
                        file = sink(Some(&dir.join(format!("green_t{k:03}.csv"))))?;
                        &mut file
                    }
                    (None, Some(s)) => {
                        writeln!(s, "# t={}", num(t))?;
                        s
                    }
                    (None, None) => unreachable!(),
                };
                write_grid(w, grid, args.log_space)?;
                w.flush()?;
            }
        }
    }

    let mut code = 0;
    if args.check == Some(Check::Conservation) {
        if c.beta != c.gamma {
            return Err(domain(
                "--check conservation applies only to models with beta = gamma",
            ));
        }
        for &t in times {
            let top = mass_horizon(&params, 0, t, 1e-10);
            let dev = (shell_mass(&eval, 0, t, top)? - 1.0).abs();
            eprintln!(
                "conservation t={} shells<={} deviation={}",
                num(t),
                top,
                num(dev)
            );
            if dev > 1e-6 {
                code = 1;
            }
        }
    }
    write_manifest(ctx, "green", &args, None, output)?;
    Ok(code)
}

fn write_grid(w: &mut dyn Write, grid: &[Vec<GreenValue>], log_space: bool) -> CliResult<()> {
    if log_space {
        writeln!(w, "a,b,log_prefactor,integral")?;
        for (a, row) in grid.iter().enumerate() {
            for (b, g) in row.iter().enumerate() {
                writeln!(w, "{a},{b},{},{}", num(g.log_prefactor), num(g.integral))?;
            }
        }
    } else {
        let cols = grid.first().map_or(0, Vec::len);
        let header: Vec<String> = (0..cols).map(|b| format!("b{b}")).collect();
        writeln!(w, "a,{}", header.join(","))?;
        for (a, row) in grid.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|g| num(g.value())).collect();
            writeln!(w, "{a},{}", cells.join(","))?;
        }
    }
    Ok(())
}

pub fn load_profile(path: &Path) -> CliResult<InitialProfile> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    InitialProfile::from_json_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Highest shell on which the profile differs from the reference density.
pub fn support_of(profile: &InitialProfile) -> u32 {
    match profile {
        InitialProfile::Step { step } => step.radius,
        InitialProfile::Shells { values, .. } => values.len().saturating_sub(1) as u32,
    }
}

pub fn evolve(ctx: &Context, args: &EvolveArgs) -> CliResult<i32> {
    let args = merge_config(args, ctx.config.as_ref(), "evolve")?;
    let model = load_rates(require(&args.rates, "rates")?)?;
    let c = coefficients_of(&model, args.tol)?;
    let profile = load_profile(require(&args.init, "init")?)?;
    let field = profile.field(&c);
    let times = times_of(&args.times)?;
    let rho_ref = c.reference_density();
    let offset = if args.dynamic { rho_ref } else { 0.0 };
    let mut shells = args.shells.unwrap_or(support_of(&profile) + 10);
    let solver = args.solver.unwrap_or(Solver::Shell);

    let mut rows: Vec<(f64, u32, f64)> = Vec::new();
    match solver {
        Solver::Shell => {
            let s = ShellSolver {
                a_max: args.a_max,
                ..Default::default()
            };
            for &t in times {
                let out = s.evolve(&c, &field, t)?;
                for a in 0..=shells {
                    rows.push((t, a, out.shell_value(a as usize, rho_ref) - offset));
                }
            }
        }
        Solver::Green => {
            let eval = GreenEvaluator::new(SpectralParams::from_coefficients(&c));
            for &t in times {
                for a in 0..=shells {
                    let rho = match &profile {
                        InitialProfile::Step { step } => {
                            step_profile_solution(&eval, &c, step, a, t)?
                        }
                        InitialProfile::Shells { .. } => solve_green(&eval, &c, &field, a, t)?,
                    };
                    rows.push((t, a, rho - offset));
                }
            }
        }
        Solver::Site => {
            let depth = *require(&args.depth, "depth")?;
            let tree = build_tree(c.xi, depth)?;
            shells = shells.min(depth);
            let init = field.to_sites(&tree, rho_ref);
            for &t in times {
                let out = evolve_site_ode(&model, &tree, &init, t, ctx.exec)?.shell_means(&tree);
                for a in 0..=shells {
                    rows.push((t, a, out.values[a as usize] - offset));
                }
            }
        }
    }

    let output = args.output.as_deref();
    let mut w = sink(output)?;
    writeln!(w, "t,a,{}", if args.dynamic { "rho_dy" } else { "rho" })?;
    for (t, a, rho) in rows {
        writeln!(w, "{},{a},{}", num(t), num(rho))?;
    }
    w.flush()?;
    drop(w);
    write_manifest(ctx, "evolve", &args, None, output)?;
    Ok(0)
}

pub fn model_with_xi(args_xi: Option<u32>, model: RateModel) -> CliResult<RateModel> {
    Ok(match args_xi {
        Some(xi) => model.with_xi(xi)?,
        None => model,
    })
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> CliResult<i32> {
    let args = merge_config(args, ctx.config.as_ref(), "simulate")?;
    let model = model_with_xi(args.xi, load_rates(require(&args.rates, "rates")?)?)?;
    let tree = build_tree(model.xi(), *require(&args.depth, "depth")?)?;
    let init = InitSpec::parse(args.init.as_deref().unwrap_or("empty"), tree.sites())?;
    let runs = args.runs.unwrap_or(1000);
    let seed = args.seed.unwrap_or(0);
    let times = times_of(&args.times)?.to_vec();
    let config = EnsembleConfig {
        runs,
        master_seed: seed,
        t_samples: times,
        tree,
    };
    let start = Instant::now();
    let result = ensemble_mean(&model, &config, &init, ctx.exec)?;
    let elapsed = start.elapsed().as_secs_f64();

    let output = args.output.as_deref();
    let mut w = sink(output)?;
    writeln!(w, "t,site,shell,mean,stderr")?;
    for (k, &t) in result.times.iter().enumerate() {
        for i in 0..config.tree.sites() {
            writeln!(
                w,
                "{},{i},{},{},{}",
                num(t),
                config.tree.shell_of(i),
                num(result.mean[k][i]),
                num(result.stderr[k][i])
            )?;
        }
    }
    w.flush()?;
    drop(w);

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "runs": runs,
        "seed": seed,
        "sites": config.tree.sites(),
        "events": result.events,
        "elapsed_seconds": elapsed,
        "events_per_second": if elapsed > 0.0 { result.events as f64 / elapsed } else { 0.0 },
    });
    match output {
        Some(p) => {
            let mut name = p.as_os_str().to_owned();
            name.push(".summary.json");
            write_json(Some(Path::new(&name)), &summary)?;
        }
        None => eprintln!("{summary}"),
    }
    write_manifest(ctx, "simulate", &args, Some(seed), output)?;
    Ok(0)
}

pub fn oracle(ctx: &Context, args: &OracleArgs) -> CliResult<i32> {
    let args = merge_config(args, ctx.config.as_ref(), "oracle")?;
    let model = model_with_xi(args.xi, load_rates(require(&args.rates, "rates")?)?)?;
    let tree = build_tree(model.xi(), args.depth.unwrap_or(2))?;
    let t = args.t.unwrap_or(1.0);
    let tol = args.tol.unwrap_or(1e-6);
    let w = autonomy_witness(&model, &tree, t)?;
    let pass = w.max_gap <= tol;
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "sites": tree.sites(),
        "t": t,
        "autonomy_residual": model.check_autonomy().residual,
        "max_gap": w.max_gap,
        "gap_site": w.site,
        "gap_time": w.time,
        "tol": tol,
        "pass": pass,
    });
    write_json(args.output.as_deref(), &report)?;
    write_manifest(ctx, "oracle", &args, None, args.output.as_deref())?;
    Ok(if pass { 0 } else { 1 })
}

pub fn asymptotics(ctx: &Context, args: &AsymptoticsArgs) -> CliResult<i32> {
    let args = merge_config(args, ctx.config.as_ref(), "asymptotics")?;
    let model = load_rates(require(&args.rates, "rates")?)?;
    let c = coefficients_of(&model, args.tol)?;
    let params = SpectralParams::from_coefficients(&c);
    let eval = GreenEvaluator::new(params);
    let (a, b) = (args.a.unwrap_or(0), args.b.unwrap_or(0));
    let times = times_of(&args.times)?;
    if let Ok(tc) = crossover_time(&params) {
        eprintln!("crossover_time={}", num(tc));
    }
    let output = args.output.as_deref();
    let mut w = sink(output)?;
    writeln!(
        w,
        "t,ln_green,ln_large_time,ln_large_xi,ratio_large_time,ratio_large_xi"
    )?;
    for &t in times {
        let g = eval.green_log(a, b, t)?.ln_abs();
        let lt = green_large_time_ln(&params, a, b, t)?;
        let lx = green_large_xi_ln(&params, a, b, t);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            num(t),
            num(g),
            num(lt),
            num(lx),
            num((g - lt).exp()),
            num((g - lx).exp())
        )?;
    }
    w.flush()?;
    drop(w);
    write_manifest(ctx, "asymptotics", &args, None, output)?;
    Ok(0)
}
