//! Solver cross-checks driven by a scenario file.

use std::collections::BTreeMap;
use std::io::Write;

use cayley_rd::dynamics::{
    boundary_influence_bound, evolve_site_ode, solve_green, step_profile_solution, InitialProfile,
    ShellSolver,
};
use cayley_rd::lattice::build_tree;
use cayley_rd::stochastic::{ensemble_mean, EnsembleConfig, InitSpec};
use cayley_rd::{GreenEvaluator, SpectralParams};
use serde::{Deserialize, Serialize};

use crate::args::{merge_config, require, CompareArgs};
use crate::commands::{coefficients_of, load_rates, support_of};
use crate::exit::{domain, usage, CliResult};
use crate::manifest::SCHEMA_VERSION;
use crate::output::{num, sink, write_json, write_manifest};
use crate::Context;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Green,
    Shell,
    Site,
    Ensemble,
}

impl Method {
    fn is_spectral(self) -> bool {
        matches!(self, Method::Green | Method::Shell)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub init: InitialProfile,
    pub times: Vec<f64>,
    pub solvers: Vec<Method>,
    /// Depth of the finite tree used by `site` and `ensemble`.
    #[serde(default = "default_depth")]
    pub depth: u32,
    /// Shells `0..=shells` are compared.
    #[serde(default = "default_shells")]
    pub shells: u32,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_depth() -> u32 {
    10
}
fn default_shells() -> u32 {
    4
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_runs() -> u64 {
    10_000
}

#[derive(Debug, Serialize)]
pub struct Row {
    pub scenario: String,
    pub pair: String,
    /// Largest absolute deviation, or for ensembles the largest deviation in
    /// standard errors.
    pub deviation: f64,
    pub tolerance: f64,
    pub status: &'static str,
    pub note: String,
}

/// Per-shell values, `values[k][a]` at `times[k]`.
type Table = Vec<Vec<f64>>;

fn max_diff(x: &Table, y: &Table) -> f64 {
    x.iter()
        .zip(y)
        .flat_map(|(u, v)| u.iter().zip(v).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

fn run_scenario(
    ctx: &Context,
    model: &cayley_rd::RateModel,
    tol: Option<f64>,
    s: &Scenario,
) -> CliResult<Vec<Row>> {
    let c = coefficients_of(model, tol)?;
    let field = s.init.field(&c);
    let rho_ref = c.reference_density();
    let eval = GreenEvaluator::new(SpectralParams::from_coefficients(&c));
    let support = support_of(&s.init);
    if s.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(usage(format!(
            "scenario {}: times must be nonnegative",
            s.name
        )));
    }
    let mut solvers = s.solvers.clone();
    solvers.sort();
    solvers.dedup();
    let needs_tree = solvers.iter().any(|m| !m.is_spectral());
    if needs_tree && s.shells > s.depth {
        return Err(usage(format!(
            "scenario {}: shells exceed the tree depth",
            s.name
        )));
    }

    let mut tables: BTreeMap<Method, Table> = BTreeMap::new();
    let mut site_values: Option<Vec<Vec<f64>>> = None;
    let tree = if needs_tree {
        Some(build_tree(c.xi, s.depth)?)
    } else {
        None
    };
    for &m in &solvers {
        let mut table = Vec::new();
        match m {
            Method::Green => {
                for &t in &s.times {
                    let row = (0..=s.shells)
                        .map(|a| match &s.init {
                            InitialProfile::Step { step } => {
                                step_profile_solution(&eval, &c, step, a, t)
                            }
                            InitialProfile::Shells { .. } => solve_green(&eval, &c, &field, a, t),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    table.push(row);
                }
            }
            Method::Shell => {
                for &t in &s.times {
                    let out = ShellSolver::default().evolve(&c, &field, t)?;
                    table.push(
                        (0..=s.shells)
                            .map(|a| out.shell_value(a as usize, rho_ref))
                            .collect(),
                    );
                }
            }
            Method::Site | Method::Ensemble => {
                if site_values.is_none() {
                    let tree = tree.as_ref().unwrap();
                    let init = field.to_sites(tree, rho_ref);
                    let mut per_time = Vec::new();
                    for &t in &s.times {
                        per_time.push(evolve_site_ode(model, tree, &init, t, ctx.exec)?.values);
                    }
                    site_values = Some(per_time);
                }
                if m == Method::Site {
                    let tree = tree.as_ref().unwrap();
                    for v in site_values.as_ref().unwrap() {
                        let means = cayley_rd::DensityField::per_site(v.clone()).shell_means(tree);
                        table.push(means.values[..=s.shells as usize].to_vec());
                    }
                }
            }
        }
        tables.insert(m, table);
    }

    let mut rows = Vec::new();
    for (i, &x) in solvers.iter().enumerate() {
        for &y in &solvers[i + 1..] {
            if x == Method::Ensemble || y == Method::Ensemble {
                continue;
            }
            let pair = format!("{}-{}", name(x), name(y));
            if x.is_spectral() != y.is_spectral() {
                let worst = s
                    .times
                    .iter()
                    .map(|&t| boundary_influence_bound(&c, s.depth, s.shells, support, t))
                    .fold(0.0, f64::max);
                if worst > 0.1 * s.tolerance {
                    rows.push(Row {
                        scenario: s.name.clone(),
                        pair,
                        deviation: f64::NAN,
                        tolerance: s.tolerance,
                        status: "refused",
                        note: format!(
                            "tree boundary is reachable: influence bound {worst:.3e} exceeds a tenth of the tolerance; increase depth"
                        ),
                    });
                    continue;
                }
            }
            let d = max_diff(&tables[&x], &tables[&y]);
            rows.push(Row {
                scenario: s.name.clone(),
                pair,
                deviation: d,
                tolerance: s.tolerance,
                status: if d <= s.tolerance { "pass" } else { "fail" },
                note: String::new(),
            });
        }
    }

    if solvers.contains(&Method::Ensemble) {
        let tree = tree.unwrap();
        let probs: Vec<f64> = (0..=s.depth)
            .map(|a| field.shell_value(a as usize, rho_ref))
            .collect();
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(domain(format!(
                "scenario {}: densities outside [0, 1] cannot seed an ensemble",
                s.name
            )));
        }
        let config = EnsembleConfig {
            runs: s.runs,
            master_seed: s.seed,
            t_samples: s.times.clone(),
            tree,
        };
        let mut order: Vec<usize> = (0..s.times.len()).collect();
        order.sort_by(|&i, &j| s.times[i].total_cmp(&s.times[j]));
        let sorted = EnsembleConfig {
            t_samples: order.iter().map(|&k| s.times[k]).collect(),
            ..config
        };
        let e = ensemble_mean(model, &sorted, &InitSpec::ShellBernoulli(probs), ctx.exec)?;
        let exact = site_values.as_ref().unwrap();
        let (mut inside, mut total, mut worst) = (0usize, 0usize, 0.0f64);
        for (k, &orig) in order.iter().enumerate() {
            for (i, &want) in exact[orig].iter().enumerate() {
                let (m, mut se) = (e.mean[k][i], e.stderr[k][i]);
                if se == 0.0 {
                    // every run agreed; judge by the spread the exact mean implies
                    se = (want * (1.0 - want) / s.runs as f64).max(0.0).sqrt();
                }
                let dev = (m - want).abs();
                let z = if se > 0.0 {
                    dev / se
                } else if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
                total += 1;
                inside += (z <= 3.0) as usize;
            }
        }
        let fraction = inside as f64 / total as f64;
        rows.push(Row {
            scenario: s.name.clone(),
            pair: "site-ensemble".into(),
            deviation: worst,
            tolerance: 3.0,
            status: if fraction >= 0.99 { "pass" } else { "fail" },
            note: format!("{inside}/{total} site means within 3 standard errors"),
        });
    }
    Ok(rows)
}

fn name(m: Method) -> &'static str {
    match m {
        Method::Green => "green",
        Method::Shell => "shell",
        Method::Site => "site",
        Method::Ensemble => "ensemble",
    }
}

pub fn compare(ctx: &Context, args: &CompareArgs) -> CliResult<i32> {
    let args = merge_config(args, ctx.config.as_ref(), "compare")?;
    let model = load_rates(require(&args.rates, "rates")?)?;
    let path = require(&args.scenario, "scenario")?;
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let file: ScenarioFile =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for s in &file.scenarios {
        rows.extend(run_scenario(ctx, &model, args.tol, s)?);
    }
    let pass = rows.iter().all(|r| r.status == "pass");
    let output = args.output.as_deref();
    if args.json {
        write_json(
            output,
            &serde_json::json!({"schema_version": SCHEMA_VERSION, "pass": pass, "rows": rows}),
        )?;
    } else {
        let mut w = sink(output)?;
        writeln!(w, "scenario,pair,deviation,tolerance,status,note")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.scenario,
                r.pair,
                num(r.deviation),
                num(r.tolerance),
                r.status,
                r.note
            )?;
        }
        w.flush()?;
    }
    write_manifest(ctx, "compare", &args, None, output)?;
    Ok(if pass { 0 } else { 1 })
}
