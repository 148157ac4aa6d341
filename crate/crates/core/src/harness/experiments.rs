//! Batch experiments. Each takes a [`Config`] and returns a [`Table`].

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::Rng as _;
use rayon::prelude::*;

use super::config::{Config, DOMAIN_KEYS};
use super::csv::{params, Row, Table};
use crate::barron::{approximate_relu, approximate_sigmoid, BarronTarget, FourierAtom};
use crate::composite::{
    cascade_error_bound, cascade_long_run_error, finite_memory_gap, forgetting_time, scale_report, select_readout,
    worst_error, CascadeReservoir, ConcatenatedReservoir, ScaleParams,
};
use crate::covering::{covering_cardinality, interval_covering, ClosedFormBound, CoveringSpec};
use crate::diagnostics::{bump, graft_non_esp, pdim_bruteforce, HypothesisKind, HypothesisSet};
use crate::domain::{DomainSpec, EvalGrid, NormDegree};
use crate::dynsys::{function_gap, make_strictly_contracting, InputSampler, StateMap, TargetSystem};
use crate::error::{Error, Result};
use crate::fnn::{delta_sigmoid, internal_error_bound, Flavor, FnnFamily, SigmoidSpec, VectorFnn};
use crate::rng::{derive_seed, derived_rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    ApproxRate,
    Covering,
    ConcatError,
    CascadeError,
    Pdim,
    EspGraft,
    Scale,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::ApproxRate,
        ExperimentKind::Covering,
        ExperimentKind::ConcatError,
        ExperimentKind::CascadeError,
        ExperimentKind::Pdim,
        ExperimentKind::EspGraft,
        ExperimentKind::Scale,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::ApproxRate => "approx-rate",
            ExperimentKind::Covering => "covering",
            ExperimentKind::ConcatError => "concat-error",
            ExperimentKind::CascadeError => "cascade-error",
            ExperimentKind::Pdim => "pdim",
            ExperimentKind::EspGraft => "esp-graft",
            ExperimentKind::Scale => "scale",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| Error::Config(format!("unknown experiment {s}")))
    }
}

pub fn run_experiment(kind: ExperimentKind, cfg: &Config) -> Result<Table> {
    match kind {
        ExperimentKind::ApproxRate => cmd_approx_rate(cfg),
        ExperimentKind::Covering => cmd_covering(cfg),
        ExperimentKind::ConcatError => cmd_concat_error(cfg),
        ExperimentKind::CascadeError => cmd_cascade_error(cfg),
        ExperimentKind::Pdim => cmd_pdim(cfg),
        ExperimentKind::EspGraft => cmd_esp_graft(cfg),
        ExperimentKind::Scale => cmd_scale(cfg),
    }
}

fn allowed<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut keys: Vec<&str> = DOMAIN_KEYS.to_vec();
    keys.push("seed");
    keys.extend_from_slice(extra);
    keys
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn flavor_from(cfg: &Config, name: &str, n: usize) -> Result<Flavor> {
    match name {
        "relu" => Ok(Flavor::Relu),
        "sigmoid" => Ok(Flavor::Sigmoid { lambda: lambda_for(cfg, n)?, sigma: SigmoidSpec::logistic() }),
        other => Err(Error::Config(format!("unknown flavor {other}"))),
    }
}

/// `lambda = sqrt` gives `Λ = √N`; a number fixes `Λ`.
fn lambda_for(cfg: &Config, n: usize) -> Result<f64> {
    match cfg.raw("lambda").unwrap_or("sqrt") {
        "sqrt" => Ok((n as f64).sqrt()),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|l| *l > 0.0)
            .ok_or_else(|| Error::Config(format!("lambda must be sqrt or a positive number, got {v}"))),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Error::Config(format!("{name} must be at least 1")))
    }
}

/// The three-atom target used for the default rate experiment.
pub fn default_rate_target(domain: DomainSpec) -> Result<BarronTarget> {
    if domain.state_dim != 1 || domain.input_dim != 1 {
        return Err(Error::Config("the default target needs D = E = 1".into()));
    }
    BarronTarget::fourier_mixture(
        vec![
            FourierAtom::new(vec![1.0, 0.5], 0.6, 0.3),
            FourierAtom::new(vec![-0.7, 1.2], 0.4, 1.1),
            FourierAtom::new(vec![2.0, -0.3], 0.25, 2.0),
        ],
        0.1,
        domain,
    )
}

/// Random Fourier mixture: `ω ~ U(−2, 2)^Q`, `α ~ U(0.1, 1)`, `φ ~ U(0, 2π)`.
pub fn random_mixture(domain: DomainSpec, n_atoms: usize, g0: f64, seed: u64) -> Result<BarronTarget> {
    let mut rng = derived_rng(seed, &[stream::TARGETS]);
    let q = domain.joint_dim();
    let atoms = (0..n_atoms)
        .map(|_| {
            let omega = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
            FourierAtom::new(omega, rng.random_range(0.1..1.0), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    BarronTarget::fourier_mixture(atoms, g0, domain)
}

/// Two-sided 97.5% Student-t quantiles for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
    2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];

/// Least-squares line through `(x, y)` with a 95% interval on the slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (ci_lo, ci_hi) = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let se = (rss / (n - 2) as f64 / sxx).sqrt();
        let t = T975.get(n - 3).copied().unwrap_or(1.96);
        (slope - t * se, slope + t * se)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    Some(SlopeFit { slope, intercept, ci_lo, ci_hi })
}

pub fn cmd_approx_rate(cfg: &Config) -> Result<Table> {
    cfg.check_keys(&allowed(&[
        "target",
        "n_atoms",
        "g0",
        "flavor",
        "n_list",
        "seeds",
        "lambda",
        "grid_budget",
        "grid_random",
        "slope_lo",
        "slope_hi",
    ]))?;
    let seed = cfg.seed()?;
    let domain = cfg.domain(1, 1)?;
    let target = match cfg.raw("target").unwrap_or("default") {
        "default" => default_rate_target(domain)?,
        "constant" => BarronTarget::fourier_mixture(vec![], cfg.get("g0", 0.1)?, domain)?,
        "random" => {
            random_mixture(domain, cfg.get("n_atoms", 3)?, cfg.get("g0", 0.0)?, derive_seed(seed, &[stream::TARGETS]))?
        }
        other => return Err(Error::Config(format!("unknown target {other}"))),
    };
    let flavors: Vec<&str> = match cfg.raw("flavor").unwrap_or("both") {
        "both" => vec!["relu", "sigmoid"],
        "relu" => vec!["relu"],
        "sigmoid" => vec!["sigmoid"],
        other => return Err(Error::Config(format!("unknown flavor {other}"))),
    };
    let n_list: Vec<usize> = cfg.get_list("n_list", &[4, 16, 64, 256])?;
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::Config("n_list entries must be at least 1".into()));
    }
    let seeds = at_least_one("seeds", cfg.get("seeds", 10)?)?;
    let grid = EvalGrid::build(
        &domain,
        cfg.get("grid_budget", 10_000)?,
        cfg.get("grid_random", 1_000)?,
        derive_seed(seed, &[stream::GRID]),
    );
    let slope_lo: f64 = cfg.get("slope_lo", -0.7)?;
    let slope_hi: f64 = cfg.get("slope_hi", -0.3)?;
    let sigma = SigmoidSpec::logistic();
    let q_root = (domain.joint_dim() as f64).sqrt();

    let mut table = Table::new(ExperimentKind::ApproxRate.as_str());
    for (fi, flavor) in flavors.iter().enumerate() {
        let jobs: Vec<(usize, usize)> = n_list.iter().flat_map(|&n| (0..seeds).map(move |s| (n, s))).collect();
        let errors = jobs
            .par_iter()
            .map(|&(n, s)| -> Result<f64> {
                let sd = derive_seed(seed, &[stream::TRIAL, fi as u64, n as u64, s as u64]);
                let f = match *flavor {
                    "relu" => approximate_relu(&target, n, sd)?,
                    _ => approximate_sigmoid(&target, n, lambda_for(cfg, n)?, &sigma, sd)?,
                };
                Ok(grid.sup_scalar(|x, u| target.eval_split(x, u) - f.eval_unchecked(x, u)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut means = Vec::new();
        for (ni, &n) in n_list.iter().enumerate() {
            let chunk = &errors[ni * seeds..(ni + 1) * seeds];
            let lambda = if *flavor == "sigmoid" { Some(lambda_for(cfg, n)?) } else { None };
            let mut base = vec![("flavor", flavor.to_string()), ("N", n.to_string())];
            if let Some(l) = lambda {
                base.push(("lambda", format!("{l}")));
            }
            for (s, e) in chunk.iter().enumerate() {
                let mut p = base.clone();
                p.push(("seed", s.to_string()));
                table.push(Row::new("trial", params(&p), "sup_error").measured(*e));
            }
            let mean = chunk.iter().sum::<f64>() / seeds as f64;
            means.push(mean);
            table.push(Row::new("mean", params(&base), "mean_sup_error").measured(mean));
            if let Some(l) = lambda {
                let shape = 4.0 * delta_sigmoid(&sigma, l)? + q_root / (n as f64).sqrt();
                table.push(Row::new("fit", params(&base), "error_over_rate").measured(mean / shape));
            }
        }
        let base = [("flavor", flavor.to_string()), ("n_list", join(&n_list))];
        let degenerate = means.iter().any(|m| !(*m > 0.0));
        let fit = if degenerate {
            None
        } else {
            fit_slope(
                &n_list.iter().map(|&n| (n as f64).ln()).collect::<Vec<_>>(),
                &means.iter().map(|m| m.ln()).collect::<Vec<_>>(),
            )
        };
        match fit {
            Some(fit) => {
                let mut p = base.to_vec();
                p.push(("ci_lo", format!("{}", fit.ci_lo)));
                p.push(("ci_hi", format!("{}", fit.ci_hi)));
                table
                    .push(Row::new("summary", params(&p), "slope").lower(slope_lo).measured(fit.slope).upper(slope_hi));
            }
            None => {
                let mut p = base.to_vec();
                p.push(("degenerate", "true".into()));
                table.push(Row::new("summary", params(&p), "slope"));
            }
        }
    }
    Ok(table)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn family_from(cfg: &Config, domain: DomainSpec, m: f64, n: usize) -> Result<FnnFamily> {
    let flavor = flavor_from(cfg, cfg.raw("flavor").unwrap_or("relu"), n)?;
    FnnFamily::new(domain, m, n, flavor).map_err(cfg_err)
}

pub fn cmd_covering(cfg: &Config) -> Result<Table> {
    cfg.check_keys(&allowed(&[
        "d_list",
        "N",
        "M",
        "gamma",
        "members",
        "grid_budget",
        "grid_random",
        "flavor",
        "lambda",
    ]))?;
    let seed = cfg.seed()?;
    let d_list: Vec<usize> = cfg.get_list("d_list", &[1, 2])?;
    let n = at_least_one("N", cfg.get("N", 1)?)?;
    let m = positive("M", cfg.get("M", 1.0)?)?;
    let gamma = positive("gamma", cfg.get("gamma", 0.5)?)?;
    let members = cfg.get("members", 100)?;
    let budget = cfg.get("grid_budget", 4096)?;
    let n_random = cfg.get("grid_random", 512)?;
    let mut table = Table::new(ExperimentKind::Covering.as_str());

    let pts = interval_covering(-1.0, 1.0, 0.5)?;
    let dev = pts.iter().zip([-0.5, 0.5]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    table.push(Row::new("example", "lo=-1;hi=1;radius=0.5", "interval_points").measured(pts.len()).exact(2usize));
    table.push(Row::new("example", "lo=-1;hi=1;radius=0.5", "interval_point_deviation").measured(dev).upper(0.0));
    let dom1 = DomainSpec::new(NormDegree::Inf, 1.0, 1.0, 1, 1)?;
    let single = CoveringSpec::new(FnnFamily::relu(dom1, 1.0, 1)?, 1e6)?;
    let card = covering_cardinality(&single);
    table.push(
        Row::new("example", "D=1;E=1;N=1;M=1;p=inf;gamma=1e6", "constructive_count")
            .measured(card.constructive.clone().unwrap_or_default())
            .exact(BigUint::from(1u32)),
    );
    let closed_form = ClosedFormBound::new(1, 1, 1.0, 1, 160.0, NormDegree::Inf)
        .exact()
        .ok_or_else(|| Error::InvalidArgument("closed-form bound at Γ = 160 is not integral".into()))?;
    table.push(
        Row::new("example", "D=1;E=1;N=1;M=1;p=inf;gamma=160", "closed_form_bound")
            .measured(closed_form)
            .exact(BigUint::from(131072u32)),
    );

    for &d in &d_list {
        let domain = cfg
            .domain(d, 1)
            .and_then(|dom| DomainSpec::new(dom.p, dom.state_radius, dom.input_radius, d, dom.input_dim))?;
        let family = family_from(cfg, domain, m, n)?;
        let spec = CoveringSpec::new(family.clone(), gamma).map_err(cfg_err)?;
        let p = domain.p;
        let base = vec![
            ("D", d.to_string()),
            ("E", domain.input_dim.to_string()),
            ("N", n.to_string()),
            ("M", format!("{m}")),
            ("p", p.to_string()),
            ("gamma", format!("{gamma}")),
        ];
        let card = covering_cardinality(&spec);
        let per_set = 160.0 * m * n as f64 * p.root(d) / gamma + 1.0;
        if matches!(family.flavor, Flavor::Relu) {
            for (name, len) in [("a_points", card.a), ("d_points", card.d), ("e_points", card.e)] {
                table.push(Row::new("grid", params(&base), name).measured(len).upper(per_set));
            }
        }
        if let Some(b) = &card.b {
            table.push(Row::new("grid", params(&base), "b_points").measured(b.clone()));
        }
        if let Some(c) = &card.c {
            table.push(Row::new("grid", params(&base), "c_points").measured(c.clone()));
        }
        if let Some(total) = &card.constructive {
            table.push(Row::new("grid", params(&base), "constructive_count").measured(total.clone()));
        }
        if let Some(pb) = &card.closed_form {
            table.push(Row::new("grid", params(&base), "closed_form_log10").measured(pb.log10()));
        }

        let grid = EvalGrid::build(&domain, budget, n_random, derive_seed(seed, &[stream::GRID, d as u64]));
        let scalar_bound = gamma / p.root(d);
        let outcomes = (0..members)
            .into_par_iter()
            .map(|k| -> Result<(f64, f64, f64)> {
                let mut rng = derived_rng(seed, &[stream::MEMBERS, d as u64, k as u64]);
                let f = VectorFnn::new((0..d).map(|_| family.sample_member(&mut rng)).collect())?;
                let (_, snapped) = spec.snap_vector(&f)?;
                let mut scalar_gap: f64 = 0.0;
                let mut ratio: f64 = 0.0;
                for (fj, sj) in f.components().iter().zip(snapped.components()) {
                    let gap = grid.sup_scalar(|x, u| fj.eval_unchecked(x, u) - sj.eval_unchecked(x, u));
                    let pb = family.param_perturbation_bound(fj, sj)?.total();
                    scalar_gap = scalar_gap.max(gap);
                    ratio = ratio.max(if pb > 0.0 {
                        gap / pb
                    } else if gap == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    });
                }
                let vector_gap = function_gap(&f, &snapped, &grid, p);
                Ok((scalar_gap, vector_gap, ratio))
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, (sg, vg, ratio)) in outcomes.iter().enumerate() {
            let mut pr = base.clone();
            pr.push(("member", k.to_string()));
            let pr = params(&pr);
            table.push(Row::new("member", pr.clone(), "scalar_gap").measured(*sg).upper(scalar_bound));
            table.push(Row::new("member", pr.clone(), "vector_gap").measured(*vg).upper(gamma));
            table.push(Row::new("member", pr, "gap_over_perturbation_bound").measured(*ratio).upper(1.0));
        }
    }
    Ok(table)
}

struct Batch {
    domain: DomainSpec,
    targets: Vec<TargetSystem>,
    spec: CoveringSpec,
    grid: EvalGrid,
}

fn contracting_batch(cfg: &Config, seed: u64) -> Result<Batch> {
    let domain = cfg.domain(1, 1)?;
    let n_targets = at_least_one("n_targets", cfg.get("n_targets", 8)?)?;
    let n_atoms = cfg.get("n_atoms", 3)?;
    let l = cfg.get("L", 0.5)?;
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::Config(format!("L must lie in (0, 1), got {l}")));
    }
    let n = at_least_one("N", cfg.get("N", 16)?)?;
    let gamma = positive("gamma", cfg.get("gamma", 0.05)?)?;
    let targets = (0..n_targets)
        .into_par_iter()
        .map(|i| make_strictly_contracting(domain, l, n_atoms, derive_seed(seed, &[stream::TARGETS, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let m = targets.iter().map(TargetSystem::barron_m).fold(0.0, f64::max);
    let family = family_from(cfg, domain, if m > 0.0 { m } else { 1.0 }, n)?;
    let spec = CoveringSpec::new(family, gamma).map_err(cfg_err)?;
    let grid = EvalGrid::build(
        &domain,
        cfg.get("grid_budget", 4096)?,
        cfg.get("grid_random", 512)?,
        derive_seed(seed, &[stream::GRID]),
    );
    Ok(Batch { domain, targets, spec, grid })
}

const BATCH_KEYS: [&str; 9] =
    ["n_targets", "n_atoms", "L", "N", "gamma", "flavor", "lambda", "grid_budget", "grid_random"];

pub fn cmd_concat_error(cfg: &Config) -> Result<Table> {
    let mut keys = BATCH_KEYS.to_vec();
    keys.extend(["horizon", "n_random"]);
    cfg.check_keys(&allowed(&keys))?;
    let seed = cfg.seed()?;
    let horizon = at_least_one("horizon", cfg.get("horizon", 6)?)?;
    let batch = contracting_batch(cfg, seed)?;
    let sampler = InputSampler::new(cfg.get("n_random", 64)?, derive_seed(seed, &[stream::INPUTS]));
    let gamma = batch.spec.gamma();
    let res =
        worst_error(&batch.spec, &batch.targets, &sampler, &batch.grid, horizon, derive_seed(seed, &[stream::POOL]))?;
    let s = batch.domain.state_radius;
    let base = [
        ("N", batch.spec.family().n.to_string()),
        ("gamma", format!("{gamma}")),
        ("T", horizon.to_string()),
        ("flavor", batch.spec.family().flavor.name().to_string()),
    ];
    let mut table = Table::new(ExperimentKind::ConcatError.as_str());
    for (i, (g, t)) in batch.targets.iter().zip(&res.targets).enumerate() {
        let mut p = base.to_vec();
        p.push(("target", i.to_string()));
        p.push(("L", format!("{}", g.lipschitz())));
        let p = params(&p);
        table.push(Row::new("target", p.clone(), "eps_hat").measured(t.eps_hat));
        table.push(Row::new("target", p.clone(), "eps_plus_gamma").measured(t.eps_hat + gamma).upper(s - g.range_p()));
        table.push(Row::new("target", p.clone(), "cover_gap").measured(t.cover_gap).upper(t.eps_hat + gamma));
        let bound = internal_error_bound(t.eps_hat + gamma, g.lipschitz(), horizon)?;
        table.push(Row::new("target", p, "werr").measured(t.werr_hat).upper(bound));
    }
    let p = params(&base);
    table.push(Row::new("batch", p.clone(), "werr_hat").measured(res.werr_hat).upper(res.bound));
    let ratio = if res.bound > 0.0 { res.werr_hat / res.bound } else { 0.0 };
    table.push(Row::new("batch", p, "werr_over_bound").measured(ratio));
    Ok(table)
}

pub fn cmd_cascade_error(cfg: &Config) -> Result<Table> {
    let mut keys = BATCH_KEYS.to_vec();
    keys.extend(["orders", "trials", "burn_in", "esp_extra"]);
    cfg.check_keys(&allowed(&keys))?;
    let seed = cfg.seed()?;
    let orders: Vec<usize> = cfg.get_list("orders", &[2, 4, 8])?;
    if orders.contains(&0) {
        return Err(Error::Config("orders must be at least 1".into()));
    }
    let trials = at_least_one("trials", cfg.get("trials", 32)?)?;
    let burn_cfg: usize = cfg.get("burn_in", 0)?;
    let esp_extra: usize = cfg.get("esp_extra", 4)?;
    let batch = contracting_batch(cfg, seed)?;
    let dom = batch.domain;
    let s = dom.state_radius;
    let gamma = batch.spec.gamma();
    let flavor = batch.spec.family().flavor.clone();

    let per_target = batch
        .targets
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<Vec<Row>> {
            let mut rows = Vec::new();
            let l = g.lipschitz();
            let sel = select_readout(g, &batch.spec, &flavor, derive_seed(seed, &[stream::TARGETS, i as u64]))?;
            let eps_hat = function_gap(g, &sel.approx, &batch.grid, dom.p);
            let tp = params(&[("target", i.to_string()), ("L", format!("{l}")), ("gamma", format!("{gamma}"))]);
            rows.push(Row::new("target", tp.clone(), "eps_hat").measured(eps_hat));
            rows.push(Row::new("target", tp, "eps_plus_gamma").measured(eps_hat + gamma).upper(s - g.range_p()));
            for &order in &orders {
                let burn_in = if burn_cfg > 0 { burn_cfg } else { order + forgetting_time(l, s, 1e-9) };
                let p = params(&[
                    ("target", i.to_string()),
                    ("L", format!("{l}")),
                    ("T", order.to_string()),
                    ("burn_in", burn_in.to_string()),
                ]);
                let tseed = derive_seed(seed, &[stream::CASCADE, i as u64, order as u64]);

                let cas = CascadeReservoir::new(g, order, g.x_init().to_vec())?;
                let mut rng = derived_rng(tseed, &[stream::TRIAL]);
                let inputs: Vec<Vec<f64>> = (0..order + esp_extra).map(|_| dom.sample_input(&mut rng)).collect();
                let b1: Vec<Vec<f64>> = (0..order).map(|_| dom.sample_state(&mut rng)).collect();
                let b2: Vec<Vec<f64>> = (0..order).map(|_| dom.sample_state(&mut rng)).collect();
                let o1 = cas.cascade_run(&inputs, Some(&b1))?;
                let o2 = cas.cascade_run(&inputs, Some(&b2))?;
                let esp_gap = (order - 1..inputs.len()).map(|t| dom.p.dist(&o1[t], &o2[t])).fold(0.0, f64::max);
                rows.push(Row::new("esp", p.clone(), "output_gap_after_T").measured(esp_gap).upper(0.0));

                let fm = finite_memory_gap(g, order, Some(burn_in), trials, tseed)?;
                let delta = 2.0 * s * l.powi(order as i32);
                rows.push(Row::new("finite_memory", p.clone(), "finite_memory_gap").measured(fm.gap).upper(delta));

                let err = cascade_long_run_error(g, &sel.snapped, order, burn_in, trials, tseed)?;
                let bound = cascade_error_bound(delta, eps_hat + gamma, l, order)?;
                rows.push(Row::new("combined", p, "cascade_error").measured(err).upper(bound));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(ExperimentKind::CascadeError.as_str());
    per_target.into_iter().flatten().for_each(|r| table.push(r));
    Ok(table)
}

pub fn cmd_pdim(cfg: &Config) -> Result<Table> {
    cfg.check_keys(&allowed(&[
        "n_components",
        "N",
        "M",
        "gamma",
        "pool",
        "horizon",
        "k_max",
        "k_max_all",
        "flavor",
        "lambda",
    ]))?;
    let seed = cfg.seed()?;
    let domain = cfg.domain(1, 1)?;
    let n_components = at_least_one("n_components", cfg.get("n_components", 4)?)?;
    let n = at_least_one("N", cfg.get("N", 1)?)?;
    let m = positive("M", cfg.get("M", 1.0)?)?;
    let gamma = positive("gamma", cfg.get("gamma", 0.5)?)?;
    let pool_len = at_least_one("pool", cfg.get("pool", 12)?)?;
    let horizon = at_least_one("horizon", cfg.get("horizon", 3)?)?;
    let k_max: usize = cfg.get("k_max", 4)?;
    let k_max_all: usize = cfg.get("k_max_all", 5)?;
    let family = family_from(cfg, domain, m, n)?;
    let spec = CoveringSpec::new(family.clone(), gamma).map_err(cfg_err)?;

    let mut reservoir = ConcatenatedReservoir::new(spec.clone(), vec![0.0; domain.state_dim])?;
    let mut rng = derived_rng(seed, &[stream::MEMBERS]);
    let mut indices = Vec::new();
    let mut tries = 0;
    while indices.len() < n_components {
        tries += 1;
        if tries > 1000 * n_components {
            return Err(Error::Config("could not draw distinct covering components".into()));
        }
        let f = VectorFnn::new((0..domain.state_dim).map(|_| family.sample_member(&mut rng)).collect())?;
        let (idx, _) = spec.snap_vector(&f)?;
        if !indices.contains(&idx) {
            reservoir.activate(idx.clone())?;
            indices.push(idx);
        }
    }
    let mut prng = derived_rng(seed, &[stream::POOL]);
    let pool: Vec<Vec<Vec<f64>>> =
        (0..pool_len).map(|_| (0..horizon).map(|_| domain.sample_input(&mut prng)).collect()).collect();
    let finals: Vec<Vec<Vec<f64>>> = pool
        .par_iter()
        .map(|seq| -> Result<Vec<Vec<f64>>> {
            Ok(reservoir.concat_run(&indices, seq)?.into_iter().map(|mut run| run.pop().unwrap()).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let one: Vec<Vec<f64>> = (0..n_components).map(|k| finals.iter().map(|f| f[k][0]).collect()).collect();
    let all: Vec<Vec<f64>> = (0..n_components)
        .flat_map(|k| (0..domain.state_dim).map(move |j| (k, j)))
        .map(|(k, j)| finals.iter().map(|f| f[k][j]).collect())
        .collect();

    let base =
        [("components", n_components.to_string()), ("pool", pool_len.to_string()), ("horizon", horizon.to_string())];
    let mut table = Table::new(ExperimentKind::Pdim.as_str());
    let h_one = HypothesisSet::from_values(one, HypothesisKind::OneHot)?;
    let log2 = (usize::BITS - (n_components - 1).leading_zeros()) as usize;
    let mut p = base.to_vec();
    p.push(("k_max", k_max.to_string()));
    table.push(
        Row::new("h_one", params(&p), "pdim").measured(pdim_bruteforce(&h_one, k_max.min(pool_len))?).upper(log2),
    );
    let h_all = HypothesisSet::from_values(all, HypothesisKind::AllReadouts)?;
    let mut p = base.to_vec();
    p.push(("k_max", k_max_all.to_string()));
    table.push(
        Row::new("h_all", params(&p), "pdim")
            .measured(pdim_bruteforce(&h_all, k_max_all.min(pool_len))?)
            .upper(n_components * domain.state_dim),
    );
    let constants =
        HypothesisSet::from_values((0..4).map(|c| vec![c as f64; pool_len]).collect(), HypothesisKind::OneHot)?;
    table.push(
        Row::new("oracle", "constants=4", "pdim").measured(pdim_bruteforce(&constants, 3.min(pool_len))?).exact(1usize),
    );
    Ok(table)
}

pub fn cmd_esp_graft(cfg: &Config) -> Result<Table> {
    cfg.check_keys(&allowed(&["L", "n_atoms", "taus", "v0", "n_points", "run_len", "grid_budget", "grid_random"]))?;
    let seed = cfg.seed()?;
    let domain = cfg.domain(1, 1)?;
    let l = cfg.get("L", 0.5)?;
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::Config(format!("L must lie in (0, 1), got {l}")));
    }
    let taus: Vec<f64> = cfg.get_list("taus", &[0.1, 0.01, 0.001])?;
    if taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Config("taus must be positive".into()));
    }
    let v0: Vec<f64> = cfg.get_list("v0", &vec![0.0; domain.input_dim])?;
    if v0.len() != domain.input_dim {
        return Err(Error::Config(format!("v0 needs {} entries", domain.input_dim)));
    }
    domain.check_input(&v0).map_err(cfg_err)?;
    let n_points = cfg.get("n_points", 2000)?;
    let run_len = at_least_one("run_len", cfg.get("run_len", 20)?)?;
    let g = make_strictly_contracting(domain, l, cfg.get("n_atoms", 3)?, derive_seed(seed, &[stream::TARGETS]))?;
    let grid = EvalGrid::build(
        &domain,
        cfg.get("grid_budget", 4096)?,
        cfg.get("grid_random", 512)?,
        derive_seed(seed, &[stream::GRID]),
    );

    let mut table = Table::new(ExperimentKind::EspGraft.as_str());
    let mut gaps = Vec::new();
    for (k, &tau) in taus.iter().enumerate() {
        let p = params(&[("tau", format!("{tau}")), ("L", format!("{l}"))]);
        let map = graft_non_esp(&g, &v0, tau, derive_seed(seed, &[stream::GRAFT, k as u64]))?;
        let (r0, rz) = map.fixed_point_residuals();
        table.push(Row::new("graft", p.clone(), "residual_x0").measured(r0).upper(1e-9));
        table.push(Row::new("graft", p.clone(), "residual_z").measured(rz).upper(1e-9));
        let (gap, eps) = map.sup_gap(n_points, derive_seed(seed, &[stream::GRAFT, k as u64, 1]));
        gaps.push(gap);
        table.push(Row::new("graft", p.clone(), "sup_gap").measured(gap).upper(2.0 * eps));
        let (a, b) = map.constant_input_runs(run_len)?;
        let sep = a.iter().zip(&b).map(|(x, y)| domain.p.dist(x, y)).fold(f64::INFINITY, f64::min);
        table.push(Row::new("graft", p.clone(), "trajectory_separation").measured(sep).lower(0.5 * tau));
        let outside = grid.sup_vector(domain.p, |x, u| {
            let dx: Vec<f64> = x.iter().zip(&map.z).map(|(a, b)| a - b).collect();
            let dv: Vec<f64> = u.iter().zip(&map.v0).map(|(a, b)| a - b).collect();
            if domain.p.norm(&dx) + domain.p.norm(&dv) > tau {
                let gt = map.apply(x, u);
                let gb = g.apply(x, u);
                gt.iter().zip(&gb).map(|(a, b)| a - b).collect()
            } else {
                vec![0.0; x.len()]
            }
        });
        table.push(Row::new("graft", p, "gap_outside_support").measured(outside).upper(0.0));
    }
    if gaps.len() > 1 {
        let worst = gaps.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        table.push(Row::new("trend", params(&[("taus", join(&taus))]), "max_gap_ratio").measured(worst).upper(1.0));
    }
    // sanity of the bump at the graft centre
    table.push(Row::new("bump", "", "bump_at_center").measured(bump(&[0.0], &[0.0], 1.0, domain.p)).exact(1.0));
    Ok(table)
}

/// `T · 4DN · ⌈base⌉^exponent` by repeated multiplication.
pub fn node_count_product(order: usize, d: usize, n: usize, base: &BigUint, exponent: usize) -> BigUint {
    let mut cover = BigUint::from(1u32);
    for _ in 0..exponent {
        cover *= base;
    }
    cover * BigUint::from(order) * BigUint::from(4 * d * n)
}

pub fn cmd_scale(cfg: &Config) -> Result<Table> {
    cfg.check_keys(&allowed(&["n_list", "M", "L", "gamma0", "kappa"]))?;
    let domain = cfg.domain(1, 1)?;
    let n_list: Vec<usize> = cfg.get_list("n_list", &[1, 4, 16])?;
    let params_s = ScaleParams {
        state_dim: domain.state_dim,
        input_dim: domain.input_dim,
        m: positive("M", cfg.get("M", 1.0)?)?,
        l_sc: cfg.get("L", 0.5)?,
        p: domain.p,
        state_radius: domain.state_radius,
        gamma0: positive("gamma0", cfg.get("gamma0", 1.0)?)?,
        kappa: positive("kappa", cfg.get("kappa", 1.0)?)?,
    };
    let mut table = Table::new(ExperimentKind::Scale.as_str());
    for &n in &n_list {
        let rep = scale_report(n, &params_s).map_err(cfg_err)?;
        let d = domain.state_dim;
        let base_f = 160.0 * params_s.m * n as f64 * domain.p.root(d) / rep.gamma + 1.0;
        let base = BigUint::from(base_f.ceil() as u128);
        let exponent = 4 * d * (d + domain.input_dim + 2) * n + d;
        let oracle = node_count_product(rep.order, d, n, &base, exponent);
        let p = params(&[("N", n.to_string()), ("T", rep.order.to_string()), ("gamma", format!("{}", rep.gamma))]);
        table.push(Row::new("scale", p.clone(), "node_count").measured(rep.node_count.clone()).exact(oracle));
        table.push(Row::new("scale", p.clone(), "node_count_digits").measured(rep.node_count.to_string().len()));
        table.push(Row::new("scale", p, "error_bound").measured(rep.error_bound));
    }
    Ok(table)
}
