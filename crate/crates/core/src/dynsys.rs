//! State maps, finite-length filters, empirical filter distances and the
//! checks on target systems (domain preservation, Lipschitz, contraction).

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::barron::{self, BarronTarget, FourierAtom};
use crate::domain::{clamp_to_ball, sample_sphere, DomainSpec, EvalGrid, NormDegree};
use crate::error::{Error, Result};
use crate::fnn::{Flavor, VectorFnn};
use crate::rng::{derive_seed, derived_rng, stream, Rng};

/// A map `(x, u) ↦ x′` on `R^D × R^E`.
pub trait StateMap: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn apply(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
}

impl<T: StateMap + ?Sized> StateMap for &T {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn apply(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (**self).apply(x, u)
    }
}

impl<T: StateMap + ?Sized> StateMap for Arc<T> {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn apply(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (**self).apply(x, u)
    }
}

impl StateMap for VectorFnn {
    fn state_dim(&self) -> usize {
        VectorFnn::state_dim(self)
    }
    fn input_dim(&self) -> usize {
        VectorFnn::input_dim(self)
    }
    fn apply(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.eval_unchecked(x, u)
    }
}

/// Closure-backed state map.
pub struct FnMap<F> {
    state_dim: usize,
    input_dim: usize,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(state_dim: usize, input_dim: usize, f: F) -> Self {
        Self { state_dim, input_dim, f }
    }
}

impl<F> StateMap for FnMap<F>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn input_dim(&self) -> usize {
        self.input_dim
    }
    fn apply(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.f)(x, u)
    }
}

type DynFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
enum Dynamics {
    Mixture(Vec<BarronTarget>),
    Custom(Arc<DynFn>),
}

/// A target state map with its declared constants: range radius `P`,
/// Lipschitz constant `L` in the state, Barron constant `M`.
#[derive(Clone)]
pub struct TargetSystem {
    dynamics: Dynamics,
    domain: DomainSpec,
    range_p: f64,
    lipschitz: f64,
    barron_m: f64,
    x_init: Vec<f64>,
}

impl fmt::Debug for TargetSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetSystem")
            .field("domain", &self.domain)
            .field("range_p", &self.range_p)
            .field("lipschitz", &self.lipschitz)
            .field("barron_m", &self.barron_m)
            .field("mixture", &matches!(self.dynamics, Dynamics::Mixture(_)))
            .finish()
    }
}

impl TargetSystem {
    /// System whose `d`-th output coordinate is the `d`-th Barron target.
    pub fn from_components(components: Vec<BarronTarget>, range_p: f64, lipschitz: f64) -> Result<Self> {
        let domain = *components
            .first()
            .ok_or_else(|| Error::InvalidArgument("a target system needs at least one component".into()))?
            .domain();
        if components.len() != domain.state_dim {
            return Err(Error::DimensionMismatch { expected: domain.state_dim, got: components.len() });
        }
        if components.iter().any(|g| *g.domain() != domain) {
            return Err(Error::InvalidArgument("all components must share one domain".into()));
        }
        let barron_m = components.iter().map(|g| g.barron_m()).fold(0.0, f64::max);
        Self::validate(&domain, range_p, lipschitz)?;
        Ok(Self {
            dynamics: Dynamics::Mixture(components),
            domain,
            range_p,
            lipschitz,
            barron_m,
            x_init: vec![0.0; domain.state_dim],
        })
    }

    /// System given by an arbitrary closure. `barron_m` is informational.
    pub fn custom<F>(domain: DomainSpec, f: F, range_p: f64, lipschitz: f64, barron_m: f64) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::validate(&domain, range_p, lipschitz)?;
        Ok(Self {
            dynamics: Dynamics::Custom(Arc::new(f)),
            domain,
            range_p,
            lipschitz,
            barron_m,
            x_init: vec![0.0; domain.state_dim],
        })
    }

    fn validate(domain: &DomainSpec, range_p: f64, lipschitz: f64) -> Result<()> {
        if !(range_p >= 0.0) || !(range_p < domain.state_radius) {
            return Err(Error::InvalidArgument(format!(
                "range radius P = {range_p} must satisfy 0 ≤ P < S = {}",
                domain.state_radius
            )));
        }
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidArgument(format!("Lipschitz constant must be non-negative, got {lipschitz}")));
        }
        Ok(())
    }

    pub fn with_x_init(mut self, x_init: Vec<f64>) -> Result<Self> {
        self.domain.check_state(&x_init)?;
        self.x_init = x_init;
        Ok(self)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn range_p(&self) -> f64 {
        self.range_p
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn barron_m(&self) -> f64 {
        self.barron_m
    }

    pub fn x_init(&self) -> &[f64] {
        &self.x_init
    }

    pub fn components(&self) -> Option<&[BarronTarget]> {
        match &self.dynamics {
            Dynamics::Mixture(c) => Some(c),
            Dynamics::Custom(_) => None,
        }
    }
}

impl StateMap for TargetSystem {
    fn state_dim(&self) -> usize {
        self.domain.state_dim
    }
    fn input_dim(&self) -> usize {
        self.domain.input_dim
    }
    fn apply(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::Mixture(c) => c.iter().map(|g| g.eval_split(x, u)).collect(),
            Dynamics::Custom(f) => f(x, u),
        }
    }
}

/// Runs `x(t) = g(x(t−1), u(t))` from `x_init` and returns `x(t)` for
/// every input. States must stay in `B̄_S` up to `1e-9`.
pub fn run_filter<G: StateMap + ?Sized>(
    g: &G,
    domain: &DomainSpec,
    x_init: &[f64],
    inputs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    domain.check_state(x_init)?;
    let mut out = Vec::with_capacity(inputs.len());
    let mut x = x_init.to_vec();
    for (step, u) in inputs.iter().enumerate() {
        if u.len() != domain.input_dim {
            return Err(Error::DimensionMismatch { expected: domain.input_dim, got: u.len() });
        }
        x = g.apply(&x, u);
        let n = domain.p.norm(&x);
        if !(n <= domain.state_radius + 1e-9) {
            return Err(Error::DomainViolation { step, norm: n, radius: domain.state_radius });
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Forward recursion without any domain check.
pub fn run_unchecked<G: StateMap + ?Sized>(g: &G, x_init: &[f64], inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut x = x_init.to_vec();
    inputs
        .iter()
        .map(|u| {
            x = g.apply(&x, u);
            x.clone()
        })
        .collect()
}

/// Input sequences used to probe filter norms: random sequences, constant
/// corner sequences and, optionally, every corner sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSampler {
    pub n_random: usize,
    pub constant_corners: bool,
    pub exhaustive_corners: bool,
    pub seed: u64,
}

/// Largest number of sequences the exhaustive corner mode will enumerate.
pub const MAX_EXHAUSTIVE_SEQUENCES: usize = 1 << 20;

impl InputSampler {
    pub fn new(n_random: usize, seed: u64) -> Self {
        Self { n_random, constant_corners: true, exhaustive_corners: false, seed }
    }

    pub fn exhaustive(seed: u64) -> Self {
        Self { n_random: 0, constant_corners: false, exhaustive_corners: true, seed }
    }

    pub fn sequences(&self, domain: &DomainSpec, len: usize) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut out = Vec::new();
        let corners = domain.input_corners();
        if self.exhaustive_corners {
            let total = (corners.len() as f64).powi(len as i32);
            if total > MAX_EXHAUSTIVE_SEQUENCES as f64 {
                return Err(Error::Infeasible(format!("{total} corner sequences exceed the enumeration limit")));
            }
            let total = total as usize;
            for mut code in 0..total {
                let seq = (0..len)
                    .map(|_| {
                        let c = corners[code % corners.len()].clone();
                        code /= corners.len();
                        c
                    })
                    .collect();
                out.push(seq);
            }
        } else if self.constant_corners {
            for c in &corners {
                out.push(vec![c.clone(); len]);
            }
        }
        for k in 0..self.n_random {
            let mut rng = derived_rng(self.seed, &[stream::INPUTS, k as u64]);
            out.push((0..len).map(|_| domain.sample_input(&mut rng)).collect());
        }
        Ok(out)
    }
}

/// Max over sampled input sequences and over time of `‖x_A(t) − x_B(t)‖_p`.
pub fn filter_distance<A, B>(
    a: &A,
    init_a: &[f64],
    b: &B,
    init_b: &[f64],
    sampler: &InputSampler,
    domain: &DomainSpec,
    horizon: usize,
) -> Result<f64>
where
    A: StateMap + ?Sized,
    B: StateMap + ?Sized,
{
    let seqs = sampler.sequences(domain, horizon)?;
    Ok(filter_distance_on(a, init_a, b, init_b, &seqs, domain.p))
}

/// [`filter_distance`] on an explicit list of input sequences.
pub fn filter_distance_on<A, B>(
    a: &A,
    init_a: &[f64],
    b: &B,
    init_b: &[f64],
    seqs: &[Vec<Vec<f64>>],
    p: NormDegree,
) -> f64
where
    A: StateMap + ?Sized,
    B: StateMap + ?Sized,
{
    seqs.par_iter()
        .map(|seq| {
            let xa = run_unchecked(a, init_a, seq);
            let xb = run_unchecked(b, init_b, seq);
            xa.iter().zip(&xb).map(|(x, y)| p.dist(x, y)).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Empirical sup over the grid of `‖g(x, u) − f(x, u)‖_p`.
pub fn function_gap<A, B>(a: &A, b: &B, grid: &EvalGrid, p: NormDegree) -> f64
where
    A: StateMap + ?Sized,
    B: StateMap + ?Sized,
{
    grid.sup_scalar(|x, u| p.dist(&a.apply(x, u), &b.apply(x, u)))
}

fn perturb_within(rng: &mut Rng, x: &[f64], domain: &DomainSpec, scale: f64) -> Vec<f64> {
    let step = sample_sphere(rng, x.len(), scale * domain.state_radius, domain.p);
    let mut y: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
    clamp_to_ball(&mut y, domain.state_radius, domain.p);
    y
}

/// Max of `‖g(x,u) − g(x′,u)‖_p / ‖x − x′‖_p` over sampled triples: half
/// independent pairs, half nearby pairs.
pub fn estimate_lipschitz<G: StateMap + ?Sized>(g: &G, domain: &DomainSpec, n_pairs: usize, seed: u64) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("need at least one pair".into()));
    }
    let p = domain.p;
    let est = (0..n_pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = derived_rng(seed, &[stream::LIPSCHITZ, k as u64]);
            let x = domain.sample_state(&mut rng);
            let u = domain.sample_input(&mut rng);
            let y = if k % 2 == 0 {
                domain.sample_state(&mut rng)
            } else {
                let scale = 10f64.powf(-rng.random_range(1.0..4.0));
                perturb_within(&mut rng, &x, domain, scale)
            };
            let dx = p.dist(&x, &y);
            if dx == 0.0 {
                return 0.0;
            }
            p.dist(&g.apply(&x, &u), &g.apply(&y, &u)) / dx
        })
        .reduce(|| 0.0, f64::max);
    Ok(est)
}

/// Outcome of checking a target system against its declared constants.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub range_sup: f64,
    pub range_ok: bool,
    pub lipschitz_hat: f64,
    pub lipschitz_ok: bool,
    pub barron_certified: bool,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.range_ok && self.lipschitz_ok && self.barron_certified
    }
}

/// Grid check of domain preservation (`‖g‖ ≤ P`), the Lipschitz constant
/// and the presence of a Barron certificate.
pub fn check_assumptions(sys: &TargetSystem, grid: &EvalGrid, lipschitz_pairs: usize, seed: u64) -> AssumptionReport {
    let p = sys.domain.p;
    let range_sup = grid.sup_scalar(|x, u| p.norm(&sys.apply(x, u)));
    let lipschitz_hat = estimate_lipschitz(sys, &sys.domain, lipschitz_pairs.max(1), seed).unwrap_or(f64::INFINITY);
    let barron_certified = match sys.components() {
        Some(c) => {
            c.iter().all(|g| g.barron_m() <= sys.barron_m * (1.0 + 1e-12))
                && grid.sup_scalar(|x, u| {
                    let direct = sys.apply(x, u);
                    let via: Vec<f64> = c.iter().map(|g| g.eval_split(x, u)).collect();
                    p.dist(&direct, &via)
                }) == 0.0
        }
        None => false,
    };
    AssumptionReport {
        range_sup,
        range_ok: range_sup <= sys.range_p * (1.0 + 1e-12) + 1e-12,
        lipschitz_hat,
        lipschitz_ok: lipschitz_hat <= sys.lipschitz * (1.0 + 1e-9) + 1e-12,
        barron_certified,
    }
}

/// `Δ̂_t` for `t = 1..=t_max`: max over trials of the gap between two runs
/// from random initial states under a shared random input sequence.
pub fn contraction_profile<G: StateMap + ?Sized>(
    g: &G,
    domain: &DomainSpec,
    t_max: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if t_max == 0 {
        return Err(Error::InvalidArgument("T_max must be at least 1".into()));
    }
    let p = domain.p;
    let profile = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = derived_rng(seed, &[stream::CONTRACTION, k as u64]);
            // alternate between random interior states and antipodal boundary states
            let (x, y) = if k % 2 == 0 {
                (domain.sample_state(&mut rng), domain.sample_state(&mut rng))
            } else {
                let x = sample_sphere(&mut rng, domain.state_dim, domain.state_radius, p);
                let y = x.iter().map(|v| -v).collect();
                (x, y)
            };
            let inputs: Vec<Vec<f64>> = (0..t_max).map(|_| domain.sample_input(&mut rng)).collect();
            let xa = run_unchecked(g, &x, &inputs);
            let xb = run_unchecked(g, &y, &inputs);
            xa.iter().zip(&xb).map(|(a, b)| p.dist(a, b)).collect::<Vec<f64>>()
        })
        .reduce(|| vec![0.0; t_max], |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect());
    Ok(profile)
}

/// Random scalar-coordinate Fourier system scaled to be a strict contraction
/// with Lipschitz constant at most `l_target` and range radius `l_target · S`.
pub fn make_strictly_contracting(domain: DomainSpec, l_target: f64, n_atoms: usize, seed: u64) -> Result<TargetSystem> {
    if !(l_target > 0.0 && l_target < 1.0) {
        return Err(Error::InvalidArgument(format!("L_target must lie in (0, 1), got {l_target}")));
    }
    let q = domain.q();
    let p = domain.p;
    let dd = domain.state_dim;
    let range_p = l_target * domain.state_radius;
    let mut raw = Vec::with_capacity(dd);
    for coord in 0..dd {
        let mut rng = derived_rng(seed, &[stream::TARGETS, coord as u64]);
        let atoms: Vec<FourierAtom> = (0..n_atoms)
            .map(|_| {
                let omega: Vec<f64> = loop {
                    let w: Vec<f64> = (0..domain.joint_dim()).map(|_| rng.random_range(-2.5..2.5)).collect();
                    if domain.omega_norm(&w) > 1e-3 {
                        break w;
                    }
                };
                let alpha = rng.random_range(0.2..1.0);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                FourierAtom::new(omega, alpha, phi)
            })
            .collect();
        raw.push(BarronTarget::fourier_mixture(atoms, 0.0, domain)?);
    }
    if n_atoms == 0 {
        return TargetSystem::from_components(raw, 0.0, 0.0);
    }
    // certified per-coordinate Lipschitz constants and ranges
    let lip_parts: Vec<f64> =
        raw.iter().map(|g| g.atoms().iter().map(|a| a.alpha * q.norm(&a.omega[..dd])).sum()).collect();
    let range_parts: Vec<f64> =
        raw.iter().map(|g| g.atoms().iter().map(|a| a.alpha * domain.omega_norm(&a.omega).min(2.0)).sum()).collect();
    let lip_cert = p.norm(&lip_parts);
    let range_cert = p.norm(&range_parts);
    let unscaled = TargetSystem::from_components(raw.clone(), 0.0, 0.0)?;
    let lip_hat = estimate_lipschitz(&unscaled, &domain, 2048, derive_seed(seed, &[stream::LIPSCHITZ]))?;
    let mut scale = f64::INFINITY;
    let lip_ref = lip_cert.max(1.25 * lip_hat);
    if lip_ref > 0.0 {
        scale = scale.min(l_target / lip_ref);
    }
    if range_cert > 0.0 {
        scale = scale.min(range_p / range_cert);
    }
    if !scale.is_finite() {
        scale = 1.0;
    }
    let comps = raw.iter().map(|g| g.scaled(scale)).collect::<Result<Vec<_>>>()?;
    TargetSystem::from_components(comps, range_p, l_target)
}

/// Bundles per-coordinate approximations of a Barron-certified system into
/// one network in the family of the system's constant `M`.
pub fn approximate_system(sys: &TargetSystem, n: usize, flavor: &Flavor, seed: u64) -> Result<VectorFnn> {
    let comps = sys.components().ok_or_else(|| Error::Precondition("system carries no Barron components".into()))?;
    let seeds = barron::component_seeds(seed, comps.len());
    approximate_system_with_seeds(sys, n, flavor, &seeds)
}

/// [`approximate_system`] with one explicit seed per coordinate.
pub fn approximate_system_with_seeds(
    sys: &TargetSystem,
    n: usize,
    flavor: &Flavor,
    seeds: &[u64],
) -> Result<VectorFnn> {
    let comps = sys.components().ok_or_else(|| Error::Precondition("system carries no Barron components".into()))?;
    let m = if sys.barron_m() > 0.0 { sys.barron_m() } else { 1.0 };
    barron::approximate_components(comps, n, flavor, m, seeds)
}
