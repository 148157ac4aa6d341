//! Parallel concatenations of covering networks with a block-selecting
//! readout, and order-T cascades for left-infinite inputs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use rayon::prelude::*;

use crate::covering::{p_bound, ClosedFormBound, CoverIndex, CoveringSpec};
use crate::domain::{DomainSpec, EvalGrid, NormDegree};
use crate::dynsys::{
    contraction_profile, filter_distance_on, function_gap, run_unchecked, InputSampler, StateMap, TargetSystem,
};
use crate::error::{Error, Result};
use crate::fnn::{geometric_sum, internal_error_bound, Activation, Flavor, FnnFamily, VectorFnn};
use crate::rng::{derive_seed, derived_rng, stream};

/// Virtual parallel concatenation: the covering spec plus the components
/// that have actually been instantiated.
#[derive(Debug, Clone)]
pub struct ConcatenatedReservoir {
    spec: CoveringSpec,
    active: BTreeMap<CoverIndex, VectorFnn>,
    x_init: Vec<f64>,
}

impl ConcatenatedReservoir {
    pub fn new(spec: CoveringSpec, x_init: Vec<f64>) -> Result<Self> {
        spec.domain().check_state(&x_init)?;
        Ok(Self { spec, active: BTreeMap::new(), x_init })
    }

    pub fn spec(&self) -> &CoveringSpec {
        &self.spec
    }

    pub fn x_init(&self) -> &[f64] {
        &self.x_init
    }

    /// Instantiates a component (idempotent).
    pub fn activate(&mut self, index: CoverIndex) -> Result<&VectorFnn> {
        if !self.active.contains_key(&index) {
            let f = self.spec.materialize(&index)?;
            self.active.insert(index.clone(), f);
        }
        Ok(&self.active[&index])
    }

    pub fn component(&self, index: &CoverIndex) -> Option<&VectorFnn> {
        self.active.get(index)
    }

    pub fn active_indices(&self) -> impl Iterator<Item = &CoverIndex> {
        self.active.keys()
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Runs each requested block from the shared initial state.
    pub fn concat_run(&self, indices: &[CoverIndex], inputs: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
        let comps = indices
            .iter()
            .map(|i| {
                self.active.get(i).ok_or_else(|| Error::IndexOutOfRange(format!("component {:?} is not active", i.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(comps.par_iter().map(|f| run_unchecked(*f, &self.x_init, inputs)).collect())
    }

    /// Dense block-diagonal form of the requested blocks.
    pub fn dense(&self, indices: &[CoverIndex]) -> Result<DenseConcat> {
        let comps = indices
            .iter()
            .map(|i| {
                self.active.get(i).ok_or_else(|| Error::IndexOutOfRange(format!("component {:?} is not active", i.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        DenseConcat::from_blocks(&comps)
    }
}

/// `s(t) = A act(B s(t−1) + C u(t) + d) + e` with block-diagonal `A`, `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseConcat {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    pub activation: Activation,
    pub block_dim: usize,
}

impl DenseConcat {
    pub fn from_blocks(blocks: &[&VectorFnn]) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::InvalidArgument("no blocks".into()))?;
        let (dd, ee, k) = (first.state_dim(), first.input_dim(), first.hidden_count());
        let m = blocks.len();
        let hidden = m * dd * k;
        let mut a = DMatrix::zeros(m * dd, hidden);
        let mut b = DMatrix::zeros(hidden, m * dd);
        let mut c = DMatrix::zeros(hidden, ee);
        let mut d = DVector::zeros(hidden);
        let mut e = DVector::zeros(m * dd);
        for (blk, f) in blocks.iter().enumerate() {
            if f.state_dim() != dd
                || f.input_dim() != ee
                || f.hidden_count() != k
                || f.activation() != first.activation()
            {
                return Err(Error::InvalidArgument("blocks must share shape and activation".into()));
            }
            for (j, comp) in f.components().iter().enumerate() {
                let row = blk * dd + j;
                e[row] = comp.e;
                for n in 0..k {
                    let h = (blk * dd + j) * k + n;
                    a[(row, h)] = comp.a[n];
                    for (s, w) in comp.b_row(n).iter().enumerate() {
                        b[(h, blk * dd + s)] = *w;
                    }
                    for (s, w) in comp.c_row(n).iter().enumerate() {
                        c[(h, s)] = *w;
                    }
                    d[h] = comp.d[n];
                }
            }
        }
        Ok(Self { a, b, c, d, e, activation: first.activation().clone(), block_dim: dd })
    }

    pub fn blocks(&self) -> usize {
        self.e.len() / self.block_dim
    }

    pub fn step(&self, s: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let z = &self.b * s + &self.c * u + &self.d;
        let h = z.map(|v| self.activation.eval(v));
        &self.a * h + &self.e
    }

    pub fn run(&self, x_init: &[f64], inputs: &[Vec<f64>]) -> Vec<DVector<f64>> {
        let m = self.blocks();
        let mut s = DVector::from_iterator(m * self.block_dim, (0..m).flat_map(|_| x_init.iter().copied()));
        inputs
            .iter()
            .map(|u| {
                s = self.step(&s, &DVector::from_column_slice(u));
                s.clone()
            })
            .collect()
    }

    /// One-hot readout `W` with `W s = s^{[block]}`.
    pub fn readout(&self, block: usize) -> DMatrix<f64> {
        let dd = self.block_dim;
        let mut w = DMatrix::zeros(dd, self.e.len());
        for j in 0..dd {
            w[(j, block * dd + j)] = 1.0;
        }
        w
    }
}

/// Outcome of selecting the covering component for one target.
#[derive(Debug, Clone)]
pub struct Selection {
    pub index: CoverIndex,
    pub approx: VectorFnn,
    pub snapped: VectorFnn,
}

fn same_flavor(a: &Flavor, b: &Flavor) -> bool {
    match (a, b) {
        (Flavor::Relu, Flavor::Relu) => true,
        (Flavor::Sigmoid { lambda: l1, sigma: s1 }, Flavor::Sigmoid { lambda: l2, sigma: s2 }) => l1 == l2 && s1 == s2,
        _ => false,
    }
}

/// Approximates a Barron-certified system by a network inside `family`.
pub fn approximate_in_family(sys: &TargetSystem, family: &FnnFamily, seed: u64) -> Result<VectorFnn> {
    let comps = sys.components().ok_or_else(|| Error::Precondition("system carries no Barron components".into()))?;
    if sys.barron_m() > family.m * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "target constant M = {} exceeds the family constant {}",
            sys.barron_m(),
            family.m
        )));
    }
    let seeds = crate::barron::component_seeds(seed, comps.len());
    crate::barron::approximate_components(comps, family.n, &family.flavor, family.m, &seeds)
}

/// Covering-selector readout: approximate, then snap to the covering.
pub fn select_readout(g: &TargetSystem, spec: &CoveringSpec, flavor: &Flavor, seed: u64) -> Result<Selection> {
    if !same_flavor(flavor, &spec.family().flavor) {
        return Err(Error::InvalidArgument(format!(
            "flavor {} does not match the covering family {}",
            flavor.name(),
            spec.family().flavor.name()
        )));
    }
    if g.domain() != spec.domain() {
        return Err(Error::InvalidArgument("target and covering live on different domains".into()));
    }
    let approx = approximate_in_family(g, spec.family(), seed)?;
    let (index, snapped) = spec.snap_vector(&approx)?;
    Ok(Selection { index, approx, snapped })
}

/// Per-target measurements of the concatenated-reservoir experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetOutcome {
    pub eps_hat: f64,
    pub cover_gap: f64,
    pub werr_hat: f64,
    pub precondition_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstError {
    pub targets: Vec<TargetOutcome>,
    pub eps_hat_max: f64,
    pub werr_hat: f64,
    pub bound: f64,
}

impl WorstError {
    pub fn pass(&self) -> bool {
        self.werr_hat <= self.bound && self.targets.iter().all(|t| t.precondition_ok)
    }
}

/// Worst filter error over a target batch with the selected covering
/// components, against `(ε̂_max + Γ) Σ_{i<T} L^i`.
pub fn worst_error(
    spec: &CoveringSpec,
    targets: &[TargetSystem],
    sampler: &InputSampler,
    grid: &EvalGrid,
    horizon: usize,
    seed: u64,
) -> Result<WorstError> {
    let gamma = spec.gamma();
    let dom = *spec.domain();
    let seqs = sampler.sequences(&dom, horizon)?;
    let outcomes = targets
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<TargetOutcome> {
            let sel = select_readout(g, spec, &spec.family().flavor, derive_seed(seed, &[stream::TARGETS, i as u64]))?;
            let eps_hat = function_gap(g, &sel.approx, grid, dom.p);
            let cover_gap = function_gap(g, &sel.snapped, grid, dom.p);
            let precondition_ok = eps_hat + gamma <= dom.state_radius - g.range_p();
            let werr_hat = filter_distance_on(g, g.x_init(), &sel.snapped, g.x_init(), &seqs, dom.p);
            Ok(TargetOutcome { eps_hat, cover_gap, werr_hat, precondition_ok })
        })
        .collect::<Result<Vec<_>>>()?;
    let eps_hat_max = outcomes.iter().map(|t| t.eps_hat).fold(0.0, f64::max);
    let werr_hat = outcomes.iter().map(|t| t.werr_hat).fold(0.0, f64::max);
    let l = targets.iter().map(|g| g.lipschitz()).fold(0.0, f64::max);
    let bound = if targets.is_empty() { 0.0 } else { internal_error_bound(eps_hat_max + gamma, l, horizon)? };
    Ok(WorstError { targets: outcomes, eps_hat_max, werr_hat, bound })
}

/// Order-T cascade of a base map: block 1 is `g(x_init, u(t))`, block `k`
/// is `g(x_{k−1}(t−1), u(t))`, and the output is the last block.
#[derive(Debug, Clone)]
pub struct CascadeReservoir<G> {
    base: G,
    order: usize,
    x_init: Vec<f64>,
}

impl<G: StateMap> CascadeReservoir<G> {
    pub fn new(base: G, order: usize, x_init: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("cascade order must be at least 1".into()));
        }
        if x_init.len() != base.state_dim() {
            return Err(Error::DimensionMismatch { expected: base.state_dim(), got: x_init.len() });
        }
        Ok(Self { base, order, x_init })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn base(&self) -> &G {
        &self.base
    }

    /// Full cascade states (`T` blocks) after each input.
    pub fn run_states(&self, inputs: &[Vec<f64>], initial_block: Option<&[Vec<f64>]>) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut blocks: Vec<Vec<f64>> = match initial_block {
            Some(b) => {
                if b.len() != self.order {
                    return Err(Error::DimensionMismatch { expected: self.order, got: b.len() });
                }
                if let Some(bad) = b.iter().find(|x| x.len() != self.x_init.len()) {
                    return Err(Error::DimensionMismatch { expected: self.x_init.len(), got: bad.len() });
                }
                b.to_vec()
            }
            None => vec![self.x_init.clone(); self.order],
        };
        let mut out = Vec::with_capacity(inputs.len());
        for u in inputs {
            let next: Vec<Vec<f64>> = (0..self.order)
                .map(|k| {
                    let prev = if k == 0 { &self.x_init } else { &blocks[k - 1] };
                    self.base.apply(prev, u)
                })
                .collect();
            blocks = next;
            out.push(blocks.clone());
        }
        Ok(out)
    }

    /// Last-block outputs.
    pub fn cascade_run(&self, inputs: &[Vec<f64>], initial_block: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("cascade needs at least one input".into()));
        }
        Ok(self.run_states(inputs, initial_block)?.into_iter().map(|mut b| b.pop().unwrap()).collect())
    }

    /// Output at the final step only, computed from the last `T` inputs.
    pub fn final_output(&self, inputs: &[Vec<f64>]) -> Vec<f64> {
        let start = inputs.len().saturating_sub(self.order);
        let tail = &inputs[start..];
        let mut x = self.x_init.clone();
        for u in tail {
            x = self.base.apply(&x, u);
        }
        x
    }
}

/// `⌈log_L(tol / 2S)⌉`, the steps after which initial conditions matter
/// less than `tol` for an `L`-contraction.
pub fn forgetting_time(l: f64, state_radius: f64, tol: f64) -> usize {
    if l <= 0.0 {
        return 1;
    }
    ((tol / (2.0 * state_radius)).ln() / l.ln()).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMemory {
    pub gap: f64,
    pub burn_in: usize,
}

fn check_contracting(g: &TargetSystem, seed: u64) -> Result<()> {
    let dom = g.domain();
    let l = g.lipschitz();
    if !(l < 1.0) {
        return Err(Error::NotContracting(format!("declared L = {l} is not below 1")));
    }
    let prof = contraction_profile(g, dom, 8, 16, derive_seed(seed, &[stream::CONTRACTION]))?;
    for (t, v) in prof.iter().enumerate() {
        let null = 2.0 * dom.state_radius * l.powi(t as i32 + 1);
        if *v > null * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::NotContracting(format!("gap {v} after {} steps exceeds {null}", t + 1)));
        }
    }
    Ok(())
}

/// Max over random long sequences of `‖x_long(final) − cascade_T(final)‖_p`,
/// where the long run approximates the left-infinite filter.
pub fn finite_memory_gap(
    g: &TargetSystem,
    order: usize,
    burn_in: Option<usize>,
    trials: usize,
    seed: u64,
) -> Result<FiniteMemory> {
    check_contracting(g, seed)?;
    let dom = *g.domain();
    let burn_in = burn_in.unwrap_or_else(|| order + forgetting_time(g.lipschitz(), dom.state_radius, 1e-9));
    let cas = CascadeReservoir::new(g, order, g.x_init().to_vec())?;
    let gap = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = derived_rng(seed, &[stream::CASCADE, k as u64]);
            let inputs: Vec<Vec<f64>> = (0..burn_in + order).map(|_| dom.sample_input(&mut rng)).collect();
            let long = run_unchecked(g, g.x_init(), &inputs);
            dom.p.dist(long.last().unwrap(), &cas.final_output(&inputs))
        })
        .reduce(|| 0.0, f64::max);
    Ok(FiniteMemory { gap, burn_in })
}

/// Long-run target state against the cascade of an approximating map.
pub fn cascade_long_run_error<F: StateMap>(
    g: &TargetSystem,
    f: &F,
    order: usize,
    burn_in: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let dom = *g.domain();
    let cas = CascadeReservoir::new(f, order, g.x_init().to_vec())?;
    Ok((0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = derived_rng(seed, &[stream::CASCADE, k as u64]);
            let inputs: Vec<Vec<f64>> = (0..burn_in + order).map(|_| dom.sample_input(&mut rng)).collect();
            let long = run_unchecked(g, g.x_init(), &inputs);
            dom.p.dist(long.last().unwrap(), &cas.final_output(&inputs))
        })
        .reduce(|| 0.0, f64::max))
}

/// `Δ + p Σ_{i<T} L^i`.
pub fn cascade_error_bound(delta: f64, p_val: f64, l: f64, order: usize) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("Δ must be non-negative, got {delta}")));
    }
    Ok(delta + internal_error_bound(p_val, l, order)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionCheck {
    pub cascade_gap: f64,
    pub filter_gap: f64,
}

impl ReductionCheck {
    pub fn holds(&self) -> bool {
        self.cascade_gap <= self.filter_gap
    }
}

fn read_out(w: Option<&DMatrix<f64>>, x: &[f64]) -> Vec<f64> {
    match w {
        Some(w) => (w * DVector::from_column_slice(x)).iter().copied().collect(),
        None => x.to_vec(),
    }
}

/// Compares the read-out cascaded outputs of two maps over long sequences
/// with their read-out finite-length filter gap on the matching length-`T`
/// suffixes. A missing readout is the identity on the last block.
#[allow(clippy::too_many_arguments)]
pub fn cascade_reduction_check<A: StateMap, B: StateMap>(
    g1: &A,
    g2: &B,
    w1: Option<&DMatrix<f64>>,
    w2: Option<&DMatrix<f64>>,
    x_init: &[f64],
    order: usize,
    sequences: &[Vec<Vec<f64>>],
    p: NormDegree,
) -> Result<ReductionCheck> {
    for (w, g) in [(w1, g1.state_dim()), (w2, g2.state_dim())] {
        if let Some(w) = w {
            if w.ncols() != g {
                return Err(Error::DimensionMismatch { expected: g, got: w.ncols() });
            }
        }
    }
    let rows = |w: Option<&DMatrix<f64>>, d: usize| w.map_or(d, |w| w.nrows());
    if rows(w1, g1.state_dim()) != rows(w2, g2.state_dim()) {
        return Err(Error::InvalidArgument("readouts have different output dimensions".into()));
    }
    let c1 = CascadeReservoir::new(g1, order, x_init.to_vec())?;
    let c2 = CascadeReservoir::new(g2, order, x_init.to_vec())?;
    let mut cascade_gap: f64 = 0.0;
    let mut suffixes = Vec::new();
    for seq in sequences {
        if seq.is_empty() {
            continue;
        }
        let o1 = c1.cascade_run(seq, None)?;
        let o2 = c2.cascade_run(seq, None)?;
        for t in order.saturating_sub(1)..seq.len() {
            cascade_gap = cascade_gap.max(p.dist(&read_out(w1, &o1[t]), &read_out(w2, &o2[t])));
            suffixes.push(seq[t + 1 - order..=t].to_vec());
        }
    }
    let filter_gap = suffixes
        .par_iter()
        .map(|u| {
            let a = run_unchecked(g1, x_init, u);
            let b = run_unchecked(g2, x_init, u);
            a.iter().zip(&b).map(|(x, y)| p.dist(&read_out(w1, x), &read_out(w2, y))).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(ReductionCheck { cascade_gap, filter_gap })
}

/// Arithmetic of the cascade construction at rate `N^{−1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport {
    pub n: usize,
    pub order: usize,
    pub gamma: f64,
    pub covering_bound: ClosedFormBound,
    pub covering_count: BigUint,
    pub node_count: BigUint,
    pub error_bound: f64,
}

/// Parameters of [`scale_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub state_dim: usize,
    pub input_dim: usize,
    pub m: f64,
    pub l_sc: f64,
    pub p: NormDegree,
    pub state_radius: f64,
    pub gamma0: f64,
    pub kappa: f64,
}

/// `T = ⌈log_L(N^{−1/2})⌉` (at least 1), `Γ = γ0 N^{−1/2}`, node count
/// `T · 4DN · N_{N,M,Γ}` with the integer-base covering bound, and error
/// bound `2S L^T + p(D,E,M,N,Γ) Σ_{i<T} L^i`.
pub fn scale_report(n: usize, params: &ScaleParams) -> Result<ScaleReport> {
    let ScaleParams { state_dim: d, input_dim: e, m, l_sc, p, state_radius, gamma0, kappa } = *params;
    if !(l_sc > 0.0 && l_sc < 1.0) {
        return Err(Error::InvalidArgument(format!("L_sc must lie in (0, 1), got {l_sc}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let rate = (n as f64).sqrt().recip();
    let order = ((rate.ln() / l_sc.ln()) - 1e-9).ceil().max(1.0) as usize;
    let gamma = gamma0 * rate;
    let covering_bound = ClosedFormBound::new(d, e, m, n, gamma, p);
    let covering_count = covering_bound.integer_upper();
    let node_count = BigUint::from(order) * BigUint::from(4 * d * n) * &covering_count;
    let pv = p_bound(d, e, m, n, gamma, kappa, p);
    let error_bound = 2.0 * state_radius * l_sc.powi(order as i32) + pv * geometric_sum(l_sc, order);
    Ok(ScaleReport { n, order, gamma, covering_bound, covering_count, node_count, error_bound })
}

/// The domain a cascade of `g` lives on.
pub fn cascade_domain(dom: &DomainSpec, order: usize) -> Result<DomainSpec> {
    DomainSpec::new(dom.p, dom.state_radius, dom.input_radius, dom.state_dim * order, dom.input_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::FnMap;

    #[test]
    fn cascade_order_one_is_first_row() {
        let g = FnMap::new(1, 1, |x: &[f64], u: &[f64]| vec![0.5 * x[0] + u[0]]);
        let cas = CascadeReservoir::new(&g, 1, vec![0.2]).unwrap();
        let out = cas.cascade_run(&[vec![0.3], vec![-0.1]], None).unwrap();
        assert_eq!(out, vec![vec![0.1 + 0.3], vec![0.1 - 0.1]]);
    }

    #[test]
    fn cascade_order_two_by_hand() {
        let g = FnMap::new(1, 1, |x: &[f64], u: &[f64]| vec![0.5 * x[0] + u[0]]);
        let cas = CascadeReservoir::new(&g, 2, vec![0.0]).unwrap();
        let u = [vec![1.0], vec![2.0], vec![3.0]];
        let out = cas.cascade_run(&u, Some(&[vec![4.0], vec![8.0]])).unwrap();
        // t=1: block2 = g(4, 1) = 3; t=2: block2 = g(g(0,1), 2) = 2.5; t=3: g(g(0,2), 3) = 4
        assert_eq!(out, vec![vec![3.0], vec![2.5], vec![4.0]]);
        assert_eq!(cas.final_output(&u), vec![4.0]);
    }

    #[test]
    fn cascade_bound_examples() {
        assert!((cascade_error_bound(0.01, 0.1, 0.5, 3).unwrap() - 0.185).abs() < 1e-15);
        assert_eq!(cascade_error_bound(0.3, 0.0, 0.5, 3).unwrap(), 0.3);
        assert!((cascade_error_bound(0.3, 0.2, 0.5, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn scale_orders() {
        let params = ScaleParams {
            state_dim: 1,
            input_dim: 1,
            m: 1.0,
            l_sc: 0.5,
            p: NormDegree::Inf,
            state_radius: 1.0,
            gamma0: 1.0,
            kappa: 1.0,
        };
        assert_eq!(scale_report(1, &params).unwrap().order, 1);
        assert_eq!(scale_report(4, &params).unwrap().order, 1);
        assert_eq!(scale_report(16, &params).unwrap().order, 2);
        assert_eq!(scale_report(64, &params).unwrap().order, 3);
    }

    #[test]
    fn forgetting() {
        assert_eq!(forgetting_time(0.5, 1.0, 0.25), 3);
    }
}
