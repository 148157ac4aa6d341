//! Brute-force pseudo-dimension of finite and linear hypothesis sets, and
//! the bump-grafting construction that destroys the echo state property.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;

use crate::domain::{DomainSpec, NormDegree};
use crate::dynsys::{run_filter, StateMap, TargetSystem};
use crate::error::{Error, Result};
use crate::rng::{derived_rng, stream};

/// Largest exhaustive search size.
pub const MAX_SHATTER_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisKind {
    /// Every linear readout of the feature vectors.
    AllReadouts,
    /// One-hot readouts: the listed hypotheses themselves.
    OneHot,
}

/// Hypotheses evaluated on a fixed pool. For [`HypothesisKind::OneHot`]
/// `values[h][i]` is hypothesis `h` on pool element `i`; for
/// [`HypothesisKind::AllReadouts`] `values[j][i]` is feature `j` on pool
/// element `i` and the hypotheses are all linear combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    values: Vec<Vec<f64>>,
    pool_len: usize,
    kind: HypothesisKind,
}

impl HypothesisSet {
    pub fn from_values(values: Vec<Vec<f64>>, kind: HypothesisKind) -> Result<Self> {
        let pool_len = values.first().map_or(0, Vec::len);
        if let Some(bad) = values.iter().find(|v| v.len() != pool_len) {
            return Err(Error::DimensionMismatch { expected: pool_len, got: bad.len() });
        }
        for v in &values {
            crate::error::ensure_finite(v, "hypothesis values")?;
        }
        Ok(Self { values, pool_len, kind })
    }

    /// Evaluates each callable on each pool element.
    pub fn evaluate<P, F>(hypotheses: &[F], pool: &[P], kind: HypothesisKind) -> Result<Self>
    where
        F: Fn(&P) -> f64,
    {
        Self::from_values(hypotheses.iter().map(|h| pool.iter().map(h).collect()).collect(), kind)
    }

    pub fn kind(&self) -> HypothesisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pool_len(&self) -> usize {
        self.pool_len
    }

    /// Restriction to a subset of hypotheses (rows).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let values = rows
            .iter()
            .map(|&r| self.values.get(r).cloned().ok_or_else(|| Error::IndexOutOfRange(format!("hypothesis {r}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { values, pool_len: self.pool_len, kind: self.kind })
    }

    fn shatters(&self, points: &[usize]) -> bool {
        match self.kind {
            HypothesisKind::OneHot => shatters_finite(&self.values, points),
            HypothesisKind::AllReadouts => shatters_linear(&self.values, points),
        }
    }
}

fn shatters_finite(values: &[Vec<f64>], points: &[usize]) -> bool {
    let k = points.len();
    if values.len() < (1usize << k) {
        return false;
    }
    // only the order of values against thresholds matters
    let mut candidates = Vec::with_capacity(k);
    for &i in points {
        let mut col: Vec<f64> = values.iter().map(|h| h[i]).collect();
        col.sort_by(f64::total_cmp);
        col.dedup();
        if col.len() < 2 {
            return false;
        }
        candidates.push(col.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect::<Vec<f64>>());
    }
    let full = 1usize << k;
    let mut choice = vec![0usize; k];
    let mut seen = vec![false; full];
    loop {
        seen.iter_mut().for_each(|s| *s = false);
        let mut distinct = 0;
        for h in values {
            let mut mask = 0usize;
            for (bit, &i) in points.iter().enumerate() {
                if h[i] >= candidates[bit][choice[bit]] {
                    mask |= 1 << bit;
                }
            }
            if !seen[mask] {
                seen[mask] = true;
                distinct += 1;
            }
        }
        if distinct == full {
            return true;
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return false;
            }
            choice[pos] += 1;
            if choice[pos] < candidates[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// For a vector space of functions a zero threshold suffices: the points
/// are shattered iff every sign pattern is strictly realizable.
fn shatters_linear(features: &[Vec<f64>], points: &[usize]) -> bool {
    let k = points.len();
    if features.len() < k {
        return false;
    }
    (0..1usize << k).into_par_iter().all(|pattern| {
        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let w: Vec<_> = features.iter().map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
        for (bit, &i) in points.iter().enumerate() {
            let sign = if pattern >> bit & 1 == 1 { 1.0 } else { -1.0 };
            let expr: Vec<_> = w.iter().zip(features).map(|(&v, f)| (v, sign * f[i])).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, 1.0);
        }
        lp.solve().is_ok()
    })
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < n - k + pos {
            idx[pos] += 1;
            for j in pos + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn some_subset_shattered(h: &HypothesisSet, k: usize) -> bool {
    let n = h.pool_len;
    let mut subsets = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        subsets.push(idx.clone());
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    subsets.par_iter().any(|s| h.shatters(s))
}

/// Largest `K ≤ k_max` such that some `K`-subset of the pool is shattered.
pub fn pdim_bruteforce(h: &HypothesisSet, k_max: usize) -> Result<usize> {
    if k_max > MAX_SHATTER_K {
        return Err(Error::Infeasible(format!("K_max = {k_max} exceeds {MAX_SHATTER_K}")));
    }
    if h.kind == HypothesisKind::AllReadouts && k_max > 6 {
        return Err(Error::Infeasible(format!("readout shattering is limited to K_max ≤ 6, got {k_max}")));
    }
    if h.pool_len < k_max {
        return Err(Error::InvalidArgument(format!("pool of {} points is smaller than K_max = {k_max}", h.pool_len)));
    }
    let mut best = 0;
    for k in 1..=k_max {
        // shattering is hereditary, so the first failure ends the search
        if !some_subset_shattered(h, k) {
            break;
        }
        best = k;
    }
    Ok(best)
}

/// Banach iteration of `x ↦ g(x, v0)` from the origin, cross-checked
/// against a second start at the first unit vector.
pub fn find_fixed_point<G: StateMap + ?Sized>(
    g: &G,
    v0: &[f64],
    p: NormDegree,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let dim = g.state_dim();
    let origin = vec![0.0; dim];
    let mut unit = vec![0.0; dim];
    unit[0] = 1.0;
    let l_hat = p.dist(&g.apply(&origin, v0), &g.apply(&unit, v0)) / p.dist(&origin, &unit);
    if !(l_hat < 1.0) {
        return Err(Error::NotContracting(format!("step ratio {l_hat} at the input")));
    }
    let iterate = |mut x: Vec<f64>| -> Result<Vec<f64>> {
        let mut step = f64::INFINITY;
        for _ in 0..max_iter {
            let next = g.apply(&x, v0);
            crate::error::ensure_finite(&next, "fixed-point iterate")?;
            step = p.dist(&next, &x);
            if step < tol {
                return Ok(x);
            }
            x = next;
        }
        Err(Error::NoConvergence { iterations: max_iter, last_step: step })
    };
    let a = iterate(origin)?;
    let b = iterate(unit)?;
    let agree = 2.0 * tol / (1.0 - l_hat) + 10.0 * tol;
    if p.dist(&a, &b) > agree {
        return Err(Error::NotContracting(format!("starts converged {} apart", p.dist(&a, &b))));
    }
    Ok(a)
}

fn smooth_step(t: f64) -> f64 {
    let h = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    let (a, b) = (h(t), h(1.0 - t));
    a / (a + b)
}

/// Smooth bump in the product norm `r = ‖x‖_p + ‖v‖_p`: 1 for `r ≤ τ/2`,
/// 0 for `r ≥ τ`.
pub fn bump(x_off: &[f64], v_off: &[f64], tau: f64, p: NormDegree) -> f64 {
    let r = p.norm(x_off) + p.norm(v_off);
    let half = 0.5 * tau;
    if r <= half {
        1.0
    } else if r >= tau {
        0.0
    } else {
        1.0 - smooth_step((r - half) / half)
    }
}

/// `g_τ = (1 − w_τ(x − z, v − v0)) g + w_τ(x − z, v − v0) z`.
#[derive(Clone)]
pub struct GraftedMap {
    pub base: TargetSystem,
    pub v0: Vec<f64>,
    pub x0: Vec<f64>,
    pub z: Vec<f64>,
    pub tau: f64,
}

impl StateMap for GraftedMap {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.base.input_dim()
    }
    fn apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let p = self.base.domain().p;
        let dx: Vec<f64> = x.iter().zip(&self.z).map(|(a, b)| a - b).collect();
        let dv: Vec<f64> = v.iter().zip(&self.v0).map(|(a, b)| a - b).collect();
        let w = bump(&dx, &dv, self.tau, p);
        let gx = self.base.apply(x, v);
        if w == 0.0 {
            return gx;
        }
        gx.iter().zip(&self.z).map(|(g, z)| (1.0 - w) * g + w * z).collect()
    }
}

impl GraftedMap {
    pub fn domain(&self) -> &DomainSpec {
        self.base.domain()
    }

    /// `‖g_τ(x, v0) − x‖_p` at both fixed points.
    pub fn fixed_point_residuals(&self) -> (f64, f64) {
        let p = self.domain().p;
        (p.dist(&self.apply(&self.x0, &self.v0), &self.x0), p.dist(&self.apply(&self.z, &self.v0), &self.z))
    }

    /// Sup-gap to the base map over `n` random points of the graft ball
    /// intersected with the domain, with the matching bound
    /// `τ + sup ‖g − x0‖_p` over the same points. Returns `(gap, ε)` with
    /// `ε = max(τ, sup ‖g − x0‖_p)`, so that `gap ≤ 2ε`.
    pub fn sup_gap(&self, n: usize, seed: u64) -> (f64, f64) {
        let dom = *self.domain();
        let p = dom.p;
        let points = graft_ball_points(&dom, &self.z, &self.v0, self.tau, n, seed);
        let (gap, modulus) = points
            .par_iter()
            .map(|(x, v)| {
                let gx = self.base.apply(x, v);
                (p.dist(&self.apply(x, v), &gx), p.dist(&gx, &self.x0))
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        (gap, self.tau.max(modulus))
    }

    /// Constant-input runs from both fixed points.
    pub fn constant_input_runs(&self, len: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let inputs = vec![self.v0.clone(); len];
        let dom = *self.domain();
        Ok((run_filter(self, &dom, &self.x0, &inputs)?, run_filter(self, &dom, &self.z, &inputs)?))
    }
}

/// Random points `(z + a, v0 + b)` with `‖a‖_p + ‖b‖_p ≤ τ`, kept when
/// inside the domain; the centre is always included.
fn graft_ball_points(
    dom: &DomainSpec,
    z: &[f64],
    v0: &[f64],
    tau: f64,
    n: usize,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    use rand::Rng as _;
    let p = dom.p;
    let mut rng = derived_rng(seed, &[stream::GRAFT]);
    let mut out = vec![(z.to_vec(), v0.to_vec())];
    let mut tries = 0;
    while out.len() < n + 1 && tries < 20 * (n + 1) {
        tries += 1;
        let share: f64 = rng.random();
        let radius = tau * rng.random::<f64>();
        let a = crate::domain::sample_ball(&mut rng, dom.state_dim, radius * share, p);
        let b = crate::domain::sample_ball(&mut rng, dom.input_dim, radius * (1.0 - share), p);
        let x: Vec<f64> = z.iter().zip(&a).map(|(z, a)| z + a).collect();
        let v: Vec<f64> = v0.iter().zip(&b).map(|(v, b)| v + b).collect();
        if dom.check_state(&x).is_ok() && dom.check_input(&v).is_ok() {
            out.push((x, v));
        }
    }
    out
}

/// Grafts a second fixed point at p-distance `τ` from the fixed point `x0`
/// of `g(·, v0)`, towards the farther of `±S e_1`.
pub fn graft_non_esp(g: &TargetSystem, v0: &[f64], tau: f64, seed: u64) -> Result<GraftedMap> {
    let dom = *g.domain();
    dom.check_input(v0)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("τ must be positive, got {tau}")));
    }
    let p = dom.p;
    let x0 = find_fixed_point(g, v0, p, 1e-12, 100_000)?;
    let mut z0 = vec![0.0; dom.state_dim];
    z0[0] = if x0[0] <= 0.0 { dom.state_radius } else { -dom.state_radius };
    let mut d = p.dist(&z0, &x0);
    if d == 0.0 {
        let mut rng = derived_rng(seed, &[stream::GRAFT, 1]);
        z0 = crate::domain::sample_sphere(&mut rng, dom.state_dim, dom.state_radius, p);
        d = p.dist(&z0, &x0);
    }
    if tau > d {
        return Err(Error::Precondition(format!("τ = {tau} exceeds the available distance {d}")));
    }
    let z: Vec<f64> = x0.iter().zip(&z0).map(|(x, z)| x + tau / d * (z - x)).collect();
    let map = GraftedMap { base: g.clone(), v0: v0.to_vec(), x0, z, tau };
    let (r0, rz) = map.fixed_point_residuals();
    if r0 >= 1e-9 || rz >= 1e-9 {
        return Err(Error::Precondition(format!("fixed-point residuals {r0}, {rz}")));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::FnMap;

    #[test]
    fn constants_have_pdim_one() {
        let h =
            HypothesisSet::from_values((0..4).map(|c| vec![c as f64; 5]).collect(), HypothesisKind::OneHot).unwrap();
        assert_eq!(pdim_bruteforce(&h, 3).unwrap(), 1);
        assert_eq!(pdim_bruteforce(&h.subset(&[2]).unwrap(), 3).unwrap(), 0);
    }

    #[test]
    fn guard() {
        let h = HypothesisSet::from_values(vec![vec![0.0; 30]], HypothesisKind::OneHot).unwrap();
        assert!(matches!(pdim_bruteforce(&h, 21), Err(Error::Infeasible(_))));
    }

    #[test]
    fn linear_features_shatter_up_to_rank() {
        // features 1 and x on 4 distinct points: rank 2
        let xs = [0.1, 0.4, -0.3, 0.9];
        let h = HypothesisSet::from_values(vec![vec![1.0; 4], xs.to_vec()], HypothesisKind::AllReadouts).unwrap();
        assert_eq!(pdim_bruteforce(&h, 4).unwrap(), 2);
    }

    #[test]
    fn fixed_points() {
        let g = FnMap::new(1, 1, |x: &[f64], _: &[f64]| vec![0.5 * x[0] + 0.25]);
        let x = find_fixed_point(&g, &[0.0], NormDegree::Inf, 1e-12, 1000).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-11);
        let c = FnMap::new(1, 1, |_: &[f64], _: &[f64]| vec![0.3]);
        assert_eq!(find_fixed_point(&c, &[0.0], NormDegree::Inf, 1e-12, 10).unwrap(), vec![0.3]);
        let id = FnMap::new(1, 1, |x: &[f64], _: &[f64]| x.to_vec());
        assert!(find_fixed_point(&id, &[0.0], NormDegree::Inf, 1e-12, 10).is_err());
    }

    #[test]
    fn bump_plateaus() {
        let p = NormDegree::Two;
        assert_eq!(bump(&[0.0], &[0.0], 0.2, p), 1.0);
        assert_eq!(bump(&[0.1], &[0.0], 0.2, p), 1.0);
        assert_eq!(bump(&[0.1], &[0.1], 0.2, p), 0.0);
        let mid = bump(&[0.15], &[0.0], 0.2, p);
        assert!(mid > 0.0 && mid < 1.0);
        assert!((mid - 0.5).abs() < 1e-12);
    }
}
