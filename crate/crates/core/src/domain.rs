//! Norms, the product domain `B̄_S × B̄_I`, samplers on p-balls, and the
//! deterministic evaluation grid used for empirical sup norms.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derived_rng, stream, Rng};

/// Norm degree `p ∈ {1, 2, ∞}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormDegree {
    One,
    Two,
    Inf,
}

impl NormDegree {
    /// Hölder conjugate `q` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> NormDegree {
        match self {
            NormDegree::One => NormDegree::Inf,
            NormDegree::Two => NormDegree::Two,
            NormDegree::Inf => NormDegree::One,
        }
    }

    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormDegree::One => v.iter().map(|x| x.abs()).sum(),
            NormDegree::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormDegree::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            NormDegree::One => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            NormDegree::Two => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            NormDegree::Inf => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    /// `d^{1/p}`: the factor relating the p-norm of a vector of `d` equal
    /// entries to one entry.
    pub fn root(self, d: usize) -> f64 {
        let d = d as f64;
        match self {
            NormDegree::One => d,
            NormDegree::Two => d.sqrt(),
            NormDegree::Inf => 1.0,
        }
    }

    /// Aggregates per-coordinate magnitudes into a p-norm.
    pub fn aggregate(self, parts: impl IntoIterator<Item = f64>) -> f64 {
        let parts: Vec<f64> = parts.into_iter().collect();
        self.norm(&parts)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NormDegree::One => "1",
            NormDegree::Two => "2",
            NormDegree::Inf => "inf",
        }
    }
}

impl fmt::Display for NormDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormDegree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" => Ok(NormDegree::One),
            "2" => Ok(NormDegree::Two),
            "inf" | "infinity" | "∞" => Ok(NormDegree::Inf),
            other => Err(Error::InvalidArgument(format!("norm degree must be 1, 2 or inf, got {other:?}"))),
        }
    }
}

/// Scales `v` back onto the closed ball of radius `r` if it lies outside.
pub fn clamp_to_ball(v: &mut [f64], r: f64, p: NormDegree) {
    let n = p.norm(v);
    if n > r && n > 0.0 {
        let s = r / n;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Uniform sample from the closed p-ball of radius `r` in `dim` dimensions.
pub fn sample_ball(rng: &mut Rng, dim: usize, r: f64, p: NormDegree) -> Vec<f64> {
    match p {
        NormDegree::Inf => (0..dim).map(|_| rng.random_range(-r..=r)).collect(),
        NormDegree::Two => {
            let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = NormDegree::Two.norm(&g);
            if n == 0.0 {
                return vec![0.0; dim];
            }
            let radius = r * rng.random::<f64>().powf(1.0 / dim as f64);
            g.iter().map(|x| x / n * radius).collect()
        }
        NormDegree::One => {
            let e: Vec<f64> = (0..=dim).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = e.iter().sum();
            e[..dim]
                .iter()
                .map(|x| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * r * x / total
                })
                .collect()
        }
    }
}

/// Uniform sample from the sphere `‖v‖_p = r` (radial projection of a cube or
/// Gaussian sample; not uniform in surface measure for p ≠ 2, which is fine
/// for sup probing).
pub fn sample_sphere(rng: &mut Rng, dim: usize, r: f64, p: NormDegree) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = p.norm(&v);
        if n > 0.0 {
            return v.iter().map(|x| x / n * r).collect();
        }
    }
}

/// The product domain `B̄_{S,I} = B̄_S × B̄_I` with p-norm balls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub p: NormDegree,
    pub state_radius: f64,
    pub input_radius: f64,
    pub state_dim: usize,
    pub input_dim: usize,
}

impl DomainSpec {
    pub fn new(
        p: NormDegree,
        state_radius: f64,
        input_radius: f64,
        state_dim: usize,
        input_dim: usize,
    ) -> Result<Self> {
        if !state_radius.is_finite() || !input_radius.is_finite() {
            return Err(Error::NonFinite("domain radius"));
        }
        if state_radius <= 0.0 || input_radius <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "radii must be positive, got S = {state_radius}, I = {input_radius}"
            )));
        }
        if state_dim == 0 || input_dim == 0 {
            return Err(Error::InvalidArgument("state and input dimensions must be at least 1".into()));
        }
        Ok(Self { p, state_radius, input_radius, state_dim, input_dim })
    }

    pub fn q(&self) -> NormDegree {
        self.p.conjugate()
    }

    /// Total input dimension `Q = D + E` of the state map.
    pub fn joint_dim(&self) -> usize {
        self.state_dim + self.input_dim
    }

    /// `‖ω‖_B = sup_{(x,u) ∈ B̄_{S,I}} |ω·(x,u)| = S‖ω_x‖_q + I‖ω_u‖_q`.
    pub fn omega_norm(&self, omega: &[f64]) -> f64 {
        let q = self.q();
        let (ws, wu) = omega.split_at(self.state_dim);
        self.state_radius * q.norm(ws) + self.input_radius * q.norm(wu)
    }

    /// `‖b‖_{B̄_S} = S‖b‖_q`.
    pub fn state_weight_norm(&self, b: &[f64]) -> f64 {
        self.state_radius * self.q().norm(b)
    }

    /// `‖c‖_{B̄_I} = I‖c‖_q`.
    pub fn input_weight_norm(&self, c: &[f64]) -> f64 {
        self.input_radius * self.q().norm(c)
    }

    fn tol(r: f64) -> f64 {
        1e-12 * r.max(1.0)
    }

    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch { expected: self.state_dim, got: x.len() });
        }
        let n = self.p.norm(x);
        if n > self.state_radius + Self::tol(self.state_radius) {
            return Err(Error::OutsideDomain { what: "state", norm: n, radius: self.state_radius });
        }
        Ok(())
    }

    pub fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: u.len() });
        }
        let n = self.p.norm(u);
        if n > self.input_radius + Self::tol(self.input_radius) {
            return Err(Error::OutsideDomain { what: "input", norm: n, radius: self.input_radius });
        }
        Ok(())
    }

    /// Checks a joint point `(x, u)` of length `D + E`.
    pub fn check_joint(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.joint_dim() {
            return Err(Error::DimensionMismatch { expected: self.joint_dim(), got: z.len() });
        }
        let (x, u) = z.split_at(self.state_dim);
        self.check_state(x)?;
        self.check_input(u)
    }

    pub fn sample_state(&self, rng: &mut Rng) -> Vec<f64> {
        sample_ball(rng, self.state_dim, self.state_radius, self.p)
    }

    pub fn sample_input(&self, rng: &mut Rng) -> Vec<f64> {
        sample_ball(rng, self.input_dim, self.input_radius, self.p)
    }

    /// Input vectors at the corners of the input ball: every sign pattern
    /// in `{±1}^E`, scaled to p-norm `I`.
    pub fn input_corners(&self) -> Vec<Vec<f64>> {
        let e = self.input_dim;
        let scale = self.input_radius / self.p.root(e);
        (0..(1usize << e))
            .map(|mask| (0..e).map(|k| if mask >> k & 1 == 1 { scale } else { -scale }).collect())
            .collect()
    }
}

/// Fixed evaluation set on `B̄_{S,I}`: a tensor grid (radially pulled onto
/// the balls for p < ∞) plus seeded uniform random points. Sups computed on it
/// are lower bounds of the true sup.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    state_dim: usize,
    input_dim: usize,
    points: Vec<f64>,
}

impl EvalGrid {
    pub fn build(domain: &DomainSpec, grid_budget: usize, n_random: usize, seed: u64) -> Self {
        let q = domain.joint_dim();
        let per_axis = ((grid_budget.max(1) as f64).powf(1.0 / q as f64).ceil() as usize).max(2);
        let axis =
            |r: f64| -> Vec<f64> { (0..per_axis).map(|i| -r + 2.0 * r * i as f64 / (per_axis - 1) as f64).collect() };
        let sa = axis(domain.state_radius);
        let ia = axis(domain.input_radius);
        let total = per_axis.pow(q as u32);
        let mut points = Vec::with_capacity((total + n_random) * q);
        let mut idx = vec![0usize; q];
        for _ in 0..total {
            let mut x: Vec<f64> = (0..domain.state_dim).map(|k| sa[idx[k]]).collect();
            let mut u: Vec<f64> = (0..domain.input_dim).map(|k| ia[idx[domain.state_dim + k]]).collect();
            clamp_to_ball(&mut x, domain.state_radius, domain.p);
            clamp_to_ball(&mut u, domain.input_radius, domain.p);
            points.extend_from_slice(&x);
            points.extend_from_slice(&u);
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < per_axis {
                    break;
                }
                *slot = 0;
            }
        }
        let mut rng = derived_rng(seed, &[stream::GRID]);
        for _ in 0..n_random {
            points.extend(domain.sample_state(&mut rng));
            points.extend(domain.sample_input(&mut rng));
        }
        Self { state_dim: domain.state_dim, input_dim: domain.input_dim, points }
    }

    /// Builds an evaluation set from explicit joint points.
    pub fn from_points(state_dim: usize, input_dim: usize, points: Vec<Vec<f64>>) -> Self {
        let flat = points.into_iter().flatten().collect();
        Self { state_dim, input_dim, points: flat }
    }

    pub fn len(&self) -> usize {
        self.points.len() / (self.state_dim + self.input_dim)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Iterates `(x, u)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        self.points.chunks_exact(self.state_dim + self.input_dim).map(move |z| z.split_at(self.state_dim))
    }

    /// Joint points `(x, u)` concatenated.
    pub fn joint_points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.state_dim + self.input_dim)
    }

    /// `max_k |f(z_k)|` over the grid, in parallel.
    pub fn sup_scalar<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64], &[f64]) -> f64 + Sync,
    {
        let q = self.state_dim + self.input_dim;
        self.points
            .par_chunks(q * 256)
            .map(|block| {
                block.chunks_exact(q).fold(0.0f64, |m, z| {
                    let (x, u) = z.split_at(self.state_dim);
                    m.max(f(x, u).abs())
                })
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `max_k ‖f(z_k)‖_p` over the grid for a vector-valued function.
    pub fn sup_vector<F>(&self, p: NormDegree, f: F) -> f64
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
    {
        self.sup_scalar(|x, u| p.norm(&f(x, u)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn conjugates() {
        assert_eq!(NormDegree::Inf.conjugate(), NormDegree::One);
        assert_eq!(NormDegree::One.conjugate(), NormDegree::Inf);
        assert_eq!(NormDegree::Two.conjugate(), NormDegree::Two);
    }

    #[test]
    fn omega_norm_is_dual_sup() {
        // ω = (1, 0) on S = I = 1 with p = ∞: sup |x| over |x| ≤ 1 is 1.
        let d = DomainSpec::new(NormDegree::Inf, 1.0, 1.0, 1, 1).unwrap();
        assert_eq!(d.omega_norm(&[1.0, 0.0]), 1.0);
        // brute-force the sup over the corners of the cube for a 2+1 domain
        let d = DomainSpec::new(NormDegree::Inf, 2.0, 0.5, 2, 1).unwrap();
        let w = [0.3, -1.2, 0.7];
        let mut best: f64 = 0.0;
        for mask in 0..8 {
            let z = [
                if mask & 1 == 1 { 2.0 } else { -2.0 },
                if mask & 2 == 2 { 2.0 } else { -2.0 },
                if mask & 4 == 4 { 0.5 } else { -0.5 },
            ];
            best = best.max(w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().abs());
        }
        assert!((d.omega_norm(&w) - best).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(DomainSpec::new(NormDegree::Two, 0.0, 1.0, 1, 1).is_err());
        assert!(DomainSpec::new(NormDegree::Two, 1.0, -1.0, 1, 1).is_err());
        assert!(DomainSpec::new(NormDegree::Two, f64::NAN, 1.0, 1, 1).is_err());
    }

    #[test]
    fn samples_stay_in_ball() {
        let mut rng = rng_from_seed(1);
        for p in [NormDegree::One, NormDegree::Two, NormDegree::Inf] {
            for _ in 0..2000 {
                let v = sample_ball(&mut rng, 3, 0.7, p);
                assert!(p.norm(&v) <= 0.7 + 1e-12);
            }
        }
    }

    #[test]
    fn grid_points_lie_in_domain() {
        for p in [NormDegree::One, NormDegree::Two, NormDegree::Inf] {
            let d = DomainSpec::new(p, 1.5, 0.5, 2, 1).unwrap();
            let g = EvalGrid::build(&d, 1000, 100, 3);
            assert_eq!(g.len(), 10usize.pow(3) + 100);
            for z in g.joint_points() {
                d.check_joint(z).unwrap();
            }
        }
    }

    #[test]
    fn corners_have_input_radius() {
        let d = DomainSpec::new(NormDegree::Two, 1.0, 2.0, 1, 2).unwrap();
        let c = d.input_corners();
        assert_eq!(c.len(), 4);
        for v in c {
            assert!((NormDegree::Two.norm(&v) - 2.0).abs() < 1e-12);
        }
    }
}
