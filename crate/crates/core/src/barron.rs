//! Barron-class targets given as finite Fourier mixtures, sampling from the
//! signed measures of their integral representation, and the Monte-Carlo
//! network constructions built on those samples.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::domain::DomainSpec;
use crate::error::{ensure_finite, Error, Result};
use crate::fnn::{Activation, Flavor, ScalarFnn, SigmoidSpec, VectorFnn};
use crate::quad;
use crate::rng::{derive_seed, derived_rng, stream};

const TWO_PI: f64 = 2.0 * PI;

/// One real Fourier term `α [cos(ω·x + φ) − cos φ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierAtom {
    pub omega: Vec<f64>,
    pub alpha: f64,
    pub phi: f64,
}

impl FourierAtom {
    pub fn new(omega: Vec<f64>, alpha: f64, phi: f64) -> Self {
        Self { omega, alpha, phi }
    }
}

/// A point mass of the complex Fourier transform: `g̃(ω) = weight · e^{iθ}`.
/// Every real atom contributes the conjugate pair at `±ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedAtom {
    pub source: usize,
    pub omega: Vec<f64>,
    /// `‖ω‖_B`.
    pub norm_b: f64,
    pub theta: f64,
    pub weight: f64,
    mass_plus: f64,
    mass_minus: f64,
}

/// One draw `(ω_j, t)` from `μ_+` or `μ_−`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSample {
    /// Index into [`BarronTarget::signed_atoms`].
    pub atom_index: usize,
    pub t: f64,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarronTarget {
    atoms: Vec<FourierAtom>,
    g0: f64,
    domain: DomainSpec,
    barron_m: f64,
    v: f64,
    v_plus: f64,
    v_minus: f64,
    signed: Vec<SignedAtom>,
}

/// `∫_0^x max(sin s, 0) ds` for any real `x`.
fn positive_sine_mass(x: f64) -> f64 {
    let k = (x / TWO_PI).floor();
    let r = x - k * TWO_PI;
    2.0 * k + if r <= PI { 1.0 - r.cos() } else { 2.0 }
}

/// Inverse of [`positive_sine_mass`] restricted to points where the density
/// is positive.
fn positive_sine_mass_inv(c: f64) -> f64 {
    let k = (c / 2.0).floor();
    let rem = (c - 2.0 * k).clamp(0.0, 2.0);
    k * TWO_PI + (1.0 - rem).clamp(-1.0, 1.0).acos()
}

/// Mass of `max(±sin s, 0)` over `[θ, θ + Y]`.
fn signed_sine_mass(theta: f64, y: f64, sign: i8) -> f64 {
    let shift = if sign > 0 { 0.0 } else { PI };
    let m = positive_sine_mass(theta - shift + y) - positive_sine_mass(theta - shift);
    m.max(0.0)
}

fn wrap_phase(x: f64) -> f64 {
    x.rem_euclid(TWO_PI)
}

impl BarronTarget {
    /// Builds the mixture `g(x) = g0 + Σ α_k [cos(ω_k·x + φ_k) − cos φ_k]`.
    pub fn fourier_mixture(atoms: Vec<FourierAtom>, g0: f64, domain: DomainSpec) -> Result<Self> {
        ensure_finite(&[g0], "g0")?;
        let q = domain.joint_dim();
        let mut signed = Vec::with_capacity(2 * atoms.len());
        let mut fourier_mass = 0.0;
        for (k, atom) in atoms.iter().enumerate() {
            if atom.omega.len() != q {
                return Err(Error::DimensionMismatch { expected: q, got: atom.omega.len() });
            }
            ensure_finite(&atom.omega, "atom frequency")?;
            ensure_finite(&[atom.alpha, atom.phi], "atom amplitude or phase")?;
            if atom.alpha < 0.0 {
                return Err(Error::InvalidArgument(format!("atom {k} has negative amplitude {}", atom.alpha)));
            }
            let y = domain.omega_norm(&atom.omega);
            if y == 0.0 {
                if atom.alpha > 0.0 {
                    return Err(Error::InvalidArgument(format!("atom {k} has zero frequency but positive amplitude")));
                }
                continue;
            }
            if atom.alpha == 0.0 {
                continue;
            }
            fourier_mass += atom.alpha * y;
            let half = 0.5 * atom.alpha;
            for (omega, theta) in [
                (atom.omega.clone(), wrap_phase(atom.phi)),
                (atom.omega.iter().map(|w| -w).collect(), wrap_phase(-atom.phi)),
            ] {
                signed.push(SignedAtom {
                    source: k,
                    omega,
                    norm_b: y,
                    theta,
                    weight: half,
                    mass_plus: half * signed_sine_mass(theta, y, 1),
                    mass_minus: half * signed_sine_mass(theta, y, -1),
                });
            }
        }
        let plus: f64 = signed.iter().map(|s| s.mass_plus).sum();
        let minus: f64 = signed.iter().map(|s| s.mass_minus).sum();
        let v = plus + minus;
        let (v_plus, v_minus) = if v > 0.0 { (plus / v, minus / v) } else { (0.0, 0.0) };
        Ok(Self { atoms, g0, domain, barron_m: g0.abs().max(fourier_mass), v, v_plus, v_minus, signed })
    }

    pub fn atoms(&self) -> &[FourierAtom] {
        &self.atoms
    }

    pub fn signed_atoms(&self) -> &[SignedAtom] {
        &self.signed
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn barron_m(&self) -> f64 {
        self.barron_m
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn v_plus(&self) -> f64 {
        self.v_plus
    }

    pub fn v_minus(&self) -> f64 {
        self.v_minus
    }

    /// Evaluates without the domain check. `x` is the joint point `(s, u)`.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.atoms.iter().fold(self.g0, |acc, a| {
            if a.alpha == 0.0 {
                return acc;
            }
            let z: f64 = a.omega.iter().zip(x).map(|(w, xi)| w * xi).sum();
            acc + a.alpha * ((z + a.phi).cos() - a.phi.cos())
        })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.domain.check_joint(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// Evaluates at a state/input pair.
    pub fn eval_split(&self, s: &[f64], u: &[f64]) -> f64 {
        self.atoms.iter().fold(self.g0, |acc, a| {
            if a.alpha == 0.0 {
                return acc;
            }
            let (ws, wu) = a.omega.split_at(s.len());
            let z: f64 =
                ws.iter().zip(s).map(|(w, v)| w * v).sum::<f64>() + wu.iter().zip(u).map(|(w, v)| w * v).sum::<f64>();
            acc + a.alpha * ((z + a.phi).cos() - a.phi.cos())
        })
    }

    /// `|g(x) − g(0) − R(x)|` where `R(x) = −2 Σ_j |g̃_j| Y_j ∫_0^1 1{ω_j·x/Y_j > t} sin(Y_j t + θ_j) dt`
    /// is integrated numerically atom by atom.
    pub fn integral_rep_residual(&self, x: &[f64]) -> Result<f64> {
        if !(self.v > 0.0) {
            return Err(Error::Precondition("integral representation needs v > 0".into()));
        }
        self.domain.check_joint(x)?;
        let mut rhs = 0.0;
        for s in &self.signed {
            let z: f64 = s.omega.iter().zip(x).map(|(w, xi)| w * xi).sum();
            if z <= 0.0 {
                continue;
            }
            let upper = (z / s.norm_b).min(1.0);
            let y = s.norm_b;
            let theta = s.theta;
            let part = quad::integrate(|t| (y * t + theta).sin(), 0.0, upper, 1e-13);
            rhs += -2.0 * s.weight * y * part;
        }
        Ok((self.eval_unchecked(x) - self.g0 - rhs).abs())
    }

    fn component_mass(&self, sign: i8) -> f64 {
        if sign > 0 {
            self.v * self.v_plus
        } else {
            self.v * self.v_minus
        }
    }

    /// Draws `n` i.i.d. samples from `μ_±`.
    pub fn sample_mu(&self, sign: i8, n: usize, seed: u64) -> Result<Vec<MuSample>> {
        if sign != 1 && sign != -1 {
            return Err(Error::InvalidArgument(format!("sign must be ±1, got {sign}")));
        }
        if !(self.component_mass(sign) > 0.0) {
            return Err(Error::EmptyComponent { sign });
        }
        let masses: Vec<f64> = self.signed.iter().map(|s| if sign > 0 { s.mass_plus } else { s.mass_minus }).collect();
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in &masses {
            acc += m;
            cumulative.push(acc);
        }
        let total = acc;
        let label = if sign > 0 { stream::SIGN_PLUS } else { stream::SIGN_MINUS };
        let mut rng = derived_rng(seed, &[stream::MU_SAMPLE, label]);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let r = rng.random::<f64>() * total;
            let mut j = cumulative.partition_point(|&c| c <= r).min(masses.len() - 1);
            while masses[j] == 0.0 {
                j -= 1;
            }
            let atom = &self.signed[j];
            let shift = if sign > 0 { 0.0 } else { PI };
            let lo = atom.theta - shift;
            let f_lo = positive_sine_mass(lo);
            let f_hi = positive_sine_mass(lo + atom.norm_b);
            let target = f_lo + rng.random::<f64>() * (f_hi - f_lo);
            let s = positive_sine_mass_inv(target);
            let t = ((s - lo) / atom.norm_b).clamp(0.0, 1.0);
            out.push(MuSample { atom_index: j, t, sign });
        }
        Ok(out)
    }

    /// Density of `μ_±` at `(atom j, t)` with respect to counting × Lebesgue.
    pub fn mu_density(&self, sign: i8, atom_index: usize, t: f64) -> f64 {
        let mass = self.component_mass(sign);
        if !(mass > 0.0) || !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        let a = &self.signed[atom_index];
        let s = (a.norm_b * t + a.theta).sin() * f64::from(sign);
        a.weight * a.norm_b * s.max(0.0) / mass
    }

    /// Rescales the target by `c ≥ 0` (amplitudes and `g0`).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be non-negative, got {c}")));
        }
        let atoms =
            self.atoms.iter().map(|a| FourierAtom { omega: a.omega.clone(), alpha: a.alpha * c, phi: a.phi }).collect();
        Self::fourier_mixture(atoms, self.g0 * c, self.domain)
    }
}

struct StepNodes {
    // unit direction ω/Y split later into state and input parts
    direction: Vec<f64>,
    t: f64,
    coeff: f64,
}

fn step_nodes(g: &BarronTarget, n: usize, seed: u64) -> Result<(Vec<StepNodes>, Vec<StepNodes>)> {
    let mut out = (Vec::new(), Vec::new());
    for sign in [1i8, -1] {
        let mass = g.component_mass(sign);
        let list = if sign > 0 { &mut out.0 } else { &mut out.1 };
        if !(mass > 0.0) {
            continue;
        }
        // a_i = −2vV₊/N for the positive part, +2vV₋/N for the negative part
        let coeff = -2.0 * f64::from(sign) * mass / n as f64;
        for s in g.sample_mu(sign, n, seed)? {
            let atom = &g.signed[s.atom_index];
            list.push(StepNodes { direction: atom.omega.iter().map(|w| w / atom.norm_b).collect(), t: s.t, coeff });
        }
    }
    Ok(out)
}

/// Sigmoid network with `2N` nodes: `f = −2v(V₊f₊ − V₋f₋) + g(0)` with
/// `f± = (1/N) Σ σ(Λ(ω_i·x/‖ω_i‖_B − t_i))`.
pub fn approximate_sigmoid(
    g: &BarronTarget,
    n: usize,
    lambda: f64,
    sigma: &SigmoidSpec,
    seed: u64,
) -> Result<ScalarFnn> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("Λ must be positive, got {lambda}")));
    }
    let dom = g.domain();
    let (ds, de) = (dom.state_dim, dom.input_dim);
    let mut f = ScalarFnn::zeros(2 * n, ds, de, Activation::Sigmoid(sigma.clone()));
    f.e = g.g0();
    if !(g.v() > 0.0) {
        return Ok(f);
    }
    let (plus, minus) = step_nodes(g, n, seed)?;
    for (block, nodes) in [(0, plus), (n, minus)] {
        for (i, node) in nodes.into_iter().enumerate() {
            let k = block + i;
            f.a[k] = node.coeff;
            for (j, w) in node.direction.iter().enumerate() {
                if j < ds {
                    f.b[k * ds + j] = lambda * w;
                } else {
                    f.c[k * de + j - ds] = lambda * w;
                }
            }
            f.d[k] = -lambda * node.t;
        }
    }
    Ok(f)
}

/// Ramp width used by the ReLU construction at sample size `N`.
pub fn relu_ramp_width(n: usize) -> f64 {
    (n as f64).sqrt().recip()
}

/// ReLU network with `4N` nodes whose parameters lie in the family boxes for
/// constant `family_m`. Each sampled step `1{ω·x/Y − t > 0}` becomes the ramp
/// `(ρ(k(z − t + w)) − ρ(k(z − t))) / (wk)` with `w = N^{−1/2}` and
/// `k = √family_m`.
pub fn approximate_relu_in_family(g: &BarronTarget, n: usize, family_m: f64, seed: u64) -> Result<ScalarFnn> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if !(family_m >= g.barron_m()) || !(family_m > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "family constant {family_m} is below the target's Barron constant {}",
            g.barron_m()
        )));
    }
    let dom = g.domain();
    let (ds, de) = (dom.state_dim, dom.input_dim);
    let mut f = ScalarFnn::zeros(4 * n, ds, de, Activation::Relu);
    f.e = g.g0();
    if !(g.v() > 0.0) {
        return Ok(f);
    }
    let k = family_m.sqrt();
    let w = relu_ramp_width(n);
    let (plus, minus) = step_nodes(g, n, seed)?;
    for (block, nodes) in [(0, plus), (2 * n, minus)] {
        for (i, node) in nodes.into_iter().enumerate() {
            let a = node.coeff / (w * k);
            for (slot, (sign, bias)) in [(1.0, k * (w - node.t)), (-1.0, -k * node.t)].into_iter().enumerate() {
                let idx = block + 2 * i + slot;
                f.a[idx] = sign * a;
                for (j, om) in node.direction.iter().enumerate() {
                    if j < ds {
                        f.b[idx * ds + j] = k * om;
                    } else {
                        f.c[idx * de + j - ds] = k * om;
                    }
                }
                f.d[idx] = bias;
            }
        }
    }
    Ok(f)
}

/// ReLU network with `4N` nodes in the family of the target's own constant `M`.
pub fn approximate_relu(g: &BarronTarget, n: usize, seed: u64) -> Result<ScalarFnn> {
    let m = g.barron_m();
    if m == 0.0 {
        return Ok(ScalarFnn::zeros(4 * n.max(1), g.domain().state_dim, g.domain().input_dim, Activation::Relu));
    }
    approximate_relu_in_family(g, n, m, seed)
}

/// Approximates each coordinate of a vector target with an independent
/// network, all in the family of the shared constant `family_m`.
pub fn approximate_components(
    components: &[BarronTarget],
    n: usize,
    flavor: &Flavor,
    family_m: f64,
    seeds: &[u64],
) -> Result<VectorFnn> {
    if components.len() != seeds.len() {
        return Err(Error::DimensionMismatch { expected: components.len(), got: seeds.len() });
    }
    let nets = components
        .iter()
        .zip(seeds)
        .map(|(g, &seed)| match flavor {
            Flavor::Relu => approximate_relu_in_family(g, n, family_m, seed),
            Flavor::Sigmoid { lambda, sigma } => approximate_sigmoid(g, n, *lambda, sigma, seed),
        })
        .collect::<Result<Vec<_>>>()?;
    VectorFnn::new(nets)
}

/// Per-coordinate seeds derived from one root seed.
pub fn component_seeds(seed: u64, d: usize) -> Vec<u64> {
    (0..d as u64).map(|k| derive_seed(seed, &[stream::COMPONENT, k])).collect()
}
