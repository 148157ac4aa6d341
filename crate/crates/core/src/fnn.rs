//! One-hidden-layer networks `f(s, u) = Σ a_n act(b_n·s + c_n·u + d_n) + e`,
//! the bounded-parameter families they are drawn from, and the closed-form
//! bounds built on those families.

use rand::Rng as _;

use crate::domain::{sample_ball, DomainSpec, NormDegree};
use crate::error::{ensure_finite, Error, Result};
use crate::quad;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum SigmoidKind {
    Logistic,
    /// Piecewise-linear interpolation through `(xs[k], ys[k])`, constant
    /// outside the table.
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

/// A monotone sigmoid with values in `[0, 1]` and a declared Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmoidSpec {
    kind: SigmoidKind,
    lipschitz: f64,
}

impl SigmoidSpec {
    pub fn logistic() -> Self {
        Self { kind: SigmoidKind::Logistic, lipschitz: 0.25 }
    }

    /// Tabulated sigmoid. `ys` must be nondecreasing from 0 to 1 and the
    /// declared Lipschitz constant must dominate every segment slope.
    pub fn table(xs: Vec<f64>, ys: Vec<f64>, lipschitz: f64) -> Result<Self> {
        ensure_finite(&xs, "sigmoid table abscissae")?;
        ensure_finite(&ys, "sigmoid table values")?;
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::InvalidArgument("sigmoid table needs at least two (x, y) pairs of equal length".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sigmoid table abscissae must be strictly increasing".into()));
        }
        if ys.windows(2).any(|w| w[1] < w[0]) || ys[0] != 0.0 || *ys.last().unwrap() != 1.0 {
            return Err(Error::InvalidArgument("sigmoid table values must rise monotonically from 0 to 1".into()));
        }
        let max_slope =
            xs.windows(2).zip(ys.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])).fold(0.0, f64::max);
        if !(lipschitz >= max_slope) {
            return Err(Error::InvalidArgument(format!(
                "declared Lipschitz constant {lipschitz} is below the table slope {max_slope}"
            )));
        }
        Ok(Self { kind: SigmoidKind::Table { xs, ys }, lipschitz })
    }

    pub fn kind(&self) -> &SigmoidKind {
        &self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            SigmoidKind::Logistic => logistic(x),
            SigmoidKind::Table { xs, ys } => {
                if x <= xs[0] {
                    return ys[0];
                }
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return ys[last];
                }
                let k = xs.partition_point(|&v| v <= x) - 1;
                let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
                ys[k] + w * (ys[k + 1] - ys[k])
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match &self.kind {
            SigmoidKind::Logistic => Vec::new(),
            SigmoidKind::Table { xs, .. } => xs.clone(),
        }
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `δ(Λ) = ∫_{−1}^{1} |1{x > 0} − σ(Λx)| dx`, the L¹ error of a scaled
/// sigmoid against the unit step.
pub fn delta_sigmoid(sigma: &SigmoidSpec, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("Λ must be positive and finite, got {lambda}")));
    }
    match sigma.kind {
        SigmoidKind::Logistic => Ok(2.0 / lambda * (std::f64::consts::LN_2 - (-lambda).exp().ln_1p())),
        SigmoidKind::Table { .. } => Ok(delta_sigmoid_quadrature(sigma, lambda)),
    }
}

/// Adaptive-quadrature evaluation of `δ(Λ)` for any sigmoid.
pub fn delta_sigmoid_quadrature(sigma: &SigmoidSpec, lambda: f64) -> f64 {
    let breaks: Vec<f64> = sigma.kinks().iter().map(|k| k / lambda).collect();
    let left = quad::integrate_split(|x| sigma.eval(lambda * x), -1.0, 0.0, &breaks, 1e-13);
    let right = quad::integrate_split(|x| 1.0 - sigma.eval(lambda * x), 0.0, 1.0, &breaks, 1e-13);
    left + right
}

#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Relu,
    Sigmoid(SigmoidSpec),
}

impl Activation {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid(s) => s.eval(z),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Activation::Relu => 1.0,
            Activation::Sigmoid(s) => s.lipschitz(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid(_) => "sigmoid",
        }
    }
}

/// Scalar network with `K` hidden nodes. `b` is `K × D` and `c` is `K × E`,
/// both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFnn {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: f64,
    state_dim: usize,
    input_dim: usize,
    activation: Activation,
}

impl ScalarFnn {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        d: Vec<f64>,
        e: f64,
        state_dim: usize,
        input_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let k = a.len();
        if b.len() != k * state_dim {
            return Err(Error::DimensionMismatch { expected: k * state_dim, got: b.len() });
        }
        if c.len() != k * input_dim {
            return Err(Error::DimensionMismatch { expected: k * input_dim, got: c.len() });
        }
        if d.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: d.len() });
        }
        ensure_finite(&a, "a")?;
        ensure_finite(&b, "b")?;
        ensure_finite(&c, "c")?;
        ensure_finite(&d, "d")?;
        ensure_finite(&[e], "e")?;
        Ok(Self { a, b, c, d, e, state_dim, input_dim, activation })
    }

    /// Network with `k` hidden nodes and every parameter zero.
    pub fn zeros(k: usize, state_dim: usize, input_dim: usize, activation: Activation) -> Self {
        Self {
            a: vec![0.0; k],
            b: vec![0.0; k * state_dim],
            c: vec![0.0; k * input_dim],
            d: vec![0.0; k],
            e: 0.0,
            state_dim,
            input_dim,
            activation,
        }
    }

    pub fn hidden_count(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn b_row(&self, n: usize) -> &[f64] {
        &self.b[n * self.state_dim..(n + 1) * self.state_dim]
    }

    pub fn c_row(&self, n: usize) -> &[f64] {
        &self.c[n * self.input_dim..(n + 1) * self.input_dim]
    }

    /// Pre-activation `b_n·s + c_n·u + d_n`.
    #[inline]
    pub fn preactivation(&self, n: usize, s: &[f64], u: &[f64]) -> f64 {
        let bs: f64 = self.b_row(n).iter().zip(s).map(|(x, y)| x * y).sum();
        let cu: f64 = self.c_row(n).iter().zip(u).map(|(x, y)| x * y).sum();
        bs + cu + self.d[n]
    }

    /// Evaluates without dimension checks.
    #[inline]
    pub fn eval_unchecked(&self, s: &[f64], u: &[f64]) -> f64 {
        let mut acc = self.e;
        for n in 0..self.a.len() {
            if self.a[n] != 0.0 {
                acc += self.a[n] * self.activation.eval(self.preactivation(n, s, u));
            }
        }
        acc
    }

    pub fn eval(&self, s: &[f64], u: &[f64]) -> Result<f64> {
        if s.len() != self.state_dim {
            return Err(Error::DimensionMismatch { expected: self.state_dim, got: s.len() });
        }
        if u.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: u.len() });
        }
        Ok(self.eval_unchecked(s, u))
    }

    /// Flat parameter record: `a`, `b` row-major, `c` row-major, `d`, `e`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.a.len() * (2 + self.state_dim + self.input_dim) + 1);
        out.extend_from_slice(&self.a);
        out.extend_from_slice(&self.b);
        out.extend_from_slice(&self.c);
        out.extend_from_slice(&self.d);
        out.push(self.e);
        out
    }

    pub fn from_flat(
        flat: &[f64],
        k: usize,
        state_dim: usize,
        input_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let len = k * (2 + state_dim + input_dim) + 1;
        if flat.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: flat.len() });
        }
        let (a, rest) = flat.split_at(k);
        let (b, rest) = rest.split_at(k * state_dim);
        let (c, rest) = rest.split_at(k * input_dim);
        let (d, rest) = rest.split_at(k);
        Self::new(a.to_vec(), b.to_vec(), c.to_vec(), d.to_vec(), rest[0], state_dim, input_dim, activation)
    }

    /// Upper bound on the Lipschitz constant in the state argument with
    /// respect to the p-norm: `Lip(act) Σ |a_n| ‖b_n‖_q`.
    pub fn state_lipschitz_bound(&self, p: NormDegree) -> f64 {
        let q = p.conjugate();
        let lip = self.activation.lipschitz();
        (0..self.a.len()).map(|n| self.a[n].abs() * lip * q.norm(self.b_row(n))).sum()
    }
}

/// `D` scalar networks sharing hidden count and activation, viewed as a map
/// `B̄_S × B̄_I → R^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFnn {
    components: Vec<ScalarFnn>,
}

impl VectorFnn {
    pub fn new(components: Vec<ScalarFnn>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("a vector network needs at least one component".into()))?;
        if components.len() != first.state_dim {
            return Err(Error::DimensionMismatch { expected: first.state_dim, got: components.len() });
        }
        for f in &components[1..] {
            if f.hidden_count() != first.hidden_count()
                || f.state_dim != first.state_dim
                || f.input_dim != first.input_dim
                || f.activation != first.activation
            {
                return Err(Error::InvalidArgument(
                    "vector network components must share hidden count, dimensions and activation".into(),
                ));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[ScalarFnn] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ScalarFnn> {
        self.components
    }

    pub fn state_dim(&self) -> usize {
        self.components[0].state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.components[0].input_dim
    }

    pub fn hidden_count(&self) -> usize {
        self.components[0].hidden_count()
    }

    pub fn activation(&self) -> &Activation {
        &self.components[0].activation
    }

    pub fn eval(&self, s: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|f| f.eval(s, u)).collect()
    }

    pub fn eval_unchecked(&self, s: &[f64], u: &[f64]) -> Vec<f64> {
        self.components.iter().map(|f| f.eval_unchecked(s, u)).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.components.iter().flat_map(|f| f.to_flat()).collect()
    }
}

/// Relative rounding slack allowed when testing parameter boxes.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Which approximation construction, and hence which parameter family.
#[derive(Debug, Clone, PartialEq)]
pub enum Flavor {
    Relu,
    Sigmoid { lambda: f64, sigma: SigmoidSpec },
}

impl Flavor {
    pub fn activation(&self) -> Activation {
        match self {
            Flavor::Relu => Activation::Relu,
            Flavor::Sigmoid { sigma, .. } => Activation::Sigmoid(sigma.clone()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Flavor::Relu => "relu",
            Flavor::Sigmoid { .. } => "sigmoid",
        }
    }
}

/// Box constraints and derived constants of a bounded-parameter family.
///
/// `b_max` bounds `S‖b‖_q`, `c_max` bounds `I‖c‖_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyBounds {
    pub hidden: usize,
    pub a_max: f64,
    pub b_max: f64,
    pub c_max: f64,
    pub d_max: f64,
    pub e_max: f64,
    /// Sup of `|act(z)|` over pre-activations reachable on the domain.
    pub act_sup: f64,
    pub act_lip: f64,
}

/// The family of scalar networks with `N`-dependent width whose parameters
/// lie in the boxes fixed by `M`, the domain and the flavor.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnFamily {
    pub domain: DomainSpec,
    pub m: f64,
    pub n: usize,
    pub flavor: Flavor,
}

/// Per-term breakdown of the parameter-perturbation bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationBound {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl PerturbationBound {
    pub fn total(&self) -> f64 {
        self.a + self.b + self.c + self.d + self.e
    }
}

impl FnnFamily {
    pub fn new(domain: DomainSpec, m: f64, n: usize, flavor: Flavor) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidArgument(format!("family constant M must be positive, got {m}")));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if let Flavor::Sigmoid { lambda, .. } = flavor {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::InvalidArgument(format!("Λ must be positive, got {lambda}")));
            }
        }
        Ok(Self { domain, m, n, flavor })
    }

    pub fn relu(domain: DomainSpec, m: f64, n: usize) -> Result<Self> {
        Self::new(domain, m, n, Flavor::Relu)
    }

    pub fn bounds(&self) -> FamilyBounds {
        let m = self.m;
        let n = self.n as f64;
        match &self.flavor {
            Flavor::Relu => {
                let r = m.sqrt();
                FamilyBounds {
                    hidden: 4 * self.n,
                    a_max: 2.0 * r,
                    b_max: r,
                    c_max: r,
                    d_max: 2.0 * r,
                    e_max: m,
                    act_sup: 4.0 * r,
                    act_lip: 1.0,
                }
            }
            Flavor::Sigmoid { lambda, sigma } => FamilyBounds {
                hidden: 2 * self.n,
                a_max: 2.0 * m / n,
                b_max: *lambda,
                c_max: *lambda,
                d_max: *lambda,
                e_max: m,
                act_sup: 1.0,
                act_lip: sigma.lipschitz(),
            },
        }
    }

    /// Explains the first violated constraint, if any.
    pub fn check_membership(&self, f: &ScalarFnn) -> Result<()> {
        let bd = self.bounds();
        let over = |x: f64, bound: f64| x > bound * (1.0 + MEMBERSHIP_SLACK);
        let fail = |msg: String| Err(Error::NotInFamily(msg));
        if f.state_dim != self.domain.state_dim || f.input_dim != self.domain.input_dim {
            return fail(format!(
                "dimensions ({}, {}) differ from the domain ({}, {})",
                f.state_dim, f.input_dim, self.domain.state_dim, self.domain.input_dim
            ));
        }
        if f.hidden_count() != bd.hidden {
            return fail(format!("hidden count {} differs from {}", f.hidden_count(), bd.hidden));
        }
        if f.activation != self.flavor.activation() {
            return fail("activation differs from the family".into());
        }
        for n in 0..f.hidden_count() {
            if over(f.a[n].abs(), bd.a_max) {
                return fail(format!("|a_{n}| = {} > {}", f.a[n].abs(), bd.a_max));
            }
            let bn = self.domain.state_weight_norm(f.b_row(n));
            if over(bn, bd.b_max) {
                return fail(format!("‖b_{n}‖ = {bn} > {}", bd.b_max));
            }
            let cn = self.domain.input_weight_norm(f.c_row(n));
            if over(cn, bd.c_max) {
                return fail(format!("‖c_{n}‖ = {cn} > {}", bd.c_max));
            }
            if over(f.d[n].abs(), bd.d_max) {
                return fail(format!("|d_{n}| = {} > {}", f.d[n].abs(), bd.d_max));
            }
        }
        if over(f.e.abs(), bd.e_max) {
            return fail(format!("|e| = {} > {}", f.e.abs(), bd.e_max));
        }
        Ok(())
    }

    pub fn contains(&self, f: &ScalarFnn) -> bool {
        self.check_membership(f).is_ok()
    }

    /// Draws every parameter uniformly from its box or ball.
    pub fn sample_member(&self, rng: &mut Rng) -> ScalarFnn {
        let bd = self.bounds();
        let dom = &self.domain;
        let q = dom.q();
        let mut uniform = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let a: Vec<f64> = (0..bd.hidden).map(|_| uniform(bd.a_max)).collect();
        let d: Vec<f64> = (0..bd.hidden).map(|_| uniform(bd.d_max)).collect();
        let e = uniform(bd.e_max);
        let mut b = Vec::with_capacity(bd.hidden * dom.state_dim);
        let mut c = Vec::with_capacity(bd.hidden * dom.input_dim);
        for _ in 0..bd.hidden {
            b.extend(sample_ball(rng, dom.state_dim, bd.b_max / dom.state_radius, q));
            c.extend(sample_ball(rng, dom.input_dim, bd.c_max / dom.input_radius, q));
        }
        ScalarFnn {
            a,
            b,
            c,
            d,
            e,
            state_dim: dom.state_dim,
            input_dim: dom.input_dim,
            activation: self.flavor.activation(),
        }
    }

    /// `act_sup Σ|Δa| + a_max Lip (S Σ‖Δb‖_q + I Σ‖Δc‖_q + Σ|Δd|) + |Δe|`,
    /// a sup-norm bound on `f − f′` over the domain for two family members.
    pub fn param_perturbation_bound(&self, f: &ScalarFnn, g: &ScalarFnn) -> Result<PerturbationBound> {
        if f.hidden_count() != g.hidden_count() || f.state_dim != g.state_dim || f.input_dim != g.input_dim {
            return Err(Error::InvalidArgument("networks have different shapes".into()));
        }
        self.check_membership(f)?;
        self.check_membership(g)?;
        let bd = self.bounds();
        let q = self.domain.q();
        let mut da = 0.0;
        let mut db = 0.0;
        let mut dc = 0.0;
        let mut dd = 0.0;
        let mut diff = Vec::new();
        for n in 0..f.hidden_count() {
            da += (f.a[n] - g.a[n]).abs();
            diff.clear();
            diff.extend(f.b_row(n).iter().zip(g.b_row(n)).map(|(x, y)| x - y));
            db += q.norm(&diff);
            diff.clear();
            diff.extend(f.c_row(n).iter().zip(g.c_row(n)).map(|(x, y)| x - y));
            dc += q.norm(&diff);
            dd += (f.d[n] - g.d[n]).abs();
        }
        let w = bd.a_max * bd.act_lip;
        Ok(PerturbationBound {
            a: bd.act_sup * da,
            b: w * self.domain.state_radius * db,
            c: w * self.domain.input_radius * dc,
            d: w * dd,
            e: (f.e - g.e).abs(),
        })
    }
}

/// Membership in the ReLU family with constants `M`, `N`.
pub fn family_membership(f: &ScalarFnn, domain: &DomainSpec, m: f64, n: usize) -> bool {
    FnnFamily::relu(*domain, m, n).map(|fam| fam.contains(f)).unwrap_or(false)
}

/// `eps Σ_{i=0}^{T−1} L^i`.
pub fn internal_error_bound(eps: f64, lipschitz: f64, horizon: usize) -> Result<f64> {
    if !(eps >= 0.0) || !(lipschitz >= 0.0) || !eps.is_finite() || !lipschitz.is_finite() {
        return Err(Error::InvalidArgument(format!("need eps ≥ 0 and L ≥ 0, got eps = {eps}, L = {lipschitz}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon T must be at least 1".into()));
    }
    Ok(eps * geometric_sum(lipschitz, horizon))
}

/// `Σ_{i=0}^{T−1} L^i`.
pub fn geometric_sum(l: f64, t: usize) -> f64 {
    if (l - 1.0).abs() < 1e-9 {
        return t as f64;
    }
    if l == 0.0 {
        return if t == 0 { 0.0 } else { 1.0 };
    }
    let tl = t as f64 * l.ln();
    if l < 1.0 {
        -tl.exp_m1() / (1.0 - l)
    } else {
        tl.exp_m1() / (l - 1.0)
    }
}
