//! Grid coverings of the parameter boxes of a bounded network family, lazy
//! snapping of networks onto the covering, and cardinality counts.

use num_bigint::BigUint;
use num_traits::One;

use crate::domain::{DomainSpec, NormDegree};
use crate::error::{Error, Result};
use crate::fnn::{FnnFamily, ScalarFnn, VectorFnn};

/// Equally spaced centers covering `[lo, hi]` at radius `≤ r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalGrid {
    lo: f64,
    hi: f64,
    half: f64,
    n: usize,
}

impl IntervalGrid {
    pub fn new(lo: f64, hi: f64, radius: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && radius.is_finite()) {
            return Err(Error::NonFinite("interval covering"));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("covering radius must be positive, got {radius}")));
        }
        if hi < lo {
            return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
        }
        if hi == lo {
            return Ok(Self { lo, hi, half: 0.0, n: 1 });
        }
        let cells = (hi - lo) / (2.0 * radius);
        let n = ((cells * (1.0 - 1e-12)).ceil() as usize).max(1);
        Ok(Self { lo, hi, half: (hi - lo) / (2.0 * n as f64), n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance from any covered point to its nearest center.
    pub fn half_spacing(&self) -> f64 {
        self.half
    }

    pub fn point(&self, i: usize) -> f64 {
        if self.n == 1 {
            return 0.5 * (self.lo + self.hi);
        }
        self.lo + (2 * i + 1) as f64 * self.half
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Nearest center; equidistant values go to the smaller index.
    pub fn nearest(&self, x: f64) -> usize {
        if self.n == 1 || self.half == 0.0 {
            return 0;
        }
        // cell boundaries sit at lo + 2k·half; a value on a boundary belongs to the lower cell
        let pos = (x - self.lo) / (2.0 * self.half);
        let mut i = pos.ceil() as i64 - 1;
        i = i.clamp(0, self.n as i64 - 1);
        let mut i = i as usize;
        // float guard so the result is the true nearest center
        while i + 1 < self.n && (self.point(i + 1) - x).abs() < (self.point(i) - x).abs() {
            i += 1;
        }
        while i > 0 && (self.point(i - 1) - x).abs() <= (self.point(i) - x).abs() {
            i -= 1;
        }
        i
    }
}

/// Centers `x_i = lo + (2i − 1)h` covering `[lo, hi]`, where `h ≤ radius`
/// equalizes the spacing so the grid stays inside the interval.
pub fn interval_covering(lo: f64, hi: f64, radius: f64) -> Result<Vec<f64>> {
    Ok(IntervalGrid::new(lo, hi, radius)?.points())
}

/// Covering of the closed q-ball of radius `r` in `R^dim` at q-radius `γ`.
///
/// Axis cells have half-width `γ / dim^{1/q}`. A cell whose center lies in
/// the ball is represented by its center. A cell whose center lies outside
/// is split into `2^dim` orthant subcells; each subcell meeting the ball is
/// represented by a point of the ball inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallGrid {
    dim: usize,
    radius: f64,
    q: NormDegree,
    gamma: f64,
    axis: IntervalGrid,
}

/// Largest number of axis cells [`BallGrid::count`] will walk.
pub const MAX_CELL_ENUMERATION: u128 = 1 << 28;

impl BallGrid {
    pub fn new(radius: f64, dim: usize, q: NormDegree, gamma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("ball dimension must be at least 1".into()));
        }
        if !(radius > 0.0) || !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("need r > 0 and γ > 0, got r = {radius}, γ = {gamma}")));
        }
        let axis = IntervalGrid::new(-radius, radius, gamma / q.root(dim))?;
        Ok(Self { dim, radius, q, gamma, axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn axis(&self) -> &IntervalGrid {
        &self.axis
    }

    fn inside(&self, v: &[f64]) -> bool {
        self.q.norm(v) <= self.radius
    }

    fn subcell_bounds(&self, coords: &[u64], bits: u64) -> Vec<(f64, f64)> {
        let h = self.axis.half_spacing();
        coords
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let c = self.axis.point(i as usize);
                if bits >> k & 1 == 1 {
                    (c, c + h)
                } else {
                    (c - h, c)
                }
            })
            .collect()
    }

    fn closest_to_origin(bounds: &[(f64, f64)]) -> Vec<f64> {
        bounds.iter().map(|&(lo, hi)| 0.0f64.clamp(lo, hi)).collect()
    }

    fn representative(&self, coords: &[u64], sub: u64) -> Option<Vec<f64>> {
        let center: Vec<f64> = coords.iter().map(|&i| self.axis.point(i as usize)).collect();
        if sub == 0 {
            return self.inside(&center).then_some(center);
        }
        if self.inside(&center) || sub - 1 >= 1u64 << self.dim {
            return None;
        }
        let bounds = self.subcell_bounds(coords, sub - 1);
        let z = Self::closest_to_origin(&bounds);
        if !self.inside(&z) {
            return None;
        }
        let mid: Vec<f64> = bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
        if self.inside(&mid) {
            return Some(mid);
        }
        let at = |lam: f64| -> Vec<f64> { mid.iter().zip(&z).map(|(m, zz)| m + lam * (zz - m)).collect() };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..64 {
            let m = 0.5 * (lo + hi);
            if self.inside(&at(m)) {
                hi = m;
            } else {
                lo = m;
            }
        }
        Some(at(hi))
    }

    /// Snaps a point of the ball to `(axis coordinates, subcell code, representative)`.
    pub fn snap(&self, v: &[f64]) -> Result<(Vec<u64>, u64, Vec<f64>)> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let coords: Vec<u64> = v.iter().map(|&x| self.axis.nearest(x) as u64).collect();
        let center: Vec<f64> = coords.iter().map(|&i| self.axis.point(i as usize)).collect();
        if self.inside(&center) {
            return Ok((coords, 0, center));
        }
        let bits =
            v.iter().zip(&center).enumerate().fold(0u64, |acc, (k, (x, c))| if x >= c { acc | 1 << k } else { acc });
        let sub = bits + 1;
        let rep = self.representative(&coords, sub).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "point with norm {} lies outside the ball of radius {}",
                self.q.norm(v),
                self.radius
            ))
        })?;
        Ok((coords, sub, rep))
    }

    pub fn decode(&self, coords: &[u64], sub: u64) -> Result<Vec<f64>> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: coords.len() });
        }
        if coords.iter().any(|&i| i as usize >= self.axis.len()) {
            return Err(Error::IndexOutOfRange(format!("axis coordinate beyond {}", self.axis.len())));
        }
        self.representative(coords, sub)
            .ok_or_else(|| Error::IndexOutOfRange(format!("cell {coords:?} with subcell {sub} is not in the covering")))
    }

    /// Number of covering points.
    pub fn count(&self) -> Result<BigUint> {
        let n = self.axis.len() as u128;
        if self.q == NormDegree::Inf {
            // every cell center lies in the cube
            return Ok(BigUint::from(n).pow(self.dim as u32));
        }
        let cells = (n as f64).powi(self.dim as i32);
        if cells > MAX_CELL_ENUMERATION as f64 {
            return Err(Error::Infeasible(format!("{cells:.3e} cells exceed the enumeration limit")));
        }
        let mut coords = vec![0u64; self.dim];
        let mut total: u128 = 0;
        self.count_rec(0, &mut coords, &mut total);
        Ok(BigUint::from(total))
    }

    fn count_rec(&self, k: usize, coords: &mut Vec<u64>, total: &mut u128) {
        let h = self.axis.half_spacing();
        if k > 0 {
            let partial: Vec<f64> = coords[..k]
                .iter()
                .map(|&i| {
                    let c = self.axis.point(i as usize);
                    0.0f64.clamp(c - h, c + h)
                })
                .collect();
            if !self.inside(&partial) {
                return;
            }
        }
        if k == self.dim {
            let center: Vec<f64> = coords.iter().map(|&i| self.axis.point(i as usize)).collect();
            if self.inside(&center) {
                *total += 1;
            } else {
                for bits in 0..(1u64 << self.dim) {
                    let z = Self::closest_to_origin(&self.subcell_bounds(coords, bits));
                    if self.inside(&z) {
                        *total += 1;
                    }
                }
            }
            return;
        }
        for i in 0..self.axis.len() as u64 {
            coords[k] = i;
            self.count_rec(k + 1, coords, total);
        }
    }

    /// Every covering point; only for small grids.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let count = self.count()?;
        if count > BigUint::from(MAX_CELL_ENUMERATION) {
            return Err(Error::Infeasible(format!("{count} points")));
        }
        let mut out = Vec::new();
        let n = self.axis.len() as u64;
        let mut coords = vec![0u64; self.dim];
        loop {
            if let Some(c) = self.representative(&coords, 0) {
                out.push(c);
            } else {
                for bits in 0..(1u64 << self.dim) {
                    if let Some(r) = self.representative(&coords, bits + 1) {
                        out.push(r);
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == self.dim {
                    return Ok(out);
                }
                coords[k] += 1;
                if coords[k] < n {
                    break;
                }
                coords[k] = 0;
                k += 1;
            }
        }
    }

    /// The volumetric existence bound `(2r/γ + 1)^dim`.
    pub fn volumetric_bound(&self) -> f64 {
        (2.0 * self.radius / self.gamma + 1.0).powi(self.dim as i32)
    }
}

/// Convenience wrapper returning every point of a [`BallGrid`].
pub fn ball_covering_q(radius: f64, dim: usize, q: NormDegree, gamma: f64) -> Result<Vec<Vec<f64>>> {
    BallGrid::new(radius, dim, q, gamma)?.points()
}

/// Per-parameter covering radii. `b` and `c` radii are q-norm radii.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverRadii {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

/// Grid covering of a bounded-parameter family at radius `Γ` in the
/// vector sup-norm: each of the five perturbation terms gets a fifth of
/// `Γ / D^{1/p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringSpec {
    family: FnnFamily,
    gamma: f64,
    radii: CoverRadii,
    a_grid: IntervalGrid,
    b_grid: BallGrid,
    c_grid: BallGrid,
    d_grid: IntervalGrid,
    e_grid: IntervalGrid,
}

/// Flat covering coordinates. Per output component and per hidden node:
/// `a`, the `D` axis coordinates of `b`, the `b` subcell code, the `E` axis
/// coordinates of `c`, the `c` subcell code, `d`; after the nodes, `e`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoverIndex(pub Vec<u64>);

impl CoverIndex {
    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

impl CoveringSpec {
    pub fn new(family: FnnFamily, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("Γ must be positive, got {gamma}")));
        }
        let dom = family.domain;
        let bd = family.bounds();
        let k = bd.hidden as f64;
        let budget = gamma / (5.0 * dom.p.root(dom.state_dim));
        let w = bd.a_max * bd.act_lip;
        let radii = CoverRadii {
            a: budget / (k * bd.act_sup),
            b: budget / (k * w * dom.state_radius),
            c: budget / (k * w * dom.input_radius),
            d: budget / (k * w),
            e: budget,
        };
        let q = dom.q();
        Ok(Self {
            a_grid: IntervalGrid::new(-bd.a_max, bd.a_max, radii.a)?,
            b_grid: BallGrid::new(bd.b_max / dom.state_radius, dom.state_dim, q, radii.b)?,
            c_grid: BallGrid::new(bd.c_max / dom.input_radius, dom.input_dim, q, radii.c)?,
            d_grid: IntervalGrid::new(-bd.d_max, bd.d_max, radii.d)?,
            e_grid: IntervalGrid::new(-bd.e_max, bd.e_max, radii.e)?,
            family,
            gamma,
            radii,
        })
    }

    pub fn family(&self) -> &FnnFamily {
        &self.family
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.family.domain
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn radii(&self) -> CoverRadii {
        self.radii
    }

    pub fn a_grid(&self) -> &IntervalGrid {
        &self.a_grid
    }

    pub fn b_grid(&self) -> &BallGrid {
        &self.b_grid
    }

    pub fn c_grid(&self) -> &BallGrid {
        &self.c_grid
    }

    pub fn d_grid(&self) -> &IntervalGrid {
        &self.d_grid
    }

    pub fn e_grid(&self) -> &IntervalGrid {
        &self.e_grid
    }

    fn node_len(&self) -> usize {
        let dom = self.domain();
        dom.state_dim + dom.input_dim + 4
    }

    /// Length of the coordinate list of one output component.
    pub fn component_len(&self) -> usize {
        self.family.bounds().hidden * self.node_len() + 1
    }

    /// Snaps one scalar family member to the covering.
    pub fn snap(&self, f: &ScalarFnn) -> Result<(Vec<u64>, ScalarFnn)> {
        self.family.check_membership(f)?;
        let mut idx = Vec::with_capacity(self.component_len());
        let mut g = f.clone();
        let (ds, de) = (self.domain().state_dim, self.domain().input_dim);
        for n in 0..f.hidden_count() {
            let ia = self.a_grid.nearest(f.a[n]);
            idx.push(ia as u64);
            g.a[n] = self.a_grid.point(ia);
            let (cb, sb, rb) = self.b_grid.snap(f.b_row(n))?;
            idx.extend_from_slice(&cb);
            idx.push(sb);
            g.b[n * ds..(n + 1) * ds].copy_from_slice(&rb);
            let (cc, sc, rc) = self.c_grid.snap(f.c_row(n))?;
            idx.extend_from_slice(&cc);
            idx.push(sc);
            g.c[n * de..(n + 1) * de].copy_from_slice(&rc);
            let id = self.d_grid.nearest(f.d[n]);
            idx.push(id as u64);
            g.d[n] = self.d_grid.point(id);
        }
        let ie = self.e_grid.nearest(f.e);
        idx.push(ie as u64);
        g.e = self.e_grid.point(ie);
        Ok((idx, g))
    }

    /// Componentwise snap of a vector network.
    pub fn snap_vector(&self, f: &VectorFnn) -> Result<(CoverIndex, VectorFnn)> {
        if f.components().len() != self.domain().state_dim {
            return Err(Error::DimensionMismatch { expected: self.domain().state_dim, got: f.components().len() });
        }
        let mut idx = Vec::with_capacity(self.component_len() * f.components().len());
        let mut comps = Vec::with_capacity(f.components().len());
        for c in f.components() {
            let (i, g) = self.snap(c)?;
            idx.extend(i);
            comps.push(g);
        }
        Ok((CoverIndex(idx), VectorFnn::new(comps)?))
    }

    /// Decodes one component's coordinates.
    pub fn materialize_scalar(&self, coords: &[u64]) -> Result<ScalarFnn> {
        if coords.len() != self.component_len() {
            return Err(Error::DimensionMismatch { expected: self.component_len(), got: coords.len() });
        }
        let dom = self.domain();
        let (ds, de) = (dom.state_dim, dom.input_dim);
        let k = self.family.bounds().hidden;
        let mut f = ScalarFnn::zeros(k, ds, de, self.family.flavor.activation());
        let interval = |g: &IntervalGrid, i: u64, what: &str| -> Result<f64> {
            if i as usize >= g.len() {
                return Err(Error::IndexOutOfRange(format!("{what} coordinate {i} ≥ {}", g.len())));
            }
            Ok(g.point(i as usize))
        };
        let mut pos = 0;
        for n in 0..k {
            f.a[n] = interval(&self.a_grid, coords[pos], "a")?;
            pos += 1;
            let b = self.b_grid.decode(&coords[pos..pos + ds], coords[pos + ds])?;
            f.b[n * ds..(n + 1) * ds].copy_from_slice(&b);
            pos += ds + 1;
            let c = self.c_grid.decode(&coords[pos..pos + de], coords[pos + de])?;
            f.c[n * de..(n + 1) * de].copy_from_slice(&c);
            pos += de + 1;
            f.d[n] = interval(&self.d_grid, coords[pos], "d")?;
            pos += 1;
        }
        f.e = interval(&self.e_grid, coords[pos], "e")?;
        Ok(f)
    }

    /// Decodes a covering index into its network.
    pub fn materialize(&self, index: &CoverIndex) -> Result<VectorFnn> {
        let len = self.component_len();
        let dd = self.domain().state_dim;
        if index.0.len() != len * dd {
            return Err(Error::DimensionMismatch { expected: len * dd, got: index.0.len() });
        }
        VectorFnn::new(index.0.chunks(len).map(|c| self.materialize_scalar(c)).collect::<Result<Vec<_>>>()?)
    }

    /// Index whose every coordinate is zero: the minimal corner of each
    /// interval grid, and the first axis cell of each ball grid.
    pub fn zero_index(&self) -> CoverIndex {
        CoverIndex(vec![0; self.component_len() * self.domain().state_dim])
    }
}

/// `(8M · 20N D^{1/p} / Γ + 1)^{4D(D+E+2)N + D}` kept as base and exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormBound {
    pub base: f64,
    pub exponent: u64,
}

impl ClosedFormBound {
    pub fn new(d: usize, e: usize, m: f64, n: usize, gamma: f64, p: NormDegree) -> Self {
        let base = 8.0 * m * 20.0 * n as f64 * p.root(d) / gamma + 1.0;
        let exponent = (4 * d * (d + e + 2) * n + d) as u64;
        Self { base, exponent }
    }

    pub fn log10(&self) -> f64 {
        self.exponent as f64 * self.base.log10()
    }

    /// Exact value when the base is an integer (to 1e-9).
    pub fn exact(&self) -> Option<BigUint> {
        let r = self.base.round();
        if (self.base - r).abs() <= 1e-9 * r.max(1.0) && r >= 1.0 {
            Some(BigUint::from(r as u64).pow(self.exponent as u32))
        } else {
            None
        }
    }

    /// Smallest integer-base power dominating the bound: `⌈base⌉^exponent`.
    pub fn integer_upper(&self) -> BigUint {
        let b = (self.base - 1e-9 * self.base.max(1.0)).ceil().max(1.0) as u64;
        BigUint::from(b).pow(self.exponent as u32)
    }
}

/// Sizes of the per-parameter grids, the constructive family cardinality
/// and (for the ReLU family) the closed-form bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Cardinality {
    pub a: usize,
    pub b: Option<BigUint>,
    pub c: Option<BigUint>,
    pub d: usize,
    pub e: usize,
    pub constructive: Option<BigUint>,
    pub closed_form: Option<ClosedFormBound>,
}

pub fn covering_cardinality(spec: &CoveringSpec) -> Cardinality {
    let dom = spec.domain();
    let b = spec.b_grid.count().ok();
    let c = spec.c_grid.count().ok();
    let k = spec.family.bounds().hidden;
    let constructive = match (&b, &c) {
        (Some(b), Some(c)) => {
            let node = BigUint::from(spec.a_grid.len()) * b * c * BigUint::from(spec.d_grid.len());
            Some(node.pow((k * dom.state_dim) as u32) * BigUint::from(spec.e_grid.len()).pow(dom.state_dim as u32))
        }
        _ => None,
    };
    let closed_form = match spec.family.flavor {
        crate::fnn::Flavor::Relu => {
            Some(ClosedFormBound::new(dom.state_dim, dom.input_dim, spec.family.m, spec.family.n, spec.gamma, dom.p))
        }
        crate::fnn::Flavor::Sigmoid { .. } => None,
    };
    Cardinality { a: spec.a_grid.len(), b, c, d: spec.d_grid.len(), e: spec.e_grid.len(), constructive, closed_form }
}

/// `D^{1/p} κ √(D+E) M N^{−1/2} + Γ`.
pub fn p_bound(d: usize, e: usize, m: f64, n: usize, gamma: f64, kappa: f64, p: NormDegree) -> f64 {
    p.root(d) * kappa * ((d + e) as f64).sqrt() * m / (n as f64).sqrt() + gamma
}

/// `1` if the covering has a single member.
pub fn is_singleton(c: &Cardinality) -> bool {
    c.constructive.as_ref().is_some_and(|n| n.is_one())
}
