//! External and internal potentials, the composite two-constituent potential,
//! closed-form square-well scattering and beam-splitter calibration.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `-V₀` on `|x| ≤ L/2`, zero elsewhere. A zero depth is allowed and means "no well".
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquareWell<T> {
    depth: T,
    width: T,
}

impl<T: Real> SquareWell<T> {
    pub fn new(depth: T, width: T) -> Result<Self> {
        if !(depth >= T::zero()) || !(width > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "square well needs depth >= 0 and width > 0, got V0 = {depth}, L = {width}"
            )));
        }
        Ok(Self { depth, width })
    }

    pub fn depth(&self) -> T {
        self.depth
    }

    pub fn width(&self) -> T {
        self.width
    }

    pub fn value(&self, x: T) -> T {
        if x.mag() <= self.width / T::lit(2.0) {
            -self.depth
        } else {
            T::zero()
        }
    }

    /// Exact average of the well over `[x - h/2, x + h/2]`.
    pub fn cell_average(&self, x: T, h: T) -> T {
        let half = self.width / T::lit(2.0);
        let lo = (x - h / T::lit(2.0)).max(-half);
        let hi = (x + h / T::lit(2.0)).min(half);
        let overlap = (hi - lo).max(T::zero());
        -self.depth * overlap / h
    }
}

/// Logistic step.
fn logistic<T: Real>(u: T) -> T {
    T::one() / (T::one() + (-u).exp())
}

/// `σ'(u) = σ(1-σ)`, written in a form that does not cancel for large `|u|`.
fn logistic_d1<T: Real>(u: T) -> T {
    let e = (-u.mag()).exp();
    e / ((T::one() + e) * (T::one() + e))
}

/// `σ''(u) = σ'(u)(1 - 2σ(u)) = -σ'(u) tanh(u/2)`.
fn logistic_d2<T: Real>(u: T) -> T {
    -logistic_d1(u) * (u / T::lit(2.0)).tanh()
}

/// Square well with logistic edges of scale `s`:
/// `V(x) = -V₀ (σ((x+L/2)/s) - σ((x-L/2)/s))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothedWell<T> {
    depth: T,
    width: T,
    edge_scale: T,
}

impl<T: Real> SmoothedWell<T> {
    pub fn new(depth: T, width: T, edge_scale: T) -> Result<Self> {
        if !(depth >= T::zero()) || !(width > T::zero()) || !(edge_scale > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "smoothed well needs V0 >= 0, L > 0, s > 0; got {depth}, {width}, {edge_scale}"
            )));
        }
        Ok(Self {
            depth,
            width,
            edge_scale,
        })
    }

    pub fn depth(&self) -> T {
        self.depth
    }

    pub fn width(&self) -> T {
        self.width
    }

    pub fn edge_scale(&self) -> T {
        self.edge_scale
    }

    fn edges(&self, x: T) -> (T, T) {
        let half = self.width / T::lit(2.0);
        ((x + half) / self.edge_scale, (x - half) / self.edge_scale)
    }

    pub fn value(&self, x: T) -> T {
        let (u1, u2) = self.edges(x);
        -self.depth * (logistic(u1) - logistic(u2))
    }

    pub fn derivative(&self, x: T) -> T {
        let (u1, u2) = self.edges(x);
        -self.depth / self.edge_scale * (logistic_d1(u1) - logistic_d1(u2))
    }

    pub fn second_derivative(&self, x: T) -> T {
        let (u1, u2) = self.edges(x);
        let s = self.edge_scale;
        -self.depth / (s * s) * (logistic_d2(u1) - logistic_d2(u2))
    }
}

/// Internal spring `U(y) = (k/2)(x₁ - x₂)² = 2k y²`, natural frequency `√(4k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicInternal<T> {
    k: T,
}

impl<T: Real> HarmonicInternal<T> {
    pub fn new(k: T) -> Result<Self> {
        if !(k > T::zero()) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "spring constant must be positive, got {k}"
            )));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> T {
        self.k
    }

    pub fn value(&self, y: T) -> T {
        T::lit(2.0) * self.k * y * y
    }

    pub fn omega(&self) -> T {
        (T::lit(4.0) * self.k).sqrt()
    }
}

/// `V(Y) = c₀ + c₁Y + c₂Y²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticExternal<T> {
    pub c0: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Real> QuadraticExternal<T> {
    pub fn new(c0: T, c1: T, c2: T) -> Result<Self> {
        if !(c0.is_finite() && c1.is_finite() && c2.is_finite()) {
            return Err(Error::InvalidParameter(
                "quadratic coefficients must be finite".into(),
            ));
        }
        Ok(Self { c0, c1, c2 })
    }

    pub fn value(&self, x: T) -> T {
        self.c0 + x * (self.c1 + x * self.c2)
    }
}

/// External potential acting on each constituent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExternalPotential<T> {
    Square(SquareWell<T>),
    Smoothed(SmoothedWell<T>),
    Quadratic(QuadraticExternal<T>),
}

impl<T: Real> From<SquareWell<T>> for ExternalPotential<T> {
    fn from(w: SquareWell<T>) -> Self {
        Self::Square(w)
    }
}

impl<T: Real> From<SmoothedWell<T>> for ExternalPotential<T> {
    fn from(w: SmoothedWell<T>) -> Self {
        Self::Smoothed(w)
    }
}

impl<T: Real> From<QuadraticExternal<T>> for ExternalPotential<T> {
    fn from(q: QuadraticExternal<T>) -> Self {
        Self::Quadratic(q)
    }
}

impl<T: Real> ExternalPotential<T> {
    pub fn value(&self, x: T) -> T {
        match self {
            Self::Square(w) => w.value(x),
            Self::Smoothed(w) => w.value(x),
            Self::Quadratic(q) => q.value(x),
        }
    }

    pub fn derivative(&self, x: T) -> Result<T> {
        match self {
            Self::Square(_) => Err(Error::Distributional),
            Self::Smoothed(w) => Ok(w.derivative(x)),
            Self::Quadratic(q) => Ok(q.c1 + T::lit(2.0) * q.c2 * x),
        }
    }

    /// `V''(x)`; undefined (distributional) for the raw square well.
    pub fn second_derivative(&self, x: T) -> Result<T> {
        match self {
            Self::Square(_) => Err(Error::Distributional),
            Self::Smoothed(w) => Ok(w.second_derivative(x)),
            Self::Quadratic(q) => Ok(T::lit(2.0) * q.c2),
        }
    }

    /// Value used on a lattice of spacing `h`: the exact cell average for the
    /// square well (so its edges are not snapped to lattice points), the point
    /// value for smooth potentials.
    pub fn grid_value(&self, x: T, h: T) -> T {
        match self {
            Self::Square(w) => w.cell_average(x, h),
            _ => self.value(x),
        }
    }

    /// `V(Y+y) + V(Y-y) - 2V(Y)`, in closed form where one exists.
    pub fn symmetric_difference(&self, big_y: T, y: T) -> T {
        match self {
            Self::Quadratic(q) => T::lit(2.0) * q.c2 * y * y,
            _ => self.value(big_y + y) + self.value(big_y - y) - T::lit(2.0) * self.value(big_y),
        }
    }

    /// `V(x) = V(-x)`.
    pub fn is_even(&self) -> bool {
        match self {
            Self::Square(_) | Self::Smoothed(_) => true,
            Self::Quadratic(q) => q.c1 == T::zero(),
        }
    }

    pub fn depth(&self) -> Option<T> {
        match self {
            Self::Square(w) => Some(w.depth()),
            Self::Smoothed(w) => Some(w.depth()),
            Self::Quadratic(_) => None,
        }
    }
}

/// `V(Y+y) + V(Y-y) + U(y)`, exact (no Taylor expansion).
pub fn composite_potential<T: Real>(
    v: &ExternalPotential<T>,
    u: &HarmonicInternal<T>,
    big_y: T,
    y: T,
) -> T {
    v.value(big_y + y) + v.value(big_y - y) + u.value(y)
}

/// `V''(Y)` of an external potential.
pub fn second_derivative<T: Real>(v: &ExternalPotential<T>, big_y: T) -> Result<T> {
    v.second_derivative(big_y)
}

/// Plane-wave reflection and transmission probabilities `(|R|², |T|²)` for a
/// particle of mass `mass` and momentum `p > 0` on a square well.
pub fn analytic_rt<T: Real>(p: T, well: &SquareWell<T>, mass: T) -> Result<(T, T)> {
    if !(p > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "incident momentum must be positive, got {p}"
        )));
    }
    Ok(rt_from_mv0(p, well.width(), mass * well.depth()))
}

fn rt_from_mv0<T: Real>(p: T, width: T, mv0: T) -> (T, T) {
    let two = T::lit(2.0);
    let p2 = p * p;
    let p_in = (p2 + two * mv0).sqrt();
    let s = (width * p_in).sin();
    let s2 = s * s;
    let den = two * p2 * p2 + T::lit(4.0) * mv0 * p2 + two * mv0 * mv0 * s2;
    let r = two * mv0 * mv0 * s2 / den;
    let t = two * p2 * (p2 + two * mv0) / den;
    (r, t)
}

/// Absolute tolerance on `mV₀` of the calibration bisection.
pub const CALIBRATION_TOL: f64 = 1e-10;

/// Smallest `mV₀ ≥ 0` with `|R|²(p, L, mV₀) = target`, searched on the first
/// rising branch of `|R|²` as a function of `mV₀`.
pub fn calibrate_beam_splitter<T: Real>(p: T, width: T, target: T) -> Result<T> {
    if !(p > T::zero()) || !(width > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "calibration needs p > 0 and L > 0, got p = {p}, L = {width}"
        )));
    }
    if !(target >= T::zero()) || target >= T::one() {
        return Err(Error::InvalidParameter(format!(
            "target reflection must lie in [0, 1), got {target}"
        )));
    }
    if target == T::zero() {
        return Ok(T::zero());
    }
    let r2 = |mv0: T| rt_from_mv0(p, width, mv0).0;

    // Walk up the first branch in steps of 0.01 rad of L·p̃ until |R|² either
    // reaches the target or starts to fall.
    let mut lo = T::zero();
    let mut r_lo = T::zero();
    let mut hi = None;
    for _ in 0..1_000_000 {
        let p_in = (p * p + T::lit(2.0) * lo).sqrt();
        let step = T::lit(0.01) * p_in / width;
        let next = lo + step;
        let r_next = r2(next);
        if r_next >= target {
            hi = Some(next);
            break;
        }
        if r_next < r_lo {
            break;
        }
        lo = next;
        r_lo = r_next;
    }
    let Some(mut hi) = hi else {
        return Err(Error::NoRoot {
            target: target.as_f64(),
            branch_max: r_lo.as_f64(),
        });
    };
    let tol = T::lit(CALIBRATION_TOL);
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        if r2(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo + hi) / T::lit(2.0))
}
