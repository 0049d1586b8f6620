//! Convex functions φ (and ψ) together with exact averages of φ along
//! straight segments.
//!
//! The checkerboard conditional CDFs are piecewise linear, so the difference
//! of two of them is linear on every grid cell and the v-integral reduces to
//! averages `∫₀¹ φ(d₀ + t(d₁ − d₀)) dt`. The built-in kinds have closed forms
//! for that average; [`PhiKind::Custom`] falls back to Gauss–Legendre split
//! at the zero crossing of the path.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{GaussLegendre, DEFAULT_ORDER};
use crate::scalar::Scalar;

/// Where the function is meant to be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// [-1, 1]: differences of conditional distribution functions.
    UnitInterval,
    /// All of ℝ: differences of conditional expectations (ψ-use).
    RealLine,
}

impl Domain {
    fn describe(self) -> &'static str {
        match self {
            Domain::UnitInterval => "[-1, 1]",
            Domain::RealLine => "(-inf, inf)",
        }
    }

    /// Range scanned by the numerical convexity check.
    fn check_range(self) -> (f64, f64) {
        match self {
            Domain::UnitInterval => (-1.0, 1.0),
            Domain::RealLine => (-4.0, 4.0),
        }
    }
}

/// Black-box evaluator wrapped so that [`ConvexFunction`] stays `Clone + Send + Sync`.
#[derive(Clone)]
pub struct CustomFn<T> {
    name: String,
    f: Arc<dyn Fn(T) -> T + Send + Sync>,
}

impl<T> fmt::Debug for CustomFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFn").field("name", &self.name).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum PhiKind<T> {
    /// |x|^p, p ≥ 1.
    AbsPow(T),
    /// e^{cx} − 1, c ≠ 0.
    ExpSigned(T),
    /// e^{|cx|} − 1, c ≠ 0.
    ExpAbs(T),
    Custom(CustomFn<T>),
}

/// A convex function φ with φ(0) = 0, strictly convex at 0.
///
/// Construction only checks parameter ranges; call [`ConvexFunction::validate`]
/// to certify the convexity hypotheses numerically.
#[derive(Debug, Clone)]
pub struct ConvexFunction<T> {
    kind: PhiKind<T>,
    domain: Domain,
    quadrature: Arc<GaussLegendre<T>>,
}

/// Evidence returned by a successful [`ConvexFunction::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityCertificate {
    pub grid_points: usize,
    /// Smallest observed `(φ(a) + φ(b))/2 − φ((a + b)/2)` on the grid.
    pub min_midpoint_gap: f64,
    /// Smallest `(φ(−ε) + φ(ε))/2 − φ(0)` over the probed ε.
    pub min_strict_gap: f64,
}

const CONVEXITY_GRID: usize = 401;
const STRICT_EPSILONS: [f64; 3] = [1e-3, 1e-2, 1e-1];

impl<T: Scalar> ConvexFunction<T> {
    fn with_kind(kind: PhiKind<T>) -> Self {
        Self { kind, domain: Domain::UnitInterval, quadrature: Arc::new(GaussLegendre::new(DEFAULT_ORDER)) }
    }

    pub fn abs_pow(p: T) -> Result<Self> {
        if !(p >= T::one()) || !p.is_finite() {
            return Err(Error::Descriptor(format!("abs^p:{p} needs a finite p >= 1")));
        }
        Ok(Self::with_kind(PhiKind::AbsPow(p)))
    }

    pub fn exp_signed(c: T) -> Result<Self> {
        if c == T::zero() || !c.is_finite() {
            return Err(Error::Descriptor(format!("expsgn:{c} needs a finite c != 0")));
        }
        Ok(Self::with_kind(PhiKind::ExpSigned(c)))
    }

    pub fn exp_abs(c: T) -> Result<Self> {
        if c == T::zero() || !c.is_finite() {
            return Err(Error::Descriptor(format!("expabs:{c} needs a finite c != 0")));
        }
        Ok(Self::with_kind(PhiKind::ExpAbs(c)))
    }

    pub fn custom<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(T) -> T + Send + Sync + 'static,
    {
        Self::with_kind(PhiKind::Custom(CustomFn { name: name.into(), f: Arc::new(f) }))
    }

    /// Same function, declared on the whole real line (ψ-use).
    pub fn for_psi(mut self) -> Self {
        self.domain = Domain::RealLine;
        self
    }

    /// Replaces the quadrature rule used for custom functions.
    pub fn with_quadrature_order(mut self, order: usize) -> Self {
        self.quadrature = Arc::new(GaussLegendre::new(order));
        self
    }

    pub fn kind(&self) -> &PhiKind<T> {
        &self.kind
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// True when φ(x) = φ(−x) for every x.
    pub fn is_even(&self) -> bool {
        matches!(self.kind, PhiKind::AbsPow(_) | PhiKind::ExpAbs(_))
    }

    /// Textual descriptor, parseable back by [`FromStr`] for built-ins.
    pub fn descriptor(&self) -> String {
        match &self.kind {
            PhiKind::AbsPow(p) => format!("abs^p:{p}"),
            PhiKind::ExpSigned(c) => format!("expsgn:{c}"),
            PhiKind::ExpAbs(c) => format!("expabs:{c}"),
            PhiKind::Custom(c) => c.name.clone(),
        }
    }

    /// φ(x) without the domain check.
    #[inline]
    pub fn value(&self, x: T) -> T {
        match &self.kind {
            PhiKind::AbsPow(p) => abs_pow(x, *p),
            PhiKind::ExpSigned(c) => (*c * x).exp_m1(),
            PhiKind::ExpAbs(c) => (*c * x).abs().exp_m1(),
            PhiKind::Custom(c) => (c.f)(x),
        }
    }

    pub fn eval(&self, x: T) -> Result<T> {
        self.check_domain(x)?;
        Ok(self.value(x))
    }

    fn check_domain(&self, x: T) -> Result<()> {
        let ok = match self.domain {
            Domain::UnitInterval => x.abs() <= T::one() + domain_slack::<T>(),
            Domain::RealLine => x.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain { value: x.as_f64(), domain: self.domain.describe() })
        }
    }

    /// Certifies φ(0) = 0, midpoint convexity on a 401-point grid, and strict
    /// convexity at 0.
    pub fn validate(&self) -> Result<ConvexityCertificate> {
        let at_zero = self.value(T::zero()).as_f64();
        if at_zero.abs() > 1e-14 || !at_zero.is_finite() {
            return Err(Error::NotZeroAtZero { at: 0.0, value: at_zero });
        }

        let (lo, hi) = self.domain.check_range();
        let step = (hi - lo) / (CONVEXITY_GRID - 1) as f64;
        let grid: Vec<f64> = (0..CONVEXITY_GRID).map(|k| lo + step * k as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&x| self.value(T::lit(x)).as_f64()).collect();
        let rel = 1e-12f64.max(8.0 * T::epsilon().as_f64());
        let mut min_gap = f64::INFINITY;
        for a in 0..CONVEXITY_GRID {
            for b in (a + 1)..CONVEXITY_GRID {
                let mid = self.value(T::lit(0.5 * (grid[a] + grid[b]))).as_f64();
                let chord = 0.5 * (values[a] + values[b]);
                let gap = chord - mid;
                let tol = rel * 1f64.max(values[a].abs()).max(values[b].abs());
                if !(gap >= -tol) {
                    return Err(Error::NotConvex { a: grid[a], b: grid[b], excess: -gap });
                }
                min_gap = min_gap.min(gap);
            }
        }

        let mut min_strict = f64::INFINITY;
        for eps in STRICT_EPSILONS {
            let e = T::lit(eps);
            let gap = (0.5 * (self.value(-e) + self.value(e)).as_f64()) - at_zero;
            if !(gap > 1e-15) {
                return Err(Error::NotStrictlyConvexAtZero { eps, gap });
            }
            min_strict = min_strict.min(gap);
        }

        Ok(ConvexityCertificate { grid_points: CONVEXITY_GRID, min_midpoint_gap: min_gap, min_strict_gap: min_strict })
    }

    /// `∫₀¹ φ(d0 + t(d1 − d0)) dt`, with domain checks on both endpoints.
    pub fn segment_integral(&self, d0: T, d1: T) -> Result<T> {
        self.check_domain(d0)?;
        self.check_domain(d1)?;
        Ok(self.segment_mean(d0, d1))
    }

    /// Unchecked [`segment_integral`](Self::segment_integral), used in hot loops.
    #[inline]
    pub fn segment_mean(&self, d0: T, d1: T) -> T {
        match &self.kind {
            PhiKind::AbsPow(p) => abs_pow_mean(*p, d0, d1),
            PhiKind::ExpSigned(c) => exp_mean(*c, d0, d1),
            PhiKind::ExpAbs(c) => exp_abs_mean(c.abs(), d0, d1),
            PhiKind::Custom(_) => self.quadrature_mean(d0, d1),
        }
    }

    /// Gauss–Legendre average along the path, split at its zero crossing.
    pub fn quadrature_mean(&self, d0: T, d1: T) -> T {
        let q = &*self.quadrature;
        let path = |t: T| d0 + t * (d1 - d0);
        if d0 * d1 < T::zero() {
            let cross = d0 / (d0 - d1);
            q.integrate(T::zero(), cross, |t| self.value(path(t)))
                + q.integrate(cross, T::one(), |t| self.value(path(t)))
        } else {
            q.integrate_unit(|t| self.value(path(t)))
        }
    }
}

fn domain_slack<T: Scalar>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

#[inline]
fn abs_pow<T: Scalar>(x: T, p: T) -> T {
    let a = x.abs();
    if p == T::one() {
        a
    } else if p == T::lit(2.0) {
        a * a
    } else if p == T::lit(3.0) {
        a * a * a
    } else {
        a.powf(p)
    }
}

/// Generalized binomial coefficient C(p, k).
fn binom<T: Scalar>(p: T, k: usize) -> T {
    (0..k).fold(T::one(), |acc, j| acc * (p - T::of_usize(j)) / T::of_usize(j + 1))
}

/// Average of s^p over s between `x` and `y`, both ≥ 0.
fn mean_pow_nonneg<T: Scalar>(p: T, x: T, y: T) -> T {
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    let h = hi - lo;
    let m = T::lit(0.5) * (hi + lo);
    if m == T::zero() {
        return T::zero();
    }
    if h <= T::lit(1e-2) * m {
        // Mean of (1 + s)^p over |s| ≤ r, expanded in r = h/(2m).
        let r2 = (h / (T::lit(2.0) * m)).powi(2);
        let mut series = T::one();
        let mut rk = T::one();
        for k in 1..=6 {
            rk = rk * r2;
            series = series + binom(p, 2 * k) * rk / T::of_usize(2 * k + 1);
        }
        abs_pow(m, p) * series
    } else {
        let q = p + T::one();
        (abs_pow(hi, q) - abs_pow(lo, q)) / (q * h)
    }
}

fn abs_pow_mean<T: Scalar>(p: T, d0: T, d1: T) -> T {
    let (x, y) = (d0.abs(), d1.abs());
    if d0 * d1 < T::zero() {
        let q = p + T::one();
        (abs_pow(x, q) + abs_pow(y, q)) / (q * (x + y))
    } else {
        mean_pow_nonneg(p, x, y)
    }
}

/// Average of e^{cs} − 1 over s between `d0` and `d1`.
fn exp_mean<T: Scalar>(c: T, d0: T, d1: T) -> T {
    let (d0, d1) = if d0 <= d1 { (d0, d1) } else { (d1, d0) };
    let x = c * (d1 - d0);
    // g = (e^x − 1)/x and g − 1, both accurate near x = 0.
    let (g, g_minus_one) = if x.abs() < T::lit(1e-3) {
        let x2 = x * x;
        let tail = x / T::lit(2.0) + x2 / T::lit(6.0) + x2 * x / T::lit(24.0) + x2 * x2 / T::lit(120.0);
        (T::one() + tail, tail)
    } else {
        let g = x.exp_m1() / x;
        (g, g - T::one())
    };
    (c * d0).exp_m1() * g + g_minus_one
}

fn exp_abs_mean<T: Scalar>(c: T, d0: T, d1: T) -> T {
    let (x, y) = (d0.abs(), d1.abs());
    if d0 * d1 < T::zero() {
        (x * exp_mean(c, T::zero(), x) + y * exp_mean(c, T::zero(), y)) / (x + y)
    } else {
        exp_mean(c, x, y)
    }
}

impl ConvexFunction<f64> {
    /// The nine configurations of the simulation study:
    /// |x|^p for p ∈ {1,2,3}, e^{cx}−1 and e^{|cx|}−1 for c ∈ {1/5, 1, 5}.
    pub fn study_grid() -> Vec<Self> {
        let mut out = Vec::with_capacity(9);
        for p in [1.0, 2.0, 3.0] {
            out.push(Self::abs_pow(p).expect("valid p"));
        }
        for c in [0.2, 1.0, 5.0] {
            out.push(Self::exp_signed(c).expect("valid c"));
        }
        for c in [0.2, 1.0, 5.0] {
            out.push(Self::exp_abs(c).expect("valid c"));
        }
        out
    }
}

impl<T: Scalar> FromStr for ConvexFunction<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = s.split_once(':').ok_or_else(|| Error::Descriptor(s.to_string()))?;
        let value: f64 = parse_number(arg).ok_or_else(|| Error::Descriptor(s.to_string()))?;
        let value = T::lit(value);
        match name.trim() {
            "abs^p" | "abs" => Self::abs_pow(value),
            "expsgn" => Self::exp_signed(value),
            "expabs" => Self::exp_abs(value),
            _ => Err(Error::Descriptor(s.to_string())),
        }
    }
}

/// Accepts decimals and simple fractions such as `1/5`.
fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gl64_mean(f: &ConvexFunction<f64>, d0: f64, d1: f64) -> f64 {
        let q = GaussLegendre::<f64>::new(64);
        let path = |t: f64| d0 + t * (d1 - d0);
        if d0 * d1 < 0.0 {
            // Nodes graded quadratically toward the kink: t = c + (e − c)s².
            let cross = d0 / (d0 - d1);
            let side =
                |end: f64| q.integrate_unit(|s| 2.0 * s * (end - cross) * f.value(path(cross + (end - cross) * s * s)));
            side(1.0) - side(0.0)
        } else {
            q.integrate_unit(|t| f.value(path(t)))
        }
    }

    #[test]
    fn eval_examples() {
        let sq = ConvexFunction::abs_pow(2.0).unwrap();
        assert_eq!(sq.eval(-0.5).unwrap(), 0.25);
        assert_eq!(ConvexFunction::exp_signed(1.0).unwrap().eval(0.0).unwrap(), 0.0);
        let e = ConvexFunction::exp_abs(5.0).unwrap().eval(0.2).unwrap();
        assert!((e - (1f64.exp() - 1.0)).abs() < 1e-15);
        assert!((e - 1.718281828).abs() < 1e-9);
    }

    #[test]
    fn eval_rejects_outside_domain() {
        let f = ConvexFunction::abs_pow(1.0).unwrap();
        assert!(matches!(f.eval(1.5), Err(Error::Domain { .. })));
        assert!(f.clone().for_psi().eval(1.5).is_ok());
        assert!(f.for_psi().eval(f64::NAN).is_err());
    }

    #[test]
    fn exp_signed_is_accurate_near_zero() {
        let f = ConvexFunction::exp_signed(1.0).unwrap();
        let x = 1e-12_f64;
        assert!((f.value(x) - x).abs() < 1e-24);
    }

    #[test]
    fn validate_examples() {
        let cert = ConvexFunction::abs_pow(1.0).unwrap().validate().unwrap();
        assert_eq!(cert.grid_points, 401);
        assert!(cert.min_strict_gap > 0.0);

        let linear = ConvexFunction::<f64>::custom("identity", |x| x);
        assert!(matches!(linear.validate(), Err(Error::NotStrictlyConvexAtZero { .. })));

        let concave = ConvexFunction::<f64>::custom("neg-square", |x| -x * x);
        match concave.validate() {
            Err(Error::NotConvex { a, b, excess }) => {
                assert!(a < b);
                assert!(excess > 0.0);
            }
            other => panic!("expected NotConvex, got {other:?}"),
        }

        let shifted = ConvexFunction::<f64>::custom("shifted", |x| x * x + 1.0);
        assert!(matches!(shifted.validate(), Err(Error::NotZeroAtZero { .. })));
    }

    #[test]
    fn every_study_function_validates() {
        for f in ConvexFunction::study_grid() {
            f.validate().unwrap_or_else(|e| panic!("{}: {e}", f.descriptor()));
            f.clone().for_psi().validate().unwrap();
        }
    }

    #[test]
    fn negative_values_are_allowed() {
        // e^{x} − 1 is negative on x < 0 and still admissible.
        let f = ConvexFunction::exp_signed(1.0).unwrap();
        assert!(f.value(-0.5) < 0.0);
        assert!(f.validate().is_ok());
    }

    #[test]
    fn segment_examples() {
        let l1 = ConvexFunction::<f64>::abs_pow(1.0).unwrap();
        assert!((l1.segment_integral(-1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let l2 = ConvexFunction::<f64>::abs_pow(2.0).unwrap();
        assert!((l2.segment_integral(0.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let e1 = ConvexFunction::exp_signed(1.0).unwrap();
        let closed = e1.segment_integral(0.0, 1.0).unwrap();
        let oracle = gl64_mean(&e1, 0.0, 1.0);
        assert!((oracle - (1f64.exp() - 2.0)).abs() < 1e-14);
        assert!((closed - oracle).abs() < 1e-14);
        assert!((closed - 0.718281828).abs() < 1e-9);
    }

    #[test]
    fn segment_rejects_outside_domain() {
        let f = ConvexFunction::abs_pow(2.0).unwrap();
        assert!(f.segment_integral(0.0, 1.2).is_err());
    }

    #[test]
    fn custom_quadrature_handles_kinks() {
        let l1 = ConvexFunction::<f64>::custom("abs", f64::abs);
        assert!((l1.segment_integral(-1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((l1.segment_integral(-0.3, 0.9).unwrap() - (0.09 + 0.81) / 2.4).abs() < 1e-15);
    }

    #[test]
    fn descriptors_round_trip() {
        for f in ConvexFunction::study_grid() {
            let d = f.descriptor();
            let g: ConvexFunction<f64> = d.parse().unwrap();
            assert_eq!(g.descriptor(), d);
        }
        let f: ConvexFunction<f64> = "expsgn:1/5".parse().unwrap();
        assert!(matches!(f.kind(), PhiKind::ExpSigned(c) if (*c - 0.2).abs() < 1e-16));
        assert!("abs^p:0.5".parse::<ConvexFunction<f64>>().is_err());
        assert!("expabs:0".parse::<ConvexFunction<f64>>().is_err());
        assert!("cube:3".parse::<ConvexFunction<f64>>().is_err());
    }

    #[test]
    fn f32_segment_means() {
        let f = ConvexFunction::<f32>::abs_pow(2.0).unwrap();
        assert!((f.segment_integral(0.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-6);
        let g = ConvexFunction::<f32>::exp_abs(1.0).unwrap();
        assert!((g.segment_mean(-0.5, 0.5) - 2.0 * (0.5f32.exp() - 1.5)).abs() < 1e-5);
    }

    fn builtin_with_custom() -> Vec<ConvexFunction<f64>> {
        let mut fs = ConvexFunction::study_grid();
        fs.push(ConvexFunction::abs_pow(1.5).unwrap());
        fs.push(ConvexFunction::abs_pow(4.25).unwrap());
        fs.push(ConvexFunction::exp_abs(-2.0).unwrap());
        fs.push(ConvexFunction::exp_signed(-3.0).unwrap());
        fs.push(ConvexFunction::custom("quartic", |x: f64| x.powi(4) + x * x));
        fs
    }

    #[test]
    fn closed_forms_match_order_64_quadrature() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let fs = builtin_with_custom();
        for _ in 0..1000 {
            let d0: f64 = rng.random_range(-1.0..=1.0);
            let d1: f64 = rng.random_range(-1.0..=1.0);
            for f in &fs {
                let got = f.segment_mean(d0, d1);
                let want = gl64_mean(f, d0, d1);
                assert!((got - want).abs() < 1e-12, "{} on ({d0}, {d1}): {got} vs {want}", f.descriptor());
            }
        }
    }

    #[test]
    fn near_degenerate_segments_match_quadrature() {
        let fs = builtin_with_custom();
        for &(d0, d1) in &[(0.5, 0.5 + 1e-9), (-0.3, -0.3 - 1e-7), (1e-10, -1e-10), (0.9, 0.9049), (0.0, 1e-14)] {
            for f in &fs {
                let got = f.segment_mean(d0, d1);
                let want = gl64_mean(f, d0, d1);
                assert!((got - want).abs() < 1e-13, "{} on ({d0}, {d1})", f.descriptor());
            }
        }
    }

    proptest! {
        #[test]
        fn degenerate_segment_equals_value(d in -1.0f64..=1.0) {
            for f in builtin_with_custom() {
                prop_assert!((f.segment_mean(d, d) - f.value(d)).abs() < 1e-13);
            }
        }

        #[test]
        fn reversal_symmetry(d0 in -1.0f64..=1.0, d1 in -1.0f64..=1.0) {
            for f in builtin_with_custom() {
                prop_assert!((f.segment_mean(d0, d1) - f.segment_mean(d1, d0)).abs() < 1e-13);
            }
        }

        #[test]
        fn abs_pow_decreasing_in_p(d0 in -1.0f64..=1.0, d1 in -1.0f64..=1.0, p in 1.0f64..4.0, dp in 0.0f64..3.0) {
            let lo = ConvexFunction::abs_pow(p).unwrap().segment_mean(d0, d1);
            let hi = ConvexFunction::abs_pow(p + dp).unwrap().segment_mean(d0, d1);
            prop_assert!(lo >= hi - 1e-15);
        }
    }
}
