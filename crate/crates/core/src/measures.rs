//! Λ_φ, α_φ, Chatterjee's ξ, ζ₁ and Λ_ψ.
//!
//! On a checkerboard copula the triple integral
//!
//! ```text
//! Λ_φ = α_φ⁻¹ ∫∫∫ φ(K(u₁,[0,v]) − K(u₂,[0,v])) du₁ du₂ dv
//! ```
//!
//! is a finite sum: K is constant in u on each stripe and linear in v on each
//! cell, so every term is an exact segment average of φ. The generic path
//! evaluates all N² stripe pairs on all N segments. For |x| and x² the pair
//! sums collapse per segment: x² through centred moments, |x| through sorted
//! prefix sums at the breakpoints plus an exact correction for each pair of
//! stripe CDFs that cross inside the segment.

use rayon::prelude::*;

use crate::checkerboard::{ecbc, resolution, CheckerboardCopula};
use crate::error::{Error, Result};
use crate::ingest::{to_pseudo, BivariateSample, TiePolicy};
use crate::phi::{ConvexFunction, PhiKind};
use crate::quadrature::GaussLegendre;
use crate::scalar::{sum_compensated, Compensated, Scalar};

/// Multiplicative constant of ζ₁. With 3, FGM(θ) gives θ/4 and Fréchet(α) gives α.
pub const ZETA1_CONSTANT: f64 = 3.0;

/// Resolutions at or above this evaluate the generic path in parallel.
const PARALLEL_THRESHOLD: usize = 32;

pub const CSV_HEADER: &str = "phi,N,numerator,normalizer,value";

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureResult<T> {
    pub value: T,
    pub numerator: T,
    pub normalizer: T,
    /// Checkerboard resolution (number of stripes for Λ_ψ).
    pub resolution: usize,
    pub phi: String,
}

impl<T: Scalar> MeasureResult<T> {
    fn new(numerator: T, normalizer: T, resolution: usize, phi: String) -> Result<Self> {
        if !(normalizer > T::zero()) {
            return Err(Error::NormalizerNotPositive(normalizer.as_f64()));
        }
        Ok(Self { value: numerator / normalizer, numerator, normalizer, resolution, phi })
    }

    /// One row matching [`CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!("{},{},{:e},{:e},{}", self.phi, self.resolution, self.numerator, self.normalizer, self.value)
    }
}

/// Which summation `lambda_phi` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalPath {
    /// Fast path for |x| and x², generic otherwise.
    #[default]
    Auto,
    Generic,
}

/// α_φ = (φ(1) + φ(−1))/6.
///
/// The integrand φ(1{u₁ ≤ v} − 1{u₂ ≤ v}) is φ(1) on {u₁ ≤ v < u₂}, φ(−1) on
/// {u₂ ≤ v < u₁} and φ(0) = 0 elsewhere; each region has volume 1/6.
pub fn alpha_phi<T: Scalar>(f: &ConvexFunction<T>) -> Result<T> {
    let a = (f.value(T::one()) + f.value(-T::one())) / T::lit(6.0);
    if !(a > T::zero()) {
        return Err(Error::NormalizerNotPositive(a.as_f64()));
    }
    Ok(a)
}

pub fn lambda_phi<T: Scalar>(cb: &CheckerboardCopula<T>, f: &ConvexFunction<T>) -> Result<MeasureResult<T>> {
    lambda_phi_with(cb, f, EvalPath::Auto)
}

pub fn lambda_phi_with<T: Scalar>(
    cb: &CheckerboardCopula<T>,
    f: &ConvexFunction<T>,
    path: EvalPath,
) -> Result<MeasureResult<T>> {
    let normalizer = alpha_phi(f)?;
    let n = cb.resolution();
    let table = cb.cumulative_table();
    let pair_sum = match (path, f.kind()) {
        (EvalPath::Auto, PhiKind::AbsPow(p)) if *p == T::one() => abs_pair_sum(&table),
        (EvalPath::Auto, PhiKind::AbsPow(p)) if *p == T::lit(2.0) => square_pair_sum(&table),
        _ => generic_pair_sum(&table, f),
    };
    let numerator = pair_sum / T::of_usize(n).powi(3);
    MeasureResult::new(numerator, normalizer, n, f.descriptor())
}

/// Σ_{i,k} Σ_j segment_mean(F_i − F_k on segment j).
fn generic_pair_sum<T: Scalar>(table: &[Vec<T>], f: &ConvexFunction<T>) -> T {
    let n = table.len();
    let row = |i: usize| -> T {
        let fi = &table[i];
        let mut acc = Compensated::new();
        for fk in table {
            for j in 0..n {
                acc.add(f.segment_mean(fi[j] - fk[j], fi[j + 1] - fk[j + 1]));
            }
        }
        acc.total()
    };
    let rows: Vec<T> =
        if n >= PARALLEL_THRESHOLD { (0..n).into_par_iter().map(row).collect() } else { (0..n).map(row).collect() };
    sum_compensated(rows)
}

/// Column j of the stripe-CDF table: F_i(j/N) for every i.
fn column<T: Scalar>(table: &[Vec<T>], j: usize) -> Vec<T> {
    table.iter().map(|r| r[j]).collect()
}

/// Σ over ordered pairs of ∫₀¹ (A + (E − A)t)² dt = (A² + AE + E²)/3, with
/// A, E the pair differences at the two ends of each segment.
fn square_pair_sum<T: Scalar>(table: &[Vec<T>]) -> T {
    let n = table.len();
    let nf = T::of_usize(n);
    let two_n = T::lit(2.0) * nf;
    let mut total = Compensated::new();
    let mut left = column(table, 0);
    for j in 0..n {
        let right = column(table, j + 1);
        let ma = sum_compensated(left.iter().copied()) / nf;
        let mb = sum_compensated(right.iter().copied()) / nf;
        let (mut saa, mut sab, mut sbb) = (Compensated::new(), Compensated::new(), Compensated::new());
        for (&a, &b) in left.iter().zip(&right) {
            let (da, db) = (a - ma, b - mb);
            saa.add(da * da);
            sab.add(da * db);
            sbb.add(db * db);
        }
        total.add(two_n * (saa.total() + sab.total() + sbb.total()) / T::lit(3.0));
        left = right;
    }
    total.total()
}

/// Σ over ordered pairs of |x_i − x_k|, via sorting.
fn ordered_abs_pair_sum<T: Scalar>(values: &[T]) -> T {
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    let mut acc = Compensated::new();
    for (k, &x) in v.iter().enumerate() {
        // x is larger than k values and smaller than n − 1 − k values.
        acc.add(x * (T::of_usize(k) - T::of_usize(n - 1 - k)));
    }
    T::lit(2.0) * acc.total()
}

/// Σ over ordered pairs of ∫₀¹ |A + (E − A)t| dt.
///
/// Without a sign change the average is the trapezoid (|A| + |E|)/2; a pair
/// that crosses inside the segment loses |A||E|/(|A| + |E|) against it. The
/// trapezoid parts come from sorted prefix sums at the breakpoints; crossing
/// pairs are exactly the inversions between the orders at the two ends, and
/// an insertion sort visits each one once.
fn abs_pair_sum<T: Scalar>(table: &[Vec<T>]) -> T {
    let n = table.len();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let breakpoint: Vec<T> = (0..=n).map(|j| ordered_abs_pair_sum(&column(table, j))).collect();
    let mut total = Compensated::new();
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..n {
        let a = column(table, j);
        let b = column(table, j + 1);
        total.add(T::lit(0.5) * (breakpoint[j] + breakpoint[j + 1]));

        order.sort_unstable_by(|&x, &y| cmp(&a[x], &a[y]).then(cmp(&b[x], &b[y])));
        let mut correction = Compensated::new();
        for pos in 1..n {
            let mut p = pos;
            while p > 0 && b[order[p - 1]] > b[order[p]] {
                let (x, y) = (order[p - 1], order[p]);
                let da = (a[x] - a[y]).abs();
                let de = (b[x] - b[y]).abs();
                correction.add(da * de / (da + de));
                order.swap(p - 1, p);
                p -= 1;
            }
        }
        total.add(-T::lit(2.0) * correction.total());
    }
    total.total()
}

/// Brute-force midpoint evaluation of Λ_φ on a grid³ lattice of (u₁, u₂, v).
///
/// Conditional CDFs are read through [`StripeCdf::eval`](crate::StripeCdf::eval).
/// Lattice points in u are grouped by the stripe they fall in, which is an
/// exact regrouping of the grid³ sum, so the cost is N²·grid instead of grid³.
pub fn lambda_phi_oracle<T: Scalar>(cb: &CheckerboardCopula<T>, f: &ConvexFunction<T>, grid: usize) -> Result<T> {
    if grid < 100 {
        return Err(Error::Config(format!("oracle grid must be at least 100, got {grid}")));
    }
    let n = cb.resolution();
    let h = T::one() / T::of_usize(grid);
    let mid = |k: usize| (T::of_usize(k) + T::lit(0.5)) * h;

    let mut weight = vec![0usize; n];
    for k in 0..grid {
        let i = (mid(k) * T::of_usize(n)).floor().to_usize().unwrap_or(0).min(n - 1);
        weight[i] += 1;
    }
    let cdfs: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let s = cb.stripe_cdf(i)?;
            Ok((0..grid).map(|c| s.eval(mid(c))).collect())
        })
        .collect::<Result<_>>()?;

    let mut total = Compensated::new();
    for i in 0..n {
        for k in 0..n {
            if weight[i] == 0 || weight[k] == 0 {
                continue;
            }
            let inner = sum_compensated((0..grid).map(|c| f.value(cdfs[i][c] - cdfs[k][c])));
            total.add(T::of_usize(weight[i] * weight[k]) * inner);
        }
    }
    let raw = total.total() * h * h * h;
    Ok(raw / alpha_phi(f)?)
}

/// Oracle with exact u-integration (stripe weights 1/N) and order-64
/// Gauss–Legendre in v on every cell, split where the two CDFs cross.
/// Evaluates φ pointwise only; no closed-form segment averages.
pub fn lambda_phi_oracle_exact<T: Scalar>(cb: &CheckerboardCopula<T>, f: &ConvexFunction<T>) -> Result<T> {
    let n = cb.resolution();
    let q = GaussLegendre::<T>::new(64);
    let cdfs = (0..n).map(|i| cb.stripe_cdf(i)).collect::<Result<Vec<_>>>()?;
    let width = T::one() / T::of_usize(n);
    let mut total = Compensated::new();
    for fi in &cdfs {
        for fk in &cdfs {
            for j in 0..n {
                let lo = T::of_usize(j) * width;
                let hi = lo + width;
                let diff = |v: T| f.value(fi.eval(v) - fk.eval(v));
                let d0 = fi.eval(lo) - fk.eval(lo);
                let d1 = fi.eval(hi) - fk.eval(hi);
                let piece = if d0 * d1 < T::zero() {
                    // Quadratic grading toward the kink at the crossing.
                    let cross = lo + width * d0 / (d0 - d1);
                    let two = T::lit(2.0);
                    let side =
                        |end: T| q.integrate_unit(|s| two * s * (end - cross) * diff(cross + (end - cross) * s * s));
                    side(hi) - side(lo)
                } else {
                    q.integrate(lo, hi, diff)
                };
                total.add(piece);
            }
        }
    }
    let raw = total.total() / T::of_usize(n * n);
    Ok(raw / alpha_phi(f)?)
}

/// Chatterjee's ξ in its variance form: 6 ∫∫ K(u,[0,v])² du dv − 2.
pub fn chatterjee_xi<T: Scalar>(cb: &CheckerboardCopula<T>) -> T {
    let n = cb.resolution();
    let nf = T::of_usize(n);
    let mut total = Compensated::new();
    for i in 0..n {
        let mut lo = T::zero();
        let mut acc = T::zero();
        for j in 0..n {
            acc = acc + cb.mass(i, j);
            let hi = if j + 1 == n { T::one() } else { acc * nf };
            // ∫ over one cell of the linear ramp lo → hi, squared.
            total.add((lo * lo + lo * hi + hi * hi) / T::lit(3.0));
            lo = hi;
        }
    }
    T::lit(6.0) * total.total() / (nf * nf) - T::lit(2.0)
}

/// ζ₁ = 3 ∫∫ |K(u,[0,v]) − v| du dv.
pub fn zeta1<T: Scalar>(cb: &CheckerboardCopula<T>) -> T {
    zeta1_scaled(cb, T::lit(ZETA1_CONSTANT))
}

/// ζ₁ with a caller-chosen multiplicative constant.
pub fn zeta1_scaled<T: Scalar>(cb: &CheckerboardCopula<T>, constant: T) -> T {
    let n = cb.resolution();
    let nf = T::of_usize(n);
    let l1 = ConvexFunction::<T>::abs_pow(T::one()).expect("p = 1 is valid");
    let table = cb.cumulative_table();
    let mut total = Compensated::new();
    for row in &table {
        for j in 0..n {
            let v0 = T::of_usize(j) / nf;
            let v1 = T::of_usize(j + 1) / nf;
            total.add(l1.segment_mean(row[j] - v0, row[j + 1] - v1));
        }
    }
    constant * total.total() / (nf * nf)
}

/// Plug-in Λ_ψ: observations are split into N stripes by x-rank and the
/// stripe means of y stand in for E(Y | X).
///
/// numerator = Σ_{i,k} w_i w_k ψ(m_i − m_k) with w_i the fraction of
/// observations in stripe i; normalizer = n⁻² Σ_{j,l} ψ(y_j − y_l). This is a
/// descriptive estimator; no consistency result backs it.
pub fn lambda_psi<T: Scalar>(
    sample: &BivariateSample<T>,
    g: &ConvexFunction<T>,
    n_res: usize,
) -> Result<MeasureResult<T>> {
    if n_res < 2 {
        return Err(Error::Config(format!("need at least 2 stripes, got {n_res}")));
    }
    let n = sample.len();
    let (xs, ys) = (sample.xs(), sample.ys());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));

    let mut sums = vec![Compensated::<T>::new(); n_res];
    let mut counts = vec![0usize; n_res];
    for (pos, &idx) in order.iter().enumerate() {
        // Rank r = pos + 1 lies in stripe ⌈rN/n⌉ (1-based).
        let stripe = ((pos + 1) * n_res - 1) / n;
        sums[stripe].add(ys[idx]);
        counts[stripe] += 1;
    }
    let nf = T::of_usize(n);
    let stripes: Vec<(T, T)> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| (T::of_usize(c) / nf, s.total() / T::of_usize(c)))
        .collect();

    let mut num = Compensated::new();
    for &(wi, mi) in &stripes {
        for &(wk, mk) in &stripes {
            num.add(wi * wk * g.value(mi - mk));
        }
    }
    let normalizer = psi_normalizer(ys, g);
    MeasureResult::new(num.total(), normalizer, n_res, g.descriptor())
}

/// n⁻² Σ_{j,l} ψ(y_j − y_l).
fn psi_normalizer<T: Scalar>(ys: &[T], g: &ConvexFunction<T>) -> T {
    let n = ys.len();
    let nf = T::of_usize(n);
    match g.kind() {
        PhiKind::AbsPow(p) if *p == T::lit(2.0) => {
            let mean = sum_compensated(ys.iter().copied()) / nf;
            T::lit(2.0) * sum_compensated(ys.iter().map(|&y| (y - mean) * (y - mean))) / nf
        }
        PhiKind::AbsPow(p) if *p == T::one() => ordered_abs_pair_sum(ys) / (nf * nf),
        _ => {
            let mut acc = Compensated::new();
            for &a in ys {
                for &b in ys {
                    acc.add(g.value(a - b));
                }
            }
            acc.total() / (nf * nf)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Resolution exponent: N = max(2, ⌊n^s⌋).
    pub s: f64,
    pub seed: u64,
    pub tie_policy: TiePolicy,
    pub path: EvalPath,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { s: 0.5, seed: 0, tie_policy: TiePolicy::SeededJitter, path: EvalPath::Auto }
    }
}

/// Checkerboard estimate Λ_φ(Cb_{N(n)}(E_n)).
pub fn estimate<T: Scalar>(
    sample: &BivariateSample<T>,
    f: &ConvexFunction<T>,
    s: f64,
    seed: u64,
) -> Result<MeasureResult<T>> {
    estimate_with(sample, f, EstimateOptions { s, seed, ..EstimateOptions::default() })
}

pub fn estimate_with<T: Scalar>(
    sample: &BivariateSample<T>,
    f: &ConvexFunction<T>,
    opts: EstimateOptions,
) -> Result<MeasureResult<T>> {
    if !(opts.s > 0.0 && opts.s <= 1.0) {
        return Err(Error::Config(format!("resolution exponent s = {} outside (0, 1]", opts.s)));
    }
    // Jitter would turn a one-point response into an arbitrary permutation.
    let ys = sample.ys();
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(Error::NormalizerNotPositive(0.0));
    }
    let pseudo = to_pseudo(sample, opts.tie_policy, opts.seed);
    let n_res = resolution(sample.len(), opts.s);
    let cb = ecbc(&pseudo, n_res)?;
    lambda_phi_with(&cb, f, opts.path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkerboard::aggregate;
    use crate::models::CopulaModel;

    fn study() -> Vec<ConvexFunction<f64>> {
        ConvexFunction::study_grid()
    }

    fn l(p: f64) -> ConvexFunction<f64> {
        ConvexFunction::abs_pow(p).unwrap()
    }

    #[test]
    fn alpha_examples() {
        for p in [1.0, 2.0, 3.0, 7.5] {
            assert!((alpha_phi(&l(p)).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        }
        let e = std::f64::consts::E;
        let a = alpha_phi(&ConvexFunction::exp_signed(1.0).unwrap()).unwrap();
        assert!((a - (e + 1.0 / e - 2.0) / 6.0).abs() < 1e-15);
        assert!((a - 0.181027).abs() < 1e-6);
        let linear = ConvexFunction::<f64>::custom("identity", |x| x);
        assert!(matches!(alpha_phi(&linear), Err(Error::NormalizerNotPositive(_))));
    }

    #[test]
    fn independence_gives_zero() {
        for n in [2, 5, 16] {
            let cb = CheckerboardCopula::<f64>::independence(n);
            for f in study() {
                let r = lambda_phi(&cb, &f).unwrap();
                assert!(r.value.abs() < 1e-12, "{}", f.descriptor());
                assert!(lambda_phi_oracle(&cb, &f, 200).unwrap().abs() < 1e-12);
            }
            assert!(chatterjee_xi(&cb).abs() < 1e-12);
            assert!(zeta1(&cb).abs() < 1e-12);
        }
    }

    #[test]
    fn comonotone_closed_forms_match_the_exact_oracle() {
        for n in [4usize, 16, 64] {
            let cb: CheckerboardCopula<f64> = aggregate(&CopulaModel::Comonotone, n).unwrap();
            let nf = n as f64;
            let l1 = lambda_phi(&cb, &l(1.0)).unwrap().value;
            let l2 = lambda_phi(&cb, &l(2.0)).unwrap().value;
            assert!((l1 - (1.0 - 1.0 / (nf * nf))).abs() < 1e-10);
            assert!((l2 - (1.0 - 1.0 / nf)).abs() < 1e-10);
            if n <= 16 {
                assert!((lambda_phi_oracle_exact(&cb, &l(1.0)).unwrap() - l1).abs() < 1e-12);
                assert!((lambda_phi_oracle_exact(&cb, &l(2.0)).unwrap() - l2).abs() < 1e-12);
            }
        }
        let cb: CheckerboardCopula<f64> = aggregate(&CopulaModel::Comonotone, 64).unwrap();
        assert!((chatterjee_xi(&cb) - 0.984375).abs() < 1e-10);
    }

    #[test]
    fn comonotone_abs_matches_hand_derivation_by_pairs() {
        // ∫|F_i − F_k| = |i − k|/N, so Σ_{i,k} = (N³ − N)/(3N).
        let n = 9usize;
        let cb: CheckerboardCopula<f64> = aggregate(&CopulaModel::Comonotone, n).unwrap();
        let r = lambda_phi(&cb, &l(1.0)).unwrap();
        let nf = n as f64;
        let want = (nf.powi(3) - nf) / (3.0 * nf) / nf.powi(2);
        assert!((r.numerator - want).abs() < 1e-14);
    }

    #[test]
    fn fast_paths_agree_with_generic() {
        for seed in 0..20u64 {
            let n = 2 + (seed as usize * 7) % 40;
            let cb = CheckerboardCopula::<f64>::random(n, 1 + seed as usize % 5, seed);
            for p in [1.0, 2.0] {
                let fast = lambda_phi_with(&cb, &l(p), EvalPath::Auto).unwrap().value;
                let slow = lambda_phi_with(&cb, &l(p), EvalPath::Generic).unwrap().value;
                assert!((fast - slow).abs() < 1e-10, "N={n} p={p}: {fast} vs {slow}");
            }
        }
        for model in [CopulaModel::MarshallOlkin { alpha: 0.2, beta: 0.7 }, CopulaModel::Fgm { theta: -0.7 }] {
            let cb: CheckerboardCopula<f64> = aggregate(&model, 96).unwrap();
            for p in [1.0, 2.0] {
                let fast = lambda_phi_with(&cb, &l(p), EvalPath::Auto).unwrap().value;
                let slow = lambda_phi_with(&cb, &l(p), EvalPath::Generic).unwrap().value;
                assert!((fast - slow).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn oracles_agree_on_random_checkerboards() {
        for seed in 0..6u64 {
            let cb = CheckerboardCopula::<f64>::random(8, 3, 100 + seed);
            for f in study() {
                let exact = lambda_phi(&cb, &f).unwrap().value;
                let mid = lambda_phi_oracle(&cb, &f, 800).unwrap();
                let gl = lambda_phi_oracle_exact(&cb, &f).unwrap();
                assert!((exact - mid).abs() < 2e-3, "{}", f.descriptor());
                assert!((exact - gl).abs() < 1e-10, "{}", f.descriptor());
            }
        }
    }

    #[test]
    fn fgm_and_frechet_anchors() {
        let cb: CheckerboardCopula<f64> = aggregate(&CopulaModel::Fgm { theta: 0.6 }, 256).unwrap();
        assert!((lambda_phi(&cb, &l(1.0)).unwrap().value - 0.2).abs() < 5e-3);
        assert!((zeta1(&cb) - 0.15).abs() < 5e-3);
        assert!((lambda_phi_oracle(&cb, &l(1.0), 400).unwrap() - 0.2).abs() < 5e-3);
        // The printed constant 1/3 would give a ninth of that.
        assert!((zeta1_scaled(&cb, 1.0 / 3.0) - 0.15 / 9.0).abs() < 1e-3);

        let cb: CheckerboardCopula<f64> = aggregate(&CopulaModel::Frechet { alpha: 0.5 }, 256).unwrap();
        assert!((zeta1(&cb) - 0.5).abs() < 5e-3);
    }

    #[test]
    fn chatterjee_identity() {
        for seed in 0..100u64 {
            let cb = CheckerboardCopula::<f64>::random(32, 1 + (seed as usize % 6), seed);
            let xi = chatterjee_xi(&cb);
            let l2 = lambda_phi_with(&cb, &l(2.0), EvalPath::Generic).unwrap().value;
            assert!((xi - l2).abs() < 1e-9);
        }
    }

    #[test]
    fn result_fields_are_consistent() {
        let cb = CheckerboardCopula::<f64>::random(6, 2, 5);
        let r = lambda_phi(&cb, &ConvexFunction::exp_abs(1.0).unwrap()).unwrap();
        assert_eq!(r.resolution, 6);
        assert_eq!(r.phi, "expabs:1");
        assert!((r.value - r.numerator / r.normalizer).abs() < 1e-12);
        let row = r.csv_row();
        assert!(row.starts_with("expabs:1,6,"));
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn nonadmissible_phi_is_an_error() {
        let cb = CheckerboardCopula::<f64>::independence(4);
        assert!(lambda_phi_oracle(&cb, &l(1.0), 99).is_err());
        let linear = ConvexFunction::<f64>::custom("identity", |x| x);
        assert!(matches!(lambda_phi(&cb, &linear), Err(Error::NormalizerNotPositive(_))));
    }

    #[test]
    fn custom_phi_matches_builtin() {
        let cb = CheckerboardCopula::<f64>::random(10, 4, 8);
        let builtin = lambda_phi(&cb, &ConvexFunction::exp_signed(1.0).unwrap()).unwrap().value;
        let custom = lambda_phi(&cb, &ConvexFunction::custom("e^x-1", |x: f64| x.exp_m1())).unwrap().value;
        assert!((builtin - custom).abs() < 1e-13);
    }

    #[test]
    fn parallel_generic_path_is_reproducible() {
        let cb = CheckerboardCopula::<f64>::random(48, 4, 21);
        let f = ConvexFunction::exp_signed(5.0).unwrap();
        let a = lambda_phi(&cb, &f).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| lambda_phi(&cb, &f).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn f32_measures() {
        let cb: CheckerboardCopula<f32> = aggregate(&CopulaModel::Comonotone, 8).unwrap();
        let r = lambda_phi(&cb, &ConvexFunction::<f32>::abs_pow(2.0).unwrap()).unwrap();
        assert!((r.value - (1.0 - 1.0 / 8.0)).abs() < 1e-5);
        assert!((chatterjee_xi(&cb) - 0.875).abs() < 1e-5);
    }

    #[test]
    fn lambda_psi_is_explained_variance_for_squares() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 37) % 200) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x / 20.0).sin() + 0.1 * (x * 7.0).cos()).collect();
        let s = BivariateSample::new(xs.clone(), ys.clone()).unwrap();
        let n_res = 10;
        let r = lambda_psi(&s, &l(2.0).for_psi(), n_res).unwrap();

        // Direct between-stripe / total variance.
        let mut idx: Vec<usize> = (0..200).collect();
        idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
        let mean = ys.iter().sum::<f64>() / 200.0;
        let total: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 200.0;
        let between: f64 = idx
            .chunks(20)
            .map(|c| {
                let m = c.iter().map(|&i| ys[i]).sum::<f64>() / 20.0;
                (m - mean).powi(2) / n_res as f64
            })
            .sum();
        assert!((r.value - between / total).abs() < 1e-12);
    }

    #[test]
    fn lambda_psi_generic_normalizer_matches_fast_paths() {
        let s = CopulaModel::Fgm { theta: 0.5 }.sample(300, 3).unwrap();
        for p in [1.0, 2.0] {
            let fast = lambda_psi(&s, &l(p).for_psi(), 7).unwrap();
            let custom = ConvexFunction::custom("pow", move |x: f64| x.abs().powf(p)).for_psi();
            let slow = lambda_psi(&s, &custom, 7).unwrap();
            assert!((fast.normalizer - slow.normalizer).abs() < 1e-13);
            assert!((fast.value - slow.value).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_psi_degenerate_response() {
        let s = BivariateSample::new(vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]).unwrap();
        assert!(matches!(lambda_psi(&s, &l(2.0).for_psi(), 2), Err(Error::NormalizerNotPositive(_))));
        assert!(lambda_psi(&s, &l(2.0).for_psi(), 1).is_err());
    }

    #[test]
    fn lambda_psi_uneven_stripes() {
        // n = 7, N = 3: stripe sizes 2, 2, 3 (ranks ⌈3r/7⌉).
        let xs: Vec<f64> = (1..=7).map(f64::from).collect();
        let ys = vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        let s = BivariateSample::new(xs, ys).unwrap();
        let r = lambda_psi(&s, &l(2.0).for_psi(), 3).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_comonotone_and_invariance() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 10_000) as f64 / 7.0).collect();
        let s = BivariateSample::new(xs.clone(), xs).unwrap();
        let r = estimate(&s, &l(1.0), 0.5, 1).unwrap();
        assert_eq!(r.resolution, 100);
        assert!(r.value >= 0.99);
        assert!((r.value - (1.0 - 1e-4)).abs() < 1e-10);

        let t = CopulaModel::Fgm { theta: 0.8 }.sample(500, 4).unwrap();
        let g = t.map(|x| x.ln(), |y| y * y * y + 2.0).unwrap();
        for f in study() {
            let a = estimate(&t, &f, 0.5, 9).unwrap();
            let b = estimate(&g, &f, 0.5, 9).unwrap();
            assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }

    #[test]
    fn estimate_rejects_constant_response() {
        let s = BivariateSample::new(vec![1.0, 2.0, 3.0, 4.0], vec![5.0; 4]).unwrap();
        for policy in [TiePolicy::SeededJitter, TiePolicy::MidRank] {
            let opts = EstimateOptions { tie_policy: policy, ..EstimateOptions::default() };
            let err = estimate_with(&s, &l(1.0), opts).unwrap_err();
            assert!(err.is_hypothesis_violation());
        }
    }

    #[test]
    fn estimate_rejects_bad_exponent() {
        let s = BivariateSample::new(vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 2.0]).unwrap();
        assert!(estimate(&s, &l(1.0), 0.0, 0).is_err());
        assert!(estimate(&s, &l(1.0), 1.5, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        fn builtin() -> impl Strategy<Value = ConvexFunction<f64>> {
            prop_oneof![
                (1.0f64..4.0).prop_map(|p| ConvexFunction::abs_pow(p).unwrap()),
                (-5.0f64..5.0)
                    .prop_filter("c != 0", |c| c.abs() > 1e-3)
                    .prop_map(|c| ConvexFunction::exp_signed(c).unwrap()),
                (-5.0f64..5.0)
                    .prop_filter("c != 0", |c| c.abs() > 1e-3)
                    .prop_map(|c| ConvexFunction::exp_abs(c).unwrap()),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn value_lies_in_unit_interval(n in 2usize..24, k in 1usize..6, seed: u64, f in builtin()) {
                let cb = CheckerboardCopula::<f64>::random(n, k, seed);
                let v = lambda_phi(&cb, &f).unwrap().value;
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "{v}");
            }

            #[test]
            fn p_monotonicity(n in 2usize..24, k in 1usize..6, seed: u64) {
                let cb = CheckerboardCopula::<f64>::random(n, k, seed);
                let v: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&p| lambda_phi(&cb, &l(p)).unwrap().value).collect();
                prop_assert!(v[0] >= v[1] - 1e-12 && v[1] >= v[2] - 1e-12);
            }

            #[test]
            fn stripe_relabeling_invariance(n in 2usize..20, k in 1usize..6, seed: u64, f in builtin()) {
                let cb = CheckerboardCopula::<f64>::random(n, k, seed);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
                let a = lambda_phi(&cb, &f).unwrap().value;
                let b = lambda_phi(&cb.permute_rows(&perm).unwrap(), &f).unwrap().value;
                prop_assert!((a - b).abs() < 1e-12);
            }

            #[test]
            fn v_reversal_for_even_phi(n in 2usize..20, k in 1usize..6, seed: u64, p in 1.0f64..4.0, c in 0.1f64..5.0) {
                let cb = CheckerboardCopula::<f64>::random(n, k, seed);
                let flipped = cb.reverse_columns();
                for f in [ConvexFunction::abs_pow(p).unwrap(), ConvexFunction::exp_abs(c).unwrap()] {
                    let a = lambda_phi(&cb, &f).unwrap().value;
                    let b = lambda_phi(&flipped, &f).unwrap().value;
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn zero_iff_identical_rows(n in 2usize..16, k in 1usize..4, seed: u64, mix in 0.0f64..1.0, f in builtin()) {
                // Blend a random checkerboard with Π; rows coincide only at mix = 0.
                let r = CheckerboardCopula::<f64>::random(n, k, seed);
                let pi = CheckerboardCopula::<f64>::independence(n);
                let blended: Vec<f64> = r.masses().iter().zip(pi.masses()).map(|(a, b)| mix * a + (1.0 - mix) * b).collect();
                let cb = CheckerboardCopula::new(n, blended).unwrap();
                let v = lambda_phi(&cb, &f).unwrap().value;
                if cb.rows_identical(1e-12) {
                    prop_assert!(v.abs() < 1e-12);
                } else {
                    prop_assert!(v > 0.0);
                }
            }
        }
    }

    #[test]
    fn frechet_family_is_monotone() {
        for f in study() {
            let mut prev = -1.0;
            for k in 0..=10 {
                let cb: CheckerboardCopula<f64> =
                    aggregate(&CopulaModel::Frechet { alpha: k as f64 / 10.0 }, 128).unwrap();
                let v = lambda_phi(&cb, &f).unwrap().value;
                assert!(v >= prev - 1e-12, "{} at alpha={}", f.descriptor(), k as f64 / 10.0);
                prev = v;
            }
        }
    }
}
