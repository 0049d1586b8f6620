//! Checkerboard copulas: N×N cell masses with uniform margins.
//!
//! Within a cell the mass is spread uniformly, so for u in stripe `i` the
//! conditional distribution function `K(u, [0, v])` does not depend on u and
//! is the piecewise-linear ramp through `F_i(j/N) = N · Σ_{l<j} mass[i][l]`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::PseudoSample;
use crate::models::CopulaModel;
use crate::scalar::{sum_compensated, Scalar};

/// Smallest resolution produced by [`resolution`].
pub const MIN_RESOLUTION: usize = 2;

const TOTAL_MASS_TOL: f64 = 1e-12;
const MARGIN_TOL: f64 = 1e-9;
/// Rounding noise tolerated (and clamped to zero) in inclusion–exclusion masses.
const NEGATIVE_MASS_TOL: f64 = 1e-12;

/// Checkerboard resolution N(n) = max(2, ⌊n^s⌋).
pub fn resolution(n: usize, s: f64) -> usize {
    assert!(n >= 2, "resolution needs n >= 2");
    assert!(s > 0.0 && s <= 1.0, "resolution exponent must lie in (0, 1]");
    let raw = (n as f64).powf(s);
    // Guard against powf landing a hair below an exact integer.
    let floor = (raw * (1.0 + 1e-12)).floor() as usize;
    floor.max(MIN_RESOLUTION)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckerboardCopula<T> {
    n: usize,
    /// Row-major: `mass[i * n + j]` is the mass of stripe i (u) and band j (v).
    mass: Vec<T>,
}

fn tol<T: Scalar>(base: f64) -> T {
    T::lit(base).max(T::epsilon() * T::lit(64.0))
}

impl<T: Scalar> CheckerboardCopula<T> {
    /// Validates nonnegativity, total mass and uniform margins.
    pub fn new(n: usize, mass: Vec<T>) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidCheckerboard("resolution must be positive".into()));
        }
        if mass.len() != n * n {
            return Err(Error::InvalidCheckerboard(format!("expected {} masses, got {}", n * n, mass.len())));
        }
        if let Some(k) = mass.iter().position(|m| !(*m >= T::zero()) || !m.is_finite()) {
            return Err(Error::InvalidCheckerboard(format!(
                "cell ({}, {}) has invalid mass {}",
                k / n,
                k % n,
                mass[k]
            )));
        }
        let cb = Self { n, mass };
        let total = sum_compensated(cb.mass.iter().copied());
        if (total - T::one()).abs() > tol(TOTAL_MASS_TOL) {
            return Err(Error::InvalidCheckerboard(format!("total mass {total} differs from 1")));
        }
        let target = T::one() / T::of_usize(n);
        for i in 0..n {
            let row = sum_compensated(cb.row(i).iter().copied());
            if (row - target).abs() > tol(MARGIN_TOL) {
                return Err(Error::InvalidCheckerboard(format!("row {i} sums to {row}, expected 1/{n}")));
            }
            let col = sum_compensated((0..n).map(|r| cb.mass[r * n + i]));
            if (col - target).abs() > tol(MARGIN_TOL) {
                return Err(Error::InvalidCheckerboard(format!("column {i} sums to {col}, expected 1/{n}")));
            }
        }
        Ok(cb)
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidCheckerboard("mass matrix is not square".into()));
        }
        Self::new(n, rows.into_iter().flatten().collect())
    }

    /// Π: every cell holds 1/N².
    pub fn independence(n: usize) -> Self {
        let m = T::one() / T::of_usize(n * n);
        Self { n, mass: vec![m; n * n] }
    }

    /// Number of stripes per axis.
    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn mass(&self, i: usize, j: usize) -> T {
        self.mass[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.mass[i * self.n..(i + 1) * self.n]
    }

    pub fn masses(&self) -> &[T] {
        &self.mass
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.mass.chunks(self.n).map(<[T]>::to_vec).collect()
    }

    /// Conditional distribution function of stripe `i` (zero-based).
    pub fn stripe_cdf(&self, i: usize) -> Result<StripeCdf<T>> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange { index: i, resolution: self.n });
        }
        Ok(StripeCdf { index: i, values: self.cumulative_row(i) })
    }

    /// `F_i(j/N)` for j = 0..=N.
    pub(crate) fn cumulative_row(&self, i: usize) -> Vec<T> {
        let scale = T::of_usize(self.n);
        let mut out = Vec::with_capacity(self.n + 1);
        out.push(T::zero());
        let mut acc = T::zero();
        for &m in self.row(i) {
            acc = acc + m;
            out.push((acc * scale).min(T::one()));
        }
        // Uniform margins make the last value 1 up to rounding; pin it.
        out[self.n] = T::one();
        out
    }

    /// All stripe CDFs as an N × (N + 1) table.
    pub fn cumulative_table(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.cumulative_row(i)).collect()
    }

    /// Sums 2×2 blocks into a checkerboard of half the resolution.
    pub fn coarsen(&self) -> Option<Self> {
        if !self.n.is_multiple_of(2) || self.n < 2 {
            return None;
        }
        let h = self.n / 2;
        let mut mass = vec![T::zero(); h * h];
        for i in 0..self.n {
            for j in 0..self.n {
                let k = (i / 2) * h + j / 2;
                mass[k] = mass[k] + self.mass(i, j);
            }
        }
        Some(Self { n: h, mass })
    }

    /// Reorders the stripes: row `k` of the result is row `perm[k]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n];
        if perm.len() != self.n || perm.iter().any(|&p| p >= self.n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidCheckerboard("not a permutation of the stripes".into()));
        }
        let mass = perm.iter().flat_map(|&p| self.row(p).iter().copied()).collect();
        Ok(Self { n: self.n, mass })
    }

    /// Mass of the copula of (1 − U, V).
    pub fn reverse_rows(&self) -> Self {
        let perm: Vec<usize> = (0..self.n).rev().collect();
        self.permute_rows(&perm).expect("reversal is a permutation")
    }

    /// Mass of the copula of (U, 1 − V).
    pub fn reverse_columns(&self) -> Self {
        let mass = self.mass.chunks(self.n).flat_map(|r| r.iter().rev().copied()).collect();
        Self { n: self.n, mass }
    }

    /// True when every stripe carries the same conditional distribution.
    pub fn rows_identical(&self, tolerance: T) -> bool {
        let first = self.row(0);
        (1..self.n).all(|i| self.row(i).iter().zip(first).all(|(a, b)| (*a - *b).abs() <= tolerance))
    }

    /// Plain-text export: "N" on the first line, then N rows of N masses.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.n * self.n * 25 + 8);
        writeln!(s, "{}", self.n).unwrap();
        for row in self.mass.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|m| format!("{m:.16e}")).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidCheckerboard("empty input".into()))?;
        let n: usize =
            header.parse().map_err(|_| Error::Parse { row: 1, message: format!("`{header}` is not a resolution") })?;
        let mut mass = Vec::with_capacity(n * n);
        for (k, line) in lines.enumerate() {
            let row: Vec<T> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map(T::lit)
                        .map_err(|_| Error::Parse { row: k + 2, message: format!("`{tok}` is not a number") })
                })
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(Error::Parse { row: k + 2, message: format!("expected {n} masses, got {}", row.len()) });
            }
            mass.extend(row);
        }
        Self::new(n, mass)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_text(&text)
    }

    /// Random doubly-stochastic checkerboard: a convex mixture of `components`
    /// scaled permutation matrices, so margins are uniform by construction.
    pub fn random(n: usize, components: usize, seed: u64) -> Self {
        assert!(n >= 1 && components >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = (0..components).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = weights.iter().sum();
        let mut mass = vec![0.0f64; n * n];
        let mut perm: Vec<usize> = (0..n).collect();
        for w in weights {
            perm.shuffle(&mut rng);
            for (i, &j) in perm.iter().enumerate() {
                mass[i * n + j] += w / total / n as f64;
            }
        }
        Self { n, mass: mass.into_iter().map(T::lit).collect() }
    }
}

/// Conditional distribution function of one stripe, piecewise linear on the
/// grid 0, 1/N, …, 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StripeCdf<T> {
    index: usize,
    values: Vec<T>,
}

impl<T: Scalar> StripeCdf<T> {
    pub fn index(&self) -> usize {
        self.index
    }

    /// `F_i(j/N)` for j = 0..=N.
    pub fn knots(&self) -> &[T] {
        &self.values
    }

    pub fn eval(&self, v: T) -> T {
        let n = self.values.len() - 1;
        if v <= T::zero() {
            return T::zero();
        }
        if v >= T::one() {
            return T::one();
        }
        let pos = v * T::of_usize(n);
        let j = pos.floor().to_usize().unwrap_or(0).min(n - 1);
        let t = pos - T::of_usize(j);
        self.values[j] + t * (self.values[j + 1] - self.values[j])
    }
}

/// Empirical checkerboard copula Cb_N(E_n).
///
/// Each pseudo-observation spreads its mass 1/n uniformly over its rank cell
/// ((r−1)/n, r/n] × ((s−1)/n, s/n] (the whole tied block under mid-ranks),
/// which is the bilinear extension of the empirical subcopula. Cell overlaps
/// are computed in integer units of 1/(nN), so cells split exactly when N ∤ n.
pub fn ecbc<T: Scalar>(pseudo: &PseudoSample<T>, n_res: usize) -> Result<CheckerboardCopula<T>> {
    let n = pseudo.len();
    if n == 0 {
        return Err(Error::InvalidSample("empty pseudo-sample".into()));
    }
    if n_res < 1 {
        return Err(Error::InvalidCheckerboard("resolution must be positive".into()));
    }
    let mut mass = vec![T::zero(); n_res * n_res];
    let inv_n = T::one() / T::of_usize(n);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (sx, sy) in pseudo.spans() {
        overlaps(sx.first, sx.last, n, n_res, &mut xs);
        overlaps(sy.first, sy.last, n, n_res, &mut ys);
        for &(i, fx) in &xs {
            for &(j, fy) in &ys {
                let cell = &mut mass[i * n_res + j];
                *cell = *cell + inv_n * fx * fy;
            }
        }
    }
    CheckerboardCopula::new(n_res, mass)
}

/// Fractions of the rank interval ((first−1)/n, last/n] falling in each stripe.
fn overlaps<T: Scalar>(first: usize, last: usize, n: usize, n_res: usize, out: &mut Vec<(usize, T)>) {
    out.clear();
    // Units of 1/(n · n_res): interval [lo, hi), stripe k is [k·n, (k+1)·n).
    let lo = (first - 1) * n_res;
    let hi = last * n_res;
    let len = T::of_usize(hi - lo);
    let mut k = lo / n;
    while k < n_res && k * n < hi {
        let a = lo.max(k * n);
        let b = hi.min((k + 1) * n);
        if b > a {
            out.push((k, T::of_usize(b - a) / len));
        }
        k += 1;
    }
}

/// Checkerboard approximation Cb_N(C) of a copula given by its CDF.
pub fn aggregate_cdf<T, F>(cdf: F, n: usize) -> Result<CheckerboardCopula<T>>
where
    T: Scalar,
    F: Fn(T, T) -> T + Sync,
{
    if n < 1 {
        return Err(Error::InvalidCheckerboard("resolution must be positive".into()));
    }
    let grid: Vec<T> = (0..=n).map(|k| T::of_usize(k) / T::of_usize(n)).collect();
    let slack = T::lit(NEGATIVE_MASS_TOL);
    let values: Vec<Vec<T>> = grid
        .par_iter()
        .map(|&u| {
            grid.iter()
                .map(|&v| {
                    let c = cdf(u, v);
                    let lower = (u + v - T::one()).max(T::zero());
                    let upper = u.min(v);
                    if !(c >= lower - slack && c <= upper + slack) {
                        return Err(Error::Model {
                            model: "aggregate".into(),
                            message: format!("C({u}, {v}) = {c} violates the Fréchet–Hoeffding bounds"),
                        });
                    }
                    Ok(c)
                })
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    let mut mass = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let m = values[i + 1][j + 1] - values[i][j + 1] - values[i + 1][j] + values[i][j];
            if m < -slack {
                return Err(Error::Model {
                    model: "aggregate".into(),
                    message: format!("negative cell mass {m} at ({i}, {j})"),
                });
            }
            mass.push(m.max(T::zero()));
        }
    }
    CheckerboardCopula::new(n, mass)
}

/// Checkerboard approximation Cb_N(A) of an analytic model.
pub fn aggregate<T: Scalar>(model: &CopulaModel, n: usize) -> Result<CheckerboardCopula<T>> {
    aggregate_cdf(|u, v| model.cdf(u, v), n).map_err(|e| match e {
        Error::Model { message, .. } => Error::Model { model: model.descriptor(), message },
        other => other,
    })
}
