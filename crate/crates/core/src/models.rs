//! Analytic copula families with exact samplers and reference values.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkerboard::aggregate;
use crate::error::{Error, Result};
use crate::ingest::BivariateSample;
use crate::measures::lambda_phi;
use crate::phi::{ConvexFunction, PhiKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CopulaModel {
    /// Π(u, v) = uv.
    Independence,
    /// M(u, v) = min(u, v).
    Comonotone,
    /// W(u, v) = max(u + v − 1, 0).
    Countermonotone,
    /// u^{1−α} v if u^α ≥ v^β, else u v^{1−β}; α, β ∈ [0, 1].
    MarshallOlkin { alpha: f64, beta: f64 },
    /// uv + θ u(1−u) v(1−v); θ ∈ [−1, 1].
    Fgm { theta: f64 },
    /// α M + (1 − α) Π; α ∈ [0, 1].
    Frechet { alpha: f64 },
}

/// Copulas of the simulation study: MO(1,0), MO(1,1), MO(0.2,0.7), MO(0.3,1).
pub const STUDY_MODELS: [CopulaModel; 4] = [
    CopulaModel::MarshallOlkin { alpha: 1.0, beta: 0.0 },
    CopulaModel::MarshallOlkin { alpha: 1.0, beta: 1.0 },
    CopulaModel::MarshallOlkin { alpha: 0.2, beta: 0.7 },
    CopulaModel::MarshallOlkin { alpha: 0.3, beta: 1.0 },
];

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl CopulaModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CopulaModel::MarshallOlkin { alpha, beta } => in_unit(alpha) && in_unit(beta),
            CopulaModel::Fgm { theta } => (-1.0..=1.0).contains(&theta),
            CopulaModel::Frechet { alpha } => in_unit(alpha),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Model { model: self.descriptor(), message: "parameter out of range".into() })
        }
    }

    pub fn descriptor(&self) -> String {
        match *self {
            CopulaModel::Independence => "indep".into(),
            CopulaModel::Comonotone => "como".into(),
            CopulaModel::Countermonotone => "counter".into(),
            CopulaModel::MarshallOlkin { alpha, beta } => format!("mo:{alpha},{beta}"),
            CopulaModel::Fgm { theta } => format!("fgm:{theta}"),
            CopulaModel::Frechet { alpha } => format!("frechet:{alpha}"),
        }
    }

    pub fn cdf<T: Scalar>(&self, u: T, v: T) -> T {
        let one = T::one();
        match *self {
            CopulaModel::Independence => u * v,
            CopulaModel::Comonotone => u.min(v),
            CopulaModel::Countermonotone => (u + v - one).max(T::zero()),
            CopulaModel::MarshallOlkin { alpha, beta } => {
                let (a, b) = (T::lit(alpha), T::lit(beta));
                if u.powf(a) >= v.powf(b) {
                    u.powf(one - a) * v
                } else {
                    u * v.powf(one - b)
                }
            }
            CopulaModel::Fgm { theta } => u * v + T::lit(theta) * u * (one - u) * v * (one - v),
            CopulaModel::Frechet { alpha } => {
                let a = T::lit(alpha);
                a * u.min(v) + (one - a) * u * v
            }
        }
    }

    /// Draws n pairs; deterministic given `seed`.
    pub fn sample_pairs(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<BivariateSample<f64>> {
        BivariateSample::from_pairs(self.sample_pairs(n, seed))
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let mut unif = || -> f64 { rng.sample(Open01) };
        match *self {
            CopulaModel::Independence => (unif(), unif()),
            CopulaModel::Comonotone => {
                let u = unif();
                (u, u)
            }
            CopulaModel::Countermonotone => {
                let u = unif();
                (u, 1.0 - u)
            }
            CopulaModel::MarshallOlkin { alpha, beta } => {
                let (r, s, t) = (unif(), unif(), unif());
                (mo_coordinate(r, t, alpha), mo_coordinate(s, t, beta))
            }
            CopulaModel::Fgm { theta } => {
                let (u, w) = (unif(), unif());
                // Invert ∂₁C(u, ·): v(1 + a) − a v² = w with a = θ(1 − 2u).
                let a = theta * (1.0 - 2.0 * u);
                let b = 1.0 + a;
                let v = 2.0 * w / (b + (b * b - 4.0 * a * w).max(0.0).sqrt());
                (u, v.clamp(0.0, 1.0))
            }
            CopulaModel::Frechet { alpha } => {
                let (u, mix, w) = (unif(), unif(), unif());
                if mix < alpha {
                    (u, u)
                } else {
                    (u, w)
                }
            }
        }
    }

    /// Population value of Λ_φ where a closed form is known.
    ///
    /// Π and its MO special cases give 0; M, W and MO(1,1) give 1; Fréchet(α)
    /// gives (φ(α) + φ(−α))/(φ(1) + φ(−1)) for every φ; FGM(θ) gives |θ|/3 for
    /// |x| and θ²/15 for x².
    pub fn closed_form_lambda(&self, f: &ConvexFunction<f64>) -> Option<f64> {
        match *self {
            CopulaModel::Independence => Some(0.0),
            CopulaModel::Comonotone | CopulaModel::Countermonotone => Some(1.0),
            CopulaModel::MarshallOlkin { alpha, beta } if alpha == 0.0 || beta == 0.0 => Some(0.0),
            CopulaModel::MarshallOlkin { alpha, beta } if alpha == 1.0 && beta == 1.0 => Some(1.0),
            CopulaModel::MarshallOlkin { .. } => None,
            CopulaModel::Frechet { alpha } => Some((f.value(alpha) + f.value(-alpha)) / (f.value(1.0) + f.value(-1.0))),
            CopulaModel::Fgm { theta } => match f.kind() {
                PhiKind::AbsPow(p) if *p == 1.0 => Some(theta.abs() / 3.0),
                PhiKind::AbsPow(p) if *p == 2.0 => Some(theta * theta / 15.0),
                _ => None,
            },
        }
    }

    /// Population value of ζ₁ (constant 3) where a closed form is known.
    pub fn closed_form_zeta1(&self) -> Option<f64> {
        match *self {
            CopulaModel::Independence => Some(0.0),
            CopulaModel::Fgm { theta } => Some(theta.abs() / 4.0),
            CopulaModel::Frechet { alpha } => Some(alpha),
            CopulaModel::Comonotone => Some(1.0),
            _ => None,
        }
    }
}

/// One coordinate of the three-uniform MO construction max(r^{1/(1−a)}, t^{1/a}),
/// with the exponent limits taken exactly at a ∈ {0, 1}.
fn mo_coordinate(r: f64, t: f64, a: f64) -> f64 {
    if a <= 0.0 {
        r
    } else if a >= 1.0 {
        t
    } else {
        r.powf(1.0 / (1.0 - a)).max(t.powf(1.0 / a))
    }
}

impl fmt::Display for CopulaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

impl FromStr for CopulaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Descriptor(s.to_string());
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
        let model = match s.split_once(':') {
            None => match s {
                "indep" => CopulaModel::Independence,
                "como" => CopulaModel::Comonotone,
                "counter" => CopulaModel::Countermonotone,
                _ => return Err(bad()),
            },
            Some(("mo", args)) => {
                let (a, b) = args.split_once(',').ok_or_else(bad)?;
                CopulaModel::MarshallOlkin { alpha: num(a)?, beta: num(b)? }
            }
            Some(("fgm", t)) => CopulaModel::Fgm { theta: num(t)? },
            Some(("frechet", a)) => CopulaModel::Frechet { alpha: num(a)? },
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Λ_φ of an analytic model from a fine checkerboard, with a two-resolution
/// error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueValue {
    pub value: f64,
    pub resolution: usize,
    /// |Λ(N) − Λ(N/2)|.
    pub error_bound: f64,
    /// False when the error estimate exceeds [`CONVERGENCE_LIMIT`].
    pub converged: bool,
    pub closed_form: Option<f64>,
}

pub const CONVERGENCE_LIMIT: f64 = 1e-2;

pub fn true_lambda(model: &CopulaModel, f: &ConvexFunction<f64>, n_fine: usize) -> Result<TrueValue> {
    model.validate()?;
    if n_fine < 128 || !n_fine.is_power_of_two() {
        return Err(Error::Config(format!("fine resolution must be a power of two >= 128, got {n_fine}")));
    }
    let fine = lambda_phi(&aggregate::<f64>(model, n_fine)?, f)?.value;
    let coarse = lambda_phi(&aggregate::<f64>(model, n_fine / 2)?, f)?.value;
    let error_bound = (fine - coarse).abs();
    Ok(TrueValue {
        value: fine,
        resolution: n_fine,
        error_bound,
        converged: error_bound <= CONVERGENCE_LIMIT,
        closed_form: model.closed_form_lambda(f),
    })
}
