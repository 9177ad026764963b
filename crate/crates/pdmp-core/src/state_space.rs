//! Phase-space geometry for velocity-jump processes: velocity spaces with
//! their canonical refreshment distributions, potentials with gradients, and
//! the free-transport flow.

use rand::Rng;
use rand_distr::StandardNormal;

/// Tolerance below which a bounce direction is treated as zero and the
/// reflection degenerates to the identity.
pub const ZERO_GRADIENT_TOL: f64 = 1e-14;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// The velocity component of the state space, with its canonical
/// refreshment distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocitySpace {
    /// Unit sphere in `R^d`; refreshment is uniform on the sphere.
    UnitSphere(usize),
    /// All of `R^d`; refreshment is a standard Gaussian.
    StdGaussian(usize),
    /// The corners `{-1, 1}^d`; refreshment is uniform over corners.
    SignedHypercube(usize),
    /// Closed ball of the given radius; refreshment is uniform in the ball.
    Ball(usize, f64),
}

impl VelocitySpace {
    pub fn dim(&self) -> usize {
        match *self {
            VelocitySpace::UnitSphere(d)
            | VelocitySpace::StdGaussian(d)
            | VelocitySpace::SignedHypercube(d)
            | VelocitySpace::Ball(d, _) => d,
        }
    }

    /// Membership predicate, with a 1e-12 tolerance on norm constraints.
    pub fn contains(&self, y: &[f64]) -> bool {
        if y.len() != self.dim() {
            return false;
        }
        match *self {
            VelocitySpace::UnitSphere(_) => (norm(y) - 1.0).abs() <= 1e-12,
            VelocitySpace::StdGaussian(_) => y.iter().all(|v| v.is_finite()),
            VelocitySpace::SignedHypercube(_) => y.iter().all(|v| *v == 1.0 || *v == -1.0),
            VelocitySpace::Ball(_, r) => norm(y) <= r + 1e-12,
        }
    }

    /// Draw from the canonical refreshment distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match *self {
            VelocitySpace::UnitSphere(d) => {
                loop {
                    let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let n = norm(&y);
                    if n > 1e-12 {
                        return y.iter().map(|v| v / n).collect();
                    }
                }
            }
            VelocitySpace::StdGaussian(d) => (0..d).map(|_| rng.sample(StandardNormal)).collect(),
            VelocitySpace::SignedHypercube(d) => (0..d)
                .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                .collect(),
            VelocitySpace::Ball(d, r) => loop {
                let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&y);
                if n > 1e-12 {
                    let radius = r * rng.gen::<f64>().powf(1.0 / d as f64);
                    return y.iter().map(|v| v * radius / n).collect();
                }
            },
        }
    }

    /// Mass the refreshment distribution puts on the single point `y`.
    /// Zero for the continuous spaces; `2^-d` on the hypercube corners.
    pub fn atom_mass(&self, y: &[f64]) -> f64 {
        match *self {
            VelocitySpace::SignedHypercube(d) => {
                if self.contains(y) {
                    0.5f64.powi(d as i32)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Whether the refreshment distribution has atoms at all.
    pub fn has_atoms(&self) -> bool {
        matches!(self, VelocitySpace::SignedHypercube(_))
    }
}

/// A point (x, y) of the phase space `R^d x V`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "position and velocity dimensions differ");
        PhaseState { x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Max-norm distance between two states.
    pub fn distance(&self, other: &PhaseState) -> f64 {
        let dx = self
            .x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dy = self
            .y
            .iter()
            .zip(&other.y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        dx.max(dy)
    }

    pub fn approx_eq(&self, other: &PhaseState, tol: f64) -> bool {
        self.distance(other) < tol
    }
}

/// Potential energy U with gradient and (optionally) Hessian action.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// U(x) = ||x||^2 / 2.
    GaussianIso { d: usize },
    /// U(x) = <x, A x> / 2 for a symmetric positive definite matrix A,
    /// stored row-major.
    GaussianAniso { d: usize, a: Vec<f64> },
    /// Smooth 1-d double well U(x) = (x^2 - 1)^2.
    DoubleWell1d,
}

impl Potential {
    pub fn dim(&self) -> usize {
        match *self {
            Potential::GaussianIso { d } | Potential::GaussianAniso { d, .. } => d,
            Potential::DoubleWell1d => 1,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::GaussianIso { .. } => 0.5 * dot(x, x),
            Potential::GaussianAniso { .. } => {
                let ax = self.matrix_apply(x).unwrap();
                0.5 * dot(x, &ax)
            }
            Potential::DoubleWell1d => {
                let s = x[0] * x[0] - 1.0;
                s * s
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Potential::GaussianIso { .. } => x.to_vec(),
            Potential::GaussianAniso { .. } => self.matrix_apply(x).unwrap(),
            Potential::DoubleWell1d => vec![4.0 * x[0] * (x[0] * x[0] - 1.0)],
        }
    }

    /// Hessian-vector product, where available in closed form.
    pub fn hessian_action(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        match self {
            Potential::GaussianIso { .. } => Some(v.to_vec()),
            Potential::GaussianAniso { .. } => Some(self.matrix_apply(v).unwrap()),
            Potential::DoubleWell1d => Some(vec![(12.0 * x[0] * x[0] - 4.0) * v[0]]),
        }
    }

    /// For Gaussian potentials, the action v -> A v of the precision matrix.
    /// `None` otherwise. The affine event-time inversion relies on this:
    /// along free transport the bounce rate is (<y, Ax> + <y, Ay> t)_+.
    pub fn matrix_apply(&self, v: &[f64]) -> Option<Vec<f64>> {
        match self {
            Potential::GaussianIso { .. } => Some(v.to_vec()),
            Potential::GaussianAniso { d, a } => {
                let d = *d;
                let mut out = vec![0.0; d];
                for i in 0..d {
                    out[i] = dot(&a[i * d..(i + 1) * d], v);
                }
                Some(out)
            }
            Potential::DoubleWell1d => None,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(
            self,
            Potential::GaussianIso { .. } | Potential::GaussianAniso { .. }
        )
    }
}

/// Deterministic flow between jumps. Only free transport ships:
/// (x, y) -> (x + t y, y).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    FreeTransport,
}

impl Flow {
    pub fn advance(&self, state: &PhaseState, h: f64) -> PhaseState {
        debug_assert!(h >= 0.0);
        match self {
            Flow::FreeTransport => {
                if h == 0.0 {
                    return state.clone();
                }
                let x = state
                    .x
                    .iter()
                    .zip(&state.y)
                    .map(|(xi, yi)| xi + h * yi)
                    .collect();
                PhaseState {
                    x,
                    y: state.y.clone(),
                }
            }
        }
    }

    /// In-place variant for the hot path.
    pub fn advance_in_place(&self, state: &mut PhaseState, h: f64) {
        match self {
            Flow::FreeTransport => {
                for (xi, yi) in state.x.iter_mut().zip(&state.y) {
                    *xi += h * yi;
                }
            }
        }
    }
}

/// Free-transport flow applied to a single state; total function.
pub fn free_transport_advance(state: &PhaseState, h: f64) -> PhaseState {
    Flow::FreeTransport.advance(state, h)
}

/// Orthogonal reflection of the velocity with respect to the direction `g`
/// (typically the potential gradient). Identity when `g` vanishes.
pub fn reflect(state: &PhaseState, g: &[f64]) -> PhaseState {
    let gg = dot(g, g);
    if gg.sqrt() < ZERO_GRADIENT_TOL {
        return state.clone();
    }
    let gy = dot(g, &state.y);
    let scale = 2.0 * gy / gg;
    let y = state
        .y
        .iter()
        .zip(g)
        .map(|(yi, gi)| yi - scale * gi)
        .collect();
    PhaseState {
        x: state.x.clone(),
        y,
    }
}

/// Draw from the refreshment distribution of the space.
pub fn refresh_sample<R: Rng + ?Sized>(space: &VelocitySpace, rng: &mut R) -> Vec<f64> {
    space.sample(rng)
}
