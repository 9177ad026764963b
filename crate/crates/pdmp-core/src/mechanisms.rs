//! Jump mechanisms (rate, kernel) as first-class values, and the algebra
//! over them: merging a list into its total or minimal mechanism, thinning
//! against a constant bound, adding phantom jumps, truncating rates, and the
//! smoothed bounce rate.

use std::sync::Arc;

use rand::Rng;

use crate::error::{PdmpError, Result};
use crate::state_space::{dot, PhaseState, Potential, VelocitySpace};

/// Nonnegative function of the phase state: a jump rate or a mixture weight.
pub type RateFn = Arc<dyn Fn(&PhaseState) -> f64 + Send + Sync>;

/// State-to-state map used by deterministic kernel components.
pub type MapFn = Arc<dyn Fn(&PhaseState) -> PhaseState + Send + Sync>;

/// Scalar coefficient function for the affine event-time capability.
pub type AffineFn = Arc<dyn Fn(&PhaseState) -> f64 + Send + Sync>;

/// Tolerance for "the kernel returned exactly the incoming state".
pub const STAYING_TOL: f64 = 1e-12;

pub fn constant_rate(c: f64) -> RateFn {
    assert!(c >= 0.0, "rates are nonnegative");
    Arc::new(move |_| c)
}

pub fn constant_weight(w: f64) -> RateFn {
    assert!(w >= 0.0, "weights are nonnegative");
    Arc::new(move |_| w)
}

/// One branch of a mixture kernel.
#[derive(Clone)]
pub enum KernelAction {
    /// Apply a deterministic map. The label identifies the map for kernel
    /// alignment in couplings (closures cannot be compared).
    DeterministicMap { label: String, map: MapFn },
    /// Redraw the velocity from the canonical distribution of the space.
    Refreshment(VelocitySpace),
    /// Redraw the velocity conditioned on actually changing it. Produced by
    /// `minimal_mechanism` for spaces whose refreshment has atoms.
    MovingRefreshment(VelocitySpace),
    /// Keep the state (a phantom branch).
    Identity,
}

impl KernelAction {
    pub fn apply<R: Rng + ?Sized>(&self, s: &PhaseState, rng: &mut R) -> PhaseState {
        match self {
            KernelAction::DeterministicMap { map, .. } => map(s),
            KernelAction::Refreshment(space) => PhaseState {
                x: s.x.clone(),
                y: space.sample(rng),
            },
            KernelAction::MovingRefreshment(space) => loop {
                let y = space.sample(rng);
                if y.iter().zip(&s.y).any(|(a, b)| (a - b).abs() >= STAYING_TOL) {
                    return PhaseState { x: s.x.clone(), y };
                }
            },
            KernelAction::Identity => s.clone(),
        }
    }

    /// Probability that this branch returns exactly the incoming state.
    pub fn staying_prob(&self, s: &PhaseState) -> f64 {
        match self {
            KernelAction::DeterministicMap { map, .. } => {
                if map(s).distance(s) < STAYING_TOL {
                    1.0
                } else {
                    0.0
                }
            }
            KernelAction::Refreshment(space) => space.atom_mass(&s.y),
            KernelAction::MovingRefreshment(_) => 0.0,
            KernelAction::Identity => 1.0,
        }
    }

    /// Alignment key for maximal couplings: actions with equal keys can share
    /// a draw on the common mixture mass.
    pub fn align_key(&self) -> String {
        match self {
            KernelAction::DeterministicMap { label, .. } => format!("map:{label}"),
            KernelAction::Refreshment(space) => format!("refresh:{space:?}"),
            KernelAction::MovingRefreshment(space) => format!("moving-refresh:{space:?}"),
            KernelAction::Identity => "identity".to_string(),
        }
    }
}

/// A Markov kernel given as a finite mixture of deterministic maps,
/// refreshments, and the identity. Weights are arbitrary nonnegative
/// functions of the state, normalized at sample time; zero total weight
/// falls back to keeping the state.
#[derive(Clone)]
pub struct KernelSpec {
    pub components: Vec<(RateFn, KernelAction)>,
    /// Present on kernels built by `thin_to_constant`: (original rate,
    /// bound), checked at every sample so an invalid user bound surfaces as
    /// an error instead of a silently wrong distribution.
    bound_check: Option<(RateFn, f64)>,
}

impl KernelSpec {
    pub fn new(components: Vec<(RateFn, KernelAction)>) -> Self {
        KernelSpec {
            components,
            bound_check: None,
        }
    }

    pub fn identity() -> Self {
        KernelSpec::new(vec![(constant_weight(1.0), KernelAction::Identity)])
    }

    pub fn deterministic(label: &str, map: MapFn) -> Self {
        KernelSpec::new(vec![(
            constant_weight(1.0),
            KernelAction::DeterministicMap {
                label: label.to_string(),
                map,
            },
        )])
    }

    pub fn refreshment(space: VelocitySpace) -> Self {
        KernelSpec::new(vec![(
            constant_weight(1.0),
            KernelAction::Refreshment(space),
        )])
    }

    /// Unnormalized component weights at a state.
    pub fn weights_at(&self, s: &PhaseState) -> Vec<f64> {
        self.components.iter().map(|(w, _)| w(s).max(0.0)).collect()
    }

    /// Draw the next state.
    pub fn sample<R: Rng + ?Sized>(&self, s: &PhaseState, rng: &mut R) -> Result<PhaseState> {
        if let Some((rate, bound)) = &self.bound_check {
            let r = rate(s);
            if r > bound * (1.0 + 1e-12) {
                return Err(PdmpError::RateBoundViolated {
                    rate: r,
                    bound: *bound,
                });
            }
        }
        let weights = self.weights_at(s);
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Ok(s.clone());
        }
        let mut u = rng.gen::<f64>() * total;
        for (w, (_, action)) in weights.iter().zip(&self.components) {
            u -= w;
            if u <= 0.0 {
                return Ok(action.apply(s, rng));
            }
        }
        // float round-off on the last partial sum
        Ok(self.components.last().unwrap().1.apply(s, rng))
    }

    /// Probability Q(s, {s}) of returning exactly the incoming state.
    pub fn staying_mass(&self, s: &PhaseState) -> f64 {
        let weights = self.weights_at(s);
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return 1.0;
        }
        self.components
            .iter()
            .zip(&weights)
            .map(|((_, action), w)| w * action.staying_prob(s))
            .sum::<f64>()
            / total
    }
}

/// How event times can be sampled for a mechanism along the flow.
#[derive(Clone)]
pub enum EventTimeCapability {
    /// The rate along the flow is exactly (a(s) + b(s) t)_+, so the hazard
    /// integral inverts in closed form.
    AnalyticAffine { a_fn: AffineFn, b_fn: AffineFn },
    /// The rate never exceeds this constant; event times come from thinning.
    BoundedBy(f64),
    /// No structure: adaptive quadrature plus bracketing and bisection.
    Numeric,
}

impl EventTimeCapability {
    /// Capability of a constant rate c.
    pub fn constant(c: f64) -> Self {
        EventTimeCapability::AnalyticAffine {
            a_fn: Arc::new(move |_| c),
            b_fn: Arc::new(|_| 0.0),
        }
    }
}

/// A jump mechanism: a homogeneous rate λ, a kernel Q, and a tag describing
/// how event times for it can be sampled.
#[derive(Clone)]
pub struct JumpMechanism {
    pub rate: RateFn,
    pub kernel: KernelSpec,
    pub capability: EventTimeCapability,
}

impl JumpMechanism {
    pub fn new(rate: RateFn, kernel: KernelSpec, capability: EventTimeCapability) -> Self {
        JumpMechanism {
            rate,
            kernel,
            capability,
        }
    }

    pub fn constant(c: f64, kernel: KernelSpec) -> Self {
        JumpMechanism::new(constant_rate(c), kernel, EventTimeCapability::constant(c))
    }
}

/// Merge a list of mechanisms into the single total mechanism: rate Σλ_i and
/// the rate-weighted mixture of the kernels. Where all rates vanish the
/// kernel degenerates to keeping the state.
pub fn total_mechanism(ms: &[JumpMechanism]) -> Result<JumpMechanism> {
    if ms.is_empty() {
        return Err(PdmpError::EmptyMechanismList);
    }
    if ms.len() == 1 {
        return Ok(ms[0].clone());
    }

    let rates: Vec<RateFn> = ms.iter().map(|m| m.rate.clone()).collect();
    let total_rate: RateFn = Arc::new(move |s| rates.iter().map(|r| r(s)).sum());

    let mut components = Vec::new();
    for m in ms {
        let rate = m.rate.clone();
        let comp_weights: Vec<RateFn> = m.kernel.components.iter().map(|(w, _)| w.clone()).collect();
        for (idx, (_, action)) in m.kernel.components.iter().enumerate() {
            let rate = rate.clone();
            let comp_weights = comp_weights.clone();
            let weight: RateFn = Arc::new(move |s| {
                let lam = rate(s);
                if lam <= 0.0 {
                    return 0.0;
                }
                let w: Vec<f64> = comp_weights.iter().map(|f| f(s).max(0.0)).collect();
                let norm: f64 = w.iter().sum();
                if norm > 0.0 {
                    lam * w[idx] / norm
                } else {
                    0.0
                }
            });
            components.push((weight, action.clone()));
        }
    }

    let capability = if ms
        .iter()
        .all(|m| matches!(m.capability, EventTimeCapability::BoundedBy(_)))
    {
        EventTimeCapability::BoundedBy(
            ms.iter()
                .map(|m| match m.capability {
                    EventTimeCapability::BoundedBy(b) => b,
                    _ => unreachable!(),
                })
                .sum(),
        )
    } else {
        // A sum of clipped affine terms is not itself of clipped affine form.
        EventTimeCapability::Numeric
    };

    Ok(JumpMechanism::new(
        total_rate,
        KernelSpec::new(components),
        capability,
    ))
}

/// Merge a list of mechanisms into the minimal mechanism: the staying mass
/// of every kernel is removed and absorbed into a lower rate
/// λ_m(s) = Σ λ_i(s) Q_i(s, M∖{s}), so the result has no phantom jumps.
pub fn minimal_mechanism(ms: &[JumpMechanism]) -> Result<JumpMechanism> {
    if ms.is_empty() {
        return Err(PdmpError::EmptyMechanismList);
    }

    let parts: Vec<(RateFn, KernelSpec)> = ms
        .iter()
        .map(|m| (m.rate.clone(), m.kernel.clone()))
        .collect();
    let moving_rate: RateFn = {
        let parts = parts.clone();
        Arc::new(move |s| {
            parts
                .iter()
                .map(|(rate, kernel)| rate(s) * (1.0 - kernel.staying_mass(s)))
                .sum()
        })
    };

    let mut components = Vec::new();
    for m in ms {
        let rate = m.rate.clone();
        let comp_weights: Vec<RateFn> = m.kernel.components.iter().map(|(w, _)| w.clone()).collect();
        for (idx, (_, action)) in m.kernel.components.iter().enumerate() {
            let moving_action = match action {
                KernelAction::Identity => continue,
                KernelAction::Refreshment(space) if space.has_atoms() => {
                    KernelAction::MovingRefreshment(space.clone())
                }
                other => other.clone(),
            };
            let rate = rate.clone();
            let comp_weights = comp_weights.clone();
            let action_for_weight = action.clone();
            let weight: RateFn = Arc::new(move |s| {
                let lam = rate(s);
                if lam <= 0.0 {
                    return 0.0;
                }
                let w: Vec<f64> = comp_weights.iter().map(|f| f(s).max(0.0)).collect();
                let norm: f64 = w.iter().sum();
                if norm > 0.0 {
                    lam * w[idx] * (1.0 - action_for_weight.staying_prob(s)) / norm
                } else {
                    0.0
                }
            });
            components.push((weight, moving_action));
        }
    }

    Ok(JumpMechanism::new(
        moving_rate,
        KernelSpec::new(components),
        EventTimeCapability::Numeric,
    ))
}

/// Replace (λ, Q) by the constant-rate thinned mechanism: rate λ_*, kernel
/// applying Q with probability λ(s)/λ_* and keeping the state otherwise.
/// Requires λ ≤ λ_* everywhere; violations surface as `RateBoundViolated`
/// when sampled.
pub fn thin_to_constant(m: &JumpMechanism, lambda_star: f64) -> JumpMechanism {
    assert!(lambda_star > 0.0, "thinning bound must be positive");

    let mut components = Vec::new();
    let rate = m.rate.clone();
    let comp_weights: Vec<RateFn> = m.kernel.components.iter().map(|(w, _)| w.clone()).collect();
    for (idx, (_, action)) in m.kernel.components.iter().enumerate() {
        let rate = rate.clone();
        let comp_weights = comp_weights.clone();
        let weight: RateFn = Arc::new(move |s| {
            let lam = rate(s);
            if lam <= 0.0 {
                return 0.0;
            }
            let w: Vec<f64> = comp_weights.iter().map(|f| f(s).max(0.0)).collect();
            let norm: f64 = w.iter().sum();
            if norm > 0.0 {
                lam / lambda_star * w[idx] / norm
            } else {
                0.0
            }
        });
        components.push((weight, action.clone()));
    }
    let rate = m.rate.clone();
    let phantom_weight: RateFn = Arc::new(move |s| (1.0 - rate(s) / lambda_star).max(0.0));
    components.push((phantom_weight, KernelAction::Identity));

    let mut kernel = KernelSpec::new(components);
    kernel.bound_check = Some((m.rate.clone(), lambda_star));

    JumpMechanism::new(
        constant_rate(lambda_star),
        kernel,
        EventTimeCapability::constant(lambda_star),
    )
}

/// Adjoin a pure phantom mechanism (λ', Identity). Simulating the returned
/// pair is distributionally equal to simulating `m` alone; the extra events
/// are visible in the skeleton but do not move the state.
pub fn add_phantom_rate(
    m: &JumpMechanism,
    lambda_prime: RateFn,
    capability: EventTimeCapability,
) -> Vec<JumpMechanism> {
    vec![
        m.clone(),
        JumpMechanism::new(lambda_prime, KernelSpec::identity(), capability),
    ]
}

/// Cap the rate at M, keeping the kernel. The analytic capability is lost
/// (min of a clipped affine and a constant is not clipped affine), but the
/// cap itself is a valid thinning bound.
pub fn truncate_rate(m: &JumpMechanism, cap: f64) -> JumpMechanism {
    assert!(cap >= 0.0, "cap must be nonnegative");
    let rate = m.rate.clone();
    let truncated: RateFn = Arc::new(move |s| rate(s).min(cap));
    let capability = match m.capability {
        EventTimeCapability::BoundedBy(b) => EventTimeCapability::BoundedBy(b.min(cap)),
        _ => EventTimeCapability::BoundedBy(cap),
    };
    JumpMechanism::new(truncated, m.kernel.clone(), capability)
}

/// The smoothed bounce rate
///   λ^ε(x, y) = (⟨y, ∇U(x)⟩ − ε)²_+ / (ε + (⟨y, ∇U(x)⟩ − ε)_+),
/// a C¹ approximation of (⟨y, ∇U(x)⟩)_+ within 2ε of it everywhere.
pub fn smoothed_bps_rate(u: &Potential, eps: f64) -> RateFn {
    assert!(eps > 0.0, "smoothing parameter must be positive");
    let u = u.clone();
    Arc::new(move |s| {
        let t = dot(&s.y, &u.gradient(&s.x));
        let p = (t - eps).max(0.0);
        p * p / (eps + p)
    })
}
