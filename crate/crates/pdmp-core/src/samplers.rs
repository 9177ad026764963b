//! Concrete velocity-jump samplers assembled from the mechanism algebra:
//! the bouncy particle sampler (exact, truncated, smoothed) and the Zig-Zag
//! sampler.

use std::sync::Arc;

use rand::Rng;

use crate::engine::Characteristics;
use crate::mechanisms::{
    constant_rate, smoothed_bps_rate, truncate_rate, EventTimeCapability, JumpMechanism,
    KernelSpec, MapFn, RateFn,
};
use crate::state_space::{dot, reflect, Flow, PhaseState, Potential, VelocitySpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BpsVariant {
    Exact,
    /// Bounce rate capped at M.
    Truncated(f64),
    /// Bounce rate replaced by its C¹ smoothing with parameter eps.
    Smoothed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpsSpec {
    pub potential: Potential,
    pub velocity_space: VelocitySpace,
    /// Refreshment rate; must be positive (the sampler is not ergodic
    /// without refreshment).
    pub lambda_c: f64,
    pub variant: BpsVariant,
    /// Optional dominating bound on the bounce rate: routes event times
    /// through thinning instead of analytic or numeric inversion. A bound
    /// below the realized rate surfaces as a rate-bound violation.
    pub bounce_bound: Option<f64>,
}

impl BpsSpec {
    pub fn new(potential: Potential, velocity_space: VelocitySpace, lambda_c: f64) -> Self {
        assert!(lambda_c > 0.0, "refreshment rate must be positive");
        assert_eq!(potential.dim(), velocity_space.dim());
        BpsSpec {
            potential,
            velocity_space,
            lambda_c,
            variant: BpsVariant::Exact,
            bounce_bound: None,
        }
    }

    pub fn with_variant(mut self, v: BpsVariant) -> Self {
        self.variant = v;
        self
    }
}

/// Reflect the velocity in the potential gradient; on the unit sphere the
/// result is renormalized to cancel float drift (reflection is an isometry,
/// so this is a no-op up to rounding).
fn bounce_map(potential: &Potential, renormalize: bool) -> MapFn {
    let potential = potential.clone();
    Arc::new(move |s: &PhaseState| {
        let g = potential.gradient(&s.x);
        let mut out = reflect(s, &g);
        if renormalize {
            let n = crate::state_space::norm(&out.y);
            if n > 0.0 {
                for v in &mut out.y {
                    *v /= n;
                }
            }
        }
        out
    })
}

/// Exact bounce rate (⟨y, ∇U(x)⟩)_+.
pub fn bps_bounce_rate(potential: &Potential) -> RateFn {
    let potential = potential.clone();
    Arc::new(move |s: &PhaseState| dot(&s.y, &potential.gradient(&s.x)).max(0.0))
}

/// Affine event-time capability of the exact bounce rate on a Gaussian
/// target: along free transport, ⟨y, ∇U(x + ty)⟩ = ⟨y, Ax⟩ + ⟨y, Ay⟩ t.
fn gaussian_bounce_capability(potential: &Potential) -> EventTimeCapability {
    let pa = potential.clone();
    let pb = potential.clone();
    EventTimeCapability::AnalyticAffine {
        a_fn: Arc::new(move |s: &PhaseState| dot(&s.y, &pa.matrix_apply(&s.x).unwrap())),
        b_fn: Arc::new(move |s: &PhaseState| dot(&s.y, &pb.matrix_apply(&s.y).unwrap())),
    }
}

/// Build the bouncy particle sampler: mechanism 0 bounces off the potential
/// gradient, mechanism 1 refreshes the velocity at constant rate.
pub fn build_bps(spec: &BpsSpec) -> Characteristics {
    let renorm = matches!(spec.velocity_space, VelocitySpace::UnitSphere(_));
    let kernel = KernelSpec::deterministic("bounce", bounce_map(&spec.potential, renorm));

    let exact_capability = if let Some(b) = spec.bounce_bound {
        // an explicit bound is a request for thinning, even when analytic
        // inversion would be available
        EventTimeCapability::BoundedBy(b)
    } else if spec.potential.is_gaussian() {
        gaussian_bounce_capability(&spec.potential)
    } else {
        EventTimeCapability::Numeric
    };

    let bounce = match spec.variant {
        BpsVariant::Exact => {
            JumpMechanism::new(bps_bounce_rate(&spec.potential), kernel, exact_capability)
        }
        BpsVariant::Truncated(m) => {
            let exact =
                JumpMechanism::new(bps_bounce_rate(&spec.potential), kernel, exact_capability);
            truncate_rate(&exact, m)
        }
        BpsVariant::Smoothed(eps) => JumpMechanism::new(
            smoothed_bps_rate(&spec.potential, eps),
            kernel,
            EventTimeCapability::Numeric,
        ),
    };

    let refresh = JumpMechanism::new(
        constant_rate(spec.lambda_c),
        KernelSpec::refreshment(spec.velocity_space.clone()),
        EventTimeCapability::constant(spec.lambda_c),
    );

    Characteristics {
        flow: Flow::FreeTransport,
        mechanisms: vec![bounce, refresh],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZigZagSpec {
    pub potential: Potential,
    pub d: usize,
    /// Optional extra velocity refreshment rate.
    pub refresh_rate: Option<f64>,
    /// Replace the per-coordinate flip by a full velocity reversal.
    pub full_reversal: bool,
}

impl ZigZagSpec {
    pub fn new(potential: Potential) -> Self {
        let d = potential.dim();
        ZigZagSpec {
            potential,
            d,
            refresh_rate: None,
            full_reversal: false,
        }
    }
}

fn flip_map(i: usize) -> MapFn {
    Arc::new(move |s: &PhaseState| {
        let mut y = s.y.clone();
        y[i] = -y[i];
        PhaseState { x: s.x.clone(), y }
    })
}

fn reversal_map() -> MapFn {
    Arc::new(|s: &PhaseState| PhaseState {
        x: s.x.clone(),
        y: s.y.iter().map(|v| -v).collect(),
    })
}

/// Build the Zig-Zag sampler on {−1, 1}^d: mechanism i fires at rate
/// (y_i ∂_i U(x))_+ and flips the i-th velocity coordinate (or reverses the
/// whole velocity when the full-reversal switch is set).
pub fn build_zigzag(spec: &ZigZagSpec) -> Characteristics {
    assert_eq!(spec.potential.dim(), spec.d);
    let mut mechanisms = Vec::with_capacity(spec.d + 1);
    for i in 0..spec.d {
        let pot = spec.potential.clone();
        let rate: RateFn = Arc::new(move |s: &PhaseState| (s.y[i] * pot.gradient(&s.x)[i]).max(0.0));
        let capability = if spec.potential.is_gaussian() {
            let pa = spec.potential.clone();
            let pb = spec.potential.clone();
            EventTimeCapability::AnalyticAffine {
                a_fn: Arc::new(move |s: &PhaseState| s.y[i] * pa.matrix_apply(&s.x).unwrap()[i]),
                b_fn: Arc::new(move |s: &PhaseState| s.y[i] * pb.matrix_apply(&s.y).unwrap()[i]),
            }
        } else {
            EventTimeCapability::Numeric
        };
        let kernel = if spec.full_reversal {
            KernelSpec::deterministic("reverse", reversal_map())
        } else {
            KernelSpec::deterministic(&format!("flip_{i}"), flip_map(i))
        };
        mechanisms.push(JumpMechanism::new(rate, kernel, capability));
    }
    if let Some(r) = spec.refresh_rate {
        mechanisms.push(JumpMechanism::new(
            constant_rate(r),
            KernelSpec::refreshment(VelocitySpace::SignedHypercube(spec.d)),
            EventTimeCapability::constant(r),
        ));
    }
    Characteristics {
        flow: Flow::FreeTransport,
        mechanisms,
    }
}

/// Default initial state: x = 0, y drawn from the refreshment distribution.
pub fn initial_state<R: Rng + ?Sized>(space: &VelocitySpace, rng: &mut R) -> PhaseState {
    PhaseState::new(vec![0.0; space.dim()], space.sample(rng))
}
