//! Verification instruments: apply the extended generator to test functions,
//! test candidate invariant measures by Monte Carlo, estimate ergodic
//! averages from trajectories, and sweep the truncation bias of capped
//! samplers against its integral bound proxy.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{simulate, Characteristics, EngineConfig, Trajectory, TrajectoryStatus};
use crate::error::{PdmpError, Result};
use crate::mechanisms::{truncate_rate, KernelAction, KernelSpec};
use crate::rng::RngStreams;
use crate::samplers::{build_bps, initial_state, BpsSpec};
use crate::state_space::{dot, Flow, PhaseState, Potential, VelocitySpace};
use crate::stats::{batch_means_estimate, iid_estimate, EstimateWithError};

type ValueFn = Arc<dyn Fn(&PhaseState) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&PhaseState) -> Vec<f64> + Send + Sync>;

/// A differentiable test function on the phase space.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub value: ValueFn,
    pub gradient_x: GradFn,
    pub gradient_y: GradFn,
    /// Radius of the support ball, or infinity.
    pub support_radius: f64,
}

impl TestFunction {
    /// f(x, y) = x_i.
    pub fn coordinate_x(i: usize, d: usize) -> Self {
        TestFunction {
            name: if d == 1 { "x".into() } else { format!("x_{i}") },
            value: Arc::new(move |s: &PhaseState| s.x[i]),
            gradient_x: Arc::new(move |s: &PhaseState| {
                let mut g = vec![0.0; s.dim()];
                g[i] = 1.0;
                g
            }),
            gradient_y: Arc::new(|s: &PhaseState| vec![0.0; s.dim()]),
            support_radius: f64::INFINITY,
        }
    }

    /// f(x, y) = x_i².
    pub fn coordinate_x_squared(i: usize, d: usize) -> Self {
        TestFunction {
            name: if d == 1 { "x^2".into() } else { format!("x_{i}^2") },
            value: Arc::new(move |s: &PhaseState| s.x[i] * s.x[i]),
            gradient_x: Arc::new(move |s: &PhaseState| {
                let mut g = vec![0.0; s.dim()];
                g[i] = 2.0 * s.x[i];
                g
            }),
            gradient_y: Arc::new(|s: &PhaseState| vec![0.0; s.dim()]),
            support_radius: f64::INFINITY,
        }
    }

    /// f(x, y) = y_i.
    pub fn coordinate_y(i: usize, d: usize) -> Self {
        TestFunction {
            name: if d == 1 { "y".into() } else { format!("y_{i}") },
            value: Arc::new(move |s: &PhaseState| s.y[i]),
            gradient_x: Arc::new(|s: &PhaseState| vec![0.0; s.dim()]),
            gradient_y: Arc::new(move |s: &PhaseState| {
                let mut g = vec![0.0; s.dim()];
                g[i] = 1.0;
                g
            }),
            support_radius: f64::INFINITY,
        }
    }

    /// f(x, y) = x_i y_i.
    pub fn coordinate_xy(i: usize, d: usize) -> Self {
        TestFunction {
            name: if d == 1 { "xy".into() } else { format!("x_{i}y_{i}") },
            value: Arc::new(move |s: &PhaseState| s.x[i] * s.y[i]),
            gradient_x: Arc::new(move |s: &PhaseState| {
                let mut g = vec![0.0; s.dim()];
                g[i] = s.y[i];
                g
            }),
            gradient_y: Arc::new(move |s: &PhaseState| {
                let mut g = vec![0.0; s.dim()];
                g[i] = s.x[i];
                g
            }),
            support_radius: f64::INFINITY,
        }
    }

    /// Smooth compactly supported bump exp(1 − 1/(1 − r²)) with
    /// r² = (‖x‖² + ‖y‖²)/R², vanishing outside the radius-R ball.
    pub fn smooth_bump(radius: f64) -> Self {
        assert!(radius > 0.0);
        let r2of = move |s: &PhaseState| (dot(&s.x, &s.x) + dot(&s.y, &s.y)) / (radius * radius);
        let value = move |s: &PhaseState| {
            let r2 = r2of(s);
            if r2 >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - r2)).exp()
            }
        };
        let scale = move |s: &PhaseState| {
            // d f / d r² = -f / (1 - r²)²
            let r2 = r2of(s);
            if r2 >= 1.0 {
                0.0
            } else {
                -value(s) / ((1.0 - r2) * (1.0 - r2))
            }
        };
        TestFunction {
            name: "bump".into(),
            value: Arc::new(value),
            gradient_x: Arc::new(move |s: &PhaseState| {
                let c = scale(s) * 2.0 / (radius * radius);
                s.x.iter().map(|v| c * v).collect()
            }),
            gradient_y: Arc::new(move |s: &PhaseState| {
                let c = scale(s) * 2.0 / (radius * radius);
                s.y.iter().map(|v| c * v).collect()
            }),
            support_radius: radius,
        }
    }

    /// Diagnostic Lyapunov function V = e^W φ(⟨y, ∇W⟩) with W = √(1 + U)
    /// and φ a smoothstep with φ(r) = 1 for r ≤ −2 and φ(r) = 3 for r ≥ 1.
    pub fn lyapunov(potential: &Potential) -> Self {
        fn phi(r: f64) -> f64 {
            let t = ((r + 2.0) / 3.0).clamp(0.0, 1.0);
            1.0 + 2.0 * (3.0 * t * t - 2.0 * t * t * t)
        }
        fn phi_prime(r: f64) -> f64 {
            let t = (r + 2.0) / 3.0;
            if !(0.0..=1.0).contains(&t) {
                return 0.0;
            }
            2.0 * (6.0 * t - 6.0 * t * t) / 3.0
        }
        let u0 = potential.clone();
        let w_and_grad = move |s: &PhaseState| {
            let w = (1.0 + u0.value(&s.x)).sqrt();
            let grad_u = u0.gradient(&s.x);
            let grad_w: Vec<f64> = grad_u.iter().map(|g| g / (2.0 * w)).collect();
            (w, grad_u, grad_w)
        };
        let wg_v = w_and_grad.clone();
        let value = Arc::new(move |s: &PhaseState| {
            let (w, _, grad_w) = wg_v(s);
            w.exp() * phi(dot(&s.y, &grad_w))
        });
        let u = potential.clone();
        let wg_x = w_and_grad.clone();
        let gradient_x = Arc::new(move |s: &PhaseState| {
            let (w, grad_u, grad_w) = wg_x(s);
            let r = dot(&s.y, &grad_w);
            let ew = w.exp();
            // d/dx ⟨y, ∇W⟩ = (Hess U) y / (2W) − ⟨∇U, y⟩ ∇U / (4W³)
            let hy = u.hessian_action(&s.x, &s.y).unwrap();
            let gu_y = dot(&grad_u, &s.y);
            (0..s.dim())
                .map(|i| {
                    let dr = hy[i] / (2.0 * w) - gu_y * grad_u[i] / (4.0 * w * w * w);
                    ew * (grad_w[i] * phi(r) + phi_prime(r) * dr)
                })
                .collect()
        });
        let wg_y = w_and_grad;
        let gradient_y = Arc::new(move |s: &PhaseState| {
            let (w, _, grad_w) = wg_y(s);
            let r = dot(&s.y, &grad_w);
            let c = w.exp() * phi_prime(r);
            grad_w.iter().map(|g| c * g).collect()
        });
        TestFunction {
            name: "lyapunov".into(),
            value,
            gradient_x,
            gradient_y,
            support_radius: f64::INFINITY,
        }
    }

    /// The standard battery for invariance testing in one dimension.
    pub fn standard_battery_1d() -> Vec<TestFunction> {
        vec![
            TestFunction::coordinate_x(0, 1),
            TestFunction::coordinate_x_squared(0, 1),
            TestFunction::coordinate_y(0, 1),
            TestFunction::coordinate_xy(0, 1),
            TestFunction::smooth_bump(3.0),
        ]
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1], computed by Newton
/// iteration on the Legendre polynomial and cached per order.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    static CACHE_8: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static CACHE_64: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    fn compute(n: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(n);
        for i in 1..=n {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                // evaluate P_n and P_n' by the recurrence
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out
    }
    match n {
        8 => CACHE_8.get_or_init(|| compute(8)),
        64 => CACHE_64.get_or_init(|| compute(64)),
        _ => panic!("unsupported quadrature order {n}"),
    }
}

/// E[f(x, Y)] for Y drawn from the refreshment distribution of the space,
/// with x fixed. Closed-form or quadrature where possible, fixed-seed Monte
/// Carlo otherwise.
fn refreshment_expectation(
    space: &VelocitySpace,
    f: &TestFunction,
    s: &PhaseState,
) -> Result<f64> {
    match space {
        VelocitySpace::StdGaussian(1) => {
            // 64-node Gauss–Legendre over [-8, 8] with the Gaussian density
            let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            let mut acc = 0.0;
            for (t, w) in gauss_legendre(64) {
                let z = 8.0 * t;
                let probe = PhaseState {
                    x: s.x.clone(),
                    y: vec![z],
                };
                acc += w * 8.0 * norm * (-0.5 * z * z).exp() * (f.value)(&probe);
            }
            Ok(acc)
        }
        VelocitySpace::SignedHypercube(d) if *d <= 20 => {
            let mut acc = 0.0;
            for corner in 0..(1usize << d) {
                let y: Vec<f64> = (0..*d)
                    .map(|i| if corner >> i & 1 == 1 { 1.0 } else { -1.0 })
                    .collect();
                acc += (f.value)(&PhaseState { x: s.x.clone(), y });
            }
            Ok(acc / (1usize << d) as f64)
        }
        VelocitySpace::UnitSphere(1) => {
            let plus = (f.value)(&PhaseState {
                x: s.x.clone(),
                y: vec![1.0],
            });
            let minus = (f.value)(&PhaseState {
                x: s.x.clone(),
                y: vec![-1.0],
            });
            Ok(0.5 * (plus + minus))
        }
        _ => {
            // fixed-seed Monte Carlo fallback; stderr ~ sd/sqrt(n)
            let mut rng = RngStreams::new(0x9e3779b9).stream(0);
            let n = 100_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let y = space.sample(&mut rng);
                acc += (f.value)(&PhaseState { x: s.x.clone(), y });
            }
            Ok(acc / n as f64)
        }
    }
}

/// Q f(s) for a mixture kernel: normalized-weight combination of the
/// component expectations.
fn kernel_expectation(kernel: &KernelSpec, f: &TestFunction, s: &PhaseState) -> Result<f64> {
    let weights = kernel.weights_at(s);
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Ok((f.value)(s));
    }
    let mut acc = 0.0;
    for ((_, action), w) in kernel.components.iter().zip(&weights) {
        if *w == 0.0 {
            continue;
        }
        let e = match action {
            KernelAction::DeterministicMap { map, .. } => (f.value)(&map(s)),
            KernelAction::Identity => (f.value)(s),
            KernelAction::Refreshment(space) => refreshment_expectation(space, f, s)?,
            KernelAction::MovingRefreshment(space) => {
                let atom = space.atom_mass(&s.y);
                let full = refreshment_expectation(space, f, s)?;
                if atom >= 1.0 {
                    return Err(PdmpError::KernelExpectationUnavailable);
                }
                (full - atom * (f.value)(s)) / (1.0 - atom)
            }
        };
        acc += w * e;
    }
    Ok(acc / total)
}

/// The extended generator applied to f at s:
/// Af = ⟨y, ∇_x f⟩ + Σ_i λ_i (Q_i f − f).
pub fn apply_generator(ch: &Characteristics, f: &TestFunction, s: &PhaseState) -> Result<f64> {
    let mut out = dot(&s.y, &(f.gradient_x)(s));
    let fs = (f.value)(s);
    for m in &ch.mechanisms {
        let lam = (m.rate)(s);
        if lam > 0.0 {
            out += lam * (kernel_expectation(&m.kernel, f, s)? - fs);
        }
    }
    Ok(out)
}

/// One line of an invariance report.
#[derive(Debug, Clone)]
pub struct InvarianceLine {
    pub name: String,
    pub estimate: EstimateWithError,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub lines: Vec<InvarianceLine>,
    pub pass: bool,
}

/// Monte Carlo test of ∫ Af dμ = 0 for a candidate measure μ given by an
/// i.i.d. sampler. A test function passes when its mean is within 4 standard
/// errors of zero.
pub fn invariance_test<S>(
    ch: &Characteristics,
    mut candidate_sampler: S,
    fs: &[TestFunction],
    n: usize,
    seed: u64,
) -> Result<InvarianceReport>
where
    S: FnMut(&mut ChaCha8Rng) -> PhaseState,
{
    assert!(n >= 2);
    let mut rng = RngStreams::new(seed).stream(0);
    let states: Vec<PhaseState> = (0..n).map(|_| candidate_sampler(&mut rng)).collect();
    let mut lines = Vec::with_capacity(fs.len());
    for f in fs {
        let values: Vec<f64> = states
            .iter()
            .map(|s| apply_generator(ch, f, s))
            .collect::<Result<_>>()?;
        let estimate = iid_estimate(&values);
        let z = estimate.z_score(0.0);
        lines.push(InvarianceLine {
            name: f.name.clone(),
            estimate,
            z,
            pass: z.abs() <= 4.0,
        });
    }
    let pass = lines.iter().all(|l| l.pass);
    Ok(InvarianceReport { lines, pass })
}

/// ∫_a^b f(X_s) ds along the trajectory, integrating each deterministic
/// segment with 8-node Gauss–Legendre (exact for polynomials in t up to
/// degree 15, i.e. for all shipped polynomial test functions under linear
/// flow).
fn integrate_along(traj: &Trajectory, flow: Flow, f: &TestFunction, a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    let segment = |state: &PhaseState, t0: f64, lo: f64, hi: f64| -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        gauss_legendre(8)
            .iter()
            .map(|(t, w)| {
                let time = mid + half * t;
                w * half * (f.value)(&flow.advance(state, time - t0))
            })
            .sum()
    };

    let mut acc = 0.0;
    // segment starting at init
    let first_end = traj.events.first().map_or(traj.t_end, |e| e.time);
    acc += segment(&traj.init, 0.0, a.max(0.0), b.min(first_end));
    for (k, e) in traj.events.iter().enumerate() {
        if e.time >= b {
            break;
        }
        let seg_end = traj
            .events
            .get(k + 1)
            .map_or(traj.t_end, |next| next.time);
        acc += segment(&e.state_after, e.time, a.max(e.time), b.min(seg_end));
    }
    acc
}

/// Time average (1/(T−b)) ∫_b^T f(X_s) ds with a 20-batch batch-means
/// standard error.
pub fn ergodic_average(
    traj: &Trajectory,
    flow: Flow,
    f: &TestFunction,
    burn_in_fraction: f64,
) -> Result<EstimateWithError> {
    assert!((0.0..1.0).contains(&burn_in_fraction));
    assert_eq!(traj.status, TrajectoryStatus::Completed, "trajectory incomplete");
    let b = burn_in_fraction * traj.t_end;
    let events_after = traj.events.iter().filter(|e| e.time >= b).count();
    if events_after < 40 {
        return Err(PdmpError::TrajectoryTooShort {
            events: events_after,
            min: 40,
        });
    }
    let n_batches = 20;
    let len = (traj.t_end - b) / n_batches as f64;
    let batch_means: Vec<f64> = (0..n_batches)
        .map(|k| {
            let lo = b + k as f64 * len;
            let hi = lo + len;
            integrate_along(traj, flow, f, lo, hi) / len
        })
        .collect();
    Ok(batch_means_estimate(&batch_means))
}

/// Bound proxy B(M) = ∫ (‖∇U(x)‖ − M)_+ e^{W(x) − U(x)} dx with
/// W = √(1 + U), by composite Simpson quadrature (supported in one and two
/// dimensions).
pub fn bias_bound_proxy(potential: &Potential, cap: f64) -> f64 {
    let integrand = |x: &[f64]| {
        let grad = potential.gradient(x);
        let over = (crate::state_space::norm(&grad) - cap).max(0.0);
        if over == 0.0 {
            return 0.0;
        }
        let u = potential.value(x);
        over * ((1.0 + u).sqrt() - u).exp()
    };
    let l = 12.0;
    match potential.dim() {
        1 => {
            let n = 4000; // even
            let h = 2.0 * l / n as f64;
            let mut acc = integrand(&[-l]) + integrand(&[l]);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * integrand(&[-l + i as f64 * h]);
            }
            acc * h / 3.0
        }
        2 => {
            let n = 400; // even, per axis
            let h = 2.0 * l / n as f64;
            let w1 = |i: usize| {
                if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                }
            };
            let mut acc = 0.0;
            for i in 0..=n {
                for j in 0..=n {
                    acc += w1(i)
                        * w1(j)
                        * integrand(&[-l + i as f64 * h, -l + j as f64 * h]);
                }
            }
            acc * h * h / 9.0
        }
        d => panic!("bound proxy quadrature supports d <= 2, got {d}"),
    }
}

#[derive(Debug, Clone)]
pub struct BiasSweepRow {
    pub cap: f64,
    /// Per test function: ergodic estimate under the capped sampler.
    pub estimates: Vec<EstimateWithError>,
    /// Per test function: estimate − reference mean.
    pub biases: Vec<f64>,
    /// Standard error of each bias (capped and reference errors combined).
    pub bias_stderrs: Vec<f64>,
    pub bound_proxy: f64,
}

#[derive(Debug, Clone)]
pub struct BiasSweepReport {
    pub function_names: Vec<String>,
    pub reference: Vec<EstimateWithError>,
    pub rows: Vec<BiasSweepRow>,
}

fn replicated_ergodic_estimates(
    ch: &Characteristics,
    space: &VelocitySpace,
    fs: &[TestFunction],
    t_end: f64,
    n_replicas: usize,
    seed: u64,
) -> Result<Vec<EstimateWithError>> {
    let l = ch.mechanisms.len();
    let mut per_f: Vec<Vec<f64>> = vec![Vec::with_capacity(n_replicas); fs.len()];
    for r in 0..n_replicas {
        let rep_seed = crate::engine::replica_seed(seed, l, r);
        let mut init_rng = RngStreams::new(rep_seed).stream(u64::MAX);
        let init = initial_state(space, &mut init_rng);
        let cfg = EngineConfig::new(t_end, rep_seed);
        let traj = simulate(ch, &init, &cfg);
        for (f, acc) in fs.iter().zip(per_f.iter_mut()) {
            acc.push(ergodic_average(&traj, ch.flow, f, 0.1)?.mean);
        }
    }
    Ok(per_f.iter().map(|v| iid_estimate(v)).collect())
}

/// Sweep truncation caps M over a base sampler: ergodic estimates per cap
/// and test function, empirical bias against the uncapped reference run with
/// the same budget, and the quadrature bound proxy B(M).
pub fn bias_sweep(
    base: &BpsSpec,
    caps: &[f64],
    fs: &[TestFunction],
    t_end: f64,
    n_replicas: usize,
    seed: u64,
) -> Result<BiasSweepReport> {
    assert!(caps.windows(2).all(|w| w[0] < w[1]), "caps must increase");
    let exact = build_bps(base);
    let reference = replicated_ergodic_estimates(
        &exact,
        &base.velocity_space,
        fs,
        t_end,
        n_replicas,
        seed,
    )?;

    let mut rows = Vec::with_capacity(caps.len());
    for &cap in caps {
        let mut capped = exact.clone();
        capped.mechanisms[0] = truncate_rate(&exact.mechanisms[0], cap);
        let estimates = replicated_ergodic_estimates(
            &capped,
            &base.velocity_space,
            fs,
            t_end,
            n_replicas,
            seed,
        )?;
        let biases: Vec<f64> = estimates
            .iter()
            .zip(&reference)
            .map(|(e, r)| e.mean - r.mean)
            .collect();
        let bias_stderrs: Vec<f64> = estimates
            .iter()
            .zip(&reference)
            .map(|(e, r)| (e.stderr * e.stderr + r.stderr * r.stderr).sqrt())
            .collect();
        rows.push(BiasSweepRow {
            cap,
            estimates,
            biases,
            bias_stderrs,
            bound_proxy: bias_bound_proxy(&base.potential, cap),
        });
    }
    Ok(BiasSweepReport {
        function_names: fs.iter().map(|f| f.name.clone()).collect(),
        reference,
        rows,
    })
}

/// Product candidate measure: i.i.d. N(0, sigma²) positions and the
/// canonical refreshment velocities. sigma = 1 is the invariant measure of
/// the shipped isotropic Gaussian samplers; other sigmas make deliberately
/// wrong candidates for negative controls.
pub fn gaussian_candidate(
    d: usize,
    sigma: f64,
    space: VelocitySpace,
) -> impl FnMut(&mut ChaCha8Rng) -> PhaseState {
    move |rng: &mut ChaCha8Rng| {
        let x: Vec<f64> = (0..d)
            .map(|_| sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        PhaseState {
            x,
            y: space.sample(rng),
        }
    }
}
