//! The event loop: exact simulation of a PDMP from its characteristics,
//! with two equivalent constructions (fresh clocks every step, or
//! per-mechanism residual clocks) and three event-time sampling strategies.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{PdmpError, Result};
use crate::mechanisms::{thin_to_constant, EventTimeCapability, JumpMechanism, RateFn};
use crate::rng::RngStreams;
use crate::state_space::{Flow, PhaseState};

/// A flow plus an ordered list of jump mechanisms. Mechanism indices are
/// stable and label the jump types in trajectories.
#[derive(Clone)]
pub struct Characteristics {
    pub flow: Flow,
    pub mechanisms: Vec<JumpMechanism>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    /// Fresh independent exponentials for every mechanism at every step.
    C1,
    /// Residual clocks: only the winning mechanism redraws; losers carry
    /// their remaining hazard forward.
    C2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecordMode {
    SkeletonOnly,
    /// Additionally record the state on a regular time grid.
    SkeletonPlusGrid(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub t_end: f64,
    pub max_events: usize,
    pub seed: u64,
    pub construction: Construction,
    pub record: RecordMode,
}

impl EngineConfig {
    pub fn new(t_end: f64, seed: u64) -> Self {
        EngineConfig {
            t_end,
            max_events: 10_000_000,
            seed,
            construction: Construction::C1,
            record: RecordMode::SkeletonOnly,
        }
    }

    pub fn with_construction(mut self, c: Construction) -> Self {
        self.construction = c;
        self
    }

    pub fn with_max_events(mut self, n: usize) -> Self {
        assert!(n >= 1);
        self.max_events = n;
        self
    }

    pub fn with_grid(mut self, dt: f64) -> Self {
        assert!(dt > 0.0);
        self.record = RecordMode::SkeletonPlusGrid(dt);
        self
    }
}

/// One recorded jump event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub state_after: PhaseState,
    /// Index of the mechanism that fired.
    pub mech: usize,
    /// True when the jump left the state unchanged (within 1e-12).
    pub phantom: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryStatus {
    Completed,
    /// Hit the event cap before reaching t_end.
    ExplosionSuspected,
    /// A thinned kernel saw a rate above its bound.
    RateBoundViolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub init: PhaseState,
    pub events: Vec<Event>,
    /// Populated under grid recording: (t, state at t).
    pub grid: Vec<(f64, PhaseState)>,
    pub t_end: f64,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    /// State at an arbitrary time in [0, t_end], following the flow from the
    /// last event at or before t.
    pub fn state_at(&self, flow: Flow, t: f64) -> PhaseState {
        assert!(t >= 0.0 && t <= self.t_end + 1e-12);
        let idx = self.events.partition_point(|e| e.time <= t);
        if idx == 0 {
            flow.advance(&self.init, t)
        } else {
            let e = &self.events[idx - 1];
            flow.advance(&e.state_after, t - e.time)
        }
    }

    pub fn final_state(&self, flow: Flow) -> PhaseState {
        self.state_at(flow, self.t_end)
    }
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e.max(f64::MIN_POSITIVE)
}

/// First h with ∫_0^h (a + b s)_+ ds = e, or infinity if the hazard never
/// reaches e. Case split on the signs of a and b.
pub fn invert_affine_hazard(a: f64, b: f64, e: f64) -> f64 {
    debug_assert!(e > 0.0);
    if b == 0.0 {
        return if a > 0.0 { e / a } else { f64::INFINITY };
    }
    if b > 0.0 {
        if a >= 0.0 {
            // rationalized root of b h²/2 + a h = e, stable for small b
            2.0 * e / (a + (a * a + 2.0 * b * e).sqrt())
        } else {
            // rate vanishes until t0 = -a/b, then grows linearly
            -a / b + (2.0 * e / b).sqrt()
        }
    } else {
        // b < 0: rate decreasing; total available hazard is a²/(2|b|)
        if a <= 0.0 {
            return f64::INFINITY;
        }
        let max_hazard = a * a / (-2.0 * b);
        if e > max_hazard {
            f64::INFINITY
        } else {
            2.0 * e / (a + (a * a + 2.0 * b * e).sqrt())
        }
    }
}

/// ∫_0^h (a + b s)_+ ds in closed form.
pub fn affine_hazard_integral(a: f64, b: f64, h: f64) -> f64 {
    debug_assert!(h >= 0.0);
    if b == 0.0 {
        return a.max(0.0) * h;
    }
    let t0 = -a / b; // rate sign change
    if b > 0.0 {
        if a >= 0.0 {
            a * h + 0.5 * b * h * h
        } else if h <= t0 {
            0.0
        } else {
            0.5 * b * (h - t0) * (h - t0)
        }
    } else if a <= 0.0 {
        0.0
    } else if h <= t0 {
        a * h + 0.5 * b * h * h
    } else {
        a * a / (-2.0 * b)
    }
}

fn rate_along_flow(rate: &RateFn, flow: Flow, start: &PhaseState, t: f64) -> f64 {
    rate(&flow.advance(start, t))
}

/// Adaptive Simpson quadrature of the rate along the flow over [t0, t1].
fn hazard_segment(rate: &RateFn, flow: Flow, start: &PhaseState, t0: f64, t1: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if t1 <= t0 {
        return 0.0;
    }
    let f = |t: f64| rate_along_flow(rate, flow, start, t);
    let fa = f(t0);
    let fm = f(0.5 * (t0 + t1));
    let fb = f(t1);
    recurse(&f, t0, t1, fa, fm, fb, simpson(fa, fm, fb, t1 - t0), tol, 40)
}

/// ∫_0^h λ(φ_s(start)) ds, exact for the affine capability, adaptive
/// quadrature otherwise.
pub fn integrated_hazard(m: &JumpMechanism, start: &PhaseState, flow: Flow, h: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    match &m.capability {
        EventTimeCapability::AnalyticAffine { a_fn, b_fn } => {
            affine_hazard_integral(a_fn(start), b_fn(start), h)
        }
        _ => hazard_segment(&m.rate, flow, start, 0.0, h, 1e-12 * (1.0 + h)),
    }
}

const NUMERIC_MAX_DOUBLINGS: u32 = 40;

fn sample_event_time_numeric(
    rate: &RateFn,
    flow: Flow,
    start: &PhaseState,
    e: f64,
    horizon: f64,
) -> Result<f64> {
    let quad_tol = 1e-12 * (1.0 + e);
    let hazard_tol = 5e-11 * (1.0 + e);
    let mut lo = 0.0;
    let mut acc = 0.0;
    let mut step = 1.0_f64.min(if horizon.is_finite() { horizon } else { 1.0 });
    for doubling in 0.. {
        let hi = if horizon.is_finite() {
            (lo + step).min(horizon)
        } else {
            lo + step
        };
        let seg = hazard_segment(rate, flow, start, lo, hi, quad_tol);
        if acc + seg >= e {
            // bisect inside [lo, hi]
            let mut blo = lo;
            let mut bhi = hi;
            while bhi - blo > 1e-12 * bhi.max(1.0) {
                let mid = 0.5 * (blo + bhi);
                let part = hazard_segment(rate, flow, start, blo, mid, quad_tol);
                if acc + part >= e - hazard_tol {
                    bhi = mid;
                } else {
                    acc += part;
                    blo = mid;
                }
            }
            return Ok(0.5 * (blo + bhi));
        }
        acc += seg;
        lo = hi;
        if horizon.is_finite() && lo >= horizon {
            return Ok(f64::INFINITY);
        }
        step *= 2.0;
        if doubling >= NUMERIC_MAX_DOUBLINGS {
            // hazard plateaued below the target: either the total hazard is
            // finite (no event, legitimately) or the rate is pathological
            if seg <= hazard_tol {
                return Ok(f64::INFINITY);
            }
            return Err(PdmpError::NumericInversionFailed {
                target: e,
                reached: acc,
                horizon: lo,
            });
        }
    }
    unreachable!()
}

/// First h ≥ 0 with ∫_0^h λ(φ_s(start)) ds = e, or infinity if the hazard
/// never gets there. The thinning strategy (`BoundedBy`) consumes extra
/// randomness for its accept/reject decisions; `horizon` caps the search
/// window (results beyond it are reported as infinity), which is what the
/// event loop needs since later events are discarded anyway.
pub fn sample_event_time<R: Rng + ?Sized>(
    m: &JumpMechanism,
    start: &PhaseState,
    flow: Flow,
    e: f64,
    rng: &mut R,
    horizon: f64,
) -> Result<f64> {
    debug_assert!(e > 0.0);
    match &m.capability {
        EventTimeCapability::AnalyticAffine { a_fn, b_fn } => {
            Ok(invert_affine_hazard(a_fn(start), b_fn(start), e))
        }
        EventTimeCapability::BoundedBy(bound) => {
            let bound = *bound;
            if bound <= 0.0 {
                return Ok(f64::INFINITY);
            }
            let mut t = 0.0;
            let mut e_cur = e;
            for _ in 0..100_000_000u64 {
                t += e_cur / bound;
                if t > horizon {
                    return Ok(f64::INFINITY);
                }
                let lam = rate_along_flow(&m.rate, flow, start, t);
                if lam > bound * (1.0 + 1e-12) {
                    return Err(PdmpError::RateBoundViolated { rate: lam, bound });
                }
                if rng.gen::<f64>() * bound < lam {
                    return Ok(t);
                }
                e_cur = exp1(rng);
            }
            Err(PdmpError::NumericInversionFailed {
                target: e,
                reached: 0.0,
                horizon: t,
            })
        }
        EventTimeCapability::Numeric => {
            sample_event_time_numeric(&m.rate, flow, start, e, horizon)
        }
    }
}

/// Deterministic per-replica seed: replica r of an l-mechanism experiment
/// draws from the sub-seed with stream id l + r, keeping replica streams
/// disjoint from the per-mechanism streams of any single run.
pub fn replica_seed(master: u64, n_mechanisms: usize, replica: usize) -> u64 {
    RngStreams::new(master).subseed((n_mechanisms + replica) as u64)
}

struct Recorder {
    dt: Option<f64>,
    next: f64,
    grid: Vec<(f64, PhaseState)>,
}

impl Recorder {
    fn new(record: RecordMode, init: &PhaseState) -> Self {
        match record {
            RecordMode::SkeletonOnly => Recorder {
                dt: None,
                next: f64::INFINITY,
                grid: Vec::new(),
            },
            RecordMode::SkeletonPlusGrid(dt) => Recorder {
                dt: Some(dt),
                next: dt,
                grid: vec![(0.0, init.clone())],
            },
        }
    }

    /// Record grid points strictly inside the flow segment starting at
    /// (t0, state) and ending at time t1.
    fn cover(&mut self, flow: Flow, t0: f64, state: &PhaseState, t1: f64) {
        if let Some(dt) = self.dt {
            while self.next <= t1 {
                self.grid
                    .push((self.next, flow.advance(state, self.next - t0)));
                self.next += dt;
            }
        }
    }
}

/// Simulate with the construction selected in the config.
pub fn simulate(ch: &Characteristics, init: &PhaseState, cfg: &EngineConfig) -> Trajectory {
    match cfg.construction {
        Construction::C1 => simulate_c1(ch, init, cfg),
        Construction::C2 => simulate_c2(ch, init, cfg),
    }
}

/// Replace `BoundedBy` mechanisms by their thinned constant-rate versions so
/// the event loop sees explicit phantom events instead of hidden rejection
/// randomness. Distributionally neutral; required for exact residual-clock
/// bookkeeping.
fn effective_mechanisms(ms: &[JumpMechanism]) -> Vec<JumpMechanism> {
    ms.iter()
        .map(|m| match m.capability {
            EventTimeCapability::BoundedBy(b) if b > 0.0 => thin_to_constant(m, b),
            _ => m.clone(),
        })
        .collect()
}

/// Construction 1: every step draws fresh exponentials for all mechanisms
/// and the smallest clock wins (ties to the smallest index).
pub fn simulate_c1(ch: &Characteristics, init: &PhaseState, cfg: &EngineConfig) -> Trajectory {
    run_loop(ch, init, cfg, Construction::C1)
}

/// Construction 2: per-mechanism residual clocks; only the winner redraws,
/// losers subtract the hazard they accumulated over the elapsed segment.
pub fn simulate_c2(ch: &Characteristics, init: &PhaseState, cfg: &EngineConfig) -> Trajectory {
    run_loop(ch, init, cfg, Construction::C2)
}

fn run_loop(
    ch: &Characteristics,
    init: &PhaseState,
    cfg: &EngineConfig,
    construction: Construction,
) -> Trajectory {
    assert!(!ch.mechanisms.is_empty(), "need at least one mechanism");
    assert!(cfg.t_end > 0.0 && cfg.max_events >= 1);

    let mechanisms = effective_mechanisms(&ch.mechanisms);
    let flow = ch.flow;
    let streams = RngStreams::new(cfg.seed);
    let mut rngs: Vec<ChaCha8Rng> = (0..mechanisms.len())
        .map(|i| streams.stream(i as u64))
        .collect();

    let mut t = 0.0;
    let mut state = init.clone();
    let mut events: Vec<Event> = Vec::new();
    let mut recorder = Recorder::new(cfg.record, init);
    let mut status = TrajectoryStatus::Completed;

    // residual clocks for construction 2
    let mut residual: Vec<f64> = match construction {
        Construction::C1 => Vec::new(),
        Construction::C2 => rngs.iter_mut().map(exp1).collect(),
    };

    'outer: loop {
        let remaining = cfg.t_end - t;

        // candidate waiting time per mechanism
        let mut winner: Option<(usize, f64)> = None;
        for (j, m) in mechanisms.iter().enumerate() {
            let e = match construction {
                Construction::C1 => exp1(&mut rngs[j]),
                Construction::C2 => residual[j],
            };
            let h = match sample_event_time(m, &state, flow, e, &mut rngs[j], remaining) {
                Ok(h) => h,
                Err(PdmpError::RateBoundViolated { .. }) => {
                    status = TrajectoryStatus::RateBoundViolated;
                    break 'outer;
                }
                Err(err) => panic!("event-time sampling failed: {err}"),
            };
            if winner.map_or(true, |(_, best)| h < best) {
                winner = Some((j, h));
            }
        }
        let (i, h) = winner.unwrap();

        if h > remaining {
            recorder.cover(flow, t, &state, cfg.t_end);
            break;
        }

        // losers carry their residual hazard forward
        if construction == Construction::C2 {
            for (j, m) in mechanisms.iter().enumerate() {
                if j != i {
                    residual[j] =
                        (residual[j] - integrated_hazard(m, &state, flow, h)).max(1e-300);
                }
            }
        }

        recorder.cover(flow, t, &state, t + h);
        t += h;
        let at_jump = flow.advance(&state, h);
        let next = match mechanisms[i].kernel.sample(&at_jump, &mut rngs[i]) {
            Ok(s) => s,
            Err(PdmpError::RateBoundViolated { .. }) => {
                status = TrajectoryStatus::RateBoundViolated;
                break;
            }
            Err(err) => panic!("kernel sampling failed: {err}"),
        };
        let phantom = next.distance(&at_jump) < 1e-12;
        events.push(Event {
            time: t,
            state_after: next.clone(),
            mech: i,
            phantom,
        });
        state = next;

        if construction == Construction::C2 {
            residual[i] = exp1(&mut rngs[i]);
        }

        if events.len() >= cfg.max_events && t < cfg.t_end {
            status = TrajectoryStatus::ExplosionSuspected;
            break;
        }
    }

    let t_end = match status {
        TrajectoryStatus::Completed => cfg.t_end,
        _ => events.last().map_or(0.0, |e| e.time),
    };
    Trajectory {
        init: init.clone(),
        events,
        grid: recorder.grid,
        t_end,
        status,
    }
}

/// Empirical sample of T = first jump time of a mechanism with index ≥
/// `split` (0-based), over `n_runs` independent replicas. Runs without such
/// a jump contribute +infinity.
pub fn first_type_jump_time(
    ch: &Characteristics,
    split: usize,
    init: &PhaseState,
    cfg: &EngineConfig,
    n_runs: usize,
) -> Vec<f64> {
    assert!(split >= 1 && split < ch.mechanisms.len());
    let l = ch.mechanisms.len();
    (0..n_runs)
        .map(|r| {
            let mut c = cfg.clone();
            c.seed = replica_seed(cfg.seed, l, r);
            let traj = simulate(ch, init, &c);
            traj.events
                .iter()
                .find(|e| e.mech >= split)
                .map_or(f64::INFINITY, |e| e.time)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{constant_rate, JumpMechanism, KernelSpec};
    use crate::state_space::VelocitySpace;
    use crate::stats::{exp_cdf, ks_one_sample};
    use std::sync::Arc;

    fn st(x: &[f64], y: &[f64]) -> PhaseState {
        PhaseState::new(x.to_vec(), y.to_vec())
    }

    fn affine_mech(a: f64, b: f64) -> JumpMechanism {
        let rate: RateFn = Arc::new(move |s: &PhaseState| (a + b * s.x[0]).max(0.0));
        JumpMechanism::new(
            rate,
            KernelSpec::identity(),
            EventTimeCapability::AnalyticAffine {
                a_fn: Arc::new(move |s: &PhaseState| a + b * s.x[0]),
                b_fn: Arc::new(move |s: &PhaseState| b * s.y[0]),
            },
        )
    }

    fn numeric_mech(a: f64, b: f64) -> JumpMechanism {
        let rate: RateFn = Arc::new(move |s: &PhaseState| (a + b * s.x[0]).max(0.0));
        JumpMechanism::new(rate, KernelSpec::identity(), EventTimeCapability::Numeric)
    }

    #[test]
    fn affine_inversion_examples() {
        // unit rate, E = 2 -> h = 2
        assert!((invert_affine_hazard(1.0, 0.0, 2.0) - 2.0).abs() < 1e-12);
        // a = -1, b = 1: hazard (h-1)^2/2 for h > 1; E = 2 -> h = 3
        assert!((invert_affine_hazard(-1.0, 1.0, 2.0) - 3.0).abs() < 1e-12);
        // rate identically zero
        assert_eq!(invert_affine_hazard(-1.0, 0.0, 2.0), f64::INFINITY);
        // decreasing rate that runs out of hazard
        assert_eq!(invert_affine_hazard(1.0, -1.0, 0.6), f64::INFINITY);
    }

    #[test]
    fn affine_inversion_matches_numeric_in_all_sign_cases() {
        let mut rng = crate::rng::RngStreams::new(31).stream(0);
        let cases = [
            (1.5, 0.0),
            (0.0, 2.0),
            (2.0, 1.0),
            (-1.0, 1.0),
            (2.0, -0.5),
            (-0.5, -1.0),
        ];
        for (a, b) in cases {
            for _ in 0..20 {
                let e = 0.1 + 3.0 * rand::Rng::gen::<f64>(&mut rng);
                let exact = invert_affine_hazard(a, b, e);
                // oracle: numeric inversion along a flow realizing rate
                // (a + b t)_+ at x(t) = t with unit velocity
                let m = numeric_mech(a, b);
                let start = st(&[0.0], &[1.0]);
                let numeric =
                    sample_event_time(&m, &start, Flow::FreeTransport, e, &mut rng, f64::INFINITY)
                        .unwrap();
                if exact.is_finite() {
                    assert!(
                        (exact - numeric).abs() <= 1e-8 * exact.max(1.0),
                        "a={a} b={b} e={e}: {exact} vs {numeric}"
                    );
                } else {
                    assert_eq!(numeric, f64::INFINITY, "a={a} b={b} e={e}");
                }
            }
        }
    }

    #[test]
    fn affine_hazard_integral_matches_quadrature() {
        let cases = [(1.5, 0.0), (2.0, 1.0), (-1.0, 1.0), (2.0, -0.5), (-0.5, -1.0)];
        let start = st(&[0.0], &[1.0]);
        for (a, b) in cases {
            let rate: RateFn = Arc::new(move |s: &PhaseState| (a + b * s.x[0]).max(0.0));
            for h in [0.3, 1.0, 2.7, 6.0] {
                let exact = affine_hazard_integral(a, b, h);
                let quad = hazard_segment(&rate, Flow::FreeTransport, &start, 0.0, h, 1e-13);
                assert!(
                    (exact - quad).abs() < 1e-9 * (1.0 + exact),
                    "a={a} b={b} h={h}: {exact} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn poisson_event_count_mean() {
        // constant rate 2 over [0, 5]: counts ~ Poisson(10)
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![JumpMechanism::constant(2.0, KernelSpec::identity())],
        };
        let init = st(&[0.0], &[0.0]);
        let n = 2000;
        let mut total = 0usize;
        for r in 0..n {
            let cfg = EngineConfig::new(5.0, replica_seed(99, 1, r));
            total += simulate(&ch, &init, &cfg).events.len();
        }
        let mean = total as f64 / n as f64;
        let tol = 4.0 * (10.0 / n as f64).sqrt();
        assert!((mean - 10.0).abs() < tol, "mean = {mean}");
    }

    #[test]
    fn equal_rates_win_equally_often() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![
                JumpMechanism::constant(1.0, KernelSpec::identity()),
                JumpMechanism::constant(1.0, KernelSpec::identity()),
            ],
        };
        let init = st(&[0.0], &[0.0]);
        let cfg = EngineConfig::new(5000.0, 7);
        let traj = simulate(&ch, &init, &cfg);
        let wins0 = traj.events.iter().filter(|e| e.mech == 0).count();
        let n = traj.events.len();
        let freq = wins0 as f64 / n as f64;
        let tol = 4.0 * (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < tol, "freq = {freq} over {n}");
    }

    #[test]
    fn zero_rate_gives_pure_flow() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![JumpMechanism::new(
                constant_rate(0.0),
                KernelSpec::identity(),
                EventTimeCapability::constant(0.0),
            )],
        };
        let init = st(&[1.0], &[2.0]);
        let cfg = EngineConfig::new(3.0, 5).with_grid(1.0);
        let traj = simulate(&ch, &init, &cfg);
        assert!(traj.events.is_empty());
        assert_eq!(traj.status, TrajectoryStatus::Completed);
        assert_eq!(traj.grid.len(), 4);
        assert_eq!(traj.grid[3].1, st(&[7.0], &[2.0]));
        assert_eq!(traj.final_state(Flow::FreeTransport), st(&[7.0], &[2.0]));
    }

    #[test]
    fn constructions_coincide_for_single_mechanism() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![JumpMechanism::constant(1.5, KernelSpec::identity())],
        };
        let init = st(&[0.0], &[1.0]);
        let c1 = simulate(
            &ch,
            &init,
            &EngineConfig::new(20.0, 11).with_construction(Construction::C1),
        );
        let c2 = simulate(
            &ch,
            &init,
            &EngineConfig::new(20.0, 11).with_construction(Construction::C2),
        );
        assert_eq!(c1, c2);
    }

    #[test]
    fn c2_superposition_of_constant_rates_is_poisson() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![
                JumpMechanism::constant(1.0, KernelSpec::identity()),
                JumpMechanism::constant(1.0, KernelSpec::identity()),
            ],
        };
        let init = st(&[0.0], &[0.0]);
        let cfg = EngineConfig::new(5000.0, 13).with_construction(Construction::C2);
        let traj = simulate(&ch, &init, &cfg);
        let mut prev = 0.0;
        let gaps: Vec<f64> = traj
            .events
            .iter()
            .map(|e| {
                let g = e.time - prev;
                prev = e.time;
                g
            })
            .collect();
        assert!(gaps.len() > 9000);
        let (_, p) = ks_one_sample(&gaps, exp_cdf(2.0));
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn trajectories_are_deterministic() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![
                JumpMechanism::constant(
                    0.7,
                    KernelSpec::refreshment(VelocitySpace::StdGaussian(1)),
                ),
                JumpMechanism::constant(0.3, KernelSpec::identity()),
            ],
        };
        let init = st(&[0.0], &[1.0]);
        for c in [Construction::C1, Construction::C2] {
            let cfg = EngineConfig::new(50.0, 17).with_construction(c);
            let a = simulate(&ch, &init, &cfg);
            let b = simulate(&ch, &init, &cfg);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn event_times_strictly_increase_and_stay_below_t_end() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![JumpMechanism::constant(
                3.0,
                KernelSpec::refreshment(VelocitySpace::StdGaussian(1)),
            )],
        };
        let init = st(&[0.0], &[1.0]);
        for seed in 0..20 {
            for c in [Construction::C1, Construction::C2] {
                let cfg = EngineConfig::new(10.0, seed).with_construction(c);
                let traj = simulate(&ch, &init, &cfg);
                let mut prev = 0.0;
                for e in &traj.events {
                    assert!(e.time > prev);
                    assert!(e.time <= 10.0);
                    prev = e.time;
                }
            }
        }
    }

    #[test]
    fn max_events_flags_explosion() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![JumpMechanism::constant(10.0, KernelSpec::identity())],
        };
        let init = st(&[0.0], &[0.0]);
        let cfg = EngineConfig::new(100.0, 3).with_max_events(50);
        let traj = simulate(&ch, &init, &cfg);
        assert_eq!(traj.status, TrajectoryStatus::ExplosionSuspected);
        assert_eq!(traj.events.len(), 50);
    }

    #[test]
    fn first_type_jump_time_pure_exponential() {
        // first mechanism silent, second fires at rate c: T ~ Exp(c)
        let c = 1.7;
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![
                JumpMechanism::constant(0.0, KernelSpec::identity()),
                JumpMechanism::constant(c, KernelSpec::identity()),
            ],
        };
        let init = st(&[0.0], &[0.0]);
        let cfg = EngineConfig::new(50.0, 23);
        let ts = first_type_jump_time(&ch, 1, &init, &cfg, 4000);
        let finite: Vec<f64> = ts.iter().copied().filter(|t| t.is_finite()).collect();
        assert!(finite.len() > 3990);
        let (_, p) = ks_one_sample(&finite, exp_cdf(c));
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn first_type_jump_time_never_fires() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![
                JumpMechanism::constant(1.0, KernelSpec::identity()),
                JumpMechanism::constant(0.0, KernelSpec::identity()),
            ],
        };
        let init = st(&[0.0], &[0.0]);
        let cfg = EngineConfig::new(5.0, 29);
        let ts = first_type_jump_time(&ch, 1, &init, &cfg, 200);
        assert!(ts.iter().all(|t| *t == f64::INFINITY));
    }

    #[test]
    fn thinning_strategy_matches_exponential_law() {
        // rate constant 1 hidden behind a loose bound of 4: accepted times
        // must still be Exp(1)
        let m = JumpMechanism::new(
            constant_rate(1.0),
            KernelSpec::identity(),
            EventTimeCapability::BoundedBy(4.0),
        );
        let start = st(&[0.0], &[0.0]);
        let mut rng = crate::rng::RngStreams::new(37).stream(0);
        let mut times = Vec::new();
        for _ in 0..5000 {
            let e = exp1(&mut rng);
            let t = sample_event_time(&m, &start, Flow::FreeTransport, e, &mut rng, 1e6).unwrap();
            times.push(t);
        }
        let (_, p) = ks_one_sample(&times, exp_cdf(1.0));
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn bounded_mechanism_with_bad_bound_flags_trajectory() {
        // claimed bound 1, true rate 3
        let m = JumpMechanism::new(
            constant_rate(3.0),
            KernelSpec::identity(),
            EventTimeCapability::BoundedBy(1.0),
        );
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![m],
        };
        let traj = simulate(&ch, &st(&[0.0], &[0.0]), &EngineConfig::new(10.0, 41));
        assert_eq!(traj.status, TrajectoryStatus::RateBoundViolated);
    }

    #[test]
    fn state_at_follows_flow_between_events() {
        let ch = Characteristics {
            flow: Flow::FreeTransport,
            mechanisms: vec![JumpMechanism::constant(
                1.0,
                KernelSpec::refreshment(VelocitySpace::StdGaussian(1)),
            )],
        };
        let init = st(&[0.0], &[1.0]);
        let cfg = EngineConfig::new(10.0, 43).with_grid(0.25);
        let traj = simulate(&ch, &init, &cfg);
        for (t, s) in &traj.grid {
            assert!(traj.state_at(Flow::FreeTransport, *t).approx_eq(s, 1e-12));
        }
    }

    #[test]
    fn analytic_affine_consistent_with_rate_along_flow() {
        let m = affine_mech(0.8, 0.6);
        let mut rng = crate::rng::RngStreams::new(47).stream(0);
        for _ in 0..20 {
            let s = st(
                &[rand::Rng::gen_range(&mut rng, -2.0..2.0)],
                &[1.0],
            );
            let t = rand::Rng::gen_range(&mut rng, 0.0..3.0);
            let (a_fn, b_fn) = match &m.capability {
                EventTimeCapability::AnalyticAffine { a_fn, b_fn } => (a_fn, b_fn),
                _ => unreachable!(),
            };
            let promised = (a_fn(&s) + b_fn(&s) * t).max(0.0);
            let actual = rate_along_flow(&m.rate, Flow::FreeTransport, &s, t);
            assert!((promised - actual).abs() < 1e-10);
        }
    }
}
