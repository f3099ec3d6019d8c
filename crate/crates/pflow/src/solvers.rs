//! Power-flow solvers built on the Newton flow `g_y * y' = -g(y)`.
//!
//! Seven configurations are provided. Three references: forward Euler
//! (`fem`, which at unit step is exactly Newton-Raphson), fast decoupled
//! power flow (`fdpf`, XB scheme) and adaptive classical Runge-Kutta
//! (`rk4`). Four implicit variants discretize the flow with backward
//! Euler and solve the per-step implicit system with an inner Newton
//! loop: `bem-j1` (one inner iteration, fixed step), `bem-j` (full inner
//! loop, heuristic step control), and `bem-j1-qss` / `bem-j-qss`, where
//! the step size is driven by quantized-state logic: each state variable
//! gets the time it would need to drift one quantum from its current
//! value at the current rate, and the step is the smallest of those.
//!
//! Implicit steps neglect the Hessian term, so the inner iteration matrix
//! is `(1 + h) * g_y`. One inner iteration from the previous accepted
//! state therefore equals a forward Euler step with effective step
//! `h / (1 + h)`, which is what makes `bem-j1` cheap and unconditionally
//! contracting on the linearized model.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use crate::linalg::{condition_estimate, factorize, Factorization, LinalgError};
use crate::network::{Jacobian, Network, StateVector};
use crate::scalar::{norm_inf, Scalar};

/// The solver configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Fem,
    Fdpf,
    Rk4,
    BemJ1,
    BemJ,
    BemJ1Qss,
    BemJQss,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Fem,
        Method::Fdpf,
        Method::Rk4,
        Method::BemJ1,
        Method::BemJ,
        Method::BemJ1Qss,
        Method::BemJQss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fem => "fem",
            Method::Fdpf => "fdpf",
            Method::Rk4 => "rk4",
            Method::BemJ1 => "bem-j1",
            Method::BemJ => "bem-j",
            Method::BemJ1Qss => "bem-j1-qss",
            Method::BemJQss => "bem-j-qss",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Backward-Euler family?
    pub fn is_bem(self) -> bool {
        matches!(
            self,
            Method::BemJ1 | Method::BemJ | Method::BemJ1Qss | Method::BemJQss
        )
    }

    /// Exactly one inner iteration per outer step?
    pub fn single_inner(self) -> bool {
        matches!(self, Method::BemJ1 | Method::BemJ1Qss)
    }

    /// Step size governed by the quantized-state rule?
    pub fn qss_controlled(self) -> bool {
        matches!(self, Method::BemJ1Qss | Method::BemJQss)
    }

    /// Does the method have an inner loop column in reports?
    pub fn has_inner_loop(self) -> bool {
        self.is_bem()
    }
}

/// Tunables for a solver run. `new` fills the defaults; the per-method
/// inner iteration cap is 1 for the single-inner variants and 20
/// otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub method: Method,
    /// initial step size
    pub h0: T,
    /// quantization quantum for the QSS step rule
    pub quantum: T,
    /// step size ceiling
    pub h_max: T,
    /// outer convergence threshold on the state update norm
    pub outer_tol: T,
    /// outer convergence threshold on the residual norm
    pub residual_tol: T,
    pub max_outer: usize,
    /// inner Newton iteration cap per implicit step
    pub max_inner: usize,
    /// inner convergence threshold on the implicit-system residual
    pub inner_tol: T,
    /// residual norm beyond which the run is declared divergent
    pub divergence_threshold: T,
    /// estimate the Jacobian condition number each outer step
    pub estimate_condition: bool,
    /// pin adaptive methods to h0 (reference runs, damping studies)
    pub fixed_step: bool,
    /// local truncation error tolerance for the rk4 controller
    pub rk4_tol: T,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            h0: T::one(),
            quantum: T::of(20.0),
            h_max: T::of(8000.0),
            outer_tol: T::of(1e-8),
            residual_tol: T::of(1e-8),
            max_outer: 200,
            max_inner: if method.single_inner() { 1 } else { 20 },
            inner_tol: T::of(1e-8),
            divergence_threshold: T::of(1e6),
            estimate_condition: false,
            fixed_step: false,
            rk4_tol: T::of(1e-3),
        }
    }

    fn validate(&self) {
        assert!(self.h0 > T::zero(), "h0 must be positive");
        assert!(self.quantum > T::zero(), "quantum must be positive");
        assert!(self.h_max >= self.h0, "h_max must be at least h0");
        assert!(self.max_inner >= 1, "max_inner must be at least 1");
        assert!(
            !self.method.single_inner() || self.max_inner == 1,
            "single-inner methods run exactly one inner iteration"
        );
        for (name, tol) in [
            ("outer_tol", self.outer_tol),
            ("residual_tol", self.residual_tol),
            ("inner_tol", self.inner_tol),
            ("rk4_tol", self.rk4_tol),
            ("divergence_threshold", self.divergence_threshold),
        ] {
            assert!(tol > T::zero(), "{name} must be positive");
        }
    }
}

/// One accepted outer step.
///
/// `inner_iters` counts every inner Newton iteration spent on the step,
/// including work discarded by step rejections. `residual_norm` and
/// `state` describe the state after the step.
#[derive(Debug, Clone)]
pub struct IterationRecord<T> {
    pub k: usize,
    pub h: T,
    pub inner_iters: usize,
    pub residual_norm: T,
    pub state_delta_norm: T,
    pub condition_estimate: Option<T>,
    /// per-variable magnitudes of the Newton-flow derivative at the start
    /// of the step, when the method computes it
    pub derivative_norms: Option<Vec<T>>,
    pub state: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Converged,
    /// Divergence detected when entering outer step `at_outer`: the
    /// residual went non-finite or beyond the threshold, or step
    /// rejections ran out.
    Diverged { at_outer: usize },
    IterationLimit,
    /// Factorization failed at the given pivot while preparing outer
    /// step `at_outer`.
    SingularJacobian { at_outer: usize, pivot: usize },
}

impl Verdict {
    pub fn is_converged(self) -> bool {
        self == Verdict::Converged
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::Diverged { .. } => "diverged",
            Verdict::IterationLimit => "iteration-limit",
            Verdict::SingularJacobian { .. } => "singular-jacobian",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverReport<T> {
    pub verdict: Verdict,
    pub iterations: Vec<IterationRecord<T>>,
    pub final_state: StateVector<T>,
    pub outer_count: usize,
    pub inner_total: usize,
    pub wall_time: Duration,
}

impl<T: Scalar> SolverReport<T> {
    pub fn converged(&self) -> bool {
        self.verdict.is_converged()
    }

    /// Writes the per-iteration trace:
    /// `k,h_k,inner_iters,residual_norm,state_delta_norm,cond_est`.
    pub fn write_trace_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "k,h_k,inner_iters,residual_norm,state_delta_norm,cond_est")?;
        for rec in &self.iterations {
            write!(
                w,
                "{},{},{},{},{},",
                rec.k, rec.h, rec.inner_iters, rec.residual_norm, rec.state_delta_norm
            )?;
            match rec.condition_estimate {
                Some(c) => writeln!(w, "{c}")?,
                None => writeln!(w)?,
            }
        }
        Ok(())
    }

    /// Writes every state entry per iteration, one column per variable,
    /// so any bus quantity can be plotted against k.
    pub fn write_states_csv(&self, net: &Network<T>, mut w: impl Write) -> io::Result<()> {
        write!(w, "k")?;
        let index = net.index();
        for id in &index.angle_vars {
            write!(w, ",va_{id}")?;
        }
        for id in &index.mag_vars {
            write!(w, ",vm_{id}")?;
        }
        writeln!(w)?;
        for rec in &self.iterations {
            write!(w, "{}", rec.k)?;
            for v in &rec.state {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Step-control primitives
// ---------------------------------------------------------------------------

/// Quantized-state step rule: the time for variable j to drift one
/// quantum at rate `f_j` is `quantum / |f_j|`; the global step is the
/// smallest of these, capped at `h_max`. Variables at rest impose no
/// limit, so an all-zero derivative yields `h_max`.
pub fn qss_step<T: Scalar>(derivative: &[T], quantum: T, h_max: T) -> T {
    assert!(quantum > T::zero(), "quantum must be positive");
    assert!(h_max > T::zero(), "h_max must be positive");
    let mut h = h_max;
    for &f in derivative {
        let a = f.abs();
        if a > T::zero() {
            h = h.min(quantum / a);
        }
    }
    h
}

/// Inner-loop-driven step heuristic: a fast inner solve (at most 3
/// iterations) doubles the step, a strained one (at least three quarters
/// of the cap) halves it, anything in between leaves it alone.
pub fn heuristic_step<T: Scalar>(prev_h: T, inner_iters: usize, i_max: usize, h_max: T) -> T {
    assert!(prev_h > T::zero(), "prev_h must be positive");
    if inner_iters <= 3 {
        (prev_h + prev_h).min(h_max)
    } else if 4 * inner_iters >= 3 * i_max {
        prev_h / T::of(2.0)
    } else {
        prev_h
    }
}

/// Quantization update: `q` follows `y` wherever the gap has reached the
/// quantum (boundary inclusive). Returns the new quantized vector and the
/// indices that fired.
pub fn quantizer_update<T: Scalar>(y: &[T], q: &[T], quantum: T) -> (Vec<T>, Vec<usize>) {
    assert_eq!(y.len(), q.len(), "quantizer arrays must match");
    let mut q_new = q.to_vec();
    let mut events = Vec::new();
    for (j, (&yj, qj)) in y.iter().zip(q_new.iter_mut()).enumerate() {
        if (yj - *qj).abs() >= quantum {
            *qj = yj;
            events.push(j);
        }
    }
    (q_new, events)
}

// ---------------------------------------------------------------------------
// Shared run plumbing
// ---------------------------------------------------------------------------

struct Run<T> {
    records: Vec<IterationRecord<T>>,
    inner_total: usize,
    started: Instant,
}

impl<T: Scalar> Run<T> {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            inner_total: 0,
            started: Instant::now(),
        }
    }

    fn push(&mut self, rec: IterationRecord<T>) {
        self.inner_total += rec.inner_iters;
        self.records.push(rec);
    }

    fn finish(self, verdict: Verdict, final_state: StateVector<T>) -> SolverReport<T> {
        SolverReport {
            verdict,
            outer_count: self.records.len(),
            inner_total: self.inner_total,
            iterations: self.records,
            final_state,
            wall_time: self.started.elapsed(),
        }
    }
}

fn linearize<T: Scalar>(
    net: &Network<T>,
    y: &StateVector<T>,
) -> Result<(Jacobian<T>, Factorization<T>), usize> {
    let jac = net.jacobian(y);
    match factorize(&jac.matrix) {
        Ok(fac) => Ok((jac, fac)),
        Err(LinalgError::Singular { pivot, .. }) => Err(pivot),
        Err(e) => unreachable!("square matrix with validated pattern: {e}"),
    }
}

fn diverging<T: Scalar>(gnorm: T, cfg: &SolverConfig<T>) -> bool {
    !gnorm.is_finite() || gnorm > cfg.divergence_threshold
}

fn meets_tolerances<T: Scalar>(delta: T, gnorm: T, cfg: &SolverConfig<T>) -> bool {
    delta < cfg.outer_tol && gnorm < cfg.residual_tol
}

fn abs_all<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|x| x.abs()).collect()
}

/// Dispatches to the solver matching `cfg.method`.
pub fn solve<T: Scalar>(
    net: &Network<T>,
    y0: &StateVector<T>,
    cfg: &SolverConfig<T>,
) -> SolverReport<T> {
    match cfg.method {
        Method::Fem => solve_fem(net, y0, cfg),
        Method::Fdpf => solve_fdpf(net, y0, cfg),
        Method::Rk4 => solve_rk4(net, y0, cfg),
        _ => solve_bem(net, y0, cfg),
    }
}

// ---------------------------------------------------------------------------
// Forward Euler (robust Newton)
// ---------------------------------------------------------------------------

/// Forward-Euler discretization of the Newton flow with fixed step `h0`.
/// Each step solves `g_y(y_k) d = -h g(y_k)`; `h0 = 1` is standard
/// Newton-Raphson.
pub fn solve_fem<T: Scalar>(
    net: &Network<T>,
    y0: &StateVector<T>,
    cfg: &SolverConfig<T>,
) -> SolverReport<T> {
    assert_eq!(cfg.method, Method::Fem);
    cfg.validate();
    let mut run = Run::new();
    let mut y = y0.clone();
    let mut g = net.residual(&y);
    let mut gnorm = g.max_norm();
    let h = cfg.h0;

    for k in 0.. {
        if diverging(gnorm, cfg) {
            return run.finish(Verdict::Diverged { at_outer: k }, y);
        }
        if k >= cfg.max_outer {
            return run.finish(Verdict::IterationLimit, y);
        }
        let (jac, fac) = match linearize(net, &y) {
            Ok(pair) => pair,
            Err(pivot) => {
                return run.finish(Verdict::SingularJacobian { at_outer: k, pivot }, y)
            }
        };
        let cond = cfg
            .estimate_condition
            .then(|| condition_estimate(&fac, &jac.matrix));
        let w = fac.solve(&g.values);
        for (yi, wi) in y.values.iter_mut().zip(&w) {
            *yi -= h * *wi;
        }
        let delta = h * norm_inf(&w);
        g = net.residual(&y);
        gnorm = g.max_norm();
        run.push(IterationRecord {
            k,
            h,
            inner_iters: 0,
            residual_norm: gnorm,
            state_delta_norm: delta,
            condition_estimate: cond,
            derivative_norms: Some(abs_all(&w)),
            state: y.values.clone(),
        });
        if meets_tolerances(delta, gnorm, cfg) {
            return run.finish(Verdict::Converged, y);
        }
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// Backward Euler family
// ---------------------------------------------------------------------------

const MAX_STEP_REJECTIONS: usize = 8;

/// Backward-Euler discretization with an inner Newton loop per step.
///
/// The implicit system for one step is
/// `phi(v) = g_y(v) (v - y_k) + h g(v) = 0`, iterated with the
/// Hessian-free matrix `(1 + h) g_y(v)`. Single-inner variants accept the
/// first iterate unconditionally; full variants require
/// `|phi| < inner_tol` within `max_inner` iterations and otherwise halve
/// the step and retry, up to 8 rejections.
pub fn solve_bem<T: Scalar>(
    net: &Network<T>,
    y0: &StateVector<T>,
    cfg: &SolverConfig<T>,
) -> SolverReport<T> {
    assert!(cfg.method.is_bem(), "solve_bem requires a bem variant");
    cfg.validate();
    let mut run = Run::new();
    let mut y = y0.clone();
    let mut g = net.residual(&y);
    let mut gnorm = g.max_norm();
    let mut h = cfg.h0;
    // linearization at the accepted state, carried over from the inner
    // loop when it ends with a fresh factorization
    let mut lin: Option<(Jacobian<T>, Factorization<T>)> = None;
    let mut prev_inner = 0usize;

    for k in 0.. {
        if diverging(gnorm, cfg) {
            return run.finish(Verdict::Diverged { at_outer: k }, y);
        }
        if k >= cfg.max_outer {
            return run.finish(Verdict::IterationLimit, y);
        }
        let (jac, fac) = match lin.take().map(Ok).unwrap_or_else(|| linearize(net, &y)) {
            Ok(pair) => pair,
            Err(pivot) => {
                return run.finish(Verdict::SingularJacobian { at_outer: k, pivot }, y)
            }
        };
        let cond = cfg
            .estimate_condition
            .then(|| condition_estimate(&fac, &jac.matrix));
        // Newton-flow derivative at y_k: f = -g_y^{-1} g
        let w0 = fac.solve(&g.values);

        if k > 0 && !cfg.fixed_step {
            if cfg.method.qss_controlled() {
                h = qss_step(&w0, cfg.quantum, cfg.h_max);
            } else if cfg.method == Method::BemJ {
                h = heuristic_step(h, prev_inner, cfg.max_inner, cfg.h_max);
            }
        }

        let mut inner_spent = 0usize;
        let mut rejects = 0usize;
        loop {
            let damp = h / (T::one() + h);
            // first inner iterate: phi(y_k) = h g(y_k), so the update is
            // the already-computed direction scaled by h/(1+h)
            let mut yc = y.clone();
            for (v, wi) in yc.values.iter_mut().zip(&w0) {
                *v -= damp * *wi;
            }
            let mut inner = 1usize;
            let mut g_c = net.residual(&yc);
            let mut failed = !g_c.max_norm().is_finite();
            let mut lin_c: Option<(Jacobian<T>, Factorization<T>)> = None;

            if !cfg.method.single_inner() && !failed {
                loop {
                    let (jac_c, fac_c) = match linearize(net, &yc) {
                        Ok(pair) => pair,
                        Err(_) => {
                            failed = true;
                            break;
                        }
                    };
                    let mut phi = jac_c.matrix.mat_vec(&diff(&yc.values, &y.values));
                    for (p, gi) in phi.iter_mut().zip(&g_c.values) {
                        *p += h * *gi;
                    }
                    let phi_norm = norm_inf(&phi);
                    if !phi_norm.is_finite() {
                        failed = true;
                        break;
                    }
                    if phi_norm < cfg.inner_tol {
                        lin_c = Some((jac_c, fac_c));
                        break;
                    }
                    if inner >= cfg.max_inner {
                        failed = true;
                        break;
                    }
                    let dw = fac_c.solve(&phi);
                    let scale = T::one() / (T::one() + h);
                    for (v, d) in yc.values.iter_mut().zip(&dw) {
                        *v -= scale * *d;
                    }
                    inner += 1;
                    g_c = net.residual(&yc);
                    if !g_c.max_norm().is_finite() {
                        failed = true;
                        break;
                    }
                }
            }
            inner_spent += inner;

            // single-inner variants accept their one iteration as-is; a
            // non-finite result then surfaces as divergence next step
            if cfg.method.single_inner() || !failed {
                let delta = y.distance_inf(&yc);
                y = yc;
                g = g_c;
                gnorm = g.max_norm();
                lin = lin_c;
                prev_inner = inner;
                run.push(IterationRecord {
                    k,
                    h,
                    inner_iters: inner_spent,
                    residual_norm: gnorm,
                    state_delta_norm: delta,
                    condition_estimate: cond,
                    derivative_norms: Some(abs_all(&w0)),
                    state: y.values.clone(),
                });
                if meets_tolerances(delta, gnorm, cfg) {
                    return run.finish(Verdict::Converged, y);
                }
                break;
            }
            rejects += 1;
            if rejects > MAX_STEP_REJECTIONS {
                return run.finish(Verdict::Diverged { at_outer: k }, y);
            }
            h /= T::of(2.0);
        }
    }
    unreachable!()
}

fn diff<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

// ---------------------------------------------------------------------------
// Fast decoupled power flow (XB scheme)
// ---------------------------------------------------------------------------

/// Fast decoupled power flow: alternating P-angle and Q-magnitude sweeps
/// against constant B' / B'' matrices (XB scheme: B' drops resistance,
/// charging, taps and bus shunts; B'' drops phase shifters), each
/// factorized once. One outer iteration is one P+Q pair.
pub fn solve_fdpf<T: Scalar>(
    net: &Network<T>,
    y0: &StateVector<T>,
    cfg: &SolverConfig<T>,
) -> SolverReport<T> {
    use crate::network::YbusOptions;
    assert_eq!(cfg.method, Method::Fdpf);
    cfg.validate();
    let mut run = Run::new();

    let pos = net.position_map();
    let ang_pos = net.angle_positions();
    let mag_pos = net.mag_positions();
    let n_ang = ang_pos.len();

    let bp = crate::network::assemble_ybus(
        net.case(),
        &pos,
        YbusOptions {
            zero_bus_shunts: true,
            zero_charging: true,
            unit_taps: true,
            zero_resistance: true,
            zero_phase_shift: false,
        },
    )
    .map(|y| -y.im)
    .select(&ang_pos, &ang_pos);
    let bpp = crate::network::assemble_ybus(
        net.case(),
        &pos,
        YbusOptions {
            zero_phase_shift: true,
            ..YbusOptions::default()
        },
    )
    .map(|y| -y.im)
    .select(&mag_pos, &mag_pos);

    let (mut vm, mut va) = net.expand(y0);
    let mut y = y0.clone();
    let gather = |vm: &[T], va: &[T]| -> Vec<T> {
        ang_pos
            .iter()
            .map(|&p| va[p])
            .chain(mag_pos.iter().map(|&p| vm[p]))
            .collect()
    };

    let bp_fac = match factorize(&bp) {
        Ok(f) => f,
        Err(LinalgError::Singular { pivot, .. }) => {
            return run.finish(Verdict::SingularJacobian { at_outer: 0, pivot }, y)
        }
        Err(e) => unreachable!("square by construction: {e}"),
    };
    let bpp_fac = match factorize(&bpp) {
        Ok(f) => f,
        Err(LinalgError::Singular { pivot, .. }) => {
            return run.finish(Verdict::SingularJacobian { at_outer: 0, pivot }, y)
        }
        Err(e) => unreachable!("square by construction: {e}"),
    };

    let mut g = net.residual_polar(&vm, &va);
    let mut gnorm = g.max_norm();

    for k in 0.. {
        if diverging(gnorm, cfg) {
            return run.finish(Verdict::Diverged { at_outer: k }, y);
        }
        if k >= cfg.max_outer {
            return run.finish(Verdict::IterationLimit, y);
        }
        // P sweep: update angles from the magnitude-scaled P mismatches
        let p_mis: Vec<T> = (0..n_ang).map(|i| g.values[i] / vm[ang_pos[i]]).collect();
        let dva = bp_fac.solve(&p_mis);
        for (i, &p) in ang_pos.iter().enumerate() {
            va[p] -= dva[i];
        }
        g = net.residual_polar(&vm, &va);

        // Q sweep: update magnitudes from the scaled Q mismatches
        let q_mis: Vec<T> = (0..mag_pos.len())
            .map(|i| g.values[n_ang + i] / vm[mag_pos[i]])
            .collect();
        let dvm = bpp_fac.solve(&q_mis);
        for (i, &p) in mag_pos.iter().enumerate() {
            vm[p] -= dvm[i];
        }
        g = net.residual_polar(&vm, &va);
        gnorm = g.max_norm();

        let delta = norm_inf(&dva).max(norm_inf(&dvm));
        y = StateVector::new(gather(&vm, &va), std::sync::Arc::clone(net.index()));
        run.push(IterationRecord {
            k,
            h: cfg.h0,
            inner_iters: 0,
            residual_norm: gnorm,
            state_delta_norm: delta,
            condition_estimate: None,
            derivative_norms: None,
            state: y.values.clone(),
        });
        if meets_tolerances(delta, gnorm, cfg) {
            return run.finish(Verdict::Converged, y);
        }
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// Adaptive classical Runge-Kutta
// ---------------------------------------------------------------------------

/// Why a Runge-Kutta stage evaluation could not be completed.
#[derive(Debug, Clone, Copy)]
pub enum StageError {
    Singular { pivot: usize },
    NonFinite,
}

/// One classical fourth-order Runge-Kutta step from `y` with the first
/// stage derivative `k1` already evaluated.
pub fn rk4_step<T: Scalar, E>(
    y: &[T],
    h: T,
    k1: &[T],
    f: &mut impl FnMut(&[T]) -> Result<Vec<T>, E>,
) -> Result<Vec<T>, E> {
    let half = h * T::of(0.5);
    let at = |base: &[T], scale: T, dir: &[T]| -> Vec<T> {
        base.iter()
            .zip(dir)
            .map(|(&b, &d)| b + scale * d)
            .collect()
    };
    let k2 = f(&at(y, half, k1))?;
    let k3 = f(&at(y, half, &k2))?;
    let k4 = f(&at(y, h, &k3))?;
    let sixth = h / T::of(6.0);
    let two = T::of(2.0);
    Ok(y.iter()
        .zip(k1)
        .zip(&k2)
        .zip(&k3)
        .zip(&k4)
        .map(|((((&yi, &a), &b), &c), &d)| yi + sixth * (a + two * b + two * c + d))
        .collect())
}

/// Classical Runge-Kutta 4 on the Newton flow with step-doubling error
/// control: each attempt takes one full step and two half steps, and the
/// scaled difference estimates the local truncation error. Accepted steps
/// keep the finer solution; the step is rescaled by the standard
/// fifth-order safety formula, clamped to [h/4, 4h] and h_max.
pub fn solve_rk4<T: Scalar>(
    net: &Network<T>,
    y0: &StateVector<T>,
    cfg: &SolverConfig<T>,
) -> SolverReport<T> {
    assert_eq!(cfg.method, Method::Rk4);
    cfg.validate();
    let mut run = Run::new();
    let mut y = y0.clone();
    let mut g = net.residual(&y);
    let mut gnorm = g.max_norm();
    let mut h = cfg.h0;

    // Newton-flow derivative with failure reporting for stage points
    let mut eval = |vals: &[T]| -> Result<Vec<T>, StageError> {
        let state = StateVector::new(vals.to_vec(), std::sync::Arc::clone(net.index()));
        let gs = net.residual(&state);
        if !gs.max_norm().is_finite() {
            return Err(StageError::NonFinite);
        }
        let (_jac, fac) = linearize(net, &state).map_err(|pivot| StageError::Singular { pivot })?;
        let w = fac.solve(&gs.values);
        Ok(w.into_iter().map(|v| -v).collect())
    };

    for k in 0.. {
        if diverging(gnorm, cfg) {
            return run.finish(Verdict::Diverged { at_outer: k }, y);
        }
        if k >= cfg.max_outer {
            return run.finish(Verdict::IterationLimit, y);
        }
        let (jac, fac) = match linearize(net, &y) {
            Ok(pair) => pair,
            Err(pivot) => {
                return run.finish(Verdict::SingularJacobian { at_outer: k, pivot }, y)
            }
        };
        let cond = cfg
            .estimate_condition
            .then(|| condition_estimate(&fac, &jac.matrix));
        let k1: Vec<T> = fac.solve(&g.values).into_iter().map(|v| -v).collect();

        let mut rejects = 0usize;
        loop {
            let attempt = (|| -> Result<(Vec<T>, Vec<T>), StageError> {
                let y_full = rk4_step(&y.values, h, &k1, &mut eval)?;
                let half = h * T::of(0.5);
                let y_h1 = rk4_step(&y.values, half, &k1, &mut eval)?;
                let kb1 = eval(&y_h1)?;
                let y_h2 = rk4_step(&y_h1, half, &kb1, &mut eval)?;
                Ok((y_full, y_h2))
            })();
            match attempt {
                Err(StageError::Singular { pivot }) => {
                    return run.finish(Verdict::SingularJacobian { at_outer: k, pivot }, y)
                }
                Err(StageError::NonFinite) => {
                    rejects += 1;
                    if rejects > MAX_STEP_REJECTIONS {
                        return run.finish(Verdict::Diverged { at_outer: k }, y);
                    }
                    h /= T::of(4.0);
                    continue;
                }
                Ok((y_full, y_h2)) => {
                    let err = y_full
                        .iter()
                        .zip(&y_h2)
                        .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
                        / T::of(15.0);
                    // Truncation tolerance is taken relative to the step's
                    // displacement. A purely absolute test lets h grow past
                    // the stability limit as the flow approaches steady
                    // state and the run limit-cycles instead of converging.
                    let step_norm = y
                        .values
                        .iter()
                        .zip(&y_h2)
                        .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
                    let threshold = cfg.rk4_tol * step_norm.max(T::of(1e-12));
                    let grow = if err > T::zero() {
                        T::of(0.9) * (threshold / err).powf(T::of(0.2))
                    } else {
                        T::of(4.0)
                    };
                    let factor = grow.max(T::of(0.25)).min(T::of(4.0));
                    let h_used = h;
                    let h_next = if cfg.fixed_step {
                        h
                    } else {
                        (h * factor).min(cfg.h_max)
                    };
                    if err < threshold {
                        let yc = StateVector::new(y_h2, std::sync::Arc::clone(net.index()));
                        let delta = y.distance_inf(&yc);
                        y = yc;
                        g = net.residual(&y);
                        gnorm = g.max_norm();
                        run.push(IterationRecord {
                            k,
                            h: h_used,
                            inner_iters: 0,
                            residual_norm: gnorm,
                            state_delta_norm: delta,
                            condition_estimate: cond,
                            derivative_norms: Some(abs_all(&k1)),
                            state: y.values.clone(),
                        });
                        h = h_next;
                        if meets_tolerances(delta, gnorm, cfg) {
                            return run.finish(Verdict::Converged, y);
                        }
                        break;
                    }
                    rejects += 1;
                    if rejects > MAX_STEP_REJECTIONS {
                        return run.finish(Verdict::Diverged { at_outer: k }, y);
                    }
                    h = h_next;
                }
            }
        }
    }
    unreachable!()
}
