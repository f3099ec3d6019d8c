//! Shared test oracles, all deliberately independent of the library's
//! computation paths: dense textbook admittance assembly, a dense
//! Newton-Raphson power flow with Gaussian elimination, and a
//! finite-difference Jacobian.

#![allow(clippy::needless_range_loop)] // dense oracle math reads best with indices

#![allow(dead_code)]

use num_complex::Complex64;
use pflow::casefile::{BusKind, NetworkCase};
use pflow::network::{Network, StateVector};

/// Deterministic RNG for test data (splitmix64).
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + u * (hi - lo)
    }
}

/// Dense admittance matrix assembled with the textbook pi-model formulas,
/// written separately from the library's sparse assembly.
pub fn dense_ybus(case: &NetworkCase<f64>) -> Vec<Vec<Complex64>> {
    let mut ids: Vec<usize> = case.buses.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    let pos = |id: usize| ids.binary_search(&id).unwrap();
    let n = ids.len();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in &case.branches {
        if !br.in_service {
            continue;
        }
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let ysh = Complex64::new(0.0, br.b_charging / 2.0);
        let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift);
        let (f, t) = (pos(br.from_bus), pos(br.to_bus));
        y[f][f] += (ys + ysh) / (tap * tap.conj());
        y[t][t] += ys + ysh;
        y[f][t] += -ys / tap.conj();
        y[t][f] += -ys / tap;
    }
    for bus in &case.buses {
        let p = pos(bus.id);
        y[p][p] += Complex64::new(bus.g_shunt, bus.b_shunt);
    }
    y
}

/// Dense complex power injections S = V .* conj(Y V).
pub fn dense_injections(y: &[Vec<Complex64>], vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    let n = vm.len();
    let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
    (0..n)
        .map(|i| {
            let iv: Complex64 = (0..n).map(|j| y[i][j] * v[j]).sum();
            v[i] * iv.conj()
        })
        .collect()
}

/// Dense Gaussian elimination with partial pivoting. Panics on a zero
/// pivot column (oracle use only).
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).expect("finite"))
            .expect("nonempty range");
        assert!(m[piv][k].abs() > 0.0, "oracle: singular at column {k}");
        m.swap(k, piv);
        x.swap(k, piv);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut acc = x[k];
        for j in k + 1..n {
            acc -= m[k][j] * x[j];
        }
        x[k] = acc / m[k][k];
    }
    x
}

/// State layout used by the oracle: mirrors the library's convention
/// (angles at PV+PQ ascending by id, then magnitudes at PQ).
pub struct OracleLayout {
    pub ids: Vec<usize>,
    pub angle_pos: Vec<usize>,
    pub mag_pos: Vec<usize>,
    pub kinds: Vec<BusKind>,
    pub sched_p: Vec<f64>,
    pub sched_q: Vec<f64>,
    pub base_vm: Vec<f64>,
    pub base_va: Vec<f64>,
}

pub fn oracle_layout(case: &NetworkCase<f64>) -> OracleLayout {
    let mut ids: Vec<usize> = case.buses.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    let pos = |id: usize| ids.binary_search(&id).unwrap();
    let n = ids.len();
    let mut kinds = vec![BusKind::Pq; n];
    let mut sched_p = vec![0.0; n];
    let mut sched_q = vec![0.0; n];
    let mut base_vm = vec![1.0; n];
    let mut base_va = vec![0.0; n];
    for bus in &case.buses {
        let p = pos(bus.id);
        kinds[p] = bus.kind;
        sched_p[p] -= bus.p_load;
        sched_q[p] -= bus.q_load;
        base_vm[p] = bus.v_mag_init;
        base_va[p] = bus.v_ang_init;
    }
    for gen in &case.generators {
        if !gen.in_service {
            continue;
        }
        let p = pos(gen.bus);
        sched_p[p] += gen.p_gen;
        sched_q[p] += gen.q_gen;
        if kinds[p] != BusKind::Pq {
            base_vm[p] = gen.v_set;
        }
    }
    let mut angle_pos = Vec::new();
    let mut mag_pos = Vec::new();
    for p in 0..n {
        match kinds[p] {
            BusKind::Slack => {}
            BusKind::Pv => angle_pos.push(p),
            BusKind::Pq => {
                angle_pos.push(p);
                mag_pos.push(p);
            }
        }
    }
    OracleLayout {
        ids,
        angle_pos,
        mag_pos,
        kinds,
        sched_p,
        sched_q,
        base_vm,
        base_va,
    }
}

impl OracleLayout {
    pub fn n_state(&self) -> usize {
        self.angle_pos.len() + self.mag_pos.len()
    }

    pub fn expand(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut vm = self.base_vm.clone();
        let mut va = self.base_va.clone();
        for (k, &p) in self.angle_pos.iter().enumerate() {
            va[p] = y[k];
        }
        for (k, &p) in self.mag_pos.iter().enumerate() {
            vm[p] = y[self.angle_pos.len() + k];
        }
        (vm, va)
    }

    pub fn initial_state(&self, angle_scale: f64) -> Vec<f64> {
        self.angle_pos
            .iter()
            .map(|&p| self.base_va[p] * angle_scale)
            .chain(self.mag_pos.iter().map(|&p| self.base_vm[p]))
            .collect()
    }
}

/// Dense power-flow mismatch, computed minus scheduled.
pub fn oracle_mismatch(lay: &OracleLayout, y: &[Vec<Complex64>], state: &[f64]) -> Vec<f64> {
    let (vm, va) = lay.expand(state);
    let s = dense_injections(y, &vm, &va);
    lay.angle_pos
        .iter()
        .map(|&p| s[p].re - lay.sched_p[p])
        .chain(lay.mag_pos.iter().map(|&p| s[p].im - lay.sched_q[p]))
        .collect()
}

/// Dense analytic power-flow Jacobian in the same layout, using the
/// classical polar-form partial derivative formulas.
pub fn oracle_jacobian(lay: &OracleLayout, y: &[Vec<Complex64>], state: &[f64]) -> Vec<Vec<f64>> {
    let (vm, va) = lay.expand(state);
    let n_bus = vm.len();
    let s = dense_injections(y, &vm, &va);
    let n_ang = lay.angle_pos.len();
    let n = lay.n_state();
    let mut jac = vec![vec![0.0; n]; n];

    let g = |i: usize, j: usize| y[i][j].re;
    let b = |i: usize, j: usize| y[i][j].im;
    let theta = |i: usize, j: usize| va[i] - va[j];

    // column index of each bus position's angle / magnitude variable
    let mut acol = vec![usize::MAX; n_bus];
    let mut mcol = vec![usize::MAX; n_bus];
    for (k, &p) in lay.angle_pos.iter().enumerate() {
        acol[p] = k;
    }
    for (k, &p) in lay.mag_pos.iter().enumerate() {
        mcol[p] = n_ang + k;
    }

    for (row, &i) in lay.angle_pos.iter().enumerate() {
        // dP_i rows
        for j in 0..n_bus {
            let (gij, bij, th) = (g(i, j), b(i, j), theta(i, j));
            if acol[j] != usize::MAX {
                jac[row][acol[j]] = if i == j {
                    -s[i].im - bij * vm[i] * vm[i]
                } else {
                    vm[i] * vm[j] * (gij * th.sin() - bij * th.cos())
                };
            }
            if mcol[j] != usize::MAX {
                jac[row][mcol[j]] = if i == j {
                    s[i].re / vm[i] + gij * vm[i]
                } else {
                    vm[i] * (gij * th.cos() + bij * th.sin())
                };
            }
        }
    }
    for (row0, &i) in lay.mag_pos.iter().enumerate() {
        // dQ_i rows
        let row = n_ang + row0;
        for j in 0..n_bus {
            let (gij, bij, th) = (g(i, j), b(i, j), theta(i, j));
            if acol[j] != usize::MAX {
                jac[row][acol[j]] = if i == j {
                    s[i].re - gij * vm[i] * vm[i]
                } else {
                    -vm[i] * vm[j] * (gij * th.cos() + bij * th.sin())
                };
            }
            if mcol[j] != usize::MAX {
                jac[row][mcol[j]] = if i == j {
                    s[i].im / vm[i] - bij * vm[i]
                } else {
                    vm[i] * (gij * th.sin() - bij * th.cos())
                };
            }
        }
    }
    jac
}

/// Independent dense Newton-Raphson power flow. Returns every iterate
/// (the state after each update), starting with the first update.
pub fn oracle_newton_iterates(
    case: &NetworkCase<f64>,
    angle_scale: f64,
    tol: f64,
    max_iter: usize,
) -> Vec<Vec<f64>> {
    let lay = oracle_layout(case);
    let ybus = dense_ybus(case);
    let mut state = lay.initial_state(angle_scale);
    let mut iterates = Vec::new();
    for _ in 0..max_iter {
        let mis = oracle_mismatch(&lay, &ybus, &state);
        let jac = oracle_jacobian(&lay, &ybus, &state);
        let dx = dense_solve(&jac, &mis);
        for (s, d) in state.iter_mut().zip(&dx) {
            *s -= d;
        }
        iterates.push(state.clone());
        let delta = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let res = oracle_mismatch(&lay, &ybus, &state)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if delta < tol && res < tol {
            break;
        }
    }
    iterates
}

/// Central finite-difference Jacobian of the library residual.
pub fn fd_jacobian(net: &Network<f64>, y: &StateVector<f64>, step: f64) -> Vec<Vec<f64>> {
    let n = y.len();
    let mut cols = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut plus = y.clone();
        plus.values[j] += step;
        let mut minus = y.clone();
        minus.values[j] -= step;
        let rp = net.residual(&plus);
        let rm = net.residual(&minus);
        for i in 0..n {
            cols[j][i] = (rp.values[i] - rm.values[i]) / (2.0 * step);
        }
    }
    // transpose into row-major
    let mut jac = vec![vec![0.0; n]; n];
    for i in 0..n {
        for (j, col) in cols.iter().enumerate() {
            jac[i][j] = col[i];
        }
    }
    jac
}

/// Complex per-branch flows (from-side, to-side) for loss accounting,
/// computed directly from the branch pi-model.
pub fn branch_flows(
    case: &NetworkCase<f64>,
    vm_by_id: &dyn Fn(usize) -> f64,
    va_by_id: &dyn Fn(usize) -> f64,
) -> Vec<(Complex64, Complex64)> {
    case.branches
        .iter()
        .filter(|br| br.in_service)
        .map(|br| {
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let ysh = Complex64::new(0.0, br.b_charging / 2.0);
            let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift);
            let vf = Complex64::from_polar(vm_by_id(br.from_bus), va_by_id(br.from_bus));
            let vt = Complex64::from_polar(vm_by_id(br.to_bus), va_by_id(br.to_bus));
            let y_ff = (ys + ysh) / (tap * tap.conj());
            let y_ft = -ys / tap.conj();
            let y_tf = -ys / tap;
            let y_tt = ys + ysh;
            let i_f = y_ff * vf + y_ft * vt;
            let i_t = y_tf * vf + y_tt * vt;
            (vf * i_f.conj(), vt * i_t.conj())
        })
        .collect()
}

pub fn parse(text: &str) -> NetworkCase<f64> {
    pflow::casefile::parse_case::<f64>(text).expect("test case parses").case
}

pub fn network(text: &str) -> Network<f64> {
    Network::new(&parse(text)).expect("test network builds")
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn inf_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// A random perturbed state around the case's stored profile.
pub fn random_state(net: &Network<f64>, rng: &mut TestRng, ang_span: f64, mag_span: f64) -> StateVector<f64> {
    let mut y = net.assemble_state(1.0);
    let n_ang = net.index().n_angle();
    for (k, v) in y.values.iter_mut().enumerate() {
        if k < n_ang {
            *v += rng.uniform(-ang_span, ang_span);
        } else {
            *v += rng.uniform(-mag_span, mag_span);
        }
    }
    y
}
