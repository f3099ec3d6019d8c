//! Network assembly: admittance matrix, power-flow residual, analytic
//! Jacobian, and the mapping between the reduced solver state and full
//! bus quantities.
//!
//! The solver state holds voltage angles at PV and PQ buses followed by
//! voltage magnitudes at PQ buses, both ordered by ascending bus id. The
//! residual pairs a P mismatch with every angle entry and a Q mismatch
//! with every magnitude entry, with the sign convention
//! `computed injection - scheduled injection`, which makes the Jacobian
//! the standard power-flow Jacobian with positive diagonal blocks near a
//! flat start. Slack P/Q and PV-bus Q are back-substituted after
//! convergence.

use std::sync::Arc;

use num_complex::Complex;
use thiserror::Error;

use crate::casefile::{BusKind, CaseError, NetworkCase};
use crate::linalg::SparseMatrix;
use crate::scalar::{norm_inf, Scalar};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    InvalidCase(#[from] CaseError),
}

/// Layout of the reduced solver state.
///
/// `angle_vars` lists the bus ids whose voltage angle is a state entry
/// (all PV and PQ buses), `mag_vars` the ids whose magnitude is one (PQ
/// buses). Angles come first in the state vector; both groups are ordered
/// by ascending bus id, so the layout is deterministic for a given case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateIndex {
    pub angle_vars: Vec<usize>,
    pub mag_vars: Vec<usize>,
}

impl StateIndex {
    /// Total state dimension.
    pub fn n(&self) -> usize {
        self.angle_vars.len() + self.mag_vars.len()
    }

    pub fn n_angle(&self) -> usize {
        self.angle_vars.len()
    }
}

/// The Newton-flow state y: angle entries in radians, magnitude entries
/// in per-unit, laid out per the shared [`StateIndex`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    pub values: Vec<T>,
    pub index: Arc<StateIndex>,
}

impl<T: Scalar> StateVector<T> {
    pub fn new(values: Vec<T>, index: Arc<StateIndex>) -> Self {
        assert_eq!(values.len(), index.n(), "state length must match index");
        Self { values, index }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Max-norm distance to another state.
    pub fn distance_inf(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Power-flow mismatch vector, ordered like the state.
#[derive(Debug, Clone)]
pub struct Residual<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> Residual<T> {
    pub fn max_norm(&self) -> T {
        norm_inf(&self.values)
    }
}

/// Sparse power-flow Jacobian evaluated at a particular state.
#[derive(Debug, Clone)]
pub struct Jacobian<T> {
    pub matrix: SparseMatrix<T>,
    pub evaluated_at: StateVector<T>,
}

/// Bus admittance matrix. Rows/columns follow ascending bus id.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix<T> {
    pub y_bus: SparseMatrix<Complex<T>>,
    /// bus id for each row/column position
    pub bus_ids: Vec<usize>,
}

/// Solved per-bus quantities, injections in per-unit.
#[derive(Debug, Clone)]
pub struct BusSolution<T> {
    pub rows: Vec<BusSolutionRow<T>>,
}

#[derive(Debug, Clone)]
pub struct BusSolutionRow<T> {
    pub bus: usize,
    pub v_mag: T,
    pub v_ang: T,
    pub p_inj: T,
    pub q_inj: T,
}

/// Knobs for admittance assembly, used to derive the fast-decoupled
/// B matrices from the same code path as the full Y-bus.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct YbusOptions {
    pub zero_bus_shunts: bool,
    pub zero_charging: bool,
    pub unit_taps: bool,
    pub zero_resistance: bool,
    pub zero_phase_shift: bool,
}

/// Builds the bus admittance matrix for a validated case: standard
/// pi-model with off-nominal taps and phase shifters on the from side,
/// shunts and charging on the diagonal. Out-of-service branches are
/// skipped.
pub fn build_admittance<T: Scalar>(
    case: &NetworkCase<T>,
) -> Result<AdmittanceMatrix<T>, NetworkError> {
    case.validate()?;
    let (bus_ids, pos) = bus_positions(case);
    let y_bus = assemble_ybus(case, &pos, YbusOptions::default());
    Ok(AdmittanceMatrix { y_bus, bus_ids })
}

fn bus_positions<T: Scalar>(case: &NetworkCase<T>) -> (Vec<usize>, BusPositionMap) {
    let mut ids: Vec<usize> = case.buses.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    let map = BusPositionMap { ids: ids.clone() };
    (ids, map)
}

pub(crate) struct BusPositionMap {
    ids: Vec<usize>,
}

impl BusPositionMap {
    fn position(&self, id: usize) -> usize {
        self.ids
            .binary_search(&id)
            .expect("bus id resolved during validation")
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

pub(crate) fn assemble_ybus<T: Scalar>(
    case: &NetworkCase<T>,
    pos: &BusPositionMap,
    opts: YbusOptions,
) -> SparseMatrix<Complex<T>> {
    let n = pos.len();
    let one = Complex::new(T::one(), T::zero());
    let half = T::of(0.5);
    // canonical branch order so duplicate-entry summation never depends
    // on the list order in the case file
    let mut ordered: Vec<&crate::casefile::Branch<T>> =
        case.branches.iter().filter(|b| b.in_service).collect();
    ordered.sort_by(|a, b| {
        let key = |br: &crate::casefile::Branch<T>| {
            (pos.position(br.from_bus), pos.position(br.to_bus))
        };
        key(a).cmp(&key(b)).then_with(|| {
            let nums = |br: &crate::casefile::Branch<T>| {
                [br.r, br.x, br.b_charging, br.tap_ratio, br.phase_shift]
            };
            let (na, nb) = (nums(a), nums(b));
            na.iter()
                .zip(nb.iter())
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                .find(|o| *o != std::cmp::Ordering::Equal)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut triplets = Vec::with_capacity(4 * ordered.len() + n);
    for br in ordered {
        let r = if opts.zero_resistance { T::zero() } else { br.r };
        let y_series = one / Complex::new(r, br.x);
        let b_c = if opts.zero_charging {
            T::zero()
        } else {
            br.b_charging
        };
        let ratio = if opts.unit_taps { T::one() } else { br.tap_ratio };
        let shift = if opts.zero_phase_shift {
            T::zero()
        } else {
            br.phase_shift
        };
        let tap = Complex::from_polar(ratio, shift);

        let y_tt = y_series + Complex::new(T::zero(), b_c * half);
        let y_ff = y_tt / (tap * tap.conj());
        let y_ft = -y_series / tap.conj();
        let y_tf = -y_series / tap;

        let f = pos.position(br.from_bus);
        let t = pos.position(br.to_bus);
        triplets.push((f, f, y_ff));
        triplets.push((f, t, y_ft));
        triplets.push((t, f, y_tf));
        triplets.push((t, t, y_tt));
    }
    // push every diagonal so the pattern always covers it; the B-matrix
    // variants zero the reactive shunt part only
    for bus in &case.buses {
        let b = if opts.zero_bus_shunts {
            T::zero()
        } else {
            bus.b_shunt
        };
        let p = pos.position(bus.id);
        triplets.push((p, p, Complex::new(bus.g_shunt, b)));
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("positions in range")
}

/// Assembled model: admittance matrix, scheduled injections, state layout
/// and the cached Jacobian sparsity pattern for one case.
///
/// Construction validates and copies the case; all methods are pure, so a
/// `Network` can be shared freely across threads.
pub struct Network<T> {
    case: NetworkCase<T>,
    bus_ids: Vec<usize>,
    ybus: SparseMatrix<Complex<T>>,
    index: Arc<StateIndex>,
    /// per position: scheduled P/Q injection (generation minus load)
    sched_p: Vec<T>,
    sched_q: Vec<T>,
    /// voltage template for expanding a state to full bus arrays
    base_vm: Vec<T>,
    base_va: Vec<T>,
    /// state column of each bus position's angle / magnitude, if any
    angle_col: Vec<Option<usize>>,
    mag_col: Vec<Option<usize>>,
    /// bus position behind each state row
    row_bus: Vec<usize>,
    /// cached Jacobian sparsity pattern
    jac_pattern: SparseMatrix<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(case: &NetworkCase<T>) -> Result<Self, NetworkError> {
        case.validate()?;
        let (bus_ids, pos) = bus_positions(case);
        let n_bus = bus_ids.len();
        let ybus = assemble_ybus(case, &pos, YbusOptions::default());

        let mut kinds = vec![BusKind::Pq; n_bus];
        let mut sched_p = vec![T::zero(); n_bus];
        let mut sched_q = vec![T::zero(); n_bus];
        let mut base_vm = vec![T::one(); n_bus];
        let mut base_va = vec![T::zero(); n_bus];
        for bus in &case.buses {
            let p = pos.position(bus.id);
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
            let p = pos.position(gen.bus);
            sched_p[p] += gen.p_gen;
            sched_q[p] += gen.q_gen;
            // PV and slack magnitudes are pinned to the setpoint
            if kinds[p] != BusKind::Pq {
                base_vm[p] = gen.v_set;
            }
        }

        let mut angle_vars = Vec::new();
        let mut mag_vars = Vec::new();
        for (p, &id) in bus_ids.iter().enumerate() {
            match kinds[p] {
                BusKind::Slack => {}
                BusKind::Pv => angle_vars.push(id),
                BusKind::Pq => {
                    angle_vars.push(id);
                    mag_vars.push(id);
                }
            }
        }
        let index = Arc::new(StateIndex {
            angle_vars,
            mag_vars,
        });

        let mut angle_col = vec![None; n_bus];
        let mut mag_col = vec![None; n_bus];
        let mut row_bus = Vec::with_capacity(index.n());
        for (k, &id) in index.angle_vars.iter().enumerate() {
            let p = pos.position(id);
            angle_col[p] = Some(k);
            row_bus.push(p);
        }
        for (k, &id) in index.mag_vars.iter().enumerate() {
            let p = pos.position(id);
            mag_col[p] = Some(index.n_angle() + k);
            row_bus.push(p);
        }

        let mut net = Self {
            case: case.clone(),
            bus_ids,
            ybus,
            index,
            sched_p,
            sched_q,
            base_vm,
            base_va,
            angle_col,
            mag_col,
            row_bus,
            jac_pattern: SparseMatrix::zero(0, 0),
        };
        net.jac_pattern = net.build_jacobian_pattern();
        Ok(net)
    }

    pub fn case(&self) -> &NetworkCase<T> {
        &self.case
    }

    pub fn n_bus(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn bus_ids(&self) -> &[usize] {
        &self.bus_ids
    }

    pub fn index(&self) -> &Arc<StateIndex> {
        &self.index
    }

    pub fn ybus(&self) -> &SparseMatrix<Complex<T>> {
        &self.ybus
    }

    pub(crate) fn position_map(&self) -> BusPositionMap {
        BusPositionMap {
            ids: self.bus_ids.clone(),
        }
    }

    /// State columns of all angle variables, as bus positions.
    pub(crate) fn angle_positions(&self) -> Vec<usize> {
        self.row_bus[..self.index.n_angle()].to_vec()
    }

    pub(crate) fn mag_positions(&self) -> Vec<usize> {
        self.row_bus[self.index.n_angle()..].to_vec()
    }

    /// Initial state from the case's stored voltage profile with every
    /// non-slack angle multiplied by `angle_scale`. Scale 1 reproduces the
    /// stored start.
    pub fn assemble_state(&self, angle_scale: T) -> StateVector<T> {
        assert!(angle_scale > T::zero(), "angle_scale must be positive");
        let n_ang = self.index.n_angle();
        let mut values = Vec::with_capacity(self.index.n());
        for &p in &self.row_bus[..n_ang] {
            values.push(self.base_va[p] * angle_scale);
        }
        for &p in &self.row_bus[n_ang..] {
            values.push(self.base_vm[p]);
        }
        StateVector::new(values, Arc::clone(&self.index))
    }

    /// Expands a state into full per-bus (magnitude, angle) arrays,
    /// filling slack and PV quantities from the case.
    pub fn expand(&self, y: &StateVector<T>) -> (Vec<T>, Vec<T>) {
        assert_eq!(y.len(), self.index.n(), "state dimension mismatch");
        let mut vm = self.base_vm.clone();
        let mut va = self.base_va.clone();
        let n_ang = self.index.n_angle();
        for (k, &p) in self.row_bus[..n_ang].iter().enumerate() {
            va[p] = y.values[k];
        }
        for (k, &p) in self.row_bus[n_ang..].iter().enumerate() {
            vm[p] = y.values[n_ang + k];
        }
        (vm, va)
    }

    /// Complex power injection at every bus for the given polar voltages.
    pub fn injections(&self, vm: &[T], va: &[T]) -> Vec<Complex<T>> {
        let v: Vec<Complex<T>> = vm
            .iter()
            .zip(va)
            .map(|(&m, &a)| Complex::from_polar(m, a))
            .collect();
        (0..self.n_bus())
            .map(|i| {
                let mut s = Complex::new(T::zero(), T::zero());
                for (j, yij) in self.ybus.row(i) {
                    s += v[i] * (yij * v[j]).conj();
                }
                s
            })
            .collect()
    }

    /// Power-flow residual at `y`: computed minus scheduled injection,
    /// P rows for the angle variables then Q rows for the magnitudes.
    pub fn residual(&self, y: &StateVector<T>) -> Residual<T> {
        let (vm, va) = self.expand(y);
        self.residual_polar(&vm, &va)
    }

    /// Residual from explicit per-bus polar voltages (full arrays).
    pub fn residual_polar(&self, vm: &[T], va: &[T]) -> Residual<T> {
        assert_eq!(vm.len(), self.n_bus(), "vm length mismatch");
        assert_eq!(va.len(), self.n_bus(), "va length mismatch");
        let s = self.injections(vm, va);
        let n_ang = self.index.n_angle();
        let mut values = Vec::with_capacity(self.index.n());
        for &p in &self.row_bus[..n_ang] {
            values.push(s[p].re - self.sched_p[p]);
        }
        for &p in &self.row_bus[n_ang..] {
            values.push(s[p].im - self.sched_q[p]);
        }
        Residual { values }
    }

    fn build_jacobian_pattern(&self) -> SparseMatrix<T> {
        let n = self.index.n();
        let mut triplets = Vec::new();
        for (row, &p) in self.row_bus.iter().enumerate() {
            for pass in 0..2 {
                for (j, _) in self.ybus.row(p) {
                    let col = if pass == 0 {
                        self.angle_col[j]
                    } else {
                        self.mag_col[j]
                    };
                    if let Some(col) = col {
                        triplets.push((row, col, T::zero()));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(n, n, triplets).expect("pattern in range")
    }

    /// Analytic Jacobian of the residual at `y`, in state ordering.
    ///
    /// The sparsity pattern is fixed per case and cached; evaluation fills
    /// the same slots in the same deterministic order every time, so the
    /// result is independent of branch list order.
    pub fn jacobian(&self, y: &StateVector<T>) -> Jacobian<T> {
        let (vm, va) = self.expand(y);
        let v: Vec<Complex<T>> = vm
            .iter()
            .zip(&va)
            .map(|(&m, &a)| Complex::from_polar(m, a))
            .collect();

        let mut matrix = self.jac_pattern.clone();
        let n_ang = self.index.n_angle();
        // scratch: e_ij = V_i * conj(Y_ij V_j) for the current row's bus
        let mut row_e: Vec<(usize, Complex<T>)> = Vec::new();
        // entries are generated in exactly the order the cached pattern
        // was built in, so a flat sequential fill lines up with it
        let mut values: Vec<T> = Vec::with_capacity(matrix.nnz());

        for (row, &p) in self.row_bus.iter().enumerate() {
            row_e.clear();
            let mut s = Complex::new(T::zero(), T::zero());
            for (j, yij) in self.ybus.row(p) {
                let e = v[p] * (yij * v[j]).conj();
                s += e;
                row_e.push((j, e));
            }
            let is_p_row = row < n_ang;
            for &(j, e) in &row_e {
                if self.angle_col[j].is_some() {
                    let val = if is_p_row {
                        if j == p {
                            -s.im + e.im
                        } else {
                            e.im
                        }
                    } else if j == p {
                        s.re - e.re
                    } else {
                        -e.re
                    };
                    values.push(val);
                }
            }
            for &(j, e) in &row_e {
                if self.mag_col[j].is_some() {
                    let val = if is_p_row {
                        if j == p {
                            (s.re + e.re) / vm[p]
                        } else {
                            e.re / vm[j]
                        }
                    } else if j == p {
                        (s.im + e.im) / vm[p]
                    } else {
                        e.im / vm[j]
                    };
                    values.push(val);
                }
            }
        }
        assert_eq!(values.len(), matrix.nnz(), "jacobian fill must match pattern");
        matrix.values_mut().copy_from_slice(&values);
        Jacobian {
            matrix,
            evaluated_at: y.clone(),
        }
    }

    /// Back-computes slack P/Q and PV-bus Q from a converged state and
    /// returns the full per-bus solution, rows in ascending bus id order.
    pub fn back_substitute(&self, y: &StateVector<T>) -> BusSolution<T> {
        let (vm, va) = self.expand(y);
        let s = self.injections(&vm, &va);
        let rows = (0..self.n_bus())
            .map(|p| BusSolutionRow {
                bus: self.bus_ids[p],
                v_mag: vm[p],
                v_ang: va[p],
                p_inj: s[p].re,
                q_inj: s[p].im,
            })
            .collect();
        BusSolution { rows }
    }

}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casefile::{Branch, Bus, Generator};

    fn two_bus_case(r: f64, x: f64, p_load: f64, q_load: f64) -> NetworkCase<f64> {
        NetworkCase {
            name: "two_bus".to_string(),
            base_mva: 100.0,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Slack,
                    p_load: 0.0,
                    q_load: 0.0,
                    g_shunt: 0.0,
                    b_shunt: 0.0,
                    v_mag_init: 1.0,
                    v_ang_init: 0.0,
                    v_base_kv: 230.0,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Pq,
                    p_load,
                    q_load,
                    g_shunt: 0.0,
                    b_shunt: 0.0,
                    v_mag_init: 1.0,
                    v_ang_init: 0.0,
                    v_base_kv: 230.0,
                },
            ],
            branches: vec![Branch {
                from_bus: 1,
                to_bus: 2,
                r,
                x,
                b_charging: 0.0,
                tap_ratio: 1.0,
                phase_shift: 0.0,
                in_service: true,
            }],
            generators: vec![Generator {
                bus: 1,
                p_gen: 0.0,
                q_gen: 0.0,
                v_set: 1.0,
                in_service: true,
            }],
        }
    }

    #[test]
    fn lossless_two_bus_admittance() {
        let case = two_bus_case(0.0, 0.1, 0.5, 0.1);
        let adm = build_admittance(&case).unwrap();
        let y = &adm.y_bus;
        let check = |r: usize, c: usize, re: f64, im: f64| {
            let v = y.get(r, c).unwrap();
            assert!(
                (v - Complex::new(re, im)).norm() < 1e-12,
                "Y[{r}][{c}] = {v}"
            );
        };
        check(0, 0, 0.0, -10.0);
        check(0, 1, 0.0, 10.0);
        check(1, 0, 0.0, 10.0);
        check(1, 1, 0.0, -10.0);
    }

    #[test]
    fn isolated_bus_has_zero_row_and_column() {
        let mut case = two_bus_case(0.0, 0.1, 0.0, 0.0);
        case.buses.push(Bus {
            id: 3,
            kind: BusKind::Pq,
            p_load: 0.0,
            q_load: 0.0,
            g_shunt: 0.0,
            b_shunt: 0.0,
            v_mag_init: 1.0,
            v_ang_init: 0.0,
            v_base_kv: 230.0,
        });
        let adm = build_admittance(&case).unwrap();
        for k in 0..3 {
            assert_eq!(adm.y_bus.get(2, k).unwrap_or(Complex::new(0.0, 0.0)).norm(), 0.0);
            assert_eq!(adm.y_bus.get(k, 2).unwrap_or(Complex::new(0.0, 0.0)).norm(), 0.0);
        }
    }

    #[test]
    fn flat_start_residual_equals_scheduled_load() {
        let case = two_bus_case(0.0, 0.1, 0.5, 0.1);
        let net = Network::new(&case).unwrap();
        let y = net.assemble_state(1.0);
        let g = net.residual(&y);
        assert_eq!(g.values.len(), 2);
        assert!((g.values[0] - 0.5).abs() < 1e-14);
        assert!((g.values[1] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn state_index_skips_slack_and_orders_by_id() {
        let case = two_bus_case(0.0, 0.1, 0.5, 0.1);
        let net = Network::new(&case).unwrap();
        assert_eq!(net.index().angle_vars, vec![2]);
        assert_eq!(net.index().mag_vars, vec![2]);
        assert_eq!(net.index().n(), 2);
    }

    #[test]
    fn angle_scale_multiplies_angle_entries_only() {
        let mut case = two_bus_case(0.01, 0.1, 0.5, 0.1);
        case.buses[1].v_ang_init = -0.2;
        case.buses[1].v_mag_init = 0.98;
        let net = Network::new(&case).unwrap();
        let y1 = net.assemble_state(1.0);
        let y135 = net.assemble_state(1.35);
        assert_eq!(y135.values[0], y1.values[0] * 1.35);
        assert_eq!(y135.values[1], y1.values[1]);
    }

    #[test]
    fn zero_angles_are_a_fixed_point_of_scaling() {
        let case = two_bus_case(0.0, 0.1, 0.5, 0.1);
        let net = Network::new(&case).unwrap();
        assert_eq!(
            net.assemble_state(1.0).values,
            net.assemble_state(7.5).values
        );
    }
}
