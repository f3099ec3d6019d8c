//! Experiment driver: side-by-side solver comparison and the
//! scaled-initial-angle robustness sweep.
//!
//! A sweep draws step factors alpha from (lo, hi], scales every non-slack
//! initial angle by each sample, runs the selected methods and aggregates
//! convergence statistics. Sampling is driven by an in-crate xorshift
//! generator so results are bit-reproducible for a given seed across
//! platforms, rust versions and thread counts; independent runs may be
//! distributed over worker threads because each one only reads shared
//! immutable inputs.

use std::io::{self, Write};
use std::time::Duration;

use crate::network::Network;
use crate::scalar::Scalar;
use crate::solvers::{self, Method, SolverConfig, Verdict};

/// Small deterministic RNG (xorshift64*), enough for alpha sampling.
#[derive(Debug, Clone)]
pub struct XorShift64 {
    state: u64,
}

impl XorShift64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed.max(1),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Sweep setup. `configs` carries one tuned [`SolverConfig`] per method to
/// run; alpha samples are shared across methods.
#[derive(Debug, Clone)]
pub struct SweepConfig<T> {
    pub configs: Vec<SolverConfig<T>>,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub samples: usize,
    pub seed: u64,
    /// evenly spaced grid instead of seeded uniform sampling
    pub grid: bool,
    /// worker threads; 1 = sequential
    pub jobs: usize,
}

impl<T: Scalar> SweepConfig<T> {
    pub fn new(configs: Vec<SolverConfig<T>>) -> Self {
        Self {
            configs,
            alpha_lo: 1.0,
            alpha_hi: 2.0,
            samples: 500,
            seed: 1,
            grid: false,
            jobs: 1,
        }
    }

    /// The alpha samples this config denotes, ascending. Random samples
    /// are drawn from (lo, hi]; the grid variant spaces them evenly over
    /// the same half-open interval.
    pub fn alphas(&self) -> Vec<f64> {
        assert!(self.samples >= 1, "sample count must be at least 1");
        assert!(self.alpha_hi >= self.alpha_lo, "empty alpha range");
        let width = self.alpha_hi - self.alpha_lo;
        let mut alphas: Vec<f64> = if self.grid {
            (0..self.samples)
                .map(|i| self.alpha_lo + width * (i + 1) as f64 / self.samples as f64)
                .collect()
        } else {
            let mut rng = XorShift64::new(self.seed);
            (0..self.samples)
                .map(|_| self.alpha_hi - rng.next_f64() * width)
                .collect()
        };
        alphas.sort_by(|a, b| a.partial_cmp(b).expect("finite alphas"));
        alphas
    }
}

/// Outcome of one (method, alpha) run.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub method: Method,
    pub alpha: f64,
    pub verdict: Verdict,
    pub outer: usize,
    pub inner_total: usize,
    pub wall_time: Duration,
}

/// Per-method aggregate over the sweep.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub converged: usize,
    pub total: usize,
    /// largest alpha with a converged run, if any
    pub max_alpha: Option<f64>,
    /// sampled alphas below `max_alpha` that did not converge
    pub stragglers: Vec<f64>,
}

impl MethodSummary {
    pub fn converged_pct(&self) -> f64 {
        100.0 * self.converged as f64 / self.total.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub alphas: Vec<f64>,
    pub runs: Vec<SweepRun>,
    pub summaries: Vec<MethodSummary>,
    pub seed: u64,
    /// worst within-sample disagreement between converged final states
    pub max_state_disagreement: f64,
}

/// Runs the sweep. Individual run failures are recorded, never fatal.
/// The run order in the result is alpha-major then method, independent
/// of `jobs`.
pub fn run_sweep<T: Scalar>(net: &Network<T>, sweep: &SweepConfig<T>) -> SweepResult {
    let alphas = sweep.alphas();
    let tasks: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|a| (0..sweep.configs.len()).map(move |m| (a, m)))
        .collect();

    let execute = |&(a, m): &(usize, usize)| -> (SweepRun, Option<Vec<T>>) {
        let cfg = &sweep.configs[m];
        let alpha = alphas[a];
        let y0 = net.assemble_state(T::of(alpha));
        let report = solvers::solve(net, &y0, cfg);
        let state = report
            .converged()
            .then(|| report.final_state.values.clone());
        (
            SweepRun {
                method: cfg.method,
                alpha,
                verdict: report.verdict,
                outer: report.outer_count,
                inner_total: report.inner_total,
                wall_time: report.wall_time,
            },
            state,
        )
    };

    let outcomes: Vec<(SweepRun, Option<Vec<T>>)> = if sweep.jobs <= 1 {
        tasks.iter().map(execute).collect()
    } else {
        parallel_map(&tasks, sweep.jobs, execute)
    };

    // worst disagreement between converged states within each alpha sample
    let n_methods = sweep.configs.len();
    let mut max_disagreement = 0.0f64;
    for chunk in outcomes.chunks(n_methods) {
        let states: Vec<&Vec<T>> = chunk.iter().filter_map(|(_, s)| s.as_ref()).collect();
        for i in 1..states.len() {
            let d = states[0]
                .iter()
                .zip(states[i])
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
            max_disagreement = max_disagreement.max(d.as_f64());
        }
    }

    let runs: Vec<SweepRun> = outcomes.into_iter().map(|(r, _)| r).collect();
    let summaries = sweep
        .configs
        .iter()
        .map(|cfg| summarize(cfg.method, &runs))
        .collect();
    SweepResult {
        alphas,
        runs,
        summaries,
        seed: sweep.seed,
        max_state_disagreement: max_disagreement,
    }
}

fn summarize(method: Method, runs: &[SweepRun]) -> MethodSummary {
    let mine: Vec<&SweepRun> = runs.iter().filter(|r| r.method == method).collect();
    let converged = mine.iter().filter(|r| r.verdict.is_converged()).count();
    let max_alpha = mine
        .iter()
        .filter(|r| r.verdict.is_converged())
        .map(|r| r.alpha)
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))));
    let stragglers = match max_alpha {
        None => Vec::new(),
        Some(max) => mine
            .iter()
            .filter(|r| !r.verdict.is_converged() && r.alpha < max)
            .map(|r| r.alpha)
            .collect(),
    };
    MethodSummary {
        method,
        converged,
        total: mine.len(),
        max_alpha,
        stragglers,
    }
}

/// Order-preserving parallel map over `items` with `jobs` workers.
fn parallel_map<I: Sync, O: Send>(
    items: &[I],
    jobs: usize,
    f: impl Fn(&I) -> O + Sync,
) -> Vec<O> {
    let mut out: Vec<Option<O>> = Vec::new();
    out.resize_with(items.len(), || None);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut out);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let o = f(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(o);
            });
        }
    });
    out.into_iter().map(|o| o.expect("all slots filled")).collect()
}

impl SweepResult {
    /// Per-run CSV: `method,alpha,verdict,outer,inner_total`, preceded by
    /// a `# seed=` comment. Timing is kept out so output is byte-stable.
    pub fn write_runs_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "method,alpha,verdict,outer,inner_total")?;
        for r in &self.runs {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.method.name(),
                r.alpha,
                r.verdict.label(),
                r.outer,
                r.inner_total
            )?;
        }
        Ok(())
    }

    /// Summary CSV: `method,converged_pct,max_alpha,total_runs`.
    pub fn write_summary_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "method,converged_pct,max_alpha,total_runs")?;
        for s in &self.summaries {
            let max_alpha = s
                .max_alpha
                .map(|a| a.to_string())
                .unwrap_or_else(|| "-".to_string());
            writeln!(
                w,
                "{},{:.2},{},{}",
                s.method.name(),
                s.converged_pct(),
                max_alpha,
                s.total
            )?;
        }
        Ok(())
    }
}

/// One row of a solver comparison.
#[derive(Debug, Clone)]
pub struct CompareRow<T> {
    pub method: Method,
    pub verdict: Verdict,
    pub outer: usize,
    pub inner_total: usize,
    pub wall_time: Duration,
    pub final_state: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Comparison<T> {
    pub rows: Vec<CompareRow<T>>,
    /// max pairwise distance between converged final states
    pub max_state_disagreement: T,
}

/// Runs each config from the same start and cross-checks the converged
/// states against each other.
pub fn compare<T: Scalar>(
    net: &Network<T>,
    angle_scale: T,
    configs: &[SolverConfig<T>],
) -> Comparison<T> {
    let y0 = net.assemble_state(angle_scale);
    let rows: Vec<CompareRow<T>> = configs
        .iter()
        .map(|cfg| {
            let report = solvers::solve(net, &y0, cfg);
            CompareRow {
                method: cfg.method,
                verdict: report.verdict,
                outer: report.outer_count,
                inner_total: report.inner_total,
                wall_time: report.wall_time,
                final_state: report.final_state.values,
            }
        })
        .collect();
    let converged: Vec<&CompareRow<T>> =
        rows.iter().filter(|r| r.verdict.is_converged()).collect();
    let mut max_disagreement = T::zero();
    for i in 1..converged.len() {
        let d = converged[0]
            .final_state
            .iter()
            .zip(&converged[i].final_state)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        max_disagreement = max_disagreement.max(d);
    }
    Comparison {
        rows,
        max_state_disagreement: max_disagreement,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rng_is_deterministic() {
        let mut a = XorShift64::new(42);
        let mut b = XorShift64::new(42);
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn random_alphas_stay_in_half_open_range() {
        let sweep = SweepConfig::<f64>::new(vec![SolverConfig::new(Method::Fem)]);
        for alpha in sweep.alphas() {
            assert!(alpha > 1.0 && alpha <= 2.0, "alpha = {alpha}");
        }
    }

    #[test]
    fn degenerate_range_yields_the_single_point() {
        let mut sweep = SweepConfig::<f64>::new(vec![SolverConfig::new(Method::Fem)]);
        sweep.alpha_hi = 1.0;
        sweep.samples = 3;
        assert_eq!(sweep.alphas(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn grid_alphas_are_even_and_include_hi() {
        let mut sweep = SweepConfig::<f64>::new(vec![SolverConfig::new(Method::Fem)]);
        sweep.grid = true;
        sweep.samples = 4;
        assert_eq!(sweep.alphas(), vec![1.25, 1.5, 1.75, 2.0]);
    }
}
