//! Analysis of the Markov chain induced by a fixed policy: recurrent-class
//! detection, stationary distribution, and the steady-state metrics.

use std::io::Write;

use crate::error::Error;
use crate::model::ScaledConfig;
use crate::solver::Policy;
use crate::statespace::{Action, StateId, StateSpace, TransitionKernel};

/// Row-stochastic sparse matrix over state ids under a fixed policy.
#[derive(Debug, Clone)]
pub struct InducedChain {
    num_states: usize,
    row_start: Vec<u32>,
    next: Vec<u32>,
    prob: Vec<f64>,
}

impl InducedChain {
    /// Builds a chain directly from per-state rows. Rows must be
    /// distributions; mainly useful for tests and small hand-built chains.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut row_start = Vec::with_capacity(rows.len() + 1);
        let mut next = Vec::new();
        let mut prob = Vec::new();
        row_start.push(0u32);
        for row in &rows {
            for &(n, p) in row {
                next.push(n);
                prob.push(p);
            }
            row_start.push(next.len() as u32);
        }
        InducedChain {
            num_states: rows.len(),
            row_start,
            next,
            prob,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn row(&self, state: usize) -> (&[u32], &[f64]) {
        let lo = self.row_start[state] as usize;
        let hi = self.row_start[state + 1] as usize;
        (&self.next[lo..hi], &self.prob[lo..hi])
    }
}

/// Fixes the policy's action in every kernel row.
pub fn induce_chain(kernel: &TransitionKernel, policy: &Policy) -> Result<InducedChain, Error> {
    let n = kernel.num_states();
    let mut row_start = Vec::with_capacity(n + 1);
    let mut next = Vec::new();
    let mut prob = Vec::new();
    row_start.push(0u32);
    for state in 0..n {
        let action = policy.action(StateId(state as u32));
        let (nexts, probs) = kernel.row_by_index(state, action.index());
        if nexts.is_empty() {
            return Err(Error::InfeasiblePolicyAction {
                state: format!("{state}"),
            });
        }
        next.extend_from_slice(nexts);
        prob.extend_from_slice(probs);
        row_start.push(next.len() as u32);
    }
    Ok(InducedChain {
        num_states: n,
        row_start,
        next,
        prob,
    })
}

/// The unique closed communicating class reachable from `start`, found by
/// Tarjan's strongly-connected-component analysis of the reachable
/// subgraph. More than one closed class is a structural error: it
/// contradicts the unichain premise the solver relies on.
pub fn recurrent_class(chain: &InducedChain, start: StateId) -> Result<Vec<u32>, Error> {
    let sccs = reachable_sccs(chain, start.0);

    // Component index per state, for constant-time closure checks.
    let mut component = vec![u32::MAX; chain.num_states()];
    for (ci, scc) in sccs.iter().enumerate() {
        for &s in scc {
            component[s as usize] = ci as u32;
        }
    }

    let mut closed: Vec<&Vec<u32>> = Vec::new();
    for (ci, scc) in sccs.iter().enumerate() {
        let is_closed = scc.iter().all(|&s| {
            let (nexts, _) = chain.row(s as usize);
            nexts.iter().all(|&n| component[n as usize] == ci as u32)
        });
        if is_closed {
            closed.push(scc);
        }
    }

    match closed.len() {
        1 => {
            let mut class = closed[0].clone();
            class.sort_unstable();
            Ok(class)
        }
        n => Err(Error::MultipleRecurrentClasses { count: n }),
    }
}

/// Iterative Tarjan over the subgraph reachable from `start`.
fn reachable_sccs(chain: &InducedChain, start: u32) -> Vec<Vec<u32>> {
    const UNVISITED: u32 = u32::MAX;
    let n = chain.num_states();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut sccs: Vec<Vec<u32>> = Vec::new();
    let mut counter = 0u32;

    // Call frames: (node, next successor offset to examine).
    let mut frames: Vec<(u32, usize)> = vec![(start, 0)];
    while let Some(&mut (v, ref mut succ_idx)) = frames.last_mut() {
        let vi = v as usize;
        if *succ_idx == 0 {
            index[vi] = counter;
            low[vi] = counter;
            counter += 1;
            stack.push(v);
            on_stack[vi] = true;
        }
        let (nexts, _) = chain.row(vi);
        if *succ_idx < nexts.len() {
            let w = nexts[*succ_idx];
            *succ_idx += 1;
            let wi = w as usize;
            if index[wi] == UNVISITED {
                frames.push((w, 0));
            } else if on_stack[wi] {
                low[vi] = low[vi].min(index[wi]);
            }
        } else {
            frames.pop();
            if let Some(&mut (parent, _)) = frames.last_mut() {
                let pi = parent as usize;
                low[pi] = low[pi].min(low[vi]);
            }
            if low[vi] == index[vi] {
                let mut scc = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w as usize] = false;
                    scc.push(w);
                    if w == v {
                        break;
                    }
                }
                sccs.push(scc);
            }
        }
    }
    sccs
}

/// Period of a strongly connected subchain: gcd of `level(u) + 1 - level(v)`
/// over all edges inside the class, with levels from a BFS tree.
fn class_period(chain: &InducedChain, class: &[u32], local: &[u32]) -> u64 {
    const UNSET: i64 = i64::MIN;
    let mut level = vec![UNSET; class.len()];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    let mut g: u64 = 0;
    while let Some(u) = queue.pop_front() {
        let (nexts, _) = chain.row(class[u] as usize);
        for &w in nexts {
            let wl = local[w as usize] as usize;
            if level[wl] == UNSET {
                level[wl] = level[u] + 1;
                queue.push_back(wl);
            } else {
                let d = (level[u] + 1 - level[wl]).unsigned_abs();
                g = gcd(g, d);
            }
        }
    }
    g.max(1)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary distribution over a closed communicating class.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    /// Class members, sorted ascending.
    pub ids: Vec<u32>,
    /// Probability per member, aligned with `ids`.
    pub probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn prob_of(&self, id: u32) -> f64 {
        match self.ids.binary_search(&id) {
            Ok(pos) => self.probs[pos],
            Err(_) => 0.0,
        }
    }

    /// Expectation of a per-state function under the distribution.
    pub fn expect(&self, mut f: impl FnMut(u32) -> f64) -> f64 {
        self.ids
            .iter()
            .zip(&self.probs)
            .map(|(&id, &p)| p * f(id))
            .sum()
    }
}

/// Classes at or below this size are solved directly (GTH elimination);
/// larger classes use power iteration.
const DIRECT_SOLVE_LIMIT: usize = 600;
const RESIDUAL_TARGET: f64 = 1e-12;
const POWER_MAX_ITER: usize = 400_000;

/// Solves `pi P = pi` on the class, which must be a single closed
/// aperiodic communicating class; a periodic class is rejected because its
/// slot-wise limiting probabilities do not exist. Uses
/// Grassmann-Taksar-Heyman elimination for small classes (componentwise
/// accurate, safe for probabilities down at 1e-10 and below) and power
/// iteration for large ones.
pub fn steady_state(
    chain: &InducedChain,
    class: &[u32],
) -> Result<StationaryDistribution, Error> {
    let local = class_local_map(chain, class)?;
    let period = class_period(chain, class, &local);
    if period > 1 {
        return Err(Error::PeriodicChain { period });
    }
    stationary_of_class(chain, class, &local)
}

/// Stationary distribution of the class without the aperiodicity gate.
///
/// For a periodic class this is the time-average (Cesaro) occupation, the
/// measure that long-run average rewards and ergodic averages are taken
/// against; it coincides with [`steady_state`] whenever the class is
/// aperiodic.
pub fn cesaro_distribution(
    chain: &InducedChain,
    class: &[u32],
) -> Result<StationaryDistribution, Error> {
    let local = class_local_map(chain, class)?;
    stationary_of_class(chain, class, &local)
}

fn class_local_map(chain: &InducedChain, class: &[u32]) -> Result<Vec<u32>, Error> {
    assert!(!class.is_empty(), "empty recurrent class");
    let mut local = vec![u32::MAX; chain.num_states()];
    for (i, &id) in class.iter().enumerate() {
        local[id as usize] = i as u32;
    }
    for &id in class {
        let (nexts, _) = chain.row(id as usize);
        for &n in nexts {
            if local[n as usize] == u32::MAX {
                // The class is not closed; treat as a structural error.
                return Err(Error::MultipleRecurrentClasses { count: 0 });
            }
        }
    }
    Ok(local)
}

fn stationary_of_class(
    chain: &InducedChain,
    class: &[u32],
    local: &[u32],
) -> Result<StationaryDistribution, Error> {
    let mut probs = if class.len() <= DIRECT_SOLVE_LIMIT {
        gth(chain, class, local)?
    } else {
        power_iteration(chain, class, local)?
    };

    normalize_exact(&mut probs);

    let residual = residual_inf(chain, class, local, &probs);
    if residual > RESIDUAL_TARGET {
        return Err(Error::StationaryStalled {
            residual,
            iterations: 0,
            target: RESIDUAL_TARGET,
        });
    }

    Ok(StationaryDistribution {
        ids: class.to_vec(),
        probs,
    })
}

/// Grassmann-Taksar-Heyman elimination: no subtractions, so every entry of
/// the result carries full relative accuracy.
fn gth(chain: &InducedChain, class: &[u32], local: &[u32]) -> Result<Vec<f64>, Error> {
    let k = class.len();
    let mut a = vec![0.0f64; k * k];
    for (i, &id) in class.iter().enumerate() {
        let (nexts, probs) = chain.row(id as usize);
        for (&n, &p) in nexts.iter().zip(probs) {
            a[i * k + local[n as usize] as usize] += p;
        }
    }
    for n in (1..k).rev() {
        let s: f64 = a[n * k..n * k + n].iter().sum();
        if s <= 0.0 {
            return Err(Error::SingularSystem);
        }
        for i in 0..n {
            a[i * k + n] /= s;
        }
        for i in 0..n {
            let f = a[i * k + n];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[i * k + j] += f * a[n * k + j];
            }
        }
    }
    let mut pi = vec![0.0f64; k];
    pi[0] = 1.0;
    for n in 1..k {
        let mut acc = 0.0;
        for i in 0..n {
            acc += pi[i] * a[i * k + n];
        }
        pi[n] = acc;
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    Ok(pi)
}

/// Power iteration on the lazy chain `(I + P) / 2`, which shares the
/// stationary vector of `P` but is aperiodic regardless of the class
/// structure, so the iteration always converges on an irreducible class.
fn power_iteration(
    chain: &InducedChain,
    class: &[u32],
    local: &[u32],
) -> Result<Vec<f64>, Error> {
    let k = class.len();
    let mut x = vec![1.0 / k as f64; k];
    let mut y = vec![0.0f64; k];
    let mut iterations = 0;
    loop {
        // y = x P on the restricted chain.
        for v in y.iter_mut() {
            *v = 0.0;
        }
        for (i, &id) in class.iter().enumerate() {
            let xi = x[i];
            let (nexts, probs) = chain.row(id as usize);
            for (&n, &p) in nexts.iter().zip(probs) {
                y[local[n as usize] as usize] += xi * p;
            }
        }
        iterations += 1;
        if iterations % 16 == 0 || iterations >= POWER_MAX_ITER {
            let residual = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if residual < RESIDUAL_TARGET * 0.1 {
                return Ok(x);
            }
            if iterations >= POWER_MAX_ITER {
                return Err(Error::StationaryStalled {
                    residual,
                    iterations,
                    target: RESIDUAL_TARGET,
                });
            }
        }
        // Lazy mix and renormalize.
        let mut sum = 0.0;
        for (xi, &yi) in x.iter_mut().zip(&y) {
            *xi = 0.5 * (*xi + yi);
            sum += *xi;
        }
        for xi in x.iter_mut() {
            *xi /= sum;
        }
    }
}

/// Tightens the normalization so the probabilities sum to exactly 1.0,
/// which keeps degenerate expectations (all mass on one age) exact.
fn normalize_exact(probs: &mut [f64]) {
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    let sum: f64 = probs.iter().sum();
    if sum != 1.0 {
        let (argmax, _) = probs
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        probs[argmax] += 1.0 - sum;
    }
}

fn residual_inf(chain: &InducedChain, class: &[u32], local: &[u32], probs: &[f64]) -> f64 {
    let mut y = vec![0.0f64; class.len()];
    for (i, &id) in class.iter().enumerate() {
        let (nexts, row_probs) = chain.row(id as usize);
        for (&n, &p) in nexts.iter().zip(row_probs) {
            y[local[n as usize] as usize] += probs[i] * p;
        }
    }
    y.iter()
        .zip(probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
}

/// Steady-state performance of a policy, in config energy units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Long-run average age, at least 1.
    pub avg_age: f64,
    /// Steady-state probability that the age sits at the cap.
    pub peak_hit_prob: f64,
    /// Average transmit power per slot (0 while idle), config units.
    pub avg_tx_power: f64,
    /// Average battery level, config units.
    pub avg_battery: f64,
}

/// Evaluates all four steady-state metrics from a stationary distribution.
pub fn metrics(
    dist: &StationaryDistribution,
    space: &StateSpace,
    policy: &Policy,
    cfg: &ScaledConfig,
) -> Metrics {
    let a_max = space.a_max();
    let mut avg_age = 0.0;
    let mut peak = 0.0;
    let mut tx_power = 0.0;
    let mut battery = 0.0;
    for (&id, &p) in dist.ids.iter().zip(&dist.probs) {
        let s = space.decode(StateId(id));
        avg_age += p * f64::from(s.age);
        if s.age == a_max {
            peak += p;
        }
        battery += p * f64::from(s.battery);
        if let Action::Tx { mode } = policy.action(StateId(id)) {
            tx_power += p * f64::from(cfg.modes()[mode as usize].power);
        }
    }
    Metrics {
        avg_age,
        peak_hit_prob: peak,
        avg_tx_power: cfg.descale_energy(tx_power),
        avg_battery: cfg.descale_energy(battery),
    }
}

/// Long-run average reward of the stationary distribution.
pub fn average_reward(dist: &StationaryDistribution, rewards: &[f64]) -> f64 {
    dist.expect(|id| rewards[id as usize])
}

pub const METRICS_CSV_HEADER: &str =
    "objective,alpha,b_max,p_rec,n_rec,avg_age,peak_hit_prob,avg_tx_power,avg_battery,gain,iterations";

/// One metrics row in the canonical CSV layout, without a trailing newline.
#[allow(clippy::too_many_arguments)]
pub fn metrics_csv_row(
    objective: &str,
    alpha: Option<f64>,
    b_max: i64,
    p_rec: f64,
    n_rec: i64,
    m: &Metrics,
    gain: f64,
    iterations: usize,
) -> String {
    let alpha = alpha.map(|a| a.to_string()).unwrap_or_default();
    format!(
        "{objective},{alpha},{b_max},{p_rec},{n_rec},{},{},{},{},{gain},{iterations}",
        m.avg_age, m.peak_hit_prob, m.avg_tx_power, m.avg_battery
    )
}

/// Writes one canonical metrics row.
#[allow(clippy::too_many_arguments)]
pub fn write_metrics_row(
    w: &mut impl Write,
    objective: &str,
    alpha: Option<f64>,
    b_max: i64,
    p_rec: f64,
    n_rec: i64,
    m: &Metrics,
    gain: f64,
    iterations: usize,
) -> std::io::Result<()> {
    writeln!(
        w,
        "{}",
        metrics_csv_row(objective, alpha, b_max, p_rec, n_rec, m, gain, iterations)
    )
}
