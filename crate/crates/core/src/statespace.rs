//! State enumeration, feasible actions, and the exact transition kernel.
//!
//! A state is the four-tuple (age, system mode, harvester state, battery).
//! The system mode tracks where the sensor sits relative to its last
//! transmission: just transmitted, `j` idle slots into the recovery window,
//! or long idle (window exhausted or never opened). The full Cartesian
//! product is enumerated; combinations that no trajectory can reach are
//! pruned later by recurrent-class analysis, not here.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::error::Error;
use crate::model::ScaledConfig;

/// Position of the sensor relative to its most recent transmission.
///
/// Mode indices are 0-based into `ScaledConfig::modes`; text formats render
/// them 1-based. `idle_slots` counts consecutive idle slots since the
/// transmission and ranges over `1..=n_rec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemMode {
    LongIdle,
    JustTx { mode: u8 },
    PostTx { mode: u8, idle_slots: u8 },
}

impl SystemMode {
    /// Compact token used in policy files and trace CSV: `0` for long idle,
    /// `m` right after a mode-`m` transmission, `m^j` after `j` idle slots
    /// (all 1-based).
    pub fn token(&self) -> String {
        match self {
            SystemMode::LongIdle => "0".to_string(),
            SystemMode::JustTx { mode } => format!("{}", mode + 1),
            SystemMode::PostTx { mode, idle_slots } => format!("{}^{}", mode + 1, idle_slots),
        }
    }

    pub fn parse_token(tok: &str) -> Option<SystemMode> {
        if tok == "0" {
            return Some(SystemMode::LongIdle);
        }
        if let Some((m, j)) = tok.split_once('^') {
            let m: u8 = m.parse().ok()?;
            let j: u8 = j.parse().ok()?;
            if m == 0 || j == 0 {
                return None;
            }
            return Some(SystemMode::PostTx {
                mode: m - 1,
                idle_slots: j,
            });
        }
        let m: u8 = tok.parse().ok()?;
        if m == 0 {
            return None;
        }
        Some(SystemMode::JustTx { mode: m - 1 })
    }
}

impl fmt::Display for SystemMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// One system state: age in `1..=a_max`, system mode, harvester state
/// (0-based), battery level in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub age: u32,
    pub mode: SystemMode,
    pub harvester: u8,
    pub battery: u32,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(age={}, mode={}, harvester={}, battery={})",
            self.age,
            self.mode,
            self.harvester + 1,
            self.battery
        )
    }
}

/// Dense index of a state; bijective with `State` via mixed-radix encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u32);

/// Stay idle or transmit with one of the configured modes (0-based index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Idle,
    Tx { mode: u8 },
}

impl Action {
    /// Dense action index: 0 is idle, `m + 1` transmits mode `m`.
    pub fn index(&self) -> usize {
        match self {
            Action::Idle => 0,
            Action::Tx { mode } => *mode as usize + 1,
        }
    }

    pub fn from_index(idx: usize) -> Action {
        if idx == 0 {
            Action::Idle
        } else {
            Action::Tx {
                mode: (idx - 1) as u8,
            }
        }
    }

    /// Token used in policy files and trace CSV: `0` or the 1-based mode.
    pub fn token(&self) -> String {
        self.index().to_string()
    }

    pub fn parse_token(tok: &str) -> Option<Action> {
        let idx: usize = tok.parse().ok()?;
        Some(Action::from_index(idx))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

pub const DEFAULT_STATE_CAP: u64 = 10_000_000;

/// The enumerated state space: dimensions plus the `State` <-> `StateId`
/// bijection.
#[derive(Debug, Clone)]
pub struct StateSpace {
    a_max: u32,
    num_modes: u32,
    n_rec: u32,
    num_harvesters: u32,
    battery_levels: u32,
    mode_count: u32,
    len: usize,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn a_max(&self) -> u32 {
        self.a_max
    }

    /// Number of system modes `1 + M(1 + n_rec)`.
    pub fn mode_count(&self) -> u32 {
        self.mode_count
    }

    pub fn num_actions(&self) -> usize {
        self.num_modes as usize + 1
    }

    fn mode_index(&self, mode: SystemMode) -> u32 {
        match mode {
            SystemMode::LongIdle => 0,
            SystemMode::JustTx { mode } => {
                debug_assert!((mode as u32) < self.num_modes);
                1 + mode as u32
            }
            SystemMode::PostTx { mode, idle_slots } => {
                debug_assert!((mode as u32) < self.num_modes);
                debug_assert!(idle_slots >= 1 && (idle_slots as u32) <= self.n_rec);
                1 + self.num_modes + mode as u32 * self.n_rec + (idle_slots as u32 - 1)
            }
        }
    }

    fn mode_from_index(&self, idx: u32) -> SystemMode {
        if idx == 0 {
            SystemMode::LongIdle
        } else if idx <= self.num_modes {
            SystemMode::JustTx {
                mode: (idx - 1) as u8,
            }
        } else {
            let rest = idx - 1 - self.num_modes;
            SystemMode::PostTx {
                mode: (rest / self.n_rec) as u8,
                idle_slots: (rest % self.n_rec + 1) as u8,
            }
        }
    }

    pub fn encode(&self, s: &State) -> StateId {
        assert!(s.age >= 1 && s.age <= self.a_max, "age out of range: {s}");
        assert!(
            (s.harvester as u32) < self.num_harvesters,
            "harvester out of range: {s}"
        );
        assert!(s.battery < self.battery_levels, "battery out of range: {s}");
        let mode = self.mode_index(s.mode);
        let id = (((s.age - 1) * self.mode_count + mode) * self.num_harvesters
            + s.harvester as u32)
            * self.battery_levels
            + s.battery;
        StateId(id)
    }

    pub fn decode(&self, id: StateId) -> State {
        assert!((id.0 as usize) < self.len, "state id out of range");
        let battery = id.0 % self.battery_levels;
        let rest = id.0 / self.battery_levels;
        let harvester = (rest % self.num_harvesters) as u8;
        let rest = rest / self.num_harvesters;
        let mode = self.mode_from_index(rest % self.mode_count);
        let age = rest / self.mode_count + 1;
        State {
            age,
            mode,
            harvester,
            battery,
        }
    }

    /// The deterministic anchor for reachability analysis: maximum age, long
    /// idle, first harvester state, empty battery — the cold-start state.
    pub fn canonical_start(&self) -> StateId {
        self.encode(&State {
            age: self.a_max,
            mode: SystemMode::LongIdle,
            harvester: 0,
            battery: 0,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.len as u32).map(StateId)
    }
}

/// Enumerates the full Cartesian product with the default size cap.
pub fn enumerate_states(cfg: &ScaledConfig) -> Result<StateSpace, Error> {
    enumerate_states_with_cap(cfg, DEFAULT_STATE_CAP)
}

pub fn enumerate_states_with_cap(cfg: &ScaledConfig, cap: u64) -> Result<StateSpace, Error> {
    let num_modes = cfg.num_modes() as u64;
    let n_rec = cfg.n_rec() as u64;
    let mode_count = 1 + num_modes * (1 + n_rec);
    let battery_levels = cfg.b_max() as u64 + 1;
    let size = cfg.a_max() as u64 * mode_count * cfg.num_harvesters() as u64 * battery_levels;
    if size > cap {
        return Err(Error::StateSpaceTooLarge { size, cap });
    }
    Ok(StateSpace {
        a_max: cfg.a_max(),
        num_modes: num_modes as u32,
        n_rec: n_rec as u32,
        num_harvesters: cfg.num_harvesters() as u32,
        battery_levels: battery_levels as u32,
        mode_count: mode_count as u32,
        len: size as usize,
    })
}

/// Transmitting mode `m` is allowed when battery plus this slot's harvest
/// covers the cost; recovered energy is already credited into the battery
/// by earlier idle-slot transitions. Idle is always allowed.
pub fn feasible_actions(s: &State, cfg: &ScaledConfig) -> Vec<Action> {
    let mut actions = Vec::with_capacity(cfg.num_modes() + 1);
    actions.push(Action::Idle);
    let supply = s.battery + cfg.harvest_power(s.harvester as usize);
    for (m, mode) in cfg.modes().iter().enumerate() {
        if supply >= mode.power {
            actions.push(Action::Tx { mode: m as u8 });
        }
    }
    actions
}

pub fn is_feasible(s: &State, action: Action, cfg: &ScaledConfig) -> bool {
    match action {
        Action::Idle => true,
        Action::Tx { mode } => {
            (mode as usize) < cfg.num_modes()
                && s.battery + cfg.harvest_power(s.harvester as usize)
                    >= cfg.modes()[mode as usize].power
        }
    }
}

/// Where an idle slot leads: either one step deeper into the recovery
/// window of mode `m`, or long idle with no recovery chance.
fn idle_successor_mode(mode: SystemMode, n_rec: u32) -> (SystemMode, Option<u8>) {
    match mode {
        SystemMode::JustTx { mode } if n_rec >= 1 => (
            SystemMode::PostTx {
                mode,
                idle_slots: 1,
            },
            Some(mode),
        ),
        SystemMode::PostTx { mode, idle_slots } if (idle_slots as u32) < n_rec => (
            SystemMode::PostTx {
                mode,
                idle_slots: idle_slots + 1,
            },
            Some(mode),
        ),
        _ => (SystemMode::LongIdle, None),
    }
}

/// Next-state distribution for one (state, action) pair, with duplicate
/// successors merged. Entries are ordered by state id.
pub fn transition(
    s: &State,
    action: Action,
    cfg: &ScaledConfig,
    space: &StateSpace,
) -> Result<Vec<(State, f64)>, Error> {
    if !is_feasible(s, action, cfg) {
        return Err(Error::InfeasibleAction {
            state: s.to_string(),
            action: action.to_string(),
        });
    }
    let mut acc: BTreeMap<StateId, f64> = BTreeMap::new();
    let add = |acc: &mut BTreeMap<StateId, f64>, next: State, p: f64| {
        if p > 0.0 {
            *acc.entry(space.encode(&next)).or_insert(0.0) += p;
        }
    };

    let n_h = cfg.num_harvesters();
    let harvest = cfg.harvest_power(s.harvester as usize);
    let aged = (s.age + 1).min(cfg.a_max());

    match action {
        Action::Idle => {
            let (next_mode, recovering) = idle_successor_mode(s.mode, cfg.n_rec());
            let no_rec_battery = (s.battery + harvest).min(cfg.b_max());
            for j in 0..n_h {
                let q = cfg.q(s.harvester as usize, j);
                if q == 0.0 {
                    continue;
                }
                let base = State {
                    age: aged,
                    mode: next_mode,
                    harvester: j as u8,
                    battery: no_rec_battery,
                };
                match recovering {
                    Some(m) => {
                        let inc = cfg.modes()[m as usize].increment;
                        let rec_battery = (s.battery + harvest + inc).min(cfg.b_max());
                        add(
                            &mut acc,
                            State {
                                battery: rec_battery,
                                ..base
                            },
                            q * cfg.p_rec(),
                        );
                        add(&mut acc, base, q * (1.0 - cfg.p_rec()));
                    }
                    None => add(&mut acc, base, q),
                }
            }
        }
        Action::Tx { mode } => {
            let spec = &cfg.modes()[mode as usize];
            // Feasibility guarantees battery + harvest >= power.
            let after_tx = (s.battery + harvest - spec.power).min(cfg.b_max());
            for j in 0..n_h {
                let q = cfg.q(s.harvester as usize, j);
                if q == 0.0 {
                    continue;
                }
                add(
                    &mut acc,
                    State {
                        age: 1,
                        mode: SystemMode::JustTx { mode },
                        harvester: j as u8,
                        battery: after_tx,
                    },
                    q * (1.0 - spec.error_prob),
                );
                add(
                    &mut acc,
                    State {
                        age: aged,
                        mode: SystemMode::JustTx { mode },
                        harvester: j as u8,
                        battery: after_tx,
                    },
                    q * spec.error_prob,
                );
            }
        }
    }

    Ok(acc
        .into_iter()
        .map(|(id, p)| (space.decode(id), p))
        .collect())
}

/// Sparse next-state distributions for every feasible (state, action) pair,
/// stored as one flat CSR-style table. A row is present (non-empty) exactly
/// when the action is feasible in the state.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    row_start: Vec<u32>,
    next: Vec<u32>,
    prob: Vec<f64>,
}

impl TransitionKernel {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: StateId, action: Action) -> (&[u32], &[f64]) {
        self.row_by_index(s.0 as usize, action.index())
    }

    pub fn row_by_index(&self, state: usize, action: usize) -> (&[u32], &[f64]) {
        let r = state * self.num_actions + action;
        let lo = self.row_start[r] as usize;
        let hi = self.row_start[r + 1] as usize;
        (&self.next[lo..hi], &self.prob[lo..hi])
    }

    pub fn is_feasible(&self, s: StateId, action: Action) -> bool {
        !self.row(s, action).0.is_empty()
    }

    pub fn feasible_action_indices(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_actions).filter(move |&a| !self.row_by_index(state, a).0.is_empty())
    }

    /// Debug export: one `state_id action next_id prob` row per entry, for
    /// diffing kernels between implementations.
    pub fn export_text(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "# state_id action next_id prob")?;
        for state in 0..self.num_states {
            for action in 0..self.num_actions {
                let (nexts, probs) = self.row_by_index(state, action);
                for (n, p) in nexts.iter().zip(probs) {
                    writeln!(w, "{state} {action} {n} {p}")?;
                }
            }
        }
        Ok(())
    }
}

/// Materializes the full kernel. Rows are generated directly from the
/// per-case transition rules rather than through [`transition`], so the two
/// paths can be cross-checked against each other.
pub fn build_kernel(cfg: &ScaledConfig, space: &StateSpace) -> Result<TransitionKernel, Error> {
    let n = space.len();
    let num_actions = space.num_actions();
    let mut row_start = Vec::with_capacity(n * num_actions + 1);
    let mut next: Vec<u32> = Vec::new();
    let mut prob: Vec<f64> = Vec::new();
    row_start.push(0);

    let n_h = cfg.num_harvesters();
    let p_rec = cfg.p_rec();

    for id in 0..n as u32 {
        let s = space.decode(StateId(id));
        let harvest = cfg.harvest_power(s.harvester as usize);
        let aged = (s.age + 1).min(cfg.a_max());
        let supply = s.battery + harvest;

        // Idle row.
        {
            let (next_mode, recovering) = idle_successor_mode(s.mode, cfg.n_rec());
            let no_rec_battery = supply.min(cfg.b_max());
            for j in 0..n_h {
                let q = cfg.q(s.harvester as usize, j);
                if q == 0.0 {
                    continue;
                }
                let encode = |battery: u32| {
                    space
                        .encode(&State {
                            age: aged,
                            mode: next_mode,
                            harvester: j as u8,
                            battery,
                        })
                        .0
                };
                match recovering {
                    Some(m) => {
                        let inc = cfg.modes()[m as usize].increment;
                        let rec_battery = (supply + inc).min(cfg.b_max());
                        if rec_battery == no_rec_battery {
                            // Clamp collision: both branches coincide.
                            next.push(encode(no_rec_battery));
                            prob.push(q);
                        } else {
                            if p_rec > 0.0 {
                                next.push(encode(rec_battery));
                                prob.push(q * p_rec);
                            }
                            if p_rec < 1.0 {
                                next.push(encode(no_rec_battery));
                                prob.push(q * (1.0 - p_rec));
                            }
                        }
                    }
                    None => {
                        next.push(encode(no_rec_battery));
                        prob.push(q);
                    }
                }
            }
            row_start.push(next.len() as u32);
        }

        // One transmit row per feasible mode.
        for (m, mode) in cfg.modes().iter().enumerate() {
            if supply < mode.power {
                row_start.push(next.len() as u32);
                continue;
            }
            let after_tx = (supply - mode.power).min(cfg.b_max());
            for j in 0..n_h {
                let q = cfg.q(s.harvester as usize, j);
                if q == 0.0 {
                    continue;
                }
                let success = q * (1.0 - mode.error_prob);
                if success > 0.0 {
                    next.push(
                        space
                            .encode(&State {
                                age: 1,
                                mode: SystemMode::JustTx { mode: m as u8 },
                                harvester: j as u8,
                                battery: after_tx,
                            })
                            .0,
                    );
                    prob.push(success);
                }
                let failure = q * mode.error_prob;
                if failure > 0.0 {
                    next.push(
                        space
                            .encode(&State {
                                age: aged,
                                mode: SystemMode::JustTx { mode: m as u8 },
                                harvester: j as u8,
                                battery: after_tx,
                            })
                            .0,
                    );
                    prob.push(failure);
                }
            }
            row_start.push(next.len() as u32);
        }
    }

    Ok(TransitionKernel {
        num_states: n,
        num_actions,
        row_start,
        next,
        prob,
    })
}
