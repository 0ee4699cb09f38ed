//! Event-driven simulation of clusters moving with velocity ±1 on the unit
//! ring.
//!
//! Two opposite-moving clusters meet, and at every meeting they merge with
//! probability `p`; otherwise they pass through each other. A realization
//! ends in an absorbing state: a single cluster, or all clusters moving the
//! same way.
//!
//! [`RingState::step`] is a direct implementation that rescans every
//! opposite pair before each event. [`run_realization`] drives the same
//! process with an event queue over ring-adjacent pairs and is what the
//! ensemble uses.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClusterSpectrum, KernelKind, SeedSpec};

/// Meeting times closer than this are treated as simultaneous.
pub const TIME_TOLERANCE: f64 = 1e-12;

/// How initial velocities are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Each cluster independently moves +1 with probability `p0`.
    #[default]
    Binomial,
    /// Exactly `floor(p0 * n0)` clusters, chosen uniformly, move +1.
    FixedCount,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binomial" => Ok(InitMode::Binomial),
            "fixed" | "fixedcount" | "fixed_count" => Ok(InitMode::FixedCount),
            other => Err(Error::InvalidConfig(format!("unknown init mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n0: u32,
    pub p: f64,
    pub p0: f64,
    pub init_mode: InitMode,
    pub kernel: KernelKind,
    /// Ascending times at which the observables are recorded.
    pub z_sample_times: Vec<f64>,
    pub seed: SeedSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n0: 10,
            p: 0.1,
            p0: 0.5,
            init_mode: InitMode::Binomial,
            kernel: KernelKind::Random,
            z_sample_times: Vec::new(),
            seed: SeedSpec::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n0 == 0 {
            return bad("n0 must be at least 1".into());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p = {} must lie in (0, 1]", self.p));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return bad(format!("p0 = {} must lie in [0, 1]", self.p0));
        }
        if self
            .z_sample_times
            .iter()
            .any(|t| !(t.is_finite() && *t >= 0.0))
        {
            return bad("sample times must be finite and non-negative".into());
        }
        if self.z_sample_times.windows(2).any(|w| w[0] > w[1]) {
            return bad("sample times must be sorted ascending".into());
        }
        Ok(())
    }

    /// Number of +1 clusters in [`InitMode::FixedCount`].
    pub fn fixed_plus_count(&self) -> u32 {
        // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
        ((self.p0 * self.n0 as f64) + 1e-9)
            .floor()
            .min(self.n0 as f64) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Creation order: initial clusters are `0..n0`, merged clusters get the
    /// next free id.
    pub id: u32,
    pub position: f64,
    pub velocity: i8,
    pub mass: u64,
}

/// One realization, stored as a plain list of clusters in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingState {
    pub clusters: Vec<Cluster>,
    pub time: f64,
    pub coagulation_count: u64,
    next_id: u32,
}

/// What happened at one meeting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeetingEvent {
    pub time: f64,
    pub position: f64,
    pub plus_id: u32,
    pub minus_id: u32,
    /// Velocity of the merged cluster, or `None` for a pass-through.
    pub merged_velocity: Option<i8>,
}

/// Directed distance from a +1 cluster at `x_plus` forward to a -1 cluster
/// at `x_minus`. Coincident clusters have just met, so the next closure is a
/// full lap away.
fn closing_gap(x_plus: f64, x_minus: f64) -> f64 {
    let g = (x_minus - x_plus).rem_euclid(1.0);
    if g < TIME_TOLERANCE {
        g + 1.0
    } else {
        g
    }
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Positions and velocities per `cfg`, consuming `rng`: first all positions,
/// then the velocities.
pub fn init_realization(cfg: &SimConfig, rng: &mut impl Rng) -> RingState {
    let n0 = cfg.n0 as usize;
    let positions: Vec<f64> = (0..n0).map(|_| rng.random::<f64>()).collect();
    let mut velocities = vec![-1i8; n0];
    match cfg.init_mode {
        InitMode::Binomial => {
            for v in velocities.iter_mut() {
                if rng.random::<f64>() < cfg.p0 {
                    *v = 1;
                }
            }
        }
        InitMode::FixedCount => {
            let k = cfg.fixed_plus_count() as usize;
            for i in rand::seq::index::sample(rng, n0, k) {
                velocities[i] = 1;
            }
        }
    }
    let clusters = positions
        .into_iter()
        .zip(velocities)
        .enumerate()
        .map(|(i, (position, velocity))| Cluster {
            id: i as u32,
            position,
            velocity,
            mass: 1,
        })
        .collect();
    RingState {
        clusters,
        time: 0.0,
        coagulation_count: 0,
        next_id: cfg.n0,
    }
}

impl RingState {
    /// State from explicit clusters at time 0; ids are reassigned in order.
    pub fn from_clusters(clusters: impl IntoIterator<Item = (f64, i8, u64)>) -> Result<Self> {
        let mut out = Vec::new();
        for (i, (position, velocity, mass)) in clusters.into_iter().enumerate() {
            if !(0.0..1.0).contains(&position) {
                return Err(Error::InvalidConfig(format!(
                    "position {position} outside [0, 1)"
                )));
            }
            if velocity != 1 && velocity != -1 {
                return Err(Error::InvalidConfig(format!(
                    "velocity {velocity} is not ±1"
                )));
            }
            if mass == 0 {
                return Err(Error::InvalidConfig("cluster mass must be positive".into()));
            }
            out.push(Cluster {
                id: i as u32,
                position,
                velocity,
                mass,
            });
        }
        let next_id = out.len() as u32;
        Ok(Self {
            clusters: out,
            time: 0.0,
            coagulation_count: 0,
            next_id,
        })
    }

    pub fn is_absorbing(&self) -> bool {
        let first = match self.clusters.first() {
            Some(c) => c.velocity,
            None => return true,
        };
        self.clusters.iter().all(|c| c.velocity == first)
    }

    pub fn total_mass(&self) -> u64 {
        self.clusters.iter().map(|c| c.mass).sum()
    }

    /// `N+ - N-`.
    pub fn z(&self) -> i64 {
        self.clusters.iter().map(|c| c.velocity as i64).sum()
    }

    pub fn spectrum(&self) -> ClusterSpectrum {
        ClusterSpectrum::from_counts(
            self.clusters
                .iter()
                .filter(|c| c.velocity > 0)
                .map(|c| c.mass),
            self.clusters
                .iter()
                .filter(|c| c.velocity < 0)
                .map(|c| c.mass),
            self.time,
        )
    }

    /// Earliest future meeting, found by scanning every opposite pair.
    /// Returns the absolute time and the pair of indices (ascending).
    pub fn next_meeting(&self) -> Option<(f64, (usize, usize))> {
        let mut best: Option<(f64, (usize, usize))> = None;
        for (i, a) in self.clusters.iter().enumerate() {
            if a.velocity != 1 {
                continue;
            }
            for (j, b) in self.clusters.iter().enumerate() {
                if b.velocity != -1 {
                    continue;
                }
                let t = self.time + 0.5 * closing_gap(a.position, b.position);
                let pair = (i.min(j), i.max(j));
                best = match best {
                    None => Some((t, pair)),
                    Some((bt, bp)) => {
                        if t < bt - TIME_TOLERANCE
                            || ((t - bt).abs() <= TIME_TOLERANCE && pair < bp)
                        {
                            Some((t, pair))
                        } else {
                            Some((bt, bp))
                        }
                    }
                };
            }
        }
        best
    }

    /// Advances to the next meeting and resolves it.
    pub fn step(&mut self, cfg: &SimConfig, rng: &mut impl Rng) -> Result<MeetingEvent> {
        let (t_event, (i, j)) = self.next_meeting().ok_or(Error::StepOnAbsorbing)?;
        let dt = t_event - self.time;
        for c in &mut self.clusters {
            c.position = wrap(c.position + c.velocity as f64 * dt);
        }
        self.time = t_event;
        let (pi, mi) = if self.clusters[i].velocity == 1 {
            (i, j)
        } else {
            (j, i)
        };
        let (plus, minus) = (self.clusters[pi], self.clusters[mi]);
        let mut event = MeetingEvent {
            time: t_event,
            position: plus.position,
            plus_id: plus.id,
            minus_id: minus.id,
            merged_velocity: None,
        };
        if rng.random::<f64>() < cfg.p {
            let velocity = if rng.random::<f64>() < cfg.kernel.prob_plus(plus.mass, minus.mass) {
                1
            } else {
                -1
            };
            // i < j, so removing j first keeps i valid
            self.clusters.remove(j);
            self.clusters.remove(i);
            self.clusters.push(Cluster {
                id: self.next_id,
                position: plus.position,
                velocity,
                mass: plus.mass + minus.mass,
            });
            self.next_id += 1;
            self.coagulation_count += 1;
            event.merged_velocity = Some(velocity);
        }
        Ok(event)
    }
}

/// Observables at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub n_plus: u32,
    pub n_minus: u32,
    pub m_plus: u64,
    pub m_minus: u64,
}

impl Sample {
    pub fn z(&self) -> i64 {
        self.n_plus as i64 - self.n_minus as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub n_infinity: u32,
    pub t_infinity: f64,
    pub final_spectrum: ClusterSpectrum,
    /// One entry per requested sample time.
    pub samples: Vec<Sample>,
    /// `N+(0) - N-(0)`.
    pub z0: i64,
    pub meetings: u64,
    pub coagulations: u64,
}

impl RealizationResult {
    /// `(t, Z(t))` at every sample time.
    pub fn z_series(&self) -> Vec<(f64, i64)> {
        self.samples.iter().map(|s| (s.t, s.z())).collect()
    }

    /// `N+ - N-` in the absorbing state.
    pub fn z_final(&self) -> i64 {
        let count = |side: &std::collections::BTreeMap<u64, f64>| side.values().sum::<f64>() as i64;
        count(self.final_spectrum.f_plus()) - count(self.final_spectrum.f_minus())
    }
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    plus: u32,
    minus: u32,
    version: u32,
}

impl Scheduled {
    fn pair(&self) -> (u32, u32) {
        (self.plus.min(self.minus), self.plus.max(self.minus))
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.pair().cmp(&self.pair()))
            .then_with(|| other.version.cmp(&self.version))
    }
}

/// Event-queue engine. The clusters form a circular doubly linked list in
/// ring order; only a +1 cluster followed by a -1 cluster can be the next to
/// meet, so each +1 cluster keeps at most one live candidate in the heap.
/// Stale entries are discarded on pop by a version check.
pub struct RingSimulator {
    anchor: Vec<f64>,
    velocity: Vec<i8>,
    mass: Vec<u64>,
    alive: Vec<bool>,
    next: Vec<u32>,
    prev: Vec<u32>,
    version: Vec<u32>,
    heap: BinaryHeap<Scheduled>,
    time: f64,
    n_plus: u32,
    n_minus: u32,
    m_plus: u64,
    m_minus: u64,
    coagulations: u64,
    meetings: u64,
    last_coagulation: f64,
    p: f64,
    kernel: KernelKind,
    rng: ChaCha8Rng,
}

impl RingSimulator {
    pub fn new(state: &RingState, cfg: &SimConfig, rng: ChaCha8Rng) -> Self {
        let cap = state.next_id as usize + state.clusters.len();
        let mut sim = Self {
            anchor: vec![0.0; state.next_id as usize],
            velocity: vec![0; state.next_id as usize],
            mass: vec![0; state.next_id as usize],
            alive: vec![false; state.next_id as usize],
            next: vec![0; state.next_id as usize],
            prev: vec![0; state.next_id as usize],
            version: vec![0; state.next_id as usize],
            heap: BinaryHeap::with_capacity(cap),
            time: state.time,
            n_plus: 0,
            n_minus: 0,
            m_plus: 0,
            m_minus: 0,
            coagulations: state.coagulation_count,
            meetings: 0,
            last_coagulation: 0.0,
            p: cfg.p,
            kernel: cfg.kernel,
            rng,
        };
        for c in &state.clusters {
            let id = c.id as usize;
            sim.anchor[id] = c.position - c.velocity as f64 * state.time;
            sim.velocity[id] = c.velocity;
            sim.mass[id] = c.mass;
            sim.alive[id] = true;
            if c.velocity > 0 {
                sim.n_plus += 1;
                sim.m_plus += c.mass;
            } else {
                sim.n_minus += 1;
                sim.m_minus += c.mass;
            }
        }
        let mut order: Vec<&Cluster> = state.clusters.iter().collect();
        order.sort_by(|a, b| a.position.total_cmp(&b.position).then(a.id.cmp(&b.id)));
        for (k, c) in order.iter().enumerate() {
            let nx = order[(k + 1) % order.len()].id;
            sim.next[c.id as usize] = nx;
            sim.prev[nx as usize] = c.id;
        }
        for c in &state.clusters {
            sim.reschedule(c.id);
        }
        sim
    }

    fn position(&self, id: u32) -> f64 {
        let i = id as usize;
        wrap(self.anchor[i] + self.velocity[i] as f64 * self.time)
    }

    fn reschedule(&mut self, id: u32) {
        let i = id as usize;
        if !self.alive[i] {
            return;
        }
        self.version[i] = self.version[i].wrapping_add(1);
        if self.velocity[i] != 1 {
            return;
        }
        let nx = self.next[i];
        if nx == id || self.velocity[nx as usize] != -1 {
            return;
        }
        let gap = closing_gap(self.position(id), self.position(nx));
        self.heap.push(Scheduled {
            time: self.time + 0.5 * gap,
            plus: id,
            minus: nx,
            version: self.version[i],
        });
    }

    fn is_valid(&self, ev: &Scheduled) -> bool {
        let (r, l) = (ev.plus as usize, ev.minus as usize);
        self.alive[r] && self.alive[l] && self.version[r] == ev.version && self.next[r] == ev.minus
    }

    fn pop_valid(&mut self) -> Option<Scheduled> {
        while let Some(ev) = self.heap.pop() {
            if self.is_valid(&ev) {
                return Some(ev);
            }
        }
        None
    }

    /// Earliest valid event, ties within [`TIME_TOLERANCE`] resolved by the
    /// lowest id pair.
    fn next_event(&mut self) -> Option<Scheduled> {
        let mut best = self.pop_valid()?;
        let mut deferred = Vec::new();
        while let Some(top) = self.heap.peek() {
            if top.time > best.time + TIME_TOLERANCE {
                break;
            }
            let ev = self.heap.pop().expect("peeked");
            if !self.is_valid(&ev) {
                continue;
            }
            if ev.pair() < best.pair() {
                deferred.push(best);
                best = ev;
            } else {
                deferred.push(ev);
            }
        }
        self.heap.extend(deferred);
        Some(best)
    }

    pub fn is_absorbing(&self) -> bool {
        self.n_plus == 0 || self.n_minus == 0
    }

    fn sample(&self, t: f64) -> Sample {
        Sample {
            t,
            n_plus: self.n_plus,
            n_minus: self.n_minus,
            m_plus: self.m_plus,
            m_minus: self.m_minus,
        }
    }

    fn resolve(&mut self, ev: Scheduled) -> MeetingEvent {
        self.time = ev.time;
        self.meetings += 1;
        let (r, l) = (ev.plus, ev.minus);
        let (ri, li) = (r as usize, l as usize);
        let position = self.position(r);
        let before = self.prev[ri];
        let after = self.next[li];
        let mut out = MeetingEvent {
            time: ev.time,
            position,
            plus_id: r,
            minus_id: l,
            merged_velocity: None,
        };

        if self.rng.random::<f64>() < self.p {
            let prob_plus = self.kernel.prob_plus(self.mass[ri], self.mass[li]);
            let velocity: i8 = if self.rng.random::<f64>() < prob_plus {
                1
            } else {
                -1
            };
            let mass = self.mass[ri] + self.mass[li];
            let c = self.anchor.len() as u32;
            self.anchor.push(position - velocity as f64 * self.time);
            self.velocity.push(velocity);
            self.mass.push(mass);
            self.alive.push(true);
            self.version.push(0);
            self.alive[ri] = false;
            self.alive[li] = false;
            if before == l {
                // the pair was the whole ring
                self.next.push(c);
                self.prev.push(c);
            } else {
                self.next.push(after);
                self.prev.push(before);
                self.next[before as usize] = c;
                self.prev[after as usize] = c;
            }
            self.n_plus -= 1;
            self.n_minus -= 1;
            self.m_plus -= self.mass[ri];
            self.m_minus -= self.mass[li];
            if velocity > 0 {
                self.n_plus += 1;
                self.m_plus += mass;
            } else {
                self.n_minus += 1;
                self.m_minus += mass;
            }
            self.coagulations += 1;
            self.last_coagulation = self.time;
            out.merged_velocity = Some(velocity);
            if before != l {
                self.reschedule(before);
            }
            self.reschedule(c);
        } else {
            if before != l {
                // before, r, l, after  ->  before, l, r, after
                self.next[before as usize] = l;
                self.prev[li] = before;
                self.next[li] = r;
                self.prev[ri] = l;
                self.next[ri] = after;
                self.prev[after as usize] = r;
                self.reschedule(before);
            }
            self.reschedule(r);
        }
        out
    }

    /// Runs to absorption. `sample_times` must be sorted; `observer` sees
    /// every meeting.
    pub fn run(
        mut self,
        sample_times: &[f64],
        z0: i64,
        mut observer: Option<&mut dyn FnMut(&MeetingEvent)>,
    ) -> RealizationResult {
        let mut samples = Vec::with_capacity(sample_times.len());
        let mut pending = sample_times.iter().copied().peekable();
        while !self.is_absorbing() {
            let ev = self
                .next_event()
                .expect("non-absorbing ring always has an approaching pair");
            while let Some(&t) = pending.peek() {
                if t >= ev.time {
                    break;
                }
                samples.push(self.sample(t));
                pending.next();
            }
            let event = self.resolve(ev);
            if let Some(obs) = observer.as_deref_mut() {
                obs(&event);
            }
        }
        samples.extend(pending.map(|t| self.sample(t)));

        let survivors = (0..self.alive.len()).filter(|&i| self.alive[i]);
        let (mut plus, mut minus) = (Vec::new(), Vec::new());
        for i in survivors {
            if self.velocity[i] > 0 {
                plus.push(self.mass[i]);
            } else {
                minus.push(self.mass[i]);
            }
        }
        let n_infinity = (plus.len() + minus.len()) as u32;
        RealizationResult {
            n_infinity,
            t_infinity: self.last_coagulation,
            final_spectrum: ClusterSpectrum::from_counts(plus, minus, self.last_coagulation),
            samples,
            z0,
            meetings: self.meetings,
            coagulations: self.coagulations,
        }
    }
}

/// One realization from `cfg`, seeded by `cfg.seed`.
pub fn run_realization(cfg: &SimConfig) -> Result<RealizationResult> {
    run_realization_with(cfg, None)
}

/// As [`run_realization`], reporting every meeting to `observer`.
pub fn run_realization_with(
    cfg: &SimConfig,
    observer: Option<&mut dyn FnMut(&MeetingEvent)>,
) -> Result<RealizationResult> {
    cfg.validate()?;
    let mut rng = cfg.seed.rng();
    let state = init_realization(cfg, &mut rng);
    let z0 = state.z();
    Ok(RingSimulator::new(&state, cfg, rng).run(&cfg.z_sample_times, z0, observer))
}
