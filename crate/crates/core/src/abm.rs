//! Weighted agent-based Monte Carlo of the cell population: division times
//! sampled from the cycle-length density, daughters through the growth
//! flow, deterministic / inherited-rate / stochastic growth modes,
//! multi-type asymmetric division, population-control subsampling, and
//! growth-rate estimators.
//!
//! Determinism contract: every cell owns a counter-based random stream
//! derived from (seed, birth index), so a fixed (config, seed) pair yields
//! bitwise-identical trajectories regardless of thread count or scheduling.

use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cycle::{CycleModel, GrowthRateDistribution};
use crate::error::{Error, Result};
use crate::growth::{GrowthKind, GrowthLaw};
use crate::hetero::HeteroDivisionRule;
use crate::transport::{check_dyadic_homogeneity, fit_log_slope};

#[derive(Debug, Clone)]
pub struct Cell {
    pub type_id: usize,
    pub x_b: f64,
    pub birth_time: f64,
    /// Scheduled cycle length, sampled at birth.
    pub tau: f64,
    /// Individual growth rate in inherited-rate mode.
    pub kappa_draw: Option<f64>,
    pub generation: u32,
    /// Birth index; the cell's random stream and identity.
    pub uid: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaKind {
    /// sigma(x) = s0 (x - x_lo): vanishes at the minimum size, so paths
    /// stay above it.
    LinearFloor,
    /// sigma(x) = s0 x^gamma: the literature form; paths can reach zero,
    /// in which case the step errors out.
    PowerLaw { gamma_millis: u32 },
}

impl SigmaKind {
    fn gamma(&self) -> f64 {
        match self {
            SigmaKind::LinearFloor => 1.0,
            SigmaKind::PowerLaw { gamma_millis } => *gamma_millis as f64 / 1000.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdeParams {
    /// Diffusion scale s0.
    pub s0: f64,
    pub kind: SigmaKind,
    /// Euler-Maruyama step as a fraction of the mean cycle length.
    pub step_frac: f64,
}

impl SdeParams {
    pub fn linear(s0: f64) -> Self {
        Self {
            s0,
            kind: SigmaKind::LinearFloor,
            step_frac: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum GrowthMode {
    Deterministic,
    InheritedRate(GrowthRateDistribution),
    Sde(SdeParams),
}

#[derive(Debug, Clone)]
pub enum Seeding {
    /// n identical cells of the given initial size (a Dirac initial law).
    Dirac { x_b: f64, n: usize },
    /// n cells with initial sizes uniform on the newborn window.
    Uniform { n: usize },
}

/// Weighted multi-type agent population.
pub struct Population {
    rule: HeteroDivisionRule,
    mode: GrowthMode,
    /// Deterministic one-stalked-one-swarmer pairing for two-type rules.
    pairing: bool,
    pub t: f64,
    /// Global multiplier from subsampling; always a power of two.
    pub weight: f64,
    seed: u64,
    birth_counter: u64,
    thin_counter: u64,
    slots: Vec<Option<Cell>>,
    free: Vec<usize>,
    alive: usize,
    events: BinaryHeap<Event>,
    mean_cycle: f64,
}

/// Division event; min-heap by (time, uid) via reversed ordering.
#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    slot: usize,
    uid: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.uid == other.uid
    }
}
impl Eq for Event {}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.uid.cmp(&self.uid))
    }
}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Counter-based per-cell stream: independent of processing order.
fn cell_rng(seed: u64, uid: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(
        seed ^ splitmix(uid.wrapping_mul(3) ^ purpose.wrapping_mul(0x51ed2701)),
    ))
}

#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t: f64,
    /// Live cells per type.
    pub counts: Vec<usize>,
    pub weight: f64,
    /// weight * total count: the unbiased population estimate.
    pub est_population: f64,
    /// Distinct cell sizes (to 1e-9 relative), when tracked.
    pub distinct_sizes: Option<usize>,
    /// Distinct generations alive, when tracked.
    pub generations_alive: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CensusRow {
    pub type_id: usize,
    pub x_b: f64,
    pub age: f64,
    pub generation: u32,
    pub size: f64,
}

#[derive(Debug, Clone)]
pub struct Census {
    pub t: f64,
    pub weight: f64,
    pub rows: Vec<CensusRow>,
}

#[derive(Debug, Clone)]
pub struct BirthRecord {
    pub t: f64,
    pub type_id: usize,
    pub x_b: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub censuses: Vec<Census>,
    pub birth_records: Vec<BirthRecord>,
    pub mean_cycle: f64,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: f64,
    /// Light count samples every this interval (defaults to mc / 4).
    pub sample_interval: Option<f64>,
    /// Full population snapshots at these times.
    pub census_times: Vec<f64>,
    /// Subsample to ceil(n_max / 2) (doubling the weight) whenever the live
    /// count exceeds n_max.
    pub n_max: Option<usize>,
    /// Record every birth from this time on.
    pub record_births_from: Option<f64>,
    /// Count distinct sizes / generations at every sample (paradox runs).
    pub track_sizes: bool,
}

impl RunOptions {
    pub fn to_time(t_end: f64) -> Self {
        Self {
            t_end,
            sample_interval: None,
            census_times: Vec::new(),
            n_max: None,
            record_births_from: None,
            track_sizes: false,
        }
    }
}

impl Population {
    /// Multi-type population from a division rule.
    pub fn seed_hetero(
        rule: HeteroDivisionRule,
        mode: GrowthMode,
        pairing: bool,
        seeding: &Seeding,
        seed: u64,
    ) -> Result<Self> {
        if let GrowthMode::Sde(_) = &mode {
            for i in 0..rule.n_types() {
                if !matches!(rule.law(i).kind(), GrowthKind::Exponential { .. }) {
                    return Err(Error::InvalidModel(
                        "stochastic growth needs an exponential drift law".into(),
                    ));
                }
            }
        }
        if pairing && rule.n_types() != 2 {
            return Err(Error::InvalidModel(
                "deterministic daughter pairing needs exactly two types".into(),
            ));
        }
        let mean_cycle = rule.cycle(0).mean_cycle_length()?;
        let mut pop = Self {
            rule,
            mode,
            pairing,
            t: 0.0,
            weight: 1.0,
            seed,
            birth_counter: 0,
            thin_counter: 0,
            slots: Vec::new(),
            free: Vec::new(),
            alive: 0,
            events: BinaryHeap::new(),
            mean_cycle,
        };
        let (w_lo, w_hi) = pop.rule.cycle(0).window();
        let n = match seeding {
            Seeding::Dirac { n, .. } | Seeding::Uniform { n } => (*n).max(1),
        };
        for _ in 0..n {
            let uid = pop.birth_counter;
            pop.birth_counter += 1;
            let mut rng = cell_rng(seed, uid, 0);
            let x_b = match seeding {
                Seeding::Dirac { x_b, .. } => *x_b,
                Seeding::Uniform { .. } => rng.gen_range(w_lo..w_hi),
            };
            if x_b < w_lo || x_b > w_hi {
                return Err(Error::OutOfWindow {
                    x_b,
                    lo: w_lo,
                    hi: w_hi,
                });
            }
            let cell = pop.make_cell(0, x_b, 0.0, 0, uid, &mut rng)?;
            pop.insert(cell);
        }
        Ok(pop)
    }

    /// Single-type population: symmetric division of (law, model).
    pub fn seed(
        law: &GrowthLaw,
        model: &CycleModel,
        mode: GrowthMode,
        seeding: &Seeding,
        seed: u64,
    ) -> Result<Self> {
        Self::seed_hetero(
            HeteroDivisionRule::single(law.clone(), model.clone()),
            mode,
            false,
            seeding,
            seed,
        )
    }

    pub fn rule(&self) -> &HeteroDivisionRule {
        &self.rule
    }

    pub fn mean_cycle(&self) -> f64 {
        self.mean_cycle
    }

    pub fn alive(&self) -> usize {
        self.alive
    }

    pub fn live_cells(&self) -> impl Iterator<Item = &Cell> {
        self.slots.iter().filter_map(|s| s.as_ref())
    }

    fn make_cell(
        &self,
        type_id: usize,
        x_b: f64,
        birth_time: f64,
        generation: u32,
        uid: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Cell> {
        let kappa_draw = match &self.mode {
            GrowthMode::InheritedRate(k) => Some(k.sample(x_b, rng.gen_range(1e-12..1.0))),
            _ => None,
        };
        let tau = self
            .rule
            .cycle(type_id)
            .sample_tau(x_b, rng.gen_range(1e-12..1.0))?;
        Ok(Cell {
            type_id,
            x_b,
            birth_time,
            tau,
            kappa_draw,
            generation,
            uid,
        })
    }

    fn insert(&mut self, cell: Cell) {
        let ev_time = cell.birth_time + cell.tau;
        let slot = if let Some(s) = self.free.pop() {
            self.slots[s] = Some(cell);
            s
        } else {
            self.slots.push(Some(cell));
            self.slots.len() - 1
        };
        let uid = self.slots[slot].as_ref().unwrap().uid;
        self.events.push(Event {
            time: ev_time,
            slot,
            uid,
        });
        self.alive += 1;
    }

    /// Size of a cell at the given age under the population's growth mode.
    pub fn size_at_age(&self, cell: &Cell, age: f64) -> Result<f64> {
        match &self.mode {
            GrowthMode::Deterministic => self.rule.law(cell.type_id).flow(cell.x_b, age),
            GrowthMode::InheritedRate(_) => {
                let kappa = cell.kappa_draw.expect("inherited-rate cell has a draw");
                Ok(cell.x_b * (kappa * age).exp())
            }
            GrowthMode::Sde(p) => {
                let law = self.rule.law(cell.type_id);
                let GrowthKind::Exponential { kappa } = law.kind() else {
                    unreachable!("checked at construction");
                };
                let mut rng = cell_rng(self.seed, cell.uid, 1);
                let h = p.step_frac * self.mean_cycle;
                euler_maruyama_size(*kappa, p, law.x_lo(), cell.x_b, age, h, &mut rng)
            }
        }
    }

    /// Uniform subsampling to ceil(n_max / 2) with weight doubling whenever
    /// the live count exceeds n_max. The estimator weight * count stays
    /// unbiased (exactly so when n_max is odd, since the count at the
    /// trigger is then exactly twice the kept count).
    pub fn control_population(&mut self, n_max: usize) {
        debug_assert!(n_max >= 2);
        if self.alive <= n_max {
            return;
        }
        let keep = n_max.div_ceil(2);
        let mut live: Vec<usize> = (0..self.slots.len())
            .filter(|&s| self.slots[s].is_some())
            .collect();
        let mut rng = cell_rng(self.seed ^ 0xA5A5_5A5A, self.thin_counter, 2);
        self.thin_counter += 1;
        // Partial Fisher-Yates: the first `keep` entries are a uniform
        // subset of the live slots.
        for i in 0..keep {
            let j = rng.gen_range(i..live.len());
            live.swap(i, j);
        }
        for &s in &live[keep..] {
            self.slots[s] = None;
            self.free.push(s);
        }
        self.alive = keep;
        self.weight *= 2.0;
        // Stale events for removed cells are skipped by uid check.
    }

    fn counts_per_type(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.rule.n_types()];
        for c in self.live_cells() {
            counts[c.type_id] += 1;
        }
        counts
    }

    fn census(&self) -> Result<Census> {
        let mut rows = Vec::with_capacity(self.alive);
        for c in self.live_cells() {
            let age = self.t - c.birth_time;
            rows.push(CensusRow {
                type_id: c.type_id,
                x_b: c.x_b,
                age,
                generation: c.generation,
                size: self.size_at_age(c, age)?,
            });
        }
        rows.sort_by(|a, b| a.x_b.total_cmp(&b.x_b));
        Ok(Census {
            t: self.t,
            weight: self.weight,
            rows,
        })
    }

    fn sample(&self, track_sizes: bool) -> Result<TrajectorySample> {
        let counts = self.counts_per_type();
        let total: usize = counts.iter().sum();
        let (distinct_sizes, generations_alive) = if track_sizes {
            let mut sizes = Vec::with_capacity(self.alive);
            let mut gens = Vec::with_capacity(self.alive);
            for c in self.live_cells() {
                sizes.push(self.size_at_age(c, self.t - c.birth_time)?);
                gens.push(c.generation);
            }
            sizes.sort_by(f64::total_cmp);
            let mut distinct = 0usize;
            let mut last = f64::NEG_INFINITY;
            for s in sizes {
                if (s - last).abs() > 1e-9 * s.abs().max(1e-300) {
                    distinct += 1;
                    last = s;
                }
            }
            gens.sort_unstable();
            gens.dedup();
            (Some(distinct), Some(gens.len()))
        } else {
            (None, None)
        };
        Ok(TrajectorySample {
            t: self.t,
            counts,
            weight: self.weight,
            est_population: self.weight * total as f64,
            distinct_sizes,
            generations_alive,
        })
    }

    /// Event-driven run to `opts.t_end` with censuses and count samples.
    pub fn run(&mut self, opts: &RunOptions) -> Result<Trajectory> {
        let interval = opts.sample_interval.unwrap_or(0.25 * self.mean_cycle);
        let mut sample_at = self.t;
        let mut census_times = opts.census_times.clone();
        census_times.sort_by(f64::total_cmp);
        census_times.retain(|&c| c >= self.t && c <= opts.t_end);
        let mut census_idx = 0usize;
        let mut samples = Vec::new();
        let mut censuses = Vec::new();
        let mut birth_records = Vec::new();

        loop {
            let next_event = self.events.peek().map(|e| e.time).unwrap_or(f64::INFINITY);
            // Emit samples and censuses due before the next division.
            while sample_at <= next_event.min(opts.t_end) {
                self.t = sample_at;
                samples.push(self.sample(opts.track_sizes)?);
                sample_at += interval;
            }
            while census_idx < census_times.len() && census_times[census_idx] <= next_event.min(opts.t_end)
            {
                self.t = census_times[census_idx];
                censuses.push(self.census()?);
                census_idx += 1;
            }
            if next_event > opts.t_end {
                break;
            }
            let ev = self.events.pop().expect("peeked event exists");
            // Skip events of thinned cells.
            let valid = self.slots[ev.slot]
                .as_ref()
                .map(|c| c.uid == ev.uid)
                .unwrap_or(false);
            if !valid {
                continue;
            }
            let mother = self.slots[ev.slot].take().expect("validated above");
            self.free.push(ev.slot);
            self.alive -= 1;
            self.t = ev.time;

            let division_size = self.size_at_age(&mother, mother.tau)?;
            for daughter_idx in 0..2u8 {
                let uid = self.birth_counter;
                self.birth_counter += 1;
                let mut rng = cell_rng(self.seed, uid, 0);
                let j = if self.rule.n_types() == 1 {
                    0
                } else if self.pairing {
                    daughter_idx as usize
                } else {
                    // Independent draw with probabilities r[mother type][.].
                    let u: f64 = rng.gen_range(0.0..1.0);
                    let mut acc = 0.0;
                    let mut chosen = self.rule.n_types() - 1;
                    for cand in 0..self.rule.n_types() {
                        acc += self.rule.r(mother.type_id, cand);
                        if u < acc {
                            chosen = cand;
                            break;
                        }
                    }
                    chosen
                };
                let x_b = self.rule.beta(mother.type_id, j) * division_size;
                let (w_lo, w_hi) = self.rule.cycle(j).window();
                if x_b < w_lo || x_b > w_hi {
                    return Err(Error::OutOfWindow {
                        x_b,
                        lo: w_lo,
                        hi: w_hi,
                    });
                }
                let cell = self.make_cell(j, x_b, self.t, mother.generation + 1, uid, &mut rng)?;
                if let Some(from) = opts.record_births_from {
                    if self.t >= from {
                        birth_records.push(BirthRecord {
                            t: self.t,
                            type_id: j,
                            x_b,
                            weight: self.weight,
                        });
                    }
                }
                self.insert(cell);
            }
            if let Some(n_max) = opts.n_max {
                self.control_population(n_max);
            }
        }
        self.t = opts.t_end;
        Ok(Trajectory {
            samples,
            censuses,
            birth_records,
            mean_cycle: self.mean_cycle,
        })
    }
}

/// Euler-Maruyama endpoint of d xi = kappa xi dt + sigma(xi) dB from x0
/// over [0, t], fixed step h (last step shortened). The linear drift is
/// integrated exactly (exponential Euler), so zero diffusion reproduces the
/// deterministic path and E[xi_t] = x0 e^{kappa t} holds without step bias.
/// Gaussian increments come from Box-Muller on the cell's own stream.
pub fn euler_maruyama_size(
    kappa: f64,
    params: &SdeParams,
    x_floor: f64,
    x0: f64,
    t: f64,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let sigma = |x: f64| -> f64 {
        match params.kind {
            SigmaKind::LinearFloor => params.s0 * (x - x_floor),
            SigmaKind::PowerLaw { .. } => params.s0 * x.powf(params.kind.gamma()),
        }
    };
    let mut x = x0;
    let mut remaining = t;
    while remaining > 0.0 {
        let dt = h.min(remaining);
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        x = x * (kappa * dt).exp() + sigma(x) * dt.sqrt() * z;
        if x <= 0.0 {
            return Err(Error::StepUnderflow { x });
        }
        remaining -= dt;
    }
    Ok(x)
}

/// Least-squares growth rate of log(weight * count) over the last half of
/// the trajectory, with the standard error of the slope.
pub fn estimate_malthus(trajectory: &Trajectory) -> Result<(f64, f64)> {
    let samples = &trajectory.samples;
    if samples.len() < 8 {
        return Err(Error::ShortTrajectory {
            span: samples.len() as f64,
            required: 8.0,
        });
    }
    let span = samples.last().unwrap().t - samples[0].t;
    let required = 10.0 * trajectory.mean_cycle;
    if span < required {
        return Err(Error::ShortTrajectory { span, required });
    }
    let tail = &samples[samples.len() / 2..];
    let (slope, se) = fit_log_slope(tail.iter().map(|s| (s.t, s.est_population)));
    if !slope.is_finite() {
        return Err(Error::ShortTrajectory {
            span,
            required: required.max(span),
        });
    }
    Ok((slope, se))
}

#[derive(Debug, Clone, Copy)]
pub struct ParadoxCensus {
    pub distinct_sizes: usize,
    pub generations_alive: usize,
}

/// Count distinct sizes (1e-9 relative) and living generations in a census
/// of a dyadically homogeneous law. Errors if the law is not homogeneous.
pub fn paradox_census(law: &GrowthLaw, census: &Census) -> Result<ParadoxCensus> {
    check_dyadic_homogeneity(law)?;
    let mut sizes: Vec<f64> = census.rows.iter().map(|r| r.size).collect();
    sizes.sort_by(f64::total_cmp);
    let mut distinct = 0usize;
    let mut last = f64::NEG_INFINITY;
    for s in sizes {
        if (s - last).abs() > 1e-9 * s.abs().max(1e-300) {
            distinct += 1;
            last = s;
        }
    }
    let mut gens: Vec<u32> = census.rows.iter().map(|r| r.generation).collect();
    gens.sort_unstable();
    gens.dedup();
    Ok(ParadoxCensus {
        distinct_sizes: distinct,
        generations_alive: gens.len(),
    })
}

/// Kolmogorov-Smirnov distance of a weighted sample against a CDF.
pub fn weighted_ks<F: Fn(f64) -> f64>(samples: &mut [(f64, f64)], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let mut acc = 0.0;
    let mut ks = 0.0f64;
    for (x, w) in samples.iter() {
        let below = acc / total;
        acc += w;
        let above = acc / total;
        let theory = cdf(*x);
        ks = ks.max((below - theory).abs()).max((above - theory).abs());
    }
    ks
}
