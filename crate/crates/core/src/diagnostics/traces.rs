//! Vertical traces: the accumulated strength `W_Y` of waves crossing a
//! fixed mass position `Y`, together with its a-priori bound
//!
//! ```text
//!   W_Y(T) <= Ctilde_1(q) zeta(0) + M Ctilde_2(q) int_0^T L(t) zeta(t) dt
//! ```
//!
//! with `zeta(t) = floor(2 lambda* (T - t)/M) + 1` and `lambda* = a/u_inf`.
//! `L` is constant between events, so the integral is evaluated exactly on
//! the merged partition of `L`-change times and `zeta` breakpoints.
//!
//! Crossings are detected event-driven: each live front contributes one
//! pending crossing time per probe; a front's trajectory only changes when
//! an event touches it, in which case its pending entries are invalidated
//! and fresh ones inserted. Between events predictions are exact.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use crate::engine::{InteractionInfo, Neumaier, Observer, StepInfo, Tape};

use super::{ctilde1, ctilde2};

#[derive(Debug, Clone, Copy)]
struct Crossing {
    t: f64,
    slot: u32,
    gen: u32,
    probe: u32,
    abs_eps: f64,
    /// Time between consecutive crossings of the same probe: `M / |speed|`.
    lap: f64,
}

impl PartialEq for Crossing {
    fn eq(&self, other: &Self) -> bool {
        self.t == other.t && self.slot == other.slot && self.probe == other.probe
    }
}
impl Eq for Crossing {}
impl PartialOrd for Crossing {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Crossing {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.t
            .partial_cmp(&other.t)
            .expect("finite crossing time")
            .then(self.slot.cmp(&other.slot))
            .then(self.probe.cmp(&other.probe))
    }
}

/// Result for one probe position.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord {
    pub y: f64,
    /// Accumulated `sum |eps|` of crossings in `(0, T]`.
    pub w: f64,
    /// Right side of the trace bound, evaluated with the run's realized
    /// `u_inf`.
    pub bound: f64,
    pub crossings: u64,
}

/// Observer accumulating `W_Y` for a set of probe positions.
#[derive(Debug)]
pub struct TraceObserver {
    probes: Vec<f64>,
    w: Vec<Neumaier>,
    crossings: Vec<u64>,
    heap: BinaryHeap<Reverse<Crossing>>,
    alive: HashMap<u32, u32>,
    period: f64,
    alpha: f64,
    t_final: f64,
    /// `(t, L)` samples at every change of `L`, starting at `t = 0`.
    l_samples: Vec<(f64, f64)>,
    cur_l: f64,
    min_u: f64,
    finished: bool,
}

impl TraceObserver {
    pub fn new(probes: Vec<f64>, t_final: f64) -> Self {
        let n = probes.len();
        TraceObserver {
            probes,
            w: vec![Neumaier::new(); n],
            crossings: vec![0; n],
            heap: BinaryHeap::new(),
            alive: HashMap::new(),
            period: 0.0,
            alpha: 0.0,
            t_final,
            l_samples: Vec::new(),
            cur_l: 0.0,
            min_u: f64::INFINITY,
            finished: false,
        }
    }

    fn drain(&mut self, t: f64) {
        while let Some(Reverse(top)) = self.heap.peek() {
            if top.t > t {
                break;
            }
            let c = self.heap.pop().unwrap().0;
            if self.alive.get(&c.slot) == Some(&c.gen) {
                self.w[c.probe as usize].add(c.abs_eps);
                self.crossings[c.probe as usize] += 1;
                let mut next = c;
                next.t = c.t + c.lap;
                if next.t <= self.t_final {
                    self.heap.push(Reverse(next));
                }
            }
        }
    }

    /// First strictly-future crossing of probe `y` by a front at `pos` with
    /// speed `s` at time `t`, plus the lap period.
    fn first_crossing(&self, pos: f64, s: f64, y: f64, t: f64) -> Option<(f64, f64)> {
        if s == 0.0 {
            return None;
        }
        let m = self.period;
        let mut dist = if s > 0.0 {
            (y - pos).rem_euclid(m)
        } else {
            (pos - y).rem_euclid(m)
        };
        if dist == 0.0 {
            dist = m; // leaving the probe is not a crossing
        }
        let lap = m / s.abs();
        Some((t + dist / s.abs(), lap))
    }

    fn insert_front(&mut self, tape: &Tape, id: crate::engine::FrontId, t: f64) {
        let Some(f) = tape.front(id) else { return };
        self.alive.insert(id.slot, id.gen);
        self.min_u = self.min_u.min(f.right.u);
        for (p, &y) in self.probes.iter().enumerate() {
            if let Some((tc, lap)) = self.first_crossing(f.pos, f.speed, y, t) {
                if tc <= self.t_final {
                    self.heap.push(Reverse(Crossing {
                        t: tc,
                        slot: id.slot,
                        gen: id.gen,
                        probe: p as u32,
                        abs_eps: f.eps.abs(),
                        lap,
                    }));
                }
            }
        }
    }

    fn rebuild(&mut self, tape: &Tape, t: f64) {
        self.heap.clear();
        self.alive.clear();
        for f in tape.fronts() {
            self.insert_front(tape, f.id, t);
        }
    }

    fn sample_l(&mut self, t: f64, l: f64) {
        self.cur_l = l;
        self.l_samples.push((t, l));
    }

    /// Exact integral of `L(t) zeta(t)` over `[0, T]`, with
    /// `zeta(t) = floor(2 lambda* (T-t)/M) + 1`.
    fn integral_l_zeta(&self, lambda_star: f64) -> f64 {
        let t_end = self.t_final;
        let m = self.period;
        let mut cuts: Vec<f64> = self.l_samples.iter().map(|&(t, _)| t).collect();
        let mut k = 1.0;
        loop {
            let t = t_end - k * m / (2.0 * lambda_star);
            if t <= 0.0 {
                break;
            }
            cuts.push(t);
            k += 1.0;
        }
        cuts.push(t_end);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut acc = 0.0;
        let mut li = 0usize;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            while li + 1 < self.l_samples.len() && self.l_samples[li + 1].0 <= a {
                li += 1;
            }
            let l = self.l_samples[li].1;
            let mid = 0.5 * (a + b);
            let zeta = (2.0 * lambda_star * (t_end - mid) / m).floor() + 1.0;
            acc += l * zeta * (b - a);
        }
        acc
    }

    /// Evaluates all trace records; call after the run finished.
    pub fn records(&self, q: f64) -> Vec<TraceRecord> {
        assert!(self.finished, "trace records require a finished run");
        let lambda_star = self.alpha / self.min_u;
        let zeta0 = (2.0 * lambda_star * self.t_final / self.period).floor() + 1.0;
        let integral = self.integral_l_zeta(lambda_star);
        let bound = ctilde1(q) * zeta0 + self.period * ctilde2(q) * integral;
        self.probes
            .iter()
            .enumerate()
            .map(|(i, &y)| TraceRecord {
                y,
                w: self.w[i].value(),
                bound,
                crossings: self.crossings[i],
            })
            .collect()
    }

    /// Largest accumulated trace over all probes.
    pub fn max_w(&self) -> f64 {
        self.w.iter().map(|n| n.value()).fold(0.0, f64::max)
    }
}

impl Observer for TraceObserver {
    fn on_init(&mut self, tape: &Tape) {
        self.period = tape.period();
        self.alpha = tape.law().alpha();
        let mut l = 0.0;
        tape.visit_strengths(|_, e| l += e.abs());
        tape.visit_states(|s| self.min_u = self.min_u.min(s.u));
        self.sample_l(tape.time(), l);
        self.rebuild(tape, tape.time());
    }

    fn on_collision(&mut self, info: &InteractionInfo, tape: &Tape) {
        self.drain(info.t);
        for id in &info.removed_ids {
            self.alive.remove(&id.slot);
        }
        let mut out_l = 0.0;
        for id in &info.out_ids {
            self.insert_front(tape, *id, info.t);
            if let Some(f) = tape.front(*id) {
                out_l += f.eps.abs();
            }
        }
        let in_l: f64 = info.incoming.iter().map(|j| j.eps.abs()).sum();
        let delta = out_l - in_l;
        if delta != 0.0 {
            let l = self.cur_l + delta;
            self.sample_l(info.t, l);
        }
    }

    fn on_step(&mut self, info: &StepInfo, tape: &Tape) {
        self.drain(info.t);
        // speeds and adjacency may have changed everywhere: rebuild
        self.rebuild(tape, info.t);
        let mut l = 0.0;
        tape.visit_strengths(|_, e| l += e.abs());
        tape.visit_states(|s| self.min_u = self.min_u.min(s.u));
        self.sample_l(info.t, l);
    }

    fn on_finish(&mut self, tape: &Tape) {
        self.drain(tape.time());
        self.finished = true;
    }
}
