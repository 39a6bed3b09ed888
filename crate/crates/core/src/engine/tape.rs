//! The solver state at a time instant: a circularly ordered list of fronts
//! on the mass torus `[0, M)` plus the constant states between them.
//!
//! Constant states are stored once, as the *right* piece of each front, so
//! adjacency consistency (right state of one front == left state of the
//! next) holds structurally and the torus-closure check reduces to the
//! wave-curve consistency of each front's metadata.
//!
//! Fronts move linearly between events. Positions are stored lazily as
//! `(pos, t_ref)` pairs and reduced modulo the period only when touched, so
//! an event costs `O(log n)` rather than `O(n)` position updates.

use crate::riemann::{strength_fn, PressureLaw, State, WaveFamily};

/// Stable handle to a front; the generation guards against slot reuse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrontId {
    pub(crate) slot: u32,
    pub(crate) gen: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct FrontData {
    pub family: WaveFamily,
    pub eps: f64,
    /// Cached `h(eps)`; kept in sync with `eps`.
    pub h_eps: f64,
    pub speed: f64,
    /// Position at time `t_ref`, reduced into `[0, period)`.
    pub pos: f64,
    pub t_ref: f64,
    pub prev: u32,
    pub next: u32,
    /// Constant state on the arc from this front to `next`.
    pub right: State,
    /// Cached `ln(right.u)`.
    pub ln_u_right: f64,
}

#[derive(Debug, Clone)]
struct Slot {
    gen: u32,
    data: Option<FrontData>,
}

/// Read-only view of one front, with both flanking states resolved.
#[derive(Debug, Clone, Copy)]
pub struct Front {
    pub id: FrontId,
    pub family: WaveFamily,
    pub eps: f64,
    pub speed: f64,
    /// Position at the tape's current time, in `[0, period)`.
    pub pos: f64,
    pub left: State,
    pub right: State,
}

/// Complete solver state at one time instant.
#[derive(Debug, Clone)]
pub struct Tape {
    pub(crate) time: f64,
    period: f64,
    law: PressureLaw,
    slots: Vec<Slot>,
    free: Vec<u32>,
    n_fronts: usize,
    /// Entry point into the circular list; `u32::MAX` when empty.
    head: u32,
    /// Constant state of the whole torus when there are no fronts.
    anchor: State,
}

impl Tape {
    pub fn empty(period: f64, law: PressureLaw, anchor: State) -> Self {
        Tape {
            time: 0.0,
            period,
            law,
            slots: Vec::new(),
            free: Vec::new(),
            n_fronts: 0,
            head: u32::MAX,
            anchor,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    pub fn n_fronts(&self) -> usize {
        self.n_fronts
    }

    /// The constant state on the arc that crosses `y = 0`; with no fronts,
    /// the single constant state of the torus.
    pub fn anchor_state(&self) -> State {
        if self.n_fronts == 0 {
            return self.anchor;
        }
        let (cut, _) = self.wrap_cut();
        self.data(cut).right
    }

    pub(crate) fn reduce(&self, x: f64) -> f64 {
        let r = x.rem_euclid(self.period);
        if r == self.period {
            0.0
        } else {
            r
        }
    }

    pub(crate) fn data(&self, slot: u32) -> &FrontData {
        self.slots[slot as usize].data.as_ref().expect("live slot")
    }

    pub(crate) fn data_mut(&mut self, slot: u32) -> &mut FrontData {
        self.slots[slot as usize].data.as_mut().expect("live slot")
    }

    pub(crate) fn gen_of(&self, slot: u32) -> u32 {
        self.slots[slot as usize].gen
    }

    pub(crate) fn id_of(&self, slot: u32) -> FrontId {
        FrontId { slot, gen: self.gen_of(slot) }
    }

    pub(crate) fn is_live(&self, id: FrontId) -> bool {
        (id.slot as usize) < self.slots.len()
            && self.slots[id.slot as usize].gen == id.gen
            && self.slots[id.slot as usize].data.is_some()
    }

    /// Position of a live slot at time `t`.
    pub(crate) fn pos_at(&self, slot: u32, t: f64) -> f64 {
        let d = self.data(slot);
        self.reduce(d.pos + d.speed * (t - d.t_ref))
    }

    /// Circular gap from `a` to its successor `b` at time `t`, in `[0, M)`.
    pub(crate) fn gap_at(&self, a: u32, b: u32, t: f64) -> f64 {
        self.reduce(self.pos_at(b, t) - self.pos_at(a, t))
    }

    pub(crate) fn left_state(&self, slot: u32) -> State {
        self.data(self.data(slot).prev).right
    }

    /// Allocates a slot holding `data`; links are patched by the caller.
    pub(crate) fn alloc(&mut self, data: FrontData) -> u32 {
        self.n_fronts += 1;
        if let Some(slot) = self.free.pop() {
            let s = &mut self.slots[slot as usize];
            s.gen = s.gen.wrapping_add(1);
            s.data = Some(data);
            slot
        } else {
            self.slots.push(Slot { gen: 0, data: Some(data) });
            (self.slots.len() - 1) as u32
        }
    }

    pub(crate) fn release(&mut self, slot: u32) {
        let s = &mut self.slots[slot as usize];
        debug_assert!(s.data.is_some());
        s.data = None;
        s.gen = s.gen.wrapping_add(1);
        self.free.push(slot);
        self.n_fronts -= 1;
        if self.head == slot {
            self.head = u32::MAX; // caller must re-point via set_head
        }
    }

    pub(crate) fn set_head(&mut self, slot: u32) {
        self.head = slot;
    }

    pub(crate) fn head(&self) -> u32 {
        self.head
    }

    pub(crate) fn set_anchor(&mut self, s: State) {
        self.anchor = s;
    }

    /// Bumps the generation of a live slot, invalidating queued candidates
    /// that reference it.
    pub(crate) fn touch(&mut self, slot: u32) {
        let s = &mut self.slots[slot as usize];
        debug_assert!(s.data.is_some());
        s.gen = s.gen.wrapping_add(1);
    }

    /// Visits all fronts once in circular list order starting at `head`.
    pub(crate) fn visit_slots(&self, mut f: impl FnMut(u32, &FrontData)) {
        if self.n_fronts == 0 {
            return;
        }
        let mut slot = self.head;
        for _ in 0..self.n_fronts {
            let d = self.data(slot);
            f(slot, d);
            slot = d.next;
        }
        debug_assert_eq!(slot, self.head);
    }

    /// Slots in circular list order.
    pub(crate) fn slot_order(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.n_fronts);
        self.visit_slots(|s, _| out.push(s));
        out
    }

    /// Visits `(family, eps)` of every front, in circular list order.
    pub fn visit_strengths(&self, mut f: impl FnMut(WaveFamily, f64)) {
        self.visit_slots(|_, d| f(d.family, d.eps));
    }

    /// Visits every constant state once; the single anchor state when the
    /// tape has no fronts.
    pub fn visit_states(&self, mut f: impl FnMut(State)) {
        if self.n_fronts == 0 {
            f(self.anchor);
        } else {
            self.visit_slots(|_, d| f(d.right));
        }
    }

    /// Finds the adjacent pair `(a, b)` whose arc contains `y = 0` at the
    /// current time: the cut used to linearize the circular list. Returns
    /// `(a, index of a in list order)`.
    fn wrap_cut(&self) -> (u32, usize) {
        debug_assert!(self.n_fronts > 0);
        let t = self.time;
        let order = self.slot_order();
        let mut best: Option<(u32, usize)> = None;
        for (i, &s) in order.iter().enumerate() {
            let b = self.data(s).next;
            let pa = self.pos_at(s, t);
            let gap = self.gap_at(s, b, t);
            // arc [pa, pa+gap) contains 0 (equivalently period)
            let to_zero = self.reduce(-pa);
            if to_zero < gap || (gap == 0.0 && self.n_fronts == 1) {
                return (s, i);
            }
            if best.is_none() {
                best = Some((s, i));
            }
        }
        // All arcs empty (co-located everything) - fall back to list head.
        best.unwrap()
    }

    /// Fronts in ascending-position order at the current time, with wrap cut
    /// at `y = 0`. Co-located fronts keep their circular list order.
    pub fn fronts(&self) -> Vec<Front> {
        if self.n_fronts == 0 {
            return Vec::new();
        }
        let (cut, _) = self.wrap_cut();
        let start = self.data(cut).next;
        let mut out = Vec::with_capacity(self.n_fronts);
        let mut slot = start;
        for _ in 0..self.n_fronts {
            let d = self.data(slot);
            out.push(Front {
                id: self.id_of(slot),
                family: d.family,
                eps: d.eps,
                speed: d.speed,
                pos: self.pos_at(slot, self.time),
                left: self.left_state(slot),
                right: d.right,
            });
            slot = d.next;
        }
        out
    }

    /// Looks up a front by id; `None` if it no longer exists.
    pub fn front(&self, id: FrontId) -> Option<Front> {
        if !self.is_live(id) {
            return None;
        }
        let d = self.data(id.slot);
        Some(Front {
            id,
            family: d.family,
            eps: d.eps,
            speed: d.speed,
            pos: self.pos_at(id.slot, self.time),
            left: self.left_state(id.slot),
            right: d.right,
        })
    }

    /// Piecewise-constant `(u, v)` profiles at the current time. Zero-width
    /// pieces (co-located fronts) are skipped.
    pub fn to_profiles(&self) -> crate::profile::ProfilePair {
        use crate::profile::{PiecewiseConstant, ProfilePair};
        if self.n_fronts == 0 {
            let u = PiecewiseConstant::constant(self.period, self.anchor.u);
            let v = PiecewiseConstant::constant(self.period, self.anchor.v);
            return ProfilePair::new(u, v).expect("constant pair");
        }
        let fronts = self.fronts();
        let mut starts = Vec::with_capacity(fronts.len() + 1);
        let mut us = Vec::with_capacity(fronts.len() + 1);
        let mut vs = Vec::with_capacity(fronts.len() + 1);
        // piece before the first front: right state of the cut front
        let first_pos = fronts[0].pos;
        if first_pos > 0.0 {
            starts.push(0.0);
            us.push(fronts[0].left.u);
            vs.push(fronts[0].left.v);
        }
        for (i, f) in fronts.iter().enumerate() {
            let next_pos = if i + 1 < fronts.len() {
                fronts[i + 1].pos
            } else {
                self.period
            };
            if next_pos > f.pos {
                starts.push(f.pos);
                us.push(f.right.u);
                vs.push(f.right.v);
            }
        }
        // collapse duplicated trailing starts (possible when first_pos == 0)
        let u = PiecewiseConstant::new(self.period, starts.clone(), us).expect("u profile");
        let v = PiecewiseConstant::new(self.period, starts, vs).expect("v profile");
        ProfilePair::new(u, v).expect("common grid")
    }

    /// Residuals of composing every front's wave-curve jump once around the
    /// torus, via the strength sums: `(|sum 2 s_j eps_j|, 2 a |sum h(eps_j)|)`.
    /// These are the logarithmic volume and velocity closure defects.
    pub fn strength_closure(&self) -> (f64, f64) {
        let mut su = Neumaier::new();
        let mut sh = Neumaier::new();
        self.visit_slots(|_, d| {
            su.add(2.0 * d.family.volume_sign() * d.eps);
            sh.add(d.h_eps);
        });
        (su.value().abs(), 2.0 * self.law.alpha() * sh.value().abs())
    }

    /// Full state walk: starting from the anchor, applies every front's wave
    /// curve once around and returns `(|ln(u_end/u_start)|, |v_end - v_start|)`.
    pub fn closure_walk(&self) -> (f64, f64) {
        if self.n_fronts == 0 {
            return (0.0, 0.0);
        }
        let fronts = self.fronts();
        let start = fronts[0].left;
        let mut cur = start;
        for f in &fronts {
            cur = crate::riemann::wave_curve(f.family, cur, f.eps, &self.law);
        }
        ((cur.u / start.u).ln().abs(), (cur.v - start.v).abs())
    }

    /// Checks that positions are finite, volumes positive and the list is
    /// consistent; used by tests and debug assertions.
    pub fn check_consistency(&self) -> Result<(), String> {
        if self.n_fronts == 0 {
            if self.anchor.u <= 0.0 {
                return Err("anchor volume not positive".into());
            }
            return Ok(());
        }
        if self.n_fronts == 1 {
            return Err("a single front cannot close the torus".into());
        }
        let mut count = 0usize;
        let mut slot = self.head;
        loop {
            let d = self.data(slot);
            if !(d.right.u > 0.0) {
                return Err(format!("piece volume {} not positive", d.right.u));
            }
            if d.eps == 0.0 {
                return Err("zero-strength front on tape".into());
            }
            if self.data(d.next).prev != slot {
                return Err("broken links".into());
            }
            count += 1;
            slot = d.next;
            if slot == self.head {
                break;
            }
            if count > self.n_fronts {
                return Err("list longer than n_fronts".into());
            }
        }
        if count != self.n_fronts {
            return Err(format!("list has {count} fronts, expected {}", self.n_fronts));
        }
        Ok(())
    }
}

pub(crate) fn make_front_data(
    family: WaveFamily,
    eps: f64,
    speed: f64,
    pos: f64,
    t_ref: f64,
    right: State,
) -> FrontData {
    FrontData {
        family,
        eps,
        h_eps: strength_fn(eps),
        speed,
        pos,
        t_ref,
        prev: u32::MAX,
        next: u32::MAX,
        right,
        ln_u_right: right.u.ln(),
    }
}

/// Neumaier compensated summation; keeps incremental functional updates
/// accurate over millions of events.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
