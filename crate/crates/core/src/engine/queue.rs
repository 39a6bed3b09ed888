//! Candidate collision queue.
//!
//! Each circularly adjacent pair whose trailing front is faster than its
//! leading front contributes one candidate. Candidates are invalidated
//! lazily: a popped entry is discarded unless both fronts are still alive
//! with unchanged generations and still adjacent. Because a front's
//! trajectory never changes without its generation being bumped, surviving
//! predictions stay exact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::tape::{FrontId, Tape};
use crate::riemann::WaveFamily;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub t: f64,
    /// Predicted meeting position; tie-break key after time.
    pub pos: f64,
    /// 0 for a trailing 1-front, 1 for a trailing 2-front.
    pub fam_key: u8,
    pub a_slot: u32,
    pub a_gen: u32,
    pub b_slot: u32,
    pub b_gen: u32,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .partial_cmp(&other.t)
            .expect("finite event times")
            .then(self.pos.partial_cmp(&other.pos).expect("finite positions"))
            .then(self.fam_key.cmp(&other.fam_key))
            .then(self.a_slot.cmp(&other.a_slot))
    }
}

/// Builds the candidate for the adjacent pair `(a, next(a))` at time `t`,
/// when the pair is actually closing.
pub(crate) fn candidate_for(tape: &Tape, a: u32, b: u32, t: f64) -> Option<Candidate> {
    if a == b {
        return None;
    }
    let da = tape.data(a);
    let db = tape.data(b);
    let rel = da.speed - db.speed;
    if !(rel > 0.0) {
        return None;
    }
    let gap = tape.gap_at(a, b, t);
    let dt = gap / rel;
    let t_c = t + dt;
    let pos = tape.reduce(tape.pos_at(a, t) + da.speed * dt);
    Some(Candidate {
        t: t_c,
        pos,
        fam_key: match da.family {
            WaveFamily::One => 0,
            WaveFamily::Two => 1,
        },
        a_slot: a,
        a_gen: tape.gen_of(a),
        b_slot: b,
        b_gen: tape.gen_of(b),
    })
}

#[derive(Debug, Default)]
pub(crate) struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<Candidate>>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rebuild(&mut self, tape: &Tape) {
        self.heap.clear();
        let t = tape.time();
        let mut cands = Vec::new();
        tape.visit_slots(|slot, d| {
            if let Some(c) = candidate_for(tape, slot, d.next, t) {
                cands.push(std::cmp::Reverse(c));
            }
        });
        self.heap.extend(cands);
    }

    /// Inserts the candidate for the pair `(slot, next(slot))`.
    pub fn push_pair(&mut self, tape: &Tape, slot: u32, t: f64) {
        if !tape.is_live(tape.id_of(slot)) {
            return;
        }
        let next = tape.data(slot).next;
        if let Some(c) = candidate_for(tape, slot, next, t) {
            self.heap.push(std::cmp::Reverse(c));
        }
    }

    fn is_valid(&self, tape: &Tape, c: &Candidate) -> bool {
        tape.is_live(FrontId { slot: c.a_slot, gen: c.a_gen })
            && tape.is_live(FrontId { slot: c.b_slot, gen: c.b_gen })
            && tape.data(c.a_slot).next == c.b_slot
    }

    /// Pops the earliest valid candidate with `t <= horizon`, discarding
    /// stale entries on the way. Entries beyond the horizon stay queued.
    pub fn pop_valid_until(&mut self, tape: &Tape, horizon: f64) -> Option<Candidate> {
        while let Some(std::cmp::Reverse(top)) = self.heap.peek() {
            if top.t > horizon {
                return None;
            }
            let c = self.heap.pop().unwrap().0;
            if self.is_valid(tape, &c) {
                return Some(c);
            }
        }
        None
    }
}
