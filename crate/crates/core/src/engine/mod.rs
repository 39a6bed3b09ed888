//! Event-driven front-tracking evolution on the mass torus, with the
//! fractional-step damping `v <- v (1 - M dt)` applied on the uniform grid
//! `t^n = n dt`.
//!
//! Between grid times the homogeneous system evolves exactly: fronts travel
//! at their assigned speeds until two circularly adjacent fronts meet. The
//! meeting is resolved by an exact Riemann solve between the outer states;
//! crossings of different families preserve both strengths bit-for-bit, and
//! same-family interactions produce one transmitted wave plus one reflected
//! wave of the opposite family. At every grid time each front is re-solved
//! against its damped flanking states, splitting it into a transmitted wave
//! of the same family and a small reflected wave.
//!
//! Boundary crossings are not events: positions are reduced modulo the
//! period, so a front leaving through one end re-enters from the other by
//! circular adjacency.

mod queue;
mod tape;

pub use tape::{Front, FrontId, Neumaier, Tape};

use crate::diagnostics::{c1_upper_shock, q_from_lagrangian};
use crate::profile::{ProfileError, ProfilePair};
use crate::riemann::{
    self, front_speed, solve_strengths, split_rarefaction, strength_fn, wave_curve,
    PressureLaw, RiemannError, State, WaveFamily, EPS_CLAMP,
};
use queue::{Candidate, EventQueue};
use tape::{make_front_data, FrontData};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("specific volume must be strictly positive, got {0}")]
    NonPositiveVolume(f64),
    #[error("run parameter constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("fronts are not co-located: positions {pa} and {pb}")]
    NotCoLocated { pa: f64, pb: f64 },
    #[error("event count exceeded the configured cap of {0}")]
    EventOverflow(u64),
    #[error(transparent)]
    Riemann(#[from] RiemannError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Parameters of one approximate solution run.
#[derive(Debug, Clone)]
pub struct RunParams {
    /// Approximation index; controls the initial sampling resolution.
    pub nu: u32,
    /// Splitting time step.
    pub dt: f64,
    /// Rarefaction threshold: every rarefaction front is kept below this.
    pub eta: f64,
    /// Final time.
    pub t_final: f64,
    /// Total mass M, the period of the mass torus.
    pub total_mass: f64,
    /// Damping coefficient in `v <- v (1 - damping_m dt)`; equals the total
    /// mass for the alignment source with constant kernel.
    pub damping_m: f64,
    pub law: PressureLaw,
    /// Reflected fronts below this strength are discarded at time steps.
    pub eps_drop: f64,
    /// Hard cap on processed events, guarding against front accumulation.
    pub max_events: u64,
    /// Residual tolerance of the scalar Riemann solves.
    pub solver_tol: f64,
}

impl RunParams {
    pub fn new(nu: u32, dt: f64, eta: f64, t_final: f64, total_mass: f64, law: PressureLaw) -> Self {
        RunParams {
            nu,
            dt,
            eta,
            t_final,
            total_mass,
            damping_m: total_mass,
            law,
            eps_drop: 1e-14,
            max_events: 20_000_000,
            solver_tol: 1e-12,
        }
    }

    /// Damping factor per step is `1 - k` with `k = damping_m * dt`.
    pub fn damping_k(&self) -> f64 {
        self.damping_m * self.dt
    }

    /// Validates the structural constraints given the initial-data
    /// functional `q`: `M dt < 1` and `C1^-(q) M dt q <= eta`, which
    /// guarantees every reflected rarefaction born at a time step stays
    /// below the threshold.
    pub fn validate(&self, q: f64) -> Result<(), EngineError> {
        if !(self.dt > 0.0) || !(self.eta > 0.0) || !(self.total_mass > 0.0) {
            return Err(EngineError::ConstraintViolation(
                "dt, eta and total mass must be positive".into(),
            ));
        }
        let k = self.damping_k();
        if !(k < 1.0) {
            return Err(EngineError::ConstraintViolation(format!(
                "damping factor requires M dt < 1, got {k}"
            )));
        }
        let need = c1_upper_shock(q) * k * q;
        if need > self.eta {
            return Err(EngineError::ConstraintViolation(format!(
                "rarefaction threshold too small: C1^-(q) M dt q = {need} > eta = {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// A scheduled happening: either two adjacent fronts meet, or the splitting
/// grid is reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Collision { trailing: FrontId, leading: FrontId },
    TimeStep { n: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub when: f64,
}

/// One incoming jump of an interaction.
#[derive(Debug, Clone, Copy)]
pub struct JumpData {
    pub family: WaveFamily,
    pub eps: f64,
    pub left: State,
    pub right: State,
}

/// Everything observers need to know about one resolved interaction.
#[derive(Debug, Clone)]
pub struct InteractionInfo {
    pub t: f64,
    pub pos: f64,
    pub same_family: bool,
    pub incoming: [JumpData; 2],
    /// Ids the two incoming fronts had before being removed.
    pub removed_ids: [FrontId; 2],
    /// Ids of the outgoing fronts, in spatial order.
    pub out_ids: Vec<FrontId>,
    /// Signed strength of the outgoing same-family wave (before fan
    /// splitting); zero if none.
    pub transmitted: f64,
    /// Signed strength of the outgoing opposite-family wave; zero if none.
    /// Meaningful for same-family interactions.
    pub reflected: f64,
    /// Total strength clamped to zero during the resolve.
    pub clamped: f64,
    /// Set when both outgoing strengths vanished and the two incoming
    /// fronts annihilated.
    pub annihilated: bool,
    /// When annihilation merges two arcs, the front whose right state was
    /// re-pointed, with its old and new states.
    pub merged_prev: Option<(FrontId, State, State)>,
    pub(crate) regen: Vec<u32>,
}

/// Per-front outcome of one damping step.
#[derive(Debug, Clone, Copy)]
pub struct StepFrontInfo {
    pub id: FrontId,
    pub family: WaveFamily,
    pub eps_before: f64,
    pub eps_after: f64,
    /// Signed strength of the reflected wave produced by the re-solve,
    /// before any drop.
    pub eps_refl: f64,
    /// Id of the inserted reflected front, `None` if it was dropped.
    pub refl_id: Option<FrontId>,
}

/// Outcome of one damping step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub n: u64,
    pub t: f64,
    pub fronts: Vec<StepFrontInfo>,
    /// Total strength of dropped reflected fronts.
    pub dropped: f64,
}

/// Read-only hooks invoked by [`advance`] after every event. Diagnostics
/// and checkers are implemented as observers; a single run is strictly
/// sequential so the hooks see exact event-time tapes.
pub trait Observer {
    fn on_init(&mut self, _tape: &Tape) {}
    fn on_collision(&mut self, _info: &InteractionInfo, _tape: &Tape) {}
    fn on_step_pre(&mut self, _n: u64, _tape: &Tape) {}
    fn on_step(&mut self, _info: &StepInfo, _tape: &Tape) {}
    fn on_finish(&mut self, _tape: &Tape) {}
}

/// Expands a raw wave into tracked fronts: shocks stay single, rarefactions
/// are approximated by a fan of `floor(eps/eta) + 1` fronts each below the
/// threshold.
fn expand_wave(
    family: WaveFamily,
    eps: f64,
    eta: f64,
    out: &mut Vec<(WaveFamily, f64)>,
) -> Result<(), RiemannError> {
    if eps == 0.0 {
        return Ok(());
    }
    if eps < 0.0 {
        out.push((family, eps));
    } else {
        for s in split_rarefaction(eps, eta)? {
            out.push((family, s));
        }
    }
    Ok(())
}

/// Builds the chain of front records realizing `waves` between `left` and
/// `right`. Intermediate states follow the wave curves; the final piece
/// state is `right` itself, bit-for-bit, so the torus stays closed exactly.
fn build_chain(
    law: &PressureLaw,
    left: State,
    right: State,
    waves: &[(WaveFamily, f64)],
    pos: f64,
    t: f64,
) -> Result<Vec<FrontData>, RiemannError> {
    let mut nodes = Vec::with_capacity(waves.len());
    let mut cur = left;
    for (i, &(family, eps)) in waves.iter().enumerate() {
        let next_state = if i + 1 == waves.len() {
            right
        } else {
            wave_curve(family, cur, eps, law)
        };
        let speed = front_speed(family, eps, cur, next_state, law)?;
        nodes.push(make_front_data(family, eps, speed, pos, t, next_state));
        cur = next_state;
    }
    Ok(nodes)
}

/// Builds the initial tape from sampled piecewise-constant `(u0, v0)` data:
/// a Riemann solve at every jump, rarefactions split into fans. The sampled
/// profiles must share a breakpoint grid and have strictly positive `u0`.
pub fn build_initial_tape(data: &ProfilePair, params: &RunParams) -> Result<Tape, EngineError> {
    let u0 = &data.a;
    let v0 = &data.b;
    for &u in u0.values() {
        if !(u > 0.0) {
            return Err(EngineError::NonPositiveVolume(u));
        }
    }
    let q = q_from_lagrangian(data, params.law.alpha());
    params.validate(q)?;
    if (u0.period() - params.total_mass).abs() > 1e-12 * params.total_mass.max(1.0) {
        return Err(EngineError::ConstraintViolation(format!(
            "profile period {} does not match total mass {}",
            u0.period(),
            params.total_mass
        )));
    }

    let n = u0.len();
    let piece = |i: usize| State { u: u0.values()[i], v: v0.values()[i] };
    let mut tape = Tape::empty(u0.period(), params.law, piece(0));
    if n == 1 {
        return Ok(tape);
    }

    // Walk jumps in order, carrying the effective left state so that jumps
    // whose waves all clamp to zero merge into their left arc exactly.
    let mut chains: Vec<(f64, Vec<FrontData>)> = Vec::new();
    let mut carry = piece(0);
    for i in 1..=n {
        let idx = i % n;
        let target = piece(idx);
        let pos = u0.starts()[idx];
        let fan = riemann::solve_riemann(carry, target, &params.law, params.solver_tol)?;
        let mut waves = Vec::new();
        expand_wave(WaveFamily::One, fan.eps1, params.eta, &mut waves)?;
        expand_wave(WaveFamily::Two, fan.eps2, params.eta, &mut waves)?;
        if waves.is_empty() {
            if idx == 0 {
                // wrap jump degenerated: re-point the trailing arc to the
                // exact starting state (perturbation below the clamp scale)
                if let Some((_, last_chain)) = chains.last_mut() {
                    if let Some(last) = last_chain.last_mut() {
                        last.right = piece(0);
                        last.ln_u_right = piece(0).u.ln();
                    }
                }
            }
            continue; // carry stays
        }
        let nodes = build_chain(&params.law, carry, target, &waves, pos, 0.0)?;
        chains.push((pos, nodes));
        carry = target;
    }

    // Link everything into the circular list.
    let mut slots: Vec<u32> = Vec::new();
    for (_, chain) in chains {
        for node in chain {
            slots.push(tape.alloc(node));
        }
    }
    match slots.len() {
        0 => return Ok(tape),
        1 => {
            return Err(EngineError::ConstraintViolation(
                "initial data produced a single front; torus cannot close".into(),
            ))
        }
        _ => {}
    }
    let m = slots.len();
    for (i, &s) in slots.iter().enumerate() {
        let prev = slots[(i + m - 1) % m];
        let next = slots[(i + 1) % m];
        let d = tape.data_mut(s);
        d.prev = prev;
        d.next = next;
    }
    tape.set_head(slots[0]);
    debug_assert!(tape.check_consistency().is_ok());
    Ok(tape)
}

/// Returns the earliest event: the soonest meeting of circularly adjacent
/// fronts with positive closing speed, or the next splitting time if that
/// comes first. Ties are broken by (time, position, family 1 before 2,
/// slot), with collisions taking precedence over a simultaneous step.
pub fn next_event(tape: &Tape, params: &RunParams) -> Event {
    let n_next = (tape.time() / params.dt).floor() as u64 + 1;
    let t_step = params.dt * n_next as f64;
    let mut best: Option<Candidate> = None;
    tape.visit_slots(|slot, d| {
        if let Some(c) = queue::candidate_for(tape, slot, d.next, tape.time()) {
            if best.map_or(true, |b| c < b) {
                best = Some(c);
            }
        }
    });
    match best {
        Some(c) if c.t <= t_step => Event {
            kind: EventKind::Collision {
                trailing: FrontId { slot: c.a_slot, gen: c.a_gen },
                leading: FrontId { slot: c.b_slot, gen: c.b_gen },
            },
            when: c.t,
        },
        _ => Event {
            kind: EventKind::TimeStep { n: n_next },
            when: t_step,
        },
    }
}

/// Resolves the meeting of two adjacent co-located fronts. Different
/// families cross with strengths preserved exactly; same families merge
/// into a transmitted wave plus a reflected wave of the opposite family,
/// with outgoing rarefactions re-split into fans when they reach the
/// threshold.
pub fn resolve_interaction(
    tape: &mut Tape,
    trailing: FrontId,
    leading: FrontId,
    params: &RunParams,
) -> Result<InteractionInfo, EngineError> {
    if !tape.is_live(trailing) || !tape.is_live(leading) {
        return Err(EngineError::ConstraintViolation("stale front id".into()));
    }
    if tape.data(trailing.slot).next != leading.slot {
        return Err(EngineError::ConstraintViolation(
            "fronts are not adjacent".into(),
        ));
    }
    let t = tape.time();
    let pa = tape.pos_at(trailing.slot, t);
    let pb = tape.pos_at(leading.slot, t);
    let gap = tape.gap_at(trailing.slot, leading.slot, t);
    let tol = 1e-12 * tape.period();
    if gap > tol && tape.period() - gap > tol {
        return Err(EngineError::NotCoLocated { pa, pb });
    }
    resolve_pair(tape, trailing.slot, leading.slot, pa, t, params)
}

fn resolve_pair(
    tape: &mut Tape,
    a: u32,
    b: u32,
    pos: f64,
    t: f64,
    params: &RunParams,
) -> Result<InteractionInfo, EngineError> {
    let law = *tape.law();
    let da = tape.data(a).clone();
    let db = tape.data(b).clone();
    debug_assert_eq!(da.next, b);
    let outer_left = tape.left_state(a);
    let middle = da.right;
    let outer_right = db.right;
    let incoming = [
        JumpData { family: da.family, eps: da.eps, left: outer_left, right: middle },
        JumpData { family: db.family, eps: db.eps, left: middle, right: outer_right },
    ];
    let same_family = da.family == db.family;

    let mut transmitted = 0.0;
    let mut reflected = 0.0;
    let mut clamped = 0.0;
    let mut waves: Vec<(WaveFamily, f64)> = Vec::new();
    if !same_family {
        // Only a trailing 2-front can catch a leading 1-front.
        debug_assert_eq!(da.family, WaveFamily::Two);
        debug_assert_eq!(db.family, WaveFamily::One);
        waves.push((WaveFamily::One, db.eps));
        waves.push((WaveFamily::Two, da.eps));
    } else {
        // The logarithmic volume jump composes exactly from the incoming
        // strengths; only the velocity jump is read off the states.
        let d = match da.family {
            WaveFamily::Two => da.eps + db.eps,
            WaveFamily::One => -(da.eps + db.eps),
        };
        let delta = (outer_right.v - outer_left.v) / (2.0 * law.alpha());
        let (e1, e2) = solve_strengths(d, delta, params.solver_tol)?;
        let (trans, refl) = match da.family {
            WaveFamily::One => (e1, e2),
            WaveFamily::Two => (e2, e1),
        };
        transmitted = trans;
        reflected = refl;
        let raw1 = if da.family == WaveFamily::One { trans } else { refl };
        let raw2 = if da.family == WaveFamily::One { refl } else { trans };
        // account for clamping applied inside solve_strengths
        let exact_sum = strength_fn(e1) + strength_fn(e2);
        clamped = (exact_sum - delta).abs().min(EPS_CLAMP);
        expand_wave(WaveFamily::One, raw1, params.eta, &mut waves)?;
        expand_wave(WaveFamily::Two, raw2, params.eta, &mut waves)?;
    }

    let prev = da.prev;
    let next = db.next;
    let two_front_tape = prev == b;
    let removed_ids = [tape.id_of(a), tape.id_of(b)];
    let mut info = InteractionInfo {
        t,
        pos,
        same_family,
        incoming,
        removed_ids,
        out_ids: Vec::new(),
        transmitted,
        reflected,
        clamped,
        annihilated: waves.is_empty(),
        merged_prev: None,
        regen: Vec::new(),
    };

    if waves.is_empty() {
        if two_front_tape {
            // total annihilation of the last pair: constant tape
            debug_assert_eq!(next, a);
            tape.release(a);
            tape.release(b);
            tape.set_anchor(outer_right);
            return Ok(info);
        }
        if tape.n_fronts() == 3 {
            return Err(EngineError::ConstraintViolation(
                "near-annihilation would leave a single front".into(),
            ));
        }
        // merge the two arcs: the surviving arc takes the outer right state
        let old = tape.data(prev).right;
        tape.release(a);
        tape.release(b);
        let dp = tape.data_mut(prev);
        dp.next = next;
        dp.right = outer_right;
        dp.ln_u_right = outer_right.u.ln();
        tape.data_mut(next).prev = prev;
        tape.set_head(prev);
        info.merged_prev = Some((tape.id_of(prev), old, outer_right));
        info.regen = vec![prev];
        return Ok(info);
    }

    let nodes = build_chain(&law, outer_left, outer_right, &waves, pos, t)?;
    tape.release(a);
    tape.release(b);
    let mut slots = Vec::with_capacity(nodes.len());
    for node in nodes {
        slots.push(tape.alloc(node));
    }
    // link prev -> slots... -> next (when the tape had only these two
    // fronts, prev == b and next == a are gone: close the chain on itself)
    let (link_left, link_right) = if two_front_tape {
        (*slots.last().unwrap(), slots[0])
    } else {
        (prev, next)
    };
    let m = slots.len();
    for (i, &s) in slots.iter().enumerate() {
        let p = if i == 0 { link_left } else { slots[i - 1] };
        let nx = if i + 1 == m { link_right } else { slots[i + 1] };
        let d = tape.data_mut(s);
        d.prev = p;
        d.next = nx;
    }
    if !two_front_tape {
        tape.data_mut(link_left).next = slots[0];
        tape.data_mut(link_right).prev = *slots.last().unwrap();
    }
    tape.set_head(slots[0]);
    info.out_ids = slots.iter().map(|&s| tape.id_of(s)).collect();
    info.regen = if two_front_tape {
        slots.clone()
    } else {
        let mut r = vec![prev];
        r.extend_from_slice(&slots);
        r
    };
    Ok(info)
}

/// Applies the damping step at the current time (which must sit on the
/// splitting grid): scales every constant state's velocity by `1 - k`, then
/// re-solves every front against its damped flanks into a transmitted front
/// of the same family plus a reflected front of the opposite family at the
/// same position. Reflected fronts below `eps_drop` are discarded, folding
/// their strength into the transmitted front's metadata.
pub fn apply_time_step(tape: &mut Tape, params: &RunParams) -> Result<StepInfo, EngineError> {
    let ratio = tape.time() / params.dt;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 {
        return Err(EngineError::ConstraintViolation(format!(
            "time {} is not on the splitting grid dt = {}",
            tape.time(),
            params.dt
        )));
    }
    apply_time_step_inner(tape, params, n as u64)
}

fn apply_time_step_inner(
    tape: &mut Tape,
    params: &RunParams,
    n: u64,
) -> Result<StepInfo, EngineError> {
    let k = params.damping_k();
    if !(k < 1.0) {
        return Err(EngineError::ConstraintViolation(format!(
            "damping factor requires M dt < 1, got {k}"
        )));
    }
    let law = *tape.law();
    let t = tape.time();
    let factor = 1.0 - k;

    if tape.n_fronts() == 0 {
        let mut a = tape.anchor_state();
        a.v *= factor;
        tape.set_anchor(a);
        return Ok(StepInfo { n, t, fronts: Vec::new(), dropped: 0.0 });
    }

    let order = tape.slot_order();
    for &s in &order {
        tape.data_mut(s).right.v *= factor;
    }

    let mut infos = Vec::with_capacity(order.len());
    let mut dropped = 0.0;
    for &s in &order {
        let (family, eps) = {
            let d = tape.data(s);
            (d.family, d.eps)
        };
        let (refl, trans) = riemann::resolve_damped_front(eps, k);
        let left = tape.left_state(s);
        let mut refl_id = None;
        // freeze the parent's position at this instant
        let p = tape.pos_at(s, t);
        {
            let d = tape.data_mut(s);
            d.pos = p;
            d.t_ref = t;
        }
        if refl.abs() < params.eps_drop {
            dropped += refl.abs();
            let d = tape.data_mut(s);
            d.eps = trans;
            d.h_eps = strength_fn(trans);
            // flank volumes unchanged: the tracking speed stays valid
            tape.touch(s);
        } else {
            match family {
                WaveFamily::Two => {
                    // reflected 1-wave goes before the parent
                    let m = wave_curve(WaveFamily::One, left, refl, &law);
                    let rs = front_speed(WaveFamily::One, refl, left, m, &law)?;
                    let prev = tape.data(s).prev;
                    let node = make_front_data(WaveFamily::One, refl, rs, p, t, m);
                    let new = tape.alloc(node);
                    {
                        let d = tape.data_mut(new);
                        d.prev = prev;
                        d.next = s;
                    }
                    tape.data_mut(prev).next = new;
                    let right = tape.data(s).right;
                    let sp = front_speed(WaveFamily::Two, trans, m, right, &law)?;
                    {
                        let d = tape.data_mut(s);
                        d.prev = new;
                        d.eps = trans;
                        d.h_eps = strength_fn(trans);
                        d.speed = sp;
                    }
                    tape.touch(s);
                    refl_id = Some(tape.id_of(new));
                }
                WaveFamily::One => {
                    // reflected 2-wave goes after the parent; the parent's
                    // right arc becomes the new middle state
                    let m = wave_curve(WaveFamily::One, left, trans, &law);
                    let old_right = tape.data(s).right;
                    let next = tape.data(s).next;
                    let rs = front_speed(WaveFamily::Two, refl, m, old_right, &law)?;
                    let node = make_front_data(WaveFamily::Two, refl, rs, p, t, old_right);
                    let new = tape.alloc(node);
                    {
                        let d = tape.data_mut(new);
                        d.prev = s;
                        d.next = next;
                    }
                    tape.data_mut(next).prev = new;
                    {
                        let d = tape.data_mut(s);
                        d.next = new;
                        d.eps = trans;
                        d.h_eps = strength_fn(trans);
                        d.right = m;
                        d.ln_u_right = m.u.ln();
                        d.speed = front_speed(WaveFamily::One, trans, left, m, &law)?;
                    }
                    tape.touch(s);
                    refl_id = Some(tape.id_of(new));
                }
            }
        }
        infos.push(StepFrontInfo {
            id: tape.id_of(s),
            family,
            eps_before: eps,
            eps_after: trans,
            eps_refl: refl,
            refl_id,
        });
    }
    debug_assert!(tape.check_consistency().is_ok());
    Ok(StepInfo { n, t, fronts: infos, dropped })
}

/// Drives the tape to `params.t_final`, processing collisions and splitting
/// steps in deterministic order and invoking the observers after every
/// event. Between events fronts move linearly; nothing else changes.
pub fn advance(
    tape: &mut Tape,
    params: &RunParams,
    observers: &mut [&mut dyn Observer],
) -> Result<(), EngineError> {
    let dt = params.dt;
    let t_final = params.t_final;
    let mut n_step = (tape.time() / dt + 1e-12).floor() as u64;
    let mut queue = EventQueue::new();
    queue.rebuild(tape);
    for ob in observers.iter_mut() {
        ob.on_init(tape);
    }
    let mut events: u64 = 0;
    while tape.time() < t_final {
        let t_step = dt * (n_step + 1) as f64;
        let horizon = t_step.min(t_final);
        let cand = queue.pop_valid_until(tape, horizon);
        if let Some(c) = cand {
            let t_ev = c.t.max(tape.time());
            tape.time = t_ev;
            let info = resolve_pair(tape, c.a_slot, c.b_slot, c.pos, t_ev, params)?;
            for &s in &info.regen {
                queue.push_pair(tape, s, t_ev);
            }
            for ob in observers.iter_mut() {
                ob.on_collision(&info, tape);
            }
        } else if t_step <= t_final {
            tape.time = t_step;
            for ob in observers.iter_mut() {
                ob.on_step_pre(n_step + 1, tape);
            }
            let info = apply_time_step_inner(tape, params, n_step + 1)?;
            n_step += 1;
            queue.rebuild(tape);
            for ob in observers.iter_mut() {
                ob.on_step(&info, tape);
            }
        } else {
            tape.time = t_final;
            break;
        }
        events += 1;
        if events > params.max_events {
            return Err(EngineError::EventOverflow(events));
        }
    }
    for ob in observers.iter_mut() {
        ob.on_finish(tape);
    }
    Ok(())
}
