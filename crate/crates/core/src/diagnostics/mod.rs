//! Functionals and admissibility checks for the front-tracking run: the
//! linear functional `L`, the shock-weighted functional `L_xi`, conserved
//! integrals, sup/inf comparability, entropy production and Lax conditions,
//! plus the constants entering every estimate.
//!
//! All quantities here are pure read-only computations over tape snapshots.

mod checker;
mod traces;

pub use checker::{CheckerConfig, CheckerStats, InvariantChecker, Violation};
pub use traces::{TraceObserver, TraceRecord};

use crate::engine::{Front, Tape};
use crate::profile::{PiecewiseConstant, ProfilePair};
use crate::riemann::{PressureLaw, WaveFamily};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("the shock weight must satisfy xi >= 1, got {0}")]
    InvalidWeight(f64),
    #[error("entropy production is defined for shocks only (eps = {0})")]
    NotAShock(f64),
    #[error("density must be strictly positive")]
    NonPositiveDensity,
}

// ---------------------------------------------------------------------------
// Constants of the estimates
// ---------------------------------------------------------------------------

/// Lower reflection constant at a time step: `c_1(q) = 1 / (1 + cosh q)`.
pub fn c1_lower(q: f64) -> f64 {
    1.0 / (1.0 + q.cosh())
}

/// Upper reflection constant for a damped rarefaction: `C_1^+ = 1/2`.
pub const C1_UPPER_RAREFACTION: f64 = 0.5;

/// Upper reflection constant for a damped shock: `C_1^-(q) = cosh(q)/2`.
pub fn c1_upper_shock(q: f64) -> f64 {
    0.5 * q.cosh()
}

/// Cancellation constant `c(q) = (cosh q - 1)/(cosh q + 1)`.
pub fn cancellation_c(q: f64) -> f64 {
    (q.cosh() - 1.0) / (q.cosh() + 1.0)
}

/// Largest admissible shock weight, `xi = 1/c(q)`; infinite for `q = 0`.
pub fn xi_max(q: f64) -> f64 {
    let c = cancellation_c(q);
    if c > 0.0 {
        1.0 / c
    } else {
        f64::INFINITY
    }
}

/// Vertical-trace constant `Ctilde_1(q) = q (3 + cosh q)/2`.
pub fn ctilde1(q: f64) -> f64 {
    q * (3.0 + q.cosh()) / 2.0
}

/// Vertical-trace step constant `Ctilde_2(q) = C_1^-(q) + 1/2`.
pub fn ctilde2(q: f64) -> f64 {
    c1_upper_shock(q) + 0.5
}

// ---------------------------------------------------------------------------
// Initial-data functional
// ---------------------------------------------------------------------------

/// The initial-data functional
/// `q = tv{ln rho_0}/2 + tv{vv_0}/(2 alpha)`, taken circularly on the
/// period. Every bound of the run is expressed through this number.
pub fn q_of_initial_data(
    rho0: &PiecewiseConstant,
    vv0: &PiecewiseConstant,
    law: &PressureLaw,
) -> Result<f64, DiagnosticsError> {
    if rho0.values().iter().any(|&r| !(r > 0.0)) {
        return Err(DiagnosticsError::NonPositiveDensity);
    }
    Ok(0.5 * rho0.total_variation_of(f64::ln)
        + vv0.total_variation() / (2.0 * law.alpha()))
}

/// Same functional from Lagrangian data: `tv{ln u_0} = tv{ln rho_0}` since
/// the mass-coordinate change is a monotone reparametrization and
/// `ln u = -ln rho`.
pub fn q_from_lagrangian(data: &ProfilePair, alpha: f64) -> f64 {
    0.5 * data.a.total_variation_of(f64::ln) + data.b.total_variation() / (2.0 * alpha)
}

// ---------------------------------------------------------------------------
// Tape functionals
// ---------------------------------------------------------------------------

/// `L(t)`: the sum of front strengths in absolute value.
pub fn linear_functional(tape: &Tape) -> f64 {
    let mut sum = 0.0;
    tape.visit_strengths(|_, eps| sum += eps.abs());
    sum
}

/// `L_xi(t)`: rarefactions plus `xi` times shocks; collapses to `L` at
/// `xi = 1`.
pub fn weighted_functional(tape: &Tape, xi: f64) -> Result<f64, DiagnosticsError> {
    if !(xi >= 1.0) {
        return Err(DiagnosticsError::InvalidWeight(xi));
    }
    let mut sum = 0.0;
    tape.visit_strengths(|_, eps| {
        sum += if eps < 0.0 { xi * eps.abs() } else { eps };
    });
    Ok(sum)
}

/// Circular total variation of `ln u`; equals `2 L(t)` identically for a
/// consistent tape.
pub fn tv_ln_u(tape: &Tape) -> f64 {
    let fronts = tape.fronts();
    fronts
        .iter()
        .map(|f| (f.right.u.ln() - f.left.u.ln()).abs())
        .sum()
}

/// Circular total variation of `v`.
pub fn tv_v(tape: &Tape) -> f64 {
    let fronts = tape.fronts();
    fronts.iter().map(|f| (f.right.v - f.left.v).abs()).sum()
}

/// The conserved integrals `(U, V) = (int u dy, int v dy)` over the torus
/// decomposition induced by the fronts.
pub fn conserved_integrals(tape: &Tape) -> (f64, f64) {
    let m = tape.period();
    if tape.n_fronts() == 0 {
        let a = tape.anchor_state();
        return (m * a.u, m * a.v);
    }
    let fronts = tape.fronts();
    let mut u_int = 0.0;
    let mut v_int = 0.0;
    // piece before the first front belongs to the wrapped last arc
    let head_len = fronts[0].pos;
    u_int += head_len * fronts[0].left.u;
    v_int += head_len * fronts[0].left.v;
    for (i, f) in fronts.iter().enumerate() {
        let next = if i + 1 < fronts.len() { fronts[i + 1].pos } else { m };
        let len = next - f.pos;
        u_int += len * f.right.u;
        v_int += len * f.right.v;
    }
    (u_int, v_int)
}

/// Extremal volumes on the tape.
pub fn sup_inf_u(tape: &Tape) -> (f64, f64) {
    if tape.n_fronts() == 0 {
        let a = tape.anchor_state();
        return (a.u, a.u);
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    tape.visit_states(|s| {
        lo = lo.min(s.u);
        hi = hi.max(s.u);
    });
    (lo, hi)
}

/// Report of the sup/inf comparability bound `sup u <= inf u e^{2q}`.
#[derive(Debug, Clone, Copy)]
pub struct SupInfReport {
    pub inf_u: f64,
    pub sup_u: f64,
    pub ratio: f64,
    pub bound: f64,
    pub violated: bool,
}

pub fn sup_inf_report(tape: &Tape, q: f64) -> SupInfReport {
    let (inf_u, sup_u) = sup_inf_u(tape);
    let ratio = sup_u / inf_u;
    let bound = (2.0 * q).exp();
    SupInfReport {
        inf_u,
        sup_u,
        ratio,
        bound,
        violated: ratio > bound * (1.0 + 1e-12),
    }
}

// ---------------------------------------------------------------------------
// Entropy admissibility
// ---------------------------------------------------------------------------

/// The concrete convex entropy pair used for admissibility checks:
/// `eta(u, v) = v^2/2 - a^2 ln u` with flux `q(u, v) = a^2 v / u`. Its
/// Hessian is `diag(a^2/u^2, 1)`, positive definite for `u > 0`.
#[derive(Debug, Clone, Copy)]
pub struct EntropyPair {
    alpha: f64,
}

impl EntropyPair {
    pub fn new(law: &PressureLaw) -> Self {
        EntropyPair { alpha: law.alpha() }
    }

    pub fn eta(&self, u: f64, v: f64) -> f64 {
        0.5 * v * v - self.alpha * self.alpha * u.ln()
    }

    pub fn flux(&self, u: f64, v: f64) -> f64 {
        self.alpha * self.alpha * v / u
    }
}

/// Admissibility report for one shock front.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityReport {
    /// `mu [eta] - [q]`; nonnegative for admissible shocks.
    pub production: f64,
    pub admissible: bool,
    /// Characteristic speed on the left flank.
    pub lambda_left: f64,
    /// Characteristic speed on the right flank.
    pub lambda_right: f64,
    pub speed: f64,
    pub lax_ok: bool,
}

/// Entropy production and Lax bracketing across a shock front.
pub fn entropy_check(front: &Front, law: &PressureLaw) -> Result<AdmissibilityReport, DiagnosticsError> {
    if front.eps >= 0.0 {
        return Err(DiagnosticsError::NotAShock(front.eps));
    }
    Ok(shock_admissibility(
        front.family,
        front.left.u,
        front.left.v,
        front.right.u,
        front.right.v,
        front.speed,
        law,
    ))
}

pub(crate) fn shock_admissibility(
    family: WaveFamily,
    ul: f64,
    vl: f64,
    ur: f64,
    vr: f64,
    speed: f64,
    law: &PressureLaw,
) -> AdmissibilityReport {
    let pair = EntropyPair::new(law);
    let production = speed * (pair.eta(ur, vr) - pair.eta(ul, vl))
        - (pair.flux(ur, vr) - pair.flux(ul, vl));
    let ll = law.char_speed(family, ul);
    let lr = law.char_speed(family, ur);
    let tol = 1e-12 * (ll.abs() + lr.abs() + speed.abs());
    let lax_ok = ll + tol >= speed && speed >= lr - tol;
    AdmissibilityReport {
        production,
        admissible: production >= -1e-12,
        lambda_left: ll,
        lambda_right: lr,
        speed,
        lax_ok,
    }
}

// ---------------------------------------------------------------------------
// Sampled records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Init,
    Collision,
    StepPre,
    StepPost,
    Final,
}

impl RecordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::Init => "init",
            RecordKind::Collision => "collision",
            RecordKind::StepPre => "step_pre",
            RecordKind::StepPost => "step_post",
            RecordKind::Final => "final",
        }
    }
}

/// One sampled row of all functionals.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub kind: RecordKind,
    pub l: f64,
    pub l_xi: f64,
    pub xi: f64,
    pub tv_ln_u: f64,
    pub tv_v: f64,
    pub u_int: f64,
    pub v_int: f64,
    pub inf_u: f64,
    pub sup_u: f64,
    pub n_fronts: usize,
}

/// Full recompute of one diagnostics row.
pub fn sample(tape: &Tape, xi: f64, kind: RecordKind) -> DiagnosticsRecord {
    let (u_int, v_int) = conserved_integrals(tape);
    let (inf_u, sup_u) = sup_inf_u(tape);
    DiagnosticsRecord {
        t: tape.time(),
        kind,
        l: linear_functional(tape),
        l_xi: weighted_functional(tape, xi.max(1.0)).unwrap_or(f64::NAN),
        xi,
        tv_ln_u: tv_ln_u(tape),
        tv_v: tv_v(tape),
        u_int,
        v_int,
        inf_u,
        sup_u,
        n_fronts: tape.n_fronts(),
    }
}

/// Observer collecting [`DiagnosticsRecord`] rows at a configurable cadence.
#[derive(Debug)]
pub struct Recorder {
    pub xi: f64,
    pub every_collision: bool,
    pub records: Vec<DiagnosticsRecord>,
}

impl Recorder {
    pub fn new(xi: f64, every_collision: bool) -> Self {
        Recorder { xi, every_collision, records: Vec::new() }
    }
}

impl crate::engine::Observer for Recorder {
    fn on_init(&mut self, tape: &Tape) {
        self.records.push(sample(tape, self.xi, RecordKind::Init));
    }

    fn on_collision(&mut self, _info: &crate::engine::InteractionInfo, tape: &Tape) {
        if self.every_collision {
            self.records.push(sample(tape, self.xi, RecordKind::Collision));
        }
    }

    fn on_step_pre(&mut self, _n: u64, tape: &Tape) {
        self.records.push(sample(tape, self.xi, RecordKind::StepPre));
    }

    fn on_step(&mut self, _info: &crate::engine::StepInfo, tape: &Tape) {
        self.records.push(sample(tape, self.xi, RecordKind::StepPost));
    }

    fn on_finish(&mut self, tape: &Tape) {
        self.records.push(sample(tape, self.xi, RecordKind::Final));
    }
}
