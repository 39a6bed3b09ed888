//! Per-event verification of every estimate the run is supposed to honor:
//! monotonicity of `L`, the `tv{ln u} = 2L` identity, the velocity-variation
//! bound, sup/inf comparability, torus closure, time-step sum rules and
//! reflection brackets, weighted-functional decay, conserved-integral
//! envelopes and shock admissibility.
//!
//! The checker maintains all functionals incrementally (compensated sums
//! plus an ordered multiset of piece volumes), so a full run of checks costs
//! `O(changed fronts)` per event. At every time step it resyncs against a
//! full recompute, which both kills rounding drift and cross-validates the
//! incremental bookkeeping.

use std::collections::BTreeMap;

use crate::engine::{InteractionInfo, Neumaier, Observer, RunParams, StepInfo, Tape};
use crate::riemann::{strength_fn, WaveFamily};

use super::{
    c1_lower, c1_upper_shock, conserved_integrals, shock_admissibility, C1_UPPER_RAREFACTION,
};

/// Tolerances and constants for one checked run.
#[derive(Debug, Clone)]
pub struct CheckerConfig {
    /// Initial-data functional assumed by every bound.
    pub q: f64,
    /// Shock weight of `L_xi`; pick `xi_max(q)` for the refined decay.
    pub xi: f64,
    /// Tolerance of exact identities (`delta L`, sum rules).
    pub tol_delta: f64,
    /// Tolerance of state-derived identities (`tv ln u = 2L`).
    pub tol_identity: f64,
    /// Torus-closure tolerance.
    pub tol_closure: f64,
    /// Relative grace on the reflection bracket; covers the last-ulp case
    /// where the `C_1^+` bound is an equality in the small-strength limit.
    pub bracket_grace: f64,
    /// Also check the Gronwall volume envelopes with the tightest
    /// admissible constants.
    pub check_envelopes: bool,
}

impl CheckerConfig {
    pub fn new(q: f64, xi: f64) -> Self {
        CheckerConfig {
            q,
            xi,
            tol_delta: 1e-12,
            tol_identity: 1e-10,
            tol_closure: 1e-10,
            bracket_grace: 1e-12,
            check_envelopes: true,
        }
    }
}

/// One violated inequality.
#[derive(Debug, Clone)]
pub struct Violation {
    pub t: f64,
    pub check: &'static str,
    /// By how much the bound was exceeded.
    pub excess: f64,
}

/// Extremes observed over a run; every field is the worst case over all
/// events, so margins can be reported even when nothing was violated.
#[derive(Debug, Clone, Default)]
pub struct CheckerStats {
    pub events: u64,
    pub collisions: u64,
    pub steps: u64,
    pub max_front_count: usize,
    pub dropped_total: f64,
    /// max of `delta L` over interactions (should be <= 0 up to rounding)
    pub max_delta_l_interaction: f64,
    /// max of `|delta L|` over time steps
    pub max_delta_l_step: f64,
    /// max of `delta L_xi + (xi-1)|eps_refl|` over same-family interactions
    pub max_lxi_decay: f64,
    /// max of `delta L_xi - (M/2) dt (xi-1) L` over time steps
    pub max_lxi_step_excess: f64,
    /// max of `|tv ln u - 2 L|`
    pub max_identity_residual: f64,
    /// max of `tv v - 2 a cosh(q) L`
    pub max_tvv_excess: f64,
    /// max of `sup u / (inf u e^{2q}) - 1`
    pub max_supinf_excess: f64,
    /// max strength-walk closure residuals
    pub max_closure_u: f64,
    pub max_closure_v: f64,
    /// max full state-walk residuals (sampled at steps)
    pub max_walk_u: f64,
    pub max_walk_v: f64,
    /// max of `||eps+| + |refl| - |eps-||` over damped fronts
    pub max_sum_rule_residual: f64,
    pub bracket_violations: u64,
    /// min of `|refl| / (c1(q) k |eps-|)` (>= 1 when the bracket holds)
    pub min_bracket_lower: f64,
    /// max of `|refl| / (C1 k |eps-|)` (<= 1 when the bracket holds)
    pub max_bracket_upper: f64,
    pub min_entropy_production: f64,
    pub lax_violations: u64,
    /// max of `L - q`
    pub max_l_minus_q: f64,
    /// max of `L - L(0+)`
    pub max_l_growth: f64,
    /// max of `|V(tn+) - (1-k) V(tn-)|`
    pub max_v_scaling_residual: f64,
    /// max of `|V| - envelope` at steps
    pub max_v_envelope_excess: f64,
    /// max of `|U - U(0)| - drift bound`
    pub max_u_drift_excess: f64,
    /// max rarefaction strength relative to eta
    pub max_rarefaction_over_eta: f64,
    /// worst internal disagreement between incremental and recomputed sums
    pub max_resync_drift: f64,
}

impl CheckerStats {
    fn new() -> Self {
        CheckerStats {
            min_bracket_lower: f64::INFINITY,
            min_entropy_production: f64::INFINITY,
            ..Default::default()
        }
    }
}

/// Observer that checks all run invariants event by event.
#[derive(Debug)]
pub struct InvariantChecker {
    cfg: CheckerConfig,
    params: RunParams,
    alpha: f64,
    // incremental functionals
    l: Neumaier,
    l_xi: Neumaier,
    tvlnu: Neumaier,
    tvv: Neumaier,
    s_eps: Neumaier,
    s_h: Neumaier,
    u_counts: BTreeMap<u64, u32>,
    // reference values
    l0: f64,
    u0_int: f64,
    v0_abs: f64,
    ell: f64,
    sup_u_run: f64,
    decay_pow: f64,
    // pre-step snapshot
    l_pre: f64,
    lxi_pre: f64,
    v_pre: f64,
    pub stats: CheckerStats,
    pub violations: Vec<Violation>,
    /// cap on stored violations; counting continues past it
    pub max_stored: usize,
    pub violation_count: u64,
}

impl InvariantChecker {
    pub fn new(cfg: CheckerConfig, params: RunParams) -> Self {
        let alpha = params.law.alpha();
        InvariantChecker {
            cfg,
            params,
            alpha,
            l: Neumaier::new(),
            l_xi: Neumaier::new(),
            tvlnu: Neumaier::new(),
            tvv: Neumaier::new(),
            s_eps: Neumaier::new(),
            s_h: Neumaier::new(),
            u_counts: BTreeMap::new(),
            l0: 0.0,
            u0_int: 0.0,
            v0_abs: 0.0,
            ell: 0.0,
            sup_u_run: 0.0,
            decay_pow: 1.0,
            l_pre: 0.0,
            lxi_pre: 0.0,
            v_pre: 0.0,
            stats: CheckerStats::new(),
            violations: Vec::new(),
            max_stored: 512,
            violation_count: 0,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count == 0
    }

    fn flag(&mut self, t: f64, check: &'static str, excess: f64) {
        self.violation_count += 1;
        if self.violations.len() < self.max_stored {
            self.violations.push(Violation { t, check, excess });
        }
    }

    fn weight(&self, eps: f64) -> f64 {
        if eps < 0.0 {
            self.cfg.xi * eps.abs()
        } else {
            eps
        }
    }

    fn multiset_add(&mut self, u: f64) {
        *self.u_counts.entry(u.to_bits()).or_insert(0) += 1;
    }

    fn multiset_remove(&mut self, u: f64) {
        let bits = u.to_bits();
        match self.u_counts.get_mut(&bits) {
            Some(c) if *c > 1 => *c -= 1,
            Some(_) => {
                self.u_counts.remove(&bits);
            }
            None => debug_assert!(false, "piece volume missing from multiset"),
        }
    }

    fn inf_sup_u(&self) -> (f64, f64) {
        let lo = self
            .u_counts
            .keys()
            .next()
            .map(|b| f64::from_bits(*b))
            .unwrap_or(f64::NAN);
        let hi = self
            .u_counts
            .keys()
            .next_back()
            .map(|b| f64::from_bits(*b))
            .unwrap_or(f64::NAN);
        (lo, hi)
    }

    /// Recomputes every incremental quantity from the tape.
    fn resync(&mut self, tape: &Tape) -> f64 {
        let mut l = Neumaier::new();
        let mut l_xi = Neumaier::new();
        let mut tvlnu = Neumaier::new();
        let mut tvv = Neumaier::new();
        let mut s_eps = Neumaier::new();
        let mut s_h = Neumaier::new();
        let mut counts = BTreeMap::new();
        let fronts = tape.fronts();
        for f in &fronts {
            l.add(f.eps.abs());
            l_xi.add(self.weight(f.eps));
            tvlnu.add((f.right.u.ln() - f.left.u.ln()).abs());
            tvv.add((f.right.v - f.left.v).abs());
            s_eps.add(2.0 * f.family.volume_sign() * f.eps);
            s_h.add(strength_fn(f.eps));
            *counts.entry(f.right.u.to_bits()).or_insert(0u32) += 1;
        }
        if fronts.is_empty() {
            *counts.entry(tape.anchor_state().u.to_bits()).or_insert(0) += 1;
        }
        let drift = (self.l.value() - l.value())
            .abs()
            .max((self.tvlnu.value() - tvlnu.value()).abs())
            .max((self.tvv.value() - tvv.value()).abs())
            .max((self.l_xi.value() - l_xi.value()).abs());
        self.l = l;
        self.l_xi = l_xi;
        self.tvlnu = tvlnu;
        self.tvv = tvv;
        self.s_eps = s_eps;
        self.s_h = s_h;
        self.u_counts = counts;
        drift
    }

    /// Checks that hold at every sampled instant.
    fn check_static(&mut self, t: f64) {
        let l = self.l.value();
        let q = self.cfg.q;

        let growth = l - self.l0;
        self.stats.max_l_growth = self.stats.max_l_growth.max(growth);
        if growth > self.cfg.tol_delta {
            self.flag(t, "L-nonincreasing", growth);
        }
        let over_q = l - q;
        self.stats.max_l_minus_q = self.stats.max_l_minus_q.max(over_q);
        if over_q > self.cfg.tol_delta {
            self.flag(t, "L-below-q", over_q);
        }

        let ident = (self.tvlnu.value() - 2.0 * l).abs();
        self.stats.max_identity_residual = self.stats.max_identity_residual.max(ident);
        if ident > self.cfg.tol_identity {
            self.flag(t, "tvlnu-identity", ident);
        }

        let tvv_excess = self.tvv.value() - 2.0 * self.alpha * q.cosh() * l;
        self.stats.max_tvv_excess = self.stats.max_tvv_excess.max(tvv_excess);
        if tvv_excess > self.cfg.tol_identity {
            self.flag(t, "tvv-bound", tvv_excess);
        }

        let (lo, hi) = self.inf_sup_u();
        if lo.is_finite() {
            let excess = hi / (lo * (2.0 * q).exp()) - 1.0;
            self.stats.max_supinf_excess = self.stats.max_supinf_excess.max(excess);
            if excess > 1e-12 {
                self.flag(t, "sup-inf-comparability", excess);
            }
        }

        let cu = self.s_eps.value().abs();
        let cv = 2.0 * self.alpha * self.s_h.value().abs();
        self.stats.max_closure_u = self.stats.max_closure_u.max(cu);
        self.stats.max_closure_v = self.stats.max_closure_v.max(cv);
        if cu > self.cfg.tol_closure {
            self.flag(t, "closure-volume", cu);
        }
        if cv > self.cfg.tol_closure {
            self.flag(t, "closure-velocity", cv);
        }
    }

    fn check_shock(&mut self, t: f64, family: WaveFamily, ul: f64, vl: f64, ur: f64, vr: f64, speed: f64) {
        let rep = shock_admissibility(family, ul, vl, ur, vr, speed, &self.params.law);
        self.stats.min_entropy_production =
            self.stats.min_entropy_production.min(rep.production);
        if !rep.admissible {
            self.flag(t, "entropy-production", -rep.production);
        }
        if !rep.lax_ok {
            self.stats.lax_violations += 1;
            self.flag(t, "lax-bracket", 0.0);
        }
    }

    fn check_rar_threshold(&mut self, t: f64, eps: f64) {
        if eps > 0.0 {
            let ratio = eps / self.params.eta;
            self.stats.max_rarefaction_over_eta =
                self.stats.max_rarefaction_over_eta.max(ratio);
            if ratio >= 1.0 + 1e-9 {
                self.flag(t, "rarefaction-threshold", ratio - 1.0);
            }
        }
    }
}

impl Observer for InvariantChecker {
    fn on_init(&mut self, tape: &Tape) {
        self.resync(tape);
        self.l0 = self.l.value();
        let (u0, v0) = conserved_integrals(tape);
        self.u0_int = u0;
        self.v0_abs = v0.abs();
        self.ell = u0;
        let (_, hi) = self.inf_sup_u();
        self.sup_u_run = hi;
        self.decay_pow = 1.0;
        self.stats.max_front_count = tape.n_fronts();
        let t = tape.time();
        self.check_static(t);
        for f in tape.fronts() {
            if f.eps < 0.0 {
                self.check_shock(t, f.family, f.left.u, f.left.v, f.right.u, f.right.v, f.speed);
            } else {
                self.check_rar_threshold(t, f.eps);
            }
        }
    }

    fn on_collision(&mut self, info: &InteractionInfo, tape: &Tape) {
        self.stats.events += 1;
        self.stats.collisions += 1;
        self.stats.max_front_count = self.stats.max_front_count.max(tape.n_fronts());
        let t = info.t;

        // incoming contributions
        let mut in_l = 0.0;
        let mut in_lxi = 0.0;
        for j in &info.incoming {
            in_l += j.eps.abs();
            in_lxi += self.weight(j.eps);
            self.l.add(-j.eps.abs());
            self.l_xi.add(-self.weight(j.eps));
            self.tvlnu.add(-(j.right.u.ln() - j.left.u.ln()).abs());
            self.tvv.add(-(j.right.v - j.left.v).abs());
            self.s_eps.add(-2.0 * j.family.volume_sign() * j.eps);
            self.s_h.add(-strength_fn(j.eps));
        }
        // the middle piece always dies
        self.multiset_remove(info.incoming[0].right.u);

        // outgoing contributions
        let mut out_l = 0.0;
        let mut out_lxi = 0.0;
        let n_out = info.out_ids.len();
        for (i, id) in info.out_ids.iter().enumerate() {
            let f = tape.front(*id).expect("fresh front");
            out_l += f.eps.abs();
            out_lxi += self.weight(f.eps);
            self.l.add(f.eps.abs());
            self.l_xi.add(self.weight(f.eps));
            self.tvlnu.add((f.right.u.ln() - f.left.u.ln()).abs());
            self.tvv.add((f.right.v - f.left.v).abs());
            self.s_eps.add(2.0 * f.family.volume_sign() * f.eps);
            self.s_h.add(strength_fn(f.eps));
            if i + 1 < n_out {
                self.multiset_add(f.right.u);
            }
            self.sup_u_run = self.sup_u_run.max(f.right.u);
            if f.eps < 0.0 {
                self.check_shock(t, f.family, f.left.u, f.left.v, f.right.u, f.right.v, f.speed);
            } else {
                self.check_rar_threshold(t, f.eps);
            }
        }
        if let Some((id, old, new)) = info.merged_prev {
            let f = tape.front(id).expect("merged neighbor");
            self.multiset_remove(old.u);
            self.tvlnu.add(
                (new.u.ln() - f.left.u.ln()).abs() - (old.u.ln() - f.left.u.ln()).abs(),
            );
            self.tvv
                .add((new.v - f.left.v).abs() - (old.v - f.left.v).abs());
        }
        if info.annihilated && info.merged_prev.is_none() {
            // pair on a two-front tape annihilated into a constant state;
            // multiset keeps the surviving anchor only
        }

        // delta L and the refined weighted decay
        let delta_l = out_l - in_l;
        self.stats.max_delta_l_interaction = self.stats.max_delta_l_interaction.max(delta_l);
        if delta_l > self.cfg.tol_delta {
            self.flag(t, "interaction-deltaL", delta_l);
        }
        if info.same_family {
            let decay = (out_lxi - in_lxi) + (self.cfg.xi - 1.0) * info.reflected.abs();
            self.stats.max_lxi_decay = self.stats.max_lxi_decay.max(decay);
            if decay > self.cfg.tol_delta {
                self.flag(t, "lxi-refined-decay", decay);
            }
        }

        self.check_static(t);
    }

    fn on_step_pre(&mut self, _n: u64, tape: &Tape) {
        let drift = self.resync(tape);
        self.stats.max_resync_drift = self.stats.max_resync_drift.max(drift);
        if drift > 1e-11 {
            self.flag(tape.time(), "internal-incremental-drift", drift);
        }
        self.l_pre = self.l.value();
        self.lxi_pre = self.l_xi.value();
        let (_, v) = conserved_integrals(tape);
        self.v_pre = v;
    }

    fn on_step(&mut self, info: &StepInfo, tape: &Tape) {
        self.stats.events += 1;
        self.stats.steps += 1;
        self.stats.max_front_count = self.stats.max_front_count.max(tape.n_fronts());
        self.stats.dropped_total += info.dropped;
        let t = info.t;
        let q = self.cfg.q;
        let k = self.params.damping_k();

        // per-front sum rule and reflection bracket (before drops)
        let c_lo = c1_lower(q);
        let c_hi_shock = c1_upper_shock(q);
        for fr in &info.fronts {
            let sum_resid = ((fr.eps_after.abs() + fr.eps_refl.abs()) - fr.eps_before.abs()).abs();
            self.stats.max_sum_rule_residual = self.stats.max_sum_rule_residual.max(sum_resid);
            if sum_resid > self.cfg.tol_delta {
                self.flag(t, "step-sum-rule", sum_resid);
            }
            let base = k * fr.eps_before.abs();
            let c_hi = if fr.eps_before > 0.0 { C1_UPPER_RAREFACTION } else { c_hi_shock };
            let lo_ratio = fr.eps_refl.abs() / (c_lo * base);
            let hi_ratio = fr.eps_refl.abs() / (c_hi * base);
            self.stats.min_bracket_lower = self.stats.min_bracket_lower.min(lo_ratio);
            self.stats.max_bracket_upper = self.stats.max_bracket_upper.max(hi_ratio);
            if lo_ratio < 1.0 - self.cfg.bracket_grace || hi_ratio > 1.0 + self.cfg.bracket_grace {
                self.stats.bracket_violations += 1;
                self.flag(t, "step-reflection-bracket", (hi_ratio - 1.0).max(1.0 - lo_ratio));
            }
            // a reflected wave born from a shock is a rarefaction and must
            // stay below the threshold
            self.check_rar_threshold(t, fr.eps_refl);
        }

        // the step legitimately changes every functional; replace the
        // incremental state wholesale (the returned delta is not drift here)
        self.resync(tape);

        // delta L across the step (drops included)
        let delta_l = (self.l.value() - self.l_pre).abs();
        self.stats.max_delta_l_step = self.stats.max_delta_l_step.max(delta_l);
        if delta_l > self.cfg.tol_delta {
            self.flag(t, "step-deltaL", delta_l);
        }

        // weighted functional may grow, but no faster than
        // (M/2) dt (xi-1) L(tn-)
        let lxi_growth = self.l_xi.value() - self.lxi_pre;
        let allowed = 0.5 * self.params.damping_m * self.params.dt * (self.cfg.xi - 1.0) * self.l_pre;
        let excess = lxi_growth - allowed;
        self.stats.max_lxi_step_excess = self.stats.max_lxi_step_excess.max(excess);
        if excess > self.cfg.tol_delta {
            self.flag(t, "lxi-step-growth", excess);
        }

        // conserved integrals
        let (u_int, v_int) = conserved_integrals(tape);
        let scale_resid = (v_int - (1.0 - k) * self.v_pre).abs();
        self.stats.max_v_scaling_residual = self.stats.max_v_scaling_residual.max(scale_resid);
        if scale_resid > 1e-12 * self.v_pre.abs().max(1.0) {
            self.flag(t, "momentum-scaling", scale_resid);
        }
        self.decay_pow *= 1.0 - k;
        let envelope = self.decay_pow * self.v0_abs
            + 2.0 * self.alpha * q * q.cosh() / self.params.damping_m * self.params.eta;
        let v_excess = v_int.abs() - envelope;
        self.stats.max_v_envelope_excess = self.stats.max_v_envelope_excess.max(v_excess);
        if v_excess > 1e-10 {
            self.flag(t, "momentum-envelope", v_excess);
        }
        let (_, sup_now) = self.inf_sup_u();
        self.sup_u_run = self.sup_u_run.max(sup_now);
        let drift_bound = 2.0 * q * (2.0 * q).exp() * self.params.eta * t * self.sup_u_run;
        let u_excess = (u_int - self.u0_int).abs() - drift_bound;
        self.stats.max_u_drift_excess = self.stats.max_u_drift_excess.max(u_excess);
        if u_excess > 1e-10 {
            self.flag(t, "mass-drift", u_excess);
        }

        // volume envelopes with the tightest admissible constants
        if self.cfg.check_envelopes && tape.n_fronts() > 0 {
            let m = self.params.total_mass;
            let c2 = 2.0 * q * (2.0 * q).exp() / m;
            let e2q = (2.0 * q).exp();
            let (inf_now, sup_now) = self.inf_sup_u();
            let c1 = self.ell / m + 1.0 / self.params.nu as f64;
            let upper = c1 * (c2 * self.params.eta * t).exp() * e2q;
            if sup_now > upper * (1.0 + 1e-10) {
                self.flag(t, "volume-envelope-upper", sup_now / upper - 1.0);
            }
            let c3 = self.ell / m - 1.0 / self.params.nu as f64;
            if c3 > 0.0 {
                let lower = c3 * (-c2 * self.params.eta * t).exp() / e2q;
                if inf_now < lower * (1.0 - 1e-10) {
                    self.flag(t, "volume-envelope-lower", lower / inf_now - 1.0);
                }
            }
        }

        // full state walk at steps ties the strength-sum closure shortcut
        // to the real composition of wave curves
        let (wu, wv) = tape.closure_walk();
        self.stats.max_walk_u = self.stats.max_walk_u.max(wu);
        self.stats.max_walk_v = self.stats.max_walk_v.max(wv);
        if wu > self.cfg.tol_closure || wv > self.cfg.tol_closure {
            self.flag(t, "closure-walk", wu.max(wv));
        }

        // damping rescales every shock's flanking velocities
        for f in tape.fronts() {
            if f.eps < 0.0 {
                self.check_shock(t, f.family, f.left.u, f.left.v, f.right.u, f.right.v, f.speed);
            }
        }

        self.check_static(t);
    }

    fn on_finish(&mut self, tape: &Tape) {
        let (wu, wv) = tape.closure_walk();
        self.stats.max_walk_u = self.stats.max_walk_u.max(wu);
        self.stats.max_walk_v = self.stats.max_walk_v.max(wv);
        if wu > self.cfg.tol_closure || wv > self.cfg.tol_closure {
            self.flag(tape.time(), "closure-walk", wu.max(wv));
        }
        let drift = self.resync(tape);
        self.stats.max_resync_drift = self.stats.max_resync_drift.max(drift);
        self.check_static(tape.time());
    }
}
