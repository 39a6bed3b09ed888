//! Exact Riemann solver and wave-curve algebra for the homogeneous Lagrangian
//! system
//!
//! ```text
//!   u_t - v_y         = 0
//!   v_t + (a^2 / u)_y = 0
//! ```
//!
//! with specific volume `u > 0`, velocity `v` and sound-speed constant `a`.
//! The characteristic speeds are `-a/u` (family 1) and `+a/u` (family 2).
//! Both wave curves through a left state `(u_l, v_l)` admit the single
//! parametrization
//!
//! ```text
//!   v = v_l + 2 a h(eps),      h(eps) = eps      for eps >= 0 (rarefaction)
//!                              h(eps) = sinh eps for eps <  0 (shock)
//! ```
//!
//! where `eps = ln(u/u_l)/2` for family 1 and `eps = ln(u_l/u)/2` for
//! family 2. A Riemann problem between `(u_l, v_l)` and `(u_r, v_r)` reduces
//! to one scalar strictly monotone equation for the 1-wave strength:
//!
//! ```text
//!   eps2 - eps1       = ln(u_l/u_r)/2 =: d
//!   h(eps1) + h(eps2) = (v_r - v_l)/(2a)
//! ```
//!
//! Since `h' >= 1`, `f(e) = h(e) + h(e + d)` is strictly increasing with
//! `f' >= 2` and the root is unique. We solve with safeguarded Newton and a
//! bisection fallback.

use thiserror::Error;

/// Strengths with magnitude below this are clamped to exactly zero by
/// [`solve_riemann`], so that phantom fronts never enter the event queue.
/// This perturbs the linear functional at the `1e-14` scale.
pub const EPS_CLAMP: f64 = 1e-14;

/// Default residual tolerance of the scalar Riemann iteration. With
/// `f' >= 2` the resulting strength error is at most half of this.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_ITER: usize = 120;

/// Errors of the wave-curve layer.
#[derive(Debug, Error, PartialEq)]
pub enum RiemannError {
    #[error("specific volume must be strictly positive, got {0}")]
    NonPositiveVolume(f64),
    #[error("scalar iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("states do not lie on the requested shock branch (u_l={ul}, u_r={ur})")]
    NotAShock { ul: f64, ur: f64 },
    #[error("rarefaction threshold must be strictly positive, got {0}")]
    InvalidThreshold(f64),
    #[error("split_rarefaction expects a positive strength, got {0}")]
    NotARarefaction(f64),
}

/// A constant Lagrangian state: specific volume `u > 0` and velocity `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub u: f64,
    pub v: f64,
}

impl State {
    pub fn new(u: f64, v: f64) -> Result<Self, RiemannError> {
        if !(u > 0.0) || !u.is_finite() {
            return Err(RiemannError::NonPositiveVolume(u));
        }
        Ok(State { u, v })
    }
}

/// The two characteristic families. Family 1 travels with strictly negative
/// speed `-a/u`, family 2 with strictly positive speed `+a/u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WaveFamily {
    One,
    Two,
}

impl WaveFamily {
    /// Sign of the family's characteristic speed: -1 for family 1, +1 for 2.
    pub fn speed_sign(self) -> f64 {
        match self {
            WaveFamily::One => -1.0,
            WaveFamily::Two => 1.0,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            WaveFamily::One => WaveFamily::Two,
            WaveFamily::Two => WaveFamily::One,
        }
    }

    /// Sign convention of the strength-to-`ln u` map: `ln(u_r/u_l) = 2 s eps`
    /// with `s = +1` for family 1 and `s = -1` for family 2.
    pub fn volume_sign(self) -> f64 {
        match self {
            WaveFamily::One => 1.0,
            WaveFamily::Two => -1.0,
        }
    }
}

/// Linear pressure law `p(rho) = alpha^2 rho`, i.e. `p(u) = alpha^2 / u` in
/// Lagrangian variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    alpha: f64,
}

impl PressureLaw {
    pub fn new(alpha: f64) -> Result<Self, RiemannError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(RiemannError::NonPositiveVolume(alpha));
        }
        Ok(PressureLaw { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Lagrangian pressure `alpha^2 / u`.
    pub fn pressure(&self, u: f64) -> f64 {
        self.alpha * self.alpha / u
    }

    /// Characteristic speed of the given family at volume `u`.
    pub fn char_speed(&self, family: WaveFamily, u: f64) -> f64 {
        family.speed_sign() * self.alpha / u
    }
}

/// Output of an exact Riemann solve: the 1- and 2-wave strengths and the
/// middle state reached from the left state along the 1-curve.
#[derive(Debug, Clone, Copy)]
pub struct RiemannFan {
    pub eps1: f64,
    pub eps2: f64,
    pub middle: State,
}

/// The wave-strength map `h`: identity on rarefactions, `sinh` on shocks.
/// Strictly increasing with `h' >= 1` everywhere.
pub fn strength_fn(eps: f64) -> f64 {
    if eps >= 0.0 {
        eps
    } else {
        eps.sinh()
    }
}

/// Derivative of [`strength_fn`]: `1` for `eps >= 0`, `cosh eps` below.
pub fn strength_fn_deriv(eps: f64) -> f64 {
    if eps >= 0.0 {
        1.0
    } else {
        eps.cosh()
    }
}

/// State reached from `left` along the wave curve of `family` with signed
/// strength `eps` (positive: rarefaction, negative: shock):
/// `u = u_l exp(2 s eps)`, `v = v_l + 2 a h(eps)` with `s` the family's
/// volume sign.
pub fn wave_curve(family: WaveFamily, left: State, eps: f64, law: &PressureLaw) -> State {
    let u = left.u * (2.0 * family.volume_sign() * eps).exp();
    let v = left.v + 2.0 * law.alpha() * strength_fn(eps);
    State { u, v }
}

/// Exact Rankine-Hugoniot speed of a shock of the given family between
/// volumes `u_l` and `u_r`: `-a/sqrt(u_l u_r)` for family 1 and
/// `+a/sqrt(u_l u_r)` for family 2. The shock branch requires `u_r < u_l`
/// for family 1 and `u_r > u_l` for family 2.
pub fn shock_speed(
    family: WaveFamily,
    u_l: f64,
    u_r: f64,
    law: &PressureLaw,
) -> Result<f64, RiemannError> {
    if !(u_l > 0.0) {
        return Err(RiemannError::NonPositiveVolume(u_l));
    }
    if !(u_r > 0.0) {
        return Err(RiemannError::NonPositiveVolume(u_r));
    }
    let on_branch = match family {
        WaveFamily::One => u_r < u_l,
        WaveFamily::Two => u_r > u_l,
    };
    if !on_branch {
        return Err(RiemannError::NotAShock { ul: u_l, ur: u_r });
    }
    Ok(family.speed_sign() * law.alpha() / (u_l * u_r).sqrt())
}

/// Tracking speed of a rarefaction front: the characteristic speed of its
/// right state.
pub fn rarefaction_front_speed(family: WaveFamily, right: State, law: &PressureLaw) -> f64 {
    law.char_speed(family, right.u)
}

/// Tracking speed of a front with signed strength `eps` between `left` and
/// `right`: Rankine-Hugoniot speed for shocks, characteristic speed of the
/// right state for rarefaction fronts. Zero-strength fronts ride on the
/// characteristic of the right state as well.
pub fn front_speed(
    family: WaveFamily,
    eps: f64,
    left: State,
    right: State,
    law: &PressureLaw,
) -> Result<f64, RiemannError> {
    if eps < 0.0 {
        shock_speed(family, left.u, right.u, law)
    } else {
        Ok(rarefaction_front_speed(family, right, law))
    }
}

/// Splits a rarefaction of strength `eps > 0` into `N = floor(eps/eta) + 1`
/// sub-strengths, each strictly below `eta`. The first `N-1` entries equal
/// `eps/N` and the last absorbs the rounding remainder so the strengths sum
/// to `eps` exactly in floating point.
pub fn split_rarefaction(eps: f64, eta: f64) -> Result<Vec<f64>, RiemannError> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(RiemannError::InvalidThreshold(eta));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(RiemannError::NotARarefaction(eps));
    }
    let n = (eps / eta).floor() as usize + 1;
    let share = eps / n as f64;
    let mut out = vec![share; n];
    out[n - 1] = eps - share * (n - 1) as f64;
    Ok(out)
}

/// Solves the scalar equation `h(e) + h(e + d) = delta` for `e`, given the
/// logarithmic volume jump `d` and the scaled velocity jump `delta`. This is
/// the core of every Riemann solve; `d` is passed explicitly so that callers
/// who know it exactly (interactions compose strengths, time steps reuse the
/// incoming strength) do not re-derive it from state logarithms.
pub fn solve_strengths(d: f64, delta: f64, tol: f64) -> Result<(f64, f64), RiemannError> {
    let f = |e: f64| strength_fn(e) + strength_fn(e + d) - delta;
    let fp = |e: f64| strength_fn_deriv(e) + strength_fn_deriv(e + d);

    // |eps1|, |eps2| <= max(|d|, |delta|), so this bracket always contains
    // the root with a sign change.
    let bound = d.abs().max(delta.abs()) + 1.0;
    let mut lo = -bound;
    let mut hi = bound;
    debug_assert!(f(lo) <= 0.0 && f(hi) >= 0.0);

    let mut e = if delta.abs() <= f64::EPSILON && d.abs() <= f64::EPSILON {
        0.0
    } else {
        // Linearized guess; f' >= 2 keeps it inside the bracket in practice.
        (delta - strength_fn(d)).clamp(lo, hi) / 2.0
    };
    let mut fe = f(e);
    for _ in 0..MAX_ITER {
        if fe.abs() <= tol {
            let e1 = if e.abs() < EPS_CLAMP { 0.0 } else { e };
            let e2_raw = e + d;
            let e2 = if e2_raw.abs() < EPS_CLAMP { 0.0 } else { e2_raw };
            return Ok((e1, e2));
        }
        if fe > 0.0 {
            hi = e;
        } else {
            lo = e;
        }
        let step = fe / fp(e);
        let mut next = e - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == e {
            // Interval has collapsed to adjacent floats; accept.
            let e1 = if e.abs() < EPS_CLAMP { 0.0 } else { e };
            let e2_raw = e + d;
            let e2 = if e2_raw.abs() < EPS_CLAMP { 0.0 } else { e2_raw };
            return Ok((e1, e2));
        }
        e = next;
        fe = f(e);
    }
    Err(RiemannError::NoConvergence(MAX_ITER))
}

/// Exact Riemann solve between `left` and `right`. Returns the two wave
/// strengths and the middle state `wave_curve(One, left, eps1)`. Strengths
/// with magnitude below [`EPS_CLAMP`] come back as exactly zero.
pub fn solve_riemann(
    left: State,
    right: State,
    law: &PressureLaw,
    tol: f64,
) -> Result<RiemannFan, RiemannError> {
    if !(left.u > 0.0) {
        return Err(RiemannError::NonPositiveVolume(left.u));
    }
    if !(right.u > 0.0) {
        return Err(RiemannError::NonPositiveVolume(right.u));
    }
    let d = 0.5 * (left.u / right.u).ln();
    let delta = (right.v - left.v) / (2.0 * law.alpha());
    let (eps1, eps2) = solve_strengths(d, delta, tol)?;
    let middle = wave_curve(WaveFamily::One, left, eps1, law);
    Ok(RiemannFan { eps1, eps2, middle })
}

/// Resolves one front of strength `eps` after the damping step scales both
/// flanking velocities by `1 - k`. Returns `(eps_refl, eps_trans)` where the
/// transmitted wave keeps the family of the incoming front and the reflected
/// wave has the opposite family and opposite strength sign.
///
/// The logarithmic volume jump is reused from `eps` exactly, which makes the
/// identity `|eps_trans| + |eps_refl| = |eps|` hold bit-for-bit. The scalar
/// equation is written in a cancellation-free form so the reflected strength
/// stays accurate down to `|eps_refl| ~ 1e-17`.
pub fn resolve_damped_front(eps: f64, k: f64) -> (f64, f64) {
    debug_assert!(eps != 0.0 && k > 0.0 && k < 1.0);
    if eps > 0.0 {
        // Reflected shock x < 0: sinh(x) + x + k*eps = 0.
        let mut x = -0.5 * k * eps;
        for _ in 0..4 {
            let g = x.sinh() + x + k * eps;
            let gp = x.cosh() + 1.0;
            let next = x - g / gp;
            if next == x {
                break;
            }
            x = next;
        }
        (x, x + eps)
    } else {
        // Reflected rarefaction x > 0:
        //   x + cosh(eps) sinh(x) + sinh(eps) (2 sinh^2(x/2) + k) = 0.
        let ce = eps.cosh();
        let se = eps.sinh();
        let mut x = -k * se / (1.0 + ce);
        for _ in 0..6 {
            let half = 0.5 * x;
            let g = x + ce * x.sinh() + se * (2.0 * half.sinh() * half.sinh() + k);
            let gp = 1.0 + (x + eps).cosh();
            let next = x - g / gp;
            if next == x {
                break;
            }
            x = next;
        }
        (x, x + eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(alpha: f64) -> PressureLaw {
        PressureLaw::new(alpha).unwrap()
    }

    fn st(u: f64, v: f64) -> State {
        State::new(u, v).unwrap()
    }

    #[test]
    fn strength_fn_branches() {
        assert_eq!(strength_fn(0.0), 0.0);
        assert_eq!(strength_fn(0.3), 0.3);
        // Independent series oracle for sinh(-0.3): sum x^(2n+1)/(2n+1)!.
        let x: f64 = -0.3;
        let mut series = 0.0;
        let mut term = x;
        let mut n = 1u32;
        while term.abs() > 1e-20 {
            series += term;
            term *= x * x / ((n + 1) as f64 * (n + 2) as f64);
            n += 2;
        }
        assert!((strength_fn(-0.3) - series).abs() < 1e-15);
        assert!((series - (-0.3045202934471426)).abs() < 1e-15);
    }

    #[test]
    fn strength_fn_monotone_with_unit_slope() {
        let mut prev = strength_fn(-5.0);
        let mut x = -5.0 + 1e-3;
        while x < 5.0 {
            let cur = strength_fn(x);
            assert!(cur > prev);
            // derivative >= 1 means increments at least as large as dx
            assert!(cur - prev >= 1e-3 - 1e-12);
            prev = cur;
            x += 1e-3;
        }
    }

    #[test]
    fn wave_curve_examples() {
        let l = law(1.0);
        let a = wave_curve(WaveFamily::One, st(1.0, 0.0), 0.0, &l);
        assert_eq!((a.u, a.v), (1.0, 0.0));

        let b = wave_curve(WaveFamily::One, st(1.0, 0.0), 0.5, &l);
        assert!((b.u - 1.0f64.exp()).abs() < 1e-15);
        assert!((b.v - 1.0).abs() < 1e-15);
        // rarefaction branch of the 1-curve: v = v_l + a ln(u/u_l)
        assert!((b.v - (b.u / 1.0f64).ln()).abs() < 1e-15);

        let c = wave_curve(WaveFamily::Two, st(1.0, 0.0), -0.3, &l);
        assert!((c.u - 0.6f64.exp()).abs() < 1e-15);
        assert!((c.v - 2.0 * (-0.3f64).sinh()).abs() < 1e-15);
        // shock branch of the 2-curve satisfies the Rankine-Hugoniot pair
        // mu (u_r - u_l) = -(v_r - v_l), mu (v_r - v_l) = a^2/u_r - a^2/u_l.
        let mu = shock_speed(WaveFamily::Two, 1.0, c.u, &l).unwrap();
        assert!((mu * (c.u - 1.0) + c.v).abs() < 1e-14);
        assert!((mu * c.v - (1.0 / c.u - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn solve_riemann_equal_states() {
        let l = law(1.0);
        let fan = solve_riemann(st(1.0, 0.0), st(1.0, 0.0), &l, DEFAULT_TOL).unwrap();
        assert_eq!(fan.eps1, 0.0);
        assert_eq!(fan.eps2, 0.0);
        assert_eq!(fan.middle, st(1.0, 0.0));
    }

    #[test]
    fn solve_riemann_single_rarefaction() {
        let l = law(1.0);
        let fan =
            solve_riemann(st(1.0, 0.0), st(1.0f64.exp(), 1.0), &l, DEFAULT_TOL).unwrap();
        assert!((fan.eps1 - 0.5).abs() < 1e-12);
        assert_eq!(fan.eps2, 0.0);
    }

    #[test]
    fn solve_riemann_double_shock() {
        let l = law(1.0);
        let fan = solve_riemann(st(1.0, 0.0), st(1.0, -1.0), &l, DEFAULT_TOL).unwrap();
        let expected = (-0.25f64).asinh();
        assert!((fan.eps1 - expected).abs() < 1e-12);
        assert!((fan.eps2 - expected).abs() < 1e-12);
    }

    #[test]
    fn shock_speed_examples() {
        let l = law(1.0);
        let mu = shock_speed(WaveFamily::One, 1.0, 0.5, &l).unwrap();
        assert!((mu + 2.0f64.sqrt()).abs() < 1e-15);
        assert!(mu >= -2.0 && mu <= -1.0); // within [lambda1(u_r), lambda1(u_l)]

        let mu2 = shock_speed(WaveFamily::Two, 1.0, 4.0, &l).unwrap();
        assert!((mu2 - 0.5).abs() < 1e-15);
        // RH residuals with the v-jump taken from the wave curve
        let eps = 0.5 * (1.0f64 / 4.0).ln();
        let right = wave_curve(WaveFamily::Two, st(1.0, 0.0), eps, &l);
        assert!((right.u - 4.0).abs() < 1e-14);
        assert!((mu2 * (right.u - 1.0) + right.v).abs() < 1e-12);
        assert!((mu2 * right.v - (1.0 / right.u - 1.0)).abs() < 1e-12);

        assert_eq!(
            shock_speed(WaveFamily::One, 1.0, 1.0, &l),
            Err(RiemannError::NotAShock { ul: 1.0, ur: 1.0 })
        );
    }

    #[test]
    fn rarefaction_speed_examples() {
        let l1 = law(1.0);
        let l3 = law(3.0);
        assert_eq!(
            rarefaction_front_speed(WaveFamily::One, st(2.0, 7.0), &l1),
            -0.5
        );
        assert_eq!(
            rarefaction_front_speed(WaveFamily::Two, st(2.0, -1.0), &l1),
            0.5
        );
        assert_eq!(
            rarefaction_front_speed(WaveFamily::Two, st(1.0, 0.0), &l3),
            3.0
        );
    }

    #[test]
    fn split_rarefaction_examples() {
        let s = split_rarefaction(0.25, 0.1).unwrap();
        assert_eq!(s.len(), 3);
        for x in &s {
            assert!((x - 0.25 / 3.0).abs() < 1e-15 && *x < 0.1);
        }
        let sum: f64 = s.iter().sum();
        assert_eq!(sum, 0.25);

        assert_eq!(split_rarefaction(0.05, 0.1).unwrap(), vec![0.05]);

        let s3 = split_rarefaction(0.2, 0.1).unwrap();
        assert_eq!(s3.len(), 3);

        assert_eq!(
            split_rarefaction(0.1, 0.0),
            Err(RiemannError::InvalidThreshold(0.0))
        );
        assert_eq!(
            split_rarefaction(-0.1, 0.1),
            Err(RiemannError::NotARarefaction(-0.1))
        );
    }

    #[test]
    fn damped_front_sum_rule_is_exact() {
        for &eps in &[0.3f64, -0.3, 0.05, -0.05, 1.5, -1.5, 1e-10, -1e-10] {
            let (refl, trans) = resolve_damped_front(eps, 0.01);
            assert!(refl * eps < 0.0, "reflected wave flips sign");
            assert!(trans * eps > 0.0, "transmitted wave keeps sign");
            // bit-exact by construction
            assert_eq!(trans.abs() + refl.abs(), eps.abs());
        }
    }

    #[test]
    fn damped_front_residual_vanishes() {
        for &eps in &[0.4f64, -0.4, 0.01, -0.01] {
            for &k in &[0.01f64, 0.1] {
                let (refl, trans) = resolve_damped_front(eps, k);
                let resid = strength_fn(refl) + strength_fn(trans)
                    - (1.0 - k) * strength_fn(eps);
                assert!(resid.abs() < 1e-15, "eps={eps} k={k} resid={resid}");
            }
        }
    }
}
