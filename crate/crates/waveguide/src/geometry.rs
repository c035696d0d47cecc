//! Curvature profiles, the reference curve, and the potentials of the straightened strip.
//!
//! Arclength `s` runs along the reference curve, `u ∈ (0, d)` across the strip.
//! Curvature is supported on `[0, s0]`; the guide is straight on both arms.

use std::f64::consts::FRAC_PI_2;

use crate::{Error, Result};

/// Intervals per unit `s0` used for the cached angle tables.
const TABLE_DENSITY: f64 = 1024.0;

/// Signed curvature γ with analytic derivatives.
///
/// The bump is `γ(s) = gamma_max · (4t(1−t))^m` with `t = s/s0` and
/// `m = smoothness_order + 1`, so γ is `C^{smoothness_order}` on ℝ.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    pub gamma_max: f64,
    pub s0: f64,
    pub smoothness_order: u32,
}

/// Builds a polynomial bump supported exactly on `[0, s0]` with peak `gamma_max` at `s0/2`.
pub fn make_bump_profile(gamma_max: f64, s0: f64, smoothness_order: u32) -> Result<CurvatureProfile> {
    if !(s0 > 0.0) || !s0.is_finite() {
        return Err(Error::InvalidArgument(format!("bump support s0 must be positive, got {s0}")));
    }
    if !(gamma_max >= 0.0) || !gamma_max.is_finite() {
        return Err(Error::InvalidArgument(format!("gamma_max must be non-negative, got {gamma_max}")));
    }
    if smoothness_order < 2 {
        return Err(Error::InvalidArgument(format!(
            "smoothness_order must be at least 2, got {smoothness_order}"
        )));
    }
    Ok(CurvatureProfile { gamma_max, s0, smoothness_order })
}

impl CurvatureProfile {
    /// A straight guide (γ ≡ 0) with a nominal unit support.
    pub fn straight() -> Self {
        CurvatureProfile { gamma_max: 0.0, s0: 1.0, smoothness_order: 2 }
    }

    pub fn is_straight(&self) -> bool {
        self.gamma_max == 0.0
    }

    fn power(&self) -> i32 {
        self.smoothness_order as i32 + 1
    }

    /// Returns `(γ, γ′, γ″)` at `s`.
    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        if self.gamma_max == 0.0 || s <= 0.0 || s >= self.s0 {
            return (0.0, 0.0, 0.0);
        }
        let m = self.power();
        let t = s / self.s0;
        let q = 4.0 * t * (1.0 - t);
        let dq = 4.0 * (1.0 - 2.0 * t);
        let ddq = -8.0;
        let mf = m as f64;
        let g = self.gamma_max * q.powi(m);
        let g1 = self.gamma_max * mf * q.powi(m - 1) * dq / self.s0;
        let g2 = self.gamma_max
            * (mf * (mf - 1.0) * q.powi(m - 2) * dq * dq + mf * q.powi(m - 1) * ddq)
            / (self.s0 * self.s0);
        (g, g1, g2)
    }

    pub fn gamma(&self, s: f64) -> f64 {
        self.eval(s).0
    }

    pub fn gamma_d1(&self, s: f64) -> f64 {
        self.eval(s).1
    }

    pub fn gamma_d2(&self, s: f64) -> f64 {
        self.eval(s).2
    }
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = 2 * panels.max(1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// α(s) = −∫₀^s γ by composite Simpson with `panels` double-intervals.
pub fn tangent_angle(profile: &CurvatureProfile, s: f64, panels: usize) -> f64 {
    if s <= 0.0 || profile.is_straight() {
        return 0.0;
    }
    let upper = s.min(profile.s0);
    -simpson(|t| profile.gamma(t), 0.0, upper, panels)
}

/// Cumulative integral tabulated on a uniform grid over `[0, s0]`, interpolated by cubic Hermite
/// using the exact integrand as the derivative.
#[derive(Debug, Clone)]
struct CumulativeTable {
    s0: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl CumulativeTable {
    fn build<F: Fn(f64) -> f64>(s0: f64, intervals: usize, integrand: F) -> Self {
        let step = s0 / intervals as f64;
        let mut values = Vec::with_capacity(intervals + 1);
        let mut slopes = Vec::with_capacity(intervals + 1);
        let mut acc = 0.0;
        values.push(0.0);
        slopes.push(integrand(0.0));
        for i in 0..intervals {
            let a = i as f64 * step;
            let b = a + step;
            let fb = integrand(b);
            acc += step / 6.0 * (integrand(a) + 4.0 * integrand(0.5 * (a + b)) + fb);
            values.push(acc);
            slopes.push(fb);
        }
        CumulativeTable { s0, step, values, slopes }
    }

    fn total(&self) -> f64 {
        *self.values.last().unwrap()
    }

    fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= self.s0 {
            return self.total();
        }
        let n = self.values.len() - 1;
        let i = ((s / self.step) as usize).min(n - 1);
        let x = (s - i as f64 * self.step) / self.step;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.step, self.slopes[i + 1] * self.step);
        let x2 = x * x;
        let x3 = x2 * x;
        (2.0 * x3 - 3.0 * x2 + 1.0) * y0
            + (x3 - 2.0 * x2 + x) * m0
            + (-2.0 * x3 + 3.0 * x2) * y1
            + (x3 - x2) * m1
    }
}

/// Strip of width `d` around the reference curve with curvature `profile`.
#[derive(Debug, Clone)]
pub struct GuideGeometry {
    pub d: f64,
    pub profile: CurvatureProfile,
    pub alpha0: f64,
    alpha_table: CumulativeTable,
    intervals: usize,
}

impl GuideGeometry {
    pub fn new(d: f64, profile: CurvatureProfile) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidArgument(format!("strip width d must be positive, got {d}")));
        }
        let intervals = ((profile.s0 * TABLE_DENSITY).ceil() as usize).max(64);
        let p = profile.clone();
        let neg_int = CumulativeTable::build(profile.s0, intervals, move |t| -p.gamma(t));
        let alpha0 = neg_int.total();
        Ok(GuideGeometry { d, profile, alpha0, alpha_table: neg_int, intervals })
    }

    /// α(s) = −∫₀^s γ.
    pub fn alpha(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= self.profile.s0 {
            self.alpha0
        } else {
            self.alpha_table.eval(s)
        }
    }

    /// `(a(s), b(s)) = (∫₀^s cos α, ∫₀^s sin α)`.
    pub fn reference_curve(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            return (s, 0.0);
        }
        let s0 = self.profile.s0;
        let upper = s.min(s0);
        let n = ((upper / s0) * self.intervals as f64).ceil().max(1.0) as usize;
        let a = simpson(|t| self.alpha(t).cos(), 0.0, upper, n);
        let b = simpson(|t| self.alpha(t).sin(), 0.0, upper, n);
        if s <= s0 {
            (a, b)
        } else {
            (a + self.alpha0.cos() * (s - s0), b + self.alpha0.sin() * (s - s0))
        }
    }

    /// g(s,u) = (1 + uγ(s))⁻².
    pub fn metric(&self, s: f64, u: f64) -> f64 {
        let x = 1.0 + u * self.profile.gamma(s);
        1.0 / (x * x)
    }

    /// V₀(s,u) = −γ²/(4(1+uγ)²) + uγ″/(2(1+uγ)³) − (5/4)u²γ′²/(1+uγ)⁴.
    pub fn effective_potential(&self, s: f64, u: f64) -> f64 {
        effective_potential_from(self.profile.eval(s), u)
    }
}

/// V₀ from the triple `(γ, γ′, γ″)` at one arclength.
pub fn effective_potential_from((g, g1, g2): (f64, f64, f64), u: f64) -> f64 {
    let x = 1.0 + u * g;
    let x2 = x * x;
    -g * g / (4.0 * x2) + u * g2 / (2.0 * x2 * x) - 1.25 * u * u * g1 * g1 / (x2 * x2)
}

/// Field of strength `F` pointing in direction `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    pub f: f64,
    pub eta: f64,
}

impl FieldConfig {
    pub fn new(f: f64, eta: f64) -> Self {
        FieldConfig { f, eta }
    }

    /// Longitudinal field component on the left arm, `F cos η`.
    pub fn kappa(&self) -> f64 {
        self.f * self.eta.cos()
    }
}

/// The three-branch Stark potential W(F,s,u) bound to a geometry and a field.
#[derive(Debug, Clone)]
pub struct StarkPotential {
    pub field: FieldConfig,
    pub s0: f64,
    pub alpha0: f64,
    /// A = ∫₀^{s0} cos(η − α).
    pub a_const: f64,
    geom: GuideGeometry,
    cos_table: CumulativeTable,
}

impl StarkPotential {
    pub fn new(geom: &GuideGeometry, field: FieldConfig) -> Self {
        let eta = field.eta;
        let g = geom.clone();
        let cos_table =
            CumulativeTable::build(geom.profile.s0, geom.intervals, move |t| (eta - g.alpha(t)).cos());
        StarkPotential {
            field,
            s0: geom.profile.s0,
            alpha0: geom.alpha0,
            a_const: cos_table.total(),
            geom: geom.clone(),
            cos_table,
        }
    }

    pub fn eval(&self, s: f64, u: f64) -> f64 {
        let FieldConfig { f, eta } = self.field;
        if f == 0.0 {
            0.0
        } else if s < 0.0 {
            f * (eta.cos() * s + eta.sin() * u)
        } else if s <= self.s0 {
            f * (self.cos_table.eval(s) + (eta - self.geom.alpha(s)).sin() * u)
        } else {
            f * ((eta - self.alpha0).cos() * (s - self.s0) + self.a_const + (eta - self.alpha0).sin() * u)
        }
    }
}

/// Pass/fail status of one hypothesis with the measured quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&HypothesisCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// Converts the first failing check into a hypothesis error.
    pub fn into_result(self) -> Result<()> {
        match self.checks.iter().find(|c| !c.pass) {
            None => Ok(()),
            Some(c) => Err(Error::Hypothesis(format!("{} violated: {} ≥ {}", c.name, c.value, c.limit))),
        }
    }
}

/// Checks (h1) smoothness, (h2) `d·‖γ‖∞ < 1`, and, when a field is given, (h3).
pub fn validate_hypotheses(geom: &GuideGeometry, field: Option<FieldConfig>) -> HypothesisReport {
    let p = &geom.profile;
    let mut checks = vec![
        HypothesisCheck {
            name: "h1 smoothness order",
            value: p.smoothness_order as f64,
            limit: 2.0,
            pass: p.smoothness_order >= 2,
        },
        HypothesisCheck {
            name: "h2 d*gamma_max",
            value: geom.d * p.gamma_max,
            limit: 1.0,
            pass: geom.d * p.gamma_max < 1.0,
        },
    ];
    if let Some(fc) = field {
        let a = fc.eta.abs();
        let b = (fc.eta - geom.alpha0).abs();
        checks.push(HypothesisCheck { name: "h3 |eta|", value: a, limit: FRAC_PI_2, pass: a < FRAC_PI_2 });
        checks.push(HypothesisCheck {
            name: "h3 |eta-alpha0|",
            value: b,
            limit: FRAC_PI_2,
            pass: b < FRAC_PI_2,
        });
    }
    HypothesisReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u32, k: u32) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    /// ∫₀^{s0} gamma_max (4t(1−t))^m ds by exact polynomial expansion.
    fn exact_bump_integral(gmax: f64, s0: f64, m: u32) -> f64 {
        let mut acc = 0.0;
        for k in 0..=m {
            // (4t)^{m-k} (-4t^2)^k = 4^m (-1)^k t^{m+k}
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += binom(m, k) * sign * 4f64.powi(m as i32) / (m + k + 1) as f64;
        }
        gmax * s0 * acc
    }

    #[test]
    fn zero_amplitude_is_straight() {
        let p = make_bump_profile(0.0, 1.0, 2).unwrap();
        for s in [-1.0, 0.0, 0.3, 0.7, 2.0] {
            assert_eq!(p.eval(s), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn bump_peak_and_support() {
        let p = make_bump_profile(0.5, 4.0, 2).unwrap();
        assert_eq!(p.gamma(2.0), 0.5);
        assert_eq!(p.gamma(0.0), 0.0);
        assert_eq!(p.gamma(4.0), 0.0);
        assert_eq!(p.eval(-0.1), (0.0, 0.0, 0.0));
        assert_eq!(p.eval(4.1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn bad_profiles_rejected() {
        assert!(make_bump_profile(0.5, 0.0, 2).is_err());
        assert!(make_bump_profile(0.5, -1.0, 2).is_err());
        assert!(make_bump_profile(-0.5, 1.0, 2).is_err());
        assert!(make_bump_profile(0.5, 1.0, 1).is_err());
    }

    fn max_fd_error(p: &CurvatureProfile, h: f64, which: usize) -> f64 {
        let mut err: f64 = 0.0;
        let mut s = 0.1;
        while s < p.s0 - 0.1 {
            let (fp, fm) = (p.eval(s + h), p.eval(s - h));
            let (a, b, exact) = match which {
                1 => (fp.0, fm.0, p.eval(s).1),
                _ => (fp.1, fm.1, p.eval(s).2),
            };
            err = err.max(((a - b) / (2.0 * h) - exact).abs());
            s += 0.05;
        }
        err
    }

    #[test]
    fn derivatives_match_finite_differences_at_second_order() {
        let p = make_bump_profile(0.5, 4.0, 2).unwrap();
        for which in [1, 2] {
            let e1 = max_fd_error(&p, 1e-2, which);
            let e2 = max_fd_error(&p, 5e-3, which);
            let ratio = e1 / e2;
            assert!(e2 < 1e-4, "which={which} e2={e2}");
            assert!((3.5..4.5).contains(&ratio), "which={which} ratio={ratio}");
        }
    }

    #[test]
    fn tangent_angle_matches_exact_integral() {
        let p = make_bump_profile(0.5, 4.0, 2).unwrap();
        let exact = -exact_bump_integral(0.5, 4.0, 3);
        let (e1, e2) = ((tangent_angle(&p, 4.0, 200) - exact).abs(), (tangent_angle(&p, 4.0, 400) - exact).abs());
        assert!(e2 < 1e-10 && e1 / e2 > 12.0, "e1={e1} e2={e2}");
        assert!((tangent_angle(&p, 10.0, 400) - exact).abs() < 1e-10);
        assert_eq!(tangent_angle(&p, -2.0, 10), 0.0);
        let geom = GuideGeometry::new(1.0, p.clone()).unwrap();
        assert!((geom.alpha0 - exact).abs() < 1e-12);
        assert_eq!(geom.alpha(-1.0), 0.0);
        assert_eq!(geom.alpha(7.0), geom.alpha0);
        for s in [0.37, 1.0, 2.5, 3.91] {
            assert!((geom.alpha(s) - tangent_angle(&p, s, 2000)).abs() < 1e-12, "s={s}");
        }
    }

    #[test]
    fn straight_reference_curve_is_axis() {
        let geom = GuideGeometry::new(1.0, CurvatureProfile::straight()).unwrap();
        for s in [-3.0, 0.0, 0.5, 5.0] {
            let (a, b) = geom.reference_curve(s);
            assert!((a - s).abs() < 1e-14 && b.abs() < 1e-14);
            assert_eq!(geom.alpha(s), 0.0);
        }
    }

    #[test]
    fn reference_curve_round_trips_curvature() {
        let geom = GuideGeometry::new(1.0, make_bump_profile(0.5, 4.0, 2).unwrap()).unwrap();
        let err_at = |h: f64| {
            let mut err: f64 = 0.0;
            for k in 1..20 {
                let s = 0.2 * k as f64;
                let (ap, bp) = geom.reference_curve(s + h);
                let (a0, b0) = geom.reference_curve(s);
                let (am, bm) = geom.reference_curve(s - h);
                let (a1, b1) = ((ap - am) / (2.0 * h), (bp - bm) / (2.0 * h));
                let (a2, b2) = ((ap - 2.0 * a0 + am) / (h * h), (bp - 2.0 * b0 + bm) / (h * h));
                assert!((a1 * a1 + b1 * b1 - 1.0).abs() < 1e-3);
                err = err.max((b1 * a2 - a1 * b2 - geom.profile.gamma(s)).abs());
            }
            err
        };
        let (e1, e2) = (err_at(0.02), err_at(0.01));
        assert!(e2 < 1e-3, "e2={e2}");
        assert!((3.0..5.0).contains(&(e1 / e2)), "ratio={}", e1 / e2);
    }

    #[test]
    fn unit_speed() {
        let geom = GuideGeometry::new(1.0, make_bump_profile(0.9, 4.0, 2).unwrap()).unwrap();
        let h = 1e-4;
        for k in 0..50 {
            let s = -1.0 + 0.12 * k as f64;
            let (ap, bp) = geom.reference_curve(s + h);
            let (am, bm) = geom.reference_curve(s - h);
            let (a1, b1) = ((ap - am) / (2.0 * h), (bp - bm) / (2.0 * h));
            assert!((a1 * a1 + b1 * b1 - 1.0).abs() < 1e-7, "s={s}");
        }
    }

    #[test]
    fn metric_values() {
        let straight = GuideGeometry::new(1.0, CurvatureProfile::straight()).unwrap();
        assert_eq!(straight.metric(0.5, 0.7), 1.0);
        let geom = GuideGeometry::new(1.0, make_bump_profile(0.5, 4.0, 2).unwrap()).unwrap();
        assert_eq!(geom.metric(2.0, 0.0), 1.0);
        assert!((geom.metric(2.0, 1.0) - 4.0 / 9.0).abs() < 1e-15);
        let (lo, hi) = (1.0 / 1.5f64.powi(2), 1.0 / 0.5f64.powi(2));
        for i in 0..40 {
            for j in 0..=10 {
                let g = geom.metric(0.1 * i as f64, 0.1 * j as f64);
                assert!(g >= lo - 1e-15 && g <= hi + 1e-15);
            }
        }
    }

    #[test]
    fn effective_potential_values() {
        let straight = GuideGeometry::new(1.0, CurvatureProfile::straight()).unwrap();
        assert_eq!(straight.effective_potential(0.3, 0.4), 0.0);
        // constant-curvature interior: only the first term survives
        let v = effective_potential_from((0.5, 0.0, 0.0), 0.3);
        assert!((v + 0.25 / (4.0 * 1.15f64.powi(2))).abs() < 1e-15 && v < 0.0);
        // bump(0.5,4) at (2, 0.5): γ=0.5, γ′=0, γ″ = 0.5·3·(−8)/16
        let geom = GuideGeometry::new(1.0, make_bump_profile(0.5, 4.0, 2).unwrap()).unwrap();
        let g2 = -0.75;
        let x: f64 = 1.25;
        let by_hand = -0.25 / (4.0 * x * x) + 0.5 * g2 / (2.0 * x.powi(3));
        assert!((geom.effective_potential(2.0, 0.5) - by_hand).abs() < 1e-14);
        assert!((geom.effective_potential(2.0, 0.5) - (-0.136)).abs() < 1e-14);
    }

    #[test]
    fn stark_branches_and_continuity() {
        let geom = GuideGeometry::new(1.0, make_bump_profile(0.5, 4.0, 2).unwrap()).unwrap();
        let field = FieldConfig::new(0.3, 0.2);
        let w = StarkPotential::new(&geom, field);
        let u = 0.4;
        let s = -2.5;
        assert!((w.eval(s, u) - 0.3 * (0.2f64.cos() * s + 0.2f64.sin() * u)).abs() < 1e-15);
        let tol = 1e-12 * 0.3 * 4.0;
        for k in 0..=10 {
            let u = 0.1 * k as f64;
            assert!((w.eval(-1e-15, u) - w.eval(0.0, u)).abs() <= tol);
            assert!((w.eval(0.0, u) - 0.3 * 0.2f64.sin() * u).abs() <= tol);
            let left = w.eval(4.0, u);
            let right = w.eval(4.0 + 1e-15, u);
            assert!((left - right).abs() <= tol);
            let expect = 0.3 * (w.a_const + (0.2 - geom.alpha0).sin() * u);
            assert!((left - expect).abs() <= tol);
        }
        let direct = simpson(|t| (0.2 - geom.alpha(t)).cos(), 0.0, 4.0, 2000);
        assert!((w.a_const - direct).abs() < 1e-12);
    }

    #[test]
    fn hypotheses() {
        let geom = GuideGeometry::new(1.0, make_bump_profile(0.5, 4.0, 2).unwrap()).unwrap();
        assert!(validate_hypotheses(&geom, Some(FieldConfig::new(0.01, 0.0))).all_pass());
        let bent = GuideGeometry::new(1.0, make_bump_profile(1.2, 4.0, 2).unwrap()).unwrap();
        let rep = validate_hypotheses(&bent, None);
        assert_eq!(rep.failures().len(), 1);
        assert!(rep.failures()[0].name.starts_with("h2"));
        let rep = validate_hypotheses(&geom, Some(FieldConfig::new(0.01, FRAC_PI_2)));
        assert!(rep.failures().iter().any(|c| c.name == "h3 |eta|"));
        assert!(matches!(rep.into_result(), Err(Error::Hypothesis(_))));
    }
}
