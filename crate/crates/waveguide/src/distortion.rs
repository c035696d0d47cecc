//! Exterior distortion of the left arm and the complex-distorted operator `H_θ(F)`.
//!
//! The flow `s ↦ s + θ f(s)` with `f = −φ(F cos η · s)/(F cos η)` translates the far-left
//! region by `−θ/(F cos η)` and is the identity to the right of `(E + δE)/(F cos η) < 0`,
//! so the curved part of the strip is never touched.

use num_complex::Complex64;

use crate::geometry::{validate_hypotheses, FieldConfig, GuideGeometry, StarkPotential};
use crate::hamiltonian::{assemble_tensor, GridSpec, OperatorMatrix};
use crate::{Error, Result};

/// Default ratio `θ₀/δE`.
pub const DEFAULT_ALPHA: f64 = 0.25;
/// Default prefactor of the field ceiling `F₀`.
pub const DEFAULT_ALPHA_PRIME: f64 = 0.1;

/// Logistic form of the smoothstep: `S(x) = 1/(1 + e^{g(x)})` with `g = 1/x − 1/(1−x)`,
/// which equals `ψ(x)/(ψ(x) + ψ(1−x))` for `ψ(x) = e^{−1/x}`. Returns `S, S′, S″, S‴`.
pub fn smoothstep(x: f64) -> [f64; 4] {
    if x <= 0.0 {
        return [0.0, 0.0, 0.0, 0.0];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let y = 1.0 - x;
    let g = 1.0 / x - 1.0 / y;
    let g1 = -1.0 / (x * x) - 1.0 / (y * y);
    let g2 = 2.0 / (x * x * x) - 2.0 / (y * y * y);
    let g3 = -6.0 / (x * x * x * x) - 6.0 / (y * y * y * y);
    let e = (-g.abs()).exp();
    let (l, one_minus_l) = if g > 0.0 { (e / (1.0 + e), 1.0 / (1.0 + e)) } else { (1.0 / (1.0 + e), e / (1.0 + e)) };
    let l1 = -l * one_minus_l;
    let l2 = -l1 * (one_minus_l - l);
    let l3 = -l2 * (one_minus_l - l) + 2.0 * l1 * l1;
    [l, l1 * g1, l2 * g1 * g1 + l1 * g2, l3 * g1 * g1 * g1 + 3.0 * l2 * g1 * g2 + l1 * g3]
}

/// Sup-norms of `S′, S″, S‴` on a fine sample of `(0, 1)`.
fn smoothstep_bounds() -> [f64; 3] {
    let mut c = [0.0f64; 3];
    let n = 20000;
    for i in 1..n {
        let v = smoothstep(i as f64 / n as f64);
        for k in 0..3 {
            c[k] = c[k].max(v[k + 1].abs());
        }
    }
    c
}

/// Non-increasing cutoff, `1` below `E` and `0` above `E + δE`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffFunction {
    pub e: f64,
    pub delta_e: f64,
    /// `C_k` in `‖φ^(k)‖∞ = C_k / δE^k`, k = 1, 2, 3.
    pub c: [f64; 3],
}

/// Builds the exponential-mollifier cutoff on `[E, E + δE]`.
pub fn build_cutoff(e: f64, delta_e: f64) -> Result<CutoffFunction> {
    if !(delta_e > 0.0) || !delta_e.is_finite() || !e.is_finite() {
        return Err(Error::InvalidArgument(format!("cutoff needs finite E and deltaE > 0, got E={e}, deltaE={delta_e}")));
    }
    Ok(CutoffFunction { e, delta_e, c: smoothstep_bounds() })
}

impl CutoffFunction {
    /// `(φ, φ′, φ″, φ‴)` at `t`.
    pub fn eval(&self, t: f64) -> [f64; 4] {
        let x = (t - self.e) / self.delta_e;
        let s = smoothstep(x);
        let d = self.delta_e;
        [1.0 - s[0], -s[1] / d, -s[2] / (d * d), -s[3] / (d * d * d)]
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.eval(t)[0]
    }
}

/// `E = (2/3)(E₀ − λ₀)` and `δE = |E|/2`, so that `E − δE = E₀ − λ₀`.
pub fn reference_energy(e0: f64, lambda0: f64) -> Result<(f64, f64)> {
    if !(e0 < lambda0) {
        return Err(Error::InvalidArgument(format!("need E0 < lambda0, got E0={e0}, lambda0={lambda0}")));
    }
    let e = 2.0 * (e0 - lambda0) / 3.0;
    Ok((e, -e / 2.0))
}

/// `F₀ = α′ δE² min(1, 1/d)`.
pub fn max_field(delta_e: f64, d: f64, alpha_prime: f64) -> f64 {
    alpha_prime * delta_e * delta_e * (1.0f64).min(1.0 / d)
}

/// The vector field `f` with its derivatives and the critical distortion `θ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionField {
    pub kappa: f64,
    pub cutoff: CutoffFunction,
    pub alpha: f64,
    pub theta0: f64,
    /// Right edge of `supp f`, `(E + δE)/(F cos η)`.
    pub support_right: f64,
}

/// `f(s) = −φ(F cos η · s)/(F cos η)` with `θ₀ = α δE`.
pub fn distortion_field(field: FieldConfig, cutoff: &CutoffFunction, alpha: f64) -> Result<DistortionField> {
    let kappa = field.kappa();
    if !(kappa > 0.0) {
        return Err(Error::Hypothesis(format!(
            "distortion needs F cos(eta) > 0, got F={}, eta={}",
            field.f, field.eta
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let support_right = (cutoff.e + cutoff.delta_e) / kappa;
    if !(support_right < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "distortion support reaches s = {support_right} ≥ 0; need E + deltaE < 0"
        )));
    }
    Ok(DistortionField { kappa, cutoff: cutoff.clone(), alpha, theta0: alpha * cutoff.delta_e, support_right })
}

impl DistortionField {
    /// `(f, f′, f″, f‴)` at `s`.
    pub fn eval(&self, s: f64) -> [f64; 4] {
        let k = self.kappa;
        let p = self.cutoff.eval(k * s);
        [-p[0] / k, -p[1], -k * p[2], -k * k * p[3]]
    }

    /// Left edge of the transition, `E/(F cos η)`; `f` is constant to the left of it.
    pub fn support_left(&self) -> f64 {
        self.cutoff.e / self.kappa
    }

    /// Grid maxima of `|f′|, |f″|, |f‴|`.
    pub fn derivative_sup(&self, samples: usize) -> [f64; 3] {
        let (a, b) = (self.support_left(), self.support_right);
        let mut m = [0.0f64; 3];
        for i in 0..=samples {
            let v = self.eval(a + (b - a) * i as f64 / samples as f64);
            for k in 0..3 {
                m[k] = m[k].max(v[k + 1].abs());
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortedParams {
    pub theta: Complex64,
}

impl DistortedParams {
    pub fn imaginary(beta: f64) -> Self {
        DistortedParams { theta: Complex64::new(0.0, beta) }
    }

    pub fn real(theta: f64) -> Self {
        DistortedParams { theta: Complex64::new(theta, 0.0) }
    }

    pub fn beta(&self) -> f64 {
        self.theta.im
    }

    fn check(&self, df: &DistortionField) -> Result<()> {
        if !(self.theta.norm() < df.theta0) {
            return Err(Error::InvalidArgument(format!(
                "|theta| = {} must stay below theta0 = {}",
                self.theta.norm(),
                df.theta0
            )));
        }
        Ok(())
    }
}

/// `W_θ(F)` at `(s, u)`: the affine left branch evaluated at `s + θ f(s)`, `W` elsewhere.
pub fn distorted_stark(w: &StarkPotential, df: &DistortionField, p: &DistortedParams, s: f64, u: f64) -> Complex64 {
    if s < 0.0 {
        assert!(df.support_right < 0.0, "distortion support must stay in s < 0");
        let FieldConfig { f, eta } = w.field;
        let x = s + p.theta * df.eval(s)[0];
        (x * eta.cos() + eta.sin() * u) * f
    } else {
        Complex64::new(w.eval(s, u), 0.0)
    }
}

fn coefficient_guard(grid: &GridSpec, df: &DistortionField, p: &DistortedParams) -> Result<()> {
    let mut min_mod = f64::INFINITY;
    for i in 0..=grid.n_s {
        for s in [grid.s_half(i), grid.s(i.min(grid.n_s - 1))] {
            min_mod = min_mod.min((1.0 + p.theta * df.eval(s)[1]).norm());
        }
    }
    if min_mod < 0.5 {
        return Err(Error::DistortionTooStrong { min_modulus: min_mod });
    }
    Ok(())
}

/// `R_θ = (g/2) θf‴/(1+θf′)³ − (5g/4) θ²f″²/(1+θf′)⁴`.
fn r_theta(g: f64, theta: Complex64, fv: &[f64; 4]) -> Complex64 {
    let a = 1.0 + theta * fv[1];
    let a2 = a * a;
    theta * fv[3] * (0.5 * g) / (a2 * a) - theta * theta * (fv[2] * fv[2] * 1.25 * g) / (a2 * a2)
}

fn kinetic_coefficient(geom: &GuideGeometry, df: &DistortionField, theta: Complex64, s: f64, u: f64) -> Complex64 {
    let a = 1.0 + theta * df.eval(s)[1];
    Complex64::new(geom.metric(s, u), 0.0) * (1.0 / (a * a))
}

/// `T_{s,θ} + T_u` with the complex coefficient `(1+θf′)⁻² g` at half-points and `R_θ` on the
/// diagonal.
pub fn assemble_t_s_theta(
    geom: &GuideGeometry,
    grid: &GridSpec,
    df: &DistortionField,
    p: &DistortedParams,
) -> Result<OperatorMatrix> {
    validate_hypotheses(geom, None).into_result()?;
    grid.check_contains(geom)?;
    coefficient_guard(grid, df, p)?;
    let theta = p.theta;
    Ok(assemble_tensor(
        grid,
        |s, u| kinetic_coefficient(geom, df, theta, s, u),
        |_, s, u| r_theta(geom.metric(s, u), theta, &df.eval(s)),
    ))
}

/// `T_{s,θ} + T_u + V₀ + W_θ(F)` as one complex-symmetric matrix.
pub fn assemble_h_theta(
    geom: &GuideGeometry,
    field: FieldConfig,
    grid: &GridSpec,
    df: &DistortionField,
    p: &DistortedParams,
) -> Result<OperatorMatrix> {
    validate_hypotheses(geom, Some(field)).into_result()?;
    grid.check_contains(geom)?;
    if !(df.support_right < 0.0) || (df.kappa - field.kappa()).abs() > 1e-15 * field.kappa().abs() {
        return Err(Error::InvalidArgument("distortion field does not match the field configuration".into()));
    }
    p.check(df)?;
    coefficient_guard(grid, df, p)?;
    let theta = p.theta;
    let w = StarkPotential::new(geom, field);
    Ok(assemble_tensor(
        grid,
        |s, u| kinetic_coefficient(geom, df, theta, s, u),
        |_, s, u| {
            r_theta(geom.metric(s, u), theta, &df.eval(s))
                + Complex64::new(geom.effective_potential(s, u), 0.0)
                + distorted_stark(&w, df, p, s, u)
        },
    ))
}
