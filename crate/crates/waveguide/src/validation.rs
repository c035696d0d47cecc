//! Independent cross-checks: tilted transverse mode, Airy scattering states, Weyl-sequence
//! residuals for `H(F)`, and real-θ unitary equivalence.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::distortion::{assemble_h_theta, smoothstep, DistortedParams, DistortionField};
use crate::eigensolve::{lowest_symmetric, SolverOptions};
use crate::geometry::{FieldConfig, GuideGeometry};
use crate::hamiltonian::{assemble_hf, GridSpec, WavefunctionGrid};
use crate::{Error, Result};

/// Lowest Dirichlet eigenpair of `−∂²_u + F sin η · u` on `(0, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedMode {
    pub energy: f64,
    /// Values at the `n_u` interior nodes, positive, with `Σ χ² h_u = 1`.
    pub chi: Vec<f64>,
    pub h_u: f64,
}

/// Number of eigenvalues of the symmetric tridiagonal `(a, b)` below `x`.
fn sturm_count(a: &[f64], b: f64, x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut q = 1.0;
    let mut count = 0;
    for (i, &ai) in a.iter().enumerate() {
        q = ai - x - if i == 0 { 0.0 } else { b * b / q };
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T − σ) x = r` for the constant-off-diagonal tridiagonal `T` by elimination.
fn tridiagonal_solve(a: &[f64], b: f64, sigma: f64, r: &mut [f64]) {
    let n = a.len();
    let tiny = f64::EPSILON * a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut c = vec![0.0; n];
    let mut piv = a[0] - sigma;
    if piv == 0.0 {
        piv = tiny;
    }
    r[0] /= piv;
    for i in 1..n {
        c[i - 1] = b / piv;
        piv = a[i] - sigma - b * c[i - 1];
        if piv == 0.0 {
            piv = tiny;
        }
        r[i] = (r[i] - b * r[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        r[i] -= c[i] * r[i + 1];
    }
}

pub fn tilted_transverse_mode(d: f64, n_u: usize, f: f64, eta: f64) -> Result<TiltedMode> {
    if !(d > 0.0) || n_u == 0 {
        return Err(Error::InvalidArgument(format!("need d > 0 and n_u ≥ 1, got d={d}, n_u={n_u}")));
    }
    if !(f >= 0.0) {
        return Err(Error::InvalidArgument(format!("field strength must be non-negative, got {f}")));
    }
    let h = d / (n_u + 1) as f64;
    let tilt = f * eta.sin();
    let a: Vec<f64> = (1..=n_u).map(|j| 2.0 / (h * h) + tilt * j as f64 * h).collect();
    let b = -1.0 / (h * h);
    let mut lo = a.iter().copied().fold(f64::INFINITY, f64::min) - 2.0 * b.abs();
    let mut hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0 * b.abs();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(&a, b, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let energy = 0.5 * (lo + hi);
    let mut chi: Vec<f64> = (1..=n_u).map(|j| (PI * j as f64 * h / d).sin()).collect();
    for _ in 0..3 {
        tridiagonal_solve(&a, b, energy, &mut chi);
        let norm = (chi.iter().map(|x| x * x).sum::<f64>() * h).sqrt();
        let sign = if chi.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        chi.iter_mut().for_each(|x| *x *= sign / norm);
    }
    Ok(TiltedMode { energy, chi, h_u: h })
}

/// Second-order Rayleigh–Schrödinger coefficient `C` in
/// `Ẽ₁ = (π/d)² + F sin η · d/2 + C F² + O(F⁴)`.
pub fn tilted_mode_second_order(d: f64, eta: f64) -> f64 {
    -(15.0 - PI * PI) / (48.0 * PI.powi(4)) * d.powi(4) * eta.sin().powi(2)
}

const AI0: f64 = 0.355_028_053_887_817_2;
const AI1: f64 = -0.258_819_403_792_806_8;
const BI0: f64 = 0.614_926_627_446_000_7;
const BI1: f64 = 0.448_288_357_353_826_4;

/// Outgoing solution of `−φ″ + F cos η · s · φ = λ φ` on the supplied points.
#[derive(Debug, Clone, PartialEq)]
pub struct AiryState {
    pub s: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub dphi: Vec<Complex64>,
    pub turning_point: f64,
    /// Limit of `|φ|(λ − F cos η · s)^{1/4}` as `s → −∞`, `κ^{1/6}/√π`.
    pub amplitude: f64,
}

type State = [Complex64; 2];

fn rk4(y: State, s: f64, h: f64, kappa: f64, lambda: f64) -> State {
    let rhs = |s: f64, y: &State| [y[1], y[0] * (kappa * s - lambda)];
    let k1 = rhs(s, &y);
    let y2 = [y[0] + k1[0] * (0.5 * h), y[1] + k1[1] * (0.5 * h)];
    let k2 = rhs(s + 0.5 * h, &y2);
    let y3 = [y[0] + k2[0] * (0.5 * h), y[1] + k2[1] * (0.5 * h)];
    let k3 = rhs(s + 0.5 * h, &y3);
    let y4 = [y[0] + k3[0] * h, y[1] + k3[1] * h];
    let k4 = rhs(s + h, &y4);
    let w = h / 6.0;
    [
        y[0] + (k1[0] + k2[0] * 2.0 + k3[0] * 2.0 + k4[0]) * w,
        y[1] + (k1[1] + k2[1] * 2.0 + k3[1] * 2.0 + k4[1]) * w,
    ]
}

/// Advances from `a` to `b` with steps short against the local wavelength.
fn integrate(mut y: State, a: f64, b: f64, kappa: f64, lambda: f64) -> State {
    let mut s = a;
    while (b - s).abs() > 0.0 {
        let k = (kappa * s - lambda).abs().sqrt().max(kappa.cbrt());
        let step = (0.01 / k).min((b - s).abs());
        let h = step.copysign(b - a);
        y = rk4(y, s, h, kappa, lambda);
        s = if (b - s).abs() <= step { b } else { s + h };
    }
    y
}

/// Integrates `Ai(x) + i Bi(x)`, `x = κ^{1/3}(s − λ/κ)`, outward from the turning point where
/// both functions are known exactly; its modulus behaves like `(λ − κ s)^{−1/4}` on the left.
pub fn airy_scattering_state(f: f64, eta: f64, lambda: f64, s_grid: &[f64]) -> Result<AiryState> {
    let kappa = f * eta.cos();
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("need F cos(eta) > 0, got {kappa}")));
    }
    if s_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("s grid must be strictly increasing".into()));
    }
    let st = lambda / kappa;
    let c = kappa.cbrt();
    let seed = [Complex64::new(AI0, BI0), Complex64::new(AI1, BI1) * c];
    let n = s_grid.len();
    let mut phi = vec![Complex64::new(0.0, 0.0); n];
    let mut dphi = phi.clone();
    let split = s_grid.partition_point(|&s| s < st);
    let (mut y, mut at) = (seed, st);
    for i in (0..split).rev() {
        y = integrate(y, at, s_grid[i], kappa, lambda);
        at = s_grid[i];
        phi[i] = y[0];
        dphi[i] = y[1];
    }
    let (mut y, mut at) = (seed, st);
    for i in split..n {
        y = integrate(y, at, s_grid[i], kappa, lambda);
        at = s_grid[i];
        phi[i] = y[0];
        dphi[i] = y[1];
    }
    if phi.iter().chain(&dphi).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("Airy integration blew up".into()));
    }
    Ok(AiryState {
        s: s_grid.to_vec(),
        phi,
        dphi,
        turning_point: st,
        amplitude: kappa.powf(1.0 / 6.0) / PI.sqrt(),
    })
}

impl AiryState {
    /// `(|φ|(λ−κs)^{1/4}, |φ′|(λ−κs)^{−1/4})` at every point left of the turning point.
    pub fn amplitude_law(&self, kappa: f64, lambda: f64) -> Vec<(f64, f64, f64)> {
        self.s
            .iter()
            .zip(self.phi.iter().zip(&self.dphi))
            .filter(|(s, _)| **s < self.turning_point)
            .map(|(&s, (p, dp))| {
                let z = lambda - kappa * s;
                (s, p.norm() * z.powf(0.25), dp.norm() * z.powf(-0.25))
            })
            .collect()
    }
}

/// Weyl-sequence parameters: target energy `E`, index `n`, window exponent `1/2 < α < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylParams {
    pub e: f64,
    pub n: u32,
    pub alpha_exp: f64,
}

impl WeylParams {
    pub fn new(e: f64, n: u32, alpha_exp: f64) -> Result<Self> {
        if !(alpha_exp > 0.5 && alpha_exp < 1.0) || n == 0 {
            return Err(Error::InvalidArgument(format!("need 1/2 < alpha < 1 and n ≥ 1, got {alpha_exp}, {n}")));
        }
        Ok(WeylParams { e, n, alpha_exp })
    }

    /// `ξ_n(s) = ξ((s + n)/n^α)`: centred at `−n`, half-width `n^α`.
    pub fn window(&self) -> (f64, f64) {
        let n = self.n as f64;
        let w = n.powf(self.alpha_exp);
        (-n - w, -n + w)
    }

    pub fn xi_n(&self, s: f64) -> f64 {
        let n = self.n as f64;
        weyl_cutoff((s + n) / n.powf(self.alpha_exp))
    }
}

/// Smooth characteristic function of `(−1, 1)`: `1` on `[−½, ½]`, `0` outside `(−1, 1)`.
pub fn weyl_cutoff(x: f64) -> f64 {
    1.0 - smoothstep(2.0 * x.abs() - 1.0)[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylResult {
    pub residual: f64,
    pub window: (f64, f64),
    pub lambda: f64,
    pub e1_tilde: f64,
}

/// `‖(H(F) − E) ψ_n‖` for `ψ_n ∝ χ̃₁(u) φ(s) ξ_n(s)`, with `χ̃₁` the discrete tilted mode on the
/// grid's `u` nodes and `λ = E − Ẽ₁`.
pub fn weyl_residual(geom: &GuideGeometry, field: FieldConfig, grid: &GridSpec, wp: &WeylParams) -> Result<WeylResult> {
    let (a, b) = wp.window();
    if a <= grid.l_minus + grid.h_s || b >= 0.0 {
        return Err(Error::DomainTooSmall(format!(
            "enlarge the domain: Weyl window [{a}, {b}] must lie inside ({}, 0)",
            grid.l_minus + grid.h_s
        )));
    }
    let mode = tilted_transverse_mode(geom.d, grid.n_u, field.f, field.eta)?;
    let lambda = wp.e - mode.energy;
    let idx: Vec<usize> = (0..grid.n_s).filter(|&i| grid.s(i) > a && grid.s(i) < b).collect();
    let s: Vec<f64> = idx.iter().map(|&i| grid.s(i)).collect();
    let airy = airy_scattering_state(field.f, field.eta, lambda, &s)?;
    let mut psi = WavefunctionGrid::zeros(*grid);
    for (k, &i) in idx.iter().enumerate() {
        let v = airy.phi[k] * wp.xi_n(s[k]);
        for j in 0..grid.n_u {
            psi.values[grid.index(i, j)] = v * mode.chi[j];
        }
    }
    let psi = psi.normalized();
    let h = assemble_hf(geom, field, grid)?;
    let mut r = h.apply_slice(&psi.values)?;
    for (x, p) in r.iter_mut().zip(&psi.values) {
        *x -= p * wp.e;
    }
    let residual = WavefunctionGrid::new(*grid, r)?.norm();
    Ok(WeylResult { residual, window: (a, b), lambda, e1_tilde: mode.energy })
}

/// Low-lying spectra of `H_θ(F)` on `[L, L₊]` against `H(F)` on `[L + θ f(L), L₊]`, at the grid
/// and at its refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryReport {
    pub theta: f64,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    pub max_coarse: f64,
    pub max_fine: f64,
    /// `max_coarse / max_fine`, about 4 for second-order agreement.
    pub ratio: f64,
}

fn matched_deviation(
    geom: &GuideGeometry,
    field: FieldConfig,
    grid: &GridSpec,
    df: &DistortionField,
    theta: f64,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let shifted = grid.l_minus + theta * df.eval(grid.l_minus)[0];
    let matched = GridSpec::new(shifted, grid.l_plus, grid.n_s, grid.n_u, geom.d)?;
    let a = lowest_symmetric(&assemble_h_theta(geom, field, grid, df, &DistortedParams::real(theta))?, opts)?;
    let b = lowest_symmetric(&assemble_hf(geom, field, &matched)?, opts)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x.value - y.value).norm()).collect())
}

pub fn unitary_equivalence_check(
    geom: &GuideGeometry,
    field: FieldConfig,
    grid: &GridSpec,
    df: &DistortionField,
    theta: f64,
    opts: &SolverOptions,
) -> Result<UnitaryReport> {
    let coarse = matched_deviation(geom, field, grid, df, theta, opts)?;
    let fine = matched_deviation(geom, field, &grid.refined(geom.d), df, theta, opts)?;
    let max_coarse = coarse.iter().copied().fold(0.0, f64::max);
    let max_fine = fine.iter().copied().fold(0.0, f64::max);
    Ok(UnitaryReport { theta, coarse, fine, max_coarse, max_fine, ratio: max_coarse / max_fine })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{build_cutoff, distortion_field, DEFAULT_ALPHA};
    use crate::geometry::{make_bump_profile, CurvatureProfile};
    use crate::hamiltonian::discrete_transverse_eigenvalue;

    #[test]
    fn untilted_mode_is_the_box_mode() {
        for (f, eta) in [(0.0, 0.7), (3.0, 0.0)] {
            let m = tilted_transverse_mode(1.0, 49, f, eta).unwrap();
            assert!((m.energy - discrete_transverse_eigenvalue(1.0, 49, 1)).abs() < 1e-11);
            let h = m.h_u;
            let peak = m.chi.iter().copied().fold(0.0, f64::max);
            for (j, c) in m.chi.iter().enumerate() {
                let s = (PI * (j + 1) as f64 * h).sin();
                assert!((c / peak - s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tilted_mode_matches_perturbation_series() {
        let eta = 0.8;
        let base = discrete_transverse_eigenvalue(1.0, 1999, 1);
        let c = tilted_mode_second_order(1.0, eta);
        for f in [0.25, 0.5, 1.0] {
            let e = tilted_transverse_mode(1.0, 1999, f, eta).unwrap().energy;
            let second = (e - base - f * eta.sin() * 0.5) / (f * f);
            assert!((second - c).abs() < 2e-3 * c.abs(), "F={f}: {second} vs {c}");
        }
    }

    #[test]
    fn tilted_mode_is_an_eigenvector() {
        let m = tilted_transverse_mode(2.0, 60, 1.5, -0.4).unwrap();
        let h = m.h_u;
        let t = 1.5 * (-0.4f64).sin();
        let n = m.chi.len();
        for j in 0..n {
            let l = if j > 0 { m.chi[j - 1] } else { 0.0 };
            let r = if j + 1 < n { m.chi[j + 1] } else { 0.0 };
            let lhs = (2.0 * m.chi[j] - l - r) / (h * h) + t * (j + 1) as f64 * h * m.chi[j];
            assert!((lhs - m.energy * m.chi[j]).abs() < 1e-8 * m.energy);
        }
    }

    #[test]
    fn airy_satisfies_its_equation() {
        let (f, eta, lambda) = (2.0, 0.3f64, 1.5);
        let kappa = f * eta.cos();
        let h = 1e-3;
        let s: Vec<f64> = (0..8001).map(|i| -6.0 + i as f64 * h).collect();
        let st = airy_scattering_state(f, eta, lambda, &s).unwrap();
        let scale = st.phi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for i in 2..s.len() - 2 {
            let p = &st.phi;
            let d2 = (-p[i - 2] + p[i - 1] * 16.0 - p[i] * 30.0 + p[i + 1] * 16.0 - p[i + 2]) / (12.0 * h * h);
            worst = worst.max((-d2 + p[i] * (kappa * s[i] - lambda)).norm());
        }
        assert!(worst / scale < 1e-6, "{}", worst / scale);
    }

    #[test]
    fn airy_seed_matches_known_values() {
        // Ai(1) and Bi(1) for κ = 1, λ = 0
        let st = airy_scattering_state(1.0, 0.0, 0.0, &[-1.0, 0.0, 1.0]).unwrap();
        assert!((st.phi[2].re - 0.135_292_416_312_881_4).abs() < 1e-10);
        assert!((st.phi[2].im - 1.207_423_594_952_871).abs() < 1e-9);
        assert!((st.phi[0].re - 0.535_560_883_292_352_6).abs() < 1e-10);
        assert!((st.phi[0].im - 0.103_997_389_496_944_6).abs() < 1e-10);
    }

    #[test]
    fn airy_amplitude_constant() {
        let (f, eta, lambda) = (1.0, 0.0, 0.5);
        let s: Vec<f64> = (0..=3000).map(|i| -60.0 + i as f64 * 0.02).collect();
        let st = airy_scattering_state(f, eta, lambda, &s).unwrap();
        for (x, a, b) in st.amplitude_law(f, lambda).into_iter().filter(|p| p.0 < -20.0) {
            assert!((a / st.amplitude - 1.0).abs() < 1e-3, "s={x} a={a}");
            assert!((b / st.amplitude - 1.0).abs() < 1e-3, "s={x} b={b}");
        }
    }

    #[test]
    fn weyl_cutoff_shape() {
        assert_eq!(weyl_cutoff(0.0), 1.0);
        assert_eq!(weyl_cutoff(0.5), 1.0);
        assert_eq!(weyl_cutoff(1.0), 0.0);
        assert_eq!(weyl_cutoff(-1.3), 0.0);
        assert!((weyl_cutoff(0.75) - 0.5).abs() < 1e-15);
        assert!(WeylParams::new(0.0, 4, 0.5).is_err());
        assert!(WeylParams::new(0.0, 4, 1.0).is_err());
    }

    fn weyl_setup() -> (GuideGeometry, FieldConfig) {
        (GuideGeometry::new(1.0, make_bump_profile(0.5, 4.0, 2).unwrap()).unwrap(), FieldConfig::new(2.0, 0.0))
    }

    #[test]
    fn weyl_residual_decreases_in_n() {
        let (geom, field) = weyl_setup();
        let grid = GridSpec::with_step(-14.0, 6.0, 0.01, 6, 1.0).unwrap();
        for e in [-1.0, 5.0] {
            let r: Vec<f64> = [4, 6, 8]
                .iter()
                .map(|&n| weyl_residual(&geom, field, &grid, &WeylParams::new(e, n, 0.6).unwrap()).unwrap().residual)
                .collect();
            assert!(r[0] > r[1] && r[1] > r[2], "E={e}: {r:?}");
        }
    }

    #[test]
    fn weyl_window_outside_grid() {
        let (geom, field) = weyl_setup();
        let grid = GridSpec::with_step(-8.0, 6.0, 0.05, 4, 1.0).unwrap();
        let err = weyl_residual(&geom, field, &grid, &WeylParams::new(-1.0, 8, 0.6).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DomainTooSmall(_)));
    }

    #[test]
    fn unitary_check_is_exact_at_zero_and_second_order_otherwise() {
        let geom = GuideGeometry::new(1.0, make_bump_profile(0.5, 4.0, 2).unwrap()).unwrap();
        let field = FieldConfig::new(0.004, 0.2);
        let cut = build_cutoff(-0.02, 0.01).unwrap();
        let df = distortion_field(field, &cut, DEFAULT_ALPHA).unwrap();
        let grid = GridSpec::new(-12.0, 10.0, 175, 11, 1.0).unwrap();
        let opts = SolverOptions { k: 3, tol: 1e-9, ..Default::default() };
        let zero = unitary_equivalence_check(&geom, field, &grid, &df, 0.0, &opts).unwrap();
        assert_eq!(zero.max_coarse, 0.0);
        assert_eq!(zero.max_fine, 0.0);
        let half = unitary_equivalence_check(&geom, field, &grid, &df, 0.5 * df.theta0, &opts).unwrap();
        assert!(half.ratio > 2.5 && half.ratio < 6.0, "{half:?}");
        let quarter = unitary_equivalence_check(&geom, field, &grid, &df, 0.25 * df.theta0, &opts).unwrap();
        assert!(quarter.max_coarse < half.max_coarse);
    }

    #[test]
    fn straight_guide_weyl_is_allowed() {
        let geom = GuideGeometry::new(1.0, CurvatureProfile::straight()).unwrap();
        let grid = GridSpec::with_step(-14.0, 6.0, 0.02, 4, 1.0).unwrap();
        let r = weyl_residual(&geom, FieldConfig::new(2.0, 0.0), &grid, &WeylParams::new(5.0, 6, 0.6).unwrap()).unwrap();
        assert!(r.residual.is_finite() && r.residual > 0.0);
    }
}
