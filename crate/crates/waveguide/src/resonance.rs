//! Bound-state reference, β-plateau resonance location, field sweeps and the width-law fit.

use num_complex::Complex64;

use crate::distortion::{
    assemble_h_theta, build_cutoff, distortion_field, max_field, reference_energy, DistortedParams,
    DEFAULT_ALPHA, DEFAULT_ALPHA_PRIME,
};
use crate::eigensolve::{lowest_symmetric, nearest_to_shift, EigenPair, SolverOptions};
use crate::geometry::{FieldConfig, GuideGeometry, StarkPotential};
use crate::hamiltonian::{assemble_h, discrete_transverse_eigenvalue, GridSpec, WavefunctionGrid};
use crate::{Error, Result};

/// Lowest discrete eigenvalue of `H` below the transverse threshold.
#[derive(Debug, Clone)]
pub struct BoundState {
    pub e0: f64,
    pub phi0: WavefunctionGrid,
    pub multiplicity: usize,
    /// Essential-spectrum threshold of the discretized operator.
    pub lambda0: f64,
    pub residual: f64,
    /// Every eigenvalue found below the threshold, ascending.
    pub below: Vec<f64>,
}

impl BoundState {
    /// Binding energy `λ₀ − E₀`.
    pub fn gap(&self) -> f64 {
        self.lambda0 - self.e0
    }
}

/// Eigenvalues within this distance of each other count as one cluster.
const CLUSTER_TOL: f64 = 1e-8;

pub fn bound_state_reference(geom: &GuideGeometry, grid: &GridSpec, opts: &SolverOptions) -> Result<BoundState> {
    let h = assemble_h(geom, grid)?;
    let lambda0 = discrete_transverse_eigenvalue(geom.d, grid.n_u, 1);
    let pairs = lowest_symmetric(&h, opts)?;
    let below: Vec<&EigenPair> = pairs.iter().filter(|p| p.value.re < lambda0 - CLUSTER_TOL).collect();
    let first = below.first().ok_or(Error::NoBoundState { threshold: lambda0 })?;
    let e0 = first.value.re;
    let phi0 = WavefunctionGrid::new(*grid, first.vector.clone())?.normalized();
    Ok(BoundState {
        e0,
        phi0,
        multiplicity: below.iter().filter(|p| p.value.re - e0 < CLUSTER_TOL).count(),
        lambda0,
        residual: first.residual,
        below: below.iter().map(|p| p.value.re).collect(),
    })
}

/// First-order Stark shift `⟨φ₀, W(F) φ₀⟩`, used as the eigensolver shift.
pub fn stark_shift(geom: &GuideGeometry, field: FieldConfig, phi0: &WavefunctionGrid) -> f64 {
    let w = StarkPotential::new(geom, field);
    let g = &phi0.grid;
    let mut acc = 0.0;
    for i in 0..g.n_s {
        for j in 0..g.n_u {
            acc += phi0.values[g.index(i, j)].norm_sqr() * w.eval(g.s(i), g.u(j));
        }
    }
    acc * g.h_s * g.h_u / phi0.norm().powi(2)
}

/// Knobs of the β-plateau search.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceSettings {
    /// `θ₀ = alpha · δE`.
    pub alpha: f64,
    pub alpha_prime: f64,
    /// Number of log-spaced β points in `[0.05 θ₀, 0.95 θ₀]` when `beta_grid` is empty.
    pub beta_count: usize,
    /// Explicit β values; overrides `beta_count`.
    pub beta_grid: Vec<f64>,
    /// Overrides `(E, δE)` derived from the bound state.
    pub reference: Option<(f64, f64)>,
    /// Trust radius as a fraction of `λ₀ − E₀`.
    pub trust_fraction: f64,
    /// Candidates must satisfy `Im Z > −continuum_margin · β`.
    pub continuum_margin: f64,
    /// Plateau scores above `plateau_fraction · (λ₀ − E₀)` raise a warning.
    pub plateau_fraction: f64,
    pub solver: SolverOptions,
}

impl Default for ResonanceSettings {
    fn default() -> Self {
        ResonanceSettings {
            alpha: DEFAULT_ALPHA,
            alpha_prime: DEFAULT_ALPHA_PRIME,
            beta_count: 9,
            beta_grid: Vec::new(),
            reference: None,
            trust_fraction: 0.5,
            continuum_margin: 0.5,
            plateau_fraction: 1e-3,
            solver: SolverOptions { k: 8, tol: 1e-9, ..SolverOptions::default() },
        }
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// One β point of the plateau search.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSample {
    pub beta: f64,
    pub z: Option<Complex64>,
    pub residual: f64,
    /// All candidates inside the trust radius and above the rotated continuum.
    pub candidates: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceEstimate {
    pub z: Complex64,
    pub f: f64,
    pub beta_used: f64,
    /// Centered-difference `|dZ/dβ|` at `beta_used`.
    pub plateau_score: f64,
    pub residual: f64,
    pub grid_fingerprint: String,
    pub theta0: f64,
    /// β range of the accepted plateau window.
    pub window: (f64, f64),
    /// `max |Z(β) − Z(beta_used)|` over the window.
    pub spread: f64,
    pub samples: Vec<BetaSample>,
    pub warnings: Vec<String>,
}

pub fn grid_fingerprint(grid: &GridSpec) -> String {
    format!("L=[{},{}] N=({},{}) h=({:e},{:e})", grid.l_minus, grid.l_plus, grid.n_s, grid.n_u, grid.h_s, grid.h_u)
}

/// β values the search will visit for a given `θ₀`.
pub fn beta_values(settings: &ResonanceSettings, theta0: f64) -> Vec<f64> {
    if settings.beta_grid.is_empty() {
        log_grid(0.05 * theta0, 0.95 * theta0, settings.beta_count.max(1))
    } else {
        settings.beta_grid.clone()
    }
}

/// Locates the resonance continuing `bs.e0` at field `field` by scanning β and picking the
/// flattest point of `Z(β)`.
pub fn locate_resonance(
    geom: &GuideGeometry,
    field: FieldConfig,
    grid: &GridSpec,
    bs: &BoundState,
    settings: &ResonanceSettings,
) -> Result<ResonanceEstimate> {
    let gap = bs.gap();
    let radius = settings.trust_fraction * gap;
    let mut warnings = Vec::new();
    if field.f == 0.0 {
        // no field: the distortion is pushed to −∞ and H_θ = H on the truncated strip
        let h = assemble_h(geom, grid)?;
        let opts = SolverOptions { k: 1, ..settings.solver };
        let p = nearest_to_shift(&h, Complex64::new(bs.e0, 0.0), &opts)?.remove(0);
        return Ok(ResonanceEstimate {
            z: p.value,
            f: 0.0,
            beta_used: 0.0,
            plateau_score: 0.0,
            residual: p.residual,
            grid_fingerprint: grid_fingerprint(grid),
            theta0: 0.0,
            window: (0.0, 0.0),
            spread: 0.0,
            samples: Vec::new(),
            warnings,
        });
    }
    let (e, de) = match settings.reference {
        Some(r) => r,
        None => reference_energy(bs.e0, bs.lambda0)?,
    };
    let cut = build_cutoff(e, de)?;
    let df = distortion_field(field, &cut, settings.alpha)?;
    let f0 = max_field(de, geom.d, settings.alpha_prime);
    if field.f > f0 {
        warnings.push(format!("F = {:e} exceeds the guidance ceiling F0 = {:e}", field.f, f0));
    }
    let betas = beta_values(settings, df.theta0);
    let center = Complex64::new(bs.e0, 0.0);
    let sigma = Complex64::new(bs.e0 + stark_shift(geom, field, &bs.phi0), 0.0);
    let mut samples = Vec::with_capacity(betas.len());
    let mut previous: Option<Complex64> = None;
    for &beta in &betas {
        let p = DistortedParams::imaginary(beta);
        let m = assemble_h_theta(geom, field, grid, &df, &p)?;
        let pairs = nearest_to_shift(&m, sigma, &settings.solver)?;
        let cands: Vec<&EigenPair> = pairs
            .iter()
            .filter(|q| (q.value - center).norm() <= radius && q.value.im > -settings.continuum_margin * beta)
            .collect();
        let anchor = previous.unwrap_or(sigma);
        let pick = cands.iter().min_by(|a, b| (a.value - anchor).norm().total_cmp(&(b.value - anchor).norm()));
        let (z, residual) = match pick {
            Some(q) => (Some(q.value), q.residual),
            None => (None, f64::NAN),
        };
        if z.is_some() {
            previous = z;
        }
        samples.push(BetaSample { beta, z, residual, candidates: cands.iter().map(|q| q.value).collect() });
    }
    let found: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].z.is_some()).collect();
    if found.is_empty() {
        return Err(Error::ResonanceNotFound { center: bs.e0, radius });
    }
    let slope = |i: usize, j: usize| {
        (samples[j].z.unwrap() - samples[i].z.unwrap()).norm() / (samples[j].beta - samples[i].beta).abs()
    };
    // local |dZ/dβ| at every found point: centered when both neighbours exist
    let local: Vec<Option<f64>> = (0..samples.len())
        .map(|i| {
            samples[i].z?;
            let left = i.checked_sub(1).filter(|&l| samples[l].z.is_some());
            let right = Some(i + 1).filter(|&r| r < samples.len() && samples[r].z.is_some());
            match (left, right) {
                (Some(l), Some(r)) => Some(slope(l, r)),
                _ => None,
            }
        })
        .collect();
    let best = (0..samples.len())
        .filter_map(|i| local[i].map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let (i_star, score) = match best {
        Some(b) => b,
        None => {
            warnings.push("no centered difference available; plateau score from a one-sided difference".into());
            let i = found[found.len() / 2];
            let nb = found.iter().copied().filter(|&j| j != i).min_by_key(|&j| j.abs_diff(i));
            (i, nb.map(|j| slope(i, j)).unwrap_or(f64::INFINITY))
        }
    };
    // widen the window while neighbours stay within 10× the best local slope
    let accept = |i: usize| samples[i].z.is_some() && local[i].map_or(true, |v| v <= 10.0 * score);
    let (mut lo, mut hi) = (i_star, i_star);
    while lo > 0 && accept(lo - 1) {
        lo -= 1;
    }
    while hi + 1 < samples.len() && accept(hi + 1) {
        hi += 1;
    }
    let z = samples[i_star].z.unwrap();
    let spread = (lo..=hi).filter_map(|i| samples[i].z).map(|w| (w - z).norm()).fold(0.0, f64::max);
    if score > settings.plateau_fraction * gap {
        warnings.push(format!("unstable resonance: plateau score {score:e} above {:e}", settings.plateau_fraction * gap));
    }
    Ok(ResonanceEstimate {
        z,
        f: field.f,
        beta_used: samples[i_star].beta,
        plateau_score: score,
        residual: samples[i_star].residual,
        grid_fingerprint: grid_fingerprint(grid),
        theta0: df.theta0,
        window: (samples[lo].beta, samples[hi].beta),
        spread,
        samples,
        warnings,
    })
}

/// One point of a field sweep; failures are kept as gaps.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub f: f64,
    pub result: std::result::Result<ResonanceEstimate, String>,
}

/// Runs `locate_resonance` for every field strength, ascending in `F`, reporting each point
/// to `on_point` as soon as it is done. `setup` supplies the grid and the bound-state
/// reference for each `F`; a failing setup is recorded as a gap like a failed solve.
pub fn field_sweep<S, C>(
    geom: &GuideGeometry,
    eta: f64,
    f_list: &[f64],
    settings: &ResonanceSettings,
    mut setup: S,
    mut on_point: C,
) -> Result<Vec<SweepPoint>>
where
    S: FnMut(f64) -> Result<(GridSpec, BoundState)>,
    C: FnMut(&SweepPoint),
{
    if f_list.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::InvalidArgument("sweep field strengths must be positive".into()));
    }
    let mut fs = f_list.to_vec();
    fs.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(fs.len());
    for f in fs {
        let result = setup(f)
            .and_then(|(grid, bs)| locate_resonance(geom, FieldConfig::new(f, eta), &grid, &bs, settings))
            .map_err(|e| e.to_string());
        let point = SweepPoint { f, result };
        on_point(&point);
        out.push(point);
    }
    Ok(out)
}

/// Field-adapted grids for resonance runs.
///
/// The longitudinal step is the largest power of two that puts `layer_points` nodes across
/// the cutoff layer `δE/κ`, capped at `h_max`. The left wall sits past the classically
/// forbidden region by `absorption · κ / β²` at `β = 0.95 θ₀`, so the outgoing wave is damped
/// by roughly `exp(−2√absorption)` before it reaches the wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRule {
    pub l_plus: f64,
    pub n_u: usize,
    pub h_max: f64,
    pub layer_points: f64,
    pub absorption: f64,
    /// Left end of the domain used for the bound-state reference.
    pub reference_left: f64,
}

impl Default for GridRule {
    fn default() -> Self {
        GridRule { l_plus: 60.0, n_u: 6, h_max: 0.25, layer_points: 128.0, absorption: 128.0, reference_left: -120.0 }
    }
}

impl GridRule {
    pub fn step(&self, kappa: f64, delta_e: f64) -> f64 {
        let raw = (delta_e / kappa / self.layer_points).min(self.h_max);
        2f64.powi(raw.log2().floor() as i32)
    }

    pub fn reference_grid(&self, d: f64, h: f64) -> Result<GridSpec> {
        GridSpec::with_step((self.reference_left / h).floor() * h, self.l_plus, h, self.n_u, d)
    }

    /// Grid for a run at `field`, given the binding energy and `θ₀`.
    pub fn resonance_grid(&self, d: f64, field: FieldConfig, gap: f64, theta0: f64) -> Result<GridSpec> {
        let kappa = field.kappa();
        if !(kappa > 0.0) {
            return Err(Error::InvalidArgument("grid rule needs a field with F cos η > 0".into()));
        }
        let h = self.step(kappa, gap / 3.0);
        let reach = 2.0 * gap / (3.0 * kappa) + self.absorption * kappa / (0.95 * theta0).powi(2);
        let l_minus = (-reach / h).floor() * h;
        GridSpec::with_step(l_minus.min(self.reference_left), self.l_plus, h, self.n_u, d)
    }
}

/// Least-squares fit of `ln|Im Z| = ln c1 − c2/F`.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthFit {
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
    pub f_range: (f64, f64),
    pub used: usize,
    pub censored: usize,
    pub accepted: bool,
}

/// Widths below this multiple of the solver residual are censored.
pub const CENSOR_FACTOR: f64 = 100.0;

/// `(F, Im Z, residual)` triples to a width-law fit.
pub fn fit_width_law(points: &[(f64, f64, f64)], r2_threshold: f64) -> Result<WidthFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(f, im, res)| *f > 0.0 && im.abs() > 0.0 && im.abs() >= CENSOR_FACTOR * res)
        .map(|(f, im, _)| (1.0 / f, im.abs().ln()))
        .collect();
    let censored = points.len() - usable.len();
    if usable.len() < 4 {
        return Err(Error::Fit(format!("{} usable points, need at least 4 ({censored} censored)", usable.len())));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    let fs = usable.iter().map(|p| 1.0 / p.0);
    let f_range = (fs.clone().fold(f64::INFINITY, f64::min), fs.fold(0.0, f64::max));
    let c2 = -slope;
    Ok(WidthFit {
        c1: intercept.exp(),
        c2,
        r_squared,
        f_range,
        used: usable.len(),
        censored,
        accepted: c2 > 0.0 && r_squared >= r2_threshold,
    })
}

/// Fitted exponential decay rates of a bound state on both arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRate {
    pub a: f64,
    pub left: f64,
    pub right: f64,
}

fn tail_rate(s: &[f64], dens: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let peak = dens.iter().copied().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = s
        .iter()
        .zip(dens)
        .filter(|(x, d)| **x >= lo && **x <= hi && **d > 1e-24 * peak)
        .map(|(x, d)| (x.abs(), d.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::DomainTooSmall(format!("only {} tail samples in [{lo}, {hi}]", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    // density decays like e^{−2a|s|}
    Ok(-0.5 * sxy / sxx)
}

/// Fits `ln ∫|φ₀|² du` against `|s|` on the middle of each straight arm, away from both the
/// curved region and the Dirichlet walls.
pub fn decay_rate(phi0: &WavefunctionGrid, s0: f64) -> Result<DecayRate> {
    let grid = &phi0.grid;
    let s: Vec<f64> = (0..grid.n_s).map(|i| grid.s(i)).collect();
    let dens = phi0.transverse_density();
    let left = tail_rate(&s, &dens, 0.6 * grid.l_minus, 0.2 * grid.l_minus)?;
    let arm = grid.l_plus - s0;
    let right = tail_rate(&s, &dens, s0 + 0.2 * arm, s0 + 0.6 * arm)?;
    let a = left.min(right);
    if !(a > 0.0) {
        return Err(Error::DomainTooSmall(format!("tails do not decay (left {left}, right {right})")));
    }
    Ok(DecayRate { a, left, right })
}
