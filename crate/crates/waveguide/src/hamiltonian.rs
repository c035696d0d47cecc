//! Finite-difference discretization of `H₀ = T_s + T_u`, `H = H₀ + V₀` and `H(F) = H + W(F)`.
//!
//! Unknowns live on the interior nodes of a tensor grid over `[L_minus, L_plus] × [0, d]`
//! with Dirichlet walls. Node `(i, j)` has index `i·N_u + j`, so every matrix is banded with
//! half-bandwidth `N_u`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::geometry::{validate_hypotheses, FieldConfig, GuideGeometry, StarkPotential};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub l_minus: f64,
    pub l_plus: f64,
    pub n_s: usize,
    pub n_u: usize,
    pub h_s: f64,
    pub h_u: f64,
}

impl GridSpec {
    pub fn new(l_minus: f64, l_plus: f64, n_s: usize, n_u: usize, d: f64) -> Result<Self> {
        if !(l_minus < 0.0 && l_plus > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need L_minus < 0 < L_plus, got [{l_minus}, {l_plus}]"
            )));
        }
        if n_s < 3 || n_u < 1 {
            return Err(Error::InvalidArgument(format!("grid too small: N_s={n_s}, N_u={n_u}")));
        }
        Ok(GridSpec {
            l_minus,
            l_plus,
            n_s,
            n_u,
            h_s: (l_plus - l_minus) / (n_s + 1) as f64,
            h_u: d / (n_u + 1) as f64,
        })
    }

    /// Grid whose longitudinal step is as close to `h_s` as the interval allows.
    pub fn with_step(l_minus: f64, l_plus: f64, h_s: f64, n_u: usize, d: f64) -> Result<Self> {
        let cells = ((l_plus - l_minus) / h_s).round() as usize;
        GridSpec::new(l_minus, l_plus, cells.saturating_sub(1), n_u, d)
    }

    /// Same extent, `N_s` and `N_u` refined so both spacings halve.
    pub fn refined(&self, d: f64) -> Self {
        GridSpec::new(self.l_minus, self.l_plus, 2 * self.n_s + 1, 2 * self.n_u + 1, d).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.n_s * self.n_u
    }

    pub fn s(&self, i: usize) -> f64 {
        self.l_minus + (i + 1) as f64 * self.h_s
    }

    /// Midpoint between node `i−1` and node `i` (`i = 0` is the left wall half-point).
    pub fn s_half(&self, i: usize) -> f64 {
        self.l_minus + (i as f64 + 0.5) * self.h_s
    }

    pub fn u(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.h_u
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_u + j
    }

    pub fn check_contains(&self, geom: &GuideGeometry) -> Result<()> {
        if self.l_plus <= geom.profile.s0 {
            return Err(Error::InvalidArgument(format!(
                "L_plus = {} must exceed the curvature support s0 = {}",
                self.l_plus, geom.profile.s0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    RealSymmetric,
    ComplexSymmetric,
    General,
}

/// Sparse complex matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<Complex64>,
    pub structure: Structure,
}

impl OperatorMatrix {
    pub fn identity(n: usize) -> Self {
        OperatorMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![Complex64::new(1.0, 0.0); n],
            structure: Structure::RealSymmetric,
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, Complex64)>, structure: Structure) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r},{c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        OperatorMatrix { n, row_ptr, col_idx, values, structure }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r).find(|&(cc, _)| cc == c).map(|(_, v)| v).unwrap_or_default()
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// Largest `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n).flat_map(|r| self.row(r).map(move |(c, _)| r.abs_diff(c))).max().unwrap_or(0)
    }

    pub fn transpose(&self) -> Self {
        let trip = (0..self.n).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v))).collect();
        OperatorMatrix::from_triplets(self.n, trip, self.structure)
    }

    /// `max |M − Mᵀ|` over entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).norm());
            }
        }
        worst
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn apply_slice(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n {
            return Err(Error::Dimension { expected: self.n, got: x.len() });
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    /// Entrywise `M + shift·I`.
    pub fn shifted(&self, shift: Complex64) -> Self {
        let trip = (0..self.n)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .chain((0..self.n).map(|r| (r, r, shift)))
            .collect();
        let structure = match self.structure {
            Structure::RealSymmetric if shift.im != 0.0 => Structure::ComplexSymmetric,
            s => s,
        };
        OperatorMatrix::from_triplets(self.n, trip, structure)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Plain-text coordinate dump: a header line `n nnz`, then `row col re im` per entry.
    pub fn to_triplet_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.nnz());
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                let _ = writeln!(out, "{r} {c} {:e} {:e}", v.re, v.im);
            }
        }
        out
    }
}

/// Complex values on the interior nodes, normalized with weight `h_s·h_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionGrid {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

impl WavefunctionGrid {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.dim() {
            return Err(Error::Dimension { expected: grid.dim(), got: values.len() });
        }
        Ok(WavefunctionGrid { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        WavefunctionGrid { grid, values: vec![Complex64::new(0.0, 0.0); grid.dim()] }
    }

    pub fn norm(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (sum * self.grid.h_s * self.grid.h_u).sqrt()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.values {
                *v /= n;
            }
        }
        self
    }

    /// `∫₀^d |ψ(s_i, u)|² du` for every longitudinal node.
    pub fn transverse_density(&self) -> Vec<f64> {
        self.values
            .chunks(self.grid.n_u)
            .map(|line| line.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.h_u)
            .collect()
    }
}

/// Grid-carrying matrix–vector product.
pub fn apply(m: &OperatorMatrix, v: &WavefunctionGrid) -> Result<WavefunctionGrid> {
    Ok(WavefunctionGrid { grid: v.grid, values: m.apply_slice(&v.values)? })
}

/// `(nπ/d)²`, the n-th Dirichlet eigenvalue of `−∂²_u` on `(0, d)`.
pub fn transverse_eigenvalue(d: f64, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidArgument("transverse mode index starts at 1".into()));
    }
    Ok((n as f64 * PI / d).powi(2))
}

/// n-th eigenvalue of the 3-point Dirichlet Laplacian with `n_u` interior nodes on `(0, d)`.
pub fn discrete_transverse_eigenvalue(d: f64, n_u: usize, n: usize) -> f64 {
    let h = d / (n_u + 1) as f64;
    2.0 / (h * h) * (1.0 - (n as f64 * PI * h / d).cos())
}

/// Assembles `−∂_s c(s,u) ∂_s − ∂²_u + diag` on `grid`.
///
/// `coeff` is sampled at longitudinal half-points, `diag` at nodes.
pub(crate) fn assemble_tensor<C, D>(grid: &GridSpec, coeff: C, diag: D) -> OperatorMatrix
where
    C: Fn(f64, f64) -> Complex64,
    D: Fn(usize, f64, f64) -> Complex64,
{
    let (ns, nu) = (grid.n_s, grid.n_u);
    let n = grid.dim();
    let inv_s2 = 1.0 / (grid.h_s * grid.h_s);
    let inv_u2 = 1.0 / (grid.h_u * grid.h_u);
    // half-point coefficients: row i holds c at s_{i-1/2}, i = 0..=ns
    let mut half = vec![Complex64::new(0.0, 0.0); (ns + 1) * nu];
    for i in 0..=ns {
        let sh = grid.s_half(i);
        for j in 0..nu {
            half[i * nu + j] = coeff(sh, grid.u(j));
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    for i in 0..ns {
        let s = grid.s(i);
        for j in 0..nu {
            let p = grid.index(i, j);
            let c_lo = half[i * nu + j];
            let c_hi = half[(i + 1) * nu + j];
            if i > 0 {
                col_idx.push(p - nu);
                values.push(-c_lo * inv_s2);
            }
            if j > 0 {
                col_idx.push(p - 1);
                values.push(Complex64::new(-inv_u2, 0.0));
            }
            col_idx.push(p);
            values.push((c_lo + c_hi) * inv_s2 + 2.0 * inv_u2 + diag(i, s, grid.u(j)));
            if j + 1 < nu {
                col_idx.push(p + 1);
                values.push(Complex64::new(-inv_u2, 0.0));
            }
            if i + 1 < ns {
                col_idx.push(p + nu);
                values.push(-c_hi * inv_s2);
            }
            row_ptr.push(col_idx.len());
        }
    }
    let structure = if values.iter().all(|v| v.im == 0.0) {
        Structure::RealSymmetric
    } else {
        Structure::ComplexSymmetric
    };
    OperatorMatrix { n, row_ptr, col_idx, values, structure }
}

fn check_geometry(geom: &GuideGeometry, grid: &GridSpec, field: Option<FieldConfig>) -> Result<()> {
    validate_hypotheses(geom, field).into_result()?;
    grid.check_contains(geom)?;
    let expect_hu = geom.d / (grid.n_u + 1) as f64;
    if (grid.h_u - expect_hu).abs() > 1e-14 * geom.d {
        return Err(Error::InvalidArgument(format!("grid h_u = {} does not match d = {}", grid.h_u, geom.d)));
    }
    Ok(())
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `T_s + T_u` with the metric at half-points.
pub fn assemble_h0(geom: &GuideGeometry, grid: &GridSpec) -> Result<OperatorMatrix> {
    check_geometry(geom, grid, None)?;
    Ok(assemble_tensor(grid, |s, u| real(geom.metric(s, u)), |_, _, _| real(0.0)))
}

/// `H₀ + V₀`.
pub fn assemble_h(geom: &GuideGeometry, grid: &GridSpec) -> Result<OperatorMatrix> {
    check_geometry(geom, grid, None)?;
    Ok(assemble_tensor(grid, |s, u| real(geom.metric(s, u)), |_, s, u| real(geom.effective_potential(s, u))))
}

/// `H₀ + V₀ + W(F)`.
pub fn assemble_hf(geom: &GuideGeometry, field: FieldConfig, grid: &GridSpec) -> Result<OperatorMatrix> {
    check_geometry(geom, grid, Some(field))?;
    let w = StarkPotential::new(geom, field);
    Ok(assemble_tensor(
        grid,
        |s, u| real(geom.metric(s, u)),
        |_, s, u| real(geom.effective_potential(s, u)) + real(w.eval(s, u)),
    ))
}
