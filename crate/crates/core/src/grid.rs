//! Periodic grids, spectral transforms, potentials and scaling bookkeeping.
//!
//! Every spatial object in the crate lives on a [`Grid`]: `M` points per
//! dimension on a torus of side `L`, stored with axis 0 fastest. Integrals are
//! `h^d`-weighted sums, so orbitals normalised on one resolution stay
//! normalised when the grid is refined.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Points per dimension for which the spectral transforms are exact and fast.
pub fn is_power_of_two(m: usize) -> bool {
    m != 0 && m & (m - 1) == 0
}

struct SpectralPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    momentum_sq: Vec<f64>,
}

/// A periodic `d`-dimensional grid with `M` points per axis on `[0, L)^d`.
#[derive(Clone)]
pub struct Grid {
    dim: usize,
    points: usize,
    length: f64,
    plan: Arc<SpectralPlan>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("points", &self.points)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points && self.length == other.length
    }
}

impl Grid {
    pub fn new(dim: usize, points: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if !is_power_of_two(points) {
            return Err(Error::InvalidGrid(format!(
                "M must be a power of two, got {points}"
            )));
        }
        Self::build(dim, points, length)
    }

    /// One-dimensional lattice with any even number of sites, for the exact
    /// many-body oracle whose site counts need not be powers of two.
    pub fn lattice(points: usize, length: f64) -> Result<Self> {
        if points % 2 != 0 {
            return Err(Error::InvalidGrid(format!("lattice needs an even number of sites, got {points}")));
        }
        Self::build(1, points, length)
    }

    /// Rebuilds a grid from stored parameters: power-of-two grids in any
    /// dimension, even-sized lattices in one.
    pub fn from_params(dim: usize, points: usize, length: f64) -> Result<Self> {
        if dim == 1 && !is_power_of_two(points) {
            Self::lattice(points, length)
        } else {
            Self::new(dim, points, length)
        }
    }

    fn build(dim: usize, points: usize, length: f64) -> Result<Self> {
        if points < 4 {
            return Err(Error::InvalidGrid(format!("M must be at least 4, got {points}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("L must be positive, got {length}")));
        }
        let mut planner = FftPlanner::new();
        let plan = SpectralPlan {
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
            momentum_sq: Vec::new(),
        };
        let mut grid = Self { dim, points, length, plan: Arc::new(plan) };
        let table: Vec<f64> = (0..grid.len())
            .map(|j| (0..dim).map(|a| grid.momentum(j, a).powi(2)).sum())
            .collect();
        Arc::get_mut(&mut grid.plan).expect("fresh plan").momentum_sq = table;
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per dimension.
    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Total number of grid points `M^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Per-axis indices of a flat index (axis 0 fastest).
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let m = self.points;
        let mut out = [0; 3];
        let mut rest = flat;
        for slot in out.iter_mut().take(self.dim) {
            *slot = rest % m;
            rest /= m;
        }
        out
    }

    pub fn flat_index(&self, multi: [usize; 3]) -> usize {
        let m = self.points;
        (0..self.dim).rev().fold(0, |acc, a| acc * m + multi[a] % m)
    }

    /// Coordinate of grid point `flat` along `axis`, in `[0, L)`.
    pub fn coordinate(&self, flat: usize, axis: usize) -> f64 {
        self.multi_index(flat)[axis] as f64 * self.spacing()
    }

    /// Signed integer wavenumber for FFT slot `j`, in `(-M/2, M/2]`.
    pub fn wavenumber(&self, j: usize) -> i64 {
        let m = self.points as i64;
        let j = j as i64;
        if j <= m / 2 {
            j
        } else {
            j - m
        }
    }

    /// Integer wavevector of FFT slot `flat`.
    pub fn wavevector(&self, flat: usize) -> [i64; 3] {
        let idx = self.multi_index(flat);
        let mut k = [0; 3];
        for a in 0..self.dim {
            k[a] = self.wavenumber(idx[a]);
        }
        k
    }

    /// Momentum `2πk/L` of FFT slot `flat` along `axis`.
    pub fn momentum(&self, flat: usize, axis: usize) -> f64 {
        2.0 * PI * self.wavevector(flat)[axis] as f64 / self.length
    }

    pub fn momentum_sq(&self, flat: usize) -> f64 {
        self.plan.momentum_sq[flat]
    }

    /// Minimal periodic image of a displacement, mapped to `(-L/2, L/2]`.
    pub fn minimal_image(&self, dx: f64) -> f64 {
        let l = self.length;
        let mut r = dx - l * (dx / l).round();
        if r <= -0.5 * l {
            r += l;
        }
        r
    }

    /// In-place forward DFT over all axes (unnormalised).
    pub fn fft_forward(&self, data: &mut [C64]) {
        self.transform(data, &self.plan.forward);
    }

    /// In-place inverse DFT over all axes, normalised so that
    /// `fft_inverse(fft_forward(f)) == f`.
    pub fn fft_inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.plan.inverse);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "field length does not match grid");
        let m = self.points;
        // axis 0 is contiguous
        plan.process(data);
        let mut line = vec![C64::new(0.0, 0.0); m];
        for axis in 1..self.dim {
            let stride = m.pow(axis as u32);
            let block = stride * m;
            for start in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (j, z) in line.iter_mut().enumerate() {
                        *z = data[base + j * stride];
                    }
                    plan.process(&mut line);
                    for (j, z) in line.iter().enumerate() {
                        data[base + j * stride] = *z;
                    }
                }
            }
        }
    }

    /// Applies a real Fourier multiplier `symbol(flat)` to a complex field.
    pub fn apply_multiplier<F>(&self, data: &mut [C64], symbol: F)
    where
        F: Fn(usize) -> C64,
    {
        self.fft_forward(data);
        for (j, z) in data.iter_mut().enumerate() {
            *z *= symbol(j);
        }
        self.fft_inverse(data);
    }

    /// `-ε²Δ f`, applied spectrally.
    pub fn kinetic(&self, f: &[C64], epsilon: f64) -> Vec<C64> {
        let mut out = f.to_vec();
        let e2 = epsilon * epsilon;
        self.fft_forward(&mut out);
        for (z, k2) in out.iter_mut().zip(&self.plan.momentum_sq) {
            *z *= e2 * k2;
        }
        self.fft_inverse(&mut out);
        out
    }

    /// `∂_a f`, applied spectrally; the Nyquist mode is dropped so the
    /// operator stays anti-Hermitian.
    pub fn derivative(&self, f: &[C64], axis: usize) -> Vec<C64> {
        let mut out = f.to_vec();
        let nyquist = (self.points / 2) as i64;
        self.apply_multiplier(&mut out, |j| {
            let k = self.wavevector(j)[axis];
            if k == nyquist {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, 2.0 * PI * k as f64 / self.length)
            }
        });
        out
    }

    /// Dense matrix of `-ε²Δ` acting on grid samples. Real symmetric.
    pub fn kinetic_matrix(&self, epsilon: f64) -> DMatrix<C64> {
        let n = self.len();
        let mut t = DMatrix::zeros(n, n);
        let mut unit = vec![C64::new(0.0, 0.0); n];
        for s in 0..n {
            unit.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            unit[s] = C64::new(1.0, 0.0);
            let col = self.kinetic(&unit, epsilon);
            for r in 0..n {
                t[(r, s)] = col[r];
            }
        }
        // symmetrise away FFT rounding
        let tt = t.adjoint();
        (t + tt) * C64::new(0.5, 0.0)
    }
}

/// Particle number, dimension and semiclassical parameter `ε = N^{-1/d}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub n: usize,
    pub dim: usize,
    pub epsilon: f64,
}

impl ScaleParams {
    pub fn new(n: usize, dim: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dimension {dim} not in 1..=3")));
        }
        let epsilon = if dim == 1 {
            1.0 / n as f64
        } else {
            (n as f64).powf(-1.0 / dim as f64)
        };
        Ok(Self { n, dim, epsilon })
    }

    /// `N ε`, the scale of the semiclassical commutator bounds.
    pub fn n_epsilon(&self) -> f64 {
        self.n as f64 * self.epsilon
    }
}

/// A real-valued field sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl SpatialField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64>(grid: &Grid, f: F) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let mut x = [0.0; 3];
                for (a, xa) in x.iter_mut().enumerate().take(grid.dim()) {
                    *xa = grid.coordinate(i, a);
                }
                f(x)
            })
            .collect();
        Self { grid: grid.clone(), values }
    }

    /// `h^d Σ f`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Confining potential `depth · Σ_a (1 - cos(2π(x_a - L/2)/L))`, minimal at the
/// box centre.
pub fn cos_well(grid: &Grid, depth: f64) -> SpatialField {
    let l = grid.length();
    let d = grid.dim();
    SpatialField::from_fn(grid, |x| {
        (0..d).map(|a| depth * (1.0 - (2.0 * PI * (x[a] - 0.5 * l) / l).cos())).sum()
    })
}

/// Periodic convolution `(f*g)(x) = h^d Σ_y f(x-y) g(y)`, computed spectrally.
pub fn convolve_periodic(f: &SpatialField, g: &SpatialField) -> Result<SpatialField> {
    f.grid.check_same(&g.grid)?;
    if !f.is_finite() || !g.is_finite() {
        return Err(Error::InvalidParameter("convolution of non-finite field".into()));
    }
    let grid = &f.grid;
    let mut fh: Vec<C64> = f.values.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut gh: Vec<C64> = g.values.iter().map(|&v| C64::new(v, 0.0)).collect();
    grid.fft_forward(&mut fh);
    grid.fft_forward(&mut gh);
    let w = grid.cell_volume();
    for (a, b) in fh.iter_mut().zip(&gh) {
        *a *= b * w;
    }
    grid.fft_inverse(&mut fh);
    SpatialField::new(grid, fh.into_iter().map(|z| z.re).collect())
}

/// Complex periodic convolution with precomputed kernel transform
/// `kernel_hat = h^d · DFT(V)`.
pub(crate) fn convolve_with_hat(grid: &Grid, kernel_hat: &[C64], f: &mut [C64]) {
    grid.fft_forward(f);
    for (a, b) in f.iter_mut().zip(kernel_hat) {
        *a *= b;
    }
    grid.fft_inverse(f);
}

/// Two-body interaction potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialSpec {
    Zero,
    /// `g exp(-|x|²/(2σ²))`, periodised.
    Gaussian { amplitude: f64, width: f64 },
    /// Samples on the grid of the given resolution, indexed like [`Grid`].
    Tabulated { points: usize, dim: usize, samples: Vec<f64> },
}

impl PotentialSpec {
    pub fn gaussian(amplitude: f64, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian needs finite amplitude and positive width, got g={amplitude}, σ={width}"
            )));
        }
        Ok(Self::Gaussian { amplitude, width })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Gaussian { amplitude, .. } => *amplitude == 0.0,
            Self::Tabulated { samples, .. } => samples.iter().all(|&v| v == 0.0),
        }
    }

    /// Samples `V(x)` on the grid, periodised over neighbouring images.
    pub fn samples(&self, grid: &Grid) -> Result<SpatialField> {
        match self {
            Self::Zero => Ok(SpatialField::constant(grid, 0.0)),
            Self::Gaussian { amplitude, width } => {
                let l = grid.length();
                let images = ((8.0 * width / l).ceil() as i64).max(1);
                let d = grid.dim();
                let profile = |r: f64| -> f64 {
                    (-images..=images)
                        .map(|n| {
                            let y = r + n as f64 * l;
                            (-y * y / (2.0 * width * width)).exp()
                        })
                        .sum()
                };
                Ok(SpatialField::from_fn(grid, |x| {
                    amplitude * (0..d).map(|a| profile(grid.minimal_image(x[a]))).product::<f64>()
                }))
            }
            Self::Tabulated { points, dim, samples } => {
                if *points != grid.points() || *dim != grid.dim() {
                    return Err(Error::GridMismatch(format!(
                        "tabulated potential on {points}^{dim}, grid is {}^{}",
                        grid.points(),
                        grid.dim()
                    )));
                }
                let field = SpatialField::new(grid, samples.clone())?;
                let norm = weighted_lattice_sum(grid, &raw_transform(grid, &field), f64::INFINITY);
                if !norm.is_finite() {
                    return Err(Error::InvalidParameter(
                        "tabulated potential fails the weighted Fourier bound".into(),
                    ));
                }
                Ok(field)
            }
        }
    }

    /// `sup |V|` on the grid.
    pub fn sup_abs(&self, grid: &Grid) -> Result<f64> {
        Ok(self.samples(grid)?.max_abs())
    }

    /// Fourier transform `h^d · DFT(V)` of the periodised samples, the
    /// multiplier that turns a DFT into `V * ·`.
    pub fn transform_on(&self, grid: &Grid) -> Result<Vec<C64>> {
        Ok(raw_transform(grid, &self.samples(grid)?))
    }

    /// `Σ_{|p| ≤ cutoff} |V̂(p)| (1+p²) (2π/L)^d` over the momentum lattice of
    /// the box, the lattice form of `∫ |V̂(p)|(1+p²) dp`.
    ///
    /// The Gaussian uses its closed-form transform and is not limited to the
    /// grid's momenta; tabulated potentials only know grid momenta.
    pub fn assv_weighted_norm(&self, grid: &Grid, cutoff: f64) -> Result<f64> {
        if cutoff.is_nan() || cutoff <= 0.0 {
            return Err(Error::InvalidParameter(format!("cutoff must be positive, got {cutoff}")));
        }
        let d = grid.dim();
        let dp = 2.0 * PI / grid.length();
        let measure = dp.powi(d as i32);
        match self {
            Self::Zero => Ok(0.0),
            Self::Gaussian { amplitude, width } => {
                if !cutoff.is_finite() {
                    return Err(Error::InvalidParameter(
                        "gaussian weighted norm needs a finite cutoff".into(),
                    ));
                }
                let kmax = (cutoff / dp).floor() as i64;
                let pref = amplitude.abs() * (2.0 * PI * width * width).powf(d as f64 / 2.0);
                let mut total = 0.0;
                let mut k = [0i64; 3];
                let span = 2 * kmax + 1;
                let count = span.pow(d as u32);
                for idx in 0..count {
                    let mut rest = idx;
                    for slot in k.iter_mut().take(d) {
                        *slot = rest % span - kmax;
                        rest /= span;
                    }
                    let p2: f64 = k.iter().take(d).map(|&ki| (ki as f64 * dp).powi(2)).sum();
                    if p2 <= cutoff * cutoff {
                        total += pref * (-0.5 * width * width * p2).exp() * (1.0 + p2);
                    }
                }
                Ok(total * measure)
            }
            Self::Tabulated { .. } => Ok(weighted_lattice_sum(grid, &self.transform_on(grid)?, cutoff)),
        }
    }
}

fn raw_transform(grid: &Grid, v: &SpatialField) -> Vec<C64> {
    let w = grid.cell_volume();
    let mut vh: Vec<C64> = v.values.iter().map(|&x| C64::new(x * w, 0.0)).collect();
    grid.fft_forward(&mut vh);
    vh
}

fn weighted_lattice_sum(grid: &Grid, vhat: &[C64], cutoff: f64) -> f64 {
    let measure = (2.0 * PI / grid.length()).powi(grid.dim() as i32);
    let total: f64 = vhat
        .iter()
        .enumerate()
        .filter_map(|(j, z)| {
            let p2 = grid.momentum_sq(j);
            (p2 <= cutoff * cutoff).then(|| z.norm() * (1.0 + p2))
        })
        .sum();
    total * measure
}

/// Dense one-particle integral kernel `A(x, y)` sampled on grid points.
///
/// As an operator, `(A g)(x) = h^d Σ_y A(x,y) g(y)`; the matrix of the
/// operator in orthonormal grid coordinates is therefore `h^d A`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelOperator {
    pub grid: Grid,
    pub entries: DMatrix<C64>,
}

impl KernelOperator {
    pub fn new(grid: &Grid, entries: DMatrix<C64>) -> Result<Self> {
        let n = grid.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::GridMismatch(format!(
                "kernel is {}x{}, grid has {n} points",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("kernel has non-finite entries".into()));
        }
        Ok(Self { grid: grid.clone(), entries })
    }

    /// Operator matrix in orthonormal coordinates, `h^d A`.
    pub fn operator_matrix(&self) -> DMatrix<C64> {
        &self.entries * C64::new(self.grid.cell_volume(), 0.0)
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace() * self.grid.cell_volume()
    }

    pub fn hs_norm(&self) -> f64 {
        self.entries.norm() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let diff = &self.entries - self.entries.adjoint();
        diff.iter().fold(0.0, |m: f64, z| m.max(z.norm()))
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= 1e-10 * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Operator product, `(AB)(x,y) = h^d Σ_z A(x,z) B(z,y)`.
    pub fn compose(&self, other: &KernelOperator) -> Result<KernelOperator> {
        self.grid.check_same(&other.grid)?;
        Ok(KernelOperator {
            grid: self.grid.clone(),
            entries: (&self.entries * &other.entries) * C64::new(self.grid.cell_volume(), 0.0),
        })
    }

    pub fn sub(&self, other: &KernelOperator) -> Result<KernelOperator> {
        self.grid.check_same(&other.grid)?;
        Ok(KernelOperator { grid: self.grid.clone(), entries: &self.entries - &other.entries })
    }

    /// `‖A² - A‖_HS`, zero for an orthogonal projection.
    pub fn projection_defect(&self) -> f64 {
        let sq = self.compose(self).expect("same grid");
        (sq.entries - &self.entries).norm() * self.grid.cell_volume()
    }
}
