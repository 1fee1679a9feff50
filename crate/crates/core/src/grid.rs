//! Uniform space-time grids on intervals and rectangles, with the Neumann
//! finite-difference operators every solver in the crate is built on.
//!
//! Nodes include the boundary: an axis with `n` intervals carries `n + 1`
//! nodes. Quadrature is the (tensor) trapezoid rule. The Laplacian uses
//! ghost-node reflection, which makes it symmetric in the trapezoid inner
//! product and exactly diagonal in the discrete cosine basis; the latter is
//! used for every constant-coefficient implicit solve.

use crate::error::{Error, Result};

/// Values on every node of a [`Grid`], x-index fastest.
pub type Field = Vec<f64>;

pub const MIN_INTERVALS: usize = 8;
pub const MIN_STEPS: usize = 16;

/// Cosine eigenbasis of the 1D reflected Laplacian on one axis.
#[derive(Debug, Clone)]
struct ModalAxis {
    nodes: usize,
    /// `basis[k * nodes + i] = cos(k pi i / n)`.
    basis: Vec<f64>,
    eig: Vec<f64>,
    inv_norm: Vec<f64>,
    weights: Vec<f64>,
}

impl ModalAxis {
    fn new(intervals: usize, h: f64) -> Self {
        let nodes = intervals + 1;
        let n = intervals as f64;
        let weights: Vec<f64> = (0..nodes)
            .map(|i| if i == 0 || i == intervals { 0.5 * h } else { h })
            .collect();
        let mut basis = vec![0.0; nodes * nodes];
        let mut eig = vec![0.0; nodes];
        let mut inv_norm = vec![0.0; nodes];
        for k in 0..nodes {
            let mut norm = 0.0;
            for i in 0..nodes {
                let c = (std::f64::consts::PI * (k * i) as f64 / n).cos();
                basis[k * nodes + i] = c;
                norm += weights[i] * c * c;
            }
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n)).sin();
            eig[k] = -4.0 * s * s / (h * h);
            inv_norm[k] = 1.0 / norm;
        }
        Self {
            nodes,
            basis,
            eig,
            inv_norm,
            weights,
        }
    }

    fn analyze(&self, f: &[f64], out: &mut [f64]) {
        let n = self.nodes;
        for k in 0..n {
            let row = &self.basis[k * n..(k + 1) * n];
            let mut acc = 0.0;
            for i in 0..n {
                acc += self.weights[i] * f[i] * row[i];
            }
            out[k] = acc * self.inv_norm[k];
        }
    }

    fn synthesize(&self, c: &[f64], out: &mut [f64]) {
        let n = self.nodes;
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n {
            let ck = c[k];
            if ck == 0.0 {
                continue;
            }
            let row = &self.basis[k * n..(k + 1) * n];
            for i in 0..n {
                out[i] += ck * row[i];
            }
        }
    }
}

/// Uniform discretization of `Omega x (0, T)`.
#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    lengths: Vec<f64>,
    intervals: Vec<usize>,
    spacing: Vec<f64>,
    t_final: f64,
    steps: usize,
    dt: f64,
    quad: Vec<f64>,
    axes: Vec<ModalAxis>,
    mode_eig: Vec<f64>,
}

impl Grid {
    pub fn new(
        dim: usize,
        lengths: &[f64],
        intervals: &[usize],
        t_final: f64,
        steps: usize,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if lengths.len() != dim || intervals.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} lengths and interval counts, got {} and {}",
                lengths.len(),
                intervals.len()
            )));
        }
        for (&l, &n) in lengths.iter().zip(intervals) {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidGrid(format!("domain length must be positive, got {l}")));
            }
            if n < MIN_INTERVALS {
                return Err(Error::InvalidGrid(format!(
                    "need at least {MIN_INTERVALS} intervals per axis, got {n}"
                )));
            }
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidGrid(format!("final time must be positive, got {t_final}")));
        }
        if steps < MIN_STEPS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_STEPS} time steps, got {steps}"
            )));
        }

        let spacing: Vec<f64> = lengths.iter().zip(intervals).map(|(l, &n)| l / n as f64).collect();
        let axes: Vec<ModalAxis> = intervals
            .iter()
            .zip(&spacing)
            .map(|(&n, &h)| ModalAxis::new(n, h))
            .collect();

        let (quad, mode_eig) = if dim == 1 {
            (axes[0].weights.clone(), axes[0].eig.clone())
        } else {
            let (ax, ay) = (&axes[0], &axes[1]);
            let mut q = Vec::with_capacity(ax.nodes * ay.nodes);
            let mut e = Vec::with_capacity(ax.nodes * ay.nodes);
            for j in 0..ay.nodes {
                for i in 0..ax.nodes {
                    q.push(ax.weights[i] * ay.weights[j]);
                    e.push(ax.eig[i] + ay.eig[j]);
                }
            }
            (q, e)
        };

        Ok(Self {
            dim,
            lengths: lengths.to_vec(),
            intervals: intervals.to_vec(),
            spacing,
            t_final,
            steps,
            dt: t_final / steps as f64,
            quad,
            axes,
            mode_eig,
        })
    }

    pub fn one_d(length: f64, intervals: usize, t_final: f64, steps: usize) -> Result<Self> {
        Self::new(1, &[length], &[intervals], t_final, steps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn intervals(&self) -> &[usize] {
        &self.intervals
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, step: usize) -> f64 {
        if step == self.steps {
            self.t_final
        } else {
            step as f64 * self.dt
        }
    }

    /// Nodes per axis, boundary included.
    pub fn axis_nodes(&self, axis: usize) -> usize {
        self.intervals[axis] + 1
    }

    pub fn node_count(&self) -> usize {
        self.quad.len()
    }

    pub fn quadrature(&self) -> &[f64] {
        &self.quad
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Per-axis node indices of a flat node index.
    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        if self.dim == 1 {
            [node, 0]
        } else {
            let nx = self.axis_nodes(0);
            [node % nx, node / nx]
        }
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let [i, j] = self.multi_index(node);
        let x = i as f64 * self.spacing[0];
        let y = if self.dim == 2 { j as f64 * self.spacing[1] } else { 0.0 };
        [x, y]
    }

    /// Whether a node lies on the boundary of the rectangle.
    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.multi_index(node);
        (0..self.dim).any(|a| idx[a] == 0 || idx[a] == self.intervals[a])
    }

    /// Whether a node is a corner of the rectangle (2D only).
    pub fn is_corner(&self, node: usize) -> bool {
        if self.dim != 2 {
            return false;
        }
        let idx = self.multi_index(node);
        (idx[0] == 0 || idx[0] == self.intervals[0]) && (idx[1] == 0 || idx[1] == self.intervals[1])
    }

    /// Sample a function of the coordinates on every node.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Field {
        (0..self.node_count()).map(|k| f(self.coords(k))).collect()
    }

    pub fn zeros(&self) -> Field {
        vec![0.0; self.node_count()]
    }

    pub fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.node_count() {
            return Err(Error::SizeMismatch {
                expected: self.node_count(),
                found: f.len(),
            });
        }
        Ok(())
    }

    /// Eigenvalue of the discrete Laplacian for each cosine mode, in the same
    /// flat ordering as nodes.
    pub fn mode_eigenvalues(&self) -> &[f64] {
        &self.mode_eig
    }

    /// Cosine-mode coefficients of a nodal field.
    pub fn to_modes(&self, f: &[f64]) -> Field {
        let mut out = vec![0.0; f.len()];
        if self.dim == 1 {
            self.axes[0].analyze(f, &mut out);
        } else {
            self.apply_2d(f, &mut out, true);
        }
        out
    }

    /// Nodal values of a cosine-mode expansion.
    pub fn from_modes(&self, c: &[f64]) -> Field {
        let mut out = vec![0.0; c.len()];
        if self.dim == 1 {
            self.axes[0].synthesize(c, &mut out);
        } else {
            self.apply_2d(c, &mut out, false);
        }
        out
    }

    fn apply_2d(&self, f: &[f64], out: &mut [f64], analyze: bool) {
        let (ax, ay) = (&self.axes[0], &self.axes[1]);
        let (nx, ny) = (ax.nodes, ay.nodes);
        let mut tmp = vec![0.0; nx * ny];
        let mut buf_in = vec![0.0; nx.max(ny)];
        let mut buf_out = vec![0.0; nx.max(ny)];
        for j in 0..ny {
            let row = &f[j * nx..(j + 1) * nx];
            let dst = &mut tmp[j * nx..(j + 1) * nx];
            if analyze {
                ax.analyze(row, dst);
            } else {
                ax.synthesize(row, dst);
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                buf_in[j] = tmp[j * nx + i];
            }
            if analyze {
                ay.analyze(&buf_in[..ny], &mut buf_out[..ny]);
            } else {
                ay.synthesize(&buf_in[..ny], &mut buf_out[..ny]);
            }
            for j in 0..ny {
                out[j * nx + i] = buf_out[j];
            }
        }
    }

    /// Nodal cosine mode `(kx, ky)`, i.e. `cos(kx pi x / Lx) cos(ky pi y / Ly)`.
    pub fn cosine_mode(&self, kx: usize, ky: usize) -> Field {
        let lx = self.lengths[0];
        let ly = if self.dim == 2 { self.lengths[1] } else { 1.0 };
        self.sample(|[x, y]| {
            let cx = (std::f64::consts::PI * kx as f64 * x / lx).cos();
            if self.dim == 2 {
                cx * (std::f64::consts::PI * ky as f64 * y / ly).cos()
            } else {
                cx
            }
        })
    }

    /// Solve `(shift - Laplacian) x = rhs` for `shift + mode eigen` nonzero in every mode.
    pub fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Result<Field> {
        self.check(rhs)?;
        let mut c = self.to_modes(rhs);
        for (ck, &lam) in c.iter_mut().zip(&self.mode_eig) {
            let d = shift - lam;
            if d == 0.0 {
                return Err(Error::LinearSolver("singular shifted Laplacian".into()));
            }
            *ck /= d;
        }
        Ok(self.from_modes(&c))
    }
}

/// Convenience constructor mirroring the grid description used in configs.
pub fn build_grid(dim: usize, lengths: &[f64], intervals: &[usize], t_final: f64, steps: usize) -> Result<Grid> {
    Grid::new(dim, lengths, intervals, t_final, steps)
}

fn axis_stride(grid: &Grid, axis: usize) -> usize {
    if axis == 0 {
        1
    } else {
        grid.axis_nodes(0)
    }
}

/// Half-cell factor: 1/2 at the two end nodes of an axis, 1 elsewhere.
fn cell_fraction(i: usize, n: usize) -> f64 {
    if i == 0 || i == n {
        0.5
    } else {
        1.0
    }
}

/// Second-order Neumann Laplacian with ghost-node reflection.
pub fn neumann_laplacian(f: &[f64], grid: &Grid) -> Result<Field> {
    grid.check(f)?;
    let mut out = vec![0.0; f.len()];
    laplacian_add(f, grid, 1.0, &mut out);
    Ok(out)
}

/// `out += scale * Laplacian(f)`.
pub fn laplacian_add(f: &[f64], grid: &Grid, scale: f64, out: &mut [f64]) {
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let n = grid.intervals()[axis];
        let stride = axis_stride(grid, axis);
        let c = scale / (h * h);
        for node in 0..f.len() {
            let i = grid.multi_index(node)[axis];
            let val = if i == 0 {
                2.0 * (f[node + stride] - f[node])
            } else if i == n {
                2.0 * (f[node - stride] - f[node])
            } else {
                f[node - stride] - 2.0 * f[node] + f[node + stride]
            };
            out[node] += c * val;
        }
    }
}

/// Second difference along one axis (the axis part of the Laplacian).
pub fn second_difference(f: &[f64], grid: &Grid, axis: usize) -> Field {
    let h = grid.spacing()[axis];
    let n = grid.intervals()[axis];
    let stride = axis_stride(grid, axis);
    (0..f.len())
        .map(|node| {
            let i = grid.multi_index(node)[axis];
            let val = if i == 0 {
                2.0 * (f[node + stride] - f[node])
            } else if i == n {
                2.0 * (f[node - stride] - f[node])
            } else {
                f[node - stride] - 2.0 * f[node] + f[node + stride]
            };
            val / (h * h)
        })
        .collect()
}

/// Centered first difference along one axis; zero on the boundary faces
/// normal to that axis (reflected ghost values).
pub fn centered_difference(f: &[f64], grid: &Grid, axis: usize) -> Field {
    let h = grid.spacing()[axis];
    let n = grid.intervals()[axis];
    let stride = axis_stride(grid, axis);
    (0..f.len())
        .map(|node| {
            let i = grid.multi_index(node)[axis];
            if i == 0 || i == n {
                0.0
            } else {
                (f[node + stride] - f[node - stride]) / (2.0 * h)
            }
        })
        .collect()
}

/// Conservative flux-form `div(u grad v)`: face-averaged `u`, centered face
/// gradient of `v`, zero flux through the boundary.
pub fn chemotaxis_divergence(u: &[f64], v: &[f64], grid: &Grid) -> Result<Field> {
    grid.check(u)?;
    grid.check(v)?;
    let mut out = vec![0.0; u.len()];
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let n = grid.intervals()[axis];
        let stride = axis_stride(grid, axis);
        for node in 0..u.len() {
            let i = grid.multi_index(node)[axis];
            let mut flux_diff = 0.0;
            if i < n {
                let r = node + stride;
                flux_diff += 0.5 * (u[node] + u[r]) * (v[r] - v[node]) / h;
            }
            if i > 0 {
                let l = node - stride;
                flux_diff -= 0.5 * (u[node] + u[l]) * (v[node] - v[l]) / h;
            }
            out[node] += flux_diff / (h * cell_fraction(i, n));
        }
    }
    Ok(out)
}

/// Trapezoid-rule integral over the domain.
pub fn mass(f: &[f64], grid: &Grid) -> Result<f64> {
    grid.check(f)?;
    Ok(weighted_dot(f, &vec![1.0; f.len()], grid.quadrature()))
}

/// Trapezoid inner product `<f, g>`.
pub fn inner(f: &[f64], g: &[f64], grid: &Grid) -> f64 {
    weighted_dot(f, g, grid.quadrature())
}

pub fn l2_norm(f: &[f64], grid: &Grid) -> f64 {
    inner(f, f, grid).sqrt()
}

fn weighted_dot(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    f.iter().zip(g).zip(w).map(|((a, b), c)| a * b * c).sum()
}

/// Subtract the domain mean so the field integrates to zero.
pub fn remove_mean(f: &mut [f64], grid: &Grid) -> f64 {
    let mean = weighted_dot(f, &vec![1.0; f.len()], grid.quadrature()) / grid.volume();
    f.iter_mut().for_each(|v| *v -= mean);
    mean
}

/// One [`Field`] per time level `0..=steps`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    nodes: usize,
    levels: usize,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::zeros_with(grid.node_count(), grid.steps() + 1)
    }

    pub fn zeros_with(nodes: usize, levels: usize) -> Self {
        Self {
            nodes,
            levels,
            data: vec![0.0; nodes * levels],
        }
    }

    /// Separable field `f(t) * shape(x)`.
    pub fn separable(grid: &Grid, shape: &[f64], f: impl Fn(f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..out.levels {
            let a = f(grid.time(k));
            out.slice_mut(k).iter_mut().zip(shape).for_each(|(o, s)| *o = a * s);
        }
        out
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(usize) -> Field) -> Self {
        let mut out = Self::zeros(grid);
        for k in 0..out.levels {
            let slice = f(k);
            out.slice_mut(k).copy_from_slice(&slice);
        }
        out
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.data[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.nodes..(k + 1) * self.nodes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.nodes != grid.node_count() || self.levels != grid.steps() + 1 {
            return Err(Error::SizeMismatch {
                expected: grid.node_count() * (grid.steps() + 1),
                found: self.data.len(),
            });
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &SpaceTimeField) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += c * b);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}
