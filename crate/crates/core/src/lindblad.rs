//! Stochastic quantum walk with a sink.
//!
//! The walker lives on the `n` maze nodes plus one absorbing sink node at
//! index `n`. Its density matrix evolves under
//!
//! ```text
//! dρ/dt = (1-p) (-i[A, ρ])
//!       + p Σ_ij (L_ij ρ L_ij† - ½{L_ij† L_ij, ρ}),   L_ij = (A_ij / d_j) |i⟩⟨j|
//!       + κ (2 |s⟩⟨e| ρ |e⟩⟨s| - {|e⟩⟨e|, ρ})
//! ```
//!
//! with `A` the adjacency matrix, `d_j` the degree of node `j`, `e` the exit
//! node, `s` the sink and `κ` the sink rate (1 by default, which fixes the
//! time unit). Isolated nodes (`d_j = 0`) emit no incoherent jumps.
//!
//! [`evolve`] integrates with fixed-step RK4 using a sparse right-hand side;
//! [`exact_evolve`] exponentiates the dense Liouvillian and is meant as a
//! reference for small systems.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maze::Maze;

pub type C64 = Complex64;

/// Default RK4 step ceiling, in units of the inverse sink rate.
pub const DEFAULT_MAX_STEP: f64 = 0.005;
/// Default dimension guard for [`exact_evolve`].
pub const EXACT_DIM_GUARD: usize = 16;

pub const HERMITIAN_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-6;
pub const PSD_TOL: f64 = 1e-6;

/// Weight of the incoherent hopping, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MixParameter(f64);

impl MixParameter {
    pub fn new(p: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&p) {
            Ok(MixParameter(p))
        } else {
            invalid(format!("mix parameter p must lie in [0, 1], got {p}"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for MixParameter {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        MixParameter::new(p)
    }
}

impl From<MixParameter> for f64 {
    fn from(p: MixParameter) -> f64 {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<C64>,
}

impl DensityMatrix {
    /// Wrap a matrix after checking the Hermitian, unit-trace and PSD invariants.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return invalid(format!("density matrix must be square, got {}x{}", m.nrows(), m.ncols()));
        }
        let rho = DensityMatrix { m };
        rho.check_physical()?;
        Ok(rho)
    }

    /// `|node⟩⟨node|` in dimension `dim`.
    pub fn pure(dim: usize, node: usize) -> Result<Self> {
        if node >= dim {
            return invalid(format!("node {node} out of range for dimension {dim}"));
        }
        let mut m = DMatrix::zeros(dim, dim);
        m[(node, node)] = C64::new(1.0, 0.0);
        Ok(DensityMatrix { m })
    }

    /// Diagonal state with the given populations.
    pub fn diagonal_state(populations: &[f64]) -> Result<Self> {
        let d = populations.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &p) in populations.iter().enumerate() {
            m[(i, i)] = C64::new(p, 0.0);
        }
        DensityMatrix::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m[(i, j)]
    }

    pub fn population(&self, i: usize) -> f64 {
        self.m[(i, i)].re
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.population(i)).collect()
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ_ij |ρ_ij|² for Hermitian ρ
        self.m.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..=j {
                worst = worst.max((self.m[(i, j)] - self.m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().min()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check_physical(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NumericalInstability("density matrix has non-finite entries".into()));
        }
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::NumericalInstability(format!("hermiticity error {herm:e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NumericalInstability(format!("trace {tr} deviates from 1")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::NumericalInstability(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(())
    }
}

/// The walker starts localized on the maze entrance.
pub fn initial_state(maze: &Maze) -> DensityMatrix {
    DensityMatrix::pure(maze.node_count() + 1, maze.entrance()).expect("entrance is a valid node")
}

/// Population of the sink, i.e. the cumulative escape probability.
pub fn escape_probability(rho: &DensityMatrix) -> f64 {
    let s = rho.dim() - 1;
    rho.population(s)
}

/// Incoherent jump `source -> target` with amplitude `A_ij / d_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub target: usize,
    pub source: usize,
    pub amplitude: f64,
}

/// The right-hand side of the master equation for one maze topology.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    exit: usize,
    adjacency: DMatrix<u8>,
    p: MixParameter,
    sink_rate: f64,
    max_step: f64,
    neighbors: Vec<Vec<usize>>,
    jumps: Vec<Jump>,
    // Σ_i |L_ij|² for every source j (0 on the sink)
    escape_rates: Vec<f64>,
}

impl Generator {
    pub fn new(maze: &Maze, p: MixParameter, sink_rate: f64) -> Result<Self> {
        if !(sink_rate >= 0.0 && sink_rate.is_finite()) {
            return invalid(format!("sink rate must be finite and non-negative, got {sink_rate}"));
        }
        let n = maze.node_count();
        let dim = n + 1;
        let mut neighbors = maze.neighbor_lists();
        neighbors.push(Vec::new());
        let degrees = maze.degrees();
        let mut jumps = Vec::new();
        let mut escape_rates = vec![0.0; dim];
        for (source, nbrs) in neighbors.iter().enumerate().take(n) {
            if degrees[source] == 0 {
                continue;
            }
            let amplitude = 1.0 / degrees[source] as f64;
            for &target in nbrs {
                jumps.push(Jump { target, source, amplitude });
                escape_rates[source] += amplitude * amplitude;
            }
        }
        Ok(Generator {
            dim,
            exit: maze.exit_node(),
            adjacency: maze.adjacency(),
            p,
            sink_rate,
            max_step: DEFAULT_MAX_STEP,
            neighbors,
            jumps,
            escape_rates,
        })
    }

    /// Override the RK4 step ceiling.
    pub fn with_max_step(mut self, max_step: f64) -> Result<Self> {
        if !(max_step > 0.0 && max_step.is_finite()) {
            return invalid(format!("max step must be positive, got {max_step}"));
        }
        self.max_step = max_step;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sink(&self) -> usize {
        self.dim - 1
    }

    pub fn exit_node(&self) -> usize {
        self.exit
    }

    pub fn mix(&self) -> MixParameter {
        self.p
    }

    pub fn sink_rate(&self) -> f64 {
        self.sink_rate
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Amplitude of `L_ij`, zero if no such jump exists.
    pub fn jump_amplitude(&self, target: usize, source: usize) -> f64 {
        self.jumps
            .iter()
            .find(|j| j.target == target && j.source == source)
            .map_or(0.0, |j| j.amplitude)
    }

    /// `dρ/dt` for the given state.
    pub fn apply(&self, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return invalid(format!(
                "state is {}x{}, generator expects {}x{}",
                rho.nrows(),
                rho.ncols(),
                self.dim,
                self.dim
            ));
        }
        let mut out = DMatrix::zeros(self.dim, self.dim);
        self.rhs_into(rho.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Column-major right-hand side: `out = dρ/dt`.
    fn rhs_into(&self, rho: &[C64], out: &mut [C64]) {
        self.fused_stage(rho, rho, 0.0, 1.0, out);
    }

    /// `out = base + scale * L(v)` for Hermitian `v` and `base`, with
    /// `base_weight` either 0 (plain right-hand side) or 1. Only the upper
    /// triangle is computed; the output is mirrored to be exactly Hermitian.
    fn fused_stage(&self, base: &[C64], v: &[C64], base_weight: f64, scale: f64, out: &mut [C64]) {
        let d = self.dim;
        let coh = (1.0 - self.p.value()) * scale;
        let half_inc = 0.5 * self.p.value() * scale;
        let kappa = self.sink_rate * scale;
        let e = self.exit;
        let at = |i: usize, j: usize| v[i + j * d];

        for j in 0..d {
            let nj = &self.neighbors[j];
            let gj = self.escape_rates[j];
            let col = j * d;
            let v_col = &v[col..col + d];
            let out_col = &mut out[col..=col + j];
            let base_col = &base[col..=col + j];
            for (i, (o, &b)) in out_col.iter_mut().zip(base_col).enumerate() {
                // [A, v]_ij = Σ_{k~i} v_kj - Σ_{k~j} v_ik
                let mut comm = C64::new(0.0, 0.0);
                for &k in &self.neighbors[i] {
                    comm += v_col[k];
                }
                for &k in nj {
                    comm -= v[i + k * d];
                }
                let dephase = half_inc * (self.escape_rates[i] + gj);
                let vij = v_col[i];
                *o = b * base_weight
                    + C64::new(comm.im * coh - vij.re * dephase, -comm.re * coh - vij.im * dephase);
            }
        }
        // -κ{|e⟩⟨e|, v} touches row e and column e of the upper triangle
        for j in e..d {
            out[e + j * d] -= at(e, j) * kappa;
        }
        for i in 0..=e {
            out[i + e * d] -= at(i, e) * kappa;
        }
        let inc = 2.0 * half_inc;
        for jump in &self.jumps {
            let r = jump.amplitude * jump.amplitude;
            out[jump.target * (d + 1)].re += inc * r * at(jump.source, jump.source).re;
        }
        out[(d - 1) * (d + 1)].re += 2.0 * kappa * at(e, e).re;
        for j in 0..d {
            out[j * (d + 1)].im = 0.0;
            for i in 0..j {
                out[j + i * d] = out[i + j * d].conj();
            }
        }
    }

    /// Number of RK4 steps used to cover `dt`.
    pub fn step_count(&self, dt: f64) -> usize {
        (dt / self.max_step).ceil() as usize
    }

    /// Classical RK4 on a linear autonomous system is one application of
    /// `1 + hL + (hL)²/2 + (hL)³/6 + (hL)⁴/24` per step, evaluated here in
    /// Horner form: `v ← y + (h/k) L v` for `k = 4, 3, 2, 1`.
    fn integrate(&self, mut rho: Vec<C64>, dt: f64, mut observe: impl FnMut(usize, &[C64])) -> Vec<C64> {
        let steps = self.step_count(dt);
        if steps == 0 {
            return rho;
        }
        let h = dt / steps as f64;
        let zero = C64::new(0.0, 0.0);
        let mut a = vec![zero; rho.len()];
        let mut b = vec![zero; rho.len()];
        for step in 1..=steps {
            self.fused_stage(&rho, &rho, 1.0, h / 4.0, &mut a);
            self.fused_stage(&rho, &a, 1.0, h / 3.0, &mut b);
            self.fused_stage(&rho, &b, 1.0, h / 2.0, &mut a);
            self.fused_stage(&rho, &a, 1.0, h, &mut b);
            std::mem::swap(&mut rho, &mut b);
            observe(step, &rho);
        }
        rho
    }

    /// Dense `dim² x dim²` Liouvillian acting on column-stacked `vec(ρ)`,
    /// assembled from explicit operator matrices.
    pub fn liouvillian(&self) -> DMatrix<C64> {
        let d = self.dim;
        let one = C64::new(1.0, 0.0);
        let id = DMatrix::<C64>::identity(d, d);
        let mut h = DMatrix::<C64>::zeros(d, d);
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                h[(i, j)] = C64::new(self.adjacency[(i, j)] as f64, 0.0);
            }
        }
        let coh = C64::new(0.0, -(1.0 - self.p.value()));
        let mut l = (id.kronecker(&h) - h.transpose().kronecker(&id)) * coh;

        let mut dissipator = |op: &DMatrix<C64>, weight: f64| {
            let op_dag_op = op.adjoint() * op;
            let term = op.conjugate().kronecker(op)
                - (id.kronecker(&op_dag_op) + op_dag_op.transpose().kronecker(&id)) * (0.5 * one);
            l += term * C64::new(weight, 0.0);
        };

        let n = d - 1;
        for j in 0..n {
            let deg: u32 = (0..n).map(|i| self.adjacency[(i, j)] as u32).sum();
            for i in 0..n {
                if self.adjacency[(i, j)] == 0 {
                    continue;
                }
                let mut op = DMatrix::<C64>::zeros(d, d);
                op[(i, j)] = C64::new(1.0 / deg as f64, 0.0);
                dissipator(&op, self.p.value());
            }
        }
        // 2|s⟩⟨e|ρ|e⟩⟨s| - {|e⟩⟨e|, ρ} is the dissipator of √2 |s⟩⟨e|
        let mut sink_op = DMatrix::<C64>::zeros(d, d);
        sink_op[(d - 1, self.exit)] = C64::new(2f64.sqrt(), 0.0);
        dissipator(&sink_op, self.sink_rate);
        l
    }
}

pub fn build_generator(maze: &Maze, p: MixParameter, sink_rate: f64) -> Result<Generator> {
    Generator::new(maze, p, sink_rate)
}

pub fn apply_generator(g: &Generator, rho: &DensityMatrix) -> Result<DMatrix<C64>> {
    g.apply(rho.matrix())
}

fn check_interval(g: &Generator, rho: &DensityMatrix, dt: f64) -> Result<()> {
    if rho.dim() != g.dim() {
        return invalid(format!("state dimension {} != generator dimension {}", rho.dim(), g.dim()));
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return invalid(format!("time interval must be finite and non-negative, got {dt}"));
    }
    Ok(())
}

/// Propagate `rho` by `dt` with fixed-step RK4 (`h = dt / ceil(dt / h_max)`).
pub fn evolve(g: &Generator, rho: &DensityMatrix, dt: f64) -> Result<DensityMatrix> {
    check_interval(g, rho, dt)?;
    let d = rho.dim();
    let data = g.integrate(rho.m.as_slice().to_vec(), dt, |_, _| {});
    let out = DensityMatrix { m: DMatrix::from_vec(d, d, data) };
    out.check_physical()?;
    Ok(out)
}

/// Like [`evolve`], additionally returning `samples + 1` evenly spaced
/// snapshots (on integrator steps) including both endpoints.
pub fn evolve_sampled(
    g: &Generator,
    rho: &DensityMatrix,
    dt: f64,
    samples: usize,
) -> Result<Vec<(f64, DensityMatrix)>> {
    check_interval(g, rho, dt)?;
    if samples == 0 {
        return invalid("need at least one sample interval");
    }
    let steps = g.step_count(dt);
    let h = if steps == 0 { 0.0 } else { dt / steps as f64 };
    let every = (steps / samples).max(1);
    let mut out = vec![(0.0, rho.clone())];
    g.integrate(rho.m.as_slice().to_vec(), dt, |step, state| {
        if step % every == 0 || step == steps {
            let snapshot = DMatrix::from_column_slice(rho.dim(), rho.dim(), state);
            out.push((step as f64 * h, DensityMatrix { m: snapshot }));
        }
    });
    for (_, state) in &out {
        state.check_physical()?;
    }
    Ok(out)
}

/// Matrix-exponential propagation of the dense Liouvillian, for `dim <= guard`.
pub fn exact_evolve_guarded(
    g: &Generator,
    rho: &DensityMatrix,
    dt: f64,
    guard: usize,
) -> Result<DensityMatrix> {
    check_interval(g, rho, dt)?;
    if g.dim() > guard {
        return Err(Error::Capability(format!(
            "exact propagation limited to dimension {guard}, got {}",
            g.dim()
        )));
    }
    let d = g.dim();
    let propagator = (g.liouvillian() * C64::new(dt, 0.0)).exp();
    let v = nalgebra::DVector::from_column_slice(rho.m.as_slice());
    let out = propagator * v;
    Ok(DensityMatrix { m: DMatrix::from_column_slice(d, d, out.as_slice()) })
}

pub fn exact_evolve(g: &Generator, rho: &DensityMatrix, dt: f64) -> Result<DensityMatrix> {
    exact_evolve_guarded(g, rho, dt, EXACT_DIM_GUARD)
}

/// Write a trajectory as CSV: `t, rho_diag_0..rho_diag_n, p_exit`.
pub fn write_trajectory_csv<W: Write>(mut w: W, trajectory: &[(f64, DensityMatrix)]) -> Result<()> {
    let Some((_, first)) = trajectory.first() else {
        return Ok(());
    };
    let d = first.dim();
    write!(w, "t")?;
    for i in 0..d {
        write!(w, ",rho_diag_{i}")?;
    }
    writeln!(w, ",p_exit")?;
    for (t, rho) in trajectory {
        write!(w, "{t}")?;
        for p in rho.diagonal() {
            write!(w, ",{p}")?;
        }
        writeln!(w, ",{}", escape_probability(rho))?;
    }
    Ok(())
}
