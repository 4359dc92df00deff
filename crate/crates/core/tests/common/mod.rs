//! Reference implementations written straight from the model definition,
//! sharing no code with the library's integrators.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qmaze_core::{Maze, WallAction};

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Superoperator on column-stacked `vec(ρ)`, using `vec(XρY) = (Yᵀ ⊗ X) vec(ρ)`.
pub fn reference_liouvillian(maze: &Maze, p: f64, kappa: f64) -> DMatrix<C64> {
    let n = maze.node_count();
    let d = n + 1;
    let mut a = DMatrix::<C64>::zeros(d, d);
    for i in 0..n {
        for j in 0..n {
            if i != j && maze.is_linked(i, j) {
                a[(i, j)] = c(1.0);
            }
        }
    }
    let id = DMatrix::<C64>::identity(d, d);
    let i = C64::new(0.0, 1.0);
    let mut sup = (kron(&id, &a) - kron(&a.transpose(), &id)) * (-i * (1.0 - p));

    for src in 0..n {
        let deg: f64 = (0..n).map(|k| a[(k, src)].re).sum();
        if deg == 0.0 {
            continue;
        }
        for dst in 0..n {
            if a[(dst, src)].re == 0.0 {
                continue;
            }
            let mut l = DMatrix::<C64>::zeros(d, d);
            l[(dst, src)] = c(1.0 / deg);
            let ldl = l.adjoint() * &l;
            let term = kron(&l.conjugate(), &l) - kron(&id, &ldl) * c(0.5) - kron(&ldl.transpose(), &id) * c(0.5);
            sup += term * c(p);
        }
    }

    let (e, s) = (maze.exit_node(), n);
    let mut jump = DMatrix::<C64>::zeros(d, d);
    jump[(s, e)] = c(1.0);
    let mut proj = DMatrix::<C64>::zeros(d, d);
    proj[(e, e)] = c(1.0);
    let sink = kron(&jump.conjugate(), &jump) * c(2.0) - kron(&id, &proj) - kron(&proj.transpose(), &id);
    sup += sink * c(kappa);
    sup
}

pub fn reference_evolve(maze: &Maze, p: f64, kappa: f64, rho: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let d = rho.nrows();
    let vec = DMatrix::from_column_slice(d * d, 1, rho.as_slice());
    let out = (reference_liouvillian(maze, p, kappa) * c(t)).exp() * vec;
    DMatrix::from_column_slice(d, d, out.as_slice())
}

/// Classical populations by matrix exponential of the rate matrix.
pub fn reference_ctmc(maze: &Maze, kappa: f64, t: f64) -> Vec<f64> {
    let n = maze.node_count();
    let mut q = DMatrix::<f64>::zeros(n + 1, n + 1);
    for src in 0..n {
        let deg = (0..n).filter(|&k| maze.is_linked(k, src)).count() as f64;
        for dst in 0..n {
            if dst != src && maze.is_linked(dst, src) {
                let rate = 1.0 / (deg * deg);
                q[(dst, src)] += rate;
                q[(src, src)] -= rate;
            }
        }
    }
    let e = maze.exit_node();
    q[(n, e)] += 2.0 * kappa;
    q[(e, e)] -= 2.0 * kappa;
    let mut p0 = DMatrix::<f64>::zeros(n + 1, 1);
    p0[maze.entrance()] = 1.0;
    ((q * t).exp() * p0).as_slice().to_vec()
}

/// Random density matrix `G G† / tr(G G†)`.
pub fn random_density(d: usize, entries: &[(f64, f64)]) -> DMatrix<C64> {
    let g = DMatrix::from_fn(d, d, |i, j| {
        let (re, im) = entries[(i * d + j) % entries.len()];
        C64::new(re, im)
    });
    let m = &g * g.adjoint();
    let tr = m.trace();
    m / tr
}

/// A generated maze with some extra toggles applied.
pub fn perturbed_maze(width: usize, height: usize, seed: u64, toggles: &[usize]) -> Maze {
    let mut maze = Maze::generate(width, height, seed).unwrap();
    let edges = maze.candidate_edges().len();
    if edges > 0 {
        for &t in toggles {
            maze.apply_action_in_place(WallAction::Toggle(t % edges)).unwrap();
        }
    }
    maze
}

/// Mazes with at most `max_nodes` nodes, possibly with extra or missing links.
pub fn small_maze(max_nodes: usize) -> impl Strategy<Value = Maze> {
    (1usize..=4, 1usize..=4, any::<u64>(), prop::collection::vec(0usize..64, 0..4))
        .prop_filter("node budget", move |(w, h, _, _)| w * h <= max_nodes)
        .prop_map(|(w, h, seed, toggles)| perturbed_maze(w, h, seed, &toggles))
}
