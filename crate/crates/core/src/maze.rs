//! Grid mazes with a mutable link set.
//!
//! Nodes are the cells of a `width x height` grid, indexed row-major. A link
//! can only exist between grid-adjacent cells; the full list of such pairs is
//! the maze's candidate edge list, and the current topology is one bit per
//! candidate edge. Freshly generated mazes are perfect: a spanning tree of the
//! grid graph, carved by randomized depth-first search.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A topology edit: flip one candidate edge, or leave the maze alone.
///
/// Action indices used by the agent put `NoOp` at index 0 and `Toggle(e)` at
/// index `e + 1`, so the action space has `candidate_edges + 1` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WallAction {
    NoOp,
    Toggle(usize),
}

impl WallAction {
    pub fn from_index(index: usize, edge_count: usize) -> Result<Self> {
        match index {
            0 => Ok(WallAction::NoOp),
            i if i <= edge_count => Ok(WallAction::Toggle(i - 1)),
            i => invalid(format!("action index {i} out of range 0..={edge_count}")),
        }
    }

    pub fn index(self) -> usize {
        match self {
            WallAction::NoOp => 0,
            WallAction::Toggle(e) => e + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Maze {
    width: usize,
    height: usize,
    entrance: usize,
    exit_node: usize,
    candidate_edges: Vec<(usize, usize)>,
    links: Vec<bool>,
}

fn grid_edges(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(height * (width - 1) + width * (height - 1));
    for node in 0..width * height {
        let (row, col) = (node / width, node % width);
        if col + 1 < width {
            edges.push((node, node + 1));
        }
        if row + 1 < height {
            edges.push((node, node + width));
        }
    }
    edges
}

impl Maze {
    /// A maze with every wall built (no links at all).
    pub fn walled(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("maze dimensions must be positive, got {width}x{height}"));
        }
        let candidate_edges = grid_edges(width, height);
        let links = vec![false; candidate_edges.len()];
        Ok(Maze {
            width,
            height,
            entrance: 0,
            exit_node: width * height - 1,
            candidate_edges,
            links,
        })
    }

    /// Carve a perfect maze by randomized depth-first search from the entrance.
    ///
    /// The entrance is the top-left cell and the exit the bottom-right one.
    pub fn generate(width: usize, height: usize, seed: u64) -> Result<Self> {
        let mut maze = Self::walled(width, height)?;
        let n = maze.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut visited = vec![false; n];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut options = Vec::with_capacity(4);
        while let Some(&cell) = stack.last() {
            options.clear();
            options.extend(
                maze.grid_neighbors(cell)
                    .filter(|&(next, _)| !visited[next]),
            );
            if options.is_empty() {
                stack.pop();
                continue;
            }
            let &(next, edge) = options.choose(&mut rng).expect("non-empty");
            maze.links[edge] = true;
            visited[next] = true;
            stack.push(next);
        }
        Ok(maze)
    }

    /// Build a maze from an explicit list of links.
    pub fn from_links(
        width: usize,
        height: usize,
        entrance: usize,
        exit_node: usize,
        links: &[(usize, usize)],
    ) -> Result<Self> {
        let mut maze = Self::walled(width, height)?;
        let n = maze.node_count();
        if entrance >= n || exit_node >= n {
            return invalid(format!(
                "entrance {entrance} / exit {exit_node} out of range for {n} nodes"
            ));
        }
        maze.entrance = entrance;
        maze.exit_node = exit_node;
        for &(a, b) in links {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            let Some(edge) = maze.edge_index(i, j) else {
                return invalid(format!("({a}, {b}) is not a pair of grid-adjacent cells"));
            };
            if maze.links[edge] {
                return invalid(format!("duplicate link ({i}, {j})"));
            }
            maze.links[edge] = true;
        }
        Ok(maze)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn node_count(&self) -> usize {
        self.width * self.height
    }

    pub fn entrance(&self) -> usize {
        self.entrance
    }

    pub fn exit_node(&self) -> usize {
        self.exit_node
    }

    pub fn candidate_edges(&self) -> &[(usize, usize)] {
        &self.candidate_edges
    }

    /// Size of the action space: one toggle per candidate edge plus the null action.
    pub fn action_count(&self) -> usize {
        self.candidate_edges.len() + 1
    }

    /// Presence bit of every candidate edge, in candidate order.
    pub fn link_bits(&self) -> &[bool] {
        &self.links
    }

    pub fn link_count(&self) -> usize {
        self.links.iter().filter(|&&l| l).count()
    }

    /// Present links as `(i, j)` pairs with `i < j`.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.candidate_edges
            .iter()
            .zip(&self.links)
            .filter_map(|(&e, &on)| on.then_some(e))
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.candidate_edges.binary_search(&(i, j)).ok()
    }

    pub fn is_linked(&self, i: usize, j: usize) -> bool {
        self.edge_index(i, j).is_some_and(|e| self.links[e])
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency(&self) -> DMatrix<u8> {
        let n = self.node_count();
        let mut a = DMatrix::zeros(n, n);
        for (i, j) in self.links() {
            a[(i, j)] = 1;
            a[(j, i)] = 1;
        }
        a
    }

    /// Linked neighbours of every node.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.node_count()];
        for (i, j) in self.links() {
            nbrs[i].push(j);
            nbrs[j].push(i);
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }

    /// Number of links attached to node `j`.
    pub fn degree(&self, j: usize) -> Result<usize> {
        if j >= self.node_count() {
            return invalid(format!("node {j} out of range for {} nodes", self.node_count()));
        }
        Ok(self.links().filter(|&(a, b)| a == j || b == j).count())
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.node_count()];
        for (i, j) in self.links() {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    /// Return a copy of the maze with `action` applied.
    pub fn apply_action(&self, action: WallAction) -> Result<Self> {
        let mut next = self.clone();
        next.apply_action_in_place(action)?;
        Ok(next)
    }

    pub fn apply_action_in_place(&mut self, action: WallAction) -> Result<()> {
        match action {
            WallAction::NoOp => Ok(()),
            WallAction::Toggle(e) if e < self.links.len() => {
                self.links[e] = !self.links[e];
                Ok(())
            }
            WallAction::Toggle(e) => invalid(format!(
                "edge index {e} out of range for {} candidate edges",
                self.links.len()
            )),
        }
    }

    /// Nodes reachable from `start` through present links.
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let nbrs = self.neighbor_lists();
        let mut seen = vec![false; self.node_count()];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &nbrs[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        self.reachable_from(0).into_iter().all(|r| r)
    }

    /// Grid neighbours of a cell with the candidate-edge index joining them.
    fn grid_neighbors(&self, cell: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        let (row, col) = (cell / w, cell % w);
        let up = (row > 0).then(|| cell - w);
        let down = (row + 1 < self.height).then(|| cell + w);
        let left = (col > 0).then(|| cell - 1);
        let right = (col + 1 < w).then(|| cell + 1);
        [up, down, left, right]
            .into_iter()
            .flatten()
            .map(move |next| (next, self.edge_index(cell, next).expect("grid-adjacent")))
    }
}

/// Text format: `width height entrance exit`, then one `i j` line per link.
impl fmt::Display for Maze {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {} {}", self.width, self.height, self.entrance, self.exit_node)?;
        for (i, j) in self.links() {
            writeln!(f, "{i} {j}")?;
        }
        Ok(())
    }
}

impl FromStr for Maze {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let parse_fields = |lineno: usize, line: &str, expect: usize| -> Result<Vec<usize>> {
            let fields = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if fields.len() != expect {
                return Err(Error::Parse(format!(
                    "line {}: expected {expect} fields, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            Ok(fields)
        };
        let (lineno, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty maze file".into()))?;
        let h = parse_fields(lineno, header, 4)?;
        let mut links = Vec::new();
        for (lineno, line) in lines {
            let l = parse_fields(lineno, line, 2)?;
            if l[0] >= l[1] {
                return Err(Error::Parse(format!("line {}: link must satisfy i < j", lineno + 1)));
            }
            links.push((l[0], l[1]));
        }
        Maze::from_links(h[0], h[1], h[2], h[3], &links)
    }
}
