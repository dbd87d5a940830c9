use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform tensor grid on an axis-aligned box.
///
/// Nodes are numbered lexicographically with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    nodes: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
}

impl BoxGrid {
    /// `nodes[i] ≥ 3` nodes along axis `i`, including both ends.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        let n = lo.len();
        if n == 0 || hi.len() != n || nodes.len() != n {
            return Err(Error::Dimension("grid corners and node counts must share a positive length".into()));
        }
        if nodes.iter().any(|&k| k < 3) {
            return Err(Error::InvalidInput("at least 3 nodes per axis".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && b > a)) {
            return Err(Error::InvalidInput("grid extents must be finite with lo < hi".into()));
        }
        let h = (0..n).map(|i| (hi[i] - lo[i]) / (nodes[i] - 1) as f64).collect();
        let mut strides = Vec::with_capacity(n);
        let mut s = 1;
        for &k in &nodes {
            strides.push(s);
            s *= k;
        }
        Ok(BoxGrid {
            lo,
            hi,
            nodes,
            h,
            strides,
        })
    }

    /// The unit cube `[0,1]^n` with `per_axis` nodes on every axis.
    pub fn unit(n: usize, per_axis: usize) -> Result<Self> {
        BoxGrid::new(vec![0.0; n], vec![1.0; n], vec![per_axis; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    /// Largest spacing over the axes.
    pub fn max_spacing(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        self.nodes
            .iter()
            .scan(node, |rest, &k| {
                let i = *rest % k;
                *rest /= k;
                Some(i)
            })
            .collect()
    }

    pub fn node_of(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.lo[a] + i as f64 * self.h[a])
            .collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.multi_index(node)
            .iter()
            .zip(&self.nodes)
            .any(|(&i, &k)| i == 0 || i == k - 1)
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&v| !self.is_boundary(v))
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count()).filter(|&v| self.is_boundary(v))
    }
}

/// An `m`-vector per grid node, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: BoxGrid,
    m: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: &BoxGrid, m: usize) -> Self {
        GridField {
            grid: grid.clone(),
            m,
            values: vec![0.0; grid.node_count() * m],
        }
    }

    pub fn from_values(grid: &BoxGrid, m: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || values.len() != grid.node_count() * m {
            return Err(Error::Dimension(format!(
                "field needs {} values, got {}",
                grid.node_count() * m,
                values.len()
            )));
        }
        Ok(GridField {
            grid: grid.clone(),
            m,
            values,
        })
    }

    /// Evaluates `f` at every node's coordinates.
    pub fn from_fn(grid: &BoxGrid, m: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.node_count() * m);
        for v in 0..grid.node_count() {
            let x = grid.coords(v);
            let u = f(&x);
            if u.len() != m {
                return Err(Error::Dimension(format!("value at node {v} has length {}", u.len())));
            }
            values.extend(u);
        }
        Ok(GridField {
            grid: grid.clone(),
            m,
            values,
        })
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn at_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `max |self − other|` over all nodes and components.
    pub fn max_diff(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    /// Central-difference gradient at an interior node, ordered
    /// `(∂_1 u_1, …, ∂_n u_1, ∂_1 u_2, …)`.
    pub fn gradient_at(&self, node: usize) -> Vec<f64> {
        let n = self.grid.dim();
        let mut eta = vec![0.0; self.m * n];
        for j in 0..n {
            let s = self.grid.stride(j);
            let (fwd, bwd) = (self.at(node + s), self.at(node - s));
            for p in 0..self.m {
                eta[p * n + j] = (fwd[p] - bwd[p]) / (2.0 * self.grid.spacing()[j]);
            }
        }
        eta
    }

    /// CSV with columns `x1..xn,u1..um`, one row per node.
    pub fn to_csv(&self) -> String {
        self.csv_rows(|_| true)
    }

    /// CSV restricted to the nodes whose index along `axis` equals `index`.
    pub fn slice_csv(&self, axis: usize, index: usize) -> String {
        self.csv_rows(|multi| multi[axis] == index)
    }

    fn csv_rows(&self, keep: impl Fn(&[usize]) -> bool) -> String {
        let n = self.grid.dim();
        let mut out = String::new();
        let header: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=self.m).map(|p| format!("u{p}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for v in 0..self.grid.node_count() {
            if !keep(&self.grid.multi_index(v)) {
                continue;
            }
            let row: Vec<String> = self
                .grid
                .coords(v)
                .iter()
                .chain(self.at(v))
                .map(|x| format!("{x:.17e}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
