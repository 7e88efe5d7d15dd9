//! Structured quadrilateral meshes, conductivity pairs and Dirichlet data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every conductivity component before assembly.
pub const KAPPA_FLOOR: f64 = 1e-9;

/// Diagonal (orthotropic) conductivity tensor `diag(k11, k22)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthotropicConductivity {
    pub k11: f64,
    pub k22: f64,
}

impl OrthotropicConductivity {
    pub const fn new(k11: f64, k22: f64) -> Self {
        Self { k11, k22 }
    }

    pub const fn isotropic(k: f64) -> Self {
        Self { k11: k, k22: k }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k11 >= 0.0 && self.k22 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "conductivity components must be non-negative, got ({}, {})",
                self.k11, self.k22
            )));
        }
        Ok(())
    }

    pub fn floored(&self) -> Self {
        Self {
            k11: self.k11.max(KAPPA_FLOOR),
            k22: self.k22.max(KAPPA_FLOOR),
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            k11: self.k22,
            k22: self.k11,
        }
    }
}

/// Uniform grid of `nx × ny` square elements of edge `h`.
///
/// Nodes are numbered row-major from the bottom-left corner; element nodes
/// run counterclockwise starting at the bottom-left node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMesh {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl MacroMesh {
    pub fn new(nx: usize, ny: usize, h: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "mesh must have at least one element per axis, got {nx}x{ny}"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "element size must be positive, got {h}"
            )));
        }
        Ok(Self { nx, ny, h })
    }

    pub fn unit(nx: usize, ny: usize) -> Self {
        Self::new(nx, ny, 1.0).expect("non-empty unit mesh")
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        j * (self.nx + 1) + i
    }

    /// Grid position `(i, j)` of a node.
    #[inline]
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(node);
        (i as f64 * self.h, j as f64 * self.h)
    }

    #[inline]
    pub fn element(&self, ex: usize, ey: usize) -> usize {
        ey * self.nx + ex
    }

    #[inline]
    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    #[inline]
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = self.element_ij(e);
        let n0 = self.node(ex, ey);
        let row = self.nx + 1;
        [n0, n0 + 1, n0 + 1 + row, n0 + row]
    }

    pub fn element_centroid(&self, e: usize) -> (f64, f64) {
        let (ex, ey) = self.element_ij(e);
        ((ex as f64 + 0.5) * self.h, (ey as f64 + 0.5) * self.h)
    }

    /// Nodes on the left edge (`x = 0`), bottom to top.
    pub fn left_edge(&self) -> Vec<usize> {
        (0..=self.ny).map(|j| self.node(0, j)).collect()
    }

    pub fn right_edge(&self) -> Vec<usize> {
        (0..=self.ny).map(|j| self.node(self.nx, j)).collect()
    }

    /// Left-edge nodes whose `y` lies in `[y0, y1]`.
    pub fn left_segment(&self, y0: f64, y1: f64) -> Vec<usize> {
        let tol = 1e-9 * self.h;
        (0..=self.ny)
            .filter(|&j| {
                let y = j as f64 * self.h;
                y >= y0 - tol && y <= y1 + tol
            })
            .map(|j| self.node(0, j))
            .collect()
    }

    /// Elements touching each node.
    pub fn node_elements(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.node_ij(node);
        let xs = [i.checked_sub(1), (i < self.nx).then_some(i)];
        let ys = [j.checked_sub(1), (j < self.ny).then_some(j)];
        ys.into_iter()
            .flatten()
            .flat_map(move |ey| xs.into_iter().flatten().map(move |ex| self.element(ex, ey)))
    }
}

/// One set of nodes held at a prescribed temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSet {
    pub nodes: Vec<usize>,
    pub value: f64,
}

/// Prescribed temperatures; by convention the first set is the hot source
/// and the second the cold sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub sets: Vec<DirichletSet>,
}

impl BoundaryConditions {
    pub fn new(sets: Vec<DirichletSet>) -> Self {
        Self { sets }
    }

    /// Hot source on the whole left edge, cold sink on the whole right edge.
    pub fn left_right(mesh: &MacroMesh, t_hot: f64, t_cold: f64) -> Self {
        Self::hot_cold(mesh.left_edge(), t_hot, mesh.right_edge(), t_cold)
    }

    pub fn hot_cold(hot: Vec<usize>, t_hot: f64, cold: Vec<usize>, t_cold: f64) -> Self {
        Self {
            sets: vec![
                DirichletSet {
                    nodes: hot,
                    value: t_hot,
                },
                DirichletSet {
                    nodes: cold,
                    value: t_cold,
                },
            ],
        }
    }

    pub fn validate(&self, mesh: &MacroMesh) -> Result<()> {
        let mut seen = vec![false; mesh.node_count()];
        let mut any = false;
        for set in &self.sets {
            if !set.value.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite prescribed temperature {}",
                    set.value
                )));
            }
            for &n in &set.nodes {
                if n >= mesh.node_count() {
                    return Err(Error::InvalidArgument(format!(
                        "constrained node {n} outside mesh with {} nodes",
                        mesh.node_count()
                    )));
                }
                if std::mem::replace(&mut seen[n], true) {
                    return Err(Error::InvalidArgument(format!(
                        "node {n} appears in more than one Dirichlet set"
                    )));
                }
                any = true;
            }
        }
        if !any {
            return Err(Error::InvalidArgument(
                "at least one Dirichlet node is required".into(),
            ));
        }
        Ok(())
    }

    /// Per-node prescribed value, `None` for free nodes.
    pub fn prescribed(&self, mesh: &MacroMesh) -> Vec<Option<f64>> {
        let mut out = vec![None; mesh.node_count()];
        for set in &self.sets {
            for &n in &set.nodes {
                out[n] = Some(set.value);
            }
        }
        out
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.sets
            .iter()
            .filter(|s| !s.nodes.is_empty())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s.value), hi.max(s.value))
            })
    }

    pub fn hot(&self) -> Option<&DirichletSet> {
        self.sets.first()
    }

    pub fn cold(&self) -> Option<&DirichletSet> {
        self.sets.get(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_connectivity() {
        let mesh = MacroMesh::unit(75, 50);
        assert_eq!(mesh.node_count(), 76 * 51);
        assert_eq!(mesh.element_count(), 3750);
        for e in 0..mesh.element_count() {
            let nodes = mesh.element_nodes(e);
            for (a, &na) in nodes.iter().enumerate() {
                assert!(na < mesh.node_count());
                for &nb in &nodes[a + 1..] {
                    assert_ne!(na, nb);
                }
            }
        }
    }

    #[test]
    fn element_nodes_are_counterclockwise() {
        let mesh = MacroMesh::new(3, 2, 0.5).unwrap();
        let e = mesh.element(1, 1);
        let coords: Vec<_> = mesh
            .element_nodes(e)
            .iter()
            .map(|&n| mesh.node_coords(n))
            .collect();
        assert_eq!(coords, vec![(0.5, 0.5), (1.0, 0.5), (1.0, 1.0), (0.5, 1.0)]);
    }

    #[test]
    fn node_elements_at_corner_and_interior() {
        let mesh = MacroMesh::unit(3, 3);
        assert_eq!(mesh.node_elements(0).collect::<Vec<_>>(), vec![0]);
        let mut inner: Vec<_> = mesh.node_elements(mesh.node(1, 1)).collect();
        inner.sort();
        assert_eq!(inner, vec![0, 1, 3, 4]);
    }

    #[test]
    fn bc_validation() {
        let mesh = MacroMesh::unit(2, 2);
        let bc = BoundaryConditions::left_right(&mesh, 100.0, 0.0);
        bc.validate(&mesh).unwrap();
        let overlapping = BoundaryConditions::hot_cold(vec![0, 1], 1.0, vec![1], 0.0);
        assert!(overlapping.validate(&mesh).is_err());
        let outside = BoundaryConditions::hot_cold(vec![99], 1.0, vec![], 0.0);
        assert!(outside.validate(&mesh).is_err());
        let empty = BoundaryConditions::new(vec![]);
        assert!(empty.validate(&mesh).is_err());
    }

    #[test]
    fn left_segment_selects_centered_nodes() {
        let mesh = MacroMesh::unit(75, 50);
        let seg = mesh.left_segment(20.0, 30.0);
        assert_eq!(seg.len(), 11);
        assert_eq!(mesh.node_coords(seg[0]), (0.0, 20.0));
    }

    #[test]
    fn invalid_mesh() {
        assert!(MacroMesh::new(0, 3, 1.0).is_err());
        assert!(MacroMesh::new(3, 3, -1.0).is_err());
    }
}
