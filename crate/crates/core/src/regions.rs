//! Element and node selections on a macro mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::MacroMesh;

/// Geometric selector in mesh length units; elements are selected by
/// their centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "shape")]
pub enum Shape {
    /// Centroids with `r < radius`.
    Disk { center: [f64; 2], radius: f64 },
    /// Centroids with `r_in <= r <= r_out`.
    Ring {
        center: [f64; 2],
        r_in: f64,
        r_out: f64,
    },
    /// Centroids inside the half-open box `[x0, x1) × [y0, y1)`.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        let dist = |c: [f64; 2]| ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt();
        match *self {
            Shape::Disk { center, radius } => dist(center) < radius,
            Shape::Ring {
                center,
                r_in,
                r_out,
            } => {
                let r = dist(center);
                r >= r_in && r <= r_out
            }
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
        }
    }

    /// Box of `width × height` elements centered in the mesh, snapped down
    /// to whole elements when the margins are odd.
    pub fn centered_rect(mesh: &MacroMesh, width: usize, height: usize) -> Self {
        let ex0 = mesh.nx.saturating_sub(width) / 2;
        let ey0 = mesh.ny.saturating_sub(height) / 2;
        let h = mesh.h;
        Shape::Rect {
            x0: ex0 as f64 * h,
            y0: ey0 as f64 * h,
            x1: (ex0 + width) as f64 * h,
            y1: (ey0 + height) as f64 * h,
        }
    }
}

/// Sorted, de-duplicated element indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ElementSet(Vec<usize>);

impl ElementSet {
    pub fn new(mesh: &MacroMesh, mut elements: Vec<usize>) -> Result<Self> {
        elements.sort_unstable();
        elements.dedup();
        if let Some(&e) = elements.iter().find(|&&e| e >= mesh.element_count()) {
            return Err(Error::InvalidArgument(format!(
                "element {e} outside mesh with {} elements",
                mesh.element_count()
            )));
        }
        Ok(Self(elements))
    }

    pub fn from_shape(mesh: &MacroMesh, shape: &Shape) -> Self {
        Self(
            (0..mesh.element_count())
                .filter(|&e| shape.contains(mesh.element_centroid(e)))
                .collect(),
        )
    }

    pub fn all(mesh: &MacroMesh) -> Self {
        Self((0..mesh.element_count()).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, e: usize) -> bool {
        self.0.binary_search(&e).is_ok()
    }

    pub fn mask(&self, mesh: &MacroMesh) -> Vec<bool> {
        let mut m = vec![false; mesh.element_count()];
        for &e in &self.0 {
            m[e] = true;
        }
        m
    }

    pub fn union(&self, other: &ElementSet) -> ElementSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        v.sort_unstable();
        v.dedup();
        ElementSet(v)
    }

    pub fn difference(&self, other: &ElementSet) -> ElementSet {
        ElementSet(
            self.0
                .iter()
                .copied()
                .filter(|&e| !other.contains(e))
                .collect(),
        )
    }

    /// Nodes touched by at least one element of the set.
    pub fn nodes(&self, mesh: &MacroMesh) -> NodeSet {
        let mut v: Vec<usize> = self.0.iter().flat_map(|&e| mesh.element_nodes(e)).collect();
        v.sort_unstable();
        v.dedup();
        NodeSet(v)
    }

    /// Nodes all of whose adjacent elements lie outside the set.
    pub fn exterior_nodes(&self, mesh: &MacroMesh) -> NodeSet {
        let mask = self.mask(mesh);
        NodeSet(
            (0..mesh.node_count())
                .filter(|&n| mesh.node_elements(n).all(|e| !mask[e]))
                .collect(),
        )
    }
}

/// Sorted, de-duplicated node indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new(mesh: &MacroMesh, mut nodes: Vec<usize>) -> Result<Self> {
        nodes.sort_unstable();
        nodes.dedup();
        if let Some(&n) = nodes.iter().find(|&&n| n >= mesh.node_count()) {
            return Err(Error::InvalidArgument(format!(
                "node {n} outside mesh with {} nodes",
                mesh.node_count()
            )));
        }
        Ok(Self(nodes))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn retain(&mut self, keep: impl FnMut(&usize) -> bool) {
        self.0.retain(keep);
    }
}

/// The four probe nodes `A < B < C < D` on a horizontal line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePoints {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl ProbePoints {
    pub fn new(mesh: &MacroMesh, a: usize, b: usize, c: usize, d: usize) -> Result<Self> {
        let nodes = [a, b, c, d];
        if nodes.iter().any(|&n| n >= mesh.node_count()) {
            return Err(Error::InvalidArgument(format!(
                "probe nodes {nodes:?} outside mesh"
            )));
        }
        let ij = nodes.map(|n| mesh.node_ij(n));
        let same_row = ij.iter().all(|p| p.1 == ij[0].1);
        let ordered = ij.windows(2).all(|w| w[0].0 < w[1].0);
        if !same_row || !ordered {
            return Err(Error::InvalidArgument(format!(
                "probes must lie on one row with x_A < x_B < x_C < x_D, got {ij:?}"
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Probes on the line `y = center.y`: A and D at `x ∓ r_out`, B and C at
    /// `x ∓ r_in`.
    pub fn centerline(mesh: &MacroMesh, center: [f64; 2], r_in: f64, r_out: f64) -> Result<Self> {
        let [x, y] = center;
        Self::on_row(mesh, y, [x - r_out, x - r_in, x + r_in, x + r_out])
    }

    /// Probes at the given `x` positions on the line `y`, each snapped down
    /// to the nearest node.
    pub fn on_row(mesh: &MacroMesh, y: f64, xs: [f64; 4]) -> Result<Self> {
        let col = |x: f64| -> Result<usize> {
            let i = (x / mesh.h + 1e-9).floor();
            if !(0.0..=mesh.nx as f64).contains(&i) {
                return Err(Error::InvalidArgument(format!(
                    "probe x = {x} outside mesh"
                )));
            }
            Ok(i as usize)
        };
        let j = (y / mesh.h + 1e-9).floor();
        if !(0.0..=mesh.ny as f64).contains(&j) {
            return Err(Error::InvalidArgument(format!(
                "probe row y = {y} outside mesh"
            )));
        }
        let j = j as usize;
        let [a, b, c, d] = xs.map(|x| col(x).map(|i| mesh.node(i, j)));
        Self::new(mesh, a?, b?, c?, d?)
    }
}
