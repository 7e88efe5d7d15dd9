//! Effective conductivity of pixelated periodic unit cells.
//!
//! Each pixel is a unit bilinear element, solid pixels conduct with κ = 1
//! and void pixels with [`KAPPA_FLOOR`]. The two cell problems (unit
//! macroscopic gradients along x and y) are solved with periodic node
//! coupling and one pinned node.

use std::fmt;
use std::io::{BufRead, Write};

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::fe::{gauss_points, gradient_matrix, DirectionalStiffness};
use crate::mesh::{OrthotropicConductivity, KAPPA_FLOOR};

/// Default cell resolution.
pub const CELL_PIXELS: usize = 50;

/// Off-diagonal magnitude above which a cell is not treated as orthotropic.
pub const ORTHOTROPY_TOLERANCE: f64 = 1e-6;

/// Square binary microstructure. `grid[j * n + i]` is pixel column `i`,
/// row `j` (row 0 at the bottom); `true` is solid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PixelCell {
    n: usize,
    grid: Vec<bool>,
}

impl fmt::Debug for PixelCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "PixelCell {}x{} (vf {:.4})",
            self.n,
            self.n,
            self.volume_fraction()
        )?;
        for j in (0..self.n).rev() {
            let row: String = (0..self.n)
                .map(|i| if self.get(i, j) { '#' } else { '.' })
                .collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

impl PixelCell {
    pub fn new(n: usize, grid: Vec<bool>) -> Result<Self> {
        if n == 0 || grid.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "pixel grid of length {} is not {n}x{n}",
                grid.len()
            )));
        }
        Ok(Self { n, grid })
    }

    pub fn from_fn(n: usize, mut solid: impl FnMut(usize, usize) -> bool) -> Self {
        let mut grid = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                grid.push(solid(i, j));
            }
        }
        Self { n, grid }
    }

    pub fn solid(n: usize) -> Self {
        Self::from_fn(n, |_, _| true)
    }

    pub fn void(n: usize) -> Self {
        Self::from_fn(n, |_, _| false)
    }

    /// Cell with a centered circular hole covering `fraction` of the area;
    /// a pixel is void when its center lies inside the circle.
    pub fn circular_hole(n: usize, fraction: f64) -> Self {
        let r = n as f64 * (fraction / std::f64::consts::PI).sqrt();
        let c = n as f64 / 2.0;
        Self::from_fn(n, |i, j| {
            let dx = i as f64 + 0.5 - c;
            let dy = j as f64 + 0.5 - c;
            dx * dx + dy * dy > r * r
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.grid[j * self.n + i]
    }

    pub fn pixels(&self) -> &[bool] {
        &self.grid
    }

    pub fn solid_count(&self) -> usize {
        self.grid.iter().filter(|&&s| s).count()
    }

    pub fn volume_fraction(&self) -> f64 {
        self.solid_count() as f64 / (self.n * self.n) as f64
    }

    /// Clockwise quarter turn: the new x axis is the old y axis.
    pub fn rotated(&self) -> Self {
        let n = self.n;
        Self::from_fn(n, |i, j| self.get(n - 1 - j, i))
    }

    /// Packs the grid row by row, least significant bit first.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; (self.grid.len() + 7) / 8];
        for (k, &s) in self.grid.iter().enumerate() {
            if s {
                out[k / 8] |= 1 << (k % 8);
            }
        }
        out
    }

    pub fn from_packed(n: usize, bytes: &[u8]) -> Result<Self> {
        let len = n * n;
        if bytes.len() != (len + 7) / 8 {
            return Err(Error::InvalidArgument(format!(
                "packed cell has {} bytes, expected {}",
                bytes.len(),
                (len + 7) / 8
            )));
        }
        let grid = (0..len)
            .map(|k| bytes[k / 8] & (1 << (k % 8)) != 0)
            .collect();
        Self::new(n, grid)
    }

    /// Plain (ASCII) PGM, solid = 255, top row first.
    pub fn write_pgm(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "P2\n{} {}\n255", self.n, self.n)?;
        for j in (0..self.n).rev() {
            let row: Vec<&str> = (0..self.n)
                .map(|i| if self.get(i, j) { "255" } else { "0" })
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    /// Reads a plain (P2) square PGM; pixels at or above half the maximum
    /// gray value are solid.
    pub fn read_pgm(r: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("reading PGM", e))?;
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(str::to_owned));
        }
        let bad = |m: &str| Error::InvalidArgument(format!("malformed PGM: {m}"));
        let mut it = tokens.into_iter();
        if it.next().as_deref() != Some("P2") {
            return Err(bad("expected P2 magic"));
        }
        let mut num = |what: &str| -> Result<usize> {
            it.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(what))
        };
        let width = num("width")?;
        let height = num("height")?;
        let max = num("max value")?;
        if width != height || width == 0 {
            return Err(bad("cell must be square"));
        }
        let n = width;
        let mut grid = vec![false; n * n];
        for row in 0..n {
            let j = n - 1 - row;
            for i in 0..n {
                let v = num("pixel")?;
                grid[j * n + i] = 2 * v >= max.max(1);
            }
        }
        Self::new(n, grid)
    }
}

/// Folded position along a periodic axis: 0, n−1, 1, n−2, … become
/// 0, 1, 2, 3, … so periodic neighbours are at most two positions apart.
#[inline]
fn fold(k: usize, n: usize) -> usize {
    if 2 * k < n {
        2 * k
    } else {
        2 * (n - 1 - k) + 1
    }
}

/// Periodic node numbering of an `n × n` cell with node (0, 0) pinned.
struct PeriodicDofs {
    n: usize,
}

impl PeriodicDofs {
    /// Equation index of periodic node `(a, b)`, `None` for the pinned node.
    #[inline]
    fn equation(&self, a: usize, b: usize) -> Option<usize> {
        let idx = fold(b, self.n) * self.n + fold(a, self.n);
        idx.checked_sub(1)
    }

    fn count(&self) -> usize {
        self.n * self.n - 1
    }

    fn element_nodes(&self, i: usize, j: usize) -> [(usize, usize); 4] {
        let n = self.n;
        let i1 = (i + 1) % n;
        let j1 = (j + 1) % n;
        [(i, j), (i1, j), (i1, j1), (i, j1)]
    }
}

/// Periodic fluctuation fields of the two unit-gradient cell problems, one
/// value per periodic node `(a, b)` stored at `b * n + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub n: usize,
    pub fluctuations: [Vec<f64>; 2],
}

impl CellSolution {
    #[inline]
    pub fn value(&self, loading: usize, a: usize, b: usize) -> f64 {
        self.fluctuations[loading][b * self.n + a]
    }
}

/// Full 2×2 effective conductivity tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTensor(pub [[f64; 2]; 2]);

impl EffectiveTensor {
    pub fn k11(&self) -> f64 {
        self.0[0][0]
    }

    pub fn k22(&self) -> f64 {
        self.0[1][1]
    }

    pub fn off_diagonal(&self) -> f64 {
        0.5 * (self.0[0][1] + self.0[1][0])
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let [[a, b], [c, d]] = self.0;
        let m = 0.5 * (a + d);
        let off = 0.5 * (b + c);
        let r = (0.25 * (a - d) * (a - d) + off * off).sqrt();
        (m - r, m + r)
    }

    pub fn to_orthotropic(&self) -> Result<OrthotropicConductivity> {
        let off = self.off_diagonal();
        if off.abs() > ORTHOTROPY_TOLERANCE {
            return Err(Error::SymmetryViolation {
                off_diagonal: off,
                params: None,
            });
        }
        Ok(OrthotropicConductivity::new(self.k11(), self.k22()))
    }
}

/// Per-pixel conductivity contributions shared by every cell.
struct PixelOperators {
    stiffness: DirectionalStiffness,
    /// `∫ ∂N/∂x` and `∫ ∂N/∂y` over a unit pixel.
    grad_integral: [[f64; 4]; 2],
}

impl PixelOperators {
    fn new() -> Self {
        let mut grad_integral = [[0.0; 4]; 2];
        for (xi, eta, w) in gauss_points(1.0) {
            let b = gradient_matrix(xi, eta, 1.0);
            for d in 0..2 {
                for a in 0..4 {
                    grad_integral[d][a] += w * b[d][a];
                }
            }
        }
        Self {
            stiffness: DirectionalStiffness::new(1.0),
            grad_integral,
        }
    }
}

#[inline]
fn pixel_kappa(solid: bool) -> f64 {
    if solid {
        1.0
    } else {
        KAPPA_FLOOR
    }
}

pub fn solve_cell_problems(cell: &PixelCell) -> Result<CellSolution> {
    let n = cell.n;
    let dofs = PeriodicDofs { n };
    let ops = PixelOperators::new();
    let size = dofs.count();
    let mut fluctuations = [vec![0.0; n * n], vec![0.0; n * n]];
    if size == 0 {
        return Ok(CellSolution { n, fluctuations });
    }

    let mut k = BandMatrix::zeros(size, 2 * n + 2);
    let mut rhs = [vec![0.0; size], vec![0.0; size]];
    for j in 0..n {
        for i in 0..n {
            let kappa = pixel_kappa(cell.get(i, j));
            let nodes = dofs.element_nodes(i, j);
            let eqs = nodes.map(|(a, b)| dofs.equation(a, b));
            for p in 0..4 {
                let Some(ep) = eqs[p] else { continue };
                for d in 0..2 {
                    rhs[d][ep] += kappa * ops.grad_integral[d][p];
                }
                for q in 0..4 {
                    if let Some(eq) = eqs[q] {
                        if eq <= ep {
                            let v = kappa * (ops.stiffness.kx[p][q] + ops.stiffness.ky[p][q]);
                            k.add(ep, eq, v);
                        }
                    }
                }
            }
        }
    }
    let factor = k.factor()?;
    for d in 0..2 {
        factor.solve_in_place(&mut rhs[d]);
        for b in 0..n {
            for a in 0..n {
                if let Some(e) = dofs.equation(a, b) {
                    fluctuations[d][b * n + a] = rhs[d][e];
                }
            }
        }
    }
    Ok(CellSolution { n, fluctuations })
}

/// Volume-averaged energy of the corrected unit gradients.
pub fn effective_tensor(cell: &PixelCell, solution: &CellSolution) -> EffectiveTensor {
    let n = cell.n;
    let dofs = PeriodicDofs { n };
    let ops = PixelOperators::new();
    let (kx, ky) = (&ops.stiffness.kx, &ops.stiffness.ky);
    let gi = &ops.grad_integral;
    let mut acc = [[0.0; 2]; 2];
    for j in 0..n {
        for i in 0..n {
            let kappa = pixel_kappa(cell.get(i, j));
            let nodes = dofs.element_nodes(i, j);
            let chi: [[f64; 4]; 2] =
                [0, 1].map(|d| nodes.map(|(a, b)| solution.fluctuations[d][b * n + a]));
            // ∫ ∂χ/∂x_d over the pixel for each loading
            let mean_grad =
                |d: usize, l: usize| -> f64 { (0..4).map(|p| gi[d][p] * chi[l][p]).sum() };
            let energy = |l: usize, m: usize| -> f64 {
                let mut s = 0.0;
                for p in 0..4 {
                    for q in 0..4 {
                        s += chi[l][p] * (kx[p][q] + ky[p][q]) * chi[m][q];
                    }
                }
                s
            };
            for l in 0..2 {
                for m in 0..2 {
                    let direct = if l == m { 1.0 } else { 0.0 };
                    acc[l][m] +=
                        kappa * (direct - mean_grad(l, m) - mean_grad(m, l) + energy(l, m));
                }
            }
        }
    }
    let area = (n * n) as f64;
    EffectiveTensor(acc.map(|row| row.map(|v| v / area)))
}

pub fn homogenize(cell: &PixelCell) -> Result<EffectiveTensor> {
    let solution = solve_cell_problems(cell)?;
    Ok(effective_tensor(cell, &solution))
}

/// Homogenizes and checks orthotropy.
pub fn homogenize_orthotropic(cell: &PixelCell) -> Result<OrthotropicConductivity> {
    homogenize(cell)?.to_orthotropic()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laminate(n: usize, t2: usize) -> PixelCell {
        PixelCell::from_fn(n, |_, j| j < t2 || j >= n - t2)
    }

    #[test]
    fn fold_is_a_permutation_with_short_hops() {
        for n in [1, 2, 3, 7, 50] {
            let mut seen = vec![false; n];
            for k in 0..n {
                assert!(!std::mem::replace(&mut seen[fold(k, n)], true));
                let next = fold((k + 1) % n, n);
                assert!(fold(k, n).abs_diff(next) <= 2);
            }
        }
    }

    #[test]
    fn solid_cell_is_identity() {
        let cell = PixelCell::solid(20);
        let sol = solve_cell_problems(&cell).unwrap();
        for d in 0..2 {
            assert!(sol.fluctuations[d].iter().all(|v| v.abs() < 1e-12));
        }
        let k = effective_tensor(&cell, &sol);
        assert!((k.k11() - 1.0).abs() < 1e-12 && (k.k22() - 1.0).abs() < 1e-12);
        assert!(k.off_diagonal().abs() < 1e-14);
    }

    #[test]
    fn void_cell_is_floor() {
        let k = homogenize(&PixelCell::void(10)).unwrap();
        assert!((k.k11() - KAPPA_FLOOR).abs() < 1e-15);
        assert!((k.k22() - KAPPA_FLOOR).abs() < 1e-15);
    }

    #[test]
    fn laminate_matches_voigt_and_reuss() {
        let n = 20;
        let cell = laminate(n, 4);
        let vf = cell.volume_fraction();
        let sol = solve_cell_problems(&cell).unwrap();
        // gradient parallel to the layers needs no correction
        assert!(sol.fluctuations[0].iter().all(|v| v.abs() < 1e-10));
        let k = effective_tensor(&cell, &sol);
        let voigt = vf + (1.0 - vf) * KAPPA_FLOOR;
        let reuss = 1.0 / (vf + (1.0 - vf) / KAPPA_FLOOR);
        assert!((k.k11() - voigt).abs() < 1e-10);
        assert!((k.k22() - reuss).abs() < 1e-12);
    }

    #[test]
    fn anchor_node_is_zero() {
        let cell = PixelCell::circular_hole(12, 0.3);
        let sol = solve_cell_problems(&cell).unwrap();
        assert_eq!(sol.value(0, 0, 0), 0.0);
        assert_eq!(sol.value(1, 0, 0), 0.0);
    }

    #[test]
    fn orthotropy_check_rejects_sheared_cell() {
        // A single diagonal band is anisotropic with a large off-diagonal term.
        let n = 16;
        let cell = PixelCell::from_fn(n, |i, j| i.abs_diff(j) < 3);
        let k = homogenize(&cell).unwrap();
        assert!(k.off_diagonal().abs() > ORTHOTROPY_TOLERANCE);
        assert!(matches!(
            k.to_orthotropic(),
            Err(Error::SymmetryViolation { .. })
        ));
    }

    #[test]
    fn rotation_swaps_components() {
        let cell = PixelCell::from_fn(16, |i, j| (i < 3) || (j % 5 == 0) || i == j);
        let k = homogenize(&cell).unwrap();
        let r = homogenize(&cell.rotated()).unwrap();
        assert!((k.k11() - r.k22()).abs() < 1e-9);
        assert!((k.k22() - r.k11()).abs() < 1e-9);
    }

    #[test]
    fn packed_round_trip() {
        let cell = PixelCell::circular_hole(13, 0.4);
        let back = PixelCell::from_packed(13, &cell.to_packed()).unwrap();
        assert_eq!(cell, back);
    }

    #[test]
    fn pgm_round_trip() {
        let cell = PixelCell::from_fn(7, |i, j| i > j);
        let mut buf = Vec::new();
        cell.write_pgm(&mut buf).unwrap();
        let back = PixelCell::read_pgm(&buf[..]).unwrap();
        assert_eq!(cell, back);
        assert!(PixelCell::read_pgm(&b"P2\n3 2\n255\n"[..]).is_err());
    }
}
