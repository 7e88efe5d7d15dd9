//! Database substitution of an optimized design and the assembled
//! heterostructure.

use std::io::Write;

use rayon::prelude::*;

use crate::database::RveDatabase;
use crate::design::{DesignField, MacroModel};
use crate::error::{Error, Result};
use crate::homogenization::PixelCell;
use crate::mesh::{OrthotropicConductivity, KAPPA_FLOOR};
use crate::objectives::{Forward, ObjectiveSpec, ObjectiveValues};

/// Nearest-record substitution of every design element.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyResult {
    /// Database record index per design element.
    pub records: Vec<usize>,
    /// L1 distance between optimized and substituted pairs.
    pub distances: Vec<f64>,
    pub optimized: Vec<OrthotropicConductivity>,
    pub substituted: Vec<OrthotropicConductivity>,
    pub mse: f64,
    pub r2: f64,
}

impl AssemblyResult {
    pub fn substituted_design(&self, template: &DesignField) -> DesignField {
        DesignField::new(self.substituted.clone(), template.lower, template.upper)
    }

    /// `element,opt_k11,opt_k22,sub_k11,sub_k22,l1` rows keyed by global
    /// element index.
    pub fn write_scatter_csv(
        &self,
        model: &MacroModel,
        mut w: impl Write,
        header: &[String],
    ) -> std::io::Result<()> {
        for l in header {
            writeln!(w, "# {l}")?;
        }
        writeln!(w, "element,opt_k11,opt_k22,sub_k11,sub_k22,l1")?;
        for (i, &e) in model.design.as_slice().iter().enumerate() {
            let (o, s) = (self.optimized[i], self.substituted[i]);
            writeln!(
                w,
                "{e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                o.k11, o.k22, s.k11, s.k22, self.distances[i]
            )?;
        }
        Ok(())
    }
}

/// Mean squared error and coefficient of determination of stacked
/// `(k11, k22)` pairs; the mean in `R²` is taken per component.
pub fn substitution_metrics(
    optimized: &[OrthotropicConductivity],
    substituted: &[OrthotropicConductivity],
) -> Result<(f64, f64)> {
    if optimized.is_empty() {
        return Err(Error::Empty("design set"));
    }
    if optimized.len() != substituted.len() {
        return Err(Error::InvalidArgument(
            "substitution length mismatch".into(),
        ));
    }
    let n = optimized.len() as f64;
    let mean = optimized
        .iter()
        .fold([0.0, 0.0], |m, k| [m[0] + k.k11, m[1] + k.k22]);
    let mean = [mean[0] / n, mean[1] / n];
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (o, s) in optimized.iter().zip(substituted) {
        ss_res += (o.k11 - s.k11).powi(2) + (o.k22 - s.k22).powi(2);
        ss_tot += (o.k11 - mean[0]).powi(2) + (o.k22 - mean[1]).powi(2);
    }
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    Ok((ss_res / n, r2))
}

pub fn substitute(design: &DesignField, db: &RveDatabase) -> Result<AssemblyResult> {
    if design.is_empty() {
        return Err(Error::Empty("design set"));
    }
    let matches: Vec<(usize, f64, OrthotropicConductivity)> = design
        .values
        .par_iter()
        .map(|k| {
            db.nearest(k.k11, k.k22)
                .map(|(rec, d)| (rec.index, d, rec.conductivity()))
        })
        .collect::<Result<_>>()?;
    let substituted: Vec<_> = matches.iter().map(|m| m.2).collect();
    let (mse, r2) = substitution_metrics(&design.values, &substituted)?;
    Ok(AssemblyResult {
        records: matches.iter().map(|m| m.0).collect(),
        distances: matches.iter().map(|m| m.1).collect(),
        optimized: design.values.clone(),
        substituted,
        mse,
        r2,
    })
}

/// Objective values of the model with substituted conductivities.
pub fn verify_assembled(
    model: &MacroModel,
    assembly: &AssemblyResult,
    objective: &ObjectiveSpec,
) -> Result<ObjectiveValues> {
    let design = DesignField::new(
        assembly.substituted.clone(),
        f64::NEG_INFINITY,
        f64::INFINITY,
    );
    let fwd = Forward::solve(model, &design)?;
    objective.values(&fwd)
}

/// Cell used for non-design elements whose base conductivity is `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundCell {
    pub kappa: OrthotropicConductivity,
    pub cell: PixelCell,
}

/// Binary image, row 0 at the top; `true` is solid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl Raster {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn solid_fraction(&self) -> f64 {
        self.pixels.iter().filter(|&&p| p).count() as f64 / self.pixels.len() as f64
    }

    /// Binary PGM (P5), solid white, with optional comment lines.
    pub fn write_pgm(&self, mut w: impl Write, header: &[String]) -> std::io::Result<()> {
        writeln!(w, "P5")?;
        for l in header {
            writeln!(w, "# {}", l.replace('\n', " "))?;
        }
        write!(w, "{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|&p| if p { 255 } else { 0 })
            .collect();
        w.write_all(&bytes)
    }
}

/// Tiles one cell per element: substituted cells in the design domain,
/// void cells where the base conductivity is at the floor, `background`
/// where it matches, and the nearest record otherwise.
pub fn rasterize(
    model: &MacroModel,
    assembly: &AssemblyResult,
    db: &RveDatabase,
    background: &BackgroundCell,
) -> Result<Raster> {
    let n = db.cell_size();
    if background.cell.size() != n {
        return Err(Error::InvalidArgument(format!(
            "background cell is {}x{}, database cells are {n}x{n}",
            background.cell.size(),
            background.cell.size()
        )));
    }
    if assembly.records.len() != model.design_len() {
        return Err(Error::InvalidArgument(
            "assembly does not match design domain".into(),
        ));
    }
    let mesh = &model.mesh;
    let void = PixelCell::void(n);
    let mut cells: Vec<&PixelCell> = Vec::with_capacity(mesh.element_count());
    let mut design_pos = 0;
    for e in 0..mesh.element_count() {
        let cell = if model.design.as_slice().get(design_pos) == Some(&e) {
            let idx = assembly.records[design_pos];
            design_pos += 1;
            &db.get(idx).ok_or(Error::MissingGeometry(idx))?.cell
        } else {
            let k = model.base[e];
            if k.k11 <= KAPPA_FLOOR && k.k22 <= KAPPA_FLOOR {
                &void
            } else if k == background.kappa {
                &background.cell
            } else {
                &db.nearest(k.k11, k.k22)?.0.cell
            }
        };
        cells.push(cell);
    }

    let width = mesh.nx * n;
    let height = mesh.ny * n;
    let mut pixels = vec![false; width * height];
    for (e, cell) in cells.iter().enumerate() {
        let (ex, ey) = mesh.element_ij(e);
        for j in 0..n {
            let y = height - 1 - (ey * n + j);
            let row = &mut pixels[y * width + ex * n..y * width + (ex + 1) * n];
            for (i, px) in row.iter_mut().enumerate() {
                *px = cell.get(i, j);
            }
        }
    }
    Ok(Raster {
        width,
        height,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::database::{RveDatabase, RveParams, RveRecord};
    use crate::mesh::{BoundaryConditions, MacroMesh};
    use crate::regions::ElementSet;

    fn tiny_db() -> RveDatabase {
        let n = 4;
        let rec = |index, k11, k22, cell: PixelCell| RveRecord {
            index,
            params: RveParams::new(index, 0, 0),
            vf: cell.volume_fraction(),
            cell,
            k11,
            k22,
        };
        RveDatabase::from_records(
            n,
            3,
            vec![
                rec(0, 1.0, 1.0, PixelCell::solid(n)),
                rec(1, 0.5, 0.25, PixelCell::from_fn(n, |i, _| i < 2)),
                rec(2, 0.1, 0.1, PixelCell::from_fn(n, |i, j| i == 0 || j == 0)),
            ],
        )
    }

    #[test]
    fn exact_records_give_perfect_metrics() {
        let db = tiny_db();
        let design = DesignField::new(
            vec![
                OrthotropicConductivity::new(0.5, 0.25),
                OrthotropicConductivity::new(1.0, 1.0),
            ],
            1e-9,
            1.0,
        );
        let res = substitute(&design, &db).unwrap();
        assert_eq!(res.records, vec![1, 0]);
        assert_eq!(res.mse, 0.0);
        assert_eq!(res.r2, 1.0);
    }

    #[test]
    fn metrics_by_hand() {
        let opt = [
            OrthotropicConductivity::new(0.0, 0.0),
            OrthotropicConductivity::new(1.0, 1.0),
        ];
        let sub = [
            OrthotropicConductivity::new(0.1, 0.0),
            OrthotropicConductivity::new(1.0, 0.9),
        ];
        let (mse, r2) = substitution_metrics(&opt, &sub).unwrap();
        assert!((mse - 0.01).abs() < 1e-15);
        // ss_tot = 4 · 0.25
        assert!((r2 - (1.0 - 0.02)).abs() < 1e-15);
        assert!(substitution_metrics(&[], &[]).is_err());
    }

    #[test]
    fn raster_layout() {
        let db = tiny_db();
        let mesh = MacroMesh::unit(2, 1);
        let bc = BoundaryConditions::left_right(&mesh, 1.0, 0.0);
        let base = vec![OrthotropicConductivity::isotropic(0.3); 2];
        let model = MacroModel::new(
            mesh,
            bc,
            base,
            ElementSet::new(&MacroMesh::unit(2, 1), vec![1]).unwrap(),
        )
        .unwrap();
        let design = DesignField::new(vec![OrthotropicConductivity::new(0.5, 0.25)], 0.0, 1.0);
        let asm = substitute(&design, &db).unwrap();
        let bg = BackgroundCell {
            kappa: OrthotropicConductivity::isotropic(0.3),
            cell: PixelCell::solid(4),
        };
        let r = rasterize(&model, &asm, &db, &bg).unwrap();
        assert_eq!((r.width, r.height), (8, 4));
        for y in 0..4 {
            for x in 0..4 {
                assert!(r.get(x, y));
            }
            // record 1: solid columns 0 and 1 of the second element
            assert!(r.get(4, y) && r.get(5, y) && !r.get(6, y) && !r.get(7, y));
        }
        let mut buf = Vec::new();
        r.write_pgm(&mut buf, &[]).unwrap();
        assert_eq!(buf.len(), "P5\n8 4\n255\n".len() + 32);
    }
}
