//! Plain-text exports: CSV tables and legacy VTK.
//!
//! Every writer takes optional comment lines emitted first as `# ...`.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::design::{DesignField, MacroModel};
use crate::error::{Error, Result};
use crate::fe::{HeatFluxField, TemperatureField};
use crate::mesh::{MacroMesh, OrthotropicConductivity};
use crate::optimizer::IterationRecord;

fn comments(w: &mut impl Write, lines: &[String]) -> std::io::Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

pub fn write_history_csv(
    mut w: impl Write,
    header: &[String],
    history: &[IterationRecord],
) -> std::io::Result<()> {
    comments(&mut w, header)?;
    writeln!(w, "iteration,objective,cloak,index,rotator,max_change,step")?;
    for r in history {
        writeln!(
            w,
            "{},{:.12e},{},{},{},{:.6e},{:.6e}",
            r.iteration,
            r.values.total,
            opt(r.values.cloak),
            opt(r.values.index),
            opt(r.values.rotator),
            r.max_change,
            r.step
        )?;
    }
    Ok(())
}

/// `element,k11,k22` keyed by global element index; values round-trip
/// exactly.
pub fn write_design_csv(
    mut w: impl Write,
    header: &[String],
    model: &MacroModel,
    design: &DesignField,
) -> std::io::Result<()> {
    comments(&mut w, header)?;
    writeln!(w, "element,k11,k22")?;
    for (&e, k) in model.design.as_slice().iter().zip(&design.values) {
        writeln!(w, "{e},{:e},{:e}", k.k11, k.k22)?;
    }
    Ok(())
}

/// Reads a design CSV; rows must list exactly the model's design elements.
pub fn read_design_csv(path: &Path, model: &MacroModel) -> Result<DesignField> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut values = Vec::with_capacity(model.design_len());
    let mut seen_header = false;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != "element,k11,k22" {
                return Err(parse_err(
                    i + 1,
                    format!("expected header element,k11,k22, got '{line}'"),
                ));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                i + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let e: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad element '{}'", fields[0])))?;
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| parse_err(i + 1, format!("bad number '{s}'")))
        };
        let expected = model.design.as_slice().get(values.len());
        if expected != Some(&e) {
            return Err(parse_err(
                i + 1,
                format!("element {e} does not match design element {expected:?}"),
            ));
        }
        values.push(OrthotropicConductivity::new(
            num(fields[1])?,
            num(fields[2])?,
        ));
    }
    if values.len() != model.design_len() {
        return Err(Error::InvalidArgument(format!(
            "{} lists {} design elements, model has {}",
            path.display(),
            values.len(),
            model.design_len()
        )));
    }
    let template = model.initial_design();
    Ok(DesignField::new(values, template.lower, template.upper))
}

pub fn write_gradient_csv(
    mut w: impl Write,
    header: &[String],
    model: &MacroModel,
    gradient: &[[f64; 2]],
) -> std::io::Result<()> {
    comments(&mut w, header)?;
    writeln!(w, "element,dJ_dk11,dJ_dk22")?;
    for (&e, g) in model.design.as_slice().iter().zip(gradient) {
        writeln!(w, "{e},{:.12e},{:.12e}", g[0], g[1])?;
    }
    Ok(())
}

/// Element-centroid flux, `ex,ey,fx,fy`.
pub fn write_flux_csv(
    mut w: impl Write,
    header: &[String],
    mesh: &MacroMesh,
    flux: &HeatFluxField,
) -> std::io::Result<()> {
    comments(&mut w, header)?;
    writeln!(w, "ex,ey,fx,fy")?;
    for (e, f) in flux.values.iter().enumerate() {
        let (ex, ey) = mesh.element_ij(e);
        writeln!(w, "{ex},{ey},{:.12e},{:.12e}", f[0], f[1])?;
    }
    Ok(())
}

/// Nodal temperatures, `i,j,x,y,T`, ready for contouring.
pub fn write_nodal_csv(
    mut w: impl Write,
    header: &[String],
    mesh: &MacroMesh,
    t: &TemperatureField,
) -> std::io::Result<()> {
    comments(&mut w, header)?;
    writeln!(w, "i,j,x,y,T")?;
    for (n, v) in t.values.iter().enumerate() {
        let (i, j) = mesh.node_ij(n);
        let (x, y) = mesh.node_coords(n);
        writeln!(w, "{i},{j},{x},{y},{v:.12e}")?;
    }
    Ok(())
}

/// Legacy VTK structured points with nodal temperature and cell
/// conductivities.
pub fn write_vtk(
    mut w: impl Write,
    title: &str,
    mesh: &MacroMesh,
    t: &TemperatureField,
    field: &[OrthotropicConductivity],
) -> std::io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.replace('\n', " "))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", mesh.nx + 1, mesh.ny + 1)?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {} {} 1", mesh.h, mesh.h)?;
    writeln!(w, "POINT_DATA {}", mesh.node_count())?;
    writeln!(w, "SCALARS temperature double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in &t.values {
        writeln!(w, "{v:.12e}")?;
    }
    writeln!(w, "CELL_DATA {}", mesh.element_count())?;
    for (name, get) in [
        (
            "k11",
            (|k: &OrthotropicConductivity| k.k11) as fn(&OrthotropicConductivity) -> f64,
        ),
        ("k22", |k: &OrthotropicConductivity| k.k22),
    ] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for k in field {
            writeln!(w, "{:.12e}", get(k))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryConditions;
    use crate::regions::ElementSet;

    fn model() -> MacroModel {
        let mesh = MacroMesh::unit(3, 2);
        let bc = BoundaryConditions::left_right(&mesh, 1.0, 0.0);
        let base = vec![OrthotropicConductivity::isotropic(0.5); 6];
        let design = ElementSet::new(&mesh, vec![1, 4]).unwrap();
        MacroModel::new(mesh, bc, base, design).unwrap()
    }

    #[test]
    fn design_csv_round_trip() {
        let m = model();
        let d = DesignField::new(
            vec![
                OrthotropicConductivity::new(0.1, 0.2),
                OrthotropicConductivity::new(1.0 / 3.0, 0.9),
            ],
            1e-9,
            1.0,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("design.csv");
        let mut buf = Vec::new();
        write_design_csv(&mut buf, &["config abc".into()], &m, &d).unwrap();
        std::fs::write(&path, &buf).unwrap();
        let back = read_design_csv(&path, &m).unwrap();
        assert_eq!(back.values, d.values);

        std::fs::write(&path, "element,k11,k22\n1,0.1,0.2\n3,0.5,0.5\n").unwrap();
        let err = read_design_csv(&path, &m).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }

    #[test]
    fn vtk_header_counts() {
        let m = model();
        let t = TemperatureField {
            values: vec![0.0; m.mesh.node_count()],
        };
        let mut buf = Vec::new();
        write_vtk(&mut buf, "t", &m.mesh, &t, &m.base).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("DIMENSIONS 4 3 1"));
        assert!(s.contains("POINT_DATA 12"));
        assert!(s.contains("CELL_DATA 6"));
    }
}
