//! Subcommand implementations.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thermeta::objectives::{finite_difference_check, relative_error};
use thermeta::output::{
    read_design_csv, write_design_csv, write_flux_csv, write_gradient_csv, write_history_csv,
    write_nodal_csv, write_vtk,
};
use thermeta::{
    boundary_flux_balance, build_database, optimize, rasterize, substitute, verify_assembled,
    BackgroundCell, DesignField, Forward, MacroModel, ObjectiveSpec, ObjectiveValues,
    OrthotropicConductivity, Raster, RveDatabase, Termination,
};

use crate::config::Resolved;

/// Gradient checks fail above this relative error.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> anyhow::Result<()> {
    let mut w = create(path)?;
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_with(path, |w| writeln!(w, "{text}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

/// Objective value plus the raw functionality measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Values {
    pub objective: f64,
    pub cloak: Option<f64>,
    pub index: Option<f64>,
    pub rotator: Option<f64>,
}

impl From<&ObjectiveValues> for Values {
    fn from(v: &ObjectiveValues) -> Self {
        Self {
            objective: v.total,
            cloak: v.cloak,
            index: v.index,
            rotator: v.rotator,
        }
    }
}

/// Physical checks of one forward solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub values: Values,
    pub temperature_min: f64,
    pub temperature_max: f64,
    pub heat_in: f64,
    pub heat_out: f64,
    pub cloak_max_deviation: Option<f64>,
    pub reversed_elements: Option<usize>,
    pub target_elements: Option<usize>,
}

impl FieldReport {
    pub fn new(
        model: &MacroModel,
        objective: &ObjectiveSpec,
        fwd: &Forward,
    ) -> anyhow::Result<Self> {
        let t = &fwd.state.temperature;
        let (heat_in, heat_out) = boundary_flux_balance(&model.mesh, &fwd.field, t, &model.bc)?;
        let rot = objective.rotator_term();
        Ok(Self {
            values: (&objective.values(fwd)?).into(),
            temperature_min: t.values.iter().copied().fold(f64::INFINITY, f64::min),
            temperature_max: t.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            heat_in,
            heat_out,
            cloak_max_deviation: objective.cloak_term().map(|c| c.max_deviation(fwd)),
            reversed_elements: rot.map(|r| r.reversed_count(fwd)),
            target_elements: rot.map(|r| r.target.len()),
        })
    }

    fn print(&self, label: &str) {
        let v = &self.values;
        println!("{label} objective: {:.6e}", v.objective);
        if let Some(c) = v.cloak {
            println!("{label} cloak: {c:.6e}");
        }
        if let Some(j) = v.index {
            println!("{label} index: {j:.6}");
        }
        if let Some(r) = v.rotator {
            println!("{label} rotator: {r:.6e}");
        }
    }
}

fn write_fields(
    dir: &Path,
    header: &[String],
    model: &MacroModel,
    fwd: &Forward,
) -> anyhow::Result<()> {
    let t = &fwd.state.temperature;
    write_with(&dir.join("nodal.csv"), |w| {
        write_nodal_csv(w, header, &model.mesh, t)
    })?;
    write_with(&dir.join("flux.csv"), |w| {
        write_flux_csv(w, header, &model.mesh, &fwd.flux)
    })?;
    write_with(&dir.join("temperature.vtk"), |w| {
        write_vtk(w, &header.join("; "), &model.mesh, t, &fwd.field)
    })
}

pub fn db_build(n: usize, out: &Path) -> anyhow::Result<()> {
    let db = build_database(n)?;
    db.save(out)?;
    println!("{} generated, {} unique", db.generated(), db.len());
    let range = |f: fn(&thermeta::RveRecord) -> f64| {
        db.records()
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    for (name, (lo, hi)) in [
        ("k11", range(|r| r.k11)),
        ("k22", range(|r| r.k22)),
        ("vf", range(|r| r.vf)),
    ] {
        println!("{name}: min {lo:.6}, max {hi:.6}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn db_query(db_dir: &Path, k11: f64, k22: f64) -> anyhow::Result<()> {
    let db = RveDatabase::load(db_dir)?;
    let (rec, d) = db.nearest(k11, k22)?;
    println!("index,t1,t2,t3,k11,k22,vf,l1");
    println!(
        "{},{},{},{},{},{},{},{:.9e}",
        rec.index, rec.params.t1, rec.params.t2, rec.params.t3, rec.k11, rec.k22, rec.vf, d
    );
    Ok(())
}

pub fn solve(run: &Resolved, design: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let mut problem = run.problem()?;
    let initial = Forward::solve(&problem.model, &problem.initial)?;
    problem.objective.prepare(&initial)?;
    let field = match design {
        Some(p) => read_design_csv(p, &problem.model)?,
        None => problem.initial.clone(),
    };
    let fwd = Forward::solve(&problem.model, &field)?;
    let report = FieldReport::new(&problem.model, &problem.objective, &fwd)?;
    let header = run.header();
    write_fields(out, &header, &problem.model, &fwd)?;
    write_json(&out.join("solve.json"), &report)?;
    report.print("solution");
    println!(
        "temperature range: [{:.6}, {:.6}]",
        report.temperature_min, report.temperature_max
    );
    println!(
        "heat in {:.9e}, heat out {:.9e}",
        report.heat_in, report.heat_out
    );
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub run: String,
    pub objective: String,
    pub termination: String,
    pub iterations: usize,
    pub design_elements: usize,
    pub initial: FieldReport,
    #[serde(rename = "final")]
    pub last: FieldReport,
}

/// Returns `false` when the optimizer aborted on a solver failure.
pub fn optimize_cmd(run: &Resolved, out: &Path) -> anyhow::Result<bool> {
    let problem = run.problem()?;
    let result = optimize(&problem)?;
    let objective = result
        .objective
        .as_ref()
        .context("optimizer returned no objective")?;
    let model = &problem.model;
    let header = run.header();

    let first = Forward::solve(model, &problem.initial)?;
    let last = Forward::solve(model, &result.design)?;
    let summary = RunSummary {
        config_hash: run.hash(),
        run: run.label(),
        objective: objective.tag().into(),
        termination: result.termination.to_string(),
        iterations: result.history.len() - 1,
        design_elements: model.design_len(),
        initial: FieldReport::new(model, objective, &first)?,
        last: FieldReport::new(model, objective, &last)?,
    };

    write_with(&out.join("history.csv"), |w| {
        write_history_csv(w, &header, &result.history)
    })?;
    write_with(&out.join("design.csv"), |w| {
        write_design_csv(w, &header, model, &result.design)
    })?;
    for (it, d) in &result.checkpoints {
        let path = out.join("checkpoints").join(format!("design_{it:04}.csv"));
        write_with(&path, |w| write_design_csv(w, &header, model, d))?;
    }
    write_fields(out, &header, model, &last)?;
    write_json(&out.join("summary.json"), &summary)?;

    println!(
        "{}: {} after {} iterations",
        summary.run, summary.termination, summary.iterations
    );
    summary.initial.print("initial");
    summary.last.print("final");
    if let (Some(r), Some(n)) = (summary.last.reversed_elements, summary.last.target_elements) {
        println!("reversed target elements: {r}/{n}");
    }
    println!("wrote {}", out.display());
    Ok(!matches!(result.termination, Termination::Aborted { .. }))
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub probes: usize,
    pub seed: u64,
    pub step: f64,
}

/// Returns the maximum relative error over the sampled components.
pub fn check_grad(run: &Resolved, opts: GradCheckOptions, out: &Path) -> anyhow::Result<f64> {
    let problem = run.problem()?;
    let model = &problem.model;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let design = DesignField::new(
        (0..model.design_len())
            .map(|_| OrthotropicConductivity::new(rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)))
            .collect(),
        problem.initial.lower,
        problem.initial.upper,
    );
    let mut spec = problem.objective.clone();
    let fwd = Forward::solve(model, &design)?;
    spec.prepare(&fwd)?;
    let gradient = spec.gradient(model, &fwd)?;

    let count = opts.probes.min(design.len());
    if count == 0 {
        bail!("design domain is empty");
    }
    let positions = sample(&mut rng, design.len(), count).into_vec();
    let rows = finite_difference_check(model, &design, &spec, &positions, opts.step)?;
    let scale = rows.iter().fold(0.0f64, |m, r| m.max(r.2.abs()));
    let errors: Vec<f64> = rows
        .iter()
        .map(|&(_, _, adj, fd)| relative_error(adj, fd, 1e-3 * scale))
        .collect();
    let max_err = errors.iter().copied().fold(0.0, f64::max);

    let header = run.header();
    write_with(&out.join("gradient.csv"), |w| {
        write_gradient_csv(w, &header, model, &gradient)
    })?;
    write_with(&out.join("fd_check.csv"), |w| {
        for l in &header {
            writeln!(w, "# {l}")?;
        }
        writeln!(w, "element,component,adjoint,fd,rel_error")?;
        for (r, e) in rows.iter().zip(&errors) {
            let elem = model.design.as_slice()[r.0];
            let comp = if r.1 == 0 { "k11" } else { "k22" };
            writeln!(w, "{elem},{comp},{:.12e},{:.12e},{e:.6e}", r.2, r.3)?;
        }
        Ok(())
    })?;
    println!(
        "{} ({}x{} mesh, {} components): max relative error {max_err:.3e}",
        run.label(),
        run.setup.nx,
        run.setup.ny,
        rows.len()
    );
    Ok(max_err)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub config_hash: String,
    pub run: String,
    pub design_elements: usize,
    pub mse: f64,
    pub r2: f64,
    pub max_l1: f64,
    pub optimized: Values,
    pub assembled: Values,
    pub solid_fraction: f64,
    pub raster: [usize; 2],
}

pub fn assemble(
    run: &Resolved,
    design_path: &Path,
    db_dir: &Path,
    out: &Path,
) -> anyhow::Result<AssemblyReport> {
    if !db_dir.exists() {
        bail!("database {} does not exist", db_dir.display());
    }
    let db = RveDatabase::load(db_dir)?;
    let mut problem = run.problem()?;
    let model = &problem.model;
    let initial = Forward::solve(model, &problem.initial)?;
    problem.objective.prepare(&initial)?;
    let design = read_design_csv(design_path, model)?;
    let asm = substitute(&design, &db)?;

    let matrix = OrthotropicConductivity::isotropic(run.setup.matrix_kappa);
    let background = BackgroundCell {
        kappa: matrix,
        cell: db.nearest(matrix.k11, matrix.k22)?.0.cell.clone(),
    };
    let raster = rasterize(model, &asm, &db, &background)?;

    let optimized = problem.objective.values(&Forward::solve(model, &design)?)?;
    let assembled = verify_assembled(model, &asm, &problem.objective)?;
    let report = AssemblyReport {
        config_hash: run.hash(),
        run: run.label(),
        design_elements: model.design_len(),
        mse: asm.mse,
        r2: asm.r2,
        max_l1: asm.distances.iter().copied().fold(0.0, f64::max),
        optimized: (&optimized).into(),
        assembled: (&assembled).into(),
        solid_fraction: raster.solid_fraction(),
        raster: [raster.width, raster.height],
    };

    let header = run.header();
    write_with(&out.join("scatter.csv"), |w| {
        asm.write_scatter_csv(model, w, &header)
    })?;
    write_with(&out.join("assembly.pgm"), |w| raster.write_pgm(w, &header))?;
    write_png(&out.join("assembly.png"), &raster, &header)?;
    write_json(&out.join("assembly.json"), &report)?;

    println!("MSE: {:.6e}", report.mse);
    println!("R2: {:.6}", report.r2);
    println!("optimized objective: {:.6e}", report.optimized.objective);
    println!("assembled objective: {:.6e}", report.assembled.objective);
    println!(
        "raster {}x{}, solid fraction {:.4}",
        raster.width, raster.height, report.solid_fraction
    );
    println!("wrote {}", out.display());
    Ok(report)
}

fn write_png(path: &Path, raster: &Raster, header: &[String]) -> anyhow::Result<()> {
    let w = create(path)?;
    let mut enc = png::Encoder::new(w, raster.width as u32, raster.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    for l in header {
        if let Some((k, v)) = l.split_once(": ") {
            enc.add_text_chunk(k.into(), v.into())?;
        }
    }
    let mut writer = enc.write_header()?;
    let bytes: Vec<u8> = raster
        .pixels
        .iter()
        .map(|&p| if p { 255 } else { 0 })
        .collect();
    writer.write_image_data(&bytes)?;
    writer.finish()?;
    Ok(())
}

/// Collects the JSON records of a run directory into `report.md`.
pub fn report(dir: &Path) -> anyhow::Result<PathBuf> {
    let read = |name: &str| -> anyhow::Result<Option<String>> {
        let p = dir.join(name);
        if p.exists() {
            Ok(Some(
                fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
            ))
        } else {
            Ok(None)
        }
    };
    let summary: Option<RunSummary> = read("summary.json")?
        .map(|s| serde_json::from_str(&s))
        .transpose()
        .context("parsing summary.json")?;
    let assembly: Option<AssemblyReport> = read("assembly.json")?
        .map(|s| serde_json::from_str(&s))
        .transpose()
        .context("parsing assembly.json")?;
    if summary.is_none() && assembly.is_none() {
        bail!(
            "{} has neither summary.json nor assembly.json",
            dir.display()
        );
    }

    let mut md = String::new();
    if let Some(s) = &summary {
        md += &format!("# {}\n\n", s.run);
        md += &format!("config-hash: {}\n\n", s.config_hash);
        md += &format!(
            "Objective `{}`, {} design elements, {} after {} iterations.\n\n",
            s.objective, s.design_elements, s.termination, s.iterations
        );
        md += "| quantity | initial | final |\n|---|---|---|\n";
        let (a, b) = (&s.initial, &s.last);
        md += &format!(
            "| objective | {:.6e} | {:.6e} |\n",
            a.values.objective, b.values.objective
        );
        for (name, x, y) in [
            ("cloak", a.values.cloak, b.values.cloak),
            ("index", a.values.index, b.values.index),
            ("rotator", a.values.rotator, b.values.rotator),
            (
                "cloak max deviation",
                a.cloak_max_deviation,
                b.cloak_max_deviation,
            ),
        ] {
            if x.is_some() || y.is_some() {
                md += &format!("| {name} | {} | {} |\n", fmt_opt(x), fmt_opt(y));
            }
        }
        if let (Some(r0), Some(r1), Some(n)) =
            (a.reversed_elements, b.reversed_elements, b.target_elements)
        {
            md += &format!("| reversed elements | {r0}/{n} | {r1}/{n} |\n");
        }
        md += &format!(
            "| temperature range | [{:.4}, {:.4}] | [{:.4}, {:.4}] |\n",
            a.temperature_min, a.temperature_max, b.temperature_min, b.temperature_max
        );
        md += &format!(
            "| heat in / out | {:.6e} / {:.6e} | {:.6e} / {:.6e} |\n\n",
            a.heat_in, a.heat_out, b.heat_in, b.heat_out
        );
    }
    if let Some(r) = &assembly {
        if summary.is_none() {
            md += &format!("# {}\n\nconfig-hash: {}\n\n", r.run, r.config_hash);
        }
        md += "## Assembly\n\n| metric | value |\n|---|---|\n";
        md += &format!("| MSE | {:.6e} |\n| R² | {:.6} |\n", r.mse, r.r2);
        md += &format!("| max L1 distance | {:.6e} |\n", r.max_l1);
        md += &format!(
            "| objective optimized / assembled | {:.6e} / {:.6e} |\n",
            r.optimized.objective, r.assembled.objective
        );
        md += &format!(
            "| raster | {}x{}, solid fraction {:.4} |\n",
            r.raster[0], r.raster[1], r.solid_fraction
        );
    }
    let path = dir.join("report.md");
    fs::write(&path, &md).with_context(|| format!("writing {}", path.display()))?;
    print!("{md}");
    Ok(path)
}
