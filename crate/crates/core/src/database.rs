//! The (t1, t2, t3) unit-cell family and its property database.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::homogenization::{homogenize, PixelCell};
use crate::mesh::OrthotropicConductivity;

pub const PROPERTIES_FILE: &str = "properties.csv";
pub const GEOMETRY_FILE: &str = "geometry.bin";
pub const CSV_HEADER: &str = "index,t1,t2,t3,k11,k22,vf";
const GEOMETRY_MAGIC: &[u8; 4] = b"RVEG";

/// Strip widths of one family member: `t1` solid columns on the left and
/// right, `t2` solid rows at top and bottom, `t3` half-width of the two
/// diagonal bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RveParams {
    pub t1: usize,
    pub t2: usize,
    pub t3: usize,
}

impl RveParams {
    pub const fn new(t1: usize, t2: usize, t3: usize) -> Self {
        Self { t1, t2, t3 }
    }

    pub fn is_zero(&self) -> bool {
        self.t1 == 0 && self.t2 == 0 && self.t3 == 0
    }
}

pub fn generate_pixels(params: RveParams, n: usize) -> Result<PixelCell> {
    let max = n / 2;
    let RveParams { t1, t2, t3 } = params;
    if n == 0 || t1 > max || t2 > max || t3 > max {
        return Err(Error::InvalidArgument(format!(
            "parameters ({t1},{t2},{t3}) outside [0, {max}] for n = {n}"
        )));
    }
    Ok(PixelCell::from_fn(n, |i, j| {
        i < t1
            || i >= n - t1
            || j < t2
            || j >= n - t2
            || i.abs_diff(j) < t3
            || (i + j).abs_diff(n - 1) < t3
    }))
}

/// One unique cell with its homogenized properties.
#[derive(Debug, Clone, PartialEq)]
pub struct RveRecord {
    pub index: usize,
    pub params: RveParams,
    pub cell: PixelCell,
    pub k11: f64,
    pub k22: f64,
    pub vf: f64,
}

impl RveRecord {
    pub fn conductivity(&self) -> OrthotropicConductivity {
        OrthotropicConductivity::new(self.k11, self.k22)
    }
}

/// Rounds to the nine significant digits used by the property file, so an
/// in-memory database equals its reloaded copy.
pub fn round_stored(x: f64) -> f64 {
    format_stored(x).parse().expect("formatted float parses")
}

fn format_stored(x: f64) -> String {
    format!("{x:.8e}")
}

/// Ordered records plus a (k11, k22) search tree.
#[derive(Debug, Clone)]
pub struct RveDatabase {
    n: usize,
    generated: usize,
    records: Vec<RveRecord>,
    tree: KdTree,
}

impl PartialEq for RveDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.records == other.records
    }
}

impl RveDatabase {
    pub fn from_records(n: usize, generated: usize, records: Vec<RveRecord>) -> Self {
        let points: Vec<[f64; 2]> = records.iter().map(|r| [r.k11, r.k22]).collect();
        let tree = KdTree::build(&points);
        Self {
            n,
            generated,
            records,
            tree,
        }
    }

    pub fn cell_size(&self) -> usize {
        self.n
    }

    /// Number of parameter triples enumerated when the database was built.
    pub fn generated(&self) -> usize {
        self.generated
    }

    pub fn records(&self) -> &[RveRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&RveRecord> {
        self.records.get(index)
    }

    /// Record minimizing `|k11 − a| + |k22 − b|`, first index on ties.
    pub fn nearest(&self, k11: f64, k22: f64) -> Result<(&RveRecord, f64)> {
        let (i, d) = self
            .tree
            .nearest_l1([k11, k22])
            .ok_or(Error::Empty("database"))?;
        Ok((&self.records[i], d))
    }

    /// Exhaustive scan with the same metric and tie-break as [`nearest`].
    ///
    /// [`nearest`]: RveDatabase::nearest
    pub fn nearest_linear(&self, k11: f64, k22: f64) -> Result<(&RveRecord, f64)> {
        let mut best: Option<(&RveRecord, f64)> = None;
        for r in &self.records {
            let d = (r.k11 - k11).abs() + (r.k22 - k22).abs();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((r, d));
            }
        }
        best.ok_or(Error::Empty("database"))
    }

    /// Copy without the given record indices (indices are kept as-is).
    pub fn without(&self, removed: &HashSet<usize>) -> Self {
        let records = self
            .records
            .iter()
            .filter(|r| !removed.contains(&r.index))
            .cloned()
            .collect();
        Self::from_records(self.n, self.generated, records)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let csv_path = dir.join(PROPERTIES_FILE);
        let file = fs::File::create(&csv_path)
            .map_err(|e| Error::io(format!("creating {}", csv_path.display()), e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(format!("writing {}", csv_path.display()), e);
        writeln!(w, "{CSV_HEADER}").map_err(io)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.index,
                r.params.t1,
                r.params.t2,
                r.params.t3,
                format_stored(r.k11),
                format_stored(r.k22),
                format_stored(r.vf)
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)?;

        let geo_path = dir.join(GEOMETRY_FILE);
        let mut bytes = Vec::new();
        bytes.extend_from_slice(GEOMETRY_MAGIC);
        bytes.extend_from_slice(&(self.n as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.generated as u32).to_le_bytes());
        for r in &self.records {
            bytes.extend_from_slice(&r.cell.to_packed());
        }
        fs::write(&geo_path, bytes)
            .map_err(|e| Error::io(format!("writing {}", geo_path.display()), e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let geo_path = dir.join(GEOMETRY_FILE);
        let mut geo = Vec::new();
        fs::File::open(&geo_path)
            .and_then(|mut f| f.read_to_end(&mut geo))
            .map_err(|e| Error::io(format!("reading {}", geo_path.display()), e))?;
        let geo_err = |message: String| Error::Parse {
            path: geo_path.clone(),
            line: 0,
            message,
        };
        if geo.len() < 16 || &geo[..4] != GEOMETRY_MAGIC {
            return Err(geo_err("missing geometry header".into()));
        }
        let word =
            |k: usize| u32::from_le_bytes(geo[4 * k..4 * k + 4].try_into().unwrap()) as usize;
        let (n, count, generated) = (word(1), word(2), word(3));
        let stride = (n * n + 7) / 8;
        if geo.len() != 16 + count * stride {
            return Err(geo_err(format!(
                "expected {count} cells of {stride} bytes, file has {} payload bytes",
                geo.len() - 16
            )));
        }

        let csv_path = dir.join(PROPERTIES_FILE);
        let file = fs::File::open(&csv_path)
            .map_err(|e| Error::io(format!("reading {}", csv_path.display()), e))?;
        let records = parse_properties(&csv_path, BufReader::new(file), |index| {
            if index >= count {
                return Err(Error::MissingGeometry(index));
            }
            PixelCell::from_packed(n, &geo[16 + index * stride..16 + (index + 1) * stride])
        })?;
        if records.len() != count {
            return Err(Error::Parse {
                path: csv_path,
                line: records.len() + 1,
                message: format!("{} property rows for {count} stored cells", records.len()),
            });
        }
        Ok(Self::from_records(n, generated, records))
    }
}

fn parse_properties(
    path: &Path,
    reader: impl BufRead,
    mut cell_of: impl FnMut(usize) -> Result<PixelCell>,
) -> Result<Vec<RveRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == CSV_HEADER => {}
        Some((_, Ok(h))) => return Err(err(1, format!("unexpected header '{h}'"))),
        Some((_, Err(e))) => return Err(Error::io(format!("reading {}", path.display()), e)),
        None => return Err(err(1, "empty file".into())),
    }
    let mut records = Vec::new();
    for (k, line) in lines {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(err(
                line_no,
                format!("row '{line}' has {} fields, expected 7", fields.len()),
            ));
        }
        let int = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| err(line_no, format!("invalid integer '{}'", fields[i])))
        };
        let float = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| err(line_no, format!("invalid number '{}'", fields[i])))
        };
        let index = int(0)?;
        if index != records.len() {
            return Err(err(
                line_no,
                format!("index {index} out of sequence, expected {}", records.len()),
            ));
        }
        let params = RveParams::new(int(1)?, int(2)?, int(3)?);
        records.push(RveRecord {
            index,
            params,
            cell: cell_of(index)?,
            k11: float(4)?,
            k22: float(5)?,
            vf: float(6)?,
        });
    }
    Ok(records)
}

/// Enumerates every triple in lexicographic order and keeps the first
/// generator of each distinct pixel grid.
pub fn unique_cells(n: usize) -> Result<(usize, Vec<(RveParams, PixelCell)>)> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "cell size must be even and positive, got {n}"
        )));
    }
    let max = n / 2;
    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    let mut generated = 0;
    for t1 in 0..=max {
        for t2 in 0..=max {
            for t3 in 0..=max {
                let params = RveParams::new(t1, t2, t3);
                let cell = generate_pixels(params, n)?;
                generated += 1;
                if seen.insert(cell.to_packed()) {
                    unique.push((params, cell));
                }
            }
        }
    }
    Ok((generated, unique))
}

pub fn build_database(n: usize) -> Result<RveDatabase> {
    let (generated, unique) = unique_cells(n)?;
    let records = unique
        .into_par_iter()
        .enumerate()
        .map(|(index, (params, cell))| {
            let tensor = homogenize(&cell)?;
            let k = tensor.to_orthotropic().map_err(|e| match e {
                Error::SymmetryViolation { off_diagonal, .. } => Error::SymmetryViolation {
                    off_diagonal,
                    params: Some((params.t1, params.t2, params.t3)),
                },
                other => other,
            })?;
            Ok(RveRecord {
                index,
                params,
                k11: round_stored(k.k11),
                k22: round_stored(k.k22),
                vf: round_stored(cell.volume_fraction()),
                cell,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RveDatabase::from_records(n, generated, records))
}

/// 2-d tree over property pairs answering L1 nearest-neighbour queries.
#[derive(Debug, Clone, Default)]
struct KdTree {
    points: Vec<[f64; 2]>,
    nodes: Vec<KdNode>,
    root: Option<usize>,
}

#[derive(Debug, Clone)]
struct KdNode {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl KdTree {
    fn build(points: &[[f64; 2]]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        let mut ids: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build_rec(&mut ids, 0);
        tree
    }

    fn build_rec(&mut self, ids: &mut [usize], depth: usize) -> Option<usize> {
        if ids.is_empty() {
            return None;
        }
        let axis = depth % 2;
        let pts = &self.points;
        ids.sort_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = ids.len() / 2;
        let point = ids[mid];
        let (lo, hi) = ids.split_at_mut(mid);
        let left = self.build_rec(lo, depth + 1);
        let right = self.build_rec(&mut hi[1..], depth + 1);
        self.nodes.push(KdNode {
            point,
            axis,
            left,
            right,
        });
        Some(self.nodes.len() - 1)
    }

    fn nearest_l1(&self, q: [f64; 2]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        self.search(self.root, q, &mut best);
        best
    }

    fn search(&self, node: Option<usize>, q: [f64; 2], best: &mut Option<(usize, f64)>) {
        let Some(id) = node else { return };
        let n = &self.nodes[id];
        let p = self.points[n.point];
        let d = (p[0] - q[0]).abs() + (p[1] - q[1]).abs();
        let better = match *best {
            None => true,
            Some((bi, bd)) => d < bd || (d == bd && n.point < bi),
        };
        if better {
            *best = Some((n.point, d));
        }
        let diff = q[n.axis] - p[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, q, best);
        // Ties may hide a smaller index on the far side, so prune only on strict excess.
        if best.map_or(true, |(_, bd)| diff.abs() <= bd) {
            self.search(far, q, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_edge_cases() {
        let n = 50;
        let full = generate_pixels(RveParams::new(25, 0, 0), n).unwrap();
        assert_eq!(full.volume_fraction(), 1.0);
        let empty = generate_pixels(RveParams::new(0, 0, 0), n).unwrap();
        assert_eq!(empty.solid_count(), 0);
        let strips = generate_pixels(RveParams::new(1, 0, 0), n).unwrap();
        assert_eq!(strips.solid_count(), 100);
        assert_eq!(strips.volume_fraction(), 0.04);
        assert!(generate_pixels(RveParams::new(26, 0, 0), n).is_err());
        // full diagonal bands also fill the cell
        let bands = generate_pixels(RveParams::new(0, 0, 25), n).unwrap();
        assert_eq!(bands.volume_fraction(), 1.0);
    }

    /// Independent enumeration for n = 2 and 4: render each triple as a
    /// string of pixel characters and count distinct strings.
    fn brute_force_unique(n: usize) -> usize {
        let mut set = std::collections::BTreeSet::new();
        for t1 in 0..=n / 2 {
            for t2 in 0..=n / 2 {
                for t3 in 0..=n / 2 {
                    let mut s = String::new();
                    for j in 0..n as i64 {
                        for i in 0..n as i64 {
                            let (n, t1, t2, t3) = (n as i64, t1 as i64, t2 as i64, t3 as i64);
                            let solid = i < t1
                                || i >= n - t1
                                || j < t2
                                || j >= n - t2
                                || (i - j).abs() < t3
                                || (i + j - (n - 1)).abs() < t3;
                            s.push(if solid { '1' } else { '0' });
                        }
                    }
                    set.insert(s);
                }
            }
        }
        set.len()
    }

    #[test]
    fn small_family_counts_match_enumeration() {
        for n in [2, 4, 6] {
            let (generated, unique) = unique_cells(n).unwrap();
            assert_eq!(generated, (n / 2 + 1).pow(3));
            assert_eq!(unique.len(), brute_force_unique(n));
        }
        assert_eq!(brute_force_unique(2), 2);
    }

    #[test]
    fn odd_size_rejected() {
        assert!(build_database(5).is_err());
    }

    #[test]
    fn nearest_matches_linear_scan_and_breaks_ties_by_index() {
        let db = build_database(8).unwrap();
        for r in db.records() {
            let (hit, d) = db.nearest(r.k11, r.k22).unwrap();
            assert_eq!(d, 0.0);
            // duplicate property pairs resolve to the first index
            assert!(hit.index <= r.index);
            assert_eq!((hit.k11, hit.k22), (r.k11, r.k22));
        }
        let mut state = 7u64;
        for _ in 0..200 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let a = (state >> 11) as f64 / (1u64 << 53) as f64;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let b = (state >> 11) as f64 / (1u64 << 53) as f64;
            let (x, dx) = db.nearest(a, b).unwrap();
            let (y, dy) = db.nearest_linear(a, b).unwrap();
            assert_eq!(x.index, y.index);
            assert_eq!(dx, dy);
        }
        let (top, _) = db.nearest(1.0, 1.0).unwrap();
        assert_eq!(top.vf, 1.0);
    }

    #[test]
    fn empty_database_query_fails() {
        let db = RveDatabase::from_records(4, 0, vec![]);
        assert!(matches!(db.nearest(0.5, 0.5), Err(Error::Empty(_))));
    }

    #[test]
    fn save_load_round_trip_and_truncation() {
        let db = build_database(6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        db.save(dir.path()).unwrap();
        let back = RveDatabase::load(dir.path()).unwrap();
        assert_eq!(back, db);
        assert_eq!(back.generated(), db.generated());
        let csv = fs::read_to_string(dir.path().join(PROPERTIES_FILE)).unwrap();
        assert_eq!(csv.lines().count(), db.len() + 1);

        // chop the last row in half
        let cut = csv.trim_end().rfind(',').unwrap();
        fs::write(dir.path().join(PROPERTIES_FILE), &csv[..cut]).unwrap();
        match RveDatabase::load(dir.path()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, db.len() + 1);
                assert!(message.contains("fields"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
