//! Shape sets, per-shape point sets, and the shape-set file format.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::geometry::{
    circle_shape, random_shape, sample_boundary, shape_from_vector, BoundarySample, Polyline, ShapeVector, Vec2,
    POLYLINE_SEGMENTS,
};
use crate::{mix_seed, seeded_rng};

/// Points sampled per shape and role.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PointCounts {
    pub interior: usize,
    pub inner_boundary: usize,
    pub outer_boundary: usize,
}

impl Default for PointCounts {
    fn default() -> Self {
        Self { interior: 10_000, inner_boundary: 200, outer_boundary: 200 }
    }
}

/// Collocation points of one shape: Ω, Γ_i and Γ_e.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet {
    pub interior: Vec<Vec2>,
    pub inner_boundary: Vec<BoundarySample>,
    pub outer_boundary: Vec<BoundarySample>,
}

/// Interior points uniform on [0,1]² outside the scatterer, Γ_i from the
/// curve, Γ_e evenly spread over the four sides of the square.
pub fn sample_points<R: Rng + ?Sized>(v: &ShapeVector, counts: &PointCounts, rng: &mut R) -> Result<PointSet> {
    if counts.interior == 0 || counts.inner_boundary < 3 || counts.outer_boundary == 0 {
        return domain(format!("point counts must be positive (and ≥ 3 on the scatterer), got {counts:?}"));
    }
    let curve = shape_from_vector(v)?;
    let poly = Polyline::from_curve(&curve, POLYLINE_SEGMENTS)?;
    let mut interior = Vec::with_capacity(counts.interior);
    let max_draws = 100 * counts.interior;
    let mut draws = 0;
    while interior.len() < counts.interior {
        if draws == max_draws {
            return Err(Error::DegenerateGeometry(format!(
                "only {} of {} interior points accepted after {max_draws} draws",
                interior.len(),
                counts.interior
            )));
        }
        draws += 1;
        let p = Vec2::new(rng.gen(), rng.gen());
        if !poly.contains(p) {
            interior.push(p);
        }
    }
    Ok(PointSet {
        interior,
        inner_boundary: sample_boundary(&curve, counts.inner_boundary)?,
        outer_boundary: outer_boundary(counts.outer_boundary),
    })
}

/// `n` points on the unit square, split as evenly as possible between the
/// sides (bottom, right, top, left) at half-offset positions so no point
/// falls on a corner. `u` is the counter-clockwise perimeter fraction.
pub fn outer_boundary(n: usize) -> Vec<BoundarySample> {
    let mut out = Vec::with_capacity(n);
    for side in 0..4 {
        let m = n / 4 + usize::from(side < n % 4);
        for j in 0..m {
            let t = (j as f64 + 0.5) / m as f64;
            let (position, outward_normal) = match side {
                0 => (Vec2::new(t, 0.0), Vec2::new(0.0, -1.0)),
                1 => (Vec2::new(1.0, t), Vec2::new(1.0, 0.0)),
                2 => (Vec2::new(1.0 - t, 1.0), Vec2::new(0.0, 1.0)),
                _ => (Vec2::new(0.0, 1.0 - t), Vec2::new(-1.0, 0.0)),
            };
            out.push(BoundarySample { position, outward_normal, u: (side as f64 + t) / 4.0 });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetRole {
    Train,
    TestCircles,
    TestArbitrary,
}

impl DatasetRole {
    pub fn name(self) -> &'static str {
        match self {
            DatasetRole::Train => "train",
            DatasetRole::TestCircles => "test-circles",
            DatasetRole::TestArbitrary => "test-arbitrary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(DatasetRole::Train),
            "test-circles" => Some(DatasetRole::TestCircles),
            "test-arbitrary" => Some(DatasetRole::TestArbitrary),
            _ => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            DatasetRole::Train => 1,
            DatasetRole::TestCircles => 2,
            DatasetRole::TestArbitrary => 3,
        }
    }
}

impl std::fmt::Display for DatasetRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Generation options beyond role, count and seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetOptions {
    /// Radius range of the circle test set (m).
    pub circle_radii: (f64, f64),
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { circle_radii: (0.05, 0.19) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeDataset {
    pub role: DatasetRole,
    pub seed: u64,
    /// Bumped when a regeneration was needed to avoid duplicates.
    pub sub_seed: u64,
    pub ids: Vec<u64>,
    pub shapes: Vec<ShapeVector>,
}

impl ShapeDataset {
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&ShapeVector> {
        self.ids.iter().position(|i| *i == id).map(|p| &self.shapes[p])
    }

    /// Generator for everything derived from shape `id`.
    pub fn shape_rng(&self, id: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
        seeded_rng(mix_seed(mix_seed(self.seed ^ id, self.role.tag()), stream))
    }

    /// Fixed point sets for every shape, each from its own generator.
    pub fn point_sets(&self, counts: &PointCounts) -> Result<Vec<PointSet>> {
        self.ids
            .par_iter()
            .zip(&self.shapes)
            .map(|(id, v)| sample_points(v, counts, &mut self.shape_rng(*id, POINT_STREAM)))
            .collect()
    }

    fn contains(&self, v: &ShapeVector) -> bool {
        let key = v.to_array().map(f64::to_bits);
        self.shapes.iter().any(|s| s.to_array().map(f64::to_bits) == key)
    }
}

const POINT_STREAM: u64 = 0x70_6f_69_6e_74;

fn generate_with_sub_seed(
    role: DatasetRole,
    count: usize,
    seed: u64,
    sub_seed: u64,
    opts: &DatasetOptions,
) -> Result<ShapeDataset> {
    let ids: Vec<u64> = (0..count as u64).collect();
    let shapes = match role {
        DatasetRole::TestCircles => {
            let (lo, hi) = opts.circle_radii;
            if !(lo > 0.0 && hi >= lo) {
                return domain(format!("invalid circle radius range [{lo}, {hi}]"));
            }
            ids.iter()
                .map(|&i| {
                    let r = if count == 1 { lo } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 };
                    circle_shape(r).map(|f| f.shape)
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => ids
            .iter()
            .map(|&i| random_shape(&mut seeded_rng(mix_seed(mix_seed(seed ^ i, role.tag()), sub_seed))))
            .collect(),
    };
    Ok(ShapeDataset { role, seed, sub_seed, ids, shapes })
}

/// Deterministic shape set. Random roles regenerate with the next sub-seed
/// if two shapes coincide.
pub fn generate_dataset(role: DatasetRole, count: usize, seed: u64, opts: &DatasetOptions) -> Result<ShapeDataset> {
    if count == 0 {
        return domain("dataset count must be at least 1");
    }
    let mut sub = 0;
    loop {
        let ds = generate_with_sub_seed(role, count, seed, sub, opts)?;
        if role == DatasetRole::TestCircles || !has_duplicates(&ds.shapes) {
            return Ok(ds);
        }
        sub += 1;
    }
}

fn has_duplicates(shapes: &[ShapeVector]) -> bool {
    let mut keys: Vec<[u64; 16]> = shapes.iter().map(|s| s.to_array().map(f64::to_bits)).collect();
    keys.sort_unstable();
    keys.windows(2).any(|w| w[0] == w[1])
}

/// Regenerates `test` with incremented sub-seeds until no vector equals one
/// in `train`. Fails for circle sets, which cannot be re-drawn.
pub fn ensure_disjoint(train: &ShapeDataset, test: &mut ShapeDataset, opts: &DatasetOptions) -> Result<()> {
    if train.seed == test.seed && train.role == test.role {
        return domain("train and test sets must use different seeds");
    }
    while test.shapes.iter().any(|v| train.contains(v)) {
        if test.role == DatasetRole::TestCircles {
            return domain("circle test set overlaps the training set");
        }
        let next = generate_with_sub_seed(test.role, test.len(), test.seed, test.sub_seed + 1, opts)?;
        *test = next;
    }
    Ok(())
}

/// Writes a shape set: `extra_header` lines (each gets a `# ` prefix), a
/// metadata line, then `id,cx0..cx7,cy0..cy7` records.
pub fn write_dataset<W: Write>(ds: &ShapeDataset, extra_header: &[String], mut w: W) -> Result<()> {
    let mut s = String::new();
    for h in extra_header {
        writeln!(s, "# {h}").unwrap();
    }
    writeln!(s, "# role={} seed={} sub_seed={} count={}", ds.role, ds.seed, ds.sub_seed, ds.len()).unwrap();
    writeln!(s, "# id,cx0,cx1,cx2,cx3,cx4,cx5,cx6,cx7,cy0,cy1,cy2,cy3,cy4,cy5,cy6,cy7").unwrap();
    for (id, v) in ds.ids.iter().zip(&ds.shapes) {
        write!(s, "{id}").unwrap();
        for m in v.to_array() {
            write!(s, ",{m:?}").unwrap();
        }
        s.push('\n');
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn save_dataset(ds: &ShapeDataset, path: &Path, extra_header: &[String]) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(ds, extra_header, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn parse_meta(line: usize, body: &str) -> Result<Option<(DatasetRole, u64, u64)>> {
    if !body.starts_with("role=") {
        return Ok(None);
    }
    let (mut role, mut seed, mut sub) = (None, None, 0);
    for kv in body.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse { line, message: format!("bad metadata `{kv}`") })?;
        let bad = |m: &str| Error::Parse { line, message: format!("bad {m} `{v}`") };
        match k {
            "role" => role = Some(DatasetRole::parse(v).ok_or_else(|| bad("role"))?),
            "seed" => seed = Some(v.parse().map_err(|_| bad("seed"))?),
            "sub_seed" => sub = v.parse().map_err(|_| bad("sub_seed"))?,
            _ => {}
        }
    }
    match (role, seed) {
        (Some(r), Some(s)) => Ok(Some((r, s, sub))),
        _ => Err(Error::Parse { line, message: "metadata needs role and seed".into() }),
    }
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<ShapeDataset> {
    let mut meta = None;
    let (mut ids, mut shapes) = (Vec::new(), Vec::new());
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(body) = t.strip_prefix('#') {
            if let Some(m) = parse_meta(line_no, body.trim())? {
                meta = Some(m);
            }
            continue;
        }
        let fields: Vec<&str> = t.split(',').map(str::trim).collect();
        if fields.len() != 17 {
            return Err(Error::Parse { line: line_no, message: format!("expected id and 16 values, got {} fields", fields.len()) });
        }
        let id: u64 =
            fields[0].parse().map_err(|_| Error::Parse { line: line_no, message: format!("bad id `{}`", fields[0]) })?;
        let vals = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line: line_no, message: format!("bad value `{f}`") })
            })
            .collect::<Result<Vec<f64>>>()?;
        if ids.contains(&id) {
            return Err(Error::Parse { line: line_no, message: format!("duplicate id {id}") });
        }
        ids.push(id);
        shapes.push(ShapeVector::from_slice(&vals)?);
    }
    let (role, seed, sub_seed) = meta.ok_or_else(|| Error::Parse { line: 1, message: "missing role/seed metadata line".into() })?;
    Ok(ShapeDataset { role, seed, sub_seed, ids, shapes })
}

pub fn load_dataset(path: &Path) -> Result<ShapeDataset> {
    let f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_dataset(BufReader::new(f))
}

/// CSV rows `x,y,role,nx,ny`; interior points carry zero normals.
pub fn write_points_csv<W: Write>(p: &PointSet, mut w: W) -> Result<()> {
    let mut s = String::from("x,y,role,nx,ny\n");
    for x in &p.interior {
        writeln!(s, "{:?},{:?},interior,0,0", x.x, x.y).unwrap();
    }
    for (role, set) in [("inner", &p.inner_boundary), ("outer", &p.outer_boundary)] {
        for b in set {
            writeln!(
                s,
                "{:?},{:?},{role},{:?},{:?}",
                b.position.x, b.position.y, b.outward_normal.x, b.outward_normal.y
            )
            .unwrap();
        }
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}
