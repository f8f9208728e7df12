//! Field CSV (`x,y,re,im`) reading and writing, and grayscale image export.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use image::{GrayImage, Luma};
use scatter_core::metrics::grid_points;
use scatter_core::{Complex64, ComplexField, Error, Vec2};

use crate::error::{CliError, CliResult};

pub const FIELD_HEADER: &str = "x,y,re,im";

/// Header lines, an optional `# grid n=N` line, the column names and one row
/// per unmasked point.
pub fn field_csv(field: &ComplexField, header: &[String]) -> String {
    let mut s = String::new();
    for h in header {
        writeln!(s, "# {h}").unwrap();
    }
    if let Some(n) = field.grid {
        writeln!(s, "# grid n={n} points={} masked={}", field.len(), field.masked_count()).unwrap();
    }
    writeln!(s, "{FIELD_HEADER}").unwrap();
    for (p, v) in field.iter_valid() {
        writeln!(s, "{:?},{:?},{:?},{:?}", p.x, p.y, v.re, v.im).unwrap();
    }
    s
}

pub fn write_field_csv(field: &ComplexField, header: &[String], path: &Path) -> CliResult<()> {
    std::fs::write(path, field_csv(field, header))?;
    Ok(())
}

/// Reads a field CSV. With a grid line, rows are placed on the grid and
/// absent nodes are masked; a row off the grid is a pairing error.
pub fn read_field_csv(path: &Path) -> CliResult<ComplexField> {
    let f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Core(Error::FileNotFound(path.to_path_buf())),
        _ => CliError::Io(e),
    })?;
    let mut grid = None;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(body) = t.strip_prefix('#') {
            if let Some(rest) = body.trim().strip_prefix("grid n=") {
                let n = rest.split_whitespace().next().unwrap_or("");
                let n: usize = n.parse().map_err(|_| parse_err(line_no, format!("bad grid size `{n}`")))?;
                if n < 2 {
                    return Err(parse_err(line_no, "grid size must be at least 2".into()));
                }
                grid = Some(n);
            }
            continue;
        }
        if !seen_header {
            if t != FIELD_HEADER {
                return Err(parse_err(line_no, format!("expected `{FIELD_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        let vals: Vec<f64> = t
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|_| parse_err(line_no, format!("bad number `{f}`"))))
            .collect::<CliResult<_>>()?;
        if vals.len() != 4 {
            return Err(parse_err(line_no, format!("expected 4 fields, got {}", vals.len())));
        }
        rows.push((Vec2::new(vals[0], vals[1]), Complex64::new(vals[2], vals[3])));
    }
    if !seen_header {
        return Err(parse_err(1, format!("missing `{FIELD_HEADER}` line")));
    }
    match grid {
        None => Ok(ComplexField::new(rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| Some(r.1)).collect())?),
        Some(n) => {
            let pts = grid_points(n);
            let mut values = vec![None; n * n];
            let last = (n - 1) as f64;
            for (p, v) in rows {
                let (i, j) = ((p.x * last).round(), (p.y * last).round());
                let idx = (i >= 0.0 && j >= 0.0 && i <= last && j <= last).then(|| j as usize * n + i as usize);
                match idx {
                    Some(idx) if pts[idx] == p => values[idx] = Some(v),
                    _ => {
                        return Err(CliError::Core(Error::Pairing(format!(
                            "point ({}, {}) is not a node of the {n}×{n} grid",
                            p.x, p.y
                        ))))
                    }
                }
            }
            Ok(ComplexField::on_grid(n, values)?)
        }
    }
}

fn parse_err(line: usize, message: String) -> CliError {
    CliError::Core(Error::Parse { line, message })
}

/// Writes `<prefix>_re.png`, `<prefix>_im.png` and `<prefix>_range.txt`.
/// Each component maps linearly onto 0..=255 over ±max|component|; masked
/// nodes take the zero level. Row 0 of the image is the top edge y = 1.
pub fn write_images(field: &ComplexField, header: &[String], prefix: &Path) -> CliResult<()> {
    let n = field
        .grid
        .ok_or_else(|| CliError::Usage("image export needs a grid field".into()))?;
    let mut sidecar = String::new();
    for h in header {
        writeln!(sidecar, "# {h}").unwrap();
    }
    writeln!(sidecar, "component,min,max,masked_level").unwrap();
    for (name, part) in [("re", (|z: Complex64| z.re) as fn(Complex64) -> f64), ("im", |z: Complex64| z.im)] {
        let range = field.iter_valid().map(|(_, v)| part(v).abs()).fold(0.0, f64::max);
        let level = |v: f64| -> u8 {
            if range == 0.0 {
                return 128;
            }
            (127.5 + 127.5 * v / range).round().clamp(0.0, 255.0) as u8
        };
        let mut img = GrayImage::new(n as u32, n as u32);
        for j in 0..n {
            for i in 0..n {
                let g = field.values[j * n + i].map(|v| level(part(v))).unwrap_or(level(0.0));
                img.put_pixel(i as u32, (n - 1 - j) as u32, Luma([g]));
            }
        }
        img.save(with_suffix(prefix, &format!("_{name}.png")))?;
        writeln!(sidecar, "{name},{:?},{:?},{}", -range, range, level(0.0)).unwrap();
    }
    std::fs::write(with_suffix(prefix, "_range.txt"), sidecar)?;
    Ok(())
}

pub fn with_suffix(prefix: &Path, suffix: &str) -> std::path::PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    s.into()
}
