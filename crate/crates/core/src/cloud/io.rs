use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ClassLabel, LabeledCloud, PointCloud};
use crate::error::{Error, Result};

/// On-disk cloud formats.
///
/// `XyzLabel` is whitespace-separated `x y z [label]` text with `#` comments.
/// `Ply` is ASCII PLY; on write, labeled clouds get per-vertex class colors
/// and an `int label` property.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzLabel,
    Ply,
}

impl CloudFormat {
    /// `.ply` selects PLY, anything else the xyz-label text format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::Ply,
            _ => CloudFormat::XyzLabel,
        }
    }
}

pub fn read_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<LabeledCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match format {
        CloudFormat::XyzLabel => parse_xyz_label(&text, &name),
        CloudFormat::Ply => parse_ply(&text, &name),
    }
}

pub fn write_cloud(cloud: &LabeledCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        CloudFormat::XyzLabel => format_xyz_label(cloud),
        CloudFormat::Ply => format_ply(cloud),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_coord(tok: &str, path: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite coordinate {tok:?}")));
    }
    Ok(v)
}

fn parse_label(tok: &str, path: &str, line: usize) -> Result<ClassLabel> {
    let id: i64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid label {tok:?}")))?;
    ClassLabel::from_id(id)
        .ok_or_else(|| Error::domain(format!("{path}: line {line}: label {id} outside {{0,1,2}}")))
}

pub(crate) fn parse_xyz_label(text: &str, path: &str) -> Result<LabeledCloud> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut labeled: Option<bool> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let has_label = match toks.len() {
            3 => false,
            4 => true,
            n => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected 3 or 4 fields, found {n}"),
                ))
            }
        };
        match labeled {
            None => labeled = Some(has_label),
            Some(l) if l != has_label => {
                return Err(parse_err(path, line_no, "mixed labeled and unlabeled records"))
            }
            _ => {}
        }
        let p = [
            parse_coord(toks[0], path, line_no)?,
            parse_coord(toks[1], path, line_no)?,
            parse_coord(toks[2], path, line_no)?,
        ];
        points.push(p);
        if has_label {
            labels.push(parse_label(toks[3], path, line_no)?);
        }
    }
    if points.is_empty() {
        return Err(parse_err(path, 0, "no points"));
    }
    let cloud = PointCloud::new(points)?;
    if labeled == Some(true) {
        LabeledCloud::new(cloud, labels)
    } else {
        Ok(LabeledCloud::unlabeled(cloud))
    }
}

fn format_xyz_label(cloud: &LabeledCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    for (i, p) in cloud.points().iter().enumerate() {
        // `{}` on f64 prints the shortest representation that round-trips.
        match cloud.labels() {
            Some(l) => writeln!(out, "{} {} {} {}", p[0], p[1], p[2], l[i].id()),
            None => writeln!(out, "{} {} {}", p[0], p[1], p[2]),
        }
        .expect("writing to String");
    }
    out
}

fn format_ply(cloud: &LabeledCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48 + 256);
    out.push_str("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", cloud.len()).unwrap();
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.is_labeled() {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
        out.push_str("property int label\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        match cloud.labels() {
            Some(l) => {
                let [r, g, b] = l[i].color();
                writeln!(out, "{} {} {} {r} {g} {b} {}", p[0], p[1], p[2], l[i].id())
            }
            None => writeln!(out, "{} {} {}", p[0], p[1], p[2]),
        }
        .unwrap();
    }
    out
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
}

pub(crate) fn parse_ply(text: &str, path: &str) -> Result<LabeledCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;
    for (no, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                if toks.get(1) != Some(&"ascii") {
                    return Err(parse_err(path, no, "only ASCII PLY is supported"));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                if toks.len() != 3 {
                    return Err(parse_err(path, no, "malformed element line"));
                }
                let count = toks[2]
                    .parse()
                    .map_err(|_| parse_err(path, no, "invalid element count"))?;
                elements.push(PlyElement {
                    name: toks[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, no, "property before element"))?;
                let name = toks
                    .last()
                    .filter(|_| toks.len() >= 3)
                    .ok_or_else(|| parse_err(path, no, "malformed property line"))?;
                el.properties.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => {
                return Err(parse_err(path, no, format!("unexpected header keyword {other:?}")))
            }
        }
    }
    if !header_done {
        return Err(parse_err(path, 0, "missing end_header"));
    }
    if !saw_format {
        return Err(parse_err(path, 0, "missing format line"));
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut colors = Vec::new();
    let mut found_vertex = false;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                lines
                    .next()
                    .ok_or_else(|| parse_err(path, 0, format!("truncated {} element", el.name)))?;
            }
            continue;
        }
        found_vertex = true;
        let col = |name: &str| el.properties.iter().position(|p| p == name);
        let (x, y, z) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(parse_err(path, 0, "vertex element lacks x/y/z properties")),
        };
        let label_col = col("label");
        let rgb = match (col("red"), col("green"), col("blue")) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            _ => None,
        };
        points.reserve(el.count);
        for _ in 0..el.count {
            let (no, line) = lines
                .next()
                .ok_or_else(|| parse_err(path, 0, "truncated vertex data"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < el.properties.len() {
                return Err(parse_err(
                    path,
                    no,
                    format!("expected {} values, found {}", el.properties.len(), toks.len()),
                ));
            }
            points.push([
                parse_coord(toks[x], path, no)?,
                parse_coord(toks[y], path, no)?,
                parse_coord(toks[z], path, no)?,
            ]);
            if let Some(c) = label_col {
                labels.push(parse_label(toks[c], path, no)?);
            }
            if let Some([r, g, b]) = rgb {
                let chan = |i: usize| -> Result<u8> {
                    toks[i]
                        .parse()
                        .map_err(|_| parse_err(path, no, format!("invalid color {:?}", toks[i])))
                };
                colors.push([chan(r)?, chan(g)?, chan(b)?]);
            }
        }
    }
    if !found_vertex {
        return Err(parse_err(path, 0, "no vertex element"));
    }
    let cloud = PointCloud::new(points)?;
    if !labels.is_empty() {
        return LabeledCloud::new(cloud, labels);
    }
    // Colors that all match the class palette act as labels.
    if !colors.is_empty() {
        let from_colors: Option<Vec<ClassLabel>> =
            colors.iter().map(|&c| ClassLabel::from_color(c)).collect();
        if let Some(l) = from_colors {
            return LabeledCloud::new(cloud, l);
        }
    }
    Ok(LabeledCloud::unlabeled(cloud))
}
