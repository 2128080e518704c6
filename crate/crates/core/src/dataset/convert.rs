use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ply;
use crate::error::{Error, Result};
use crate::geom::LabeledCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    AsciiXyz,
    Csv,
    Ply,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascii-xyz" | "xyz" | "txt" => Ok(InputFormat::AsciiXyz),
            "csv" => Ok(InputFormat::Csv),
            "ply" => Ok(InputFormat::Ply),
            other => Err(Error::InvalidArgument(format!("unknown input format `{other}`"))),
        }
    }
}

/// A column addressed by zero-based position or by header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

/// Which input columns hold coordinates and labels. PLY input ignores this
/// and reads the `x y z red green blue semantic instance` properties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub x: Column,
    pub y: Column,
    pub z: Column,
    #[serde(default)]
    pub semantic: Option<Column>,
    #[serde(default)]
    pub instance: Option<Column>,
    #[serde(default)]
    pub color: Option<[Column; 3]>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            x: Column::Index(0),
            y: Column::Index(1),
            z: Column::Index(2),
            semantic: None,
            instance: None,
            color: None,
        }
    }
}

impl ColumnMap {
    /// `x y z semantic instance` in the first five columns.
    pub fn xyz_sem_inst() -> Self {
        Self {
            semantic: Some(Column::Index(3)),
            instance: Some(Column::Index(4)),
            ..Self::default()
        }
    }
}

pub fn convert(input: &Path, format: InputFormat, columns: &ColumnMap) -> Result<LabeledCloud> {
    match format {
        InputFormat::Ply => ply::cloud_from_ply(&ply::read_ply(input)?),
        InputFormat::AsciiXyz | InputFormat::Csv => {
            let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
            parse_delimited(&text, columns)
        }
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

struct Resolved {
    x: usize,
    y: usize,
    z: usize,
    semantic: Option<usize>,
    instance: Option<usize>,
    color: Option<[usize; 3]>,
}

fn resolve(col: &Column, header: Option<&[String]>) -> Result<usize> {
    match col {
        Column::Index(i) => Ok(*i),
        Column::Name(name) => header
            .and_then(|h| h.iter().position(|c| c.eq_ignore_ascii_case(name)))
            .ok_or_else(|| Error::Schema(format!("no column named `{name}`"))),
    }
}

/// Parses comma- or whitespace-delimited rows, skipping blank lines and `#`
/// comments. A first row that is not entirely numeric is taken as a header.
pub fn parse_delimited(text: &str, columns: &ColumnMap) -> Result<LabeledCloud> {
    let mut header: Option<Vec<String>> = None;
    let mut cols: Option<Resolved> = None;
    let mut cloud = LabeledCloud::default();
    let mut color = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        if cols.is_none() {
            if header.is_none() && fields.iter().any(|f| f.parse::<f64>().is_err()) {
                header = Some(fields.iter().map(|f| f.trim_matches('"').to_string()).collect());
                continue;
            }
            let h = header.as_deref();
            let r = Resolved {
                x: resolve(&columns.x, h)?,
                y: resolve(&columns.y, h)?,
                z: resolve(&columns.z, h)?,
                semantic: columns.semantic.as_ref().map(|c| resolve(c, h)).transpose()?,
                instance: columns.instance.as_ref().map(|c| resolve(c, h)).transpose()?,
                color: match &columns.color {
                    Some([r, g, b]) => Some([resolve(r, h)?, resolve(g, h)?, resolve(b, h)?]),
                    None => None,
                },
            };
            for (axis, i) in [("x", r.x), ("y", r.y), ("z", r.z)] {
                if i >= fields.len() {
                    return Err(Error::Schema(format!(
                        "coordinate column {axis}={i} missing; rows have {} columns",
                        fields.len()
                    )));
                }
            }
            cols = Some(r);
        }
        let r = cols.as_ref().expect("resolved");
        let field = |i: usize| {
            fields.get(i).copied().ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected at least {} columns, found {}", i + 1, fields.len()),
            })
        };
        let coord = |i: usize| -> Result<f32> {
            let f = field(i)?;
            f.parse::<f32>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("bad coordinate `{f}`"),
                })
        };
        let int = |i: usize| -> Result<i64> {
            let f = field(i)?;
            f.parse::<i64>()
                .ok()
                .or_else(|| f.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64))
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("bad integer `{f}`"),
                })
        };
        cloud.points.push([coord(r.x)?, coord(r.y)?, coord(r.z)?]);
        cloud
            .semantic
            .push(r.semantic.map(&int).transpose()?.map_or(-1, |v| v as i32));
        cloud
            .instance
            .push(r.instance.map(&int).transpose()?.map_or(-1, |v| v as i32));
        if let Some(rgb) = r.color {
            let mut c = [0u8; 3];
            for k in 0..3 {
                let v = int(rgb[k])?;
                c[k] = u8::try_from(v).map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("color value {v} outside 0..=255"),
                })?;
            }
            color.push(c);
        }
    }
    if columns.color.is_some() {
        cloud.color = Some(color);
    }
    cloud.validate()?;
    Ok(cloud)
}
