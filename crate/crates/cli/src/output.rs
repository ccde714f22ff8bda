//! Machine-readable output: JSON reports and CSV density snapshots.
//!
//! Every float is written with 17 significant digits in scientific notation,
//! so a report round-trips bit for bit and repeated runs diff cleanly.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use kolmogorov_jko::grid::GridMeasure;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// `x` with 17 significant digits, e.g. `1.0000000000000000e-1`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Pretty JSON layout with fixed-precision floats.
struct FixedDigits<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Serialize `value` as pretty JSON with 17-digit floats. Non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = FixedDigits { inner: PrettyFormatter::with_indent(b"  ") };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).context("serializing report")?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Print the report on stdout and, when `out_dir` is set, save it as `file_name` there.
pub fn emit<T: Serialize>(value: &T, out_dir: Option<&Path>, file_name: &str) -> Result<()> {
    let text = to_json(value)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(file_name);
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

/// One row per cell: the cell coordinates `x1..x{dim}` followed by the density.
pub fn write_density_csv(path: &Path, rho: &GridMeasure) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header: Vec<String> = (1..=rho.dim()).map(|k| format!("x{k}")).collect();
    header.push("density".into());
    w.write_record(&header)?;
    for i in 0..rho.len() {
        let mut row: Vec<String> = rho.point(i).iter().map(|v| format_float(*v)).collect();
        row.push(format_float(rho.density(i)?));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
