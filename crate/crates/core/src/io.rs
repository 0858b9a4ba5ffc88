//! CSV output. Every numeric field is written as `%.12e` (C printf style).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::spectrum::SpectrumResult;

/// `x` formatted like C's `%.12e`, e.g. `9.428000000000e-01`.
pub fn fmt_sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Writes a header line and rows of already formatted fields.
pub fn write_csv<W: Write>(out: &mut W, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `index, re_lambda, im_lambda, residual`, one eigenpair per row (1-based index).
pub fn write_spectrum_csv<W: Write>(out: &mut W, spectrum: &SpectrumResult) -> Result<()> {
    let header = ["index", "re_lambda", "im_lambda", "residual"].map(String::from);
    let rows = spectrum.eigenvalues.iter().zip(&spectrum.residuals).enumerate().map(|(j, (z, r))| {
        vec![(j + 1).to_string(), fmt_sci(z.re), fmt_sci(z.im), fmt_sci(*r)]
    });
    write_csv(out, &header, rows)
}

/// One node (or box center) per row: coordinates, raw and `f_Q`-weighted values
/// of eigenvector `j` (0-based).
pub fn write_eigenvector_csv<W: Write>(out: &mut W, spectrum: &SpectrumResult, j: usize) -> Result<()> {
    let layout = spectrum.layout;
    let mut header: Vec<String> = (0..layout.dim).map(|a| format!("q{a}")).collect();
    header.push("v_raw".into());
    header.push("v_weighted".into());
    let rows = (0..layout.len()).map(|i| {
        let mut row: Vec<String> = layout.center(i).into_iter().map(fmt_sci).collect();
        row.push(fmt_sci(spectrum.eigenvectors_nodal[(i, j)]));
        row.push(fmt_sci(spectrum.eigenvectors_weighted[(i, j)]));
        row
    });
    write_csv(out, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_style_exponent() {
        assert_eq!(fmt_sci(0.9428), "9.428000000000e-01");
        assert_eq!(fmt_sci(1.0), "1.000000000000e+00");
        assert_eq!(fmt_sci(-123456.0), "-1.234560000000e+05");
        assert_eq!(fmt_sci(0.0), "0.000000000000e+00");
        assert_eq!(fmt_sci(1e-300), "1.000000000000e-300");
        assert_eq!(fmt_sci(f64::NAN), "nan");
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["a".into(), "b".into()], vec![vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,2\n");
    }
}
