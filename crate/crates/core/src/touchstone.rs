//! Touchstone v1 (`.sNp`) reading, interpolation and writing.
//!
//! Only version 1 files are accepted. Data are converted to complex linear
//! values on load regardless of the on-disk format, and frequencies to Hz.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::{polar_deg, CMatrix};

/// Magnitude floor used when writing exact zeros in dB format.
const DB_FLOOR: f64 = -999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FrequencyUnit {
    pub fn multiplier(self) -> f64 {
        match self {
            FrequencyUnit::Hz => 1.0,
            FrequencyUnit::KHz => 1e3,
            FrequencyUnit::MHz => 1e6,
            FrequencyUnit::GHz => 1e9,
        }
    }
}

impl fmt::Display for FrequencyUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrequencyUnit::Hz => "Hz",
            FrequencyUnit::KHz => "kHz",
            FrequencyUnit::MHz => "MHz",
            FrequencyUnit::GHz => "GHz",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterKind {
    S,
    Y,
    Z,
}

impl fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParameterKind::S => "S",
            ParameterKind::Y => "Y",
            ParameterKind::Z => "Z",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// Real / imaginary.
    RI,
    /// Linear magnitude / angle in degrees.
    MA,
    /// Magnitude in dB / angle in degrees.
    DB,
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::RI => "RI",
            DataFormat::MA => "MA",
            DataFormat::DB => "DB",
        })
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RI" => Ok(DataFormat::RI),
            "MA" => Ok(DataFormat::MA),
            "DB" => Ok(DataFormat::DB),
            other => Err(Error::InvalidParameter(format!("unknown data format {other:?}"))),
        }
    }
}

impl DataFormat {
    fn decode(self, x: f64, y: f64) -> Complex64 {
        match self {
            DataFormat::RI => Complex64::new(x, y),
            DataFormat::MA => polar_deg(x, y),
            DataFormat::DB => polar_deg(10f64.powf(x / 20.0), y),
        }
    }

    fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            DataFormat::RI => (z.re, z.im),
            DataFormat::MA => (z.norm(), z.arg().to_degrees()),
            DataFormat::DB => {
                let mag = z.norm();
                let db = if mag > 0.0 {
                    (20.0 * mag.log10()).max(DB_FLOOR)
                } else {
                    DB_FLOOR
                };
                (db, z.arg().to_degrees())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub frequency: f64,
    pub matrix: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchstoneDocument {
    pub n_ports: usize,
    pub freq_unit: FrequencyUnit,
    pub parameter_kind: ParameterKind,
    pub format: DataFormat,
    pub reference_impedance: f64,
    pub samples: Vec<Sample>,
    /// `!` comment lines, without the leading `!`.
    pub comments: Vec<String>,
}

impl TouchstoneDocument {
    /// Builds a document and checks its invariants.
    pub fn new(n_ports: usize, reference_impedance: f64, samples: Vec<Sample>) -> Result<Self> {
        let doc = Self {
            n_ports,
            freq_unit: FrequencyUnit::Hz,
            parameter_kind: ParameterKind::S,
            format: DataFormat::RI,
            reference_impedance,
            samples,
            comments: Vec::new(),
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidParameter(message);
        if self.n_ports == 0 {
            return Err(invalid("port count must be positive".into()));
        }
        if !(self.reference_impedance > 0.0) {
            return Err(invalid(format!(
                "reference impedance must be positive, got {}",
                self.reference_impedance
            )));
        }
        if self.samples.is_empty() {
            return Err(Error::NoData);
        }
        for pair in self.samples.windows(2) {
            if !(pair[1].frequency > pair[0].frequency) {
                return Err(invalid(format!(
                    "frequencies not strictly increasing at {} Hz",
                    pair[1].frequency
                )));
            }
        }
        if let Some(bad) = self
            .samples
            .iter()
            .find(|s| s.matrix.nrows() != self.n_ports || s.matrix.ncols() != self.n_ports)
        {
            return Err(invalid(format!(
                "sample at {} Hz is {}x{}, expected {n}x{n}",
                bad.frequency,
                bad.matrix.nrows(),
                bad.matrix.ncols(),
                n = self.n_ports
            )));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.frequency)
    }

    pub fn frequency_range(&self) -> (f64, f64) {
        let first = self.samples.first().map_or(f64::NAN, |s| s.frequency);
        let last = self.samples.last().map_or(f64::NAN, |s| s.frequency);
        (first, last)
    }

    /// Errors unless this document can be used as an S-parameter block.
    pub fn ensure_analysis_ready(&self) -> Result<()> {
        if self.parameter_kind != ParameterKind::S {
            return Err(Error::UnsupportedParameter(self.parameter_kind));
        }
        if (self.reference_impedance - crate::Z0).abs() > 1e-9 {
            return Err(Error::Renormalization(self.reference_impedance));
        }
        Ok(())
    }
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Touchstone {
        line,
        message: message.into(),
    }
}

struct OptionLine {
    unit: FrequencyUnit,
    kind: ParameterKind,
    format: DataFormat,
    resistance: f64,
}

fn parse_option_line(body: &str, line: usize) -> Result<OptionLine> {
    let mut opts = OptionLine {
        unit: FrequencyUnit::GHz,
        kind: ParameterKind::S,
        format: DataFormat::MA,
        resistance: 50.0,
    };
    let mut tokens = body.split_whitespace();
    while let Some(token) = tokens.next() {
        match token.to_ascii_uppercase().as_str() {
            "HZ" => opts.unit = FrequencyUnit::Hz,
            "KHZ" => opts.unit = FrequencyUnit::KHz,
            "MHZ" => opts.unit = FrequencyUnit::MHz,
            "GHZ" => opts.unit = FrequencyUnit::GHz,
            "S" => opts.kind = ParameterKind::S,
            "Y" => opts.kind = ParameterKind::Y,
            "Z" => opts.kind = ParameterKind::Z,
            "G" | "H" => {
                return Err(syntax(line, format!("{token} parameters are not supported")));
            }
            "RI" => opts.format = DataFormat::RI,
            "MA" => opts.format = DataFormat::MA,
            "DB" => opts.format = DataFormat::DB,
            "R" => {
                let value = tokens
                    .next()
                    .ok_or_else(|| syntax(line, "option line: R without a value"))?;
                opts.resistance = value
                    .parse()
                    .map_err(|_| syntax(line, format!("option line: bad resistance {value:?}")))?;
                if !(opts.resistance > 0.0) {
                    return Err(syntax(line, "option line: resistance must be positive"));
                }
            }
            _ => return Err(syntax(line, format!("option line: unexpected token {token:?}"))),
        }
    }
    Ok(opts)
}

/// Parses Touchstone v1 text holding `n_ports`-port data.
///
/// A data record starts on a line with an odd number of values (frequency
/// plus value pairs); continuation lines of wrapped records carry an even
/// number. Two-port records are in `S11 S21 S12 S22` order, all others are
/// row-major.
pub fn parse_touchstone(text: &str, n_ports: usize) -> Result<TouchstoneDocument> {
    if n_ports == 0 {
        return Err(Error::InvalidParameter("port count must be positive".into()));
    }
    let per_record = 1 + 2 * n_ports * n_ports;
    let mut options: Option<OptionLine> = None;
    let mut comments = Vec::new();
    let mut records: Vec<(usize, Vec<f64>)> = Vec::new();

    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let (content, comment) = match raw.find('!') {
            Some(pos) => (&raw[..pos], Some(&raw[pos + 1..])),
            None => (raw, None),
        };
        if let Some(comment) = comment {
            comments.push(comment.trim_end().to_string());
        }
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            return Err(syntax(
                line_no,
                format!(
                    "Touchstone v2 keyword {} is not supported",
                    content.split_whitespace().next().unwrap_or(content)
                ),
            ));
        }
        if let Some(body) = content.strip_prefix('#') {
            if options.is_some() {
                return Err(syntax(line_no, "second option line"));
            }
            if !records.is_empty() {
                return Err(syntax(line_no, "option line after data"));
            }
            options = Some(parse_option_line(body, line_no)?);
            continue;
        }
        let values = content
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| syntax(line_no, format!("bad number {t:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() % 2 == 1 {
            records.push((line_no, values));
        } else {
            match records.last_mut() {
                Some((_, record)) if record.len() < per_record => record.extend(values),
                _ => {
                    return Err(syntax(
                        line_no,
                        format!("wrong value count: {} values cannot start a record", values.len()),
                    ))
                }
            }
        }
    }

    let options = options.unwrap_or(OptionLine {
        unit: FrequencyUnit::GHz,
        kind: ParameterKind::S,
        format: DataFormat::MA,
        resistance: 50.0,
    });
    if records.is_empty() {
        return Err(Error::NoData);
    }

    let mut samples = Vec::with_capacity(records.len());
    for (line_no, values) in records {
        if values.len() != per_record {
            return Err(syntax(
                line_no,
                format!(
                    "wrong value count per record: expected {per_record} for {n_ports} ports, found {}",
                    values.len()
                ),
            ));
        }
        let frequency = values[0] * options.unit.multiplier();
        let mut matrix = CMatrix::zeros(n_ports, n_ports);
        for (k, pair) in values[1..].chunks_exact(2).enumerate() {
            let (row, col) = if n_ports == 2 {
                // S11 S21 S12 S22
                (k % 2, k / 2)
            } else {
                (k / n_ports, k % n_ports)
            };
            matrix[(row, col)] = options.format.decode(pair[0], pair[1]);
        }
        if let Some(prev) = samples.last().map(|s: &Sample| s.frequency) {
            if !(frequency > prev) {
                return Err(syntax(line_no, format!("non-monotonic frequency {frequency} Hz")));
            }
        }
        samples.push(Sample { frequency, matrix });
    }

    Ok(TouchstoneDocument {
        n_ports,
        freq_unit: options.unit,
        parameter_kind: options.kind,
        format: options.format,
        reference_impedance: options.resistance,
        samples,
        comments,
    })
}

/// Port count implied by a `.sNp` file extension.
pub fn ports_from_extension(path: &std::path::Path) -> Option<usize> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    let digits = ext.strip_prefix('s')?.strip_suffix('p')?;
    digits.parse().ok().filter(|&n| n > 0)
}

pub fn read_touchstone(path: &std::path::Path, n_ports: Option<usize>) -> Result<TouchstoneDocument> {
    let n = match n_ports.or_else(|| ports_from_extension(path)) {
        Some(n) => n,
        None => {
            return Err(Error::InvalidParameter(format!(
                "cannot infer port count from {}",
                path.display()
            )))
        }
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    parse_touchstone(&text, n)
}

/// Element-wise linear interpolation on real and imaginary parts.
pub fn interpolate_at(doc: &TouchstoneDocument, f: f64) -> Result<CMatrix> {
    if doc.samples.is_empty() {
        return Err(Error::NoData);
    }
    let (min, max) = doc.frequency_range();
    if !(f >= min && f <= max) {
        return Err(Error::FrequencyOutOfRange { freq: f, min, max });
    }
    let upper = doc.samples.partition_point(|s| s.frequency < f);
    let hi = &doc.samples[upper];
    if hi.frequency == f || upper == 0 {
        return Ok(hi.matrix.clone());
    }
    let lo = &doc.samples[upper - 1];
    let t = (f - lo.frequency) / (hi.frequency - lo.frequency);
    Ok(lo.matrix.zip_map(&hi.matrix, |a, b| a + (b - a) * t))
}

fn format_number(x: f64) -> String {
    // Display for f64 is positional and round-trips exactly.
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

/// Serializes `doc` in the requested data format.
pub fn write_touchstone(doc: &TouchstoneDocument, format: DataFormat) -> Result<String> {
    if doc.samples.is_empty() {
        return Err(Error::NoData);
    }
    doc.validate()?;
    let n = doc.n_ports;
    let mut out = String::new();
    for comment in &doc.comments {
        let _ = writeln!(out, "!{comment}");
    }
    let _ = writeln!(
        out,
        "# {} {} {} R {}",
        doc.freq_unit,
        doc.parameter_kind,
        format,
        format_number(doc.reference_impedance)
    );
    let mult = doc.freq_unit.multiplier();
    for sample in &doc.samples {
        let order: Vec<(usize, usize)> = if n == 2 {
            vec![(0, 0), (1, 0), (0, 1), (1, 1)]
        } else {
            (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).collect()
        };
        let mut line = format_number(sample.frequency / mult);
        for (k, &(r, c)) in order.iter().enumerate() {
            // Wrap n>=3 rows at four pairs per line and start each matrix row afresh.
            if n >= 3 && k > 0 && (k % n == 0 || (k % n).is_multiple_of(4)) {
                let _ = writeln!(out, "{line}");
                line = String::new();
            }
            let (x, y) = format.encode(sample.matrix[(r, c)]);
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&format_number(x));
            line.push(' ');
            line.push_str(&format_number(y));
        }
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ma_two_port_converted() {
        let text = "! test\n# MHz S MA R 50\n100 0.5 45 0.1 0 0.2 90 0.3 -90\n";
        let doc = parse_touchstone(text, 2).unwrap();
        assert_eq!(doc.samples.len(), 1);
        let s = &doc.samples[0];
        assert_eq!(s.frequency, 1.0e8);
        assert_abs_diff_eq!(s.matrix[(0, 0)].re, 0.353_553_390_593_273_8, epsilon = 1e-12);
        assert_abs_diff_eq!(s.matrix[(0, 0)].im, 0.353_553_390_593_273_8, epsilon = 1e-12);
        // S21 precedes S12 in two-port records.
        assert_abs_diff_eq!(s.matrix[(1, 0)].re, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(s.matrix[(0, 1)].im, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.matrix[(1, 1)].im, -0.3, epsilon = 1e-15);
    }

    #[test]
    fn ri_three_port_wrapped() {
        let text = "# GHz S RI R 50\n1 0 0 1 0 1 0\n0 0 0 0 0 0\n1 0 0 0 0 0\n";
        let doc = parse_touchstone(text, 3).unwrap();
        let m = &doc.samples[0].matrix;
        assert_eq!(doc.samples[0].frequency, 1e9);
        assert_eq!(m[(0, 0)], c(0.0, 0.0));
        assert_eq!(m[(0, 1)], c(1.0, 0.0));
        assert_eq!(m[(0, 2)], c(1.0, 0.0));
        assert_eq!(m[(1, 0)], c(0.0, 0.0));
        assert_eq!(m[(2, 0)], c(1.0, 0.0));
    }

    #[test]
    fn db_format_converted() {
        let doc = parse_touchstone("# Hz S DB R 50\n1 -6.020599913279624 180\n", 1).unwrap();
        let z = doc.samples[0].matrix[(0, 0)];
        assert_abs_diff_eq!(z.re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn y_parameters_parse_but_refuse_analysis() {
        let doc = parse_touchstone("# HZ Y RI R 50\n1 0.1 0\n", 1).unwrap();
        assert_eq!(doc.parameter_kind, ParameterKind::Y);
        assert!(matches!(
            doc.ensure_analysis_ready(),
            Err(Error::UnsupportedParameter(ParameterKind::Y))
        ));
    }

    #[test]
    fn non_fifty_ohm_refused_for_analysis() {
        let doc = parse_touchstone("# HZ S RI R 75\n1 0.1 0\n", 1).unwrap();
        assert!(matches!(doc.ensure_analysis_ready(), Err(Error::Renormalization(_))));
    }

    #[test]
    fn malformed_option_line() {
        let err = parse_touchstone("# MHz S XX R 50\n1 0 0\n", 1).unwrap_err();
        assert!(matches!(err, Error::Touchstone { line: 1, .. }), "{err}");
        assert!(parse_touchstone("# MHz S RI R\n1 0 0\n", 1).is_err());
    }

    #[test]
    fn non_monotonic_frequency() {
        let err = parse_touchstone("# Hz S RI\n2 0 0\n1 0 0\n", 1).unwrap_err();
        assert!(err.to_string().contains("non-monotonic"), "{err}");
    }

    #[test]
    fn wrong_value_count() {
        let err = parse_touchstone("# Hz S RI\n1 0 0 0\n", 1).unwrap_err();
        assert!(err.to_string().contains("wrong value count"), "{err}");
        let err = parse_touchstone("# Hz S RI\n1 0 0 0 0 0 0\n", 2).unwrap_err();
        assert!(err.to_string().contains("wrong value count per record"), "{err}");
    }

    #[test]
    fn v2_keywords_rejected() {
        let err = parse_touchstone("[Version] 2.0\n# Hz S RI\n1 0 0\n", 1).unwrap_err();
        assert!(err.to_string().contains("v2"), "{err}");
    }

    #[test]
    fn empty_document() {
        assert!(matches!(
            parse_touchstone("# Hz S RI\n! nothing\n", 1),
            Err(Error::NoData)
        ));
        let doc = TouchstoneDocument {
            n_ports: 1,
            freq_unit: FrequencyUnit::Hz,
            parameter_kind: ParameterKind::S,
            format: DataFormat::RI,
            reference_impedance: 50.0,
            samples: vec![],
            comments: vec![],
        };
        let err = write_touchstone(&doc, DataFormat::RI).unwrap_err();
        assert_eq!(err.to_string(), "no data rows");
    }

    fn two_sample_doc() -> TouchstoneDocument {
        TouchstoneDocument::new(
            1,
            50.0,
            vec![
                Sample {
                    frequency: 90e6,
                    matrix: CMatrix::from_element(1, 1, c(0.2, 0.0)),
                },
                Sample {
                    frequency: 110e6,
                    matrix: CMatrix::from_element(1, 1, c(0.4, 0.2)),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn interpolation_midpoint_and_grid() {
        let doc = two_sample_doc();
        let mid = interpolate_at(&doc, 100e6).unwrap()[(0, 0)];
        assert_abs_diff_eq!(mid.re, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(mid.im, 0.1, epsilon = 1e-15);
        assert_eq!(interpolate_at(&doc, 90e6).unwrap(), doc.samples[0].matrix);
        assert_eq!(interpolate_at(&doc, 110e6).unwrap(), doc.samples[1].matrix);
        assert!(matches!(
            interpolate_at(&doc, 120e6),
            Err(Error::FrequencyOutOfRange { .. })
        ));
        assert!(interpolate_at(&doc, 80e6).is_err());
    }

    #[test]
    fn interpolation_zero_to_one() {
        let doc = TouchstoneDocument::new(
            1,
            50.0,
            vec![
                Sample {
                    frequency: 1.0,
                    matrix: CMatrix::from_element(1, 1, c(0.0, 0.0)),
                },
                Sample {
                    frequency: 3.0,
                    matrix: CMatrix::from_element(1, 1, c(1.0, 0.0)),
                },
            ],
        )
        .unwrap();
        assert_eq!(interpolate_at(&doc, 2.0).unwrap()[(0, 0)], c(0.5, 0.0));
    }

    #[test]
    fn ma_ri_ma_round_trip() {
        let text = "# MHz S MA R 50\n100 0.5 45 0.25 -170 0.25 -170 0.9 179.5\n";
        let doc = parse_touchstone(text, 2).unwrap();
        let ri = write_touchstone(&doc, DataFormat::RI).unwrap();
        let back = parse_touchstone(&ri, 2).unwrap();
        let ma = write_touchstone(&back, DataFormat::MA).unwrap();
        let again = parse_touchstone(&ma, 2).unwrap();
        for (a, b) in doc.samples[0].matrix.iter().zip(again.samples[0].matrix.iter()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-12);
            let dphase = (a.arg() - b.arg()).to_degrees().rem_euclid(360.0);
            assert!(!(1e-9..=360.0 - 1e-9).contains(&dphase));
        }
    }

    #[test]
    fn comments_written_as_header() {
        let mut doc = two_sample_doc();
        doc.comments = vec![" measured".into(), " fixture".into()];
        let text = write_touchstone(&doc, DataFormat::MA).unwrap();
        assert!(text.starts_with("! measured\n! fixture\n# Hz S MA R 50\n"), "{text}");
    }

    #[test]
    fn extension_port_count() {
        use std::path::Path;
        assert_eq!(ports_from_extension(Path::new("a/hyb.s3p")), Some(3));
        assert_eq!(ports_from_extension(Path::new("x.S12P")), Some(12));
        assert_eq!(ports_from_extension(Path::new("x.txt")), None);
    }
}
