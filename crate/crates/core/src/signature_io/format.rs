use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{validate_points, Label, RawSignature, SignaturePoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatPreset {
    /// Point-count line, then `X Y T button azimuth altitude pressure`.
    Svc2004,
    /// Whitespace-separated columns named by [`DatasetLayout::column_map`].
    ColumnMapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    X,
    Y,
    T,
    PenDown,
    Pressure,
    Azimuth,
    Altitude,
    Skip,
}

impl FromStr for Column {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "x" => Column::X,
            "y" => Column::Y,
            "t" | "time" | "timestamp" => Column::T,
            "pen_down" | "pen" | "button" => Column::PenDown,
            "pressure" | "p" => Column::Pressure,
            "azimuth" => Column::Azimuth,
            "altitude" => Column::Altitude,
            "skip" | "_" => Column::Skip,
            other => return Err(Error::InvalidLayout(format!("unknown column {other:?}"))),
        })
    }
}

const SVC2004_COLUMNS: [Column; 7] = [
    Column::X,
    Column::Y,
    Column::T,
    Column::PenDown,
    Column::Azimuth,
    Column::Altitude,
    Column::Pressure,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLayout {
    pub format: FormatPreset,
    /// Only consulted for [`FormatPreset::ColumnMapped`].
    pub column_map: Vec<Column>,
    /// Whether a column-mapped file starts with a point-count line.
    pub count_header: bool,
    /// File-name pattern with `{user}` and `{index}` captures.
    pub filename_rule: String,
    pub genuine_per_user: usize,
    pub forgery_per_user: usize,
}

impl Default for DatasetLayout {
    fn default() -> Self {
        Self::svc2004()
    }
}

impl DatasetLayout {
    pub fn svc2004() -> Self {
        Self {
            format: FormatPreset::Svc2004,
            column_map: SVC2004_COLUMNS.to_vec(),
            count_header: true,
            filename_rule: "U{user}S{index}.TXT".into(),
            genuine_per_user: 20,
            forgery_per_user: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format == FormatPreset::ColumnMapped {
            for needed in [Column::X, Column::Y] {
                if !self.column_map.contains(&needed) {
                    return Err(Error::InvalidLayout(format!("column map lacks {needed:?}")));
                }
            }
            for c in &self.column_map {
                if *c != Column::Skip && self.column_map.iter().filter(|d| *d == c).count() > 1 {
                    return Err(Error::InvalidLayout(format!("column {c:?} mapped twice")));
                }
            }
        }
        if !self.filename_rule.contains("{user}") || !self.filename_rule.contains("{index}") {
            return Err(Error::InvalidLayout("filename rule needs {user} and {index}".into()));
        }
        if self.genuine_per_user == 0 {
            return Err(Error::InvalidLayout("genuine_per_user must be positive".into()));
        }
        Ok(())
    }

    fn columns(&self) -> &[Column] {
        match self.format {
            FormatPreset::Svc2004 => &SVC2004_COLUMNS,
            FormatPreset::ColumnMapped => &self.column_map,
        }
    }

    fn has_count_header(&self) -> bool {
        match self.format {
            FormatPreset::Svc2004 => true,
            FormatPreset::ColumnMapped => self.count_header,
        }
    }
}

/// Parses one capture file. User id and label are left for the caller
/// (normally [`super::load_dataset`]) to fill in.
pub fn parse_signature(bytes: &[u8], layout: &DatasetLayout) -> Result<RawSignature> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::MalformedHeader("file is not UTF-8".into()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let declared = if layout.has_count_header() {
        let (_, head) = lines.next().ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
        let n: usize = head
            .trim()
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("bad point count {:?}", head.trim())))?;
        if n < 2 {
            return Err(Error::TooFewPoints(n));
        }
        Some(n)
    } else {
        None
    };

    let columns = layout.columns();
    let has = |c: Column| columns.contains(&c);
    let mut points = Vec::with_capacity(declared.unwrap_or(0));
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != columns.len() {
            return Err(Error::FieldCount { line: line_no, expected: columns.len(), found: fields.len() });
        }
        let mut p = SignaturePoint::new(0.0, 0.0, points.len() as f64, false, 1.0);
        let mut pen = None;
        for (col, raw) in columns.iter().zip(&fields) {
            if *col == Column::Skip {
                continue;
            }
            let v: f64 = raw
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::BadValue { line: line_no, value: raw.to_string() })?;
            match col {
                Column::X => p.x = v,
                Column::Y => p.y = v,
                Column::T => p.t = v,
                Column::PenDown => pen = Some(v != 0.0),
                Column::Pressure => p.pressure = v,
                Column::Azimuth => p.azimuth = Some(v),
                Column::Altitude => p.altitude = Some(v),
                Column::Skip => unreachable!(),
            }
        }
        p.pen_down = pen.unwrap_or(p.pressure > 0.0);
        if p.pressure < 0.0 {
            return Err(Error::NegativePressure { line: line_no });
        }
        if has(Column::T) {
            if let Some(prev) = points.last().map(|q: &SignaturePoint| q.t) {
                if p.t < prev {
                    return Err(Error::NonMonotoneTime { line: line_no });
                }
            }
        }
        points.push(p);
    }

    if let Some(n) = declared {
        if points.len() != n {
            return Err(Error::MalformedHeader(format!(
                "header declares {n} points, file has {}",
                points.len()
            )));
        }
    }
    validate_points(&points)?;
    Ok(RawSignature { points, user_id: String::new(), label: Label::Genuine, source_path: String::new() })
}

/// Writes the SVC2004 text form. Values print in their shortest exact
/// decimal form, so integer captures stay integers and parsing the output
/// reproduces every coordinate bit for bit.
pub fn serialize_svc2004(sig: &RawSignature) -> String {
    let mut out = String::with_capacity(sig.points.len() * 32);
    let _ = writeln!(out, "{}", sig.points.len());
    for p in &sig.points {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            p.x,
            p.y,
            p.t,
            u8::from(p.pen_down),
            p.azimuth.unwrap_or(0.0),
            p.altitude.unwrap_or(0.0),
            p.pressure
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_svc2004_example() {
        let text = "3\n100 200 0 1 0 0 512\n110 210 10 1 0 0 520\n120 220 20 0 0 0 0";
        let sig = parse_signature(text.as_bytes(), &DatasetLayout::svc2004()).unwrap();
        assert_eq!(sig.len(), 3);
        let pen: Vec<bool> = sig.points.iter().map(|p| p.pen_down).collect();
        assert_eq!(pen, [true, true, false]);
        assert_eq!(sig.points[1].x, 110.0);
        assert_eq!(sig.points[1].t, 10.0);
        assert_eq!(sig.points[1].pressure, 520.0);
        assert_eq!(sig.points[2].azimuth, Some(0.0));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let text = "3\n100 200 0 1 0 0 512\n110 210 10 1 0 0 520\n";
        let err = parse_signature(text.as_bytes(), &DatasetLayout::svc2004()).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader(_) | Error::TooFewPoints(_)), "{err}");
    }

    #[test]
    fn header_errors() {
        let layout = DatasetLayout::svc2004();
        assert!(matches!(parse_signature(b"abc\n1 2 3 1 0 0 4", &layout), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_signature(b"", &layout), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_signature(b"1\n1 2 3 1 0 0 4", &layout), Err(Error::TooFewPoints(1))));
        assert!(matches!(
            parse_signature(b"2\n1 2 3 1 0 0\n1 2 3 1 0 0 4", &layout),
            Err(Error::FieldCount { line: 2, expected: 7, found: 6 })
        ));
        assert!(matches!(
            parse_signature(b"2\n1 2 30 1 0 0 4\n1 2 20 1 0 0 4", &layout),
            Err(Error::NonMonotoneTime { line: 3 })
        ));
        assert!(matches!(parse_signature(b"2\n1 2 3 0 0 0 0\n1 2 4 0 0 0 0", &layout), Err(Error::NoPenDown)));
    }

    #[test]
    fn column_mapped_synthesizes_missing_fields() {
        let layout = DatasetLayout {
            format: FormatPreset::ColumnMapped,
            column_map: vec![Column::X, Column::Skip, Column::Y, Column::Pressure],
            count_header: false,
            ..DatasetLayout::svc2004()
        };
        let sig = parse_signature(b"1 9 2 0.5\n3 9 4 0\n5 9 6 0.25\n", &layout).unwrap();
        let t: Vec<f64> = sig.points.iter().map(|p| p.t).collect();
        let pen: Vec<bool> = sig.points.iter().map(|p| p.pen_down).collect();
        assert_eq!(t, [0.0, 1.0, 2.0]);
        assert_eq!(pen, [true, false, true]);

        let xy_only = DatasetLayout { column_map: vec![Column::X, Column::Y], ..layout };
        let sig = parse_signature(b"1 2\n3 4\n", &xy_only).unwrap();
        assert!(sig.points.iter().all(|p| p.pressure == 1.0 && p.pen_down));
    }

    #[test]
    fn layout_validation() {
        let mut layout = DatasetLayout {
            format: FormatPreset::ColumnMapped,
            column_map: vec![Column::X, Column::T],
            ..DatasetLayout::svc2004()
        };
        assert!(layout.validate().is_err());
        layout.column_map = vec![Column::X, Column::Y, Column::X];
        assert!(layout.validate().is_err());
        layout.column_map = vec![Column::X, Column::Y];
        layout.filename_rule = "U{user}.TXT".into();
        assert!(layout.validate().is_err());
        assert!(DatasetLayout::svc2004().validate().is_ok());
    }

    fn arb_signature() -> impl Strategy<Value = RawSignature> {
        prop::collection::vec(
            (-1e5f64..1e5, -1e5f64..1e5, 0f64..50.0, any::<bool>(), 0f64..2048.0, -360f64..360.0, 0f64..90.0),
            2..80,
        )
        .prop_map(|raw| {
            let mut t = 0.0;
            let mut points: Vec<SignaturePoint> = raw
                .into_iter()
                .map(|(x, y, dt, pen, p, az, alt)| {
                    t += dt;
                    SignaturePoint { x, y, t, pen_down: pen, pressure: p, azimuth: Some(az), altitude: Some(alt) }
                })
                .collect();
            points[0].pen_down = true;
            RawSignature::new(points, "", Label::Genuine).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn svc2004_round_trip(sig in arb_signature()) {
            let layout = DatasetLayout::svc2004();
            let text = serialize_svc2004(&sig);
            let back = parse_signature(text.as_bytes(), &layout).unwrap();
            prop_assert_eq!(&back.points, &sig.points);
            prop_assert_eq!(serialize_svc2004(&back), text);
        }
    }
}
