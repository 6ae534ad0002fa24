//! On-disk formats: action programs and project configs as JSON with degrees
//! at the boundary, centerlines as CSV, chord measurements as plain lines.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::geom::Vec3;
use crate::machine::MachineLimits;
use crate::wire_model::{ActionProgram, ActionStep, BendLaw, Centerline, WireSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Degree value that converts back to exactly `rad`.
///
/// Among the doubles near `rad.to_degrees()` whose `to_radians()` equals
/// `rad`, picks the one with the shortest decimal form (then the smallest).
/// When no such double exists the nearest degree value is returned.
pub fn exact_degrees(rad: f64) -> f64 {
    let d0 = rad.to_degrees();
    if !d0.is_finite() {
        return d0;
    }
    let mut best: Option<(usize, f64)> = None;
    for offset in -8i64..=8 {
        let d = nudge(d0, offset);
        if d.to_radians() == rad {
            let len = d.to_string().len();
            if best.is_none_or(|(bl, bd)| len < bl || (len == bl && d < bd)) {
                best = Some((len, d));
            }
        }
    }
    best.map_or(d0, |(_, d)| d)
}

fn nudge(x: f64, ulps: i64) -> f64 {
    let mut y = x;
    for _ in 0..ulps.unsigned_abs() {
        y = if ulps > 0 { y.next_up() } else { y.next_down() };
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Units {
    angle: String,
    length: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            angle: "deg".into(),
            length: "mm".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDoc {
    diameter_mm: f64,
    shapeable_length_mm: f64,
    total_length_mm: f64,
    segment_length_mm: f64,
    segments: usize,
}

impl From<&WireSpec> for WireDoc {
    fn from(w: &WireSpec) -> Self {
        WireDoc {
            diameter_mm: w.diameter,
            shapeable_length_mm: w.shapeable_length,
            total_length_mm: w.total_length,
            segment_length_mm: w.segment_length,
            segments: w.segments,
        }
    }
}

impl WireDoc {
    fn to_spec(&self) -> Result<WireSpec> {
        WireSpec::new(
            self.diameter_mm,
            self.shapeable_length_mm,
            self.total_length_mm,
            self.segment_length_mm,
            self.segments,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    k: usize,
    phi_deg: f64,
    beta: f64,
    delta_mm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramDoc {
    schema_version: u32,
    units: Units,
    wire: WireDoc,
    steps: Vec<StepDoc>,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn check_header(version: u32, units: &Units) -> Result<()> {
    if version != SCHEMA_VERSION {
        return invalid(format!(
            "unsupported schema_version {} (expected {})",
            version, SCHEMA_VERSION
        ));
    }
    if *units != Units::default() {
        return invalid("units must be deg and mm");
    }
    Ok(())
}

fn to_pretty<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

pub fn program_to_json(p: &ActionProgram) -> String {
    to_pretty(&ProgramDoc {
        schema_version: SCHEMA_VERSION,
        units: Units::default(),
        wire: WireDoc::from(&p.wire),
        steps: p
            .steps
            .iter()
            .map(|s| StepDoc {
                k: s.k,
                phi_deg: exact_degrees(s.phi),
                beta: s.beta,
                delta_mm: s.delta,
            })
            .collect(),
    })
}

pub fn program_from_json(text: &str) -> Result<ActionProgram> {
    let doc: ProgramDoc = serde_json::from_str(text).map_err(json_error)?;
    check_header(doc.schema_version, &doc.units)?;
    let steps = doc
        .steps
        .iter()
        .map(|s| ActionStep {
            k: s.k,
            phi: s.phi_deg.to_radians(),
            beta: s.beta,
            delta: s.delta_mm,
        })
        .collect();
    ActionProgram::new(doc.wire.to_spec()?, steps)
}

/// SHA-256 of the canonical JSON form, hex encoded.
pub fn program_digest(p: &ActionProgram) -> String {
    hex::encode(Sha256::digest(program_to_json(p).as_bytes()))
}

pub const CENTERLINE_HEADER: [&str; 4] = ["k", "x_mm", "y_mm", "z_mm"];

pub fn centerline_to_csv(c: &Centerline) -> String {
    let mut out = CENTERLINE_HEADER.join(",");
    out.push('\n');
    for (k, p) in c.points.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", k, p.x, p.y, p.z));
    }
    out
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        column: 1,
        message: e.to_string(),
    }
}

/// Reads a centerline; rows must be numbered `k = 0, 1, ...` from the base.
pub fn centerline_from_csv(text: &str) -> Result<Centerline> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CENTERLINE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected header {}", CENTERLINE_HEADER.join(",")),
        });
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let field = |col: usize| -> Result<&str> {
            rec.get(col).ok_or_else(|| Error::Parse {
                line,
                column: col + 1,
                message: "missing field".into(),
            })
        };
        let k: usize = field(0)?.parse().map_err(|_| Error::Parse {
            line,
            column: 1,
            message: format!("bad joint index `{}`", &rec[0]),
        })?;
        if k != i {
            return Err(Error::Parse {
                line,
                column: 1,
                message: format!("expected joint index {}, found {}", i, k),
            });
        }
        let mut xyz = [0.0; 3];
        for (c, v) in xyz.iter_mut().enumerate() {
            let s = field(c + 1)?;
            *v = s.parse().map_err(|_| Error::Parse {
                line,
                column: c + 2,
                message: format!("bad number `{}`", s),
            })?;
        }
        points.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }
    Centerline::new(points)
}

/// One chord length (mm) per line; blank lines and `#` comments are skipped.
pub fn chords_from_text(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let t = body.trim();
        if t.is_empty() {
            continue;
        }
        let column = body.find(t).unwrap_or(0) + 1;
        let v: f64 = t.parse().map_err(|_| Error::Parse {
            line: i + 1,
            column,
            message: format!("bad chord length `{}`", t),
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return invalid("no chord measurements");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub wire: WireSpec,
    pub bend_law: BendLaw,
    pub machine: MachineLimits,
}

impl Default for ProjectConfig {
    /// Default wire, the stock machine, and a single-entry law at `beta = 0.8`
    /// solved from an 18.7 mm chord over ten 2 mm segments.
    fn default() -> Self {
        let wire = WireSpec::default();
        let cal = crate::calibration::solve_theta(&crate::calibration::CalibrationInput {
            segment_length: wire.segment_length,
            segments: wire.segments,
            measured_chords: vec![18.7],
        })
        .expect("default calibration is in range");
        ProjectConfig {
            wire,
            bend_law: BendLaw::single(0.8, cal.theta_star).expect("valid law"),
            machine: MachineLimits::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawEntryDoc {
    beta: f64,
    theta_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    schema_version: u32,
    units: Units,
    wire: WireDoc,
    bend_law: Vec<LawEntryDoc>,
    machine: MachineLimits,
}

pub fn config_to_json(c: &ProjectConfig) -> String {
    to_pretty(&ConfigDoc {
        schema_version: SCHEMA_VERSION,
        units: Units::default(),
        wire: WireDoc::from(&c.wire),
        bend_law: c
            .bend_law
            .table()
            .iter()
            .map(|&(beta, theta)| LawEntryDoc {
                beta,
                theta_deg: exact_degrees(theta),
            })
            .collect(),
        machine: c.machine,
    })
}

pub fn config_from_json(text: &str) -> Result<ProjectConfig> {
    let doc: ConfigDoc = serde_json::from_str(text).map_err(json_error)?;
    check_header(doc.schema_version, &doc.units)?;
    doc.machine.validate()?;
    let law = BendLaw::new(
        doc.bend_law
            .iter()
            .map(|e| (e.beta, e.theta_deg.to_radians()))
            .collect(),
    )?;
    Ok(ProjectConfig {
        wire: doc.wire.to_spec()?,
        bend_law: law,
        machine: doc.machine,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ActionProgram {
        ActionProgram::from_rolls(
            WireSpec::default(),
            &[0.0, 45f64.to_radians(), PI_RAD, -0.3],
            &[0.8, 0.0, 0.55, 1.0],
            &[2.0, 2.0, 1.5, 2.25],
        )
        .unwrap()
    }

    const PI_RAD: f64 = std::f64::consts::PI;

    #[test]
    fn degrees_convert_back_exactly() {
        for d in [0.0, 45.0, 90.0, 180.0, -135.0, 7.2632, 1e-7, 359.9] {
            let r: f64 = f64::to_radians(d);
            assert_eq!(exact_degrees(r).to_radians(), r);
        }
        assert_eq!(exact_degrees(45f64.to_radians()), 45.0);
    }

    #[test]
    fn program_json_round_trip() {
        let p = sample();
        let text = program_to_json(&p);
        assert!(text.contains("\"schema_version\": 1"));
        assert!(text.contains("\"phi_deg\": 45.0"));
        let back = program_from_json(&text).unwrap();
        assert_eq!(program_to_json(&back), text);
        for (a, b) in back.steps.iter().zip(&p.steps) {
            assert_eq!(a.beta, b.beta);
            assert_eq!(a.delta, b.delta);
            assert!((a.phi - b.phi).abs() <= f64::EPSILON * b.phi.abs().max(1.0));
        }
    }

    #[test]
    fn program_json_errors_carry_position() {
        let err = program_from_json("{\n  \"schema_version\": 1,\n  oops\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let text = program_to_json(&sample()).replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(program_from_json(&text), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn digest_is_content_hash() {
        let d = program_digest(&sample());
        assert_eq!(d.len(), 64);
        assert_eq!(d, program_digest(&sample()));
        let mut other = sample();
        other.steps[0].beta = 0.7;
        assert_ne!(d, program_digest(&other));
    }

    #[test]
    fn centerline_round_trip_and_errors() {
        let c = Centerline::new(vec![
            Vec3::zeros(),
            Vec3::new(0.1, -0.2, 2.0),
            Vec3::new(1.0 / 3.0, 0.0, 3.9),
        ])
        .unwrap();
        let text = centerline_to_csv(&c);
        assert!(text.starts_with("k,x_mm,y_mm,z_mm\n0,0,0,0\n"));
        let back = centerline_from_csv(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(centerline_to_csv(&back), text);

        let err = centerline_from_csv("k,x_mm,y_mm,z_mm\n0,0,0,0\n1,0,zz,2\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse { line: 3, column: 3, message: "bad number `zz`".into() }
        );
        let err = centerline_from_csv("k,x,y,z\n0,0,0,0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = centerline_from_csv("k,x_mm,y_mm,z_mm\n0,0,0,0\n2,0,0,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, column: 1, .. }));
    }

    #[test]
    fn chords_parse() {
        assert_eq!(chords_from_text("18.49\n18.7\n\n# note\n18.91\n").unwrap(), vec![18.49, 18.7, 18.91]);
        let err = chords_from_text("18.5\n  x1\n").unwrap_err();
        assert_eq!(err, Error::Parse { line: 2, column: 3, message: "bad chord length `x1`".into() });
    }

    #[test]
    fn config_round_trip() {
        let c = ProjectConfig::default();
        assert!((c.bend_law.theta_max() - 0.126_767_337_077_829_4).abs() < 1e-15);
        let text = config_to_json(&c);
        let back = config_from_json(&text).unwrap();
        assert_eq!(config_to_json(&back), text);
        assert_eq!(back.wire, c.wire);
        assert_eq!(back.machine, c.machine);
    }
}
