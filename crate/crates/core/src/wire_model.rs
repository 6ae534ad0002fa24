//! Forward kinematics of a shaped guidewire tip.
//!
//! A program is stored in shaping order: step `k = 1` bends the most distal
//! segment, and each later step bends the segment just proximal to the
//! previous one. Geometry is rebuilt in the opposite (geometric) order, from
//! the straight shaft at the origin out to the tip.
//!
//! Roll is stored as the absolute nozzle angle `phi_k`. Between two
//! geometrically adjacent segments the bending plane turns by the difference
//! of their commanded rolls; the most proximal shaped segment is referenced
//! to a roll of zero. Each bent joint applies `R <- R * Rz(dphi) * Rx(theta)`
//! before the segment is laid down along `R * e3`.

use crate::error::{invalid, Result};
use crate::geom::{e3, Rot3, Vec3};

/// Slack allowed when comparing accumulated lengths.
const LENGTH_EPS: f64 = 1e-9;

/// Physical description of the wire and its segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct WireSpec {
    pub diameter: f64,
    pub shapeable_length: f64,
    pub total_length: f64,
    pub segment_length: f64,
    pub segments: usize,
}

impl WireSpec {
    pub fn new(
        diameter: f64,
        shapeable_length: f64,
        total_length: f64,
        segment_length: f64,
        segments: usize,
    ) -> Result<Self> {
        let w = WireSpec {
            diameter,
            shapeable_length,
            total_length,
            segment_length,
            segments,
        };
        w.validate()?;
        Ok(w)
    }

    /// Same wire as `self` with a different discretization.
    pub fn with_segments(&self, segment_length: f64, segments: usize) -> Result<Self> {
        WireSpec::new(
            self.diameter,
            self.shapeable_length,
            self.total_length,
            segment_length,
            segments,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.diameter,
            self.shapeable_length,
            self.total_length,
            self.segment_length,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return invalid("wire dimensions must be finite");
        }
        if self.segments < 1 {
            return invalid("wire must have at least one segment");
        }
        if self.segment_length <= 0.0 || self.diameter <= 0.0 {
            return invalid("segment length and diameter must be positive");
        }
        if self.segments as f64 * self.segment_length > self.shapeable_length + LENGTH_EPS {
            return invalid(format!(
                "n*l = {} exceeds shapeable length {}",
                self.segments as f64 * self.segment_length,
                self.shapeable_length
            ));
        }
        if self.shapeable_length > self.total_length {
            return invalid("shapeable length exceeds total length");
        }
        Ok(())
    }

    /// Length of the discretized shaped region, `n * l`.
    pub fn shaped_length(&self) -> f64 {
        self.segments as f64 * self.segment_length
    }
}

impl Default for WireSpec {
    /// 0.64 mm spring guidewire with a 20 mm shapeable tip in ten 2 mm segments.
    fn default() -> Self {
        WireSpec {
            diameter: 0.64,
            shapeable_length: 20.0,
            total_length: 680.0,
            segment_length: 2.0,
            segments: 10,
        }
    }
}

/// One roll-bend-advance cycle.
///
/// `beta == 0` means the jaws do not pinch and the segment stays straight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionStep {
    /// Shaping index, 1 = most distal segment.
    pub k: usize,
    /// Absolute commanded nozzle roll, radians.
    pub phi: f64,
    /// Normalized pinch command in `[0, 1]`.
    pub beta: f64,
    /// Advance after the bend, mm.
    pub delta: f64,
}

impl ActionStep {
    pub fn is_pinched(&self) -> bool {
        self.beta > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionProgram {
    pub wire: WireSpec,
    pub steps: Vec<ActionStep>,
}

impl ActionProgram {
    pub fn new(wire: WireSpec, steps: Vec<ActionStep>) -> Result<Self> {
        let p = ActionProgram { wire, steps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.wire.validate()?;
        if self.steps.len() > self.wire.segments {
            return invalid(format!(
                "{} steps exceed the wire's {} segments",
                self.steps.len(),
                self.wire.segments
            ));
        }
        let mut fed = 0.0;
        for (i, s) in self.steps.iter().enumerate() {
            if s.k != i + 1 {
                return invalid(format!("step {} has index k = {}, expected {}", i + 1, s.k, i + 1));
            }
            if !s.phi.is_finite() {
                return invalid(format!("step {}: roll must be finite", s.k));
            }
            if !(0.0..=1.0).contains(&s.beta) {
                return invalid(format!("step {}: beta {} outside [0, 1]", s.k, s.beta));
            }
            if !(s.delta > 0.0) || !s.delta.is_finite() {
                return invalid(format!("step {}: advance must be positive", s.k));
            }
            fed += s.delta;
        }
        if fed > self.wire.shapeable_length + LENGTH_EPS {
            return invalid(format!(
                "total advance {} exceeds shapeable length {}",
                fed, self.wire.shapeable_length
            ));
        }
        Ok(())
    }

    /// Per-step roll increments in shaping order, `phi_k - phi_{k-1}` with `phi_0 = 0`.
    pub fn roll_increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.steps
            .iter()
            .map(|s| {
                let d = s.phi - prev;
                prev = s.phi;
                d
            })
            .collect()
    }

    /// Builds a program from absolute rolls given in shaping order.
    pub fn from_rolls(wire: WireSpec, rolls: &[f64], betas: &[f64], deltas: &[f64]) -> Result<Self> {
        if rolls.len() != betas.len() || rolls.len() != deltas.len() {
            return invalid("roll, beta and advance lists differ in length");
        }
        let steps = rolls
            .iter()
            .zip(betas)
            .zip(deltas)
            .enumerate()
            .map(|(i, ((&phi, &beta), &delta))| ActionStep {
                k: i + 1,
                phi,
                beta,
                delta,
            })
            .collect();
        ActionProgram::new(wire, steps)
    }
}

/// Piecewise-linear map from pinch command to realized bend angle (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct BendLaw {
    table: Vec<(f64, f64)>,
}

impl BendLaw {
    pub fn new(table: Vec<(f64, f64)>) -> Result<Self> {
        if table.is_empty() {
            return invalid("bend law table is empty");
        }
        for &(b, t) in &table {
            if !b.is_finite() || !t.is_finite() {
                return invalid("bend law entries must be finite");
            }
            if !(0.0..=1.0).contains(&b) {
                return invalid(format!("bend law beta {} outside [0, 1]", b));
            }
            if t < 0.0 {
                return invalid("bend law angles must be non-negative");
            }
        }
        for w in table.windows(2) {
            if w[1].0 <= w[0].0 {
                return invalid("bend law betas must be strictly increasing");
            }
            if w[1].1 < w[0].1 {
                return invalid("bend law angles must be non-decreasing");
            }
        }
        Ok(BendLaw { table })
    }

    /// Calibrated law with a single entry.
    pub fn single(beta: f64, theta: f64) -> Result<Self> {
        BendLaw::new(vec![(beta, theta)])
    }

    pub fn table(&self) -> &[(f64, f64)] {
        &self.table
    }

    /// The largest commanded entry, used as the "pinch on" setting.
    pub fn nominal(&self) -> (f64, f64) {
        *self.table.last().expect("table is non-empty")
    }

    pub fn theta_max(&self) -> f64 {
        self.nominal().1
    }

    pub fn theta_min(&self) -> f64 {
        self.table[0].1
    }

    fn eval(&self, beta: f64) -> f64 {
        let t = &self.table;
        if beta <= t[0].0 {
            return t[0].1;
        }
        let last = t[t.len() - 1];
        if beta >= last.0 {
            return last.1;
        }
        let i = t.partition_point(|&(b, _)| b <= beta) - 1;
        let (b0, t0) = t[i];
        let (b1, t1) = t[i + 1];
        t0 + (beta - b0) / (b1 - b0) * (t1 - t0)
    }

    /// Smallest pinch command realizing `theta`, clamped to the table range.
    pub fn invert(&self, theta: f64) -> f64 {
        let t = &self.table;
        if theta <= t[0].1 {
            return t[0].0;
        }
        let last = t[t.len() - 1];
        if theta >= last.1 {
            // first entry reaching the maximum
            let i = t.partition_point(|&(_, th)| th < last.1);
            return t[i].0;
        }
        let i = t.partition_point(|&(_, th)| th < theta);
        let (b0, t0) = t[i - 1];
        let (b1, t1) = t[i];
        b0 + (theta - t0) / (t1 - t0) * (b1 - b0)
    }

    /// Bend realized by a step: zero for an open pinch.
    pub fn theta_for(&self, beta: f64) -> f64 {
        if beta > 0.0 {
            self.eval(beta)
        } else {
            0.0
        }
    }
}

pub fn apply_bend_law(law: &BendLaw, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return invalid(format!("beta {} outside [0, 1]", beta));
    }
    Ok(law.eval(beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameTag {
    #[default]
    Base,
    Measured,
}

/// Ordered joint positions, base joint first, millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    pub points: Vec<Vec3>,
    pub frame: FrameTag,
}

impl Centerline {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        Centerline::with_frame(points, FrameTag::Base)
    }

    pub fn with_frame(points: Vec<Vec3>, frame: FrameTag) -> Result<Self> {
        if points.len() < 2 {
            return invalid("a centerline needs at least two points");
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return invalid("centerline points must be finite");
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return invalid(format!("centerline points {} and {} coincide", i, i + 1));
        }
        Ok(Centerline { points, frame })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn base(&self) -> Vec3 {
        self.points[0]
    }

    pub fn tip(&self) -> Vec3 {
        self.points[self.points.len() - 1]
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
    }

    pub fn arc_length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShapeMode {
    /// Straight links between joints; the model used for calibration.
    #[default]
    RigidLink,
    /// Each segment is a circular arc of its full length.
    Arc,
}

/// One segment in geometric order: roll relative to the previous segment,
/// bend angle at its proximal joint, and arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub roll: f64,
    pub bend: f64,
    pub length: f64,
}

/// Segments of `program`, proximal to distal, including straight padding for
/// the unshaped proximal part of the discretized region.
pub fn geometric_segments(program: &ActionProgram, law: &BendLaw) -> Result<Vec<Segment>> {
    program.validate()?;
    let wire = &program.wire;
    let padding = wire.segments - program.steps.len();
    let mut segs = Vec::with_capacity(wire.segments);
    segs.extend((0..padding).map(|_| Segment {
        roll: 0.0,
        bend: 0.0,
        length: wire.segment_length,
    }));
    let mut proximal_phi = 0.0;
    for s in program.steps.iter().rev() {
        segs.push(Segment {
            roll: s.phi - proximal_phi,
            bend: law.theta_for(s.beta),
            length: s.delta,
        });
        proximal_phi = s.phi;
    }
    Ok(segs)
}

/// Joint positions of a segment chain starting at the origin along `+e3`.
pub fn chain_points(segments: &[Segment], mode: ShapeMode) -> Vec<Vec3> {
    let mut r = Rot3::identity();
    let mut p = Vec3::zeros();
    let mut pts = Vec::with_capacity(segments.len() + 1);
    pts.push(p);
    for seg in segments {
        let rolled = r * Rot3::about_e3(seg.roll);
        match mode {
            ShapeMode::RigidLink => {
                r = rolled * Rot3::about_e1(seg.bend);
                p += r * (e3() * seg.length);
            }
            ShapeMode::Arc => {
                let half = 0.5 * seg.bend;
                let chord = seg.length * sinc(half);
                p += (rolled * Rot3::about_e1(half)) * (e3() * chord);
                r = rolled * Rot3::about_e1(seg.bend);
            }
        }
        pts.push(p);
    }
    pts
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Predicted centerline of `program` under `law`: `n + 1` joints in the base frame.
pub fn forward_shape(program: &ActionProgram, law: &BendLaw, mode: ShapeMode) -> Result<Centerline> {
    let segs = geometric_segments(program, law)?;
    Centerline::new(chain_points(&segs, mode))
}

/// Straight-line distance from base joint to tip.
pub fn chord_of(centerline: &Centerline) -> f64 {
    (centerline.tip() - centerline.base()).norm()
}
