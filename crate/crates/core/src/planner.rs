//! Action programs for the standard tip recipes, and the greedy inverse that
//! recovers a program from a target centerline.
//!
//! Recipe counts are listed proximal to distal (the order the finished shape
//! is read in), e.g. `Angled { straight, bent }` leaves its proximal
//! `straight` segments unbent. [`plan`] emits steps in shaping order, so the
//! first emitted step is the distal end of the last group.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::eval::{align, AlignMode, AlignmentOptions};
use crate::geom::{Rot3, Vec3};
use crate::wire_model::{
    forward_shape, ActionProgram, ActionStep, BendLaw, Centerline, ShapeMode, WireSpec,
};

/// Below this turning the discrete normal is considered undefined.
const NORMAL_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum RecipeKind {
    C { bent: usize },
    S { first: usize, second: usize },
    Angled { straight: usize, bent: usize },
    Hook { straight: usize, primary: usize, recurve: usize },
    /// `dphi` is the roll increment per step, radians in `(-pi, pi]`.
    Helix { segments: usize, dphi: f64 },
    /// `(absolute roll, pinched)` per step in shaping order.
    Custom(Vec<(f64, bool)>),
}

impl RecipeKind {
    pub fn total_segments(&self) -> usize {
        match self {
            RecipeKind::C { bent } => *bent,
            RecipeKind::S { first, second } => first + second,
            RecipeKind::Angled { straight, bent } => straight + bent,
            RecipeKind::Hook {
                straight,
                primary,
                recurve,
            } => straight + primary + recurve,
            RecipeKind::Helix { segments, .. } => *segments,
            RecipeKind::Custom(steps) => steps.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecipe {
    pub kind: RecipeKind,
    pub segment_length: f64,
    pub beta_nominal: f64,
}

impl ShapeRecipe {
    pub fn new(kind: RecipeKind, segment_length: f64, beta_nominal: f64) -> Self {
        ShapeRecipe {
            kind,
            segment_length,
            beta_nominal,
        }
    }
}

/// Expands a recipe into a roll-bend-advance program for `wire`.
pub fn plan(recipe: &ShapeRecipe, wire: &WireSpec) -> Result<ActionProgram> {
    wire.validate()?;
    let total = recipe.kind.total_segments();
    if total > wire.segments {
        return invalid(format!(
            "recipe needs {} segments but the wire has {}",
            total, wire.segments
        ));
    }
    if !(recipe.beta_nominal > 0.0 && recipe.beta_nominal <= 1.0) {
        return invalid("nominal pinch must lie in (0, 1]");
    }
    if !(recipe.segment_length > 0.0) {
        return invalid("segment length must be positive");
    }

    // (absolute roll or None to keep the current roll, pinched), shaping order
    let shaping: Vec<(Option<f64>, bool)> = match &recipe.kind {
        RecipeKind::Helix { segments, dphi } => {
            if !(*dphi > -PI && *dphi <= PI) {
                return invalid("helix roll increment must lie in (-pi, pi]");
            }
            (1..=*segments)
                .map(|k| (Some(k as f64 * dphi), true))
                .collect()
        }
        RecipeKind::Custom(steps) => {
            if steps.iter().any(|(phi, _)| !phi.is_finite()) {
                return invalid("custom rolls must be finite");
            }
            steps.iter().map(|&(phi, on)| (Some(phi), on)).collect()
        }
        kind => {
            let groups: Vec<(usize, Option<f64>, bool)> = match *kind {
                RecipeKind::C { bent } => vec![(bent, Some(0.0), true)],
                RecipeKind::S { first, second } => {
                    vec![(first, Some(0.0), true), (second, Some(PI), true)]
                }
                RecipeKind::Angled { straight, bent } => {
                    vec![(straight, None, false), (bent, Some(0.0), true)]
                }
                RecipeKind::Hook {
                    straight,
                    primary,
                    recurve,
                } => vec![
                    (straight, None, false),
                    (primary, Some(0.0), true),
                    (recurve, Some(PI), true),
                ],
                _ => unreachable!(),
            };
            let mut geometric = Vec::with_capacity(total);
            for (count, phi, on) in groups {
                geometric.extend(std::iter::repeat_n((phi, on), count));
            }
            geometric.reverse();
            geometric
        }
    };

    let mut current = 0.0;
    let steps = shaping
        .into_iter()
        .enumerate()
        .map(|(i, (phi, on))| {
            if let Some(p) = phi {
                current = p;
            }
            ActionStep {
                k: i + 1,
                phi: current,
                beta: if on { recipe.beta_nominal } else { 0.0 },
                delta: recipe.segment_length,
            }
        })
        .collect();
    ActionProgram::new(wire.clone(), steps)
}

/// Turning at each joint of a centerline whose base tangent is `+e3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Turn {
    /// Angle between the incoming and outgoing chord, radians.
    pub angle: f64,
    /// Unit turning axis `t_in x t_out`, or zero when the angle is negligible.
    pub axis: Vec3,
}

/// Turning angle and axis at every joint, starting with the turn of the
/// first chord away from the base tangent `+e3`.
pub fn turning_profile(points: &[Vec3]) -> Vec<Turn> {
    let mut prev = Vec3::z();
    points
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]).normalize();
            let cross = prev.cross(&d);
            let angle = cross.norm().atan2(prev.dot(&d));
            let axis = if angle > NORMAL_EPS {
                cross.normalize()
            } else {
                Vec3::zeros()
            };
            prev = d;
            Turn { angle, axis }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PinchMode {
    /// Each joint is either straight or bent by the nominal angle.
    #[default]
    Binary,
    /// Each bent joint gets the pinch that reproduces its turning angle.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub pinch_mode: PinchMode,
    /// Turning angle (radians) at or above which a joint is pinched.
    pub curvature_threshold: f64,
    pub max_segments: usize,
}

impl FitOptions {
    /// Binary pinching, threshold at half the nominal bend, up to `wire.segments`.
    pub fn for_law(law: &BendLaw, wire: &WireSpec) -> Self {
        FitOptions {
            pinch_mode: PinchMode::Binary,
            curvature_threshold: (0.5 * law.theta_max()).max(1e-6),
            max_segments: wire.segments,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub program: ActionProgram,
    pub residual_rms: f64,
    /// Distance of every target joint (base first) from the refitted shape.
    pub per_joint_residual: Vec<f64>,
}

/// Recovers a program whose predicted shape follows `target`.
///
/// The target is taken in the base frame (shaft along `+e3`) after moving its
/// first point to the origin. Walking proximal to distal, each joint's turning
/// is measured in the frame transported along the program built so far; a
/// joint is pinched when it turns by at least the threshold, with the roll
/// chosen so the local `e1` lands on the measured turning axis. The returned
/// program uses `target.len() - 1` segments of the wire's segment length.
pub fn fit_actions(
    target: &Centerline,
    wire: &WireSpec,
    law: &BendLaw,
    options: &FitOptions,
) -> Result<FitResult> {
    if target.len() < 3 {
        return invalid("target needs at least three points");
    }
    if !(options.curvature_threshold > 0.0) {
        return invalid("curvature threshold must be positive");
    }
    let m = target.len() - 1;
    if m > wire.segments || m > options.max_segments {
        return invalid(format!(
            "target has {} segments, limit is {}",
            m,
            wire.segments.min(options.max_segments)
        ));
    }
    let l = wire.segment_length;
    for (i, d) in target.segment_lengths().iter().enumerate() {
        if (d - l).abs() > 0.1 * l {
            return invalid(format!(
                "target spacing {} at segment {} differs from l = {} by more than 10%",
                d,
                i + 1,
                l
            ));
        }
    }

    let origin = target.base();
    let local: Vec<Vec3> = target.points.iter().map(|p| p - origin).collect();
    let (beta_on, theta_on) = law.nominal();

    let mut frame = Rot3::identity();
    let mut geometric = Vec::with_capacity(m); // (relative roll, beta)
    for w in local.windows(2) {
        let d = (w[1] - w[0]).normalize();
        let t = frame * Vec3::z();
        let cross = t.cross(&d);
        let turning = cross.norm().atan2(t.dot(&d));
        let (roll, beta, theta) = if turning >= options.curvature_threshold
            && cross.norm() > NORMAL_EPS
        {
            let axis = frame.transpose() * (cross / cross.norm());
            let roll = axis.y.atan2(axis.x);
            match options.pinch_mode {
                PinchMode::Binary => (roll, beta_on, theta_on),
                PinchMode::Continuous => {
                    let wanted = turning.clamp(law.theta_min(), law.theta_max());
                    let beta = law.invert(wanted);
                    (roll, beta, law.theta_for(beta))
                }
            }
        } else {
            (0.0, 0.0, 0.0)
        };
        frame = frame * Rot3::about_e3(roll) * Rot3::about_e1(theta);
        geometric.push((roll, beta));
    }

    // cumulative roll along the chain gives the absolute nozzle angle
    let mut phi = 0.0;
    let mut absolute: Vec<(f64, f64)> = geometric
        .iter()
        .map(|&(roll, beta)| {
            phi += roll;
            (phi, beta)
        })
        .collect();
    absolute.reverse();
    let steps = absolute
        .into_iter()
        .enumerate()
        .map(|(i, (phi, beta))| ActionStep {
            k: i + 1,
            phi,
            beta,
            delta: l,
        })
        .collect();
    let fit_wire = wire.with_segments(l, m)?;
    let program = ActionProgram::new(fit_wire, steps)?;

    let predicted = forward_shape(&program, law, ShapeMode::RigidLink)?;
    let moved = Centerline::new(local)?;
    let aligned = align(
        &moved,
        &predicted,
        AlignmentOptions {
            mode: AlignMode::BaseFrame,
        },
    )?;
    let per_joint_residual: Vec<f64> = aligned
        .points
        .iter()
        .zip(&predicted.points)
        .map(|(a, b)| (a - b).norm())
        .collect();
    let residual_rms = (per_joint_residual.iter().map(|r| r * r).sum::<f64>()
        / per_joint_residual.len() as f64)
        .sqrt();
    Ok(FitResult {
        program,
        residual_rms,
        per_joint_residual,
    })
}
