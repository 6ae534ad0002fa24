//! Alignment of measured against predicted centerlines and the per-joint
//! error metrics reported for each shape.

use std::fmt::Write as _;

use nalgebra::SymmetricEigen;

use crate::error::{invalid, Result};
use crate::geom::{Mat3, Rot3, Vec3};
use crate::wire_model::{Centerline, FrameTag, WireSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignMode {
    /// Match base joints and initial tangents.
    #[default]
    BaseFrame,
    /// As `BaseFrame`, then roll about the initial tangent to minimize the
    /// summed squared joint distances.
    BaseFrameRoll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AlignmentOptions {
    pub mode: AlignMode,
}

/// Whether errors are measured in 3D or after projection onto the predicted
/// shape's best-fit plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMode {
    Planar,
    #[default]
    Spatial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub shape_label: String,
    /// `e_k` for joints `k = 1..=n` counted from the base.
    pub per_segment: Vec<f64>,
    pub e_min: f64,
    pub e_max: f64,
    pub e_mean: f64,
    pub e_rms: f64,
    pub percent_of_shapeable: Vec<f64>,
}

/// Arc-length resampling to `n + 1` points spaced `l` along the polyline.
///
/// Inputs up to 10% shorter than `n * l` are extended along their last
/// direction.
pub fn resample(points: &[Vec3], n: usize, l: f64) -> Result<Centerline> {
    if n < 1 || !(l > 0.0) {
        return invalid("resample needs n >= 1 and l > 0");
    }
    if points.len() < 2 {
        return invalid("resample needs at least two points");
    }
    let pts: Vec<Vec3> = points.to_vec();
    let seg_len: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = seg_len.iter().sum();
    let wanted = n as f64 * l;
    if total < 0.9 * wanted {
        return invalid(format!(
            "polyline length {} is shorter than 90% of n*l = {}",
            total, wanted
        ));
    }
    let last_dir = pts
        .windows(2)
        .rev()
        .map(|w| w[1] - w[0])
        .find(|d| d.norm() > 0.0)
        .map(|d| d.normalize())
        .ok_or_else(|| crate::Error::InvalidArgument("polyline has zero length".into()))?;

    let mut out = Vec::with_capacity(n + 1);
    out.push(pts[0]);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 1..=n {
        let s = i as f64 * l;
        while seg < seg_len.len() && seg_start + seg_len[seg] < s {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let p = if seg < seg_len.len() {
            let t = (s - seg_start) / seg_len[seg];
            pts[seg] + (pts[seg + 1] - pts[seg]) * t
        } else {
            pts[pts.len() - 1] + last_dir * (s - total)
        };
        out.push(p);
    }
    Centerline::new(out)
}

fn initial_tangent(c: &Centerline, which: &str) -> Result<Vec3> {
    let t = c.points[1] - c.points[0];
    let norm = t.norm();
    if !(norm > 1e-12) {
        return invalid(format!("{} has a degenerate initial tangent", which));
    }
    Ok(t / norm)
}

/// Rigidly moves `meas` into the base frame of `pred`.
///
/// The measured base joint lands on the predicted base joint and the
/// measured initial tangent on the predicted one; for a prediction built at
/// the origin along `+e3` this is the canonical base frame.
pub fn align(meas: &Centerline, pred: &Centerline, opts: AlignmentOptions) -> Result<Centerline> {
    let tm = initial_tangent(meas, "measured centerline")?;
    let tp = initial_tangent(pred, "predicted centerline")?;
    let tilt = Rot3::aligning(&tm, &tp);
    let origin_m = meas.base();
    let origin_p = pred.base();
    let mut local: Vec<Vec3> = meas.points.iter().map(|p| tilt * (p - origin_m)).collect();

    if opts.mode == AlignMode::BaseFrameRoll {
        let (mut c, mut s) = (0.0, 0.0);
        for (a, p) in local.iter().zip(&pred.points) {
            let b = p - origin_p;
            let perp = a - tp * a.dot(&tp);
            c += b.dot(&perp);
            s += b.dot(&tp.cross(a));
        }
        if c != 0.0 || s != 0.0 {
            let roll = crate::geom::exp_so3(&tp, s.atan2(c))?;
            for a in local.iter_mut() {
                *a = roll * *a;
            }
        }
    }
    let points = local.into_iter().map(|a| a + origin_p).collect();
    Centerline::with_frame(points, FrameTag::Base)
}

/// `e_k = |meas_k - pred_k|` for every joint after the base.
pub fn per_segment_error(meas: &Centerline, pred: &Centerline) -> Result<Vec<f64>> {
    if meas.len() != pred.len() {
        return invalid(format!(
            "point counts differ: measured {} vs predicted {}",
            meas.len(),
            pred.len()
        ));
    }
    Ok(meas
        .points
        .iter()
        .zip(&pred.points)
        .skip(1)
        .map(|(m, p)| (m - p).norm())
        .collect())
}

/// Unit normal of the least-squares plane through `points`.
pub fn best_fit_normal(points: &[Vec3]) -> Vec3 {
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = eig.eigenvalues.imin();
    let n = eig.eigenvectors.column(i).into_owned();
    // fix the sign so repeated runs agree
    let k = n.iamax();
    if n[k] < 0.0 {
        -n
    } else {
        n
    }
}

/// Projects both curves onto the best-fit plane of `pred`.
pub fn project_planar(meas: &Centerline, pred: &Centerline) -> Result<(Centerline, Centerline)> {
    let normal = best_fit_normal(&pred.points);
    let centroid = pred.points.iter().sum::<Vec3>() / pred.len() as f64;
    let flat = |c: &Centerline| -> Vec<Vec3> {
        c.points
            .iter()
            .map(|p| p - normal * (p - centroid).dot(&normal))
            .collect()
    };
    Ok((
        Centerline::with_frame(flat(meas), meas.frame)?,
        Centerline::with_frame(flat(pred), pred.frame)?,
    ))
}

pub fn summarize(errors: &[f64], wire: &WireSpec, label: &str) -> Result<ErrorReport> {
    if errors.is_empty() {
        return invalid("no errors to summarize");
    }
    if errors.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return invalid("errors must be finite and non-negative");
    }
    let n = errors.len() as f64;
    let e_min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let e_max = errors.iter().copied().fold(0.0, f64::max);
    let e_mean = (errors.iter().sum::<f64>() / n).clamp(e_min, e_max);
    let e_rms = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    Ok(ErrorReport {
        shape_label: label.to_string(),
        per_segment: errors.to_vec(),
        e_min,
        e_max,
        e_mean,
        e_rms,
        percent_of_shapeable: errors
            .iter()
            .map(|e| e / wire.shapeable_length * 100.0)
            .collect(),
    })
}

/// Align, optionally flatten, and summarize one measured/predicted pair.
pub fn evaluate(
    meas: &Centerline,
    pred: &Centerline,
    align_mode: Option<AlignMode>,
    error_mode: ErrorMode,
    wire: &WireSpec,
    label: &str,
) -> Result<ErrorReport> {
    let aligned = match align_mode {
        Some(mode) => align(meas, pred, AlignmentOptions { mode })?,
        None => meas.clone(),
    };
    let errors = match error_mode {
        ErrorMode::Spatial => per_segment_error(&aligned, pred)?,
        ErrorMode::Planar => {
            let (m, p) = project_planar(&aligned, pred)?;
            per_segment_error(&m, &p)?
        }
    };
    summarize(&errors, wire, label)
}

/// Per-shape summary row; `e_rms` is absent when only tabulated values exist.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSummary {
    pub label: String,
    pub e_min: f64,
    pub e_max: f64,
    pub e_mean: f64,
    pub e_rms: Option<f64>,
}

impl From<&ErrorReport> for ShapeSummary {
    fn from(r: &ErrorReport) -> Self {
        ShapeSummary {
            label: r.shape_label.clone(),
            e_min: r.e_min,
            e_max: r.e_max,
            e_mean: r.e_mean,
            e_rms: Some(r.e_rms),
        }
    }
}

/// Cross-shape figures: the average of per-shape means and, when per-joint
/// data is available, the RMS pooled over all joints of all shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean_of_means: f64,
    pub pooled_rms: Option<f64>,
}

pub fn aggregate(rows: &[ShapeSummary]) -> Result<Aggregate> {
    if rows.is_empty() {
        return invalid("nothing to aggregate");
    }
    Ok(Aggregate {
        mean_of_means: rows.iter().map(|r| r.e_mean).sum::<f64>() / rows.len() as f64,
        pooled_rms: None,
    })
}

pub fn aggregate_reports(reports: &[ErrorReport]) -> Result<Aggregate> {
    let rows: Vec<ShapeSummary> = reports.iter().map(ShapeSummary::from).collect();
    let mut agg = aggregate(&rows)?;
    let (sum_sq, count) = reports.iter().flat_map(|r| &r.per_segment).fold(
        (0.0, 0usize),
        |(s, c), e| (s + e * e, c + 1),
    );
    agg.pooled_rms = Some((sum_sq / count as f64).sqrt());
    Ok(agg)
}

/// Human-readable table of per-shape rows plus the aggregate line.
pub fn summary_table(rows: &[ShapeSummary]) -> Result<String> {
    let agg = aggregate(rows)?;
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>16} {:>10} {:>10}", "shape", "min-max [mm]", "mean [mm]", "rms [mm]");
    for r in rows {
        let range = format!("{:.2}-{:.2}", r.e_min, r.e_max);
        let rms = r.e_rms.map_or("--".to_string(), |v| format!("{:.2}", v));
        let _ = writeln!(out, "{:<10} {:>16} {:>10.2} {:>10}", r.label, range, r.e_mean, rms);
    }
    let rms = agg.pooled_rms.map_or("--".to_string(), |v| format!("{:.2}", v));
    let _ = writeln!(out, "{:<10} {:>16} {:>10.2} {:>10}", "average", "--", agg.mean_of_means, rms);
    Ok(out)
}

/// CSV with one row per joint: `shape,k,e_mm,e_pct`.
pub fn report_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from("shape,k,e_mm,e_pct\n");
    for r in reports {
        for (i, (e, pct)) in r.per_segment.iter().zip(&r.percent_of_shapeable).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", r.shape_label, i + 1, e, pct);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::exp_so3;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn arc(n: usize, step: f64, l: f64) -> Centerline {
        let mut r = Rot3::identity();
        let mut p = Vec3::zeros();
        let mut pts = vec![p];
        for _ in 0..n {
            r = r * Rot3::about_e1(step);
            p += r * Vec3::new(0.0, 0.0, l);
            pts.push(p);
        }
        Centerline::new(pts).unwrap()
    }

    fn rigid(c: &Centerline, rot: Rot3, shift: Vec3) -> Centerline {
        Centerline::new(c.points.iter().map(|p| rot * *p + shift).collect()).unwrap()
    }

    fn max_dist(a: &Centerline, b: &Centerline) -> f64 {
        a.points
            .iter()
            .zip(&b.points)
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn resample_straight_line() {
        let pts = [Vec3::zeros(), Vec3::new(0.0, 0.0, 7.0), Vec3::new(0.0, 0.0, 20.0)];
        let c = resample(&pts, 10, 2.0).unwrap();
        assert_eq!(c.len(), 11);
        for (i, p) in c.points.iter().enumerate() {
            assert_relative_eq!(*p, Vec3::new(0.0, 0.0, 2.0 * i as f64), epsilon = 1e-12);
        }
    }

    #[test]
    fn resample_conforming_is_identity() {
        let c = arc(10, 0.12, 2.0);
        let r = resample(&c.points, 10, 2.0).unwrap();
        assert!(max_dist(&c, &r) < 1e-12);
    }

    #[test]
    fn resample_semicircle_follows_circle() {
        let radius = 7.0;
        let dense: Vec<Vec3> = (0..=20_000)
            .map(|i| {
                let a = PI * i as f64 / 20_000.0;
                Vec3::new(0.0, radius * (1.0 - a.cos()), radius * a.sin())
            })
            .collect();
        let n = 12;
        let l = PI * radius / n as f64;
        let c = resample(&dense, n, l).unwrap();
        for (i, p) in c.points.iter().enumerate() {
            let a = i as f64 * l / radius;
            let exact = Vec3::new(0.0, radius * (1.0 - a.cos()), radius * a.sin());
            assert!((p - exact).norm() < 1e-4 * radius);
        }
        assert!((crate::wire_model::chord_of(&c) - 2.0 * radius).abs() < 1e-4 * radius);
    }

    #[test]
    fn resample_rejects_short_input() {
        let pts = [Vec3::zeros(), Vec3::new(0.0, 0.0, 17.0)];
        assert!(resample(&pts, 10, 2.0).is_err());
        // within 10%: extrapolated along the last direction
        let pts = [Vec3::zeros(), Vec3::new(0.0, 0.0, 19.0)];
        let c = resample(&pts, 10, 2.0).unwrap();
        assert_relative_eq!(c.tip(), Vec3::new(0.0, 0.0, 20.0), epsilon = 1e-12);
    }

    #[test]
    fn align_recovers_rigid_motion() {
        let pred = arc(10, 0.12, 2.0);
        let rot = exp_so3(&Vec3::new(0.3, -0.4, 0.5).normalize(), 1.1).unwrap();
        let meas = rigid(&pred, rot, Vec3::new(3.0, -1.0, 4.0));
        let a = align(&meas, &pred, AlignmentOptions { mode: AlignMode::BaseFrameRoll }).unwrap();
        assert!(max_dist(&a, &pred) < 1e-9);
    }

    #[test]
    fn aligned_input_is_fixed_point() {
        let pred = arc(10, 0.12, 2.0);
        for mode in [AlignMode::BaseFrame, AlignMode::BaseFrameRoll] {
            let a = align(&pred, &pred, AlignmentOptions { mode }).unwrap();
            assert!(max_dist(&a, &pred) < 1e-12);
        }
    }

    #[test]
    fn roll_mode_removes_rotation_about_e3() {
        let pred = arc(10, 0.12, 2.0);
        let meas = rigid(&pred, Rot3::about_e3(30f64.to_radians()), Vec3::zeros());
        let base = align(&meas, &pred, AlignmentOptions { mode: AlignMode::BaseFrame }).unwrap();
        let roll = align(&meas, &pred, AlignmentOptions { mode: AlignMode::BaseFrameRoll }).unwrap();
        assert!(max_dist(&base, &pred) > 0.1);
        assert!(max_dist(&roll, &pred) < 1e-9);
    }

    #[test]
    fn align_rejects_degenerate_tangent() {
        let good = arc(3, 0.1, 2.0);
        let bad = Centerline {
            points: vec![Vec3::zeros(), Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0)],
            frame: FrameTag::Measured,
        };
        assert!(align(&bad, &good, AlignmentOptions::default()).is_err());
    }

    #[test]
    fn per_segment_error_examples() {
        let pred = arc(10, 0.12, 2.0);
        assert!(per_segment_error(&pred, &pred).unwrap().iter().all(|&e| e == 0.0));
        let shifted = rigid(&pred, Rot3::identity(), Vec3::new(0.0, 0.5, 0.0));
        for e in per_segment_error(&shifted, &pred).unwrap() {
            assert_relative_eq!(e, 0.5, epsilon = 1e-12);
        }
        assert!(per_segment_error(&arc(5, 0.1, 2.0), &pred).is_err());
    }

    #[test]
    fn summarize_examples() {
        let wire = WireSpec::default();
        let r = summarize(&[1.0], &wire, "one").unwrap();
        assert_eq!((r.e_min, r.e_max, r.e_mean, r.e_rms), (1.0, 1.0, 1.0, 1.0));
        let r = summarize(&[3.0, 4.0], &wire, "pair").unwrap();
        assert_relative_eq!(r.e_mean, 3.5);
        assert_relative_eq!(r.e_rms, 12.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(r.percent_of_shapeable[1], 20.0, epsilon = 1e-12);
        assert!(summarize(&[], &wire, "none").is_err());
    }

    #[test]
    fn planar_projection_drops_out_of_plane_offset() {
        let pred = arc(10, 0.12, 2.0);
        let meas = rigid(&pred, Rot3::identity(), Vec3::new(0.25, 0.0, 0.0));
        let wire = WireSpec::default();
        let flat = evaluate(&meas, &pred, None, ErrorMode::Planar, &wire, "c").unwrap();
        let full = evaluate(&meas, &pred, None, ErrorMode::Spatial, &wire, "c").unwrap();
        assert!(flat.e_max < 1e-12);
        assert_relative_eq!(full.e_min, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn csv_and_table_layout() {
        let wire = WireSpec::default();
        let r = summarize(&[0.5, 1.0], &wire, "C").unwrap();
        assert_eq!(report_csv(std::slice::from_ref(&r)), "shape,k,e_mm,e_pct\nC,1,0.5,2.5\nC,2,1,5\n");
        let table = summary_table(&[ShapeSummary::from(&r)]).unwrap();
        assert!(table.contains("average"));
        assert!(table.contains("0.50-1.00"));
    }

    fn arb_rot() -> impl Strategy<Value = Rot3> {
        (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64, -PI..PI)
            .prop_map(|(x, y, z, a)| exp_so3(&Vec3::new(x, y, z).normalize(), a).unwrap())
    }

    proptest! {
        #[test]
        fn align_is_rigid(rot in arb_rot(), tx in -5.0..5.0f64, step in 0.0..0.3f64, roll in any::<bool>()) {
            let pred = arc(8, 0.1, 2.0);
            let meas = rigid(&arc(8, step, 1.7), rot, Vec3::new(tx, 1.0, -2.0));
            let mode = if roll { AlignMode::BaseFrameRoll } else { AlignMode::BaseFrame };
            let a = align(&meas, &pred, AlignmentOptions { mode }).unwrap();
            for i in 0..meas.len() {
                for j in 0..meas.len() {
                    let before = (meas.points[i] - meas.points[j]).norm();
                    let after = (a.points[i] - a.points[j]).norm();
                    prop_assert!((before - after).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn error_invariant_under_common_motion(rot in arb_rot(), tx in -5.0..5.0f64, step in 0.0..0.3f64) {
            let pred = arc(8, 0.1, 2.0);
            let meas = arc(8, step, 2.0);
            let before = per_segment_error(&meas, &pred).unwrap();
            let shift = Vec3::new(tx, -tx, 1.0);
            let after = per_segment_error(&rigid(&meas, rot, shift), &rigid(&pred, rot, shift)).unwrap();
            for (a, b) in before.iter().zip(&after) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn summary_ordering(errors in prop::collection::vec(0.0..5.0f64, 1..30)) {
            let wire = WireSpec::default();
            let r = summarize(&errors, &wire, "x").unwrap();
            prop_assert!(r.e_min <= r.e_mean && r.e_mean <= r.e_max);
            prop_assert!(r.e_rms >= 0.0);
            for (e, p) in r.per_segment.iter().zip(&r.percent_of_shapeable) {
                prop_assert_eq!(*p, e / wire.shapeable_length * 100.0);
            }
        }
    }
}
