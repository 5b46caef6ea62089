//! Accuracy metrics, ground-truth ingestion and the topology-matching
//! baseline.

mod baseline;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::features::Match;
use nalgebra::Vector2;

use crate::geometry::{angle_diff, Point, RigidTransform};

pub use baseline::{topology_baseline, BaselineConfig, BaselineResult};

/// Manually or synthetically selected point pairs `(historical, reference)`
/// in center-origin meters.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthCorrespondences {
    pairs: Vec<(Point, Point)>,
}

impl GroundTruthCorrespondences {
    pub fn new(pairs: Vec<(Point, Point)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("ground truth needs at least one correspondence".into()));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(Point, Point)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Root mean squared distance between mapped historical points and their
/// reference counterparts.
pub fn rmse(gt: &GroundTruthCorrespondences, mapping: impl Fn(&Point) -> Point) -> f64 {
    let sum: f64 = gt.pairs.iter().map(|(h, r)| (mapping(h) - r).norm_squared()).sum();
    (sum / gt.pairs.len() as f64).sqrt()
}

/// Translation distance in meters and absolute rotation difference in
/// degrees, wrapped to `[0, 180]`.
pub fn rigid_component_errors(estimated: &RigidTransform, truth: &RigidTransform) -> (f64, f64) {
    let t = (estimated.translation() - truth.translation()).norm();
    let r = angle_diff(estimated.gamma(), truth.gamma()).abs().to_degrees();
    (t, r)
}

/// Least-squares rigid transform mapping the historical points of `gt` onto
/// their reference counterparts.
pub fn fit_rigid(gt: &GroundTruthCorrespondences) -> RigidTransform {
    let n = gt.pairs.len() as f64;
    let ca = gt.pairs.iter().fold(Vector2::zeros(), |s, (a, _)| s + a.coords) / n;
    let cb = gt.pairs.iter().fold(Vector2::zeros(), |s, (_, b)| s + b.coords) / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in &gt.pairs {
        let (p, q) = (a.coords - ca, b.coords - cb);
        sxx += p.dot(&q);
        sxy += p.x * q.y - p.y * q.x;
    }
    let gamma = sxy.atan2(sxx);
    let t = RigidTransform::new(0.0, 0.0, gamma);
    let v = cb - t.apply(&Point::from(ca)).coords;
    RigidTransform::new(v.x, v.y, gamma)
}

/// Fraction of matches whose b-position lies within `ground_distance` of the
/// true image of their a-position.
pub fn inlier_ratio(matches: &[Match], gt_mapping: impl Fn(&Point) -> Point, ground_distance: f64) -> Result<f64> {
    if matches.is_empty() {
        return Err(Error::InvalidInput("inlier ratio of an empty match list".into()));
    }
    let good = matches
        .iter()
        .filter(|m| (gt_mapping(&m.frame_a.position()) - m.frame_b.position()).norm() <= ground_distance)
        .count();
    Ok(good as f64 / matches.len() as f64)
}

const GT_HEADER: &str = "image_id,x_hist,y_hist,x_opm,y_opm";

/// Reads `image_id,x_hist,y_hist,x_opm,y_opm` rows. A `# origin=...` comment
/// declares the coordinate origin; only `center` is accepted.
pub fn read_ground_truth<R: Read>(mut r: R) -> Result<BTreeMap<String, GroundTruthCorrespondences>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    for line in text.lines().filter(|l| l.trim_start().starts_with('#')) {
        if let Some(origin) = line.split_whitespace().find_map(|w| w.strip_prefix("origin=")) {
            if origin != "center" {
                return Err(Error::format("ground truth", format!("unsupported origin `{origin}`; convert to center-origin meters")));
            }
        }
    }
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out: BTreeMap<String, Vec<(Point, Point)>> = BTreeMap::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::format("ground truth", e.to_string()))?;
        if rec.len() != 5 {
            return Err(Error::format("ground truth", format!("row {}: expected 5 fields", i + 1)));
        }
        let num = |j: usize| {
            rec[j]
                .parse::<f64>()
                .map_err(|_| Error::format("ground truth", format!("row {}: bad number `{}`", i + 1, &rec[j])))
        };
        out.entry(rec[0].to_string())
            .or_default()
            .push((Point::new(num(1)?, num(2)?), Point::new(num(3)?, num(4)?)));
    }
    out.into_iter().map(|(k, v)| Ok((k, GroundTruthCorrespondences::new(v)?))).collect()
}

pub fn write_ground_truth<W: Write>(gt: &BTreeMap<String, GroundTruthCorrespondences>, mut w: W) -> Result<()> {
    writeln!(w, "# origin=center units=m")?;
    writeln!(w, "{GT_HEADER}")?;
    for (id, g) in gt {
        for (h, r) in g.pairs() {
            writeln!(w, "{id},{},{},{},{}", h.x, h.y, r.x, r.y)?;
        }
    }
    Ok(())
}

/// One metrics report row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub image_id: String,
    pub rmse_m: f64,
    pub trans_err_m: f64,
    pub rot_err_deg: f64,
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::format("metrics", e.to_string());
    wr.write_record(["image_id", "rmse_m", "trans_err_m", "rot_err_deg"]).map_err(err)?;
    for r in rows {
        wr.write_record([
            r.image_id.clone(),
            format!("{:.4}", r.rmse_m),
            format!("{:.4}", r.trans_err_m),
            format!("{:.4}", r.rot_err_deg),
        ])
        .map_err(err)?;
    }
    wr.flush()?;
    Ok(())
}
