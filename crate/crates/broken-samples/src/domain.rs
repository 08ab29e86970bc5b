//! Core data types: sample points, broken batches, datasets, parameter
//! domains, and the model capability traits.
//!
//! A *broken batch* holds `m` first coordinates and `m` second coordinates
//! of what were originally `m` paired draws; the pairing itself is lost.
//! A [`Dataset`] is a list of `n` such batches of equal size. Estimators in
//! [`crate::loss`] only ever see the two unordered lists, so every quantity
//! computed downstream must be (and is tested to be) invariant under
//! within-batch permutations.
//!
//! Datasets round-trip through a line-oriented text format via
//! [`write_dataset`] / [`read_dataset`] with 17 significant digits, which is
//! enough to restore every `f64` bit-exactly.

use std::fmt::Write as _;
use std::io;

use rand_core::RngCore;
use thiserror::Error;

/// Errors for dataset construction, validation, and serialization.
#[derive(Debug, Error)]
pub enum CoreError {
    /// The dataset holds no batches, or batches hold no pairs.
    #[error("dataset contains no observations")]
    EmptyDataset,
    /// Batches (or the two sides of one batch) disagree in size.
    #[error("ragged batch sizes: batch {batch} has {found} points where {expected} were expected")]
    RaggedBatchSizes {
        batch: usize,
        expected: usize,
        found: usize,
    },
    /// A coordinate is NaN or infinite.
    #[error("non-finite coordinate in batch {batch}")]
    NonFiniteCoordinate { batch: usize },
    /// Points of different dimension appear in one dataset.
    #[error("mixed point dimensions: batch {batch} has a {found}-dimensional point, expected {expected}")]
    MixedPointDimensions {
        batch: usize,
        expected: usize,
        found: usize,
    },
    /// A parameter vector lies outside the box it was validated against.
    #[error("parameter {param:?} lies outside the domain {lower:?}..{upper:?}")]
    ParamOutOfDomain {
        param: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// A box constraint is malformed (empty, non-finite, or inverted).
    #[error("invalid parameter domain: {0}")]
    InvalidDomain(String),
    /// The text serialization could not be parsed.
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A sample-space point: a scalar on the real line (category indices are
/// stored as their scalar value) or a coordinate pair on the flat 2-torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    dim: u8,
    coords: [f64; 2],
}

impl Point {
    /// One-dimensional point.
    pub fn scalar(v: f64) -> Self {
        Self {
            dim: 1,
            coords: [v, 0.0],
        }
    }

    /// Two-dimensional point.
    pub fn planar(a: f64, b: f64) -> Self {
        Self {
            dim: 2,
            coords: [a, b],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    /// Coordinate `i`; panics if `i >= dim`.
    pub fn coord(&self, i: usize) -> f64 {
        self.coords()[i]
    }

    fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }
}

/// One originally paired draw `(x, y)`, before any breaking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub x: Point,
    pub y: Point,
}

/// `m` first coordinates and `m` second coordinates of one batch, with the
/// pairing between them forgotten. Both sides always have equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenBatch {
    xs: Vec<Point>,
    ys: Vec<Point>,
}

impl BrokenBatch {
    /// Builds a batch, rejecting mismatched side lengths.
    pub fn new(xs: Vec<Point>, ys: Vec<Point>) -> Result<Self, CoreError> {
        if xs.len() != ys.len() {
            return Err(CoreError::RaggedBatchSizes {
                batch: 0,
                expected: xs.len(),
                found: ys.len(),
            });
        }
        Ok(Self { xs, ys })
    }

    /// Number of pairs `m` the batch was formed from.
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[Point] {
        &self.xs
    }

    pub fn ys(&self) -> &[Point] {
        &self.ys
    }

    /// Decomposes the batch; used by [`crate::sampling::break_batches`] to
    /// permute one side without cloning.
    pub fn into_parts(self) -> (Vec<Point>, Vec<Point>) {
        (self.xs, self.ys)
    }
}

/// `n` broken batches of identical size `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    batches: Vec<BrokenBatch>,
}

impl Dataset {
    /// Builds a dataset and validates every structural invariant
    /// (see [`validate_dataset`]).
    pub fn new(batches: Vec<BrokenBatch>) -> Result<Self, CoreError> {
        let dataset = Self { batches };
        validate_dataset(&dataset)?;
        Ok(dataset)
    }

    /// Number of batches `n`.
    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    /// Common batch size `m`.
    pub fn batch_size(&self) -> usize {
        self.batches.first().map_or(0, BrokenBatch::len)
    }

    /// Dimension of every point in the dataset.
    pub fn point_dim(&self) -> usize {
        self.batches
            .first()
            .and_then(|b| b.xs.first())
            .map_or(0, Point::dim)
    }

    pub fn batches(&self) -> &[BrokenBatch] {
        &self.batches
    }

    pub fn into_batches(self) -> Vec<BrokenBatch> {
        self.batches
    }
}

/// Checks every dataset invariant: at least one batch, at least one pair per
/// batch, equal batch sizes, equal side lengths, finite coordinates, and one
/// common point dimension.
pub fn validate_dataset(dataset: &Dataset) -> Result<(), CoreError> {
    let batches = &dataset.batches;
    if batches.is_empty() || batches[0].xs.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let m = batches[0].xs.len();
    let dim = batches[0].xs[0].dim();
    for (k, batch) in batches.iter().enumerate() {
        if batch.xs.len() != m {
            return Err(CoreError::RaggedBatchSizes {
                batch: k,
                expected: m,
                found: batch.xs.len(),
            });
        }
        if batch.ys.len() != m {
            return Err(CoreError::RaggedBatchSizes {
                batch: k,
                expected: m,
                found: batch.ys.len(),
            });
        }
        for p in batch.xs.iter().chain(batch.ys.iter()) {
            if p.dim() != dim {
                return Err(CoreError::MixedPointDimensions {
                    batch: k,
                    expected: dim,
                    found: p.dim(),
                });
            }
            if !p.is_finite() {
                return Err(CoreError::NonFiniteCoordinate { batch: k });
            }
        }
    }
    Ok(())
}

/// A compact box of admissible parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamDomain {
    /// Builds a box from per-coordinate bounds; every bound must be finite
    /// and each lower bound strictly below its upper bound.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, CoreError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(CoreError::InvalidDomain(format!(
                "bounds must be non-empty and of equal length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(CoreError::InvalidDomain(format!(
                    "need finite lower < upper, got {lo}..{hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// One-dimensional box `[lo, hi]`.
    pub fn scalar(lo: f64, hi: f64) -> Result<Self, CoreError> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Whether `coords` lies in the closed box (dimension must match).
    pub fn contains(&self, coords: &[f64]) -> bool {
        coords.len() == self.dim()
            && coords
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(c, (lo, hi))| c.is_finite() && *lo <= *c && *c <= *hi)
    }

    /// Euclidean length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Box midpoint.
    pub fn center(&self) -> ParamPoint {
        let coords = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + 0.5 * (hi - lo))
            .collect();
        ParamPoint { coords }
    }

    /// Componentwise clamp of `coords` onto the box.
    pub fn project(&self, coords: &[f64]) -> Vec<f64> {
        coords
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(c, (lo, hi))| c.clamp(*lo, *hi))
            .collect()
    }

    /// Validates `coords` against the box and wraps it as a [`ParamPoint`].
    pub fn point(&self, coords: Vec<f64>) -> Result<ParamPoint, CoreError> {
        if !self.contains(&coords) {
            return Err(CoreError::ParamOutOfDomain {
                param: coords,
                lower: self.lower.clone(),
                upper: self.upper.clone(),
            });
        }
        Ok(ParamPoint { coords })
    }
}

/// A parameter vector that has been validated against some [`ParamDomain`].
///
/// Instances are only handed out by [`ParamDomain::point`] (or
/// [`ParamDomain::center`]), so holding one proves the coordinates were
/// finite and inside that box at construction time. Operations that receive
/// a point together with a *model* still re-check it against the model's own
/// domain, since the point may have been built for a different box.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint {
    coords: Vec<f64>,
}

impl ParamPoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Sole coordinate of a one-dimensional point; panics otherwise.
    pub fn scalar(&self) -> f64 {
        assert_eq!(
            self.coords.len(),
            1,
            "scalar() on a {}-dim point",
            self.coords.len()
        );
        self.coords[0]
    }
}

/// A parametric family of joint densities `p^theta(x, y)` relative to the
/// product of its two marginal laws, normalized so that integrating either
/// coordinate against its marginal gives 1.
///
/// `density` and `grad_density` require `theta` to lie in [`Self::domain`];
/// the loss functions validate this once per call and then iterate the raw
/// methods. The optional `l2_*` methods expose closed-form L2 geometry
/// against the family's true parameter when the family admits one.
pub trait DensityModel: Send + Sync {
    /// Dimension of the parameter vector.
    fn param_dim(&self) -> usize;

    /// Box of admissible parameters.
    fn domain(&self) -> &ParamDomain;

    /// Human-readable names of the parameter coordinates (used in reports).
    fn param_names(&self) -> Vec<String>;

    /// Joint density ratio at `(x, y)`; strictly positive for in-domain
    /// parameters except where the value underflows `f64`.
    fn density(&self, theta: &ParamPoint, x: &Point, y: &Point) -> f64;

    /// `ln density`, evaluated stably (overridden by families whose density
    /// underflows before its logarithm does).
    fn log_density(&self, theta: &ParamPoint, x: &Point, y: &Point) -> f64 {
        self.density(theta, x, y).ln()
    }

    /// Gradient of the density in `theta`, one entry per parameter
    /// coordinate.
    fn grad_density(&self, theta: &ParamPoint, x: &Point, y: &Point) -> Vec<f64>;

    /// Squared L2 norm of the true-parameter density under the product of
    /// marginals, when available in closed form.
    fn l2_norm_sq_true(&self) -> Option<f64> {
        None
    }

    /// Squared L2 distance between `p^theta` and the true-parameter density,
    /// when available in closed form.
    fn l2_dist_sq(&self, _theta: &ParamPoint) -> Option<f64> {
        None
    }

    /// Uniform upper bound on the density over parameters and points, when
    /// one is known.
    fn uniform_bound(&self) -> Option<f64> {
        None
    }
}

/// Sampling side of a model: the data-generating law at the true parameter.
pub trait GenerativeModel: Send + Sync {
    /// Parameter the sampler draws from.
    fn true_param(&self) -> ParamPoint;

    /// One paired draw `(X, Y)` from the joint law.
    fn sample_pair(&self, rng: &mut dyn RngCore) -> PairSample;
}

// --- text serialization ----------------------------------------------------

/// Formats `v` with 17 significant digits, enough to reparse bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_points(line: &mut String, points: &[Point]) {
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            line.push(';');
        }
        for (c, coord) in p.coords().iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&fmt_f64(*coord));
        }
    }
}

/// Writes a dataset in the line format
/// `batch <k>: <x_1>;...;<x_m> | <y_1>;...;<y_m>`, one line per batch, with
/// point coordinates comma-separated and 17 significant digits throughout.
pub fn write_dataset<W: io::Write>(dataset: &Dataset, mut out: W) -> io::Result<()> {
    for (k, batch) in dataset.batches().iter().enumerate() {
        let mut line = String::new();
        write!(line, "batch {k}: ").expect("string write cannot fail");
        write_points(&mut line, batch.xs());
        line.push_str(" | ");
        write_points(&mut line, batch.ys());
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn parse_points(text: &str, line: usize) -> Result<Vec<Point>, CoreError> {
    let mut points = Vec::new();
    for part in text.split(';') {
        let coords: Vec<f64> = part
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|e| CoreError::Parse {
                    line,
                    msg: format!("bad coordinate {c:?}: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        let point = match coords.as_slice() {
            [v] => Point::scalar(*v),
            [a, b] => Point::planar(*a, *b),
            other => {
                return Err(CoreError::Parse {
                    line,
                    msg: format!("points must have 1 or 2 coordinates, got {}", other.len()),
                })
            }
        };
        points.push(point);
    }
    Ok(points)
}

/// Parses the format produced by [`write_dataset`] and validates the result.
pub fn read_dataset<R: io::BufRead>(input: R) -> Result<Dataset, CoreError> {
    let mut batches = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix("batch ")
            .ok_or_else(|| CoreError::Parse {
                line: lineno,
                msg: "expected line to start with `batch `".into(),
            })?;
        let (index, rest) = rest.split_once(": ").ok_or_else(|| CoreError::Parse {
            line: lineno,
            msg: "expected `batch <k>: `".into(),
        })?;
        let index: usize = index.parse().map_err(|e| CoreError::Parse {
            line: lineno,
            msg: format!("bad batch index {index:?}: {e}"),
        })?;
        if index != batches.len() {
            return Err(CoreError::Parse {
                line: lineno,
                msg: format!(
                    "batch index {index} out of order, expected {}",
                    batches.len()
                ),
            });
        }
        let (xs_text, ys_text) = rest.split_once(" | ").ok_or_else(|| CoreError::Parse {
            line: lineno,
            msg: "expected ` | ` between the two point lists".into(),
        })?;
        batches.push(BrokenBatch::new(
            parse_points(xs_text, lineno)?,
            parse_points(ys_text, lineno)?,
        )?);
    }
    Dataset::new(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar_batch(vals: &[(f64, f64)]) -> BrokenBatch {
        let pts: Vec<Point> = vals.iter().map(|(a, b)| Point::planar(*a, *b)).collect();
        BrokenBatch::new(pts.clone(), pts).unwrap()
    }

    #[test]
    fn validate_accepts_well_formed() {
        let data = Dataset::new(vec![
            planar_batch(&[(0.1, 0.2), (0.3, 0.4)]),
            planar_batch(&[(0.5, 0.6), (0.7, 0.8)]),
        ])
        .unwrap();
        assert_eq!(data.num_batches(), 2);
        assert_eq!(data.batch_size(), 2);
        assert_eq!(data.point_dim(), 2);
        assert!(validate_dataset(&data).is_ok());
    }

    #[test]
    fn validate_rejects_empty() {
        assert!(matches!(Dataset::new(vec![]), Err(CoreError::EmptyDataset)));
        let empty_batch = BrokenBatch::new(vec![], vec![]).unwrap();
        assert!(matches!(
            Dataset::new(vec![empty_batch]),
            Err(CoreError::EmptyDataset)
        ));
    }

    #[test]
    fn validate_rejects_ragged() {
        let err = Dataset::new(vec![
            planar_batch(&[(0.0, 0.0), (1.0, 1.0)]),
            planar_batch(&[(0.0, 0.0)]),
        ])
        .unwrap_err();
        assert!(matches!(err, CoreError::RaggedBatchSizes { batch: 1, .. }));

        assert!(matches!(
            BrokenBatch::new(vec![Point::scalar(0.0)], vec![]),
            Err(CoreError::RaggedBatchSizes { .. })
        ));
    }

    #[test]
    fn validate_rejects_non_finite() {
        let err = Dataset::new(vec![planar_batch(&[(f64::NAN, 0.0)])]).unwrap_err();
        assert!(matches!(err, CoreError::NonFiniteCoordinate { batch: 0 }));
    }

    #[test]
    fn validate_rejects_mixed_dims() {
        let batch =
            BrokenBatch::new(vec![Point::planar(0.0, 0.0)], vec![Point::scalar(0.0)]).unwrap();
        assert!(matches!(
            Dataset::new(vec![batch]),
            Err(CoreError::MixedPointDimensions { .. })
        ));
    }

    #[test]
    fn domain_basics() {
        let dom = ParamDomain::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!(dom.contains(&[0.5, 0.0]));
        assert!(
            dom.contains(&[0.0, -1.0]),
            "boundary is inside the closed box"
        );
        assert!(!dom.contains(&[1.5, 0.0]));
        assert!(!dom.contains(&[0.5]), "dimension mismatch");
        assert_eq!(dom.project(&[2.0, -3.0]), vec![1.0, -1.0]);
        assert_eq!(dom.center().coords(), &[0.5, 0.0]);
        assert!((dom.diameter() - 5.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn domain_rejects_malformed() {
        assert!(ParamDomain::new(vec![], vec![]).is_err());
        assert!(ParamDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(ParamDomain::new(vec![1.0], vec![0.0]).is_err());
        assert!(ParamDomain::new(vec![f64::NEG_INFINITY], vec![0.0]).is_err());
    }

    #[test]
    fn diameter_symmetric_under_coordinate_permutation() {
        let a = ParamDomain::new(vec![0.0, -2.0, 1.0], vec![1.0, 3.0, 4.0]).unwrap();
        let b = ParamDomain::new(vec![-2.0, 1.0, 0.0], vec![3.0, 4.0, 1.0]).unwrap();
        assert_eq!(a.diameter(), b.diameter());
    }

    #[test]
    fn param_point_validation() {
        let dom = ParamDomain::scalar(0.0, 1.0).unwrap();
        assert!(dom.point(vec![0.5]).is_ok());
        assert!(matches!(
            dom.point(vec![1.5]),
            Err(CoreError::ParamOutOfDomain { .. })
        ));
        assert!(dom.point(vec![f64::NAN]).is_err());
        assert!(dom.point(vec![0.5, 0.5]).is_err(), "dimension mismatch");
    }

    #[test]
    fn serialization_round_trips() {
        let data = Dataset::new(vec![
            planar_batch(&[(0.1, 0.2), (1.0 / 3.0, -0.0)]),
            planar_batch(&[(-1.5e-13, 2.0), (0.25, 1e300)]),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn serialization_round_trips_scalars() {
        let xs = vec![Point::scalar(1.0 / 7.0), Point::scalar(-3.25)];
        let ys = vec![Point::scalar(0.0), Point::scalar(5e-324)];
        let data = Dataset::new(vec![BrokenBatch::new(xs, ys).unwrap()]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn read_rejects_malformed_lines() {
        assert!(read_dataset("nonsense".as_bytes()).is_err());
        assert!(
            read_dataset("batch 1: 0.0 | 0.0".as_bytes()).is_err(),
            "index out of order"
        );
        assert!(
            read_dataset("batch 0: 0.0;1.0 | 0.0".as_bytes()).is_err(),
            "ragged"
        );
        assert!(
            read_dataset("batch 0: 0.0,1.0,2.0 | 0.0".as_bytes()).is_err(),
            "3-dim point"
        );
    }
}
