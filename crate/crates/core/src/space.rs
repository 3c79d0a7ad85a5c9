//! Search-space geometry, observed search trajectories, normalization and persistence.

use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("search space needs at least one dimension")]
    Empty,
    #[error("lower bounds have {lower} entries but upper bounds have {upper}")]
    BoundsLength { lower: usize, upper: usize },
    #[error("axis {axis}: lower bound {lower} is not below upper bound {upper}")]
    DegenerateAxis { axis: usize, lower: f64, upper: f64 },
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("record {record}: x has {found} coordinates, space has {expected}")]
    DimensionMismatch { record: usize, expected: usize, found: usize },
    #[error("record {record}: coordinate {axis} = {value} lies outside [{lower}, {upper}]")]
    OutOfBounds { record: usize, axis: usize, value: f64, lower: f64, upper: f64 },
    #[error("record {record}: x duplicates record {first}; perturb the point and resubmit")]
    Duplicate { record: usize, first: usize },
    #[error("record {record}: objective value {value} is not finite")]
    NonFiniteObjective { record: usize, value: f64 },
    #[error("malformed trajectory document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("trajectory i/o: {0}")]
    Io(#[from] io::Error),
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace<T>", into = "RawSpace<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + DeserializeOwned"))]
pub struct SearchSpace<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> TryFrom<RawSpace<T>> for SearchSpace<T> {
    type Error = SpaceError;
    fn try_from(raw: RawSpace<T>) -> Result<Self, SpaceError> {
        SearchSpace::new(raw.lower, raw.upper)
    }
}

impl<T> From<SearchSpace<T>> for RawSpace<T> {
    fn from(s: SearchSpace<T>) -> Self {
        RawSpace { lower: s.lower, upper: s.upper }
    }
}

impl<T: Scalar> SearchSpace<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, SpaceError> {
        if lower.len() != upper.len() {
            return Err(SpaceError::BoundsLength { lower: lower.len(), upper: upper.len() });
        }
        if lower.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (axis, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            // also rejects NaN and infinite widths
            if !(l < u) || !(u - l).is_finite() {
                return Err(SpaceError::DegenerateAxis {
                    axis,
                    lower: l.to_f64().unwrap_or(f64::NAN),
                    upper: u.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval on every axis.
    pub fn cube(dim: usize, lower: T, upper: T) -> Result<Self, SpaceError> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    /// `[-1, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self::cube(dim, -T::one(), T::one()).expect("unit cube is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> T {
        self.upper[axis] - self.lower[axis]
    }

    /// `log D`, summed per axis so it stays finite in high dimension.
    pub fn log_volume(&self) -> T {
        (0..self.dim()).map(|i| self.width(i).ln()).sum()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l && v <= u)
    }

    /// Projects `x` onto the box.
    pub fn clamp(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| v.max(l).min(u))
            .collect()
    }

    /// Checks one candidate point, reporting it as `record`.
    pub fn check_point(&self, record: usize, x: &[T]) -> Result<(), TrajectoryError> {
        if x.len() != self.dim() {
            return Err(TrajectoryError::DimensionMismatch {
                record,
                expected: self.dim(),
                found: x.len(),
            });
        }
        for (axis, &v) in x.iter().enumerate() {
            let (l, u) = (self.lower[axis], self.upper[axis]);
            if !(v >= l && v <= u) {
                return Err(TrajectoryError::OutOfBounds {
                    record,
                    axis,
                    value: v.to_f64().unwrap_or(f64::NAN),
                    lower: l.to_f64().unwrap_or(f64::NAN),
                    upper: u.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }
}

/// One evaluated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub x: Vec<T>,
    pub f: T,
}

impl<T> Sample<T> {
    pub fn new(x: Vec<T>, f: T) -> Self {
        Self { x, f }
    }
}

/// Ordered trials inside a search space. Samples are in trial order, lie inside
/// the box and never repeat a location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryDocument<T>", into = "TrajectoryDocument<T>")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + DeserializeOwned"))]
pub struct Trajectory<T> {
    space: SearchSpace<T>,
    samples: Vec<Sample<T>>,
}

/// On-disk layout: `{"space": {"lower": [..], "upper": [..]}, "samples": [{"x": [..], "f": ..}]}`.
#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + DeserializeOwned"))]
struct TrajectoryDocument<T> {
    space: SearchSpace<T>,
    samples: Vec<Sample<T>>,
}

impl<T: Scalar> TryFrom<TrajectoryDocument<T>> for Trajectory<T> {
    type Error = TrajectoryError;
    fn try_from(doc: TrajectoryDocument<T>) -> Result<Self, TrajectoryError> {
        Trajectory::new(doc.space, doc.samples)
    }
}

impl<T> From<Trajectory<T>> for TrajectoryDocument<T> {
    fn from(t: Trajectory<T>) -> Self {
        TrajectoryDocument { space: t.space, samples: t.samples }
    }
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(space: SearchSpace<T>, samples: Vec<Sample<T>>) -> Result<Self, TrajectoryError> {
        let mut t = Self { space, samples: Vec::with_capacity(samples.len()) };
        for s in samples {
            t.push(s)?;
        }
        Ok(t)
    }

    pub fn empty(space: SearchSpace<T>) -> Self {
        Self { space, samples: Vec::new() }
    }

    /// Appends a trial after validating bounds, finiteness and uniqueness.
    pub fn push(&mut self, sample: Sample<T>) -> Result<usize, TrajectoryError> {
        let record = self.samples.len();
        self.space.check_point(record, &sample.x)?;
        if !sample.f.is_finite() {
            return Err(TrajectoryError::NonFiniteObjective {
                record,
                value: sample.f.to_f64().unwrap_or(f64::NAN),
            });
        }
        if let Some(first) = self.samples.iter().position(|s| s.x == sample.x) {
            return Err(TrajectoryError::Duplicate { record, first });
        }
        self.samples.push(sample);
        Ok(record)
    }

    pub fn space(&self) -> &SearchSpace<T> {
        &self.space
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn xs(&self) -> Vec<Vec<T>> {
        self.samples.iter().map(|s| s.x.clone()).collect()
    }

    pub fn fs(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.f).collect()
    }

    /// Smallest objective value seen, if any.
    pub fn best(&self) -> Option<T> {
        self.samples.iter().map(|s| s.f).reduce(T::min)
    }

    /// The first `n` trials (all of them when `n >= len`).
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            space: self.space.clone(),
            samples: self.samples[..n.min(self.samples.len())].to_vec(),
        }
    }

    /// Running minimum of the objective, one entry per sample.
    pub fn running_best(&self) -> Vec<T> {
        let mut best = T::infinity();
        self.samples
            .iter()
            .map(|s| {
                best = best.min(s.f);
                best
            })
            .collect()
    }
}

/// Affine map between a box and `[-1, 1]^p`: `x' = 2 (x - l) / (u - l) - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer<T> {
    lower: Vec<T>,
    width: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn new(space: &SearchSpace<T>) -> Result<Self, SpaceError> {
        for axis in 0..space.dim() {
            let w = space.width(axis);
            if !(w > T::zero()) || !w.is_finite() {
                return Err(SpaceError::DegenerateAxis {
                    axis,
                    lower: space.lower()[axis].to_f64().unwrap_or(f64::NAN),
                    upper: space.upper()[axis].to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self {
            lower: space.lower().to_vec(),
            width: (0..space.dim()).map(|i| space.width(i)).collect(),
        })
    }

    pub fn to_unit(&self, x: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        x.iter()
            .zip(self.lower.iter().zip(&self.width))
            .map(|(&v, (&l, &w))| two * (v - l) / w - T::one())
            .collect()
    }

    pub fn from_unit(&self, x: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        x.iter()
            .zip(self.lower.iter().zip(&self.width))
            .map(|(&v, (&l, &w))| l + (v + T::one()) * w * half)
            .collect()
    }

    /// Length-scale weights in unit coordinates for weights given in problem
    /// units: `(x_a - x_b)^2 λ = (x'_a - x'_b)^2 λ (w/2)^2`.
    pub fn lambda_to_unit(&self, lambda: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        lambda
            .iter()
            .zip(&self.width)
            .map(|(&lam, &w)| lam * (w * half) * (w * half))
            .collect()
    }

    pub fn lambda_from_unit(&self, lambda: &[T]) -> Vec<T> {
        let half = T::lit(0.5);
        lambda
            .iter()
            .zip(&self.width)
            .map(|(&lam, &w)| lam / ((w * half) * (w * half)))
            .collect()
    }
}

/// Maps a trajectory onto `[-1, 1]^p`, keeping objective values. Returns the
/// normalized trajectory together with the map so callers can invert it.
pub fn normalize_trajectory<T: Scalar>(
    t: &Trajectory<T>,
) -> Result<(Trajectory<T>, Normalizer<T>), TrajectoryError> {
    let map = Normalizer::new(t.space())?;
    let samples = t
        .samples()
        .iter()
        .map(|s| Sample::new(map.to_unit(&s.x), s.f))
        .collect();
    let normalized = Trajectory::new(SearchSpace::unit(t.dim()), samples)?;
    Ok((normalized, map))
}

impl<T: Scalar + Serialize + DeserializeOwned> Trajectory<T> {
    pub fn to_json(&self) -> Result<String, TrajectoryError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, TrajectoryError> {
        // Parse to a loose document first so validation errors keep their record index.
        let doc: TrajectoryDocument<T> = serde_json::from_str(text)?;
        Trajectory::try_from(doc)
    }
}

pub fn save_trajectory<T>(t: &Trajectory<T>, path: impl AsRef<Path>) -> Result<(), TrajectoryError>
where
    T: Scalar + Serialize + DeserializeOwned,
{
    fs::write(path, t.to_json()?)?;
    Ok(())
}

pub fn load_trajectory<T>(path: impl AsRef<Path>) -> Result<Trajectory<T>, TrajectoryError>
where
    T: Scalar + Serialize + DeserializeOwned,
{
    Trajectory::from_json(&fs::read_to_string(path)?)
}
