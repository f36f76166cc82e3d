//! Dataset descriptors, raw binary slices, velocity sources and the
//! analytic benchmark flows.
//!
//! A descriptor is a small JSON document next to one raw little-endian
//! `f64` file per time slice. Samples are row-major with `x1` as the slow
//! axis. Velocity slices hold the `u` block followed by the `v` block;
//! tensor slices hold `a11`, `a12`, `a22`. NaN samples mark land or
//! otherwise missing nodes and become masks.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldgrid::{Grid2D, ScalarField, SymTensorField, VectorField2D};
use crate::tensor::{Point2, SymTensor2, Vec2};

pub const SECONDS_PER_DAY: f64 = 86400.0;

/// Default latitude exclusion band around the equator and the poles.
pub const DEFAULT_THETA_MIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Velocity,
    Ssh,
    Streamfunction,
    /// Symmetric tensor samples for the generic metric mode.
    Tensor,
    /// Any other scalar field, such as exported diagnostics.
    Scalar,
}

impl DatasetKind {
    fn blocks(self) -> usize {
        match self {
            DatasetKind::Velocity => 2,
            DatasetKind::Ssh | DatasetKind::Streamfunction | DatasetKind::Scalar => 1,
            DatasetKind::Tensor => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    DegreesLonlat,
    Cartesian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub kind: DatasetKind,
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
    pub n1: usize,
    pub n2: usize,
    pub units: Units,
    /// Slice times in days, strictly increasing.
    pub times: Vec<f64>,
    /// Data files relative to the descriptor's directory.
    pub files: Vec<String>,
}

impl DatasetDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.kind == DatasetKind::Ssh && self.units != Units::DegreesLonlat {
            return Err(Error::Parse("ssh datasets must use degrees_lonlat units".into()));
        }
        if self.times.is_empty() {
            return Err(Error::Parse("descriptor lists no times".into()));
        }
        if self.times.iter().any(|t| !t.is_finite()) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("times must be finite and strictly increasing".into()));
        }
        if self.files.len() != self.times.len() {
            let missing = self.times.len().saturating_sub(self.files.len());
            if missing > 0 {
                return Err(Error::MissingFile(PathBuf::from(format!(
                    "<{missing} slice file(s) not listed for {} times>",
                    self.times.len()
                ))));
            }
            return Err(Error::Parse(format!(
                "{} files listed for {} times",
                self.files.len(),
                self.times.len()
            )));
        }
        self.raw_grid().map(|_| ())
    }

    /// Grid in descriptor units (degrees for lon-lat data).
    pub fn raw_grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.x1_min, self.x1_max, self.x2_min, self.x2_max, self.n1, self.n2)
    }

    /// Grid in internal units (radians for lon-lat data).
    pub fn grid(&self) -> Result<Grid2D> {
        match self.units {
            Units::Cartesian => self.raw_grid(),
            Units::DegreesLonlat => Grid2D::new(
                self.x1_min.to_radians(),
                self.x1_max.to_radians(),
                self.x2_min.to_radians(),
                self.x2_max.to_radians(),
                self.n1,
                self.n2,
            ),
        }
    }

    fn slice_len(&self) -> usize {
        self.kind.blocks() * self.n1 * self.n2
    }
}

#[derive(Clone, Debug)]
pub enum DatasetPayload {
    Velocity(Vec<VectorField2D>),
    Scalar(Vec<ScalarField>),
    Tensor(Vec<SymTensorField>),
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub descriptor: DatasetDescriptor,
    pub payload: DatasetPayload,
}

pub fn read_descriptor(path: &Path) -> Result<DatasetDescriptor> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    let d: DatasetDescriptor = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    d.validate()?;
    Ok(d)
}

/// Reads the raw sample slices exactly as stored.
pub fn read_raw_slices(descriptor_path: &Path) -> Result<(DatasetDescriptor, Vec<Vec<f64>>)> {
    let d = read_descriptor(descriptor_path)?;
    let dir = descriptor_path.parent().unwrap_or(Path::new("."));
    let mut slices = Vec::with_capacity(d.files.len());
    for f in &d.files {
        let p = dir.join(f);
        let bytes = match fs::read(&p) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(p)),
            Err(e) => return Err(e.into()),
        };
        if bytes.len() != d.slice_len() * 8 {
            return Err(Error::ShapeMismatch(format!(
                "{} holds {} bytes, expected {}",
                p.display(),
                bytes.len(),
                d.slice_len() * 8
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        slices.push(values);
    }
    Ok((d, slices))
}

/// Writes `descriptor` to `path` and each slice to the file it names.
pub fn write_dataset(path: &Path, descriptor: &DatasetDescriptor, slices: &[Vec<f64>]) -> Result<()> {
    descriptor.validate()?;
    if slices.len() != descriptor.files.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} slices for {} files",
            slices.len(),
            descriptor.files.len()
        )));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    for (f, s) in descriptor.files.iter().zip(slices) {
        if s.len() != descriptor.slice_len() {
            return Err(Error::ShapeMismatch(format!("slice for {f} has {} samples", s.len())));
        }
        let mut bytes = Vec::with_capacity(s.len() * 8);
        for v in s {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(f), bytes)?;
    }
    let json = serde_json::to_string_pretty(descriptor).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

fn masked_values(block: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let valid: Vec<bool> = block.iter().map(|v| v.is_finite()).collect();
    let n_valid = valid.iter().filter(|v| **v).count();
    let mean = if n_valid == 0 {
        0.0
    } else {
        block.iter().filter(|v| v.is_finite()).sum::<f64>() / n_valid as f64
    };
    let filled = block.iter().map(|v| if v.is_finite() { *v } else { mean }).collect();
    (filled, valid)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (d, slices) = read_raw_slices(path)?;
    let grid = d.grid()?;
    let n = grid.len();
    let payload = match d.kind {
        DatasetKind::Velocity => {
            let mut out = Vec::with_capacity(slices.len());
            for (s, t) in slices.iter().zip(&d.times) {
                let (u, vu) = masked_values(&s[..n]);
                let (v, vv) = masked_values(&s[n..]);
                let valid = vu.iter().zip(&vv).map(|(a, b)| *a && *b).collect();
                out.push(VectorField2D::with_mask(grid.clone(), u, v, valid)?.with_time(*t));
            }
            DatasetPayload::Velocity(out)
        }
        DatasetKind::Ssh | DatasetKind::Streamfunction | DatasetKind::Scalar => {
            let mut out = Vec::with_capacity(slices.len());
            for (s, t) in slices.iter().zip(&d.times) {
                let (filled, valid) = masked_values(s);
                let fill = filled.iter().zip(&valid).find(|(_, ok)| !**ok).map_or(0.0, |(v, _)| *v);
                let values = filled.iter().zip(&valid).map(|(v, ok)| ok.then_some(*v)).collect();
                out.push(ScalarField::with_mask(grid.clone(), values, fill)?.with_time(*t));
            }
            DatasetPayload::Scalar(out)
        }
        DatasetKind::Tensor => {
            let mut out = Vec::with_capacity(slices.len());
            for s in &slices {
                let (a11, m1) = masked_values(&s[..n]);
                let (a12, m2) = masked_values(&s[n..2 * n]);
                let (a22, m3) = masked_values(&s[2 * n..]);
                let valid = (0..n).map(|k| m1[k] && m2[k] && m3[k]).collect();
                out.push(SymTensorField::with_mask(grid.clone(), a11, a12, a22, valid)?);
            }
            DatasetPayload::Tensor(out)
        }
    };
    Ok(Dataset { descriptor: d, payload })
}

/// A time-dependent velocity field that trajectories can be integrated in.
pub trait Velocity: Sync {
    fn velocity(&self, t: f64, x: Point2) -> Result<Vec2>;
    fn contains(&self, x: Point2) -> bool;
    /// Closed time interval on which the field is defined.
    fn time_span(&self) -> (f64, f64);
}

/// Gridded velocity slices with linear interpolation in time.
///
/// `rate_scale` multiplies every returned velocity; use it to integrate
/// data stored per second in time units of days.
#[derive(Clone, Debug)]
pub struct VelocitySeries {
    slices: Vec<VectorField2D>,
    times: Vec<f64>,
    rate_scale: f64,
}

impl VelocitySeries {
    /// Slices must share one grid and carry strictly increasing times. A
    /// single slice is treated as a steady field.
    pub fn new(slices: Vec<VectorField2D>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::BadParams("velocity series needs at least one slice".into()));
        }
        let grid = slices[0].grid().clone();
        if slices.iter().any(|s| s.grid() != &grid) {
            return Err(Error::ShapeMismatch("velocity slices live on different grids".into()));
        }
        let times: Vec<f64> = if slices.len() == 1 {
            vec![slices[0].time.unwrap_or(0.0)]
        } else {
            slices
                .iter()
                .map(|s| s.time.ok_or_else(|| Error::BadParams("velocity slice without time stamp".into())))
                .collect::<Result<_>>()?
        };
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadParams("slice times must be strictly increasing".into()));
        }
        Ok(VelocitySeries { slices, times, rate_scale: 1.0 })
    }

    pub fn steady(field: VectorField2D) -> Self {
        let t = field.time.unwrap_or(0.0);
        VelocitySeries { slices: vec![field], times: vec![t], rate_scale: 1.0 }
    }

    pub fn with_rate_scale(mut self, scale: f64) -> Self {
        self.rate_scale = scale;
        self
    }

    pub fn grid(&self) -> &Grid2D {
        self.slices[0].grid()
    }

    pub fn slices(&self) -> &[VectorField2D] {
        &self.slices
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        if self.slices.len() == 1 {
            return Ok((0, 0.0));
        }
        let (start, end) = (self.times[0], self.times[self.times.len() - 1]);
        if !(start..=end).contains(&t) {
            return Err(Error::TimeOutOfRange { t, start, end });
        }
        let k = self.times.partition_point(|s| *s <= t).clamp(1, self.times.len() - 1) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        Ok((k, w))
    }

    /// Snapshot at time `t` built from nodal samples.
    pub fn at_time(&self, t: f64) -> Result<VectorField2D> {
        let (k, w) = self.bracket(t)?;
        let a = &self.slices[k];
        if w == 0.0 || self.slices.len() == 1 {
            return Ok(a.clone());
        }
        let b = &self.slices[k + 1];
        let mix = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| (1.0 - w) * x + w * y).collect::<Vec<_>>();
        let valid: Vec<bool> = (0..a.grid().len()).map(|i| a.is_valid_node(i) && b.is_valid_node(i)).collect();
        Ok(VectorField2D::with_mask(a.grid().clone(), mix(a.u(), b.u()), mix(a.v(), b.v()), valid)?.with_time(t))
    }
}

impl Velocity for VelocitySeries {
    fn velocity(&self, t: f64, x: Point2) -> Result<Vec2> {
        let (k, w) = self.bracket(t)?;
        let a = self.slices[k].interpolate(x)?;
        let v = if w == 0.0 { a } else { a * (1.0 - w) + self.slices[k + 1].interpolate(x)? * w };
        Ok(v * self.rate_scale)
    }

    fn contains(&self, x: Point2) -> bool {
        self.grid().contains(x)
    }

    fn time_span(&self) -> (f64, f64) {
        if self.slices.len() == 1 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (self.times[0], self.times[self.times.len() - 1])
        }
    }
}

/// Closed-form benchmark flows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticFlow {
    /// `f = (x1, -x2)`.
    Saddle,
    /// `f = omega (-x2, x1)`.
    SolidRotation { omega: f64 },
    /// Streamfunction `A sin(pi g) sin(pi x2)` with
    /// `g = eps sin(w t) x1^2 + (1 - 2 eps sin(w t)) x1` on `[0,2] x [0,1]`.
    DoubleGyre { amplitude: f64, epsilon: f64, omega: f64 },
}

impl AnalyticFlow {
    pub fn double_gyre() -> Self {
        AnalyticFlow::DoubleGyre { amplitude: 0.1, epsilon: 0.25, omega: 2.0 * PI / 10.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AnalyticFlow::Saddle => Ok(()),
            AnalyticFlow::SolidRotation { omega } if omega.is_finite() => Ok(()),
            AnalyticFlow::DoubleGyre { amplitude, epsilon, omega }
                if amplitude.is_finite() && epsilon.is_finite() && omega.is_finite() && (0.0..0.5).contains(&epsilon) =>
            {
                Ok(())
            }
            _ => Err(Error::BadParams(format!("invalid analytic flow parameters {self:?}"))),
        }
    }

    pub fn velocity(&self, t: f64, x: Point2) -> Vec2 {
        match *self {
            AnalyticFlow::Saddle => Vec2::new(x.x, -x.y),
            AnalyticFlow::SolidRotation { omega } => Vec2::new(-omega * x.y, omega * x.x),
            AnalyticFlow::DoubleGyre { amplitude, epsilon, omega } => {
                let a = epsilon * (omega * t).sin();
                let b = 1.0 - 2.0 * a;
                let g = a * x.x * x.x + b * x.x;
                let dg = 2.0 * a * x.x + b;
                Vec2::new(
                    -PI * amplitude * (PI * g).sin() * (PI * x.y).cos(),
                    PI * amplitude * (PI * g).cos() * (PI * x.y).sin() * dg,
                )
            }
        }
    }

    /// Streamfunction with `u = -psi_2`, `v = psi_1`.
    pub fn streamfunction(&self, t: f64, x: Point2) -> f64 {
        match *self {
            AnalyticFlow::Saddle => -x.x * x.y,
            AnalyticFlow::SolidRotation { omega } => 0.5 * omega * (x.x * x.x + x.y * x.y),
            AnalyticFlow::DoubleGyre { amplitude, epsilon, omega } => {
                let a = epsilon * (omega * t).sin();
                let g = a * x.x * x.x + (1.0 - 2.0 * a) * x.x;
                amplitude * (PI * g).sin() * (PI * x.y).sin()
            }
        }
    }

    /// Natural domain `(x1_min, x1_max, x2_min, x2_max)` where one exists.
    pub fn natural_domain(&self) -> Option<(f64, f64, f64, f64)> {
        match self {
            AnalyticFlow::DoubleGyre { .. } => Some((0.0, 2.0, 0.0, 1.0)),
            _ => None,
        }
    }

    pub fn sample(&self, grid: &Grid2D, t: f64) -> Result<VectorField2D> {
        self.validate()?;
        Ok(VectorField2D::from_fn(grid.clone(), |x| self.velocity(t, x))?.with_time(t))
    }

    pub fn sample_series(&self, grid: &Grid2D, times: &[f64]) -> Result<VelocitySeries> {
        let slices = times.iter().map(|t| self.sample(grid, *t)).collect::<Result<Vec<_>>>()?;
        VelocitySeries::new(slices)
    }

    pub fn sample_streamfunction(&self, grid: &Grid2D, t: f64) -> Result<ScalarField> {
        self.validate()?;
        Ok(ScalarField::from_fn(grid.clone(), |x| self.streamfunction(t, x))?.with_time(t))
    }
}

/// An analytic flow restricted to a rectangle.
#[derive(Clone, Copy, Debug)]
pub struct BoundedFlow {
    pub flow: AnalyticFlow,
    pub bounds: (f64, f64, f64, f64),
}

impl BoundedFlow {
    pub fn new(flow: AnalyticFlow, bounds: (f64, f64, f64, f64)) -> Result<Self> {
        flow.validate()?;
        let (a, b, c, d) = bounds;
        if !(a < b && c < d) {
            return Err(Error::BadParams("empty flow domain".into()));
        }
        Ok(BoundedFlow { flow, bounds })
    }

    /// The flow on its natural domain, or on the given grid's box.
    pub fn on_grid(flow: AnalyticFlow, grid: &Grid2D) -> Result<Self> {
        BoundedFlow::new(flow, (grid.x1_min(), grid.x1_max(), grid.x2_min(), grid.x2_max()))
    }
}

impl Velocity for BoundedFlow {
    fn velocity(&self, t: f64, x: Point2) -> Result<Vec2> {
        if !self.contains(x) {
            return Err(Error::out_of_domain(x));
        }
        Ok(self.flow.velocity(t, x))
    }

    fn contains(&self, x: Point2) -> bool {
        let (a, b, c, d) = self.bounds;
        x.x >= a && x.x <= b && x.y >= c && x.y <= d
    }

    fn time_span(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Closed form of the demonstration metric whose unit circle is a closed
/// null-geodesic: `Q [[1, 1], [1, r - 1]] Q^T` with `Q` holding the radial
/// and tangential unit vectors as columns.
pub fn polar_metric_demo_at(x: Point2) -> SymTensor2 {
    let r = x.norm();
    let n = if r > 0.0 { x * (1.0 / r) } else { Vec2::new(1.0, 0.0) };
    let t = n.rot90();
    // n n^T + (n t^T + t n^T) + (r - 1) t t^T
    let d = r - 1.0;
    SymTensor2::new(
        n.x * n.x + 2.0 * n.x * t.x + d * t.x * t.x,
        n.x * n.y + n.x * t.y + t.x * n.y + d * t.x * t.y,
        n.y * n.y + 2.0 * n.y * t.y + d * t.y * t.y,
    )
}

pub fn polar_metric_demo(grid: &Grid2D) -> Result<SymTensorField> {
    SymTensorField::from_fn(grid.clone(), polar_metric_demo_at)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarthParams {
    /// Gravitational acceleration, m/s^2.
    pub g: f64,
    /// Mean Earth radius, m.
    pub r_earth: f64,
    /// Mean angular velocity, rad/s.
    pub omega: f64,
}

impl Default for EarthParams {
    fn default() -> Self {
        EarthParams { g: 9.81, r_earth: 6_371_000.0, omega: 7.2921e-5 }
    }
}

impl EarthParams {
    pub fn validate(&self) -> Result<()> {
        if [self.g, self.r_earth, self.omega].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::BadParams("earth parameters must be positive".into()))
        }
    }

    pub fn coriolis(&self, theta: f64) -> f64 {
        2.0 * self.omega * theta.sin()
    }
}

/// Prefactor of the geostrophic balance on the sphere.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GeostrophicPrefactor {
    /// `g / (R^2 f cos(theta))`, giving angular rates in rad/s.
    #[default]
    RSquared,
    /// `g / (R f cos(theta))`, one power of `R` fewer.
    R,
}

/// Angular geostrophic velocity `(lon_dot, lat_dot)` from sea-surface
/// height sampled on a lon-lat grid in radians.
pub fn geostrophic_velocity(
    h: &[ScalarField],
    params: &EarthParams,
    prefactor: GeostrophicPrefactor,
    theta_min: f64,
) -> Result<Vec<VectorField2D>> {
    params.validate()?;
    let mut out = Vec::with_capacity(h.len());
    for field in h {
        let grid = field.grid();
        for theta in [grid.x2_min(), grid.x2_max()] {
            if theta.abs() > 0.5 * PI - theta_min {
                return Err(Error::NearPole { theta });
            }
        }
        let closest = if grid.x2_min() <= 0.0 && grid.x2_max() >= 0.0 {
            0.0
        } else if grid.x2_min().abs() < grid.x2_max().abs() {
            grid.x2_min()
        } else {
            grid.x2_max()
        };
        if closest.abs() < theta_min {
            return Err(Error::NearEquator { theta: closest });
        }
        let radius_power = match prefactor {
            GeostrophicPrefactor::RSquared => params.r_earth * params.r_earth,
            GeostrophicPrefactor::R => params.r_earth,
        };
        let n = grid.len();
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut valid = vec![true; n];
        for k in 0..n {
            let x = grid.node_at(k);
            let g = if field.is_valid_node(k) { field.gradient(x) } else { Err(Error::Masked { x1: x.x, x2: x.y }) };
            match g {
                Ok(grad) => {
                    let theta = x.y;
                    let c = params.g / (radius_power * params.coriolis(theta) * theta.cos());
                    u[k] = -c * grad.y;
                    v[k] = c * grad.x;
                }
                Err(Error::Masked { .. }) => valid[k] = false,
                Err(e) => return Err(e),
            }
        }
        let mut vf = VectorField2D::with_mask(grid.clone(), u, v, valid)?;
        vf.time = field.time;
        out.push(vf);
    }
    Ok(out)
}
