//! Pixel grids and circular detector arrays.
//!
//! All coordinates are physical, in meters. Pixel `(i, j)` has `i` along x
//! and `j` along y; flat storage is row-major with x fastest, so the linear
//! index is `j * nx + i`.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Square-pixel image discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Pixel pitch in meters.
    pub dx: f64,
    /// Physical center of pixel (0, 0).
    pub origin: Point,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, origin: Point) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return invalid(format!("grid dimensions must be positive, got {nx}x{ny}"));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return invalid(format!("pixel pitch must be positive, got {dx}"));
        }
        Ok(Self { nx, ny, dx, origin })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dx)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center_of(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + i as f64 * self.dx,
            self.origin.y + j as f64 * self.dx,
        )
    }

    /// Continuous pixel coordinates of a physical point; pixel centers sit on
    /// integer values.
    pub fn continuous_index(&self, p: Point) -> (f64, f64) {
        ((p.x - self.origin.x) / self.dx, (p.y - self.origin.y) / self.dx)
    }

    /// Nearest pixel to a physical point, if it falls inside the grid.
    pub fn pixel_at(&self, p: Point) -> Option<(usize, usize)> {
        let (u, v) = self.continuous_index(p);
        let (i, j) = (u.round(), v.round());
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            return None;
        }
        Some((i as usize, j as usize))
    }

    /// Iterator over all pixel centers in storage order.
    pub fn centers(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| self.center_of(i, j)))
    }
}

/// Square grid of `nx` x `ny` pixels spanning `extent_m` along x, centered on
/// the physical origin.
pub fn make_grid(nx: usize, ny: usize, extent_m: f64) -> Result<Grid> {
    if !(extent_m > 0.0 && extent_m.is_finite()) {
        return invalid(format!("grid extent must be positive, got {extent_m}"));
    }
    if nx == 0 || ny == 0 {
        return invalid(format!("grid dimensions must be positive, got {nx}x{ny}"));
    }
    let dx = extent_m / nx as f64;
    let origin = Point::new(
        -0.5 * (nx as f64 - 1.0) * dx,
        -0.5 * (ny as f64 - 1.0) * dx,
    );
    Grid::new(nx, ny, dx, origin)
}

/// Evenly spaced ring of point detectors; channel 0 at angle 0, counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    pub count: usize,
    pub radius: f64,
    pub center: Point,
    pub positions: Vec<Point>,
}

impl SensorArray {
    pub fn angle(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.count as f64
    }

    /// Unit normal at channel `k` pointing toward the array center.
    pub fn inward_normal(&self, k: usize) -> Point {
        let a = self.angle(k);
        Point::new(-a.cos(), -a.sin())
    }

    /// Arc length of the ring covered by one element.
    pub fn element_arc(&self) -> f64 {
        2.0 * PI * self.radius / self.count as f64
    }
}

pub fn make_sensor_array(count: usize, radius: f64, center: Point) -> Result<SensorArray> {
    if count < 2 {
        return invalid(format!("sensor array needs at least 2 channels, got {count}"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid(format!("array radius must be positive, got {radius}"));
    }
    let positions = (0..count)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / count as f64;
            Point::new(center.x + radius * a.cos(), center.y + radius * a.sin())
        })
        .collect();
    Ok(SensorArray {
        count,
        radius,
        center,
        positions,
    })
}
