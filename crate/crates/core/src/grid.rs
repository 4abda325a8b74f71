use crate::{Error, Result};
use alloc::format;
#[allow(unused_imports)] // shadowed by inherent methods once std is linked
use num_traits::Float;

/// A point of the plane.
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

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Cell-centered uniform grid on `[-L, L]^2` with `n` sites per axis.
///
/// Site `(i, j)` sits at `x = -L + (i + 1/2) h`, `y = -L + (j + 1/2) h` and is
/// stored at row-major index `j * n + i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    half_extent: f64,
    h: f64,
}

impl Grid {
    pub const MIN_SITES: usize = 16;

    pub fn new(n: usize, half_extent: f64) -> Result<Self> {
        if n < Self::MIN_SITES || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("n = {n} must be even and at least {}", Self::MIN_SITES)));
        }
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::InvalidGrid(format!("half extent {half_extent} must be positive and finite")));
        }
        Ok(Self { n, half_extent, h: 2.0 * half_extent / n as f64 })
    }

    /// The default lab grid: `n = 256`, `L = 16`, `h = 1/8`.
    pub fn standard() -> Self {
        Self::new(256, 16.0).expect("valid default grid")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_extent + (i as f64 + 0.5) * self.h
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Point {
        Point::new(self.coord(i), self.coord(j))
    }

    #[inline]
    pub fn point_of(&self, k: usize) -> Point {
        self.point(k % self.n, k / self.n)
    }

    /// Fractional site coordinate of a physical coordinate (site `i` at `i`).
    #[inline]
    pub fn fractional(&self, x: f64) -> f64 {
        (x + self.half_extent) / self.h - 0.5
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extent * self.half_extent
    }

    /// Nearest site to a point, clamped to the grid.
    pub fn nearest_site(&self, p: Point) -> (usize, usize) {
        let clamp = |v: f64| -> usize {
            let r = v.round();
            if r < 0.0 {
                0
            } else if r as usize >= self.n {
                self.n - 1
            } else {
                r as usize
            }
        };
        (clamp(self.fractional(p.x)), clamp(self.fractional(p.y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_times_n_is_extent() {
        for &(n, l) in &[(16, 1.0), (128, 16.0), (256, 16.0), (512, 16.0), (96, 3.0)] {
            let g = Grid::new(n, l).unwrap();
            assert_eq!(g.spacing() * n as f64, 2.0 * l);
        }
    }

    #[test]
    fn rejects_odd_or_small() {
        assert!(Grid::new(15, 1.0).is_err());
        assert!(Grid::new(17, 1.0).is_err());
        assert!(Grid::new(14, 1.0).is_err());
        assert!(Grid::new(16, 0.0).is_err());
        assert!(Grid::new(16, f64::NAN).is_err());
    }

    #[test]
    fn sites_symmetric_about_origin() {
        let g = Grid::new(32, 4.0).unwrap();
        for i in 0..32 {
            assert_eq!(g.coord(i), -g.coord(31 - i));
        }
        assert_eq!(g.nearest_site(Point::new(g.coord(5), g.coord(7))), (5, 7));
    }
}
