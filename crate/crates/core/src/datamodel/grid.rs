use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent `(nx, ny, nz)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::Config(format!("grid dims must be positive, got {nx}x{ny}x{nz}")));
        }
        Ok(Dims { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear offset of `(x, y, z)`; x varies fastest.
    pub fn index(&self, x: usize, y: usize, z: usize) -> Result<usize> {
        if x >= self.nx || y >= self.ny || z >= self.nz {
            return Err(Error::Bounds(format!("({x}, {y}, {z}) outside {}x{}x{}", self.nx, self.ny, self.nz)));
        }
        Ok(x + self.nx * (y + self.ny * z))
    }

    /// Inverse of [`Dims::index`]; caller guarantees `i < len()`.
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.nx;
        let y = (i / self.nx) % self.ny;
        let z = i / (self.nx * self.ny);
        (x, y, z)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// `x + nx * (y + ny * z)` with bounds checking.
pub fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> Result<usize> {
    dims.index(x, y, z)
}

/// Voxel spacing in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        for s in [sx, sy, sz] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("voxel spacing must be positive, got {s}")));
            }
        }
        Ok(Spacing { sx, sy, sz })
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Self::new(s, s, s)
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.sx * self.sy * self.sz
    }
}

/// Dense scalar field over a 3D grid, x-fastest.
///
/// Dose is in Gy; CT and masks are unitless. Masks hold only 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    dims: Dims,
    spacing: Spacing,
    values: Vec<f32>,
}

impl VoxelGrid {
    pub fn new(dims: Dims, spacing: Spacing, values: Vec<f32>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::Structural(format!("grid {dims} needs {} values, got {}", dims.len(), values.len())));
        }
        Ok(VoxelGrid { dims, spacing, values })
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Self {
        VoxelGrid { dims, spacing, values: vec![0.0; dims.len()] }
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f32) -> Self {
        VoxelGrid { dims, spacing, values: vec![value; dims.len()] }
    }

    /// Like [`VoxelGrid::new`] but also rejects anything outside {0, 1}.
    pub fn mask(dims: Dims, spacing: Spacing, values: Vec<f32>) -> Result<Self> {
        let grid = Self::new(dims, spacing, values)?;
        if !grid.is_binary() {
            return Err(Error::Structural("mask grid contains values other than 0 and 1".into()));
        }
        Ok(grid)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> Result<f32> {
        Ok(self.values[self.dims.index(x, y, z)?])
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Number of voxels with a nonzero value.
    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn same_geometry(&self, other: &VoxelGrid) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    /// Returns a copy with the values transformed element-wise.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> VoxelGrid {
        VoxelGrid { dims: self.dims, spacing: self.spacing, values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_examples() {
        let d2 = Dims::cube(2).unwrap();
        assert_eq!(linear_index(d2, 0, 0, 0).unwrap(), 0);
        assert_eq!(linear_index(d2, 1, 1, 1).unwrap(), 7);
        let d128 = Dims::cube(128).unwrap();
        assert_eq!(linear_index(d128, 5, 3, 2).unwrap(), 33157);
    }

    #[test]
    fn linear_index_rejects_out_of_bounds() {
        let d = Dims::new(2, 3, 4).unwrap();
        assert!(matches!(linear_index(d, 2, 0, 0), Err(Error::Bounds(_))));
        assert!(matches!(linear_index(d, 0, 3, 0), Err(Error::Bounds(_))));
        assert!(matches!(linear_index(d, 0, 0, 4), Err(Error::Bounds(_))));
    }

    #[test]
    fn linear_index_is_a_bijection() {
        let d = Dims::new(3, 4, 5).unwrap();
        let mut seen = vec![false; d.len()];
        for z in 0..5 {
            for y in 0..4 {
                for x in 0..3 {
                    let i = d.index(x, y, z).unwrap();
                    assert!(!seen[i]);
                    seen[i] = true;
                    assert_eq!(d.coords(i), (x, y, z));
                }
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn grid_validation() {
        let d = Dims::cube(2).unwrap();
        let s = Spacing::isotropic(1.0).unwrap();
        assert!(VoxelGrid::new(d, s, vec![0.0; 7]).is_err());
        assert!(VoxelGrid::mask(d, s, vec![0.5; 8]).is_err());
        assert!(VoxelGrid::mask(d, s, vec![1.0; 8]).is_ok());
        assert!(Spacing::new(1.0, 0.0, 1.0).is_err());
        assert!(Dims::new(0, 1, 1).is_err());
    }
}
