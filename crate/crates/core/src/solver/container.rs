//! Binary solution container.
//!
//! Layout, all little endian:
//!
//! | bytes | content                               |
//! |-------|---------------------------------------|
//! | 8     | magic `SGBEMSOL`                      |
//! | 4     | format version (1)                    |
//! | 4     | n, number of random variables         |
//! | 4     | J, polynomial degree                  |
//! | 4     | reserved, 0                           |
//! | 8 × 3 | modes, steps, elements                |
//! | 8 × 4 | Δt, c, requested CFL, achieved CFL    |
//! | 32    | SHA-256 of the mesh                   |
//! | 8 × N | coefficients, mode-major (i, m, s)    |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::ModeTensor;
use crate::error::{Error, Result};
use crate::mesh::{SurfaceMesh, TimeGrid};

const MAGIC: &[u8; 8] = b"SGBEMSOL";
const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 * 4 + 8 * 3 + 8 * 4 + 32;

/// SHA-256 over vertex coordinates and triangle indices.
pub fn mesh_hash(mesh: &SurfaceMesh) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((mesh.vertices().len() as u64).to_le_bytes());
    for v in mesh.vertices() {
        for c in v {
            h.update(c.to_le_bytes());
        }
    }
    h.update((mesh.len() as u64).to_le_bytes());
    for t in mesh.triangles() {
        for &i in t {
            h.update((i as u64).to_le_bytes());
        }
    }
    h.finalize().into()
}

#[derive(Debug, Clone)]
pub struct StochasticSolution {
    pub dim: usize,
    pub degree: usize,
    pub grid: TimeGrid,
    pub mesh_hash: [u8; 32],
    pub coeffs: ModeTensor,
}

impl StochasticSolution {
    pub fn new(coeffs: ModeTensor, dim: usize, degree: usize, grid: TimeGrid, mesh: &SurfaceMesh) -> Result<Self> {
        let modes = (degree + 1).pow(dim as u32);
        if coeffs.modes != modes {
            return Err(Error::DimensionMismatch {
                expected: modes,
                got: coeffs.modes,
            });
        }
        if coeffs.steps != grid.steps {
            return Err(Error::DimensionMismatch {
                expected: grid.steps,
                got: coeffs.steps,
            });
        }
        if coeffs.elements != mesh.len() {
            return Err(Error::DimensionMismatch {
                expected: mesh.len(),
                got: coeffs.elements,
            });
        }
        if let Some(k) = coeffs.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Assembly(format!("non-finite solution coefficient at flat index {k}")));
        }
        Ok(StochasticSolution {
            dim,
            degree,
            grid,
            mesh_hash: mesh_hash(mesh),
            coeffs,
        })
    }

    pub fn matches_mesh(&self, mesh: &SurfaceMesh) -> bool {
        self.mesh_hash == mesh_hash(mesh)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.coeffs;
        let mut out = Vec::with_capacity(HEADER + 8 * c.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.degree as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for d in [c.modes, c.steps, c.elements] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.grid.dt.to_le_bytes());
        out.extend_from_slice(&self.grid.c.to_le_bytes());
        out.extend_from_slice(&self.grid.requested_cfl.to_le_bytes());
        out.extend_from_slice(&self.grid.achieved_cfl.to_le_bytes());
        out.extend_from_slice(&self.mesh_hash);
        for v in &c.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Container(m.to_string());
        if bytes.len() < HEADER {
            return Err(bad("truncated header"));
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(8);
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let dim = u32_at(12) as usize;
        let degree = u32_at(16) as usize;
        let modes = u64_at(24) as usize;
        let steps = u64_at(32) as usize;
        let elements = u64_at(40) as usize;
        let dt = f64_at(48);
        let c = f64_at(56);
        let requested_cfl = f64_at(64);
        let achieved_cfl = f64_at(72);
        let mut hash = [0u8; 32];
        hash.copy_from_slice(&bytes[80..112]);
        let expected_modes = (degree + 1)
            .checked_pow(dim as u32)
            .ok_or_else(|| bad("mode count overflow"))?;
        if modes != expected_modes {
            return Err(Error::Container(format!(
                "header has {modes} modes but (J+1)^n = {expected_modes}"
            )));
        }
        let count = modes
            .checked_mul(steps)
            .and_then(|v| v.checked_mul(elements))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != HEADER + 8 * count {
            return Err(Error::Container(format!(
                "payload has {} bytes, expected {}",
                bytes.len() - HEADER,
                8 * count
            )));
        }
        let data: Vec<f64> = bytes[HEADER..]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite coefficient"));
        }
        let mut grid = TimeGrid::new(dt, steps, c).map_err(|e| Error::Container(e.to_string()))?;
        grid.requested_cfl = requested_cfl;
        grid.achieved_cfl = achieved_cfl;
        Ok(StochasticSolution {
            dim,
            degree,
            grid,
            mesh_hash: hash,
            coeffs: ModeTensor::from_vec(modes, steps, elements, data)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// CSV rows `step,element,mean,variance` for the given steps (all if empty).
    pub fn write_mean_variance_csv(&self, path: &Path, steps: &[usize]) -> Result<()> {
        let all: Vec<usize> = (0..self.coeffs.steps).collect();
        let steps = if steps.is_empty() { &all[..] } else { steps };
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "step,element,mean,variance")?;
            for &m in steps {
                let (mean, var) = self.coeffs.mean_variance(m);
                for (s, (a, b)) in mean.iter().zip(&var).enumerate() {
                    writeln!(w, "{m},{s},{a:e},{b:e}")?;
                }
            }
            w.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }

    /// CSV rows `mode,step,element,value`.
    pub fn write_modes_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let c = &self.coeffs;
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "mode,step,element,value")?;
            for i in 0..c.modes {
                for m in 0..c.steps {
                    for (s, v) in c.slice(i, m).iter().enumerate() {
                        writeln!(w, "{i},{m},{s},{v:e}")?;
                    }
                }
            }
            w.flush()
        };
        body().map_err(|e| Error::io(path, e))
    }
}
