use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One named parameter tensor in a [`Manifest`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        LayerSpec { name: name.into(), shape: shape.to_vec() }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered layer layout of a flat parameter array.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Manifest {
    layers: Vec<LayerSpec>,
}

impl Manifest {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.name.is_empty() || l.name.chars().any(|c| c.is_whitespace()) {
                return Err(Error::Structural(format!("invalid layer name {:?}", l.name)));
            }
            if layers[..i].iter().any(|p| p.name == l.name) {
                return Err(Error::Structural(format!("duplicate layer name {:?}", l.name)));
            }
        }
        Ok(Manifest { layers })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn numel(&self) -> usize {
        self.layers.iter().map(LayerSpec::numel).sum()
    }

    /// Element range of the named layer within the flat array.
    pub fn range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut offset = 0;
        for l in &self.layers {
            if l.name == name {
                return Some(offset..offset + l.numel());
            }
            offset += l.numel();
        }
        None
    }

    /// One line per layer: `name d0,d1,...`. Scalars have an empty shape.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.layers {
            let dims: Vec<String> = l.shape.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{} {}", l.name, dims.join(","));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (name, dims) =
                line.split_once(' ').ok_or_else(|| Error::Structural(format!("bad manifest line {line:?}")))?;
            let shape = if dims.is_empty() {
                Vec::new()
            } else {
                dims.split(',')
                    .map(|d| {
                        d.parse::<usize>().map_err(|_| Error::Structural(format!("bad dimension {d:?} in manifest")))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            layers.push(LayerSpec { name: name.to_string(), shape });
        }
        Manifest::new(layers)
    }
}

/// Flat 32-bit model parameters plus their layer manifest; the unit exchanged
/// between sites and coordinator.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    manifest: Manifest,
    data: Vec<f32>,
}

impl ParamVector {
    pub fn new(manifest: Manifest, data: Vec<f32>) -> Result<Self> {
        if manifest.numel() != data.len() {
            return Err(Error::Structural(format!(
                "manifest describes {} values, data has {}",
                manifest.numel(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structural("parameter data contains NaN or Inf".into()));
        }
        Ok(ParamVector { manifest, data })
    }

    pub fn zeros(manifest: Manifest) -> Self {
        let data = vec![0.0; manifest.numel()];
        ParamVector { manifest, data }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.manifest.clone())
    }

    /// Rounds 64-bit values to storage precision.
    pub fn from_f64(manifest: Manifest, data: &[f64]) -> Result<Self> {
        Self::new(manifest, data.iter().map(|&v| v as f32).collect())
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn layer(&self, name: &str) -> Option<&[f32]> {
        self.manifest.range(name).map(|r| &self.data[r])
    }

    pub fn check_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.manifest != other.manifest {
            return Err(Error::Structural("parameter manifests differ".into()));
        }
        Ok(())
    }

    /// `self + coeff * src`, evaluated in 64-bit and rounded once per element.
    pub fn axpy_scale(&self, src: &ParamVector, coeff: f64) -> Result<ParamVector> {
        self.check_compatible(src)?;
        let data =
            self.data.iter().zip(&src.data).map(|(&d, &s)| (f64::from(d) + coeff * f64::from(s)) as f32).collect();
        ParamVector::new(self.manifest.clone(), data)
    }
}

/// Free-function form of [`ParamVector::axpy_scale`].
pub fn axpy_scale(dst: &ParamVector, src: &ParamVector, coeff: f64) -> Result<ParamVector> {
    dst.axpy_scale(src, coeff)
}

/// 64-bit running sum of scaled parameter vectors, rounded to storage
/// precision only in [`ParamAccumulator::finish`].
#[derive(Clone, Debug)]
pub struct ParamAccumulator {
    manifest: Manifest,
    sum: Vec<f64>,
}

impl ParamAccumulator {
    pub fn new(manifest: Manifest) -> Self {
        let sum = vec![0.0; manifest.numel()];
        ParamAccumulator { manifest, sum }
    }

    pub fn axpy(&mut self, src: &ParamVector, coeff: f64) -> Result<()> {
        if src.manifest != self.manifest {
            return Err(Error::Structural("parameter manifests differ".into()));
        }
        for (acc, &s) in self.sum.iter_mut().zip(&src.data) {
            *acc += coeff * f64::from(s);
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.sum
    }

    pub fn finish(self) -> Result<ParamVector> {
        ParamVector::from_f64(self.manifest, &self.sum)
    }
}
