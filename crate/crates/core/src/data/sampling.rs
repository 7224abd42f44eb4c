use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl ParamDim {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, scale: Scale) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            scale,
        }
    }

    /// Maps `u` in `[0, 1]` onto the dimension, uniformly in value or in log.
    pub fn from_unit(&self, u: f64) -> f64 {
        let v = match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log => {
                let (a, b) = (self.lower.ln(), self.upper.ln());
                (a + u * (b - a)).exp()
            }
        };
        v.clamp(self.lower, self.upper)
    }
}

/// Box of named parameter ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSpace {
    pub dims: Vec<ParamDim>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Uniform,
    Lhs,
}

impl ParamSpace {
    pub fn new(dims: Vec<ParamDim>) -> Self {
        Self { dims }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidConfig("parameter space has no dimensions".into()));
        }
        for d in &self.dims {
            if !(d.lower < d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "dimension {} needs lower < upper, got [{}, {}]",
                    d.name, d.lower, d.upper
                )));
            }
            if d.scale == Scale::Log && d.lower <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "log-scaled dimension {} needs a positive lower bound",
                    d.name
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Independent draws per dimension.
    pub fn sample_uniform(&self, n: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidConfig("sample count must be at least 1".into()));
        }
        Ok((0..n)
            .map(|_| self.dims.iter().map(|d| d.from_unit(rng.uniform())).collect())
            .collect())
    }

    /// Latin hypercube: per dimension, the `n` equal-probability strata are
    /// each hit once, with a uniform jitter inside the stratum.
    pub fn sample_lhs(&self, n: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidConfig("sample count must be at least 1".into()));
        }
        let mut points = vec![vec![0.0; self.dims.len()]; n];
        for (j, d) in self.dims.iter().enumerate() {
            let mut strata: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut strata);
            for (point, &s) in points.iter_mut().zip(&strata) {
                let u = (s as f64 + rng.uniform()) / n as f64;
                point[j] = d.from_unit(u);
            }
        }
        Ok(points)
    }

    pub fn sample(&self, sampler: Sampler, n: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        match sampler {
            Sampler::Uniform => self.sample_uniform(n, rng),
            Sampler::Lhs => self.sample_lhs(n, rng),
        }
    }
}
