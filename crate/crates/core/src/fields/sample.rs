use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box `[lo_0, hi_0] x ... x [lo_{n-1}, hi_{n-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Error::check_dim(lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::usage("box must have at least one axis"));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::usage(format!(
                    "empty or non-finite box side [{a}, {b}]"
                )));
            }
        }
        Ok(BoxRegion { lo, hi })
    }

    /// The cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// The box grown by `margin` on every side.
    pub fn expanded(&self, margin: f64) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().map(|a| a - margin).collect(),
            hi: self.hi.iter().map(|b| b + margin).collect(),
        }
    }

    /// Drop the last axis.
    pub fn face_of_last_axis(&self) -> Option<BoxRegion> {
        let n = self.dim();
        (n >= 2).then(|| BoxRegion {
            lo: self.lo[..n - 1].to_vec(),
            hi: self.hi[..n - 1].to_vec(),
        })
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }
}

/// A jittered lattice of sample points in a box.
///
/// The box is divided into `k^n` lattice cells (`k = ceil(count^(1/n))`),
/// `count` of them are chosen evenly by index and each emits its centre
/// displaced by a uniform offset of at most `jitter_scale` cell widths per
/// axis. With the default `jitter_scale = 0.5` a point can land anywhere in
/// its cell, so fixed measure-zero sets (kinks) are hit with probability zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub region: BoxRegion,
    pub count: usize,
    pub jitter_seed: u64,
    pub jitter_scale: f64,
}

impl SamplePlan {
    pub fn new(region: BoxRegion, count: usize, jitter_seed: u64) -> Self {
        SamplePlan {
            region,
            count,
            jitter_seed,
            jitter_scale: 0.5,
        }
    }

    pub fn with_jitter_scale(mut self, scale: f64) -> Self {
        self.jitter_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::usage("sample plan is empty"));
        }
        if !(self.jitter_scale > 0.0 && self.jitter_scale <= 0.5) {
            return Err(Error::usage(format!(
                "jitter_scale must lie in (0, 0.5], got {}",
                self.jitter_scale
            )));
        }
        Ok(())
    }

    /// Lattice cells per axis.
    pub fn cells_per_axis(&self) -> usize {
        let n = self.region.dim() as u32;
        let mut k = (self.count as f64).powf(1.0 / n as f64).floor().max(1.0) as usize;
        while k.pow(n) < self.count {
            k += 1;
        }
        k
    }

    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let n = self.region.dim();
        let k = self.cells_per_axis();
        let total = k.pow(n as u32);
        let mut rng = ChaCha8Rng::seed_from_u64(self.jitter_seed);
        let mut out = Vec::with_capacity(self.count);
        for i in 0..self.count {
            let mut idx = i * total / self.count;
            let mut p = Vec::with_capacity(n);
            for axis in 0..n {
                let cell = idx % k;
                idx /= k;
                let h = self.region.width(axis) / k as f64;
                let offset: f64 = rng.gen_range(-1.0..1.0) * self.jitter_scale;
                let v = self.region.lo[axis] + (cell as f64 + 0.5 + offset) * h;
                p.push(v.clamp(self.region.lo[axis], self.region.hi[axis]));
            }
            out.push(p);
        }
        Ok(out)
    }
}
