//! Flat parameter storage with a named segment registry, and Adam.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Real parameters; complex quantities are stored as interleaved re/im pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
    segments: Vec<Segment>,
}

impl<T: Real> Default for ParamVector<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamVector<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            segments: Vec::new(),
        }
    }

    /// Appends a segment; names must be unique.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<T>) -> Result<()> {
        let name = name.into();
        if self.segment(&name).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate parameter segment '{name}'")));
        }
        self.segments.push(Segment {
            name,
            offset: self.values.len(),
            len: values.len(),
        });
        self.values.extend(values);
        Ok(())
    }

    pub fn from_parts(segments: Vec<Segment>, values: Vec<T>) -> Result<Self> {
        let pv = Self { values, segments };
        pv.check_registry()?;
        Ok(pv)
    }

    /// Segments are contiguous, disjoint, and cover the array.
    pub fn check_registry(&self) -> Result<()> {
        let mut next = 0;
        for s in &self.segments {
            if s.offset != next {
                return Err(Error::ShapeMismatch(format!(
                    "segment '{}' starts at {}, expected {next}",
                    s.name, s.offset
                )));
            }
            next += s.len;
        }
        if next != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "segments cover {next} of {} parameters",
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, name: &str) -> Result<&[T]> {
        let s = self
            .segment(name)
            .ok_or_else(|| Error::InvalidConfig(format!("missing parameter segment '{name}'")))?;
        Ok(&self.values[s.range()])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut [T]> {
        let r = self
            .segment(name)
            .ok_or_else(|| Error::InvalidConfig(format!("missing parameter segment '{name}'")))?
            .range();
        Ok(&mut self.values[r])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same registry, all values zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![T::zero(); self.values.len()],
            segments: self.segments.clone(),
        }
    }

    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.values.len()
            )));
        }
        Ok(Self {
            values,
            segments: self.segments.clone(),
        })
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam update in place.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (ADAM_BETA1, ADAM_BETA2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let (b1t, b2t) = (T::lit(b1), T::lit(b2));
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1t * state.m[i] + (T::one() - b1t) * g;
        state.v[i] = b2t * state.v[i] + (T::one() - b2t) * g * g;
        let mhat = state.m[i].to_f64_lossy() / c1;
        let vhat = state.v[i].to_f64_lossy() / c2;
        params[i] = params[i] - T::lit(lr * mhat / (vhat.sqrt() + ADAM_EPS));
    }
    Ok(())
}
