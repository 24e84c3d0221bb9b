use std::collections::VecDeque;
use std::fmt;
use std::io::{Read, Write};

use nalgebra::DVector;

use super::{Sample, SampleKind, SampleSource};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BufferMode {
    /// Fixed contents; reads never modify the buffer.
    Static,
    /// Each read deletes the sample it returns and appends a fresh one from
    /// the source, so the length never changes.
    Dynamic,
}

/// Ordered, 1-indexed sample store.
pub struct ReplayBuffer {
    storage: Vec<Sample>,
    order: VecDeque<usize>,
    source: Option<Box<dyn SampleSource>>,
    kind: SampleKind,
    dim: usize,
    refreshed: u64,
}

impl fmt::Debug for ReplayBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReplayBuffer")
            .field("len", &self.len())
            .field("mode", &self.mode())
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("refreshed", &self.refreshed)
            .finish()
    }
}

fn check_homogeneous(samples: &[Sample]) -> Result<(SampleKind, usize)> {
    let first = samples.first().ok_or_else(|| Error::InvalidArgument("buffer must not be empty".into()))?;
    let (kind, dim) = (first.kind(), first.dim());
    for s in samples {
        if s.kind() != kind {
            return Err(Error::SampleMismatch { expected: kind.name(), found: s.kind().name() });
        }
        if s.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: s.dim() });
        }
    }
    Ok((kind, dim))
}

impl ReplayBuffer {
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let (kind, dim) = check_homogeneous(&samples)?;
        let order = (0..samples.len()).collect();
        Ok(ReplayBuffer { storage: samples, order, source: None, kind, dim, refreshed: 0 })
    }

    /// Static buffer holding the next `len` samples of `source`.
    pub fn fill_static<S: SampleSource + ?Sized>(source: &mut S, len: usize) -> Result<Self> {
        let samples = super::collect_trajectory(source, len)?;
        Self::from_samples(samples)
    }

    /// Dynamic buffer holding the next `len` samples; later refreshes continue
    /// the same trajectory.
    pub fn dynamic(mut source: Box<dyn SampleSource>, len: usize) -> Result<Self> {
        let samples = super::collect_trajectory(source.as_mut(), len)?;
        let mut buffer = Self::from_samples(samples)?;
        buffer.source = Some(source);
        Ok(buffer)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn mode(&self) -> BufferMode {
        if self.source.is_some() {
            BufferMode::Dynamic
        } else {
            BufferMode::Static
        }
    }

    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples drawn from the source after the initial fill.
    pub fn refreshed(&self) -> u64 {
        self.refreshed
    }

    fn slot(&self, index: usize) -> Result<usize> {
        if index == 0 || index > self.len() {
            return Err(Error::IndexOutOfRange { index, len: self.len() });
        }
        Ok(index - 1)
    }

    /// Current sample at 1-based `index`, without side effects.
    pub fn peek(&self, index: usize) -> Result<&Sample> {
        let slot = self.slot(index)?;
        Ok(&self.storage[self.order[slot]])
    }

    /// Reads the sample at 1-based `index`; in dynamic mode this consumes it.
    pub fn get(&mut self, index: usize) -> Result<Sample> {
        let slot = self.slot(index)?;
        let Some(source) = self.source.as_mut() else {
            return Ok(self.storage[self.order[slot]].clone());
        };
        let fresh = source.next_sample()?;
        if fresh.kind() != self.kind {
            return Err(Error::SampleMismatch { expected: self.kind.name(), found: fresh.kind().name() });
        }
        if fresh.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: fresh.dim() });
        }
        let id = self.order.remove(slot).expect("slot checked above");
        self.storage.push(fresh);
        self.order.push_back(self.storage.len() - 1);
        self.refreshed += 1;
        Ok(self.storage[id].clone())
    }

    /// Current contents in buffer order.
    pub fn iter(&self) -> impl Iterator<Item = &Sample> + '_ {
        self.order.iter().map(move |&i| &self.storage[i])
    }

    pub fn to_vec(&self) -> Vec<Sample> {
        self.iter().cloned().collect()
    }

    /// Writes the current contents as CSV. Floats carry 17 significant
    /// digits so a read-back reproduces every value exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(header(self.kind, self.dim))?;
        let fmt = |x: f64| format!("{x:.16e}");
        for s in self.iter() {
            let row: Vec<String> = match s {
                Sample::State(i) => vec![i.to_string()],
                other => other.to_flat().into_iter().map(fmt).collect(),
            };
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a static buffer; the header fixes the payload kind and dimension.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let names: Vec<String> = input.headers()?.iter().map(str::to_owned).collect();
        let (kind, dim) = parse_header(&names)?;
        let mut samples = Vec::new();
        for record in input.records() {
            let record = record?;
            if record.len() != names.len() {
                return Err(Error::Snapshot(format!("row has {} fields, expected {}", record.len(), names.len())));
            }
            samples.push(parse_row(kind, dim, &record)?);
        }
        Self::from_samples(samples)
    }
}

fn header(kind: SampleKind, dim: usize) -> Vec<String> {
    let series = |prefix: &'static str| (1..=dim).map(move |i| format!("{prefix}_{i}"));
    match kind {
        SampleKind::Glm => series("a").chain(["y".to_owned()]).collect(),
        SampleKind::Transition => series("phi").chain(series("phi_next")).chain(["reward".to_owned()]).collect(),
        SampleKind::State => vec!["state".to_owned()],
        SampleKind::Vector => series("v").collect(),
    }
}

fn parse_header(names: &[String]) -> Result<(SampleKind, usize)> {
    let bad = || Error::Snapshot(format!("unrecognized header: {}", names.join(",")));
    let first = names.first().ok_or_else(bad)?;
    let (kind, dim) = if first == "state" {
        (SampleKind::State, 0)
    } else if first.starts_with("a_") {
        (SampleKind::Glm, names.len() - 1)
    } else if first.starts_with("phi_") {
        if names.len() % 2 == 0 {
            return Err(bad());
        }
        (SampleKind::Transition, (names.len() - 1) / 2)
    } else if first.starts_with("v_") {
        (SampleKind::Vector, names.len())
    } else {
        return Err(bad());
    };
    if header(kind, dim) != names {
        return Err(bad());
    }
    Ok((kind, dim))
}

fn parse_row(kind: SampleKind, dim: usize, record: &csv::StringRecord) -> Result<Sample> {
    let float = |i: usize| -> Result<f64> {
        record[i].trim().parse::<f64>().map_err(|e| Error::Snapshot(format!("field {}: {e}", i + 1)))
    };
    let vector = |from: usize| -> Result<DVector<f64>> {
        let v: Result<Vec<f64>> = (from..from + dim).map(float).collect();
        Ok(DVector::from_vec(v?))
    };
    Ok(match kind {
        SampleKind::State => {
            Sample::State(record[0].trim().parse().map_err(|e| Error::Snapshot(format!("state field: {e}")))?)
        }
        SampleKind::Glm => Sample::Glm { covariate: vector(0)?, response: float(dim)? },
        SampleKind::Transition => {
            Sample::Transition { phi: vector(0)?, phi_next: vector(dim)?, reward: float(2 * dim)? }
        }
        SampleKind::Vector => Sample::Vector(vector(0)?),
    })
}

/// Reads the sample at 1-based `index`.
pub fn buffer_get(buffer: &mut ReplayBuffer, index: usize) -> Result<Sample> {
    buffer.get(index)
}
