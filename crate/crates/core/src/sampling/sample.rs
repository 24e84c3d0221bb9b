use std::fmt;

use nalgebra::DVector;

/// One entry of a sample stream.
///
/// Chain states are 0-based here; configuration files and reports use the
/// same convention.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    /// Covariate and response `(a, y)` of a generalized linear model.
    Glm { covariate: DVector<f64>, response: f64 },
    /// `(psi(s), psi(s'), R(s, s'))` for one transition of a reward process.
    Transition { phi: DVector<f64>, phi_next: DVector<f64>, reward: f64 },
    /// Raw state index of a finite chain.
    State(usize),
    /// Raw vector-valued sample.
    Vector(DVector<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleKind {
    Glm,
    Transition,
    State,
    Vector,
}

impl SampleKind {
    pub fn name(self) -> &'static str {
        match self {
            SampleKind::Glm => "glm",
            SampleKind::Transition => "transition",
            SampleKind::State => "state",
            SampleKind::Vector => "vector",
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Sample {
    pub fn kind(&self) -> SampleKind {
        match self {
            Sample::Glm { .. } => SampleKind::Glm,
            Sample::Transition { .. } => SampleKind::Transition,
            Sample::State(_) => SampleKind::State,
            Sample::Vector(_) => SampleKind::Vector,
        }
    }

    /// Vector dimension carried by the payload (0 for raw states).
    pub fn dim(&self) -> usize {
        match self {
            Sample::Glm { covariate, .. } => covariate.len(),
            Sample::Transition { phi, .. } => phi.len(),
            Sample::State(_) => 0,
            Sample::Vector(v) => v.len(),
        }
    }

    /// Flattened coordinates, used as the metric embedding of the sample space.
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            Sample::Glm { covariate, response } => {
                let mut out = covariate.as_slice().to_vec();
                out.push(*response);
                out
            }
            Sample::Transition { phi, phi_next, reward } => {
                let mut out = phi.as_slice().to_vec();
                out.extend_from_slice(phi_next.as_slice());
                out.push(*reward);
                out
            }
            Sample::State(s) => vec![*s as f64],
            Sample::Vector(v) => v.as_slice().to_vec(),
        }
    }
}
