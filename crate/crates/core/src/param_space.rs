//! Simulator parameter domain, chromosomes and the distances defined over them.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ParamKind {
    Continuous,
    /// Evolved as a continuous value; rounded only when handed to a simulator.
    Integer,
    /// Stored in a chromosome as the level index.
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: ParamKind,
}

impl ParameterSpec {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            kind: ParamKind::Continuous,
        }
    }

    pub fn integer(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            kind: ParamKind::Integer,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        let levels: Vec<String> = levels.into_iter().map(Into::into).collect();
        let upper = levels.len().saturating_sub(1) as f64;
        Self {
            name: name.into(),
            lower: 0.0,
            upper,
            kind: ParamKind::Categorical { levels },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ParamKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            ParamKind::Categorical { levels } => Some(levels),
            _ => None,
        }
    }

    /// Number of components this parameter occupies in the normalized encoding.
    pub fn encoded_width(&self) -> usize {
        self.levels().map_or(1, <[String]>::len)
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(Error::Domain(format!("invalid parameter name `{}`", self.name)));
        }
        match &self.kind {
            ParamKind::Categorical { levels } => {
                if levels.len() < 2 {
                    return Err(Error::Domain(format!(
                        "categorical parameter `{}` needs at least two levels",
                        self.name
                    )));
                }
                let mut sorted = levels.clone();
                sorted.sort();
                sorted.dedup();
                if sorted.len() != levels.len() {
                    return Err(Error::Domain(format!("duplicate levels in `{}`", self.name)));
                }
            }
            _ => {
                if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
                    return Err(Error::Domain(format!(
                        "parameter `{}` needs finite lower < upper, got [{}, {}]",
                        self.name, self.lower, self.upper
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks one raw chromosome component against this spec.
    pub fn check(&self, value: f64) -> Result<()> {
        let ok = match &self.kind {
            ParamKind::Categorical { levels } => {
                value.fract() == 0.0 && value >= 0.0 && (value as usize) < levels.len()
            }
            _ => value >= self.lower && value <= self.upper,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "value {value} out of bounds for `{}` [{}, {}]",
                self.name, self.lower, self.upper
            )))
        }
    }

    /// Brings an arbitrary real back into the parameter's domain.
    pub fn repair(&self, value: f64) -> f64 {
        let v = if value.is_nan() { self.lower } else { value };
        match &self.kind {
            ParamKind::Categorical { levels } => v.round().clamp(0.0, (levels.len() - 1) as f64),
            _ => v.clamp(self.lower, self.upper),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            ParamKind::Categorical { levels } => rng.gen_range(0..levels.len()) as f64,
            _ => rng.gen_range(self.lower..=self.upper),
        }
    }
}

/// Ordered set of parameters; the order fixes chromosome component positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    specs: Vec<ParameterSpec>,
}

impl ParameterSpace {
    pub fn new(specs: Vec<ParameterSpec>) -> Result<Arc<Self>> {
        if specs.is_empty() {
            return Err(Error::Domain("parameter space is empty".into()));
        }
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::Domain(format!("duplicate parameter name `{}`", s.name)));
            }
        }
        Ok(Arc::new(Self { specs }))
    }

    pub fn specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn spec(&self, index: usize) -> &ParameterSpec {
        &self.specs[index]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    /// Width of [`normalize`] output.
    pub fn encoded_dim(&self) -> usize {
        self.specs.iter().map(ParameterSpec::encoded_width).sum()
    }
}

/// One concrete simulator configuration.
#[derive(Clone)]
pub struct Chromosome {
    values: Vec<f64>,
    space: Arc<ParameterSpace>,
}

impl Chromosome {
    pub fn new(space: &Arc<ParameterSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                actual: values.len(),
            });
        }
        for (spec, v) in space.specs().iter().zip(&values) {
            spec.check(*v)?;
        }
        Ok(Self {
            values,
            space: Arc::clone(space),
        })
    }

    /// Builds a chromosome after repairing every component into its bounds.
    pub fn repaired(space: &Arc<ParameterSpace>, mut values: Vec<f64>) -> Self {
        assert_eq!(values.len(), space.len(), "chromosome arity");
        for (spec, v) in space.specs().iter().zip(values.iter_mut()) {
            *v = spec.repair(*v);
        }
        Self {
            values,
            space: Arc::clone(space),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn space(&self) -> &Arc<ParameterSpace> {
        &self.space
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.space
            .index_of(name)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    /// Bitwise key used for evaluation caching and duplicate detection.
    pub fn key(&self) -> Vec<u64> {
        self.values.iter().map(|v| v.to_bits()).collect()
    }

    pub fn same_values(&self, other: &Chromosome) -> bool {
        self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn same_space(&self, other: &Chromosome) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space
    }
}

impl PartialEq for Chromosome {
    fn eq(&self, other: &Self) -> bool {
        self.same_values(other) && self.same_space(other)
    }
}

impl fmt::Debug for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (s, v) in self.space.specs().iter().zip(&self.values) {
            m.entry(&s.name, v);
        }
        m.finish()
    }
}

/// Maps each component affinely from its bounds onto `[0, 1]`; categorical
/// parameters expand into a one-hot block.
pub fn normalize(c: &Chromosome) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(c.space.encoded_dim());
    for (spec, &v) in c.space.specs().iter().zip(&c.values) {
        spec.check(v)?;
        match &spec.kind {
            ParamKind::Categorical { levels } => {
                let hot = v as usize;
                out.extend((0..levels.len()).map(|l| if l == hot { 1.0 } else { 0.0 }));
            }
            _ => out.push((v - spec.lower) / (spec.upper - spec.lower)),
        }
    }
    Ok(out)
}

/// Inverse of [`normalize`]. Categorical blocks decode to their argmax.
pub fn denormalize(space: &Arc<ParameterSpace>, unit: &[f64]) -> Result<Chromosome> {
    if unit.len() != space.encoded_dim() {
        return Err(Error::DimensionMismatch {
            expected: space.encoded_dim(),
            actual: unit.len(),
        });
    }
    let mut values = Vec::with_capacity(space.len());
    let mut pos = 0;
    for spec in space.specs() {
        match &spec.kind {
            ParamKind::Categorical { levels } => {
                let block = &unit[pos..pos + levels.len()];
                let best = block
                    .iter()
                    .enumerate()
                    .fold(0, |b, (i, &x)| if x > block[b] { i } else { b });
                values.push(best as f64);
                pos += levels.len();
            }
            _ => {
                values.push(spec.lower + unit[pos] * (spec.upper - spec.lower));
                pos += 1;
            }
        }
    }
    Chromosome::new(space, values)
}

/// Normalized vector with a constant trailing 1.0, the representation the
/// chromosome distance is computed on. The extra component keeps the
/// all-lower-bound chromosome away from the zero vector.
pub fn encode(c: &Chromosome) -> Result<Vec<f64>> {
    let mut v = normalize(c)?;
    v.push(1.0);
    Ok(v)
}

/// `1 - cos(a, b)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a == b && a.iter().any(|x| *x != 0.0) {
        return Ok(0.0);
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine distance of a zero vector".into()));
    }
    let cos = (dot / (na * nb).sqrt()).clamp(-1.0, 1.0);
    Ok((1.0 - cos).max(0.0))
}

/// Distance between two chromosomes of the same space, in `[0, 1]`.
pub fn chromosome_distance(i: &Chromosome, j: &Chromosome) -> Result<f64> {
    if !i.same_space(j) {
        return Err(Error::Contract("chromosomes from different parameter spaces".into()));
    }
    if i.same_values(j) {
        return Ok(0.0);
    }
    cosine_distance(&encode(i)?, &encode(j)?)
}

/// Uniform draw over every parameter's domain.
pub fn random_chromosome<R: Rng + ?Sized>(space: &Arc<ParameterSpace>, rng: &mut R) -> Chromosome {
    let values = space.specs().iter().map(|s| s.sample(rng)).collect();
    Chromosome {
        values,
        space: Arc::clone(space),
    }
}

/// Value as written to CSV: level name for categoricals, the number otherwise.
pub fn format_value(spec: &ParameterSpec, value: f64) -> String {
    match spec.levels() {
        Some(levels) => levels
            .get(value as usize)
            .cloned()
            .unwrap_or_else(|| value.to_string()),
        None => value.to_string(),
    }
}

pub fn parse_value(spec: &ParameterSpec, field: &str) -> Result<f64> {
    match spec.levels() {
        Some(levels) => levels
            .iter()
            .position(|l| l == field)
            .map(|i| i as f64)
            .ok_or_else(|| Error::Domain(format!("unknown level `{field}` for `{}`", spec.name))),
        None => field
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Domain(format!("bad number `{field}` for `{}`: {e}", spec.name))),
    }
}

/// Writes chromosomes as CSV rows, header = parameter names.
pub fn write_csv<W: Write>(space: &ParameterSpace, chromosomes: &[Chromosome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(space.names())?;
    for c in chromosomes {
        w.write_record(
            space
                .specs()
                .iter()
                .zip(c.values())
                .map(|(s, v)| format_value(s, *v)),
        )?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(space: &Arc<ParameterSpace>, input: R) -> Result<Vec<Chromosome>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let cols: Vec<usize> = space
        .names()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::UnknownParameter(n.to_string()))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let values = space
            .specs()
            .iter()
            .zip(&cols)
            .map(|(s, &c)| parse_value(s, rec.get(c).unwrap_or("")))
            .collect::<Result<Vec<_>>>()?;
        out.push(Chromosome::new(space, values)?);
    }
    Ok(out)
}
