//! Newline-delimited JSON datasets: one header record, then one record per
//! observation.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coarse::CoarseSet;
use crate::models::{CoarseObservation, MaxObservation, SecondPriceObservation};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    Max,
    SecondPrice,
    Coarse,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::Max => "max",
            ModelTag::SecondPrice => "second-price",
            ModelTag::Coarse => "coarse",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub model: ModelTag,
    pub d: usize,
    /// Number of regressors; absent for coarse data.
    pub k: Option<usize>,
    pub n: usize,
    pub seed: u64,
    pub version: String,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observations {
    Max(Vec<MaxObservation>),
    SecondPrice(Vec<SecondPriceObservation>),
    Coarse(Vec<CoarseObservation>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Observations::Max(v) => v.len(),
            Observations::SecondPrice(v) => v.len(),
            Observations::Coarse(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tag(&self) -> ModelTag {
        match self {
            Observations::Max(_) => ModelTag::Max,
            Observations::SecondPrice(_) => ModelTag::SecondPrice,
            Observations::Coarse(_) => ModelTag::Coarse,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: DatasetHeader,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaxRecord {
    x: Vec<f64>,
    y_max: f64,
}

/// `i_max` is 1-based on the wire.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SecondPriceRecord {
    x: Vec<f64>,
    i_max: usize,
    y_smax: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoarseRecord {
    set: CoarseSet,
}

fn put<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), DatasetError> {
    serde_json::to_writer(&mut *out, value).map_err(|e| DatasetError::Json { line: 0, source: e })?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_dataset<W: Write>(
    out: &mut W,
    header: &DatasetHeader,
    data: &Observations,
) -> Result<(), DatasetError> {
    put(out, &HeaderLine { header: header.clone() })?;
    match data {
        Observations::Max(v) => {
            for o in v {
                put(out, &MaxRecord { x: o.x.as_slice().to_vec(), y_max: o.y_max })?;
            }
        }
        Observations::SecondPrice(v) => {
            for o in v {
                put(
                    out,
                    &SecondPriceRecord {
                        x: o.x.as_slice().to_vec(),
                        i_max: o.winner + 1,
                        y_smax: o.y_smax,
                    },
                )?;
            }
        }
        Observations::Coarse(v) => {
            for o in v {
                put(out, &CoarseRecord { set: o.set.clone() })?;
            }
        }
    }
    Ok(())
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, line: usize) -> Result<T, DatasetError> {
    serde_json::from_str(text).map_err(|source| DatasetError::Json { line, source })
}

fn check_dim(len: usize, d: usize, line: usize) -> Result<(), DatasetError> {
    if len != d {
        return Err(DatasetError::Invalid {
            line,
            message: format!("expected dimension {d}, got {len}"),
        });
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<(DatasetHeader, Observations), DatasetError> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let header = match lines.next() {
        Some((i, l)) => parse::<HeaderLine>(&l?, i + 1)?.header,
        None => {
            return Err(DatasetError::Invalid {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let d = header.d;
    let mut data = match header.model {
        ModelTag::Max => Observations::Max(Vec::with_capacity(header.n)),
        ModelTag::SecondPrice => Observations::SecondPrice(Vec::with_capacity(header.n)),
        ModelTag::Coarse => Observations::Coarse(Vec::with_capacity(header.n)),
    };
    for (i, l) in lines {
        let line = i + 1;
        let text = l?;
        match &mut data {
            Observations::Max(v) => {
                let r: MaxRecord = parse(&text, line)?;
                check_dim(r.x.len(), d, line)?;
                v.push(MaxObservation {
                    x: DVector::from_vec(r.x),
                    y_max: r.y_max,
                });
            }
            Observations::SecondPrice(v) => {
                let r: SecondPriceRecord = parse(&text, line)?;
                check_dim(r.x.len(), d, line)?;
                let k = header.k.unwrap_or(usize::MAX);
                if r.i_max == 0 || r.i_max > k {
                    return Err(DatasetError::Invalid {
                        line,
                        message: format!("i_max {} outside 1..={k}", r.i_max),
                    });
                }
                v.push(SecondPriceObservation {
                    x: DVector::from_vec(r.x),
                    winner: r.i_max - 1,
                    y_smax: r.y_smax,
                });
            }
            Observations::Coarse(v) => {
                let r: CoarseRecord = parse(&text, line)?;
                check_dim(r.set.dim(), d, line)?;
                v.push(CoarseObservation { set: r.set });
            }
        }
    }
    if data.len() != header.n {
        return Err(DatasetError::Invalid {
            line: 1,
            message: format!("header announces {} records, found {}", header.n, data.len()),
        });
    }
    Ok((header, data))
}
