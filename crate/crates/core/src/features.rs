//! Per-subject feature vectors: complexity coefficients of a record and of
//! its finite differences.

use std::io::{self, BufRead, Write};

use rayon::prelude::*;

use crate::complexity::{estimate_with_spectrum, ComplexityCoefficients, ComplexitySpectrum};
use crate::error::{Error, Result};
use crate::ingest::{Label, LabelNames};
use crate::recon::{MethodFamily, RetentionGrid};
use crate::signal::{difference, Record};

pub const MAX_ORDER: usize = 4;

/// All ten coefficient names in canonical order.
pub const ALL_FEATURES: [&str; 10] = [
    "A", "B", "AD1", "BD1", "AD2", "BD2", "AD3", "BD3", "AD4", "BD4",
];

/// Names of the intercept and slope features for a difference order.
pub fn order_names(order: usize) -> (String, String) {
    if order == 0 {
        ("A".into(), "B".into())
    } else {
        (format!("AD{order}"), format!("BD{order}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub subject_id: String,
    pub label: Label,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(
        subject_id: impl Into<String>,
        label: Label,
        names: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Invalid(format!(
                "{} feature names for {} values",
                names.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("feature {} is not finite", names[i])));
        }
        Ok(FeatureVector {
            subject_id: subject_id.into(),
            label,
            names,
            values,
        })
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Projection onto `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<FeatureVector> {
        let values = names
            .iter()
            .map(|n| {
                self.get(n).ok_or_else(|| Error::SchemaMismatch {
                    expected: names.to_vec(),
                    found: self.names.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureVector {
            subject_id: self.subject_id.clone(),
            label: self.label,
            names: names.to_vec(),
            values,
        })
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    orders: Vec<usize>,
    pub grid: RetentionGrid,
    pub family: MethodFamily,
}

impl FeatureConfig {
    /// `orders` is a non-empty subset of `0..=4`; 0 is the record itself.
    pub fn new(orders: &[usize], grid: RetentionGrid, family: MethodFamily) -> Result<Self> {
        let mut orders = orders.to_vec();
        orders.sort_unstable();
        orders.dedup();
        if orders.is_empty() || orders.iter().any(|&k| k > MAX_ORDER) {
            return Err(Error::BadParams(format!(
                "difference orders must be a non-empty subset of 0..={MAX_ORDER}, got {orders:?}"
            )));
        }
        Ok(FeatureConfig {
            orders,
            grid,
            family,
        })
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.orders
            .iter()
            .flat_map(|&k| {
                let (a, b) = order_names(k);
                [a, b]
            })
            .collect()
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            orders: vec![0, 4],
            grid: RetentionGrid::default(),
            family: MethodFamily::default(),
        }
    }
}

/// Spectrum and fit for one difference order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub order: usize,
    pub spectrum: ComplexitySpectrum,
    pub coefficients: ComplexityCoefficients,
}

pub fn extract(record: &Record, label: Label, config: &FeatureConfig) -> Result<FeatureVector> {
    extract_detailed(record, label, config).map(|(v, _)| v)
}

/// Like [`extract`], also returning the per-order spectra and fits.
pub fn extract_detailed(
    record: &Record,
    label: Label,
    config: &FeatureConfig,
) -> Result<(FeatureVector, Vec<OrderFit>)> {
    let mut fits = Vec::with_capacity(config.orders.len());
    let mut values = Vec::with_capacity(2 * config.orders.len());
    for &order in &config.orders {
        let transformed = difference(record, order)?;
        let (spectrum, coefficients) =
            estimate_with_spectrum(&transformed, &config.grid, &config.family)
                .map_err(|e| e.at_order(order))?;
        values.push(coefficients.a);
        values.push(coefficients.b);
        fits.push(OrderFit {
            order,
            spectrum,
            coefficients,
        });
    }
    let v = FeatureVector::new(record.subject_id(), label, config.feature_names(), values)?;
    Ok((v, fits))
}

/// Successful vectors in input order, plus per-subject failures.
#[derive(Debug, Default)]
pub struct CohortFeatures {
    pub vectors: Vec<FeatureVector>,
    pub failures: Vec<Error>,
}

pub fn extract_cohort(records: &[(Record, Label)], config: &FeatureConfig) -> CohortFeatures {
    let results: Vec<Result<FeatureVector>> = records
        .par_iter()
        .map(|(r, l)| extract(r, *l, config).map_err(|e| e.for_subject(r.subject_id())))
        .collect();
    let mut out = CohortFeatures::default();
    for r in results {
        match r {
            Ok(v) => out.vectors.push(v),
            Err(e) => out.failures.push(e),
        }
    }
    out
}

/// Writes `subject_id,label,<features>` with 12 significant digits.
pub fn write_feature_table<W: Write>(
    mut out: W,
    vectors: &[FeatureVector],
    names: &[String],
    labels: &LabelNames,
) -> Result<()> {
    let io = |source| Error::Io {
        path: "<feature table>".into(),
        source,
    };
    let mut header = vec!["subject_id".to_string(), "label".to_string()];
    header.extend(names.iter().cloned());
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for v in vectors {
        if v.names != names {
            return Err(Error::SchemaMismatch {
                expected: names.to_vec(),
                found: v.names.clone(),
            });
        }
        let mut line = format!("{},{}", v.subject_id, labels.name(v.label));
        for x in &v.values {
            line.push(',');
            line.push_str(&format_sig12(*x));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

/// Scientific notation with 12 significant digits.
pub fn format_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Reads a table written by [`write_feature_table`]; returns the feature
/// names and vectors.
pub fn read_feature_table<R: BufRead>(
    input: R,
    labels: &LabelNames,
) -> Result<(Vec<String>, Vec<FeatureVector>)> {
    let origin = std::path::PathBuf::from("<feature table>");
    let perr = |line: u64, message: String| Error::Parse {
        path: origin.clone(),
        line,
        message,
    };
    let mut lines = input.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(perr(1, "missing header".into())),
            Some((i, l)) => {
                let l = l.map_err(|e| perr(i as u64 + 1, e.to_string()))?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
        }
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[0] != "subject_id" || cols[1] != "label" {
        return Err(perr(1, "header must start with subject_id,label".into()));
    }
    let names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let mut vectors = Vec::new();
    for (i, l) in lines {
        let lineno = i as u64 + 1;
        let l = l.map_err(|e| perr(lineno, e.to_string()))?;
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(perr(lineno, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let label = labels
            .parse(fields[1])
            .ok_or_else(|| perr(lineno, format!("unknown label {:?}", fields[1])))?;
        let values = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| perr(lineno, format!("not a number: {f:?}"))))
            .collect::<Result<Vec<_>>>()?;
        vectors.push(
            FeatureVector::new(fields[0], label, names.clone(), values)
                .map_err(|e| perr(lineno, e.to_string()))?,
        );
    }
    Ok((names, vectors))
}

pub fn feature_table_string(vectors: &[FeatureVector], names: &[String], labels: &LabelNames) -> Result<String> {
    let mut buf = Vec::new();
    write_feature_table(&mut buf, vectors, names, labels)?;
    String::from_utf8(buf).map_err(|e| Error::Io {
        path: "<feature table>".into(),
        source: io::Error::other(e),
    })
}
