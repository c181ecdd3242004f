//! Complexity spectrum over a retention grid and the least-squares fit
//! `ln ε = A + B ln S`.

use crate::error::{Error, Result};
use crate::recon::{spectrum_point, MethodFamily, RetentionGrid, SpectrumPoint, EPS_FLOOR};
use crate::signal::{normalize, Record};

/// One [`SpectrumPoint`] per retention-grid entry, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexitySpectrum {
    pub points: Vec<SpectrumPoint>,
}

impl ComplexitySpectrum {
    /// Points whose error clears [`EPS_FLOOR`].
    pub fn usable(&self) -> impl Iterator<Item = &SpectrumPoint> {
        self.points.iter().filter(|p| p.eps >= EPS_FLOOR)
    }
}

/// Fitted intercept `a` and slope `b` with diagnostics. `residuals` and
/// `used` follow grid order; residuals exist only for used points.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityCoefficients {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    pub used: Vec<bool>,
}

/// Normalizes `record` and evaluates `ε(S)` at every grid fraction.
pub fn compute_spectrum(
    record: &Record,
    grid: &RetentionGrid,
    family: &MethodFamily,
) -> Result<ComplexitySpectrum> {
    let (normalized, _) = normalize(record)?;
    let points = grid
        .fractions()
        .iter()
        .map(|&s| spectrum_point(&normalized, s, family))
        .collect::<Result<Vec<_>>>()?;
    let spectrum = ComplexitySpectrum { points };
    if spectrum.usable().next().is_none() {
        return Err(Error::FTrivialRecord);
    }
    Ok(spectrum)
}

/// Ordinary least squares of `ln eps` on `ln s` over the points above the
/// floor.
pub fn fit_coefficients(
    spectrum: &ComplexitySpectrum,
    grid: &RetentionGrid,
) -> Result<ComplexityCoefficients> {
    if spectrum.points.len() != grid.len() {
        return Err(Error::Invalid(format!(
            "spectrum has {} points for a grid of {}",
            spectrum.points.len(),
            grid.len()
        )));
    }
    let used: Vec<bool> = spectrum
        .points
        .iter()
        .map(|p| p.eps.is_finite() && p.eps >= EPS_FLOOR)
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = spectrum
        .points
        .iter()
        .zip(grid.fractions())
        .zip(&used)
        .filter(|(_, u)| **u)
        .map(|((p, s), _)| (s.ln(), p.eps.ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::DegenerateFit { usable: xs.len() });
    }
    let (a, b) = ols_line(&xs, &ys);
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - a - b * x).collect();
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(ComplexityCoefficients {
        a,
        b,
        r_squared,
        residuals,
        used,
    })
}

/// Centered-form OLS line through `(xs, ys)`; returns `(intercept, slope)`.
fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Spectrum plus fit. Records with fewer than two usable points are F-trivial.
pub fn estimate(
    record: &Record,
    grid: &RetentionGrid,
    family: &MethodFamily,
) -> Result<ComplexityCoefficients> {
    estimate_with_spectrum(record, grid, family).map(|(_, c)| c)
}

pub fn estimate_with_spectrum(
    record: &Record,
    grid: &RetentionGrid,
    family: &MethodFamily,
) -> Result<(ComplexitySpectrum, ComplexityCoefficients)> {
    let spectrum = compute_spectrum(record, grid, family)?;
    match fit_coefficients(&spectrum, grid) {
        Ok(c) => Ok((spectrum, c)),
        Err(Error::DegenerateFit { .. }) => Err(Error::FTrivialRecord),
        Err(e) => Err(e),
    }
}
