//! Per-subcarrier array-gain patterns of a zoomed beamformer.

use std::path::Path;

use crate::beamform::{array_gain, zoom_beamformer, zoom_directions, AnalogBeamformer, ArrayGeometry};
use crate::error::{Error, Result};
use crate::syscfg::FrequencyGrid;

use super::svg::{Chart, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct PatternData {
    pub beamformer: AnalogBeamformer,
    /// Probe directions.
    pub grid: Vec<f64>,
    /// `gains[m][i]`: gain of subcarrier m + 1 at `grid[i]`.
    pub gains: Vec<Vec<f64>>,
    /// Closed-form beam directions per subcarrier.
    pub predicted: Vec<f64>,
    /// Grid argmax per subcarrier.
    pub argmax: Vec<f64>,
}

impl PatternData {
    pub fn max_argmax_error(&self) -> f64 {
        self.predicted
            .iter()
            .zip(&self.argmax)
            .map(|(p, a)| (p - a).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest and largest predicted beam direction.
    pub fn coverage(&self) -> (f64, f64) {
        let lo = self.predicted.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.predicted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Probes the beamformer zooming over [theta - alpha, theta + alpha] on
/// `from..=to` in steps of `step`.
pub fn beam_pattern(
    theta: f64,
    alpha: f64,
    geom: ArrayGeometry,
    freq: &FrequencyGrid,
    from: f64,
    to: f64,
    step: f64,
) -> Result<PatternData> {
    if !(step > 0.0 && to > from) {
        return Err(Error::validation("pattern", "need step > 0 and to > from"));
    }
    let beamformer = zoom_beamformer(theta, alpha, geom, freq)?;
    let predicted = zoom_directions(theta, alpha, freq)?;
    let count = ((to - from) / step).round() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| from + i as f64 * step).collect();
    let mut gains = Vec::with_capacity(freq.len());
    let mut argmax = Vec::with_capacity(freq.len());
    for m in 1..=freq.len() {
        let f = beamformer.materialize(freq.freq_at(m));
        let xi = freq.xi_at(m);
        let row: Vec<f64> = grid.iter().map(|&t| array_gain(&f, t, xi)).collect();
        let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
        argmax.push(grid[best]);
        gains.push(row);
    }
    Ok(PatternData {
        beamformer,
        grid,
        gains,
        predicted,
        argmax,
    })
}

/// pattern.csv (theta, gain_m1..gain_mM) and peaks.csv (m, predicted, argmax).
pub fn write_pattern(data: &PatternData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("pattern.csv"))?;
    let mut header = vec!["theta".to_string()];
    header.extend((1..=data.gains.len()).map(|m| format!("gain_m{m}")));
    w.write_record(&header)?;
    for (i, t) in data.grid.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(data.gains.iter().map(|row| row[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("peaks.csv"))?;
    w.write_record(["m", "predicted", "argmax"])?;
    for (m, (p, a)) in data.predicted.iter().zip(&data.argmax).enumerate() {
        w.write_record([(m + 1).to_string(), p.to_string(), a.to_string()])?;
    }
    w.flush()?;
    std::fs::write(dir.join("beamformer.txt"), data.beamformer.export_table())?;
    Ok(())
}

pub fn pattern_chart(data: &PatternData) -> Chart {
    Chart {
        title: format!("Zoomed beam pattern, {} subcarriers", data.gains.len()),
        x_label: "direction theta".into(),
        y_label: "array gain".into(),
        series: data
            .gains
            .iter()
            .enumerate()
            .map(|(m, row)| Series {
                name: format!("m = {}", m + 1),
                points: data.grid.iter().cloned().zip(row.iter().cloned()).collect(),
            })
            .collect(),
    }
}
