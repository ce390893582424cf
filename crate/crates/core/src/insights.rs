//! Statistical reductions over the record table: per-second series,
//! correlations, density estimates and per-frame histograms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::{CrossingEvent, CrossingKind, RecordTable, ZoneId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    VehicleCount,
    AvgVelocity,
    AvgSize,
    AllowedCrossings,
    ForbiddenCrossings,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::VehicleCount,
        Metric::AvgVelocity,
        Metric::AvgSize,
        Metric::AllowedCrossings,
        Metric::ForbiddenCrossings,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::VehicleCount => "vehicle_count",
            Metric::AvgVelocity => "avg_velocity",
            Metric::AvgSize => "avg_size",
            Metric::AllowedCrossings => "allowed_crossings",
            Metric::ForbiddenCrossings => "forbidden_crossings",
        }
    }

    fn is_crossing(self) -> bool {
        matches!(self, Metric::AllowedCrossings | Metric::ForbiddenCrossings)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// One value per 1-second bin; `None` marks a bin with no data for an
/// average.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub metric: Metric,
    pub zone: Option<ZoneId>,
    pub bin_start_s: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `series_<metric>[_zone<k>]`
    pub fn name(&self) -> String {
        match self.zone {
            Some(z) => format!("series_{}_zone{z}", self.metric),
            None => format!("series_{}", self.metric),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_start_s", self.metric.as_str()])?;
        for (t, v) in self.bin_start_s.iter().zip(&self.values) {
            w.write_record([t.to_string(), v.map(|v| v.to_string()).unwrap_or_default()])?;
        }
        w.flush().map_err(|e| Error::io("<series>", e))?;
        Ok(())
    }
}

fn bin_of(time_s: f64) -> usize {
    time_s.max(0.0).floor() as usize
}

/// Number of 1-second bins spanned by the table.
pub fn series_extent(table: &RecordTable) -> usize {
    table.rows().iter().map(|r| bin_of(r.time_s) + 1).max().unwrap_or(0)
}

/// Per-second series of a metric, optionally restricted to one zone.
/// Crossing metrics take event times from `fps` and ignore zones.
pub fn per_second_series(
    table: &RecordTable,
    crossings: &[CrossingEvent],
    fps: f64,
    metric: Metric,
    zone: Option<ZoneId>,
) -> Result<TimeSeries> {
    if metric.is_crossing() && zone.is_some() {
        return Err(Error::Config(format!("{metric} has no per-zone series")));
    }
    let n = series_extent(table);
    let rows = table.rows().iter().filter(|r| zone.is_none_or(|z| r.zone == z));
    let values: Vec<Option<f64>> = match metric {
        Metric::VehicleCount => {
            let mut ids = vec![BTreeSet::new(); n];
            for r in rows {
                ids[bin_of(r.time_s)].insert(r.vehicle_id);
            }
            ids.iter().map(|s| Some(s.len() as f64)).collect()
        }
        Metric::AvgVelocity | Metric::AvgSize => {
            let mut acc = vec![(0.0, 0usize); n];
            for r in rows {
                let v = if metric == Metric::AvgVelocity {
                    r.velocity_kmh
                } else {
                    r.size_m2
                };
                let a = &mut acc[bin_of(r.time_s)];
                a.0 += v;
                a.1 += 1;
            }
            acc.iter().map(|&(s, c)| (c > 0).then(|| s / c as f64)).collect()
        }
        Metric::AllowedCrossings | Metric::ForbiddenCrossings => {
            let kind = if metric == Metric::AllowedCrossings {
                CrossingKind::Allowed
            } else {
                CrossingKind::Forbidden
            };
            let mut counts = vec![0u64; n];
            for e in crossings.iter().filter(|e| e.kind == kind) {
                let b = bin_of(e.frame_id as f64 / fps);
                if b < n {
                    counts[b] += 1;
                }
            }
            counts.iter().map(|&c| Some(c as f64)).collect()
        }
    };
    Ok(TimeSeries {
        metric,
        zone,
        bin_start_s: (0..n).map(|i| i as f64).collect(),
        values,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation(format!(
            "length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson over the bins where both series have a value.
pub fn pearson_series(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .values
        .iter()
        .zip(&b.values)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    pearson(&x, &y)
}

/// Verbal strength of a correlation coefficient.
pub fn correlation_strength(r: f64) -> &'static str {
    let a = r.abs();
    if a >= 0.5 {
        "strong"
    } else if a >= 0.3 {
        "moderate"
    } else {
        "low"
    }
}

/// Pairwise correlations of a set of series; `None` where undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub names: Vec<String>,
    /// Row-major `names.len()²` matrix.
    pub coefficients: Vec<Option<f64>>,
}

impl CorrelationTable {
    pub fn compute(series: &[&TimeSeries]) -> Self {
        let n = series.len();
        let mut coefficients = vec![None; n * n];
        for i in 0..n {
            for j in 0..n {
                coefficients[i * n + j] = pearson_series(series[i], series[j]).ok();
            }
        }
        CorrelationTable {
            names: series.iter().map(|s| s.metric.to_string()).collect(),
            coefficients,
        }
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.coefficients[i * self.names.len() + j]
    }

    /// Long format: one line per unordered pair.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "pearson", "strength"])?;
        let n = self.names.len();
        for i in 0..n {
            for j in i + 1..n {
                let r = self.coefficients[i * n + j];
                w.write_record([
                    self.names[i].as_str(),
                    self.names[j].as_str(),
                    &r.map(|r| r.to_string()).unwrap_or_default(),
                    r.map(correlation_strength).unwrap_or("undefined"),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<correlation>", e))?;
        Ok(())
    }
}

pub const KDE_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density"])?;
        for (x, d) in self.grid.iter().zip(&self.density) {
            w.write_record([x.to_string(), d.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<density>", e))?;
        Ok(())
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule of thumb, `0.9 min(σ, IQR/1.34) n^(-1/5)`; uses σ when
/// the IQR is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian kernel density estimate on 512 points over `[min - 3h, max + 3h]`,
/// rescaled to unit trapezoidal mass.
pub fn kde_pdf(samples: &[f64], bandwidth: Option<f64>) -> Result<DensityEstimate> {
    if samples.len() < 2 {
        return Err(Error::DegenerateDistribution("fewer than two samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateDistribution("non-finite sample".into()));
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(Error::DegenerateDistribution("all samples identical".into()));
    }
    let h = match bandwidth {
        Some(h) if h.is_finite() && h > 0.0 => h,
        Some(h) => return Err(Error::Config(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(samples),
    };
    let (lo, hi) = (min - 3.0 * h, max + 3.0 * h);
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..KDE_GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            samples
                .iter()
                .map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    let mass = trapezoid(&grid, &density);
    for d in &mut density {
        *d /= mass;
    }
    Ok(DensityEstimate {
        grid,
        density,
        bandwidth: h,
    })
}

/// Per-record quantity used for densities and histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Velocity,
    Size,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Velocity => "velocity",
            Quantity::Size => "size",
        }
    }

    pub fn of(self, r: &crate::analytics::VehicleRecord) -> f64 {
        match self {
            Quantity::Velocity => r.velocity_kmh,
            Quantity::Size => r.size_m2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Bins `[e_i, e_{i+1})` with the last bin closed; values outside the edges
/// land in the under/overflow counters.
pub fn frame_histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::UnsortedEdges);
    }
    let last = edges[edges.len() - 1];
    let mut h = Histogram {
        counts: vec![0; edges.len() - 1],
        underflow: 0,
        overflow: 0,
    };
    for &v in values {
        if v < edges[0] {
            h.underflow += 1;
        } else if v > last || v.is_nan() {
            h.overflow += 1;
        } else if v == last {
            *h.counts.last_mut().expect("at least one bin") += 1;
        } else {
            // first edge strictly greater than v
            let i = edges.partition_point(|&e| e <= v);
            h.counts[i - 1] += 1;
        }
    }
    Ok(h)
}

/// Histogram of a quantity for every frame of the table, in frame order.
pub fn frame_histograms(table: &RecordTable, quantity: Quantity, edges: &[f64]) -> Result<Vec<(u64, Histogram)>> {
    let mut frames: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in table.rows() {
        frames.entry(r.frame_id).or_default().push(quantity.of(r));
    }
    frames
        .into_iter()
        .map(|(f, v)| Ok((f, frame_histogram(&v, edges)?)))
        .collect()
}

pub fn write_histograms_csv<W: Write>(hists: &[(u64, Histogram)], edges: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["frame_id".to_string(), "underflow".to_string()];
    header.extend(edges.windows(2).map(|e| format!("[{},{})", e[0], e[1])));
    header.push("overflow".to_string());
    w.write_record(&header)?;
    for (f, h) in hists {
        let mut row = vec![f.to_string(), h.underflow.to_string()];
        row.extend(h.counts.iter().map(u64::to_string));
        row.push(h.overflow.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<histogram>", e))?;
    Ok(())
}

/// Settings for the insight report bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InsightConfig {
    /// km/h bin edges for per-frame velocity histograms.
    pub velocity_bins: Vec<f64>,
    /// m² bin edges for per-frame size histograms.
    pub size_bins: Vec<f64>,
}

impl Default for InsightConfig {
    fn default() -> Self {
        InsightConfig {
            velocity_bins: (0..=12).map(|i| f64::from(i) * 10.0).collect(),
            size_bins: (0..=10).map(|i| f64::from(i) * 2.0).collect(),
        }
    }
}

/// Summary of what a report run produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportSummary {
    pub files: Vec<String>,
    pub skipped: Vec<String>,
}

fn create(dir: &Path, name: &str, summary: &mut ReportSummary) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    summary.files.push(name.to_string());
    Ok(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
}

/// Writes every series, density, histogram and correlation table into `dir`.
pub fn write_report(
    dir: &Path,
    table: &RecordTable,
    crossings: &[CrossingEvent],
    fps: f64,
    zone_ids: &[ZoneId],
    cfg: &InsightConfig,
) -> Result<ReportSummary> {
    let mut summary = ReportSummary::default();
    let mut global = BTreeMap::new();
    for m in Metric::ALL {
        let s = per_second_series(table, crossings, fps, m, None)?;
        s.write_csv(create(dir, &format!("{}.csv", s.name()), &mut summary)?)?;
        global.insert(m, s);
    }
    let mut zones = vec![0];
    zones.extend_from_slice(zone_ids);
    for &z in &zones {
        for m in [Metric::VehicleCount, Metric::AvgVelocity, Metric::AvgSize] {
            let s = per_second_series(table, crossings, fps, m, Some(z))?;
            s.write_csv(create(dir, &format!("{}.csv", s.name()), &mut summary)?)?;
        }
    }

    for q in [Quantity::Velocity, Quantity::Size] {
        let samples: Vec<f64> = table.rows().iter().map(|r| q.of(r)).collect();
        let name = format!("pdf_{}.csv", q.as_str());
        match kde_pdf(&samples, None) {
            Ok(d) => d.write_csv(create(dir, &name, &mut summary)?)?,
            Err(e @ Error::DegenerateDistribution(_)) => {
                log::warn!("skipping {name}: {e}");
                summary.skipped.push(name);
            }
            Err(e) => return Err(e),
        }
        let edges = match q {
            Quantity::Velocity => &cfg.velocity_bins,
            Quantity::Size => &cfg.size_bins,
        };
        let hists = frame_histograms(table, q, edges)?;
        write_histograms_csv(
            &hists,
            edges,
            create(dir, &format!("hist_{}.csv", q.as_str()), &mut summary)?,
        )?;
    }

    let traffic = [Metric::AvgVelocity, Metric::AvgSize, Metric::VehicleCount];
    let sets: [(&str, &[Metric]); 2] = [("traffic", &traffic), ("crossings", &Metric::ALL)];
    for (name, metrics) in sets {
        let series: Vec<&TimeSeries> = metrics.iter().map(|m| &global[m]).collect();
        CorrelationTable::compute(&series).write_csv(create(dir, &format!("corr_{name}.csv"), &mut summary)?)?;
    }
    Ok(summary)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn histogram_conserves_mass(
            values in prop::collection::vec(prop_oneof![-50.0f64..200.0, Just(0.0), Just(120.0), Just(f64::NAN)], 0..200),
        ) {
            let edges: Vec<f64> = (0..=12).map(|k| f64::from(k) * 10.0).collect();
            let h = frame_histogram(&values, &edges).unwrap();
            prop_assert_eq!(h.total(), values.len() as u64);
        }

        #[test]
        fn pearson_affine_invariant(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            a in 0.1f64..10.0, b in -50.0f64..50.0,
        ) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson(&x, &y) {
                let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let r2 = pearson(&ax, &y).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
                let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
                prop_assert!((r + pearson(&neg, &y).unwrap()).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn kde_has_unit_mass(samples in prop::collection::vec(-20.0f64..20.0, 2..60)) {
            if let Ok(k) = kde_pdf(&samples, None) {
                prop_assert!((k.integral() - 1.0).abs() < 1e-9);
                prop_assert!(k.density.iter().all(|&d| d >= 0.0));
            }
        }
    }
}
