//! Detection ingestion: newline-delimited JSON detection streams and the
//! external per-tile detector process.
//!
//! One record per line:
//!
//! ```text
//! {"meta": {"embed_dim": 32, "fps": 25.0}}                       optional header
//! {"frame": 0, "bbox": [x, y, w, h], "cat": "car", "conf": 0.9, "embed": [...]}
//! {"frame": 1}                                                   frame with no detections
//! ```

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::tiler::{dedup_cross_tile, recalibrate, DedupConfig, ScoredBox, TileDetection, TileGrid};

const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Car,
    Bus,
    Truck,
    BicycleMotorcycle,
    Pedestrian,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Car,
        Category::Bus,
        Category::Truck,
        Category::BicycleMotorcycle,
        Category::Pedestrian,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Bus => "bus",
            Category::Truck => "truck",
            Category::BicycleMotorcycle => "bicycle_motorcycle",
            Category::Pedestrian => "pedestrian",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown category `{s}`")))
    }
}

/// One detected object in frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_id: u64,
    pub bbox: BBox,
    pub category: Category,
    pub confidence: f64,
    /// Unit-norm appearance descriptor, when the detector provides one.
    pub appearance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameBatch {
    pub frame_id: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StreamMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
}

/// Which detections survive ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReaderConfig {
    pub keep_pedestrians: bool,
    pub min_confidence: f64,
}

impl Default for ReaderConfig {
    fn default() -> Self {
        ReaderConfig {
            keep_pedestrians: false,
            min_confidence: 0.0,
        }
    }
}

impl ReaderConfig {
    pub fn accepts(&self, d: &Detection) -> bool {
        (self.keep_pedestrians || d.category != Category::Pedestrian) && d.confidence >= self.min_confidence
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<StreamMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cat: Option<Category>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    embed: Option<Vec<f64>>,
}

enum Line {
    Meta(StreamMeta),
    Marker(u64),
    Detection(Detection),
}

/// Parses one record. `frame` may be absent only when `default_frame` is given
/// (tile-local detector output, where the frame number is ignored).
fn parse_line(text: &str, line: usize, default_frame: Option<u64>) -> Result<Line> {
    let err = |msg: String| Error::Parse { line, msg };
    let rec: LineRecord = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    if let Some(meta) = rec.meta {
        if rec.frame.is_some() || rec.bbox.is_some() {
            return Err(err("header record mixes `meta` with detection fields".into()));
        }
        return Ok(Line::Meta(meta));
    }
    let frame = match (default_frame, rec.frame) {
        (Some(f), _) => f,
        (None, Some(f)) => f,
        (None, None) => return Err(err("missing `frame`".into())),
    };
    let Some([x, y, w, h]) = rec.bbox else {
        if rec.cat.is_some() || rec.conf.is_some() || rec.embed.is_some() {
            return Err(err("detection fields without `bbox`".into()));
        }
        return Ok(Line::Marker(frame));
    };
    let bbox = BBox::from_xywh(x, y, w, h).map_err(|e| err(e.to_string()))?;
    let category = rec.cat.ok_or_else(|| err("missing `cat`".into()))?;
    let confidence = rec.conf.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&confidence) {
        return Err(err(format!("confidence {confidence} outside [0, 1]")));
    }
    if let Some(e) = &rec.embed {
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if e.is_empty() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(err(format!("appearance vector norm {norm} is not 1")));
        }
    }
    Ok(Line::Detection(Detection {
        frame_id: frame,
        bbox,
        category,
        confidence,
        appearance: rec.embed,
    }))
}

/// Streaming reader yielding one [`FrameBatch`] per frame, in frame order.
pub struct DetectionReader<R> {
    lines: std::iter::Enumerate<std::io::Lines<R>>,
    cfg: ReaderConfig,
    meta: StreamMeta,
    pending: Option<(usize, Line)>,
    current: Option<FrameBatch>,
    last_frame: Option<u64>,
    embed_dim: Option<usize>,
    done: bool,
}

impl<R: BufRead> DetectionReader<R> {
    pub fn new(reader: R, cfg: ReaderConfig) -> Result<Self> {
        let mut this = DetectionReader {
            lines: reader.lines().enumerate(),
            cfg,
            meta: StreamMeta::default(),
            pending: None,
            current: None,
            last_frame: None,
            embed_dim: None,
            done: false,
        };
        // the optional header must be the first record
        if let Some((n, line)) = this.next_line()? {
            match line {
                Line::Meta(meta) => {
                    this.meta = meta;
                    this.embed_dim = meta.embed_dim;
                }
                other => this.pending = Some((n, other)),
            }
        }
        Ok(this)
    }

    pub fn meta(&self) -> StreamMeta {
        self.meta
    }

    fn next_line(&mut self) -> Result<Option<(usize, Line)>> {
        for (idx, text) in self.lines.by_ref() {
            let n = idx + 1;
            let text = text.map_err(|e| Error::Parse {
                line: n,
                msg: e.to_string(),
            })?;
            if text.trim().is_empty() {
                continue;
            }
            return parse_line(&text, n, None).map(|l| Some((n, l)));
        }
        Ok(None)
    }

    fn frame_of(line: &Line) -> u64 {
        match line {
            Line::Meta(_) => unreachable!("meta handled before"),
            Line::Marker(f) => *f,
            Line::Detection(d) => d.frame_id,
        }
    }

    fn advance(&mut self) -> Result<Option<FrameBatch>> {
        loop {
            let next = match self.pending.take() {
                Some(p) => Some(p),
                None => self.next_line()?,
            };
            let Some((n, line)) = next else {
                return Ok(self.current.take());
            };
            if matches!(line, Line::Meta(_)) {
                return Err(Error::Parse {
                    line: n,
                    msg: "header record must come first".into(),
                });
            }
            let frame = Self::frame_of(&line);
            match &mut self.current {
                Some(batch) if batch.frame_id == frame => {}
                Some(_) => {
                    self.pending = Some((n, line));
                    return Ok(self.current.take());
                }
                None => {
                    if let Some(prev) = self.last_frame {
                        if frame <= prev {
                            return Err(Error::StreamOrder { prev, got: frame });
                        }
                    }
                    self.last_frame = Some(frame);
                    self.current = Some(FrameBatch {
                        frame_id: frame,
                        detections: Vec::new(),
                    });
                }
            }
            if let Line::Detection(d) = line {
                if let Some(e) = &d.appearance {
                    match self.embed_dim {
                        Some(dim) if dim != e.len() => {
                            return Err(Error::Parse {
                                line: n,
                                msg: Error::AppearanceDim {
                                    expected: dim,
                                    got: e.len(),
                                }
                                .to_string(),
                            })
                        }
                        Some(_) => {}
                        None => self.embed_dim = Some(e.len()),
                    }
                }
                if self.cfg.accepts(&d) {
                    if let Some(batch) = &mut self.current {
                        batch.detections.push(d);
                    }
                }
            }
        }
    }
}

impl<R: BufRead> Iterator for DetectionReader<R> {
    type Item = Result<FrameBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.advance() {
            Ok(Some(b)) => Some(Ok(b)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub fn read_detection_stream(path: &Path, cfg: ReaderConfig) -> Result<DetectionReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    DetectionReader::new(BufReader::new(file), cfg)
}

fn detection_record(d: &Detection, frame: Option<u64>) -> LineRecord {
    LineRecord {
        frame,
        bbox: Some(d.bbox.xywh()),
        cat: Some(d.category),
        conf: Some(d.confidence),
        embed: d.appearance.clone(),
        ..Default::default()
    }
}

/// Writes a stream readable by [`DetectionReader`]. Empty batches become frame
/// markers so that they survive a round trip.
pub fn write_detection_stream<'a, W: Write>(
    mut out: W,
    meta: Option<&StreamMeta>,
    batches: impl IntoIterator<Item = &'a FrameBatch>,
) -> std::io::Result<()> {
    if let Some(meta) = meta {
        let rec = LineRecord {
            meta: Some(*meta),
            ..Default::default()
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    for batch in batches {
        if batch.detections.is_empty() {
            let rec = LineRecord {
                frame: Some(batch.frame_id),
                ..Default::default()
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        for d in &batch.detections {
            serde_json::to_writer(&mut out, &detection_record(d, Some(batch.frame_id)))?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

/// External detector invoked as `<program> <args...> <tile_image_path>` once
/// per tile.
#[derive(Debug, Clone)]
pub struct ExternalDetector {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
    pub parallelism: usize,
    pub reader: ReaderConfig,
    pub dedup: DedupConfig,
}

impl ExternalDetector {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ExternalDetector {
            program: program.into(),
            args: Vec::new(),
            timeout: Duration::from_secs(60),
            parallelism: 1,
            reader: ReaderConfig::default(),
            dedup: DedupConfig::default(),
        }
    }
}

fn run_with_timeout(cmd: &mut Command, timeout: Duration) -> std::result::Result<String, String> {
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("failed to start detector: {e}"))?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = String::new();
        stdout.read_to_string(&mut buf).map(|_| buf)
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(format!("timed out after {:.1} s", timeout.as_secs_f64()));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(format!("waiting for detector: {e}")),
        }
    };
    let stdout = out_reader
        .join()
        .map_err(|_| "stdout reader panicked".to_string())?
        .map_err(|e| format!("reading detector output: {e}"))?;
    let stderr = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(format!("exited with {status}: {}", stderr.trim()));
    }
    Ok(stdout)
}

fn detect_tile(
    det: &ExternalDetector,
    tile_path: &Path,
    col: u32,
    row: u32,
    grid: &TileGrid,
) -> Result<Vec<(Detection, usize)>> {
    let tile_err = |msg: String| Error::Tile { col, row, msg };
    let mut cmd = Command::new(&det.program);
    cmd.args(&det.args).arg(tile_path);
    let output = run_with_timeout(&mut cmd, det.timeout).map_err(tile_err)?;

    let mut found = Vec::new();
    for (idx, text) in output.lines().enumerate() {
        if text.trim().is_empty() {
            continue;
        }
        let line = parse_line(text, idx + 1, Some(0)).map_err(|e| tile_err(e.to_string()))?;
        let Line::Detection(d) = line else { continue };
        let local = TileDetection {
            tile_col: col,
            tile_row: row,
            bbox: d.bbox,
            category: d.category,
            confidence: d.confidence,
        };
        if let Some(bbox) = recalibrate(&local, grid).map_err(|e| tile_err(e.to_string()))? {
            found.push((Detection { bbox, ..d }, idx));
        }
    }
    Ok(found)
}

fn write_tiles(image: &image::RgbImage, grid: &TileGrid, dir: &Path) -> Result<Vec<PathBuf>> {
    let crop = grid.crop_size;
    let mut paths = Vec::with_capacity(grid.tile_count() as usize);
    for (col, row) in grid.tiles() {
        // padding stays black
        let mut tile = image::RgbImage::new(crop, crop);
        let x0 = col * crop;
        let y0 = row * crop;
        for y in 0..crop.min(grid.frame_h.saturating_sub(y0)) {
            for x in 0..crop.min(grid.frame_w.saturating_sub(x0)) {
                tile.put_pixel(x, y, *image.get_pixel(x0 + x, y0 + y));
            }
        }
        let path = dir.join(format!("tile_r{row}_c{col}.png"));
        tile.save(&path).map_err(|e| Error::Tile {
            col,
            row,
            msg: format!("writing tile image: {e}"),
        })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Runs the external detector on every tile of one frame image and merges the
/// recalibrated results in (tile row, tile column, output line) order.
pub fn run_external_detector(
    frame_image: &Path,
    frame_id: u64,
    grid: &TileGrid,
    det: &ExternalDetector,
) -> Result<FrameBatch> {
    let image = image::open(frame_image)
        .map_err(|e| Error::Config(format!("{}: {e}", frame_image.display())))?
        .to_rgb8();
    if image.width() != grid.frame_w || image.height() != grid.frame_h {
        return Err(Error::Config(format!(
            "{}: image is {}x{}, grid expects {}x{}",
            frame_image.display(),
            image.width(),
            image.height(),
            grid.frame_w,
            grid.frame_h
        )));
    }
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let tile_paths = write_tiles(&image, grid, dir.path())?;
    let tiles: Vec<(u32, u32)> = grid.tiles().collect();

    type Slot = Mutex<Option<Result<Vec<(Detection, usize)>>>>;
    let results: Vec<Slot> = tiles.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = det.parallelism.clamp(1, tiles.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= tiles.len() {
                    break;
                }
                let (col, row) = tiles[i];
                let r = detect_tile(det, &tile_paths[i], col, row, grid);
                *results[i].lock().expect("result slot") = Some(r);
            });
        }
    });

    let mut merged = Vec::new();
    for slot in results {
        let found = slot.into_inner().expect("result slot").expect("every tile processed")?;
        merged.extend(found.into_iter().map(|(d, _)| Detection { frame_id, ..d }));
    }
    merged.retain(|d| det.reader.accepts(d));

    if det.dedup.enabled {
        let scored: Vec<ScoredBox> = merged
            .iter()
            .map(|d| ScoredBox {
                bbox: d.bbox,
                category: d.category,
                confidence: d.confidence,
            })
            .collect();
        let kept = dedup_cross_tile(&scored, grid, &det.dedup);
        let mut it = kept.into_iter().peekable();
        merged.retain(|d| match it.peek() {
            Some(k) if k.bbox == d.bbox && k.confidence == d.confidence && k.category == d.category => {
                it.next();
                true
            }
            _ => false,
        });
    }
    Ok(FrameBatch {
        frame_id,
        detections: merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_all(text: &str, cfg: ReaderConfig) -> Result<Vec<FrameBatch>> {
        DetectionReader::new(text.as_bytes(), cfg)?.collect()
    }

    #[test]
    fn batches_in_order() {
        let text = r#"{"frame": 0, "bbox": [1, 2, 3, 4], "cat": "car", "conf": 0.5}
{"frame": 1, "bbox": [1, 2, 3, 4], "cat": "bus", "conf": 0.5}
{"frame": 1, "bbox": [5, 2, 3, 4], "cat": "truck", "conf": 0.7}
{"frame": 2}
"#;
        let batches = read_all(text, ReaderConfig::default()).unwrap();
        assert_eq!(
            batches
                .iter()
                .map(|b| (b.frame_id, b.detections.len()))
                .collect::<Vec<_>>(),
            vec![(0, 1), (1, 2), (2, 0)]
        );
    }

    #[test]
    fn pedestrians_filtered_by_default() {
        let text = r#"{"frame": 0, "bbox": [1, 2, 3, 4], "cat": "pedestrian", "conf": 0.5}
{"frame": 0, "bbox": [1, 2, 3, 4], "cat": "car", "conf": 0.5}
"#;
        let batches = read_all(text, ReaderConfig::default()).unwrap();
        assert_eq!(batches[0].detections.len(), 1);
        assert_eq!(batches[0].detections[0].category, Category::Car);

        let keep = ReaderConfig {
            keep_pedestrians: true,
            ..Default::default()
        };
        assert_eq!(read_all(text, keep).unwrap()[0].detections.len(), 2);
    }

    #[test]
    fn header_is_read() {
        let text = r#"{"meta": {"embed_dim": 2, "fps": 24.0}}
{"frame": 3, "bbox": [1, 2, 3, 4], "cat": "car", "conf": 0.5, "embed": [0.6, 0.8]}
"#;
        let reader = DetectionReader::new(text.as_bytes(), ReaderConfig::default()).unwrap();
        assert_eq!(reader.meta().embed_dim, Some(2));
        assert_eq!(reader.meta().fps, Some(24.0));
        let batches: Vec<_> = reader.collect::<Result<_>>().unwrap();
        assert_eq!(batches[0].detections[0].appearance.as_deref(), Some(&[0.6, 0.8][..]));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let text = "{\"frame\": 0, \"bbox\": [1, 2, 3, 4], \"cat\": \"car\", \"conf\": 0.5}\n\nnot json\n";
        match read_all(text, ReaderConfig::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let bad_conf = r#"{"frame": 0, "bbox": [1, 2, 3, 4], "cat": "car", "conf": 1.5}"#;
        assert!(matches!(
            read_all(bad_conf, ReaderConfig::default()),
            Err(Error::Parse { line: 1, .. })
        ));

        let bad_norm = r#"{"frame": 0, "bbox": [1, 2, 3, 4], "cat": "car", "conf": 0.5, "embed": [1, 1]}"#;
        assert!(read_all(bad_norm, ReaderConfig::default()).is_err());

        let bad_dim = r#"{"meta": {"embed_dim": 3}}
{"frame": 0, "bbox": [1, 2, 3, 4], "cat": "car", "conf": 0.5, "embed": [0.6, 0.8]}"#;
        assert!(read_all(bad_dim, ReaderConfig::default()).is_err());

        let late_header = r#"{"frame": 0}
{"meta": {"fps": 3}}"#;
        assert!(read_all(late_header, ReaderConfig::default()).is_err());
    }

    #[test]
    fn out_of_order_frames_fail() {
        let text = r#"{"frame": 2}
{"frame": 1}
"#;
        let mut reader = DetectionReader::new(text.as_bytes(), ReaderConfig::default()).unwrap();
        assert!(reader.next().unwrap().is_ok());
        assert!(matches!(
            reader.next().unwrap(),
            Err(Error::StreamOrder { prev: 2, got: 1 })
        ));
        assert!(reader.next().is_none());

        let split = r#"{"frame": 1}
{"frame": 2}
{"frame": 1}
"#;
        assert!(read_all(split, ReaderConfig::default()).is_err());
    }

    #[test]
    fn confidence_threshold() {
        let text = r#"{"frame": 0, "bbox": [1, 2, 3, 4], "cat": "car", "conf": 0.2}
{"frame": 0, "bbox": [1, 2, 3, 4], "cat": "car", "conf": 0.6}
"#;
        let cfg = ReaderConfig {
            min_confidence: 0.5,
            ..Default::default()
        };
        assert_eq!(read_all(text, cfg).unwrap()[0].detections.len(), 1);
    }
}
