#![allow(dead_code)]

use tau_core::analytics::zones::{LineSpec, ZoneSpec};
use tau_core::analytics::{AnalyticsOutput, LayoutConfig, RecordTable};
use tau_core::camera::{CameraConfig, CameraModel};
use tau_core::detector_io::Category;
use tau_core::pipeline::{analyze_table, track_stream};
use tau_core::sim::{simulate, Scenario, SimNoise, SimOutput, VehicleSpec};
use tau_core::tracker::{TrackerConfig, TrackerStats};

pub fn camera(gsd: f64, w: u32, h: u32, fps: f64) -> CameraConfig {
    CameraModel::with_gsd(gsd, gsd, w, h, fps).unwrap().to_config()
}

pub fn vehicle(identity: u64, spawn: u64, w: f64, h: f64, path: Vec<[f64; 2]>, speed: f64) -> VehicleSpec {
    VehicleSpec {
        identity,
        category: Category::Car,
        width_px: w,
        height_px: h,
        spawn_frame: spawn,
        despawn_frame: None,
        speeds_mps: vec![speed; path.len().saturating_sub(1)],
        path,
    }
}

/// Ten horizontal and ten vertical vehicles on crossing lanes.
pub fn twenty_vehicles() -> Scenario {
    let mut vehicles = Vec::new();
    for i in 0..10u64 {
        let fi = i as f64;
        let y = 103.7 + 80.0 * fi;
        let (a, b) = if i % 2 == 0 { (40.3, 959.1) } else { (959.1, 40.3) };
        vehicles.push(vehicle(i + 1, 2 * i, 45.0, 20.0, vec![[a, y], [b, y]], 8.0 + 0.5 * fi));
        let x = 131.3 + 75.0 * fi;
        let (a, b) = if i % 2 == 0 { (959.4, 40.6) } else { (40.6, 959.4) };
        vehicles.push(vehicle(
            i + 11,
            2 * i + 1,
            20.0,
            45.0,
            vec![[x, a], [x, b]],
            9.0 + 0.4 * fi,
        ));
    }
    Scenario {
        camera: camera(0.1, 1000, 1000, 25.0),
        layout: LayoutConfig::default(),
        frames: 200,
        cell_size: 4.0,
        noise: SimNoise {
            appearance_dim: 32,
            ..SimNoise::default()
        },
        seed: 20,
        vehicles,
    }
}

fn rect(id: u32, x0: f64, y0: f64, x1: f64, y1: f64) -> ZoneSpec {
    ZoneSpec {
        id,
        polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
    }
}

/// Path through `corner` with the corner replaced by a quadratic Bezier arc
/// of the given radius.
pub fn rounded(from: [f64; 2], corner: [f64; 2], to: [f64; 2], radius: f64) -> Vec<[f64; 2]> {
    let toward = |a: [f64; 2], b: [f64; 2]| {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let n = dx.hypot(dy);
        [dx / n, dy / n]
    };
    let din = toward(from, corner);
    let dout = toward(corner, to);
    let a = [corner[0] - din[0] * radius, corner[1] - din[1] * radius];
    let b = [corner[0] + dout[0] * radius, corner[1] + dout[1] * radius];
    let mut path = vec![from];
    let n = 16;
    for k in 0..=n {
        let t = f64::from(k) / f64::from(n);
        let u = 1.0 - t;
        path.push([
            u * u * a[0] + 2.0 * u * t * corner[0] + t * t * b[0],
            u * u * a[1] + 2.0 * u * t * corner[1] + t * t * b[1],
        ]);
    }
    path.push(to);
    path
}

/// Crossroad with four approach zones, one count line across the bottom
/// approach and a fixed itinerary mix of 100 vehicles.
pub fn crossroad() -> Scenario {
    let layout = LayoutConfig {
        zones: vec![
            rect(1, 0.5, 300.2, 300.3, 699.7),
            rect(2, 300.3, 0.4, 699.6, 300.2),
            rect(3, 300.3, 699.7, 699.6, 999.5),
            rect(4, 699.6, 300.2, 999.6, 699.7),
        ],
        lines: vec![LineSpec {
            id: 1,
            p0: [300.3, 850.1],
            p1: [699.6, 850.1],
            allowed_sign: 1,
        }],
    };
    let in1 = [60.3, 560.7];
    let in4 = [940.2, 440.3];
    let in2 = [440.7, 60.2];
    let in3 = [560.4, 940.3];
    let out1 = [60.4, 440.9];
    let out4 = [940.6, 560.1];
    let out2 = [560.2, 60.9];
    let out3 = [440.3, 940.8];
    let routes: Vec<(usize, Vec<[f64; 2]>)> = vec![
        (17, vec![in3, out2]),
        (5, rounded(in3, [560.4, 440.9], out1, 60.0)),
        (5, rounded(in3, [560.4, 560.1], out4, 60.0)),
        (2, vec![in2, out3]),
        (20, vec![in1, out4]),
        (15, vec![in4, out1]),
        (10, rounded(in1, [560.2, 560.7], out2, 60.0)),
        (8, rounded(in2, [440.7, 440.9], out1, 60.0)),
        (9, rounded(in4, [560.2, 440.3], out2, 60.0)),
        (9, rounded(in2, [440.7, 560.1], out4, 60.0)),
    ];
    // round-robin over routes so that each route's vehicles are spread out
    let mut order = Vec::new();
    let mut left: Vec<usize> = routes.iter().map(|r| r.0).collect();
    while left.iter().any(|&n| n > 0) {
        for (k, n) in left.iter_mut().enumerate() {
            if *n > 0 {
                *n -= 1;
                order.push(k);
            }
        }
    }
    let vehicles = order
        .iter()
        .enumerate()
        .map(|(i, &k)| vehicle(i as u64 + 1, 12 * i as u64, 24.0, 24.0, routes[k].1.clone(), 10.3))
        .collect();
    Scenario {
        camera: camera(0.1, 1000, 1000, 25.0),
        layout,
        frames: 1500,
        cell_size: 4.0,
        noise: SimNoise {
            appearance_dim: 32,
            ..SimNoise::default()
        },
        seed: 8,
        vehicles,
    }
}

pub struct Run {
    pub sim: SimOutput,
    pub records: RecordTable,
    pub stats: TrackerStats,
    pub analytics: AnalyticsOutput,
}

/// Simulates a scenario and pushes its stream through the pipeline in memory.
pub fn run(s: &Scenario) -> Run {
    let sim = simulate(s).unwrap();
    let cam = CameraModel::from_config(&s.camera).unwrap();
    let layout = s.layout.build().unwrap();
    let (records, stats) = track_stream(
        sim.detections.iter().cloned().map(Ok),
        TrackerConfig::default(),
        &cam,
        &layout,
    )
    .unwrap();
    let analytics = analyze_table(&records, &cam, &layout, s.cell_size).unwrap();
    Run {
        sim,
        records,
        stats,
        analytics,
    }
}
