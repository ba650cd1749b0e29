//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Criterion 8 is conditionally reproducible (the wave constants are not
//! published); its failure is reported but does not fail the run.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{rngs::StdRng, Rng, SeedableRng};

use ftc::coherence::{overlap_of_sets, shape_coherence_alpha, AlphaSettings, Occupancy, RegionSet, RigidMotion, DEFAULT_SUPERSAMPLE};
use ftc::curvature::{ftc_point, menger_curvature, ProbeSettings};
use ftc::curves::{extremal_curves, ContinuationSettings, CurveKind, Extremum, Polyline};
use ftc::fields::{compute_field, FieldGrid, FieldSettings, GridSpec, Kernel};
use ftc::flows::FlowKind;
use ftc::gridio::{write_grid, Payload};
use ftc::integrate::flow_map;
use ftc::segmentation::{seeded_region_growing, GrowthSettings};
use ftc::spectral::{foliation_pair, svd2};
use ftc::{Bounds, Epoch, FlowSystem, IntegratorSettings, Jacobian2, Point2, Vector2};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bytes(f: &FieldGrid) -> Vec<u8> {
    let mut buf = Vec::new();
    write_grid(&mut buf, f, Payload::Binary).expect("in-memory write");
    buf
}

fn settings(threads: usize) -> FieldSettings {
    FieldSettings { threads: Some(threads), ..FieldSettings::default() }
}

fn saddle_ftle_settings(threads: usize) -> FieldSettings {
    // Saddle trajectories reach e^5 times the domain; widen the guard box.
    let mut s = settings(threads);
    s.integrator.guard_factor = 200.0;
    s
}

fn saddle_ftle(threads: usize) -> FieldGrid {
    let flow = FlowSystem::linear_saddle(1.0);
    let spec = GridSpec::new(32, 32, flow.bounds()).unwrap();
    compute_field(&flow, Epoch::new(0.0, 5.0), Kernel::Ftle, spec, &saddle_ftle_settings(threads)).unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let f = saddle_ftle(1);
    let secs = t.elapsed().as_secs_f64();
    let worst = f.values.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let pass = f.invalid_count() == 0 && worst <= 1e-3 && secs < 5.0;
    outcome(pass, format!("saddle FTLE 32x32 tau=5: max |L-1| = {worst:.2e}, {secs:.2} s on one worker"))
}

fn axis_error(v: Vector2, axis: Vector2) -> f64 {
    // Angle between lines, so the sign of v does not matter.
    (v.dot(axis).abs() / v.norm()).min(1.0).acos()
}

fn criterion_2() -> Outcome {
    let flow = FlowSystem::linear_saddle(1.0);
    let spec = GridSpec::new(32, 32, flow.bounds()).unwrap();
    let ks = FieldSettings::default().kernel_settings();
    let (mut theta, mut fs, mut fu, mut degenerate) = (0.0f64, 0.0f64, 0.0f64, 0);
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let s = foliation_pair(&flow, spec.cell_center(i, j), Epoch::new(0.0, 1.0), &ks).unwrap();
            degenerate += s.degenerate as usize;
            theta = theta.max((s.theta - PI / 2.0).abs());
            fs = fs.max(axis_error(s.f_s, Vector2::new(0.0, 1.0)));
            fu = fu.max(axis_error(s.f_u, Vector2::new(1.0, 0.0)));
        }
    }
    let pass = degenerate == 0 && theta <= 1e-3 && fs <= 1e-3 && fu <= 1e-3;
    outcome(pass, format!("saddle 32x32 tau=1: max |theta-pi/2| = {theta:.1e}, f_s off (0,1) by {fs:.1e} rad, f_u off (1,0) by {fu:.1e} rad"))
}

fn straightness_grids(threads: usize) -> Vec<(String, FieldGrid)> {
    let mut out = Vec::new();
    for flow in [FlowSystem::rigid_rotation(1.0), FlowSystem::linear_saddle(1.0)] {
        let spec = GridSpec::new(64, 64, flow.bounds()).unwrap();
        for kernel in [Kernel::MaxFtc, Kernel::FtcRatio] {
            let f = compute_field(&flow, Epoch::new(0.0, 1.0), kernel, spec, &settings(threads)).unwrap();
            out.push((format!("{} {kernel}", flow.kind()), f));
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, f) in straightness_grids(1) {
        let worst = if name.ends_with("maxftc") {
            let w = f.values.iter().cloned().fold(0.0, f64::max);
            pass &= w <= 1e-8;
            w
        } else {
            let w = f.values.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            pass &= w <= 1e-6;
            w
        };
        pass &= f.invalid_count() == 0;
        parts.push(format!("{name} {worst:.1e}"));
    }
    outcome(pass, format!("64x64 tau=1 worst deviations: {}", parts.join(", ")))
}

fn criterion_4() -> Outcome {
    let flow = FlowSystem::rigid_rotation(1.0);
    let integ = IntegratorSettings::default();
    let mut worst = 0.0f64;
    for r in [0.1, 1.0, 10.0] {
        let eps = 1e-3 * r;
        // Arc of the circle of radius r centred at (0, -r), through the origin.
        let c = Point2::new(0.0, -r);
        let pts: Vec<Point2> =
            [-eps / r, 0.0, eps / r].iter().map(|&a| c + Vector2::new(a.sin(), a.cos()) * r).collect();
        let img: Vec<Point2> = pts.iter().map(|&p| flow_map(&flow, p, Epoch::new(0.0, 1.0), &integ).unwrap()).collect();
        let kappa = menger_curvature(img[0], img[1], img[2]).unwrap();
        worst = worst.max((kappa * r - 1.0).abs());
    }
    outcome(worst <= 1e-4, format!("rotation, R in {{0.1, 1, 10}}, eps = 1e-3 R: max relative error {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = StdRng::seed_from_u64(20240605);
    let (mut recon, mut eig) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let m = Jacobian2 {
            a11: rng.gen_range(-10.0..10.0),
            a12: rng.gen_range(-10.0..10.0),
            a21: rng.gen_range(-10.0..10.0),
            a22: rng.gen_range(-10.0..10.0),
        };
        let s = svd2(&m);
        let rebuilt = |u: Vector2, v: Vector2, sigma: f64| [u.x * v.x * sigma, u.x * v.y * sigma, u.y * v.x * sigma, u.y * v.y * sigma];
        let (p, q) = (rebuilt(s.u1, s.v1, s.sigma1), rebuilt(s.u2, s.v2, s.sigma2));
        let entries = [m.a11, m.a12, m.a21, m.a22];
        let norm = entries.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = (0..4).map(|k| (p[k] + q[k] - entries[k]).powi(2)).sum::<f64>().sqrt();
        recon = recon.max(err / norm);
        // Eigenvalues of MᵀM by the quadratic formula.
        let (a, b, d) = (m.a11 * m.a11 + m.a21 * m.a21, m.a11 * m.a12 + m.a21 * m.a22, m.a12 * m.a12 + m.a22 * m.a22);
        let (tr, det) = (a + d, m.a11 * m.a22 - m.a12 * m.a21);
        let disc = ((a - d).powi(2) + 4.0 * b * b).sqrt();
        let l1 = 0.5 * (tr + disc);
        let l2 = det * det / l1;
        eig = eig.max((s.sigma1 * s.sigma1 - l1).abs() / l1).max((s.sigma2 * s.sigma2 - l2).abs() / l1);
    }
    outcome(recon <= 1e-12 && eig <= 1e-12, format!("1000 random matrices: reconstruction {recon:.1e}, eigen oracle {eig:.1e} (relative)"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn criterion_6() -> Outcome {
    let flow = FlowSystem::builtin(FlowKind::DoubleGyre).unwrap();
    let spec = GridSpec::new(16, 8, flow.bounds()).unwrap();
    let epoch = Epoch::new(0.0, 10.0);
    let base = ProbeSettings::default();
    let eps = base.epsilon_for(&flow);
    let (mut de, mut dd) = (Vec::new(), Vec::new());
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let z = spec.cell_center(i, j);
            let c = ftc_point(&flow, z, epoch, &base).unwrap().max_curvature;
            let half = ftc_point(&flow, z, epoch, &ProbeSettings { epsilon: Some(eps / 2.0), ..base }).unwrap().max_curvature;
            let dirs = ftc_point(&flow, z, epoch, &ProbeSettings { n_dirs: 64, ..base }).unwrap().max_curvature;
            de.push(relative(c, half));
            dd.push(relative(c, dirs));
        }
    }
    let (me, md) = (median(de), median(dd));
    outcome(me <= 0.05 && md <= 0.05, format!("double gyre 16x8 tau=10: median change eps->eps/2 {me:.2e}, n_dirs 32->64 {md:.2e}"))
}

struct GyreRun {
    maxftc: FieldGrid,
    ftle: FieldGrid,
}

fn gyre_fields(threads: usize) -> GyreRun {
    let flow = FlowSystem::builtin(FlowKind::DoubleGyre).unwrap();
    let spec = GridSpec::new(256, 128, flow.bounds()).unwrap();
    let epoch = Epoch::new(0.0, 10.0);
    GyreRun {
        maxftc: compute_field(&flow, epoch, Kernel::MaxFtc, spec, &settings(threads)).unwrap(),
        ftle: compute_field(&flow, epoch, Kernel::Ftle, spec, &settings(threads)).unwrap(),
    }
}

fn criterion_7(run: &GyreRun) -> Outcome {
    let flow = FlowSystem::builtin(FlowKind::DoubleGyre).unwrap();
    let spec = run.maxftc.spec();
    let epoch = Epoch::new(0.0, 10.0);
    let cont = ContinuationSettings::for_grid(&spec);
    let q = 0.2;
    let troughs = extremal_curves(&run.maxftc.log10(), Extremum::Trough, q, CurveKind::FtcTrough, &cont).unwrap();
    let ridges = extremal_curves(&run.ftle, Extremum::Ridge, q, CurveKind::FtleRidge, &cont).unwrap();
    let closed: Vec<&Polyline> = troughs.iter().filter(|l| l.closed && l.is_simple()).collect();

    // Score enclosed regions of at least 3x3 cells until one reaches 0.8.
    let cell_area = spec.dx() * spec.dy();
    let (mut best, mut scored, mut best_at) = (0.0f64, 0, None);
    for line in &closed {
        let Ok(region) = RegionSet::from_polyline(&spec, line, DEFAULT_SUPERSAMPLE) else { continue };
        if region.area < 9.0 * cell_area - 1e-12 {
            continue;
        }
        scored += 1;
        if let Ok(a) = shape_coherence_alpha(&flow, &region, &region, &spec, epoch, &AlphaSettings::default()) {
            if a.alpha > best {
                best = a.alpha;
                best_at = Some((region.centroid(), (region.area / cell_area).round()));
            }
        }
        if best >= 0.8 {
            break;
        }
    }

    let far = 3.0 * spec.dx().max(spec.dy());
    let some_far = ridges.iter().filter(|r| troughs.iter().any(|t| r.min_distance(t) > far)).count();
    let all_far = ridges.iter().filter(|r| troughs.iter().all(|t| r.min_distance(t) > far)).count();
    let pass = !closed.is_empty() && best >= 0.8 && some_far > 0;
    let at = best_at.map(|(c, n)| format!(" ({n} cells at ({:.3}, {:.3}))", c.x, c.y)).unwrap_or_default();
    outcome(
        pass,
        format!(
            "double gyre 256x128 tau=10, maxFTC troughs q={q}: {} troughs, {} closed simple; best alpha {best:.4}{at} after {scored} scored; \
             {} ridges, {some_far} farther than 3 cells from some trough ({all_far} from every trough)",
            troughs.len(),
            closed.len(),
            ridges.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let flow = FlowSystem::builtin(FlowKind::RossbyWave).unwrap();
    let spec = GridSpec::new(256, 128, flow.bounds()).unwrap();
    let epoch = Epoch::new(0.0, 10.0);
    let mut s = FieldSettings::default();
    s.probe.n_dirs = 16;
    let t = Instant::now();
    let field = compute_field(&flow, epoch, Kernel::FtcRatio, spec, &s).unwrap();
    let partition = seeded_region_growing(&field, &GrowthSettings::default()).unwrap();
    // The middle band: spans >= 80% of the channel width and covers the most
    // of the centre row.
    let centre = spec.ny / 2;
    let band = partition
        .regions
        .iter()
        .filter(|r| (r.bbox.1 - r.bbox.0 + 1) * 10 >= spec.nx * 8)
        .map(|r| (r, (0..spec.nx).filter(|&i| partition.labels[centre * spec.nx + i] == r.label).count()))
        .filter(|&(_, n)| n > 0)
        .max_by_key(|&(r, n)| (n, std::cmp::Reverse(r.label)));
    let constants = flow.describe();
    let Some((band, _)) = band else {
        return outcome(
            false,
            format!("no region spans 80% of the width at mid-latitude ({} regions); constants: {constants}", partition.regions.len()),
        );
    };
    let set = RegionSet::from_mask(&spec, &partition.mask(band.label), DEFAULT_SUPERSAMPLE).unwrap();
    let a = shape_coherence_alpha(&flow, &set, &set, &spec, epoch, &AlphaSettings::default());
    let secs = t.elapsed().as_secs_f64();
    match a {
        Ok(a) => outcome(
            (a.alpha - 0.8574).abs() <= 0.1,
            format!(
                "Rossby 256x128 n_dirs=16, T=10 days: band region {} ({} cells, {} regions) alpha {:.4} vs 0.8574; {secs:.0} s; constants: {constants}",
                band.label,
                band.cells,
                partition.regions.len(),
                a.alpha
            ),
        ),
        Err(e) => outcome(false, format!("band scoring failed: {e}; constants: {constants}")),
    }
}

fn criterion_9() -> Outcome {
    let spec = GridSpec::new(128, 128, Bounds::new(-1.0, 1.0, -1.0, 1.0)).unwrap();
    let mask: Vec<bool> = (0..spec.len())
        .map(|n| {
            let p = spec.cell_center(n % spec.nx, n / spec.nx);
            p.x.abs() < 0.5 && p.y.abs() < 0.5
        })
        .collect();
    let square = RegionSet::from_mask(&spec, &mask, DEFAULT_SUPERSAMPLE).unwrap();
    let occ = Occupancy::for_source(&spec, 2.0, None).unwrap();
    let f = overlap_of_sets(&square, &square, &RigidMotion { angle: PI / 4.0, translation: Vector2::new(0.0, 0.0) }, &occ).unwrap();
    let exact = 2.0 * (2f64.sqrt() - 1.0);
    outcome((f - exact).abs() <= 0.02, format!("45 deg square on 256^2 occupancy: {f:.5} vs {exact:.5}"))
}

fn criterion_10(one: &GyreRun) -> Outcome {
    let mut same = Vec::new();
    same.push(("1", bytes(&saddle_ftle(1)) == bytes(&saddle_ftle(8))));
    let (a, b) = (straightness_grids(1), straightness_grids(8));
    same.push(("3", a.iter().zip(&b).all(|(x, y)| bytes(&x.1) == bytes(&y.1))));
    let eight = gyre_fields(8);
    same.push(("7", bytes(&one.maxftc) == bytes(&eight.maxftc) && bytes(&one.ftle) == bytes(&eight.ftle)));
    let list: Vec<String> = same.iter().map(|(k, ok)| format!("item {k} {}", if *ok { "identical" } else { "DIFFERENT" })).collect();
    outcome(same.iter().all(|s| s.1), format!("1 vs 8 workers: {}", list.join(", ")))
}

fn main() -> ExitCode {
    let mut failed = Vec::new();
    let mut report = |n: u32, o: Outcome| {
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass && n != 8 {
            failed.push(n);
        }
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    let gyre = gyre_fields(1);
    report(7, criterion_7(&gyre));
    report(8, criterion_8());
    report(9, criterion_9());
    report(10, criterion_10(&gyre));
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
