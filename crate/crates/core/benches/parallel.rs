use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use phaco_core::ellipse::{orthogonal_cost, EllipseParams};
use phaco_core::par::Exec;
use phaco_core::rotation::{estimate_rotation, polar_unwrap, AnnulusSpec, NccMethod, RotationConfig};
use phaco_core::synth::{gen_contour, gen_scene, oracle_ellipse, ContourSpec, OracleBounds, SceneSpec};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn residuals(c: &mut Criterion) {
    let s = gen_contour(&ContourSpec { points: 2000, ..Default::default() }, 1, 0);
    let e = EllipseParams { l_major: s.truth.l_major + 2.0, ..s.truth };
    let mut g = c.benchmark_group("orthogonal_cost_2000pts");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| orthogonal_cost(black_box(&s.points), &e, exec)));
    }
    g.finish();
}

fn ncc(c: &mut Criterion) {
    let mut spec = SceneSpec::scripted(4, 2, 1);
    spec.rotation_deg = vec![0.0, 6.5];
    let frames = gen_scene(&spec, 2, Exec::Sequential).unwrap();
    let patch = |i: usize| {
        let a = AnnulusSpec::new(frames[i].truth.ellipse, 3.0, 3.0).unwrap();
        polar_unwrap(&frames[i].gray, &a, 720, a.default_radial_bins()).unwrap()
    };
    let (p0, p1) = (patch(0), patch(1));
    let mut g = c.benchmark_group("ncc_720");
    for method in [NccMethod::Fft, NccMethod::Direct] {
        for (name, exec) in MODES {
            let cfg = RotationConfig { method, exec, ..Default::default() };
            g.bench_function(BenchmarkId::new(format!("{method:?}"), name), |b| {
                b.iter(|| estimate_rotation(black_box(&p0), &p1, &cfg).unwrap())
            });
        }
    }
    g.finish();
}

fn oracle_grid(c: &mut Criterion) {
    let s = gen_contour(&ContourSpec::default(), 2, 0);
    let bounds = OracleBounds::around(&s.truth, [1.0, 1.0, 1.0, 1.0, 0.05]);
    let mut g = c.benchmark_group("oracle_grid_5x2");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| oracle_ellipse(black_box(&s.points), bounds, 5, 2, exec)));
    }
    g.finish();
}

fn scenes(c: &mut Criterion) {
    let spec = SceneSpec::scripted(5, 16, 2);
    let mut g = c.benchmark_group("gen_scene_16x256");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| gen_scene(black_box(&spec), 16, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, residuals, ncc, oracle_grid, scenes);
criterion_main!(benches);
