use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use texrecon::geomex::{marching_cubes, simplify_qem, TsdfVolume};
use texrecon::inpaint::{inpaint_linear, inpaint_nearest};
use texrecon::mesh::{shapes, Vec3};
use texrecon::metrics::{chamfer_l1, psnr, sample_with_normals, ssim};
use texrecon::projection::{foreground_mask, render_mesh_depth, splat_points};
use texrecon::unproject::compute_view_layers;
use texrecon::visibility::{hidden_point_removal, DEFAULT_DEPTH_EPSILON, DEFAULT_RADIUS_FACTOR};
use texrecon_bench::CubeBench;

fn projection(c: &mut Criterion) {
    let b = CubeBench::new(512, 256, 30_000);
    let view = &b.rig.views[0];
    let pts = &b.cloud.positions;
    let mut g = c.benchmark_group("projection");
    g.bench_function("hpr_30k", |bench| bench.iter(|| hidden_point_removal(black_box(pts), view, DEFAULT_RADIUS_FACTOR)));
    g.bench_function("splat_30k", |bench| bench.iter(|| splat_points(black_box(pts), &b.cloud.colors, view, 1)));
    g.bench_function("foreground_mask_30k", |bench| bench.iter(|| foreground_mask(black_box(pts), view, 5, 2, 2)));
    g.bench_function("mesh_depth_cube", |bench| bench.iter(|| render_mesh_depth(black_box(b.mesh()), view)));
    g.finish();
}

fn inpainting(c: &mut Criterion) {
    let b = CubeBench::new(256, 256, 30_000);
    let view = &b.rig.views[0];
    let (sparse, _) = splat_points(&b.cloud.positions, &b.cloud.colors, view, 1).unwrap();
    let mask = foreground_mask(&b.cloud.positions, view, 5, 2, 2).unwrap();
    let mut g = c.benchmark_group("inpaint");
    g.bench_function("nearest_256", |bench| bench.iter(|| inpaint_nearest(black_box(&sparse), &mask)));
    g.sample_size(20);
    g.bench_function("linear_256", |bench| bench.iter(|| inpaint_linear(black_box(&sparse), &mask)));
    g.finish();
}

fn texels(c: &mut Criterion) {
    let mut g = c.benchmark_group("view_layers");
    for res in [256usize, 512] {
        let b = CubeBench::new(res, 256, 1000);
        g.bench_with_input(BenchmarkId::from_parameter(res), &res, |bench, _| {
            bench.iter(|| {
                let mut table = b.table.clone();
                compute_view_layers(&mut table, &b.rig.views, &b.depths, DEFAULT_DEPTH_EPSILON).unwrap();
                table
            })
        });
    }
    g.finish();
}

fn geometry(c: &mut Criterion) {
    let mut g = c.benchmark_group("geometry");
    g.sample_size(10);
    for res in [32usize, 64] {
        let vol = TsdfVolume::from_sdf(res, -0.55, 0.55, 0.05, |p| p.norm() - 0.5).unwrap();
        g.bench_with_input(BenchmarkId::new("marching_cubes", res), &vol, |bench, v| bench.iter(|| marching_cubes(v, 0.0)));
    }
    let sphere = shapes::icosphere(Vec3::zeros(), 0.5, 4);
    g.bench_function("qem_5k_to_1k", |bench| bench.iter(|| simplify_qem(black_box(&sphere), 1000)));
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let b = CubeBench::new(256, 256, 1000);
    let (a, _) = sample_with_normals(b.mesh(), 20_000, 0).unwrap();
    let (q, _) = sample_with_normals(b.mesh(), 20_000, 1).unwrap();
    let mut g = c.benchmark_group("metrics");
    g.bench_function("chamfer_20k", |bench| bench.iter(|| chamfer_l1(black_box(&a), &q)));
    g.bench_function("psnr_256", |bench| bench.iter(|| psnr(black_box(&b.images[0]), &b.images[1])));
    g.bench_function("ssim_256", |bench| bench.iter(|| ssim(black_box(&b.images[0]), &b.images[1])));
    g.finish();
}

criterion_group!(benches, projection, inpainting, texels, geometry, metrics);
criterion_main!(benches);
