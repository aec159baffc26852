//! Acceptance checks for the primary pipeline. Each criterion prints one
//! `PASS`/`FAIL` line with its measurements; the test fails if any does.

use std::time::{Duration, Instant};

use texrecon::camera::{make_rig, RigKind, View, DEFAULT_FOV_Y_DEG};
use texrecon::geomex::{marching_cubes, simplify_qem, taubin_smooth, tsdf_fuse, DepthObservation, GeometryParams};
use texrecon::inpaint::{InpaintConfig, Inpainter};
use texrecon::mesh::{shapes, TriangleMesh, Vec3};
use texrecon::metrics::{chamfer_l1, f_score, normal_consistency, psnr, sample_with_normals, ssim, PointIndex};
use texrecon::pipeline::{ablate, evaluate, reconstruct, AblationSweep, EvalParams, ReconstructConfig};
use texrecon::projection::render_mesh_depth;
use texrecon::raster::RgbImage;
use texrecon::synthbench::{ray_triangle, raycast_visible, run_slab_benchmark, sphere_depth_map, textured_cube, SlabBenchParams, CUBE_COLORS};
use texrecon::unproject::{compute_view_layers, Strategy};
use texrecon::uvatlas::{rasterize_texels, unwrap, UnwrapParams};
use texrecon::visibility::{hidden_point_removal, DEFAULT_DEPTH_EPSILON};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, budget: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let pass = out.pass && elapsed < budget;
    let line = format!(
        "criterion {id} {:<4} {name}: {} [{:.1}s / budget {}s]\n",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn c1_nbf_eliminates_artifacts() -> Outcome {
    let params = SlabBenchParams {
        dilate_img_px: 4,
        ..Default::default()
    };
    let rows = run_slab_benchmark(&params, &Strategy::ALL).unwrap();
    let count = |s: Strategy| rows.iter().find(|r| r.strategy == s).unwrap().misassigned;
    let (naive, nbf, opt_nbf) = (count(Strategy::Naive), count(Strategy::Nbf), count(Strategy::OptNbf));
    let table: Vec<String> = rows.iter().map(|r| format!("{}={}", r.strategy, r.misassigned)).collect();
    Outcome {
        pass: naive > 0 && nbf as f64 <= 0.1 * naive as f64 && opt_nbf <= nbf,
        detail: format!("misassigned {}", table.join(" ")),
    }
}

fn c2_strategies_agree() -> Outcome {
    let params = SlabBenchParams {
        dilate_img_px: 0,
        ..Default::default()
    };
    let rows = run_slab_benchmark(&params, &Strategy::ALL).unwrap();
    let worst = rows.iter().map(|r| r.atlas_psnr).fold(f64::INFINITY, f64::min);
    let table: Vec<String> = rows.iter().map(|r| format!("{}={:.1}dB", r.strategy, r.atlas_psnr)).collect();
    Outcome {
        pass: worst >= 35.0,
        detail: format!("atlas PSNR {}", table.join(" ")),
    }
}

fn linear_nbf() -> ReconstructConfig {
    ReconstructConfig {
        inpaint: InpaintConfig {
            method: Inpainter::Linear,
            ..Default::default()
        },
        unproject: Strategy::Nbf,
        ..Default::default()
    }
}

fn c3_round_trip() -> Outcome {
    let gt = textured_cube(CUBE_COLORS, 1024).unwrap();
    let cloud = gt.sample_cloud(30_000, 0).unwrap();
    let r = reconstruct(&cloud, Some(&gt.mesh), &linear_nbf(), 0, None, vec![]).unwrap();
    let atlas = r.atlas.quantized();
    let (rep, _) = evaluate((&r.mesh, &atlas), (&gt.mesh, &gt.atlas), &EvalParams::default()).unwrap();
    Outcome {
        pass: rep.psnr >= 30.0 && rep.ssim >= 0.95,
        detail: format!("20-view PSNR {:.2} dB, SSIM {:.4}", rep.psnr, rep.ssim),
    }
}

fn c4_robustness() -> Outcome {
    let gt = textured_cube(CUBE_COLORS, 1024).unwrap();
    let rows = ablate(&gt.mesh, &gt.atlas, &linear_nbf(), &AblationSweep::default(), &EvalParams::default()).unwrap();
    let nbf = |noise: f64, points: usize| {
        rows.iter()
            .find(|r| r.strategy == Strategy::Nbf && r.noise == noise && r.points == points)
            .unwrap()
            .psnr
    };
    let clean = nbf(0.0, 30_000);
    let noisy = nbf(0.005, 30_000);
    let sparse = nbf(0.0, 10_000);
    Outcome {
        pass: rows.len() == 40 && clean - noisy <= 1.5 && clean - sparse <= 1.5,
        detail: format!(
            "{} rows; NBF PSNR clean {clean:.2}, σ=0.005 {noisy:.2} (drop {:.2}), 10k {sparse:.2} (drop {:.2})",
            rows.len(),
            clean - noisy,
            clean - sparse
        ),
    }
}

fn c5_visibility_oracle() -> Outcome {
    // two boxes, the small one shadowing part of the large one from several views
    let mesh = shapes::cuboid(Vec3::new(0.0, 0.0, -0.1), Vec3::new(0.9, 0.9, 0.2))
        .merged(&shapes::cuboid(Vec3::new(0.15, 0.1, 0.25), Vec3::new(0.3, 0.3, 0.2)))
        .merged(&shapes::icosphere(Vec3::new(-0.25, -0.2, 0.2), 0.15, 2));
    assert!(mesh.faces.len() <= 500);
    let (mesh, charts) = unwrap(&mesh, &UnwrapParams { atlas_res: 512, ..Default::default() }).unwrap();
    let mut table = rasterize_texels(&mesh, &charts, 512).unwrap();
    let rig = make_rig(RigKind::Fib8, 256, 2.0).unwrap();
    let eps = DEFAULT_DEPTH_EPSILON;
    let depths: Vec<_> = rig.views.iter().map(|v| render_mesh_depth(&mesh, v)).collect();
    compute_view_layers(&mut table, &rig.views, &depths, eps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut agree, mut total, mut grazing) = (0, 0, 0);
    for _ in 0..100 {
        let i = rng.random_range(0..table.len());
        let p = table.texels[i].position;
        for (k, view) in rig.views.iter().enumerate() {
            let proj = view.project(&p);
            // grazing: the ray is nearly tangent to the texel's surface, or
            // another surface crosses the ray within ε of the texel
            let o = view.position();
            let dir = (p - o).normalize();
            let edge_on = table.texels[i].normal.dot(&dir).abs() < 0.05;
            let contact = (0..mesh.faces.len())
                .filter(|&f| f != table.texels[i].face as usize)
                .filter_map(|f| ray_triangle(&o, &dir, &mesh.corners(f)))
                .any(|t| (t * dir.dot(&view.forward()) - proj.depth).abs() < eps);
            if edge_on || contact {
                grazing += 1;
                continue;
            }
            total += 1;
            if table.views[k].visible[i] == raycast_visible(&mesh, view, &p, eps) {
                agree += 1;
            }
        }
    }
    let rate = agree as f64 / total as f64;
    Outcome {
        pass: rate >= 0.99,
        detail: format!("{} faces, agreement {agree}/{total} = {:.2}% ({grazing} grazing pairs excluded)", mesh.faces.len(), 100.0 * rate),
    }
}

fn c6_hpr() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points: Vec<Vec3> = (0..10_000)
        .map(|_| loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        })
        .collect();
    let view = View::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), DEFAULT_FOV_Y_DEG.to_radians(), 256, 256).unwrap();
    let vis = hidden_point_removal(&points, &view, 100.0);
    let mut kept = vec![false; points.len()];
    for &i in &vis.indices {
        kept[i] = true;
    }
    let toward = |p: &Vec3| p.dot(&(view.position() - p).normalize());
    let (mut front, mut front_kept, mut back, mut back_removed) = (0, 0, 0, 0);
    for (p, &k) in points.iter().zip(&kept) {
        let c = toward(p);
        if c > 0.3 {
            front += 1;
            front_kept += k as usize;
        } else if c < -0.3 {
            back += 1;
            back_removed += !k as usize;
        }
    }
    let (r, s) = (front_kept as f64 / front as f64, back_removed as f64 / back as f64);
    Outcome {
        pass: !vis.degenerate && r >= 0.95 && s >= 0.95,
        detail: format!("front retained {:.2}%, back removed {:.2}%", 100.0 * r, 100.0 * s),
    }
}

fn c7_depth_fusion() -> Outcome {
    let radius = 0.5;
    let rig = make_rig(RigKind::Fib8, 256, 2.0).unwrap();
    let maps: Vec<_> = rig.views.iter().map(|v| sphere_depth_map(v, Vec3::zeros(), radius)).collect();
    let obs: Vec<_> = rig
        .views
        .iter()
        .zip(&maps)
        .map(|(view, (depth, mask))| DepthObservation { view, depth, mask })
        .collect();
    let p = GeometryParams {
        resolution: 128,
        ..Default::default()
    };
    let vol = tsdf_fuse(&obs, p.resolution, -p.half_extent, p.half_extent, p.trunc_voxels * p.voxel_size()).unwrap();
    let mesh = marching_cubes(&vol, 0.0).unwrap();
    let mesh = taubin_smooth(&simplify_qem(&mesh, p.target_faces), p.lambda, p.mu, p.smooth_iterations);
    let gt = shapes::icosphere(Vec3::zeros(), radius, 6);
    let (pred_pts, _) = sample_with_normals(&mesh, 100_000, 0).unwrap();
    let (gt_pts, _) = sample_with_normals(&gt, 100_000, 1).unwrap();
    let cd = chamfer_l1(&pred_pts, &gt_pts).unwrap();
    let nc = normal_consistency(&mesh, &gt, 100_000, 0).unwrap();
    let tau = 0.01;
    let fs_samples = f_score(&pred_pts, &gt_pts, tau).unwrap();
    // Against the analytic surface: precision from the exact distance of each
    // predicted sample to the sphere, recall from sphere samples to a dense
    // sampling of the prediction.
    let precision = pred_pts.iter().filter(|q| (q.norm() - radius).abs() <= tau).count() as f64 / pred_pts.len() as f64;
    let (dense, _) = sample_with_normals(&mesh, 1_000_000, 2).unwrap();
    let index = PointIndex::new(&dense).unwrap();
    let recall = index.distances(&gt_pts).iter().filter(|&&d| d <= tau).count() as f64 / gt_pts.len() as f64;
    let fs = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Outcome {
        pass: cd <= 1.0 && nc >= 0.98 && fs == 1.0,
        detail: format!(
            "{} faces, CD {cd:.4}, NC {nc:.5}, FS vs analytic sphere {fs} (sample-to-sample {fs_samples:.5})",
            mesh.faces.len()
        ),
    }
}

fn c8_metric_self_tests() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (w, h) = (64, 48);
    let mut a = RgbImage::new(w, h);
    let mut b = RgbImage::new(w, h);
    let c = 0.05f32;
    for y in 0..h {
        for x in 0..w {
            let v: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.0..0.9));
            a.set(x, y, v);
            b.set(x, y, v.map(|t| t + c));
        }
    }
    let p = psnr(&a, &b).unwrap();
    // closed form over the f32 offsets actually stored
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .flat_map(|(u, v)| (0..3).map(move |i| (v[i] as f64 - u[i] as f64).powi(2)))
        .sum::<f64>()
        / (w * h * 3) as f64;
    let expected = -10.0 * mse.log10();
    let psnr_ok = (p - expected).abs() < 1e-6 && (p + 20.0 * (c as f64).log10()).abs() < 1e-4;
    let s = ssim(&a, &a).unwrap();
    let plane = shapes::planar_grid(100, 1.0, 0.0);
    let (pts, _) = sample_with_normals(&plane, 10_000, 0).unwrap();
    let cd = chamfer_l1(&pts, &pts).unwrap();
    let tau = 0.01;
    let shift = |d: f64| pts.iter().map(|q| q + Vec3::new(0.0, 0.0, d)).collect::<Vec<_>>();
    let fs_half = f_score(&shift(tau / 2.0), &pts, tau).unwrap();
    let fs_double = f_score(&shift(2.0 * tau), &pts, tau).unwrap();
    Outcome {
        pass: psnr_ok && s == 1.0 && cd == 0.0 && fs_half == 1.0 && fs_double == 0.0,
        detail: format!("psnr {p:.9} vs closed form {expected:.9}, ssim(a,a) {s}, chamfer(a,a) {cd}, fs(τ/2) {fs_half}, fs(2τ) {fs_double}"),
    }
}

fn c9_determinism() -> Outcome {
    let gt = textured_cube(CUBE_COLORS, 512).unwrap();
    let cloud = gt.sample_cloud(30_000, 0).unwrap();
    let cfg = ReconstructConfig {
        atlas_res: 512,
        seed: 7,
        unproject: Strategy::OptScratch,
        refine_iters: 2,
        ..linear_nbf()
    };
    let plain = TriangleMesh::new(gt.mesh.vertices.clone(), gt.mesh.faces.clone());
    let run = |jobs: usize| {
        let dir = tempfile::tempdir().unwrap();
        let t = Instant::now();
        reconstruct(&cloud, Some(&plain), &cfg, jobs, Some(dir.path()), vec![]).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
        (read("mesh.png"), read("mesh.obj"), secs)
    };
    let (png1, obj1, t1) = run(1);
    let (png4, obj4, t4) = run(4);
    let same = png1 == png4 && obj1 == obj4;
    Outcome {
        pass: same && t4 < 2.0 * t1,
        detail: format!("jobs 1 vs 4: atlas and OBJ bit-identical {same}; run times {t1:.2}s and {t4:.2}s"),
    }
}

#[test]
fn acceptance() {
    let results = [
        report(1, "NBF artifact elimination", secs(60), c1_nbf_eliminates_artifacts),
        report(2, "strategy agreement without inconsistency", secs(60), c2_strategies_agree),
        report(3, "round-trip fidelity", secs(90), c3_round_trip),
        report(4, "robustness trends", secs(300), c4_robustness),
        report(5, "visibility oracle", secs(30), c5_visibility_oracle),
        report(6, "HPR correctness", secs(10), c6_hpr),
        report(7, "geometry path", secs(120), c7_depth_fusion),
        report(8, "metric self-tests", secs(5), c8_metric_self_tests),
        report(9, "determinism", secs(600), c9_determinism),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

