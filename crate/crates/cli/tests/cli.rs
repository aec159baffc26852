use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use texrecon::camera::{make_rig, RigKind};
use texrecon::mesh::{shapes, TriangleMesh, Vec3};
use texrecon::pcio::{read_textured_mesh, write_point_cloud, write_textured_mesh};
use texrecon::pipeline::{viewset, Manifest};
use texrecon::synthbench::{atlas_psnr, textured_cube, TexturedScene, CUBE_COLORS};

fn texrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texrecon")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    scene: TexturedScene,
    gt_obj: PathBuf,
    plain_obj: PathBuf,
    cloud: PathBuf,
}

/// Textured ground truth, its untextured geometry and a sampled cloud.
fn fixture(scene: TexturedScene, points: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    write_textured_mesh(&scene.mesh, &scene.atlas, &root.join("gt")).unwrap();
    write_plain_obj(&scene.mesh, &root.join("plain.obj"));
    let cloud = root.join("cloud.ply");
    write_point_cloud(&scene.sample_cloud(points, 0).unwrap(), &cloud).unwrap();
    Fixture {
        gt_obj: root.join("gt/mesh.obj"),
        plain_obj: root.join("plain.obj"),
        cloud,
        root,
        scene,
        _dir: dir,
    }
}

/// Geometry only, without UVs or material.
fn write_plain_obj(mesh: &TriangleMesh, path: &Path) {
    let mut text = String::new();
    for v in &mesh.vertices {
        text += &format!("v {} {} {}\n", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        text += &format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    std::fs::write(path, text).unwrap();
}

fn with<'a>(mut args: Vec<&'a str>, extra: &[&'a str]) -> Vec<&'a str> {
    args.extend_from_slice(extra);
    args
}

fn cube() -> Fixture {
    fixture(textured_cube(CUBE_COLORS, 256).unwrap(), 20_000)
}

#[test]
fn reconstruct_sphere_smoke() {
    let sphere = shapes::uv_sphere(Vec3::zeros(), 0.5, 16, 32);
    let scene = TexturedScene::flat_colored(&sphere, 256, |f| if f % 2 == 0 { [0.9, 0.3, 0.2] } else { [0.2, 0.4, 0.9] }).unwrap();
    let fx = fixture(scene, 30_000);
    let out = fx.root.join("out");
    let r = texrecon(&[
        "reconstruct",
        p(&fx.cloud),
        "-o",
        p(&out),
        "--mesh",
        p(&fx.plain_obj),
        "--views",
        "fib8",
        "--inpainter",
        "linear",
        "--unproject",
        "nbf",
        "--atlas-res",
        "256",
    ]);
    ok(&r);
    for f in ["mesh.obj", "mesh.mtl", "mesh.png", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let m = Manifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.inpainted_views, 8);
    assert_eq!(m.config.atlas_res, 256);
    assert!(m.stages.iter().all(|s| s.ok && s.seconds >= 0.0));
    let (mesh, atlas) = read_textured_mesh(&out.join("mesh.obj")).unwrap();
    assert!(mesh.uv_corners.is_some());
    assert_eq!(atlas.unwrap().dims(), (256, 256));
}

#[test]
fn missing_geometry_source_is_an_argument_error() {
    let fx = cube();
    let r = texrecon(&["reconstruct", p(&fx.cloud), "-o", p(&fx.root.join("out"))]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn unknown_flag_value_is_an_argument_error() {
    let fx = cube();
    let r = texrecon(&["reconstruct", p(&fx.cloud), "-o", p(&fx.root.join("o")), "--mesh", p(&fx.plain_obj), "--views", "dodeca12"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn unreadable_input_is_an_input_error() {
    let fx = cube();
    let bad = fx.root.join("bad.ply");
    std::fs::write(&bad, "ply\nformat nonsense\n").unwrap();
    let r = texrecon(&["reconstruct", p(&bad), "-o", p(&fx.root.join("out")), "--mesh", p(&fx.plain_obj)]);
    assert_eq!(r.status.code(), Some(3));
    let r = texrecon(&["reconstruct", p(&fx.root.join("absent.ply")), "-o", p(&fx.root.join("out")), "--mesh", p(&fx.plain_obj)]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn remote_failure_exit_code_and_manifest() {
    let fx = cube();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = fx.root.join("out");
    let remote = format!("remote:http://127.0.0.1:{port}");
    let args = ["reconstruct", p(&fx.cloud), "-o", p(&out), "--mesh", p(&fx.plain_obj), "--inpainter", &remote, "--atlas-res", "128"];
    let r = texrecon(&args);
    assert_eq!(r.status.code(), Some(4));
    let m = Manifest::read(&out.join("manifest.json")).unwrap();
    assert!(m.error.unwrap().contains("inpaint"));
    assert!(!m.stages.last().unwrap().ok);
    // with a fallback the run completes and records the warning
    let mut args = args.to_vec();
    args.extend(["--inpaint-fallback", "nearest"]);
    ok(&texrecon(&args));
    let m = Manifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.inpaint_warnings.len(), 8);
}

#[test]
fn staged_chain_equals_one_shot_reconstruct() {
    let fx = cube();
    let views = fx.root.join("views");
    let staged = fx.root.join("staged");
    let shot = fx.root.join("shot");
    let common = ["--seed", "3"];
    let texture = ["--seed", "3", "--atlas-res", "256"];
    ok(&texrecon(&with(vec!["project", p(&fx.cloud), "-o", p(&views), "--mesh", p(&fx.plain_obj)], &common)));
    assert!(viewset::path(&views, 7, "sparse").is_file());
    ok(&texrecon(&with(vec!["inpaint", p(&views), "--inpainter", "nearest"], &common)));
    ok(&texrecon(&with(
        vec!["unproject", p(&views), "--mesh", p(&fx.plain_obj), "-o", p(&staged), "--unproject", "naive"],
        &texture,
    )));
    ok(&texrecon(&with(
        vec![
            "reconstruct",
            p(&fx.cloud),
            "-o",
            p(&shot),
            "--mesh",
            p(&fx.plain_obj),
            "--inpainter",
            "nearest",
            "--unproject",
            "naive",
        ],
        &texture,
    )));
    for f in ["mesh.obj", "mesh.png"] {
        assert_eq!(std::fs::read(staged.join(f)).unwrap(), std::fs::read(shot.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn unproject_of_consistent_external_images_recovers_the_texture() {
    let fx = cube();
    let views = fx.root.join("external");
    let rig = make_rig(RigKind::Fib8, 256, 2.0).unwrap();
    // the cube spans [-0.5, 0.5]^3, which normalization maps onto itself
    viewset::write_rig(&views, &rig, None).unwrap();
    viewset::write_dense(&views, &fx.scene.render(&rig.views).unwrap()).unwrap();
    let out = fx.root.join("tex");
    ok(&texrecon(&["unproject", p(&views), "--mesh", p(&fx.gt_obj), "-o", p(&out), "--atlas-res", "256", "--unproject", "nbf"]));
    let (_, atlas) = read_textured_mesh(&out.join("mesh.obj")).unwrap();
    let table = fx.scene.texel_table().unwrap();
    let psnr = atlas_psnr(&atlas.unwrap(), &fx.scene.atlas, &table).unwrap();
    assert!(psnr >= 35.0, "atlas PSNR {psnr}");
}

#[test]
fn eval_of_identical_meshes() {
    let fx = cube();
    let report = fx.root.join("report.json");
    let renders = fx.root.join("renders");
    ok(&texrecon(&[
        "eval",
        p(&fx.gt_obj),
        p(&fx.gt_obj),
        "-o",
        p(&report),
        "--renders",
        p(&renders),
        "--eval-resolution",
        "64",
        "--samples",
        "5000",
    ]));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["psnr"], "inf");
    assert_eq!(v["cd"], 0.0);
    assert_eq!(v["fs"], 1.0);
    assert_eq!(v["ssim"], 1.0);
    assert!(renders.join("view_19_gt.png").is_file());
}

#[test]
fn eval_rejects_untextured_input() {
    let fx = cube();
    let stripped = fx.root.join("stripped.obj");
    std::fs::write(&stripped, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    let r = texrecon(&["eval", p(&stripped), p(&fx.gt_obj)]);
    assert_eq!(r.status.code(), Some(3));
}

fn csv_rows(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    (header, r.records().map(|x| x.unwrap()).collect())
}

#[test]
fn ablate_writes_one_row_per_cell() {
    let fx = cube();
    let csv_path = fx.root.join("sweep.csv");
    ok(&texrecon(&[
        "ablate",
        "--gt",
        p(&fx.gt_obj),
        "-o",
        p(&csv_path),
        "--noise",
        "0,0.005",
        "--points",
        "4000,2000",
        "--strategies",
        "naive,nbf,opt-nbf",
        "--atlas-res",
        "128",
        "--resolution",
        "128",
    ]));
    let (header, rows) = csv_rows(&csv_path);
    assert_eq!(header.iter().collect::<Vec<_>>(), ["noise", "points", "strategy", "psnr", "ssim", "cd", "nc", "fs", "seconds"]);
    assert_eq!(rows.len(), 12);
    assert_eq!(&rows[2][2], "opt-nbf");
}

#[test]
fn slab_benchmark_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("slabs.csv");
    ok(&texrecon(&["ablate", "--benchmark", "stacked-slabs", "-o", p(&csv_path)]));
    let (header, rows) = csv_rows(&csv_path);
    assert_eq!(header.iter().collect::<Vec<_>>(), ["strategy", "misassigned", "atlas_psnr"]);
    assert_eq!(rows.len(), 5);
    let count = |name: &str| rows.iter().find(|r| &r[0] == name).unwrap()[1].parse::<usize>().unwrap();
    assert!(count("nbf") * 10 <= count("naive"));
}

#[test]
fn manifest_reruns_reproduce_outputs() {
    let fx = cube();
    let first = fx.root.join("first");
    let second = fx.root.join("second");
    ok(&texrecon(&[
        "reconstruct",
        p(&fx.cloud),
        "-o",
        p(&first),
        "--mesh",
        p(&fx.plain_obj),
        "--atlas-res",
        "128",
        "--unproject",
        "opt-scratch",
        "--seed",
        "11",
        "--debug",
    ]));
    assert!(first.join("debug/chosen_view.png").is_file() || first.join("debug/charts.png").is_file());
    let manifest = first.join("manifest.json");
    ok(&texrecon(&["reconstruct", p(&fx.cloud), "-o", p(&second), "--mesh", p(&fx.plain_obj), "--config", p(&manifest), "--jobs", "2"]));
    let m = Manifest::read(&second.join("manifest.json")).unwrap();
    assert_eq!(m.config.seed, 11);
    for f in ["mesh.obj", "mesh.png"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let fx = cube();
    let cfg = fx.root.join("run.toml");
    std::fs::write(&cfg, "atlas_res = 128\nviews = \"cube6\"\n[inpaint]\nmethod = \"nearest\"\n").unwrap();
    let out = fx.root.join("out");
    ok(&texrecon(&["reconstruct", p(&fx.cloud), "-o", p(&out), "--mesh", p(&fx.plain_obj), "--config", p(&cfg), "--views", "fib8"]));
    let m = Manifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.config.atlas_res, 128);
    assert_eq!(m.config.views, RigKind::Fib8);
    assert_eq!(m.views, 8);
}

#[test]
fn depth_fusion_geometry_runs() {
    let sphere = shapes::icosphere(Vec3::zeros(), 0.5, 3);
    let scene = TexturedScene::flat_colored(&sphere, 128, |f| if f % 3 == 0 { [0.8, 0.8, 0.2] } else { [0.2, 0.6, 0.3] }).unwrap();
    let fx = fixture(scene, 20_000);
    let out = fx.root.join("fused");
    let cfg = fx.root.join("geo.toml");
    std::fs::write(&cfg, "resolution = 128\natlas_res = 256\n[geometry]\nresolution = 48\ntarget_faces = 4000\n").unwrap();
    ok(&texrecon(&["reconstruct", p(&fx.cloud), "-o", p(&out), "--geometry", "depth-fusion", "--config", p(&cfg), "--debug"]));
    let m = Manifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.geometry_source, "depth-fusion");
    assert!(m.faces > 100 && m.faces <= 4000);
    assert!(out.join("debug/tsdf.raw").is_file());
}
