//! Regenerates the checked-in fuzz corpus seeds from real serializers.
//! Usage: cargo run -p cloudup --example gen_fuzz_corpus -- <fuzz-corpus-dir>

use cloudup::dataprep::{build_training_set, DataPrepConfig};
use cloudup::geom::Point3;
use cloudup::metrics::{evaluate, EvalConfig};
use cloudup::nn::{serialize_params, HeadNorm, NetworkParams};
use cloudup::shapes::{Shape, SurfaceSource};
use cloudup::PointCloud;

fn main() {
    let root = std::env::args()
        .nth(1)
        .expect("corpus directory argument");
    let root = std::path::PathBuf::from(root);
    let write = |target: &str, name: &str, text: &str| {
        let dir = root.join(target);
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join(name), text).unwrap();
    };

    let cloud = PointCloud::new(vec![
        Point3::new(0.1, -0.25, 0.5),
        Point3::new(-0.4, 0.3, 0.0),
        Point3::new(0.0, 0.0, -0.125),
    ]);
    write("fuzz_xyz_parse", "cloud.xyz", &cloudup::io::serialize_xyz(&cloud));
    write(
        "fuzz_xyz_parse",
        "commented.xyz",
        "# three points\n1 2 3\n\n4.5e-2 -6 7\n0 0 0\n",
    );
    write("fuzz_ply_parse", "cloud.ply", &cloudup::io::serialize_ply(&cloud));
    write(
        "fuzz_ply_parse",
        "extra_props.ply",
        "ply\nformat ascii 1.0\ncomment fuzz seed\nelement vertex 2\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nend_header\n0 0 0 17\n1 2 3 255\n",
    );
    write(
        "fuzz_obj_parse",
        "quad.obj",
        "# unit quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\n",
    );
    write(
        "fuzz_obj_parse",
        "tetra.obj",
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1 2 4\nf 1 3 4\nf 2 3 4\n",
    );
    write(
        "fuzz_config_parse",
        "default.cfg",
        &cloudup::config::PipelineConfig::default().serialize(),
    );
    write(
        "fuzz_config_parse",
        "sparse.cfg",
        "# comment\nvoxel_size = 0.008\nestimator = analytic:sphere:0,0,0,0.4\n",
    );

    let config = DataPrepConfig {
        seeds_per_source: 4,
        sparse_size: 8,
        group_size: 2,
        master_seed: 3,
        ..DataPrepConfig::default()
    };
    let set = build_training_set(
        &[SurfaceSource::Analytic(Shape::sphere(Point3::ZERO, 0.4))],
        &config,
    )
    .unwrap();
    write("fuzz_trainset_parse", "tiny.trainset", &set.serialize());

    let spec = cloudup::nn::NetworkSpec {
        encoder: cloudup::nn::EncoderSpec {
            per_point_widths: vec![4, 6],
        },
        head: cloudup::nn::HeadSpec {
            hidden_widths: vec![4],
            output_dim: 1,
            norm: HeadNorm::Layer,
        },
    };
    let mut params = NetworkParams::init(spec, 7, 8).unwrap();
    params.task = Some(cloudup::nn::TrainTask::Distance);
    write("fuzz_params_parse", "tiny.params", &serialize_params(&params));

    let surface = SurfaceSource::Analytic(Shape::sphere(Point3::ZERO, 0.6));
    let eval_config = EvalConfig {
        n_disks: 10,
        ..EvalConfig::default()
    };
    let report = evaluate(&cloud, &cloud, &surface, &eval_config).unwrap();
    write("fuzz_report_parse", "self.report", &report.serialize());

    println!("corpus written under {}", root.display());
}
