use std::collections::BTreeSet;

use proptest::prelude::*;

use rpg_core::dataio::{
    encode_binary_cloud, export_cloud_ply, export_trace_ply, format_text_cloud, interpolate_latents, load_cloud,
    load_dataset, parse_binary_cloud, parse_off, parse_text_cloud, sample_mesh, sample_mesh_with_faces, synth_shape,
    synthetic_dataset, table_part_fractions, write_binary_cloud, write_text_cloud, ColorMode, DataError, ShapeKind,
    Split, TriangleMesh, PALETTE,
};
use rpg_core::geometry::PointCloud;
use rpg_core::model::{GeneratorConfig, Rpg};

/// Vertices and colours from an ASCII PLY with `x y z red green blue` vertices.
fn read_ply(text: &str) -> (Vec<[f32; 3]>, Vec<[u8; 3]>) {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ply"));
    let mut count = None;
    let mut props = Vec::new();
    for line in lines.by_ref() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["element", "vertex", n] => count = Some(n.parse::<usize>().unwrap()),
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            ["end_header"] => break,
            _ => {}
        }
    }
    let names: Vec<&str> = props.iter().map(|(_, n)| n.as_str()).collect();
    assert_eq!(names, ["x", "y", "z", "red", "green", "blue"]);
    let mut pts = Vec::new();
    let mut cols = Vec::new();
    for line in lines.take(count.unwrap()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        pts.push([0, 1, 2].map(|i| f[i].parse::<f32>().unwrap()));
        cols.push([3, 4, 5].map(|i| f[i].parse::<u8>().unwrap()));
    }
    assert_eq!(pts.len(), count.unwrap());
    (pts, cols)
}

#[test]
fn text_format_cases() {
    let c = parse_text_cloud("0 0 0\n1 0 0").unwrap();
    assert_eq!(c.cloud.points(), &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    assert_eq!(c.labels, None);

    let c = parse_text_cloud("# header\n0 0 0 2\n\n1 1 1 0\n").unwrap();
    assert_eq!(c.labels, Some(vec![2, 0]));

    match parse_text_cloud("0 0 0\n1 x 0\n") {
        Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
        e => panic!("unexpected {e:?}"),
    }
    assert!(matches!(parse_text_cloud("0 0 0 1\n1 1 1\n"), Err(DataError::Parse { line: 2, .. })));
    assert!(matches!(parse_text_cloud("0 0\n"), Err(DataError::Parse { line: 1, .. })));
}

proptest! {
    #[test]
    fn text_and_binary_round_trip(
        pts in prop::collection::vec(prop::array::uniform3(-1e6f32..1e6f32), 1..64),
        label_seed in any::<u64>(),
    ) {
        let cloud = PointCloud::new(pts).unwrap();
        let labels: Vec<usize> = (0..cloud.len()).map(|i| ((label_seed >> (i % 60)) & 7) as usize).collect();
        let text = format_text_cloud(&cloud, Some(&labels)).unwrap();
        let back = parse_text_cloud(&text).unwrap();
        prop_assert_eq!(&back.cloud, &cloud);
        prop_assert_eq!(back.labels, Some(labels));

        let bytes = encode_binary_cloud(&cloud);
        prop_assert_eq!(bytes.len(), 16 + 12 * cloud.len());
        prop_assert_eq!(parse_binary_cloud(&bytes).unwrap(), cloud);
    }
}

#[test]
fn binary_header_errors() {
    let cloud = PointCloud::new(vec![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
    let bytes = encode_binary_cloud(&cloud);
    assert_eq!(&bytes[..4], b"RPGP");
    assert!(matches!(parse_binary_cloud(&bytes[..bytes.len() - 12]), Err(DataError::CountMismatch { header: 2, found: 1 })));
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(matches!(parse_binary_cloud(&wrong), Err(DataError::BadHeader)));
    let mut version = bytes;
    version[4] = 9;
    assert!(matches!(parse_binary_cloud(&version), Err(DataError::Version(9))));
}

#[test]
fn files_and_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let a = PointCloud::new(vec![[2.0f32, 0.0, 0.0], [4.0, 0.0, 0.0]]).unwrap();
    let b = PointCloud::new(vec![[0.0f32, 1.0, 0.0], [0.0, -3.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
    write_text_cloud(&dir.path().join("a.xyz"), &a, Some(&[0, 1])).unwrap();
    write_binary_cloud(&dir.path().join("b.rpgp"), &b).unwrap();
    std::fs::write(dir.path().join("notes.md"), "ignored").unwrap();

    assert_eq!(load_cloud(&dir.path().join("b.rpgp")).unwrap().cloud, b);
    assert_eq!(load_cloud(&dir.path().join("a.xyz")).unwrap().labels, Some(vec![0, 1]));

    let ds = load_dataset(dir.path(), Split::Train).unwrap();
    assert_eq!(ds.names, ["a", "b"]);
    assert_eq!(ds.items[0].cloud.points(), &[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    assert!(ds.items.iter().all(|i| i.cloud.is_normalized()));

    std::fs::write(dir.path().join("list.txt"), "# subset\nb.rpgp\n").unwrap();
    let ds = load_dataset(&dir.path().join("list.txt"), Split::Test).unwrap();
    assert_eq!(ds.names, ["b"]);
    assert_eq!(ds.split, Split::Test);

    assert!(matches!(load_cloud(&dir.path().join("missing.xyz")), Err(DataError::Io { .. })));
}

#[test]
fn synthetic_shapes() {
    let s = synth_shape(ShapeKind::Sphere, 512, 1, 0.0).unwrap();
    assert!(s.labels.is_none());
    for p in s.cloud.points() {
        let r = (p.iter().map(|v| (*v as f64).powi(2)).sum::<f64>()).sqrt();
        assert!((r - 1.0).abs() < 1e-6, "{r}");
    }

    for kind in ShapeKind::ALL {
        let a = synth_shape(kind, 100, 4, 0.01).unwrap();
        assert_eq!(a, synth_shape(kind, 100, 4, 0.01).unwrap());
        assert_ne!(a, synth_shape(kind, 100, 5, 0.01).unwrap());
        assert!(a.cloud.is_normalized());
        assert_eq!(kind.name().parse::<ShapeKind>().unwrap(), kind);
        if let Some(l) = &a.labels {
            assert_eq!(l.len(), 100);
            assert!(l.iter().all(|&x| x < kind.part_count()));
        }
    }
    assert!(matches!("chair".parse::<ShapeKind>(), Err(DataError::UnknownShape(_))));
    assert!(matches!(synth_shape(ShapeKind::Box, 7, 0, 0.0), Err(DataError::TooFewPoints(7))));

    let ds = synthetic_dataset(64, 2, 7, 0.0).unwrap();
    assert_eq!(ds.len(), 10);
    assert_eq!(ds.names[0], "sphere_0");
}

#[test]
fn table_labels_follow_part_areas() {
    let n = 2048;
    let t = synth_shape(ShapeKind::Table, n, 3, 0.0).unwrap();
    let labels = t.labels.unwrap();
    let expected = table_part_fractions();
    assert!((expected.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for part in 0..5 {
        let count = labels.iter().filter(|&&l| l == part).count() as f64;
        let mean = expected[part] * n as f64;
        let sd = (n as f64 * expected[part] * (1.0 - expected[part])).sqrt();
        assert!((count - mean).abs() < 4.0 * sd, "part {part}: {count} vs {mean}");
    }
    for leg in 2..5 {
        assert_eq!(expected[leg], expected[1]);
    }
}

#[test]
fn mesh_sampling_follows_triangle_areas() {
    // areas 1 and 3
    let mesh = TriangleMesh::new(
        vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [10.0, 0.0, 0.0], [16.0, 0.0, 0.0], [10.0, 1.0, 0.0]],
        vec![[0, 1, 2], [3, 4, 5]],
    )
    .unwrap();
    assert_eq!(mesh.triangle_area(0), 1.0);
    assert_eq!(mesh.triangle_area(1), 3.0);
    let n = 10000;
    let (_, faces) = sample_mesh_with_faces(&mesh, n, 17).unwrap();
    let observed = [0, 1].map(|t| faces.iter().filter(|&&f| f == t).count() as f64);
    let expected = [0.25 * n as f64, 0.75 * n as f64];
    let chi2: f64 = (0..2).map(|i| (observed[i] - expected[i]).powi(2) / expected[i]).sum();
    // 99.9th percentile of chi-square with one degree of freedom
    assert!(chi2 < 10.83, "chi2 = {chi2}");
}

#[test]
fn unit_square_samples_are_uniform() {
    let mesh = parse_off("OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n").unwrap();
    let cloud = sample_mesh(&mesh, 10000, 5).unwrap();
    assert!(!cloud.is_normalized());
    let c = cloud.centroid();
    assert!((c[0] - 0.5).abs() < 0.02 && (c[1] - 0.5).abs() < 0.02 && c[2] == 0.0, "{c:?}");
    assert!(cloud.points().iter().all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])));
}

#[test]
fn single_triangle_samples_stay_inside() {
    let a = [0.3, -1.0, 2.0];
    let b = [1.5, 0.5, 2.0];
    let c = [-0.7, 0.9, 2.0];
    let mesh = TriangleMesh::new(vec![a, b, c], vec![[0, 1, 2]]).unwrap();
    let (pts, _) = sample_mesh_with_faces(&mesh, 2000, 9).unwrap();
    // barycentric coordinates from the xy projection
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    for p in pts {
        let l1 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
        let l2 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
        let l3 = 1.0 - l1 - l2;
        assert!(l1 >= -1e-12 && l2 >= -1e-12 && l3 >= -1e-12);
        assert!((p[2] - 2.0).abs() < 1e-12);
    }
}

#[test]
fn mesh_errors() {
    assert!(matches!(
        TriangleMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 3]]),
        Err(DataError::IndexOutOfRange { triangle: 0, vertices: 3 })
    ));
    let flat = TriangleMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    assert!(matches!(sample_mesh(&flat, 10, 0), Err(DataError::DegenerateMesh)));
    assert!(parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").is_err());
}

#[test]
fn interpolation() {
    let z1 = [0.0f64, 0.0, 0.0];
    let z2 = [2.0f64, 2.0, 2.0];
    assert_eq!(interpolate_latents(&z1, &z2, 2).unwrap(), vec![z1.to_vec(), z2.to_vec()]);
    assert_eq!(interpolate_latents(&z1, &z2, 3).unwrap()[1], vec![1.0; 3]);
    let z = [0.25f32, -3.0];
    assert_eq!(interpolate_latents(&z, &z, 3).unwrap()[1], z.to_vec());
    assert!(matches!(interpolate_latents(&z1, &z2, 1), Err(DataError::TooFewSteps(1))));
    assert!(matches!(interpolate_latents(&z1, &z2[..2], 4), Err(DataError::DimensionMismatch(3, 2))));
}

#[test]
fn ply_export() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = PointCloud::new(vec![[0.1f32, -0.25, 1.0 / 3.0], [1e-7, 2.0, -0.5], [0.0, 0.0, 0.0]]).unwrap();
    let path = dir.path().join("plain.ply");
    export_cloud_ply(&path, &cloud, None).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("element vertex 3\n"));
    let (pts, cols) = read_ply(&text);
    assert_eq!(pts, cloud.points());
    assert!(cols.iter().all(|c| *c == cols[0]));

    let config = GeneratorConfig {
        k_schedule: vec![5, 4, 3],
        latent_width: 8,
        embed_width: 4,
        mlp_hidden: vec![8],
        encoder_hidden: vec![8],
        vae_mode: false,
    };
    let model: Rpg<f32> = Rpg::init(config, 2).unwrap();
    let trace = model.generate(&[0.3, -0.1, 0.5, 0.0, 0.2, 0.9, -0.4, 0.1]).unwrap();

    let seg = dir.path().join("seg.ply");
    export_trace_ply(&seg, &trace, ColorMode::ByAncestor(1)).unwrap();
    let (pts, cols) = read_ply(&std::fs::read_to_string(&seg).unwrap());
    assert_eq!(pts, trace.leaves().points);
    let distinct: BTreeSet<[u8; 3]> = cols.iter().copied().collect();
    assert_eq!(distinct.len(), 5);
    assert!(distinct.iter().all(|c| PALETTE[..5].contains(c)));

    let files = export_trace_ply(&dir.path().join("stages.ply"), &trace, ColorMode::ByStage).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["stages_d0.ply", "stages_d1.ply", "stages_d2.ply", "stages_d3.ply"]);
    for (d, f) in files.iter().enumerate() {
        let (pts, _) = read_ply(&std::fs::read_to_string(f).unwrap());
        assert_eq!(pts, trace.stages[d].points);
    }
}
