use lidarfuse::calib::CameraId;
use lidarfuse::fuse::ColourisedCloud;
use lidarfuse::geometry::{Image, PointCloud};
use lidarfuse::io::{self, DatasetIndex, ImageFormat};
use lidarfuse::{Error, ErrorClass};
use nalgebra::Point3;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(1e300)
    ]
}

fn points(max: usize) -> impl Strategy<Value = Vec<Point3<f64>>> {
    prop::collection::vec(
        (finite(), finite(), finite()).prop_map(|(x, y, z)| Point3::new(x, y, z)),
        0..max,
    )
}

fn colourised() -> impl Strategy<Value = ColourisedCloud> {
    (points(60), any::<i64>()).prop_flat_map(|(points, t)| {
        let n = points.len();
        (
            Just(points),
            prop::collection::vec(any::<[u8; 3]>(), n),
            prop::collection::vec(prop::option::of(0u8..255), n),
            Just(t),
        )
            .prop_map(|(points, rgb, ids, timestamp_ns)| ColourisedCloud {
                points,
                rgb,
                source: ids.into_iter().map(|i| i.map(CameraId)).collect(),
                timestamp_ns,
            })
    })
}

fn image() -> impl Strategy<Value = Image> {
    (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), (w * h * 3) as usize).prop_map(move |px| Image::new(w, h, px).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn colourised_ply_round_trips(cloud in colourised()) {
        let mut bytes = Vec::new();
        io::write_colourised_ply(&mut bytes, &cloud).unwrap();
        let back = io::read_colourised_ply(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back, cloud);
    }

    #[test]
    fn plain_ply_round_trips(pts in points(60), t in any::<i64>(), with_extras in any::<bool>()) {
        let n = pts.len();
        let mut cloud = PointCloud::from_points(pts).with_timestamp(t);
        if with_extras && n > 0 {
            cloud.colors = Some((0..n).map(|i| [i as u8, 7, 255 - i as u8]).collect());
            cloud.intensity = Some((0..n).map(|i| i as f32 * 0.5).collect());
        }
        let mut bytes = Vec::new();
        io::write_cloud_ply(&mut bytes, &cloud).unwrap();
        prop_assert_eq!(io::read_cloud_ply(&mut bytes.as_slice()).unwrap(), cloud);
    }

    #[test]
    fn ppm_and_png_round_trip(img in image()) {
        for format in [ImageFormat::Ppm, ImageFormat::Png] {
            let bytes = io::encode_image(&img, format).unwrap();
            prop_assert_eq!(&io::decode_image(&bytes).unwrap(), &img);
        }
    }
}

#[test]
fn colourised_ply_header_lists_expected_properties() {
    let cloud = ColourisedCloud {
        points: vec![Point3::new(1.0, 2.0, 3.0)],
        rgb: vec![[1, 2, 3]],
        source: vec![None],
        timestamp_ns: 5,
    };
    let mut bytes = Vec::new();
    io::write_colourised_ply(&mut bytes, &cloud).unwrap();
    let text = String::from_utf8_lossy(&bytes);
    let header = &text[..text.find("end_header").unwrap()];
    for prop in ["x", "y", "z", "red", "green", "blue", "camera_id"] {
        assert!(header
            .lines()
            .any(|l| l.starts_with("property") && l.ends_with(&format!(" {prop}"))));
    }
    assert!(bytes.ends_with(&[1, 2, 3, 255]));
}

#[test]
fn ascii_ply_from_other_tools_is_read() {
    let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n\
                end_header\n0 0 1\n1.5 2 -3\n";
    let cloud = io::read_cloud_ply(&mut text.as_bytes()).unwrap();
    assert_eq!(cloud.points[1], Point3::new(1.5, 2.0, -3.0));
    assert!(cloud.colors.is_none());
}

#[test]
fn file_errors_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = io::load_cloud(dir.path().join("nope.ply")).unwrap_err();
    assert_eq!(missing.class(), ErrorClass::Data);
    std::fs::write(dir.path().join("bad.ply"), b"not a ply").unwrap();
    assert!(matches!(
        io::load_cloud(dir.path().join("bad.ply")),
        Err(Error::Format { .. })
    ));
    assert!(matches!(
        io::save_image(dir.path().join("x.bmp"), &Image::filled(2, 2, [0; 3])),
        Err(Error::Format { .. })
    ));
}

#[test]
fn dataset_index_orders_frames_by_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for t in [300i64, 100, 200] {
        io::save_cloud(
            DatasetIndex::lidar_path(root, t),
            &PointCloud::default().with_timestamp(t),
        )
        .unwrap();
        io::save_image(
            DatasetIndex::camera_path(root, 1, t + 1, "ppm"),
            &Image::filled(4, 3, [9; 3]),
        )
        .unwrap();
    }
    io::save_image(
        DatasetIndex::camera_path(root, 0, 7, "png"),
        &Image::filled(4, 3, [1; 3]),
    )
    .unwrap();
    std::fs::write(root.join("lidar/notes.txt"), "x").unwrap();
    std::fs::create_dir(root.join("misc")).unwrap();

    let index = DatasetIndex::scan(root).unwrap();
    assert_eq!(index.lidar_timestamps(), vec![100, 200, 300]);
    assert_eq!(index.camera_ids(), vec![0, 1]);
    assert_eq!(index.camera_timestamps(1), vec![101, 201, 301]);
    assert_eq!(index.skipped.len(), 1);
    let cloud = io::load_cloud(&index.lidar[0].path).unwrap();
    assert_eq!(cloud.timestamp_ns, 100);

    assert!(DatasetIndex::scan(dir.path().join("none")).is_err_and(|e| e.class() == ErrorClass::Configuration));
    let empty = tempfile::tempdir().unwrap();
    assert!(DatasetIndex::scan(empty.path()).unwrap().lidar.is_empty());
}

#[test]
fn json_helpers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/value.json");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    io::save_json(&path, &vec![1.5, 2.5]).unwrap();
    let back: Vec<f64> = io::load_json(&path).unwrap();
    assert_eq!(back, vec![1.5, 2.5]);
}
