use sdfseg_core::sdt::signed_distance;
use sdfseg_core::shapegen::{voxelize, Quat, Shape, ShapeSpec};
use sdfseg_core::surfmetrics::{extract_surface_binary, extract_surface_sdf, TriMesh};
use sdfseg_core::volgrid::{read_binary, read_scalar, read_volume, write_volume};
use sdfseg_core::{GridMeta, Volume};

fn anisotropic_case() -> (sdfseg_core::BinaryVolume, sdfseg_core::ScalarVolume) {
    let meta = GridMeta::new([24, 20, 36], [0.5, 0.5, 0.25], [-3.0, 1.25, 7.5]).unwrap();
    let rot = Quat::from_axis_angle([1.0, 1.0, 0.0], 0.4);
    let spec = ShapeSpec::new(Shape::Cylinder { radius: 3.0, half_height: 3.0 }, meta.center(), rot).unwrap();
    let mask = voxelize(&spec, &meta);
    let sdf = signed_distance(&mask).unwrap();
    (mask, sdf)
}

#[test]
fn vvol_round_trips_bit_exact_with_anisotropic_spacing() {
    let dir = tempfile::tempdir().unwrap();
    let (mask, sdf) = anisotropic_case();
    assert!(mask.count() > 0);

    let bpath = dir.path().join("mask.vvol");
    write_volume(&bpath, &mask.clone().into()).unwrap();
    let back = read_binary(&bpath).unwrap();
    assert_eq!(back, mask);
    assert_eq!(back.meta().spacing(), [0.5, 0.5, 0.25]);

    let spath = dir.path().join("sdf.vvol");
    write_volume(&spath, &sdf.clone().into()).unwrap();
    let back = read_scalar(&spath).unwrap();
    assert_eq!(back.meta(), sdf.meta());
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.voxels()), bits(sdf.voxels()));

    // Rewriting what was read reproduces the file byte for byte.
    let again = dir.path().join("again.vvol");
    write_volume(&again, &read_volume(&spath).unwrap()).unwrap();
    assert_eq!(std::fs::read(&spath).unwrap(), std::fs::read(&again).unwrap());
    assert!(matches!(read_volume(&bpath).unwrap(), Volume::Binary(_)));
}

#[test]
fn obj_export_reparses_to_identical_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (mask, sdf) = anisotropic_case();
    for mesh in [extract_surface_binary(&mask), extract_surface_sdf(&sdf)] {
        let path = dir.path().join("m.obj");
        mesh.write_obj(&path).unwrap();
        let back = TriMesh::parse_obj(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.vertices.len(), mesh.vertices.len());
        assert_eq!(back.triangles, mesh.triangles);
        assert_eq!(back.vertices, mesh.vertices);
    }
}
