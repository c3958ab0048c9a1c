use brainqc::model::Volume;
use brainqc::nifti::{
    export_central_slices, read_nifti, read_nifti_file, write_nifti, write_nifti_file, write_slice_pngs, NiftiError,
    View,
};
use proptest::prelude::*;

fn same_bits(a: &Volume, b: &Volume) -> bool {
    a.dims() == b.dims() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite())
}

fn volume() -> impl Strategy<Value = Volume> {
    ([1usize..12, 1usize..12, 1usize..12], [0.2f64..4.0, 0.2f64..4.0, 0.2f64..4.0]).prop_flat_map(|(dims, spacing)| {
        proptest::collection::vec(finite_f32(), dims.iter().product::<usize>())
            .prop_map(move |data| Volume::new(dims, spacing, data).unwrap())
    })
}

proptest! {
    #[test]
    fn file_round_trip_is_bit_exact(v in volume()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("v.nii");
        write_nifti_file(&v, &path).unwrap();
        let back = read_nifti_file(&path).unwrap();
        prop_assert!(same_bits(&v, &back));
        for (a, b) in v.spacing().iter().zip(back.spacing()) {
            prop_assert_eq!(*a as f32, b as f32);
        }
    }

    #[test]
    fn any_truncation_is_rejected(v in volume(), frac in 0.0f64..1.0) {
        let bytes = write_nifti(&v).unwrap();
        let cut = (frac * bytes.len() as f64) as usize;
        prop_assert!(read_nifti(&bytes[..cut]).is_err());
    }
}

#[test]
fn default_geometry_round_trip_and_slices() {
    let dims = [169, 208, 179];
    let v = Volume::from_fn(dims, [1.0; 3], |x, y, z| (x as f32).sin() + y as f32 * 1e-3 - z as f32).unwrap();
    let back = read_nifti(&write_nifti(&v).unwrap()).unwrap();
    assert!(same_bits(&v, &back));

    let slices = export_central_slices(&back);
    let sizes: Vec<_> = View::ALL.iter().map(|&w| (slices.view(w).width, slices.view(w).height)).collect();
    assert_eq!(sizes, [(169, 208), (169, 179), (208, 179)]);
    let dir = tempfile::tempdir().unwrap();
    let files = write_slice_pngs(&dir.path().join("png"), "img1", &slices).unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        assert_eq!(&std::fs::read(f).unwrap()[..8], b"\x89PNG\r\n\x1a\n");
    }
}

#[test]
fn int16_payload_is_scaled() {
    let v = Volume::from_fn([3, 2, 2], [1.0; 3], |x, y, z| (x + 3 * y + 6 * z) as f32).unwrap();
    let mut bytes = write_nifti(&v).unwrap();
    bytes[70..72].copy_from_slice(&4i16.to_le_bytes());
    bytes[72..74].copy_from_slice(&16i16.to_le_bytes());
    bytes[112..116].copy_from_slice(&0.5f32.to_le_bytes());
    bytes[116..120].copy_from_slice(&10f32.to_le_bytes());
    bytes.truncate(352);
    // File order is x fastest, so the raw values run 0..12.
    for raw in 0..12i16 {
        bytes.extend_from_slice(&(raw * 2).to_le_bytes());
    }
    let back = read_nifti(&bytes).unwrap();
    for (a, b) in v.data().iter().zip(back.data()) {
        assert_eq!(*b, a + 10.0);
    }
}

#[test]
fn header_corruptions_have_specific_errors() {
    let v = Volume::filled([4, 4, 4], [1.0; 3], 1.0).unwrap();
    let good = write_nifti(&v).unwrap();

    let mut bad = good.clone();
    bad[0..4].copy_from_slice(&(348i32).to_be_bytes());
    assert!(matches!(read_nifti(&bad), Err(NiftiError::BigEndian | NiftiError::BadHeaderSize(_))));

    let mut bad = good.clone();
    bad[70..72].copy_from_slice(&64i16.to_le_bytes());
    assert!(matches!(read_nifti(&bad), Err(NiftiError::UnsupportedDatatype(64))));

    let mut bad = good.clone();
    bad[352..356].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(read_nifti(&bad), Err(NiftiError::NonFinite(0))));

    assert!(matches!(read_nifti(&good[..100]), Err(NiftiError::TruncatedHeader)));
}
