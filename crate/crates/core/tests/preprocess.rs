use brainqc::model::Volume;
use brainqc::phantom::{generate_phantom, PhantomSpec};
use brainqc::preprocess::{
    apply_affine, mean_corner_displacement, preprocess_pipeline, register_affine, AffineParams, Interpolation,
    PreprocessConfig, RegistrationConfig,
};

#[test]
fn recovers_an_eight_degree_rotation() {
    let reference = generate_phantom(&PhantomSpec::new([32; 3], 4)).unwrap();
    let truth = AffineParams { rotation: [0.0, 0.0, 8f64.to_radians()], ..Default::default() }.to_map();
    let moving = apply_affine(&reference, &truth.inverse().unwrap(), [32; 3], [1.0; 3]);
    let r = register_affine(&moving, &reference, &RegistrationConfig::default()).unwrap();
    let err = mean_corner_displacement(&r.params.to_map(), &truth, [32; 3], [1.0; 3]);
    assert!(err <= 2.0, "corner error {err}");
    assert!(!r.non_convergence);
}

#[test]
fn identical_inputs_register_to_identity() {
    let v = generate_phantom(&PhantomSpec::new([24, 28, 26], 1)).unwrap();
    let r = register_affine(&v, &v, &RegistrationConfig::default()).unwrap();
    let err = mean_corner_displacement(&r.params.to_map(), &AffineParams::identity().to_map(), [24, 28, 26], [1.0; 3]);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn pipeline_reaches_the_network_geometry() {
    let v = generate_phantom(&PhantomSpec::new([60, 70, 50], 2)).unwrap();
    let v = Volume::new(v.dims(), [1.2, 1.0, 1.5], v.into_data()).unwrap();
    for interpolation in [Interpolation::Trilinear, Interpolation::Cubic] {
        let cfg = PreprocessConfig { interpolation, ..Default::default() };
        let out = preprocess_pipeline(&v, &cfg).unwrap();
        assert_eq!(out.volume.dims(), [169, 208, 179]);
        assert_eq!(out.volume.spacing(), [1.0; 3]);
        let (lo, hi) = out.volume.min_max();
        assert_eq!((lo, hi), (0.0, 1.0));
        assert!(out.registration.is_none());
    }
}

#[test]
fn pipeline_registers_to_a_reference() {
    let reference = generate_phantom(&PhantomSpec::new([32; 3], 3)).unwrap();
    let shift = AffineParams { translation: [3.0, -2.0, 1.0], ..Default::default() }.to_map();
    let moving = apply_affine(&reference, &shift.inverse().unwrap(), [32; 3], [1.0; 3]);
    let cfg = PreprocessConfig {
        target_shape: [32; 3],
        do_registration: true,
        reference: Some(reference.clone()),
        ..Default::default()
    };
    let out = preprocess_pipeline(&moving, &cfg).unwrap();
    let params = out.registration.expect("registration ran");
    let err = mean_corner_displacement(&params.to_map(), &shift, [32; 3], [1.0; 3]);
    assert!(err <= 1.0, "{err}");
}
