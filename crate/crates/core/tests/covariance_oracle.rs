mod support {
    pub mod riemann;
}

use support::riemann::exy_flat;
use svexp_core::model::{
    cross_covariance, cross_covariance_closed_form, Factor, ForwardVarianceCurve, Kernel, ModelSpec,
};

fn flat_model(rho: f64, kernel: Kernel) -> ModelSpec {
    ModelSpec::new(
        100.0,
        1.0,
        0.2,
        vec![Factor::new(rho, kernel)],
        ForwardVarianceCurve::flat(0.04).unwrap(),
    )
    .unwrap()
}

#[test]
fn rough_worked_value_three_ways() {
    let m = flat_model(-0.7, Kernel::power(1.0, 0.1).unwrap());
    let quad = cross_covariance(&m).unwrap();
    let closed = cross_covariance_closed_form(&m).unwrap();
    let brute = exy_flat(&|t: f64| t.powf(-0.4), -0.7, 0.04, 1.0, 2000, 0.6, 1.0);
    let exact = -0.029_166_666_666_666_667;
    assert!((closed - exact).abs() < 1e-15);
    assert!(((quad - exact) / exact).abs() < 1e-9);
    assert!(((brute - exact) / exact).abs() < 1e-6, "brute {brute}");
}

#[test]
fn exponential_worked_value_three_ways() {
    let m = flat_model(-0.5, Kernel::exponential(2.0, 1.0).unwrap());
    let quad = cross_covariance(&m).unwrap();
    let closed = cross_covariance_closed_form(&m).unwrap();
    let brute = exy_flat(&|t: f64| 2.0 * (-t).exp(), -0.5, 0.04, 1.0, 1000, 1.0, 2.0);
    // -0.04 / e
    let exact = -0.014_715_177_646_857_693;
    assert!(((closed - exact) / exact).abs() < 1e-14);
    assert!(((quad - exact) / exact).abs() < 1e-9);
    assert!(((brute - exact) / exact).abs() < 1e-6, "brute {brute}");
}
