use mrsim_core::kinematics::VehicleState;
use mrsim_core::rng::seed_stream;
use mrsim_core::sensing::{gps_measure, lidar_measure, sigma_l, SensingParams};

const DRAWS: usize = 100_000;

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn gps_noise_matches_configured_std_and_is_isotropic() {
    let mut rng = seed_stream(17, "gps:0");
    let truth = VehicleState::new(50.0, 80.0, 0.0);
    let (mut ex, mut ey) = (Vec::with_capacity(DRAWS), Vec::with_capacity(DRAWS));
    for slot in 0..DRAWS as u32 {
        let z = gps_measure(0, slot, &truth, 3.0, &mut rng);
        ex.push(z.x - truth.x);
        ey.push(z.y - truth.y);
    }
    let (sx, sy) = (std_dev(&ex), std_dev(&ey));
    assert!((sx / 3.0 - 1.0).abs() < 0.02, "{sx}");
    assert!((sy / 3.0 - 1.0).abs() < 0.02, "{sy}");
    assert!((sx / sy - 1.0).abs() < 0.03);
}

#[test]
fn lidar_noise_scales_with_range() {
    let mut rng = seed_stream(18, "lidar:0->1");
    let p = SensingParams::default();
    let a = VehicleState::new(0.0, 0.0, 0.0);
    let b = VehicleState::new(100.0, 0.0, 0.0);
    let (mut ez, mut ed) = (Vec::with_capacity(DRAWS), Vec::with_capacity(DRAWS));
    for slot in 0..DRAWS as u32 {
        let m = lidar_measure(0, 1, &a, &b, slot, &p, &mut rng);
        ez.push(m.x - b.x);
        ed.push(m.d_hat - 100.0);
        assert!(m.d_hat >= 0.0);
    }
    let range_std = 100.0 / (2f64.sqrt() * 200.0);
    assert!((std_dev(&ed) / range_std - 1.0).abs() < 0.02);
    let expect = sigma_l(100.0, 2.0, 200.0);
    assert!((expect - 2.353_553).abs() < 1e-6);
    assert!((std_dev(&ez) / expect - 1.0).abs() < 0.02);
}

#[test]
fn sigma_l_is_monotone() {
    let mut prev = sigma_l(0.0, 2.0, 200.0);
    assert_eq!(prev, 2.0);
    for k in 1..1000 {
        let s = sigma_l(k as f64 * 0.5, 2.0, 200.0);
        assert!(s >= prev);
        prev = s;
    }
}

#[test]
fn same_seed_same_measurements() {
    let p = SensingParams::default();
    let a = VehicleState::new(10.0, 10.0, 0.0);
    let b = VehicleState::new(40.0, 70.0, 1.0);
    let run = || {
        let mut rng = seed_stream(5, "lidar:2->3");
        (0..100).map(|s| lidar_measure(2, 3, &a, &b, s, &p, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
