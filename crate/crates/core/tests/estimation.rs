use mrsim_core::estimation::{
    chronological_filter, diag3, r_gps, trace3, update, DelayHandling, EkfState, FilterParams, Mat3, Measurement,
    RobotFilter,
};
use mrsim_core::kinematics::{ControlInput, VehicleState};
use mrsim_core::rng::seed_stream;
use mrsim_core::sensing::{GpsMeasurement, InterRobotMeasurement};
use rand::Rng;

const D: u32 = 10;

fn initial() -> EkfState {
    EkfState { mean: VehicleState::new(10.0, 20.0, 0.0), cov: diag3(9.0, 9.0, 10f64.to_radians().powi(2)) }
}

fn gps(slot: u32, x: f64, y: f64) -> Measurement {
    Measurement::Gps(GpsMeasurement { robot_id: 0, slot, x, y })
}

fn inter(sender: u16, slot: u32, x: f64, y: f64, d_hat: f64) -> Measurement {
    Measurement::Inter(InterRobotMeasurement { sender_id: sender, target_id: 0, slot, x, y, d_hat })
}

fn assert_close(a: &EkfState, b: &EkfState, tol: f64) {
    let m = [a.mean.x - b.mean.x, a.mean.y - b.mean.y, a.mean.theta - b.mean.theta];
    assert!(m.iter().all(|d| d.abs() <= tol), "{a:?} vs {b:?}");
    for i in 0..3 {
        for j in 0..3 {
            assert!((a.cov[i][j] - b.cov[i][j]).abs() <= tol, "{a:?} vs {b:?}");
        }
    }
}

fn assert_psd(p: &Mat3) {
    for i in 0..3 {
        for j in 0..3 {
            assert!((p[i][j] - p[j][i]).abs() <= 1e-9);
        }
    }
    // Leading principal minors of P + 1e-9 I.
    let q: Mat3 = core::array::from_fn(|i| core::array::from_fn(|j| p[i][j] + if i == j { 1e-9 } else { 0.0 }));
    let m1 = q[0][0];
    let m2 = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let m3 = q[0][0] * (q[1][1] * q[2][2] - q[1][2] * q[2][1]) - q[0][1] * (q[1][0] * q[2][2] - q[1][2] * q[2][0])
        + q[0][2] * (q[1][0] * q[2][1] - q[1][1] * q[2][0]);
    assert!(m1 > 0.0 && m2 > 0.0 && m3 > -1e-9, "{p:?}");
}

/// One seeded mini-run: the robot's own GPS every slot plus readings from two
/// peers, each delayed by a random 0..=D slots. Returns controls and
/// (arrival slot, measurement) pairs.
fn mini_run(seed: u64, slots: u32) -> (Vec<ControlInput>, Vec<(u32, Measurement)>) {
    let mut rng = seed_stream(seed, "mini");
    let p = FilterParams::default();
    let mut truth = VehicleState::new(10.0, 20.0, 0.0);
    let mut controls = Vec::new();
    let mut arrivals = Vec::new();
    for t in 0..slots {
        if t > 0 {
            let u = ControlInput { v: rng.random_range(0.0..10.0), delta: rng.random_range(-0.3..0.3) };
            truth = mrsim_core::kinematics::ackermann_step(truth, u, p.dt, p.wheelbase).unwrap();
            controls.push(ControlInput { v: u.v + rng.random_range(-1.0..1.0), delta: u.delta });
        }
        arrivals.push((t, gps(t, truth.x + rng.random_range(-3.0..3.0), truth.y + rng.random_range(-3.0..3.0))));
        for sender in 1..3u16 {
            if rng.random_bool(0.7) {
                let delay = rng.random_range(0..=D);
                let m = inter(sender, t, truth.x + rng.random_range(-2.0..2.0), truth.y, rng.random_range(0.0..150.0));
                arrivals.push((t + delay, m));
            }
        }
    }
    (controls, arrivals)
}

fn batch_at(arrivals: &[(u32, Measurement)], t: u32) -> Vec<Measurement> {
    arrivals.iter().filter(|(a, _)| *a == t).map(|(_, m)| *m).collect()
}

fn run_filter(mode: DelayHandling, controls: &[ControlInput], arrivals: &[(u32, Measurement)]) -> Vec<EkfState> {
    let p = FilterParams::default();
    let mut f = RobotFilter::new(initial(), 0, p, mode, D);
    f.ingest_initial(batch_at(arrivals, 0)).unwrap();
    let mut out = vec![*f.estimate()];
    for (k, &u) in controls.iter().enumerate() {
        let t = k as u32 + 1;
        f.step(t, u, batch_at(arrivals, t)).unwrap();
        out.push(*f.estimate());
    }
    out
}

#[test]
fn iree_matches_chronological_oracle_on_mini_runs() {
    let p = FilterParams::default();
    for seed in 0..50 {
        let (controls, arrivals) = mini_run(seed, 100);
        let iree = run_filter(DelayHandling::Iree, &controls, &arrivals);
        for (t, est) in iree.iter().enumerate() {
            let t = t as u32;
            let known: Vec<Measurement> = arrivals.iter().filter(|(a, _)| *a <= t).map(|(_, m)| *m).collect();
            let oracle = chronological_filter(initial(), 0, &controls[..t as usize], &known, &p).unwrap();
            assert_close(est, oracle.last().unwrap(), 1e-9);
            assert_psd(&est.cov);
        }
    }
}

#[test]
fn buffered_posteriors_match_oracle_for_every_slot() {
    let p = FilterParams::default();
    for seed in 50..60 {
        let (controls, arrivals) = mini_run(seed, 60);
        let mut f = RobotFilter::new(initial(), 0, p, DelayHandling::Iree, D);
        f.ingest_initial(batch_at(&arrivals, 0)).unwrap();
        for (k, &u) in controls.iter().enumerate() {
            let t = k as u32 + 1;
            f.step(t, u, batch_at(&arrivals, t)).unwrap();
            let known: Vec<Measurement> = arrivals.iter().filter(|(a, _)| *a <= t).map(|(_, m)| *m).collect();
            let oracle = chronological_filter(initial(), 0, &controls[..t as usize], &known, &p).unwrap();
            for (tau, post) in f.history().posteriors() {
                assert_close(post, &oracle[tau as usize], 1e-9);
            }
        }
    }
}

#[test]
fn delayed_reading_is_replayed_into_its_slot() {
    let p = FilterParams::default();
    let controls = vec![ControlInput { v: 5.0, delta: 0.05 }; 8];
    let mut arrivals: Vec<(u32, Measurement)> = (0..=8).map(|t| (t, gps(t, 10.0 + 0.5 * t as f64, 20.0))).collect();
    arrivals.push((7, inter(1, 5, 12.7, 20.4, 30.0)));
    let iree = run_filter(DelayHandling::Iree, &controls, &arrivals);
    let all: Vec<Measurement> = arrivals.iter().map(|(_, m)| *m).collect();
    let oracle = chronological_filter(initial(), 0, &controls, &all, &p).unwrap();
    for t in 7..=8 {
        assert_close(&iree[t], &oracle[t], 1e-9);
    }
    // The naive filter applies it late and ends up elsewhere.
    let naive = run_filter(DelayHandling::Naive, &controls, &arrivals);
    assert!((naive[7].mean.x - oracle[7].mean.x).abs() > 1e-6);
}

#[test]
fn two_delayed_readings_same_arrival_slot() {
    let p = FilterParams::default();
    let controls = vec![ControlInput { v: 3.0, delta: -0.1 }; 12];
    let mut arrivals: Vec<(u32, Measurement)> = (0..=12).map(|t| (t, gps(t, 10.0 + 0.3 * t as f64, 19.0))).collect();
    arrivals.push((9, inter(2, 6, 12.0, 19.5, 10.0)));
    arrivals.push((9, inter(1, 3, 11.0, 19.2, 80.0)));
    let iree = run_filter(DelayHandling::Iree, &controls, &arrivals);
    let all: Vec<Measurement> = arrivals.iter().map(|(_, m)| *m).collect();
    let oracle = chronological_filter(initial(), 0, &controls, &all, &p).unwrap();
    for t in 9..=12 {
        assert_close(&iree[t], &oracle[t], 1e-9);
    }
}

#[test]
fn zero_delay_naive_and_iree_are_bit_identical() {
    for seed in 0..10 {
        let (controls, mut arrivals) = mini_run(seed, 100);
        for (a, m) in arrivals.iter_mut() {
            *a = m.slot();
        }
        let naive = run_filter(DelayHandling::Naive, &controls, &arrivals);
        let iree = run_filter(DelayHandling::Iree, &controls, &arrivals);
        assert_eq!(naive, iree);
    }
}

#[test]
fn window_and_drop_rules() {
    let p = FilterParams::default();
    for mode in [DelayHandling::Naive, DelayHandling::Iree] {
        let mut f = RobotFilter::new(initial(), 0, p, mode, D);
        for t in 1..=20 {
            f.step(t, ControlInput { v: 1.0, delta: 0.0 }, vec![]).unwrap();
        }
        f.step(21, ControlInput { v: 1.0, delta: 0.0 }, vec![inter(1, 10, 0.0, 0.0, 1.0)]).unwrap();
        assert_eq!(f.drops().stale, 1, "{mode:?}");
        let applied = f.applied();
        f.step(22, ControlInput { v: 1.0, delta: 0.0 }, vec![inter(1, 12, 30.0, 30.0, 1.0)]).unwrap();
        assert_eq!(f.drops().stale, 1);
        assert_eq!(f.applied(), applied + 1, "age-D reading applied");
        f.step(23, ControlInput { v: 1.0, delta: 0.0 }, vec![inter(1, 40, 0.0, 0.0, 1.0)]).unwrap();
        assert_eq!(f.drops().future, 1);
        assert_eq!(f.history().len(), D as usize + 1);
        assert_eq!(f.history().oldest_slot(), Some(23 - D));
    }
}

#[test]
fn early_filter_underrun_is_counted() {
    let p = FilterParams::default();
    let mut f = RobotFilter::new(initial(), 5, p, DelayHandling::Iree, D);
    f.step(6, ControlInput { v: 1.0, delta: 0.0 }, vec![inter(1, 2, 0.0, 0.0, 1.0)]).unwrap();
    assert_eq!(f.drops().underrun, 1);
}

#[test]
fn repeated_updates_keep_covariance_psd() {
    let mut rng = seed_stream(3, "psd");
    let p = FilterParams::default();
    let mut s = initial();
    for _ in 0..2000 {
        s = mrsim_core::estimation::predict(&s, ControlInput { v: rng.random_range(0.0..10.0), delta: 0.2 }, &p)
            .unwrap();
        let tr = trace3(&s.cov);
        s = update(&s, [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)], r_gps(rng.random_range(0.01..5.0)))
            .unwrap();
        assert!(trace3(&s.cov) <= tr);
        assert_psd(&s.cov);
    }
}
