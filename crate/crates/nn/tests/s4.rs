//! State-space layer: geometric-series kernel, equivalence of the
//! convolutional and recurrent evaluations, stability validation, and the
//! tape operation's agreement with the standalone layer.

use pulsebench_core::rng::Rng;
use pulsebench_nn::{Error, Graph, StateSpace};

#[test]
fn single_state_kernel_is_a_geometric_series() {
    // One state with discrete pole 1/2 and unit input/output weights:
    // the impulse response must be 1, 1/2, 1/4, ...
    let rate = 0.5f64.ln(); // exp(dt * rate) = 0.5 at dt = 1
    let ss = StateSpace::new(vec![rate], vec![1.0], vec![1.0], 1.0, 16).unwrap();
    let k = ss.kernel(3).unwrap();
    assert!((k[0] - 1.0).abs() < 1e-12);
    assert!((k[1] - 0.5).abs() < 1e-12);
    assert!((k[2] - 0.25).abs() < 1e-12);
}

#[test]
fn kernel_of_unit_impulse_equals_convolution_output() {
    let ss = StateSpace::new(
        vec![-0.3, -1.2],
        vec![0.7, -0.4],
        vec![1.1, 0.6],
        0.1,
        64,
    )
    .unwrap();
    let mut impulse = vec![0.0; 20];
    impulse[0] = 1.0;
    let y = ss.convolve(&impulse).unwrap();
    let k = ss.kernel(20).unwrap();
    for (a, b) in y.iter().zip(&k) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn convolution_and_recurrence_agree_on_random_stable_systems() {
    let mut rng = Rng::new(0x5453);
    for trial in 0..100 {
        let n = rng.uniform_int(1, 8) as usize;
        let rates: Vec<f64> = (0..n).map(|_| -rng.uniform(0.05, 4.0)).collect();
        let bw: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let cw: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let dt = rng.uniform(0.01, 0.5);
        let len = rng.uniform_int(1, 96) as usize;
        let ss = StateSpace::new(rates, bw, cw, dt, 128).unwrap();
        let input: Vec<f64> = (0..len).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let conv = ss.convolve(&input).unwrap();
        let scan = ss.scan(&input).unwrap();
        for (t, (a, b)) in conv.iter().zip(&scan).enumerate() {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-9);
            assert!(
                rel < 1e-4,
                "trial {trial}, step {t}: convolution {a} vs recurrence {b}"
            );
        }
    }
}

#[test]
fn nonnegative_rates_are_rejected_as_unstable() {
    for bad in [0.0, 0.5, f64::INFINITY, f64::NAN] {
        let err = StateSpace::new(vec![-1.0, bad], vec![1.0; 2], vec![1.0; 2], 0.1, 8)
            .unwrap_err();
        assert!(matches!(err, Error::UnstableState { .. }), "rate {bad}: {err}");
    }
}

#[test]
fn lengths_beyond_the_declared_maximum_are_rejected() {
    let ss = StateSpace::new(vec![-1.0], vec![1.0], vec![1.0], 0.1, 8).unwrap();
    assert!(ss.kernel(8).is_ok());
    let err = ss.kernel(9).unwrap_err();
    assert!(matches!(err, Error::UnsupportedLength { .. }), "{err}");
    assert!(ss.kernel(0).is_err());
    assert!(ss.convolve(&vec![0.0; 9]).is_err());
    assert!(ss.scan(&vec![0.0; 9]).is_err());
}

#[test]
fn mismatched_weight_lengths_are_rejected() {
    let err =
        StateSpace::new(vec![-1.0, -2.0], vec![1.0], vec![1.0, 1.0], 0.1, 8).unwrap_err();
    assert!(matches!(err, Error::InvalidSpec { .. }), "{err}");
}

#[test]
fn kernel_decays_for_stable_systems() {
    let ss = StateSpace::new(vec![-0.5, -2.0], vec![1.0, 1.0], vec![1.0, 1.0], 0.2, 512)
        .unwrap();
    let k = ss.kernel(512).unwrap();
    assert!(k[0].abs() > k[255].abs());
    assert!(k[511].abs() < 1e-8 * k[0].abs());
}

/// The tape's kernel operation must agree with the standalone layer; the
/// tape parameterizes each eigenvalue as -exp(rho) so stability holds for
/// every real rho.
#[test]
fn tape_kernel_matches_standalone_layer() {
    let mut rng = Rng::new(77);
    for _ in 0..25 {
        let st = rng.uniform_int(1, 6) as usize;
        let rho: Vec<f64> = (0..st).map(|_| rng.uniform(-2.0, 1.0)).collect();
        let bw: Vec<f64> = (0..st).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let cw: Vec<f64> = (0..st).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let dt = 0.1;
        let len = 24;

        let rates: Vec<f64> = rho.iter().map(|r| -r.exp()).collect();
        let ss = StateSpace::new(rates, bw.clone(), cw.clone(), dt, len).unwrap();
        let want = ss.kernel(len).unwrap();

        let mut g: Graph<f64> = Graph::new();
        let rn = g.input(&[1, st], rho.clone()).unwrap();
        let bn = g.input(&[1, st], bw.clone()).unwrap();
        let cn = g.input(&[1, st], cw.clone()).unwrap();
        let kn = g.ssm_kernel(rn, bn, cn, dt, len).unwrap();
        for (a, b) in g.value(kn).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "tape {a} vs layer {b}");
        }
    }
}
