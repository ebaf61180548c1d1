//! Cross-system consistency checks: degeneracies that reduce one system to
//! another, and statistical monotonicity in blocklength.

use rdlab::distortion::DistortionMeasure;
use rdlab::error::Budget;
use rdlab::prob::{Channel, JointPmf, Pmf};
use rdlab::systems::{run_bt, run_p2p, run_wz, ReconstructionFn};

/// Side information independent of the source with R' = 0 degenerates to
/// the point-to-point system at the same transmitted rate.
#[test]
fn wz_independent_side_info_matches_p2p() {
    let budget = Budget::default();
    let (n, rate, trials) = (20usize, 0.8, 600usize);
    // X uniform, Z independent uniform
    let joint_xz = JointPmf::new(vec![2, 2], vec![0.25; 4]).unwrap();
    let aux = Channel::bsc(0.1).unwrap();
    let phi = ReconstructionFn::first_arg(2, 2);
    let d = DistortionMeasure::hamming(2);
    let wz = run_wz(&joint_xz, &aux, &phi, &d, rate, 0.0, n, 0.2, trials, 5, &budget).unwrap();
    assert_eq!(wz.decode_error_rate, Some(0.0));
    let p2p = run_p2p(&Pmf::uniform(2), &aux, &d, rate, n, 0.2, trials, 6, &budget).unwrap();
    // per-trial distortion variance is below 1/4; add slack for
    // codebook-to-codebook variation
    let sigma = (2.0f64 * 0.25 / trials as f64).sqrt();
    let delta = (wz.mean_distortion[0] - p2p.mean_distortion[0]).abs();
    assert!(
        delta <= 3.0 * sigma,
        "wz {} vs p2p {}",
        wz.mean_distortion[0],
        p2p.mean_distortion[0]
    );
}

/// Mean distortion does not increase with blocklength (beyond noise) when
/// the rate is strictly inside the achievable region.
#[test]
fn p2p_monotone_in_blocklength() {
    let budget = Budget::default();
    let source = Pmf::uniform(2);
    let ch = Channel::bsc(0.1).unwrap();
    let d = DistortionMeasure::hamming(2);
    let trials = 300;
    let means: Vec<f64> = [50usize, 200, 800]
        .iter()
        .map(|&n| {
            run_p2p(&source, &ch, &d, 0.8, n, 0.15, trials, 7, &budget)
                .unwrap()
                .mean_distortion[0]
        })
        .collect();
    // 3 sigma band on the difference of means, per-trial std <= 0.5/sqrt(50)
    let sigma = (2.0f64 * 0.005 / trials as f64).sqrt();
    for w in means.windows(2) {
        assert!(w[1] <= w[0] + 3.0 * sigma, "not monotone: {means:?}");
    }
}

/// When both sources are identical and encoder 1 relays its source at a
/// rate above log2 of the alphabet, reconstructing source 2 from encoder
/// 1's codeword alone succeeds: distortion shrinks with n.
///
/// The rate must be strictly above 1 bit: an i.i.d. uniform codebook at
/// exactly 2^n words misses a fraction 1/e of the sequences, leaving a
/// distortion floor; the excess rate drives the miss probability to zero.
#[test]
fn bt_identical_sources_relay() {
    let budget = Budget::default();
    // X1 = X2 uniform
    let joint = JointPmf::from_matrix(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
    let identity = Channel::identity(2);
    let aux2 = Channel::bsc(0.1).unwrap();
    let phi1 = ReconstructionFn::first_arg(2, 2);
    // reconstruct source 2 from u1 only
    let phi2 = ReconstructionFn::first_arg(2, 2);
    let d = DistortionMeasure::hamming(2);
    let run = |n: usize| {
        run_bt(
            &joint, &identity, &aux2, &phi1, &phi2, &d, &d, 1.25, 0.7, 0.0, n,
            (0.05, 0.05), 300, 11, &budget,
        )
        .unwrap()
        .mean_distortion[1]
    };
    let (d_small, d_large) = (run(25), run(100));
    assert!(d_large < 0.02, "d2 at n=100: {d_large}");
    assert!(d_large <= d_small + 1e-9, "{d_small} -> {d_large}");
}
