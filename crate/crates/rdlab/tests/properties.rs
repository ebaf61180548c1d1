//! Randomized property tests for the probability core and the encoder.

use proptest::prelude::*;

use rdlab::distortion::{expected_distortion, DistortionMeasure};
use rdlab::prob::{
    compose, mutual_information, reverse_channel, total_variation, Channel, JointPmf, Pmf,
};
use rdlab::rd::exponent_eta;

fn pmf_strategy(k: usize) -> impl Strategy<Value = Pmf> {
    proptest::collection::vec(1e-3..1.0f64, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        Pmf::new(v.into_iter().map(|x| x / s).collect()).unwrap()
    })
}

fn channel_strategy(kin: usize, kout: usize) -> impl Strategy<Value = Channel> {
    proptest::collection::vec(proptest::collection::vec(1e-3..1.0f64, kout), kin).prop_map(
        |rows| {
            Channel::new(
                rows.into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|x| x / s).collect()
                    })
                    .collect(),
            )
            .unwrap()
        },
    )
}

proptest! {
    // reverse channel composed with the output marginal reproduces the joint
    #[test]
    fn reverse_channel_round_trip(p in pmf_strategy(3), ch in channel_strategy(3, 4)) {
        let joint = compose(&p, &ch).unwrap();
        let back = reverse_channel(&joint).unwrap();
        let y = joint.marginal_pmf(1).unwrap();
        let rebuilt = compose(&y, &back).unwrap();
        for x in 0..3 {
            for yy in 0..4 {
                let orig = joint.prob(&[x, yy]);
                let re = rebuilt.prob(&[yy, x]);
                prop_assert!((orig - re).abs() < 1e-12);
            }
        }
    }

    // 0 <= I(X;Y) <= min(H(X), H(Y)); product joints give exactly 0
    #[test]
    fn mutual_information_bounds(p in pmf_strategy(3), ch in channel_strategy(3, 3)) {
        let joint = compose(&p, &ch).unwrap();
        let mi = mutual_information(&joint).unwrap();
        let hx = joint.marginal_pmf(0).unwrap().entropy();
        let hy = joint.marginal_pmf(1).unwrap().entropy();
        prop_assert!(mi >= -1e-12);
        prop_assert!(mi <= hx.min(hy) + 1e-9);
    }

    #[test]
    fn product_joint_mi_is_zero(p in pmf_strategy(4), q in pmf_strategy(3)) {
        let joint = compose(&p, &Channel::constant(4, q)).unwrap();
        prop_assert!(mutual_information(&joint).unwrap().abs() < 1e-12);
    }

    // TV is a metric bounded by 1 and zero only at equality
    #[test]
    fn tv_metric(p in pmf_strategy(4), q in pmf_strategy(4)) {
        let t = total_variation(p.as_slice(), q.as_slice()).unwrap();
        let rev = total_variation(q.as_slice(), p.as_slice()).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert!((t - rev).abs() < 1e-15);
        let selft = total_variation(p.as_slice(), p.as_slice()).unwrap();
        prop_assert!(selft == 0.0);
    }

    // the excess exponent is nonnegative and zero iff the mean already
    // violates the target
    #[test]
    fn eta_sign(p in pmf_strategy(2), ch in channel_strategy(2, 2), shift in 0.01..0.4f64) {
        let joint = compose(&p, &ch).unwrap();
        let d = DistortionMeasure::hamming(2);
        let mean = expected_distortion(&joint, &d).unwrap();
        let (eta_above, _) = exponent_eta(&joint, &d, (mean + shift).min(0.999)).unwrap();
        prop_assert!(eta_above > 0.0);
        let (eta_below, beta) = exponent_eta(&joint, &d, mean * 0.5).unwrap();
        prop_assert!(eta_below == 0.0 && beta == 0.0);
    }

    // marginalizing a composed joint recovers the input distribution
    #[test]
    fn compose_preserves_input(p in pmf_strategy(5), ch in channel_strategy(5, 2)) {
        let joint = compose(&p, &ch).unwrap();
        let m = joint.marginal_pmf(0).unwrap();
        for i in 0..5 {
            prop_assert!((m.prob(i) - p.prob(i)).abs() < 1e-12);
        }
    }
}

#[test]
fn joint_from_matrix_rejects_negative_and_unnormalized() {
    assert!(JointPmf::from_matrix(&[vec![0.5, -0.1], vec![0.3, 0.3]]).is_err());
    assert!(JointPmf::from_matrix(&[vec![0.5, 0.1], vec![0.3, 0.3]]).is_err());
}
