mod common;

use oe_lab::losses::{
    anomaly_score, bce_loss, clip_anomaly_score, clip_candidate_probabilities, dsad_loss, dsvdd_loss, focal_loss,
    hsc_loss, Center, ClipMode, EmbeddingPair, Method, RadialKind, ScoreInput,
};
use oe_lab::nn::Tensor;
use proptest::prelude::*;

fn reps(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

fn labels(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, n)
}

fn radial() -> impl Strategy<Value = RadialKind> {
    prop::sample::select(RadialKind::ALL.to_vec())
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn hsc_matches_naive_oracle(z in reps(8, 3), y in labels(8), kind in radial()) {
        // keep anomalies away from the origin where the naive form loses precision
        let far = (0..8).all(|i| y[i] == 1 || kind.h(z.row(i)) > 1e-3);
        prop_assume!(far);
        let out = hsc_loss(&z, &y, kind).unwrap();
        prop_assert!(close(out.loss, common::hsc_oracle(&z, &y, kind), 1e-10));
        prop_assert_eq!(out.saturated, 0);
    }

    #[test]
    fn hsc_without_anomalies_is_dsvdd_at_origin(z in reps(6, 4)) {
        let h = hsc_loss(&z, &[1; 6], RadialKind::L2Squared).unwrap();
        let d = dsvdd_loss(&z, &Center::zeros(4)).unwrap();
        prop_assert!((h.loss - d.loss).abs() < 1e-12);
        prop_assert!(h.grad.max_abs_diff(&d.grad) < 1e-12);
    }

    #[test]
    fn focal_without_focusing_is_half_bce(t in prop::collection::vec(-40.0f64..40.0, 1..20), seed in any::<u64>()) {
        let y: Vec<u8> = (0..t.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        let logits = Tensor::new(vec![t.len()], t).unwrap();
        let f = focal_loss(&logits, &y, 0.0, 0.5).unwrap();
        let b = bce_loss(&logits, &y).unwrap();
        prop_assert!((f.loss - 0.5 * b.loss).abs() < 1e-12);
        for (gf, gb) in f.grad.data().iter().zip(b.grad.data()) {
            prop_assert!((gf - 0.5 * gb).abs() < 1e-12);
        }
    }

    #[test]
    // the naive 1 - sigmoid(x) is only accurate for moderate |x|
    fn bce_matches_naive_sigmoid(t in prop::collection::vec(-15.0f64..15.0, 1..20), y in labels(20)) {
        let y = &y[..t.len()];
        let naive: f64 = t
            .iter()
            .zip(y)
            .map(|(&x, &yi)| {
                let p = 1.0 / (1.0 + (-x).exp());
                if yi == 1 { -p.ln() } else { -(1.0 - p).ln() }
            })
            .sum::<f64>()
            / t.len() as f64;
        let logits = Tensor::new(vec![t.len()], t.clone()).unwrap();
        prop_assert!(close(bce_loss(&logits, y).unwrap().loss, naive, 1e-9));
    }

    #[test]
    fn focal_never_exceeds_weighted_bce(t in prop::collection::vec(-20.0f64..20.0, 1..20), y in labels(20), gamma in 0.0f64..5.0) {
        let y = &y[..t.len()];
        let logits = Tensor::new(vec![t.len()], t.clone()).unwrap();
        let f = focal_loss(&logits, y, gamma, 0.5).unwrap().loss;
        let b = bce_loss(&logits, y).unwrap().loss;
        prop_assert!(f <= 0.5 * b + 1e-12);
    }

    #[test]
    fn center_losses_match_loops(z in reps(7, 3), y in labels(7), c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let center = Center::new(c.clone()).unwrap();
        let ones = [1u8; 7];
        let d = dsvdd_loss(&z, &center).unwrap();
        prop_assert!(close(d.loss, common::dsad_oracle(&z, &ones, &c, 1.0, 1e-6), 1e-12));
        let s = dsad_loss(&z, &y, &center, 1.0, 1e-6).unwrap();
        prop_assert!(close(s.loss, common::dsad_oracle(&z, &y, &c, 1.0, 1e-6), 1e-12));
        let s2 = dsad_loss(&z, &y, &center, 2.5, 1e-3).unwrap();
        prop_assert!(close(s2.loss, common::dsad_oracle(&z, &y, &c, 2.5, 1e-3), 1e-12));
    }

    #[test]
    fn scores_follow_method_conventions(z in reps(5, 3), c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let center = Center::new(c.clone()).unwrap();
        for radial in RadialKind::ALL {
            let s = anomaly_score(&Method::Hsc { radial }, None, ScoreInput::Reps(&z)).unwrap();
            for i in 0..5 {
                prop_assert!((s[i] - z.row(i).iter().map(|v| v * v).sum::<f64>()).abs() < 1e-12);
            }
        }
        let s = anomaly_score(&Method::dsad(), Some(&center), ScoreInput::Reps(&z)).unwrap();
        for i in 0..5 {
            let d2: f64 = z.row(i).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!((s[i] - d2).abs() < 1e-12);
        }
        let logits = Tensor::new(vec![3], z.row(0).to_vec()).unwrap();
        let s = anomaly_score(&Method::Bce, None, ScoreInput::Logits(&logits)).unwrap();
        prop_assert_eq!(s, z.row(0).iter().map(|v| -v).collect::<Vec<_>>());
    }

    #[test]
    fn clip_probabilities_form_a_distribution(
        u in prop::collection::vec(-1.0f64..1.0, 4),
        v in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 2..6),
    ) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)));
        let k = v.len();
        let pair = EmbeddingPair::new(unit(u), v.into_iter().map(unit).collect()).unwrap();
        let p = clip_candidate_probabilities(&pair);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mode = if k == 2 { ClipMode::OneVsRest } else { ClipMode::LeaveOneOut { normal_classes: k - 1 } };
        prop_assert_eq!(clip_anomaly_score(&pair, mode).unwrap(), p[k - 1]);
    }
}

#[test]
fn hsc_saturates_instead_of_overflowing() {
    let z = Tensor::new(vec![2, 2], vec![0.0, 0.0, 1e-9, 0.0]).unwrap();
    let out = hsc_loss(&z, &[0, 0], RadialKind::L2Squared).unwrap();
    assert_eq!(out.saturated, 2);
    assert!(out.loss.is_finite());
    assert!(out.grad.data().iter().all(|g| *g == 0.0));
}

#[test]
fn non_binary_labels_are_rejected() {
    let z = Tensor::zeros(vec![2, 2]);
    assert!(hsc_loss(&z, &[1, 2], RadialKind::L2).is_err());
    assert!(bce_loss(&Tensor::zeros(vec![2]), &[1]).is_err());
}
