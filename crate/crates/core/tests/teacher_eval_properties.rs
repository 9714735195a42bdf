use std::sync::Arc;

use linkrec::data::ItemVocab;
use linkrec::dense::DenseMatrix;
use linkrec::error::TeacherError;
use linkrec::eval::{
    count_inference_flops, evaluate, predict_topn, EvalConfig, EvalSessions, HeadTail, InferenceVector, Protocol,
};
use linkrec::model::{decode_model, encode_model, ItemItemModel};
use linkrec::solver::{ModelKind, SolverConfig};
use linkrec::teacher::{decode_teacher, encode_teacher, extract_teacher, softmax_row, TeacherMatrix, TeacherScorer};
use proptest::prelude::*;

fn entropy(row: &[f64]) -> f64 {
    row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

fn square(max_n: usize) -> impl Strategy<Value = DenseMatrix<f64>> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |v| DenseMatrix::from_vec(n, n, v))
    })
}

fn model_of(matrix: DenseMatrix<f64>) -> ItemItemModel<f64> {
    let n = matrix.rows();
    ItemItemModel::new(matrix, Arc::new(ItemVocab::numbered(n)), ModelKind::Link, SolverConfig::default(), 1.0).unwrap()
}

struct Fixed(DenseMatrix<f64>);

impl TeacherScorer<f64> for Fixed {
    fn n_items(&self) -> usize {
        self.0.rows()
    }

    fn score(&self, item: usize) -> Result<Vec<f64>, TeacherError> {
        Ok(self.0.row(item).to_vec())
    }
}

/// Eval sessions over `n` items, some tokens unknown.
fn eval_sessions(n: usize) -> impl Strategy<Value = EvalSessions> {
    prop::collection::vec(
        prop::collection::vec(prop_oneof![9 => (0..n).prop_map(Some), 1 => Just(None)], 2..7),
        1..8,
    )
    .prop_map(|sessions| EvalSessions { sessions })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_ignores_constant_shift(logits in prop::collection::vec(-20.0f64..20.0, 1..10), shift in -50.0f64..50.0, tau in 0.05f64..5.0) {
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let a = softmax_row(&logits, tau);
        let b = softmax_row(&shifted, tau);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn higher_temperature_raises_entropy(logits in prop::collection::vec(-4.0f64..4.0, 2..10), tau in 0.1f64..3.0) {
        let spread = logits.iter().cloned().fold(f64::MIN, f64::max) - logits.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-3);
        let cold = entropy(&softmax_row(&logits, tau));
        let warm = entropy(&softmax_row(&logits, tau * 1.5));
        prop_assert!(warm > cold, "{} <= {}", warm, cold);
    }

    #[test]
    fn teacher_rows_are_distributions(logits in square(6), tau in 0.01f64..2.0) {
        let n = logits.rows();
        let t = extract_teacher(&Fixed(logits), n, tau).unwrap();
        prop_assert!(t.validate(1e-9).is_ok());
    }

    #[test]
    fn teacher_bytes_round_trip(logits in square(6), tau in 0.01f64..2.0) {
        let n = logits.rows();
        let t = extract_teacher(&Fixed(logits), n, tau).unwrap();
        let bytes = encode_teacher(&t);
        let back: TeacherMatrix<f64> = decode_teacher(&bytes, Some(n)).unwrap();
        prop_assert_eq!(encode_teacher(&back), bytes);
        prop_assert_eq!(back.tau.to_bits(), tau.to_bits());
    }

    #[test]
    fn model_bytes_round_trip(m in square(6)) {
        let model = model_of(m);
        let bytes = encode_model(&model);
        let back = decode_model::<f64>(&bytes, model.vocab.clone()).unwrap();
        prop_assert_eq!(encode_model(&back), bytes);
        prop_assert_eq!(back.kind, model.kind);
    }

    #[test]
    fn scores_ignore_entry_order(m in square(8), seed in any::<u64>()) {
        let n = m.rows();
        let model = model_of(m);
        let mut entries: Vec<(usize, f64)> = (0..n).filter(|i| (seed >> (i % 64)) & 1 == 1).map(|i| (i, 1.0 / (i + 1) as f64)).collect();
        let forward = InferenceVector::from_entries(entries.clone()).scores(&model);
        entries.reverse();
        let backward = InferenceVector::from_entries(entries).scores(&model);
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn ranking_ignores_positive_scaling(m in square(8), prefix in prop::collection::vec(0usize..8, 1..5), scale in 0.01f64..100.0) {
        let n = m.rows();
        let prefix: Vec<usize> = prefix.into_iter().map(|i| i % n).collect();
        let x = InferenceVector::from_items(&prefix, 1.0).unwrap();
        // exact powers of two keep every product exact, so ties survive the scaling
        let scale = 2f64.powi(scale.log2().round() as i32);
        let a = predict_topn(&x, &model_of(m.clone()), n, false);
        let b = predict_topn(&x, &model_of(m.scale(scale)), n, false);
        prop_assert_eq!(a.items, b.items);
    }

    #[test]
    fn ranked_lists_are_distinct_and_sorted(m in square(8), prefix in prop::collection::vec(0usize..8, 1..5), top in 0usize..12, exclude in any::<bool>()) {
        let n = m.rows();
        let prefix: Vec<usize> = prefix.into_iter().map(|i| i % n).collect();
        let x = InferenceVector::from_items(&prefix, 1.0).unwrap();
        let ranked = predict_topn(&x, &model_of(m), top, exclude);
        let mut seen = ranked.items.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), ranked.items.len());
        prop_assert!(ranked.items.len() <= top.min(n));
        prop_assert!(ranked.scores.windows(2).all(|w| w[0] >= w[1]));
        if exclude {
            prop_assert!(ranked.items.iter().all(|i| !prefix.contains(i)));
        }
        prop_assert_eq!(count_inference_flops(&x, n), 2 * x.nnz() as u64 * n as u64);
    }

    #[test]
    fn metrics_over_concatenation_are_weighted_means(
        m in square(6),
        a in eval_sessions(6),
        b in eval_sessions(6),
        loo in any::<bool>(),
    ) {
        let n = m.rows();
        let clamp = |s: EvalSessions| EvalSessions {
            sessions: s.sessions.into_iter().map(|v| v.into_iter().map(|i| i.map(|i| i % n)).collect()).collect(),
        };
        let (a, b) = (clamp(a), clamp(b));
        let model = model_of(m);
        let protocol = if loo { Protocol::LeaveOneOut } else { Protocol::Iterative };
        let cfg = EvalConfig { ks: vec![1, 3, 20], ..EvalConfig::default() };
        let counts: Vec<usize> = (0..n).map(|i| (i * 7) % 5).collect();
        let part = HeadTail::from_counts(&counts);
        let (Ok(ra), Ok(rb)) = (evaluate(&model, &a, protocol, &cfg, &part), evaluate(&model, &b, protocol, &cfg, &part)) else {
            return Ok(());
        };
        let rc = evaluate(&model, &a.concat(&b), protocol, &cfg, &part).unwrap();
        let (na, nb) = (ra.overall.predictions as f64, rb.overall.predictions as f64);
        prop_assert_eq!(rc.overall.predictions, ra.overall.predictions + rb.overall.predictions);
        prop_assert_eq!(rc.skipped, ra.skipped + rb.skipped);
        for k in &cfg.ks {
            for (c, x, y) in [
                (&rc.overall.recall, &ra.overall.recall, &rb.overall.recall),
                (&rc.overall.mrr, &ra.overall.mrr, &rb.overall.mrr),
                (&rc.overall.ndcg, &ra.overall.ndcg, &rb.overall.ndcg),
            ] {
                let want = (na * x[k] + nb * y[k]) / (na + nb);
                prop_assert!((c[k] - want).abs() <= 1e-12);
                prop_assert!((0.0..=1.0).contains(&c[k]));
            }
        }
        for r in [&ra, &rb, &rc] {
            prop_assert_eq!(r.head.predictions + r.tail.predictions, r.overall.predictions);
        }
    }
}
