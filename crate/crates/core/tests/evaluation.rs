use ssf::data::synth::{synthetic_dataset, SynthSpec};
use ssf::data::Split;
use ssf::eval::{measure_complexity, run_ablation, AblationConfig, EvalReport};
use ssf::models::{ssf_cnn_param_count, ssf_nn_param_count, Architecture, HeadKind, Network, SemanticHead};
use ssf::nn::linalg::{mac_count, reset_mac_count};
use ssf::FeatureSubset;

fn report(labels: &[usize], preds: Vec<usize>, classes: usize) -> EvalReport {
    let ids = (0..labels.len()).map(|i| i.to_string()).collect();
    EvalReport::from_predictions(Split::Test, classes, ids, labels, preds, 0.0).unwrap()
}

#[test]
fn perfect_predictor_has_diagonal_confusion() {
    let labels = [0, 1, 2, 2, 1, 0];
    let r = report(&labels, labels.to_vec(), 3);
    assert_eq!(r.accuracy, 1.0);
    for (i, row) in r.confusion.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            assert_eq!(v == 0, i != j);
        }
    }
}

#[test]
fn constant_predictor_on_balanced_set() {
    let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let r = report(&labels, vec![2; 40], 4);
    assert_eq!(r.accuracy, 0.25);
    let trace: usize = (0..4).map(|c| r.confusion[c][c]).sum();
    assert_eq!(trace as f64 / r.total as f64, r.accuracy);
    for (c, row) in r.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), labels.iter().filter(|&&l| l == c).count());
    }
}

#[test]
fn accuracy_matches_recount_of_predictions() {
    let data = synthetic_dataset(&SynthSpec::standard(3, 5, 16, 10, 0.2, 1).unwrap()).unwrap();
    let net = Network::new(
        Architecture::Semantic {
            head: SemanticHead::nn(5, FeatureSubset::FULL),
            num_classes: 3,
        },
        4,
    )
    .unwrap();
    let r = ssf::eval::evaluate(&net, &data, Split::Test, 4).unwrap();
    let test = data.split(Split::Test);
    let correct = r.predictions.iter().zip(&test).filter(|(p, e)| **p == e.label).count();
    assert_eq!(r.accuracy, correct as f64 / test.len() as f64);
    assert_eq!(r.ids[0], test[0].id);
    assert_eq!(r, ssf::eval::evaluate(&net, &data, Split::Test, 7).unwrap());
}

#[test]
fn conv_flops_match_mac_counter() {
    for (kind, l) in [(HeadKind::Cnn, 5), (HeadKind::Nn, 7), (HeadKind::PcConv1d, 6)] {
        let subset = if kind == HeadKind::PcConv1d { FeatureSubset::PC } else { FeatureSubset::AP_SD };
        let head = SemanticHead::of_kind(kind, l, subset);
        let net = head.build(&mut rand::rngs::mock::StepRng::new(1, 1)).unwrap();
        let x = ssf::nn::Tensor::zeros(&head.input_shape(1));
        reset_mac_count();
        net.forward(&x).unwrap();
        assert_eq!(2 * mac_count(), net.flops(&head.input_shape(1)).unwrap(), "{kind:?}");
    }
}

#[test]
fn closed_form_parameter_counts() {
    let r = measure_complexity(6, 4, 1, 2, 0).unwrap();
    assert_eq!(r.row("SSFs-CNN").unwrap().params, ssf_cnn_param_count(6, 5) + 1024 * 4 + 4);
    assert_eq!(r.row("SSFs-NN").unwrap().params, ssf_nn_param_count(6, 5, &[512, 1024]) + 1024 * 4 + 4);
    // FC dominated: doubling the last hidden width roughly doubles the head
    let a = ssf_nn_param_count(40, 5, &[512, 1024]) as f64;
    let b = ssf_nn_param_count(40, 5, &[512, 2048]) as f64;
    assert!((b / a - 1.84).abs() < 0.01, "{}", b / a);
}

#[test]
fn ablation_grid_order_and_determinism() {
    let data = synthetic_dataset(&SynthSpec::standard(3, 4, 16, 4, 0.1, 2).unwrap()).unwrap();
    let cfg = AblationConfig::new(1, 3);
    let a = run_ablation(&data, &cfg);
    let labels: Vec<&str> = a.cells.iter().map(|c| c.label.as_str()).collect();
    assert_eq!(
        labels,
        [
            "PC-CNN", "PC-NN", "AP-CNN", "AP-NN", "SD-CNN", "SD-NN", "AP&SD-CNN", "AP&SD-NN", "PC&AP-CNN", "PC&AP-NN",
            "PC&SD-CNN", "PC&SD-NN", "SSFs-CNN", "SSFs-NN"
        ]
    );
    assert!(a.cells.iter().all(|c| c.accuracy.is_some()));
    assert_eq!(a, run_ablation(&data, &cfg));
}

#[test]
fn failing_cell_does_not_abort_grid() {
    let mut data = synthetic_dataset(&SynthSpec::standard(3, 4, 16, 4, 0.1, 2).unwrap()).unwrap();
    data.examples.retain(|e| e.split == Split::Train);
    let a = run_ablation(&data, &AblationConfig::new(1, 3));
    assert_eq!(a.cells.len(), 14);
    assert!(a.cells.iter().all(|c| c.error.is_some()));
    assert!(a.to_text().lines().count() == 15);
}
