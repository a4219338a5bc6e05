//! Library-level flow: dataset, soft training, alignment, transfer, evaluation.

use softq::alignment::{align, transfer_model, AlignConfig, AlignmentProblem};
use softq::encoding::{EncodingSpec, DEFAULT_BASE};
use softq::softu::{train_soft, SoftUnitaryModel, TrainConfig};
use softq::tasks::{evaluate_model, make_tophat_dataset, mean_squared_difference, TopHat};

fn trained(seed: u64) -> SoftUnitaryModel {
    let data = make_tophat_dataset(200, TopHat::default(), seed).unwrap();
    let init = SoftUnitaryModel::random(3, 4, EncodingSpec::exponential(3, DEFAULT_BASE).unwrap(), seed).unwrap();
    train_soft(&init, &data.points, &TrainConfig { epochs: 200, seed, ..Default::default() }).unwrap().0
}

#[test]
fn alignment_loss_strictly_decreases_in_most_epochs() {
    let soft = trained(0);
    let set = align(&AlignmentProblem::new(soft.blocks().to_vec(), 3, AlignConfig::for_qubits(3)).unwrap()).unwrap();
    let losses: Vec<f64> = set.history.iter().map(|r| r.loss).collect();
    let down = losses.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(down as f64 >= 0.9 * (losses.len() - 1) as f64, "{down} of {}", losses.len() - 1);
    assert!(set.loss() < losses[0]);
}

#[test]
fn transferred_model_tracks_soft_model() {
    let soft = trained(1);
    let set = align(&AlignmentProblem::new(soft.blocks().to_vec(), 3, AlignConfig::for_qubits(3)).unwrap()).unwrap();
    let aligned = transfer_model(&soft, &set).unwrap();
    let grid = TopHat::default().grid(200);
    let a = evaluate_model(&soft, &grid).unwrap();
    let b = evaluate_model(&aligned, &grid).unwrap();
    assert_eq!(a, evaluate_model(&soft, &grid).unwrap());
    assert!(mean_squared_difference(&a, &b) <= 1e-3);

    // Exported circuits reproduce the transferred outputs point by point.
    for &x in &grid[..10] {
        let (circuit, params) = aligned.export_circuit(x).unwrap();
        let z = softq::circuit::circuit_expectation_z(&circuit, &params, soft.observable()).unwrap();
        assert!(((z + 1.0) / 2.0 - aligned.forward(x).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn dataset_examples() {
    let shape = TopHat::default();
    let ds = make_tophat_dataset(1000, shape, 7).unwrap();
    assert_eq!(ds.len(), 1000);
    assert_eq!(ds, make_tophat_dataset(1000, shape, 7).unwrap());
    assert!(ds.points.iter().all(|s| s.label == shape.label(s.x)));

    let whole = TopHat { domain: (0.0, 1.0), edges: (0.0, 1.0) };
    assert!(make_tophat_dataset(100, whole, 1).unwrap().points.iter().all(|s| s.label == 1));

    let big = make_tophat_dataset(100_000, shape, 3).unwrap();
    let ones = big.points.iter().filter(|s| s.label == 1).count() as f64 / 1e5;
    assert!((ones - 1.0 / 3.0).abs() <= 0.01, "{ones}");
}
