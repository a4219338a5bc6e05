//! End-to-end acceptance gate. Each criterion prints one PASS/FAIL line; the
//! process exits nonzero if any fails. Pass criterion numbers as arguments
//! (`cargo test --test acceptance -- 2 5`) to run a subset.

use std::f64::consts::FRAC_1_SQRT_2;
use std::time::{Duration, Instant};

use rand::Rng as _;
use softq::alignment::{align, distance_and_gradient, transfer_model, AlignConfig, AlignGradient, AlignmentProblem};
use softq::circuit::{
    circuit_expectation_z, circuit_unitary, parameter_shift_gradient, random_circuit, run_circuit, Circuit, Gate,
    LayerTemplate, StateVector,
};
use softq::encoding::{EncodingSpec, DEFAULT_BASE};
use softq::linalg::{random_unitary, ComplexMatrix, ComplexVector, C64};
use softq::rl::{align_rl_blocks, dqn_train, Agent, AgentKind, DqnConfig, PhnNetwork};
use softq::rng::{derive_seed, seeded};
use softq::softu::{loss_gradients, total_loss, train_soft, PenaltyForm, Regularizer, SoftUnitaryModel, TrainConfig};
use softq::tasks::{
    evaluate_model, make_tophat_dataset, mean_bce, mean_squared_difference, scaling_report, train_vqc_direct, Sample,
    ScalingConfig, TopHat, VqcBaseline, VqcTrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fd_tol(g: f64) -> f64 {
    1e-6f64.max(1e-4 * g.abs())
}

fn enc(n: usize) -> EncodingSpec {
    EncodingSpec::exponential(n, DEFAULT_BASE).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 { 0.5 * (v[m - 1] + v[m]) } else { v[m] }
}

/// Top-hat run with the command-line defaults for the given size.
fn soft_run(n: usize, datapoints: usize, seed: u64) -> (SoftUnitaryModel, Vec<Sample>, softq::softu::TrainHistory, Duration) {
    let data = make_tophat_dataset(datapoints, TopHat::default(), seed).unwrap();
    let init = SoftUnitaryModel::random(n, 4, enc(n), seed).unwrap();
    let config = TrainConfig { epochs: 200, lambda: 1000.0, seed, ..Default::default() };
    let start = Instant::now();
    let (model, history) = train_soft(&init, &data.points, &config).unwrap();
    (model, data.points, history, start.elapsed())
}

fn unitarity_fidelity() -> Outcome {
    let (desk, _, hist, desk_t) = soft_run(3, 200, 0);
    let desk_dev = desk.max_unitarity_deviation();
    let first = hist.rows.first().unwrap().total_loss;
    let last = hist.rows.last().unwrap().total_loss;
    let (paper, _, _, paper_t) = soft_run(5, 1000, 0);
    let paper_dev = paper.max_unitarity_deviation();
    let pass = desk_dev <= 1e-2 && paper_dev <= 5e-3 && last < first && desk_t <= Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "desk udev {desk_dev:.2e} (<= 1e-2) in {:.1}s, total loss {first:.3} -> {last:.3}; n=5 udev {paper_dev:.2e} (<= 5e-3) in {:.1}s",
            desk_t.as_secs_f64(),
            paper_t.as_secs_f64()
        ),
    )
}

fn aligned_agreement() -> Outcome {
    let start = Instant::now();
    let (soft, _, _, _) = soft_run(3, 200, 0);
    let config = AlignConfig { seed: 0, ..AlignConfig::for_qubits(3) };
    let set = align(&AlignmentProblem::new(soft.blocks().to_vec(), 3, config).unwrap()).unwrap();
    let aligned = transfer_model(&soft, &set).unwrap();
    let grid = TopHat::default().grid(200);
    let mse = mean_squared_difference(&evaluate_model(&soft, &grid).unwrap(), &evaluate_model(&aligned, &grid).unwrap());
    let t = start.elapsed();
    outcome(
        mse <= 1e-3 && t <= Duration::from_secs(600),
        format!("mse {mse:.2e} (<= 1e-3), alignment loss {:.2e}, {:.1}s", set.loss(), t.as_secs_f64()),
    )
}

fn loss_ordering() -> Outcome {
    let mut soft = Vec::new();
    let mut vqc = Vec::new();
    for seed in 0..3 {
        let (model, points, _, _) = soft_run(3, 200, seed);
        soft.push(mean_bce(&model, &points).unwrap());
        let baseline = VqcBaseline::random(3, 4, 10, enc(3), seed).unwrap();
        let cfg = VqcTrainConfig { epochs: 200, learning_rate: 0.01, seed, ..Default::default() };
        let (trained, _) = train_vqc_direct(&baseline, &points, &cfg).unwrap();
        vqc.push(mean_bce(&trained, &points).unwrap());
    }
    let (ms, mv) = (median(soft.clone()), median(vqc.clone()));
    outcome(ms < mv, format!("median bce soft {ms:.4} < vqc {mv:.4} (soft {soft:.4?}, vqc {vqc:.4?})"))
}

fn scaling_shape() -> Outcome {
    // The soft trainer's parameter count depends only on qubits and blocks;
    // no gate count enters its interface.
    let m = SoftUnitaryModel::random(3, 4, enc(3), 0).unwrap();
    let by_construction = m.n_real_params() == 4 * 2 * 64;
    let report = scaling_report(&ScalingConfig::default()).unwrap();
    let (gate, fit, mono, align_spread) =
        (report.soft_gate_spread(), report.soft_linear_fit_error(), report.vqc_monotone(), report.align_spread());
    let pass = by_construction && gate == 1.0 && mono && align_spread <= 1.3 && fit <= 0.3;
    outcome(
        pass,
        format!("soft gate spread {gate} (= 1), vqc monotone {mono}, alignment spread {align_spread:.3} (<= 1.3), linear fit error {fit:.3} (<= 0.3)"),
    )
}

fn soft_fd_cases(cases: usize) -> (usize, usize) {
    let mut rng = seeded(51);
    let mut failures = 0;
    for case in 0..cases {
        let n = 1 + case % 3;
        let mut model = SoftUnitaryModel::random(n, 1 + case % 4, enc(n), derive_seed(51, case as u64)).unwrap();
        let jitter: Vec<f64> = model.params_real().iter().map(|v| v + 0.05 * rng.random_range(-1.0..1.0)).collect();
        model.set_params_real(&jitter).unwrap();
        let batch: Vec<Sample> = (0..4)
            .map(|_| Sample { x: rng.random_range(0.0..std::f64::consts::TAU), label: rng.random_range(0..2) })
            .collect();
        let form = if case % 2 == 0 { PenaltyForm::Squared } else { PenaltyForm::Norm };
        let reg = Regularizer { lambda: [0.0, 0.5, 2.0][case % 3], form };
        let (_, grads) = loss_gradients(&model, &batch, reg).unwrap();
        let analytic: Vec<f64> = grads.iter().flat_map(|g| g.as_slice().iter().flat_map(|z| [z.re, z.im])).collect();
        let base = model.params_real();
        let j = rng.random_range(0..base.len());
        let h = 1e-6;
        let at = |p: &[f64]| {
            let mut m = model.clone();
            m.set_params_real(p).unwrap();
            total_loss(&m, &batch, reg).unwrap().total
        };
        let mut p = base.clone();
        p[j] += h;
        let up = at(&p);
        p[j] -= 2.0 * h;
        let fd = (up - at(&p)) / (2.0 * h);
        if (analytic[j] - fd).abs() > fd_tol(analytic[j]) {
            failures += 1;
        }
    }
    (cases, failures)
}

fn phn_fd_cases(cases: usize) -> (usize, usize) {
    let mut rng = seeded(52);
    let mut failures = 0;
    let nets: Vec<PhnNetwork> = (0..4).map(|s| PhnNetwork::random(s).unwrap()).collect();
    for case in 0..cases {
        let net = &nets[case % nets.len()];
        let s: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let up = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let mut grads = vec![0.0; net.n_params()];
        net.backward(&net.trace(&s).unwrap(), &up, &mut grads);
        let j = rng.random_range(0..net.n_params());
        let f = |p: &[f64]| {
            let mut n = net.clone();
            n.set_params(p).unwrap();
            let q = n.forward(&s).unwrap();
            q[0] * up[0] + q[1] * up[1]
        };
        let h = 1e-6;
        let mut p = net.params();
        p[j] += h;
        let fp = f(&p);
        p[j] -= 2.0 * h;
        let fd = (fp - f(&p)) / (2.0 * h);
        if (grads[j] - fd).abs() > fd_tol(grads[j]) {
            failures += 1;
        }
    }
    (cases, failures)
}

fn shift_fd_cases(cases: usize) -> (usize, usize) {
    let mut failures = 0;
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < cases {
        let n = 1 + (seed as usize) % 3;
        let (circuit, params) = random_circuit(n, 12, derive_seed(53, seed)).unwrap();
        seed += 1;
        if params.is_empty() {
            continue;
        }
        let qubit = (seed as usize) % n;
        let grad = parameter_shift_gradient(&circuit, &params, qubit).unwrap();
        let j = (seed as usize * 7) % params.len();
        let h = 1e-6;
        let mut p = params.clone();
        p[j] += h;
        let up = circuit_expectation_z(&circuit, &p, qubit).unwrap();
        p[j] -= 2.0 * h;
        let fd = (up - circuit_expectation_z(&circuit, &p, qubit).unwrap()) / (2.0 * h);
        if (grad[j] - fd).abs() > fd_tol(grad[j]) {
            failures += 1;
        }
        checked += 1;
    }
    (checked, failures)
}

fn adjoint_fd_cases(cases: usize) -> (usize, usize) {
    let mut rng = seeded(54);
    let mut failures = 0;
    for case in 0..cases {
        let n = 1 + case % 3;
        let template = if case % 2 == 0 { LayerTemplate::Rot } else { LayerTemplate::Basic };
        let circuit = template.stack(n, 2).unwrap();
        let target = random_unitary(1 << n, derive_seed(54, case as u64)).unwrap();
        let params: Vec<f64> = (0..circuit.n_params()).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let (_, grad) = distance_and_gradient(&target, &circuit, &params, AlignGradient::Adjoint).unwrap();
        let j = rng.random_range(0..params.len());
        let dist = |p: &[f64]| target.sub(&circuit_unitary(&circuit, p).unwrap()).unwrap().frobenius_norm();
        let h = 1e-6;
        let mut p = params.clone();
        p[j] += h;
        let up = dist(&p);
        p[j] -= 2.0 * h;
        let fd = (up - dist(&p)) / (2.0 * h);
        if (grad[j] - fd).abs() > fd_tol(grad[j]) {
            failures += 1;
        }
    }
    (cases, failures)
}

fn gradient_suites() -> Outcome {
    let start = Instant::now();
    let suites = [
        ("soft entries", soft_fd_cases(150)),
        ("phn params", phn_fd_cases(150)),
        ("parameter shift", shift_fd_cases(150)),
        ("alignment adjoint", adjoint_fd_cases(120)),
    ];
    let t = start.elapsed();
    let pass = suites.iter().all(|(_, (n, f))| *n >= 100 && *f == 0) && t <= Duration::from_secs(120);
    let parts: Vec<String> = suites.iter().map(|(name, (n, f))| format!("{name} {}/{n}", n - f)).collect();
    outcome(pass, format!("{} within max(1e-6, 1e-4|g|), {:.1}s", parts.join(", "), t.as_secs_f64()))
}

fn random_state(n: usize, rng: &mut softq::rng::Rng) -> StateVector {
    let raw: Vec<C64> = (0..1 << n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(n, raw.into_iter().map(|z| z / norm).collect()).unwrap()
}

fn simulator_oracle() -> Outcome {
    let mut rng = seeded(6);
    let mut worst = 0.0f64;
    for k in 0..200u64 {
        let n = 1 + (k as usize) % 4;
        let (circuit, params) = random_circuit(n, 25, derive_seed(6, k)).unwrap();
        let input = random_state(n, &mut rng);
        let fast = run_circuit(&circuit, &params, &input).unwrap();
        let dense = circuit_unitary(&circuit, &params).unwrap().matvec(&ComplexVector::new(input.amplitudes().to_vec()).unwrap()).unwrap();
        let diff = fast.amplitudes().iter().zip(dense.as_slice()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }

    let bell = Circuit::new(2, vec![Gate::h(0), Gate::cnot(0, 1)], 0).unwrap();
    let out = run_circuit(&bell, &[], &StateVector::zero(2).unwrap()).unwrap();
    let r = C64::new(FRAC_1_SQRT_2, 0.0);
    let zero = C64::new(0.0, 0.0);
    let bell_ok = out.amplitudes().iter().zip([r, zero, zero, r]).all(|(a, b)| (a - b).norm() <= 1e-15);

    // Qubit 0 is the most significant bit: |10> -> |11>, |11> -> |10>.
    let cnot = Circuit::new(2, vec![Gate::cnot(0, 1)], 0).unwrap();
    let table_ok = [(0, 0), (1, 1), (2, 3), (3, 2)].iter().all(|&(i, o)| {
        let out = run_circuit(&cnot, &[], &StateVector::basis(2, i).unwrap()).unwrap();
        out.amplitudes() == StateVector::basis(2, o).unwrap().amplitudes()
    });
    outcome(
        worst <= 1e-10 && bell_ok && table_ok,
        format!("max |run - U psi| {worst:.1e} (<= 1e-10) over 200 circuits, bell {bell_ok}, cnot truth table {table_ok}"),
    )
}

fn rl_reproduction() -> Outcome {
    let mut classical = Vec::new();
    let mut hybrid = Vec::new();
    let mut udev = Vec::new();
    let mut align_loss = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in 0..3 {
        let config = DqnConfig { seed, ..Default::default() };
        let start = Instant::now();
        classical.push(dqn_train(AgentKind::Classical, &config).unwrap().final_running_mean());
        slowest = slowest.max(start.elapsed());
        let start = Instant::now();
        let run = dqn_train(AgentKind::Hybrid, &config).unwrap();
        slowest = slowest.max(start.elapsed());
        hybrid.push(run.final_running_mean());
        udev.push(run.agent.unitarity_deviation());
        if let Agent::Hybrid { network } = &run.agent {
            let cfg = AlignConfig { seed, ..AlignConfig::for_qubits(network.quantum.n_qubits()) };
            align_loss.push(align_rl_blocks(network, cfg).unwrap().loss());
        }
    }
    let (mc, mh) = (median(classical.clone()), median(hybrid.clone()));
    let max_udev = udev.iter().copied().fold(0.0, f64::max);
    let max_align = align_loss.iter().copied().fold(0.0, f64::max);
    // The classical median clearing 100 guards against a broken baseline
    // making the ordering trivially true.
    let pass = mh >= mc && mc > 100.0 && max_udev <= 1e-2 && align_loss.len() == 3 && max_align <= 0.2 && slowest <= Duration::from_secs(1800);
    outcome(
        pass,
        format!(
            "median final-50 hybrid {mh:.1} >= classical {mc:.1} (hybrid {hybrid:.1?}, classical {classical:.1?}, classical > 100); \
             hybrid udev max {max_udev:.2e} (<= 1e-2); alignment loss max {max_align:.3} (<= 0.2); slowest run {:.0}s",
            slowest.as_secs_f64()
        ),
    )
}

fn plant_and_recover() -> Outcome {
    let n = 2;
    let planted = LayerTemplate::Basic.stack(n, 3).unwrap();
    let mut distances = Vec::new();
    for seed in 0..3u64 {
        let mut rng = seeded(derive_seed(8, seed));
        let angles: Vec<f64> = (0..planted.n_params()).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let target: ComplexMatrix = circuit_unitary(&planted, &angles).unwrap();
        let cfg = AlignConfig {
            layers_per_target: 3,
            template: LayerTemplate::Basic,
            epochs: 500,
            seed,
            ..AlignConfig::for_qubits(n)
        };
        let set = align(&AlignmentProblem::new(vec![target], n, cfg).unwrap()).unwrap();
        distances.push(set.circuits[0].distance);
    }
    let recovered = distances.iter().filter(|&&d| d <= 1e-2).count();
    outcome(recovered >= 2, format!("{recovered}/3 seeds recovered to distance <= 1e-2 ({})", distances.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "unitarity regularizer fidelity", unitarity_fidelity),
        (2, "soft vs aligned output agreement", aligned_agreement),
        (3, "loss ordering against the gate baseline", loss_ordering),
        (4, "scaling shape", scaling_shape),
        (5, "gradient suites", gradient_suites),
        (6, "simulator oracle equivalence", simulator_oracle),
        (7, "cartpole qualitative reproduction", rl_reproduction),
        (8, "plant and recover compilation", plant_and_recover),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked"));
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {} [{:.1}s]", result.detail, start.elapsed().as_secs_f64());
        failed += usize::from(!result.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
