use std::collections::HashSet;

use proptest::prelude::*;

use quanvbench::ansatz::{self, AnsatzKind, RandomCircuitSpec};
use quanvbench::attacks::{self, AttackConfig, AttackKind, GradientMode, GradientSource};
use quanvbench::data::{self, Dataset, DatasetName, NUM_CLASSES};
use quanvbench::harness::{self, Record, SweepConfig, SweepResult};
use quanvbench::image::ImageTensor;
use quanvbench::nn::{self, Architecture, Tensor};
use quanvbench::qsim::{self, Circuit, Gate};
use quanvbench::quanv::{self, QuanvConfig};

fn image_strategy(h: usize, w: usize) -> impl Strategy<Value = ImageTensor> {
    let pixel = prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0];
    prop::collection::vec(pixel, h * w).prop_map(move |px| ImageTensor::new(h, w, 1, px).unwrap())
}

fn ansatz_strategy() -> impl Strategy<Value = AnsatzKind> {
    prop::sample::select(AnsatzKind::ALL.to_vec())
}

fn gate_strategy(n: usize) -> impl Strategy<Value = Gate> {
    let angle = -7.0f64..7.0;
    let q = 0..n;
    let pair = (0..n, 1..n).prop_map(move |(a, d)| (a, (a + d) % n));
    prop_oneof![
        (q.clone(), angle.clone()).prop_map(|(qubit, theta)| Gate::Rx { qubit, theta }),
        (q.clone(), angle.clone()).prop_map(|(qubit, theta)| Gate::Ry { qubit, theta }),
        (q.clone(), angle.clone()).prop_map(|(qubit, theta)| Gate::Rz { qubit, theta }),
        (q.clone(), angle.clone(), angle.clone(), angle.clone()).prop_map(|(qubit, a, b, c)| Gate::Rot { qubit, a, b, c }),
        q.prop_map(|qubit| Gate::H { qubit }),
        pair.clone().prop_map(|(control, target)| Gate::Cnot { control, target }),
        (pair, angle).prop_map(|((a, b), theta)| Gate::Zz { a, b, theta }),
    ]
}

fn labelled(labels: &[u8]) -> Dataset {
    Dataset {
        name: DatasetName::Mnist,
        images: labels
            .iter()
            .map(|&l| ImageTensor::new(2, 2, 1, vec![f64::from(l) / 10.0; 4]).unwrap())
            .collect(),
        labels: labels.to_vec(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn circuits_preserve_norm(gates in prop::collection::vec(gate_strategy(4), 0..100)) {
        let circuit = Circuit::from_gates(4, gates).unwrap();
        let out = qsim::apply_circuit(&qsim::zero_state(4).unwrap(), &circuit).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-9);
        for q in 0..4 {
            let z = qsim::expect_z(&out, q).unwrap();
            prop_assert!((-1.0..=1.0).contains(&z));
        }
    }

    #[test]
    fn quanv_shape_and_range(img in image_strategy(28, 28), kind in ansatz_strategy(), seed in any::<u64>()) {
        let circuit = ansatz::instantiate(kind, 4, seed, &RandomCircuitSpec::default()).unwrap();
        let out = quanv::quanvolve_image(&img, &QuanvConfig::new(circuit).unwrap()).unwrap();
        prop_assert_eq!(out.dims(), (14, 14, 4));
        prop_assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn quanv_is_patch_local(
        img in image_strategy(8, 8),
        kind in ansatz_strategy(),
        (row, col) in (0usize..8, 0usize..8),
        value in 0.0f64..=1.0,
    ) {
        let cfg = QuanvConfig::new(ansatz::instantiate(kind, 4, 7, &RandomCircuitSpec::default()).unwrap()).unwrap();
        let before = quanv::quanvolve_image(&img, &cfg).unwrap();
        let mut px = img.data().to_vec();
        px[row * 8 + col] = value;
        let after = quanv::quanvolve_image(&ImageTensor::new(8, 8, 1, px).unwrap(), &cfg).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                if (r, c) == (row / 2, col / 2) {
                    continue;
                }
                for ch in 0..4 {
                    prop_assert_eq!(before.get(r, c, ch).to_bits(), after.get(r, c, ch).to_bits());
                }
            }
        }
    }

    #[test]
    fn softmax_outputs_sum_to_one(
        arch in prop::sample::select(Architecture::ALL.to_vec()),
        dataset in prop::sample::select(vec![DatasetName::Mnist, DatasetName::Fmnist]),
        seed in any::<u64>(),
        fill in -1.0f64..1.0,
    ) {
        let model = nn::build_model(arch, dataset, seed).unwrap();
        let shape = arch.input_shape();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|i| fill * ((i % 7) as f64 / 6.0)).collect();
        let probs = model.forward(&Tensor::new(shape.to_vec(), data).unwrap(), false).unwrap();
        prop_assert_eq!(probs.len(), NUM_CLASSES);
        prop_assert!(probs.data().iter().all(|&p| p >= 0.0));
        prop_assert!((probs.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stratified_split_is_balanced_and_disjoint(
        per_class in prop::collection::vec(8usize..20, NUM_CLASSES),
        n_train in 0usize..=50,
        n_test in 0usize..=30,
        seed in any::<u64>(),
    ) {
        let labels: Vec<u8> = per_class.iter().enumerate().flat_map(|(c, &k)| vec![c as u8; k]).collect();
        let ds = labelled(&labels);
        let (train, test) = data::subset_indices(&ds, n_train, n_test, seed).unwrap();
        prop_assert_eq!(train.len(), n_train);
        prop_assert_eq!(test.len(), n_test);
        let train_set: HashSet<_> = train.iter().collect();
        prop_assert_eq!(train_set.len(), n_train);
        prop_assert!(test.iter().all(|i| !train_set.contains(i)));
        for split in [&train, &test] {
            let mut counts = [0usize; NUM_CLASSES];
            for &i in split.iter() {
                counts[usize::from(ds.labels[i])] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "counts {:?}", counts);
        }
        prop_assert_eq!(data::subset_indices(&ds, n_train, n_test, seed).unwrap(), (train, test));
    }

    #[test]
    fn csv_round_trip(points in prop::collection::vec(
        (prop::sample::select(AnsatzKind::ALL.to_vec()), prop::bool::ANY, 0usize..3, 0.0f64..20.0, 0usize..7, 0u32..=30),
        1..40,
    )) {
        let records: Vec<Record> = points
            .into_iter()
            .map(|(kind, quantum, attack, eps, trial, correct)| Record {
                dataset: DatasetName::Fmnist,
                architecture: if quantum { Architecture::QunnHead } else { Architecture::ClassicalFc },
                ansatz: quantum.then_some(kind),
                attack: AttackKind::ALL[attack],
                mode: GradientMode::Surrogate,
                epsilon: eps,
                trial,
                accuracy: f64::from(correct) / 30.0,
                clean_accuracy: 1.0,
                train_accuracy: 1.0,
                wall_time: 0.0,
            })
            .collect();
        let result = SweepResult::new(records);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        harness::emit_csv(&result, &path).unwrap();
        let back = harness::parse_csv(&path).unwrap();
        prop_assert_eq!(back.len(), result.len());
        for (a, b) in back.records.iter().zip(&result.records) {
            prop_assert_eq!(
                (a.dataset, a.architecture, a.ansatz, a.attack, a.mode, a.trial),
                (b.dataset, b.architecture, b.ansatz, b.attack, b.mode, b.trial)
            );
            prop_assert_eq!(a.epsilon.to_bits(), b.epsilon.to_bits());
            prop_assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
        }
        prop_assert_eq!(harness::csv_string(&back).unwrap(), harness::csv_string(&result).unwrap());
    }

    #[test]
    fn config_text_round_trip(
        trials in 1usize..10,
        base_seed in any::<u64>(),
        clamp in prop::bool::ANY,
        end_to_end in prop::bool::ANY,
        eps in prop::collection::btree_set(1u32..2000, 1..8),
        steps in 1usize..30,
        decay in 0.0f64..2.0,
    ) {
        let epsilons: Vec<f64> = std::iter::once(0.0).chain(eps.iter().map(|&e| f64::from(e) / 100.0)).collect();
        let cfg = SweepConfig {
            trials,
            base_seed,
            clamp,
            mode: if end_to_end { GradientMode::EndToEnd } else { GradientMode::Surrogate },
            fgsm_epsilons: epsilons.clone(),
            epsilons,
            pgd_steps: steps,
            mim_decay: decay,
            ..SweepConfig::default()
        };
        let back = SweepConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.fingerprint(), cfg.fingerprint());
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attacks_stay_in_epsilon_ball(
        img in image_strategy(28, 28),
        kind in prop::sample::select(AttackKind::ALL.to_vec()),
        eps in prop_oneof![Just(0.0), 0.0f64..0.5, 0.5f64..15.0],
        clamp in prop::bool::ANY,
        label in 0usize..NUM_CLASSES,
        seed in any::<u64>(),
    ) {
        let model = nn::build_model(Architecture::ClassicalCnn, DatasetName::Mnist, seed).unwrap();
        let source = GradientSource::Surrogate(&model);
        let cfg = AttackConfig {
            steps: 4,
            clamp: clamp.then_some((0.0, 1.0)),
            ..AttackConfig::new(kind, eps)
        };
        let adv = attacks::attack(&source, &img, label, &cfg).unwrap();
        prop_assert!(adv.linf_distance(&img) <= eps + 1e-12);
        if clamp {
            prop_assert!(adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        if eps == 0.0 {
            prop_assert_eq!(adv, img);
        }
    }
}
