use l0cert_core::ablation::EncodingScheme;
use l0cert_core::classifier::{ablated_accuracy, train, TrainConfig};
use l0cert_core::datasets::{generate_digit_corpus, Split};
use l0cert_core::smoothing::{certify, CertificateMode, SmoothingConfig};
use l0cert_core::evaluation::summarize;
use std::time::Instant;

#[test]
fn desk_probe() {
    let t0 = Instant::now();
    let train_ds = generate_digit_corpus(10_000, 42, Split::Train).unwrap();
    let test_ds = generate_digit_corpus(200, 42, Split::Test).unwrap();
    println!("gen: {:?}", t0.elapsed());

    let cfg = TrainConfig {
        epochs: 30, batch_size: 128, lr: 0.01, lr_after_switch: 0.001,
        switch_epoch: 15, momentum: 0.9, weight_decay: 0.0,
        k: 45, seed: 7, hidden: vec![300, 100], encoding: EncodingScheme::Multichannel,
    };
    let t1 = Instant::now();
    let report = train(&train_ds, &cfg).unwrap();
    println!("train: {:?}, final train acc {:.4}, last losses {:?}",
        t1.elapsed(), report.final_train_accuracy, &report.epoch_losses[25..]);

    let t2 = Instant::now();
    let acc = ablated_accuracy(&report.model, &test_ds, 20, 99).unwrap();
    println!("ablated test accuracy (20 draws/img): {:.4} in {:?}", acc, t2.elapsed());

    let scfg = SmoothingConfig {
        d: 784, k: 45, num_classes: 10, alpha: 0.05, n0: 100, n: 1000,
        seed: 11, encoding: EncodingScheme::Multichannel,
        mode: CertificateMode::Corollary1, batch_size: 256,
    };
    let t3 = Instant::now();
    let results: Vec<_> = (0..200).map(|i| {
        certify(&test_ds.images[i], test_ds.labels[i], i as u64, &report.model, &scfg).unwrap()
    }).collect();
    println!("certify 200: {:?}", t3.elapsed());
    let rep = summarize(&results, 12, "probe", t3.elapsed().as_secs_f64()).unwrap();
    println!("{rep}");
}
