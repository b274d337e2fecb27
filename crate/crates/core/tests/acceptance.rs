//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 7 needs the CIFAR-10 binary distribution and hours of CPU; it
//! runs only when `CIFAR10_DIR` points at a `cifar-10-batches-bin` directory.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::gradcheck::*;
use common::*;
use featmix::harness::*;
use featmix::mix::{mix2, mix_labels, mixk, SplitLayer};
use featmix::net::{argmax_rows, forward, init_model, predict, stem_forward, train_step_mixed, trunk_forward};
use featmix::sampler::{beta_symmetric, dirichlet_symmetric, MixDraw};
use featmix::{MixSpec, Rng, Shape, Tensor};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_correctness() -> Outcome {
    let mut layer = 0.0f64;
    for seed in [1, 2, 3] {
        layer = layer
            .max(conv_fd_error(seed, 1))
            .max(conv_fd_error(seed + 10, 2))
            .max(relu_fd_error(seed))
            .max(pool_fd_error(seed).0)
            .max(linear_fd_error(seed))
            .max(xent_fd_error(seed));
    }
    let mut e2e = 0.0f64;
    let mut coords = 0;
    for (split, arity, seed) in MIX_LAYOUTS {
        let (e, n) = end_to_end_fd(split, arity, seed + 1000, 4);
        e2e = e2e.max(e);
        coords += n;
    }
    check(
        layer < FD_TOL && e2e < FD_TOL && coords >= 6 * 28,
        format!("layers max rel err {layer:.1e}, end-to-end {e2e:.1e} over {coords} coords (tol {FD_TOL:.0e})"),
    )
}

fn random_pair(rng: &mut Rng) -> (Tensor, Tensor) {
    let s = Shape::new(1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(4), 1 + rng.below(4));
    let mut a = Tensor::zeros(s);
    let mut b = Tensor::zeros(s);
    rng.fill_normal(a.data_mut(), 10.0);
    rng.fill_normal(b.data_mut(), 10.0);
    (a, b)
}

fn mixing_algebra() -> Outcome {
    const CASES: usize = 10_000;
    let mut rng = Rng::new(2);
    let mut worst_sym = 0.0f64;
    let mut worst_label = 0.0f64;
    for _ in 0..CASES {
        let (a, b) = random_pair(&mut rng);
        let lam = rng.uniform01();
        if mix2(&a, &b, 1.0).unwrap() != a {
            return Err("mix2 with λ = 1 differs from its first input".into());
        }
        let x = mix2(&a, &b, lam).unwrap();
        let y = mix2(&b, &a, 1.0 - lam).unwrap();
        for ((p, q), (u, v)) in x.data().iter().zip(y.data()).zip(a.data().iter().zip(b.data())) {
            worst_sym = worst_sym.max((p - q).abs() / u.abs().max(v.abs()).max(1.0));
            if !(u.min(*v) <= *p && *p <= u.max(*v)) {
                return Err(format!("mix {p} outside [{u}, {v}]"));
            }
        }
        if mixk(&[&a, &b], &MixDraw::pair(lam).unwrap()).unwrap() != x {
            return Err("two-way mixk differs from mix2".into());
        }
        let k = 2 + rng.below(2);
        let alpha = 0.2 + rng.uniform01();
        let draw = dirichlet_symmetric(&mut rng, alpha, k).unwrap();
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| featmix::data::one_hot(rng.below(10), 10).unwrap())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let mixed = mix_labels(&refs, &draw).unwrap();
        worst_label = worst_label.max((mixed.iter().sum::<f64>() - 1.0).abs());
    }
    check(
        worst_sym <= 1e-15 && worst_label <= 1e-12,
        format!("{CASES} cases; symmetry err {worst_sym:.1e}, label sum err {worst_label:.1e}"),
    )
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

fn sampler_statistics() -> Outcome {
    const DRAWS: usize = 100_000;
    let mut rng = Rng::new(3);
    let uni: Vec<f64> = (0..DRAWS).map(|_| beta_symmetric(&mut rng, 1.0).unwrap()).collect();
    let (m1, v1) = moments(&uni);
    let b07: Vec<f64> = (0..DRAWS).map(|_| beta_symmetric(&mut rng, 0.7).unwrap()).collect();
    let (_, v07) = moments(&b07);
    let want07 = 1.0 / (8.0 * 0.7 + 4.0);
    let mut sum_err = 0.0f64;
    let mut marg_err = 0.0f64;
    for k in [2, 3] {
        let mut sums = vec![0.0; k];
        for _ in 0..DRAWS {
            let d = dirichlet_symmetric(&mut rng, 1.0, k).unwrap();
            sum_err = sum_err.max((d.weights().iter().sum::<f64>() - 1.0).abs());
            sums.iter_mut().zip(d.weights()).for_each(|(s, w)| *s += w);
        }
        for s in sums {
            marg_err = marg_err.max((s / DRAWS as f64 - 1.0 / k as f64).abs());
        }
    }
    let ok = (m1 - 0.5).abs() <= 0.01
        && (v1 - 1.0 / 12.0).abs() <= 0.05 / 12.0
        && (v07 - want07).abs() <= 0.05 * want07
        && sum_err <= 1e-12
        && marg_err <= 0.01;
    check(
        ok,
        format!(
            "Beta(1,1) mean {m1:.4} var {v1:.5}; Beta(0.7,0.7) var {v07:.5} (want {want07:.5}); \
             Dirichlet sum err {sum_err:.1e}, marginal err {marg_err:.4}"
        ),
    )
}

fn equivalence_oracle() -> Outcome {
    const STEPS: usize = 100;
    let mut rng = Rng::new(4);
    let mut split_model = init_model(&mut rng);
    let mut oracle_model = split_model.clone();
    let spec = MixSpec::new(SplitLayer::Input, 2, 1.0).unwrap();
    let mut mix_rng = Rng::new(40);
    let mut oracle_rng = mix_rng.clone();
    for step in 0..STEPS {
        let n = 1 + rng.below(4);
        let (x1, x2) = (random_images(&mut rng, n), random_images(&mut rng, n));
        let (t1, t2) = (random_one_hot(&mut rng, n), random_one_hot(&mut rng, n));
        let a = train_step_mixed(&mut split_model, &[&x1, &x2], &[&t1, &t2], &spec, &mut mix_rng, 0.01, 0.02).unwrap();
        let b = input_mixup_step(&mut oracle_model, &x1, &x2, &t1, &t2, 1.0, &mut oracle_rng, 0.01, 0.02);
        if a.to_bits() != b.to_bits() || split_model != oracle_model {
            return Err(format!("step {step}: split network and classic mixup diverge"));
        }
    }
    Ok(format!("{STEPS} steps bitwise identical (loss and every parameter)"))
}

fn split_fuse_identity() -> Outcome {
    const INPUTS: usize = 1000;
    const CHUNK: usize = 100;
    let mut rng = Rng::new(5);
    let m = init_model(&mut rng);
    for start in (0..INPUTS).step_by(CHUNK) {
        let x = random_images(&mut rng, CHUNK);
        let oracle = monolithic_logits(&m, &x);
        if forward(&m, &x).unwrap().0 != oracle {
            return Err(format!("inputs {start}..: fused logits differ from the layer-by-layer oracle"));
        }
        let fused = predict(&m, &x).unwrap();
        for split in SplitLayer::ALL {
            let (f, _) = stem_forward(&m, &x, split).unwrap();
            let (z, _) = trunk_forward(&m, &f, split).unwrap();
            let bitwise = z.data().iter().zip(oracle.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            if !bitwise || argmax_rows(&z) != fused {
                return Err(format!("inputs {start}..: trunk∘stem differs at {split:?}"));
            }
        }
    }
    Ok(format!("{INPUTS} inputs, splits L=0,1,2: logits bitwise equal, predictions agree"))
}

fn training_smoke() -> Outcome {
    const MAX_EPOCHS: usize = 20;
    let mut lines = Vec::new();
    let mut ok = true;
    for variant in [Variant::Original, Variant::Conv1Mixup, Variant::Conv1Mixup3] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = ConfigOverrides {
            variant: Some(variant),
            alpha: Some(1.0),
            data: Some(DataSource::Synthetic),
            epochs: Some(MAX_EPOCHS),
            out: Some(dir.path().to_path_buf()),
            timing: Some(false),
            ..Default::default()
        }
        .resolve()
        .map_err(|e| e.to_string())?;
        let mut trainer = Trainer::new(cfg).map_err(|e| e.to_string())?;
        let mut acc = 0.0;
        while trainer.epochs_done() < MAX_EPOCHS {
            trainer.run_epoch().map_err(|e| e.to_string())?;
            acc = evaluate(trainer.model(), trainer.train_set()).map_err(|e| e.to_string())?;
            if acc >= 0.95 {
                break;
            }
        }
        ok &= acc >= 0.95;
        lines.push(format!("{variant} {:.1}% @ epoch {}", 100.0 * acc, trainer.epochs_done()));
    }
    check(ok, format!("train accuracy: {}", lines.join(", ")))
}

/// Final test accuracy of one full-length run on the CIFAR-10 subset.
fn cifar_run(dir: &PathBuf, variant: Variant) -> Result<f64, String> {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ConfigOverrides {
        variant: Some(variant),
        alpha: Some(1.0),
        data: Some(DataSource::Cifar10(dir.clone())),
        out: Some(out.path().to_path_buf()),
        ..Default::default()
    }
    .resolve()
    .map_err(|e| e.to_string())?;
    let outcome = train_run(cfg).map_err(|e| e.to_string())?;
    Ok(outcome.metrics.last().map_or(0.0, |r| r.test_acc))
}

fn cifar_reproduction(dir: PathBuf) -> Outcome {
    let base = cifar_run(&dir, Variant::Original)?;
    let mixup = cifar_run(&dir, Variant::Mixup)?;
    let conv1 = cifar_run(&dir, Variant::Conv1Mixup)?;
    let conv1_3 = cifar_run(&dir, Variant::Conv1Mixup3)?;
    let pct = |a: f64| 100.0 * a;
    let a = (0.45..=0.55).contains(&base);
    let b = conv1_3 - base >= 0.02;
    let c = conv1 >= mixup - 0.01;
    check(
        a && b && c,
        format!(
            "original {:.2}%, mixup {:.2}%, conv1-mixup {:.2}%, conv1-mixup3 {:.2}% \
             (a: {a}, b: {b}, c: {c})",
            pct(base),
            pct(mixup),
            pct(conv1),
            pct(conv1_3)
        ),
    )
}

fn feature_map_export() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = Rng::new(8);
    let mut values = vec![0.0; 32 * 32];
    rng.fill_normal(&mut values, 5.0);
    values[3] = -0.0;
    values[4] = f64::from_bits(1); // subnormal
    let path = dir.path().join("map.f64");
    write_raw_map(&path, &values, 32, 32).map_err(|e| e.to_string())?;
    let back = load_raw_map(&path).map_err(|e| e.to_string())?;
    let bitwise = back.data().iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits());

    let crafted: [(&[f64], &[u8]); 3] = [
        (&[0.0, 0.5, 1.0], &[0, 127, 255]),
        (&[2.0, 2.0, 2.0, 2.0], &[0, 0, 0, 0]),
        (&[-1.0, 3.0, 0.0, 1.0], &[0, 255, 63, 127]),
    ];
    let quantized = crafted
        .iter()
        .all(|(v, want)| &pgm_bytes(v, 1, v.len())[format!("P5\n{} 1\n255\n", v.len()).len()..] == *want);
    check(
        bitwise && quantized,
        format!("raw round trip bitwise: {bitwise}; crafted PGM channels match: {quantized}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 7] = [
        ("1 gradient correctness", Some(Duration::from_secs(60)), gradient_correctness),
        ("2 mixing algebra", None, mixing_algebra),
        ("3 sampler statistics", None, sampler_statistics),
        ("4 input-mixup equivalence", None, equivalence_oracle),
        ("5 split/fuse identity", None, split_fuse_identity),
        ("6 training smoke", Some(Duration::from_secs(300)), training_smoke),
        ("8 feature-map export", None, feature_map_export),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(d), Some(b)) if secs > b => Err(format!("{d}; over the {}s budget", b.as_secs())),
            (o, _) => o,
        };
        match outcome {
            Ok(d) => println!("PASS  {name}: {d} [{:.1}s]", secs.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{:.1}s]", secs.as_secs_f64());
            }
        }
    }

    let name = "7 CIFAR-10 reproduction";
    match std::env::var_os("CIFAR10_DIR") {
        None => println!("SKIP  {name}: not run (set CIFAR10_DIR to a cifar-10-batches-bin directory; takes hours)"),
        Some(dir) => {
            let start = Instant::now();
            match cifar_reproduction(PathBuf::from(dir)) {
                Ok(d) => println!("PASS  {name}: {d} [{:.0}s]", start.elapsed().as_secs_f64()),
                Err(d) => {
                    failed += 1;
                    println!("FAIL  {name}: {d} [{:.0}s]", start.elapsed().as_secs_f64());
                }
            }
        }
    }

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
