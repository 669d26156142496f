//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test --test acceptance -- 5 6 7` runs a subset by number. The
//! MNIST/FashionMNIST criteria read the IDX files from `$NEUROGROW_DATA` or
//! `<workspace>/data`; without them those criteria are reported as SKIP
//! (or FAIL when `NEUROGROW_REQUIRE_DATA=1`).

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use neurogrow::config::{DatasetKind, ExperimentConfig};
use neurogrow::datasets::{load_bundle, locate_idx, DATA_ENV};
use neurogrow::experiment::{run_growth_experiment, run_inactivity_study, InactivityStudy, RunReport};
use neurogrow::report::{read_csv_without, STAGES_CSV, TIMING_COLUMNS};
use neurogrow_core::data::{BatchRef, Targets};
use neurogrow_core::diagnostics::grad_check;
use neurogrow_core::growth::{
    frobenius_extend, gate_gradients, insert_function_preserving, ras_allocate, sample_probes, svod_allocate,
    ExtenderKind, ProbeSet, SweAdjustment,
};
use neurogrow_core::nn::{output_loss_and_delta, predict, DenseLayer, LossKind, Network, OutputHead};
use neurogrow_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => workspace().join("data"),
    }
}

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&workspace().join("configs").join(name)).expect("bundled config parses")
}

fn missing_data(kind: DatasetKind) -> Option<Verdict> {
    let dir = data_dir();
    let ok = locate_idx(kind, &dir, "train").is_ok() && locate_idx(kind, &dir, "t10k").is_ok();
    if ok {
        return None;
    }
    let msg = format!("{kind:?} IDX files not found under {}", dir.display());
    Some(if std::env::var("NEUROGROW_REQUIRE_DATA").as_deref() == Ok("1") {
        Verdict::Fail(msg)
    } else {
        Verdict::Skip(msg)
    })
}

fn study(name: &str) -> Result<InactivityStudy, String> {
    let cfg = config(name);
    let data = load_bundle(&cfg, &data_dir()).map_err(|e| e.to_string())?;
    run_inactivity_study(&cfg, &data).map_err(|e| e.to_string())
}

fn growth(name: &str) -> Result<RunReport, String> {
    let cfg = config(name);
    let data = load_bundle(&cfg, &data_dir()).map_err(|e| e.to_string())?;
    run_growth_experiment(&cfg, &data).map_err(|e| e.to_string())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pct_by_seed(s: &InactivityStudy, e: ExtenderKind) -> Vec<f64> {
    s.records.iter().filter(|r| r.extender == e).map(|r| r.inactive_new_pct).collect()
}

fn table_one(name: &str, kind: DatasetKind, random_min: f64, frobenius_min: Option<f64>) -> Verdict {
    if let Some(v) = missing_data(kind) {
        return v;
    }
    let s = match study(name) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(e),
    };
    let swe = pct_by_seed(&s, ExtenderKind::Swe);
    let random = pct_by_seed(&s, ExtenderKind::Kaiming);
    let frob = pct_by_seed(&s, ExtenderKind::Frobenius);
    let swe_ok = swe.len() == 5 && swe.iter().all(|&p| p == 0.0);
    let random_ok = mean(&random) >= random_min;
    let frob_ok = frobenius_min.is_none_or(|m| mean(&frob) > m);
    verdict(
        swe_ok && random_ok && frob_ok,
        format!(
            "SWE per seed {swe:?}; random mean {:.1}% (>= {random_min}); frobenius mean {:.1}%",
            mean(&random),
            mean(&frob)
        ),
    )
}

fn final_test_losses(r: &RunReport) -> Vec<f64> {
    r.runs.iter().map(|run| run.stages.last().expect("stages").test.loss).collect()
}

fn c1() -> Verdict {
    table_one("inactivity_mnist.toml", DatasetKind::Mnist, 40.0, Some(40.0))
}

fn c2() -> Verdict {
    table_one("inactivity_fmnist.toml", DatasetKind::Fmnist, 20.0, None)
}

fn c3() -> Verdict {
    if let Some(v) = missing_data(DatasetKind::Mnist) {
        return v;
    }
    let mut losses = Vec::new();
    for name in ["recon_mnist_swe.toml", "recon_mnist_kaiming.toml", "recon_mnist_baseline.toml"] {
        match growth(name) {
            Ok(r) if r.runs.len() >= 3 => losses.push(final_test_losses(&r)),
            Ok(r) => return Verdict::Fail(format!("{name}: only {} seeds", r.runs.len())),
            Err(e) => return Verdict::Fail(e),
        }
    }
    let (swe, kaiming, base) = (mean(&losses[0]), mean(&losses[1]), mean(&losses[2]));
    verdict(
        swe < kaiming && swe < base,
        format!("final test MSE x1e4: SWE {:.1}, Kaiming {:.1}, baseline {:.1}", swe * 1e4, kaiming * 1e4, base * 1e4),
    )
}

fn c4() -> Verdict {
    if let Some(v) = missing_data(DatasetKind::Mnist) {
        return v;
    }
    match growth("classify_mnist_swe.toml") {
        Ok(r) => {
            let acc: Vec<f64> =
                r.runs.iter().map(|run| run.stages.last().unwrap().test.accuracy.unwrap_or(0.0)).collect();
            verdict(mean(&acc) >= 0.97, format!("final test accuracy per seed {acc:?}, mean {:.4}", mean(&acc)))
        }
        Err(e) => Verdict::Fail(e),
    }
}

fn random_targets(rng: &mut ChaCha8Rng, rows: usize, n_out: usize, kind: LossKind) -> Targets {
    match kind {
        LossKind::Mse => Targets::Dense(Matrix::from_fn(rows, n_out, |_, _| rng.random_range(0.0..1.0))),
        LossKind::SoftmaxCrossEntropy => {
            Targets::Labels { labels: (0..rows).map(|_| rng.random_range(0..n_out)).collect(), n_classes: n_out }
        }
    }
}

fn c5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        for (head, kind) in
            [(OutputHead::Identity, LossKind::Mse), (OutputHead::SoftmaxLogits, LossKind::SoftmaxCrossEntropy)]
        {
            let widths: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=6)).collect();
            let (n_in, n_out, rows) = (rng.random_range(2..=5), rng.random_range(2..=4), rng.random_range(2..=8));
            let mut net = Network::mlp(n_in, &widths, n_out, head, &mut rng).unwrap();
            for layer in net.layers_mut() {
                layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
            let x = Matrix::from_fn(rows, n_in, |_, _| rng.random_range(0.0..1.0));
            let y = random_targets(&mut rng, rows, n_out, kind);
            worst = worst.max(grad_check(&net, BatchRef { x: &x, targets: &y }, kind, 1e-6).unwrap().max_rel_error);
        }
    }
    verdict(worst < 1e-5, format!("max relative error {worst:.3e} over 100 checks"))
}

/// Loss with probe `k` wired in physically as a gated neuron plus a
/// cancelling twin, so the network function is unchanged at `z = 0`.
#[allow(clippy::too_many_arguments)]
fn physical_loss(
    net: &Network,
    layer: usize,
    p: &ProbeSet,
    k: usize,
    z: f64,
    x: &Matrix,
    y: &Targets,
    kind: LossKind,
) -> f64 {
    let w = p.incoming.row(k);
    let incoming = Matrix::from_fn(2, w.len(), |r, c| if r == 0 { (1.0 + z) * w[c] } else { w[c] });
    let b = p.biases[k];
    let v = p.outgoing.column(k);
    let outgoing = Matrix::from_fn(v.len(), 2, |r, c| if c == 0 { v[r] } else { -v[r] });
    let mut wired = net.clone();
    wired.insert_neurons(layer, &incoming, &[(1.0 + z) * b, b], &outgoing, 1).unwrap();
    output_loss_and_delta(&predict(&wired, x).unwrap(), y, kind).unwrap().0
}

fn c6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let h = 1e-5;
    let (mut compared, mut worst, mut degenerate_bad) = (0, 0.0f64, 0);
    for trial in 0..150 {
        let n_hidden = rng.random_range(1..=3);
        let widths: Vec<usize> = (0..n_hidden).map(|_| rng.random_range(2..=7)).collect();
        let (n_in, rows) = (rng.random_range(2..=5), rng.random_range(3..=12));
        let (head, kind) = if trial % 2 == 0 {
            (OutputHead::Identity, LossKind::Mse)
        } else {
            (OutputHead::SoftmaxLogits, LossKind::SoftmaxCrossEntropy)
        };
        let n_out = rng.random_range(2..=4);
        let mut net = Network::mlp(n_in, &widths, n_out, head, &mut rng).unwrap();
        for layer in net.layers_mut() {
            layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let x = Matrix::from_fn(rows, n_in, |_, _| rng.random_range(0.0..1.0));
        let y = random_targets(&mut rng, rows, n_out, kind);
        let layer = rng.random_range(0..n_hidden);
        let mut probes = sample_probes(&net, layer, 1, &mut rng).unwrap();
        probes.biases[0] = rng.random_range(-0.2..0.2);
        let virt = gate_gradients(&net, &[(layer, &probes)], BatchRef { x: &x, targets: &y }, kind).unwrap();
        let analytic = virt[0].gradients[0];
        let numeric = (physical_loss(&net, layer, &probes, 0, h, &x, &y, kind)
            - physical_loss(&net, layer, &probes, 0, -h, &x, &y, kind))
            / (2.0 * h);
        if numeric.abs() < 1e-6 {
            degenerate_bad += usize::from((analytic - numeric).abs() >= 1e-9);
            continue;
        }
        worst = worst.max((analytic - numeric).abs() / numeric.abs());
        compared += 1;
    }
    verdict(
        compared >= 100 && worst < 1e-4 && degenerate_bad == 0,
        format!("{compared} non-degenerate triples, worst relative error {worst:.3e}"),
    )
}

fn random_net(rng: &mut ChaCha8Rng, max_hidden: usize) -> Network {
    let widths: Vec<usize> = (0..rng.random_range(1..=max_hidden)).map(|_| rng.random_range(1..=8)).collect();
    let (n_in, n_out) = (rng.random_range(1..=6), rng.random_range(1..=4));
    let mut net = Network::mlp(n_in, &widths, n_out, OutputHead::Identity, rng).unwrap();
    for layer in net.layers_mut() {
        layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    net
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn c7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let net = random_net(&mut rng, 3);
        let x = Matrix::from_fn(9, net.input_dim(), |_, _| rng.random_range(-1.0..1.0));
        let layer = rng.random_range(0..net.n_hidden());
        let m = rng.random_range(1..12);
        let before = predict(&net, &x).unwrap();
        let swe = SweAdjustment::begin(&net, layer, m, 1, &mut rng).unwrap().effective_network().unwrap();
        let pool = insert_function_preserving(&net, layer, m, 1, &mut rng).unwrap();
        worst = worst.max(max_abs_diff(&before, &predict(&swe, &x).unwrap()));
        worst = worst.max(max_abs_diff(&before, &predict(&pool, &x).unwrap()));
    }
    verdict(worst <= 1e-12, format!("max output change {worst:.3e} over 100 cases"))
}

/// Effective layer computed straight from the coupling definitions.
#[allow(clippy::needless_range_loop)]
fn oracle_effective(host: &DenseLayer, wc: &[Matrix], bc: &Matrix) -> (Matrix, Vec<f64>) {
    let (n_new, n_old) = bc.shape();
    let mut w = host.weights.clone();
    let mut b = host.biases.clone();
    for i in 0..n_old {
        for k in 0..host.n_in() {
            let s: f64 = (0..n_new).map(|j| wc[j].get(i, k)).sum();
            w.set(i, k, w.get(i, k) - s);
        }
        b[i] -= (0..n_new).map(|j| bc.get(j, i)).sum::<f64>();
    }
    for j in 0..n_new {
        for k in 0..host.n_in() {
            let s: f64 = (0..n_old).map(|i| wc[j].get(i, k)).sum();
            w.set(n_old + j, k, w.get(n_old + j, k) + s);
        }
        b[n_old + j] += (0..n_old).map(|i| bc.get(j, i)).sum::<f64>();
    }
    (w, b)
}

fn c8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut failures = Vec::new();
    for case in 0..100 {
        let net = random_net(&mut rng, 2);
        let layer = rng.random_range(0..net.n_hidden());
        let m = rng.random_range(1..5);
        let n_old = net.layers()[layer].n_out();
        let mut phase = SweAdjustment::begin(&net, layer, m, 1, &mut rng).unwrap();
        let zero = phase.clone().merge().unwrap();
        let old_intact = (0..n_old).all(|i| {
            zero.layers()[layer].weights.row(i) == net.layers()[layer].weights.row(i)
                && zero.layers()[layer].biases[i].to_bits() == net.layers()[layer].biases[i].to_bits()
        }) && zero.layers().iter().enumerate().all(|(l, after)| {
            let before = &net.layers()[l];
            if l == layer + 1 {
                (0..after.n_out()).all(|r| &after.weights.row(r)[..before.n_in()] == before.weights.row(r))
                    && after.biases == before.biases
            } else if l == layer {
                true
            } else {
                after == before
            }
        });
        for w in phase.couplings.weights.iter_mut() {
            w.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        phase.couplings.biases.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let (ow, ob) = oracle_effective(&phase.base.layers()[layer], &phase.couplings.weights, &phase.couplings.biases);
        let eff = phase.effective_network().unwrap();
        let exact = eff.layers()[layer].weights == ow && eff.layers()[layer].biases == ob;
        let x = Matrix::from_fn(5, net.input_dim(), |_, _| rng.random_range(-1.0..1.0));
        let merged = phase.merge().unwrap();
        let same_forward = predict(&merged, &x).unwrap() == predict(&eff, &x).unwrap();
        if !(old_intact && exact && same_forward) {
            failures.push(case);
        }
    }
    verdict(failures.is_empty(), format!("100 cases, failing cases {failures:?}"))
}

fn c9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut bad = 0;
    let mut single_ok = true;
    for _ in 0..1000 {
        let net = random_net(&mut rng, 4);
        let total = rng.random_range(1..60);
        let x = Matrix::from_fn(6, net.input_dim(), |_, _| rng.random_range(-1.0..1.0));
        let y = Targets::Dense(Matrix::from_fn(6, net.output_dim(), |_, _| rng.random_range(-1.0..1.0)));
        let probes = rng.random_range(1..6);
        let svod =
            svod_allocate(&net, total, probes, BatchRef { x: &x, targets: &y }, LossKind::Mse, 1, &mut rng).unwrap();
        let ras = ras_allocate(total, net.n_hidden(), 1, &mut rng).unwrap();
        bad += usize::from(svod.plan.per_layer_counts.iter().sum::<usize>() != total);
        bad += usize::from(ras.per_layer_counts.iter().sum::<usize>() != total);
        if net.n_hidden() == 1 {
            single_ok &= svod.plan.per_layer_counts == vec![total];
        }
    }
    verdict(bad == 0 && single_ok, format!("{bad} non-conserving plans in 2000; single-layer SVoD exact: {single_ok}"))
}

fn frobenius(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn c10() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let net = random_net(&mut rng, 3);
        let layer = rng.random_range(0..net.n_hidden());
        let m = rng.random_range(1..10);
        let grown = frobenius_extend(&net, layer, m, 1, &mut rng).unwrap();
        for l in [layer, layer + 1] {
            worst = worst.max((frobenius(&grown.layers()[l].weights) - frobenius(&net.layers()[l].weights)).abs());
        }
    }
    verdict(worst <= 1e-9, format!("max norm drift {worst:.3e} over 100 cases"))
}

fn c11() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/blobs_smoke.toml");
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_neurogrow"))
            .args(["grow", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("RUST_LOG", "error")
            .status()
            .unwrap();
        if !status.success() {
            return Verdict::Fail(format!("grow exited with {status}"));
        }
        tables.push(read_csv_without(&out.join(STAGES_CSV), TIMING_COLUMNS).unwrap());
    }
    verdict(tables[0] == tables[1], format!("{} rows compared without {:?}", tables[0].len() - 1, TIMING_COLUMNS))
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: &[Criterion] = &[
    (1, "inactivity after doubling 20->40, MNIST", c1),
    (2, "inactivity after doubling 20->40, FashionMNIST", c2),
    (3, "reconstruction growth ordering, MNIST", c3),
    (4, "classification growth accuracy, MNIST", c4),
    (5, "gradient check on random networks", c5),
    (6, "probe gating gradient vs physical finite differences", c6),
    (7, "function-preserving insertion", c7),
    (8, "coupling merge identity", c8),
    (9, "distributor conservation", c9),
    (10, "Frobenius norm restoration", c10),
    (11, "CLI determinism", c11),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let v = run();
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {id:>2} {name} ({secs:.1}s): {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
