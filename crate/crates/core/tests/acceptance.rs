//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//!
//! Runs as a plain binary (`harness = false`); exits non-zero if any
//! criterion fails or overruns its time budget.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use fedsim_core::baseline::solve_betas;
use fedsim_core::config::{DatasetSource, Distribution, ExperimentConfig, Heterogeneity};
use fedsim_core::csmaafl::staleness_weight;
use fedsim_core::data::Dataset;
use fedsim_core::engine::{round_ticks, RunOutput};
use fedsim_core::experiment::prepare;
use fedsim_core::metrics::{Algorithm, MetricsRecord};
use fedsim_core::model::{convex_blend, evaluate, init_model, loss_and_gradient, weighted_sum, LearnerSpec};
use fedsim_core::seed;
use fedsim_core::timing::{
    sfl_round, AsyncTimeline, ClientProfile, GrantPolicy, PendingRequest, Ticks, TransferKind, TrunkOrder,
};
use fedsim_core::ModelVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn rng(s: u64) -> ChaCha8Rng {
    seed::rng(s)
}

fn profile(id: usize, compute: Ticks, up: Ticks, down: Ticks) -> ClientProfile {
    ClientProfile {
        client_id: id,
        compute_time: compute,
        upload_time: up,
        download_time: down,
        local_epochs: 1,
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut alphas: Vec<f64> = draws.iter().map(|d| d / total).collect();
    // put the rounding residue on the largest weight so the sum is 1 to an ulp
    let residue = 1.0 - alphas.iter().sum::<f64>();
    let largest = (0..m).max_by(|&a, &b| alphas[a].total_cmp(&alphas[b])).unwrap();
    alphas[largest] += residue;
    alphas
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> ModelVector {
    ModelVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Incremental blending with the solved weights reproduces the one-shot
/// weighted average. Each coordinate's error is scaled by the magnitude of
/// the terms being averaged, `max(|avg|, sum_m alpha_m |w_m|)`.
fn beta_equivalence() -> Verdict {
    let mut rng = rng(2024);
    let mut worst: f64 = 0.0;
    let mut worst_plain: f64 = 0.0;
    for _ in 0..200 {
        let m = rng.random_range(2..=10);
        let alphas = dirichlet(&mut rng, m);
        let mut schedule: Vec<usize> = (0..m).collect();
        schedule.shuffle(&mut rng);
        let locals: Vec<ModelVector> = (0..m).map(|_| random_vector(&mut rng, 50)).collect();
        let start = random_vector(&mut rng, 50);

        let solved = match solve_betas(&alphas, &schedule) {
            Ok(s) => s,
            Err(e) => return Verdict::Fail(format!("solver rejected a valid instance: {e}")),
        };
        let mut global = start;
        for (&c, &beta) in schedule.iter().zip(&solved.betas) {
            global = convex_blend(&global, &locals[c], beta).unwrap();
        }
        let expected = weighted_sum(&locals, &alphas).unwrap();
        for d in 0..50 {
            let got = global.as_slice()[d];
            let want = expected.as_slice()[d];
            let scale: f64 = alphas
                .iter()
                .zip(&locals)
                .map(|(a, w)| a * w.as_slice()[d].abs())
                .sum::<f64>()
                .max(want.abs());
            worst = worst.max((got - want).abs() / scale);
            worst_plain = worst_plain.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        }
    }
    verdict(
        worst <= 1e-10,
        format!("200 instances, max scaled error {worst:.2e} (relative to |avg| only: {worst_plain:.2e})"),
    )
}

fn beta_closed_forms() -> Verdict {
    let mut worst: f64 = 0.0;
    for m in 2..=6 {
        let alphas = vec![1.0 / m as f64; m];
        let schedule: Vec<usize> = (0..m).collect();
        let s = solve_betas(&alphas, &schedule).unwrap();
        for (k, b) in s.betas.iter().enumerate() {
            let k1 = (k + 1) as f64;
            worst = worst.max((b - (k1 - 1.0) / k1).abs());
        }
    }
    let mut rng = rng(99);
    let mut first_nonzero = 0;
    for _ in 0..500 {
        let m = rng.random_range(1..=12);
        let alphas = dirichlet(&mut rng, m);
        let mut schedule: Vec<usize> = (0..m).collect();
        schedule.shuffle(&mut rng);
        if solve_betas(&alphas, &schedule).unwrap().betas[0] != 0.0 {
            first_nonzero += 1;
        }
    }
    verdict(
        worst <= 1e-14 && first_nonzero == 0,
        format!("M=2..6 max |beta_k - (k-1)/k| = {worst:.1e}; first weight nonzero in {first_nonzero}/500 random instances"),
    )
}

fn timing_identities() -> Verdict {
    let mut rng = rng(7);
    let mut failures = Vec::new();
    for case in 0..20 {
        let m: usize = rng.random_range(2..=10);
        let up: Ticks = rng.random_range(1..=5);
        let down: Ticks = rng.random_range(1..=5);
        let tau: Ticks = rng.random_range(1..=20);
        let a: Ticks = rng.random_range(1..=5);

        // synchronous round: one client is a times slower, the rest faster
        let slow = rng.random_range(0..m);
        let profiles: Vec<_> = (0..m)
            .map(|c| profile(c, if c == slow { a * tau } else { rng.random_range(1..=a * tau) }, up, down))
            .collect();
        let got = sfl_round(&profiles, 0, None).unwrap();
        let want = down + a * tau + m as Ticks * up;
        if got != want {
            failures.push(format!("case {case}: round {got} != {want}"));
        }

        // homogeneous trunk with barrier
        let homo: Vec<_> = (0..m).map(|c| profile(c, tau, up, down)).collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let mut tl = AsyncTimeline::new(
            homo.clone(),
            GrantPolicy::Trunk { order: TrunkOrder::Fixed(order), barrier: true },
        )
        .unwrap();
        let mut last = 0;
        for _ in 0..m {
            last = tl.next_upload(Ticks::MAX).unwrap().unwrap().time;
        }
        let trunk_end = last + down;
        let want = m as Ticks * (up + down) + tau;
        if trunk_end != want {
            failures.push(format!("case {case}: trunk {trunk_end} != {want}"));
        }

        // steady-state interval under the slot protocol, communication-bound
        let tau = rng.random_range(1..=(m as Ticks - 1) * (up + down));
        let homo: Vec<_> = (0..m).map(|c| profile(c, tau, up, down)).collect();
        let mut tl = AsyncTimeline::new(homo, GrantPolicy::Slot).unwrap();
        let times: Vec<Ticks> = (0..4 * m).map(|_| tl.next_upload(Ticks::MAX).unwrap().unwrap().time).collect();
        let bad = times[m..].windows(2).find(|w| w[1] - w[0] != up + down);
        if let Some(w) = bad {
            failures.push(format!("case {case}: interval {} != {}", w[1] - w[0], up + down));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "20 configs: round, trunk and steady-state interval exact".into()
        } else {
            failures.join("; ")
        },
    )
}

/// Oracle for the grant rule, written independently of the channel.
fn expected_winner(slot: u64, candidates: &[PendingRequest]) -> usize {
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        let (sc, sb) = (slot - c.last_upload_slot, slot - best.last_upload_slot);
        let better = c.request_time < best.request_time
            || (c.request_time == best.request_time && (sc > sb || (sc == sb && c.client_id < best.client_id)));
        if better {
            best = c;
        }
    }
    best.client_id
}

fn scheduler_properties() -> Verdict {
    let mut rng = rng(31337);
    let mut staleness_ties = 0;
    let mut events_min = usize::MAX;
    for trace_no in 0..100 {
        let m = rng.random_range(3..=12);
        let profiles: Vec<_> = (0..m)
            .map(|c| profile(c, rng.random_range(1..=30), rng.random_range(1..=4), rng.random_range(1..=4)))
            .collect();
        let mut tl = AsyncTimeline::new(profiles, GrantPolicy::Slot).unwrap().with_audit().with_trace();
        while tl.trace().unwrap().len() < 1000 {
            if let Err(e) = tl.next_upload(Ticks::MAX) {
                return Verdict::Fail(format!("trace {trace_no}: {e}"));
            }
        }
        events_min = events_min.min(tl.trace().unwrap().len());

        let uses = tl.channel().uses();
        for w in uses.windows(2) {
            if w[1].start < w[0].end {
                return Verdict::Fail(format!("trace {trace_no}: overlapping transfers {:?} and {:?}", w[0], w[1]));
            }
        }
        // every upload is followed at once by the same client's download
        for w in uses.windows(2) {
            if w[0].kind == TransferKind::Upload
                && (w[1].kind != TransferKind::Download || w[1].client_id != w[0].client_id || w[1].start != w[0].end)
            {
                return Verdict::Fail(format!("trace {trace_no}: upload {:?} not followed by its download", w[0]));
            }
        }
        let mut busy_until = 0;
        for (d, upload) in tl.channel().decisions().iter().zip(uses.iter().filter(|u| u.kind == TransferKind::Upload)) {
            let winner = expected_winner(d.slot, &d.candidates);
            if d.granted != winner {
                return Verdict::Fail(format!("trace {trace_no}: slot {} granted {} instead of {winner}", d.slot, d.granted));
            }
            // work conserving: granted as soon as both channel and a request are ready
            let earliest = d.candidates.iter().map(|c| c.request_time).min().unwrap();
            if d.time != busy_until.max(earliest) {
                return Verdict::Fail(format!("trace {trace_no}: slot {} granted at {} (ready at {})", d.slot, d.time, busy_until.max(earliest)));
            }
            busy_until = upload.end + tl.profiles()[upload.client_id].download_time;
            let first = d.candidates.iter().filter(|c| c.request_time == earliest).collect::<Vec<_>>();
            if first.len() > 1 && first.iter().any(|c| c.last_upload_slot != first[0].last_upload_slot) {
                staleness_ties += 1;
            }
        }
    }
    verdict(
        staleness_ties > 0,
        format!("100 traces (>= {events_min} events each), {staleness_ties} grants decided by staleness, no overlaps"),
    )
}

fn staleness_values() -> Verdict {
    let cases = [
        ((10, 9, 1.0, 0.2), 0.5),
        ((2, 1, 1.0, 0.1), 1.0),
        ((100, 95, 5.0, 0.2), 0.05),
    ];
    let got: Vec<f64> = cases
        .iter()
        .map(|&((j, i, mu, g), _)| staleness_weight(j, i, mu, g).unwrap())
        .collect();
    let ok = cases.iter().zip(&got).all(|((_, want), g)| g == want);
    verdict(ok, format!("weights {got:?}"))
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Dataset {
    let features = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Dataset::new(features, labels, dim, classes).unwrap()
}

fn gradient_checks() -> Verdict {
    let mut rng = rng(5);
    let mut worst: f64 = 0.0;
    for spec in [LearnerSpec::softmax_regression(6, 4), LearnerSpec::mlp(6, vec![8, 5], 4)] {
        for point in 0..10 {
            let data = random_data(&mut rng, 8, 6, 4);
            let batch: Vec<usize> = (0..8).collect();
            let mut model = init_model(&spec, 1000 + point);
            model.as_mut_slice().iter_mut().for_each(|p| *p += rng.random_range(-0.2..0.2));
            let (_, grad) = loss_and_gradient(&model, &data, &batch, &spec).unwrap();
            let h = 1e-5;
            let mut params = model.as_slice().to_vec();
            for k in 0..params.len() {
                let orig = params[k];
                params[k] = orig + h;
                let up = evaluate(&ModelVector::new(params.clone()), &data, &spec).unwrap().loss;
                params[k] = orig - h;
                let down = evaluate(&ModelVector::new(params.clone()), &data, &spec).unwrap().loss;
                params[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.as_slice()[k];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                worst = worst.max(rel);
            }
        }
    }
    verdict(worst <= 1e-4, format!("softmax + mlp, 10 points each, max relative error {worst:.2e}"))
}

fn desk_config(algorithm: Algorithm, seed: u64, gamma: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::synthetic(algorithm);
    c.dataset = DatasetSource::SynthBlobs { classes: 10, dim: 20, per_class: 1200, test_per_class: 100, spread: 0.3 };
    c.clients = 20;
    c.distribution = Distribution::LabelShards { classes_per_client: 2 };
    c.timing.heterogeneity = Heterogeneity::Uniform { min: 1.0, max: 10.0 };
    c.csmaafl.gamma = gamma;
    c.csmaafl.mu_init = 20.0;
    c.seed = seed;
    c.relative_slots = 60;
    c
}

fn accuracy_at(records: &[MetricsRecord], t: f64) -> f64 {
    records
        .iter()
        .take_while(|r| r.relative_time <= t + 1e-9)
        .last()
        .map_or(f64::NAN, |r| r.accuracy)
}

fn final_accuracy(out: &RunOutput) -> f64 {
    out.records.last().map_or(f64::NAN, |r| r.accuracy)
}

fn desk_convergence() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in [0u64, 1, 2] {
        let configs = [
            desk_config(Algorithm::Sfl, seed, 0.2),
            desk_config(Algorithm::Csmaafl, seed, 0.2),
            desk_config(Algorithm::Csmaafl, seed, 0.1),
        ];
        let outputs: Vec<RunOutput> = std::thread::scope(|s| {
            let handles: Vec<_> = configs
                .iter()
                .map(|c| s.spawn(move || prepare(c).and_then(|p| p.run(false))))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect()
        });
        let (sfl, fast, slow) = (&outputs[0], &outputs[1], &outputs[2]);
        let unit = round_ticks(&prepare(&configs[0]).unwrap().settings.profiles);
        let early_aggs = fast.aggregation_log.iter().filter(|a| a.time <= unit).count();

        let (f_sfl, f_fast, f_slow) = (final_accuracy(sfl), final_accuracy(fast), final_accuracy(slow));
        let (e_sfl, e_fast) = (accuracy_at(&sfl.records, 1.0), accuracy_at(&fast.records, 1.0));
        let i = f_fast >= f_sfl - 0.03;
        let ii = e_fast >= e_sfl && early_aggs >= 10;
        let iii = f_slow < f_fast;
        ok &= i && ii && iii;
        let mark = |b: bool| if b { "ok" } else { "FAIL" };
        lines.push(format!(
            "seed {seed}: (i) {} final {f_fast:.3} vs fedavg {f_sfl:.3}; (ii) {} at t=1 {e_fast:.3} vs {e_sfl:.3}, {early_aggs} aggregations; (iii) {} gamma 0.1 final {f_slow:.3}",
            mark(i),
            mark(ii),
            mark(iii)
        ));
    }
    verdict(ok, lines.join("\n      "))
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("FEDSIM_MNIST_DIR").map(PathBuf::from)?;
    let files = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];
    files.iter().all(|f| dir.join(f).is_file()).then_some(dir)
}

fn mnist_comparison() -> Verdict {
    let Some(dir) = mnist_dir() else {
        return Verdict::Skip("set FEDSIM_MNIST_DIR to a directory holding the four MNIST idx files".into());
    };
    let base = |algorithm, gamma| {
        let mut c = ExperimentConfig::synthetic(algorithm);
        c.dataset = DatasetSource::IdxFiles {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        };
        c.clients = 100;
        c.timing.heterogeneity = Heterogeneity::Uniform { min: 1.0, max: 10.0 };
        c.csmaafl.gamma = gamma;
        c
    };
    let configs = [base(Algorithm::Sfl, 0.2), base(Algorithm::Csmaafl, 0.2), base(Algorithm::Csmaafl, 0.4)];
    let finals: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(move || prepare(c).and_then(|p| p.run(false)).map(|o| final_accuracy(&o))))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect()
    });
    let best = finals[1].max(finals[2]);
    verdict(
        best >= finals[0] - 0.03,
        format!("fedavg {:.3}, csmaafl gamma 0.2 {:.3}, gamma 0.4 {:.3}", finals[0], finals[1], finals[2]),
    )
}

fn main() {
    let checks: [(&str, Check, Duration); 8] = [
        ("baseline weights reproduce the weighted average", beta_equivalence, Duration::from_secs(5)),
        ("baseline weight closed forms", beta_closed_forms, Duration::from_secs(1)),
        ("round, trunk and interval timing identities", timing_identities, Duration::from_secs(1)),
        ("slot tie-break and channel exclusivity", scheduler_properties, Duration::from_secs(10)),
        ("staleness weight values", staleness_values, Duration::from_secs(1)),
        ("gradient checks", gradient_checks, Duration::from_secs(5)),
        ("desk-scale convergence", desk_convergence, Duration::from_secs(300)),
        ("MNIST comparison", mnist_comparison, Duration::from_secs(1800)),
    ];
    let mut failed = 0;
    for (name, check, budget) in checks {
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let over = elapsed > budget;
        let (tag, detail) = match v {
            Verdict::Pass(d) if !over => ("PASS", d),
            Verdict::Pass(d) => ("FAIL", format!("{d}; exceeded {budget:?}")),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} {name} [{:.2}s / {}s]\n      {detail}", elapsed.as_secs_f64(), budget.as_secs());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
