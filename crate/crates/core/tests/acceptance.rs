//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test -p ltlab-core --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use ltlab::baselines::{decouple_grid_seed, train_manner, Grid, Manner};
use ltlab::bbn::{bbn_loss, load_model, save_model, train_bbn, AdaptorSchedule, BbnModel, BbnTrainConfig};
use ltlab::data::{load_dataset, save_dataset};
use ltlab::experiment::{lookup, BenchmarkConfig, ResultRow, SeedRun};
use ltlab::metrics::to_jsonl;
use ltlab::nn::{softmax_xent, OptimizerConfig, Parameter};
use ltlab::sampling::{Sampler, SamplerKind};
use ltlab::Architecture;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const QUORUM: usize = 4;
/// Below this mean CE error the benchmark is solved outright and the
/// orderings would hold only through ties.
const MIN_CE_ERROR: f64 = 0.01;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn within(elapsed: Duration, limit: Duration) -> String {
    format!("{:.2}s / {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64())
}

fn count(flags: impl IntoIterator<Item = bool>) -> usize {
    flags.into_iter().filter(|&b| b).count()
}

fn err(rows: &[ResultRow], method: &str) -> f64 {
    lookup(rows, method).unwrap_or_else(|| panic!("missing row {method}"))
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let net = random_network(&mut rng);
        let x = gaussian(&[5, net.in_dim().unwrap()], &mut rng);
        let y = labels(5, net.out_dim().unwrap(), &mut rng);
        worst = worst.max(network_gradcheck(&net, &x, &y));
    }
    for (seed, alpha) in [(1, 0.3), (2, 0.77), (3, 1.0), (4, 0.0)] {
        let m = tiny_bbn(seed);
        let x_c = gaussian(&[6, 4], &mut rng);
        let x_r = gaussian(&[6, 4], &mut rng);
        let y_c = labels(6, 3, &mut rng);
        let y_r = labels(6, 3, &mut rng);
        worst = worst.max(bbn_gradcheck(&m, &x_c, &y_c, &x_r, &y_r, alpha));
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(10);
    outcome(
        "1 gradient oracle",
        worst <= GRAD_TOL && elapsed < limit,
        format!("max rel err {worst:.2e}, {}", within(elapsed, limit)),
    )
}

fn schedule_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(0);
    let forms: [(AdaptorSchedule, fn(f64) -> f64); 5] = [
        (AdaptorSchedule::EqualWeight, |_| 0.5),
        (AdaptorSchedule::ParabolicIncrement, |r| r * r),
        (AdaptorSchedule::LinearDecay, |r| 1.0 - r),
        (AdaptorSchedule::CosineDecay, |r| (r * std::f64::consts::FRAC_PI_2).cos()),
        (AdaptorSchedule::ParabolicDecay, |r| 1.0 - r * r),
    ];
    let mut worst: f64 = 0.0;
    let mut endpoints = true;
    for t_max in [1usize, 7, 100] {
        for (schedule, form) in &forms {
            for t in 0..=t_max {
                let a = schedule.alpha(t, t_max, &mut rng).unwrap();
                worst = worst.max((a - form(t as f64 / t_max as f64)).abs());
            }
        }
        let pd = AdaptorSchedule::ParabolicDecay;
        endpoints &= pd.alpha(0, t_max, &mut rng).unwrap() == 1.0;
        endpoints &= pd.alpha(t_max, t_max, &mut rng).unwrap() == 0.0;
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(1);
    outcome(
        "2 schedule exactness",
        worst <= 1e-12 && endpoints && elapsed < limit,
        format!("max dev {worst:.1e}, endpoints exact {endpoints}, {}", within(elapsed, limit)),
    )
}

fn total_variation(kind: SamplerKind, counts: &[usize], target: &[f64]) -> f64 {
    let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    let mut sampler = Sampler::new(kind, &labels, counts.len(), 99).unwrap();
    let draws = 1_000_000;
    let mut freq = vec![0usize; counts.len()];
    let mut left = draws;
    while left > 0 {
        let b = left.min(10_000);
        for i in sampler.next_batch(b) {
            freq[labels[i]] += 1;
        }
        left -= b;
    }
    0.5 * freq.iter().zip(target).map(|(&f, &p)| (f as f64 / draws as f64 - p).abs()).sum::<f64>()
}

fn sampler_distribution() -> Outcome {
    let start = Instant::now();
    let counts = [100, 50, 10];
    let tv_rev = total_variation(SamplerKind::Reversed, &counts, &[1.0 / 13.0, 2.0 / 13.0, 10.0 / 13.0]);
    let tv_bal = total_variation(SamplerKind::Balanced, &counts, &[1.0 / 3.0; 3]);
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(5);
    outcome(
        "3 sampler distribution",
        tv_rev <= 0.01 && tv_bal <= 0.01 && elapsed < limit,
        format!("TV reversed {tv_rev:.4}, balanced {tv_bal:.4}, {}", within(elapsed, limit)),
    )
}

fn snapshot(params: Vec<&Parameter>) -> Vec<Vec<u64>> {
    params.iter().map(|p| p.value.values().iter().map(|v| v.to_bits()).collect()).collect()
}

fn branch_snapshot(m: &BbnModel, rebalancing: bool) -> Vec<Vec<u64>> {
    if rebalancing {
        let mut ps = m.branch_r.params();
        ps.push(&m.w_r);
        snapshot(ps)
    } else {
        let mut ps = m.branch_c.params();
        ps.push(&m.w_c);
        snapshot(ps)
    }
}

fn tiny_bbn_config(schedule: AdaptorSchedule, epochs: usize) -> BbnTrainConfig {
    BbnTrainConfig {
        epochs,
        batch_size: 16,
        optimizer: OptimizerConfig {
            warmup_epochs: 1,
            milestones: vec![epochs.saturating_sub(1).max(1)],
            ..OptimizerConfig::default()
        },
        schedule,
        rebalancing_sampler: SamplerKind::Reversed,
    }
}

fn tiny_benchmark() -> BenchmarkConfig {
    let mut cfg = BenchmarkConfig::desk_scale();
    cfg.num_classes = 4;
    cfg.n_max = 60;
    cfg.beta = 10.0;
    cfg.dim = 6;
    cfg.test_per_class = 20;
    cfg.arch = Architecture {
        trunk: vec![8],
        branch: vec![6],
    };
    cfg
}

fn reduction_identities() -> Outcome {
    let cfg = tiny_benchmark();
    let (train, test) = cfg.datasets(5).unwrap();
    let mut frozen_ok = true;
    let mut moved = true;
    for (alpha, rebalancing_frozen) in [(1.0, true), (0.0, false)] {
        let mut m = BbnModel::new(&cfg.arch, train.dim(), train.num_classes(), 5).unwrap();
        let before = branch_snapshot(&m, rebalancing_frozen);
        let other = branch_snapshot(&m, !rebalancing_frozen);
        train_bbn(&mut m, &train, &tiny_bbn_config(AdaptorSchedule::Fixed(alpha), 3), 5, Some(&test)).unwrap();
        frozen_ok &= branch_snapshot(&m, rebalancing_frozen) == before;
        moved &= branch_snapshot(&m, !rebalancing_frozen) != other;
    }
    let mut rng = rng(12);
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 0.25, 0.5, 0.9, 1.0] {
        let z = gaussian(&[7, 5], &mut rng);
        let y = labels(7, 5, &mut rng);
        let (a, ga) = bbn_loss(&z, &y, &y, alpha).unwrap();
        let (b, gb) = softmax_xent(&z, &y).unwrap();
        worst = worst.max((a - b).abs());
        for (u, v) in ga.values().iter().zip(gb.values()) {
            worst = worst.max((u - v).abs());
        }
    }
    outcome(
        "4 alpha reductions",
        frozen_ok && moved && worst <= 1e-12,
        format!("idle branch bit-unchanged {frozen_ok}, active branch moved {moved}, loss dev {worst:.1e}"),
    )
}

fn decoupling_grid(cfg: &BenchmarkConfig, runs: &[SeedRun]) -> (Outcome, Outcome) {
    let start = Instant::now();
    let dc = cfg.decouple_config();
    let grids: Vec<Grid> = runs.iter().map(|r| decouple_grid_seed(&r.train, &r.test, &dc, r.seed).unwrap()).collect();
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(600);
    let names = Manner::ALL.map(|m| m.name());

    let mut a_ok = true;
    let mut a_detail = Vec::new();
    for r in 0..3 {
        for c in 1..3 {
            let n = count(grids.iter().map(|g| g[r][c] <= g[r][0]));
            a_ok &= n >= QUORUM;
            a_detail.push(format!("{}:{}<=CE {n}/5", names[r], names[c]));
        }
    }
    let mut b_ok = true;
    let mut b_detail = Vec::new();
    for c in 0..3 {
        for r in 1..3 {
            let n = count(grids.iter().map(|g| g[0][c] <= g[r][c]));
            b_ok &= n >= QUORUM;
            b_detail.push(format!("{}:CE<={} {n}/5", names[c], names[r]));
        }
    }
    let timed = elapsed < limit;
    (
        outcome("5a grid, classifier manner", a_ok && timed, format!("{}; {}", a_detail.join(" "), within(elapsed, limit))),
        outcome("5b grid, representation manner", b_ok && timed, format!("{}; {}", b_detail.join(" "), within(elapsed, limit))),
    )
}

fn main() -> ExitCode {
    let mut outcomes = vec![gradient_oracle(), schedule_exactness(), sampler_distribution(), reduction_identities()];
    for o in &outcomes {
        report(o);
    }

    let cfg = BenchmarkConfig::desk_scale();
    let mut runs: Vec<SeedRun> = SEEDS.iter().map(|&s| SeedRun::new(&cfg, s).unwrap()).collect();

    let start = Instant::now();
    let tables: Vec<Vec<ResultRow>> = runs.iter_mut().map(|r| r.method_table().unwrap()).collect();
    let method_time = start.elapsed();
    let ce_mean = tables.iter().map(|t| err(t, "CE")).sum::<f64>() / SEEDS.len() as f64;
    let solid = ce_mean >= MIN_CE_ERROR;
    let guard = if solid {
        String::new()
    } else {
        format!("; benchmark degenerate, mean CE error {ce_mean:.4}")
    };

    let (five_a, five_b) = decoupling_grid(&cfg, &runs);
    for o in [five_a, five_b] {
        let o = outcome(o.id, o.pass && solid, format!("{}{guard}", o.detail));
        report(&o);
        outcomes.push(o);
    }

    let limit = Duration::from_secs(300);
    let mut detail = Vec::new();
    let mut ok = method_time < limit;
    for base in ["CE", "RW", "RS", "CE-DRW", "CE-DRS"] {
        let n = count(tables.iter().map(|t| err(t, "BBN") <= err(t, base)));
        ok &= n >= QUORUM;
        detail.push(format!("<={base} {n}/5"));
    }
    let means: Vec<String> = ["CE", "RW", "RS", "CE-DRW", "CE-DRS", "BBN"]
        .iter()
        .map(|m| format!("{m} {:.3}", tables.iter().map(|t| err(t, m)).sum::<f64>() / 5.0))
        .collect();
    push(
        &mut outcomes,
        outcome(
            "6 method ordering",
            ok && solid,
            format!("BBN {}; means {}; {}{guard}", detail.join(" "), means.join(", "), within(method_time, limit)),
        ),
    );

    let adaptor: Vec<Vec<ResultRow>> = runs.iter_mut().map(|r| r.adaptor_ablation().unwrap()).collect();
    let label = |s: AdaptorSchedule| s.label();
    let n = count(adaptor.iter().map(|t| err(t, &label(AdaptorSchedule::ParabolicDecay)) <= err(t, &label(AdaptorSchedule::ParabolicIncrement))));
    let mean_of = |schedules: &[AdaptorSchedule]| {
        let total: f64 = adaptor.iter().flat_map(|t| schedules.iter().map(move |&s| err(t, &label(s)))).sum();
        total / (adaptor.len() * schedules.len()) as f64
    };
    let decay = mean_of(&[AdaptorSchedule::LinearDecay, AdaptorSchedule::CosineDecay, AdaptorSchedule::ParabolicDecay]);
    let rest = mean_of(&[AdaptorSchedule::EqualWeight, AdaptorSchedule::ParabolicIncrement]);
    push(
        &mut outcomes,
        outcome(
            "7 adaptor ordering",
            n >= QUORUM && decay <= rest && solid,
            format!("PD<=PI {n}/5; decay mean {decay:.4} vs {rest:.4}{guard}"),
        ),
    );

    let samplers: Vec<Vec<ResultRow>> = runs.iter_mut().map(|r| r.sampler_ablation().unwrap()).collect();
    let rev = SamplerKind::Reversed.name();
    let vs_uni = count(samplers.iter().map(|t| err(t, rev) <= err(t, SamplerKind::Uniform.name())));
    let vs_bal = count(samplers.iter().map(|t| err(t, rev) <= err(t, SamplerKind::Balanced.name())));
    push(
        &mut outcomes,
        outcome(
            "8 sampler ordering",
            vs_uni >= QUORUM && vs_bal >= QUORUM && solid,
            format!("reversed <=uniform {vs_uni}/5 <=balanced {vs_bal}/5{guard}"),
        ),
    );

    let norms: Vec<_> = runs.iter_mut().map(|r| r.norms().unwrap()).collect();
    use ltlab::analysis::NormSource;
    let sigma = |a: &ltlab::experiment::NormAnalysis, s| a.get(s).unwrap().sigma;
    let flatter = count(norms.iter().map(|a| sigma(a, NormSource::BbnAll) < sigma(a, NormSource::CE)));
    let min_rho = norms.iter().map(|a| a.ce_count_spearman).fold(f64::INFINITY, f64::min);
    push(
        &mut outcomes,
        outcome(
            "9 classifier norms",
            flatter >= QUORUM && min_rho > 0.5 && solid,
            format!("sigma BBN-ALL<CE {flatter}/5; min CE Spearman {min_rho:.3}{guard}"),
        ),
    );

    let compact: Vec<Vec<ResultRow>> = runs.iter_mut().map(|r| r.compactness(3).unwrap()).collect();
    let n = count(compact.iter().map(|t| err(t, "CE") < err(t, "RW") && err(t, "CE") < err(t, "RS")));
    push(
        &mut outcomes,
        outcome("10 head compactness", n >= QUORUM && solid, format!("CE tighter than RW and RS {n}/5{guard}")),
    );

    let ensembles: Vec<Vec<ResultRow>> = runs.iter_mut().map(|r| r.ensembles().unwrap()).collect();
    let n = count(
        ensembles
            .iter()
            .map(|t| err(t, "BBN") <= err(t, "Uniform + Balanced") && err(t, "BBN") <= err(t, "Uniform + Reversed")),
    );
    push(&mut outcomes, outcome("11 ensembles", n >= QUORUM && solid, format!("BBN <= both ensembles {n}/5{guard}")));

    push(&mut outcomes, determinism());

    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn report(o: &Outcome) {
    println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
}

fn push(outcomes: &mut Vec<Outcome>, o: Outcome) {
    report(&o);
    outcomes.push(o);
}

fn determinism() -> Outcome {
    let cfg = tiny_benchmark();
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (Vec<u8>, BbnModel) {
        let (train, test) = cfg.datasets(3).unwrap();
        let mut text = String::new();
        for m in Manner::ALL {
            let mut net = ltlab::baselines::build_network(&cfg.arch, train.dim(), train.num_classes(), 3).unwrap();
            let mut train_cfg = cfg.train.clone();
            train_cfg.epochs = 4;
            train_cfg.optimizer.warmup_epochs = 1;
            train_cfg.optimizer.milestones = vec![2, 3];
            text.push_str(&to_jsonl(&train_manner(&mut net, &train, m, &train_cfg, 3, Some(&test)).unwrap()).unwrap());
        }
        let mut model = BbnModel::new(&cfg.arch, train.dim(), train.num_classes(), 3).unwrap();
        let rows = train_bbn(&mut model, &train, &tiny_bbn_config(AdaptorSchedule::BetaDist, 4), 3, Some(&test)).unwrap();
        text.push_str(&to_jsonl(&rows).unwrap());
        let path = dir.path().join(format!("{tag}.jsonl"));
        std::fs::write(&path, text).unwrap();
        (std::fs::read(&path).unwrap(), model)
    };
    let (first, model) = run("a");
    let (second, _) = run("b");
    let metrics_ok = first == second && !first.is_empty();

    let (train, _) = cfg.datasets(3).unwrap();
    let ds_path = dir.path().join("train.bin");
    save_dataset(&train, &ds_path).unwrap();
    let back = load_dataset(&ds_path).unwrap();
    let dataset_ok = back.to_bytes() == train.to_bytes() && back == train;

    let ck_path = dir.path().join("model.bin");
    save_model(&model, &ck_path).unwrap();
    let loaded = load_model(&ck_path).unwrap();
    let checkpoint_ok = loaded.to_bytes() == model.to_bytes()
        && snapshot(loaded.params()) == snapshot(model.params())
        && loaded.logits(train.features()).unwrap() == model.logits(train.features()).unwrap();

    outcome(
        "12 determinism and round trips",
        metrics_ok && dataset_ok && checkpoint_ok,
        format!("metrics identical {metrics_ok}, dataset {dataset_ok}, checkpoint {checkpoint_ok}"),
    )
}
