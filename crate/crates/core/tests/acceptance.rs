//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so lines print in order.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use fedkbp_core::datamodel::{Case, Dims, LayerSpec, Manifest, ParamVector, RoiLabel, Spacing, Split, VoxelGrid};
use fedkbp_core::dataset::{
    desk_phantoms, generate_phantom, generate_phantom_set, partition, Distribution, PartitionSchedule,
};
use fedkbp_core::federation::{
    decode_message, encode_message, fedavg_aggregate, read_frame, run_fedavg, run_im, run_scenario, ExecMode,
    ExperimentReport, Message, RunOptions, Scenario, ScenarioConfig, SiteUpdate, Transport,
};
use fedkbp_core::metrics::{dose_score_case, dvh_score_case, dvh_value, DvhKind};
use fedkbp_core::model::{DoseNet, ModelConfig, TrainConfig};
use fedkbp_core::report::loss_curves_csv;
use fedkbp_core::rng::SeededRng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(n: usize, name: &str, started: Instant, o: &Outcome, all_ok: &mut bool) {
    *all_ok &= o.pass;
    println!(
        "criterion {n} [{}] {name}: {} ({:.1}s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        started.elapsed().as_secs_f64()
    );
    std::io::stdout().flush().ok();
}

// ---------------------------------------------------------------- 1

fn partition_fidelity() -> Outcome {
    let train: Vec<String> = (0..200).map(|i| format!("train_{i:03}")).collect();
    let val: Vec<String> = (0..40).map(|i| format!("val_{i:03}")).collect();
    let expected = [
        (Distribution::Iid, vec![25; 8], vec![5; 8]),
        (Distribution::NonIid, vec![40, 35, 30, 25, 25, 20, 15, 10], vec![8, 7, 6, 5, 5, 4, 3, 2]),
    ];
    let mut failures = Vec::new();
    for (kind, want_train, want_val) in &expected {
        let schedule = PartitionSchedule::full_scale(*kind);
        for seed in 0..1000u64 {
            let sites = match partition(&train, &val, &schedule, seed) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(format!("{kind} seed {seed}: {e}"));
                    continue;
                }
            };
            let tc: Vec<usize> = sites.iter().map(|s| s.train_ids.len()).collect();
            let vc: Vec<usize> = sites.iter().map(|s| s.val_ids.len()).collect();
            if &tc != want_train || &vc != want_val {
                failures.push(format!("{kind} seed {seed}: counts {tc:?}/{vc:?}"));
            }
            let mut seen = BTreeSet::new();
            let all = sites.iter().flat_map(|s| s.train_ids.iter().chain(&s.val_ids));
            let total = all.clone().count();
            seen.extend(all.cloned());
            let pool: BTreeSet<String> = train.iter().chain(&val).cloned().collect();
            if seen.len() != total || seen != pool {
                failures.push(format!("{kind} seed {seed}: not a disjoint cover"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "full-scale counts, disjoint and complete for both schedules over 1000 seeds".into()
        } else {
            format!("{} failures, first: {}", failures.len(), failures[0])
        },
    )
}

// ---------------------------------------------------------------- 2

fn random_manifest(rng: &mut SeededRng, budget: usize) -> Manifest {
    let n_layers = 1 + rng.below(6) as usize;
    let per_layer = (budget / n_layers).max(1);
    let layers = (0..n_layers)
        .map(|i| {
            let rows = 1 + rng.below(8) as usize;
            let cols = (per_layer / rows).max(1);
            if rng.below(2) == 0 {
                LayerSpec::new(format!("layer{i}.w"), &[rows, cols])
            } else {
                LayerSpec::new(format!("layer{i}.b"), &[rows * cols])
            }
        })
        .collect();
    Manifest::new(layers).unwrap()
}

fn random_params(rng: &mut SeededRng, manifest: &Manifest) -> ParamVector {
    let data = (0..manifest.numel()).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    ParamVector::new(manifest.clone(), data).unwrap()
}

fn aggregation_oracle() -> Outcome {
    let mut rng = SeededRng::new(2024);
    let mut worst = 0.0f64;
    let mut largest = 0;
    for i in 0..100 {
        let budget = if i == 0 { 100_000 } else { 1 + rng.below(100_000) as usize };
        let manifest = random_manifest(&mut rng, budget);
        largest = largest.max(manifest.numel());
        let n_sites = 1 + rng.below(8) as usize;
        let updates: Vec<SiteUpdate> = (0..n_sites)
            .map(|k| SiteUpdate { site_id: k, params: random_params(&mut rng, &manifest), n: 1 + rng.below(60) })
            .collect();
        let got = fedavg_aggregate(&updates).unwrap();
        let want = common::scalar_fedavg(&updates);
        for (g, w) in got.data().iter().zip(&want) {
            worst = worst.max((f64::from(*g) - w).abs() / w.abs().max(1.0));
        }
    }
    let oracle_ok = worst <= 1e-6;

    // one site holding everything: federated and individual runs coincide
    let cases = generate_phantom_set(11, 4, 2, 2, Dims::cube(8).unwrap()).unwrap();
    let mut cfg = ScenarioConfig::new(Scenario::FedAvg, Distribution::Iid, 3, 11);
    cfg.train_cfg = TrainConfig::desk(3);
    cfg.schedule = Some(PartitionSchedule::custom(Distribution::Iid, vec![4], vec![2]).unwrap());
    let opts = RunOptions::default();
    let fed = run_fedavg(&cfg, &cases, &opts).unwrap();
    cfg.scenario = Scenario::Im;
    let im = run_im(&cfg, &cases, &opts).unwrap();
    let bits = |p: &ParamVector| p.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let same_params = bits(&fed.final_params[0]) == bits(&im.final_params[0]);
    let same_losses = fed.rounds.iter().zip(&im.rounds).all(|(a, b)| {
        a.per_site_train_loss[0].to_bits() == b.per_site_train_loss[0].to_bits()
            && a.per_site_val_loss[0].to_bits() == b.per_site_val_loss[0].to_bits()
    });
    let same_scores = fed.global_score == im.site_scores[0];
    outcome(
        oracle_ok && same_params && same_losses && same_scores,
        format!(
            "max scaled deviation {worst:.2e} over 100 manifests (largest {largest} params); \
             single-site FedAvg vs IM identical: params {same_params}, losses {same_losses}, scores {same_scores}"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn gradient_check() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 1..=5u64 {
        let full = generate_phantom(seed, Split::Train, 0, Dims::cube(8).unwrap()).unwrap();
        let case = common::crop_case(&full, 1, 6);
        let net = DoseNet::new(ModelConfig { seed, ..Default::default() }).unwrap();
        let params = net.init_params().to_f64();
        let s = common::fd_check(&net, &params, &case);
        let frac = s.pass_fraction();
        ok &= frac >= 0.99 && s.checked > 0;
        lines.push(format!("seed {seed}: {:.2}% of {} ({} excluded)", 100.0 * frac, s.checked, s.excluded));
    }
    outcome(ok, lines.join("; "))
}

// ---------------------------------------------------------------- 4

fn random_mask(rng: &mut SeededRng, dims: Dims, spacing: Spacing, p: f64) -> VoxelGrid {
    let mut v: Vec<f32> = (0..dims.len()).map(|_| if rng.next_f64() < p { 1.0 } else { 0.0 }).collect();
    let i = rng.below(dims.len() as u64) as usize;
    v[i] = 1.0;
    VoxelGrid::mask(dims, spacing, v).unwrap()
}

fn random_dose(rng: &mut SeededRng, dims: Dims, spacing: Spacing, integer: bool) -> VoxelGrid {
    let v = (0..dims.len())
        .map(|_| {
            let d = rng.uniform(0.0, 80.0);
            (if integer { d.round() } else { d }) as f32
        })
        .collect();
    VoxelGrid::new(dims, spacing, v).unwrap()
}

fn metric_oracles() -> Outcome {
    let mut rng = SeededRng::new(404);
    let dims = Dims::cube(8).unwrap();
    let mut worst = 0.0f64;
    let mut monotone = true;
    let mut criteria = 0usize;
    for c in 0..50 {
        let spacing = Spacing::new(rng.uniform(1.0, 6.0), rng.uniform(1.0, 6.0), rng.uniform(1.0, 6.0)).unwrap();
        let integer = c % 2 == 0;
        let truth = random_dose(&mut rng, dims, spacing, integer);
        let pred = random_dose(&mut rng, dims, spacing, integer);
        let pdm = random_mask(&mut rng, dims, spacing, 0.7);
        let mut rois = BTreeMap::new();
        for label in RoiLabel::all() {
            if rng.next_f64() < 0.8 {
                let p = rng.uniform(0.02, 0.5);
                rois.insert(label, random_mask(&mut rng, dims, spacing, p));
            }
        }
        if rois.is_empty() {
            rois.insert(RoiLabel::all().next().unwrap(), random_mask(&mut rng, dims, spacing, 0.2));
        }

        let dose = dose_score_case(&pred, &truth, &pdm).unwrap();
        worst = worst.max((dose - common::dose_score_oracle(&pred, &truth, &pdm)).abs());
        let dvh = dvh_score_case(&pred, &truth, &rois, spacing).unwrap();
        worst = worst.max((dvh - common::dvh_score_oracle(&pred, &truth, &rois, spacing)).abs());

        for mask in rois.values() {
            for grid in [&pred, &truth] {
                let mut v = BTreeMap::new();
                for kind in [DvhKind::DMean, DvhKind::D0_1cc, DvhKind::D1, DvhKind::D95, DvhKind::D99] {
                    let got = dvh_value(grid, mask, kind, spacing).unwrap();
                    worst = worst.max((got - common::dvh_oracle(grid, mask, kind, spacing)).abs());
                    v.insert(kind, got);
                    criteria += 1;
                }
                let max = grid
                    .values()
                    .iter()
                    .zip(mask.values())
                    .filter(|(_, &m)| m != 0.0)
                    .map(|(&d, _)| f64::from(d))
                    .fold(f64::NEG_INFINITY, f64::max);
                monotone &= v[&DvhKind::D99] <= v[&DvhKind::D95]
                    && v[&DvhKind::D95] <= v[&DvhKind::D1]
                    && v[&DvhKind::D1] <= max
                    && v[&DvhKind::D0_1cc] >= v[&DvhKind::DMean];
            }
        }
    }
    outcome(
        worst <= 1e-9 && monotone,
        format!("max deviation {worst:.2e} over 50 cases ({criteria} criterion values); monotonicity {monotone}"),
    )
}

// ---------------------------------------------------------------- 5

fn random_finite_f32(rng: &mut SeededRng) -> f32 {
    loop {
        let v = f32::from_bits(rng.next_u64() as u32);
        if v.is_finite() {
            return v;
        }
    }
}

fn random_message(rng: &mut SeededRng, i: usize) -> Message {
    let layers = (0..1 + rng.below(4))
        .map(|l| LayerSpec::new(format!("l{l}.weight"), &[1 + rng.below(40) as usize, 1 + rng.below(40) as usize]))
        .collect();
    let manifest = Manifest::new(layers).unwrap();
    let data = (0..manifest.numel()).map(|_| random_finite_f32(rng)).collect();
    let params = ParamVector::new(manifest, data).unwrap();
    let round = rng.next_u64() as u32;
    match i % 4 {
        0 => Message::Join { site_id: rng.next_u64() as u16 },
        1 => Message::RoundBegin { round, params },
        2 => Message::RoundUpdate {
            round,
            site_id: rng.next_u64() as u16,
            params,
            n: rng.next_u64(),
            train_loss: loop {
                let v = f64::from_bits(rng.next_u64());
                if v.is_finite() {
                    break v;
                }
            },
        },
        _ => Message::RoundCommit { round, params },
    }
}

fn protocol_round_trip() -> Outcome {
    let mut rng = SeededRng::new(5);
    let mut exact = 0;
    let mut truncations_rejected = true;
    let mut bad_magic_rejected = true;
    for i in 0..1000 {
        let msg = random_message(&mut rng, i);
        let bytes = encode_message(&msg);
        if let Ok(back) = decode_message(&bytes) {
            if encode_message(&back) == bytes && back == msg {
                exact += 1;
            }
        }
        let cut = 1 + rng.below(bytes.len() as u64 - 1) as usize;
        truncations_rejected &= decode_message(&bytes[..cut]).is_err();
        truncations_rejected &= read_frame(&mut &bytes[..cut]).is_err();
        let mut bad = bytes.clone();
        bad[rng.below(4) as usize] ^= 0x20;
        bad_magic_rejected &= decode_message(&bad).is_err() && read_frame(&mut bad.as_slice()).is_err();
    }
    outcome(
        exact == 1000 && truncations_rejected && bad_magic_rejected,
        format!(
            "{exact}/1000 bit-exact round trips; truncations rejected {truncations_rejected}; bad magic rejected {bad_magic_rejected}"
        ),
    )
}

// ---------------------------------------------------------------- 6 to 8

const SEEDS: [u64; 3] = [1, 2, 3];
const ROUNDS: usize = 30;
const SLACK: f64 = 1.05;

fn desk_run(scenario: Scenario, dist: Distribution, seed: u64, opts: &RunOptions) -> ExperimentReport {
    let cases: Vec<Case> = desk_phantoms(seed, dist, Dims::cube(16).unwrap()).unwrap();
    let mut cfg = ScenarioConfig::new(scenario, dist, ROUNDS, seed);
    cfg.train_cfg = TrainConfig::desk(ROUNDS);
    run_scenario(&cfg, &cases, opts).unwrap()
}

struct TrendRuns {
    pm: ExperimentReport,
    fed_iid: ExperimentReport,
    im_iid: ExperimentReport,
    fed_noniid: ExperimentReport,
}

fn final_val(r: &ExperimentReport) -> f64 {
    r.final_mean_val_loss().unwrap()
}

fn concurrency_equivalence(sequential: &ExperimentReport) -> (Outcome, ExperimentReport) {
    let opts = RunOptions { mode: ExecMode::Concurrent, transport: Transport::Loopback, checkpoint_dir: None };
    let concurrent = desk_run(Scenario::FedAvg, Distribution::Iid, SEEDS[0], &opts);
    let a = loss_curves_csv(sequential);
    let b = loss_curves_csv(&concurrent);
    let o = outcome(
        a == b,
        format!(
            "loss_curves.csv sequential/in-process vs concurrent/loopback: {} ({} bytes, {} rows)",
            if a == b { "byte-identical" } else { "DIFFERENT" },
            a.len(),
            a.lines().count() - 1
        ),
    );
    (o, concurrent)
}

fn trend_ordering(runs: &[TrendRuns]) -> Outcome {
    let mut holds = 0;
    let mut lines = Vec::new();
    for (seed, r) in SEEDS.iter().zip(runs) {
        let (pm, fi, im, fnon) =
            (final_val(&r.pm), final_val(&r.fed_iid), final_val(&r.im_iid), final_val(&r.fed_noniid));
        let ok = pm <= SLACK * fi && fi <= SLACK * im && fi <= SLACK * fnon;
        holds += usize::from(ok);
        lines.push(format!(
            "seed {seed} {}: PM {pm:.3}, FedAvg-IID {fi:.3}, IM-IID {im:.3}, FedAvg-nonIID {fnon:.3}",
            if ok { "ok" } else { "violated" }
        ));
    }
    outcome(holds >= 2, format!("{holds}/3 seeds ordered; {}", lines.join("; ")))
}

fn curve_shape(fed_iid_runs: &[&ExperimentReport]) -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for r in fed_iid_runs {
        let first = r.rounds[0].mean_val_loss;
        let last = r.rounds[ROUNDS - 1].mean_val_loss;
        let drop = 1.0 - last / first;
        ok &= drop >= 0.30;
        lines.push(format!("{first:.3} -> {last:.3} ({:.1}% lower)", 100.0 * drop));
    }
    outcome(ok, format!("FedAvg-IID round 1 -> {ROUNDS}: {}", lines.join("; ")))
}

fn main() -> ExitCode {
    let mut all_ok = true;
    let t = Instant::now();
    report(1, "partition fidelity", t, &partition_fidelity(), &mut all_ok);
    let t = Instant::now();
    report(2, "aggregation oracle equivalence", t, &aggregation_oracle(), &mut all_ok);
    let t = Instant::now();
    report(3, "gradient correctness", t, &gradient_check(), &mut all_ok);
    let t = Instant::now();
    report(4, "metric oracle equivalence", t, &metric_oracles(), &mut all_ok);
    let t = Instant::now();
    report(5, "protocol round-trip", t, &protocol_round_trip(), &mut all_ok);

    let t = Instant::now();
    let seq = RunOptions::default();
    let runs: Vec<TrendRuns> = SEEDS
        .iter()
        .map(|&seed| TrendRuns {
            pm: desk_run(Scenario::Pm, Distribution::Iid, seed, &seq),
            fed_iid: desk_run(Scenario::FedAvg, Distribution::Iid, seed, &seq),
            im_iid: desk_run(Scenario::Im, Distribution::Iid, seed, &seq),
            fed_noniid: desk_run(Scenario::FedAvg, Distribution::NonIid, seed, &seq),
        })
        .collect();
    let trend_elapsed = t.elapsed();

    let t = Instant::now();
    let (c6, concurrent) = concurrency_equivalence(&runs[0].fed_iid);
    report(6, "determinism and concurrency equivalence", t, &c6, &mut all_ok);

    let t = Instant::now() - trend_elapsed;
    report(7, "qualitative trend reproduction", t, &trend_ordering(&runs), &mut all_ok);

    let t = Instant::now();
    let mut fed: Vec<&ExperimentReport> = runs.iter().map(|r| &r.fed_iid).collect();
    fed.push(&concurrent);
    report(8, "loss curve shape", t, &curve_shape(&fed), &mut all_ok);

    if all_ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
