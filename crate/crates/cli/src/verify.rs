//! Property suite behind `fcul verify`.
//!
//! Every property prints one line with its measured value. Properties with
//! a numeric threshold take `--tol` as an override; the rest are exact
//! (counts, orderings, boolean equivalences).

use fcul_core::client::{ClientStore, MessageVariant, Sample, SampleId};
use fcul_core::coordinator::{account_round, run_round_approx, ApproxState, RoundAggregate};
use fcul_core::inverse::feasibility_check;
use fcul_core::ledger::{stats_from_batch, Ledger, SufficientStats};
use fcul_core::linalg::{
    cholesky_spd, rel_frobenius_dev, solve_spd, spectral_norm, symmetric_eig, thin_qr_rfactor, Matrix, Precision,
};
use fcul_core::sim::{
    build_scenario, gen_synthetic, run_scenario, schedule_interleaved, write_metrics_csv, Lane, PartitionSpec,
    RunOptions, Scenario, SchedulePlan, VariantSelection,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};
use crate::VerifyArgs;

const D: Precision = Precision::Double;

pub struct Check {
    pub pass: bool,
    pub detail: String,
}

pub struct Property {
    pub name: &'static str,
    /// Default threshold, when the property has one.
    pub tol: Option<f64>,
    pub run: fn(f64) -> Check,
}

pub const SUITE: &[Property] = &[
    Property {
        name: "kernel-roundtrips",
        tol: Some(1e-12),
        run: kernel_roundtrips,
    },
    Property {
        name: "downdate-lemma",
        tol: None,
        run: downdate_lemma,
    },
    Property {
        name: "retrain-equivalence",
        tol: Some(1e-9),
        run: retrain_equivalence,
    },
    Property {
        name: "order-invariance",
        tol: Some(1e-10),
        run: order_invariance,
    },
    Property {
        name: "second-order-necessity",
        tol: None,
        run: second_order_necessity,
    },
    Property {
        name: "kl-certificate",
        tol: Some(1e-9),
        run: kl_certificate,
    },
    Property {
        name: "perturbation-bound",
        tol: None,
        run: perturbation_bound,
    },
    Property {
        name: "comm-accounting",
        tol: None,
        run: comm_accounting,
    },
    Property {
        name: "determinism",
        tol: None,
        run: determinism,
    },
];

pub fn verify(args: &VerifyArgs) -> CliResult<()> {
    if args.list {
        for p in SUITE {
            println!("{}", p.name);
        }
        return Ok(());
    }
    if let Some(t) = args.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--tol must be positive, got {t}")));
        }
    }
    let selected: Vec<&Property> = match &args.only {
        Some(name) => {
            let p = SUITE
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| CliError::Usage(format!("unknown suite {name:?}; see --list")))?;
            vec![p]
        }
        None => SUITE.iter().collect(),
    };
    let mut failed = 0;
    for p in &selected {
        let tol = args.tol.or(p.tol).unwrap_or(0.0);
        let check = (p.run)(tol);
        failed += usize::from(!check.pass);
        println!("{} {}: {}", if check.pass { "PASS" } else { "FAIL" }, p.name, check.detail);
    }
    if failed > 0 {
        return Err(CliError::VerifyFailed {
            failed,
            total: selected.len(),
        });
    }
    Ok(())
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn ledger_from(f: &Matrix, y: &Matrix, gamma: f64) -> Ledger {
    Ledger::new(f.cols(), y.cols(), gamma, D)
        .and_then(|l| l.apply(&stats_from_batch(f, y, D)?, &SufficientStats::zeros(f.cols(), y.cols())))
        .expect("ledger from a finite batch")
}

fn kernel_roundtrips(tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = [0.0f64; 4];
    for _ in 0..200 {
        let d = rng.random_range(1..10);
        let n = rng.random_range(1..16);
        let f = random(&mut rng, n, d);
        let h = f.gram(D).add_diagonal(rng.random_range(0.1..2.0), D).unwrap();
        let l = cholesky_spd(&h, D).unwrap();
        worst[0] = worst[0].max(rel_frobenius_dev(&l.reconstruct(), &h).unwrap());

        let x = random(&mut rng, d, 3);
        let b = h.matmul(&x, D).unwrap();
        worst[1] = worst[1].max(rel_frobenius_dev(&solve_spd(&l, &b).unwrap(), &x).unwrap());

        let r = thin_qr_rfactor(&f, D);
        worst[2] = worst[2].max(rel_frobenius_dev(&r.gram(D), &f.gram(D)).unwrap_or(0.0));

        let e = symmetric_eig(&h).unwrap();
        worst[3] = worst[3].max(rel_frobenius_dev(&e.reconstruct(), &h).unwrap());
    }
    // Solves lose a factor of cond(H); the others are backward stable.
    let pass = worst[0] <= tol && worst[1] <= 1e3 * tol && worst[2] <= tol && worst[3] <= tol;
    Check {
        pass,
        detail: format!(
            "200 SPD instances: cholesky {:.2e}, qr gram {:.2e}, eig {:.2e} (≤ {tol:.0e}); solve {:.2e} (≤ {:.0e})",
            worst[0],
            worst[2],
            worst[3],
            worst[1],
            1e3 * tol
        ),
    }
}

fn downdate_lemma(_: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut agree, mut boundary, mut feasible) = (0, 0, 0);
    for _ in 0..1000 {
        let d = rng.random_range(1..8);
        let r = rng.random_range(1..5);
        let n0 = rng.random_range(0..12);
        let f0 = random(&mut rng, n0, d);
        let h = f0.gram(D).add_diagonal(rng.random_range(0.1..2.0), D).unwrap();
        let t = cholesky_spd(&h, D).unwrap().inverse();
        let u0 = random(&mut rng, r, d);
        let lam0 = feasibility_check(&t, &u0).unwrap().lambda_max;
        let u = u0.scale((rng.random_range(0.5..1.5) / lam0).sqrt(), D);

        let feas = feasibility_check(&t, &u).unwrap();
        if (feas.lambda_max - 1.0).abs() <= 1e-8 {
            boundary += 1;
            continue;
        }
        let downdated = symmetric_eig(&h.sub(&u.gram(D), D).unwrap()).unwrap().min() > 0.0;
        let cap = Matrix::identity(r).sub(&u.matmul(&t, D).unwrap().matmul_t(&u, D).unwrap(), D).unwrap();
        let capacitance = symmetric_eig(&cap).unwrap().min() > 0.0;
        let spectral = feas.lambda_max < 1.0;
        if downdated == capacitance && capacitance == spectral && spectral == feas.feasible {
            agree += 1;
        }
        feasible += usize::from(feas.feasible);
    }
    Check {
        pass: agree + boundary == 1000,
        detail: format!(
            "1000 instances: {agree} agree ({feasible} feasible), {boundary} within 1e-8 of λ=1, {} disagree",
            1000 - agree - boundary
        ),
    }
}

fn scenario_run(seed: u64, plan: SchedulePlan, p: Precision) -> fcul_core::sim::RunOutput {
    let data = gen_synthetic(seed, 1500, 24, 6, 3.0);
    let s = build_scenario(seed, &data, 20, PartitionSpec::Dirichlet { alpha: 0.3 }, &plan, VariantSelection::Both, p, 1.0)
        .expect("valid scenario");
    let opts = RunOptions {
        hard_ceiling: None,
        ..RunOptions::default()
    };
    run_scenario(&s, &data.set, &opts).expect("run")
}

fn retrain_equivalence(tol: f64) -> Check {
    let mut worst = [0.0f64; 2];
    let mut rounds = 0;
    for plan in [
        SchedulePlan::Chunked { fraction: 0.2, steps: 4 },
        SchedulePlan::Burst { count: 30, addback: true },
    ] {
        let out = scenario_run(202, plan, D);
        for (i, lane) in [Lane::A, Lane::B].into_iter().enumerate() {
            worst[i] = out.lane_records(lane).map(|r| r.rel_dev_vs_oracle).fold(worst[i], f64::max);
        }
        rounds += out.summary.rounds;
    }
    Check {
        pass: worst[0] <= tol && worst[1] <= tol,
        detail: format!("{rounds} rounds, max dev A {:.2e} B {:.2e} (≤ {tol:.0e})", worst[0], worst[1]),
    }
}

fn order_invariance(tol: f64) -> Check {
    let data = gen_synthetic(303, 600, 12, 4, 3.0);
    let deleted: Vec<SampleId> = data.train.iter().copied().step_by(3).collect();
    let mut heads = Vec::new();
    for shuffle in 0..6u64 {
        let clients = 1 + (shuffle as usize * 5) % 13;
        let (_, schedule) = schedule_interleaved(3030 + shuffle, &data.train, &deleted, clients, 5).expect("schedule");
        let s = Scenario {
            seed: 3030 + shuffle,
            d: 12,
            c: 4,
            clients,
            n: data.set.n(),
            partition: PartitionSpec::Groups { groups: clients },
            variant: VariantSelection::Both,
            precision: D,
            gamma: 1.0,
            features: None,
            test_ids: Vec::new(),
            schedule,
        };
        let opts = RunOptions {
            certificates: false,
            ..RunOptions::default()
        };
        heads.extend(run_scenario(&s, &data.set, &opts).expect("run").heads.into_values());
    }
    let mut worst = 0.0f64;
    for i in 0..heads.len() {
        for j in i + 1..heads.len() {
            worst = worst.max(rel_frobenius_dev(&heads[i], &heads[j]).unwrap());
        }
    }
    Check {
        pass: worst <= tol,
        detail: format!("{} final heads over 6 shuffles, worst pairwise {worst:.2e} (≤ {tol:.0e})", heads.len()),
    }
}

fn second_order_necessity(_: f64) -> Check {
    // Same label sums and feature sums, different second moments.
    let y = Matrix::column(&[1.0, 1.0]);
    let wa = ledger_from(&Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]), &y, 1.0).solve_head().unwrap();
    let wb = ledger_from(&Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0]]), &y, 1.0).solve_head().unwrap();
    let dev = rel_frobenius_dev(&wa, &wb).unwrap();
    Check {
        pass: dev >= 0.3,
        detail: format!("equal first moments, heads differ by {dev:.3} relative"),
    }
}

fn kl_certificate(tol: f64) -> Check {
    let out = scenario_run(404, SchedulePlan::Chunked { fraction: 0.2, steps: 4 }, D);
    let kls: Vec<f64> = out.records.iter().filter_map(|r| r.kl).collect();
    let max = kls.iter().copied().fold(0.0, f64::max);
    let min = kls.iter().copied().fold(f64::INFINITY, f64::min);
    Check {
        pass: max <= tol && min >= -1e-12 && out.summary.psd_violations == 0,
        detail: format!(
            "{} lane-rounds: max KL {max:.2e} (≤ {tol:.0e}), min {min:.2e}, PSD violations {}",
            kls.len(),
            out.summary.psd_violations
        ),
    }
}

fn perturbation_bound(_: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (mut valid, mut attempts, mut worst) = (0, 0, 0.0f64);
    let mut pass = true;
    while valid < 200 && attempts < 5000 {
        attempts += 1;
        let d = rng.random_range(2..9);
        let c = rng.random_range(1..4);
        let n0 = rng.random_range(0..20);
        let gamma = rng.random_range(0.5..3.0);
        let ledger = ledger_from(&random(&mut rng, n0, d), &random(&mut rng, n0, c), gamma);
        let m = rng.random_range(1..2 * d);
        let decay: f64 = rng.random_range(0.05..1.0);
        let fa = Matrix::from_fn(m, d, |_, j| rng.random_range(-1.0..1.0) * decay.powi(j as i32));
        let ya = random(&mut rng, m, c);
        let mut agg = RoundAggregate::empty(d, c);
        agg.s_plus = fa.gram(D);
        agg.g_plus = fa.t_matmul(&ya, D).unwrap();
        agg.n_plus = m as u64;
        let out = run_round_approx(&ledger, &ApproxState::new(&ledger, 0), &agg, rng.random_range(1..d)).unwrap();
        let report = out.report.expect("add round reports a bound");
        if !report.assumption_ok {
            continue;
        }
        valid += 1;
        let t_ex = cholesky_spd(&out.ledger.regularized_gram(), D).unwrap().inverse();
        let t_ap = cholesky_spd(&out.state.s_ap().add_diagonal(gamma, D).unwrap(), D).unwrap().inverse();
        let gap = spectral_norm(&t_ex.sub(&t_ap, D).unwrap());
        // Roundoff floor of the measurement when nothing was truncated.
        let floor = 64.0 * f64::EPSILON * spectral_norm(&t_ex);
        if report.t_bound > floor {
            worst = worst.max(gap / report.t_bound);
        }
        pass &= gap <= report.t_bound * (1.0 + 1e-6) + floor;
    }
    Check {
        pass: pass && valid == 200,
        detail: format!("{valid} valid add rounds ({attempts} drawn), max gap/bound {worst:.3}"),
    }
}

fn comm_accounting(_: f64) -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, c, r, clients) in [(4usize, 2usize, 2usize, 1u32), (256, 2, 8, 10)] {
        let mut bytes = [0usize; 2];
        for (slot, variant) in [MessageVariant::FullStats, MessageVariant::QrFactor].into_iter().enumerate() {
            let messages: Vec<_> = (0..clients)
                .map(|k| {
                    let mut store = ClientStore::new(k, d, c);
                    let samples: Vec<Sample> = (0..r as u64)
                        .map(|i| Sample {
                            id: SampleId(i),
                            feature: (0..d).map(|j| ((i as usize * 31 + j * 7 + k as usize) as f64).sin()).collect(),
                            label: (0..c).map(|j| f64::from(u8::from(j == 0))).collect(),
                        })
                        .collect();
                    let ids: Vec<SampleId> = samples.iter().map(|s| s.id).collect();
                    store.ingest(samples).unwrap();
                    store.make_round_message(1, &ids, &[], variant, D).unwrap()
                })
                .collect();
            let expect = match variant {
                MessageVariant::FullStats => d * (d + 1) / 2 + d * c + 1,
                MessageVariant::QrFactor => r * d + d * c + 1,
            };
            let rec = account_round(1, &messages, D);
            pass &= messages.iter().all(|m| m.scalar_count() == expect)
                && rec.total_scalars == expect * clients as usize
                && rec.total_bytes == 8 * rec.total_scalars;
            bytes[slot] = rec.total_bytes;
            parts.push(format!("d={d} {}: {expect}", variant.tag()));
        }
        if d == 256 {
            let ratio = bytes[1] as f64 / bytes[0] as f64;
            pass &= ratio < 0.1;
            parts.push(format!("B/A {ratio:.4}"));
        }
    }
    Check {
        pass,
        detail: format!("scalars per message {}", parts.join(", ")),
    }
}

fn determinism(_: f64) -> Check {
    let data = gen_synthetic(1111, 800, 16, 4, 3.0);
    let s = build_scenario(
        1111,
        &data,
        12,
        PartitionSpec::Dirichlet { alpha: 0.5 },
        &SchedulePlan::Burst { count: 6, addback: true },
        VariantSelection::Both,
        Precision::Single,
        1.0,
    )
    .expect("valid scenario");
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        pool.install(|| {
            let out = run_scenario(&s, &data.set, &RunOptions::default()).expect("run");
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &out.records).expect("in-memory write");
            buf
        })
    };
    let (one, four) = (csv(1), csv(4));
    Check {
        pass: one == four,
        detail: format!("f32 metrics CSV ({} bytes) identical on 1 and 4 threads: {}", one.len(), one == four),
    }
}
