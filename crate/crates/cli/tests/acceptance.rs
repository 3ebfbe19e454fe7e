//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line and
//! then asserts, so the summary is visible with `--nocapture` even when a
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use dheb::serve::{self, LoadedModel, PredictRequest, PredictResponse, ServeOptions};
use dheb::store;
use dheb_core::baselines::train_2hb;
use dheb_core::bayes::{
    empirical_prior, posterior_update, posterior_update_count, residual_variance,
};
use dheb_core::data::{DateRange, FeatureSchema, Observation};
use dheb_core::evaluation::{
    avg_mse, rolling_backtest, run_benchmark, staleness_experiment, BacktestConfig,
    BenchmarkConfig,
};
use dheb_core::hsl::{hsl_loss, ChildSummary};
use dheb_core::simulation::{generate, SimConfig};
use dheb_core::{
    train_dheb, train_fheb, Dataset, FittedModel, Method, NodeSufficientStats, NormalParams,
    TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, title: &str, pass: bool, detail: &str) {
    println!("criterion {n:>2} {title}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

// ---------------------------------------------------------------- 1

/// Posterior mean and variance by direct numerical integration of
/// prior × likelihood, evaluated from the raw observations.
fn quadrature_posterior(mu: f64, var: f64, xs: &[f64], ys: &[f64], s2: f64) -> (f64, f64) {
    let logp = |b: f64| {
        let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - b * x).powi(2)).sum();
        -(b - mu).powi(2) / (2.0 * var) - sse / (2.0 * s2)
    };
    // Locate the mode on a coarse grid, then read the scale off the
    // curvature there.
    let ols = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    let (lo, hi) = (mu.min(ols) - 1.0, mu.max(ols) + 1.0);
    let coarse = 2000;
    let mut mode = lo;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=coarse {
        let b = lo + (hi - lo) * i as f64 / coarse as f64;
        let v = logp(b);
        if v > best {
            best = v;
            mode = b;
        }
    }
    let h = 1e-3;
    let curv = (logp(mode + h) - 2.0 * logp(mode) + logp(mode - h)) / (h * h);
    let sd = (-1.0 / curv).sqrt();

    // Composite Simpson over mode ± 20 sd.
    let m = 4000;
    let (a, b) = (mode - 20.0 * sd, mode + 20.0 * sd);
    let step = (b - a) / m as f64;
    let peak = logp(mode);
    let (mut z, mut s1, mut pts) = (0.0, 0.0, Vec::with_capacity(m + 1));
    for i in 0..=m {
        let beta = a + step * i as f64;
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let d = w * (logp(beta) - peak).exp();
        z += d;
        s1 += d * beta;
        pts.push((beta, d));
    }
    let mean = s1 / z;
    let var_post = pts.iter().map(|(beta, d)| d * (beta - mean).powi(2)).sum::<f64>() / z;
    (mean, var_post)
}

#[test]
fn criterion_01_posterior_matches_quadrature() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mu = rng.random_range(0.5..3.0);
        let var = rng.random_range(0.05..4.0);
        let s2: f64 = rng.random_range(0.1..5.0);
        let beta: f64 = rng.random_range(0.5..3.0);
        let n = rng.random_range(1..=30);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(1..=20) as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| beta * x + s2.sqrt() * (rng.random::<f64>() - 0.5) * 3.4)
            .collect();
        let stats = NodeSufficientStats::from_pairs(xs.iter().copied().zip(ys.iter().copied()));
        let post = posterior_update(&NormalParams::new(mu, var).unwrap(), &stats, s2).unwrap();
        let (qm, qv) = quadrature_posterior(mu, var, &xs, &ys, s2);
        worst = worst.max(rel_err(post.mean, qm)).max(rel_err(post.variance, qv));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "posterior vs quadrature",
        worst < 1e-6 && secs < 10.0,
        &format!("1000 instances, worst relative error {worst:.2e}, {secs:.2} s"),
    );
}

// ---------------------------------------------------------------- 2

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > 1e-13 * (1.0 + a.abs()) {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    (a + b) / 2.0
}

#[test]
fn criterion_02_shrinkage_loss_is_minimized_by_posterior_means() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_arg, mut violations) = (0.0f64, 0usize);
    for _ in 0..200 {
        let prior = NormalParams::new(rng.random_range(-2.0..3.0), rng.random_range(0.05..4.0)).unwrap();
        let k = rng.random_range(2..=6);
        let children: Vec<ChildSummary> = (0..k)
            .map(|j| {
                let n = rng.random_range(1..=20);
                let b = rng.random_range(-1.0..4.0);
                let pairs: Vec<(f64, f64)> = (0..n)
                    .map(|_| {
                        let x = rng.random_range(1..=20) as f64;
                        (x, b * x + rng.random_range(-3.0..3.0))
                    })
                    .collect();
                ChildSummary {
                    category: format!("c{j}"),
                    stats: NodeSufficientStats::from_pairs(pairs),
                    sigma_eps_sq: rng.random_range(0.1..5.0),
                }
            })
            .collect();
        let loss = |betas: &[f64]| -> f64 {
            children
                .iter()
                .zip(betas)
                .map(|(c, b)| {
                    let ols = c.stats.xty / c.stats.xtx;
                    c.stats.n as f64
                        * (c.stats.xtx / c.sigma_eps_sq * (b - ols).powi(2)
                            + (b - prior.mean).powi(2) / prior.variance)
                })
                .sum()
        };
        let eval = hsl_loss(&prior, &children).unwrap();
        let numeric: Vec<f64> = children
            .iter()
            .map(|c| {
                let ols = c.stats.xty / c.stats.xtx;
                let term = |b: f64| {
                    c.stats.xtx / c.sigma_eps_sq * (b - ols).powi(2)
                        + (b - prior.mean).powi(2) / prior.variance
                };
                golden_min(term, ols.min(prior.mean) - 1.0, ols.max(prior.mean) + 1.0)
            })
            .collect();
        for (num, c) in numeric.iter().zip(&eval.per_child) {
            worst_arg = worst_arg.max((num - c.posterior.mean).abs());
        }
        let at_post: Vec<f64> = eval.per_child.iter().map(|c| c.posterior.mean).collect();
        if rel_err(eval.total, loss(&at_post)) > 1e-12 {
            violations += 1;
        }
        for _ in 0..100 {
            let moved: Vec<f64> = at_post.iter().map(|b| b + rng.random_range(-0.5..0.5)).collect();
            if loss(&moved) < eval.total {
                violations += 1;
            }
        }
    }
    verdict(
        2,
        "shrinkage loss optimality",
        worst_arg < 1e-6 && violations == 0,
        &format!("200 instances, max |argmin - posterior| {worst_arg:.2e}, {violations} violations"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_hierarchy_recovery() {
    let _g = serial();
    let start = Instant::now();
    let mut firsts = Vec::new();
    let mut separated = true;
    for seed in 0..10 {
        let cfg = SimConfig {
            n_obs_per_unit: 30,
            noise_variance: 0.1,
            seed,
            ..SimConfig::default()
        };
        let sim = generate(&cfg).unwrap();
        let mut xtx: HashMap<&str, f64> = HashMap::new();
        for o in sim.dataset.observations() {
            *xtx.entry(o.bid_unit_id.as_str()).or_default() += (o.clicks as f64).powi(2);
        }
        let min_xtx = xtx.values().copied().fold(f64::INFINITY, f64::min);
        separated &= cfg.top_prior.variance >= 10.0 * cfg.noise_variance / min_xtx;
        let model = train_dheb(&sim.dataset, &TrainConfig::default()).unwrap();
        firsts.push(model.root().split_feature.clone().unwrap_or_else(|| "-".into()));
    }
    let hits = firsts.iter().filter(|f| *f == "A").count();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "hierarchy recovery",
        separated && hits >= 8 && secs < 60.0,
        &format!("first split A in {hits}/10 (splits {firsts:?}), separation held: {separated}, {secs:.1} s"),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_sparsity_ordering() {
    let _g = serial();
    let start = Instant::now();
    let report = run_benchmark(&BenchmarkConfig::default()).unwrap();
    let imp = |n: usize, s: f64, m: &str| {
        report
            .cells
            .iter()
            .find(|c| c.n_obs_per_unit == n && c.y_zero_fraction == s)
            .and_then(|c| c.model(m))
            .and_then(|m| m.mean_improvement_vs_wa)
            .unwrap_or(f64::NAN)
    };
    let (f, d, h2, r) = (imp(3, 0.98, "FHEB"), imp(3, 0.98, "DHEB"), imp(3, 0.98, "2HB"), imp(3, 0.98, "RLR"));
    let ordering = f >= d && d > h2.max(r) && h2.max(r) > 0.0;
    let diagonal = [(30, 0.5), (10, 0.9), (3, 0.98)];
    let widening = ["FHEB", "DHEB"].iter().all(|m| {
        let v: Vec<f64> = diagonal.iter().map(|&(n, s)| imp(n, s, m)).collect();
        v.windows(2).all(|w| w[1] >= w[0])
    });
    let diag: Vec<String> = diagonal
        .iter()
        .map(|&(n, s)| format!("({n},{s}) FHEB {:.1} DHEB {:.1}", imp(n, s, "FHEB"), imp(n, s, "DHEB")))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        4,
        "sparsity ordering",
        ordering && widening && secs < 900.0,
        &format!(
            "n=3,s=0.98 mean improvement %: FHEB {f:.2} DHEB {d:.2} 2HB {h2:.2} RLR {r:.2}; diagonal {}; {secs:.0} s",
            diag.join(", ")
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_two_level_reduction_is_exact() {
    let _g = serial();
    let sim = generate(&SimConfig {
        seed: 5,
        ..SimConfig::default()
    })
    .unwrap();
    let ds = &sim.dataset;
    let cfg = TrainConfig::default();
    let model = train_fheb::<&str>(ds, &[], &cfg).unwrap();
    assert_eq!(train_2hb(ds, &cfg).unwrap(), model);

    let pairs: Vec<(f64, f64)> = ds.observations().iter().map(|o| (o.clicks as f64, o.revenue)).collect();
    let prior = empirical_prior(pairs.iter().copied(), cfg.variance_floor).unwrap();
    let root = model.root();
    let mut by_unit: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for o in ds.observations() {
        by_unit.entry(&o.bid_unit_id).or_default().push((o.clicks as f64, o.revenue));
    }
    let mut mismatches = 0;
    let mut leaves = 0;
    for leaf in model.bid_unit_leaves() {
        leaves += 1;
        let stats = NodeSufficientStats::from_pairs(by_unit[leaf.bid_unit_id.as_deref().unwrap()].iter().copied());
        let sig = residual_variance(&stats, cfg.variance_floor).unwrap_or(root.sigma_eps_sq);
        let expect = posterior_update(&prior, &stats, sig).unwrap();
        let same = leaf.posterior.mean.to_bits() == expect.mean.to_bits()
            && leaf.posterior.variance.to_bits() == expect.variance.to_bits()
            && leaf.prior.mean.to_bits() == prior.mean.to_bits()
            && leaf.prior.variance.to_bits() == prior.variance.to_bits();
        if !same {
            mismatches += 1;
        }
    }
    verdict(
        5,
        "two-level reduction",
        leaves == 100 && mismatches == 0 && model.structural_depth() == 0,
        &format!("{leaves} unit leaves, {mismatches} bitwise mismatches"),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_homogeneous_data_stops_at_root() {
    let _g = serial();
    let schema = FeatureSchema::new(&["A", "B"]).unwrap();
    let start = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
    let mut obs = Vec::new();
    for u in 0..25u64 {
        for d in 0..12u64 {
            let clicks = 1 + (u * 7 + d * 3) % 19;
            obs.push(Observation {
                date: start + chrono::Duration::days(d as i64),
                bid_unit_id: format!("u{u:02}"),
                features: vec![format!("a{}", u % 5), format!("b{}", u % 3)],
                clicks,
                revenue: 2.0 * clicks as f64,
            });
        }
    }
    let ds = Dataset::new(schema, obs).unwrap();
    let model = train_dheb(&ds, &TrainConfig::default()).unwrap();
    let only_units = model.nodes().iter().skip(1).all(|n| n.is_bid_unit_leaf && n.depth == 1);
    let mut worst: f64 = 0.0;
    for o in ds.observations() {
        worst = worst.max((model.predict_row(&o.bid_unit_id, &o.features).rpc - 2.0).abs());
    }
    worst = worst.max((model.predict_row("unseen", &["a0".into(), "b0".into()]).rpc - 2.0).abs());
    verdict(
        6,
        "homogeneous data",
        model.root().split_feature.is_none() && only_units && worst <= 1e-12,
        &format!(
            "{} nodes, structural depth {}, max |rpc - 2| {worst:.1e}",
            model.nodes().len(),
            model.structural_depth()
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_avg_mse_matches_naive_loop() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let days = rng.random_range(1..=30);
        let mut preds = Vec::new();
        let mut actuals = Vec::new();
        for d in 0..days {
            // keep at least one non-empty day
            let n = if d == 0 { rng.random_range(1..=40) } else { rng.random_range(0..=40) };
            preds.push((0..n).map(|_| rng.random_range(0.0..5.0)).collect::<Vec<f64>>());
            actuals.push(
                (0..n)
                    .map(|_| (rng.random_range(1..=20) as f64, rng.random_range(0.0..60.0)))
                    .collect::<Vec<(f64, f64)>>(),
            );
        }
        let mut total = 0.0;
        let mut used = 0.0;
        for t in 0..days {
            if preds[t].is_empty() {
                continue;
            }
            let mut s = 0.0;
            for i in 0..preds[t].len() {
                let e = preds[t][i] * actuals[t][i].0 - actuals[t][i].1;
                s += e * e;
            }
            total += s / preds[t].len() as f64;
            used += 1.0;
        }
        let naive = total / used;
        worst = worst.max(rel_err(avg_mse(&preds, &actuals).unwrap().value, naive));
    }
    verdict(7, "avg_mse oracle", worst <= 1e-12, &format!("100 tables, worst relative error {worst:.1e}"));
}

// ---------------------------------------------------------------- 8

fn write_query_csv(path: &Path, queries: &[PredictRequest], names: &[String]) {
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["bid_unit_id".to_string(), "date".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).unwrap();
    for q in queries {
        let mut row = vec![q.bid_unit_id.clone(), q.date.clone().unwrap_or_default()];
        row.extend(names.iter().map(|n| q.features.get(n).cloned().unwrap_or_default()));
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
}

fn offline_predict(model: &Path, query: &Path, out: &Path) -> Vec<f64> {
    let status = Command::new(env!("CARGO_BIN_EXE_dheb"))
        .args(["predict", "--model"])
        .arg(model)
        .arg("--query")
        .arg(query)
        .arg("--out")
        .arg(out)
        .env("DHEB_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    let mut r = csv::Reader::from_path(out).unwrap();
    r.records()
        .map(|rec| rec.unwrap().get(2).unwrap().parse::<f64>().unwrap())
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn criterion_08_serving_matches_offline_across_hot_swaps() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let sim = generate(&SimConfig {
        n_obs_per_unit: 30,
        seed: 8,
        ..SimConfig::default()
    })
    .unwrap();
    let ds = &sim.dataset;
    let names: Vec<String> = ds.schema().names().map(str::to_string).collect();
    let start = ds.date_range().unwrap().start;

    // Six versions trained on growing windows.
    let mut paths = Vec::new();
    for k in 0..6 {
        let window = ds.between(start, start + chrono::Duration::days(60 + 20 * k));
        let mut m = FittedModel::Hierarchy(train_dheb(&window, &TrainConfig::default()).unwrap());
        m.set_trained_at(format!("version-{k}"));
        let p = dir.path().join(format!("m{k}.json"));
        store::save(&p, &m, &names).unwrap();
        paths.push(p);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let obs = ds.observations();
    let mut queries = Vec::new();
    for i in 0..100 {
        let o = &obs[rng.random_range(0..obs.len())];
        let mut features: BTreeMap<String, String> =
            names.iter().cloned().zip(o.features.iter().cloned()).collect();
        let unit = if i % 5 == 0 {
            // unseen unit with one feature missing
            features.remove(&names[rng.random_range(0..names.len())]);
            format!("fresh{i}")
        } else {
            o.bid_unit_id.clone()
        };
        queries.push(PredictRequest {
            bid_unit_id: unit,
            date: (i % 3 != 0).then(|| o.date.to_string()),
            features,
        });
    }
    let qpath = dir.path().join("q.csv");
    write_query_csv(&qpath, &queries, &names);
    let mut offline: HashMap<String, Vec<f64>> = HashMap::new();
    for (k, p) in paths.iter().enumerate() {
        let preds = offline_predict(p, &qpath, &dir.path().join(format!("p{k}.csv")));
        offline.insert(format!("version-{k}"), preds);
    }

    let live = dir.path().join("live.json");
    std::fs::copy(&paths[0], &live).unwrap();
    let server = serve::start(&ServeOptions {
        model_path: live.clone(),
        listen_address: "127.0.0.1:0".into(),
        poll_interval: Duration::from_millis(2),
    })
    .await
    .unwrap();
    let base = format!("http://{}", server.addr);
    let trainings_before = posterior_update_count();

    let client = reqwest::Client::new();
    let done = Arc::new(AtomicUsize::new(0));
    let total = 10_000usize;
    let swapper = {
        let (done, client, base, live, paths) = (done.clone(), client.clone(), base.clone(), live.clone(), paths.clone());
        tokio::spawn(async move {
            for k in 1..6 {
                while done.load(Ordering::SeqCst) < k * 1600 {
                    tokio::time::sleep(Duration::from_millis(1)).await;
                }
                let bytes = std::fs::read(&paths[k]).unwrap();
                store::write_atomic(&live, &bytes).unwrap();
                let want = format!("version-{k}");
                loop {
                    let meta: serde_json::Value =
                        client.get(format!("{base}/model/meta")).send().await.unwrap().json().await.unwrap();
                    if meta["trained_at"] == want.as_str() {
                        break;
                    }
                    tokio::time::sleep(Duration::from_millis(1)).await;
                }
            }
        })
    };

    let queries = Arc::new(queries);
    let permits = Arc::new(tokio::sync::Semaphore::new(64));
    let mut tasks = Vec::with_capacity(total);
    for i in 0..total {
        let (client, base, queries, done, permits) =
            (client.clone(), base.clone(), queries.clone(), done.clone(), permits.clone());
        tasks.push(tokio::spawn(async move {
            let _p = permits.acquire_owned().await.unwrap();
            let q = &queries[i % queries.len()];
            let resp = client.post(format!("{base}/predict")).json(q).send().await.unwrap();
            assert!(resp.status().is_success());
            let body: PredictResponse = resp.json().await.unwrap();
            done.fetch_add(1, Ordering::SeqCst);
            (i % queries.len(), body)
        }));
    }
    let mut responses = Vec::with_capacity(total);
    for t in tasks {
        responses.push(t.await.unwrap());
    }
    swapper.await.unwrap();
    let trainings_after = posterior_update_count();
    server.shutdown().await.unwrap();

    let mut mismatched = 0;
    let mut versions_seen = BTreeSet::new();
    let mut version_of: HashMap<u64, String> = HashMap::new();
    for (qi, r) in &responses {
        let tag = r.model_trained_at.clone().unwrap_or_default();
        let consistent_version = version_of.entry(r.model_version).or_insert_with(|| tag.clone()) == &tag;
        let expected = offline.get(&tag).map(|v| v[*qi]);
        if !consistent_version || expected.map(f64::to_bits) != Some(r.rpc.to_bits()) {
            mismatched += 1;
        }
        versions_seen.insert(tag);
    }
    verdict(
        8,
        "serving equivalence and hot swap",
        responses.len() == total && mismatched == 0 && versions_seen.len() == 6 && trainings_after == trainings_before,
        &format!(
            "{} responses, {mismatched} mixed or non-identical, {} model versions observed, training calls during serving {}",
            responses.len(),
            versions_seen.len(),
            trainings_after - trainings_before
        ),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_stale_model_still_beats_baseline() {
    let _g = serial();
    let cfg = BacktestConfig::default();
    let train = TrainConfig::default();
    let (mut degradation, mut improvement) = (Vec::new(), Vec::new());
    for r in 0..10 {
        let sim = generate(&SimConfig {
            n_obs_per_unit: 10,
            y_zero_fraction: 0.9,
            seed: 900 + r,
            ..SimConfig::default()
        })
        .unwrap();
        let st = staleness_experiment(&sim.dataset, &Method::Dheb, &train, &cfg, &[1, 4]).unwrap();
        degradation.push(st.rows[1].degradation_vs_daily.unwrap());
        let ev = rolling_backtest(&sim.dataset, &[Method::Wa, Method::Dheb], &train, &cfg).unwrap();
        improvement.push(ev.model("DHEB").unwrap().improvement_vs_wa.unwrap());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (deg, imp) = (mean(&degradation), mean(&improvement));
    verdict(
        9,
        "staleness",
        deg < imp,
        &format!("n=10, s=0.9, 10 replicates: mean degradation at T=4 {deg:.2}%, mean DHEB improvement over WA {imp:.2}%"),
    );
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_engineering_budget() {
    let _g = serial();
    let start_day = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
    let sim = generate(&SimConfig {
        n_obs_per_unit: 60,
        date_range: DateRange::new(start_day, start_day + chrono::Duration::days(59)).unwrap(),
        seed: 10,
        ..SimConfig::default()
    })
    .unwrap();
    let t = Instant::now();
    let model = train_dheb(&sim.dataset, &TrainConfig::default()).unwrap();
    let train_secs = t.elapsed().as_secs_f64();

    let names: Vec<String> = sim.dataset.schema().names().map(str::to_string).collect();
    let loaded = LoadedModel {
        model: FittedModel::Hierarchy(model),
        feature_names: names.clone(),
        version: 1,
        loaded_at: String::new(),
    };
    let obs = sim.dataset.observations();
    let mut lat = Vec::with_capacity(10_000);
    for i in 0..10_000 {
        let o = &obs[(i * 7919) % obs.len()];
        let req = PredictRequest {
            bid_unit_id: o.bid_unit_id.clone(),
            date: Some(o.date.to_string()),
            features: names.iter().cloned().zip(o.features.iter().cloned()).collect(),
        };
        let t = Instant::now();
        let r = loaded.predict(&req).unwrap();
        lat.push(t.elapsed().as_secs_f64());
        assert!(r.rpc.is_finite());
    }
    lat.sort_by(f64::total_cmp);
    let p99 = lat[lat.len() * 99 / 100];
    verdict(
        10,
        "engineering budget",
        sim.dataset.len() == 6000 && train_secs < 5.0 && p99 < 1e-3,
        &format!(
            "{} rows trained in {train_secs:.3} s, p99 prediction latency {:.1} us",
            sim.dataset.len(),
            p99 * 1e6
        ),
    );
}
