//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of the outcome so `cargo test` stays usable while a
//! failing criterion is investigated; set `METRISCOPE_ACCEPTANCE_STRICT=1` to
//! exit 1 on any FAIL.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use metriscope::config::{DupSource, RunConfig};
use metriscope::pipeline::{prepare_sets, run_condition, Evaluator, Sets};
use metriscope::report::read_report_json;
use metriscope_core::linalg::Matrix;
use metriscope_core::metrics::{
    authpct, fid, kid, matrix_sqrt_psd, prdc, vendi, wasserstein_1d, GaussianMoments, MetricReport,
};
use metriscope_core::perturb::{add_poisson_noise, add_rician_noise, NoiseKind, NoiseSpec, Perturbation, PerturbationSpec};
use metriscope_core::{FeatureMatrix, ImageSet, ImageVolume, RngStream};
use rand::Rng;

const DEMO_SEED: u64 = 20240917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(r: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn matrix_from(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows_anon(rows).unwrap()
}

fn random_rows(r: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| normal(r)).collect()).collect()
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

fn pct(base: f64, v: f64) -> f64 {
    100.0 * (v - base) / base.abs()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------- oracles

fn fid_closed_form() -> Outcome {
    let n = 100_000;
    let stream = RngStream::new(11);
    let (mut a, mut b) = (stream.child(0).rng(), stream.child(1).rng());
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![normal(&mut a)]).collect();
    let y: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0 + 2.0 * normal(&mut b)]).collect();
    let sampled = fid(
        &GaussianMoments::from_features(&matrix_from(&x)),
        &GaussianMoments::from_features(&matrix_from(&y)),
    )
    .unwrap();
    let exact = fid(
        &GaussianMoments::new(vec![0.0], Matrix::diag(&[1.0]), n).unwrap(),
        &GaussianMoments::new(vec![1.0], Matrix::diag(&[4.0]), n).unwrap(),
    )
    .unwrap();
    outcome(
        (sampled - 2.0).abs() <= 0.05 && (exact - 2.0).abs() <= 1e-9,
        format!("sample {sampled:.5}, exact-moment error {:.1e}", (exact - 2.0).abs()),
    )
}

fn naive_matmul(a: &Matrix, b: &Matrix) -> Vec<f64> {
    let (n, m, p) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            out[i * p + j] = (0..m).map(|k| a.data()[i * m + k] * b.data()[k * p + j]).sum();
        }
    }
    out
}

fn matrix_sqrt_reconstruction() -> Outcome {
    let stream = RngStream::new(12);
    let mut worst = 0.0f64;
    for t in 0..100u64 {
        let mut r = stream.child(t).rng();
        let d = r.random_range(1..=64);
        // some instances are rank deficient
        let rank = if t % 4 == 0 { r.random_range(1..=d) } else { d };
        let b: Vec<f64> = (0..d * rank).map(|_| normal(&mut r)).collect();
        let bm = Matrix::from_vec(d, rank, b).unwrap();
        let mut a = Matrix::from_vec(d, d, naive_matmul(&bm, &bm.transpose())).unwrap();
        a.symmetrize();
        let s = matrix_sqrt_psd(&a).unwrap();
        let ss = naive_matmul(&s, &s);
        let err: f64 = ss.iter().zip(a.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let norm: f64 = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
    }
    outcome(worst < 1e-8, format!("worst relative error {worst:.2e}"))
}

fn kid_oracles() -> Outcome {
    let x = matrix_from(&[vec![0.0], vec![0.0]]);
    let y = matrix_from(&[vec![1.0], vec![1.0]]);
    let (hand, _) = kid(&x, &y, 2, 1, &RngStream::new(0)).unwrap();

    let stream = RngStream::new(13);
    let estimates: Vec<f64> = (0..200u64)
        .map(|t| {
            let mut r = stream.child(t).rng();
            let a = matrix_from(&random_rows(&mut r, 50, 4));
            let b = matrix_from(&random_rows(&mut r, 50, 4));
            kid(&a, &b, 50, 1, &stream.child(1000 + t)).unwrap().0
        })
        .collect();
    let m = estimates.iter().sum::<f64>() / 200.0;
    let var = estimates.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / 199.0;
    let se = (var / 200.0).sqrt();
    outcome(
        hand == 7.0 && m.abs() <= 3.0 * se,
        format!("hand instance {hand}, null mean {m:.2e} ({:.2} SE)", m / se),
    )
}

fn brute_force_w1(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| (x[i] - y[j]).abs()).sum::<f64>();
    let mut best = cost(&perm);
    // Heap's algorithm over all n! assignments
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

fn wasserstein_brute_force() -> Outcome {
    let stream = RngStream::new(14);
    let mut worst = 0.0f64;
    for t in 0..1000u64 {
        let mut r = stream.child(t).rng();
        let n = r.random_range(1..=8);
        let mut x: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let mut y: Vec<f64> = (0..n).map(|_| 3.0 * r.random::<f64>() - 1.0).collect();
        let oracle = brute_force_w1(&x, &y);
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        worst = worst.max((wasserstein_1d(&x, &y).unwrap() - oracle).abs());
    }
    outcome(worst <= 1e-12, format!("worst deviation {worst:.1e}"))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn knn_radii(pts: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..pts.len())
        .map(|i| {
            let mut d: Vec<f64> = (0..pts.len()).filter(|&j| j != i).map(|j| dist(&pts[i], &pts[j])).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

fn prdc_oracle(real: &[Vec<f64>], gen: &[Vec<f64>], k: usize) -> [f64; 4] {
    let (rr, gr) = (knn_radii(real, k), knn_radii(gen, k));
    let (nr, ng) = (real.len() as f64, gen.len() as f64);
    let mut precision = 0.0;
    let mut density = 0.0;
    for g in gen {
        let mut hits = 0;
        for (r, rad) in real.iter().zip(&rr) {
            if dist(g, r) <= *rad {
                hits += 1;
            }
        }
        if hits > 0 {
            precision += 1.0;
        }
        density += hits as f64;
    }
    let mut recall = 0.0;
    let mut coverage = 0.0;
    for (r, rad) in real.iter().zip(&rr) {
        let mut in_gen_ball = false;
        let mut nearest = f64::INFINITY;
        for (g, grad) in gen.iter().zip(&gr) {
            let dd = dist(g, r);
            in_gen_ball |= dd <= *grad;
            nearest = nearest.min(dd);
        }
        if in_gen_ball {
            recall += 1.0;
        }
        if nearest <= *rad {
            coverage += 1.0;
        }
    }
    [precision / ng, recall / nr, density / (k as f64 * ng), coverage / nr]
}

fn prdc_brute_force() -> Outcome {
    let stream = RngStream::new(15);
    let mut mismatches = 0;
    for t in 0..500u64 {
        let mut r = stream.child(t).rng();
        let (nr, ng, d) = (r.random_range(3..=20), r.random_range(3..=20), r.random_range(1..=5));
        let k = r.random_range(1..nr.min(ng));
        // round through f32 so both sides see the stored values
        let f32s = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            rows.into_iter().map(|row| row.into_iter().map(|v| v as f32 as f64).collect()).collect()
        };
        let real = f32s(random_rows(&mut r, nr, d));
        let gen: Vec<Vec<f64>> = f32s(random_rows(&mut r, ng, d)).into_iter().map(|row| row.iter().map(|v| v + 0.3).collect()).collect();
        let got = prdc(&matrix_from(&real), &matrix_from(&gen), k).unwrap();
        if [got.precision, got.recall, got.density, got.coverage] != prdc_oracle(&real, &gen, k) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/500 instances differ"))
}

fn vendi_extremes() -> Outcome {
    let same = vendi(&matrix_from(&vec![vec![0.3, -1.2, 2.0]; 16])).unwrap();
    let eye: Vec<Vec<f64>> = (0..16).map(|i| (0..16).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let orth = vendi(&matrix_from(&eye)).unwrap();
    outcome(
        (same - 1.0).abs() <= 1e-9 && (orth - 16.0).abs() <= 1e-6,
        format!("identical {same:.12}, orthogonal {orth:.9}"),
    )
}

fn authpct_extremes() -> Outcome {
    let mut r = RngStream::new(16).rng();
    let real = random_rows(&mut r, 40, 6);
    let copies = authpct(&matrix_from(&real), &matrix_from(&real)).unwrap();
    let far: Vec<Vec<f64>> = random_rows(&mut r, 40, 6).into_iter().map(|row| row.iter().map(|v| v + 1e3).collect()).collect();
    let separated = authpct(&matrix_from(&real), &matrix_from(&far)).unwrap();
    outcome(copies == 0.0 && separated == 100.0, format!("copies {copies}%, far-separated {separated}%"))
}

fn noise_moments() -> Outcome {
    let side = 1000;
    let flat = |v: f64| ImageSet::new("flat", vec![ImageVolume::new("a", side, side, vec![v; side * side]).unwrap()]).unwrap();
    let mean = |s: &ImageSet| s.images()[0].pixels().iter().sum::<f64>() / (side * side) as f64;

    let sigma = 0.1;
    let rician = add_rician_noise(&flat(0.0), &NoiseSpec::new(NoiseKind::Rician, sigma).unwrap(), &RngStream::new(17)).unwrap();
    let expected = sigma * (std::f64::consts::PI / 2.0).sqrt();
    let rician_err = (mean(&rician.set) - expected).abs() / expected;

    // lambda = 1 / sigma^2 = 200 photons per unit intensity, so intensity 0.5 gives rate 100
    let sigma = (1.0f64 / 200.0).sqrt();
    let poisson = add_poisson_noise(&flat(0.5), &NoiseSpec::new(NoiseKind::Poisson, sigma).unwrap(), &RngStream::new(18)).unwrap();
    let poisson_err = (mean(&poisson.set) - 0.5).abs() / 0.5;
    outcome(
        rician_err < 0.01 && poisson_err < 0.005,
        format!("Rician mean off by {:.3}%, Poisson by {:.3}%", 100.0 * rician_err, 100.0 * poisson_err),
    )
}

// --------------------------------------------------------------- findings

struct Bench {
    sets: Sets,
    eval: Evaluator,
    baseline: MetricReport,
}

fn bench(count: usize, size: usize) -> Bench {
    let cfg = RunConfig::from_json(&format!(
        r#"{{"seed": {DEMO_SEED}, "data": {{"kind": "phantom", "count": {count}, "size": {size}}},
            "split": [0.5, 0.0, 0.5], "metrics": {{"disabled": ["ct"]}}}}"#
    ))
    .unwrap();
    cfg.validate().unwrap();
    let sets = prepare_sets(&cfg).unwrap();
    let eval = Evaluator::new(&cfg, &sets).unwrap();
    let baseline = eval.evaluate(&eval.family(&sets.candidate).unwrap()).unwrap();
    Bench { sets, eval, baseline }
}

impl Bench {
    fn condition(&self, p: Perturbation) -> MetricReport {
        run_condition(&self.eval, &self.sets, DupSource::Reference, &PerturbationSpec::new(p, 0))
            .unwrap()
            .report
    }
}

fn noise_finding() -> Outcome {
    let b = bench(200, 64);
    let mut fids = vec![b.baseline.value("fid").unwrap()];
    for sigma in [0.01, 0.05, 0.1] {
        fids.push(b.condition(Perturbation::Gaussian { sigma }).value("fid").unwrap());
    }
    outcome(strictly_increasing(&fids), format!("FID over sigma 0/.01/.05/.1: {}", fmt(&fids)))
}

const FOUR: [&str; 4] = ["fid", "kid", "mmd_rbf", "asw"];

fn mean_abs_pct(base: &MetricReport, cond: &MetricReport) -> f64 {
    FOUR.iter().map(|m| pct(base.value(m).unwrap(), cond.value(m).unwrap()).abs()).sum::<f64>() / 4.0
}

fn morphology_finding(demo: &Path) -> Outcome {
    let b = bench(400, 128);
    let blur = mean_abs_pct(&b.baseline, &b.condition(Perturbation::BoundaryBlur { sigma: 3.0, band_width: 3.0 }));
    let noise = mean_abs_pct(&b.baseline, &b.condition(Perturbation::Gaussian { sigma: 0.1 }));
    let reports = demo.join("reports");
    let base64 = read_report_json(&reports.join("baseline.json")).unwrap();
    let blur64 = mean_abs_pct(&base64, &read_report_json(&reports.join("morphology/boundary_blur_3.json")).unwrap());
    let noise64 = mean_abs_pct(&base64, &read_report_json(&reports.join("noise/gaussian_0.1.json")).unwrap());
    let ratio = noise / blur;
    outcome(
        ratio >= 10.0,
        format!(
            "128 px: noise {noise:.1}% vs blur {blur:.2}%, ratio {ratio:.1}; 64 px demo ratio {:.2} (info)",
            noise64 / blur64
        ),
    )
}

fn demo_reports(demo: &Path, exp: &str, names: &[&str]) -> Vec<MetricReport> {
    let dir = demo.join("reports");
    let mut out = vec![read_report_json(&dir.join("baseline.json")).unwrap()];
    out.extend(names.iter().map(|n| read_report_json(&dir.join(exp).join(format!("{n}.json"))).unwrap()));
    out
}

fn series(reports: &[MetricReport], metric: &str) -> Vec<f64> {
    reports.iter().map(|r| r.value(metric).unwrap()).collect()
}

const EXTERNAL: [&str; 4] = ["external_dup_0.05", "external_dup_0.15", "external_dup_0.3", "external_dup_0.45"];

fn memorisation_finding(demo: &Path) -> Outcome {
    let reports = demo_reports(demo, "memorisation", &EXTERNAL);
    let (fid, auth) = (series(&reports, "fid"), series(&reports, "authpct"));
    outcome(
        strictly_decreasing(&fid) && strictly_decreasing(&auth),
        format!("FID {}, AuthPct {}", fmt(&fid), fmt(&auth)),
    )
}

fn internal_duplication_finding(demo: &Path) -> Outcome {
    let dir = demo.join("reports");
    let base = read_report_json(&dir.join("baseline.json")).unwrap();
    let internal = read_report_json(&dir.join("memorisation/internal_dup_0.45.json")).unwrap();
    let external = read_report_json(&dir.join("memorisation/external_dup_0.45.json")).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for m in ["fid", "kid"] {
        let pi = pct(base.value(m).unwrap(), internal.value(m).unwrap()).abs();
        let pe = pct(base.value(m).unwrap(), external.value(m).unwrap()).abs();
        pass &= pi < 0.2 * pe;
        parts.push(format!("{m} internal {pi:.1}% vs external {pe:.1}% (ratio {:.2})", pi / pe));
    }
    outcome(pass, parts.join("; "))
}

fn mode_collapse_finding(demo: &Path) -> Outcome {
    let reports = demo_reports(demo, "mode_collapse", &["no_class3", "no_class3_1to5"]);
    let (recall, coverage) = (series(&reports, "recall"), series(&reports, "coverage"));
    outcome(
        strictly_decreasing(&recall) && strictly_decreasing(&coverage),
        format!("recall {}, coverage {}", fmt(&recall), fmt(&coverage)),
    )
}

// ------------------------------------------------------------ end to end

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.json")
}

fn run_demo(out: &Path) -> (bool, Duration, String) {
    let t = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_metriscope"))
        .args(["run", "--config"])
        .arg(demo_config())
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (o.status.success(), t.elapsed(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn without_timestamp(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("created_unix");
    v
}

fn end_to_end(a: &Path, b: &Path, first: (bool, Duration, String)) -> Outcome {
    let second = run_demo(b);
    if !first.0 || !second.0 {
        return outcome(false, format!("demo run failed: {}{}", first.2, second.2));
    }
    let (mut ta, mut tb) = (tree_bytes(a), tree_bytes(b));
    let manifest = Path::new("manifest.json");
    let (ma, mb) = (ta.remove(manifest).unwrap(), tb.remove(manifest).unwrap());
    let differing = ta.iter().filter(|(k, v)| tb.get(*k) != Some(*v)).count() + tb.keys().filter(|k| !ta.contains_key(*k)).count();
    let slowest = first.1.max(second.1);
    outcome(
        differing == 0 && without_timestamp(&ma) == without_timestamp(&mb) && slowest < Duration::from_secs(300),
        format!("{} files, {differing} differ, slowest run {:.1} s", ta.len() + 1, slowest.as_secs_f64()),
    )
}

// ------------------------------------------------------------------ main

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let (demo_a, demo_b) = (scratch.path().join("a"), scratch.path().join("b"));
    let first = run_demo(&demo_a);
    assert!(first.0, "demo run failed: {}", first.2);

    type Check<'a> = (&'static str, Option<Duration>, Box<dyn FnOnce() -> Outcome + 'a>);
    let checks: Vec<Check> = vec![
        ("fid-closed-form", Some(Duration::from_secs(5)), Box::new(fid_closed_form)),
        ("matrix-sqrt-reconstruction", None, Box::new(matrix_sqrt_reconstruction)),
        ("kid-hand-oracle-and-null-calibration", None, Box::new(kid_oracles)),
        ("wasserstein-1d-brute-force", None, Box::new(wasserstein_brute_force)),
        ("prdc-brute-force", None, Box::new(prdc_brute_force)),
        ("vendi-extremes", None, Box::new(vendi_extremes)),
        ("authpct-extremes", None, Box::new(authpct_extremes)),
        ("noise-finding", Some(Duration::from_secs(120)), Box::new(noise_finding)),
        ("memorisation-finding", None, Box::new(|| memorisation_finding(&demo_a))),
        ("internal-duplication-insensitivity", None, Box::new(|| internal_duplication_finding(&demo_a))),
        ("morphology-blindness", None, Box::new(|| morphology_finding(&demo_a))),
        ("mode-collapse-recall-coverage", None, Box::new(|| mode_collapse_finding(&demo_a))),
        ("rician-poisson-moments", None, Box::new(noise_moments)),
        ("end-to-end-determinism", None, Box::new(|| end_to_end(&demo_a, &demo_b, first))),
    ];

    let mut failed = 0;
    for (name, limit, check) in checks {
        let t = Instant::now();
        let mut o = check();
        let elapsed = t.elapsed();
        if let Some(limit) = limit {
            if elapsed >= limit {
                o.pass = false;
                o.detail.push_str(&format!("; exceeded {} s", limit.as_secs()));
            }
        }
        failed += usize::from(!o.pass);
        println!(
            "{} {name}: {} [{:.2} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 14 criteria pass", 14 - failed);
    if failed > 0 && std::env::var("METRISCOPE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
