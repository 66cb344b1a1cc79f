//! Acceptance suite. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! The ORL criterion reads the dataset from `$ORL_DIR`, falling back to
//! `data/orl` at the workspace root.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use pairnet::eval::mean_and_two_sigma;
use pairnet::mlp::{MlpParams, NetError, Network};
use pairnet::pairwise::{combiner_weights, PairwiseEnsemble};
use pairnet::pca::{fit_pca, PcaOptions, Route};
use pairnet::pgm::{parse_pgm, serialize_pgm, GrayImage, PgmError, PgmFormat};
use rand::Rng;
use rand_distr::StandardNormal;

type ErrorCase = (&'static [u8], &'static str, fn(&PgmError) -> bool);
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(check: Check, elapsed: Duration, budget: Duration) -> Outcome {
    match check {
        Ok(detail) if elapsed <= budget => Outcome::Pass(format!("{detail} [{elapsed:.1?}]")),
        Ok(detail) => Outcome::Fail(format!("{detail}; took {elapsed:.1?}, budget {budget:?}")),
        Err(e) => Outcome::Fail(e),
    }
}

fn timed(budget_s: u64, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let check = f();
    within_budget(check, start.elapsed(), Duration::from_secs(budget_s))
}

// 1 -------------------------------------------------------------------------

fn combiner_algebra() -> Check {
    for c in 2..=12 {
        let w = combiner_weights(c).map_err(|e| e.to_string())?;
        let p = c * (c - 1) / 2;
        for (k, row) in w.iter().enumerate() {
            let nz = row.iter().filter(|&&v| v != 0).count();
            ensure(nz == c - 1, || format!("C={c}: row {} has {nz} non-zeros", k + 1))?;
        }
        for col in 0..p {
            let plus = w.iter().filter(|r| r[col] == 1).count();
            let minus = w.iter().filter(|r| r[col] == -1).count();
            ensure(plus == 1 && minus == 1, || format!("C={c}: column {col} has {plus} (+1) and {minus} (-1)"))?;
        }
    }
    let mut rng = pairnet::rng::stream(1, &[]);
    let mut worst = 0.0f64;
    for trial in 0..1000u64 {
        let c = rng.random_range(2..=12);
        let m = rng.random_range(1..=6);
        let nets: Vec<MlpParams> =
            (0..c * (c - 1) / 2).map(|k| MlpParams::init(m, 4, 1, trial * 1000 + k as u64, Some(2.0))).collect();
        let ens = PairwiseEnsemble::from_nets(c, nets).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = ens.score(&x).map_err(|e| e.to_string())?.sum().abs();
        worst = worst.max(s);
    }
    ensure(worst < 1e-9, || format!("max |sum g| = {worst:e}"))?;
    Ok(format!("C in 2..=12 structure ok; max |sum g| over 1000 ensembles = {worst:.1e}"))
}

// 2 -------------------------------------------------------------------------

struct Stub;

impl Network for Stub {
    fn input_dim(&self) -> usize {
        0
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn forward(&self, _: &[f64]) -> Result<Vec<f64>, NetError> {
        Ok(vec![1.0])
    }
}

fn worked_example() -> Check {
    let ens = PairwiseEnsemble::from_nets(3, vec![Stub, Stub, Stub]).map_err(|e| e.to_string())?;
    let g = ens.score(&[]).map_err(|e| e.to_string())?.0;
    let want = [2.0, 0.0, -2.0];
    ensure(g.iter().zip(want).all(|(a, b)| (a - b).abs() <= 1e-12), || format!("score {g:?}, want {want:?}"))?;
    Ok(format!("score = {g:?}"))
}

// 3 -------------------------------------------------------------------------

fn gradient_check() -> Check {
    let mut rng = pairnet::rng::stream(3, &[]);
    let nets = 120;
    let mut worst = 0.0f64;
    for trial in 0..nets {
        let (m, h, o, n) = (rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=6));
        let l2 = [0.0, 1e-3, 0.1][trial % 3];
        let mut net = MlpParams::init(m, h, o, trial as u64, Some(0.9));
        for b in net.b1.iter_mut().chain(&mut net.b2) {
            *b = rng.random_range(-0.5..0.5);
        }
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
        let t: Vec<Vec<f64>> = (0..n).map(|_| (0..o).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
        let analytic = net.loss_and_gradient(&x, &t, l2).map_err(|e| e.to_string())?.1.flat();
        let base = net.flat();
        let mut probe = net.clone();
        let step = 1e-5;
        for (i, a) in analytic.iter().enumerate() {
            let mut p = base.clone();
            p[i] += step;
            probe.set_flat(&p);
            let up = probe.loss_and_gradient(&x, &t, l2).map_err(|e| e.to_string())?.0;
            p[i] = base[i] - step;
            probe.set_flat(&p);
            let down = probe.loss_and_gradient(&x, &t, l2).map_err(|e| e.to_string())?.0;
            let numeric = (up - down) / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("{nets} nets, max relative error {worst:.1e}"))
}

// 4 -------------------------------------------------------------------------

fn gaussian(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

fn pca_correctness() -> Check {
    let mut rng = pairnet::rng::stream(4, &[]);
    let opts = |route| PcaOptions { standardize: true, route };
    let mut worst_ortho = 0.0f64;
    let mut worst_sine = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(3..=20);
        let d = rng.random_range(n + 1..=50);
        let m = rng.random_range(1..=(n - 1).min(5));
        let x = gaussian(&mut rng, n, d);
        let gram = fit_pca(&x, m, opts(Route::Gram)).map_err(|e| e.to_string())?;
        let cov = fit_pca(&x, m, opts(Route::Covariance)).map_err(|e| e.to_string())?;
        for model in [&gram, &cov] {
            for (i, a) in model.components.iter().enumerate() {
                for (j, b) in model.components.iter().enumerate() {
                    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                    worst_ortho = worst_ortho.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
        }
        // sin of the largest principal angle = largest singular value of (I - B^T B) A^T,
        // bounded here by the Frobenius norm of the residual.
        let mut frob = 0.0;
        for a in &gram.components {
            let mut r = a.clone();
            for b in &cov.components {
                let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= dot * bi);
            }
            frob += r.iter().map(|v| v * v).sum::<f64>();
        }
        worst_sine = worst_sine.max(frob.sqrt());
    }
    ensure(worst_ortho <= 1e-8, || format!("orthonormality error {worst_ortho:e}"))?;
    ensure(worst_sine < 1e-6, || format!("principal angle sine {worst_sine:e}"))?;

    let mut worst_ev = 0.0f64;
    for (n, d, rank) in [(25, 10, 3), (8, 40, 2), (30, 6, 1)] {
        let basis = gaussian(&mut rng, rank, d);
        let coeffs = gaussian(&mut rng, n, rank);
        let x: Vec<Vec<f64>> =
            coeffs.iter().map(|c| (0..d).map(|j| (0..rank).map(|k| c[k] * basis[k][j]).sum::<f64>() + 2.0).collect()).collect();
        for m in rank..=rank + 1 {
            let model = match fit_pca(&x, m, opts(Route::Auto)) {
                Ok(model) => model,
                // Asking for more components than the data's rank is refused; rank itself must work.
                Err(pairnet::pca::PcaError::RankDeficient { .. }) if m > rank => continue,
                Err(e) => return Err(e.to_string()),
            };
            let ev = model.explained_variance(m).map_err(|e| e.to_string())?;
            worst_ev = worst_ev.max((ev - 1.0).abs());
        }
    }
    ensure(worst_ev < 1e-8, || format!("explained variance off by {worst_ev:e} on low-rank data"))?;
    Ok(format!("orthonormality {worst_ortho:.1e}, gram/covariance sine {worst_sine:.1e}, |EV - 1| {worst_ev:.1e}"))
}

// 5, 7 ----------------------------------------------------------------------

fn run_cli(out: &Path, extra: &[&str]) -> Result<(), String> {
    let mut args = vec!["run", "--out", out.to_str().unwrap()];
    args.extend(extra);
    let o = Command::new(env!("CARGO_BIN_EXE_pairnet")).args(&args).output().map_err(|e| e.to_string())?;
    ensure(o.status.success(), || format!("pairnet {args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)))
}

/// `(system, alpha) -> mean` from an aggregate CSV.
fn means(out: &Path) -> Result<BTreeMap<(String, String), f64>, String> {
    let text = fs::read_to_string(out.join("aggregate.csv")).map_err(|e| e.to_string())?;
    let rows = pairnet::report::parse_aggregate_csv(&text).map_err(|e| e.to_string())?;
    Ok(rows.into_iter().map(|r| ((r.system.code().to_string(), r.alpha), r.mean)).collect())
}

const FIG1_ARGS: [&str; 6] = ["--synthetic", "fig1", "--alphas", "0.0,0.5,1.3", "--folds", "5"];

fn synthetic_trend(out: &Path) -> Check {
    run_cli(out, &FIG1_ARGS)?;
    let means = means(out)?;
    let get = |s: &str, a: &str| means.get(&(s.to_string(), a.to_string())).copied().ok_or(format!("no row {s},{a}"));
    let mut detail = Vec::new();
    for s in ["P", "M"] {
        let (clean, noisy) = (get(s, "0.0")?, get(s, "1.3")?);
        ensure(clean >= 0.95, || format!("{s} mean at alpha 0 = {clean}"))?;
        ensure(clean - noisy >= 0.10, || format!("{s} drops only {clean} -> {noisy}"))?;
        detail.push(format!("{s}: {clean:.3} -> {noisy:.3}"));
    }
    Ok(detail.join(", "))
}

fn determinism(base: &Path) -> Check {
    let files = ["folds.csv", "aggregate.csv"];
    let read = |dir: &Path| -> Result<Vec<Vec<u8>>, String> {
        files.iter().map(|f| fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))).collect()
    };
    let runs = [("repeat", vec![]), ("threads=1", vec!["--threads", "1"]), ("threads=4", vec!["--threads", "4"])];
    let reference = base.join("first");
    run_cli(&reference, &FIG1_ARGS)?;
    let want = read(&reference)?;
    for (name, extra) in runs {
        let dir = base.join(name);
        let mut args = FIG1_ARGS.to_vec();
        args.extend(extra);
        run_cli(&dir, &args)?;
        ensure(read(&dir)? == want, || format!("{name}: CSV bytes differ from the first run"))?;
    }
    Ok("repeat, 1 thread and 4 threads all byte-identical".into())
}

// 6 -------------------------------------------------------------------------

fn orl_dir() -> Option<PathBuf> {
    let candidate = std::env::var_os("ORL_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/orl"));
    candidate.join("s1").is_dir().then_some(candidate)
}

fn orl_trend(data: &Path, out: &Path) -> Check {
    run_cli(out, &["--data", data.to_str().unwrap()])?;
    let means = means(out)?;
    let get = |s: &str, a: &str| means.get(&(s.to_string(), a.to_string())).copied().ok_or(format!("no row {s},{a}"));
    let mut failures = Vec::new();
    for a in ["0.5", "0.7", "0.9", "1.1", "1.3"] {
        let (p, m) = (get("P", a)?, get("M", a)?);
        if p < m {
            failures.push(format!("(a) alpha {a}: P {p:.3} < M {m:.3}"));
        }
    }
    let gap0 = get("P", "0.0")? - get("M", "0.0")?;
    let gap11 = get("P", "1.1")? - get("M", "1.1")?;
    if gap11 <= gap0 {
        failures.push(format!("(b) gap at 1.1 ({gap11:.3}) not above gap at 0 ({gap0:.3})"));
    }
    let p0 = get("P", "0.0")?;
    if (p0 - 0.972).abs() > 0.05 {
        failures.push(format!("(c) P at alpha 0 = {p0:.3}, outside 0.972 ± 0.05"));
    }
    let summary = format!("P(0)={p0:.3}, gap(0)={gap0:+.3}, gap(1.1)={gap11:+.3}");
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", failures.join("; ")))
    }
}

// 8 -------------------------------------------------------------------------

fn parser_fidelity() -> Check {
    let mut rng = pairnet::rng::stream(8, &[]);
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let maxval: u8 = rng.random_range(1..=255);
        let px = (0..w * h).map(|_| rng.random_range(0..=maxval)).collect();
        let img = GrayImage::new(w, h, maxval, px).map_err(|e| e.to_string())?;
        for format in [PgmFormat::Ascii, PgmFormat::Binary] {
            let back = parse_pgm(&serialize_pgm(&img, format)).map_err(|e| format!("{format:?}: {e}"))?;
            ensure(back == img, || format!("{format:?} round trip changed a {w}x{h} image"))?;
        }
    }
    let cases: [ErrorCase; 5] = [
        (b"P7\n2 2\n255\n", "bad magic", |e| matches!(e, PgmError::MalformedHeader(_))),
        (b"P5\n2\n", "missing dims", |e| matches!(e, PgmError::MalformedHeader(_))),
        (b"P5\n2 2\n255\n\x01", "short raster", |e| matches!(e, PgmError::TruncatedPixelData { .. })),
        (b"P5\n2 2\n300\n", "maxval > 255", |e| matches!(e, PgmError::UnsupportedMaxval(300))),
        (b"P2\n0 4\n255\n", "zero width", |e| matches!(e, PgmError::NonsensicalDimension { .. })),
    ];
    for (bytes, what, check) in cases {
        match parse_pgm(bytes) {
            Err(e) if check(&e) => {}
            other => return Err(format!("{what}: got {other:?}")),
        }
    }
    Ok("200 random images round-trip as P2 and P5; 5 error cases raise their named errors".into())
}

// 9 -------------------------------------------------------------------------

fn brute_force(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * var.sqrt())
}

fn statistics_oracle() -> Check {
    let (m, s) = mean_and_two_sigma(&[0.0, 1.0]).map_err(|e| e.to_string())?;
    ensure((m - 0.5).abs() <= 1e-12 && (s - std::f64::consts::SQRT_2).abs() <= 1e-12, || format!("{{0,1}} -> ({m}, {s})"))?;
    let mut rng = pairnet::rng::stream(9, &[]);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=20);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let got = mean_and_two_sigma(&v).map_err(|e| e.to_string())?;
        let want = brute_force(&v);
        worst = worst.max((got.0 - want.0).abs()).max((got.1 - want.1).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("{{0,1}} -> ({m}, {s:.6}); 1000 sets, max deviation {worst:.1e}"))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let root = scratch.path();
    let criteria: Vec<Criterion> = vec![
        ("combiner algebra", Box::new(|| timed(5, combiner_algebra))),
        ("worked example", Box::new(|| timed(5, worked_example))),
        ("gradient correctness", Box::new(|| timed(10, gradient_check))),
        ("PCA correctness", Box::new(|| timed(10, pca_correctness))),
        ("synthetic end-to-end trend", Box::new(|| timed(120, || synthetic_trend(&root.join("c5"))))),
        (
            "ORL trend reproduction",
            Box::new(|| match orl_dir() {
                None => Outcome::Skip("ORL dataset not found (set ORL_DIR or place it at data/orl)".into()),
                Some(dir) => timed(1800, || orl_trend(&dir, &root.join("c6"))),
            }),
        ),
        ("determinism", Box::new(|| timed(600, || determinism(&root.join("c7"))))),
        ("parser fidelity", Box::new(|| timed(10, parser_fidelity))),
        ("statistics oracle", Box::new(|| timed(5, statistics_oracle))),
    ];

    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let line = match run() {
            Outcome::Pass(d) => format!("PASS  criterion {} ({name}): {d}", i + 1),
            Outcome::Skip(d) => format!("SKIP  criterion {} ({name}): {d}", i + 1),
            Outcome::Fail(d) => {
                failed += 1;
                format!("FAIL  criterion {} ({name}): {d}", i + 1)
            }
        };
        println!("{line}");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed or skipped");
}
