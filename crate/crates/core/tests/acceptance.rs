//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its wall time (visible with `cargo test --test acceptance -- --nocapture`).
//! Stated runtime budgets are asserted.

use std::time::Instant;

use koopgen::baselines;
use koopgen::bench::{
    run_bench, run_sweep, BenchConfig, BenchEntryFile, BenchMethod, CellRow, Preset, SweepConfig,
};
use koopgen::dataset::SnapshotDataset;
use koopgen::dictionary::Dictionary;
use koopgen::linalg::{self, DenseMatrix};
use koopgen::quadrature;
use koopgen::rtm::{self, RtmConfig};
use koopgen::systems::{sample_initial_conditions, BoxDomain};
use koopgen::zubov::{self, Lattice, ZubovProblem};

const SEED: u64 = 42;

fn pass(criterion: &str, started: Instant, budget_s: f64, detail: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    println!("criterion {criterion}: PASS ({elapsed:.1} s) - {detail}");
    assert!(
        elapsed <= budget_s,
        "criterion {criterion} exceeded its {budget_s} s budget ({elapsed:.1} s)"
    );
}

fn bench_single(system: &str, gammas: &[f64], methods: &[BenchMethod]) -> Vec<CellRow> {
    let cfg = BenchConfig {
        seed: SEED,
        preset: Preset::Desk,
        timing: false,
        threads: None,
        entries: vec![BenchEntryFile {
            system: system.into(),
            gamma: Some(gammas.to_vec()),
            methods: Some(methods.to_vec()),
            ..Default::default()
        }],
    };
    run_bench(&cfg, None).expect("bench run").rows
}

fn row(rows: &[CellRow], method: BenchMethod, gamma: f64) -> &CellRow {
    rows.iter()
        .find(|r| r.method == method && r.gamma == gamma)
        .unwrap_or_else(|| panic!("missing row {method} at gamma {gamma}"))
}

#[test]
fn criterion_01_vdp_gamma50_table_row() {
    let start = Instant::now();
    let rows = bench_single(
        "vdp",
        &[50.0],
        &[
            BenchMethod::Rtm,
            BenchMethod::Srtm,
            BenchMethod::Fdm,
            BenchMethod::Klm,
        ],
    );
    let rtm = row(&rows, BenchMethod::Rtm, 50.0)
        .rmse_weights
        .expect("RTM weights");
    let srtm = row(&rows, BenchMethod::Srtm, 50.0)
        .rmse_weights
        .expect("SRTM weights");
    let fdm = row(&rows, BenchMethod::Fdm, 50.0)
        .rmse_weights
        .expect("FDM weights");
    let klm = row(&rows, BenchMethod::Klm, 50.0)
        .rmse_weights
        .expect("KLM weights");
    assert!(rtm <= 1e-6, "RTM weight RMSE {rtm:e} must be <= 1e-6");
    assert!(
        srtm <= rtm,
        "sparsified RTM {srtm:e} must not exceed RTM {rtm:e}"
    );
    assert!(
        (7e-4..=7e-2).contains(&fdm),
        "FDM weight RMSE {fdm:e} outside [7e-4, 7e-2]"
    );
    assert!(klm <= 1e-3, "KLM weight RMSE {klm:e} must be <= 1e-3");
    pass(
        "01 (Van der Pol gamma=50)",
        start,
        30.0,
        &format!("RTM {rtm:.2e}, SRTM {srtm:.2e}, FDM {fdm:.2e}, KLM {klm:.2e}"),
    );
}

#[test]
fn criterion_02_vdp_method_ordering() {
    let start = Instant::now();
    let rows = bench_single(
        "vdp",
        &[10.0, 50.0, 100.0],
        &[BenchMethod::Rtm, BenchMethod::Klm, BenchMethod::Fdm],
    );
    let mut detail = String::new();
    for &gamma in &[10.0, 50.0, 100.0] {
        let rtm = row(&rows, BenchMethod::Rtm, gamma).rmse_weights.unwrap();
        let klm = row(&rows, BenchMethod::Klm, gamma).rmse_weights.unwrap();
        let fdm = row(&rows, BenchMethod::Fdm, gamma).rmse_weights.unwrap();
        assert!(
            rtm <= klm && klm <= fdm,
            "gamma={gamma}: want RTM {rtm:e} <= KLM {klm:e} <= FDM {fdm:e}"
        );
        detail.push_str(&format!("g{gamma}: {rtm:.1e}<={klm:.1e}<={fdm:.1e} "));
    }
    pass(
        "02 (RTM <= KLM <= FDM at every gamma)",
        start,
        120.0,
        detail.trim(),
    );
}

#[test]
fn criterion_03_mu_sweep_interior_minimum() {
    let start = Instant::now();
    let mut cfg = SweepConfig::default_vdp();
    cfg.seed = SEED;
    cfg.timing = false;
    let report = run_sweep(&cfg, None).expect("sweep");
    assert_eq!(report.rows.len(), 16);
    let errs: Vec<f64> = report.rows.iter().map(|r| r.rmse_weights).collect();
    let argmin = errs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let min = errs[argmin];
    assert!(
        argmin > 0 && argmin < errs.len() - 1,
        "minimum at grid index {argmin} is not interior"
    );
    assert!(min <= 1e-6, "minimum weight RMSE {min:e} must be <= 1e-6");
    assert!(
        min < errs[0] && min < errs[errs.len() - 1],
        "interior min must beat both endpoints"
    );
    pass(
        "03 (mu sweep, interior minimum)",
        start,
        180.0,
        &format!(
            "min {min:.2e} at mu={}, endpoints {:.2e}/{:.2e}",
            report.rows[argmin].mu,
            errs[0],
            errs[errs.len() - 1]
        ),
    );
}

#[test]
fn criterion_04_scaled_lorenz63_attractor() {
    let start = Instant::now();
    let rows = bench_single("lorenz63_scaled", &[100.0], &[BenchMethod::Rtm]);
    let r = row(&rows, BenchMethod::Rtm, 100.0);
    let weights = r.rmse_weights.expect("weights");
    let flow = r.rmse_flow.expect("flow");
    let blowups = r.blowups.unwrap();
    assert!(weights <= 1e-5, "weight RMSE {weights:e} must be <= 1e-5");
    assert_eq!(
        blowups, 0,
        "predicted trajectories must stay bounded over T_s = 100"
    );
    assert!(
        flow <= 1e-3,
        "flow RMSE {flow:e} over T_s = 100 must be <= 1e-3"
    );
    pass(
        "04 (scaled Lorenz-63, T_s = 100)",
        start,
        300.0,
        &format!("weights {weights:.2e}, flow {flow:.2e}, blowups {blowups}"),
    );
}

#[test]
fn criterion_05_cubic_bifurcation() {
    let start = Instant::now();
    let rows = bench_single("cubic1d", &[50.0], &[BenchMethod::Rtm]);
    let weights = row(&rows, BenchMethod::Rtm, 50.0)
        .rmse_weights
        .expect("weights");
    assert!(weights <= 1e-5, "weight RMSE {weights:e} must be <= 1e-5");
    pass(
        "05 (1-D cubic at the bifurcation point)",
        start,
        10.0,
        &format!("weights {weights:.2e}"),
    );
}

#[test]
fn criterion_06_lorenz96_scale() {
    let start = Instant::now();
    let rows = bench_single("lorenz96", &[50.0], &[BenchMethod::Rtm, BenchMethod::Fdm]);
    let rtm = row(&rows, BenchMethod::Rtm, 50.0)
        .rmse_weights
        .expect("RTM weights");
    let fdm = row(&rows, BenchMethod::Fdm, 50.0)
        .rmse_weights
        .expect("FDM weights");
    assert!(rtm <= 1e-5, "RTM weight RMSE {rtm:e} must be <= 1e-5");
    assert!(
        fdm >= 100.0 * rtm,
        "FDM {fdm:e} must be >= 100x RTM {rtm:e}"
    );
    pass(
        "06 (Lorenz-96 d=6, M=4096)",
        start,
        600.0,
        &format!("RTM {rtm:.2e}, FDM {fdm:.2e} ({:.0}x)", fdm / rtm),
    );
}

#[test]
fn criterion_07_linear_oracle_exactness() {
    let start = Instant::now();
    let dom = BoxDomain::centered(1, 1.0);
    let initials = sample_initial_conditions(&dom, 60, SEED);
    let dict = Dictionary::monomial_total_degree(1, 3);
    let mut detail = String::new();
    for a in [-1.0f64, -0.5] {
        // RTM on exact flows: eigenvalues {0, a, 2a, 3a} within 1e-4
        let ds = SnapshotDataset::from_flow_map("linear", &initials, 1.0, 25, |t, x0| {
            vec![x0[0] * (a * t).exp()]
        });
        let cfg = RtmConfig {
            mu: 2.5,
            gamma_count: 25,
            ..Default::default()
        };
        let l = rtm::learn(&ds, &dict, &cfg).unwrap().generator.matrix;
        let eig = linalg::complex_eig(&l).unwrap();
        let mut re: Vec<f64> = eig.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        let mut want = vec![0.0, a, 2.0 * a, 3.0 * a];
        want.sort_by(f64::total_cmp);
        let mut max_dev = 0.0f64;
        for (got, w) in re.iter().zip(&want) {
            assert!(
                eig.eigenvalues.iter().all(|z| z.im.abs() < 1e-6),
                "spectrum must be real"
            );
            let dev = (got - w).abs();
            assert!(dev < 1e-4, "a={a}: eigenvalue {got} vs {w}");
            max_dev = max_dev.max(dev);
        }
        detail.push_str(&format!("a={a}: spec dev {max_dev:.1e} "));

        // KLM recovers the generator exactly, independent of tau
        let x0m = DenseMatrix::from_rows(&initials);
        let x = dict.evaluate_batch(&x0m);
        let mut fdm_errs = Vec::new();
        for tau in [0.1f64, 0.05, 0.025] {
            let xt =
                DenseMatrix::from_fn(initials.len(), 1, |i, _| initials[i][0] * (a * tau).exp());
            let phi = dict.evaluate_batch(&xt);
            let k = baselines::edmd_learn(&x, &phi, tau, &dict).unwrap();
            let klm = baselines::klm_learn(&k).unwrap();
            let mut dev = 0.0f64;
            for n in 0..4 {
                dev = dev.max((klm.matrix[(n, n)] - a * n as f64).abs());
            }
            assert!(dev < 1e-8, "KLM at tau={tau}: diagonal deviation {dev:e}");
            // FDM error on the x-slot scales ~ tau
            let fdm = baselines::fdm_learn(&k);
            fdm_errs.push((fdm.matrix[(1, 1)] - a).abs());
        }
        for pair in fdm_errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!(
                (1.8..=2.2).contains(&ratio),
                "a={a}: FDM halving ratio {ratio} outside [1.8, 2.2]"
            );
        }
    }
    pass("07 (linear-oracle exactness)", start, 120.0, detail.trim());
}

#[test]
fn criterion_08_quadrature_suite() {
    let start = Instant::now();
    // polynomial exactness to degree 2*gamma - 1 at 1e-11 relative
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(SEED);
    for gamma in 1..=12usize {
        let deg = 2 * gamma - 1;
        let coeffs: Vec<f64> = (0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rule = quadrature::gl_rule(2.0, gamma);
        let vals: Vec<f64> = rule
            .nodes
            .iter()
            .map(|&t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
            .collect();
        let got = quadrature::gl_integrate(&rule, &vals).unwrap();
        let want: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * 2.0f64.powi(k as i32 + 1) / (k as f64 + 1.0))
            .sum();
        assert!(
            (got - want).abs() <= 1e-11 * want.abs().max(1.0),
            "gamma={gamma}: {got} vs {want}"
        );
    }
    // coefficient bound holds through k = 20
    let rows = quadrature::gl_coefficient_bound_check(20).unwrap();
    assert_eq!(rows.len(), 20);
    pass(
        "08 (quadrature suite)",
        start,
        60.0,
        "exactness to 2G-1; E(k) <= (1/(8k^2))^k for k <= 20",
    );
}

#[test]
fn criterion_09_pinv_axioms_and_log_exp() {
    let start = Instant::now();
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    let mut rng = ChaCha12Rng::seed_from_u64(SEED);
    for &(r, c) in &[(8usize, 5usize), (5, 8), (12, 12), (50, 30)] {
        let a = DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let p = linalg::pinv(&a, linalg::DEFAULT_RCOND).unwrap();
        let tol = 1e-9 * a.max_abs().max(p.max_abs()).max(1.0);
        assert!(a.matmul(&p).matmul(&a).sub(&a).max_abs() < tol);
        assert!(p.matmul(&a).matmul(&p).sub(&p).max_abs() < tol);
        let ap = a.matmul(&p);
        let pa = p.matmul(&a);
        assert!(ap.sub(&ap.transpose()).max_abs() < tol);
        assert!(pa.sub(&pa.transpose()).max_abs() < tol);
    }
    // log(exp(S)) = S at 1e-8 on random diagonalizable matrices
    let mut max_dev = 0.0f64;
    for _ in 0..5 {
        let mut s = DenseMatrix::from_fn(5, 5, |_, _| rng.random_range(-0.6..0.6));
        for i in 0..5 {
            for j in 0..i {
                let m = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = m;
                s[(j, i)] = m;
            }
        }
        let (re, im) = linalg::matrix_log(&linalg::matrix_exp(&s).unwrap()).unwrap();
        let dev = re.sub(&s).max_abs().max(im.max_abs());
        assert!(dev < 1e-8, "roundtrip deviation {dev:e}");
        max_dev = max_dev.max(dev);
    }
    pass(
        "09 (Moore-Penrose axioms, log/exp roundtrip)",
        start,
        60.0,
        &format!("roundtrip dev <= {max_dev:.1e}"),
    );
}

#[test]
fn criterion_10_permutation_equivariance() {
    let start = Instant::now();
    let dom = BoxDomain::centered(1, 1.0);
    let initials = sample_initial_conditions(&dom, 30, SEED + 1);
    let ds = SnapshotDataset::from_flow_map("linear", &initials, 1.0, 15, |t, x0| {
        vec![x0[0] * (-t).exp()]
    });
    let cfg = RtmConfig {
        mu: 2.5,
        gamma_count: 15,
        ..Default::default()
    };
    let dict = Dictionary::monomial_total_degree(1, 2);
    let l = rtm::learn(&ds, &dict, &cfg).unwrap().generator.matrix;
    let pi = [2usize, 0, 1];
    let dict_p = Dictionary::Monomial {
        dim: 1,
        exponents: pi.iter().map(|&i| vec![i as u32]).collect(),
    };
    let l_p = rtm::learn(&ds, &dict_p, &cfg).unwrap().generator.matrix;
    let mut max_dev = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            max_dev = max_dev.max((l_p[(i, j)] - l[(pi[i], pi[j])]).abs());
        }
    }
    assert!(max_dev <= 1e-12, "equivariance deviation {max_dev:e}");
    pass(
        "10 (dictionary-permutation equivariance)",
        start,
        30.0,
        &format!("dev {max_dev:.1e}"),
    );
}

#[test]
fn criterion_11_zubov_oracle() {
    let start = Instant::now();
    // exact generator of f(x) = -x projected onto a rich tanh dictionary
    let dict = Dictionary::tanh_random(1, 40, 11, 1.0, 1.0);
    let n = dict.size();
    let pts = 401;
    let mut z = DenseMatrix::zeros(pts, n);
    let mut y = DenseMatrix::zeros(pts, n);
    for p in 0..pts {
        let x = -1.0 + 2.0 * p as f64 / (pts - 1) as f64;
        let mut row = vec![0.0; n];
        dict.evaluate_point(&[x], &mut row);
        z.row_mut(p).copy_from_slice(&row);
        let g = dict.gradient_point(&[x]);
        for i in 0..n {
            y[(p, i)] = g[(i, 0)] * (-x);
        }
    }
    let (l, _) = linalg::lstsq(&z, &y, linalg::DEFAULT_RCOND).unwrap();
    let gen = koopgen::rtm::LearnedGenerator {
        matrix: l,
        method: koopgen::rtm::GeneratorMethod::Rtm,
        imag_norm: 0.0,
        dictionary: dict.clone(),
        provenance: koopgen::rtm::Provenance {
            system: "linear1d".into(),
            m: 0,
            config: RtmConfig::default(),
            seed: Some(SEED),
            diagnostics: None,
        },
    };
    // globally stable oracle: the domain boundary is interior to the RoA, so
    // the boundary rows are disabled for this check
    let domain = BoxDomain::centered(1, 1.0);
    let mut prob = ZubovProblem::on_lattice(&domain, 401, vec![0.0], 0.05, 0.1);
    prob.weights = (1.0, 100.0, 0.0);
    prob.boundary.clear();
    let sol = zubov::zubov_solve(&gen, &prob).unwrap();
    assert!(
        sol.residual_rms <= 1e-3,
        "residual RMS {:e}",
        sol.residual_rms
    );
    let mut sup = 0.0f64;
    for k in 0..=360 {
        let x = -0.9 + k as f64 * 0.005;
        let u = zubov::eval_u(&dict, &sol.theta, &[x]);
        let truth = 1.0 - (-0.05 * x * x).exp();
        sup = sup.max((u - truth).abs());
    }
    assert!(sup <= 1e-3, "sup-norm error {sup:e} on [-0.9, 0.9]");
    let lattice = Lattice::new(domain, vec![201]);
    let mask = zubov::roa_extract(&sol, &dict, &lattice, &[0.0], 0.05).unwrap();
    let coverage = mask.cells_inside as f64 / lattice.len() as f64;
    assert!(
        coverage >= 0.95,
        "RoA covers {:.1}% of the lattice",
        100.0 * coverage
    );
    pass(
        "11 (Zubov 1-D oracle)",
        start,
        60.0,
        &format!(
            "sup err {sup:.2e}, residual {:.2e}, coverage {:.0}%",
            sol.residual_rms,
            100.0 * coverage
        ),
    );
}

#[test]
fn criterion_12_bench_determinism() {
    let start = Instant::now();
    let out_root = std::env::temp_dir().join(format!("koopgen_determinism_{}", std::process::id()));
    let cfg_path = out_root.join("bench.json");
    std::fs::create_dir_all(&out_root).unwrap();
    let cfg = serde_json::json!({
        "seed": 42,
        "preset": "desk",
        "timing": false,
        "entries": [{
            "system": "cubic1d",
            "gamma": [10.0, 50.0],
            "m": 10,
            "eval_trajectories": 20,
            "methods": ["RTM", "FDM", "KLM", "SINDY"]
        }]
    });
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let bin = env!("CARGO_BIN_EXE_koopgen");
    let mut csvs = Vec::new();
    for run in 0..2 {
        let out = out_root.join(format!("run{run}"));
        let status = std::process::Command::new(bin)
            .args(["bench", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .status()
            .expect("bench run");
        assert!(status.success(), "bench exited with {status}");
        csvs.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(
        csvs[0], csvs[1],
        "two bench runs must produce byte-identical metrics.csv"
    );
    let lines = csvs[0].split(|&b| b == b'\n').count();
    std::fs::remove_dir_all(&out_root).ok();
    pass(
        "12 (bench determinism)",
        start,
        120.0,
        &format!("byte-identical metrics.csv ({lines} lines)"),
    );
}

#[test]
fn criterion_13_desk_scale_table_rows() {
    let start = Instant::now();
    let cfg = BenchConfig {
        seed: SEED,
        preset: Preset::Desk,
        timing: false,
        threads: None,
        entries: vec![
            BenchEntryFile {
                system: "yeast7".into(),
                gamma: Some(vec![50.0]),
                m: Some(2000),
                methods: Some(vec![
                    BenchMethod::Sindy,
                    BenchMethod::Fdm,
                    BenchMethod::Klm,
                    BenchMethod::Rtm,
                ]),
                ..Default::default()
            },
            BenchEntryFile {
                system: "rational2d_tanh".into(),
                gamma: Some(vec![50.0]),
                ..Default::default()
            },
            BenchEntryFile {
                system: "two_machine".into(),
                gamma: Some(vec![50.0]),
                ..Default::default()
            },
        ],
    };
    let report = run_bench(&cfg, None).expect("desk-scale tables");
    assert_eq!(report.rows.len(), 10);
    let mut klm_imag_reported = false;
    for row in &report.rows {
        // a well-formed row: either a failure is recorded, or the flow RMSE
        // is present; weight RMSE must be absent (no polynomial truth here)
        assert!(
            row.rmse_weights.is_none(),
            "{}: unexpected weight truth",
            row.system
        );
        if row.status == "ok" {
            assert!(
                row.rmse_flow.is_some(),
                "{} {}: missing flow RMSE",
                row.system,
                row.method
            );
        } else {
            assert!(
                row.status.starts_with("failed:"),
                "{}: malformed status",
                row.status
            );
        }
        if row.method == BenchMethod::Klm && row.status == "ok" {
            let imag = row
                .imag_norm
                .expect("KLM rows report the imaginary magnitude");
            if imag > 0.0 {
                klm_imag_reported = true;
            }
        }
    }
    assert!(
        klm_imag_reported,
        "at least one KLM cell reports a nonzero imaginary magnitude"
    );
    let ok = report.rows.iter().filter(|r| r.status == "ok").count();
    pass(
        "13 (yeast7 + tanh tables at desk scale)",
        start,
        600.0,
        &format!(
            "{ok}/{} rows ok, KLM imaginary magnitudes reported",
            report.rows.len()
        ),
    );
}
