//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p sdecade --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use sdecade::Rayon;
use sdecade_core::cascade_ode::solve_activation;
use sdecade_core::cascade_sim::{simulate_paired, verify_simulation_with, SimulationSetup};
use sdecade_core::fit::{fit_with, mse, sphere_inputs, Dataset, FitProblem, Optimizer};
use sdecade_core::fk_pde::{scalar_linear_spread, solve_fk, GeneratorCoefficients1D, Grid1D};
use sdecade_core::lie::{
    fitted_degree, iterated_ad, skew_basis, vf_bracket, Generators, NeuralField, ThetaParams,
};
use sdecade_core::linalg::{expm, orthogonality_defect};
use sdecade_core::realization::{realize_mc_with, ReadoutSpec};
use sdecade_core::sde::{
    ito_correction, sample_path, BrownianIncrements, GeneralFields, MatrixFn, Potential, SdeModel, TimeGrid,
    VectorFn,
};
use sdecade_core::{Activation, SeedRecord, StreamLabel};

type Check = fn() -> Verdict;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn scalar_linear(theta1: f64, theta2: f64, w0: f64) -> SdeModel {
    SdeModel::linear(
        Generators {
            drift: DMatrix::from_element(1, 1, theta1),
            diffusion: vec![DMatrix::from_element(1, 1, theta2)],
        },
        DMatrix::from_element(1, 1, w0),
    )
    .unwrap()
}

fn brockett_theta() -> ThetaParams {
    ThetaParams::new(2, 3, vec![0.1, -0.2, 0.05, 0.7, 0.2, -0.3, -0.1, 0.6, 0.4]).unwrap()
}

fn manifold_preservation() -> Verdict {
    let start = Instant::now();
    let grid = TimeGrid::unit(1000);
    let theta = brockett_theta();
    let sphere = SdeModel::linear_from_theta(&theta, &skew_basis(3), DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]))
        .unwrap();
    let group = SdeModel::linear_from_theta(&theta, &skew_basis(3), DMatrix::identity(3, 3)).unwrap();
    let (mut norm_dev, mut gram_dev) = (0.0f64, 0.0f64);
    for nu in 0..10 {
        let s = sample_path(&sphere, &grid, SeedRecord::path(1, nu)).unwrap();
        norm_dev = s.states.iter().map(|w| (w.norm() - 1.0).abs()).fold(norm_dev, f64::max);
        let g = sample_path(&group, &grid, SeedRecord::path(2, nu)).unwrap();
        gram_dev = g.states.iter().map(orthogonality_defect).fold(gram_dev, f64::max);
    }
    let t = secs(start.elapsed());
    verdict(
        norm_dev <= 1e-12 && gram_dev <= 1e-11 && t < 1.0,
        format!("sphere ||W|-1| max {norm_dev:.2e} <= 1e-12, O(3) |W'W-I| max {gram_dev:.2e} <= 1e-11, 10+10 paths of 1000 steps in {t:.2}s < 1s"),
    )
}

fn ito_correction_check() -> Verdict {
    let start = Instant::now();
    let theta = brockett_theta();
    let basis = skew_basis(3);
    let model = SdeModel::linear_from_theta(&theta, &basis, DMatrix::identity(3, 3)).unwrap();
    let w = DMatrix::from_row_slice(3, 2, &[0.3, -1.0, 0.8, 0.2, -0.5, 1.4]);
    let got = ito_correction(&model, &w).unwrap();
    let gens = sdecade_core::lie::assemble_generators(&theta, &basis).unwrap();
    let mut oracle = &gens.drift * &w;
    for b in &gens.diffusion {
        oracle += (b * (b * &w)) * 0.5;
    }
    let linear_err = (got - oracle).amax();

    // a nonlinear model with analytic Jacobians against central differences
    let b0: VectorFn = Arc::new(|w: &DVector<f64>| v(&[w[1].sin(), w[0] * w[1]]));
    let b1: VectorFn = Arc::new(|w: &DVector<f64>| v(&[(w[0] * w[0]).tanh(), 0.5 * w[0] - w[1].cos()]));
    let j0: MatrixFn = Arc::new(|w: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[0.0, w[1].cos(), w[1], w[0]]));
    let j1: MatrixFn = Arc::new(|w: &DVector<f64>| {
        let s = 1.0 - (w[0] * w[0]).tanh().powi(2);
        DMatrix::from_row_slice(2, 2, &[2.0 * w[0] * s, 0.0, 0.5, w[1].sin()])
    });
    let drift: VectorFn = Arc::new(|w: &DVector<f64>| v(&[-w[0], 0.3 * w[1] * w[1]]));
    let fields = GeneralFields {
        dim: 2,
        drift: drift.clone(),
        diffusion: vec![b0.clone(), b1.clone()],
        diffusion_jacobians: Some(vec![j0, j1]),
    };
    let general = SdeModel::general(fields, v(&[0.0, 0.0])).unwrap();
    let mut general_err = 0.0f64;
    for p in [[0.4, -0.7], [1.2, 0.3], [-0.9, 2.0]] {
        let w = v(&p);
        let got = ito_correction(&general, &DMatrix::from_column_slice(2, 1, &p)).unwrap();
        let mut oracle = drift(&w);
        let eps = 1e-6;
        for b in [&b0, &b1] {
            let bw = b(&w);
            let (wp, wm) = (&w + &bw * eps, &w - &bw * eps);
            oracle += (b(&wp) - b(&wm)) / (2.0 * eps) * 0.5;
        }
        general_err = general_err.max((DVector::from_column_slice(got.as_slice()) - oracle).amax());
    }
    let t = secs(start.elapsed());
    verdict(
        linear_err <= 1e-13 && general_err <= 1e-6 && t < 1.0,
        format!("linear |err| {linear_err:.2e} <= 1e-13, general vs finite differences {general_err:.2e} <= 1e-6, {t:.2}s < 1s"),
    )
}

fn feynman_kac_cross_validation() -> Verdict {
    let start = Instant::now();
    let model = scalar_linear(-0.2, 0.4, 1.0);
    let x = 0.9;
    let (mean, sd) = scalar_linear_spread(&model).unwrap();
    let grid = Grid1D::centered(1.0, (mean - 1.0).abs() + 6.0 * sd, 801, 400).unwrap();
    let coeffs = GeneratorCoefficients1D::from_model(&model).unwrap();
    let pde = solve_fk(&coeffs, &Potential::Zero, &Activation::Tanh, x, &grid).unwrap();
    let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh };
    let mc = realize_mc_with(&Rayon, &model, &readout, &Potential::Zero, &v(&[x]), 100_000, &TimeGrid::unit(256), 3)
        .unwrap();
    let gap = (pde - mc.mean).abs();
    let bound = 3.0 * mc.stderr + 1e-3;
    let t = secs(start.elapsed());
    verdict(
        gap <= bound && t < 60.0,
        format!("PDE {pde:.6} vs MC {:.6} (N=1e5, M=801): gap {gap:.2e} <= 3*stderr+1e-3 = {bound:.2e}, {t:.1}s < 60s", mc.mean),
    )
}

fn closed_form_moment() -> Verdict {
    let start = Instant::now();
    let (t1, t2, w0, x) = (0.15, 0.5, 1.3, 0.7);
    let model = scalar_linear(t1, t2, w0);
    let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Identity };
    let mc = realize_mc_with(&Rayon, &model, &readout, &Potential::Zero, &v(&[x]), 100_000, &TimeGrid::unit(256), 4)
        .unwrap();
    let exact = x * w0 * (t1 + 0.5 * t2 * t2).exp();
    let z = (mc.mean - exact).abs() / mc.stderr;
    let t = secs(start.elapsed());
    verdict(
        z <= 3.0 && t < 30.0,
        format!("MC {:.6} vs x*w0*exp(t1+t2^2/2) = {exact:.6}: {z:.2} stderr <= 3, {t:.1}s < 30s", mc.mean),
    )
}

fn constant_potential_factorization() -> Verdict {
    let model = SdeModel::linear_from_theta(
        &brockett_theta(),
        &skew_basis(3),
        DMatrix::from_column_slice(3, 1, &[0.0, 0.6, 0.8]),
    )
    .unwrap();
    let readout = ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh };
    let grid = TimeGrid::unit(64);
    let mut worst = 0.0f64;
    for x in [v(&[1.0, 0.0, 0.0]), v(&[0.3, -0.4, 0.5])] {
        let base = realize_mc_with(&Rayon, &model, &readout, &Potential::Zero, &x, 2000, &grid, 9).unwrap();
        for c in [-1.3, 0.25, 2.0] {
            let w = realize_mc_with(&Rayon, &model, &readout, &Potential::Constant(c), &x, 2000, &grid, 9).unwrap();
            let expected = c.exp() * base.mean;
            worst = worst.max((w.mean - expected).abs() / expected.abs());
        }
    }
    verdict(worst <= 1e-12, format!("max relative deviation from e^c factor {worst:.2e} <= 1e-12"))
}

fn cascade_ode_oracle() -> Verdict {
    let w = DMatrix::from_row_slice(3, 3, &[0.2, -0.9, 0.1, 0.7, -0.3, 0.4, -0.5, 0.6, 0.1]);
    let still = SdeModel::linear(
        Generators { drift: DMatrix::zeros(3, 3), diffusion: vec![DMatrix::zeros(3, 3)] },
        w.clone(),
    )
    .unwrap();
    let x = v(&[1.0, -0.5, 0.25]);
    let frozen = sample_path(&still, &TimeGrid::unit(256), SeedRecord::path(0, 0)).unwrap();
    let z1 = solve_activation(&frozen, &x, &Activation::Identity).unwrap().terminal().clone();
    let exact = expm(&w) * &x;
    let rel = (z1 - &exact).norm() / exact.norm();

    let theta = ThetaParams::new(2, 3, vec![0.3, -0.6, 0.2, 0.9, -0.4, 0.5, 0.1, 0.8, -0.7]).unwrap();
    let model = SdeModel::linear_from_theta(&theta, &skew_basis(3), DMatrix::identity(3, 3)).unwrap();
    let coarse = sample_path(&model, &TimeGrid::unit(16), SeedRecord::path(4, 0)).unwrap();
    let x = v(&[0.9, -0.4, 0.6]);
    let solve = |factor| {
        let traj = coarse.resample_linear(factor).unwrap();
        solve_activation(&traj, &x, &Activation::Tanh).unwrap().terminal().clone()
    };
    let (z64, z128, z256) = (solve(4), solve(8), solve(16));
    let ratio = (&z64 - &z128).norm() / (&z128 - &z256).norm();
    verdict(
        rel <= 1e-8 && (8.0..=32.0).contains(&ratio),
        format!("constant W: |Z1-exp(W)x|/|exp(W)x| = {rel:.2e} <= 1e-8 at K=256; RK4 self-convergence factor {ratio:.2} in [8, 32]"),
    )
}

fn cascade_simulation() -> Verdict {
    let start = Instant::now();
    let abelian = SimulationSetup::new(
        vec![DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]), DMatrix::identity(2, 2)],
        DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.25]),
        Some(Arc::new(|x: &DVector<f64>| x * -0.5) as VectorFn),
        v(&[1.0, -0.5]),
        4.0,
        4.0,
    )
    .unwrap();
    let scalar = SimulationSetup::new(
        vec![DMatrix::identity(1, 1)],
        DMatrix::from_element(1, 1, 0.5),
        Some(Arc::new(|x: &DVector<f64>| -x) as VectorFn),
        v(&[1.0]),
        4.0,
        4.0,
    )
    .unwrap();
    let e = |i: usize, j: usize| {
        let mut m = DMatrix::zeros(3, 3);
        m[(i, j)] = 1.0;
        m
    };
    let heisenberg = SimulationSetup::new(
        vec![e(0, 1), e(1, 2), e(0, 2)],
        DMatrix::from_row_slice(2, 3, &[0.5, 0.0, 0.0, 0.0, 0.5, 0.0]),
        None,
        v(&[1.0, 1.0, 1.0]),
        4.0,
        4.0,
    )
    .unwrap();

    let mut ok = true;
    let mut parts = Vec::new();
    let k512 = TimeGrid::unit(512);
    for (name, s, x) in [("abelian", &abelian, v(&[1.0, 0.5])), ("scalar", &scalar, v(&[0.8]))] {
        let report = verify_simulation_with(&Rayon, s, &x, &k512, 21, 100).unwrap();
        let mut coarse = 0.0;
        let mut fine = 0.0;
        for nu in 0..100 {
            let inc = BrownianIncrements::sample(k512, s.m(), SeedRecord::path(21, nu));
            let refined = inc.refine(SeedRecord::labeled(21, StreamLabel::Refinement, nu));
            coarse += simulate_paired(s, &x, &inc).unwrap().sup_gap(s).unwrap();
            fine += simulate_paired(s, &x, &refined).unwrap().sup_gap(s).unwrap();
        }
        let ratio = fine / coarse;
        ok &= report.gap_max <= 2e-3 && (0.3..=0.7).contains(&ratio);
        parts.push(format!("{name} gap max {:.2e} <= 2e-3, K->2K ratio {ratio:.2} in [0.3,0.7]", report.gap_max));
    }
    let report = verify_simulation_with(&Rayon, &heisenberg, &v(&[0.5, -1.0, 1.0]), &TimeGrid::unit(1024), 22, 100).unwrap();
    let dev = report.b_deviation.unwrap_or(f64::INFINITY);
    ok &= report.gap_max <= 5e-3 && dev <= 1e-8;
    parts.push(format!("nilpotent gap max {:.2e} <= 5e-3, b probe deviation {dev:.2e} <= 1e-8", report.gap_max));
    let t = secs(start.elapsed());
    ok &= t < 120.0;
    parts.push(format!("{t:.1}s < 120s"));
    verdict(ok, parts.join("; "))
}

fn bracket_suite() -> Verdict {
    let w = DMatrix::from_row_slice(3, 3, &[0.4, -0.2, 0.7, 0.1, 0.5, -0.3, -0.6, 0.2, 0.3]);
    let w2 = DMatrix::from_row_slice(3, 3, &[-0.3, 0.8, 0.1, 0.2, -0.1, 0.6, 0.5, 0.4, -0.2]);
    let points = [v(&[0.3, -0.5, 0.9]), v(&[-1.1, 0.2, 0.4]), v(&[0.0, 0.7, -0.6])];

    let g = NeuralField::new(w.clone(), Activation::Tanh);
    let g2 = NeuralField::new(w2.clone(), Activation::Tanh);
    let gi = NeuralField::new(w.clone(), Activation::Identity);
    let gi2 = NeuralField::new(w2.clone(), Activation::Identity);
    let (mut antisym, mut commutator, mut fd) = (0.0f64, 0.0f64, 0.0f64);
    for z in &points {
        let ab = vf_bracket(&g, &g2, z).unwrap();
        let ba = vf_bracket(&g2, &g, z).unwrap();
        antisym = antisym.max((&ab + &ba).amax());
        let lin = vf_bracket(&gi, &gi2, z).unwrap();
        commutator = commutator.max((lin - (&w2 * &w - &w * &w2) * z).amax());
        // finite-difference Jacobians as the oracle
        let eps = 1e-6;
        let dir = |f: &NeuralField, d: &DVector<f64>| (f.eval(&(z + d * eps)).unwrap() - f.eval(&(z - d * eps)).unwrap()) / (2.0 * eps);
        let oracle = dir(&g2, &g.eval(z).unwrap()) - dir(&g, &g2.eval(z).unwrap());
        fd = fd.max((ab - oracle).amax());
    }

    let c = NeuralField::new(DMatrix::from_element(1, 1, 1.0), Activation::CubicPlusOne);
    let c2 = NeuralField::new(DMatrix::from_element(1, 1, 2.0), Activation::CubicPlusOne);
    let pts: Vec<f64> = (0..11).map(|i| -1.0 + 0.21 * i as f64).collect();
    let degrees: Vec<usize> = (1..=3)
        .map(|k| {
            let vals: Vec<f64> = pts.iter().map(|&p| iterated_ad(&c, &c2, k, &v(&[p])).unwrap()[0]).collect();
            fitted_degree(&pts, &vals, 1e-9).unwrap()
        })
        .collect();
    let increasing = degrees.windows(2).all(|d| d[0] < d[1]);
    verdict(
        antisym <= 1e-12 && commutator <= 1e-12 && fd <= 1e-6 && increasing,
        format!(
            "antisymmetry {antisym:.2e} <= 1e-12, identity commutator {commutator:.2e} <= 1e-12, finite differences {fd:.2e} <= 1e-6, cubic degrees k=1..3 {degrees:?} strictly increasing"
        ),
    )
}

fn fit_problem(seed: u64) -> FitProblem {
    FitProblem {
        basis: skew_basis(3),
        w0: DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
        readout: ReadoutSpec::ScalarNeuron { sigma: Activation::Tanh },
        potential: Potential::Zero,
        grid: TimeGrid::unit(32),
        paths: 2000,
        seed,
    }
}

const FIT_OPTIMIZER: Optimizer = Optimizer::CentralDifference { learning_rate: 1.0, step: 1e-4, momentum: 0.5 };
const FIT_ITERATIONS: usize = 30;

fn sphere_fit() -> Verdict {
    let start = Instant::now();
    let problem = fit_problem(77);
    let target = v(&[0.8, -0.36, 0.48]);
    let inputs = sphere_inputs(3, 1000, 2024);
    let f = |x: &DVector<f64>| target.dot(x).tanh();
    let train = Dataset::from_fn(inputs[..500].to_vec(), true, f).unwrap();
    let test = Dataset::from_fn(inputs[500..].to_vec(), true, f).unwrap();
    let theta0 = ThetaParams::new(2, 3, vec![0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.3, 0.0]).unwrap();
    let trace = fit_with(&Rayon, &problem, &train, &theta0, &FIT_OPTIMIZER, FIT_ITERATIONS).unwrap();
    let pred = problem.predict_with(&Rayon, &trace.theta, test.inputs()).unwrap();
    let test_mse = mse(&pred, test.targets());
    let factor = test.target_variance() / test_mse;

    let star = ThetaParams::new(2, 3, vec![0.9, -0.4, 0.6, 0.5, 0.2, -0.3, -0.2, 0.6, 0.4]).unwrap();
    let xs = sphere_inputs(3, 500, 31);
    let ys = fit_problem(1234).predict_with(&Rayon, &star, &xs).unwrap();
    let data = Dataset::new(xs, ys, true).unwrap();
    let perturbed: Vec<f64> =
        star.as_slice().iter().enumerate().map(|(i, t)| t + if i % 2 == 0 { 0.6 } else { -0.6 }).collect();
    let theta0 = star.with_coeffs(&perturbed).unwrap();
    let recovery = fit_with(&Rayon, &fit_problem(99), &data, &theta0, &FIT_OPTIMIZER, FIT_ITERATIONS).unwrap();
    let reduction = recovery.initial_loss() / recovery.final_loss();
    let t = secs(start.elapsed());
    verdict(
        factor >= 5.0 && reduction >= 10.0 && t < 600.0,
        format!(
            "S^2 neuron fit: target variance / test MSE = {factor:.1} >= 5 ({} iterations, test MSE {test_mse:.2e}); self-realizable recovery loss {:.2e} -> {:.2e}, reduction {reduction:.1} >= 10; {t:.0}s < 600s",
            FIT_ITERATIONS,
            recovery.initial_loss(),
            recovery.final_loss()
        ),
    )
}

const REPRO_CONFIG: &str = "
model.basis = skew
model.n = 3
model.m = 2
model.theta = 0.1, -0.2, 0.05, 0.7, 0.2, -0.3, -0.1, 0.6, 0.4
model.w0 = 0, 0, 1
grid.steps = 32
readout.kind = scalar_neuron
readout.sigma = tanh
potential.kind = constant
potential.c = -0.3
sampling.paths = 300
sampling.seed = 17
realize.x = 1, 0, 0; 0, 0.6, 0.8
fit.target = neuron
fit.target.w = 0.8, -0.36, 0.48
fit.dataset_size = 40
fit.test_size = 10
fit.iterations = 2
fit.optimizer = spsa
fit.required_improvement = 1e-6
cascade.n = 2
cascade.generators = 0, -1, 1, 0; 1, 0, 0, 1
cascade.beta = 0.3, 0.1; 0.1, 0.25
cascade.drift = -0.5, 0, 0, -0.5
cascade.v = 1, -0.5
cascade.x = 1, 0.5
cascade.r_w = 4
cascade.r_z = 4
cascade.paths = 40
cascade.tolerance = 2e-3
brackets.n = 1
brackets.w = 1
brackets.w2 = 2
brackets.sigma = cubic_plus_one
brackets.k_max = 4
brackets.points = -1; -0.8; -0.6; -0.4; -0.2; 0.1; 0.3; 0.5; 0.7; 0.9; 1.1
";

const FK_CONFIG: &str = "
model.basis = scalar
model.n = 1
model.m = 1
model.theta = -0.2, 0.4
model.w0 = 1
grid.steps = 64
readout.kind = scalar_neuron
potential.kind = none
sampling.paths = 5000
sampling.seed = 3
fk.x = 0.9
fk.nodes = 201
fk.time_steps = 100
";

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map(|rd| {
            rd.map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let main_cfg = tmp.path().join("main.cfg");
    let fk_cfg = tmp.path().join("fk.cfg");
    fs::write(&main_cfg, REPRO_CONFIG).unwrap();
    fs::write(&fk_cfg, FK_CONFIG).unwrap();
    let cases = [
        ("sample", &main_cfg),
        ("realize", &main_cfg),
        ("fit", &main_cfg),
        ("fk-check", &fk_cfg),
        ("cascade-check", &main_cfg),
        ("brackets", &main_cfg),
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (cmd, cfg) in cases {
        let mut outputs = Vec::new();
        for (run, threads) in [(0, 1), (1, 4), (2, 4)] {
            let out = tmp.path().join(format!("{cmd}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_sdecade"))
                .arg(cmd)
                .arg("--config")
                .arg(cfg)
                .arg("--out")
                .arg(&out)
                .env("RAYON_NUM_THREADS", threads.to_string())
                .output()
                .unwrap()
                .status
                .code();
            outputs.push((status, snapshot(&out)));
        }
        files += outputs[0].1.len();
        if outputs[0].1.is_empty() || outputs[0].0 != Some(0) || outputs.iter().any(|o| *o != outputs[0]) {
            mismatches.push(format!("{cmd} (exit {:?})", outputs[0].0));
        }
    }
    verdict(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("6 subcommands x (1 thread, 4 threads, rerun): {files} output files byte-identical")
        } else {
            format!("differences or failures in {}", mismatches.join(", "))
        },
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; only a name filter matters here.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, Check); 10] = [
        ("manifold preservation", manifold_preservation),
        ("Ito correction", ito_correction_check),
        ("Feynman-Kac PDE vs Monte Carlo", feynman_kac_cross_validation),
        ("closed-form moment", closed_form_moment),
        ("constant-potential factorization", constant_potential_factorization),
        ("cascade ODE oracle", cascade_ode_oracle),
        ("cascade simulation", cascade_simulation),
        ("bracket suite", bracket_suite),
        ("S^2 fit and self-realizable recovery", sphere_fit),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "{} {:>2}. {name}: {} [{:.1}s]",
            if outcome.passed { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            secs(start.elapsed())
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
