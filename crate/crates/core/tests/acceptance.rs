//! Acceptance gate. Every criterion prints one `ACCEPTANCE` line with its
//! verdict and the measured numbers, then asserts.
//!
//! Criterion 6 runs in fast mode (4×4 maze) by default; the 6×6 surface is
//! the ignored test `criterion_06_full_surface`.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use qmaze_core::agent::*;
use qmaze_core::env::{EpisodeConfig, Transition};
use qmaze_core::harness::*;
use qmaze_core::lindblad::*;
use qmaze_core::oracle::{classical_ctmc_solve, exhaustive_best_sequence};
use qmaze_core::{Maze, WallAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!("ACCEPTANCE [{id:>2}] {name}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    // straight to the process stdout so the line survives output capture
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {id} failed: {detail}");
}

fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn generator(maze: &Maze, p: f64, sink_rate: f64) -> Generator {
    Generator::new(maze, MixParameter::new(p).unwrap(), sink_rate).unwrap()
}

/// A generated maze with a few random extra toggles.
fn random_graph(rng: &mut ChaCha8Rng) -> Maze {
    let shapes = [(3, 3), (3, 2), (2, 3), (4, 2), (2, 2), (2, 1), (1, 3)];
    let (w, h) = shapes[rng.random_range(0..shapes.len())];
    let mut maze = Maze::generate(w, h, rng.random()).unwrap();
    let edges = maze.candidate_edges().len();
    for _ in 0..rng.random_range(0..=3) {
        maze.apply_action_in_place(WallAction::Toggle(rng.random_range(0..edges))).unwrap();
    }
    maze
}

#[test]
fn criterion_01_integrator_fidelity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..20 {
        let maze = random_graph(&mut rng);
        assert!(maze.node_count() + 1 <= 10);
        for p in [0.0, 0.1, 0.5, 1.0] {
            let g = generator(&maze, p, 1.0);
            for dt in [1.0, 14.0, 28.0] {
                let rho = initial_state(&maze);
                let a = evolve(&g, &rho, dt).unwrap();
                let b = exact_evolve(&g, &rho, dt).unwrap();
                worst = worst.max(max_abs_diff(a.matrix(), b.matrix()));
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        "integrator fidelity",
        worst <= 1e-6 && elapsed < Duration::from_secs(60),
        format!("{cases} cases, max elementwise error {worst:.2e} (tol 1e-6), {:.1}s (limit 60s)", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_02_physicality() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut trace_err, mut herm_err, mut min_eig, mut min_step): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, f64::INFINITY);
    let mut slowest: f64 = 0.0;
    let mut trajectories = 0;
    for (seed, p) in [(1u64, 0.0), (2, 0.1), (3, 0.5), (4, 1.0)] {
        let start = Instant::now();
        let mut maze = Maze::generate(6, 6, seed).unwrap();
        let mut rho = initial_state(&maze);
        let mut escape = 0.0;
        let mut points = 0;
        // eight random actions spaced by 28, 13 samples per interval
        for _ in 0..8 {
            let a = rng.random_range(0..maze.action_count());
            maze.apply_action_in_place(WallAction::from_index(a, maze.candidate_edges().len()).unwrap()).unwrap();
            let samples = evolve_sampled(&generator(&maze, p, 1.0), &rho, 28.0, 13).unwrap();
            for (_, s) in samples.iter().skip(1) {
                trace_err = trace_err.max((s.trace() - C64::new(1.0, 0.0)).norm());
                herm_err = herm_err.max(s.hermiticity_error());
                min_eig = min_eig.min(s.min_eigenvalue());
                let e = escape_probability(s);
                min_step = min_step.min(e - escape);
                escape = e;
                points += 1;
            }
            rho = samples.last().unwrap().1.clone();
        }
        assert!(points >= 100);
        slowest = slowest.max(start.elapsed().as_secs_f64());
        trajectories += 1;
    }
    report(
        2,
        "physicality over T=224 on 6x6",
        trace_err <= 1e-6 && herm_err <= 1e-9 && min_eig >= -1e-6 && min_step >= 0.0 && slowest < 60.0,
        format!(
            "{trajectories} trajectories x 104 points: trace err {trace_err:.1e}, hermiticity {herm_err:.1e}, \
             min eigenvalue {min_eig:.1e}, min escape increment {min_step:.1e}, slowest {slowest:.1}s"
        ),
    );
}

#[test]
fn criterion_03_limit_oracles() {
    let mut classical: f64 = 0.0;
    for seed in [7u64, 11] {
        let maze = Maze::generate(6, 6, seed).unwrap();
        let g = generator(&maze, 1.0, 1.0);
        let ctmc = classical_ctmc_solve(&maze, 224.0).unwrap();
        let rho = evolve(&g, &initial_state(&maze), 224.0).unwrap();
        for (i, pop) in ctmc.last().iter().enumerate() {
            classical = classical.max((rho.population(i) - pop).abs());
        }
        let rho = evolve(&g, &initial_state(&maze), 8.0).unwrap();
        let ctmc = classical_ctmc_solve(&maze, 8.0).unwrap();
        for (i, pop) in ctmc.last().iter().enumerate() {
            classical = classical.max((rho.population(i) - pop).abs());
        }
    }

    let mut purity: f64 = 0.0;
    let maze = Maze::generate(4, 4, 3).unwrap();
    for (_, rho) in evolve_sampled(&generator(&maze, 0.0, 0.0), &initial_state(&maze), 28.0, 28).unwrap() {
        purity = purity.max((rho.purity() - 1.0).abs());
    }

    let chain = Maze::generate(2, 1, 0).unwrap();
    let g = generator(&chain, 0.0, 0.0);
    let mut rabi: f64 = 0.0;
    for (t, rho) in evolve_sampled(&g, &initial_state(&chain), 10.0, 100).unwrap() {
        rabi = rabi.max((rho.population(1) - t.sin().powi(2)).abs());
    }
    report(
        3,
        "limit oracles",
        classical <= 1e-6 && purity <= 1e-6 && rabi <= 1e-6,
        format!("classical |dpop| {classical:.1e}, purity drift {purity:.1e}, Rabi error {rabi:.1e} (all tol 1e-6)"),
    );
}

#[test]
fn criterion_04_learner_toy_scale() {
    // s0 -a0-> s1 (r 1), s0 -a1-> end (r 0.5), s1 -a0-> end (r 0), s1 -a1-> end (r 2); γ = 0.9
    let (s0, s1) = (vec![1.0, 0.0], vec![0.0, 1.0]);
    let owned = [
        Transition { observation: s0.clone(), action: 0, reward: 1.0, next_observation: s1.clone(), done: false },
        Transition { observation: s0.clone(), action: 1, reward: 0.5, next_observation: s0.clone(), done: true },
        Transition { observation: s1.clone(), action: 0, reward: 0.0, next_observation: s1.clone(), done: true },
        Transition { observation: s1.clone(), action: 1, reward: 2.0, next_observation: s1.clone(), done: true },
    ];
    let batch: Vec<&Transition> = owned.iter().collect();
    let cfg = AgentConfig { gamma: 0.9, learning_rate: 5e-3, hidden: vec![16], ..AgentConfig::default() };
    let mut policy = QNetwork::new(2, &cfg.hidden, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut target = policy.clone();
    let mut adam = Adam::new(&policy, cfg.learning_rate);
    for step in 0..6000 {
        train_step(&mut policy, &target, &batch, &cfg, &mut adam).unwrap();
        if step % 50 == 49 {
            sync_target(&policy, &mut target).unwrap();
        }
    }
    let q: Vec<f64> = policy.forward(&s0).unwrap().into_iter().chain(policy.forward(&s1).unwrap()).collect();
    let q_err = q.iter().zip([2.8, 0.5, 0.0, 2.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut grad_err: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let net = QNetwork::new(6, &[10, 8], 4, &mut rng).unwrap();
        assert!(net.parameter_count() <= 500);
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let obs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let actions: Vec<usize> = (0..4).map(|_| rng.random_range(0..4)).collect();
        let targets: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let analytic = net.huber_loss_and_gradient(&obs, &actions, &targets, 1.0).unwrap().1.parameters();
        let theta = net.parameters();
        let mut probe = net.clone();
        for k in 0..theta.len() {
            let mut loss_at = |delta: f64| {
                let mut t = theta.clone();
                t[k] += delta;
                probe.set_parameters(&t).unwrap();
                probe.huber_loss_and_gradient(&obs, &actions, &targets, 1.0).unwrap().0
            };
            let numeric = (loss_at(1e-5) - loss_at(-1e-5)) / 2e-5;
            let scale = analytic[k].abs().max(numeric.abs()).max(1e-6);
            grad_err = grad_err.max((analytic[k] - numeric).abs() / scale);
        }
    }
    report(
        4,
        "learner correctness at toy scale",
        q_err <= 1e-2 && grad_err <= 1e-4,
        format!("max |Q - Q*| {q_err:.1e} (tol 1e-2), max gradient relative error {grad_err:.1e} (tol 1e-4)"),
    );
}

#[test]
fn criterion_05_oracle_optimality() {
    let maze = Maze::generate(3, 3, 0).unwrap();
    let config = EpisodeConfig::equally_spaced(maze, 0.5, 2, 14.0).unwrap();
    let start = Instant::now();
    let oracle = exhaustive_best_sequence(&config).unwrap();
    let ratios: Vec<f64> = (0..5)
        .map(|seed| train(&config, &AgentConfig::default(), 500, seed).unwrap().final_reward / oracle.best_reward)
        .collect();
    let hits = ratios.iter().filter(|&&r| r >= 0.95).count();
    report(
        5,
        "oracle optimality on 3x3, N=2",
        hits >= 4,
        format!(
            "oracle {:.4} over {} sequences; trained/oracle per seed {:?}; {hits}/5 >= 0.95; {:.0}s",
            oracle.best_reward,
            oracle.evaluated,
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(),
            start.elapsed().as_secs_f64()
        ),
    );
}

fn surface_check(maze: &Maze, cfg: &SweepConfig) -> (bool, String) {
    let cells = trained_surface(cfg, maze).unwrap();
    let mut worst_gap = f64::INFINITY;
    let mut failures = 0;
    for c in &cells {
        match c.improvement() {
            Some(d) => worst_gap = worst_gap.min(d),
            None => failures += 1,
        }
    }
    let tau0 = cfg.tau_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let impr = |p: f64| cells.iter().find(|c| c.p == p && c.tau == tau0).and_then(|c| c.improvement()).unwrap_or(f64::NAN);
    let (q, cl) = (impr(0.0), impr(1.0));
    let table: Vec<String> =
        cells.iter().map(|c| format!("({},{})={:+.4}", c.p, c.tau, c.improvement().unwrap_or(f64::NAN))).collect();
    (
        failures == 0 && worst_gap >= -1e-3 && q > cl,
        format!(
            "min(trained - baseline) {worst_gap:+.2e} (slack -1e-3); at tau={tau0}: improvement p=0 {q:.4} vs p=1 {cl:.4}; \
             {failures} failed cells; cells {}",
            table.join(" ")
        ),
    )
}

#[test]
fn criterion_06_surface_fast_mode() {
    let start = Instant::now();
    let maze = Maze::generate(4, 4, 100).unwrap();
    let cfg = SweepConfig { p_grid: vec![0.0, 0.5, 1.0], epochs: 1000, workers: 0, ..SweepConfig::default() };
    let (pass, detail) = surface_check(&maze, &cfg);
    let elapsed = start.elapsed().as_secs_f64();
    report(
        6,
        "trained surface dominates baseline (fast mode, 4x4, N=8)",
        pass && elapsed < 1800.0,
        format!("{detail}; {elapsed:.0}s (limit 1800s)"),
    );
}

#[test]
#[ignore = "hours of compute: full 6x6 surface"]
fn criterion_06_full_surface() {
    let maze = Maze::generate(6, 6, 1).unwrap();
    let cfg = SweepConfig { workers: 0, ..SweepConfig::default() };
    let (pass, detail) = surface_check(&maze, &cfg);
    report(6, "trained surface dominates baseline (6x6, N=8, full grid)", pass, detail);
}

#[test]
fn criterion_07_mean_improvement_dip() {
    let start = Instant::now();
    let mazes: Vec<Maze> = (100..110).map(|s| Maze::generate(4, 4, s).unwrap()).collect();
    let cfg = SweepConfig {
        p_grid: vec![0.0, 0.1, 0.4],
        tau_grid: vec![3.5, 14.0],
        epochs: 300,
        workers: 0,
        ..SweepConfig::default()
    };
    let cells = mean_improvement_surface(&cfg, &mazes).unwrap();
    let failures: usize = cells.iter().map(|c| c.failures).sum();
    let non_negative = cells.iter().all(|c| c.mean() >= 0.0);
    let at = |p: f64| cells.iter().find(|c| c.p == p && c.tau == 14.0).unwrap();
    let (m0, m1, m4) = (at(0.0).mean(), at(0.1).mean(), at(0.4).mean());
    let table: Vec<String> = cells
        .iter()
        .map(|c| format!("({},{}) mean {:+.4} sd {:.4} min {:+.4} max {:+.4}", c.p, c.tau, c.mean(), c.std_dev(), c.min(), c.max()))
        .collect();
    report(
        7,
        "mean improvement over 10 mazes, dip at p=0.1",
        failures == 0 && non_negative && m1 < m0 && m1 < m4,
        format!(
            "largest tau=14: p=0 {m0:.4}, p=0.1 {m1:.4}, p=0.4 {m4:.4}; all means >= 0: {non_negative}; {failures} failed; \
             {}; {:.0}s",
            table.join("; "),
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_08_timing_noise() {
    let maze = Maze::generate(4, 4, 100).unwrap();
    let env = EpisodeConfig::equally_spaced(maze, 0.4, 8, 14.0).unwrap();
    let agent = AgentConfig::default();
    let trained = train(&env, &agent, 500, 0).unwrap();
    let ck = PolicyCheckpoint::new(&trained, &agent, &env, 500, 0);
    let cfg = TimingNoiseConfig { eta_grid: vec![0.0, 0.2, 1.0], realizations: 100, seed: 0, workers: 0 };
    let rows = timing_noise_eval(&cfg, &ck).unwrap();
    let (clean, low, high) = (&rows[0], &rows[1], &rows[2]);
    let drift = (high.mean() - clean.mean()).abs() / clean.mean();
    report(
        8,
        "timing-noise robustness (tau=14, p=0.4)",
        drift <= 0.15 && high.spread() > low.spread(),
        format!(
            "eta=0 mean {:.4}; eta=0.2 mean {:.4} spread {:.4}; eta=1 mean {:.4} spread {:.4}; relative drift {:.3} (tol 0.15)",
            clean.mean(),
            low.mean(),
            low.spread(),
            high.mean(),
            high.spread(),
            drift
        ),
    );
}

#[test]
fn criterion_09_transient_timing() {
    let maze = Maze::generate(4, 4, 100).unwrap();
    let cfg = TransientConfig {
        total_time: 224.0,
        actions: 8,
        scan: TransientScan::Lead,
        values: vec![0.0, 168.0, 224.0],
        p_grid: vec![0.0, 1.0],
        epochs: 500,
        agent: AgentConfig::default(),
        seed: 0,
        workers: 0,
    };
    let rows = transient_eval(&cfg, &maze).unwrap();
    let row = |p: f64, t1: f64| rows.iter().find(|r| r.p == p && r.t1 == t1).unwrap();
    let impr = |p: f64, t1: f64| row(p, t1).reward.unwrap() - row(p, t1).baseline;
    let packed = [0.0, 1.0].iter().map(|&p| (row(p, 224.0).reward.unwrap() - row(p, 224.0).baseline).abs()).fold(0.0, f64::max);
    let degradation = |p: f64| impr(p, 0.0) - impr(p, 168.0);
    let (d0, d1) = (degradation(0.0), degradation(1.0));
    report(
        9,
        "transient timing at T=224",
        packed <= 1e-3 && d1 > d0,
        format!(
            "|reward - baseline| at T1=224: {packed:.1e} (tol 1e-3); improvement p=0: T1=0 {:.4}, T1=168 {:.4}; \
             p=1: T1=0 {:.4}, T1=168 {:.4}; degradation p=0 {d0:.4} vs p=1 {d1:.4}",
            impr(0.0, 0.0),
            impr(0.0, 168.0),
            impr(1.0, 0.0),
            impr(1.0, 168.0)
        ),
    );
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_10_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--width", "2", "--height", "2", "--actions", "2", "--epochs", "15", "--seed", "3"];
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("sweep", vec!["--p", "0,1", "--tau", "1,2", "--repetitions", "2"]),
        ("baseline", vec!["--p", "0,0.5", "--tau", "1,3"]),
        ("mean-improve", vec!["--p", "0,1", "--tau", "1", "--mazes", "3"]),
        ("noise-eval", vec!["--p", "0.4", "--tau", "2", "--eta", "0,0.5,1", "--realizations", "6"]),
        ("transient", vec!["--p", "0,1", "--total", "8", "--values", "0,4,8"]),
        ("cross-eval", vec!["--p", "0,1", "--tau", "1,2", "--train-tau", "2"]),
        ("hypersearch", vec!["--p", "0.3", "--tau", "1", "--budget", "3"]),
        ("oracle-check", vec!["--p", "0.5", "--tau", "2"]),
    ];
    let mut mismatched = Vec::new();
    for (name, extra) in &commands {
        let mut outputs = Vec::new();
        for (run, workers) in [("a", "1"), ("b", "1"), ("c", "3")] {
            let out = dir.path().join(format!("{name}-{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_qmaze"))
                .arg(name)
                .args(base)
                .args(extra)
                .args(["--workers", workers, "--out"])
                .arg(&out)
                .output()
                .unwrap();
            assert!(status.status.success(), "{name}: {}", String::from_utf8_lossy(&status.stderr));
            outputs.push(snapshot(&out));
        }
        if outputs[0] != outputs[1] || outputs[0] != outputs[2] || outputs[0].is_empty() {
            mismatched.push(*name);
        }
    }
    report(
        10,
        "CLI reruns byte-identical (serial and parallel)",
        mismatched.is_empty(),
        format!("{} subcommands x 3 runs (workers 1, 1, 3); mismatches: {mismatched:?}", commands.len()),
    );
}
