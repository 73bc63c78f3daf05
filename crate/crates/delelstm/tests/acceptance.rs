//! Acceptance report: one PASS/FAIL/SKIP line per criterion.
//!
//! Everything runs inside a single test so the timed criteria do not share
//! the CPU with each other. By default the report is informational; set
//! `ACCEPTANCE_STRICT=1` to turn any FAIL into a test failure.
//!
//! The electricity reproduction runs only when `DELELSTM_ELECTRICITY_CONFIG`
//! names a config file whose `data`, `target` and column settings describe
//! the dataset; hidden size 128 and the full batch/learning-rate grid are
//! forced on top of it.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use delelstm::checkpoint::to_text;
use delelstm::config::Settings;
use delelstm::io::load_csv;
use delelstm::search::grid_search;
use delelstm_core::cells::{step_standard, step_tensorized, CellState, StandardLstmParams, TensorLstmParams};
use delelstm_core::data::{make_windows, prepare, synth_instant, synth_longmem, WindowedDataset};
use delelstm_core::decomposition::{build_design, decompose, DecompositionWeights, DEFAULT_LAMBDA};
use delelstm_core::interpretation::{build_report, normalize_step};
use delelstm_core::metrics::{evaluate, mse};
use delelstm_core::model::{forward, sequence_loss, DelelstmParams, ModelKind};
use delelstm_core::train::{explain_dataset, train_and_evaluate, Grid, TrainConfig};
use delelstm_core::{Graph, Tensor};

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: &'static str,
    verdict: Verdict,
    detail: String,
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

// ---- 1. gradients ----------------------------------------------------------

struct GradCase {
    params: DelelstmParams,
    inputs: Vec<Tensor>,
    targets: Tensor,
}

fn grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=6);
    let m = rng.random_range(1..=16);
    let t = rng.random_range(2..=8);
    let b = rng.random_range(1..=3);
    GradCase {
        params: DelelstmParams::init(ModelKind::Delelstm, d, m, &mut rng),
        inputs: (0..t).map(|_| Tensor::uniform(&[b, d], 1.0, &mut rng)).collect(),
        targets: Tensor::uniform(&[b, t], 1.0, &mut rng),
    }
}

fn case_loss(c: &GradCase, p: &DelelstmParams) -> f64 {
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let pass = forward(&mut g, &bound, &c.inputs, DEFAULT_LAMBDA).unwrap();
    let l = sequence_loss(&mut g, &pass.predictions, &c.targets, 1).unwrap();
    g.value(l).item().unwrap()
}

fn gradients() -> Line {
    const H: f64 = 1e-5;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-7 + 1e-4 * a.abs().max(b.abs());
    let start = Instant::now();
    let (mut entries, mut bad, mut bad_but_refined_ok) = (0usize, Vec::new(), 0usize);
    for seed in 0..100 {
        let c = grad_case(seed);
        let mut g = Graph::new();
        let bound = c.params.bind(&mut g);
        let pass = forward(&mut g, &bound, &c.inputs, DEFAULT_LAMBDA).unwrap();
        let l = sequence_loss(&mut g, &pass.predictions, &c.targets, 1).unwrap();
        let grads = g.backward(l).unwrap();
        let names: Vec<String> = c.params.blocks().into_iter().map(|(n, _)| n).collect();
        let mut probe = c.params.clone();
        for (b, v) in bound.vars().into_iter().enumerate() {
            let grad = grads.wrt(v);
            for (i, &an) in grad.data().iter().enumerate() {
                let orig = probe.blocks_mut()[b].data()[i];
                let mut at = |k: f64| {
                    probe.blocks_mut()[b].data_mut()[i] = orig + k * H;
                    case_loss(&c, &probe)
                };
                let (p1, m1) = (at(1.0), at(-1.0));
                let fd = (p1 - m1) / (2.0 * H);
                entries += 1;
                if !close(an, fd) {
                    // Diagnostic only: a fourth-order stencil at the same step.
                    let (p2, m2) = (at(2.0), at(-2.0));
                    let fd4 = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * H);
                    if close(an, fd4) {
                        bad_but_refined_ok += 1;
                    }
                    bad.push(format!("seed {seed} {}[{i}] analytic {an:.6e} central {fd:.6e} five-point {fd4:.6e}", names[b]));
                }
                probe.blocks_mut()[b].data_mut()[i] = orig;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut detail = format!("{entries} entries over 100 graphs, {} outside rtol 1e-4/atol 1e-7, {secs:.1}s", bad.len());
    if !bad.is_empty() {
        detail.push_str(&format!(
            "; {bad_but_refined_ok}/{} agree with a five-point stencil at the same step; first: {}",
            bad.len(),
            bad[0]
        ));
    }
    Line {
        id: "1 gradient suite",
        verdict: verdict(bad.is_empty() && secs < 120.0),
        detail,
    }
}

// ---- 2. least squares ------------------------------------------------------

fn normal_equations(a: &[f64], b: &[f64], m: usize, p: usize, lambda: f64) -> Vec<f64> {
    let mut aug = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            aug[i][j] = (0..m).map(|r| a[r * p + i] * a[r * p + j]).sum::<f64>();
        }
        aug[i][i] += lambda;
        aug[i][p] = (0..m).map(|r| a[r * p + i] * b[r]).sum::<f64>();
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs())).unwrap();
        aug.swap(col, piv);
        for row in col + 1..p {
            let f = aug[row][col] / aug[col][col];
            for k in col..=p {
                aug[row][k] -= f * aug[col][k];
            }
        }
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| aug[i][k] * x[k]).sum();
        x[i] = (aug[i][p] - s) / aug[i][i];
    }
    x
}

fn least_squares() -> Line {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(1..=6);
        let m = rng.random_range(1..=16);
        let mut g = Graph::new();
        let prev = g.constant(Tensor::uniform(&[d, m], 1.0, &mut rng));
        let cur = g.constant(Tensor::uniform(&[d, m], 1.0, &mut rng));
        let target = g.constant(Tensor::uniform(&[m], 1.0, &mut rng));
        let (design, _) = build_design(&mut g, prev, cur).unwrap();
        let coeffs = decompose(&mut g, target, design, DEFAULT_LAMBDA).unwrap();
        let want = normal_equations(g.value(design).data(), g.value(target).data(), m, 2 * d, DEFAULT_LAMBDA);
        for (got, exp) in g.value(coeffs).data().iter().zip(&want) {
            worst = worst.max((got - exp).abs() / exp.abs().max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Line {
        id: "2 least-squares oracle",
        verdict: verdict(worst <= 1e-8 && secs < 10.0),
        detail: format!("1000 decompositions, worst scaled error {worst:.2e}, {secs:.2}s"),
    }
}

// ---- 3, 4. cells -----------------------------------------------------------

fn tensor_hidden(p: &TensorLstmParams, xs: &[Tensor]) -> Vec<Tensor> {
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let mut shape = xs[0].shape().to_vec();
    shape.push(p.hidden());
    let mut state = CellState::zeros(&mut g, &shape);
    xs.iter()
        .map(|x| {
            let x = g.constant(x.clone());
            state = step_tensorized(&mut g, x, state, &bound).unwrap();
            g.value(state.hidden).clone()
        })
        .collect()
}

fn isolation() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (b, d, m, t) = (rng.random_range(1..=3), rng.random_range(2..=6), rng.random_range(1..=16), rng.random_range(1..=12));
        let p = TensorLstmParams::init(d, m, &mut rng);
        let xs: Vec<Tensor> = (0..t).map(|_| Tensor::uniform(&[b, d], 2.0, &mut rng)).collect();
        let var = rng.random_range(0..d);
        let mut moved = xs.clone();
        for x in &mut moved {
            for row in x.data_mut().chunks_mut(d) {
                row[var] += rng.random_range(-3.0..3.0);
            }
        }
        for (h0, h1) in tensor_hidden(&p, &xs).iter().zip(tensor_hidden(&p, &moved)) {
            for (i, (a, c)) in h0.data().iter().zip(h1.data()).enumerate() {
                if (i / m) % d != var {
                    worst = worst.max((a - c).abs());
                }
            }
        }
    }
    Line {
        id: "3 tensorized isolation",
        verdict: verdict(worst <= 1e-15),
        detail: format!("50 trials, largest change in other variables' rows {worst:e}"),
    }
}

fn single_variable_equivalence() -> Line {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1..=16);
        let tp = TensorLstmParams::init(1, m, &mut rng);
        let mut sp = StandardLstmParams::zeros(1, m);
        for ((_, s), (_, t)) in sp.gates.iter_mut().zip(tp.gates.iter()) {
            s.recurrent = t.recurrent.clone().reshape(&[m, m]).unwrap();
            s.input = t.input.clone().reshape(&[m, 1]).unwrap();
            s.bias = t.bias.clone().reshape(&[m]).unwrap();
        }
        let xs: Vec<Tensor> = (0..10).map(|_| Tensor::uniform(&[2, 1], 2.0, &mut rng)).collect();
        let mut g = Graph::new();
        let bound = sp.bind(&mut g);
        let mut state = CellState::zeros(&mut g, &[2, m]);
        for (x, ht) in xs.iter().zip(tensor_hidden(&tp, &xs)) {
            let x = g.constant(x.clone());
            state = step_standard(&mut g, x, state, &bound).unwrap();
            for (a, b) in ht.data().iter().zip(g.value(state.hidden).data()) {
                worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    Line {
        id: "4 single-variable equivalence",
        verdict: verdict(worst <= 4.0 * f64::EPSILON),
        detail: format!("20 seeds, largest relative difference {worst:e}"),
    }
}

// ---- 5, 6. attribution oracles --------------------------------------------

struct Attribution {
    seed: u64,
    rank: usize,
    driver_in: f64,
    other_in: f64,
}

fn attribution(make: fn(u64, usize, usize, usize, usize) -> delelstm_core::Result<WindowedDataset>) -> (Vec<Attribution>, f64) {
    const DRIVER: usize = 0;
    let start = Instant::now();
    let mut out = Vec::new();
    for seed in 0..5 {
        let ds = make(seed, 500, 4, 24, DRIVER).unwrap();
        let cfg = TrainConfig {
            hidden: 32,
            epochs: 200,
            window: 24,
            seed,
            ..TrainConfig::default()
        };
        let run = train_and_evaluate(&ds, &cfg).unwrap();
        let data = prepare(&ds, &cfg.split(ds.len())).unwrap();
        let report = explain_dataset(&run.checkpoint.params, &data.test, cfg.lambda).unwrap();
        // Timesteps t > T/2 in 1-based terms are 0-based indices T/2.. .
        let late = |v: usize| report.mean_instantaneous(v, 24 / 2).unwrap_or(f64::NAN);
        out.push(Attribution {
            seed,
            rank: report.ranks()[DRIVER],
            driver_in: late(DRIVER),
            other_in: (1..4).map(late).sum::<f64>() / 3.0,
        });
    }
    (out, start.elapsed().as_secs_f64())
}

fn describe(runs: &[Attribution]) -> String {
    runs.iter()
        .map(|r| format!("seed {}: rank {} In {:.3} (others {:.3})", r.seed, r.rank, r.driver_in, r.other_in))
        .collect::<Vec<_>>()
        .join("; ")
}

fn instant_oracle() -> Line {
    let (runs, secs) = attribution(synth_instant);
    let first = runs.iter().filter(|r| r.rank == 1).count();
    let top_half = runs.iter().filter(|r| r.rank <= 2).count();
    let mean_in = runs.iter().map(|r| r.driver_in).sum::<f64>() / runs.len() as f64;
    Line {
        id: "5 attribution oracle (instantaneous)",
        verdict: verdict(first >= 4 && mean_in > 0.6 && secs < 600.0),
        detail: format!(
            "driver ranked first in {first}/5, kept by a 50% ablation in {top_half}/5, mean late In {mean_in:.3}, {secs:.0}s [{}]",
            describe(&runs)
        ),
    }
}

fn longmem_oracle() -> Line {
    let (runs, secs) = attribution(synth_longmem);
    let low = runs.iter().filter(|r| r.driver_in < 0.5).count();
    Line {
        id: "6 attribution oracle (long-term)",
        verdict: verdict(low >= 4 && secs < 600.0),
        detail: format!("driver late In below 0.5 in {low}/5, {secs:.0}s [{}]", describe(&runs)),
    }
}

// ---- 7. metrics ------------------------------------------------------------

fn metric_formulas() -> Line {
    let m = evaluate(&[1.0, 2.0, 5.0], &[2.0, 2.0, 4.0]).unwrap();
    let mut ok = (m.rmse - (2.0f64 / 3.0).sqrt()).abs() < 1e-15
        && (m.mae - 2.0 / 3.0).abs() < 1e-15
        && (m.mape - 25.0).abs() < 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=300);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let e = mse(&p, &y).unwrap();
        worst = worst.max((evaluate(&p, &y).unwrap().rmse.powi(2) - e).abs() / e.max(1.0));
    }
    ok &= worst <= 1e-12;
    Line {
        id: "7 metric formulas",
        verdict: verdict(ok),
        detail: format!("hand case exact, RMSE² vs MSE worst scaled gap {worst:.1e} over 1000 draws"),
    }
}

// ---- 8. interpretation identities -----------------------------------------

fn interpretation_identities() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut l1, mut comp, mut scale): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut gl_ok = true;
    for _ in 0..500 {
        let d = rng.random_range(1..=8);
        let raw: Vec<DecompositionWeights> = (0..10)
            .map(|_| DecompositionWeights {
                alpha: (0..d).map(|_| rng.random_range(-5.0..5.0)).collect(),
                beta: (0..d).map(|_| rng.random_range(-5.0..5.0)).collect(),
                residual_norm: 0.0,
            })
            .collect();
        for w in &raw {
            let (a, b) = normalize_step(w).unwrap();
            l1 = l1.max((a.iter().chain(&b).sum::<f64>() - 1.0).abs());
        }
        let names: Vec<String> = (0..d).map(|i| format!("v{i}")).collect();
        let r = build_report(&raw, &names).unwrap();
        for (ins, lt) in r.instantaneous.iter().zip(&r.long_term) {
            for (i, l) in ins.iter().zip(lt) {
                comp = comp.max((i.unwrap() + l.unwrap() - 1.0).abs());
            }
        }
        gl_ok &= r.global.iter().all(|g| (0.0..=1.0).contains(g));
        let s = 10f64.powf(rng.random_range(-6.0..6.0));
        let scaled: Vec<DecompositionWeights> = raw
            .iter()
            .map(|w| DecompositionWeights {
                alpha: w.alpha.iter().map(|v| v * s).collect(),
                beta: w.beta.iter().map(|v| v * s).collect(),
                residual_norm: 0.0,
            })
            .collect();
        let rs = build_report(&scaled, &names).unwrap();
        for (a, b) in r.instantaneous.iter().flatten().zip(rs.instantaneous.iter().flatten()) {
            scale = scale.max((a.unwrap() - b.unwrap()).abs());
        }
    }
    Line {
        id: "8 interpretation identities",
        verdict: verdict(l1 <= 1e-10 && comp == 0.0 && gl_ok && scale <= 1e-12),
        detail: format!("L1 gap {l1:.1e}, In+long-term gap {comp:e}, Gl in [0,1]: {gl_ok}, rescaling gap {scale:.1e}"),
    }
}

// ---- 9. determinism --------------------------------------------------------

fn determinism() -> Line {
    let ds = synth_instant(9, 120, 4, 24, 0).unwrap();
    let cfg = TrainConfig {
        hidden: 16,
        epochs: 15,
        window: 24,
        seed: 123,
        ..TrainConfig::default()
    };
    let a = to_text(&train_and_evaluate(&ds, &cfg).unwrap().checkpoint);
    let b = to_text(&train_and_evaluate(&ds, &cfg).unwrap().checkpoint);
    Line {
        id: "9 determinism",
        verdict: verdict(a == b),
        detail: format!("two 15-epoch runs, serialized checkpoints of {} bytes {}", a.len(), if a == b { "identical" } else { "differ" }),
    }
}

// ---- 10. electricity -------------------------------------------------------

fn electricity() -> Line {
    let id = "10 electricity reproduction (stretch)";
    let Some(path) = std::env::var_os("DELELSTM_ELECTRICITY_CONFIG") else {
        return Line {
            id,
            verdict: Verdict::Skip,
            detail: "set DELELSTM_ELECTRICITY_CONFIG to a config describing the dataset".into(),
        };
    };
    let run = || -> delelstm::Result<(f64, f64, f64)> {
        let start = Instant::now();
        let mut s = Settings::load(std::path::Path::new(&path))?;
        s.train.hidden = 128;
        let data = s.data.clone().ok_or_else(|| delelstm::Error::Config("config has no data path".into()))?;
        let table = load_csv(&data, &s.schema()?)?;
        let ds = make_windows(&table, s.train.window, s.stride())?;
        let grid = Grid {
            hidden_sizes: vec![128],
            ..Grid::default()
        };
        let out = grid_search(&ds, &s.train, &grid)?;
        let [rmse, _, mape] = out.repeats.mean_std();
        Ok((rmse.0, mape.0, start.elapsed().as_secs_f64()))
    };
    match run() {
        Ok((rmse, mape, secs)) => Line {
            id,
            verdict: verdict((rmse - 1.7247).abs() <= 0.25 * 1.7247 && (mape - 1.69).abs() <= 1.0 && secs <= 7200.0),
            detail: format!("test RMSE {rmse:.4} (target 1.7247 ± 25%), MAPE {mape:.2}% (target 1.69% ± 1), {secs:.0}s"),
        },
        Err(e) => Line {
            id,
            verdict: Verdict::Fail,
            detail: format!("run failed: {e}"),
        },
    }
}

#[test]
fn acceptance_report() {
    let started = Instant::now();
    let checks: [fn() -> Line; 10] = [
        gradients,
        least_squares,
        isolation,
        single_variable_equivalence,
        instant_oracle,
        longmem_oracle,
        metric_formulas,
        interpretation_identities,
        determinism,
        electricity,
    ];
    // Written to the stdout handle directly so the report shows up in a plain
    // `cargo test` run; the print macros would be captured.
    let mut out = std::io::stdout();
    let mut say = |text: String| {
        let _ = writeln!(out, "{text}");
        let _ = out.flush();
    };
    let mut failed = Vec::new();
    // libtest leaves the cursor after "test acceptance_report ... ".
    say(String::new());
    for check in checks {
        let line = check();
        let tag = match line.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed.push(line.id);
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        say(format!("{tag} [{}] {}", line.id, line.detail));
    }
    say(format!(
        "acceptance: {} failed of 10 in {:?}",
        failed.len(),
        Duration::from_secs(started.elapsed().as_secs())
    ));
    if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert!(failed.is_empty(), "failed criteria: {failed:?}");
    }
}
