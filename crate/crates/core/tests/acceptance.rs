//! Acceptance gate. Prints one line per criterion and exits nonzero on any failure.
//!
//! Criterion 9 needs the released survey data; point `HEXLEX_DATASET` at a
//! directory holding `lexical.csv` (agents x adjectives, blank = masked) and,
//! for the validity half, `pir.csv` plus `pir_key.csv`.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use hexlex::factors::{
    align_factors, ipsatise, ipsatise_with, promax, varimax, varimax_criterion, FactorSolution, IpsatiseSteps,
    IpsatisedMatrix, PrincipalComponents, Rotation, RotationDiagnostics, VarimaxOptions,
};
use hexlex::gateway::fault::{FaultPlan, FaultyTransport};
use hexlex::gateway::Transport;
use hexlex::pipeline::{self, AnalysisParams};
use hexlex::psychometrics::{
    consistency_score, cronbach_alpha, symmetric_semantic_similarity, truncate_top, weighted_jaccard, AlphaMode,
    EmbeddingTable, ScaleKey,
};
use hexlex::survey::{build_matrix, request_key, run_lexical_survey, ResponseMatrix, ResponseStatus, ResponseStore, SurveyOptions};
use hexlex::LikertScale;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    NotRun(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixed_matrix(rows: usize, cols: usize, values: &[f64]) -> IpsatisedMatrix {
    IpsatisedMatrix {
        agent_ids: (0..rows as u32).collect(),
        item_ids: (0..cols).map(|i| format!("i{i}")).collect(),
        values: DMatrix::from_row_slice(rows, cols, values),
        observed: vec![true; rows * cols],
        within_done: true,
        between_done: true,
        degenerate_rows: vec![],
        degenerate_items: vec![],
    }
}

fn unrotated(pattern: DMatrix<f64>) -> FactorSolution {
    let k = pattern.ncols();
    FactorSolution {
        item_ids: (0..pattern.nrows()).map(|i| format!("i{i}")).collect(),
        pattern,
        factor_correlation: DMatrix::identity(k, k),
        explained_variance_pct: vec![0.0; k],
        rotation: Rotation::None,
        transform: DMatrix::identity(k, k),
        diagnostics: RotationDiagnostics::default(),
    }
}

fn trace_monotone(sol: &FactorSolution) -> bool {
    sol.diagnostics.criterion_trace.windows(2).all(|w| w[1] >= w[0])
}

fn row_normalized(m: &DMatrix<f64>, norms: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if norms[i] > 0.0 { m[(i, j)] / norms[i] } else { 0.0 })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked_rows = 0;
    let mut checked_cols = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=50);
        let p = rng.gen_range(2..=80);
        let cells: Vec<Option<f64>> =
            (0..n * p).map(|_| (!rng.gen_bool(0.05)).then(|| f64::from(rng.gen_range(1u8..=9)))).collect();
        let m = ResponseMatrix::new((0..n as u32).collect(), (0..p).map(|i| format!("i{i}")).collect(), cells, LikertScale::lexical())
            .map_err(|e| e.to_string())?;
        let within = ipsatise_with(&m, IpsatiseSteps { within: true, between: false }).map_err(|e| e.to_string())?;
        for r in 0..n {
            if within.degenerate_rows.contains(&m.agent_ids[r]) {
                continue;
            }
            let obs: Vec<f64> = (0..p).filter(|&c| within.is_observed(r, c)).map(|c| within.values[(r, c)]).collect();
            let (mean, sd) = mean_sd(&obs);
            ensure(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9, || format!("row {r}: mean {mean:e}, sd {sd}"))?;
            checked_rows += 1;
        }
        let both = ipsatise(&m).map_err(|e| e.to_string())?;
        for c in 0..p {
            if both.degenerate_items.contains(&m.item_ids[c]) {
                continue;
            }
            let col: Vec<f64> = both.values.column(c).iter().copied().collect();
            let (mean, sd) = mean_sd(&col);
            ensure(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9, || format!("column {c}: mean {mean:e}, sd {sd}"))?;
            checked_cols += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!("{checked_rows} rows, {checked_cols} columns in {secs:.2} s"))
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 40;
    let mut worst: f64 = 0.0;
    for step in -9..=9 {
        let r = f64::from(step) / 10.0;
        // Centered orthonormal pair, then y = r x + sqrt(1 - r^2) z has sample correlation exactly r.
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let center = |v: &mut Vec<f64>| {
            let m = v.iter().sum::<f64>() / n as f64;
            v.iter_mut().for_each(|e| *e -= m);
        };
        center(&mut x);
        center(&mut z);
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let dot: f64 = x.iter().zip(&z).map(|(a, b)| a * b).sum();
        z.iter_mut().zip(&x).for_each(|(b, a)| *b -= dot * a);
        let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        z.iter_mut().for_each(|v| *v /= nz);
        let values: Vec<f64> =
            x.iter().zip(&z).flat_map(|(&a, &b)| [a, r * a + (1.0 - r * r).sqrt() * b]).collect();
        let pcs = PrincipalComponents::new(&fixed_matrix(n, 2, &values)).map_err(|e| e.to_string())?;
        let ev = &pcs.spectrum.eigenvalues;
        let want = [1.0 + r.abs(), 1.0 - r.abs()];
        for (got, want) in ev.iter().zip(want) {
            worst = worst.max((got - want).abs());
        }
        ensure(worst <= 1e-10, || format!("r = {r}: eigenvalues {ev:?}"))?;
    }
    let mut trace_err: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(3..=60);
        let p = rng.gen_range(2..=90);
        let values: Vec<f64> = (0..n * p).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pcs = PrincipalComponents::new(&fixed_matrix(n, p, &values)).map_err(|e| e.to_string())?;
        let sum: f64 = pcs.spectrum.eigenvalues.iter().sum();
        trace_err = trace_err.max((sum - p as f64).abs());
        ensure(trace_err <= 1e-6, || format!("{n}x{p}: eigenvalue sum {sum}"))?;
    }
    Ok(format!("max 2-item error {worst:.1e}, max trace error {trace_err:.1e}"))
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let steps = (std::f64::consts::FRAC_PI_2 / 1e-4).ceil() as usize;
    for problem in 0..50 {
        let p = rng.gen_range(8..=30);
        let a = DMatrix::from_fn(p, 2, |_, _| rng.gen_range(-1.0..1.0));
        let norms: Vec<f64> = a.row_iter().map(|r| r.norm()).collect();
        let x = row_normalized(&a, &norms);
        let rotated = varimax(&unrotated(a.clone()), VarimaxOptions::default()).map_err(|e| e.to_string())?;
        ensure(trace_monotone(&rotated), || format!("problem {problem}: criterion trace decreased"))?;
        let ours = varimax_criterion(&row_normalized(&rotated.pattern, &norms));
        let mut best = f64::NEG_INFINITY;
        for s in 0..steps {
            let t = s as f64 * 1e-4;
            let (c, si) = (t.cos(), t.sin());
            let rot = DMatrix::from_row_slice(2, 2, &[c, -si, si, c]);
            best = best.max(varimax_criterion(&(&x * rot)));
        }
        worst = worst.max((ours - best).abs());
        ensure((ours - best).abs() <= 1e-6, || format!("problem {problem}: varimax {ours} vs grid {best}"))?;
    }

    let start = Instant::now();
    let (p, k) = (1700, 10);
    let plant = DMatrix::from_fn(p, k, |i, j| if i % k == j { rng.gen_range(0.4..0.8) } else { rng.gen_range(-0.15..0.15) });
    let loadings = &plant * common::random_rotation(k, &mut rng);
    let rotated = varimax(&unrotated(loadings), VarimaxOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(trace_monotone(&rotated), || "desk-scale trace decreased".into())?;
    ensure(rotated.diagnostics.converged && rotated.diagnostics.iterations < 500, || {
        format!("desk-scale: {} iterations, converged {}", rotated.diagnostics.iterations, rotated.diagnostics.converged)
    })?;
    ensure(secs < 30.0, || format!("desk-scale took {secs:.1} s"))?;
    Ok(format!(
        "max grid gap {worst:.1e}; 1700x10 converged in {} iterations, {secs:.2} s",
        rotated.diagnostics.iterations
    ))
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (p, k) = (60, 6);
    let (mut worst_pattern, mut worst_phi): (f64, f64) = (0.0, 0.0);
    for run in 0..20 {
        let plant = DMatrix::from_fn(p, k, |i, j| if i % k == j { rng.gen_range(0.5..0.9) } else { rng.gen_range(-0.05..0.05) });
        let loadings = &plant * common::random_rotation(k, &mut rng);
        let vm = varimax(&unrotated(loadings), VarimaxOptions::default()).map_err(|e| e.to_string())?;
        let pm = promax(&vm, 4.0).map_err(|e| e.to_string())?;
        let phi = &pm.factor_correlation;
        ensure((phi - phi.transpose()).amax() == 0.0, || format!("run {run}: factor correlation not symmetric"))?;
        ensure(phi.clone().cholesky().is_some(), || format!("run {run}: factor correlation not positive-definite"))?;
        worst_phi = worst_phi.max((phi - DMatrix::<f64>::identity(k, k)).amax());
        for m in align_factors(&vm.pattern, &pm.pattern).map_err(|e| e.to_string())? {
            let sign = m.congruence.signum();
            let gap = (0..p).map(|i| (vm.pattern[(i, m.reference)] - sign * pm.pattern[(i, m.candidate)]).abs()).fold(0.0, f64::max);
            worst_pattern = worst_pattern.max(gap);
        }
        ensure(worst_pattern <= 0.05, || format!("run {run}: pattern differs from varimax by {worst_pattern:.3}"))?;
        ensure(worst_phi <= 0.1, || format!("run {run}: factor correlation off identity by {worst_phi:.3}"))?;
    }
    Ok(format!("20 runs; max pattern gap {worst_pattern:.4}, max |Phi - I| {worst_phi:.4}"))
}

fn recovery(noise_sd: f64, dir: &Path) -> Result<Vec<f64>, String> {
    let plant = common::plant(120, 120, 5);
    let pop = common::population(120);
    let transport: Arc<dyn Transport> = Arc::new(plant.transport(noise_sd, 55, LikertScale::lexical()));
    let gateway = common::gateway(transport, 0);
    let store_path = dir.join(format!("noise{noise_sd}.jsonl"));
    let mut options = SurveyOptions::new("recovery");
    options.sync_writes = false;
    run_lexical_survey(&pop, &plant.lexicon(), &gateway, &store_path, &options).map_err(|e| e.to_string())?;
    let store = ResponseStore::load(&store_path).map_err(|e| e.to_string())?;
    let matrix = build_matrix(&store, &(0..120).collect::<Vec<_>>(), &plant.items).map_err(|e| e.to_string())?;
    let data = ipsatise(&matrix).map_err(|e| e.to_string())?;
    let extracted = PrincipalComponents::new(&data).and_then(|pcs| pcs.loadings(6)).map_err(|e| e.to_string())?;
    let vm = varimax(&extracted, VarimaxOptions::default()).map_err(|e| e.to_string())?;
    let pm = promax(&vm, 4.0).map_err(|e| e.to_string())?;
    let matches = align_factors(&plant.loadings(), &pm.pattern).map_err(|e| e.to_string())?;
    Ok(matches.iter().map(|m| m.congruence.abs()).collect())
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let clean = recovery(0.0, dir.path())?;
    let noisy = recovery(1.0, dir.path())?;
    let secs = start.elapsed().as_secs_f64();
    let min_clean = clean.iter().copied().fold(1.0, f64::min);
    let min_noisy = noisy.iter().copied().fold(1.0, f64::min);
    ensure(clean.len() == 6 && min_clean >= 0.99, || format!("noise 0 congruences {clean:.3?}"))?;
    ensure(noisy.len() == 6 && min_noisy >= 0.90, || format!("noise 1 congruences {noisy:.3?}"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("min |congruence| {min_clean:.4} at noise 0, {min_noisy:.4} at noise 1, {secs:.2} s"))
}

fn criterion_6() -> Check {
    ensure(consistency_score(6, 5) == 0.875 && consistency_score(4, 5) == 0.875, || "one-level discrepancy".into())?;
    ensure(consistency_score(7, 5) == 0.75 && consistency_score(3, 5) == 0.75, || "two-level discrepancy".into())?;
    for a in 1..=9u8 {
        for b in 1..=9u8 {
            let s = consistency_score(a, b);
            ensure(s == consistency_score(b, a), || format!("asymmetric at ({a}, {b})"))?;
            ensure((s == 1.0) == (a + b == 10), || format!("maximum misplaced at ({a}, {b})"))?;
            ensure((0.0..=1.0).contains(&s), || format!("out of range at ({a}, {b})"))?;
        }
    }
    Ok("anchors 0.875 / 0.75 exact; 81 pairs symmetric, maximum exactly at sum 10".into())
}

// Alphas computed independently with exact rational arithmetic.
const ALPHA_ORACLE: &[(&[&[f64]], f64)] = &[
    (&[&[7.0, 3.0, 3.0, 6.0], &[3.0, 3.0, 5.0, 1.0], &[5.0, 4.0, 4.0, 5.0], &[6.0, 4.0, 5.0, 6.0], &[6.0, 7.0, 7.0, 5.0], &[2.0, 3.0, 1.0, 2.0], &[3.0, 2.0, 6.0, 4.0], &[5.0, 5.0, 6.0, 4.0]], 0.76003276003276),
    (&[&[9.0, 9.0, 7.0], &[1.0, 3.0, 3.0], &[7.0, 3.0, 3.0], &[5.0, 5.0, 1.0], &[2.0, 6.0, 6.0]], 0.72),
    (&[&[6.0, 6.0], &[9.0, 9.0], &[1.0, 7.0], &[1.0, 1.0], &[4.0, 4.0]], 0.7931034482758621),
    (&[&[5.0, 5.0, 6.0, 6.0, 6.0], &[1.0, 1.0, 3.0, 2.0, 2.0], &[3.0, 4.0, 3.0, 1.0, 1.0], &[4.0, 6.0, 2.0, 6.0, 2.0]], 0.8657142857142858),
    (&[&[2.0, 1.0, 1.0, 1.0], &[7.0, 5.0, 9.0, 9.0], &[2.0, 6.0, 9.0, 6.0], &[9.0, 7.0, 3.0, 9.0], &[1.0, 4.0, 6.0, 4.0], &[9.0, 5.0, 5.0, 3.0], &[3.0, 5.0, 1.0, 1.0]], 0.7355311355311356),
    (&[&[6.0, 9.0, 9.0, 3.0], &[1.0, 1.0, 1.0, 4.0], &[9.0, 1.0, 3.0, 9.0], &[7.0, 4.0, 9.0, 9.0], &[9.0, 9.0, 1.0, 9.0], &[1.0, 9.0, 9.0, 1.0]], 0.17183144777832432),
    (&[&[1.0, 1.0, 2.0], &[1.0, 1.0, 1.0], &[9.0, 9.0, 7.0], &[4.0, 7.0, 3.0], &[1.0, 1.0, 1.0], &[7.0, 5.0, 9.0], &[5.0, 6.0, 5.0]], 0.9385813148788927),
    (&[&[9.0, 6.0, 2.0, 8.0], &[4.0, 6.0, 1.0, 2.0], &[5.0, 5.0, 3.0, 3.0], &[7.0, 5.0, 9.0, 9.0], &[8.0, 8.0, 9.0, 6.0], &[3.0, 7.0, 7.0, 3.0]], 0.6386349786715417),
    (&[&[8.0, 5.0], &[1.0, 1.0], &[6.0, 9.0], &[1.0, 7.0]], 0.5544554455445545),
    (&[&[1.0, 2.0, 1.0, 1.0], &[5.0, 4.0, 3.0, 5.0], &[1.0, 1.0, 2.0, 1.0], &[1.0, 3.0, 3.0, 4.0], &[9.0, 8.0, 9.0, 9.0], &[1.0, 2.0, 2.0, 1.0]], 0.9804977560179519),
    (&[&[8.0, 9.0], &[5.0, 1.0], &[4.0, 4.0], &[6.0, 6.0], &[9.0, 6.0], &[7.0, 5.0], &[8.0, 4.0]], 0.7023411371237458),
    (&[&[1.0, 9.0, 1.0, 9.0, 9.0], &[6.0, 1.0, 6.0, 1.0, 1.0], &[2.0, 5.0, 2.0, 1.0, 8.0], &[4.0, 1.0, 1.0, 1.0, 7.0], &[7.0, 1.0, 1.0, 1.0, 1.0]], -0.09575569358178054),
    (&[&[6.0, 5.0, 7.0, 3.0, 4.0], &[8.0, 6.0, 5.0, 8.0, 4.0], &[9.0, 9.0, 8.0, 8.0, 9.0], &[4.0, 2.0, 6.0, 2.0, 5.0]], 0.8829365079365079),
    (&[&[4.0, 6.0, 9.0], &[9.0, 8.0, 6.0], &[7.0, 5.0, 3.0], &[1.0, 1.0, 1.0], &[7.0, 9.0, 1.0], &[9.0, 9.0, 9.0], &[1.0, 8.0, 6.0], &[1.0, 3.0, 1.0]], 0.7539893617021277),
    (&[&[1.0, 1.0, 7.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 4.0, 1.0], &[2.0, 9.0, 2.0, 9.0, 8.0], &[1.0, 4.0, 7.0, 1.0, 1.0], &[5.0, 9.0, 2.0, 2.0, 9.0], &[7.0, 7.0, 7.0, 1.0, 4.0], &[1.0, 4.0, 1.0, 1.0, 1.0]], 0.6001548786783686),
    (&[&[4.0, 1.0], &[3.0, 3.0], &[4.0, 6.0], &[5.0, 5.0]], 0.3855421686746988),
    (&[&[6.0, 8.0], &[1.0, 1.0], &[5.0, 3.0], &[9.0, 9.0]], 0.9455782312925171),
    (&[&[9.0, 9.0, 2.0, 8.0, 5.0], &[1.0, 4.0, 1.0, 4.0, 1.0], &[1.0, 1.0, 3.0, 1.0, 6.0], &[9.0, 9.0, 9.0, 1.0, 5.0], &[8.0, 2.0, 5.0, 2.0, 2.0], &[9.0, 7.0, 9.0, 9.0, 7.0]], 0.7830749628371204),
    (&[&[1.0, 9.0], &[9.0, 1.0], &[2.0, 8.0], &[8.0, 3.0]], -250.66666666666666),
    (&[&[3.0, 4.0, 5.0], &[5.0, 6.0, 7.0], &[2.0, 2.0, 2.0], &[9.0, 8.0, 7.0], &[4.0, 4.0, 6.0]], 0.9424778761061947),
];

fn criterion_7() -> Check {
    let mut worst: f64 = 0.0;
    let mut negatives = 0;
    for (i, (rows, want)) in ALPHA_ORACLE.iter().enumerate() {
        let data = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
        let got = cronbach_alpha(&data, &vec![1.0; data.ncols()]).map_err(|e| e.to_string())?;
        let err = (got - want).abs() / want.abs().max(1.0);
        worst = worst.max(err);
        ensure(err <= 1e-12, || format!("matrix {i}: {got} vs {want}"))?;
        negatives += usize::from(*want < 0.0);
    }
    ensure(negatives > 0, || "oracle has no negative case".into())?;
    let col = [2.0, 7.0, 4.0, 9.0, 1.0];
    let identical = DMatrix::from_fn(5, 4, |r, _| col[r]);
    let one = cronbach_alpha(&identical, &[1.0; 4]).map_err(|e| e.to_string())?;
    ensure(one == 1.0, || format!("identical columns gave {one}"))?;
    Ok(format!("{} matrices ({negatives} negative), max relative error {worst:.1e}; identical columns exactly 1", ALPHA_ORACLE.len()))
}

fn criterion_8() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let plant = common::plant(20, 30, 8);
    let pop = common::population(20);
    let lexicon = plant.lexicon();
    let store_path = dir.path().join("survey.jsonl");
    let options = SurveyOptions::new("durable");
    let key = |a: u32, i: usize| request_key("durable", a, &plant.items[i]);

    let mut cells: Vec<String> = (0..20).flat_map(|a| (0..30).map(move |i| (a, i))).map(|(a, i)| key(a, i)).collect();
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
    let flaky: Vec<String> = cells[0..5].to_vec();
    let dead: HashSet<String> = cells[5..10].iter().cloned().collect();
    let filtered: HashSet<String> = cells[10..13].iter().cloned().collect();

    let mut completed: HashSet<String> = HashSet::new();
    let mut crashes = 0;
    let mut delivered_total = std::collections::HashMap::<String, usize>::new();
    for crash in [Some(150), Some(200), None] {
        let plan = FaultPlan {
            flaky: flaky.iter().map(|k| (k.clone(), 1)).collect(),
            dead: dead.clone(),
            filtered: filtered.clone(),
            crash_on_attempt: crash,
        };
        let faulty = Arc::new(FaultyTransport::new(Arc::new(plant.transport(0.5, 8, LikertScale::lexical())), plan));
        let gateway = common::gateway(faulty.clone(), 2);
        match run_lexical_survey(&pop, &lexicon, &gateway, &store_path, &options) {
            Ok(_) => ensure(crash.is_none(), || "run survived an injected crash".into())?,
            Err(_) if crash.is_some() => crashes += 1,
            Err(e) => return Err(format!("final run failed: {e}")),
        }
        for k in faulty.attempts_by_key().keys() {
            ensure(!completed.contains(k), || format!("completed cell {k} was requested again"))?;
        }
        for (k, n) in faulty.delivered() {
            *delivered_total.entry(k).or_insert(0) += n;
        }
        let store = ResponseStore::load(&store_path).map_err(|e| e.to_string())?;
        completed = store.records().iter().map(|r| r.request_key.clone()).collect();
    }
    ensure(crashes == 2, || format!("{crashes} crashes observed"))?;

    let store = ResponseStore::load(&store_path).map_err(|e| e.to_string())?;
    let records = store.records();
    ensure(records.len() == 600, || format!("{} records for 600 cells", records.len()))?;
    let mut seen = HashSet::new();
    for r in records {
        ensure(seen.insert(r.request_key.clone()), || format!("duplicate record {}", r.request_key))?;
        let want = if dead.contains(&r.request_key) {
            ResponseStatus::Missing
        } else if filtered.contains(&r.request_key) {
            ResponseStatus::ContentFiltered
        } else {
            ResponseStatus::Ok
        };
        ensure(r.status == want, || format!("{}: {:?}, expected {want:?}", r.request_key, r.status))?;
    }
    ensure(delivered_total.values().all(|&n| n == 1), || "a cell reached the backend twice".into())?;
    Ok(format!("2 crashes resumed; 600 cells, 1 record each; {} backend calls, none repeated", delivered_total.len()))
}

const APPENDIX_FACTOR_1: [&str; 10] =
    ["sly", "sneaky", "deceptive", "devious", "undevious", "undeceptive", "manipulative", "deceitful", "underhanded", "uncandid"];
// GPT-4 column of the convergent-validity table, in H E X A C O order.
const TABLE_GPT4: [f64; 6] = [-0.814, 0.686, -0.833, -0.873, -0.934, -0.447];

fn criterion_9() -> Result<Verdict, String> {
    let Some(root) = std::env::var_os("HEXLEX_DATASET") else {
        return Ok(Verdict::NotRun("HEXLEX_DATASET not set; the released responses are not available offline".into()));
    };
    let root = Path::new(&root);
    let lexical = ResponseMatrix::read_csv(&root.join("lexical.csv"), LikertScale::lexical()).map_err(|e| e.to_string())?;
    let params = AnalysisParams { k: Some(10), alpha_mode: AlphaMode::Unkeyed, ..AnalysisParams::default() };
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let extras = pipeline::AnalysisExtras { reference: None, embeddings: None, baseline_lexicon: None };
    let summary = pipeline::analyze(&lexical, &extras, &params, 0, out.path()).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    if (summary.unrotated_cumulative_variance_pct - 22.51).abs() > 0.5 {
        problems.push(format!("cumulative variance {:.2}%", summary.unrotated_cumulative_variance_pct));
    }
    match summary.average_alpha {
        Some(a) if (a - 0.73).abs() <= 0.03 => {}
        other => problems.push(format!("average alpha {other:?}")),
    }
    let top = std::fs::read_to_string(out.path().join("top_items.csv")).map_err(|e| e.to_string())?;
    let first: Vec<String> = top
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("F1,"))
        .take(10)
        .filter_map(|l| l.split(',').nth(2).map(str::to_string))
        .collect();
    let hits = first.iter().filter(|t| APPENDIX_FACTOR_1.contains(&t.as_str())).count();
    if hits < 8 {
        problems.push(format!("{hits}/10 factor-1 adjectives match"));
    }
    let mut detail = format!(
        "variance {:.2}%, alpha {:?}, {hits}/10 factor-1 matches",
        summary.unrotated_cumulative_variance_pct, summary.average_alpha
    );
    if root.join("pir.csv").exists() {
        let pir = ResponseMatrix::read_csv(&root.join("pir.csv"), LikertScale::pir()).map_err(|e| e.to_string())?;
        let key = ScaleKey::load(&root.join("pir_key.csv")).map_err(|e| e.to_string())?;
        let table = pipeline::validity(&lexical, &pir, &key, None, &params, out.path()).map_err(|e| e.to_string())?;
        let worst = table
            .entries
            .iter()
            .map(|e| (e.r - TABLE_GPT4[e.dimension.index()]).abs())
            .fold(0.0, f64::max);
        if table.entries.len() != 6 || worst > 0.05 {
            problems.push(format!("validity |dr| up to {worst:.3} over {} dimensions", table.entries.len()));
        }
        detail.push_str(&format!(", validity max |dr| {worst:.3}"));
    } else {
        detail.push_str(", validity not run (no pir.csv)");
    }
    Ok(if problems.is_empty() { Verdict::Pass(detail) } else { Verdict::Fail(problems.join("; ")) })
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let vocab: Vec<String> = (0..80).map(|i| format!("w{i}")).collect();
    let list = |rng: &mut ChaCha8Rng, pool: &[String]| -> Vec<(String, f64)> {
        let len = rng.gen_range(1..=pool.len().min(40));
        let terms: Vec<(String, f64)> = pool
            .choose_multiple(rng, len)
            .map(|t| {
                let v: f64 = rng.gen_range(0.05..1.0);
                (t.clone(), if rng.gen_bool(0.5) { v } else { -v })
            })
            .collect();
        let n = rng.gen_range(1..=terms.len());
        truncate_top(&terms, n)
    };
    for case in 0..500 {
        let a = list(&mut rng, &vocab);
        let b = list(&mut rng, &vocab);
        let ab = weighted_jaccard(&a, &b).map_err(|e| e.to_string())?;
        let ba = weighted_jaccard(&b, &a).map_err(|e| e.to_string())?;
        ensure((ab - ba).abs() <= 1e-12, || format!("case {case}: {ab} vs {ba}"))?;
        let aa = weighted_jaccard(&a, &a).map_err(|e| e.to_string())?;
        ensure((aa - 1.0).abs() <= 1e-12, || format!("case {case}: self-similarity {aa}"))?;
        let (left, right) = vocab.split_at(40);
        let d = weighted_jaccard(&list(&mut rng, left), &list(&mut rng, right)).map_err(|e| e.to_string())?;
        ensure(d == 0.0, || format!("case {case}: disjoint lists gave {d}"))?;
    }
    let table = EmbeddingTable::from_vectors(
        8,
        vocab.iter().take(40).map(|t| (t.clone(), (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())),
    )
    .map_err(|e| e.to_string())?;
    let embedded: Vec<String> = vocab[..40].to_vec();
    for case in 0..200 {
        let n = rng.gen_range(1..=10);
        let a: Vec<String> = embedded.choose_multiple(&mut rng, n).cloned().collect();
        let n = rng.gen_range(1..=10);
        let b: Vec<String> = embedded.choose_multiple(&mut rng, n).cloned().collect();
        let ab = symmetric_semantic_similarity(&a, &b, &table).map_err(|e| e.to_string())?;
        let ba = symmetric_semantic_similarity(&b, &a, &table).map_err(|e| e.to_string())?;
        ensure((ab - ba).abs() <= 1e-12, || format!("case {case}: {ab} vs {ba}"))?;
    }
    Ok("500 Jaccard cases and 200 semantic-similarity pairs".into())
}

fn run(check: impl FnOnce() -> Result<Verdict, String>) -> Verdict {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => Verdict::Fail(e),
        Err(panic) => Verdict::Fail(
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    }
}

fn plain(check: fn() -> Check) -> impl FnOnce() -> Result<Verdict, String> {
    move || check().map(Verdict::Pass)
}

fn main() {
    let criteria: Vec<(u32, &str, Box<dyn FnOnce() -> Result<Verdict, String>>)> = vec![
        (1, "ipsatisation contract", Box::new(plain(criterion_1))),
        (2, "spectrum correctness", Box::new(plain(criterion_2))),
        (3, "varimax optimality", Box::new(plain(criterion_3))),
        (4, "promax sanity", Box::new(plain(criterion_4))),
        (5, "end-to-end recovery", Box::new(plain(criterion_5))),
        (6, "consistency anchors", Box::new(plain(criterion_6))),
        (7, "reliability oracle", Box::new(plain(criterion_7))),
        (8, "survey durability", Box::new(plain(criterion_8))),
        (9, "published-number reproduction", Box::new(criterion_9)),
        (10, "metric properties", Box::new(plain(criterion_10))),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let line = match run(check) {
            Verdict::Pass(d) => format!("PASS     {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                format!("FAIL     {d}")
            }
            Verdict::NotRun(d) => format!("NOT-RUN  {d}"),
        };
        println!("criterion {id:>2} {name:<30} {line}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
