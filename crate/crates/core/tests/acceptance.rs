//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failures exit nonzero only when `ACCEPTANCE_STRICT` is set.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use csm_core::dynamics::{
    decomposed_leo_constant, equi_accessibility_constants, interchange_point, transitivity_check, CheckConfig,
    TransitivityStatus,
};
use csm_core::entropy::{
    entropy_lap, entropy_transfer, horseshoe_lower_bound, horseshoe_search, lap_counts, markov_detect, perron_root,
};
use csm_core::hofbauer::{build_diagram, loop_certificate, loops_at, scc_loop_growth, top_scc};
use csm_core::lab::{
    best_entropy, example1, example2, example2_map, golden_map, horseshoe3, interchange_map, tent2,
    theorem1_experiment, theorem2_experiment, theorem3_experiment, Family, LabConfig,
};
use csm_core::parry::{constant_slope_model, CSModel, CsConfig, MonotoneCDF};
use csm_core::rational::{int, rat, to_f64, Rational};
use csm_core::{PLMap, RationalInterval};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Example 1 models shared by criteria 4 and 9.
#[derive(Default)]
struct Cache {
    example1: BTreeMap<Rational, CSModel>,
}

impl Cache {
    fn example1_model(&mut self, t: &Rational) -> &CSModel {
        self.example1.entry(t.clone()).or_insert_with(|| {
            let g = example1(t).unwrap().g.unwrap();
            constant_slope_model(&g, &CsConfig::default()).unwrap()
        })
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn criterion1(_: &mut Cache) -> Outcome {
    let start = Instant::now();
    let f = horseshoe3();
    let ln3 = 3f64.ln();
    let lap = entropy_lap(&f, 20, 1 << 20).unwrap();
    let transfer = entropy_transfer(&f, 1 << 10, 1000, 1e-12).unwrap();
    let md = markov_detect(&f, 16).unwrap();
    let markov = perron_root(&md.matrix, &rat(1, 1_000_000_000)).unwrap();
    let elapsed = start.elapsed();
    let pass = close(lap.value, ln3, 1e-9)
        && close(transfer.value, ln3, 1e-9)
        && close(markov.value, ln3, 1e-9)
        && markov.width() <= 1e-9
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "lap {:.12} transfer {:.12} markov {:.12} (width {:e}) vs log 3 = {ln3:.12}; {elapsed:.2?}",
            lap.value,
            transfer.value,
            markov.value,
            markov.width()
        ),
    )
}

fn criterion2(_: &mut Cache) -> Outcome {
    let start = Instant::now();
    let f = example2_map();
    let target = 1.81299f64.ln();
    let transfer = entropy_transfer(&f, 1 << 12, 20_000, 1e-13).unwrap();
    let laps = lap_counts(&f, 18, 1 << 22).unwrap();
    let upper = (laps.counts[17] as f64).ln() / 18.0;
    let (lower, hs) = horseshoe_lower_bound(&f, 2).unwrap();
    let md = markov_detect(&f, 64).unwrap();
    let markov = perron_root(&md.matrix, &rat(1, 1_000_000_000_000)).unwrap();
    let elapsed = start.elapsed();
    let pass = close(transfer.value, target, 2e-3)
        && upper > transfer.value
        && hs.is_some()
        && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "transfer {:.6} (lambda {:.6}) vs log 1.81299 = {target:.6}, off by {:.2e}; lap(f^18) bound {upper:.6}; horseshoe bound {lower:.6}; exact Markov {:.6} (lambda {:.6}); {elapsed:.2?}",
            transfer.value,
            transfer.value.exp(),
            (transfer.value - target).abs(),
            markov.value,
            markov.value.exp()
        ),
    )
}

fn criterion3(_: &mut Cache) -> Outcome {
    let f = example2_map();
    let h_f = entropy_transfer(&f, 1 << 12, 20_000, 1e-13).unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for t in [rat(1, 2), rat(1, 4), rat(1, 8)] {
        let g = example2(&t).unwrap().g;
        let g2 = g.compose(&g);
        let found = horseshoe_search(&g, 2, 4).unwrap();
        let ok = found.as_ref().is_some_and(|hs| hs.verify(&g2) && hs.intervals.len() == 4);
        let bound = found.as_ref().map_or(0.0, |hs| hs.entropy_bound());
        pass &= ok && close(bound, 2f64.ln(), 1e-15) && bound > h_f.upper_bound;
        notes.push(format!("t={t}: {}", if ok { format!("4-horseshoe, h >= {bound:.6}") } else { "none".into() }));
    }
    outcome(pass, format!("{}; h(f) upper {:.6}", notes.join(", "), h_f.upper_bound))
}

fn criterion4(cache: &mut Cache) -> Outcome {
    let f = horseshoe3();
    let g0 = example1(&int(0)).unwrap().g_tilde;
    let half_gap = to_f64(&g0.sup_distance(&f)) / 2.0;
    let mut pass = true;
    let mut notes = Vec::new();
    for t in [rat(1, 4), rat(1, 8), rat(1, 16)] {
        let b = example1(&t).unwrap();
        let g = b.g.clone().unwrap();
        let h = best_entropy(&g, 64, 1 << 12).unwrap().value;
        let target = (3.0 + 2.0 * to_f64(&t)).ln();
        let cs = cache.example1_model(&t);
        let d_model = to_f64(&cs.model.sup_distance(&b.g_tilde));
        let d_psi = cs.psi.sup_distance(&b.psi_cdf().unwrap());
        let d_wrong = to_f64(&cs.model.sup_distance(&f));
        let ok = close(h, target, 1e-6) && d_model < 1e-4 && d_psi < 1e-4 && d_wrong > half_gap;
        pass &= ok;
        notes.push(format!(
            "t={t}: |h-log(3+2t)| {:.1e}, d(model) {d_model:.1e}, d(psi) {d_psi:.1e}, d(model, f) {d_wrong:.4}",
            (h - target).abs()
        ));
    }
    outcome(pass, format!("{}; d(g0~, f)/2 = {half_gap:.4}", notes.join("; ")))
}

fn criterion5(_: &mut Cache) -> Outcome {
    let ss = [rat(1, 8), rat(1, 16), rat(1, 32)];
    let table = theorem3_experiment(&Family::ModalityPreserving, &ss, &LabConfig::default()).unwrap();
    let ds = table.numbers("d_model");
    let status = table.column("status");
    let decreasing = ds.iter().all(|d| d.is_finite()) && ds.windows(2).all(|w| w[1] < w[0]);
    let pass = decreasing && ds.last().is_some_and(|&d| d < 1e-2);
    let cells: Vec<String> = ss
        .iter()
        .zip(&ds)
        .zip(&status)
        .map(|((s, d), st)| format!("s={s}: {d:.4} ({st})"))
        .collect();
    outcome(pass, format!("d(Phi(f_s), Phi(f)): {}", cells.join(", ")))
}

fn criterion6(_: &mut Cache) -> Outcome {
    let cfg = LabConfig::default();
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, f) in [("horseshoe", horseshoe3()), ("tent", tent2())] {
        let table = theorem1_experiment(&f, &rat(1, 2), 12, 1 << 26, &cfg).unwrap();
        let ones = table.numbers("ratio").iter().all(|&r| r == 1.0);
        pass &= ones && table.rows.len() == 12;
        notes.push(format!("{name} ratios all 1: {ones}"));
    }
    let table = theorem1_experiment(&golden_map(), &rat(1, 3), 25, 1 << 26, &cfg).unwrap();
    let ratios = table.numbers("ratio");
    let min = ratios[ratios.len() / 2..].iter().copied().fold(f64::INFINITY, f64::min);
    pass &= min > 0.1 && table.meta_value("complete") == Some("true");
    notes.push(format!("golden trailing min {min:.4}"));
    outcome(pass, notes.join("; "))
}

fn criterion7(_: &mut Cache) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, f) in [("horseshoe", horseshoe3()), ("tent", tent2()), ("golden", golden_map()), ("example2", example2_map())] {
        let d = build_diagram(&f, 40, 10_000).unwrap();
        let md = markov_detect(&f, 64).unwrap();
        let log_lambda = perron_root(&md.matrix, &rat(1, 1_000_000_000_000)).unwrap().value;
        let (scc, _) = top_scc(&d).unwrap();
        let growth = scc_loop_growth(&d, &scc, 30);
        let mut disjoint = true;
        let mut checked = 0;
        for &v in &scc {
            for n in 1..=6 {
                let certs: Vec<RationalInterval> = loops_at(&d, v, n, 4096)
                    .iter()
                    .map(|p| loop_certificate(&f, &d, p).unwrap().interval)
                    .collect();
                checked += certs.len();
                for i in 0..certs.len() {
                    for j in i + 1..certs.len() {
                        disjoint &= certs[i].is_disjoint(&certs[j]);
                    }
                }
            }
        }
        let ok = d.is_exact() && close(growth, log_lambda, 1e-2) && disjoint;
        pass &= ok;
        notes.push(format!(
            "{name}: exact {}, {} vertices, growth {growth:.4} vs {log_lambda:.4}, {checked} certificates disjoint {disjoint}",
            d.is_exact(),
            d.len()
        ));
    }
    outcome(pass, notes.join("; "))
}

fn random_homeomorphism(rng: &mut ChaCha8Rng) -> PLMap {
    let k = rng.gen_range(1..=4);
    let mut xs: Vec<i64> = (0..k).map(|_| rng.gen_range(1..64)).collect();
    let mut ys: Vec<i64> = (0..k).map(|_| rng.gen_range(1..64)).collect();
    xs.sort_unstable();
    ys.sort_unstable();
    xs.dedup();
    ys.dedup();
    let m = xs.len().min(ys.len());
    let mut dots = vec![(int(0), int(0))];
    dots.extend((0..m).map(|i| (rat(xs[i], 64), rat(ys[i], 64))));
    dots.push((int(1), int(1)));
    PLMap::connect_the_dots(dots).unwrap()
}

fn criterion8(cache: &mut Cache) -> Outcome {
    let cfg = CsConfig::default();
    let f = example1(&rat(1, 8)).unwrap().g.unwrap();
    let base = cache.example1_model(&rat(1, 8)).clone();
    let again = constant_slope_model(&base.model, &cfg).unwrap();
    let idem = to_f64(&again.model.sup_distance(&base.model));
    let idem_psi = again.psi.sup_distance(&MonotoneCDF::identity());
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    let mut worst_psi: f64 = 0.0;
    for _ in 0..20 {
        let q = random_homeomorphism(&mut rng);
        let g = q.compose(&f.compose(&q.inverse().unwrap()));
        let cs = constant_slope_model(&g, &cfg).unwrap();
        worst = worst.max(to_f64(&cs.model.sup_distance(&base.model)));
        let expected = MonotoneCDF::from_plmap(&q).unwrap();
        let composed: Vec<f64> = cs.psi.xs().iter().map(|&x| expected.eval(base.psi.eval(x))).collect();
        let qpsi = MonotoneCDF::from_floats(cs.psi.xs().to_vec(), composed).unwrap();
        worst_psi = worst_psi.max(cs.psi.sup_distance(&qpsi));
    }
    let start = random_homeomorphism(&mut rng);
    let alt = CsConfig { initial: Some(MonotoneCDF::from_plmap(&start).unwrap()), ..cfg.clone() };
    let other = constant_slope_model(&f, &alt).unwrap();
    let unique = other.psi.inverse().sup_distance(&base.psi.inverse());
    let pass = idem < 1e-4 && idem_psi < 1e-4 && worst < 1e-4 && unique < 10.0 * cfg.tol;
    outcome(
        pass,
        format!(
            "idempotence {idem:.1e} (psi {idem_psi:.1e}); worst conjugate model gap {worst:.1e} (psi vs q∘psi {worst_psi:.1e}); two starts differ by {unique:.1e}"
        ),
    )
}

fn criterion9(cache: &mut Cache) -> Outcome {
    let eps = [0.2, 0.1, 0.05];
    let ts = [rat(1, 4), rat(1, 8), rat(1, 16), rat(1, 32)];
    let family: Vec<MonotoneCDF> = ts.iter().map(|t| cache.example1_model(t).psi.inverse()).collect();
    let rows = csm_core::dynamics::equicontinuity_modulus(&family, &eps).unwrap();
    let positive = rows.iter().all(|r| r.delta > 0.0);
    let single =
        theorem2_experiment(&Family::Fixed(horseshoe3()), &[int(0)], &eps, &LabConfig::default()).unwrap();
    let exact = single.numbers("delta") == eps;
    let deltas: Vec<String> = rows.iter().map(|r| format!("{}: {:.4}", r.epsilon, r.delta)).collect();
    outcome(positive && exact, format!("delta {}; singleton delta = epsilon: {exact}", deltas.join(", ")))
}

fn interchange_samples() -> Vec<PLMap> {
    let mut out = vec![interchange_map()];
    for d in [rat(1, 64), rat(-1, 64), rat(1, 128)] {
        out.push(
            PLMap::connect_the_dots(vec![
                (int(0), int(1)),
                (rat(1, 2), rat(1, 2)),
                (rat(3, 4) + &d, int(0)),
                (int(1), rat(1, 2)),
            ])
            .unwrap(),
        );
        out.push(
            PLMap::connect_the_dots(vec![
                (int(0), int(1)),
                (rat(1, 4), rat(3, 4) + &d),
                (rat(1, 2), rat(1, 2)),
                (rat(3, 4), int(0)),
                (int(1), rat(1, 2)),
            ])
            .unwrap(),
        );
        out.push(
            PLMap::connect_the_dots(vec![
                (int(0), int(1)),
                (rat(1, 2), rat(1, 2)),
                (rat(3, 4), int(0)),
                (int(1), rat(1, 2) + csm_core::rational::abs(&d)),
            ])
            .unwrap(),
        );
    }
    out
}

fn criterion10(_: &mut Cache) -> Outcome {
    let f = interchange_map();
    let e = interchange_point(&f).unwrap();
    let Some(e) = e else {
        return outcome(false, "no interchange point");
    };
    let left = RationalInterval::closed(int(0), e.clone());
    let right = RationalInterval::closed(e.clone(), int(1));
    let first = right.is_subset(&f.image_interval(&left));
    let half_open = RationalInterval::new(int(0), e.clone(), false, true);
    let second = left.is_subset(&f.image_interval(&f.image_interval(&half_open)));
    let leo = decomposed_leo_constant(&f, &rat(1, 4), 40).unwrap();
    let verdict = transitivity_check(&f, &CheckConfig::default()).unwrap();
    let samples = interchange_samples();
    let rho_grid: Vec<Rational> = (1..=16).map(|k| rat(k, 128)).collect();
    let zeta_grid = [rat(1, 32), rat(1, 16), rat(1, 8)];
    let report = equi_accessibility_constants(&f, &rho_grid, &zeta_grid, &samples).unwrap();
    let covered = report.rho.is_some() && report.interchange_point.is_some() && report.rows.iter().all(|r| r.covers);
    let pass = first && second && leo.is_some() && verdict.status == TransitivityStatus::TransitiveDecomposed && covered;
    outcome(
        pass,
        format!(
            "e = {e}; f([0,e]) ⊇ [e,1]: {first}; f²([0,e)) ⊇ [0,e]: {second}; decomposed LEO k = {:?}; composite cover on [rho, e-rho] with rho = {} for {} samples (zeta {}): {covered}",
            leo.map(|(k, _)| k),
            report.rho.as_ref().map_or("none".into(), |r| r.to_string()),
            samples.len(),
            report.zeta
        ),
    )
}

type Criterion = fn(&mut Cache) -> Outcome;

fn main() {
    let criteria: [(usize, Criterion); 10] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
        (9, criterion9),
        (10, criterion10),
    ];
    let mut cache = Cache::default();
    let mut failed = Vec::new();
    for (id, run) in criteria {
        let start = Instant::now();
        let o = run(&mut cache);
        let mark = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {mark} [{:.1?}] {}", start.elapsed(), o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
