//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report prints in order.
//! Oracles here are written against raw amplitude arrays and do not call the
//! library's measurement code.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use vaidman_core::entanglement::{concurrence_sum, three_tangle};
use vaidman_core::games::{
    classical_best, exact_quantum_win, ghz_xy_closed_form, monte_carlo_rule_maker,
    monte_carlo_win, per_set_quantum_win, rule_maker_win, w_zy_closed_form, wn_zy_closed_form,
    xy_game_spec, zy_game_spec, GameSpec, McEstimate, Question, Ratio, RuleMakerSpec,
};
use vaidman_core::protocols::{
    detect_cheating, extract_key, facilitated_session, qss_alice_inference, qss_session,
    AxisState, BasisPolicy, CheatModel, Party, RoundMode, SessionParams, Verdict, DEFAULT_SLACK,
    DEFAULT_THRESHOLD,
};
use vaidman_core::qcore::measure_single;
use vaidman_core::states::{
    ghz_class, standard_ghz, standard_w, w_class, w_n, GhzClassParams, WClassParams, WnParams,
};
use vaidman_core::transport::{run_roles, TransportKind, TransportOptions};
use vaidman_core::StateVector;

type C = Complex64;
type Mat2 = [[C; 2]; 2];

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn pauli(q: Question) -> Mat2 {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match q {
        Question::X => [[z, o], [o, z]],
        Question::Y => [[z, -i], [i, z]],
        Question::Z => [[o, z], [z, -o]],
    }
}

/// `<ψ| A⊗B⊗C |ψ>` summed element by element.
fn expect3(amps: &[C], ops: [Mat2; 3]) -> f64 {
    let mut total = c(0.0, 0.0);
    for i in 0..8 {
        for j in 0..8 {
            let mut m = c(1.0, 0.0);
            for (q, op) in ops.iter().enumerate() {
                let shift = 2 - q;
                m *= op[(i >> shift) & 1][(j >> shift) & 1];
            }
            total += amps[i].conj() * m * amps[j];
        }
    }
    total.re
}

/// Oracle win probability: each set wins with `(1 + target·<P⊗P⊗P>)/2`.
fn oracle_game_win(state: &StateVector, sets: &[([Question; 3], f64)]) -> f64 {
    let n = sets.len() as f64;
    sets.iter()
        .map(|(qs, target)| (1.0 + target * expect3(state.amps(), qs.map(pauli))) / 2.0 / n)
        .sum()
}

fn xy_sets() -> Vec<([Question; 3], f64)> {
    use Question::{X, Y};
    vec![([X, X, X], 1.0), ([X, Y, Y], -1.0), ([Y, X, Y], -1.0), ([Y, Y, X], -1.0)]
}

fn zy_sets() -> Vec<([Question; 3], f64)> {
    use Question::{Y, Z};
    vec![([Z, Z, Z], -1.0), ([Z, Y, Y], 1.0), ([Y, Z, Y], 1.0), ([Y, Y, Z], 1.0)]
}

/// Oracle rule-maker win: Charlie projects on `b0 = (sinλ, -cosλ)` or
/// `b1 = (cosλ, sinλ)`; then XX or ZZ with equal odds, with b0 asking for
/// XX = +1, ZZ = -1 and b1 the opposite.
fn oracle_rule_maker(state: &StateVector, lambda: f64) -> f64 {
    let (s, co) = (lambda.sin(), lambda.cos());
    let branches = [([s, -co], [1.0, -1.0]), ([co, s], [-1.0, 1.0])];
    let mut win = 0.0;
    for (ket, targets) in branches {
        // unnormalized state of A and B
        let mut phi = [c(0.0, 0.0); 4];
        for (ab, slot) in phi.iter_mut().enumerate() {
            for (cbit, k) in ket.iter().enumerate() {
                *slot += state.amp(ab * 2 + cbit) * *k;
            }
        }
        let p: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
        for (q, t) in [Question::X, Question::Z].into_iter().zip(targets) {
            let op = pauli(q);
            let mut e = c(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    e += phi[i].conj() * op[i >> 1][j >> 1] * op[i & 1][j & 1] * phi[j];
                }
            }
            win += 0.5 * (p + t * e.re) / 2.0;
        }
    }
    win
}

type Criterion = fn() -> (bool, String);

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, title: &str, pass: bool, detail: String, elapsed: Duration) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "[{}] {id:>2}. {title}: {detail} ({:.1} ms)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64() * 1e3
        );
    }
}

fn criterion_1() -> (bool, String) {
    let ghz = standard_ghz();
    let spec = xy_game_spec();
    let start = Instant::now();
    let win = exact_quantum_win(&ghz, &spec).unwrap();
    let took = start.elapsed();
    let pass = (win - 1.0).abs() <= 1e-12 && took < Duration::from_millis(1);
    (pass, format!("win = {win}, enumeration took {:.3} ms", took.as_secs_f64() * 1e3))
}

fn criterion_2() -> (bool, String) {
    let spec = xy_game_spec();
    let sets = xy_sets();
    let (mut gap, mut oracle_gap, mut tau_gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut threshold_ok = true;
    for k in 1..=1000 {
        let theta = FRAC_PI_4 * k as f64 / 1000.0;
        let s = ghz_class(GhzClassParams::new(theta)).unwrap();
        let win = exact_quantum_win(&s, &spec).unwrap();
        let closed = 0.5 * (1.0 + (2.0 * theta).sin());
        gap = gap.max((win - closed).abs());
        oracle_gap = oracle_gap.max((win - oracle_game_win(&s, &sets)).abs());
        let tau = three_tangle(&s).unwrap().tau;
        tau_gap = tau_gap.max((tau - (2.0 * theta).sin().powi(2)).abs());
        threshold_ok &= (win > 0.75) == (tau > 0.25);
        gap = gap.max((ghz_xy_closed_form(theta) - closed).abs());
    }
    let pass = gap <= 1e-12 && oracle_gap <= 1e-12 && tau_gap <= 1e-9 && threshold_ok;
    (
        pass,
        format!(
            "closed-form gap {gap:.1e}, oracle gap {oracle_gap:.1e}, tau gap {tau_gap:.1e}, threshold equivalence {threshold_ok}"
        ),
    )
}

fn criterion_3() -> (bool, String) {
    let w = standard_w();
    let win = exact_quantum_win(&w, &zy_game_spec()).unwrap();
    let per_set = per_set_quantum_win(&w, &zy_game_spec()).unwrap();
    let oracle: Vec<f64> = zy_sets()
        .iter()
        .map(|(qs, t)| (1.0 + t * expect3(w.amps(), qs.map(pauli))) / 2.0)
        .collect();
    let expected = [1.0, 5.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0];
    let per_ok = per_set
        .iter()
        .zip(&oracle)
        .zip(&expected)
        .all(|((p, o), e)| (p - e).abs() <= 1e-12 && (o - e).abs() <= 1e-12);
    let pass = (win - 0.875).abs() <= 1e-12 && per_ok;
    (pass, format!("win = {win}, per question {per_set:.6?}"))
}

fn criterion_4() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = zy_game_spec();
    let (mut gap, mut linear_gap) = (0.0f64, 0.0f64);
    let mut threshold_ok = true;
    for _ in 0..100 {
        // uniform on the positive octant of the sphere
        let v: [f64; 3] = std::array::from_fn(|_| {
            let g: f64 = rng.random::<f64>().max(1e-300);
            -g.ln()
        });
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let [a, b, cc] = v.map(|x| x / norm);
        let s = w_class(WClassParams::real(a, b, cc).unwrap()).unwrap();
        let win = exact_quantum_win(&s, &spec).unwrap();
        let closed = 0.25 * (2.5 + a * b + b * cc + a * cc);
        gap = gap.max((win - closed).abs());
        let sum = concurrence_sum(&s).unwrap();
        linear_gap = linear_gap.max((win - (0.625 + sum / 8.0)).abs());
        threshold_ok &= (sum > 1.0) == (win > 0.75);
        let lib = w_zy_closed_form(&WClassParams::real(a, b, cc).unwrap()).unwrap();
        gap = gap.max((lib - closed).abs());
    }
    let pass = gap <= 1e-12 && linear_gap <= 1e-9 && threshold_ok;
    (
        pass,
        format!("closed-form gap {gap:.1e}, 5/8 + S/8 gap {linear_gap:.1e}, threshold equivalence {threshold_ok}"),
    )
}

fn criterion_5() -> (bool, String) {
    let spec = zy_game_spec();
    let mut gap = 0.0f64;
    let mut above = true;
    let mut first = (0.0, 0.0);
    for n in 1..=50u64 {
        let s = w_n(WnParams::new(n, 0.0, 0.0).unwrap()).unwrap();
        let win = exact_quantum_win(&s, &spec).unwrap();
        let nf = n as f64;
        let closed = (5.0 + 5.0 * nf + (nf + 1.0).sqrt() + nf.sqrt() * ((nf + 1.0).sqrt() + 1.0)) / (8.0 * (nf + 1.0));
        gap = gap.max((win - closed).abs()).max((wn_zy_closed_form(n) - closed).abs());
        above &= win > 0.75;
        if n == 1 {
            first = (win, concurrence_sum(&s).unwrap());
        }
    }
    let pass = gap <= 1e-12 && (first.0 - 0.86425).abs() <= 1e-4 && (first.1 - 1.914).abs() <= 1e-3 && above;
    (
        pass,
        format!(
            "closed-form gap {gap:.1e}, n=1 win {:.6} (0.86425), concurrence sum {:.4} (1.914), all above 0.75: {above}",
            first.0, first.1
        ),
    )
}

fn criterion_6() -> (bool, String) {
    let check = |spec: &GameSpec| {
        let best = classical_best(spec);
        (best.probability == Ratio::new(3, 4) && best.strategies_searched == 64, best.probability)
    };
    let (xy_ok, xy) = check(&xy_game_spec());
    let (zy_ok, zy) = check(&zy_game_spec());
    (xy_ok && zy_ok, format!("XY best {xy}, ZY best {zy} over 64 strategies each"))
}

fn criterion_7() -> (bool, String) {
    let w = standard_w();
    let ghz = standard_ghz();
    let at = |s: &StateVector, l: f64| rule_maker_win(s, &RuleMakerSpec::new(l).unwrap()).unwrap();
    let hi = at(&w, FRAC_PI_2);
    let lo = at(&w, 0.0);
    let mut curve_gap = 0.0f64;
    let mut ghz_dev = (0.0f64, 0.0);
    for k in 0..=360 {
        let lambda = PI * k as f64 / 360.0;
        curve_gap = curve_gap.max((at(&w, lambda) - oracle_rule_maker(&w, lambda)).abs());
        let g = at(&ghz, lambda);
        curve_gap = curve_gap.max((g - oracle_rule_maker(&ghz, lambda)).abs());
        if (g - 0.5).abs() > ghz_dev.0 {
            ghz_dev = ((g - 0.5).abs(), lambda);
        }
    }
    let g0 = at(&ghz, 0.0);
    let g1 = at(&ghz, FRAC_PI_2);
    let pass = (hi - 11.0 / 12.0).abs() <= 1e-12
        && (lo - 1.0 / 12.0).abs() <= 1e-12
        && curve_gap <= 1e-12
        && (g0 - 0.5).abs() <= 1e-12
        && (g1 - 0.5).abs() <= 1e-12;
    (
        pass,
        format!(
            "W: {lo:.4} at 0, {hi:.4} at pi/2, oracle gap {curve_gap:.1e}; GHZ endpoints {g0:.3}/{g1:.3}; \
             GHZ curve is not flat (max |win - 1/2| = {:.3} at lambda = {:.4}), reported as a discrepancy",
            ghz_dev.0, ghz_dev.1
        ),
    )
}

fn criterion_8() -> (bool, String) {
    use AxisState::{MinusX as MX, MinusY as MY, PlusX as PX, PlusY as PY};
    let table = [[PX, MX, MY, PY], [MX, PX, PY, MY], [MY, PY, MX, PX], [PY, MY, PX, MX]];
    let order = [PX, MX, PY, MY];
    let ghz = standard_ghz();
    let mut worst = 1.0f64;
    let mut cells = 0;
    for (i, bob) in order.iter().enumerate() {
        for (j, charlie) in order.iter().enumerate() {
            let b = &measure_single(&ghz, 1, bob.axis().basis()).unwrap()[usize::from(bob.sign() < 0)];
            let post = b.post_state.as_ref().unwrap();
            let cm = &measure_single(post, 2, charlie.axis().basis()).unwrap()[usize::from(charlie.sign() < 0)];
            let expected = table[i][j].ket().tensor(&bob.ket()).unwrap().tensor(&charlie.ket()).unwrap();
            let f = cm.post_state.as_ref().unwrap().fidelity(&expected);
            worst = worst.min(f);
            if f >= 1.0 - 1e-12 && qss_alice_inference(*bob, *charlie) == table[i][j] {
                cells += 1;
            }
        }
    }
    let m = 100_000u64;
    let t = qss_session(m, 8).unwrap();
    let accepted = t.rounds.iter().filter(|r| r.accepted).count() as f64;
    let rate = accepted / m as f64;
    let sigma = (0.25 / m as f64).sqrt();
    let pass = cells == 16 && (rate - 0.5).abs() <= 3.0 * sigma;
    (
        pass,
        format!("{cells}/16 cells, worst fidelity 1 - {:.1e}; sifting rate {rate:.5} (0.5 ± {:.5})", 1.0 - worst, 3.0 * sigma),
    )
}

fn criterion_9() -> (bool, String) {
    // Charlie announces the basis, so all ~3300 control rounds count; under
    // sifting only ~1700 survive and the 0.02 band is under 2 standard errors.
    let m = 10_000u64;
    let policy = BasisPolicy::CharlieAnnounces;
    let honest = facilitated_session(m, FRAC_PI_2, policy, CheatModel::Honest, 9).unwrap();
    let keys = extract_key(&honest).unwrap();
    let h = detect_cheating(&honest, DEFAULT_THRESHOLD, DEFAULT_SLACK).unwrap();
    let cheat = facilitated_session(m, FRAC_PI_2, policy, CheatModel::RandomAnnouncer(Party::Bob), 9).unwrap();
    let r = detect_cheating(&cheat, DEFAULT_THRESHOLD, DEFAULT_SLACK).unwrap();
    let single_ok = keys.agreement_rate() == Some(1.0)
        && (h.compliance_rate.unwrap() - 0.75).abs() <= 0.02
        && h.verdict == Verdict::Honest
        && (r.compliance_rate.unwrap() - 0.5).abs() <= 0.02
        && r.verdict == Verdict::CheatingSuspected;

    // Verdict error rate over 1000 honest and 1000 cheating sessions. At
    // ~3300 control rounds the default slack is about 4 standard errors.
    let sessions = 1000u64;
    let outcomes: Vec<(bool, usize, f64)> = (0..2 * sessions)
        .into_par_iter()
        .map(|i| {
            let cheat = if i < sessions {
                CheatModel::Honest
            } else if i % 2 == 0 {
                CheatModel::RandomAnnouncer(Party::Alice)
            } else {
                CheatModel::RandomAnnouncer(Party::Bob)
            };
            let t = facilitated_session(m, FRAC_PI_2, policy, cheat, 1_000 + i).unwrap();
            let rep = detect_cheating(&t, DEFAULT_THRESHOLD, DEFAULT_SLACK).unwrap();
            let correct = match cheat {
                CheatModel::Honest => rep.verdict == Verdict::Honest,
                _ => rep.verdict == Verdict::CheatingSuspected,
            };
            (correct, rep.control_rounds, rep.compliance_rate.unwrap_or(f64::NAN))
        })
        .collect();
    let errors = outcomes.iter().filter(|(ok, ..)| !ok).count();
    let min_control = outcomes.iter().map(|(_, n, _)| *n).min().unwrap();
    let rate = errors as f64 / outcomes.len() as f64;
    let mean_honest = outcomes[..sessions as usize].iter().map(|(.., r)| r).sum::<f64>() / sessions as f64;
    let pass = single_ok && rate < 1e-3 && min_control >= 500 && (mean_honest - 0.75).abs() <= 0.002;
    (
        pass,
        format!(
            "agreement {:?}, honest compliance {:.4} ({:?}), random:bob compliance {:.4} ({:?}); \
             {errors} verdict errors in {} sessions (min {min_control} control rounds, mean honest compliance {mean_honest:.4})",
            keys.agreement_rate().unwrap(),
            h.compliance_rate.unwrap(),
            h.verdict,
            r.compliance_rate.unwrap(),
            r.verdict,
            outcomes.len()
        ),
    )
}

enum McCase {
    Game(&'static str, StateVector, GameSpec),
    RuleMaker(&'static str, StateVector, f64),
}

impl McCase {
    fn exact(&self) -> f64 {
        match self {
            McCase::Game(_, s, g) => exact_quantum_win(s, g).unwrap(),
            McCase::RuleMaker(_, s, l) => rule_maker_win(s, &RuleMakerSpec::new(*l).unwrap()).unwrap(),
        }
    }

    fn sample(&self, trials: u64, seed: u64) -> McEstimate {
        match self {
            McCase::Game(_, s, g) => monte_carlo_win(s, g, trials, seed).unwrap(),
            McCase::RuleMaker(_, s, l) => {
                monte_carlo_rule_maker(s, &RuleMakerSpec::new(*l).unwrap(), trials, seed).unwrap()
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            McCase::Game(n, ..) | McCase::RuleMaker(n, ..) => n,
        }
    }
}

fn criterion_10() -> (bool, String) {
    let ghz = |t: f64| ghz_class(GhzClassParams::new(t)).unwrap();
    let w = |a: f64, b: f64, cc: f64| {
        let n = (a * a + b * b + cc * cc).sqrt();
        w_class(WClassParams::real(a / n, b / n, cc / n).unwrap()).unwrap()
    };
    let cases = vec![
        McCase::Game("ghz(pi/4) xy", ghz(FRAC_PI_4), xy_game_spec()),
        McCase::Game("ghz(pi/12) xy", ghz(PI / 12.0), xy_game_spec()),
        McCase::Game("ghz(pi/6) zy", ghz(PI / 6.0), zy_game_spec()),
        McCase::Game("w-std zy", standard_w(), zy_game_spec()),
        McCase::Game("w-std xy", standard_w(), xy_game_spec()),
        McCase::Game("w(1,2,3) zy", w(1.0, 2.0, 3.0), zy_game_spec()),
        McCase::Game("w_1 zy", w_n(WnParams::new(1, 0.0, 0.0).unwrap()).unwrap(), zy_game_spec()),
        McCase::Game("w_7 phased zy", w_n(WnParams::new(7, 0.3, 1.1).unwrap()).unwrap(), zy_game_spec()),
        McCase::RuleMaker("rule-maker w(pi/3)", standard_w(), PI / 3.0),
        McCase::RuleMaker("rule-maker ghz(pi/5)", standard_ghz(), PI / 5.0),
    ];
    let trials = 1_000_000;
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let mut worst_z = 0.0f64;
    let mut failures = Vec::new();
    for (k, case) in cases.iter().enumerate() {
        let seed = 100 + k as u64;
        let exact = case.exact();
        let a = one.install(|| case.sample(trials, seed));
        let b = four.install(|| case.sample(trials, seed));
        let again = case.sample(trials, seed);
        let z = if a.std_error > 0.0 { (a.estimate - exact).abs() / a.std_error } else { 0.0 };
        worst_z = worst_z.max(z);
        if !(a.agrees_with(exact, 4.0) && a == b && a == again) {
            failures.push(case.name());
        }
    }
    (
        failures.is_empty(),
        format!(
            "{} cases at 1e6 trials, worst |z| = {worst_z:.2}, identical across 1 and 4 threads; failing: {failures:?}",
            cases.len()
        ),
    )
}

fn criterion_11() -> (bool, String) {
    let cases = [
        SessionParams::facilitated(100, FRAC_PI_2, BasisPolicy::SiftDiscard, CheatModel::Honest, 11),
        SessionParams::facilitated(100, FRAC_PI_2, BasisPolicy::CharlieAnnounces, CheatModel::OutcomeFlipper(Party::Alice), 12),
        SessionParams::qss(100, 13),
    ];
    let mut identical = 0;
    for params in &cases {
        let a = run_roles(params, TransportKind::InProcess, TransportOptions::default()).unwrap();
        let b = run_roles(params, TransportKind::Socket, TransportOptions::default()).unwrap();
        let (ja, jb) = (a.transcript.to_jsonl(), b.transcript.to_jsonl());
        if ja == jb && a.transcript.complete && a.transcript.rounds.len() == 100 {
            identical += 1;
        }
    }
    let sample = run_roles(&cases[0], TransportKind::InProcess, TransportOptions::default()).unwrap();
    let controls = sample
        .transcript
        .rounds
        .iter()
        .filter(|r| r.accepted && r.mode == RoundMode::Control)
        .count();
    (
        identical == cases.len(),
        format!("{identical}/{} sessions byte-identical over in-process and TCP ({controls} control rounds in the first)", cases.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 11] = [
        ("standard GHZ wins the XY game", criterion_1),
        ("GHZ(theta) XY curve and tangle threshold", criterion_2),
        ("standard W on the ZY game", criterion_3),
        ("real W simplex closed form and concurrence-sum line", criterion_4),
        ("W_n closed form", criterion_5),
        ("classical bound 3/4", criterion_6),
        ("rule-maker game", criterion_7),
        ("GHZ secret-sharing table and sifting rate", criterion_8),
        ("facilitated protocol keys and cheat detection", criterion_9),
        ("Monte Carlo agrees with enumeration", criterion_10),
        ("transport transparency", criterion_11),
    ];
    let mut report = Report { failures: 0 };
    let total = Instant::now();
    for (i, (title, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = f();
        report.line(i + 1, title, pass, detail, start.elapsed());
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.2} s",
        criteria.len() - report.failures,
        criteria.len(),
        total.elapsed().as_secs_f64()
    );
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
