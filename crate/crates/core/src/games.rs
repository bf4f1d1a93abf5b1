//! Three-player parity games: the XY (GHZ) game, the ZY (W) game and the
//! rule-maker game where the third party's λ-basis outcome picks the rule.
//!
//! Quantum winning probabilities are exact enumerations over the joint outcome
//! distribution. Monte Carlo sampling and the exhaustive classical search are
//! independent routes used to cross-check them.

use std::fmt;
use std::str::FromStr;

pub use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entanglement::{concurrence_sum, three_tangle};
use crate::error::{Error, Result};
use crate::qcore::{joint_distribution, measure_single, MeasurementBasis, Outcome, StateVector};
use crate::states::{ghz_class, standard_ghz, standard_w, w_class, w_n, GhzClassParams, WClassParams, WnParams};

/// Best classical winning probability for both parity games.
pub const CLASSICAL_BOUND: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Question {
    X,
    Y,
    Z,
}

impl Question {
    pub fn basis(self) -> MeasurementBasis {
        match self {
            Question::X => MeasurementBasis::X,
            Question::Y => MeasurementBasis::Y,
            Question::Z => MeasurementBasis::Z,
        }
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Question::X => 'X',
            Question::Y => 'Y',
            Question::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// One question per player, Alice first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuestionSet(pub [Question; 3]);

impl QuestionSet {
    pub fn bases(&self) -> [MeasurementBasis; 3] {
        self.0.map(Question::basis)
    }
}

impl fmt::Display for QuestionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in self.0 {
            write!(f, "{q}")?;
        }
        Ok(())
    }
}

impl FromStr for QuestionSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let qs: Vec<Question> = s
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'X' => Ok(Question::X),
                'Y' => Ok(Question::Y),
                'Z' => Ok(Question::Z),
                other => Err(Error::InvalidGame(format!("unknown question {other:?}"))),
            })
            .collect::<Result<_>>()?;
        let arr: [Question; 3] = qs
            .try_into()
            .map_err(|_| Error::InvalidGame(format!("question set {s:?} needs 3 letters")))?;
        Ok(QuestionSet(arr))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameRound {
    pub questions: QuestionSet,
    pub probability: Ratio<i64>,
    /// Required product of the three ±1 answers.
    pub win_target: i8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    rounds: Vec<GameRound>,
}

impl GameSpec {
    pub fn new(rounds: Vec<GameRound>) -> Result<Self> {
        if rounds.is_empty() {
            return Err(Error::InvalidGame("no question sets".into()));
        }
        let mut total = Ratio::from_integer(0);
        for (i, r) in rounds.iter().enumerate() {
            if r.probability < Ratio::from_integer(0) {
                return Err(Error::InvalidGame(format!("negative probability for {}", r.questions)));
            }
            if r.win_target != 1 && r.win_target != -1 {
                return Err(Error::InvalidGame(format!("win target {} is not ±1", r.win_target)));
            }
            if rounds[..i].iter().any(|o| o.questions == r.questions) {
                return Err(Error::InvalidGame(format!("duplicate question set {}", r.questions)));
            }
            total += r.probability;
        }
        if total != Ratio::from_integer(1) {
            return Err(Error::InvalidGame(format!("probabilities sum to {total}")));
        }
        Ok(Self { rounds })
    }

    /// Equally likely question sets with the given targets.
    pub fn uniform(sets: &[(&str, i8)]) -> Result<Self> {
        let p = Ratio::new(1, sets.len() as i64);
        let rounds = sets
            .iter()
            .map(|(qs, target)| {
                Ok(GameRound {
                    questions: qs.parse()?,
                    probability: p,
                    win_target: *target,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(rounds)
    }

    pub fn rounds(&self) -> &[GameRound] {
        &self.rounds
    }

    pub fn allowed_sets(&self) -> Vec<QuestionSet> {
        self.rounds.iter().map(|r| r.questions).collect()
    }

    pub fn set_probabilities(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| ratio_to_f64(r.probability)).collect()
    }

    pub fn win_target(&self, set: &QuestionSet) -> Option<i8> {
        self.rounds.iter().find(|r| &r.questions == set).map(|r| r.win_target)
    }

    /// Distinct questions each player can receive, in sorted order.
    pub fn player_questions(&self) -> [Vec<Question>; 3] {
        std::array::from_fn(|player| {
            let mut qs: Vec<Question> = self.rounds.iter().map(|r| r.questions.0[player]).collect();
            qs.sort();
            qs.dedup();
            qs
        })
    }
}

pub fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// XXX → +1; XYY, YXY, YYX → −1; uniform.
pub fn xy_game_spec() -> GameSpec {
    GameSpec::uniform(&[("XXX", 1), ("XYY", -1), ("YXY", -1), ("YYX", -1)])
        .expect("XY game is well formed")
}

/// ZZZ → −1; ZYY, YZY, YYZ → +1; uniform.
pub fn zy_game_spec() -> GameSpec {
    GameSpec::uniform(&[("ZZZ", -1), ("ZYY", 1), ("YZY", 1), ("YYZ", 1)])
        .expect("ZY game is well formed")
}

fn require_three(state: &StateVector) -> Result<()> {
    if state.num_qubits() != 3 {
        return Err(Error::WrongQubitCount {
            expected: 3,
            got: state.num_qubits(),
        });
    }
    Ok(())
}

/// Probability of winning each question set when every player measures in
/// the asked basis, in the game's set order.
pub fn per_set_quantum_win(state: &StateVector, spec: &GameSpec) -> Result<Vec<f64>> {
    require_three(state)?;
    spec.rounds
        .iter()
        .map(|round| {
            Ok(joint_distribution(state, &round.questions.bases())?
                .iter()
                .filter(|j| j.product() == round.win_target)
                .map(|j| j.probability)
                .sum())
        })
        .collect()
}

pub fn exact_quantum_win(state: &StateVector, spec: &GameSpec) -> Result<f64> {
    let wins = per_set_quantum_win(state, spec)?;
    Ok(spec
        .set_probabilities()
        .iter()
        .zip(&wins)
        .map(|(p, w)| p * w)
        .sum())
}

/// A deterministic answer table per player.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalStrategy {
    pub tables: [Vec<(Question, i8)>; 3],
}

impl ClassicalStrategy {
    pub fn answer(&self, player: usize, question: Question) -> Option<i8> {
        self.tables[player]
            .iter()
            .find(|(q, _)| *q == question)
            .map(|(_, a)| *a)
    }
}

impl fmt::Display for ClassicalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (player, table) in self.tables.iter().enumerate() {
            if player > 0 {
                write!(f, " | ")?;
            }
            let entries: Vec<String> = table.iter().map(|(q, a)| format!("{q}:{a:+}")).collect();
            write!(f, "{}", entries.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalBest {
    pub probability: Ratio<i64>,
    pub strategy: ClassicalStrategy,
    pub strategies_searched: usize,
}

impl ClassicalBest {
    pub fn value(&self) -> f64 {
        ratio_to_f64(self.probability)
    }
}

/// Exhaustive search over every deterministic strategy.
///
/// Strategies are encoded as one answer slot per (player, question) pair,
/// players in order and questions sorted, with `+1` before `-1`; the first
/// maximizer in that order is returned.
pub fn classical_best(spec: &GameSpec) -> ClassicalBest {
    let questions = spec.player_questions();
    let slots: Vec<(usize, Question)> = questions
        .iter()
        .enumerate()
        .flat_map(|(p, qs)| qs.iter().map(move |q| (p, *q)))
        .collect();
    let count = 1usize << slots.len();

    let decode = |code: usize| -> ClassicalStrategy {
        let mut tables: [Vec<(Question, i8)>; 3] = Default::default();
        for (i, (player, q)) in slots.iter().enumerate() {
            let bit = (code >> (slots.len() - 1 - i)) & 1;
            tables[*player].push((*q, if bit == 0 { 1 } else { -1 }));
        }
        ClassicalStrategy { tables }
    };

    let mut best: Option<(Ratio<i64>, usize)> = None;
    for code in 0..count {
        let strategy = decode(code);
        let mut value = Ratio::from_integer(0);
        for round in &spec.rounds {
            let product: i8 = (0..3)
                .map(|p| strategy.answer(p, round.questions.0[p]).expect("slot exists"))
                .product();
            if product == round.win_target {
                value += round.probability;
            }
        }
        if best.is_none_or(|(b, _)| value > b) {
            best = Some((value, code));
        }
    }
    let (probability, code) = best.expect("at least one strategy");
    ClassicalBest {
        probability,
        strategy: decode(code),
        strategies_searched: count,
    }
}

/// Sequential-collapse sampler: measures qubits one at a time with
/// `measure_single`, storing the probability of the first outcome at every
/// node of the binary outcome tree.
#[derive(Clone, Debug)]
struct OutcomeTree {
    depth: usize,
    /// Heap layout; node 1 is the root, children of `k` are `2k` and `2k+1`.
    first_prob: Vec<f64>,
}

impl OutcomeTree {
    fn build(state: &StateVector, order: &[(usize, MeasurementBasis)]) -> Result<Self> {
        let depth = order.len();
        let mut first_prob = vec![1.0; 1 << depth];
        fn fill(
            node: usize,
            level: usize,
            state: &StateVector,
            order: &[(usize, MeasurementBasis)],
            out: &mut [f64],
        ) -> Result<()> {
            if level == order.len() {
                return Ok(());
            }
            let (qubit, basis) = order[level];
            let branches = measure_single(state, qubit, basis)?;
            out[node] = branches[0].probability;
            for (k, branch) in branches.iter().enumerate() {
                if let Some(post) = &branch.post_state {
                    fill(2 * node + k, level + 1, post, order, out)?;
                }
            }
            Ok(())
        }
        fill(1, 0, state, order, &mut first_prob)?;
        Ok(Self { depth, first_prob })
    }

    /// Outcome indices packed with the first measurement most significant.
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let mut node = 1;
        for _ in 0..self.depth {
            let second = rng.random::<f64>() >= self.first_prob[node];
            node = 2 * node + usize::from(second);
        }
        node - (1 << self.depth)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub wins: u64,
    pub trials: u64,
}

impl McEstimate {
    fn from_counts(wins: u64, trials: u64) -> Self {
        let p = wins as f64 / trials as f64;
        Self {
            estimate: p,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
            wins,
            trials,
        }
    }

    /// `|estimate - exact| <= k * std_error`. A sample with no variance (all
    /// wins or all losses) only agrees with an exact value of 1 or 0, up to
    /// rounding in the exact enumeration.
    pub fn agrees_with(&self, exact: f64, k: f64) -> bool {
        (self.estimate - exact).abs() <= (k * self.std_error).max(1e-12)
    }
}

/// Trials per independent random substream.
const MC_CHUNK: u64 = 1 << 16;

/// Runs `trials` Bernoulli draws split into fixed chunks, each on its own
/// ChaCha stream, so the count depends only on `(seed, trials)`.
fn chunked_wins<F>(trials: u64, seed: u64, trial: F) -> u64
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    let chunks = trials.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let n = MC_CHUNK.min(trials - chunk * MC_CHUNK);
            (0..n).filter(|_| trial(&mut rng)).count() as u64
        })
        .sum()
}

fn pick_index<R: Rng>(rng: &mut R, cumulative: &[f64]) -> usize {
    let u = rng.random::<f64>();
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

fn cumulative(probs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    probs
        .into_iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Monte Carlo estimate of the quantum winning probability.
pub fn monte_carlo_win(state: &StateVector, spec: &GameSpec, trials: u64, seed: u64) -> Result<McEstimate> {
    require_three(state)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let trees: Vec<(OutcomeTree, i8)> = spec
        .rounds
        .iter()
        .map(|round| {
            let order: Vec<_> = round.questions.bases().into_iter().enumerate().collect();
            Ok((OutcomeTree::build(state, &order)?, round.win_target))
        })
        .collect::<Result<_>>()?;
    let cdf = cumulative(spec.set_probabilities());

    let wins = chunked_wins(trials, seed, |rng| {
        let (tree, target) = &trees[pick_index(rng, &cdf)];
        let path = tree.sample(rng);
        let product = if path.count_ones() % 2 == 0 { 1 } else { -1 };
        product == *target
    });
    Ok(McEstimate::from_counts(wins, trials))
}

/// Rule-maker game parameters. Charlie (qubit C) measures in `Lambda(λ)`,
/// then asks X with probability `p_x` and Z otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleMakerSpec {
    pub lambda: f64,
    pub p_x: f64,
}

impl RuleMakerSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        Self::with_question_probability(lambda, 0.5)
    }

    pub fn with_question_probability(lambda: f64, p_x: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::InvalidBasis(format!("lambda = {lambda}")));
        }
        if !(0.0..=1.0).contains(&p_x) {
            return Err(Error::InvalidParameter(format!("question probability {p_x}")));
        }
        Ok(Self { lambda, p_x })
    }

    fn questions(&self) -> [(Question, f64); 2] {
        [(Question::X, self.p_x), (Question::Z, 1.0 - self.p_x)]
    }
}

/// Required A·B product once Charlie has announced his branch.
///
/// `b0`: XX = +1, ZZ = −1. `b1`: XX = −1, ZZ = +1.
pub fn rule_target(branch: Outcome, question: Question) -> i8 {
    match (branch, question) {
        (Outcome::B0, Question::X) | (Outcome::B1, Question::Z) => 1,
        _ => -1,
    }
}

pub fn rule_maker_win(state: &StateVector, spec: &RuleMakerSpec) -> Result<f64> {
    require_three(state)?;
    let charlie = MeasurementBasis::Lambda(spec.lambda);
    let mut total = 0.0;
    for branch in measure_single(state, 2, charlie)? {
        let Some(post) = &branch.post_state else {
            continue;
        };
        for (question, q_prob) in spec.questions() {
            let b = question.basis();
            let win: f64 = joint_distribution(post, &[b, b, charlie])?
                .iter()
                .filter(|j| j.outcomes[2] == branch.label)
                .filter(|j| j.outcomes[0].sign() * j.outcomes[1].sign() == rule_target(branch.label, question))
                .map(|j| j.probability)
                .sum();
            total += branch.probability * q_prob * win;
        }
    }
    Ok(total)
}

pub fn monte_carlo_rule_maker(
    state: &StateVector,
    spec: &RuleMakerSpec,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    require_three(state)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let charlie = MeasurementBasis::Lambda(spec.lambda);
    let trees: Vec<(Question, OutcomeTree)> = spec
        .questions()
        .iter()
        .map(|(q, _)| {
            let order = [(2, charlie), (0, q.basis()), (1, q.basis())];
            Ok((*q, OutcomeTree::build(state, &order)?))
        })
        .collect::<Result<_>>()?;
    let cdf = cumulative(spec.questions().map(|(_, p)| p));

    let wins = chunked_wins(trials, seed, |rng| {
        let (question, tree) = &trees[pick_index(rng, &cdf)];
        let path = tree.sample(rng);
        let branch = if path >> 2 == 0 { Outcome::B0 } else { Outcome::B1 };
        let product = if (path & 0b11).count_ones() % 2 == 0 { 1 } else { -1 };
        product == rule_target(branch, *question)
    });
    Ok(McEstimate::from_counts(wins, trials))
}

/// `(1 + sin 2θ)/2`: XY game on the GHZ class.
pub fn ghz_xy_closed_form(theta: f64) -> f64 {
    0.5 * (1.0 + (2.0 * theta).sin())
}

/// `(5/2 + ab + bc + ac)/4`: ZY game on the W class. Only defined on real
/// nonnegative amplitudes; `None` elsewhere.
pub fn w_zy_closed_form(params: &WClassParams) -> Option<f64> {
    if !params.is_real_nonnegative() {
        return None;
    }
    let (a, b, c) = (params.a.re, params.b.re, params.c.re);
    Some(0.25 * (2.5 + a * b + b * c + a * c))
}

/// ZY game on Wₙ with zero phases.
pub fn wn_zy_closed_form(n: u64) -> f64 {
    let n = n as f64;
    let r = (n + 1.0).sqrt();
    (5.0 + 5.0 * n + r + n.sqrt() * (r + 1.0)) / (8.0 * (n + 1.0))
}

/// Rule-maker game on the standard W state.
pub fn w_rule_maker_closed_form(lambda: f64) -> f64 {
    (1.0 + 10.0 * lambda.sin().powi(2)) / 12.0
}

/// Rule-maker game on the standard GHZ state. Equals 1/2 only at the
/// computational-basis endpoints.
pub fn ghz_rule_maker_closed_form(lambda: f64) -> f64 {
    0.5 - 0.25 * (2.0 * lambda).sin()
}

/// Which curve a sweep traces.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepFamily {
    /// GHZ class under the XY game, x-axis τ.
    GhzTheta(Vec<f64>),
    /// Real W class on a simplex grid with `divisions` steps per squared
    /// amplitude, ZY game, x-axis concurrence sum.
    WSimplex { divisions: usize },
    /// Wₙ (zero phases) under the ZY game, x-axis concurrence sum.
    Wn(Vec<u64>),
    /// Rule-maker game on the standard W state, x-axis λ.
    RuleMakerW(Vec<f64>),
    /// Rule-maker game on the standard GHZ state, x-axis λ.
    RuleMakerGhz(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SweepParam {
    Theta(f64),
    Amplitudes([f64; 3]),
    N(u64),
    Lambda(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParam,
    pub x_measure: f64,
    pub win_exact: f64,
    pub win_closed_form: Option<f64>,
}

/// Real W-class simplex points `(√(i/K), √(j/K), √(k/K))`, `i + j + k = K`.
pub fn w_simplex_grid(divisions: usize) -> Vec<[f64; 3]> {
    let k = divisions as f64;
    let mut out = Vec::new();
    for i in 0..=divisions {
        for j in 0..=(divisions - i) {
            let l = divisions - i - j;
            out.push([(i as f64 / k).sqrt(), (j as f64 / k).sqrt(), (l as f64 / k).sqrt()]);
        }
    }
    out
}

pub fn sweep(family: &SweepFamily) -> Result<Vec<SweepRow>> {
    let empty = match family {
        SweepFamily::GhzTheta(g) | SweepFamily::RuleMakerW(g) | SweepFamily::RuleMakerGhz(g) => g.is_empty(),
        SweepFamily::WSimplex { divisions } => *divisions == 0,
        SweepFamily::Wn(ns) => ns.is_empty(),
    };
    if empty {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    match family {
        SweepFamily::GhzTheta(thetas) => {
            let xy = xy_game_spec();
            thetas
                .iter()
                .map(|&theta| {
                    let s = ghz_class(GhzClassParams::new(theta))?;
                    Ok(SweepRow {
                        parameter: SweepParam::Theta(theta),
                        x_measure: three_tangle(&s)?.tau,
                        win_exact: exact_quantum_win(&s, &xy)?,
                        win_closed_form: Some(ghz_xy_closed_form(theta)),
                    })
                })
                .collect()
        }
        SweepFamily::WSimplex { divisions } => {
            let zy = zy_game_spec();
            w_simplex_grid(*divisions)
                .into_iter()
                .map(|[a, b, c]| {
                    let params = WClassParams::real(a, b, c)?;
                    let s = w_class(params)?;
                    Ok(SweepRow {
                        parameter: SweepParam::Amplitudes([a, b, c]),
                        x_measure: concurrence_sum(&s)?,
                        win_exact: exact_quantum_win(&s, &zy)?,
                        win_closed_form: w_zy_closed_form(&params),
                    })
                })
                .collect()
        }
        SweepFamily::Wn(ns) => {
            let zy = zy_game_spec();
            ns.iter()
                .map(|&n| {
                    let s = w_n(WnParams::new(n, 0.0, 0.0)?)?;
                    Ok(SweepRow {
                        parameter: SweepParam::N(n),
                        x_measure: concurrence_sum(&s)?,
                        win_exact: exact_quantum_win(&s, &zy)?,
                        win_closed_form: Some(wn_zy_closed_form(n)),
                    })
                })
                .collect()
        }
        SweepFamily::RuleMakerW(lambdas) | SweepFamily::RuleMakerGhz(lambdas) => {
            let (state, closed): (StateVector, fn(f64) -> f64) = match family {
                SweepFamily::RuleMakerW(_) => (standard_w(), w_rule_maker_closed_form),
                _ => (standard_ghz(), ghz_rule_maker_closed_form),
            };
            lambdas
                .iter()
                .map(|&lambda| {
                    Ok(SweepRow {
                        parameter: SweepParam::Lambda(lambda),
                        x_measure: lambda,
                        win_exact: rule_maker_win(&state, &RuleMakerSpec::new(lambda)?)?,
                        win_closed_form: Some(closed(lambda)),
                    })
                })
                .collect()
        }
    }
}

/// Largest departure of the GHZ rule-maker curve from a flat 1/2, with the
/// λ where it occurs.
pub fn ghz_rule_maker_deviation(lambdas: &[f64]) -> Result<(f64, f64)> {
    let ghz = standard_ghz();
    let mut worst = (0.0, f64::NAN);
    for &lambda in lambdas {
        let dev = (rule_maker_win(&ghz, &RuleMakerSpec::new(lambda)?)? - 0.5).abs();
        if worst.1.is_nan() || dev > worst.0 {
            worst = (dev, lambda);
        }
    }
    Ok(worst)
}
