//! Round-level simulation of GHZ secret sharing (Hillery-style) and the
//! facilitated W-state protocol, with sifting, key extraction, cheat models
//! and control-mode cheat detection.
//!
//! Every random choice is drawn from a counter-addressed ChaCha substream
//! keyed by `(seed, stream, round)`, so any party can replay its own draws for
//! a given round without consuming anybody else's. The quantum outcomes come
//! from the `nature` stream and depend only on the state, the bases in force
//! and that stream.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{rule_target, Question};
use crate::qcore::{joint_distribution, measure_single, MeasurementBasis, Outcome, StateVector};
use crate::states::{standard_ghz, standard_w};

/// Default compliance threshold for control rounds.
pub const DEFAULT_THRESHOLD: f64 = 0.75;
/// Default allowance below the threshold for finite-sample noise.
pub const DEFAULT_SLACK: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
    Charlie,
}

impl Party {
    pub fn index(self) -> usize {
        match self {
            Party::Alice => 0,
            Party::Bob => 1,
            Party::Charlie => 2,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
            Party::Charlie => "charlie",
        };
        f.write_str(s)
    }
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alice" | "a" => Ok(Party::Alice),
            "bob" | "b" => Ok(Party::Bob),
            "charlie" | "c" => Ok(Party::Charlie),
            other => Err(Error::InvalidParameter(format!("unknown party {other:?}"))),
        }
    }
}

/// Eigenstates of X and Y, as they appear in the GHZ correlation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisState {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl AxisState {
    pub const ALL: [AxisState; 4] = [
        AxisState::PlusX,
        AxisState::MinusX,
        AxisState::PlusY,
        AxisState::MinusY,
    ];

    pub fn new(axis: Question, sign: i8) -> Result<Self> {
        match (axis, sign) {
            (Question::X, 1) => Ok(AxisState::PlusX),
            (Question::X, -1) => Ok(AxisState::MinusX),
            (Question::Y, 1) => Ok(AxisState::PlusY),
            (Question::Y, -1) => Ok(AxisState::MinusY),
            _ => Err(Error::InvalidParameter(format!("no axis state for {axis}{sign:+}"))),
        }
    }

    pub fn axis(self) -> Question {
        match self {
            AxisState::PlusX | AxisState::MinusX => Question::X,
            AxisState::PlusY | AxisState::MinusY => Question::Y,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            AxisState::PlusX | AxisState::PlusY => 1,
            AxisState::MinusX | AxisState::MinusY => -1,
        }
    }

    pub fn ket(self) -> StateVector {
        let (plus, minus) =
            crate::qcore::basis_vectors(self.axis().basis()).expect("X and Y are valid bases");
        if self.sign() == 1 {
            plus
        } else {
            minus
        }
    }
}

impl fmt::Display for AxisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AxisState::PlusX => "+x",
            AxisState::MinusX => "-x",
            AxisState::PlusY => "+y",
            AxisState::MinusY => "-y",
        };
        f.write_str(s)
    }
}

/// Alice's post-measurement state given Bob's and Charlie's outcomes on a
/// shared standard GHZ state.
///
/// Same-axis outcomes leave Alice on X, mixed axes leave her on Y. The sign is
/// the product of Bob's and Charlie's signs, negated whenever a Y appears.
pub fn qss_alice_inference(bob: AxisState, charlie: AxisState) -> AxisState {
    let axis = if bob.axis() == charlie.axis() {
        Question::X
    } else {
        Question::Y
    };
    let any_y = bob.axis() == Question::Y || charlie.axis() == Question::Y;
    let sign = bob.sign() * charlie.sign() * if any_y { -1 } else { 1 };
    AxisState::new(axis, sign).expect("axis is X or Y")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    HilleryQss,
    Facilitated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundMode {
    Message,
    Control,
    Unresolved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisPolicy {
    /// Alice and Bob pick independently; mismatched rounds are discarded.
    SiftDiscard,
    /// Charlie picks one basis per round and instructs both.
    CharlieAnnounces,
}

impl FromStr for BasisPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sift" | "sift-discard" => Ok(BasisPolicy::SiftDiscard),
            "announce" | "charlie-announces" => Ok(BasisPolicy::CharlieAnnounces),
            other => Err(Error::InvalidParameter(format!("unknown basis policy {other:?}"))),
        }
    }
}

/// Adversary models. They act on the outcomes a party records and
/// announces, never on the quantum sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheatModel {
    Honest,
    /// Announces independent fair ±1 values.
    RandomAnnouncer(Party),
    /// Announces the negation of every measured outcome.
    OutcomeFlipper(Party),
}

impl CheatModel {
    pub fn id(&self) -> String {
        match self {
            CheatModel::Honest => "honest".into(),
            CheatModel::RandomAnnouncer(p) => format!("random:{p}"),
            CheatModel::OutcomeFlipper(p) => format!("flip:{p}"),
        }
    }

    pub fn all_for(party: Party) -> [CheatModel; 3] {
        [
            CheatModel::Honest,
            CheatModel::RandomAnnouncer(party),
            CheatModel::OutcomeFlipper(party),
        ]
    }
}

impl FromStr for CheatModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "honest" || lower == "none" {
            return Ok(CheatModel::Honest);
        }
        let (kind, party) = lower
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("unknown cheat model {s:?}")))?;
        let party: Party = party.parse()?;
        if party == Party::Charlie {
            return Err(Error::InvalidParameter("the facilitator cannot be the cheat".into()));
        }
        match kind {
            "random" => Ok(CheatModel::RandomAnnouncer(party)),
            "flip" | "flipper" => Ok(CheatModel::OutcomeFlipper(party)),
            _ => Err(Error::InvalidParameter(format!("unknown cheat model {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_id: u64,
    pub mode: RoundMode,
    /// Charlie's basis when it is a Pauli basis (secret sharing); absent for
    /// the λ measurement of the facilitated protocol.
    pub charlie_basis: Option<Question>,
    pub charlie_outcome: Outcome,
    pub alice_basis: Question,
    pub bob_basis: Question,
    pub alice_outcome: i8,
    pub bob_outcome: i8,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    pub protocol: Protocol,
    pub m: u64,
    pub lambda: Option<f64>,
    pub policy: Option<BasisPolicy>,
    pub seed: u64,
    pub cheat: String,
}

impl SessionParams {
    pub fn qss(m: u64, seed: u64) -> Self {
        Self {
            protocol: Protocol::HilleryQss,
            m,
            lambda: None,
            policy: None,
            seed,
            cheat: CheatModel::Honest.id(),
        }
    }

    pub fn facilitated(m: u64, lambda: f64, policy: BasisPolicy, cheat: CheatModel, seed: u64) -> Self {
        Self {
            protocol: Protocol::Facilitated,
            m,
            lambda: Some(lambda),
            policy: Some(policy),
            seed,
            cheat: cheat.id(),
        }
    }

    pub fn cheat_model(&self) -> Result<CheatModel> {
        self.cheat.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("session needs m >= 1 rounds".into()));
        }
        let cheat = self.cheat_model()?;
        match self.protocol {
            Protocol::HilleryQss => {
                if cheat != CheatModel::Honest {
                    return Err(Error::InvalidParameter(
                        "cheat models apply to the facilitated protocol".into(),
                    ));
                }
            }
            Protocol::Facilitated => {
                let lambda = self
                    .lambda
                    .ok_or_else(|| Error::InvalidParameter("facilitated session needs lambda".into()))?;
                if !lambda.is_finite() {
                    return Err(Error::InvalidBasis(format!("lambda = {lambda}")));
                }
                if self.policy.is_none() {
                    return Err(Error::InvalidParameter("facilitated session needs a basis policy".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub params: SessionParams,
    pub rounds: Vec<RoundRecord>,
    /// False when the session ended early (transport failure).
    pub complete: bool,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: Summary,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    params: SessionParams,
    rounds: usize,
    complete: bool,
}

impl SessionTranscript {
    /// One JSON object per round, then a summary object.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(r).expect("round records serialize"));
            out.push('\n');
        }
        let summary = SummaryLine {
            summary: Summary {
                params: self.params.clone(),
                rounds: self.rounds.len(),
                complete: self.complete,
            },
        };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let (last, body) = lines
            .split_last()
            .ok_or_else(|| Error::InvalidParameter("empty transcript".into()))?;
        let summary: SummaryLine = serde_json::from_str(last)?;
        let rounds = body
            .iter()
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect::<Result<Vec<RoundRecord>>>()?;
        if rounds.len() != summary.summary.rounds {
            return Err(Error::InvalidParameter(format!(
                "summary declares {} rounds, found {}",
                summary.summary.rounds,
                rounds.len()
            )));
        }
        Ok(Self {
            params: summary.summary.params,
            rounds,
            complete: summary.summary.complete,
        })
    }

    pub fn ids_are_dense(&self) -> bool {
        self.rounds
            .iter()
            .enumerate()
            .all(|(i, r)| r.round_id == i as u64)
    }
}

/// Counter-addressed random substreams. Stream ids are fixed so that adding a
/// consumer never shifts another party's draws.
#[derive(Clone, Debug)]
pub struct SessionRandomness {
    streams: [CachedStream; 6],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Nature = 0,
    Alice = 1,
    Bob = 2,
    Charlie = 3,
    AdversaryAlice = 4,
    AdversaryBob = 5,
}

/// 32-bit words reserved per round in each stream (8 f64 draws).
const WORDS_PER_ROUND: u128 = 16;
/// Words fetched per refill; seeking a ChaCha stream costs four blocks anyway.
const CACHE_WORDS: usize = 64;

/// One ChaCha stream plus the aligned window of words last generated, so
/// consecutive rounds do not reseek the cipher.
#[derive(Clone, Debug)]
struct CachedStream {
    rng: ChaCha8Rng,
    start: Option<u128>,
    words: [u32; CACHE_WORDS],
}

impl CachedStream {
    fn word(&mut self, pos: u128) -> u32 {
        let start = pos - pos % CACHE_WORDS as u128;
        if self.start != Some(start) {
            self.rng.set_word_pos(start);
            for w in &mut self.words {
                *w = self.rng.next_u32();
            }
            self.start = Some(start);
        }
        self.words[(pos - start) as usize]
    }
}

impl SessionRandomness {
    pub fn new(seed: u64) -> Self {
        Self {
            streams: std::array::from_fn(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                CachedStream {
                    rng,
                    start: None,
                    words: [0; CACHE_WORDS],
                }
            }),
        }
    }

    /// Uniform draw in `[0, 1)` for `(stream, round, slot)`, slot < 8.
    /// Matches `rng.random::<f64>()` after seeking to the slot's word.
    pub fn uniform(&mut self, stream: Stream, round: u64, slot: u8) -> f64 {
        debug_assert!(slot < 8);
        let s = &mut self.streams[stream as usize];
        let pos = u128::from(round) * WORDS_PER_ROUND + u128::from(slot) * 2;
        let bits = u64::from(s.word(pos)) | (u64::from(s.word(pos + 1)) << 32);
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn party_stream(party: Party) -> Stream {
        match party {
            Party::Alice => Stream::Alice,
            Party::Bob => Stream::Bob,
            Party::Charlie => Stream::Charlie,
        }
    }

    fn adversary_stream(party: Party) -> Stream {
        match party {
            Party::Alice => Stream::AdversaryAlice,
            _ => Stream::AdversaryBob,
        }
    }
}

fn pick(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn cdf_of(probs: &[f64]) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p / total;
            Some(*acc)
        })
        .collect()
}

fn outcome_sign(index: usize) -> i8 {
    if index == 0 {
        1
    } else {
        -1
    }
}

/// Everything that physically happens in one round, before any cheating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundTruth {
    pub bases: [Question; 3],
    pub charlie_outcome: Outcome,
    /// Honest ±1 outcomes for Alice and Bob.
    pub outcomes: [i8; 2],
}

/// Exact outcome tables for the facilitated protocol at one λ.
#[derive(Clone, Debug)]
struct FacilitatedPhysics {
    /// `[P(b0), P(b1)]` as a cdf.
    charlie_cdf: Vec<f64>,
    /// `[branch][alice X/Z][bob X/Z]` cdf over (a, b) outcome pairs.
    pair_cdf: [[[Vec<f64>; 2]; 2]; 2],
}

fn xz_index(q: Question) -> usize {
    match q {
        Question::X => 0,
        _ => 1,
    }
}

fn xz_from_draw(u: f64) -> Question {
    if u < 0.5 {
        Question::X
    } else {
        Question::Z
    }
}

/// Two-qubit outcome distribution for Alice and Bob on a state whose qubit C
/// has already collapsed.
fn pair_distribution(post: &StateVector, a: Question, b: Question, charlie: MeasurementBasis) -> Result<[f64; 4]> {
    let mut probs = [0.0; 4];
    for j in joint_distribution(post, &[a.basis(), b.basis(), charlie])? {
        let k = j.outcomes[0].index() * 2 + j.outcomes[1].index();
        probs[k] += j.probability;
    }
    Ok(probs)
}

impl FacilitatedPhysics {
    fn new(lambda: f64) -> Result<Self> {
        let w = standard_w();
        let charlie = MeasurementBasis::Lambda(lambda);
        let branches = measure_single(&w, 2, charlie)?;
        let charlie_cdf = cdf_of(&[branches[0].probability, branches[1].probability]);
        let mut pair_cdf: [[[Vec<f64>; 2]; 2]; 2] = Default::default();
        for (k, branch) in branches.iter().enumerate() {
            let Some(post) = &branch.post_state else {
                // unreachable branch; keep a valid table anyway
                for row in pair_cdf[k].iter_mut() {
                    for cell in row.iter_mut() {
                        *cell = cdf_of(&[1.0, 0.0, 0.0, 0.0]);
                    }
                }
                continue;
            };
            for a in [Question::X, Question::Z] {
                for b in [Question::X, Question::Z] {
                    pair_cdf[k][xz_index(a)][xz_index(b)] = cdf_of(&pair_distribution(post, a, b, charlie)?);
                }
            }
        }
        Ok(Self { charlie_cdf, pair_cdf })
    }
}

/// Exact outcome tables for GHZ secret sharing.
#[derive(Clone, Debug)]
struct QssPhysics {
    /// Indexed by the 3-bit (A,B,C) basis code, X = 0, Y = 1.
    joint_cdf: Vec<Vec<f64>>,
}

fn xy_from_draw(u: f64) -> Question {
    if u < 0.5 {
        Question::X
    } else {
        Question::Y
    }
}

impl QssPhysics {
    fn new() -> Result<Self> {
        let ghz = standard_ghz();
        let joint_cdf = (0..8)
            .map(|code| {
                let bases: Vec<MeasurementBasis> = (0..3)
                    .map(|q| if (code >> (2 - q)) & 1 == 0 { MeasurementBasis::X } else { MeasurementBasis::Y })
                    .collect();
                let probs: Vec<f64> = joint_distribution(&ghz, &bases)?.iter().map(|j| j.probability).collect();
                Ok(cdf_of(&probs))
            })
            .collect::<Result<_>>()?;
        Ok(Self { joint_cdf })
    }
}

#[derive(Clone, Debug)]
enum Physics {
    Qss(QssPhysics),
    Facilitated {
        physics: FacilitatedPhysics,
        policy: BasisPolicy,
    },
}

/// Deterministic per-round oracle for a session: basis choices, the shared
/// state's outcomes and the adversary's substitutions, all addressed by round.
///
/// Each protocol role can hold its own copy; a role only reads the fields that
/// belong to it.
#[derive(Clone, Debug)]
pub struct SessionEngine {
    params: SessionParams,
    cheat: CheatModel,
    physics: Physics,
    rng: SessionRandomness,
}

impl SessionEngine {
    pub fn new(params: &SessionParams) -> Result<Self> {
        params.validate()?;
        let physics = match params.protocol {
            Protocol::HilleryQss => Physics::Qss(QssPhysics::new()?),
            Protocol::Facilitated => Physics::Facilitated {
                physics: FacilitatedPhysics::new(params.lambda.expect("validated"))?,
                policy: params.policy.expect("validated"),
            },
        };
        Ok(Self {
            params: params.clone(),
            cheat: params.cheat_model()?,
            physics,
            rng: SessionRandomness::new(params.seed),
        })
    }

    pub fn params(&self) -> &SessionParams {
        &self.params
    }

    /// The basis a party picks on its own (sifting policies and secret sharing).
    pub fn own_basis(&mut self, round: u64, party: Party) -> Question {
        let u = self.rng.uniform(SessionRandomness::party_stream(party), round, 0);
        match self.physics {
            Physics::Qss(_) => xy_from_draw(u),
            Physics::Facilitated { .. } => xz_from_draw(u),
        }
    }

    /// The common basis Charlie instructs under `CharlieAnnounces`.
    pub fn charlie_instruction(&mut self, round: u64) -> Question {
        xz_from_draw(self.rng.uniform(Stream::Charlie, round, 1))
    }

    pub fn round_truth(&mut self, round: u64) -> RoundTruth {
        let rng = &mut self.rng;
        match &self.physics {
            Physics::Qss(q) => {
                let bases = [Party::Alice, Party::Bob, Party::Charlie]
                    .map(|p| xy_from_draw(rng.uniform(SessionRandomness::party_stream(p), round, 0)));
                let code = bases
                    .iter()
                    .fold(0, |acc, b| (acc << 1) | usize::from(*b == Question::Y));
                let joint = pick(&q.joint_cdf[code], rng.uniform(Stream::Nature, round, 0));
                let bit = |q: usize| (joint >> (2 - q)) & 1;
                RoundTruth {
                    bases,
                    charlie_outcome: if bit(2) == 0 { Outcome::Plus } else { Outcome::Minus },
                    outcomes: [outcome_sign(bit(0)), outcome_sign(bit(1))],
                }
            }
            Physics::Facilitated { physics, policy } => {
                let (a, b) = match policy {
                    BasisPolicy::SiftDiscard => (
                        xz_from_draw(rng.uniform(Stream::Alice, round, 0)),
                        xz_from_draw(rng.uniform(Stream::Bob, round, 0)),
                    ),
                    BasisPolicy::CharlieAnnounces => {
                        let q = xz_from_draw(rng.uniform(Stream::Charlie, round, 1));
                        (q, q)
                    }
                };
                let branch = pick(&physics.charlie_cdf, rng.uniform(Stream::Nature, round, 0));
                let pair = pick(
                    &physics.pair_cdf[branch][xz_index(a)][xz_index(b)],
                    rng.uniform(Stream::Nature, round, 1),
                );
                RoundTruth {
                    bases: [a, b, Question::Z],
                    charlie_outcome: if branch == 0 { Outcome::B0 } else { Outcome::B1 },
                    outcomes: [outcome_sign(pair >> 1), outcome_sign(pair & 1)],
                }
            }
        }
    }

    /// The outcome a party records and announces after its cheat model.
    pub fn recorded_outcome(&mut self, round: u64, party: Party, honest: i8) -> i8 {
        match self.cheat {
            CheatModel::RandomAnnouncer(p) if p == party => {
                let u = self.rng.uniform(SessionRandomness::adversary_stream(p), round, 0);
                if u < 0.5 {
                    1
                } else {
                    -1
                }
            }
            CheatModel::OutcomeFlipper(p) if p == party => -honest,
            _ => honest,
        }
    }

    /// Charlie-side classification of a round.
    pub fn classify(&self, truth: &RoundTruth) -> (RoundMode, bool) {
        match self.physics {
            Physics::Qss(_) => (RoundMode::Unresolved, qss_accepts(truth.bases)),
            Physics::Facilitated { .. } => {
                let mode = match truth.charlie_outcome {
                    Outcome::B0 => RoundMode::Message,
                    _ => RoundMode::Control,
                };
                (mode, truth.bases[0] == truth.bases[1])
            }
        }
    }

    /// Full record of one round as the simulator sees it.
    pub fn record(&mut self, round: u64) -> RoundRecord {
        let truth = self.round_truth(round);
        let (mode, accepted) = self.classify(&truth);
        let alice = self.recorded_outcome(round, Party::Alice, truth.outcomes[0]);
        let bob = self.recorded_outcome(round, Party::Bob, truth.outcomes[1]);
        RoundRecord {
            round_id: round,
            mode,
            charlie_basis: match self.physics {
                Physics::Qss(_) => Some(truth.bases[2]),
                Physics::Facilitated { .. } => None,
            },
            charlie_outcome: truth.charlie_outcome,
            alice_basis: truth.bases[0],
            bob_basis: truth.bases[1],
            alice_outcome: alice,
            bob_outcome: bob,
            accepted,
        }
    }
}

/// Basis triples (Alice, Bob, Charlie) kept by GHZ secret sharing.
pub fn qss_accepts(bases: [Question; 3]) -> bool {
    use Question::{X, Y};
    matches!(bases, [X, X, X] | [X, Y, Y] | [Y, X, Y] | [Y, Y, X])
}

fn run_direct(params: SessionParams) -> Result<SessionTranscript> {
    let mut engine = SessionEngine::new(&params)?;
    let rounds = (0..params.m).map(|r| engine.record(r)).collect();
    Ok(SessionTranscript {
        params,
        rounds,
        complete: true,
    })
}

/// GHZ secret sharing with uniform X/Y choices for all three parties.
pub fn qss_session(m: u64, seed: u64) -> Result<SessionTranscript> {
    run_direct(SessionParams::qss(m, seed))
}

pub fn facilitated_session(
    m: u64,
    lambda: f64,
    policy: BasisPolicy,
    cheat: CheatModel,
    seed: u64,
) -> Result<SessionTranscript> {
    run_direct(SessionParams::facilitated(m, lambda, policy, cheat, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QssCheck {
    pub rounds: usize,
    pub accepted: usize,
    /// Accepted rounds where the table prediction matched Alice's outcome.
    pub inference_matches: usize,
}

/// Replays the correlation table against every accepted secret-sharing round.
pub fn qss_check(transcript: &SessionTranscript) -> Result<QssCheck> {
    if transcript.params.protocol != Protocol::HilleryQss {
        return Err(Error::InvalidParameter("not a secret-sharing transcript".into()));
    }
    let mut check = QssCheck {
        rounds: transcript.rounds.len(),
        accepted: 0,
        inference_matches: 0,
    };
    for r in transcript.rounds.iter().filter(|r| r.accepted) {
        check.accepted += 1;
        let charlie_basis = r
            .charlie_basis
            .ok_or_else(|| Error::InvalidParameter("missing Charlie basis".into()))?;
        let bob = AxisState::new(r.bob_basis, r.bob_outcome)?;
        let charlie = AxisState::new(charlie_basis, r.charlie_outcome.sign())?;
        let predicted = qss_alice_inference(bob, charlie);
        if predicted.axis() == r.alice_basis && predicted.sign() == r.alice_outcome {
            check.inference_matches += 1;
        }
    }
    Ok(check)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyBits {
    pub alice_key: Vec<u8>,
    pub bob_key: Vec<u8>,
}

impl KeyBits {
    /// Fraction of matching positions; `None` for an empty key.
    pub fn agreement_rate(&self) -> Option<f64> {
        if self.alice_key.is_empty() {
            return None;
        }
        let same = self
            .alice_key
            .iter()
            .zip(&self.bob_key)
            .filter(|(a, b)| a == b)
            .count();
        Some(same as f64 / self.alice_key.len() as f64)
    }
}

/// `+1` (|0> or |+>) → 0, `-1` (|1> or |->) → 1.
fn bit_of(outcome: i8) -> u8 {
    u8::from(outcome < 0)
}

/// Key bits from accepted message rounds. Bob flips his bit on Z rounds.
pub fn extract_key(transcript: &SessionTranscript) -> Result<KeyBits> {
    if transcript.params.protocol != Protocol::Facilitated {
        return Err(Error::InvalidParameter("not a facilitated transcript".into()));
    }
    let mut keys = KeyBits {
        alice_key: Vec::new(),
        bob_key: Vec::new(),
    };
    for r in transcript
        .rounds
        .iter()
        .filter(|r| r.accepted && r.mode == RoundMode::Message)
    {
        keys.alice_key.push(bit_of(r.alice_outcome));
        let bob = bit_of(r.bob_outcome);
        keys.bob_key.push(if r.bob_basis == Question::Z { bob ^ 1 } else { bob });
    }
    Ok(keys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Honest,
    CheatingSuspected,
    /// No accepted control rounds to judge.
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub control_rounds: usize,
    pub compliant_rounds: usize,
    pub compliance_rate: Option<f64>,
    pub threshold: f64,
    pub slack: f64,
    pub verdict: Verdict,
}

/// Whether announced outcomes satisfy the control-mode rule for the basis
/// used that round: Z rounds need product +1, X rounds product −1.
pub fn control_compliant(record: &RoundRecord) -> bool {
    let product = record.alice_outcome * record.bob_outcome;
    product == rule_target(Outcome::B1, record.alice_basis)
}

pub fn detect_cheating(transcript: &SessionTranscript, threshold: f64, slack: f64) -> Result<DetectionReport> {
    if transcript.params.protocol != Protocol::Facilitated {
        return Err(Error::InvalidParameter("not a facilitated transcript".into()));
    }
    if !(0.0..=1.0).contains(&threshold) || slack.is_nan() || slack < 0.0 {
        return Err(Error::InvalidParameter(format!("threshold {threshold}, slack {slack}")));
    }
    let control: Vec<&RoundRecord> = transcript
        .rounds
        .iter()
        .filter(|r| r.accepted && r.mode == RoundMode::Control)
        .collect();
    let compliant = control.iter().filter(|r| control_compliant(r)).count();
    let (rate, verdict) = if control.is_empty() {
        (None, Verdict::Indeterminate)
    } else {
        let rate = compliant as f64 / control.len() as f64;
        let verdict = if rate >= threshold - slack {
            Verdict::Honest
        } else {
            Verdict::CheatingSuspected
        };
        (Some(rate), verdict)
    };
    Ok(DetectionReport {
        control_rounds: control.len(),
        compliant_rounds: compliant,
        compliance_rate: rate,
        threshold,
        slack,
        verdict,
    })
}

/// Key of an accepted facilitated round's observable statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AcceptedOutcome {
    pub branch: usize,
    /// 0 = X, 1 = Z.
    pub basis: usize,
    pub alice: i8,
    pub bob: i8,
}

/// Exact distribution of (branch, common basis, outcomes) over accepted
/// rounds, conditioned on acceptance.
pub fn accepted_round_distribution(lambda: f64, policy: BasisPolicy) -> Result<Vec<(AcceptedOutcome, f64)>> {
    let w = standard_w();
    let charlie = MeasurementBasis::Lambda(lambda);
    let branches = measure_single(&w, 2, charlie)?;
    // probability of each (alice, bob) basis pair under the policy
    let pair_weight = |a: Question, b: Question| match policy {
        BasisPolicy::SiftDiscard => 0.25,
        BasisPolicy::CharlieAnnounces => {
            if a == b {
                0.5
            } else {
                0.0
            }
        }
    };
    let mut out = Vec::new();
    let mut accepted_mass = 0.0;
    for (k, branch) in branches.iter().enumerate() {
        let Some(post) = &branch.post_state else { continue };
        for q in [Question::X, Question::Z] {
            let weight = pair_weight(q, q);
            accepted_mass += branch.probability * weight;
            let probs = pair_distribution(post, q, q, charlie)?;
            for (idx, p) in probs.iter().enumerate() {
                out.push((
                    AcceptedOutcome {
                        branch: k,
                        basis: xz_index(q),
                        alice: outcome_sign(idx >> 1),
                        bob: outcome_sign(idx & 1),
                    },
                    branch.probability * weight * p,
                ));
            }
        }
    }
    for (_, p) in out.iter_mut() {
        *p /= accepted_mass;
    }
    Ok(out)
}

/// Exact honest compliance rate of accepted control rounds.
pub fn honest_control_compliance(lambda: f64) -> Result<f64> {
    let dist = accepted_round_distribution(lambda, BasisPolicy::CharlieAnnounces)?;
    let control: f64 = dist.iter().filter(|(o, _)| o.branch == 1).map(|(_, p)| p).sum();
    let compliant: f64 = dist
        .iter()
        .filter(|(o, _)| o.branch == 1)
        .filter(|(o, _)| {
            let q = if o.basis == 0 { Question::X } else { Question::Z };
            o.alice * o.bob == rule_target(Outcome::B1, q)
        })
        .map(|(_, p)| p)
        .sum();
    Ok(compliant / control)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn cached_draws_match_seeking_the_cipher() {
        use rand::Rng;
        let mut cached = SessionRandomness::new(31);
        let mut plain = ChaCha8Rng::seed_from_u64(31);
        plain.set_stream(Stream::Bob as u64 + 1);
        for (round, slot) in [(0, 0), (0, 7), (3, 1), (4, 0), (2, 5), (1_000_003, 3), (0, 1)] {
            plain.set_word_pos(u128::from(round) * WORDS_PER_ROUND + u128::from(slot) * 2);
            let expected: f64 = plain.random();
            assert_eq!(cached.uniform(Stream::Bob, round, slot), expected);
        }
    }

    #[test]
    fn table_cells_named_examples() {
        use AxisState::*;
        assert_eq!(qss_alice_inference(PlusX, PlusX), PlusX);
        assert_eq!(qss_alice_inference(PlusY, PlusY), MinusX);
        assert_eq!(qss_alice_inference(PlusX, PlusY), MinusY);
    }

    #[test]
    fn table_matches_printed_grid() {
        use AxisState::*;
        // rows: Bob; columns: Charlie (+x, -x, +y, -y)
        let grid = [
            (PlusX, [PlusX, MinusX, MinusY, PlusY]),
            (MinusX, [MinusX, PlusX, PlusY, MinusY]),
            (PlusY, [MinusY, PlusY, MinusX, PlusX]),
            (MinusY, [PlusY, MinusY, PlusX, MinusX]),
        ];
        for (bob, row) in grid {
            for (charlie, expected) in AxisState::ALL.iter().zip(row) {
                assert_eq!(qss_alice_inference(bob, *charlie), expected, "{bob} {charlie}");
            }
        }
    }

    #[test]
    fn qss_session_rejects_zero_rounds() {
        assert!(qss_session(0, 1).is_err());
    }

    #[test]
    fn qss_inference_holds_on_every_accepted_round() {
        let t = qss_session(20_000, 11).unwrap();
        let check = qss_check(&t).unwrap();
        assert!(check.accepted > 0);
        assert_eq!(check.accepted, check.inference_matches);
        assert!(t.ids_are_dense());
    }

    #[test]
    fn message_round_correlations() {
        let t = facilitated_session(20_000, FRAC_PI_2, BasisPolicy::SiftDiscard, CheatModel::Honest, 5).unwrap();
        for r in t.rounds.iter().filter(|r| r.mode == RoundMode::Message && r.accepted) {
            match r.alice_basis {
                Question::X => assert_eq!(r.alice_outcome, r.bob_outcome),
                _ => assert_eq!(r.alice_outcome, -r.bob_outcome),
            }
        }
        for r in t.rounds.iter().filter(|r| r.mode == RoundMode::Control && r.accepted) {
            if r.alice_basis == Question::Z {
                assert_eq!((r.alice_outcome, r.bob_outcome), (1, 1));
            }
        }
    }

    #[test]
    fn key_bits_follow_the_flip_rule() {
        let mk = |basis, a, b| RoundRecord {
            round_id: 0,
            mode: RoundMode::Message,
            charlie_basis: None,
            charlie_outcome: Outcome::B0,
            alice_basis: basis,
            bob_basis: basis,
            alice_outcome: a,
            bob_outcome: b,
            accepted: true,
        };
        let t = SessionTranscript {
            params: SessionParams::facilitated(2, FRAC_PI_2, BasisPolicy::SiftDiscard, CheatModel::Honest, 0),
            rounds: vec![mk(Question::X, 1, 1), mk(Question::Z, 1, -1)],
            complete: true,
        };
        let keys = extract_key(&t).unwrap();
        assert_eq!(keys.alice_key, vec![0, 0]);
        assert_eq!(keys.bob_key, vec![0, 0]);
        assert_eq!(keys.agreement_rate(), Some(1.0));
    }

    #[test]
    fn empty_key_has_no_agreement_rate() {
        let t = SessionTranscript {
            params: SessionParams::facilitated(1, FRAC_PI_2, BasisPolicy::SiftDiscard, CheatModel::Honest, 0),
            rounds: vec![],
            complete: true,
        };
        let keys = extract_key(&t).unwrap();
        assert!(keys.alice_key.is_empty());
        assert_eq!(keys.agreement_rate(), None);
        let report = detect_cheating(&t, DEFAULT_THRESHOLD, DEFAULT_SLACK).unwrap();
        assert_eq!(report.verdict, Verdict::Indeterminate);
        assert_eq!(report.compliance_rate, None);
    }

    #[test]
    fn cheat_models_leave_physics_untouched() {
        let honest = facilitated_session(2_000, FRAC_PI_2, BasisPolicy::SiftDiscard, CheatModel::Honest, 9).unwrap();
        for cheat in [CheatModel::RandomAnnouncer(Party::Bob), CheatModel::OutcomeFlipper(Party::Bob)] {
            let t = facilitated_session(2_000, FRAC_PI_2, BasisPolicy::SiftDiscard, cheat, 9).unwrap();
            for (h, c) in honest.rounds.iter().zip(&t.rounds) {
                assert_eq!(h.charlie_outcome, c.charlie_outcome);
                assert_eq!((h.alice_basis, h.bob_basis), (c.alice_basis, c.bob_basis));
                assert_eq!(h.alice_outcome, c.alice_outcome);
                if let CheatModel::OutcomeFlipper(_) = cheat {
                    assert_eq!(c.bob_outcome, -h.bob_outcome);
                }
            }
        }
    }

    #[test]
    fn exact_honest_compliance_is_three_quarters() {
        assert!((honest_control_compliance(FRAC_PI_2).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn policies_induce_identical_accepted_statistics() {
        for lambda in [FRAC_PI_2, 0.0, 0.7] {
            let a = accepted_round_distribution(lambda, BasisPolicy::SiftDiscard).unwrap();
            let b = accepted_round_distribution(lambda, BasisPolicy::CharlieAnnounces).unwrap();
            assert_eq!(a.len(), b.len());
            for ((ka, pa), (kb, pb)) in a.iter().zip(&b) {
                assert_eq!(ka, kb);
                assert!((pa - pb).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cheat_model_parsing() {
        assert_eq!("honest".parse::<CheatModel>().unwrap(), CheatModel::Honest);
        assert_eq!("random:bob".parse::<CheatModel>().unwrap(), CheatModel::RandomAnnouncer(Party::Bob));
        assert_eq!("flip:alice".parse::<CheatModel>().unwrap(), CheatModel::OutcomeFlipper(Party::Alice));
        assert!("flip:charlie".parse::<CheatModel>().is_err());
        assert!("eve".parse::<CheatModel>().is_err());
        for m in CheatModel::all_for(Party::Bob) {
            assert_eq!(m.id().parse::<CheatModel>().unwrap(), m);
        }
    }

    #[test]
    fn invalid_lambda_rejected() {
        assert!(facilitated_session(10, f64::NAN, BasisPolicy::SiftDiscard, CheatModel::Honest, 0).is_err());
        assert!(facilitated_session(0, FRAC_PI_2, BasisPolicy::SiftDiscard, CheatModel::Honest, 0).is_err());
    }

    #[test]
    fn transcript_jsonl_round_trip() {
        let t = facilitated_session(50, FRAC_PI_2, BasisPolicy::CharlieAnnounces, CheatModel::Honest, 3).unwrap();
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 51);
        assert_eq!(SessionTranscript::from_jsonl(&text).unwrap(), t);
    }
}
