//! Classical-channel harness for protocol sessions.
//!
//! Alice, Bob and Charlie run as independent sequential actors that only talk
//! through [`Channel`]s. The topology is a star centered on Charlie: Alice and
//! Bob have no link to each other, so anything they learn about one another
//! has to be relayed by the facilitator.
//!
//! Frames are a 4-byte big-endian length followed by a UTF-8 JSON object. The
//! field names are fixed by `schema/wire-v1.md` at the repository root.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::games::Question;
use crate::protocols::{
    BasisPolicy, Party, Protocol, RoundMode, RoundRecord, SessionEngine, SessionParams,
    SessionTranscript,
};
use crate::qcore::Outcome;

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest accepted frame body, in bytes.
pub const MAX_FRAME: usize = 64 * 1024;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
/// Message-round ids per `ModeReveal` frame, which keeps frames well under
/// [`MAX_FRAME`] for any session length.
const REVEAL_CHUNK: usize = 4096;

const MSG_TYPES: [&str; 8] = [
    "SessionStart",
    "BasisAnnounce",
    "BasisInstruct",
    "AnnounceRequest",
    "OutcomeAnnounce",
    "ModeReveal",
    "FlipRule",
    "SessionEnd",
];

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame of {0} bytes exceeds the 64 KiB limit")]
    Oversize(usize),
    #[error("unsupported message type {0:?}")]
    UnsupportedType(String),
    #[error("protocol version mismatch: expected {expected}, got {got}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("handshake failed: {0}")]
    Handshake(Box<TransportError>),
    #[error("timed out waiting for a message")]
    Timeout,
    #[error("peer disconnected")]
    Disconnected,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub version: u32,
    pub session_id: u64,
    pub round_id: u64,
    pub sender: Party,
    #[serde(flatten)]
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "msg_type", content = "payload")]
pub enum Payload {
    /// A player's hello carries no parameters; Charlie's reply carries them.
    SessionStart { params: Option<SessionParams> },
    /// A basis choice. Charlie relays these in secret sharing, so `party`
    /// names whose basis it is rather than who sent it.
    BasisAnnounce { party: Party, basis: Question },
    BasisInstruct { basis: Question },
    AnnounceRequest { announce: bool },
    OutcomeAnnounce { outcome: i8 },
    ModeReveal { message_rounds: Vec<u64>, last: bool },
    /// Which party flips its key bit, and on which basis.
    FlipRule { party: Party, basis: Question },
    SessionEnd { rounds_completed: u64 },
}

impl Payload {
    pub fn msg_type(&self) -> &'static str {
        match self {
            Payload::SessionStart { .. } => "SessionStart",
            Payload::BasisAnnounce { .. } => "BasisAnnounce",
            Payload::BasisInstruct { .. } => "BasisInstruct",
            Payload::AnnounceRequest { .. } => "AnnounceRequest",
            Payload::OutcomeAnnounce { .. } => "OutcomeAnnounce",
            Payload::ModeReveal { .. } => "ModeReveal",
            Payload::FlipRule { .. } => "FlipRule",
            Payload::SessionEnd { .. } => "SessionEnd",
        }
    }
}

/// Length-prefixed JSON frame for `msg`.
pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, TransportError> {
    let body = serde_json::to_vec(msg).map_err(|e| TransportError::Malformed(e.to_string()))?;
    if body.len() > MAX_FRAME {
        return Err(TransportError::Oversize(body.len()));
    }
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

/// Parses one complete frame, prefix included.
pub fn decode(frame: &[u8]) -> Result<WireMessage, TransportError> {
    let prefix: [u8; 4] = frame
        .get(..4)
        .and_then(|p| p.try_into().ok())
        .ok_or_else(|| TransportError::Malformed(format!("{} bytes is shorter than the prefix", frame.len())))?;
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME {
        return Err(TransportError::Oversize(len));
    }
    let body = &frame[4..];
    if body.len() != len {
        return Err(TransportError::Malformed(format!(
            "prefix declares {len} bytes, frame carries {}",
            body.len()
        )));
    }
    decode_body(body)
}

fn decode_body(body: &[u8]) -> Result<WireMessage, TransportError> {
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| TransportError::Malformed(e.to_string()))?;
    match value.get("msg_type") {
        Some(serde_json::Value::String(t)) if MSG_TYPES.contains(&t.as_str()) => {}
        Some(serde_json::Value::String(t)) => return Err(TransportError::UnsupportedType(t.clone())),
        _ => return Err(TransportError::Malformed("missing msg_type".into())),
    }
    serde_json::from_value(value).map_err(|e| TransportError::Malformed(e.to_string()))
}

/// One end of a bidirectional, FIFO, loss-free frame pipe.
pub trait Channel: Send {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError>;
    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>, TransportError>;
}

pub struct InProcessChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process endpoints.
pub fn in_process_pair() -> (InProcessChannel, InProcessChannel) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    (
        InProcessChannel { tx: tx_a, rx: rx_a },
        InProcessChannel { tx: tx_b, rx: rx_b },
    )
}

impl Channel for InProcessChannel {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        self.tx.send(frame).map_err(|_| TransportError::Disconnected)
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        self.rx.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => TransportError::Timeout,
            RecvTimeoutError::Disconnected => TransportError::Disconnected,
        })
    }
}

pub struct TcpChannel {
    stream: TcpStream,
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn connect(addr: SocketAddr, timeout: Duration) -> Result<Self, TransportError> {
        let deadline = Instant::now() + timeout;
        loop {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(s) => return Self::new(s),
                // the listener may not be up yet when roles start as separate processes
                Err(e) if e.kind() == ErrorKind::ConnectionRefused && Instant::now() < deadline => {
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(io_error(e)),
            }
        }
    }
}

fn io_error(e: std::io::Error) -> TransportError {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => TransportError::Timeout,
        ErrorKind::UnexpectedEof
        | ErrorKind::ConnectionReset
        | ErrorKind::ConnectionAborted
        | ErrorKind::BrokenPipe => TransportError::Disconnected,
        _ => TransportError::Io(e),
    }
}

impl Channel for TcpChannel {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        self.stream.write_all(&frame).map_err(io_error)
    }

    fn recv_frame(&mut self, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        self.stream.set_read_timeout(Some(timeout))?;
        let mut frame = vec![0u8; 4];
        self.stream.read_exact(&mut frame).map_err(io_error)?;
        let len = u32::from_be_bytes(frame[..4].try_into().expect("4 bytes")) as usize;
        if len > MAX_FRAME {
            return Err(TransportError::Oversize(len));
        }
        frame.resize(4 + len, 0);
        self.stream.read_exact(&mut frame[4..]).map_err(io_error)?;
        Ok(frame)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    /// TCP over loopback, all roles in this process.
    Socket,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransportOptions {
    /// Per-message receive timeout.
    pub timeout: Duration,
    /// Extra receive attempts after a timeout.
    pub retries: u32,
    /// Version this role speaks.
    pub version: u32,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            timeout: DEFAULT_TIMEOUT,
            retries: 0,
            version: PROTOCOL_VERSION,
        }
    }
}

/// A channel plus the per-peer bookkeeping every role needs.
struct Link {
    chan: Box<dyn Channel>,
    me: Party,
    peer: Option<Party>,
    session_id: u64,
    opts: TransportOptions,
    last_round_in: u64,
}

impl Link {
    fn new(chan: Box<dyn Channel>, me: Party, opts: TransportOptions) -> Self {
        Self {
            chan,
            me,
            peer: None,
            session_id: 0,
            opts,
            last_round_in: 0,
        }
    }

    fn send(&mut self, round_id: u64, payload: Payload) -> Result<(), TransportError> {
        let msg = WireMessage {
            version: self.opts.version,
            session_id: self.session_id,
            round_id,
            sender: self.me,
            payload,
        };
        self.chan.send_frame(encode(&msg)?)
    }

    fn recv(&mut self) -> Result<WireMessage, TransportError> {
        let mut attempt = 0;
        let frame = loop {
            match self.chan.recv_frame(self.opts.timeout) {
                Err(TransportError::Timeout) if attempt < self.opts.retries => attempt += 1,
                other => break other?,
            }
        };
        let msg = decode(&frame)?;
        if msg.version != self.opts.version {
            return Err(TransportError::VersionMismatch {
                expected: self.opts.version,
                got: msg.version,
            });
        }
        if let Some(peer) = self.peer {
            if msg.sender != peer {
                return Err(TransportError::Protocol(format!(
                    "expected a message from {peer}, got one from {}",
                    msg.sender
                )));
            }
            if msg.session_id != self.session_id {
                return Err(TransportError::Protocol(format!(
                    "session id {} does not match {}",
                    msg.session_id, self.session_id
                )));
            }
        }
        if msg.round_id < self.last_round_in {
            return Err(TransportError::Protocol(format!(
                "round id went backwards from {} to {}",
                self.last_round_in, msg.round_id
            )));
        }
        self.last_round_in = msg.round_id;
        Ok(msg)
    }

    fn expect_round(&mut self, round: u64) -> Result<Payload, TransportError> {
        let msg = self.recv()?;
        if msg.round_id != round {
            return Err(TransportError::Protocol(format!(
                "expected round {round}, got {} ({})",
                msg.round_id,
                msg.payload.msg_type()
            )));
        }
        Ok(msg.payload)
    }
}

fn unexpected(payload: &Payload, wanted: &str) -> TransportError {
    TransportError::Protocol(format!("expected {wanted}, got {}", payload.msg_type()))
}

/// Charlie's view of one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharlieRound {
    pub round_id: u64,
    pub mode: RoundMode,
    pub charlie_basis: Option<Question>,
    pub charlie_outcome: Outcome,
    pub alice_basis: Question,
    pub bob_basis: Question,
    pub accepted: bool,
    /// Outcomes announced on request, Alice first.
    pub announced: Option<[i8; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharlieLog {
    pub params: SessionParams,
    pub session_id: u64,
    pub rounds: Vec<CharlieRound>,
}

/// A player's view of one round: only its own basis and outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerRound {
    pub round_id: u64,
    pub basis: Question,
    pub outcome: i8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerLog {
    pub party: Party,
    pub session_id: u64,
    pub rounds: Vec<PlayerRound>,
    /// Accepted message rounds as revealed at session end.
    pub message_rounds: Vec<u64>,
    pub flip_rule: Option<(Party, Question)>,
}

/// How far an actor got, what it saw, and why it stopped if it stopped early.
#[derive(Debug)]
pub struct ActorOutcome<L> {
    pub log: L,
    pub handshake_ok: bool,
    pub error: Option<TransportError>,
}

fn player_slot(party: Party) -> usize {
    match party {
        Party::Alice => 0,
        _ => 1,
    }
}

/// Charlie's side of a session. `a` and `b` are the two links in any order;
/// the players identify themselves in their hellos.
pub fn run_charlie(
    params: &SessionParams,
    session_id: u64,
    a: Box<dyn Channel>,
    b: Box<dyn Channel>,
    opts: TransportOptions,
) -> ActorOutcome<CharlieLog> {
    let mut log = CharlieLog {
        params: params.clone(),
        session_id,
        rounds: Vec::new(),
    };
    let links = match charlie_handshake(params, session_id, a, b, opts) {
        Ok(links) => links,
        Err(e) => {
            return ActorOutcome {
                log,
                handshake_ok: false,
                error: Some(TransportError::Handshake(Box::new(e))),
            }
        }
    };
    let error = charlie_rounds(params, links, &mut log).err();
    ActorOutcome {
        log,
        handshake_ok: true,
        error,
    }
}

fn charlie_handshake(
    params: &SessionParams,
    session_id: u64,
    a: Box<dyn Channel>,
    b: Box<dyn Channel>,
    opts: TransportOptions,
) -> Result<[Link; 2], TransportError> {
    params
        .validate()
        .map_err(|e| TransportError::Protocol(e.to_string()))?;
    let mut slots: [Option<Link>; 2] = [None, None];
    for chan in [a, b] {
        let mut link = Link::new(chan, Party::Charlie, opts);
        let hello = link.recv()?;
        if !matches!(hello.payload, Payload::SessionStart { params: None }) {
            return Err(unexpected(&hello.payload, "a SessionStart hello"));
        }
        if hello.sender == Party::Charlie {
            return Err(TransportError::Protocol("hello from a second facilitator".into()));
        }
        let slot = player_slot(hello.sender);
        if slots[slot].is_some() {
            return Err(TransportError::Protocol(format!("{} connected twice", hello.sender)));
        }
        link.peer = Some(hello.sender);
        link.session_id = session_id;
        slots[slot] = Some(link);
    }
    let mut links = slots.map(|l| l.expect("both slots filled"));
    // nothing is sent until both hellos have passed, so a failed handshake
    // leaves no round started
    for link in &mut links {
        link.send(
            0,
            Payload::SessionStart {
                params: Some(params.clone()),
            },
        )?;
    }
    Ok(links)
}

fn charlie_rounds(
    params: &SessionParams,
    mut links: [Link; 2],
    log: &mut CharlieLog,
) -> Result<(), TransportError> {
    let mut engine = SessionEngine::new(params).map_err(|e| TransportError::Protocol(e.to_string()))?;
    let facilitated = params.protocol == Protocol::Facilitated;
    for round in 0..params.m {
        let truth = engine.round_truth(round);
        let mut bases = [truth.bases[0], truth.bases[1]];
        let sift = !facilitated || params.policy == Some(BasisPolicy::SiftDiscard);
        if sift {
            for (i, link) in links.iter_mut().enumerate() {
                match link.expect_round(round)? {
                    Payload::BasisAnnounce { party, basis } if party == link.peer.expect("set") => {
                        bases[i] = basis;
                    }
                    other => return Err(unexpected(&other, "BasisAnnounce")),
                }
            }
            if bases != [truth.bases[0], truth.bases[1]] {
                return Err(TransportError::Protocol(format!(
                    "round {round}: announced bases {bases:?} disagree with the seeded choices"
                )));
            }
        } else {
            for link in &mut links {
                link.send(round, Payload::BasisInstruct { basis: bases[0] })?;
            }
        }

        let (mode, accepted) = engine.classify(&truth);
        let mut announced = None;
        if facilitated {
            let announce = accepted && mode == RoundMode::Control;
            for link in &mut links {
                link.send(round, Payload::AnnounceRequest { announce })?;
            }
            if announce {
                let mut outs = [0i8; 2];
                for (i, link) in links.iter_mut().enumerate() {
                    match link.expect_round(round)? {
                        Payload::OutcomeAnnounce { outcome } if outcome == 1 || outcome == -1 => {
                            outs[i] = outcome
                        }
                        other => return Err(unexpected(&other, "OutcomeAnnounce of ±1")),
                    }
                }
                announced = Some(outs);
            }
        } else {
            // secret sharing: each player learns the other two bases
            let relay = [
                (Party::Alice, bases[0]),
                (Party::Bob, bases[1]),
                (Party::Charlie, truth.bases[2]),
            ];
            for (i, link) in links.iter_mut().enumerate() {
                for (party, basis) in relay {
                    if party.index() != i {
                        link.send(round, Payload::BasisAnnounce { party, basis })?;
                    }
                }
            }
        }

        log.rounds.push(CharlieRound {
            round_id: round,
            mode,
            charlie_basis: (!facilitated).then_some(truth.bases[2]),
            charlie_outcome: truth.charlie_outcome,
            alice_basis: bases[0],
            bob_basis: bases[1],
            accepted,
            announced,
        });
    }

    let end = params.m;
    if facilitated {
        let message_rounds: Vec<u64> = log
            .rounds
            .iter()
            .filter(|r| r.accepted && r.mode == RoundMode::Message)
            .map(|r| r.round_id)
            .collect();
        let chunks: Vec<&[u64]> = if message_rounds.is_empty() {
            vec![&[]]
        } else {
            message_rounds.chunks(REVEAL_CHUNK).collect()
        };
        for link in &mut links {
            for (k, chunk) in chunks.iter().enumerate() {
                link.send(
                    end,
                    Payload::ModeReveal {
                        message_rounds: chunk.to_vec(),
                        last: k + 1 == chunks.len(),
                    },
                )?;
            }
            link.send(
                end,
                Payload::FlipRule {
                    party: Party::Bob,
                    basis: Question::Z,
                },
            )?;
        }
    }
    for link in &mut links {
        link.send(end, Payload::SessionEnd { rounds_completed: end })?;
    }
    for link in &mut links {
        match link.expect_round(end)? {
            Payload::SessionEnd { rounds_completed } if rounds_completed == end => {}
            other => return Err(unexpected(&other, "SessionEnd")),
        }
    }
    Ok(())
}

/// Alice's or Bob's side of a session.
pub fn run_player(party: Party, chan: Box<dyn Channel>, opts: TransportOptions) -> ActorOutcome<PlayerLog> {
    let mut log = PlayerLog {
        party,
        session_id: 0,
        rounds: Vec::new(),
        message_rounds: Vec::new(),
        flip_rule: None,
    };
    if party == Party::Charlie {
        return ActorOutcome {
            log,
            handshake_ok: false,
            error: Some(TransportError::Handshake(Box::new(TransportError::Protocol(
                "charlie is not a player".into(),
            )))),
        };
    }
    let mut link = Link::new(chan, party, opts);
    let params = match player_handshake(&mut link) {
        Ok(p) => p,
        Err(e) => {
            return ActorOutcome {
                log,
                handshake_ok: false,
                error: Some(TransportError::Handshake(Box::new(e))),
            }
        }
    };
    log.session_id = link.session_id;
    let error = player_rounds(&params, &mut link, &mut log).err();
    ActorOutcome {
        log,
        handshake_ok: true,
        error,
    }
}

fn player_handshake(link: &mut Link) -> Result<SessionParams, TransportError> {
    link.send(0, Payload::SessionStart { params: None })?;
    let reply = link.recv()?;
    if reply.sender != Party::Charlie {
        return Err(TransportError::Protocol(format!("session started by {}", reply.sender)));
    }
    match reply.payload {
        Payload::SessionStart { params: Some(params) } => {
            params
                .validate()
                .map_err(|e| TransportError::Protocol(e.to_string()))?;
            link.peer = Some(Party::Charlie);
            link.session_id = reply.session_id;
            Ok(params)
        }
        other => Err(unexpected(&other, "SessionStart with parameters")),
    }
}

fn player_rounds(params: &SessionParams, link: &mut Link, log: &mut PlayerLog) -> Result<(), TransportError> {
    let me = log.party;
    let slot = player_slot(me);
    let mut engine = SessionEngine::new(params).map_err(|e| TransportError::Protocol(e.to_string()))?;
    let facilitated = params.protocol == Protocol::Facilitated;
    let sift = !facilitated || params.policy == Some(BasisPolicy::SiftDiscard);
    for round in 0..params.m {
        let basis = if sift {
            let b = engine.own_basis(round, me);
            link.send(round, Payload::BasisAnnounce { party: me, basis: b })?;
            b
        } else {
            match link.expect_round(round)? {
                Payload::BasisInstruct { basis } => basis,
                other => return Err(unexpected(&other, "BasisInstruct")),
            }
        };
        // the engine also samples the partner's outcome; only our own is read
        let truth = engine.round_truth(round);
        if truth.bases[slot] != basis {
            return Err(TransportError::Protocol(format!(
                "round {round}: basis {basis} disagrees with the seeded choice"
            )));
        }
        let outcome = engine.recorded_outcome(round, me, truth.outcomes[slot]);

        if facilitated {
            match link.expect_round(round)? {
                Payload::AnnounceRequest { announce } => {
                    if announce {
                        link.send(round, Payload::OutcomeAnnounce { outcome })?;
                    }
                }
                other => return Err(unexpected(&other, "AnnounceRequest")),
            }
        } else {
            for _ in 0..2 {
                match link.expect_round(round)? {
                    Payload::BasisAnnounce { party, .. } if party != me => {}
                    other => return Err(unexpected(&other, "a relayed BasisAnnounce")),
                }
            }
        }
        log.rounds.push(PlayerRound {
            round_id: round,
            basis,
            outcome,
        });
    }

    let end = params.m;
    loop {
        match link.expect_round(end)? {
            Payload::ModeReveal { message_rounds, .. } if facilitated => {
                log.message_rounds.extend(message_rounds)
            }
            Payload::FlipRule { party, basis } if facilitated => log.flip_rule = Some((party, basis)),
            Payload::SessionEnd { rounds_completed } if rounds_completed == end => break,
            other => return Err(unexpected(&other, "end-of-session message")),
        }
    }
    link.send(end, Payload::SessionEnd { rounds_completed: end })?;
    Ok(())
}

/// Joins the three role logs into a transcript, keeping the rounds all three
/// completed.
pub fn assemble(
    charlie: &CharlieLog,
    alice: &PlayerLog,
    bob: &PlayerLog,
    all_ok: bool,
) -> Result<SessionTranscript, TransportError> {
    if alice.party != Party::Alice || bob.party != Party::Bob {
        return Err(TransportError::Protocol("player logs are not Alice then Bob".into()));
    }
    for p in [alice, bob] {
        if !p.rounds.is_empty() && p.session_id != charlie.session_id {
            return Err(TransportError::Protocol(format!("{} log is from another session", p.party)));
        }
    }
    let n = charlie.rounds.len().min(alice.rounds.len()).min(bob.rounds.len());
    let mut rounds = Vec::with_capacity(n);
    for ((c, a), b) in charlie.rounds.iter().zip(&alice.rounds).zip(&bob.rounds).take(n) {
        if a.round_id != c.round_id || b.round_id != c.round_id {
            return Err(TransportError::Protocol(format!("round ids diverge at {}", c.round_id)));
        }
        if a.basis != c.alice_basis || b.basis != c.bob_basis {
            return Err(TransportError::Protocol(format!("bases diverge at round {}", c.round_id)));
        }
        if let Some([oa, ob]) = c.announced {
            if oa != a.outcome || ob != b.outcome {
                return Err(TransportError::Protocol(format!(
                    "announced outcomes diverge at round {}",
                    c.round_id
                )));
            }
        }
        rounds.push(RoundRecord {
            round_id: c.round_id,
            mode: c.mode,
            charlie_basis: c.charlie_basis,
            charlie_outcome: c.charlie_outcome,
            alice_basis: a.basis,
            bob_basis: b.basis,
            alice_outcome: a.outcome,
            bob_outcome: b.outcome,
            accepted: c.accepted,
        });
    }
    Ok(SessionTranscript {
        params: charlie.params.clone(),
        complete: all_ok && n as u64 == charlie.params.m,
        rounds,
    })
}

/// Result of a harness run that got past the handshake.
#[derive(Debug)]
pub struct RunReport {
    pub transcript: SessionTranscript,
    /// First failure seen, if the session ended early.
    pub failure: Option<TransportError>,
}

/// Runs all three roles over the given channels, one thread per role.
///
/// `charlie` holds Charlie's two ends, `alice` and `bob` the players' ends.
/// `opts` is indexed by [`Party::index`]. A handshake failure is an error;
/// a later failure yields a truncated transcript flagged incomplete.
pub fn run_with_channels(
    params: &SessionParams,
    session_id: u64,
    charlie: [Box<dyn Channel>; 2],
    alice: Box<dyn Channel>,
    bob: Box<dyn Channel>,
    opts: [TransportOptions; 3],
) -> Result<RunReport, TransportError> {
    let [ca, cb] = charlie;
    let (c, a, b) = std::thread::scope(|s| {
        let ha = s.spawn(move || run_player(Party::Alice, alice, opts[0]));
        let hb = s.spawn(move || run_player(Party::Bob, bob, opts[1]));
        let c = run_charlie(params, session_id, ca, cb, opts[2]);
        let a = ha.join().expect("alice thread panicked");
        let b = hb.join().expect("bob thread panicked");
        (c, a, b)
    });
    finish(c, a, b)
}

fn finish(
    c: ActorOutcome<CharlieLog>,
    a: ActorOutcome<PlayerLog>,
    b: ActorOutcome<PlayerLog>,
) -> Result<RunReport, TransportError> {
    if !(c.handshake_ok && a.handshake_ok && b.handshake_ok) {
        // Charlie's view names the root cause; the players usually just see
        // the facilitator hang up
        let err = [c.error, a.error, b.error]
            .into_iter()
            .flatten()
            .find(|e| !matches!(e, TransportError::Handshake(inner) if matches!(**inner, TransportError::Disconnected)))
            .unwrap_or(TransportError::Handshake(Box::new(TransportError::Disconnected)));
        return Err(err);
    }
    let all_ok = c.error.is_none() && a.error.is_none() && b.error.is_none();
    let transcript = assemble(&c.log, &a.log, &b.log, all_ok)?;
    Ok(RunReport {
        transcript,
        failure: c.error.or(a.error).or(b.error),
    })
}

/// Session id used when none is given: a fixed mix of the seed.
pub fn default_session_id(params: &SessionParams) -> u64 {
    params.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ params.m
}

/// Runs a full session with every role in this process.
pub fn run_roles(
    params: &SessionParams,
    kind: TransportKind,
    opts: TransportOptions,
) -> Result<RunReport, TransportError> {
    let session_id = default_session_id(params);
    match kind {
        TransportKind::InProcess => {
            let (ca, a) = in_process_pair();
            let (cb, b) = in_process_pair();
            run_with_channels(
                params,
                session_id,
                [Box::new(ca), Box::new(cb)],
                Box::new(a),
                Box::new(b),
                [opts; 3],
            )
        }
        TransportKind::Socket => run_socket(params, SocketAddr::from(([127, 0, 0, 1], 0)), opts),
    }
}

/// All three roles in this process, talking over TCP through a listener
/// bound at `bind`.
pub fn run_socket(
    params: &SessionParams,
    bind: SocketAddr,
    opts: TransportOptions,
) -> Result<RunReport, TransportError> {
    let session_id = default_session_id(params);
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    let (c, a, b) = std::thread::scope(|s| {
        let ha = s.spawn(move || connect_player(Party::Alice, addr, opts));
        let hb = s.spawn(move || connect_player(Party::Bob, addr, opts));
        let c = serve_charlie(params, session_id, &listener, opts);
        (c, ha.join().expect("alice thread panicked"), hb.join().expect("bob thread panicked"))
    });
    finish(c, a, b)
}

/// Accepts one connection before `deadline`.
fn accept_until(listener: &TcpListener, deadline: Instant) -> Result<TcpStream, TransportError> {
    listener.set_nonblocking(true)?;
    let out = loop {
        match listener.accept() {
            Ok((stream, _)) => break Ok(stream),
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    break Err(TransportError::Timeout);
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            Err(e) => break Err(TransportError::Io(e)),
        }
    };
    listener.set_nonblocking(false)?;
    let stream = out?;
    stream.set_nonblocking(false)?;
    Ok(stream)
}

/// Charlie over TCP: accepts both players on `listener`, then runs the session.
pub fn serve_charlie(
    params: &SessionParams,
    session_id: u64,
    listener: &TcpListener,
    opts: TransportOptions,
) -> ActorOutcome<CharlieLog> {
    let deadline = Instant::now() + opts.timeout * (opts.retries + 1);
    let accepted = accept_until(listener, deadline)
        .and_then(TcpChannel::new)
        .and_then(|a| Ok((a, TcpChannel::new(accept_until(listener, deadline)?)?)));
    match accepted {
        Ok((a, b)) => run_charlie(params, session_id, Box::new(a), Box::new(b), opts),
        Err(e) => ActorOutcome {
            log: CharlieLog {
                params: params.clone(),
                session_id,
                rounds: Vec::new(),
            },
            handshake_ok: false,
            error: Some(TransportError::Handshake(Box::new(e))),
        },
    }
}

/// A player over TCP: connects to Charlie at `addr`, then runs the session.
pub fn connect_player(party: Party, addr: SocketAddr, opts: TransportOptions) -> ActorOutcome<PlayerLog> {
    match TcpChannel::connect(addr, opts.timeout) {
        Ok(chan) => run_player(party, Box::new(chan), opts),
        Err(e) => ActorOutcome {
            log: PlayerLog {
                party,
                session_id: 0,
                rounds: Vec::new(),
                message_rounds: Vec::new(),
                flip_rule: None,
            },
            handshake_ok: false,
            error: Some(TransportError::Handshake(Box::new(e))),
        },
    }
}
