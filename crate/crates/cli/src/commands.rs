use std::fmt;
use std::fs;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::ValueEnum;
use vaidman_core::games::{
    self, classical_best, exact_quantum_win, ghz_rule_maker_closed_form, ghz_xy_closed_form,
    monte_carlo_rule_maker, monte_carlo_win, rule_maker_win, w_rule_maker_closed_form,
    w_zy_closed_form, wn_zy_closed_form, xy_game_spec, zy_game_spec, RuleMakerSpec, SweepFamily,
    SweepParam, CLASSICAL_BOUND,
};
use vaidman_core::protocols::{
    detect_cheating, extract_key, qss_check, BasisPolicy, CheatModel, Party, Protocol,
    SessionParams, SessionTranscript, Verdict,
};
use vaidman_core::states::{
    ghz_class, standard_ghz, standard_w, w_class, w_n, GhzClassParams, WClassParams, WnParams,
};
use vaidman_core::transport::{
    assemble, connect_player, default_session_id, run_roles, run_socket, serve_charlie,
    CharlieLog, PlayerLog, TransportError, TransportKind, TransportOptions,
};
use vaidman_core::StateVector;

use crate::parse::{angle_grid, int_range, sig12};
use crate::{
    Cli, Command, FacilitatedArgs, Family, GameArgs, QssArgs, RoleFlag, StateKind, SweepArgs,
    TransportArgs, TransportFlag, VerifyArgs,
};

/// Closed forms and exact enumeration must agree to this.
const CLOSED_FORM_TOL: f64 = 1e-12;
/// Monte Carlo estimates must land within this many standard errors.
const MC_SIGMAS: f64 = 3.0;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Transport(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Transport(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<vaidman_core::Error> for CliError {
    fn from(e: vaidman_core::Error) -> Self {
        match e {
            vaidman_core::Error::Transport(t) => CliError::Transport(t.to_string()),
            vaidman_core::Error::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        CliError::Transport(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn check_line(name: &str, pass: bool, detail: &str) -> bool {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

/// Returns whether every cross-check in the command passed.
pub fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Sweep(a) => cmd_sweep(a),
        Command::Game(a) => cmd_game(a),
        Command::Qss(a) => cmd_qss(a, &cli.out_dir),
        Command::Facilitated(a) => cmd_facilitated(a, &cli.out_dir),
        Command::VerifyAll(a) => cmd_verify_all(a),
    }
}

/// The family as spelled on the command line.
fn family_name(family: Family) -> String {
    family.to_possible_value().expect("no skipped variants").get_name().to_owned()
}

fn cmd_sweep(args: SweepArgs) -> Result<bool, CliError> {
    let reject = |flag: &str, given: bool| -> Result<(), CliError> {
        if given {
            Err(usage(format!("--{flag} does not apply to {}", family_name(args.family))))
        } else {
            Ok(())
        }
    };
    let angles = |given: &Option<String>, default: &str| angle_grid(given.as_deref().unwrap_or(default)).map_err(usage);
    let family = match args.family {
        Family::Ghz => {
            reject("n", args.n.is_some())?;
            reject("lambda", args.lambda.is_some())?;
            reject("divisions", args.divisions.is_some())?;
            SweepFamily::GhzTheta(angles(&args.theta, "0:pi/4:100")?)
        }
        Family::W => {
            reject("theta", args.theta.is_some())?;
            reject("n", args.n.is_some())?;
            reject("lambda", args.lambda.is_some())?;
            SweepFamily::WSimplex {
                divisions: args.divisions.unwrap_or(20),
            }
        }
        Family::Wn => {
            reject("theta", args.theta.is_some())?;
            reject("lambda", args.lambda.is_some())?;
            reject("divisions", args.divisions.is_some())?;
            SweepFamily::Wn(int_range(args.n.as_deref().unwrap_or("1..50")).map_err(usage)?)
        }
        Family::RulemakerW | Family::RulemakerGhz => {
            reject("theta", args.theta.is_some())?;
            reject("n", args.n.is_some())?;
            reject("divisions", args.divisions.is_some())?;
            let grid = angles(&args.lambda, "0:pi/2:90")?;
            if args.family == Family::RulemakerW {
                SweepFamily::RuleMakerW(grid)
            } else {
                SweepFamily::RuleMakerGhz(grid)
            }
        }
    };
    let rows = games::sweep(&family)?;
    if rows.is_empty() {
        return Err(usage("empty grid"));
    }

    let mut csv = String::from("parameter,x_measure,win_exact,win_closed_form,classical_baseline\n");
    let mut worst: f64 = 0.0;
    for row in &rows {
        let parameter = match row.parameter {
            SweepParam::Theta(t) | SweepParam::Lambda(t) => sig12(t),
            SweepParam::N(n) => n.to_string(),
            SweepParam::Amplitudes(amps) => amps.map(sig12).join(":"),
        };
        let closed = match row.win_closed_form {
            Some(c) => {
                worst = worst.max((c - row.win_exact).abs());
                sig12(c)
            }
            None => String::new(),
        };
        csv.push_str(&format!(
            "{parameter},{},{},{closed},{}\n",
            sig12(row.x_measure),
            sig12(row.win_exact),
            sig12(CLASSICAL_BOUND)
        ));
    }
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    let pass = worst <= CLOSED_FORM_TOL;
    eprintln!(
        "{} sweep {}: {} rows, largest closed-form gap {worst:.2e}",
        if pass { "PASS" } else { "FAIL" },
        family_name(args.family),
        rows.len()
    );
    Ok(pass)
}

struct BuiltState {
    state: StateVector,
    label: String,
    ghz_theta: Option<f64>,
    w_params: Option<WClassParams>,
    wn: Option<WnParams>,
}

fn build_state(args: &GameArgs) -> Result<BuiltState, CliError> {
    let only = |allowed: &[&str]| -> Result<(), CliError> {
        let given = [
            ("theta", args.theta.is_some()),
            ("a", args.a.is_some()),
            ("b", args.b.is_some()),
            ("c", args.c.is_some()),
            ("n", args.n.is_some()),
            ("gamma", args.gamma.is_some()),
            ("delta", args.delta.is_some()),
        ];
        match given.iter().find(|(name, set)| *set && !allowed.contains(name)) {
            Some((name, _)) => Err(usage(format!("--{name} does not apply to state {:?}", args.state))),
            None => Ok(()),
        }
    };
    let none = BuiltState {
        state: standard_ghz(),
        label: String::new(),
        ghz_theta: None,
        w_params: None,
        wn: None,
    };
    Ok(match args.state {
        StateKind::Ghz => {
            only(&["theta"])?;
            let theta = args.theta.unwrap_or(std::f64::consts::FRAC_PI_4);
            let p = GhzClassParams::new(theta);
            if p.outside_canonical_range() {
                eprintln!("note: theta = {theta} is outside (0, pi/4]");
            }
            BuiltState {
                state: ghz_class(p)?,
                label: format!("ghz(theta={})", sig12(theta)),
                ghz_theta: Some(theta),
                ..none
            }
        }
        StateKind::GhzStd => {
            only(&[])?;
            BuiltState {
                state: standard_ghz(),
                label: "ghz-std".into(),
                ghz_theta: Some(std::f64::consts::FRAC_PI_4),
                ..none
            }
        }
        StateKind::W => {
            only(&["a", "b", "c"])?;
            let (Some(a), Some(b), Some(c)) = (args.a, args.b, args.c) else {
                return Err(usage("state w needs --a, --b and --c"));
            };
            let p = WClassParams::real(a, b, c)?;
            BuiltState {
                state: w_class(p)?,
                label: format!("w(a={}, b={}, c={})", sig12(a), sig12(b), sig12(c)),
                w_params: Some(p),
                ..none
            }
        }
        StateKind::WStd => {
            only(&[])?;
            let t = 1.0 / 3f64.sqrt();
            BuiltState {
                state: standard_w(),
                label: "w-std".into(),
                w_params: Some(WClassParams::real(t, t, t)?),
                ..none
            }
        }
        StateKind::Wn => {
            only(&["n", "gamma", "delta"])?;
            let n = args.n.ok_or_else(|| usage("state wn needs --n"))?;
            let p = WnParams::new(n, args.gamma.unwrap_or(0.0), args.delta.unwrap_or(0.0))?;
            BuiltState {
                state: w_n(p)?,
                label: format!("w_n(n={n}, gamma={}, delta={})", sig12(p.gamma), sig12(p.delta)),
                w_params: Some(p.amplitudes()),
                wn: Some(p),
                ..none
            }
        }
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(sig12).unwrap_or_else(|| "n/a".into())
}

fn cmd_game(args: GameArgs) -> Result<bool, CliError> {
    let built = build_state(&args)?;
    if args.trials > 0 && args.seed.is_none() {
        return Err(usage("--seed is required with --trials"));
    }
    if args.lambda.is_some() && !args.rulemaker {
        return Err(usage("--lambda applies to --rulemaker only"));
    }
    let state = &built.state;
    let (game, exact, closed, classical, mc) = if args.rulemaker {
        let lambda = args.lambda.ok_or_else(|| usage("--rulemaker needs --lambda"))?;
        let spec = RuleMakerSpec::new(lambda)?;
        let closed = match args.state {
            StateKind::WStd => Some(w_rule_maker_closed_form(lambda)),
            StateKind::GhzStd => Some(ghz_rule_maker_closed_form(lambda)),
            _ => None,
        };
        let mc = match args.seed.filter(|_| args.trials > 0) {
            Some(seed) => Some(monte_carlo_rule_maker(state, &spec, args.trials, seed)?),
            None => None,
        };
        (format!("rulemaker(lambda={})", sig12(lambda)), rule_maker_win(state, &spec)?, closed, None, mc)
    } else {
        let (name, spec) = if args.xy {
            ("xy", xy_game_spec())
        } else {
            ("zy", zy_game_spec())
        };
        let closed = if args.xy {
            built.ghz_theta.map(ghz_xy_closed_form)
        } else {
            match built.wn {
                Some(p) if p.gamma == 0.0 && p.delta == 0.0 => Some(wn_zy_closed_form(p.n)),
                _ => built.w_params.as_ref().and_then(w_zy_closed_form),
            }
        };
        let mc = match args.seed.filter(|_| args.trials > 0) {
            Some(seed) => Some(monte_carlo_win(state, &spec, args.trials, seed)?),
            None => None,
        };
        (name.to_string(), exact_quantum_win(state, &spec)?, closed, Some(classical_best(&spec)), mc)
    };

    println!("state: {}", built.label);
    println!("game: {game}");
    println!("exact: {}", sig12(exact));
    println!("closed_form: {}", fmt_opt(closed));
    match &mc {
        Some(e) => println!(
            "monte_carlo: {} ± {} ({} trials, seed {})",
            sig12(e.estimate),
            sig12(e.std_error),
            e.trials,
            args.seed.expect("checked")
        ),
        None => println!("monte_carlo: n/a"),
    }
    match &classical {
        Some(c) => println!(
            "classical_best: {} ({}) via {}",
            sig12(c.value()),
            c.probability,
            c.strategy
        ),
        None => println!("classical_best: n/a"),
    }

    let mut pass = true;
    if let Some(c) = closed {
        let gap = (c - exact).abs();
        pass &= check_line("closed-form", gap <= CLOSED_FORM_TOL, &format!("gap {gap:.2e}"));
    }
    if let Some(e) = &mc {
        let z = if e.std_error > 0.0 {
            (e.estimate - exact) / e.std_error
        } else {
            0.0
        };
        pass &= check_line(
            "monte-carlo",
            e.agrees_with(exact, MC_SIGMAS),
            &format!("z = {z:.2} (limit ±{MC_SIGMAS})"),
        );
    }
    if let Some(c) = &classical {
        let exact_bound = c.probability == games::Ratio::<i64>::new(3, 4);
        pass &= check_line("classical-bound", exact_bound, &format!("best deterministic {}", c.probability));
    }
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn transport_options(t: &TransportArgs) -> Result<TransportOptions, CliError> {
    if !(t.timeout.is_finite() && t.timeout > 0.0) {
        return Err(usage("--timeout must be a positive number of seconds"));
    }
    Ok(TransportOptions {
        timeout: Duration::from_secs_f64(t.timeout),
        retries: t.retries,
        ..TransportOptions::default()
    })
}

/// What a session command ended up with.
enum SessionRun {
    Transcript(SessionTranscript, Option<TransportError>),
    /// A single role ran and wrote its log.
    RoleOnly(Option<TransportError>),
}

fn role_log_path(out: &Option<PathBuf>, out_dir: &Path, role: RoleFlag) -> PathBuf {
    out.clone().unwrap_or_else(|| {
        let name = match role {
            RoleFlag::Charlie => "charlie",
            RoleFlag::Alice => "alice",
            RoleFlag::Bob => "bob",
        };
        out_dir.join(format!("{name}-log.json"))
    })
}

fn run_session(
    params: Option<SessionParams>,
    t: &TransportArgs,
    out: &Option<PathBuf>,
    out_dir: &Path,
) -> Result<SessionRun, CliError> {
    let opts = transport_options(t)?;
    if let Some(paths) = &t.assemble {
        let charlie: CharlieLog = serde_json::from_str(&read_file(&paths[0])?).map_err(|e| io_err(&paths[0], e))?;
        let alice: PlayerLog = serde_json::from_str(&read_file(&paths[1])?).map_err(|e| io_err(&paths[1], e))?;
        let bob: PlayerLog = serde_json::from_str(&read_file(&paths[2])?).map_err(|e| io_err(&paths[2], e))?;
        if let Some(p) = &params {
            if *p != charlie.params {
                return Err(usage("session flags do not match the parameters in the charlie log"));
            }
        }
        return Ok(SessionRun::Transcript(assemble(&charlie, &alice, &bob, true)?, None));
    }
    match t.role {
        Some(RoleFlag::Charlie) => {
            let params = params.ok_or_else(|| usage("--role charlie needs --m and --seed"))?;
            let addr = t.listen.ok_or_else(|| usage("--role charlie needs --listen"))?;
            let listener = TcpListener::bind(addr).map_err(|e| CliError::Transport(format!("{addr}: {e}")))?;
            let outcome = serve_charlie(&params, default_session_id(&params), &listener, opts);
            let path = role_log_path(out, out_dir, RoleFlag::Charlie);
            write_file(&path, &serde_json::to_string(&outcome.log).expect("logs serialize"))?;
            eprintln!("wrote {}", path.display());
            Ok(SessionRun::RoleOnly(outcome.error))
        }
        Some(role) => {
            let party = if role == RoleFlag::Alice { Party::Alice } else { Party::Bob };
            let addr: SocketAddr = t.connect.ok_or_else(|| usage("player roles need --connect"))?;
            let outcome = connect_player(party, addr, opts);
            let path = role_log_path(out, out_dir, role);
            write_file(&path, &serde_json::to_string(&outcome.log).expect("logs serialize"))?;
            eprintln!("wrote {}", path.display());
            Ok(SessionRun::RoleOnly(outcome.error))
        }
        None => {
            let params = params.ok_or_else(|| usage("--m and --seed are required"))?;
            let report = match (t.transport, t.listen) {
                (TransportFlag::InProcess, None) => run_roles(&params, TransportKind::InProcess, opts)?,
                (TransportFlag::InProcess, Some(_)) => return Err(usage("--listen needs --transport socket")),
                (TransportFlag::Socket, Some(addr)) => run_socket(&params, addr, opts)?,
                (TransportFlag::Socket, None) => run_roles(&params, TransportKind::Socket, opts)?,
            };
            Ok(SessionRun::Transcript(report.transcript, report.failure))
        }
    }
}

fn transcript_path(out: &Option<PathBuf>, out_dir: &Path, t: &SessionTranscript) -> PathBuf {
    out.clone().unwrap_or_else(|| {
        let name = match t.params.protocol {
            Protocol::HilleryQss => "qss",
            Protocol::Facilitated => "facilitated",
        };
        out_dir.join(format!("{name}-m{}-seed{}.jsonl", t.params.m, t.params.seed))
    })
}

/// Writes the transcript and turns a transport failure into exit code 3.
fn save_transcript(
    t: &SessionTranscript,
    failure: Option<TransportError>,
    out: &Option<PathBuf>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let path = transcript_path(out, out_dir, t);
    write_file(&path, &t.to_jsonl())?;
    println!("transcript: {} ({} rounds, complete: {})", path.display(), t.rounds.len(), t.complete);
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_qss(args: QssArgs, out_dir: &Path) -> Result<bool, CliError> {
    let params = match (args.m, args.seed) {
        (Some(m), Some(seed)) => Some(SessionParams::qss(m, seed)),
        (None, None) => None,
        _ => return Err(usage("--m and --seed go together")),
    };
    let (t, failure) = match run_session(params, &args.transport, &args.out, out_dir)? {
        SessionRun::RoleOnly(err) => return role_only(err),
        SessionRun::Transcript(t, f) => (t, f),
    };
    if t.params.protocol != Protocol::HilleryQss {
        return Err(usage("the assembled logs are not a secret-sharing session"));
    }
    save_transcript(&t, failure, &args.out, out_dir)?;
    let check = qss_check(&t)?;
    let rate = check.accepted as f64 / check.rounds.max(1) as f64;
    println!("rounds: {}", check.rounds);
    println!("accepted: {} (rate {})", check.accepted, sig12(rate));
    let mut pass = check_line("complete", t.complete, &format!("{} rounds", t.rounds.len()));
    pass &= check_line(
        "correlation-table",
        check.inference_matches == check.accepted,
        &format!("{} of {} accepted rounds match", check.inference_matches, check.accepted),
    );
    Ok(pass)
}

fn role_only(err: Option<TransportError>) -> Result<bool, CliError> {
    match err {
        Some(e) => Err(e.into()),
        None => Ok(true),
    }
}

fn cmd_facilitated(args: FacilitatedArgs, out_dir: &Path) -> Result<bool, CliError> {
    let policy: BasisPolicy = args.policy.parse()?;
    let cheat: CheatModel = args.cheat.parse()?;
    let params = match (args.m, args.seed) {
        (Some(m), Some(seed)) => Some(SessionParams::facilitated(m, args.lambda, policy, cheat, seed)),
        (None, None) => None,
        _ => return Err(usage("--m and --seed go together")),
    };
    if let Some(p) = &params {
        p.validate()?;
    }
    let (t, failure) = match run_session(params, &args.transport, &args.out, out_dir)? {
        SessionRun::RoleOnly(err) => return role_only(err),
        SessionRun::Transcript(t, f) => (t, f),
    };
    if t.params.protocol != Protocol::Facilitated {
        return Err(usage("the assembled logs are not a facilitated session"));
    }
    save_transcript(&t, failure, &args.out, out_dir)?;

    let report = detect_cheating(&t, args.threshold, args.slack)?;
    let keys = extract_key(&t)?;
    let cheat = t.params.cheat_model()?;
    println!("cheat model: {}", cheat.id());
    println!(
        "control rounds: {} (compliant {})",
        report.control_rounds, report.compliant_rounds
    );
    println!("compliance: {}", fmt_opt(report.compliance_rate));
    println!(
        "verdict: {:?} (threshold {} - slack {})",
        report.verdict,
        sig12(report.threshold),
        sig12(report.slack)
    );
    println!("key bits: {}", keys.alice_key.len());
    println!("key agreement: {}", fmt_opt(keys.agreement_rate()));

    let mut pass = check_line("complete", t.complete, &format!("{} rounds", t.rounds.len()));
    if cheat == CheatModel::Honest {
        pass &= check_line("verdict", report.verdict == Verdict::Honest, &format!("{:?}", report.verdict));
        let agreement = keys.agreement_rate();
        pass &= check_line(
            "key-agreement",
            agreement.is_none_or(|a| a == 1.0),
            &fmt_opt(agreement),
        );
    } else {
        pass &= check_line(
            "detection",
            report.verdict == Verdict::CheatingSuspected,
            &format!("{:?} against {}", report.verdict, cheat.id()),
        );
    }
    Ok(pass)
}

fn cmd_verify_all(args: VerifyArgs) -> Result<bool, CliError> {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    let seed = args.seed;
    let mut pass = true;

    let ghz = exact_quantum_win(&standard_ghz(), &xy_game_spec())?;
    pass &= check_line("ghz-xy", (ghz - 1.0).abs() <= CLOSED_FORM_TOL, &sig12(ghz));

    let mut gap: f64 = 0.0;
    for k in 0..=200 {
        let theta = FRAC_PI_4 * k as f64 / 200.0;
        let w = exact_quantum_win(&ghz_class(GhzClassParams::new(theta))?, &xy_game_spec())?;
        gap = gap.max((w - ghz_xy_closed_form(theta)).abs());
    }
    pass &= check_line("ghz-theta-curve", gap <= CLOSED_FORM_TOL, &format!("gap {gap:.2e}"));

    let w = exact_quantum_win(&standard_w(), &zy_game_spec())?;
    pass &= check_line("w-zy", (w - 0.875).abs() <= CLOSED_FORM_TOL, &sig12(w));

    let mut gap: f64 = 0.0;
    for n in 1..=50 {
        let s = w_n(WnParams::new(n, 0.0, 0.0)?)?;
        gap = gap.max((exact_quantum_win(&s, &zy_game_spec())? - wn_zy_closed_form(n)).abs());
    }
    pass &= check_line("wn-curve", gap <= CLOSED_FORM_TOL, &format!("gap {gap:.2e}"));

    let xy = classical_best(&xy_game_spec());
    let zy = classical_best(&zy_game_spec());
    let three_quarters = games::Ratio::<i64>::new(3, 4);
    pass &= check_line(
        "classical-bound",
        xy.probability == three_quarters && zy.probability == three_quarters,
        &format!("xy {} zy {}", xy.probability, zy.probability),
    );

    let hi = rule_maker_win(&standard_w(), &RuleMakerSpec::new(FRAC_PI_2)?)?;
    let lo = rule_maker_win(&standard_w(), &RuleMakerSpec::new(0.0)?)?;
    pass &= check_line(
        "rulemaker-w-endpoints",
        (hi - 11.0 / 12.0).abs() <= CLOSED_FORM_TOL && (lo - 1.0 / 12.0).abs() <= CLOSED_FORM_TOL,
        &format!("{} and {}", sig12(lo), sig12(hi)),
    );

    let mc = monte_carlo_win(&standard_w(), &zy_game_spec(), 200_000, seed)?;
    pass &= check_line(
        "monte-carlo-w-zy",
        mc.agrees_with(0.875, MC_SIGMAS),
        &format!("{} ± {}", sig12(mc.estimate), sig12(mc.std_error)),
    );

    let qss = vaidman_core::protocols::qss_session(2000, seed)?;
    let check = qss_check(&qss)?;
    pass &= check_line(
        "qss-table",
        check.inference_matches == check.accepted,
        &format!("{} of {} accepted rounds", check.inference_matches, check.accepted),
    );

    let honest = vaidman_core::protocols::facilitated_session(
        10_000,
        FRAC_PI_2,
        BasisPolicy::SiftDiscard,
        CheatModel::Honest,
        seed,
    )?;
    let report = detect_cheating(&honest, 0.75, 0.03)?;
    let agreement = extract_key(&honest)?.agreement_rate();
    pass &= check_line(
        "facilitated-honest",
        report.verdict == Verdict::Honest && agreement == Some(1.0),
        &format!("compliance {} agreement {}", fmt_opt(report.compliance_rate), fmt_opt(agreement)),
    );

    let params = SessionParams::facilitated(100, FRAC_PI_2, BasisPolicy::SiftDiscard, CheatModel::Honest, seed);
    let local = run_roles(&params, TransportKind::InProcess, TransportOptions::default())?;
    let socket = run_roles(&params, TransportKind::Socket, TransportOptions::default())?;
    pass &= check_line(
        "transport-transparency",
        local.transcript.to_jsonl() == socket.transcript.to_jsonl() && local.transcript.complete,
        "in-process and socket transcripts",
    );
    Ok(pass)
}
