//! Compilation of action programs into quantized actuator commands and
//! event-ordered replay with interlock checking.
//!
//! Every action step expands to the six-phase cycle:
//!
//! | phase | commands |
//! |-------|----------|
//! | i     | `STAB OPEN`, `CARRIAGE OPEN` |
//! | ii    | `ROLL n` |
//! | iii   | `STAB CLOSE` |
//! | iv    | `CARRIAGE CLOSE beta`, `BEND ADVANCE n` |
//! | v     | `CARRIAGE OPEN`, `HOME`, `STAB OPEN` |
//! | vi    | `CARRIAGE CLOSE grip`, `FEED n`, `CARRIAGE OPEN`, `HOME` |
//!
//! An open pinch (`beta == 0`) still runs phase iv with the jaws closed at
//! zero pinch, which leaves the segment straight.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::wire_model::{geometric_segments, ActionProgram, ActionStep, BendLaw, WireSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineLimits {
    /// Degrees per full motor step.
    pub stepper_step: f64,
    /// Motor turns per nozzle turn.
    pub roll_reduction: f64,
    pub microstepping: u32,
    /// Linear stage increment, mm.
    pub stage_resolution: f64,
    /// Usable carriage travel from home, mm.
    pub stage_travel: f64,
    /// Carriage stroke that drives a pinch bend, mm.
    pub bend_stroke: f64,
    /// Jaw command used to hold the wire while feeding.
    pub grip_beta: f64,
}

impl Default for MachineLimits {
    fn default() -> Self {
        MachineLimits {
            stepper_step: 1.8,
            roll_reduction: 3.0,
            microstepping: 1,
            stage_resolution: 0.003,
            stage_travel: 50.0,
            bend_stroke: 1.0,
            grip_beta: 0.3,
        }
    }
}

impl MachineLimits {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.stepper_step,
            self.roll_reduction,
            self.stage_resolution,
            self.stage_travel,
            self.bend_stroke,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.microstepping == 0 {
            return invalid("machine limits must be positive");
        }
        if !(self.grip_beta > 0.0 && self.grip_beta <= 1.0) {
            return invalid("grip command must lie in (0, 1]");
        }
        Ok(())
    }

    /// Nozzle degrees per motor (micro)step.
    pub fn roll_resolution(&self) -> f64 {
        self.stepper_step / (self.roll_reduction * self.microstepping as f64)
    }

    fn travel_increments(&self) -> i64 {
        (self.stage_travel / self.stage_resolution).floor() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MachineCommand {
    StabOpen,
    StabClose,
    CarriageOpen,
    CarriageClose(f64),
    /// Relative nozzle motion in motor steps.
    Roll(i64),
    /// Carriage-held wire feed in stage increments.
    Feed(i64),
    /// Carriage stroke with the jaws pinching, in stage increments.
    BendAdvance(i64),
    /// Carriage back to its home position.
    Home,
}

impl fmt::Display for MachineCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MachineCommand::StabOpen => write!(f, "STAB OPEN"),
            MachineCommand::StabClose => write!(f, "STAB CLOSE"),
            MachineCommand::CarriageOpen => write!(f, "CARRIAGE OPEN"),
            MachineCommand::CarriageClose(b) => write!(f, "CARRIAGE CLOSE {}", b),
            MachineCommand::Roll(n) => write!(f, "ROLL {}", n),
            MachineCommand::Feed(n) => write!(f, "FEED {}", n),
            MachineCommand::BendAdvance(n) => write!(f, "BEND ADVANCE {}", n),
            MachineCommand::Home => write!(f, "HOME"),
        }
    }
}

/// Commanded minus achieved value for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResidual {
    pub step: usize,
    pub roll_deg: f64,
    pub feed_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineProgram {
    pub commands: Vec<MachineCommand>,
    pub limits: MachineLimits,
    /// Content digest of the source action program.
    pub provenance: String,
    pub residuals: Vec<StepResidual>,
}

pub fn compile(program: &ActionProgram, limits: &MachineLimits) -> Result<MachineProgram> {
    use MachineCommand::*;

    program.validate()?;
    limits.validate()?;
    let roll_res = limits.roll_resolution();
    let travel = limits.travel_increments();
    let bend = (limits.bend_stroke / limits.stage_resolution).round() as i64;
    if bend > travel {
        return Err(Error::Compile {
            step: 0,
            message: format!("bend stroke {} mm exceeds stage travel", limits.bend_stroke),
        });
    }

    let mut commands = Vec::with_capacity(program.steps.len() * 14);
    let mut residuals = Vec::with_capacity(program.steps.len());
    let mut nozzle = 0i64;
    for s in &program.steps {
        let phi_deg = s.phi.to_degrees();
        let target = (phi_deg / roll_res).round();
        if !target.is_finite() || target.abs() > i64::MAX as f64 / 4.0 {
            return Err(Error::Compile {
                step: s.k,
                message: format!("roll {} deg is outside the nozzle range", phi_deg),
            });
        }
        let target = target as i64;
        let feed = (s.delta / limits.stage_resolution).round() as i64;
        if feed < 1 {
            return Err(Error::Compile {
                step: s.k,
                message: format!("advance {} mm is below the stage resolution", s.delta),
            });
        }
        if feed > travel {
            return Err(Error::Compile {
                step: s.k,
                message: format!(
                    "advance {} mm exceeds stage travel {} mm",
                    s.delta, limits.stage_travel
                ),
            });
        }

        commands.extend([
            StabOpen,
            CarriageOpen,
            Roll(target - nozzle),
            StabClose,
            CarriageClose(s.beta),
            BendAdvance(bend),
            CarriageOpen,
            Home,
            StabOpen,
            CarriageClose(limits.grip_beta),
            Feed(feed),
            CarriageOpen,
            Home,
        ]);
        nozzle = target;
        residuals.push(StepResidual {
            step: s.k,
            roll_deg: phi_deg - target as f64 * roll_res,
            feed_mm: s.delta - feed as f64 * limits.stage_resolution,
        });
    }
    Ok(MachineProgram {
        commands,
        limits: *limits,
        provenance: crate::formats::program_digest(program),
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interlock {
    BendRequiresStabilizerClosed,
    FeedRequiresStabilizerOpen,
    FeedRequiresCarriageClosed,
    RollRequiresStabilizerOpen,
    CarriageWithinTravel,
}

impl Interlock {
    pub fn name(&self) -> &'static str {
        match self {
            Interlock::BendRequiresStabilizerClosed => "bend-requires-stabilizer-closed",
            Interlock::FeedRequiresStabilizerOpen => "feed-requires-stabilizer-open",
            Interlock::FeedRequiresCarriageClosed => "feed-requires-carriage-closed",
            Interlock::RollRequiresStabilizerOpen => "roll-requires-stabilizer-open",
            Interlock::CarriageWithinTravel => "carriage-within-travel",
        }
    }
}

impl fmt::Display for Interlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub command: MachineCommand,
    pub rule: Interlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stabilizer {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Carriage {
    Open,
    Closed(f64),
}

/// Actuator state after a command. Positions are kept in integer actuator
/// units; the float accessors convert with the program's limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorState {
    pub nozzle_steps: i64,
    pub stabilizer: Stabilizer,
    pub carriage_increments: i64,
    pub carriage: Carriage,
}

impl ActuatorState {
    pub fn home() -> Self {
        ActuatorState {
            nozzle_steps: 0,
            stabilizer: Stabilizer::Open,
            carriage_increments: 0,
            carriage: Carriage::Open,
        }
    }

    pub fn nozzle_angle(&self, limits: &MachineLimits) -> f64 {
        self.nozzle_steps as f64 * limits.roll_resolution()
    }

    pub fn carriage_position(&self, limits: &MachineLimits) -> f64 {
        self.carriage_increments as f64 * limits.stage_resolution
    }

    /// Applies `cmd`, reporting the interlock it breaks, if any.
    fn apply(&mut self, cmd: &MachineCommand, travel: i64) -> Option<Interlock> {
        use MachineCommand::*;
        let mut broken = None;
        match *cmd {
            StabOpen => self.stabilizer = Stabilizer::Open,
            StabClose => self.stabilizer = Stabilizer::Closed,
            CarriageOpen => self.carriage = Carriage::Open,
            CarriageClose(b) => self.carriage = Carriage::Closed(b),
            Roll(n) => {
                if self.stabilizer == Stabilizer::Closed {
                    broken = Some(Interlock::RollRequiresStabilizerOpen);
                }
                self.nozzle_steps = self.nozzle_steps.saturating_add(n);
            }
            Feed(n) => {
                if self.stabilizer == Stabilizer::Closed {
                    broken = Some(Interlock::FeedRequiresStabilizerOpen);
                } else if self.carriage == Carriage::Open {
                    broken = Some(Interlock::FeedRequiresCarriageClosed);
                }
                self.carriage_increments = self.carriage_increments.saturating_add(n);
            }
            BendAdvance(n) => {
                if self.stabilizer == Stabilizer::Open {
                    broken = Some(Interlock::BendRequiresStabilizerClosed);
                }
                self.carriage_increments = self.carriage_increments.saturating_add(n);
            }
            Home => self.carriage_increments = 0,
        }
        if broken.is_none() && !(0..=travel).contains(&self.carriage_increments) {
            broken = Some(Interlock::CarriageWithinTravel);
        }
        broken
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorTrace {
    pub limits: MachineLimits,
    /// Initial state followed by the state after each command.
    pub states: Vec<ActuatorState>,
    /// Steps as realized by the quantized actuators, in shaping order.
    pub achieved: Vec<ActionStep>,
}

impl ActuatorTrace {
    /// Achieved steps packaged as a program for `wire`.
    ///
    /// Quantized feeds may overshoot the shapeable zone by up to half a stage
    /// increment per step; the returned wire records the realized length.
    pub fn achieved_program(&self, wire: &WireSpec) -> Result<ActionProgram> {
        let fed: f64 = self.achieved.iter().map(|s| s.delta).sum();
        let mut w = wire.clone();
        w.shapeable_length = w.shapeable_length.max(fed);
        w.total_length = w.total_length.max(w.shapeable_length);
        ActionProgram::new(w, self.achieved.clone())
    }
}

/// Static interlock check; an empty result means [`simulate`] succeeds.
pub fn validate(mp: &MachineProgram) -> Vec<Violation> {
    let travel = mp.limits.travel_increments();
    let mut state = ActuatorState::home();
    mp.commands
        .iter()
        .enumerate()
        .filter_map(|(index, cmd)| {
            state.apply(cmd, travel).map(|rule| Violation {
                index,
                command: *cmd,
                rule,
            })
        })
        .collect()
}

/// Deterministic replay; stops at the first interlock violation.
pub fn simulate(mp: &MachineProgram) -> Result<ActuatorTrace> {
    mp.limits.validate()?;
    let limits = mp.limits;
    let travel = limits.travel_increments();
    let mut state = ActuatorState::home();
    let mut states = Vec::with_capacity(mp.commands.len() + 1);
    states.push(state);
    let mut achieved = Vec::new();
    let mut pending: Option<(i64, f64)> = None;

    for (index, cmd) in mp.commands.iter().enumerate() {
        if let Some(rule) = state.apply(cmd, travel) {
            return Err(Error::Fault {
                index,
                command: cmd.to_string(),
                rule: rule.name().to_string(),
            });
        }
        match *cmd {
            MachineCommand::BendAdvance(n) if n > 0 => {
                let beta = match state.carriage {
                    Carriage::Closed(b) => b,
                    Carriage::Open => 0.0,
                };
                pending = Some((state.nozzle_steps, beta));
            }
            MachineCommand::Feed(n) if n > 0 => {
                let (steps, beta) = pending.take().unwrap_or((state.nozzle_steps, 0.0));
                achieved.push(ActionStep {
                    k: achieved.len() + 1,
                    phi: (steps as f64 * limits.roll_resolution()).to_radians(),
                    beta,
                    delta: n as f64 * limits.stage_resolution,
                });
            }
            _ => {}
        }
        states.push(state);
    }
    Ok(ActuatorTrace {
        limits,
        states,
        achieved,
    })
}

/// Upper bound on the displacement of every joint (base first) between the
/// commanded shape and the shape realized with the recorded residuals.
///
/// Roll errors enter the chain as relative-roll perturbations `d_j`; each
/// perturbs the orientation of every later segment by at most `|d_j|`, so
/// joint `i` moves by at most `sum_{g<=i} (|feed_g| + len_g * sum_{j<=g} |d_j|)`.
pub fn quantization_bound(
    program: &ActionProgram,
    law: &BendLaw,
    residuals: &[StepResidual],
) -> Result<Vec<f64>> {
    if residuals.len() != program.steps.len() {
        return invalid("one residual per step is required");
    }
    let segs = geometric_segments(program, law)?;
    let padding = segs.len() - program.steps.len();
    // geometric order: padding, then steps m..1
    let mut roll_err = vec![0.0; segs.len()];
    let mut feed_err = vec![0.0; segs.len()];
    for (g, r) in residuals.iter().rev().enumerate() {
        roll_err[padding + g] = r.roll_deg.to_radians();
        feed_err[padding + g] = r.feed_mm;
    }
    let mut bound = Vec::with_capacity(segs.len() + 1);
    bound.push(0.0);
    let (mut prev_err, mut tilt, mut acc) = (0.0, 0.0, 0.0);
    for (g, seg) in segs.iter().enumerate() {
        // achieved relative roll differs by -(r_g - r_prev)
        tilt += (roll_err[g] - prev_err).abs();
        prev_err = roll_err[g];
        acc += feed_err[g].abs() + seg.length * tilt;
        bound.push(acc);
    }
    Ok(bound)
}

impl fmt::Display for MachineProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.limits;
        writeln!(f, "# wireshape machine program")?;
        writeln!(f, "#@ source {}", self.provenance)?;
        writeln!(
            f,
            "#@ limits stepper_step={} roll_reduction={} microstepping={} stage_resolution={} stage_travel={} bend_stroke={} grip_beta={}",
            l.stepper_step, l.roll_reduction, l.microstepping, l.stage_resolution, l.stage_travel, l.bend_stroke, l.grip_beta
        )?;
        for r in &self.residuals {
            writeln!(f, "#@ residual {} {} {}", r.step, r.roll_deg, r.feed_mm)?;
        }
        for c in &self.commands {
            writeln!(f, "{}", c)?;
        }
        Ok(())
    }
}

struct Tokens<'a> {
    line: usize,
    items: Vec<(usize, &'a str)>,
}

impl<'a> Tokens<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        let mut items = Vec::new();
        let mut start = None;
        for (i, ch) in text.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    items.push((s + 1, &text[s..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            items.push((s + 1, &text[s..]));
        }
        Tokens { line, items }
    }

    fn err<T>(&self, column: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            line: self.line,
            column,
            message: message.into(),
        })
    }

    fn end_column(&self) -> usize {
        self.items.last().map_or(1, |(c, s)| c + s.len())
    }

    fn get(&self, i: usize, what: &str) -> Result<(usize, &'a str)> {
        match self.items.get(i) {
            Some(&t) => Ok(t),
            None => self.err(self.end_column(), format!("expected {}", what)),
        }
    }

    fn parse<T: std::str::FromStr>(&self, i: usize, what: &str) -> Result<T> {
        let (col, s) = self.get(i, what)?;
        s.parse()
            .or_else(|_| self.err(col, format!("expected {}, found `{}`", what, s)))
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        match self.items.get(n) {
            Some(&(col, s)) => self.err(col, format!("unexpected `{}`", s)),
            None => Ok(()),
        }
    }
}

fn parse_limits(tok: &Tokens) -> Result<MachineLimits> {
    let mut l = MachineLimits::default();
    for i in 2..tok.items.len() {
        let (col, item) = tok.items[i];
        let Some((key, value)) = item.split_once('=') else {
            return tok.err(col, format!("expected key=value, found `{}`", item));
        };
        let vcol = col + key.len() + 1;
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .or_else(|_| tok.err(vcol, format!("bad number `{}`", v)))
        };
        match key {
            "stepper_step" => l.stepper_step = num(value)?,
            "roll_reduction" => l.roll_reduction = num(value)?,
            "microstepping" => {
                l.microstepping = value
                    .parse()
                    .or_else(|_| tok.err(vcol, format!("bad integer `{}`", value)))?
            }
            "stage_resolution" => l.stage_resolution = num(value)?,
            "stage_travel" => l.stage_travel = num(value)?,
            "bend_stroke" => l.bend_stroke = num(value)?,
            "grip_beta" => l.grip_beta = num(value)?,
            _ => return tok.err(col, format!("unknown limit `{}`", key)),
        }
    }
    Ok(l)
}

impl std::str::FromStr for MachineProgram {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        use MachineCommand::*;

        let mut mp = MachineProgram {
            commands: Vec::new(),
            limits: MachineLimits::default(),
            provenance: String::new(),
            residuals: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let tok = Tokens::new(i + 1, raw);
            let Some(&(col, head)) = tok.items.first() else {
                continue;
            };
            if head == "#@" {
                let (kcol, kind) = tok.get(1, "pragma name")?;
                match kind {
                    "source" => {
                        mp.provenance = tok.get(2, "digest")?.1.to_string();
                        tok.expect_len(3)?;
                    }
                    "limits" => mp.limits = parse_limits(&tok)?,
                    "residual" => {
                        mp.residuals.push(StepResidual {
                            step: tok.parse(2, "step index")?,
                            roll_deg: tok.parse(3, "roll residual")?,
                            feed_mm: tok.parse(4, "feed residual")?,
                        });
                        tok.expect_len(5)?;
                    }
                    other => return tok.err(kcol, format!("unknown pragma `{}`", other)),
                }
                continue;
            }
            if head.starts_with('#') {
                continue;
            }
            let (cmd, used) = match head {
                "STAB" | "CARRIAGE" => {
                    let (scol, sub) = tok.get(1, "OPEN or CLOSE")?;
                    match (head, sub) {
                        ("STAB", "OPEN") => (StabOpen, 2),
                        ("STAB", "CLOSE") => (StabClose, 2),
                        ("CARRIAGE", "OPEN") => (CarriageOpen, 2),
                        ("CARRIAGE", "CLOSE") => {
                            (CarriageClose(tok.parse(2, "pinch command")?), 3)
                        }
                        _ => return tok.err(scol, format!("expected OPEN or CLOSE, found `{}`", sub)),
                    }
                }
                "ROLL" => (Roll(tok.parse(1, "integer step count")?), 2),
                "FEED" => (Feed(tok.parse(1, "integer increment count")?), 2),
                "BEND" => {
                    let (scol, sub) = tok.get(1, "ADVANCE")?;
                    if sub != "ADVANCE" {
                        return tok.err(scol, format!("expected ADVANCE, found `{}`", sub));
                    }
                    (BendAdvance(tok.parse(2, "integer increment count")?), 3)
                }
                "HOME" => (Home, 1),
                other => return tok.err(col, format!("unknown command `{}`", other)),
            };
            tok.expect_len(used)?;
            mp.commands.push(cmd);
        }
        Ok(mp)
    }
}
