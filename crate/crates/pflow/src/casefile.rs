//! MATPOWER-style case file parsing and result serialization.
//!
//! Only the table subset a power-flow run needs is interpreted: `baseMVA`,
//! `bus`, `gen` and `branch`. Anything else under `mpc.` is skipped with a
//! warning. All powers are converted to per-unit on the system base and
//! all angles to radians at the parse boundary; the writers convert back.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::network::BusSolution;
use crate::scalar::Scalar;

/// Bus classification: which quantities are fixed and which are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    /// Fixed V and angle; P/Q picked up after the solve.
    Slack,
    /// Fixed P and V magnitude.
    Pv,
    /// Fixed P and Q.
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus<T> {
    pub id: usize,
    pub kind: BusKind,
    /// per-unit load on the system base
    pub p_load: T,
    pub q_load: T,
    /// per-unit shunt admittance at nominal voltage
    pub g_shunt: T,
    pub b_shunt: T,
    /// per-unit initial magnitude
    pub v_mag_init: T,
    /// radians
    pub v_ang_init: T,
    /// kV, informational only
    pub v_base_kv: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub from_bus: usize,
    pub to_bus: usize,
    /// per-unit series impedance
    pub r: T,
    pub x: T,
    /// per-unit total line charging
    pub b_charging: T,
    /// off-nominal tap ratio, 1.0 = nominal
    pub tap_ratio: T,
    /// radians
    pub phase_shift: T,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub bus: usize,
    /// per-unit injections
    pub p_gen: T,
    pub q_gen: T,
    /// per-unit voltage setpoint, used at PV and slack buses
    pub v_set: T,
    pub in_service: bool,
}

/// A parsed and validated grid model.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase<T> {
    pub name: String,
    pub base_mva: T,
    pub buses: Vec<Bus<T>>,
    pub branches: Vec<Branch<T>>,
    pub generators: Vec<Generator<T>>,
}

/// Parser output: the case plus warnings about skipped input.
#[derive(Debug, Clone)]
pub struct ParsedCase<T> {
    pub case: NetworkCase<T>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("no slack bus in case")]
    MissingSlack,
    #[error("multiple slack buses: {first} and {second}")]
    MultipleSlack { first: usize, second: usize },
    #[error("baseMVA must be positive, got {0}")]
    NonPositiveBaseMva(f64),
    #[error("branch {index} references unknown bus {bus}")]
    DanglingBranch { index: usize, bus: usize },
    #[error("generator {index} references unknown bus {bus}")]
    DanglingGenerator { index: usize, bus: usize },
    #[error("branch {index} ({from}-{to}) has zero series impedance")]
    ZeroImpedanceBranch { index: usize, from: usize, to: usize },
    #[error("branch {index} connects bus {bus} to itself")]
    SelfLoopBranch { index: usize, bus: usize },
    #[error("branch {index} has non-positive tap ratio")]
    NonPositiveTap { index: usize },
    #[error("bus {0} has non-positive initial voltage magnitude")]
    NonPositiveVoltage(usize),
    #[error("unsupported bus type {kind} at bus {bus}")]
    UnsupportedBusType { bus: usize, kind: i64 },
    #[error("PV bus {0} has no in-service generator")]
    PvWithoutGenerator(usize),
    #[error("generators at bus {bus} disagree on voltage setpoint ({a} vs {b})")]
    SetpointMismatch { bus: usize, a: f64, b: f64 },
    #[error("solution incomplete: bus {0} missing")]
    SolutionIncomplete(usize),
    #[error("solution incomplete: no rows")]
    SolutionEmpty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

// ---------------------------------------------------------------------------
// Lexer / parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Str(String),
    Punct(char), // = ; [ ] , .
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Token,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, CaseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut i = 0usize;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() || chars[i] == '\n' {
                    return Err(CaseError::Syntax {
                        line: tline,
                        col: tcol,
                        msg: "unterminated string".to_string(),
                    });
                }
                if chars[i] == quote {
                    bump!();
                    break;
                }
                s.push(chars[i]);
                bump!();
            }
            out.push(Spanned {
                tok: Token::Str(s),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            out.push(Spanned {
                tok: Token::Ident(s),
                line: tline,
                col: tcol,
            });
            continue;
        }
        // a `.` or sign starts a number only when a digit is in sight
        let digit_ahead = |k: usize| chars.get(k).is_some_and(|c| c.is_ascii_digit());
        let starts_number = c.is_ascii_digit()
            || (c == '.' && digit_ahead(i + 1))
            || ((c == '-' || c == '+') && (digit_ahead(i + 1) || chars.get(i + 1) == Some(&'.')));
        if starts_number {
            let mut s = String::new();
            s.push(c);
            bump!();
            while i < chars.len() {
                let c2 = chars[i];
                let take = c2.is_ascii_digit()
                    || c2 == '.'
                    || c2 == 'e'
                    || c2 == 'E'
                    || ((c2 == '-' || c2 == '+')
                        && matches!(s.chars().last(), Some('e') | Some('E')));
                if !take {
                    break;
                }
                s.push(c2);
                bump!();
            }
            let v: f64 = s.parse().map_err(|_| CaseError::Syntax {
                line: tline,
                col: tcol,
                msg: format!("bad number `{s}`"),
            })?;
            out.push(Spanned {
                tok: Token::Number(v),
                line: tline,
                col: tcol,
            });
            continue;
        }
        if "=;[],.".contains(c) {
            bump!();
            out.push(Spanned {
                tok: Token::Punct(c),
                line: tline,
                col: tcol,
            });
            continue;
        }
        return Err(CaseError::Syntax {
            line: tline,
            col: tcol,
            msg: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

/// A raw numeric table plus the location it started at.
struct RawTable {
    rows: Vec<Vec<f64>>,
    line: usize,
}

#[derive(Default)]
struct RawCase {
    name: String,
    base_mva: Option<f64>,
    tables: BTreeMap<String, RawTable>,
    warnings: Vec<String>,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, msg: impl Into<String>) -> CaseError {
        let (line, col) = self
            .peek()
            .map(|s| (s.line, s.col))
            .unwrap_or_else(|| match self.toks.last() {
                Some(s) => (s.line, s.col),
                None => (1, 1),
            });
        CaseError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn expect_punct(&mut self, ch: char) -> Result<(), CaseError> {
        match self.next() {
            Some(Spanned {
                tok: Token::Punct(c),
                ..
            }) if c == ch => Ok(()),
            Some(s) => Err(CaseError::Syntax {
                line: s.line,
                col: s.col,
                msg: format!("expected `{ch}`"),
            }),
            None => Err(CaseError::Syntax {
                line: 0,
                col: 0,
                msg: format!("expected `{ch}`, found end of input"),
            }),
        }
    }

    fn parse(mut self) -> Result<RawCase, CaseError> {
        let mut raw = RawCase::default();
        while let Some(t) = self.peek() {
            match &t.tok {
                Token::Ident(word) if word == "function" => {
                    self.next();
                    // function mpc = <name>
                    let _ = self.next(); // mpc
                    if matches!(self.peek().map(|s| &s.tok), Some(Token::Punct('='))) {
                        self.next();
                        if let Some(Spanned {
                            tok: Token::Ident(name),
                            ..
                        }) = self.peek().cloned()
                        {
                            raw.name = name;
                            self.next();
                        }
                    }
                }
                Token::Ident(word) if word == "mpc" => {
                    self.next();
                    self.expect_punct('.')?;
                    let field = match self.next() {
                        Some(Spanned {
                            tok: Token::Ident(f),
                            ..
                        }) => f,
                        _ => return Err(self.err_here("expected field name after `mpc.`")),
                    };
                    self.expect_punct('=')?;
                    self.parse_value(&mut raw, &field)?;
                    self.expect_punct(';')?;
                }
                _ => {
                    return Err(self.err_here("expected `mpc.<field> = ...` statement"));
                }
            }
        }
        Ok(raw)
    }

    fn parse_value(&mut self, raw: &mut RawCase, field: &str) -> Result<(), CaseError> {
        match self.peek().map(|s| s.tok.clone()) {
            Some(Token::Number(v)) => {
                self.next();
                if field == "baseMVA" {
                    raw.base_mva = Some(v);
                } else {
                    raw.warnings.push(format!("ignoring scalar field mpc.{field}"));
                }
                Ok(())
            }
            Some(Token::Str(_)) => {
                self.next();
                if field != "version" {
                    raw.warnings.push(format!("ignoring string field mpc.{field}"));
                }
                Ok(())
            }
            Some(Token::Punct('[')) => {
                let start = self.peek().map(|s| s.line).unwrap_or(1);
                let rows = self.parse_matrix()?;
                match field {
                    "bus" | "gen" | "branch" => {
                        raw.tables
                            .insert(field.to_string(), RawTable { rows, line: start });
                    }
                    _ => raw
                        .warnings
                        .push(format!("ignoring table field mpc.{field}")),
                }
                Ok(())
            }
            _ => Err(self.err_here(format!("expected value for mpc.{field}"))),
        }
    }

    fn parse_matrix(&mut self) -> Result<Vec<Vec<f64>>, CaseError> {
        self.expect_punct('[')?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut row: Vec<f64> = Vec::new();
        let mut last_line = self.peek().map(|s| s.line).unwrap_or(1);
        loop {
            let t = match self.peek() {
                Some(t) => t.clone(),
                None => return Err(self.err_here("unterminated matrix")),
            };
            // newline between numbers also terminates a row
            if t.line != last_line && !row.is_empty() {
                rows.push(std::mem::take(&mut row));
            }
            last_line = t.line;
            match t.tok {
                Token::Punct(']') => {
                    self.next();
                    if !row.is_empty() {
                        rows.push(row);
                    }
                    return Ok(rows);
                }
                Token::Punct(';') => {
                    self.next();
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                }
                Token::Punct(',') => {
                    self.next();
                }
                Token::Number(v) => {
                    self.next();
                    row.push(v);
                }
                _ => {
                    return Err(CaseError::Syntax {
                        line: t.line,
                        col: t.col,
                        msg: "expected number, `;` or `]` in matrix".to_string(),
                    })
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Raw tables -> validated NetworkCase
// ---------------------------------------------------------------------------

const BUS_COLS: usize = 10; // id type Pd Qd Gs Bs area Vm Va baseKV
const GEN_COLS: usize = 8; // bus Pg Qg Qmax Qmin Vg mBase status
const BRANCH_COLS: usize = 11; // f t r x b rateA rateB rateC ratio angle status

/// Parses MATPOWER-style case text into a validated [`NetworkCase`].
pub fn parse_case<T: Scalar>(text: &str) -> Result<ParsedCase<T>, CaseError> {
    let toks = lex(text)?;
    let raw = Parser { toks, pos: 0 }.parse()?;

    let base = raw.base_mva.ok_or(CaseError::Syntax {
        line: 1,
        col: 1,
        msg: "missing mpc.baseMVA".to_string(),
    })?;
    if base.is_nan() || base <= 0.0 {
        return Err(CaseError::NonPositiveBaseMva(base));
    }

    let need = |name: &str| {
        raw.tables.get(name).ok_or_else(|| CaseError::Syntax {
            line: 1,
            col: 1,
            msg: format!("missing mpc.{name} table"),
        })
    };
    let bus_tab = need("bus")?;
    let branch_tab = need("branch")?;
    let empty = RawTable {
        rows: Vec::new(),
        line: 0,
    };
    let gen_tab = raw.tables.get("gen").unwrap_or(&empty);

    let row_err = |tab: &RawTable, i: usize, what: &str, need: usize, got: usize| {
        CaseError::Syntax {
            line: tab.line,
            col: 1,
            msg: format!("{what} row {} needs at least {need} columns, got {got}", i + 1),
        }
    };

    let t = T::of;
    let deg2rad = |d: f64| T::of(d.to_radians());
    let pu = |mw: f64| T::of(mw / base);

    let mut buses = Vec::with_capacity(bus_tab.rows.len());
    for (i, row) in bus_tab.rows.iter().enumerate() {
        if row.len() < BUS_COLS {
            return Err(row_err(bus_tab, i, "bus", BUS_COLS, row.len()));
        }
        let id = row[0] as usize;
        let kind = match row[1] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::Pv,
            1 => BusKind::Pq,
            k => return Err(CaseError::UnsupportedBusType { bus: id, kind: k }),
        };
        buses.push(Bus {
            id,
            kind,
            p_load: pu(row[2]),
            q_load: pu(row[3]),
            g_shunt: pu(row[4]),
            b_shunt: pu(row[5]),
            v_mag_init: t(row[7]),
            v_ang_init: deg2rad(row[8]),
            v_base_kv: t(row[9]),
        });
    }

    let mut generators = Vec::with_capacity(gen_tab.rows.len());
    for (i, row) in gen_tab.rows.iter().enumerate() {
        if row.len() < GEN_COLS {
            return Err(row_err(gen_tab, i, "gen", GEN_COLS, row.len()));
        }
        generators.push(Generator {
            bus: row[0] as usize,
            p_gen: pu(row[1]),
            q_gen: pu(row[2]),
            v_set: t(row[5]),
            in_service: row[7] > 0.0,
        });
    }

    let mut branches = Vec::with_capacity(branch_tab.rows.len());
    for (i, row) in branch_tab.rows.iter().enumerate() {
        if row.len() < BRANCH_COLS {
            return Err(row_err(branch_tab, i, "branch", BRANCH_COLS, row.len()));
        }
        // tap 0 means nominal in MATPOWER files
        let ratio = if row[8] == 0.0 { 1.0 } else { row[8] };
        branches.push(Branch {
            from_bus: row[0] as usize,
            to_bus: row[1] as usize,
            r: t(row[2]),
            x: t(row[3]),
            b_charging: t(row[4]),
            tap_ratio: t(ratio),
            phase_shift: deg2rad(row[9]),
            in_service: row[10] > 0.0,
        });
    }

    let case = NetworkCase {
        name: if raw.name.is_empty() {
            "case".to_string()
        } else {
            raw.name
        },
        base_mva: t(base),
        buses,
        branches,
        generators,
    };
    case.validate()?;
    Ok(ParsedCase {
        case,
        warnings: raw.warnings,
    })
}

impl<T: Scalar> NetworkCase<T> {
    /// Checks the structural invariants every downstream consumer relies on.
    pub fn validate(&self) -> Result<(), CaseError> {
        let mut seen = BTreeMap::new();
        let mut slack: Option<usize> = None;
        for bus in &self.buses {
            if seen.insert(bus.id, ()).is_some() {
                return Err(CaseError::DuplicateBus(bus.id));
            }
            if bus.v_mag_init.is_nan() || bus.v_mag_init <= T::zero() {
                return Err(CaseError::NonPositiveVoltage(bus.id));
            }
            if bus.kind == BusKind::Slack {
                match slack {
                    None => slack = Some(bus.id),
                    Some(first) => {
                        return Err(CaseError::MultipleSlack {
                            first,
                            second: bus.id,
                        })
                    }
                }
            }
        }
        if slack.is_none() {
            return Err(CaseError::MissingSlack);
        }
        for (i, br) in self.branches.iter().enumerate() {
            for bus in [br.from_bus, br.to_bus] {
                if !seen.contains_key(&bus) {
                    return Err(CaseError::DanglingBranch { index: i, bus });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(CaseError::SelfLoopBranch {
                    index: i,
                    bus: br.from_bus,
                });
            }
            if br.r == T::zero() && br.x == T::zero() {
                return Err(CaseError::ZeroImpedanceBranch {
                    index: i,
                    from: br.from_bus,
                    to: br.to_bus,
                });
            }
            if br.tap_ratio.is_nan() || br.tap_ratio <= T::zero() {
                return Err(CaseError::NonPositiveTap { index: i });
            }
        }
        let mut vset: BTreeMap<usize, T> = BTreeMap::new();
        for (i, gen) in self.generators.iter().enumerate() {
            if !seen.contains_key(&gen.bus) {
                return Err(CaseError::DanglingGenerator { index: i, bus: gen.bus });
            }
            if gen.in_service {
                match vset.get(&gen.bus) {
                    None => {
                        vset.insert(gen.bus, gen.v_set);
                    }
                    Some(&prev) => {
                        if (prev - gen.v_set).abs() > T::of(1e-6) {
                            return Err(CaseError::SetpointMismatch {
                                bus: gen.bus,
                                a: prev.as_f64(),
                                b: gen.v_set.as_f64(),
                            });
                        }
                    }
                }
            }
        }
        for bus in &self.buses {
            if bus.kind == BusKind::Pv && !vset.contains_key(&bus.id) {
                return Err(CaseError::PvWithoutGenerator(bus.id));
            }
        }
        Ok(())
    }

    pub fn slack_id(&self) -> usize {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .expect("validated case has a slack bus")
    }
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

/// Serializes a case back to MATPOWER-style text.
///
/// Numbers are written with shortest round-trip formatting, so
/// parse(write_case(c)) reproduces `c` up to the per-unit/degree
/// conversions at the boundary.
pub fn write_case<T: Scalar>(case: &NetworkCase<T>) -> String {
    let base = case.base_mva.as_f64();
    let mw = |p: T| p.as_f64() * base;
    let deg = |a: T| a.as_f64().to_degrees();
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", case.name);
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {base};");

    let _ = writeln!(s, "\n%% bus data");
    let _ = writeln!(s, "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    let _ = writeln!(s, "mpc.bus = [");
    for b in &case.buses {
        let kind = match b.kind {
            BusKind::Slack => 3,
            BusKind::Pv => 2,
            BusKind::Pq => 1,
        };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t1.1\t0.9;",
            b.id,
            kind,
            mw(b.p_load),
            mw(b.q_load),
            mw(b.g_shunt),
            mw(b.b_shunt),
            b.v_mag_init,
            deg(b.v_ang_init),
            b.v_base_kv,
        );
    }
    let _ = writeln!(s, "];");

    let _ = writeln!(s, "\n%% generator data");
    let _ = writeln!(s, "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t0\t0\t{}\t{}\t{}\t0\t0;",
            g.bus,
            mw(g.p_gen),
            mw(g.q_gen),
            g.v_set,
            base,
            i32::from(g.in_service),
        );
    }
    let _ = writeln!(s, "];");

    let _ = writeln!(s, "\n%% branch data");
    let _ = writeln!(
        s,
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"
    );
    let _ = writeln!(s, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t{}\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            br.r,
            br.x,
            br.b_charging,
            br.tap_ratio,
            deg(br.phase_shift),
            i32::from(br.in_service),
        );
    }
    let _ = writeln!(s, "];");
    s
}

/// Formats `x` with 6 significant digits, `%g` style.
pub(crate) fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        return format!("{:.5e}", x);
    }
    let decimals = (5 - exp).max(0) as usize;
    let mut s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Writes the solved bus table: id, V in pu, angle in degrees, P/Q
/// injections in MW/MVAr, 6 significant digits, header first. Output is
/// deterministic for a given case and solution.
pub fn write_solution<T: Scalar>(
    case: &NetworkCase<T>,
    solution: &BusSolution<T>,
    mut sink: impl Write,
) -> Result<(), CaseError> {
    if solution.rows.is_empty() {
        return Err(CaseError::SolutionEmpty);
    }
    for bus in &case.buses {
        if !solution.rows.iter().any(|r| r.bus == bus.id) {
            return Err(CaseError::SolutionIncomplete(bus.id));
        }
    }
    let base = case.base_mva.as_f64();
    writeln!(
        sink,
        "{:>6} {:>13} {:>13} {:>13} {:>13}",
        "bus", "v_mag_pu", "v_ang_deg", "p_inj_mw", "q_inj_mvar"
    )?;
    for bus in &case.buses {
        let row = solution
            .rows
            .iter()
            .find(|r| r.bus == bus.id)
            .expect("checked above");
        writeln!(
            sink,
            "{:>6} {:>13} {:>13} {:>13} {:>13}",
            bus.id,
            sig6(row.v_mag.as_f64()),
            sig6(row.v_ang.as_f64().to_degrees()),
            sig6(row.p_inj.as_f64() * base),
            sig6(row.q_inj.as_f64() * base),
        )?;
    }
    Ok(())
}
