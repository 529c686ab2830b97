//! Quantitative STL over discrete-time predicate signals.
//!
//! Robustness follows the usual min/max semantics: negation flips the sign,
//! conjunction takes the minimum, disjunction the maximum, `a -> b` is
//! `max(-a, b)`, globally is the infimum over the remaining trace, once is
//! the supremum over a past window and previous shifts one sample back.
//! Previous is undefined on the first sample; once ignores window samples
//! where its argument is undefined.

use std::collections::HashMap;
use std::fmt;

use super::RuleError;
use crate::scenario::VehicleId;

/// Argument of a predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Ego,
    /// The quantified vehicle `x_0`, bound at evaluation time.
    Var,
    Vehicle(VehicleId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub name: String,
    pub args: Vec<Term>,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if self.args.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match a {
                Term::Ego => f.write_str("ego")?,
                Term::Var => f.write_str("x0")?,
                Term::Vehicle(id) => write!(f, "{id}")?,
            }
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Predicate(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Globally(Box<Formula>),
    /// Past-time "once" over the window `[t - hi, t - lo]`, bounds in seconds.
    Once { lo: f64, hi: f64, arg: Box<Formula> },
    Previous(Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str, args: &[Term]) -> Self {
        Formula::Predicate(Atom { name: name.to_string(), args: args.to_vec() })
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(fs: Vec<Formula>) -> Self {
        Formula::And(fs)
    }

    pub fn or(fs: Vec<Formula>) -> Self {
        Formula::Or(fs)
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn globally(f: Formula) -> Self {
        Formula::Globally(Box::new(f))
    }

    /// Panics if the window is not `0 <= lo <= hi`.
    pub fn once(lo: f64, hi: f64, f: Formula) -> Self {
        assert!(0.0 <= lo && lo <= hi, "once window must satisfy 0 <= lo <= hi");
        Formula::Once { lo, hi, arg: Box::new(f) }
    }

    pub fn previous(f: Formula) -> Self {
        Formula::Previous(Box::new(f))
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Formula::Predicate(a) => out.push(a),
            Formula::Not(f) | Formula::Globally(f) | Formula::Previous(f) => f.collect_atoms(out),
            Formula::Once { arg, .. } => arg.collect_atoms(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_atoms(out)),
            Formula::Implies(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }
}

/// Source of predicate values on a uniform time grid.
pub trait Signals {
    fn timestep(&self) -> f64;
    /// Number of samples; valid step indices are `0..len()`.
    fn len(&self) -> usize;
    fn value(&self, atom: &Atom, step: usize) -> Result<f64, RuleError>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const WINDOW_EPS: f64 = 1e-9;

/// Robustness of `formula` at sample `t`.
pub fn robustness<S: Signals + ?Sized>(formula: &Formula, signals: &S, t: usize) -> Result<f64, RuleError> {
    if t >= signals.len() {
        return Err(RuleError::OutOfRange { step: t, len: signals.len() });
    }
    eval(formula, signals, t)
}

fn eval<S: Signals + ?Sized>(formula: &Formula, signals: &S, t: usize) -> Result<f64, RuleError> {
    Ok(match formula {
        Formula::Predicate(atom) => signals.value(atom, t)?,
        Formula::Not(f) => -eval(f, signals, t)?,
        Formula::And(fs) => {
            let mut acc = f64::INFINITY;
            for f in fs {
                acc = acc.min(eval(f, signals, t)?);
            }
            acc
        }
        Formula::Or(fs) => {
            let mut acc = f64::NEG_INFINITY;
            for f in fs {
                acc = acc.max(eval(f, signals, t)?);
            }
            acc
        }
        Formula::Implies(a, b) => (-eval(a, signals, t)?).max(eval(b, signals, t)?),
        Formula::Globally(f) => {
            let mut acc = f64::INFINITY;
            for k in t..signals.len() {
                acc = acc.min(eval(f, signals, k)?);
            }
            acc
        }
        Formula::Once { lo, hi, arg } => {
            let dt = signals.timestep();
            let back_hi = (hi / dt + WINDOW_EPS).floor() as usize;
            let back_lo = (lo / dt - WINDOW_EPS).ceil().max(0.0) as usize;
            // The window is clipped at the start of the trace.
            let first = t.saturating_sub(back_hi);
            let mut acc = f64::NEG_INFINITY;
            if let Some(last) = t.checked_sub(back_lo) {
                for k in first..=last {
                    // Samples without enough history for the argument are
                    // outside the window, so a fresh trace has seen nothing.
                    match eval(arg, signals, k) {
                        Ok(v) => acc = acc.max(v),
                        Err(RuleError::InvalidTimestep { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            acc
        }
        Formula::Previous(f) => match t.checked_sub(1) {
            Some(k) => eval(f, signals, k)?,
            None => return Err(RuleError::InvalidTimestep { step: t }),
        },
    })
}

/// A recorded predicate signal; samples before `valid_from` are insufficient history.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub values: Vec<f64>,
    pub valid_from: usize,
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, valid_from: 0 }
    }
}

/// Explicit predicate traces keyed by the atom's display form, e.g. `in_front_of(ego,x0)`.
#[derive(Debug, Clone, Default)]
pub struct TraceTable {
    pub timestep: f64,
    pub signals: HashMap<String, Signal>,
}

impl TraceTable {
    pub fn new(timestep: f64) -> Self {
        Self { timestep, signals: HashMap::new() }
    }

    pub fn with(mut self, key: &str, values: Vec<f64>) -> Self {
        self.signals.insert(key.to_string(), Signal::new(values));
        self
    }

    pub fn insert(&mut self, key: &str, signal: Signal) {
        self.signals.insert(key.to_string(), signal);
    }
}

impl Signals for TraceTable {
    fn timestep(&self) -> f64 {
        self.timestep
    }

    fn len(&self) -> usize {
        self.signals.values().map(|s| s.values.len()).min().unwrap_or(0)
    }

    fn value(&self, atom: &Atom, step: usize) -> Result<f64, RuleError> {
        let key = atom.to_string();
        let sig = self.signals.get(&key).ok_or(RuleError::MissingSignal(key))?;
        if step < sig.valid_from {
            return Err(RuleError::InvalidTimestep { step });
        }
        sig.values.get(step).copied().ok_or(RuleError::OutOfRange { step, len: sig.values.len() })
    }
}
