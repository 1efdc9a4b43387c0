//! Hardware description: atomic access width, interrupt enable bits,
//! input registers and uninterruptible library functions.
//!
//! File format (one `key = value` per line, `#` comments):
//!
//! ```text
//! [global]
//! atomic_bits = 8
//! global_enable = 0x5F.7
//! global_enable_initial = on
//!
//! [source USART0_RX]
//! enable = 0xC1.7
//! vector = USART0_RX_vect
//! initial = off
//!
//! [input UDR]
//! address = 0xC6
//! range = 0..255
//! test_values = 0, 1
//!
//! [atomic_fn cas8]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::frontend::ast::{AbsAddr, CType, Program};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct SpecError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BitRef {
    pub address: u32,
    pub bit: u8,
}

impl fmt::Display for BitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:X}.{}", self.address, self.bit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub name: String,
    pub enable: BitRef,
    pub vector: String,
    pub initially_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputRegister {
    pub name: String,
    pub address: u32,
    pub range: (i64, i64),
    /// Values the concrete oracle feeds when the register is read.
    pub test_values: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardwareSpec {
    pub atomic_bits: u32,
    pub global_enable: BitRef,
    pub global_initially_enabled: bool,
    pub sources: Vec<Source>,
    pub inputs: Vec<InputRegister>,
    pub atomic_functions: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegisterSemantics {
    GlobalEnableBit,
    SourceEnableBit(String),
    InputRegister((i64, i64)),
    PlainMemory,
}

/// Three-valued status of one enable flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Flag {
    Disabled,
    Enabled,
    Unknown,
}

impl Flag {
    pub fn from_bool(on: bool) -> Flag {
        if on {
            Flag::Enabled
        } else {
            Flag::Disabled
        }
    }

    pub fn join(self, other: Flag) -> Flag {
        if self == other {
            self
        } else {
            Flag::Unknown
        }
    }

    pub fn leq(self, other: Flag) -> bool {
        self == other || other == Flag::Unknown
    }

    pub fn may_be_on(self) -> bool {
        self != Flag::Disabled
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::Disabled => "disabled",
            Flag::Enabled => "enabled",
            Flag::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InterruptState {
    pub global: Flag,
    pub sources: BTreeMap<String, Flag>,
}

impl InterruptState {
    pub fn initial(spec: &HardwareSpec) -> InterruptState {
        InterruptState {
            global: Flag::from_bool(spec.global_initially_enabled),
            sources: spec.sources.iter().map(|s| (s.name.clone(), Flag::from_bool(s.initially_enabled))).collect(),
        }
    }

    pub fn join(&self, other: &InterruptState) -> InterruptState {
        let mut sources = self.sources.clone();
        for (k, v) in &other.sources {
            let e = sources.entry(k.clone()).or_insert(*v);
            *e = e.join(*v);
        }
        InterruptState { global: self.global.join(other.global), sources }
    }

    pub fn leq(&self, other: &InterruptState) -> bool {
        self.global.leq(other.global)
            && self.sources.iter().all(|(k, v)| other.sources.get(k).is_some_and(|o| v.leq(*o)))
    }

    pub fn can_fire(&self, source: &str) -> bool {
        self.global.may_be_on() && self.sources.get(source).is_some_and(|f| f.may_be_on())
    }

    pub fn any_can_fire(&self) -> bool {
        self.global.may_be_on() && self.sources.values().any(|f| f.may_be_on())
    }

    pub fn set(&mut self, target: &EnableTarget, flag: Flag) {
        match target {
            EnableTarget::Global => self.global = flag,
            EnableTarget::Source(name) => {
                self.sources.insert(name.clone(), flag);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnableTarget {
    Global,
    Source(String),
}

/// Effect of a store on the enable bits of one register or bit variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreValue {
    Const(i64),
    /// `reg |= k`
    OrConst(i64),
    /// `reg &= k`
    AndConst(i64),
    /// A bit variable written with a value in `[lo, hi]`.
    Range(i64, i64),
    Opaque,
}

impl HardwareSpec {
    /// Spec with no sources, disabled interrupts and 8-bit atomicity.
    pub fn sequential() -> HardwareSpec {
        HardwareSpec {
            atomic_bits: 8,
            global_enable: BitRef { address: 0x5F, bit: 7 },
            global_initially_enabled: false,
            sources: Vec::new(),
            inputs: Vec::new(),
            atomic_functions: BTreeSet::new(),
        }
    }

    pub fn source_by_vector(&self, vector: &str) -> Option<&Source> {
        self.sources.iter().find(|s| s.vector == vector)
    }

    pub fn is_atomic_access(&self, ctype: &CType) -> bool {
        ctype.element().bits() <= self.atomic_bits
    }

    pub fn classify(&self, addr: Option<AbsAddr>) -> RegisterSemantics {
        let Some(addr) = addr else { return RegisterSemantics::PlainMemory };
        match addr.bit {
            Some(bit) => {
                let b = BitRef { address: addr.address, bit };
                if b == self.global_enable {
                    return RegisterSemantics::GlobalEnableBit;
                }
                if let Some(s) = self.sources.iter().find(|s| s.enable == b) {
                    return RegisterSemantics::SourceEnableBit(s.name.clone());
                }
            }
            None => {
                if let Some(r) = self.inputs.iter().find(|r| r.address == addr.address) {
                    return RegisterSemantics::InputRegister(r.range);
                }
            }
        }
        RegisterSemantics::PlainMemory
    }

    pub fn input_at(&self, addr: Option<AbsAddr>) -> Option<&InputRegister> {
        let addr = addr?;
        if addr.bit.is_some() {
            return None;
        }
        self.inputs.iter().find(|r| r.address == addr.address)
    }

    /// Enable bits held by a register (whole register) or bit variable,
    /// as (bit index within the stored value, target).
    pub fn enable_bits(&self, addr: Option<AbsAddr>) -> Vec<(u8, EnableTarget)> {
        let Some(addr) = addr else { return Vec::new() };
        let mut bits = Vec::new();
        let mut push = |b: BitRef, t: EnableTarget| {
            if b.address == addr.address {
                match addr.bit {
                    None => bits.push((b.bit, t)),
                    Some(x) if x == b.bit => bits.push((0, t)),
                    Some(_) => {}
                }
            }
        };
        push(self.global_enable, EnableTarget::Global);
        for s in &self.sources {
            push(s.enable, EnableTarget::Source(s.name.clone()));
        }
        bits
    }

    pub fn is_enable_register(&self, addr: Option<AbsAddr>) -> bool {
        !self.enable_bits(addr).is_empty()
    }

    /// Flag updates caused by storing `value` into the register at `addr`.
    pub fn store_effect(&self, addr: Option<AbsAddr>, value: &StoreValue) -> Vec<(EnableTarget, Flag)> {
        self.enable_bits(addr)
            .into_iter()
            .filter_map(|(bit, target)| {
                let mask = 1i64 << bit;
                let flag = match *value {
                    StoreValue::Const(v) => Some(Flag::from_bool(v & mask != 0)),
                    StoreValue::OrConst(k) => (k & mask != 0).then_some(Flag::Enabled),
                    StoreValue::AndConst(k) => (k & mask == 0).then_some(Flag::Disabled),
                    StoreValue::Range(lo, hi) if lo == hi => Some(Flag::from_bool(lo & mask != 0)),
                    _ => Some(Flag::Unknown),
                };
                flag.map(|f| (target, f))
            })
            .collect()
    }

    /// Every ISR must map to a source of this spec.
    pub fn check_program(&self, program: &Program) -> Result<(), SpecError> {
        for f in program.isrs() {
            let v = program.func(f).isr_vector.as_deref().unwrap_or_default();
            if self.source_by_vector(v).is_none() {
                return Err(SpecError { line: 0, message: format!("ISR `{}` has no interrupt source in the spec", v) });
            }
        }
        Ok(())
    }
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        i64::from_str_radix(h, 16).ok()?
    } else {
        s.parse().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_bit(s: &str) -> Option<BitRef> {
    let (a, b) = s.trim().split_once('.')?;
    let address = parse_int(a)?;
    let bit = parse_int(b)?;
    ((0..=0xFFFF).contains(&address) && (0..8).contains(&bit)).then_some(BitRef { address: address as u32, bit: bit as u8 })
}

fn parse_onoff(s: &str) -> Option<bool> {
    match s.trim() {
        "on" | "1" | "true" => Some(true),
        "off" | "0" | "false" => Some(false),
        _ => None,
    }
}

enum Section {
    None,
    Global,
    Source(usize),
    Input(usize),
    AtomicFn,
}

pub fn parse_hw_spec(text: &str) -> Result<HardwareSpec, SpecError> {
    let mut atomic_bits = 8;
    let mut global_enable = None;
    let mut global_initial = false;
    let mut sources: Vec<(Source, bool, bool)> = Vec::new();
    let mut inputs: Vec<(InputRegister, bool)> = Vec::new();
    let mut atomic_functions = BTreeSet::new();
    let mut section = Section::None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| SpecError { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let header = header.strip_suffix(']').ok_or_else(|| err("unterminated section header".into()))?;
            let mut parts = header.split_whitespace();
            let kind = parts.next().unwrap_or("");
            let name = parts.next();
            if parts.next().is_some() {
                return Err(err(format!("malformed section header `[{}]`", header)));
            }
            section = match (kind, name) {
                ("global", None) => Section::Global,
                ("source", Some(n)) => {
                    if sources.iter().any(|(s, ..)| s.name == n) {
                        return Err(err(format!("duplicate source `{}`", n)));
                    }
                    sources.push((
                        Source {
                            name: n.to_string(),
                            enable: BitRef { address: 0, bit: 0 },
                            vector: n.to_string(),
                            initially_enabled: false,
                        },
                        false,
                        false,
                    ));
                    Section::Source(sources.len() - 1)
                }
                ("input", Some(n)) => {
                    if inputs.iter().any(|(r, _)| r.name == n) {
                        return Err(err(format!("duplicate input `{}`", n)));
                    }
                    inputs.push((
                        InputRegister { name: n.to_string(), address: 0, range: (0, 255), test_values: Vec::new() },
                        false,
                    ));
                    Section::Input(inputs.len() - 1)
                }
                ("atomic_fn", Some(n)) => {
                    atomic_functions.insert(n.to_string());
                    Section::AtomicFn
                }
                _ => return Err(err(format!("unknown section `[{}]`", header))),
            };
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{}`", content)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = || err(format!("invalid value `{}` for `{}`", value, key));
        match (&section, key) {
            (Section::Global, "atomic_bits") => {
                atomic_bits = parse_int(value).filter(|b| [8, 16, 32].contains(b)).ok_or_else(bad)? as u32;
            }
            (Section::Global, "global_enable") => global_enable = Some(parse_bit(value).ok_or_else(bad)?),
            (Section::Global, "global_enable_initial") => global_initial = parse_onoff(value).ok_or_else(bad)?,
            (Section::Source(i), "enable") => {
                sources[*i].0.enable = parse_bit(value).ok_or_else(bad)?;
                sources[*i].1 = true;
            }
            (Section::Source(i), "vector") => {
                if value.is_empty() {
                    return Err(bad());
                }
                sources[*i].0.vector = value.to_string();
                sources[*i].2 = true;
            }
            (Section::Source(i), "initial") => sources[*i].0.initially_enabled = parse_onoff(value).ok_or_else(bad)?,
            (Section::Input(i), "address") => {
                let a = parse_int(value).filter(|a| (0..=0xFFFF).contains(a)).ok_or_else(bad)?;
                inputs[*i].0.address = a as u32;
                inputs[*i].1 = true;
            }
            (Section::Input(i), "range") => {
                let (lo, hi) = value.split_once("..").ok_or_else(bad)?;
                let (lo, hi) = (parse_int(lo).ok_or_else(bad)?, parse_int(hi).ok_or_else(bad)?);
                if lo > hi {
                    return Err(bad());
                }
                inputs[*i].0.range = (lo, hi);
            }
            (Section::Input(i), "test_values") => {
                inputs[*i].0.test_values =
                    value.split(',').map(parse_int).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
            }
            (Section::None, _) => return Err(err(format!("key `{}` outside of a section", key))),
            _ => return Err(err(format!("unknown key `{}`", key))),
        }
    }

    let global_enable = global_enable.ok_or(SpecError { line: 0, message: "missing `global_enable`".into() })?;
    let mut used: BTreeMap<BitRef, String> = BTreeMap::new();
    used.insert(global_enable, "global_enable".into());
    let mut vectors = BTreeSet::new();
    for (s, has_enable, _) in &sources {
        if !has_enable {
            return Err(SpecError { line: 0, message: format!("source `{}` has no `enable`", s.name) });
        }
        if let Some(other) = used.insert(s.enable, s.name.clone()) {
            return Err(SpecError {
                line: 0,
                message: format!("duplicate address: {} used by `{}` and `{}`", s.enable, other, s.name),
            });
        }
        if !vectors.insert(s.vector.clone()) {
            return Err(SpecError { line: 0, message: format!("duplicate vector `{}`", s.vector) });
        }
    }
    let mut input_addrs = BTreeSet::new();
    let mut inputs_out = Vec::new();
    for (mut r, has_address) in inputs {
        if !has_address {
            return Err(SpecError { line: 0, message: format!("input `{}` has no `address`", r.name) });
        }
        if !input_addrs.insert(r.address) || used.keys().any(|b| b.address == r.address) {
            return Err(SpecError { line: 0, message: format!("duplicate address 0x{:X} (input `{}`)", r.address, r.name) });
        }
        if r.test_values.is_empty() {
            r.test_values = vec![r.range.0];
        }
        if r.test_values.iter().any(|v| *v < r.range.0 || *v > r.range.1) {
            return Err(SpecError { line: 0, message: format!("test value outside range for input `{}`", r.name) });
        }
        inputs_out.push(r);
    }
    Ok(HardwareSpec {
        atomic_bits,
        global_enable,
        global_initially_enabled: global_initial,
        sources: sources.into_iter().map(|(s, ..)| s).collect(),
        inputs: inputs_out,
        atomic_functions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const AVR: &str = "
        [global]
        atomic_bits = 8
        global_enable = 0x5F.7
        global_enable_initial = on

        [source USART0_RX]
        enable = 0xC1.7
        vector = USART0_RX_vect

        [input UDR]
        address = 0xC6
        range = 0..255
        test_values = 0, 1
    ";

    #[test]
    fn avr_spec() {
        let hw = parse_hw_spec(AVR).unwrap();
        assert_eq!(hw.atomic_bits, 8);
        assert_eq!(hw.global_enable, BitRef { address: 0x5F, bit: 7 });
        assert!(hw.global_initially_enabled);
        assert_eq!(hw.sources[0].vector, "USART0_RX_vect");
        assert_eq!(hw.inputs[0].test_values, vec![0, 1]);
    }

    #[test]
    fn no_sources_is_valid() {
        let hw = parse_hw_spec("[global]\nglobal_enable = 0x5F.7\n").unwrap();
        assert!(hw.sources.is_empty());
        assert!(!InterruptState::initial(&hw).any_can_fire());
    }

    #[test]
    fn spec_errors() {
        let shared = "[global]\nglobal_enable = 0x5F.7\n[source A]\nenable = 0xC1.7\n[source B]\nenable = 0xC1.7\n";
        assert!(parse_hw_spec(shared).unwrap_err().message.contains("duplicate address"));
        assert!(parse_hw_spec("[global]\natomic_bits = 8\n").unwrap_err().message.contains("global_enable"));
        let unknown = "[global]\nglobal_enable = 0x5F.7\ncolour = red\n";
        assert_eq!(parse_hw_spec(unknown).unwrap_err().line, 3);
        assert!(parse_hw_spec("[global]\natomic_bits = 12\nglobal_enable = 0x5F.7").is_err());
    }

    #[test]
    fn classification() {
        let hw = parse_hw_spec(AVR).unwrap();
        let bit = |a, b| Some(AbsAddr { address: a, bit: Some(b) });
        assert_eq!(hw.classify(bit(0xC1, 7)), RegisterSemantics::SourceEnableBit("USART0_RX".into()));
        assert_eq!(hw.classify(bit(0x5F, 7)), RegisterSemantics::GlobalEnableBit);
        assert_eq!(hw.classify(None), RegisterSemantics::PlainMemory);
        assert_eq!(hw.classify(Some(AbsAddr { address: 0xC6, bit: None })), RegisterSemantics::InputRegister((0, 255)));
        assert_eq!(hw.classify(bit(0xC1, 6)), RegisterSemantics::PlainMemory);
    }

    #[test]
    fn atomicity() {
        let mut hw = parse_hw_spec(AVR).unwrap();
        assert!(hw.is_atomic_access(&CType::U8));
        assert!(!hw.is_atomic_access(&CType::U16));
        hw.atomic_bits = 16;
        assert!(hw.is_atomic_access(&CType::U16));
    }

    #[test]
    fn enable_writes() {
        let hw = parse_hw_spec(AVR).unwrap();
        let ien = Some(AbsAddr { address: 0xC1, bit: Some(7) });
        let src = EnableTarget::Source("USART0_RX".into());
        assert_eq!(hw.store_effect(ien, &StoreValue::Const(0)), vec![(src.clone(), Flag::Disabled)]);
        assert_eq!(hw.store_effect(ien, &StoreValue::Const(1)), vec![(src.clone(), Flag::Enabled)]);
        assert_eq!(hw.store_effect(ien, &StoreValue::Range(0, 1)), vec![(src, Flag::Unknown)]);
        let sreg = Some(AbsAddr { address: 0x5F, bit: None });
        assert_eq!(hw.store_effect(sreg, &StoreValue::OrConst(0x80)), vec![(EnableTarget::Global, Flag::Enabled)]);
        assert_eq!(hw.store_effect(sreg, &StoreValue::OrConst(0x01)), vec![]);
        assert_eq!(hw.store_effect(sreg, &StoreValue::AndConst(0x7F)), vec![(EnableTarget::Global, Flag::Disabled)]);
        assert_eq!(hw.store_effect(sreg, &StoreValue::Opaque), vec![(EnableTarget::Global, Flag::Unknown)]);
    }

    #[test]
    fn flag_lattice_is_monotone() {
        let all = [Flag::Disabled, Flag::Enabled, Flag::Unknown];
        for a in all {
            for b in all {
                let j = a.join(b);
                assert!(a.leq(j) && b.leq(j));
                for c in all {
                    if a.leq(b) {
                        assert!(a.join(c).leq(b.join(c)));
                    }
                }
            }
        }
    }
}
