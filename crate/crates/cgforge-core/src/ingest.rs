//! Normalized-disassembly ingestion.
//!
//! Input is a JSONL stream with one object per instruction
//! (`{"bin","func","func_end","addr","text","xref_data"}`) and one per
//! function header (`{"bin","func_start","name"}`), all addresses as hex
//! strings. Parsing produces an immutable [`ProgramModel`] per binary
//! with instruction class flags precomputed, from which direct-call
//! ground truth, address-taken candidates and indirect callsites fall
//! out by traversal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CgError, Result};
use crate::io::{fmt_hex, parse_hex};
use crate::symbolizer::{named_constant_value, numeric_literal_value, tokenize};
use crate::x86::{self, Reg};

/// Set of canonical registers read or written through operands.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegSet(pub u64);

impl RegSet {
    pub fn insert(&mut self, reg: Reg) {
        self.0 |= 1u64 << reg.index();
    }

    pub fn contains(&self, reg: Reg) -> bool {
        self.0 & (1u64 << reg.index()) != 0
    }

    pub fn intersects(&self, other: &RegSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn from_regs(regs: &[Reg]) -> Self {
        let mut set = RegSet::default();
        for &r in regs {
            set.insert(r);
        }
        set
    }
}

/// Instruction classification used by the slicing rules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsnFlags {
    pub is_call: bool,
    pub is_indirect_call: bool,
    pub is_control_flow: bool,
    pub is_stack: bool,
    pub references_global: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionModel {
    pub addr: u64,
    pub mnemonic: String,
    /// Operand tokens, verbatim after tokenization, before symbolization.
    pub operands: Vec<String>,
    pub flags: InsnFlags,
    pub regs: RegSet,
}

impl InstructionModel {
    /// Builds an instruction from its text, classifying it on the way.
    pub fn from_text(addr: u64, text: &str, has_data_xref: bool) -> Self {
        let tokens = tokenize(text);
        let (mnemonic, operands) = match tokens.split_first() {
            Some((m, rest)) => (m.clone(), rest.to_vec()),
            None => (String::new(), Vec::new()),
        };

        let mut regs = RegSet::default();
        for tok in &operands {
            if let Some(reg) = x86::canonical_register(tok) {
                regs.insert(reg);
            }
        }

        let is_call = mnemonic == "call";
        let is_indirect_call = is_call && Self::call_is_indirect(&operands);
        let is_control_flow = x86::is_control_flow_mnemonic(&mnemonic);
        let is_stack =
            x86::is_stack_mnemonic(&mnemonic) || x86::has_stack_based_memory(&operands);

        InstructionModel {
            addr,
            mnemonic,
            operands,
            flags: InsnFlags {
                is_call,
                is_indirect_call,
                is_control_flow,
                is_stack,
                references_global: has_data_xref,
            },
            regs,
        }
    }

    fn call_is_indirect(operands: &[String]) -> bool {
        if operands.iter().any(|t| t == "[") {
            return true;
        }
        match operands.first() {
            Some(tok) => x86::is_register(tok),
            None => false,
        }
    }

    /// Target address of a direct call or jump, when it can be resolved
    /// from a constant or disassembler-named operand.
    pub fn constant_target(&self) -> Option<u64> {
        self.operands
            .iter()
            .find_map(|t| numeric_literal_value(t).or_else(|| named_constant_value(t)))
    }

    /// All constant operand values (immediates and named addresses).
    pub fn constant_operands(&self) -> impl Iterator<Item = u64> + '_ {
        self.operands
            .iter()
            .filter_map(|t| numeric_literal_value(t).or_else(|| named_constant_value(t)))
    }

    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(1 + self.operands.len());
        out.push(self.mnemonic.clone());
        out.extend(self.operands.iter().cloned());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionModel {
    pub start_addr: u64,
    pub end_addr: u64,
    pub name: String,
    pub instructions: Vec<InstructionModel>,
    pub address_taken: bool,
}

impl FunctionModel {
    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.start_addr && (addr < self.end_addr || addr == self.start_addr)
    }

    /// Index of the instruction at `addr`, if any.
    pub fn instruction_index(&self, addr: u64) -> Option<usize> {
        self.instructions
            .binary_search_by_key(&addr, |i| i.addr)
            .ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallsiteKind {
    Direct,
    Indirect,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallsiteRef {
    pub binary_id: String,
    pub addr: u64,
    pub kind: CallsiteKind,
    /// Start address of the enclosing function.
    pub enclosing_function: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramModel {
    pub binary_id: String,
    pub functions: Vec<FunctionModel>,
    /// Code address -> referenced data-section addresses.
    pub data_refs: BTreeMap<u64, Vec<u64>>,
}

impl ProgramModel {
    /// Function whose range contains `addr`.
    pub fn function_at(&self, addr: u64) -> Option<&FunctionModel> {
        let idx = match self
            .functions
            .binary_search_by_key(&addr, |f| f.start_addr)
        {
            Ok(i) => i,
            Err(0) => return None,
            Err(i) => i - 1,
        };
        let f = &self.functions[idx];
        f.contains(addr).then_some(f)
    }

    pub fn function_starting(&self, addr: u64) -> Option<&FunctionModel> {
        self.functions
            .binary_search_by_key(&addr, |f| f.start_addr)
            .ok()
            .map(|i| &self.functions[i])
    }

    pub fn instructions(&self) -> impl Iterator<Item = &InstructionModel> {
        self.functions.iter().flat_map(|f| f.instructions.iter())
    }

    /// All callsites, direct and indirect, in address order.
    pub fn callsites(&self) -> Vec<CallsiteRef> {
        let mut out = Vec::new();
        for func in &self.functions {
            for insn in &func.instructions {
                if insn.flags.is_call {
                    out.push(CallsiteRef {
                        binary_id: self.binary_id.clone(),
                        addr: insn.addr,
                        kind: if insn.flags.is_indirect_call {
                            CallsiteKind::Indirect
                        } else {
                            CallsiteKind::Direct
                        },
                        enclosing_function: func.start_addr,
                    });
                }
            }
        }
        out.sort_by_key(|cs| cs.addr);
        out
    }

    /// Functions whose address is materialized somewhere in the binary.
    pub fn address_taken_functions(&self) -> Vec<&FunctionModel> {
        self.functions.iter().filter(|f| f.address_taken).collect()
    }

    /// Whole-function token sequences ("paragraphs") for embedding.
    pub fn function_paragraphs(&self) -> Vec<(u64, Vec<String>)> {
        self.functions
            .iter()
            .filter(|f| !f.instructions.is_empty())
            .map(|f| {
                let mut toks = Vec::new();
                for insn in &f.instructions {
                    toks.extend(insn.tokens());
                }
                (f.start_addr, toks)
            })
            .collect()
    }
}

/// Raw JSONL records of the normalized disassembly format.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawRecord {
    Insn {
        bin: String,
        func: String,
        func_end: String,
        addr: String,
        text: String,
        #[serde(default)]
        xref_data: Vec<String>,
    },
    Header {
        bin: String,
        func_start: String,
        name: String,
    },
}

#[derive(Default)]
struct FunctionBuilder {
    end: Option<u64>,
    name: Option<String>,
    insns: BTreeMap<u64, (String, Vec<u64>)>,
}

fn hex_field(s: &str, line: usize, field: &str) -> Result<u64> {
    parse_hex(s).ok_or_else(|| CgError::Parse {
        line,
        msg: format!("bad hex value {s:?} in field {field:?}"),
    })
}

/// Parses a normalized-disassembly stream holding any number of binaries,
/// returning one model per binary sorted by id. Address-taken flags are
/// computed via [`mark_address_taken`].
pub fn parse_programs<R: std::io::Read>(reader: R) -> Result<Vec<ProgramModel>> {
    use std::io::BufRead;
    let mut bins: BTreeMap<String, BTreeMap<u64, FunctionBuilder>> = BTreeMap::new();
    for (idx, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| CgError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        match record {
            RawRecord::Header {
                bin,
                func_start,
                name,
            } => {
                let start = hex_field(&func_start, lineno, "func_start")?;
                let builder = bins.entry(bin).or_default().entry(start).or_default();
                builder.name = Some(name);
            }
            RawRecord::Insn {
                bin,
                func,
                func_end,
                addr,
                text,
                xref_data,
            } => {
                let start = hex_field(&func, lineno, "func")?;
                let end = hex_field(&func_end, lineno, "func_end")?;
                let at = hex_field(&addr, lineno, "addr")?;
                let xrefs = xref_data
                    .iter()
                    .map(|x| hex_field(x, lineno, "xref_data"))
                    .collect::<Result<Vec<u64>>>()?;
                let builder = bins.entry(bin).or_default().entry(start).or_default();
                match builder.end {
                    Some(e) if e != end => {
                        return Err(CgError::Parse {
                            line: lineno,
                            msg: format!(
                                "function {} has inconsistent end {} vs {}",
                                fmt_hex(start),
                                fmt_hex(e),
                                fmt_hex(end)
                            ),
                        });
                    }
                    _ => builder.end = Some(end),
                }
                if builder.insns.insert(at, (text, xrefs)).is_some() {
                    return Err(CgError::Parse {
                        line: lineno,
                        msg: format!("duplicate instruction at {}", fmt_hex(at)),
                    });
                }
            }
        }
    }

    let mut programs = Vec::with_capacity(bins.len());
    for (bin, funcs) in bins {
        programs.push(assemble_program(bin, funcs)?);
    }
    Ok(programs)
}

fn assemble_program(
    binary_id: String,
    builders: BTreeMap<u64, FunctionBuilder>,
) -> Result<ProgramModel> {
    let mut functions = Vec::with_capacity(builders.len());
    let mut data_refs: BTreeMap<u64, Vec<u64>> = BTreeMap::new();

    for (start, builder) in builders {
        let end = builder
            .end
            .or_else(|| builder.insns.keys().next_back().map(|a| a + 1))
            .unwrap_or(start);
        if end < start {
            return Err(CgError::Model(format!(
                "function {} ends before it starts",
                fmt_hex(start)
            )));
        }
        let mut instructions = Vec::with_capacity(builder.insns.len());
        for (addr, (text, xrefs)) in builder.insns {
            if addr < start || addr >= end {
                return Err(CgError::Model(format!(
                    "instruction {} outside function [{}, {})",
                    fmt_hex(addr),
                    fmt_hex(start),
                    fmt_hex(end)
                )));
            }
            if !xrefs.is_empty() {
                data_refs.insert(addr, xrefs.clone());
            }
            instructions.push(InstructionModel::from_text(addr, &text, !xrefs.is_empty()));
        }
        functions.push(FunctionModel {
            start_addr: start,
            end_addr: end,
            name: builder.name.unwrap_or_else(|| format!("sub_{start:x}")),
            instructions,
            address_taken: false,
        });
    }

    // BTreeMap iteration gives ascending starts; verify ranges are disjoint.
    for pair in functions.windows(2) {
        if pair[1].start_addr < pair[0].end_addr {
            return Err(CgError::Model(format!(
                "functions {} and {} overlap",
                fmt_hex(pair[0].start_addr),
                fmt_hex(pair[1].start_addr)
            )));
        }
    }

    Ok(mark_address_taken(ProgramModel {
        binary_id,
        functions,
        data_refs,
    }))
}

/// Parses a stream expected to contain a single binary.
pub fn parse_program<R: std::io::Read>(reader: R) -> Result<ProgramModel> {
    let mut programs = parse_programs(reader)?;
    match programs.len() {
        0 => Ok(ProgramModel {
            binary_id: String::new(),
            functions: Vec::new(),
            data_refs: BTreeMap::new(),
        }),
        1 => Ok(programs.pop().expect("length checked")),
        n => Err(CgError::Data(format!(
            "expected a single binary in stream, found {n}"
        ))),
    }
}

/// Flags every function whose start address appears as a non-call
/// constant operand or as a data reference anywhere in the binary.
/// Idempotent.
pub fn mark_address_taken(mut p: ProgramModel) -> ProgramModel {
    let mut taken: std::collections::BTreeSet<u64> = std::collections::BTreeSet::new();
    for insn in p.functions.iter().flat_map(|f| f.instructions.iter()) {
        if !insn.flags.is_call {
            taken.extend(insn.constant_operands());
        }
    }
    for refs in p.data_refs.values() {
        taken.extend(refs.iter().copied());
    }
    for func in &mut p.functions {
        func.address_taken = taken.contains(&func.start_addr);
    }
    p
}

/// Direct-call ground truth: one pair per direct call whose target is a
/// known function start, in callsite-address order. Unresolvable targets
/// are dropped and reported.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DirectPairs {
    pub pairs: Vec<(CallsiteRef, u64)>,
    /// Callsite addresses whose target was not a function start.
    pub skipped: Vec<u64>,
}

pub fn extract_direct_pairs(p: &ProgramModel) -> DirectPairs {
    let mut out = DirectPairs::default();
    for func in &p.functions {
        for insn in &func.instructions {
            if !insn.flags.is_call || insn.flags.is_indirect_call {
                continue;
            }
            let target = insn
                .constant_target()
                .or_else(|| resolve_named_target(p, insn));
            match target.and_then(|t| p.function_starting(t).map(|f| f.start_addr)) {
                Some(callee) => out.pairs.push((
                    CallsiteRef {
                        binary_id: p.binary_id.clone(),
                        addr: insn.addr,
                        kind: CallsiteKind::Direct,
                        enclosing_function: func.start_addr,
                    },
                    callee,
                )),
                None => out.skipped.push(insn.addr),
            }
        }
    }
    out.pairs.sort_by_key(|(cs, _)| cs.addr);
    out.skipped.sort_unstable();
    out
}

fn resolve_named_target(p: &ProgramModel, insn: &InstructionModel) -> Option<u64> {
    let name = insn.operands.first()?;
    p.functions
        .iter()
        .find(|f| &f.name == name)
        .map(|f| f.start_addr)
}

/// Exactly the instructions flagged as indirect calls, sorted by address.
pub fn list_indirect_callsites(p: &ProgramModel) -> Vec<CallsiteRef> {
    p.callsites()
        .into_iter()
        .filter(|cs| cs.kind == CallsiteKind::Indirect)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn insn_line(bin: &str, func: (u64, u64), addr: u64, text: &str) -> String {
        format!(
            r#"{{"bin":"{bin}","func":"{}","func_end":"{}","addr":"{}","text":"{text}"}}"#,
            fmt_hex(func.0),
            fmt_hex(func.1),
            fmt_hex(addr)
        )
    }

    fn header_line(bin: &str, start: u64, name: &str) -> String {
        format!(
            r#"{{"bin":"{bin}","func_start":"{}","name":"{name}"}}"#,
            fmt_hex(start)
        )
    }

    fn fixture() -> String {
        let f0 = (0x400000, 0x400020);
        let f1 = (0x401000, 0x401010);
        let f2 = (0x402000, 0x402010);
        [
            header_line("b", f0.0, "caller"),
            header_line("b", f1.0, "sub_401000"),
            header_line("b", f2.0, "helper"),
            insn_line("b", f0, 0x400000, "push rbp"),
            insn_line("b", f0, 0x400001, "lea rax, 0x401000"),
            insn_line("b", f0, 0x400008, "mov rdi, 0x5"),
            insn_line("b", f0, 0x40000c, "call rax"),
            insn_line("b", f0, 0x40000e, "call 0x402000"),
            insn_line("b", f0, 0x400013, "call 0x402004"),
            insn_line("b", f0, 0x400018, "call qword ptr [rbx+8]"),
            insn_line("b", f0, 0x40001f, "ret"),
            insn_line("b", f1, 0x401000, "mov rax, rdi"),
            insn_line("b", f1, 0x401003, "ret"),
            insn_line("b", f2, 0x402000, "nop"),
            insn_line("b", f2, 0x402004, "ret"),
        ]
        .join("\n")
    }

    #[test]
    fn parse_tokenizes_instruction_text() {
        let p = parse_program(fixture().as_bytes()).unwrap();
        let f = p.function_at(0x400001).unwrap();
        let insn = &f.instructions[1];
        assert_eq!(insn.mnemonic, "lea");
        assert_eq!(insn.operands, vec!["rax", ",", "0x401000"]);
    }

    #[test]
    fn parse_empty_stream() {
        let p = parse_program(&b""[..]).unwrap();
        assert!(p.functions.is_empty());
    }

    #[test]
    fn overlapping_functions_rejected() {
        let lines = [
            insn_line("b", (0x10, 0x30), 0x10, "nop"),
            insn_line("b", (0x20, 0x40), 0x20, "nop"),
            insn_line("b", (0x50, 0x60), 0x50, "ret"),
        ]
        .join("\n");
        let err = parse_programs(lines.as_bytes()).unwrap_err();
        assert!(matches!(err, CgError::Model(_)), "{err}");
    }

    #[test]
    fn malformed_line_reports_number() {
        let data = format!("{}\n{{bad json\n", insn_line("b", (0x10, 0x20), 0x10, "nop"));
        match parse_programs(data.as_bytes()).unwrap_err() {
            CgError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn class_flags() {
        let p = parse_program(fixture().as_bytes()).unwrap();
        let f = p.function_at(0x400000).unwrap();
        let by_addr = |a: u64| &f.instructions[f.instruction_index(a).unwrap()];

        let push = by_addr(0x400000);
        assert!(push.flags.is_stack && !push.flags.is_control_flow);

        let icall = by_addr(0x40000c);
        assert!(icall.flags.is_call && icall.flags.is_indirect_call);
        assert!(icall.flags.is_control_flow);

        let dcall = by_addr(0x40000e);
        assert!(dcall.flags.is_call && !dcall.flags.is_indirect_call);

        let memcall = by_addr(0x400018);
        assert!(memcall.flags.is_indirect_call);

        let movarg = by_addr(0x400008);
        assert!(movarg.regs.contains(Reg::Rdi));
    }

    #[test]
    fn address_taken_via_constant_operand() {
        let p = parse_program(fixture().as_bytes()).unwrap();
        assert!(p.function_starting(0x401000).unwrap().address_taken);
        // Only ever called directly: not taken.
        assert!(!p.function_starting(0x402000).unwrap().address_taken);
    }

    #[test]
    fn address_taken_is_idempotent() {
        let p = parse_program(fixture().as_bytes()).unwrap();
        let again = mark_address_taken(p.clone());
        assert_eq!(p, again);
    }

    #[test]
    fn direct_pairs_with_skip_report() {
        let p = parse_program(fixture().as_bytes()).unwrap();
        let dp = extract_direct_pairs(&p);
        // 0x40000e targets a function start; 0x400013 lands mid-function.
        assert_eq!(dp.pairs.len(), 1);
        assert_eq!(dp.pairs[0].0.addr, 0x40000e);
        assert_eq!(dp.pairs[0].1, 0x402000);
        assert_eq!(dp.skipped, vec![0x400013]);
    }

    #[test]
    fn indirect_callsites_listed_sorted() {
        let p = parse_program(fixture().as_bytes()).unwrap();
        let refs = list_indirect_callsites(&p);
        assert_eq!(
            refs.iter().map(|r| r.addr).collect::<Vec<_>>(),
            vec![0x40000c, 0x400018]
        );
        for r in &refs {
            assert_eq!(r.kind, CallsiteKind::Indirect);
            assert!(p.function_at(r.addr).is_some());
            assert_eq!(r.enclosing_function, 0x400000);
        }
    }

    #[test]
    fn indirect_excludes_direct() {
        let p = parse_program(fixture().as_bytes()).unwrap();
        let refs = list_indirect_callsites(&p);
        assert!(refs.iter().all(|r| r.addr != 0x40000e));
    }

    #[test]
    fn model_round_trip() {
        let p = parse_program(fixture().as_bytes()).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: ProgramModel = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn direct_extraction_deterministic() {
        let p1 = parse_program(fixture().as_bytes()).unwrap();
        let p2 = parse_program(fixture().as_bytes()).unwrap();
        let d1 = extract_direct_pairs(&p1);
        let d2 = extract_direct_pairs(&p2);
        assert_eq!(d1.pairs, d2.pairs);
        assert_eq!(d1.skipped, d2.skipped);
    }

    #[test]
    fn named_call_target_resolution() {
        let lines = [
            header_line("b", 0x10, "main"),
            header_line("b", 0x30, "helper"),
            insn_line("b", (0x10, 0x20), 0x10, "call helper"),
            insn_line("b", (0x10, 0x20), 0x15, "ret"),
            insn_line("b", (0x30, 0x40), 0x30, "ret"),
        ]
        .join("\n");
        let p = parse_program(lines.as_bytes()).unwrap();
        let dp = extract_direct_pairs(&p);
        assert_eq!(dp.pairs.len(), 1);
        assert_eq!(dp.pairs[0].1, 0x30);
    }
}
