//! x86-64 register and mnemonic tables (Intel syntax, lowercase).
//!
//! Sub-registers collapse onto their canonical 64-bit parent (`edi`,
//! `di`, `dil` all count as `rdi`), since compilers freely use narrow
//! forms for argument setup while the calling convention names 64-bit
//! registers.

/// Canonical register identity used by the slicing rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Reg {
    Rax,
    Rbx,
    Rcx,
    Rdx,
    Rsi,
    Rdi,
    Rbp,
    Rsp,
    R8,
    R9,
    R10,
    R11,
    R12,
    R13,
    R14,
    R15,
    Xmm(u8),
    St(u8),
}

impl Reg {
    /// Stable small index for bitset storage.
    pub fn index(self) -> u8 {
        match self {
            Reg::Rax => 0,
            Reg::Rbx => 1,
            Reg::Rcx => 2,
            Reg::Rdx => 3,
            Reg::Rsi => 4,
            Reg::Rdi => 5,
            Reg::Rbp => 6,
            Reg::Rsp => 7,
            Reg::R8 => 8,
            Reg::R9 => 9,
            Reg::R10 => 10,
            Reg::R11 => 11,
            Reg::R12 => 12,
            Reg::R13 => 13,
            Reg::R14 => 14,
            Reg::R15 => 15,
            Reg::Xmm(n) => 16 + n,
            Reg::St(n) => 32 + n,
        }
    }
}

/// Maps a token to its canonical register, if it names one.
pub fn canonical_register(tok: &str) -> Option<Reg> {
    let reg = match tok {
        "rax" | "eax" | "ax" | "al" | "ah" => Reg::Rax,
        "rbx" | "ebx" | "bx" | "bl" | "bh" => Reg::Rbx,
        "rcx" | "ecx" | "cx" | "cl" | "ch" => Reg::Rcx,
        "rdx" | "edx" | "dx" | "dl" | "dh" => Reg::Rdx,
        "rsi" | "esi" | "si" | "sil" => Reg::Rsi,
        "rdi" | "edi" | "di" | "dil" => Reg::Rdi,
        "rbp" | "ebp" | "bp" | "bpl" => Reg::Rbp,
        "rsp" | "esp" | "sp" | "spl" => Reg::Rsp,
        _ => {
            if let Some(rest) = tok.strip_prefix('r') {
                // r8..r15 with optional d/w/b width suffix
                let digits = rest
                    .strip_suffix(|c: char| matches!(c, 'd' | 'w' | 'b'))
                    .unwrap_or(rest);
                if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                    if let Ok(n) = digits.parse::<u8>() {
                        if (8..=15).contains(&n) {
                            return Some(match n {
                                8 => Reg::R8,
                                9 => Reg::R9,
                                10 => Reg::R10,
                                11 => Reg::R11,
                                12 => Reg::R12,
                                13 => Reg::R13,
                                14 => Reg::R14,
                                15 => Reg::R15,
                                _ => unreachable!(),
                            });
                        }
                    }
                }
                return None;
            }
            for (prefix, max) in [("xmm", 15u8), ("ymm", 15), ("zmm", 15)] {
                if let Some(num) = tok.strip_prefix(prefix) {
                    if let Ok(n) = num.parse::<u8>() {
                        if n <= max {
                            return Some(Reg::Xmm(n));
                        }
                    }
                }
            }
            if let Some(num) = tok.strip_prefix("st") {
                if let Ok(n) = num.parse::<u8>() {
                    if n <= 7 {
                        return Some(Reg::St(n));
                    }
                }
            }
            return None;
        }
    };
    Some(reg)
}

pub fn is_register(tok: &str) -> bool {
    canonical_register(tok).is_some()
}

/// Mnemonics that transfer control: calls, returns, jumps, loops, traps.
pub fn is_control_flow_mnemonic(m: &str) -> bool {
    if m == "call" || m == "jmp" || m.starts_with("ret") || m.starts_with("iret") {
        return true;
    }
    if m.starts_with("loop") {
        return true;
    }
    matches!(m, "syscall" | "sysret" | "int" | "int3" | "into")
        || (m.starts_with('j') && JCC.contains(&m))
}

const JCC: &[&str] = &[
    "ja", "jae", "jb", "jbe", "jc", "jcxz", "jecxz", "jrcxz", "je", "jg", "jge", "jl", "jle",
    "jna", "jnae", "jnb", "jnbe", "jnc", "jne", "jng", "jnge", "jnl", "jnle", "jno", "jnp", "jns",
    "jnz", "jo", "jp", "jpe", "jpo", "js", "jz",
];

/// Mnemonics that always manipulate the stack.
pub fn is_stack_mnemonic(m: &str) -> bool {
    matches!(
        m,
        "push" | "pop" | "pushf" | "pushfq" | "popf" | "popfq" | "enter" | "leave"
    )
}

/// True when any bracketed memory expression in the operand tokens
/// mentions the stack or frame pointer.
pub fn has_stack_based_memory(operands: &[String]) -> bool {
    let mut depth = 0usize;
    for tok in operands {
        match tok.as_str() {
            "[" => depth += 1,
            "]" => depth = depth.saturating_sub(1),
            t if depth > 0 => {
                if matches!(canonical_register(t), Some(Reg::Rsp) | Some(Reg::Rbp)) {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}
