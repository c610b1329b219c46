//! Instruction tokenization and open-set token symbolization.
//!
//! Disassembler-named artifacts (`sub_43B9D0`, `loc_4008`, `qword_601060`,
//! string literals, raw immediates) form an open token set that would blow
//! up any fixed vocabulary. Symbolization rewrites them into a closed set:
//! under the strict policy each name class collapses to a single token;
//! under the loose policy the class keeps a small suffix (address value
//! mod N, or the string length) so data-flow identity survives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CgError, Result};
use crate::slicer::Slice;
use crate::x86;

/// Reserved padding token, always index 0.
pub const PAD_TOKEN: &str = "<pad>";
/// Reserved out-of-vocabulary token, always index 1.
pub const UNK_TOKEN: &str = "<unk>";

/// Splits one disassembled instruction into mnemonic/register/punctuation/
/// literal tokens. Lossless modulo whitespace: rejoining the tokens (with
/// no separators) reproduces the instruction text minus spaces.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() || matches!(ch, '_' | '.' | '@' | '$' | '?') {
            word.push(ch);
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Intensity of symbolization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Loose,
}

/// Symbolization policy: strict collapses each name class to one token;
/// loose appends `value mod N` (or the string length) to keep a bounded
/// amount of identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolizationPolicy {
    pub mode: Mode,
    #[serde(rename = "N")]
    pub modulus_n: u64,
}

impl SymbolizationPolicy {
    pub fn new(mode: Mode, modulus_n: u64) -> Result<Self> {
        if modulus_n < 1 {
            return Err(CgError::Data("symbolization modulus must be >= 1".into()));
        }
        Ok(Self { mode, modulus_n })
    }

    pub fn strict() -> Self {
        Self {
            mode: Mode::Strict,
            modulus_n: 10,
        }
    }

    pub fn loose(modulus_n: u64) -> Self {
        Self {
            mode: Mode::Loose,
            modulus_n,
        }
    }
}

impl Default for SymbolizationPolicy {
    fn default() -> Self {
        Self::loose(10)
    }
}

/// Name classes keyed by disassembler prefix: (prefix, strict base,
/// loose stem). The loose stem differs from the strict base only for the
/// `*word_` family, which keeps its width variant under loose.
const NAME_CLASSES: &[(&str, &str, &str)] = &[
    ("xmmword_", "word", "xmmword"),
    ("ymmword_", "word", "ymmword"),
    ("struct_", "struct", "struct"),
    ("tword_", "word", "tword"),
    ("oword_", "word", "oword"),
    ("dword_", "word", "dword"),
    ("qword_", "word", "qword"),
    ("word_", "word", "word"),
    ("byte_", "byte", "byte"),
    ("loc_", "loc", "loc"),
    ("arg_", "arg", "arg"),
    ("sub_", "fun", "fun"),
    ("var_", "var", "var"),
    ("unk_", "unk", "unk"),
    ("off_", "offset", "offset"),
    ("flt_", "flt", "flt"),
    ("dbl_", "dbl", "dbl"),
];

const STRING_PREFIX: &str = "a_";

/// Value of a bare immediate token: `0x1f`, `31`, or MASM-style `1fh`.
pub fn numeric_literal_value(tok: &str) -> Option<u64> {
    if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        return u64::from_str_radix(hex, 16).ok();
    }
    let bytes = tok.as_bytes();
    if bytes.is_empty() || !bytes[0].is_ascii_digit() {
        return None;
    }
    if let Some(hex) = tok.strip_suffix(['h', 'H']) {
        return u64::from_str_radix(hex, 16).ok();
    }
    tok.parse::<u64>().ok()
}

/// Address encoded in a disassembler name (`sub_401000` → 0x401000).
pub fn named_constant_value(tok: &str) -> Option<u64> {
    for (prefix, _, _) in NAME_CLASSES {
        if let Some(suffix) = tok.strip_prefix(prefix) {
            return u64::from_str_radix(suffix, 16).ok();
        }
    }
    None
}

/// Rewrites one token under the policy. Name classes map to their strict
/// base or loose `stem + value % N` (strings use `str + length`); bare
/// immediates map to `num`; everything else passes through unchanged.
pub fn symbolize_token(tok: &str, policy: &SymbolizationPolicy) -> String {
    for (prefix, strict_base, loose_stem) in NAME_CLASSES {
        if let Some(suffix) = tok.strip_prefix(prefix) {
            return match (policy.mode, u64::from_str_radix(suffix, 16)) {
                (Mode::Strict, _) => (*strict_base).to_string(),
                (Mode::Loose, Ok(value)) => format!("{loose_stem}{}", value % policy.modulus_n),
                // Names without a hex suffix fall back to the strict base
                // so the vocabulary stays closed.
                (Mode::Loose, Err(_)) => (*strict_base).to_string(),
            };
        }
    }
    if let Some(content) = tok.strip_prefix(STRING_PREFIX) {
        return match policy.mode {
            Mode::Strict => "str".to_string(),
            Mode::Loose => format!("str{}", content.len()),
        };
    }
    if numeric_literal_value(tok).is_some() {
        return "num".to_string();
    }
    tok.to_string()
}

/// Strict coarsening of a symbolized token: the strict-mode symbol that
/// the same input token would have produced.
pub fn strict_of_symbol(sym: &str) -> String {
    let stems: &[(&str, &str)] = &[
        ("xmmword", "word"),
        ("ymmword", "word"),
        ("struct", "struct"),
        ("offset", "offset"),
        ("tword", "word"),
        ("oword", "word"),
        ("dword", "word"),
        ("qword", "word"),
        ("word", "word"),
        ("byte", "byte"),
        ("loc", "loc"),
        ("arg", "arg"),
        ("fun", "fun"),
        ("var", "var"),
        ("unk", "unk"),
        ("flt", "flt"),
        ("dbl", "dbl"),
        ("str", "str"),
    ];
    for (stem, strict) in stems {
        if let Some(rest) = sym.strip_prefix(stem) {
            if rest.bytes().all(|b| b.is_ascii_digit()) {
                return (*strict).to_string();
            }
        }
    }
    sym.to_string()
}

/// Symbolizes a token under the function class, used for direct-call
/// target operands regardless of how the target is spelled.
fn symbolize_call_target(tok: &str, policy: &SymbolizationPolicy) -> String {
    let value = numeric_literal_value(tok).or_else(|| named_constant_value(tok));
    match (policy.mode, value) {
        (Mode::Loose, Some(v)) => format!("fun{}", v % policy.modulus_n),
        // Unresolvable named targets (imports, plain labels) collapse to
        // the bare class token under both policies.
        _ => "fun".to_string(),
    }
}

/// Token-wise symbolization of a slice. Single-token operands of direct
/// `call` instructions are rewritten under the function class; register
/// and memory call operands (indirect calls) are left alone.
pub fn symbolize_slice(s: &Slice, policy: &SymbolizationPolicy) -> Slice {
    let mut out_tokens = Vec::with_capacity(s.tokens.len());
    let mut pos = 0usize;
    for &span in &s.token_spans {
        let insn = &s.tokens[pos..pos + span];
        let is_direct_call =
            span == 2 && insn[0] == "call" && !x86::is_register(&insn[1]) && insn[1] != "[";
        for (i, tok) in insn.iter().enumerate() {
            if is_direct_call && i == 1 {
                out_tokens.push(symbolize_call_target(tok, policy));
            } else {
                out_tokens.push(symbolize_token(tok, policy));
            }
        }
        pos += span;
    }
    Slice {
        origin: s.origin,
        bin: s.bin.clone(),
        tokens: out_tokens,
        kept_addrs: s.kept_addrs.clone(),
        token_spans: s.token_spans.clone(),
    }
}

/// Closed token set with dense indices. Index 0 is PAD, index 1 is UNK,
/// and the remaining tokens are assigned lexicographically, so vocabulary
/// construction is independent of corpus order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocabulary {
    pub policy: SymbolizationPolicy,
    pub tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;

    /// Builds the vocabulary from symbolized token sequences.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], policy: SymbolizationPolicy) -> Result<Self> {
        if corpus.is_empty() {
            return Err(CgError::Data("vocabulary corpus is empty".into()));
        }
        let mut set: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
        for seq in corpus {
            for tok in seq {
                set.insert(tok.as_ref().to_string());
            }
        }
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(set);
        let mut vocab = Self {
            policy,
            tokens,
            index: BTreeMap::new(),
        };
        vocab.rebuild_index();
        Ok(vocab)
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Dense index of a symbolized token; unknown tokens map to UNK.
    pub fn index_of(&self, tok: &str) -> usize {
        self.index.get(tok).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, tok: &str) -> bool {
        self.index.contains_key(tok)
    }

    /// Content hash binding downstream models to this vocabulary.
    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.policy).expect("policy serializes"));
        for tok in &self.tokens {
            hasher.update(tok.as_bytes());
            hasher.update([0u8]);
        }
        format!("{:x}", hasher.finalize())
    }
}

/// Versioned vocabulary file.
#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    policy: SymbolizationPolicy,
    tokens: Vec<String>,
}

pub fn save_vocabulary(path: &std::path::Path, vocab: &Vocabulary) -> Result<()> {
    crate::io::write_json_file(
        path,
        &VocabFile {
            version: 1,
            policy: vocab.policy,
            tokens: vocab.tokens.clone(),
        },
    )
}

pub fn load_vocabulary(path: &std::path::Path) -> Result<Vocabulary> {
    let file: VocabFile = crate::io::read_json_file(path)?;
    if file.version != 1 {
        return Err(CgError::Mismatch(format!(
            "unsupported vocabulary version {}",
            file.version
        )));
    }
    let mut vocab = Vocabulary {
        policy: file.policy,
        tokens: file.tokens,
        index: BTreeMap::new(),
    };
    vocab.rebuild_index();
    Ok(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicer::{Slice, SliceOrigin};

    fn loose10() -> SymbolizationPolicy {
        SymbolizationPolicy::loose(10)
    }

    #[test]
    fn tokenize_memory_operand() {
        assert_eq!(
            tokenize("mov rax, [rdi]"),
            vec!["mov", "rax", ",", "[", "rdi", "]"]
        );
    }

    #[test]
    fn tokenize_single_mnemonic() {
        assert_eq!(tokenize("ret"), vec!["ret"]);
    }

    #[test]
    fn tokenize_displacement() {
        assert_eq!(
            tokenize("lea rsi, [rbp-0x20]"),
            vec!["lea", "rsi", ",", "[", "rbp", "-", "0x20", "]"]
        );
    }

    #[test]
    fn tokenize_is_lossless_modulo_whitespace() {
        for text in [
            "mov qword ptr [rsp+0x10], rdi",
            "call qword ptr [rax+rcx*8]",
            "movsd xmm0, dbl_601110",
        ] {
            let rejoined: String = tokenize(text).concat();
            let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            assert_eq!(rejoined, stripped);
        }
    }

    #[test]
    fn symbolize_function_name() {
        assert_eq!(symbolize_token("sub_43B9D0", &loose10()), "fun0");
        assert_eq!(
            symbolize_token("sub_43B9D0", &SymbolizationPolicy::strict()),
            "fun"
        );
    }

    #[test]
    fn symbolize_string_by_length() {
        assert_eq!(symbolize_token("a_Hello", &loose10()), "str5");
        assert_eq!(
            symbolize_token("a_Hello", &SymbolizationPolicy::strict()),
            "str"
        );
    }

    #[test]
    fn symbolize_loc_uses_value_mod_n() {
        // 0x4008 = 16392, 16392 % 10 = 2
        assert_eq!(symbolize_token("loc_4008", &loose10()), "loc2");
    }

    #[test]
    fn symbolize_word_family() {
        // 0x601060 = 6295648, % 10 = 8
        assert_eq!(symbolize_token("qword_601060", &loose10()), "qword8");
        assert_eq!(
            symbolize_token("qword_601060", &SymbolizationPolicy::strict()),
            "word"
        );
    }

    #[test]
    fn immediates_collapse_to_num() {
        for tok in ["0x20", "20h", "31", "0ABCDh"] {
            assert_eq!(symbolize_token(tok, &loose10()), "num");
            assert_eq!(symbolize_token(tok, &SymbolizationPolicy::strict()), "num");
        }
    }

    #[test]
    fn registers_and_mnemonics_pass_through() {
        for tok in ["mov", "rax", ",", "[", "]", "r8", "xmm0", "ptr"] {
            assert_eq!(symbolize_token(tok, &loose10()), tok);
        }
    }

    #[test]
    fn non_hex_suffix_falls_back_to_strict_base() {
        assert_eq!(symbolize_token("var_s8", &loose10()), "var");
        assert_eq!(symbolize_token("var_s8", &SymbolizationPolicy::strict()), "var");
    }

    #[test]
    fn strict_is_a_coarsening_of_loose() {
        let tokens = [
            "sub_43B9D0",
            "loc_4008",
            "qword_601060",
            "a_Hello",
            "var_10",
            "off_601080",
            "0x20",
            "mov",
            "r8",
            "xmm0",
        ];
        let strict = SymbolizationPolicy::strict();
        for tok in tokens {
            let loose_sym = symbolize_token(tok, &loose10());
            assert_eq!(
                strict_of_symbol(&loose_sym),
                symbolize_token(tok, &strict),
                "token {tok}"
            );
        }
    }

    fn call_slice(tokens: &[&str], spans: &[usize]) -> Slice {
        Slice {
            origin: SliceOrigin::Callsite(0x16),
            bin: "b".into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            kept_addrs: (0..spans.len() as u64).collect(),
            token_spans: spans.to_vec(),
        }
    }

    #[test]
    fn dcall_operand_rewritten_as_function() {
        let s = call_slice(&["call", "sub_401000"], &[2]);
        let out = symbolize_slice(&s, &loose10());
        assert_eq!(out.tokens, vec!["call", "fun0"]);

        let s = call_slice(&["call", "0x401000"], &[2]);
        let out = symbolize_slice(&s, &loose10());
        assert_eq!(out.tokens, vec!["call", "fun0"]);
    }

    #[test]
    fn indirect_call_operand_left_alone() {
        let s = call_slice(&["call", "rax"], &[2]);
        let out = symbolize_slice(&s, &loose10());
        assert_eq!(out.tokens, vec!["call", "rax"]);

        let s = call_slice(&["call", "qword", "ptr", "[", "rax", "]"], &[6]);
        let out = symbolize_slice(&s, &loose10());
        assert_eq!(out.tokens, vec!["call", "qword", "ptr", "[", "rax", "]"]);
    }

    #[test]
    fn named_import_target_collapses_to_fun() {
        let s = call_slice(&["call", "memcpy"], &[2]);
        assert_eq!(symbolize_slice(&s, &loose10()).tokens, vec!["call", "fun"]);
    }

    #[test]
    fn symbolize_slice_empty_and_idempotent() {
        let empty = call_slice(&[], &[]);
        assert!(symbolize_slice(&empty, &loose10()).tokens.is_empty());

        let s = call_slice(
            &["mov", "rdi", ",", "0x5", "call", "sub_401000"],
            &[4, 2],
        );
        let once = symbolize_slice(&s, &loose10());
        let twice = symbolize_slice(&once, &loose10());
        assert_eq!(once.tokens, twice.tokens);
    }

    #[test]
    fn vocabulary_small_corpus() {
        let corpus = vec![vec!["mov".to_string(), "rax".to_string()]];
        let v = Vocabulary::build(&corpus, loose10()).unwrap();
        assert_eq!(v.size(), 4);
        assert_eq!(v.index_of(PAD_TOKEN), 0);
        assert_eq!(v.index_of(UNK_TOKEN), 1);
        assert_eq!(v.index_of("mov"), 2);
        assert_eq!(v.index_of("rax"), 3);
        assert_eq!(v.index_of("nope"), Vocabulary::UNK);
    }

    #[test]
    fn vocabulary_order_independent() {
        let a = Vocabulary::build(
            &[vec!["b".to_string()], vec!["a".to_string(), "c".to_string()]],
            loose10(),
        )
        .unwrap();
        let b = Vocabulary::build(
            &[vec!["c".to_string(), "a".to_string()], vec!["b".to_string()]],
            loose10(),
        )
        .unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.sha256(), b.sha256());
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let v = Vocabulary::build(&[vec!["mov".to_string()]], loose10()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        save_vocabulary(&path, &v).unwrap();
        let loaded = load_vocabulary(&path).unwrap();
        assert_eq!(loaded.tokens, v.tokens);
        assert_eq!(loaded.sha256(), v.sha256());
        assert_eq!(loaded.index_of("mov"), v.index_of("mov"));
    }
}
