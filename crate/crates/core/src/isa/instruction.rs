//! 32-bit instruction words.
//!
//! | opcode `[31:28]` | mnemonic     | operands                                              |
//! |------------------|--------------|-------------------------------------------------------|
//! | `0x0`            | NOP          |                                                       |
//! | `0x1`            | SET_LAYER    | kind `[27:26]`, precision `[25]`, sparse `[24]`, CIR `[23]`, D-RIR `[22]`, stride `[21:19]`, ReLU `[18]`, 16-bit out `[17]`, shift `[16:12]` (signed), id `[7:0]` |
//! | `0x2`            | SET_SHAPE_A  | Cin `[27:14]`, Cout `[13:0]`                          |
//! | `0x3`            | SET_SHAPE_B  | H `[27:14]`, W `[13:0]`                               |
//! | `0x4`            | SET_ADDR     | region `[27:25]`, byte address `[24:0]`               |
//! | `0x5`            | RUN_LAYER    | id `[7:0]`                                            |
//! | `0x6`            | SWAP_GB      |                                                       |
//! | `0x7`            | CMP_THRESH   |                                                       |
//! | `0x8`            | SET_THRESH   | signed threshold `[15:0]`                             |
//! | `0xF`            | HALT         |                                                       |
//!
//! Unused bits must be zero; decoding rejects words that set them.

use thiserror::Error;

use crate::mapper::DataflowFlags;
use crate::model::{Activation, LayerKind, OutBits, QuantMode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IsaError {
    #[error("field {field} = {value} does not fit {bits} bits")]
    FieldRange { field: &'static str, value: i64, bits: u32 },
    #[error("cannot decode {0:#010x}: {1}")]
    Decode(u32, &'static str),
    #[error("cannot parse `{0}`")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    WeightGb,
    IndexSram,
    ActA,
    ActB,
    Output,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::WeightGb, Region::IndexSram, Region::ActA, Region::ActB, Region::Output];

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(v: u32) -> Option<Self> {
        Region::ALL.get(v as usize).copied()
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Region::WeightGb => "WGB",
            Region::IndexSram => "IDX",
            Region::ActA => "ACTA",
            Region::ActB => "ACTB",
            Region::Output => "OUT",
        }
    }
}

/// Everything SET_LAYER configures for the next RUN_LAYER.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerConfig {
    pub layer_id: u8,
    pub kind: LayerKind,
    pub quant: QuantMode,
    pub flags: DataflowFlags,
    pub stride: u8,
    pub activation: Activation,
    pub out_bits: OutBits,
    pub shift: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Nop,
    SetLayer(LayerConfig),
    SetShapeA { cin: usize, cout: usize },
    SetShapeB { h: usize, w: usize },
    SetAddr { region: Region, addr: usize },
    RunLayer { layer_id: u8 },
    SwapGb,
    CmpThresh,
    SetThresh(i16),
    Halt,
}

pub mod opcode {
    pub const NOP: u32 = 0x0;
    pub const SET_LAYER: u32 = 0x1;
    pub const SET_SHAPE_A: u32 = 0x2;
    pub const SET_SHAPE_B: u32 = 0x3;
    pub const SET_ADDR: u32 = 0x4;
    pub const RUN_LAYER: u32 = 0x5;
    pub const SWAP_GB: u32 = 0x6;
    pub const CMP_THRESH: u32 = 0x7;
    pub const SET_THRESH: u32 = 0x8;
    pub const HALT: u32 = 0xF;
}

pub const SHAPE_BITS: u32 = 14;
pub const ADDR_BITS: u32 = 25;

fn unsigned(field: &'static str, value: usize, bits: u32) -> Result<u32, IsaError> {
    if (value as u64) < (1u64 << bits) {
        Ok(value as u32)
    } else {
        Err(IsaError::FieldRange { field, value: value as i64, bits })
    }
}

#[inline]
fn bits(word: u32, hi: u32, lo: u32) -> u32 {
    (word >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

impl Instruction {
    pub fn opcode(&self) -> u32 {
        use opcode::*;
        match self {
            Instruction::Nop => NOP,
            Instruction::SetLayer(_) => SET_LAYER,
            Instruction::SetShapeA { .. } => SET_SHAPE_A,
            Instruction::SetShapeB { .. } => SET_SHAPE_B,
            Instruction::SetAddr { .. } => SET_ADDR,
            Instruction::RunLayer { .. } => RUN_LAYER,
            Instruction::SwapGb => SWAP_GB,
            Instruction::CmpThresh => CMP_THRESH,
            Instruction::SetThresh(_) => SET_THRESH,
            Instruction::Halt => HALT,
        }
    }

    pub fn encode(&self) -> Result<u32, IsaError> {
        let operand = match *self {
            Instruction::Nop | Instruction::SwapGb | Instruction::CmpThresh | Instruction::Halt => 0,
            Instruction::SetLayer(c) => {
                if !(1..=7).contains(&c.stride) {
                    return Err(IsaError::FieldRange { field: "stride", value: c.stride as i64, bits: 3 });
                }
                if !(-16..=15).contains(&c.shift) {
                    return Err(IsaError::FieldRange { field: "shift", value: c.shift as i64, bits: 5 });
                }
                (c.kind.to_u8() as u32) << 26
                    | ((c.quant == QuantMode::Int8) as u32) << 25
                    | (c.flags.sparsity as u32) << 24
                    | (c.flags.cir as u32) << 23
                    | (c.flags.drir as u32) << 22
                    | (c.stride as u32) << 19
                    | ((c.activation == Activation::Relu) as u32) << 18
                    | ((c.out_bits == OutBits::B16) as u32) << 17
                    | ((c.shift as u32) & 0x1F) << 12
                    | c.layer_id as u32
            }
            Instruction::SetShapeA { cin, cout } => {
                unsigned("cin", cin, SHAPE_BITS)? << 14 | unsigned("cout", cout, SHAPE_BITS)?
            }
            Instruction::SetShapeB { h, w } => unsigned("h", h, SHAPE_BITS)? << 14 | unsigned("w", w, SHAPE_BITS)?,
            Instruction::SetAddr { region, addr } => region.code() << 25 | unsigned("addr", addr, ADDR_BITS)?,
            Instruction::RunLayer { layer_id } => layer_id as u32,
            Instruction::SetThresh(t) => t as u16 as u32,
        };
        Ok(self.opcode() << 28 | operand)
    }

    pub fn decode(word: u32) -> Result<Self, IsaError> {
        use opcode::*;
        let operand = word & 0x0FFF_FFFF;
        let reserved = |mask: u32, ins: Instruction| {
            if operand & mask != 0 {
                Err(IsaError::Decode(word, "reserved bits set"))
            } else {
                Ok(ins)
            }
        };
        match word >> 28 {
            NOP => reserved(0x0FFF_FFFF, Instruction::Nop),
            SWAP_GB => reserved(0x0FFF_FFFF, Instruction::SwapGb),
            CMP_THRESH => reserved(0x0FFF_FFFF, Instruction::CmpThresh),
            HALT => reserved(0x0FFF_FFFF, Instruction::Halt),
            SET_LAYER => {
                let stride = bits(word, 21, 19) as u8;
                if stride == 0 {
                    return Err(IsaError::Decode(word, "zero stride"));
                }
                let shift5 = bits(word, 16, 12) as u8;
                let shift = ((shift5 << 3) as i8) >> 3;
                let cfg = LayerConfig {
                    layer_id: bits(word, 7, 0) as u8,
                    kind: LayerKind::from_u8(bits(word, 27, 26) as u8).expect("two-bit kind"),
                    quant: if bits(word, 25, 25) == 1 { QuantMode::Int8 } else { QuantMode::Po2 },
                    flags: DataflowFlags {
                        sparsity: bits(word, 24, 24) == 1,
                        cir: bits(word, 23, 23) == 1,
                        drir: bits(word, 22, 22) == 1,
                    },
                    stride,
                    activation: if bits(word, 18, 18) == 1 { Activation::Relu } else { Activation::Identity },
                    out_bits: if bits(word, 17, 17) == 1 { OutBits::B16 } else { OutBits::B8 },
                    shift,
                };
                reserved(0xF00, Instruction::SetLayer(cfg))
            }
            SET_SHAPE_A => Ok(Instruction::SetShapeA { cin: bits(word, 27, 14) as usize, cout: bits(word, 13, 0) as usize }),
            SET_SHAPE_B => Ok(Instruction::SetShapeB { h: bits(word, 27, 14) as usize, w: bits(word, 13, 0) as usize }),
            SET_ADDR => {
                let region = Region::from_code(bits(word, 27, 25)).ok_or(IsaError::Decode(word, "unknown region"))?;
                Ok(Instruction::SetAddr { region, addr: bits(word, 24, 0) as usize })
            }
            RUN_LAYER => reserved(0x0FFF_FF00, Instruction::RunLayer { layer_id: bits(word, 7, 0) as u8 }),
            SET_THRESH => reserved(0x0FFF_0000, Instruction::SetThresh(bits(word, 15, 0) as u16 as i16)),
            _ => Err(IsaError::Decode(word, "unknown opcode")),
        }
    }
}

fn flag(b: bool) -> u8 {
    b as u8
}

impl std::fmt::Display for Instruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Instruction::Nop => write!(f, "NOP"),
            Instruction::SetLayer(c) => write!(
                f,
                "SET_LAYER id={} kind={} prec={} sparse={} cir={} drir={} stride={} act={} out={} shift={}",
                c.layer_id,
                c.kind.name(),
                match c.quant {
                    QuantMode::Po2 => "PO2",
                    QuantMode::Int8 => "INT8",
                },
                flag(c.flags.sparsity),
                flag(c.flags.cir),
                flag(c.flags.drir),
                c.stride,
                match c.activation {
                    Activation::Relu => "RELU",
                    Activation::Identity => "ID",
                },
                c.out_bits.bits(),
                c.shift
            ),
            Instruction::SetShapeA { cin, cout } => write!(f, "SET_SHAPE_A Cin={cin} Cout={cout}"),
            Instruction::SetShapeB { h, w } => write!(f, "SET_SHAPE_B H={h} W={w}"),
            Instruction::SetAddr { region, addr } => write!(f, "SET_ADDR region={} addr={addr:#08x}", region.mnemonic()),
            Instruction::RunLayer { layer_id } => write!(f, "RUN_LAYER id={layer_id}"),
            Instruction::SwapGb => write!(f, "SWAP_GB"),
            Instruction::CmpThresh => write!(f, "CMP_THRESH"),
            Instruction::SetThresh(t) => write!(f, "SET_THRESH {t}"),
            Instruction::Halt => write!(f, "HALT"),
        }
    }
}

/// One line of listing text for a word. Never fails.
pub fn disassemble_word(word: u32) -> String {
    match Instruction::decode(word) {
        Ok(ins) => ins.to_string(),
        Err(_) => format!(".word {word:#010x}"),
    }
}

/// Listing with one instruction per line.
pub fn disassemble(words: &[u32]) -> String {
    let mut out = String::new();
    for &w in words {
        out.push_str(&disassemble_word(w));
        out.push('\n');
    }
    out
}

fn parse_num(s: &str) -> Option<i64> {
    match s.strip_prefix("0x") {
        Some(hex) => i64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

/// Parses one listing line back to its word (inverse of [`disassemble_word`]).
pub fn parse_line(line: &str) -> Result<u32, IsaError> {
    let err = || IsaError::Parse(line.to_string());
    let mut parts = line.split_whitespace();
    let mnemonic = parts.next().ok_or_else(err)?;
    let fields: Vec<(&str, &str)> = parts.clone().filter_map(|p| p.split_once('=')).collect();
    let get = |k: &str| fields.iter().find(|(n, _)| *n == k).map(|(_, v)| *v).ok_or_else(err);
    let num = |k: &str| get(k).and_then(|v| parse_num(v).ok_or_else(err));
    let ins = match mnemonic {
        ".word" => {
            let v = parts.next().and_then(parse_num).ok_or_else(err)?;
            return u32::try_from(v).map_err(|_| err());
        }
        "NOP" => Instruction::Nop,
        "HALT" => Instruction::Halt,
        "SWAP_GB" => Instruction::SwapGb,
        "CMP_THRESH" => Instruction::CmpThresh,
        "SET_THRESH" => {
            let v = parts.next().and_then(parse_num).ok_or_else(err)?;
            Instruction::SetThresh(i16::try_from(v).map_err(|_| err())?)
        }
        "RUN_LAYER" => Instruction::RunLayer { layer_id: u8::try_from(num("id")?).map_err(|_| err())? },
        "SET_SHAPE_A" => Instruction::SetShapeA { cin: num("Cin")? as usize, cout: num("Cout")? as usize },
        "SET_SHAPE_B" => Instruction::SetShapeB { h: num("H")? as usize, w: num("W")? as usize },
        "SET_ADDR" => {
            let r = get("region")?;
            let region = Region::ALL.into_iter().find(|x| x.mnemonic() == r).ok_or_else(err)?;
            Instruction::SetAddr { region, addr: num("addr")? as usize }
        }
        "SET_LAYER" => {
            let kind = match get("kind")? {
                "CONV" => LayerKind::ConvNormal,
                "DW" => LayerKind::ConvDw,
                "PW" => LayerKind::ConvPw,
                "FC" => LayerKind::Fc,
                _ => return Err(err()),
            };
            let quant = match get("prec")? {
                "PO2" => QuantMode::Po2,
                "INT8" => QuantMode::Int8,
                _ => return Err(err()),
            };
            let activation = match get("act")? {
                "RELU" => Activation::Relu,
                "ID" => Activation::Identity,
                _ => return Err(err()),
            };
            let out_bits = match num("out")? {
                8 => OutBits::B8,
                16 => OutBits::B16,
                _ => return Err(err()),
            };
            Instruction::SetLayer(LayerConfig {
                layer_id: u8::try_from(num("id")?).map_err(|_| err())?,
                kind,
                quant,
                flags: DataflowFlags { sparsity: num("sparse")? != 0, cir: num("cir")? != 0, drir: num("drir")? != 0 },
                stride: u8::try_from(num("stride")?).map_err(|_| err())?,
                activation,
                out_bits,
                shift: i8::try_from(num("shift")?).map_err(|_| err())?,
            })
        }
        _ => return Err(err()),
    };
    ins.encode()
}

/// Parses a whole listing; blank lines and `#` comments are skipped.
pub fn parse_listing(text: &str) -> Result<Vec<u32>, IsaError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(parse_line)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_words() {
        assert_eq!(disassemble_word(0xF000_0000), "HALT");
        assert_eq!(disassemble_word(0x0000_0000), "NOP");
        assert_eq!(disassemble_word(0x9000_0000), ".word 0x90000000");
        assert_eq!(disassemble_word(0x0000_0001), ".word 0x00000001");
    }

    #[test]
    fn shape_a_fields() {
        let w = Instruction::SetShapeA { cin: 3, cout: 16 }.encode().unwrap();
        assert_eq!(w, 0x2000_0000 | 3 << 14 | 16);
        assert_eq!(disassemble_word(w), "SET_SHAPE_A Cin=3 Cout=16");
    }

    #[test]
    fn set_layer_bit_layout() {
        let c = LayerConfig {
            layer_id: 7,
            kind: LayerKind::ConvDw,
            quant: QuantMode::Po2,
            flags: DataflowFlags { sparsity: true, cir: true, drir: false },
            stride: 2,
            activation: Activation::Relu,
            out_bits: OutBits::B8,
            shift: -3,
        };
        let w = Instruction::SetLayer(c).encode().unwrap();
        assert_eq!(w >> 28, 1);
        assert_eq!(bits(w, 27, 26), 0b01);
        assert_eq!(bits(w, 25, 25), 0);
        assert_eq!(bits(w, 24, 22), 0b110);
        assert_eq!(bits(w, 7, 0), 7);
        assert_eq!(Instruction::decode(w).unwrap(), Instruction::SetLayer(c));
    }

    #[test]
    fn thresh_is_signed() {
        let w = Instruction::SetThresh(-2).encode().unwrap();
        assert_eq!(w, 0x8000_FFFE);
        assert_eq!(Instruction::decode(w).unwrap(), Instruction::SetThresh(-2));
    }

    #[test]
    fn range_errors() {
        assert!(matches!(
            Instruction::SetShapeA { cin: 1 << 14, cout: 1 }.encode(),
            Err(IsaError::FieldRange { field: "cin", .. })
        ));
        assert!(Instruction::SetAddr { region: Region::WeightGb, addr: 1 << 25 }.encode().is_err());
    }

    #[test]
    fn listing_parses_back() {
        let words = [
            0xF000_0000,
            Instruction::SetAddr { region: Region::ActB, addr: 0x1234 }.encode().unwrap(),
            0x9ABC_DEF0,
        ];
        assert_eq!(parse_listing(&disassemble(&words)).unwrap(), words);
    }
}
