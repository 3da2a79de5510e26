//! Instruction set, assembler and disassembler.

mod assembler;
mod instruction;

pub use assembler::{
    assemble, read_program, write_program, AsmError, AssembleOptions, CompiledModel, MemoryImage, Program, Segment,
    PROGRAM_MAGIC,
};
pub use instruction::{
    disassemble, disassemble_word, opcode, parse_line, parse_listing, Instruction, IsaError, LayerConfig, Region,
    ADDR_BITS, SHAPE_BITS,
};
