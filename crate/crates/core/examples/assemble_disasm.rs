//! Compiles the detector, prints its listing and checks that the listing
//! assembles back to the same words.

use eg2c::isa::{assemble, disassemble, parse_listing, read_program, write_program, AssembleOptions};
use eg2c::mapper::EngineConfig;
use eg2c::model::build_reference_models;
use eg2c::sim::MemoryConfig;

fn main() {
    let refs = build_reference_models();
    let c = assemble(&refs.detector, &EngineConfig::default(), &MemoryConfig::default(), &AssembleOptions::default()).unwrap();
    let listing = disassemble(c.program.words());
    print!("{listing}");
    assert_eq!(parse_listing(&listing).unwrap(), c.program.words());

    let file = write_program(&c.program);
    assert_eq!(read_program(&file).unwrap().words(), c.program.words());
    println!("\n{} words, {} bytes on disk", c.program.words().len(), file.len());
    for seg in &c.image.segments {
        println!("segment {:?} @ {:#x}: {} bytes", seg.region, seg.addr, seg.bytes.len());
    }
}
