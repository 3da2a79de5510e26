use serde::{Deserialize, Serialize};

use super::{Fault, FaultCause};
use crate::isa::Region;

/// On-chip memory capacities in bytes. The six data memories total 104 KB.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryConfig {
    pub weight_gb: usize,
    pub index_sram: usize,
    pub act_gb_a: usize,
    pub act_gb_b: usize,
    pub in_act_buf: usize,
    pub out_act_buf: usize,
    /// Instruction SRAM depth in 32-bit words.
    pub instruction_words: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            weight_gb: 65_536,
            index_sram: 8_192,
            act_gb_a: 14_336,
            act_gb_b: 14_336,
            in_act_buf: 2_048,
            out_act_buf: 2_048,
            instruction_words: 4_096,
        }
    }
}

impl MemoryConfig {
    pub fn total_data_bytes(&self) -> usize {
        self.weight_gb + self.index_sram + self.act_gb_a + self.act_gb_b + self.in_act_buf + self.out_act_buf
    }

    pub fn capacity(&self, region: Region) -> usize {
        match region {
            Region::WeightGb => self.weight_gb,
            Region::IndexSram => self.index_sram,
            Region::ActA => self.act_gb_a,
            Region::ActB => self.act_gb_b,
            Region::Output => self.out_act_buf,
        }
    }
}

/// Byte arrays backing each addressable region.
#[derive(Clone, Debug)]
pub struct Memory {
    regions: [Vec<u8>; 5],
}

impl Memory {
    pub fn new(cfg: &MemoryConfig) -> Self {
        Memory { regions: Region::ALL.map(|r| vec![0u8; cfg.capacity(r)]) }
    }

    fn range(&self, region: Region, addr: usize, len: usize, pc: usize) -> Result<std::ops::Range<usize>, Fault> {
        let cap = self.regions[region as usize].len();
        match addr.checked_add(len) {
            Some(end) if end <= cap => Ok(addr..end),
            _ => Err(Fault::new(pc, FaultCause::CapacityOverflow { region, addr, len, capacity: cap })),
        }
    }

    pub fn read(&self, region: Region, addr: usize, len: usize, pc: usize) -> Result<&[u8], Fault> {
        let r = self.range(region, addr, len, pc)?;
        Ok(&self.regions[region as usize][r])
    }

    pub fn write(&mut self, region: Region, addr: usize, bytes: &[u8], pc: usize) -> Result<(), Fault> {
        let r = self.range(region, addr, bytes.len(), pc)?;
        self.regions[region as usize][r].copy_from_slice(bytes);
        Ok(())
    }
}
