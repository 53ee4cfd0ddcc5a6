//! Text listing of instruction streams: one instruction per line,
//! `OPCODE key=value ...` with every field present.
//!
//! ```text
//! VSETVL vd=0 vs1=0 vs2=0 addr=0x0 stride=8 ew=64 vl=64 lmul=8 scalar=-
//! VLE vd=8 vs1=0 vs2=0 addr=0x4000 stride=8 ew=64 vl=64 lmul=8 scalar=-
//! ```

use std::fmt::Write as _;

use super::VectorInstruction;
use crate::error::ProgramError;

pub fn to_listing(stream: &[VectorInstruction]) -> String {
    let mut out = String::new();
    for i in stream {
        let scalar = match i.scalar_operand {
            Some(s) => format!("{s:?}"),
            None => "-".to_string(),
        };
        writeln!(
            out,
            "{} vd={} vs1={} vs2={} addr={:#x} stride={} ew={} vl={} lmul={} scalar={}",
            i.opcode, i.vd, i.vs1, i.vs2, i.base_address, i.stride, i.element_width, i.vl, i.lmul, scalar
        )
        .unwrap();
    }
    out
}

pub fn parse_listing(text: &str) -> Result<Vec<VectorInstruction>, ProgramError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| ProgramError::Listing { line: idx + 1, msg };
        let mut tokens = line.split_whitespace();
        let opcode = tokens
            .next()
            .unwrap()
            .parse()
            .map_err(err)?;
        let mut ins = VectorInstruction::vsetvl(0, 64, 1);
        ins.opcode = opcode;
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{tok}`")))?;
            let bad = || err(format!("bad value `{value}` for `{key}`"));
            let int = |v: &str| v.parse::<usize>().map_err(|_| bad());
            match key {
                "vd" => ins.vd = int(value)?,
                "vs1" => ins.vs1 = int(value)?,
                "vs2" => ins.vs2 = int(value)?,
                "addr" => {
                    let hex = value.strip_prefix("0x").ok_or_else(bad)?;
                    ins.base_address = u64::from_str_radix(hex, 16).map_err(|_| bad())?;
                }
                "stride" => ins.stride = int(value)? as u64,
                "ew" => ins.element_width = int(value)? as u32,
                "vl" => ins.vl = int(value)?,
                "lmul" => ins.lmul = int(value)?,
                "scalar" => {
                    ins.scalar_operand = if value == "-" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad())?)
                    }
                }
                _ => return Err(err(format!("unknown field `{key}`"))),
            }
        }
        out.push(ins);
    }
    Ok(out)
}
