//! Child-process denoiser speaking a fixed binary protocol over stdin/stdout.
//!
//! Every message (request and response) is a 32-byte little-endian header
//! followed by `H·W·C` f64 values:
//!
//! | offset | size | field                  |
//! |--------|------|------------------------|
//! | 0      | 4    | magic `PMDN`           |
//! | 4      | 4    | u32 height             |
//! | 8      | 4    | u32 width              |
//! | 12     | 4    | u32 channels           |
//! | 16     | 8    | f64 sigma              |
//! | 24     | 8    | reserved, zero         |

use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::grid::{Field, Shape};

use super::Denoiser;

pub const MAGIC: [u8; 4] = *b"PMDN";
pub const HEADER_LEN: usize = 32;

pub fn write_message(w: &mut impl Write, field: &Field, sigma: f64) -> Result<()> {
    let s = field.shape();
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..8].copy_from_slice(&dim(s.height)?.to_le_bytes());
    header[8..12].copy_from_slice(&dim(s.width)?.to_le_bytes());
    header[12..16].copy_from_slice(&dim(s.channels)?.to_le_bytes());
    header[16..24].copy_from_slice(&sigma.to_le_bytes());
    w.write_all(&header)?;
    let mut payload = Vec::with_capacity(field.len() * 8);
    for v in field.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

fn dim(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::shape(format!("dimension {n} does not fit in u32")))
}

/// Reads one message; `Ok(None)` on clean end-of-stream before a header.
pub fn read_message(r: &mut impl Read) -> Result<Option<(Field, f64)>> {
    let mut header = [0u8; HEADER_LEN];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    if header[0..4] != MAGIC {
        return Err(Error::Parse { offset: 0, message: "bad magic, expected PMDN".into() });
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let shape = Shape::new(u32_at(4), u32_at(8), u32_at(12))
        .map_err(|e| Error::Parse { offset: 4, message: e.to_string() })?;
    let sigma = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let mut payload = vec![0u8; shape.len() * 8];
    r.read_exact(&mut payload)?;
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let field = Field::new(shape, data).map_err(|e| Error::Parse { offset: HEADER_LEN, message: e.to_string() })?;
    Ok(Some((field, sigma)))
}

/// Server loop: answers requests from `input` with `denoiser` until EOF.
pub fn serve(input: impl Read, output: impl Write, denoiser: &dyn Denoiser) -> Result<usize> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    let mut served = 0;
    while let Some((x, sigma)) = read_message(&mut input)? {
        let out = denoiser.denoise(&x, sigma)?;
        write_message(&mut output, &out, sigma)?;
        served += 1;
    }
    Ok(served)
}

struct ChildIo {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// A denoiser served by a child process. Calls are serialized through a mutex.
pub struct ExternalDenoiser {
    io: Mutex<ChildIo>,
    program: String,
}

impl ExternalDenoiser {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { io: Mutex::new(ChildIo { child, stdin, stdout }), program: program.to_string() })
    }
}

impl Denoiser for ExternalDenoiser {
    fn denoise(&self, x: &Field, sigma: f64) -> Result<Field> {
        let mut io = self.io.lock().map_err(|_| Error::Denoiser("external denoiser lock poisoned".into()))?;
        let io = &mut *io;
        write_message(&mut io.stdin, x, sigma)?;
        match read_message(&mut io.stdout)? {
            Some((out, _)) => Ok(out),
            None => Err(Error::Denoiser(format!("{} closed its output", self.program))),
        }
    }
}

impl Drop for ExternalDenoiser {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}
