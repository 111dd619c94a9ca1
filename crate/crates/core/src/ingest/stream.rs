//! Length-prefixed PCM16 chunk transport.
//!
//! Each chunk is a little-endian `u32` byte count followed by that many bytes
//! of little-endian PCM16, 16 kHz mono. A zero-length chunk or a clean EOF at
//! a chunk boundary ends the stream.

use std::io::{self, Read, Write};

use super::IngestError;

/// Upper bound on a single chunk, 60 s of 16 kHz PCM16.
const MAX_CHUNK_BYTES: u32 = 60 * 16_000 * 2;

/// Read one chunk. `Ok(None)` marks end of stream.
pub fn read_chunk<R: Read>(reader: &mut R) -> Result<Option<Vec<f64>>, IngestError> {
    let mut len_bytes = [0u8; 4];
    match read_full_or_eof(reader, &mut len_bytes)? {
        0 => return Ok(None),
        4 => {}
        n => return Err(IngestError::Decode(format!("truncated chunk header ({n} bytes)"))),
    }
    let len = u32::from_le_bytes(len_bytes);
    if len == 0 {
        return Ok(None);
    }
    if len % 2 != 0 || len > MAX_CHUNK_BYTES {
        return Err(IngestError::Decode(format!("invalid chunk length {len}")));
    }
    let mut payload = vec![0u8; len as usize];
    reader
        .read_exact(&mut payload)
        .map_err(|e| IngestError::Decode(format!("truncated chunk payload: {e}")))?;
    Ok(Some(
        payload
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
    ))
}

fn read_full_or_eof<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Write one chunk of PCM16 samples.
pub fn write_chunk<W: Write>(writer: &mut W, samples: &[i16]) -> io::Result<()> {
    writer.write_all(&((samples.len() * 2) as u32).to_le_bytes())?;
    for s in samples {
        writer.write_all(&s.to_le_bytes())?;
    }
    Ok(())
}

/// Iterator over the chunks of a reader.
pub struct ChunkReader<R> {
    inner: R,
    done: bool,
}

impl<R: Read> ChunkReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, done: false }
    }
}

impl<R: Read> Iterator for ChunkReader<R> {
    type Item = Result<Vec<f64>, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match read_chunk(&mut self.inner) {
            Ok(Some(chunk)) => Some(Ok(chunk)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_round_trip_and_terminate() {
        let mut wire = Vec::new();
        write_chunk(&mut wire, &[0, 16384, -32768]).unwrap();
        write_chunk(&mut wire, &[8192]).unwrap();
        let chunks: Vec<_> = ChunkReader::new(&wire[..]).collect::<Result<_, _>>().unwrap();
        assert_eq!(chunks, vec![vec![0.0, 0.5, -1.0], vec![0.25]]);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let mut wire = Vec::new();
        write_chunk(&mut wire, &[1, 2, 3]).unwrap();
        wire.truncate(wire.len() - 1);
        let mut it = ChunkReader::new(&wire[..]);
        assert!(matches!(it.next(), Some(Err(IngestError::Decode(_)))));
        assert!(it.next().is_none());
    }

    #[test]
    fn zero_length_chunk_ends_stream() {
        let mut wire = vec![0, 0, 0, 0];
        write_chunk(&mut wire, &[5]).unwrap();
        assert_eq!(ChunkReader::new(&wire[..]).count(), 0);
    }
}
