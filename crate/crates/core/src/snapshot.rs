//! Versioned binary network snapshots.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset          | size          | content                                  |
//! |-----------------|---------------|------------------------------------------|
//! | 0               | 6             | magic `b"NSTDP1"` (format version 1)     |
//! | 6               | 4 x u32       | `n_in`, `n_out`, `group_size`, `n_groups`|
//! | 22              | 8 x n_in*n_out| weights, f64, row-major (row = input)    |
//! | 22 + 8*W        | 8             | master seed, u64                         |
//! | 30 + 8*W        | 32            | ChaCha8 key of the list-selection stream |
//! | 62 + 8*W        | 8             | ChaCha stream number, u64                |
//! | 70 + 8*W        | 16            | ChaCha word position, u128               |
//!
//! Total size is `86 + 8 * n_in * n_out` bytes. Simulation parameters, traces
//! and membrane states are not stored; a loaded network starts at rest with
//! empty traces.

use std::io::{Cursor, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::network::{NetworkParams, NetworkState, Topology};

pub const MAGIC: &[u8; 6] = b"NSTDP1";
const MAGIC_FAMILY: &[u8; 5] = b"NSTDP";
const HEADER_LEN: usize = 6 + 16;
const RNG_LEN: usize = 8 + 32 + 8 + 16;

/// Decoded snapshot contents, independent of simulation parameters.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub topology: Topology,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub rng: ChaCha8Rng,
}

impl Snapshot {
    pub fn of(net: &NetworkState) -> Self {
        Self {
            topology: net.topology,
            weights: net.weights.clone(),
            seed: net.seed,
            rng: net.rng.clone(),
        }
    }

    pub fn into_network(self, params: NetworkParams) -> Result<NetworkState> {
        params.validate()?;
        Ok(NetworkState::with_weights(self.topology, params, self.weights, self.seed, self.rng))
    }

    pub fn encoded_len(topology: &Topology) -> usize {
        HEADER_LEN + 8 * topology.n_in * topology.n_out + RNG_LEN
    }
}

pub fn write<W: Write>(out: &mut W, net: &NetworkState) -> Result<()> {
    let t = &net.topology;
    out.write_all(MAGIC)?;
    for d in [t.n_in, t.n_out, t.group_size, t.n_groups] {
        out.write_u32::<LittleEndian>(d as u32)?;
    }
    for &w in &net.weights {
        out.write_f64::<LittleEndian>(w)?;
    }
    out.write_u64::<LittleEndian>(net.seed)?;
    out.write_all(&net.rng.get_seed())?;
    out.write_u64::<LittleEndian>(net.rng.get_stream())?;
    out.write_u128::<LittleEndian>(net.rng.get_word_pos())?;
    Ok(())
}

pub fn to_bytes(net: &NetworkState) -> Vec<u8> {
    let mut buf = Vec::with_capacity(Snapshot::encoded_len(&net.topology));
    write(&mut buf, net).expect("writing to a Vec cannot fail");
    buf
}

pub fn parse(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Snapshot(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..6] != MAGIC {
        if &bytes[..5] == MAGIC_FAMILY {
            return Err(Error::Snapshot(format!(
                "unsupported format version {:?} (expected 1)",
                bytes[5] as char
            )));
        }
        return Err(Error::Snapshot("bad magic, not a network snapshot".into()));
    }
    let mut cur = Cursor::new(&bytes[6..]);
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = cur.read_u32::<LittleEndian>()? as usize;
    }
    let topology = Topology {
        n_in: dims[0],
        n_out: dims[1],
        group_size: dims[2],
        n_groups: dims[3],
    };
    topology.validate()?;
    let expected = Snapshot::encoded_len(&topology);
    if bytes.len() != expected {
        return Err(Error::Snapshot(format!(
            "expected {expected} bytes for {}x{} weights, found {}",
            topology.n_in,
            topology.n_out,
            bytes.len()
        )));
    }
    let mut weights = vec![0.0; topology.n_in * topology.n_out];
    cur.read_f64_into::<LittleEndian>(&mut weights)?;
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Snapshot("non-finite weight".into()));
    }
    let seed = cur.read_u64::<LittleEndian>()?;
    let mut key = [0u8; 32];
    cur.read_exact(&mut key)?;
    let stream = cur.read_u64::<LittleEndian>()?;
    let word_pos = cur.read_u128::<LittleEndian>()?;
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(Snapshot {
        topology,
        weights,
        seed,
        rng,
    })
}
