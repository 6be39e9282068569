//! Structure-blind byte mutation, used by the havoc ablation mode.
//!
//! One call applies a single havoc round: a small random number of raw byte
//! edits with no knowledge of the input format. There is no splicing with
//! other inputs and no dictionary of tokens; the point of the mode is to
//! measure what the grammar layer buys.

use rand::Rng;

const MAX_EDITS: usize = 8;
const MAX_SPAN: usize = 4;

/// Applies one round of random byte edits to `input`.
pub fn havoc_mutate(input: &[u8], rng: &mut impl Rng) -> Vec<u8> {
    let mut out = input.to_vec();
    let edits = rng.random_range(1..=MAX_EDITS);
    for _ in 0..edits {
        // inserting is the only edit an empty buffer supports
        let op = if out.is_empty() {
            4
        } else {
            rng.random_range(0..5)
        };
        match op {
            // flip one bit
            0 => {
                let i = rng.random_range(0..out.len());
                out[i] ^= 1 << rng.random_range(0..8);
            }
            // overwrite one byte
            1 => {
                let i = rng.random_range(0..out.len());
                out[i] = rng.random_range(0..=255u32) as u8;
            }
            // delete a short span
            2 => {
                let i = rng.random_range(0..out.len());
                let len = rng.random_range(1..=MAX_SPAN).min(out.len() - i);
                out.drain(i..i + len);
            }
            // duplicate a short span in place
            3 => {
                let i = rng.random_range(0..out.len());
                let len = rng.random_range(1..=MAX_SPAN).min(out.len() - i);
                let span: Vec<u8> = out[i..i + len].to_vec();
                out.splice(i..i, span);
            }
            // insert a random byte
            _ => {
                let i = rng.random_range(0..=out.len());
                out.insert(i, rng.random_range(0..=255u32) as u8);
            }
        }
    }
    out
}
