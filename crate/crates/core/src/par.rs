//! Deterministic parallel Monte Carlo.
//!
//! Work is split into a fixed number of chunks, each with its own generator
//! seeded from the caller's generator. Results are returned in chunk order, so
//! the output depends on the seed only and not on the number of threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of independent streams a Monte Carlo run is split into.
pub const CHUNKS: usize = 16;

/// Runs `f(rng, count)` on [`CHUNKS`] chunks whose counts add up to `total`.
pub fn run_chunks<T, R, F>(rng: &mut R, total: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    R: Rng + ?Sized,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let seeds: Vec<u64> = (0..CHUNKS).map(|_| rng.random()).collect();
    let counts: Vec<usize> = (0..CHUNKS).map(|i| total / CHUNKS + usize::from(i < total % CHUNKS)).collect();
    let job = |i: usize| {
        let mut r = ChaCha8Rng::seed_from_u64(seeds[i]);
        f(&mut r, counts[i])
    };
    let threads = threads.clamp(1, CHUNKS);
    if threads == 1 {
        return (0..CHUNKS).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..CHUNKS).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= CHUNKS {
                    break;
                }
                let out = job(i);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
            });
        }
    });
    slots.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().map(|x| x.expect("every chunk ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_of_thread_count() {
        let run = |threads| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            run_chunks(&mut rng, 1001, threads, |r, n| (0..n).map(|_| r.random::<u32>() as u64).sum::<u64>())
        };
        assert_eq!(run(1), run(4));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let counts = run_chunks(&mut rng, 1001, 1, |_, n| n);
        assert_eq!(counts.iter().sum::<usize>(), 1001);
    }
}
