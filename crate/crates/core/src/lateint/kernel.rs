use std::sync::OnceLock;

use super::{dot, maxsim_rows};
use crate::registry::Registry;

pub const DEFAULT_KERNEL: &str = "blocked";

/// A MaxSim kernel scoring one query prefix against a contiguous run of
/// candidates.
///
/// `query` is `r_q × dim`; `candidates` holds `out.len()` candidates of
/// `r_c × dim` each. Implementations must score every candidate from its own
/// rows only, so shard boundaries never change a result.
pub trait ScoringKernel: Send + Sync {
    fn name(&self) -> &'static str;

    fn score_candidates(&self, query: &[f32], candidates: &[f32], r_c: usize, dim: usize, out: &mut [f32]);
}

/// Straight double loop; bit-identical to [`super::maxsim`].
#[derive(Debug, Default, Clone, Copy)]
pub struct NaiveKernel;

impl ScoringKernel for NaiveKernel {
    fn name(&self) -> &'static str {
        "naive"
    }

    fn score_candidates(&self, query: &[f32], candidates: &[f32], r_c: usize, dim: usize, out: &mut [f32]) {
        let stride = r_c * dim;
        for (slot, cand) in out.iter_mut().zip(candidates.chunks_exact(stride)) {
            *slot = maxsim_rows(query, cand, dim);
        }
    }
}

const LANES: usize = 8;
const ROWS: usize = 4;

/// Register-blocked kernel: each query row is streamed against four candidate
/// rows at once with eight-lane partial sums.
#[derive(Debug, Default, Clone, Copy)]
pub struct BlockedKernel;

#[inline]
fn hsum(lanes: &[f32; LANES]) -> f32 {
    let a = (lanes[0] + lanes[4]) + (lanes[1] + lanes[5]);
    let b = (lanes[2] + lanes[6]) + (lanes[3] + lanes[7]);
    a + b
}

#[inline]
fn dot_lanes(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    let split = a.len() / LANES * LANES;
    for (xa, xb) in a[..split].chunks_exact(LANES).zip(b[..split].chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    hsum(&acc) + dot(&a[split..], &b[split..])
}

/// Dot products of `q` against four rows, reading `q` once.
#[inline]
fn dot4(q: &[f32], rows: [&[f32]; ROWS]) -> [f32; ROWS] {
    let dim = q.len();
    let split = dim / LANES * LANES;
    let mut acc = [[0.0f32; LANES]; ROWS];
    let mut d = 0;
    while d < split {
        let qv = &q[d..d + LANES];
        for r in 0..ROWS {
            let cv = &rows[r][d..d + LANES];
            for l in 0..LANES {
                acc[r][l] += qv[l] * cv[l];
            }
        }
        d += LANES;
    }
    let mut out = [0.0f32; ROWS];
    for r in 0..ROWS {
        out[r] = hsum(&acc[r]) + dot(&q[split..], &rows[r][split..]);
    }
    out
}

impl ScoringKernel for BlockedKernel {
    fn name(&self) -> &'static str {
        "blocked"
    }

    fn score_candidates(&self, query: &[f32], candidates: &[f32], r_c: usize, dim: usize, out: &mut [f32]) {
        let stride = r_c * dim;
        let blocked = r_c / ROWS * ROWS;
        for (slot, cand) in out.iter_mut().zip(candidates.chunks_exact(stride)) {
            let mut total = 0.0f32;
            for q in query.chunks_exact(dim) {
                let mut best = f32::NEG_INFINITY;
                let mut j = 0;
                while j < blocked {
                    let row = |k: usize| &cand[(j + k) * dim..(j + k + 1) * dim];
                    for s in dot4(q, [row(0), row(1), row(2), row(3)]) {
                        best = best.max(s);
                    }
                    j += ROWS;
                }
                for c in cand[blocked * dim..].chunks_exact(dim) {
                    best = best.max(dot_lanes(q, c));
                }
                total += best;
            }
            *slot = total;
        }
    }
}

pub fn kernel_registry() -> &'static Registry<dyn ScoringKernel> {
    static REGISTRY: OnceLock<Registry<dyn ScoringKernel>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r: Registry<dyn ScoringKernel> = Registry::new("scoring kernel");
        r.register(&["naive"], "scalar double loop, bit-identical to maxsim", |_| {
            Ok(Box::new(NaiveKernel))
        });
        r.register(
            &["blocked"],
            "4-row register blocking with 8-lane accumulators",
            |_| Ok(Box::new(BlockedKernel)),
        );
        r
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernels_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(rq, rc, dim) in &[(1, 1, 3), (3, 5, 17), (16, 64, 32), (2, 4, 8), (5, 7, 1)] {
            let q: Vec<f32> = (0..rq * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f32> = (0..6 * rc * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut a = vec![0.0; 6];
            let mut b = vec![0.0; 6];
            NaiveKernel.score_candidates(&q, &c, rc, dim, &mut a);
            BlockedKernel.score_candidates(&q, &c, rc, dim, &mut b);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-4, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn registry_lookup() {
        let reg = kernel_registry();
        assert_eq!(reg.create("naive").unwrap().name(), "naive");
        assert_eq!(reg.create(DEFAULT_KERNEL).unwrap().name(), "blocked");
        assert!(reg.create("simd9000").is_err());
    }
}
