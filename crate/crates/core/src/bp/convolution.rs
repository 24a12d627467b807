//! Materialized leave-one-out convolution tables for a service unit: the
//! quantity P_K(R, T), the total message weight of configurations of the
//! edge subset K placing load T on the unit while availability is judged
//! against a reference load R. The sweep engine computes its messages from
//! the same recursion without materializing tables; this form exists for
//! the table-level contract and its oracle tests.

use crate::bp::kernels::{A, S, U};
use crate::semiring::Semiring;

/// Dense table over (reference load R, placed load T), both in 0..=cap.
#[derive(Debug, Clone)]
pub struct ConvolutionTable {
    pub cap: usize,
    /// values[r][t]
    pub values: Vec<Vec<f64>>,
}

impl ConvolutionTable {
    fn empty<Sr: Semiring>(cap: usize) -> Self {
        // The empty subset places load zero with weight one.
        let mut values = vec![vec![Sr::ZERO; cap + 1]; cap + 1];
        for row in values.iter_mut() {
            row[0] = Sr::ONE;
        }
        ConvolutionTable { cap, values }
    }

    fn push_edge<Sr: Semiring>(&mut self, weight: u32, msg: &[f64; 3]) {
        let w = weight as usize;
        for (r, row) in self.values.iter_mut().enumerate() {
            let g = if r + w <= self.cap { msg[A] } else { msg[U] };
            for t in (0..=self.cap).rev() {
                let mut val = Sr::mul(g, row[t]);
                if t >= w && w <= self.cap {
                    val = Sr::add(val, Sr::mul(msg[S], row[t - w]));
                }
                row[t] = val;
            }
        }
    }
}

/// Builds the leave-one-out tables of a unit: entry `i` of the result is
/// the table over `∂a \ {i}` in the order of `edges`.
pub fn build_convolution_tables<Sr: Semiring>(
    cap: usize,
    edges: &[(u32, [f64; 3])],
) -> Vec<ConvolutionTable> {
    let mut out: Vec<ConvolutionTable> = (0..edges.len().max(1))
        .map(|_| ConvolutionTable::empty::<Sr>(cap))
        .collect();
    for (i, table) in out.iter_mut().enumerate().take(edges.len()) {
        for (j, (w, msg)) in edges.iter().enumerate() {
            if j != i {
                table.push_edge::<Sr>(*w, msg);
            }
        }
    }
    out
}

/// Full-subset table (no edge left out).
pub fn build_full_table<Sr: Semiring>(cap: usize, edges: &[(u32, [f64; 3])]) -> ConvolutionTable {
    let mut table = ConvolutionTable::empty::<Sr>(cap);
    for (w, msg) in edges {
        table.push_edge::<Sr>(*w, msg);
    }
    table
}

/// The unit-to-user message read off a leave-one-out table: diagonal sums
/// over the availability windows and the shifted diagonal for serving.
pub fn unit_message_from_table<Sr: Semiring>(table: &ConvolutionTable, weight: u32) -> [f64; 3] {
    let cap = table.cap;
    let w = weight as usize;
    let mut msg = [Sr::ZERO; 3];
    for r in 0..=cap {
        if r + w > cap {
            msg[U] = Sr::add(msg[U], table.values[r][r]);
        } else {
            msg[A] = Sr::add(msg[A], table.values[r][r]);
        }
        if r >= w && w <= cap {
            msg[S] = Sr::add(msg[S], table.values[r][r - w]);
        }
    }
    msg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::kernels::{unit_update_all, UnitNeighbor};
    use crate::semiring::Linear;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_subset_is_a_point_mass_at_zero_load() {
        let t = ConvolutionTable::empty::<Linear>(3);
        for r in 0..=3 {
            assert_eq!(t.values[r][0], 1.0);
            for x in &t.values[r][1..] {
                assert_eq!(*x, 0.0);
            }
        }
    }

    #[test]
    fn single_edge_table_matches_case_analysis() {
        let msg = [0.2, 0.3, 0.5];
        let cap = 4usize;
        let w = 2u32;
        let mut t = ConvolutionTable::empty::<Linear>(cap);
        t.push_edge::<Linear>(w, &msg);
        for r in 0..=cap {
            // T = w: the serving weight, any reference.
            assert_eq!(t.values[r][w as usize], msg[2]);
            // T = 0: available below the threshold, unavailable above.
            let expect = if r + 2 <= cap { msg[1] } else { msg[0] };
            assert_eq!(t.values[r][0], expect);
        }
    }

    #[test]
    fn two_edge_table_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let cap = rng.gen_range(1..=6);
            let w1 = rng.gen_range(1..=4u32);
            let w2 = rng.gen_range(1..=4u32);
            let m1 = rand_msg(&mut rng);
            let m2 = rand_msg(&mut rng);
            let full = build_full_table::<Linear>(cap, &[(w1, m1), (w2, m2)]);
            for r in 0..=cap {
                for t in 0..=cap {
                    let mut expect = 0.0;
                    for (y1, p1) in states(cap, r, w1, &m1) {
                        for (y2, p2) in states(cap, r, w2, &m2) {
                            let load = y1 as usize * w1 as usize + y2 as usize * w2 as usize;
                            if load == t {
                                expect += p1 * p2;
                            }
                        }
                    }
                    assert!((full.values[r][t] - expect).abs() < 1e-12);
                }
            }
        }
    }

    /// Weighted states of one edge at reference r: (serving?, weight).
    fn states(cap: usize, r: usize, w: u32, msg: &[f64; 3]) -> Vec<(bool, f64)> {
        let fits = r + w as usize <= cap;
        let mut v = vec![(false, if fits { msg[1] } else { msg[0] })];
        if (w as usize) <= cap {
            v.push((true, msg[2]));
        }
        v
    }

    fn rand_msg<R: Rng>(rng: &mut R) -> [f64; 3] {
        let mut m = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        let s: f64 = m.iter().sum();
        for x in &mut m {
            *x /= s;
        }
        m
    }

    #[test]
    fn table_messages_match_the_fast_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let d = rng.gen_range(1..=5);
            let cap = rng.gen_range(1..=8);
            let edges: Vec<(u32, [f64; 3])> = (0..d)
                .map(|_| (rng.gen_range(1..=5u32), rand_msg(&mut rng)))
                .collect();
            let tables = build_convolution_tables::<Linear>(cap, &edges);
            let entries: Vec<UnitNeighbor> = edges
                .iter()
                .map(|&(w, m)| UnitNeighbor { weight: w, msg: m })
                .collect();
            let mut fast = vec![[0.0; 3]; d];
            unit_update_all::<Linear>(cap, &entries, &mut fast);
            for i in 0..d {
                let slow = unit_message_from_table::<Linear>(&tables[i], edges[i].0);
                for k in 0..3 {
                    assert!(
                        (fast[i][k] - slow[k]).abs() < 1e-12,
                        "{:?} vs {slow:?}",
                        fast[i]
                    );
                }
            }
        }
    }
}
