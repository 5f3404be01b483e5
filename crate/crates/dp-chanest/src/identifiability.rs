//! Path-count identifiability bounds and folding-plan selection.
//!
//! Two bounds are computed per geometry: a Kruskal-type condition for the
//! 4-way tensor decomposition, and the folding bound that exploits the
//! Vandermonde structure. The folding bound searches all per-dimension
//! splits `P_d + Q_d = M_d + 1` and maximizes
//!
//! ```text
//! F = min( max_d (P_d - 1) * prod_{d' != d} P_{d'},  8 Q_r Q_x Q_y )
//! ```
//!
//! Plan selection for the subspace estimator is stricter: recovering all
//! three frequency sets needs the shift-invariance count to hold in *every*
//! dimension with at least two elements, not just the best one, so
//! [`choose_folding`] maximizes the minimum constraint margin instead.

use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};
use crate::imdf::FoldingPlan;

/// Feasibility report for one geometry.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub geometry: ArrayGeometry,
    /// Largest K passing the Kruskal-type uniqueness condition.
    pub kruskal_max_k: usize,
    /// Largest K supported by the folding bound.
    pub imdf_max_k: usize,
    /// A folding plan witnessing `imdf_max_k`.
    pub best_plan: FoldingPlan,
}

impl std::fmt::Display for BoundReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let g = &self.geometry;
        writeln!(f, "geometry       M_r={}  M_x={}  M_y={}", g.m_r, g.m_x, g.m_y)?;
        writeln!(f, "kruskal_max_K  {}", self.kruskal_max_k)?;
        writeln!(f, "imdf_max_K     {}", self.imdf_max_k)?;
        write!(
            f,
            "best_plan      P=({},{},{})  Q=({},{},{})  F={}",
            self.best_plan.p_r,
            self.best_plan.p_x,
            self.best_plan.p_y,
            self.best_plan.q_r,
            self.best_plan.q_x,
            self.best_plan.q_y,
            self.best_plan.f,
        )
    }
}

/// Kruskal-type uniqueness condition for K paths:
/// `min(M_r,K) + min(M_x,K) + min(M_y,K) + min(4,K) >= 2K + 3`.
///
/// K = 1 returns true unconditionally: the inequality fails there although a
/// rank-1 decomposition is trivially unique.
pub fn kruskal_check(geometry: &ArrayGeometry, k: usize) -> bool {
    if k == 1 {
        return true;
    }
    let lhs = geometry.m_r.min(k) + geometry.m_x.min(k) + geometry.m_y.min(k) + 4usize.min(k);
    lhs >= 2 * k + 3
}

/// Largest K passing [`kruskal_check`].
pub fn kruskal_max_k(geometry: &ArrayGeometry) -> usize {
    // LHS is at most M_r + M_x + M_y + 4, so K cannot exceed this cap.
    let cap = (geometry.m_r + geometry.m_x + geometry.m_y + 1) / 2 + 1;
    (1..=cap.max(1))
        .filter(|&k| kruskal_check(geometry, k))
        .max()
        .unwrap_or(1)
}

fn shift_counts(p_r: usize, p_x: usize, p_y: usize) -> [usize; 3] {
    [
        (p_r - 1) * p_x * p_y,
        p_r * (p_x - 1) * p_y,
        p_r * p_x * (p_y - 1),
    ]
}

/// Exhaustive folding-bound search: the largest F over all valid splits.
///
/// Among plans achieving the same F the one with more column-side slack is
/// preferred, then the lexicographically smallest `(P_r, P_x, P_y)`.
pub fn imdf_max_paths(geometry: &ArrayGeometry) -> BoundReport {
    let g = geometry;
    let mut best: Option<(usize, isize, (usize, usize, usize))> = None;
    for p_r in 1..=g.m_r {
        for p_x in 1..=g.m_x {
            for p_y in 1..=g.m_y {
                let (q_r, q_x, q_y) = (g.m_r + 1 - p_r, g.m_x + 1 - p_x, g.m_y + 1 - p_y);
                let shift = *shift_counts(p_r, p_x, p_y).iter().max().unwrap();
                let cols = 8 * q_r * q_x * q_y;
                let f = shift.min(cols);
                let slack = cols as isize - f as isize;
                let key = (f, slack, (p_r, p_x, p_y));
                let better = match &best {
                    None => true,
                    Some((bf, bs, bp)) => {
                        f > *bf || (f == *bf && (slack > *bs || (slack == *bs && key.2 < *bp)))
                    }
                };
                if better {
                    best = Some(key);
                }
            }
        }
    }
    let (f, _, (p_r, p_x, p_y)) = best.expect("at least one split exists");
    let best_plan = FoldingPlan::new(g, p_r, p_x, p_y, f).expect("searched split is valid");
    BoundReport {
        geometry: *g,
        kruskal_max_k: kruskal_max_k(g),
        imdf_max_k: f,
        best_plan,
    }
}

/// Margins of the estimation constraints for a candidate split; `None` when
/// some constraint is violated.
fn estimation_margin(g: &ArrayGeometry, p: (usize, usize, usize), k: usize) -> Option<isize> {
    let (p_r, p_x, p_y) = p;
    let (q_r, q_x, q_y) = (g.m_r + 1 - p_r, g.m_x + 1 - p_x, g.m_y + 1 - p_y);
    let shifts = shift_counts(p_r, p_x, p_y);
    let mut margin = (8 * q_r * q_x * q_y) as isize - k as isize;
    for (dim, m_d) in [g.m_r, g.m_x, g.m_y].into_iter().enumerate() {
        if m_d < 2 {
            continue;
        }
        let s = shifts[dim] as isize - k as isize;
        if s < 0 {
            return None;
        }
        margin = margin.min(s);
    }
    if margin < 0 {
        None
    } else {
        Some(margin)
    }
}

/// Picks the folding plan for K paths that maximizes the minimum margin of
/// the per-dimension shift-invariance constraints and the column constraint.
pub fn choose_folding(geometry: &ArrayGeometry, k: usize) -> Result<FoldingPlan> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let g = geometry;
    let mut best: Option<(isize, (usize, usize, usize))> = None;
    for p_r in 1..=g.m_r {
        for p_x in 1..=g.m_x {
            for p_y in 1..=g.m_y {
                if let Some(margin) = estimation_margin(g, (p_r, p_x, p_y), k) {
                    let better = match &best {
                        None => true,
                        Some((bm, bp)) => margin > *bm || (margin == *bm && (p_r, p_x, p_y) < *bp),
                    };
                    if better {
                        best = Some((margin, (p_r, p_x, p_y)));
                    }
                }
            }
        }
    }
    match best {
        Some((_, (p_r, p_x, p_y))) => FoldingPlan::new(g, p_r, p_x, p_y, k),
        None => Err(Error::InfeasiblePaths {
            k,
            m_r: g.m_r,
            m_x: g.m_x,
            m_y: g.m_y,
            bound: imdf_max_paths(g).imdf_max_k,
        }),
    }
}

/// One row of the single-receive-antenna bound scan.
#[derive(Debug, Clone)]
pub struct SingleAntennaBound {
    pub m_t: usize,
    pub m_x: usize,
    pub m_y: usize,
    pub imdf_max_k: usize,
    /// `imdf_max_k / m_t`.
    pub ratio: f64,
}

/// Folding bounds for `M_r = 1` with each `M_t` factored as a near-square
/// `M_x x M_y` array.
pub fn single_antenna_bound_scan(m_t_list: &[usize]) -> Vec<SingleAntennaBound> {
    m_t_list
        .iter()
        .map(|&m_t| {
            let m_x = (1..=m_t)
                .filter(|d| m_t % d == 0 && d * d <= m_t)
                .max()
                .unwrap_or(1);
            let m_y = m_t / m_x;
            let geometry = ArrayGeometry { m_r: 1, m_x, m_y };
            let bound = imdf_max_paths(&geometry).imdf_max_k;
            SingleAntennaBound {
                m_t,
                m_x,
                m_y,
                imdf_max_k: bound,
                ratio: bound as f64 / m_t as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(m_r: usize, m_x: usize, m_y: usize) -> ArrayGeometry {
        ArrayGeometry::new(m_r, m_x, m_y).unwrap()
    }

    /// Brute-force folding bound, written independently of the implementation.
    fn imdf_bound_oracle(g: &ArrayGeometry) -> usize {
        let mut best = 0;
        for p_r in 1..=g.m_r {
            for p_x in 1..=g.m_x {
                for p_y in 1..=g.m_y {
                    let q = 8 * (g.m_r + 1 - p_r) * (g.m_x + 1 - p_x) * (g.m_y + 1 - p_y);
                    let a = (p_r - 1) * p_x * p_y;
                    let b = p_r * (p_x - 1) * p_y;
                    let c = p_r * p_x * (p_y - 1);
                    best = best.max(a.max(b).max(c).min(q));
                }
            }
        }
        best
    }

    #[test]
    fn kruskal_bound_at_paper_geometry() {
        let g = geom(2, 4, 8);
        assert!(kruskal_check(&g, 7));
        assert!(!kruskal_check(&g, 8)); // 2 + 4 + 8 + 4 = 18 < 19
        assert_eq!(kruskal_max_k(&g), 7);
    }

    #[test]
    fn kruskal_rank_one_carveout() {
        for g in [geom(1, 1, 1), geom(2, 4, 8), geom(1, 2, 2)] {
            assert!(kruskal_check(&g, 1));
        }
    }

    #[test]
    fn kruskal_monotone_nonincreasing_in_k() {
        for m_r in 1..=4 {
            for m_x in 1..=6 {
                for m_y in 1..=6 {
                    let g = geom(m_r, m_x, m_y);
                    let mut prev = kruskal_check(&g, 2);
                    for k in 3..=20 {
                        let cur = kruskal_check(&g, k);
                        assert!(!(cur && !prev), "check became true again at K={k} for {g:?}");
                        prev = cur;
                    }
                }
            }
        }
    }

    #[test]
    fn folding_bound_at_paper_geometry() {
        let report = imdf_max_paths(&geom(2, 4, 8));
        assert_eq!(report.imdf_max_k, 32);
        assert_eq!(report.kruskal_max_k, 7);
        let p = report.best_plan;
        assert_eq!(p.p_r + p.q_r, 3);
        assert_eq!(p.p_x + p.q_x, 5);
        assert_eq!(p.p_y + p.q_y, 9);
    }

    #[test]
    fn folding_bound_degenerate_geometry() {
        assert_eq!(imdf_max_paths(&geom(1, 1, 1)).imdf_max_k, 0);
    }

    #[test]
    fn folding_bound_small_cube_matches_oracle() {
        let g = geom(2, 2, 2);
        let report = imdf_max_paths(&g);
        assert_eq!(report.imdf_max_k, imdf_bound_oracle(&g));
        assert_eq!(report.imdf_max_k, 4);
    }

    #[test]
    fn folding_bound_matches_oracle_on_grid() {
        for m_r in 1..=3 {
            for m_x in 1..=5 {
                for m_y in 1..=5 {
                    let g = geom(m_r, m_x, m_y);
                    assert_eq!(
                        imdf_max_paths(&g).imdf_max_k,
                        imdf_bound_oracle(&g),
                        "geometry {g:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn folding_bound_is_monotone_in_geometry() {
        for m_r in 1..=3 {
            for m_x in 1..=5 {
                for m_y in 1..=5 {
                    let base = imdf_max_paths(&geom(m_r, m_x, m_y)).imdf_max_k;
                    assert!(imdf_max_paths(&geom(m_r + 1, m_x, m_y)).imdf_max_k >= base);
                    assert!(imdf_max_paths(&geom(m_r, m_x + 1, m_y)).imdf_max_k >= base);
                    assert!(imdf_max_paths(&geom(m_r, m_x, m_y + 1)).imdf_max_k >= base);
                }
            }
        }
    }

    #[test]
    fn chosen_plan_satisfies_all_constraints() {
        let g = geom(2, 4, 8);
        for k in [1, 4, 5, 6] {
            let plan = choose_folding(&g, k).unwrap();
            assert_eq!(plan.p_r + plan.q_r, g.m_r + 1);
            assert_eq!(plan.p_x + plan.q_x, g.m_x + 1);
            assert_eq!(plan.p_y + plan.q_y, g.m_y + 1);
            assert!((plan.p_r - 1) * plan.p_x * plan.p_y >= k);
            assert!(plan.p_r * (plan.p_x - 1) * plan.p_y >= k);
            assert!(plan.p_r * plan.p_x * (plan.p_y - 1) >= k);
            assert!(8 * plan.q_r * plan.q_x * plan.q_y >= k);
        }
    }

    #[test]
    fn choose_folding_rejects_infeasible_k() {
        let g = geom(2, 4, 8);
        match choose_folding(&g, 33) {
            Err(Error::InfeasiblePaths { bound, .. }) => assert_eq!(bound, 32),
            other => panic!("expected InfeasiblePaths, got {other:?}"),
        }
    }

    #[test]
    fn choose_folding_small_cube_single_path() {
        let plan = choose_folding(&geom(2, 2, 2), 1).unwrap();
        assert!(plan.p_r >= 2 && plan.p_x >= 2 && plan.p_y >= 2);
    }

    #[test]
    fn chosen_plans_never_exceed_max_form_bound() {
        for m_r in 1..=3 {
            for m_x in 2..=5 {
                for m_y in 2..=5 {
                    let g = geom(m_r, m_x, m_y);
                    let cap = imdf_max_paths(&g).imdf_max_k;
                    let mut k = 1;
                    while let Ok(_plan) = choose_folding(&g, k) {
                        assert!(k <= cap, "plan found for K={k} beyond bound {cap} at {g:?}");
                        k += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn single_antenna_scan_stays_below_ceiling() {
        let rows = single_antenna_bound_scan(&[4, 16, 64]);
        let expected = [(4, 2, 2, 2usize), (16, 4, 4, 9), (64, 8, 8, 36)];
        for (row, (m_t, m_x, m_y, bound)) in rows.iter().zip(expected) {
            assert_eq!(row.m_t, m_t);
            assert_eq!(row.m_x, m_x);
            assert_eq!(row.m_y, m_y);
            assert_eq!(row.imdf_max_k, bound);
            assert!(row.ratio < 0.8187, "ratio {} at M_t={}", row.ratio, m_t);
        }
    }

    #[test]
    fn single_antenna_scan_trivial_array() {
        let rows = single_antenna_bound_scan(&[1]);
        assert_eq!(rows[0].imdf_max_k, 0);
    }
}
