//! Pareto dominance, fast non-dominated sorting and crowding distance.
//! Everything here assumes minimization.

use super::EngineError;

fn check_lengths<P: AsRef<[f64]>>(points: &[P]) -> Result<usize, EngineError> {
    let m = points.first().map_or(0, |p| p.as_ref().len());
    for p in points {
        if p.as_ref().len() != m {
            return Err(EngineError::ObjectiveLength { expected: m, actual: p.as_ref().len() });
        }
    }
    Ok(m)
}

#[inline]
pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly_better = true;
        }
    }
    strictly_better
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool, EngineError> {
    if a.len() != b.len() {
        return Err(EngineError::ObjectiveLength { expected: a.len(), actual: b.len() });
    }
    Ok(dominates_unchecked(a, b))
}

/// Partitions point indices into successive non-dominated fronts (Deb's
/// O(m n^2) bookkeeping). Indices inside each front are ascending.
pub fn non_dominated_sort<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<Vec<usize>>, EngineError> {
    check_lengths(points)?;
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            let (a, b) = (points[p].as_ref(), points[q].as_ref());
            if dominates_unchecked(a, b) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if dominates_unchecked(b, a) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }

    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

/// Crowding distance of each point of a front. Per objective the two extreme
/// points get `+inf`; interior points add `(next - prev) / (max - min)`, and
/// a constant objective adds nothing. Ties in an objective are ordered by
/// index.
pub fn crowding_distance<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].as_ref().len();
    let mut distance = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let value = |i: usize| front[i].as_ref()[k];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let (first, last) = (order[0], order[n - 1]);
        distance[first] = f64::INFINITY;
        distance[last] = f64::INFINITY;
        let range = value(last) - value(first);
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            let (prev, mid, next) = (w[0], w[1], w[2]);
            distance[mid] += (value(next) - value(prev)) / range;
        }
    }
    distance
}
