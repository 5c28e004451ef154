use super::Objectives;

/// Pareto dominance with both objectives minimized.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    let no_worse = a.params <= b.params && a.error <= b.error;
    let better = a.params < b.params || a.error < b.error;
    no_worse && better
}

/// Deb's fast non-dominated sort. Returns fronts of indices into `objs`,
/// best front first; indices inside a front are ascending.
pub fn fast_nondominated_sort(objs: &[Objectives]) -> Vec<Vec<usize>> {
    let n = objs.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    let mut current = Vec::new();
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            if dominates(&objs[p], &objs[q]) {
                dominated_by[p].push(q);
            } else if dominates(&objs[q], &objs[p]) {
                domination_count[p] += 1;
            }
        }
        if domination_count[p] == 0 {
            current.push(p);
        }
    }
    let mut fronts = Vec::new();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by[p] {
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
    fronts
}

/// Crowding distance of each member of `front` (indices into `objs`), in the
/// order of `front`. Boundary points get infinity; an objective whose range is
/// zero contributes nothing.
///
/// Ties are ordered so that, on a non-dominated front, the error ordering is
/// the exact reverse of the params ordering. Only the two ends of the front are
/// then infinite, even when several members share objective values, so
/// truncation keeps both extremes.
pub fn crowding_distance(objs: &[Objectives], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let at = |a: usize| &objs[front[a]];
    let mut by_params: Vec<usize> = (0..n).collect();
    by_params.sort_by(|&a, &b| {
        (at(a).params.cmp(&at(b).params))
            .then(at(b).error.total_cmp(&at(a).error))
            .then(a.cmp(&b))
    });
    let mut by_error: Vec<usize> = (0..n).collect();
    by_error.sort_by(|&a, &b| {
        (at(a).error.total_cmp(&at(b).error))
            .then(at(b).params.cmp(&at(a).params))
            .then(b.cmp(&a))
    });
    let getters: [fn(&Objectives) -> f64; 2] = [|o| o.params as f64, |o| o.error];
    for (value, order) in getters.into_iter().zip([by_params, by_error]) {
        let lo = value(at(order[0]));
        let hi = value(at(order[n - 1]));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = value(at(order[w + 1])) - value(at(order[w - 1]));
            dist[order[w]] += gap / range;
        }
    }
    dist
}
