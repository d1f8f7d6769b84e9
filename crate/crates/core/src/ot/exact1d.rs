/// Exact `p`-cost of optimal transport between two 1D discrete measures,
/// computed through the monotone (quantile) coupling.
///
/// Points need not be sorted. Weights of each measure should sum to one.
pub fn exact_1d_cost(a_weights: &[f64], a_points: &[f64], b_weights: &[f64], b_points: &[f64], p: f64) -> f64 {
    let sorted = |w: &[f64], x: &[f64]| {
        let mut v: Vec<(f64, f64)> = x.iter().copied().zip(w.iter().copied()).collect();
        v.sort_by(|l, r| l.0.total_cmp(&r.0));
        v
    };
    let a = sorted(a_weights, a_points);
    let b = sorted(b_weights, b_points);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a.first().map_or(0.0, |e| e.1), b.first().map_or(0.0, |e| e.1));
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let moved = ra.min(rb);
        cost += moved * (a[i].0 - b[j].0).abs().powf(p);
        ra -= moved;
        rb -= moved;
        if ra <= rb {
            i += 1;
            ra = a.get(i).map_or(0.0, |e| e.1);
        } else {
            j += 1;
            rb = b.get(j).map_or(0.0, |e| e.1);
        }
    }
    cost
}
