/// Weighted pool-adjacent-violators: the non-decreasing sequence minimising
/// `sum_i w_i (f_i - y_i)^2`.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&y, &w) in values.iter().zip(weights) {
        let mut cur = (y, w, 1usize);
        while let Some(&(m, bw, len)) = blocks.last() {
            if m <= cur.0 {
                break;
            }
            blocks.pop();
            let tw = bw + cur.1;
            cur = ((m * bw + cur.0 * cur.1) / tw, tw, len + cur.2);
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, len) in blocks {
        out.extend(std::iter::repeat_n(m, len));
    }
    out
}

/// Isotonic fit of `y` on `x`: sorts by `x` (stable), pools tied inputs and runs PAVA.
/// Returns the distinct sorted inputs with their fitted values, and the fitted value
/// for every original point.
pub(crate) fn fit_points(x: &[f64], y: &[f64]) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut xs = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    let mut group_of = vec![0; x.len()];
    for &i in &order {
        if xs.last() != Some(&x[i]) {
            xs.push(x[i]);
            sums.push((0.0, 0.0));
        }
        let g = xs.len() - 1;
        sums[g].0 += y[i];
        sums[g].1 += 1.0;
        group_of[i] = g;
    }
    let means: Vec<f64> = sums.iter().map(|(s, n)| s / n).collect();
    let weights: Vec<f64> = sums.iter().map(|(_, n)| *n).collect();
    let fitted = pava(&means, &weights);
    let per_point = group_of.iter().map(|&g| fitted[g]).collect();
    (xs.into_iter().zip(fitted).collect(), per_point)
}
