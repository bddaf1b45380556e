//! Shared oracles for the integration suites. These stay independent of
//! the implementation paths they cross-check.

use impulsive_core::smallgain::GainMatrix;

/// Enumerate every directed simple cycle by DFS, rooted at its minimum
/// node; returns `(node list, gain product)` pairs.
pub fn enumerate_cycles(gm: &GainMatrix) -> Vec<(Vec<usize>, f64)> {
    fn dfs(
        gm: &GainMatrix,
        root: usize,
        node: usize,
        product: f64,
        path: &mut Vec<usize>,
        visited: &mut Vec<bool>,
        out: &mut Vec<(Vec<usize>, f64)>,
    ) {
        for next in 0..gm.n() {
            let g = gm.get(node, next);
            if g <= 0.0 {
                continue;
            }
            if next == root {
                out.push((path.clone(), product * g));
            } else if next > root && !visited[next] {
                visited[next] = true;
                path.push(next);
                dfs(gm, root, next, product * g, path, visited, out);
                path.pop();
                visited[next] = false;
            }
        }
    }
    let n = gm.n();
    let mut out = Vec::new();
    for root in 0..n {
        let mut visited = vec![false; n];
        visited[root] = true;
        let mut path = vec![root];
        dfs(gm, root, root, 1.0, &mut path, &mut visited, &mut out);
    }
    out
}

/// Max geometric mean over the enumerated cycles (0 when acyclic).
pub fn brute_force_cycle_mean(gm: &GainMatrix) -> f64 {
    enumerate_cycles(gm)
        .iter()
        .map(|(c, p)| p.powf(1.0 / c.len() as f64))
        .fold(0.0, f64::max)
}
