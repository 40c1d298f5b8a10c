#![allow(dead_code)]

use localsdp::lasserre::{AtomSpace, LabelVectors, Labeling, PseudoMoments, SubsetIndex};
use nalgebra::DVector;
use localsdp::Tolerances;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random distribution over full labelings with `support` atoms (repeats merge).
pub fn random_distribution(rng: &mut ChaCha8Rng, space: &AtomSpace, support: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    for _ in 0..support {
        let labels: Vec<usize> = (0..space.vars()).map(|_| rng.random_range(0..space.labels())).collect();
        let w = rng.random_range(0.05..1.0);
        match out.iter_mut().find(|(l, _)| *l == labels) {
            Some(e) => e.1 += w,
            None => out.push((labels, w)),
        }
    }
    let total: f64 = out.iter().map(|e| e.1).sum();
    out.iter_mut().for_each(|e| e.1 /= total);
    out
}

/// Moments of `dist` on every consistent atom set.
pub fn full_moments(space: &AtomSpace, dist: &[(Vec<usize>, f64)]) -> PseudoMoments<f64> {
    let family = space.all_subsets(space.vars());
    PseudoMoments::from_distribution(space.clone(), dist, &family).unwrap()
}

pub fn full_vectors(space: &AtomSpace, dist: &[(Vec<usize>, f64)]) -> (PseudoMoments<f64>, LabelVectors<f64>) {
    let y = full_moments(space, dist);
    let family = space.all_subsets(space.vars());
    let x = localsdp::lasserre::cholesky_vectors(&y, &family, &Tolerances::default()).unwrap();
    (y, x)
}

/// A random labeling of a random subset of `vars` (possibly empty).
pub fn random_labeling(rng: &mut ChaCha8Rng, vars: &[usize], labels: usize, max: usize) -> Labeling {
    let mut pool = vars.to_vec();
    let take = rng.random_range(0..=max.min(pool.len()));
    let mut pairs = Vec::new();
    for _ in 0..take {
        let i = rng.random_range(0..pool.len());
        let v = pool.swap_remove(i);
        pairs.push((v, rng.random_range(0..labels)));
    }
    Labeling::new(pairs).unwrap()
}

pub fn random_vars(rng: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let take = rng.random_range(0..=max.min(n));
    let mut out = Vec::new();
    for _ in 0..take {
        let i = rng.random_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    out.sort_unstable();
    out
}

pub fn set(members: &[usize]) -> SubsetIndex {
    SubsetIndex::from_members(members).unwrap()
}

/// Largest deviation in the conditioning identities for `x` conditioned on `f`.
pub fn conditioning_error(x: &LabelVectors<f64>, f: &Labeling, a: &Labeling, b: &Labeling) -> f64 {
    let Ok(c) = x.condition(f) else { return 0.0 };
    let mut worst = 0.0f64;
    let s_vars: Vec<usize> = f.vars().collect();
    // (a)
    worst = worst.max((c.vector(f).unwrap() - c.empty()).amax());
    worst = worst.max((c.vector(f).unwrap().norm_squared() - 1.0).abs());
    // (b)
    let ip = c.vector(a).unwrap().dot(&c.vector(b).unwrap());
    let expected = match a.compose(b) {
        Some(ab) => c.vector(&ab).unwrap().norm_squared(),
        None => 0.0,
    };
    worst = worst.max((ip - expected).abs());
    // (c) and (d)
    let k = x.space().labels();
    let mut sum = DVector::zeros(x.ambient_dim());
    let mut norm_sum = 0.0;
    for h in Labeling::all(&s_vars, k) {
        if let Ok(ch) = x.condition(&h) {
            let va = ch.vector(a).unwrap();
            sum += &va * ch.norm();
            norm_sum += ch.probability() * va.norm_squared();
        }
    }
    let xa = x.label_vector(a).unwrap();
    worst = worst.max((sum - &xa).amax());
    worst = worst.max((norm_sum - xa.norm_squared()).abs());
    let xs = x.label_vector(f).unwrap();
    let d_rhs = xs.dot(&xa) / xs.norm_squared();
    worst = worst.max((c.vector(a).unwrap().norm_squared() - d_rhs).abs());
    // (e)
    if let Ok(cg) = c.refine(a) {
        let lhs = cg.vector(b).unwrap();
        let rhs = match a.compose(b) {
            Some(ab) => c.vector(&ab).unwrap() / c.vector(a).unwrap().norm(),
            None => DVector::zeros(x.ambient_dim()),
        };
        worst = worst.max((lhs - rhs).amax());
    }
    worst
}
