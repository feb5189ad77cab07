//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use idmc::autonet::{Matrix, NodeId, Tape};
use num_complex::Complex64;

/// Value and derivative with respect to one scalar.
#[derive(Clone, Copy, Debug)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn var(v: f64) -> Self {
        Dual { v, d: 1.0 }
    }
    pub fn constant(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    pub fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
    pub fn div(self, o: Dual) -> Dual {
        Dual {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
    /// Clip with zero derivative on the boundary and outside.
    pub fn clip(self, lo: f64, hi: f64) -> Dual {
        if self.v > lo && self.v < hi {
            self
        } else {
            Dual::constant(self.v.clamp(lo, hi))
        }
    }
    /// Rounding with the straight-through derivative 1.
    pub fn round_ste(self) -> Dual {
        Dual {
            v: self.v.round(),
            d: self.d,
        }
    }
}

/// d-derivative of `round(clip(s/d)) * d` by forward-mode chain rule.
pub fn surrogate_distance_grad(s: f64, d: f64, lo: i32, hi: i32) -> f64 {
    let dd = Dual::var(d);
    let u = Dual::constant(s).div(dd).clip(lo as f64, hi as f64);
    u.round_ste().mul(dd).d
}

/// Largest relative error between the tape gradient of every leaf and
/// central differences; the error of a leaf is `|g - fd| / max(|g|, |fd|)`
/// over its whole gradient vector.
pub fn finite_difference_error(
    leaves: &[Matrix],
    build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
) -> f64 {
    let eval = |vals: &[Matrix]| {
        let mut t = Tape::new();
        let ids: Vec<NodeId> = vals.iter().map(|m| t.leaf(m.clone())).collect();
        let out = build(&mut t, &ids);
        (t.value(out).get(0, 0), t, ids, out)
    };
    let (_, tape, ids, out) = eval(leaves);
    let grads = tape.backward(out);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (li, leaf) in leaves.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(ids[li]) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; leaf.data().len()],
        };
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for j in 0..leaf.data().len() {
            let mut vals = leaves.to_vec();
            vals[li].data_mut()[j] += h;
            let fp = eval(&vals).0;
            vals[li].data_mut()[j] -= 2.0 * h;
            let fm = eval(&vals).0;
            let fd = (fp - fm) / (2.0 * h);
            diff2 += (fd - analytic[j]).powi(2);
            a2 += analytic[j].powi(2);
            n2 += fd.powi(2);
        }
        let scale = a2.sqrt().max(n2.sqrt());
        if scale > 1e-10 {
            worst = worst.max(diff2.sqrt() / scale);
        }
    }
    worst
}

fn nearest(p: Complex64, c: &[Complex64]) -> usize {
    let mut best = 0;
    for j in 1..c.len() {
        if (p - c[j]).norm_sqr() < (p - c[best]).norm_sqr() {
            best = j;
        }
    }
    best
}

pub fn wcss(points: &[Complex64], c: &[Complex64], a: &[usize]) -> f64 {
    points
        .iter()
        .zip(a)
        .map(|(p, &j)| (p - c[j]).norm_sqr())
        .sum()
}

/// Plain Lloyd iteration: assign, move every centroid to its members'
/// mean (an empty cluster takes the sample farthest from its own centroid),
/// reassign, stop once the assignment repeats with no empty cluster.
pub fn lloyd_replay(
    points: &[Complex64],
    init: &[Complex64],
    max_iters: usize,
) -> (Vec<Complex64>, Vec<usize>) {
    let m = init.len();
    let mut c = init.to_vec();
    let mut a: Vec<usize> = points.iter().map(|&p| nearest(p, &c)).collect();
    for _ in 0..max_iters {
        let old = c.clone();
        let mut members: Vec<Vec<Complex64>> = vec![Vec::new(); m];
        for (p, &j) in points.iter().zip(&a) {
            members[j].push(*p);
        }
        for j in 0..m {
            if !members[j].is_empty() {
                let s: Complex64 = members[j].iter().sum();
                c[j] = s / members[j].len() as f64;
            }
        }
        let mut taken = Vec::new();
        for j in 0..m {
            if members[j].is_empty() {
                let mut far = None;
                let mut far_d = -1.0;
                for (i, p) in points.iter().enumerate() {
                    let d = (p - old[a[i]]).norm_sqr();
                    if d > far_d && !taken.contains(&i) && !c.contains(p) {
                        far_d = d;
                        far = Some(i);
                    }
                }
                if let Some(i) = far {
                    taken.push(i);
                    c[j] = points[i];
                }
            }
        }
        let b: Vec<usize> = points.iter().map(|&p| nearest(p, &c)).collect();
        let used = (0..m).all(|j| b.contains(&j));
        let stable = b == a;
        a = b;
        if stable && used {
            break;
        }
    }
    (c, a)
}

/// Median of a non-empty slice.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// `count` log-spaced values covering `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}
