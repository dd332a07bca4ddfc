use std::f64::consts::PI;
use std::time::Instant;

use anyhow::anyhow;
use circlecal::conic::{decompose_ellipse, EllipseGeometry};
use circlecal::estimators::estimate;
use circlecal::moments::{
    angular_integral, centered_moment, moment_vectors, moment_vectors_by_terms, moment_vectors_unrotated,
    CombinationTable, EllipseFrame, MAX_ANGULAR_ORDER, MAX_MOMENT_ORDER,
};
use circlecal::quadrature::{angular_nodes, PolarEllipse};
use circlecal::{DistortionModel, Estimator, Intrinsics, PoseSE3, TargetCircle};
use nalgebra::{Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::{compute, Outcome};

struct Check {
    name: &'static str,
    tolerance: f64,
    run: fn(&mut ChaCha8Rng) -> f64,
}

const CHECKS: [Check; 8] = [
    Check { name: "combination_table", tolerance: 0.0, run: combination_table },
    Check { name: "angular_integral", tolerance: 1e-13, run: angular },
    Check { name: "centered_moment", tolerance: 1e-12, run: centered },
    Check { name: "moment_vectors", tolerance: 1e-10, run: moment_quadrature },
    Check { name: "grouped_vs_terms", tolerance: 1e-12, run: grouped_vs_terms },
    Check { name: "w_coefficients", tolerance: 1e-12, run: w_identity },
    Check { name: "area_jacobian", tolerance: 1e-6, run: area_jacobian },
    Check { name: "unbiased_vs_numerical", tolerance: 1e-6, run: unbiased_vs_numerical },
];

pub fn run(seed: u64) -> Outcome {
    let mut failed = Vec::new();
    for c in &CHECKS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Instant::now();
        let dev = (c.run)(&mut rng);
        let pass = dev <= c.tolerance;
        println!(
            "{:<22} {} max deviation {dev:.2e} (tol {:.0e}) {:.1?}",
            c.name,
            if pass { "PASS" } else { "FAIL" },
            c.tolerance,
            t.elapsed()
        );
        if !pass {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(compute(anyhow!("failed checks: {}", failed.join(", "))))
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn ellipse(rng: &mut ChaCha8Rng) -> EllipseGeometry {
    let m0 = rng.random_range(0.02..0.3);
    EllipseGeometry {
        tx: rng.random_range(-0.6..0.6),
        ty: rng.random_range(-0.5..0.5),
        m0,
        m1: m0 * rng.random_range(0.3..1.0),
        alpha: rng.random_range(-PI..PI),
    }
}

fn distortion(rng: &mut ChaCha8Rng) -> DistortionModel {
    DistortionModel::new(&[
        rng.random_range(-0.4..0.2),
        rng.random_range(-0.05..0.1),
        rng.random_range(-0.02..0.02),
    ])
    .expect("small coefficients")
}

fn combination_table(_: &mut ChaCha8Rng) -> f64 {
    let t = CombinationTable::global();
    let mut worst: f64 = 0.0;
    for n in 1..=t.max_row() {
        worst = worst.max((t.get(n, 0) - 1.0).abs()).max((t.get(n, n) - 1.0).abs());
        for k in 1..n {
            worst = worst.max((t.get(n, k) - t.get(n - 1, k - 1) - t.get(n - 1, k)).abs());
        }
    }
    worst
}

fn angular(_: &mut ChaCha8Rng) -> f64 {
    // midpoint nodes are exact for trigonometric polynomials of degree < n
    let nodes = angular_nodes(2 * MAX_ANGULAR_ORDER + 2);
    let mut worst: f64 = 0.0;
    for m in 0..=MAX_ANGULAR_ORDER {
        for n in 0..=MAX_ANGULAR_ORDER - m {
            let q = nodes.iter().map(|&(c, s)| c.powi(m as i32) * s.powi(n as i32)).sum::<f64>() / nodes.len() as f64;
            worst = worst.max((angular_integral(m, n).expect("in range") - q).abs());
        }
    }
    worst
}

fn centered(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let (a, b) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let e = PolarEllipse { tx: 0.0, ty: 0.0, a, b, alpha: 0.0 };
        for m in 0..=2 * MAX_MOMENT_ORDER {
            for n in 0..=2 * MAX_MOMENT_ORDER - m {
                let q = e.average(32, 128, |x, y| x.powi(m as i32) * y.powi(n as i32));
                worst = worst.max((centered_moment(m, n, a, b).expect("in range") - q).abs());
            }
        }
    }
    worst
}

fn moment_quadrature(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let g = ellipse(rng);
        let d = decompose_ellipse(&g.compose()).expect("valid ellipse");
        let e = PolarEllipse { tx: d.tx, ty: d.ty, a: d.m0, b: d.m1, alpha: d.alpha };
        let vs = moment_vectors(&g.compose(), 12).expect("in range");
        for (r, v) in vs.iter().enumerate() {
            let s = |x: f64, y: f64| (x * x + y * y).powi(r as i32);
            let q = [
                e.average(32, 128, |x, y| x * s(x, y)),
                e.average(32, 128, |x, y| y * s(x, y)),
                e.average(32, 128, s),
            ];
            for k in 0..3 {
                worst = worst.max((v.v[k] - q[k]).abs());
            }
        }
    }
    worst
}

fn grouped_vs_terms(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let g = ellipse(rng);
        let frame = EllipseFrame { tx: g.tx, ty: g.ty, a: g.m0, b: g.m1, alpha: 0.0 };
        let fast = moment_vectors_unrotated(&frame, MAX_MOMENT_ORDER).expect("in range");
        let slow = moment_vectors_by_terms(&frame, MAX_MOMENT_ORDER).expect("in range");
        for (f, s) in fast.iter().zip(&slow) {
            for k in 0..3 {
                worst = worst.max((f.v[k] - s.v[k]).abs() / s.v[k].abs().max(1.0));
            }
        }
    }
    worst
}

fn w_identity(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = distortion(rng);
        let w = d.w_coefficients();
        let s = rng.random_range(0.0..1.5);
        let poly = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &x| acc * s + x);
        let (k, j) = (d.radial_factor(s), d.radial_slope(s));
        worst = worst.max((poly(&w.w0) - k * j).abs()).max((poly(&w.w1) - k * k * j).abs());
    }
    worst
}

fn area_jacobian(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..200 {
        let d = distortion(rng);
        let (x, y) = (rng.random_range(-0.8..0.8), rng.random_range(-0.6..0.6));
        let dx = (d.distort(&Point2::new(x + h, y)) - d.distort(&Point2::new(x - h, y))) / (2.0 * h);
        let dy = (d.distort(&Point2::new(x, y + h)) - d.distort(&Point2::new(x, y - h))) / (2.0 * h);
        let an = d.area_jacobian(&Point2::new(x, y));
        if an.abs() > 1e-3 {
            worst = worst.max(rel(dx.x * dy.y - dx.y * dy.x, an));
        }
    }
    worst
}

fn unbiased_vs_numerical(rng: &mut ChaCha8Rng) -> f64 {
    let k = Intrinsics::new(600.0, 600.0, 0.0, 600.0, 450.0).expect("valid");
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c = TargetCircle::new(
            Point2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
            rng.random_range(0.01..0.1),
        )
        .expect("positive radius");
        let w = Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
        let z = rng.random_range(0.4..1.2);
        let t = Vector3::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), z);
        let pose = PoseSE3::from_axis_angle(w, t);
        let d = distortion(rng);
        let (Ok(a), Ok(b)) = (
            estimate(Estimator::Unbiased, &c, &pose, &k, &d),
            estimate(Estimator::Numerical(512 * 512), &c, &pose, &k, &d),
        ) else {
            return f64::INFINITY;
        };
        worst = worst.max((a - b).norm());
    }
    worst
}
