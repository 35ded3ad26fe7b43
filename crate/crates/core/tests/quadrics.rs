use ivory::error::Error;
use ivory::quadrics::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

fn families() -> Vec<ConfocalFamily> {
    vec![
        ConfocalFamily::euclidean(&[4.0, 1.0]).unwrap(),
        ConfocalFamily::euclidean(&[4.0, 2.0, 1.0]).unwrap(),
        ConfocalFamily::spherical(&[3.0, 2.0], -1.0).unwrap(),
        ConfocalFamily::spherical(&[0.9, 0.5, 0.3], 1.0).unwrap(),
        ConfocalFamily::hyperbolic(&[0.6, 0.2], 1.0).unwrap(),
        ConfocalFamily::hyperbolic(&[0.8, 0.5, 0.1], 1.5).unwrap(),
    ]
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / n).collect()
}

fn random_point(rng: &mut ChaCha8Rng, g: Geometry) -> Vec<f64> {
    let n = g.dim();
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().any(|a| a.abs() < 0.02) {
            continue;
        }
        return match g {
            Geometry::Euclidean(_) => v.iter().map(|a| 3.0 * a).collect(),
            Geometry::Spherical(_) => {
                let mut w = vec![rng.random_range(-1.0..1.0)];
                w.extend(v);
                if w[0].abs() < 0.02 {
                    continue;
                }
                normalize(&w)
            }
            Geometry::Hyperbolic(_) => {
                let r = rng.random_range(0.05..2.0);
                let dir = normalize(&v);
                let mut x = vec![f64::cosh(r)];
                x.extend(dir.iter().map(|d| r.sinh() * d));
                x
            }
        };
    }
}

fn random_direction(rng: &mut ChaCha8Rng, g: Geometry, x: &[f64]) -> Vec<f64> {
    let m = g.ambient_dim();
    let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    match g {
        Geometry::Euclidean(_) => normalize(&w),
        Geometry::Spherical(_) => {
            let c: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            normalize(&w.iter().zip(x).map(|(a, b)| a - c * b).collect::<Vec<_>>())
        }
        Geometry::Hyperbolic(_) => {
            let c = minkowski(&w, x) / minkowski(x, x);
            let t: Vec<f64> = w.iter().zip(x).map(|(a, b)| a - c * b).collect();
            let n = minkowski(&t, &t).sqrt();
            t.iter().map(|a| a / n).collect()
        }
    }
}

/// `Σ (xₖ² + vₖ²)/|denominator|`: the size of the terms in the confocal
/// function and the restricted discriminant at `λ`.
fn term_scale(fam: &ConfocalFamily, l: f64, x: &[f64], v: &[f64]) -> f64 {
    let mut den: Vec<f64> = fam.a().iter().map(|a| a - l).collect();
    match fam.geometry() {
        Geometry::Spherical(_) => den.insert(0, fam.b() + l),
        Geometry::Hyperbolic(_) => den.insert(0, fam.b() - l),
        Geometry::Euclidean(_) => den.push(1.0),
    }
    let mut xs = x.to_vec();
    let mut vs = v.to_vec();
    if !fam.geometry().is_curved() {
        xs.push(1.0);
        vs.push(0.0);
    }
    xs.iter()
        .zip(&vs)
        .zip(&den)
        .map(|((a, b), d)| (a * a + b * b) / d.abs())
        .sum()
}

/// A random λ in each class interval, at least `margin` of the width from
/// its ends; unbounded classes are cut at `aₙ − 4`.
fn random_coords(rng: &mut ChaCha8Rng, fam: &ConfocalFamily) -> Vec<f64> {
    fam.class_intervals()
        .into_iter()
        .map(|(lo, hi)| {
            let lo = if lo.is_finite() { lo } else { hi - 4.0 };
            let w = hi - lo;
            rng.random_range(lo + 0.05 * w..hi - 0.05 * w)
        })
        .collect()
}

#[test]
fn axis_examples() {
    let fam = ConfocalFamily::euclidean(&[4.0, 1.0]).unwrap();
    let c = fam.confocal_parameters(&[2.0, 0.0]).unwrap();
    assert_eq!(c.lambda, vec![1.0, 0.0]);
    let c = fam.confocal_parameters(&[0.0, 1.0]).unwrap();
    assert_eq!(c.lambda, vec![4.0, 0.0]);
    assert!(matches!(
        fam.confocal_parameters_strict(&[2.0, 0.0]),
        Err(Error::DegeneratePoint(_))
    ));
    let p = fam
        .point_from_parameters(&EllipticCoords::positive(vec![0.0, 1.0], 2))
        .unwrap();
    assert!((p[0] - 2.0).abs() < 1e-15 && p[1].abs() < 1e-15);
}

#[test]
fn points_off_the_model_are_rejected() {
    let s = ConfocalFamily::spherical(&[3.0, 2.0], -1.0).unwrap();
    assert!(matches!(
        s.confocal_parameters(&[1.0, 1.0, 1.0]),
        Err(Error::NotOnModel(_))
    ));
    let h = ConfocalFamily::hyperbolic(&[0.6, 0.2], 1.0).unwrap();
    assert!(matches!(
        h.confocal_parameters(&[1.0, 0.5, 0.5]),
        Err(Error::NotOnModel(_))
    ));
    assert!(matches!(
        h.confocal_parameters(&[-(1.5f64.sqrt()), 0.5, 0.5]),
        Err(Error::NotOnModel(_))
    ));
}

#[test]
fn roots_interlace_and_solve_the_confocal_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for fam in families() {
        let classes = fam.class_intervals();
        for _ in 0..1000 {
            let x = random_point(&mut rng, fam.geometry());
            let c = fam.confocal_parameters_strict(&x).unwrap();
            assert_eq!(c.lambda.len(), fam.dim());
            for (l, (lo, hi)) in c.lambda.iter().zip(&classes) {
                assert!(l > lo && l < hi, "{l} not in ({lo}, {hi})");
                let scale = term_scale(&fam, *l, &x, &vec![0.0; x.len()]);
                let res = fam.confocal_function(*l, &x);
                assert!(
                    res.abs() < 1e-10 * scale,
                    "{:?} λ = {l}: {res} (scale {scale})",
                    fam.geometry()
                );
            }
        }
    }
}

#[test]
fn confocal_quadrics_meet_orthogonally() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for fam in families().into_iter().filter(|f| !f.geometry().is_curved()) {
        for _ in 0..1000 {
            let x = random_point(&mut rng, fam.geometry());
            let c = fam.confocal_parameters(&x).unwrap();
            let grads: Vec<Vec<f64>> = c
                .lambda
                .iter()
                .map(|&l| normalize(&fam.gradient(l, &x)))
                .collect();
            for i in 0..grads.len() {
                for j in i + 1..grads.len() {
                    let d: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum();
                    assert!(d.abs() < 1e-9, "{d}");
                }
            }
        }
    }
}

#[test]
fn curved_confocal_quadrics_meet_orthogonally_on_the_model() {
    // Tangential parts of the ambient gradients are orthogonal in the model metric.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for fam in families().into_iter().filter(|f| f.geometry().is_curved()) {
        let g = fam.geometry();
        let ip = |x: &[f64], y: &[f64]| match g {
            Geometry::Hyperbolic(_) => minkowski(x, y),
            _ => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        };
        for _ in 0..300 {
            let x = random_point(&mut rng, g);
            let c = fam.confocal_parameters(&x).unwrap();
            let tang: Vec<Vec<f64>> = c
                .lambda
                .iter()
                .map(|&l| {
                    let mut gr = fam.gradient(l, &x);
                    if matches!(g, Geometry::Hyperbolic(_)) {
                        gr[0] = -gr[0];
                    }
                    let k = ip(&gr, &x) / ip(&x, &x);
                    let t: Vec<f64> = gr.iter().zip(&x).map(|(a, b)| a - k * b).collect();
                    let n = ip(&t, &t).sqrt();
                    t.iter().map(|a| a / n).collect()
                })
                .collect();
            for i in 0..tang.len() {
                for j in i + 1..tang.len() {
                    assert!(ip(&tang[i], &tang[j]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn coordinates_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for fam in families() {
        let m = fam.geometry().ambient_dim();
        for _ in 0..500 {
            let lam = random_coords(&mut rng, &fam);
            let p = fam
                .point_from_parameters(&EllipticCoords::positive(lam.clone(), m))
                .unwrap();
            let back = fam.confocal_parameters(&p).unwrap().lambda;
            for (a, b) in lam.iter().zip(&back) {
                assert!(
                    (a - b).abs() < 1e-9,
                    "{:?}: {lam:?} vs {back:?}",
                    fam.geometry()
                );
            }
            let x = random_point(&mut rng, fam.geometry());
            let c = fam.confocal_parameters(&x).unwrap();
            let y = fam.point_from_parameters(&c).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-9, "{x:?} vs {y:?}");
            }
        }
    }
}

#[test]
fn parameters_outside_the_classes_have_no_point() {
    let fam = ConfocalFamily::euclidean(&[4.0, 1.0]).unwrap();
    // Both parameters in the ellipse class.
    let r = fam.point_from_parameters(&EllipticCoords::positive(vec![0.5, 0.2], 2));
    assert!(matches!(r, Err(Error::NoRealPoint(_))));
    let r = fam.point_from_parameters(&EllipticCoords::positive(vec![0.5, 0.5], 2));
    assert!(r.is_err());
}

#[test]
fn planar_ivory_example() {
    let fam = ConfocalFamily::euclidean(&[4.0, 1.0]).unwrap();
    let r = fam
        .ivory_parallelepiped_check(&[(1.5, 2.5), (0.2, 0.5)], 1e-9)
        .unwrap();
    assert_eq!(r.diagonals.len(), 2);
    assert!(r.spread < 1e-9 && r.pass, "{r:?}");
    // Direct distances between opposite vertices.
    let d = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let v = &r.vertices;
    assert!((d(&v[0], &v[3]) - d(&v[1], &v[2])).abs() < 1e-9);
}

#[test]
fn spherical_quadrilateral_example() {
    let fam = ConfocalFamily::spherical(&[3.0, 2.0], -1.0).unwrap();
    let r = fam
        .ivory_parallelepiped_check(&[(2.2, 2.7), (1.3, 1.8)], 1e-9)
        .unwrap();
    assert!(r.spread < 1e-9, "{r:?}");
    for v in &r.vertices {
        assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn random_box(rng: &mut ChaCha8Rng, fam: &ConfocalFamily) -> Vec<(f64, f64)> {
    loop {
        let a = random_coords(rng, fam);
        let b = random_coords(rng, fam);
        let classes = fam.class_intervals();
        let ok = a.iter().zip(&b).zip(&classes).all(|((x, y), (lo, hi))| {
            let w = if lo.is_finite() { hi - lo } else { 4.0 };
            (x - y).abs() > 0.03 * w
        });
        if ok {
            return a
                .into_iter()
                .zip(b)
                .map(|(x, y)| (x.min(y), x.max(y)))
                .collect();
        }
    }
}

#[test]
fn ivory_boxes_have_equal_great_diagonals() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for fam in families() {
        for _ in 0..200 {
            let iv = random_box(&mut rng, &fam);
            let r = fam.ivory_parallelepiped_check(&iv, 1e-8).unwrap();
            assert_eq!(r.diagonals.len(), 1 << (fam.dim() - 1));
            assert!(r.pass, "{:?} {iv:?}: spread {}", fam.geometry(), r.spread);
        }
    }
}

#[test]
fn ivory_rejects_intervals_across_classes() {
    let fam = ConfocalFamily::euclidean(&[4.0, 1.0]).unwrap();
    assert!(fam
        .ivory_parallelepiped_check(&[(0.5, 2.5), (0.2, 0.5)], 1e-9)
        .is_err());
    assert!(fam.ivory_parallelepiped_check(&[(1.5, 2.5)], 1e-9).is_err());
}

#[test]
fn tangent_line_examples() {
    let fam = ConfocalFamily::euclidean(&[4.0, 1.0]).unwrap();
    let t = fam
        .tangent_parameters_of_line(&[2.0, 0.0], &[0.0, 1.0])
        .unwrap();
    assert_eq!(t.len(), 1);
    assert!(t[0].lambda.abs() < 1e-12);
    let t = fam
        .tangent_parameters_of_line(&[3f64.sqrt(), 0.0], &[0.6, 0.8])
        .unwrap();
    assert!((t[0].lambda - 1.0).abs() < 1e-12 && t[0].focal);
}

#[test]
fn chords_of_the_base_ellipse_touch_a_confocal_conic() {
    // Oracle: the extreme value of F(λ, p + t v) over t is zero at tangency.
    let fam = ConfocalFamily::euclidean(&[4.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let s: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let u: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let p = [2.0 * s.cos(), s.sin()];
        let q = [2.0 * u.cos(), u.sin()];
        let v = normalize(&[q[0] - p[0], q[1] - p[1]]);
        if (q[0] - p[0]).hypot(q[1] - p[1]) < 1e-3 {
            continue;
        }
        let t = fam.tangent_parameters_of_line(&p, &v).unwrap();
        assert_eq!(t.len(), 1);
        let l = t[0].lambda;
        assert!((l > 0.0 && l < 1.0) || (l > 1.0 && l < 4.0), "{l}");
        let a = v[0] * v[0] / (4.0 - l) + v[1] * v[1] / (1.0 - l);
        let b = p[0] * v[0] / (4.0 - l) + p[1] * v[1] / (1.0 - l);
        let c = p[0] * p[0] / (4.0 - l) + p[1] * p[1] / (1.0 - l) - 1.0;
        let extreme = c - b * b / a;
        assert!(extreme.abs() < 1e-9 * (1.0 + c.abs()), "λ = {l}: {extreme}");
    }
}

#[test]
fn every_tangent_parameter_is_a_double_intersection() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for fam in families() {
        let g = fam.geometry();
        for _ in 0..300 {
            let x = random_point(&mut rng, g);
            let v = random_direction(&mut rng, g, &x);
            let t = fam.tangent_parameters_of_line(&x, &v).unwrap();
            assert_eq!(t.len(), fam.dim() - 1, "{g:?}");
            for tp in t {
                let d = fam.restricted_discriminant(tp.lambda, &x, &v);
                let s = term_scale(&fam, tp.lambda, &x, &v).powi(2);
                assert!(d.abs() < 1e-10 * s, "{g:?} λ = {}: {d}", tp.lambda);
            }
        }
    }
}

#[test]
fn distance_examples_and_axioms() {
    assert_eq!(
        geodesic_distance(Geometry::Euclidean(2), &[0.0, 0.0], &[3.0, 4.0]).unwrap(),
        5.0
    );
    let d = geodesic_distance(Geometry::Spherical(2), &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
    assert!((d - FRAC_PI_2).abs() < 1e-15);
    let x = [1.25, 0.75, 0.0];
    assert_eq!(
        geodesic_distance(Geometry::Hyperbolic(2), &x, &x).unwrap(),
        0.0
    );
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for g in [
        Geometry::Euclidean(3),
        Geometry::Spherical(2),
        Geometry::Hyperbolic(3),
    ] {
        for _ in 0..500 {
            let (a, b, c) = (
                random_point(&mut rng, g),
                random_point(&mut rng, g),
                random_point(&mut rng, g),
            );
            let ab = geodesic_distance(g, &a, &b).unwrap();
            assert_eq!(ab, geodesic_distance(g, &b, &a).unwrap());
            let bc = geodesic_distance(g, &b, &c).unwrap();
            let ac = geodesic_distance(g, &a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn euclidean_round_trip(a1 in 2.0f64..6.0, r2 in 0.2f64..0.8, r3 in 0.1f64..0.8,
                            x in prop::collection::vec(0.05f64..3.0, 3),
                            signs in prop::collection::vec(any::<bool>(), 3)) {
        let a2 = a1 * r2;
        let a3 = a2 * r3;
        let fam = ConfocalFamily::euclidean(&[a1, a2, a3]).unwrap();
        let p: Vec<f64> = x.iter().zip(&signs).map(|(v, s)| if *s { -v } else { *v }).collect();
        let c = fam.confocal_parameters_strict(&p).unwrap();
        prop_assert!(c.lambda[0] > a2 && c.lambda[0] < a1);
        prop_assert!(c.lambda[1] > a3 && c.lambda[1] < a2);
        prop_assert!(c.lambda[2] < a3);
        let q = fam.point_from_parameters(&c).unwrap();
        for (u, v) in p.iter().zip(&q) {
            prop_assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn hyperbolic_plane_boxes(a1 in 0.2f64..0.9, r in 0.1f64..0.9, s in prop::collection::vec(0.05f64..0.95, 4)) {
        let a2 = a1 * r;
        let fam = ConfocalFamily::hyperbolic(&[a1, a2], 1.0).unwrap();
        let hi = |k: usize| a2 + (a1 - a2) * s[k];
        let lo = |k: usize| a2 - 4.0 * s[k];
        let (h0, h1) = (hi(0).min(hi(1)), hi(0).max(hi(1)));
        let (l0, l1) = (lo(2).min(lo(3)), lo(2).max(lo(3)));
        prop_assume!(h1 - h0 > 1e-3 && l1 - l0 > 1e-3);
        let rep = fam.ivory_parallelepiped_check(&[(h0, h1), (l0, l1)], 1e-8).unwrap();
        prop_assert!(rep.pass, "{}", rep.spread);
    }
}
