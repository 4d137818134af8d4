//! Field synthesis, detection and the pair estimator on controlled inputs.

use chargecorr::sampler::{
    defining_vector, reduced_chi_square, winding_number, DetectOptions, FieldJet, PlanarField, RealizationTally,
};
use chargecorr::special::bessel_j;
use chargecorr::{
    detect, simulate, synthesize, CorrelationModel, PairHistogram, SimulationConfig, Singularity, SingularityKind, Window,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RING: CorrelationModel = CorrelationModel::Ring2D;
const GAUSS: CorrelationModel = CorrelationModel::GaussianC;

/// Deterministic polynomial test fields centred at (5, 5).
enum Poly {
    /// f = ((x-5)^2 - (y-5)^2)/2: one saddle
    Saddle,
    /// f = (x^3 - 3 x y^2)/6 about the centre: one umbilic of v_u = (x, -y)
    Monkey,
    /// v = (x - 5, -(y - 5)): one negative zero
    Hyperbolic,
}

impl PlanarField for Poly {
    fn components(&self) -> usize {
        match self {
            Poly::Hyperbolic => 2,
            _ => 1,
        }
    }

    fn jet(&self, component: usize, x: f64, y: f64) -> FieldJet {
        let (x, y) = (x - 5.0, y - 5.0);
        match self {
            Poly::Saddle => FieldJet {
                f: (x * x - y * y) / 2.0,
                fx: x,
                fy: -y,
                fxx: 1.0,
                fyy: -1.0,
                ..Default::default()
            },
            Poly::Monkey => FieldJet {
                f: (x * x * x - 3.0 * x * y * y) / 6.0,
                fx: (x * x - y * y) / 2.0,
                fy: -x * y,
                fxx: x,
                fxy: -y,
                fyy: -x,
                fxxx: 1.0,
                fxyy: -1.0,
                ..Default::default()
            },
            Poly::Hyperbolic if component == 0 => FieldJet { f: x, fx: 1.0, ..Default::default() },
            Poly::Hyperbolic => FieldJet { f: -y, fy: -1.0, ..Default::default() },
        }
    }
}

fn unit_options() -> DetectOptions {
    DetectOptions { resolution: 24.0, wavelength: 2.0 * std::f64::consts::PI, gradient_scale: 1.0 }
}

#[test]
fn polynomial_fields_have_one_negative_singularity() {
    let window = Window::square(10.0, 1.0);
    let cases = [
        (Poly::Saddle, SingularityKind::Critical2D),
        (Poly::Monkey, SingularityKind::Umbilic2D),
        (Poly::Hyperbolic, SingularityKind::VectorZero(2)),
    ];
    for (field, kind) in cases {
        let (points, diag) = detect(&field, kind, window, &unit_options());
        assert_eq!(points.len(), 1, "{kind}: {points:?}");
        let s = points[0];
        assert_eq!(s.charge, -1, "{kind}");
        assert!((s.position[0] - 5.0).abs() < 1e-9 && (s.position[1] - 5.0).abs() < 1e-9, "{kind}: {s:?}");
        assert_eq!(diag.dropped, 0);
        assert_eq!(diag.winding_mismatches, 0);
    }
}

#[test]
fn field_normalisation() {
    let window = Window::square(40.0, 8.0);
    let kind = SingularityKind::Critical2D;
    for (model, fx2_want) in [(RING, 0.5), (GAUSS, 1.0)] {
        let mut f2 = Vec::new();
        let mut fx2 = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for index in 0..40 {
            let field = synthesize(&model, kind, window, 256, 11, index).unwrap();
            let (mut a, mut b) = (0.0, 0.0);
            let n = 250;
            for _ in 0..n {
                let j = field.jet(0, rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0));
                a += j.f * j.f;
                b += j.fx * j.fx;
            }
            f2.push(a / n as f64);
            fx2.push(b / n as f64);
        }
        // realization means are independent; points within one are not
        for (values, want) in [(&f2, 1.0), (&fx2, fx2_want)] {
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let se = (var / m).sqrt();
            assert!((mean - want).abs() < 3.0 * (se + 1.0 / 256f64.sqrt()) , "{model}: {mean} vs {want} (se {se})");
            assert!((mean - want).abs() < 4.0 * se + 0.02, "{model}: {mean} vs {want} (se {se})");
        }
    }
}

#[test]
fn two_point_covariance_matches_bessel() {
    let window = Window::square(40.0, 8.0);
    let mut products = Vec::new();
    for index in 0..300 {
        let field = synthesize(&RING, SingularityKind::Critical2D, window, 256, 5, index).unwrap();
        let mut acc = 0.0;
        for k in 0..10 {
            let y = 2.0 + 3.6 * k as f64;
            acc += field.jet(0, 10.0, y).f * field.jet(0, 12.0, y).f;
        }
        products.push(acc / 10.0);
    }
    let m = products.len() as f64;
    let mean = products.iter().sum::<f64>() / m;
    let se = (products.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
    let want = bessel_j(0, 2.0);
    assert!((want - 0.2238907791412357).abs() < 1e-12);
    assert!((mean - want).abs() < 4.0 * se, "{mean} vs {want} (se {se})");
}

fn fine_winding<F: PlanarField>(field: &F, kind: SingularityKind, lo: [f64; 2], hi: [f64; 2]) -> i32 {
    let per_side = 4000;
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for side in 0..4 {
        let (a, b) = (corners[side], corners[(side + 1) % 4]);
        for s in 0..=per_side {
            let t = s as f64 / per_side as f64;
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let (v, _) = defining_vector(field, kind, p);
            let angle = v[1].atan2(v[0]);
            if let Some(q) = prev {
                let mut d = angle - q;
                d -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
                total += d;
            }
            prev = Some(angle);
        }
    }
    (total / std::f64::consts::TAU).round() as i32
}

#[test]
fn winding_around_a_loop_is_the_enclosed_charge() {
    let window = Window::square(30.0, 6.0);
    for kind in [SingularityKind::VectorZero(2), SingularityKind::Critical2D, SingularityKind::Umbilic2D] {
        let options = DetectOptions::for_model(&RING, kind).unwrap();
        for index in 0..3 {
            let field = synthesize(&RING, kind, window, 256, 9, index).unwrap();
            let (points, _) = detect(&field, kind, window, &options);
            // loop edges kept away from detected points
            let (mut lo, mut hi) = ([8.0, 9.0], [21.0, 19.5]);
            for _ in 0..20 {
                let near = points.iter().any(|s| {
                    let p = s.position;
                    let on_x = (p[1] >= lo[1] && p[1] <= hi[1]) && ((p[0] - lo[0]).abs() < 0.05 || (p[0] - hi[0]).abs() < 0.05);
                    let on_y = (p[0] >= lo[0] && p[0] <= hi[0]) && ((p[1] - lo[1]).abs() < 0.05 || (p[1] - hi[1]).abs() < 0.05);
                    on_x || on_y
                });
                if !near {
                    break;
                }
                lo = [lo[0] + 0.137, lo[1] + 0.093];
                hi = [hi[0] - 0.071, hi[1] - 0.113];
            }
            let enclosed: i32 = points
                .iter()
                .filter(|s| s.position[0] > lo[0] && s.position[0] < hi[0] && s.position[1] > lo[1] && s.position[1] < hi[1])
                .map(|s| s.charge as i32)
                .sum();
            assert_eq!(fine_winding(&field, kind, lo, hi), enclosed, "{kind} realization {index}");
            // the detector's own small-loop winding agrees with each charge
            for s in points.iter().filter(|s| window.in_inner(s.position)).take(20) {
                assert_eq!(winding_number(&field, kind, s.position, 1e-3), s.charge as i32);
            }
        }
    }
}

#[test]
fn detection_quality_and_umbilic_index() {
    let mut config = SimulationConfig::new(SingularityKind::Umbilic2D);
    config.realizations = 24;
    config.seed = 77;
    let run = simulate(&RING, &config).unwrap();
    let d = run.diagnostics;
    assert_eq!(d.winding_mismatches, 0, "{d:?}");
    assert!(d.drop_rate() < 1e-3, "{d:?}");
    assert!((d.loose_residuals as f64) <= 1e-3 * d.accepted as f64, "{d:?}");

    // positive-charge fraction of umbilics: one half
    let mut fractions = Vec::new();
    for index in 0..24 {
        let field = synthesize(&RING, config.kind, config.window, 256, 77, index).unwrap();
        let options = DetectOptions::for_model(&RING, config.kind).unwrap();
        let (points, _) = detect(&field, config.kind, config.window, &options);
        let inner: Vec<&Singularity> = points.iter().filter(|s| config.window.in_inner(s.position)).collect();
        assert!(inner.iter().all(|s| s.charge.abs() == 1));
        let positive = inner.iter().filter(|s| s.charge > 0).count();
        fractions.push(positive as f64 / inner.len() as f64);
    }
    let m = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / m;
    let se = (fractions.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
    assert!((mean - 0.5).abs() < 3.0 * se, "{mean} (se {se})");
}

#[test]
fn doubling_the_wave_count_leaves_g_unchanged() {
    let kind = SingularityKind::VectorZero(2);
    let mut config = SimulationConfig::new(kind);
    config.realizations = 30;
    config.bin_width = 1.0;
    let mut estimates = Vec::new();
    for (waves, seed) in [(128, 101), (256, 202)] {
        config.waves = waves;
        config.seed = seed;
        estimates.push(simulate(&RING, &config).unwrap().histogram.estimate_g());
    }
    let mut chi2 = 0.0;
    for (a, b) in estimates[0].iter().zip(&estimates[1]) {
        chi2 += (a.g - b.g).powi(2) / (a.stderr.powi(2) + b.stderr.powi(2));
    }
    let dof = estimates[0].len() as f64;
    assert!(chi2 / dof < 2.5, "reduced chi2 {}", chi2 / dof);
}

#[test]
fn poisson_points_show_no_correlation() {
    let window = Window::square(40.0, 8.0);
    let mut histogram = PairHistogram::new(0.5, 8.0, window).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let points: Vec<Singularity> = (0..130)
            .map(|_| Singularity {
                position: [rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0)],
                kind: SingularityKind::VectorZero(2),
                charge: if rng.gen::<bool>() { 1 } else { -1 },
                residual: 0.0,
            })
            .collect();
        histogram.push(histogram.tally(&points));
    }
    let bins = histogram.estimate_g();
    let (chi2, dof) = reduced_chi_square(&bins, |_| Ok(0.0), 0.5, 8.0).unwrap();
    assert!(chi2 < 2.0, "chi2 {chi2} over {dof} bins");
    // no screening: Q(R) stays at 0 rather than approaching -1
    let q = histogram.empirical_screening();
    let last = q.last().unwrap();
    assert!(last.q.abs() < 4.0 * last.stderr, "{last:?}");
    assert!(q[0].q.abs() < 0.05);
}

#[test]
fn histogram_merge_is_order_independent() {
    let window = Window::square(20.0, 4.0);
    let base = PairHistogram::new(0.5, 4.0, window).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tallies: Vec<RealizationTally> = (0..6)
        .map(|_| {
            let pts: Vec<Singularity> = (0..40)
                .map(|_| Singularity {
                    position: [rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0)],
                    kind: SingularityKind::Critical2D,
                    charge: if rng.gen::<bool>() { 1 } else { -1 },
                    residual: 0.0,
                })
                .collect();
            base.tally(&pts)
        })
        .collect();
    let mut forward = base.clone();
    tallies.iter().cloned().for_each(|t| forward.push(t));
    let mut a = base.clone();
    let mut b = base.clone();
    for (i, t) in tallies.iter().enumerate().rev() {
        if i % 2 == 0 { a.push(t.clone()) } else { b.push(t.clone()) }
    }
    b.merge(a);
    assert_eq!(forward.estimate_g(), b.estimate_g());
    assert_eq!(forward.density(), b.density());
}

#[test]
fn runs_are_reproducible_across_thread_counts() {
    let mut config = SimulationConfig::new(SingularityKind::Critical2D);
    config.realizations = 6;
    config.window = Window::square(24.0, 4.0);
    config.r_max = 4.0;
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| simulate(&GAUSS, &config).unwrap());
    let b = wide.install(|| simulate(&GAUSS, &config).unwrap());
    assert_eq!(a, b);
    let f1 = synthesize(&GAUSS, config.kind, config.window, 64, 3, 4).unwrap();
    let f2 = synthesize(&GAUSS, config.kind, config.window, 64, 3, 4).unwrap();
    assert_eq!(f1, f2);
}
