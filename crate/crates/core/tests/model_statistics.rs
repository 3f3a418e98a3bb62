use prelog_lab::linalg::{CMatrix, CVector};
use prelog_lab::model::{self, build_mix_matrix};
use prelog_lab::rng::stream;
use prelog_lab::{Complex64, CorrelationSet, Dims, FadingDraw, InputBlock, PilotPattern};

fn dims() -> Dims {
    Dims::new(2, 3, 4).unwrap()
}

#[test]
fn fading_moments() {
    let d = dims();
    let draws = 100_000u64;
    let (mut sum, mut power, mut above) = (Complex64::new(0.0, 0.0), 0.0, 0usize);
    for i in 0..draws {
        let s = FadingDraw::draw(d, &mut stream(1, i));
        let v = s.get(1, 0);
        sum += v;
        power += v.norm_sqr();
        above += (v.norm_sqr() > 1.0) as usize;
    }
    let n = draws as f64;
    assert!((sum / n).norm() < 0.02);
    assert!((power / n - 1.0).abs() < 0.02);
    // |s|^2 ~ Exp(1)
    let tail = above as f64 / n;
    assert!((tail - (-1.0f64).exp()).abs() < 0.01, "{tail}");
}

#[test]
fn input_energy_matches_power_constraint() {
    let d = dims();
    let draws = 10_000u64;
    let mean: f64 = (0..draws)
        .map(|i| InputBlock::gaussian(d, &PilotPattern::empty(), &mut stream(2, i)).unwrap().energy())
        .sum::<f64>()
        / draws as f64;
    assert!((mean - 8.0).abs() < 0.3, "{mean}");
}

#[test]
fn pilots_overwrite_gaussian_entries() {
    let p = PilotPattern::unit(&[(0, 0), (1, 1)]).unwrap();
    for i in 0..20 {
        let x = InputBlock::gaussian(dims(), &p, &mut stream(3, i)).unwrap();
        assert_eq!(x.get(0, 0), Complex64::new(1.0, 0.0));
        assert_eq!(x.get(1, 1), Complex64::new(1.0, 0.0));
    }
}

#[test]
fn constant_model_outputs_span_t_dimensions() {
    let d = dims();
    let z = CorrelationSet::constant(d).unwrap();
    for i in 0..50 {
        let mut rng = stream(4, i);
        let x = InputBlock::gaussian(d, &PilotPattern::empty(), &mut rng).unwrap();
        let s = FadingDraw::draw(d, &mut rng);
        let ybar = model::noiseless(&z, &x, &s).unwrap();
        // columns are the per-antenna vectors ybar_r
        let m = CMatrix::from_fn(d.n, d.r, |n, r| ybar[r * d.n + n]);
        let sv = m.singular_values();
        let rank = sv.iter().filter(|&&v| v > 1e-10 * sv.max()).count();
        assert_eq!(rank, 2);
    }
}

#[test]
fn injected_noise_is_recovered_exactly() {
    let d = dims();
    let z = CorrelationSet::generic_random(d, 5).unwrap();
    let mut rng = stream(5, 0);
    let x = InputBlock::gaussian(d, &PilotPattern::empty(), &mut rng).unwrap();
    let s = FadingDraw::draw(d, &mut rng);
    let w: Vec<Complex64> = (0..12).map(|i| Complex64::new(i as f64, -0.5)).collect();
    let rho = 37.0;
    let obs = model::simulate_with_noise(&z, &x, &s, rho, &w).unwrap();
    let b = build_mix_matrix(&z, &x).unwrap();
    let sv = CVector::from_vec(s.stacked());
    let resid = &obs.y - b.matrix() * sv * Complex64::new((rho / 2.0).sqrt(), 0.0);
    for (a, b) in resid.iter().zip(&w) {
        assert!((a - b).norm() < 1e-12);
    }
}

fn empirical_covariance(z: &CorrelationSet, x: &InputBlock, rho: f64, draws: u64, seed: u64) -> CMatrix {
    let d = z.dims();
    let mut acc = CMatrix::zeros(d.rn(), d.rn());
    for i in 0..draws {
        let mut rng = stream(seed, i);
        let s = FadingDraw::draw(d, &mut rng);
        let y = model::simulate(z, x, &s, rho, &mut rng).unwrap().y;
        acc += &y * y.adjoint();
    }
    acc / Complex64::new(draws as f64, 0.0)
}

#[test]
fn conditional_covariance_matches_mix_matrix() {
    let d = dims();
    let z = CorrelationSet::generic_random(d, 6).unwrap();
    let x = InputBlock::gaussian(d, &PilotPattern::empty(), &mut stream(6, 999)).unwrap();
    let rho = 10.0;
    let b = build_mix_matrix(&z, &x).unwrap().into_matrix();
    let want = &b * b.adjoint() * Complex64::new(rho / 2.0, 0.0) + CMatrix::identity(12, 12);
    let got = empirical_covariance(&z, &x, rho, 100_000, 7);
    let rel = (&got - &want).norm() / want.norm();
    assert!(rel <= 0.05, "{rel}");
}

#[test]
fn zero_input_gives_white_output() {
    let d = dims();
    let z = CorrelationSet::generic_random(d, 8).unwrap();
    let got = empirical_covariance(&z, &InputBlock::zeros(d), 1e6, 20_000, 8);
    let rel = (&got - CMatrix::identity(12, 12)).norm() / 12f64.sqrt();
    assert!(rel <= 0.05, "{rel}");
}
