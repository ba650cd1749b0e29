use ftc::flows::{FlowKind, FlowSystem};
use ftc::integrate::{Epoch, Jacobian2};
use ftc::spectral::{foliation_from_jacobians, foliation_pair, ftle, svd2, KernelSettings};
use ftc::{Point2, Vector2};
use rand::{rngs::StdRng, Rng, SeedableRng};
use std::f64::consts::{E, FRAC_PI_2};

/// Eigenvalues of the symmetric matrix `MᵀM` by the quadratic formula,
/// larger root first; the smaller root comes from Vieta's product.
fn gram_eigen_oracle(m: &Jacobian2) -> (f64, f64) {
    let p = m.a11 * m.a11 + m.a21 * m.a21;
    let q = m.a12 * m.a12 + m.a22 * m.a22;
    let r = m.a11 * m.a12 + m.a21 * m.a22;
    let trace = p + q;
    let det = p * q - r * r;
    let disc = ((p - q) * (p - q) + 4.0 * r * r).sqrt();
    let big = 0.5 * (trace + disc);
    let small = if big > 0.0 { det.max(0.0) / big } else { 0.0 };
    (big, small)
}

fn random_matrix(rng: &mut StdRng) -> Jacobian2 {
    let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
    Jacobian2::new(
        scale * rng.gen_range(-1.0..1.0),
        scale * rng.gen_range(-1.0..1.0),
        scale * rng.gen_range(-1.0..1.0),
        scale * rng.gen_range(-1.0..1.0),
    )
}

#[test]
fn svd_reconstructs_and_matches_eigen_oracle() {
    let mut rng = StdRng::seed_from_u64(2024);
    for _ in 0..1000 {
        let m = random_matrix(&mut rng);
        let s = svd2(&m);
        let r = s.reconstruct();
        let err = Jacobian2::new(r.a11 - m.a11, r.a12 - m.a12, r.a21 - m.a21, r.a22 - m.a22).norm();
        assert!(err <= 1e-12 * m.norm(), "reconstruction {err:e} for {m:?}");
        assert!(s.sigma1 >= s.sigma2 && s.sigma2 >= 0.0);
        for (a, b) in [(s.u1, s.u2), (s.v1, s.v2)] {
            assert!((a.norm() - 1.0).abs() <= 1e-12 && (b.norm() - 1.0).abs() <= 1e-12);
            assert!(a.dot(b).abs() <= 1e-12);
        }
        let (big, small) = gram_eigen_oracle(&m);
        assert!((s.sigma1 * s.sigma1 - big).abs() <= 1e-12 * big, "σ1² {} vs {big}", s.sigma1 * s.sigma1);
        assert!(
            (s.sigma2 * s.sigma2 - small).abs() <= 1e-12 * big,
            "σ2² {} vs {small}",
            s.sigma2 * s.sigma2
        );
    }
}

#[test]
fn ftle_closed_forms() {
    let settings = KernelSettings::default();
    let z = Point2::new(0.1, -0.2);
    let identity = FlowSystem::identity();
    assert!(ftle(&identity, z, Epoch::new(0.0, 3.0), &settings).unwrap().abs() < 1e-8);
    let rot = FlowSystem::rigid_rotation(1.0);
    for tau in [0.5, 2.0, -1.0] {
        assert!(ftle(&rot, z, Epoch::new(0.0, tau), &settings).unwrap().abs() < 1e-6);
    }
    let saddle = FlowSystem::linear_saddle(1.0);
    let z = Point2::new(1e-3, 0.5);
    let v = ftle(&saddle, z, Epoch::new(0.0, 5.0), &settings).unwrap();
    assert!((v - 1.0).abs() < 1e-3, "{v}");
    // Backward stretching of the saddle is also e^τ and stays positive.
    let v = ftle(&saddle, Point2::new(0.5, 1e-3), Epoch::new(0.0, -5.0), &settings).unwrap();
    assert!((v - 1.0).abs() < 1e-3, "{v}");
}

#[test]
fn saddle_foliation_from_flow() {
    let saddle = FlowSystem::linear_saddle(1.0);
    let f = foliation_pair(&saddle, Point2::new(0.2, 0.1), Epoch::new(0.0, 1.0), &KernelSettings::default()).unwrap();
    assert!(f.f_s.x.abs() < 1e-6 && (f.f_s.y.abs() - 1.0).abs() < 1e-6, "{:?}", f.f_s);
    assert!(f.f_u.y.abs() < 1e-6 && (f.f_u.x.abs() - 1.0).abs() < 1e-6, "{:?}", f.f_u);
    assert!((f.theta - FRAC_PI_2).abs() < 1e-6);
}

#[test]
fn rotation_foliation_is_degenerate() {
    let rot = FlowSystem::rigid_rotation(1.0);
    let f = foliation_pair(&rot, Point2::new(0.2, 0.1), Epoch::new(0.0, 1.0), &KernelSettings::default()).unwrap();
    assert!(f.degenerate);
}

#[test]
fn shear_foliation_matches_eigen_oracle() {
    let gamma = 2.0;
    let j = Jacobian2::new(1.0, gamma, 0.0, 1.0);
    let f = foliation_from_jacobians(&j, &j);
    // For MᵀM = [[1, γ], [γ, 1+γ²]], the eigenvector of the smaller root λ
    // is (γ, λ−1) up to scale; for MMᵀ = [[1+γ², γ], [γ, 1]] the larger
    // root Λ has eigenvector (γ, Λ−1−γ²).
    let m = j;
    let (big, small) = gram_eigen_oracle(&m);
    let v2 = Vector2::new(gamma, small - 1.0).normalized();
    let u1 = Vector2::new(gamma, big - 1.0 - gamma * gamma).normalized();
    assert!(f.f_s.cross(v2).abs() < 1e-12, "{:?} vs {v2:?}", f.f_s);
    assert!(f.f_u.cross(u1).abs() < 1e-12, "{:?} vs {u1:?}", f.f_u);
    assert!(f.theta > 0.0);
    assert!(!f.degenerate);
}

#[test]
fn area_preserving_log_singular_values_cancel() {
    let flow = FlowSystem::builtin(FlowKind::DoubleGyre).unwrap();
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..50 {
        let z = Point2::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0));
        let f = foliation_pair(&flow, z, Epoch::new(0.0, 10.0), &KernelSettings::default()).unwrap();
        for s in [f.forward, f.backward] {
            assert!((s.sigma1.ln() + s.sigma2.ln()).abs() <= 2e-3, "{s:?}");
        }
        assert!((0.0..=FRAC_PI_2).contains(&f.theta));
    }
}

#[test]
fn ftle_is_continuous_off_ridges() {
    let flow = FlowSystem::builtin(FlowKind::DoubleGyre).unwrap();
    let settings = KernelSettings::default();
    let epoch = Epoch::new(0.0, 10.0);
    let mut rng = StdRng::seed_from_u64(17);
    let mut accepted = 0;
    while accepted < 10 {
        let z = Point2::new(rng.gen_range(0.05..1.95), rng.gen_range(0.05..0.95));
        let base = ftle(&flow, z, epoch, &settings).unwrap();
        let diffs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&d| (ftle(&flow, z + Vector2::new(d, d), epoch, &settings).unwrap() - base).abs())
            .collect();
        // Points whose 1e-2 neighbourhood already changes by O(1) straddle a ridge.
        if diffs[0] > 0.05 {
            continue;
        }
        accepted += 1;
        assert!(diffs[1] <= diffs[0] + 1e-4 && diffs[2] <= diffs[1] + 1e-4, "{z:?}: {diffs:?}");
        assert!(diffs[2] < diffs[0], "{z:?}: {diffs:?}");
    }
}

#[test]
fn e_constant_sanity() {
    let s = svd2(&Jacobian2::new(E, 0.0, 0.0, 1.0 / E));
    assert!((s.sigma1.ln() - 1.0).abs() < 1e-15);
}
