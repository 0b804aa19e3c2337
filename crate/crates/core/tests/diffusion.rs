//! Diffusion identities on random systems: the closed-form assembly equals
//! the outer product of the noise coefficient, and the state Hessian of
//! each entry matches second differences (the entries are quadratic in the
//! state, so central differences are exact up to rounding).

mod common;

use bilinear_sde::linalg::Matrix;
use bilinear_sde::{BilinearSde, Interpretation};
use common::{random_system, SplitMix};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn entry(sys: &BilinearSde, x: &[f64], t: f64, i: usize, j: usize) -> f64 {
    sys.diffusion_matrix(x, t).unwrap()[(i, j)]
}

fn second_difference(
    sys: &BilinearSde,
    x: &[f64],
    t: f64,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
) -> f64 {
    let hk = 1e-4 * (1.0 + x[k].abs());
    let hl = 1e-4 * (1.0 + x[l].abs());
    if k == l {
        let mut xp = x.to_vec();
        xp[k] += hk;
        let mut xm = x.to_vec();
        xm[k] -= hk;
        (entry(sys, &xp, t, i, j) - 2.0 * entry(sys, x, t, i, j) + entry(sys, &xm, t, i, j))
            / (hk * hk)
    } else {
        let probe = |sk: f64, sl: f64| {
            let mut y = x.to_vec();
            y[k] += sk * hk;
            y[l] += sl * hl;
            entry(sys, &y, t, i, j)
        };
        (probe(1.0, 1.0) - probe(1.0, -1.0) - probe(-1.0, 1.0) + probe(-1.0, -1.0))
            / (4.0 * hk * hl)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diffusion_equals_noise_coefficient_outer_product(
        seed in any::<u64>(),
        n in 1..=4usize,
        m in 1..=3usize,
        scalar_shape in any::<bool>(),
        k in prop::array::uniform4(1usize..=4),
    ) {
        let sys = random_system(seed, n, m, Interpretation::Stratonovich, scalar_shape, k);
        let mut rng = SplitMix(seed ^ 0xD1FF);
        for _ in 0..3 {
            let t = rng.range(0.0, 1.0);
            let x = rng.state(n);
            let d = sys.diffusion_matrix(&x, t).unwrap();
            prop_assert_eq!(d.max_asymmetry(), 0.0);
            let nc = sys.noise_coefficient(&x, t).unwrap();
            let outer = Matrix::mul(&nc, &nc.transpose());
            for (a, b) in d.data().iter().zip(outer.data()) {
                prop_assert!(close(*a, *b, 1e-12), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn hessian_matches_second_differences(
        seed in any::<u64>(),
        n in 1..=3usize,
        m in 1..=3usize,
        scalar_shape in any::<bool>(),
        k in prop::array::uniform4(1usize..=4),
    ) {
        let sys = random_system(seed, n, m, Interpretation::Stratonovich, scalar_shape, k);
        let mut rng = SplitMix(seed ^ 0x4E55);
        let t = rng.range(0.0, 1.0);
        let x = rng.state(n);
        for i in 0..n {
            for j in i..n {
                let h = sys.diffusion_hessian(t, i, j).unwrap();
                let swapped = sys.diffusion_hessian(t, j, i).unwrap();
                for (a, b) in h.data().iter().zip(swapped.data()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
                prop_assert_eq!(h.max_asymmetry(), 0.0);
                for p in 0..n {
                    for q in 0..n {
                        let fd = second_difference(&sys, &x, t, i, j, p, q);
                        prop_assert!(
                            close(h[(p, q)], fd, 1e-6),
                            "entry ({}, {}) of hessian ({}, {}): {} vs {}",
                            p, q, i, j, h[(p, q)], fd
                        );
                    }
                }
            }
        }
    }
}
