use proptest::prelude::*;
use spinn::fd::fd_derivative;
use spinn::jet::Jet;
use spinn::nets::{init_mlp, MlpConfig, Variant};

#[test]
fn affine_jet_example() {
    // 2x + 1 at x = 3 with dx = 1.
    let x = Jet::seed(3.0, 1).unwrap();
    let y = x.scale(2.0).shift(1.0);
    assert_eq!((y.coeff(0), y.coeff(1)), (7.0, 2.0));
}

#[test]
fn reference_parameter_counts() {
    assert_eq!(MlpConfig::plain(1, 2, 3, 0).param_count(), 13);
    assert_eq!(MlpConfig::plain(4, 64, 32, 0).param_count(), 14_688);
}

#[test]
fn same_seed_same_weights() {
    let a = init_mlp(MlpConfig::plain(3, 16, 4, 7)).unwrap();
    let b = init_mlp(MlpConfig::plain(3, 16, 4, 7)).unwrap();
    assert_eq!(a.params().as_slice(), b.params().as_slice());
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jet_derivatives_match_finite_differences(
        depth in 1usize..=3,
        width in 1usize..=16,
        out_dim in 1usize..=4,
        modified in any::<bool>(),
        seed in any::<u64>(),
        x in -1.0f64..1.0,
    ) {
        let variant = if modified { Variant::Modified } else { Variant::Plain };
        let net = init_mlp(MlpConfig { depth, width, out_dim, variant, seed }).unwrap();
        let jet = net.forward_jet(Jet::seed(x, 2).unwrap()).unwrap();
        let plain = net.forward(x);
        for (k, out) in jet.iter().enumerate() {
            prop_assert_eq!(out.coeff(0), plain[k]);
            let f = |x: f64| net.forward(x)[k];
            let d1 = fd_derivative(f, x, 1, 1e-5);
            let d2 = fd_derivative(f, x, 2, 1e-4);
            prop_assert!(rel(out.coeff(1), d1) < 1e-5, "first derivative {} vs {}", out.coeff(1), d1);
            prop_assert!(rel(out.coeff(2), d2) < 1e-5, "second derivative {} vs {}", out.coeff(2), d2);
        }
    }
}
