use proptest::prelude::*;

use dynamap::cost::AlgoChoice;
use dynamap::kernels::{
    count_mults, direct_conv, im2col_conv, im2col_lower, kn2row_conv, verify_kernels, winograd_1d, winograd_conv,
    KernelBank, Tensor3, WinogradParams,
};
use dynamap::model::LayerMeta;

#[derive(Debug, Clone)]
struct Case {
    input: Tensor3,
    w: KernelBank,
    stride: usize,
    pad: (usize, usize),
}

fn ints(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-4i32..=4).prop_map(f64::from), n)
}

fn arb_case() -> impl Strategy<Value = Case> {
    (
        prop::sample::select(vec![(1usize, 1usize), (3, 3), (5, 5), (1, 7), (7, 1)]),
        1usize..=2,
        0usize..=1,
        1usize..=6,
        1usize..=6,
    )
        .prop_flat_map(|((k1, k2), stride, p, c, co)| {
            let h = (k1.saturating_sub(2 * p)).max(1)..=12;
            let w = (k2.saturating_sub(2 * p)).max(1)..=12;
            (Just((k1, k2, stride, p, c, co)), h, w)
        })
        .prop_flat_map(|((k1, k2, stride, p, c, co), h, w)| {
            (ints(c * h * w), ints(co * c * k1 * k2)).prop_map(move |(x, wt)| Case {
                input: Tensor3::new(c, h, w, x).unwrap(),
                w: KernelBank::new(co, c, k1, k2, wt).unwrap(),
                stride,
                pad: (p, p),
            })
        })
}

fn arb_wino_case() -> impl Strategy<Value = Case> {
    (
        prop::sample::select(vec![3usize, 5]),
        0usize..=2,
        1usize..=4,
        1usize..=4,
    )
        .prop_flat_map(|(k, p, c, co)| {
            let lo = k.saturating_sub(2 * p).max(1);
            (Just((k, p, c, co)), lo..=11, lo..=11)
        })
        .prop_flat_map(|((k, p, c, co), h, w)| {
            (ints(c * h * w), ints(co * c * k * k)).prop_map(move |(x, wt)| Case {
                input: Tensor3::new(c, h, w, x).unwrap(),
                w: KernelBank::new(co, c, k, k, wt).unwrap(),
                stride: 1,
                pad: (p, p),
            })
        })
}

fn add(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    Tensor3::new(a.c, a.h, a.w, a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect()).unwrap()
}

proptest! {
    #[test]
    fn im2col_and_kn2row_match_direct_exactly(case in arb_case()) {
        let d = direct_conv(&case.input, &case.w, case.stride, case.pad).unwrap();
        prop_assert_eq!(&im2col_conv(&case.input, &case.w, case.stride, case.pad).unwrap(), &d);
        prop_assert_eq!(&kn2row_conv(&case.input, &case.w, case.stride, case.pad).unwrap(), &d);
    }

    #[test]
    fn winograd_matches_direct(case in arb_wino_case()) {
        let d = direct_conv(&case.input, &case.w, 1, case.pad).unwrap();
        let run = winograd_conv(&case.input, &case.w, case.pad, &WinogradParams::f23()).unwrap();
        prop_assert_eq!((run.output.c, run.output.h, run.output.w), (d.c, d.h, d.w));
        for (x, y) in run.output.data.iter().zip(&d.data) {
            prop_assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0), "{} vs {}", x, y);
        }
        let meta = LayerMeta::new(case.input.c, case.w.c_out, (case.input.h, case.input.w), (case.w.k1, case.w.k2), 1, case.pad);
        let k = case.w.k1;
        if k == 3 {
            prop_assert_eq!(run.hadamard_mults, count_mults(&meta, AlgoChoice::Winograd { m: 2, r: 3 }).unwrap());
        } else {
            // the executable split uses whole r x r sub-kernels per axis
            let rounds = k.div_ceil(3).pow(2);
            prop_assert_eq!(run.rounds, rounds);
            prop_assert_eq!(run.hadamard_mults as usize, 16 * run.tiles * rounds * meta.c_in * meta.c_out);
        }
    }

    #[test]
    fn direct_conv_is_linear_in_input(case in arb_case()) {
        let twice = add(&case.input, &case.input);
        let d = direct_conv(&case.input, &case.w, case.stride, case.pad).unwrap();
        let d2 = direct_conv(&twice, &case.w, case.stride, case.pad).unwrap();
        prop_assert_eq!(d2, add(&d, &d));
    }

    #[test]
    fn toeplitz_has_one_column_per_window(case in arb_case()) {
        let t = im2col_lower(&case.input, case.w.k1, case.w.k2, case.stride, case.pad).unwrap();
        let d = direct_conv(&case.input, &case.w, case.stride, case.pad).unwrap();
        prop_assert_eq!(t.rows * t.cols, (d.h * d.w) * (case.w.k1 * case.w.k2 * case.input.c));
    }

    #[test]
    fn winograd_1d_matches_correlation(d in ints(4), g in ints(3)) {
        let y = winograd_1d(&d, &g, &WinogradParams::f23()).unwrap();
        for i in 0..2 {
            let want: f64 = (0..3).map(|j| d[i + j] * g[j]).sum();
            prop_assert!((y[i] - want).abs() < 1e-9);
        }
    }
}

#[test]
fn harness_passes_and_catches_faults() {
    let ok = verify_kernels(1, 50, false);
    assert!(ok.passed(), "{:?}", ok.failures);
    assert_eq!(ok.trials, 50);
    let vacuous = verify_kernels(1, 0, false);
    assert!(vacuous.passed());
    let bad = verify_kernels(1, 5, true);
    assert!(!bad.passed());
}

#[test]
fn harness_is_deterministic_per_seed() {
    assert_eq!(verify_kernels(9, 20, false), verify_kernels(9, 20, false));
}

#[test]
fn mismatched_channels_are_rejected() {
    let x = Tensor3::zeros(3, 4, 4);
    let w = KernelBank::new(1, 2, 1, 1, vec![1.0, 1.0]).unwrap();
    assert!(direct_conv(&x, &w, 1, (0, 0)).is_err());
    assert!(kn2row_conv(&x, &w, 1, (0, 0)).is_err());
}
