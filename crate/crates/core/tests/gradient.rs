use collab_har::nn::{
    cross_entropy, forward, init_params, loss_and_grad, ModelArchitecture, ParameterVector,
    SensorWindow,
};
use proptest::prelude::*;

fn batch_loss(params: &ParameterVector, arch: &ModelArchitecture, batch: &[SensorWindow]) -> f64 {
    batch
        .iter()
        .map(|w| cross_entropy(&forward(params, arch, w).unwrap(), w.label))
        .sum::<f64>()
        / batch.len() as f64
}

fn max_relative_error(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    batch: &[SensorWindow],
) -> f64 {
    let (_, grad) = loss_and_grad(params, arch, batch).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let mut plus = params.clone();
        plus.as_mut_slice()[k] += h;
        let mut minus = params.clone();
        minus.as_mut_slice()[k] -= h;
        let numeric =
            (batch_loss(&plus, arch, batch) - batch_loss(&minus, arch, batch)) / (2.0 * h);
        let scale = grad[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((grad[k] - numeric).abs() / scale);
    }
    worst
}

fn arch_strategy() -> impl Strategy<Value = ModelArchitecture> {
    (
        1usize..=3,
        4usize..=10,
        1usize..=3,
        1usize..=3,
        1usize..=3,
        2usize..=4,
    )
        .prop_map(|(c, l, o, k, pk, n)| ModelArchitecture {
            input_channels: c,
            window_length: l,
            conv_out_channels: o,
            conv_kernel: k.min(l),
            pool_kernel: pk.min(l - k.min(l) + 1),
            num_classes: n,
        })
        .prop_filter("at most 200 parameters", |a| {
            a.validate().is_ok() && a.param_count() <= 200
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analytic_gradient_matches_finite_differences(
        arch in arch_strategy(),
        seed in any::<u64>(),
        batch_len in 1usize..=4,
        data in proptest::collection::vec(-2.0f64..2.0, 4 * 30),
        labels in proptest::collection::vec(0usize..4, 4),
    ) {
        let params = init_params(&arch, seed);
        let n = arch.input_channels * arch.window_length;
        let batch: Vec<SensorWindow> = (0..batch_len)
            .map(|b| {
                let values = (0..n).map(|i| data[(b * 37 + i) % data.len()] + 0.01 * i as f64).collect();
                SensorWindow::new(values, arch.input_channels, labels[b] % arch.num_classes, 0)
            })
            .collect();
        let err = max_relative_error(&params, &arch, &batch);
        prop_assert!(err < 1e-4, "max relative error {err}");
    }
}

#[test]
fn loss_matches_forward_pass() {
    let arch = ModelArchitecture {
        input_channels: 2,
        window_length: 6,
        conv_out_channels: 2,
        conv_kernel: 2,
        pool_kernel: 2,
        num_classes: 3,
    };
    let params = init_params(&arch, 11);
    let batch = vec![
        SensorWindow::new((0..12).map(|i| (i as f64).sin()).collect(), 2, 1, 0),
        SensorWindow::new((0..12).map(|i| (i as f64).cos()).collect(), 2, 2, 0),
    ];
    let (loss, _) = loss_and_grad(&params, &arch, &batch).unwrap();
    assert!((loss - batch_loss(&params, &arch, &batch)).abs() < 1e-12);
}
