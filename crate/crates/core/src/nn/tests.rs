use super::*;
use crate::cohort::BinaryLabel;
use crate::rng::{item_rng, stream_rng, Stream};
use crate::synth;
use approx::assert_relative_eq;
use rand::Rng;

#[test]
fn block_counts_follow_input_length() {
    for (len, blocks, out) in [(120, 3, 15), (480, 4, 30), (1200, 5, 38), (2400, 6, 38)] {
        let spec = ArchitectureSpec::for_input(len).unwrap();
        assert_eq!(spec.n_blocks, blocks);
        assert_eq!(spec.block_output_len(), out);
        assert_eq!(spec.flattened(), out * 10);
    }
    assert!(matches!(
        ArchitectureSpec::for_input(999),
        Err(ShapeError::UnsupportedInputLength(999))
    ));
}

#[test]
fn shape_cascade_for_five_blocks() {
    let spec = ArchitectureSpec::for_input(1200).unwrap();
    assert_eq!(spec.temporal_lengths(), vec![1200, 600, 300, 150, 75, 38]);
}

#[test]
fn one_block_halves_with_ceiling() {
    let conv_s1 = ConvLayer::zeros(10, 8, 1, 1);
    let conv_s2 = ConvLayer::zeros(10, 8, 10, 2);
    assert_eq!(conv_s1.output_len(1200), 1200);
    assert_eq!(conv_s2.output_len(1200), 600);
    assert_eq!(conv_s2.output_len(75), 38);
    let x = Activations1d::from_single_channel(&vec![1.0; 75]);
    let mid = conv_s1.forward(&x).unwrap();
    assert_eq!(mid.len, 75);
    let out = conv_s2.forward(&mid).unwrap();
    assert_eq!(out.len, 38);
    assert_eq!(out.channels, 10);
}

#[test]
fn unit_impulse_kernel_is_identity() {
    // With "same" padding for kernel 8 the left pad is 3, so a tap at
    // position 3 reads the aligned input sample.
    let mut conv = ConvLayer::zeros(1, 8, 1, 1);
    conv.weights[3] = 1.0;
    let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin().abs()).collect();
    let out = conv
        .forward(&Activations1d::from_single_channel(&x))
        .unwrap();
    for (a, b) in out.data.iter().zip(&x) {
        assert_eq!(a, b);
    }
}

#[test]
fn zero_model_outputs_half_half() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let model = CnnModel::zeros(spec, 0);
    let x: Vec<f64> = (0..120).map(|i| (i as f64).sin()).collect();
    let probs = model.infer(&x).unwrap();
    assert_eq!(probs, [0.5, 0.5]);
    // Equal outputs predict wake (ties go to the positive class).
    assert_eq!(model.predict(&x).unwrap(), BinaryLabel::Positive);
}

#[test]
fn inference_is_deterministic_and_probabilities_are_valid() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let model = CnnModel::init(spec, 42);
    let (inputs, _) = synth::separable_cohort(3, 3, 120, 7);
    for x in &inputs {
        let a = model.infer(x).unwrap();
        let b = model.infer(x).unwrap();
        assert_eq!(a, b);
        assert!((a[0] + a[1] - 1.0).abs() < 1e-12);
        assert!(a[0] > 0.0 && a[0] < 1.0);
    }
}

#[test]
fn argmax_is_shift_invariant_in_logits() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let mut model = CnnModel::init(spec, 3);
    let x: Vec<f64> = (0..120).map(|i| (i as f64 * 0.2).cos() * 3.0).collect();
    let before = model.predict(&x).unwrap();
    // Adding the same constant to both output biases shifts both logits.
    for b in model.output.bias.iter_mut() {
        *b += 17.5;
    }
    assert_eq!(model.predict(&x).unwrap(), before);
}

#[test]
fn cross_entropy_values() {
    assert_eq!(cross_entropy(&[1.0, 0.0], BinaryLabel::Positive), 0.0);
    assert_relative_eq!(
        cross_entropy(&[0.5, 0.5], BinaryLabel::Negative),
        std::f64::consts::LN_2
    );
    // Strictly decreasing in the true-class probability.
    let mut prev = f64::INFINITY;
    for p in [0.1, 0.3, 0.5, 0.9, 0.999] {
        let loss = cross_entropy(&[p, 1.0 - p], BinaryLabel::Positive);
        assert!(loss < prev);
        prev = loss;
    }
    // The floor keeps the loss finite at p = 0.
    assert!(cross_entropy(&[0.0, 1.0], BinaryLabel::Positive).is_finite());
}

#[test]
fn output_bias_gradient_is_probs_minus_onehot() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let model = CnnModel::init(spec, 5);
    let x: Vec<f64> = (0..120).map(|i| 60.0 + (i as f64 * 0.3).sin()).collect();
    let pass = model.forward(&x, None).unwrap();
    let grads = model.backward(&pass, BinaryLabel::Negative, None);
    let out_bias_grad = grads.segs.last().unwrap();
    assert_relative_eq!(out_bias_grad[0], pass.probs[0], epsilon = 1e-12);
    assert_relative_eq!(out_bias_grad[1], pass.probs[1] - 1.0, epsilon = 1e-12);
}

#[test]
fn zero_input_gives_zero_first_block_weight_gradients() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    // Init gives random weights and zero biases, so a zero input keeps
    // every activation at zero and the chain rule zeroes the conv weight
    // gradients.
    let model = CnnModel::init(spec, 9);
    let x = vec![0.0; 120];
    let pass = model.forward(&x, None).unwrap();
    let grads = model.backward(&pass, BinaryLabel::Positive, None);
    assert!(grads.segs[0].iter().all(|&g| g == 0.0));
    assert!(grads.segs[2].iter().all(|&g| g == 0.0));
}

/// Central finite differences over a strided subset of parameters.
fn finite_difference_check(stride: usize) {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let mut model = CnnModel::init(spec, 1234);
    let mut rng = stream_rng(99, Stream::Synth);
    let x: Vec<f64> = (0..120)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let label = BinaryLabel::Negative;

    let pass = model.forward(&x, None).unwrap();
    let analytic = model.backward(&pass, label, None);

    let h = 1e-6;
    let mut checked = 0usize;
    let n_segs = analytic.segs.len();
    for seg_idx in 0..n_segs {
        let len = analytic.segs[seg_idx].len();
        for k in (0..len).step_by(stride) {
            let orig = model.param_segments()[seg_idx][k];
            model.param_segments_mut()[seg_idx][k] = orig + h;
            let up = cross_entropy(&model.forward(&x, None).unwrap().probs, label);
            model.param_segments_mut()[seg_idx][k] = orig - h;
            let down = cross_entropy(&model.forward(&x, None).unwrap().probs, label);
            model.param_segments_mut()[seg_idx][k] = orig;

            let numeric = (up - down) / (2.0 * h);
            let exact = analytic.segs[seg_idx][k];
            let denom = exact.abs().max(numeric.abs());
            if denom > 1e-7 {
                let rel = (exact - numeric).abs() / denom;
                assert!(
                    rel < 1e-5,
                    "segment {seg_idx} param {k}: analytic {exact}, numeric {numeric}, rel {rel}"
                );
            } else {
                assert!((exact - numeric).abs() < 1e-7);
            }
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn gradients_match_finite_differences_sampled() {
    finite_difference_check(17);
}

#[test]
fn translation_equivariance_of_the_conv_section() {
    // Shifting the input by the stride product (2^n_blocks) shifts the last
    // block's output by one sample, away from the zero-padded edges.
    let spec = ArchitectureSpec::for_input(480).unwrap();
    let model = CnnModel::init(spec, 21);
    let shift = 1usize << spec.n_blocks; // 16
    let margin = (spec.kernel - 1) * (1 << spec.n_blocks); // 112 input samples

    let mut rng = stream_rng(4, Stream::Synth);
    let mut x = vec![0.0; 480];
    for v in x[margin..480 - margin - shift].iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut shifted = vec![0.0; 480];
    shifted[shift..].copy_from_slice(&x[..480 - shift]);

    let y = model.conv_section(&x).unwrap();
    let y_shifted = model.conv_section(&shifted).unwrap();
    let out_margin = 8;
    for c in 0..y.channels {
        for t in out_margin..y.len - out_margin - 1 {
            assert_relative_eq!(
                y_shifted.at(c, t + 1),
                y.at(c, t),
                epsilon = 1e-12,
                max_relative = 1e-9
            );
        }
    }
}

#[test]
fn inverted_dropout_preserves_expected_logits() {
    // With non-negative dense weights, positive biases, and non-negative
    // activations, every ReLU in the dropout path stays in its linear
    // region for every mask, so the expected train-mode logits equal the
    // inference logits exactly; the Monte Carlo mean must land within 2%.
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let mut model = CnnModel::init(spec, 31);
    for dense in [&mut model.dense1, &mut model.dense2, &mut model.output] {
        for w in dense.weights.iter_mut() {
            *w = w.abs();
        }
        for b in dense.bias.iter_mut() {
            *b = 0.1;
        }
    }
    let x: Vec<f64> = (0..120).map(|i| 1.0 + (i as f64 * 0.1).sin().abs()).collect();
    let infer_logits = model.forward(&x, None).unwrap().logits;

    let mut mask_rng = stream_rng(8, Stream::Dropout);
    let trials = 10_000;
    let mut mean = [0.0_f64; 2];
    for _ in 0..trials {
        let masks = DropoutMasks::sample(&model.spec, &mut mask_rng);
        let pass = model.forward(&x, Some(&masks)).unwrap();
        mean[0] += pass.logits[0];
        mean[1] += pass.logits[1];
    }
    mean[0] /= trials as f64;
    mean[1] /= trials as f64;
    for i in 0..2 {
        let rel = (mean[i] - infer_logits[i]).abs() / infer_logits[i].abs().max(0.1);
        assert!(
            rel < 0.02,
            "logit {i}: mean {} vs infer {} (rel {rel})",
            mean[i],
            infer_logits[i]
        );
    }
}

#[test]
fn dropout_masks_are_seed_deterministic() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let a = DropoutMasks::sample(&spec, &mut item_rng(77));
    let b = DropoutMasks::sample(&spec, &mut item_rng(77));
    assert_eq!(a.last_conv, b.last_conv);
    assert_eq!(a.dense1, b.dense1);
    assert_eq!(a.dense2, b.dense2);
    // Roughly half are kept at p = 0.5.
    let kept = a.last_conv.iter().filter(|&&k| k).count();
    assert!((30..=120).contains(&kept));
}

#[test]
fn model_file_roundtrip_is_bitwise() {
    let spec = ArchitectureSpec::for_input(480).unwrap();
    let model = CnnModel::init(spec, 11);
    let bytes = model.to_bytes();
    let back = load_model(&mut bytes.as_slice()).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_bytes(), bytes);
}

#[test]
fn model_file_rejects_truncation_and_bad_magic() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let model = CnnModel::init(spec, 2);
    let bytes = model.to_bytes();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(
        load_model(&mut bad.as_slice()),
        Err(FormatError::BadMagic)
    ));

    let short = &bytes[..bytes.len() - 5];
    assert!(matches!(
        load_model(&mut &short[..]),
        Err(FormatError::Truncated(_))
    ));

    let mut long = bytes.clone();
    long.extend_from_slice(&[0; 8]);
    assert!(matches!(
        load_model(&mut long.as_slice()),
        Err(FormatError::TrailingBytes)
    ));
}

#[test]
fn model_file_rejects_inconsistent_architecture() {
    // A five-block model whose header claims 480-sample inputs must fail:
    // 480 maps to four blocks.
    let spec = ArchitectureSpec::for_input(1200).unwrap();
    let model = CnnModel::init(spec, 2);
    let mut bytes = model.to_bytes();
    bytes[6..10].copy_from_slice(&480u32.to_le_bytes());
    assert!(matches!(
        load_model(&mut bytes.as_slice()),
        Err(FormatError::SpecMismatch(_))
    ));

    // Loading a valid 1200-sample model for a 480-sample run also fails.
    let good = model.to_bytes();
    assert!(matches!(
        load_model_for_input(&mut good.as_slice(), 480),
        Err(FormatError::SpecMismatch(_))
    ));
    assert!(load_model_for_input(&mut good.as_slice(), 1200).is_ok());
}

#[test]
fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let mut model = CnnModel::init(spec, 13);
    let before = model.to_bytes();
    let (inputs, labels) = synth::separable_cohort(6, 6, 120, 3);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        batch_size: 4,
        epochs: 3,
        seed: 5,
    };
    train(&mut model, &inputs, &labels, &cfg).unwrap();
    assert_eq!(model.to_bytes(), before);
}

#[test]
fn identical_seeds_give_bitwise_identical_models() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let (inputs, labels) = synth::separable_cohort(10, 10, 120, 3);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        epochs: 4,
        seed: 5,
    };
    let mut a = CnnModel::init(spec, 13);
    let mut b = CnnModel::init(spec, 13);
    let log_a = train(&mut a, &inputs, &labels, &cfg).unwrap();
    let log_b = train(&mut b, &inputs, &labels, &cfg).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(log_a, log_b);
}

#[test]
fn training_reduces_loss_on_a_separable_cohort() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let mut model = CnnModel::init(spec, 1);
    let (inputs, labels) = synth::separable_cohort(12, 12, 120, 2);
    let normalized: Vec<Vec<f64>> = inputs
        .iter()
        .map(|w| crate::window::normalize_window(w).unwrap())
        .collect();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 24,
        epochs: 40,
        seed: 6,
    };
    let log = train(&mut model, &normalized, &labels, &cfg).unwrap();
    assert!(log.last().unwrap().mean_loss < log.first().unwrap().mean_loss);
}

#[test]
fn non_finite_loss_is_reported() {
    let spec = ArchitectureSpec::for_input(120).unwrap();
    let mut model = CnnModel::init(spec, 1);
    model.output.weights[0] = f64::NAN;
    let (inputs, labels) = synth::separable_cohort(3, 3, 120, 2);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 2,
        epochs: 1,
        seed: 0,
    };
    assert!(matches!(
        train(&mut model, &inputs, &labels, &cfg),
        Err(TrainError::NonFinite { epoch: 0, batch: 0 })
    ));
}

#[test]
fn train_rejects_mismatched_input_length() {
    let spec = ArchitectureSpec::for_input(480).unwrap();
    let mut model = CnnModel::init(spec, 1);
    let (inputs, labels) = synth::separable_cohort(2, 2, 120, 2);
    assert!(matches!(
        train(&mut model, &inputs, &labels, &TrainConfig::default()),
        Err(TrainError::Shape(ShapeError::InputMismatch { .. }))
    ));
}
