mod common;

use common::*;
use freqreg::serialize::{inspect_tensor, model_dtype, packed_model_len, tensor_header_len, unpack_tensor_with_dtype};
use freqreg::train::predict;
use freqreg::{
    build_model, pack_model, pack_tensor, synthetic_blobs, unpack_model, unpack_tensor, DenseTensor, Dtype, FreqError,
    FrequencyTensor, TruncationSchedule, WeightMode,
};
use rand::Rng;

fn f32_tensor(shape: &[usize], r: &mut impl Rng) -> DenseTensor {
    let n = shape.iter().product();
    DenseTensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-4.0f32..4.0) as f64).collect()).unwrap()
}

#[test]
fn hundred_single_precision_round_trips_are_bit_exact() {
    let mut r = rng(21);
    for _ in 0..100 {
        let shape = random_shape(&mut r, 4, 9);
        let plan_full: usize = shape.iter().map(|d| d - 1).sum::<usize>() + 1;
        let eps = r.random_range(1..=plan_full);
        let t = FrequencyTensor::from_coefficients(f32_tensor(&shape, &mut r), eps).unwrap();
        let bytes = pack_tensor(&t, Dtype::Single).unwrap();
        assert_eq!(bytes.len(), tensor_header_len(shape.len()) + 4 * brute_count(&shape, eps));
        let back = unpack_tensor(&bytes).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert_eq!(back.epsilon(), t.epsilon());
        let same = back.coefficients().iter().zip(t.coefficients()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "shape {shape:?} eps {eps}");
        assert_eq!(pack_tensor(&back, Dtype::Single).unwrap(), bytes);
    }
}

/// Round-to-nearest-even onto the binary16 grid for normal-range magnitudes.
fn half_oracle(v: f64) -> f64 {
    let e = v.abs().log2().floor();
    let quantum = (e - 10.0).exp2();
    (v / quantum).round_ties_even() * quantum
}

#[test]
fn half_precision_rounds_to_nearest_even() {
    let mut r = rng(22);
    let t = FrequencyTensor::from_coefficients(
        DenseTensor::new(
            vec![64],
            (0..64).map(|_| r.random_range(0.01..100.0) * if r.random() { 1.0 } else { -1.0 }).collect(),
        )
        .unwrap(),
        usize::MAX,
    )
    .unwrap();
    let bytes = pack_tensor(&t, Dtype::Half).unwrap();
    assert_eq!(bytes.len(), tensor_header_len(1) + 2 * 64);
    let (back, dtype) = unpack_tensor_with_dtype(&bytes).unwrap();
    assert_eq!(dtype, Dtype::Half);
    for (a, v) in back.coefficients().iter().zip(t.coefficients()) {
        assert_eq!(*a, half_oracle(*v), "{v}");
    }
    // exact tie: 1 + 2^-11 lies halfway between 1 and 1 + 2^-10
    assert_eq!(Dtype::Half.round(1.0 + 2f64.powi(-11)), 1.0);
    assert_eq!(Dtype::Half.round(1.0 + 3.0 * 2f64.powi(-11)), 1.0 + 2f64.powi(-9));
}

#[test]
fn header_fields_are_at_documented_offsets() {
    let t = FrequencyTensor::from_coefficients(DenseTensor::filled(vec![3, 3], 1.5).unwrap(), 2).unwrap();
    let b = pack_tensor(&t, Dtype::Single).unwrap();
    assert_eq!(&b[0..4], b"FRT1");
    assert_eq!(b[4], 1);
    assert_eq!(b[5], 2);
    assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(b[10..14].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(b[14..18].try_into().unwrap()), 2);
    assert_eq!(b[18], 0);
    assert_eq!(u64::from_le_bytes(b[19..27].try_into().unwrap()), 3);
    assert_eq!(b.len(), 27 + 12);
    assert_eq!(f32::from_le_bytes(b[27..31].try_into().unwrap()), 1.5);
    let h = inspect_tensor(&b).unwrap();
    assert_eq!((h.shape, h.epsilon, h.count), (vec![3, 3], 2, 3));
}

#[test]
fn corrupt_records_are_rejected() {
    let t = FrequencyTensor::from_coefficients(DenseTensor::filled(vec![4, 4], 1.0).unwrap(), 3).unwrap();
    let good = pack_tensor(&t, Dtype::Single).unwrap();
    for cut in [0, 3, 10, good.len() - 1] {
        assert!(matches!(unpack_tensor(&good[..cut]), Err(FreqError::Format { .. })), "cut {cut}");
    }
    let mut extra = good.clone();
    extra.push(0);
    assert!(unpack_tensor(&extra).is_err());
    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(unpack_tensor(&magic).is_err());
    let mut count = good.clone();
    count[19] = 7;
    assert!(unpack_tensor(&count).is_err());
    let mut rank = good.clone();
    rank[5] = 5;
    assert!(unpack_tensor(&rank).is_err());
    let mut nan = good;
    let at = nan.len() - 4;
    nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(unpack_tensor(&nan).is_err());
}

fn truncated_mlp(ratio: f64) -> freqreg::Model {
    let mut model = build_model("mlp300", 5, WeightMode::Frequency).unwrap();
    let schedule = TruncationSchedule::starting_at(ratio, 0.5, ratio).unwrap();
    let thresholds = schedule.thresholds_for_model(&model, 1).unwrap();
    model.apply_thresholds(&thresholds).unwrap();
    model
}

#[test]
fn model_round_trip_classifies_identically() {
    let model = truncated_mlp(0.05);
    let bytes = pack_model(&model, Dtype::Single).unwrap();
    assert_eq!(bytes.len(), packed_model_len(&model, Dtype::Single));
    assert_eq!(model_dtype(&bytes).unwrap(), Dtype::Single);
    let mut back = unpack_model(&bytes).unwrap();
    assert_eq!(pack_model(&back, Dtype::Single).unwrap(), bytes);
    assert_eq!(back.count_parameters(), model.count_parameters());

    let data = synthetic_blobs(10, 20, 784, 1).unwrap().with_sample_shape(1, 28, 28).unwrap();
    let mut original = model;
    let pa = predict(&mut original, data.images()).unwrap();
    let pb = predict(&mut back, data.images()).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn plain_and_half_models_round_trip() {
    for (mode, dtype) in [(WeightMode::Plain, Dtype::Single), (WeightMode::Frequency, Dtype::Half)] {
        let model = build_model("lenet5-lite", 2, mode).unwrap();
        let bytes = pack_model(&model, dtype).unwrap();
        assert_eq!(bytes.len(), packed_model_len(&model, dtype));
        let back = unpack_model(&bytes).unwrap();
        assert_eq!(pack_model(&back, dtype).unwrap(), bytes);
        let names: Vec<_> = back.layers().iter().map(|l| l.name.clone()).collect();
        let expect: Vec<_> = model.layers().iter().map(|l| l.name.clone()).collect();
        assert_eq!(names, expect);
    }
}

#[test]
fn one_percent_payload_is_bounded() {
    let model = truncated_mlp(0.01);
    let count = model.count_parameters();
    assert_eq!(count.total, 266_200);
    for dtype in [Dtype::Single, Dtype::Half] {
        let payload: usize = model.frequency_tensors().map(|t| t.nonzero_budget() * dtype.width()).sum();
        let dense = count.total * dtype.width();
        assert!((payload as f64) <= 0.0105 * dense as f64, "{payload} of {dense}");
    }
}
