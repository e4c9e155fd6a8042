use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datagen::Volume;
use crate::diffcore::Tensor;

fn img(dims: [usize; 3], data: Vec<f32>) -> Volume {
    Volume::intensity(dims.to_vec(), data).unwrap()
}

fn lab(data: Vec<u8>) -> Volume {
    Volume::labels(vec![data.len(), 1, 1], data).unwrap()
}

fn random(dims: [usize; 3], seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    img(dims, (0..dims.iter().product()).map(|_| rng.gen::<f32>()).collect())
}

#[test]
fn psnr_examples() {
    let a = random([4, 4, 2], 1);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP);
    let zeros = img([10, 1, 1], vec![0.0; 10]);
    let tenth = img([10, 1, 1], vec![0.1; 10]);
    assert!((psnr(&tenth, &zeros, 1.0).unwrap() - 20.0).abs() < 1e-6);
    let ones = img([10, 1, 1], vec![1.0; 10]);
    assert!(psnr(&ones, &zeros, 1.0).unwrap().abs() < 1e-12);
    assert!(psnr(&a, &zeros, 1.0).is_err());
    assert!(psnr(&zeros, &zeros, 0.0).is_err());
}

#[test]
fn psnr_falls_as_noise_grows() {
    let clean = random([8, 8, 2], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise: Vec<f32> = (0..clean.num_voxels()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let values: Vec<f64> = [0.01f32, 0.05, 0.2]
        .iter()
        .map(|&amp| {
            let data = clean.as_intensity().unwrap().iter().zip(&noise).map(|(v, n)| v + amp * n).collect();
            psnr(&img([8, 8, 2], data), &clean, 1.0).unwrap()
        })
        .collect();
    assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
}

#[test]
fn ssim_examples() {
    let a = random([9, 8, 3], 5);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    let c = img([7, 7, 1], vec![0.5; 49]);
    assert_eq!(ssim(&c, &c).unwrap(), 1.0);
    let small = random([6, 9, 1], 6);
    assert!(matches!(ssim(&small, &small), Err(crate::Error::Contract(_))));
    let b = random([9, 8, 3], 7);
    let v = ssim(&a, &b).unwrap();
    assert!((-1.0..1.0).contains(&v));
}

#[test]
fn dice_examples() {
    let g = lab(vec![0, 1, 1, 2, 3]);
    assert_eq!(dice(&g, &g, 1).unwrap(), 1.0);
    assert_eq!(dice(&lab(vec![1, 1, 0]), &lab(vec![0, 0, 1]), 1).unwrap(), 0.0);
    assert!((dice(&lab(vec![1, 1, 0]), &lab(vec![1, 0, 0]), 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(dice(&lab(vec![0, 0]), &lab(vec![0, 0]), 2).unwrap(), 1.0);
    assert!(dice(&lab(vec![0, 0]), &lab(vec![0, 0, 0]), 2).is_err());
}

#[test]
fn argmax_ties_go_low() {
    let s = Tensor::<f32>::from_rows(&[vec![0.1, 0.7, 0.2], vec![0.4, 0.4, 0.2], vec![0.3, 0.3, 0.3]]).unwrap();
    let v = argmax_labels(&s, &[3, 1, 1]).unwrap();
    assert_eq!(v.as_labels().unwrap(), &[1, 0, 0]);
}

fn row(psnr: f64, case: u64) -> MetricsRow {
    MetricsRow {
        case_id: case,
        model: "siren".into(),
        strategy: "baseline".into(),
        trained_through_task: 2,
        eval_target: "frame1".into(),
        psnr: Some(psnr),
        ssim: Some(0.5),
        dice_c1: None,
        dice_c2: None,
        dice_c3: None,
    }
}

#[test]
fn aggregate_examples() {
    let one = aggregate(&[row(10.0, 0)]).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].psnr, Some(10.0));
    assert_eq!((one[0].model.as_str(), one[0].eval_target.as_str()), ("siren", "frame1"));
    let two = aggregate(&[row(10.0, 0), row(20.0, 1)]).unwrap();
    assert_eq!(two[0].psnr, Some(15.0));
    assert_eq!(two[0].count, 2);
    assert_eq!(two[0].dice_c1, None);
    let mut other = row(30.0, 0);
    other.strategy = "distillation".into();
    assert_eq!(aggregate(&[row(10.0, 0), other]).unwrap().len(), 2);
    assert!(aggregate(&[]).is_err());
}

#[test]
fn csv_round_trip_keeps_empty_cells() {
    let mut r = row(12.5, 3);
    r.eval_target = "labels".into();
    r.psnr = None;
    r.ssim = None;
    r.dice_c1 = Some(0.9);
    r.dice_c2 = Some(1.0);
    r.dice_c3 = Some(0.875);
    let rows = vec![row(12.5, 3), r];
    let mut buf = Vec::new();
    write_metrics(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with(
        "case_id,model,strategy,trained_through_task,eval_target,psnr,ssim,dice_c1,dice_c2,dice_c3\n"
    ));
    assert!(text.contains("3,siren,baseline,2,labels,,,0.9,1.0,0.875"), "{text}");
    assert_eq!(read_metrics(&buf[..]).unwrap(), rows);

    let mut empty = Vec::new();
    write_metrics(&[], &mut empty).unwrap();
    assert_eq!(read_metrics(&empty[..]).unwrap(), vec![]);
}

proptest! {
    #[test]
    fn metrics_are_symmetric(seed in 0u64..1000) {
        let a = random([8, 7, 2], seed);
        let b = random([8, 7, 2], seed + 7919);
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let la = lab(a.as_intensity().unwrap().iter().map(|v| (v * 4.0) as u8).collect());
        let lb = lab(b.as_intensity().unwrap().iter().map(|v| (v * 4.0) as u8).collect());
        for c in 0..4 {
            prop_assert_eq!(dice(&la, &lb, c).unwrap(), dice(&lb, &la, c).unwrap());
            prop_assert_eq!(dice(&la, &la, c).unwrap(), 1.0);
        }
    }
}
