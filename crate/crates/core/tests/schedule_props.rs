use nucleitk_core::schedule::{
    adversarial_weight, combine_losses, emit_schedule, learning_rate, task_weight,
    DiscriminatorReadout, LrSchedule, ReadoutTrace, TaskLosses,
};
use proptest::prelude::*;

fn losses(v: [f64; 6]) -> TaskLosses {
    TaskLosses {
        l_rpn: v[0],
        l_det: v[1],
        l_sem_seg: v[2],
        l_img_da: v[3],
        l_sem_da: v[4],
        l_ins_da: v[5],
    }
}

proptest! {
    #[test]
    fn task_weight_nonincreasing_and_capped(a in 0.001f64..0.999, b in 0.001f64..0.999, beta in 0.1f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (wl, wh) = (task_weight(lo, beta).unwrap(), task_weight(hi, beta).unwrap());
        prop_assert!(wl >= wh);
        prop_assert!(wl <= beta && wh >= 0.0);
    }

    #[test]
    fn adversarial_weight_increasing(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (x, y) = (adversarial_weight(lo).unwrap(), adversarial_weight(hi).unwrap());
        prop_assert!(x <= y && (0.0..1.0).contains(&x));
    }

    #[test]
    fn combined_loss_is_linear_in_losses(
        a in proptest::array::uniform6(0.0f64..10.0),
        b in proptest::array::uniform6(0.0f64..10.0),
        k in 0.0f64..5.0,
        p in proptest::array::uniform3(0.01f64..0.99),
        t in 0.0f64..=1.0,
    ) {
        let r = DiscriminatorReadout::new(p[0], p[1], p[2]).unwrap();
        let f = |v: [f64; 6]| combine_losses(&losses(v), &r, t, 2.0).unwrap().0;
        let sum: [f64; 6] = std::array::from_fn(|i| a[i] + b[i]);
        let scaled: [f64; 6] = std::array::from_fn(|i| k * a[i]);
        let tol = 1e-9 * (1.0 + f(sum).abs());
        prop_assert!((f(sum) - f(a) - f(b)).abs() <= tol);
        prop_assert!((f(scaled) - k * f(a)).abs() <= tol);
        // finite difference along each loss gives its weight
        let (_, w) = combine_losses(&losses(a), &r, t, 2.0).unwrap();
        let expected = [w.alpha_img, w.alpha_ins, w.alpha_sem, w.alpha_da, w.alpha_da, w.alpha_da];
        for (i, &e) in expected.iter().enumerate() {
            let mut bumped = a;
            bumped[i] += 1.0;
            prop_assert!((f(bumped) - f(a) - e).abs() <= 1e-9);
        }
    }

    #[test]
    fn lr_is_piecewise_and_bounded(total in 2001u64..50_000, frac in 0.0f64..1.0) {
        let step = ((total as f64 * frac) as u64).min(total - 1);
        let lr = learning_rate(step, total).unwrap();
        prop_assert!(lr > 0.0 && lr <= 0.002 + 1e-15);
        if 4 * step >= 3 * total {
            prop_assert_eq!(lr, 0.0002);
        } else if step >= 500 {
            prop_assert_eq!(lr, 0.002);
        }
    }

    #[test]
    fn warmup_ramp_is_continuous(warmup in 1u64..1000) {
        let s = LrSchedule { warmup_steps: warmup, ..LrSchedule::default() };
        let total = 4 * warmup + 4;
        let step_size = (s.base - s.base / warmup as f64) / warmup as f64;
        for i in 1..=warmup {
            let d = s.at(i, total).unwrap() - s.at(i - 1, total).unwrap();
            prop_assert!(d >= -1e-18 && d <= step_size + 1e-15);
        }
        prop_assert_eq!(s.at(warmup, total).unwrap(), s.base);
    }
}

#[test]
fn sparse_trace_holds_last_readout() {
    let csv = "step,p_s_img,p_s_sem,p_s_ins\n3,0.9,0.1,0.2\n6,0.25,0.5,0.75\n";
    let trace = ReadoutTrace::from_csv(csv.as_bytes(), "trace.csv").unwrap();
    let rows = emit_schedule(2000, 2.0, Some(&trace), &LrSchedule::default()).unwrap();
    assert_eq!(rows.len(), 2000);
    assert_eq!(rows[0].alpha_img, 1.0);
    assert_eq!(rows[2].alpha_img, 1.0);
    for r in &rows[3..6] {
        assert!((r.alpha_img - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(r.alpha_sem, 2.0);
        assert_eq!(r.alpha_ins, 2.0);
    }
    assert_eq!(rows[1999].alpha_img, 2.0);
    assert_eq!(rows[1999].alpha_ins, 1.0 / 3.0);
}
