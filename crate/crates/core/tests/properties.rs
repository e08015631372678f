use joint_impedance::fractional::{
    design_kp, select_fractional_order, AmplifierDesign, CascadeLayout, Controller, LagCascade,
};
use joint_impedance::loop_analysis::{
    margins, no_encirclement_proxy, plant_response, stability_sweep, stiffness_grid, OpenLoop, Realization,
    SearchSkeleton, Verdict,
};
use joint_impedance::model::{
    coupled_stiffness, human_stiffness, loss_factor_and_ratio, natural_frequencies, CouplingConfig, JointParams,
    ModelKind, SeaModel,
};
use joint_impedance::protocol::{PeriodMarker, TimeSeries};
use joint_impedance::scaling::{fit_power_law, DampingLaw, PowerLaw};
use joint_impedance::stats::{f_cdf, f_critical, f_statistic, Comparison, RssTable, Scope};
use joint_impedance::sysid::{extract_sample, fit_model, fit_phasor, FrequencySample};
use joint_impedance::{log_grid, Complex64};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = JointParams> {
    (5.0..120.0f64, 0.5..40.0f64, 0.0..3.0f64, 0.03..0.5f64)
        .prop_map(|(k, h, b, m)| JointParams::new(k, h, b, m).unwrap())
}

fn law() -> impl Strategy<Value = PowerLaw> {
    (-0.8..0.3f64, 0.5..1.4f64).prop_map(|(b0, b1)| PowerLaw::new(b0, b1))
}

fn distinct_omegas(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n).prop_map(move |u| {
        // Sorted offsets keep the frequencies at least 2 % apart.
        let mut u = u;
        u.sort_by(f64::total_cmp);
        u.iter().enumerate().map(|(i, x)| 1.0 * 1.2f64.powi(i as i32) * (1.0 + 0.1 * x)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn low_frequency_phase_asymptote(p in params()) {
        let w = 1e-4;
        let target = (p.h_h / p.k_h).atan();
        for kind in [ModelKind::M2, ModelKind::M3] {
            let s = human_stiffness(&p, kind, None, w).unwrap();
            prop_assert!((s.value.arg() - target).abs() < 1e-3);
        }
        let m1 = human_stiffness(&p, ModelKind::M1, None, w).unwrap();
        prop_assert!(m1.value.arg().abs() < 1e-3);
        let pl = PowerLaw::new(-0.23, 0.9);
        let r = human_stiffness(&p, ModelKind::Reduced, Some(&pl), w).unwrap();
        prop_assert!((r.value.arg() - pl.loss_factor(p.k_h).atan()).abs() < 1e-3);
    }

    #[test]
    fn m2_phase_flat_below_tenth_of_natural_frequency(p in params()) {
        let w_h = (p.k_h / p.m_h).sqrt();
        let phases: Vec<f64> = log_grid(1e-3 * w_h, 0.1 * w_h, 50)
            .into_iter()
            .map(|w| human_stiffness(&p, ModelKind::M2, None, w).unwrap().phase_deg())
            .collect();
        let lo = phases.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = phases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(hi - lo < 1.0);
    }

    #[test]
    fn coupling_subtracts_perceived_inertia(p in params(), m_e in 0.1..3.0f64, alpha in 1.0..8.0f64) {
        let c = CouplingConfig::new(m_e, alpha).unwrap();
        for w in log_grid(1e-2, 1e3, 10) {
            let h = human_stiffness(&p, ModelKind::M3, None, w).unwrap().value;
            let e = coupled_stiffness(&p, &c, ModelKind::M3, None, w).unwrap().value;
            let want = -(m_e / alpha) * w * w;
            let tol = 1e-12 * (h.norm() + want.abs());
            prop_assert!(((e - h).re - want).abs() <= tol);
            prop_assert_eq!(e.im, h.im);
        }
    }

    #[test]
    fn crossover_rule_sits_between_natural_frequencies(p in params(), m_e in 0.01..3.0f64) {
        let nf = natural_frequencies(&p, &CouplingConfig::new(m_e, 1.0).unwrap());
        let w_gc = design_kp(p.m_h, m_e).unwrap().omega_gc(p.k_h);
        prop_assert!(nf.omega_he < w_gc && w_gc < nf.omega_h);
    }

    #[test]
    fn loss_factor_monotonicity_follows_slope(pl in law()) {
        let ks = log_grid(5.0, 150.0, 10);
        let c: Vec<f64> = ks.iter().map(|&k| loss_factor_and_ratio(k, &pl).unwrap().c_h).collect();
        let falling = c.windows(2).all(|w| w[1] < w[0]);
        let rising = c.windows(2).all(|w| w[1] > w[0]);
        prop_assert_eq!(falling, pl.beta1 < 1.0);
        prop_assert_eq!(rising, pl.beta1 > 1.0);
    }

    #[test]
    fn power_law_round_trip(pl in law(), ks in prop::collection::vec(2.0..200.0f64, 2..12)) {
        let mut ks = ks;
        ks.sort_by(f64::total_cmp);
        ks.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-3);
        prop_assume!(ks.len() >= 2);
        let pts: Vec<(f64, f64)> = ks.iter().map(|&k| (k, pl.predict_h(k))).collect();
        let fit = fit_power_law(&pts).unwrap();
        prop_assert!((fit.beta0 - pl.beta0).abs() < 1e-10);
        prop_assert!((fit.beta1 - pl.beta1).abs() < 1e-10);
    }

    #[test]
    fn stiffness_rescaling_keeps_slope(
        pts in prop::collection::vec((2.0..200.0f64, 0.5..60.0f64), 3..10),
        lambda in 0.1..10.0f64,
    ) {
        let fit = fit_power_law(&pts).unwrap();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(k, h)| (lambda * k, h)).collect();
        let refit = fit_power_law(&scaled).unwrap();
        prop_assert!((refit.beta1 - fit.beta1).abs() < 1e-9);
        for &(k, _) in &pts {
            let a = refit.predict_h(lambda * k);
            let b = fit.predict_h(k);
            prop_assert!((a / b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn least_damped_endpoint_matches_slope(pl in law(), lo in 5.0..30.0f64, span in 1.5..10.0f64) {
        let hi = lo * span;
        let (c_lo, c_hi) = (pl.loss_factor(lo), pl.loss_factor(hi));
        let k_star = pl.least_damped_stiffness(lo, hi);
        if pl.beta1 < 1.0 {
            prop_assert!(c_hi < c_lo);
            prop_assert_eq!(k_star, hi);
        } else {
            prop_assert!(c_lo <= c_hi);
            prop_assert_eq!(k_star, lo);
        }
    }

    #[test]
    fn fit_is_equivariant_under_scaling(
        p in params(),
        noise in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 10),
        lambda in 0.05..20.0f64,
    ) {
        let ws = log_grid(2.0, 15.0, 9);
        let samples: Vec<FrequencySample> = ws
            .iter()
            .zip(&noise)
            .map(|(&w, &(a, b))| FrequencySample {
                omega: w,
                s: human_stiffness(&p, ModelKind::M3, None, w).unwrap().value + Complex64::new(a, b),
                window: (0.0, 1.0),
            })
            .collect();
        let scaled: Vec<FrequencySample> =
            samples.iter().map(|s| FrequencySample { s: s.s * lambda, ..*s }).collect();
        for kind in ModelKind::FITTED {
            let a = fit_model(&samples, kind).unwrap();
            let b = fit_model(&scaled, kind).unwrap();
            let pa = [a.params.k_h, a.params.h_h, a.params.b_h, a.params.m_h];
            let pb = [b.params.k_h, b.params.h_h, b.params.b_h, b.params.m_h];
            for (x, y) in pa.iter().zip(pb) {
                prop_assert!((y - lambda * x).abs() <= 1e-8 * (1.0 + (lambda * x).abs()));
            }
            prop_assert!((b.rss - lambda * lambda * a.rss).abs() <= 1e-8 * (1.0 + b.rss));
        }
    }

    #[test]
    fn nesting_holds(
        ws in distinct_omegas(6),
        s in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 6),
    ) {
        let samples: Vec<FrequencySample> = ws
            .iter()
            .zip(&s)
            .map(|(&w, &(a, b))| FrequencySample { omega: w, s: Complex64::new(a, b), window: (0.0, 1.0) })
            .collect();
        let r: Vec<f64> = ModelKind::FITTED.iter().map(|&k| fit_model(&samples, k).unwrap().rss).collect();
        let floor = r[0].min(r[1]);
        prop_assert!(r[2] <= floor + 1e-9 * floor.max(1.0));
    }

    #[test]
    fn phasor_extraction_ignores_time_origin(
        shift in -500.0..500.0f64,
        w in 1.0..20.0f64,
        mag in 0.01..1.0f64,
        phase in -3.0..3.0f64,
        ratio in 1.0..100.0f64,
        lag in 0.0..1.5f64,
    ) {
        let series = |t0: f64| {
            let dt = 1e-3;
            let t: Vec<f64> = (0..4000).map(|i| t0 + i as f64 * dt).collect();
            // Phases are referenced to the segment start so the signal is the
            // same waveform wherever it sits on the time axis.
            let theta: Vec<f64> = t.iter().map(|&x| mag * (w * (x - t0) + phase).sin() + 0.2).collect();
            let tau: Vec<f64> =
                t.iter().map(|&x| ratio * mag * (w * (x - t0) + phase + lag).sin() - 1.0).collect();
            let marker = PeriodMarker { period: 1, t_start: t0, t_end: t0 + 3.999, omega: w, amplitude: 1.0 };
            let ts = TimeSeries { dt, t, theta_e: theta, tau_c: tau.clone(), tau_s: tau, markers: vec![marker] };
            extract_sample(&ts, &marker).unwrap()
        };
        let a = series(10.0);
        let b = series(10.0 + shift.abs());
        prop_assert!((a.s - b.s).norm() <= 1e-9 * a.s.norm());
        prop_assert!((a.s - Complex64::from_polar(ratio, lag)).norm() <= 1e-9 * ratio);
    }

    #[test]
    fn f_grows_with_reduced_rss(r3 in 0.01..100.0f64, extra in 0.0..100.0f64, bump in 1e-6..10.0f64) {
        let table = |r1: f64| {
            let mut t = RssTable::new(10);
            t.insert("s", 1, ModelKind::M1, r1);
            t.insert("s", 1, ModelKind::M2, r3);
            t.insert("s", 1, ModelKind::M3, r3);
            t
        };
        let a = f_statistic(&table(r3 + extra), &Scope::All, Comparison::M1VsM3).unwrap();
        let b = f_statistic(&table(r3 + extra + bump), &Scope::All, Comparison::M1VsM3).unwrap();
        prop_assert!(b.f > a.f);
        prop_assert!(a.f >= 0.0);
        prop_assert_eq!(a.significant, a.f > a.f_crit);
    }

    #[test]
    fn f_quantile_round_trip(p in 0.001..0.5f64, d1 in 1u32..120, d2 in 1u32..2000) {
        let (d1, d2) = (d1 as f64, d2 as f64);
        let x = f_critical(p, d1, d2).unwrap();
        prop_assert!((f_cdf(x, d1, d2).unwrap() - (1.0 - p)).abs() < 1e-6);
    }

    #[test]
    fn ideal_slope_is_exact(f in 0.01..0.99f64, w1 in 0.01..100.0f64, decades in 0.1..3.0f64) {
        let c = Controller::Ideal { k_f: 9.69f64.powf(f), f };
        let w2 = w1 * 10f64.powf(decades);
        let slope = 20.0 * (c.response(w2).norm() / c.response(w1).norm()).log10() / decades;
        prop_assert!((slope + 20.0 * f).abs() < 1e-9);
        prop_assert!((c.response(w1).arg().to_degrees() + 90.0 * f).abs() < 1e-9);
    }

    #[test]
    fn order_falls_as_margin_rises(pl in law(), lo in 5.0..30.0f64, span in 1.5..10.0f64, phi in 0.0..10.0f64, dphi in 0.01..5.0f64) {
        let l = DampingLaw::Power(pl);
        let hi = lo * span;
        if let (Ok(a), Ok(b)) = (
            select_fractional_order(&l, lo, hi, phi),
            select_fractional_order(&l, lo, hi, phi + dphi),
        ) {
            prop_assert!(b < a);
        }
    }

    #[test]
    fn cascade_order_and_asymptotes(f in 0.01..0.95f64, n in 1usize..9, p1 in 0.1..10.0f64, r in 1.5..10.0f64) {
        let c = LagCascade::new(f, 2.0, CascadeLayout { n, p1, r_pp: r }).unwrap();
        prop_assert!((c.approximate_order() - f).abs() < 1e-6);
        prop_assert!(c.zeros.iter().zip(&c.poles).all(|(z, p)| z > p));
        let lo = c.response(p1 * 1e-6);
        let hi = c.response(c.zeros[n - 1] * 1e6);
        prop_assert!(lo.arg().abs() < 1e-4 && hi.arg().abs() < 1e-4);
        prop_assert!((lo.norm() / c.dc_gain - 1.0).abs() < 1e-6);
        prop_assert!((hi.norm() / (c.dc_gain * c.r_zp.powi(n as i32).recip()) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn plant_phase_floor_between_natural_frequencies(pl in law(), k in 8.0..110.0f64) {
        let sea = SeaModel::default();
        let p = JointParams::new(k, pl.predict_h(k), 0.0, 0.11).unwrap();
        let floor = pl.loss_factor(k).atan() - std::f64::consts::PI;
        for w in log_grid((k / 1.12).sqrt(), (k / 0.11).sqrt(), 40) {
            let v = plant_response(&p, ModelKind::M2, None, 1.01, &sea, w).unwrap();
            prop_assert!(v.arg() > floor + sea.response(w).arg() - 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn margin_falls_as_order_rises(b0 in -0.6..0.1f64, b1 in 0.6..1.3f64) {
        let skeleton = SearchSkeleton {
            law: DampingLaw::Power(PowerLaw::new(b0, b1)),
            m_h: 0.11,
            m_e: 1.01,
            k_low: 10.03,
            k_high: 108.33,
            realization: Realization::Cascade(CascadeLayout::default()),
            sea: SeaModel::default(),
            k_values: stiffness_grid(10.03, 108.33, 9),
        };
        let pms: Vec<f64> = (1..=19).map(|i| skeleton.min_pm(0.05 * i as f64).unwrap()).collect();
        for w in pms.windows(2) {
            prop_assert!(w[1] < w[0], "{:?}", pms);
            prop_assert!(w[0] - w[1] < 15.0, "jump in {:?}", pms);
        }
    }

    #[test]
    fn certified_designs_do_not_encircle(b0 in -0.6..0.1f64, b1 in 0.6..1.3f64, phi in 2.0..12.0f64) {
        let law = DampingLaw::Power(PowerLaw::new(b0, b1));
        let (lo, hi) = (10.03, 108.33);
        let sea = SeaModel::default();
        let Ok(d) = AmplifierDesign::for_margin(&law, 0.11, 1.01, lo, hi, phi) else {
            return Ok(());
        };
        let ks = stiffness_grid(lo, hi, 20);
        for c in [d.ideal(), Controller::Cascade(d.cascade().unwrap())] {
            let report = stability_sweep(&d, &c, &law, &ks, &sea, 90.0).unwrap();
            if !report.certified {
                continue;
            }
            for &k in &ks {
                let lp = OpenLoop::at_stiffness(&d, &c, &law, k, &sea).unwrap();
                prop_assert!(no_encirclement_proxy(&lp));
                prop_assert!(margins(&lp).verdict != Verdict::Unstable);
            }
        }
    }
}

#[test]
fn phasor_fit_handles_non_integer_cycles() {
    let w = 7.3;
    let t: Vec<f64> = (0..2345).map(|i| i as f64 * 1e-3).collect();
    let x: Vec<f64> = t.iter().map(|&s| 0.4 * (w * s).cos() - 0.1 * (w * s).sin() + 3.0).collect();
    let (ph, dc) = fit_phasor(&t, &x, w).unwrap();
    let mid = 0.5 * (t[0] + t[t.len() - 1]);
    // 0.4 cos + (-0.1) sin = Im{(-0.1 + 0.4j) e^{jwt}}
    let want = Complex64::new(-0.1, 0.4) * Complex64::from_polar(1.0, w * mid);
    assert!((ph - want).norm() < 1e-12);
    assert!((dc - 3.0).abs() < 1e-12);
}
