use squirrels_core::io::{extract_sidebands, extract_sidebands_with, pseudo_voigt, ExtractOptions, RawSpectrum};
use squirrels_core::ladder::bessel_j;

const HW: f64 = 1.55;

fn comb(background: impl Fn(f64) -> f64) -> (RawSpectrum, Vec<(i32, f64)>) {
    let axis: Vec<f64> = (0..=1250).map(|i| -25.0 + 0.04 * i as f64).collect();
    let truth: Vec<(i32, f64)> = (-16..=16).map(|n| (n, bessel_j(n, 4.4).powi(2))).collect();
    let counts = axis
        .iter()
        .map(|&e| {
            truth
                .iter()
                .map(|&(n, a)| 1e4 * a * pseudo_voigt(e - n as f64 * HW, 0.3, 0.4))
                .sum::<f64>()
                + background(e)
        })
        .collect();
    (
        RawSpectrum {
            energy_axis: axis,
            counts,
            photon_energy: HW,
        },
        truth,
    )
}

fn recovered(fit: &squirrels_core::io::SidebandFit, n: i32) -> f64 {
    let k = n - fit.n_min;
    if k < 0 || k as usize >= fit.populations.len() {
        0.0
    } else {
        fit.populations[k as usize]
    }
}

#[test]
fn clean_comb_is_recovered_exactly() {
    let (s, truth) = comb(|_| 0.0);
    let fit = extract_sidebands_with(
        &s,
        &ExtractOptions {
            fit_background: false,
            ..Default::default()
        },
    )
    .unwrap();
    let total: f64 = truth.iter().map(|t| t.1).sum();
    for &(n, a) in &truth {
        assert!((recovered(&fit, n) - a / total).abs() < 1e-6, "N={n}: {} vs {}", recovered(&fit, n), a / total);
    }
    assert!((fit.width - 0.3).abs() < 1e-6 && (fit.eta - 0.4).abs() < 1e-6, "{fit:?}");
    assert!(fit.warning.is_none());

    // the background term stays switched off by the fit when none is present
    let fit = extract_sidebands(&s).unwrap();
    for &(n, a) in &truth {
        assert!((recovered(&fit, n) - a / total).abs() < 1e-6, "N={n}");
    }
}

#[test]
fn plasmon_background_is_removed() {
    let (clean, _) = comb(|_| 0.0);
    let peak = clean.counts.iter().copied().fold(0.0, f64::max);
    let bg = |e: f64| {
        let (c, s) = (-6.0, if e < -6.0 { 3.0 } else { 1.5 });
        0.1 * peak * (-(e - c) * (e - c) / (2.0 * s * s)).exp()
    };
    let (s, truth) = comb(bg);
    let fit = extract_sidebands(&s).unwrap();
    let total: f64 = truth.iter().map(|t| t.1).sum();
    let biggest = truth.iter().map(|t| t.1 / total).fold(0.0, f64::max);
    for &(n, a) in &truth {
        let want = a / total;
        let got = recovered(&fit, n);
        assert!((got - want).abs() <= 0.01 * want.max(0.01 * biggest), "N={n}: {got} vs {want}");
    }
    let b = fit.background.expect("background fitted");
    assert!((b.center + 6.0).abs() < 1e-3, "{b:?}");
}
