use tcsc::harness::gen::{gen_points, gen_workers, Distribution, GenSpec};

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    (
        mu,
        (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt(),
    )
}

#[test]
fn uniform_moments() {
    let pts = gen_points(&GenSpec::new(Distribution::Uniform, 20_000, 11)).unwrap();
    let (mu, sd) = mean_and_sd(&pts.iter().map(|p| p.x).collect::<Vec<_>>());
    assert!((mu - 50.0).abs() < 1.0, "{mu}");
    assert!((sd - 100.0 / 12f64.sqrt()).abs() < 1.0, "{sd}");
}

#[test]
fn gaussian_centres_with_sixth_of_side() {
    let pts = gen_points(&GenSpec::new(Distribution::Gaussian, 20_000, 12)).unwrap();
    let (mu, sd) = mean_and_sd(&pts.iter().map(|p| p.y).collect::<Vec<_>>());
    assert!((mu - 50.0).abs() < 0.5, "{mu}");
    // truncation at three sigma trims the spread slightly
    assert!((sd - 100.0 / 6.0).abs() < 0.8, "{sd}");
}

#[test]
fn zipfian_concentrates_in_few_cells() {
    let pts = gen_points(&GenSpec::new(Distribution::Zipfian, 20_000, 13)).unwrap();
    let mut counts = [0usize; 100];
    for p in &pts {
        let cell = ((p.y / 10.0) as usize).min(9) * 10 + ((p.x / 10.0) as usize).min(9);
        counts[cell] += 1;
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    // Zipf(100, 1): the top cell holds 1 / H_100 of the mass, about 19%
    let top = counts[0] as f64 / pts.len() as f64;
    assert!((top - 0.193).abs() < 0.02, "{top}");
    assert!(counts[0] as f64 > 1.5 * counts[1] as f64);
    let top10: usize = counts[..10].iter().sum();
    assert!(top10 as f64 / pts.len() as f64 > 0.5);
}

#[test]
fn run_lengths_cover_one_to_five() {
    let pool = gen_workers(&GenSpec::new(Distribution::Uniform, 5000, 14), 100, (1, 5)).unwrap();
    let mut hist = [0usize; 6];
    let mut per: std::collections::HashMap<u32, usize> = Default::default();
    for w in pool.iter() {
        *per.entry(w.id).or_default() += 1;
    }
    for &len in per.values() {
        hist[len] += 1;
    }
    for (len, &count) in hist.iter().enumerate().skip(1) {
        let share = count as f64 / 5000.0;
        assert!((share - 0.2).abs() < 0.03, "length {len}: {share}");
    }
}
