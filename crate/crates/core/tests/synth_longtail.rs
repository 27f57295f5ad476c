use objcrop::synthgen::{generate_in_memory, SynthConfig};

#[test]
fn class_frequencies_follow_inverse_rank() {
    let cfg = SynthConfig {
        n_images: 10_000,
        n_classes: 32,
        longtail_exponent: 1.0,
        seed: 11,
        ..Default::default()
    };
    let (_, records, _) = generate_in_memory(&cfg).unwrap();
    let mut counts = vec![0usize; 32];
    for r in &records {
        for o in &r.objects {
            counts[o.class] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let harmonic: f64 = (1..=32).map(|r| 1.0 / r as f64).sum();
    let mut ranked = counts.clone();
    ranked.sort_unstable_by(|a, b| b.cmp(a));
    for (i, &n) in ranked.iter().take(10).enumerate() {
        let expected = 1.0 / ((i + 1) as f64 * harmonic);
        let got = n as f64 / total as f64;
        let rel = (got - expected).abs() / expected;
        assert!(rel <= 0.10, "rank {}: {got:.4} vs {expected:.4} ({rel:.3})", i + 1);
    }
}
