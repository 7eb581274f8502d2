use lrp::rng::{PhiloxStream, DOMAIN_AUX};
use lrp::sampler::{
    sample_graph, sample_graph_coupled, sample_graph_per_pair, sample_w, sample_z, GammaSequence,
};
use lrp::{LatticeBox, ModelParams, Norm};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

fn p(beta: f64) -> ModelParams {
    ModelParams::canonical(1, 1.5, beta).unwrap()
}

fn line(l: u32) -> LatticeBox {
    LatticeBox::new(1, l).unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Asymptotic two-sample Kolmogorov-Smirnov p-value.
fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut dmax) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        dmax = dmax.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * dmax;
    let mut q = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        q += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    q.clamp(0.0, 1.0)
}

fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    let (va, vb) = (var(a) / a.len() as f64, var(b) / b.len() as f64);
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[test]
fn class_count_matches_binomial_mean() {
    let lat = line(1000);
    let prob = 1.0 - (-(10f64).powf(-1.5)).exp();
    assert!((prob - 0.031128).abs() < 1e-6);
    let n = 1991.0;
    let counts: Vec<f64> = (0..200)
        .map(|seed| sample_graph(&p(1.0), &lat, seed).unwrap().class_count(&[10]) as f64)
        .collect();
    let se = (n * prob * (1.0 - prob) / 200.0).sqrt();
    let m = mean(&counts);
    assert!((m - n * prob).abs() < 4.0 * se, "mean {m} vs {}", n * prob);
}

#[test]
fn total_edge_count_matches_exact_sum() {
    let l = 1000u32;
    let lat = line(l);
    let (mut mu, mut v) = (0.0, 0.0);
    for k in 2..=2 * l as u64 {
        let pk = 1.0 - (-(k as f64).powf(-1.5)).exp();
        let nk = (2 * l as u64 + 1 - k) as f64;
        mu += nk * pk;
        v += nk * pk * (1.0 - pk);
    }
    let totals: Vec<f64> = (0..200)
        .map(|seed| sample_graph(&p(1.0), &lat, seed).unwrap().long_edges.len() as f64)
        .collect();
    let m = mean(&totals);
    assert!((m - mu).abs() < 4.0 * (v / 200.0).sqrt(), "mean {m} vs {mu}");
}

#[test]
fn grouped_and_per_pair_generators_agree_in_distribution() {
    let lat = line(50);
    let grouped: Vec<f64> = (0..2000)
        .map(|seed| sample_graph(&p(1.0), &lat, seed).unwrap().long_edges.len() as f64)
        .collect();
    let naive: Vec<f64> = (0..2000)
        .map(|i| sample_graph_per_pair(&p(1.0), &lat, 1_000_000 + i).unwrap().long_edges.len() as f64)
        .collect();
    let ks = ks_two_sample(&grouped, &naive);
    let welch = welch_p(&grouped, &naive);
    assert!(ks > 0.001, "KS p = {ks}");
    assert!(welch > 0.001, "Welch p = {welch}");
}

#[test]
fn pairs_within_a_class_are_exchangeable() {
    let lat = line(10);
    let k = 3i64;
    let cells = (21 - k) as usize;
    let mut hits = vec![0f64; cells];
    for seed in 0..500 {
        let g = sample_graph(&p(1.0), &lat, seed).unwrap();
        for (a, b) in g.edge_coords() {
            if b[0] - a[0] == k {
                hits[(a[0] + 10) as usize] += 1.0;
            }
        }
    }
    let total: f64 = hits.iter().sum();
    let e = total / cells as f64;
    let chi2: f64 = hits.iter().map(|h| (h - e).powi(2) / e).sum();
    let pval = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    assert!(pval > 0.001, "chi2 {chi2}, p {pval}");
}

#[test]
fn pairs_within_a_two_dimensional_class_are_exchangeable() {
    let lat = LatticeBox::new(2, 3).unwrap();
    let params = ModelParams::canonical(2, 3.0, 2.0).unwrap();
    let v = [2i64, -1];
    let cells = 5 * 6;
    let mut hits = vec![0f64; cells];
    for seed in 0..500 {
        let g = sample_graph(&params, &lat, seed).unwrap();
        for (a, b) in g.edge_coords() {
            if b[0] - a[0] == v[0] && b[1] - a[1] == v[1] {
                hits[((a[0] + 3) * 6 + (a[1] + 2)) as usize] += 1.0;
            } else if a[0] - b[0] == v[0] && a[1] - b[1] == v[1] {
                hits[((b[0] + 3) * 6 + (b[1] + 2)) as usize] += 1.0;
            }
        }
    }
    let total: f64 = hits.iter().sum();
    assert!(total > 0.0);
    let e = total / cells as f64;
    let chi2: f64 = hits.iter().map(|h| (h - e).powi(2) / e).sum();
    let pval = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    assert!(pval > 0.001, "chi2 {chi2}, p {pval}");
}

#[test]
fn edge_count_scales_linearly_with_volume() {
    let small: Vec<f64> = (0..100)
        .map(|s| sample_graph(&p(1.0), &line(1000), s).unwrap().long_edges.len() as f64)
        .collect();
    let large: Vec<f64> = (0..100)
        .map(|s| sample_graph(&p(1.0), &line(2000), 500 + s).unwrap().long_edges.len() as f64)
        .collect();
    let ratio = mean(&large) / mean(&small);
    assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn coupled_levels_are_nested_and_equal_levels_coincide() {
    let lat = line(500);
    for seed in 0..50 {
        let g = sample_graph_coupled(&[p(1.0), p(5.0)], &lat, seed).unwrap();
        let hi: std::collections::HashSet<_> = g[1].long_edges.iter().collect();
        assert!(g[0].long_edges.iter().all(|e| hi.contains(e)), "seed {seed}");
        assert!(g[1].long_edges.len() > g[0].long_edges.len());
        let same = sample_graph_coupled(&[p(2.0), p(2.0)], &lat, seed).unwrap();
        assert_eq!(same[0].long_edges, same[1].long_edges);
    }
}

#[test]
fn coupled_level_has_the_single_level_law() {
    let lat = line(200);
    let coupled: Vec<f64> = (0..400)
        .map(|s| sample_graph_coupled(&[p(1.0), p(5.0)], &lat, s).unwrap()[0].long_edges.len() as f64)
        .collect();
    let single: Vec<f64> = (0..400)
        .map(|s| sample_graph(&p(1.0), &lat, 10_000 + s).unwrap().long_edges.len() as f64)
        .collect();
    assert!(ks_two_sample(&coupled, &single) > 0.001);
    assert!(welch_p(&coupled, &single) > 0.001);
}

#[test]
fn sampling_is_independent_of_worker_count() {
    let lat = LatticeBox::new(2, 60).unwrap();
    let params = ModelParams::canonical(2, 3.0, 3.0).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sample_graph(&params, &lat, 42).unwrap())
    };
    assert_eq!(run(1), run(4));
}

fn z_cdf_oracle_1d(a: f64) -> f64 {
    let c0 = std::f64::consts::PI;
    simpson(|z| (-c0 * z * z).exp(), -8.0, a, 20_000)
}

#[test]
fn z_cdf_matches_quadrature_in_one_dimension() {
    let params = p(1.0);
    let mut rng = PhiloxStream::for_domain(7, DOMAIN_AUX, 1);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_z(&params, 1.0, &mut rng).unwrap()[0]).collect();
    for a in [-0.5, -0.2, 0.0, 0.3, 0.6] {
        let f = z_cdf_oracle_1d(a);
        let emp = draws.iter().filter(|&&z| z <= a).count() as f64 / n as f64;
        let sd = (f * (1.0 - f) / n as f64).sqrt();
        assert!((emp - f).abs() < 4.0 * sd, "a={a}: {emp} vs {f}");
    }
    let m = mean(&draws);
    assert!(m.abs() < 4.0 * (var(&draws) / n as f64).sqrt());
}

#[test]
fn z_radial_law_matches_quadrature_in_two_dimensions() {
    let params = ModelParams::new(2, 3.0, 1.0, Norm::L2, lrp::Kernel::Canonical).unwrap();
    let c0 = std::f64::consts::PI.powi(3) / 4.0;
    let mut rng = PhiloxStream::for_domain(8, DOMAIN_AUX, 2);
    let n = 100_000;
    let radii: Vec<f64> = (0..n)
        .map(|_| {
            let z = sample_z(&params, 1.0, &mut rng).unwrap();
            z.iter().map(|c| c * c).sum::<f64>().sqrt()
        })
        .collect();
    for a in [0.2, 0.4, 0.6, 0.8, 1.0] {
        let f = simpson(|r| 2.0 * std::f64::consts::PI * r * (-c0 * r.powi(4)).exp(), 0.0, a, 20_000);
        let emp = radii.iter().filter(|&&r| r <= a).count() as f64 / n as f64;
        let sd = (f * (1.0 - f) / n as f64).sqrt();
        assert!((emp - f).abs() < 4.0 * sd, "a={a}: {emp} vs {f}");
    }
}

#[test]
fn z_density_normalisation_identity() {
    let one_dim = simpson(|w| (-w.powi(2)).exp(), -10.0, 10.0, 20_000);
    assert!((one_dim * one_dim - std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn w_second_moment_is_stable_across_tolerances() {
    let params = p(1.0);
    let seq = GammaSequence::model(&params);
    let n = 100_000u64;
    let moment = |tol: f64| {
        (0..n)
            .map(|i| {
                let mut rng = PhiloxStream::for_domain(11, DOMAIN_AUX, i);
                let w = sample_w(&params, 1.0, &seq, tol, &mut rng).unwrap();
                w.value.iter().map(|c| c * c).sum::<f64>()
            })
            .sum::<f64>()
            / n as f64
    };
    let coarse = moment(1e-3);
    let fine = moment(1e-6);
    assert!(coarse.is_finite() && fine.is_finite());
    assert!((coarse - fine).abs() / fine < 0.02, "{coarse} vs {fine}");
}

#[test]
fn w_small_ball_probabilities_follow_a_power_law_trend() {
    let params = p(1.0);
    let seq = GammaSequence::model(&params);
    let mut rng = PhiloxStream::for_domain(12, DOMAIN_AUX, 4);
    let n = 100_000;
    let norms: Vec<f64> = (0..n)
        .map(|_| sample_w(&params, 1.0, &seq, 1e-9, &mut rng).unwrap().value[0].abs())
        .collect();
    let radii = [0.01, 0.05, 0.25];
    let probs: Vec<f64> = radii
        .iter()
        .map(|&r| norms.iter().filter(|&&w| w <= r).count() as f64 / n as f64)
        .collect();
    assert!(probs[0] > 0.0);
    assert!(probs[0] < probs[1] && probs[1] < probs[2], "{probs:?}");
    let slope = ((probs[2] / probs[0]).ln()) / (radii[2] / radii[0]).ln();
    assert!(slope > 0.0);
    assert!(norms.iter().all(|&w| w > 0.0));
}

#[test]
fn w_with_zero_sequence_is_z0() {
    let params = p(1.0);
    let zero = GammaSequence::Constant(0.0);
    let mut a = PhiloxStream::for_domain(13, DOMAIN_AUX, 5);
    let mut b = PhiloxStream::for_domain(13, DOMAIN_AUX, 5);
    for _ in 0..1000 {
        let w = sample_w(&params, 1.0, &zero, 1e-9, &mut a).unwrap();
        let z = sample_z(&params, 1.0, &mut b).unwrap();
        assert_eq!(w.value, z);
    }
}
