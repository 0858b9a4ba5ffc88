use proptest::prelude::*;

use pseudogen::collocation::{assemble_et, assemble_g2, assemble_rt, taylor_factor, CollocationGrid};
use pseudogen::io::fmt_sci;
use pseudogen::layout::CellLayout;
use pseudogen::metastability::{huisinga_bounds, sign_partition, spectral_gap};
use pseudogen::potential::{AxisFactor, DynamicsParams, PotentialSpec, TrigTerm};
use pseudogen::sim::SamplerConfig;
use pseudogen::spectrum::solve_spectrum;
use pseudogen::ulam::{build_partition, estimate_spatial_ulam};

/// A smooth 1D potential with up to three random cosine modes. Operators built
/// from it below need 33 nodes; 17 alias the drift into spurious growing modes.
fn potential_1d() -> impl Strategy<Value = PotentialSpec> {
    prop::collection::vec((-1.0f64..1.0, 1i32..4, 0.0f64..6.3), 1..4).prop_map(|modes| {
        let terms = modes
            .into_iter()
            .map(|(c, k, phase)| TrigTerm::on_axis(1, 0, c, AxisFactor::new(k, phase, 1)))
            .collect();
        PotentialSpec::new(1, 0.0, terms).unwrap()
    })
}

fn row_sums(m: &faer::Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constants_are_in_the_kernel(v in potential_1d(), beta in 0.3f64..3.0) {
        let params = DynamicsParams::new(beta, 1.0).unwrap();
        let g2 = assemble_g2(&CollocationGrid::new(1, 17).unwrap(), &v, &params).unwrap();
        let scale = g2.matrix.norm_max() * 17.0;
        for s in row_sums(&g2.matrix) {
            prop_assert!(s.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn exponential_reconstruction_preserves_constants(v in potential_1d(), t in 0.01f64..1.0) {
        let params = DynamicsParams::new(1.0, 1.0).unwrap();
        let g2 = assemble_g2(&CollocationGrid::new(1, 33).unwrap(), &v, &params).unwrap();
        let et = assemble_et(&g2, t).unwrap();
        for s in row_sums(&et.matrix) {
            prop_assert!((s - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn taylor_spectrum_is_affine_in_the_generator(v in potential_1d(), t in 0.01f64..2.0, gamma in 0.2f64..3.0) {
        let params = DynamicsParams::new(1.0, gamma).unwrap();
        let g2 = assemble_g2(&CollocationGrid::new(1, 17).unwrap(), &v, &params).unwrap();
        let c = taylor_factor(t, gamma);
        let base = solve_spectrum(&g2, 17).unwrap();
        let rt = solve_spectrum(&assemble_rt(&g2, t, &params).unwrap(), 17).unwrap();
        let mut mapped: Vec<f64> = base.eigenvalues.iter().map(|z| 1.0 + c * z.re).collect();
        let mut got: Vec<f64> = rt.eigenvalues.iter().map(|z| z.re).collect();
        mapped.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        let scale = 1.0 + c.abs() * base.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in mapped.iter().zip(&got) {
            prop_assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn sign_partition_covers_every_node_once(v in potential_1d()) {
        let params = DynamicsParams::new(1.0, 1.0).unwrap();
        // 17 nodes alias the drift of a frequency-3 potential into spurious positive modes
        let g2 = assemble_g2(&CollocationGrid::new(1, 33).unwrap(), &v, &params).unwrap();
        let spectrum = solve_spectrum(&g2, 3).unwrap();
        prop_assert!(spectrum.eigenvalues[0].re.abs() < 1e-8);
        let part = sign_partition(&spectrum, Some(2)).unwrap();
        let tier = &part.tiers[0];
        let mut all: Vec<usize> = tier.positive.iter().chain(&tier.negative).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..33).collect::<Vec<_>>());
        prop_assert!((tier.masses.0 + tier.masses.1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_are_ordered(v in potential_1d(), t in 0.05f64..1.0) {
        let params = DynamicsParams::new(1.0, 1.0).unwrap();
        let g2 = assemble_g2(&CollocationGrid::new(1, 33).unwrap(), &v, &params).unwrap();
        let spectrum = solve_spectrum(&assemble_et(&g2, t).unwrap(), 4).unwrap();
        prop_assert!((spectrum.eigenvalues[0].re - 1.0).abs() < 1e-8);
        let sets = sign_partition(&spectrum, Some(2)).unwrap().decomposition(2).unwrap();
        let b = huisinga_bounds(&spectrum, &sets, None).unwrap();
        prop_assert!(b.lower <= b.upper + 1e-12);
        prop_assert!(b.upper <= 2.0 + 1e-9);
        for r in &b.rho {
            prop_assert!((0.0..=1.0 + 1e-12).contains(r));
        }
    }

    #[test]
    fn gap_index_is_within_the_window(mut eigs in prop::collection::vec(-1.0f64..1.0, 3..12)) {
        eigs.sort_by(|a, b| b.total_cmp(a));
        eigs.insert(0, 1.0);
        let j = spectral_gap(&eigs).unwrap();
        prop_assert!(j >= 2 && j < eigs.len().min(8));
        let best = eigs[j - 1] - eigs[j];
        for i in 1..eigs.len().min(8) - 1 {
            prop_assert!(eigs[i] - eigs[i + 1] <= best + 1e-9);
        }
    }

    #[test]
    fn layout_indices_round_trip(dim in 1usize..4, n in 1usize..9, seed in any::<u64>()) {
        let layout = CellLayout::boxes(dim, n);
        let flat = (seed % layout.len() as u64) as usize;
        let multi = layout.multi_index(flat);
        prop_assert_eq!(layout.flat_index(&multi), flat);
        prop_assert_eq!(layout.cell_of(&layout.center(flat)), flat);
    }

    #[test]
    fn scientific_format_round_trips(x in prop::num::f64::NORMAL) {
        let y: f64 = fmt_sci(x).parse().unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x.abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ulam_rows_sum_to_one_exactly(n in 2usize..12, m in 8usize..64, seed in any::<u64>()) {
        let params = DynamicsParams::new(1.0, 1.0).unwrap();
        let partition = build_partition(&PotentialSpec::double_well(), &params, n).unwrap();
        let u = estimate_spatial_ulam(&partition, &params, 0.02, m, &SamplerConfig::langevin(1e-3, seed, 0)).unwrap();
        for s in row_sums(u.matrix()) {
            prop_assert_eq!(s, 1.0);
        }
    }
}
