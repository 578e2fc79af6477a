use proptest::prelude::*;

use super::*;
use crate::tracer::AngleGrid;

fn blank(step: f64) -> AoASpectrum {
    let grid = AngleGrid::hemisphere(step);
    AoASpectrum {
        values: vec![0.0; grid.len()],
        grid,
    }
}

fn pk(el: f64, az: f64, power: f64) -> Peak {
    Peak {
        el_deg: el,
        az_deg: az,
        power,
    }
}

/// Gaussian bump in angle around `(el0, az0)` degrees.
fn add_bump(s: &mut AoASpectrum, el0: f64, az0: f64, power: f64, width_deg: f64) {
    let c = pk(el0, az0, 1.0);
    for i in 0..s.n_el() {
        for j in 0..s.n_az() {
            let d = angular_distance_deg(&c, &pk(s.grid.el_deg[i], s.grid.az_deg[j], 1.0));
            let n = s.n_az();
            s.values[i * n + j] += power * (-(d / width_deg).powi(2)).exp();
        }
    }
}

#[test]
fn delta_spectrum_gives_its_cell() {
    let mut s = blank(2.0);
    let c = 10 * s.n_az() + 37;
    s.values[c] = 3e-6;
    let p = detect_peaks(&s, &PeakParams::default());
    assert_eq!(p, vec![pk(s.grid.el_deg[10], s.grid.az_deg[37], 3e-6)]);
}

#[test]
fn two_bumps_in_power_order() {
    let mut s = blank(1.0);
    add_bump(&mut s, 20.0, -40.0, 0.5, 3.0);
    add_bump(&mut s, 50.0, 60.0, 1.0, 3.0);
    let p = detect_peaks(&s, &PeakParams { k: 2, ..Default::default() });
    assert_eq!(p.len(), 2);
    assert_eq!((p[0].el_deg, p[0].az_deg), (50.0, 60.0));
    assert_eq!((p[1].el_deg, p[1].az_deg), (20.0, -40.0));
    assert!((p[0].power - 1.0).abs() < 1e-12 && (p[1].power - 0.5).abs() < 1e-9);
}

#[test]
fn constant_spectrum_breaks_ties_by_index() {
    let mut s = blank(10.0);
    s.values.iter_mut().for_each(|v| *v = 1.0);
    let p = detect_peaks(&s, &PeakParams { k: 4, ..Default::default() });
    let want: Vec<Peak> = (0..4).map(|j| pk(0.0, s.grid.az_deg[j], 1.0)).collect();
    assert_eq!(p, want);
}

#[test]
fn floor_drops_weak_peaks() {
    let mut s = blank(2.0);
    let n = s.n_az();
    s.values[5 * n + 10] = 1.0;
    s.values[30 * n + 100] = 2e-4;
    assert_eq!(detect_peaks(&s, &PeakParams::default()).len(), 1);
    let loose = PeakParams { floor_db: 40.0, ..Default::default() };
    assert_eq!(detect_peaks(&s, &loose).len(), 2);
}

#[test]
fn azimuth_wraps_in_the_window() {
    let mut s = blank(2.0);
    let n = s.n_az();
    let last = n - 1;
    s.values[20 * n] = 0.5;
    s.values[20 * n + last] = 1.0;
    let p = detect_peaks(&s, &PeakParams::default());
    assert_eq!(p.len(), 1);
    assert_eq!(p[0].az_deg, s.grid.az_deg[last]);
}

#[test]
fn identical_lists_match_fully() {
    let peaks = vec![pk(10.0, 0.0, 1.0), pk(40.0, 90.0, 0.3), pk(70.0, -120.0, 0.1)];
    for mode in [Matching::Greedy, Matching::Optimal] {
        let r = score(&match_peaks(&peaks, &peaks, 20.0, mode), &peaks, &peaks);
        assert_eq!(r.n_matched, 3);
        assert_eq!(r.f1, 1.0);
        assert!(r.aae_deg.unwrap() < 1e-6);
        assert_eq!(r.ape_db, Some(0.0));
    }
}

#[test]
fn distant_lists_do_not_match() {
    let pred = vec![pk(0.0, 0.0, 1.0)];
    let gt = vec![pk(0.0, 90.0, 1.0)];
    let r = score(&match_peaks(&pred, &gt, 20.0, Matching::Greedy), &pred, &gt);
    assert_eq!((r.n_matched, r.f1, r.aae_deg, r.ape_db), (0, 0.0, None, None));
    assert_eq!((r.unmatched_pred, r.unmatched_gt), (vec![0], vec![0]));
}

#[test]
fn nearest_gt_wins() {
    let pred = vec![pk(0.0, 0.0, 1.0)];
    let gt = vec![pk(0.0, 15.0, 1.0), pk(0.0, -10.0, 1.0)];
    for mode in [Matching::Greedy, Matching::Optimal] {
        assert_eq!(match_peaks(&pred, &gt, 20.0, mode), vec![(0, 1)]);
    }
}

#[test]
fn f1_examples() {
    let gt = vec![pk(10.0, 0.0, 1.0), pk(10.0, 90.0, 1.0)];
    let pred = vec![pk(11.0, 1.0, 1.0), pk(60.0, -90.0, 1.0)];
    let r = score(&match_peaks(&pred, &gt, 20.0, Matching::Greedy), &pred, &gt);
    assert_eq!(r.f1, 0.5);
    let r = score(&match_peaks(&gt, &gt, 20.0, Matching::Greedy), &gt, &gt);
    assert_eq!(r.f1, 1.0);
}

#[test]
fn ape_of_a_factor_two() {
    let gt = vec![pk(30.0, 30.0, 1.0)];
    let pred = vec![pk(30.0, 30.0, 0.5)];
    let r = score(&match_peaks(&pred, &gt, 20.0, Matching::Greedy), &pred, &gt);
    assert!((r.ape_db.unwrap() - 3.0103).abs() < 1e-4);
}

#[test]
fn report_files() {
    let dir = tempfile::tempdir().unwrap();
    let pred = vec![pk(30.0, 30.0, 0.5), pk(0.0, 0.0, 1.0)];
    let gt = vec![pk(30.0, 31.0, 1.0)];
    let r = score(&match_peaks(&pred, &gt, 20.0, Matching::Greedy), &pred, &gt);
    write_report(&dir.path().join("m"), &r, &pred, &gt).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(v["n_matched"], 1);
    assert_eq!(v["n_pred"], 2);
    let csv = std::fs::read_to_string(dir.path().join("m_pairs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

/// Exhaustive search over injective partial assignments.
fn best_by_brute_force(pred: &[Peak], gt: &[Peak], radius: f64) -> (usize, f64) {
    fn go(i: usize, pred: &[Peak], gt: &[Peak], used: &mut Vec<bool>, r: f64, best: &mut (usize, f64), acc: (usize, f64)) {
        if i == pred.len() {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        go(i + 1, pred, gt, used, r, best, acc);
        for j in 0..gt.len() {
            let d = angular_distance_deg(&pred[i], &gt[j]);
            if !used[j] && d <= r {
                used[j] = true;
                go(i + 1, pred, gt, used, r, best, (acc.0 + 1, acc.1 + d));
                used[j] = false;
            }
        }
    }
    let mut best = (0, f64::INFINITY);
    go(0, pred, gt, &mut vec![false; gt.len()], radius, &mut best, (0, 0.0));
    best
}

fn arb_peak() -> impl Strategy<Value = Peak> {
    (0.0..85.0f64, -180.0..180.0f64, 1e-6..1.0f64).prop_map(|(e, a, p)| pk(e, a, p))
}

fn rotate(p: &Peak, axis: [f64; 3], angle: f64) -> Peak {
    let k = Vec3::from_array(axis) * (1.0 / Vec3::from_array(axis).norm());
    let v = p.direction();
    let (c, s) = (angle.cos(), angle.sin());
    let r = v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c));
    pk(r.z.clamp(-1.0, 1.0).asin().to_degrees(), r.y.atan2(r.x).to_degrees(), p.power)
}

proptest! {
    #[test]
    fn optimal_matches_brute_force(
        pred in prop::collection::vec(arb_peak(), 0..5),
        gt in prop::collection::vec(arb_peak(), 0..5),
    ) {
        let pairs = match_peaks(&pred, &gt, 40.0, Matching::Optimal);
        let total: f64 = pairs.iter().map(|&(i, j)| angular_distance_deg(&pred[i], &gt[j])).sum();
        let (n, d) = best_by_brute_force(&pred, &gt, 40.0);
        prop_assert_eq!(pairs.len(), n);
        if n > 0 {
            prop_assert!((total - d).abs() < 1e-9 * (1.0 + d));
        }
    }

    #[test]
    fn greedy_pairs_are_one_to_one(
        pred in prop::collection::vec(arb_peak(), 0..8),
        gt in prop::collection::vec(arb_peak(), 0..8),
    ) {
        let pairs = match_peaks(&pred, &gt, 30.0, Matching::Greedy);
        let mut a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let mut b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        a.sort_unstable();
        a.dedup();
        b.sort_unstable();
        b.dedup();
        prop_assert_eq!(a.len(), pairs.len());
        prop_assert_eq!(b.len(), pairs.len());
        let r = score(&pairs, &pred, &gt);
        prop_assert!((0.0..=1.0).contains(&r.f1));
        prop_assert!(r.aae_deg.unwrap_or(0.0) >= 0.0 && r.ape_db.unwrap_or(0.0) >= 0.0);
    }

    #[test]
    fn f1_ignores_list_order(
        pred in prop::collection::vec(arb_peak(), 1..8),
        gt in prop::collection::vec(arb_peak(), 1..8),
        rot in 0usize..8,
    ) {
        let f1 = |p: &[Peak], g: &[Peak]| score(&match_peaks(p, g, 30.0, Matching::Optimal), p, g).f1;
        let mut p2 = pred.clone();
        p2.reverse();
        let mut g2 = gt.clone();
        let n = g2.len();
        g2.rotate_left(rot % n);
        prop_assert!((f1(&pred, &gt) - f1(&p2, &g2)).abs() < 1e-12);
    }

    #[test]
    fn aae_survives_rotation(
        pred in prop::collection::vec(arb_peak(), 1..6),
        gt in prop::collection::vec(arb_peak(), 1..6),
        axis in prop::array::uniform3(-1.0..1.0f64),
        angle in -3.0..3.0f64,
    ) {
        prop_assume!(Vec3::from_array(axis).norm() > 0.1);
        let a = score(&match_peaks(&pred, &gt, 30.0, Matching::Optimal), &pred, &gt);
        let rp: Vec<Peak> = pred.iter().map(|p| rotate(p, axis, angle)).collect();
        let rg: Vec<Peak> = gt.iter().map(|p| rotate(p, axis, angle)).collect();
        let b = score(&match_peaks(&rp, &rg, 30.0, Matching::Optimal), &rp, &rg);
        // Pairs sitting on the radius may flip; skip those draws.
        let edge = a.pairs.iter().chain(&b.pairs).any(|p| (p.distance_deg - 30.0).abs() < 1e-6);
        prop_assume!(!edge);
        prop_assert_eq!(a.n_matched, b.n_matched);
        if let (Some(x), Some(y)) = (a.aae_deg, b.aae_deg) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn peaks_ignore_scaling(
        bumps in prop::collection::vec((5.0..80.0f64, -170.0..170.0f64, 0.1..1.0f64), 1..4),
        scale in 1e-9..1e3f64,
    ) {
        let mut s = blank(5.0);
        for &(e, a, p) in &bumps {
            add_bump(&mut s, e, a, p, 8.0);
        }
        let mut t = s.clone();
        t.values.iter_mut().for_each(|v| *v *= scale);
        let pp = PeakParams::default();
        let (a, b) = (detect_peaks(&s, &pp), detect_peaks(&t, &pp));
        let cells = |v: &[Peak]| v.iter().map(|p| (p.el_deg, p.az_deg)).collect::<Vec<_>>();
        prop_assert_eq!(cells(&a), cells(&b));
    }
}
