use charvar::explorer::{sample_chart, ChartPoint};
use charvar::knot::{builtin, longitude_gap, validate_rep, KnotName};

#[test]
fn sampled_points_rebuild_from_their_parameters() {
    for knot in KnotName::ALL {
        for p in sample_chart(knot, 25, 5) {
            let q = ChartPoint::from_params(knot, p.params.clone());
            assert_eq!(q, p);
            let rep = q.build().unwrap();
            assert!(validate_rep(&builtin(knot).0, &rep.rep) < 1e-9);
            assert!(longitude_gap(knot, &rep.rep).1 < 1e-8);
        }
    }
}

#[test]
fn sampling_is_deterministic() {
    for knot in KnotName::ALL {
        assert_eq!(sample_chart(knot, 10, 3), sample_chart(knot, 10, 3));
        assert_ne!(sample_chart(knot, 10, 3), sample_chart(knot, 10, 4));
    }
}
