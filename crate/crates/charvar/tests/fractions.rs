use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use charvar::tangle::{build_rational_tangle, cf_expand, cf_value, gcd, Tangle};

/// Tangle fraction computed independently: `[k] = k`, `[1/k] = 1/k`,
/// `F(A + B) = F(A) + F(B)`, `1/F(A * B) = 1/F(A) + 1/F(B)`.
fn fraction(t: &Tangle) -> Ratio<i64> {
    match t {
        Tangle::Twist(k) => Ratio::from_integer(*k),
        Tangle::VTwist(k) => Ratio::new(1, *k),
        Tangle::Rational { p, q } => Ratio::new(*p, *q),
        Tangle::Horiz(a, b) => fraction(a) + fraction(b),
        Tangle::Vert(a, b) => (fraction(a).recip() + fraction(b).recip()).recip(),
    }
}

fn crossings(t: &Tangle) -> i64 {
    match t {
        Tangle::Twist(k) | Tangle::VTwist(k) => k.abs(),
        Tangle::Rational { p, q } => crossings(&build_rational_tangle(*p, *q).unwrap()),
        Tangle::Horiz(a, b) | Tangle::Vert(a, b) => crossings(a) + crossings(b),
    }
}

fn random_fractions(n: usize) -> Vec<(i64, i64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    while out.len() < n {
        let p = rng.gen_range(-60i64..=60);
        let q = rng.gen_range(1i64..=40);
        if p != 0 && gcd(p, q) == 1 {
            out.push((p, q));
        }
    }
    out
}

#[test]
fn rational_tangles_have_their_fraction() {
    for (p, q) in random_fractions(100) {
        let t = build_rational_tangle(p, q).unwrap();
        assert_eq!(fraction(&t), Ratio::new(p, q), "{p}/{q}");
    }
}

#[test]
fn continued_fractions_round_trip() {
    for (p, q) in random_fractions(100) {
        let (num, den) = cf_value(&cf_expand(p, q).unwrap());
        assert_eq!(Ratio::new(num, den), Ratio::new(p, q));
    }
}

#[test]
fn compiled_crossings_match_the_tree() {
    for (p, q) in random_fractions(40) {
        let t = build_rational_tangle(p, q).unwrap();
        assert_eq!(t.compile().unwrap().crossing_count() as i64, crossings(&t), "{p}/{q}");
    }
}
